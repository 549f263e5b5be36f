//! Structured SVM training with explicit positive and negative joint labels.
//!
//! Minimizes `½‖w‖² + C Σ_r ξ_r` where positives want `w·J ≥ 1 − ξ` and
//! negatives want `w·J ≤ −1 + ξ`, by full-batch subgradient descent with step
//! `η₀ / (1 + decay·t)`. Negatives are regenerated between rounds from the
//! current weights and accumulate.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::endpoint_error;
use crate::features::{assemble_joint, FeatureError, FeatureMask};
use crate::inference::{
    infer_attrs_given_pose, infer_joint, infer_pose_given_attrs, infer_separate, score_full, InferenceError, Objective,
    DEFAULT_MAX_ITER,
};
use crate::instance::{Instance, JointLabel};
use crate::model::ModelSpec;
use crate::par::{self, Execution};
use crate::weights::WeightVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no bindable training instance")]
    EmptyTrainingSet,
    #[error("instance {0} has no ground truth")]
    NoGroundTruth(String),
    #[error("instance {instance}: no candidate of part {part} lies within the binding threshold")]
    Unbindable { instance: String, part: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Which feature groups take part in training. Blocks left out keep zero
/// weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSelection {
    #[default]
    All,
    /// Unary, deformation and consistency blocks only.
    PoseOnly,
    /// Co-occurrence and cross blocks only.
    GarmentOnly,
}

impl BlockSelection {
    pub fn mask(self) -> FeatureMask {
        match self {
            BlockSelection::All => FeatureMask::all(),
            BlockSelection::PoseOnly => FeatureMask {
                cooccurrence: false,
                cross: false,
                ..FeatureMask::all()
            },
            BlockSelection::GarmentOnly => FeatureMask {
                pose: false,
                ..FeatureMask::all()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub c: f64,
    pub epochs: usize,
    pub eta0: f64,
    pub decay: f64,
    pub negatives_per_instance: usize,
    pub hard_negative_rounds: usize,
    pub seed: u64,
    /// Endpoint error, relative to the true part length, beyond which a
    /// part cannot be bound to any candidate.
    pub bind_threshold: f64,
    pub max_iter: usize,
    pub blocks: BlockSelection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 0.01,
            epochs: 100,
            eta0: 1.0,
            decay: 1.0,
            negatives_per_instance: 8,
            hard_negative_rounds: 2,
            seed: 0,
            bind_threshold: 0.5,
            max_iter: DEFAULT_MAX_ITER,
            blocks: BlockSelection::All,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("C must be positive");
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad("eta0 must be positive");
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad("decay must be non-negative");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub instance: String,
    pub label: JointLabel,
    pub polarity: Polarity,
}

/// A materialized constraint: the masked joint feature vector and its side.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub features: Vec<f64>,
    pub polarity: Polarity,
}

impl Constraint {
    pub fn hinge(&self, w: &[f64]) -> f64 {
        let s: f64 = dot(w, &self.features);
        match self.polarity {
            Polarity::Positive => (1.0 - s).max(0.0),
            Polarity::Negative => (1.0 + s).max(0.0),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn objective(w: &[f64], constraints: &[Constraint], c: f64) -> f64 {
    0.5 * dot(w, w) + c * constraints.iter().map(|k| k.hinge(w)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    /// Objective after every epoch.
    pub objective: Vec<f64>,
    /// Lowest objective seen up to each epoch.
    pub best: Vec<f64>,
}

/// Subgradient descent from `w0` on a fixed constraint set. Each epoch visits
/// every constraint once in a seeded order, stepping on that constraint's
/// share of the objective (its hinge plus 1/N of the regularizer); the step
/// size decays per epoch and `t0` offsets the schedule. Returns the iterate
/// with the lowest objective (which may be `w0` itself).
pub fn minimize(
    w0: &[f64],
    constraints: &[Constraint],
    cfg: &TrainConfig,
    t0: usize,
    exec: Execution,
) -> (Vec<f64>, DescentTrace) {
    let mut w = w0.to_vec();
    let mut best_w = w.clone();
    let mut best = parallel_objective(&w, constraints, cfg.c, exec);
    let mut trace = DescentTrace {
        objective: Vec::with_capacity(cfg.epochs),
        best: Vec::with_capacity(cfg.epochs),
    };
    let n = constraints.len().max(1) as f64;
    let mut order: Vec<usize> = (0..constraints.len()).collect();
    for epoch in 0..cfg.epochs {
        let t = (t0 + epoch) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX - t);
        order.shuffle(&mut rng);
        let eta = cfg.eta0 / (1.0 + cfg.decay * t as f64);
        let shrink = 1.0 - eta / n;
        for &r in &order {
            let k = &constraints[r];
            let s = dot(&w, &k.features);
            let step = match k.polarity {
                Polarity::Positive if s < 1.0 => eta * cfg.c,
                Polarity::Negative if s > -1.0 => -eta * cfg.c,
                _ => 0.0,
            };
            for (wi, x) in w.iter_mut().zip(&k.features) {
                *wi = shrink * *wi + step * x;
            }
        }
        let obj = parallel_objective(&w, constraints, cfg.c, exec);
        if obj < best {
            best = obj;
            best_w.clone_from(&w);
        }
        trace.objective.push(obj);
        trace.best.push(best);
    }
    (best_w, trace)
}

fn parallel_objective(w: &[f64], constraints: &[Constraint], c: f64, exec: Execution) -> f64 {
    let hinges = par::map(exec, constraints, |k| k.hinge(w));
    // summed in constraint order so the value does not depend on `exec`
    0.5 * dot(w, w) + c * hinges.iter().sum::<f64>()
}

/// Positive labels: the candidate nearest the ground truth for every part
/// (by endpoint error relative to the true length) combined with each
/// attribute group. Unlabeled attributes are set to 0; their blocks are
/// masked during training.
pub fn bind_ground_truth(inst: &Instance, spec: &ModelSpec, threshold: f64) -> Result<Vec<JointLabel>, TrainError> {
    let gt = inst
        .ground_truth
        .as_ref()
        .ok_or_else(|| TrainError::NoGroundTruth(inst.id.clone()))?;
    let mut pose = Vec::with_capacity(spec.part_count());
    for (part, truth) in gt.pose.iter().enumerate() {
        let list = inst.ensembles.get(part).map(Vec::as_slice).unwrap_or(&[]);
        let mut best = (f64::INFINITY, 0);
        for (idx, c) in list.iter().enumerate() {
            let e = endpoint_error(&c.geom, truth) / truth.s;
            if e < best.0 {
                best = (e, idx);
            }
        }
        if best.0 > threshold {
            return Err(TrainError::Unbindable {
                instance: inst.id.clone(),
                part,
            });
        }
        pose.push(best.1);
    }
    Ok(gt
        .attribute_groups
        .iter()
        .map(|g| JointLabel::new(pose.clone(), g.iter().map(|c| c.unwrap_or(0)).collect()))
        .collect())
}

/// Coordinates of a label that the masked feature vector depends on.
fn projection(spec: &ModelSpec, mask: &FeatureMask, y: &JointLabel) -> JointLabel {
    let pose = y
        .pose
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let used =
                mask.pose || (mask.cross && (0..spec.attribute_count()).any(|k| spec.attributes.depends_on(k, i)));
            if used {
                p
            } else {
                0
            }
        })
        .collect();
    let attrs = if mask.cooccurrence || mask.cross {
        y.attrs.clone()
    } else {
        vec![0; y.attrs.len()]
    };
    JointLabel::new(pose, attrs)
}

fn attribute_mask(inst: &Instance, spec: &ModelSpec, group: Option<usize>) -> Vec<bool> {
    let gt = inst.ground_truth.as_ref();
    (0..spec.attribute_count())
        .map(|k| match (gt, group) {
            (Some(gt), Some(g)) => gt.attribute_groups[g].get(k).copied().flatten().is_some(),
            (Some(gt), None) => gt.attribute_present(k),
            (None, _) => true,
        })
        .collect()
}

/// Single-coordinate changes of `y` over the coordinates selected by `mask`.
fn neighbours(inst: &Instance, spec: &ModelSpec, mask: &FeatureMask, y: &JointLabel) -> Vec<JointLabel> {
    let mut out = Vec::new();
    let base = projection(spec, mask, y);
    for (i, list) in inst.ensembles.iter().enumerate() {
        if base.pose[i] != y.pose[i] || !(mask.pose || mask.cross) {
            continue;
        }
        for p in 0..list.len() {
            if p != y.pose[i] {
                let mut n = y.clone();
                n.pose[i] = p;
                out.push(n);
            }
        }
    }
    if mask.cooccurrence || mask.cross {
        for (k, &t) in spec.attributes.cardinalities.iter().enumerate() {
            for c in 0..t {
                if c != y.attrs[k] {
                    let mut n = y.clone();
                    n.attrs[k] = c;
                    out.push(n);
                }
            }
        }
    }
    out
}

fn random_label(rng: &mut ChaCha8Rng, inst: &Instance, spec: &ModelSpec) -> JointLabel {
    JointLabel::new(
        inst.ensembles.iter().map(|e| rng.random_range(0..e.len())).collect(),
        spec.attributes
            .cardinalities
            .iter()
            .map(|&t| rng.random_range(0..t))
            .collect(),
    )
}

/// `R` negatives for one instance: `R/2` hard ones (the joint inference
/// output, then the best-scoring single-coordinate neighbours of the
/// positive) and the rest uniformly random, all differing from every
/// positive on the coordinates `cfg.blocks` uses.
pub fn generate_negatives(
    inst: &Instance,
    spec: &ModelSpec,
    positives: &[JointLabel],
    obj: &Objective,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<JointLabel>, TrainError> {
    let mask = cfg.blocks.mask();
    let forbidden: BTreeSet<JointLabel> = positives.iter().map(|y| projection(spec, &mask, y)).collect();
    let mut taken: BTreeSet<JointLabel> = BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.negatives_per_instance);
    let mut push = |y: JointLabel, out: &mut Vec<JointLabel>| {
        let key = projection(spec, &mask, &y);
        if !forbidden.contains(&key) && taken.insert(key) {
            out.push(y);
            true
        } else {
            false
        }
    };
    if positives.is_empty() || cfg.negatives_per_instance == 0 {
        return Ok(out);
    }
    let n_hard = cfg.negatives_per_instance / 2;
    if n_hard > 0 {
        let r = infer_joint(obj, inst, cfg.max_iter)?;
        push(r.label, &mut out);
        let truth = &positives[0];
        if mask.pose && (mask.cooccurrence || mask.cross) {
            // the attribute-free starting point of the ascent
            push(infer_separate(obj, inst)?.label, &mut out);
        }
        if mask.pose || mask.cross {
            let given = (mask.cooccurrence || mask.cross).then_some(truth.attrs.as_slice());
            let p = infer_pose_given_attrs(obj, inst, given)?.pose;
            push(JointLabel::new(p, truth.attrs.clone()), &mut out);
        }
        if mask.cooccurrence || mask.cross {
            let c = infer_attrs_given_pose(obj, inst, &truth.pose)?.attrs;
            push(JointLabel::new(truth.pose.clone(), c), &mut out);
        }
        // best pose changes and best attribute changes, interleaved
        let mut groups: [Vec<(f64, JointLabel)>; 2] = [Vec::new(), Vec::new()];
        for y in neighbours(inst, spec, &mask, truth) {
            let s = score_full(obj, inst, &y)?;
            let g = usize::from(y.pose == truth.pose);
            groups[g].push((s, y));
        }
        for g in &mut groups {
            // stable: equal scores keep enumeration order
            g.sort_by(|a, b| b.0.total_cmp(&a.0));
        }
        let mut iters = [groups[0].iter(), groups[1].iter()];
        let mut turn = 0;
        while out.len() < n_hard {
            let next = iters[turn % 2].next().or_else(|| iters[(turn + 1) % 2].next());
            match next {
                Some((_, y)) => {
                    push(y.clone(), &mut out);
                }
                None => break,
            }
            turn += 1;
        }
    }
    let mut attempts = 0;
    while out.len() < cfg.negatives_per_instance && attempts < 50 * cfg.negatives_per_instance {
        attempts += 1;
        let y = random_label(rng, inst, spec);
        push(y, &mut out);
    }
    if out.len() < cfg.negatives_per_instance {
        // small label spaces: fall back to perturbations of the positive
        for y in neighbours(inst, spec, &mask, &positives[0]) {
            if out.len() >= cfg.negatives_per_instance {
                break;
            }
            push(y, &mut out);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub positives: usize,
    pub negatives: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rounds: Vec<RoundSummary>,
    pub trace: DescentTrace,
    pub unbindable: Vec<String>,
}

fn instance_rng(seed: u64, round: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((round as u64) << 32) | index as u64);
    rng
}

pub fn train(
    instances: &[Instance],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    alpha: f64,
    beta: f64,
) -> Result<(WeightVector, TrainReport), TrainError> {
    train_with(instances, spec, cfg, alpha, beta, Execution::Parallel)
}

/// Trains `w`; results are bitwise identical under either execution mode.
pub fn train_with(
    instances: &[Instance],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    alpha: f64,
    beta: f64,
    exec: Execution,
) -> Result<(WeightVector, TrainReport), TrainError> {
    cfg.validate()?;
    let mask = cfg.blocks.mask();
    let mut bound: Vec<(&Instance, Vec<JointLabel>)> = Vec::new();
    let mut unbindable = Vec::new();
    for inst in instances {
        match bind_ground_truth(inst, spec, cfg.bind_threshold) {
            Ok(pos) => bound.push((inst, pos)),
            Err(TrainError::Unbindable { instance, part }) => {
                log::warn!("skipping instance {instance}: part {part} cannot be bound");
                unbindable.push(instance);
            }
            Err(e) => return Err(e),
        }
    }
    if bound.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }

    let mut constraints: Vec<Constraint> = Vec::new();
    for (inst, positives) in &bound {
        for (g, y) in positives.iter().enumerate() {
            let m = mask.clone().with_attributes(attribute_mask(inst, spec, Some(g)));
            constraints.push(Constraint {
                features: assemble_joint(inst, spec, y, &m)?,
                polarity: Polarity::Positive,
            });
        }
    }
    let n_pos = constraints.len();
    let mut negatives: Vec<BTreeSet<JointLabel>> = vec![BTreeSet::new(); bound.len()];

    let mut w = vec![0.0; spec.dim()];
    let mut trace = DescentTrace {
        objective: Vec::new(),
        best: Vec::new(),
    };
    let mut rounds = Vec::new();
    for round in 0..=cfg.hard_negative_rounds {
        let obj = Objective::new(spec, &w, alpha, beta)?;
        let fresh = par::map_range(exec, bound.len(), |i| {
            let (inst, positives) = &bound[i];
            let mut rng = instance_rng(cfg.seed, round, i);
            let negs = generate_negatives(inst, spec, positives, &obj, cfg, &mut rng)?;
            let m = mask.clone().with_attributes(attribute_mask(inst, spec, None));
            negs.into_iter()
                .map(|y| Ok((assemble_joint(inst, spec, &y, &m)?, y)))
                .collect::<Result<Vec<_>, TrainError>>()
        });
        for (i, r) in fresh.into_iter().enumerate() {
            for (features, y) in r? {
                if negatives[i].insert(y) {
                    constraints.push(Constraint {
                        features,
                        polarity: Polarity::Negative,
                    });
                }
            }
        }
        let t0 = round * cfg.epochs;
        let (next, tr) = minimize(&w, &constraints, cfg, t0, exec);
        w = next;
        trace.objective.extend(tr.objective);
        // best-so-far restarts whenever new constraints arrive
        trace.best.extend(tr.best);
        let o = objective(&w, &constraints, cfg.c);
        log::info!(
            "round {round}: {n_pos} positives, {} negatives, objective {o:.6}",
            constraints.len() - n_pos
        );
        rounds.push(RoundSummary {
            positives: n_pos,
            negatives: constraints.len() - n_pos,
            objective: o,
        });
    }
    Ok((
        WeightVector(w),
        TrainReport {
            rounds,
            trace,
            unbindable,
        },
    ))
}
