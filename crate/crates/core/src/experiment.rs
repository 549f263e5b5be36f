//! Experiment drivers shared by the command-line tool and the acceptance
//! tests: train-then-evaluate, the separated baseline, α/β grid search by
//! cross-validation, the ablation table, and the brute-force oracle suite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{evaluate, EvalError, EvalReport};
use crate::inference::{
    brute_force_attrs, brute_force_joint, brute_force_pose, infer_attrs_given_pose, infer_joint,
    infer_pose_given_attrs, infer_separate, score_full, InferenceError, InferenceResult, Objective,
    DEFAULT_BRUTE_FORCE_CAP,
};
use crate::instance::{Instance, JointLabel};
use crate::model::ModelSpec;
use crate::par::{self, Execution};
use crate::ssvm::{train_with, BlockSelection, TrainConfig, TrainError};
use crate::synth::{generate_with, SynthConfig};
use crate::weights::WeightVector;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid experiment setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Coordinate ascent over pose and attributes.
    Joint,
    /// Pose without attribute evidence, then attributes given the pose.
    Separate,
}

pub fn predict(
    obj: &Objective,
    instances: &[Instance],
    mode: InferenceMode,
    max_iter: usize,
    exec: Execution,
) -> Result<Vec<InferenceResult>, InferenceError> {
    par::map(exec, instances, |inst| match mode {
        InferenceMode::Joint => infer_joint(obj, inst, max_iter),
        InferenceMode::Separate => infer_separate(obj, inst),
    })
    .into_iter()
    .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn predict_and_evaluate(
    spec: &ModelSpec,
    w: &[f64],
    alpha: f64,
    beta: f64,
    instances: &[Instance],
    mode: InferenceMode,
    max_iter: usize,
    threshold: f64,
    exec: Execution,
) -> Result<EvalReport, ExperimentError> {
    let obj = Objective::new(spec, w, alpha, beta)?;
    let results = predict(&obj, instances, mode, max_iter, exec)?;
    let labels: Vec<JointLabel> = results.into_iter().map(|r| r.label).collect();
    Ok(evaluate(instances, &labels, spec, threshold, exec)?)
}

/// Pose weights learned without garment blocks plus attribute weights
/// learned without pose blocks. The blocks are disjoint, so the sum holds
/// each model's weights in place.
pub fn train_separated(
    train: &[Instance],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    alpha: f64,
    beta: f64,
    exec: Execution,
) -> Result<WeightVector, ExperimentError> {
    let pose_cfg = TrainConfig {
        blocks: BlockSelection::PoseOnly,
        ..cfg.clone()
    };
    let garment_cfg = TrainConfig {
        blocks: BlockSelection::GarmentOnly,
        ..cfg.clone()
    };
    let (wp, _) = train_with(train, spec, &pose_cfg, alpha, beta, exec)?;
    let (wg, _) = train_with(train, spec, &garment_cfg, alpha, beta, exec)?;
    Ok(WeightVector(wp.iter().zip(wg.iter()).map(|(a, b)| a + b).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    /// Mean over folds.
    pub pcp_total: f64,
    pub gap_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub folds: usize,
    pub cells: Vec<GridCell>,
    pub best_alpha: f64,
    pub best_beta: f64,
    pub training_runs: usize,
}

/// Cross-validated α×β search. Instance `i` is held out in fold `i % folds`.
/// The best cell has the highest mean total PCP, then the highest mean total
/// GAP, then the earliest position in the grid.
#[allow(clippy::too_many_arguments)]
pub fn gridsearch(
    train: &[Instance],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    alphas: &[f64],
    betas: &[f64],
    folds: usize,
    max_iter: usize,
    threshold: f64,
    exec: Execution,
) -> Result<GridResult, ExperimentError> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(ExperimentError::Setup("the α and β grids must be nonempty".into()));
    }
    if folds < 2 || train.len() < folds {
        return Err(ExperimentError::Setup(format!(
            "{folds} folds over {} instances",
            train.len()
        )));
    }
    let mut cells = Vec::with_capacity(alphas.len() * betas.len());
    let mut runs = 0;
    for &alpha in alphas {
        for &beta in betas {
            let (mut pcp, mut gap) = (0.0, 0.0);
            for f in 0..folds {
                let mut fit = Vec::new();
                let mut held = Vec::new();
                for (i, inst) in train.iter().enumerate() {
                    if i % folds == f {
                        held.push(inst.clone());
                    } else {
                        fit.push(inst.clone());
                    }
                }
                let (w, _) = train_with(&fit, spec, cfg, alpha, beta, exec)?;
                runs += 1;
                let r = predict_and_evaluate(
                    spec,
                    &w,
                    alpha,
                    beta,
                    &held,
                    InferenceMode::Joint,
                    max_iter,
                    threshold,
                    exec,
                )?;
                pcp += r.pcp_total;
                gap += r.gap_total.unwrap_or(0.0);
            }
            log::info!(
                "grid α={alpha} β={beta}: PCP {:.4} GAP {:.4}",
                pcp / folds as f64,
                gap / folds as f64
            );
            cells.push(GridCell {
                alpha,
                beta,
                pcp_total: pcp / folds as f64,
                gap_total: gap / folds as f64,
            });
        }
    }
    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        let b = &cells[best];
        if c.pcp_total > b.pcp_total || (c.pcp_total == b.pcp_total && c.gap_total > b.gap_total) {
            best = i;
        }
    }
    Ok(GridResult {
        folds,
        best_alpha: cells[best].alpha,
        best_beta: cells[best].beta,
        cells,
        training_runs: runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub item: String,
    pub joint_error: f64,
    pub variant_error: f64,
    /// `1 − joint_error / variant_error`; `None` when the variant makes no
    /// errors.
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub alpha: f64,
    pub beta: f64,
    pub joint: EvalReport,
    /// Separately trained pose and garment models, inferred without
    /// attribute-to-pose feedback.
    pub separated: EvalReport,
    /// The joint model trained and evaluated with α = 0.
    pub without_edges: EvalReport,
    pub separated_reduction: Vec<ReductionRow>,
    pub edge_reduction: Vec<ReductionRow>,
}

fn reduction_rows(joint: &EvalReport, variant: &EvalReport) -> Vec<ReductionRow> {
    let row = |item: String, a: f64, b: f64| ReductionRow {
        item,
        joint_error: 1.0 - a,
        variant_error: 1.0 - b,
        reduction: (b < 1.0).then(|| 1.0 - (1.0 - a) / (1.0 - b)),
    };
    let mut rows = Vec::new();
    let pooled: Vec<usize> = joint.pcp_pooled.iter().flat_map(|p| p.parts.clone()).collect();
    for (i, name) in joint.part_names.iter().enumerate() {
        if !pooled.contains(&i) {
            rows.push(row(name.clone(), joint.pcp_per_part[i], variant.pcp_per_part[i]));
        }
    }
    for (a, b) in joint.pcp_pooled.iter().zip(&variant.pcp_pooled) {
        rows.push(row(a.name.clone(), a.rate, b.rate));
    }
    rows.push(row("PCP total".into(), joint.pcp_total, variant.pcp_total));
    for (k, name) in joint.attribute_names.iter().enumerate() {
        if let (Some(a), Some(b)) = (joint.gap_per_attribute[k], variant.gap_per_attribute[k]) {
            rows.push(row(name.clone(), a, b));
        }
    }
    if let (Some(a), Some(b)) = (joint.gap_total, variant.gap_total) {
        rows.push(row("GAP total".into(), a, b));
    }
    rows
}

/// Trains the joint and separated models on `train` and compares them, and
/// the joint model without edge energy, on `test`.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    train: &[Instance],
    test: &[Instance],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    alpha: f64,
    beta: f64,
    max_iter: usize,
    threshold: f64,
    exec: Execution,
) -> Result<AblationReport, ExperimentError> {
    let (w, _) = train_with(train, spec, cfg, alpha, beta, exec)?;
    let joint = predict_and_evaluate(
        spec,
        &w,
        alpha,
        beta,
        test,
        InferenceMode::Joint,
        max_iter,
        threshold,
        exec,
    )?;
    let ws = train_separated(train, spec, cfg, alpha, beta, exec)?;
    let separated = predict_and_evaluate(
        spec,
        &ws,
        alpha,
        beta,
        test,
        InferenceMode::Separate,
        max_iter,
        threshold,
        exec,
    )?;
    let (w0, _) = train_with(train, spec, cfg, 0.0, beta, exec)?;
    let without_edges = predict_and_evaluate(
        spec,
        &w0,
        0.0,
        beta,
        test,
        InferenceMode::Joint,
        max_iter,
        threshold,
        exec,
    )?;
    Ok(AblationReport {
        alpha,
        beta,
        separated_reduction: reduction_rows(&joint, &separated),
        edge_reduction: reduction_rows(&joint, &without_edges),
        joint,
        separated,
        without_edges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub tests: usize,
    pub passed: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn tests(&self) -> usize {
        self.checks.iter().map(|c| c.tests).sum()
    }

    pub fn passed(&self) -> usize {
        self.checks.iter().map(|c| c.passed).sum()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Small random instance for exhaustive checks: ensemble sizes in 2..=4 and
/// attribute cardinalities in {2, 3}, with uniform random weights.
pub fn oracle_case(seed: u64) -> (ModelSpec, Instance, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cards = [0usize; 5];
    cards.iter_mut().for_each(|t| *t = rng.random_range(2..=3));
    let spec = ModelSpec::default_model_with_cardinalities(5, 4, [3; 5], cards);
    let cfg = SynthConfig {
        n_train: 1,
        n_test: 0,
        candidates_per_part: 4,
        seed,
        sigma: 0.5,
        ..SynthConfig::default()
    };
    let mut inst = generate_with(&cfg, &spec, Execution::Sequential).train.remove(0);
    for list in &mut inst.ensembles {
        let k = rng.random_range(2..=4);
        list.truncate(k);
    }
    let w = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    (spec, inst, w)
}

/// Compares the dynamic programs and coordinate ascent with exhaustive
/// enumeration on `n` random cases (relative tolerance `tol`).
pub fn oracle_check(n: usize, seed: u64, alpha: f64, beta: f64, tol: f64, exec: Execution) -> OracleReport {
    use rand::{Rng, SeedableRng};
    let outcomes = par::map_range(exec, n, |i| {
        let case_seed = seed.wrapping_add(i as u64);
        let (spec, inst, w) = oracle_case(case_seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(case_seed);
        rng.set_stream(1);
        let obj = Objective::new(&spec, &w, alpha, beta).expect("finite weights");
        let attrs: Vec<usize> = spec
            .attributes
            .cardinalities
            .iter()
            .map(|&t| rng.random_range(0..t))
            .collect();
        let pose: Vec<usize> = inst.ensembles.iter().map(|e| rng.random_range(0..e.len())).collect();
        let id = format!("case {i} (seed {case_seed})");

        let pose_ok = (|| -> Result<Option<String>, InferenceError> {
            let dp = infer_pose_given_attrs(&obj, &inst, Some(&attrs))?;
            let (_, best) = brute_force_pose(&obj, &inst, Some(&attrs))?;
            let got = score_full(&obj, &inst, &JointLabel::new(dp.pose, attrs.clone()))?;
            Ok((!close(got, best, tol)).then(|| format!("{id}: pose DP {got} vs oracle {best}")))
        })();
        let attr_ok = (|| -> Result<Option<String>, InferenceError> {
            let dp = infer_attrs_given_pose(&obj, &inst, &pose)?;
            let (_, best) = brute_force_attrs(&obj, &inst, &pose)?;
            let got = brute_force_attrs_score(&obj, &inst, &pose, &dp.attrs)?;
            Ok((!close(got, best, tol)).then(|| format!("{id}: attribute DP {got} vs oracle {best}")))
        })();
        let joint_ok = (|| -> Result<Option<String>, InferenceError> {
            let r = infer_joint(&obj, &inst, crate::inference::DEFAULT_MAX_ITER)?;
            let (_, best) = brute_force_joint(&obj, &inst, DEFAULT_BRUTE_FORCE_CAP, Execution::Sequential)?;
            let direct = score_full(&obj, &inst, &r.label)?;
            let mut problems = Vec::new();
            if !r.trace.windows(2).all(|p| p[1] >= p[0]) {
                problems.push("trace decreases");
            }
            if r.iterations > crate::inference::DEFAULT_MAX_ITER {
                problems.push("too many iterations");
            }
            if !close(direct, r.score, tol) {
                problems.push("score differs from rescoring");
            }
            if r.score > best + tol * best.abs().max(1.0) {
                problems.push("score exceeds the global maximum");
            }
            Ok((!problems.is_empty()).then(|| format!("{id}: {}", problems.join(", "))))
        })();
        [pose_ok, attr_ok, joint_ok].map(|r| match r {
            Ok(None) => None,
            Ok(Some(msg)) => Some(msg),
            Err(e) => Some(format!("{id}: {e}")),
        })
    });
    let names = [
        "pose given attributes",
        "attributes given pose",
        "joint inference contracts",
    ];
    let checks = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let failures: Vec<String> = outcomes.iter().filter_map(|o| o[j].clone()).collect();
            OracleCheck {
                name: name.to_string(),
                tests: n,
                passed: n - failures.len(),
                failures,
            }
        })
        .collect();
    OracleReport { checks }
}

/// Co-occurrence plus cross score of `attrs` at a fixed pose.
fn brute_force_attrs_score(
    obj: &Objective,
    inst: &Instance,
    pose: &[usize],
    attrs: &[usize],
) -> Result<f64, InferenceError> {
    let mask = crate::features::FeatureMask {
        pose: false,
        ..crate::features::FeatureMask::all()
    };
    let y = JointLabel::new(pose.to_vec(), attrs.to_vec());
    Ok(crate::features::score_joint_masked(
        obj.weights,
        inst,
        obj.spec,
        &y,
        &mask,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_passes() {
        let r = oracle_check(20, 5, 0.1, 1.0, 1e-9, Execution::Parallel);
        assert_eq!(r.passed(), r.tests(), "{:#?}", r.checks);
        assert_eq!(r.tests(), 60);
    }

    #[test]
    fn grid_counts_training_runs() {
        let spec = ModelSpec::default_model(4, 4, [3, 4, 3, 3, 3]);
        let data = generate_with(
            &SynthConfig {
                n_train: 9,
                n_test: 0,
                candidates_per_part: 3,
                ..SynthConfig::default()
            },
            &spec,
            Execution::Parallel,
        );
        let cfg = TrainConfig {
            epochs: 5,
            hard_negative_rounds: 0,
            ..TrainConfig::default()
        };
        let g = gridsearch(
            &data.train,
            &spec,
            &cfg,
            &[0.0, 0.1],
            &[0.0, 1.0],
            3,
            10,
            0.5,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(g.training_runs, 12);
        assert_eq!(g.cells.len(), 4);
    }

    #[test]
    fn reduction_of_perfect_variant_is_undefined() {
        let spec = ModelSpec::default_model(4, 4, [2; 5]);
        let e = crate::eval::InstanceEval {
            parts: vec![true; 6],
            attributes: vec![Some(true); 5],
        };
        let r = crate::eval::aggregate(&[e], &spec, 0.5).unwrap();
        let rows = reduction_rows(&r, &r);
        assert!(rows.iter().all(|x| x.reduction.is_none()));
        assert_eq!(rows[0].item, "torso");
        assert_eq!(rows.iter().filter(|x| x.item == "U.arms").count(), 1);
    }
}
