//! Synthetic datasets with a planted weight vector.
//!
//! Each instance is a stick figure with one correct candidate per part hidden
//! among distractors. Correct candidates carry unary descriptors aligned with
//! the planted unary weights, garment descriptors close to the prototype of
//! the true attribute value, matching colour histograms across symmetric
//! parts, and (with probability `edge_fidelity`) aligned strong edges.
//!
//! Randomness: a generator seeded with `seed` on stream 0 draws the planted
//! weights and prototypes; instance `i` (train first, then test) uses a
//! generator seeded with `seed ^ i` on stream 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eval::endpoint_error;
use crate::instance::{Candidate, EdgePixel, GroundTruth, Instance, OrientedBox};
use crate::model::{BlockId, ModelSpec};
use crate::par::{self, Execution};
use crate::weights::WeightVector;

const DECOY_ATTEMPTS: usize = 20;
/// Decoys miss the truth by this share of its length (PCP counts 0.5).
const DECOY_MIN_ERROR: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub candidates_per_part: usize,
    /// Multiplies every planted block.
    pub weight_scale: f64,
    /// Descriptor noise level.
    pub sigma: f64,
    /// Share of a correct candidate's garment descriptor that comes from the
    /// true value's prototype.
    pub rho: f64,
    /// Probability that a correct candidate gets aligned strong edges.
    pub edge_fidelity: f64,
    /// Length of distractor garment descriptors relative to correct ones.
    pub distractor_attr_scale: f64,
    /// Probability that a part gets one distractor whose appearance nearly
    /// matches the correct candidate; only garment and edge cues separate them.
    pub decoy_rate: f64,
    /// Probability that a ground-truth attribute is unlabeled.
    pub missing_rate: f64,
    pub pixels_per_candidate: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 300,
            n_test: 700,
            candidates_per_part: 8,
            weight_scale: 1.0,
            sigma: 0.2,
            rho: 0.8,
            edge_fidelity: 0.9,
            distractor_attr_scale: 0.5,
            decoy_rate: 0.3,
            missing_rate: 0.0,
            pixels_per_candidate: 8,
            image_width: 400,
            image_height: 400,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} outside [0, 1]"))
            }
        };
        unit("rho", self.rho)?;
        unit("edge_fidelity", self.edge_fidelity)?;
        unit("missing_rate", self.missing_rate)?;
        unit("decoy_rate", self.decoy_rate)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(format!("sigma = {} must be non-negative", self.sigma));
        }
        if !(self.weight_scale > 0.0 && self.weight_scale.is_finite()) {
            return Err(format!("weight_scale = {} must be positive", self.weight_scale));
        }
        if !(self.distractor_attr_scale >= 0.0 && self.distractor_attr_scale.is_finite()) {
            return Err("distractor_attr_scale must be non-negative".into());
        }
        if self.candidates_per_part == 0 {
            return Err("candidates_per_part must be positive".into());
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err("image size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    pub planted: WeightVector,
}

/// Hidden generative state shared by all instances.
struct World {
    /// Unit direction per part.
    unary_dirs: Vec<Vec<f64>>,
    /// Per attribute, one unit prototype per value.
    prototypes: Vec<Vec<Vec<f64>>>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `t` unit vectors in `R^d`, orthonormal when `t <= d`.
fn prototypes(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(t);
    for _ in 0..t {
        let mut v = gaussian_vec(rng, d);
        if out.len() < d {
            for u in &out {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        normalize(&mut v);
        out.push(v);
    }
    out
}

fn world(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> World {
    let unary_dirs = (0..spec.part_count())
        .map(|_| {
            let mut v = gaussian_vec(rng, spec.unary_dim);
            normalize(&mut v);
            v
        })
        .collect();
    let prototypes = (0..spec.attribute_count())
        .map(|k| prototypes(rng, spec.attributes.cardinalities[k], spec.attributes.feature_dims[k]))
        .collect();
    World { unary_dirs, prototypes }
}

/// The weights under which correct candidates and true values score highest.
fn planted_weights(spec: &ModelSpec, w: &World, scale: f64) -> WeightVector {
    let mut out = WeightVector::zeros(spec);
    for i in 0..spec.part_count() {
        for (dst, src) in out.block_mut(spec, BlockId::Unary(i)).iter_mut().zip(&w.unary_dirs[i]) {
            *dst = 4.0 * scale * src;
        }
    }
    for s in 0..spec.parts.symmetric_pairs.len() {
        out.block_mut(spec, BlockId::Consistency(s)).fill(-2.0 * scale);
    }
    for k in 0..spec.attribute_count() {
        let d = spec.attributes.feature_dims[k];
        let parts = spec.attributes.dependency[k].len();
        let block = out.block_mut(spec, BlockId::Cross(k));
        for (c, proto) in w.prototypes[k].iter().enumerate() {
            for j in 0..parts {
                let start = (c * parts + j) * d;
                for (dst, src) in block[start..start + d].iter_mut().zip(proto) {
                    *dst = scale * src;
                }
            }
        }
    }
    out
}

fn wrap_degrees(t: f64) -> f64 {
    let r = t.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

fn along(b: &OrientedBox, dist: f64) -> (f64, f64) {
    let (dx, dy) = b.direction();
    (b.x + dist * dx, b.y + dist * dy)
}

/// Box starting at `origin` and extending `s` along `theta`.
fn limb(origin: (f64, f64), theta: f64, s: f64) -> OrientedBox {
    let t = theta.to_radians();
    OrientedBox {
        x: origin.0 + 0.5 * s * t.cos(),
        y: origin.1 + 0.5 * s * t.sin(),
        theta: wrap_degrees(theta),
        s,
    }
}

fn is_default_layout(spec: &ModelSpec) -> bool {
    spec.parts.part_names.len() == 6 && spec.parts.tree_edges == vec![(0, 5), (0, 1), (0, 2), (1, 3), (2, 4)]
}

/// Draws a box for a non-root part given its parent's box.
fn place(part: usize, pb: &OrientedBox, default_layout: bool, h: f64, rng: &mut ChaCha8Rng) -> OrientedBox {
    if !default_layout {
        return limb(along(pb, 0.5 * pb.s), rng.random_range(0.0..360.0), 0.15 * h);
    }
    match part {
        5 => {
            let top = along(pb, -0.5 * pb.s);
            limb(top, pb.theta + 180.0 + rng.random_range(-15.0..15.0), 0.12 * h)
        }
        1 | 2 => {
            let side = if part == 1 { -1.0 } else { 1.0 };
            let top = along(pb, -0.45 * pb.s);
            let n = (pb.theta + 90.0).to_radians();
            let shoulder = (top.0 + side * 0.2 * pb.s * n.cos(), top.1 + side * 0.2 * pb.s * n.sin());
            limb(shoulder, pb.theta - side * rng.random_range(10.0..80.0), 0.17 * h)
        }
        _ => {
            let side = if part == 3 { -1.0 } else { 1.0 };
            let elbow = along(pb, 0.5 * pb.s);
            limb(elbow, pb.theta - side * rng.random_range(-30.0..90.0), 0.15 * h)
        }
    }
}

fn place_root(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> OrientedBox {
    let h = cfg.image_height as f64;
    let w = cfg.image_width as f64;
    OrientedBox {
        x: w / 2.0 + rng.random_range(-0.05..0.05) * w,
        y: 0.45 * h + rng.random_range(-0.05..0.05) * h,
        theta: 90.0 + rng.random_range(-10.0..10.0),
        s: 0.25 * h,
    }
}

/// Ground-truth boxes for the default six-part layout; other part graphs
/// hang every child off its parent's far end at a random angle.
fn body(spec: &ModelSpec, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<OrientedBox> {
    let m = spec.part_count();
    let mut boxes: Vec<Option<OrientedBox>> = vec![None; m];
    boxes[spec.parts.root] = Some(place_root(cfg, rng));
    let default_layout = is_default_layout(spec);
    // tree edges are parent-first; process in BFS order from the root
    let mut order = vec![spec.parts.root];
    let mut head = 0;
    while head < order.len() {
        let p = order[head];
        head += 1;
        for &(a, b) in &spec.parts.tree_edges {
            if a == p {
                order.push(b);
            }
        }
    }
    let parents = spec.parts.parents();
    for &part in order.iter().skip(1) {
        let parent = parents[part].expect("non-root part");
        let pb = boxes[parent].expect("parent placed first");
        boxes[part] = Some(place(part, &pb, default_layout, cfg.image_height as f64, rng));
    }
    boxes.into_iter().map(|b| b.expect("tree spans all parts")).collect()
}

/// A plausible but wrong box for `part`: a fresh draw from the placement
/// distribution that misses the truth, or the truth swung about its joint end
/// when no draw does.
fn decoy_box(
    spec: &ModelSpec,
    cfg: &SynthConfig,
    truth: &[OrientedBox],
    part: usize,
    rng: &mut ChaCha8Rng,
) -> OrientedBox {
    let gt = &truth[part];
    let parent = spec.parts.parents()[part];
    let default_layout = is_default_layout(spec);
    for _ in 0..DECOY_ATTEMPTS {
        let b = match parent {
            Some(p) => place(part, &truth[p], default_layout, cfg.image_height as f64, rng),
            None => place_root(cfg, rng),
        };
        if endpoint_error(&b, gt) > DECOY_MIN_ERROR * gt.s {
            return b;
        }
    }
    let turn = rng.random_range(50.0..90.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    limb(along(gt, -0.5 * gt.s), gt.theta + turn, gt.s)
}

fn random_histogram(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut h: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

fn perturbed_histogram(rng: &mut ChaCha8Rng, base: &[f64], sigma: f64) -> Vec<f64> {
    let d = base.len() as f64;
    let mut h: Vec<f64> = base
        .iter()
        .map(|&b| {
            let n: f64 = StandardNormal.sample(rng);
            (b + sigma * n / d).max(0.0)
        })
        .collect();
    let s: f64 = h.iter().sum();
    if s > 0.0 {
        h.iter_mut().for_each(|v| *v /= s);
    } else {
        h = base.to_vec();
    }
    h
}

fn edge_pixels(rng: &mut ChaCha8Rng, theta: f64, aligned: bool, n: usize) -> Vec<EdgePixel> {
    (0..n)
        .map(|_| {
            if aligned {
                EdgePixel {
                    theta_e: wrap_degrees(theta + rng.random_range(-8.0..8.0)),
                    strg_e: rng.random_range(0.7..1.0),
                    d_min: rng.random_range(0.0..1.0),
                }
            } else {
                EdgePixel {
                    theta_e: rng.random_range(0.0..360.0),
                    strg_e: rng.random_range(0.0..0.4),
                    d_min: rng.random_range(0.0..2.0),
                }
            }
        })
        .collect()
}

fn instance(spec: &ModelSpec, cfg: &SynthConfig, w: &World, index: usize, id: String) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    rng.set_stream(1);
    let truth = body(spec, cfg, &mut rng);
    let n = spec.attribute_count();
    let values: Vec<usize> = spec
        .attributes
        .cardinalities
        .iter()
        .map(|&t| rng.random_range(0..t))
        .collect();
    let labeled: Vec<Option<usize>> = values
        .iter()
        .map(|&c| {
            if rng.random_bool(cfg.missing_rate) {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    let pair_hists: Vec<(Vec<f64>, Vec<f64>)> = spec
        .parts
        .symmetric_pairs
        .iter()
        .map(|_| {
            (
                random_histogram(&mut rng, spec.hist_dim),
                random_histogram(&mut rng, spec.hist_dim),
            )
        })
        .collect();

    let k = cfg.candidates_per_part;
    let mut ensembles = Vec::with_capacity(spec.part_count());
    for (part, gt) in truth.iter().enumerate() {
        let correct = rng.random_range(0..k);
        let decoy = (rng.random_bool(cfg.decoy_rate) && k > 1).then(|| (correct + rng.random_range(1..k)) % k);
        let pair = spec.symmetric_pair_of(part);
        let mut list = Vec::with_capacity(k);
        for idx in 0..k {
            let is_correct = idx == correct;
            let geom = if decoy == Some(idx) {
                decoy_box(spec, cfg, &truth, part, &mut rng)
            } else if is_correct {
                OrientedBox {
                    x: gt.x + rng.random_range(-0.05..0.05) * gt.s,
                    y: gt.y + rng.random_range(-0.05..0.05) * gt.s,
                    theta: wrap_degrees(gt.theta + rng.random_range(-5.0..5.0)),
                    s: gt.s * rng.random_range(0.95..1.05),
                }
            } else {
                let r = rng.random_range(0.6..2.0) * gt.s;
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                OrientedBox {
                    x: gt.x + r * phi.cos(),
                    y: gt.y + r * phi.sin(),
                    theta: rng.random_range(0.0..360.0),
                    s: gt.s * rng.random_range(0.8..1.2),
                }
            };

            let u = &w.unary_dirs[part];
            let mut unary = if is_correct {
                u.clone()
            } else {
                // a random share of the planted direction plus an orthogonal
                // component of unit length
                let (a, len) = if decoy == Some(idx) {
                    (rng.random_range(0.85..1.0), 0.3)
                } else {
                    (rng.random_range(-1.0..0.5), 1.0)
                };
                let mut o = gaussian_vec(&mut rng, spec.unary_dim);
                let p = dot(&o, u);
                o.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
                normalize(&mut o);
                o.iter().zip(u).map(|(x, y)| len * x + a * y).collect()
            };
            for v in &mut unary {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += cfg.sigma * z;
            }

            let (hist_rgb, hist_lab) = match pair {
                Some(s) if is_correct || decoy == Some(idx) => (
                    perturbed_histogram(&mut rng, &pair_hists[s].0, cfg.sigma),
                    perturbed_histogram(&mut rng, &pair_hists[s].1, cfg.sigma),
                ),
                _ => (
                    random_histogram(&mut rng, spec.hist_dim),
                    random_histogram(&mut rng, spec.hist_dim),
                ),
            };

            let mut attr_feats = vec![None; n];
            for (kk, slot) in attr_feats.iter_mut().enumerate() {
                if !spec.attributes.depends_on(kk, part) {
                    continue;
                }
                let protos = &w.prototypes[kk];
                let other = rng.random_range(0..protos.len());
                let mut f: Vec<f64> = if is_correct {
                    protos[values[kk]]
                        .iter()
                        .zip(&protos[other])
                        .map(|(a, b)| cfg.rho * a + (1.0 - cfg.rho) * b)
                        .collect()
                } else {
                    // garment regions overlap, so distractors still lean
                    // toward the true value, only more weakly
                    let v = if rng.random_bool(cfg.rho) { values[kk] } else { other };
                    protos[v].iter().map(|a| cfg.distractor_attr_scale * a).collect()
                };
                for v in &mut f {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += cfg.sigma * z;
                }
                *slot = Some(f);
            }

            let aligned = (is_correct || decoy == Some(idx)) && rng.random_bool(cfg.edge_fidelity);
            let edge_pixels = edge_pixels(&mut rng, geom.theta, aligned, cfg.pixels_per_candidate);
            list.push(Candidate {
                geom,
                unary,
                hist_rgb,
                hist_lab,
                attr_feats,
                edge_pixels,
            });
        }
        ensembles.push(list);
    }
    Instance {
        id,
        image_width: cfg.image_width,
        image_height: cfg.image_height,
        ensembles,
        ground_truth: Some(GroundTruth {
            pose: truth,
            attribute_groups: vec![labeled],
        }),
    }
}

/// Generates train and test instances plus the planted weights. Instances
/// are generated in parallel under `exec` with identical results either way.
pub fn generate_with(cfg: &SynthConfig, spec: &ModelSpec, exec: Execution) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let w = world(spec, &mut rng);
    let planted = planted_weights(spec, &w, cfg.weight_scale);
    let total = cfg.n_train + cfg.n_test;
    let all = par::map_range(exec, total, |i| {
        let id = if i < cfg.n_train {
            format!("train-{i:05}")
        } else {
            format!("test-{:05}", i - cfg.n_train)
        };
        instance(spec, cfg, &w, i, id)
    });
    let mut train = all;
    let test = train.split_off(cfg.n_train);
    SynthDataset { train, test, planted }
}

pub fn generate(cfg: &SynthConfig, spec: &ModelSpec) -> SynthDataset {
    generate_with(cfg, spec, Execution::Parallel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::pcp_part;
    use crate::inference::{brute_force_joint, score_full, Objective, DEFAULT_BRUTE_FORCE_CAP};
    use crate::instance::{dataset_to_string, validate_instance, JointLabel, LoadOptions};

    fn small(seed: u64, sigma: f64) -> (ModelSpec, SynthConfig) {
        let spec = ModelSpec::default_model_with_cardinalities(6, 4, [3, 3, 3, 3, 3], [2, 3, 2, 3, 2]);
        let cfg = SynthConfig {
            n_train: 6,
            n_test: 4,
            candidates_per_part: 3,
            sigma,
            rho: 1.0,
            edge_fidelity: 1.0,
            seed,
            ..SynthConfig::default()
        };
        (spec, cfg)
    }

    /// Index of the candidate generated as correct (the one nearest the truth).
    fn true_label(inst: &Instance) -> JointLabel {
        let gt = inst.ground_truth.as_ref().unwrap();
        let pose = inst
            .ensembles
            .iter()
            .zip(&gt.pose)
            .map(|(list, g)| list.iter().position(|c| pcp_part(&c.geom, g, 0.5)).unwrap())
            .collect();
        let attrs = gt.attribute_groups[0].iter().map(|c| c.unwrap()).collect();
        JointLabel::new(pose, attrs)
    }

    #[test]
    fn instances_validate() {
        let spec = ModelSpec::default_model(8, 6, [5, 8, 5, 6, 4]);
        let cfg = SynthConfig {
            n_train: 20,
            n_test: 5,
            missing_rate: 0.3,
            ..SynthConfig::default()
        };
        let d = generate(&cfg, &spec);
        assert_eq!(d.train.len(), 20);
        assert_eq!(d.test.len(), 5);
        for inst in d.train.iter().chain(&d.test) {
            validate_instance(inst, &spec, &LoadOptions::default()).unwrap();
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = ModelSpec::default_model(8, 6, [5, 8, 5, 6, 4]);
        let cfg = SynthConfig {
            n_train: 5,
            n_test: 5,
            seed: 42,
            ..SynthConfig::default()
        };
        let a = generate_with(&cfg, &spec, Execution::Sequential);
        let b = generate_with(&cfg, &spec, Execution::Parallel);
        assert_eq!(dataset_to_string(&a.train, &spec), dataset_to_string(&b.train, &spec));
        assert_eq!(dataset_to_string(&a.test, &spec), dataset_to_string(&b.test, &spec));
        assert_eq!(a.planted, b.planted);
        let c = generate(&SynthConfig { seed: 43, ..cfg }, &spec);
        assert_ne!(dataset_to_string(&a.train, &spec), dataset_to_string(&c.train, &spec));
    }

    #[test]
    fn exactly_one_correct_candidate_per_part() {
        let spec = ModelSpec::default_model(8, 6, [5, 8, 5, 6, 4]);
        let d = generate(
            &SynthConfig {
                n_train: 30,
                n_test: 0,
                ..SynthConfig::default()
            },
            &spec,
        );
        for inst in &d.train {
            let gt = inst.ground_truth.as_ref().unwrap();
            for (list, g) in inst.ensembles.iter().zip(&gt.pose) {
                assert_eq!(list.iter().filter(|c| pcp_part(&c.geom, g, 0.5)).count(), 1);
            }
        }
    }

    #[test]
    fn noiseless_truth_is_the_unique_planted_optimum() {
        for seed in 0..6 {
            let (spec, cfg) = small(seed, 0.0);
            let d = generate(&cfg, &spec);
            let obj = Objective::new(&spec, &d.planted, 0.0, 1.0).unwrap();
            for inst in d.train.iter().chain(&d.test) {
                let truth = true_label(inst);
                let (best, s) = brute_force_joint(&obj, inst, DEFAULT_BRUTE_FORCE_CAP, Execution::Parallel).unwrap();
                assert_eq!(best, truth, "{}", inst.id);
                let st = score_full(&obj, inst, &truth).unwrap();
                assert!((s - st).abs() <= 1e-9 * st.abs().max(1.0));
            }
        }
    }

    #[test]
    fn decoys_do_not_displace_the_noiseless_optimum() {
        for seed in 0..4 {
            let (spec, mut cfg) = small(seed, 0.0);
            cfg.decoy_rate = 1.0;
            let d = generate(&cfg, &spec);
            let obj = Objective::new(&spec, &d.planted, 0.0, 1.0).unwrap();
            for inst in d.train.iter().chain(&d.test) {
                let (best, _) = brute_force_joint(&obj, inst, DEFAULT_BRUTE_FORCE_CAP, Execution::Parallel).unwrap();
                assert_eq!(best, true_label(inst), "{}", inst.id);
            }
        }
    }

    #[test]
    fn decoys_are_plausible_but_wrong() {
        let spec = ModelSpec::default_model(6, 4, [3; 5]);
        let cfg = SynthConfig {
            n_train: 50,
            n_test: 0,
            decoy_rate: 1.0,
            sigma: 0.0,
            ..SynthConfig::default()
        };
        let d = generate(&cfg, &spec);
        for inst in &d.train {
            let gt = &inst.ground_truth.as_ref().unwrap().pose;
            for (part, list) in inst.ensembles.iter().enumerate() {
                let u = d.planted.0[spec.layout.range(BlockId::Unary(part))].to_vec();
                let mut proj: Vec<f64> = list.iter().map(|c| dot(&c.unary, &u)).collect();
                proj.sort_by(|a, b| b.total_cmp(a));
                // the runner-up appearance is the decoy, close behind the truth
                assert!(proj[1] > 0.8 * proj[0] && proj[1] < proj[0]);
                let close = list.iter().filter(|c| pcp_part(&c.geom, &gt[part], 0.5)).count();
                assert_eq!(close, 1);
            }
        }
    }

    #[test]
    fn orthonormal_prototypes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = prototypes(&mut rng, 4, 6);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&p[i], &p[j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_degrades_planted_accuracy() {
        let spec = ModelSpec::default_model(8, 6, [5, 8, 5, 6, 4]);
        let accuracy = |sigma: f64| {
            let mut hits = 0;
            let mut total = 0;
            for seed in 0..20 {
                let cfg = SynthConfig {
                    n_train: 5,
                    n_test: 0,
                    sigma,
                    seed,
                    ..SynthConfig::default()
                };
                let d = generate(&cfg, &spec);
                let obj = Objective::new(&spec, &d.planted, 0.0, 1.0).unwrap();
                for inst in &d.train {
                    let r = crate::inference::infer_joint(&obj, inst, 10).unwrap();
                    let truth = true_label(inst);
                    hits += r.label.pose.iter().zip(&truth.pose).filter(|(a, b)| a == b).count();
                    total += truth.pose.len();
                }
            }
            hits as f64 / total as f64
        };
        assert!(accuracy(0.0) >= accuracy(2.0));
    }
}
