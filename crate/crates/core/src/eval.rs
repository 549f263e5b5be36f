//! PCP for poses and GAP for garment attributes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, JointLabel, OrientedBox};
use crate::model::ModelSpec;
use crate::par::{self, Execution};

pub const DEFAULT_PCP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("instance {0} has no ground truth")]
    NoGroundTruth(String),
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Larger of the two endpoint errors, using whichever endpoint
/// correspondence (direct or swapped) makes it smaller.
pub fn endpoint_error(pred: &OrientedBox, truth: &OrientedBox) -> f64 {
    let [p0, p1] = pred.endpoints();
    let [g0, g1] = truth.endpoints();
    let direct = dist(p0, g0).max(dist(p1, g1));
    let swapped = dist(p0, g1).max(dist(p1, g0));
    direct.min(swapped)
}

/// Both endpoints within `threshold` times the true length.
pub fn pcp_part(pred: &OrientedBox, truth: &OrientedBox, threshold: f64) -> bool {
    endpoint_error(pred, truth) <= threshold * truth.s
}

pub fn pcp(pred: &[OrientedBox], truth: &[OrientedBox], threshold: f64) -> Result<Vec<bool>, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::DimMismatch(format!(
            "{} predicted boxes, {} ground-truth boxes",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| pcp_part(p, t, threshold)).collect())
}

/// Per attribute: `None` if unlabeled in every group, otherwise whether the
/// prediction equals the value of at least one group.
pub fn gap(
    pred: &[usize],
    groups: &[Vec<Option<usize>>],
    cardinalities: &[usize],
) -> Result<Vec<Option<bool>>, EvalError> {
    if pred.len() != cardinalities.len() {
        return Err(EvalError::DimMismatch(format!(
            "{} predicted values for {} attributes",
            pred.len(),
            cardinalities.len()
        )));
    }
    for g in groups {
        if g.len() != pred.len() {
            return Err(EvalError::DimMismatch(format!("attribute group of length {}", g.len())));
        }
        if let Some((k, c)) = g
            .iter()
            .enumerate()
            .find_map(|(k, c)| c.filter(|&c| c >= cardinalities[k]).map(|c| (k, c)))
        {
            return Err(EvalError::IndexOutOfRange(format!(
                "ground-truth value {c} of attribute {k}"
            )));
        }
    }
    pred.iter()
        .enumerate()
        .map(|(k, &c)| {
            if c >= cardinalities[k] {
                return Err(EvalError::IndexOutOfRange(format!(
                    "predicted value {c} of attribute {k}"
                )));
            }
            let labeled: Vec<usize> = groups.iter().filter_map(|g| g[k]).collect();
            Ok(if labeled.is_empty() {
                None
            } else {
                Some(labeled.contains(&c))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub parts: Vec<bool>,
    pub attributes: Vec<Option<bool>>,
}

pub fn evaluate_instance(
    inst: &Instance,
    spec: &ModelSpec,
    label: &JointLabel,
    threshold: f64,
) -> Result<InstanceEval, EvalError> {
    let gt = inst
        .ground_truth
        .as_ref()
        .ok_or_else(|| EvalError::NoGroundTruth(inst.id.clone()))?;
    let boxes = inst
        .pose_boxes(&label.pose)
        .ok_or_else(|| EvalError::IndexOutOfRange(format!("pose {:?} in instance {}", label.pose, inst.id)))?;
    Ok(InstanceEval {
        parts: pcp(&boxes, &gt.pose, threshold)?,
        attributes: gap(&label.attrs, &gt.attribute_groups, &spec.attributes.cardinalities)?,
    })
}

/// Raw counts; merging is associative and commutative.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub instances: usize,
    pub part_correct: Vec<usize>,
    pub part_total: Vec<usize>,
    pub attr_correct: Vec<usize>,
    pub attr_evaluated: Vec<usize>,
    pub attr_skipped: Vec<usize>,
}

fn add_into(dst: &mut Vec<usize>, src: &[usize]) {
    if dst.len() < src.len() {
        dst.resize(src.len(), 0);
    }
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

impl Tally {
    pub fn add(&mut self, e: &InstanceEval) {
        let one = |flags: Vec<bool>| flags.into_iter().map(usize::from).collect::<Vec<_>>();
        self.instances += 1;
        add_into(&mut self.part_correct, &one(e.parts.clone()));
        add_into(&mut self.part_total, &vec![1; e.parts.len()]);
        add_into(
            &mut self.attr_correct,
            &one(e.attributes.iter().map(|a| *a == Some(true)).collect()),
        );
        add_into(
            &mut self.attr_evaluated,
            &one(e.attributes.iter().map(Option::is_some).collect()),
        );
        add_into(
            &mut self.attr_skipped,
            &one(e.attributes.iter().map(Option::is_none).collect()),
        );
    }

    pub fn merge(mut self, other: &Tally) -> Tally {
        self.instances += other.instances;
        add_into(&mut self.part_correct, &other.part_correct);
        add_into(&mut self.part_total, &other.part_total);
        add_into(&mut self.attr_correct, &other.attr_correct);
        add_into(&mut self.attr_evaluated, &other.attr_evaluated);
        add_into(&mut self.attr_skipped, &other.attr_skipped);
        self
    }

    pub fn from_evals(evals: &[InstanceEval]) -> Tally {
        let mut t = Tally::default();
        for e in evals {
            t.add(e);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledRate {
    pub name: String,
    pub parts: Vec<usize>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub pcp_threshold: f64,
    pub part_names: Vec<String>,
    pub pcp_per_part: Vec<f64>,
    /// One entry per symmetric pair, pooling both parts' counts.
    pub pcp_pooled: Vec<PooledRate>,
    /// Unweighted mean of the per-part rates.
    pub pcp_total: f64,
    pub attribute_names: Vec<String>,
    /// `None` when an attribute was never evaluated.
    pub gap_per_attribute: Vec<Option<f64>>,
    /// Correct decisions over evaluated decisions.
    pub gap_total: Option<f64>,
    pub gap_skipped: Vec<usize>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Name of a pooled symmetric group: `RU.arm` + `LU.arm` → `U.arms`.
fn pooled_name(a: &str, b: &str) -> String {
    let strip = |s: &str| s.strip_prefix('R').or_else(|| s.strip_prefix('L')).map(str::to_string);
    match (strip(a), strip(b)) {
        (Some(x), Some(y)) if x == y && !x.is_empty() => format!("{x}s"),
        _ => format!("{a}+{b}"),
    }
}

pub fn report(tally: &Tally, spec: &ModelSpec, threshold: f64) -> Result<EvalReport, EvalError> {
    if tally.instances == 0 {
        return Err(EvalError::EmptyInput);
    }
    let m = spec.part_count();
    let n = spec.attribute_count();
    if tally.part_total.len() != m || tally.attr_evaluated.len() != n {
        return Err(EvalError::DimMismatch("tally does not match the model".into()));
    }
    let pcp_per_part: Vec<f64> = (0..m)
        .map(|i| ratio(tally.part_correct[i], tally.part_total[i]).unwrap_or(0.0))
        .collect();
    let pcp_pooled = spec
        .parts
        .symmetric_pairs
        .iter()
        .map(|&(a, b)| PooledRate {
            name: pooled_name(&spec.parts.part_names[a], &spec.parts.part_names[b]),
            parts: vec![a, b],
            rate: ratio(
                tally.part_correct[a] + tally.part_correct[b],
                tally.part_total[a] + tally.part_total[b],
            )
            .unwrap_or(0.0),
        })
        .collect();
    let pcp_total = pcp_per_part.iter().sum::<f64>() / m as f64;
    let gap_per_attribute = (0..n)
        .map(|k| ratio(tally.attr_correct[k], tally.attr_evaluated[k]))
        .collect();
    let gap_total = ratio(tally.attr_correct.iter().sum(), tally.attr_evaluated.iter().sum());
    Ok(EvalReport {
        instances: tally.instances,
        pcp_threshold: threshold,
        part_names: spec.parts.part_names.clone(),
        pcp_per_part,
        pcp_pooled,
        pcp_total,
        attribute_names: spec.attributes.names.clone(),
        gap_per_attribute,
        gap_total,
        gap_skipped: tally.attr_skipped.clone(),
    })
}

pub fn aggregate(evals: &[InstanceEval], spec: &ModelSpec, threshold: f64) -> Result<EvalReport, EvalError> {
    report(&Tally::from_evals(evals), spec, threshold)
}

/// Scores `labels[i]` against `instances[i]`, in parallel under `exec`.
pub fn evaluate(
    instances: &[Instance],
    labels: &[JointLabel],
    spec: &ModelSpec,
    threshold: f64,
    exec: Execution,
) -> Result<EvalReport, EvalError> {
    if instances.len() != labels.len() {
        return Err(EvalError::DimMismatch(format!(
            "{} instances, {} predictions",
            instances.len(),
            labels.len()
        )));
    }
    let idx: Vec<usize> = (0..instances.len()).collect();
    let evals = par::map(exec, &idx, |&i| {
        evaluate_instance(&instances[i], spec, &labels[i], threshold)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    aggregate(&evals, spec, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, theta: f64, s: f64) -> OrientedBox {
        OrientedBox { x, y, theta, s }
    }

    fn spec() -> ModelSpec {
        ModelSpec::default_model(4, 4, [2; 5])
    }

    #[test]
    fn identical_box_is_correct() {
        let b = bx(10.0, 20.0, 30.0, 40.0);
        for t in [1e-9, 0.1, 0.5] {
            assert!(pcp_part(&b, &b, t));
        }
    }

    #[test]
    fn endpoint_displaced_beyond_threshold() {
        // horizontal box of length 10 with endpoints (0,0) and (10,0);
        // stretch to move one endpoint by 0.6 L while keeping the other
        let truth = bx(5.0, 0.0, 0.0, 10.0);
        let pred = bx(8.0, 0.0, 0.0, 16.0);
        assert!((endpoint_error(&pred, &truth) - 6.0).abs() < 1e-12);
        assert!(!pcp_part(&pred, &truth, 0.5));
        assert!(pcp_part(&pred, &truth, 0.6 + 1e-12));
    }

    #[test]
    fn flipped_box_is_correct() {
        let truth = bx(3.0, 4.0, 25.0, 12.0);
        let flipped = bx(3.0, 4.0, 205.0, 12.0);
        assert!(endpoint_error(&flipped, &truth) < 1e-9);
        assert!(pcp_part(&flipped, &truth, 0.5));
    }

    #[test]
    fn pcp_length_mismatch() {
        let b = bx(0.0, 0.0, 0.0, 1.0);
        assert!(matches!(pcp(&[b], &[b, b], 0.5), Err(EvalError::DimMismatch(_))));
    }

    #[test]
    fn any_group_value_is_accepted() {
        let groups = vec![
            vec![Some(0), Some(0), Some(0), Some(0), Some(1)],
            vec![Some(0), Some(0), Some(0), Some(0), Some(2)],
        ];
        let r = gap(&[0, 0, 0, 0, 2], &groups, &[4, 8, 4, 5, 3]).unwrap();
        assert_eq!(r[4], Some(true));
        let r = gap(&[0, 0, 0, 0, 0], &groups, &[4, 8, 4, 5, 3]).unwrap();
        assert_eq!(r[4], Some(false));
    }

    #[test]
    fn missing_everywhere_is_skipped() {
        let groups = vec![
            vec![Some(1), Some(2), None, Some(0), Some(1)],
            vec![None, None, None, None, None],
        ];
        let r = gap(&[1, 2, 3, 0, 1], &groups, &[4, 8, 4, 5, 3]).unwrap();
        assert_eq!(r, vec![Some(true), Some(true), None, Some(true), Some(true)]);
        let rep = aggregate(
            &[InstanceEval {
                parts: vec![true; 6],
                attributes: r,
            }],
            &spec(),
            0.5,
        )
        .unwrap();
        assert_eq!(rep.gap_total, Some(1.0));
        assert_eq!(rep.gap_per_attribute[2], None);
        assert_eq!(rep.gap_skipped, vec![0, 0, 1, 0, 0]);
    }

    #[test]
    fn exact_match_gives_five_corrects() {
        let groups = vec![vec![Some(3), Some(7), Some(1), Some(4), Some(2)]];
        let r = gap(&[3, 7, 1, 4, 2], &groups, &[4, 8, 4, 5, 3]).unwrap();
        assert_eq!(r.iter().filter(|x| **x == Some(true)).count(), 5);
    }

    #[test]
    fn gap_rejects_out_of_range() {
        let groups = vec![vec![Some(0); 5]];
        assert!(matches!(
            gap(&[0, 8, 0, 0, 0], &groups, &[4, 8, 4, 5, 3]),
            Err(EvalError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn all_correct_report() {
        let e = InstanceEval {
            parts: vec![true; 6],
            attributes: vec![Some(true); 5],
        };
        let rep = aggregate(&[e.clone(), e], &spec(), 0.5).unwrap();
        assert!(rep.pcp_per_part.iter().all(|&r| r == 1.0));
        assert!(rep.pcp_pooled.iter().all(|p| p.rate == 1.0));
        assert_eq!(rep.pcp_total, 1.0);
        assert_eq!(rep.gap_total, Some(1.0));
    }

    #[test]
    fn hand_aggregated_parts() {
        let e = InstanceEval {
            parts: vec![true, true, false, true, false, true],
            attributes: vec![Some(true); 5],
        };
        let rep = aggregate(&[e], &spec(), 0.5).unwrap();
        assert_eq!(rep.pcp_per_part[0], 1.0);
        assert_eq!(rep.pcp_pooled[0].name, "U.arms");
        assert_eq!(rep.pcp_pooled[0].rate, 0.5);
        assert_eq!(rep.pcp_pooled[1].name, "L.arms");
        assert_eq!(rep.pcp_pooled[1].rate, 0.5);
        assert_eq!(rep.pcp_per_part[5], 1.0);
        assert!((rep.pcp_total - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn empty_input() {
        assert_eq!(aggregate(&[], &spec(), 0.5).unwrap_err(), EvalError::EmptyInput);
    }

    fn arb_eval() -> impl Strategy<Value = InstanceEval> {
        (
            proptest::collection::vec(any::<bool>(), 6),
            proptest::collection::vec(proptest::option::of(any::<bool>()), 5),
        )
            .prop_map(|(parts, attributes)| InstanceEval { parts, attributes })
    }

    proptest! {
        #[test]
        fn merging_matches_concatenation(evals in proptest::collection::vec(arb_eval(), 1..40), cut in 0usize..40) {
            let cut = cut.min(evals.len());
            let (a, b) = evals.split_at(cut);
            let merged = Tally::from_evals(a).merge(&Tally::from_evals(b));
            prop_assert_eq!(&merged, &Tally::from_evals(&evals));
            let r1 = report(&merged, &spec(), 0.5).unwrap();
            let r2 = aggregate(&evals, &spec(), 0.5).unwrap();
            prop_assert_eq!(r1, r2);
        }

        #[test]
        fn rates_are_bounded(evals in proptest::collection::vec(arb_eval(), 1..20)) {
            let r = aggregate(&evals, &spec(), 0.5).unwrap();
            for v in r.pcp_per_part.iter().chain(std::iter::once(&r.pcp_total)) {
                prop_assert!((0.0..=1.0).contains(v));
            }
            for v in r.gap_per_attribute.iter().flatten().chain(r.gap_total.iter()) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn translation_invariance(
            x in -100.0..100.0f64, y in -100.0..100.0f64, th in 0.0..360.0f64, s in 1.0..50.0f64,
            px in -100.0..100.0f64, py in -100.0..100.0f64, pth in 0.0..360.0f64, ps in 1.0..50.0f64,
            dx in -1e3..1e3f64, dy in -1e3..1e3f64,
        ) {
            let truth = bx(x, y, th, s);
            let pred = bx(px, py, pth, ps);
            let moved_t = bx(x + dx, y + dy, th, s);
            let moved_p = bx(px + dx, py + dy, pth, ps);
            let e1 = endpoint_error(&pred, &truth);
            let e2 = endpoint_error(&moved_p, &moved_t);
            prop_assert!((e1 - e2).abs() < 1e-9);
        }
    }
}
