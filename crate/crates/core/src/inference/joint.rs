//! Joint inference by alternating the two exact conditional maximizers.

use serde::{Deserialize, Serialize};

use super::attrs::infer_attrs_given_pose;
use super::pose::infer_pose_given_attrs;
use super::{score_full, InferenceError, Objective};
use crate::instance::{Instance, JointLabel};
use crate::par::{self, Execution};

pub const DEFAULT_MAX_ITER: usize = 10;
/// Relative score change below which the ascent is considered stalled.
pub const CONVERGENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub label: JointLabel,
    pub score: f64,
    /// Best score so far after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Coordinate ascent: start from the attribute-free pose, then alternate
/// attributes-given-pose and pose-given-attributes. Returns the best label
/// visited.
pub fn infer_joint(obj: &Objective, inst: &Instance, max_iter: usize) -> Result<InferenceResult, InferenceError> {
    if max_iter == 0 {
        return Err(InferenceError::ZeroIterations);
    }
    let mut pose = infer_pose_given_attrs(obj, inst, None)?.pose;
    let mut best: Option<(JointLabel, f64)> = None;
    let mut trace = Vec::with_capacity(max_iter);
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=max_iter {
        iterations = t;
        let attrs = infer_attrs_given_pose(obj, inst, &pose)?.attrs;
        let next = infer_pose_given_attrs(obj, inst, Some(&attrs))?.pose;
        let label = JointLabel::new(next.clone(), attrs);
        let s = score_full(obj, inst, &label)?;
        let previous = best.as_ref().map(|b| b.1);
        if previous.is_none_or(|p| s > p) {
            best = Some((label, s));
        }
        let current = best.as_ref().map(|b| b.1).unwrap_or(s);
        trace.push(current);
        let stalled = match previous {
            Some(p) if t >= 2 => (current - p).abs() <= CONVERGENCE_TOL * current.abs().max(1.0),
            _ => false,
        };
        let fixed = next == pose;
        pose = next;
        if fixed || stalled {
            converged = true;
            break;
        }
    }
    let (label, score) = best.expect("at least one iteration");
    Ok(InferenceResult {
        label,
        score,
        trace,
        iterations,
        converged,
    })
}

/// Pose without attribute evidence, then attributes given that pose. No
/// information flows from attributes back to the pose.
pub fn infer_separate(obj: &Objective, inst: &Instance) -> Result<InferenceResult, InferenceError> {
    let pose = infer_pose_given_attrs(obj, inst, None)?.pose;
    let attrs = infer_attrs_given_pose(obj, inst, &pose)?.attrs;
    let label = JointLabel::new(pose, attrs);
    let score = score_full(obj, inst, &label)?;
    Ok(InferenceResult {
        label,
        score,
        trace: vec![score],
        iterations: 1,
        converged: true,
    })
}

/// Runs [`infer_joint`] on every instance; results keep input order.
pub fn infer_batch(
    obj: &Objective,
    instances: &[Instance],
    max_iter: usize,
    exec: Execution,
) -> Vec<Result<InferenceResult, InferenceError>> {
    par::map(exec, instances, |inst| infer_joint(obj, inst, max_iter))
}
