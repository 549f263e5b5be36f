//! Exact conditional inference (pose given attributes on the super-node tree,
//! attributes given pose on the attribute tree), coordinate-ascent joint
//! inference, and exhaustive oracles.

mod attrs;
mod brute;
mod joint;
mod pose;

pub use attrs::{infer_attrs_given_pose, AttrSolution};
pub use brute::{brute_force_attrs, brute_force_joint, brute_force_pose, joint_space_size, DEFAULT_BRUTE_FORCE_CAP};
pub use joint::{infer_batch, infer_joint, infer_separate, InferenceResult, CONVERGENCE_TOL, DEFAULT_MAX_ITER};
pub use pose::{build_message_table, infer_pose_given_attrs, MessageTable, PoseSolution};

use thiserror::Error;

use crate::edge_energy::pose_energy;
use crate::features::{score_joint, FeatureError};
use crate::instance::{Instance, JointLabel};
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("label space of {size} exceeds the brute-force cap {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },
    #[error("weight {index} is not finite")]
    NonFiniteWeight { index: usize },
    #[error("weight vector has {got} entries, model needs {want}")]
    WeightDim { got: usize, want: usize },
    #[error("max_iter must be at least 1")]
    ZeroIterations,
}

/// Everything the score `w·J(x,y) + α Q(x,p)` depends on besides the
/// instance.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub spec: &'a ModelSpec,
    pub weights: &'a [f64],
    pub alpha: f64,
    pub beta: f64,
}

impl<'a> Objective<'a> {
    pub fn new(spec: &'a ModelSpec, weights: &'a [f64], alpha: f64, beta: f64) -> Result<Self, InferenceError> {
        if weights.len() != spec.dim() {
            return Err(InferenceError::WeightDim {
                got: weights.len(),
                want: spec.dim(),
            });
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(InferenceError::NonFiniteWeight { index });
        }
        Ok(Objective {
            spec,
            weights,
            alpha,
            beta,
        })
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Objective { alpha, ..self }
    }
}

/// `S(x, y; w) = w·J(x, y) + α Q(x, p)`.
pub fn score_full(obj: &Objective, inst: &Instance, y: &JointLabel) -> Result<f64, InferenceError> {
    let linear = score_joint(obj.weights, inst, obj.spec, y)?;
    let energy = if obj.alpha == 0.0 {
        0.0
    } else {
        obj.alpha * pose_energy(inst, &y.pose, obj.beta)?
    };
    Ok(linear + energy)
}

fn check_pose(inst: &Instance, spec: &ModelSpec, pose: &[usize]) -> Result<(), InferenceError> {
    if pose.len() != spec.part_count() || inst.ensembles.len() != spec.part_count() {
        return Err(FeatureError::IndexOutOfRange(format!("pose has {} entries", pose.len())).into());
    }
    for (i, &p) in pose.iter().enumerate() {
        if p >= inst.ensembles[i].len() {
            return Err(FeatureError::IndexOutOfRange(format!("candidate {p} of part {i}")).into());
        }
    }
    Ok(())
}

fn check_attrs(spec: &ModelSpec, attrs: &[usize]) -> Result<(), InferenceError> {
    if attrs.len() != spec.attribute_count() {
        return Err(FeatureError::IndexOutOfRange(format!("{} attribute values", attrs.len())).into());
    }
    for (k, &c) in attrs.iter().enumerate() {
        if c >= spec.attributes.cardinalities[k] {
            return Err(FeatureError::IndexOutOfRange(format!("value {c} of attribute {k}")).into());
        }
    }
    Ok(())
}

fn check_instance(inst: &Instance, spec: &ModelSpec) -> Result<(), InferenceError> {
    if inst.ensembles.len() != spec.part_count() || inst.ensembles.iter().any(Vec::is_empty) {
        return Err(FeatureError::IndexOutOfRange(format!(
            "instance {} needs {} non-empty ensembles",
            inst.id,
            spec.part_count()
        ))
        .into());
    }
    Ok(())
}
