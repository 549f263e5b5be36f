//! Joint human pose estimation and garment attribute classification as one
//! structured prediction problem.
//!
//! A [`model::ModelSpec`] fixes the part tree, symmetric pairs, attribute
//! dependencies and the feature layout. Instances carry candidate boxes per
//! part with precomputed descriptors. [`inference`] finds high-scoring joint
//! labels, [`ssvm`] learns the weights, and [`eval`] scores predictions.

pub mod edge_energy;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod inference;
pub mod instance;
pub mod model;
pub mod par;
pub mod ssvm;
pub mod synth;
pub mod weights;

pub use inference::{infer_joint, InferenceResult, Objective};
pub use instance::{Instance, JointLabel};
pub use model::ModelSpec;
pub use weights::WeightVector;
