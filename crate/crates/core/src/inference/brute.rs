//! Exhaustive maximizers used as reference oracles. They share nothing with
//! the dynamic programs beyond the feature functions. Enumeration is in
//! lexicographic order (part 0 / attribute 0 most significant) and ties keep
//! the first label found.

use super::{check_attrs, check_instance, check_pose, score_full, InferenceError, Objective};
use crate::edge_energy::pose_energy;
use crate::features::{cross_feature, score_joint_masked, FeatureMask};
use crate::instance::{Instance, JointLabel};
use crate::model::BlockId;
use crate::par::{self, Execution};

pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 10_000_000;

/// `Π_i K_i · Π_k T_k`.
pub fn joint_space_size(inst: &Instance, spec: &crate::model::ModelSpec) -> u128 {
    let poses: u128 = inst.ensembles.iter().map(|e| e.len() as u128).product();
    let attrs: u128 = spec.attributes.cardinalities.iter().map(|&t| t as u128).product();
    poses * attrs
}

fn check_cap(size: u128, cap: u128) -> Result<(), InferenceError> {
    if size > cap {
        Err(InferenceError::SpaceTooLarge { size, cap })
    } else {
        Ok(())
    }
}

/// Mixed-radix decoding, first digit most significant.
fn decode(mut index: usize, radix: &[usize], out: &mut [usize]) {
    for (slot, &r) in out.iter_mut().zip(radix).rev() {
        *slot = index % r;
        index /= r;
    }
}

fn pose_only_mask() -> FeatureMask {
    FeatureMask {
        pose: true,
        cooccurrence: false,
        cross: false,
        attributes: Vec::new(),
    }
}

/// Best pose and its score `w·J` (pose blocks, plus cross and co-occurrence
/// blocks when `attrs` is given) `+ αQ`.
pub fn brute_force_pose(
    obj: &Objective,
    inst: &Instance,
    attrs: Option<&[usize]>,
) -> Result<(Vec<usize>, f64), InferenceError> {
    check_instance(inst, obj.spec)?;
    if let Some(c) = attrs {
        check_attrs(obj.spec, c)?;
    }
    let radix = inst.ensemble_sizes();
    let total: u128 = radix.iter().map(|&k| k as u128).product();
    check_cap(total, DEFAULT_BRUTE_FORCE_CAP)?;
    let n_attr = obj.spec.attribute_count();
    let mut pose = vec![0; radix.len()];
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for idx in 0..total as usize {
        decode(idx, &radix, &mut pose);
        let s = match attrs {
            Some(c) => score_full(obj, inst, &JointLabel::new(pose.clone(), c.to_vec()))?,
            None => {
                let y = JointLabel::new(pose.clone(), vec![0; n_attr]);
                let mut s = score_joint_masked(obj.weights, inst, obj.spec, &y, &pose_only_mask())?;
                if obj.alpha != 0.0 {
                    s += obj.alpha * pose_energy(inst, &pose, obj.beta)?;
                }
                s
            }
        };
        if s > best.1 {
            best = (pose.clone(), s);
        }
    }
    Ok(best)
}

/// Best attribute values for a fixed pose and their score over the
/// co-occurrence and cross blocks.
pub fn brute_force_attrs(
    obj: &Objective,
    inst: &Instance,
    pose: &[usize],
) -> Result<(Vec<usize>, f64), InferenceError> {
    check_instance(inst, obj.spec)?;
    check_pose(inst, obj.spec, pose)?;
    let radix = obj.spec.attributes.cardinalities.clone();
    let total: u128 = radix.iter().map(|&t| t as u128).product();
    check_cap(total, DEFAULT_BRUTE_FORCE_CAP)?;
    let mask = FeatureMask {
        pose: false,
        ..FeatureMask::all()
    };
    let mut attrs = vec![0; radix.len()];
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for idx in 0..total as usize {
        decode(idx, &radix, &mut attrs);
        let y = JointLabel::new(pose.to_vec(), attrs.clone());
        let s = score_joint_masked(obj.weights, inst, obj.spec, &y, &mask)?;
        if s > best.1 {
            best = (attrs.clone(), s);
        }
    }
    Ok(best)
}

/// Exact joint maximizer of `S(x, y; w)` by enumeration. Poses are scored in
/// parallel under `exec`; the reduction is sequential, so the result does not
/// depend on the thread count.
pub fn brute_force_joint(
    obj: &Objective,
    inst: &Instance,
    cap: u128,
    exec: Execution,
) -> Result<(JointLabel, f64), InferenceError> {
    let spec = obj.spec;
    check_instance(inst, spec)?;
    check_cap(joint_space_size(inst, spec), cap)?;
    let k_radix = inst.ensemble_sizes();
    let t_radix = spec.attributes.cardinalities.clone();
    let n_pose: usize = k_radix.iter().product();
    let n_attr_space: usize = t_radix.iter().product();
    let w = obj.weights;

    let per_pose = par::map_range(exec, n_pose, |pidx| -> Result<(f64, usize), InferenceError> {
        let mut pose = vec![0; k_radix.len()];
        decode(pidx, &k_radix, &mut pose);
        let y = JointLabel::new(pose.clone(), vec![0; t_radix.len()]);
        let mut base = score_joint_masked(w, inst, spec, &y, &pose_only_mask())?;
        if obj.alpha != 0.0 {
            base += obj.alpha * pose_energy(inst, &pose, obj.beta)?;
        }
        // cross[k][c] = w_k · (F_k ⊗ I(c))
        let mut cross = Vec::with_capacity(t_radix.len());
        for (k, &t) in t_radix.iter().enumerate() {
            let wb = &w[spec.layout.range(BlockId::Cross(k))];
            let assignment: Vec<usize> = spec.attributes.dependency[k].iter().map(|&p| pose[p]).collect();
            let mut row = Vec::with_capacity(t);
            for c in 0..t {
                let f = cross_feature(inst, spec, k, &assignment, c)?;
                row.push(f.values.iter().zip(wb).map(|(a, b)| a * b).sum::<f64>());
            }
            cross.push(row);
        }
        let cooc: Vec<&[f64]> = (0..spec.attributes.tree_edges.len())
            .map(|e| &w[spec.layout.range(BlockId::Cooccurrence(e))])
            .collect();
        let mut attrs = vec![0; t_radix.len()];
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
        for aidx in 0..n_attr_space {
            decode(aidx, &t_radix, &mut attrs);
            let mut s = base;
            for (k, &c) in attrs.iter().enumerate() {
                s += cross[k][c];
            }
            for (e, &(k, l)) in spec.attributes.tree_edges.iter().enumerate() {
                s += cooc[e][attrs[k] * t_radix[l] + attrs[l]];
            }
            if s > best {
                best = s;
                arg = aidx;
            }
        }
        Ok((best, arg))
    });

    let (mut best, mut arg) = (f64::NEG_INFINITY, (0, 0));
    for (pidx, r) in per_pose.into_iter().enumerate() {
        let (s, aidx) = r?;
        if s > best {
            best = s;
            arg = (pidx, aidx);
        }
    }
    let mut pose = vec![0; k_radix.len()];
    let mut attrs = vec![0; t_radix.len()];
    decode(arg.0, &k_radix, &mut pose);
    decode(arg.1, &t_radix, &mut attrs);
    Ok((JointLabel::new(pose, attrs), best))
}
