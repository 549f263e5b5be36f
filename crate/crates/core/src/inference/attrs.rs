//! Exact attribute inference for a fixed pose: max-sum on the attribute tree.

use super::{check_instance, check_pose, InferenceError, Objective};
use crate::features::{cooccurrence_index, cross_weight_segment, FeatureError};
use crate::instance::Instance;
use crate::model::BlockId;

#[derive(Debug, Clone, PartialEq)]
pub struct AttrSolution {
    pub attrs: Vec<usize>,
    /// Optimum of `w_c·J_c(c) + w_pc·J_pc(x, p, c)`.
    pub score: f64,
}

/// Unary of attribute `k` for every value: the cross score of the selected
/// candidates' descriptors.
fn attribute_unaries(obj: &Objective, inst: &Instance, pose: &[usize], k: usize) -> Result<Vec<f64>, InferenceError> {
    let spec = obj.spec;
    let deps = &spec.attributes.dependency[k];
    let mut feats = Vec::with_capacity(deps.len());
    for &part in deps {
        let f = inst.ensembles[part][pose[part]]
            .attr_feature(k)
            .ok_or(FeatureError::MissingAttrFeature {
                part,
                candidate: pose[part],
                attribute: k,
            })?;
        feats.push(f);
    }
    Ok((0..spec.attributes.cardinalities[k])
        .map(|c| {
            feats
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    cross_weight_segment(spec, obj.weights, k, c, j)
                        .iter()
                        .zip(f.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum()
        })
        .collect())
}

/// Exact argmax over attribute values of `w_c·J_c + w_pc·J_pc(x, p, ·)`.
/// Ties go to the smallest value, decided root first.
pub fn infer_attrs_given_pose(
    obj: &Objective,
    inst: &Instance,
    pose: &[usize],
) -> Result<AttrSolution, InferenceError> {
    let spec = obj.spec;
    check_instance(inst, spec)?;
    check_pose(inst, spec, pose)?;
    let n = spec.attribute_count();
    let t = &spec.attributes.cardinalities;

    let mut total: Vec<Vec<f64>> = (0..n)
        .map(|k| attribute_unaries(obj, inst, pose, k))
        .collect::<Result<_, _>>()?;

    let edges = spec.attributes.rooted_edges();
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); n];
    // children before parents
    for &(parent, child, e) in edges.iter().rev() {
        let w = &obj.weights[spec.layout.range(BlockId::Cooccurrence(e))];
        let (k, l) = spec.attributes.tree_edges[e];
        let mut msg = vec![f64::NEG_INFINITY; t[parent]];
        let mut bp = vec![0usize; t[parent]];
        for (cp, (m, b)) in msg.iter_mut().zip(bp.iter_mut()).enumerate() {
            for (cc, &below) in total[child].iter().enumerate() {
                let idx = if k == parent {
                    cooccurrence_index(cp, cc, t[l])
                } else {
                    cooccurrence_index(cc, cp, t[l])
                };
                let v = below + w[idx];
                if v > *m {
                    *m = v;
                    *b = cc;
                }
            }
        }
        for (a, m) in total[parent].iter_mut().zip(&msg) {
            *a += m;
        }
        back[child] = bp;
    }

    let mut attrs = vec![0usize; n];
    let mut score = f64::NEG_INFINITY;
    if n > 0 {
        for (c, &v) in total[0].iter().enumerate() {
            if v > score {
                score = v;
                attrs[0] = c;
            }
        }
        for &(parent, child, _) in &edges {
            attrs[child] = back[child][attrs[parent]];
        }
    } else {
        score = 0.0;
    }
    Ok(AttrSolution { attrs, score })
}

#[cfg(test)]
mod tests {
    use super::super::brute_force_attrs;
    use super::super::test_support::*;
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_exhaustive_attribute_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for seed in 0..40 {
            let (spec, inst, w) = random_case(seed);
            let obj = Objective::new(&spec, &w, 0.0, 1.0).unwrap();
            let pose: Vec<usize> = inst.ensembles.iter().map(|e| rng.random_range(0..e.len())).collect();
            let dp = infer_attrs_given_pose(&obj, &inst, &pose).unwrap();
            let (bc, _) = brute_force_attrs(&obj, &inst, &pose).unwrap();
            assert_eq!(dp.attrs, bc, "seed {seed}");
            let y = crate::instance::JointLabel::new(pose.clone(), dp.attrs.clone());
            let mask = crate::features::FeatureMask {
                pose: false,
                ..Default::default()
            };
            let s = crate::features::score_joint_masked(&w, &inst, &spec, &y, &mask).unwrap();
            assert!((s - dp.score).abs() <= 1e-9 * s.abs().max(1.0));
        }
    }

    #[test]
    fn zero_weights_pick_smallest_values() {
        let (spec, inst, _) = random_case(11);
        let w = vec![0.0; spec.dim()];
        let obj = Objective::new(&spec, &w, 0.0, 1.0).unwrap();
        let sol = infer_attrs_given_pose(&obj, &inst, &[0; 6]).unwrap();
        assert_eq!(sol.attrs, vec![0; 5]);
    }

    #[test]
    fn reversed_edge_orientation() {
        // attribute tree edges stored child-first still index blocks as (k, l)
        let (mut spec, inst, _) = random_case(12);
        spec.attributes.tree_edges = vec![(1, 0), (2, 1), (3, 2), (4, 3)];
        spec.layout = crate::model::FeatureLayout::build(&spec.parts, &spec.attributes, spec.unary_dim);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let w: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let obj = Objective::new(&spec, &w, 0.0, 1.0).unwrap();
            let dp = infer_attrs_given_pose(&obj, &inst, &[1, 0, 1, 0, 1, 0]).unwrap();
            let (bc, _) = brute_force_attrs(&obj, &inst, &[1, 0, 1, 0, 1, 0]).unwrap();
            assert_eq!(dp.attrs, bc);
        }
    }
}
