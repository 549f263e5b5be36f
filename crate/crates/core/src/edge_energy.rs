//! Strong-edge energy of a pose from per-candidate edge-pixel evidence.

use crate::features::FeatureError;
use crate::instance::{Candidate, Instance};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 1.0;

/// Orientation agreement and strength-weighted distance of one candidate's
/// edge evidence. Both are zero when there is no evidence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgeScores {
    pub q_o: f64,
    pub q_d: f64,
}

impl EdgeScores {
    /// `q_o + beta * q_d`.
    pub fn energy(&self, beta: f64) -> f64 {
        self.q_o + beta * self.q_d
    }
}

pub fn edge_scores(c: &Candidate) -> EdgeScores {
    if c.edge_pixels.is_empty() {
        return EdgeScores::default();
    }
    let z = c.edge_pixels.len() as f64;
    let (mut o, mut d) = (0.0, 0.0);
    for e in &c.edge_pixels {
        o += (c.geom.theta - e.theta_e).to_radians().cos() * e.strg_e;
        d += e.d_min * e.strg_e;
    }
    EdgeScores { q_o: o / z, q_d: d / z }
}

/// `Σ_i q_o(p_i) + beta Σ_i q_d(p_i)`.
pub fn pose_energy(inst: &Instance, pose: &[usize], beta: f64) -> Result<f64, FeatureError> {
    let mut q_o = 0.0;
    let mut q_d = 0.0;
    for (part, &idx) in pose.iter().enumerate() {
        let c = inst
            .candidate(part, idx)
            .ok_or_else(|| FeatureError::IndexOutOfRange(format!("candidate {idx} of part {part}")))?;
        let s = edge_scores(c);
        q_o += s.q_o;
        q_d += s.q_d;
    }
    Ok(q_o + beta * q_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{EdgePixel, OrientedBox};
    use crate::model::ModelSpec;
    use crate::synth::{generate, SynthConfig};
    use rand::{Rng, SeedableRng};

    fn cand(theta: f64, pixels: Vec<EdgePixel>) -> Candidate {
        Candidate {
            geom: OrientedBox {
                x: 0.0,
                y: 0.0,
                theta,
                s: 10.0,
            },
            unary: vec![],
            hist_rgb: vec![],
            hist_lab: vec![],
            attr_feats: vec![],
            edge_pixels: pixels,
        }
    }

    #[test]
    fn aligned_pixel() {
        let c = cand(
            40.0,
            vec![EdgePixel {
                theta_e: 40.0,
                strg_e: 1.0,
                d_min: 0.0,
            }],
        );
        let s = edge_scores(&c);
        assert!((s.q_o - 1.0).abs() < 1e-15);
        assert_eq!(s.q_d, 0.0);
    }

    #[test]
    fn perpendicular_pixel() {
        let c = cand(
            40.0,
            vec![EdgePixel {
                theta_e: 130.0,
                strg_e: 1.0,
                d_min: 2.0,
            }],
        );
        let s = edge_scores(&c);
        assert!(s.q_o.abs() < 1e-12);
        assert_eq!(s.q_d, 2.0);
    }

    #[test]
    fn no_evidence_no_energy() {
        assert_eq!(edge_scores(&cand(10.0, vec![])), EdgeScores::default());
    }

    #[test]
    fn bounds_and_scaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.random_range(1..20);
            let px: Vec<EdgePixel> = (0..n)
                .map(|_| EdgePixel {
                    theta_e: rng.random_range(0.0..360.0),
                    strg_e: rng.random_range(0.0..3.0),
                    d_min: rng.random_range(0.0..10.0),
                })
                .collect();
            let max_s = px.iter().map(|p| p.strg_e).fold(0.0, f64::max);
            let c = cand(rng.random_range(0.0..360.0), px.clone());
            let s = edge_scores(&c);
            assert!(s.q_o.abs() <= max_s + 1e-12);
            assert!(s.q_d >= 0.0);
            let lambda = 2.5;
            let scaled = cand(
                c.geom.theta,
                px.iter()
                    .map(|p| EdgePixel {
                        strg_e: p.strg_e * lambda,
                        ..*p
                    })
                    .collect(),
            );
            let t = edge_scores(&scaled);
            assert!((t.q_o - lambda * s.q_o).abs() < 1e-9);
            assert!((t.q_d - lambda * s.q_d).abs() < 1e-9);
        }
    }

    #[test]
    fn pose_energy_is_per_part_sum() {
        let spec = ModelSpec::default_model(4, 4, [2; 5]);
        let cfg = SynthConfig {
            n_train: 5,
            n_test: 0,
            candidates_per_part: 4,
            ..SynthConfig::default()
        };
        let data = generate(&cfg, &spec).train;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for inst in &data {
            let pose: Vec<usize> = inst.ensembles.iter().map(|e| rng.random_range(0..e.len())).collect();
            let beta = rng.random_range(-2.0..2.0);
            // oracle: accumulate each part's energy independently
            let mut expect = 0.0;
            for (i, &p) in pose.iter().enumerate() {
                let c = &inst.ensembles[i][p];
                let z = c.edge_pixels.len() as f64;
                if z > 0.0 {
                    let o: f64 = c
                        .edge_pixels
                        .iter()
                        .map(|e| (c.geom.theta - e.theta_e).to_radians().cos() * e.strg_e)
                        .sum();
                    let d: f64 = c.edge_pixels.iter().map(|e| e.d_min * e.strg_e).sum();
                    expect += o / z + beta * d / z;
                }
            }
            let got = pose_energy(inst, &pose, beta).unwrap();
            assert!((got - expect).abs() < 1e-12);
            assert!(
                (pose_energy(inst, &pose, 0.0).unwrap()
                    - pose
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| edge_scores(&inst.ensembles[i][p]).q_o)
                        .sum::<f64>())
                .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn empty_evidence_everywhere() {
        let spec = ModelSpec::default_model(4, 4, [2; 5]);
        let cfg = SynthConfig {
            n_train: 1,
            n_test: 0,
            candidates_per_part: 2,
            ..SynthConfig::default()
        };
        let mut inst = generate(&cfg, &spec).train.remove(0);
        for list in &mut inst.ensembles {
            for c in list {
                c.edge_pixels.clear();
            }
        }
        for beta in [-1.0, 0.0, 3.0] {
            assert_eq!(pose_energy(&inst, &[1, 0, 1, 0, 1, 0], beta).unwrap(), 0.0);
        }
    }
}
