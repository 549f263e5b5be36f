//! Joint feature blocks: pose unary, deformation and consistency features,
//! attribute co-occurrence, and cross-task outer products. Also assembles the
//! dense joint vector and the equivalent blockwise score.

use thiserror::Error;

use crate::instance::{Candidate, Instance, JointLabel, OrientedBox};
use crate::model::{BlockId, ModelSpec, CONSISTENCY_DIM, DEFORMATION_DIM, POSITION_BINS, ROTATION_BINS};

/// Guards empty bins in the chi-squared divergence.
pub const CHI2_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("part {part} candidate {candidate} lacks the descriptor for attribute {attribute}")]
    MissingAttrFeature {
        part: usize,
        candidate: usize,
        attribute: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlockView {
    pub block: BlockId,
    pub values: Vec<f64>,
}

/// Selects which feature blocks contribute to the joint vector. Attributes
/// marked absent zero their cross block and every co-occurrence block they
/// touch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMask {
    pub pose: bool,
    pub cooccurrence: bool,
    pub cross: bool,
    /// Per-attribute presence; empty means all present.
    pub attributes: Vec<bool>,
}

impl Default for FeatureMask {
    fn default() -> Self {
        FeatureMask::all()
    }
}

impl FeatureMask {
    pub fn all() -> Self {
        FeatureMask {
            pose: true,
            cooccurrence: true,
            cross: true,
            attributes: Vec::new(),
        }
    }

    pub fn with_attributes(mut self, present: Vec<bool>) -> Self {
        self.attributes = present;
        self
    }

    pub fn attribute_present(&self, k: usize) -> bool {
        self.attributes.get(k).copied().unwrap_or(true)
    }

    pub fn block_active(&self, spec: &ModelSpec, id: BlockId) -> bool {
        match id {
            BlockId::Unary(_) | BlockId::Deformation(_) | BlockId::Consistency(_) => self.pose,
            BlockId::Cooccurrence(e) => {
                let (k, l) = spec.attributes.tree_edges[e];
                self.cooccurrence && self.attribute_present(k) && self.attribute_present(l)
            }
            BlockId::Cross(k) => self.cross && self.attribute_present(k),
        }
    }
}

fn candidate(inst: &Instance, part: usize, index: usize) -> Result<&Candidate, FeatureError> {
    inst.candidate(part, index).ok_or_else(|| {
        FeatureError::IndexOutOfRange(format!("candidate {index} of part {part} in instance {}", inst.id))
    })
}

pub fn unary_feature(inst: &Instance, part: usize, index: usize) -> Result<FeatureBlockView, FeatureError> {
    let c = candidate(inst, part, index)?;
    Ok(FeatureBlockView {
        block: BlockId::Unary(part),
        values: c.unary.clone(),
    })
}

/// Position of one box relative to another, already binned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeGeometry {
    /// Row-major cell of the 3x3 grid centred on the reference box.
    pub position: usize,
    pub rotation: usize,
    /// Centre distance over the image diagonal.
    pub distance: f64,
}

/// Geometry of `moving` relative to `reference`. The central grid cell is the
/// axis-aligned hull of `reference` (width `width_ratio * s`); points on a
/// cell boundary go to the lower row/column.
pub fn relative_geometry(
    moving: &OrientedBox,
    reference: &OrientedBox,
    width_ratio: f64,
    diagonal: f64,
) -> RelativeGeometry {
    let t = reference.theta.to_radians();
    let (c, s) = (t.cos().abs(), t.sin().abs());
    let half_len = reference.s / 2.0;
    let half_w = width_ratio * reference.s / 2.0;
    let hx = c * half_len + s * half_w;
    let hy = s * half_len + c * half_w;
    let cell = |v: f64, centre: f64, h: f64| {
        if v <= centre - h {
            0
        } else if v <= centre + h {
            1
        } else {
            2
        }
    };
    let col = cell(moving.x, reference.x, hx);
    let row = cell(moving.y, reference.y, hy);
    RelativeGeometry {
        position: row * 3 + col,
        rotation: rotation_bin(moving.theta, reference.theta),
        distance: (moving.x - reference.x).hypot(moving.y - reference.y) / diagonal,
    }
}

/// Bin of `(a - b) mod 360` among 20 bins of 18 degrees, upper bound exclusive.
pub fn rotation_bin(a: f64, b: f64) -> usize {
    let mut d = (a - b).rem_euclid(360.0);
    if d >= 360.0 {
        d = 0.0;
    }
    ((d / (360.0 / ROTATION_BINS as f64)).floor() as usize).min(ROTATION_BINS - 1)
}

/// Deformation feature of tree edge `edge = (i, j)`: part `i`'s candidate
/// measured against part `j`'s.
pub fn deformation_feature(
    inst: &Instance,
    spec: &ModelSpec,
    edge: usize,
    pi: usize,
    pj: usize,
) -> Result<FeatureBlockView, FeatureError> {
    let &(i, j) = spec
        .parts
        .tree_edges
        .get(edge)
        .ok_or_else(|| FeatureError::IndexOutOfRange(format!("tree edge {edge}")))?;
    let (ci, cj) = (candidate(inst, i, pi)?, candidate(inst, j, pj)?);
    let g = relative_geometry(&ci.geom, &cj.geom, spec.width_ratio[j], inst.diagonal());
    let mut values = vec![0.0; DEFORMATION_DIM];
    values[g.position] = 1.0;
    values[POSITION_BINS + g.rotation] = 1.0;
    values[DEFORMATION_DIM - 1] = g.distance;
    Ok(FeatureBlockView {
        block: BlockId::Deformation(edge),
        values,
    })
}

/// Symmetric chi-squared divergence `½ Σ (a−b)² / (a+b+ε)`.
pub fn chi_squared(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d / (x + y + CHI2_EPS)
        })
        .sum::<f64>()
}

pub fn consistency_values(a: &Candidate, b: &Candidate) -> [f64; CONSISTENCY_DIM] {
    [
        chi_squared(&a.hist_rgb, &b.hist_rgb),
        chi_squared(&a.hist_lab, &b.hist_lab),
    ]
}

pub fn consistency_feature(
    inst: &Instance,
    spec: &ModelSpec,
    pair: usize,
    pi: usize,
    pj: usize,
) -> Result<FeatureBlockView, FeatureError> {
    let &(i, j) = spec
        .parts
        .symmetric_pairs
        .get(pair)
        .ok_or_else(|| FeatureError::IndexOutOfRange(format!("symmetric pair {pair}")))?;
    let v = consistency_values(candidate(inst, i, pi)?, candidate(inst, j, pj)?);
    Ok(FeatureBlockView {
        block: BlockId::Consistency(pair),
        values: v.to_vec(),
    })
}

/// Hot index of the co-occurrence one-hot for 0-based values.
pub fn cooccurrence_index(ck: usize, cl: usize, tl: usize) -> usize {
    ck * tl + cl
}

/// One-hot of length `tk * tl`. The returned block id is a placeholder; use
/// [`assemble_joint`] for placement.
pub fn cooccurrence_feature(ck: usize, cl: usize, tk: usize, tl: usize) -> Result<FeatureBlockView, FeatureError> {
    if ck >= tk || cl >= tl {
        return Err(FeatureError::IndexOutOfRange(format!(
            "values ({ck}, {cl}) for cardinalities ({tk}, {tl})"
        )));
    }
    let mut values = vec![0.0; tk * tl];
    values[cooccurrence_index(ck, cl, tl)] = 1.0;
    Ok(FeatureBlockView {
        block: BlockId::Cooccurrence(0),
        values,
    })
}

/// `F_k`: the attribute-`k` descriptors of the selected candidates, one per
/// dependent part in ascending part order.
pub fn attribute_input(
    inst: &Instance,
    spec: &ModelSpec,
    k: usize,
    assignment: &[usize],
) -> Result<Vec<f64>, FeatureError> {
    let deps = &spec.attributes.dependency[k];
    if assignment.len() != deps.len() {
        return Err(FeatureError::IndexOutOfRange(format!(
            "attribute {k} depends on {} parts, got {} indices",
            deps.len(),
            assignment.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.attributes.cross_input_dim(k));
    for (&part, &idx) in deps.iter().zip(assignment) {
        let c = candidate(inst, part, idx)?;
        let f = c.attr_feature(k).ok_or(FeatureError::MissingAttrFeature {
            part,
            candidate: idx,
            attribute: k,
        })?;
        out.extend_from_slice(f);
    }
    Ok(out)
}

/// `F_k ⊗ I(c_k)` flattened row-major: `F_k` copied into slot `ck` of
/// `T_k` slots.
pub fn cross_feature(
    inst: &Instance,
    spec: &ModelSpec,
    k: usize,
    assignment: &[usize],
    ck: usize,
) -> Result<FeatureBlockView, FeatureError> {
    let t = spec.attributes.cardinalities[k];
    if ck >= t {
        return Err(FeatureError::IndexOutOfRange(format!("value {ck} of attribute {k}")));
    }
    let f = attribute_input(inst, spec, k, assignment)?;
    Ok(FeatureBlockView {
        block: BlockId::Cross(k),
        values: outer_with_indicator(&f, ck, t),
    })
}

pub fn outer_with_indicator(f: &[f64], ck: usize, t: usize) -> Vec<f64> {
    let mut values = vec![0.0; f.len() * t];
    values[ck * f.len()..(ck + 1) * f.len()].copy_from_slice(f);
    values
}

/// Weights multiplying part `j`-th (in dependency order) descriptor of
/// attribute `k` when the attribute takes value `ck`.
pub fn cross_weight_segment<'w>(spec: &ModelSpec, w: &'w [f64], k: usize, ck: usize, j: usize) -> &'w [f64] {
    let d = spec.attributes.feature_dims[k];
    let f_len = spec.attributes.cross_input_dim(k);
    let start = spec.layout.range(BlockId::Cross(k)).start + ck * f_len + j * d;
    &w[start..start + d]
}

fn dependent_indices(spec: &ModelSpec, k: usize, pose: &[usize]) -> Vec<usize> {
    spec.attributes.dependency[k].iter().map(|&p| pose[p]).collect()
}

fn check_label(inst: &Instance, spec: &ModelSpec, y: &JointLabel) -> Result<(), FeatureError> {
    y.check(inst, spec)
        .map_err(|e| FeatureError::IndexOutOfRange(e.to_string()))
}

/// Dense joint feature vector of length `D`.
pub fn assemble_joint(
    inst: &Instance,
    spec: &ModelSpec,
    y: &JointLabel,
    mask: &FeatureMask,
) -> Result<Vec<f64>, FeatureError> {
    check_label(inst, spec, y)?;
    let mut out = vec![0.0; spec.dim()];
    let mut place = |view: FeatureBlockView, id: BlockId| {
        if mask.block_active(spec, id) {
            out[spec.layout.range(id)].copy_from_slice(&view.values);
        }
    };
    for i in 0..spec.part_count() {
        place(unary_feature(inst, i, y.pose[i])?, BlockId::Unary(i));
    }
    for (e, &(i, j)) in spec.parts.tree_edges.iter().enumerate() {
        place(
            deformation_feature(inst, spec, e, y.pose[i], y.pose[j])?,
            BlockId::Deformation(e),
        );
    }
    for (s, &(i, j)) in spec.parts.symmetric_pairs.iter().enumerate() {
        place(
            consistency_feature(inst, spec, s, y.pose[i], y.pose[j])?,
            BlockId::Consistency(s),
        );
    }
    let t = &spec.attributes.cardinalities;
    for (e, &(k, l)) in spec.attributes.tree_edges.iter().enumerate() {
        place(
            cooccurrence_feature(y.attrs[k], y.attrs[l], t[k], t[l])?,
            BlockId::Cooccurrence(e),
        );
    }
    for k in 0..spec.attribute_count() {
        let idx = dependent_indices(spec, k, &y.pose);
        place(cross_feature(inst, spec, k, &idx, y.attrs[k])?, BlockId::Cross(k));
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `w · J(x, y)` over the full feature set.
pub fn score_joint(w: &[f64], inst: &Instance, spec: &ModelSpec, y: &JointLabel) -> Result<f64, FeatureError> {
    score_joint_masked(w, inst, spec, y, &FeatureMask::all())
}

/// `w · J(x, y)` evaluated block by block without materializing `J`.
pub fn score_joint_masked(
    w: &[f64],
    inst: &Instance,
    spec: &ModelSpec,
    y: &JointLabel,
    mask: &FeatureMask,
) -> Result<f64, FeatureError> {
    check_label(inst, spec, y)?;
    let layout = &spec.layout;
    let mut total = 0.0;
    if mask.pose {
        for i in 0..spec.part_count() {
            let c = candidate(inst, i, y.pose[i])?;
            total += dot(&w[layout.range(BlockId::Unary(i))], &c.unary);
        }
        let diag = inst.diagonal();
        for (e, &(i, j)) in spec.parts.tree_edges.iter().enumerate() {
            let (ci, cj) = (candidate(inst, i, y.pose[i])?, candidate(inst, j, y.pose[j])?);
            let g = relative_geometry(&ci.geom, &cj.geom, spec.width_ratio[j], diag);
            let wb = &w[layout.range(BlockId::Deformation(e))];
            total += wb[g.position] + wb[POSITION_BINS + g.rotation] + wb[DEFORMATION_DIM - 1] * g.distance;
        }
        for (s, &(i, j)) in spec.parts.symmetric_pairs.iter().enumerate() {
            let v = consistency_values(candidate(inst, i, y.pose[i])?, candidate(inst, j, y.pose[j])?);
            total += dot(&w[layout.range(BlockId::Consistency(s))], &v);
        }
    }
    let t = &spec.attributes.cardinalities;
    for (e, &(k, l)) in spec.attributes.tree_edges.iter().enumerate() {
        if mask.block_active(spec, BlockId::Cooccurrence(e)) {
            let start = layout.range(BlockId::Cooccurrence(e)).start;
            total += w[start + cooccurrence_index(y.attrs[k], y.attrs[l], t[l])];
        }
    }
    for k in 0..spec.attribute_count() {
        if !mask.block_active(spec, BlockId::Cross(k)) {
            continue;
        }
        for (j, &part) in spec.attributes.dependency[k].iter().enumerate() {
            let c = candidate(inst, part, y.pose[part])?;
            let f = c.attr_feature(k).ok_or(FeatureError::MissingAttrFeature {
                part,
                candidate: y.pose[part],
                attribute: k,
            })?;
            total += dot(cross_weight_segment(spec, w, k, y.attrs[k], j), f);
        }
    }
    Ok(total)
}
