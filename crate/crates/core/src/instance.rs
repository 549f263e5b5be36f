//! Instances (one image each) as candidate ensembles with precomputed
//! descriptors and edge evidence, the dataset file format, and ingestion
//! checks against a [`ModelSpec`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelSpec;

/// Default maximum ensemble size per part.
pub const DEFAULT_MAX_CANDIDATES: usize = 40;
const HIST_TOLERANCE: f64 = 1e-6;

/// Oriented box: centre, orientation in degrees, and length along the
/// orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub s: f64,
}

impl OrientedBox {
    pub fn direction(&self) -> (f64, f64) {
        let t = self.theta.to_radians();
        (t.cos(), t.sin())
    }

    /// The two ends of the box's long axis.
    pub fn endpoints(&self) -> [(f64, f64); 2] {
        let (dx, dy) = self.direction();
        let h = self.s / 2.0;
        [(self.x - h * dx, self.y - h * dy), (self.x + h * dx, self.y + h * dy)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePixel {
    /// Edge orientation at the pixel, degrees.
    pub theta_e: f64,
    pub strg_e: f64,
    /// Distance to the nearer of the candidate's two long box edges.
    pub d_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub geom: OrientedBox,
    pub unary: Vec<f64>,
    pub hist_rgb: Vec<f64>,
    pub hist_lab: Vec<f64>,
    /// Indexed by attribute; `Some` exactly for attributes depending on the
    /// candidate's part.
    pub attr_feats: Vec<Option<Vec<f64>>>,
    pub edge_pixels: Vec<EdgePixel>,
}

impl Candidate {
    pub fn attr_feature(&self, k: usize) -> Option<&[f64]> {
        self.attr_feats.get(k).and_then(|f| f.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pose: Vec<OrientedBox>,
    /// One or more attribute assignments; values are 0-based, `None` marks an
    /// attribute that cannot be labeled.
    pub attribute_groups: Vec<Vec<Option<usize>>>,
}

impl GroundTruth {
    /// True if attribute `k` is labeled in at least one group.
    pub fn attribute_present(&self, k: usize) -> bool {
        self.attribute_groups
            .iter()
            .any(|g| g.get(k).copied().flatten().is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub image_width: u32,
    pub image_height: u32,
    /// One candidate list per part; order is significant.
    pub ensembles: Vec<Vec<Candidate>>,
    pub ground_truth: Option<GroundTruth>,
}

impl Instance {
    pub fn diagonal(&self) -> f64 {
        (self.image_width as f64).hypot(self.image_height as f64)
    }

    pub fn ensemble_sizes(&self) -> Vec<usize> {
        self.ensembles.iter().map(Vec::len).collect()
    }

    pub fn candidate(&self, part: usize, index: usize) -> Option<&Candidate> {
        self.ensembles.get(part).and_then(|e| e.get(index))
    }

    /// Predicted boxes for a pose assignment.
    pub fn pose_boxes(&self, pose: &[usize]) -> Option<Vec<OrientedBox>> {
        pose.iter()
            .enumerate()
            .map(|(i, &p)| self.candidate(i, p).map(|c| c.geom))
            .collect()
    }
}

/// A pose assignment (one 0-based candidate index per part) and an attribute
/// assignment (one 0-based value per attribute).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointLabel {
    pub pose: Vec<usize>,
    pub attrs: Vec<usize>,
}

impl JointLabel {
    pub fn new(pose: Vec<usize>, attrs: Vec<usize>) -> Self {
        JointLabel { pose, attrs }
    }

    pub fn check(&self, inst: &Instance, spec: &ModelSpec) -> Result<(), InstanceError> {
        if self.pose.len() != spec.part_count() {
            return Err(InstanceError::IndexOutOfRange(format!(
                "pose has {} entries for {} parts",
                self.pose.len(),
                spec.part_count()
            )));
        }
        if self.attrs.len() != spec.attribute_count() {
            return Err(InstanceError::IndexOutOfRange(format!(
                "attribute assignment has {} entries for {} attributes",
                self.attrs.len(),
                spec.attribute_count()
            )));
        }
        for (i, &p) in self.pose.iter().enumerate() {
            let k = inst.ensembles.get(i).map_or(0, Vec::len);
            if p >= k {
                return Err(InstanceError::IndexOutOfRange(format!(
                    "candidate {p} of part {i} (ensemble size {k})"
                )));
            }
        }
        for (k, &c) in self.attrs.iter().enumerate() {
            let t = spec.attributes.cardinalities[k];
            if c >= t {
                return Err(InstanceError::IndexOutOfRange(format!(
                    "value {c} of attribute {k} (cardinality {t})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse dataset: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("instance {instance}: part {part}: {field}: {detail}")]
    DimMismatch {
        instance: String,
        part: usize,
        field: String,
        detail: String,
    },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("instance {instance}: part {part} lacks the descriptor for attribute {attribute}")]
    MissingAttrFeature {
        instance: String,
        part: usize,
        attribute: String,
    },
    #[error("dataset header does not match the model: {0}")]
    HeaderMismatch(String),
}

/// Distance from `pixel` to the nearer of the two long edges of `geom`, whose
/// width is `width_ratio * s`.
pub fn derive_d_min(pixel: (f64, f64), geom: &OrientedBox, width_ratio: f64) -> f64 {
    let (ux, uy) = geom.direction();
    let (nx, ny) = (-uy, ux);
    let hl = geom.s / 2.0;
    let hw = width_ratio * geom.s / 2.0;
    [1.0, -1.0]
        .iter()
        .map(|side| {
            let cx = geom.x + side * hw * nx;
            let cy = geom.y + side * hw * ny;
            point_segment_distance(pixel, (cx - hl * ux, cy - hl * uy), (cx + hl * ux, cy + hl * uy))
        })
        .fold(f64::INFINITY, f64::min)
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * abx, a.1 + t * aby);
    (p.0 - qx).hypot(p.1 - qy)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub model_hash: String,
    pub parts: usize,
    pub attributes: usize,
    pub unary_dim: usize,
    pub hist_dim: usize,
    pub attr_feature_dims: Vec<usize>,
}

impl DatasetHeader {
    pub fn for_model(spec: &ModelSpec) -> Self {
        DatasetHeader {
            model_hash: spec.hash_hex(),
            parts: spec.part_count(),
            attributes: spec.attribute_count(),
            unary_dim: spec.unary_dim,
            hist_dim: spec.hist_dim,
            attr_feature_dims: spec.attributes.feature_dims.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    header: DatasetHeader,
    instances: Vec<InstanceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    image_width: u32,
    image_height: u32,
    ensembles: Vec<Vec<CandidateRecord>>,
    #[serde(default)]
    ground_truth: Option<GroundTruthRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    x: f64,
    y: f64,
    theta: f64,
    s: f64,
    unary: Vec<f64>,
    hist_rgb: Vec<f64>,
    hist_lab: Vec<f64>,
    #[serde(default)]
    attr_feats: BTreeMap<usize, Vec<f64>>,
    #[serde(default)]
    edge_pixels: Vec<EdgePixelRecord>,
}

/// Either `d_min` is given, or the pixel position `(x, y)` from which it is
/// derived.
#[derive(Debug, Serialize, Deserialize)]
struct EdgePixelRecord {
    theta_e: f64,
    strg_e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
}

/// Attribute values are 1-based on disk; `null` marks a missing label.
#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthRecord {
    pose: Vec<OrientedBox>,
    attribute_groups: Vec<Vec<Option<usize>>>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub max_candidates: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

pub fn load_dataset(path: &Path, spec: &ModelSpec) -> Result<Vec<Instance>, InstanceError> {
    load_dataset_with(path, spec, &LoadOptions::default())
}

pub fn load_dataset_with(path: &Path, spec: &ModelSpec, opts: &LoadOptions) -> Result<Vec<Instance>, InstanceError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, spec, opts)
}

/// Parses and validates a dataset document. Instances come back sorted by id.
pub fn parse_dataset(text: &str, spec: &ModelSpec, opts: &LoadOptions) -> Result<Vec<Instance>, InstanceError> {
    let file: DatasetFile = serde_json::from_str(text)?;
    let expected = DatasetHeader::for_model(spec);
    if file.header != expected {
        return Err(InstanceError::HeaderMismatch(format!(
            "file header {:?}, model expects {:?}",
            file.header, expected
        )));
    }
    let mut out = file
        .instances
        .into_iter()
        .map(|rec| instance_from_record(rec, spec))
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    for inst in &out {
        validate_instance(inst, spec, opts)?;
    }
    Ok(out)
}

fn instance_from_record(rec: InstanceRecord, spec: &ModelSpec) -> Result<Instance, InstanceError> {
    let n = spec.attribute_count();
    let mut ensembles = Vec::with_capacity(rec.ensembles.len());
    for (part, list) in rec.ensembles.into_iter().enumerate() {
        let ratio = spec
            .width_ratio
            .get(part)
            .copied()
            .unwrap_or(crate::model::DEFAULT_WIDTH_RATIO);
        let mut cands = Vec::with_capacity(list.len());
        for c in list {
            let geom = OrientedBox {
                x: c.x,
                y: c.y,
                theta: c.theta,
                s: c.s,
            };
            let mut attr_feats = vec![None; n];
            for (k, v) in c.attr_feats {
                if k >= n {
                    return Err(InstanceError::DimMismatch {
                        instance: rec.id.clone(),
                        part,
                        field: format!("attr_feats[{k}]"),
                        detail: format!("model has {n} attributes"),
                    });
                }
                attr_feats[k] = Some(v);
            }
            let edge_pixels = c
                .edge_pixels
                .into_iter()
                .map(|e| {
                    let d_min = match (e.d_min, e.x, e.y) {
                        (Some(d), _, _) => d,
                        (None, Some(x), Some(y)) => derive_d_min((x, y), &geom, ratio),
                        _ => {
                            return Err(InstanceError::DimMismatch {
                                instance: rec.id.clone(),
                                part,
                                field: "edge_pixels".into(),
                                detail: "edge pixel needs d_min or x and y".into(),
                            })
                        }
                    };
                    Ok(EdgePixel {
                        theta_e: e.theta_e,
                        strg_e: e.strg_e,
                        d_min,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            cands.push(Candidate {
                geom,
                unary: c.unary,
                hist_rgb: c.hist_rgb,
                hist_lab: c.hist_lab,
                attr_feats,
                edge_pixels,
            });
        }
        ensembles.push(cands);
    }
    let ground_truth = match rec.ground_truth {
        None => None,
        Some(gt) => {
            let mut groups = Vec::with_capacity(gt.attribute_groups.len());
            for g in gt.attribute_groups {
                let mut vals = Vec::with_capacity(g.len());
                for v in g {
                    vals.push(match v {
                        None => None,
                        Some(0) => {
                            return Err(InstanceError::IndexOutOfRange(format!(
                                "instance {}: attribute values are 1-based",
                                rec.id
                            )))
                        }
                        Some(x) => Some(x - 1),
                    });
                }
                groups.push(vals);
            }
            Some(GroundTruth {
                pose: gt.pose,
                attribute_groups: groups,
            })
        }
    };
    Ok(Instance {
        id: rec.id,
        image_width: rec.image_width,
        image_height: rec.image_height,
        ensembles,
        ground_truth,
    })
}

/// Checks every per-instance invariant against the model.
pub fn validate_instance(inst: &Instance, spec: &ModelSpec, opts: &LoadOptions) -> Result<(), InstanceError> {
    let m = spec.part_count();
    let n = spec.attribute_count();
    let dim_err = |part: usize, field: &str, detail: String| InstanceError::DimMismatch {
        instance: inst.id.clone(),
        part,
        field: field.to_string(),
        detail,
    };
    if inst.image_width == 0 || inst.image_height == 0 {
        return Err(dim_err(0, "image size", "must be positive".into()));
    }
    if inst.ensembles.len() != m {
        return Err(dim_err(
            0,
            "ensembles",
            format!("{} ensembles for {m} parts", inst.ensembles.len()),
        ));
    }
    for (part, list) in inst.ensembles.iter().enumerate() {
        if list.is_empty() || list.len() > opts.max_candidates {
            return Err(dim_err(
                part,
                "ensemble",
                format!("{} candidates, expected 1..={}", list.len(), opts.max_candidates),
            ));
        }
        for c in list {
            let g = &c.geom;
            if !(g.x.is_finite() && g.y.is_finite()) {
                return Err(dim_err(part, "x/y", "not finite".into()));
            }
            if !(g.theta >= 0.0 && g.theta < 360.0) {
                return Err(dim_err(part, "theta", format!("{} outside [0, 360)", g.theta)));
            }
            if !(g.s > 0.0 && g.s.is_finite()) {
                return Err(dim_err(part, "s", format!("{} is not positive", g.s)));
            }
            if c.unary.len() != spec.unary_dim || c.unary.iter().any(|v| !v.is_finite()) {
                return Err(dim_err(
                    part,
                    "unary",
                    format!("expected {} finite values", spec.unary_dim),
                ));
            }
            for (field, h) in [("hist_rgb", &c.hist_rgb), ("hist_lab", &c.hist_lab)] {
                if h.len() != spec.hist_dim {
                    return Err(dim_err(part, field, format!("length {} != {}", h.len(), spec.hist_dim)));
                }
                if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(dim_err(part, field, "negative or non-finite bin".into()));
                }
                let sum: f64 = h.iter().sum();
                if (sum - 1.0).abs() > HIST_TOLERANCE {
                    return Err(dim_err(part, field, format!("sums to {sum}, expected 1")));
                }
            }
            if c.attr_feats.len() != n {
                return Err(dim_err(part, "attr_feats", format!("expected {n} slots")));
            }
            for k in 0..n {
                let wanted = spec.attributes.depends_on(k, part);
                match (&c.attr_feats[k], wanted) {
                    (None, true) => {
                        return Err(InstanceError::MissingAttrFeature {
                            instance: inst.id.clone(),
                            part,
                            attribute: spec.attributes.names[k].clone(),
                        })
                    }
                    (Some(_), false) => {
                        return Err(dim_err(
                            part,
                            &format!("attr_feats[{k}]"),
                            "part does not feed this attribute".into(),
                        ))
                    }
                    (Some(v), true) => {
                        let d = spec.attributes.feature_dims[k];
                        if v.len() != d || v.iter().any(|x| !x.is_finite()) {
                            return Err(dim_err(
                                part,
                                &format!("attr_feats[{k}]"),
                                format!("expected {d} finite values, got {}", v.len()),
                            ));
                        }
                    }
                    (None, false) => {}
                }
            }
            for e in &c.edge_pixels {
                if !(e.strg_e >= 0.0 && e.d_min >= 0.0 && e.theta_e.is_finite()) {
                    return Err(dim_err(part, "edge_pixels", "negative strength or distance".into()));
                }
            }
        }
    }
    if let Some(gt) = &inst.ground_truth {
        if gt.pose.len() != m {
            return Err(dim_err(
                0,
                "ground_truth.pose",
                format!("{} boxes for {m} parts", gt.pose.len()),
            ));
        }
        if gt.attribute_groups.is_empty() {
            return Err(dim_err(
                0,
                "ground_truth.attribute_groups",
                "needs at least one group".into(),
            ));
        }
        for g in &gt.attribute_groups {
            if g.len() != n {
                return Err(dim_err(
                    0,
                    "ground_truth.attribute_groups",
                    format!("group has {} values", g.len()),
                ));
            }
            for (k, v) in g.iter().enumerate() {
                if let Some(v) = v {
                    if *v >= spec.attributes.cardinalities[k] {
                        return Err(InstanceError::IndexOutOfRange(format!(
                            "instance {}: value {} of attribute {k}",
                            inst.id,
                            v + 1
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn instance_to_record(inst: &Instance) -> InstanceRecord {
    InstanceRecord {
        id: inst.id.clone(),
        image_width: inst.image_width,
        image_height: inst.image_height,
        ensembles: inst
            .ensembles
            .iter()
            .map(|list| {
                list.iter()
                    .map(|c| CandidateRecord {
                        x: c.geom.x,
                        y: c.geom.y,
                        theta: c.geom.theta,
                        s: c.geom.s,
                        unary: c.unary.clone(),
                        hist_rgb: c.hist_rgb.clone(),
                        hist_lab: c.hist_lab.clone(),
                        attr_feats: c
                            .attr_feats
                            .iter()
                            .enumerate()
                            .filter_map(|(k, f)| f.clone().map(|v| (k, v)))
                            .collect(),
                        edge_pixels: c
                            .edge_pixels
                            .iter()
                            .map(|e| EdgePixelRecord {
                                theta_e: e.theta_e,
                                strg_e: e.strg_e,
                                d_min: Some(e.d_min),
                                x: None,
                                y: None,
                            })
                            .collect(),
                    })
                    .collect()
            })
            .collect(),
        ground_truth: inst.ground_truth.as_ref().map(|gt| GroundTruthRecord {
            pose: gt.pose.clone(),
            attribute_groups: gt
                .attribute_groups
                .iter()
                .map(|g| g.iter().map(|v| v.map(|x| x + 1)).collect())
                .collect(),
        }),
    }
}

/// Serializes instances in the given order.
pub fn dataset_to_string(instances: &[Instance], spec: &ModelSpec) -> String {
    let file = DatasetFile {
        header: DatasetHeader::for_model(spec),
        instances: instances.iter().map(instance_to_record).collect(),
    };
    serde_json::to_string(&file).expect("dataset serializes")
}

pub fn save_dataset(path: &Path, instances: &[Instance], spec: &ModelSpec) -> Result<(), InstanceError> {
    fs::write(path, dataset_to_string(instances, spec)).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}
