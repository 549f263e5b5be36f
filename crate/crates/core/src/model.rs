//! Fixed structure of the joint model: the part tree, symmetric pairs and the
//! super-node tree they induce, garment attributes with their part
//! dependencies, and the block layout of the joint feature / weight vector.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// 3x3 relative-position one-hot.
pub const POSITION_BINS: usize = 9;
/// 18 degree rotation bins over the full circle.
pub const ROTATION_BINS: usize = 20;
/// Relative position + relative rotation + centre distance.
pub const DEFORMATION_DIM: usize = POSITION_BINS + ROTATION_BINS + 1;
/// One chi-squared divergence per colour space (RGB, LAB).
pub const CONSISTENCY_DIM: usize = 2;

/// Default box width as a fraction of the box length.
pub const DEFAULT_WIDTH_RATIO: f64 = 1.0 / 3.0;

pub const DEFAULT_PART_NAMES: [&str; 6] = ["torso", "RU.arm", "LU.arm", "RL.arm", "LL.arm", "head"];
pub const DEFAULT_ATTRIBUTE_NAMES: [&str; 5] = ["Collar", "Color", "Neckline", "Pattern", "Sleeve"];
pub const DEFAULT_CARDINALITIES: [usize; 5] = [4, 8, 4, 5, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartGraph {
    pub part_names: Vec<String>,
    /// Ordered `(parent, child)` pairs.
    pub tree_edges: Vec<(usize, usize)>,
    pub symmetric_pairs: Vec<(usize, usize)>,
    pub root: usize,
}

impl PartGraph {
    pub fn part_count(&self) -> usize {
        self.part_names.len()
    }

    /// Parent of every part in the rooted tree (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.part_count()];
        for &(p, c) in &self.tree_edges {
            if c < parents.len() {
                parents[c] = Some(p);
            }
        }
        parents
    }

    /// Index of the tree edge joining `a` and `b`, in either orientation.
    pub fn tree_edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.tree_edges
            .iter()
            .position(|&(p, c)| (p == a && c == b) || (p == b && c == a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperNodeTree {
    /// Part sets, each a singleton or a symmetric pair, sorted ascending.
    pub super_nodes: Vec<Vec<usize>>,
    /// `(parent, child)` pairs over super-node indices.
    pub super_edges: Vec<(usize, usize)>,
    pub root: usize,
}

impl SuperNodeTree {
    /// Collapses every symmetric pair of `graph` into one node and projects the
    /// part tree onto the collapsed nodes. Super-nodes are ordered by their
    /// smallest part index.
    pub fn derive(graph: &PartGraph) -> SuperNodeTree {
        let m = graph.part_count();
        let mut node_of = vec![usize::MAX; m];
        let mut nodes: Vec<Vec<usize>> = Vec::new();
        for part in 0..m {
            if node_of[part] != usize::MAX {
                continue;
            }
            let partner = graph.symmetric_pairs.iter().find_map(|&(a, b)| {
                if a == part {
                    Some(b)
                } else if b == part {
                    Some(a)
                } else {
                    None
                }
            });
            let mut members = vec![part];
            if let Some(other) = partner.filter(|&o| o < m && node_of[o] == usize::MAX) {
                members.push(other);
            }
            members.sort_unstable();
            for &p in &members {
                node_of[p] = nodes.len();
            }
            nodes.push(members);
        }

        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &(p, c) in &graph.tree_edges {
            if p >= m || c >= m {
                continue;
            }
            let (sp, sc) = (node_of[p], node_of[c]);
            if sp != sc && !edges.contains(&(sp, sc)) {
                edges.push((sp, sc));
            }
        }
        edges.sort_unstable();
        let root = if graph.root < m { node_of[graph.root] } else { 0 };
        SuperNodeTree {
            super_nodes: nodes,
            super_edges: edges,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.super_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.super_nodes.is_empty()
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.super_edges
            .iter()
            .filter(move |&&(p, _)| p == node)
            .map(|&(_, c)| c)
    }

    /// Super-node indices ordered so every child precedes its parent.
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
            } else {
                stack.push((node, true));
                let kids: Vec<usize> = self.children(node).collect();
                for &k in kids.iter().rev() {
                    stack.push((k, false));
                }
            }
        }
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Shape,
    Color,
    Texture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub names: Vec<String>,
    pub cardinalities: Vec<usize>,
    /// Parts each attribute depends on, sorted ascending.
    pub dependency: Vec<Vec<usize>>,
    pub feature_kind: Vec<FeatureKind>,
    /// Length of the per-candidate descriptor stored for the attribute.
    pub feature_dims: Vec<usize>,
    /// Undirected edges of the attribute co-occurrence tree.
    pub tree_edges: Vec<(usize, usize)>,
}

impl AttributeSpec {
    pub fn count(&self) -> usize {
        self.names.len()
    }

    /// Length of `F_k`: one stored descriptor per dependent part.
    pub fn cross_input_dim(&self, k: usize) -> usize {
        self.dependency[k].len() * self.feature_dims[k]
    }

    pub fn depends_on(&self, k: usize, part: usize) -> bool {
        self.dependency[k].contains(&part)
    }

    /// Attribute tree rooted at attribute 0, as `(parent, child, edge index)`
    /// in BFS order.
    pub fn rooted_edges(&self) -> Vec<(usize, usize, usize)> {
        let n = self.count();
        let mut seen = vec![false; n];
        let mut out = Vec::with_capacity(n.saturating_sub(1));
        if n == 0 {
            return out;
        }
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(node) = queue.pop_front() {
            for (e, &(a, b)) in self.tree_edges.iter().enumerate() {
                let other = if a == node {
                    b
                } else if b == node {
                    a
                } else {
                    continue;
                };
                if other < n && !seen[other] {
                    seen[other] = true;
                    out.push((node, other, e));
                    queue.push_back(other);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockId {
    Unary(usize),
    Deformation(usize),
    Consistency(usize),
    Cooccurrence(usize),
    Cross(usize),
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::Unary(i) => write!(f, "unary[{i}]"),
            BlockId::Deformation(e) => write!(f, "deformation[{e}]"),
            BlockId::Consistency(s) => write!(f, "consistency[{s}]"),
            BlockId::Cooccurrence(e) => write!(f, "cooccurrence[{e}]"),
            BlockId::Cross(k) => write!(f, "cross[{k}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub offset: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Contiguous block layout of the joint feature vector. Blocks appear in the
/// order unary (per part), deformation (per tree edge), consistency (per
/// symmetric pair), co-occurrence (per attribute edge), cross (per attribute).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<Block>,
    pub total: usize,
}

impl FeatureLayout {
    pub fn build(parts: &PartGraph, attrs: &AttributeSpec, unary_dim: usize) -> FeatureLayout {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |id: BlockId, len: usize| {
            blocks.push(Block { id, offset, len });
            offset += len;
        };
        for i in 0..parts.part_count() {
            push(BlockId::Unary(i), unary_dim);
        }
        for e in 0..parts.tree_edges.len() {
            push(BlockId::Deformation(e), DEFORMATION_DIM);
        }
        for s in 0..parts.symmetric_pairs.len() {
            push(BlockId::Consistency(s), CONSISTENCY_DIM);
        }
        for (e, &(k, l)) in attrs.tree_edges.iter().enumerate() {
            let len =
                attrs.cardinalities.get(k).copied().unwrap_or(0) * attrs.cardinalities.get(l).copied().unwrap_or(0);
            push(BlockId::Cooccurrence(e), len);
        }
        for k in 0..attrs.count() {
            let f = attrs.dependency[k].len() * attrs.feature_dims[k];
            push(BlockId::Cross(k), f * attrs.cardinalities[k]);
        }
        FeatureLayout { blocks, total: offset }
    }

    pub fn find(&self, id: BlockId) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    /// Range of a block. Panics if the block is not part of the layout.
    pub fn range(&self, id: BlockId) -> Range<usize> {
        self.find(id)
            .unwrap_or_else(|| panic!("block {id} not in layout"))
            .range()
    }

    /// Block owning weight index `index`.
    pub fn block_of(&self, index: usize) -> Option<&Block> {
        self.blocks
            .iter()
            .find(|b| b.offset <= index && index < b.offset + b.len)
    }

    /// Checksum of the block structure, stored in weight-file headers.
    pub fn checksum(&self) -> u64 {
        let mut hasher = Sha256::new();
        for b in &self.blocks {
            hasher.update(format!("{}:{}:{};", b.id, b.offset, b.len).as_bytes());
        }
        hasher.update(self.total.to_le_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub parts: PartGraph,
    pub super_nodes: SuperNodeTree,
    pub attributes: AttributeSpec,
    pub unary_dim: usize,
    pub hist_dim: usize,
    /// Box width divided by box length, per part.
    pub width_ratio: Vec<f64>,
    pub layout: FeatureLayout,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelViolation {
    #[error("part tree has a cycle ({edges} edges over {parts} parts)")]
    CyclicTree { edges: usize, parts: usize },
    #[error("part tree does not reach part {part} from the root")]
    DisconnectedTree { part: usize },
    #[error("{context} references part {part}, but the model has {parts} parts")]
    DanglingPartIndex { context: String, part: usize, parts: usize },
    #[error("{context} references attribute {attribute}, but the model has {attributes} attributes")]
    DanglingAttributeIndex {
        context: String,
        attribute: usize,
        attributes: usize,
    },
    #[error("part {part} has more than one parent in the tree")]
    MultipleParents { part: usize },
    #[error("part {part} appears in more than one symmetric pair")]
    OverlappingSymmetricPairs { part: usize },
    #[error("symmetric pair ({0}, {1}) is degenerate or also a tree edge")]
    InvalidSymmetricPair(usize, usize),
    #[error("root part {0} may not belong to a symmetric pair")]
    SymmetricRoot(usize),
    #[error("super-node tree is not the collapse of the part tree: {0}")]
    SuperNodeMismatch(String),
    #[error("attribute tree is not a spanning tree: {0}")]
    InvalidAttributeTree(String),
    #[error("feature blocks overlap or leave gaps: {0}")]
    OverlappingBlocks(String),
    #[error("{0} must be positive")]
    ZeroDimension(String),
    #[error("{0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid model: {}", format_violations(.0))]
    Invalid(Vec<ModelViolation>),
}

fn format_violations(v: &[ModelViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl ModelSpec {
    /// The six-part upper-body model with the five garment attributes of the
    /// default dependency table. `attr_feature_dims` gives the per-part
    /// descriptor length for Collar, Color, Neckline, Pattern and Sleeve.
    pub fn default_model(unary_dim: usize, hist_dim: usize, attr_feature_dims: [usize; 5]) -> ModelSpec {
        Self::default_model_with_cardinalities(unary_dim, hist_dim, attr_feature_dims, DEFAULT_CARDINALITIES)
    }

    pub fn default_model_with_cardinalities(
        unary_dim: usize,
        hist_dim: usize,
        attr_feature_dims: [usize; 5],
        cardinalities: [usize; 5],
    ) -> ModelSpec {
        let parts = PartGraph {
            part_names: DEFAULT_PART_NAMES.iter().map(|s| s.to_string()).collect(),
            tree_edges: vec![(0, 5), (0, 1), (0, 2), (1, 3), (2, 4)],
            symmetric_pairs: vec![(1, 2), (3, 4)],
            root: 0,
        };
        let attributes = AttributeSpec {
            names: DEFAULT_ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect(),
            cardinalities: cardinalities.to_vec(),
            dependency: vec![vec![0, 5], vec![0], vec![0, 5], vec![0], vec![1, 2, 3, 4]],
            feature_kind: vec![
                FeatureKind::Shape,
                FeatureKind::Color,
                FeatureKind::Shape,
                FeatureKind::Texture,
                FeatureKind::Color,
            ],
            feature_dims: attr_feature_dims.to_vec(),
            tree_edges: vec![(0, 1), (1, 2), (2, 3), (3, 4)],
        };
        Self::new(parts, attributes, unary_dim, hist_dim)
    }

    /// Assembles a model, deriving the super-node tree and feature layout.
    /// Call [`ModelSpec::validate`] before using a hand-built structure.
    pub fn new(parts: PartGraph, attributes: AttributeSpec, unary_dim: usize, hist_dim: usize) -> ModelSpec {
        let super_nodes = SuperNodeTree::derive(&parts);
        let layout = FeatureLayout::build(&parts, &attributes, unary_dim);
        let width_ratio = vec![DEFAULT_WIDTH_RATIO; parts.part_count()];
        ModelSpec {
            parts,
            super_nodes,
            attributes,
            unary_dim,
            hist_dim,
            width_ratio,
            layout,
        }
    }

    pub fn part_count(&self) -> usize {
        self.parts.part_count()
    }

    pub fn attribute_count(&self) -> usize {
        self.attributes.count()
    }

    pub fn dim(&self) -> usize {
        self.layout.total
    }

    /// Checks every structural invariant, returning all violations found.
    pub fn validate(&self) -> Result<(), Vec<ModelViolation>> {
        let mut out = Vec::new();
        self.check_parts(&mut out);
        self.check_attributes(&mut out);
        if out.is_empty() {
            self.check_super_nodes(&mut out);
            self.check_layout(&mut out);
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    fn check_parts(&self, out: &mut Vec<ModelViolation>) {
        let g = &self.parts;
        let m = g.part_count();
        if m == 0 {
            out.push(ModelViolation::ZeroDimension("part count".into()));
            return;
        }
        if self.unary_dim == 0 {
            out.push(ModelViolation::ZeroDimension("unary_dim".into()));
        }
        if self.hist_dim == 0 {
            out.push(ModelViolation::ZeroDimension("hist_dim".into()));
        }
        if self.width_ratio.len() != m {
            out.push(ModelViolation::ShapeMismatch(format!(
                "width_ratio has {} entries for {m} parts",
                self.width_ratio.len()
            )));
        } else if let Some(r) = self.width_ratio.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            out.push(ModelViolation::ShapeMismatch(format!(
                "width ratio {r} is not positive"
            )));
        }
        let dangling = |ctx: &str, p: usize| ModelViolation::DanglingPartIndex {
            context: ctx.to_string(),
            part: p,
            parts: m,
        };
        if g.root >= m {
            out.push(dangling("root", g.root));
        }
        let mut bad_index = false;
        for &(p, c) in &g.tree_edges {
            for x in [p, c] {
                if x >= m {
                    out.push(dangling("tree edge", x));
                    bad_index = true;
                }
            }
        }
        for &(a, b) in &g.symmetric_pairs {
            for x in [a, b] {
                if x >= m {
                    out.push(dangling("symmetric pair", x));
                    bad_index = true;
                }
            }
        }
        if bad_index || g.root >= m {
            return;
        }

        if g.tree_edges.len() >= m {
            out.push(ModelViolation::CyclicTree {
                edges: g.tree_edges.len(),
                parts: m,
            });
        } else {
            // union-find cycle check
            let mut uf: Vec<usize> = (0..m).collect();
            fn find(uf: &mut [usize], x: usize) -> usize {
                let mut r = x;
                while uf[r] != r {
                    r = uf[r];
                }
                uf[x] = r;
                r
            }
            for &(p, c) in &g.tree_edges {
                let (rp, rc) = (find(&mut uf, p), find(&mut uf, c));
                if rp == rc {
                    out.push(ModelViolation::CyclicTree {
                        edges: g.tree_edges.len(),
                        parts: m,
                    });
                    break;
                }
                uf[rp] = rc;
            }
        }
        let mut parent_count = vec![0usize; m];
        for &(_, c) in &g.tree_edges {
            parent_count[c] += 1;
        }
        for (part, &n) in parent_count.iter().enumerate() {
            if n > 1 {
                out.push(ModelViolation::MultipleParents { part });
            }
        }
        if parent_count[g.root] > 0 {
            out.push(ModelViolation::MultipleParents { part: g.root });
        }
        // reachability from root along parent->child edges
        let mut reached = vec![false; m];
        reached[g.root] = true;
        let mut frontier = vec![g.root];
        while let Some(p) = frontier.pop() {
            for &(a, b) in &g.tree_edges {
                if a == p && !reached[b] {
                    reached[b] = true;
                    frontier.push(b);
                }
            }
        }
        if let Some(part) = reached.iter().position(|r| !r) {
            out.push(ModelViolation::DisconnectedTree { part });
        }

        let mut seen = BTreeSet::new();
        for &(a, b) in &g.symmetric_pairs {
            if a == b || g.tree_edge_between(a, b).is_some() {
                out.push(ModelViolation::InvalidSymmetricPair(a, b));
            }
            for x in [a, b] {
                if !seen.insert(x) {
                    out.push(ModelViolation::OverlappingSymmetricPairs { part: x });
                }
            }
            if a == g.root || b == g.root {
                out.push(ModelViolation::SymmetricRoot(g.root));
            }
        }
    }

    fn check_attributes(&self, out: &mut Vec<ModelViolation>) {
        let a = &self.attributes;
        let n = a.count();
        let m = self.part_count();
        if a.cardinalities.len() != n
            || a.dependency.len() != n
            || a.feature_kind.len() != n
            || a.feature_dims.len() != n
        {
            out.push(ModelViolation::ShapeMismatch(format!(
                "attribute tables disagree on attribute count {n}"
            )));
            return;
        }
        for k in 0..n {
            if a.cardinalities[k] == 0 {
                out.push(ModelViolation::ZeroDimension(format!("cardinality of {}", a.names[k])));
            }
            if a.feature_dims[k] == 0 {
                out.push(ModelViolation::ZeroDimension(format!("feature dim of {}", a.names[k])));
            }
            if a.dependency[k].is_empty() {
                out.push(ModelViolation::ShapeMismatch(format!(
                    "{} depends on no part",
                    a.names[k]
                )));
            }
            if a.dependency[k].windows(2).any(|w| w[0] >= w[1]) {
                out.push(ModelViolation::ShapeMismatch(format!(
                    "dependency of {} must be strictly ascending",
                    a.names[k]
                )));
            }
            for &p in &a.dependency[k] {
                if p >= m {
                    out.push(ModelViolation::DanglingPartIndex {
                        context: format!("dependency of {}", a.names[k]),
                        part: p,
                        parts: m,
                    });
                }
            }
        }
        if n == 0 {
            return;
        }
        for &(k, l) in &a.tree_edges {
            for x in [k, l] {
                if x >= n {
                    out.push(ModelViolation::DanglingAttributeIndex {
                        context: "attribute tree edge".into(),
                        attribute: x,
                        attributes: n,
                    });
                    return;
                }
            }
        }
        if a.tree_edges.len() != n - 1 {
            out.push(ModelViolation::InvalidAttributeTree(format!(
                "{} edges over {n} attributes",
                a.tree_edges.len()
            )));
            return;
        }
        if a.rooted_edges().len() != n - 1 {
            out.push(ModelViolation::InvalidAttributeTree("not connected".into()));
        }
    }

    fn check_super_nodes(&self, out: &mut Vec<ModelViolation>) {
        let derived = SuperNodeTree::derive(&self.parts);
        if derived != self.super_nodes {
            out.push(ModelViolation::SuperNodeMismatch(
                "stored super-node tree differs from the derived one".into(),
            ));
            return;
        }
        let s = derived.len();
        if derived.super_edges.len() + 1 != s {
            out.push(ModelViolation::SuperNodeMismatch(format!(
                "{} super-edges over {s} super-nodes",
                derived.super_edges.len()
            )));
            return;
        }
        let mut parents = vec![0usize; s];
        for &(_, c) in &derived.super_edges {
            parents[c] += 1;
        }
        if parents
            .iter()
            .enumerate()
            .any(|(i, &n)| if i == derived.root { n != 0 } else { n != 1 })
        {
            out.push(ModelViolation::SuperNodeMismatch(
                "collapsed structure is not a rooted tree".into(),
            ));
        }
    }

    fn check_layout(&self, out: &mut Vec<ModelViolation>) {
        let mut next = 0;
        for b in &self.layout.blocks {
            if b.offset != next {
                out.push(ModelViolation::OverlappingBlocks(format!(
                    "{} starts at {} but the previous block ends at {next}",
                    b.id, b.offset
                )));
                return;
            }
            next = b.offset + b.len;
        }
        if next != self.layout.total {
            out.push(ModelViolation::OverlappingBlocks(format!(
                "blocks end at {next}, total is {}",
                self.layout.total
            )));
            return;
        }
        let expected = FeatureLayout::build(&self.parts, &self.attributes, self.unary_dim);
        if expected != self.layout {
            out.push(ModelViolation::OverlappingBlocks(
                "layout does not match the model structure".into(),
            ));
        }
    }

    /// Canonical serialized form: pretty JSON with fields in declaration order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelSpec, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads and validates a model file.
    pub fn load(path: &Path) -> Result<ModelSpec, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec = Self::from_json(&text)?;
        spec.validate().map_err(ModelError::Invalid)?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_canonical_json() + "\n").map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash_hex(&self) -> String {
        self.hash_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.to_canonical_json().as_bytes()).into()
    }

    /// Symmetric pair index holding `part`, if any.
    pub fn symmetric_pair_of(&self, part: usize) -> Option<usize> {
        self.parts
            .symmetric_pairs
            .iter()
            .position(|&(a, b)| a == part || b == part)
    }
}
