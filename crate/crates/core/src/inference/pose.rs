//! Exact pose inference for fixed attributes: max-product on the super-node
//! tree, where each symmetric pair is a single variable over `K_a·K_b`
//! configurations.

use super::{check_attrs, check_instance, InferenceError, Objective};
use crate::edge_energy::edge_scores;
use crate::features::{consistency_values, cross_weight_segment, relative_geometry, FeatureError};
use crate::instance::Instance;
use crate::model::{BlockId, ModelSpec, DEFORMATION_DIM, POSITION_BINS};

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSolution {
    pub pose: Vec<usize>,
    /// Optimum of `w_p·J_p + α Q + w_pc·J_pc(·, c)`; cross terms are absent
    /// when no attributes were given.
    pub score: f64,
}

/// DP tables for one instance. Configurations of a pair super-node `{a, b}`
/// (`a < b`) are indexed `p_a * K_b + p_b`.
#[derive(Debug, Clone)]
pub struct MessageTable {
    /// Configuration-space size per super-node.
    pub sizes: Vec<usize>,
    /// `m(p_I)`: unary, edge energy, consistency and node-local cross terms.
    pub local: Vec<Vec<f64>>,
    /// `B_I(p_J)` for each non-root super-node `I` over its parent's
    /// configurations; empty for the root.
    pub messages: Vec<Vec<f64>>,
    /// Best configuration of `I` for each parent configuration.
    pub backpointers: Vec<Vec<usize>>,
}

struct Potentials {
    sizes: Vec<usize>,
    /// Per part, per candidate.
    node: Vec<Vec<f64>>,
    /// Per tree edge `(parent, child)`, row-major `[p_parent * K_child + p_child]`.
    edge: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn potentials(obj: &Objective, inst: &Instance, attrs: Option<&[usize]>) -> Result<Potentials, InferenceError> {
    let spec = obj.spec;
    let w = obj.weights;
    let sizes: Vec<usize> = inst.ensembles.iter().map(Vec::len).collect();

    let mut node: Vec<Vec<f64>> = inst
        .ensembles
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let wu = &w[spec.layout.range(BlockId::Unary(i))];
            list.iter()
                .map(|c| {
                    let mut s = dot(wu, &c.unary);
                    if obj.alpha != 0.0 {
                        s += obj.alpha * edge_scores(c).energy(obj.beta);
                    }
                    s
                })
                .collect()
        })
        .collect();

    let diag = inst.diagonal();
    let mut edge: Vec<Vec<f64>> = spec
        .parts
        .tree_edges
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let wd = &w[spec.layout.range(BlockId::Deformation(e))];
            let ratio = spec.width_ratio[j];
            let mut t = Vec::with_capacity(sizes[i] * sizes[j]);
            for ci in &inst.ensembles[i] {
                for cj in &inst.ensembles[j] {
                    let g = relative_geometry(&ci.geom, &cj.geom, ratio, diag);
                    t.push(wd[g.position] + wd[POSITION_BINS + g.rotation] + wd[DEFORMATION_DIM - 1] * g.distance);
                }
            }
            t
        })
        .collect();

    if let Some(c) = attrs {
        for (k, &ck) in c.iter().enumerate() {
            let deps = &spec.attributes.dependency[k];
            // per dependent part, per candidate: its share of the cross score
            let mut shares: Vec<Vec<f64>> = Vec::with_capacity(deps.len());
            for (j, &part) in deps.iter().enumerate() {
                let seg = cross_weight_segment(spec, w, k, ck, j);
                let mut row = Vec::with_capacity(sizes[part]);
                for (idx, cand) in inst.ensembles[part].iter().enumerate() {
                    let f = cand.attr_feature(k).ok_or(FeatureError::MissingAttrFeature {
                        part,
                        candidate: idx,
                        attribute: k,
                    })?;
                    row.push(dot(seg, f));
                }
                shares.push(row);
            }
            match edge_attachment(spec, deps) {
                Some(e) => {
                    // attributes spanning exactly a parent-child pair of
                    // singleton super-nodes live on that edge's table
                    let (pa, ch) = spec.parts.tree_edges[e];
                    let sa = &shares[deps.iter().position(|&p| p == pa).unwrap()];
                    let sc = &shares[deps.iter().position(|&p| p == ch).unwrap()];
                    let kc = sizes[ch];
                    for (a, va) in sa.iter().enumerate() {
                        for (b, vb) in sc.iter().enumerate() {
                            edge[e][a * kc + b] += va + vb;
                        }
                    }
                }
                None => {
                    for (j, &part) in deps.iter().enumerate() {
                        for (v, s) in node[part].iter_mut().zip(&shares[j]) {
                            *v += s;
                        }
                    }
                }
            }
        }
    }
    Ok(Potentials { sizes, node, edge })
}

/// Tree edge carrying attribute cross terms whose parts are exactly two
/// singleton super-nodes joined by a super-edge.
fn edge_attachment(spec: &ModelSpec, deps: &[usize]) -> Option<usize> {
    if deps.len() != 2 {
        return None;
    }
    let singleton = |p: usize| spec.symmetric_pair_of(p).is_none();
    if !singleton(deps[0]) || !singleton(deps[1]) {
        return None;
    }
    spec.parts.tree_edge_between(deps[0], deps[1])
}

/// Values of a super-node's parts in configuration `cfg`.
#[inline]
fn decode_cfg(parts: &[usize], sizes: &[usize], cfg: usize) -> [usize; 2] {
    if parts.len() == 1 {
        [cfg, 0]
    } else {
        [cfg / sizes[parts[1]], cfg % sizes[parts[1]]]
    }
}

#[inline]
fn part_value(parts: &[usize], values: [usize; 2], part: usize) -> usize {
    if parts[0] == part {
        values[0]
    } else {
        values[1]
    }
}

pub fn build_message_table(
    obj: &Objective,
    inst: &Instance,
    attrs: Option<&[usize]>,
) -> Result<MessageTable, InferenceError> {
    check_instance(inst, obj.spec)?;
    if let Some(c) = attrs {
        check_attrs(obj.spec, c)?;
    }
    Ok(run_dp(obj, inst, attrs)?.0)
}

/// Exact argmax over poses of `w_p·J_p + αQ + w_pc·J_pc(x, p, c)`. With
/// `attrs = None` the cross terms are dropped. Ties go to the smallest
/// candidate indices, decided root first.
pub fn infer_pose_given_attrs(
    obj: &Objective,
    inst: &Instance,
    attrs: Option<&[usize]>,
) -> Result<PoseSolution, InferenceError> {
    check_instance(inst, obj.spec)?;
    if let Some(c) = attrs {
        check_attrs(obj.spec, c)?;
    }
    let (table, root_best, score) = run_dp(obj, inst, attrs)?;
    let sizes = inst.ensemble_sizes();
    let spec = obj.spec;
    let tree = &spec.super_nodes;
    let mut cfg = vec![usize::MAX; tree.len()];
    cfg[tree.root] = root_best;
    let mut stack = vec![tree.root];
    while let Some(node) = stack.pop() {
        for child in tree.children(node) {
            cfg[child] = table.backpointers[child][cfg[node]];
            stack.push(child);
        }
    }
    let mut pose = vec![0; spec.part_count()];
    for (s, parts) in tree.super_nodes.iter().enumerate() {
        let vals = decode_cfg(parts, &sizes, cfg[s]);
        for (slot, &p) in parts.iter().enumerate() {
            pose[p] = vals[slot];
        }
    }
    Ok(PoseSolution { pose, score })
}

/// Tables plus the best root configuration and the optimal score.
fn run_dp(
    obj: &Objective,
    inst: &Instance,
    attrs: Option<&[usize]>,
) -> Result<(MessageTable, usize, f64), InferenceError> {
    let spec = obj.spec;
    let tree = &spec.super_nodes;
    let pot = potentials(obj, inst, attrs)?;
    let k = &pot.sizes;
    let parents = spec.parts.parents();

    let sizes: Vec<usize> = tree
        .super_nodes
        .iter()
        .map(|parts| parts.iter().map(|&p| k[p]).product())
        .collect();

    // m(p_I)
    let local: Vec<Vec<f64>> = tree
        .super_nodes
        .iter()
        .map(|parts| match parts.as_slice() {
            [a] => pot.node[*a].clone(),
            [a, b] => {
                let pair = spec.symmetric_pair_of(*a).expect("pair super-node");
                let (first, _) = spec.parts.symmetric_pairs[pair];
                let wc = &obj.weights[spec.layout.range(BlockId::Consistency(pair))];
                let mut out = Vec::with_capacity(k[*a] * k[*b]);
                for (pa, ca) in inst.ensembles[*a].iter().enumerate() {
                    for (pb, cb) in inst.ensembles[*b].iter().enumerate() {
                        let v = if first == *a {
                            consistency_values(ca, cb)
                        } else {
                            consistency_values(cb, ca)
                        };
                        out.push(pot.node[*a][pa] + pot.node[*b][pb] + dot(wc, &v));
                    }
                }
                out
            }
            _ => unreachable!("super-nodes hold one or two parts"),
        })
        .collect();

    let mut messages: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    let mut backpointers: Vec<Vec<usize>> = vec![Vec::new(); tree.len()];
    let mut parent_of = vec![usize::MAX; tree.len()];
    for &(p, c) in &tree.super_edges {
        parent_of[c] = p;
    }

    for node in tree.post_order() {
        // M_I = m_I + sum of child messages
        let mut total = local[node].clone();
        for child in tree.children(node) {
            for (t, m) in total.iter_mut().zip(&messages[child]) {
                *t += m;
            }
        }
        if node == tree.root {
            messages[node] = total;
            continue;
        }
        let parent = parent_of[node];
        let pparts = &tree.super_nodes[parent];
        let cparts = &tree.super_nodes[node];
        let psize = sizes[parent];
        let mut msg = vec![f64::NEG_INFINITY; psize];
        let mut bp = vec![0usize; psize];
        match cparts.as_slice() {
            [b] => {
                let x = parents[*b].expect("child part has a parent");
                let e = spec.parts.tree_edge_between(x, *b).unwrap();
                let kb = k[*b];
                let table = &pot.edge[e];
                // g(p_x) = max_b M(b) + E(x, b)
                let mut g = vec![f64::NEG_INFINITY; k[x]];
                let mut ga = vec![0usize; k[x]];
                for px in 0..k[x] {
                    let row = &table[px * kb..(px + 1) * kb];
                    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                    for (pb, (m, e)) in total.iter().zip(row).enumerate() {
                        let v = m + e;
                        if v > best {
                            best = v;
                            arg = pb;
                        }
                    }
                    g[px] = best;
                    ga[px] = arg;
                }
                for cfg in 0..psize {
                    let px = part_value(pparts, decode_cfg(pparts, k, cfg), x);
                    msg[cfg] = g[px];
                    bp[cfg] = ga[px];
                }
            }
            [b1, b2] => {
                let (b1, b2) = (*b1, *b2);
                let x1 = parents[b1].expect("child part has a parent");
                let x2 = parents[b2].expect("child part has a parent");
                let e1 = &pot.edge[spec.parts.tree_edge_between(x1, b1).unwrap()];
                let e2 = &pot.edge[spec.parts.tree_edge_between(x2, b2).unwrap()];
                let (k1, k2) = (k[b1], k[b2]);
                // eliminate b2: A(p_x2, p_b1) = max_b2 M(b1, b2) + E2(x2, b2)
                let mut a = vec![f64::NEG_INFINITY; k[x2] * k1];
                let mut a_arg = vec![0usize; k[x2] * k1];
                for px2 in 0..k[x2] {
                    let erow = &e2[px2 * k2..(px2 + 1) * k2];
                    for pb1 in 0..k1 {
                        let mrow = &total[pb1 * k2..(pb1 + 1) * k2];
                        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                        for (pb2, (m, e)) in mrow.iter().zip(erow).enumerate() {
                            let v = m + e;
                            if v > best {
                                best = v;
                                arg = pb2;
                            }
                        }
                        a[px2 * k1 + pb1] = best;
                        a_arg[px2 * k1 + pb1] = arg;
                    }
                }
                // eliminate b1
                if x1 == x2 {
                    let x = x1;
                    let mut g = vec![f64::NEG_INFINITY; k[x]];
                    let mut ga = vec![0usize; k[x]];
                    for px in 0..k[x] {
                        let arow = &a[px * k1..(px + 1) * k1];
                        let erow = &e1[px * k1..(px + 1) * k1];
                        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                        for (pb1, (av, e)) in arow.iter().zip(erow).enumerate() {
                            let v = av + e;
                            if v > best {
                                best = v;
                                arg = pb1;
                            }
                        }
                        g[px] = best;
                        ga[px] = arg * k2 + a_arg[px * k1 + arg];
                    }
                    for cfg in 0..psize {
                        let px = part_value(pparts, decode_cfg(pparts, k, cfg), x);
                        msg[cfg] = g[px];
                        bp[cfg] = ga[px];
                    }
                } else {
                    for cfg in 0..psize {
                        let vals = decode_cfg(pparts, k, cfg);
                        let px1 = part_value(pparts, vals, x1);
                        let px2 = part_value(pparts, vals, x2);
                        let arow = &a[px2 * k1..(px2 + 1) * k1];
                        let erow = &e1[px1 * k1..(px1 + 1) * k1];
                        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                        for (pb1, (av, e)) in arow.iter().zip(erow).enumerate() {
                            let v = av + e;
                            if v > best {
                                best = v;
                                arg = pb1;
                            }
                        }
                        msg[cfg] = best;
                        bp[cfg] = arg * k2 + a_arg[px2 * k1 + arg];
                    }
                }
            }
            _ => unreachable!("super-nodes hold one or two parts"),
        }
        messages[node] = msg;
        backpointers[node] = bp;
    }

    let root_total = std::mem::take(&mut messages[tree.root]);
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for (cfg, &v) in root_total.iter().enumerate() {
        if v > best {
            best = v;
            arg = cfg;
        }
    }
    Ok((
        MessageTable {
            sizes,
            local,
            messages,
            backpointers,
        },
        arg,
        best,
    ))
}
