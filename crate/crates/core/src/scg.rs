//! Leaf-to-root evaluation over decompositions whose large torsos are planar.
//!
//! Each leaf `t` with parent `d` is summarized by its representative
//! signature: every navel vertex with edges on both sides is split by its
//! path gadget, the leaf side (with the heads) becomes a gadget whose
//! dangling edges are the heads' path edges in navel-vertex id order, and
//! that gadget is replaced by a single vertex of arity at most three placed
//! in the parent's torso.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::instance::{brute_force, Edge, HolantInstance, InstanceError, PortRef, Vertex};
use crate::pathgadget::{build_path_gadget, PathGadget, PathGadgetError};
use crate::planar::{default_lookup, eval_planar_matchgate_holant, trace_faces, Embedding, PlanarError, RotationSystem, WeightedGraph};
use crate::scalar::Scalar;
use crate::signature::{Signature, SignatureError};
use crate::treewidth::{check_g3_width, dp_evaluate, heuristic_td, TorsoEmbedding, TreeDecomposition, TreewidthError, UGraph};

/// Closed instances with at most this many edges are summed directly;
/// larger ones go through the incidence-graph DP.
pub const BRUTE_EDGE_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScgError {
    #[error("invalid decomposition: {0}")]
    Invalid(String),
    #[error("node {node} has a navel of {size} vertices")]
    NavelTooLarge { node: usize, size: usize },
    #[error("vertex {0} must be split but has no symmetric matchgate form")]
    NotMatchgateForm(usize),
    #[error("node {0}: no torso face holds the navel")]
    NoFace(usize),
    #[error("node {node} grew by {got} vertices, above {cap}")]
    Growth { node: usize, got: usize, cap: usize },
    #[error(transparent)]
    Planar(#[from] PlanarError),
    #[error(transparent)]
    Treewidth(#[from] TreewidthError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    PathGadget(#[from] PathGadgetError),
}

pub type Result<T> = std::result::Result<T, ScgError>;

// ===========================================================================
// Shared helpers: evaluation and vertex-level embeddings
// ===========================================================================

/// Direct summation for small instances, the incidence DP otherwise.
pub(crate) fn small_eval(inst: &HolantInstance) -> Result<(Scalar, &'static str)> {
    if inst.num_edges() <= BRUTE_EDGE_LIMIT {
        return Ok((brute_force(inst)?, "brute"));
    }
    let td = heuristic_td(&UGraph::incidence(inst));
    Ok((dp_evaluate(inst, &td)?, "dp"))
}

/// Evaluates `inst` by planar matchgates when an embedding is given.
pub(crate) fn eval_view(inst: &HolantInstance, emb: Option<&Embedding>) -> Result<(Scalar, &'static str)> {
    match emb {
        Some(e) => Ok((eval_planar_matchgate_holant(inst, e, default_lookup)?, "planar")),
        None => small_eval(inst),
    }
}

/// Port rotation for an instance whose vertex `v` sits at torso vertex
/// `keys[v]`: ports follow the torso rotation, parallel edges are bundled
/// (reversed at the larger key), self-loops come last. Ports leading to a
/// key in `skip` (apex vertices, outside the torso) follow the loops.
pub(crate) fn port_embedding(
    inst: &HolantInstance,
    keys: &[usize],
    emb: &TorsoEmbedding,
    skip: &BTreeSet<usize>,
) -> Result<Embedding> {
    let pe = inst.port_edges();
    let mut rotation = Vec::with_capacity(inst.num_vertices());
    for (v, ports) in pe.iter().enumerate() {
        let kv = keys[v];
        let ring = emb.get(&kv).map(Vec::as_slice).unwrap_or(&[]);
        let mut keyed = Vec::with_capacity(ports.len());
        for (p, e) in ports.iter().enumerate() {
            let e = e.ok_or(InstanceError::PortUnused { vertex: v, port: p })?;
            let other = inst.edges[e].other(PortRef::new(v, p));
            let kw = keys[other.vertex];
            let key = if skip.contains(&kv) {
                (0, p, p)
            } else if skip.contains(&kw) {
                (2, e, p)
            } else if other.vertex == v {
                (1, e, p)
            } else {
                let pos = ring
                    .iter()
                    .position(|&u| u == kw)
                    .ok_or_else(|| ScgError::Invalid(format!("embedding at {kv} does not list neighbour {kw}")))?;
                (0, pos, if kv < kw { e } else { usize::MAX - e })
            };
            keyed.push((key, p));
        }
        keyed.sort_unstable();
        rotation.push(keyed.into_iter().map(|(_, p)| p).collect());
    }
    Ok(Embedding { rotation })
}

fn to_rotation_system(emb: &TorsoEmbedding) -> Result<(WeightedGraph, RotationSystem, Vec<usize>)> {
    let verts: Vec<usize> = emb.keys().copied().collect();
    let local: BTreeMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut g = WeightedGraph::new(verts.len());
    let mut dart = BTreeMap::new();
    for (&u, ring) in emb {
        for &v in ring {
            if u < v {
                let lv = *local.get(&v).ok_or_else(|| ScgError::Invalid(format!("embedding lists {v} without a rotation")))?;
                let e = g.add_edge(local[&u], lv, Scalar::one());
                dart.insert((u, v), 2 * e);
                dart.insert((v, u), 2 * e + 1);
            }
        }
    }
    let mut rot = Vec::with_capacity(verts.len());
    for (&u, ring) in emb {
        let ds = ring
            .iter()
            .map(|&v| dart.get(&(u, v)).copied().ok_or_else(|| ScgError::Invalid(format!("edge {u}-{v} listed at one end only"))))
            .collect::<Result<Vec<_>>>()?;
        rot.push(ds);
    }
    Ok((g, RotationSystem { rot }, verts))
}

pub(crate) fn emb_is_planar(emb: &TorsoEmbedding) -> Result<bool> {
    let (g, r, _) = to_rotation_system(emb)?;
    Ok(trace_faces(&g, &r)?.euler_ok)
}

/// Faces as sequences of darts `(u, v)`.
pub(crate) fn vertex_faces(emb: &TorsoEmbedding) -> Result<Vec<Vec<(usize, usize)>>> {
    let (g, r, verts) = to_rotation_system(emb)?;
    let faces = trace_faces(&g, &r)?;
    Ok(faces.faces.iter().map(|w| w.iter().map(|&d| (verts[g.tail(d)], verts[g.head(d)])).collect()).collect())
}

pub(crate) fn remove_from_embedding(emb: &mut TorsoEmbedding, gone: &BTreeSet<usize>) {
    emb.retain(|v, _| !gone.contains(v));
    for ring in emb.values_mut() {
        ring.retain(|u| !gone.contains(u));
    }
}

/// Places `center` in a face touching every target and joins it to target
/// `j` through the path `arms[j]` (listed from the center outwards). For two
/// targets the face beside the edge between them is preferred.
pub(crate) fn place_star(emb: &mut TorsoEmbedding, center: usize, targets: &[usize], arms: &[Vec<usize>]) -> Option<()> {
    let near = |j: usize| *arms[j].last().unwrap_or(&center);
    // Insertion points: `(target, predecessor in its rotation)`, in face order.
    let mut corners: Vec<(usize, Option<usize>)> = Vec::new();
    if targets.len() == 1 {
        corners.push((targets[0], emb.get(&targets[0]).and_then(|r| r.last().copied())));
    } else if !targets.is_empty() {
        let faces = vertex_faces(emb).ok()?;
        let want: BTreeSet<usize> = targets.iter().copied().collect();
        let beside = || {
            faces.iter().find_map(|f| {
                (0..f.len()).find_map(|i| {
                    let (p, a) = f[i];
                    let (_, b) = f[(i + 1) % f.len()];
                    (want.contains(&a) && want.contains(&b) && a != b).then(|| vec![(a, Some(p)), (b, Some(a))])
                })
            })
        };
        let around = || {
            faces.iter().find_map(|f| {
                let mut found = Vec::new();
                for &(p, x) in f {
                    if want.contains(&x) && !found.iter().any(|c: &(usize, Option<usize>)| c.0 == x) {
                        found.push((x, Some(p)));
                    }
                }
                (found.len() == want.len()).then_some(found)
            })
        };
        corners = if targets.len() == 2 { beside().or_else(around)? } else { around()? };
    }
    let slot = |x: usize| targets.iter().position(|&t| t == x).expect("target");
    let base = emb.clone();
    for reverse in [true, false] {
        let mut trial = base.clone();
        for &(x, pred) in &corners {
            let ring = trial.entry(x).or_default();
            let at = pred.and_then(|p| ring.iter().position(|&u| u == p)).map_or(ring.len(), |i| i + 1);
            ring.insert(at, near(slot(x)));
        }
        let mut order: Vec<usize> = corners.iter().map(|c| slot(c.0)).collect();
        if reverse {
            order.reverse();
        }
        trial.insert(center, order.iter().map(|&j| arms[j].first().copied().unwrap_or(targets[j])).collect());
        for (j, arm) in arms.iter().enumerate() {
            for (i, &a) in arm.iter().enumerate() {
                let prev = if i == 0 { center } else { arm[i - 1] };
                let next = arm.get(i + 1).copied().unwrap_or(targets[j]);
                trial.insert(a, vec![prev, next]);
            }
        }
        if emb_is_planar(&trial).unwrap_or(false) {
            *emb = trial;
            return Some(());
        }
    }
    None
}

/// Children of a node that share a navel are chained: for siblings `a < b`
/// with the same navel, `b` becomes a child of `a`. Nodes are visited in BFS
/// order from the root.
pub fn dedup_navels(t: &TreeDecomposition) -> Result<TreeDecomposition> {
    if t.nodes.is_empty() {
        return Err(ScgError::Invalid("no nodes".into()));
    }
    let bag: BTreeMap<usize, BTreeSet<usize>> = t.nodes.iter().map(|n| (n.id, n.bag.iter().copied().collect())).collect();
    if bag.len() != t.nodes.len() {
        return Err(ScgError::Invalid("duplicate node ids".into()));
    }
    let root = t.root.unwrap_or(t.nodes[0].id);
    let parent = parents(t, root)?;
    let mut children: BTreeMap<usize, BTreeSet<usize>> = bag.keys().map(|&k| (k, BTreeSet::new())).collect();
    for (&c, &p) in &parent {
        children.get_mut(&p).expect("known node").insert(c);
    }
    let navel = |c: usize, p: usize| -> BTreeSet<usize> { bag[&c].intersection(&bag[&p]).copied().collect() };
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        'again: loop {
            let kids: Vec<usize> = children[&x].iter().copied().collect();
            for i in 0..kids.len() {
                for j in i + 1..kids.len() {
                    if navel(kids[i], x) == navel(kids[j], x) {
                        children.get_mut(&x).expect("node").remove(&kids[j]);
                        children.get_mut(&kids[i]).expect("node").insert(kids[j]);
                        continue 'again;
                    }
                }
            }
            break;
        }
        queue.extend(children[&x].iter().copied());
    }
    let mut edges: Vec<(usize, usize)> =
        children.iter().flat_map(|(&p, cs)| cs.iter().map(move |&c| (p, c))).collect();
    edges.sort_unstable();
    Ok(TreeDecomposition { nodes: t.nodes.clone(), edges, root: Some(root) })
}

/// Parent of every non-root node id.
pub(crate) fn parents(t: &TreeDecomposition, root: usize) -> Result<BTreeMap<usize, usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = t.nodes.iter().map(|n| (n.id, Vec::new())).collect();
    for &(a, b) in &t.edges {
        if !adj.contains_key(&a) || !adj.contains_key(&b) {
            return Err(ScgError::Invalid(format!("tree edge ({a},{b}) names an unknown node")));
        }
        adj.get_mut(&a).expect("node").push(b);
        adj.get_mut(&b).expect("node").push(a);
    }
    if !adj.contains_key(&root) {
        return Err(ScgError::Invalid(format!("unknown root {root}")));
    }
    let mut parent = BTreeMap::new();
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        for &y in &adj[&x] {
            if seen.insert(y) {
                parent.insert(y, x);
                queue.push_back(y);
            }
        }
    }
    if seen.len() != adj.len() || t.edges.len() + 1 != adj.len() {
        return Err(ScgError::Invalid("decomposition is not a tree".into()));
    }
    Ok(parent)
}

/// Same-navel siblings remaining after [`dedup_navels`], as `(parent, a, b)`.
pub fn same_navel_siblings(t: &TreeDecomposition) -> Result<Vec<(usize, usize, usize)>> {
    let root = t.root.unwrap_or(t.nodes.first().map_or(0, |n| n.id));
    let parent = parents(t, root)?;
    let bag: BTreeMap<usize, BTreeSet<usize>> = t.nodes.iter().map(|n| (n.id, n.bag.iter().copied().collect())).collect();
    let mut out = Vec::new();
    for (&a, &pa) in &parent {
        for (&b, &pb) in parent.range(a + 1..) {
            if pa == pb {
                let na: BTreeSet<_> = bag[&a].intersection(&bag[&pa]).collect();
                let nb: BTreeSet<_> = bag[&b].intersection(&bag[&pb]).collect();
                if na == nb {
                    out.push((pa, a, b));
                }
            }
        }
    }
    Ok(out)
}

// ===========================================================================
// Working instance
// ===========================================================================

#[derive(Clone, Debug)]
struct Work {
    sigs: Vec<Signature>,
    alive: Vec<bool>,
    edges: Vec<Option<[PortRef; 2]>>,
    ports: Vec<Vec<usize>>,
}

const UNSET: usize = usize::MAX;

impl Work {
    fn new(inst: &HolantInstance) -> Self {
        let mut w = Work { sigs: Vec::new(), alive: Vec::new(), edges: Vec::new(), ports: Vec::new() };
        for v in &inst.vertices {
            w.add_vertex(v.signature.clone());
        }
        for e in &inst.edges {
            w.connect(e.a, e.b);
        }
        w
    }

    fn add_vertex(&mut self, sig: Signature) -> usize {
        self.ports.push(vec![UNSET; sig.arity()]);
        self.sigs.push(sig);
        self.alive.push(true);
        self.sigs.len() - 1
    }

    fn connect(&mut self, a: PortRef, b: PortRef) {
        let e = self.edges.len();
        self.edges.push(Some([a, b]));
        self.ports[a.vertex][a.port] = e;
        self.ports[b.vertex][b.port] = e;
    }

    fn other(&self, e: usize, at: PortRef) -> PortRef {
        let [a, b] = self.edges[e].expect("live edge");
        if a == at {
            b
        } else {
            a
        }
    }

    fn remove_vertex(&mut self, v: usize) {
        for p in 0..self.ports[v].len() {
            let e = self.ports[v][p];
            if e == UNSET {
                continue;
            }
            if let Some(ends) = self.edges[e].take() {
                for end in ends {
                    self.ports[end.vertex][end.port] = UNSET;
                }
            }
        }
        self.alive[v] = false;
    }

    /// A closed instance on `members`: `(vertex, signature, old port → new port)`.
    /// Every kept port must lead to another kept port.
    fn view(&self, members: &[(usize, Signature, Vec<Option<usize>>)]) -> Result<HolantInstance> {
        let local: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, m)| (m.0, i)).collect();
        let mut inst = HolantInstance::new();
        for m in members {
            inst.vertices.push(Vertex { signature: m.1.clone(), part: None });
        }
        let mut used = BTreeSet::new();
        for (i, (v, _, map)) in members.iter().enumerate() {
            for (p, np) in map.iter().enumerate() {
                let Some(np) = *np else { continue };
                let e = self.ports[*v][p];
                if e == UNSET {
                    return Err(ScgError::Invalid(format!("port {p} of vertex {v} is open")));
                }
                let o = self.other(e, PortRef::new(*v, p));
                let j = local.get(&o.vertex).copied();
                let onp = j.and_then(|j| members[j].2.get(o.port).copied().flatten());
                let (Some(j), Some(onp)) = (j, onp) else {
                    return Err(ScgError::Invalid(format!("edge at vertex {v} leaves the evaluated part")));
                };
                if used.insert(e) {
                    inst.edges.push(Edge { a: PortRef::new(i, np), b: PortRef::new(j, onp) });
                }
            }
        }
        Ok(inst)
    }
}

fn identity_map(sig: &Signature) -> Vec<Option<usize>> {
    (0..sig.arity()).map(Some).collect()
}

// ===========================================================================
// The leaf-contraction algorithm
// ===========================================================================

#[derive(Clone, Debug)]
struct WNode {
    bag: BTreeSet<usize>,
    emb: Option<TorsoEmbedding>,
    small: bool,
    parent: Option<usize>,
    children: BTreeSet<usize>,
    depth: usize,
    grown: usize,
}

/// The representative signature of a leaf and how it was obtained.
#[derive(Clone, Debug)]
pub struct Representative {
    pub signature: Signature,
    /// Navel vertices split by path gadgets, in id order (the signature's variables).
    pub split: Vec<usize>,
    /// Navel vertices whose edges all lead into the leaf; they move into it.
    pub absorbed: Vec<usize>,
    pub gadgets: Vec<PathGadget>,
    pub method: &'static str,
    s1: Vec<Vec<usize>>,
    members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScgStep {
    pub leaf: usize,
    pub parent: usize,
    pub navel: Vec<usize>,
    pub split: Vec<usize>,
    pub absorbed: Vec<usize>,
    pub method: String,
    pub representative: String,
    pub added: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScgOutcome {
    pub value: Scalar,
    pub steps: Vec<ScgStep>,
    pub root_method: String,
}

/// Running state of the algorithm on one instance.
#[derive(Clone, Debug)]
pub struct Scg {
    work: Work,
    nodes: BTreeMap<usize, WNode>,
    root: usize,
    h: usize,
    constant: Scalar,
    steps: Vec<ScgStep>,
}

impl Scg {
    /// Checks the decomposition (bags above `h` need planar torso
    /// embeddings, no apex sets) and chains same-navel siblings.
    pub fn new(inst: &HolantInstance, td: &TreeDecomposition, h: usize) -> Result<Self> {
        inst.validate()?;
        let report = check_g3_width(&UGraph::underlying(inst), td, h, false)?;
        if !report.passes() {
            return Err(ScgError::Invalid(report.violations.join("; ")));
        }
        let td = dedup_navels(td)?;
        let root = td.root.expect("set by dedup");
        let parent = parents(&td, root)?;
        let mut nodes = BTreeMap::new();
        for n in &td.nodes {
            nodes.insert(
                n.id,
                WNode {
                    bag: n.bag.iter().copied().collect(),
                    emb: n.embedding.clone(),
                    small: n.bag.len() <= h,
                    parent: parent.get(&n.id).copied(),
                    children: BTreeSet::new(),
                    depth: 0,
                    grown: 0,
                },
            );
        }
        for (&c, &p) in &parent {
            nodes.get_mut(&p).expect("node").children.insert(c);
        }
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            let d = nodes[&x].depth;
            let kids: Vec<usize> = nodes[&x].children.iter().copied().collect();
            for c in kids {
                nodes.get_mut(&c).expect("node").depth = d + 1;
                queue.push_back(c);
            }
        }
        // Only the torso part of an embedding is kept up to date.
        for n in nodes.values_mut() {
            if n.small {
                n.emb = None;
            }
        }
        Ok(Scg { work: Work::new(inst), nodes, root, h, constant: Scalar::one(), steps: Vec::new() })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Non-root nodes, deepest first, ties by id.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut ids: Vec<(std::cmp::Reverse<usize>, usize)> =
            self.nodes.iter().filter(|(&id, _)| id != self.root).map(|(&id, n)| (std::cmp::Reverse(n.depth), id)).collect();
        ids.sort_unstable();
        ids.into_iter().map(|(_, id)| id).collect()
    }

    /// The value of the current instance equals this scalar times `Z`.
    pub fn constant(&self) -> &Scalar {
        &self.constant
    }

    /// The current instance on the live vertices.
    pub fn current_instance(&self) -> Result<HolantInstance> {
        let members: Vec<(usize, Signature, Vec<Option<usize>>)> = (0..self.work.sigs.len())
            .filter(|&v| self.work.alive[v])
            .map(|v| (v, self.work.sigs[v].clone(), identity_map(&self.work.sigs[v])))
            .collect();
        self.work.view(&members)
    }

    pub fn steps(&self) -> &[ScgStep] {
        &self.steps
    }

    /// `f_{≤t}` for the leaf `t`, without changing the state.
    pub fn representative_signature(&self, leaf: usize) -> Result<Representative> {
        let node = self.nodes.get(&leaf).ok_or_else(|| ScgError::Invalid(format!("unknown node {leaf}")))?;
        if !node.children.is_empty() {
            return Err(ScgError::Invalid(format!("node {leaf} is not a leaf")));
        }
        let d = node.parent.ok_or_else(|| ScgError::Invalid("the root has no representative signature".into()))?;
        let pbag = &self.nodes[&d].bag;
        let navel: Vec<usize> = node.bag.intersection(pbag).copied().collect();
        if navel.len() > 3 {
            return Err(ScgError::NavelTooLarge { node: leaf, size: navel.len() });
        }
        let inner: BTreeSet<usize> = node.bag.difference(pbag).copied().collect();
        let (mut split, mut absorbed, mut s1s, mut gadgets) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for &x in &navel {
            let s1: Vec<usize> = (0..self.work.ports[x].len())
                .filter(|&p| {
                    let o = self.work.other(self.work.ports[x][p], PortRef::new(x, p));
                    o.vertex != x && inner.contains(&o.vertex)
                })
                .collect();
            if s1.is_empty() {
                continue;
            }
            if s1.len() == self.work.ports[x].len() {
                absorbed.push(x);
                continue;
            }
            let pg = build_path_gadget(&self.work.sigs[x], &s1, None).map_err(|e| match e {
                PathGadgetError::NotMatchgateForm => ScgError::NotMatchgateForm(x),
                other => other.into(),
            })?;
            split.push(x);
            s1s.push(s1);
            gadgets.push(pg);
        }
        let mut members: Vec<usize> = inner.iter().copied().chain(absorbed.iter().copied()).collect();
        members.sort_unstable();
        let build = |alpha: usize| -> Result<HolantInstance> {
            let m = split.len();
            let mut list: Vec<(usize, Signature, Vec<Option<usize>>)> =
                members.iter().map(|&v| (v, self.work.sigs[v].clone(), identity_map(&self.work.sigs[v]))).collect();
            for (j, &x) in split.iter().enumerate() {
                let bit = (alpha >> (m - 1 - j) & 1) as u8;
                let head = gadgets[j].head.pin(&[0], &[bit])?;
                let mut map = vec![None; self.work.ports[x].len()];
                for (i, &p) in s1s[j].iter().enumerate() {
                    map[p] = Some(i);
                }
                list.push((x, head, map));
            }
            self.work.view(&list)
        };
        let keys: Vec<usize> = members.iter().chain(split.iter()).copied().collect();
        let emb = match &node.emb {
            Some(t) => Some(port_embedding(&build(0)?, &keys, t, &BTreeSet::new())?),
            None => None,
        };
        let mut table = Vec::with_capacity(1 << split.len());
        let mut method = "brute";
        for alpha in 0..1usize << split.len() {
            let (z, how) = eval_view(&build(alpha)?, emb.as_ref())?;
            method = how;
            table.push(z);
        }
        Ok(Representative {
            signature: Signature::new(split.len(), table)?,
            split,
            absorbed,
            gadgets,
            method,
            s1: s1s,
            members,
        })
    }

    /// Replaces the leaf by its representative vertex in the parent.
    pub fn contract_leaf(&mut self, leaf: usize) -> Result<&ScgStep> {
        let rep = self.representative_signature(leaf)?;
        let d = self.nodes[&leaf].parent.expect("checked");
        let navel: Vec<usize> = self.nodes[&leaf].bag.intersection(&self.nodes[&d].bag).copied().collect();
        for &v in &rep.members {
            self.work.remove_vertex(v);
        }
        let mut added = Vec::new();
        let mut arms = Vec::new();
        if rep.split.is_empty() {
            self.constant = &self.constant * rep.signature.get(0);
        } else {
            let n = self.work.add_vertex(rep.signature.clone());
            added.push(n);
            for (j, (&x, pg)) in rep.split.iter().zip(&rep.gadgets).enumerate() {
                // The tail keeps x's id: port 0 faces the path, then S₂ in order.
                let s2: Vec<usize> = (0..self.work.ports[x].len()).filter(|p| !rep.s1[j].contains(p)).collect();
                let old = self.work.ports[x].clone();
                self.work.ports[x] = vec![UNSET; s2.len() + 1];
                self.work.sigs[x] = pg.tail.clone();
                for (i, &p) in s2.iter().enumerate() {
                    let e = old[p];
                    let ends = self.work.edges[e].as_mut().expect("live edge");
                    // A self-loop has both ends here; move the one at p.
                    let k = if ends[0] == PortRef::new(x, p) { 0 } else { 1 };
                    ends[k] = PortRef::new(x, i + 1);
                    self.work.ports[x][i + 1] = e;
                }
                let xn = self.work.add_vertex(pg.x.clone());
                let w = self.work.add_vertex(pg.w.clone());
                let yn = self.work.add_vertex(pg.y.clone());
                self.work.connect(PortRef::new(n, j), PortRef::new(xn, 0));
                self.work.connect(PortRef::new(xn, 1), PortRef::new(w, 0));
                self.work.connect(PortRef::new(w, 1), PortRef::new(yn, 0));
                self.work.connect(PortRef::new(yn, 1), PortRef::new(x, 0));
                added.extend([xn, w, yn]);
                arms.push(vec![xn, w, yn]);
            }
        }
        let gone: BTreeSet<usize> = rep.absorbed.iter().copied().collect();
        for node in self.nodes.values_mut() {
            node.bag.retain(|v| !gone.contains(v));
            if let Some(e) = node.emb.as_mut() {
                remove_from_embedding(e, &gone);
            }
        }
        let cap = 10 * (self.h + 2).pow(3);
        let parent = self.nodes.get_mut(&d).expect("parent");
        parent.bag.extend(added.iter().copied());
        parent.children.remove(&leaf);
        parent.grown += added.len();
        if parent.small && parent.grown > cap {
            return Err(ScgError::Growth { node: d, got: parent.grown, cap });
        }
        if let Some(e) = parent.emb.as_mut() {
            if !rep.split.is_empty() {
                place_star(e, added[0], &rep.split, &arms).ok_or(ScgError::NoFace(d))?;
            }
        }
        self.nodes.remove(&leaf);
        self.steps.push(ScgStep {
            leaf,
            parent: d,
            navel,
            split: rep.split.clone(),
            absorbed: rep.absorbed.clone(),
            method: rep.method.to_string(),
            representative: rep.signature.to_string(),
            added,
        });
        Ok(self.steps.last().expect("just pushed"))
    }

    /// Contracts every remaining leaf and evaluates the root bag.
    pub fn finish(mut self) -> Result<ScgOutcome> {
        for leaf in self.leaf_order() {
            self.contract_leaf(leaf)?;
        }
        let root = &self.nodes[&self.root];
        let live: Vec<usize> = (0..self.work.sigs.len()).filter(|&v| self.work.alive[v]).collect();
        if let Some(v) = live.iter().find(|v| !root.bag.contains(v)) {
            return Err(ScgError::Invalid(format!("vertex {v} is in no bag")));
        }
        let members: Vec<(usize, Signature, Vec<Option<usize>>)> =
            live.iter().map(|&v| (v, self.work.sigs[v].clone(), identity_map(&self.work.sigs[v]))).collect();
        let inst = self.work.view(&members)?;
        let emb = match &root.emb {
            Some(t) => Some(port_embedding(&inst, &live, t, &BTreeSet::new())?),
            None => None,
        };
        let (z, how) = eval_view(&inst, emb.as_ref())?;
        Ok(ScgOutcome { value: &self.constant * &z, steps: self.steps, root_method: how.to_string() })
    }
}

/// `Z(I)` by leaf contraction over `td`; bags with more than `h` vertices
/// must carry a planar torso embedding.
pub fn evaluate_scg(inst: &HolantInstance, td: &TreeDecomposition, h: usize) -> Result<ScgOutcome> {
    if inst.vertices.iter().any(|v| v.signature.is_zero()) {
        inst.validate()?;
        return Ok(ScgOutcome { value: Scalar::zero(), steps: Vec::new(), root_method: "zero".into() });
    }
    Scg::new(inst, td, h)?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{cycle, from_graph};
    use crate::random::{random_decomposed_instance, rng, DecomposedConfig};
    use crate::treewidth::TdNode;

    fn td(bags: Vec<Vec<usize>>, edges: Vec<(usize, usize)>) -> TreeDecomposition {
        let mut t = TreeDecomposition::from_bags(bags, edges);
        t.root = Some(0);
        t
    }

    #[test]
    fn dedup_examples() {
        let t = td(vec![vec![0, 1], vec![0, 2], vec![0, 3]], vec![(0, 1), (0, 2)]);
        let out = dedup_navels(&t).unwrap();
        assert_eq!(out.edges, vec![(0, 1), (1, 2)]);
        assert!(same_navel_siblings(&out).unwrap().is_empty());
        let t = td(vec![vec![0, 1], vec![0, 2], vec![1, 3]], vec![(0, 1), (0, 2)]);
        assert_eq!(dedup_navels(&t).unwrap().edges, t.edges);
        let star: Vec<Vec<usize>> = std::iter::once(vec![0, 1]).chain((2..7).map(|v| vec![0, v])).collect();
        let t = td(star, (1..6).map(|c| (0, c)).collect());
        assert_eq!(same_navel_siblings(&t).unwrap().len(), 10);
        let out = dedup_navels(&t).unwrap();
        assert_eq!(out.edges, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        assert!(same_navel_siblings(&out).unwrap().is_empty());
    }

    #[test]
    fn single_bag_delegates() {
        let inst = cycle(4, &Signature::sym(&[0, 1, 0]));
        let t = td(vec![vec![0, 1, 2, 3]], vec![]);
        let out = evaluate_scg(&inst, &t, 4).unwrap();
        assert_eq!(out.value, Scalar::from(2));
        assert_eq!(out.root_method, "brute");
        let mut t = t;
        t.nodes[0].embedding = Some(BTreeMap::from([(0, vec![1, 3]), (1, vec![2, 0]), (2, vec![3, 1]), (3, vec![0, 2])]));
        let out = evaluate_scg(&inst, &t, 2).unwrap();
        assert_eq!(out.value, Scalar::from(2));
        assert_eq!(out.root_method, "planar");
    }

    #[test]
    fn pendant_leaf_representative() {
        // Vertex 1 joins 0 and the leaf vertex 2 by doubled edges.
        let mut inst = HolantInstance::new();
        inst.add_vertex(Signature::sym(&[1, 0, 3]));
        inst.add_vertex(Signature::sym(&[1, 0, 2, 0, 4]));
        inst.add_vertex(Signature::sym(&[0, 1, 0]));
        inst.add_edge((0, 0), (1, 0));
        inst.add_edge((0, 1), (1, 1));
        inst.add_edge((1, 2), (2, 0));
        inst.add_edge((1, 3), (2, 1));
        let t = td(vec![vec![0, 1], vec![1, 2]], vec![(0, 1)]);
        let scg = Scg::new(&inst, &t, 3).unwrap();
        let rep = scg.representative_signature(1).unwrap();
        assert_eq!(rep.split, vec![1]);
        // The head contracted with the leaf vertex over both S₁ edges.
        let head = &rep.gadgets[0].head;
        let leaf = Signature::sym(&[0, 1, 0]);
        let direct = head.connect(&leaf, &[(1, 0), (2, 1)]).unwrap();
        assert_eq!(rep.signature, direct);
        let out = evaluate_scg(&inst, &t, 3).unwrap();
        assert_eq!(out.value, brute_force(&inst).unwrap());
        assert_eq!(out.steps.len(), 1);
        assert_eq!(out.steps[0].added.len(), 4);
    }

    #[test]
    fn isolated_leaf_gives_constant() {
        let mut inst = cycle(3, &Signature::sym(&[1, 0, 1]));
        let a = inst.add_vertex(Signature::sym(&[0, 1, 0]));
        let b = inst.add_vertex(Signature::sym(&[0, 1, 0]));
        inst.add_edge((a, 0), (b, 0));
        inst.add_edge((a, 1), (b, 1));
        let t = td(vec![vec![0, 1, 2], vec![a, b]], vec![(0, 1)]);
        let scg = Scg::new(&inst, &t, 3).unwrap();
        let rep = scg.representative_signature(1).unwrap();
        assert_eq!(rep.signature, Signature::constant(Scalar::from(2)));
        assert_eq!(evaluate_scg(&inst, &t, 3).unwrap().value, brute_force(&inst).unwrap());
    }

    #[test]
    fn absorbed_navel_vertex() {
        // Vertex 1 only touches the leaf side.
        let inst = from_graph(4, &[(0, 3), (0, 2), (1, 2), (1, 2)], |d| Signature::symmetric(crate::classify::form_pattern(5, &Scalar::from(2), d).unwrap()));
        let t = td(vec![vec![0, 1, 3], vec![0, 1, 2]], vec![(0, 1)]);
        let scg = Scg::new(&inst, &t, 3).unwrap();
        let rep = scg.representative_signature(1).unwrap();
        assert_eq!(rep.absorbed, vec![1]);
        assert_eq!(rep.split, vec![0]);
        assert_eq!(evaluate_scg(&inst, &t, 3).unwrap().value, brute_force(&inst).unwrap());
    }

    #[test]
    fn navel_vertices_need_symmetric_forms() {
        let mut inst = HolantInstance::new();
        inst.add_vertex(Signature::from_ints(&[0, 1, 2, 0]));
        inst.add_vertex(Signature::sym(&[0, 1, 0, 0]));
        inst.add_vertex(Signature::sym(&[0, 1]));
        inst.add_edge((0, 0), (1, 0));
        inst.add_edge((0, 1), (1, 1));
        inst.add_edge((1, 2), (2, 0));
        let t = td(vec![vec![0, 1], vec![1, 2]], vec![(0, 1)]);
        // Vertex 1 is the navel and is symmetric: fine.
        assert_eq!(evaluate_scg(&inst, &t, 3).unwrap().value, brute_force(&inst).unwrap());
        let t = td(vec![vec![0, 1], vec![0, 2, 1]], vec![(0, 1)]);
        assert!(evaluate_scg(&inst, &t, 3).is_ok());
        let t = td(vec![vec![1, 2], vec![0, 1]], vec![(0, 1)]);
        assert!(evaluate_scg(&inst, &t, 3).is_ok());
        let mut inst2 = inst.clone();
        inst2.vertices[1].signature = Signature::from_ints(&[0, 1, 2, 0, 3, 0, 0, 0]);
        let t = td(vec![vec![0, 1], vec![1, 2]], vec![(0, 1)]);
        assert!(matches!(evaluate_scg(&inst2, &t, 3), Err(ScgError::NotMatchgateForm(1))));
    }

    #[test]
    fn rejects_bad_decompositions() {
        let inst = cycle(4, &Signature::sym(&[0, 1, 0]));
        let t = td(vec![vec![0, 1, 2, 3]], vec![]);
        assert!(matches!(evaluate_scg(&inst, &t, 2), Err(ScgError::Treewidth(TreewidthError::MissingEmbedding(0)))));
        let mut t = td(vec![vec![0, 1, 2]], vec![]);
        t.nodes.push(TdNode::new(1, vec![2, 3, 0]));
        assert!(evaluate_scg(&inst, &t, 3).is_err());
    }

    #[test]
    fn contraction_preserves_value() {
        let mut r = rng(41);
        for case in 0..40 {
            let cfg = DecomposedConfig { h: 2 + case % 3, ..DecomposedConfig::default() };
            let d = random_decomposed_instance(&mut r, &cfg);
            let z = brute_force(&d.instance).unwrap();
            let mut scg = Scg::new(&d.instance, &d.td, cfg.h).unwrap();
            for leaf in scg.leaf_order() {
                scg.contract_leaf(leaf).unwrap();
                let now = brute_force(&scg.current_instance().unwrap()).unwrap();
                assert_eq!(scg.constant() * &now, z, "case {case} after leaf {leaf}");
            }
            assert_eq!(scg.finish().unwrap().value, z, "case {case}");
        }
    }
}
