//! Tree decompositions and counting over the incidence graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{HolantInstance, InstanceError};
use crate::planar::{trace_faces, RotationSystem, WeightedGraph};
use crate::scalar::Scalar;

pub const DP_WIDTH_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreewidthError {
    #[error("invalid tree decomposition: {0}")]
    Invalid(String),
    #[error("width {got} exceeds the cap of {cap}")]
    WidthCap { got: usize, cap: usize },
    #[error("node {0} needs an embedding of its torso")]
    MissingEmbedding(usize),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

pub type Result<T> = std::result::Result<T, TreewidthError>;

/// Simple undirected graph.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct UGraph {
    pub n: usize,
    pub adj: Vec<BTreeSet<usize>>,
}

impl UGraph {
    pub fn new(n: usize) -> Self {
        UGraph { n, adj: vec![BTreeSet::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = UGraph::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    /// Loops are ignored.
    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u != v {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n).flat_map(|u| self.adj[u].iter().filter(move |&&v| u < v).map(move |&v| (u, v))).collect()
    }

    /// Vertices of the instance, adjacent when joined by some edge.
    pub fn underlying(inst: &HolantInstance) -> Self {
        let mut g = UGraph::new(inst.num_vertices());
        for e in &inst.edges {
            g.add_edge(e.a.vertex, e.b.vertex);
        }
        g
    }

    /// Constraint nodes `0..V` and variable nodes `V + e`, one per edge.
    pub fn incidence(inst: &HolantInstance) -> Self {
        let nv = inst.num_vertices();
        let mut g = UGraph::new(nv + inst.num_edges());
        for (i, e) in inst.edges.iter().enumerate() {
            g.add_edge(e.a.vertex, nv + i);
            g.add_edge(e.b.vertex, nv + i);
        }
        g
    }
}

/// Cyclic neighbour order per torso vertex.
pub type TorsoEmbedding = BTreeMap<usize, Vec<usize>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdNode {
    pub id: usize,
    pub bag: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub apex: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<TorsoEmbedding>,
}

impl TdNode {
    pub fn new(id: usize, bag: Vec<usize>) -> Self {
        TdNode { id, bag, apex: Vec::new(), embedding: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TreeDecomposition {
    pub nodes: Vec<TdNode>,
    pub edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub root: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TdReport {
    pub width: usize,
    pub violations: Vec<String>,
}

impl TdReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl TreeDecomposition {
    /// Nodes numbered in order; `edges` index into `bags`.
    pub fn from_bags(bags: Vec<Vec<usize>>, edges: Vec<(usize, usize)>) -> Self {
        let nodes = bags.into_iter().enumerate().map(|(i, b)| TdNode::new(i, b)).collect();
        TreeDecomposition { nodes, edges, root: None }
    }

    pub fn width(&self) -> usize {
        self.nodes.iter().map(|n| n.bag.len()).max().unwrap_or(0).saturating_sub(1)
    }

    fn index(&self) -> std::result::Result<HashMap<usize, usize>, String> {
        let mut idx = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if idx.insert(n.id, i).is_some() {
                return Err(format!("duplicate node id {}", n.id));
            }
        }
        Ok(idx)
    }

    /// Adjacency between node positions.
    fn tree_adj(&self) -> std::result::Result<Vec<Vec<usize>>, String> {
        let idx = self.index()?;
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            let (Some(&x), Some(&y)) = (idx.get(&a), idx.get(&b)) else {
                return Err(format!("tree edge ({a},{b}) names an unknown node"));
            };
            adj[x].push(y);
            adj[y].push(x);
        }
        Ok(adj)
    }

    /// Parent pointers and a BFS order from the root (position).
    fn rooted(&self) -> Result<(usize, Vec<Option<usize>>, Vec<usize>)> {
        let adj = self.tree_adj().map_err(TreewidthError::Invalid)?;
        let idx = self.index().map_err(TreewidthError::Invalid)?;
        let root = match self.root {
            Some(r) => *idx.get(&r).ok_or_else(|| TreewidthError::Invalid(format!("unknown root {r}")))?,
            None => 0,
        };
        let mut parent = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = Some(x);
                    queue.push_back(y);
                }
            }
        }
        Ok((root, parent, order))
    }
}

/// The three covering conditions plus tree shape; width is max bag − 1.
pub fn validate_td_graph(g: &UGraph, t: &TreeDecomposition) -> TdReport {
    let mut violations = Vec::new();
    let width = t.width();
    if t.nodes.is_empty() {
        violations.push("no nodes".to_string());
        return TdReport { width, violations };
    }
    let adj = match t.tree_adj() {
        Ok(a) => a,
        Err(e) => return TdReport { width, violations: vec![e] },
    };
    if t.edges.len() + 1 != t.nodes.len() {
        violations.push(format!("{} nodes but {} tree edges", t.nodes.len(), t.edges.len()));
    }
    let mut seen = vec![false; t.nodes.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        violations.push("tree is disconnected".to_string());
    }
    let bags: Vec<BTreeSet<usize>> = t.nodes.iter().map(|n| n.bag.iter().copied().collect()).collect();
    for (i, n) in t.nodes.iter().enumerate() {
        if let Some(&v) = n.bag.iter().find(|&&v| v >= g.n) {
            violations.push(format!("node {} holds unknown vertex {v}", n.id));
        }
        if bags[i].len() != n.bag.len() {
            violations.push(format!("node {} repeats a vertex", n.id));
        }
    }
    for v in 0..g.n {
        let holders: Vec<usize> = (0..bags.len()).filter(|&i| bags[i].contains(&v)).collect();
        if holders.is_empty() {
            violations.push(format!("vertex {v} is in no bag"));
            continue;
        }
        // Connectedness of the holders inside the tree.
        let mut reach = BTreeSet::from([holders[0]]);
        let mut stack = vec![holders[0]];
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if bags[y].contains(&v) && reach.insert(y) {
                    stack.push(y);
                }
            }
        }
        if reach.len() != holders.len() {
            violations.push(format!("bags holding vertex {v} do not form a subtree"));
        }
    }
    for (u, v) in g.edges() {
        if !bags.iter().any(|b| b.contains(&u) && b.contains(&v)) {
            violations.push(format!("edge ({u},{v}) is in no bag"));
        }
    }
    TdReport { width, violations }
}

/// Validation against the instance's underlying graph.
pub fn validate_td(inst: &HolantInstance, t: &TreeDecomposition) -> TdReport {
    validate_td_graph(&UGraph::underlying(inst), t)
}

/// Contracts tree edges whose bags are nested, keeping the larger bag.
pub fn normalize_td(g: &UGraph, t: &TreeDecomposition) -> Result<TreeDecomposition> {
    let report = validate_td_graph(g, t);
    if !report.is_valid() {
        return Err(TreewidthError::Invalid(report.violations.join("; ")));
    }
    let mut bags: Vec<Option<BTreeSet<usize>>> = t.nodes.iter().map(|n| Some(n.bag.iter().copied().collect())).collect();
    let mut extra: Vec<(Vec<usize>, Option<TorsoEmbedding>)> =
        t.nodes.iter().map(|n| (n.apex.clone(), n.embedding.clone())).collect();
    let idx = t.index().map_err(TreewidthError::Invalid)?;
    let mut edges: Vec<(usize, usize)> = t.edges.iter().map(|(a, b)| (idx[a], idx[b])).collect();
    let mut root = t.root.map(|r| idx[&r]);
    loop {
        let nested = edges.iter().position(|&(a, b)| {
            let (x, y) = (bags[a].as_ref().expect("live"), bags[b].as_ref().expect("live"));
            x.is_subset(y) || y.is_subset(x)
        });
        let Some(pos) = nested else { break };
        let (a, b) = edges.swap_remove(pos);
        let (keep, gone) = if bags[a].as_ref().expect("live").len() >= bags[b].as_ref().expect("live").len() {
            (a, b)
        } else {
            (b, a)
        };
        bags[gone] = None;
        if extra[keep].1.is_none() {
            extra[keep] = std::mem::take(&mut extra[gone]);
        }
        for e in edges.iter_mut() {
            if e.0 == gone {
                e.0 = keep;
            }
            if e.1 == gone {
                e.1 = keep;
            }
        }
        if root == Some(gone) {
            root = Some(keep);
        }
    }
    let mut newid = vec![usize::MAX; bags.len()];
    let mut nodes = Vec::new();
    for (i, b) in bags.iter().enumerate() {
        if let Some(b) = b {
            newid[i] = nodes.len();
            let (apex, embedding) = extra[i].clone();
            nodes.push(TdNode { id: nodes.len(), bag: b.iter().copied().collect(), apex, embedding });
        }
    }
    Ok(TreeDecomposition {
        nodes,
        edges: edges.into_iter().map(|(a, b)| (newid[a], newid[b])).collect(),
        root: root.map(|r| newid[r]),
    })
}

/// True when no tree edge joins nested bags.
pub fn is_normal(t: &TreeDecomposition) -> bool {
    let Ok(idx) = t.index() else { return false };
    t.edges.iter().all(|(a, b)| {
        let x: BTreeSet<_> = t.nodes[idx[a]].bag.iter().collect();
        let y: BTreeSet<_> = t.nodes[idx[b]].bag.iter().collect();
        !(x.is_subset(&y) || y.is_subset(&x))
    })
}

/// Min-fill elimination ordering, then normalized.
pub fn heuristic_td(g: &UGraph) -> TreeDecomposition {
    if g.n == 0 {
        return TreeDecomposition::from_bags(vec![vec![]], vec![]);
    }
    let mut adj = g.adj.clone();
    let mut alive: BTreeSet<usize> = (0..g.n).collect();
    let mut order = Vec::with_capacity(g.n);
    let mut bag_of = vec![Vec::new(); g.n];
    while !alive.is_empty() {
        let fill = |v: usize| {
            let nb: Vec<usize> = adj[v].iter().copied().collect();
            let mut f = 0;
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    if !adj[nb[i]].contains(&nb[j]) {
                        f += 1;
                    }
                }
            }
            (f, nb.len(), v)
        };
        let v = alive.iter().map(|&v| fill(v)).min().expect("nonempty").2;
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                adj[nb[i]].insert(nb[j]);
                adj[nb[j]].insert(nb[i]);
            }
        }
        for &u in &nb {
            adj[u].remove(&v);
        }
        bag_of[v] = std::iter::once(v).chain(nb).collect();
        alive.remove(&v);
        order.push(v);
    }
    let mut pos = vec![0; g.n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    // Node i holds the bag of order[i]; its parent is the earliest-eliminated
    // later neighbour, and parentless nodes are chained (their bags are disjoint
    // from everything later).
    let mut edges = Vec::new();
    let mut last_root: Option<usize> = None;
    for (i, &v) in order.iter().enumerate() {
        match bag_of[v].iter().skip(1).map(|&u| pos[u]).min() {
            Some(p) => edges.push((i, p)),
            None => {
                if let Some(r) = last_root {
                    edges.push((r, i));
                }
                last_root = Some(i);
            }
        }
    }
    let bags = order.iter().map(|&v| {
        let mut b = bag_of[v].clone();
        b.sort_unstable();
        b
    });
    let t = TreeDecomposition::from_bags(bags.collect(), edges);
    normalize_td(g, &t).expect("elimination decompositions are valid")
}

// ===========================================================================
// g3-width conditions
// ===========================================================================

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct G3Report {
    pub checked_torsos: usize,
    pub violations: Vec<String>,
}

impl G3Report {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The torso at node `i`: the induced graph on the bag plus a clique on each
/// adhesion set.
fn torso(g: &UGraph, t: &TreeDecomposition, adj: &[Vec<usize>], i: usize) -> UGraph {
    let bag = &t.nodes[i].bag;
    let mut out = UGraph::new(g.n);
    for &u in bag {
        for &v in &g.adj[u] {
            if bag.contains(&v) {
                out.add_edge(u, v);
            }
        }
    }
    for &j in &adj[i] {
        let shared: Vec<usize> = bag.iter().copied().filter(|v| t.nodes[j].bag.contains(v)).collect();
        for a in 0..shared.len() {
            for b in a + 1..shared.len() {
                out.add_edge(shared[a], shared[b]);
            }
        }
    }
    out
}

/// Every node with a bag larger than `h` must carry an apex set (at most `h`
/// vertices, or none when `allow_apex` is false) and a planar embedding of
/// its torso minus the apex set; adhesions minus the apex set have at most
/// three vertices, and three-vertex adhesions lie on a common face.
pub fn check_g3_width(g: &UGraph, t: &TreeDecomposition, h: usize, allow_apex: bool) -> Result<G3Report> {
    let report = validate_td_graph(g, t);
    if !report.is_valid() {
        return Err(TreewidthError::Invalid(report.violations.join("; ")));
    }
    let adj = t.tree_adj().map_err(TreewidthError::Invalid)?;
    let mut out = G3Report::default();
    for (i, node) in t.nodes.iter().enumerate() {
        if node.bag.len() <= h {
            continue;
        }
        out.checked_torsos += 1;
        let apex: BTreeSet<usize> = node.apex.iter().copied().collect();
        let cap = if allow_apex { h } else { 0 };
        if apex.len() > cap {
            out.violations.push(format!("node {}: apex set of size {} exceeds {cap}", node.id, apex.len()));
        }
        if let Some(&a) = apex.iter().find(|a| !node.bag.contains(a)) {
            out.violations.push(format!("node {}: apex vertex {a} not in the bag", node.id));
        }
        let emb = node.embedding.as_ref().ok_or(TreewidthError::MissingEmbedding(node.id))?;
        let full = torso(g, t, &adj, i);
        let verts: Vec<usize> = node.bag.iter().copied().filter(|v| !apex.contains(v)).collect();
        let faces = match embed_torso(&full, &verts, emb) {
            Ok(f) => f,
            Err(msg) => {
                out.violations.push(format!("node {}: {msg}", node.id));
                continue;
            }
        };
        for &j in &adj[i] {
            let shared: Vec<usize> =
                verts.iter().copied().filter(|v| t.nodes[j].bag.contains(v)).collect();
            if shared.len() > 3 {
                out.violations.push(format!(
                    "node {}: adhesion with node {} keeps {} vertices outside the apex set",
                    node.id,
                    t.nodes[j].id,
                    shared.len()
                ));
            } else if shared.len() == 3 && !faces.iter().any(|f| shared.iter().all(|v| f.contains(v))) {
                out.violations.push(format!(
                    "node {}: adhesion {:?} with node {} does not bound a face",
                    node.id,
                    shared,
                    t.nodes[j].id
                ));
            }
        }
    }
    Ok(out)
}

/// Checks `emb` against the torso on `verts` and returns vertex sets of faces.
fn embed_torso(torso: &UGraph, verts: &[usize], emb: &TorsoEmbedding) -> std::result::Result<Vec<BTreeSet<usize>>, String> {
    let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut g = WeightedGraph::new(verts.len());
    let mut dart = HashMap::new();
    for &u in verts {
        for &v in &torso.adj[u] {
            if u < v && local.contains_key(&v) {
                let e = g.add_edge(local[&u], local[&v], Scalar::one());
                dart.insert((u, v), 2 * e);
                dart.insert((v, u), 2 * e + 1);
            }
        }
    }
    let mut rot = vec![Vec::new(); verts.len()];
    for &u in verts {
        let order = emb.get(&u).cloned().unwrap_or_default();
        let expected: BTreeSet<usize> = torso.adj[u].iter().copied().filter(|v| local.contains_key(v)).collect();
        let given: BTreeSet<usize> = order.iter().copied().collect();
        if given != expected || given.len() != order.len() {
            return Err(format!("rotation at {u} does not list its torso neighbours"));
        }
        rot[local[&u]] = order.iter().map(|&v| dart[&(u, v)]).collect();
    }
    let faces = trace_faces(&g, &RotationSystem { rot }).map_err(|e| e.to_string())?;
    if !faces.euler_ok {
        return Err("torso embedding is not planar".to_string());
    }
    Ok(faces
        .faces
        .iter()
        .map(|w| w.iter().map(|&d| verts[g.tail(d)]).collect())
        .chain(verts.iter().filter(|&&v| torso.adj[v].iter().all(|u| !local.contains_key(u))).map(|&v| BTreeSet::from([v])))
        .collect())
}

// ===========================================================================
// Counting DP
// ===========================================================================

/// Per-constraint record of ports whose variables were already forgotten.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
struct Marker {
    known: u32,
    bits: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct State {
    /// Values of the bag's variables, keyed by edge.
    vars: BTreeMap<usize, u8>,
    /// Markers of the bag's constraints, keyed by vertex.
    cons: BTreeMap<usize, Marker>,
}

type Table = HashMap<State, Scalar>;

fn add_into(t: &mut Table, s: State, w: Scalar) {
    if w.is_zero() {
        return;
    }
    match t.get_mut(&s) {
        Some(x) => *x += &w,
        None => {
            t.insert(s, w);
        }
    }
}

struct Dp<'a> {
    inst: &'a HolantInstance,
    nv: usize,
    /// `(vertex, port)` endpoints of each edge.
    ends: Vec<[(usize, usize); 2]>,
    /// Edge at each port.
    port_edge: Vec<Vec<usize>>,
}

impl Dp<'_> {
    fn forget_var(&self, table: Table, e: usize) -> Table {
        let mut out = Table::new();
        for (mut s, w) in table {
            let val = s.vars.remove(&e).expect("variable in bag");
            for &(v, p) in &self.ends[e] {
                if let Some(m) = s.cons.get_mut(&v) {
                    m.known |= 1 << p;
                    m.bits |= (val as u32) << p;
                }
            }
            add_into(&mut out, s, w);
        }
        out
    }

    fn forget_con(&self, table: Table, v: usize) -> Result<Table> {
        let f = &self.inst.vertices[v].signature;
        let k = f.arity();
        let mut out = Table::new();
        for (mut s, w) in table {
            let m = s.cons.remove(&v).expect("constraint in bag");
            let mut idx = 0usize;
            for p in 0..k {
                let b = if m.known >> p & 1 == 1 {
                    (m.bits >> p & 1) as usize
                } else {
                    let e = self.port_edge[v][p];
                    *s.vars.get(&e).ok_or_else(|| {
                        TreewidthError::Invalid(format!("vertex {v} forgotten before edge {e} was seen"))
                    })? as usize
                };
                idx |= b << (k - 1 - p);
            }
            let val = f.get(idx);
            if !val.is_zero() {
                add_into(&mut out, s, &w * val);
            }
        }
        Ok(out)
    }

    fn introduce(&self, table: Table, x: usize) -> Table {
        let mut out = Table::new();
        for (s, w) in table {
            if x < self.nv {
                let mut s = s;
                s.cons.insert(x, Marker::default());
                add_into(&mut out, s, w);
            } else {
                for val in 0..2u8 {
                    let mut s2 = s.clone();
                    s2.vars.insert(x - self.nv, val);
                    add_into(&mut out, s2, w.clone());
                }
            }
        }
        out
    }

    /// Moves a table from bag `from` to bag `to`: forget variables, then
    /// constraints, then introduce.
    fn transfer(&self, mut table: Table, from: &BTreeSet<usize>, to: &BTreeSet<usize>) -> Result<Table> {
        for &x in from.difference(to).filter(|&&x| x >= self.nv) {
            table = self.forget_var(table, x - self.nv);
        }
        for &x in from.difference(to).filter(|&&x| x < self.nv) {
            table = self.forget_con(table, x)?;
        }
        for &x in to.difference(from) {
            table = self.introduce(table, x);
        }
        Ok(table)
    }
}

fn join(a: &Table, b: &Table) -> Table {
    let mut by_vars: HashMap<&BTreeMap<usize, u8>, Vec<(&State, &Scalar)>> = HashMap::new();
    for (s, w) in b {
        by_vars.entry(&s.vars).or_default().push((s, w));
    }
    let mut out = Table::new();
    for (s, w) in a {
        let Some(list) = by_vars.get(&s.vars) else { continue };
        for (t, x) in list {
            let cons = s
                .cons
                .iter()
                .map(|(&v, m)| {
                    let n = t.cons[&v];
                    (v, Marker { known: m.known | n.known, bits: m.bits | n.bits })
                })
                .collect();
            add_into(&mut out, State { vars: s.vars.clone(), cons }, w * *x);
        }
    }
    out
}

/// `Z(I)` by dynamic programming over a decomposition of the incidence graph
/// (constraint nodes `0..V`, variable nodes `V + e`).
pub fn dp_evaluate(inst: &HolantInstance, t: &TreeDecomposition) -> Result<Scalar> {
    inst.validate()?;
    let g = UGraph::incidence(inst);
    let report = validate_td_graph(&g, t);
    if !report.is_valid() {
        return Err(TreewidthError::Invalid(report.violations.join("; ")));
    }
    if report.width > DP_WIDTH_CAP {
        return Err(TreewidthError::WidthCap { got: report.width, cap: DP_WIDTH_CAP });
    }
    let nv = inst.num_vertices();
    let mut port_edge: Vec<Vec<usize>> = inst.vertices.iter().map(|v| vec![0; v.signature.arity()]).collect();
    let mut ends = Vec::with_capacity(inst.num_edges());
    for (i, e) in inst.edges.iter().enumerate() {
        port_edge[e.a.vertex][e.a.port] = i;
        port_edge[e.b.vertex][e.b.port] = i;
        ends.push([(e.a.vertex, e.a.port), (e.b.vertex, e.b.port)]);
    }
    let dp = Dp { inst, nv, ends, port_edge };
    let (root, parent, order) = t.rooted()?;
    let bags: Vec<BTreeSet<usize>> = t.nodes.iter().map(|n| n.bag.iter().copied().collect()).collect();
    let mut tables: Vec<Option<Table>> = vec![None; t.nodes.len()];
    for &x in order.iter().rev() {
        let empty = BTreeSet::new();
        let mut unit = Table::new();
        unit.insert(State { vars: BTreeMap::new(), cons: BTreeMap::new() }, Scalar::one());
        let mut acc = dp.transfer(unit, &empty, &bags[x])?;
        for c in (0..t.nodes.len()).filter(|&c| parent[c] == Some(x)) {
            let child = tables[c].take().expect("children first");
            let moved = dp.transfer(child, &bags[c], &bags[x])?;
            acc = join(&acc, &moved);
        }
        tables[x] = Some(acc);
    }
    let top = tables[root].take().expect("root computed");
    let done = dp.transfer(top, &bags[root], &BTreeSet::new())?;
    Ok(done.into_values().fold(Scalar::zero(), |a, b| a + b))
}
