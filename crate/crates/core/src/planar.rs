//! Combinatorial embeddings, Pfaffian orientations, FKT perfect-matching
//! counting and matchgate evaluation of planar Holant instances.
//!
//! Edge `e` of a [`WeightedGraph`] has two darts: `2e` leaves `edges[e].0`
//! and `2e + 1` leaves `edges[e].1`. A [`RotationSystem`] lists the darts
//! leaving each vertex in clockwise order. Faces are the orbits of
//! `d ↦ succ(rev(d))`, which walk bounded faces counterclockwise.
//!
//! Matchgates use the removal convention: bit 1 on an external node means the
//! node is deleted, so `f(α) = #PM(G − X_α)`. [`flip_bits`] exchanges 0 and 1.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{form_pattern, symmetric_matchgate_form, MatchgateForm};
use crate::instance::{HolantInstance, InstanceError, PartialAssignment};
use crate::scalar::{Scalar, ScalarError};
use crate::signature::{Signature, SignatureError};

pub const BRUTE_PM_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanarError {
    #[error("inconsistent rotation system: {0}")]
    InconsistentRotation(String),
    #[error("embedding is not planar: V={v} E={e} F={f} in a component")]
    NonPlanar { v: usize, e: usize, f: usize },
    #[error("matrix is not skew-symmetric at ({0},{1})")]
    NotSkew(usize, usize),
    #[error("{what}: {got} exceeds the cap of {cap}")]
    Cap { what: &'static str, got: usize, cap: usize },
    #[error("no matchgate for the signature at vertex {0}")]
    MissingMatchgate(usize),
    #[error("form {form} is not defined at arity {arity}")]
    IncompatibleForm { form: u8, arity: usize },
    #[error("matchgate realizes {got}, expected {expected}")]
    Validation { got: String, expected: String },
    #[error("matchgate at vertex {0} does not match the signature under the rotation")]
    OrderMismatch(usize),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

pub type Result<T> = std::result::Result<T, PlanarError>;

// ===========================================================================
// Graphs and rotation systems
// ===========================================================================

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, Scalar)>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph { n, edges: Vec::new() }
    }

    /// Unit weights.
    pub fn unit(n: usize, edges: &[(usize, usize)]) -> Self {
        WeightedGraph { n, edges: edges.iter().map(|&(u, v)| (u, v, Scalar::one())).collect() }
    }

    pub fn add_edge(&mut self, u: usize, v: usize, w: Scalar) -> usize {
        self.edges.push((u, v, w));
        self.edges.len() - 1
    }

    pub fn tail(&self, d: usize) -> usize {
        let e = &self.edges[d / 2];
        if d % 2 == 0 {
            e.0
        } else {
            e.1
        }
    }

    pub fn head(&self, d: usize) -> usize {
        self.tail(d ^ 1)
    }

    /// Darts leaving each vertex, in edge order.
    pub fn default_rotation(&self) -> RotationSystem {
        let mut rot = vec![Vec::new(); self.n];
        for d in 0..2 * self.edges.len() {
            rot[self.tail(d)].push(d);
        }
        RotationSystem { rot }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RotationSystem {
    pub rot: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Faces {
    pub faces: Vec<Vec<usize>>,
    pub face_of: Vec<usize>,
    /// `V − E + F = 2` holds in every connected component.
    pub euler_ok: bool,
    pub components: usize,
}

/// `position[d]` = index of dart `d` in its vertex's rotation.
fn positions(g: &WeightedGraph, r: &RotationSystem) -> Result<Vec<usize>> {
    if r.rot.len() != g.n {
        return Err(PlanarError::InconsistentRotation(format!("{} rotations for {} vertices", r.rot.len(), g.n)));
    }
    let mut pos = vec![usize::MAX; 2 * g.edges.len()];
    for (v, darts) in r.rot.iter().enumerate() {
        for (i, &d) in darts.iter().enumerate() {
            if d >= pos.len() || g.tail(d) != v || pos[d] != usize::MAX {
                return Err(PlanarError::InconsistentRotation(format!("dart {d} at vertex {v}")));
            }
            pos[d] = i;
        }
    }
    if let Some(d) = pos.iter().position(|&p| p == usize::MAX) {
        return Err(PlanarError::InconsistentRotation(format!("dart {d} missing")));
    }
    Ok(pos)
}

/// The dart following `d` on its face.
fn next_dart(g: &WeightedGraph, r: &RotationSystem, pos: &[usize], d: usize) -> usize {
    let back = d ^ 1;
    let v = g.tail(back);
    let ring = &r.rot[v];
    ring[(pos[back] + 1) % ring.len()]
}

fn components(g: &WeightedGraph) -> (usize, Vec<usize>) {
    let mut parent: Vec<usize> = (0..g.n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(u, v, _) in &g.edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        parent[a] = b;
    }
    let mut label = HashMap::new();
    let comp: Vec<usize> = (0..g.n)
        .map(|v| {
            let root = find(&mut parent, v);
            let next = label.len();
            *label.entry(root).or_insert(next)
        })
        .collect();
    (label.len(), comp)
}

/// Face boundary walks and the per-component Euler check.
pub fn trace_faces(g: &WeightedGraph, r: &RotationSystem) -> Result<Faces> {
    let pos = positions(g, r)?;
    let nd = 2 * g.edges.len();
    let mut face_of = vec![usize::MAX; nd];
    let mut faces = Vec::new();
    for start in 0..nd {
        if face_of[start] != usize::MAX {
            continue;
        }
        let id = faces.len();
        let mut walk = Vec::new();
        let mut d = start;
        loop {
            face_of[d] = id;
            walk.push(d);
            d = next_dart(g, r, &pos, d);
            if d == start {
                break;
            }
        }
        faces.push(walk);
    }
    let (nc, comp) = components(g);
    let mut v = vec![0i64; nc];
    let mut e = vec![0i64; nc];
    let mut f = vec![0i64; nc];
    for x in 0..g.n {
        v[comp[x]] += 1;
    }
    for &(a, _, _) in &g.edges {
        e[comp[a]] += 1;
    }
    for walk in &faces {
        f[comp[g.tail(walk[0])]] += 1;
    }
    let mut euler_ok = true;
    for c in 0..nc {
        let faces_c = if e[c] == 0 { 1 } else { f[c] };
        if v[c] - e[c] + faces_c != 2 {
            euler_ok = false;
        }
    }
    Ok(Faces { faces, face_of, euler_ok, components: nc })
}

fn require_planar(g: &WeightedGraph, r: &RotationSystem) -> Result<Faces> {
    let faces = trace_faces(g, r)?;
    if !faces.euler_ok {
        let f = faces.faces.len();
        return Err(PlanarError::NonPlanar { v: g.n, e: g.edges.len(), f });
    }
    Ok(faces)
}

// ===========================================================================
// Pfaffian orientation
// ===========================================================================

/// `orient[e]` is true when edge `e` points from `edges[e].0` to `edges[e].1`.
/// In every component, every face except one has an odd number of boundary
/// darts that agree with the orientation.
pub fn kasteleyn_orient(g: &WeightedGraph, r: &RotationSystem) -> Result<Vec<bool>> {
    let faces = require_planar(g, r)?;
    let m = g.edges.len();
    let mut orient: Vec<Option<bool>> = vec![None; m];
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.n];
    for (i, &(u, v, _)) in g.edges.iter().enumerate() {
        adj[u].push((v, i));
        adj[v].push((u, i));
    }
    // Spanning forest, oriented away from each root.
    let mut seen = vec![false; g.n];
    let mut in_tree = vec![false; m];
    for s in 0..g.n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            for &(y, i) in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    in_tree[i] = true;
                    orient[i] = Some(g.edges[i].0 == x);
                    queue.push_back(y);
                }
            }
        }
    }
    // Dual forest over non-tree edges; one root face per component.
    let nf = faces.faces.len();
    let mut dual: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nf];
    for i in 0..m {
        if !in_tree[i] {
            let (a, b) = (faces.face_of[2 * i], faces.face_of[2 * i + 1]);
            dual[a].push((b, i));
            dual[b].push((a, i));
        }
    }
    let mut parent_edge: Vec<Option<usize>> = vec![None; nf];
    let mut visited = vec![false; nf];
    let mut order = Vec::with_capacity(nf);
    for root in 0..nf {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(f) = queue.pop_front() {
            order.push(f);
            for &(h, i) in &dual[f] {
                if !visited[h] {
                    visited[h] = true;
                    parent_edge[h] = Some(i);
                    queue.push_back(h);
                }
            }
        }
    }
    for &f in order.iter().rev() {
        let Some(pe) = parent_edge[f] else { continue };
        let mut agree = 0usize;
        let mut free_dart = None;
        for &d in &faces.faces[f] {
            let e = d / 2;
            if e == pe {
                free_dart = Some(d);
                continue;
            }
            let o = orient[e].expect("children processed first");
            if o == (d % 2 == 0) {
                agree += 1;
            }
        }
        let d = free_dart.expect("parent edge lies on the face");
        // Make the parent dart agree iff the rest has even agreement.
        let want_agree = agree % 2 == 0;
        orient[pe] = Some(want_agree == (d % 2 == 0));
    }
    Ok(orient.into_iter().map(|o| o.expect("every edge oriented")).collect())
}

/// Checks the odd-agreement condition on all faces but one per component.
pub fn is_kasteleyn(g: &WeightedGraph, r: &RotationSystem, orient: &[bool]) -> Result<bool> {
    let faces = trace_faces(g, r)?;
    let (nc, comp) = components(g);
    let mut bad = vec![0usize; nc];
    for walk in &faces.faces {
        let agree = walk.iter().filter(|&&d| orient[d / 2] == (d % 2 == 0)).count();
        if agree % 2 == 0 {
            bad[comp[g.tail(walk[0])]] += 1;
        }
    }
    Ok(bad.iter().all(|&b| b <= 1))
}

// ===========================================================================
// Pfaffian
// ===========================================================================

/// Pfaffian of a skew-symmetric matrix by congruence elimination.
pub fn pfaffian(m: &[Vec<Scalar>]) -> Result<Scalar> {
    let n = m.len();
    for i in 0..n {
        if m[i].len() != n || !m[i][i].is_zero() {
            return Err(PlanarError::NotSkew(i, i));
        }
        for j in i + 1..n {
            if m[i][j] != -&m[j][i] {
                return Err(PlanarError::NotSkew(i, j));
            }
        }
    }
    if n % 2 == 1 {
        return Ok(Scalar::zero());
    }
    let mut a: Vec<Vec<Scalar>> = m.to_vec();
    let mut pf = Scalar::one();
    let mut k = 0;
    while k < n {
        let Some(j) = (k + 1..n).find(|&j| !a[k][j].is_zero()) else {
            return Ok(Scalar::zero());
        };
        if j != k + 1 {
            a.swap(k + 1, j);
            for row in a.iter_mut() {
                row.swap(k + 1, j);
            }
            pf = -pf;
        }
        let p = a[k][k + 1].clone();
        pf = &pf * &p;
        let pinv = p.inv()?;
        // Clear row/column k beyond k+1 using row/column k+1, then row/column
        // k+1 using row/column k. Only the trailing block matters afterwards.
        for i in k + 2..n {
            if !a[k][i].is_zero() {
                let c = -(&a[k][i] * &pinv);
                for t in k..n {
                    if !a[k + 1][t].is_zero() {
                        let delta = &c * &a[k + 1][t];
                        a[i][t] += &delta;
                    }
                }
                for t in k..n {
                    if !a[t][k + 1].is_zero() {
                        let delta = &c * &a[t][k + 1];
                        a[t][i] += &delta;
                    }
                }
            }
            if !a[k + 1][i].is_zero() {
                // a[k+1][k] = −p
                let c = &a[k + 1][i] * &pinv;
                for t in k..n {
                    if !a[k][t].is_zero() {
                        let delta = &c * &a[k][t];
                        a[i][t] += &delta;
                    }
                }
                for t in k..n {
                    if !a[t][k].is_zero() {
                        let delta = &c * &a[t][k];
                        a[t][i] += &delta;
                    }
                }
            }
        }
        k += 2;
    }
    Ok(pf)
}

fn skew_matrix(g: &WeightedGraph, orient: &[bool], unit: bool) -> Vec<Vec<Scalar>> {
    let mut a = vec![vec![Scalar::zero(); g.n]; g.n];
    for (i, (u, v, w)) in g.edges.iter().enumerate() {
        let w = if unit { Scalar::one() } else { w.clone() };
        let (s, t) = if orient[i] { (*u, *v) } else { (*v, *u) };
        a[s][t] += &w;
        a[t][s] -= &w;
    }
    a
}

/// Drops loops and zero-weight edges, keeping the induced rotation.
fn simplify(g: &WeightedGraph, r: &RotationSystem) -> (WeightedGraph, RotationSystem) {
    let mut keep = vec![None; g.edges.len()];
    let mut out = WeightedGraph::new(g.n);
    for (i, (u, v, w)) in g.edges.iter().enumerate() {
        if u != v && !w.is_zero() {
            keep[i] = Some(out.add_edge(*u, *v, w.clone()));
        }
    }
    let rot = r
        .rot
        .iter()
        .map(|ds| ds.iter().filter_map(|&d| keep[d / 2].map(|e| 2 * e + d % 2)).collect())
        .collect();
    (out, RotationSystem { rot })
}

/// `Σ_M Π_{e∈M} w(e)` over perfect matchings, via a Pfaffian orientation.
/// The global sign is fixed by the unit-weight Pfaffian, which is ±#PM.
pub fn count_pm_fkt(g: &WeightedGraph, r: &RotationSystem) -> Result<Scalar> {
    require_planar(g, r)?;
    if g.n % 2 == 1 {
        return Ok(Scalar::zero());
    }
    let (h, hr) = simplify(g, r);
    let orient = kasteleyn_orient(&h, &hr)?;
    let unit = pfaffian(&skew_matrix(&h, &orient, true))?;
    if unit.is_zero() {
        return Ok(Scalar::zero());
    }
    let sign = if unit.to_complex().re > 0.0 { Scalar::one() } else { Scalar::from(-1) };
    let pf = pfaffian(&skew_matrix(&h, &orient, false))?;
    Ok(&sign * &pf)
}

/// Perfect-matching weight sum by memoized enumeration.
pub fn brute_pm(g: &WeightedGraph) -> Result<Scalar> {
    if g.n > BRUTE_PM_CAP {
        return Err(PlanarError::Cap { what: "vertices", got: g.n, cap: BRUTE_PM_CAP });
    }
    Ok(pm_by_states(g))
}

/// Matches the lowest unmatched vertex first and memoizes on the matched set.
/// Only reachable sets are visited, so graphs whose vertex order has small
/// bandwidth stay cheap well beyond the brute-force cap. Requires `n ≤ 128`.
fn pm_by_states(g: &WeightedGraph) -> Scalar {
    assert!(g.n <= 128, "state masks hold 128 vertices");
    if g.n % 2 == 1 {
        return Scalar::zero();
    }
    let mut adj: Vec<Vec<(usize, &Scalar)>> = vec![Vec::new(); g.n];
    for (u, v, w) in &g.edges {
        if u != v {
            adj[*u].push((*v, w));
            adj[*v].push((*u, w));
        }
    }
    fn go(mask: u128, full: u128, adj: &[Vec<(usize, &Scalar)>], memo: &mut HashMap<u128, Scalar>) -> Scalar {
        if mask == full {
            return Scalar::one();
        }
        if let Some(v) = memo.get(&mask) {
            return v.clone();
        }
        let x = (!mask).trailing_zeros() as usize;
        let mut total = Scalar::zero();
        for &(y, w) in &adj[x] {
            if mask >> y & 1 == 0 {
                let rest = go(mask | 1 << x | 1 << y, full, adj, memo);
                if !rest.is_zero() {
                    total += &(w * &rest);
                }
            }
        }
        memo.insert(mask, total.clone());
        total
    }
    let full = if g.n == 128 { u128::MAX } else { (1u128 << g.n) - 1 };
    go(0, full, &adj, &mut HashMap::new())
}

// ===========================================================================
// Matchgates
// ===========================================================================

/// A planar weighted graph with external nodes listed in clockwise order
/// along the face containing `outer_dart`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matchgate {
    pub graph: WeightedGraph,
    pub rotation: RotationSystem,
    pub external: Vec<usize>,
    pub outer_dart: usize,
    /// Realized signature, filled in once validated.
    #[serde(skip)]
    pub realized: Option<Signature>,
}

/// `g(α) = f(ᾱ)`.
pub fn flip_bits(f: &Signature) -> Signature {
    let full = (1usize << f.arity()) - 1;
    Signature::from_fn(f.arity(), |idx| f.get(idx ^ full).clone())
}

/// Removes the listed vertices, renumbering the rest in order.
fn delete_vertices(g: &WeightedGraph, r: &RotationSystem, gone: &[bool]) -> (WeightedGraph, RotationSystem) {
    let mut newid = vec![usize::MAX; g.n];
    let mut n = 0;
    for v in 0..g.n {
        if !gone[v] {
            newid[v] = n;
            n += 1;
        }
    }
    let mut out = WeightedGraph::new(n);
    let mut keep = vec![None; g.edges.len()];
    for (i, (u, v, w)) in g.edges.iter().enumerate() {
        if !gone[*u] && !gone[*v] {
            keep[i] = Some(out.add_edge(newid[*u], newid[*v], w.clone()));
        }
    }
    let mut rot = vec![Vec::new(); n];
    for v in 0..g.n {
        if !gone[v] {
            rot[newid[v]] = r.rot[v].iter().filter_map(|&d| keep[d / 2].map(|e| 2 * e + d % 2)).collect();
        }
    }
    (out, RotationSystem { rot })
}

impl Matchgate {
    pub fn arity(&self) -> usize {
        self.external.len()
    }

    /// `f(α) = #PM(G − X_α)`; cached after validation.
    pub fn signature(&self) -> Result<Signature> {
        match &self.realized {
            Some(s) => Ok(s.clone()),
            None => self.compute_signature(),
        }
    }

    /// Recomputes `f(α)` by state enumeration, or FKT for large gadgets.
    pub fn compute_signature(&self) -> Result<Signature> {
        let k = self.external.len();
        let mut table = Vec::with_capacity(1 << k);
        for idx in 0..1usize << k {
            let mut gone = vec![false; self.graph.n];
            for (j, &u) in self.external.iter().enumerate() {
                gone[u] = crate::signature::bit(idx, k, j) == 1;
            }
            let (h, hr) = delete_vertices(&self.graph, &self.rotation, &gone);
            table.push(if h.n <= 128 { pm_by_states(&h) } else { count_pm_fkt(&h, &hr)? });
        }
        Ok(Signature::new(k, table)?)
    }

    /// For each external node, the dart after which a new outer-face dart is
    /// inserted in its rotation.
    fn corners(&self) -> Result<Vec<usize>> {
        let pos = positions(&self.graph, &self.rotation)?;
        let mut walk = Vec::new();
        let mut d = self.outer_dart;
        loop {
            walk.push(d);
            d = next_dart(&self.graph, &self.rotation, &pos, d);
            if d == self.outer_dart {
                break;
            }
        }
        let mut found: Vec<Option<(usize, usize)>> = vec![None; self.external.len()];
        for (step, &d) in walk.iter().enumerate() {
            let v = self.graph.head(d);
            if let Some(j) = self.external.iter().position(|&u| u == v) {
                if found[j].is_none() {
                    found[j] = Some((step, d ^ 1));
                }
            }
        }
        let found: Vec<(usize, usize)> = found
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| PlanarError::InconsistentRotation("external node off the outer face".into()))?;
        // Clockwise order along the outer walk, up to rotation.
        let steps: Vec<usize> = found.iter().map(|f| f.0).collect();
        let descents = (0..steps.len()).filter(|&j| steps[j] > steps[(j + 1) % steps.len()]).count();
        if steps.len() > 1 && descents != 1 {
            return Err(PlanarError::InconsistentRotation("external nodes out of clockwise order".into()));
        }
        Ok(found.into_iter().map(|f| f.1).collect())
    }

    /// Multiplies every edge at internal vertex `v` by `c`.
    fn scale_at(&mut self, v: usize, c: &Scalar) {
        for (a, b, w) in self.graph.edges.iter_mut() {
            if *a == v || *b == v {
                *w = &*w * c;
            }
        }
    }
}

/// Straight-line drawing: positions fix the rotation and the outer face.
struct Layout {
    pos: Vec<(f64, f64)>,
    graph: WeightedGraph,
}

impl Layout {
    fn new() -> Self {
        Layout { pos: Vec::new(), graph: WeightedGraph::new(0) }
    }

    fn node(&mut self, radius: f64, angle: f64) -> usize {
        self.pos.push((radius * angle.cos(), radius * angle.sin()));
        self.graph.n += 1;
        self.graph.n - 1
    }

    fn edge(&mut self, u: usize, v: usize, w: Scalar) {
        self.graph.add_edge(u, v, w);
    }

    fn finish(self, external: Vec<usize>) -> Result<Matchgate> {
        let g = self.graph;
        let angle = |d: usize| {
            let (a, b) = (self.pos[g.tail(d)], self.pos[g.head(d)]);
            (b.1 - a.1).atan2(b.0 - a.0)
        };
        let mut rot = vec![Vec::new(); g.n];
        for d in 0..2 * g.edges.len() {
            rot[g.tail(d)].push(d);
        }
        for ds in rot.iter_mut() {
            // Clockwise = decreasing angle.
            ds.sort_by(|&x, &y| angle(y).total_cmp(&angle(x)));
        }
        let rotation = RotationSystem { rot };
        let faces = require_planar(&g, &rotation)?;
        let area = |walk: &[usize]| -> f64 {
            walk.iter()
                .map(|&d| {
                    let (a, b) = (self.pos[g.tail(d)], self.pos[g.head(d)]);
                    a.0 * b.1 - b.0 * a.1
                })
                .sum()
        };
        let outer = faces
            .faces
            .iter()
            .min_by(|x, y| area(x).total_cmp(&area(y)))
            .ok_or_else(|| PlanarError::InconsistentRotation("matchgate without edges".into()))?;
        let mg = Matchgate { outer_dart: outer[0], graph: g, rotation, external, realized: None };
        mg.corners()?;
        Ok(mg)
    }
}

fn ring_angle(j: usize, k: usize) -> f64 {
    std::f64::consts::FRAC_PI_2 - std::f64::consts::TAU * j as f64 / k as f64
}

/// Even-parity chain realizing `[1,0,r,0,r²,…]` on `n` externals (n ≥ 1);
/// returns the layout, its externals and an always-present internal node.
fn parity_chain(n: usize, r: &Scalar) -> Result<(Layout, Vec<usize>, usize)> {
    let rinv = r.inv()?;
    let slots = n.max(3);
    let mut l = Layout::new();
    let gadgets = slots - 2;
    // Externals on the unit circle: a_1, b_1, …, b_{g}, d_{g}.
    let phi: Vec<f64> = (0..slots).map(|j| ring_angle(j, slots)).collect();
    let mut externals = Vec::new();
    let mut prev_d = None;
    let mut first_c = None;
    for j in 0..gadgets {
        let c = l.node(0.55, phi[j + 1]);
        first_c.get_or_insert(c);
        let a = match prev_d {
            None => l.node(1.0, phi[0]),
            Some(_) => l.node(0.75, phi[j] + (phi[j + 1] - phi[j]) * 0.6),
        };
        let b = l.node(1.0, phi[j + 1]);
        let d = if j + 1 == gadgets {
            l.node(1.0, phi[j + 2])
        } else {
            l.node(0.75, phi[j + 1] + (phi[j + 2] - phi[j + 1]) * 0.3)
        };
        l.edge(c, a, r.clone());
        l.edge(c, b, r.clone());
        l.edge(c, d, r.clone());
        l.edge(a, b, rinv.clone());
        if let Some(pd) = prev_d {
            l.edge(pd, a, rinv.clone());
        } else {
            externals.push(a);
        }
        externals.push(b);
        if j + 1 == gadgets {
            externals.push(d);
        }
        prev_d = Some(d);
    }
    // Fewer than three externals: the trailing ones stay internal (pinned to 0).
    externals.truncate(n);
    Ok((l, externals, first_c.expect("at least one gadget")))
}

/// An explicit planar matchgate realizing `form.c · pattern(form, r)` at arity `k`.
pub fn matchgate_for_form(form: &MatchgateForm, k: usize) -> Result<Matchgate> {
    let bad = PlanarError::IncompatibleForm { form: form.form, arity: k };
    if k == 0 || !(1..=6).contains(&form.form) {
        return Err(bad);
    }
    let mut target_values = form_pattern(form.form, &form.r, k)?;
    for v in target_values.iter_mut() {
        *v = &*v * &form.c;
    }
    let target = Signature::symmetric(target_values);
    let phi = |j: usize| ring_angle(j, k);
    let gap = |j: usize| ring_angle(j, k) - std::f64::consts::PI / k as f64;
    let (layout, external, anchor, extra) = match form.form {
        1 => {
            // u_i – p_i – a, with a pendant b: only the full set has a matching.
            let mut l = Layout::new();
            let a = l.node(0.0, 0.0);
            let b = l.node(0.3, gap(0));
            l.edge(a, b, Scalar::one());
            let mut ext = Vec::new();
            for j in 0..k {
                let p = l.node(0.5, phi(j));
                let u = l.node(1.0, phi(j));
                l.edge(a, p, Scalar::one());
                l.edge(p, u, Scalar::one());
                ext.push(u);
            }
            (l, ext, a, Scalar::one())
        }
        2 => {
            // Star at a with a pendant b: matched only once every u_i is gone.
            let mut l = Layout::new();
            let a = l.node(0.0, 0.0);
            let b = l.node(0.3, gap(0));
            l.edge(a, b, Scalar::one());
            let ext: Vec<usize> = (0..k)
                .map(|j| {
                    let u = l.node(1.0, phi(j));
                    l.edge(a, u, Scalar::one());
                    u
                })
                .collect();
            (l, ext, a, Scalar::one())
        }
        3 => {
            // Spider c – p_i – u_i: exactly one u_i removed frees c's partner.
            let mut l = Layout::new();
            let c = l.node(0.0, 0.0);
            let mut ext = Vec::new();
            for j in 0..k {
                let p = l.node(0.5, phi(j));
                let u = l.node(1.0, phi(j));
                l.edge(c, p, Scalar::one());
                l.edge(p, u, Scalar::one());
                ext.push(u);
            }
            (l, ext, c, Scalar::one())
        }
        4 => {
            // Star: exactly one leaf may remain.
            let mut l = Layout::new();
            let c = l.node(0.0, 0.0);
            let ext: Vec<usize> = (0..k)
                .map(|j| {
                    let u = l.node(1.0, phi(j));
                    l.edge(c, u, Scalar::one());
                    u
                })
                .collect();
            (l, ext, c, Scalar::one())
        }
        5 => {
            if form.r.is_zero() {
                return Err(bad);
            }
            let (l, ext, c) = parity_chain(k, &form.r)?;
            (l, ext, c, Scalar::one())
        }
        _ => {
            if form.r.is_zero() {
                return Err(bad);
            }
            // Odd parity: the even chain on k+1 externals with the last one removed,
            // which contributes an extra factor √r.
            let (mut l, mut ext, c) = parity_chain(k + 1, &form.r)?;
            let last = ext.pop().expect("k+1 externals");
            let (g, pos) = (&l.graph, &l.pos);
            let mut h = WeightedGraph::new(0);
            let mut newid = vec![usize::MAX; g.n];
            let mut newpos = Vec::new();
            for v in 0..g.n {
                if v != last {
                    newid[v] = h.n;
                    h.n += 1;
                    newpos.push(pos[v]);
                }
            }
            for (a, b, w) in &g.edges {
                if *a != last && *b != last {
                    h.add_edge(newid[*a], newid[*b], w.clone());
                }
            }
            l = Layout { pos: newpos, graph: h };
            let ext = ext.into_iter().map(|u| newid[u]).collect();
            (l, ext, newid[c], form.r.sqrt()?.inv()?)
        }
    };
    let mut mg = layout.finish(external)?;
    mg.scale_at(anchor, &(&form.c * &extra));
    let got = mg.compute_signature()?;
    if got != target {
        return Err(PlanarError::Validation { got: got.to_string(), expected: target.to_string() });
    }
    mg.realized = Some(got);
    Ok(mg)
}

/// Matchgate for a symmetric signature via its form, if it has one.
pub fn symmetric_lookup(f: &Signature) -> Option<Matchgate> {
    let s = f.as_symmetric()?;
    let form = symmetric_matchgate_form(&s)?;
    matchgate_for_form(&form, f.arity()).ok()
}

/// Any parity signature of arity at most 3 is a matchgate signature; this
/// builds one directly from the table.
pub fn small_parity_matchgate(f: &Signature) -> Result<Matchgate> {
    let k = f.arity();
    let bad = || PlanarError::Validation { got: f.to_string(), expected: "a parity signature of arity 1..=3".into() };
    let odd = match f.parity() {
        crate::signature::Parity::Even => false,
        crate::signature::Parity::Odd => true,
        _ => return Err(bad()),
    };
    if !(1..=3).contains(&k) {
        return Err(bad());
    }
    if let Some(form) = f.as_symmetric().and_then(|s| symmetric_matchgate_form(&s)) {
        return matchgate_for_form(&form, k);
    }
    let phi = |j: usize| ring_angle(j, k.max(2));
    // Entry with exactly the listed externals removed.
    let at = |gone: &[usize]| f.get(gone.iter().map(|&j| 1usize << (k - 1 - j)).sum()).clone();
    let mut l = Layout::new();
    let ext: Vec<usize> = (0..k).map(|j| l.node(1.0, phi(j))).collect();
    // Arity 1 and even arity 2 are symmetric and handled above.
    match (k, odd) {
        (2, _) => {
            let c = l.node(0.0, 0.0);
            l.edge(c, ext[0], at(&[1]));
            l.edge(c, ext[1], at(&[0]));
        }
        (_, false) => {
            // Star c – u_i weighted by the entry keeping only u_i, plus one chord.
            let c = l.node(0.0, 0.0);
            let keep = |i: usize| at(&(0..3).filter(|&j| j != i).collect::<Vec<_>>());
            for i in 0..3 {
                l.edge(c, ext[i], keep(i));
            }
            let empty = at(&[]);
            if !empty.is_zero() {
                let i = (0..3).find(|&i| !keep(i).is_zero()).ok_or_else(bad)?;
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                l.edge(ext[a], ext[b], empty.try_div(&keep(i))?);
            }
        }
        _ => {
            let all = at(&[0, 1, 2]);
            if all.is_zero() {
                // Spider c – p_i – u_i: removing u_i frees p_i for c.
                let c = l.node(0.0, 0.0);
                for i in 0..3 {
                    let p = l.node(0.5, phi(i));
                    l.edge(c, p, at(&[i]));
                    l.edge(p, ext[i], Scalar::one());
                }
            } else {
                // Triangle of chords plus an internal edge c – d of weight f(111);
                // the edge c – u_1 never completes a matching.
                let c = l.node(0.2, phi(0));
                let d = l.node(0.2, phi(0) + 2.0);
                l.edge(c, d, all.clone());
                l.edge(c, ext[0], Scalar::one());
                for i in 0..3 {
                    let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                    l.edge(ext[a], ext[b], at(&[i]).try_div(&all)?);
                }
            }
        }
    }
    let mut mg = l.finish(ext)?;
    let got = mg.compute_signature()?;
    if got != *f {
        return Err(PlanarError::Validation { got: got.to_string(), expected: f.to_string() });
    }
    mg.realized = Some(got);
    Ok(mg)
}

/// Symmetric forms first, then direct constructions for arity at most 3.
pub fn default_lookup(f: &Signature) -> Option<Matchgate> {
    symmetric_lookup(f).or_else(|| small_parity_matchgate(f).ok())
}

// ===========================================================================
// Instance embeddings and matchgate evaluation
// ===========================================================================

/// Clockwise port order at each vertex of a Holant instance.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Embedding {
    pub rotation: Vec<Vec<usize>>,
}

impl Embedding {
    /// Ports in numeric order at every vertex.
    pub fn identity(inst: &HolantInstance) -> Self {
        Embedding { rotation: inst.vertices.iter().map(|v| (0..v.signature.arity()).collect()).collect() }
    }

    /// The underlying multigraph (unit weights) and its rotation system.
    pub fn rotation_system(&self, inst: &HolantInstance) -> Result<(WeightedGraph, RotationSystem)> {
        let g = WeightedGraph {
            n: inst.num_vertices(),
            edges: inst.edges.iter().map(|e| (e.a.vertex, e.b.vertex, Scalar::one())).collect(),
        };
        let pe = inst.port_edges();
        if self.rotation.len() != inst.num_vertices() {
            return Err(PlanarError::InconsistentRotation("one port order per vertex required".into()));
        }
        let mut rot = Vec::with_capacity(g.n);
        for (v, ports) in self.rotation.iter().enumerate() {
            let mut ds = Vec::with_capacity(ports.len());
            for &p in ports {
                let e = pe[v].get(p).copied().flatten().ok_or_else(|| {
                    PlanarError::InconsistentRotation(format!("port {p} of vertex {v} has no edge"))
                })?;
                let edge = &inst.edges[e];
                let d = if edge.a == crate::instance::PortRef::new(v, p) { 2 * e } else { 2 * e + 1 };
                ds.push(d);
            }
            rot.push(ds);
        }
        Ok((g, RotationSystem { rot }))
    }

    pub fn is_planar(&self, inst: &HolantInstance) -> Result<bool> {
        let (g, r) = self.rotation_system(inst)?;
        Ok(trace_faces(&g, &r)?.euler_ok)
    }

    /// The embedding of `G^τ` given the port map from `restrict_with_map`.
    pub fn restrict(&self, port_map: &[Vec<Option<usize>>]) -> Embedding {
        Embedding {
            rotation: self
                .rotation
                .iter()
                .enumerate()
                .map(|(v, ports)| ports.iter().filter_map(|&p| port_map[v].get(p).copied().flatten()).collect())
                .collect(),
        }
    }
}

/// `Z(I) = #PM(G')`, where `G'` replaces each vertex by its matchgate with
/// external nodes attached in the vertex's clockwise port order. `lookup`
/// receives the signature with its variables in that clockwise order.
pub fn eval_planar_matchgate_holant<L>(inst: &HolantInstance, emb: &Embedding, lookup: L) -> Result<Scalar>
where
    L: Fn(&Signature) -> Option<Matchgate>,
{
    inst.validate()?;
    let (ig, ir) = emb.rotation_system(inst)?;
    require_planar(&ig, &ir)?;
    let mut constant = Scalar::one();
    let mut g = WeightedGraph::new(0);
    let mut rot: Vec<Vec<usize>> = Vec::new();
    // (external node in G', dart after which the new edge goes) per (vertex, port)
    let mut attach: Vec<Vec<(usize, usize)>> = vec![Vec::new(); inst.num_vertices()];
    let mut cache: Vec<(Signature, Matchgate, Signature, Vec<usize>)> = Vec::new();
    for (v, vert) in inst.vertices.iter().enumerate() {
        let f = &vert.signature;
        if f.arity() == 0 {
            constant = &constant * f.get(0);
            continue;
        }
        if f.is_zero() {
            return Ok(Scalar::zero());
        }
        let order = &emb.rotation[v];
        let mut inverse = vec![0; order.len()];
        for (j, &p) in order.iter().enumerate() {
            inverse[p] = j;
        }
        let clockwise = f.permute(&inverse)?;
        let idx = match cache.iter().position(|c| c.0 == clockwise) {
            Some(i) => i,
            None => {
                let mg = lookup(&clockwise).ok_or(PlanarError::MissingMatchgate(v))?;
                let realized = mg.signature()?;
                let corners = mg.corners()?;
                cache.push((clockwise.clone(), mg, realized, corners));
                cache.len() - 1
            }
        };
        let (_, mg, realized, corners) = &cache[idx];
        if mg.arity() != f.arity() || *realized != clockwise {
            return Err(PlanarError::OrderMismatch(v));
        }
        let off = g.n;
        let dart_off = 2 * g.edges.len();
        g.n += mg.graph.n;
        for (a, b, w) in &mg.graph.edges {
            g.add_edge(a + off, b + off, w.clone());
        }
        for ds in &mg.rotation.rot {
            rot.push(ds.iter().map(|d| d + dart_off).collect());
        }
        let mut per_port = vec![(0, 0); f.arity()];
        for (j, &p) in order.iter().enumerate() {
            per_port[p] = (mg.external[j] + off, corners[j] + dart_off);
        }
        attach[v] = per_port;
    }
    // Insert connecting edges; `after` tracks the latest dart placed in each corner
    // so that several insertions at one corner keep the clockwise port order.
    for e in &inst.edges {
        let (ua, ca) = attach[e.a.vertex][e.a.port];
        let (ub, cb) = attach[e.b.vertex][e.b.port];
        let id = g.add_edge(ua, ub, Scalar::one());
        for (u, c, d) in [(ua, ca, 2 * id), (ub, cb, 2 * id + 1)] {
            let ring = &mut rot[u];
            let at = ring.iter().position(|&x| x == c).expect("corner dart present");
            ring.insert(at + 1, d);
        }
    }
    let r = RotationSystem { rot };
    Ok(&constant * &count_pm_fkt(&g, &r)?)
}

/// Caps for apex evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApexConfig {
    pub a_max: usize,
    pub k_max: usize,
}

impl Default for ApexConfig {
    fn default() -> Self {
        ApexConfig { a_max: 3, k_max: 6 }
    }
}

/// Sums planar matchgate evaluations of `I^σ` over all assignments `σ` to the
/// edges incident to `apex`; `emb` must embed `I − apex`.
pub fn eval_apex_matchgate_holant<L>(
    inst: &HolantInstance,
    apex: &[usize],
    emb: &Embedding,
    lookup: L,
    cfg: ApexConfig,
) -> Result<Scalar>
where
    L: Fn(&Signature) -> Option<Matchgate>,
{
    if apex.len() > cfg.a_max {
        return Err(PlanarError::Cap { what: "apex vertices", got: apex.len(), cap: cfg.a_max });
    }
    for &a in apex {
        let d = inst.vertices.get(a).ok_or(InstanceError::NoVertex(a))?.signature.arity();
        if d > cfg.k_max {
            return Err(PlanarError::Cap { what: "apex degree", got: d, cap: cfg.k_max });
        }
    }
    let incident: Vec<usize> = (0..inst.num_edges())
        .filter(|&i| apex.contains(&inst.edges[i].a.vertex) || apex.contains(&inst.edges[i].b.vertex))
        .collect();
    let mut total = Scalar::zero();
    for mask in 0..1usize << incident.len() {
        let tau: PartialAssignment = incident.iter().enumerate().map(|(j, &e)| (e, (mask >> j & 1) as u8)).collect();
        let (res, map) = inst.restrict_with_map(&tau)?;
        if apex.iter().any(|&a| res.vertices[a].signature.get(0).is_zero()) {
            continue;
        }
        let sub = emb.restrict(&map);
        total += &eval_planar_matchgate_holant(&res, &sub, &lookup)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{cycle, from_graph};
    use crate::random::{random_planar_graph, random_planar_instance, rng};
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn c4() -> (WeightedGraph, RotationSystem) {
        let g = WeightedGraph::unit(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let r = g.default_rotation();
        (g, r)
    }

    /// K4 drawn with vertex 3 in the middle of triangle 0,1,2.
    fn k4() -> (WeightedGraph, RotationSystem) {
        let mut l = Layout::new();
        for j in 0..3 {
            l.node(1.0, ring_angle(j, 3));
        }
        l.node(0.0, 0.0);
        for (u, v) in [(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)] {
            l.edge(u, v, Scalar::one());
        }
        let mg = l.finish(vec![]).unwrap();
        (mg.graph, mg.rotation)
    }

    #[test]
    fn faces_of_small_graphs() {
        let (g, r) = c4();
        let f = trace_faces(&g, &r).unwrap();
        assert_eq!(f.faces.len(), 2);
        assert!(f.euler_ok);
        let (g, r) = k4();
        let f = trace_faces(&g, &r).unwrap();
        assert_eq!(f.faces.len(), 4);
        assert!(f.euler_ok);
    }

    fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
        if v.len() <= 1 {
            return vec![v.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..v.len() {
            let mut rest = v.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn k5_has_no_planar_rotation() {
        let edges: Vec<(usize, usize)> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect();
        let g = WeightedGraph::unit(5, &edges);
        let base = g.default_rotation();
        // Cyclic orders: fix the first dart, permute the other three.
        let choices: Vec<Vec<Vec<usize>>> = base
            .rot
            .iter()
            .map(|ds| permutations(&ds[1..]).into_iter().map(|p| std::iter::once(ds[0]).chain(p).collect()).collect())
            .collect();
        let mut best_faces = 0;
        for code in 0..6usize.pow(5) {
            let rot = (0..5).map(|v| choices[v][code / 6usize.pow(v as u32) % 6].clone()).collect();
            let f = trace_faces(&g, &RotationSystem { rot }).unwrap();
            assert!(!f.euler_ok);
            best_faces = best_faces.max(f.faces.len());
        }
        assert!(best_faces < 7);
    }

    #[test]
    fn inconsistent_rotations_rejected() {
        let (g, _) = c4();
        let bad = RotationSystem { rot: vec![vec![0, 0], vec![2, 1], vec![4, 3], vec![6, 5]] };
        assert!(trace_faces(&g, &bad).is_err());
    }

    #[test]
    fn kasteleyn_examples() {
        let g = WeightedGraph::unit(2, &[(0, 1)]);
        let r = g.default_rotation();
        assert_eq!(kasteleyn_orient(&g, &r).unwrap().len(), 1);
        for (g, r) in [c4(), k4()] {
            let o = kasteleyn_orient(&g, &r).unwrap();
            assert!(is_kasteleyn(&g, &r, &o).unwrap());
        }
    }

    #[test]
    fn pfaffian_examples() {
        let a = Scalar::from(5);
        let m = vec![vec![Scalar::zero(), a.clone()], vec![-&a, Scalar::zero()]];
        assert_eq!(pfaffian(&m).unwrap(), a);
        let odd = vec![vec![Scalar::zero(); 3]; 3];
        assert_eq!(pfaffian(&odd).unwrap(), Scalar::zero());
        let bad = vec![vec![Scalar::zero(), Scalar::one()], vec![Scalar::one(), Scalar::zero()]];
        assert!(pfaffian(&bad).is_err());
        let mut r = rng(3);
        for _ in 0..20 {
            let mut m = vec![vec![Scalar::zero(); 4]; 4];
            for i in 0..4 {
                for j in i + 1..4 {
                    let v = Scalar::complex(r.gen_range(-4..=4), r.gen_range(-4..=4));
                    m[j][i] = -&v;
                    m[i][j] = v;
                }
            }
            let closed = &m[0][1] * &m[2][3] - &m[0][2] * &m[1][3] + &m[0][3] * &m[1][2];
            assert_eq!(pfaffian(&m).unwrap(), closed);
        }
    }

    #[test]
    fn fkt_examples() {
        let (g, r) = c4();
        assert_eq!(count_pm_fkt(&g, &r).unwrap(), Scalar::from(2));
        let (g, r) = k4();
        assert_eq!(count_pm_fkt(&g, &r).unwrap(), Scalar::from(3));
        let p3 = WeightedGraph::unit(3, &[(0, 1), (1, 2)]);
        assert_eq!(count_pm_fkt(&p3, &p3.default_rotation()).unwrap(), Scalar::zero());
    }

    #[test]
    fn brute_pm_examples() {
        let c6 = WeightedGraph::unit(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        assert_eq!(brute_pm(&c6).unwrap(), Scalar::from(2));
        let k33: Vec<(usize, usize)> = (0..3).flat_map(|i| (3..6).map(move |j| (i, j))).collect();
        assert_eq!(brute_pm(&WeightedGraph::unit(6, &k33)).unwrap(), Scalar::from(6));
        assert_eq!(brute_pm(&WeightedGraph::new(4)).unwrap(), Scalar::zero());
        assert!(brute_pm(&WeightedGraph::new(22)).is_err());
    }

    #[test]
    fn fkt_matches_brute_force_on_random_planar_multigraphs() {
        let mut r = rng(11);
        for _ in 0..60 {
            let n = r.gen_range(1..=10);
            let (g, rot) = random_planar_graph(&mut r, n, 8, &[1, 1, 2, -1, 3]);
            let o = kasteleyn_orient(&g, &rot).unwrap();
            assert!(is_kasteleyn(&g, &rot, &o).unwrap());
            assert_eq!(count_pm_fkt(&g, &rot).unwrap(), brute_pm(&g).unwrap());
        }
    }

    fn form(form: u8, r: Scalar, c: Scalar) -> MatchgateForm {
        MatchgateForm { form, r, c }
    }

    #[test]
    fn matchgates_for_every_form() {
        for k in 1..=5 {
            for f in 1..=4u8 {
                let mg = matchgate_for_form(&form(f, Scalar::one(), Scalar::one()), k).unwrap();
                let expect = Signature::symmetric(form_pattern(f, &Scalar::one(), k).unwrap());
                assert_eq!(mg.compute_signature().unwrap(), expect, "form {f} arity {k}");
            }
            for r in [Scalar::from(2), Scalar::from(-2), Scalar::i(), Scalar::one()] {
                for f in 5..=6u8 {
                    let mg = matchgate_for_form(&form(f, r.clone(), Scalar::from(3)), k).unwrap();
                    let expect: Vec<Scalar> =
                        form_pattern(f, &r, k).unwrap().iter().map(|x| x * &Scalar::from(3)).collect();
                    assert_eq!(mg.compute_signature().unwrap(), Signature::symmetric(expect));
                }
            }
        }
        assert!(matchgate_for_form(&form(5, Scalar::zero(), Scalar::one()), 3).is_err());
        assert!(matchgate_for_form(&form(2, Scalar::one(), Scalar::one()), 0).is_err());
    }

    #[test]
    fn matchgate_small_targets() {
        let r = Scalar::from(5);
        let mg = matchgate_for_form(&form(5, r.clone(), Scalar::one()), 2).unwrap();
        assert_eq!(mg.compute_signature().unwrap(), Signature::symmetric(vec![Scalar::one(), Scalar::zero(), r]));
        let mg = symmetric_lookup(&Signature::sym(&[0, 1, 0])).unwrap();
        assert_eq!(mg.compute_signature().unwrap(), Signature::sym(&[0, 1, 0]));
        let mg = symmetric_lookup(&Signature::sym(&[1, 0, 2, 0, 4])).unwrap();
        assert_eq!(mg.compute_signature().unwrap(), Signature::sym(&[1, 0, 2, 0, 4]));
        assert!(symmetric_lookup(&Signature::sym(&[1, 0, 0, 1])).is_none());
        assert_eq!(flip_bits(&Signature::sym(&[1, 0, 2, 0])), Signature::sym(&[0, 2, 0, 1]));
    }

    #[test]
    fn planar_evaluation_examples() {
        let c4 = cycle(4, &Signature::sym(&[0, 1, 0]));
        let emb = Embedding::identity(&c4);
        assert_eq!(eval_planar_matchgate_holant(&c4, &emb, symmetric_lookup).unwrap(), Scalar::from(2));
        let mut lp = HolantInstance::new();
        lp.add_vertex(Signature::sym(&[1, 0, 1]));
        lp.add_edge((0, 0), (0, 1));
        let emb = Embedding::identity(&lp);
        assert_eq!(eval_planar_matchgate_holant(&lp, &emb, symmetric_lookup).unwrap(), Scalar::from(2));
        let mut r = rng(5);
        for _ in 0..10 {
            let (inst, emb) = random_planar_instance(&mut r, 8, 10, |d| form_five(d, 2));
            assert_eq!(
                eval_planar_matchgate_holant(&inst, &emb, symmetric_lookup).unwrap(),
                inst.brute_force_z().unwrap()
            );
        }
    }

    fn random_parity(r: &mut crate::random::TestRng, k: usize) -> Signature {
        let odd = r.gen_bool(0.5) as u32;
        loop {
            let table = (0..1usize << k)
                .map(|idx| if (idx as u32).count_ones() % 2 == odd { Scalar::from([0, 1, 2, -3][r.gen_range(0..4)]) } else { Scalar::zero() })
                .collect();
            let f = Signature::new(k, table).unwrap();
            if !f.is_zero() {
                return f;
            }
        }
    }

    #[test]
    fn small_parity_matchgates() {
        let mut r = rng(17);
        for k in 1..=3 {
            for _ in 0..40 {
                let f = random_parity(&mut r, k);
                let mg = small_parity_matchgate(&f).unwrap();
                assert_eq!(mg.compute_signature().unwrap(), f);
            }
        }
        let f = Signature::from_ints(&[0, 1, 1, 0, 1, 0, 0, 5]);
        assert_eq!(small_parity_matchgate(&f).unwrap().compute_signature().unwrap(), f);
        assert!(small_parity_matchgate(&Signature::from_ints(&[1, 1, 0, 0])).is_err());
        assert!(small_parity_matchgate(&Signature::zero(2)).is_err());
    }

    #[test]
    fn lookup_sees_clockwise_order() {
        let mut r = rng(23);
        for _ in 0..25 {
            let (inst, _) = random_planar_instance(&mut r, 7, 6, |d| if d <= 3 { Signature::zero(d) } else { form_five(d, 2) });
            // Fresh asymmetric signatures, then a random relabelling of every vertex's ports.
            let mut out = HolantInstance::new();
            let mut perms = Vec::new();
            for v in &inst.vertices {
                let k = v.signature.arity();
                let f = if k >= 1 && k <= 3 { random_parity(&mut r, k) } else { v.signature.clone() };
                let mut pi: Vec<usize> = (0..k).collect();
                pi.shuffle(&mut r);
                out.add_vertex(f.permute(&pi).unwrap());
                perms.push(pi);
            }
            for e in &inst.edges {
                out.add_edge((e.a.vertex, perms[e.a.vertex][e.a.port]), (e.b.vertex, perms[e.b.vertex][e.b.port]));
            }
            let emb = Embedding { rotation: perms.clone() };
            assert_eq!(eval_planar_matchgate_holant(&out, &emb, default_lookup).unwrap(), out.brute_force_z().unwrap());
        }
    }

    fn form_five(d: usize, r: i64) -> Signature {
        Signature::sym(&(0..=d).map(|w| if w % 2 == 0 { r.pow(w as u32 / 2) } else { 0 }).collect::<Vec<_>>())
    }

    #[test]
    fn non_planar_instances_rejected() {
        let edges: Vec<(usize, usize)> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect();
        let k5 = from_graph(5, &edges, |d| form_five(d, 2));
        let emb = Embedding::identity(&k5);
        assert!(matches!(
            eval_planar_matchgate_holant(&k5, &emb, symmetric_lookup),
            Err(PlanarError::NonPlanar { .. })
        ));
    }

    #[test]
    fn apex_evaluation_examples() {
        let c4 = cycle(4, &Signature::sym(&[0, 1, 0]));
        let emb = Embedding::identity(&c4);
        assert_eq!(
            eval_apex_matchgate_holant(&c4, &[], &emb, symmetric_lookup, ApexConfig::default()).unwrap(),
            Scalar::from(2)
        );
        // Wheel W4: hub 4 joined to a 4-cycle; rim vertices have degree 3.
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1), (4, 2), (4, 3)];
        let w4 = from_graph(5, &edges, |d| if d == 4 { Signature::sym(&[1, 0, 1, 0, 1]) } else { Signature::sym(&[0, 1, 0, 0]) });
        let emb = Embedding::identity(&w4);
        assert_eq!(
            eval_apex_matchgate_holant(&w4, &[4], &emb, symmetric_lookup, ApexConfig::default()).unwrap(),
            w4.brute_force_z().unwrap()
        );
        // Apex joined to every vertex of a 6-cycle.
        let mut edges: Vec<(usize, usize)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        edges.extend((0..6).map(|i| (6, i)));
        let inst = from_graph(7, &edges, |d| if d == 6 { Signature::sym(&[1, 0, 1, 0, 1, 0, 1]) } else { form_five(3, 3) });
        let emb = Embedding::identity(&inst);
        assert_eq!(
            eval_apex_matchgate_holant(&inst, &[6], &emb, symmetric_lookup, ApexConfig::default()).unwrap(),
            inst.brute_force_z().unwrap()
        );
        assert!(eval_apex_matchgate_holant(&inst, &[0, 1, 2, 3], &emb, symmetric_lookup, ApexConfig::default()).is_err());
    }
}
