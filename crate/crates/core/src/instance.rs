//! Holant instances, gadgets, partial assignments and the brute-force oracle.
//!
//! Vertices carry signatures whose ports are numbered `0..arity`. Edges join
//! two `(vertex, port)` endpoints and are identified by their index, so
//! multi-edges and self-loops are ordinary edges. A [`Gadget`] additionally
//! lists dangling ports in the order that defines its realized signature.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::signature::{Signature, SignatureError};

pub const BRUTE_EDGE_CAP: usize = 30;
pub const PARTIAL_SUM_CAP: usize = 20;
pub const DANGLING_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("vertex {0} does not exist")]
    NoVertex(usize),
    #[error("port {port} out of range for vertex {vertex}")]
    BadPort { vertex: usize, port: usize },
    #[error("port {port} of vertex {vertex} used twice")]
    PortReused { vertex: usize, port: usize },
    #[error("port {port} of vertex {vertex} is unused")]
    PortUnused { vertex: usize, port: usize },
    #[error("edge {0} joins two vertices on the same side")]
    NotBipartite(usize),
    #[error("edge {0} does not exist")]
    NoEdge(usize),
    #[error("edge {0} listed twice")]
    DuplicateEdge(usize),
    #[error("{what}: {got} exceeds the cap of {cap}")]
    Cap { what: &'static str, got: usize, cap: usize },
    #[error("constraint scope references variable {0} of {1}")]
    ScopeOutOfRange(usize, usize),
    #[error("constraint of arity {arity} has scope of length {scope}")]
    ScopeArity { arity: usize, scope: usize },
    #[error("unknown signature name {0:?}")]
    UnknownSignature(String),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("evaluation failed: {0}")]
    Evaluator(String),
}

pub type Result<T> = std::result::Result<T, InstanceError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct PortRef {
    pub vertex: usize,
    pub port: usize,
}

impl PortRef {
    pub fn new(vertex: usize, port: usize) -> Self {
        PortRef { vertex, port }
    }
}

impl From<(usize, usize)> for PortRef {
    fn from((vertex, port): (usize, usize)) -> Self {
        PortRef { vertex, port }
    }
}

impl From<PortRef> for (usize, usize) {
    fn from(p: PortRef) -> Self {
        (p.vertex, p.port)
    }
}

/// Bipartition class of a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub signature: Signature,
    pub part: Option<Part>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub a: PortRef,
    pub b: PortRef,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.a.vertex == self.b.vertex
    }

    /// The endpoint that is not at `v`, or the other port of a self-loop.
    pub fn other(&self, at: PortRef) -> PortRef {
        if self.a == at {
            self.b
        } else {
            self.a
        }
    }
}

/// Per-vertex, per-port edge assignment: `value[e] ∈ {0,1}` for `e` in the domain.
pub type PartialAssignment = BTreeMap<usize, u8>;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct HolantInstance {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

impl HolantInstance {
    pub fn new() -> Self {
        HolantInstance::default()
    }

    pub fn add_vertex(&mut self, signature: Signature) -> usize {
        self.vertices.push(Vertex { signature, part: None });
        self.vertices.len() - 1
    }

    pub fn add_vertex_on(&mut self, signature: Signature, part: Part) -> usize {
        self.vertices.push(Vertex { signature, part: Some(part) });
        self.vertices.len() - 1
    }

    pub fn add_edge(&mut self, a: impl Into<PortRef>, b: impl Into<PortRef>) -> usize {
        self.edges.push(Edge { a: a.into(), b: b.into() });
        self.edges.len() - 1
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_bipartite_tagged(&self) -> bool {
        !self.vertices.is_empty() && self.vertices.iter().all(|v| v.part.is_some())
    }

    /// Checks that listed ports (edges plus `extra`) use every port exactly once.
    fn check_ports(&self, extra: &[PortRef]) -> Result<()> {
        let mut used: Vec<Vec<bool>> = self.vertices.iter().map(|v| vec![false; v.signature.arity()]).collect();
        let ends = self.edges.iter().flat_map(|e| [e.a, e.b]).chain(extra.iter().copied());
        for p in ends {
            let slots = used.get_mut(p.vertex).ok_or(InstanceError::NoVertex(p.vertex))?;
            let slot = slots.get_mut(p.port).ok_or(InstanceError::BadPort { vertex: p.vertex, port: p.port })?;
            if *slot {
                return Err(InstanceError::PortReused { vertex: p.vertex, port: p.port });
            }
            *slot = true;
        }
        for (v, slots) in used.iter().enumerate() {
            if let Some(port) = slots.iter().position(|&u| !u) {
                return Err(InstanceError::PortUnused { vertex: v, port });
            }
        }
        if self.is_bipartite_tagged() {
            for (i, e) in self.edges.iter().enumerate() {
                if self.vertices[e.a.vertex].part == self.vertices[e.b.vertex].part {
                    return Err(InstanceError::NotBipartite(i));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_ports(&[])
    }

    /// `port_edges()[v][p]` is the edge at port `p` of `v`, if any.
    pub fn port_edges(&self) -> Vec<Vec<Option<usize>>> {
        let mut out: Vec<Vec<Option<usize>>> =
            self.vertices.iter().map(|v| vec![None; v.signature.arity()]).collect();
        for (i, e) in self.edges.iter().enumerate() {
            out[e.a.vertex][e.a.port] = Some(i);
            out[e.b.vertex][e.b.port] = Some(i);
        }
        out
    }

    /// Neighbour vertex ids (with multiplicity, self-loops listed twice).
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for e in &self.edges {
            if e.a.vertex == v {
                out.push(e.b.vertex);
            }
            if e.b.vertex == v {
                out.push(e.a.vertex);
            }
        }
        out
    }

    pub fn to_float(&self) -> HolantInstance {
        HolantInstance {
            vertices: self
                .vertices
                .iter()
                .map(|v| Vertex { signature: v.signature.to_float(), part: v.part })
                .collect(),
            edges: self.edges.clone(),
        }
    }

    /// `ω(σ)` for a full edge assignment.
    pub fn weight(&self, sigma: &[u8]) -> Scalar {
        let pe = self.port_edges();
        let mut w = Scalar::one();
        for (v, vert) in self.vertices.iter().enumerate() {
            let idx = pe[v].iter().fold(0usize, |acc, e| (acc << 1) | sigma[e.expect("closed instance")] as usize);
            w = &w * vert.signature.get(idx);
            if w.is_zero() {
                break;
            }
        }
        w
    }

    /// `Z = Σ_σ ω(σ)` by depth-first enumeration with zero pruning.
    pub fn brute_force_z(&self) -> Result<Scalar> {
        self.brute_force_z_capped(BRUTE_EDGE_CAP)
    }

    /// [`HolantInstance::brute_force_z`] with an explicit edge cap.
    pub fn brute_force_z_capped(&self, cap: usize) -> Result<Scalar> {
        if self.edges.len() > cap {
            return Err(InstanceError::Cap { what: "edges", got: self.edges.len(), cap });
        }
        self.validate()?;
        Ok(Enumerator::new(self).sum())
    }

    /// `G^τ`: assigned edges removed, their ports pinned. Remaining edges keep
    /// their relative order.
    pub fn restrict(&self, tau: &PartialAssignment) -> Result<HolantInstance> {
        let (inst, _) = self.restrict_with_map(tau)?;
        Ok(inst)
    }

    /// As [`restrict`](Self::restrict), also returning the old-to-new port map.
    pub fn restrict_with_map(&self, tau: &PartialAssignment) -> Result<(HolantInstance, Vec<Vec<Option<usize>>>)> {
        if let Some((&e, _)) = tau.iter().find(|(&e, _)| e >= self.edges.len()) {
            return Err(InstanceError::NoEdge(e));
        }
        let mut pinned: Vec<Vec<(usize, u8)>> = vec![Vec::new(); self.vertices.len()];
        for (&e, &val) in tau {
            let edge = &self.edges[e];
            pinned[edge.a.vertex].push((edge.a.port, val));
            pinned[edge.b.vertex].push((edge.b.port, val));
        }
        let mut port_map = Vec::with_capacity(self.vertices.len());
        let mut vertices = Vec::with_capacity(self.vertices.len());
        for (v, vert) in self.vertices.iter().enumerate() {
            let (pos, bits): (Vec<usize>, Vec<u8>) = pinned[v].iter().copied().unzip();
            let signature = vert.signature.pin(&pos, &bits)?;
            let mut map = vec![None; vert.signature.arity()];
            let mut next = 0;
            for (p, slot) in map.iter_mut().enumerate() {
                if !pos.contains(&p) {
                    *slot = Some(next);
                    next += 1;
                }
            }
            port_map.push(map);
            vertices.push(Vertex { signature, part: vert.part });
        }
        let remap = |p: PortRef, map: &[Vec<Option<usize>>]| PortRef::new(p.vertex, map[p.vertex][p.port].expect("unpinned"));
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| !tau.contains_key(i))
            .map(|(_, e)| Edge { a: remap(e.a, &port_map), b: remap(e.b, &port_map) })
            .collect();
        Ok((HolantInstance { vertices, edges }, port_map))
    }

    /// `Σ_τ Z(G^τ)` over all assignments `τ` to `subset`, each term from `eval`.
    pub fn exhaustive_partial_sum<F>(&self, subset: &[usize], mut eval: F) -> Result<Scalar>
    where
        F: FnMut(&HolantInstance) -> Result<Scalar>,
    {
        if subset.len() > PARTIAL_SUM_CAP {
            return Err(InstanceError::Cap { what: "partial-sum edges", got: subset.len(), cap: PARTIAL_SUM_CAP });
        }
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(InstanceError::DuplicateEdge(w[0]));
        }
        let mut total = Scalar::zero();
        for mask in 0..1usize << subset.len() {
            let tau: PartialAssignment =
                subset.iter().enumerate().map(|(j, &e)| (e, (mask >> j & 1) as u8)).collect();
            total += &eval(&self.restrict(&tau)?)?;
        }
        Ok(total)
    }
}

/// Depth-first enumeration over edge assignments; a vertex's factor is applied
/// as soon as its last incident edge is assigned.
struct Enumerator<'a> {
    inst: &'a HolantInstance,
    ports: Vec<Vec<usize>>,
    completes: Vec<Vec<usize>>,
    values: Vec<u8>,
}

impl<'a> Enumerator<'a> {
    fn new(inst: &'a HolantInstance) -> Self {
        let ports: Vec<Vec<usize>> = inst
            .port_edges()
            .into_iter()
            .map(|ps| ps.into_iter().map(|e| e.expect("closed instance")).collect())
            .collect();
        let mut completes = vec![Vec::new(); inst.edges.len()];
        for (v, ps) in ports.iter().enumerate() {
            if let Some(&last) = ps.iter().max() {
                completes[last].push(v);
            }
        }
        Enumerator { inst, ports, completes, values: vec![0; inst.edges.len()] }
    }

    fn sum(&mut self) -> Scalar {
        let mut base = Scalar::one();
        for (v, ps) in self.ports.iter().enumerate() {
            if ps.is_empty() {
                base = &base * self.inst.vertices[v].signature.get(0);
            }
        }
        if base.is_zero() {
            return base;
        }
        self.go(0, base)
    }

    fn go(&mut self, e: usize, acc: Scalar) -> Scalar {
        if e == self.values.len() {
            return acc;
        }
        let mut total = Scalar::zero();
        for val in 0..2u8 {
            self.values[e] = val;
            let mut w = acc.clone();
            for &v in &self.completes[e] {
                let idx = self.ports[v].iter().fold(0usize, |a, &x| (a << 1) | self.values[x] as usize);
                let f = self.inst.vertices[v].signature.get(idx);
                if f.is_zero() {
                    w = Scalar::zero();
                    break;
                }
                w = &w * f;
            }
            if !w.is_zero() {
                total += &self.go(e + 1, w);
            }
        }
        total
    }
}

/// The default evaluator.
pub fn brute_force(inst: &HolantInstance) -> Result<Scalar> {
    inst.brute_force_z()
}

// ===========================================================================
// Gadgets
// ===========================================================================

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Gadget {
    pub instance: HolantInstance,
    pub dangling: Vec<PortRef>,
}

impl Gadget {
    pub fn new(instance: HolantInstance, dangling: Vec<PortRef>) -> Result<Self> {
        let g = Gadget { instance, dangling };
        g.validate()?;
        Ok(g)
    }

    /// A single vertex with every port dangling.
    pub fn single(signature: Signature) -> Self {
        let k = signature.arity();
        let mut instance = HolantInstance::new();
        instance.add_vertex(signature);
        Gadget { instance, dangling: (0..k).map(|p| PortRef::new(0, p)).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        self.instance.check_ports(&self.dangling)
    }

    /// The closed instance with dangling ports pinned to `alpha`.
    pub fn pin_dangling(&self, alpha: &[u8]) -> Result<HolantInstance> {
        let mut pinned: Vec<Vec<(usize, u8)>> = vec![Vec::new(); self.instance.vertices.len()];
        for (p, &b) in self.dangling.iter().zip(alpha) {
            pinned[p.vertex].push((p.port, b));
        }
        let mut port_map = Vec::new();
        let mut vertices = Vec::new();
        for (v, vert) in self.instance.vertices.iter().enumerate() {
            let (pos, bits): (Vec<usize>, Vec<u8>) = pinned[v].iter().copied().unzip();
            vertices.push(Vertex { signature: vert.signature.pin(&pos, &bits)?, part: vert.part });
            let mut map = vec![0; vert.signature.arity()];
            let mut next = 0;
            for (p, slot) in map.iter_mut().enumerate() {
                if !pos.contains(&p) {
                    *slot = next;
                    next += 1;
                }
            }
            port_map.push(map);
        }
        let remap = |p: PortRef| PortRef::new(p.vertex, port_map[p.vertex][p.port]);
        let edges = self.instance.edges.iter().map(|e| Edge { a: remap(e.a), b: remap(e.b) }).collect();
        Ok(HolantInstance { vertices, edges })
    }

    /// `f(α) = Z(GG^α)` with each entry computed by `eval`.
    pub fn signature_with<F>(&self, mut eval: F) -> Result<Signature>
    where
        F: FnMut(&HolantInstance) -> Result<Scalar>,
    {
        let k = self.dangling.len();
        if k > DANGLING_CAP {
            return Err(InstanceError::Cap { what: "dangling edges", got: k, cap: DANGLING_CAP });
        }
        self.validate()?;
        let mut table = Vec::with_capacity(1 << k);
        for idx in 0..1usize << k {
            let alpha = crate::signature::bits_of(idx, k);
            table.push(eval(&self.pin_dangling(&alpha)?)?);
        }
        Ok(Signature::new(k, table)?)
    }

    /// The realized signature, by brute force.
    pub fn signature(&self) -> Result<Signature> {
        self.signature_with(brute_force)
    }

    /// Disjoint union joining dangling `i` of `self` to dangling `j` of
    /// `other` for each `(i, j)`; remaining dangling edges of `self` come first.
    pub fn join(&self, other: &Gadget, pairs: &[(usize, usize)]) -> Result<Gadget> {
        let off = self.instance.vertices.len();
        let shift = |p: PortRef| PortRef::new(p.vertex + off, p.port);
        let mut instance = self.instance.clone();
        instance.vertices.extend(other.instance.vertices.iter().cloned());
        instance.edges.extend(other.instance.edges.iter().map(|e| Edge { a: shift(e.a), b: shift(e.b) }));
        for &(i, j) in pairs {
            let a = *self.dangling.get(i).ok_or(InstanceError::NoEdge(i))?;
            let b = *other.dangling.get(j).ok_or(InstanceError::NoEdge(j))?;
            instance.add_edge(a, shift(b));
        }
        let mut dangling: Vec<PortRef> =
            self.dangling.iter().enumerate().filter(|(i, _)| !pairs.iter().any(|p| p.0 == *i)).map(|(_, &p)| p).collect();
        dangling.extend(
            other.dangling.iter().enumerate().filter(|(j, _)| !pairs.iter().any(|p| p.1 == *j)).map(|(_, &p)| shift(p)),
        );
        Gadget::new(instance, dangling)
    }

    /// Subdivides every edge between two left (or untagged) vertices with a
    /// fresh right `[1,0,1]` vertex; the realized signature is unchanged.
    pub fn bipartite_rewrite(&self) -> Gadget {
        let mut out = self.clone();
        let is_left = |v: &Vertex| v.part != Some(Part::Right);
        let mut edges = Vec::with_capacity(self.instance.edges.len());
        for e in &self.instance.edges {
            let (va, vb) = (&self.instance.vertices[e.a.vertex], &self.instance.vertices[e.b.vertex]);
            if is_left(va) && is_left(vb) {
                let w = out.instance.add_vertex_on(Signature::sym(&[1, 0, 1]), Part::Right);
                edges.push(Edge { a: e.a, b: PortRef::new(w, 0) });
                edges.push(Edge { a: PortRef::new(w, 1), b: e.b });
            } else {
                edges.push(*e);
            }
        }
        if edges.len() != self.instance.edges.len() {
            for v in out.instance.vertices.iter_mut() {
                v.part.get_or_insert(Part::Left);
            }
        }
        out.instance.edges = edges;
        out
    }
}

// ===========================================================================
// #CSP translation
// ===========================================================================

/// Bipartite instance with a left vertex per constraint (port `i` ↔ scope
/// entry `i`) and a right `=_d` vertex per variable of degree `d`. A variable
/// of degree 0 becomes an arity-0 vertex of value 2.
pub fn csp_to_holant(num_vars: usize, constraints: &[(Signature, Vec<usize>)]) -> Result<HolantInstance> {
    let mut occurrences: Vec<Vec<PortRef>> = vec![Vec::new(); num_vars];
    let mut inst = HolantInstance::new();
    for (sig, scope) in constraints {
        if sig.arity() != scope.len() {
            return Err(InstanceError::ScopeArity { arity: sig.arity(), scope: scope.len() });
        }
        let c = inst.add_vertex_on(sig.clone(), Part::Left);
        for (p, &x) in scope.iter().enumerate() {
            occurrences.get_mut(x).ok_or(InstanceError::ScopeOutOfRange(x, num_vars))?.push(PortRef::new(c, p));
        }
    }
    for occ in occurrences {
        let sig = if occ.is_empty() { Signature::constant(Scalar::from(2)) } else { Signature::equality(occ.len()) };
        let v = inst.add_vertex_on(sig, Part::Right);
        for (p, end) in occ.into_iter().enumerate() {
            inst.add_edge(end, PortRef::new(v, p));
        }
    }
    inst.validate()?;
    Ok(inst)
}

/// `Σ_x Π_c f_c(x|scope_c)` by enumeration.
pub fn csp_brute_force(num_vars: usize, constraints: &[(Signature, Vec<usize>)]) -> Scalar {
    let mut total = Scalar::zero();
    for x in 0..1usize << num_vars {
        let mut w = Scalar::one();
        for (sig, scope) in constraints {
            let idx = scope.iter().fold(0usize, |a, &v| (a << 1) | (x >> v & 1));
            w = &w * sig.get(idx);
            if w.is_zero() {
                break;
            }
        }
        total += &w;
    }
    total
}

// ===========================================================================
// JSON files
// ===========================================================================

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexEntry {
    pub signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ports: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Part>,
}

/// On-disk form: named signatures, vertices, edges and dangling ports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub signatures: BTreeMap<String, Signature>,
    pub vertices: Vec<VertexEntry>,
    pub edges: Vec<(PortRef, PortRef)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dangling: Vec<PortRef>,
}

impl InstanceFile {
    pub fn to_gadget(&self) -> Result<Gadget> {
        let mut instance = HolantInstance::new();
        for (v, entry) in self.vertices.iter().enumerate() {
            let sig = self
                .signatures
                .get(&entry.signature)
                .ok_or_else(|| InstanceError::UnknownSignature(entry.signature.clone()))?;
            if let Some(p) = entry.ports {
                if p != sig.arity() {
                    return Err(InstanceError::BadPort { vertex: v, port: p });
                }
            }
            instance.vertices.push(Vertex { signature: sig.clone(), part: entry.side });
        }
        for &(a, b) in &self.edges {
            instance.add_edge(a, b);
        }
        Gadget::new(instance, self.dangling.clone())
    }

    pub fn to_instance(&self) -> Result<HolantInstance> {
        let g = self.to_gadget()?;
        if let Some(p) = g.dangling.first() {
            return Err(InstanceError::PortUnused { vertex: p.vertex, port: p.port });
        }
        Ok(g.instance)
    }

    pub fn from_gadget(g: &Gadget) -> Self {
        let mut names: Vec<(String, Signature)> = Vec::new();
        let mut vertices = Vec::new();
        for v in &g.instance.vertices {
            let name = match names.iter().find(|(_, s)| *s == v.signature) {
                Some((n, _)) => n.clone(),
                None => {
                    let n = format!("s{}", names.len());
                    names.push((n.clone(), v.signature.clone()));
                    n
                }
            };
            vertices.push(VertexEntry { signature: name, ports: Some(v.signature.arity()), side: v.part });
        }
        InstanceFile {
            signatures: names.into_iter().collect(),
            vertices,
            edges: g.instance.edges.iter().map(|e| (e.a, e.b)).collect(),
            dangling: g.dangling.clone(),
        }
    }

    pub fn from_instance(inst: &HolantInstance) -> Self {
        InstanceFile::from_gadget(&Gadget { instance: inst.clone(), dangling: Vec::new() })
    }
}

// ===========================================================================
// Small constructors
// ===========================================================================

/// A cycle of `n` vertices all carrying `sig` (arity 2); edge `i` joins
/// port 1 of vertex `i` to port 0 of vertex `i+1`.
pub fn cycle(n: usize, sig: &Signature) -> HolantInstance {
    let mut inst = HolantInstance::new();
    for _ in 0..n {
        inst.add_vertex(sig.clone());
    }
    for i in 0..n {
        inst.add_edge((i, 1), ((i + 1) % n, 0));
    }
    inst
}

/// Builds an instance from an edge list over vertices `0..n`, assigning ports
/// in order of appearance and giving vertex `v` the signature `sig(deg(v))`.
pub fn from_graph(n: usize, edges: &[(usize, usize)], sig: impl Fn(usize) -> Signature) -> HolantInstance {
    let mut deg = vec![0usize; n];
    let mut ends = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        let pu = deg[u];
        deg[u] += 1;
        let pv = deg[v];
        deg[v] += 1;
        ends.push((PortRef::new(u, pu), PortRef::new(v, pv)));
    }
    let mut inst = HolantInstance::new();
    for &d in &deg {
        inst.add_vertex(sig(d));
    }
    for (a, b) in ends {
        inst.add_edge(a, b);
    }
    inst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_instance, rng};
    use crate::signature::bits_of;
    use proptest::prelude::*;
    use rand::Rng;

    fn matching() -> Signature {
        Signature::sym(&[0, 1, 0])
    }

    /// Direct `Σ_σ ω(σ)` without pruning.
    fn z_oracle(inst: &HolantInstance) -> Scalar {
        (0..1usize << inst.num_edges()).map(|s| inst.weight(&bits_of(s, inst.num_edges()))).sum()
    }

    #[test]
    fn csp_examples() {
        let z = |n, cs: &[(Signature, Vec<usize>)]| csp_to_holant(n, cs).unwrap().brute_force_z().unwrap();
        assert_eq!(z(1, &[(Signature::sym(&[1, 0]), vec![0])]), Scalar::one());
        assert_eq!(z(2, &[(Signature::equality(2), vec![0, 1])]), Scalar::from(2));
        let three = [(Signature::sym(&[0, 0, 1, 0]), vec![0, 1, 2])];
        assert_eq!(csp_brute_force(3, &three), Scalar::from(3));
        assert_eq!(z(3, &three), Scalar::from(3));
        // An unconstrained variable doubles the count.
        assert_eq!(z(2, &[(Signature::sym(&[1, 0]), vec![0])]), Scalar::from(2));
        assert!(csp_to_holant(1, &[(Signature::sym(&[1, 0]), vec![3])]).is_err());
        let inst = csp_to_holant(2, &[(Signature::equality(2), vec![0, 1])]).unwrap();
        assert!(inst.is_bipartite_tagged());
    }

    #[test]
    fn brute_force_examples() {
        let c4 = cycle(4, &matching());
        assert_eq!(z_oracle(&c4), Scalar::from(2));
        assert_eq!(c4.brute_force_z().unwrap(), Scalar::from(2));
        assert_eq!(cycle(3, &matching()).brute_force_z().unwrap(), Scalar::zero());
        let mut lp = HolantInstance::new();
        lp.add_vertex(Signature::sym(&[1, 0, 1]));
        lp.add_edge((0, 0), (0, 1));
        assert_eq!(lp.brute_force_z().unwrap(), Scalar::from(2));
        let big = cycle(31, &matching());
        assert!(matches!(big.brute_force_z(), Err(InstanceError::Cap { .. })));
    }

    #[test]
    fn validation_errors() {
        let mut inst = HolantInstance::new();
        inst.add_vertex(matching());
        inst.add_edge((0, 0), (0, 0));
        assert!(matches!(inst.validate(), Err(InstanceError::PortReused { .. })));
        let mut inst = HolantInstance::new();
        inst.add_vertex(matching());
        assert!(matches!(inst.validate(), Err(InstanceError::PortUnused { .. })));
        let mut inst = HolantInstance::new();
        inst.add_vertex_on(matching(), Part::Left);
        inst.add_vertex_on(matching(), Part::Left);
        inst.add_edge((0, 0), (1, 0));
        inst.add_edge((0, 1), (1, 1));
        assert_eq!(inst.validate(), Err(InstanceError::NotBipartite(0)));
    }

    #[test]
    fn restrict_examples() {
        let c4 = cycle(4, &matching());
        let one: PartialAssignment = [(0, 1)].into_iter().collect();
        assert_eq!(c4.restrict(&one).unwrap().brute_force_z().unwrap(), Scalar::one());
        let all: PartialAssignment = [(0, 1), (1, 0), (2, 1), (3, 0)].into_iter().collect();
        let r = c4.restrict(&all).unwrap();
        assert_eq!(r.num_edges(), 0);
        assert_eq!(r.brute_force_z().unwrap(), c4.weight(&[1, 0, 1, 0]));
        assert_eq!(c4.restrict(&PartialAssignment::new()).unwrap(), c4);
        let bad: PartialAssignment = [(9, 1)].into_iter().collect();
        assert_eq!(c4.restrict(&bad), Err(InstanceError::NoEdge(9)));
    }

    #[test]
    fn partial_sum_examples() {
        let c4 = cycle(4, &matching());
        for subset in [vec![], vec![2], vec![0, 1, 2, 3]] {
            assert_eq!(c4.exhaustive_partial_sum(&subset, brute_force).unwrap(), Scalar::from(2));
        }
        let too_many: Vec<usize> = (0..21).collect();
        assert!(c4.exhaustive_partial_sum(&too_many, brute_force).is_err());
    }

    #[test]
    fn gadget_examples() {
        // Center [0,1,0,0] with a [0,1,0] on each edge.
        let mut inst = HolantInstance::new();
        let c = inst.add_vertex(Signature::sym(&[0, 1, 0, 0]));
        let mut dangling = Vec::new();
        for p in 0..3 {
            let m = inst.add_vertex(matching());
            inst.add_edge((c, p), (m, 0));
            dangling.push(PortRef::new(m, 1));
        }
        let g = Gadget::new(inst, dangling).unwrap();
        let oracle = Signature::from_fn(3, |idx| {
            // Each [0,1,0] flips its bit; the center sees the complement.
            let inner = idx ^ 0b111;
            if inner.count_ones() == 1 { Scalar::one() } else { Scalar::zero() }
        });
        assert_eq!(oracle, Signature::sym(&[0, 0, 1, 0]));
        assert_eq!(g.signature().unwrap(), oracle);

        let r = Signature::symmetric(vec![Scalar::one(), Scalar::zero(), Scalar::complex(1, 1)]);
        assert_eq!(Gadget::single(r.clone()).signature().unwrap(), r);

        let p = Gadget::single(Signature::sym(&[1, 0, 2]));
        assert_eq!(p.join(&p, &[(1, 0)]).unwrap().signature().unwrap(), Signature::sym(&[1, 0, 4]));
        let wide = Gadget::single(Signature::zero(13));
        assert!(matches!(wide.signature(), Err(InstanceError::Cap { .. })));
    }

    #[test]
    fn bipartite_rewrite_examples() {
        let f = Gadget::single(Signature::sym(&[0, 0, 1, 0]));
        let g = f.join(&f, &[(2, 0)]).unwrap();
        let r = g.bipartite_rewrite();
        assert_eq!(r.instance.num_vertices(), 3);
        assert_eq!(r.signature().unwrap(), g.signature().unwrap());
        let again = r.bipartite_rewrite();
        assert_eq!(again, r);
        assert_eq!(Gadget::default().bipartite_rewrite(), Gadget::default());
    }

    #[test]
    fn json_round_trip() {
        let f = Gadget::single(Signature::sym(&[0, 0, 1, 0]));
        let g = f.join(&f, &[(2, 0)]).unwrap();
        let file = InstanceFile::from_gadget(&g);
        let text = serde_json::to_string(&file).unwrap();
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_gadget().unwrap(), g);
        assert_eq!(file.signatures.len(), 1);
        assert!(back.to_instance().is_err());
    }

    #[test]
    fn brute_force_matches_plain_sum() {
        let mut r = rng(7);
        for _ in 0..40 {
            let inst = random_instance(&mut r, 6, 8, &[-1, 0, 1, 2]);
            assert_eq!(inst.brute_force_z().unwrap(), z_oracle(&inst));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]
        #[test]
        fn partial_sums_recover_z(seed in any::<u64>(), k in 0usize..=4) {
            let mut r = rng(seed);
            let inst = random_instance(&mut r, 5, 8, &[-1, 0, 1, 2]);
            let mut edges: Vec<usize> = (0..inst.num_edges()).collect();
            for i in 0..edges.len() {
                let j = r.gen_range(i..edges.len());
                edges.swap(i, j);
            }
            edges.truncate(k.min(inst.num_edges()));
            prop_assert_eq!(inst.exhaustive_partial_sum(&edges, brute_force).unwrap(), inst.brute_force_z().unwrap());
        }

        #[test]
        fn csp_translation_preserves_value(seed in any::<u64>()) {
            let mut r = rng(seed);
            let n = r.gen_range(1..=8);
            let m = r.gen_range(1..=4);
            let cs: Vec<(Signature, Vec<usize>)> = (0..m)
                .map(|_| {
                    let k = r.gen_range(1..=3);
                    let scope: Vec<usize> = (0..k).map(|_| r.gen_range(0..n)).collect();
                    let sig = crate::random::random_signature(&mut r, k, &[-1, 0, 1, 2]);
                    (sig, scope)
                })
                .collect();
            let inst = csp_to_holant(n, &cs).unwrap();
            prop_assume!(inst.num_edges() <= 14);
            prop_assert_eq!(inst.brute_force_z().unwrap(), csp_brute_force(n, &cs));
        }

        #[test]
        fn gadget_join_matches_connect(a in prop::collection::vec(-2i64..=2, 8), b in prop::collection::vec(-2i64..=2, 4), i in 0usize..3, j in 0usize..2) {
            let (f, g) = (Signature::from_ints(&a), Signature::from_ints(&b));
            let joined = Gadget::single(f.clone()).join(&Gadget::single(g.clone()), &[(i, j)]).unwrap();
            prop_assert_eq!(joined.signature().unwrap(), f.connect(&g, &[(i, j)]).unwrap());
        }
    }
}
