//! Gadget verification, polynomial interpolation and the graph constructions
//! behind the hardness reductions.
//!
//! A [`GadgetPlan`] is either a concrete gadget with its target signature or
//! an interpolation [`Family`]: gadgets `G_1, G_2, …` whose realized
//! signatures are `λ_k·(base + x_k·direction)` with pairwise distinct `x_k`.
//! An instance with `n` occurrences of `base + c·direction` has `Z` equal to
//! a polynomial of degree at most `n` in `c`, so `n + 1` substituted
//! evaluations determine it.
//!
//! Constructed gadgets tag vertices built from the input signature as left
//! and the helpers `[1,0]`, `[0,1]`, `[1,0,1]`, `[1,0,1,0]` as right, then
//! subdivide any left–left edge by a right `[1,0,1]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{m_minus_a_form, symmetric_matchgate_form};
use crate::instance::{brute_force, Gadget, HolantInstance, InstanceError, InstanceFile, Part, PortRef};
use crate::planar::{trace_faces, PlanarError, RotationSystem, WeightedGraph};
use crate::scalar::{Scalar, ScalarError};
use crate::signature::{bits_of, Signature, SignatureError, SymmetricSignature};
use crate::treewidth::{dp_evaluate, heuristic_td, UGraph};

/// Largest edge count accepted by [`matching_count`].
pub const MATCHING_EDGE_CAP: usize = 24;
/// Largest vertex count for which a failed pairing search is final.
pub const PAIRING_EXHAUSTIVE_CAP: usize = 14;
/// Largest number of rotation systems tried by [`find_planar_rotation`].
pub const ROTATION_CAP: usize = 1 << 20;
/// Largest vertex count of [`search_gadget`].
pub const SEARCH_VERTEX_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("gadget realizes {realized}, not a multiple of {target}")]
    Mismatch { realized: String, target: String },
    #[error("family members {0} and {1} give the same interpolation point")]
    Collision(usize, usize),
    #[error("family member {k} realizes {realized}, outside the family span")]
    OffFamily { k: usize, realized: String },
    #[error("{f} is not of case {case}")]
    WrongCase { case: u8, f: String },
    #[error("topology search exhausted")]
    SearchExhausted,
    #[error("no outer face identified")]
    NoOuterFace,
    #[error("vertex {vertex} has degree {degree}, expected 3")]
    NotCubic { vertex: usize, degree: usize },
    #[error("{what}: {got} exceeds the cap of {cap}")]
    Cap { what: &'static str, got: usize, cap: usize },
    #[error("no planar pairing found for the given embedding")]
    PairingExhausted,
    #[error("embedding is not planar")]
    NotPlanar,
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Planar(#[from] PlanarError),
}

pub type Result<T> = std::result::Result<T, ReductionError>;

/// Exact `Z`: direct summation for small instances, the incidence-graph DP
/// otherwise.
pub fn exact_z(inst: &HolantInstance) -> crate::instance::Result<Scalar> {
    if inst.num_edges() <= 16 {
        return brute_force(inst);
    }
    let td = heuristic_td(&UGraph::incidence(inst));
    dp_evaluate(inst, &td).map_err(|e| InstanceError::Evaluator(e.to_string()))
}

/// `c` with `realized = c·target`, or `None`.
pub fn verify_gadget(gadget: &Gadget, target: &Signature) -> Option<Scalar> {
    if gadget.dangling.len() != target.arity() {
        return None;
    }
    let realized = gadget.signature_with(exact_z).ok()?;
    target.equal_up_to_scalar(&realized)
}

fn expect(gadget: &Gadget, target: &Signature) -> Result<Scalar> {
    verify_gadget(gadget, target).ok_or_else(|| {
        let realized = gadget.signature_with(exact_z).map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
        ReductionError::Mismatch { realized, target: target.to_string() }
    })
}

// ===========================================================================
// Gadget assembly
// ===========================================================================

struct Builder {
    inst: HolantInstance,
}

impl Builder {
    fn new() -> Self {
        Builder { inst: HolantInstance::new() }
    }

    fn vertex(&mut self, sig: Signature, part: Part) -> usize {
        self.inst.add_vertex_on(sig, part)
    }

    fn embed(&mut self, g: &Gadget) -> Vec<PortRef> {
        let off = self.inst.num_vertices();
        let shift = |p: PortRef| PortRef::new(p.vertex + off, p.port);
        self.inst.vertices.extend(g.instance.vertices.iter().cloned());
        for e in &g.instance.edges {
            self.inst.add_edge(shift(e.a), shift(e.b));
        }
        g.dangling.iter().map(|&p| shift(p)).collect()
    }

    fn link(&mut self, a: PortRef, b: PortRef) {
        self.inst.add_edge(a, b);
    }

    fn finish(self, dangling: Vec<PortRef>) -> Result<Gadget> {
        let g = Gadget { instance: self.inst, dangling }.bipartite_rewrite();
        g.validate()?;
        Ok(g)
    }
}

fn single(sig: Signature, part: Part) -> Gadget {
    let mut g = Gadget::single(sig);
    g.instance.vertices[0].part = Some(part);
    g
}

/// The input signature as a one-vertex left gadget.
pub fn left_vertex(f: &Signature) -> Gadget {
    single(f.clone(), Part::Left)
}

/// Pins the last `count` dangling edges of `g` with unary right vertices
/// `[1,0]` (`bit = 0`) or `[0,1]` (`bit = 1`).
pub fn pin(g: &Gadget, count: usize, bit: u8) -> Result<Gadget> {
    let k = g.dangling.len();
    if count > k {
        return Err(InstanceError::Cap { what: "pinned edges", got: count, cap: k }.into());
    }
    let unary = if bit == 0 { Signature::sym(&[1, 0]) } else { Signature::sym(&[0, 1]) };
    let mut b = Builder::new();
    let d = b.embed(g);
    for &p in &d[k - count..] {
        let u = b.vertex(unary.clone(), Part::Right);
        b.link(p, PortRef::new(u, 0));
    }
    b.finish(d[..k - count].to_vec())
}

/// `k ≥ 1` copies of the binary `unit` in a path.
pub fn chain(unit: &Gadget, k: usize) -> Result<Gadget> {
    if unit.dangling.len() != 2 || k == 0 {
        return Err(ReductionError::Unsupported("chain needs a binary unit and k >= 1".into()));
    }
    let mut b = Builder::new();
    let first = b.embed(unit);
    let mut last = first[1];
    for _ in 1..k {
        let d = b.embed(unit);
        b.link(last, d[0]);
        last = d[1];
    }
    b.finish(vec![first[0], last])
}

/// Extends every dangling edge of `center` by a copy of the binary `arm`
/// (joined at the arm's first dangling edge).
pub fn attach_arms(center: &Gadget, arm: &Gadget) -> Result<Gadget> {
    if arm.dangling.len() != 2 {
        return Err(ReductionError::Unsupported("arms must be binary".into()));
    }
    let mut b = Builder::new();
    let c = b.embed(center);
    let mut out = Vec::with_capacity(c.len());
    for p in c {
        let d = b.embed(arm);
        b.link(p, d[0]);
        out.push(d[1]);
    }
    b.finish(out)
}

// ===========================================================================
// Fixed gadgets
// ===========================================================================

fn sig_0010() -> Signature {
    Signature::sym(&[0, 0, 1, 0])
}

/// Two `[0,0,1,0]` vertices joined by a doubled edge, one dangling edge
/// each; realizes `[1,0,2]`.
pub fn gg1() -> Gadget {
    let mut inst = HolantInstance::new();
    let u = inst.add_vertex(sig_0010());
    let v = inst.add_vertex(sig_0010());
    inst.add_edge((u, 0), (v, 0));
    inst.add_edge((u, 1), (v, 1));
    Gadget { instance: inst, dangling: vec![PortRef::new(u, 2), PortRef::new(v, 2)] }
}

/// `u`, `v`, `w` carrying `[0,0,1,0]`, edges `uw` and `vw`, the third edge
/// of `w` pinned by `[0,1]`, two dangling edges at each of `u` and `v`;
/// realizes `[0,0,0,1,0]`.
pub fn gadget_00010() -> Gadget {
    let mut inst = HolantInstance::new();
    let u = inst.add_vertex(sig_0010());
    let v = inst.add_vertex(sig_0010());
    let w = inst.add_vertex(sig_0010());
    let p = inst.add_vertex(Signature::sym(&[0, 1]));
    inst.add_edge((u, 0), (w, 0));
    inst.add_edge((v, 0), (w, 1));
    inst.add_edge((w, 2), (p, 0));
    let dangling = vec![PortRef::new(u, 1), PortRef::new(u, 2), PortRef::new(v, 1), PortRef::new(v, 2)];
    Gadget { instance: inst, dangling }
}

/// `[0,0,1,0]` with one edge pinned by `[1,0]`; realizes `[0,0,1] = [0,1]⊗[0,1]`.
pub fn gadget_001() -> Gadget {
    let mut inst = HolantInstance::new();
    let u = inst.add_vertex(sig_0010());
    let p = inst.add_vertex(Signature::sym(&[1, 0]));
    inst.add_edge((u, 0), (p, 0));
    Gadget { instance: inst, dangling: vec![PortRef::new(u, 1), PortRef::new(u, 2)] }
}

/// `g(a,b,c,d) = [a=c][b=d]`: the two strands `a–c` and `b–d` of a crossing.
pub fn crossing_signature() -> Signature {
    Signature::from_fn(4, |idx| {
        let x = bits_of(idx, 4);
        Scalar::from(i64::from(x[0] == x[2] && x[1] == x[3]))
    })
}

/// `[a=c][b=d]` with the all-zero entry negated: the crossing as realized by
/// planar gadgets.
pub fn signed_crossing_signature() -> Signature {
    let g = crossing_signature();
    Signature::from_fn(4, |idx| if idx == 0 { -g.get(0) } else { g.get(idx).clone() })
}

/// Six `[0,0,1,0]` vertices and one `[1,0,−1]` vertex. The terminals `0..4`
/// carry the dangling edges `a, b, c, d` in clockwise order; the interior
/// vertices `4`, `5` are joined through the `[1,0,−1]` vertex. Realizes
/// [`signed_crossing_signature`] with scalar `−1`.
pub fn crossing_layout() -> Gadget {
    let edges = [(0, 3), (0, 5), (1, 2), (1, 5), (2, 4), (3, 4)];
    let mut inst = HolantInstance::new();
    for _ in 0..6 {
        inst.add_vertex(sig_0010());
    }
    let m = inst.add_vertex(Signature::sym(&[1, 0, -1]));
    let mut next = [0usize; 6];
    let mut port = |v: usize| {
        next[v] += 1;
        PortRef::new(v, next[v] - 1)
    };
    for &(u, v) in &edges {
        let (pu, pv) = (port(u), port(v));
        inst.add_edge(pu, pv);
    }
    let (p4, p5) = (port(4), port(5));
    inst.add_edge(p4, (m, 0));
    inst.add_edge(p5, (m, 1));
    let dangling = (0..4).map(&mut port).collect();
    Gadget { instance: inst, dangling }
}

/// The crossing gadget over six `[0,0,1,0]` and one `[1,0,−1]`: the fixed
/// layout if it realizes `c·[a=c][b=d]`, else a bounded planar search.
pub fn crossing_gadget() -> Result<GadgetPlan> {
    let target = crossing_signature();
    let layout = crossing_layout();
    if verify_gadget(&layout, &target).is_some() {
        return Ok(GadgetPlan::Concrete { gadget: layout, target });
    }
    let mut inventory = vec![sig_0010(); 6];
    inventory.push(Signature::sym(&[1, 0, -1]));
    let gadget = search_gadget(&inventory, &target, true)?.ok_or(ReductionError::SearchExhausted)?;
    Ok(GadgetPlan::Concrete { gadget, target })
}

/// Centre `[1,0,1,0]` joined to three copies `H1..H3` of the ternary `h`,
/// with `H1–H2` and `H2–H3` joined through `[1,0,1]` and one dangling edge at
/// each of `H1` and `H3`. For `h = [1,0,±i,0]` this realizes
/// `[−1∓i,0,−1∓3i]`.
pub fn vertex4_gadget(h: &Gadget) -> Result<Gadget> {
    if h.dangling.len() != 3 {
        return Err(ReductionError::Unsupported("vertex4 needs a ternary gadget".into()));
    }
    let mut b = Builder::new();
    let c = b.vertex(Signature::sym(&[1, 0, 1, 0]), Part::Right);
    let hs: Vec<Vec<PortRef>> = (0..3).map(|_| b.embed(h)).collect();
    for (j, hj) in hs.iter().enumerate() {
        b.link(PortRef::new(c, j), hj[0]);
    }
    for j in 0..2 {
        let e = b.vertex(Signature::sym(&[1, 0, 1]), Part::Right);
        b.link(hs[j][2], PortRef::new(e, 0));
        b.link(PortRef::new(e, 1), hs[j + 1][1]);
    }
    b.finish(vec![hs[0][1], hs[2][2]])
}

/// Two centres `u`, `v` carrying `[1,0,1,0]` joined by two parallel copies
/// of the binary `unit`, plus one copy hanging from each centre whose far
/// end dangles. For `unit = [1,0,r]` this realizes `[1+r²,0,2r³]`.
pub fn edge4_gadget(unit: &Gadget) -> Result<Gadget> {
    if unit.dangling.len() != 2 {
        return Err(ReductionError::Unsupported("edge4 needs a binary unit".into()));
    }
    let mut b = Builder::new();
    let u = b.vertex(Signature::sym(&[1, 0, 1, 0]), Part::Right);
    let v = b.vertex(Signature::sym(&[1, 0, 1, 0]), Part::Right);
    let outer_u = b.embed(unit);
    b.link(outer_u[1], PortRef::new(u, 0));
    for j in 1..3 {
        let d = b.embed(unit);
        b.link(PortRef::new(u, j), d[0]);
        b.link(d[1], PortRef::new(v, j));
    }
    let outer_v = b.embed(unit);
    b.link(PortRef::new(v, 0), outer_v[0]);
    b.finish(vec![outer_u[0], outer_v[1]])
}

/// Case 2 composition for `f = [0,…,0,1,0]_k`: a centre copy with three
/// dangling edges, a second copy with one edge pinned by `[1,0]`, `k − 3`
/// parallel edges between them and a self-loop on the second copy, every
/// edge subdivided by `[1,0,1]`.
pub fn hand_gadget(f: &Signature) -> Result<Gadget> {
    let k = f.arity();
    if k < 3 {
        return Err(ReductionError::Unsupported("hand gadget needs arity >= 3".into()));
    }
    let mut b = Builder::new();
    let c = b.embed(&left_vertex(f));
    let v = b.embed(&left_vertex(f));
    let p = b.vertex(Signature::sym(&[1, 0]), Part::Right);
    b.link(v[0], PortRef::new(p, 0));
    for j in 0..k - 3 {
        b.link(c[3 + j], v[1 + j]);
    }
    b.link(v[k - 2], v[k - 1]);
    b.finish(c[..3].to_vec())
}

// ===========================================================================
// Plans and interpolation families
// ===========================================================================

/// How family member `k` is assembled.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyShape {
    /// `k` copies of a binary unit in a path.
    Chain { unit: Gadget },
    /// `center` with every dangling edge extended by a chain of `k` units.
    Star { center: Gadget, unit: Gadget },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub shape: FamilyShape,
    pub base: Signature,
    pub direction: Signature,
    /// The interpolated signature is `base + at·direction`.
    pub at: Scalar,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GadgetPlan {
    Concrete { gadget: Gadget, target: Signature },
    Family(Family),
}

impl GadgetPlan {
    pub fn target(&self) -> Result<Signature> {
        match self {
            GadgetPlan::Concrete { target, .. } => Ok(target.clone()),
            GadgetPlan::Family(f) => f.target(),
        }
    }

    /// Concrete plans: the scalar `c`. Families: members `1..=members` are
    /// checked to lie in the family with distinct points; returns `λ_1`.
    pub fn verify(&self, members: usize) -> Result<Scalar> {
        match self {
            GadgetPlan::Concrete { gadget, target } => expect(gadget, target),
            GadgetPlan::Family(f) => {
                let pts = f.points(members, exact_z)?;
                Ok(pts.first().map(|p| p.0.clone()).unwrap_or_else(Scalar::one))
            }
        }
    }
}

impl Family {
    /// `[1,0,c]` interpolated from chains of a binary unit `[1,0,y]`.
    pub fn binary_chain(unit: Gadget, c: Scalar) -> Self {
        Family {
            shape: FamilyShape::Chain { unit },
            base: Signature::sym(&[1, 0, 0]),
            direction: Signature::sym(&[0, 0, 1]),
            at: c,
        }
    }

    pub fn target(&self) -> Result<Signature> {
        let mut t = Vec::with_capacity(self.base.table().len());
        for (b, d) in self.base.table().iter().zip(self.direction.table()) {
            t.push(b.try_add(&d.try_mul(&self.at)?)?);
        }
        Ok(Signature::new(self.base.arity(), t)?)
    }

    pub fn member(&self, k: usize) -> Result<Gadget> {
        match &self.shape {
            FamilyShape::Chain { unit } => chain(unit, k),
            FamilyShape::Star { center, unit } => attach_arms(center, &chain(unit, k)?),
        }
    }

    /// `(λ, x)` with `realized = λ·(base + x·direction)`, `λ ≠ 0`.
    pub fn coordinates(&self, realized: &Signature) -> Option<(Scalar, Scalar)> {
        if realized.arity() != self.base.arity() {
            return None;
        }
        let p = self.base.table().iter().position(|v| !v.is_zero())?;
        let q = self.direction.table().iter().position(|v| !v.is_zero())?;
        let lambda = realized.get(p).try_div(self.base.get(p)).ok()?;
        if lambda.is_zero() {
            return None;
        }
        let x = realized.get(q).try_div(&lambda.try_mul(self.direction.get(q)).ok()?).ok()?;
        for ((r, b), d) in realized.table().iter().zip(self.base.table()).zip(self.direction.table()) {
            let want = lambda.try_mul(&b.try_add(&d.try_mul(&x).ok()?).ok()?).ok()?;
            if want != *r {
                return None;
            }
        }
        Some((lambda, x))
    }

    /// `(λ_k, x_k)` for `k = 1..=n`, checked pairwise distinct in `x`.
    pub fn points<F>(&self, n: usize, mut eval: F) -> Result<Vec<(Scalar, Scalar)>>
    where
        F: FnMut(&HolantInstance) -> crate::instance::Result<Scalar>,
    {
        let mut pts: Vec<(Scalar, Scalar)> = Vec::with_capacity(n);
        for k in 1..=n {
            let realized = self.member(k)?.signature_with(&mut eval)?;
            let pt = self
                .coordinates(&realized)
                .ok_or_else(|| ReductionError::OffFamily { k, realized: realized.to_string() })?;
            if let Some(j) = pts.iter().position(|q| q.1 == pt.1) {
                return Err(ReductionError::Collision(j + 1, k));
            }
            pts.push(pt);
        }
        Ok(pts)
    }
}

/// Replaces every vertex in `at` (all carrying the same arity) by a copy of
/// `g`, dangling edge `p` taking the place of port `p`.
pub fn substitute(inst: &HolantInstance, at: &[usize], g: &Gadget) -> Result<HolantInstance> {
    let set: BTreeSet<usize> = at.iter().copied().collect();
    let mut b = Builder::new();
    let mut index = vec![usize::MAX; inst.num_vertices()];
    for (v, vert) in inst.vertices.iter().enumerate() {
        if !set.contains(&v) {
            index[v] = b.inst.num_vertices();
            b.inst.vertices.push(vert.clone());
        }
    }
    let mut ports: Vec<Vec<PortRef>> = vec![Vec::new(); inst.num_vertices()];
    for &v in &set {
        if inst.vertices[v].signature.arity() != g.dangling.len() {
            return Err(ReductionError::Unsupported(format!("vertex {v} arity differs from the gadget")));
        }
        ports[v] = b.embed(g);
    }
    let map = |p: PortRef| if set.contains(&p.vertex) { ports[p.vertex][p.port] } else { PortRef::new(index[p.vertex], p.port) };
    for e in &inst.edges {
        let (a, c) = (map(e.a), map(e.b));
        b.link(a, c);
    }
    // members are tagged; when the host is not, the tags carry no meaning
    if b.inst.validate().is_err() {
        for v in &mut b.inst.vertices {
            v.part = None;
        }
    }
    b.inst.validate()?;
    Ok(b.inst)
}

/// `Z(I)` where `I` contains `n` occurrences of the family target, from
/// `n + 1` evaluations with the occurrences replaced by family members.
pub fn interpolate<F>(inst: &HolantInstance, family: &Family, mut eval: F) -> Result<Scalar>
where
    F: FnMut(&HolantInstance) -> crate::instance::Result<Scalar>,
{
    let target = family.target()?;
    let occ: Vec<usize> = (0..inst.num_vertices()).filter(|&v| inst.vertices[v].signature == target).collect();
    let n = occ.len();
    if n == 0 {
        return Ok(eval(inst)?);
    }
    let mut pts = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    for k in 1..=n + 1 {
        let member = family.member(k)?;
        let realized = member.signature_with(&mut eval)?;
        let (lambda, x) = family
            .coordinates(&realized)
            .ok_or_else(|| ReductionError::OffFamily { k, realized: realized.to_string() })?;
        let z = eval(&substitute(inst, &occ, &member)?)?;
        let y = z.try_div(&lambda.pow(n as u32))?;
        if x == family.at {
            return Ok(y);
        }
        if let Some(j) = pts.iter().position(|q| *q == x) {
            return Err(ReductionError::Collision(j + 1, k));
        }
        pts.push(x);
        ys.push(y);
    }
    let mut total = Scalar::zero();
    for (k, (xk, yk)) in pts.iter().zip(&ys).enumerate() {
        let mut term = yk.clone();
        for (m, xm) in pts.iter().enumerate() {
            if m != k {
                term = term.try_mul(&family.at.try_sub(xm)?.try_div(&xk.try_sub(xm)?)?)?;
            }
        }
        total = total.try_add(&term)?;
    }
    Ok(total)
}

// ===========================================================================
// Realizing [0,0,1,0] from f ∈ M∖A
// ===========================================================================

/// One verified sub-gadget of a case plan.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseStep {
    pub name: &'static str,
    pub gadget: Gadget,
    pub target: Signature,
    pub scalar: Scalar,
}

fn step(steps: &mut Vec<CaseStep>, name: &'static str, gadget: Gadget, target: Signature) -> Result<Gadget> {
    let scalar = expect(&gadget, &target)?;
    steps.push(CaseStep { name, gadget: gadget.clone(), target, scalar });
    Ok(gadget)
}

fn sym_scalars(v: Vec<Scalar>) -> Signature {
    Signature::symmetric(v)
}

fn unit_modulus(r: &Scalar) -> bool {
    match r.conj() {
        Ok(c) => r.try_mul(&c).map(|m| m.is_one()).unwrap_or(false),
        Err(_) => (r.to_complex().norm() - 1.0).abs() < 1e-12,
    }
}

/// A plan for `[0,0,1,0]` from `f` of the given `M∖A` case (1–5).
pub fn build_case_gadget(case: u8, f: &SymmetricSignature) -> Result<GadgetPlan> {
    Ok(build_case_gadget_traced(case, f)?.0)
}

/// [`build_case_gadget`] together with every verified intermediate gadget.
pub fn build_case_gadget_traced(case: u8, f: &SymmetricSignature) -> Result<(GadgetPlan, Vec<CaseStep>)> {
    if m_minus_a_form(f) != Some(case) {
        return Err(ReductionError::WrongCase { case, f: f.to_string() });
    }
    let form = symmetric_matchgate_form(f).ok_or_else(|| ReductionError::WrongCase { case, f: f.to_string() })?;
    let sig = f.expand()?;
    let k = sig.arity();
    let one = Scalar::one;
    let zero = Scalar::zero;
    let mut steps = Vec::new();
    let plan = match case {
        1 => {
            let a = step(&mut steps, "pin k-3", pin(&left_vertex(&sig), k - 3, 0)?, Signature::sym(&[0, 1, 0, 0]))?;
            let b = step(&mut steps, "pin k-2", pin(&left_vertex(&sig), k - 2, 0)?, Signature::sym(&[0, 1, 0]))?;
            let g = step(&mut steps, "modify3", attach_arms(&a, &b)?, sig_0010())?;
            GadgetPlan::Concrete { gadget: g, target: sig_0010() }
        }
        2 => {
            let g = step(&mut steps, "hand", hand_gadget(&sig)?, sig_0010())?;
            GadgetPlan::Concrete { gadget: g, target: sig_0010() }
        }
        3 => case3(left_vertex(&sig), form.r.clone(), &mut steps)?,
        4 => case4(left_vertex(&sig), form.r.clone(), &mut steps)?,
        5 => {
            let r = form.r.clone();
            let a = pin(&left_vertex(&sig), k - 3, 0)?;
            let a = step(&mut steps, "pin k-3", a, sym_scalars(vec![zero(), one(), zero(), r.clone()]))?;
            let b = step(&mut steps, "pin k-2", pin(&left_vertex(&sig), k - 2, 0)?, Signature::sym(&[0, 1, 0]))?;
            let g = attach_arms(&a, &b)?;
            let g = step(&mut steps, "modify3", g, sym_scalars(vec![r.clone(), zero(), one(), zero()]))?;
            case4(g, r.inv()?, &mut steps)?
        }
        _ => return Err(ReductionError::WrongCase { case, f: f.to_string() }),
    };
    Ok((plan, steps))
}

/// `g` realizes a multiple of `[1,0,r,0,r²,…]` of arity at least 3.
fn case4(g: Gadget, r: Scalar, steps: &mut Vec<CaseStep>) -> Result<GadgetPlan> {
    let k = g.dangling.len();
    let (zero, one) = (Scalar::zero, Scalar::one);
    if !r.pow(4).is_one() {
        let unit = step(steps, "pin k-2", pin(&g, k - 2, 0)?, sym_scalars(vec![one(), zero(), r.clone()]))?;
        return case3(unit, r, steps);
    }
    let h = step(steps, "pin k-3", pin(&g, k - 3, 0)?, sym_scalars(vec![one(), zero(), r.clone(), zero()]))?;
    // r = ±i: the vertex4 gadget gives [−1∓i, 0, −1∓3i].
    let s = if r == Scalar::i() { 1 } else { -1 };
    let target = sym_scalars(vec![Scalar::complex(-1, -s), zero(), Scalar::complex(-1, -3 * s)]);
    let v4 = step(steps, "vertex4", vertex4_gadget(&h)?, target.clone())?;
    let r2 = target.get(3).try_div(target.get(0))?;
    case3(v4, r2, steps)
}

/// `unit` realizes a multiple of `[1,0,r]`; interpolates `[0,0,1,0]` from
/// `[1,0,1,0]` centres with arms of `k` units.
fn case3(unit: Gadget, r: Scalar, steps: &mut Vec<CaseStep>) -> Result<GadgetPlan> {
    let (zero, one) = (Scalar::zero, Scalar::one);
    let (unit, r) = if unit_modulus(&r) {
        let r2 = r.pow(2);
        let a = one().try_add(&r2)?;
        let c = Scalar::from(2).try_mul(&r.pow(3))?;
        let g = step(steps, "edge4", edge4_gadget(&unit)?, sym_scalars(vec![a.clone(), zero(), c.clone()]))?;
        (g, c.try_div(&a)?)
    } else {
        (unit, r)
    };
    let family = Family {
        shape: FamilyShape::Star { center: single(Signature::sym(&[1, 0, 1, 0]), Part::Right), unit },
        base: sig_0010(),
        direction: Signature::sym(&[1, 0, 0, 0]),
        at: zero(),
    };
    let _ = r;
    Ok(GadgetPlan::Family(family))
}

// ===========================================================================
// Plan files
// ===========================================================================

/// On-disk plan: a gadget with its target, or a family descriptor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanFile {
    Concrete {
        gadget: InstanceFile,
        target: Signature,
    },
    Family {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<InstanceFile>,
        unit: InstanceFile,
        base: Signature,
        direction: Signature,
        at: Scalar,
    },
}

impl PlanFile {
    pub fn from_plan(p: &GadgetPlan) -> Self {
        match p {
            GadgetPlan::Concrete { gadget, target } => {
                PlanFile::Concrete { gadget: InstanceFile::from_gadget(gadget), target: target.clone() }
            }
            GadgetPlan::Family(f) => {
                let (center, unit) = match &f.shape {
                    FamilyShape::Chain { unit } => (None, unit),
                    FamilyShape::Star { center, unit } => (Some(InstanceFile::from_gadget(center)), unit),
                };
                PlanFile::Family {
                    center,
                    unit: InstanceFile::from_gadget(unit),
                    base: f.base.clone(),
                    direction: f.direction.clone(),
                    at: f.at.clone(),
                }
            }
        }
    }

    pub fn to_plan(&self) -> Result<GadgetPlan> {
        Ok(match self {
            PlanFile::Concrete { gadget, target } => {
                GadgetPlan::Concrete { gadget: gadget.to_gadget()?, target: target.clone() }
            }
            PlanFile::Family { center, unit, base, direction, at } => {
                let unit = unit.to_gadget()?;
                let shape = match center {
                    Some(c) => FamilyShape::Star { center: c.to_gadget()?, unit },
                    None => FamilyShape::Chain { unit },
                };
                GadgetPlan::Family(Family { shape, base: base.clone(), direction: direction.clone(), at: at.clone() })
            }
        })
    }
}

// ===========================================================================
// Topology search
// ===========================================================================

type G64 = (i64, i64);

fn gauss_table(f: &Signature) -> Result<Vec<G64>> {
    f.table()
        .iter()
        .map(|v| {
            let c = v.as_gauss().and_then(|g| {
                if g.re.is_integer() && g.im.is_integer() {
                    Some((g.re.to_integer().try_into().ok()?, g.im.to_integer().try_into().ok()?))
                } else {
                    None
                }
            });
            c.ok_or_else(|| ReductionError::Unsupported(format!("search needs Gaussian-integer tables, got {v}")))
        })
        .collect()
}

fn gmul(a: G64, b: G64) -> G64 {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// Signature of a small gadget with Gaussian-integer tables, by
/// backtracking over edges with zero pruning.
fn fast_signature(tables: &[Vec<G64>], arity: &[usize], edges: &[(PortRef, PortRef)], dangling: &[PortRef]) -> Vec<G64> {
    let d = dangling.len();
    // pending[v] = number of unassigned ports; the vertex is multiplied in once complete.
    let mut order: Vec<Vec<usize>> = vec![Vec::new(); edges.len() + 1];
    let mut remaining: Vec<usize> = arity.to_vec();
    for p in dangling {
        remaining[p.vertex] -= 1;
    }
    for v in 0..arity.len() {
        if remaining[v] == 0 {
            order[0].push(v);
        }
    }
    for (i, (a, b)) in edges.iter().enumerate() {
        remaining[a.vertex] -= 1;
        if remaining[a.vertex] == 0 {
            order[i + 1].push(a.vertex);
        }
        remaining[b.vertex] -= 1;
        if remaining[b.vertex] == 0 && b.vertex != a.vertex {
            order[i + 1].push(b.vertex);
        }
    }
    let mut out = vec![(0, 0); 1 << d];
    let mut idx: Vec<usize> = vec![0; arity.len()];
    struct Ctx<'a> {
        tables: &'a [Vec<G64>],
        arity: &'a [usize],
        edges: &'a [(PortRef, PortRef)],
        order: &'a [Vec<usize>],
    }
    fn bitset(idx: &mut [usize], arity: &[usize], p: PortRef, b: usize) {
        let shift = arity[p.vertex] - 1 - p.port;
        idx[p.vertex] = (idx[p.vertex] & !(1 << shift)) | (b << shift);
    }
    fn rec(c: &Ctx, i: usize, acc: G64, idx: &mut [usize]) -> G64 {
        let mut acc = acc;
        for &v in &c.order[i] {
            acc = gmul(acc, c.tables[v][idx[v]]);
            if acc == (0, 0) {
                return acc;
            }
        }
        if i == c.edges.len() {
            return acc;
        }
        let (a, b) = c.edges[i];
        let mut total = (0, 0);
        for bit in 0..2 {
            bitset(idx, c.arity, a, bit);
            bitset(idx, c.arity, b, bit);
            let s = rec(c, i + 1, acc, idx);
            total = (total.0 + s.0, total.1 + s.1);
        }
        total
    }
    let ctx = Ctx { tables, arity, edges, order: &order };
    for (alpha, slot) in out.iter_mut().enumerate() {
        for (j, &p) in dangling.iter().enumerate() {
            bitset(&mut idx, arity, p, (alpha >> (d - 1 - j)) & 1);
        }
        *slot = rec(&ctx, 0, (1, 0), &mut idx);
    }
    out
}

/// Multigraphs (loops allowed) with the given degree sequence.
fn multigraphs(deg: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let n = deg.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u..n).map(move |v| (u, v))).collect();
    let mut out = Vec::new();
    fn rec(i: usize, pairs: &[(usize, usize)], rem: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rem.iter().all(|&r| r == 0) {
            out.push(cur.clone());
            return;
        }
        if i == pairs.len() {
            return;
        }
        let (u, v) = pairs[i];
        // all edges at u are placed by the time the pairs move past u
        if pairs.get(i + 1).map_or(true, |p| p.0 != u) && u != v && rem[u] > rem[v] {
            return;
        }
        let max = if u == v { rem[u] / 2 } else { rem[u].min(rem[v]) };
        for m in 0..=max {
            if u == v {
                rem[u] -= 2 * m;
            } else {
                rem[u] -= m;
                rem[v] -= m;
            }
            cur.extend(std::iter::repeat((u, v)).take(m));
            rec(i + 1, pairs, rem, cur, out);
            cur.truncate(cur.len() - m);
            if u == v {
                rem[u] += 2 * m;
            } else {
                rem[u] += m;
                rem[v] += m;
            }
        }
    }
    rec(0, &pairs, &mut deg.to_vec(), &mut Vec::new(), &mut out);
    out
}

fn compositions(groups: &[(usize, usize)], total: usize) -> Vec<Vec<usize>> {
    // groups: (first vertex, size) of identical signatures with arity bound
    let mut out = Vec::new();
    fn rec(i: usize, left: usize, caps: &[usize], same: &[bool], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == caps.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let hi = if same[i] { cur[i - 1].min(caps[i]) } else { caps[i] };
        for c in 0..=hi.min(left) {
            cur.push(c);
            rec(i + 1, left - c, caps, same, cur, out);
            cur.pop();
        }
    }
    let caps: Vec<usize> = groups.iter().map(|g| g.0).collect();
    let same: Vec<bool> = groups.iter().map(|g| g.1 == 1).collect();
    rec(0, total, &caps, &same, &mut Vec::new(), &mut out);
    out
}

/// Searches for a gadget over exactly the vertices of `inventory` (at most
/// [`SEARCH_VERTEX_CAP`], Gaussian-integer tables) realizing a multiple of
/// `target`, trying every multigraph on the residual degrees and every order
/// of the dangling edges. Ports are assigned in order of appearance, so
/// asymmetric inventory signatures are only tried in one port order. With
/// `planar`, the dangling edges must lie on one face in the found order.
pub fn search_gadget(inventory: &[Signature], target: &Signature, planar: bool) -> Result<Option<Gadget>> {
    let n = inventory.len();
    if n > SEARCH_VERTEX_CAP {
        return Err(ReductionError::Cap { what: "search vertices", got: n, cap: SEARCH_VERTEX_CAP });
    }
    let d = target.arity();
    let tables: Vec<Vec<G64>> = inventory.iter().map(gauss_table).collect::<Result<_>>()?;
    let arity: Vec<usize> = inventory.iter().map(|s| s.arity()).collect();
    // caps and "same as previous" flags for symmetry breaking
    let groups: Vec<(usize, usize)> =
        (0..n).map(|v| (arity[v], usize::from(v > 0 && inventory[v] == inventory[v - 1]))).collect();
    let perms = permutations(d);
    for dc in compositions(&groups, d) {
        let deg: Vec<usize> = (0..n).map(|v| arity[v] - dc[v]).collect();
        if (deg.iter().sum::<usize>()) % 2 == 1 {
            continue;
        }
        for g in multigraphs(&deg) {
            let mut next = vec![0usize; n];
            let mut port = |v: usize| {
                next[v] += 1;
                PortRef::new(v, next[v] - 1)
            };
            let edges: Vec<(PortRef, PortRef)> = g.iter().map(|&(u, v)| (port(u), port(v))).collect();
            let dverts: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(dc[v])).collect();
            let dports: Vec<PortRef> = dverts.iter().map(|&v| port(v)).collect();
            let table = fast_signature(&tables, &arity, &edges, &dports);
            for perm in &perms {
                let ordered: Vec<PortRef> = perm.iter().map(|&i| dports[i]).collect();
                let realized = Signature::from_fn(d, |idx| {
                    let bits = bits_of(idx, d);
                    let mut orig = 0usize;
                    for (j, &i) in perm.iter().enumerate() {
                        orig |= usize::from(bits[j]) << (d - 1 - i);
                    }
                    Scalar::complex(table[orig].0, table[orig].1)
                });
                if realized.is_zero() || target.equal_up_to_scalar(&realized).is_none() {
                    continue;
                }
                let mut inst = HolantInstance::new();
                for s in inventory {
                    inst.add_vertex(s.clone());
                }
                for &(a, b) in &edges {
                    inst.add_edge(a, b);
                }
                let gadget = Gadget::new(inst, ordered)?;
                if !planar || gadget_is_planar(&gadget)? == Some(true) {
                    return Ok(Some(gadget));
                }
            }
        }
    }
    Ok(None)
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

// ===========================================================================
// Planarity by rotation enumeration
// ===========================================================================

/// A planar rotation system of `g`, found by trying every cyclic order at
/// every vertex (the first dart of each vertex stays first). Vertices listed
/// in `fixed` keep the given dart order. `None` if no order is planar;
/// errors when more than [`ROTATION_CAP`] systems would be needed.
pub fn find_planar_rotation(g: &WeightedGraph, fixed: &[(usize, Vec<usize>)]) -> Result<Option<RotationSystem>> {
    let base = g.default_rotation();
    let mut choices: Vec<Vec<Vec<usize>>> = Vec::with_capacity(g.n);
    let mut total: usize = 1;
    for (v, darts) in base.rot.iter().enumerate() {
        let opts = if let Some((_, order)) = fixed.iter().find(|(u, _)| *u == v) {
            vec![order.clone()]
        } else if darts.len() <= 2 {
            vec![darts.clone()]
        } else {
            permutations(darts.len() - 1)
                .into_iter()
                .map(|p| std::iter::once(darts[0]).chain(p.iter().map(|&i| darts[i + 1])).collect())
                .collect()
        };
        total = total.saturating_mul(opts.len());
        if total > ROTATION_CAP {
            return Err(ReductionError::Cap { what: "rotation systems", got: total, cap: ROTATION_CAP });
        }
        choices.push(opts);
    }
    let mut pick = vec![0usize; g.n];
    loop {
        let rot = RotationSystem { rot: (0..g.n).map(|v| choices[v][pick[v]].clone()).collect() };
        if trace_faces(g, &rot)?.euler_ok {
            return Ok(Some(rot));
        }
        let mut v = 0;
        loop {
            if v == g.n {
                return Ok(None);
            }
            pick[v] += 1;
            if pick[v] < choices[v].len() {
                break;
            }
            pick[v] = 0;
            v += 1;
        }
    }
}

/// Whether the gadget embeds in the plane with its dangling edges on one
/// face in the listed cyclic order (a hub vertex joined to the dangling
/// ends). `None` when the rotation cap is exceeded.
pub fn gadget_is_planar(g: &Gadget) -> Result<Option<bool>> {
    let n = g.instance.num_vertices();
    let mut wg = WeightedGraph::new(n + 1);
    for e in &g.instance.edges {
        wg.add_edge(e.a.vertex, e.b.vertex, Scalar::one());
    }
    let mut hub = Vec::new();
    for p in &g.dangling {
        let e = wg.add_edge(p.vertex, n, Scalar::one());
        hub.push(2 * e + 1);
    }
    match find_planar_rotation(&wg, &[(n, hub)]) {
        Ok(r) => Ok(Some(r.is_some())),
        Err(ReductionError::Cap { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

// ===========================================================================
// Graph constructions
// ===========================================================================

fn degrees(g: &WeightedGraph) -> Vec<usize> {
    let mut deg = vec![0; g.n];
    for &(u, v, _) in &g.edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    deg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingBlowup {
    pub graph: WeightedGraph,
    /// `(v, u_v)` for every outer-face vertex `v`.
    pub copies: Vec<(usize, usize)>,
}

impl RingBlowup {
    /// The graph with the copy vertices and their edges removed.
    pub fn project(&self) -> WeightedGraph {
        let n = self.graph.n - self.copies.len();
        WeightedGraph { n, edges: self.graph.edges.iter().filter(|e| e.0 < n && e.1 < n).cloned().collect() }
    }
}

/// The ring blowup of an embedded planar graph; the outer face is the face
/// containing dart `outer`. Without edges every vertex is on the outer face
/// and `outer` may be `None`.
pub fn ring_blowup(g: &WeightedGraph, rot: &RotationSystem, outer: Option<usize>) -> Result<RingBlowup> {
    let faces = trace_faces(g, rot)?;
    if !faces.euler_ok {
        return Err(ReductionError::NotPlanar);
    }
    let deg = degrees(g);
    let mut on_face: BTreeSet<usize> = (0..g.n).filter(|&v| deg[v] == 0).collect();
    if !g.edges.is_empty() {
        let d = outer.filter(|&d| d < 2 * g.edges.len()).ok_or(ReductionError::NoOuterFace)?;
        for &x in &faces.faces[faces.face_of[d]] {
            on_face.insert(g.tail(x));
        }
    }
    let copy: Vec<Option<usize>> = {
        let mut c = vec![None; g.n];
        for (i, &v) in on_face.iter().enumerate() {
            c[v] = Some(g.n + i);
        }
        c
    };
    let mut out = WeightedGraph::new(g.n + on_face.len());
    for &(u, v, _) in &g.edges {
        out.add_edge(u, v, Scalar::one());
    }
    for &(u, v, _) in &g.edges {
        if let Some(cu) = copy[u] {
            out.add_edge(cu, v, Scalar::one());
        }
        if u != v {
            if let Some(cv) = copy[v] {
                out.add_edge(cv, u, Scalar::one());
            }
        }
    }
    for &(u, v, _) in &g.edges {
        if let (Some(cu), Some(cv)) = (copy[u], copy[v]) {
            out.add_edge(cu, cv, Scalar::one());
        }
    }
    let mut copies = Vec::new();
    for &v in &on_face {
        let c = copy[v].expect("outer vertex has a copy");
        out.add_edge(c, v, Scalar::one());
        copies.push((v, c));
    }
    Ok(RingBlowup { graph: out, copies })
}

/// `H_k` with the three defining edge sets; vertex `(i, j)` (1-based) has
/// index `(i−1)·2k + (j−1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexGrid {
    pub k: usize,
    pub e1: Vec<(usize, usize)>,
    pub e2: Vec<(usize, usize)>,
    pub e3: Vec<(usize, usize)>,
    /// The union as a set of unordered pairs (loops kept).
    pub graph: WeightedGraph,
}

pub fn shallow_vortex_grid(k: usize) -> Result<VortexGrid> {
    if k == 0 {
        return Err(ReductionError::Unsupported("order k must be at least 1".into()));
    }
    let w = 2 * k;
    let id = |i: usize, j: usize| (i - 1) * w + (j - 1);
    let mut e1 = Vec::new();
    for i in 1..k {
        for j in 1..=w {
            e1.push((id(i, j), id(i + 1, j)));
        }
    }
    let mut e2 = Vec::new();
    for i in 1..=k {
        for j in 1..w {
            e2.push((id(i, j), id(i, j + 1)));
        }
    }
    for i in 1..=k {
        e2.push((id(i, w), id(i, 1)));
    }
    let mut e3: Vec<(usize, usize)> = (1..=w - 2).map(|j| (id(1, j), id(1, j + 2))).collect();
    e3.push((id(1, w), id(1, 2)));
    e3.push((id(1, w - 1), id(1, 1)));
    let set: BTreeSet<(usize, usize)> = e1.iter().chain(&e2).chain(&e3).map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let edges: Vec<(usize, usize)> = set.into_iter().collect();
    Ok(VortexGrid { k, e1, e2, e3, graph: WeightedGraph::unit(k * w, &edges) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPairing {
    pub pairs: Vec<(usize, usize)>,
    /// `G + M` with the extended rotation system.
    pub graph: WeightedGraph,
    pub rotation: RotationSystem,
}

impl PlanarPairing {
    /// Re-runs the Euler check on `G + M` and checks `M` is perfect.
    pub fn certify(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &(u, v) in &self.pairs {
            if u == v || seen[u] || seen[v] {
                return false;
            }
            seen[u] = true;
            seen[v] = true;
        }
        seen.iter().all(|&s| s) && trace_faces(&self.graph, &self.rotation).map(|f| f.euler_ok).unwrap_or(false)
    }
}

/// A perfect pairing `M` of a cubic planar multigraph with `G + M` planar,
/// each pair drawn as a chord inside a face of the current embedding.
pub fn planar_pairing(g: &WeightedGraph, rot: &RotationSystem) -> Result<PlanarPairing> {
    let deg = degrees(g);
    if let Some(v) = (0..g.n).find(|&v| deg[v] != 3) {
        return Err(ReductionError::NotCubic { vertex: v, degree: deg[v] });
    }
    if !trace_faces(g, rot)?.euler_ok {
        return Err(ReductionError::NotPlanar);
    }
    let mut graph = g.clone();
    let mut rotation = rot.clone();
    let mut paired = vec![false; g.n];
    let mut pairs = Vec::new();
    let mut budget = 200_000usize;
    if pair_rec(&mut graph, &mut rotation, &mut paired, &mut pairs, &mut budget)? {
        let out = PlanarPairing { pairs, graph, rotation };
        debug_assert!(out.certify(g.n));
        return Ok(out);
    }
    if g.n > PAIRING_EXHAUSTIVE_CAP || budget == 0 {
        return Err(ReductionError::Cap { what: "pairing search vertices", got: g.n, cap: PAIRING_EXHAUSTIVE_CAP });
    }
    Err(ReductionError::PairingExhausted)
}

fn pair_rec(
    g: &mut WeightedGraph,
    rot: &mut RotationSystem,
    paired: &mut [bool],
    pairs: &mut Vec<(usize, usize)>,
    budget: &mut usize,
) -> Result<bool> {
    let Some(v) = paired.iter().position(|&p| !p) else {
        return Ok(true);
    };
    if *budget == 0 {
        return Ok(false);
    }
    *budget -= 1;
    let walks: Vec<Vec<usize>> = trace_faces(g, rot)?.faces.to_vec();
    let mut tried = BTreeSet::new();
    for walk in &walks {
        let at_v: Vec<usize> = walk.iter().copied().filter(|&d| g.head(d) == v).collect();
        for dv in at_v {
            for &du in walk {
                let u = g.head(du);
                if u == v || paired[u] || !tried.insert((dv, du)) {
                    continue;
                }
                let e = g.add_edge(v, u, Scalar::one());
                let at_v = rot.rot[v].iter().position(|&x| x == dv ^ 1).expect("corner") + 1;
                rot.rot[v].insert(at_v, 2 * e);
                let at_u = rot.rot[u].iter().position(|&x| x == du ^ 1).expect("corner") + 1;
                rot.rot[u].insert(at_u, 2 * e + 1);
                paired[v] = true;
                paired[u] = true;
                pairs.push((v, u));
                if pair_rec(g, rot, paired, pairs, budget)? {
                    return Ok(true);
                }
                pairs.pop();
                paired[v] = false;
                paired[u] = false;
                rot.rot[u].retain(|&x| x != 2 * e + 1);
                rot.rot[v].retain(|&x| x != 2 * e);
                g.edges.pop();
            }
        }
    }
    Ok(false)
}

/// `G_a`: vertex `v < n` carries `[0,0,0,1,0]` (ports: its edges of `G` in
/// edge order, then the apex edge), the apex `n` carries the even-weight
/// indicator `[1,0,1,0,…]` of arity `n` (port `v` ↔ vertex `v`).
pub fn apex_matching_reduction(g: &WeightedGraph) -> Result<HolantInstance> {
    let deg = degrees(g);
    if let Some(v) = (0..g.n).find(|&v| deg[v] != 3) {
        return Err(ReductionError::NotCubic { vertex: v, degree: deg[v] });
    }
    let mut inst = HolantInstance::new();
    for _ in 0..g.n {
        inst.add_vertex(Signature::sym(&[0, 0, 0, 1, 0]));
    }
    let even: Vec<i64> = (0..=g.n).map(|w| i64::from(w % 2 == 0)).collect();
    let apex = inst.add_vertex(Signature::sym(&even));
    let mut next = vec![0usize; g.n];
    for &(u, v, _) in &g.edges {
        let pu = next[u];
        next[u] += 1;
        let pv = next[v];
        next[v] += 1;
        inst.add_edge((u, pu), (v, pv));
    }
    for v in 0..g.n {
        inst.add_edge((v, 3), (apex, v));
    }
    Ok(inst)
}

/// Number of matchings (including the empty one); loops never match.
pub fn matching_count(g: &WeightedGraph) -> Result<u64> {
    if g.edges.len() > MATCHING_EDGE_CAP {
        return Err(ReductionError::Cap { what: "matching edges", got: g.edges.len(), cap: MATCHING_EDGE_CAP });
    }
    fn rec(i: usize, edges: &[(usize, usize, Scalar)], used: &mut [bool]) -> u64 {
        if i == edges.len() {
            return 1;
        }
        let mut total = rec(i + 1, edges, used);
        let (u, v, _) = edges[i];
        if u != v && !used[u] && !used[v] {
            used[u] = true;
            used[v] = true;
            total += rec(i + 1, edges, used);
            used[u] = false;
            used[v] = false;
        }
        total
    }
    Ok(rec(0, &g.edges, &mut vec![false; g.n]))
}
