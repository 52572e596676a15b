//! Boundary-mapping recursion for bounded-degree instances whose torsos are
//! planar once a few apex vertices are removed.
//!
//! For a node `t` with parent `d`, `Sep_t = β(t) ∩ β(d)` and the navel is
//! `X_t = Sep_t − A_d`. The vertices below `t` that are not in `Sep_t` induce
//! the boundary gadget `GG_t`; its dangling edges are exactly `B_t`, and
//! `BM_t` is its signature with variables in edge-id order.
//!
//! At `t`, every assignment to `B_t` and the inner apex edges pins the apex
//! vertices away. Children sharing a navel `X` are folded into one vertex
//! `v_X`: each navel vertex of `X` owned by `t` is split by its path gadget,
//! the head sides and the children's mappings are summed over the navel's
//! child edges, and `v_X` is joined to the tails. What remains is evaluated
//! on `t`'s planar torso.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::instance::{Edge, HolantInstance, InstanceError, PortRef, Vertex};
use crate::pathgadget::{build_path_gadget, PathGadgetError};
use crate::planar::{default_lookup, eval_apex_matchgate_holant, ApexConfig, PlanarError};
use crate::scalar::Scalar;
use crate::scg::{eval_view, parents, place_star, port_embedding, remove_from_embedding, small_eval, ScgError};
use crate::signature::{index_of, Signature, SignatureError};
use crate::treewidth::{check_g3_width, validate_td, TorsoEmbedding, TreeDecomposition, TreewidthError, UGraph};

/// Largest edge set enumerated at one place (σ at a node, τ in a merge).
pub const ENUM_CAP: usize = 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApexDpError {
    #[error("invalid decomposition: {0}")]
    Invalid(String),
    #[error("vertex {vertex} has degree {degree}, above the bound {bound}")]
    Degree { vertex: usize, degree: usize, bound: usize },
    #[error("node {node}: |B ∪ P| = {got} exceeds {cap}")]
    BoundaryTooLarge { node: usize, got: usize, cap: usize },
    #[error("node {node}: {what} has {got} edges, above {cap}")]
    Cap { node: usize, what: &'static str, got: usize, cap: usize },
    #[error("no children share the navel {0:?}")]
    EmptyGroup(Vec<usize>),
    #[error("node {0} is not a leaf")]
    NotLeaf(usize),
    #[error("vertex {0} must be split but has no symmetric matchgate form")]
    NotMatchgateForm(usize),
    #[error("node {0}: no torso face holds a merged navel")]
    NoFace(usize),
    #[error("boundary mapping of node {0} is missing")]
    MissingMapping(usize),
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
    #[error(transparent)]
    Scg(#[from] ScgError),
}

pub type Result<T> = std::result::Result<T, ApexDpError>;

/// Edge sets of one node and, once computed, its boundary mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub node: usize,
    /// `β(t) ∩ β(parent)`.
    pub separator: Vec<usize>,
    pub navel: Vec<usize>,
    pub apex: Vec<usize>,
    pub b: Vec<usize>,
    pub q: Vec<usize>,
    /// `Q_t − B_t`.
    pub p: Vec<usize>,
    /// The part of `P_t` inside the boundary gadget; only these are summed.
    pub p_inner: Vec<usize>,
    /// `BM_t`, one variable per edge of `b`.
    pub mapping: Option<Signature>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApexStep {
    pub node: usize,
    pub navel: Vec<usize>,
    pub b: usize,
    pub p: usize,
    /// Navels of the merged child groups, in processing order.
    pub groups: Vec<Vec<usize>>,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApexOutcome {
    pub value: Scalar,
    pub steps: Vec<ApexStep>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Link {
    Orig(usize),
    /// Port `j` of the merged vertex of group `g`.
    Star(usize, usize),
}

#[derive(Clone, Debug)]
struct Split {
    s1: Vec<usize>,
    head_side: Signature,
}

#[derive(Clone, Debug)]
struct Absorbed {
    signature: Signature,
    edges: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Group {
    navel: Vec<usize>,
    children: Vec<usize>,
    split_vertices: Vec<usize>,
    split: Vec<Split>,
    absorbed_vertices: Vec<usize>,
    absorbed: Vec<Absorbed>,
    /// Child edges at the navel vertices owned by the node.
    tau: Vec<usize>,
    /// Child boundary edges fixed by σ.
    fixed: Vec<usize>,
    child_b: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
struct NodePlan {
    plain: BTreeMap<usize, (Signature, Vec<Link>)>,
    groups: Vec<Group>,
    apex_own: Vec<usize>,
    vars: Vec<usize>,
    emb: Option<TorsoEmbedding>,
}

/// The decomposition with per-node vertex sets, ready for the recursion.
#[derive(Clone, Debug)]
pub struct ApexDp {
    inst: HolantInstance,
    k: usize,
    h: usize,
    root: usize,
    bag: BTreeMap<usize, BTreeSet<usize>>,
    apex: BTreeMap<usize, BTreeSet<usize>>,
    emb: BTreeMap<usize, Option<TorsoEmbedding>>,
    parent: BTreeMap<usize, usize>,
    children: BTreeMap<usize, Vec<usize>>,
    /// `V_{≤t} − Sep_t`.
    inside: BTreeMap<usize, BTreeSet<usize>>,
    ports: Vec<Vec<usize>>,
}

impl ApexDp {
    /// Checks the degree bound and the decomposition: bags above `h` need at
    /// most `h` apex vertices and a planar embedding of the rest.
    pub fn new(inst: &HolantInstance, td: &TreeDecomposition, h: usize, k: usize) -> Result<Self> {
        inst.validate()?;
        for (v, vx) in inst.vertices.iter().enumerate() {
            if vx.signature.arity() > k {
                return Err(ApexDpError::Degree { vertex: v, degree: vx.signature.arity(), bound: k });
            }
        }
        let rep = validate_td(inst, td);
        if !rep.is_valid() {
            return Err(ApexDpError::Invalid(rep.violations.join("; ")));
        }
        let g3 = check_g3_width(&UGraph::underlying(inst), td, h, true)?;
        if !g3.passes() {
            return Err(ApexDpError::Invalid(g3.violations.join("; ")));
        }
        let root = td.root.unwrap_or(td.nodes[0].id);
        let parent = parents(td, root)?;
        let bag: BTreeMap<usize, BTreeSet<usize>> = td.nodes.iter().map(|n| (n.id, n.bag.iter().copied().collect())).collect();
        let apex = td.nodes.iter().map(|n| (n.id, n.apex.iter().copied().collect())).collect();
        let emb = td.nodes.iter().map(|n| (n.id, if n.bag.len() > h { n.embedding.clone() } else { None })).collect();
        let mut children: BTreeMap<usize, Vec<usize>> = bag.keys().map(|&t| (t, Vec::new())).collect();
        for (&c, &p) in &parent {
            children.get_mut(&p).expect("node").push(c);
        }
        let ports = inst.port_edges().into_iter().map(|ps| ps.into_iter().map(|e| e.expect("validated")).collect()).collect();
        let mut dp = ApexDp {
            inst: inst.clone(),
            k,
            h,
            root,
            bag,
            apex,
            emb,
            parent,
            children,
            inside: BTreeMap::new(),
            ports,
        };
        for t in dp.post_order() {
            let mut below: BTreeSet<usize> = dp.bag[&t].clone();
            for c in &dp.children[&t] {
                below.extend(dp.inside[c].iter().copied());
                below.extend(dp.separator(*c));
            }
            let sep: BTreeSet<usize> = dp.separator(t).into_iter().collect();
            dp.inside.insert(t, below.difference(&sep).copied().collect());
        }
        Ok(dp)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Children before parents; siblings by id.
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.root]);
        while let Some(x) = queue.pop_front() {
            order.push(x);
            queue.extend(self.children[&x].iter().copied());
        }
        order.reverse();
        order
    }

    fn separator(&self, t: usize) -> Vec<usize> {
        match self.parent.get(&t) {
            Some(d) => self.bag[&t].intersection(&self.bag[d]).copied().collect(),
            None => Vec::new(),
        }
    }

    fn ends(&self, e: usize) -> (usize, usize) {
        let ed = &self.inst.edges[e];
        (ed.a.vertex, ed.b.vertex)
    }

    /// `X_t`, `B_t`, `Q_t`, `P_t` (no mapping yet).
    pub fn boundary_sets(&self, t: usize) -> Result<BoundaryData> {
        let sep: BTreeSet<usize> = self.separator(t).into_iter().collect();
        let inside = self.inside.get(&t).ok_or_else(|| ApexDpError::Invalid(format!("unknown node {t}")))?;
        let apex_t = &self.apex[&t];
        let navel: Vec<usize> = match self.parent.get(&t) {
            Some(d) => sep.iter().copied().filter(|v| !self.apex[d].contains(v)).collect(),
            None => Vec::new(),
        };
        let (mut b, mut q, mut p, mut p_inner) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for e in 0..self.inst.num_edges() {
            let (u, v) = self.ends(e);
            let in_b = (sep.contains(&u) && inside.contains(&v)) || (sep.contains(&v) && inside.contains(&u));
            if in_b {
                b.push(e);
            }
            if apex_t.contains(&u) || apex_t.contains(&v) {
                q.push(e);
                if !in_b {
                    p.push(e);
                    if inside.contains(&u) && inside.contains(&v) {
                        p_inner.push(e);
                    }
                }
            }
        }
        let cap = self.k * (self.h + 3);
        let got = b.len() + p.len();
        if got > cap {
            return Err(ApexDpError::BoundaryTooLarge { node: t, got, cap });
        }
        Ok(BoundaryData {
            node: t,
            separator: sep.into_iter().collect(),
            navel,
            apex: apex_t.iter().copied().collect(),
            b,
            q,
            p,
            p_inner,
            mapping: None,
        })
    }

    /// Children of `t` grouped by navel, groups in lexicographic navel order.
    fn navel_groups(&self, t: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for &c in &self.children[&t] {
            let x: Vec<usize> = self.separator(c).into_iter().filter(|v| !self.apex[&t].contains(v)).collect();
            groups.entry(x).or_default().push(c);
        }
        groups.into_iter().collect()
    }

    /// The σ-independent part of the step at `t`: which navel vertices are
    /// split or absorbed, the resulting signatures, and the placed torso.
    fn plan(&self, t: usize, bd: &BoundaryData) -> Result<NodePlan> {
        let sep: BTreeSet<usize> = bd.separator.iter().copied().collect();
        let apex_t = &self.apex[&t];
        let own: Vec<usize> = self.bag[&t].iter().copied().filter(|v| !sep.contains(v)).collect();
        let mut plain: BTreeMap<usize, (Signature, Vec<Link>)> = own
            .iter()
            .filter(|v| !apex_t.contains(v))
            .map(|&v| (v, (self.inst.vertices[v].signature.clone(), self.ports[v].iter().map(|&e| Link::Orig(e)).collect())))
            .collect();
        let mut emb = self.emb[&t].clone();
        if let Some(e) = emb.as_mut() {
            remove_from_embedding(e, &sep);
        }
        let mut groups = Vec::new();
        for (gi, (navel, kids)) in self.navel_groups(t).into_iter().enumerate() {
            let below: BTreeSet<usize> = kids.iter().flat_map(|c| self.inside[c].iter().copied()).collect();
            let mut group = Group {
                navel: navel.clone(),
                children: kids.clone(),
                split_vertices: Vec::new(),
                split: Vec::new(),
                absorbed_vertices: Vec::new(),
                absorbed: Vec::new(),
                tau: Vec::new(),
                fixed: Vec::new(),
                child_b: Vec::new(),
            };
            let owned: Vec<usize> = navel.iter().copied().filter(|x| plain.contains_key(x)).collect();
            for x in owned {
                let (sig, links) = plain[&x].clone();
                let s1: Vec<usize> = (0..links.len())
                    .filter(|&i| match links[i] {
                        Link::Orig(e) => {
                            let (u, v) = self.ends(e);
                            below.contains(&u) || below.contains(&v)
                        }
                        Link::Star(..) => false,
                    })
                    .collect();
                let edge = |i: usize| match links[i] {
                    Link::Orig(e) => e,
                    Link::Star(..) => unreachable!("only original edges lead below"),
                };
                if s1.is_empty() {
                    continue;
                }
                group.tau.extend(s1.iter().map(|&i| edge(i)));
                if s1.len() == links.len() {
                    plain.remove(&x);
                    group.absorbed_vertices.push(x);
                    group.absorbed.push(Absorbed { signature: sig, edges: s1.iter().map(|&i| edge(i)).collect() });
                    continue;
                }
                let pg = build_path_gadget(&sig, &s1, None).map_err(|e| match e {
                    PathGadgetError::NotMatchgateForm => ApexDpError::NotMatchgateForm(x),
                    other => other.into(),
                })?;
                let j = group.split.len();
                let mut tail_links = vec![Link::Star(gi, j)];
                tail_links.extend(pg.s2.iter().map(|&i| links[i]));
                plain.insert(x, (pg.tail.clone(), tail_links));
                group.split_vertices.push(x);
                group.split.push(Split { s1: s1.iter().map(|&i| edge(i)).collect(), head_side: pg.head_side()? });
            }
            let tau: BTreeSet<usize> = group.tau.iter().copied().collect();
            let mut fixed = BTreeSet::new();
            for c in &kids {
                let bc = self.boundary_sets(*c)?;
                fixed.extend(bc.b.iter().copied().filter(|e| !tau.contains(e)));
                group.child_b.push(bc.b);
            }
            group.fixed = fixed.into_iter().collect();
            if group.tau.len() > ENUM_CAP {
                return Err(ApexDpError::Cap { node: t, what: "a merged navel", got: group.tau.len(), cap: ENUM_CAP });
            }
            if let Some(e) = emb.as_mut() {
                remove_from_embedding(e, &group.absorbed_vertices.iter().copied().collect());
                if !group.split_vertices.is_empty() {
                    let arms = vec![Vec::new(); group.split_vertices.len()];
                    place_star(e, self.star_key(gi), &group.split_vertices, &arms).ok_or(ApexDpError::NoFace(t))?;
                }
            }
            groups.push(group);
        }
        let vars: BTreeSet<usize> = bd.b.iter().chain(&bd.p_inner).copied().collect();
        for g in &groups {
            if let Some(e) = g.fixed.iter().find(|e| !vars.contains(e)) {
                return Err(ApexDpError::Invalid(format!("node {t}: child boundary edge {e} is neither pinned nor summed")));
            }
        }
        if vars.len() > ENUM_CAP {
            return Err(ApexDpError::Cap { node: t, what: "B ∪ P", got: vars.len(), cap: ENUM_CAP });
        }
        Ok(NodePlan {
            plain,
            groups,
            apex_own: own.iter().copied().filter(|v| apex_t.contains(v)).collect(),
            vars: vars.into_iter().collect(),
            emb,
        })
    }

    fn star_key(&self, g: usize) -> usize {
        self.inst.num_vertices() + g
    }

    /// `f_{≤l}` of one group under `sigma`: variables are the tails of the
    /// split navel vertices, in id order.
    fn merged_signature(&self, g: &Group, bms: &BTreeMap<usize, Signature>, sigma: &HashMap<usize, u8>) -> Result<Signature> {
        let m = g.split.len();
        let child_b: Vec<(&Signature, &Vec<usize>)> = g
            .children
            .iter()
            .zip(&g.child_b)
            .map(|(c, b)| Ok((bms.get(c).ok_or(ApexDpError::MissingMapping(*c))?, b)))
            .collect::<Result<_>>()?;
        let slot: HashMap<usize, usize> = g.tau.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut table = vec![Scalar::zero(); 1 << m];
        let mut bits = Vec::new();
        for mask in 0..1usize << g.tau.len() {
            let val = |e: &usize| -> u8 {
                match slot.get(e) {
                    Some(&i) => (mask >> i & 1) as u8,
                    None => sigma[e],
                }
            };
            let mut base = Scalar::one();
            for a in &g.absorbed {
                bits.clear();
                bits.extend(a.edges.iter().map(val));
                base = &base * a.signature.value(&bits);
            }
            for (bm, b) in &child_b {
                if base.is_zero() {
                    break;
                }
                bits.clear();
                bits.extend(b.iter().map(val));
                base = &base * bm.value(&bits);
            }
            if base.is_zero() {
                continue;
            }
            for (alpha, entry) in table.iter_mut().enumerate() {
                let mut w = base.clone();
                for (j, s) in g.split.iter().enumerate() {
                    bits.clear();
                    bits.extend(s.s1.iter().map(val));
                    bits.push((alpha >> (m - 1 - j) & 1) as u8);
                    w = &w * s.head_side.value(&bits);
                    if w.is_zero() {
                        break;
                    }
                }
                *entry += &w;
            }
        }
        Ok(Signature::new(m, table)?)
    }

    /// `f_{≤l}` for the children of `t` whose navel is `navel`, under the
    /// assignment `sigma` of `B_t ∪ P_t` (edge id → bit).
    pub fn merge_same_navel_children(
        &self,
        t: usize,
        navel: &[usize],
        bms: &BTreeMap<usize, Signature>,
        sigma: &BTreeMap<usize, u8>,
    ) -> Result<Signature> {
        let bd = self.boundary_sets(t)?;
        let plan = self.plan(t, &bd)?;
        let g = plan.groups.iter().find(|g| g.navel == navel).ok_or_else(|| ApexDpError::EmptyGroup(navel.to_vec()))?;
        let sigma: HashMap<usize, u8> = sigma.iter().map(|(&e, &b)| (e, b)).collect();
        if let Some(e) = g.fixed.iter().find(|e| !sigma.contains_key(e)) {
            return Err(ApexDpError::Invalid(format!("assignment misses edge {e}")));
        }
        self.merged_signature(g, bms, &sigma)
    }

    /// `HH^σ` on the plain vertices, the merged vertices and the pinned
    /// apex constants.
    fn residual(&self, plan: &NodePlan, merged: &[Signature], sigma: &HashMap<usize, u8>) -> Result<(HolantInstance, Vec<usize>, Scalar)> {
        let mut constant = Scalar::one();
        for &a in &plan.apex_own {
            let bits: Vec<u8> = self.ports[a].iter().map(|e| sigma[e]).collect();
            constant = &constant * self.inst.vertices[a].signature.value(&bits);
        }
        let mut inst = HolantInstance::new();
        let mut keys = Vec::new();
        let mut open: HashMap<Link, PortRef> = HashMap::new();
        let mut attach = |inst: &mut HolantInstance, sig: Signature, links: Vec<Link>, key: usize| -> Result<()> {
            let v = inst.vertices.len();
            inst.vertices.push(Vertex { signature: sig, part: None });
            keys.push(key);
            for (p, l) in links.into_iter().enumerate() {
                match open.remove(&l) {
                    Some(o) => inst.edges.push(Edge { a: o, b: PortRef::new(v, p) }),
                    None => {
                        open.insert(l, PortRef::new(v, p));
                    }
                }
            }
            Ok(())
        };
        for (&v, (sig, links)) in &plan.plain {
            let pinned: Vec<usize> = (0..links.len()).filter(|&i| matches!(links[i], Link::Orig(e) if sigma.contains_key(&e))).collect();
            let bits: Vec<u8> = pinned
                .iter()
                .map(|&i| match links[i] {
                    Link::Orig(e) => sigma[&e],
                    Link::Star(..) => unreachable!(),
                })
                .collect();
            let sig = if pinned.is_empty() { sig.clone() } else { sig.pin(&pinned, &bits)? };
            let rest: Vec<Link> = (0..links.len()).filter(|i| !pinned.contains(i)).map(|i| links[i]).collect();
            attach(&mut inst, sig, rest, v)?;
        }
        for (gi, f) in merged.iter().enumerate() {
            if f.arity() == 0 {
                constant = &constant * f.get(0);
            } else {
                attach(&mut inst, f.clone(), (0..f.arity()).map(|j| Link::Star(gi, j)).collect(), self.star_key(gi))?;
            }
        }
        if let Some(l) = open.keys().next() {
            return Err(ApexDpError::Invalid(format!("edge {l:?} leaves the residual instance")));
        }
        Ok((inst, keys, constant))
    }

    /// `BM_t` for a leaf: each `B_t` assignment is summed over the apex
    /// edges by planar evaluation of the rest.
    pub fn boundary_mapping_leaf(&self, t: usize) -> Result<BoundaryData> {
        if !self.children[&t].is_empty() {
            return Err(ApexDpError::NotLeaf(t));
        }
        let mut bd = self.boundary_sets(t)?;
        if bd.b.len() > ENUM_CAP {
            return Err(ApexDpError::Cap { node: t, what: "B", got: bd.b.len(), cap: ENUM_CAP });
        }
        let sep: BTreeSet<usize> = bd.separator.iter().copied().collect();
        let own: Vec<usize> = self.bag[&t].iter().copied().filter(|v| !sep.contains(v)).collect();
        let local: HashMap<usize, usize> = own.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let apex_local: Vec<usize> = own.iter().enumerate().filter(|(_, v)| self.apex[&t].contains(v)).map(|(i, _)| i).collect();
        let bpos: HashMap<usize, usize> = bd.b.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let emb = match &self.emb[&t] {
            Some(te) => {
                let mut te = te.clone();
                remove_from_embedding(&mut te, &sep);
                Some(te)
            }
            None => None,
        };
        let mut table = Vec::with_capacity(1 << bd.b.len());
        for mask in 0..1usize << bd.b.len() {
            let mut inst = HolantInstance::new();
            for &v in &own {
                let pinned: Vec<usize> = (0..self.ports[v].len()).filter(|&p| bpos.contains_key(&self.ports[v][p])).collect();
                let bits: Vec<u8> = pinned.iter().map(|&p| (mask >> (bd.b.len() - 1 - bpos[&self.ports[v][p]]) & 1) as u8).collect();
                let sig = &self.inst.vertices[v].signature;
                inst.vertices.push(Vertex { signature: if pinned.is_empty() { sig.clone() } else { sig.pin(&pinned, &bits)? }, part: None });
            }
            let new_port = |v: usize, p: usize| p - (0..p).filter(|&q| bpos.contains_key(&self.ports[v][q])).count();
            for e in 0..self.inst.num_edges() {
                let ed = &self.inst.edges[e];
                if let (Some(&a), Some(&b)) = (local.get(&ed.a.vertex), local.get(&ed.b.vertex)) {
                    inst.edges.push(Edge {
                        a: PortRef::new(a, new_port(ed.a.vertex, ed.a.port)),
                        b: PortRef::new(b, new_port(ed.b.vertex, ed.b.port)),
                    });
                }
            }
            let z = match &emb {
                Some(te) => {
                    let skip: BTreeSet<usize> = self.apex[&t].clone();
                    let pe = port_embedding(&inst, &own, te, &skip)?;
                    let cfg = ApexConfig { a_max: self.h.max(apex_local.len()), k_max: self.k };
                    eval_apex_matchgate_holant(&inst, &apex_local, &pe, default_lookup, cfg)?
                }
                None => small_eval(&inst)?.0,
            };
            table.push(z);
        }
        bd.mapping = Some(Signature::new(bd.b.len(), table)?);
        Ok(bd)
    }

    /// `BM_t` from the children's mappings.
    pub fn boundary_mapping_step(&self, t: usize, bms: &BTreeMap<usize, Signature>) -> Result<(BoundaryData, ApexStep)> {
        let mut bd = self.boundary_sets(t)?;
        let plan = self.plan(t, &bd)?;
        let nb = bd.b.len();
        let mut table = vec![Scalar::zero(); 1 << nb];
        let mut cache: Vec<HashMap<Vec<u8>, Signature>> = vec![HashMap::new(); plan.groups.len()];
        let mut method = if plan.emb.is_some() { "planar" } else { "brute" };
        for mask in 0..1usize << plan.vars.len() {
            let n = plan.vars.len();
            let sigma: HashMap<usize, u8> = plan.vars.iter().enumerate().map(|(i, &e)| (e, (mask >> (n - 1 - i) & 1) as u8)).collect();
            let mut merged = Vec::with_capacity(plan.groups.len());
            for (gi, g) in plan.groups.iter().enumerate() {
                let key: Vec<u8> = g.fixed.iter().map(|e| sigma[e]).collect();
                if let Some(f) = cache[gi].get(&key) {
                    merged.push(f.clone());
                    continue;
                }
                let f = self.merged_signature(g, bms, &sigma)?;
                cache[gi].insert(key, f.clone());
                merged.push(f);
            }
            let (inst, keys, constant) = self.residual(&plan, &merged, &sigma)?;
            if constant.is_zero() {
                continue;
            }
            let z = match &plan.emb {
                Some(te) => {
                    let pe = port_embedding(&inst, &keys, te, &BTreeSet::new())?;
                    eval_view(&inst, Some(&pe))?.0
                }
                None => {
                    let (z, how) = small_eval(&inst)?;
                    method = how;
                    z
                }
            };
            let bidx = index_of(&bd.b.iter().map(|e| sigma[e]).collect::<Vec<_>>());
            table[bidx] += &(&constant * &z);
        }
        bd.mapping = Some(Signature::new(nb, table)?);
        let step = ApexStep {
            node: t,
            navel: bd.navel.clone(),
            b: bd.b.len(),
            p: bd.p_inner.len(),
            groups: plan.groups.iter().map(|g| g.navel.clone()).collect(),
            method: method.to_string(),
        };
        Ok((bd, step))
    }

    /// Mappings from the leaves up; the root's arity-0 mapping is `Z`.
    pub fn run(&self) -> Result<ApexOutcome> {
        let mut bms = BTreeMap::new();
        let mut steps = Vec::new();
        for t in self.post_order() {
            let (bd, step) = if self.children[&t].is_empty() {
                let bd = self.boundary_mapping_leaf(t)?;
                let method = if self.emb[&t].is_some() { "apex" } else { "brute" };
                let step = ApexStep {
                    node: t,
                    navel: bd.navel.clone(),
                    b: bd.b.len(),
                    p: bd.p_inner.len(),
                    groups: Vec::new(),
                    method: method.into(),
                };
                (bd, step)
            } else {
                self.boundary_mapping_step(t, &bms)?
            };
            bms.insert(t, bd.mapping.expect("computed"));
            steps.push(step);
        }
        let value = bms[&self.root].get(0).clone();
        Ok(ApexOutcome { value, steps })
    }
}

/// `Z(I)` by boundary mappings over `td`; every vertex degree must be at
/// most `k`, and bags above `h` need apex sets and planar embeddings.
pub fn evaluate_apexdp(inst: &HolantInstance, td: &TreeDecomposition, h: usize, k: usize) -> Result<ApexOutcome> {
    ApexDp::new(inst, td, h, k)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::form_pattern;
    use crate::instance::{brute_force, cycle, from_graph, Gadget};
    use crate::random::{random_decomposed_instance, rng, DecomposedConfig};
    use crate::planar::Embedding;
    use crate::treewidth::TdNode;

    fn td(bags: Vec<Vec<usize>>, edges: Vec<(usize, usize)>) -> TreeDecomposition {
        let mut t = TreeDecomposition::from_bags(bags, edges);
        t.root = Some(0);
        t
    }

    fn form5(d: usize) -> Signature {
        Signature::symmetric(form_pattern(5, &Scalar::from(2), d).unwrap())
    }

    /// The boundary gadget of `t` as a gadget with dangling edges `B_t`.
    fn boundary_gadget(inst: &HolantInstance, dp: &ApexDp, t: usize) -> Gadget {
        let bd = dp.boundary_sets(t).unwrap();
        let inside = &dp.inside[&t];
        let verts: Vec<usize> = inside.iter().copied().collect();
        let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut g = HolantInstance::new();
        for &v in &verts {
            g.add_vertex(inst.vertices[v].signature.clone());
        }
        for e in &inst.edges {
            if let (Some(&a), Some(&b)) = (local.get(&e.a.vertex), local.get(&e.b.vertex)) {
                g.add_edge((a, e.a.port), (b, e.b.port));
            }
        }
        let dangling = bd
            .b
            .iter()
            .map(|&e| {
                let ed = &inst.edges[e];
                let end = if inside.contains(&ed.a.vertex) { ed.a } else { ed.b };
                PortRef::new(local[&end.vertex], end.port)
            })
            .collect();
        Gadget::new(g, dangling).unwrap()
    }

    #[test]
    fn boundary_set_examples() {
        // Path 0-1-2-3 with degrees at most 2; leaf shares {1, 2}.
        let inst = from_graph(4, &[(0, 1), (1, 2), (2, 3)], |d| Signature::sym(&vec![1; d + 1]));
        let t = td(vec![vec![0, 1, 2], vec![1, 2, 3]], vec![(0, 1)]);
        let dp = ApexDp::new(&inst, &t, 3, 3).unwrap();
        let root = dp.boundary_sets(0).unwrap();
        assert!(root.b.is_empty() && root.navel.is_empty() && root.separator.is_empty());
        let leaf = dp.boundary_sets(1).unwrap();
        assert_eq!(leaf.navel, vec![1, 2]);
        assert_eq!(leaf.b, vec![2]);
        assert!(leaf.q.is_empty() && leaf.p.is_empty());
        assert!(leaf.b.len() <= 6);
    }

    #[test]
    fn leaf_mapping_examples() {
        // One [0,1,0] vertex below a 2-cycle of equalities.
        let mut inst = HolantInstance::new();
        let a = inst.add_vertex(Signature::sym(&[1, 0, 1]));
        let b = inst.add_vertex(Signature::sym(&[1, 0, 1]));
        let c = inst.add_vertex(Signature::sym(&[0, 1, 0]));
        inst.add_edge((a, 0), (b, 0));
        inst.add_edge((a, 1), (c, 0));
        inst.add_edge((b, 1), (c, 1));
        let t = td(vec![vec![a, b], vec![a, b, c]], vec![(0, 1)]);
        let dp = ApexDp::new(&inst, &t, 3, 3).unwrap();
        let bd = dp.boundary_mapping_leaf(1).unwrap();
        assert_eq!(bd.b, vec![1, 2]);
        assert_eq!(bd.mapping.unwrap(), Signature::from_ints(&[0, 1, 1, 0]));
        assert_eq!(dp.run().unwrap().value, brute_force(&inst).unwrap());

        // An isolated component in its own leaf.
        let mut inst = cycle(3, &Signature::sym(&[1, 0, 1]));
        let x = inst.add_vertex(Signature::sym(&[2, 0, 3]));
        let y = inst.add_vertex(Signature::sym(&[2, 0, 3]));
        inst.add_edge((x, 0), (y, 0));
        inst.add_edge((x, 1), (y, 1));
        let t = td(vec![vec![0, 1, 2], vec![x, y]], vec![(0, 1)]);
        let dp = ApexDp::new(&inst, &t, 3, 3).unwrap();
        let bd = dp.boundary_mapping_leaf(1).unwrap();
        assert!(bd.b.is_empty());
        assert_eq!(bd.mapping.unwrap(), Signature::constant(Scalar::from(13)));
        assert!(matches!(dp.boundary_mapping_leaf(0), Err(ApexDpError::NotLeaf(0))));
    }

    #[test]
    fn leaf_mapping_with_an_apex() {
        // Wheel: hub 7 over the 7-cycle, hanging below a root that shares
        // cycle vertices 0 and 1; the hub is the leaf's apex.
        let mut edges: Vec<(usize, usize)> = (0..7).map(|i| (i, (i + 1) % 7)).collect();
        edges.extend((2..7).map(|i| (7, i)));
        edges.push((8, 0));
        edges.push((8, 1));
        let inst = from_graph(9, &edges, |d| form5(d));
        let mut t = td(vec![vec![0, 1, 8], (0..8).collect()], vec![(0, 1)]);
        t.nodes[1].apex = vec![7];
        let ring: TorsoEmbedding = (0..7).map(|i| (i, vec![(i + 1) % 7, (i + 6) % 7])).collect();
        t.nodes[1].embedding = Some(ring);
        t.nodes[0].embedding = Some(BTreeMap::from([(0, vec![1, 8]), (1, vec![8, 0]), (8, vec![0, 1])]));
        let dp = ApexDp::new(&inst, &t, 1, 5).unwrap();
        let bd = dp.boundary_mapping_leaf(1).unwrap();
        assert_eq!(bd.apex, vec![7]);
        assert_eq!(bd.q.len(), 5);
        assert_eq!(bd.p_inner.len(), 5);
        let expect = boundary_gadget(&inst, &dp, 1).signature().unwrap();
        assert_eq!(bd.mapping.unwrap(), expect);
        assert_eq!(dp.run().unwrap().value, brute_force(&inst).unwrap());
    }

    #[test]
    fn merging_same_navel_children() {
        // Root vertex 0 with two pendant triangles hanging off it.
        let edges = [(0, 1), (0, 2), (1, 2), (0, 3), (0, 4), (3, 4), (0, 5)];
        let inst = from_graph(6, &edges, |d| form5(d));
        let t = td(vec![vec![0, 5], vec![0, 1, 2], vec![0, 3, 4]], vec![(0, 1), (0, 2)]);
        let dp = ApexDp::new(&inst, &t, 3, 5).unwrap();
        let mut bms = BTreeMap::new();
        for c in [1, 2] {
            bms.insert(c, dp.boundary_mapping_leaf(c).unwrap().mapping.unwrap());
        }
        let f = dp.merge_same_navel_children(0, &[0], &bms, &BTreeMap::new()).unwrap();
        assert_eq!(f.arity(), 1);
        // v_l followed by the tail of 0 reproduces the root.
        let (bd, step) = dp.boundary_mapping_step(0, &bms).unwrap();
        assert_eq!(step.groups, vec![vec![0]]);
        assert_eq!(bd.mapping.unwrap().get(0), &brute_force(&inst).unwrap());
        assert!(matches!(dp.merge_same_navel_children(0, &[5], &bms, &BTreeMap::new()), Err(ApexDpError::EmptyGroup(_))));
    }

    #[test]
    fn merged_signature_matches_direct_gadget() {
        // Navel {0, 1} shared by two children; 0 and 1 also see the root.
        let edges = [(0, 2), (1, 2), (0, 3), (1, 3), (0, 4), (1, 4), (3, 2)];
        let inst = from_graph(5, &edges, |d| form5(d));
        let t = td(vec![vec![0, 1, 4], vec![0, 1, 2, 3]], vec![(0, 1)]);
        let dp = ApexDp::new(&inst, &t, 4, 4).unwrap();
        let bms = BTreeMap::from([(1, dp.boundary_mapping_leaf(1).unwrap().mapping.unwrap())]);
        let f = dp.merge_same_navel_children(0, &[0, 1], &bms, &BTreeMap::new()).unwrap();
        // Direct: the children side plus both heads, as a gadget on the path edges.
        let bd = dp.boundary_sets(0).unwrap();
        let plan = dp.plan(0, &bd).unwrap();
        let g = &plan.groups[0];
        let child = boundary_gadget(&inst, &dp, 1).signature().unwrap();
        let b1 = dp.boundary_sets(1).unwrap().b;
        let mut direct = child;
        let mut placed: Vec<usize> = b1.clone();
        for s in &g.split {
            let pairs: Vec<(usize, usize)> = s.s1.iter().enumerate().map(|(i, e)| (placed.iter().position(|x| x == e).unwrap(), i)).collect();
            direct = direct.connect(&s.head_side, &pairs).unwrap();
            placed.retain(|e| !s.s1.contains(e));
            placed.push(usize::MAX);
        }
        assert_eq!(f, direct);
        assert_eq!(dp.run().unwrap().value, brute_force(&inst).unwrap());
    }

    #[test]
    fn planar_instance_with_trivial_apex_sets() {
        let inst = cycle(5, &form5(2));
        let mut t = td(vec![(0..5).collect()], vec![]);
        t.nodes[0].embedding = Some((0..5).map(|i| (i, vec![(i + 1) % 5, (i + 4) % 5])).collect());
        let out = evaluate_apexdp(&inst, &t, 2, 2).unwrap();
        let pe = Embedding::identity(&inst);
        let planar = crate::planar::eval_planar_matchgate_holant(&inst, &pe, default_lookup).unwrap();
        assert_eq!(out.value, planar);
        assert_eq!(out.value, brute_force(&inst).unwrap());
    }

    #[test]
    fn rejects_degree_and_width_violations() {
        let inst = from_graph(4, &[(0, 1), (0, 2), (0, 3)], |d| Signature::sym(&vec![1; d + 1]));
        let t = td(vec![vec![0, 1, 2, 3]], vec![]);
        assert!(matches!(ApexDp::new(&inst, &t, 4, 2), Err(ApexDpError::Degree { vertex: 0, .. })));
        let t = td(vec![vec![0, 1, 2]], vec![]);
        assert!(ApexDp::new(&inst, &t, 4, 3).is_err());
        // Oversized bag without embedding.
        let t = td(vec![vec![0, 1, 2, 3]], vec![]);
        assert!(ApexDp::new(&inst, &t, 2, 3).is_err());
        let mut t = t;
        t.nodes[0].apex = vec![0, 1, 2];
        t.nodes[0].embedding = Some(BTreeMap::from([(3, vec![])]));
        assert!(ApexDp::new(&inst, &t, 2, 3).is_err());
    }

    #[test]
    fn random_decompositions_match_brute_force() {
        let mut r = rng(77);
        let mut seen = BTreeMap::new();
        for case in 0..60 {
            let apex = case % 2 == 0;
            let h = if apex { 1 } else { 2 + case % 3 };
            let cfg = DecomposedConfig { h, apex, max_degree: Some(4), ..DecomposedConfig::default() };
            let d = random_decomposed_instance(&mut r, &cfg);
            let z = brute_force(&d.instance).unwrap();
            let dp = ApexDp::new(&d.instance, &d.td, h, d.degree).unwrap();
            let mut bms = BTreeMap::new();
            for t in dp.post_order() {
                let bd = if dp.children[&t].is_empty() { dp.boundary_mapping_leaf(t).unwrap() } else { dp.boundary_mapping_step(t, &bms).unwrap().0 };
                if t != dp.root() {
                    let expect = boundary_gadget(&d.instance, &dp, t).signature().unwrap();
                    assert_eq!(bd.mapping.as_ref().unwrap(), &expect, "case {case} node {t}");
                    assert!(bd.b.len() + bd.p.len() <= d.degree * (h + 3));
                }
                bms.insert(t, bd.mapping.unwrap());
            }
            assert_eq!(bms[&dp.root()].get(0), &z, "case {case}");
            for st in dp.run().unwrap().steps {
                *seen.entry((st.method, !st.groups.is_empty(), st.p > 0)).or_insert(0usize) += 1;
            }
        }
        assert!(seen.keys().any(|(m, g, p)| m == "planar" && *g && *p));
        assert!(seen.keys().any(|(m, _, p)| m == "apex" && *p));
    }

    #[test]
    fn merged_signatures_respect_parity() {
        let mut r = rng(78);
        for _ in 0..30 {
            let cfg = DecomposedConfig { h: 1, apex: true, max_degree: Some(4), ..DecomposedConfig::default() };
            let d = random_decomposed_instance(&mut r, &cfg);
            let dp = ApexDp::new(&d.instance, &d.td, 1, d.degree).unwrap();
            let mut bms = BTreeMap::new();
            for t in dp.post_order() {
                if !dp.children[&t].is_empty() {
                    let bd = dp.boundary_sets(t).unwrap();
                    let plan = dp.plan(t, &bd).unwrap();
                    for mask in 0..1usize << plan.vars.len() {
                        let sigma: HashMap<usize, u8> =
                            plan.vars.iter().enumerate().map(|(i, &e)| (e, (mask >> i & 1) as u8)).collect();
                        for g in &plan.groups {
                            let f = dp.merged_signature(g, &bms, &sigma).unwrap();
                            assert_ne!(f.parity(), crate::signature::Parity::Mixed, "{f}");
                        }
                    }
                }
                let bd = if dp.children[&t].is_empty() { dp.boundary_mapping_leaf(t).unwrap() } else { dp.boundary_mapping_step(t, &bms).unwrap().0 };
                bms.insert(t, bd.mapping.unwrap());
            }
        }
    }

    #[test]
    fn td_nodes_keep_apex_annotations() {
        let n = TdNode { id: 0, bag: vec![0, 1], apex: vec![1], embedding: None };
        let t = TreeDecomposition { nodes: vec![n], edges: vec![], root: Some(0) };
        let inst = from_graph(2, &[(0, 1)], |d| Signature::sym(&vec![1; d + 1]));
        let dp = ApexDp::new(&inst, &t, 2, 1).unwrap();
        assert_eq!(dp.boundary_sets(0).unwrap().q, vec![0]);
        assert_eq!(dp.run().unwrap().value, Scalar::from(2));
    }
}
