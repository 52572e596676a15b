//! Seeded generators for test instances and graphs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::instance::{from_graph, HolantInstance, Part, PortRef};
use crate::planar::{trace_faces, Embedding, RotationSystem, WeightedGraph};
use crate::scalar::Scalar;
use crate::signature::Signature;
use crate::treewidth::{TdNode, TorsoEmbedding, TreeDecomposition};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A table of the given arity with entries drawn from `values`.
pub fn random_signature<R: Rng>(r: &mut R, arity: usize, values: &[i64]) -> Signature {
    let table = (0..1usize << arity).map(|_| Scalar::from(*values.choose(r).expect("nonempty value set"))).collect();
    Signature::new(arity, table).expect("arity within cap")
}

/// A random multigraph (loops allowed) on `1..=max_vertices` vertices with
/// `0..=max_edges` edges and random signatures.
pub fn random_instance<R: Rng>(r: &mut R, max_vertices: usize, max_edges: usize, values: &[i64]) -> HolantInstance {
    let n = r.gen_range(1..=max_vertices);
    let m = r.gen_range(0..=max_edges);
    let edges: Vec<(usize, usize)> = (0..m).map(|_| (r.gen_range(0..n), r.gen_range(0..n))).collect();
    let sigs: Vec<Signature> = {
        let mut deg = vec![0usize; n];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg.iter().map(|&d| random_signature(r, d, values)).collect()
    };
    let inst = from_graph(n, &edges, |_| Signature::zero(0));
    let mut out = HolantInstance::new();
    for s in sigs {
        out.add_vertex(s);
    }
    out.edges = inst.edges;
    out
}

/// A random bipartite instance: every edge joins a left vertex to a right one.
pub fn random_bipartite_instance<R: Rng>(
    r: &mut R,
    max_side: usize,
    max_edges: usize,
    values: &[i64],
) -> HolantInstance {
    let nl = r.gen_range(1..=max_side);
    let nr = r.gen_range(1..=max_side);
    let m = r.gen_range(1..=max_edges);
    let pairs: Vec<(usize, usize)> = (0..m).map(|_| (r.gen_range(0..nl), nl + r.gen_range(0..nr))).collect();
    let mut deg = vec![0usize; nl + nr];
    let mut ends = Vec::new();
    for &(u, v) in &pairs {
        ends.push((PortRef::new(u, deg[u]), PortRef::new(v, deg[v])));
        deg[u] += 1;
        deg[v] += 1;
    }
    let mut inst = HolantInstance::new();
    for (v, &d) in deg.iter().enumerate() {
        let part = if v < nl { Part::Left } else { Part::Right };
        inst.add_vertex_on(random_signature(r, d, values), part);
    }
    for (a, b) in ends {
        inst.add_edge(a, b);
    }
    inst
}

/// A random embedded planar multigraph on `n` vertices: a random tree plus
/// up to `extra` edges, each drawn inside a face between two of its corners
/// (so loops and parallel edges occur). Weights come from `values`.
pub fn random_planar_graph<R: Rng>(r: &mut R, n: usize, extra: usize, values: &[i64]) -> (WeightedGraph, RotationSystem) {
    let mut g = WeightedGraph::new(n);
    let mut rot = vec![Vec::new(); n];
    let weight = |r: &mut R| Scalar::from(*values.choose(r).expect("nonempty value set"));
    for v in 1..n {
        let u = r.gen_range(0..v);
        let e = g.add_edge(u, v, weight(r));
        let at = r.gen_range(0..=rot[u].len());
        rot[u].insert(at, 2 * e);
        rot[v].push(2 * e + 1);
    }
    let extra = r.gen_range(0..=extra);
    for _ in 0..extra {
        let e = g.edges.len();
        if e == 0 {
            g.add_edge(0, 0, weight(r));
            rot[0] = vec![0, 1];
            continue;
        }
        let rs = RotationSystem { rot: rot.clone() };
        let faces = trace_faces(&g, &rs).expect("consistent rotation").faces;
        let walk = faces.choose(r).expect("at least one face");
        let i = r.gen_range(0..walk.len());
        let j = r.gen_range(i..walk.len());
        let (x, y) = (g.head(walk[i]), g.head(walk[j]));
        let id = g.add_edge(x, y, weight(r));
        let at = rot[x].iter().position(|&d| d == walk[i] ^ 1).expect("corner") + 1;
        rot[x].insert(at, 2 * id);
        let after = if i == j { 2 * id } else { walk[j] ^ 1 };
        let at = rot[y].iter().position(|&d| d == after).expect("corner") + 1;
        rot[y].insert(at, 2 * id + 1);
    }
    (g, RotationSystem { rot })
}

/// A planar instance whose ports follow the clockwise order, so the identity
/// embedding is planar. `sig` picks the signature from the degree.
pub fn random_planar_instance<R: Rng>(
    r: &mut R,
    max_vertices: usize,
    max_extra: usize,
    sig: impl Fn(usize) -> Signature,
) -> (HolantInstance, Embedding) {
    let n = r.gen_range(1..=max_vertices);
    let (g, rot) = random_planar_graph(r, n, max_extra, &[1]);
    let mut port = vec![0usize; 2 * g.edges.len()];
    for darts in &rot.rot {
        for (j, &d) in darts.iter().enumerate() {
            port[d] = j;
        }
    }
    let mut inst = HolantInstance::new();
    for darts in &rot.rot {
        inst.add_vertex(sig(darts.len()));
    }
    for e in 0..g.edges.len() {
        inst.add_edge((g.tail(2 * e), port[2 * e]), (g.tail(2 * e + 1), port[2 * e + 1]));
    }
    let emb = Embedding::identity(&inst);
    (inst, emb)
}

/// Shape of [`random_decomposed_instance`] outputs.
#[derive(Clone, Debug)]
pub struct DecomposedConfig {
    /// Bag-size threshold the caller will evaluate with.
    pub h: usize,
    /// Pieces glued onto the root piece.
    pub max_children: usize,
    /// New vertices per piece.
    pub max_piece: usize,
    pub max_edges: usize,
    /// Add apex vertices (outside every embedding) to some bags.
    pub apex: bool,
    pub max_degree: Option<usize>,
}

impl Default for DecomposedConfig {
    fn default() -> Self {
        DecomposedConfig { h: 3, max_children: 3, max_piece: 3, max_edges: 12, apex: false, max_degree: None }
    }
}

/// An instance together with a decomposition whose every bag carries the
/// torso embedding (minus apex vertices) inherited from one plane drawing.
#[derive(Clone, Debug)]
pub struct DecomposedInstance {
    pub instance: HolantInstance,
    pub td: TreeDecomposition,
    pub degree: usize,
}

type Pt = (f64, f64);

fn orient(a: Pt, b: Pt, c: Pt) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn crosses(p: (usize, usize), q: (usize, usize), pos: &BTreeMap<usize, Pt>) -> bool {
    if p.0 == q.0 || p.0 == q.1 || p.1 == q.0 || p.1 == q.1 {
        return false;
    }
    let (a, b, c, d) = (pos[&p.0], pos[&p.1], pos[&q.0], pos[&q.1]);
    orient(a, b, c) * orient(a, b, d) < 0.0 && orient(c, d, a) * orient(c, d, b) < 0.0
}

fn angle(from: Pt, to: Pt) -> f64 {
    (to.1 - from.1).atan2(to.0 - from.0)
}

/// Neighbours of `v` among `nbrs`, clockwise (decreasing angle).
fn clockwise(v: usize, nbrs: &[usize], pos: &BTreeMap<usize, Pt>) -> Vec<usize> {
    let mut out = nbrs.to_vec();
    out.sort_by(|&x, &y| angle(pos[&v], pos[&y]).total_cmp(&angle(pos[&v], pos[&x])));
    out
}

/// A straight-line planar drawing: edges between `new` points and from
/// `new` to `fixed` points, avoiding `blocked` segments.
fn draw_piece<R: Rng>(r: &mut R, pos: &BTreeMap<usize, Pt>, fixed: &[usize], new: &[usize], blocked: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut segs: Vec<(usize, usize)> = blocked.to_vec();
    let mut out = Vec::new();
    let try_add = |e: (usize, usize), segs: &mut Vec<(usize, usize)>, out: &mut Vec<(usize, usize)>| {
        if e.0 != e.1 && !segs.iter().any(|&s| s == e || s == (e.1, e.0) || crosses(s, e, pos)) {
            segs.push(e);
            out.push(e);
        }
    };
    let dist = |a: usize, b: usize| {
        let (p, q) = (pos[&a], pos[&b]);
        (p.0 - q.0).hypot(p.1 - q.1)
    };
    for &x in fixed {
        if let Some(&n) = new.iter().min_by(|&&a, &&b| dist(x, a).total_cmp(&dist(x, b))) {
            try_add((x, n), &mut segs, &mut out);
        }
    }
    let mut cands: Vec<(usize, usize)> = Vec::new();
    for (i, &u) in new.iter().enumerate() {
        for &v in &new[i + 1..] {
            cands.push((u, v));
        }
        for &x in fixed {
            cands.push((x, u));
        }
    }
    cands.shuffle(r);
    for e in cands {
        if r.gen_bool(0.55) {
            try_add(e, &mut segs, &mut out);
        }
    }
    for &u in new {
        if !out.iter().any(|e| e.0 == u || e.1 == u) {
            let mut others: Vec<usize> = new.iter().chain(fixed).copied().filter(|&v| v != u).collect();
            others.sort_by(|&a, &b| dist(u, a).total_cmp(&dist(u, b)));
            for v in others {
                let before = out.len();
                try_add((u, v), &mut segs, &mut out);
                if out.len() > before {
                    break;
                }
            }
        }
    }
    out
}

/// A symmetric matchgate-form signature of arity `k`.
pub fn random_form_signature<R: Rng>(r: &mut R, k: usize) -> Signature {
    if k == 0 {
        return Signature::constant(Scalar::from(r.gen_range(1..=3)));
    }
    let form = [1u8, 2, 3, 4, 5, 5, 6, 6][r.gen_range(0..8)];
    let rs = [Scalar::one(), Scalar::from(2), Scalar::from(-2), Scalar::from(-1), Scalar::i()];
    let rv = rs.choose(r).expect("nonempty").clone();
    let c = Scalar::from([1, 2, -1][r.gen_range(0..3)]);
    let pattern = crate::classify::form_pattern(form, &rv, k).expect("nonzero r");
    Signature::symmetric(pattern).scale(&c)
}

/// A nonzero signature supported on one parity class.
pub fn random_parity_signature<R: Rng>(r: &mut R, k: usize, values: &[i64]) -> Signature {
    let odd = r.gen_bool(0.5) as u32;
    loop {
        let table = (0..1usize << k)
            .map(|idx| {
                if (idx as u32).count_ones() % 2 == odd {
                    Scalar::from(*values.choose(r).expect("nonempty"))
                } else {
                    Scalar::zero()
                }
            })
            .collect();
        let f = Signature::new(k, table).expect("small arity");
        if !f.is_zero() {
            return f;
        }
    }
}

/// A planar drawing grown piece by piece; each piece is glued to an
/// existing bag along one vertex, one edge or one triangular face, which
/// becomes its navel. Apex vertices, when enabled, touch their bag (and
/// possibly one child bag) but stay out of every embedding. Vertices on a
/// navel get symmetric matchgate forms; others of arity ≤ 3 may get
/// asymmetric parity signatures; apex vertices get parity tables of any shape.
pub fn random_decomposed_instance<R: Rng>(r: &mut R, cfg: &DecomposedConfig) -> DecomposedInstance {
    loop {
        if let Some(d) = try_decomposed(r, cfg) {
            return d;
        }
    }
}

fn try_decomposed<R: Rng>(r: &mut R, cfg: &DecomposedConfig) -> Option<DecomposedInstance> {
    let mut pos: BTreeMap<usize, Pt> = BTreeMap::new();
    let mut rot: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut simple: Vec<(usize, usize)> = Vec::new();
    let mut bags: Vec<Vec<usize>> = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut n = 0usize;

    // Root piece: points on a circle plus perhaps a centre.
    let n0 = r.gen_range(2..=cfg.max_piece.max(2) + 1);
    let root: Vec<usize> = (0..n0).collect();
    for (j, &v) in root.iter().enumerate() {
        let a = std::f64::consts::TAU * j as f64 / n0 as f64;
        pos.insert(v, (a.cos(), a.sin()));
    }
    n += n0;
    let mut edges = draw_piece(r, &pos, &[], &root, &[]);
    for &(u, v) in &edges {
        simple.push((u, v));
    }
    for &v in &root {
        let nb: Vec<usize> = edges.iter().filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None }).collect();
        rot.insert(v, clockwise(v, &nb, &pos));
    }
    bags.push(root);
    parent.push(None);

    let children = r.gen_range(0..=cfg.max_children);
    for _ in 0..children {
        let p = r.gen_range(0..bags.len());
        let bag = bags[p].clone();
        // Candidate navels.
        let in_bag = |v: usize| bag.contains(&v);
        let edge_cands: Vec<(usize, usize)> = simple.iter().copied().filter(|&(a, b)| in_bag(a) && in_bag(b)).collect();
        let faces = crate::scg::vertex_faces(&rot).ok()?;
        let tri_cands: Vec<[usize; 3]> = faces
            .iter()
            .filter(|f| f.len() == 3)
            .map(|f| [f[0].0, f[1].0, f[2].0])
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && t.iter().all(|&v| in_bag(v)))
            .collect();
        let kind = r.gen_range(1..=3);
        let m = r.gen_range(1..=cfg.max_piece.max(1));
        let new: Vec<usize> = (n..n + m).collect();
        n += m;
        let mut local: BTreeMap<usize, Pt> = BTreeMap::new();
        // (navel vertex, index in its rotation where the block goes)
        let mut slots: Vec<(usize, usize)> = Vec::new();
        let navel: Vec<usize>;
        match kind {
            3 if !tri_cands.is_empty() => {
                let t = *tri_cands.choose(r).expect("nonempty");
                for (v, pt) in t.iter().zip([(0.0, 0.0), (1.0, 0.0), (0.5, 0.9)]) {
                    local.insert(*v, pt);
                }
                for &v in &new {
                    let (mut x, mut y): (f64, f64) = (r.gen(), r.gen());
                    if x + y > 1.0 {
                        (x, y) = (1.0 - x, 1.0 - y);
                    }
                    let (wb, wc) = (0.1 + 0.7 * x, 0.1 + 0.7 * y);
                    local.insert(v, (wb + wc * 0.5, wc * 0.9));
                }
                for i in 0..3 {
                    let (prev, x) = (t[(i + 2) % 3], t[i]);
                    let at = rot[&x].iter().position(|&u| u == prev).expect("face edge") + 1;
                    slots.push((x, at));
                }
                navel = t.to_vec();
            }
            k if k >= 2 && !edge_cands.is_empty() => {
                let (mut a, mut b) = *edge_cands.choose(r).expect("nonempty");
                if r.gen_bool(0.5) {
                    std::mem::swap(&mut a, &mut b);
                }
                local.insert(a, (0.0, 0.0));
                local.insert(b, (1.0, 0.0));
                for &v in &new {
                    local.insert(v, (r.gen_range(0.1..0.9), r.gen_range(0.15..0.9)));
                }
                slots.push((a, rot[&a].iter().position(|&u| u == b).expect("edge")));
                slots.push((b, rot[&b].iter().position(|&u| u == a).expect("edge") + 1));
                navel = vec![a, b];
            }
            _ => {
                let x = *bag.choose(r).expect("nonempty bag");
                local.insert(x, (0.0, 0.0));
                for &v in &new {
                    local.insert(v, (r.gen_range(-1.0..1.0), r.gen_range(0.2..1.2)));
                }
                slots.push((x, r.gen_range(0..=rot[&x].len())));
                navel = vec![x];
            }
        }
        let blocked: Vec<(usize, usize)> =
            simple.iter().copied().filter(|&(a, b)| navel.contains(&a) && navel.contains(&b)).collect();
        edges = draw_piece(r, &local, &navel, &new, &blocked);
        for &(u, v) in &edges {
            simple.push((u, v));
        }
        let nbrs = |v: usize| -> Vec<usize> {
            edges.iter().filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None }).collect()
        };
        for &v in &new {
            rot.insert(v, clockwise(v, &nbrs(v), &local));
        }
        for &(x, at) in &slots {
            let block = clockwise(x, &nbrs(x), &local);
            let ring = rot.get_mut(&x).expect("navel vertex");
            for (i, u) in block.into_iter().enumerate() {
                ring.insert(at + i, u);
            }
        }
        for (v, pt) in local {
            pos.entry(v).or_insert(pt);
        }
        let mut b = navel.clone();
        b.extend(new.iter().copied());
        b.sort_unstable();
        bags.push(b);
        parent.push(Some(p));
    }

    let planar_n = n;
    let mut medges: Vec<(usize, usize)> = simple.clone();
    let mut apex: Vec<Vec<usize>> = vec![Vec::new(); bags.len()];
    if cfg.apex {
        for t in 0..bags.len() {
            if !apex[t].is_empty() || !r.gen_bool(0.5) {
                continue;
            }
            let sep: Vec<usize> = parent[t].map(|p| bags[p].clone()).unwrap_or_default();
            let own: Vec<usize> = bags[t].iter().copied().filter(|v| !sep.contains(v) && *v < planar_n).collect();
            if own.is_empty() {
                continue;
            }
            let a = n;
            n += 1;
            for _ in 0..r.gen_range(1..=2) {
                medges.push((a, *own.choose(r).expect("nonempty")));
            }
            bags[t].push(a);
            apex[t].push(a);
            let kids: Vec<usize> = (0..bags.len()).filter(|&c| parent[c] == Some(t)).collect();
            if let Some(&l) = kids.choose(r) {
                if r.gen_bool(0.5) {
                    let mine: Vec<usize> = bags[l].iter().copied().filter(|v| !bags[t].contains(v)).collect();
                    if let Some(&u) = mine.choose(r) {
                        medges.push((a, u));
                        bags[l].push(a);
                        apex[l].push(a);
                    }
                }
            }
        }
    }
    // Parallel edges and loops.
    for _ in 0..r.gen_range(0..=2) {
        if let Some(&e) = simple.choose(r) {
            medges.push(e);
        }
    }
    if n > 0 && r.gen_bool(0.3) {
        let v = r.gen_range(0..planar_n);
        medges.push((v, v));
    }
    if medges.len() > cfg.max_edges {
        return None;
    }
    let mut deg = vec![0usize; n];
    for &(u, v) in &medges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let degree = deg.iter().copied().max().unwrap_or(0);
    if cfg.max_degree.is_some_and(|k| degree > k) {
        return None;
    }
    let mut on_navel = vec![false; n];
    for (t, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            for v in bags[t].iter().filter(|v| bags[*p].contains(v)) {
                on_navel[*v] = true;
            }
        }
    }
    let mut inst = HolantInstance::new();
    for v in 0..n {
        let k = deg[v];
        let sig = if v >= planar_n {
            random_parity_signature(r, k, &[0, 1, 2, -1])
        } else if !on_navel[v] && (1..=3).contains(&k) && r.gen_bool(0.3) {
            random_parity_signature(r, k, &[0, 1, 2, -1, 3])
        } else {
            random_form_signature(r, k)
        };
        inst.add_vertex(sig);
    }
    let mut next = vec![0usize; n];
    for &(u, v) in &medges {
        let pu = next[u];
        next[u] += 1;
        let pv = next[v];
        next[v] += 1;
        inst.add_edge((u, pu), (v, pv));
    }
    let nodes = bags
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut bag = b.clone();
            bag.sort_unstable();
            let emb: TorsoEmbedding = bag
                .iter()
                .filter(|v| !apex[i].contains(v))
                .map(|&v| (v, rot[&v].iter().copied().filter(|u| bag.contains(u)).collect()))
                .collect();
            TdNode { id: i, bag, apex: apex[i].clone(), embedding: Some(emb) }
        })
        .collect();
    let tree_edges = parent.iter().enumerate().filter_map(|(c, p)| p.map(|p| (p, c))).collect();
    Some(DecomposedInstance { instance: inst, td: TreeDecomposition { nodes, edges: tree_edges, root: Some(0) }, degree })
}

/// A connected loopless planar cubic multigraph on `n` vertices (`n` even,
/// at most 10) with a planar rotation system. Pairings of half-edges are
/// drawn uniformly and rejected until one is connected and planar.
pub fn random_planar_cubic<R: Rng>(r: &mut R, n: usize) -> (WeightedGraph, RotationSystem) {
    assert!(n >= 2 && n % 2 == 0 && n <= 10, "n must be even and in 2..=10");
    loop {
        let mut half: Vec<usize> = (0..3 * n).map(|h| h / 3).collect();
        half.shuffle(r);
        let pairs: Vec<(usize, usize)> = half.chunks(2).map(|c| (c[0], c[1])).collect();
        if pairs.iter().any(|&(u, v)| u == v) {
            continue;
        }
        let g = WeightedGraph::unit(n, &pairs);
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in &pairs {
                for (x, y) in [(a, b), (b, a)] {
                    if x == u && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            continue;
        }
        if let Ok(Some(rot)) = crate::reductions::find_planar_rotation(&g, &[]) {
            return (g, rot);
        }
    }
}
