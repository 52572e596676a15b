//! Recognizers for the tractable signature classes and the dichotomy verdict.
//!
//! - `𝒜` (affine): `λ·χ_{AX=b}·i^{Σ a_i x_i + 2Σ b_ij x_i x_j}` with `a_i ∈ Z₄`.
//! - `𝒫` (product): tensor products of signatures supported on two
//!   complementary strings.
//! - Symmetric matchgates: the six forms of [`symmetric_matchgate_form`].
//!
//! The zero signature belongs to both `𝒜` and `𝒫` with `λ = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::holo::hat_inverse;
use crate::scalar::Scalar;
use crate::signature::{bit, Parity, Signature, SymmetricSignature};

pub const PRODUCT_ARITY_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("product recognition is capped at arity {PRODUCT_ARITY_CAP}, got {0}")]
    ArityCap(usize),
    #[error("class {0} needs a degree bound of at least 3")]
    MissingDegreeBound(ClassDescriptor),
    #[error("unknown class descriptor {0:?}")]
    UnknownClass(String),
}

/// `i^e` for `e ∈ Z₄`.
pub fn i_pow(e: u8) -> Scalar {
    match e % 4 {
        0 => Scalar::one(),
        1 => Scalar::i(),
        2 => Scalar::from(-1),
        _ => -Scalar::i(),
    }
}

/// `e` with `s = i^e`, if any.
fn i_log(s: &Scalar) -> Option<u8> {
    (0..4).find(|&e| i_pow(e) == *s)
}

// ===========================================================================
// Affine type
// ===========================================================================

/// `Σ_{v ∈ vars} x_v = rhs (mod 2)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equation {
    pub vars: Vec<usize>,
    pub rhs: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineCertificate {
    pub arity: usize,
    pub lambda: Scalar,
    pub equations: Vec<Equation>,
    /// `a_i ∈ Z₄`, one per variable.
    pub linear: Vec<u8>,
    /// Pairs `i < j` with `b_ij = 1`.
    pub quadratic: Vec<(usize, usize)>,
}

impl AffineCertificate {
    pub fn reconstruct(&self) -> Signature {
        let k = self.arity;
        Signature::from_fn(k, |idx| {
            let x = |v: usize| bit(idx, k, v);
            let sat = self
                .equations
                .iter()
                .all(|eq| eq.vars.iter().map(|&v| x(v)).sum::<u8>() % 2 == eq.rhs);
            if !sat {
                return Scalar::zero();
            }
            let mut e: u32 = (0..k).map(|v| self.linear[v] as u32 * x(v) as u32).sum();
            e += self.quadratic.iter().map(|&(a, b)| 2 * (x(a) & x(b)) as u32).sum::<u32>();
            &self.lambda * &i_pow((e % 4) as u8)
        })
    }
}

/// Row-reduced basis over Z₂ of table-index bitmasks; `pivots[j]` is the
/// highest set bit of `rows[j]`, and no other row has that bit.
struct Rref {
    rows: Vec<usize>,
    pivots: Vec<usize>,
}

impl Rref {
    fn new() -> Self {
        Rref { rows: Vec::new(), pivots: Vec::new() }
    }

    fn reduce(&self, mut v: usize) -> usize {
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            if v >> p & 1 == 1 {
                v ^= r;
            }
        }
        v
    }

    fn insert(&mut self, v: usize) -> bool {
        let v = self.reduce(v);
        if v == 0 {
            return false;
        }
        let p = usize::BITS as usize - 1 - v.leading_zeros() as usize;
        for r in self.rows.iter_mut() {
            if *r >> p & 1 == 1 {
                *r ^= v;
            }
        }
        self.rows.push(v);
        self.pivots.push(p);
        true
    }
}

/// Certificate iff `f ∈ 𝒜`.
pub fn is_affine(f: &Signature) -> Option<AffineCertificate> {
    let k = f.arity();
    let var = |b: usize| k - 1 - b;
    let support: Vec<usize> = f.support().collect();
    let Some(&p0) = support.first() else {
        return Some(AffineCertificate {
            arity: k,
            lambda: Scalar::zero(),
            equations: Vec::new(),
            linear: vec![0; k],
            quadratic: Vec::new(),
        });
    };
    let mut basis = Rref::new();
    for &s in &support {
        basis.insert(s ^ p0);
    }
    let m = basis.rows.len();
    if support.len() != 1 << m {
        return None;
    }
    // Support point whose pivot coordinates are all zero.
    let mut origin = p0;
    for (r, &p) in basis.rows.iter().zip(&basis.pivots) {
        if p0 >> p & 1 == 1 {
            origin ^= r;
        }
    }
    let lambda = f.get(origin).clone();
    let ratio = |idx: usize| -> Option<u8> { i_log(&f.get(idx).try_div(&lambda).ok()?) };
    let a: Vec<u8> = basis.rows.iter().map(|r| ratio(origin ^ r)).collect::<Option<_>>()?;
    let mut b = vec![vec![0u8; m]; m];
    for j in 0..m {
        for l in j + 1..m {
            let e = ratio(origin ^ basis.rows[j] ^ basis.rows[l])?;
            let d = (e + 8 - a[j] - a[l]) % 4;
            if d % 2 == 1 {
                return None;
            }
            b[j][l] = d / 2;
        }
    }
    for y in 0..1usize << m {
        let mut idx = origin;
        let mut e = 0u32;
        for j in 0..m {
            if y >> j & 1 == 1 {
                idx ^= basis.rows[j];
                e += a[j] as u32;
                for l in j + 1..m {
                    if y >> l & 1 == 1 {
                        e += 2 * b[j][l] as u32;
                    }
                }
            }
        }
        if *f.get(idx) != &lambda * &i_pow((e % 4) as u8) {
            return None;
        }
    }
    let mut linear = vec![0u8; k];
    let mut quadratic = Vec::new();
    for j in 0..m {
        linear[var(basis.pivots[j])] = a[j];
        for l in j + 1..m {
            if b[j][l] == 1 {
                let (u, v) = (var(basis.pivots[j]), var(basis.pivots[l]));
                quadratic.push((u.min(v), u.max(v)));
            }
        }
    }
    quadratic.sort_unstable();
    let mut equations = Vec::new();
    for c in (0..k).rev() {
        if basis.pivots.contains(&c) {
            continue;
        }
        let mut mask = 1usize << c;
        for (r, &p) in basis.rows.iter().zip(&basis.pivots) {
            if r >> c & 1 == 1 {
                mask |= 1 << p;
            }
        }
        let mut vars: Vec<usize> = (0..k).filter(|&v| mask >> (k - 1 - v) & 1 == 1).collect();
        vars.sort_unstable();
        let rhs = ((p0 & mask).count_ones() % 2) as u8;
        equations.push(Equation { vars, rhs });
    }
    Some(AffineCertificate { arity: k, lambda, equations, linear, quadratic })
}

// ===========================================================================
// Product type
// ===========================================================================

/// A factor supported on `α` and its complement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductBlock {
    pub vars: Vec<usize>,
    /// Assignment to `vars`; its first bit is 0.
    pub alpha: Vec<u8>,
    pub value_alpha: Scalar,
    pub value_complement: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductCertificate {
    pub arity: usize,
    pub scale: Scalar,
    pub blocks: Vec<ProductBlock>,
}

impl ProductCertificate {
    pub fn reconstruct(&self) -> Signature {
        let k = self.arity;
        Signature::from_fn(k, |idx| {
            let mut v = self.scale.clone();
            for b in &self.blocks {
                let x: Vec<u8> = b.vars.iter().map(|&u| bit(idx, k, u)).collect();
                if x == b.alpha {
                    v = &v * &b.value_alpha;
                } else if x.iter().zip(&b.alpha).all(|(p, q)| p != q) {
                    v = &v * &b.value_complement;
                } else {
                    return Scalar::zero();
                }
                if v.is_zero() {
                    return v;
                }
            }
            v
        })
    }
}

/// Tries `f = u ⊗ v` with `u` over local variables `s` and `v` over the rest.
fn rank_one_split(f: &Signature, s: &[usize]) -> Option<(Signature, Signature)> {
    let k = f.arity();
    let t: Vec<usize> = (0..k).filter(|i| !s.contains(i)).collect();
    let scatter = |vars: &[usize]| -> Vec<usize> {
        let n = vars.len();
        (0..1usize << n)
            .map(|r| vars.iter().enumerate().map(|(j, &v)| (bit(r, n, j) as usize) << (k - 1 - v)).sum())
            .collect()
    };
    let (rows, cols) = (scatter(s), scatter(&t));
    let at = |r: usize, c: usize| f.get(rows[r] | cols[c]);
    let (r0, c0) = rows
        .iter()
        .enumerate()
        .flat_map(|(r, _)| (0..cols.len()).map(move |c| (r, c)))
        .find(|&(r, c)| !at(r, c).is_zero())?;
    let pivot = at(r0, c0);
    for r in 0..rows.len() {
        let a = at(r, c0);
        for c in 0..cols.len() {
            let b = at(r0, c);
            let v = at(r, c);
            if a.is_zero() || b.is_zero() {
                if !v.is_zero() {
                    return None;
                }
            } else if v * pivot != a * b {
                return None;
            }
        }
    }
    let u = Signature::from_fn(s.len(), |r| at(r, c0).clone());
    let inv = pivot.inv().ok()?;
    let v = Signature::from_fn(t.len(), |c| at(r0, c) * &inv);
    Some((u, v))
}

fn e_block(u: &Signature, vars: Vec<usize>) -> Option<ProductBlock> {
    let m = u.arity();
    let full = (1usize << m) - 1;
    let s = u.support().next().unwrap_or(0);
    let alpha_idx = if s >> (m - 1) & 1 == 0 { s } else { s ^ full };
    if u.support().any(|x| x != alpha_idx && x != alpha_idx ^ full) {
        return None;
    }
    Some(ProductBlock {
        alpha: (0..m).map(|j| bit(alpha_idx, m, j)).collect(),
        value_alpha: u.get(alpha_idx).clone(),
        value_complement: u.get(alpha_idx ^ full).clone(),
        vars,
    })
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for x in start..n {
            cur.push(x);
            go(x + 1, n, r, cur, out);
            cur.pop();
        }
    }
    go(0, n, r, &mut cur, &mut out);
    out
}

/// Certificate iff `f ∈ 𝒫`.
pub fn is_product(f: &Signature) -> Result<Option<ProductCertificate>, ClassifyError> {
    let k = f.arity();
    if k > PRODUCT_ARITY_CAP {
        return Err(ClassifyError::ArityCap(k));
    }
    if k == 0 {
        return Ok(Some(ProductCertificate { arity: 0, scale: f.get(0).clone(), blocks: Vec::new() }));
    }
    if f.is_zero() {
        let block = ProductBlock {
            vars: (0..k).collect(),
            alpha: vec![0; k],
            value_alpha: Scalar::zero(),
            value_complement: Scalar::zero(),
        };
        return Ok(Some(ProductCertificate { arity: k, scale: Scalar::one(), blocks: vec![block] }));
    }
    let mut blocks = Vec::new();
    let mut rest = f.clone();
    let mut rest_vars: Vec<usize> = (0..k).collect();
    'outer: while rest.arity() > 0 {
        let m = rest.arity();
        // Smallest set containing the first variable that splits off.
        for size in 1..m {
            for tail in combinations(m - 1, size - 1) {
                let s: Vec<usize> = std::iter::once(0).chain(tail.iter().map(|x| x + 1)).collect();
                if let Some((u, v)) = rank_one_split(&rest, &s) {
                    let vars: Vec<usize> = s.iter().map(|&j| rest_vars[j]).collect();
                    let Some(b) = e_block(&u, vars) else { return Ok(None) };
                    blocks.push(b);
                    rest_vars = rest_vars.iter().enumerate().filter(|(j, _)| !s.contains(j)).map(|(_, &x)| x).collect();
                    rest = v;
                    continue 'outer;
                }
            }
        }
        let Some(b) = e_block(&rest, rest_vars.clone()) else { return Ok(None) };
        blocks.push(b);
        break;
    }
    Ok(Some(ProductCertificate { arity: k, scale: Scalar::one(), blocks }))
}

// ===========================================================================
// Matchgate forms
// ===========================================================================

/// `c · pattern` where the pattern is one of
/// 1. `[1,0,…,0]`  2. `[0,…,0,1]`  3. `[0,1,0,…,0]`  4. `[0,…,0,1,0]`
/// 5. `[1,0,r,0,r²,…]`  6. `√r·[0,1,0,r,0,r²,…]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchgateForm {
    pub form: u8,
    pub r: Scalar,
    pub c: Scalar,
}

impl MatchgateForm {
    /// Type 1 forms (1, 2, 5) have even-weight support at the origin side;
    /// type 2 forms (3, 4, 6) are the rest.
    pub fn kind(&self) -> u8 {
        match self.form {
            1 | 2 | 5 => 1,
            _ => 2,
        }
    }
}

/// The form pattern (without `c`) at arity `k`.
pub fn form_pattern(form: u8, r: &Scalar, k: usize) -> Result<Vec<Scalar>, crate::scalar::ScalarError> {
    let mut v = vec![Scalar::zero(); k + 1];
    match form {
        1 => v[0] = Scalar::one(),
        2 => v[k] = Scalar::one(),
        3 if k >= 1 => v[1] = Scalar::one(),
        4 if k >= 1 => v[k - 1] = Scalar::one(),
        5 => {
            for w in (0..=k).step_by(2) {
                v[w] = r.pow((w / 2) as u32);
            }
        }
        6 => {
            let s = r.sqrt()?;
            for w in (1..=k).step_by(2) {
                v[w] = &s * &r.pow((w / 2) as u32);
            }
        }
        _ => {}
    }
    Ok(v)
}

fn only_nonzero(v: &[Scalar], w: usize) -> bool {
    v.iter().enumerate().all(|(j, x)| (j == w) != x.is_zero())
}

/// The matching form with `(c, r)`; the zero signature has none.
pub fn symmetric_matchgate_form(f: &SymmetricSignature) -> Option<MatchgateForm> {
    let v = &f.values;
    let k = f.arity();
    let simple = |form: u8, w: usize| MatchgateForm { form, r: Scalar::one(), c: v[w].clone() };
    if only_nonzero(v, 0) {
        return Some(simple(1, 0));
    }
    if only_nonzero(v, k) {
        return Some(simple(2, k));
    }
    if k >= 1 && only_nonzero(v, 1) {
        return Some(simple(3, 1));
    }
    if k >= 1 && only_nonzero(v, k - 1) {
        return Some(simple(4, k - 1));
    }
    let geometric = |start: usize| -> Option<Scalar> {
        if v[start].is_zero() || k < start + 2 {
            return None;
        }
        let r = v[start + 2].try_div(&v[start]).ok()?;
        if r.is_zero() {
            return None;
        }
        for (w, x) in v.iter().enumerate() {
            let ok = if w < start || (w - start) % 2 == 1 {
                x.is_zero()
            } else {
                *x == &v[start] * &r.pow(((w - start) / 2) as u32)
            };
            if !ok {
                return None;
            }
        }
        Some(r)
    };
    if let Some(r) = geometric(0) {
        return Some(MatchgateForm { form: 5, r, c: v[0].clone() });
    }
    if let Some(r) = geometric(1) {
        let c = match r.sqrt() {
            Ok(s) => v[1].try_div(&s).unwrap_or_else(|_| v[1].to_float() / s.to_float()),
            Err(_) => v[1].to_float() / r.to_float().sqrt().expect("float sqrt"),
        };
        return Some(MatchgateForm { form: 6, r, c });
    }
    None
}

/// Which of the five `ℳ∖𝒜` patterns `f` is a nonzero multiple of.
///
/// 1. `[0,1,0,…,0]_k`, `k ≥ 3`
/// 2. `[0,…,0,1,0]_k`, `k ≥ 3`
/// 3. `[1,0,r]`, `r⁴ ∉ {0,1}`
/// 4. `[1,0,r,0,r²,…]_k`, `k ≥ 3`, `r² ∉ {0,1}`
/// 5. `[0,1,0,r,0,r²,…]_k`, `k ≥ 3`, `r² ∉ {0,1}`
pub fn m_minus_a_form(f: &SymmetricSignature) -> Option<u8> {
    let form = symmetric_matchgate_form(f)?;
    let k = f.arity();
    let r2 = form.r.pow(2);
    let r2_ok = !r2.is_zero() && !r2.is_one();
    match form.form {
        3 if k >= 3 => Some(1),
        4 if k >= 3 => Some(2),
        5 if k == 2 => {
            let r4 = form.r.pow(4);
            (!r4.is_zero() && !r4.is_one()).then_some(3)
        }
        5 if k >= 3 && r2_ok => Some(4),
        6 if k >= 3 && r2_ok => Some(5),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Yes,
    No,
    Unknown,
}

/// Matchgate membership: decided for symmetric signatures and arity ≤ 3.
pub fn is_matchgate(f: &Signature) -> Membership {
    let parity = f.parity();
    if parity == Parity::Zero {
        return Membership::Yes;
    }
    if let Some(s) = f.as_symmetric() {
        return if symmetric_matchgate_form(&s).is_some() { Membership::Yes } else { Membership::No };
    }
    match (parity, f.arity() <= 3) {
        (Parity::Mixed, _) => Membership::No,
        (_, true) => Membership::Yes,
        (_, false) => Membership::Unknown,
    }
}

// ===========================================================================
// Verdicts
// ===========================================================================

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassDescriptor {
    General,
    Planar,
    Tw(usize),
    SingleCrossingFree,
    Apex,
    /// Minor-closed, excludes some vortex graph, contains all planar graphs
    /// but is not all planar-like; requires a degree bound.
    ForbidsVortexButNotPlanar,
    /// Minor-closed, excludes every shallow vortex grid; requires a degree bound.
    ForbidsAllVortex,
}

impl fmt::Display for ClassDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassDescriptor::General => write!(f, "general"),
            ClassDescriptor::Planar => write!(f, "planar"),
            ClassDescriptor::Tw(k) => write!(f, "tw:{k}"),
            ClassDescriptor::SingleCrossingFree => write!(f, "single-crossing"),
            ClassDescriptor::Apex => write!(f, "apex"),
            ClassDescriptor::ForbidsVortexButNotPlanar => write!(f, "vortex-not-planar"),
            ClassDescriptor::ForbidsAllVortex => write!(f, "no-vortex"),
        }
    }
}

impl FromStr for ClassDescriptor {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, ClassifyError> {
        let bad = || ClassifyError::UnknownClass(s.to_string());
        Ok(match s {
            "general" => ClassDescriptor::General,
            "planar" => ClassDescriptor::Planar,
            "tw" => ClassDescriptor::Tw(0),
            "single-crossing" => ClassDescriptor::SingleCrossingFree,
            "apex" => ClassDescriptor::Apex,
            "vortex-not-planar" => ClassDescriptor::ForbidsVortexButNotPlanar,
            "no-vortex" => ClassDescriptor::ForbidsAllVortex,
            _ => {
                let k = s.strip_prefix("tw:").ok_or_else(bad)?;
                ClassDescriptor::Tw(k.parse().map_err(|_| bad())?)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    PolyTime,
    SharpPHard,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub witness: String,
    pub class: ClassDescriptor,
}

fn all_affine(fs: &[&Signature]) -> Option<usize> {
    fs.iter().position(|f| is_affine(f).is_none())
}

/// `Some(true)` if every member is product type, `Some(false)` if one is not,
/// `None` if a member exceeds the product-recognition cap.
fn all_product(fs: &[&Signature]) -> Option<bool> {
    let mut undecided = false;
    for f in fs {
        match is_product(f) {
            Ok(Some(_)) => {}
            Ok(None) => return Some(false),
            Err(_) => undecided = true,
        }
    }
    if undecided {
        None
    } else {
        Some(true)
    }
}

/// Applies the dichotomy decision table to `fs` over graphs of `class`.
pub fn verdict(fs: &[Signature], class: ClassDescriptor, degree_bound: Option<usize>) -> Result<Verdict, ClassifyError> {
    let needs_degree = matches!(class, ClassDescriptor::ForbidsVortexButNotPlanar | ClassDescriptor::ForbidsAllVortex);
    if needs_degree && degree_bound.is_none_or(|d| d < 3) {
        return Err(ClassifyError::MissingDegreeBound(class));
    }
    let make = |outcome, witness: String| Ok(Verdict { outcome, witness, class });
    let live: Vec<&Signature> = fs.iter().filter(|f| !f.is_zero()).collect();
    let non_affine = all_affine(&live);
    if non_affine.is_none() {
        return make(Outcome::PolyTime, "F⊆𝒜".into());
    }
    let product = all_product(&live);
    if product == Some(true) {
        return make(Outcome::PolyTime, "F⊆𝒫".into());
    }
    if let ClassDescriptor::Tw(_) = class {
        return make(Outcome::PolyTime, "bounded treewidth".into());
    }
    let planar_like = matches!(
        class,
        ClassDescriptor::Planar | ClassDescriptor::SingleCrossingFree | ClassDescriptor::ForbidsVortexButNotPlanar
    );
    if product.is_none() {
        return make(Outcome::Unknown, "product membership undecided above the arity cap".into());
    }
    let witness = live[non_affine.expect("some member is not affine")];
    if !planar_like {
        return make(Outcome::SharpPHard, format!("F⊄𝒜, F⊄𝒫; {witness} ∉ 𝒜"));
    }
    let mut unknown = None;
    for f in &live {
        match is_matchgate(&hat_inverse(f)) {
            Membership::Yes => {}
            Membership::No => return make(Outcome::SharpPHard, format!("{f} ∉ M̂_P, F⊄𝒜, F⊄𝒫")),
            Membership::Unknown => unknown = unknown.or(Some(*f)),
        }
    }
    match unknown {
        Some(f) => make(Outcome::Unknown, format!("M̂_P membership of {f} undecided")),
        None => make(Outcome::PolyTime, "F⊆M̂_P".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holo::hat;
    use crate::signature::bits_of;
    use proptest::prelude::*;

    fn sym(v: &[i64]) -> SymmetricSignature {
        SymmetricSignature::from_ints(v)
    }

    #[test]
    fn affine_examples() {
        let eq3 = Signature::equality(3);
        let c = is_affine(&eq3).unwrap();
        assert_eq!(c.lambda, Scalar::one());
        assert_eq!(c.linear, vec![0, 0, 0]);
        assert!(c.quadratic.is_empty());
        assert_eq!(c.equations.len(), 2);
        assert_eq!(c.reconstruct(), eq3);

        let f = Signature::symmetric(vec![Scalar::one(), Scalar::zero(), Scalar::i()]);
        let c = is_affine(&f).unwrap();
        assert_eq!(c.equations, vec![Equation { vars: vec![0, 1], rhs: 0 }]);
        assert_eq!(c.linear, vec![1, 0]);
        assert_eq!(c.reconstruct(), f);

        assert!(is_affine(&Signature::sym(&[1, 0, 2, 0])).is_none());
        assert!(is_affine(&Signature::sym(&[1, -1])).is_some());
        let z = is_affine(&Signature::zero(2)).unwrap();
        assert_eq!(z.lambda, Scalar::zero());
        assert_eq!(z.reconstruct(), Signature::zero(2));
    }

    #[test]
    fn affine_quadratic_term() {
        // (-1)^{x0 x1} on a full support.
        let f = Signature::from_ints(&[1, 1, 1, -1]);
        let c = is_affine(&f).unwrap();
        assert_eq!(c.quadratic, vec![(0, 1)]);
        assert_eq!(c.reconstruct(), f);
    }

    #[test]
    fn product_examples() {
        let c = is_product(&Signature::sym(&[1, 0, 2])).unwrap().unwrap();
        assert_eq!(c.blocks.len(), 1);
        assert_eq!(c.blocks[0].alpha, vec![0, 0]);
        for k in 1..=12 {
            let c = is_product(&Signature::equality(k)).unwrap().unwrap();
            assert_eq!(c.blocks.len(), 1);
        }
        assert_eq!(is_product(&Signature::sym(&[1, 0, 2, 0])).unwrap(), None);
        assert_eq!(is_product(&Signature::zero(13)), Err(ClassifyError::ArityCap(13)));
    }

    #[test]
    fn product_splits_factors() {
        let f = Signature::sym(&[1, 0, 2])
            .tensor(&Signature::sym(&[3, 5]))
            .unwrap()
            .permute(&[0, 2, 1])
            .unwrap();
        let c = is_product(&f).unwrap().unwrap();
        assert_eq!(c.blocks.len(), 2);
        assert_eq!(c.reconstruct(), f);
        let point = Signature::from_ints(&[0, 0, 0, 0, 0, 7, 0, 0]);
        let c = is_product(&point).unwrap().unwrap();
        assert_eq!(c.reconstruct(), point);
    }

    #[test]
    fn matchgate_form_examples() {
        let m = symmetric_matchgate_form(&sym(&[0, 0, 1, 0])).unwrap();
        assert_eq!((m.form, m.c.clone()), (4, Scalar::one()));
        let m = symmetric_matchgate_form(&sym(&[1, 0, 2, 0, 4])).unwrap();
        assert_eq!((m.form, m.r.clone()), (5, Scalar::from(2)));
        assert_eq!(symmetric_matchgate_form(&sym(&[1, 0, 0, 1])), None);
        let m = symmetric_matchgate_form(&sym(&[0, 3, 0, 6])).unwrap();
        assert_eq!((m.form, m.r.clone()), (6, Scalar::from(2)));
        let rebuilt: Vec<Scalar> = form_pattern(6, &m.r, 3).unwrap().iter().map(|x| x * &m.c).collect();
        assert_eq!(rebuilt, sym(&[0, 3, 0, 6]).values);
        assert_eq!(symmetric_matchgate_form(&sym(&[0, 0, 0])), None);
        assert_eq!(symmetric_matchgate_form(&sym(&[1, 0, 2, 0, 5])), None);
    }

    #[test]
    fn m_minus_a_examples() {
        assert_eq!(m_minus_a_form(&sym(&[1, 0, 2])), Some(3));
        assert_eq!(m_minus_a_form(&sym(&[1, 0, -1])), None);
        assert!(is_affine(&Signature::sym(&[1, 0, -1])).is_some());
        assert_eq!(m_minus_a_form(&sym(&[0, 1, 0, 0])), Some(1));
        assert_eq!(m_minus_a_form(&sym(&[0, 0, 1, 0])), Some(2));
        assert_eq!(m_minus_a_form(&sym(&[1, 0, 2, 0])), Some(4));
        assert_eq!(m_minus_a_form(&sym(&[0, 1, 0, 3])), Some(5));
        assert_eq!(m_minus_a_form(&sym(&[1, 0, -1, 0])), None);
        assert_eq!(m_minus_a_form(&SymmetricSignature::new(vec![Scalar::one(), Scalar::zero(), Scalar::i()])), None);
    }

    #[test]
    fn matchgate_membership_examples() {
        let f = Signature::from_ints(&[1, 0, 0, 2, 0, 3, 0, 0]);
        assert_eq!(is_matchgate(&f), Membership::Yes);
        assert_eq!(is_matchgate(&Signature::from_ints(&[1, 1, 0, 0])), Membership::No);
        let g = Signature::from_ints(&[1, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(is_matchgate(&g), Membership::Unknown);
        assert_eq!(is_matchgate(&Signature::sym(&[1, 0, 2, 0, 4])), Membership::Yes);
        assert_eq!(is_matchgate(&Signature::sym(&[1, 0, 2, 0, 5])), Membership::No);
    }

    #[test]
    fn verdict_examples() {
        let v = verdict(&[Signature::sym(&[7, -1, -1, 7])], ClassDescriptor::Planar, None).unwrap();
        assert_eq!(v.outcome, Outcome::PolyTime);
        let v = verdict(&[Signature::sym(&[7, -1, -1, 7])], ClassDescriptor::General, None).unwrap();
        assert_eq!(v.outcome, Outcome::SharpPHard);
        let v = verdict(&[Signature::sym(&[1, 0, 2, 0])], ClassDescriptor::Planar, None).unwrap();
        assert_eq!(v.outcome, Outcome::SharpPHard);
        let eqs = [Signature::equality(2), Signature::equality(3)];
        for class in all_classes() {
            let v = verdict(&eqs, class, Some(3)).unwrap();
            assert_eq!(v.outcome, Outcome::PolyTime, "{class}");
        }
        assert!(verdict(&eqs, ClassDescriptor::ForbidsAllVortex, None).is_err());
        let tw = verdict(&[Signature::sym(&[1, 0, 2, 0])], ClassDescriptor::Tw(4), None).unwrap();
        assert_eq!(tw.outcome, Outcome::PolyTime);
    }

    #[test]
    fn verdict_unknown_for_asymmetric_high_arity() {
        let g = Signature::from_ints(&[1, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 3]);
        let f = hat(&g);
        assert!(is_affine(&f).is_none());
        let v = verdict(&[f.clone()], ClassDescriptor::Planar, None).unwrap();
        assert_eq!(v.outcome, Outcome::Unknown);
        let v = verdict(&[f], ClassDescriptor::Apex, None).unwrap();
        assert_eq!(v.outcome, Outcome::SharpPHard);
    }

    #[test]
    fn class_descriptor_text() {
        for c in all_classes() {
            assert_eq!(c.to_string().parse::<ClassDescriptor>().unwrap(), c);
        }
        assert!("torus".parse::<ClassDescriptor>().is_err());
    }

    fn all_classes() -> Vec<ClassDescriptor> {
        vec![
            ClassDescriptor::General,
            ClassDescriptor::Planar,
            ClassDescriptor::Tw(2),
            ClassDescriptor::SingleCrossingFree,
            ClassDescriptor::Apex,
            ClassDescriptor::ForbidsVortexButNotPlanar,
            ClassDescriptor::ForbidsAllVortex,
        ]
    }

    // Brute-force definitional checks on small tables with entries in {0,±1,±i,2}.

    pub(crate) fn affine_oracle(f: &Signature) -> bool {
        let k = f.arity();
        let support: Vec<usize> = f.support().collect();
        if support.is_empty() {
            return true;
        }
        // Affine subspace: closed under x ⊕ y ⊕ z.
        for &x in &support {
            for &y in &support {
                for &z in &support {
                    if f.get(x ^ y ^ z).is_zero() {
                        return false;
                    }
                }
            }
        }
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
        let x0 = support[0];
        let xb = bits_of(x0, k);
        for a in 0..4usize.pow(k as u32) {
            let av: Vec<usize> = (0..k).map(|i| a / 4usize.pow(i as u32) % 4).collect();
            for b in 0..1usize << pairs.len() {
                let q = |x: &[u8]| -> usize {
                    let mut e: usize = (0..k).map(|i| av[i] * x[i] as usize).sum();
                    for (t, &(i, j)) in pairs.iter().enumerate() {
                        e += 2 * (b >> t & 1) * (x[i] & x[j]) as usize;
                    }
                    e % 4
                };
                let lambda = f.get(x0) * &i_pow((4 - q(&xb)) as u8 % 4);
                if support.iter().all(|&s| *f.get(s) == &lambda * &i_pow(q(&bits_of(s, k)) as u8)) {
                    return true;
                }
            }
        }
        false
    }

    fn set_partitions(n: usize) -> Vec<Vec<usize>> {
        // Restricted growth strings.
        let mut out = Vec::new();
        let mut cur = vec![0usize; n];
        fn go(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if i == cur.len() {
                out.push(cur.clone());
                return;
            }
            for b in 0..=max + 1 {
                cur[i] = b;
                go(i + 1, max.max(b), cur, out);
            }
        }
        if n == 0 {
            return vec![vec![]];
        }
        go(1, 0, &mut cur, &mut out);
        out
    }

    pub(crate) fn product_oracle(f: &Signature) -> bool {
        let k = f.arity();
        let Some(p) = f.support().next() else { return true };
        if k == 0 {
            return true;
        }
        let fp = f.get(p);
        'part: for labels in set_partitions(k) {
            let nb = labels.iter().max().map_or(0, |m| m + 1);
            let masks: Vec<usize> = (0..nb)
                .map(|b| (0..k).filter(|&i| labels[i] == b).map(|i| 1 << (k - 1 - i)).sum())
                .collect();
            // f(x)·f(p)^{nb-1} = Π_B f(x_B, p_{-B})
            for x in 0..1usize << k {
                let mut rhs = Scalar::one();
                for &m in &masks {
                    rhs = rhs * f.get((x & m) | (p & !m));
                }
                if f.get(x) * &fp.pow(nb as u32 - 1) != rhs {
                    continue 'part;
                }
            }
            for &m in &masks {
                let pts: Vec<usize> = (0..1usize << k).filter(|&x| x & !m == p & !m && !f.get(x).is_zero()).collect();
                if pts.iter().any(|&x| x != p && (x ^ p) & m != m) {
                    continue 'part;
                }
            }
            return true;
        }
        false
    }

    fn value(code: u8) -> Scalar {
        match code {
            0 => Scalar::zero(),
            1 => Scalar::one(),
            2 => Scalar::from(-1),
            3 => Scalar::i(),
            4 => -Scalar::i(),
            _ => Scalar::from(2),
        }
    }

    #[test]
    fn recognizers_match_oracles_exhaustively_up_to_arity_two() {
        for k in 0..=2usize {
            let n = 1usize << k;
            for code in 0..6usize.pow(n as u32) {
                let f = Signature::from_fn(k, |j| value((code / 6usize.pow(j as u32) % 6) as u8));
                assert_eq!(is_affine(&f).is_some(), affine_oracle(&f), "{f}");
                assert_eq!(is_product(&f).unwrap().is_some(), product_oracle(&f), "{f}");
            }
        }
    }

    fn small_table(k: usize) -> impl Strategy<Value = Signature> {
        // Sparse tables hit the structured classes far more often.
        prop::collection::vec(prop_oneof![3 => Just(0u8), 2 => 1u8..=5], 1 << k)
            .prop_map(move |codes| Signature::from_fn(k, |j| value(codes[j])))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn recognizers_match_oracles(f in (3usize..=4).prop_flat_map(small_table)) {
            let a = is_affine(&f);
            prop_assert_eq!(a.is_some(), affine_oracle(&f));
            if let Some(c) = a { prop_assert_eq!(c.reconstruct(), f.clone()); }
            let p = is_product(&f).unwrap();
            prop_assert_eq!(p.is_some(), product_oracle(&f));
            if let Some(c) = p { prop_assert_eq!(c.reconstruct(), f.clone()); }
        }

        #[test]
        fn verdict_invariant_under_rescaling(
            f in (1usize..=3).prop_flat_map(small_table),
            c in (1i64..=3, -2i64..=2),
        ) {
            let scaled = f.scale(&Scalar::complex(c.0, c.1));
            for class in all_classes() {
                let a = verdict(&[f.clone()], class, Some(3)).unwrap().outcome;
                let b = verdict(&[scaled.clone()], class, Some(3)).unwrap().outcome;
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn hatted_non_affine_matchgates_are_not_product() {
        let rs = [Scalar::from(2), Scalar::from(3), Scalar::complex(0, 2)];
        let mut checked = 0;
        for k in 2..=6 {
            for form in 1..=6u8 {
                for r in &rs {
                    let g = SymmetricSignature::new(form_pattern(form, r, k).unwrap());
                    if m_minus_a_form(&g).is_none() {
                        continue;
                    }
                    checked += 1;
                    assert_eq!(is_product(&hat(&g.expand().unwrap())).unwrap(), None, "form {form} r {r} k {k}");
                }
            }
        }
        assert!(checked > 30);
    }

    #[test]
    fn hat_preserves_affine() {
        let corpus = [
            Signature::equality(3),
            Signature::from_ints(&[1, 1, 1, -1]),
            Signature::symmetric(vec![Scalar::one(), Scalar::zero(), Scalar::i()]),
            Signature::from_ints(&[0, 1, 1, 0, 1, 0, 0, 1]),
            Signature::sym(&[1, -1]),
        ];
        for f in corpus {
            assert!(is_affine(&f).is_some());
            assert!(is_affine(&hat(&f)).is_some(), "{f}");
        }
    }
}
