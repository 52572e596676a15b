//! Information bits, information signatures and path gadgets.
//!
//! A symmetric matchgate signature `f` of arity `k` is split along a
//! partition `(S₁, S₂)` of its variables into a path `u – x – w – y – v`:
//! `u` carries the `S₁` variables, `v` the `S₂` variables, and the single
//! bit on the path tells each side which form the other side's pinning left.
//! Forms 1, 2 and 5 pass that bit unchanged (`w = [1,0,1]`); forms 3, 4 and 6
//! flip it (`w = [0,1,0]`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{form_pattern, symmetric_matchgate_form, MatchgateForm};
use crate::instance::{Gadget, HolantInstance, InstanceError, PortRef};
use crate::scalar::{Scalar, ScalarError};
use crate::signature::{Signature, SignatureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathGadgetError {
    #[error("signature is not a symmetric matchgate form and no star decomposition was given")]
    NotMatchgateForm,
    #[error("split must be a nonempty proper subset of 0..{0}")]
    BadSplit(usize),
    #[error("q = {q} must satisfy 1 ≤ q < {k}")]
    QOutOfRange { q: usize, k: usize },
    #[error("star decomposition does not reproduce the signature")]
    StarMismatch,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

pub type Result<T> = std::result::Result<T, PathGadgetError>;

/// `Q_(f,q)(α)`: which of the two forms `f^α` takes, or `None` when `f^α ≡ 0`.
pub fn info_bit(form: &MatchgateForm, k: usize, alpha: &[u8]) -> Option<u8> {
    let q = alpha.len();
    if q == 0 || q >= k {
        return None;
    }
    let hw = alpha.iter().filter(|&&b| b == 1).count();
    match form.form {
        1 => (hw == 0).then_some(0),
        2 => (hw == q).then_some(1),
        3 => match hw {
            0 => Some(0),
            1 => Some(1),
            _ => None,
        },
        4 => {
            if hw == q {
                Some(1)
            } else if hw + 1 == q {
                Some(0)
            } else {
                None
            }
        }
        5 | 6 => Some((hw % 2) as u8),
        _ => None,
    }
}

/// `f_q` on `(x_b, x_{q+1}, …, x_k)` with the information variable first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoSignature {
    pub form: MatchgateForm,
    pub k: usize,
    pub q: usize,
    pub signature: Signature,
}

/// The `q`-information signature of the form's pattern (the scalar `c` is
/// not part of it).
pub fn info_signature(form: &MatchgateForm, k: usize, q: usize) -> Result<InfoSignature> {
    if q == 0 || q >= k {
        return Err(PathGadgetError::QOutOfRange { q, k });
    }
    let n = k - q + 1;
    let signature = match form.form {
        1..=4 => Signature::symmetric(form_pattern(form.form, &Scalar::one(), n)?),
        5 | 6 => {
            let s = form.r.sqrt()?;
            let odd_sum = form.form == 6;
            let mut table = Vec::with_capacity(1 << n);
            for idx in 0..1usize << n {
                let b = idx >> (n - 1) & 1;
                let hw = (idx & ((1 << (n - 1)) - 1)).count_ones() as usize;
                let parity_ok = ((b + hw) % 2 == 1) == odd_sum;
                table.push(if parity_ok { s.pow(hw as u32) } else { Scalar::zero() });
            }
            Signature::new(n, table)?
        }
        _ => return Err(PathGadgetError::NotMatchgateForm),
    };
    Ok(InfoSignature { form: form.clone(), k, q, signature })
}

/// `pattern(α) = f_q(Q(α_a), α_b) · f_{k−q}(Q(α_b), α_a)` for a support point
/// `α` of the form's pattern, split after the first `q` bits.
pub fn check_split_identity(form: &MatchgateForm, k: usize, q: usize, alpha: &[u8]) -> Result<bool> {
    if alpha.len() != k || q == 0 || q >= k {
        return Err(PathGadgetError::QOutOfRange { q, k });
    }
    let pattern = Signature::symmetric(form_pattern(form.form, &form.r, k)?);
    let value = pattern.value(alpha).clone();
    if value.is_zero() {
        return Err(PathGadgetError::BadSplit(k));
    }
    let (a, b) = alpha.split_at(q);
    let (Some(qa), Some(qb)) = (info_bit(form, k, a), info_bit(form, k, b)) else {
        return Ok(false);
    };
    let fq = info_signature(form, k, q)?.signature;
    let fkq = info_signature(form, k, k - q)?.signature;
    let first: Vec<u8> = std::iter::once(qa).chain(b.iter().copied()).collect();
    let second: Vec<u8> = std::iter::once(qb).chain(a.iter().copied()).collect();
    Ok(fq.value(&first) * fkq.value(&second) == value)
}

/// A symmetric central signature `h` with binary edge signatures: variable
/// `i` of the result is `Σ_y b_i(y, x_i)` attached to port `i` of `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarDecomposition {
    pub center: Signature,
    pub edges: Vec<Signature>,
}

impl StarDecomposition {
    /// The star for an odd binary `(0, a, b, 0)`: `[0,1,0]` with diagonal edges.
    pub fn for_binary(f: &Signature) -> Option<Self> {
        if f.arity() != 2 || !f.get(0).is_zero() || !f.get(3).is_zero() {
            return None;
        }
        let diag = |t: &Scalar| Signature::new(2, vec![Scalar::one(), Scalar::zero(), Scalar::zero(), t.clone()]).expect("arity 2");
        Some(StarDecomposition { center: Signature::sym(&[0, 1, 0]), edges: vec![diag(f.get(2)), diag(f.get(1))] })
    }

    pub fn gadget(&self) -> Result<Gadget> {
        if self.edges.len() != self.center.arity() || self.edges.iter().any(|b| b.arity() != 2) {
            return Err(PathGadgetError::StarMismatch);
        }
        let mut inst = HolantInstance::new();
        inst.add_vertex(self.center.clone());
        let mut dangling = Vec::new();
        for (i, b) in self.edges.iter().enumerate() {
            let v = inst.add_vertex(b.clone());
            inst.add_edge((0, i), (v, 0));
            dangling.push(PortRef::new(v, 1));
        }
        Ok(Gadget::new(inst, dangling)?)
    }

    pub fn signature(&self) -> Result<Signature> {
        let mut s = self.center.clone();
        for b in &self.edges {
            s = s.connect(b, &[(0, 0)])?;
        }
        Ok(s)
    }
}

/// `u – x – w – y – v` with the `S₁` variables at `u` and the rest at `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGadget {
    /// Vertices `u, x, w, y, v` are 0..5; port 0 of `u` and `v` faces the path.
    pub gadget: Gadget,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub head: Signature,
    pub x: Signature,
    pub w: Signature,
    pub y: Signature,
    pub tail: Signature,
}

impl PathGadget {
    /// `u, x, w, y` composed into one signature on `(S₁…, e)` where `e` is
    /// the edge `y – v`.
    pub fn head_side(&self) -> Result<Signature> {
        let q = self.s1.len();
        let s = self.head.connect(&self.x, &[(0, 0)])?;
        let s = s.connect(&self.w, &[(q, 0)])?;
        Ok(s.connect(&self.y, &[(q, 0)])?)
    }
}

fn fold_edges(sig: &Signature, edges: &[&Signature]) -> Result<Signature> {
    let mut s = sig.clone();
    for b in edges {
        s = s.connect(b, &[(1, 0)])?;
    }
    Ok(s)
}

/// The `(S₁, S₂)`-path gadget of `f`. Without a star decomposition `f` must be
/// a symmetric matchgate form; with one, the path is built for the center and
/// the edge signatures are folded into `u` and `v`.
pub fn build_path_gadget(f: &Signature, s1: &[usize], star: Option<&StarDecomposition>) -> Result<PathGadget> {
    let k = f.arity();
    let mut s1: Vec<usize> = s1.to_vec();
    s1.sort_unstable();
    s1.dedup();
    if s1.is_empty() || s1.len() >= k || s1.iter().any(|&i| i >= k) {
        return Err(PathGadgetError::BadSplit(k));
    }
    let s2: Vec<usize> = (0..k).filter(|i| !s1.contains(i)).collect();
    let center = match star {
        Some(st) => {
            if st.signature()? != *f {
                return Err(PathGadgetError::StarMismatch);
            }
            st.center.clone()
        }
        None => f.clone(),
    };
    let sym = center.as_symmetric().ok_or(PathGadgetError::NotMatchgateForm)?;
    let form = symmetric_matchgate_form(&sym).ok_or(PathGadgetError::NotMatchgateForm)?;
    let q = s1.len();
    let one = Scalar::one();
    let r = if form.form >= 5 { form.r.clone() } else { one.clone() };
    let mut head = Signature::symmetric(form_pattern(form.form, &r, q + 1)?).scale(&form.c);
    let mut tail = Signature::symmetric(form_pattern(form.form, &r, k - q + 1)?);
    let inv_root = r.sqrt()?.inv()?;
    let xy = Signature::symmetric(vec![one.clone(), Scalar::zero(), inv_root]);
    let w = if form.kind() == 1 { Signature::sym(&[1, 0, 1]) } else { Signature::sym(&[0, 1, 0]) };
    if let Some(st) = star {
        let e1: Vec<&Signature> = s1.iter().map(|&i| &st.edges[i]).collect();
        let e2: Vec<&Signature> = s2.iter().map(|&i| &st.edges[i]).collect();
        head = fold_edges(&head, &e1)?;
        tail = fold_edges(&tail, &e2)?;
    }
    let mut inst = HolantInstance::new();
    let u = inst.add_vertex(head.clone());
    let x = inst.add_vertex(xy.clone());
    let wv = inst.add_vertex(w.clone());
    let y = inst.add_vertex(xy.clone());
    let v = inst.add_vertex(tail.clone());
    inst.add_edge((u, 0), (x, 0));
    inst.add_edge((x, 1), (wv, 0));
    inst.add_edge((wv, 1), (y, 0));
    inst.add_edge((y, 1), (v, 0));
    let dangling = (0..k)
        .map(|i| match s1.iter().position(|&j| j == i) {
            Some(p) => PortRef::new(u, p + 1),
            None => PortRef::new(v, s2.iter().position(|&j| j == i).expect("partition") + 1),
        })
        .collect();
    let gadget = Gadget::new(inst, dangling)?;
    Ok(PathGadget { gadget, s1, s2, head, x: xy.clone(), w, y: xy, tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{is_matchgate, Membership};
    use crate::signature::bits_of;

    fn form(f: &Signature) -> MatchgateForm {
        symmetric_matchgate_form(&f.as_symmetric().unwrap()).unwrap()
    }

    #[test]
    fn info_bits() {
        let f5 = form(&Signature::sym(&[1, 0, 2, 0, 4]));
        assert_eq!(info_bit(&f5, 4, &[0, 1]), Some(1));
        let f1 = form(&Signature::sym(&[1, 0, 0, 0]));
        assert_eq!(info_bit(&f1, 3, &[0, 0]), Some(0));
        assert_eq!(info_bit(&f1, 3, &[0, 1]), None);
        let f3 = form(&Signature::sym(&[0, 1, 0, 0]));
        assert_eq!(info_bit(&f3, 3, &[1, 0]), Some(1));
        assert_eq!(info_bit(&f3, 3, &[1, 1]), None);
        let f4 = form(&Signature::sym(&[0, 0, 1, 0]));
        assert_eq!(info_bit(&f4, 3, &[1, 1]), Some(1));
        assert_eq!(info_bit(&f4, 3, &[0, 1]), Some(0));
        assert_eq!(info_bit(&f4, 3, &[0, 0]), None);
        assert_eq!(info_bit(&f5, 4, &[0, 1, 1, 0]), None);
    }

    #[test]
    fn info_signature_examples() {
        let f = form(&Signature::sym(&[1, 0, 2]));
        let s = info_signature(&f, 2, 1).unwrap().signature;
        let r2 = Scalar::from(2).sqrt().unwrap();
        let expect = Signature::new(2, vec![Scalar::one(), Scalar::zero(), Scalar::zero(), r2]).unwrap();
        assert_eq!(s, expect);
        let f = form(&Signature::sym(&[0, 1, 0, 0]));
        assert_eq!(info_signature(&f, 3, 1).unwrap().signature, Signature::sym(&[0, 1, 0, 0]));
        assert_eq!(info_signature(&f, 3, 2).unwrap().signature, Signature::sym(&[0, 1, 0]));
        let f = form(&Signature::sym(&[0, 0, 1, 0]));
        assert_eq!(info_signature(&f, 3, 1).unwrap().signature, Signature::sym(&[0, 0, 1, 0]));
        assert_eq!(info_signature(&f, 3, 2).unwrap().signature, Signature::sym(&[0, 1, 0]));
        assert!(info_signature(&f, 3, 3).is_err());
    }

    #[test]
    fn split_identity_examples() {
        let f = form(&Signature::sym(&[1, 0, 2]));
        assert!(check_split_identity(&f, 2, 1, &[1, 1]).unwrap());
        let f = form(&Signature::sym(&[0, 1, 0, 0]));
        assert!(check_split_identity(&f, 3, 1, &[1, 0, 0]).unwrap());
        let f = form(&Signature::sym(&[1, 0, 2, 0]));
        assert!(check_split_identity(&f, 3, 2, &[1, 1, 0]).unwrap());
    }

    fn forms_under_test(k: usize) -> Vec<Signature> {
        let mut out = Vec::new();
        for f in 1..=4u8 {
            out.push(Signature::symmetric(form_pattern(f, &Scalar::one(), k).unwrap()));
        }
        for r in [Scalar::one(), Scalar::from(2), Scalar::from(-2), Scalar::i()] {
            for f in 5..=6u8 {
                out.push(Signature::symmetric(form_pattern(f, &r, k).unwrap()).scale(&Scalar::from(3)));
            }
        }
        out
    }

    #[test]
    fn split_identity_on_all_support_points() {
        for k in 2..=6 {
            for f in forms_under_test(k) {
                let fm = form(&f);
                let pattern = Signature::symmetric(form_pattern(fm.form, &fm.r, k).unwrap());
                for q in 1..k {
                    for idx in pattern.support() {
                        assert!(check_split_identity(&fm, k, q, &bits_of(idx, k)).unwrap(), "{f} q={q}");
                    }
                }
            }
        }
    }

    #[test]
    fn path_gadgets_realize_their_signature() {
        for k in 3..=6 {
            for f in forms_under_test(k) {
                // Every split for small arities, the contiguous ones at k = 6.
                let masks: Vec<usize> = if k < 6 { (1..(1usize << k) - 1).collect() } else { (1..k).map(|q| (1 << q) - 1).collect() };
                for mask in masks {
                    let s1: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
                    let pg = build_path_gadget(&f, &s1, None).unwrap();
                    assert_eq!(pg.gadget.signature().unwrap(), f, "{f} split {s1:?}");
                }
                let pg = build_path_gadget(&f, &[0], None).unwrap();
                assert_eq!(is_matchgate(&pg.head), Membership::Yes);
                assert_eq!(is_matchgate(&pg.tail), Membership::Yes);
            }
        }
    }

    #[test]
    fn path_gadget_examples() {
        for (f, s1) in [(Signature::sym(&[1, 0, 2, 0]), vec![1]), (Signature::sym(&[0, 0, 1, 0]), vec![0, 2]), (Signature::sym(&[0, 1, 0, 0, 0]), vec![1, 2])] {
            let pg = build_path_gadget(&f, &s1, None).unwrap();
            assert_eq!(pg.gadget.signature().unwrap(), f);
            let side = pg.head_side().unwrap();
            let composed = side.connect(&pg.tail, &[(pg.s1.len(), 0)]).unwrap();
            let order: Vec<usize> = pg.s1.iter().chain(pg.s2.iter()).copied().collect();
            let mut inverse = vec![0; order.len()];
            for (j, &i) in order.iter().enumerate() {
                inverse[i] = j;
            }
            assert_eq!(composed.permute(&inverse).unwrap(), f);
        }
        assert!(build_path_gadget(&Signature::sym(&[1, 1, 1]), &[0], None).is_err());
        assert!(build_path_gadget(&Signature::sym(&[1, 0, 1]), &[], None).is_err());
    }

    #[test]
    fn star_decomposed_path_gadget() {
        let f = Signature::from_ints(&[0, 3, 5, 0]);
        let star = StarDecomposition::for_binary(&f).unwrap();
        assert_eq!(star.signature().unwrap(), f);
        assert_eq!(star.gadget().unwrap().signature().unwrap(), f);
        let pg = build_path_gadget(&f, &[0], Some(&star)).unwrap();
        assert_eq!(pg.gadget.signature().unwrap(), f);
        // A four-ary star: [1,0,2,0,4] with distinct diagonal edges.
        let diag = |t: i64| Signature::from_ints(&[1, 0, 0, t]);
        let star = StarDecomposition { center: Signature::sym(&[1, 0, 2, 0, 4]), edges: vec![diag(1), diag(2), diag(3), diag(-1)] };
        let f = star.signature().unwrap();
        assert!(f.as_symmetric().is_none());
        assert!(build_path_gadget(&f, &[0, 2], None).is_err());
        let pg = build_path_gadget(&f, &[0, 2], Some(&star)).unwrap();
        assert_eq!(pg.gadget.signature().unwrap(), f);
        let wrong = StarDecomposition { center: Signature::sym(&[1, 0, 1, 0, 1]), edges: star.edges.clone() };
        assert!(matches!(build_path_gadget(&f, &[0], Some(&wrong)), Err(PathGadgetError::StarMismatch)));
    }
}
