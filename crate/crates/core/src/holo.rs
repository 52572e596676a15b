//! Binary transformations and the Hadamard holographic transformation.
//!
//! `hat(f) = H₂^{⊗k} f` with `H₂ = ((1,1),(1,−1))`, applied exactly. Since
//! `H₂² = 2·I`, `hat(hat(f)) = 2^k·f`. Constant factors that are usually
//! dropped are reported explicitly by [`hatted_equality_family`].

use serde::{Deserialize, Serialize};

use crate::scalar::{Scalar, ScalarError};
use crate::signature::{Signature, SignatureError};

/// A 2×2 matrix `((t00, t01), (t10, t11))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryTransform {
    pub t: [[Scalar; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `T^{⊗k} f`, with `f` as a column vector.
    Left,
    /// `f T^{⊗k}`, with `f` as a row vector.
    Right,
}

impl BinaryTransform {
    pub fn new(t00: Scalar, t01: Scalar, t10: Scalar, t11: Scalar) -> Self {
        BinaryTransform { t: [[t00, t01], [t10, t11]] }
    }

    pub fn identity() -> Self {
        BinaryTransform::new(Scalar::one(), Scalar::zero(), Scalar::zero(), Scalar::one())
    }

    pub fn hadamard() -> Self {
        BinaryTransform::new(Scalar::one(), Scalar::one(), Scalar::one(), Scalar::from(-1))
    }

    pub fn det(&self) -> Scalar {
        &self.t[0][0] * &self.t[1][1] - &self.t[0][1] * &self.t[1][0]
    }

    pub fn is_invertible(&self) -> bool {
        !self.det().is_zero()
    }

    pub fn inverse(&self) -> Result<BinaryTransform, ScalarError> {
        let d = self.det().inv()?;
        let [[a, b], [c, e]] = &self.t;
        Ok(BinaryTransform::new(e * &d, -b * &d, -c * &d, a * &d))
    }

    pub fn transpose(&self) -> BinaryTransform {
        let [[a, b], [c, e]] = &self.t;
        BinaryTransform::new(a.clone(), c.clone(), b.clone(), e.clone())
    }
}

fn mul_add(p: &Scalar, x: &Scalar, q: &Scalar, y: &Scalar) -> Scalar {
    let left = if p.is_zero() || x.is_zero() { None } else { Some(p * x) };
    let right = if q.is_zero() || y.is_zero() { None } else { Some(q * y) };
    match (left, right) {
        (Some(l), Some(r)) => l + r,
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => Scalar::zero(),
    }
}

/// `Tf` (left) or `fT` (right), one variable at a time.
pub fn transform(t: &BinaryTransform, f: &Signature, side: Side) -> Signature {
    let m = match side {
        Side::Left => t.clone(),
        Side::Right => t.transpose(),
    };
    let [[a, b], [c, d]] = &m.t;
    let k = f.arity();
    let mut table = f.table().to_vec();
    for i in 0..k {
        let stride = 1usize << (k - 1 - i);
        for j in 0..table.len() {
            if j & stride != 0 {
                continue;
            }
            let (x, y) = (table[j].clone(), table[j | stride].clone());
            table[j] = mul_add(a, &x, b, &y);
            table[j | stride] = mul_add(c, &x, d, &y);
        }
    }
    Signature::new(k, table).expect("arity preserved")
}

/// `H₂^{⊗k} f`, unnormalized.
pub fn hat(f: &Signature) -> Signature {
    transform(&BinaryTransform::hadamard(), f, Side::Left)
}

/// `H₂^{-⊗k} f = hat(f) / 2^k`.
pub fn hat_inverse(f: &Signature) -> Signature {
    let s = Scalar::from(2).powi(-(f.arity() as i64)).expect("nonzero");
    hat(f).scale(&s)
}

/// A signature together with the factor removed to normalize it:
/// the unnormalized value is `dropped · signature`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub signature: Signature,
    pub dropped: Scalar,
}

/// `=_k = [1,0,…,0,1]_k`.
pub fn equality_family(k: usize) -> Result<Signature, SignatureError> {
    if k == 0 {
        return Err(SignatureError::ZeroArity);
    }
    if k > crate::signature::MAX_ARITY {
        return Err(SignatureError::ArityCap(k));
    }
    Ok(Signature::equality(k))
}

/// `hat(=_k) = 2·[1,0,1,0,…]_k`; returns `[1,0,1,0,…]_k` with `dropped = 2`.
pub fn hatted_equality_family(k: usize) -> Result<Normalized, SignatureError> {
    let eq = equality_family(k)?;
    let pattern = Signature::from_fn(k, |idx| {
        if idx.count_ones() % 2 == 0 { Scalar::one() } else { Scalar::zero() }
    });
    let dropped = pattern.equal_up_to_scalar(&hat(&eq)).expect("hat of equality is a multiple of the even pattern");
    Ok(Normalized { signature: pattern, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::bits_of;
    use proptest::prelude::*;

    /// `(Tf)(y) = Σ_x Π_i T[y_i][x_i] f(x)` by direct summation.
    fn transform_oracle(t: &BinaryTransform, f: &Signature) -> Signature {
        let k = f.arity();
        Signature::from_fn(k, |y| {
            let yb = bits_of(y, k);
            (0..1usize << k)
                .map(|x| {
                    let xb = bits_of(x, k);
                    let w: Scalar = (0..k).map(|i| t.t[yb[i] as usize][xb[i] as usize].clone()).product();
                    w * f.get(x)
                })
                .sum()
        })
    }

    #[test]
    fn hadamard_on_equalities() {
        let two = Scalar::from(2);
        assert_eq!(hat(&Signature::equality(2)), Signature::sym(&[1, 0, 1]).scale(&two));
        assert_eq!(hat(&Signature::equality(3)), Signature::sym(&[1, 0, 1, 0]).scale(&two));
        assert_eq!(hat(&Signature::sym(&[1, 1])), Signature::sym(&[2, 0]));
    }

    #[test]
    fn identity_is_trivial() {
        let f = Signature::from_ints(&[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(transform(&BinaryTransform::identity(), &f, Side::Left), f);
        assert_eq!(transform(&BinaryTransform::identity(), &f, Side::Right), f);
    }

    #[test]
    fn hat_weight_three_example() {
        let f = Signature::sym(&[1, 0, 2, 0]);
        let oracle = transform_oracle(&BinaryTransform::hadamard(), &f);
        assert_eq!(oracle, Signature::sym(&[7, -1, -1, 7]));
        assert_eq!(hat(&f), oracle);
    }

    #[test]
    fn hat_twice_scales() {
        let f = Signature::from_ints(&[3, -1, 0, 2, 5, 0, 0, 1]);
        assert_eq!(hat(&hat(&f)), f.scale(&Scalar::from(8)));
        assert_eq!(hat_inverse(&hat(&f)), f);
    }

    #[test]
    fn equality_families() {
        for (k, pattern) in [(1, vec![1, 0]), (2, vec![1, 0, 1]), (3, vec![1, 0, 1, 0])] {
            let n = hatted_equality_family(k).unwrap();
            assert_eq!(n.signature, Signature::sym(&pattern));
            assert_eq!(n.dropped, Scalar::from(2));
            assert_eq!(equality_family(k).unwrap(), Signature::equality(k));
        }
        assert!(equality_family(0).is_err());
        assert!(hatted_equality_family(0).is_err());
    }

    #[test]
    fn hatted_equalities_up_to_eight() {
        for k in 1..=8 {
            let expect: Vec<i64> = (0..=k).map(|w| if w % 2 == 0 { 2 } else { 0 }).collect();
            assert_eq!(hat(&Signature::equality(k)), Signature::sym(&expect));
        }
    }

    #[test]
    fn inverse_transform() {
        let t = BinaryTransform::new(Scalar::from(2), Scalar::from(1), Scalar::i(), Scalar::from(3));
        let ti = t.inverse().unwrap();
        let f = Signature::from_ints(&[1, -2, 0, 5]);
        let back = transform(&ti, &transform(&t, &f, Side::Left), Side::Left);
        assert_eq!(back, f);
        let singular = BinaryTransform::new(Scalar::one(), Scalar::one(), Scalar::one(), Scalar::one());
        assert!(!singular.is_invertible());
        assert!(singular.inverse().is_err());
    }

    fn small() -> impl Strategy<Value = Scalar> {
        (-2i64..=2, -2i64..=2).prop_map(|(a, b)| Scalar::complex(a, b))
    }

    proptest! {
        #[test]
        fn transform_matches_summation(
            t in prop::array::uniform4(small()),
            v in prop::collection::vec(-3i64..=3, 8),
        ) {
            let [a, b, c, d] = t;
            let t = BinaryTransform::new(a, b, c, d);
            let f = Signature::from_ints(&v);
            prop_assert_eq!(transform(&t, &f, Side::Left), transform_oracle(&t, &f));
            prop_assert_eq!(transform(&t, &f, Side::Right), transform_oracle(&t.transpose(), &f));
        }
    }
}
