//! Exact arithmetic in `Q(i, √z)` with an opt-in floating mode.
//!
//! An exact value is `a + c·√z` with `a`, `c` Gaussian rationals and `z` a
//! normalized Gaussian-integer radicand that is not a perfect square in `Q(i)`.
//! `√z` always denotes the principal square root. Two exact values with
//! different radicands combine only when the radicands differ by a square
//! factor (for example `√-2 = i·√2`); otherwise the operation reports a
//! radicand mismatch.
//!
//! Float values are `Complex64` compared with tolerance [`EPS`]. Mixing an
//! exact and a float operand yields a float.

use std::cmp::Ordering;
use std::fmt;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Tolerance for float-mode comparisons.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("radicand mismatch: sqrt({0}) and sqrt({1})")]
    RadicandMismatch(String, String),
    #[error("zero radicand with nonzero root coefficient")]
    ZeroRadicand,
    #[error("complex conjugate of sqrt({0}) is outside the field")]
    ConjugateOutsideField(String),
    #[error("square root of {0} needs a second radicand")]
    NestedRoot(String),
    #[error("cannot parse scalar {0:?}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ScalarError>;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rat_f64(q: &BigRational) -> f64 {
    match q.to_f64() {
        Some(v) => v,
        None => q.numer().to_f64().unwrap_or(f64::NAN) / q.denom().to_f64().unwrap_or(f64::NAN),
    }
}

fn fmt_rat(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

// ===========================================================================
// Gaussian rationals
// ===========================================================================

/// An element `re + im·i` of `Q(i)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gauss {
    pub re: BigRational,
    pub im: BigRational,
}

impl Gauss {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Gauss { re, im }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        Gauss::new(rat(re), rat(im))
    }

    pub fn real(re: BigRational) -> Self {
        Gauss::new(re, BigRational::zero())
    }

    pub fn zero() -> Self {
        Gauss::from_ints(0, 0)
    }

    pub fn one() -> Self {
        Gauss::from_ints(1, 0)
    }

    pub fn i() -> Self {
        Gauss::from_ints(0, 1)
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Gauss::new(self.re.clone(), -self.im.clone())
    }

    /// `re² + im²`.
    pub fn norm(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let n = self.norm();
        Some(Gauss::new(&self.re / &n, -&self.im / &n))
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        Gauss::new(&self.re * q, &self.im * q)
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(rat_f64(&self.re), rat_f64(&self.im))
    }

    /// Principal square root when it lies in `Q(i)`.
    pub fn sqrt_exact(&self) -> Option<Gauss> {
        let (m, z) = split_root(self);
        if z.is_none() {
            Some(m)
        } else {
            None
        }
    }
}

impl fmt::Display for Gauss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn imag(v: &BigRational) -> String {
            if v.is_one() {
                "i".to_string()
            } else if (-v).is_one() {
                "-i".to_string()
            } else {
                format!("{}*i", fmt_rat(v))
            }
        }
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", fmt_rat(&self.re)),
            (true, false) => write!(f, "{}", imag(&self.im)),
            (false, false) => {
                if self.im.is_negative() {
                    write!(f, "{}-{}", fmt_rat(&self.re), imag(&-self.im.clone()))
                } else {
                    write!(f, "{}+{}", fmt_rat(&self.re), imag(&self.im))
                }
            }
        }
    }
}

impl<'a> Add<&'a Gauss> for &'a Gauss {
    type Output = Gauss;
    fn add(self, o: &Gauss) -> Gauss {
        Gauss::new(&self.re + &o.re, &self.im + &o.im)
    }
}

impl<'a> Sub<&'a Gauss> for &'a Gauss {
    type Output = Gauss;
    fn sub(self, o: &Gauss) -> Gauss {
        Gauss::new(&self.re - &o.re, &self.im - &o.im)
    }
}

impl<'a> Mul<&'a Gauss> for &'a Gauss {
    type Output = Gauss;
    fn mul(self, o: &Gauss) -> Gauss {
        Gauss::new(
            &self.re * &o.re - &self.im * &o.im,
            &self.re * &o.im + &self.im * &o.re,
        )
    }
}

impl Neg for &Gauss {
    type Output = Gauss;
    fn neg(self) -> Gauss {
        Gauss::new(-self.re.clone(), -self.im.clone())
    }
}

// ===========================================================================
// Radicands
// ===========================================================================

/// A Gaussian integer `re + im·i` that is not a square in `Q(i)` and whose
/// rational-integer content has no square factor found by trial division.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Radicand {
    re: BigInt,
    im: BigInt,
}

impl Radicand {
    pub fn as_gauss(&self) -> Gauss {
        Gauss::new(
            BigRational::from_integer(self.re.clone()),
            BigRational::from_integer(self.im.clone()),
        )
    }

    /// Principal square root as a float.
    pub fn sqrt_f64(&self) -> Complex64 {
        let z = Complex64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN) + 0.0,
        );
        principal_sqrt(z)
    }
}

impl fmt::Display for Radicand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.as_gauss().fmt(f)
    }
}

fn principal_sqrt(z: Complex64) -> Complex64 {
    // Keep the negative real axis on the +i side.
    let z = if z.im == 0.0 { Complex64::new(z.re, 0.0) } else { z };
    z.sqrt()
}

fn isqrt_exact(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let s = n.sqrt();
    if &s * &s == *n {
        Some(s)
    } else {
        None
    }
}

/// Principal square root of the Gaussian integer `x + y·i` if it is a square.
fn gauss_int_sqrt(x: &BigInt, y: &BigInt) -> Option<(BigInt, BigInt)> {
    let n = isqrt_exact(&(x * x + y * y))?;
    let two = BigInt::from(2);
    let (p, r1) = (&n + x).div_rem(&two);
    let (q, r2) = (&n - x).div_rem(&two);
    if !r1.is_zero() || !r2.is_zero() {
        return None;
    }
    let a = isqrt_exact(&p)?;
    let mut b = isqrt_exact(&q)?;
    if y.is_negative() {
        b = -b;
    }
    // a² − b² = x holds by construction; 2ab = y must be checked.
    if &a * &b * &two != *y {
        return None;
    }
    Some((a, b))
}

const TRIAL_LIMIT: u64 = 100_000;

/// Writes `√r = m·√z` with `z` normalized, or `z = None` when `√r ∈ Q(i)`.
fn split_root(r: &Gauss) -> (Gauss, Option<Radicand>) {
    if r.is_zero() {
        return (Gauss::zero(), None);
    }
    let d = r.re.denom().lcm(r.im.denom());
    let dd = BigRational::from_integer(&d * &d);
    let mut x = (&r.re * &dd).to_integer();
    let mut y = (&r.im * &dd).to_integer();
    // √r = √(x + y·i) / d
    let g = x.gcd(&y);
    let mut m = BigInt::one();
    let mut rest = g;
    let mut p = 2u64;
    while p <= TRIAL_LIMIT {
        let pb = BigInt::from(p);
        let pp = &pb * &pb;
        if pp > rest {
            break;
        }
        while (&rest % &pp).is_zero() {
            rest /= &pp;
            m *= &pb;
            x /= &pp;
            y /= &pp;
        }
        p += 1;
    }
    let scale = BigRational::new(m, d);
    match gauss_int_sqrt(&x, &y) {
        Some((a, b)) => (
            Gauss::new(
                BigRational::from_integer(a) * &scale,
                BigRational::from_integer(b) * &scale,
            ),
            None,
        ),
        None => (Gauss::real(scale), Some(Radicand { re: x, im: y })),
    }
}

// ===========================================================================
// Exact field elements
// ===========================================================================

/// `a + c·√z`, canonical: `root` is `None` exactly when the root part is zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Exact {
    a: Gauss,
    root: Option<Box<(Gauss, Radicand)>>,
}

impl Exact {
    fn gauss(a: Gauss) -> Self {
        Exact { a, root: None }
    }

    fn with_root(a: Gauss, c: Gauss, z: Option<Radicand>) -> Self {
        match z {
            Some(z) if !c.is_zero() => Exact { a, root: Some(Box::new((c, z))) },
            _ => Exact { a, root: None },
        }
    }

    pub fn rational_part(&self) -> &Gauss {
        &self.a
    }

    pub fn root_part(&self) -> Option<(&Gauss, &Radicand)> {
        self.root.as_ref().map(|b| (&b.0, &b.1))
    }

    fn is_zero(&self) -> bool {
        self.root.is_none() && self.a.is_zero()
    }

    fn to_complex(&self) -> Complex64 {
        let mut v = self.a.to_complex();
        if let Some(b) = &self.root {
            v += b.0.to_complex() * b.1.sqrt_f64();
        }
        v
    }

    fn coeffs(&self) -> (Gauss, Option<&Radicand>) {
        match &self.root {
            Some(b) => (b.0.clone(), Some(&b.1)),
            None => (Gauss::zero(), None),
        }
    }

    /// Expresses both operands over one radicand.
    fn align(x: &Exact, y: &Exact) -> Result<(Gauss, Gauss, Option<Radicand>)> {
        let (cx, zx) = x.coeffs();
        let (cy, zy) = y.coeffs();
        match (zx, zy) {
            (None, None) => Ok((cx, cy, None)),
            (Some(z), None) => Ok((cx, cy, Some(z.clone()))),
            (None, Some(z)) => Ok((cx, cy, Some(z.clone()))),
            (Some(z1), Some(z2)) if z1 == z2 => Ok((cx, cy, Some(z1.clone()))),
            (Some(z1), Some(z2)) => {
                // √z2 = ±w·√z1 when z2/z1 is a square in Q(i).
                let q = &z2.as_gauss() * &z1.as_gauss().inv().expect("nonzero radicand");
                let (w, rest) = split_root(&q);
                if rest.is_some() {
                    return Err(ScalarError::RadicandMismatch(z1.to_string(), z2.to_string()));
                }
                let lhs = w.to_complex() * z1.sqrt_f64();
                let rhs = z2.sqrt_f64();
                let w = if (lhs - rhs).norm() <= (lhs + rhs).norm() { w } else { -&w };
                Ok((cx, &cy * &w, Some(z1.clone())))
            }
        }
    }

    fn add(&self, o: &Exact) -> Result<Exact> {
        let (c1, c2, z) = Exact::align(self, o)?;
        Ok(Exact::with_root(&self.a + &o.a, &c1 + &c2, z))
    }

    fn neg(&self) -> Exact {
        Exact {
            a: -&self.a,
            root: self.root.as_ref().map(|b| Box::new((-&b.0, b.1.clone()))),
        }
    }

    fn mul(&self, o: &Exact) -> Result<Exact> {
        let (c1, c2, z) = Exact::align(self, o)?;
        let mut a = &self.a * &o.a;
        if let Some(z) = &z {
            a = &a + &(&(&c1 * &c2) * &z.as_gauss());
        }
        let c = &(&self.a * &c2) + &(&o.a * &c1);
        Ok(Exact::with_root(a, c, z))
    }

    fn inv(&self) -> Result<Exact> {
        match &self.root {
            None => self.a.inv().map(Exact::gauss).ok_or(ScalarError::DivisionByZero),
            Some(b) => {
                let (c, z) = (&b.0, &b.1);
                // (a + c s)(a − c s) = a² − c² z
                let n = &(&self.a * &self.a) - &(&(c * c) * &z.as_gauss());
                let ni = n.inv().ok_or(ScalarError::DivisionByZero)?;
                Ok(Exact::with_root(&self.a * &ni, &(-c) * &ni, Some(z.clone())))
            }
        }
    }

    fn conj(&self) -> Result<Exact> {
        match &self.root {
            None => Ok(Exact::gauss(self.a.conj())),
            Some(b) => {
                let (c, z) = (&b.0, &b.1);
                // conj(√z) = |z|·√z / z
                let n = isqrt_exact(&(&z.re * &z.re + &z.im * &z.im))
                    .ok_or_else(|| ScalarError::ConjugateOutsideField(z.to_string()))?;
                let f = Gauss::real(BigRational::from_integer(n));
                let f = &f * &z.as_gauss().inv().expect("nonzero radicand");
                Ok(Exact::with_root(self.a.conj(), &c.conj() * &f, Some(z.clone())))
            }
        }
    }

    fn conj_root(&self) -> Exact {
        Exact {
            a: self.a.clone(),
            root: self.root.as_ref().map(|b| Box::new((-&b.0, b.1.clone()))),
        }
    }
}

// ===========================================================================
// Scalar
// ===========================================================================

/// A field element in exact or float mode.
#[derive(Clone, Debug)]
pub enum Scalar {
    Exact(Exact),
    Float(Complex64),
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::zero()
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_gauss(Gauss::from_ints(n, 0))
    }
}

impl From<Gauss> for Scalar {
    fn from(g: Gauss) -> Self {
        Scalar::from_gauss(g)
    }
}

impl From<BigRational> for Scalar {
    fn from(q: BigRational) -> Self {
        Scalar::from_gauss(Gauss::real(q))
    }
}

impl From<Complex64> for Scalar {
    fn from(z: Complex64) -> Self {
        Scalar::Float(z)
    }
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::from(0)
    }

    pub fn one() -> Self {
        Scalar::from(1)
    }

    pub fn i() -> Self {
        Scalar::from_gauss(Gauss::i())
    }

    pub fn from_gauss(g: Gauss) -> Self {
        Scalar::Exact(Exact::gauss(g))
    }

    pub fn from_ratio(n: i64, d: i64) -> Self {
        Scalar::from(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn complex(re: i64, im: i64) -> Self {
        Scalar::from_gauss(Gauss::from_ints(re, im))
    }

    pub fn float(re: f64, im: f64) -> Self {
        Scalar::Float(Complex64::new(re, im))
    }

    /// `(re + im·i) + (root_re + root_im·i)·√radicand`.
    pub fn make(
        re: BigRational,
        im: BigRational,
        root_re: BigRational,
        root_im: BigRational,
        radicand: Option<&Gauss>,
    ) -> Result<Self> {
        let a = Scalar::from_gauss(Gauss::new(re, im));
        let c = Gauss::new(root_re, root_im);
        if c.is_zero() {
            return Ok(a);
        }
        match radicand {
            Some(r) if !r.is_zero() => {
                let s = Scalar::from_gauss(c).try_mul(&Scalar::sqrt_gauss(r))?;
                a.try_add(&s)
            }
            _ => Err(ScalarError::ZeroRadicand),
        }
    }

    /// Principal `√r`.
    pub fn sqrt_gauss(r: &Gauss) -> Self {
        match split_root(r) {
            (m, None) => Scalar::from_gauss(m),
            (m, z) => Scalar::Exact(Exact::with_root(Gauss::zero(), m, z)),
        }
    }

    /// Principal square root; exact values must lie in `Q(i)`.
    pub fn sqrt(&self) -> Result<Self> {
        match self {
            Scalar::Float(z) => Ok(Scalar::Float(principal_sqrt(*z))),
            Scalar::Exact(e) => match &e.root {
                None => Ok(Scalar::sqrt_gauss(&e.a)),
                Some(_) => Err(ScalarError::NestedRoot(self.to_string())),
            },
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(e) => e.is_zero(),
            Scalar::Float(z) => z.norm() <= EPS,
        }
    }

    pub fn is_one(&self) -> bool {
        *self == Scalar::one()
    }

    pub fn to_complex(&self) -> Complex64 {
        match self {
            Scalar::Exact(e) => e.to_complex(),
            Scalar::Float(z) => *z,
        }
    }

    /// The same value in float mode.
    pub fn to_float(&self) -> Self {
        Scalar::Float(self.to_complex())
    }

    /// The value as a Gaussian rational, if exact with no root part.
    pub fn as_gauss(&self) -> Option<&Gauss> {
        match self {
            Scalar::Exact(Exact { a, root: None }) => Some(a),
            _ => None,
        }
    }

    /// The radicand in use, if any.
    pub fn radicand(&self) -> Option<&Radicand> {
        match self {
            Scalar::Exact(e) => e.root.as_ref().map(|b| &b.1),
            Scalar::Float(_) => None,
        }
    }

    pub fn try_add(&self, o: &Scalar) -> Result<Scalar> {
        match (self, o) {
            (Scalar::Exact(x), Scalar::Exact(y)) => x.add(y).map(Scalar::Exact),
            _ => Ok(Scalar::Float(self.to_complex() + o.to_complex())),
        }
    }

    pub fn try_sub(&self, o: &Scalar) -> Result<Scalar> {
        self.try_add(&-o)
    }

    pub fn try_mul(&self, o: &Scalar) -> Result<Scalar> {
        match (self, o) {
            (Scalar::Exact(x), Scalar::Exact(y)) => x.mul(y).map(Scalar::Exact),
            _ => Ok(Scalar::Float(self.to_complex() * o.to_complex())),
        }
    }

    pub fn inv(&self) -> Result<Scalar> {
        match self {
            Scalar::Exact(x) => x.inv().map(Scalar::Exact),
            Scalar::Float(z) => {
                if z.norm() <= EPS {
                    Err(ScalarError::DivisionByZero)
                } else {
                    Ok(Scalar::Float(z.inv()))
                }
            }
        }
    }

    pub fn try_div(&self, o: &Scalar) -> Result<Scalar> {
        self.try_mul(&o.inv()?)
    }

    /// Complex conjugate.
    pub fn conj(&self) -> Result<Scalar> {
        match self {
            Scalar::Exact(x) => x.conj().map(Scalar::Exact),
            Scalar::Float(z) => Ok(Scalar::Float(z.conj())),
        }
    }

    /// Field conjugate over `Q(i)`: `√z ↦ −√z`.
    pub fn conj_root(&self) -> Scalar {
        match self {
            Scalar::Exact(x) => Scalar::Exact(x.conj_root()),
            Scalar::Float(z) => Scalar::Float(*z),
        }
    }

    pub fn pow(&self, n: u32) -> Scalar {
        let mut acc = Scalar::one();
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &base;
            }
            n >>= 1;
            if n > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn powi(&self, n: i64) -> Result<Scalar> {
        let p = self.pow(n.unsigned_abs() as u32);
        if n < 0 {
            p.inv()
        } else {
            Ok(p)
        }
    }

    /// Equality within `eps`, relative to the larger magnitude once above 1.
    pub fn approx_eq(&self, o: &Scalar, eps: f64) -> bool {
        let (x, y) = (self.to_complex(), o.to_complex());
        (x - y).norm() <= eps * 1f64.max(x.norm()).max(y.norm())
    }
}

impl PartialEq for Scalar {
    fn eq(&self, o: &Scalar) -> bool {
        match (self, o) {
            (Scalar::Exact(x), Scalar::Exact(y)) => {
                if x.root.is_none() || y.root.is_none() || x.root.as_ref().map(|b| &b.1) == y.root.as_ref().map(|b| &b.1) {
                    return x == y;
                }
                match x.add(&y.neg()) {
                    Ok(d) => d.is_zero(),
                    Err(_) => false,
                }
            }
            _ => self.approx_eq(o, EPS),
        }
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $f:ident) => {
        impl<'a> $tr<&'a Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $m(self, o: &Scalar) -> Scalar {
                self.$f(o).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: Scalar) -> Scalar {
                (&self).$m(&o)
            }
        }
        impl<'a> $tr<&'a Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: &Scalar) -> Scalar {
                (&self).$m(o)
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);
binop!(Div, div, try_div);

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, o: &Scalar) {
        *self = &*self + o;
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, o: &Scalar) {
        *self = &*self - o;
    }
}

impl MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, o: &Scalar) {
        *self = &*self * o;
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(x) => Scalar::Exact(x.neg()),
            Scalar::Float(z) => Scalar::Float(-z),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::zero(), |a, b| a + b)
    }
}

impl<'a> Sum<&'a Scalar> for Scalar {
    fn sum<I: Iterator<Item = &'a Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::zero(), |a, b| a + b)
    }
}

impl Product for Scalar {
    fn product<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::one(), |a, b| a * b)
    }
}

// ===========================================================================
// Text form
// ===========================================================================

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(Exact { a, root: None }) => write!(f, "{a}"),
            Scalar::Exact(Exact { a, root: Some(b) }) => {
                write!(f, "({})+({})*sqrt({})", a, b.0, b.1)
            }
            Scalar::Float(z) => {
                if z.im.is_sign_negative() {
                    write!(f, "{:?}-{:?}*i", z.re, -z.im)
                } else {
                    write!(f, "{:?}+{:?}*i", z.re, z.im)
                }
            }
        }
    }
}

fn split_terms(s: &str) -> Vec<&str> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..bytes.len() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E' | b'(' | b'/') {
            out.push(&s[start..k]);
            start = k;
        }
    }
    out.push(&s[start..]);
    out
}

/// Splits a term into (coefficient text, is imaginary).
fn term_parts(t: &str) -> (String, bool) {
    let t = t.strip_prefix('+').unwrap_or(t);
    if let Some(c) = t.strip_suffix("*i") {
        (c.to_string(), true)
    } else if let Some(c) = t.strip_suffix('i') {
        let c = match c {
            "" => "1",
            "-" => "-1",
            other => other,
        };
        (c.to_string(), true)
    } else {
        (t.to_string(), false)
    }
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = n.strip_prefix('+').unwrap_or(n).parse().ok()?;
    let d: BigInt = d.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(BigRational::new(n, d))
}

fn parse_gauss(s: &str) -> Option<Gauss> {
    let mut g = Gauss::zero();
    for t in split_terms(s) {
        let (c, imag) = term_parts(t);
        let q = parse_rational(&c)?;
        if imag {
            g.im += q;
        } else {
            g.re += q;
        }
    }
    Some(g)
}

fn parse_float(s: &str) -> Option<Complex64> {
    let mut z = Complex64::new(0.0, 0.0);
    for t in split_terms(s) {
        let (c, imag) = term_parts(t);
        let v: f64 = c.parse().ok()?;
        if imag {
            z.im += v;
        } else {
            z.re += v;
        }
    }
    Some(z)
}

/// Strips one pair of enclosing parentheses.
fn unparen(s: &str) -> Option<&str> {
    s.strip_prefix('(')?.strip_suffix(')')
}

/// Index of the `)` matching the `(` at position 0.
fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (k, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

impl FromStr for Scalar {
    type Err = ScalarError;

    fn from_str(text: &str) -> Result<Scalar> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || ScalarError::Parse(text.to_string());
        if s.is_empty() {
            return Err(bad());
        }
        if let Some(p) = s.find("sqrt(") {
            let z = s[p + 5..].strip_suffix(')').and_then(parse_gauss).ok_or_else(bad)?;
            let prefix = &s[..p];
            let prefix = prefix.strip_suffix('*').unwrap_or(prefix);
            let (a, c) = match prefix {
                "" | "+" => (Gauss::zero(), Gauss::one()),
                "-" => (Gauss::zero(), -&Gauss::one()),
                _ => {
                    let end = matching_paren(prefix).ok_or_else(bad)?;
                    let first = parse_gauss(&prefix[1..end]).ok_or_else(bad)?;
                    let rest = &prefix[end + 1..];
                    if rest.is_empty() {
                        (Gauss::zero(), first)
                    } else if let Some(r) = rest.strip_prefix('+') {
                        (first, unparen(r).and_then(parse_gauss).ok_or_else(bad)?)
                    } else if let Some(r) = rest.strip_prefix('-') {
                        (first, -&unparen(r).and_then(parse_gauss).ok_or_else(bad)?)
                    } else {
                        return Err(bad());
                    }
                }
            };
            return Scalar::make(a.re, a.im, c.re, c.im, Some(&z));
        }
        let inner = unparen(&s).unwrap_or(&s);
        let is_float = inner.contains(['.', 'e', 'E']) || inner.contains("inf") || inner.contains("NaN");
        if is_float {
            parse_float(inner).map(Scalar::Float).ok_or_else(bad)
        } else {
            parse_gauss(inner).map(Scalar::from_gauss).ok_or_else(bad)
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

struct ScalarVisitor;

impl Visitor<'_> for ScalarVisitor {
    type Value = Scalar;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a scalar string or number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Scalar, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Scalar, E> {
        Ok(Scalar::from(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Scalar, E> {
        Ok(Scalar::from(BigRational::from_integer(BigInt::from(v))))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Scalar, E> {
        if v.fract() == 0.0 && v.abs() < 9.0e15 {
            Ok(Scalar::from(v as i64))
        } else {
            Ok(Scalar::float(v, 0.0))
        }
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Scalar, D::Error> {
        d.deserialize_any(ScalarVisitor)
    }
}

/// Orders by the float value, real part first; used only for stable output.
pub fn cmp_approx(a: &Scalar, b: &Scalar) -> Ordering {
    let (x, y) = (a.to_complex(), b.to_complex());
    x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(t: &str) -> Scalar {
        t.parse().unwrap()
    }

    #[test]
    fn make_one() {
        let one = Scalar::make(rat(1), rat(0), rat(0), rat(0), None).unwrap();
        assert_eq!(one, Scalar::one());
        assert_eq!(one.to_string(), "1");
    }

    #[test]
    fn sqrt_two_squares_to_two() {
        let r = Scalar::make(rat(0), rat(0), rat(1), rat(0), Some(&Gauss::from_ints(2, 0))).unwrap();
        assert_eq!(&r * &r, Scalar::from(2));
        assert_eq!(r.to_string(), "(0)+(1)*sqrt(2)");
    }

    #[test]
    fn i_squares_to_minus_one() {
        assert_eq!(Scalar::i() * Scalar::i(), Scalar::from(-1));
    }

    #[test]
    fn zero_radicand_rejected() {
        let e = Scalar::make(rat(0), rat(0), rat(1), rat(0), Some(&Gauss::zero()));
        assert_eq!(e, Err(ScalarError::ZeroRadicand));
    }

    #[test]
    fn gaussian_product() {
        assert_eq!(Scalar::complex(1, 1) * Scalar::complex(1, -1), Scalar::from(2));
    }

    #[test]
    fn inverse_root() {
        let r2 = Scalar::sqrt_gauss(&Gauss::from_ints(2, 0));
        let inv = Scalar::one() / &r2;
        assert_eq!(&inv * &r2, Scalar::one());
        assert_eq!(inv.to_string(), "(0)+(1/2)*sqrt(2)");
    }

    #[test]
    fn canonical_equality() {
        let a = Scalar::make(rat(7), rat(0), rat(0), rat(0), Some(&Gauss::from_ints(2, 0))).unwrap();
        assert_eq!(a, Scalar::from(7));
    }

    #[test]
    fn square_radicands_collapse() {
        assert_eq!(Scalar::sqrt_gauss(&Gauss::from_ints(4, 0)), Scalar::from(2));
        assert_eq!(Scalar::sqrt_gauss(&Gauss::from_ints(-4, 0)), Scalar::complex(0, 2));
        assert_eq!(Scalar::sqrt_gauss(&Gauss::from_ints(0, 2)), Scalar::complex(1, 1));
        assert_eq!(Scalar::sqrt_gauss(&Gauss::from_ints(-1, 0)), Scalar::i());
        let r8 = Scalar::sqrt_gauss(&Gauss::from_ints(8, 0));
        let r2 = Scalar::sqrt_gauss(&Gauss::from_ints(2, 0));
        assert_eq!(r8, &r2 * &Scalar::from(2));
    }

    #[test]
    fn unit_multiple_radicands_align() {
        let m2 = Scalar::sqrt_gauss(&Gauss::from_ints(-2, 0));
        let p2 = Scalar::sqrt_gauss(&Gauss::from_ints(2, 0));
        assert_eq!(m2, &Scalar::i() * &p2);
        assert_eq!(&m2 * &p2, Scalar::complex(0, 2));
    }

    #[test]
    fn mismatched_radicands_error() {
        let a = Scalar::sqrt_gauss(&Gauss::from_ints(2, 0));
        let b = Scalar::sqrt_gauss(&Gauss::from_ints(3, 0));
        assert!(matches!(a.try_add(&b), Err(ScalarError::RadicandMismatch(..))));
        assert_ne!(a, b);
    }

    #[test]
    fn division_by_zero() {
        assert_eq!(Scalar::one().try_div(&Scalar::zero()), Err(ScalarError::DivisionByZero));
    }

    #[test]
    fn sqrt_i_principal() {
        let r = Scalar::sqrt_gauss(&Gauss::i());
        assert_eq!(&r * &r, Scalar::i());
        let z = r.to_complex();
        assert!(z.re > 0.0 && z.im > 0.0);
    }

    #[test]
    fn conjugates() {
        let r = Scalar::sqrt_gauss(&Gauss::i());
        let c = r.conj().unwrap();
        assert!(c.approx_eq(&Scalar::Float(r.to_complex().conj()), 1e-12));
        let m2 = Scalar::sqrt_gauss(&Gauss::from_ints(-3, 0));
        assert_eq!(m2.conj().unwrap(), -&m2);
        let bad = Scalar::sqrt_gauss(&Gauss::from_ints(2, 1));
        assert!(bad.conj().is_err());
        assert_eq!(Scalar::complex(3, 4).conj().unwrap(), Scalar::complex(3, -4));
        assert_eq!(m2.conj_root(), -&m2);
    }

    #[test]
    fn text_round_trip() {
        for t in ["0", "-3/4", "i", "-i", "2*i", "1/2-3/5*i", "(1)+(-2*i)*sqrt(2)", "(1/3+i)+(1)*sqrt(1+i)"] {
            assert_eq!(s(t).to_string(), t);
        }
        assert_eq!(s("1+1*i"), Scalar::complex(1, 1));
        assert_eq!(s("2i"), Scalar::complex(0, 2));
        assert_eq!(s("sqrt(2)") * s("sqrt(2)"), Scalar::from(2));
        assert_eq!(s("(3)-(1)*sqrt(2)"), Scalar::from(3) - s("sqrt(2)"));
        assert!(!s("1.5").is_exact());
        assert_eq!(s("1.5+0.5*i"), Scalar::float(1.5, 0.5));
        assert!("1/0".parse::<Scalar>().is_err());
        assert!("x".parse::<Scalar>().is_err());
    }

    #[test]
    fn float_text_round_trip() {
        let z = Scalar::float(0.25, -1e-12);
        let back: Scalar = z.to_string().parse().unwrap();
        assert_eq!(back.to_complex(), z.to_complex());
    }

    #[test]
    fn serde_forms() {
        let v: Vec<Scalar> = serde_json::from_str(r#"[1, -2, "1/2+i", 3.0, 0.5]"#).unwrap();
        assert_eq!(v[0], Scalar::one());
        assert_eq!(v[2], Scalar::from_gauss(Gauss::new(BigRational::new(1.into(), 2.into()), rat(1))));
        assert!(v[3].is_exact());
        assert!(!v[4].is_exact());
        assert_eq!(serde_json::to_string(&v[2]).unwrap(), "\"1/2+i\"");
    }

    #[test]
    fn float_mixing() {
        let x = Scalar::from(2) * Scalar::float(0.5, 0.0);
        assert!(!x.is_exact());
        assert_eq!(x, Scalar::one());
        assert!(Scalar::float(1e-12, 0.0).is_zero());
    }

    #[test]
    fn powers() {
        assert_eq!(Scalar::i().pow(4), Scalar::one());
        assert_eq!(Scalar::from(2).powi(-2).unwrap(), Scalar::from_ratio(1, 4));
        assert_eq!(Scalar::zero().pow(0), Scalar::one());
    }

    const RADICANDS: [(i64, i64); 4] = [(2, 0), (0, 1), (3, 1), (-5, 0)];

    fn exact_scalar() -> impl Strategy<Value = Scalar> {
        let q = (-50i64..=50, 1i64..=7).prop_map(|(n, d)| BigRational::new(n.into(), d.into()));
        (q.clone(), q.clone(), q.clone(), q, 0usize..RADICANDS.len(), any::<bool>()).prop_map(
            |(a, b, c, d, k, with_root)| {
                let (x, y) = RADICANDS[k];
                let root = if with_root { (c, d) } else { (rat(0), rat(0)) };
                Scalar::make(a, b, root.0, root.1, Some(&Gauss::from_ints(x, y))).unwrap()
            },
        )
    }

    fn same_field_pair() -> impl Strategy<Value = (Scalar, Scalar)> {
        (exact_scalar(), exact_scalar()).prop_filter("shared radicand", |(a, b)| {
            a.try_add(b).is_ok()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn mul_div_round_trip((a, b) in same_field_pair()) {
            prop_assume!(!b.is_zero());
            prop_assert_eq!(&(&a * &b) / &b, a);
        }
    }

    #[derive(Debug, Clone)]
    enum Op {
        Add,
        Sub,
        Mul,
        Div,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![Just(Op::Add), Just(Op::Sub), Just(Op::Mul), Just(Op::Div)]
    }

    fn bounded_scalar(z: (i64, i64)) -> impl Strategy<Value = Scalar> {
        (-1000i64..=1000, -1000i64..=1000, -1000i64..=1000, 1i64..=9).prop_map(move |(a, b, c, d)| {
            Scalar::make(
                BigRational::new(a.into(), d.into()),
                rat(b),
                BigRational::new(c.into(), d.into()),
                rat(0),
                Some(&Gauss::from_ints(z.0, z.1)),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn exact_and_float_agree(
            start in bounded_scalar((2, 0)),
            steps in prop::collection::vec((op(), bounded_scalar((2, 0))), 1..=10),
        ) {
            let mut e = start.clone();
            let mut f = start.to_complex();
            // First-order rounding-error scale of the float evaluation.
            let mut scale = f.norm();
            for (o, x) in steps {
                let xf = x.to_complex();
                match o {
                    Op::Add => { e = &e + &x; f += xf; scale = scale.max(xf.norm()); }
                    Op::Sub => { e = &e - &x; f -= xf; scale = scale.max(xf.norm()); }
                    Op::Mul => { e = &e * &x; f *= xf; scale *= xf.norm(); }
                    Op::Div => {
                        if x.is_zero() { continue; }
                        e = &e / &x;
                        f /= xf;
                        scale /= xf.norm();
                    }
                }
                scale = scale.max(f.norm());
            }
            let scale = scale.max(1.0);
            let diff = (e.to_complex() - f).norm();
            prop_assert!(diff <= EPS * scale, "diff {} scale {}", diff, scale);
        }
    }
}
