//! Boolean-domain signatures: dense tables over `{0,1}^k`.
//!
//! Variable `i` of an arity-`k` signature is bit `k-1-i` of the table index,
//! so the first variable is the most significant bit. Port `i` of a vertex
//! carries variable `i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::{Scalar, ScalarError};

pub const MAX_ARITY: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignatureError {
    #[error("arity {0} exceeds the cap of {MAX_ARITY}")]
    ArityCap(usize),
    #[error("table has {got} entries, arity {arity} needs {}", 1usize << arity)]
    TableLength { arity: usize, got: usize },
    #[error("index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("index {0} used twice")]
    DuplicateIndex(usize),
    #[error("{positions} positions but {bits} bits")]
    LengthMismatch { positions: usize, bits: usize },
    #[error("self-loop needs two distinct ports, got {0} twice")]
    EqualPorts(usize),
    #[error("not a permutation of 0..{0}")]
    BadPermutation(usize),
    #[error("arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("arity must be at least 1")]
    ZeroArity,
    #[error("bit values must be 0 or 1")]
    BadBit,
    #[error("cannot parse signature {0:?}")]
    Parse(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

pub type Result<T> = std::result::Result<T, SignatureError>;

/// Value of variable `i` in table index `idx` of an arity-`k` table.
#[inline]
pub fn bit(idx: usize, k: usize, i: usize) -> u8 {
    ((idx >> (k - 1 - i)) & 1) as u8
}

/// Table index of an assignment, first variable most significant.
#[inline]
pub fn index_of(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Assignment of an arity-`k` table index.
pub fn bits_of(idx: usize, k: usize) -> Vec<u8> {
    (0..k).map(|i| bit(idx, k, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Mixed,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    arity: usize,
    table: Vec<Scalar>,
}

/// `[f_0, …, f_k]`: the value at every string of Hamming weight `w` is `f_w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricSignature {
    pub values: Vec<Scalar>,
}

impl SymmetricSignature {
    pub fn new(values: Vec<Scalar>) -> Self {
        assert!(!values.is_empty(), "symmetric signature needs at least one value");
        SymmetricSignature { values }
    }

    pub fn from_ints(values: &[i64]) -> Self {
        SymmetricSignature::new(values.iter().map(|&v| Scalar::from(v)).collect())
    }

    pub fn arity(&self) -> usize {
        self.values.len() - 1
    }

    pub fn expand(&self) -> Result<Signature> {
        let k = self.arity();
        if k > MAX_ARITY {
            return Err(SignatureError::ArityCap(k));
        }
        Ok(Signature::from_fn(k, |idx| self.values[idx.count_ones() as usize].clone()))
    }
}

impl fmt::Display for SymmetricSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

impl Signature {
    pub fn new(arity: usize, table: Vec<Scalar>) -> Result<Self> {
        if arity > MAX_ARITY {
            return Err(SignatureError::ArityCap(arity));
        }
        if table.len() != 1 << arity {
            return Err(SignatureError::TableLength { arity, got: table.len() });
        }
        Ok(Signature { arity, table })
    }

    pub fn from_fn(arity: usize, f: impl Fn(usize) -> Scalar) -> Self {
        assert!(arity <= MAX_ARITY, "arity {arity} exceeds cap");
        Signature { arity, table: (0..1usize << arity).map(f).collect() }
    }

    /// Table from integers; the length fixes the arity.
    pub fn from_ints(table: &[i64]) -> Self {
        let k = table.len().trailing_zeros() as usize;
        Signature::new(k, table.iter().map(|&v| Scalar::from(v)).collect()).expect("power-of-two table")
    }

    /// Symmetric signature `[f_0, …, f_k]` from integers.
    pub fn sym(values: &[i64]) -> Self {
        SymmetricSignature::from_ints(values).expand().expect("arity within cap")
    }

    pub fn symmetric(values: Vec<Scalar>) -> Self {
        SymmetricSignature::new(values).expand().expect("arity within cap")
    }

    /// The arity-0 signature with value `c`.
    pub fn constant(c: Scalar) -> Self {
        Signature { arity: 0, table: vec![c] }
    }

    pub fn zero(arity: usize) -> Self {
        Signature::from_fn(arity, |_| Scalar::zero())
    }

    /// `=_k`.
    pub fn equality(k: usize) -> Self {
        let last = (1usize << k) - 1;
        Signature::from_fn(k, |idx| if idx == 0 || idx == last { Scalar::one() } else { Scalar::zero() })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn table(&self) -> &[Scalar] {
        &self.table
    }

    pub fn into_table(self) -> Vec<Scalar> {
        self.table
    }

    pub fn get(&self, idx: usize) -> &Scalar {
        &self.table[idx]
    }

    pub fn value(&self, bits: &[u8]) -> &Scalar {
        debug_assert_eq!(bits.len(), self.arity);
        &self.table[index_of(bits)]
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(Scalar::is_zero)
    }

    pub fn is_exact(&self) -> bool {
        self.table.iter().all(Scalar::is_exact)
    }

    /// Indices with a nonzero value.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.table.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, _)| i)
    }

    pub fn scale(&self, c: &Scalar) -> Signature {
        Signature { arity: self.arity, table: self.table.iter().map(|v| v * c).collect() }
    }

    pub fn map(&self, f: impl Fn(&Scalar) -> Scalar) -> Signature {
        Signature { arity: self.arity, table: self.table.iter().map(f).collect() }
    }

    pub fn to_float(&self) -> Signature {
        self.map(Scalar::to_float)
    }

    /// Compact form when the table is constant on each weight level.
    pub fn as_symmetric(&self) -> Option<SymmetricSignature> {
        let mut values: Vec<Option<&Scalar>> = vec![None; self.arity + 1];
        for (idx, v) in self.table.iter().enumerate() {
            let w = idx.count_ones() as usize;
            match values[w] {
                None => values[w] = Some(v),
                Some(u) if u == v => {}
                Some(_) => return None,
            }
        }
        Some(SymmetricSignature::new(values.into_iter().map(|v| v.unwrap().clone()).collect()))
    }

    fn check_positions(&self, positions: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.arity];
        for &p in positions {
            if p >= self.arity {
                return Err(SignatureError::IndexOutOfRange { index: p, arity: self.arity });
            }
            if seen[p] {
                return Err(SignatureError::DuplicateIndex(p));
            }
            seen[p] = true;
        }
        Ok(())
    }

    /// Fixes the variables at `positions` to `bits`; the rest keep their order.
    pub fn pin(&self, positions: &[usize], bits: &[u8]) -> Result<Signature> {
        if positions.len() != bits.len() {
            return Err(SignatureError::LengthMismatch { positions: positions.len(), bits: bits.len() });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(SignatureError::BadBit);
        }
        self.check_positions(positions)?;
        let k = self.arity;
        let mut fixed = 0usize;
        let mut mask = 0usize;
        for (&p, &b) in positions.iter().zip(bits) {
            mask |= 1 << (k - 1 - p);
            fixed |= (b as usize) << (k - 1 - p);
        }
        let free: Vec<usize> = (0..k).filter(|i| mask >> (k - 1 - i) & 1 == 0).collect();
        let m = free.len();
        Ok(Signature::from_fn(m, |j| {
            let mut idx = fixed;
            for (t, &i) in free.iter().enumerate() {
                idx |= (bit(j, m, t) as usize) << (k - 1 - i);
            }
            self.table[idx].clone()
        }))
    }

    /// `(f ⊗ g)(x, y) = f(x)·g(y)`.
    pub fn tensor(&self, g: &Signature) -> Result<Signature> {
        let k = self.arity + g.arity;
        if k > MAX_ARITY {
            return Err(SignatureError::ArityCap(k));
        }
        let gk = g.arity;
        Ok(Signature::from_fn(k, |idx| {
            let (a, b) = (idx >> gk, idx & ((1 << gk) - 1));
            if self.table[a].is_zero() || g.table[b].is_zero() {
                Scalar::zero()
            } else {
                &self.table[a] * &g.table[b]
            }
        }))
    }

    /// Joins ports of `f` and `g` pairwise by edges and sums them out.
    /// Free ports of `f` come first, then those of `g`, each in original order.
    pub fn connect(&self, g: &Signature, pairs: &[(usize, usize)]) -> Result<Signature> {
        let fp: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let gp: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        self.check_positions(&fp)?;
        g.check_positions(&gp)?;
        let t = self.tensor(g)?;
        let k = self.arity;
        let mut out = t;
        // Contract one pair at a time; earlier contractions shift later ports.
        let mut live: Vec<usize> = (0..k + g.arity).collect();
        for &(a, b) in pairs {
            let pa = live.iter().position(|&x| x == a).expect("live port");
            let pb = live.iter().position(|&x| x == k + b).expect("live port");
            out = out.self_loop(pa, pb)?;
            live.retain(|&x| x != a && x != k + b);
        }
        Ok(out)
    }

    /// `Σ_e f` with ports `p1` and `p2` both set to `e`.
    pub fn self_loop(&self, p1: usize, p2: usize) -> Result<Signature> {
        if p1 == p2 {
            return Err(SignatureError::EqualPorts(p1));
        }
        self.check_positions(&[p1, p2])?;
        let zero = self.pin(&[p1, p2], &[0, 0])?;
        let one = self.pin(&[p1, p2], &[1, 1])?;
        Ok(Signature {
            arity: zero.arity,
            table: zero.table.iter().zip(&one.table).map(|(a, b)| a + b).collect(),
        })
    }

    /// `f_π(x_0, …, x_{k-1}) = f(x_{π(0)}, …, x_{π(k-1)})`.
    pub fn permute(&self, pi: &[usize]) -> Result<Signature> {
        let k = self.arity;
        if pi.len() != k {
            return Err(SignatureError::BadPermutation(k));
        }
        let mut seen = vec![false; k];
        for &p in pi {
            if p >= k || seen[p] {
                return Err(SignatureError::BadPermutation(k));
            }
            seen[p] = true;
        }
        Ok(Signature::from_fn(k, |idx| {
            let mut src = 0usize;
            for (i, &p) in pi.iter().enumerate() {
                src |= (bit(idx, k, p) as usize) << (k - 1 - i);
            }
            self.table[src].clone()
        }))
    }

    pub fn parity(&self) -> Parity {
        let (mut even, mut odd) = (false, false);
        for idx in self.support() {
            if idx.count_ones() % 2 == 0 {
                even = true;
            } else {
                odd = true;
            }
        }
        match (even, odd) {
            (false, false) => Parity::Zero,
            (true, false) => Parity::Even,
            (false, true) => Parity::Odd,
            (true, true) => Parity::Mixed,
        }
    }

    /// `c ≠ 0` with `g = c·self`; both zero gives `c = 1`.
    pub fn equal_up_to_scalar(&self, g: &Signature) -> Option<Scalar> {
        if self.arity != g.arity {
            return None;
        }
        let pivot = self.table.iter().position(|v| !v.is_zero());
        let Some(p) = pivot else {
            return g.is_zero().then(Scalar::one);
        };
        if g.table[p].is_zero() {
            return None;
        }
        let c = g.table[p].try_div(&self.table[p]).ok()?;
        for (a, b) in self.table.iter().zip(&g.table) {
            match a.try_mul(&c) {
                Ok(ac) if ac == *b => {}
                _ => return None,
            }
        }
        Some(c)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_symmetric() {
            Some(s) if self.arity > 0 => write!(f, "{s}"),
            _ => {
                let parts: Vec<String> = self.table.iter().map(|v| v.to_string()).collect();
                write!(f, "table{}({})", self.arity, parts.join(","))
            }
        }
    }
}

/// Accepts the display forms `[f0,…,fk]` and `tableK(v0,…)`, plus `=k`.
impl FromStr for Signature {
    type Err = SignatureError;

    fn from_str(text: &str) -> Result<Signature> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || SignatureError::Parse(text.to_string());
        let values = |body: &str| -> Result<Vec<Scalar>> {
            body.split(',').map(|v| v.parse::<Scalar>().map_err(SignatureError::from)).collect()
        };
        if let Some(k) = s.strip_prefix('=') {
            let k: usize = k.parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(SignatureError::ZeroArity);
            }
            if k > MAX_ARITY {
                return Err(SignatureError::ArityCap(k));
            }
            return Ok(Signature::equality(k));
        }
        if let Some(body) = s.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            if body.is_empty() {
                return Err(bad());
            }
            let v = values(body)?;
            if v.len() - 1 > MAX_ARITY {
                return Err(SignatureError::ArityCap(v.len() - 1));
            }
            return SymmetricSignature::new(v).expand();
        }
        let rest = s.strip_prefix("table").ok_or_else(bad)?;
        let open = rest.find('(').ok_or_else(bad)?;
        let k: usize = rest[..open].parse().map_err(|_| bad())?;
        let body = rest[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        if k > MAX_ARITY {
            return Err(SignatureError::ArityCap(k));
        }
        Signature::new(k, values(body)?)
    }
}

#[derive(Serialize, Deserialize)]
struct SignatureJson {
    arity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<Scalar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    symmetric: Option<Vec<Scalar>>,
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let json = match self.as_symmetric() {
            Some(sym) => SignatureJson { arity: self.arity, table: None, symmetric: Some(sym.values) },
            None => SignatureJson { arity: self.arity, table: Some(self.table.clone()), symmetric: None },
        };
        json.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Signature, D::Error> {
        use serde::de::Error;
        let json = SignatureJson::deserialize(d)?;
        match (json.table, json.symmetric) {
            (Some(t), None) => Signature::new(json.arity, t).map_err(D::Error::custom),
            (None, Some(v)) => {
                if v.len() != json.arity + 1 {
                    return Err(D::Error::custom(format!(
                        "symmetric form of arity {} needs {} values",
                        json.arity,
                        json.arity + 1
                    )));
                }
                SymmetricSignature::new(v).expand().map_err(D::Error::custom)
            }
            _ => Err(D::Error::custom("exactly one of \"table\" or \"symmetric\" is required")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent evaluation of a single-edge connection by enumeration.
    fn connect_oracle(f: &Signature, g: &Signature, pf: usize, pg: usize) -> Signature {
        let (kf, kg) = (f.arity(), g.arity());
        let k = kf + kg - 2;
        Signature::from_fn(k, |idx| {
            let bits = bits_of(idx, k);
            let mut total = Scalar::zero();
            for e in 0..2u8 {
                let mut xf: Vec<u8> = bits[..kf - 1].to_vec();
                xf.insert(pf, e);
                let mut xg: Vec<u8> = bits[kf - 1..].to_vec();
                xg.insert(pg, e);
                total += &(f.value(&xf) * g.value(&xg));
            }
            total
        })
    }

    #[test]
    fn pin_examples() {
        let f = Signature::sym(&[0, 0, 1, 0]);
        assert_eq!(f.pin(&[0], &[0]).unwrap(), Signature::sym(&[0, 0, 1]));
        assert_eq!(f.pin(&[2], &[1]).unwrap(), Signature::sym(&[0, 1, 0]));
        let eq2 = Signature::from_ints(&[1, 0, 0, 1]);
        assert_eq!(eq2.pin(&[1], &[1]).unwrap(), Signature::from_ints(&[0, 1]));
    }

    #[test]
    fn pin_errors() {
        let f = Signature::sym(&[0, 0, 1, 0]);
        assert!(matches!(f.pin(&[3], &[0]), Err(SignatureError::IndexOutOfRange { .. })));
        assert_eq!(f.pin(&[1, 1], &[0, 0]), Err(SignatureError::DuplicateIndex(1)));
        assert!(matches!(f.pin(&[0], &[0, 1]), Err(SignatureError::LengthMismatch { .. })));
    }

    #[test]
    fn tensor_examples() {
        let u0 = Signature::from_ints(&[1, 0]);
        let u1 = Signature::from_ints(&[0, 1]);
        assert_eq!(u0.tensor(&u0).unwrap(), Signature::from_ints(&[1, 0, 0, 0]));
        assert_eq!(u1.tensor(&u1).unwrap(), Signature::from_ints(&[0, 0, 0, 1]));
        let t = Signature::sym(&[1, 0, 2]).tensor(&u0).unwrap();
        assert_eq!(t, Signature::from_ints(&[1, 0, 0, 0, 0, 0, 2, 0]));
        assert_eq!(t, connect_oracle(&Signature::sym(&[1, 0, 2]).tensor(&Signature::sym(&[1, 0, 1])).unwrap(), &u0, 3, 0));
        let big = Signature::zero(13);
        assert_eq!(big.tensor(&big), Err(SignatureError::ArityCap(26)));
    }

    #[test]
    fn connect_examples() {
        let m = Signature::sym(&[0, 1, 0]);
        let expect = connect_oracle(&m, &m, 1, 0);
        assert_eq!(expect, Signature::sym(&[1, 0, 1]));
        assert_eq!(m.connect(&m, &[(1, 0)]).unwrap(), expect);

        let r = Scalar::complex(2, 1);
        let g = Signature::symmetric(vec![Scalar::one(), Scalar::zero(), r.clone()]);
        let g2 = Signature::symmetric(vec![Scalar::one(), Scalar::zero(), &r * &r]);
        assert_eq!(g.connect(&g, &[(1, 0)]).unwrap(), g2);

        let u = Signature::from_ints(&[1, 0]);
        assert_eq!(u.connect(&Signature::sym(&[1, 0, 1]), &[(0, 0)]).unwrap(), u);
        assert_eq!(m.connect(&m, &[(0, 0), (0, 1)]), Err(SignatureError::DuplicateIndex(0)));
    }

    #[test]
    fn self_loop_examples() {
        assert_eq!(Signature::sym(&[1, 0, 1]).self_loop(0, 1).unwrap(), Signature::constant(Scalar::from(2)));
        assert_eq!(Signature::sym(&[0, 1, 0]).self_loop(0, 1).unwrap(), Signature::constant(Scalar::zero()));
        // Enumerated by hand: free x with loop e; weight(x,e,e) = 2 only for x=0,e=1.
        let f = Signature::sym(&[0, 0, 1, 0]);
        let oracle = Signature::from_fn(1, |x| {
            (0..2usize).map(|e| f.get((x << 2) | (e << 1) | e).clone()).sum()
        });
        assert_eq!(oracle, Signature::from_ints(&[1, 0]));
        assert_eq!(f.self_loop(1, 2).unwrap(), oracle);
        assert_eq!(f.self_loop(1, 1), Err(SignatureError::EqualPorts(1)));
    }

    #[test]
    fn permute_examples() {
        let f = Signature::sym(&[3, 1, 4, 1]);
        assert_eq!(f.permute(&[2, 0, 1]).unwrap(), f);
        let u = Signature::from_ints(&[1, 0]).tensor(&Signature::from_ints(&[0, 1])).unwrap();
        let v = Signature::from_ints(&[0, 1]).tensor(&Signature::from_ints(&[1, 0])).unwrap();
        assert_eq!(u.permute(&[1, 0]).unwrap(), v);
        let g = Signature::from_ints(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let c = [1, 2, 0];
        let thrice = g.permute(&c).unwrap().permute(&c).unwrap().permute(&c).unwrap();
        assert_eq!(thrice, g);
        assert_ne!(g.permute(&c).unwrap(), g);
        assert_eq!(g.permute(&[0, 0, 1]), Err(SignatureError::BadPermutation(3)));
    }

    #[test]
    fn parity_examples() {
        assert_eq!(Signature::sym(&[0, 0, 1, 0]).parity(), Parity::Even);
        assert_eq!(Signature::sym(&[1, 0, 0, 1]).parity(), Parity::Mixed);
        assert_eq!(Signature::zero(3).parity(), Parity::Zero);
        assert_eq!(Signature::sym(&[0, 1, 0, 1]).parity(), Parity::Odd);
    }

    #[test]
    fn scalar_multiples() {
        let f = Signature::sym(&[1, 0, 1]);
        assert_eq!(f.equal_up_to_scalar(&Signature::sym(&[2, 0, 2])), Some(Scalar::from(2)));
        assert_eq!(f.equal_up_to_scalar(&Signature::sym(&[1, 0, 2])), None);
        let h = Signature::sym(&[7, -1, -1, 7]);
        let h4 = h.scale(&Scalar::from(4));
        assert_eq!(h4.equal_up_to_scalar(&h), Some(Scalar::from_ratio(1, 4)));
        assert_eq!(h.equal_up_to_scalar(&h4), Some(Scalar::from(4)));
        assert_eq!(Signature::zero(2).equal_up_to_scalar(&Signature::zero(2)), Some(Scalar::one()));
        assert_eq!(f.equal_up_to_scalar(&Signature::zero(2)), None);
    }

    #[test]
    fn json_forms() {
        let f: Signature = serde_json::from_str(r#"{"arity":3,"symmetric":[0,0,1,0]}"#).unwrap();
        assert_eq!(f, Signature::sym(&[0, 0, 1, 0]));
        assert_eq!(serde_json::to_string(&f).unwrap(), r#"{"arity":3,"symmetric":["0","0","1","0"]}"#);
        let g: Signature = serde_json::from_str(r#"{"arity":1,"table":["1/2","i"]}"#).unwrap();
        let back: Signature = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(g, back);
        assert!(serde_json::from_str::<Signature>(r#"{"arity":2,"table":[1,2,3]}"#).is_err());
        assert!(serde_json::from_str::<Signature>(r#"{"arity":2,"symmetric":[1,2]}"#).is_err());
    }

    fn table(k: usize) -> impl Strategy<Value = Signature> {
        prop::collection::vec(-3i64..=3, 1 << k).prop_map(|v| Signature::from_ints(&v))
    }

    fn parity_table(k: usize, even: bool) -> impl Strategy<Value = Signature> {
        table(k).prop_map(move |f| {
            Signature::from_fn(f.arity(), |idx| {
                if (idx.count_ones() % 2 == 0) == even { f.get(idx).clone() } else { Scalar::zero() }
            })
        })
    }

    fn perm(k: usize) -> impl Strategy<Value = Vec<usize>> {
        Just((0..k).collect::<Vec<_>>()).prop_shuffle()
    }

    proptest! {
        #[test]
        fn connect_matches_enumeration(f in table(3), g in table(2), pf in 0usize..3, pg in 0usize..2) {
            prop_assert_eq!(f.connect(&g, &[(pf, pg)]).unwrap(), connect_oracle(&f, &g, pf, pg));
        }

        #[test]
        fn permute_is_group_action(f in table(4), pi in perm(4), sigma in perm(4)) {
            let lhs = f.permute(&pi).unwrap().permute(&sigma).unwrap();
            let comp: Vec<usize> = (0..4).map(|i| sigma[pi[i]]).collect();
            prop_assert_eq!(lhs, f.permute(&comp).unwrap());
        }

        #[test]
        fn parity_closed_under_tensor_and_loops(
            a in parity_table(2, true), b in parity_table(3, false), c in parity_table(3, true),
        ) {
            let ab = a.tensor(&b).unwrap().parity();
            prop_assert!(matches!(ab, Parity::Odd | Parity::Zero));
            let ac = a.tensor(&c).unwrap().parity();
            prop_assert!(matches!(ac, Parity::Even | Parity::Zero));
            let bl = b.self_loop(0, 2).unwrap().parity();
            prop_assert!(matches!(bl, Parity::Odd | Parity::Zero));
            let cl = c.self_loop(1, 2).unwrap().parity();
            prop_assert!(matches!(cl, Parity::Even | Parity::Zero));
        }

        #[test]
        fn pins_compose(f in table(4), b1 in 0u8..2, b2 in 0u8..2) {
            let twice = f.pin(&[1], &[b1]).unwrap().pin(&[2], &[b2]).unwrap();
            prop_assert_eq!(twice, f.pin(&[3, 1], &[b2, b1]).unwrap());
        }
    }

    #[test]
    fn parses_display_forms() {
        for f in [Signature::sym(&[1, 0, 2, 0]), Signature::from_ints(&[0, 1, 2, 3]), Signature::equality(3)] {
            assert_eq!(f.to_string().parse::<Signature>().unwrap(), f);
        }
        assert_eq!("=3".parse::<Signature>().unwrap(), Signature::equality(3));
        assert_eq!("[1, i, -1/2]".parse::<Signature>().unwrap().get(3), &Scalar::from_ratio(-1, 2));
        assert_eq!("table1(3,1+2i)".parse::<Signature>().unwrap().get(1), &Scalar::complex(1, 2));
        for bad in ["", "[]", "[1,x]", "table2(1,2)", "=0", "{1,2}", "table(1,2)"] {
            assert!(bad.parse::<Signature>().is_err(), "{bad}");
        }
    }
}
