//! Truncated Weil-algebra arithmetic.
//!
//! An order-`k` jet lives in `R[e_0, .., e_{k-1}] / (e_i^2)`. Its `2^k`
//! coefficients are indexed by [`LevelSet`]s, i.e. subsets of the nilpotent
//! levels. A [`JetPoint`] is a vector of such jets sharing one order and is
//! the concrete carrier of `T^k(R^n)`.
//!
//! Storage is flat: the component for level set `S` of an `n`-dimensional
//! jet point occupies `coeffs[S * n .. (S + 1) * n]`. With this layout the
//! flat vector of an order-`k` point over `R^{2n}` is bit-for-bit the flat
//! vector of an order-`k + 1` point over `R^n`, which is how `T^k(TM)` and
//! `T^{k+1}M` are identified throughout the crate.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest jet order the engine accepts.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("jet order {order} exceeds the supported maximum {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error("expected {expected} coefficients, found {found}")]
    CoefficientCount { expected: usize, found: usize },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("{primitive} is undefined at base value {base}")]
    Domain { primitive: Primitive, base: f64 },
    #[error("level {level} out of range for order {order}")]
    LevelOutOfRange { level: usize, order: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("{primitive} has no exact rational evaluation")]
    Inexact { primitive: Primitive },
}

/// Scalar primitives that lift to jets by the top-level recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    /// `u -> 1/u`, used for division.
    Recip,
}

impl Primitive {
    /// Primitives callable by name from the expression language.
    pub const CALLABLE: [Primitive; 6] = [
        Primitive::Sin,
        Primitive::Cos,
        Primitive::Exp,
        Primitive::Log,
        Primitive::Sqrt,
        Primitive::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Sin => "sin",
            Primitive::Cos => "cos",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Sqrt => "sqrt",
            Primitive::Tanh => "tanh",
            Primitive::Recip => "recip",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Self::CALLABLE.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A coefficient of a structural (affine) map, kept both exactly and as a
/// double so that either scalar mode can read it without conversion cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeff {
    exact: BigRational,
    approx: f64,
}

impl Coeff {
    pub fn new(exact: BigRational) -> Self {
        let approx = ToPrimitive::to_f64(&exact).unwrap_or(f64::NAN);
        Coeff { exact, approx }
    }

    pub(crate) fn with_approx(exact: BigRational, approx: f64) -> Self {
        Coeff { exact, approx }
    }

    pub fn int(v: i64) -> Self {
        Coeff::new(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    pub fn approx(&self) -> f64 {
        self.approx
    }

    pub fn is_zero(&self) -> bool {
        Zero::is_zero(&self.exact)
    }
}

/// Field of coefficients the jet engine runs over: `f64` for numerical work,
/// [`BigRational`] for exact checks of affine identities.
pub trait Scalar: Clone + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_coeff(c: &Coeff) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_finite(&self) -> bool;
    fn to_f64(&self) -> f64;
    /// Order-zero evaluation of a primitive, with domain checking.
    fn primitive(p: Primitive, x: &Self) -> Result<Self, JetError>;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_coeff(c: &Coeff) -> Self {
        c.approx
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn primitive(p: Primitive, x: &Self) -> Result<Self, JetError> {
        let x = *x;
        let domain = || JetError::Domain {
            primitive: p,
            base: x,
        };
        let y = match p {
            Primitive::Sin => x.sin(),
            Primitive::Cos => x.cos(),
            Primitive::Exp => x.exp(),
            Primitive::Log if x > 0.0 => x.ln(),
            Primitive::Sqrt if x >= 0.0 => x.sqrt(),
            Primitive::Tanh => x.tanh(),
            Primitive::Recip if x != 0.0 => 1.0 / x,
            _ => return Err(domain()),
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(JetError::NonFinite)
        }
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_coeff(c: &Coeff) -> Self {
        c.exact.clone()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_finite(&self) -> bool {
        true
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn primitive(p: Primitive, x: &Self) -> Result<Self, JetError> {
        match p {
            Primitive::Recip if !Zero::is_zero(x) => Ok(x.recip()),
            Primitive::Recip => Err(JetError::Domain {
                primitive: p,
                base: 0.0,
            }),
            _ => Err(JetError::Inexact { primitive: p }),
        }
    }
}

/// A subset of the ε-levels `{0, .., k-1}`, encoded as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelSet(u8);

impl LevelSet {
    pub const EMPTY: LevelSet = LevelSet(0);

    /// Builds a level set, rejecting bits at or above `order`.
    pub fn new(bits: u8, order: usize) -> Result<Self, JetError> {
        if order > MAX_ORDER {
            return Err(JetError::OrderTooHigh {
                order,
                max: MAX_ORDER,
            });
        }
        if (bits as usize) >> order != 0 {
            let level = 7 - bits.leading_zeros() as usize;
            return Err(JetError::LevelOutOfRange { level, order });
        }
        Ok(LevelSet(bits))
    }

    pub fn single(level: usize) -> Self {
        LevelSet(1 << level)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn contains(self, level: usize) -> bool {
        self.0 >> level & 1 == 1
    }

    pub fn with(self, level: usize) -> Self {
        LevelSet(self.0 | 1 << level)
    }

    pub fn without(self, level: usize) -> Self {
        LevelSet(self.0 & !(1 << level))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_disjoint(self, other: LevelSet) -> bool {
        self.0 & other.0 == 0
    }

    /// All `2^order` level sets in increasing bitmask order.
    pub fn all(order: usize) -> impl Iterator<Item = LevelSet> {
        (0..1u16 << order).map(|b| LevelSet(b as u8))
    }

    /// Image under the level permutation `perm` (level `i` goes to `perm[i]`).
    pub fn permute(self, perm: &[usize]) -> LevelSet {
        let mut out = 0u8;
        for (i, &target) in perm.iter().enumerate() {
            if self.contains(i) {
                out |= 1 << target;
            }
        }
        LevelSet(out)
    }

    /// Image under the transposition of levels `i` and `j`.
    pub fn swap(self, i: usize, j: usize) -> LevelSet {
        let bi = self.contains(i);
        let bj = self.contains(j);
        let cleared = self.without(i).without(j);
        let mut out = cleared;
        if bi {
            out = out.with(j);
        }
        if bj {
            out = out.with(i);
        }
        out
    }
}

fn check_order(order: usize) -> Result<(), JetError> {
    if order > MAX_ORDER {
        Err(JetError::OrderTooHigh {
            order,
            max: MAX_ORDER,
        })
    } else {
        Ok(())
    }
}

/// An element of `T^k(R)`: `2^k` coefficients indexed by level sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJet<S: Scalar = f64> {
    order: usize,
    coeffs: Vec<S>,
}

impl<S: Scalar> ScalarJet<S> {
    pub fn new(order: usize, coeffs: Vec<S>) -> Result<Self, JetError> {
        check_order(order)?;
        if coeffs.len() != 1 << order {
            return Err(JetError::CoefficientCount {
                expected: 1 << order,
                found: coeffs.len(),
            });
        }
        if !coeffs.iter().all(Scalar::is_finite) {
            return Err(JetError::NonFinite);
        }
        Ok(ScalarJet { order, coeffs })
    }

    pub fn constant(order: usize, value: S) -> Self {
        let mut coeffs = vec![S::zero(); 1 << order];
        coeffs[0] = value;
        ScalarJet { order, coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self::constant(order, S::zero())
    }

    pub fn unit(order: usize) -> Self {
        Self::constant(order, S::one())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeff(&self, s: LevelSet) -> &S {
        &self.coeffs[s.index()]
    }

    /// The coefficient of the empty level set.
    pub fn base(&self) -> &S {
        &self.coeffs[0]
    }

    fn same_order(&self, other: &Self) -> Result<(), JetError> {
        if self.order != other.order {
            Err(JetError::OrderMismatch {
                left: self.order,
                right: other.order,
            })
        } else {
            Ok(())
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, JetError> {
        self.same_order(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(ScalarJet {
            order: self.order,
            coeffs,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, JetError> {
        self.same_order(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.sub(b))
            .collect();
        Ok(ScalarJet {
            order: self.order,
            coeffs,
        })
    }

    pub fn neg(&self) -> Self {
        ScalarJet {
            order: self.order,
            coeffs: self.coeffs.iter().map(Scalar::neg).collect(),
        }
    }

    pub fn scale(&self, c: &S) -> Self {
        ScalarJet {
            order: self.order,
            coeffs: self.coeffs.iter().map(|a| a.mul(c)).collect(),
        }
    }

    /// Product in the truncated algebra: `(ab)_S = sum over A ⊔ B = S of a_A b_B`.
    pub fn mul(&self, other: &Self) -> Result<Self, JetError> {
        self.same_order(other)?;
        let size = self.coeffs.len();
        let mut coeffs = vec![S::zero(); size];
        for (s, slot) in coeffs.iter_mut().enumerate() {
            // Walk every submask `a` of `s`; the complement within `s` is `s ^ a`.
            let mut a = s;
            loop {
                let term = self.coeffs[a].mul(&other.coeffs[s ^ a]);
                *slot = slot.add(&term);
                if a == 0 {
                    break;
                }
                a = (a - 1) & s;
            }
        }
        Ok(ScalarJet {
            order: self.order,
            coeffs,
        })
    }

    /// Splits `p + e_top * q` into `(p, q)`, both of order `k - 1`.
    fn split_top(&self) -> (Self, Self) {
        let half = self.coeffs.len() / 2;
        let lower = ScalarJet {
            order: self.order - 1,
            coeffs: self.coeffs[..half].to_vec(),
        };
        let upper = ScalarJet {
            order: self.order - 1,
            coeffs: self.coeffs[half..].to_vec(),
        };
        (lower, upper)
    }

    fn join_top(lower: Self, upper: Self) -> Self {
        let mut coeffs = lower.coeffs;
        coeffs.extend(upper.coeffs);
        ScalarJet {
            order: lower.order + 1,
            coeffs,
        }
    }

    /// Lifts a scalar primitive: `f(p + e q) = f(p) + e f'(p) q` on the top level.
    pub fn primitive(&self, f: Primitive) -> Result<Self, JetError> {
        if self.order == 0 {
            return Ok(ScalarJet {
                order: 0,
                coeffs: vec![S::primitive(f, &self.coeffs[0])?],
            });
        }
        // sqrt has no derivative at 0, 1/u has none at 0 either.
        if matches!(f, Primitive::Sqrt) && self.coeffs[0].is_zero() {
            return Err(JetError::Domain {
                primitive: f,
                base: 0.0,
            });
        }
        let (p, q) = self.split_top();
        let fp = p.primitive(f)?;
        let dfp = derivative(f, &p, &fp)?;
        let upper = dfp.mul(&q)?;
        Ok(Self::join_top(fp, upper))
    }
}

/// Closed-form derivative `f'(p)`, reusing `fp = f(p)` where that helps.
fn derivative<S: Scalar>(
    f: Primitive,
    p: &ScalarJet<S>,
    fp: &ScalarJet<S>,
) -> Result<ScalarJet<S>, JetError> {
    let order = p.order;
    match f {
        Primitive::Sin => p.primitive(Primitive::Cos),
        Primitive::Cos => Ok(p.primitive(Primitive::Sin)?.neg()),
        Primitive::Exp => Ok(fp.clone()),
        Primitive::Log => p.primitive(Primitive::Recip),
        Primitive::Sqrt => {
            let two = S::one().add(&S::one());
            fp.scale(&two).primitive(Primitive::Recip)
        }
        Primitive::Tanh => ScalarJet::unit(order).sub(&fp.mul(fp)?),
        Primitive::Recip => Ok(fp.mul(fp)?.neg()),
    }
}

pub fn jet_add<S: Scalar>(a: &ScalarJet<S>, b: &ScalarJet<S>) -> Result<ScalarJet<S>, JetError> {
    a.add(b)
}

pub fn jet_mul<S: Scalar>(a: &ScalarJet<S>, b: &ScalarJet<S>) -> Result<ScalarJet<S>, JetError> {
    a.mul(b)
}

pub fn jet_primitive<S: Scalar>(f: Primitive, a: &ScalarJet<S>) -> Result<ScalarJet<S>, JetError> {
    a.primitive(f)
}

/// An order-`k` iterated tangent vector over `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoint<S: Scalar = f64> {
    order: usize,
    dim: usize,
    coeffs: Vec<S>,
}

impl<S: Scalar> JetPoint<S> {
    /// Builds a point from its flat coefficient vector (component-major).
    pub fn new(order: usize, dim: usize, coeffs: Vec<S>) -> Result<Self, JetError> {
        check_order(order)?;
        let expected = (1 << order) * dim;
        if coeffs.len() != expected {
            return Err(JetError::CoefficientCount {
                expected,
                found: coeffs.len(),
            });
        }
        if !coeffs.iter().all(Scalar::is_finite) {
            return Err(JetError::NonFinite);
        }
        Ok(JetPoint { order, dim, coeffs })
    }

    /// An order-zero point of `R^n`.
    pub fn point(coords: Vec<S>) -> Result<Self, JetError> {
        let dim = coords.len();
        Self::new(0, dim, coords)
    }

    pub fn from_components(order: usize, components: Vec<Vec<S>>) -> Result<Self, JetError> {
        check_order(order)?;
        if components.len() != 1 << order {
            return Err(JetError::CoefficientCount {
                expected: 1 << order,
                found: components.len(),
            });
        }
        let dim = components.first().map_or(0, Vec::len);
        if let Some(bad) = components.iter().find(|c| c.len() != dim) {
            return Err(JetError::DimMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(order, dim, components.into_iter().flatten().collect())
    }

    pub fn from_scalars(order: usize, scalars: &[ScalarJet<S>]) -> Result<Self, JetError> {
        let dim = scalars.len();
        let mut coeffs = vec![S::zero(); (1 << order) * dim];
        for (i, s) in scalars.iter().enumerate() {
            if s.order != order {
                return Err(JetError::OrderMismatch {
                    left: order,
                    right: s.order,
                });
            }
            for (c, v) in s.coeffs.iter().enumerate() {
                coeffs[c * dim + i] = v.clone();
            }
        }
        Ok(JetPoint { order, dim, coeffs })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<S> {
        self.coeffs
    }

    pub fn component(&self, s: LevelSet) -> &[S] {
        let i = s.index();
        &self.coeffs[i * self.dim..(i + 1) * self.dim]
    }

    /// The jet of coordinate `i` across all components.
    pub fn scalar(&self, i: usize) -> ScalarJet<S> {
        let coeffs = (0..1 << self.order)
            .map(|c| self.coeffs[c * self.dim + i].clone())
            .collect();
        ScalarJet {
            order: self.order,
            coeffs,
        }
    }

    /// The same coefficients read as an order-zero point of `R^{2^k n}`.
    pub fn flatten(&self) -> JetPoint<S> {
        JetPoint {
            order: 0,
            dim: self.coeffs.len(),
            coeffs: self.coeffs.clone(),
        }
    }

    /// Reinterprets the flat vector with a different order/dimension split.
    pub fn regroup(&self, order: usize, dim: usize) -> Result<JetPoint<S>, JetError> {
        JetPoint::new(order, dim, self.coeffs.clone())
    }

    pub fn add(&self, other: &Self) -> Result<Self, JetError> {
        if self.order != other.order {
            return Err(JetError::OrderMismatch {
                left: self.order,
                right: other.order,
            });
        }
        if self.dim != other.dim {
            return Err(JetError::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(JetPoint {
            order: self.order,
            dim: self.dim,
            coeffs,
        })
    }

    /// Moves the component at `S` to `perm(S)`; `perm[i]` is the new level of level `i`.
    pub fn permute_levels(&self, perm: &[usize]) -> Result<Self, JetError> {
        if perm.len() != self.order {
            return Err(JetError::CoefficientCount {
                expected: self.order,
                found: perm.len(),
            });
        }
        let mut seen = 0u8;
        for &p in perm {
            if p >= self.order {
                return Err(JetError::LevelOutOfRange {
                    level: p,
                    order: self.order,
                });
            }
            seen |= 1 << p;
        }
        if seen.count_ones() as usize != self.order {
            return Err(JetError::LevelOutOfRange {
                level: perm.len(),
                order: self.order,
            });
        }
        let mut coeffs = vec![S::zero(); self.coeffs.len()];
        for s in LevelSet::all(self.order) {
            let t = s.permute(perm).index();
            coeffs[t * self.dim..(t + 1) * self.dim].clone_from_slice(self.component(s));
        }
        Ok(JetPoint {
            order: self.order,
            dim: self.dim,
            coeffs,
        })
    }

    /// Coordinate form of the canonical flip on levels `i` and `j`.
    pub fn swap_levels(&self, i: usize, j: usize) -> Result<Self, JetError> {
        for level in [i, j] {
            if level >= self.order {
                return Err(JetError::LevelOutOfRange {
                    level,
                    order: self.order,
                });
            }
        }
        let mut perm: Vec<usize> = (0..self.order).collect();
        perm.swap(i, j);
        self.permute_levels(&perm)
    }

    /// Reads an order-`k` point over `R^{2p}` as an order-`k+1` point over `R^p`:
    /// the first half of every component stays on its level set, the second
    /// half moves to the same set plus the new top level `k`.
    pub fn unpack_pairs(&self) -> Result<Self, JetError> {
        if !self.dim.is_multiple_of(2) {
            return Err(JetError::DimMismatch {
                expected: self.dim + 1,
                found: self.dim,
            });
        }
        check_order(self.order + 1)?;
        let half = self.dim / 2;
        let top = 1 << self.order;
        let mut coeffs = vec![S::zero(); self.coeffs.len()];
        for s in 0..top {
            let src = &self.coeffs[s * self.dim..(s + 1) * self.dim];
            coeffs[s * half..(s + 1) * half].clone_from_slice(&src[..half]);
            coeffs[(s + top) * half..(s + top + 1) * half].clone_from_slice(&src[half..]);
        }
        Ok(JetPoint {
            order: self.order + 1,
            dim: half,
            coeffs,
        })
    }

    /// Inverse of [`JetPoint::unpack_pairs`].
    pub fn pack_pairs(&self) -> Result<Self, JetError> {
        if self.order == 0 {
            return Err(JetError::LevelOutOfRange { level: 0, order: 0 });
        }
        let top = 1 << (self.order - 1);
        let dim = self.dim * 2;
        let mut coeffs = vec![S::zero(); self.coeffs.len()];
        for s in 0..top {
            let dst = &mut coeffs[s * dim..(s + 1) * dim];
            dst[..self.dim].clone_from_slice(&self.coeffs[s * self.dim..(s + 1) * self.dim]);
            dst[self.dim..]
                .clone_from_slice(&self.coeffs[(s + top) * self.dim..(s + top + 1) * self.dim]);
        }
        Ok(JetPoint {
            order: self.order - 1,
            dim,
            coeffs,
        })
    }
}

impl JetPoint<f64> {
    pub fn to_vec(&self) -> Vec<f64> {
        self.coeffs.clone()
    }
}
