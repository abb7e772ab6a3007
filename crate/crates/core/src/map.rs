//! Smooth maps `R^p -> R^q` and their evaluation over jets.
//!
//! Evaluating a map at an order-`k` [`JetPoint`] computes `T^k(f)` at that
//! point. The tangent lift `T(f)` is not a source transform: evaluating it at
//! order `k` unpacks its `(x, v)` argument onto a new top ε-level and
//! evaluates `f` at order `k + 1`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{parse_components, Expr, ParseError};
use crate::jet::{Coeff, JetError, JetPoint, Scalar, MAX_ORDER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("cannot compose: first map has output dimension {out_dim}, second has input dimension {in_dim}")]
    Compose { out_dim: usize, in_dim: usize },
    #[error("pairing requires equal input dimensions, found {left} and {right}")]
    Pair { left: usize, right: usize },
    #[error("pairing needs at least one map")]
    EmptyPair,
    #[error("affine map row {row} references input {index} of {in_dim}")]
    AffineIndex {
        row: usize,
        index: usize,
        in_dim: usize,
    },
    #[error(
        "expression component {component} references x{index} but the input dimension is {in_dim}"
    )]
    Arity {
        component: usize,
        index: usize,
        in_dim: usize,
    },
}

/// Where a map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Parsed,
    Structural,
    TangentLift,
    Composite,
}

/// `y_r = offset_r + sum_j coeff_{rj} x_j`, stored sparsely by row.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    in_dim: usize,
    rows: Vec<Vec<(usize, Coeff)>>,
    offset: Vec<Option<Coeff>>,
}

impl AffineMap {
    pub fn new(
        in_dim: usize,
        rows: Vec<Vec<(usize, Coeff)>>,
        offset: Vec<Option<Coeff>>,
    ) -> Result<Self, MapError> {
        for (row, terms) in rows.iter().enumerate() {
            if let Some(&(index, _)) = terms.iter().find(|(j, _)| *j >= in_dim) {
                return Err(MapError::AffineIndex { row, index, in_dim });
            }
        }
        let mut offset = offset;
        offset.resize(rows.len(), None);
        Ok(AffineMap {
            in_dim,
            rows,
            offset,
        })
    }

    /// A coordinate selection: output `r` copies input `source[r]`, or is zero.
    pub fn selection(in_dim: usize, source: &[Option<usize>]) -> Result<Self, MapError> {
        let rows = source
            .iter()
            .map(|s| s.map(|j| vec![(j, Coeff::int(1))]).unwrap_or_default())
            .collect();
        Self::new(in_dim, rows, Vec::new())
    }

    pub fn out_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, Coeff)>] {
        &self.rows
    }

    fn eval<S: Scalar>(&self, p: &JetPoint<S>) -> Result<JetPoint<S>, JetError> {
        let n_in = p.dim();
        let n_out = self.rows.len();
        let comps = 1usize << p.order();
        let coeffs: Vec<Vec<(usize, S)>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|(j, c)| (*j, S::from_coeff(c))).collect())
            .collect();
        let src = p.coeffs();
        let mut out = Vec::with_capacity(comps * n_out);
        for c in 0..comps {
            let block = &src[c * n_in..(c + 1) * n_in];
            for (r, terms) in coeffs.iter().enumerate() {
                let mut acc = match (&self.offset[r], c) {
                    (Some(o), 0) => S::from_coeff(o),
                    _ => S::zero(),
                };
                for (j, k) in terms {
                    acc = acc.add(&k.mul(&block[*j]));
                }
                out.push(acc);
            }
        }
        JetPoint::new(p.order(), n_out, out)
    }
}

#[derive(Debug)]
enum Kind {
    Identity,
    Parsed(Vec<Expr>),
    Affine(AffineMap),
    TangentLift(SmoothMap),
    /// First map, then second.
    Compose(SmoothMap, SmoothMap),
    /// Same input, outputs concatenated.
    Pair(Vec<SmoothMap>),
}

#[derive(Debug)]
struct Inner {
    in_dim: usize,
    out_dim: usize,
    kind: Kind,
    label: Option<String>,
}

/// An immutable smooth map; cloning shares the underlying tree.
#[derive(Debug, Clone)]
pub struct SmoothMap(Arc<Inner>);

impl SmoothMap {
    fn build(in_dim: usize, out_dim: usize, kind: Kind) -> Self {
        SmoothMap(Arc::new(Inner {
            in_dim,
            out_dim,
            kind,
            label: None,
        }))
    }

    /// Parses `source` (components separated by `;`).
    pub fn parse(source: &str, in_dim: usize, out_dim: usize) -> Result<Self, ParseError> {
        let body = parse_components(source, in_dim, out_dim)?;
        Ok(Self::build(in_dim, out_dim, Kind::Parsed(body)))
    }

    /// Builds a map from already constructed expressions.
    pub fn from_exprs(in_dim: usize, body: Vec<Expr>) -> Result<Self, MapError> {
        for (component, e) in body.iter().enumerate() {
            if let Some(index) = e.max_var().filter(|&i| i >= in_dim) {
                return Err(MapError::Arity {
                    component,
                    index,
                    in_dim,
                });
            }
        }
        let out_dim = body.len();
        Ok(Self::build(in_dim, out_dim, Kind::Parsed(body)))
    }

    pub fn identity(n: usize) -> Self {
        Self::build(n, n, Kind::Identity)
    }

    pub fn affine(map: AffineMap) -> Self {
        let out = map.out_dim();
        Self::build(map.in_dim, out, Kind::Affine(map))
    }

    /// Attaches a display label (used for structural maps).
    pub fn labelled(self, label: impl Into<String>) -> Self {
        let inner = Arc::try_unwrap(self.0).unwrap_or_else(|arc| Inner {
            in_dim: arc.in_dim,
            out_dim: arc.out_dim,
            kind: match &arc.kind {
                Kind::Identity => Kind::Identity,
                Kind::Parsed(b) => Kind::Parsed(b.clone()),
                Kind::Affine(a) => Kind::Affine(a.clone()),
                Kind::TangentLift(f) => Kind::TangentLift(f.clone()),
                Kind::Compose(f, g) => Kind::Compose(f.clone(), g.clone()),
                Kind::Pair(fs) => Kind::Pair(fs.clone()),
            },
            label: arc.label.clone(),
        });
        SmoothMap(Arc::new(Inner {
            label: Some(label.into()),
            ..inner
        }))
    }

    pub fn in_dim(&self) -> usize {
        self.0.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.0.out_dim
    }

    pub fn provenance(&self) -> Provenance {
        match &self.0.kind {
            Kind::Parsed(_) => Provenance::Parsed,
            Kind::Identity | Kind::Affine(_) => Provenance::Structural,
            Kind::TangentLift(_) => Provenance::TangentLift,
            Kind::Compose(..) | Kind::Pair(_) => Provenance::Composite,
        }
    }

    /// True when every leaf is an identity or affine index map.
    pub fn is_structural(&self) -> bool {
        match &self.0.kind {
            Kind::Identity | Kind::Affine(_) => true,
            Kind::Parsed(_) => false,
            Kind::TangentLift(f) => f.is_structural(),
            Kind::Compose(f, g) => f.is_structural() && g.is_structural(),
            Kind::Pair(fs) => fs.iter().all(SmoothMap::is_structural),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.0.kind, Kind::Identity)
    }

    /// The component expressions of a parsed map.
    pub fn exprs(&self) -> Option<&[Expr]> {
        match &self.0.kind {
            Kind::Parsed(b) => Some(b),
            _ => None,
        }
    }

    /// The affine data of a structural map, if it is one.
    pub fn as_affine(&self) -> Option<&AffineMap> {
        match &self.0.kind {
            Kind::Affine(a) => Some(a),
            _ => None,
        }
    }

    /// `T(f)`: dimensions double; argument `(x, v)` maps to `(f(x), Df(x) v)`.
    pub fn tangent_lift(&self) -> Self {
        match &self.0.kind {
            Kind::Identity => Self::identity(2 * self.in_dim()),
            _ => Self::build(
                2 * self.in_dim(),
                2 * self.out_dim(),
                Kind::TangentLift(self.clone()),
            ),
        }
    }

    /// `T^k(f)`.
    pub fn tangent_power(&self, k: usize) -> Self {
        (0..k).fold(self.clone(), |f, _| f.tangent_lift())
    }

    /// Diagrammatic composite: `self` first, then `next`.
    pub fn then(&self, next: &SmoothMap) -> Result<Self, MapError> {
        if self.out_dim() != next.in_dim() {
            return Err(MapError::Compose {
                out_dim: self.out_dim(),
                in_dim: next.in_dim(),
            });
        }
        if self.is_identity() {
            return Ok(next.clone());
        }
        if next.is_identity() {
            return Ok(self.clone());
        }
        Ok(Self::build(
            self.in_dim(),
            next.out_dim(),
            Kind::Compose(self.clone(), next.clone()),
        ))
    }

    /// Composite of a whole chain, left to right.
    pub fn chain(maps: &[&SmoothMap]) -> Result<Self, MapError> {
        let (first, rest) = maps.split_first().ok_or(MapError::EmptyPair)?;
        rest.iter().try_fold((*first).clone(), |acc, m| acc.then(m))
    }

    /// `<f_1, .., f_m>`: shared input, outputs concatenated.
    pub fn pair(maps: &[SmoothMap]) -> Result<Self, MapError> {
        let first = maps.first().ok_or(MapError::EmptyPair)?;
        if let Some(bad) = maps.iter().find(|m| m.in_dim() != first.in_dim()) {
            return Err(MapError::Pair {
                left: first.in_dim(),
                right: bad.in_dim(),
            });
        }
        if maps.len() == 1 {
            return Ok(first.clone());
        }
        let out = maps.iter().map(SmoothMap::out_dim).sum();
        Ok(Self::build(first.in_dim(), out, Kind::Pair(maps.to_vec())))
    }

    /// `f × g` acting on the split input `(x, y)`.
    pub fn product(f: &SmoothMap, g: &SmoothMap) -> Result<Self, MapError> {
        let n = f.in_dim() + g.in_dim();
        let left: Vec<_> = (0..f.in_dim()).map(Some).collect();
        let right: Vec<_> = (f.in_dim()..n).map(Some).collect();
        let pl = SmoothMap::affine(AffineMap::selection(n, &left)?);
        let pr = SmoothMap::affine(AffineMap::selection(n, &right)?);
        Self::pair(&[pl.then(f)?, pr.then(g)?])
    }

    /// Evaluates `T^k(f)` at an order-`k` point.
    pub fn eval_jet<S: Scalar>(&self, p: &JetPoint<S>) -> Result<JetPoint<S>, JetError> {
        if p.dim() != self.in_dim() {
            return Err(JetError::DimMismatch {
                expected: self.in_dim(),
                found: p.dim(),
            });
        }
        match &self.0.kind {
            Kind::Identity => Ok(p.clone()),
            Kind::Parsed(body) => {
                let order = p.order();
                let vars: Vec<_> = (0..p.dim()).map(|i| p.scalar(i)).collect();
                let outs = body
                    .iter()
                    .map(|e| e.eval(&vars, order))
                    .collect::<Result<Vec<_>, _>>()?;
                JetPoint::from_scalars(order, &outs)
            }
            Kind::Affine(a) => a.eval(p),
            Kind::TangentLift(f) => {
                if p.order() + 1 > MAX_ORDER {
                    return Err(JetError::OrderTooHigh {
                        order: p.order() + 1,
                        max: MAX_ORDER,
                    });
                }
                f.eval_jet(&p.unpack_pairs()?)?.pack_pairs()
            }
            Kind::Compose(f, g) => g.eval_jet(&f.eval_jet(p)?),
            Kind::Pair(fs) => {
                let outs = fs
                    .iter()
                    .map(|f| f.eval_jet(p))
                    .collect::<Result<Vec<_>, _>>()?;
                let comps = 1usize << p.order();
                let dim = self.out_dim();
                let mut coeffs = Vec::with_capacity(comps * dim);
                for c in 0..comps {
                    for o in &outs {
                        coeffs.extend_from_slice(&o.coeffs()[c * o.dim()..(c + 1) * o.dim()]);
                    }
                }
                JetPoint::new(p.order(), dim, coeffs)
            }
        }
    }

    /// Plain evaluation at a point of `R^p`.
    pub fn eval_point<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>, JetError> {
        Ok(self.eval_jet(&JetPoint::point(x.to_vec())?)?.into_coeffs())
    }
}

impl fmt::Display for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(label) = &self.0.label {
            return f.write_str(label);
        }
        match &self.0.kind {
            Kind::Identity => write!(f, "id{}", self.in_dim()),
            Kind::Parsed(body) => {
                for (i, e) in body.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{e}")?;
                }
                Ok(())
            }
            Kind::Affine(a) => write!(f, "affine[{}->{}]", a.in_dim, a.out_dim()),
            Kind::TangentLift(g) => write!(f, "T({g})"),
            Kind::Compose(g, h) => write!(f, "({g} ; {h})"),
            Kind::Pair(gs) => {
                f.write_str("<")?;
                for (i, g) in gs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{g}")?;
                }
                f.write_str(">")
            }
        }
    }
}

/// Free-function form of [`SmoothMap::parse`].
pub fn parse_map(source: &str, in_dim: usize, out_dim: usize) -> Result<SmoothMap, ParseError> {
    SmoothMap::parse(source, in_dim, out_dim)
}

/// Free-function form of [`SmoothMap::eval_jet`].
pub fn eval_jet<S: Scalar>(f: &SmoothMap, p: &JetPoint<S>) -> Result<JetPoint<S>, JetError> {
    f.eval_jet(p)
}

/// Free-function form of [`SmoothMap::tangent_lift`].
pub fn tangent_lift(f: &SmoothMap) -> SmoothMap {
    f.tangent_lift()
}

/// `f` first, then `g`.
pub fn compose(f: &SmoothMap, g: &SmoothMap) -> Result<SmoothMap, MapError> {
    f.then(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jp(order: usize, dim: usize, c: &[f64]) -> JetPoint {
        JetPoint::new(order, dim, c.to_vec()).unwrap()
    }

    #[test]
    fn parse_examples() {
        let sq = parse_map("x0^2", 1, 1).unwrap();
        assert_eq!(sq.eval_point(&[3.0]).unwrap(), vec![9.0]);
        let swap = parse_map("x1; x0", 2, 2).unwrap();
        assert_eq!(swap.eval_point(&[1.0, 2.0]).unwrap(), vec![2.0, 1.0]);
        assert!(matches!(
            parse_map("x2", 2, 1),
            Err(ParseError::VariableOutOfRange { index: 2, .. })
        ));
    }

    #[test]
    fn eval_jet_examples() {
        let sq = parse_map("x0^2", 1, 1).unwrap();
        assert_eq!(
            sq.eval_jet(&jp(1, 1, &[3., 1.])).unwrap().coeffs(),
            &[9., 6.]
        );
        // T^2 f (x,v,w,a) = (x^2, 2xv, 2xw, 2xa + 2vw)
        assert_eq!(
            sq.eval_jet(&jp(2, 1, &[1., 2., 3., 4.])).unwrap().coeffs(),
            &[1., 4., 6., 20.]
        );
        let id = SmoothMap::identity(1);
        let j = jp(2, 1, &[1., 2., 3., 4.]);
        assert_eq!(id.eval_jet(&j).unwrap(), j);
    }

    #[test]
    fn tangent_lift_examples() {
        let id = SmoothMap::identity(1).tangent_lift();
        assert_eq!((id.in_dim(), id.out_dim()), (2, 2));
        assert!(id.is_identity());
        let sq = parse_map("x0^2", 1, 1).unwrap();
        let t = sq.tangent_lift();
        assert_eq!(t.eval_point(&[3.0, 1.0]).unwrap(), vec![9.0, 6.0]);
        let tt = t.tangent_lift();
        assert_eq!(
            tt.eval_point(&[1., 2., 3., 4.]).unwrap(),
            vec![1., 4., 6., 20.]
        );
    }

    #[test]
    fn lifting_past_max_order_fails_at_eval() {
        let sq = parse_map("x0^2", 1, 1).unwrap();
        let t5 = sq.tangent_power(5);
        let x = vec![0.5; 32];
        assert!(matches!(
            t5.eval_point(&x),
            Err(JetError::OrderTooHigh { .. })
        ));
        assert!(sq.tangent_power(4).eval_point(&x[..16]).is_ok());
    }

    #[test]
    fn compose_examples() {
        let sq = parse_map("x0^2", 1, 1).unwrap();
        let inc = parse_map("x0 + 1", 1, 1).unwrap();
        assert_eq!(
            compose(&sq, &inc).unwrap().eval_point(&[2.0]).unwrap(),
            vec![5.0]
        );
        let x = parse_map("x0", 1, 1).unwrap();
        let p = SmoothMap::pair(&[x.clone(), x]).unwrap();
        assert_eq!(p.eval_point(&[3.0]).unwrap(), vec![3.0, 3.0]);
        let bad = parse_map("x0; x0", 1, 2).unwrap();
        assert_eq!(
            compose(&bad, &sq).unwrap_err(),
            MapError::Compose {
                out_dim: 2,
                in_dim: 1
            }
        );
        assert!(eval_jet(&sq, &jp(0, 2, &[1., 2.])).is_err());
    }

    #[test]
    fn pair_keeps_component_layout() {
        let f = parse_map("x0; 2*x0", 1, 2).unwrap();
        let g = parse_map("x0^2", 1, 1).unwrap();
        let p = SmoothMap::pair(&[f, g]).unwrap();
        let out = p.eval_jet(&jp(1, 1, &[3., 1.])).unwrap();
        assert_eq!(out.dim(), 3);
        assert_eq!(out.coeffs(), &[3., 6., 9., 1., 2., 6.]);
    }

    #[test]
    fn affine_offset_only_touches_base() {
        let a =
            AffineMap::new(1, vec![vec![(0, Coeff::int(3))]], vec![Some(Coeff::int(7))]).unwrap();
        let f = SmoothMap::affine(a);
        let out = f.eval_jet(&jp(1, 1, &[1., 2.])).unwrap();
        assert_eq!(out.coeffs(), &[10., 6.]);
        assert!(AffineMap::selection(2, &[Some(2)]).is_err());
    }

    #[test]
    fn product_splits_input() {
        let sq = parse_map("x0^2", 1, 1).unwrap();
        let inc = parse_map("x0 + 1", 1, 1).unwrap();
        let p = SmoothMap::product(&sq, &inc).unwrap();
        assert_eq!(p.eval_point(&[3.0, 4.0]).unwrap(), vec![9.0, 5.0]);
    }
}
