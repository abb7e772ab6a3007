//! Connections on the tangent bundle of `R^n`.
//!
//! A connection is a map `K: T^2 M -> TM`. In Christoffel form
//! `K(x, v, w, a) = (x, a + Γ(x)(v, w))` with `Γ(x)(v, w)^l = Σ Γ^l_ij(x) v_i w_j`,
//! where `v` is the slot kept by `p_TM` and `w` the slot kept by `T(p)`.
//! Entries are stored flat at index `l·n² + i·n + j`.
//!
//! Operations that only need `K` work for any connection, including lifted
//! and pulled-back ones, through the bilinear form `G(x, v, w) = K(x, v, w, 0)`.

use thiserror::Error;

use crate::expr::{parse_components, Expr, ParseError};
use crate::jet::{Coeff, JetError, JetPoint};
use crate::map::{AffineMap, MapError, SmoothMap};
use crate::report::{check_fn, check_maps, LawOutcome, LawReport, SampleConfig};
use crate::tangent::{ell, fibre_merge, fibre_pair, flip, flip_n, mu_vl, p, pi, plus, zero};

#[derive(Debug, Error)]
pub enum ConnectionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("expected {expected} Christoffel entries for n = {n}, found {found}")]
    EntryCount {
        n: usize,
        expected: usize,
        found: usize,
    },
    #[error(
        "connection map must be {expected_in} -> {expected_out}, found {found_in} -> {found_out}"
    )]
    Shape {
        expected_in: usize,
        expected_out: usize,
        found_in: usize,
        found_out: usize,
    },
    #[error("maps are not mutually inverse ({law}): residual {residual:e} at {input:?}")]
    NotInverse {
        law: String,
        residual: f64,
        input: Vec<f64>,
    },
}

/// Christoffel symbols `Γ^l_ij` as a map `R^n -> R^{n³}`.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    n: usize,
    entries: Option<Vec<Expr>>,
    map: SmoothMap,
}

impl ChristoffelField {
    /// Parses `n³` entry expressions, each over `x0..x(n-1)`.
    pub fn parse<S: AsRef<str>>(n: usize, entries: &[S]) -> Result<Self, ConnectionError> {
        let expected = n * n * n;
        if entries.len() != expected {
            return Err(ConnectionError::EntryCount {
                n,
                expected,
                found: entries.len(),
            });
        }
        let exprs = entries
            .iter()
            .map(|s| parse_components(s.as_ref(), n, 1).map(|mut v| v.remove(0)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_exprs(n, exprs)
    }

    pub fn from_exprs(n: usize, entries: Vec<Expr>) -> Result<Self, ConnectionError> {
        let expected = n * n * n;
        if entries.len() != expected {
            return Err(ConnectionError::EntryCount {
                n,
                expected,
                found: entries.len(),
            });
        }
        let map = SmoothMap::from_exprs(n, entries.clone())?;
        Ok(ChristoffelField {
            n,
            entries: Some(entries),
            map,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self::from_exprs(n, vec![Expr::int(0); n * n * n]).expect("zero field")
    }

    pub fn constant(n: usize, value: i64) -> Self {
        Self::from_exprs(n, vec![Expr::int(value); n * n * n]).expect("constant field")
    }

    /// Zero everywhere except the listed `((l, i, j), expression)` entries.
    pub fn sparse(
        n: usize,
        nonzero: &[((usize, usize, usize), &str)],
    ) -> Result<Self, ConnectionError> {
        let mut src = vec!["0".to_string(); n * n * n];
        for &((l, i, j), e) in nonzero {
            src[index(n, l, i, j)] = e.to_string();
        }
        Self::parse(n, &src)
    }

    /// A field given directly by a map `R^n -> R^{n³}`.
    pub fn from_map(map: SmoothMap) -> Result<Self, ConnectionError> {
        let n = map.in_dim();
        if map.out_dim() != n * n * n {
            return Err(ConnectionError::EntryCount {
                n,
                expected: n * n * n,
                found: map.out_dim(),
            });
        }
        Ok(ChristoffelField {
            n,
            entries: None,
            map,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> Option<&[Expr]> {
        self.entries.as_deref()
    }

    pub fn map(&self) -> &SmoothMap {
        &self.map
    }

    pub fn at(&self, x: &[f64]) -> Result<Vec<f64>, JetError> {
        self.map.eval_point(x)
    }
}

/// Flat position of `Γ^l_ij`.
pub fn index(n: usize, l: usize, i: usize, j: usize) -> usize {
    (l * n + i) * n + j
}

fn select(in_dim: usize, rows: &[usize]) -> SmoothMap {
    let src: Vec<Option<usize>> = rows.iter().map(|&r| Some(r)).collect();
    SmoothMap::affine(AffineMap::selection(in_dim, &src).expect("selection in range"))
}

fn blocks(n: usize, in_blocks: usize, picks: &[usize]) -> SmoothMap {
    let rows: Vec<usize> = picks
        .iter()
        .flat_map(|b| (0..n).map(move |k| b * n + k))
        .collect();
    select(in_blocks * n, &rows)
}

/// `(x, v, w, a, g) -> ..` helper: output block `r` is `Σ sign·input block`.
fn signed_blocks(n: usize, in_blocks: usize, out: &[&[(usize, i64)]]) -> SmoothMap {
    let mut rows = Vec::new();
    for terms in out {
        for k in 0..n {
            rows.push(
                terms
                    .iter()
                    .map(|&(b, s)| (b * n + k, Coeff::int(s)))
                    .collect(),
            );
        }
    }
    SmoothMap::affine(AffineMap::new(in_blocks * n, rows, Vec::new()).expect("blocks in range"))
}

/// `(g, v, w, a) -> a + g(v, w)` with `g` flat in `l, i, j` order.
fn contraction(n: usize) -> SmoothMap {
    let n3 = n * n * n;
    let body = (0..n)
        .map(|l| {
            let mut acc = Expr::var(n3 + 2 * n + l);
            for i in 0..n {
                for j in 0..n {
                    let term = Expr::product(
                        Expr::product(Expr::var(index(n, l, i, j)), Expr::var(n3 + i)),
                        Expr::var(n3 + n + j),
                    );
                    acc = Expr::sum(acc, term);
                }
            }
            acc
        })
        .collect();
    SmoothMap::from_exprs(n3 + 3 * n, body).expect("contraction arity")
}

/// The Christoffel-form map `K` for a field, as expressions when available.
fn christoffel_k(field: &ChristoffelField) -> SmoothMap {
    let n = field.n;
    if let Some(entries) = &field.entries {
        let mut body: Vec<Expr> = (0..n).map(Expr::var).collect();
        for l in 0..n {
            let mut acc = Expr::var(3 * n + l);
            for i in 0..n {
                for j in 0..n {
                    let g = &entries[index(n, l, i, j)];
                    if g.is_zero_literal() {
                        continue;
                    }
                    let term = Expr::product(
                        Expr::product(g.clone(), Expr::var(n + i)),
                        Expr::var(2 * n + j),
                    );
                    acc = Expr::sum(acc, term);
                }
            }
            body.push(acc);
        }
        return SmoothMap::from_exprs(4 * n, body).expect("Christoffel map arity");
    }
    let gx = blocks(n, 4, &[0]).then(&field.map).expect("field on base");
    let fibre = SmoothMap::pair(&[gx, blocks(n, 4, &[1, 2, 3])])
        .and_then(|m| m.then(&contraction(n)))
        .expect("fibre part");
    SmoothMap::pair(&[blocks(n, 4, &[0]), fibre]).expect("K pairing")
}

/// A connection `K: T^2 R^n -> T R^n` with an optional horizontal connection.
#[derive(Debug, Clone)]
pub struct Connection {
    n: usize,
    k: SmoothMap,
    christoffel: Option<ChristoffelField>,
    h: Option<SmoothMap>,
}

impl Connection {
    /// Wraps an arbitrary `K`; only its shape is checked.
    pub fn from_map(n: usize, k: SmoothMap) -> Result<Self, ConnectionError> {
        if k.in_dim() != 4 * n || k.out_dim() != 2 * n {
            return Err(ConnectionError::Shape {
                expected_in: 4 * n,
                expected_out: 2 * n,
                found_in: k.in_dim(),
                found_out: k.out_dim(),
            });
        }
        Ok(Connection {
            n,
            k,
            christoffel: None,
            h: None,
        })
    }

    pub fn zero(n: usize) -> Self {
        connection_from_christoffel(&ChristoffelField::zero(n))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> &SmoothMap {
        &self.k
    }

    pub fn h(&self) -> Option<&SmoothMap> {
        self.h.as_ref()
    }

    pub fn source_field(&self) -> Option<&ChristoffelField> {
        self.christoffel.as_ref()
    }

    /// Replaces the horizontal connection.
    pub fn with_h(mut self, h: SmoothMap) -> Self {
        self.h = Some(h);
        self
    }

    /// Attaches the horizontal connection synthesized from `K`.
    pub fn with_horizontal(self) -> Self {
        let h = horizontal_from_vertical(&self);
        self.with_h(h)
    }

    /// `G(x, v, w) = K(x, v, w, 0)`, the fibre part only.
    pub fn bilinear_form(&self) -> SmoothMap {
        let n = self.n;
        let embed = signed_blocks(n, 3, &[&[(0, 1)], &[(1, 1)], &[(2, 1)], &[]]);
        SmoothMap::chain(&[&embed, &self.k, &blocks(n, 2, &[1])]).expect("bilinear form")
    }

    /// The Christoffel field: the source one, or one read off `K`.
    pub fn christoffel(&self) -> ChristoffelField {
        if let Some(f) = &self.christoffel {
            return f.clone();
        }
        let n = self.n;
        let g = self.bilinear_form();
        let mut parts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut rows: Vec<Vec<(usize, Coeff)>> =
                    (0..n).map(|k| vec![(k, Coeff::int(1))]).collect();
                rows.extend((0..2 * n).map(|_| Vec::new()));
                let mut offset = vec![None; 3 * n];
                offset[n + i] = Some(Coeff::int(1));
                offset[2 * n + j] = Some(Coeff::int(1));
                let inject = SmoothMap::affine(AffineMap::new(n, rows, offset).expect("injection"));
                parts.push(inject.then(&g).expect("inject then form"));
            }
        }
        // pairing yields (i, j, l) order; reorder to (l, i, j)
        let mut order = vec![0; n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    order[index(n, l, i, j)] = (i * n + j) * n + l;
                }
            }
        }
        let map = SmoothMap::pair(&parts)
            .and_then(|m| m.then(&select(n * n * n, &order)))
            .expect("field assembly");
        ChristoffelField::from_map(map).expect("field shape")
    }
}

/// `K(x, v, w, a) = (x, a + Γ(x)(v, w))`.
pub fn connection_from_christoffel(field: &ChristoffelField) -> Connection {
    Connection {
        n: field.n,
        k: christoffel_k(field),
        christoffel: Some(field.clone()),
        h: None,
    }
}

/// A dimension together with a connection on its tangent bundle.
#[derive(Debug, Clone)]
pub struct GeometricSpace {
    pub n: usize,
    pub connection: Connection,
}

impl GeometricSpace {
    pub fn new(connection: Connection) -> Self {
        GeometricSpace {
            n: connection.dim(),
            connection,
        }
    }

    pub fn flat(n: usize) -> Self {
        Self::new(Connection::zero(n))
    }

    pub fn from_christoffel(field: &ChristoffelField) -> Self {
        Self::new(connection_from_christoffel(field))
    }

    pub fn k(&self) -> &SmoothMap {
        self.connection.k()
    }
}

fn law(
    report: &mut LawReport,
    name: &str,
    lhs: Result<SmoothMap, MapError>,
    rhs: Result<SmoothMap, MapError>,
    cfg: &SampleConfig,
) {
    let out = match (lhs, rhs) {
        (Ok(l), Ok(r)) => check_maps(name, &l, &r, cfg),
        (Err(e), _) | (_, Err(e)) => LawOutcome::verdict(name, false, e.to_string()),
    };
    report.push(out);
}

fn ch(maps: &[&SmoothMap]) -> Result<SmoothMap, MapError> {
    SmoothMap::chain(maps)
}

/// `<T(p), p_TM, K>: T^2 M -> T_3 M`, `(x, v, w, a) -> (x, w, v, K)`.
pub fn fibre_product_map(c: &Connection) -> SmoothMap {
    let n = c.n;
    fibre_pair(&[p(n).tangent_lift(), p(2 * n), c.k.clone()], n).expect("fibre product")
}

/// `(x, u, v, k) -> (x, v, u, k - Γ(x)(v, u))`, inverse of [`fibre_product_map`].
pub fn fibre_product_inverse(c: &Connection) -> SmoothMap {
    let n = c.n;
    let swapped = signed_blocks(n, 4, &[&[(0, 1)], &[(2, 1)], &[(1, 1)], &[]]);
    let correction = swapped.then(&c.k).expect("K after swap");
    let both = SmoothMap::pair(&[SmoothMap::identity(4 * n), correction]).expect("pair");
    let combine = signed_blocks(n, 6, &[&[(0, 1)], &[(2, 1)], &[(1, 1)], &[(3, 1), (5, -1)]]);
    both.then(&combine).expect("inverse assembly")
}

/// Retraction, projection, lift and additivity laws of a vertical connection,
/// plus the fibre-product round trip.
pub fn verify_vertical_connection(c: &Connection, cfg: &SampleConfig) -> LawReport {
    let n = c.n;
    let k = &c.k;
    let tk = k.tangent_lift();
    let id = |d| SmoothMap::identity(d);
    let mut r = LawReport::new(format!("vertical-connection[n={n}]"));

    law(&mut r, "(a) l;K = 1", ell(n).then(k), Ok(id(2 * n)), cfg);
    law(
        &mut r,
        "(b) K;p = p_T;p",
        k.then(&p(n)),
        ch(&[&p(2 * n), &p(n)]),
        cfg,
    );
    law(
        &mut r,
        "(b) K;p = T(p);p",
        k.then(&p(n)),
        ch(&[&p(n).tangent_lift(), &p(n)]),
        cfg,
    );
    law(
        &mut r,
        "(c) K;l = l_T;T(K)",
        k.then(&ell(n)),
        ch(&[&ell(2 * n), &tk]),
        cfg,
    );
    law(
        &mut r,
        "(c) K;l = T(l);c_T;T(K)",
        k.then(&ell(n)),
        ch(&[&ell(n).tangent_lift(), &flip(2 * n), &tk]),
        cfg,
    );
    law(
        &mut r,
        "(d) 0_T;K = p;0",
        zero(2 * n).then(k),
        ch(&[&p(n), &zero(n)]),
        cfg,
    );
    let by_parts = |proj: [SmoothMap; 2]| -> Result<SmoothMap, MapError> {
        let parts = [proj[0].then(k)?, proj[1].then(k)?];
        fibre_pair(&parts, n)?.then(&plus(n))
    };
    law(
        &mut r,
        "(d) +_T;K = <pi0;K, pi1;K>;+",
        plus(2 * n).then(k),
        by_parts([pi(0, 2, 2 * n), pi(1, 2, 2 * n)]),
        cfg,
    );
    law(
        &mut r,
        "(d) T(0);K = p;0",
        zero(n).tangent_lift().then(k),
        ch(&[&p(n), &zero(n)]),
        cfg,
    );
    law(
        &mut r,
        "(d) T(+);K = <T(pi0);K, T(pi1);K>;+",
        plus(n).tangent_lift().then(k),
        by_parts([pi(0, 2, n).tangent_lift(), pi(1, 2, n).tangent_lift()]),
        cfg,
    );
    let fp = fibre_product_map(c);
    let inv = fibre_product_inverse(c);
    law(
        &mut r,
        "fibre product: <T(p), p_T, K>;inverse = 1",
        fp.then(&inv),
        Ok(id(4 * n)),
        cfg,
    );
    law(
        &mut r,
        "fibre product: inverse;<T(p), p_T, K> = 1",
        inv.then(&fp),
        Ok(id(4 * n)),
        cfg,
    );
    r
}

/// `T^l_ij = Γ^l_ij - Γ^l_ji`.
pub fn torsion_tensor(field: &ChristoffelField, x: &[f64]) -> Result<Vec<f64>, JetError> {
    let n = field.n;
    let g = field.at(x)?;
    let mut t = vec![0.0; n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                t[index(n, l, i, j)] = g[index(n, l, i, j)] - g[index(n, l, j, i)];
            }
        }
    }
    Ok(t)
}

/// `R^l_ijk = ∂_i Γ̂^l_jk − ∂_j Γ̂^l_ik + Γ̂^l_im Γ̂^m_jk − Γ̂^l_jm Γ̂^m_ik`
/// with `Γ̂^l_ij = Γ^l_ji`, flat at `((l·n + i)·n + j)·n + k`.
///
/// The transposition makes the first lower index the `T(p)` direction, so that
/// `c_T;T(K);K − T(K);K` evaluates to `Σ R^l_ijk s1^i s2^j s0^k` on `T^3 M`.
pub fn curvature_tensor(field: &ChristoffelField, x: &[f64]) -> Result<Vec<f64>, JetError> {
    let n = field.n;
    let n3 = n * n * n;
    let g = field.at(x)?;
    let mut dg = Vec::with_capacity(n);
    for m in 0..n {
        let mut comps = vec![x.to_vec(), vec![0.0; n]];
        comps[1][m] = 1.0;
        let jet = JetPoint::from_components(1, comps)?;
        dg.push(field.map.eval_jet(&jet)?.into_coeffs()[n3..].to_vec());
    }
    let gh = |l: usize, i: usize, j: usize| g[index(n, l, j, i)];
    let dgh = |d: usize, l: usize, i: usize, j: usize| dg[d][index(n, l, j, i)];
    let mut r = vec![0.0; n3 * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut v = dgh(i, l, j, k) - dgh(j, l, i, k);
                    for m in 0..n {
                        v += gh(l, i, m) * gh(m, j, k) - gh(l, j, m) * gh(m, i, k);
                    }
                    r[((l * n + i) * n + j) * n + k] = v;
                }
            }
        }
    }
    Ok(r)
}

fn tensor_law(
    name: &str,
    n: usize,
    cfg: &SampleConfig,
    f: impl Fn(&[f64]) -> Result<Vec<f64>, JetError> + Sync,
) -> LawOutcome {
    check_fn(name, cfg, n, cfg.tolerance, |x| {
        let t = f(x)?;
        let zeros = vec![0.0; t.len()];
        Ok((t, zeros))
    })
}

fn agreement(name: &str, a: &LawOutcome, b: &LawOutcome) -> LawOutcome {
    let ok = a.passed() == b.passed();
    LawOutcome::verdict(
        name,
        ok,
        format!("{}: {:?}, {}: {:?}", a.law, a.status, b.law, b.status),
    )
}

pub const TORSION_LAW: &str = "c;K = K";
pub const FLATNESS_LAW: &str = "c_T;T(K);K = T(K);K";

/// `c;K = K`, cross-checked against the torsion tensor.
pub fn is_torsion_free(c: &Connection, cfg: &SampleConfig) -> LawReport {
    let n = c.n;
    let mut r = LawReport::new(format!("torsion-free[n={n}]"));
    let main = check_maps(TORSION_LAW, &flip(n).then(&c.k).expect("c;K"), &c.k, cfg);
    let field = c.christoffel();
    let oracle = tensor_law("torsion tensor = 0", n, cfg, |x| torsion_tensor(&field, x));
    let agree = agreement("oracle agreement", &main, &oracle);
    r.extend([main, oracle, agree]);
    r
}

/// `c_T;T(K);K = T(K);K`, cross-checked against the curvature tensor.
pub fn is_flat(c: &Connection, cfg: &SampleConfig) -> LawReport {
    let n = c.n;
    let mut r = LawReport::new(format!("flat[n={n}]"));
    let tkk = c.k.tangent_lift().then(&c.k).expect("T(K);K");
    let lhs = flip(2 * n).then(&tkk).expect("c_T;T(K);K");
    let main = check_maps(FLATNESS_LAW, &lhs, &tkk, cfg);
    let field = c.christoffel();
    let oracle = tensor_law("curvature tensor = 0", n, cfg, |x| {
        curvature_tensor(&field, x)
    });
    let agree = agreement("oracle agreement", &main, &oracle);
    r.extend([main, oracle, agree]);
    r
}

/// `H(x, u0, u1) = (x, u1, u0, −Γ(x)(u1, u0))`, the unique section with
/// `H;T(p) = π0`, `H;p_T = π1`, `H;K = π0;p;0`.
pub fn horizontal_from_vertical(c: &Connection) -> SmoothMap {
    let n = c.n;
    let lay = signed_blocks(n, 3, &[&[(0, 1)], &[(2, 1)], &[(1, 1)], &[]]);
    let correction = lay.then(&c.k).expect("K after layout");
    let both = SmoothMap::pair(&[lay, correction]).expect("pair");
    let combine = signed_blocks(n, 6, &[&[(0, 1)], &[(1, 1)], &[(2, 1)], &[(5, -1)]]);
    both.then(&combine).expect("H assembly")
}

/// The three defining equations of a horizontal connection.
pub fn verify_horizontal(c: &Connection, h: &SmoothMap, cfg: &SampleConfig) -> LawReport {
    let n = c.n;
    let mut r = LawReport::new(format!("horizontal[n={n}]"));
    law(
        &mut r,
        "H;T(p) = pi0",
        h.then(&p(n).tangent_lift()),
        Ok(pi(0, 2, n)),
        cfg,
    );
    law(
        &mut r,
        "H;p_T = pi1",
        h.then(&p(2 * n)),
        Ok(pi(1, 2, n)),
        cfg,
    );
    law(
        &mut r,
        "H;K = pi0;p;0",
        h.then(&c.k),
        ch(&[&pi(0, 2, n), &p(n), &zero(n)]),
        cfg,
    );
    r
}

/// `H;K = π1;p;0` and `<K, p_T>;μ + U;H = 1` with `U = <T(p), p_T>`.
pub fn verify_compatibility(c: &Connection, cfg: &SampleConfig) -> LawReport {
    let n = c.n;
    let mut r = LawReport::new(format!("compatibility[n={n}]"));
    let Some(h) = c.h.as_ref() else {
        r.push(LawOutcome::skipped(
            "compatibility",
            "no horizontal connection",
        ));
        return r;
    };
    law(
        &mut r,
        "H;K = pi1;p;0",
        h.then(&c.k),
        ch(&[&pi(1, 2, n), &p(n), &zero(n)]),
        cfg,
    );
    let built = (|| -> Result<(SmoothMap, SmoothMap, SmoothMap), MapError> {
        let kmu = fibre_pair(&[c.k.clone(), p(2 * n)], n)?.then(&mu_vl(n))?;
        let u = fibre_pair(&[p(n).tangent_lift(), p(2 * n)], n)?;
        let uh = u.then(h)?;
        let sum = SmoothMap::pair(&[kmu.clone(), uh.clone()])?
            .then(&fibre_merge(2 * n, 2)?)?
            .then(&plus(2 * n))?;
        Ok((kmu, uh, sum))
    })();
    match built {
        Ok((kmu, uh, sum)) => {
            law(
                &mut r,
                "<K,p_T>;mu and U;H share p_T",
                kmu.then(&p(2 * n)),
                uh.then(&p(2 * n)),
                cfg,
            );
            law(
                &mut r,
                "<K,p_T>;mu + U;H = 1",
                Ok(sum),
                Ok(SmoothMap::identity(4 * n)),
                cfg,
            );
        }
        Err(e) => r.push(LawOutcome::verdict(
            "<K,p_T>;mu + U;H = 1",
            false,
            e.to_string(),
        )),
    }
    r
}

/// `K_T = T(c);c_T;T(K);c` on `TM`, with `H_T = c_2;T(H);c_T;T(c)` when `H` is present.
pub fn lift_connection(c: &Connection) -> Connection {
    let n = c.n;
    let kt = ch(&[
        &flip(n).tangent_lift(),
        &flip(2 * n),
        &c.k.tangent_lift(),
        &flip(n),
    ])
    .expect("K_T");
    let ht = c.h.as_ref().map(|h| {
        ch(&[
            &flip_n(2, n),
            &h.tangent_lift(),
            &flip(2 * n),
            &flip(n).tangent_lift(),
        ])
        .expect("H_T")
    });
    Connection {
        n: 2 * n,
        k: kt,
        christoffel: None,
        h: ht,
    }
}

/// `K_T;T(p) = T^2(p);K` and `T(l);K_T = K;l`.
pub fn verify_lift_lemma(c: &Connection, cfg: &SampleConfig) -> LawReport {
    let n = c.n;
    let kt = lift_connection(c);
    let mut r = LawReport::new(format!("lifted-connection[n={n}]"));
    law(
        &mut r,
        "K_T;T(p) = T2(p);K",
        kt.k.then(&p(n).tangent_lift()),
        p(n).tangent_power(2).then(&c.k),
        cfg,
    );
    law(
        &mut r,
        "T(l);K_T = K;l",
        ell(n).tangent_lift().then(&kt.k),
        c.k.then(&ell(n)),
        cfg,
    );
    r
}

/// Outcome of the three-way flat/torsion-free equivalence.
#[derive(Debug, Clone)]
pub struct FtfOutcome {
    pub report: LawReport,
    /// (i) flat and torsion-free.
    pub flat_torsion_free: bool,
    /// (ii) `K_T;K = T(K);K`.
    pub lifted_square: bool,
    /// (iii) `K` is a morphism `(T^2 M, K_{T²}) -> (TM, K_T)`.
    pub self_morphism: bool,
}

impl FtfOutcome {
    pub fn agree(&self) -> bool {
        self.flat_torsion_free == self.lifted_square && self.lifted_square == self.self_morphism
    }
}

pub const LIFTED_SQUARE_LAW: &str = "(ii) K_T;K = T(K);K";
pub const SELF_MORPHISM_LAW: &str = "(iii) K_T2;T(K) = T2(K);K_T";

/// Evaluates all three equivalent conditions independently and checks they agree.
pub fn ftf_equivalence(c: &Connection, cfg: &SampleConfig) -> FtfOutcome {
    let n = c.n;
    let mut report = LawReport::new(format!("ftf[n={n}]"));
    let flat = is_flat(c, cfg);
    let tf = is_torsion_free(c, cfg);
    let flat_ok = flat.law(FLATNESS_LAW).is_some_and(LawOutcome::passed);
    let tf_ok = tf.law(TORSION_LAW).is_some_and(LawOutcome::passed);
    report.absorb("(i) ", flat);
    report.absorb("(i) ", tf);

    let kt = lift_connection(c);
    let tk = c.k.tangent_lift();
    let ii = match (kt.k.then(&c.k), tk.then(&c.k)) {
        (Ok(l), Ok(r)) => check_maps(LIFTED_SQUARE_LAW, &l, &r, cfg),
        (Err(e), _) | (_, Err(e)) => LawOutcome::verdict(LIFTED_SQUARE_LAW, false, e.to_string()),
    };
    let kt2 = lift_connection(&kt);
    let iii = match (kt2.k.then(&tk), c.k.tangent_power(2).then(&kt.k)) {
        (Ok(l), Ok(r)) => check_maps(SELF_MORPHISM_LAW, &l, &r, cfg),
        (Err(e), _) | (_, Err(e)) => LawOutcome::verdict(SELF_MORPHISM_LAW, false, e.to_string()),
    };
    let (ii_ok, iii_ok) = (ii.passed(), iii.passed());
    report.push(ii);
    report.push(iii);
    let i_ok = flat_ok && tf_ok;
    let agree = i_ok == ii_ok && ii_ok == iii_ok;
    report.push(LawOutcome::verdict(
        "conditions agree",
        agree,
        format!("(i) {i_ok}, (ii) {ii_ok}, (iii) {iii_ok}"),
    ));
    FtfOutcome {
        report,
        flat_torsion_free: i_ok,
        lifted_square: ii_ok,
        self_morphism: iii_ok,
    }
}

/// Checks `a;b = 1` at sampled points and `b;a = 1` at the images `a(x)`.
pub fn check_inverse_pair(
    a: &SmoothMap,
    b: &SmoothMap,
    cfg: &SampleConfig,
) -> Result<(), ConnectionError> {
    let n = a.in_dim();
    let tol = cfg.tolerance.max(1e-9);
    let ab = a.then(b)?;
    let first = check_fn("phi;psi = 1", cfg, n, tol, |x| {
        Ok((ab.eval_point(x)?, x.to_vec()))
    });
    let second = check_fn("psi;phi = 1 on image", cfg, n, tol, |x| {
        let y = a.eval_point(x)?;
        Ok((a.eval_point(&b.eval_point(&y)?)?, y))
    });
    for out in [first, second] {
        if !out.passed() {
            let (residual, input) = out
                .witness
                .map_or((f64::NAN, Vec::new()), |w| (w.residual, w.input));
            return Err(ConnectionError::NotInverse {
                law: format!("{}: {}", out.law, out.detail.unwrap_or_default()),
                residual,
                input,
            });
        }
    }
    Ok(())
}

/// The connection on the source of `φ` making `φ` a geometric morphism:
/// `K_src = T^2(φ);K_target;T(ψ)` for a two-sided inverse `ψ`.
pub fn pullback_connection(
    target: &Connection,
    phi: &SmoothMap,
    psi: &SmoothMap,
    cfg: &SampleConfig,
) -> Result<Connection, ConnectionError> {
    let n = target.n;
    for m in [phi, psi] {
        if m.in_dim() != n || m.out_dim() != n {
            return Err(ConnectionError::Shape {
                expected_in: n,
                expected_out: n,
                found_in: m.in_dim(),
                found_out: m.out_dim(),
            });
        }
    }
    if phi.is_identity() && psi.is_identity() {
        return Ok(target.clone());
    }
    check_inverse_pair(phi, psi, cfg)?;
    let entries = target
        .christoffel
        .as_ref()
        .and_then(ChristoffelField::entries);
    if let (Some(g), Some(f), Some(b)) = (entries, phi.exprs(), psi.exprs()) {
        let field = ChristoffelField::from_exprs(n, pullback_entries(n, g, f, b))?;
        return Ok(connection_from_christoffel(&field));
    }
    let k = ch(&[&phi.tangent_power(2), &target.k, &psi.tangent_lift()])?;
    Connection::from_map(n, k)
}

/// `Γ_src^l_ij = Σ_m ∂_m ψ^l(φ) (∂_i ∂_j φ^m + Σ_pq Γ^m_pq(φ) ∂_i φ^p ∂_j φ^q)`.
fn pullback_entries(n: usize, gamma: &[Expr], phi: &[Expr], psi: &[Expr]) -> Vec<Expr> {
    let dphi: Vec<Vec<Expr>> = phi
        .iter()
        .map(|f| (0..n).map(|i| f.derivative(i)).collect())
        .collect();
    let dpsi: Vec<Vec<Expr>> = psi
        .iter()
        .map(|g| (0..n).map(|m| g.derivative(m).substitute(phi)).collect())
        .collect();
    let gamma_at: Vec<Expr> = gamma.iter().map(|e| e.substitute(phi)).collect();
    let mut out = vec![Expr::int(0); n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                out[index(n, l, i, j)] = Expr::sum_of((0..n).map(|m| {
                    let quadratic =
                        (0..n)
                            .flat_map(|p| (0..n).map(move |q| (p, q)))
                            .map(|(p, q)| {
                                Expr::product(
                                    gamma_at[index(n, m, p, q)].clone(),
                                    Expr::product(dphi[p][i].clone(), dphi[q][j].clone()),
                                )
                            });
                    let inner =
                        Expr::sum_of(std::iter::once(dphi[m][i].derivative(j)).chain(quadratic));
                    Expr::product(dpsi[l][m].clone(), inner)
                }));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::parse_map;
    use crate::report::Status;

    fn cfg() -> SampleConfig {
        SampleConfig::new(30, 11, 1e-9)
    }

    fn at(f: &SmoothMap, x: &[f64]) -> Vec<f64> {
        f.eval_point(x).unwrap()
    }

    fn torsion_example() -> ChristoffelField {
        ChristoffelField::sparse(2, &[((0, 0, 1), "1")]).unwrap()
    }

    #[test]
    fn christoffel_form_examples() {
        let k0 = Connection::zero(1);
        assert_eq!(at(k0.k(), &[1., 2., 3., 4.]), vec![1., 4.]);
        let kx = connection_from_christoffel(&ChristoffelField::parse(1, &["x0"]).unwrap());
        assert_eq!(at(kx.k(), &[2., 1., 1., 1.]), vec![2., 3.]);
        let k1 = connection_from_christoffel(&ChristoffelField::constant(1, 1));
        assert_eq!(at(k1.k(), &[0., 1., 1., 0.]), vec![0., 1.]);
    }

    #[test]
    fn entry_count_is_checked() {
        assert!(matches!(
            ChristoffelField::parse(2, &["0"; 7]),
            Err(ConnectionError::EntryCount {
                expected: 8,
                found: 7,
                ..
            })
        ));
        assert!(matches!(
            ChristoffelField::parse(1, &["x1"]),
            Err(ConnectionError::Parse(_))
        ));
    }

    #[test]
    fn zero_connection_is_canonical_differential_object_connection() {
        // components <T(p̂);p̂, p;p> of R^n as a differential object, p̂(x, v) = v
        let n = 2;
        let hat = blocks(n, 2, &[1]);
        let vector = ch(&[&hat.tangent_lift(), &hat]).unwrap();
        let base = ch(&[&p(2 * n), &p(n)]).unwrap();
        let canon = SmoothMap::pair(&[base, vector]).unwrap();
        let rep = check_maps("canonical", &canon, Connection::zero(n).k(), &cfg());
        assert!(rep.passed());
    }

    #[test]
    fn derived_field_matches_source() {
        let f = ChristoffelField::sparse(2, &[((0, 0, 1), "x1"), ((1, 1, 0), "sin(x0)")]).unwrap();
        let c = connection_from_christoffel(&f);
        let generic = Connection::from_map(2, c.k().clone())
            .unwrap()
            .christoffel();
        let x = [0.3, -1.2];
        let a = f.at(&x).unwrap();
        let b = generic.at(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let via_map = connection_from_christoffel(&generic);
        let pt = [0.3, -1.2, 1., 2., 3., 4., 5., 6.];
        let (l, r) = (at(c.k(), &pt), at(via_map.k(), &pt));
        for (u, v) in l.iter().zip(&r) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_connection_laws() {
        for f in [
            ChristoffelField::zero(2),
            ChristoffelField::parse(1, &["sin(x0)"]).unwrap(),
            torsion_example(),
        ] {
            let rep = verify_vertical_connection(&connection_from_christoffel(&f), &cfg());
            assert_eq!(
                rep.status,
                Status::Pass,
                "{:#?}",
                rep.failures().collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn fibre_product_round_trip_example() {
        let c = connection_from_christoffel(&ChristoffelField::constant(1, 1));
        let fp = fibre_product_map(&c);
        let y = at(&fp, &[1., 2., 3., 4.]);
        assert_eq!(y, vec![1., 3., 2., 10.]);
        assert_eq!(at(&fibre_product_inverse(&c), &y), vec![1., 2., 3., 4.]);
    }

    #[test]
    fn torsion_examples() {
        assert!(is_torsion_free(
            &connection_from_christoffel(&ChristoffelField::parse(1, &["x0^2"]).unwrap()),
            &cfg()
        )
        .passed());
        assert!(is_torsion_free(&Connection::zero(2), &cfg()).passed());
        let c = connection_from_christoffel(&torsion_example());
        let rep = is_torsion_free(&c, &cfg());
        assert_eq!(rep.status, Status::Fail);
        assert!(rep.law("oracle agreement").unwrap().passed());
        let lhs = flip(2).then(c.k()).unwrap();
        let x = [0., 0., 1., 0., 0., 1., 0., 0.];
        let (l, r) = (at(&lhs, &x), at(c.k(), &x));
        assert_eq!(r[2] - l[2], 1.0);
        assert_eq!(
            torsion_tensor(&torsion_example(), &[0., 0.]).unwrap()[index(2, 0, 0, 1)],
            1.0
        );
    }

    #[test]
    fn flatness_examples() {
        assert!(is_flat(
            &connection_from_christoffel(&ChristoffelField::parse(1, &["x0"]).unwrap()),
            &cfg()
        )
        .passed());
        assert!(is_flat(&Connection::zero(2), &cfg()).passed());
        let f = ChristoffelField::sparse(2, &[((0, 0, 0), "x1")]).unwrap();
        let rep = is_flat(&connection_from_christoffel(&f), &cfg());
        assert_eq!(rep.status, Status::Fail);
        assert!(rep.law("oracle agreement").unwrap().passed());
        let r = curvature_tensor(&f, &[0.5, 0.5]).unwrap();
        // R^0_{100}
        assert_eq!(r[4], 1.0);
        assert_eq!(
            curvature_tensor(&ChristoffelField::constant(1, 1), &[0.3]).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn flatness_residual_is_curvature_contraction() {
        let n = 2;
        let f = ChristoffelField::sparse(
            n,
            &[
                ((0, 0, 1), "x1^2"),
                ((1, 0, 0), "sin(x0)"),
                ((1, 1, 0), "x0*x1"),
                ((0, 1, 1), "1"),
            ],
        )
        .unwrap();
        let c = connection_from_christoffel(&f);
        let tkk = c.k().tangent_lift().then(c.k()).unwrap();
        let lhs = flip(2 * n).then(&tkk).unwrap();
        let s: Vec<f64> = (0..8 * n)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0)
            .collect();
        let (l, r) = (at(&lhs, &s), at(&tkk, &s));
        let x = &s[0..n];
        let (s0, s1, s2) = (&s[n..2 * n], &s[2 * n..3 * n], &s[4 * n..5 * n]);
        let rt = curvature_tensor(&f, x).unwrap();
        for lo in 0..n {
            let mut want = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        want += rt[((lo * n + i) * n + j) * n + k] * s1[i] * s2[j] * s0[k];
                    }
                }
            }
            assert!((l[n + lo] - r[n + lo] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn horizontal_examples() {
        let h0 = horizontal_from_vertical(&Connection::zero(1));
        assert_eq!(at(&h0, &[1., 2., 3.]), vec![1., 3., 2., 0.]);
        let c1 = connection_from_christoffel(&ChristoffelField::constant(1, 1)).with_horizontal();
        assert_eq!(at(c1.h().unwrap(), &[1., 2., 3.]), vec![1., 3., 2., -6.]);
        let rep = verify_horizontal(&c1, c1.h().unwrap(), &cfg());
        assert!(rep.passed());
        assert!(verify_compatibility(&c1, &cfg()).passed());
    }

    #[test]
    fn corrupted_horizontal_fails_second_compatibility() {
        let c = connection_from_christoffel(&ChristoffelField::parse(1, &["x0"]).unwrap())
            .with_horizontal();
        let negate = signed_blocks(1, 4, &[&[(0, 1)], &[(1, 1)], &[(2, 1)], &[(3, -1)]]);
        let bad = c.h().unwrap().then(&negate).unwrap();
        let rep = verify_compatibility(&c.clone().with_h(bad), &cfg());
        assert!(rep.law("H;K = pi1;p;0").is_some());
        assert_eq!(
            rep.law("<K,p_T>;mu + U;H = 1").unwrap().status,
            Status::Fail
        );
        assert!(rep.law("<K,p_T>;mu + U;H = 1").unwrap().witness.is_some());
    }

    #[test]
    fn lifted_zero_connection_is_index_map() {
        let kt = lift_connection(&Connection::zero(1));
        let s: Vec<f64> = (0..8).map(f64::from).collect();
        // (s∅, s0, s1, s01, s2, s02, s12, s012) -> (s∅, s0, s12, s012)
        assert_eq!(at(kt.k(), &s), vec![0., 1., 6., 7.]);
    }

    #[test]
    fn lifted_connection_laws() {
        let f = ChristoffelField::parse(1, &["sin(x0)"]).unwrap();
        let c = connection_from_christoffel(&f).with_horizontal();
        assert!(verify_lift_lemma(&c, &cfg()).passed());
        let kt = lift_connection(&c);
        assert!(verify_vertical_connection(&kt, &cfg()).passed());
        let synthesized = horizontal_from_vertical(&kt);
        let rep = check_maps("H_T", kt.h().unwrap(), &synthesized, &cfg());
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn ftf_examples() {
        let c0 = Connection::zero(1);
        let out = ftf_equivalence(&c0, &cfg());
        assert!(out.report.passed() && out.agree());
        let c1 = connection_from_christoffel(&ChristoffelField::constant(1, 1));
        assert!(ftf_equivalence(&c1, &cfg()).report.passed());
        let ct = connection_from_christoffel(&torsion_example());
        let out = ftf_equivalence(&ct, &cfg());
        assert!(!out.flat_torsion_free && !out.lifted_square && !out.self_morphism);
        assert!(out.agree());
    }

    #[test]
    fn pullback_of_flat_along_exp_is_unit_field() {
        let exp = parse_map("exp(x0)", 1, 1).unwrap();
        let log = parse_map("log(x0)", 1, 1).unwrap();
        let pb = pullback_connection(&Connection::zero(1), &exp, &log, &cfg()).unwrap();
        let one = connection_from_christoffel(&ChristoffelField::constant(1, 1));
        assert!(check_maps("pullback", pb.k(), one.k(), &cfg().with_tolerance(1e-12)).passed());
        let id = SmoothMap::identity(1);
        let same = pullback_connection(&one, &id, &id, &cfg()).unwrap();
        assert!(same.source_field().is_some());
        let sq = parse_map("x0^2", 1, 1).unwrap();
        assert!(matches!(
            pullback_connection(&one, &sq, &sq, &cfg()),
            Err(ConnectionError::NotInverse { .. })
        ));
    }

    #[test]
    fn symbolic_pullback_matches_composite() {
        let target = connection_from_christoffel(
            &ChristoffelField::sparse(2, &[((0, 0, 1), "x1"), ((1, 1, 1), "sin(x0)")]).unwrap(),
        );
        let phi = parse_map("x0 + x1^3; x1 - 2", 2, 2).unwrap();
        let psi = parse_map("x0 - (x1 + 2)^3; x1 + 2", 2, 2).unwrap();
        let pb = pullback_connection(&target, &phi, &psi, &cfg()).unwrap();
        assert!(pb.source_field().is_some_and(|f| f.entries().is_some()));
        let composite = ch(&[&phi.tangent_power(2), target.k(), &psi.tangent_lift()]).unwrap();
        assert!(check_maps("pullback", pb.k(), &composite, &cfg()).passed());
    }
}
