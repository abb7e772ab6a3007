//! Structural maps of the tangent bundle functor on `R^n` and an axiom verifier.
//!
//! Flat layouts: `T^k M` stores the component for level set `S` at block `S`
//! (bitmask order), so `T^2 M = (x, v, w, a)` with `v` on level 0 and `w` on
//! level 1. The outermost `T` is always the highest level, hence `T^k(TM)` is
//! `T^{k+1} M` with the inner `TM` on level 0. `T_m M` is `(x, u_1, .., u_m)`.
//!
//! Axiom inventory checked by [`verify_tangent_axioms`]:
//!
//! * naturality of `p`, `0`, `+`, `ℓ`, `c` against every test map;
//! * additive bundle: `0;p = 1`, `+;p = π_0;p`, unit, commutativity, associativity;
//! * `c;c = 1`, the braid identity `T(c);c_T;T(c) = c_T;T(c);c_T`;
//! * `ℓ;T(ℓ) = ℓ;ℓ_T`, `ℓ;c = ℓ`, `ℓ_T;T(c);c_T = c;T(ℓ)`;
//! * `ℓ;p_T = p;0`, `ℓ;T(p) = p;0`, `c;T(p) = p_T`, `T(0);c = 0_T`;
//! * `c_2;T(π_i) = π_i;c` for `i = 0, 1`;
//! * universality of the vertical lift through `μ(x, v, w) = (x, w, 0, v)`.

use std::fmt;

use num_rational::BigRational;

use crate::jet::{Coeff, JetError, LevelSet, Scalar};
use crate::map::{AffineMap, MapError, SmoothMap};
use crate::report::{check_fn, check_maps, LawOutcome, LawReport, SampleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuralKind {
    /// `p: TM -> M`.
    P,
    /// `0: M -> TM`.
    Zero,
    /// `+: T_2 M -> TM`.
    Plus,
    /// `ℓ: TM -> T^2 M`.
    Ell,
    /// `c: T^2 M -> T^2 M`.
    Flip,
    /// `π_i: T_m M -> TM`.
    Pi { i: usize, m: usize },
    /// `c_m: T_m(TM) -> T(T_m M)`.
    FlipN { m: usize },
    /// `μ: T_2 M -> T^2 M`, `(x, v, w) -> (x, w, 0, v)`.
    MuVl,
}

impl fmt::Display for StructuralKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructuralKind::P => f.write_str("p"),
            StructuralKind::Zero => f.write_str("zero"),
            StructuralKind::Plus => f.write_str("plus"),
            StructuralKind::Ell => f.write_str("ell"),
            StructuralKind::Flip => f.write_str("flip"),
            StructuralKind::Pi { i, m } => write!(f, "pi{i}/{m}"),
            StructuralKind::FlipN { m } => write!(f, "flip_{m}"),
            StructuralKind::MuVl => f.write_str("mu_vl"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StructuralMap {
    pub kind: StructuralKind,
    pub n: usize,
    pub map: SmoothMap,
}

/// Builds a map from per-output lists of summed input blocks of width `n`.
fn block_map(n: usize, in_blocks: usize, out: &[&[usize]]) -> Result<SmoothMap, MapError> {
    let mut rows = Vec::with_capacity(out.len() * n);
    for blocks in out {
        for k in 0..n {
            rows.push(blocks.iter().map(|b| (b * n + k, Coeff::int(1))).collect());
        }
    }
    Ok(SmoothMap::affine(AffineMap::new(
        in_blocks * n,
        rows,
        Vec::new(),
    )?))
}

/// The coordinate realization of a structural transformation at `R^n`.
pub fn structural_map(kind: StructuralKind, n: usize) -> Result<StructuralMap, MapError> {
    use StructuralKind::*;
    let map = match kind {
        P => block_map(n, 2, &[&[0]])?,
        Zero => block_map(n, 1, &[&[0], &[]])?,
        Plus => block_map(n, 3, &[&[0], &[1, 2]])?,
        Ell => block_map(n, 2, &[&[0], &[], &[], &[1]])?,
        Flip => block_map(n, 4, &[&[0], &[2], &[1], &[3]])?,
        Pi { i, m } => {
            if i >= m {
                return Err(MapError::AffineIndex {
                    row: 0,
                    index: i,
                    in_dim: m,
                });
            }
            block_map(n, m + 1, &[&[0], &[i + 1]])?
        }
        FlipN { m } => {
            // input [x, v, w_1, a_1, ..]; output base (x, w_i..), tangent (v, a_i..)
            let mut out: Vec<Vec<usize>> = vec![vec![0]];
            out.extend((0..m).map(|i| vec![2 + 2 * i]));
            out.push(vec![1]);
            out.extend((0..m).map(|i| vec![3 + 2 * i]));
            let refs: Vec<&[usize]> = out.iter().map(Vec::as_slice).collect();
            block_map(n, 2 * (m + 1), &refs)?
        }
        MuVl => block_map(n, 3, &[&[0], &[2], &[], &[1]])?,
    };
    Ok(StructuralMap {
        kind,
        n,
        map: map.labelled(format!("{kind}[{n}]")),
    })
}

/// Shorthand for the realized map of a structural transformation.
pub fn smap(kind: StructuralKind, n: usize) -> SmoothMap {
    structural_map(kind, n)
        .expect("structural map with valid parameters")
        .map
}

pub fn p(n: usize) -> SmoothMap {
    smap(StructuralKind::P, n)
}

pub fn zero(n: usize) -> SmoothMap {
    smap(StructuralKind::Zero, n)
}

pub fn plus(n: usize) -> SmoothMap {
    smap(StructuralKind::Plus, n)
}

pub fn ell(n: usize) -> SmoothMap {
    smap(StructuralKind::Ell, n)
}

pub fn flip(n: usize) -> SmoothMap {
    smap(StructuralKind::Flip, n)
}

pub fn pi(i: usize, m: usize, n: usize) -> SmoothMap {
    smap(StructuralKind::Pi { i, m }, n)
}

pub fn flip_n(m: usize, n: usize) -> SmoothMap {
    smap(StructuralKind::FlipN { m }, n)
}

pub fn mu_vl(n: usize) -> SmoothMap {
    smap(StructuralKind::MuVl, n)
}

/// Selection map on `T^order M` sending the component at `S` to `perm(S)`.
pub fn level_permutation(n: usize, order: usize, perm: &[usize]) -> Result<SmoothMap, MapError> {
    let comps = 1usize << order;
    let mut source = vec![0usize; comps];
    for s in LevelSet::all(order) {
        source[s.permute(perm).index()] = s.index();
    }
    let blocks: Vec<Vec<usize>> = source.into_iter().map(|b| vec![b]).collect();
    let refs: Vec<&[usize]> = blocks.iter().map(Vec::as_slice).collect();
    Ok(block_map(n, comps, &refs)?.labelled(format!("perm{perm:?}[{n}]")))
}

/// Transposition of levels `i` and `j` on `T^order M`.
pub fn level_swap(n: usize, order: usize, i: usize, j: usize) -> Result<SmoothMap, MapError> {
    let mut perm: Vec<usize> = (0..order).collect();
    perm.swap(i, j);
    level_permutation(n, order, &perm)
}

/// Moves level 0 to the top of `T^order M`, shifting the others down.
fn rotate_down(n: usize, order: usize) -> Result<SmoothMap, MapError> {
    let perm: Vec<usize> = (0..order).map(|l| (l + order - 1) % order).collect();
    level_permutation(n, order, &perm)
}

/// Moves the top level of `T^order M` to level 0, shifting the others up.
fn rotate_up(n: usize, order: usize) -> Result<SmoothMap, MapError> {
    let perm: Vec<usize> = (0..order).map(|l| (l + 1) % order).collect();
    level_permutation(n, order, &perm)
}

/// `g_T` for a natural `g: T^a M -> T^b M` at `R^n`, obtained from `T(g)` by
/// moving the inner `TM` level to the top and back.
pub fn whisker_inner(g: &SmoothMap, a: usize, b: usize, n: usize) -> Result<SmoothMap, MapError> {
    let into = rotate_down(n, a + 1)?;
    let out = rotate_up(n, b + 1)?;
    SmoothMap::chain(&[&into, &g.tangent_lift(), &out])
}

/// `m` copies of `TM` sharing a base, merged into `T_m M`.
pub fn fibre_merge(n: usize, m: usize) -> Result<SmoothMap, MapError> {
    let mut out: Vec<Vec<usize>> = vec![vec![0]];
    out.extend((0..m).map(|i| vec![2 * i + 1]));
    let refs: Vec<&[usize]> = out.iter().map(Vec::as_slice).collect();
    block_map(n, 2 * m, &refs)
}

/// `m` copies of `T^2 M` sharing `T(p)`, merged into `T(T_m M)`.
pub fn tangent_fibre_merge(n: usize, m: usize) -> Result<SmoothMap, MapError> {
    let mut out: Vec<Vec<usize>> = vec![vec![0]];
    out.extend((0..m).map(|i| vec![4 * i + 1]));
    out.push(vec![2]);
    out.extend((0..m).map(|i| vec![4 * i + 3]));
    let refs: Vec<&[usize]> = out.iter().map(Vec::as_slice).collect();
    block_map(n, 4 * m, &refs)
}

/// `T_m(f)(x, u_1..u_m) = (f(x), Df u_1, .., Df u_m)`.
pub fn t_m_lift(f: &SmoothMap, m: usize) -> Result<SmoothMap, MapError> {
    let (n, q) = (f.in_dim(), f.out_dim());
    let tf = f.tangent_lift();
    let parts = (0..m)
        .map(|i| pi(i, m, n).then(&tf))
        .collect::<Result<Vec<_>, _>>()?;
    SmoothMap::pair(&parts)?.then(&fibre_merge(q, m)?)
}

/// The pairing `<f_1, .., f_m>` into `T_m M` of maps into `TM` over a common base.
pub fn fibre_pair(maps: &[SmoothMap], n: usize) -> Result<SmoothMap, MapError> {
    SmoothMap::pair(maps)?.then(&fibre_merge(n, maps.len())?)
}

/// The kernel inverse of `μ`: `(x, v, 0, a) -> (x, a, v)`.
pub fn mu_vl_inverse(n: usize) -> SmoothMap {
    block_map(n, 4, &[&[0], &[3], &[1]]).expect("valid block map")
}

/// Every structural map at `n`, for linearity and exactness checks.
pub fn all_structural(n: usize) -> Vec<StructuralMap> {
    use StructuralKind::*;
    let kinds = [
        P,
        Zero,
        Plus,
        Ell,
        Flip,
        Pi { i: 0, m: 2 },
        Pi { i: 1, m: 2 },
        FlipN { m: 2 },
        MuVl,
    ];
    kinds
        .iter()
        .map(|&k| structural_map(k, n).expect("valid kind"))
        .collect()
}

fn chain(maps: &[&SmoothMap]) -> SmoothMap {
    SmoothMap::chain(maps).expect("composable structural chain")
}

fn push_eq(
    report: &mut LawReport,
    law: &str,
    lhs: Result<SmoothMap, MapError>,
    rhs: Result<SmoothMap, MapError>,
    cfg: &SampleConfig,
) {
    let outcome = match (lhs, rhs) {
        (Ok(l), Ok(r)) => check_maps(law, &l, &r, cfg),
        (Err(e), _) | (_, Err(e)) => LawOutcome::verdict(law, false, e.to_string()),
    };
    report.push(outcome);
}

/// Naturality squares of `p, 0, +, ℓ, c` against one map `f: R^n -> R^q`.
pub fn naturality(f: &SmoothMap, label: &str, cfg: &SampleConfig) -> LawReport {
    let (n, q) = (f.in_dim(), f.out_dim());
    let tf = f.tangent_lift();
    let ttf = tf.tangent_lift();
    let mut r = LawReport::new(format!("naturality[{label}]"));
    push_eq(
        &mut r,
        &format!("{label}: T(f);p = p;f"),
        tf.then(&p(q)),
        p(n).then(f),
        cfg,
    );
    push_eq(
        &mut r,
        &format!("{label}: 0;T(f) = f;0"),
        zero(n).then(&tf),
        f.then(&zero(q)),
        cfg,
    );
    push_eq(
        &mut r,
        &format!("{label}: +;T(f) = T2(f);+"),
        plus(n).then(&tf),
        t_m_lift(f, 2).and_then(|t2| t2.then(&plus(q))),
        cfg,
    );
    push_eq(
        &mut r,
        &format!("{label}: l;T2(f) = T(f);l"),
        ell(n).then(&ttf),
        tf.then(&ell(q)),
        cfg,
    );
    push_eq(
        &mut r,
        &format!("{label}: c;T2(f) = T2(f);c"),
        flip(n).then(&ttf),
        ttf.then(&flip(q)),
        cfg,
    );
    r
}

/// Laws built only from structural maps, checked at tolerance 0.
pub fn structural_axioms(n: usize, cfg: &SampleConfig) -> LawReport {
    let mut r = LawReport::new(format!("structural[{n}]"));
    let id = |d: usize| SmoothMap::identity(d);
    let sq = |r: &mut LawReport, law: &str, l: SmoothMap, rhs: SmoothMap| {
        r.push(check_maps(law, &l, &rhs, cfg));
    };

    // additive bundle
    sq(&mut r, "0;p = 1", chain(&[&zero(n), &p(n)]), id(n));
    sq(
        &mut r,
        "+;p = pi0;p",
        chain(&[&plus(n), &p(n)]),
        chain(&[&pi(0, 2, n), &p(n)]),
    );
    sq(
        &mut r,
        "+;p = pi1;p",
        chain(&[&plus(n), &p(n)]),
        chain(&[&pi(1, 2, n), &p(n)]),
    );
    let with_zero = fibre_pair(&[id(2 * n), chain(&[&p(n), &zero(n)])], n).expect("pair");
    sq(
        &mut r,
        "<1, p;0>;+ = 1",
        chain(&[&with_zero, &plus(n)]),
        id(2 * n),
    );
    let swap = block_map(n, 3, &[&[0], &[2], &[1]]).expect("swap");
    sq(&mut r, "+ commutative", chain(&[&swap, &plus(n)]), plus(n));
    let left = block_map(n, 4, &[&[0], &[1, 2], &[3]]).expect("assoc");
    let right = block_map(n, 4, &[&[0], &[1], &[2, 3]]).expect("assoc");
    sq(
        &mut r,
        "+ associative",
        chain(&[&left, &plus(n)]),
        chain(&[&right, &plus(n)]),
    );

    // flip
    sq(&mut r, "c;c = 1", chain(&[&flip(n), &flip(n)]), id(4 * n));
    let tc = flip(n).tangent_lift();
    let ct = flip(2 * n);
    sq(
        &mut r,
        "T(c);c_T;T(c) = c_T;T(c);c_T",
        chain(&[&tc, &ct, &tc]),
        chain(&[&ct, &tc, &ct]),
    );
    sq(
        &mut r,
        "c;T(p) = p_T",
        chain(&[&flip(n), &p(n).tangent_lift()]),
        p(2 * n),
    );
    sq(
        &mut r,
        "T(0);c = 0_T",
        chain(&[&zero(n).tangent_lift(), &flip(n)]),
        zero(2 * n),
    );

    // vertical lift
    let tl = ell(n).tangent_lift();
    sq(
        &mut r,
        "l;T(l) = l;l_T",
        chain(&[&ell(n), &tl]),
        chain(&[&ell(n), &ell(2 * n)]),
    );
    sq(&mut r, "l;c = l", chain(&[&ell(n), &flip(n)]), ell(n));
    sq(
        &mut r,
        "l_T;T(c);c_T = c;T(l)",
        chain(&[&ell(2 * n), &tc, &ct]),
        chain(&[&flip(n), &tl]),
    );
    sq(
        &mut r,
        "l;p_T = p;0",
        chain(&[&ell(n), &p(2 * n)]),
        chain(&[&p(n), &zero(n)]),
    );
    sq(
        &mut r,
        "l;T(p) = p;0",
        chain(&[&ell(n), &p(n).tangent_lift()]),
        chain(&[&p(n), &zero(n)]),
    );

    // c_2 against projections
    for i in 0..2 {
        sq(
            &mut r,
            &format!("c_2;T(pi{i}) = pi{i};c"),
            chain(&[&flip_n(2, n), &pi(i, 2, n).tangent_lift()]),
            chain(&[&pi(i, 2, 2 * n), &flip(n)]),
        );
    }

    // universality of the vertical lift
    let mu = mu_vl(n);
    let via_def = tangent_fibre_merge(n, 2)
        .and_then(|m| {
            let left = pi(0, 2, n).then(&ell(n))?;
            let right = pi(1, 2, n).then(&zero(2 * n))?;
            SmoothMap::pair(&[left, right])?
                .then(&m)?
                .then(&plus(n).tangent_lift())
        })
        .expect("mu definition");
    sq(&mut r, "mu = <pi0;l, pi1;0_T>;T(+)", via_def, mu.clone());
    sq(
        &mut r,
        "mu;T(p) = pi0;p;0",
        chain(&[&mu, &p(n).tangent_lift()]),
        chain(&[&pi(0, 2, n), &p(n), &zero(n)]),
    );
    sq(
        &mut r,
        "mu;inverse = 1",
        chain(&[&mu, &mu_vl_inverse(n)]),
        id(3 * n),
    );
    let kernel = block_map(n, 3, &[&[0], &[1], &[], &[2]]).expect("kernel embedding");
    sq(
        &mut r,
        "kernel;inverse;mu = kernel",
        chain(&[&kernel, &mu_vl_inverse(n), &mu]),
        kernel.clone(),
    );
    r
}

/// Both sides of `g(x, u + αu') = g(x, u) + α g(x, u') − α g(x, 0)` at the
/// flat sample `(x, u, u', α)`.
fn superposition<S: Scalar>(
    g: &SmoothMap,
    base: usize,
    s: &[S],
) -> Result<(Vec<S>, Vec<S>), JetError> {
    let d = g.in_dim();
    let x = &s[..base];
    let u = &s[base..d];
    let u2 = &s[d..2 * d - base];
    let alpha = &s[2 * d - base];
    let at = |fib: Vec<S>| -> Result<Vec<S>, JetError> {
        let mut pt = x.to_vec();
        pt.extend(fib);
        g.eval_point(&pt)
    };
    let lhs = at(u
        .iter()
        .zip(u2)
        .map(|(a, b)| a.add(&alpha.mul(b)))
        .collect())?;
    let g1 = at(u.to_vec())?;
    let g2 = at(u2.to_vec())?;
    let g0 = at(vec![S::zero(); d - base])?;
    let rhs = (0..lhs.len())
        .map(|k| g1[k].add(&alpha.mul(&g2[k])).sub(&alpha.mul(&g0[k])))
        .collect();
    Ok((lhs, rhs))
}

/// Superposition check for a map whose first `base` inputs are the base point.
/// Structural maps are evaluated exactly and checked at tolerance 0.
pub fn fibre_linearity(g: &SmoothMap, base: usize, label: &str, cfg: &SampleConfig) -> LawOutcome {
    let law = format!("{label}: fibrewise linear");
    let dim = 2 * g.in_dim() - base + 1;
    if g.is_structural() {
        return check_fn(&law, cfg, dim, 0.0, |s| {
            let q = s
                .iter()
                .map(|v| BigRational::from_float(*v).ok_or(JetError::NonFinite))
                .collect::<Result<Vec<_>, _>>()?;
            let (l, r) = superposition(g, base, &q)?;
            Ok((
                l.iter().map(Scalar::to_f64).collect(),
                r.iter().map(Scalar::to_f64).collect(),
            ))
        });
    }
    check_fn(&law, cfg, dim, cfg.tolerance, |s| superposition(g, base, s))
}

/// Runs the full axiom inventory at `R^n` against the given test maps.
pub fn verify_tangent_axioms(n: usize, test_maps: &[SmoothMap], cfg: &SampleConfig) -> LawReport {
    let mut report = LawReport::new(format!("tangent-axioms[n={n}]"));
    report.absorb("", structural_axioms(n, cfg));
    for s in all_structural(n) {
        report.push(fibre_linearity(&s.map, n, &s.kind.to_string(), cfg));
    }
    for (i, f) in test_maps.iter().enumerate() {
        if f.in_dim() != n {
            report.push(LawOutcome::skipped(
                format!("test map {i}"),
                format!("input dimension {} differs from {n}", f.in_dim()),
            ));
            continue;
        }
        report.absorb("", naturality(f, &format!("f{i}"), cfg));
    }
    report
}
