//! The parametric monad `(T, η, μ^a)`, comonad `(T, ε, δ^b)` and distributive
//! law `λ^{a,b}` on the tangent functor, verified exactly over the rationals.
//!
//! ```text
//! μ^a(x, v, w, d)   = (x, v + w + a·d)        η = zero section
//! δ^b(x, v)         = (x, v, v, b·v)          ε = projection p
//! λ^{a,b}(x, v, w, d) = (x, w, v + w + a·d, b·w − d)
//! ```
//!
//! Whiskering: `T(g)` is the tangent lift, `g_T` is `T(g)` conjugated by the
//! level rotations of [`whisker_inner`]. Laws checked, composition left to right:
//!
//! * monad: `η_T;μ = 1`, `T(η);μ = 1`, `T(μ);μ = μ_T;μ`;
//! * comonad: `δ;ε_T = 1`, `δ;T(ε) = 1`, `δ;T(δ) = δ;δ_T`;
//! * distributive law: `η_T;λ = T(η)`, `λ;ε_T = T(ε)`,
//!   `μ_T;λ = T(λ);λ_T;T(μ)`, `λ;δ_T = T(δ);λ_T;T(λ)`.
//!
//! Every map is affine in each coordinate, so agreement on the origin and the
//! unit vectors decides each identity.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::expr::Number;
use crate::jet::{Coeff, JetPoint};
use crate::map::{AffineMap, MapError, SmoothMap};
use crate::report::{
    affine_basis, check_maps, check_maps_exact, LawOutcome, LawReport, SampleConfig,
};
use crate::tangent::{p, plus, whisker_inner, zero};

/// Parses `"5/3"`, `"-2"` or a decimal such as `"0.25"` exactly.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Ok(q) = BigRational::from_str(s) {
        return Some(q);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = Number::from_text(body)?.value().exact().clone();
    Some(if neg { -v } else { v })
}

#[derive(Debug, Clone)]
pub struct BimonadInstance {
    pub a: BigRational,
    pub b: BigRational,
    pub n: usize,
    pub mu: SmoothMap,
    pub eta: SmoothMap,
    pub delta: SmoothMap,
    pub epsilon: SmoothMap,
    pub lambda: SmoothMap,
}

fn scaled(
    n: usize,
    in_blocks: usize,
    out: &[Vec<(usize, BigRational)>],
) -> Result<SmoothMap, MapError> {
    let mut rows = Vec::new();
    for terms in out {
        for k in 0..n {
            rows.push(
                terms
                    .iter()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(b, c)| (b * n + k, Coeff::new(c.clone())))
                    .collect(),
            );
        }
    }
    Ok(SmoothMap::affine(AffineMap::new(
        in_blocks * n,
        rows,
        Vec::new(),
    )?))
}

fn one() -> BigRational {
    BigRational::from_integer(BigInt::from(1))
}

/// `μ^a(x, v, w, d) = (x, v + w + a·d)`.
pub fn monad_multiplication(a: &BigRational, n: usize) -> SmoothMap {
    scaled(
        n,
        4,
        &[
            vec![(0, one())],
            vec![(1, one()), (2, one()), (3, a.clone())],
        ],
    )
    .expect("multiplication")
    .labelled(format!("mu^{a}[{n}]"))
}

/// `δ^b(x, v) = (x, v, v, b·v)`.
pub fn comonad_comultiplication(b: &BigRational, n: usize) -> SmoothMap {
    scaled(
        n,
        2,
        &[
            vec![(0, one())],
            vec![(1, one())],
            vec![(1, one())],
            vec![(1, b.clone())],
        ],
    )
    .expect("comultiplication")
    .labelled(format!("delta^{b}[{n}]"))
}

/// `λ^{a,b}(x, v, w, d) = (x, w, v + w + a·d, b·w − d)`.
pub fn distributive_law(a: &BigRational, b: &BigRational, n: usize) -> SmoothMap {
    scaled(
        n,
        4,
        &[
            vec![(0, one())],
            vec![(2, one())],
            vec![(1, one()), (2, one()), (3, a.clone())],
            vec![(2, b.clone()), (3, -one())],
        ],
    )
    .expect("distributive law")
    .labelled(format!("lambda^{a},{b}[{n}]"))
}

pub fn build_instance(a: BigRational, b: BigRational, n: usize) -> BimonadInstance {
    BimonadInstance {
        mu: monad_multiplication(&a, n),
        eta: zero(n),
        delta: comonad_comultiplication(&b, n),
        epsilon: p(n),
        lambda: distributive_law(&a, &b, n),
        a,
        b,
        n,
    }
}

fn whisker(g: &SmoothMap, from: usize, to: usize, n: usize) -> SmoothMap {
    whisker_inner(g, from, to, n).expect("whiskering")
}

fn chain(maps: &[&SmoothMap]) -> SmoothMap {
    SmoothMap::chain(maps).expect("composable")
}

fn check(law: &str, lhs: &SmoothMap, rhs: &SmoothMap, exact: bool) -> LawOutcome {
    if exact {
        check_maps_exact(law, lhs, rhs)
    } else {
        check_maps(law, lhs, rhs, &SampleConfig::default())
    }
}

/// `T(inner);μ = μ_T;μ`, with a possibly different map in the `T(·)` slot.
pub fn monad_associativity(inner: &SmoothMap, mu: &SmoothMap, n: usize, exact: bool) -> LawOutcome {
    let lhs = chain(&[&inner.tangent_lift(), mu]);
    let rhs = chain(&[&whisker(mu, 2, 1, n), mu]);
    check("T(mu);mu = mu_T;mu", &lhs, &rhs, exact)
}

pub fn verify_monad_laws(inst: &BimonadInstance, exact: bool) -> LawReport {
    let n = inst.n;
    let (mu, eta) = (&inst.mu, &inst.eta);
    let mut r = LawReport::new(format!("monad[a={}, n={n}]", inst.a));
    let id = SmoothMap::identity(2 * n);
    r.push(check(
        "eta_T;mu = 1",
        &chain(&[&whisker(eta, 0, 1, n), mu]),
        &id,
        exact,
    ));
    r.push(check(
        "T(eta);mu = 1",
        &chain(&[&eta.tangent_lift(), mu]),
        &id,
        exact,
    ));
    r.push(monad_associativity(mu, mu, n, exact));
    r
}

pub fn verify_comonad_laws(inst: &BimonadInstance, exact: bool) -> LawReport {
    let n = inst.n;
    let (delta, eps) = (&inst.delta, &inst.epsilon);
    let mut r = LawReport::new(format!("comonad[b={}, n={n}]", inst.b));
    let id = SmoothMap::identity(2 * n);
    r.push(check(
        "delta;eps_T = 1",
        &chain(&[delta, &whisker(eps, 1, 0, n)]),
        &id,
        exact,
    ));
    r.push(check(
        "delta;T(eps) = 1",
        &chain(&[delta, &eps.tangent_lift()]),
        &id,
        exact,
    ));
    r.push(check(
        "delta;T(delta) = delta;delta_T",
        &chain(&[delta, &delta.tangent_lift()]),
        &chain(&[delta, &whisker(delta, 1, 2, n)]),
        exact,
    ));
    r
}

pub fn verify_mixed_law(inst: &BimonadInstance, exact: bool) -> LawReport {
    let n = inst.n;
    let BimonadInstance {
        mu,
        eta,
        delta,
        epsilon,
        lambda,
        ..
    } = inst;
    let lam_t = whisker(lambda, 2, 2, n);
    let t_lam = lambda.tangent_lift();
    let mut r = LawReport::new(format!("mixed-law[a={}, b={}, n={n}]", inst.a, inst.b));
    r.push(check(
        "unit: eta_T;lambda = T(eta)",
        &chain(&[&whisker(eta, 0, 1, n), lambda]),
        &eta.tangent_lift(),
        exact,
    ));
    r.push(check(
        "counit: lambda;eps_T = T(eps)",
        &chain(&[lambda, &whisker(epsilon, 1, 0, n)]),
        &epsilon.tangent_lift(),
        exact,
    ));
    r.push(check(
        "multiplication: mu_T;lambda = T(lambda);lambda_T;T(mu)",
        &chain(&[&whisker(mu, 2, 1, n), lambda]),
        &chain(&[&t_lam, &lam_t, &mu.tangent_lift()]),
        exact,
    ));
    r.push(check(
        "comultiplication: lambda;delta_T = T(delta);lambda_T;T(lambda)",
        &chain(&[lambda, &whisker(delta, 1, 2, n)]),
        &chain(&[&delta.tangent_lift(), &lam_t, &t_lam]),
        exact,
    ));
    r
}

/// `μ^0 = (x, v, w, d) ↦ (x, v + w)`, i.e. dropping `d` and adding.
pub fn canonical_multiplication_check(n: usize) -> LawOutcome {
    let drop_d = scaled(
        n,
        4,
        &[vec![(0, one())], vec![(1, one())], vec![(2, one())]],
    )
    .expect("drop");
    let rhs = chain(&[&drop_d, &plus(n)]);
    check_maps_exact(
        "mu^0 = (x, v + w)",
        &monad_multiplication(&BigRational::zero(), n),
        &rhs,
    )
}

/// `f(x) = f(0) + Σ x_i (f(e_i) − f(0))` at the given rational points.
pub fn affine_superposition(label: &str, f: &SmoothMap, points: &[Vec<BigRational>]) -> LawOutcome {
    let law = format!("{label}: affine in every coordinate");
    let eval = |x: &[BigRational]| {
        f.eval_jet(&JetPoint::point(x.to_vec()).expect("point"))
            .map(JetPoint::into_coeffs)
    };
    let basis = affine_basis(f.in_dim());
    let values = match basis.iter().map(|x| eval(x)).collect::<Result<Vec<_>, _>>() {
        Ok(v) => v,
        Err(e) => return LawOutcome::verdict(law, false, e.to_string()),
    };
    for x in points {
        let Ok(got) = eval(x) else {
            return LawOutcome::verdict(law, false, "evaluation failed");
        };
        let mut want = values[0].clone();
        for (i, xi) in x.iter().enumerate() {
            for (k, w) in want.iter_mut().enumerate() {
                *w += xi * (&values[i + 1][k] - &values[0][k]);
            }
        }
        if got != want {
            return LawOutcome::verdict(law, false, format!("superposition fails at {x:?}"));
        }
    }
    LawOutcome::verdict(law, true, format!("{} points", points.len()))
}

/// Superposition check of all five maps at a few fixed rational points.
pub fn verify_affine(inst: &BimonadInstance) -> LawReport {
    let mut r = LawReport::new(format!("affine[a={}, b={}, n={}]", inst.a, inst.b, inst.n));
    let pts = |d: usize| -> Vec<Vec<BigRational>> {
        (1..=3i64)
            .map(|s| {
                (0..d as i64)
                    .map(|i| {
                        BigRational::new(
                            BigInt::from((i * 7 + s * 3) % 11 - 5),
                            BigInt::from(s + 1),
                        )
                    })
                    .collect()
            })
            .collect()
    };
    for (name, m) in [
        ("mu", &inst.mu),
        ("eta", &inst.eta),
        ("delta", &inst.delta),
        ("eps", &inst.epsilon),
        ("lambda", &inst.lambda),
    ] {
        r.push(affine_superposition(name, m, &pts(m.in_dim())));
    }
    r
}

/// Monad, comonad, distributive law and superposition for one `(a, b, n)`.
pub fn verify_instance(inst: &BimonadInstance) -> LawReport {
    let mut r = LawReport::new(format!("bimonad[a={}, b={}, n={}]", inst.a, inst.b, inst.n));
    r.absorb("monad: ", verify_monad_laws(inst, true));
    r.absorb("comonad: ", verify_comonad_laws(inst, true));
    r.absorb("mixed: ", verify_mixed_law(inst, true));
    r.absorb("", verify_affine(inst));
    r
}
