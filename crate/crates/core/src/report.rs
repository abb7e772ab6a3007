//! Law outcomes, reports, and the sampled/exact equality checkers every
//! verifier is built on.

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jet::{JetError, JetPoint};
use crate::map::SmoothMap;

/// Attempts per sample before a law is declared inconclusive.
pub const MAX_RETRIES: usize = 100;

/// Half-width of the sampling box `[-R, R]^d`.
pub const SAMPLE_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub input: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawOutcome {
    pub law: String,
    pub status: Status,
    pub max_residual: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl LawOutcome {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn skipped(law: impl Into<String>, detail: impl Into<String>) -> Self {
        LawOutcome {
            law: law.into(),
            status: Status::Skipped,
            max_residual: 0.0,
            samples: 0,
            tolerance: 0.0,
            exact: false,
            witness: None,
            detail: Some(detail.into()),
        }
    }

    /// An outcome that is decided by a boolean rather than a residual.
    pub fn verdict(law: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        LawOutcome {
            law: law.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            max_residual: if ok { 0.0 } else { 1.0 },
            samples: 0,
            tolerance: 0.0,
            exact: true,
            witness: None,
            detail: Some(detail.into()),
        }
    }

    pub fn with_law(mut self, law: impl Into<String>) -> Self {
        self.law = law.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub name: String,
    pub status: Status,
    pub laws: Vec<LawOutcome>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl LawReport {
    pub fn new(name: impl Into<String>) -> Self {
        LawReport {
            name: name.into(),
            status: Status::Skipped,
            laws: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, law: LawOutcome) {
        self.laws.push(law);
        self.status = aggregate(self.laws.iter().map(|l| l.status));
    }

    pub fn extend(&mut self, laws: impl IntoIterator<Item = LawOutcome>) {
        for l in laws {
            self.push(l);
        }
    }

    /// Folds another report in, prefixing its law names.
    pub fn absorb(&mut self, prefix: &str, other: LawReport) {
        for l in other.laws {
            let name = format!("{prefix}{}", l.law);
            self.push(l.with_law(name));
        }
        self.notes.extend(other.notes);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn law(&self, name: &str) -> Option<&LawOutcome> {
        self.laws.iter().find(|l| l.law == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.laws.iter().map(|l| l.max_residual).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LawOutcome> {
        self.laws.iter().filter(|l| l.status == Status::Fail)
    }
}

/// Fail beats inconclusive beats pass; a report of only skipped laws is skipped.
pub fn aggregate(statuses: impl IntoIterator<Item = Status>) -> Status {
    let mut seen = Status::Skipped;
    for s in statuses {
        seen = match (seen, s) {
            (_, Status::Fail) | (Status::Fail, _) => Status::Fail,
            (_, Status::Inconclusive) | (Status::Inconclusive, _) => Status::Inconclusive,
            (_, Status::Pass) | (Status::Pass, _) => Status::Pass,
            _ => Status::Skipped,
        };
    }
    seen
}

/// Sample count, seed and tolerance shared by every sampled check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl SampleConfig {
    pub fn new(samples: usize, seed: u64, tolerance: f64) -> Self {
        SampleConfig {
            samples,
            seed,
            tolerance,
        }
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        SampleConfig { tolerance, ..self }
    }

    pub fn with_samples(self, samples: usize) -> Self {
        SampleConfig { samples, ..self }
    }
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig::new(200, 0, 1e-9)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent generator for one sample attempt of one law.
pub fn sample_rng(seed: u64, law: &str, index: usize, attempt: usize) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    h = splitmix(h ^ fnv1a(law));
    h = splitmix(h ^ index as u64);
    h = splitmix(h ^ (attempt as u64).rotate_left(32));
    ChaCha8Rng::seed_from_u64(h)
}

/// A point of `[-2, 2]^dim`.
pub fn sample_point(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.gen_range(-SAMPLE_RADIUS..=SAMPLE_RADIUS))
        .collect()
}

/// `max_i |l_i - r_i| / max(1, |l_i|, |r_i|)`; a length mismatch counts as infinite.
pub fn residual(lhs: &[f64], rhs: &[f64]) -> f64 {
    if lhs.len() != rhs.len() {
        return f64::INFINITY;
    }
    lhs.iter()
        .zip(rhs)
        .map(|(l, r)| {
            let d = (l - r).abs();
            if d.is_nan() {
                f64::INFINITY
            } else {
                d / 1f64.max(l.abs()).max(r.abs())
            }
        })
        .fold(0.0, f64::max)
}

fn retryable(e: &JetError) -> bool {
    matches!(e, JetError::Domain { .. } | JetError::NonFinite)
}

enum SampleResult {
    Value(Witness),
    Exhausted(String),
    Error(String),
}

/// Result of evaluating both sides of a law at one input.
pub type Sides = (Vec<f64>, Vec<f64>);

/// Checks a law given as a closure from a sampled input to both sides.
///
/// Inputs whose evaluation leaves a primitive's domain are redrawn; a sample
/// that cannot be placed after [`MAX_RETRIES`] attempts makes the law
/// inconclusive unless another sample already fails it.
pub fn check_fn<F>(law: &str, cfg: &SampleConfig, input_dim: usize, tol: f64, f: F) -> LawOutcome
where
    F: Fn(&[f64]) -> Result<Sides, JetError> + Sync,
{
    check_sampled(law, cfg, tol, |rng| sample_point(rng, input_dim), f)
}

/// Like [`check_fn`] with a custom input generator.
pub fn check_sampled<G, F>(law: &str, cfg: &SampleConfig, tol: f64, gen: G, f: F) -> LawOutcome
where
    G: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
    F: Fn(&[f64]) -> Result<Sides, JetError> + Sync,
{
    let results: Vec<SampleResult> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut last = String::new();
            for attempt in 0..MAX_RETRIES {
                let mut rng = sample_rng(cfg.seed, law, i, attempt);
                let x = gen(&mut rng);
                match f(&x) {
                    Ok((lhs, rhs)) => {
                        let r = residual(&lhs, &rhs);
                        return SampleResult::Value(Witness {
                            input: x,
                            lhs,
                            rhs,
                            residual: r,
                        });
                    }
                    Err(e) if retryable(&e) => last = e.to_string(),
                    Err(e) => return SampleResult::Error(e.to_string()),
                }
            }
            SampleResult::Exhausted(last)
        })
        .collect();
    summarize(law, tol, false, results)
}

fn summarize(law: &str, tol: f64, exact: bool, results: Vec<SampleResult>) -> LawOutcome {
    let samples = results.len();
    let mut worst: Option<Witness> = None;
    let mut error = None;
    let mut exhausted = None;
    for r in results {
        match r {
            SampleResult::Value(w) => {
                if worst.as_ref().is_none_or(|b| w.residual > b.residual) {
                    worst = Some(w);
                }
            }
            SampleResult::Error(e) => {
                error.get_or_insert(e);
            }
            SampleResult::Exhausted(e) => {
                exhausted.get_or_insert(e);
            }
        }
    }
    let max_residual = worst.as_ref().map_or(0.0, |w| w.residual);
    let failing = max_residual > tol;
    let status = if error.is_some() || failing {
        Status::Fail
    } else if exhausted.is_some() {
        Status::Inconclusive
    } else {
        Status::Pass
    };
    let detail = error.map(|e| format!("evaluation error: {e}")).or_else(|| {
        exhausted.map(|e| format!("inconclusive sample after {MAX_RETRIES} draws: {e}"))
    });
    LawOutcome {
        law: law.to_string(),
        status,
        max_residual,
        samples,
        tolerance: tol,
        exact,
        witness: if failing { worst } else { None },
        detail,
    }
}

/// Whether every leaf of both maps is structural; such laws are checked at tolerance 0.
pub fn law_tolerance(lhs: &SmoothMap, rhs: &SmoothMap, tol: f64) -> f64 {
    if lhs.is_structural() && rhs.is_structural() {
        0.0
    } else {
        tol
    }
}

/// Checks `lhs = rhs` as maps on flat points of `R^d`.
///
/// Laws between structural maps are evaluated in exact rational arithmetic
/// at the sampled points and must agree exactly.
pub fn check_maps(law: &str, lhs: &SmoothMap, rhs: &SmoothMap, cfg: &SampleConfig) -> LawOutcome {
    if lhs.in_dim() != rhs.in_dim() || lhs.out_dim() != rhs.out_dim() {
        return LawOutcome::verdict(
            law,
            false,
            format!(
                "shape mismatch: {}->{} vs {}->{}",
                lhs.in_dim(),
                lhs.out_dim(),
                rhs.in_dim(),
                rhs.out_dim()
            ),
        );
    }
    if lhs.is_structural() && rhs.is_structural() {
        return check_fn(law, cfg, lhs.in_dim(), 0.0, |x| {
            let q = x
                .iter()
                .map(|v| BigRational::from_float(*v).ok_or(JetError::NonFinite))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((approx(&lhs.eval_point(&q)?), approx(&rhs.eval_point(&q)?)))
        });
    }
    check_fn(law, cfg, lhs.in_dim(), cfg.tolerance, |x| {
        Ok((lhs.eval_point(x)?, rhs.eval_point(x)?))
    })
}

/// Flat points used for exact checks of affine identities: the origin and every unit vector.
pub fn affine_basis(dim: usize) -> Vec<Vec<BigRational>> {
    let mut out = vec![vec![BigRational::zero(); dim]];
    for i in 0..dim {
        let mut e = vec![BigRational::zero(); dim];
        e[i] = BigRational::from_integer(1.into());
        out.push(e);
    }
    out
}

fn approx(v: &[BigRational]) -> Vec<f64> {
    v.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect()
}

/// Checks `lhs = rhs` exactly over the rationals on the affine basis.
///
/// Both sides must be affine in every coordinate for this to decide the law.
pub fn check_maps_exact(law: &str, lhs: &SmoothMap, rhs: &SmoothMap) -> LawOutcome {
    if lhs.in_dim() != rhs.in_dim() || lhs.out_dim() != rhs.out_dim() {
        return LawOutcome::verdict(law, false, "shape mismatch");
    }
    let basis = affine_basis(lhs.in_dim());
    let samples = basis.len();
    let mut worst: Option<(BigRational, Witness)> = None;
    for x in basis {
        let pt = match JetPoint::point(x.clone()) {
            Ok(p) => p,
            Err(e) => return LawOutcome::verdict(law, false, e.to_string()),
        };
        let (l, r) = match (lhs.eval_jet(&pt), rhs.eval_jet(&pt)) {
            (Ok(l), Ok(r)) => (l.into_coeffs(), r.into_coeffs()),
            (Err(e), _) | (_, Err(e)) => return LawOutcome::verdict(law, false, e.to_string()),
        };
        let diff = l
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - b).abs())
            .fold(BigRational::zero(), |m, d| if d > m { d } else { m });
        if !diff.is_zero() && worst.as_ref().is_none_or(|(m, _)| &diff > m) {
            let w = Witness {
                input: approx(&x),
                lhs: approx(&l),
                rhs: approx(&r),
                residual: diff.to_f64().unwrap_or(f64::INFINITY),
            };
            worst = Some((diff, w));
        }
    }
    let (status, max_residual, witness, detail) = match worst {
        None => (Status::Pass, 0.0, None, None),
        Some((d, w)) => (
            Status::Fail,
            w.residual,
            Some(w),
            Some(format!("exact residual {d}")),
        ),
    };
    LawOutcome {
        law: law.to_string(),
        status,
        max_residual,
        samples,
        tolerance: 0.0,
        exact: true,
        witness,
        detail,
    }
}
