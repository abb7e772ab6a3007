//! JSON-configured batches of checks and their reports.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "maps": { "f": { "expr": "exp(x0)*x1; x1", "in": 2, "out": 2 } },
//!   "christoffel": ["0", "0", "0", "0", "0", "0", "0", "0"],
//!   "spaces": { "curved": { "dimension": 2, "christoffel": ["x1", "0", ...] } },
//!   "checks": [ { "name": "ftf" }, { "name": "morphism", "params": { "map": "f" } } ],
//!   "samples": 200, "seed": 7, "tolerance": 1e-9,
//!   "jubin": [["1", "2"], ["5/3", "-1"]]
//! }
//! ```
//!
//! Christoffel entries are listed flat in `(l, i, j)` order. The space named
//! `default` is the top-level `christoffel` (zero when absent).

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bimonad::{
    build_instance, canonical_multiplication_check, parse_rational, verify_instance,
};
use crate::connection::{
    ftf_equivalence, is_flat, is_torsion_free, pullback_connection, verify_compatibility,
    verify_horizontal, verify_lift_lemma, verify_vertical_connection, ChristoffelField,
    ConnectionError, GeometricSpace,
};
use crate::expr::ParseError;
use crate::geometry::{
    check_self_morphism, is_geometric_morphism, is_horizontal_preserving, is_locally_affine,
};
use crate::map::SmoothMap;
use crate::report::{aggregate, LawReport, SampleConfig, Status};
use crate::tangent::verify_tangent_axioms;

/// Environment variable consulted when the config gives no sample count.
pub const SAMPLES_ENV: &str = "TANGENT_SAMPLES";
pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{context}: {source}")]
    Expression {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error("invalid config: {0}")]
    Config(String),
}

impl SuiteError {
    /// Exit status for a suite that could not be run.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSpec {
    pub expr: String,
    #[serde(rename = "in")]
    pub in_dim: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PullbackSpec {
    pub target: String,
    pub phi: String,
    pub psi: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub dimension: usize,
    #[serde(default)]
    pub christoffel: Option<Vec<String>>,
    #[serde(default)]
    pub pullback: Option<PullbackSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckSpec {
    pub name: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub dimension: usize,
    #[serde(default)]
    pub maps: BTreeMap<String, MapSpec>,
    #[serde(default)]
    pub christoffel: Option<Vec<String>>,
    #[serde(default)]
    pub spaces: BTreeMap<String, SpaceSpec>,
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub jubin: Vec<(String, String)>,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self, SuiteError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, SuiteError> {
        let text = std::fs::read_to_string(path).map_err(|e| SuiteError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    fn sample_config(&self) -> SampleConfig {
        let samples = self.samples.unwrap_or_else(|| {
            std::env::var(SAMPLES_ENV)
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(DEFAULT_SAMPLES)
        });
        SampleConfig::new(
            samples,
            self.seed,
            self.tolerance.unwrap_or(DEFAULT_TOLERANCE),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: String,
    pub status: Status,
    pub max_residual: f64,
    pub reports: Vec<LawReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub status: Status,
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    pub dimension: usize,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    /// 0 when every non-skipped check passes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let bad = self
            .checks
            .iter()
            .any(|c| !matches!(c.status, Status::Pass | Status::Skipped));
        i32::from(bad)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Context<'a> {
    config: &'a SuiteConfig,
    cfg: SampleConfig,
    maps: BTreeMap<String, SmoothMap>,
    spaces: BTreeMap<String, GeometricSpace>,
}

fn parse_field(
    n: usize,
    entries: &[String],
    context: &str,
) -> Result<ChristoffelField, SuiteError> {
    ChristoffelField::parse(n, entries).map_err(|e| match e {
        ConnectionError::Parse(source) => SuiteError::Expression {
            context: context.to_string(),
            source,
        },
        other => SuiteError::Config(format!("{context}: {other}")),
    })
}

impl<'a> Context<'a> {
    fn new(config: &'a SuiteConfig) -> Result<Self, SuiteError> {
        let cfg = config.sample_config();
        let mut maps = BTreeMap::new();
        for (name, spec) in &config.maps {
            let m = SmoothMap::parse(&spec.expr, spec.in_dim, spec.out_dim).map_err(|source| {
                SuiteError::Expression {
                    context: format!("map '{name}'"),
                    source,
                }
            })?;
            maps.insert(name.clone(), m);
        }
        let n = config.dimension;
        let default = match &config.christoffel {
            Some(entries) => parse_field(n, entries, "christoffel")?,
            None => ChristoffelField::zero(n),
        };
        let mut ctx = Context {
            config,
            cfg,
            maps,
            spaces: BTreeMap::new(),
        };
        ctx.spaces
            .insert("default".into(), GeometricSpace::from_christoffel(&default));
        // plain spaces first so pullbacks may target them
        for (name, spec) in &config.spaces {
            if spec.pullback.is_none() {
                let field = match &spec.christoffel {
                    Some(e) => parse_field(spec.dimension, e, &format!("space '{name}'"))?,
                    None => ChristoffelField::zero(spec.dimension),
                };
                ctx.spaces
                    .insert(name.clone(), GeometricSpace::from_christoffel(&field));
            }
        }
        for (name, spec) in &config.spaces {
            if let Some(pb) = &spec.pullback {
                let target = ctx.space(&pb.target)?.connection.clone();
                let (phi, psi) = (ctx.map(&pb.phi)?, ctx.map(&pb.psi)?);
                let conn = pullback_connection(&target, &phi, &psi, &ctx.cfg)
                    .map_err(|e| SuiteError::Config(format!("space '{name}': {e}")))?;
                if conn.dim() != spec.dimension {
                    return Err(SuiteError::Config(format!(
                        "space '{name}' declares dimension {} but has {}",
                        spec.dimension,
                        conn.dim()
                    )));
                }
                ctx.spaces.insert(name.clone(), GeometricSpace::new(conn));
            }
        }
        Ok(ctx)
    }

    fn map(&self, name: &str) -> Result<SmoothMap, SuiteError> {
        if let Some(m) = self.maps.get(name) {
            return Ok(m.clone());
        }
        match name.strip_prefix("id") {
            Some(d) if d.parse::<usize>().is_ok() => Ok(SmoothMap::identity(d.parse().unwrap())),
            _ => Err(SuiteError::Config(format!("unknown map '{name}'"))),
        }
    }

    fn space(&self, name: &str) -> Result<&GeometricSpace, SuiteError> {
        self.spaces
            .get(name)
            .ok_or_else(|| SuiteError::Config(format!("unknown space '{name}'")))
    }

    fn param_str(&self, check: &CheckSpec, key: &str) -> Result<Option<String>, SuiteError> {
        match check.params.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(SuiteError::Config(format!(
                "check '{}': parameter '{key}' must be a string, found {v}",
                check.name
            ))),
        }
    }

    fn space_param(&self, check: &CheckSpec, key: &str) -> Result<GeometricSpace, SuiteError> {
        let name = self
            .param_str(check, key)?
            .unwrap_or_else(|| "default".into());
        Ok(self.space(&name)?.clone())
    }

    fn required_map(&self, check: &CheckSpec) -> Result<SmoothMap, SuiteError> {
        let name = self.param_str(check, "map")?.ok_or_else(|| {
            SuiteError::Config(format!("check '{}' needs a 'map' parameter", check.name))
        })?;
        self.map(&name)
    }

    /// Resolves every name a check refers to, so that errors surface before running.
    fn prepare(&self, check: &CheckSpec) -> Result<Job, SuiteError> {
        let kind = check.name.as_str();
        Ok(match kind {
            "axioms" => {
                let n = self.config.dimension;
                let names: Vec<String> = match check.params.get("maps") {
                    Some(Value::Array(a)) => a
                        .iter()
                        .map(|v| {
                            v.as_str().map(str::to_string).ok_or_else(|| {
                                SuiteError::Config("axioms: 'maps' must list names".into())
                            })
                        })
                        .collect::<Result<_, _>>()?,
                    Some(_) => {
                        return Err(SuiteError::Config("axioms: 'maps' must list names".into()))
                    }
                    None => self
                        .maps
                        .iter()
                        .filter(|(_, m)| m.in_dim() == n)
                        .map(|(k, _)| k.clone())
                        .collect(),
                };
                let maps = names
                    .iter()
                    .map(|s| self.map(s))
                    .collect::<Result<Vec<_>, _>>()?;
                Job::Axioms(n, maps)
            }
            "connection" => Job::Connection(self.space_param(check, "space")?),
            "ftf" => Job::Ftf(self.space_param(check, "space")?),
            "morphism" | "horizontal" => {
                let f = self.required_map(check)?;
                let src = self.space_param(check, "source")?;
                let dst = self.space_param(check, "target")?;
                if f.in_dim() != src.n || f.out_dim() != dst.n {
                    return Err(SuiteError::Config(format!(
                        "check '{}': map is {} -> {} but spaces have dimensions {} and {}",
                        check.name,
                        f.in_dim(),
                        f.out_dim(),
                        src.n,
                        dst.n
                    )));
                }
                if kind == "morphism" {
                    Job::Morphism(f, src, dst)
                } else {
                    Job::Horizontal(f, src, dst)
                }
            }
            "self-morphism" => {
                let f = match self.param_str(check, "map")? {
                    Some(name) => Some(self.map(&name)?),
                    None => None,
                };
                Job::SelfMorphism(self.space_param(check, "space")?, f)
            }
            "jubin" => {
                let n = self.config.dimension;
                let pairs = self
                    .config
                    .jubin
                    .iter()
                    .map(|(a, b)| match (parse_rational(a), parse_rational(b)) {
                        (Some(a), Some(b)) => Ok((a, b)),
                        _ => Err(SuiteError::Config(format!(
                            "invalid rational pair ({a}, {b})"
                        ))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if pairs.is_empty() {
                    return Err(SuiteError::Config(
                        "check 'jubin' needs a non-empty 'jubin' list".into(),
                    ));
                }
                Job::Bimonad(n, pairs)
            }
            other => return Err(SuiteError::Config(format!("unknown check '{other}'"))),
        })
    }
}

enum Job {
    Axioms(usize, Vec<SmoothMap>),
    Connection(GeometricSpace),
    Ftf(GeometricSpace),
    Morphism(SmoothMap, GeometricSpace, GeometricSpace),
    Horizontal(SmoothMap, GeometricSpace, GeometricSpace),
    SelfMorphism(GeometricSpace, Option<SmoothMap>),
    Bimonad(
        usize,
        Vec<(num_rational::BigRational, num_rational::BigRational)>,
    ),
}

impl Job {
    fn run(self, cfg: &SampleConfig) -> Vec<LawReport> {
        match self {
            Job::Axioms(n, maps) => vec![verify_tangent_axioms(n, &maps, cfg)],
            Job::Connection(g) => {
                let c = g.connection.with_horizontal();
                let h = c.h().expect("synthesized").clone();
                vec![
                    verify_vertical_connection(&c, cfg),
                    is_torsion_free(&c, cfg),
                    is_flat(&c, cfg),
                    verify_horizontal(&c, &h, cfg),
                    verify_compatibility(&c, cfg),
                    verify_lift_lemma(&c, cfg),
                ]
            }
            Job::Ftf(g) => vec![ftf_equivalence(&g.connection, cfg).report],
            Job::Morphism(f, src, dst) => vec![
                is_geometric_morphism(&f, &src, &dst, cfg).expect("dimensions checked"),
                is_locally_affine(&f, cfg),
            ],
            Job::Horizontal(f, src, dst) => {
                let with_h =
                    |g: GeometricSpace| GeometricSpace::new(g.connection.with_horizontal());
                vec![
                    is_horizontal_preserving(&f, &with_h(src), &with_h(dst), cfg)
                        .expect("dimensions checked and H synthesized"),
                ]
            }
            Job::SelfMorphism(g, f) => vec![check_self_morphism(&g, f.as_ref(), cfg)],
            Job::Bimonad(n, pairs) => {
                let mut out: Vec<LawReport> = pairs
                    .into_iter()
                    .map(|(a, b)| verify_instance(&build_instance(a, b, n)))
                    .collect();
                let mut canon = LawReport::new(format!("canonical-monad[n={n}]"));
                canon.push(canonical_multiplication_check(n));
                out.push(canon);
                out
            }
        }
    }
}

/// The reports that decide a check. A morphism check counts only the morphism
/// square; the local-affineness report is informational.
fn counted<'a>(kind: &str, reports: &'a [LawReport]) -> &'a [LawReport] {
    match kind {
        "morphism" => &reports[..reports.len().min(1)],
        _ => reports,
    }
}

/// Runs every check of a config; results are sorted by check name.
pub fn run(config: &SuiteConfig) -> Result<SuiteReport, SuiteError> {
    let ctx = Context::new(config)?;
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    let mut jobs = Vec::with_capacity(config.checks.len());
    for check in &config.checks {
        let base = check.label.clone().unwrap_or_else(|| check.name.clone());
        let count = names.entry(base.clone()).or_insert(0);
        *count += 1;
        let name = if *count == 1 {
            base
        } else {
            format!("{base}#{count}")
        };
        jobs.push((name, check.name.clone(), ctx.prepare(check)?));
    }
    let cfg = ctx.cfg;
    let mut checks: Vec<CheckResult> = jobs
        .into_par_iter()
        .map(|(name, kind, job)| {
            let reports = job.run(&cfg);
            let decisive = counted(&kind, &reports);
            let status = aggregate(decisive.iter().map(|r| r.status));
            let max_residual = decisive
                .iter()
                .map(LawReport::max_residual)
                .fold(0.0, f64::max);
            CheckResult {
                name,
                kind,
                status,
                max_residual,
                reports,
            }
        })
        .collect();
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(SuiteReport {
        status: aggregate(checks.iter().map(|c| c.status)),
        seed: cfg.seed,
        samples: cfg.samples,
        tolerance: cfg.tolerance,
        dimension: config.dimension,
        checks,
    })
}

/// Loads, runs and writes the report; returns the exit code.
pub fn run_suite(
    config_path: &Path,
    report_path: Option<&Path>,
) -> Result<(SuiteReport, i32), SuiteError> {
    let config = SuiteConfig::load(config_path)?;
    let report = run(&config)?;
    if let Some(out) = report_path {
        std::fs::write(out, report.to_json()).map_err(|e| SuiteError::Io {
            path: out.display().to_string(),
            message: e.to_string(),
        })?;
    }
    let code = report.exit_code();
    Ok((report, code))
}

fn fmt_residual(v: &Value) -> String {
    v.as_f64()
        .map_or_else(|| "n/a".to_string(), |x| format!("{x:.3e}"))
}

/// Human-readable rendering of a report document.
pub fn render_report(doc: &Value) -> String {
    let mut out = String::new();
    let field = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).unwrap_or("?").to_string();
    out.push_str(&format!(
        "suite: {}  (n = {}, seed = {}, samples = {}, tolerance = {})\n",
        field(doc, "status").to_uppercase(),
        doc.get("dimension").unwrap_or(&Value::Null),
        doc.get("seed").unwrap_or(&Value::Null),
        doc.get("samples").unwrap_or(&Value::Null),
        doc.get("tolerance").unwrap_or(&Value::Null),
    ));
    let empty = Vec::new();
    for check in doc
        .get("checks")
        .and_then(Value::as_array)
        .unwrap_or(&empty)
    {
        out.push_str(&format!(
            "\n[{}] {} ({})  max residual {}\n",
            field(check, "status").to_uppercase(),
            field(check, "name"),
            field(check, "kind"),
            fmt_residual(check.get("max_residual").unwrap_or(&Value::Null)),
        ));
        for rep in check
            .get("reports")
            .and_then(Value::as_array)
            .unwrap_or(&empty)
        {
            out.push_str(&format!(
                "  {} [{}]\n",
                field(rep, "name"),
                field(rep, "status")
            ));
            for law in rep.get("laws").and_then(Value::as_array).unwrap_or(&empty) {
                out.push_str(&format!(
                    "    {:<13} {:<60} {}\n",
                    field(law, "status"),
                    field(law, "law"),
                    fmt_residual(law.get("max_residual").unwrap_or(&Value::Null)),
                ));
                if let Some(w) = law.get("witness") {
                    out.push_str(&format!(
                        "      witness input {}\n      lhs {}\n      rhs {}\n",
                        w.get("input").unwrap_or(&Value::Null),
                        w.get("lhs").unwrap_or(&Value::Null),
                        w.get("rhs").unwrap_or(&Value::Null),
                    ));
                }
                if let Some(d) = law.get("detail").and_then(Value::as_str) {
                    out.push_str(&format!("      {d}\n"));
                }
            }
            for note in rep.get("notes").and_then(Value::as_array).unwrap_or(&empty) {
                out.push_str(&format!("    note: {}\n", note.as_str().unwrap_or("")));
            }
        }
    }
    out
}
