//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use num_rational::BigRational;
use tangent_core::bimonad::{
    build_instance, canonical_multiplication_check, monad_associativity, monad_multiplication,
    parse_rational, verify_comonad_laws, verify_mixed_law, verify_monad_laws, BimonadInstance,
};
use tangent_core::connection::{
    connection_from_christoffel, curvature_tensor, ftf_equivalence, lift_connection,
    pullback_connection, torsion_tensor, verify_compatibility, verify_lift_lemma,
    verify_vertical_connection, ChristoffelField, Connection, GeometricSpace, TORSION_LAW,
};
use tangent_core::geometry::{
    check_self_morphism, is_geometric_morphism, is_horizontal_preserving, is_locally_affine,
    HORIZONTAL_LAW, MORPHISM_LAW,
};
use tangent_core::report::{sample_point, sample_rng};
use tangent_core::suite::{run, run_suite, SuiteConfig};
use tangent_core::tangent::verify_tangent_axioms;
use tangent_core::{parse_map, AffineMap, Coeff, LawOutcome, SampleConfig, SmoothMap, Status};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn map(src: &str, n: usize, m: usize) -> SmoothMap {
    parse_map(src, n, m).unwrap_or_else(|e| panic!("{src}: {e}"))
}

fn field(n: usize, nonzero: &[((usize, usize, usize), &str)]) -> ChristoffelField {
    ChristoffelField::sparse(n, nonzero).expect("christoffel field")
}

fn failing_law(out: &LawOutcome) -> Result<(), String> {
    ensure(
        out.status == Status::Fail,
        format!("{} did not fail", out.law),
    )?;
    ensure(
        out.witness.is_some(),
        format!("{} failed without a witness", out.law),
    )
}

// 1 -------------------------------------------------------------------------

fn tangent_axioms() -> Verdict {
    let start = Instant::now();
    let cfg = SampleConfig::new(200, 1, 1e-9);
    let mut worst: f64 = 0.0;
    let mut laws = 0;
    for n in 1..=3 {
        let mut maps = vec![map("sin(x0)", n, 1)];
        if n >= 2 {
            maps.push(map("exp(x0)*x1", n, 1));
        }
        let cubic = (0..n)
            .map(|i| format!("x{i}^3 - 2*x{}*x{i} + 0.5*x{i}^2 - 1", (i + 1) % n))
            .collect::<Vec<_>>()
            .join("; ");
        maps.push(map(&cubic, n, n));
        maps.push(map("x0^3 + 3*x0*x0 - x0", n, 1));
        let rep = verify_tangent_axioms(n, &maps, &cfg);
        for law in &rep.laws {
            ensure(
                law.passed(),
                format!("n={n}: {} is {:?}", law.law, law.status),
            )?;
            if law.tolerance == 0.0 {
                ensure(
                    law.max_residual == 0.0,
                    format!(
                        "n={n}: structural law {} has residual {}",
                        law.law, law.max_residual
                    ),
                )?;
            }
            worst = worst.max(law.max_residual);
        }
        laws += rep.laws.len();
    }
    ensure(worst < 1e-9, format!("max residual {worst:e}"))?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), format!("took {t:?}"))?;
    Ok(format!("{laws} laws, max residual {worst:.1e}, {t:.2?}"))
}

// 2 -------------------------------------------------------------------------

fn vertical_connections() -> Verdict {
    let cfg = SampleConfig::new(200, 2, 1e-6);
    let fields = [
        ("zero n=1", ChristoffelField::zero(1)),
        ("zero n=2", ChristoffelField::zero(2)),
        ("zero n=3", ChristoffelField::zero(3)),
        (
            "polynomial n=1",
            field(1, &[((0, 0, 0), "x0^3 - 2*x0 + 1")]),
        ),
        (
            "polynomial n=2",
            field(
                2,
                &[
                    ((0, 0, 1), "x0*x1"),
                    ((1, 1, 0), "x0^2 - x1"),
                    ((1, 1, 1), "3"),
                ],
            ),
        ),
        ("sin n=1", field(1, &[((0, 0, 0), "sin(x0)")])),
        (
            "sin n=2",
            field(
                2,
                &[
                    ((0, 0, 0), "sin(x1)"),
                    ((1, 0, 1), "cos(x0)*sin(x1)"),
                    ((0, 1, 1), "sin(x0*x1)"),
                ],
            ),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (name, f) in &fields {
        let rep = verify_vertical_connection(&connection_from_christoffel(f), &cfg);
        ensure(rep.passed(), format!("{name}: {:?}", rep.failures().next()))?;
        worst = worst.max(rep.max_residual());
    }
    ensure(worst < 1e-6, format!("max residual {worst:e}"))?;
    Ok(format!(
        "{} connections, max residual {worst:.1e}",
        fields.len()
    ))
}

// 3 -------------------------------------------------------------------------

struct Case {
    name: &'static str,
    connection: Connection,
}

fn case_from_field(name: &'static str, f: ChristoffelField) -> Case {
    Case {
        name,
        connection: connection_from_christoffel(&f),
    }
}

fn battery() -> Vec<Case> {
    let cfg = SampleConfig::new(50, 3, 1e-9);
    let pullback = |target: Connection, phi: &str, psi: &str, n: usize| {
        pullback_connection(&target, &map(phi, n, n), &map(psi, n, n), &cfg).expect("pullback")
    };
    vec![
        case_from_field("zero n=1", ChristoffelField::zero(1)),
        case_from_field("zero n=2", ChristoffelField::zero(2)),
        case_from_field("zero n=3", ChristoffelField::zero(3)),
        case_from_field("n=1 constant 1", ChristoffelField::constant(1, 1)),
        case_from_field("n=1 x0^2", field(1, &[((0, 0, 0), "x0^2")])),
        case_from_field("n=1 sin", field(1, &[((0, 0, 0), "sin(x0)")])),
        case_from_field("n=2 constant 1", ChristoffelField::constant(2, 1)),
        Case {
            name: "pullback of zero along exp",
            connection: pullback(Connection::zero(1), "exp(x0)", "log(x0)", 1),
        },
        Case {
            name: "pullback of zero along x+x^3/3 shear",
            connection: pullback(Connection::zero(2), "x0; x1 + x0^3/3", "x0; x1 - x0^3/3", 2),
        },
        Case {
            name: "pullback of zero along triangular cubic",
            connection: pullback(Connection::zero(2), "x0 + x1^2; x1", "x0 - x1^2; x1", 2),
        },
        case_from_field("n=2 torsion constant", field(2, &[((0, 0, 1), "1")])),
        case_from_field("n=2 torsion x0", field(2, &[((1, 0, 1), "x0")])),
        case_from_field("n=2 curvature G^0_00 = x0", field(2, &[((0, 0, 0), "x0")])),
        case_from_field("n=2 curvature G^0_00 = x1", field(2, &[((0, 0, 0), "x1")])),
        case_from_field(
            "n=2 curvature and torsion",
            field(2, &[((0, 0, 1), "x1"), ((1, 1, 1), "x0")]),
        ),
    ]
}

/// Flat and torsion-free according to the tensor formulas at sampled points.
fn tensor_oracle(c: &Connection) -> bool {
    let f = c.christoffel();
    let n = f.dim();
    let mut seen = 0;
    for i in 0..200 {
        let x = sample_point(&mut sample_rng(99, "oracle", i, 0), n);
        let (Ok(t), Ok(r)) = (torsion_tensor(&f, &x), curvature_tensor(&f, &x)) else {
            continue;
        };
        seen += 1;
        if t.iter().chain(&r).any(|v| v.abs() > 1e-8) {
            return false;
        }
    }
    assert!(seen > 0, "oracle found no point in the domain");
    true
}

fn ftf_battery() -> Verdict {
    let cfg = SampleConfig::new(100, 4, 1e-9);
    let cases = battery();
    let mut flat = 0;
    for case in &cases {
        let out = ftf_equivalence(&case.connection, &cfg);
        ensure(
            out.agree(),
            format!(
                "{}: conditions disagree ({}, {}, {})",
                case.name, out.flat_torsion_free, out.lifted_square, out.self_morphism
            ),
        )?;
        let oracle = tensor_oracle(&case.connection);
        ensure(
            out.flat_torsion_free == oracle,
            format!(
                "{}: checker says {}, tensors say {oracle}",
                case.name, out.flat_torsion_free
            ),
        )?;
        flat += usize::from(oracle);
    }
    ensure(cases.len() >= 12, "battery too small")?;
    Ok(format!(
        "{} connections ({flat} flat and torsion-free), all agree with tensor oracles",
        cases.len()
    ))
}

// 4 -------------------------------------------------------------------------

fn lifting() -> Verdict {
    let cfg = SampleConfig::new(100, 5, 1e-6);
    let mut lifted = 0;
    let mut worst: f64 = 0.0;
    for case in battery() {
        if !tensor_oracle(&case.connection) {
            continue;
        }
        let kt = lift_connection(&case.connection);
        let v = verify_vertical_connection(&kt, &cfg);
        ensure(
            v.passed(),
            format!("{}: lift is not a vertical connection", case.name),
        )?;
        let lemma = verify_lift_lemma(&case.connection, &cfg);
        ensure(
            lemma.passed() && lemma.max_residual() < 1e-6,
            format!(
                "{}: lift lemma residual {}",
                case.name,
                lemma.max_residual()
            ),
        )?;
        let ftf = ftf_equivalence(&kt, &cfg);
        ensure(
            ftf.flat_torsion_free && ftf.agree(),
            format!("{}: lifted connection fails ftf", case.name),
        )?;
        worst = worst.max(v.max_residual()).max(lemma.max_residual());
        lifted += 1;
    }
    Ok(format!(
        "{lifted} flat torsion-free connections lifted, max residual {worst:.1e}"
    ))
}

// 5 -------------------------------------------------------------------------

fn self_morphism() -> Verdict {
    let start = Instant::now();
    let cfg = SampleConfig::new(200, 6, 1e-6);
    let spaces = [
        ("zero n=1", GeometricSpace::flat(1)),
        ("zero n=2", GeometricSpace::flat(2)),
        (
            "constant 1 n=1",
            GeometricSpace::from_christoffel(&ChristoffelField::constant(1, 1)),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (name, g) in &spaces {
        let rep = check_self_morphism(g, None, &cfg);
        ensure(
            rep.status == Status::Pass,
            format!("{name}: {:?}", rep.status),
        )?;
        worst = worst.max(rep.max_residual());
    }
    ensure(worst < 1e-6, format!("max residual {worst:e}"))?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), format!("took {t:?}"))?;
    Ok(format!("3 spaces, max residual {worst:.1e}, {t:.2?}"))
}

// 6 -------------------------------------------------------------------------

fn hspace(f: &ChristoffelField) -> GeometricSpace {
    GeometricSpace::new(connection_from_christoffel(f).with_horizontal())
}

fn morphism_equivalences() -> Verdict {
    let cfg = SampleConfig::new(200, 7, 1e-9);
    let flat1 = hspace(&ChristoffelField::zero(1));
    let flat2 = hspace(&ChristoffelField::zero(2));
    let one1 = hspace(&ChristoffelField::constant(1, 1));
    let pulled = GeometricSpace::new(
        pullback_connection(
            &Connection::zero(2),
            &map("x0; x1 + x0^3/3", 2, 2),
            &map("x0; x1 - x0^3/3", 2, 2),
            &cfg,
        )
        .expect("pullback")
        .with_horizontal(),
    );
    let cases: Vec<(
        &str,
        SmoothMap,
        &GeometricSpace,
        &GeometricSpace,
        Option<bool>,
    )> = vec![
        (
            "exp (Γ=1 -> Γ=0)",
            map("exp(x0)", 1, 1),
            &one1,
            &flat1,
            Some(true),
        ),
        ("x^2", map("x0^2", 1, 1), &flat1, &flat1, Some(false)),
        ("3x+7", map("3*x0 + 7", 1, 1), &flat1, &flat1, Some(true)),
        (
            "log (Γ=0 -> Γ=1)",
            map("log(x0)", 1, 1),
            &flat1,
            &one1,
            Some(true),
        ),
        (
            "exp (flat)",
            map("exp(x0)", 1, 1),
            &flat1,
            &flat1,
            Some(false),
        ),
        ("sin", map("sin(x0)", 1, 1), &flat1, &flat1, Some(false)),
        ("cubic", map("x0^3 - x0", 1, 1), &flat1, &flat1, Some(false)),
        ("id R^2", SmoothMap::identity(2), &flat2, &flat2, Some(true)),
        (
            "linear R^2",
            map("x0 + 2*x1; 3*x0 - x1 + 4", 2, 2),
            &flat2,
            &flat2,
            Some(true),
        ),
        (
            "affine R^2 -> R",
            map("x0 - 2*x1 + 1", 2, 1),
            &flat2,
            &flat1,
            Some(true),
        ),
        (
            "product R^2 -> R",
            map("x0*x1", 2, 1),
            &flat2,
            &flat1,
            Some(false),
        ),
        (
            "shear to flat",
            map("x0; x1 + x0^3/3", 2, 2),
            &pulled,
            &flat2,
            Some(true),
        ),
        (
            "shear flat to flat",
            map("x0; x1 + x0^3/3", 2, 2),
            &flat2,
            &flat2,
            Some(false),
        ),
    ];
    let mut compared_affine = 0;
    for (name, f, src, dst, expected) in &cases {
        let k = is_geometric_morphism(f, src, dst, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let h = is_horizontal_preserving(f, src, dst, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let k_ok = k.law(MORPHISM_LAW).is_some_and(LawOutcome::passed);
        let h_ok = h.law(HORIZONTAL_LAW).is_some_and(LawOutcome::passed);
        ensure(
            k_ok == h_ok,
            format!("{name}: K-square {k_ok}, H-square {h_ok}"),
        )?;
        if let Some(want) = expected {
            ensure(k_ok == *want, format!("{name}: expected morphism = {want}"))?;
        }
        let zero_gamma = |g: &GeometricSpace| {
            g.connection
                .christoffel()
                .entries()
                .is_some_and(|e| e.iter().all(|x| x.is_zero_literal()))
        };
        if zero_gamma(src) && zero_gamma(dst) {
            let affine = is_locally_affine(f, &cfg).passed();
            ensure(
                affine == k_ok,
                format!("{name}: locally affine {affine}, morphism {k_ok}"),
            )?;
            compared_affine += 1;
        }
    }
    let sq = is_geometric_morphism(&map("x0^2", 1, 1), &flat1, &flat1, &cfg).unwrap();
    let law = sq.law(MORPHISM_LAW).unwrap();
    let w = law.witness.as_ref().ok_or("x^2 failed without a witness")?;
    let (v, wv) = (w.input[1], w.input[2]);
    let gap = w.lhs[1] - w.rhs[1];
    ensure(
        (gap - 2.0 * v * wv).abs() <= 1e-9 * gap.abs().max(1.0),
        format!("x^2 witness gap {gap} is not 2vw = {}", 2.0 * v * wv),
    )?;
    Ok(format!(
        "{} maps, {compared_affine} also against local affineness; x^2 gap = 2vw",
        cases.len()
    ))
}

// 7 -------------------------------------------------------------------------

fn q(s: &str) -> BigRational {
    parse_rational(s).expect("rational")
}

/// Negates the `d` coefficient of the last output block of `λ`.
fn mutated_lambda(inst: &BimonadInstance) -> SmoothMap {
    let n = inst.n;
    let mut rows = Vec::new();
    let block = |terms: &[(usize, BigRational)], rows: &mut Vec<Vec<(usize, Coeff)>>| {
        for k in 0..n {
            rows.push(
                terms
                    .iter()
                    .filter(|(_, c)| *c != BigRational::from_integer(0.into()))
                    .map(|(b, c)| (b * n + k, Coeff::new(c.clone())))
                    .collect(),
            );
        }
    };
    let one = q("1");
    block(&[(0, one.clone())], &mut rows);
    block(&[(2, one.clone())], &mut rows);
    block(
        &[(1, one.clone()), (2, one.clone()), (3, inst.a.clone())],
        &mut rows,
    );
    block(&[(2, inst.b.clone()), (3, one)], &mut rows);
    SmoothMap::affine(AffineMap::new(4 * n, rows, Vec::new()).expect("affine"))
}

fn bimonad_laws() -> Verdict {
    let mut instances = 0;
    for n in 1..=3 {
        for a in ["0", "1", "-1", "5/3"] {
            for b in ["0", "1", "-1", "-2"] {
                let inst = build_instance(q(a), q(b), n);
                for rep in [
                    verify_monad_laws(&inst, true),
                    verify_comonad_laws(&inst, true),
                    verify_mixed_law(&inst, true),
                ] {
                    for law in &rep.laws {
                        ensure(
                            law.passed() && law.exact && law.max_residual == 0.0,
                            format!("a={a}, b={b}, n={n}: {} ({:?})", law.law, law.detail),
                        )?;
                    }
                }
                let bad = BimonadInstance {
                    lambda: mutated_lambda(&inst),
                    ..inst
                };
                ensure(
                    verify_mixed_law(&bad, true).failed(),
                    format!("a={a}, b={b}, n={n}: mutated lambda passes every square"),
                )?;
                instances += 1;
            }
        }
        ensure(
            canonical_multiplication_check(n).passed(),
            format!("n={n}: mu^0 is not (x, v + w)"),
        )?;
        let mu0 = monad_multiplication(&q("0"), n);
        for i in 0..20 {
            let s = sample_point(&mut sample_rng(8, "mu0", i, 0), 4 * n);
            let got = mu0.eval_point(&s).map_err(|e| e.to_string())?;
            let want: Vec<f64> = (0..n)
                .map(|k| s[k])
                .chain((0..n).map(|k| s[n + k] + s[2 * n + k]))
                .collect();
            ensure(got == want, format!("n={n}: mu^0 at {s:?} gave {got:?}"))?;
        }
    }
    Ok(format!(
        "{instances} instances exact; mu^0 pointwise; mutated lambda rejected"
    ))
}

// 8 -------------------------------------------------------------------------

fn negative_controls() -> Verdict {
    let cfg = SampleConfig::new(100, 9, 1e-9);

    let c = connection_from_christoffel(&field(1, &[((0, 0, 0), "x0")])).with_horizontal();
    let negate_a = AffineMap::new(
        4,
        vec![
            vec![(0, Coeff::int(1))],
            vec![(1, Coeff::int(1))],
            vec![(2, Coeff::int(1))],
            vec![(3, Coeff::int(-1))],
        ],
        Vec::new(),
    )
    .expect("affine");
    let bad_h = c
        .h()
        .expect("horizontal")
        .then(&SmoothMap::affine(negate_a))
        .expect("compose");
    let rep = verify_compatibility(&c.clone().with_h(bad_h), &cfg);
    failing_law(rep.law("<K,p_T>;mu + U;H = 1").ok_or("missing law")?)?;

    let inst = build_instance(q("2"), q("3"), 1);
    let zero_v = AffineMap::new(
        2,
        vec![
            vec![(0, Coeff::int(1))],
            vec![],
            vec![(1, Coeff::int(1))],
            vec![(1, Coeff::int(3))],
        ],
        Vec::new(),
    )
    .expect("affine");
    let rep = verify_comonad_laws(
        &BimonadInstance {
            delta: SmoothMap::affine(zero_v),
            ..inst.clone()
        },
        true,
    );
    failing_law(rep.law("delta;eps_T = 1").ok_or("missing law")?)?;

    let rep = verify_mixed_law(
        &BimonadInstance {
            lambda: mutated_lambda(&inst),
            ..inst.clone()
        },
        true,
    );
    let first = rep.failures().next().ok_or("mutated lambda not detected")?;
    failing_law(first)?;

    let dropped = monad_multiplication(&q("0"), 1);
    let out = monad_associativity(&dropped, &inst.mu, 1, true);
    failing_law(&out)?;
    ensure(out.max_residual > 0.0, "corrupted mu has zero residual")?;

    let torsion = connection_from_christoffel(&field(2, &[((0, 0, 1), "1")]));
    let ftf = ftf_equivalence(&torsion, &cfg);
    failing_law(
        ftf.report
            .law(&format!("(i) {TORSION_LAW}"))
            .ok_or("missing torsion law")?,
    )?;
    ensure(
        !ftf.flat_torsion_free,
        "torsion connection reported torsion-free",
    )?;

    Ok("corrupted H, corrupted delta, mutated lambda, corrupted mu, torsion: all detected with witnesses".into())
}

// 9 -------------------------------------------------------------------------

const SUITE: &str = r#"{
  "dimension": 1,
  "christoffel": ["0"],
  "maps": {
    "e": { "expr": "exp(x0)", "in": 1, "out": 1 },
    "sq": { "expr": "x0^2", "in": 1, "out": 1 }
  },
  "spaces": { "one": { "dimension": 1, "christoffel": ["1"] } },
  "checks": [
    { "name": "axioms", "params": { "maps": ["e", "sq"] } },
    { "name": "ftf" },
    { "name": "morphism", "params": { "map": "e", "source": "one" } },
    { "name": "morphism", "params": { "map": "sq" } },
    { "name": "horizontal", "params": { "map": "e", "source": "one" } },
    { "name": "jubin" }
  ],
  "jubin": [["1", "2"], ["5/3", "-1"]],
  "samples": 64,
  "seed": 2024
}"#;

fn determinism() -> Verdict {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let config = dir.join("suite.json");
    std::fs::write(&config, SUITE).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for i in 0..2 {
        let out = dir.join(format!("report{i}.json"));
        let (_, code) = run_suite(&config, Some(&out)).map_err(|e| e.to_string())?;
        ensure(
            code == 1,
            format!("expected exit 1 (x^2 fails), got {code}"),
        )?;
        bytes.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(bytes[0] == bytes[1], "report files differ")?;
    let parsed = SuiteConfig::from_json(SUITE).map_err(|e| e.to_string())?;
    let again = run(&parsed).map_err(|e| e.to_string())?.to_json();
    ensure(
        again.as_bytes() == bytes[0],
        "in-memory report differs from file",
    )?;
    Ok(format!("{} bytes, identical across runs", bytes[0].len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("tangent axioms", tangent_axioms),
        ("vertical connections", vertical_connections),
        ("flat/torsion-free equivalence", ftf_battery),
        ("lifting", lifting),
        ("self-morphism", self_morphism),
        ("morphism equivalences", morphism_equivalences),
        ("bimonad laws", bimonad_laws),
        ("negative controls", negative_controls),
        ("report determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let t = start.elapsed();
        match verdict {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg} [{t:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg} [{t:.2?}]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
