//! Geometric spaces over `R^n` and the maps between them.

use thiserror::Error;

use crate::connection::{ftf_equivalence, lift_connection, Connection, GeometricSpace};
use crate::jet::{JetError, JetPoint, LevelSet};
use crate::map::SmoothMap;
use crate::report::{check_fn, check_maps, LawOutcome, LawReport, SampleConfig};
use crate::tangent::t_m_lift;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("map is {found_in} -> {found_out} but the spaces have dimensions {src} and {dst}")]
    Dimension {
        found_in: usize,
        found_out: usize,
        src: usize,
        dst: usize,
    },
    #[error("the {0} space has no horizontal connection")]
    MissingHorizontal(&'static str),
}

fn check_dims(f: &SmoothMap, src: usize, dst: usize) -> Result<(), GeometryError> {
    if f.in_dim() != src || f.out_dim() != dst {
        return Err(GeometryError::Dimension {
            found_in: f.in_dim(),
            found_out: f.out_dim(),
            src,
            dst,
        });
    }
    Ok(())
}

pub const MORPHISM_LAW: &str = "T2(f);K_dst = K_src;T(f)";
pub const HORIZONTAL_LAW: &str = "T_2(f);H_dst = H_src;T2(f)";

fn morphism_law(
    f: &SmoothMap,
    src: &Connection,
    dst: &Connection,
    cfg: &SampleConfig,
) -> LawOutcome {
    match (
        f.tangent_power(2).then(dst.k()),
        src.k().then(&f.tangent_lift()),
    ) {
        (Ok(l), Ok(r)) => check_maps(MORPHISM_LAW, &l, &r, cfg),
        (Err(e), _) | (_, Err(e)) => LawOutcome::verdict(MORPHISM_LAW, false, e.to_string()),
    }
}

/// `T^2(f);K_dst = K_src;T(f)` on sampled points of `T^2 R^n`.
pub fn is_geometric_morphism(
    f: &SmoothMap,
    src: &GeometricSpace,
    dst: &GeometricSpace,
    cfg: &SampleConfig,
) -> Result<LawReport, GeometryError> {
    check_dims(f, src.n, dst.n)?;
    let mut r = LawReport::new(format!("morphism[{f}]"));
    r.push(morphism_law(f, &src.connection, &dst.connection, cfg));
    Ok(r)
}

/// All second partials `∂_i ∂_j f_c(x)`, indexed `[c][i·p + j]`, read off the
/// `{0,1}` component of an order-2 jet seeded with `e_i` on level 0 and
/// `e_j` on level 1.
pub fn second_partials(f: &SmoothMap, x: &[f64]) -> Result<Vec<Vec<f64>>, JetError> {
    let (p, q) = (f.in_dim(), f.out_dim());
    let mut out = vec![vec![0.0; p * p]; q];
    for i in 0..p {
        for j in i..p {
            let mut comps = vec![x.to_vec(), vec![0.0; p], vec![0.0; p], vec![0.0; p]];
            comps[1][i] = 1.0;
            comps[2][j] = 1.0;
            let y = f.eval_jet(&JetPoint::from_components(2, comps)?)?;
            let top = y.component(LevelSet::new(0b11, 2)?);
            for (c, v) in top.iter().enumerate() {
                out[c][i * p + j] = *v;
                out[c][j * p + i] = *v;
            }
        }
    }
    Ok(out)
}

/// One law per output component: every second partial vanishes.
pub fn is_locally_affine(f: &SmoothMap, cfg: &SampleConfig) -> LawReport {
    let (p, q) = (f.in_dim(), f.out_dim());
    let mut r = LawReport::new(format!("locally-affine[{f}]"));
    for c in 0..q {
        let law = format!("component {c}: second partials vanish");
        r.push(check_fn(&law, cfg, p, cfg.tolerance, |x| {
            let h = second_partials(f, x)?.swap_remove(c);
            let zeros = vec![0.0; h.len()];
            Ok((h, zeros))
        }));
    }
    r
}

/// `(TM, K_T)`.
pub fn tangent_space(g: &GeometricSpace) -> GeometricSpace {
    GeometricSpace::new(lift_connection(&g.connection))
}

/// `K` as a morphism `(T^2 M, K_{T²}) -> (TM, K_T)`, gated on the flat and
/// torsion-free equivalence. A supplied map `f: M -> M` is additionally checked
/// for the naturality square `T^2(f);K = K;T(f)` and its lift `T(f)` against `K_T`.
pub fn check_self_morphism(
    g: &GeometricSpace,
    naturality: Option<&SmoothMap>,
    cfg: &SampleConfig,
) -> LawReport {
    let n = g.n;
    let mut r = LawReport::new(format!("self-morphism[n={n}]"));
    let ftf = ftf_equivalence(&g.connection, cfg);
    if !(ftf.flat_torsion_free && ftf.agree()) {
        r.push(LawOutcome::skipped(
            "K: (T2M, K_T2) -> (TM, K_T)",
            "precondition failed: connection is not flat and torsion-free",
        ));
        r.note(format!(
            "ftf conditions: (i) {}, (ii) {}, (iii) {}",
            ftf.flat_torsion_free, ftf.lifted_square, ftf.self_morphism
        ));
        return r;
    }
    let tm = tangent_space(g);
    let t2m = tangent_space(&tm);
    let k = g.k();
    r.push(
        morphism_law(k, &t2m.connection, &tm.connection, cfg)
            .with_law("K: (T2M, K_T2) -> (TM, K_T)"),
    );
    if let Some(f) = naturality {
        if f.in_dim() != n || f.out_dim() != n {
            r.push(LawOutcome::verdict(
                "naturality",
                false,
                format!(
                    "map is {} -> {}, expected {n} -> {n}",
                    f.in_dim(),
                    f.out_dim()
                ),
            ));
        } else {
            r.push(
                morphism_law(f, &g.connection, &g.connection, cfg)
                    .with_law("naturality: T2(f);K = K;T(f)"),
            );
            r.push(
                morphism_law(&f.tangent_lift(), &tm.connection, &tm.connection, cfg)
                    .with_law("naturality: T(f) on (TM, K_T)"),
            );
        }
    }
    r
}

/// `T_2(f);H_dst = H_src;T^2(f)`, reported together with the `K`-square and
/// whether the two agree.
pub fn is_horizontal_preserving(
    f: &SmoothMap,
    src: &GeometricSpace,
    dst: &GeometricSpace,
    cfg: &SampleConfig,
) -> Result<LawReport, GeometryError> {
    check_dims(f, src.n, dst.n)?;
    let hs = src
        .connection
        .h()
        .ok_or(GeometryError::MissingHorizontal("source"))?;
    let hd = dst
        .connection
        .h()
        .ok_or(GeometryError::MissingHorizontal("target"))?;
    let mut r = LawReport::new(format!("horizontal-preserving[{f}]"));
    let lhs = t_m_lift(f, 2).and_then(|t2| t2.then(hd));
    let rhs = hs.then(&f.tangent_power(2));
    let h_law = match (lhs, rhs) {
        (Ok(l), Ok(rr)) => check_maps(HORIZONTAL_LAW, &l, &rr, cfg),
        (Err(e), _) | (_, Err(e)) => LawOutcome::verdict(HORIZONTAL_LAW, false, e.to_string()),
    };
    let k_law = morphism_law(f, &src.connection, &dst.connection, cfg);
    let agree = LawOutcome::verdict(
        "agrees with K-square",
        h_law.passed() == k_law.passed(),
        format!("H-square {:?}, K-square {:?}", h_law.status, k_law.status),
    );
    r.extend([h_law, k_law, agree]);
    Ok(r)
}
