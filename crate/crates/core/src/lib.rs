//! Iterated tangent bundles of `R^n` evaluated through truncated Weil-algebra
//! jets, with verifiers for tangent-category structure, connections, geometric
//! morphisms and the parametric monad/comonad family on `T`.

pub mod bimonad;
pub mod connection;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod map;
pub mod report;
pub mod suite;
pub mod tangent;

pub use expr::{parse_components, Expr, ParseError};
pub use jet::{
    jet_add, jet_mul, jet_primitive, Coeff, JetError, JetPoint, LevelSet, Primitive, Scalar,
    ScalarJet, MAX_ORDER,
};
pub use map::{
    compose, eval_jet, parse_map, tangent_lift, AffineMap, MapError, Provenance, SmoothMap,
};
pub use report::{
    check_fn, check_maps, check_maps_exact, check_sampled, LawOutcome, LawReport, SampleConfig,
    Status, Witness,
};
