//! Numerical laboratory for discrete groups of isometries of the hyperbolic
//! plane and conformal perturbations of the hyperbolic metric.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod group;
pub mod infinity;
pub mod kernel;
pub mod metric;
pub mod stats;
pub mod stretch;
pub mod word;

pub use error::{Error, ErrorClass, Result};
pub use group::{
    closed_geodesics, enumerate_orbit, estimate_exponent, measure_arc, patterson_atoms, reduce_to_domain,
    ClosedGeodesic, ExponentEstimate, Generator, GroupKind, GroupPresentation, Orbit, OrbitPoint,
};
pub use kernel::{
    apply_mobius, busemann_exact, dynamical_ball_contains, hopf_coords, hopf_inverse, hyp_distance,
    shadow_arc, BoundaryArc, BoundaryPoint, HPoint, HopfCoordinates, MobiusMap, UnitTangent, BASEPOINT,
};
pub use metric::{
    busemann_approx, closed_geodesic_length, integrate_geodesic, metric_norm, perturbed_distance, Bump,
    BumpField, ConformalMetric,
};
pub use stretch::{
    bm_average, current_average_i, derivative_experiment, instantaneous_stretch, morse_psi, CurrentAverage,
    DerivativeConfig, DerivativeExperiment, StretchSample,
};
pub use word::Word;
