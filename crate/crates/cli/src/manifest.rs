//! Run manifest and the machine-readable error record.

use serde::Serialize;
use sprlab_core::{Error, ErrorClass};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheRecord {
    pub path: String,
    pub hit: bool,
    /// Why a present cache file was not used.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: String,
    /// SHA-256 of the effective configuration (after flag overrides).
    pub config_hash: String,
    pub group_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub stages: Vec<Stage>,
    pub cache: Vec<CacheRecord>,
    pub outputs: Vec<String>,
    /// Every numerical default in force, so no default is silent.
    pub tolerances: BTreeMap<&'static str, f64>,
}

impl RunManifest {
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Library constants that shape the numbers in every output.
pub fn default_tolerances() -> BTreeMap<&'static str, f64> {
    use sprlab_core::{group, infinity, kernel, metric, stretch};
    BTreeMap::from([
        ("kernel.dynamical_ball_step", kernel::DYNAMICAL_BALL_STEP),
        ("group.reduction_step_cap", group::REDUCTION_STEP_CAP as f64),
        ("group.min_exponent_points", group::MIN_EXPONENT_POINTS as f64),
        ("group.patterson_margin", group::PATTERSON_MARGIN),
        ("group.exponent_grid", group::EXPONENT_GRID as f64),
        ("infinity.excursion_step", infinity::EXCURSION_STEP),
        ("infinity.min_excursions", infinity::MIN_EXCURSIONS as f64),
        ("infinity.verdict_noise_multiple", 2.0),
        ("metric.distance_tol", metric::DISTANCE_TOL),
        ("metric.certificate_grid", metric::CERTIFICATE_GRID),
        ("metric.certificate_safety", metric::CERTIFICATE_SAFETY),
        ("metric.max_horizon", metric::MAX_HORIZON),
        ("stretch.min_band_classes", stretch::MIN_BAND_CLASSES as f64),
        ("stretch.default_fd_step", stretch::DEFAULT_FD_STEP),
        ("stretch.default_horizon", stretch::DEFAULT_HORIZON),
        ("stretch.derivative_grid", stretch::DERIVATIVE_GRID as f64),
        ("stretch.max_orbit_points", stretch::MAX_ORBIT_POINTS as f64),
    ])
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Validation | ErrorClass::Io => 2,
        ErrorClass::Budget => 3,
        ErrorClass::Solver => 4,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub command: String,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(command: &str, e: &Error) -> Self {
        Self {
            command: command.into(),
            kind: e.kind(),
            exit_code: exit_code(e),
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(exit_code(&Error::Invalid("x".into())), 2);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 2);
        assert_eq!(exit_code(&Error::BudgetExceeded("x".into())), 3);
        assert_eq!(exit_code(&Error::NonTermination(5)), 4);
    }
}
