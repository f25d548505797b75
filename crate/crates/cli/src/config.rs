//! Experiment configuration, read from TOML.

use serde::{Deserialize, Serialize};
use sprlab_core::group::{catalog, GroupKind, GroupPresentation};
use sprlab_core::kernel::{BoundaryArc, BoundaryPoint, HPoint, MobiusMap};
use sprlab_core::metric::{Bump, BumpField, ConformalMetric};
use sprlab_core::{Error, Generator, Result};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: GroupConfig,
    #[serde(default)]
    pub enumeration: EnumerationConfig,
    #[serde(default)]
    pub exponent: ExponentConfig,
    #[serde(default)]
    pub spr: SprSection,
    #[serde(default)]
    pub shadows: ShadowConfig,
    #[serde(default)]
    pub lengths: LengthsConfig,
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub stretch: StretchConfig,
    #[serde(default)]
    pub derivative: DerivativeSection,
    #[serde(default)]
    pub run: RunConfig,
}

/// Either a catalog preset or explicit generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub preset: Option<String>,
    /// `"schottky"` or `"geometrically_finite_free"`, for explicit groups.
    pub kind: Option<String>,
    #[serde(default)]
    pub generators: Vec<GeneratorConfig>,
    pub basepoint: Option<[f64; 2]>,
    /// Preset parameters.
    pub rank: Option<usize>,
    pub half_width_deg: Option<f64>,
    pub factors: Option<Vec<String>>,
    pub centers: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub cusps: Option<Vec<f64>>,
}

/// One generator given by paired disks `[center, radius]`, by disk-model
/// arcs `[center_deg, half_width_deg]` seen from the basepoint, or by a
/// matrix `[a, b, c, d]` with its two domains as boundary intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub label: String,
    pub disks: Option<[[f64; 2]; 2]>,
    pub arcs: Option<[[f64; 2]; 2]>,
    pub matrix: Option<[f64; 4]>,
    /// `[from, to]` in the extended reals, `"inf"` allowed.
    pub domain_minus: Option<[String; 2]>,
    pub domain_plus: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnumerationConfig {
    pub r_max: f64,
    pub word_cap: usize,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        Self {
            r_max: 14.0,
            word_cap: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentConfig {
    /// Defaults to the upper half of the enumeration radius.
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SprSection {
    pub ladder: Vec<f64>,
    pub step: f64,
    pub regression: Option<[f64; 2]>,
}

impl Default for SprSection {
    fn default() -> Self {
        Self {
            ladder: vec![2.0, 2.5, 3.0],
            step: sprlab_core::infinity::EXCURSION_STEP,
            regression: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowConfig {
    pub radius: f64,
    pub samples: usize,
    pub dist_range: [f64; 2],
    /// Defaults to `r_max − 4`.
    pub r_far: Option<f64>,
    pub margin: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            radius: 2.0,
            samples: 50,
            dist_range: [8.0, 10.0],
            r_far: None,
            margin: sprlab_core::group::PATTERSON_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LengthsConfig {
    pub l_max: f64,
    pub dedup_inversion: bool,
    pub slack: Option<f64>,
    /// Bands for the `I` averages, used when a perturbation is given.
    pub bands: Vec<[f64; 2]>,
}

impl Default for LengthsConfig {
    fn default() -> Self {
        Self {
            l_max: 10.0,
            dedup_inversion: false,
            slack: None,
            bands: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub bumps: Vec<BumpConfig>,
    #[serde(default)]
    pub periodize: bool,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StretchConfig {
    pub samples: usize,
    /// Base points are drawn in this hyperbolic ball about the basepoint.
    pub ball_radius: f64,
    pub fd_step: f64,
    pub horizon: f64,
}

impl Default for StretchConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            ball_radius: 1.5,
            fd_step: sprlab_core::stretch::DEFAULT_FD_STEP,
            horizon: sprlab_core::stretch::DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DerivativeSection {
    pub l_max: f64,
    pub band: [f64; 2],
    pub window: [f64; 2],
    pub orbit_points: usize,
    pub slack: Option<f64>,
}

impl Default for DerivativeSection {
    fn default() -> Self {
        let d = sprlab_core::stretch::DerivativeConfig::default();
        Self {
            l_max: d.l_max,
            band: d.band.into(),
            window: d.window.into(),
            orbit_points: 0,
            slack: None,
        }
    }
}

impl DerivativeSection {
    pub fn to_core(&self) -> sprlab_core::stretch::DerivativeConfig {
        sprlab_core::stretch::DerivativeConfig {
            l_max: self.l_max,
            band: self.band.into(),
            window: self.window.into(),
            orbit_points: self.orbit_points,
            slack: self.slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: None,
            out: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn interval(name: &str, w: [f64; 2]) -> Result<()> {
    if w[0] < w[1] && w[0].is_finite() && w[1].is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be an increasing pair, got {w:?}")))
    }
}

fn boundary_point(s: &str) -> Result<BoundaryPoint> {
    match s.trim() {
        "inf" | "infinity" | "∞" => Ok(BoundaryPoint::Infinity),
        t => t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(BoundaryPoint::Finite)
            .ok_or_else(|| Error::Parse(format!("boundary point {s:?} is neither a number nor \"inf\""))),
    }
}

impl GeneratorConfig {
    fn build(&self, o: HPoint) -> Result<Generator> {
        let given = [self.disks.is_some(), self.arcs.is_some(), self.matrix.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(invalid(format!(
                "generator {:?} needs exactly one of disks, arcs, matrix",
                self.label
            )));
        }
        if let Some([m, p]) = self.disks {
            return Generator::from_disks(self.label.clone(), (m[0], m[1]), (p[0], p[1]));
        }
        if let Some([m, p]) = self.arcs {
            let arc = |a: [f64; 2]| sprlab_core::group::angular_arc(o, a[0].to_radians(), a[1].to_radians());
            return Generator::from_arcs(self.label.clone(), arc(m)?, arc(p)?, o);
        }
        let [a, b, c, d] = self.matrix.expect("checked above");
        let (Some(dm), Some(dp)) = (&self.domain_minus, &self.domain_plus) else {
            return Err(invalid(format!(
                "matrix generator {:?} needs domain_minus and domain_plus",
                self.label
            )));
        };
        let arc = |d: &[String; 2]| BoundaryArc::new(boundary_point(&d[0])?, boundary_point(&d[1])?);
        Ok(Generator::new(
            self.label.clone(),
            MobiusMap::new(a, b, c, d)?,
            arc(dm)?,
            arc(dp)?,
        ))
    }
}

impl GroupConfig {
    pub fn build(&self) -> Result<GroupPresentation> {
        let o = match self.basepoint {
            Some([x, y]) => HPoint::new(x, y)?,
            None => sprlab_core::BASEPOINT,
        };
        let half = || {
            self.half_width_deg
                .map(f64::to_radians)
                .ok_or_else(|| invalid("preset needs half_width_deg"))
        };
        let Some(preset) = &self.preset else {
            if self.generators.is_empty() {
                return Err(invalid("group needs a preset or at least one generator"));
            }
            let kind = match self.kind.as_deref() {
                Some("schottky") | None => GroupKind::Schottky,
                Some("geometrically_finite_free") => GroupKind::GeometricallyFiniteFree,
                Some(k) => return Err(invalid(format!("unknown group kind {k:?}"))),
            };
            let gens = self
                .generators
                .iter()
                .map(|g| g.build(o))
                .collect::<Result<Vec<_>>>()?;
            return GroupPresentation::new(kind, gens, o);
        };
        if !self.generators.is_empty() {
            return Err(invalid("give either a preset or explicit generators, not both"));
        }
        if self.basepoint.is_some_and(|b| b != [0.0, 1.0]) {
            return Err(invalid("presets are built around the basepoint (0, 1)"));
        }
        match preset.as_str() {
            "cyclic_parabolic" => Ok(catalog::cyclic_parabolic()),
            "cyclic_hyperbolic" => Ok(catalog::cyclic_hyperbolic()),
            "regular_schottky" => catalog::regular_schottky(self.rank.unwrap_or(2), half()?),
            "symmetric_schottky" => {
                let [c1, c2] = self
                    .centers
                    .ok_or_else(|| invalid("symmetric_schottky needs centers"))?;
                catalog::symmetric_schottky(
                    c1,
                    c2,
                    self.radius
                        .ok_or_else(|| invalid("symmetric_schottky needs radius"))?,
                )
            }
            "regular_free_product" => {
                let factors = self
                    .factors
                    .as_ref()
                    .ok_or_else(|| invalid("regular_free_product needs factors"))?
                    .iter()
                    .map(|f| match f.as_str() {
                        "parabolic" => Ok(true),
                        "hyperbolic" => Ok(false),
                        other => Err(invalid(format!(
                            "factor {other:?} is neither parabolic nor hyperbolic"
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                catalog::regular_free_product(&factors, half()?)
            }
            "parabolic_free_product" => catalog::parabolic_free_product(
                self.cusps
                    .as_deref()
                    .ok_or_else(|| invalid("parabolic_free_product needs cusps"))?,
                self.radius
                    .ok_or_else(|| invalid("parabolic_free_product needs radius"))?,
            ),
            other => Err(invalid(format!("unknown preset {other:?}"))),
        }
    }
}

impl PerturbationConfig {
    pub fn field(&self, group: &GroupPresentation) -> Result<Arc<BumpField>> {
        let bumps = self
            .bumps
            .iter()
            .map(|b| {
                Ok(Bump {
                    center: HPoint::new(b.cx, b.cy)?,
                    radius: b.radius,
                    amplitude: b.amplitude,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let field = if self.periodize {
            BumpField::periodized(bumps, group)?
        } else {
            BumpField::new(bumps)?
        };
        Ok(Arc::new(field))
    }

    /// Metrics along the ladder; fails when a rung misses the curvature
    /// certificate.
    pub fn metrics(&self, phi: &Arc<BumpField>) -> Result<Vec<ConformalMetric>> {
        self.eps
            .iter()
            .map(|&e| ConformalMetric::new(phi.clone(), e))
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that does not need the group.
    pub fn validate(&self) -> Result<()> {
        positive("enumeration.r_max", self.enumeration.r_max)?;
        if self.enumeration.word_cap == 0 {
            return Err(invalid("enumeration.word_cap must be positive"));
        }
        if let Some(w) = self.exponent.window {
            interval("exponent.window", w)?;
        }
        if self.spr.ladder.len() < 3 || self.spr.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("spr.ladder needs at least 3 strictly increasing radii"));
        }
        if !(self.spr.step > 0.0 && self.spr.step <= 0.25) {
            return Err(invalid(format!(
                "spr.step must lie in (0, 0.25], got {}",
                self.spr.step
            )));
        }
        if let Some(w) = self.spr.regression {
            interval("spr.regression", w)?;
        }
        positive("shadows.radius", self.shadows.radius)?;
        interval("shadows.dist_range", self.shadows.dist_range)?;
        if self.shadows.samples == 0 {
            return Err(invalid("shadows.samples must be positive"));
        }
        positive("lengths.l_max", self.lengths.l_max)?;
        for b in &self.lengths.bands {
            interval("lengths.bands", *b)?;
        }
        if self.stretch.samples == 0 {
            return Err(invalid("stretch.samples must be positive"));
        }
        positive("stretch.ball_radius", self.stretch.ball_radius)?;
        positive("derivative.l_max", self.derivative.l_max)?;
        interval("derivative.band", self.derivative.band)?;
        interval("derivative.window", self.derivative.window)?;
        if let Some(p) = &self.perturbation {
            if p.bumps.is_empty() {
                return Err(invalid("perturbation needs at least one bump"));
            }
            if p.eps.is_empty() {
                return Err(invalid("perturbation.eps must not be empty"));
            }
            for b in &p.bumps {
                positive("bump radius", b.radius)?;
            }
        }
        if self.run.threads == Some(0) {
            return Err(invalid("run.threads must be positive"));
        }
        Ok(())
    }

    pub fn perturbation(&self) -> Result<&PerturbationConfig> {
        self.perturbation
            .as_ref()
            .ok_or_else(|| invalid("this command needs a [perturbation] section"))
    }
}
