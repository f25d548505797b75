//! The subcommands. Each one reads the validated configuration, writes its
//! CSV files into the output directory and records them in the manifest.

use crate::config::ExperimentConfig;
use crate::manifest::{CacheRecord, RunManifest};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprlab_core::group::cache::{load_orbit, read_meta, store_orbit};
use sprlab_core::group::{
    closed_geodesics_from_orbit, default_geodesic_slack, enumerate_orbit, estimate_exponent, measure_arc,
    patterson_atoms, GroupPresentation, Orbit,
};
use sprlab_core::infinity::{spr_verdict, SprConfig};
use sprlab_core::kernel::{shadow_arc, UnitTangent};
use sprlab_core::metric::metric_norm;
use sprlab_core::stretch::{attach_lengths, current_average_i, derivative_experiment, instantaneous_stretch};
use sprlab_core::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GroupValidate,
    Exponent,
    Spr,
    Stretch,
    Lengths,
    Shadows,
    Derivative,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GroupValidate => "group-validate",
            Command::Exponent => "exponent",
            Command::Spr => "spr",
            Command::Stretch => "stretch",
            Command::Lengths => "lengths",
            Command::Shadows => "shadows",
            Command::Derivative => "derivative",
        }
    }
}

/// Shared state of one invocation.
pub struct Run {
    pub config: ExperimentConfig,
    pub group: GroupPresentation,
    pub out_dir: PathBuf,
    pub cache: Option<PathBuf>,
    pub manifest: RunManifest,
}

/// Shortest round-trip rendering, so equal inputs give equal bytes.
fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl Run {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join(name), body)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// The orbit up to `r`, from the cache when it holds enough of it.
    fn orbit(&mut self, r: f64) -> Result<Orbit> {
        let cap = self.config.enumeration.word_cap;
        let Some(path) = self.cache.clone() else {
            return self
                .manifest
                .stage("enumerate", || enumerate_orbit(&self.group, r, cap));
        };
        let mut note = None;
        if path.exists() {
            let meta = read_meta(&path)?;
            if meta.group_hash != self.group.content_hash() {
                note = Some(format!("cache holds group {}, replaced", meta.group_hash));
            } else if meta.r_max < r {
                note = Some(format!("cache reaches {} < {r}, replaced", meta.r_max));
            } else {
                let orbit = self
                    .manifest
                    .stage("cache-load", || load_orbit(&path, &self.group))?;
                self.manifest.cache.push(CacheRecord {
                    path: path.display().to_string(),
                    hit: true,
                    note,
                });
                return Ok(orbit.truncate(r));
            }
        }
        let orbit = self
            .manifest
            .stage("enumerate", || enumerate_orbit(&self.group, r, cap))?;
        self.manifest
            .stage("cache-store", || store_orbit(&path, &orbit))?;
        self.manifest.cache.push(CacheRecord {
            path: path.display().to_string(),
            hit: false,
            note,
        });
        Ok(orbit)
    }

    fn r_max(&self) -> f64 {
        self.config.enumeration.r_max
    }

    pub fn execute(&mut self, command: Command) -> Result<String> {
        match command {
            Command::GroupValidate => self.group_validate(),
            Command::Exponent => self.exponent(),
            Command::Spr => self.spr(),
            Command::Stretch => self.stretch(),
            Command::Lengths => self.lengths(),
            Command::Shadows => self.shadows(),
            Command::Derivative => self.derivative(),
        }
    }

    fn group_validate(&mut self) -> Result<String> {
        let g = &self.group;
        let mut csv = String::from("label;a;b;c;d;trace;displacement;type\n");
        let mut text = format!(
            "group {} ({:?}), {} generators\n",
            g.content_hash(),
            g.kind(),
            g.generators().len()
        );
        for (gen, disp) in g.generators().iter().zip(g.displacements()) {
            let m = gen.map;
            let kind = if m.is_parabolic() {
                "parabolic"
            } else {
                "hyperbolic"
            };
            let _ = writeln!(
                csv,
                "{};{};{};{};{};{};{};{kind}",
                gen.label,
                m.a,
                m.b,
                m.c,
                m.d,
                m.trace(),
                disp
            );
            let _ = writeln!(text, "  {:<6} {kind:<10} displacement {disp:.6}", gen.label);
        }
        self.write("group.csv", &csv)?;
        Ok(text)
    }

    fn exponent(&mut self) -> Result<String> {
        let r = self.r_max();
        let orbit = self.orbit(r)?;
        let window = self
            .config
            .exponent
            .window
            .map(|w| (w[0], w[1]))
            .unwrap_or((r / 2.0, r));
        let e = self
            .manifest
            .stage("exponent", || estimate_exponent(&orbit, window))?;
        let mut csv = String::from("R_min;R_max;delta;residual;count;slope_se;bisection;running_max\n");
        let _ = writeln!(
            csv,
            "{};{};{};{};{};{};{};{}",
            num(window.0),
            num(window.1),
            num(e.value),
            num(e.residual),
            e.count,
            num(e.slope_se),
            opt(e.bisection),
            num(e.running_max)
        );
        self.write("exponent.csv", &csv)?;
        let mut counts = String::from("R;N\n");
        let steps = (r / 0.25).floor() as usize;
        for k in 0..=steps {
            let rr = 0.25 * k as f64;
            let _ = writeln!(counts, "{};{}", num(rr), orbit.count_within(rr));
        }
        self.write("counts.csv", &counts)?;
        Ok(format!(
            "delta = {:.6} on [{}, {}] ({} orbit points)\n",
            e.value,
            window.0,
            window.1,
            orbit.len()
        ))
    }

    fn spr(&mut self) -> Result<String> {
        let orbit = self.orbit(self.r_max())?;
        let s = &self.config.spr;
        let config = SprConfig {
            ladder: s.ladder.clone(),
            regression: s.regression.map(|w| (w[0], w[1])),
            step: s.step,
        };
        let group = self.group.clone();
        let report = self
            .manifest
            .stage("spr", || spr_verdict(&group, &orbit, &config))?;
        let mut csv = String::from("R_W;delta_out;residual;count\n");
        for rung in &report.delta_out_ladder {
            let e = &rung.estimate;
            let _ = writeln!(
                csv,
                "{};{};{};{}",
                num(rung.r_w),
                num(e.value),
                num(e.residual),
                rung.out_count
            );
        }
        self.write("spr.csv", &csv)?;
        let verdict = serde_json::to_value(report.verdict).map_err(|e| Error::Invalid(e.to_string()))?;
        let verdict = verdict.as_str().unwrap_or("undecided").to_string();
        let mut rec = String::from("delta;delta_residual;delta_infinity;gap;noise;verdict\n");
        let _ = writeln!(
            rec,
            "{};{};{};{};{};{verdict}",
            num(report.delta_full.value),
            num(report.delta_full.residual),
            num(report.delta_infinity),
            num(report.gap),
            num(report.noise)
        );
        self.write("spr_verdict.csv", &rec)?;
        Ok(format!(
            "delta = {:.4}, delta_inf = {:.4}, gap = {:.4} (noise {:.4}): {verdict}\n",
            report.delta_full.value, report.delta_infinity, report.gap, report.noise
        ))
    }

    fn stretch(&mut self) -> Result<String> {
        let p = self.config.perturbation()?.clone();
        let phi = p.field(&self.group)?;
        let metrics = p.metrics(&phi)?;
        let sc = self.config.stretch.clone();
        let o = self.group.basepoint();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.run.seed);
        let vectors: Vec<UnitTangent> = (0..sc.samples)
            .map(|_| {
                let dir = UnitTangent::new(o, rng.random_range(0.0..std::f64::consts::TAU));
                let base = dir.flow(rng.random_range(0.0..sc.ball_radius)).base;
                UnitTangent::new(base, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let mut csv = String::from("index;x;y;angle;eps;stretch;norm;excess\n");
        let mut summary = String::from("eps;mean_stretch;min_stretch;max_excess\n");
        let mut text = String::new();
        for m in &metrics {
            let rows = self.manifest.stage(&format!("stretch eps={}", m.eps()), || {
                use rayon::prelude::*;
                vectors
                    .par_iter()
                    .map(|v| {
                        Ok((
                            instantaneous_stretch(v, m, sc.fd_step, sc.horizon)?.value,
                            metric_norm(m, v)?,
                        ))
                    })
                    .collect::<Result<Vec<(f64, f64)>>>()
            })?;
            for (i, (v, (e, n))) in vectors.iter().zip(&rows).enumerate() {
                let _ = writeln!(
                    csv,
                    "{i};{};{};{};{};{};{};{}",
                    num(v.base.x()),
                    num(v.base.y()),
                    num(v.angle()),
                    num(m.eps()),
                    num(*e),
                    num(*n),
                    num(e - n)
                );
            }
            let mean = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
            let min = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
            let excess = rows.iter().map(|r| r.0 - r.1).fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                summary,
                "{};{};{};{}",
                num(m.eps()),
                num(mean),
                num(min),
                num(excess)
            );
            let _ = writeln!(
                text,
                "eps {:+}: mean stretch {mean:.6}, max E - |v| = {excess:.2e}",
                m.eps()
            );
        }
        self.write("stretch.csv", &csv)?;
        self.write("stretch_summary.csv", &summary)?;
        Ok(text)
    }

    fn lengths(&mut self) -> Result<String> {
        let lc = self.config.lengths.clone();
        let slack = lc.slack.unwrap_or_else(|| default_geodesic_slack(&self.group));
        let orbit = self.orbit(lc.l_max + slack)?;
        let group = self.group.clone();
        let mut geos = self.manifest.stage("closed-geodesics", || {
            closed_geodesics_from_orbit(&group, &orbit, lc.l_max, lc.dedup_inversion)
        });
        let mut ids = Vec::new();
        let mut stalled = 0;
        if let Some(p) = self.config.perturbation.clone() {
            let phi = p.field(&self.group)?;
            for m in p.metrics(&phi)? {
                let report = self
                    .manifest
                    .stage(&format!("lengths {}", m.id()), || attach_lengths(&mut geos, &m))?;
                stalled += report.stalled;
                ids.push(m.id().to_string());
            }
        }
        let labels = self.group.labels();
        let mut csv = String::from("rep;label;length_g0");
        for id in &ids {
            let _ = write!(csv, ";length_{}", id.replace('=', "_"));
        }
        csv.push('\n');
        for g in &geos {
            let _ = write!(
                csv,
                "{};{};{}",
                g.rep,
                g.rep.to_label_string(&labels),
                num(g.length0)
            );
            for id in &ids {
                let _ = write!(csv, ";{}", num(g.lengths[id]));
            }
            csv.push('\n');
        }
        self.write("lengths.csv", &csv)?;
        let mut text = format!("{} primitive classes up to {}\n", geos.len(), lc.l_max);
        if !ids.is_empty() {
            let bands = if lc.bands.is_empty() {
                vec![[lc.l_max - 1.0, lc.l_max]]
            } else {
                lc.bands.clone()
            };
            let mut b = String::from("band_lo;band_hi;metric;count;I_forward;I_backward;spread\n");
            for band in &bands {
                for id in &ids {
                    let fwd = current_average_i(&geos, "g0", id, (band[0], band[1]))?;
                    let bwd = current_average_i(&geos, id, "g0", (band[0], band[1]))?;
                    let _ = writeln!(
                        b,
                        "{};{};{id};{};{};{};{}",
                        num(band[0]),
                        num(band[1]),
                        fwd.geodesic_count,
                        num(fwd.value),
                        num(bwd.value),
                        num(fwd.spread)
                    );
                }
            }
            self.write("bands.csv", &b)?;
            let _ = writeln!(text, "{stalled} relaxations stalled");
        }
        Ok(text)
    }

    fn shadows(&mut self) -> Result<String> {
        let r = self.r_max();
        let sh = self.config.shadows.clone();
        let r_far = sh.r_far.unwrap_or(r - 4.0);
        if !(r_far > 0.0 && r_far < r) {
            return Err(Error::Invalid(format!(
                "shadows.r_far = {r_far} must lie inside (0, {r})"
            )));
        }
        let orbit = self.orbit(r)?;
        let delta = self
            .manifest
            .stage("exponent", || estimate_exponent(&orbit, (r / 2.0, r)))?
            .value;
        let s = delta + sh.margin;
        let o = self.group.basepoint();
        let atoms = self
            .manifest
            .stage("patterson", || patterson_atoms(&orbit, s, o, delta, sh.margin))?;
        let candidates: Vec<usize> = (0..orbit.len())
            .filter(|&i| {
                let d = orbit.points[i].dist;
                d >= sh.dist_range[0] && d <= sh.dist_range[1]
            })
            .collect();
        if candidates.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no orbit points with distance in {:?}",
                sh.dist_range
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.run.seed);
        let mut chosen: Vec<usize> = sample(&mut rng, candidates.len(), sh.samples.min(candidates.len()))
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        chosen.sort_unstable();
        let mut csv = String::from("word;dist;shadow_mass;exp_minus_delta_d;ratio\n");
        let mut ratios = Vec::with_capacity(chosen.len());
        for &i in &chosen {
            let p = &orbit.points[i];
            let arc = shadow_arc(o, p.image, sh.radius)?;
            let mass = measure_arc(&atoms, &arc, r_far)?;
            let pred = (-delta * p.dist).exp();
            ratios.push(mass / pred);
            let _ = writeln!(
                csv,
                "{};{};{};{};{}",
                p.word,
                num(p.dist),
                num(mass),
                num(pred),
                num(mass / pred)
            );
        }
        self.write("shadows.csv", &csv)?;
        let positive: Vec<f64> = ratios.iter().copied().filter(|r| *r > 0.0).collect();
        let centre = (positive.iter().map(|r| r.ln()).sum::<f64>() / positive.len().max(1) as f64).exp();
        let c = if positive.len() == ratios.len() {
            positive
                .iter()
                .map(|r| (r / centre).max(centre / r))
                .fold(1.0, f64::max)
        } else {
            f64::INFINITY
        };
        let mut summary = String::from("delta;s;radius;samples;K;c\n");
        let _ = writeln!(
            summary,
            "{};{};{};{};{};{}",
            num(delta),
            num(s),
            num(sh.radius),
            ratios.len(),
            num(centre),
            num(c)
        );
        self.write("shadows_summary.csv", &summary)?;
        Ok(format!(
            "{} shadows: ratios within [K/c, K·c] with K = {centre:.4}, c = {c:.4}\n",
            ratios.len()
        ))
    }

    fn derivative(&mut self) -> Result<String> {
        let p = self.config.perturbation()?.clone();
        let phi = p.field(&self.group)?;
        p.metrics(&phi)?;
        let dc = self.config.derivative.to_core();
        let group = self.group.clone();
        let ex = self
            .manifest
            .stage("derivative", || derivative_experiment(&group, phi, &p.eps, &dc))?;
        let mut csv = String::from("eps;h_estimate;h_residual;I_forward;I_backward;bm_avg_phi\n");
        let _ = writeln!(
            csv,
            "0;{};{};1;1;{}",
            num(ex.h0.value),
            num(ex.h0.residual),
            num(ex.bm_avg_phi)
        );
        for r in &ex.rungs {
            let _ = writeln!(
                csv,
                "{};{};{};{};{};{}",
                num(r.eps),
                num(r.h.value),
                num(r.h.residual),
                num(r.i_forward),
                num(r.i_backward),
                num(ex.bm_avg_phi)
            );
        }
        self.write("derivative.csv", &csv)?;
        let mut summary = String::from(
            "h0;bm_avg_phi;bm_count;fd_slope;fd_residual;predicted_slope;relative_error;i_slope;i_relative_error;class_count;stalled\n",
        );
        let stalled: usize = ex.rungs.iter().map(|r| r.stalled).sum();
        let _ = writeln!(
            summary,
            "{};{};{};{};{};{};{};{};{};{};{stalled}",
            num(ex.h0.value),
            num(ex.bm_avg_phi),
            ex.bm_count,
            num(ex.fd_slope),
            num(ex.fd_residual),
            num(ex.predicted_slope),
            opt(ex.relative_error),
            num(ex.i_slope),
            opt(ex.i_relative_error),
            ex.class_count
        );
        self.write("derivative_summary.csv", &summary)?;
        let mut katok = String::from("eps;h_estimate;katok_proxy;katok_holds;orbit_h\n");
        for r in &ex.rungs {
            let _ = writeln!(
                katok,
                "{};{};{};{};{}",
                num(r.eps),
                num(r.h.value),
                num(r.katok_proxy),
                r.katok_holds,
                opt(r.orbit_h)
            );
        }
        self.write("katok.csv", &katok)?;
        Ok(format!(
            "fd_slope = {:.6}, predicted = {:.6}, relative error {}\n",
            ex.fd_slope,
            ex.predicted_slope,
            ex.relative_error
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "undefined".into())
        ))
    }
}

/// Output directory: the flag, then the config, then `spr-lab-out`.
pub fn resolve_out(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.run.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("spr-lab-out"))
}
