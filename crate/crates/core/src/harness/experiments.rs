//! Rate, return-probability, tightness and RN-weight experiments.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::{affine_fit, mean_and_stderr, wilson, AffineFit, Z95};
use crate::chordal::{self, membership_l, ChordalError};
use crate::driver::{modulus_membership_h, sample_brownian_driver, DriverError, Mode, TightnessConstants};
use crate::geometry::{return_event_hit, GeometryError, ReturnEventSpec, ReturnOutcome};
use crate::radial::{self, rn_weight, sample_chordal_in_disk, RadialError};
use crate::rng::{derive_seed, stream};
use crate::trace::Trace;
use crate::C64;

/// Below this many samples per cell a warning is attached to the estimate.
pub const RECOMMENDED_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Chordal(#[from] ChordalError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Runs `f(i)` for `i in 0..count` on `workers` threads, results in index order.
fn run_indexed<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(u64) -> Result<T, HarnessError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| (0..count as u64).into_par_iter().map(&f).collect())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RateEvent {
    /// The chordal trace on `[0, 1]` reaches `{|z| ≥ radius}` outside the open
    /// cone `θ < arg z < π − θ`.
    ConeAngle {
        theta: f64,
        radius: f64,
    },
    Return {
        n: u32,
        big_n: u32,
        mode: Mode,
    },
    /// The chordal trace on `[0, 1]` comes within `r` of the point 1.
    TargetBall {
        r: f64,
    },
}

impl RateEvent {
    pub fn mode(&self) -> Mode {
        match self {
            RateEvent::Return { mode, .. } => *mode,
            _ => Mode::Chordal,
        }
    }

    pub fn default_horizon(&self) -> f64 {
        match self {
            RateEvent::Return { big_n, mode: Mode::Chordal, .. } => (*big_n as f64).powi(2),
            RateEvent::Return { big_n, mode: Mode::Radial, .. } => *big_n as f64 + 3.0,
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        match *self {
            RateEvent::ConeAngle { theta, radius } => {
                if !(theta > 0.0 && theta <= PI / 2.0) || !(radius > 0.0) {
                    return Err(HarnessError::Config(format!(
                        "cone needs θ ∈ (0, π/2] and radius > 0, got {theta}, {radius}"
                    )));
                }
            }
            RateEvent::Return { n, big_n, mode } => {
                ReturnEventSpec::new(n, big_n, mode)?;
            }
            RateEvent::TargetBall { r } => {
                if !(r > 0.0) {
                    return Err(HarnessError::Config(format!("target ball radius must be positive, got {r}")));
                }
            }
        }
        Ok(())
    }

    /// `Some(hit)` or `None` when the trigger of a return event was not reached.
    pub fn evaluate(&self, g: &Trace) -> Result<Option<bool>, HarnessError> {
        Ok(match *self {
            RateEvent::ConeAngle { theta, radius } => Some(leaves_cone(g.points(), theta, radius)),
            RateEvent::Return { n, big_n, mode } => {
                match return_event_hit(g, &ReturnEventSpec::new(n, big_n, mode)?)? {
                    ReturnOutcome::NotYet => None,
                    o => Some(o.is_hit()),
                }
            }
            RateEvent::TargetBall { r } => Some(distance_to_polyline(C64::new(1.0, 0.0), g.points()) <= r),
        })
    }
}

fn leaves_cone(points: &[C64], theta: f64, radius: f64) -> bool {
    points.iter().any(|p| {
        let a = p.arg();
        p.norm() >= radius && (a <= theta || a >= PI - theta)
    })
}

fn distance_to_polyline(p: C64, poly: &[C64]) -> f64 {
    match poly {
        [] => f64::INFINITY,
        [q] => (p - q).norm(),
        _ => poly
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let len2 = d.norm_sqr();
                let s = if len2 == 0.0 { 0.0 } else { ((p - w[0]) * d.conj()).re / len2 };
                (p - (w[0] + d * s.clamp(0.0, 1.0))).norm()
            })
            .fold(f64::INFINITY, f64::min),
    }
}

/// SLE-type trace driven by `√κ B` on `[0, horizon]`.
fn sample_trace(kappa: f64, horizon: f64, n_steps: usize, mode: Mode, seed: u64) -> Result<Trace, HarnessError> {
    let mut rng = stream(seed, &[]);
    let d = sample_brownian_driver(kappa, horizon, n_steps, mode, &mut rng)?;
    Ok(match mode {
        Mode::Chordal => chordal::forward(&d)?,
        Mode::Radial => radial::forward(&d)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub event: RateEvent,
    pub kappa_grid: Vec<f64>,
    pub samples: usize,
    pub n_steps: usize,
    /// Defaults to [`RateEvent::default_horizon`].
    pub horizon: Option<f64>,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub kappa: f64,
    /// Seed of this κ cell; sample `i` uses substream `[i]` below it.
    pub cell_seed: u64,
    pub samples: usize,
    pub hits: usize,
    /// Samples whose return trigger was not reached on `[0, T]`.
    pub not_yet: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `κ log p̂`, absent for zero-hit cells.
    pub klogp: Option<f64>,
    pub flag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rows: Vec<RateRow>,
    /// Affine fit of `κ log p̂` in κ over cells with hits; its intercept is
    /// the naive κ → 0 extrapolation.
    pub extrapolation: Option<AffineFit>,
    pub warnings: Vec<String>,
}

impl RateEstimate {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "kappa,samples,hits,p_hat,ci_lo,ci_hi,klogp,flag")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.kappa,
                r.samples,
                r.hits,
                r.p_hat,
                r.ci_lo,
                r.ci_hi,
                fmt_opt(r.klogp),
                r.flag
            )?;
        }
        Ok(())
    }
}

fn check_kappa_grid(grid: &[f64]) -> Result<(), HarnessError> {
    if grid.is_empty() || grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(HarnessError::Config("κ grid must be non-empty and positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HarnessError::Config("κ grid must be strictly decreasing".into()));
    }
    Ok(())
}

fn rate_row(kappa: f64, cell_seed: u64, samples: usize, hits: usize, not_yet: usize) -> RateRow {
    let p_hat = if samples == 0 { 0.0 } else { hits as f64 / samples as f64 };
    let (ci_lo, ci_hi) = wilson(hits, samples, Z95);
    let klogp = (hits > 0).then(|| kappa * p_hat.ln());
    let mut flags = Vec::new();
    if hits == 0 {
        flags.push("zero_hits");
    }
    if samples < RECOMMENDED_SAMPLES {
        flags.push("low_samples");
    }
    let flag = if flags.is_empty() { "ok".to_string() } else { flags.join("|") };
    RateRow { kappa, cell_seed, samples, hits, not_yet, p_hat, ci_lo, ci_hi, klogp, flag }
}

pub fn rate_experiment(cfg: &RateConfig) -> Result<RateEstimate, HarnessError> {
    cfg.event.validate()?;
    check_kappa_grid(&cfg.kappa_grid)?;
    if cfg.samples == 0 || cfg.n_steps == 0 {
        return Err(HarnessError::Config("samples and n_steps must be positive".into()));
    }
    let horizon = cfg.horizon.unwrap_or_else(|| cfg.event.default_horizon());
    let mode = cfg.event.mode();
    let mut warnings = Vec::new();
    if cfg.samples < RECOMMENDED_SAMPLES {
        warnings.push(format!("{} samples per cell is below the recommended {RECOMMENDED_SAMPLES}", cfg.samples));
    }
    let mut rows = Vec::with_capacity(cfg.kappa_grid.len());
    for (ki, &kappa) in cfg.kappa_grid.iter().enumerate() {
        let cell_seed = derive_seed(cfg.seed, &[ki as u64]);
        let outcomes = run_indexed(cfg.workers, cfg.samples, |i| {
            let g = sample_trace(kappa, horizon, cfg.n_steps, mode, derive_seed(cell_seed, &[i]))?;
            cfg.event.evaluate(&g)
        })?;
        let hits = outcomes.iter().filter(|o| **o == Some(true)).count();
        let not_yet = outcomes.iter().filter(|o| o.is_none()).count();
        rows.push(rate_row(kappa, cell_seed, cfg.samples, hits, not_yet));
    }
    let (ks, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| r.klogp.map(|y| (r.kappa, y))).unzip();
    Ok(RateEstimate { rows, extrapolation: affine_fit(&ks, &ys), warnings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbConfig {
    pub mode: Mode,
    pub n: u32,
    pub big_ns: Vec<u32>,
    pub kappa: f64,
    pub samples: usize,
    pub n_steps: usize,
    /// Defaults to `max N²` (chordal) or `max N + 3` (radial).
    pub horizon: Option<f64>,
    pub slack: f64,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnRow {
    pub big_n: u32,
    pub samples: usize,
    pub hits: usize,
    pub not_yet: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub flag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbReport {
    pub mode: Mode,
    pub n: u32,
    pub kappa: f64,
    pub horizon: f64,
    pub rows: Vec<ReturnRow>,
    /// Fit of `log p̂` against `log(N/n)` over cells with hits.
    pub fit: Option<AffineFit>,
    /// `−(8/κ − 1)`; the chordal exponent.
    pub reference_slope: f64,
    pub slack: f64,
    pub slope_ok: Option<bool>,
    pub monotone: bool,
    pub pass: bool,
}

impl ReturnProbReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "N,samples,hits,not_yet,p_hat,ci_lo,ci_hi,flag")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.big_n, r.samples, r.hits, r.not_yet, r.p_hat, r.ci_lo, r.ci_hi, r.flag
            )?;
        }
        Ok(())
    }
}

/// One set of traces per sample, evaluated against every `N`.
///
/// PASS needs `p̂` non-increasing in `N` (each `p̂` at most the previous upper
/// CI bound). In chordal mode it also needs the fitted slope to be at most
/// `−(8/κ − 1) + slack`.
pub fn return_prob_experiment(cfg: &ReturnProbConfig) -> Result<ReturnProbReport, HarnessError> {
    if cfg.big_ns.is_empty() || cfg.big_ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::Config("N list must be non-empty and strictly increasing".into()));
    }
    let specs =
        cfg.big_ns.iter().map(|&bn| ReturnEventSpec::new(cfg.n, bn, cfg.mode)).collect::<Result<Vec<_>, _>>()?;
    if !(cfg.kappa > 0.0) || cfg.samples == 0 || cfg.n_steps == 0 {
        return Err(HarnessError::Config("κ, samples and n_steps must be positive".into()));
    }
    let max_n = *cfg.big_ns.last().unwrap();
    let horizon =
        cfg.horizon.unwrap_or_else(|| RateEvent::Return { n: cfg.n, big_n: max_n, mode: cfg.mode }.default_horizon());
    let cell_seed = derive_seed(cfg.seed, &[0]);
    let outcomes = run_indexed(cfg.workers, cfg.samples, |i| {
        let g = sample_trace(cfg.kappa, horizon, cfg.n_steps, cfg.mode, derive_seed(cell_seed, &[i]))?;
        specs.iter().map(|s| Ok(return_event_hit(&g, s)?)).collect::<Result<Vec<_>, HarnessError>>()
    })?;
    let rows: Vec<ReturnRow> = specs
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let hits = outcomes.iter().filter(|o| o[j].is_hit()).count();
            let not_yet = outcomes.iter().filter(|o| o[j] == ReturnOutcome::NotYet).count();
            let r = rate_row(cfg.kappa, cell_seed, cfg.samples, hits, not_yet);
            ReturnRow {
                big_n: s.big_n,
                samples: r.samples,
                hits,
                not_yet,
                p_hat: r.p_hat,
                ci_lo: r.ci_lo,
                ci_hi: r.ci_hi,
                flag: r.flag,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.hits > 0).map(|r| ((r.big_n as f64 / cfg.n as f64).ln(), r.p_hat.ln())).unzip();
    let fit = affine_fit(&xs, &ys);
    let reference_slope = -(8.0 / cfg.kappa - 1.0);
    let monotone = rows.windows(2).all(|w| w[1].p_hat <= w[0].ci_hi);
    let slope_ok = fit.as_ref().map(|f| f.slope <= reference_slope + cfg.slack);
    let pass = monotone
        && match cfg.mode {
            Mode::Chordal => slope_ok == Some(true),
            Mode::Radial => true,
        };
    Ok(ReturnProbReport {
        mode: cfg.mode,
        n: cfg.n,
        kappa: cfg.kappa,
        horizon,
        rows,
        fit,
        reference_slope,
        slack: cfg.slack,
        slope_ok,
        monotone,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnCheckConfig {
    pub kappa: f64,
    /// Capacity-time horizon.
    pub horizon: f64,
    pub delta: f64,
    pub samples: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnSample {
    pub sample: usize,
    /// Evaluation time `τ_δ ∧ T`.
    pub t: f64,
    /// `τ_δ` when it occurred before `T`.
    pub tau_delta: Option<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnCheckReport {
    pub kappa: f64,
    pub horizon: f64,
    pub delta: f64,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    /// `|mean − 1| / stderr`.
    pub z_score: f64,
    /// Fraction of paths stopped at `τ_δ` before `T`.
    pub stopped_fraction: f64,
    /// Weighted estimate of the radial probability of `{τ_δ > T}`.
    pub radial_survival: f64,
    pub pass: bool,
    #[serde(skip)]
    pub rows: Vec<RnSample>,
}

impl RnCheckReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sample,t,tau_delta,weight")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.sample, r.t, fmt_opt(r.tau_delta), r.weight)?;
        }
        Ok(())
    }
}

/// Mean of the radial/chordal weight over chordal Θ paths at `τ_δ ∧ T`.
///
/// PASS iff the mean is within three standard errors of 1; with zero
/// spread (e.g. `T = 0`) the mean must equal 1 up to rounding.
pub fn rn_martingale_check(cfg: &RnCheckConfig) -> Result<RnCheckReport, HarnessError> {
    if !(cfg.kappa > 0.0) || !(cfg.delta > 0.0 && cfg.delta < 1.0) || !(cfg.horizon >= 0.0) || cfg.samples == 0 {
        return Err(HarnessError::Config("need κ > 0, δ ∈ (0,1), T ≥ 0 and samples > 0".into()));
    }
    let n_steps = cfg.n_steps.max(1);
    let cell_seed = derive_seed(cfg.seed, &[0]);
    let rows = run_indexed(cfg.workers, cfg.samples, |i| {
        let mut rng = stream(cell_seed, &[i]);
        let (_, path) = sample_chordal_in_disk(cfg.kappa, cfg.horizon, n_steps, cfg.delta, &mut rng)?;
        let t = path.horizon().min(cfg.horizon);
        let w = rn_weight(&path, cfg.kappa, t, cfg.delta)?;
        Ok(RnSample { sample: i as usize, t: w.t, tau_delta: path.stopped_at.map(|_| path.horizon()), weight: w.value })
    })?;
    let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    let (mean, stderr) = mean_and_stderr(&weights);
    let z_score = if stderr > 0.0 { (mean - 1.0).abs() / stderr } else { 0.0 };
    let pass = if stderr > 0.0 { z_score <= 3.0 } else { (mean - 1.0).abs() < 1e-12 };
    let stopped = rows.iter().filter(|r| r.tau_delta.is_some()).count();
    let survival = rows.iter().filter(|r| r.tau_delta.is_none()).map(|r| r.weight).sum::<f64>() / cfg.samples as f64;
    Ok(RnCheckReport {
        kappa: cfg.kappa,
        horizon: cfg.horizon,
        delta: cfg.delta,
        samples: cfg.samples,
        mean,
        stderr,
        z_score,
        stopped_fraction: stopped as f64 / cfg.samples as f64,
        radial_survival: survival,
        pass,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessConfig {
    pub kappa_grid: Vec<f64>,
    pub n_list: Vec<usize>,
    pub constants: TightnessConstants,
    pub samples: usize,
    /// Driver resolution on `[0, 1]`.
    pub n_steps: usize,
    /// Number of `y` levels for `L(n)`; zero skips `L(n)`.
    pub l_y_grid: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub kappa: f64,
    pub n: usize,
    pub samples: usize,
    pub h_violations: usize,
    pub h_freq: f64,
    pub l_violations: Option<usize>,
    pub l_freq: Option<f64>,
    /// `(n/2)^{1 − 1/(2κ)}` at unit constant; qualitative shape only.
    pub bound_shape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessTable {
    pub rows: Vec<TightnessRow>,
}

impl TightnessTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "kappa,n,samples,h_violations,h_freq,l_violations,l_freq,bound_shape")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.kappa,
                r.n,
                r.samples,
                r.h_violations,
                r.h_freq,
                r.l_violations.map(|v| v.to_string()).unwrap_or_default(),
                fmt_opt(r.l_freq),
                r.bound_shape
            )?;
        }
        Ok(())
    }
}

/// `(n/2)^{1 − 1/(2κ)}`, zero for κ = 0.
pub fn tightness_bound_shape(kappa: f64, n: usize) -> f64 {
    if kappa <= 0.0 {
        0.0
    } else {
        (n as f64 / 2.0).powf(1.0 - 1.0 / (2.0 * kappa))
    }
}

/// Violation frequencies of `H(n)` and `L(n)` for `√κ B` on `[0, 1]`.
///
/// The same driver sample `i` of a κ cell is reused across all `n`.
pub fn tightness_experiment(cfg: &TightnessConfig) -> Result<TightnessTable, HarnessError> {
    if cfg.kappa_grid.iter().any(|k| !(*k >= 0.0)) || cfg.n_list.iter().any(|&n| n < 3) || cfg.samples == 0 {
        return Err(HarnessError::Config("need κ ≥ 0, every n ≥ 3 and samples > 0".into()));
    }
    let mut rows = Vec::new();
    for (ki, &kappa) in cfg.kappa_grid.iter().enumerate() {
        let cell_seed = derive_seed(cfg.seed, &[ki as u64]);
        let flags = run_indexed(cfg.workers, cfg.samples, |i| {
            let mut rng = stream(cell_seed, &[i]);
            let d = sample_brownian_driver(kappa, 1.0, cfg.n_steps, Mode::Chordal, &mut rng)?;
            cfg.n_list
                .iter()
                .map(|&n| {
                    let h = modulus_membership_h(&d, n, cfg.constants.c3)?.in_h;
                    let l =
                        if cfg.l_y_grid > 0 { membership_l(&d, n, cfg.constants, cfg.l_y_grid)?.in_l } else { None };
                    Ok((h, l))
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })?;
        for (j, &n) in cfg.n_list.iter().enumerate() {
            let h_violations = flags.iter().filter(|f| !f[j].0).count();
            let l_violations = (cfg.l_y_grid > 0).then(|| flags.iter().filter(|f| f[j].1 == Some(false)).count());
            rows.push(TightnessRow {
                kappa,
                n,
                samples: cfg.samples,
                h_violations,
                h_freq: h_violations as f64 / cfg.samples as f64,
                l_violations,
                l_freq: l_violations.map(|v| v as f64 / cfg.samples as f64),
                bound_shape: tightness_bound_shape(kappa, n),
            });
        }
    }
    Ok(TightnessTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cone(theta: f64) -> RateConfig {
        RateConfig {
            event: RateEvent::ConeAngle { theta, radius: 1.0 },
            kappa_grid: vec![1.0, 0.5],
            samples: 200,
            n_steps: 64,
            horizon: None,
            seed: 3,
            workers: 1,
        }
    }

    #[test]
    fn vacuous_cone_always_hits() {
        let est = rate_experiment(&cone(PI / 2.0)).unwrap();
        for r in &est.rows {
            assert_eq!(r.hits, r.samples);
            assert_eq!(r.klogp, Some(0.0));
        }
        assert_eq!(est.warnings.len(), 1);
    }

    #[test]
    fn zero_hit_cells_carry_no_log() {
        let mut cfg = cone(0.05);
        cfg.kappa_grid = vec![0.01];
        let est = rate_experiment(&cfg).unwrap();
        assert_eq!(est.rows[0].hits, 0);
        assert_eq!(est.rows[0].klogp, None);
        assert!(est.rows[0].flag.contains("zero_hits"));
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",,zero_hits"));
        assert!(!text.contains("inf") && !text.contains("NaN"));
    }

    #[test]
    fn rate_rejects_bad_grids() {
        let mut cfg = cone(1.0);
        cfg.kappa_grid = vec![0.5, 1.0];
        assert!(rate_experiment(&cfg).is_err());
        cfg.kappa_grid = vec![1.0];
        cfg.event = RateEvent::Return { n: 2, big_n: 2, mode: Mode::Chordal };
        assert!(rate_experiment(&cfg).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = cone(1.2);
        cfg.workers = 1;
        let a = rate_experiment(&cfg).unwrap();
        cfg.workers = 3;
        let b = rate_experiment(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn target_ball_distance() {
        let poly = [C64::new(0.0, 0.0), C64::new(0.0, 2.0)];
        assert!((distance_to_polyline(C64::new(1.0, 0.0), &poly) - 1.0).abs() < 1e-15);
        assert!((distance_to_polyline(C64::new(1.0, 1.0), &poly) - 1.0).abs() < 1e-15);
        assert!((distance_to_polyline(C64::new(0.0, 3.0), &poly) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rn_check_at_time_zero_is_exact() {
        let cfg = RnCheckConfig { kappa: 2.0, horizon: 0.0, delta: 0.3, samples: 50, n_steps: 10, seed: 1, workers: 1 };
        let rep = rn_martingale_check(&cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.weight == 1.0));
        assert_eq!(rep.mean, 1.0);
        assert_eq!(rep.stderr, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn tightness_zero_driver_never_violates() {
        let cfg = TightnessConfig {
            kappa_grid: vec![0.0],
            n_list: vec![4, 16],
            constants: TightnessConstants::default(),
            samples: 5,
            n_steps: 64,
            l_y_grid: 4,
            seed: 0,
            workers: 1,
        };
        let t = tightness_experiment(&cfg).unwrap();
        for r in &t.rows {
            assert_eq!(r.h_violations, 0);
            assert_eq!(r.l_violations, Some(0));
            assert_eq!(r.bound_shape, 0.0);
        }
    }

    #[test]
    fn tightness_trends() {
        let cfg = TightnessConfig {
            kappa_grid: vec![2.0, 1.0, 0.5, 0.2],
            n_list: vec![8, 32, 128],
            constants: TightnessConstants::default(),
            samples: 400,
            n_steps: 1024,
            l_y_grid: 0,
            seed: 11,
            workers: 1,
        };
        let t = tightness_experiment(&cfg).unwrap();
        let freq = |k: f64, n: usize| t.rows.iter().find(|r| r.kappa == k && r.n == n).unwrap().h_freq;
        for &n in &cfg.n_list {
            let f: Vec<f64> = cfg.kappa_grid.iter().map(|&k| freq(k, n)).collect();
            assert!(f.windows(2).all(|w| w[1] <= w[0]), "n = {n}: {f:?}");
        }
        let small: Vec<f64> = cfg.n_list.iter().map(|&n| freq(0.2, n)).collect();
        assert!(small.windows(2).all(|w| w[1] <= w[0]), "{small:?}");
    }

    #[test]
    fn return_prob_monotone_in_n() {
        let cfg = ReturnProbConfig {
            mode: Mode::Chordal,
            n: 1,
            big_ns: vec![2, 3],
            kappa: 3.0,
            samples: 300,
            n_steps: 128,
            horizon: None,
            slack: 0.5,
            seed: 5,
            workers: 1,
        };
        let rep = return_prob_experiment(&cfg).unwrap();
        assert!(rep.rows[1].hits <= rep.rows[0].hits);
        assert!(rep.monotone);
        assert_eq!(rep.horizon, 9.0);
    }
}
