//! Driving functions on capacity-time grids.
//!
//! A [`Driver`] is a piecewise-linear function `W` on `[0, T]` given by its
//! knots, with `W(0) = 0`. Chordal drivers generate hulls in the upper
//! half-plane from 0 to ∞, radial drivers generate hulls in the unit disk
//! from 1 to 0 (the driving point is `exp(i W)`).

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Chordal,
    Radial,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Chordal => f.write_str("chordal"),
            Mode::Radial => f.write_str("radial"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chordal" => Ok(Mode::Chordal),
            "radial" => Ok(Mode::Radial),
            other => Err(format!("unknown mode `{other}` (expected chordal|radial)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DriverError {
    #[error("times and values differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("a driver needs at least one knot")]
    Empty,
    #[error("knot times must start at 0, got {0}")]
    NonzeroStartTime(f64),
    #[error("knot times are not strictly increasing at index {index}")]
    NonMonotoneTimes { index: usize },
    #[error("driver must start at 0, got W(0) = {0}")]
    NonzeroOrigin(f64),
    #[error("non-finite knot at index {index}")]
    NonFinite { index: usize },
    #[error("mode mismatch: expected {expected}, found {found}")]
    ModeMismatch { expected: Mode, found: Mode },
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error("operation needs a driver on [0, 1], got horizon {0}")]
    BadHorizon(f64),
    #[error("modulus window 2/n must be < 1, got n = {n}")]
    BadWindow { n: usize },
    #[error("invalid parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("driver csv: {0}")]
    Csv(String),
}

/// Dirichlet energy `½∫ W'(t)² dt`, with an explicit infinite marker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnergyValue {
    Finite(f64),
    Infinite,
}

impl EnergyValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            EnergyValue::Finite(v) => Some(v),
            EnergyValue::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, EnergyValue::Finite(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    times: Vec<f64>,
    values: Vec<f64>,
    mode: Mode,
}

impl Driver {
    /// Validates knots; no normalization is performed.
    pub fn new(times: Vec<f64>, values: Vec<f64>, mode: Mode) -> Result<Self, DriverError> {
        if times.len() != values.len() {
            return Err(DriverError::LengthMismatch { times: times.len(), values: values.len() });
        }
        if times.is_empty() {
            return Err(DriverError::Empty);
        }
        for (index, (t, w)) in times.iter().zip(&values).enumerate() {
            if !t.is_finite() || !w.is_finite() {
                return Err(DriverError::NonFinite { index });
            }
        }
        if times[0] != 0.0 {
            return Err(DriverError::NonzeroStartTime(times[0]));
        }
        if values[0] != 0.0 {
            return Err(DriverError::NonzeroOrigin(values[0]));
        }
        if let Some(index) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DriverError::NonMonotoneTimes { index: index + 1 });
        }
        Ok(Driver { times, values, mode })
    }

    /// The trivial driver on `[0, 0]`.
    pub fn empty(mode: Mode) -> Self {
        Driver { times: vec![0.0], values: vec![0.0], mode }
    }

    pub fn zero(horizon: f64, n_steps: usize, mode: Mode) -> Result<Self, DriverError> {
        let times = uniform_grid(horizon, n_steps)?;
        let values = vec![0.0; times.len()];
        Driver::new(times, values, mode)
    }

    /// Samples `f` on a uniform grid; `f(0)` must be 0.
    pub fn from_fn(horizon: f64, n_steps: usize, mode: Mode, f: impl Fn(f64) -> f64) -> Result<Self, DriverError> {
        let times = uniform_grid(horizon, n_steps)?;
        let values = times.iter().map(|&t| f(t)).collect();
        Driver::new(times, values, mode)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Number of linear pieces.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.steps() == 0
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub(crate) fn require_mode(&self, expected: Mode) -> Result<(), DriverError> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(DriverError::ModeMismatch { expected, found: self.mode })
        }
    }

    /// Index `k` of the piece `[t_k, t_{k+1}]` containing `t` (clamped).
    pub(crate) fn piece_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(self.steps().saturating_sub(1))
    }

    /// Linear interpolation; clamps outside `[0, T]`.
    pub fn value_at(&self, t: f64) -> f64 {
        if self.is_empty() || t <= 0.0 {
            return self.values[0];
        }
        if t >= self.horizon() {
            return self.final_value();
        }
        let k = self.piece_index(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (w0, w1) = (self.values[k], self.values[k + 1]);
        w0 + (w1 - w0) * ((t - t0) / (t1 - t0))
    }

    /// `Σ (ΔW)² / (2 Δt)`, exact for the piecewise-linear interpolant.
    pub fn dirichlet_energy(&self) -> EnergyValue {
        let e: f64 = self
            .times
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, w)| {
                let dw = w[1] - w[0];
                dw * dw / (2.0 * (t[1] - t[0]))
            })
            .sum();
        if e.is_finite() {
            EnergyValue::Finite(e)
        } else {
            EnergyValue::Infinite
        }
    }

    /// `W₁` on `[0, T₁]` followed by `W₁(T₁) + W₂(· − T₁)`.
    pub fn concat(&self, other: &Driver) -> Result<Driver, DriverError> {
        other.require_mode(self.mode)?;
        let (t1, w1) = (self.horizon(), self.final_value());
        let mut times = self.times.clone();
        let mut values = self.values.clone();
        times.extend(other.times[1..].iter().map(|t| t1 + t));
        values.extend(other.values[1..].iter().map(|w| w1 + w));
        Driver::new(times, values, self.mode)
    }

    /// Restriction to `[0, t]` with an interpolated final knot.
    pub fn truncate(&self, t: f64) -> Result<Driver, DriverError> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(DriverError::OutOfRange { t, horizon });
        }
        if t == 0.0 {
            return Ok(Driver::empty(self.mode));
        }
        let keep = self.times.partition_point(|&s| s < t);
        let mut times = self.times[..keep].to_vec();
        let mut values = self.values[..keep].to_vec();
        times.push(t);
        values.push(self.value_at(t));
        Driver::new(times, values, self.mode)
    }

    /// Brownian scaling `t ↦ c t`, `W ↦ √c W`; leaves the energy unchanged.
    pub fn rescaled(&self, c: f64) -> Result<Driver, DriverError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(DriverError::BadParameter { name: "scale", value: c });
        }
        let s = c.sqrt();
        Driver::new(self.times.iter().map(|t| c * t).collect(), self.values.iter().map(|w| s * w).collect(), self.mode)
    }

    pub fn negated(&self) -> Driver {
        Driver { times: self.times.clone(), values: self.values.iter().map(|w| -w).collect(), mode: self.mode }
    }

    pub fn with_mode(mut self, mode: Mode) -> Driver {
        self.mode = mode;
        self
    }

    /// Piecewise-linear resampling onto `n_steps` uniform pieces.
    pub fn resample_uniform(&self, n_steps: usize) -> Result<Driver, DriverError> {
        let times = uniform_grid(self.horizon(), n_steps)?;
        let values = times.iter().map(|&t| self.value_at(t)).collect();
        Driver::new(times, values, self.mode)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DriverError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| DriverError::Csv(e.to_string());
        w.write_record(["t", "w"]).map_err(err)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| DriverError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R, mode: Mode) -> Result<Driver, DriverError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| DriverError::Csv(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "w" {
            return Err(DriverError::Csv(format!("expected header `t,w`, got {headers:?}")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| DriverError::Csv(e.to_string()))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| DriverError::Csv(format!("{s:?}: {e}")));
            times.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        Driver::new(times, values, mode)
    }
}

pub(crate) fn uniform_grid(horizon: f64, n_steps: usize) -> Result<Vec<f64>, DriverError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(DriverError::BadParameter { name: "horizon", value: horizon });
    }
    if horizon == 0.0 {
        return Ok(vec![0.0]);
    }
    if n_steps == 0 {
        return Err(DriverError::BadParameter { name: "n_steps", value: 0.0 });
    }
    Ok((0..=n_steps).map(|k| horizon * k as f64 / n_steps as f64).collect())
}

/// `√κ B` sampled on a uniform grid of `n_steps` pieces over `[0, horizon]`.
///
/// Consumes exactly `n_steps` standard normals from `rng`. `κ = 0` yields the
/// zero driver.
pub fn sample_brownian_driver<R: Rng + ?Sized>(
    kappa: f64,
    horizon: f64,
    n_steps: usize,
    mode: Mode,
    rng: &mut R,
) -> Result<Driver, DriverError> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(DriverError::BadParameter { name: "kappa", value: kappa });
    }
    if !(horizon > 0.0) {
        return Err(DriverError::BadParameter { name: "horizon", value: horizon });
    }
    let times = uniform_grid(horizon, n_steps)?;
    let sd = (kappa * horizon / n_steps as f64).sqrt();
    let mut values = Vec::with_capacity(times.len());
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n_steps {
        let z: f64 = rng.sample(StandardNormal);
        w += sd * z;
        values.push(w);
    }
    Driver::new(times, values, mode)
}

/// Constants of the tightness sets `H(n)` and `L(n)`.
///
/// The defaults are not canonical; only their κ-independence matters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub beta: f64,
}

impl Default for TightnessConstants {
    fn default() -> Self {
        TightnessConstants { c1: 1.0, c2: 1.0, c3: 1.0, beta: 0.5 }
    }
}

impl TightnessConstants {
    /// `φ(δ) = c₃ √(δ log(1/δ))`, defined for `0 < δ < 1`.
    pub fn phi(&self, delta: f64) -> Option<f64> {
        (delta > 0.0 && delta < 1.0).then(|| self.c3 * (delta * (1.0 / delta).ln()).sqrt())
    }

    /// `ψ(n) = c₁ (1 + log n)^{c₂}`.
    pub fn psi(&self, n: usize) -> f64 {
        self.c1 * (1.0 + (n as f64).ln()).powf(self.c2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub n: usize,
    pub in_h: bool,
    /// `None` when `L(n)` was not evaluated.
    pub in_l: Option<bool>,
    /// `max |W_t − W_s| / φ(2/n)` over `|t − s| ≤ 2/n`.
    pub worst_modulus_ratio: f64,
    /// `max |f̂'(iy)| y^β / ψ(n)` over the evaluated grid.
    pub worst_derivative_ratio: Option<f64>,
    /// `(t points, y points)` of the grid used for `L(n)`.
    pub l_grid: Option<(usize, usize)>,
    pub constants: TightnessConstants,
}

pub(crate) fn require_unit_horizon(d: &Driver) -> Result<(), DriverError> {
    if (d.horizon() - 1.0).abs() > 1e-12 {
        return Err(DriverError::BadHorizon(d.horizon()));
    }
    Ok(())
}

/// Exact `sup_{|t−s| ≤ h} |W_t − W_s|` for the piecewise-linear driver.
///
/// The supremum of a function linear on each cell of the knot grid is taken
/// at a cell vertex: a knot pair, or a knot paired with the point at
/// distance exactly `h`.
pub fn modulus_of_continuity(d: &Driver, h: f64) -> f64 {
    let (ts, ws) = (d.times(), d.values());
    let horizon = d.horizon();
    let mut worst = 0.0f64;
    for i in 0..ts.len() {
        let end = ts[i] + h;
        let mut j = i + 1;
        while j < ts.len() && ts[j] <= end {
            worst = worst.max((ws[j] - ws[i]).abs());
            j += 1;
        }
        if end < horizon {
            worst = worst.max((d.value_at(end) - ws[i]).abs());
        }
        let start = ts[i] - h;
        if start > 0.0 {
            worst = worst.max((ws[i] - d.value_at(start)).abs());
        }
    }
    worst
}

/// Discrete membership test for `H(n)` on a driver over `[0, 1]`.
pub fn modulus_membership_h(d: &Driver, n: usize, c3: f64) -> Result<TightnessReport, DriverError> {
    require_unit_horizon(d)?;
    let constants = TightnessConstants { c3, ..TightnessConstants::default() };
    let window = 2.0 / n as f64;
    let phi = constants.phi(window).ok_or(DriverError::BadWindow { n })?;
    let ratio = modulus_of_continuity(d, window) / phi;
    Ok(TightnessReport {
        n,
        in_h: ratio <= 1.0,
        in_l: None,
        worst_modulus_ratio: ratio,
        worst_derivative_ratio: None,
        l_grid: None,
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn tent() -> Driver {
        Driver::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0], Mode::Chordal).unwrap()
    }

    #[test]
    fn construction() {
        let z = Driver::new(vec![0.0, 1.0], vec![0.0, 0.0], Mode::Chordal).unwrap();
        assert_eq!(z.horizon(), 1.0);
        assert_eq!(tent().steps(), 2);
        assert_eq!(Driver::new(vec![0.0, 1.0], vec![1.0, 0.0], Mode::Chordal), Err(DriverError::NonzeroOrigin(1.0)));
        assert_eq!(
            Driver::new(vec![0.0, 1.0, 1.0], vec![0.0; 3], Mode::Chordal),
            Err(DriverError::NonMonotoneTimes { index: 2 })
        );
        assert_eq!(
            Driver::new(vec![0.0, 1.0], vec![0.0], Mode::Chordal),
            Err(DriverError::LengthMismatch { times: 2, values: 1 })
        );
        assert!(Driver::new(vec![0.0], vec![0.0], Mode::Radial).unwrap().is_empty());
    }

    #[test]
    fn energy_examples() {
        let z = Driver::zero(1.0, 1, Mode::Chordal).unwrap();
        assert_eq!(z.dirichlet_energy(), EnergyValue::Finite(0.0));
        let slope2 = Driver::new(vec![0.0, 1.0], vec![0.0, 2.0], Mode::Chordal).unwrap();
        assert_eq!(slope2.dirichlet_energy(), EnergyValue::Finite(2.0));
        assert_eq!(tent().dirichlet_energy(), EnergyValue::Finite(2.0));
    }

    #[test]
    fn concat_and_truncate() {
        let d = tent();
        assert_eq!(d.concat(&Driver::empty(Mode::Chordal)).unwrap(), d);
        let a = Driver::zero(0.3, 3, Mode::Chordal).unwrap();
        let b = Driver::zero(0.7, 2, Mode::Chordal).unwrap();
        let ab = a.concat(&b).unwrap();
        assert!((ab.horizon() - 1.0).abs() < 1e-15);
        assert!(ab.values().iter().all(|&w| w == 0.0));
        assert_eq!(
            d.concat(&Driver::empty(Mode::Radial)),
            Err(DriverError::ModeMismatch { expected: Mode::Chordal, found: Mode::Radial })
        );

        assert_eq!(d.truncate(1.0).unwrap(), d);
        assert!(d.truncate(0.0).unwrap().is_empty());
        let t = d.truncate(0.75).unwrap();
        assert_eq!(t.times(), &[0.0, 0.5, 0.75]);
        assert_eq!(t.values(), &[0.0, 1.0, 0.5]);
        assert!(matches!(d.truncate(1.5), Err(DriverError::OutOfRange { .. })));
    }

    #[test]
    fn brownian_is_deterministic_and_zero_for_zero_kappa() {
        let a = sample_brownian_driver(1.0, 1.0, 4, Mode::Chordal, &mut stream(3, &[])).unwrap();
        let b = sample_brownian_driver(1.0, 1.0, 4, Mode::Chordal, &mut stream(3, &[])).unwrap();
        assert_eq!(a, b);
        let z = sample_brownian_driver(0.0, 1.0, 4, Mode::Chordal, &mut stream(3, &[])).unwrap();
        assert!(z.values().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn brownian_terminal_variance() {
        // Var(√κ B_T) = κ T.
        let (kappa, samples) = (2.0, 10_000u64);
        let finals: Vec<f64> = (0..samples)
            .map(|j| {
                sample_brownian_driver(kappa, 1.0, 10_000, Mode::Chordal, &mut stream(11, &[j])).unwrap().final_value()
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / samples as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        assert!((var - kappa).abs() < 0.05 * kappa, "sample variance {var}");
    }

    #[test]
    fn brownian_mean_energy() {
        // Each increment contributes κ/2 in expectation: E = κ n / 2, and the
        // sum is (κ/2)·χ²_n, so Var = κ² n / 2.
        let (kappa, n, samples) = (0.5, 64usize, 4000u64);
        let es: Vec<f64> = (0..samples)
            .map(|j| {
                sample_brownian_driver(kappa, 1.0, n, Mode::Chordal, &mut stream(5, &[j]))
                    .unwrap()
                    .dirichlet_energy()
                    .finite()
                    .unwrap()
            })
            .collect();
        let mean = es.iter().sum::<f64>() / samples as f64;
        let expected = kappa * n as f64 / 2.0;
        let se = (kappa * kappa * n as f64 / 2.0 / samples as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "mean {mean} vs {expected} (se {se})");
    }

    #[test]
    fn modulus_membership() {
        let z = Driver::zero(1.0, 64, Mode::Chordal).unwrap();
        let r = modulus_membership_h(&z, 8, 1.0).unwrap();
        assert!(r.in_h);
        assert_eq!(r.worst_modulus_ratio, 0.0);

        // One steep piece: a jump of 2 over 1/64 exceeds φ(1/4) ≈ 0.589.
        let steep = Driver::from_fn(1.0, 64, Mode::Chordal, |t| if t >= 0.5 { 2.0 } else { 0.0 }).unwrap();
        let r = modulus_membership_h(&steep, 8, 1.0).unwrap();
        assert!(!r.in_h);
        assert!((r.worst_modulus_ratio - 2.0 / TightnessConstants::default().phi(0.25).unwrap()).abs() < 1e-12);

        assert_eq!(modulus_membership_h(&z, 2, 1.0).unwrap_err(), DriverError::BadWindow { n: 2 });
        let long = Driver::zero(2.0, 4, Mode::Chordal).unwrap();
        assert_eq!(modulus_membership_h(&long, 8, 1.0).unwrap_err(), DriverError::BadHorizon(2.0));
    }

    #[test]
    fn modulus_brute_force_agreement() {
        // Dense scan of (s, t) pairs as an independent oracle.
        let mut rng = stream(99, &[]);
        let d = sample_brownian_driver(1.0, 1.0, 40, Mode::Chordal, &mut rng).unwrap();
        let h = 0.13;
        let exact = modulus_of_continuity(&d, h);
        let m = 4000;
        let mut scan = 0.0f64;
        for i in 0..=m {
            let s = i as f64 / m as f64;
            let ws = d.value_at(s);
            for j in i..=m {
                let t = j as f64 / m as f64;
                if t - s > h {
                    break;
                }
                scan = scan.max((d.value_at(t) - ws).abs());
            }
        }
        assert!(scan <= exact + 1e-12);
        assert!(exact - scan < 0.02, "exact {exact} scan {scan}");
    }

    #[test]
    fn h_membership_more_likely_for_small_kappa() {
        let frac = |kappa: f64| {
            (0..400u64)
                .filter(|&j| {
                    let d = sample_brownian_driver(kappa, 1.0, 512, Mode::Chordal, &mut stream(17, &[j])).unwrap();
                    modulus_membership_h(&d, 16, 1.0).unwrap().in_h
                })
                .count()
        };
        assert!(frac(0.1) >= frac(0.5));
    }

    #[test]
    fn csv_round_trip() {
        let d = tent();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,w\n0,0\n"));
        assert_eq!(Driver::read_csv(&buf[..], Mode::Chordal).unwrap(), d);
        assert!(Driver::read_csv("x,y\n0,0\n".as_bytes(), Mode::Chordal).is_err());
    }

    fn arb_driver() -> impl Strategy<Value = Driver> {
        (1usize..20).prop_flat_map(|n| {
            (prop::collection::vec(0.01f64..1.0, n), prop::collection::vec(-2.0f64..2.0, n)).prop_map(|(dts, dws)| {
                let mut times = vec![0.0];
                let mut values = vec![0.0];
                for (dt, dw) in dts.iter().zip(&dws) {
                    times.push(times.last().unwrap() + dt);
                    values.push(values.last().unwrap() + dw);
                }
                Driver::new(times, values, Mode::Chordal).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn energy_is_additive_under_concat(a in arb_driver(), b in arb_driver()) {
            let ea = a.dirichlet_energy().finite().unwrap();
            let eb = b.dirichlet_energy().finite().unwrap();
            let eab = a.concat(&b).unwrap().dirichlet_energy().finite().unwrap();
            prop_assert!(ea >= 0.0 && eb >= 0.0);
            prop_assert!((eab - ea - eb).abs() <= 1e-9 * (1.0 + eab));
        }

        #[test]
        fn collinear_refinement_keeps_energy(d in arb_driver(), k in 0usize..19) {
            let k = k % d.steps();
            let tm = 0.5 * (d.times()[k] + d.times()[k + 1]);
            let mut times = d.times().to_vec();
            let mut values = d.values().to_vec();
            times.insert(k + 1, tm);
            values.insert(k + 1, d.value_at(tm));
            let refined = Driver::new(times, values, Mode::Chordal).unwrap();
            let (e0, e1) = (d.dirichlet_energy().finite().unwrap(), refined.dirichlet_energy().finite().unwrap());
            prop_assert!((e0 - e1).abs() <= 1e-9 * (1.0 + e0));
        }

        #[test]
        fn brownian_scaling_keeps_energy(d in arb_driver(), c in 0.05f64..20.0) {
            let e0 = d.dirichlet_energy().finite().unwrap();
            let e1 = d.rescaled(c).unwrap().dirichlet_energy().finite().unwrap();
            prop_assert!((e0 - e1).abs() <= 1e-9 * (1.0 + e0));
        }
    }
}
