//! Radial Loewner chains in the unit disk, the angle process Θ and the
//! radial/chordal density.
//!
//! The mapping-out functions solve `ġ = g (e^{iω} + g) / (e^{iω} − g)`.
//! Trace points come from the reverse flow started just inside the circle
//! at the driving point.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{unit, C64};
use crate::driver::{Driver, DriverError, Mode};
use crate::sde::{guarded_euler, rk4};
use crate::trace::{Trace, TraceError};

/// Step-size factor: substeps satisfy `h ≤ STEP_FACTOR · |e^{iω} − z|²`.
const STEP_FACTOR: f64 = 0.05;
/// Below this distance to the driving point a forward-flowed point counts as
/// swallowed.
const SWALLOW_DIST: f64 = 1e-7;
const MODULUS_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum RadialError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("integrator hit the driving point at time {t}")]
    SingularStep { t: f64 },
    #[error("point {0} is outside the closed unit disk")]
    BadPoint(C64),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("flow left the closed disk (|z| = {modulus})")]
    LeftDisk { modulus: f64 },
    #[error("the target point −1 was swallowed at time {t}")]
    TargetSwallowed { t: f64 },
    #[error("time {t} is past the stopping time {stop}")]
    PastStoppingTime { t: f64, stop: f64 },
    #[error("invalid parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialOptions {
    /// Reverse flow starts at `(1 − ε) e^{iω}` with `ε = c_eps √Δt`.
    pub c_eps: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions { c_eps: 0.1 }
    }
}

/// Driver pieces as `(u0, u1, ω0, ω1)`, ω linear in between.
struct Pieces<'a> {
    d: &'a Driver,
}

impl Pieces<'_> {
    fn get(&self, k: usize) -> (f64, f64, f64, f64) {
        let (ts, ws) = (self.d.times(), self.d.values());
        (ts[k], ts[k + 1], ws[k], ws[k + 1])
    }
}

#[inline]
fn field(z: C64, e: C64) -> C64 {
    z * (e + z) / (e - z)
}

/// One RK4 step of `dz/du = field(z, e^{iω(u)})` with signed step `h`.
#[inline]
fn rk4_complex(z: C64, u: f64, h: f64, omega: &impl Fn(f64) -> f64) -> C64 {
    let e0 = unit(omega(u));
    let em = unit(omega(u + 0.5 * h));
    let e1 = unit(omega(u + h));
    let k1 = field(z, e0);
    let k2 = field(z + 0.5 * h * k1, em);
    let k3 = field(z + 0.5 * h * k2, em);
    let k4 = field(z + h * k3, e1);
    z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn clamp_modulus(z: C64) -> Result<C64, RadialError> {
    let m = z.norm();
    if !m.is_finite() {
        return Err(RadialError::LeftDisk { modulus: m });
    }
    if m <= 1.0 {
        Ok(z)
    } else if m <= 1.0 + MODULUS_SLACK {
        Ok(z / m)
    } else {
        Err(RadialError::LeftDisk { modulus: m })
    }
}

/// Integrates over `[u_from, u_to]` (either direction) with ω linear.
/// Returns `Ok(None)` when the point reaches the driving point.
fn flow_piece(
    mut z: C64,
    u_from: f64,
    u_to: f64,
    w_from: f64,
    w_to: f64,
    stop_when_close: bool,
) -> Result<Option<C64>, RadialError> {
    let len = u_to - u_from;
    if len == 0.0 {
        return Ok(Some(z));
    }
    let slope = (w_to - w_from) / len;
    let omega = |u: f64| w_from + slope * (u - u_from);
    let dir = len.signum();
    let mut u = u_from;
    loop {
        let remaining = (u_to - u) * dir;
        if remaining <= 0.0 {
            return Ok(Some(z));
        }
        let dist = (unit(omega(u)) - z).norm();
        if dist < SWALLOW_DIST {
            if stop_when_close {
                return Ok(None);
            }
            return Err(RadialError::SingularStep { t: u });
        }
        let mut h = remaining.min(STEP_FACTOR * dist * dist);
        let mut tries = 0;
        let next = loop {
            let cand = rk4_complex(z, u, dir * h, &omega);
            if cand.re.is_finite() && cand.im.is_finite() {
                break cand;
            }
            tries += 1;
            if tries > 30 {
                return Err(RadialError::SingularStep { t: u });
            }
            h *= 0.5;
        };
        z = clamp_modulus(next)?;
        u = if h == remaining { u_to } else { u + dir * h };
    }
}

/// `f_t(w)`: the reverse flow from `w` at time `t`.
fn reverse_flow(d: &Driver, w: C64, t: f64) -> Result<C64, RadialError> {
    if t == 0.0 || d.is_empty() {
        return Ok(w);
    }
    let pieces = Pieces { d };
    let mut z = w;
    let mut k = d.piece_index(t);
    // Partial last piece.
    let (u0, _, w0, _) = pieces.get(k);
    let wt = d.value_at(t);
    z = flow_piece(z, t, u0, wt, w0, false)?.expect("reverse flow never stops");
    while k > 0 {
        k -= 1;
        let (u0, u1, w0, w1) = pieces.get(k);
        z = flow_piece(z, u1, u0, w1, w0, false)?.expect("reverse flow never stops");
    }
    Ok(z)
}

pub fn forward(d: &Driver) -> Result<Trace, RadialError> {
    forward_with(d, RadialOptions::default())
}

/// Radial trace by reverse-flow tip extraction, one tip per driver knot.
pub fn forward_with(d: &Driver, opts: RadialOptions) -> Result<Trace, RadialError> {
    d.require_mode(Mode::Radial)?;
    let ts = d.times();
    let tips: Result<Vec<C64>, RadialError> = (1..ts.len())
        .into_par_iter()
        .with_min_len(8)
        .map(|k| {
            let eps = opts.c_eps * (ts[k] - ts[k - 1]).sqrt();
            let start = unit(d.values()[k]) * (1.0 - eps);
            reverse_flow(d, start, ts[k])
        })
        .collect();
    let mut points = vec![C64::new(1.0, 0.0)];
    points.extend(tips?);
    Ok(Trace::new(points, ts.to_vec(), Mode::Radial)?)
}

/// `f_t(w)` for an interior point `w`.
pub fn ft_eval(d: &Driver, w: C64, t: f64) -> Result<C64, RadialError> {
    d.require_mode(Mode::Radial)?;
    check_time(d, t)?;
    if !(w.norm() < 1.0) {
        return Err(RadialError::BadPoint(w));
    }
    reverse_flow(d, w, t)
}

fn check_time(d: &Driver, t: f64) -> Result<(), RadialError> {
    let horizon = d.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(RadialError::TimeOutOfRange { t, horizon });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RadialGt {
    Value(C64),
    Swallowed(f64),
}

/// Tracks a boundary point `e^{iα}` under the flow: `α̇ = cot((α − ω)/2)`.
///
/// θ = (α − ω)/2 stays in (0, π) until the point is swallowed.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundaryTracker {
    pub alpha: f64,
}

impl BoundaryTracker {
    /// Advances across a piece on which ω goes linearly from `w0` to `w1`.
    /// Returns `false` if the point is swallowed.
    pub fn advance(&mut self, u0: f64, u1: f64, w0: f64, w1: f64) -> bool {
        let len = u1 - u0;
        let slope = (w1 - w0) / len;
        let omega = |u: f64| w0 + slope * (u - u0);
        let f = |u: f64, a: f64| 1.0 / ((a - omega(u)) * 0.5).tan();
        let mut u = u0;
        while u < u1 {
            let theta = 0.5 * (self.alpha - omega(u));
            let s = theta.sin();
            if !(theta > 0.0 && theta < std::f64::consts::PI) || s < 1e-9 {
                return false;
            }
            let remaining = u1 - u;
            let h = remaining.min(0.1 * s * s);
            self.alpha = rk4(f, u, self.alpha, h);
            u = if h == remaining { u1 } else { u + h };
        }
        let theta = 0.5 * (self.alpha - w1);
        theta > 0.0 && theta < std::f64::consts::PI
    }
}

/// `g_t(z)` by forward integration; boundary points use the angle ODE.
pub fn gt_eval(d: &Driver, z: C64, t: f64) -> Result<RadialGt, RadialError> {
    d.require_mode(Mode::Radial)?;
    check_time(d, t)?;
    let m = z.norm();
    if !(m <= 1.0 + MODULUS_SLACK) || (z - 1.0).norm() < 1e-15 {
        return Err(RadialError::BadPoint(z));
    }
    if t == 0.0 {
        return Ok(RadialGt::Value(z));
    }
    let pieces = Pieces { d };
    let last = d.piece_index(t);
    if (m - 1.0).abs() <= 1e-12 {
        // Boundary point: α ∈ (ω, ω + 2π) at time 0 with ω(0) = 0.
        let mut alpha = z.arg();
        if alpha <= 0.0 {
            alpha += 2.0 * std::f64::consts::PI;
        }
        let mut tr = BoundaryTracker { alpha };
        for k in 0..=last {
            let (u0, u1, w0, w1) = pieces.get(k);
            let (u1, w1) = if k == last { (t, d.value_at(t)) } else { (u1, w1) };
            if u1 > u0 && !tr.advance(u0, u1, w0, w1) {
                return Ok(RadialGt::Swallowed(u1));
            }
        }
        return Ok(RadialGt::Value(unit(tr.alpha)));
    }
    let mut g = z;
    for k in 0..=last {
        let (u0, u1, w0, w1) = pieces.get(k);
        let (u1, w1) = if k == last { (t, d.value_at(t)) } else { (u1, w1) };
        match flow_piece(g, u0, u1, w0, w1, true)? {
            Some(next) => g = next,
            None => return Ok(RadialGt::Swallowed(u1)),
        }
    }
    Ok(RadialGt::Value(g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogCapacity {
    /// `t` itself: the capacity parameterization.
    pub value: f64,
    /// `log |g_t(h)/h|` at `h = 1e-6`.
    pub numerical: f64,
    pub discrepancy: f64,
}

pub fn log_capacity(d: &Driver, t: f64) -> Result<LogCapacity, RadialError> {
    let h = 1e-6;
    let numerical = match gt_eval(d, C64::new(h, 0.0), t)? {
        RadialGt::Value(g) => (g.norm() / h).ln(),
        RadialGt::Swallowed(s) => return Err(RadialError::SingularStep { t: s }),
    };
    Ok(LogCapacity { value: t, numerical, discrepancy: (numerical - t).abs() })
}

/// Time axis a [`ThetaPath`] is sampled on.
///
/// In capacity time the radial law is `dΘ = ½ cot Θ dt + (√κ/2) dB`; the
/// SDE clock `s = t/4` turns it into `dΘ = 2 cot Θ ds + √κ dB`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaClock {
    Sde,
    Capacity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaOrigin {
    Simulated,
    ExtractedFromTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kappa: f64,
    pub origin: ThetaOrigin,
    pub clock: ThetaClock,
    /// Index of the first sample with `sin θ ≤ δ`, if the path was stopped.
    pub stopped_at: Option<usize>,
}

impl ThetaPath {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Times converted to capacity time.
    pub fn capacity_time(&self, s: f64) -> f64 {
        match self.clock {
            ThetaClock::Sde => 4.0 * s,
            ThetaClock::Capacity => s,
        }
    }

    pub fn min_sin(&self) -> f64 {
        self.values.iter().map(|v| v.sin()).fold(f64::INFINITY, f64::min)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= 0.0 || ts.len() == 1 {
            return self.values[0];
        }
        if t >= self.horizon() {
            return self.final_value();
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let s = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.values[k] + (self.values[k + 1] - self.values[k]) * s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "theta"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()
    }
}

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

/// Euler–Maruyama for `dΘ = 2 cot Θ dt + √κ dB`, `Θ₀ = π/2`, in the SDE clock.
///
/// Steps leaving (0, π) are refined by Brownian-bridge halving. The path is
/// truncated at the first sample with `sin θ ≤ delta_stop`.
pub fn simulate_theta<R: Rng + ?Sized>(
    kappa: f64,
    horizon: f64,
    n: usize,
    delta_stop: f64,
    rng: &mut R,
) -> Result<ThetaPath, RadialError> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(RadialError::BadParameter { name: "kappa", value: kappa });
    }
    if !(0.0..1.0).contains(&delta_stop) {
        return Err(RadialError::BadParameter { name: "delta", value: delta_stop });
    }
    if !(horizon >= 0.0) || n == 0 {
        return Err(RadialError::BadParameter { name: "horizon", value: horizon });
    }
    let h = horizon / n as f64;
    let sigma = kappa.sqrt();
    let drift = |x: f64| 2.0 / x.tan();
    let valid = |x: f64| x > 0.0 && x < std::f64::consts::PI;
    let mut times = vec![0.0];
    let mut values = vec![HALF_PI];
    let mut stopped_at = None;
    let mut x = HALF_PI;
    for k in 1..=n {
        let db = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let next = guarded_euler(x, h, db, &drift, sigma, &valid, 20, rng);
        times.push(horizon * k as f64 / n as f64);
        let Some(next) = next else {
            // Could not stay inside even after refinement: the path is at the
            // boundary for all practical purposes.
            values.push(if x < HALF_PI { f64::MIN_POSITIVE } else { std::f64::consts::PI - 1e-15 });
            stopped_at = Some(k);
            break;
        };
        x = next;
        values.push(x);
        if x.sin() <= delta_stop {
            stopped_at = Some(k);
            break;
        }
    }
    Ok(ThetaPath { times, values, kappa, origin: ThetaOrigin::Simulated, clock: ThetaClock::Sde, stopped_at })
}

/// θ extracted from a radial driver: `e^{2iθ} = g_t(−1) / e^{iω_t}`.
///
/// The image of −1 is tracked continuously, so no angle unwrapping is
/// needed.
pub fn theta_from_trace(d: &Driver) -> Result<ThetaPath, RadialError> {
    d.require_mode(Mode::Radial)?;
    theta_from_driver_until(d, 0.0).map(|(p, _)| p)
}

/// As [`theta_from_trace`], stopping at the first knot with `sin θ ≤ delta`.
pub(crate) fn theta_from_driver_until(d: &Driver, delta: f64) -> Result<(ThetaPath, BoundaryTracker), RadialError> {
    let (ts, ws) = (d.times(), d.values());
    let mut tr = BoundaryTracker { alpha: std::f64::consts::PI };
    let mut times = vec![0.0];
    let mut values = vec![HALF_PI];
    let mut stopped_at = None;
    for k in 1..ts.len() {
        if !tr.advance(ts[k - 1], ts[k], ws[k - 1], ws[k]) {
            return Err(RadialError::TargetSwallowed { t: ts[k] });
        }
        let theta = 0.5 * (tr.alpha - ws[k]);
        times.push(ts[k]);
        values.push(theta);
        if delta > 0.0 && theta.sin() <= delta {
            stopped_at = Some(k);
            break;
        }
    }
    Ok((
        ThetaPath {
            times,
            values,
            kappa: f64::NAN,
            origin: ThetaOrigin::ExtractedFromTrace,
            clock: ThetaClock::Capacity,
            stopped_at,
        },
        tr,
    ))
}

/// Driver of chordal SLE_κ in the disk from 1 to −1, in radial
/// parameterization: `dω = √κ dB + ((6 − κ)/2) cot θ dt`, θ = (α − ω)/2.
///
/// Returns the driver and its Θ path (capacity clock), stopped at the first
/// knot with `sin θ ≤ delta`.
pub fn sample_chordal_in_disk<R: Rng + ?Sized>(
    kappa: f64,
    horizon: f64,
    n: usize,
    delta: f64,
    rng: &mut R,
) -> Result<(Driver, ThetaPath), RadialError> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(RadialError::BadParameter { name: "kappa", value: kappa });
    }
    if !(horizon >= 0.0) || n == 0 {
        return Err(RadialError::BadParameter { name: "horizon", value: horizon });
    }
    if horizon == 0.0 {
        let d = Driver::empty(Mode::Radial);
        let (mut p, _) = theta_from_driver_until(&d, delta)?;
        p.kappa = kappa;
        return Ok((d, p));
    }
    let h = horizon / n as f64;
    let sd = (kappa * h).sqrt();
    let mut tr = BoundaryTracker { alpha: std::f64::consts::PI };
    let mut times = vec![0.0];
    let mut omegas = vec![0.0];
    let mut thetas = vec![HALF_PI];
    let mut stopped_at = None;
    let mut theta = HALF_PI;
    for k in 1..=n {
        let z: f64 = rng.sample(StandardNormal);
        let w0 = *omegas.last().unwrap();
        let w1 = w0 + sd * z + 0.5 * (6.0 - kappa) / theta.tan() * h;
        let (t0, t1) = (times[k - 1], horizon * k as f64 / n as f64);
        let ok = tr.advance(t0, t1, w0, w1);
        times.push(t1);
        omegas.push(w1);
        theta = 0.5 * (tr.alpha - w1);
        thetas.push(theta);
        if !ok || theta.sin() <= delta {
            stopped_at = Some(k);
            break;
        }
    }
    let d = Driver::new(times.clone(), omegas, Mode::Radial)?;
    let path = ThetaPath {
        times,
        values: thetas,
        kappa,
        origin: ThetaOrigin::ExtractedFromTrace,
        clock: ThetaClock::Capacity,
        stopped_at,
    };
    Ok((d, path))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnWeight {
    pub value: f64,
    /// Capacity time at which the weight was evaluated.
    pub t: f64,
    /// `∫₀ᵗ ds / sin²Θ_s` in capacity time (trapezoidal).
    pub integral_term: f64,
    pub stopped_at_tau_delta: bool,
}

/// `dμ_radial / dμ_chordal` on `F_{t ∧ τ_δ}` for a path of Θ:
///
/// ```text
/// exp((6−κ)/(4κ) ∫₀ᵗ ds/sin²Θ + (6−κ)(κ−2)/(8κ) t) · |sin Θ_t|^{6/κ−1}
/// ```
///
/// with `t` in capacity time. `t` is given on the path's own clock.
pub fn rn_weight(path: &ThetaPath, kappa: f64, t: f64, delta: f64) -> Result<RnWeight, RadialError> {
    if !(kappa > 0.0) {
        return Err(RadialError::BadParameter { name: "kappa", value: kappa });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(RadialError::BadParameter { name: "delta", value: delta });
    }
    let stop = path.horizon();
    if t > stop + 1e-12 || t < 0.0 {
        return Err(RadialError::PastStoppingTime { t, stop });
    }
    let t = t.min(stop);
    let inv_sin2 = |v: f64| {
        let s = v.sin();
        1.0 / (s * s)
    };
    let mut integral = 0.0;
    for k in 1..path.times.len() {
        let (a, b) = (path.times[k - 1], path.times[k]);
        if a >= t {
            break;
        }
        let (vb, b) = if b <= t { (path.values[k], b) } else { (path.value_at(t), t) };
        integral += 0.5 * (b - a) * (inv_sin2(path.values[k - 1]) + inv_sin2(vb));
    }
    let integral = path.capacity_time(integral);
    let tc = path.capacity_time(t);
    let theta_t = path.value_at(t);
    let log_w = (6.0 - kappa) / (4.0 * kappa) * integral
        + (6.0 - kappa) * (kappa - 2.0) / (8.0 * kappa) * tc
        + (6.0 / kappa - 1.0) * theta_t.sin().abs().ln();
    Ok(RnWeight {
        value: log_w.exp(),
        t: tc,
        integral_term: integral,
        stopped_at_tau_delta: path.stopped_at.is_some() && t >= stop,
    })
}

/// Pathwise bound on the weight over `{min sin Θ ≥ δ}` for κ ≤ 4
/// (capacity-time horizon `t`).
pub fn rn_weight_bound(kappa: f64, t: f64, delta: f64) -> f64 {
    let drift = ((6.0 - kappa) * (kappa - 2.0) / (8.0 * kappa)).max(0.0);
    (drift * t).exp() * (3.0 * t / (2.0 * delta * delta * kappa)).exp()
}
