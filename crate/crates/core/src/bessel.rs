//! Bessel-type SDEs `dX = (a/X) dt + √κ dB` and the comparison process Z.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream;
use crate::sde::{bridge_split, guarded_euler, rk4};

/// Cap on Euler steps per path, a guard against runaway loops.
const MAX_STEPS: usize = 200_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum BesselError {
    #[error("invalid parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("outside the domain of the formula: {0}")]
    OutOfDomain(String),
}

fn bad(name: &'static str, value: f64) -> BesselError {
    BesselError::BadParameter { name, value }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselParams {
    pub a: f64,
    pub kappa: f64,
    pub x0: f64,
    pub dt: f64,
    /// May be infinite when `escape` is set.
    pub horizon: f64,
    /// Positive levels of `|X|` whose first passage is recorded.
    pub levels: Vec<f64>,
    /// Stop as soon as any level is crossed.
    pub stop_on_level: bool,
    /// Stop once `|X|` reaches this value.
    pub escape: Option<f64>,
    /// Scale-invariant steps `dt · max(1, (X/x0)²)`.
    pub adaptive: bool,
    /// Negate the driving noise.
    pub antithetic: bool,
    /// Keep every step; otherwise only the first and last sample.
    pub record: bool,
}

impl BesselParams {
    pub fn new(a: f64, kappa: f64, x0: f64, dt: f64, horizon: f64) -> Self {
        BesselParams {
            a,
            kappa,
            x0,
            dt,
            horizon,
            levels: Vec::new(),
            stop_on_level: false,
            escape: None,
            adaptive: false,
            antithetic: false,
            record: true,
        }
    }

    fn validate(&self) -> Result<(), BesselError> {
        if !self.a.is_finite() {
            return Err(bad("a", self.a));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(bad("kappa", self.kappa));
        }
        if !(self.x0 != 0.0 && self.x0.is_finite()) {
            return Err(bad("x0", self.x0));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", self.dt));
        }
        if !(self.horizon >= 0.0) || (self.horizon.is_infinite() && self.escape.is_none()) {
            return Err(bad("horizon", self.horizon));
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0)) {
            return Err(bad("level", *l));
        }
        if self.levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(BesselError::OutOfDomain("levels must be sorted".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselPath {
    pub a: f64,
    pub kappa: f64,
    pub x0: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub hit_zero_at: Option<f64>,
    /// `(level, first-passage time of |X|)`.
    pub level_hits: Vec<(f64, Option<f64>)>,
    pub escaped: bool,
    pub steps: usize,
}

impl BesselPath {
    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn hit(&self, level: f64) -> Option<f64> {
        self.level_hits.iter().find(|(l, _)| *l == level).and_then(|(_, t)| *t)
    }
}

/// Euler–Maruyama for `|X|`, reflected back to the sign of `x0`.
///
/// `main` supplies exactly one standard normal per base step, so paths with
/// different `x0` (and the same step sizes) share their noise; bridge
/// refinements near 0 and the level-crossing uniforms come from `aux`.
///
/// A step that would cross 0 is refined by Brownian-bridge halving up to 20
/// times before a zero hit is declared. Between samples, a level crossing is
/// also detected with the Brownian-bridge probability
/// `exp(−2(y−L)(y'−L)/(κh))`.
pub fn simulate_bessel<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    p: &BesselParams,
    main: &mut R1,
    aux: &mut R2,
) -> Result<BesselPath, BesselError> {
    p.validate()?;
    let sign = p.x0.signum();
    let noise_sign = if p.antithetic { -sign } else { sign };
    let x_scale = p.x0.abs();
    let sigma = p.kappa.sqrt();
    let a = p.a;
    let drift = move |y: f64| a / y;
    let valid = |y: f64| y > 0.0;

    let mut y = x_scale;
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut values = vec![p.x0];
    let mut level_hits: Vec<(f64, Option<f64>)> = p.levels.iter().map(|&l| (l, None)).collect();
    let mut hit_zero_at = None;
    let mut escaped = false;
    let mut steps = 0;

    while t < p.horizon && steps < MAX_STEPS {
        let mut h = if p.adaptive { p.dt * (y / x_scale).powi(2).max(1.0) } else { p.dt };
        let remaining = p.horizon - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let z: f64 = main.sample(StandardNormal);
        steps += 1;
        let next = if p.kappa == 0.0 {
            Some(rk4(|_, y| a / y, t, y, h)).filter(|v| *v > 0.0)
        } else {
            let db = noise_sign * h.sqrt() * z;
            guarded_euler(y, h, db, &drift, sigma, &valid, 20, aux)
        };
        let t_next = if last { p.horizon } else { t + h };
        let Some(y_next) = next else {
            hit_zero_at = Some(t_next);
            for (l, hit) in level_hits.iter_mut() {
                if hit.is_none() && *l < y {
                    *hit = Some(t + h * (y - *l) / y);
                }
            }
            t = t_next;
            y = 0.0;
            times.push(t);
            values.push(0.0);
            break;
        };
        let mut crossed = false;
        for (l, hit) in level_hits.iter_mut() {
            if hit.is_some() {
                continue;
            }
            let (d0, d1) = (y - *l, y_next - *l);
            if d0 * d1 <= 0.0 {
                *hit = Some(if d0 == d1 { t } else { t + h * d0 / (d0 - d1) });
                crossed = true;
            } else if p.kappa > 0.0 {
                let expo = 2.0 * d0 * d1 / (p.kappa * h);
                if expo < 40.0 && aux.random::<f64>() < (-expo).exp() {
                    *hit = Some(t + 0.5 * h);
                    crossed = true;
                }
            }
        }
        t = t_next;
        y = y_next;
        if p.record {
            times.push(t);
            values.push(sign * y);
        }
        if crossed && p.stop_on_level {
            break;
        }
        if p.escape.is_some_and(|e| y >= e) {
            escaped = true;
            break;
        }
    }
    if !p.record && hit_zero_at.is_none() {
        times.push(t);
        values.push(sign * y);
    }
    Ok(BesselPath { a: p.a, kappa: p.kappa, x0: p.x0, times, values, hit_zero_at, level_hits, escaped, steps })
}

/// `P[τ_δ < ∞] = (δ/|x|)^{2a/κ − 1}` for `κ < 2a`, `0 < δ ≤ |x|`.
pub fn exact_hit_probability(a: f64, kappa: f64, x: f64, delta: f64) -> Result<f64, BesselError> {
    if !(kappa > 0.0 && kappa < 2.0 * a) {
        return Err(BesselError::OutOfDomain(format!("need 0 < κ < 2a, got κ = {kappa}, a = {a}")));
    }
    if !(x != 0.0 && x.is_finite()) {
        return Err(bad("x", x));
    }
    if !(delta > 0.0 && delta <= x.abs()) {
        return Err(BesselError::OutOfDomain(format!("need 0 < δ ≤ |x|, got δ = {delta}")));
    }
    Ok((delta / x.abs()).powf(2.0 * a / kappa - 1.0))
}

/// Upper bound on `P[max_{[0,t]} |X| < ε]`, uniform in the start point:
/// `√(κt/2π) · ε/(2t − ε²) · exp(−(2t/ε − ε)²/(2κt))`.
pub fn stay_small_bound(epsilon: f64, t: f64, kappa: f64) -> Result<f64, BesselError> {
    if !(epsilon > 0.0) {
        return Err(bad("epsilon", epsilon));
    }
    if !(kappa > 0.0 && kappa <= 4.0) {
        return Err(BesselError::OutOfDomain(format!("need 0 < κ ≤ 4, got {kappa}")));
    }
    if !(t > epsilon * epsilon / 2.0) {
        return Err(BesselError::OutOfDomain(format!("need t > ε²/2, got t = {t}")));
    }
    let pref = (kappa * t / (2.0 * std::f64::consts::PI)).sqrt() * epsilon / (2.0 * t - epsilon * epsilon);
    let m = 2.0 * t / epsilon - epsilon;
    Ok(pref * (-(m * m) / (2.0 * kappa * t)).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitCheck {
    pub p_hat: f64,
    pub p_exact: f64,
    /// Binomial standard error at `p_exact`.
    pub sigma: f64,
    pub samples: usize,
    pub hits: usize,
    pub pass: bool,
}

/// Monte Carlo estimate of `P[|X| reaches δ]` on an infinite horizon,
/// compared with the exact formula (PASS iff within 3σ).
///
/// Paths stop at `|X| ≥ escape_factor · |x0|`; the escape level biases the
/// estimate by at most `(δ/L)^{2a/κ−1}`.
pub fn hit_check(
    a: f64,
    kappa: f64,
    x0: f64,
    delta: f64,
    dt: f64,
    samples: usize,
    seed: u64,
    escape_factor: f64,
) -> Result<HitCheck, BesselError> {
    let p_exact = exact_hit_probability(a, kappa, x0, delta)?;
    if samples == 0 {
        return Err(bad("samples", 0.0));
    }
    let mut params = BesselParams::new(a, kappa, x0, dt, f64::INFINITY);
    params.levels = vec![delta];
    params.stop_on_level = true;
    params.escape = Some(escape_factor * x0.abs());
    params.adaptive = true;
    params.record = false;
    params.validate()?;
    let hits = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut main = stream(seed, &[i, 0]);
            let mut aux = stream(seed, &[i, 1]);
            let path = simulate_bessel(&params, &mut main, &mut aux).expect("validated");
            usize::from(path.hit(delta).is_some())
        })
        .sum::<usize>();
    let p_hat = hits as f64 / samples as f64;
    let sigma = (p_exact * (1.0 - p_exact) / samples as f64).sqrt();
    Ok(HitCheck { p_hat, p_exact, sigma, samples, hits, pass: (p_hat - p_exact).abs() <= 3.0 * sigma })
}

/// Frequency of `max_{[0,t]} |X^x| < ε`.
pub fn stay_small_frequency(
    a: f64,
    kappa: f64,
    x0: f64,
    epsilon: f64,
    t: f64,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, BesselError> {
    if !(x0.abs() < epsilon) {
        return Err(BesselError::OutOfDomain("need |x0| < ε".into()));
    }
    let mut params = BesselParams::new(a, kappa, x0, dt, t);
    params.levels = vec![epsilon];
    params.stop_on_level = true;
    params.record = false;
    params.validate()?;
    let stayed = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let path =
                simulate_bessel(&params, &mut stream(seed, &[i, 0]), &mut stream(seed, &[i, 1])).expect("validated");
            usize::from(path.hit(epsilon).is_none())
        })
        .sum::<usize>();
    Ok(stayed as f64 / samples as f64)
}

/// `q(x) = min(2 cot x, 1/x)`.
pub fn q(x: f64) -> f64 {
    (2.0 / x.tan()).min(1.0 / x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZPath {
    pub kappa: f64,
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    /// Θ driven by the same increments, when requested.
    pub theta: Option<Vec<f64>>,
    /// First time Z reached 0 (it is absorbed there).
    pub absorbed_at: Option<f64>,
}

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

fn validate_z(kappa: f64, horizon: f64, dt: f64) -> Result<usize, BesselError> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(bad("kappa", kappa));
    }
    if !(dt > 0.0) {
        return Err(bad("dt", dt));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(bad("horizon", horizon));
    }
    Ok((horizon / dt).ceil() as usize)
}

/// Euler–Maruyama for `dZ = q(Z) dt + √κ dB`, `Z₀ = π/2`, absorbed at 0.
pub fn simulate_z<R: Rng + ?Sized>(kappa: f64, horizon: f64, dt: f64, rng: &mut R) -> Result<ZPath, BesselError> {
    let n = validate_z(kappa, horizon, dt)?;
    let sigma = kappa.sqrt();
    let mut times = vec![0.0];
    let mut zs = vec![HALF_PI];
    let mut z = HALF_PI;
    let mut absorbed_at = None;
    for k in 1..=n {
        let t = (k as f64 * dt).min(horizon);
        let h = t - times[k - 1];
        let db = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if absorbed_at.is_none() {
            z += q(z) * h + sigma * db;
            if z <= 0.0 {
                z = 0.0;
                absorbed_at = Some(t);
            }
        }
        times.push(t);
        zs.push(z);
    }
    Ok(ZPath { kappa, times, z: zs, theta: None, absorbed_at })
}

/// Z and `dΘ = 2 cot Θ dt + √κ dB` driven by shared increments.
///
/// A step that would take Θ out of (0, π) is refined by bridge halving for
/// both processes at once, so the coupling is kept.
pub fn simulate_z_theta<R: Rng + ?Sized>(kappa: f64, horizon: f64, dt: f64, rng: &mut R) -> Result<ZPath, BesselError> {
    let n = validate_z(kappa, horizon, dt)?;
    let sigma = kappa.sqrt();
    let mut times = vec![0.0];
    let mut zs = vec![HALF_PI];
    let mut ths = vec![HALF_PI];
    let (mut z, mut th) = (HALF_PI, HALF_PI);
    let mut absorbed_at = None;
    for k in 1..=n {
        let t = (k as f64 * dt).min(horizon);
        let h = t - times[k - 1];
        let db = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        match joint_step(z, th, h, db, sigma, 20, rng) {
            Some((z1, th1)) => {
                z = z1;
                th = th1;
            }
            None => {
                ths.push(th);
                zs.push(z);
                times.push(t);
                break;
            }
        }
        if absorbed_at.is_none() && z <= 0.0 {
            absorbed_at = Some(t);
        }
        if absorbed_at.is_some() {
            z = 0.0;
        }
        times.push(t);
        zs.push(z);
        ths.push(th);
    }
    Ok(ZPath { kappa, times, z: zs, theta: Some(ths), absorbed_at })
}

fn joint_step<R: Rng + ?Sized>(
    z: f64,
    th: f64,
    h: f64,
    db: f64,
    sigma: f64,
    depth: u32,
    rng: &mut R,
) -> Option<(f64, f64)> {
    let th1 = th + 2.0 / th.tan() * h + sigma * db;
    let z1 = if z > 0.0 { z + q(z) * h + sigma * db } else { z };
    if th1 > 0.0 && th1 < std::f64::consts::PI {
        return Some((z1, th1));
    }
    if depth == 0 {
        return None;
    }
    let (db1, db2) = bridge_split(db, h, rng);
    let (zm, tm) = joint_step(z, th, 0.5 * h, db1, sigma, depth - 1, rng)?;
    let zm = zm.max(0.0);
    joint_step(zm, tm, 0.5 * h, db2, sigma, depth - 1, rng)
}
