//! Euler–Maruyama steps with Brownian-bridge refinement.

use rand::Rng;
use rand_distr::StandardNormal;

/// Splits a Brownian increment `db` over a step of length `h` into two
/// halves with the correct conditional law.
#[inline]
pub(crate) fn bridge_split<R: Rng + ?Sized>(db: f64, h: f64, rng: &mut R) -> (f64, f64) {
    let z: f64 = rng.sample(StandardNormal);
    let first = 0.5 * db + 0.5 * h.sqrt() * z;
    (first, db - first)
}

/// One Euler step of `dx = drift(x) dt + sigma dB`, refined by bridge
/// halving whenever the proposal fails `valid`, up to `depth` halvings.
///
/// Returns `None` if the step cannot be completed inside the valid region.
pub(crate) fn guarded_euler<R: Rng + ?Sized>(
    x: f64,
    h: f64,
    db: f64,
    drift: &impl Fn(f64) -> f64,
    sigma: f64,
    valid: &impl Fn(f64) -> bool,
    depth: u32,
    rng: &mut R,
) -> Option<f64> {
    let y = x + drift(x) * h + sigma * db;
    if valid(y) {
        return Some(y);
    }
    if depth == 0 {
        return None;
    }
    let (db1, db2) = bridge_split(db, h, rng);
    let mid = guarded_euler(x, 0.5 * h, db1, drift, sigma, valid, depth - 1, rng)?;
    guarded_euler(mid, 0.5 * h, db2, drift, sigma, valid, depth - 1, rng)
}

/// Classical RK4 step for a real autonomous-in-state ODE `y' = f(s, y)`.
#[inline]
pub(crate) fn rk4<F: Fn(f64, f64) -> f64>(f: F, s: f64, y: f64, h: f64) -> f64 {
    let k1 = f(s, y);
    let k2 = f(s + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(s + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(s + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}
