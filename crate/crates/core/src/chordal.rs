//! Chordal Loewner chains in the upper half-plane by slit-map composition.
//!
//! Over each piece `[t_{j-1}, t_j]` the driver is frozen at a constant `c_j`;
//! the chain then is a composition of vertical-slit maps
//!
//! ```text
//! G_j(z) = c_j + √((z − c_j)² + 4Δt_j)      (maps the slit out)
//! F_j(w) = c_j + √((w − c_j)² − 4Δt_j)      (its inverse)
//! ```
//!
//! with the square root taken in the closed upper half-plane. `g_t` is
//! `G_k ∘ … ∘ G_1` and `f_t = F_1 ∘ … ∘ F_k`. Computing a whole trace this way
//! costs O(n²).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{sqrt_upper, C64};
use crate::driver::{modulus_of_continuity, require_unit_horizon, Driver, DriverError, Mode};
use crate::driver::{TightnessConstants, TightnessReport};
use crate::geometry;
use crate::trace::{Trace, TraceError};

/// A point is considered swallowed when its image lands this close (relative
/// to the slit height) to the real image of the slit.
const SWALLOW_REL: f64 = 1e-6;
/// Absolute guard for points sitting on the driving point itself.
const SWALLOW_ABS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ChordalError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("point {0} is not in the closed upper half-plane minus the origin")]
    BadPoint(C64),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("slit map left the upper half-plane at step {step} (value {value})")]
    BranchFailure { step: usize, value: C64 },
    #[error("polyline needs at least two points")]
    TooShort,
    #[error("polyline must start at 0, got {0}")]
    BadStart(C64),
    #[error("vertex {index} is not in the open upper half-plane")]
    NotInUpperHalfPlane { index: usize },
    #[error("polyline is not simple")]
    NotSimple,
    #[error("unzip step {index} has zero height")]
    DegenerateSegment { index: usize },
}

/// Which driver value is used on each piece.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Freeze {
    #[default]
    Midpoint,
    LeftEndpoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlitStep {
    pub dt: f64,
    pub center: f64,
}

/// Per-piece records `(Δt_j, c_j)` of a driver restricted to `[0, t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlitChain {
    pub steps: Vec<SlitStep>,
    /// Actual driver value `λ_t` at the end of the chain.
    pub lambda_end: f64,
}

impl SlitChain {
    pub fn new(d: &Driver, t: f64, freeze: Freeze) -> Result<Self, ChordalError> {
        d.require_mode(Mode::Chordal)?;
        let horizon = d.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(ChordalError::TimeOutOfRange { t, horizon });
        }
        let (ts, ws) = (d.times(), d.values());
        let mut steps = Vec::new();
        for k in 1..ts.len() {
            if ts[k - 1] >= t {
                break;
            }
            let (t1, w1) = if ts[k] <= t { (ts[k], ws[k]) } else { (t, d.value_at(t)) };
            let center = match freeze {
                Freeze::Midpoint => 0.5 * (ws[k - 1] + w1),
                Freeze::LeftEndpoint => ws[k - 1],
            };
            steps.push(SlitStep { dt: t1 - ts[k - 1], center });
        }
        Ok(SlitChain { steps, lambda_end: d.value_at(t) })
    }

    pub fn capacity_time(&self) -> f64 {
        self.steps.iter().map(|s| s.dt).sum()
    }
}

#[inline]
fn slit_out(z: C64, s: SlitStep) -> C64 {
    let u = z - s.center;
    s.center + sqrt_upper(u * u + 4.0 * s.dt, u.re)
}

#[inline]
fn slit_in(w: C64, s: SlitStep) -> C64 {
    let u = w - s.center;
    s.center + sqrt_upper(u * u - 4.0 * s.dt, u.re)
}

/// Tip of the hull after each step: `F_1 ∘ … ∘ F_{k−1}(c_k + 2i√Δt_k)`.
fn tips(steps: &[SlitStep]) -> Vec<C64> {
    let tip = |k: usize| {
        let s = steps[k];
        let mut w = C64::new(s.center, 2.0 * s.dt.sqrt());
        for s in steps[..k].iter().rev() {
            w = slit_in(w, *s);
        }
        w
    };
    (0..steps.len()).into_par_iter().with_min_len(32).map(tip).collect()
}

/// Forward Loewner transform with midpoint freezing.
pub fn forward(d: &Driver) -> Result<Trace, ChordalError> {
    forward_with(d, Freeze::Midpoint)
}

pub fn forward_with(d: &Driver, freeze: Freeze) -> Result<Trace, ChordalError> {
    let chain = SlitChain::new(d, d.horizon(), freeze)?;
    let mut points = Vec::with_capacity(d.times().len());
    points.push(C64::new(0.0, 0.0));
    points.extend(tips(&chain.steps));
    Ok(Trace::new(points, d.times().to_vec(), Mode::Chordal)?)
}

/// Result of evaluating the mapping-out function at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GtValue {
    Value(C64),
    /// The point was swallowed at (approximately) this capacity time.
    Swallowed(f64),
}

/// `g_t(z)` through the same slit chain used by [`forward`].
pub fn gt_eval(d: &Driver, z: C64, t: f64) -> Result<GtValue, ChordalError> {
    if !(z.im >= 0.0) || z.norm() == 0.0 || !z.re.is_finite() {
        return Err(ChordalError::BadPoint(z));
    }
    let chain = SlitChain::new(d, t, Freeze::Midpoint)?;
    let mut g = z;
    let mut time = 0.0;
    for s in &chain.steps {
        let h = 2.0 * s.dt.sqrt();
        if (g - s.center).norm() < SWALLOW_ABS {
            return Ok(GtValue::Swallowed(time));
        }
        let next = slit_out(g, *s);
        time += s.dt;
        if g.im > 0.0 && next.im < SWALLOW_REL * h && (next.re - s.center).abs() < h {
            return Ok(GtValue::Swallowed(time));
        }
        g = next;
    }
    Ok(GtValue::Value(g))
}

/// `f̂_t(w) = f_t(w + λ_t)` and its derivative, by the chain rule over the
/// inverse slit maps: `F_j'(u) = (u − c_j) / (F_j(u) − c_j)`.
pub fn fhat_with_derivative(d: &Driver, w: C64, t: f64) -> Result<(C64, C64), ChordalError> {
    if !(w.im >= 0.0) {
        return Err(ChordalError::BadPoint(w));
    }
    let chain = SlitChain::new(d, t, Freeze::Midpoint)?;
    Ok(chain_fhat(&chain.steps, w + chain.lambda_end))
}

fn chain_fhat(steps: &[SlitStep], start: C64) -> (C64, C64) {
    let mut u = start;
    let mut deriv = C64::new(1.0, 0.0);
    for s in steps.iter().rev() {
        let v = slit_in(u, *s);
        deriv *= (u - s.center) / (v - s.center);
        u = v;
    }
    (u, deriv)
}

pub fn fhat_eval(d: &Driver, w: C64, t: f64) -> Result<C64, ChordalError> {
    let (v, _) = fhat_with_derivative(d, w, t)?;
    check_branch(v)
}

pub fn fhat_derivative(d: &Driver, w: C64, t: f64) -> Result<C64, ChordalError> {
    if !(w.im > 0.0) {
        return Err(ChordalError::BadPoint(w));
    }
    let (v, dv) = fhat_with_derivative(d, w, t)?;
    check_branch(v)?;
    Ok(dv)
}

fn check_branch(v: C64) -> Result<C64, ChordalError> {
    if v.re.is_finite() && v.im.is_finite() && v.im >= -1e-9 {
        Ok(v)
    } else {
        Err(ChordalError::BranchFailure { step: 0, value: v })
    }
}

/// Discrete check of `H(n)` and `L(n)` for a driver on `[0, 1]`.
///
/// `L(n)` is tested at every driver knot `t` and at `y_j = j / (√n · y_grid)`,
/// `j = 1..=y_grid`; `y = 0` itself is excluded.
pub fn membership_l(
    d: &Driver,
    n: usize,
    constants: TightnessConstants,
    y_grid: usize,
) -> Result<TightnessReport, ChordalError> {
    d.require_mode(Mode::Chordal)?;
    require_unit_horizon(d)?;
    let window = 2.0 / n as f64;
    let phi = constants.phi(window).ok_or(DriverError::BadWindow { n })?;
    let modulus_ratio = modulus_of_continuity(d, window) / phi;
    let psi = constants.psi(n);
    let y_max = 1.0 / (n as f64).sqrt();
    let ys: Vec<f64> = (1..=y_grid.max(1)).map(|j| y_max * j as f64 / y_grid.max(1) as f64).collect();
    let chain = SlitChain::new(d, d.horizon(), Freeze::Midpoint)?;
    let knots = d.times().len();
    let worst = (0..knots)
        .into_par_iter()
        .map(|k| {
            let lambda = d.values()[k];
            ys.iter()
                .map(|&y| {
                    let (_, dv) = chain_fhat(&chain.steps[..k], C64::new(lambda, y));
                    dv.norm() * y.powf(constants.beta) / psi
                })
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(TightnessReport {
        n,
        in_h: modulus_ratio <= 1.0,
        in_l: Some(worst <= 1.0),
        worst_modulus_ratio: modulus_ratio,
        worst_derivative_ratio: Some(worst),
        l_grid: Some((knots, ys.len())),
        constants,
    })
}

/// Inverse transform by vertical-slit unzipping.
///
/// At each step the next vertex, in the current coordinates, is `x + iy`; it
/// is removed with the map `z ↦ x + √((z − x)² + y²)`, which accounts for
/// `Δt = y²/4` of capacity time and moves the driver to `x`.
pub fn unzip_curve(points: &[C64]) -> Result<Driver, ChordalError> {
    if points.len() < 2 {
        return Err(ChordalError::TooShort);
    }
    if points[0] != C64::new(0.0, 0.0) {
        return Err(ChordalError::BadStart(points[0]));
    }
    if let Some(i) = points[1..].iter().position(|p| !(p.im > 0.0) || !p.re.is_finite()) {
        return Err(ChordalError::NotInUpperHalfPlane { index: i + 1 });
    }
    if geometry::polyline_self_intersects(points) {
        return Err(ChordalError::NotSimple);
    }
    let mut rest: Vec<C64> = points[1..].to_vec();
    let mut times = Vec::with_capacity(points.len());
    let mut values = Vec::with_capacity(points.len());
    times.push(0.0);
    values.push(0.0);
    let mut t = 0.0;
    for k in 0..rest.len() {
        let u = rest[k];
        if !(u.im > 0.0) {
            return Err(ChordalError::DegenerateSegment { index: k + 1 });
        }
        let (x, y2) = (u.re, u.im * u.im);
        t += y2 / 4.0;
        times.push(t);
        values.push(x);
        for z in &mut rest[k + 1..] {
            let v = *z - x;
            *z = x + sqrt_upper(v * v + y2, v.re);
        }
    }
    Driver::new(times, values, Mode::Chordal).map_err(|e| match e {
        DriverError::NonMonotoneTimes { index } => ChordalError::DegenerateSegment { index },
        other => other.into(),
    })
}

pub fn unzip_trace(g: &Trace) -> Result<Driver, ChordalError> {
    if g.mode() != Mode::Chordal {
        return Err(DriverError::ModeMismatch { expected: Mode::Chordal, found: g.mode() }.into());
    }
    unzip_curve(g.points())
}

/// `hcap` under the `hcap(γ[0,t]) = 2t` normalization.
pub fn hcap_of_polyline(points: &[C64]) -> Result<f64, ChordalError> {
    Ok(2.0 * unzip_curve(points)?.horizon())
}

/// Points `i·h·k/m`, `k = 0..=m`.
pub fn vertical_segment(height: f64, m: usize) -> Vec<C64> {
    (0..=m).map(|k| C64::new(0.0, height * k as f64 / m as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::sample_brownian_driver;
    use crate::rng::stream;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tent(n: usize, height: f64) -> Driver {
        Driver::from_fn(1.0, n, Mode::Chordal, |t| height * (1.0 - (2.0 * t - 1.0).abs())).unwrap()
    }

    #[test]
    fn zero_driver_tip_is_exact() {
        for &t in &[0.25, 1.0, 4.0] {
            let d = Driver::zero(t, 1000, Mode::Chordal).unwrap();
            let g = forward(&d).unwrap();
            for (p, s) in g.points().iter().zip(g.cap_times()) {
                assert!((p - C64::new(0.0, 2.0 * s.sqrt())).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_driver_gives_single_point() {
        let g = forward(&Driver::empty(Mode::Chordal)).unwrap();
        assert_eq!(g.points(), &[C64::new(0.0, 0.0)]);
        assert!(matches!(forward(&Driver::empty(Mode::Radial)), Err(ChordalError::Driver(_))));
    }

    #[test]
    fn tent_self_convergence() {
        let reference = forward(&tent(2048, 1.0)).unwrap();
        let err = |n| {
            let g = forward(&tent(n, 1.0)).unwrap();
            g.points().iter().zip(g.cap_times()).map(|(p, &t)| (p - reference.point_at(t)).norm()).fold(0.0, f64::max)
        };
        let (e64, e256) = (err(64), err(256));
        assert!(e256 < e64, "{e64} -> {e256}");
        assert!(e256 < 0.02);
    }

    #[test]
    fn reflection_symmetry() {
        let d = sample_brownian_driver(2.0, 1.0, 200, Mode::Chordal, &mut stream(1, &[])).unwrap();
        let a = forward(&d).unwrap();
        let b = forward(&d.negated()).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!((p - C64::new(-q.re, q.im)).norm() < 1e-12);
        }
    }

    #[test]
    fn translation_equivariance_of_chain() {
        let d = sample_brownian_driver(1.0, 1.0, 100, Mode::Chordal, &mut stream(2, &[])).unwrap();
        let chain = SlitChain::new(&d, 1.0, Freeze::Midpoint).unwrap();
        let shifted: Vec<SlitStep> =
            chain.steps.iter().map(|s| SlitStep { dt: s.dt, center: s.center + 0.75 }).collect();
        for (p, q) in tips(&chain.steps).iter().zip(tips(&shifted)) {
            assert!((p + 0.75 - q).norm() < 1e-12);
        }
    }

    #[test]
    fn gt_closed_form_for_zero_driver() {
        let d = Driver::zero(1.0, 64, Mode::Chordal).unwrap();
        for &t in &[0.05, 0.2] {
            let GtValue::Value(g) = gt_eval(&d, C64::new(0.0, 1.0), t).unwrap() else { panic!() };
            assert!((g - C64::new(0.0, (1.0f64 - 4.0 * t).sqrt())).norm() < 1e-12);
        }
        assert!(
            matches!(gt_eval(&d, C64::new(0.0, 1.0), 0.5).unwrap(), GtValue::Swallowed(s) if (s - 0.25).abs() < 1.0 / 64.0 + 1e-12)
        );
        assert!(matches!(gt_eval(&d, C64::new(0.0, 0.0), 0.5), Err(ChordalError::BadPoint(_))));
    }

    #[test]
    fn gt_hydrodynamic_normalization() {
        let d = sample_brownian_driver(1.0, 1.0, 300, Mode::Chordal, &mut stream(3, &[])).unwrap();
        let z = C64::new(600.0, 800.0);
        let GtValue::Value(g) = gt_eval(&d, z, 1.0).unwrap() else { panic!() };
        let lhs = z * (g - z);
        // hcap = 2t with an O(1/|z|) correction.
        assert!((lhs - 2.0).norm() < 5e-3, "{lhs}");
    }

    #[test]
    fn trace_vertices_are_swallowed_at_their_time() {
        let d = sample_brownian_driver(1.0, 1.0, 128, Mode::Chordal, &mut stream(4, &[])).unwrap();
        let g = forward(&d).unwrap();
        for k in 1..g.len() {
            let t = g.cap_times()[k];
            match gt_eval(&d, g.points()[k], t).unwrap() {
                GtValue::Swallowed(s) => assert!((s - t).abs() < 1e-9),
                GtValue::Value(v) => assert!((v - d.value_at(t)).norm() < 1e-3, "vertex {k}: {v}"),
            }
        }
    }

    #[test]
    fn fhat_closed_forms() {
        let e = Driver::empty(Mode::Chordal);
        let w = C64::new(0.3, 0.7);
        assert_eq!(fhat_with_derivative(&e, w, 0.0).unwrap(), (w, C64::new(1.0, 0.0)));
        let d = Driver::zero(1.0, 10, Mode::Chordal).unwrap();
        let y = 0.5;
        let (v, dv) = fhat_with_derivative(&d, C64::new(0.0, y), 1.0).unwrap();
        assert!((v - C64::new(0.0, (y * y + 4.0f64).sqrt())).norm() < 1e-12);
        assert!((dv - y / (y * y + 4.0f64).sqrt()).norm() < 1e-12);
    }

    #[test]
    fn fhat_derivative_matches_finite_difference() {
        let d = sample_brownian_driver(1.0, 1.0, 200, Mode::Chordal, &mut stream(5, &[])).unwrap();
        for &y in &[0.05, 0.2, 1.0] {
            for &t in &[0.3, 0.77, 1.0] {
                let w = C64::new(0.0, y);
                let h = 1e-6 * y;
                let plus = fhat_eval(&d, C64::new(0.0, y + h), t).unwrap();
                let minus = fhat_eval(&d, C64::new(0.0, y - h), t).unwrap();
                let fd = (plus - minus) / C64::new(0.0, 2.0 * h);
                let an = fhat_derivative(&d, w, t).unwrap();
                assert!((fd - an).norm() <= 1e-5 * an.norm().max(1e-3), "y={y} t={t}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn l_membership() {
        let z = Driver::zero(1.0, 64, Mode::Chordal).unwrap();
        let r = membership_l(&z, 16, TightnessConstants::default(), 8).unwrap();
        assert_eq!(r.in_l, Some(true));
        assert!(r.in_h);
        assert_eq!(r.l_grid, Some((65, 8)));

        // With unit constants L(n) is loose; tighten ψ so oscillation shows.
        let tight = TightnessConstants { c1: 0.2, ..TightnessConstants::default() };
        assert_eq!(membership_l(&z, 16, tight, 8).unwrap().in_l, Some(true));
        let zig = Driver::from_fn(1.0, 64, Mode::Chordal, |t| 2.0 * (32.0 * PI * t).sin()).unwrap();
        let r = membership_l(&zig, 16, tight, 8).unwrap();
        assert_eq!(r.in_l, Some(false));
        assert!(r.worst_derivative_ratio.unwrap() > 1.0);
    }

    #[test]
    fn l_violations_grow_with_kappa() {
        let tight = TightnessConstants { c1: 0.2, ..TightnessConstants::default() };
        let count = |kappa: f64| {
            (0..40u64)
                .filter(|&j| {
                    let d = sample_brownian_driver(kappa, 1.0, 128, Mode::Chordal, &mut stream(8, &[j])).unwrap();
                    membership_l(&d, 16, tight, 6).unwrap().in_l == Some(false)
                })
                .count()
        };
        let counts = [count(0.1), count(1.0), count(8.0)];
        eprintln!("L violations: {counts:?}");
        assert!(counts[0] <= counts[1] && counts[1] <= counts[2] && counts[2] > counts[0], "{counts:?}");
    }

    #[test]
    fn unzip_vertical_segment() {
        let d = unzip_curve(&vertical_segment(1.0, 1024)).unwrap();
        assert!((d.horizon() - 0.25).abs() < 1e-12);
        assert!(d.values().iter().all(|w| w.abs() < 1e-12));
        assert!((hcap_of_polyline(&vertical_segment(1.0, 1024)).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn unzip_errors() {
        assert_eq!(unzip_curve(&[C64::new(0.0, 0.0)]), Err(ChordalError::TooShort));
        assert!(matches!(
            unzip_curve(&[C64::new(0.0, 0.0), C64::new(1.0, -1.0)]),
            Err(ChordalError::NotInUpperHalfPlane { index: 1 })
        ));
        let bowtie = [C64::new(0.0, 0.0), C64::new(0.0, 2.0), C64::new(1.0, 1.0), C64::new(-1.0, 1.0)];
        assert_eq!(unzip_curve(&bowtie), Err(ChordalError::NotSimple));
    }

    #[test]
    fn hcap_scaling_and_monotonicity() {
        let d = sample_brownian_driver(1.0, 1.0, 256, Mode::Chordal, &mut stream(6, &[])).unwrap();
        let g = forward(&d).unwrap();
        let pts = g.points();
        let h = hcap_of_polyline(pts).unwrap();
        assert!((h - 2.0).abs() < 0.1, "{h}");
        let scaled: Vec<C64> = pts.iter().map(|p| p * 3.0).collect();
        assert!((hcap_of_polyline(&scaled).unwrap() - 9.0 * h).abs() < 1e-9 * h);
        let half = hcap_of_polyline(&pts[..129]).unwrap();
        assert!(half <= h);
    }

    #[test]
    fn tilted_segment_energy_diverges() {
        let e = |m: usize| {
            let pts: Vec<C64> = (0..=m).map(|k| C64::new(1.0, 1.0) * (k as f64 / m as f64)).collect();
            unzip_curve(&pts).unwrap().dirichlet_energy().finite().unwrap()
        };
        let (a, b, c) = (e(64), e(256), e(1024));
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn forward_stays_in_closed_half_plane(seed in 0u64..1000, kappa in 0.0f64..8.0) {
            let d = sample_brownian_driver(kappa, 1.0, 64, Mode::Chordal, &mut stream(seed, &[])).unwrap();
            let g = forward(&d).unwrap();
            prop_assert!(g.points().iter().all(|p| p.im >= 0.0));
        }
    }
}
