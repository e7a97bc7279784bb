//! Metrics and predicates on discretized curves.
//!
//! Chordal points are compared after the Möbius map `Φ_H(z) = (2i − z)/(2i + z)`
//! onto the disk (0 ↦ 1, 2i ↦ 0, ∞ ↦ −1), so unbounded curves have finite
//! distances. Radial points are compared directly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chordal::{self, ChordalError};
use crate::complex::C64;
use crate::driver::{Driver, Mode};
use crate::trace::{Trace, DOMAIN_SLACK};

/// Clouds larger than this are downsampled before brute-force Hausdorff.
pub const HAUSDORFF_CAP: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point {0} is in the lower half-plane")]
    LowerHalfPlane(C64),
    #[error("point {0} is outside the {1} reference domain")]
    DomainViolation(C64, Mode),
    #[error("empty point set")]
    EmptySet,
    #[error("mode mismatch: {0} vs {1}")]
    ModeMismatch(Mode, Mode),
    #[error("invalid return-event spec: {0}")]
    BadSpec(String),
}

/// `Φ_H(z) = (2i − z)/(2i + z)`; non-finite input stands for ∞ and maps to −1.
pub fn phi_h(z: C64) -> Result<C64, GeometryError> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Ok(C64::new(-1.0, 0.0));
    }
    if z.im < -DOMAIN_SLACK {
        return Err(GeometryError::LowerHalfPlane(z));
    }
    let two_i = C64::new(0.0, 2.0);
    Ok((two_i - z) / (two_i + z))
}

/// Image of a point in the disk reference domain of `mode`.
pub fn normalize(z: C64, mode: Mode) -> Result<C64, GeometryError> {
    match mode {
        Mode::Chordal => phi_h(z),
        Mode::Radial => {
            if z.norm() > 1.0 + DOMAIN_SLACK {
                Err(GeometryError::DomainViolation(z, mode))
            } else {
                Ok(z)
            }
        }
    }
}

/// `d_D(z, w) = |Φ_D(z) − Φ_D(w)|`.
pub fn d_d(z: C64, w: C64, mode: Mode) -> Result<f64, GeometryError> {
    let map_err = |e| match e {
        GeometryError::LowerHalfPlane(p) => GeometryError::DomainViolation(p, mode),
        other => other,
    };
    let a = normalize(z, mode).map_err(map_err)?;
    let b = normalize(w, mode).map_err(map_err)?;
    Ok((a - b).norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloudSource {
    Trace,
    HullSample,
}

/// Points already in the closed unit disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<C64>,
    source: CloudSource,
}

impl PointCloud {
    pub fn new(points: Vec<C64>, source: CloudSource) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptySet);
        }
        if let Some(p) = points.iter().find(|p| !(p.norm() <= 1.0 + DOMAIN_SLACK)) {
            return Err(GeometryError::DomainViolation(*p, Mode::Radial));
        }
        Ok(PointCloud { points, source })
    }

    pub fn from_trace(g: &Trace) -> Result<Self, GeometryError> {
        let points = g.points().iter().map(|&p| normalize(p, g.mode())).collect::<Result<Vec<_>, _>>()?;
        PointCloud::new(points, CloudSource::Trace)
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn source(&self) -> CloudSource {
        self.source
    }
}

/// Every `stride`-th point, plus the largest distance from a dropped point to
/// the kept point of its block.
fn downsample(points: &[C64]) -> (Vec<C64>, f64) {
    if points.len() <= HAUSDORFF_CAP {
        return (points.to_vec(), 0.0);
    }
    let stride = points.len().div_ceil(HAUSDORFF_CAP);
    let mut kept = Vec::with_capacity(HAUSDORFF_CAP);
    let mut radius = 0.0f64;
    for block in points.chunks(stride) {
        let anchor = block[0];
        kept.push(anchor);
        for p in &block[1..] {
            radius = radius.max((p - anchor).norm());
        }
    }
    (kept, radius)
}

fn directed(a: &[C64], b: &[C64]) -> f64 {
    a.iter().map(|p| b.iter().map(|q| (p - q).norm_sqr()).fold(f64::INFINITY, f64::min)).fold(0.0f64, f64::max).sqrt()
}

/// Hausdorff distance; above [`HAUSDORFF_CAP`] points the clouds are
/// downsampled and the downsampling radii are added, giving an upper bound.
pub fn hausdorff_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    let (pa, ra) = downsample(&a.points);
    let (pb, rb) = downsample(&b.points);
    directed(&pa, &pb).max(directed(&pb, &pa)) + ra + rb
}

fn require_same_mode(g1: &Trace, g2: &Trace) -> Result<Mode, GeometryError> {
    if g1.mode() != g2.mode() {
        return Err(GeometryError::ModeMismatch(g1.mode(), g2.mode()));
    }
    Ok(g1.mode())
}

fn merged_grid(g1: &Trace, g2: &Trace) -> Vec<f64> {
    let mut ts: Vec<f64> = g1.cap_times().iter().chain(g2.cap_times()).copied().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn normalized_samples(g: &Trace, times: &[f64]) -> Result<Vec<C64>, GeometryError> {
    g.sample_at(times).into_iter().map(|p| normalize(p, g.mode())).collect()
}

/// `sup_t d_D(γ(t∧T), γ̃(t∧T̃))` over the merged knot grid.
pub fn sup_metric(g1: &Trace, g2: &Trace) -> Result<f64, GeometryError> {
    require_same_mode(g1, g2)?;
    let ts = merged_grid(g1, g2);
    let a = normalized_samples(g1, &ts)?;
    let b = normalized_samples(g2, &ts)?;
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max))
}

/// As [`sup_metric`] with plain Euclidean distance, no normalization.
pub fn sup_metric_euclidean(g1: &Trace, g2: &Trace) -> Result<f64, GeometryError> {
    require_same_mode(g1, g2)?;
    let ts = merged_grid(g1, g2);
    let (a, b) = (g1.sample_at(&ts), g2.sample_at(&ts));
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max))
}

/// Discrete Fréchet distance under `d_D`.
///
/// Both traces are sampled on the merged knot grid (each up to its own
/// horizon), so the identity alignment is admissible and the result never
/// exceeds [`sup_metric`].
pub fn unparam_metric(g1: &Trace, g2: &Trace) -> Result<f64, GeometryError> {
    require_same_mode(g1, g2)?;
    let ts = merged_grid(g1, g2);
    let upto = |g: &Trace| -> Vec<f64> { ts.iter().copied().filter(|&t| t <= g.horizon()).collect() };
    let a = normalized_samples(g1, &upto(g1))?;
    let b = normalized_samples(g2, &upto(g2))?;
    Ok(discrete_frechet(&a, &b))
}

/// Classical O(mn) dynamic program with a rolling row.
pub fn discrete_frechet(a: &[C64], b: &[C64]) -> f64 {
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = (p - q).norm();
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

#[inline]
fn cross(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

#[inline]
fn orient(p: C64, q: C64, r: C64) -> f64 {
    cross(q - p, r - p)
}

fn on_segment(p: C64, q: C64, r: C64) -> bool {
    r.re >= p.re.min(q.re) && r.re <= p.re.max(q.re) && r.im >= p.im.min(q.im) && r.im <= p.im.max(q.im)
}

/// Closed segments `[p1,p2]` and `[q1,q2]` meet.
pub fn segments_intersect(p1: C64, p2: C64, q1: C64, q2: C64) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Adjacent segments `[a,b]`, `[b,c]` overlap beyond their shared vertex.
fn folds_back(a: C64, b: C64, c: C64) -> bool {
    let u = a - b;
    let v = c - b;
    cross(u, v) == 0.0 && (u.re * v.re + u.im * v.im) > 0.0
}

/// Segment–segment sweep over a polyline, ignoring shared endpoints of
/// consecutive segments.
pub fn polyline_self_intersects(points: &[C64]) -> bool {
    let n = points.len();
    if n < 3 {
        return n == 2 && points[0] == points[1];
    }
    let segs = n - 1;
    let bbox: Vec<(f64, f64, f64, f64)> = (0..segs)
        .map(|i| {
            let (p, q) = (points[i], points[i + 1]);
            (p.re.min(q.re), p.re.max(q.re), p.im.min(q.im), p.im.max(q.im))
        })
        .collect();
    for i in 0..segs {
        if points[i] == points[i + 1] {
            return true;
        }
        if i + 2 < n && folds_back(points[i], points[i + 1], points[i + 2]) {
            return true;
        }
        let bi = bbox[i];
        for j in i + 2..segs {
            let bj = bbox[j];
            if bj.0 > bi.1 || bj.1 < bi.0 || bj.2 > bi.3 || bj.3 < bi.2 {
                continue;
            }
            if segments_intersect(points[i], points[i + 1], points[j], points[j + 1]) {
                return true;
            }
        }
    }
    false
}

/// Polyline self-intersection, or an interior vertex back on the boundary
/// (the real line for chordal traces, the unit circle for radial ones).
pub fn self_intersects(g: &Trace) -> bool {
    let touches = g.points().iter().skip(1).any(|p| match g.mode() {
        Mode::Chordal => p.im <= 0.0,
        Mode::Radial => p.norm() >= 1.0,
    });
    touches || polyline_self_intersects(g.points())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnEventSpec {
    pub n: u32,
    #[serde(rename = "N")]
    pub big_n: u32,
    pub mode: Mode,
}

impl ReturnEventSpec {
    pub fn new(n: u32, big_n: u32, mode: Mode) -> Result<Self, GeometryError> {
        if n < 1 || big_n <= n {
            return Err(GeometryError::BadSpec(format!("need 1 ≤ n < N, got n = {n}, N = {big_n}")));
        }
        Ok(ReturnEventSpec { n, big_n, mode })
    }

    /// Radii of the trigger and violation circles.
    fn radii(&self) -> (f64, f64) {
        match self.mode {
            Mode::Chordal => (self.big_n as f64, self.n as f64),
            Mode::Radial => ((-(self.big_n as f64)).exp(), (-(self.n as f64)).exp()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ReturnOutcome {
    /// Triggered at `trigger` (σ_N or τ_N), then violated at `first_violation`.
    Hit {
        trigger: f64,
        first_violation: f64,
    },
    Miss {
        trigger: f64,
    },
    /// The trigger time was not reached on `[0, T]`.
    NotYet,
}

impl ReturnOutcome {
    pub fn is_hit(&self) -> bool {
        matches!(self, ReturnOutcome::Hit { .. })
    }
}

/// Roots of `|p + s d|² = r²` in increasing order.
fn circle_roots(p: C64, d: C64, r: f64) -> Option<(f64, f64)> {
    let a = d.norm_sqr();
    if a == 0.0 {
        return None;
    }
    let b = p.re * d.re + p.im * d.im;
    let c = p.norm_sqr() - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    Some(((-b - sq) / a, (-b + sq) / a))
}

/// First parameter `s ∈ [s0, 1]` on segment `p + s d` with `|·| > r`.
fn first_outside(p: C64, d: C64, r: f64, s0: f64) -> Option<f64> {
    if (p + d * s0).norm() > r {
        return Some(s0);
    }
    let (_, hi) = circle_roots(p, d, r)?;
    (hi >= s0 && hi < 1.0 || (hi == 1.0 && (p + d).norm() > r)).then_some(hi.max(s0))
}

/// First parameter `s ∈ [s0, 1]` on segment `p + s d` with `|·| < r`.
fn first_inside(p: C64, d: C64, r: f64, s0: f64) -> Option<f64> {
    if (p + d * s0).norm() < r {
        return Some(s0);
    }
    let (lo, hi) = circle_roots(p, d, r)?;
    (lo < hi && hi > s0 && lo <= 1.0).then_some(lo.max(s0))
}

type CrossingFn = fn(C64, C64, f64, f64) -> Option<f64>;

/// Evaluates the return event on the polyline `[0, T]`.
///
/// Chordal: σ_N is the first exit from `N·D`, and the event is a later visit
/// to `n·D`. Radial: τ_N is the first entry into `e^{−N} D`, and the event is
/// a later exit from the closed disk of radius `e^{−n}`.
pub fn return_event_hit(g: &Trace, spec: &ReturnEventSpec) -> Result<ReturnOutcome, GeometryError> {
    if g.mode() != spec.mode {
        return Err(GeometryError::ModeMismatch(spec.mode, g.mode()));
    }
    let (trigger_r, violation_r) = spec.radii();
    let (trigger_fn, violation_fn): (CrossingFn, CrossingFn) = match spec.mode {
        Mode::Chordal => (first_outside, first_inside),
        Mode::Radial => (first_inside, first_outside),
    };
    let (pts, ts) = (g.points(), g.cap_times());
    let time = |k: usize, s: f64| ts[k] + s * (ts[k + 1] - ts[k]);
    let mut trigger = None;
    for k in 0..pts.len().saturating_sub(1) {
        let (p, d) = (pts[k], pts[k + 1] - pts[k]);
        let s0 = match trigger {
            None => match trigger_fn(p, d, trigger_r, 0.0) {
                Some(s) => {
                    trigger = Some(time(k, s));
                    s
                }
                None => continue,
            },
            Some(_) => 0.0,
        };
        if let Some(s) = violation_fn(p, d, violation_r, s0) {
            return Ok(ReturnOutcome::Hit { trigger: trigger.unwrap(), first_violation: time(k, s) });
        }
    }
    Ok(match trigger {
        Some(t) => ReturnOutcome::Miss { trigger: t },
        None => ReturnOutcome::NotYet,
    })
}

/// Distance from `p` to the polyline through `poly`.
fn point_to_polyline(p: C64, poly: &[C64]) -> f64 {
    if poly.len() == 1 {
        return (p - poly[0]).norm();
    }
    poly.windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            let len2 = d.norm_sqr();
            let s = if len2 == 0.0 { 0.0 } else { ((p - w[0]).re * d.re + (p - w[0]).im * d.im) / len2 };
            (p - (w[0] + d * s.clamp(0.0, 1.0))).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatReport {
    pub discrepancy: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compares the trace of `concat(d1, d2)` after time `T₁` with the image of
/// the trace of `d2` under `f̂_{T₁}` (the map of `d1`).
///
/// `d1` is resampled to `n_steps` uniform pieces. Inside the concatenation
/// `d2` gets `n_steps + n_steps/2 + 1` pieces while the stand-alone trace of
/// `d2` uses `n_steps`, so the two sides share no knots after `T₁`. The
/// discrepancy is the symmetric point-to-polyline Hausdorff distance between
/// the two curves.
pub fn concat_consistency(d1: &Driver, d2: &Driver, n_steps: usize, tol: f64) -> Result<ConcatReport, ChordalError> {
    let report = |discrepancy: f64| ConcatReport { discrepancy, tol, pass: discrepancy <= tol };
    if d2.is_empty() {
        return Ok(report(0.0));
    }
    let d1 = if d1.is_empty() { d1.clone() } else { d1.resample_uniform(n_steps)? };
    let whole = d1.concat(&d2.resample_uniform(n_steps + n_steps / 2 + 1)?)?;
    let d2 = d2.resample_uniform(n_steps)?;
    let t1 = d1.horizon();
    let g = chordal::forward(&whole)?;
    let tail: Vec<C64> = g.points().iter().zip(g.cap_times()).filter(|(_, &t)| t >= t1).map(|(p, _)| *p).collect();
    let eta = chordal::forward(&d2)?;
    let image = eta.points().iter().map(|&w| chordal::fhat_eval(&d1, w, t1)).collect::<Result<Vec<_>, _>>()?;
    let one = tail.iter().map(|&p| point_to_polyline(p, &image)).fold(0.0, f64::max);
    let two = image.iter().map(|&p| point_to_polyline(p, &tail)).fold(0.0, f64::max);
    Ok(report(one.max(two)))
}
