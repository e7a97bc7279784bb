//! Link patterns and the loop-free part of the multichordal potential.
//!
//! Marked points `x_1 < … < x_{2n}` sit on the real line; chord `j` joins
//! `x_{a_j}` and `x_{b_j}` inside the upper half-plane. The Brownian loop
//! term of the potential is not computed.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chordal::{self, ChordalError};
use crate::complex::C64;
use crate::driver::{sample_brownian_driver, DriverError, Mode};
use crate::geometry::segments_intersect;
use crate::rng::{derive_seed, StreamRng};

#[derive(Debug, Error, PartialEq)]
pub enum MultichordalError {
    #[error("not a pair partition of 1..=2n: {0}")]
    NotAPartition(String),
    #[error("pairs {0:?} and {1:?} cross")]
    Crossing((usize, usize), (usize, usize)),
    #[error("coincident points {0}")]
    CoincidentPoints(f64),
    #[error("marked points must be 2n strictly increasing reals")]
    BadMarkedPoints,
    #[error(transparent)]
    Chordal(#[from] ChordalError),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// A planar pair partition of `{1, …, 2n}`; pairs are stored as `(a, b)`
/// with `a < b`, sorted by `a`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkPattern {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl LinkPattern {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

pub fn validate_link_pattern(pairs: &[(usize, usize)]) -> Result<LinkPattern, MultichordalError> {
    let n = pairs.len();
    if n == 0 {
        return Err(MultichordalError::NotAPartition("no pairs".into()));
    }
    let mut seen = vec![false; 2 * n + 1];
    let mut norm: Vec<(usize, usize)> = Vec::with_capacity(n);
    for &(x, y) in pairs {
        let (a, b) = (x.min(y), x.max(y));
        if a == b || a == 0 || b > 2 * n {
            return Err(MultichordalError::NotAPartition(format!("bad pair ({x}, {y})")));
        }
        for i in [a, b] {
            if std::mem::replace(&mut seen[i], true) {
                return Err(MultichordalError::NotAPartition(format!("index {i} used twice")));
            }
        }
        norm.push((a, b));
    }
    norm.sort();
    for (i, &(a, b)) in norm.iter().enumerate() {
        for &(c, d) in &norm[i + 1..] {
            if a < c && c < b && b < d {
                return Err(MultichordalError::Crossing((a, b), (c, d)));
            }
        }
    }
    Ok(LinkPattern { n, pairs: norm })
}

/// All pair partitions of `{1, …, 2n}` (not only planar ones).
pub fn all_pair_partitions(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(free: &mut Vec<usize>, acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if free.is_empty() {
            out.push(acc.clone());
            return;
        }
        let first = free.remove(0);
        for k in 0..free.len() {
            let partner = free.remove(k);
            acc.push((first, partner));
            rec(free, acc, out);
            acc.pop();
            free.insert(k, partner);
        }
        free.insert(0, first);
    }
    let mut out = Vec::new();
    rec(&mut (1..=2 * n).collect(), &mut Vec::new(), &mut out);
    out
}

/// `P(x, y) = (y − x)^{−2}` (half-plane convention, constant dropped).
pub fn poisson_excursion_kernel(x: f64, y: f64) -> Result<f64, MultichordalError> {
    if x == y {
        return Err(MultichordalError::CoincidentPoints(x));
    }
    Ok((y - x).powi(-2))
}

/// Möbius map of the half-plane sending `a ↦ 0`, `b ↦ ∞`.
pub fn to_standard(z: C64, a: f64, b: f64) -> C64 {
    (z - a) / (b - z)
}

/// Inverse of [`to_standard`].
pub fn from_standard(w: C64, a: f64, b: f64) -> C64 {
    (a + b * w) / (1.0 + w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChordEnsemble {
    pub pattern: LinkPattern,
    /// Chord `j` runs from `x_{a_j}` toward `x_{b_j}`.
    pub chords: Vec<Vec<C64>>,
    pub marked_points: Vec<f64>,
    pub disjoint: bool,
}

fn check_marked(pattern: &LinkPattern, pts: &[f64]) -> Result<(), MultichordalError> {
    if pts.len() != 2 * pattern.n || pts.windows(2).any(|w| !(w[0] < w[1])) || pts.iter().any(|x| !x.is_finite()) {
        return Err(MultichordalError::BadMarkedPoints);
    }
    Ok(())
}

fn chords_disjoint(chords: &[Vec<C64>]) -> bool {
    for i in 0..chords.len() {
        for j in i + 1..chords.len() {
            for s in chords[i].windows(2) {
                for t in chords[j].windows(2) {
                    if segments_intersect(s[0], s[1], t[0], t[1]) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

impl ChordEnsemble {
    pub fn new(
        pattern: LinkPattern,
        chords: Vec<Vec<C64>>,
        marked_points: Vec<f64>,
    ) -> Result<Self, MultichordalError> {
        check_marked(&pattern, &marked_points)?;
        if chords.len() != pattern.n {
            return Err(MultichordalError::NotAPartition(format!("{} chords for {} pairs", chords.len(), pattern.n)));
        }
        let disjoint = chords_disjoint(&chords);
        Ok(ChordEnsemble { pattern, chords, marked_points, disjoint })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialBreakdown {
    /// `(1/12) · I(chord_j)` per chord.
    pub energy_terms: Vec<f64>,
    /// `−(1/4) · log P(x_{a_j}, x_{b_j})` per chord.
    pub kernel_terms: Vec<f64>,
    pub total: f64,
    pub disjoint: bool,
    pub loop_term_omitted: bool,
}

/// Uniform arc-length resampling of a polyline to `segments` pieces.
fn resample_arclength(points: &[C64], segments: usize) -> Vec<C64> {
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    (0..=segments)
        .map(|k| {
            let s = total * k as f64 / segments as f64;
            let i = cum.partition_point(|&c| c <= s).clamp(1, points.len() - 1);
            let (c0, c1) = (cum[i - 1], cum[i]);
            let f = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
            points[i - 1] + (points[i] - points[i - 1]) * f.clamp(0.0, 1.0)
        })
        .collect()
}

/// Loop-free multichordal potential: each chord is sent to `(H; 0, ∞)` by the
/// Möbius map fixing its endpoints, resampled to `resolution` equal-length
/// pieces and unzipped.
pub fn partial_potential(e: &ChordEnsemble, resolution: usize) -> Result<PotentialBreakdown, MultichordalError> {
    let mut energy_terms = Vec::with_capacity(e.chords.len());
    let mut kernel_terms = Vec::with_capacity(e.chords.len());
    for (chord, &(ia, ib)) in e.chords.iter().zip(e.pattern.pairs()) {
        let (a, b) = (e.marked_points[ia - 1], e.marked_points[ib - 1]);
        let mut mapped: Vec<C64> =
            chord.iter().filter(|z| (*z - b).norm() > 1e-12).map(|&z| to_standard(z, a, b)).collect();
        if let Some(first) = mapped.first_mut() {
            if first.norm() < 1e-12 {
                *first = C64::new(0.0, 0.0);
            }
        }
        let poly = resample_arclength(&mapped, resolution.max(1));
        let driver = chordal::unzip_curve(&poly)?;
        let energy = driver.dirichlet_energy().finite().unwrap_or(f64::INFINITY);
        energy_terms.push(energy / 12.0);
        kernel_terms.push(-0.25 * poisson_excursion_kernel(a, b)?.ln());
    }
    let total = energy_terms.iter().chain(&kernel_terms).sum();
    Ok(PotentialBreakdown { energy_terms, kernel_terms, total, disjoint: e.disjoint, loop_term_omitted: true })
}

/// Independent chordal SLE_κ samples, one per pair, each run for capacity
/// time `horizon` in `(H; 0, ∞)` and carried to its endpoint pair.
pub fn sample_independent_chords(
    pattern: &LinkPattern,
    marked_points: &[f64],
    kappa: f64,
    n_steps: usize,
    horizon: f64,
    seed: u64,
) -> Result<ChordEnsemble, MultichordalError> {
    check_marked(pattern, marked_points)?;
    let chords = pattern
        .pairs()
        .iter()
        .enumerate()
        .map(|(j, &(ia, ib))| {
            let mut rng = StreamRng::seed_from_u64(derive_seed(seed, &[j as u64]));
            let d = sample_brownian_driver(kappa, horizon, n_steps, Mode::Chordal, &mut rng)?;
            let g = chordal::forward(&d)?;
            let (a, b) = (marked_points[ia - 1], marked_points[ib - 1]);
            Ok(g.points().iter().map(|&w| from_standard(w, a, b)).collect())
        })
        .collect::<Result<Vec<Vec<C64>>, MultichordalError>>()?;
    ChordEnsemble::new(pattern.clone(), chords, marked_points.to_vec())
}

/// On-disk pattern format `{"n":2,"pairs":[[1,2],[3,4]],"points":[-2,-1,1,2]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternFile {
    pub n: usize,
    pub pairs: Vec<[usize; 2]>,
    pub points: Vec<f64>,
}

impl PatternFile {
    pub fn pattern(&self) -> Result<LinkPattern, MultichordalError> {
        let p = validate_link_pattern(&self.pairs.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>())?;
        if p.n != self.n {
            return Err(MultichordalError::NotAPartition(format!("n = {} but {} pairs", self.n, p.n)));
        }
        check_marked(&p, &self.points)?;
        Ok(p)
    }
}
