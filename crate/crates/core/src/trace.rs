//! Discretized curves with capacity timestamps.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::C64;
use crate::driver::Mode;

/// Points may sit this far outside the closed reference domain (float noise).
pub const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("points and cap_times differ in length ({points} vs {times})")]
    LengthMismatch { points: usize, times: usize },
    #[error("a trace needs at least one point")]
    Empty,
    #[error("trace must start at {expected}, got {found}")]
    BadStart { expected: C64, found: C64 },
    #[error("cap_times must start at 0 and strictly increase (index {index})")]
    NonMonotoneTimes { index: usize },
    #[error("point {index} = {point} lies outside the {mode} domain")]
    OutsideDomain { index: usize, point: C64, mode: Mode },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("trace csv: {0}")]
    Csv(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    points: Vec<C64>,
    cap_times: Vec<f64>,
    mode: Mode,
}

/// The root of the curve: 0 in the half-plane, 1 on the unit circle.
pub fn root(mode: Mode) -> C64 {
    match mode {
        Mode::Chordal => C64::new(0.0, 0.0),
        Mode::Radial => C64::new(1.0, 0.0),
    }
}

pub(crate) fn in_domain(p: C64, mode: Mode) -> bool {
    match mode {
        Mode::Chordal => p.im >= -DOMAIN_SLACK,
        Mode::Radial => p.norm() <= 1.0 + DOMAIN_SLACK,
    }
}

impl Trace {
    pub fn new(points: Vec<C64>, cap_times: Vec<f64>, mode: Mode) -> Result<Self, TraceError> {
        if points.len() != cap_times.len() {
            return Err(TraceError::LengthMismatch { points: points.len(), times: cap_times.len() });
        }
        if points.is_empty() {
            return Err(TraceError::Empty);
        }
        for (index, (p, t)) in points.iter().zip(&cap_times).enumerate() {
            if !(p.re.is_finite() && p.im.is_finite() && t.is_finite()) {
                return Err(TraceError::NonFinite { index });
            }
        }
        let start = root(mode);
        if (points[0] - start).norm() > DOMAIN_SLACK {
            return Err(TraceError::BadStart { expected: start, found: points[0] });
        }
        if cap_times[0] != 0.0 {
            return Err(TraceError::NonMonotoneTimes { index: 0 });
        }
        if let Some(i) = cap_times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(TraceError::NonMonotoneTimes { index: i + 1 });
        }
        if let Some(index) = points.iter().position(|&p| !in_domain(p, mode)) {
            return Err(TraceError::OutsideDomain { index, point: points[index], mode });
        }
        Ok(Trace { points, cap_times, mode })
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn cap_times(&self) -> &[f64] {
        &self.cap_times
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.len() < 2
    }

    pub fn horizon(&self) -> f64 {
        *self.cap_times.last().unwrap()
    }

    pub fn tip(&self) -> C64 {
        *self.points.last().unwrap()
    }

    /// Linear interpolation in capacity time, clamped to `[0, T]`.
    pub fn point_at(&self, t: f64) -> C64 {
        let ts = &self.cap_times;
        if t <= 0.0 || ts.len() == 1 {
            return self.points[0];
        }
        if t >= self.horizon() {
            return self.tip();
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let s = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.points[k] + (self.points[k + 1] - self.points[k]) * s
    }

    /// Resamples at the given capacity times (clamped).
    pub fn sample_at(&self, times: &[f64]) -> Vec<C64> {
        times.iter().map(|&t| self.point_at(t)).collect()
    }

    /// Prefix up to capacity time `t` (interpolated final point).
    pub fn truncate(&self, t: f64) -> Trace {
        let t = t.clamp(0.0, self.horizon());
        let keep = self.cap_times.partition_point(|&s| s < t).max(1);
        let mut points = self.points[..keep].to_vec();
        let mut times = self.cap_times[..keep].to_vec();
        if t > times[keep - 1] {
            points.push(self.point_at(t));
            times.push(t);
        }
        Trace { points, cap_times: times, mode: self.mode }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| TraceError::Csv(e.to_string());
        w.write_record(["t", "re", "im"]).map_err(err)?;
        for (t, p) in self.cap_times.iter().zip(&self.points) {
            w.write_record([t.to_string(), p.re.to_string(), p.im.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| TraceError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R, mode: Mode) -> Result<Trace, TraceError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| TraceError::Csv(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "re", "im"] {
            return Err(TraceError::Csv(format!("expected header `t,re,im`, got {headers:?}")));
        }
        let mut points = Vec::new();
        let mut times = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| TraceError::Csv(e.to_string()))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| TraceError::Csv(format!("{s:?}: {e}")));
            times.push(parse(&rec[0])?);
            points.push(C64::new(parse(&rec[1])?, parse(&rec[2])?));
        }
        Trace::new(points, times, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slit() -> Trace {
        Trace::new(
            vec![C64::new(0.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, 2.0)],
            vec![0.0, 0.25, 1.0],
            Mode::Chordal,
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(matches!(
            Trace::new(vec![C64::new(1.0, 0.0)], vec![0.0], Mode::Chordal),
            Err(TraceError::BadStart { .. })
        ));
        assert!(matches!(
            Trace::new(vec![C64::new(0.0, 0.0), C64::new(0.0, -1.0)], vec![0.0, 1.0], Mode::Chordal),
            Err(TraceError::OutsideDomain { index: 1, .. })
        ));
        assert!(matches!(
            Trace::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)], vec![0.0, 1.0], Mode::Radial),
            Err(TraceError::OutsideDomain { index: 1, .. })
        ));
        assert!(matches!(
            Trace::new(vec![C64::new(0.0, 0.0); 2], vec![0.0, 0.0], Mode::Chordal),
            Err(TraceError::NonMonotoneTimes { index: 1 })
        ));
    }

    #[test]
    fn interpolation_and_truncation() {
        let s = slit();
        assert_eq!(s.point_at(0.125), C64::new(0.0, 0.5));
        assert_eq!(s.point_at(5.0), C64::new(0.0, 2.0));
        let t = s.truncate(0.5);
        assert_eq!(t.cap_times(), &[0.0, 0.25, 0.5]);
        assert_eq!(t.tip(), s.point_at(0.5));
        assert_eq!(s.truncate(0.25).len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let s = slit();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,re,im\n0,0,0\n"));
        assert_eq!(Trace::read_csv(&buf[..], Mode::Chordal).unwrap(), s);
    }
}
