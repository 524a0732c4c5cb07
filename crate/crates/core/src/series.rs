//! Piecewise-constant time series on irregular step boundaries.
//!
//! The watershed solver produces discharge on adaptive steps; the reservoir
//! and controller consume it on a uniform grid. Resampling is done by
//! time-weighted averaging so volume is preserved exactly.

use crate::error::{Error, Result};

/// A value that holds over `[t[i], t[i+1])`, with an explicit end time for
/// the last interval. Times are seconds from the scenario start.
#[derive(Debug, Clone, Default)]
pub struct StepSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    end: f64,
}

impl StepSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a uniform series starting at `t0` with spacing `dt`.
    pub fn uniform(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "step series dt must be > 0, got {dt}"
            )));
        }
        let end = t0 + dt * values.len() as f64;
        let times = (0..values.len()).map(|i| t0 + dt * i as f64).collect();
        Ok(Self { times, values, end })
    }

    /// Append an interval `[t, t + dt)` holding `value`. Intervals must be
    /// contiguous and forward in time.
    pub fn push(&mut self, t: f64, dt: f64, value: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "interval length must be > 0, got {dt}"
            )));
        }
        if let Some(&last) = self.times.last() {
            if t < last || (t - self.end).abs() > 1e-6 * self.end.abs().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "non-contiguous interval start {t}, expected {}",
                    self.end
                )));
            }
        }
        self.times.push(t);
        self.values.push(value);
        self.end = t + dt;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn start(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at time `t`; zero outside the covered span.
    pub fn value_at(&self, t: f64) -> f64 {
        if self.values.is_empty() || t < self.times[0] || t >= self.end {
            return 0.0;
        }
        let idx = match self.times.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => return 0.0,
            Err(i) => i - 1,
        };
        self.values[idx]
    }

    /// Integral of the series over its whole span (value times seconds).
    pub fn integral(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.values.len() {
            let t_end = if i + 1 < self.times.len() {
                self.times[i + 1]
            } else {
                self.end
            };
            total += self.values[i] * (t_end - self.times[i]);
        }
        total
    }

    /// Mean value over `[a, b)` by exact time-weighted averaging; intervals
    /// outside the covered span contribute zero.
    pub fn mean_over(&self, a: f64, b: f64) -> f64 {
        if b <= a || self.values.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..self.values.len() {
            let s = self.times[i].max(a);
            let e = (if i + 1 < self.times.len() {
                self.times[i + 1]
            } else {
                self.end
            })
            .min(b);
            if e > s {
                acc += self.values[i] * (e - s);
            }
        }
        acc / (b - a)
    }

    /// Maximum value attained anywhere in `[a, b)`; zero if uncovered.
    pub fn max_over(&self, a: f64, b: f64) -> f64 {
        if b <= a || self.values.is_empty() {
            return 0.0;
        }
        let mut best = 0.0f64;
        let mut covered = false;
        for i in 0..self.values.len() {
            let s = self.times[i].max(a);
            let e = (if i + 1 < self.times.len() {
                self.times[i + 1]
            } else {
                self.end
            })
            .min(b);
            if e > s {
                best = best.max(self.values[i]);
                covered = true;
            }
        }
        if covered {
            best
        } else {
            0.0
        }
    }

    /// Resample onto a uniform grid `t0, t0+dt, ...` spanning at least
    /// `[t0, t_end)`, averaging within each target interval (volume-preserving).
    pub fn resample_uniform(&self, t0: f64, dt: f64, t_end: f64) -> Result<StepSeries> {
        if !(dt > 0.0) || t_end <= t0 {
            return Err(Error::InvalidInput(
                "resample grid must be forward in time".into(),
            ));
        }
        let n = ((t_end - t0) / dt).ceil() as usize;
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            let a = t0 + dt * k as f64;
            values.push(self.mean_over(a, a + dt));
        }
        StepSeries::uniform(t0, dt, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_lookup() {
        let mut s = StepSeries::new();
        s.push(0.0, 2.0, 1.0).unwrap();
        s.push(2.0, 3.0, 5.0).unwrap();
        assert_eq!(s.value_at(0.0), 1.0);
        assert_eq!(s.value_at(1.999), 1.0);
        assert_eq!(s.value_at(2.0), 5.0);
        assert_eq!(s.value_at(4.999), 5.0);
        assert_eq!(s.value_at(5.0), 0.0);
        assert_eq!(s.integral(), 2.0 + 15.0);
    }

    #[test]
    fn resampling_preserves_volume() {
        let mut s = StepSeries::new();
        // Irregular steps, like an adaptive solver would emit.
        s.push(0.0, 0.7, 3.0).unwrap();
        s.push(0.7, 1.9, 10.0).unwrap();
        s.push(2.6, 0.4, 4.0).unwrap();
        let r = s.resample_uniform(0.0, 1.0, 3.0).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r.integral() - s.integral()).abs() < 1e-12);
        // First second: 0.7 * 3 + 0.3 * 10 = 5.1.
        assert!((r.values()[0] - 5.1).abs() < 1e-12);
    }

    #[test]
    fn mean_and_max_windows() {
        let s = StepSeries::uniform(0.0, 1.0, vec![1.0, 3.0, 2.0]).unwrap();
        assert!((s.mean_over(0.5, 1.5) - 2.0).abs() < 1e-12);
        assert_eq!(s.max_over(0.5, 1.5), 3.0);
        // Past the end the series is zero.
        assert_eq!(s.max_over(10.0, 11.0), 0.0);
        assert_eq!(s.mean_over(2.0, 4.0), 1.0);
    }

    #[test]
    fn rejects_non_contiguous_push() {
        let mut s = StepSeries::new();
        s.push(0.0, 1.0, 1.0).unwrap();
        assert!(s.push(5.0, 1.0, 1.0).is_err());
    }
}
