//! Design storms: intensity-duration curves and the alternating-blocks
//! hyetograph.

use serde::Deserialize;

use crate::error::{Error, Result};

/// Intensity-duration-frequency curve `i = K * T^a / ((t + b)^c)` with
/// intensity in mm/h, duration `t` in minutes, and return period `T` in years.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct IdfCurve {
    pub k: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub return_period_yr: f64,
}

impl IdfCurve {
    pub fn intensity_mmh(&self, duration_min: f64) -> f64 {
        self.k * self.return_period_yr.powf(self.a) / (duration_min + self.b).powf(self.c)
    }

    fn cumulative_depth_mm(&self, duration_min: f64) -> f64 {
        self.intensity_mmh(duration_min) * duration_min / 60.0
    }
}

/// How the incremental depths of a design storm are shaped before the
/// alternating-blocks rearrangement.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StormShape {
    /// Intensity independent of duration: all blocks equal.
    Uniform,
    /// Shape from an IDF curve; depths are rescaled to the storm total.
    Idf(IdfCurve),
    /// Direct depth-duration table `(duration_min, cumulative_depth_mm)`,
    /// interpolated linearly and rescaled to the storm total.
    DepthDuration(Vec<(f64, f64)>),
}

/// A single design storm.
#[derive(Debug, Clone, Deserialize)]
pub struct DesignStormSpec {
    /// Total rainfall depth (mm).
    pub total_depth_mm: f64,
    /// Storm duration (h); must be an integer multiple of the block length.
    pub duration_h: f64,
    /// Block length (min).
    pub block_dt_min: f64,
    pub shape: StormShape,
}

impl DesignStormSpec {
    pub fn n_blocks(&self) -> Result<usize> {
        let ratio = self.duration_h * 60.0 / self.block_dt_min;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 || n < 1.0 {
            return Err(Error::InvalidInput(format!(
                "storm duration {} h is not an integer multiple of the {} min block",
                self.duration_h, self.block_dt_min
            )));
        }
        Ok(n as usize)
    }

    fn validate(&self) -> Result<()> {
        if !(self.total_depth_mm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "storm depth must be positive, got {} mm",
                self.total_depth_mm
            )));
        }
        if !(self.block_dt_min > 0.0) {
            return Err(Error::InvalidInput("block length must be positive".into()));
        }
        self.n_blocks().map(|_| ())
    }

    fn cumulative_depth_mm(&self, duration_min: f64) -> f64 {
        match &self.shape {
            StormShape::Uniform => self.total_depth_mm * duration_min / (self.duration_h * 60.0),
            StormShape::Idf(curve) => curve.cumulative_depth_mm(duration_min),
            StormShape::DepthDuration(table) => {
                // Piecewise-linear through (0, 0) and the table points.
                let mut prev = (0.0, 0.0);
                for &(t, d) in table {
                    if duration_min <= t {
                        let w = (duration_min - prev.0) / (t - prev.0);
                        return prev.1 + w * (d - prev.1);
                    }
                    prev = (t, d);
                }
                prev.1
            }
        }
    }
}

/// Build the alternating-blocks hyetograph: block intensities in mm/h.
///
/// Incremental depths are read off the cumulative depth-duration curve,
/// rescaled so they sum to the storm total, sorted descending, and laid out
/// with the peak at the central block and successively smaller blocks
/// alternating right then left of it.
pub fn alternating_blocks(spec: &DesignStormSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.n_blocks()?;
    let dt_min = spec.block_dt_min;

    let mut increments = Vec::with_capacity(n);
    let mut prev = 0.0;
    for k in 1..=n {
        let cum = spec.cumulative_depth_mm(k as f64 * dt_min);
        let inc = cum - prev;
        if inc < -1e-9 {
            return Err(Error::InvalidInput(
                "depth-duration curve is not non-decreasing".into(),
            ));
        }
        increments.push(inc.max(0.0));
        prev = cum;
    }
    let raw_total: f64 = increments.iter().sum();
    if !(raw_total > 0.0) {
        return Err(Error::InvalidInput("storm shape yields zero depth".into()));
    }
    let scale = spec.total_depth_mm / raw_total;
    for inc in &mut increments {
        *inc *= scale;
    }

    // Descending, stable so equal blocks keep their duration order.
    increments.sort_by(|a, b| b.total_cmp(a));

    let peak = (n - 1) / 2;
    let mut depths = vec![0.0; n];
    let mut right = peak + 1;
    let mut left = peak as isize - 1;
    let mut place_right = true;
    depths[peak] = increments[0];
    for &inc in &increments[1..] {
        let slot = loop {
            if place_right {
                place_right = false;
                if right < n {
                    let s = right;
                    right += 1;
                    break s;
                }
            } else {
                place_right = true;
                if left >= 0 {
                    let s = left as usize;
                    left -= 1;
                    break s;
                }
            }
        };
        depths[slot] = inc;
    }

    let dt_h = dt_min / 60.0;
    Ok(depths.into_iter().map(|d| d / dt_h).collect())
}
