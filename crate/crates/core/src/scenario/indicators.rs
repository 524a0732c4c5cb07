//! Performance indicators: treated volume, volume-weighted detention time,
//! exceedance duration curves, and the per-strategy report row.

use crate::error::{Error, Result};

/// Treated volume (m^3): orifice discharge integrated over eligible steps.
/// Eligibility — no forecast inflow and a pool above the orifice datum — is
/// decided by the caller.
pub fn treated_volume(orifice_q: &[f64], eligible: &[bool], dt: f64) -> Result<f64> {
    if orifice_q.len() != eligible.len() {
        return Err(Error::InvalidInput(format!(
            "series length {} does not match mask length {}",
            orifice_q.len(),
            eligible.len()
        )));
    }
    Ok(orifice_q
        .iter()
        .zip(eligible)
        .filter(|(_, &e)| e)
        .map(|(q, _)| q * dt)
        .sum())
}

/// Volume-weighted mean detention time (s) of the treated volume. `None`
/// when nothing eligible was released.
pub fn average_detention_time(
    orifice_q: &[f64],
    detention_s: &[f64],
    eligible: &[bool],
    dt: f64,
) -> Result<Option<f64>> {
    if orifice_q.len() != detention_s.len() || orifice_q.len() != eligible.len() {
        return Err(Error::InvalidInput(
            "indicator series lengths differ".into(),
        ));
    }
    let v_out = treated_volume(orifice_q, eligible, dt)?;
    if v_out <= 0.0 {
        return Ok(None);
    }
    let weighted: f64 = orifice_q
        .iter()
        .zip(detention_s)
        .zip(eligible)
        .filter(|(_, &e)| e)
        .map(|((q, d), _)| q * dt * d)
        .sum();
    Ok(Some(weighted / v_out))
}

/// Exceedance duration curve: values sorted descending with Weibull plotting
/// positions r / (N + 1).
pub fn duration_curve(series: &[f64]) -> Result<Vec<(f64, f64)>> {
    if series.is_empty() {
        return Err(Error::InvalidInput(
            "duration curve needs a non-empty series".into(),
        ));
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| ((i as f64 + 1.0) / (n + 1.0), v))
        .collect())
}

/// One strategy's indicator row.
#[derive(Debug, Clone)]
pub struct IndicatorReport {
    pub strategy: String,
    pub peak_inflow_m3s: f64,
    pub peak_outflow_m3s: f64,
    /// (1 - peak_out / peak_in) * 100, clamped to [0, 100].
    pub peak_reduction_pct: f64,
    pub treated_volume_m3: f64,
    /// Absent when no eligible volume was released.
    pub avg_detention_time_s: Option<f64>,
    pub max_stage_m: f64,
    pub overtopped: bool,
    pub total_outflow_m3: f64,
    pub flow_duration: Vec<(f64, f64)>,
    pub stage_duration: Vec<(f64, f64)>,
}

impl IndicatorReport {
    pub fn reduction_pct(peak_in: f64, peak_out: f64) -> f64 {
        if peak_in <= 0.0 {
            return 0.0;
        }
        ((1.0 - peak_out / peak_in) * 100.0).clamp(0.0, 100.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treated_volume_cases() {
        // Fully eligible constant release: 1 m^3/s for 3600 s.
        let q = vec![1.0; 60];
        let mask = vec![true; 60];
        assert_eq!(treated_volume(&q, &mask, 60.0).unwrap(), 3600.0);
        // Nothing eligible.
        let none = vec![false; 60];
        assert_eq!(treated_volume(&q, &none, 60.0).unwrap(), 0.0);
        // Half the steps eligible at 2 m^3/s over 7200 s -> 7200 m^3.
        let q = vec![2.0; 120];
        let mask: Vec<bool> = (0..120).map(|i| i % 2 == 0).collect();
        assert_eq!(treated_volume(&q, &mask, 60.0).unwrap(), 7200.0);
        assert!(treated_volume(&q, &mask[..10], 60.0).is_err());
    }

    #[test]
    fn average_detention_cases() {
        let dt = 60.0;
        // Constant detention stamp: the mean is that stamp.
        let q = vec![1.0; 10];
        let d = vec![18.0 * 3600.0; 10];
        let e = vec![true; 10];
        assert_eq!(
            average_detention_time(&q, &d, &e, dt).unwrap(),
            Some(64_800.0)
        );
        // Two equal-volume releases at 12 h and 24 h average to 18 h.
        let q = vec![1.0, 1.0];
        let d = vec![12.0 * 3600.0, 24.0 * 3600.0];
        let e = vec![true, true];
        assert_eq!(
            average_detention_time(&q, &d, &e, dt).unwrap(),
            Some(64_800.0)
        );
        // Volume-weighted: 3V at 10 h and V at 30 h -> 15 h.
        let q = vec![3.0, 1.0];
        let d = vec![10.0 * 3600.0, 30.0 * 3600.0];
        assert_eq!(
            average_detention_time(&q, &d, &e, dt).unwrap(),
            Some(15.0 * 3600.0)
        );
        // No eligible volume: absent.
        let e = vec![false, false];
        assert_eq!(average_detention_time(&q, &d, &e, dt).unwrap(), None);
    }

    #[test]
    fn duration_curve_cases() {
        // Constant series: flat curve.
        let curve = duration_curve(&[5.0, 5.0, 5.0]).unwrap();
        assert!(curve.iter().all(|&(_, v)| v == 5.0));
        // [3,1,2] -> (0.25,3),(0.5,2),(0.75,1).
        let curve = duration_curve(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(curve, vec![(0.25, 3.0), (0.5, 2.0), (0.75, 1.0)]);
        // Values are non-increasing along the curve for any input.
        let curve = duration_curve(&[1.0, 9.0, 4.0, 4.0, 0.0, 7.0]).unwrap();
        for pair in curve.windows(2) {
            assert!(pair[0].1 >= pair[1].1);
            assert!(pair[0].0 < pair[1].0);
        }
        assert!(duration_curve(&[]).is_err());
    }
}
