//! Daily reference evapotranspiration via the standard FAO-56 combination
//! equation for a short grass reference surface.

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// One day of climate observations at a station.
#[derive(Debug, Clone)]
pub struct DailyClimate {
    pub date: NaiveDate,
    /// Mean air temperature (deg C).
    pub tmean_c: f64,
    /// Mean relative humidity (%).
    pub rh_pct: f64,
    /// Wind speed at 2 m (m/s).
    pub wind_ms: f64,
    /// Net radiation at the surface (MJ m^-2 day^-1).
    pub net_radiation_mj_m2: f64,
    /// Atmospheric pressure (kPa); sea-level standard when absent.
    pub pressure_kpa: Option<f64>,
    /// Soil heat flux (MJ m^-2 day^-1); negligible at daily scale when absent.
    pub soil_heat_flux_mj_m2: Option<f64>,
}

/// Saturation vapor pressure (kPa) at temperature `t_c`.
fn saturation_vapor_pressure_kpa(t_c: f64) -> f64 {
    0.6108 * (17.27 * t_c / (t_c + 237.3)).exp()
}

/// Reference evapotranspiration ET0 (mm/day), clamped at zero.
pub fn reference_et0_mm_day(c: &DailyClimate) -> f64 {
    let t = c.tmean_c;
    let pressure = c.pressure_kpa.unwrap_or(101.3);
    let g = c.soil_heat_flux_mj_m2.unwrap_or(0.0);

    let es = saturation_vapor_pressure_kpa(t);
    let ea = es * (c.rh_pct / 100.0).clamp(0.0, 1.0);
    let delta = 4098.0 * es / (t + 237.3).powi(2);
    let gamma = 0.000665 * pressure;

    let radiation_term = 0.408 * delta * (c.net_radiation_mj_m2 - g);
    let aerodynamic_term = gamma * (900.0 / (t + 273.0)) * c.wind_ms * (es - ea);
    let denominator = delta + gamma * (1.0 + 0.34 * c.wind_ms);

    ((radiation_term + aerodynamic_term) / denominator).max(0.0)
}

/// Fill gaps in a daily series by linear interpolation between valid days.
/// Leading and trailing gaps take the nearest valid value. Returns the
/// indices that were filled.
pub fn fill_gaps(values: &mut [Option<f64>]) -> Result<Vec<usize>> {
    let n = values.len();
    if !values.iter().any(Option::is_some) {
        return Err(Error::InvalidInput(
            "climate series has no valid days".into(),
        ));
    }
    let mut filled = Vec::new();
    let mut i = 0;
    while i < n {
        if values[i].is_some() {
            i += 1;
            continue;
        }
        let gap_start = i;
        while i < n && values[i].is_none() {
            i += 1;
        }
        let before = gap_start.checked_sub(1).and_then(|j| values[j]);
        let after = if i < n { values[i] } else { None };
        for (offset, slot) in values[gap_start..i].iter_mut().enumerate() {
            let j = gap_start + offset;
            let v = match (before, after) {
                (Some(a), Some(b)) => {
                    let w = (j - gap_start + 1) as f64 / (i - gap_start + 1) as f64;
                    a + w * (b - a)
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("at least one valid day exists"),
            };
            *slot = Some(v);
            filled.push(j);
        }
    }
    Ok(filled)
}
