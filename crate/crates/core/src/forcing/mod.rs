//! Rainfall and evapotranspiration forcing for the distributed model.
//!
//! A [`ForcingProvider`] turns design storms or gauge/climate records into
//! per-cell rate rasters ([`ForcingSnapshot`]) that are piecewise constant in
//! time. Snapshots are cached per forcing interval, and the provider exposes
//! interval boundaries so the adaptive solver can land steps exactly on them.

pub mod et;
pub mod gauge;
pub mod idw;
pub mod storm;

use chrono::{DateTime, Datelike, Utc};

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, RasterField};
pub use et::{reference_et0_mm_day, DailyClimate};
pub use gauge::{load_climate, load_gauges, EtStationSeries, GaugeSeries};
pub use idw::{idw_interpolate, IdwWeights};
pub use storm::{alternating_blocks, DesignStormSpec, IdfCurve, StormShape};

const MMH_TO_MS: f64 = 1.0 / 3.6e6;
const MM_DAY_TO_MS: f64 = 1.0 / 8.64e7;
const DAY_S: f64 = 86_400.0;

/// Per-cell forcing rates at an instant.
#[derive(Debug, Clone)]
pub struct ForcingSnapshot {
    /// Rainfall rate (m/s), non-negative.
    pub rain: RasterField,
    /// Potential evapotranspiration rate (m/s). The hydrology module caps it
    /// by available surface water.
    pub pet: RasterField,
}

/// A storm event placed on the scenario clock.
#[derive(Debug, Clone)]
pub struct StormEvent {
    pub start_s: f64,
    pub block_dt_s: f64,
    /// Block intensities (m/s).
    pub intensities_ms: Vec<f64>,
}

impl StormEvent {
    pub fn from_design_storm(spec: &DesignStormSpec, start_s: f64) -> Result<Self> {
        let blocks_mmh = alternating_blocks(spec)?;
        Ok(StormEvent {
            start_s,
            block_dt_s: spec.block_dt_min * 60.0,
            intensities_ms: blocks_mmh.iter().map(|i| i * MMH_TO_MS).collect(),
        })
    }

    fn end_s(&self) -> f64 {
        self.start_s + self.block_dt_s * self.intensities_ms.len() as f64
    }

    fn intensity_at(&self, t: f64) -> f64 {
        if t < self.start_s || t >= self.end_s() {
            return 0.0;
        }
        let block = ((t - self.start_s) / self.block_dt_s) as usize;
        self.intensities_ms[block.min(self.intensities_ms.len() - 1)]
    }
}

/// Piecewise-constant series on the scenario clock (seconds from start).
#[derive(Debug, Clone)]
struct BoundSeries {
    times_s: Vec<f64>,
    values: Vec<f64>,
    end_s: f64,
}

impl BoundSeries {
    fn value_at(&self, t: f64) -> Result<f64> {
        if self.times_s.is_empty() || t < self.times_s[0] || t >= self.end_s {
            return Err(Error::OutOfRange(format!(
                "t = {t} s is outside the record span [{}, {})",
                self.times_s.first().copied().unwrap_or(f64::NAN),
                self.end_s
            )));
        }
        let idx = match self.times_s.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Ok(self.values[idx])
    }
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
enum ProviderKind {
    Storms {
        events: Vec<StormEvent>,
        pet_rate_ms: f64,
    },
    Stations {
        rain: Vec<BoundSeries>,
        rain_weights: IdwWeights,
        et: Option<(Vec<BoundSeries>, IdwWeights)>,
    },
}

/// Produces cached forcing snapshots over the scenario clock.
#[derive(Debug)]
pub struct ForcingProvider {
    grid: GridGeometry,
    kind: ProviderKind,
    /// Sorted instants where any input series changes value.
    boundaries: Vec<f64>,
    /// Intersection of station spans; `None` for design storms (valid forever).
    span: Option<(f64, f64)>,
    cache: Option<(f64, f64, ForcingSnapshot)>,
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

impl ForcingProvider {
    /// Spatially uniform design storms, optionally with a constant potential
    /// ET rate (m/s).
    pub fn from_storms(grid: GridGeometry, events: Vec<StormEvent>, pet_rate_ms: f64) -> Self {
        let mut boundaries = Vec::new();
        for e in &events {
            for k in 0..=e.intensities_ms.len() {
                boundaries.push(e.start_s + e.block_dt_s * k as f64);
            }
        }
        ForcingProvider {
            grid,
            kind: ProviderKind::Storms {
                events,
                pet_rate_ms,
            },
            boundaries: dedup_sorted(boundaries),
            span: None,
            cache: None,
        }
    }

    /// Gauge rainfall (and optional climate ET) interpolated by IDW.
    ///
    /// `start` anchors the scenario clock: t = 0 corresponds to `start`.
    pub fn from_stations(
        grid: GridGeometry,
        gauges: &[GaugeSeries],
        climate: &[EtStationSeries],
        start: DateTime<Utc>,
        idw_exponent: f64,
    ) -> Result<Self> {
        if gauges.is_empty() {
            return Err(Error::InvalidInput(
                "at least one rain gauge is required".into(),
            ));
        }
        let mut boundaries = Vec::new();
        let mut rain = Vec::with_capacity(gauges.len());
        let mut span_start = f64::NEG_INFINITY;
        let mut span_end = f64::INFINITY;
        for g in gauges {
            g.validate()?;
            let times_s: Vec<f64> = g
                .timestamps
                .iter()
                .map(|t| (*t - start).num_milliseconds() as f64 / 1e3)
                .collect();
            let n = times_s.len();
            let last_dt = times_s[n - 1] - times_s[n - 2];
            let end_s = times_s[n - 1] + last_dt;
            span_start = span_start.max(times_s[0]);
            span_end = span_end.min(end_s);
            boundaries.extend_from_slice(&times_s);
            boundaries.push(end_s);
            rain.push(BoundSeries {
                times_s,
                values: g.values_mmh.iter().map(|v| v * MMH_TO_MS).collect(),
                end_s,
            });
        }
        let rain_weights = IdwWeights::build(
            &gauges.iter().map(|g| (g.x, g.y)).collect::<Vec<_>>(),
            &grid,
            idw_exponent,
        )?;

        let et = if climate.is_empty() {
            None
        } else {
            let mut series = Vec::with_capacity(climate.len());
            for c in climate {
                let day0 = c
                    .first_day
                    .and_hms_opt(0, 0, 0)
                    .map(|naive| DateTime::<Utc>::from_naive_utc_and_offset(naive, Utc))
                    .expect("midnight exists");
                let offset0 = (day0 - start).num_milliseconds() as f64 / 1e3;
                let times_s: Vec<f64> = (0..c.et0_mm_day.len())
                    .map(|d| offset0 + DAY_S * d as f64)
                    .collect();
                let end_s = offset0 + DAY_S * c.et0_mm_day.len() as f64;
                boundaries.extend_from_slice(&times_s);
                boundaries.push(end_s);
                series.push(BoundSeries {
                    times_s,
                    values: c.et0_mm_day.iter().map(|v| v * MM_DAY_TO_MS).collect(),
                    end_s,
                });
            }
            let weights = IdwWeights::build(
                &climate.iter().map(|c| (c.x, c.y)).collect::<Vec<_>>(),
                &grid,
                idw_exponent,
            )?;
            Some((series, weights))
        };

        Ok(ForcingProvider {
            grid,
            kind: ProviderKind::Stations {
                rain,
                rain_weights,
                et,
            },
            boundaries: dedup_sorted(boundaries),
            span: Some((span_start, span_end)),
            cache: None,
        })
    }

    pub fn grid(&self) -> &GridGeometry {
        &self.grid
    }

    /// Time span over which snapshots are defined; `None` means unbounded.
    pub fn span(&self) -> Option<(f64, f64)> {
        self.span
    }

    /// First forcing change strictly after `t`, or `f64::INFINITY`.
    pub fn next_boundary_after(&self, t: f64) -> f64 {
        let idx = self.boundaries.partition_point(|&b| b <= t + 1e-9);
        self.boundaries.get(idx).copied().unwrap_or(f64::INFINITY)
    }

    fn interval_around(&self, t: f64) -> (f64, f64) {
        let hi = self.next_boundary_after(t);
        let idx = self.boundaries.partition_point(|&b| b <= t + 1e-9);
        let lo = if idx == 0 {
            f64::NEG_INFINITY
        } else {
            self.boundaries[idx - 1]
        };
        (lo, hi)
    }

    fn build_snapshot(&self, t: f64) -> Result<ForcingSnapshot> {
        match &self.kind {
            ProviderKind::Storms {
                events,
                pet_rate_ms,
            } => {
                let rate: f64 = events.iter().map(|e| e.intensity_at(t)).sum();
                Ok(ForcingSnapshot {
                    rain: RasterField::new_filled(self.grid.clone(), rate),
                    pet: RasterField::new_filled(self.grid.clone(), *pet_rate_ms),
                })
            }
            ProviderKind::Stations {
                rain,
                rain_weights,
                et,
            } => {
                let values: Vec<f64> = rain.iter().map(|s| s.value_at(t)).collect::<Result<_>>()?;
                let rain_field = rain_weights.interpolate(&values)?;
                let pet = match et {
                    Some((series, weights)) => {
                        // ET0 is disaggregated uniformly over its day; outside
                        // the climate span the rate is zero rather than an error.
                        let values: Vec<f64> = series
                            .iter()
                            .map(|s| s.value_at(t).unwrap_or(0.0))
                            .collect();
                        weights.interpolate(&values)?
                    }
                    None => RasterField::new_filled(self.grid.clone(), 0.0),
                };
                Ok(ForcingSnapshot {
                    rain: rain_field,
                    pet,
                })
            }
        }
    }

    /// Snapshot of forcing rates at time `t` (seconds on the scenario clock).
    pub fn snapshot_at(&mut self, t: f64) -> Result<&ForcingSnapshot> {
        let fresh = match &self.cache {
            Some((lo, hi, _)) => !(t >= *lo && t < *hi),
            None => true,
        };
        if fresh {
            let snapshot = self.build_snapshot(t)?;
            let (lo, hi) = self.interval_around(t);
            self.cache = Some((lo, hi, snapshot));
        }
        Ok(&self.cache.as_ref().unwrap().2)
    }
}

/// One-shot snapshot from gauge and climate records.
pub fn snapshot_at(
    t: DateTime<Utc>,
    gauges: &[GaugeSeries],
    climate: &[EtStationSeries],
    grid: &GridGeometry,
    idw_exponent: f64,
) -> Result<ForcingSnapshot> {
    let start = gauges
        .iter()
        .filter_map(|g| g.timestamps.first().copied())
        .min()
        .ok_or_else(|| Error::InvalidInput("no gauges supplied".into()))?;
    let mut provider =
        ForcingProvider::from_stations(grid.clone(), gauges, climate, start, idw_exponent)?;
    let offset = (t - start).num_milliseconds() as f64 / 1e3;
    provider.snapshot_at(offset).cloned()
}

/// Day-of-year helper used when generating synthetic climate inputs.
pub fn day_of_year(t: DateTime<Utc>) -> u32 {
    t.ordinal()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn grid() -> GridGeometry {
        GridGeometry::new(3, 3, 10.0, 0.0, 0.0, -9999.0).unwrap()
    }

    fn gauge(id: &str, x: f64, y: f64, values: &[f64]) -> GaugeSeries {
        let start = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
        GaugeSeries {
            id: id.into(),
            x,
            y,
            timestamps: (0..values.len())
                .map(|i| start + chrono::Duration::minutes(10 * i as i64))
                .collect(),
            values_mmh: values.to_vec(),
        }
    }

    #[test]
    fn storm_provider_is_piecewise_constant() {
        let spec = DesignStormSpec {
            total_depth_mm: 12.0,
            duration_h: 1.0,
            block_dt_min: 30.0,
            shape: StormShape::Uniform,
        };
        let event = StormEvent::from_design_storm(&spec, 600.0).unwrap();
        let mut p = ForcingProvider::from_storms(grid(), vec![event], 0.0);
        // Before the storm.
        assert_eq!(p.snapshot_at(0.0).unwrap().rain.get(0), 0.0);
        assert_eq!(p.next_boundary_after(0.0), 600.0);
        // Inside: 12 mm/h.
        let r = p.snapshot_at(700.0).unwrap().rain.get(4);
        assert!((r - 12.0 * MMH_TO_MS).abs() < 1e-18);
        // After.
        assert_eq!(p.snapshot_at(600.0 + 3600.0).unwrap().rain.get(0), 0.0);
    }

    #[test]
    fn single_gauge_gives_constant_field() {
        let g = gauge("a", 15.0, 15.0, &[6.0, 0.0]);
        let start = g.timestamps[0];
        let mut p = ForcingProvider::from_stations(grid(), &[g], &[], start, 2.0).unwrap();
        let snap = p.snapshot_at(0.0).unwrap();
        for (_, v) in snap.rain.iter_valid() {
            assert!((v - 6.0 * MMH_TO_MS).abs() < 1e-18);
        }
        // Second interval holds the second value.
        let snap = p.snapshot_at(650.0).unwrap();
        assert_eq!(snap.rain.get(0), 0.0);
    }

    #[test]
    fn out_of_span_is_an_error_for_gauges() {
        let g = gauge("a", 15.0, 15.0, &[6.0, 0.0]);
        let start = g.timestamps[0];
        let mut p = ForcingProvider::from_stations(grid(), &[g], &[], start, 2.0).unwrap();
        // Span is [0, 1200): two 10-min intervals.
        assert!(p.snapshot_at(1200.0).is_err());
        assert!(p.snapshot_at(-1.0).is_err());
        assert!(matches!(p.snapshot_at(5000.0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn two_gauges_interpolate_between() {
        let a = gauge("a", 0.0, 15.0, &[0.0, 0.0]);
        let b = gauge("b", 30.0, 15.0, &[10.0, 10.0]);
        let start = a.timestamps[0];
        let mut p = ForcingProvider::from_stations(grid(), &[a, b], &[], start, 2.0).unwrap();
        let snap = p.snapshot_at(60.0).unwrap();
        // Center cell (1,1) at (15, 15): equidistant, so the mean.
        let g = grid();
        let v = snap.rain.get(g.index(1, 1));
        assert!((v - 5.0 * MMH_TO_MS).abs() < 1e-18);
    }

    #[test]
    fn boundaries_cover_gauge_edges() {
        let g = gauge("a", 15.0, 15.0, &[1.0, 2.0, 3.0]);
        let start = g.timestamps[0];
        let p = ForcingProvider::from_stations(grid(), &[g], &[], start, 2.0).unwrap();
        assert_eq!(p.next_boundary_after(0.0), 600.0);
        assert_eq!(p.next_boundary_after(600.0), 1200.0);
        assert_eq!(p.next_boundary_after(1200.0), 1800.0);
        assert_eq!(p.span(), Some((0.0, 1800.0)));
    }
}
