//! Gauge and climate-station records: CSV loading and manifest handling.
//!
//! Rain gauge files have the header `timestamp,value` with ISO-8601 UTC
//! timestamps and rates in mm/h; station coordinates live in a TOML manifest
//! next to the data files. Climate files carry one row per day with named
//! columns.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::forcing::et::{fill_gaps, reference_et0_mm_day, DailyClimate};

/// A rainfall record at one station.
#[derive(Debug, Clone)]
pub struct GaugeSeries {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub timestamps: Vec<DateTime<Utc>>,
    /// Rainfall rate (mm/h) holding from each timestamp to the next.
    pub values_mmh: Vec<f64>,
}

impl GaugeSeries {
    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "gauge {}: need at least two records",
                self.id
            )));
        }
        for pair in self.timestamps.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidInput(format!(
                    "gauge {}: timestamps must be strictly increasing",
                    self.id
                )));
            }
        }
        if self.values_mmh.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "gauge {}: rainfall rates must be finite and non-negative",
                self.id
            )));
        }
        Ok(())
    }

    pub fn read_csv(id: &str, x: f64, y: f64, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        {
            let headers = reader
                .headers()
                .map_err(|e| Error::parse(path, e.to_string()))?;
            if headers.len() < 2
                || !headers[0].trim().eq_ignore_ascii_case("timestamp")
                || !headers[1].trim().eq_ignore_ascii_case("value")
            {
                return Err(Error::parse(path, "expected header `timestamp,value`"));
            }
        }
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
            let t = DateTime::parse_from_rfc3339(record[0].trim())
                .map_err(|e| Error::parse(path, format!("row {}: bad timestamp: {e}", line + 2)))?
                .with_timezone(&Utc);
            let v: f64 = record[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("row {}: bad value", line + 2)))?;
            timestamps.push(t);
            values.push(v);
        }
        let series = GaugeSeries {
            id: id.to_string(),
            x,
            y,
            timestamps,
            values_mmh: values,
        };
        series.validate()?;
        Ok(series)
    }
}

#[derive(Debug, Deserialize)]
pub struct ManifestStation {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub file: PathBuf,
}

#[derive(Debug, Deserialize)]
pub struct StationManifest {
    #[serde(rename = "station")]
    pub stations: Vec<ManifestStation>,
}

impl StationManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: StationManifest =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if manifest.stations.is_empty() {
            return Err(Error::parse(path, "manifest lists no stations"));
        }
        Ok(manifest)
    }

    /// Resolve station file paths relative to the manifest location.
    pub fn resolved_files(&self, manifest_path: &Path) -> Vec<PathBuf> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        self.stations
            .iter()
            .map(|s| {
                if s.file.is_absolute() {
                    s.file.clone()
                } else {
                    base.join(&s.file)
                }
            })
            .collect()
    }
}

/// Load all rain gauges named by a manifest.
pub fn load_gauges(manifest_path: impl AsRef<Path>) -> Result<Vec<GaugeSeries>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = StationManifest::read(manifest_path)?;
    let files = manifest.resolved_files(manifest_path);
    manifest
        .stations
        .iter()
        .zip(files)
        .map(|(s, file)| GaugeSeries::read_csv(&s.id, s.x, s.y, file))
        .collect()
}

/// Daily reference-ET series at one station, derived from a climate file.
#[derive(Debug, Clone)]
pub struct EtStationSeries {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub first_day: NaiveDate,
    /// ET0 (mm/day), one entry per consecutive day.
    pub et0_mm_day: Vec<f64>,
    /// Day offsets (from `first_day`) whose inputs were gap-filled.
    pub filled_days: Vec<usize>,
}

fn parse_opt_f64(field: Option<&str>) -> Option<f64> {
    field.and_then(|s| {
        let s = s.trim();
        if s.is_empty() {
            None
        } else {
            s.parse::<f64>().ok()
        }
    })
}

/// Read a climate CSV (`date,tmean_c,rh_pct,wind_ms,rn_mj_m2[,pressure_kpa]
/// [,soil_heat_flux_mj_m2]`) and compute the daily ET0 series. Days with
/// missing fields are flagged and filled by linear interpolation on ET0.
pub fn load_climate_station(
    id: &str,
    x: f64,
    y: f64,
    path: impl AsRef<Path>,
) -> Result<EtStationSeries> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(c_date), Some(c_t), Some(c_rh), Some(c_wind), Some(c_rn)) = (
        col("date"),
        col("tmean_c"),
        col("rh_pct"),
        col("wind_ms"),
        col("rn_mj_m2"),
    ) else {
        return Err(Error::parse(
            path,
            "expected columns date,tmean_c,rh_pct,wind_ms,rn_mj_m2",
        ));
    };
    let c_pressure = col("pressure_kpa");
    let c_g = col("soil_heat_flux_mj_m2");

    let mut days: Vec<(NaiveDate, Option<f64>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let date = NaiveDate::parse_from_str(record[c_date].trim(), "%Y-%m-%d")
            .map_err(|e| Error::parse(path, format!("row {}: bad date: {e}", line + 2)))?;
        let fields = (
            parse_opt_f64(record.get(c_t)),
            parse_opt_f64(record.get(c_rh)),
            parse_opt_f64(record.get(c_wind)),
            parse_opt_f64(record.get(c_rn)),
        );
        let et0 = match fields {
            (Some(t), Some(rh), Some(wind), Some(rn)) => {
                Some(reference_et0_mm_day(&DailyClimate {
                    date,
                    tmean_c: t,
                    rh_pct: rh,
                    wind_ms: wind,
                    net_radiation_mj_m2: rn,
                    pressure_kpa: c_pressure.and_then(|c| parse_opt_f64(record.get(c))),
                    soil_heat_flux_mj_m2: c_g.and_then(|c| parse_opt_f64(record.get(c))),
                }))
            }
            _ => None,
        };
        days.push((date, et0));
    }
    if days.is_empty() {
        return Err(Error::parse(path, "climate file has no rows"));
    }
    for pair in days.windows(2) {
        if pair[1].0 != pair[0].0.succ_opt().unwrap() {
            return Err(Error::parse(path, "climate rows must be consecutive days"));
        }
    }

    let mut et0: Vec<Option<f64>> = days.iter().map(|(_, v)| *v).collect();
    let filled = fill_gaps(&mut et0)?;
    Ok(EtStationSeries {
        id: id.to_string(),
        x,
        y,
        first_day: days[0].0,
        et0_mm_day: et0.into_iter().map(Option::unwrap).collect(),
        filled_days: filled,
    })
}

pub fn load_climate(manifest_path: impl AsRef<Path>) -> Result<Vec<EtStationSeries>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = StationManifest::read(manifest_path)?;
    let files = manifest.resolved_files(manifest_path);
    manifest
        .stations
        .iter()
        .zip(files)
        .map(|(s, file)| load_climate_station(&s.id, s.x, s.y, file))
        .collect()
}
