//! Scenario configuration: a single TOML file naming rasters, tables,
//! forcing, the pond, and the controller. Validation collects every problem
//! it can find before giving up.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::forcing::{DesignStormSpec, EtStationSeries, GaugeSeries, StormShape};
use crate::grid::RasterField;
use crate::hydrology::{read_soil_table, SoilMap, SoilParams};
use crate::mpc::{MpcConfig, Strategy};
use crate::reservoir::{OutletDevices, StageCurve};
use crate::routing::RoutingParams;
use crate::terrain::{build_flow_topology, condition_dem, FlowTopology};

/// Environment variable overriding the output root directory.
pub const OUT_ROOT_ENV: &str = "STORMFLOW_OUT_ROOT";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    pub watershed: WatershedSection,
    pub forcing: ForcingSection,
    pub reservoir: ReservoirSection,
    pub mpc: MpcSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    /// ISO-8601 instant anchoring t = 0; defaults to 2024-01-01T00:00:00Z.
    pub start: Option<String>,
    pub duration_h: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub random_seed: u64,
    pub strategies: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatershedSection {
    pub dem: PathBuf,
    pub soil_classes: PathBuf,
    pub soil_table: PathBuf,
    pub lulc: PathBuf,
    pub lulc_table: PathBuf,
    pub outlet_row: usize,
    pub outlet_col: usize,
    #[serde(default = "default_min_slope")]
    pub min_slope: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min_s: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max_s: f64,
    #[serde(default)]
    pub depth_snapshot_times_s: Vec<f64>,
}

fn default_min_slope() -> f64 {
    0.001
}
fn default_cfl() -> f64 {
    0.5
}
fn default_dt_min() -> f64 {
    0.05
}
fn default_dt_max() -> f64 {
    60.0
}
fn default_idw_exponent() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    #[serde(default = "default_idw_exponent")]
    pub idw_exponent: f64,
    /// Manifest of rain gauges (timestamp,value CSVs in mm/h).
    pub rain_gauges: Option<PathBuf>,
    /// Manifest of climate stations (daily CSVs for reference ET).
    pub climate_stations: Option<PathBuf>,
    /// Constant potential-ET rate applied with design storms (mm/day).
    #[serde(default)]
    pub pet_rate_mm_day: f64,
    #[serde(default)]
    pub design_storm: Vec<DesignStormSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignStormSection {
    pub start_offset_h: f64,
    pub total_depth_mm: f64,
    pub duration_h: f64,
    pub block_dt_min: f64,
    pub shape: StormShape,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSection {
    /// Breakpoints (depth_m, area_m2), strictly increasing from depth 0.
    pub stage_area: Vec<(f64, f64)>,
    #[serde(default = "default_porosity")]
    pub porosity: f64,
    pub k_o: f64,
    pub alpha_v: f64,
    #[serde(default)]
    pub h0_orifice_m: f64,
    pub d_h_m: f64,
    pub k_s: f64,
    pub alpha_s: f64,
    pub crest_depth_m: f64,
    pub h_max_m: f64,
    #[serde(default)]
    pub initial_depth_m: f64,
    #[serde(default = "default_reservoir_dt")]
    pub dt_s: f64,
    #[serde(default = "default_true")]
    pub rain_on_pond: bool,
}

fn default_porosity() -> f64 {
    1.0
}
fn default_reservoir_dt() -> f64 {
    60.0
}
fn default_true() -> bool {
    true
}

/// Controller section. The flood thresholds are mandatory: they encode local
/// regulation and have no safe default.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub prediction_horizon_steps: usize,
    pub control_horizon_steps: usize,
    pub control_interval_s: f64,
    #[serde(default = "default_rho_u")]
    pub rho_u: f64,
    #[serde(default = "default_rho_r")]
    pub rho_r: f64,
    /// Defaults to the spillway crest depth.
    pub h_ref_m: Option<f64>,
    pub q_max_minor_m3s: Option<f64>,
    pub q_max_major_m3s: Option<f64>,
    pub alpha_p: Option<f64>,
    pub detention_time_h: f64,
    pub q_release_m3s: Option<f64>,
    pub wet_weather_threshold_m3s: Option<f64>,
    #[serde(default = "default_null_eps")]
    pub forecast_null_eps_m3s: f64,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_evals")]
    pub max_evals_per_start: usize,
    #[serde(default = "default_du_min")]
    pub du_min: f64,
    #[serde(default = "default_du_max")]
    pub du_max: f64,
}

fn default_rho_u() -> f64 {
    1.0
}
fn default_rho_r() -> f64 {
    100.0
}
fn default_null_eps() -> f64 {
    1e-6
}
fn default_n_starts() -> usize {
    5
}
fn default_max_evals() -> usize {
    120
}
fn default_du_min() -> f64 {
    -1.0
}
fn default_du_max() -> f64 {
    1.0
}

/// A fully validated, loaded scenario ready to run.
#[derive(Debug)]
pub struct Scenario {
    pub name: String,
    pub start: DateTime<Utc>,
    pub duration_s: f64,
    pub random_seed: u64,
    pub out_dir: PathBuf,
    pub strategies: Vec<Strategy>,

    pub dem: RasterField,
    pub topology: FlowTopology,
    pub soil: SoilMap,
    pub routing: RoutingParams,
    pub snapshot_times: Vec<f64>,

    pub gauges: Vec<GaugeSeries>,
    pub climate: Vec<EtStationSeries>,
    pub design_storms: Vec<(f64, DesignStormSpec)>,
    pub idw_exponent: f64,
    pub pet_rate_ms: f64,

    pub curve: StageCurve,
    pub devices: OutletDevices,
    pub initial_depth: f64,
    pub reservoir_dt: f64,
    pub rain_on_pond: bool,

    pub mpc: MpcConfig,
}

pub fn parse_strategy(raw: &str) -> std::result::Result<Strategy, String> {
    let lower = raw.trim().to_ascii_lowercase();
    if lower == "mpc" {
        return Ok(Strategy::Mpc);
    }
    let rest = lower
        .strip_prefix("static:")
        .or_else(|| lower.strip_prefix("static_"))
        .ok_or_else(|| format!("unknown strategy `{raw}` (expected `mpc` or `static:<pct>`)"))?;
    let pct: f64 = rest
        .parse()
        .map_err(|_| format!("bad static openness `{raw}`"))?;
    if !(0.0..=100.0).contains(&pct) {
        return Err(format!("static openness must be 0..100 percent, got {pct}"));
    }
    Ok(Strategy::Static {
        openness: pct / 100.0,
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parse and fully validate a scenario file, loading every referenced input.
/// Problems are collected and reported together.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ConfigFile = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    let base = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let mut problems: Vec<String> = Vec::new();

    let start = match &file.scenario.start {
        None => "2024-01-01T00:00:00Z".parse::<DateTime<Utc>>().unwrap(),
        Some(raw) => match raw.parse::<DateTime<Utc>>() {
            Ok(t) => t,
            Err(e) => {
                problems.push(format!("scenario.start: {e}"));
                Utc::now()
            }
        },
    };
    if !(file.scenario.duration_h > 0.0) {
        problems.push("scenario.duration_h must be positive".into());
    }
    if file.scenario.strategies.is_empty() {
        problems.push("scenario.strategies must name at least one strategy".into());
    }
    let mut strategies = Vec::new();
    for raw in &file.scenario.strategies {
        match parse_strategy(raw) {
            Ok(s) => strategies.push(s),
            Err(e) => problems.push(format!("scenario.strategies: {e}")),
        }
    }

    // Rasters must exist, parse, and share one geometry.
    let dem = load_raster(&base, &file.watershed.dem, "watershed.dem", &mut problems);
    let soil_raster = load_raster(
        &base,
        &file.watershed.soil_classes,
        "watershed.soil_classes",
        &mut problems,
    );
    let lulc_raster = load_raster(&base, &file.watershed.lulc, "watershed.lulc", &mut problems);
    if let (Some(dem), Some(soil)) = (&dem, &soil_raster) {
        if !dem.geometry().compatible_with(soil.geometry()) {
            problems.push("soil_classes raster geometry differs from the DEM".into());
        }
    }
    if let (Some(dem), Some(lulc)) = (&dem, &lulc_raster) {
        if !dem.geometry().compatible_with(lulc.geometry()) {
            problems.push("lulc raster geometry differs from the DEM".into());
        }
    }

    let soil_table: Option<BTreeMap<u32, SoilParams>> =
        match read_soil_table(resolve(&base, &file.watershed.soil_table)) {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(format!("watershed.soil_table: {e}"));
                None
            }
        };
    let lulc_table: Option<BTreeMap<u32, f64>> =
        match read_lulc_table(resolve(&base, &file.watershed.lulc_table)) {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(format!("watershed.lulc_table: {e}"));
                None
            }
        };

    if !(file.watershed.min_slope >= 0.0) {
        problems.push("watershed.min_slope must be non-negative".into());
    }
    if !(file.watershed.cfl > 0.0 && file.watershed.cfl <= 1.0) {
        problems.push(format!(
            "watershed.cfl must be in (0, 1], got {}",
            file.watershed.cfl
        ));
    }
    if !(file.watershed.dt_min_s > 0.0 && file.watershed.dt_min_s <= file.watershed.dt_max_s) {
        problems.push("watershed time-step bounds must satisfy 0 < dt_min_s <= dt_max_s".into());
    }

    // Forcing: either gauges or design storms must be present.
    let mut gauges = Vec::new();
    let mut climate = Vec::new();
    if let Some(manifest) = &file.forcing.rain_gauges {
        match crate::forcing::load_gauges(resolve(&base, manifest)) {
            Ok(g) => gauges = g,
            Err(e) => problems.push(format!("forcing.rain_gauges: {e}")),
        }
    }
    if let Some(manifest) = &file.forcing.climate_stations {
        match crate::forcing::load_climate(resolve(&base, manifest)) {
            Ok(c) => climate = c,
            Err(e) => problems.push(format!("forcing.climate_stations: {e}")),
        }
    }
    let mut design_storms = Vec::new();
    for (i, s) in file.forcing.design_storm.iter().enumerate() {
        let spec = DesignStormSpec {
            total_depth_mm: s.total_depth_mm,
            duration_h: s.duration_h,
            block_dt_min: s.block_dt_min,
            shape: s.shape.clone(),
        };
        match crate::forcing::alternating_blocks(&spec) {
            Ok(_) => design_storms.push((s.start_offset_h * 3600.0, spec)),
            Err(e) => problems.push(format!("forcing.design_storm[{i}]: {e}")),
        }
    }
    if gauges.is_empty() && design_storms.is_empty() {
        problems.push("forcing needs rain_gauges or at least one design_storm".into());
    }
    if !gauges.is_empty() && !design_storms.is_empty() {
        problems.push("forcing cannot mix rain_gauges with design storms".into());
    }
    if !(file.forcing.idw_exponent > 0.0) {
        problems.push("forcing.idw_exponent must be positive".into());
    }

    // Gauge records must cover the simulated span.
    let duration_s = file.scenario.duration_h * 3600.0;
    if !gauges.is_empty() {
        for g in &gauges {
            if let (Some(first), Some(last)) = (g.timestamps.first(), g.timestamps.last()) {
                let t0 = (*first - start).num_milliseconds() as f64 / 1e3;
                let t1 = (*last - start).num_milliseconds() as f64 / 1e3;
                if t0 > 0.0 || t1 < duration_s {
                    problems.push(format!(
                        "gauge {} does not cover the simulated span (covers {t0}..{t1} s)",
                        g.id
                    ));
                }
            }
        }
    }

    // Reservoir.
    let curve = match StageCurve::new(file.reservoir.stage_area.clone(), file.reservoir.porosity) {
        Ok(c) => Some(c),
        Err(e) => {
            problems.push(format!("reservoir.stage_area: {e}"));
            None
        }
    };
    let devices = OutletDevices {
        k_o: file.reservoir.k_o,
        alpha_v: file.reservoir.alpha_v,
        h0_orifice: file.reservoir.h0_orifice_m,
        d_h: file.reservoir.d_h_m,
        k_s: file.reservoir.k_s,
        alpha_s: file.reservoir.alpha_s,
        p: file.reservoir.crest_depth_m,
        h_max: file.reservoir.h_max_m,
    };
    if let Err(e) = devices.validate() {
        problems.push(format!("reservoir: {e}"));
    }
    if let Some(c) = &curve {
        if file.reservoir.h_max_m > c.top_depth() + 1e-9 {
            problems.push(format!(
                "reservoir.h_max_m {} exceeds the stage curve top {}",
                file.reservoir.h_max_m,
                c.top_depth()
            ));
        }
    }
    if !(file.reservoir.initial_depth_m >= 0.0
        && file.reservoir.initial_depth_m <= file.reservoir.h_max_m)
    {
        problems.push("reservoir.initial_depth_m must lie in [0, h_max_m]".into());
    }
    if !(file.reservoir.dt_s > 0.0) {
        problems.push("reservoir.dt_s must be positive".into());
    }

    // Controller: mandatory thresholds first, then structural checks.
    let mut missing = Vec::new();
    for (name, value) in [
        ("mpc.q_max_minor_m3s", &file.mpc.q_max_minor_m3s),
        ("mpc.q_max_major_m3s", &file.mpc.q_max_major_m3s),
        ("mpc.alpha_p", &file.mpc.alpha_p),
        ("mpc.q_release_m3s", &file.mpc.q_release_m3s),
        (
            "mpc.wet_weather_threshold_m3s",
            &file.mpc.wet_weather_threshold_m3s,
        ),
    ] {
        if value.is_none() {
            missing.push(name);
        }
    }
    for name in &missing {
        problems.push(format!("{name} is mandatory"));
    }
    let mpc = MpcConfig {
        prediction_horizon: file.mpc.prediction_horizon_steps,
        control_horizon: file.mpc.control_horizon_steps,
        control_interval: file.mpc.control_interval_s,
        rho_u: file.mpc.rho_u,
        rho_r: file.mpc.rho_r,
        h_ref: file.mpc.h_ref_m.unwrap_or(file.reservoir.crest_depth_m),
        q_max_minor: file.mpc.q_max_minor_m3s.unwrap_or(f64::NAN),
        q_max_major: file.mpc.q_max_major_m3s.unwrap_or(f64::NAN),
        alpha_p: file.mpc.alpha_p.unwrap_or(f64::NAN),
        detention_time: file.mpc.detention_time_h * 3600.0,
        q_release: file.mpc.q_release_m3s.unwrap_or(f64::NAN),
        wet_weather_threshold: file.mpc.wet_weather_threshold_m3s.unwrap_or(f64::NAN),
        forecast_null_eps: file.mpc.forecast_null_eps_m3s,
        n_starts: file.mpc.n_starts,
        max_evals_per_start: file.mpc.max_evals_per_start,
        du_min: file.mpc.du_min,
        du_max: file.mpc.du_max,
    };
    if missing.is_empty() {
        if let Err(Error::Config(more)) = mpc.validate() {
            problems.extend(more.into_iter().map(|p| format!("mpc: {p}")));
        }
    }
    let ratio = file.mpc.control_interval_s / file.reservoir.dt_s;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
        problems.push(format!(
            "mpc.control_interval_s ({}) must be an integer multiple of reservoir.dt_s ({})",
            file.mpc.control_interval_s, file.reservoir.dt_s
        ));
    }

    // Terrain conditioning and the derived inputs; only attempted once the
    // rasters are structurally sound.
    let mut topology = None;
    let mut soil_map = None;
    let mut manning = None;
    let mut conditioned = None;
    if let (Some(dem), Some(soil_raster), Some(lulc_raster), Some(soil_table), Some(lulc_table)) =
        (&dem, &soil_raster, &lulc_raster, &soil_table, &lulc_table)
    {
        let g = dem.geometry();
        if file.watershed.outlet_row >= g.nrows || file.watershed.outlet_col >= g.ncols {
            problems.push(format!(
                "outlet ({}, {}) is outside the {}x{} grid",
                file.watershed.outlet_row, file.watershed.outlet_col, g.nrows, g.ncols
            ));
        } else {
            let outlet = g.index(file.watershed.outlet_row, file.watershed.outlet_col);
            match condition_dem(dem, outlet, file.watershed.min_slope) {
                Ok(cond) => {
                    match build_flow_topology(&cond, outlet, file.watershed.min_slope.max(1e-6)) {
                        Ok(t) => {
                            topology = Some(t);
                            conditioned = Some(cond);
                        }
                        Err(e) => problems.push(format!("flow topology: {e}")),
                    }
                }
                Err(e) => problems.push(format!("DEM conditioning: {e}")),
            }
        }
        match SoilMap::from_class_raster(soil_raster, soil_table) {
            Ok(m) => soil_map = Some(m),
            Err(e) => problems.push(format!("soil classes: {e}")),
        }
        match manning_from_classes(lulc_raster, lulc_table) {
            Ok(m) => manning = Some(m),
            Err(e) => problems.push(format!("lulc classes: {e}")),
        }
    }

    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }

    let out_dir = match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root),
        None => resolve(&base, &file.scenario.output_dir),
    };

    Ok(Scenario {
        name: file.scenario.name,
        start,
        duration_s,
        random_seed: file.scenario.random_seed,
        out_dir,
        strategies,
        dem: conditioned.unwrap(),
        topology: topology.unwrap(),
        soil: soil_map.unwrap(),
        routing: RoutingParams {
            manning: manning.unwrap(),
            cfl: file.watershed.cfl,
            dt_min: file.watershed.dt_min_s,
            dt_max: file.watershed.dt_max_s,
        },
        snapshot_times: file.watershed.depth_snapshot_times_s,
        gauges,
        climate,
        design_storms,
        idw_exponent: file.forcing.idw_exponent,
        pet_rate_ms: file.forcing.pet_rate_mm_day / 8.64e7,
        curve: curve.unwrap(),
        devices,
        initial_depth: file.reservoir.initial_depth_m,
        reservoir_dt: file.reservoir.dt_s,
        rain_on_pond: file.reservoir.rain_on_pond,
        mpc,
    })
}

fn load_raster(
    base: &Path,
    rel: &Path,
    what: &str,
    problems: &mut Vec<String>,
) -> Option<RasterField> {
    match RasterField::read_ascii(resolve(base, rel)) {
        Ok(r) => Some(r),
        Err(e) => {
            problems.push(format!("{what}: {e}"));
            None
        }
    }
}

/// LULC table: TOML `[[class]] id = .., manning_n = ..`.
pub fn read_lulc_table(path: impl AsRef<Path>) -> Result<BTreeMap<u32, f64>> {
    #[derive(Deserialize)]
    struct Row {
        id: u32,
        manning_n: f64,
    }
    #[derive(Deserialize)]
    struct Table {
        class: Vec<Row>,
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: Table = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    for row in &table.class {
        if !(row.manning_n > 0.0) {
            return Err(Error::parse(
                path,
                format!("class {}: manning_n must be positive", row.id),
            ));
        }
    }
    Ok(table
        .class
        .into_iter()
        .map(|r| (r.id, r.manning_n))
        .collect())
}

/// Resolve a class raster to per-cell Manning roughness.
pub fn manning_from_classes(
    raster: &RasterField,
    table: &BTreeMap<u32, f64>,
) -> Result<RasterField> {
    let mut out = RasterField::new_filled(raster.geometry().clone(), raster.geometry().nodata);
    for (i, raw) in raster.values().iter().enumerate() {
        if raster.is_nodata(i) {
            continue;
        }
        if raw.fract() != 0.0 || *raw < 0.0 {
            return Err(Error::InvalidInput(format!(
                "cell {i}: non-integer lulc class {raw}"
            )));
        }
        let id = *raw as u32;
        let n = table.get(&id).ok_or_else(|| {
            Error::InvalidInput(format!("cell {i}: lulc class {id} not in table"))
        })?;
        out.set(i, *n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing() {
        assert_eq!(parse_strategy("mpc").unwrap(), Strategy::Mpc);
        assert_eq!(parse_strategy("MPC").unwrap(), Strategy::Mpc);
        assert_eq!(
            parse_strategy("static:75").unwrap(),
            Strategy::Static { openness: 0.75 }
        );
        assert_eq!(
            parse_strategy("static_050").unwrap(),
            Strategy::Static { openness: 0.5 }
        );
        assert!(parse_strategy("static:150").is_err());
        assert!(parse_strategy("banana").is_err());
    }

    #[test]
    fn validation_enumerates_all_problems() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("bad.toml");
        std::fs::write(
            &config,
            r#"
[scenario]
name = "bad"
duration_h = -4.0
output_dir = "out"
strategies = ["banana"]

[watershed]
dem = "missing_dem.asc"
soil_classes = "missing_soil.asc"
soil_table = "missing_soils.toml"
lulc = "missing_lulc.asc"
lulc_table = "missing_lulc.toml"
outlet_row = 0
outlet_col = 0
cfl = 2.0

[forcing]

[reservoir]
stage_area = [[0.0, 50.0]]
k_o = 5.4039
alpha_v = 0.5
d_h_m = 1.0
k_s = 27.0
alpha_s = 1.5
crest_depth_m = 4.4
h_max_m = 6.9

[mpc]
prediction_horizon_steps = 12
control_horizon_steps = 2
control_interval_s = 3600.0
detention_time_h = 18.0
"#,
        )
        .unwrap();
        let err = load_scenario(&config).unwrap_err();
        let Error::Config(problems) = err else {
            panic!("expected Config error, got {err}")
        };
        let text = problems.join("\n");
        // One failure report enumerates every independent problem.
        assert!(text.contains("duration_h"), "{text}");
        assert!(text.contains("banana"), "{text}");
        assert!(text.contains("missing_dem.asc"), "{text}");
        assert!(text.contains("cfl"), "{text}");
        assert!(text.contains("stage_area"), "{text}");
        assert!(text.contains("q_max_minor_m3s is mandatory"), "{text}");
        assert!(text.contains("q_max_major_m3s is mandatory"), "{text}");
        assert!(text.contains("alpha_p is mandatory"), "{text}");
        assert!(text.contains("forcing needs rain_gauges"), "{text}");
        assert!(
            problems.len() >= 10,
            "expected many problems, got {}",
            problems.len()
        );
    }
}
