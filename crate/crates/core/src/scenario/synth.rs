//! Synthetic scenario generator: writes a complete, runnable input set
//! (rasters, tables, forcing, config) into a directory. Used by `init-demo`
//! and by the integration tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, RasterField};

/// Which demo inputs to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoKind {
    /// A 44-hour event: two 2-h design storms six hours apart on a steep
    /// synthetic catchment, all five strategies.
    TwoStorms,
    /// A continuous run fed by synthetic 10-minute rain gauges and daily
    /// climate records.
    GaugeDays(u32),
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn uniform(state: &mut u64) -> f64 {
    (splitmix(state) >> 11) as f64 / (1u64 << 53) as f64
}

/// V-shaped valley descending to an outlet at the middle of the south edge.
fn valley_dem(ncols: usize, nrows: usize, cellsize: f64, s_long: f64, s_cross: f64) -> RasterField {
    let g = GridGeometry::new(ncols, nrows, cellsize, 0.0, 0.0, -9999.0).unwrap();
    let c0 = ncols / 2;
    let mut values = Vec::with_capacity(g.n_cells());
    for row in 0..nrows {
        for col in 0..ncols {
            let down = (nrows - 1 - row) as f64 * cellsize;
            let cross = (col as isize - c0 as isize).unsigned_abs() as f64 * cellsize;
            values.push(s_long * down + s_cross * cross);
        }
    }
    RasterField::from_values(g, values).unwrap()
}

/// Land cover: a built corridor along the valley, grass on the hillslopes.
fn lulc_raster(ncols: usize, nrows: usize, cellsize: f64, corridor: usize) -> RasterField {
    let g = GridGeometry::new(ncols, nrows, cellsize, 0.0, 0.0, -9999.0).unwrap();
    let c0 = ncols / 2;
    let mut values = Vec::with_capacity(g.n_cells());
    for _row in 0..nrows {
        for col in 0..ncols {
            let dist = (col as isize - c0 as isize).unsigned_abs();
            values.push(if dist <= corridor { 1.0 } else { 2.0 });
        }
    }
    RasterField::from_values(g, values).unwrap()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_tables(dir: &Path) -> Result<()> {
    // Class 1: urban corridor, nearly impervious. Class 2: loamy hillslopes.
    write(
        &dir.join("soils.toml"),
        "[[class]]\nid = 1\npsi_m = 0.011\nksat_ms = 2.8e-7\ndtheta = 0.2\nh0_m = 0.001\nrecharge_ms = 1e-8\n\n         [[class]]\nid = 2\npsi_m = 0.0315\nksat_ms = 7.0556e-6\ndtheta = 0.476\nh0_m = 0.005\nrecharge_ms = 1e-7\n",
    )?;
    write(
        &dir.join("lulc.toml"),
        "[[class]]\nid = 1\nmanning_n = 0.016\n\n[[class]]\nid = 2\nmanning_n = 0.05\n",
    )
}

fn reservoir_and_mpc_toml() -> &'static str {
    r#"
[reservoir]
stage_area = [[0.0, 50.0], [0.9, 2600.0], [1.9, 62500.0], [4.4, 67700.0], [6.9, 72900.0]]
porosity = 1.0
k_o = 5.4039
alpha_v = 0.5
h0_orifice_m = 0.0
d_h_m = 1.0
k_s = 27.0
alpha_s = 1.5
crest_depth_m = 4.4
h_max_m = 6.9
initial_depth_m = 0.0
dt_s = 60.0
rain_on_pond = true

[mpc]
prediction_horizon_steps = 12
control_horizon_steps = 2
control_interval_s = 3600.0
rho_u = 1.0
rho_r = 100.0
h_ref_m = 4.4
q_max_minor_m3s = 2.0
q_max_major_m3s = 40.0
alpha_p = 0.5
detention_time_h = 18.0
q_release_m3s = 2.0
wet_weather_threshold_m3s = 2.0
n_starts = 5
max_evals_per_start = 120
"#
}

/// Write the full demo input set under `dir`; returns the config file path.
pub fn write_demo_scenario(dir: impl AsRef<Path>, kind: DemoKind, seed: u64) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match kind {
        DemoKind::TwoStorms => write_two_storm_demo(dir, seed),
        DemoKind::GaugeDays(days) => write_gauge_demo(dir, days, seed),
    }
}

fn write_two_storm_demo(dir: &Path, seed: u64) -> Result<PathBuf> {
    let (ncols, nrows, cellsize) = (100, 100, 25.0);
    valley_dem(ncols, nrows, cellsize, 0.08, 0.12).write_ascii(dir.join("dem.asc"))?;
    lulc_raster(ncols, nrows, cellsize, 30).write_ascii(dir.join("lulc.asc"))?;
    lulc_raster(ncols, nrows, cellsize, 30).write_ascii(dir.join("soil.asc"))?;
    write_tables(dir)?;

    let mut config = format!(
        r#"[scenario]
name = "two-storms"
start = "2024-03-01T00:00:00Z"
duration_h = 44.0
output_dir = "out"
random_seed = {seed}
strategies = ["mpc", "static:100", "static:75", "static:50", "static:25"]

[watershed]
dem = "dem.asc"
soil_classes = "soil.asc"
soil_table = "soils.toml"
lulc = "lulc.asc"
lulc_table = "lulc.toml"
outlet_row = {outlet_row}
outlet_col = {outlet_col}
min_slope = 0.001
cfl = 0.5
dt_min_s = 0.05
dt_max_s = 60.0

[forcing]
pet_rate_mm_day = 3.0

[[forcing.design_storm]]
start_offset_h = 2.0
total_depth_mm = 77.0
duration_h = 2.0
block_dt_min = 10.0
shape = {{ idf = {{ k = 1200.0, a = 0.15, b = 12.0, c = 0.8, return_period_yr = 10.0 }} }}

[[forcing.design_storm]]
start_offset_h = 8.0
total_depth_mm = 77.0
duration_h = 2.0
block_dt_min = 10.0
shape = {{ idf = {{ k = 1200.0, a = 0.15, b = 12.0, c = 0.8, return_period_yr = 10.0 }} }}
"#,
        seed = seed,
        outlet_row = nrows - 1,
        outlet_col = ncols / 2,
    );
    config.push_str(reservoir_and_mpc_toml());
    let path = dir.join("config.toml");
    write(&path, &config)?;
    Ok(path)
}

fn write_gauge_demo(dir: &Path, days: u32, seed: u64) -> Result<PathBuf> {
    let (ncols, nrows, cellsize) = (100, 100, 30.0);
    valley_dem(ncols, nrows, cellsize, 0.08, 0.12).write_ascii(dir.join("dem.asc"))?;
    lulc_raster(ncols, nrows, cellsize, 25).write_ascii(dir.join("lulc.asc"))?;
    lulc_raster(ncols, nrows, cellsize, 25).write_ascii(dir.join("soil.asc"))?;
    write_tables(dir)?;

    // Three gauges spread over the domain, 10-minute cadence, covering the
    // whole span plus a margin. Storm timing is seeded and deterministic.
    let mut rng = seed ^ 0xA5A5_5A5A;
    let n_intervals = (days as usize + 1) * 144;
    let mut storms: Vec<(usize, usize, f64)> = Vec::new();
    let n_storms = 4 + (splitmix(&mut rng) % 4) as usize;
    for _ in 0..n_storms {
        let start = (uniform(&mut rng) * (days as f64 - 1.0) * 144.0) as usize;
        let blocks = 6 + (splitmix(&mut rng) % 18) as usize; // 1 h .. 4 h
        let peak_mmh = 10.0 + uniform(&mut rng) * 60.0;
        storms.push((start, blocks, peak_mmh));
    }
    storms.sort_unstable_by_key(|s| s.0);

    let stations = [
        ("g1", 500.0, 2800.0, 0.9),
        ("g2", 1500.0, 1500.0, 1.0),
        ("g3", 2500.0, 300.0, 1.1),
    ];
    for (id, _x, _y, factor) in stations {
        let mut values = vec![0.0f64; n_intervals];
        for &(start, blocks, peak) in &storms {
            for b in 0..blocks {
                // Triangular pulse in time.
                let w = 1.0 - ((b as f64 / blocks as f64) * 2.0 - 1.0).abs();
                if start + b < n_intervals {
                    values[start + b] += peak * w * factor;
                }
            }
        }
        let mut csv = String::from("timestamp,value\n");
        for (i, v) in values.iter().enumerate() {
            let minutes = i as i64 * 10;
            let t = "2024-03-01T00:00:00Z"
                .parse::<chrono::DateTime<chrono::Utc>>()
                .unwrap()
                + chrono::Duration::minutes(minutes);
            let _ = writeln!(
                csv,
                "{},{}",
                t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                v
            );
        }
        write(&dir.join(format!("gauge_{id}.csv")), &csv)?;
    }
    let mut manifest = String::new();
    for (id, x, y, _) in stations {
        let _ = writeln!(
            manifest,
            "[[station]]\nid = \"{id}\"\nx = {x:?}\ny = {y:?}\nfile = \"gauge_{id}.csv\"\n"
        );
    }
    write(&dir.join("gauges.toml"), &manifest)?;

    // One climate station with a gentle seasonal cycle.
    let mut climate = String::from("date,tmean_c,rh_pct,wind_ms,rn_mj_m2\n");
    for d in 0..=(days as i64 + 1) {
        let date = chrono::NaiveDate::from_ymd_opt(2024, 3, 1).unwrap() + chrono::Duration::days(d);
        let phase = d as f64 / 30.0;
        let _ = writeln!(
            climate,
            "{},{},{},{},{}",
            date,
            20.0 + 4.0 * (phase * std::f64::consts::TAU).sin(),
            60.0,
            2.0,
            14.0 + 3.0 * (phase * std::f64::consts::TAU).cos()
        );
    }
    write(&dir.join("climate_met1.csv"), &climate)?;
    write(
        &dir.join("climate.toml"),
        "[[station]]\nid = \"met1\"\nx = 1500.0\ny = 1500.0\nfile = \"climate_met1.csv\"\n",
    )?;

    let mut config = format!(
        r#"[scenario]
name = "gauge-continuous"
start = "2024-03-01T00:00:00Z"
duration_h = {duration_h}
output_dir = "out"
random_seed = {seed}
strategies = ["mpc", "static:100", "static:75", "static:50", "static:25"]

[watershed]
dem = "dem.asc"
soil_classes = "soil.asc"
soil_table = "soils.toml"
lulc = "lulc.asc"
lulc_table = "lulc.toml"
outlet_row = {outlet_row}
outlet_col = {outlet_col}
min_slope = 0.001
cfl = 0.5
dt_min_s = 0.05
dt_max_s = 60.0

[forcing]
idw_exponent = 2.0
rain_gauges = "gauges.toml"
climate_stations = "climate.toml"
"#,
        duration_h = days as f64 * 24.0,
        seed = seed,
        outlet_row = nrows - 1,
        outlet_col = ncols / 2,
    );
    config.push_str(reservoir_and_mpc_toml());
    let path = dir.join("config.toml");
    write(&path, &config)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::load_scenario;

    #[test]
    fn two_storm_demo_loads_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_demo_scenario(dir.path(), DemoKind::TwoStorms, 7).unwrap();
        let sc = load_scenario(&config).unwrap();
        assert_eq!(sc.strategies.len(), 5);
        assert_eq!(sc.design_storms.len(), 2);
        assert!((sc.duration_s - 44.0 * 3600.0).abs() < 1e-9);
        assert_eq!(sc.mpc.prediction_horizon, 12);
    }

    #[test]
    fn gauge_demo_loads_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_demo_scenario(dir.path(), DemoKind::GaugeDays(3), 11).unwrap();
        let sc = load_scenario(&config).unwrap();
        assert_eq!(sc.gauges.len(), 3);
        assert_eq!(sc.climate.len(), 1);
        assert!(sc.design_storms.is_empty());
    }

    #[test]
    fn gauge_demo_is_deterministic_per_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_demo_scenario(a.path(), DemoKind::GaugeDays(2), 5).unwrap();
        write_demo_scenario(b.path(), DemoKind::GaugeDays(2), 5).unwrap();
        let ga = std::fs::read_to_string(a.path().join("gauge_g2.csv")).unwrap();
        let gb = std::fs::read_to_string(b.path().join("gauge_g2.csv")).unwrap();
        assert_eq!(ga, gb);
    }
}
