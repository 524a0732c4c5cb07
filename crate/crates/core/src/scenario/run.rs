//! Scenario orchestration: watershed once, then the reservoir and controller
//! per strategy from the shared hydrograph, with every trace written to the
//! output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::forcing::{ForcingProvider, StormEvent};
use crate::hydrology::WatershedState;
use crate::mpc::{run_receding_horizon, ControlMode, ControlRun, ReservoirPlant, Strategy};
use crate::reservoir::OutletDevices;
use crate::reservoir::ReservoirState;
use crate::routing::{simulate_watershed, LedgerTotals, WatershedRun, WatershedRunConfig};
use crate::scenario::config::Scenario;
use crate::scenario::indicators::{duration_curve, IndicatorReport};
use crate::series::StepSeries;

/// End-to-end result of a scenario run.
pub struct ScenarioOutcome {
    pub watershed: LedgerTotals,
    pub peak_inflow_m3s: f64,
    pub reports: Vec<IndicatorReport>,
    pub out_dir: PathBuf,
}

fn fmt_time(start: DateTime<Utc>, t_s: f64) -> String {
    let micros = (t_s * 1e6).round() as i64;
    (start + chrono::Duration::microseconds(micros)).to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn parse_time(start: DateTime<Utc>, raw: &str) -> Result<f64> {
    let t = DateTime::parse_from_rfc3339(raw)
        .map_err(|e| Error::InvalidInput(format!("bad timestamp `{raw}`: {e}")))?
        .with_timezone(&Utc);
    Ok((t - start).num_microseconds().unwrap_or(0) as f64 / 1e6)
}

/// Build the forcing provider declared by the scenario.
pub fn build_provider(sc: &Scenario) -> Result<ForcingProvider> {
    let grid = sc.dem.geometry().clone();
    if !sc.gauges.is_empty() {
        ForcingProvider::from_stations(grid, &sc.gauges, &sc.climate, sc.start, sc.idw_exponent)
    } else {
        let mut events = Vec::with_capacity(sc.design_storms.len());
        for (start_s, spec) in &sc.design_storms {
            events.push(StormEvent::from_design_storm(spec, *start_s)?);
        }
        Ok(ForcingProvider::from_storms(grid, events, sc.pet_rate_ms))
    }
}

/// Simulate the watershed over the scenario span and write its outputs.
pub fn run_watershed(sc: &Scenario) -> Result<WatershedRun> {
    let mut provider = build_provider(sc)?;
    let state = WatershedState::dry(sc.dem.geometry().clone());
    let cfg = WatershedRunConfig {
        t_start: 0.0,
        t_end: sc.duration_s,
        snapshot_times: sc.snapshot_times.clone(),
    };
    let run = simulate_watershed(
        state,
        &sc.topology,
        &sc.soil,
        &sc.routing,
        &mut provider,
        &cfg,
    )?;

    fs::create_dir_all(&sc.out_dir).map_err(|e| Error::io(&sc.out_dir, e))?;
    write_hydrograph(
        &sc.out_dir.join("hydrograph.csv"),
        sc.start,
        &run.hydrograph,
    )?;
    for (t, raster) in &run.depth_snapshots {
        let name = format!("depth_{:.0}s.asc", t);
        raster.write_ascii(sc.out_dir.join(name))?;
    }
    write_run_meta(sc)?;
    Ok(run)
}

/// Pond-surface rain and evaporation rates sampled at the outlet cell on the
/// forcing boundaries (piecewise constant, volume exact).
pub fn pond_forcing(
    sc: &Scenario,
    provider: &mut ForcingProvider,
) -> Result<(StepSeries, StepSeries)> {
    let mut rain = StepSeries::new();
    let mut evap = StepSeries::new();
    if !sc.rain_on_pond {
        return Ok((rain, evap));
    }
    let outlet = sc.topology.outlet_cell();
    let mut t = 0.0;
    while t < sc.duration_s - 1e-9 {
        let boundary = provider.next_boundary_after(t).min(sc.duration_s);
        let dt = boundary - t;
        if !(dt > 0.0) {
            break;
        }
        let snapshot = provider.snapshot_at(t)?;
        rain.push(t, dt, snapshot.rain.get(outlet))?;
        evap.push(t, dt, snapshot.pet.get(outlet))?;
        t = boundary;
    }
    Ok((rain, evap))
}

/// Run one strategy against the shared inflow series and write its traces.
pub fn run_strategy(
    sc: &Scenario,
    strategy: Strategy,
    inflow: &StepSeries,
    pond_rain: &StepSeries,
    pond_evap: &StepSeries,
) -> Result<ControlRun> {
    let plant = ReservoirPlant {
        devices: &sc.devices,
        curve: &sc.curve,
        substep: sc.reservoir_dt,
    };
    let initial = ReservoirState::at_depth(sc.initial_depth);
    let run = run_receding_horizon(
        inflow, pond_rain, pond_evap, initial, strategy, &sc.mpc, &plant,
    )?;

    // A reservoir ledger that fails to close is a solver bug, not a result.
    let residual = run.ledger.residual_m3();
    if residual.abs() > 1e-6 * run.ledger.inflow_m3.max(1.0) {
        return Err(Error::Internal(format!(
            "{} reservoir ledger residual {residual} m^3",
            strategy.label()
        )));
    }

    let dir = sc.out_dir.join(strategy.label());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_reservoir_csv(&dir.join("reservoir.csv"), sc.start, &run)?;
    write_controller_csv(&dir.join("controller.csv"), &run)?;
    let flows: Vec<f64> = run.reservoir_rows.iter().map(|r| r.q_out).collect();
    let stages: Vec<f64> = run.reservoir_rows.iter().map(|r| r.h).collect();
    write_duration_csv(
        &dir.join("duration_flow.csv"),
        "discharge_m3s",
        &duration_curve(&flows)?,
    )?;
    write_duration_csv(
        &dir.join("duration_stage.csv"),
        "stage_m",
        &duration_curve(&stages)?,
    )?;
    Ok(run)
}

/// Run the full pipeline: watershed once, every strategy from the shared
/// hydrograph, indicators and report at the end.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioOutcome> {
    let watershed = run_watershed(sc)?;

    // The global water ledger has to close before any strategy runs.
    let closure = watershed.totals.relative_closure();
    if closure > 1e-3 {
        return Err(Error::Internal(format!(
            "watershed mass ledger closes to {closure:.2e} of rainfall, beyond 0.1%"
        )));
    }

    let inflow = watershed
        .hydrograph
        .resample_uniform(0.0, sc.reservoir_dt, sc.duration_s)?;
    let mut provider = build_provider(sc)?;
    let (pond_rain, pond_evap) = pond_forcing(sc, &mut provider)?;
    let peak_inflow = inflow.values().iter().fold(0.0f64, |a, &b| a.max(b));

    // Strategies are independent given the shared hydrograph; run them on
    // worker threads, each writing its own directory.
    let mut runs: Vec<(Strategy, ControlRun)> = Vec::with_capacity(sc.strategies.len());
    let results: Vec<Result<ControlRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sc
            .strategies
            .iter()
            .map(|&strategy| {
                let inflow = &inflow;
                let pond_rain = &pond_rain;
                let pond_evap = &pond_evap;
                scope.spawn(move || run_strategy(sc, strategy, inflow, pond_rain, pond_evap))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("strategy thread panicked"))
            .collect()
    });
    for (strategy, result) in sc.strategies.iter().zip(results) {
        runs.push((*strategy, result?));
    }

    let mut reports = Vec::with_capacity(runs.len());
    for (strategy, run) in &runs {
        reports.push(indicators_from_run(sc, *strategy, run)?);
    }
    write_report_csv(&sc.out_dir.join("report.csv"), &reports)?;

    Ok(ScenarioOutcome {
        watershed: watershed.totals,
        peak_inflow_m3s: peak_inflow,
        reports,
        out_dir: sc.out_dir.clone(),
    })
}

/// Interval eligibility from the written controller trace: an interval is
/// eligible exactly when the detention clock advanced across it; the final
/// interval carries its predecessor's state while the mode stays QUALITY.
fn eligibility_from_clock(modes: &[ControlMode], clocks: &[f64]) -> Vec<bool> {
    let n = clocks.len();
    let mut eligible = vec![false; n];
    for k in 0..n {
        if k + 1 < n {
            eligible[k] = clocks[k + 1] > clocks[k];
        } else if k > 0 {
            eligible[k] = eligible[k - 1] && modes[k] == ControlMode::Quality;
        }
    }
    eligible
}

/// Indicator row computed from trace rows, the single code path shared by
/// the in-run report and `report` on an existing output directory.
#[allow(clippy::too_many_arguments)]
fn indicators_from_rows(
    label: String,
    devices: &OutletDevices,
    dt: f64,
    control_interval: f64,
    t0: f64,
    reservoir: &[(f64, f64, f64, f64, f64, f64, bool)],
    controller_modes: &[ControlMode],
    controller_clocks: &[f64],
) -> Result<IndicatorReport> {
    let eligible_interval = eligibility_from_clock(controller_modes, controller_clocks);
    let n = reservoir.len();
    let mut orifice_q = Vec::with_capacity(n);
    let mut detention = Vec::with_capacity(n);
    let mut eligible = Vec::with_capacity(n);
    let mut peak_in = 0.0f64;
    let mut peak_out = 0.0f64;
    let mut max_stage = 0.0f64;
    let mut overtopped = false;
    let mut total_out = 0.0;
    let mut flows = Vec::with_capacity(n);
    let mut stages = Vec::with_capacity(n);

    for &(t, h, u_v, _u_s, q_in, q_out, flag) in reservoir {
        let interval = (((t - t0) / control_interval).floor() as usize)
            .min(eligible_interval.len().saturating_sub(1));
        orifice_q.push(crate::reservoir::orifice_outflow(h, u_v, devices));
        detention.push(controller_clocks.get(interval).copied().unwrap_or(0.0));
        eligible.push(eligible_interval.get(interval).copied().unwrap_or(false));
        peak_in = peak_in.max(q_in);
        peak_out = peak_out.max(q_out);
        max_stage = max_stage.max(h);
        overtopped |= flag;
        total_out += q_out * dt;
        flows.push(q_out);
        stages.push(h);
    }

    let treated = crate::scenario::indicators::treated_volume(&orifice_q, &eligible, dt)?;
    let avg_detention =
        crate::scenario::indicators::average_detention_time(&orifice_q, &detention, &eligible, dt)?;
    Ok(IndicatorReport {
        strategy: label,
        peak_inflow_m3s: peak_in,
        peak_outflow_m3s: peak_out,
        peak_reduction_pct: IndicatorReport::reduction_pct(peak_in, peak_out),
        treated_volume_m3: treated,
        avg_detention_time_s: avg_detention,
        max_stage_m: max_stage,
        overtopped,
        total_outflow_m3: total_out,
        flow_duration: duration_curve(&flows)?,
        stage_duration: duration_curve(&stages)?,
    })
}

fn indicators_from_run(
    sc: &Scenario,
    strategy: Strategy,
    run: &ControlRun,
) -> Result<IndicatorReport> {
    let rows: Vec<(f64, f64, f64, f64, f64, f64, bool)> = run
        .reservoir_rows
        .iter()
        .map(|r| (r.t, r.h, r.u_v, r.u_s, r.q_in, r.q_out, r.overtopped))
        .collect();
    let modes: Vec<ControlMode> = run.controller_rows.iter().map(|r| r.mode).collect();
    let clocks: Vec<f64> = run
        .controller_rows
        .iter()
        .map(|r| r.detention_clock_s)
        .collect();
    indicators_from_rows(
        strategy.label(),
        &sc.devices,
        sc.reservoir_dt,
        sc.mpc.control_interval,
        0.0,
        &rows,
        &modes,
        &clocks,
    )
}

// ---------------------------------------------------------------------------
// Trace files.

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_hydrograph(path: &Path, start: DateTime<Utc>, series: &StepSeries) -> Result<()> {
    let mut out = String::from("timestamp,discharge_m3s\n");
    for (t, v) in series.times().iter().zip(series.values()) {
        let _ = writeln!(out, "{},{}", fmt_time(start, *t), v);
    }
    write_text(path, &out)
}

fn write_reservoir_csv(path: &Path, start: DateTime<Utc>, run: &ControlRun) -> Result<()> {
    let mut out = String::from("timestamp,h_m,u_v,u_s,q_in_m3s,q_out_m3s,overtopping_flag\n");
    for r in &run.reservoir_rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_time(start, r.t),
            r.h,
            r.u_v,
            r.u_s,
            r.q_in,
            r.q_out,
            u8::from(r.overtopped)
        );
    }
    write_text(path, &out)
}

fn write_controller_csv(path: &Path, run: &ControlRun) -> Result<()> {
    let mut out = String::from(
        "horizon_index,mode,cost,evals,u_v_applied,u_s_applied,q_ref,rho_q,rho_star,detention_clock_s\n",
    );
    for r in &run.controller_rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.horizon_index,
            r.mode,
            r.cost,
            r.evals,
            r.u_v_applied,
            r.u_s_applied,
            r.q_ref,
            r.rho_q,
            r.rho_star,
            r.detention_clock_s
        );
    }
    write_text(path, &out)
}

fn write_duration_csv(path: &Path, value_name: &str, curve: &[(f64, f64)]) -> Result<()> {
    let mut out = format!("exceedance_probability,{value_name}\n");
    for (p, v) in curve {
        let _ = writeln!(out, "{p},{v}");
    }
    write_text(path, &out)
}

fn write_report_csv(path: &Path, reports: &[IndicatorReport]) -> Result<()> {
    let mut out = String::from(
        "strategy,peak_inflow_m3s,peak_outflow_m3s,peak_reduction_pct,treated_volume_m3,\
         avg_detention_time_s,max_stage_m,overtopped,total_outflow_m3\n",
    );
    for r in reports {
        let detention = r
            .avg_detention_time_s
            .map(|v| v.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.peak_inflow_m3s,
            r.peak_outflow_m3s,
            r.peak_reduction_pct,
            r.treated_volume_m3,
            detention,
            r.max_stage_m,
            u8::from(r.overtopped),
            r.total_outflow_m3
        );
    }
    write_text(path, &out)
}

/// Everything `report` needs to recompute indicators from a directory.
fn write_run_meta(sc: &Scenario) -> Result<()> {
    let mut out = String::from("[meta]\n");
    let _ = writeln!(
        out,
        "start = \"{}\"",
        sc.start.to_rfc3339_opts(SecondsFormat::Secs, true)
    );
    let _ = writeln!(out, "duration_s = {:?}", sc.duration_s);
    let _ = writeln!(out, "reservoir_dt_s = {:?}", sc.reservoir_dt);
    let _ = writeln!(out, "control_interval_s = {:?}", sc.mpc.control_interval);
    let _ = writeln!(out, "k_o = {:?}", sc.devices.k_o);
    let _ = writeln!(out, "alpha_v = {:?}", sc.devices.alpha_v);
    let _ = writeln!(out, "h0_orifice_m = {:?}", sc.devices.h0_orifice);
    let _ = writeln!(out, "d_h_m = {:?}", sc.devices.d_h);
    let _ = writeln!(out, "k_s = {:?}", sc.devices.k_s);
    let _ = writeln!(out, "alpha_s = {:?}", sc.devices.alpha_s);
    let _ = writeln!(out, "crest_depth_m = {:?}", sc.devices.p);
    let _ = writeln!(out, "h_max_m = {:?}", sc.devices.h_max);
    let strategies: Vec<String> = sc
        .strategies
        .iter()
        .map(|s| format!("\"{}\"", s.label()))
        .collect();
    let _ = writeln!(out, "strategies = [{}]", strategies.join(", "));
    write_text(&sc.out_dir.join("run_meta.toml"), &out)
}

// ---------------------------------------------------------------------------
// Recomputing indicators from an existing output directory.

#[derive(Debug, serde::Deserialize)]
struct RunMetaFile {
    meta: RunMeta,
}

#[derive(Debug, serde::Deserialize)]
struct RunMeta {
    start: String,
    reservoir_dt_s: f64,
    control_interval_s: f64,
    k_o: f64,
    alpha_v: f64,
    h0_orifice_m: f64,
    d_h_m: f64,
    k_s: f64,
    alpha_s: f64,
    crest_depth_m: f64,
    h_max_m: f64,
    strategies: Vec<String>,
}

/// Read a previously emitted hydrograph back as a step series.
pub fn read_hydrograph(path: &Path, start: DateTime<Utc>, t_end: f64) -> Result<StepSeries> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        times.push(parse_time(start, record[0].trim())?);
        values.push(
            record[1]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, "bad discharge value"))?,
        );
    }
    let mut series = StepSeries::new();
    for i in 0..times.len() {
        let end = if i + 1 < times.len() {
            times[i + 1]
        } else {
            t_end.max(times[i] + 1e-6)
        };
        series.push(times[i], end - times[i], values[i])?;
    }
    Ok(series)
}

/// Recompute every strategy's indicators from the traces in `dir` and
/// rewrite `report.csv` there.
pub fn report_from_dir(dir: &Path) -> Result<Vec<IndicatorReport>> {
    let meta_path = dir.join("run_meta.toml");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: RunMetaFile =
        toml::from_str(&text).map_err(|e| Error::parse(&meta_path, e.to_string()))?;
    let meta = meta.meta;
    let start = meta
        .start
        .parse::<DateTime<Utc>>()
        .map_err(|e| Error::parse(&meta_path, format!("bad start: {e}")))?;
    let devices = OutletDevices {
        k_o: meta.k_o,
        alpha_v: meta.alpha_v,
        h0_orifice: meta.h0_orifice_m,
        d_h: meta.d_h_m,
        k_s: meta.k_s,
        alpha_s: meta.alpha_s,
        p: meta.crest_depth_m,
        h_max: meta.h_max_m,
    };
    let mut reports = Vec::new();
    for label in &meta.strategies {
        let sdir = dir.join(label);
        let reservoir = read_reservoir_csv(&sdir.join("reservoir.csv"), start)?;
        let (modes, clocks) = read_controller_csv(&sdir.join("controller.csv"))?;
        reports.push(indicators_from_rows(
            label.clone(),
            &devices,
            meta.reservoir_dt_s,
            meta.control_interval_s,
            0.0,
            &reservoir,
            &modes,
            &clocks,
        )?);
    }
    write_report_csv(&dir.join("report.csv"), &reports)?;
    Ok(reports)
}

type ReservoirRowTuple = (f64, f64, f64, f64, f64, f64, bool);

fn read_reservoir_csv(path: &Path, start: DateTime<Utc>) -> Result<Vec<ReservoirRowTuple>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let field = |i: usize| -> Result<f64> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, format!("bad numeric field {i}")))
        };
        rows.push((
            parse_time(start, record[0].trim())?,
            field(1)?,
            field(2)?,
            field(3)?,
            field(4)?,
            field(5)?,
            record[6].trim() == "1",
        ));
    }
    Ok(rows)
}

fn read_controller_csv(path: &Path) -> Result<(Vec<ControlMode>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut modes = Vec::new();
    let mut clocks = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        modes.push(match record[1].trim() {
            "FLOOD" => ControlMode::Flood,
            "QUALITY" => ControlMode::Quality,
            other => return Err(Error::parse(path, format!("unknown mode `{other}`"))),
        });
        clocks.push(
            record[9]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, "bad detention clock"))?,
        );
    }
    Ok((modes, clocks))
}
