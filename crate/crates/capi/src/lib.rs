//! C ABI for the stormflow simulator.
//!
//! Handles are opaque; every fallible call returns an [`sf_status`] and
//! leaves a thread-local message readable through
//! [`sf_last_error_message`]. Strings are UTF-8, NUL-terminated, and owned
//! by the library unless stated otherwise.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use stormflow::mpc::ReservoirState;
use stormflow::reservoir::{linearize, outflow, step_reservoir, OutletDevices, StageCurve};
use stormflow::scenario;
use stormflow::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum sf_status {
    SF_OK = 0,
    SF_ERR_NULL_ARGUMENT = 1,
    SF_ERR_UTF8 = 2,
    SF_ERR_INVALID_INPUT = 3,
    SF_ERR_IO = 4,
    SF_ERR_CONFIG = 5,
    SF_ERR_OUT_OF_RANGE = 6,
    SF_ERR_INTERNAL = 7,
    SF_ERR_PANIC = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> sf_status {
    match err {
        Error::InvalidInput(_) | Error::NeedsConditioning(_) | Error::Parse { .. } => {
            sf_status::SF_ERR_INVALID_INPUT
        }
        Error::Io { .. } => sf_status::SF_ERR_IO,
        Error::Config(_) => sf_status::SF_ERR_CONFIG,
        Error::OutOfRange(_) => sf_status::SF_ERR_OUT_OF_RANGE,
        Error::Internal(_) => sf_status::SF_ERR_INTERNAL,
    }
}

fn fail(err: Error) -> sf_status {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

fn guard<F: FnOnce() -> sf_status>(body: F) -> sf_status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic inside stormflow".to_string());
            sf_status::SF_ERR_PANIC
        }
    }
}

/// Message describing the most recent failure on this thread, or null.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Scenario pipeline.

/// Opaque handle to a loaded scenario.
pub struct sf_scenario {
    inner: scenario::Scenario,
}

/// One strategy's indicators, filled by [`sf_scenario_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct sf_indicator_row {
    /// Strategy label, NUL-terminated, truncated to fit.
    pub strategy: [c_char; 32],
    pub peak_inflow_m3s: f64,
    pub peak_outflow_m3s: f64,
    pub peak_reduction_pct: f64,
    pub treated_volume_m3: f64,
    /// Negative when no eligible volume was released.
    pub avg_detention_time_s: f64,
    pub max_stage_m: f64,
    /// 1 when the pond overtopped at any instant.
    pub overtopped: u8,
}

unsafe fn cstr_arg(ptr: *const c_char) -> Result<&'static str, sf_status> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(sf_status::SF_ERR_NULL_ARGUMENT);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        sf_status::SF_ERR_UTF8
    })
}

/// Load and validate a scenario config; on success `*out` owns the handle.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_load(
    path: *const c_char,
    out: *mut *mut sf_scenario,
) -> sf_status {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        }
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => PathBuf::from(p),
            Err(code) => return code,
        };
        match scenario::load_scenario(&path) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(sf_scenario { inner })) };
                sf_status::SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Run the full pipeline. When `rows` is non-null, up to `capacity`
/// indicator rows are written and `*n_written` reports how many strategies
/// were produced (which may exceed `capacity`).
///
/// # Safety
/// `handle` must come from [`sf_scenario_load`]; `rows`, when non-null, must
/// point to at least `capacity` rows; `n_written`, when non-null, to one
/// `uintptr_t`.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_run(
    handle: *mut sf_scenario,
    rows: *mut sf_indicator_row,
    capacity: usize,
    n_written: *mut usize,
) -> sf_status {
    guard(|| {
        let Some(scenario) = (unsafe { handle.as_ref() }) else {
            set_error("null scenario handle".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        };
        match scenario::run_scenario(&scenario.inner) {
            Ok(outcome) => {
                if !n_written.is_null() {
                    unsafe { *n_written = outcome.reports.len() };
                }
                if !rows.is_null() {
                    for (i, report) in outcome.reports.iter().take(capacity).enumerate() {
                        unsafe { rows.add(i).write(row_from_report(report)) };
                    }
                }
                sf_status::SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

fn row_from_report(r: &scenario::IndicatorReport) -> sf_indicator_row {
    let mut strategy = [0 as c_char; 32];
    for (dst, src) in strategy.iter_mut().zip(r.strategy.bytes().take(31)) {
        *dst = src as c_char;
    }
    sf_indicator_row {
        strategy,
        peak_inflow_m3s: r.peak_inflow_m3s,
        peak_outflow_m3s: r.peak_outflow_m3s,
        peak_reduction_pct: r.peak_reduction_pct,
        treated_volume_m3: r.treated_volume_m3,
        avg_detention_time_s: r.avg_detention_time_s.unwrap_or(-1.0),
        max_stage_m: r.max_stage_m,
        overtopped: u8::from(r.overtopped),
    }
}

/// Release a scenario handle. Null is allowed.
///
/// # Safety
/// `handle` must be null or a pointer from [`sf_scenario_load`], not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_free(handle: *mut sf_scenario) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

// ---------------------------------------------------------------------------
// Detention-pond primitives.

/// Outlet-device rating parameters (see the library docs for the laws).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct sf_outlet_devices {
    pub k_o: f64,
    pub alpha_v: f64,
    pub h0_orifice_m: f64,
    pub d_h_m: f64,
    pub k_s: f64,
    pub alpha_s: f64,
    pub crest_depth_m: f64,
    pub h_max_m: f64,
}

/// State-space matrices of the pond linearized at an operating point.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct sf_linearized_plant {
    pub a: f64,
    pub b_v: f64,
    pub b_s: f64,
    pub c: f64,
    pub d_v: f64,
    pub d_s: f64,
    pub phi: f64,
    pub epsilon: f64,
    pub inflow_gain: f64,
}

/// Opaque handle to a pond (stage curve plus outlet devices).
pub struct sf_reservoir {
    curve: StageCurve,
    devices: OutletDevices,
}

impl sf_outlet_devices {
    fn to_devices(self) -> OutletDevices {
        OutletDevices {
            k_o: self.k_o,
            alpha_v: self.alpha_v,
            h0_orifice: self.h0_orifice_m,
            d_h: self.d_h_m,
            k_s: self.k_s,
            alpha_s: self.alpha_s,
            p: self.crest_depth_m,
            h_max: self.h_max_m,
        }
    }
}

/// Build a pond from `n_breakpoints` (depth_m, area_m2) pairs laid out as
/// `depth0, area0, depth1, area1, ...`.
///
/// # Safety
/// `stage_pairs` must point to `2 * n_breakpoints` doubles; `out` to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_reservoir_new(
    stage_pairs: *const f64,
    n_breakpoints: usize,
    porosity: f64,
    devices: sf_outlet_devices,
    out: *mut *mut sf_reservoir,
) -> sf_status {
    guard(|| {
        if stage_pairs.is_null() || out.is_null() {
            set_error("null argument".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        }
        let raw = unsafe { std::slice::from_raw_parts(stage_pairs, 2 * n_breakpoints) };
        let breakpoints: Vec<(f64, f64)> = raw.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let devices = devices.to_devices();
        if let Err(e) = devices.validate() {
            return fail(e);
        }
        match StageCurve::new(breakpoints, porosity) {
            Ok(curve) => {
                unsafe { *out = Box::into_raw(Box::new(sf_reservoir { curve, devices })) };
                sf_status::SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Controlled outflow (m^3/s) at depth `h_m` and openness `(u_v, u_s)`.
///
/// # Safety
/// `handle` must come from [`sf_reservoir_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_reservoir_outflow(
    handle: *const sf_reservoir,
    h_m: f64,
    u_v: f64,
    u_s: f64,
    out: *mut f64,
) -> sf_status {
    guard(|| {
        let Some(pond) = (unsafe { handle.as_ref() }) else {
            set_error("null reservoir handle".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        };
        if out.is_null() {
            set_error("null output pointer".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        }
        unsafe { *out = outflow(h_m, u_v, u_s, &pond.devices) };
        sf_status::SF_OK
    })
}

/// Advance the pond one step of `dt_s` seconds under constant inflow.
/// Writes the new depth and the mean total outflow over the step.
///
/// # Safety
/// `handle` must come from [`sf_reservoir_new`]; output pointers, when
/// non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_reservoir_step(
    handle: *const sf_reservoir,
    h_m: f64,
    u_v: f64,
    u_s: f64,
    q_in_m3s: f64,
    dt_s: f64,
    out_h_m: *mut f64,
    out_q_m3s: *mut f64,
) -> sf_status {
    guard(|| {
        let Some(pond) = (unsafe { handle.as_ref() }) else {
            set_error("null reservoir handle".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        };
        let state = ReservoirState {
            h_r: h_m,
            u_v,
            u_s,
            detention_clock: 0.0,
            treated_volume: 0.0,
        };
        match step_reservoir(&state, q_in_m3s, dt_s, &pond.devices, &pond.curve, 0.0, 0.0) {
            Ok((next, outcome)) => {
                if !out_h_m.is_null() {
                    unsafe { *out_h_m = next.h_r };
                }
                if !out_q_m3s.is_null() {
                    unsafe { *out_q_m3s = outcome.q_out_mean };
                }
                sf_status::SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// First-order state-space model of the pond at an operating point.
///
/// # Safety
/// `handle` must come from [`sf_reservoir_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_reservoir_linearize(
    handle: *const sf_reservoir,
    h_m: f64,
    u_v: f64,
    u_s: f64,
    dt_s: f64,
    out: *mut sf_linearized_plant,
) -> sf_status {
    guard(|| {
        let Some(pond) = (unsafe { handle.as_ref() }) else {
            set_error("null reservoir handle".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        };
        if out.is_null() {
            set_error("null output pointer".into());
            return sf_status::SF_ERR_NULL_ARGUMENT;
        }
        match linearize(h_m, u_v, u_s, &pond.devices, &pond.curve, dt_s) {
            Ok(plant) => {
                unsafe {
                    *out = sf_linearized_plant {
                        a: plant.a,
                        b_v: plant.b_v,
                        b_s: plant.b_s,
                        c: plant.c,
                        d_v: plant.d_v,
                        d_s: plant.d_s,
                        phi: plant.phi,
                        epsilon: plant.epsilon,
                        inflow_gain: plant.inflow_gain,
                    };
                }
                sf_status::SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a pond handle. Null is allowed.
///
/// # Safety
/// `handle` must be null or a pointer from [`sf_reservoir_new`], not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn sf_reservoir_free(handle: *mut sf_reservoir) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_devices() -> sf_outlet_devices {
        sf_outlet_devices {
            k_o: 5.4039,
            alpha_v: 0.5,
            h0_orifice_m: 0.0,
            d_h_m: 1.0,
            k_s: 27.0,
            alpha_s: 1.5,
            crest_depth_m: 4.4,
            h_max_m: 6.9,
        }
    }

    fn demo_pond() -> *mut sf_reservoir {
        let pairs = [
            0.0, 50.0, 0.9, 2600.0, 1.9, 62_500.0, 4.4, 67_700.0, 6.9, 72_900.0,
        ];
        let mut handle = std::ptr::null_mut();
        let status =
            unsafe { sf_reservoir_new(pairs.as_ptr(), 5, 1.0, demo_devices(), &mut handle) };
        assert_eq!(status, sf_status::SF_OK);
        handle
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(sf_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }

    #[test]
    fn reservoir_round_trip_through_the_abi() {
        let pond = demo_pond();
        let mut q = 0.0;
        let status = unsafe { sf_reservoir_outflow(pond, 1.2, 1.0, 0.0, &mut q) };
        assert_eq!(status, sf_status::SF_OK);
        assert!((q - 5.4039).abs() < 1e-12);

        let mut h = 0.0;
        let mut q_mean = 0.0;
        let status =
            unsafe { sf_reservoir_step(pond, 2.0, 0.0, 0.0, 10.0, 60.0, &mut h, &mut q_mean) };
        assert_eq!(status, sf_status::SF_OK);
        assert!(h > 2.0);
        assert_eq!(q_mean, 0.0);

        let mut plant = sf_linearized_plant {
            a: 0.0,
            b_v: 0.0,
            b_s: 0.0,
            c: 0.0,
            d_v: 0.0,
            d_s: 0.0,
            phi: 0.0,
            epsilon: 0.0,
            inflow_gain: 0.0,
        };
        let status = unsafe { sf_reservoir_linearize(pond, 1.2, 1.0, 0.0, 60.0, &mut plant) };
        assert_eq!(status, sf_status::SF_OK);
        // Exactness at the operating point.
        let reproduced = plant.c * 1.2 + plant.d_v * 1.0 + plant.epsilon;
        assert!((reproduced - 5.4039).abs() < 1e-9);

        unsafe { sf_reservoir_free(pond) };
    }

    #[test]
    fn null_and_error_paths_set_messages() {
        let mut q = 0.0;
        let status = unsafe { sf_reservoir_outflow(std::ptr::null(), 1.0, 1.0, 1.0, &mut q) };
        assert_eq!(status, sf_status::SF_ERR_NULL_ARGUMENT);
        let message = unsafe { CStr::from_ptr(sf_last_error_message()) };
        assert!(message.to_str().unwrap().contains("null"));

        // Invalid curve: depths not increasing.
        let pairs = [0.0, 50.0, 0.0, 60.0];
        let mut handle = std::ptr::null_mut();
        let status =
            unsafe { sf_reservoir_new(pairs.as_ptr(), 2, 1.0, demo_devices(), &mut handle) };
        assert_eq!(status, sf_status::SF_ERR_INVALID_INPUT);

        let mut out = std::ptr::null_mut();
        let path = CString::new("/definitely/not/a/config.toml").unwrap();
        let status = unsafe { sf_scenario_load(path.as_ptr(), &mut out) };
        assert!(matches!(
            status,
            sf_status::SF_ERR_IO | sf_status::SF_ERR_CONFIG
        ));
    }

    #[test]
    fn scenario_pipeline_through_the_abi() {
        let dir = tempfile::tempdir().unwrap();
        let config = stormflow::scenario::write_demo_scenario(
            dir.path(),
            stormflow::scenario::DemoKind::GaugeDays(1),
            3,
        )
        .unwrap();
        let c_path = CString::new(config.to_str().unwrap()).unwrap();
        let mut handle = std::ptr::null_mut();
        let status = unsafe { sf_scenario_load(c_path.as_ptr(), &mut handle) };
        assert_eq!(status, sf_status::SF_OK);

        let mut rows = [row_from_report(&stormflow::scenario::IndicatorReport {
            strategy: String::new(),
            peak_inflow_m3s: 0.0,
            peak_outflow_m3s: 0.0,
            peak_reduction_pct: 0.0,
            treated_volume_m3: 0.0,
            avg_detention_time_s: None,
            max_stage_m: 0.0,
            overtopped: false,
            total_outflow_m3: 0.0,
            flow_duration: vec![],
            stage_duration: vec![],
        }); 8];
        let mut n = 0usize;
        let status = unsafe { sf_scenario_run(handle, rows.as_mut_ptr(), rows.len(), &mut n) };
        assert_eq!(status, sf_status::SF_OK);
        assert_eq!(n, 5, "five strategies in the demo config");
        let first = unsafe { CStr::from_ptr(rows[0].strategy.as_ptr()) };
        assert_eq!(first.to_str().unwrap(), "mpc");
        assert!(rows[0].peak_inflow_m3s >= 0.0);

        unsafe { sf_scenario_free(handle) };
    }
}
