//! Per-cell vertical fluxes: sharp-wetting-front infiltration, groundwater
//! replenishment, evapotranspiration capping, and the explicit mass-balance
//! update of one cell over one time step.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::RasterField;

/// Floor on cumulative infiltrated depth in the infiltration-capacity law.
/// Avoids the 1/f_d singularity at the first wetting step; the induced error
/// vanishes after one step.
pub const FD_FLOOR_M: f64 = 1e-4;

/// Soil hydraulic parameters of one soil class.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SoilParams {
    /// Suction head at the wetting front (m).
    pub psi_m: f64,
    /// Saturated hydraulic conductivity (m/s). Zero models an impervious
    /// surface.
    pub ksat_ms: f64,
    /// Soil moisture deficit (-).
    pub dtheta: f64,
    /// Initial-abstraction depth (m): surface storage below which nothing
    /// routes downslope (it still evaporates and infiltrates).
    pub h0_m: f64,
    /// Groundwater replenishing rate draining the infiltrated store (m/s).
    pub recharge_ms: f64,
}

impl SoilParams {
    pub fn impervious() -> Self {
        SoilParams {
            psi_m: 0.0,
            ksat_ms: 0.0,
            dtheta: 0.0,
            h0_m: 0.0,
            recharge_ms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi_m >= 0.0)
            || !(self.ksat_ms >= 0.0)
            || !(0.0..=1.0).contains(&self.dtheta)
            || !(self.h0_m >= 0.0)
            || !(self.recharge_ms >= 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "soil parameters out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-cell soil parameters resolved from a class raster and a class table.
#[derive(Debug, Clone)]
pub struct SoilMap {
    classes: Vec<SoilParams>,
    class_of_cell: Vec<u16>,
}

impl SoilMap {
    /// The same soil everywhere.
    pub fn uniform(params: SoilParams, n_cells: usize) -> SoilMap {
        SoilMap {
            classes: vec![params],
            class_of_cell: vec![0; n_cells],
        }
    }

    /// Resolve an integer class raster against a `class id -> params` table.
    /// Nodata cells fall back to class 0 but are never routed.
    pub fn from_class_raster(
        raster: &RasterField,
        table: &BTreeMap<u32, SoilParams>,
    ) -> Result<SoilMap> {
        let mut ids: Vec<u32> = table.keys().copied().collect();
        ids.sort_unstable();
        let mut classes = Vec::with_capacity(ids.len());
        let mut slot_of_id = BTreeMap::new();
        for (slot, id) in ids.iter().enumerate() {
            let params = table[id];
            params.validate()?;
            classes.push(params);
            slot_of_id.insert(*id, slot as u16);
        }
        let mut class_of_cell = vec![0u16; raster.geometry().n_cells()];
        for (i, slot) in class_of_cell.iter_mut().enumerate() {
            if raster.is_nodata(i) {
                continue;
            }
            let raw = raster.get(i);
            let id = raw as u32;
            if raw.fract() != 0.0 || raw < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "cell {i}: non-integer soil class {raw}"
                )));
            }
            *slot = *slot_of_id.get(&id).ok_or_else(|| {
                Error::InvalidInput(format!("cell {i}: soil class {id} not in table"))
            })?;
        }
        Ok(SoilMap {
            classes,
            class_of_cell,
        })
    }

    #[inline]
    pub fn params(&self, cell: usize) -> &SoilParams {
        &self.classes[self.class_of_cell[cell] as usize]
    }
}

/// Read a soil class table: TOML with `[[class]] id = .., psi_m = .., ...`.
pub fn read_soil_table(path: impl AsRef<Path>) -> Result<BTreeMap<u32, SoilParams>> {
    #[derive(Deserialize)]
    struct Row {
        id: u32,
        #[serde(flatten)]
        params: SoilParams,
    }
    #[derive(Deserialize)]
    struct Table {
        class: Vec<Row>,
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: Table = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(table.class.into_iter().map(|r| (r.id, r.params)).collect())
}

/// Distributed hydrologic state at one instant.
#[derive(Debug, Clone)]
pub struct WatershedState {
    /// Effective surface water depth (m), never negative.
    pub h_ef: RasterField,
    /// Cumulative infiltrated depth (m), never negative.
    pub f_d: RasterField,
    /// Seconds on the scenario clock.
    pub t: f64,
}

impl WatershedState {
    pub fn dry(geometry: crate::grid::GridGeometry) -> WatershedState {
        WatershedState {
            h_ef: RasterField::new_filled(geometry.clone(), 0.0),
            f_d: RasterField::new_filled(geometry, 0.0),
            t: 0.0,
        }
    }
}

/// Infiltration rate (m/s) under the sharp-wetting-front capacity law,
/// capped by the instantaneous supply `available` (rainfall rate plus ponded
/// depth over the step).
#[inline]
pub fn green_ampt_rate(f_d: f64, soil: &SoilParams, available: f64) -> f64 {
    let capacity = soil.ksat_ms * (1.0 + soil.psi_m * soil.dtheta / f_d.max(FD_FLOOR_M));
    capacity.min(available).max(0.0)
}

/// Drain the infiltrated store toward groundwater, clamped at zero.
#[inline]
pub fn recharge_step(f_d: f64, soil: &SoilParams, dt: f64) -> f64 {
    (f_d - soil.recharge_ms * dt).max(0.0)
}

/// Actual evapotranspiration rate (m/s): the potential rate capped so it
/// cannot remove more water than the cell holds.
#[inline]
pub fn actual_et(h_ef: f64, potential: f64, dt: f64) -> f64 {
    potential.min(h_ef / dt).max(0.0)
}

/// Rates (m/s) feeding one cell over one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellForcing {
    pub rain: f64,
    pub pet: f64,
}

/// Depths (m) actually exchanged by one cell over one step, after limiters.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellFluxes {
    pub infiltration_m: f64,
    pub et_m: f64,
    pub recharge_m: f64,
}

/// Advance one cell by `dt`: explicit update of surface depth and the
/// infiltrated store.
///
/// `q_in` and `q_out` are depth rates (m/s) already converted from intercell
/// discharges. If the combined sinks would drive the surface negative, the
/// deficit is re-credited by reducing infiltration first and then ET, which
/// keeps the column mass balance exact; outflow was already capped by the
/// routing kernel, so a residual deficit indicates a bug upstream.
pub fn cell_update(
    h_ef: f64,
    f_d: f64,
    q_in: f64,
    q_out: f64,
    forcing: CellForcing,
    soil: &SoilParams,
    dt: f64,
) -> Result<(f64, f64, CellFluxes)> {
    let mut f = green_ampt_rate(f_d, soil, forcing.rain + h_ef / dt);
    let mut et = actual_et(h_ef, forcing.pet, dt);

    let mut h_next = h_ef + dt * (q_in + forcing.rain - et - q_out - f);
    if h_next < 0.0 {
        let give_back = (-h_next).min(f * dt);
        f -= give_back / dt;
        h_next += give_back;
    }
    if h_next < 0.0 {
        let give_back = (-h_next).min(et * dt);
        et -= give_back / dt;
        h_next += give_back;
    }
    if h_next < -1e-12 {
        return Err(Error::Internal(format!(
            "cell mass balance violated: surface depth {h_next} m after limiter (h_ef {h_ef}, \
             q_in {q_in}, q_out {q_out}, dt {dt})"
        )));
    }
    let h_next = h_next.max(0.0);

    let f_d_wetted = f_d + dt * f;
    let f_d_next = recharge_step(f_d_wetted, soil, dt);
    let recharge_m = f_d_wetted - f_d_next;

    Ok((
        h_next,
        f_d_next,
        CellFluxes {
            infiltration_m: dt * f,
            et_m: dt * et,
            recharge_m,
        },
    ))
}
