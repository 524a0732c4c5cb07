//! Detention-pond dynamics: stage-area storage, a bottom orifice and a gated
//! spillway with openness controls, mass-balance stepping, and the exact
//! linearization of the outflow law into a time-varying state-space model.

use serde::Deserialize;

use crate::error::{Error, Result};

/// Piecewise-linear stage-area relation with a scalar porosity.
///
/// Storage is the exact integral of `A(h) * porosity`; above the last
/// breakpoint the final slope extrapolates.
#[derive(Debug, Clone)]
pub struct StageCurve {
    /// (depth m, area m^2), strictly increasing depths starting at 0.
    breakpoints: Vec<(f64, f64)>,
    /// Void fraction of the storage volume, in (0, 1]. Unity for an open
    /// pond; the hook exists for media-filled storage.
    porosity: f64,
    /// Cumulative storage (m^3) at each breakpoint.
    cumulative: Vec<f64>,
}

impl StageCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>, porosity: f64) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidInput(
                "stage curve needs at least two breakpoints".into(),
            ));
        }
        if breakpoints[0].0 != 0.0 {
            return Err(Error::InvalidInput(
                "stage curve must start at depth 0".into(),
            ));
        }
        for pair in breakpoints.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidInput(
                    "stage-curve depths must be strictly increasing".into(),
                ));
            }
        }
        if breakpoints.iter().any(|&(_, a)| !(a > 0.0)) {
            return Err(Error::InvalidInput(
                "stage-curve areas must be positive".into(),
            ));
        }
        if !(porosity > 0.0 && porosity <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "porosity must be in (0, 1], got {porosity}"
            )));
        }
        let mut cumulative = vec![0.0];
        for pair in breakpoints.windows(2) {
            let (h0, a0) = pair[0];
            let (h1, a1) = pair[1];
            let segment = porosity * 0.5 * (a0 + a1) * (h1 - h0);
            cumulative.push(cumulative.last().unwrap() + segment);
        }
        Ok(Self {
            breakpoints,
            porosity,
            cumulative,
        })
    }

    pub fn porosity(&self) -> f64 {
        self.porosity
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    /// Depth of the last breakpoint.
    pub fn top_depth(&self) -> f64 {
        self.breakpoints.last().unwrap().0
    }

    /// True when `h` extrapolates beyond the tabulated curve.
    pub fn is_above_curve(&self, h: f64) -> bool {
        h > self.top_depth()
    }

    fn segment_index(&self, h: f64) -> usize {
        // Last segment whose lower breakpoint is <= h; extrapolates above.
        match self.breakpoints.binary_search_by(|&(d, _)| d.total_cmp(&h)) {
            Ok(i) => i.min(self.breakpoints.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.breakpoints.len() - 2),
        }
    }

    /// Water-surface area (m^2) at depth `h`.
    pub fn area(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "depth must be non-negative, got {h}"
            )));
        }
        let i = self.segment_index(h);
        let (h0, a0) = self.breakpoints[i];
        let (h1, a1) = self.breakpoints[i + 1];
        let slope = (a1 - a0) / (h1 - h0);
        Ok(a0 + slope * (h - h0))
    }

    /// Stored volume (m^3) at depth `h`: exact integral of `A * porosity`.
    pub fn volume(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "depth must be non-negative, got {h}"
            )));
        }
        let i = self.segment_index(h);
        let (h0, a0) = self.breakpoints[i];
        let a_h = self.area(h)?;
        Ok(self.cumulative[i] + self.porosity * 0.5 * (a0 + a_h) * (h - h0))
    }

    /// Depth (m) holding volume `v`; inverts the piecewise-quadratic storage.
    pub fn depth_from_volume(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "volume must be non-negative, got {v}"
            )));
        }
        let last = self.breakpoints.len() - 1;
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&v)) {
            Ok(i) => i.min(last - 1),
            Err(0) => 0,
            Err(i) => (i - 1).min(last - 1),
        };
        let (h0, a0) = self.breakpoints[i];
        let (h1, a1) = self.breakpoints[i + 1];
        let slope = (a1 - a0) / (h1 - h0);
        let dv = (v - self.cumulative[i]) / self.porosity;
        // Solve a0 * x + slope * x^2 / 2 = dv for x = h - h0.
        let x = if slope.abs() < 1e-12 {
            dv / a0
        } else {
            let disc = (a0 * a0 + 2.0 * slope * dv).max(0.0);
            (disc.sqrt() - a0) / slope
        };
        Ok(h0 + x)
    }
}

/// Rating parameters of the two outlet devices.
///
/// The orifice discharges `u_v * k_o * hv^alpha_v` with effective head
/// `hv = max(h - (h0_orifice + 0.2 d_h), 0)`. The spillway/gate discharges
/// `u_s * k_s * hs^alpha_s` with `hs = max(h - p, 0)` once the pool tops the
/// crest.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct OutletDevices {
    /// Orifice rating coefficient (m^(3-alpha_v)/s).
    pub k_o: f64,
    /// Orifice rating exponent (-).
    pub alpha_v: f64,
    /// Orifice invert depth above the pond bottom (m).
    pub h0_orifice: f64,
    /// Hydraulic diameter of the orifice (m); the head datum sits 0.2 d_h
    /// above the invert.
    pub d_h: f64,
    /// Spillway/gate rating coefficient (m^(3-alpha_s)/s).
    pub k_s: f64,
    /// Spillway/gate rating exponent (-).
    pub alpha_s: f64,
    /// Spillway crest depth (m).
    pub p: f64,
    /// Maximum pool depth (m); beyond it the pond overtops.
    pub h_max: f64,
}

impl OutletDevices {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_o >= 0.0 && self.k_s >= 0.0) {
            return Err(Error::InvalidInput(
                "rating coefficients must be non-negative".into(),
            ));
        }
        if !(self.alpha_v > 0.0 && self.alpha_s > 0.0) {
            return Err(Error::InvalidInput(
                "rating exponents must be positive".into(),
            ));
        }
        if !(self.d_h > 0.0) {
            return Err(Error::InvalidInput(
                "hydraulic diameter must be positive".into(),
            ));
        }
        if !(0.0 <= self.h0_orifice && self.h0_orifice < self.p && self.p < self.h_max) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= h0_orifice < p < h_max, got {} / {} / {}",
                self.h0_orifice, self.p, self.h_max
            )));
        }
        Ok(())
    }

    /// Head datum of the orifice law.
    pub fn orifice_datum(&self) -> f64 {
        self.h0_orifice + 0.2 * self.d_h
    }

    pub fn orifice_head(&self, h: f64) -> f64 {
        (h - self.orifice_datum()).max(0.0)
    }

    pub fn gate_head(&self, h: f64) -> f64 {
        (h - self.p).max(0.0)
    }
}

/// Orifice discharge (m^3/s) at depth `h` and openness `u_v`.
pub fn orifice_outflow(h: f64, u_v: f64, dev: &OutletDevices) -> f64 {
    let head = dev.orifice_head(h);
    if head <= 0.0 {
        return 0.0;
    }
    u_v * dev.k_o * head.powf(dev.alpha_v)
}

/// Spillway/gate discharge (m^3/s) at depth `h` and openness `u_s`.
pub fn gate_outflow(h: f64, u_s: f64, dev: &OutletDevices) -> f64 {
    if h <= dev.p {
        return 0.0;
    }
    u_s * dev.k_s * dev.gate_head(h).powf(dev.alpha_s)
}

/// Total controlled outflow (m^3/s).
pub fn outflow(h: f64, u_v: f64, u_s: f64, dev: &OutletDevices) -> f64 {
    orifice_outflow(h, u_v, dev) + gate_outflow(h, u_s, dev)
}

/// Partial derivatives of the outflow law: (d/dh, d/du_v, d/du_s).
///
/// Each term is present only where its effective head is positive; the
/// head-capped branches are flat from below, so the derivative at exactly
/// zero head is zero.
pub fn outflow_jacobians(h: f64, u_v: f64, u_s: f64, dev: &OutletDevices) -> (f64, f64, f64) {
    let hv = dev.orifice_head(h);
    let hs = dev.gate_head(h);
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    if hv > 0.0 {
        alpha += dev.alpha_v * u_v * dev.k_o * hv.powf(dev.alpha_v - 1.0);
        beta = dev.k_o * hv.powf(dev.alpha_v);
    }
    if h > dev.p && hs > 0.0 {
        alpha += dev.alpha_s * u_s * dev.k_s * hs.powf(dev.alpha_s - 1.0);
        gamma = dev.k_s * hs.powf(dev.alpha_s);
    }
    (alpha, beta, gamma)
}

/// Pond state carried across steps.
#[derive(Debug, Clone, Copy)]
pub struct ReservoirState {
    /// Pool depth (m).
    pub h_r: f64,
    /// Valve openness in [0, 1].
    pub u_v: f64,
    /// Gate openness in [0, 1].
    pub u_s: f64,
    /// Elapsed detention time (s); bookkeeping owned by the controller.
    pub detention_clock: f64,
    /// Accumulated treated volume (m^3); bookkeeping owned by the runner.
    pub treated_volume: f64,
}

impl ReservoirState {
    pub fn empty() -> Self {
        ReservoirState {
            h_r: 0.0,
            u_v: 0.0,
            u_s: 0.0,
            detention_clock: 0.0,
            treated_volume: 0.0,
        }
    }

    pub fn at_depth(h_r: f64) -> Self {
        ReservoirState {
            h_r,
            ..ReservoirState::empty()
        }
    }
}

/// What happened during one reservoir step.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReservoirStepOutcome {
    /// Net inflow applied, pond-surface rain/evaporation included (m^3).
    pub inflow_m3: f64,
    /// Controlled outflow through the devices (m^3).
    pub released_m3: f64,
    /// Share of `released_m3` that passed the bottom orifice (m^3).
    pub orifice_m3: f64,
    /// Overtopping volume, reported as spillway outflow (m^3).
    pub spill_m3: f64,
    /// Mean total outflow rate over the step (m^3/s).
    pub q_out_mean: f64,
    pub overtopped: bool,
}

/// Advance the pond by `dt` under constant inflow `q_in` (m^3/s) and
/// pond-surface rain/evaporation rates (m/s).
///
/// The mass balance is integrated in volume space so the storage ledger is
/// exact; outflow is volume-capped so storage never goes negative, and any
/// volume above `h_max` leaves as spillway overtopping with a raised flag.
pub fn step_reservoir(
    state: &ReservoirState,
    q_in: f64,
    dt: f64,
    dev: &OutletDevices,
    curve: &StageCurve,
    rain_rate: f64,
    evap_rate: f64,
) -> Result<(ReservoirState, ReservoirStepOutcome)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reservoir step must be positive, got {dt} s"
        )));
    }
    let h = state.h_r;
    let area = curve.area(h)?;
    let stored = curve.volume(h)?;

    let in_m3 = (q_in + rain_rate * area) * dt;
    // Evaporation cannot draw the pond below empty.
    let evap_m3 = (evap_rate * area * dt).min(stored + in_m3).max(0.0);

    let q_orifice = orifice_outflow(h, state.u_v, dev);
    let q_gate = gate_outflow(h, state.u_s, dev);
    let nominal_m3 = (q_orifice + q_gate) * dt;
    let available = stored + in_m3 - evap_m3;
    let released_m3 = nominal_m3.min(available);
    let scale = if nominal_m3 > 0.0 {
        released_m3 / nominal_m3
    } else {
        0.0
    };
    let orifice_m3 = q_orifice * dt * scale;

    let mut v_next = available - released_m3;
    let v_max = curve.volume(dev.h_max)?;
    let mut spill_m3 = 0.0;
    let mut overtopped = false;
    if v_next > v_max {
        spill_m3 = v_next - v_max;
        v_next = v_max;
        overtopped = true;
    }
    let h_next = curve.depth_from_volume(v_next)?;

    let outcome = ReservoirStepOutcome {
        inflow_m3: in_m3 - evap_m3,
        released_m3,
        orifice_m3,
        spill_m3,
        q_out_mean: (released_m3 + spill_m3) / dt,
        overtopped,
    };
    Ok((
        ReservoirState {
            h_r: h_next,
            ..*state
        },
        outcome,
    ))
}

/// The time-varying state-space form of the pond around an operating point:
/// depth update `h(k+1) = A h + B_v u_v + B_s u_s + phi + inflow_gain q_in`
/// and output `q_out = C h + D_v u_v + D_s u_s + epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct LinearizedPlant {
    pub a: f64,
    pub b_v: f64,
    pub b_s: f64,
    pub c: f64,
    pub d_v: f64,
    pub d_s: f64,
    /// Operating-point constant of the depth equation.
    pub phi: f64,
    /// Operating-point constant of the output equation.
    pub epsilon: f64,
    /// dt / (A(h*) eta): converts inflow discharge to a depth increment.
    pub inflow_gain: f64,
    /// (h*, u_v*, u_s*).
    pub operating_point: (f64, f64, f64),
    pub dt: f64,
}

impl LinearizedPlant {
    pub fn predict_depth(&self, h: f64, u_v: f64, u_s: f64, q_in: f64) -> f64 {
        self.a * h + self.b_v * u_v + self.b_s * u_s + self.phi + self.inflow_gain * q_in
    }

    pub fn predict_outflow(&self, h: f64, u_v: f64, u_s: f64) -> f64 {
        self.c * h + self.d_v * u_v + self.d_s * u_s + self.epsilon
    }
}

/// First-order expansion of the pond dynamics at `(h*, u_v*, u_s*)`.
///
/// Exact at the operating point: the output equation reproduces the
/// nonlinear outflow, and the depth equation reproduces the explicit
/// mass-balance step for any inflow.
pub fn linearize(
    h_star: f64,
    u_v_star: f64,
    u_s_star: f64,
    dev: &OutletDevices,
    curve: &StageCurve,
    dt: f64,
) -> Result<LinearizedPlant> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(0.0..=1.0).contains(&u_v_star) || !(0.0..=1.0).contains(&u_s_star) {
        return Err(Error::InvalidInput("openness must lie in [0, 1]".into()));
    }
    let (alpha, beta, gamma) = outflow_jacobians(h_star, u_v_star, u_s_star, dev);
    let q_star = outflow(h_star, u_v_star, u_s_star, dev);
    let storage_area = curve.area(h_star)? * curve.porosity();
    let gain = dt / storage_area;

    let epsilon = q_star - alpha * h_star - beta * u_v_star - gamma * u_s_star;
    Ok(LinearizedPlant {
        a: 1.0 - gain * alpha,
        b_v: -gain * beta,
        b_s: -gain * gamma,
        c: alpha,
        d_v: beta,
        d_s: gamma,
        phi: -gain * epsilon,
        epsilon,
        inflow_gain: gain,
        operating_point: (h_star, u_v_star, u_s_star),
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The study pond: four linear area segments and a fifth extrapolated.
    pub(crate) fn pond_curve() -> StageCurve {
        StageCurve::new(
            vec![
                (0.0, 50.0),
                (0.9, 2600.0),
                (1.9, 62_500.0),
                (4.4, 67_700.0),
                (6.9, 72_900.0),
            ],
            1.0,
        )
        .unwrap()
    }

    pub(crate) fn pond_devices() -> OutletDevices {
        OutletDevices {
            k_o: 5.4039,
            alpha_v: 0.5,
            h0_orifice: 0.0,
            d_h: 1.0,
            k_s: 27.0,
            alpha_s: 1.5,
            p: 4.4,
            h_max: 6.9,
        }
    }

    #[test]
    fn stage_area_hits_breakpoints_exactly() {
        let c = pond_curve();
        assert_eq!(c.area(0.0).unwrap(), 50.0);
        assert_eq!(c.area(0.9).unwrap(), 2600.0);
        assert_eq!(c.area(1.9).unwrap(), 62_500.0);
        assert_eq!(c.area(4.4).unwrap(), 67_700.0);
        // Midpoint of a linear segment is the mean of its ends.
        assert!((c.area(0.45).unwrap() - 1325.0).abs() < 1e-12);
        assert!(c.area(-0.1).is_err());
    }

    #[test]
    fn stage_volume_is_exact_segment_integral() {
        let c = pond_curve();
        assert_eq!(c.volume(0.0).unwrap(), 0.0);
        // Integral of the first segment: trapezoid (50 + 2600)/2 * 0.9.
        let v = c.volume(0.9).unwrap();
        assert!((v - 1192.5).abs() < 1e-9, "v = {v}");
        // Depth inversion round-trips.
        for &h in &[0.0, 0.3, 0.9, 1.2, 1.9, 3.3, 4.4, 5.0, 6.9] {
            let back = c.depth_from_volume(c.volume(h).unwrap()).unwrap();
            assert!((back - h).abs() < 1e-9, "h = {h}, back = {back}");
        }
    }

    #[test]
    fn volume_derivative_matches_area() {
        let c = pond_curve();
        let eps = 1e-6;
        for &h in &[0.2, 0.7, 1.0, 1.5, 2.5, 4.0, 5.5] {
            let dv = (c.volume(h + eps).unwrap() - c.volume(h - eps).unwrap()) / (2.0 * eps);
            let a = c.area(h).unwrap() * c.porosity();
            assert!(
                ((dv - a) / a).abs() < 1e-6,
                "h = {h}: dV/dh = {dv}, A = {a}"
            );
        }
    }

    #[test]
    fn volume_is_strictly_increasing_and_continuous() {
        let c = pond_curve();
        let mut prev = -1.0;
        let mut h = 0.0;
        while h <= 6.9 {
            let v = c.volume(h).unwrap();
            assert!(v > prev);
            prev = v;
            h += 0.01;
        }
        // Continuity of area at every breakpoint.
        for &(bp, area) in c.breakpoints() {
            let below = c.area((bp - 1e-9).max(0.0)).unwrap();
            let above = c.area(bp + 1e-9).unwrap();
            assert!((below - area).abs() < 1e-3);
            assert!((above - area).abs() < 1e-3);
        }
    }

    #[test]
    fn curve_extrapolates_above_top_with_flag() {
        let c = pond_curve();
        assert!(!c.is_above_curve(6.9));
        assert!(c.is_above_curve(7.0));
        let slope = (72_900.0 - 67_700.0) / 2.5;
        assert!((c.area(7.9).unwrap() - (72_900.0 + slope)).abs() < 1e-9);
    }

    #[test]
    fn outflow_hand_values() {
        let dev = pond_devices();
        assert_eq!(outflow(3.0, 0.0, 0.0, &dev), 0.0);
        assert_eq!(outflow(0.1, 1.0, 1.0, &dev), 0.0, "below the orifice datum");
        // Orifice only: head 1.2 - 0.2 = 1.0.
        let q = outflow(1.2, 1.0, 0.0, &dev);
        assert!((q - 5.4039).abs() < 1e-12);
        // Both devices at h = 5.4: 5.4039 sqrt(5.2) + 27 * 1.0^1.5.
        let q = outflow(5.4, 1.0, 1.0, &dev);
        assert!((q - 39.3228).abs() < 1e-3, "q = {q}");
    }

    #[test]
    fn outflow_monotone_in_depth_and_controls() {
        let dev = pond_devices();
        let mut prev = -1.0;
        let mut h = 0.0;
        while h < 6.9 {
            let q = outflow(h, 0.7, 0.4, &dev);
            assert!(q >= prev);
            prev = q;
            h += 0.05;
        }
        for &h in &[0.5, 2.0, 5.0] {
            assert!(outflow(h, 0.8, 0.3, &dev) >= outflow(h, 0.5, 0.3, &dev));
            assert!(outflow(h, 0.8, 0.6, &dev) >= outflow(h, 0.8, 0.3, &dev));
        }
    }

    #[test]
    fn jacobian_hand_value() {
        let dev = pond_devices();
        let (alpha, beta, gamma) = outflow_jacobians(1.2, 1.0, 0.0, &dev);
        // 0.5 * 5.4039 * 1.0^(-0.5) = 2.702.
        assert!((alpha - 2.70195).abs() < 1e-5);
        assert!((beta - 5.4039).abs() < 1e-12);
        assert_eq!(gamma, 0.0);
        // Storage-only dynamics when both devices are shut.
        let plant = linearize(1.2, 0.0, 0.0, &dev, &pond_curve(), 60.0).unwrap();
        assert_eq!(plant.a, 1.0);
        assert_eq!(plant.c, 0.0);
    }

    #[test]
    fn jacobians_match_central_differences() {
        let dev = pond_devices();
        let eps = 1e-6;
        // Deterministic pseudo-random interior points away from the kinks.
        let mut x = 7u64;
        let mut checked = 0;
        while checked < 20 {
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let h = 0.3 + ((x >> 33) % 10_000) as f64 / 10_000.0 * 6.0;
            let u_v = ((x >> 13) % 1000) as f64 / 1000.0;
            let u_s = ((x >> 3) % 1000) as f64 / 1000.0;
            if (h - dev.p).abs() < 0.05 || dev.orifice_head(h) < 0.05 {
                continue;
            }
            checked += 1;
            let (alpha, beta, gamma) = outflow_jacobians(h, u_v, u_s, &dev);
            let fd_h =
                (outflow(h + eps, u_v, u_s, &dev) - outflow(h - eps, u_v, u_s, &dev)) / (2.0 * eps);
            let fd_v =
                (outflow(h, u_v + eps, u_s, &dev) - outflow(h, u_v - eps, u_s, &dev)) / (2.0 * eps);
            let fd_s =
                (outflow(h, u_v, u_s + eps, &dev) - outflow(h, u_v, u_s - eps, &dev)) / (2.0 * eps);
            assert!(((alpha - fd_h) / fd_h.abs().max(1.0)).abs() < 1e-6);
            assert!(((beta - fd_v) / fd_v.abs().max(1.0)).abs() < 1e-6);
            assert!(((gamma - fd_s) / fd_s.abs().max(1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn linearization_is_exact_at_operating_point() {
        let dev = pond_devices();
        let curve = pond_curve();
        for &(h, uv, us) in &[
            (0.5, 0.2, 0.0),
            (1.2, 1.0, 0.0),
            (5.4, 1.0, 1.0),
            (4.6, 0.3, 0.8),
        ] {
            let plant = linearize(h, uv, us, &dev, &curve, 60.0).unwrap();
            let q = outflow(h, uv, us, &dev);
            assert!((plant.predict_outflow(h, uv, us) - q).abs() < 1e-12 * q.max(1.0));
            // Depth equation matches the explicit mass-balance step.
            for &q_in in &[0.0, 3.0, 25.0] {
                let expected = h + plant.inflow_gain * (q_in - q);
                let got = plant.predict_depth(h, uv, us, q_in);
                assert!((got - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quiescent_pond_holds_depth() {
        let dev = pond_devices();
        let curve = pond_curve();
        let state = ReservoirState::at_depth(2.0);
        let (next, outcome) = step_reservoir(&state, 0.0, 60.0, &dev, &curve, 0.0, 0.0).unwrap();
        assert_eq!(next.h_r, 2.0);
        assert_eq!(outcome.released_m3, 0.0);
    }

    #[test]
    fn constant_inflow_fills_to_the_inverted_volume() {
        let dev = pond_devices();
        let curve = pond_curve();
        let mut state = ReservoirState::empty();
        for _ in 0..60 {
            let (next, _) = step_reservoir(&state, 1.0, 60.0, &dev, &curve, 0.0, 0.0).unwrap();
            state = next;
        }
        let expected_h = curve.depth_from_volume(3600.0).unwrap();
        assert!((curve.volume(state.h_r).unwrap() - 3600.0).abs() < 1e-6);
        assert!((state.h_r - expected_h).abs() < 1e-9);
    }

    #[test]
    fn volume_ledger_closes_during_drawdown() {
        let dev = pond_devices();
        let curve = pond_curve();
        let mut state = ReservoirState::at_depth(5.0);
        state.u_v = 1.0;
        state.u_s = 0.7;
        let v0 = curve.volume(5.0).unwrap();
        let mut inflow = 0.0;
        let mut outflow_total = 0.0;
        for k in 0..2000 {
            let q_in = if k < 300 { 8.0 } else { 0.0 };
            let (next, outcome) =
                step_reservoir(&state, q_in, 30.0, &dev, &curve, 0.0, 0.0).unwrap();
            inflow += q_in * 30.0;
            outflow_total += outcome.released_m3 + outcome.spill_m3;
            state = next;
        }
        let v_end = curve.volume(state.h_r).unwrap();
        let residual = inflow - outflow_total - (v_end - v0);
        assert!(
            residual.abs() <= 1e-6 * inflow.max(1.0),
            "residual {residual}"
        );
    }

    #[test]
    fn outflow_capped_when_pond_nearly_empty() {
        let dev = pond_devices();
        let curve = pond_curve();
        let mut state = ReservoirState::at_depth(0.5);
        state.u_v = 1.0;
        // A huge step would nominally release more than stored.
        let (next, outcome) =
            step_reservoir(&state, 0.0, 86_400.0, &dev, &curve, 0.0, 0.0).unwrap();
        assert!(next.h_r >= 0.0);
        let v0 = curve.volume(0.5).unwrap();
        assert!(outcome.released_m3 <= v0 + 1e-9);
    }

    #[test]
    fn overtopping_is_flagged_and_counted_as_outflow() {
        let dev = pond_devices();
        let curve = pond_curve();
        let state = ReservoirState::at_depth(6.89);
        let (next, outcome) = step_reservoir(&state, 500.0, 600.0, &dev, &curve, 0.0, 0.0).unwrap();
        assert!(outcome.overtopped);
        assert!(outcome.spill_m3 > 0.0);
        assert!((next.h_r - dev.h_max).abs() < 1e-9);
    }

    #[test]
    fn pond_rain_and_evaporation_enter_the_balance() {
        let dev = pond_devices();
        let curve = pond_curve();
        let state = ReservoirState::at_depth(2.0);
        let rain = 10e-3 / 3600.0;
        let (wetter, _) = step_reservoir(&state, 0.0, 3600.0, &dev, &curve, rain, 0.0).unwrap();
        assert!(wetter.h_r > 2.0);
        let (drier, _) = step_reservoir(&state, 0.0, 3600.0, &dev, &curve, 0.0, rain).unwrap();
        assert!(drier.h_r < 2.0);
        // Evaporating an empty pond is a no-op, not a negative volume.
        let empty = ReservoirState::empty();
        let (still_empty, _) =
            step_reservoir(&empty, 0.0, 3600.0, &dev, &curve, 0.0, rain).unwrap();
        assert_eq!(still_empty.h_r, 0.0);
    }

    #[test]
    fn coarse_step_tracks_fine_step_on_triangular_inflow() {
        // Same blocky inflow for both runs; only the integration step differs.
        let dev = pond_devices();
        let curve = pond_curve();
        let peak = 40.0;
        let rise = 1800.0;
        let fall = 3600.0;
        let block = 60.0;
        let inflow: Vec<f64> = (0..((4.0 * 3600.0 / block) as usize))
            .map(|k| {
                let t = k as f64 * block;
                if t < rise {
                    peak * t / rise
                } else if t < rise + fall {
                    peak * (1.0 - (t - rise) / fall)
                } else {
                    0.0
                }
            })
            .collect();
        let run = |dt: f64| -> (f64, f64) {
            let mut state = ReservoirState::at_depth(0.0);
            state.u_v = 1.0;
            state.u_s = 1.0;
            let mut q_peak = 0.0f64;
            let mut volume = 0.0;
            let mut t = 0.0;
            while t < 4.0 * 3600.0 - 1e-9 {
                let q_in = inflow[(t / block) as usize];
                let (next, outcome) =
                    step_reservoir(&state, q_in, dt, &dev, &curve, 0.0, 0.0).unwrap();
                q_peak = q_peak.max(outcome.q_out_mean);
                volume += outcome.released_m3 + outcome.spill_m3;
                state = next;
                t += dt;
            }
            (q_peak, volume)
        };
        let (peak_coarse, vol_coarse) = run(60.0);
        let (peak_fine, vol_fine) = run(1.0);
        assert!(
            ((peak_coarse - peak_fine) / peak_fine).abs() < 0.01,
            "peaks {peak_coarse} vs {peak_fine}"
        );
        assert!(
            ((vol_coarse - vol_fine) / vol_fine).abs() < 0.001,
            "volumes {vol_coarse} vs {vol_fine}"
        );
    }
}
