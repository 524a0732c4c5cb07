//! Receding-horizon control of the detention pond.
//!
//! Every control horizon the controller takes a fresh inflow forecast,
//! switches between flood control and detention (water-quality) control, and
//! in flood mode minimizes a weighted cost over valve/gate schedules with a
//! multi-start projected coordinate pattern search. Candidate schedules are
//! scored by simulating the full nonlinear pond dynamics over the prediction
//! horizon; the linearized state-space model is exported for analysis but is
//! not what the optimizer sees.

use crate::error::{Error, Result};
pub use crate::reservoir::ReservoirState;
use crate::reservoir::{outflow, step_reservoir, OutletDevices, StageCurve};
use crate::series::StepSeries;

/// Controller tuning. Thresholds that shape the adaptive objective are
/// deliberately mandatory in the scenario config: they encode local
/// regulation, not physics.
#[derive(Debug, Clone)]
pub struct MpcConfig {
    /// Prediction horizon N_p, in control intervals.
    pub prediction_horizon: usize,
    /// How many of the planned intervals are applied before re-planning.
    pub control_horizon: usize,
    /// Control interval length (s).
    pub control_interval: f64,
    /// Weight on control movement.
    pub rho_u: f64,
    /// Weight on depth excursions above `h_ref`.
    pub rho_r: f64,
    /// Reference depth (m); excursions above it are penalized.
    pub h_ref: f64,
    /// Minor-flood discharge threshold (m^3/s).
    pub q_max_minor: f64,
    /// Major-flood discharge threshold (m^3/s).
    pub q_max_major: f64,
    /// Target peak-outflow fraction for minor events, in (0, 1).
    pub alpha_p: f64,
    /// Required detention time before a quality release (s).
    pub detention_time: f64,
    /// Release discharge cap after detention (m^3/s).
    pub q_release: f64,
    /// Forecast peak below which control switches to quality mode (m^3/s).
    pub wet_weather_threshold: f64,
    /// Forecast peak at or below which the horizon counts as null (m^3/s).
    pub forecast_null_eps: f64,
    /// Number of multi-start initial schedules.
    pub n_starts: usize,
    /// Objective-evaluation budget per start.
    pub max_evals_per_start: usize,
    /// Bounds on the per-interval control move.
    pub du_min: f64,
    pub du_max: f64,
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.prediction_horizon == 0 {
            problems.push("prediction horizon must be at least 1 step".to_string());
        }
        if self.control_horizon == 0 || self.control_horizon > self.prediction_horizon {
            problems.push(format!(
                "control horizon must be in [1, prediction horizon], got {}",
                self.control_horizon
            ));
        }
        if !(self.control_interval > 0.0) {
            problems.push("control interval must be positive".to_string());
        }
        if self.rho_u < 0.0 || self.rho_r < 0.0 {
            problems.push("weights must be non-negative".to_string());
        }
        if !(self.alpha_p > 0.0 && self.alpha_p < 1.0) {
            problems.push(format!("alpha_p must be in (0, 1), got {}", self.alpha_p));
        }
        if !(self.q_max_minor <= self.q_max_major) {
            problems.push(format!(
                "q_max_minor ({}) must not exceed q_max_major ({})",
                self.q_max_minor, self.q_max_major
            ));
        }
        if !(self.q_release >= 0.0) || !(self.wet_weather_threshold >= 0.0) {
            problems.push("release and wet-weather thresholds must be non-negative".to_string());
        }
        if self.n_starts == 0 || self.max_evals_per_start == 0 {
            problems.push("optimizer needs at least one start and one evaluation".to_string());
        }
        if !(self.du_min <= 0.0 && self.du_max >= 0.0) {
            problems.push(format!(
                "need du_min <= 0 <= du_max, got [{}, {}]",
                self.du_min, self.du_max
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Valve and gate openness over the prediction horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub u_v: Vec<f64>,
    pub u_s: Vec<f64>,
}

impl ControlSchedule {
    pub fn constant(n_steps: usize, value: f64) -> Self {
        ControlSchedule {
            u_v: vec![value; n_steps],
            u_s: vec![value; n_steps],
        }
    }

    pub fn len(&self) -> usize {
        self.u_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_v.is_empty()
    }

    /// Sum of squared openness over both devices; the tie-breaker between
    /// equal-cost optimizer results.
    pub fn control_energy(&self) -> f64 {
        self.u_v.iter().chain(&self.u_s).map(|u| u * u).sum()
    }

    /// Box and rate constraints, both devices, including the move from the
    /// previously applied controls to the first entry.
    pub fn is_feasible(&self, prev_u: (f64, f64), du_min: f64, du_max: f64) -> bool {
        let check = |series: &[f64], prev: f64| -> bool {
            let mut last = prev;
            for &u in series {
                if !(0.0..=1.0).contains(&u) {
                    return false;
                }
                let du = u - last;
                if du < du_min - 1e-12 || du > du_max + 1e-12 {
                    return false;
                }
                last = u;
            }
            true
        };
        check(&self.u_v, prev_u.0) && check(&self.u_s, prev_u.1)
    }

    /// Clamp entries forward so the schedule satisfies the box and rate
    /// constraints starting from `prev_u`.
    pub fn project_feasible(&mut self, prev_u: (f64, f64), du_min: f64, du_max: f64) {
        let clamp = |series: &mut [f64], prev: f64| {
            let mut last = prev;
            for u in series.iter_mut() {
                *u = u.clamp(last + du_min, last + du_max).clamp(0.0, 1.0);
                last = *u;
            }
        };
        clamp(&mut self.u_v, prev_u.0);
        clamp(&mut self.u_s, prev_u.1);
    }
}

/// Inflow forecast over the prediction horizon.
///
/// `q_in` carries one value per control step — the peak within the interval,
/// which is what the reference heuristic and the mode switch key on. When
/// the exact future inflow path is known (the perfect-forecast setting),
/// `q_in_path` carries it at plant resolution and candidate schedules are
/// scored against it, so predictions match the applied trajectory exactly.
#[derive(Debug, Clone)]
pub struct HorizonForecast {
    /// Peak inflow per control step (m^3/s).
    pub q_in: Vec<f64>,
    /// Exact inflow at the plant substep resolution; empty falls back to the
    /// per-step values held constant over each interval.
    pub q_in_path: Vec<f64>,
    /// Rain rate on the pond surface (m/s).
    pub i_p_res: f64,
    /// Evaporation rate from the pond surface (m/s).
    pub e_p_res: f64,
}

impl HorizonForecast {
    /// Forecast from per-interval values only.
    pub fn per_interval(q_in: Vec<f64>, i_p_res: f64, e_p_res: f64) -> Self {
        HorizonForecast {
            q_in,
            q_in_path: Vec::new(),
            i_p_res,
            e_p_res,
        }
    }

    pub fn peak(&self) -> f64 {
        self.q_in.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    pub fn is_null(&self, eps: f64) -> bool {
        self.peak() <= eps
    }

    /// Inflow for substep `s` of control step `k`.
    #[inline]
    pub fn inflow_at(&self, k: usize, s: usize, n_sub: usize) -> f64 {
        self.q_in_path
            .get(k * n_sub + s)
            .copied()
            .unwrap_or_else(|| self.q_in.get(k).copied().unwrap_or(0.0))
    }
}

/// Reference outflow and penalty weights chosen from the forecast peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveReference {
    pub q_ref: f64,
    pub rho_q: f64,
    pub rho_star: f64,
}

/// Pick the tracking reference and weights for one horizon: minor events aim
/// at a fraction of the forecast peak, larger ones at the minor threshold,
/// and forecasts at or above the major threshold arm the overflow penalty.
pub fn adaptive_reference(forecast: &HorizonForecast, cfg: &MpcConfig) -> AdaptiveReference {
    let peak = forecast.peak();
    let (q_ref, rho_q) = if peak <= cfg.q_max_minor {
        (cfg.alpha_p * peak, 10.0 * cfg.rho_u)
    } else {
        (cfg.q_max_minor, 100.0 * cfg.rho_u)
    };
    let rho_star = if peak >= cfg.q_max_major {
        1000.0 * cfg.rho_u
    } else {
        0.0
    };
    AdaptiveReference {
        q_ref,
        rho_q,
        rho_star,
    }
}

/// Everything the cost function needs besides the trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveWeights {
    pub rho_u: f64,
    pub rho_r: f64,
    pub rho_q: f64,
    pub rho_star: f64,
    pub q_ref: f64,
    pub h_ref: f64,
    pub q_max_major: f64,
}

impl ObjectiveWeights {
    pub fn assemble(reference: AdaptiveReference, cfg: &MpcConfig) -> Self {
        ObjectiveWeights {
            rho_u: cfg.rho_u,
            rho_r: cfg.rho_r,
            rho_q: reference.rho_q,
            rho_star: reference.rho_star,
            q_ref: reference.q_ref,
            h_ref: cfg.h_ref,
            q_max_major: cfg.q_max_major,
        }
    }
}

/// Pond response to a candidate schedule: per control step, the depth and
/// total-outflow peaks reached within the step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h_peak: Vec<f64>,
    pub q_peak: Vec<f64>,
}

/// Cost of a trajectory/schedule pair: squared control moves (including the
/// step off the previously applied controls) plus infinity-norm penalties on
/// depth above the reference, outflow above the adaptive reference, and
/// outflow above the major-flood threshold.
pub fn objective(
    traj: &Trajectory,
    sched: &ControlSchedule,
    prev_u: (f64, f64),
    w: &ObjectiveWeights,
) -> f64 {
    let move_energy = |series: &[f64], prev: f64| -> f64 {
        let mut last = prev;
        let mut sum = 0.0;
        for &u in series {
            let du = u - last;
            sum += du * du;
            last = u;
        }
        sum
    };
    let du_cost =
        w.rho_u * move_energy(&sched.u_v, prev_u.0) + w.rho_u * move_energy(&sched.u_s, prev_u.1);

    let mut depth_excess = 0.0f64;
    for &h in &traj.h_peak {
        depth_excess = depth_excess.max((h - w.h_ref).max(0.0));
    }
    let mut q_excess = 0.0f64;
    let mut q_major_excess = 0.0f64;
    for &q in &traj.q_peak {
        q_excess = q_excess.max((q - w.q_ref).max(0.0));
        q_major_excess = q_major_excess.max((q - w.q_max_major).max(0.0));
    }

    du_cost + w.rho_r * depth_excess + w.rho_q * q_excess + w.rho_star * q_major_excess
}

/// Rule-based multi-start initials: schedule `i` holds both devices at
/// `i / n_starts` over the whole horizon, i = 1..=n_starts.
pub fn multistart_initials(n_starts: usize, n_steps: usize) -> Vec<ControlSchedule> {
    (1..=n_starts)
        .map(|i| ControlSchedule::constant(n_steps, i as f64 / n_starts as f64))
        .collect()
}

/// The nonlinear pond used to score candidate schedules.
#[derive(Debug, Clone, Copy)]
pub struct ReservoirPlant<'a> {
    pub devices: &'a OutletDevices,
    pub curve: &'a StageCurve,
    /// Inner integration step (s); the control interval must be a multiple.
    pub substep: f64,
}

impl ReservoirPlant<'_> {
    pub fn substeps_per_interval(&self, control_interval: f64) -> Result<usize> {
        let ratio = control_interval / self.substep;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 || n < 1.0 {
            return Err(Error::InvalidInput(format!(
                "control interval {control_interval} s must be an integer multiple of the \
                 reservoir step {} s",
                self.substep
            )));
        }
        Ok(n as usize)
    }

    /// Simulate the horizon from depth `h0` under `sched` and `forecast`.
    pub fn simulate_horizon(
        &self,
        h0: f64,
        sched: &ControlSchedule,
        forecast: &HorizonForecast,
        control_interval: f64,
    ) -> Result<Trajectory> {
        let n_sub = self.substeps_per_interval(control_interval)?;
        let n_steps = sched.len();
        let mut state = ReservoirState::at_depth(h0);
        let mut traj = Trajectory {
            h_peak: Vec::with_capacity(n_steps),
            q_peak: Vec::with_capacity(n_steps),
        };
        for k in 0..n_steps {
            state.u_v = sched.u_v[k];
            state.u_s = sched.u_s[k];
            let mut h_peak = 0.0f64;
            let mut q_peak = 0.0f64;
            for s in 0..n_sub {
                let (next, outcome) = step_reservoir(
                    &state,
                    forecast.inflow_at(k, s, n_sub),
                    self.substep,
                    self.devices,
                    self.curve,
                    forecast.i_p_res,
                    forecast.e_p_res,
                )?;
                h_peak = h_peak.max(next.h_r);
                q_peak = q_peak.max(outcome.q_out_mean);
                state = next;
            }
            traj.h_peak.push(h_peak);
            traj.q_peak.push(q_peak);
        }
        Ok(traj)
    }
}

/// Result of one horizon optimization.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub schedule: ControlSchedule,
    pub cost: f64,
    /// Objective evaluations spent, summed across starts.
    pub evals: usize,
    /// True when the forecast was shorter than the horizon and was padded.
    pub forecast_padded: bool,
}

const STEP_INITIAL: f64 = 0.5;
const STEP_FINAL: f64 = 1.0 / 64.0;

/// A poll direction: coordinates (flat index over u_v then u_s) and signs
/// moved together by one step.
type PollMove = Vec<(usize, f64)>;

/// Poll set: single-coordinate moves plus paired rebalancing moves. The
/// pairs shift release between adjacent intervals of one device or between
/// the two devices at the same or adjacent intervals; the peak-shaving terms
/// of the cost are minimax-shaped, and those moves walk along their kinks
/// where single coordinates stall.
fn build_poll_directions(n_steps: usize) -> Vec<PollMove> {
    let n = n_steps;
    let mut dirs: Vec<PollMove> = Vec::new();
    for c in 0..2 * n {
        dirs.push(vec![(c, 1.0)]);
        dirs.push(vec![(c, -1.0)]);
    }
    let mut push_pair = |a: usize, b: usize| {
        // Balanced rebalancers plus tilted (2:1) variants so anisotropic
        // valleys stay descendable at fine steps.
        dirs.push(vec![(a, 1.0), (b, -1.0)]);
        dirs.push(vec![(a, -1.0), (b, 1.0)]);
        dirs.push(vec![(a, 1.0), (b, -0.5)]);
        dirs.push(vec![(a, -1.0), (b, 0.5)]);
        dirs.push(vec![(a, 0.5), (b, -1.0)]);
        dirs.push(vec![(a, -0.5), (b, 1.0)]);
    };
    for device in 0..2 {
        for k in 0..n.saturating_sub(1) {
            push_pair(device * n + k, device * n + k + 1);
        }
    }
    for k in 0..n {
        for j in k.saturating_sub(1)..(k + 2).min(n) {
            push_pair(k, n + j);
        }
    }
    dirs
}

/// Splitmix-style generator for the seeded scatter probes.
fn next_rand(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Sparse random sign pattern over the 2n coordinates; never empty.
fn random_direction(n_coords: usize, rng: &mut u64) -> PollMove {
    loop {
        let mut mv = Vec::new();
        for c in 0..n_coords {
            match next_rand(rng) % 3 {
                0 => mv.push((c, 1.0)),
                1 => mv.push((c, -1.0)),
                _ => {}
            }
        }
        if !mv.is_empty() {
            return mv;
        }
    }
}

fn cache_key(sched: &ControlSchedule) -> Vec<u64> {
    sched
        .u_v
        .iter()
        .chain(&sched.u_s)
        .map(|u| u.to_bits())
        .collect()
}

struct SearchState<'a, F> {
    prev_u: (f64, f64),
    du_min: f64,
    du_max: f64,
    budget: usize,
    evals: usize,
    /// Seeded generator for the scatter probes; fixed seed keeps runs
    /// byte-reproducible.
    rng: u64,
    /// Already-scored schedules; hits cost nothing against the budget.
    cache: &'a mut std::collections::HashMap<Vec<u64>, f64>,
    eval: &'a mut F,
}

impl<F: FnMut(&ControlSchedule) -> Result<f64>> SearchState<'_, F> {
    fn spent(&self) -> bool {
        self.evals >= self.budget
    }

    fn score(&mut self, sched: &ControlSchedule) -> Result<f64> {
        let key = cache_key(sched);
        if let Some(&f) = self.cache.get(&key) {
            return Ok(f);
        }
        self.evals += 1;
        let f = (self.eval)(sched)?;
        self.cache.insert(key, f);
        Ok(f)
    }

    /// Apply one poll move of `step`, clipped to the box and projected onto
    /// the rate constraints. `None` when the move changes nothing.
    fn apply_move(&self, x: &ControlSchedule, mv: &PollMove, step: f64) -> Option<ControlSchedule> {
        let n = x.len();
        let mut cand = x.clone();
        for &(c, sign) in mv {
            let v = if c < n {
                &mut cand.u_v[c]
            } else {
                &mut cand.u_s[c - n]
            };
            *v = (*v + sign * step).clamp(0.0, 1.0);
        }
        cand.project_feasible(self.prev_u, self.du_min, self.du_max);
        if cand == *x {
            None
        } else {
            Some(cand)
        }
    }

    /// One exploratory pass: walk each poll direction greedily while it
    /// improves, then try zeroing each control move outright. The snap pass
    /// removes residual wiggles that step-sized moves cannot cancel, since
    /// the movement cost is floored exactly where consecutive entries agree.
    fn explore(
        &mut self,
        directions: &[PollMove],
        start: &ControlSchedule,
        f_start: f64,
        step: f64,
    ) -> Result<(ControlSchedule, f64)> {
        let mut cur = start.clone();
        let mut f_cur = f_start;
        for mv in directions {
            loop {
                if self.spent() {
                    return Ok((cur, f_cur));
                }
                let Some(cand) = self.apply_move(&cur, mv, step) else {
                    break;
                };
                let f = self.score(&cand)?;
                if f < f_cur {
                    cur = cand;
                    f_cur = f;
                } else {
                    break;
                }
            }
        }
        let n = cur.len();
        for coord in 0..2 * n {
            if self.spent() {
                break;
            }
            let (device_is_gate, k) = (coord >= n, coord % n);
            let mut cand = cur.clone();
            {
                let (series, prev) = if device_is_gate {
                    (&mut cand.u_s, self.prev_u.1)
                } else {
                    (&mut cand.u_v, self.prev_u.0)
                };
                let target = if k == 0 {
                    prev.clamp(0.0, 1.0)
                } else {
                    series[k - 1]
                };
                if series[k] == target {
                    continue;
                }
                series[k] = target;
            }
            cand.project_feasible(self.prev_u, self.du_min, self.du_max);
            if cand == cur {
                continue;
            }
            let f = self.score(&cand)?;
            // Ties go to the snapped candidate: flattening a move never
            // costs anything and matches the less-movement tie policy.
            if f <= f_cur {
                cur = cand;
                f_cur = f;
            }
        }
        Ok((cur, f_cur))
    }
}

const SCATTER_PROBES: usize = 12;

/// Projected pattern search (Hooke-Jeeves flavor) from one initial schedule.
///
/// Exploratory walks over the poll set are followed by pattern
/// (extrapolation) moves along the direction of cumulative improvement;
/// every candidate is clipped to the box and rate constraints. A step size
/// that yields no improvement — including a round of seeded scatter probes —
/// is halved, from 1/2 down to 1/64. Deterministic for a fixed seed.
#[allow(clippy::too_many_arguments)]
fn pattern_search<F: FnMut(&ControlSchedule) -> Result<f64>>(
    initial: ControlSchedule,
    prev_u: (f64, f64),
    cfg: &MpcConfig,
    budget: usize,
    initial_step: f64,
    seed: u64,
    cache: &mut std::collections::HashMap<Vec<u64>, f64>,
    eval: &mut F,
) -> Result<(ControlSchedule, f64, usize)> {
    let mut x = initial;
    x.project_feasible(prev_u, cfg.du_min, cfg.du_max);
    let mut search = SearchState {
        prev_u,
        du_min: cfg.du_min,
        du_max: cfg.du_max,
        budget,
        evals: 0,
        rng: 0x5DEECE66D ^ seed,
        cache,
        eval,
    };
    let mut fx = search.score(&x)?;

    let extrapolate = |from: &ControlSchedule, base: &ControlSchedule| -> ControlSchedule {
        let double = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter()
                .zip(b)
                .map(|(x, b)| (2.0 * x - b).clamp(0.0, 1.0))
                .collect()
        };
        let mut p = ControlSchedule {
            u_v: double(&from.u_v, &base.u_v),
            u_s: double(&from.u_s, &base.u_s),
        };
        p.project_feasible(prev_u, cfg.du_min, cfg.du_max);
        p
    };

    let directions = build_poll_directions(x.len());

    // Re-running the ladder from the converged point is nearly free thanks to
    // the cache and lets the search climb out of a coarse-step dead end. A
    // warm-started polish opens at a finer step so it stays in its basin.
    let mut first_ladder = true;
    loop {
        let f_at_ladder_start = fx;
        let mut step = if first_ladder {
            initial_step
        } else {
            STEP_INITIAL
        };
        first_ladder = false;
        while step >= STEP_FINAL - 1e-12 && !search.spent() {
            let (y, fy) = search.explore(&directions, &x, fx, step)?;
            if fy < fx {
                let mut base = x;
                x = y;
                fx = fy;
                // Ride the improvement direction while it keeps paying off.
                while !search.spent() {
                    let p = extrapolate(&x, &base);
                    if p == x {
                        break;
                    }
                    let fp = search.score(&p)?;
                    let (z, fz) = search.explore(&directions, &p, fp, step)?;
                    if fz < fx {
                        base = x;
                        x = z;
                        fx = fz;
                    } else {
                        break;
                    }
                }
            } else {
                // Seeded scatter probes before conceding this step size; fine
                // steps skip them and save the budget for systematic descent.
                let mut rescued = false;
                let probes = if step >= 0.125 { SCATTER_PROBES } else { 0 };
                for _ in 0..probes {
                    if search.spent() {
                        break;
                    }
                    let mv = random_direction(2 * x.len(), &mut search.rng);
                    let Some(cand) = search.apply_move(&x, &mv, step) else {
                        continue;
                    };
                    let f = search.score(&cand)?;
                    if f < fx {
                        x = cand;
                        fx = f;
                        rescued = true;
                        break;
                    }
                }
                if !rescued {
                    step *= 0.5;
                }
            }
        }
        if search.spent() || fx >= f_at_ladder_start {
            break;
        }
    }
    Ok((x, fx, search.evals))
}

/// Openness pair that makes the instantaneous outflow at depth `h` track a
/// target discharge: the orifice carries what it can, the gate the remainder.
fn openness_for_target(h: f64, target: f64, dev: &OutletDevices) -> (f64, f64) {
    let orifice_cap = dev.k_o * dev.orifice_head(h).powf(dev.alpha_v);
    let u_v = if orifice_cap > 0.0 {
        (target / orifice_cap).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let rest = (target - u_v * orifice_cap).max(0.0);
    let gate_cap = if h > dev.p {
        dev.k_s * dev.gate_head(h).powf(dev.alpha_s)
    } else {
        0.0
    };
    let u_s = if gate_cap > 0.0 {
        (rest / gate_cap).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (u_v, u_s)
}

/// Build the schedule that holds the release as close as possible to a
/// constant `level` over the horizon (the natural shape for peak shaving),
/// re-solving the openness at each interval start as the pool moves.
fn level_tracking_schedule(
    h0: f64,
    level: f64,
    forecast: &HorizonForecast,
    cfg: &MpcConfig,
    plant: &ReservoirPlant,
    prev_u: (f64, f64),
) -> Result<ControlSchedule> {
    let n_sub = plant.substeps_per_interval(cfg.control_interval)?;
    let n_steps = cfg.prediction_horizon;
    let mut sched = ControlSchedule {
        u_v: Vec::with_capacity(n_steps),
        u_s: Vec::with_capacity(n_steps),
    };
    let mut state = ReservoirState::at_depth(h0);
    for k in 0..n_steps {
        // Peak outflow the interval would reach under a candidate openness.
        let simulate_interval = |u_v: f64, u_s: f64| -> Result<(ReservoirState, f64)> {
            let mut probe = state;
            probe.u_v = u_v;
            probe.u_s = u_s;
            let mut q_peak = 0.0f64;
            for s in 0..n_sub {
                let (next, outcome) = step_reservoir(
                    &probe,
                    forecast.inflow_at(k, s, n_sub),
                    plant.substep,
                    plant.devices,
                    plant.curve,
                    forecast.i_p_res,
                    forecast.e_p_res,
                )?;
                q_peak = q_peak.max(outcome.q_out_mean);
                probe = next;
            }
            Ok((probe, q_peak))
        };

        // The pool can move a lot within one interval, so the openness is
        // solved against the simulated interval itself. A nominal target fed
        // to the allocator is swept: when the level is achievable, take the
        // largest target that stays under it (release as much as the level
        // allows); when it is not, take the target minimizing the realized
        // peak (best effort during overload).
        let mut anchor_depth = state.h_r;
        let probe = |target: f64, anchor: f64| -> Result<((f64, f64), ReservoirState, f64)> {
            let u = openness_for_target(anchor, target, plant.devices);
            let (end, peak) = simulate_interval(u.0, u.1)?;
            Ok((u, end, peak))
        };
        let t_max = 4.0 * level.max(1.0);
        let (mut u_pair, mut end_state, first_peak) = probe(level, anchor_depth)?;
        anchor_depth = anchor_depth.max(end_state.h_r);
        if first_peak <= level {
            // Feasible: grow the target while the realization stays under.
            let mut lo = level;
            let mut hi = t_max;
            for _ in 0..10 {
                if hi - lo <= 1e-3 * level.max(1.0) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let (u, end, peak) = probe(mid, anchor_depth)?;
                if peak <= level {
                    lo = mid;
                    u_pair = u;
                    end_state = end;
                    anchor_depth = anchor_depth.max(end.h_r);
                } else {
                    hi = mid;
                }
            }
        } else {
            // Overloaded: minimize the realized peak over the target range.
            let mut best = (first_peak, u_pair, end_state);
            let (u_hi, end_hi, peak_hi) = probe(t_max, anchor_depth)?;
            anchor_depth = anchor_depth.max(end_hi.h_r);
            if peak_hi < best.0 {
                best = (peak_hi, u_hi, end_hi);
            }
            // The realized peak is U-shaped in the target: tiny targets spill
            // (overtopping spike), huge ones release hard. Search the whole
            // range, not just above the level.
            let mut lo = 0.0;
            let mut hi = t_max;
            for _ in 0..8 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                let (u1, end1, p1) = probe(m1, anchor_depth)?;
                let (u2, end2, p2) = probe(m2, anchor_depth)?;
                if p1 < best.0 {
                    best = (p1, u1, end1);
                }
                if p2 < best.0 {
                    best = (p2, u2, end2);
                }
                if p1 < p2 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            u_pair = best.1;
            end_state = best.2;
        }
        sched.u_v.push(u_pair.0);
        sched.u_s.push(u_pair.1);
        state = end_state;
    }
    sched.project_feasible(prev_u, cfg.du_min, cfg.du_max);
    Ok(sched)
}

/// Minimize the horizon cost over valve/gate schedules.
///
/// Each rule-based initial is refined by the pattern search under its own
/// evaluation budget. The first start additionally runs a search step
/// before its poll ladder: the hold-everything baseline, a line search over
/// constant-release (level-tracking) schedules with refinement around the
/// best level, and a coordinate ternary over device-wise constant pairs.
/// The best result wins, with ties broken by smaller control energy and
/// then lower start index so runs are reproducible; leftover budget funds a
/// finishing polish of the incumbent.
pub fn optimize_horizon(
    state: &ReservoirState,
    forecast: &HorizonForecast,
    cfg: &MpcConfig,
    plant: &ReservoirPlant,
    prev_u: (f64, f64),
) -> Result<OptimizeOutcome> {
    let n_steps = cfg.prediction_horizon;
    let mut forecast = forecast.clone();
    let forecast_padded = forecast.q_in.len() < n_steps;
    if forecast_padded {
        let fill = forecast.q_in.last().copied().unwrap_or(0.0);
        forecast.q_in.resize(n_steps, fill);
    }
    let n_sub = plant.substeps_per_interval(cfg.control_interval)?;
    if !forecast.q_in_path.is_empty() && forecast.q_in_path.len() < n_steps * n_sub {
        let fill = forecast.q_in_path.last().copied().unwrap_or(0.0);
        forecast.q_in_path.resize(n_steps * n_sub, fill);
    }

    let reference = adaptive_reference(&forecast, cfg);
    let weights = ObjectiveWeights::assemble(reference, cfg);
    let h0 = state.h_r;

    let mut total_evals = 0usize;
    let mut cache = std::collections::HashMap::new();
    let mut best: Option<(f64, f64, usize, ControlSchedule)> = None;
    for (start_idx, initial) in multistart_initials(cfg.n_starts, n_steps)
        .into_iter()
        .enumerate()
    {
        let mut evals_here = 0usize;
        let mut eval = |sched: &ControlSchedule| -> Result<f64> {
            let traj = plant.simulate_horizon(h0, sched, &forecast, cfg.control_interval)?;
            Ok(objective(&traj, sched, prev_u, &weights))
        };

        let mut seed_schedule = initial;
        if start_idx == 0 {
            // Search step: the do-nothing baseline first (hold the applied
            // controls; zero movement cost), then a scan over release levels
            // refined around the best one. Each proposal costs one objective
            // evaluation.
            let hold = ControlSchedule {
                u_v: vec![prev_u.0.clamp(0.0, 1.0); n_steps],
                u_s: vec![prev_u.1.clamp(0.0, 1.0); n_steps],
            };
            let f_hold = {
                evals_here += 1;
                let f = eval(&hold)?;
                cache.insert(cache_key(&hold), f);
                f
            };
            let level_cap = outflow(plant.devices.h_max, 1.0, 1.0, plant.devices)
                .max(forecast.peak())
                .max(1.0);
            let level_budget = (cfg.max_evals_per_start * 2 / 5).max(4);
            let mut tried: Vec<(f64, f64, ControlSchedule)> = Vec::new();
            let coarse = (level_budget / 2).max(2);
            let mut levels: Vec<f64> = (0..coarse)
                .map(|j| level_cap * j as f64 / (coarse - 1).max(1) as f64)
                .collect();
            // The cost kinks live at the reference and major thresholds;
            // anchor proposals there so the scan can land on them exactly.
            for anchor in [
                weights.q_ref,
                0.97 * cfg.q_max_major,
                0.995 * cfg.q_max_major,
                cfg.q_max_major,
            ] {
                if anchor > 0.0 && anchor <= level_cap {
                    levels.push(anchor);
                }
            }
            for level in levels {
                let sched = level_tracking_schedule(h0, level, &forecast, cfg, plant, prev_u)?;
                let key = cache_key(&sched);
                let f = match cache.get(&key) {
                    Some(&f) => f,
                    None => {
                        evals_here += 1;
                        let f = eval(&sched)?;
                        cache.insert(key, f);
                        f
                    }
                };
                tried.push((f, level, sched));
            }
            tried.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut f_best, l_best, mut s_best) = tried[0].clone();
            let spacing = level_cap / (coarse - 1).max(1) as f64;
            let (mut lo, mut hi) = ((l_best - 1.5 * spacing).max(0.0), l_best + 1.5 * spacing);
            // Ternary refinement of the release level around the best sample.
            while evals_here + 2 <= level_budget && hi - lo > 1e-3 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                let mut score_level = |level: f64| -> Result<(f64, ControlSchedule)> {
                    let sched = level_tracking_schedule(h0, level, &forecast, cfg, plant, prev_u)?;
                    let key = cache_key(&sched);
                    let f = match cache.get(&key) {
                        Some(&f) => f,
                        None => {
                            evals_here += 1;
                            let f = eval(&sched)?;
                            cache.insert(key, f);
                            f
                        }
                    };
                    Ok((f, sched))
                };
                let (f1, s1) = score_level(m1)?;
                let (f2, s2) = score_level(m2)?;
                if f1 < f_best {
                    f_best = f1;
                    s_best = s1;
                }
                if f2 < f_best {
                    f_best = f2;
                    s_best = s2;
                }
                if f1 < f2 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            if f_hold <= f_best {
                f_best = f_hold;
                s_best = hold.clone();
            }

            // Constant-pair family: each device repositioned once and held.
            // Coordinate ternary over the two constants covers the
            // movement-dominated regime where the optimum is a single move.
            let pair_budget = cfg.max_evals_per_start / 5;
            let mut pair_evals = 0usize;
            let mut score_pair = |xv: f64, xs: f64, evals_here: &mut usize| -> Result<f64> {
                let mut sched = ControlSchedule {
                    u_v: vec![xv.clamp(0.0, 1.0); n_steps],
                    u_s: vec![xs.clamp(0.0, 1.0); n_steps],
                };
                sched.project_feasible(prev_u, cfg.du_min, cfg.du_max);
                let key = cache_key(&sched);
                if let Some(&f) = cache.get(&key) {
                    return Ok(f);
                }
                *evals_here += 1;
                let f = eval(&sched)?;
                cache.insert(key, f);
                Ok(f)
            };
            let mut pair = (prev_u.0.clamp(0.0, 1.0), prev_u.1.clamp(0.0, 1.0));
            let mut f_pair = f_hold;
            for round in 0..2 {
                for device in 0..2 {
                    let (mut lo, mut hi) = (0.0f64, 1.0f64);
                    while pair_evals + 2 <= pair_budget * (round * 2 + device + 1) / 4
                        && hi - lo > 1.0 / 128.0
                    {
                        let m1 = lo + (hi - lo) / 3.0;
                        let m2 = hi - (hi - lo) / 3.0;
                        let (a1, a2) = if device == 0 {
                            ((m1, pair.1), (m2, pair.1))
                        } else {
                            ((pair.0, m1), (pair.0, m2))
                        };
                        let f1 = score_pair(a1.0, a1.1, &mut pair_evals)?;
                        let f2 = score_pair(a2.0, a2.1, &mut pair_evals)?;
                        if f1 < f_pair {
                            f_pair = f1;
                            pair = a1;
                        }
                        if f2 < f_pair {
                            f_pair = f2;
                            pair = a2;
                        }
                        if f1 < f2 {
                            hi = m2;
                        } else {
                            lo = m1;
                        }
                    }
                }
            }
            evals_here += pair_evals;
            if f_pair < f_best {
                f_best = f_pair;
                s_best = ControlSchedule {
                    u_v: vec![pair.0; n_steps],
                    u_s: vec![pair.1; n_steps],
                };
                s_best.project_feasible(prev_u, cfg.du_min, cfg.du_max);
            }

            if f_best.is_finite() {
                seed_schedule = s_best;
            }
        }

        // Later starts keep a sixth of their budget in reserve; it funds the
        // finishing polish of the global incumbent below.
        let cap = if start_idx == 0 {
            cfg.max_evals_per_start
        } else {
            cfg.max_evals_per_start - cfg.max_evals_per_start / 6
        };
        let remaining = cap.saturating_sub(evals_here).max(1);
        let warm = start_idx == 0 && evals_here > 0;
        let (sched, cost, used) = pattern_search(
            seed_schedule,
            prev_u,
            cfg,
            remaining,
            if warm { STEP_FINAL * 4.0 } else { STEP_INITIAL },
            start_idx as u64,
            &mut cache,
            &mut eval,
        )?;
        total_evals += evals_here + used;
        let energy = sched.control_energy();
        let better = match &best {
            None => true,
            Some((c, e, i, _)) => (cost, energy, start_idx) < (*c, *e, *i),
        };
        if better {
            best = Some((cost, energy, start_idx, sched));
        }
    }
    let (mut cost, _, _, mut schedule) = best.expect("n_starts >= 1");

    // Finishing polish: spend whatever the starts left unused on the global
    // incumbent, opening at a fine step so it stays in its basin.
    let full_budget = cfg.n_starts * cfg.max_evals_per_start;
    let mut round = 0u64;
    while cost > 0.0 {
        let leftover = full_budget.saturating_sub(total_evals);
        if leftover == 0 {
            break;
        }
        let mut eval = |sched: &ControlSchedule| -> Result<f64> {
            let traj = plant.simulate_horizon(h0, sched, &forecast, cfg.control_interval)?;
            Ok(objective(&traj, sched, prev_u, &weights))
        };
        let (polished, f_polished, used) = pattern_search(
            schedule.clone(),
            prev_u,
            cfg,
            leftover,
            STEP_FINAL * 4.0,
            0xF15 + round,
            &mut cache,
            &mut eval,
        )?;
        total_evals += used;
        round += 1;
        if f_polished < cost {
            cost = f_polished;
            schedule = polished;
        } else {
            break;
        }
    }
    Ok(OptimizeOutcome {
        schedule,
        cost,
        evals: total_evals,
        forecast_padded,
    })
}

/// Valve openness that releases at most `cfg.q_release` through the orifice
/// at depth `h_r`, using the same effective head as the orifice law. Fully
/// open when the head is too small to matter.
pub fn detention_release(h_r: f64, cfg: &MpcConfig, dev: &OutletDevices) -> f64 {
    let head = dev.orifice_head(h_r);
    if head <= 0.0 {
        return 1.0;
    }
    let capacity = dev.k_o * head.powf(dev.alpha_v);
    if capacity <= cfg.q_release {
        1.0
    } else {
        cfg.q_release / capacity
    }
}

/// Which objective the controller is serving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Flood,
    Quality,
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlMode::Flood => write!(f, "FLOOD"),
            ControlMode::Quality => write!(f, "QUALITY"),
        }
    }
}

/// One re-planning decision.
#[derive(Debug, Clone)]
pub struct ControllerDecision {
    pub mode: ControlMode,
    /// Present in flood mode: the optimized horizon plan.
    pub plan: Option<OptimizeOutcome>,
    pub reference: AdaptiveReference,
    /// Forecast peak is at or below the null threshold.
    pub forecast_null: bool,
}

/// Decide the mode (and, in flood mode, the schedule) for the next control
/// horizon. Quality-mode valve settings depend on the detention clock and
/// the depth at each interval start, so they are produced during application.
pub fn controller_step(
    state: &ReservoirState,
    forecast: &HorizonForecast,
    cfg: &MpcConfig,
    plant: &ReservoirPlant,
    prev_u: (f64, f64),
) -> Result<ControllerDecision> {
    let reference = adaptive_reference(forecast, cfg);
    let forecast_null = forecast.is_null(cfg.forecast_null_eps);
    if forecast.peak() < cfg.wet_weather_threshold {
        Ok(ControllerDecision {
            mode: ControlMode::Quality,
            plan: None,
            reference,
            forecast_null,
        })
    } else {
        let plan = optimize_horizon(state, forecast, cfg, plant, prev_u)?;
        Ok(ControllerDecision {
            mode: ControlMode::Flood,
            plan: Some(plan),
            reference,
            forecast_null,
        })
    }
}

/// Operating strategy for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Mpc,
    /// Fixed valve and gate openness; no optimization.
    Static {
        openness: f64,
    },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Mpc => "mpc".to_string(),
            Strategy::Static { openness } => {
                format!("static_{:03}", (openness * 100.0).round() as u32)
            }
        }
    }
}

/// Pond state sampled at the start of each reservoir substep.
#[derive(Debug, Clone, Copy)]
pub struct ReservoirTraceRow {
    pub t: f64,
    pub h: f64,
    pub u_v: f64,
    pub u_s: f64,
    pub q_in: f64,
    pub q_out: f64,
    pub overtopped: bool,
}

/// Controller bookkeeping, one row per control interval.
#[derive(Debug, Clone)]
pub struct ControllerTraceRow {
    pub horizon_index: usize,
    pub t: f64,
    pub mode: ControlMode,
    pub cost: f64,
    pub evals: usize,
    pub u_v_applied: f64,
    pub u_s_applied: f64,
    pub q_ref: f64,
    pub rho_q: f64,
    pub rho_star: f64,
    pub detention_clock_s: f64,
}

/// Mass bookkeeping of a reservoir run (m^3).
#[derive(Debug, Clone, Copy, Default)]
pub struct ReservoirLedger {
    pub inflow_m3: f64,
    pub outflow_m3: f64,
    pub initial_storage_m3: f64,
    pub final_storage_m3: f64,
}

impl ReservoirLedger {
    pub fn residual_m3(&self) -> f64 {
        self.inflow_m3 - self.outflow_m3 - (self.final_storage_m3 - self.initial_storage_m3)
    }
}

/// Complete trace of one strategy run.
#[derive(Debug, Clone)]
pub struct ControlRun {
    pub strategy: Strategy,
    pub reservoir_rows: Vec<ReservoirTraceRow>,
    pub controller_rows: Vec<ControllerTraceRow>,
    /// Orifice volume released during eligible periods (m^3).
    pub treated_volume_m3: f64,
    /// Sum of eligible orifice volume times its detention time (m^3 s).
    pub detention_weighted_m3s: f64,
    pub ledger: ReservoirLedger,
    pub final_state: ReservoirState,
}

impl ControlRun {
    /// Volume-weighted mean detention time of the treated volume (s).
    pub fn average_detention_time_s(&self) -> Option<f64> {
        if self.treated_volume_m3 > 0.0 {
            Some(self.detention_weighted_m3s / self.treated_volume_m3)
        } else {
            None
        }
    }
}

/// Forecast for the horizon starting at `t`: per control interval, the peak
/// inflow within that interval, so predicted outflow peaks bound applied
/// ones.
fn build_forecast(
    inflow: &StepSeries,
    pond_rain: &StepSeries,
    pond_evap: &StepSeries,
    t: f64,
    cfg: &MpcConfig,
    n_sub: usize,
    substep: f64,
) -> HorizonForecast {
    let mut q_in = Vec::with_capacity(cfg.prediction_horizon);
    let mut q_in_path = Vec::with_capacity(cfg.prediction_horizon * n_sub);
    for k in 0..cfg.prediction_horizon {
        let a = t + k as f64 * cfg.control_interval;
        q_in.push(inflow.max_over(a, a + cfg.control_interval));
        for s in 0..n_sub {
            q_in_path.push(inflow.value_at(a + s as f64 * substep));
        }
    }
    HorizonForecast {
        q_in,
        q_in_path,
        i_p_res: pond_rain.value_at(t),
        e_p_res: pond_evap.value_at(t),
    }
}

/// Simulate one strategy over the whole inflow record.
///
/// The controller re-plans at every control-horizon boundary with a perfect
/// forecast window; applied controls are piecewise constant per control
/// interval. The detention clock advances one interval at a time while the
/// forecast is null and the pool sits above the orifice datum; it resets on
/// a flood-mode decision or when the pool drains below the datum. Treated
/// volume counts orifice releases during eligible intervals only.
pub fn run_receding_horizon(
    inflow: &StepSeries,
    pond_rain: &StepSeries,
    pond_evap: &StepSeries,
    initial: ReservoirState,
    strategy: Strategy,
    cfg: &MpcConfig,
    plant: &ReservoirPlant,
) -> Result<ControlRun> {
    cfg.validate()?;
    let n_sub = plant.substeps_per_interval(cfg.control_interval)?;
    if inflow.is_empty() {
        return Err(Error::InvalidInput("inflow series is empty".into()));
    }
    let t_start = inflow.start();
    let t_end = inflow.end();

    let mut state = initial;
    if let Strategy::Static { openness } = strategy {
        state.u_v = openness;
        state.u_s = openness;
    }
    let mut prev_u = (state.u_v, state.u_s);

    let datum = plant.devices.orifice_datum();
    let mut run = ControlRun {
        strategy,
        reservoir_rows: Vec::new(),
        controller_rows: Vec::new(),
        treated_volume_m3: 0.0,
        detention_weighted_m3s: 0.0,
        ledger: ReservoirLedger {
            initial_storage_m3: plant.curve.volume(initial.h_r)?,
            ..ReservoirLedger::default()
        },
        final_state: state,
    };

    let mut t = t_start;
    let mut horizon_index = 0usize;
    while t < t_end - 1e-9 {
        let forecast = build_forecast(inflow, pond_rain, pond_evap, t, cfg, n_sub, plant.substep);
        let decision = match strategy {
            Strategy::Mpc => controller_step(&state, &forecast, cfg, plant, prev_u)?,
            Strategy::Static { .. } => {
                // Same mode and clock bookkeeping as the controller, used for
                // indicators only; a static run never optimizes.
                let reference = adaptive_reference(&forecast, cfg);
                let mode = if forecast.peak() < cfg.wet_weather_threshold {
                    ControlMode::Quality
                } else {
                    ControlMode::Flood
                };
                ControllerDecision {
                    mode,
                    plan: None,
                    reference,
                    forecast_null: forecast.is_null(cfg.forecast_null_eps),
                }
            }
        };
        if decision.mode == ControlMode::Flood {
            state.detention_clock = 0.0;
        }
        let (cost, evals) = decision
            .plan
            .as_ref()
            .map(|p| (p.cost, p.evals))
            .unwrap_or((0.0, 0));

        for interval in 0..cfg.control_horizon {
            let t_i = t + interval as f64 * cfg.control_interval;
            if t_i >= t_end - 1e-9 {
                break;
            }
            // A drained pool has nothing left to detain; restart the clock.
            if decision.mode == ControlMode::Quality && state.h_r <= datum {
                state.detention_clock = 0.0;
            }
            let eligible = decision.forecast_null && state.h_r > datum;

            let (u_v, u_s) = match (strategy, &decision.plan) {
                (Strategy::Static { openness }, _) => (openness, openness),
                (Strategy::Mpc, Some(plan)) => {
                    (plan.schedule.u_v[interval], plan.schedule.u_s[interval])
                }
                (Strategy::Mpc, None) => {
                    if state.detention_clock >= cfg.detention_time {
                        (detention_release(state.h_r, cfg, plant.devices), 0.0)
                    } else {
                        (0.0, 0.0)
                    }
                }
            };
            state.u_v = u_v;
            state.u_s = u_s;

            run.controller_rows.push(ControllerTraceRow {
                horizon_index,
                t: t_i,
                mode: decision.mode,
                cost,
                evals,
                u_v_applied: u_v,
                u_s_applied: u_s,
                q_ref: decision.reference.q_ref,
                rho_q: decision.reference.rho_q,
                rho_star: decision.reference.rho_star,
                detention_clock_s: state.detention_clock,
            });

            let clock_at_start = state.detention_clock;
            for s in 0..n_sub {
                let t_s = t_i + s as f64 * plant.substep;
                if t_s >= t_end - 1e-9 {
                    break;
                }
                let q_in = inflow.value_at(t_s);
                let (mut next, outcome) = step_reservoir(
                    &state,
                    q_in,
                    plant.substep,
                    plant.devices,
                    plant.curve,
                    pond_rain.value_at(t_s),
                    pond_evap.value_at(t_s),
                )?;
                run.reservoir_rows.push(ReservoirTraceRow {
                    t: t_s,
                    h: state.h_r,
                    u_v: state.u_v,
                    u_s: state.u_s,
                    q_in,
                    q_out: outcome.q_out_mean,
                    overtopped: outcome.overtopped,
                });
                run.ledger.inflow_m3 += outcome.inflow_m3;
                run.ledger.outflow_m3 += outcome.released_m3 + outcome.spill_m3;
                if eligible {
                    run.treated_volume_m3 += outcome.orifice_m3;
                    run.detention_weighted_m3s += outcome.orifice_m3 * clock_at_start;
                    next.treated_volume += outcome.orifice_m3;
                }
                state = next;
            }
            if eligible {
                state.detention_clock = clock_at_start + cfg.control_interval;
            }
            prev_u = (u_v, u_s);
        }

        horizon_index += 1;
        t += cfg.control_horizon as f64 * cfg.control_interval;
    }

    run.ledger.final_storage_m3 = plant.curve.volume(state.h_r)?;
    run.final_state = state;
    Ok(run)
}
