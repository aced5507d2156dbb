//! IMEX time stepping for
//! `u_t = ∇·(∇u - u∇v)`, `v_t = Δv - v + w`, `w = (I - Δ)^{-1} u`.
//!
//! Each step solves for `w` from the current `u`, advances `v` with the whole
//! linear right side implicit, then advances `u` with implicit diffusion and
//! explicit first-order upwind transport evaluated with the new `v`.
//! Both flux sums telescope, so `∫u` is conserved to round-off; the step is
//! capped so the explicit transport cannot empty any cell, and the implicit
//! diffusion solve is an M-matrix, which together keep `u` nonnegative.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::energetics::{energy_with_w, identity_residual, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{divergence, gradient_values, integrate, sup_norm, Grid, RadialField};
use crate::helmholtz::{HelmholtzSolver, ShiftedOperator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Running,
    Completed,
    /// Numerical blowup detected at the given time.
    BlownUp(f64),
    Stalled,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Completed => "completed",
            Status::BlownUp(_) => "blown_up",
            Status::Stalled => "stalled",
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepperConfig {
    pub cfl: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub blowup_factor: f64,
    pub output_every: usize,
    /// Hard cap on the number of steps; exceeding it stalls the run.
    pub max_steps: usize,
}

impl StepperConfig {
    /// Defaults for a grid: `dt_min = 1e-10 h_min^2` with `h_min` the
    /// narrowest cell, blowup at `1e6` times the initial sup-norm.
    pub fn for_grid(grid: &Grid, t_end: f64) -> Self {
        let dt_min = 1e-10 * grid.min_width().powi(2);
        let dt_max = (t_end / 10.0).max(dt_min);
        Self {
            cfl: 0.5,
            dt_init: dt_max.min(1e-3).max(dt_min),
            dt_min,
            dt_max,
            t_end,
            blowup_factor: 1e6,
            output_every: 10,
            max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            p.push(format!("dynamics.cfl = {} must lie in (0, 1]", self.cfl));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            p.push(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {:e} / {:e} / {:e}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.t_end > 0.0) {
            p.push(format!("dynamics.t_end = {} must be positive", self.t_end));
        }
        if !(self.blowup_factor > 1.0) {
            p.push(format!(
                "dynamics.blowup_factor = {} must exceed 1",
                self.blowup_factor
            ));
        }
        if self.output_every == 0 {
            p.push("dynamics.output_every must be at least 1".into());
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub step: usize,
    pub u: RadialField,
    pub v: RadialField,
    pub dt: f64,
    pub status: Status,
    // (t, sup u) over the most recent steps, for stagnation detection
    recent_sup: VecDeque<(f64, f64)>,
}

impl State {
    pub fn new(u: RadialField, v: RadialField, dt: f64) -> Result<Self> {
        u.check_grid(&v)?;
        Ok(Self {
            t: 0.0,
            step: 0,
            u,
            v,
            dt,
            status: Status::Running,
            recent_sup: VecDeque::new(),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }
}

/// Area-weighted upwind fluxes `A û v_r` on every face (zero on the boundary).
pub fn advective_flux(u: &RadialField, v: &RadialField) -> Result<Vec<f64>> {
    u.check_grid(v)?;
    Ok(flux_values(u.grid(), u.values(), v.values()))
}

fn flux_values(grid: &Grid, u: &[f64], v: &[f64]) -> Vec<f64> {
    let vel = gradient_values(grid, v);
    let mut flux = vec![0.0; grid.cells() + 1];
    for i in 1..grid.cells() {
        let upwind = if vel[i] >= 0.0 { u[i - 1] } else { u[i] };
        flux[i] = grid.areas()[i] * upwind * vel[i];
    }
    flux
}

/// Largest step keeping the explicit upwind update nonnegative:
/// `min_i V_i / sum(outflow A |v_r|)`. Infinite when nothing flows.
pub fn positivity_limit(grid: &Grid, v: &[f64]) -> f64 {
    let vel = gradient_values(grid, v);
    let areas = grid.areas();
    let mut limit = f64::INFINITY;
    for i in 0..grid.cells() {
        let right = vel[i + 1].max(0.0) * areas[i + 1];
        let left = (-vel[i]).max(0.0) * areas[i];
        let out = right + left;
        if out > 0.0 {
            limit = limit.min(grid.volumes()[i] / out);
        }
    }
    limit
}

pub fn adapt_dt(state: &State, cfg: &StepperConfig) -> f64 {
    let limit = cfg.cfl * positivity_limit(state.grid(), state.v.values());
    let dt = limit.clamp(cfg.dt_min, cfg.dt_max);
    dt.min(cfg.t_end - state.t).max(0.0)
}

/// One IMEX step of size `state.dt`. If the updated `v` makes the transport
/// step unsafe, the step is retried with a smaller `dt` (never below
/// `cfg.dt_min`).
pub fn step(state: &State, cfg: &StepperConfig, solver: &HelmholtzSolver) -> Result<State> {
    if state.status != Status::Running {
        return Err(Error::Numerical(format!(
            "cannot step a run with status {}",
            state.status.label()
        )));
    }
    let grid = state.grid().clone();
    let w = solver.solve(&state.u)?;
    let mut dt = state.dt;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveDt(dt));
    }
    let mut attempts = 0;
    let (v_new, u_new) = loop {
        let v_new = advance_v(&grid, state.v.values(), w.values(), dt);
        let limit = positivity_limit(&grid, &v_new);
        if dt > limit && dt > cfg.dt_min && attempts < 8 {
            dt = (cfg.cfl * limit).max(cfg.dt_min);
            attempts += 1;
            continue;
        }
        let u_new = advance_u(&grid, state.u.values(), &v_new, dt);
        break (v_new, u_new);
    };

    let u = RadialField::new(grid.clone(), u_new)?;
    let v = RadialField::new(grid, v_new)?;
    let status = if u.has_nan() || v.has_nan() || u.min() < 0.0 {
        Status::Stalled
    } else {
        Status::Running
    };
    Ok(State {
        t: state.t + dt,
        step: state.step + 1,
        u,
        v,
        dt,
        status,
        recent_sup: state.recent_sup.clone(),
    })
}

fn advance_v(grid: &Arc<Grid>, v: &[f64], w: &[f64], dt: f64) -> Vec<f64> {
    let op = ShiftedOperator::new(grid.clone(), 1.0 + dt, dt);
    let rhs: Vec<f64> = v.iter().zip(w).map(|(v, w)| v + dt * w).collect();
    op.solve_values(&rhs)
}

fn advance_u(grid: &Arc<Grid>, u: &[f64], v_new: &[f64], dt: f64) -> Vec<f64> {
    let flux = flux_values(grid, u, v_new);
    let div = divergence(grid, &flux);
    let rhs: Vec<f64> = u.iter().zip(div).map(|(u, d)| u - dt * d).collect();
    ShiftedOperator::new(grid.clone(), 1.0, dt).solve_values(&rhs)
}

/// Updates the stagnation history and classifies the state.
pub fn detect_blowup(state: &mut State, cfg: &StepperConfig, sup0: f64) -> Status {
    if state.status == Status::Stalled || state.u.has_nan() {
        return Status::Stalled;
    }
    let sup = sup_norm(&state.u);
    if sup >= cfg.blowup_factor * sup0 {
        return Status::BlownUp(state.t);
    }
    let window = 10.0 * cfg.dt_min;
    state.recent_sup.push_back((state.t, sup));
    while let Some(&(t0, _)) = state.recent_sup.front() {
        if state.t - t0 > window {
            state.recent_sup.pop_front();
        } else {
            break;
        }
    }
    if state.dt <= cfg.dt_min {
        let oldest = state
            .recent_sup
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::INFINITY, f64::min);
        if sup >= 2.0 * oldest {
            return Status::BlownUp(state.t);
        }
    }
    if state.t >= cfg.t_end * (1.0 - 1e-14) {
        return Status::Completed;
    }
    if state.step >= cfg.max_steps {
        return Status::Stalled;
    }
    Status::Running
}

/// One diagnostics record.
#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    pub dt: f64,
    pub step: usize,
    pub mass: f64,
    pub mass_v: f64,
    pub mass_w: f64,
    pub sup_u: f64,
    pub energy: EnergyReport,
    /// NaN on the first sample.
    pub identity_residual: f64,
}

impl Sample {
    pub const CSV_HEADER: &'static str = "t,dt,mass,sup_u,F,D,identity_residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.t,
            self.dt,
            self.mass,
            self.sup_u,
            self.energy.energy,
            self.energy.dissipation,
            self.identity_residual
        )
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub status: Status,
    pub t_final: f64,
    pub steps: usize,
    pub peak_sup: f64,
    pub initial_energy: f64,
    pub min_energy: f64,
}

/// Computes a diagnostics sample for `state`, chaining the identity residual
/// from `previous`.
pub fn sample_state(
    state: &State,
    solver: &HelmholtzSolver,
    previous: Option<&Sample>,
) -> Result<Sample> {
    let w = solver.solve(&state.u)?;
    let energy = energy_with_w(&state.u, &state.v, &w, solver)?;
    let identity_residual = match previous {
        Some(p) if state.t > p.t => identity_residual(p.t, &p.energy, state.t, &energy)?,
        _ => f64::NAN,
    };
    Ok(Sample {
        t: state.t,
        dt: state.dt,
        step: state.step,
        mass: integrate(&state.u),
        mass_v: integrate(&state.v),
        mass_w: integrate(&w),
        sup_u: sup_norm(&state.u),
        energy,
        identity_residual,
    })
}

/// Runs until completion, blowup or stall. `sink` sees every emitted sample
/// together with the state it was computed from.
pub fn run(
    u0: RadialField,
    v0: RadialField,
    cfg: &StepperConfig,
    mut sink: impl FnMut(&Sample, &State) -> Result<()>,
) -> Result<(State, RunSummary)> {
    cfg.validate()?;
    if u0.min() < 0.0 {
        return Err(Error::Admissibility(
            "initial density has negative entries".into(),
        ));
    }
    let solver = HelmholtzSolver::new(u0.grid().clone());
    let sup0 = sup_norm(&u0);
    if !(sup0 > 0.0) {
        return Err(Error::Admissibility(
            "initial density vanishes identically".into(),
        ));
    }
    let mut state = State::new(u0, v0, cfg.dt_init)?;
    let mut last = sample_state(&state, &solver, None)?;
    sink(&last, &state)?;
    let mut summary = RunSummary {
        status: Status::Running,
        t_final: 0.0,
        steps: 0,
        peak_sup: sup0,
        initial_energy: last.energy.energy,
        min_energy: last.energy.energy,
    };

    loop {
        state.dt = adapt_dt(&state, cfg);
        if !(state.dt > 0.0) {
            state.status = Status::Completed;
        } else {
            state = step(&state, cfg, &solver)?;
            state.status = detect_blowup(&mut state, cfg, sup0);
        }
        if state.status != Status::Stalled {
            summary.peak_sup = summary.peak_sup.max(sup_norm(&state.u));
        }
        let done = state.status != Status::Running;
        if done || state.step % cfg.output_every == 0 {
            if state.status == Status::Stalled {
                break;
            }
            let s = sample_state(&state, &solver, Some(&last))?;
            summary.min_energy = summary.min_energy.min(s.energy.energy);
            sink(&s, &state)?;
            last = s;
        }
        if done {
            break;
        }
    }
    summary.status = state.status;
    summary.t_final = state.t;
    summary.steps = state.step;
    Ok((state, summary))
}
