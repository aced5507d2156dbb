//! Self-check scorecard: conservation, equilibrium, manufactured solution,
//! energy identity, entropy bound, family and blowup checks.
//!
//! All checks run on the calling thread, so the Laplacian fault switch in
//! [`crate::grid::fault_injection`] reaches every one of them.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::dynamics::{adapt_dt, run, step, State, Status, StepperConfig};
use crate::energetics::compute_energy;
use crate::error::Result;
use crate::grid::{integrate, integrate_values, Grid, Mapping, RadialField};
use crate::helmholtz::HelmholtzSolver;
use crate::initial_data::{
    base_data, build_family, eta_star, l1_norm, w22_norm, BaseKind, FamilyParams,
};
use crate::probes::{
    entropy_bound_entry, probe_fd_ratio, probe_odi, probe_pointwise_v, probe_pointwise_w,
    ProbeConfig, TrajectoryPoint,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag}  {:<22} {:>7.2}s  {}",
            self.name, self.seconds, self.detail
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Max-norm error of the Helmholtz solve for `w = cos(pi r)` in `n = 5`.
pub fn manufactured_error(cells: usize) -> Result<f64> {
    let g = Grid::new(5, 1.0, cells)?;
    let u = g.sample(|r| {
        let lap = -PI * PI * (PI * r).cos() - 4.0 / r * PI * (PI * r).sin();
        (PI * r).cos() - lap
    });
    let w = HelmholtzSolver::new(g.clone()).solve(&u)?;
    Ok(w.values()
        .iter()
        .zip(g.centers())
        .map(|(w, r)| (w - (PI * r).cos()).abs())
        .fold(0.0, f64::max))
}

fn check_manufactured(level: Level) -> Result<(bool, String)> {
    let mut sizes = vec![200, 400];
    if level == Level::Full {
        sizes.push(800);
    }
    let errs = sizes
        .iter()
        .map(|&n| manufactured_error(n))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = errs.windows(2).map(|p| p[0] / p[1]).collect();
    let ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    Ok((ok, format!("error ratios {ratios:.3?}")))
}

/// Random smooth positive pair: `1 + sum a_k cos(k pi r)` with `sum |a_k| < 1`.
pub fn random_smooth_pair(grid: &std::sync::Arc<Grid>, seed: u64) -> (RadialField, RadialField) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut coeffs = |scale: f64| -> Vec<f64> {
        (1..=4)
            .map(|_| scale * rng.random_range(-0.2..0.2))
            .collect()
    };
    let (a, b) = (coeffs(1.0), coeffs(2.0));
    let series = |c: &[f64], r: f64| {
        1.0 + c
            .iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64 * PI * r).cos())
            .sum::<f64>()
    };
    let u = grid.sample(|r| series(&a, r));
    let v = grid.sample(|r| series(&b, r));
    (u, v)
}

fn check_conservation(level: Level, entropy_violations: &mut usize) -> Result<(bool, String)> {
    let steps = if level == Level::Full { 10_000 } else { 1_000 };
    let g = Grid::new(5, 1.0, 400)?;
    let solver = HelmholtzSolver::new(g.clone());
    let (u, v) = random_smooth_pair(&g, 7);
    let mut cfg = StepperConfig::for_grid(&g, 1e9);
    cfg.dt_max = 1e-3;
    let mut state = State::new(u, v, cfg.dt_max)?;
    let m0 = integrate(&state.u);
    let (mut drift, mut gap) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        // conservation is judged on its own; positivity belongs to other checks
        state.status = Status::Running;
        state.dt = adapt_dt(&state, &cfg);
        state = step(&state, &cfg, &solver)?;
        let m = integrate(&state.u);
        let w = solver.solve(&state.u)?;
        // errors are measured against ∫|u|, which equals ∫u for positive data
        let scale = integrate(&state.u.map(f64::abs));
        drift = drift.max((m - m0).abs() / scale);
        gap = gap.max((integrate_values(&g, w.values()) - m).abs() / scale);
        if !drift.is_finite() || !gap.is_finite() {
            break;
        }
    }
    let rep = compute_energy(&state.u, &state.v, &solver)?;
    if entropy_bound_entry(&g, rep.energy, rep.mixed_term, state.t).hard_pass != Some(true) {
        *entropy_violations += 1;
    }
    Ok((
        drift <= 1e-9 && gap <= 1e-12,
        format!("{steps} steps: mass drift {drift:.2e}, |∫w-∫u| {gap:.2e}"),
    ))
}

fn check_equilibrium(entropy_violations: &mut usize) -> Result<(bool, String)> {
    let g = Grid::new(5, 1.0, 400)?;
    let cfg = StepperConfig {
        output_every: 1,
        max_steps: 1000,
        ..StepperConfig::for_grid(&g, 0.5)
    };
    let mut change = 0.0f64;
    let mut diss = 0.0f64;
    let mut f_err = 0.0f64;
    let half_vol = 0.5 * g.ball_volume();
    let mut prev: Option<Vec<f64>> = None;
    let (_, summary) = run(g.constant(1.0), g.constant(1.0), &cfg, |s, st| {
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(st.u.values()) {
                change = change.max((a - b).abs());
            }
        }
        prev = Some(st.u.values().to_vec());
        diss = diss.max(s.energy.dissipation);
        f_err = f_err.max((s.energy.energy + half_vol).abs());
        if entropy_bound_entry(&g, s.energy.energy, s.energy.mixed_term, s.t).hard_pass
            != Some(true)
        {
            *entropy_violations += 1;
        }
        Ok(())
    })?;

    // small perturbations of the unit state decay
    let u = g.sample(|r| 1.0 + 1e-3 * (PI * r).cos());
    let amp = |f: &RadialField| {
        let mean = integrate(f) / g.ball_volume();
        f.values()
            .iter()
            .fold(0.0f64, |m, x| m.max((x - mean).abs()))
    };
    let a0 = amp(&u);
    let cfg = StepperConfig {
        dt_max: 0.01,
        dt_init: 0.01,
        ..StepperConfig::for_grid(&g, 1.0)
    };
    let (state, _) = run(u, g.constant(1.0), &cfg, |_, _| Ok(()))?;
    let a1 = amp(&state.u);
    let decays = state.status == Status::Completed && a1 < a0;
    Ok((
        summary.status == Status::Completed
            && change <= 1e-12
            && diss <= 1e-12
            && f_err <= 1e-9
            && decays,
        format!(
            "step change {change:.1e}, D {diss:.1e}, |F+|Ω|/2| {f_err:.1e}, perturbation {a0:.1e} -> {a1:.1e}"
        ),
    ))
}

/// Max identity residual of a fixed-step run on the smooth test data.
pub fn identity_residual_max(cells: usize, dt: f64, t_end: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    let g = Grid::new(5, 1.0, cells)?;
    let cfg = StepperConfig {
        cfl: 1.0,
        dt_init: dt,
        dt_min: dt,
        dt_max: dt,
        t_end,
        blowup_factor: 1e6,
        output_every: 1,
        max_steps: 10_000_000,
    };
    let mut worst = 0.0f64;
    let mut pairs = Vec::new();
    run(
        g.sample(|r| 1.0 + 0.5 * (PI * r).cos()),
        g.constant(1.0),
        &cfg,
        |s, _| {
            if s.identity_residual.is_finite() {
                worst = worst.max(s.identity_residual);
            }
            pairs.push((s.energy.energy, s.energy.mixed_term));
            Ok(())
        },
    )?;
    Ok((worst, pairs))
}

fn check_energy_identity(entropy_violations: &mut usize) -> Result<(bool, String)> {
    let g = Grid::new(5, 1.0, 400)?;
    let (r1, l1) = identity_residual_max(400, 0.01, 0.5)?;
    let (r2, l2) = identity_residual_max(400, 0.005, 0.5)?;
    for (f, m) in l1.into_iter().chain(l2) {
        if entropy_bound_entry(&g, f, m, 0.0).hard_pass != Some(true) {
            *entropy_violations += 1;
        }
    }
    let ratio = r1 / r2;
    Ok((
        (1.6..=2.4).contains(&ratio),
        format!("residual {r1:.3e} -> {r2:.3e}, ratio {ratio:.3}"),
    ))
}

/// Graded mesh used by the family and blowup checks.
pub fn family_grid(cells: usize) -> Result<std::sync::Arc<Grid>> {
    Grid::with_mapping(5, 1.0, cells, Mapping::Sinh { stretch: 30.0 })
}

fn check_family(entropy_violations: &mut usize) -> Result<(bool, String)> {
    let g = family_grid(2048)?;
    let solver = HelmholtzSolver::new(g.clone());
    let (u0, v0) = base_data(&BaseKind::Constant(1.0), &g)?;
    let star = eta_star(1.0, 1.5, 5, g.ball_volume(), 1.0)?;
    let m0 = integrate(&u0);
    let mut ok = true;
    let mut energies = Vec::new();
    let mut w22 = Vec::new();
    let mut l1 = Vec::new();
    for d in [4.0, 8.0, 16.0, 32.0] {
        let m = build_family(
            &u0,
            &v0,
            FamilyParams {
                gamma: 1.5,
                eta: star / d,
            },
        )?;
        ok &= (integrate(&m.u) - m0).abs() <= 1e-12 * m0 && m.u.min() > 0.0;
        let rep = compute_energy(&m.u, &m.v, &solver)?;
        if entropy_bound_entry(&g, rep.energy, rep.mixed_term, star / d).hard_pass != Some(true) {
            *entropy_violations += 1;
        }
        energies.push(rep.energy);
        w22.push(w22_norm(&m.v.axpby(1.0, &v0, -1.0)?));
        l1.push(l1_norm(&m.u.axpby(1.0, &u0, -1.0)?));
    }
    let dec = |v: &[f64]| v.windows(2).all(|p| p[1] < p[0]);
    ok &= dec(&energies) && dec(&w22) && dec(&l1) && energies[3] < energies[0] - 1.0;
    Ok((ok, format!("F {energies:.2?}")))
}

/// Blowup run on the graded mesh; returns `(t_b, fd_ratio, odi slope)`.
pub fn blowup_run(cells: usize, divisor: f64) -> Result<(Status, f64, f64)> {
    let g = family_grid(cells)?;
    let (u0, v0) = base_data(&BaseKind::Constant(1.0), &g)?;
    let star = eta_star(1.0, 1.5, 5, g.ball_volume(), 1.0)?;
    let m = build_family(
        &u0,
        &v0,
        FamilyParams {
            gamma: 1.5,
            eta: star / divisor,
        },
    )?;
    let cfg = StepperConfig {
        output_every: 1,
        ..StepperConfig::for_grid(&g, 1.0)
    };
    let mut traj = Vec::new();
    let (_, summary) = run(m.u, m.v, &cfg, |s, _| {
        traj.push(TrajectoryPoint::from(s));
        Ok(())
    })?;
    let theta = 5.0 / 7.0;
    let fd = probe_fd_ratio(&traj, theta)?.implied_c;
    let slope = probe_odi(&traj, theta)
        .map(|(f, _)| f.slope)
        .unwrap_or(f64::NAN);
    Ok((summary.status, fd, slope))
}

fn check_blowup(level: Level) -> Result<(bool, String)> {
    let grids: &[usize] = if level == Level::Full {
        &[1024, 2048]
    } else {
        &[1024]
    };
    let mut ok = true;
    let mut detail = String::new();
    let mut tbs = Vec::new();
    for &n in grids {
        let mut row = Vec::new();
        for d in [16.0, 32.0] {
            let (status, fd, slope) = blowup_run(n, d)?;
            let tb = match status {
                Status::BlownUp(t) => t,
                _ => {
                    ok = false;
                    f64::NAN
                }
            };
            // slope threshold 1/theta - 0.2 with theta = 5/7
            ok &= fd.is_finite() && slope >= 7.0 / 5.0 - 0.2;
            row.push(tb);
            detail.push_str(&format!("N={n} d={d}: t_b {tb:.3e} slope {slope:.2}; "));
        }
        ok &= row[1] <= row[0];
        tbs.push(row);
    }
    if tbs.len() == 2 {
        for (a, b) in tbs[0].iter().zip(&tbs[1]) {
            ok &= ((b - a) / b).abs() < 0.2;
        }
    }
    Ok((ok, detail.trim_end().to_string()))
}

/// Implied pointwise constants for a concentrated bump on `N, 2N, 4N` cells;
/// returns the largest max/min spread over the three levels.
pub fn refinement_spread(base: usize) -> Result<f64> {
    let mut w_c = Vec::new();
    let mut v_c = Vec::new();
    for k in 0..3 {
        let g = Grid::new(5, 1.0, base << k)?;
        let solver = HelmholtzSolver::new(g.clone());
        let u = g.sample(|r| 1.0 + 20.0 * (-(r / 0.1).powi(2)).exp());
        let v = solver.solve(&u)?;
        let m = integrate(&u);
        let cfg = ProbeConfig::for_grid(&g);
        w_c.push(probe_pointwise_w(&solver.solve(&u)?, m, 0.0)?.implied_c);
        v_c.push(probe_pointwise_v(&v, &cfg, m, w22_norm(&v), 0.0)?.implied_c);
    }
    let spread = |c: &[f64]| {
        c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            / c.iter().cloned().fold(f64::INFINITY, f64::min)
            - 1.0
    };
    Ok(spread(&w_c).max(spread(&v_c)))
}

fn check_refinement() -> Result<(bool, String)> {
    let s = refinement_spread(200)?;
    Ok((
        s < 0.2,
        format!(
            "pointwise constants vary {:.2}% over N = 200, 400, 800",
            100.0 * s
        ),
    ))
}

/// Runs the scorecard at `level`.
pub fn run_checks(level: Level) -> Vec<Check> {
    let mut entropy_violations = 0usize;
    let mut checks = vec![
        timed("helmholtz_manufactured", || check_manufactured(level)),
        timed("conservation", || {
            check_conservation(level, &mut entropy_violations)
        }),
        timed("equilibrium", || check_equilibrium(&mut entropy_violations)),
        timed("energy_identity", || {
            check_energy_identity(&mut entropy_violations)
        }),
        timed("family", || check_family(&mut entropy_violations)),
        timed("blowup", || check_blowup(level)),
    ];
    if level == Level::Full {
        checks.push(timed("refinement", check_refinement));
    }
    checks.push(Check {
        name: "entropy_bound",
        passed: entropy_violations == 0,
        detail: format!("{entropy_violations} violations"),
        seconds: 0.0,
    });
    checks
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}
