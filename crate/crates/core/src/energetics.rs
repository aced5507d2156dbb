//! Lyapunov functional, dissipation rate and the auxiliary fields `f`, `g`.
//!
//! `F = ∫ u log u - ∫ u v + 1/2 ∫ |(I - Δ_h) v|^2` and
//! `D = ∫ |∇f|^2 + ∫ f^2 + ∫ g^2` with `f = (I - Δ_h) v - w` and
//! `g = u_r / sqrt(u) - sqrt(u) v_r` sampled on interior faces.
//! Cell quantities use the midpoint rule, face quantities the weights
//! `A_{i} d_{i}` of [`Grid::face_weight`].

use crate::error::{Error, Result};
use crate::grid::{
    compensated_sum, face_average, gradient_values, integrate, integrate_faces, Grid, RadialField,
};
use crate::helmholtz::HelmholtzSolver;

/// Floor applied inside the logarithm only: `0 log 0 := 0`.
pub const LOG_FLOOR: f64 = 1e-300;

/// Lower bound on the face average of `u` used in `g`.
pub const G_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    pub dissipation: f64,
    pub entropy_term: f64,
    pub mixed_term: f64,
    pub quad_term: f64,
    pub grad_f_term: f64,
    pub f_term: f64,
    pub g_term: f64,
    /// Faces where the average of `u` fell below [`G_FLOOR`].
    pub regularized_faces: usize,
}

/// `f = (I - Δ_h) v - w` with `w` the Helmholtz solve of `u`.
pub fn compute_f(
    u: &RadialField,
    v: &RadialField,
    solver: &HelmholtzSolver,
) -> Result<RadialField> {
    u.check_grid(v)?;
    let w = solver.solve(u)?;
    f_from_w(v, &w, solver)
}

pub fn f_from_w(v: &RadialField, w: &RadialField, solver: &HelmholtzSolver) -> Result<RadialField> {
    let mut f = solver.apply(v)?;
    for (fi, wi) in f.values_mut().iter_mut().zip(w.values()) {
        *fi -= wi;
    }
    Ok(f)
}

/// Face-sampled `g`; returns the values (zero at both boundary faces) and
/// the number of regularized faces.
pub fn compute_g(u: &RadialField, v: &RadialField) -> Result<(Vec<f64>, usize)> {
    u.check_grid(v)?;
    Ok(g_values(u.grid(), u.values(), v.values()))
}

fn g_values(grid: &Grid, u: &[f64], v: &[f64]) -> (Vec<f64>, usize) {
    let du = gradient_values(grid, u);
    let dv = gradient_values(grid, v);
    let ubar = face_average(u);
    let n = grid.cells();
    let mut g = vec![0.0; n + 1];
    let mut regularized = 0;
    for i in 1..n {
        let mut avg = ubar[i];
        if avg <= G_FLOOR {
            avg = G_FLOOR;
            regularized += 1;
        }
        let s = avg.sqrt();
        g[i] = du[i] / s - s * dv[i];
    }
    (g, regularized)
}

pub fn entropy_density(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        u * u.max(LOG_FLOOR).ln()
    }
}

pub fn compute_energy(
    u: &RadialField,
    v: &RadialField,
    solver: &HelmholtzSolver,
) -> Result<EnergyReport> {
    u.check_grid(v)?;
    let w = solver.solve(u)?;
    energy_with_w(u, v, &w, solver)
}

/// As [`compute_energy`] with a precomputed `w = solve(u)`.
pub fn energy_with_w(
    u: &RadialField,
    v: &RadialField,
    w: &RadialField,
    solver: &HelmholtzSolver,
) -> Result<EnergyReport> {
    let grid = u.grid();
    let n = grid.cells();
    let entropy_term = integrate(&u.map(entropy_density));
    let mixed_term = integrate(&u.product(v)?);
    let lv = solver.apply(v)?;
    let quad_term = 0.5 * integrate(&lv.map(|x| x * x));

    let f = f_from_w(v, w, solver)?;
    let df = gradient_values(grid, f.values());
    let grad_f_term = integrate_faces(grid, &df.iter().map(|x| x * x).collect::<Vec<_>>(), n);
    let f_term = integrate(&f.map(|x| x * x));
    let (g, regularized_faces) = g_values(grid, u.values(), v.values());
    let g_term = integrate_faces(grid, &g.iter().map(|x| x * x).collect::<Vec<_>>(), n);

    Ok(EnergyReport {
        energy: compensated_sum([entropy_term, -mixed_term, quad_term]),
        dissipation: grad_f_term + f_term + g_term,
        entropy_term,
        mixed_term,
        quad_term,
        grad_f_term,
        f_term,
        g_term,
        regularized_faces,
    })
}

/// Discrete residual of `dF/dt + D = 0` between two samples, with the
/// dissipation averaged by the trapezoid rule and normalized by
/// `1 + |F_before|`.
pub fn identity_residual(
    t_before: f64,
    before: &EnergyReport,
    t_after: f64,
    after: &EnergyReport,
) -> Result<f64> {
    let dt = t_after - t_before;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveDt(dt));
    }
    let rate = (after.energy - before.energy) / dt;
    Ok((rate + 0.5 * (before.dissipation + after.dissipation)).abs() / (1.0 + before.energy.abs()))
}
