//! Base initial data and the concentrated low-energy family `(u_eta, v_eta)`.
//!
//! For a positive radial base pair `(u0, v0)`, `gamma > 1` and small `eta`,
//!
//! ```text
//! u_eta = u0 + L^{2 gamma} eta^{-n/2-2} phi(r/eta) - (mass corrector)
//! v_eta = v0 + L^{-gamma}  eta^{2-n/2}  phi(r/eta),      L = ln(1/eta)
//! ```
//!
//! with `phi` the standard unit-mass mollifier. The corrector is the
//! constant that restores `sum u_eta V = sum u0 V` exactly on the mesh.

use std::path::Path;
use std::sync::Arc;

use crate::energetics::{compute_energy, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{
    compensated_sum, gradient_values, integrate, integrate_faces, laplacian_values, Grid,
    RadialField,
};
use crate::helmholtz::HelmholtzSolver;
use crate::io::read_snapshot;

/// Minimum number of cells that must lie inside `r < eta`.
pub const MIN_BUMP_CELLS: usize = 8;

/// `phi(r) = c_n exp(-1/(1 - r^2))` on `r < 1`, normalized to unit mass in `R^n`.
#[derive(Clone, Copy, Debug)]
pub struct MollifierSpec {
    pub dim: usize,
    pub norm: f64,
}

fn bump_profile(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

impl MollifierSpec {
    pub fn new(dim: usize) -> Self {
        // composite Simpson; the integrand is flat to all orders at r = 1
        let m = 20_000;
        let h = 1.0 / m as f64;
        let f = |r: f64| bump_profile(r) * r.powi(dim as i32 - 1);
        let mut acc = f(0.0) + f(1.0);
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * h);
        }
        let mass = crate::grid::unit_sphere_area(dim) * acc * h / 3.0;
        Self {
            dim,
            norm: 1.0 / mass,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.norm * bump_profile(r)
    }
}

/// `psi(eta) = eta^{n/2-2} ln(1/eta)^{2 gamma}`.
pub fn psi(eta: f64, gamma: f64, dim: usize) -> f64 {
    eta.powf(dim as f64 / 2.0 - 2.0) * (1.0 / eta).ln().powf(2.0 * gamma)
}

/// Largest `eta_star <= min(1, R)` such that
/// `sup_{(0, eta_star)} psi < min(volume * iota, 1/2)`.
///
/// `psi` increases up to `ln(1/eta) = 2 gamma / (n/2 - 2)` and decreases
/// after, so its running supremum is `psi(min(eta, eta_peak))`; the crossing
/// is found by bisection in `ln eta`.
pub fn eta_star(iota: f64, gamma: f64, dim: usize, volume: f64, radius: f64) -> Result<f64> {
    eta_star_with_iterations(iota, gamma, dim, volume, radius, 200)
}

pub fn eta_star_with_iterations(
    iota: f64,
    gamma: f64,
    dim: usize,
    volume: f64,
    radius: f64,
    iterations: usize,
) -> Result<f64> {
    let mut problems = Vec::new();
    if dim < 5 {
        problems.push(format!("the low-energy family needs n >= 5, got {dim}"));
    }
    if !(gamma > 1.0) {
        problems.push(format!("gamma = {gamma} must exceed 1"));
    }
    if !(iota > 0.0) {
        problems.push(format!("iota = {iota} must be positive"));
    }
    if !(volume > 0.0 && radius > 0.0) {
        problems.push("volume and radius must be positive".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let target = (volume * iota).min(0.5);
    let upper = radius.min(1.0);
    let peak = (-2.0 * gamma / (dim as f64 / 2.0 - 2.0)).exp();
    let running_sup = |eta: f64| psi(eta.min(peak), gamma, dim);
    if running_sup(upper) < target {
        return Ok(upper);
    }
    let mut lo = f64::MIN_POSITIVE.ln();
    let mut hi = upper.min(peak).ln();
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if running_sup(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.exp())
}

/// Parameters of one member of the family.
#[derive(Clone, Copy, Debug)]
pub struct FamilyParams {
    pub gamma: f64,
    pub eta: f64,
}

#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub eta: f64,
    pub u: RadialField,
    pub v: RadialField,
    /// Constant subtracted from `u` to restore the base mass.
    pub mass_corrector: f64,
}

/// Builds `(u_eta, v_eta)` from a positive base pair.
pub fn build_family(
    u0: &RadialField,
    v0: &RadialField,
    params: FamilyParams,
) -> Result<FamilyMember> {
    u0.check_grid(v0)?;
    let grid = u0.grid().clone();
    let dim = grid.dim();
    let FamilyParams { gamma, eta } = params;
    let iota = u0.min();
    if !(iota > 0.0) || !(v0.min() > 0.0) {
        return Err(Error::Admissibility(
            "base pair must be strictly positive".into(),
        ));
    }
    let star = eta_star(iota, gamma, dim, grid.ball_volume(), grid.radius())?;
    if !(eta > 0.0 && eta < star) {
        return Err(Error::Admissibility(format!(
            "eta = {eta:e} must lie in (0, eta_star = {star:e})"
        )));
    }
    if eta >= grid.radius() {
        return Err(Error::Admissibility(format!(
            "eta = {eta:e} must be below R"
        )));
    }
    let cells = grid.cells_inside(eta);
    if cells < MIN_BUMP_CELLS {
        return Err(Error::Resolution {
            eta,
            cells,
            needed: MIN_BUMP_CELLS,
        });
    }

    let phi = MollifierSpec::new(dim);
    let log_inv = (1.0 / eta).ln();
    let half = dim as f64 / 2.0;
    let u_amp = log_inv.powf(2.0 * gamma) * eta.powf(-half - 2.0);
    let v_amp = log_inv.powf(-gamma) * eta.powf(2.0 - half);
    let shape: Vec<f64> = grid.centers().iter().map(|&r| phi.value(r / eta)).collect();

    let bump_mass = compensated_sum(
        shape
            .iter()
            .zip(grid.volumes())
            .map(|(s, vol)| u_amp * s * vol),
    );
    let total_volume = compensated_sum(grid.volumes().iter().copied());
    let corrector = bump_mass / total_volume;

    let u: Vec<f64> = u0
        .values()
        .iter()
        .zip(&shape)
        .map(|(u, s)| u + u_amp * s - corrector)
        .collect();
    let v: Vec<f64> = v0
        .values()
        .iter()
        .zip(&shape)
        .map(|(v, s)| v + v_amp * s)
        .collect();
    let u = RadialField::new(grid.clone(), u)?;
    if !(u.min() > 0.0) {
        return Err(Error::Admissibility(format!(
            "u_eta has minimum {:e}; eta = {eta:e} is too large for this grid",
            u.min()
        )));
    }
    Ok(FamilyMember {
        eta,
        u,
        v: RadialField::new(grid, v)?,
        mass_corrector: corrector,
    })
}

/// Discrete `W^{2,2}` norm: `(|f|^2 + |∇f|^2 + |Δ_h f|^2)^{1/2}` in `L^2`.
pub fn w22_norm(field: &RadialField) -> f64 {
    let grid = field.grid();
    let vals = field.values();
    let l2 = integrate(&field.map(|x| x * x));
    let grad: Vec<f64> = gradient_values(grid, vals).iter().map(|x| x * x).collect();
    let grad = integrate_faces(grid, &grad, grid.cells());
    let lap = laplacian_values(grid, vals);
    let lap = compensated_sum(lap.iter().zip(grid.volumes()).map(|(l, v)| l * l * v));
    (l2 + grad + lap).sqrt()
}

pub fn l1_norm(field: &RadialField) -> f64 {
    integrate(&field.map(f64::abs))
}

#[derive(Clone, Debug)]
pub struct FamilyRow {
    pub eta: f64,
    pub energy: EnergyReport,
    pub mass: f64,
    pub min_u: f64,
    pub v_w22_distance: f64,
    pub u_l1_distance: f64,
}

impl FamilyRow {
    pub const CSV_HEADER: &'static str = "eta,F,mass,min_u";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?}",
            self.eta, self.energy.energy, self.mass, self.min_u
        )
    }
}

/// One energy row per `eta`; the members are returned alongside.
pub fn family_energy_scan(
    u0: &RadialField,
    v0: &RadialField,
    gamma: f64,
    etas: &[f64],
    solver: &HelmholtzSolver,
) -> Result<Vec<(FamilyRow, FamilyMember)>> {
    if etas.is_empty() {
        return Err(Error::Config("eta list is empty".into()));
    }
    etas.iter()
        .map(|&eta| {
            let member = build_family(u0, v0, FamilyParams { gamma, eta })?;
            let energy = compute_energy(&member.u, &member.v, solver)?;
            let row = FamilyRow {
                eta,
                energy,
                mass: integrate(&member.u),
                min_u: member.u.min(),
                v_w22_distance: w22_norm(&member.v.axpby(1.0, v0, -1.0)?),
                u_l1_distance: l1_norm(&member.u.axpby(1.0, u0, -1.0)?),
            };
            Ok((row, member))
        })
        .collect()
}

/// Geometric `eta` list `eta_star / 4, eta_star / 8, ...`.
pub fn default_etas(star: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| star / 4.0 / 2f64.powi(k as i32))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaseKind {
    Constant(f64),
    /// `u0 = level + amplitude exp(-(r/width)^2)`, `v0 = level`.
    Bump {
        level: f64,
        amplitude: f64,
        width: f64,
    },
    /// `u` and `v` columns of a snapshot file on the same grid.
    File(std::path::PathBuf),
}

pub fn base_data(kind: &BaseKind, grid: &Arc<Grid>) -> Result<(RadialField, RadialField)> {
    let (u, v) = match kind {
        BaseKind::Constant(c) => (grid.constant(*c), grid.constant(*c)),
        BaseKind::Bump {
            level,
            amplitude,
            width,
        } => {
            if !(*width > 0.0) {
                return Err(Error::Config(format!(
                    "bump width {width} must be positive"
                )));
            }
            (
                grid.sample(|r| level + amplitude * (-(r / width).powi(2)).exp()),
                grid.constant(*level),
            )
        }
        BaseKind::File(path) => load_pair(path, grid)?,
    };
    if !(u.min() > 0.0) || !(v.min() > 0.0) {
        return Err(Error::Admissibility(
            "base data must be strictly positive".into(),
        ));
    }
    Ok((u, v))
}

fn load_pair(path: &Path, grid: &Arc<Grid>) -> Result<(RadialField, RadialField)> {
    let snap = read_snapshot(path)?;
    if snap.r.len() != grid.cells() {
        return Err(Error::GridMismatch);
    }
    for (a, b) in snap.r.iter().zip(grid.centers()) {
        if (a - b).abs() > 1e-12 * b.abs().max(1e-300) {
            return Err(Error::GridMismatch);
        }
    }
    Ok((grid.field(snap.u)?, grid.field(snap.v)?))
}
