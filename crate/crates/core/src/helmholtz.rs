//! Neumann screened-Poisson solve `-Δw + w = u` on the radial mesh.
//!
//! The operator family `alpha I - beta Δ_h` is assembled with rows scaled by
//! the cell volumes, which makes the matrix symmetric with non-positive
//! off-diagonals and strictly dominant diagonal (an M-matrix for
//! `alpha, beta > 0`). Direct Thomas elimination is then stable without
//! pivoting.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{fault_injection, laplacian_values, Grid, RadialField};

/// Factorized `alpha I - beta Δ_h`.
#[derive(Clone, Debug)]
pub struct ShiftedOperator {
    grid: Arc<Grid>,
    alpha: f64,
    beta: f64,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    // Thomas factors: modified upper diagonal and pivots.
    upper_mod: Vec<f64>,
    pivots: Vec<f64>,
}

impl ShiftedOperator {
    pub fn new(grid: Arc<Grid>, alpha: f64, beta: f64) -> Self {
        let n = grid.cells();
        let sign = fault_injection::laplacian_sign();
        // conductances A_{i}/d_{i} on interior faces
        let cond: Vec<f64> = (0..=n)
            .map(|i| {
                if i == 0 || i == n {
                    0.0
                } else {
                    sign * beta * grid.areas()[i] / grid.spacing()[i]
                }
            })
            .collect();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            diag[i] = alpha * grid.volumes()[i] + cond[i] + cond[i + 1];
            lower[i] = -cond[i];
            upper[i] = -cond[i + 1];
        }
        // Pivots are accumulated through their excess over the next
        // conductance, e_i = p_i - c_{i+1} = alpha V_i + c_i e_{i-1} / p_{i-1},
        // which avoids cancellation where conductances dwarf the volumes.
        let mut upper_mod = vec![0.0; n];
        let mut pivots = vec![0.0; n];
        let mut excess = alpha * grid.volumes()[0];
        pivots[0] = excess + cond[1];
        upper_mod[0] = upper[0] / pivots[0];
        for i in 1..n {
            excess = alpha * grid.volumes()[i] + cond[i] * excess / pivots[i - 1];
            pivots[i] = excess + cond[i + 1];
            upper_mod[i] = upper[i] / pivots[i];
        }
        Self {
            grid,
            alpha,
            beta,
            lower,
            diag,
            upper,
            upper_mod,
            pivots,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Volume-scaled tridiagonal bands `(lower, diag, upper)`.
    pub fn bands(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.lower, &self.diag, &self.upper)
    }

    /// Solves `(alpha I - beta Δ_h) x = rhs`.
    pub fn solve_values(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.grid.cells();
        let vol = self.grid.volumes();
        let mut x = vec![0.0; n];
        x[0] = vol[0] * rhs[0] / self.pivots[0];
        for i in 1..n {
            x[i] = (vol[i] * rhs[i] - self.lower[i] * x[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper_mod[i] * x[i + 1];
        }
        x
    }

    pub fn apply_values(&self, x: &[f64]) -> Vec<f64> {
        let lap = laplacian_values(&self.grid, x);
        x.iter()
            .zip(lap)
            .map(|(x, l)| self.alpha * x - self.beta * l)
            .collect()
    }

    pub fn solve(&self, rhs: &RadialField) -> Result<RadialField> {
        self.check(rhs)?;
        RadialField::new(self.grid.clone(), self.solve_values(rhs.values()))
    }

    pub fn apply(&self, x: &RadialField) -> Result<RadialField> {
        self.check(x)?;
        RadialField::new(self.grid.clone(), self.apply_values(x.values()))
    }

    fn check(&self, f: &RadialField) -> Result<()> {
        if Arc::ptr_eq(f.grid(), &self.grid) || **f.grid() == *self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// `w = (-Δ_N + 1)^{-1} u`, factorized once per grid.
#[derive(Clone, Debug)]
pub struct HelmholtzSolver {
    op: ShiftedOperator,
}

impl HelmholtzSolver {
    pub fn new(grid: Arc<Grid>) -> Self {
        Self {
            op: ShiftedOperator::new(grid, 1.0, 1.0),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.op.grid()
    }

    pub fn operator(&self) -> &ShiftedOperator {
        &self.op
    }

    pub fn solve(&self, u: &RadialField) -> Result<RadialField> {
        self.op.solve(u)
    }

    /// `(I - Δ_h) v`, the same discrete operator the solve inverts.
    pub fn apply(&self, v: &RadialField) -> Result<RadialField> {
        self.op.apply(v)
    }

    /// `max_i |u_i - ((I - Δ_h) w)_i|`.
    pub fn residual(&self, u: &RadialField, w: &RadialField) -> Result<f64> {
        u.check_grid(w)?;
        let applied = self.op.apply(w)?;
        Ok(u.values()
            .iter()
            .zip(applied.values())
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs())))
    }
}
