//! Cell-centered radial mesh on `(0, R]` with n-dimensional cell volumes.
//!
//! Face `i` sits at radius `r_{i}` (`i = 0..=N`), cell `i` spans
//! `[r_i, r_{i+1}]`. The origin is always a face, never a sample point, so the
//! `(n-1)/r` term of the radial Laplacian never has to be evaluated.
//! All differential operators are in flux form: fluxes across the two
//! boundary faces vanish, so discrete sums telescope exactly.

use std::cell::Cell;
use std::f64::consts::PI;
use std::sync::Arc;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Placement of the faces along `[0, R]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mapping {
    /// Faces at `i * R / N`.
    Uniform,
    /// Faces at `R sinh(a i / N) / sinh(a)`: linear near the origin,
    /// geometric further out. Used to resolve concentrated data.
    Sinh { stretch: f64 },
}

/// Surface area of the unit sphere in `R^n`, `2 pi^{n/2} / Gamma(n/2)`.
pub fn unit_sphere_area(n: usize) -> f64 {
    if n <= 32 {
        // omega_{k+2} = 2 pi omega_k / k, exact to a few ulps
        let (mut k, mut omega) = if n.is_multiple_of(2) {
            (2, 2.0 * PI)
        } else {
            (1, 2.0)
        };
        while k < n {
            omega *= 2.0 * PI / k as f64;
            k += 2;
        }
        return omega;
    }
    let half = n as f64 / 2.0;
    (2f64.ln() + half * PI.ln() - ln_gamma(half)).exp()
}

#[derive(Debug)]
pub struct Grid {
    dim: usize,
    radius: f64,
    cells: usize,
    mapping: Mapping,
    omega: f64,
    faces: Vec<f64>,
    centers: Vec<f64>,
    volumes: Vec<f64>,
    areas: Vec<f64>,
    /// Distance between the centers adjacent to each face; zero on the two
    /// boundary faces.
    spacing: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.radius == other.radius
            && self.cells == other.cells
            && self.mapping == other.mapping
    }
}

impl Grid {
    pub fn new(dim: usize, radius: f64, cells: usize) -> Result<Arc<Self>> {
        Self::with_mapping(dim, radius, cells, Mapping::Uniform)
    }

    pub fn with_mapping(
        dim: usize,
        radius: f64,
        cells: usize,
        mapping: Mapping,
    ) -> Result<Arc<Self>> {
        let mut problems = Vec::new();
        if dim < 2 {
            problems.push(format!("dimension n = {dim} must be at least 2"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            problems.push(format!("radius R = {radius} must be positive"));
        }
        if cells < 4 {
            problems.push(format!("cell count N = {cells} must be at least 4"));
        }
        if let Mapping::Sinh { stretch } = mapping {
            if !(stretch > 0.0 && stretch < 700.0) {
                problems.push(format!("sinh stretch {stretch} must lie in (0, 700)"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }

        let faces: Vec<f64> = match mapping {
            Mapping::Uniform => {
                let h = radius / cells as f64;
                (0..=cells).map(|i| i as f64 * h).collect()
            }
            Mapping::Sinh { stretch } => {
                let denom = stretch.sinh();
                let mut f: Vec<f64> = (0..=cells)
                    .map(|i| radius * (stretch * i as f64 / cells as f64).sinh() / denom)
                    .collect();
                f[cells] = radius;
                f
            }
        };
        let centers: Vec<f64> = match mapping {
            Mapping::Uniform => {
                let h = radius / cells as f64;
                (0..cells).map(|i| (i as f64 + 0.5) * h).collect()
            }
            Mapping::Sinh { .. } => faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
        };

        let omega = unit_sphere_area(dim);
        let n = dim as i32;
        let scale = omega / dim as f64;
        let cumulative: Vec<f64> = faces.iter().map(|r| scale * r.powi(n)).collect();
        let volumes = cumulative.windows(2).map(|w| w[1] - w[0]).collect();
        let areas = faces.iter().map(|r| omega * r.powi(n - 1)).collect();
        let mut spacing = vec![0.0; cells + 1];
        for i in 1..cells {
            spacing[i] = centers[i] - centers[i - 1];
        }

        Ok(Arc::new(Self {
            dim,
            radius,
            cells,
            mapping,
            omega,
            faces,
            centers,
            volumes,
            areas,
            spacing,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn mapping(&self) -> Mapping {
        self.mapping
    }

    /// `omega_n`, the surface area of the unit sphere.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `|B_R| = omega_n R^n / n`.
    pub fn ball_volume(&self) -> f64 {
        self.omega / self.dim as f64 * self.radius.powi(self.dim as i32)
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Nominal spacing `R / N`.
    pub fn h(&self) -> f64 {
        self.radius / self.cells as f64
    }

    pub fn min_width(&self) -> f64 {
        self.faces
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Quadrature weight of interior face `i`: area times center spacing.
    pub fn face_weight(&self, i: usize) -> f64 {
        self.areas[i] * self.spacing[i]
    }

    /// Number of cells whose outer face lies at or inside `rho`.
    pub fn cells_inside(&self, rho: f64) -> usize {
        self.faces[1..].iter().take_while(|&&r| r <= rho).count()
    }

    /// Index of the face nearest to `rho`; the ball `B_rho` is snapped to the
    /// first `k` cells.
    pub fn snap_to_face(&self, rho: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (k, &r) in self.faces.iter().enumerate() {
            let d = (r - rho).abs();
            if d < dist {
                dist = d;
                best = k;
            }
        }
        best
    }

    pub fn field(self: &Arc<Self>, values: Vec<f64>) -> Result<RadialField> {
        RadialField::new(self.clone(), values)
    }

    pub fn constant(self: &Arc<Self>, c: f64) -> RadialField {
        RadialField {
            values: vec![c; self.cells],
            grid: self.clone(),
        }
    }

    pub fn sample(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField {
            values: self.centers.iter().map(|&r| f(r)).collect(),
            grid: self.clone(),
        }
    }
}

/// One scalar unknown sampled at cell centers.
#[derive(Clone, Debug)]
pub struct RadialField {
    values: Vec<f64>,
    grid: Arc<Grid>,
}

impl RadialField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells {
            return Err(Error::Config(format!(
                "field has {} values but grid has {} cells",
                values.len(),
                grid.cells
            )));
        }
        Ok(Self { values, grid })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_grid(&self, other: &RadialField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField {
            values: self.values.iter().map(|&x| f(x)).collect(),
            grid: self.grid.clone(),
        }
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &RadialField, b: f64) -> Result<RadialField> {
        self.check_grid(other)?;
        Ok(RadialField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            grid: self.grid.clone(),
        })
    }

    pub fn product(&self, other: &RadialField) -> Result<RadialField> {
        self.check_grid(other)?;
        Ok(RadialField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x * y)
                .collect(),
            grid: self.grid.clone(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn has_nan(&self) -> bool {
        self.values.iter().any(|x| !x.is_finite())
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Midpoint rule `sum_i f_i V_i`.
pub fn integrate(field: &RadialField) -> f64 {
    integrate_values(&field.grid, &field.values)
}

pub fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    compensated_sum(values.iter().zip(&grid.volumes).map(|(f, v)| f * v))
}

/// Midpoint rule restricted to the first `k` cells.
pub fn integrate_cells(grid: &Grid, values: &[f64], k: usize) -> f64 {
    compensated_sum(
        values[..k]
            .iter()
            .zip(&grid.volumes[..k])
            .map(|(f, v)| f * v),
    )
}

/// Face quadrature over interior faces `1..k` (faces strictly inside face
/// `k`), weights `A_i * d_i`.
pub fn integrate_faces(grid: &Grid, face_values: &[f64], k: usize) -> f64 {
    let end = k.min(grid.cells);
    compensated_sum((1..end).map(|i| face_values[i] * grid.face_weight(i)))
}

pub fn sup_norm(field: &RadialField) -> f64 {
    field.values.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// `max_i r_i^p |f_i|`.
pub fn weighted_sup(field: &RadialField, p: f64) -> f64 {
    field
        .values
        .iter()
        .zip(&field.grid.centers)
        .fold(0.0, |m: f64, (f, r)| m.max(r.powf(p) * f.abs()))
}

/// Face gradients; the two boundary faces carry zero.
pub fn gradient_faces(field: &RadialField) -> Vec<f64> {
    gradient_values(&field.grid, &field.values)
}

pub fn gradient_values(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let n = grid.cells;
    let mut g = vec![0.0; n + 1];
    for i in 1..n {
        g[i] = (values[i] - values[i - 1]) / grid.spacing[i];
    }
    g
}

/// Arithmetic mean of the two cells adjacent to each interior face.
pub fn face_average(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut avg = vec![0.0; n + 1];
    for i in 1..n {
        avg[i] = 0.5 * (values[i - 1] + values[i]);
    }
    avg
}

/// Discrete divergence of face fluxes already multiplied by face areas.
pub fn divergence(grid: &Grid, area_flux: &[f64]) -> Vec<f64> {
    (0..grid.cells)
        .map(|i| (area_flux[i + 1] - area_flux[i]) / grid.volumes[i])
        .collect()
}

/// Flux-form radial Laplacian with zero flux through both boundary faces.
pub fn laplacian(field: &RadialField) -> RadialField {
    RadialField {
        values: laplacian_values(&field.grid, &field.values),
        grid: field.grid.clone(),
    }
}

pub fn laplacian_values(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let sign = fault_injection::laplacian_sign();
    let g = gradient_values(grid, values);
    let flux: Vec<f64> = g
        .iter()
        .zip(&grid.areas)
        .map(|(g, a)| sign * g * a)
        .collect();
    divergence(grid, &flux)
}

/// Deliberate operator defects for exercising the verification harness.
#[doc(hidden)]
pub mod fault_injection {
    use super::Cell;

    thread_local! {
        static FLIP_LAPLACIAN: Cell<bool> = const { Cell::new(false) };
    }

    pub fn laplacian_sign() -> f64 {
        if FLIP_LAPLACIAN.with(Cell::get) {
            -1.0
        } else {
            1.0
        }
    }

    /// Runs `f` on the current thread with the sign of the discrete Laplacian
    /// reversed.
    pub fn with_flipped_laplacian<T>(f: impl FnOnce() -> T) -> T {
        FLIP_LAPLACIAN.with(|c| c.set(true));
        let out = f();
        FLIP_LAPLACIAN.with(|c| c.set(false));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(1, 1.0, 10).is_err());
        assert!(Grid::new(5, 0.0, 10).is_err());
        assert!(Grid::new(5, 1.0, 3).is_err());
        assert!(Grid::with_mapping(5, 1.0, 10, Mapping::Sinh { stretch: -1.0 }).is_err());
    }

    #[test]
    fn omega_matches_closed_forms() {
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
        // recursion and log-gamma agree where they hand over
        let lg = (2f64.ln() + 16.5 * PI.ln() - ln_gamma(16.5)).exp();
        assert!((unit_sphere_area(33) - lg).abs() < 1e-12 * lg);
        assert!(unit_sphere_area(1) == 2.0);
    }

    #[test]
    fn uniform_geometry() {
        let g = Grid::new(5, 2.0, 10).unwrap();
        assert_eq!(g.centers()[0], 0.1);
        assert_eq!(g.faces()[0], 0.0);
        assert_eq!(g.faces()[10], 2.0);
    }

    #[test]
    fn total_volume_within_ulps() {
        for (n, r, cells) in [(5, 1.0, 100), (2, 3.0, 7), (8, 0.5, 1000), (5, 1.0, 2048)] {
            let g = Grid::new(n, r, cells).unwrap();
            let total = integrate(&g.constant(1.0));
            let exact = g.ball_volume();
            assert!(
                (total - exact).abs() <= 4.0 * f64::EPSILON * exact,
                "{n} {r} {cells}"
            );
        }
        let g = Grid::with_mapping(5, 1.0, 512, Mapping::Sinh { stretch: 20.0 }).unwrap();
        let total = integrate(&g.constant(1.0));
        assert!((total - g.ball_volume()).abs() <= 4.0 * f64::EPSILON * g.ball_volume());
    }

    #[test]
    fn unit_ball_volume_n5() {
        let g = Grid::new(5, 1.0, 100).unwrap();
        let vol = 8.0 * PI * PI / 15.0;
        assert!((integrate(&g.constant(1.0)) - vol).abs() < 1e-14);
        assert_eq!(integrate(&g.constant(0.0)), 0.0);
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        let exact = unit_sphere_area(5) / 7.0;
        let errs: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&n| {
                let g = Grid::new(5, 1.0, n).unwrap();
                (integrate(&g.sample(|r| r * r)) - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.1, "order {order}");
        }
    }

    #[test]
    fn sup_norms() {
        let g = Grid::new(5, 1.0, 100).unwrap();
        assert_eq!(sup_norm(&g.constant(-3.0)), 3.0);
        let mut spike = vec![0.0; 100];
        spike[17] = 7.0;
        assert_eq!(sup_norm(&g.field(spike).unwrap()), 7.0);
        assert_eq!(sup_norm(&g.sample(|r| r)), 1.0 - 0.005);

        assert!((weighted_sup(&g.sample(|r| r.powi(-2)), 2.0) - 1.0).abs() < 1e-14);
        assert!((weighted_sup(&g.sample(|r| 1.0 / r), 1.0) - 1.0).abs() < 1e-14);
        assert_eq!(weighted_sup(&g.constant(0.0), 3.0), 0.0);
    }

    #[test]
    fn gradient_stencils() {
        let g = Grid::new(5, 1.0, 4).unwrap();
        let h = g.h();
        let grad = gradient_faces(&g.field(vec![0.0, 1.0, 2.0, 3.0]).unwrap());
        assert_eq!(grad[0], 0.0);
        assert_eq!(grad[4], 0.0);
        for &x in &grad[1..4] {
            assert!((x - 1.0 / h).abs() < 1e-12);
        }
        assert!(gradient_faces(&g.constant(2.5)).iter().all(|&x| x == 0.0));

        let g = Grid::new(5, 1.0, 64).unwrap();
        let grad = gradient_faces(&g.sample(|r| r * r));
        for i in 1..64 {
            assert!((grad[i] - 2.0 * g.faces()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_annihilates_constants_and_has_zero_mean() {
        let g = Grid::new(5, 1.0, 50).unwrap();
        assert!(laplacian(&g.constant(3.0))
            .values()
            .iter()
            .all(|&x| x == 0.0));
        let f = g.sample(|r| (7.0 * r).sin() + r.powi(3));
        let lap = laplacian(&f);
        let scale = compensated_sum(
            lap.values()
                .iter()
                .zip(g.volumes())
                .map(|(l, v)| (l * v).abs()),
        );
        assert!(integrate(&lap).abs() < 1e-13 * scale);
    }

    #[test]
    fn laplacian_converges_second_order() {
        let n = 5.0;
        let pi = PI;
        let exact = move |r: f64| -pi * pi * (pi * r).cos() - (n - 1.0) / r * pi * (pi * r).sin();
        let err = |cells: usize| {
            let g = Grid::new(5, 1.0, cells).unwrap();
            let lap = laplacian(&g.sample(|r| (pi * r).cos()));
            // skip the two boundary cells, where the one-sided stencil is first order
            (1..cells - 1)
                .map(|i| (lap.values()[i] - exact(g.centers()[i])).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(100), err(200), err(400));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
        assert!((e2 / e3).log2() > 1.8, "{e2} {e3}");
    }

    #[test]
    fn sinh_mapping_is_monotone_and_hits_r() {
        let g = Grid::with_mapping(5, 1.0, 256, Mapping::Sinh { stretch: 25.0 }).unwrap();
        assert_eq!(g.faces()[256], 1.0);
        assert!(g.faces().windows(2).all(|w| w[1] > w[0]));
        assert!(g.min_width() < 1e-9);
    }
}
