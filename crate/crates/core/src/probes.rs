//! Empirical probes of the estimate chain behind blowup.
//!
//! Each probe reports a left side, the part of the right side whose
//! coefficients are known, and the implied value of the unknown constant.
//! Only the entropy bound and the mass identities carry a hard pass flag;
//! every other constant is non-constructive and is reported, not judged.

use crate::dynamics::Sample;
use crate::energetics::{compute_energy, compute_g, f_from_w};
use crate::error::{Error, Result};
use crate::grid::{
    face_average, gradient_values, integrate, integrate_cells, integrate_faces, laplacian_values,
    Grid, RadialField,
};
use crate::helmholtz::HelmholtzSolver;
use crate::io::DiagnosticsRow;

/// Slack on the entropy bound, relative to `1 + |F|`.
pub const ENTROPY_SLACK: f64 = 1e-6;
/// Tolerance of the hard mass checks.
pub const MASS_TOL: f64 = 1e-9;
/// Minimum number of tail samples for the slope fit.
pub const MIN_TAIL_SAMPLES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub kappa: f64,
    pub beta: f64,
    pub theta: f64,
    pub rhos: Vec<f64>,
}

/// `theta(kappa)`: `n/(n+2)` below `kappa = n`, `1 - 2n/((n+2)(2 kappa - n))` above.
pub fn theta_for(dim: usize, kappa: f64) -> f64 {
    let n = dim as f64;
    if kappa < n {
        n / (n + 2.0)
    } else {
        1.0 - 2.0 * n / ((n + 2.0) * (2.0 * kappa - n))
    }
}

impl ProbeConfig {
    /// `kappa = beta = n - 1/2`, `rho` in `{R/8, R/4, R/2}`.
    pub fn for_grid(grid: &Grid) -> Self {
        let kappa = grid.dim() as f64 - 0.5;
        let r = grid.radius();
        Self::new(grid.dim(), kappa, kappa, vec![r / 8.0, r / 4.0, r / 2.0])
    }

    pub fn new(dim: usize, kappa: f64, beta: f64, rhos: Vec<f64>) -> Self {
        Self {
            kappa,
            beta,
            theta: theta_for(dim, kappa),
            rhos,
        }
    }

    pub fn violations(&self, grid: &Grid) -> Vec<String> {
        let n = grid.dim() as f64;
        let mut p = Vec::new();
        if !(self.kappa > n - 2.0) {
            p.push(format!(
                "probe.kappa = {} must exceed n - 2 = {}",
                self.kappa,
                n - 2.0
            ));
        }
        if !(self.beta > n - 2.0) {
            p.push(format!(
                "probe.beta = {} must exceed n - 2 = {}",
                self.beta,
                n - 2.0
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            p.push(format!("probe theta = {} must lie in (0, 1)", self.theta));
        }
        for &rho in &self.rhos {
            if !(rho > 0.0 && rho < grid.radius()) {
                p.push(format!("probe.rho = {rho} must lie in (0, R)"));
            }
        }
        p
    }
}

/// One probe evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeEntry {
    pub probe: String,
    /// Probe parameter (`rho`, `theta`, ...) or NaN.
    pub param: f64,
    /// Time or `eta` of the sample.
    pub sample: f64,
    pub lhs: f64,
    pub rhs_free: f64,
    pub implied_c: f64,
    pub hard_pass: Option<bool>,
}

impl ProbeEntry {
    pub const CSV_HEADER: &'static str = "probe,param,sample,lhs,rhs_free,implied_C,hard_pass";

    fn soft(probe: &str, param: f64, sample: f64, lhs: f64, rhs_free: f64, implied_c: f64) -> Self {
        Self {
            probe: probe.to_string(),
            param,
            sample,
            lhs,
            rhs_free,
            implied_c: implied_c.max(0.0),
            hard_pass: None,
        }
    }

    pub fn csv_row(&self) -> String {
        let flag = match self.hard_pass {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "na",
        };
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{}",
            self.probe, self.param, self.sample, self.lhs, self.rhs_free, self.implied_c, flag
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeReport {
    pub entries: Vec<ProbeEntry>,
}

impl ProbeReport {
    pub fn push(&mut self, e: ProbeEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, es: impl IntoIterator<Item = ProbeEntry>) {
        self.entries.extend(es);
    }

    /// Largest implied constant of a probe, NaN if absent.
    pub fn max_implied(&self, probe: &str) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.probe == probe)
            .map(|e| e.implied_c)
            .fold(f64::NAN, f64::max)
    }

    pub fn hard_failures(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.hard_pass == Some(false))
            .count()
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.entries.iter().map(ProbeEntry::csv_row).collect()
    }
}

/// Entropy bound `-F - ∫uv <= omega_n R^n / e`.
pub fn probe_lemma41(
    u: &RadialField,
    v: &RadialField,
    solver: &HelmholtzSolver,
    sample: f64,
) -> Result<ProbeEntry> {
    let rep = compute_energy(u, v, solver)?;
    Ok(entropy_bound_entry(
        u.grid(),
        rep.energy,
        rep.mixed_term,
        sample,
    ))
}

pub fn entropy_bound_entry(grid: &Grid, energy: f64, mixed: f64, sample: f64) -> ProbeEntry {
    let lhs = -energy - mixed;
    let rhs = grid.omega() * grid.radius().powi(grid.dim() as i32) / std::f64::consts::E;
    ProbeEntry {
        probe: "entropy_bound".into(),
        param: f64::NAN,
        sample,
        lhs,
        rhs_free: rhs,
        implied_c: (lhs / rhs).max(0.0),
        hard_pass: Some(lhs <= rhs + ENTROPY_SLACK * (1.0 + energy.abs())),
    }
}

/// `max_faces r^{n-2} (w + r |w_r|) / m`.
pub fn probe_pointwise_w(w: &RadialField, m: f64, sample: f64) -> Result<ProbeEntry> {
    if !(m > 0.0) {
        return Err(Error::Admissibility(format!("mass {m} must be positive")));
    }
    let grid = w.grid();
    let avg = face_average(w.values());
    let dw = gradient_values(grid, w.values());
    let n = grid.dim() as i32;
    let lhs = (1..grid.cells())
        .map(|i| {
            let r = grid.faces()[i];
            r.powi(n - 2) * (avg[i] + r * dw[i].abs())
        })
        .fold(0.0, f64::max);
    Ok(ProbeEntry::soft(
        "pointwise_w",
        f64::NAN,
        sample,
        lhs,
        m,
        lhs / m,
    ))
}

/// `max_faces r^beta (v/r^2 + |v_r|/r) / (m + |v0|_{W^{2,2}})`.
pub fn probe_pointwise_v(
    v: &RadialField,
    cfg: &ProbeConfig,
    m: f64,
    v0_norm: f64,
    sample: f64,
) -> Result<ProbeEntry> {
    let scale = m + v0_norm;
    if !(scale > 0.0) {
        return Err(Error::Admissibility("m + |v0| must be positive".into()));
    }
    let grid = v.grid();
    let avg = face_average(v.values());
    let dv = gradient_values(grid, v.values());
    let lhs = (1..grid.cells())
        .map(|i| {
            let r = grid.faces()[i];
            r.powf(cfg.beta) * (avg[i] / (r * r) + dv[i].abs() / r)
        })
        .fold(0.0, f64::max);
    Ok(ProbeEntry::soft(
        "pointwise_v",
        cfg.beta,
        sample,
        lhs,
        scale,
        lhs / scale,
    ))
}

/// `(t, F, D)` along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
}

impl From<&Sample> for TrajectoryPoint {
    fn from(s: &Sample) -> Self {
        Self {
            t: s.t,
            energy: s.energy.energy,
            dissipation: s.energy.dissipation,
        }
    }
}

impl From<&DiagnosticsRow> for TrajectoryPoint {
    fn from(r: &DiagnosticsRow) -> Self {
        Self {
            t: r.t,
            energy: r.energy,
            dissipation: r.dissipation,
        }
    }
}

/// `max_k (-F_k)_+ / (D_k^theta + 1)`, reported at the maximizing sample.
pub fn probe_fd_ratio(samples: &[TrajectoryPoint], theta: f64) -> Result<ProbeEntry> {
    let mut best: Option<ProbeEntry> = None;
    for s in samples {
        let lhs = (-s.energy).max(0.0);
        let rhs = s.dissipation.max(0.0).powf(theta) + 1.0;
        let ratio = lhs / rhs;
        if best.as_ref().is_none_or(|b| ratio > b.implied_c) {
            best = Some(ProbeEntry::soft("fd_ratio", theta, s.t, lhs, rhs, ratio));
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no trajectory samples".into()))
}

/// Result of [`probe_odi`].
#[derive(Clone, Debug, PartialEq)]
pub struct OdiFit {
    /// Smallest `c5` with `D >= ((-F - c5)/c5)^{1/theta}` wherever `-F > c5`.
    pub c5: f64,
    /// Least-squares slope of `ln D` against `ln(-F)` over the tail.
    pub slope: f64,
    pub tail_samples: usize,
}

/// Smallest feasible `c5`, by bisection on `[0, max (-F)_+]`.
pub fn fit_c5(samples: &[TrajectoryPoint], theta: f64) -> f64 {
    let top = samples
        .iter()
        .map(|s| (-s.energy).max(0.0))
        .fold(0.0, f64::max);
    let feasible = |c: f64| {
        samples.iter().all(|s| {
            let x = -s.energy;
            x <= c || (c > 0.0 && s.dissipation >= ((x - c) / c).powf(1.0 / theta))
        })
    };
    if feasible(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Samples in the final decade of `-F` growth: `-F >= max(-F) / 10`, taken
/// from the first time that level is reached.
pub fn odi_tail(samples: &[TrajectoryPoint]) -> &[TrajectoryPoint] {
    let top = samples
        .iter()
        .map(|s| -s.energy)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return &[];
    }
    let start = samples
        .iter()
        .position(|s| -s.energy >= top / 10.0)
        .unwrap_or(samples.len());
    &samples[start..]
}

pub fn probe_odi(samples: &[TrajectoryPoint], theta: f64) -> Result<(OdiFit, ProbeEntry)> {
    let tail: Vec<(f64, f64)> = odi_tail(samples)
        .iter()
        .filter(|s| s.energy < 0.0 && s.dissipation > 0.0)
        .map(|s| ((-s.energy).ln(), s.dissipation.ln()))
        .collect();
    if tail.len() < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} tail samples, need at least {MIN_TAIL_SAMPLES}",
            tail.len()
        )));
    }
    let k = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / k;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData(
            "-F is constant over the tail".into(),
        ));
    }
    let fit = OdiFit {
        c5: fit_c5(samples, theta),
        slope: sxy / sxx,
        tail_samples: tail.len(),
    };
    let last = samples.last().map_or(f64::NAN, |s| s.t);
    let entry = ProbeEntry::soft("odi", theta, last, fit.slope, 1.0 / theta, fit.c5);
    Ok((fit, entry))
}

/// Masses `(∫u, ∫v, ∫w)` at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassPoint {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub mass_w: f64,
}

impl From<&Sample> for MassPoint {
    fn from(s: &Sample) -> Self {
        Self {
            t: s.t,
            mass_u: s.mass,
            mass_v: s.mass_v,
            mass_w: s.mass_w,
        }
    }
}

/// Drift of `∫u`, gap `∫w - ∫u`, and excess of `∫v` over
/// `max(∫v0, ∫u0)`, all relative to `max(∫u0, ∫v0)`.
pub fn probe_mass_identities(samples: &[MassPoint]) -> Result<Vec<ProbeEntry>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InsufficientData("no mass samples".into()))?;
    let scale = first
        .mass_u
        .abs()
        .max(first.mass_v.abs())
        .max(f64::MIN_POSITIVE);
    let bound = first.mass_u.max(first.mass_v);
    let mut drift = (0.0, first.t);
    let mut gap = (0.0, first.t);
    let mut excess = (0.0, first.t);
    for s in samples {
        let d = (s.mass_u - first.mass_u).abs() / scale;
        if d > drift.0 {
            drift = (d, s.t);
        }
        let g = (s.mass_w - s.mass_u).abs() / scale;
        if g > gap.0 {
            gap = (g, s.t);
        }
        let e = (s.mass_v - bound).max(0.0) / scale;
        if e > excess.0 {
            excess = (e, s.t);
        }
    }
    Ok([
        ("mass_u_drift", drift),
        ("mass_w_gap", gap),
        ("mass_v_excess", excess),
    ]
    .into_iter()
    .map(|(name, (val, t))| ProbeEntry {
        probe: name.into(),
        param: f64::NAN,
        sample: t,
        lhs: val,
        rhs_free: MASS_TOL,
        implied_c: val / MASS_TOL,
        hard_pass: Some(val <= MASS_TOL),
    })
    .collect())
}

/// `|r^p h|_{W^{1,inf}}`: sup of the weighted values at the centers plus
/// sup of the weighted face derivative.
fn weighted_w1inf(grid: &Grid, vals: &[f64], p: f64) -> f64 {
    let sup = grid
        .centers()
        .iter()
        .zip(vals)
        .map(|(r, x)| (r.powf(p) * x).abs())
        .fold(0.0, f64::max);
    let avg = face_average(vals);
    let d = gradient_values(grid, vals);
    let dsup = (1..grid.cells())
        .map(|i| {
            let r = grid.faces()[i];
            (p * r.powf(p - 1.0) * avg[i] + r.powf(p) * d[i]).abs()
        })
        .fold(0.0, f64::max);
    sup + dsup
}

/// Empirical `(M, B)` of a state: the smallest parameters for which it lies
/// in the constrained class.
pub fn class_parameters(
    u: &RadialField,
    v: &RadialField,
    solver: &HelmholtzSolver,
    kappa: f64,
) -> Result<(f64, f64)> {
    let grid = u.grid();
    let w = solver.solve(u)?;
    let f = f_from_w(v, &w, solver)?;
    let n = grid.dim() as f64;
    let big_m = integrate(v).max(weighted_w1inf(grid, w.values(), n - 1.0));
    let big_b = integrate(&f.map(f64::abs)).max(weighted_w1inf(grid, v.values(), kappa - 1.0));
    Ok((big_m, big_b))
}

/// Localized forms of the three functional inequalities for each `rho`.
pub fn probe_localized(
    u: &RadialField,
    v: &RadialField,
    solver: &HelmholtzSolver,
    cfg: &ProbeConfig,
    sample: f64,
) -> Result<Vec<ProbeEntry>> {
    u.check_grid(v)?;
    let grid = u.grid();
    for &rho in &cfg.rhos {
        if !(rho > 0.0 && rho < grid.radius()) {
            return Err(Error::Config(format!("rho = {rho} must lie in (0, R)")));
        }
    }
    let n = grid.dim() as f64;
    let cells = grid.cells();
    let rep = compute_energy(u, v, solver)?;
    let m = integrate(u);
    let (big_m, big_b) = class_parameters(u, v, solver, cfg.kappa)?;
    let w = solver.solve(u)?;
    let f = f_from_w(v, &w, solver)?;
    let sq = |x: &[f64]| x.iter().map(|y| y * y).collect::<Vec<f64>>();
    let lap2 = sq(&laplacian_values(grid, v.values()));
    let v2 = sq(v.values());
    let f2 = sq(f.values());
    let dv2 = sq(&gradient_values(grid, v.values()));
    let df2 = sq(&gradient_values(grid, f.values()));
    let (g, _) = compute_g(u, v)?;
    let g2 = sq(&g);
    let grad_f_all = integrate_faces(grid, &df2, cells);
    let g_all = integrate_faces(grid, &g2, cells).sqrt();
    let grad_f_norm = grad_f_all.sqrt();

    let mut out = Vec::new();
    for &rho in &cfg.rhos {
        let k = grid.snap_to_face(rho);
        let lap_b = integrate_cells(grid, &lap2, k);
        let v_b = integrate_cells(grid, &v2, k);
        let f_b = integrate_cells(grid, &f2, k);
        let dv_b = integrate_faces(grid, &dv2, k);
        let df_b = integrate_faces(grid, &df2, k);
        let g_b = integrate_faces(grid, &g2, k).sqrt();

        let lhs = rep.mixed_term;
        let free = 3.0 * lap_b + 3.0 * v_b + f_b;
        let basis = (m + big_m) * big_b * rho.powf(2.0 - cfg.kappa);
        out.push(ProbeEntry::soft(
            "mixed_localized",
            rho,
            sample,
            lhs,
            free,
            (lhs - free) / basis,
        ));

        let lhs = lap_b / 8.0 + 0.75 * dv_b;
        let free = 12.0 * rho * rho * df_b + m.sqrt() * rho * g_b + v_b + 2.0 * m;
        let basis = f_b
            + big_b * big_b * rho.powf(n + 2.0 - 2.0 * cfg.kappa)
            + big_b * big_m * rho.powf(2.0 - cfg.kappa);
        out.push(ProbeEntry::soft(
            "hessian_localized",
            rho,
            sample,
            lhs,
            free,
            (lhs - free) / basis,
        ));

        let lhs = -rep.energy / 24.0;
        let free = 12.0 * rho * rho * grad_f_all + m.sqrt() * rho * g_all;
        let basis = big_b.powf(4.0 / (n + 2.0)) * grad_f_norm.powf(2.0 * n / (n + 2.0))
            + (big_b * big_b + m * m + big_m * big_m + 1.0) * rho.powf(n - 2.0 * cfg.kappa);
        out.push(ProbeEntry::soft(
            "energy_localized",
            rho,
            sample,
            lhs,
            free,
            (lhs - free) / basis,
        ));
    }
    Ok(out)
}

/// Running maximum of a sequence.
pub fn running_max(values: &[f64]) -> Vec<f64> {
    let mut acc = f64::NEG_INFINITY;
    values
        .iter()
        .map(|&x| {
            acc = acc.max(x);
            acc
        })
        .collect()
}
