//! Commands behind the CLI: simulate, family, probe, sweep and energy.
//!
//! A simulation directory holds `diagnostics.csv`, `summary.txt` and
//! `snapshots/` with `index.csv` (`step,t`) and one `snap_<step>.csv` per
//! stored state.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{resolve_output, EtaList, FamilySpec, RunConfig};
use crate::dynamics::{run, RunSummary, Status};
use crate::energetics::{compute_energy, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{integrate, integrate_values, Grid, RadialField};
use crate::helmholtz::HelmholtzSolver;
use crate::initial_data::{
    base_data, build_family, eta_star, family_energy_scan, w22_norm, FamilyParams, FamilyRow,
};
use crate::io::{
    read_diagnostics, read_snapshot, read_table, save_state, write_csv, DiagnosticsWriter, Snapshot,
};
use crate::probes::{
    entropy_bound_entry, probe_fd_ratio, probe_lemma41, probe_localized, probe_mass_identities,
    probe_odi, probe_pointwise_v, probe_pointwise_w, MassPoint, ProbeReport, TrajectoryPoint,
};

pub const SNAPSHOT_INDEX_HEADER: &str = "step,t";

/// Process exit code for a finished run.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Completed => 0,
        Status::BlownUp(_) => 2,
        Status::Running | Status::Stalled => 1,
    }
}

/// Grid, solver and initial pair of a run.
pub struct Prepared {
    pub grid: Arc<Grid>,
    pub solver: HelmholtzSolver,
    pub u0: RadialField,
    pub v0: RadialField,
    pub eta: Option<f64>,
    pub eta_star: Option<f64>,
}

fn family_etas(spec: &FamilySpec, grid: &Grid, u0: &RadialField) -> Result<(f64, Vec<f64>)> {
    let star = eta_star(
        u0.min(),
        spec.gamma,
        grid.dim(),
        grid.ball_volume(),
        grid.radius(),
    )?;
    Ok((star, spec.etas.resolve(star)))
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let grid = cfg.grid.build()?;
    let solver = HelmholtzSolver::new(grid.clone());
    let (u0, v0) = base_data(&cfg.base, &grid)?;
    match &cfg.family {
        None => Ok(Prepared {
            grid,
            solver,
            u0,
            v0,
            eta: None,
            eta_star: None,
        }),
        Some(spec) => {
            let (star, etas) = family_etas(spec, &grid, &u0)?;
            let eta = *etas
                .first()
                .ok_or_else(|| Error::Config("family: eta list is empty".into()))?;
            let m = build_family(
                &u0,
                &v0,
                FamilyParams {
                    gamma: spec.gamma,
                    eta,
                },
            )?;
            Ok(Prepared {
                grid,
                solver,
                u0: m.u,
                v0: m.v,
                eta: Some(eta),
                eta_star: Some(star),
            })
        }
    }
}

/// Outcome of one simulation with the probe maxima gathered on the fly.
#[derive(Clone, Debug)]
pub struct SimReport {
    pub summary: RunSummary,
    pub eta: Option<f64>,
    pub samples: usize,
    pub fd_ratio: f64,
    pub pointwise_w: f64,
    pub pointwise_v: f64,
    pub entropy_failures: usize,
    pub dir: PathBuf,
}

impl SimReport {
    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "status = {}", s.status.label());
        if let Status::BlownUp(tb) = s.status {
            let _ = writeln!(out, "t_b = {tb:?}");
        }
        let _ = writeln!(out, "t_final = {:?}", s.t_final);
        let _ = writeln!(out, "steps = {}", s.steps);
        if let Some(eta) = self.eta {
            let _ = writeln!(out, "eta = {eta:?}");
        }
        let _ = writeln!(out, "peak_sup = {:?}", s.peak_sup);
        let _ = writeln!(out, "initial_energy = {:?}", s.initial_energy);
        let _ = writeln!(out, "min_energy = {:?}", s.min_energy);
        let _ = writeln!(out, "fd_ratio_max = {:?}", self.fd_ratio);
        let _ = writeln!(out, "pointwise_w_max = {:?}", self.pointwise_w);
        let _ = writeln!(out, "pointwise_v_max = {:?}", self.pointwise_v);
        let _ = writeln!(out, "entropy_failures = {}", self.entropy_failures);
        out
    }
}

fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snap_{step:08}.csv"))
}

/// Runs `cfg` writing all outputs into `dir`.
pub fn simulate_in(cfg: &RunConfig, dir: &Path) -> Result<SimReport> {
    let prep = prepare(cfg)?;
    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    let mut diag = DiagnosticsWriter::create(&dir.join("diagnostics.csv"))?;
    let solver = &prep.solver;
    let mass = integrate(&prep.u0);
    let v0_norm = w22_norm(&prep.v0);

    let mut traj = Vec::new();
    let mut index: Vec<String> = Vec::new();
    let mut last_snap = None;
    let mut pw: f64 = 0.0;
    let mut pv: f64 = 0.0;
    let mut entropy_failures = 0;
    let mut count = 0usize;
    let (state, summary) = run(prep.u0.clone(), prep.v0.clone(), &cfg.stepper, |s, st| {
        diag.write(s)?;
        traj.push(TrajectoryPoint::from(s));
        let w = solver.solve(&st.u)?;
        pw = pw.max(probe_pointwise_w(&w, mass, s.t)?.implied_c);
        pv = pv.max(probe_pointwise_v(&st.v, &cfg.probe, mass, v0_norm, s.t)?.implied_c);
        let e = entropy_bound_entry(&prep.grid, s.energy.energy, s.energy.mixed_term, s.t);
        if e.hard_pass == Some(false) {
            entropy_failures += 1;
        }
        let periodic = cfg.snapshot_every > 0 && count.is_multiple_of(cfg.snapshot_every);
        if count == 0 || periodic || st.status != Status::Running {
            save_state(&snapshot_path(&snap_dir, st.step), &st.u, &st.v, solver)?;
            index.push(format!("{},{:?}", st.step, st.t));
            last_snap = Some(st.step);
        }
        count += 1;
        Ok(())
    })?;
    if last_snap != Some(state.step) && !state.u.has_nan() && !state.v.has_nan() {
        save_state(
            &snapshot_path(&snap_dir, state.step),
            &state.u,
            &state.v,
            solver,
        )?;
        index.push(format!("{},{:?}", state.step, state.t));
    }
    write_csv(&snap_dir.join("index.csv"), SNAPSHOT_INDEX_HEADER, &index)?;

    let fd = probe_fd_ratio(&traj, cfg.probe.theta)?;
    let report = SimReport {
        summary,
        eta: prep.eta,
        samples: count,
        fd_ratio: fd.implied_c,
        pointwise_w: pw,
        pointwise_v: pv,
        entropy_failures,
        dir: dir.to_path_buf(),
    };
    std::fs::write(dir.join("summary.txt"), report.summary_text())?;
    Ok(report)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimReport> {
    simulate_in(cfg, &resolve_output(&cfg.output_dir))
}

/// Energy table of the family plus one snapshot per `eta`.
pub fn cmd_family(cfg: &RunConfig) -> Result<Vec<FamilyRow>> {
    let spec = cfg
        .family
        .as_ref()
        .ok_or_else(|| Error::Config("the family command needs a [family] section".into()))?;
    if spec.etas.is_empty() {
        return Err(Error::Config("family: eta list is empty".into()));
    }
    let grid = cfg.grid.build()?;
    let solver = HelmholtzSolver::new(grid.clone());
    let (u0, v0) = base_data(&cfg.base, &grid)?;
    let (_, etas) = family_etas(spec, &grid, &u0)?;
    let scan = family_energy_scan(&u0, &v0, spec.gamma, &etas, &solver)?;
    let dir = resolve_output(&cfg.output_dir);
    for (k, (_, member)) in scan.iter().enumerate() {
        save_state(
            &dir.join("family").join(format!("eta_{k:02}.csv")),
            &member.u,
            &member.v,
            &solver,
        )?;
    }
    let rows: Vec<FamilyRow> = scan.into_iter().map(|(r, _)| r).collect();
    let lines: Vec<String> = rows.iter().map(FamilyRow::csv_row).collect();
    write_csv(&dir.join("family.csv"), FamilyRow::CSV_HEADER, &lines)?;
    Ok(rows)
}

fn field_from_snapshot(
    grid: &Arc<Grid>,
    snap: &Snapshot,
    path: &Path,
) -> Result<(RadialField, RadialField)> {
    let matches = snap.r.len() == grid.cells()
        && snap
            .r
            .iter()
            .zip(grid.centers())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs());
    if !matches {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "snapshot radii do not match the configured grid".into(),
        });
    }
    Ok((grid.field(snap.u.clone())?, grid.field(snap.v.clone())?))
}

/// Probe report from a diagnostics file and a snapshot directory.
pub fn cmd_probe(
    cfg: &RunConfig,
    diagnostics: &Path,
    snapshots: &Path,
    out: &Path,
) -> Result<ProbeReport> {
    let grid = cfg.grid.build()?;
    let solver = HelmholtzSolver::new(grid.clone());
    let rows = read_diagnostics(diagnostics)?;
    let traj: Vec<TrajectoryPoint> = rows.iter().map(TrajectoryPoint::from).collect();
    let mut report = ProbeReport::default();
    report.push(probe_fd_ratio(&traj, cfg.probe.theta)?);
    match probe_odi(&traj, cfg.probe.theta) {
        Ok((_, e)) => report.push(e),
        Err(Error::InsufficientData(msg)) => eprintln!("odi probe skipped: {msg}"),
        Err(e) => return Err(e),
    }

    let index = read_table(&snapshots.join("index.csv"), SNAPSHOT_INDEX_HEADER)?;
    let mut masses = Vec::new();
    let mut reference: Option<(f64, f64)> = None;
    for row in &index {
        let (step, t) = (row[0] as usize, row[1]);
        let path = snapshot_path(snapshots, step);
        let snap = read_snapshot(&path)?;
        let (u, v) = field_from_snapshot(&grid, &snap, &path)?;
        let w = solver.solve(&u)?;
        let (m, v0_norm) = *reference.get_or_insert_with(|| (integrate(&u), w22_norm(&v)));
        masses.push(MassPoint {
            t,
            mass_u: integrate(&u),
            mass_v: integrate(&v),
            mass_w: integrate_values(&grid, w.values()),
        });
        report.push(probe_lemma41(&u, &v, &solver, t)?);
        report.push(probe_pointwise_w(&w, m, t)?);
        report.push(probe_pointwise_v(&v, &cfg.probe, m, v0_norm, t)?);
        report.extend(probe_localized(&u, &v, &solver, &cfg.probe, t)?);
    }
    report.extend(probe_mass_identities(&masses)?);
    write_csv(
        out,
        crate::probes::ProbeEntry::CSV_HEADER,
        &report.csv_rows(),
    )?;
    Ok(report)
}

/// One row of the sweep table.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub cells: usize,
    pub eta_divisor: Option<f64>,
    pub outcome: std::result::Result<SimReport, String>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "cells,eta_divisor,eta,status,t_final,steps,peak_sup,F0,min_F,fd_ratio,pointwise_w,pointwise_v";

    pub fn csv_row(&self) -> String {
        let div = self.eta_divisor.unwrap_or(f64::NAN);
        match &self.outcome {
            Ok(r) => {
                let s = &r.summary;
                format!(
                    "{},{:?},{:?},{},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?}",
                    self.cells,
                    div,
                    r.eta.unwrap_or(f64::NAN),
                    s.status.label(),
                    s.t_final,
                    s.steps,
                    s.peak_sup,
                    s.initial_energy,
                    s.min_energy,
                    r.fd_ratio,
                    r.pointwise_w,
                    r.pointwise_v
                )
            }
            Err(_) => format!(
                "{},{div:?},NaN,error,NaN,0,NaN,NaN,NaN,NaN,NaN,NaN",
                self.cells
            ),
        }
    }
}

/// Parameter points `(cells, eta divisor)` of a sweep, sorted.
pub fn sweep_points(cfg: &RunConfig) -> Vec<(usize, Option<f64>)> {
    let cells = if cfg.sweep.cells.is_empty() {
        vec![cfg.grid.cells]
    } else {
        cfg.sweep.cells.clone()
    };
    let divisors: Vec<Option<f64>> = if !cfg.sweep.eta_divisors.is_empty() {
        cfg.sweep.eta_divisors.iter().copied().map(Some).collect()
    } else {
        match &cfg.family {
            Some(FamilySpec {
                etas: EtaList::Divisors(d),
                ..
            }) => d.iter().copied().map(Some).collect(),
            _ => vec![None],
        }
    };
    let mut points: Vec<(usize, Option<f64>)> = cells
        .iter()
        .flat_map(|&n| divisors.iter().map(move |&d| (n, d)))
        .collect();
    points.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.unwrap_or(0.0).total_cmp(&b.1.unwrap_or(0.0)))
    });
    points.dedup();
    points
}

/// Runs every point on a pool of `workers` threads; each run writes into its
/// own subdirectory and failures are recorded per row.
pub fn run_sweep(cfg: &RunConfig, workers: usize) -> Result<Vec<SweepRow>> {
    let points = sweep_points(cfg);
    let root = resolve_output(&cfg.output_dir);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .map(|&(cells, div)| {
                let mut c = cfg.clone();
                c.grid.cells = cells;
                if let Some(d) = div {
                    let gamma = c.family.as_ref().map_or(1.5, |f| f.gamma);
                    c.family = Some(FamilySpec {
                        gamma,
                        etas: EtaList::Divisors(vec![d]),
                    });
                }
                let name = match div {
                    Some(d) => format!("run_N{cells}_d{d}"),
                    None => format!("run_N{cells}"),
                };
                SweepRow {
                    cells,
                    eta_divisor: div,
                    outcome: simulate_in(&c, &root.join(name)).map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    let lines: Vec<String> = rows.iter().map(SweepRow::csv_row).collect();
    write_csv(&root.join("sweep.csv"), SweepRow::CSV_HEADER, &lines)?;
    Ok(rows)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    run_sweep(cfg, cfg.sweep.workers)
}

/// Energy report of a snapshot file on the configured grid.
pub fn cmd_energy(cfg: &RunConfig, snapshot: &Path) -> Result<EnergyReport> {
    let grid = cfg.grid.build()?;
    let solver = HelmholtzSolver::new(grid.clone());
    let snap = read_snapshot(snapshot)?;
    let (u, v) = field_from_snapshot(&grid, &snap, snapshot)?;
    compute_energy(&u, &v, &solver)
}

pub fn energy_text(r: &EnergyReport) -> String {
    format!(
        "F = {:?}\nD = {:?}\nentropy = {:?}\nmixed = {:?}\nquadratic = {:?}\ngrad_f = {:?}\nf = {:?}\ng = {:?}\nregularized_faces = {}\n",
        r.energy,
        r.dissipation,
        r.entropy_term,
        r.mixed_term,
        r.quad_term,
        r.grad_f_term,
        r.f_term,
        r.g_term,
        r.regularized_faces
    )
}
