//! CSV persistence: snapshots, diagnostics, probe reports.
//!
//! Every file starts with `# format_version=1`. Floats are written with the
//! shortest round-trip representation, so reading back is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dynamics::Sample;
use crate::energetics::{compute_g, f_from_w};
use crate::error::{Error, Result};
use crate::grid::RadialField;
use crate::helmholtz::HelmholtzSolver;

pub const FORMAT_LINE: &str = "# format_version=1";
pub const SNAPSHOT_HEADER: &str = "r,u,v,w,f,g";

/// Columns of a snapshot file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Snapshot {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl Snapshot {
    /// Derives `w`, `f` and cell-averaged `g` from `(u, v)`.
    pub fn from_state(u: &RadialField, v: &RadialField, solver: &HelmholtzSolver) -> Result<Self> {
        u.check_grid(v)?;
        let w = solver.solve(u)?;
        let f = f_from_w(v, &w, solver)?;
        let (g_faces, _) = compute_g(u, v)?;
        let g = g_faces.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        Ok(Self {
            r: u.grid().centers().to_vec(),
            u: u.values().to_vec(),
            v: v.values().to_vec(),
            w: w.into_values(),
            f: f.into_values(),
            g,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{FORMAT_LINE}")?;
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    for i in 0..snap.r.len() {
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?}",
            snap.r[i], snap.u[i], snap.v[i], snap.w[i], snap.f[i], snap.g[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_state(
    path: &Path,
    u: &RadialField,
    v: &RadialField,
    solver: &HelmholtzSolver,
) -> Result<()> {
    write_snapshot(path, &Snapshot::from_state(u, v, solver)?)
}

/// Reads a headed numeric table, checking the version line and header.
pub fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(l)) if l.trim() == FORMAT_LINE => {}
        _ => return Err(parse_err(1, format!("expected `{FORMAT_LINE}`"))),
    }
    match lines.next() {
        Some(Ok(l)) if l.trim() == header => {}
        _ => return Err(parse_err(2, format!("expected header `{header}`"))),
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| parse_err(k + 3, e.to_string()))?;
        if row.len() != width {
            return Err(parse_err(
                k + 3,
                format!("expected {width} columns, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let rows = read_table(path, SNAPSHOT_HEADER)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "snapshot has no rows".into(),
        });
    }
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let snap = Snapshot {
        r: col(0),
        u: col(1),
        v: col(2),
        w: col(3),
        f: col(4),
        g: col(5),
    };
    if snap.r.windows(2).any(|p| !(p[1] > p[0])) || snap.r[0] <= 0.0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "radii must be positive and increasing".into(),
        });
    }
    Ok(snap)
}

/// Diagnostics CSV writer, flushed after every row.
pub struct DiagnosticsWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = create(path)?;
        writeln!(out, "{FORMAT_LINE}")?;
        writeln!(out, "{}", Sample::CSV_HEADER)?;
        out.flush()?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, sample: &Sample) -> Result<()> {
        writeln!(self.out, "{}", sample.csv_row())?;
        self.out.flush()?;
        Ok(())
    }
}

/// One parsed diagnostics row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub sup_u: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub identity_residual: f64,
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    Ok(read_table(path, Sample::CSV_HEADER)?
        .into_iter()
        .map(|r| DiagnosticsRow {
            t: r[0],
            dt: r[1],
            mass: r[2],
            sup_u: r[3],
            energy: r[4],
            dissipation: r[5],
            identity_residual: r[6],
        })
        .collect())
}

/// Writes `# format_version=1`, a header, and preformatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{FORMAT_LINE}")?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}
