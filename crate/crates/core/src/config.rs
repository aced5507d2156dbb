//! Run configuration: sectioned TOML text with a `# format_version=1` tag.
//!
//! ```toml
//! # format_version=1
//! [grid]
//! n = 5
//! R = 1.0
//! N = 1024
//! mapping = "sinh"
//! stretch = 30.0
//!
//! [initial]
//! kind = "constant"
//! value = 1.0
//!
//! [family]
//! gamma = 1.5
//! eta_divisors = [16.0, 32.0]
//! ```
//!
//! Only `grid.n`, `grid.R` and `grid.N` are required. Loading collects every
//! violation before failing.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use toml::{Table, Value};

use crate::dynamics::StepperConfig;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mapping};
use crate::initial_data::BaseKind;
use crate::io::FORMAT_LINE;
use crate::probes::ProbeConfig;

/// Environment variable naming the root for relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "ISP_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub radius: f64,
    pub cells: usize,
    pub mapping: Mapping,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        Grid::with_mapping(self.dim, self.radius, self.cells, self.mapping)
    }
}

/// How `eta` values are given.
#[derive(Clone, Debug, PartialEq)]
pub enum EtaList {
    /// `eta = eta_star / d` for each divisor `d`.
    Divisors(Vec<f64>),
    Absolute(Vec<f64>),
}

impl EtaList {
    pub fn resolve(&self, star: f64) -> Vec<f64> {
        match self {
            EtaList::Divisors(d) => d.iter().map(|d| star / d).collect(),
            EtaList::Absolute(e) => e.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EtaList::Divisors(v) | EtaList::Absolute(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub gamma: f64,
    pub etas: EtaList,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub workers: usize,
    /// Cell counts; empty means the configured grid only.
    pub cells: Vec<usize>,
    /// `eta` divisors; empty means the configured family (or none).
    pub eta_divisors: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub base: BaseKind,
    /// When present, `simulate` starts from the first member of the family.
    pub family: Option<FamilySpec>,
    pub stepper: StepperConfig,
    /// Write a snapshot every this many diagnostics samples (0: first and last only).
    pub snapshot_every: usize,
    pub probe: ProbeConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub sweep: SweepSpec,
    /// Non-fatal remarks, e.g. dimensions below the blowup regime.
    pub warnings: Vec<String>,
}

/// Reads and validates a config file, applying `section.key=value` overrides.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, path, base_dir, overrides)
}

pub fn parse_config(
    text: &str,
    path: &Path,
    base_dir: &Path,
    overrides: &[String],
) -> Result<RunConfig> {
    let mut problems = Vec::new();
    if text.lines().next().map(str::trim) != Some(FORMAT_LINE) {
        problems.push(format!(
            "first line must be the version tag `{FORMAT_LINE}`"
        ));
    }
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut r = Reader {
        table: &table,
        problems,
    };
    let cfg = r.build(base_dir);
    if r.problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(r.problems))
    }
}

/// Applies `section.key=value`; the value is read as a TOML literal and
/// falls back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let bad = || {
        Error::Config(format!(
            "override `{spec}` must look like section.key=value"
        ))
    };
    let (key, raw) = spec.split_once('=').ok_or_else(bad)?;
    let (section, name) = key.trim().split_once('.').ok_or_else(bad)?;
    if section.is_empty() || name.is_empty() {
        return Err(bad());
    }
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(name.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a section"))),
    }
}

/// Output directory: relative paths are resolved against `$ISP_OUTPUT_ROOT`
/// when set.
pub fn resolve_output(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["n", "R", "N", "mapping", "stretch"]),
    (
        "initial",
        &["kind", "value", "level", "amplitude", "width", "path"],
    ),
    ("family", &["gamma", "eta_divisors", "etas"]),
    (
        "dynamics",
        &[
            "cfl",
            "dt_init",
            "dt_min",
            "dt_max",
            "t_end",
            "blowup_factor",
            "output_every",
            "snapshot_every",
            "max_steps",
        ],
    ),
    ("probe", &["kappa", "beta", "rho"]),
    ("output", &["dir"]),
    ("run", &["seed"]),
    ("sweep", &["workers", "cells", "eta_divisors"]),
];

struct Reader<'a> {
    table: &'a Table,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&Value> {
        self.table.get(section)?.as_table()?.get(key)
    }

    fn f64_opt(&mut self, section: &str, key: &str) -> Option<f64> {
        match self.raw(section, key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.problems
                    .push(format!("{section}.{key}: expected a number, found {other}"));
                None
            }
        }
    }

    fn f64_or(&mut self, section: &str, key: &str, default: f64) -> f64 {
        self.f64_opt(section, key).unwrap_or(default)
    }

    fn usize_opt(&mut self, section: &str, key: &str) -> Option<usize> {
        match self.raw(section, key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            other => {
                self.problems.push(format!(
                    "{section}.{key}: expected a non-negative integer, found {other}"
                ));
                None
            }
        }
    }

    fn str_opt(&mut self, section: &str, key: &str) -> Option<String> {
        match self.raw(section, key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.problems
                    .push(format!("{section}.{key}: expected a string, found {other}"));
                None
            }
        }
    }

    fn f64_list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let vals = match self.raw(section, key)? {
            Value::Array(a) => a.clone(),
            Value::Float(x) => vec![Value::Float(*x)],
            Value::Integer(i) => vec![Value::Integer(*i)],
            other => {
                self.problems.push(format!(
                    "{section}.{key}: expected a list of numbers, found {other}"
                ));
                return None;
            }
        };
        let mut out = Vec::new();
        for v in vals {
            match v {
                Value::Float(x) => out.push(x),
                Value::Integer(i) => out.push(i as f64),
                other => {
                    self.problems.push(format!(
                        "{section}.{key}: list entry {other} is not a number"
                    ));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn required_usize(&mut self, section: &str, key: &str) -> Option<usize> {
        if self.raw(section, key).is_none() {
            self.problems
                .push(format!("missing required key {section}.{key}"));
        }
        self.usize_opt(section, key)
    }

    fn check_layout(&mut self) {
        for (name, value) in self.table {
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
                self.problems.push(format!("unknown section [{name}]"));
                continue;
            };
            let Some(t) = value.as_table() else {
                self.problems.push(format!("`{name}` must be a section"));
                continue;
            };
            for key in t.keys() {
                if !keys.contains(&key.as_str()) {
                    self.problems.push(format!("unknown key {name}.{key}"));
                }
            }
        }
    }

    fn build(&mut self, base_dir: &Path) -> RunConfig {
        self.check_layout();
        let mut warnings = Vec::new();

        let dim = self.required_usize("grid", "n").unwrap_or(5);
        let radius = match self.f64_opt("grid", "R") {
            Some(r) => r,
            None => {
                if self.raw("grid", "R").is_none() {
                    self.problems.push("missing required key grid.R".into());
                }
                1.0
            }
        };
        let cells = self.required_usize("grid", "N").unwrap_or(64);
        let mapping = match self.str_opt("grid", "mapping").as_deref() {
            None | Some("uniform") => Mapping::Uniform,
            Some("sinh") => Mapping::Sinh {
                stretch: self.f64_or("grid", "stretch", 30.0),
            },
            Some(other) => {
                self.problems.push(format!(
                    "grid.mapping: unknown mapping `{other}` (uniform | sinh)"
                ));
                Mapping::Uniform
            }
        };
        if dim < 5 {
            warnings.push(format!(
                "grid.n = {dim}: the low-energy blowup regime needs n >= 5; running anyway"
            ));
        }
        let grid_spec = GridSpec {
            dim,
            radius,
            cells,
            mapping,
        };
        let grid = match grid_spec.build() {
            Ok(g) => Some(g),
            Err(e) => {
                self.problems.push(format!("grid: {e}"));
                None
            }
        };

        let base = match self.str_opt("initial", "kind").as_deref() {
            None | Some("constant") => BaseKind::Constant(self.f64_or("initial", "value", 1.0)),
            Some("bump") => BaseKind::Bump {
                level: self.f64_or("initial", "level", 1.0),
                amplitude: self.f64_or("initial", "amplitude", 1.0),
                width: self.f64_or("initial", "width", 0.2),
            },
            Some("file") => match self.str_opt("initial", "path") {
                Some(p) => {
                    let p = base_dir.join(p);
                    if !p.is_file() {
                        self.problems
                            .push(format!("initial.path: {} does not exist", p.display()));
                    }
                    BaseKind::File(p)
                }
                None => {
                    self.problems
                        .push("initial.path is required for kind = \"file\"".into());
                    BaseKind::Constant(1.0)
                }
            },
            Some(other) => {
                self.problems.push(format!(
                    "initial.kind: unknown kind `{other}` (constant | bump | file)"
                ));
                BaseKind::Constant(1.0)
            }
        };
        match &base {
            BaseKind::Constant(c) if !(*c > 0.0) => self
                .problems
                .push(format!("initial.value = {c} must be positive")),
            BaseKind::Bump {
                level,
                width,
                amplitude,
            } => {
                if !(*level > 0.0 && *level + amplitude.min(0.0) > 0.0) {
                    self.problems.push("initial bump must stay positive".into());
                }
                if !(*width > 0.0) {
                    self.problems
                        .push(format!("initial.width = {width} must be positive"));
                }
            }
            _ => {}
        }

        let family = if self.table.contains_key("family") {
            let gamma = self.f64_or("family", "gamma", 1.5);
            if !(gamma > 1.0) {
                self.problems
                    .push(format!("family.gamma = {gamma} must exceed 1"));
            }
            let etas = match (
                self.f64_list("family", "eta_divisors"),
                self.f64_list("family", "etas"),
            ) {
                (Some(_), Some(_)) => {
                    self.problems
                        .push("family: give either eta_divisors or etas, not both".into());
                    EtaList::Divisors(vec![])
                }
                (Some(d), None) => {
                    if d.iter().any(|x| !(*x > 1.0)) {
                        self.problems
                            .push("family.eta_divisors entries must exceed 1".into());
                    }
                    EtaList::Divisors(d)
                }
                (None, Some(e)) => {
                    if e.iter().any(|x| !(*x > 0.0)) {
                        self.problems
                            .push("family.etas entries must be positive".into());
                    }
                    EtaList::Absolute(e)
                }
                (None, None) => EtaList::Divisors(vec![16.0]),
            };
            if etas.is_empty() {
                self.problems.push("family: eta list is empty".into());
            }
            Some(FamilySpec { gamma, etas })
        } else {
            None
        };

        let t_end = self.f64_or("dynamics", "t_end", 1.0);
        let mut stepper = match &grid {
            Some(g) => StepperConfig::for_grid(g, t_end.max(f64::MIN_POSITIVE)),
            None => StepperConfig::for_grid(&Grid::new(5, 1.0, 16).expect("valid"), 1.0),
        };
        stepper.t_end = t_end;
        stepper.cfl = self.f64_or("dynamics", "cfl", stepper.cfl);
        stepper.dt_min = self.f64_or("dynamics", "dt_min", stepper.dt_min);
        stepper.dt_max = self.f64_or("dynamics", "dt_max", stepper.dt_max);
        let dt_init_default = stepper
            .dt_init
            .clamp(stepper.dt_min, stepper.dt_max.max(stepper.dt_min));
        stepper.dt_init = self.f64_or("dynamics", "dt_init", dt_init_default);
        stepper.blowup_factor = self.f64_or("dynamics", "blowup_factor", stepper.blowup_factor);
        if let Some(k) = self.usize_opt("dynamics", "output_every") {
            stepper.output_every = k;
        }
        if let Some(k) = self.usize_opt("dynamics", "max_steps") {
            stepper.max_steps = k;
        }
        let snapshot_every = self.usize_opt("dynamics", "snapshot_every").unwrap_or(0);
        self.problems.extend(stepper.violations());

        let kappa = self.f64_or("probe", "kappa", dim as f64 - 0.5);
        let beta = self.f64_or("probe", "beta", kappa);
        let rhos = self
            .f64_list("probe", "rho")
            .unwrap_or_else(|| vec![radius / 8.0, radius / 4.0, radius / 2.0]);
        let probe = ProbeConfig::new(dim, kappa, beta, rhos);
        if let Some(g) = &grid {
            self.problems.extend(probe.violations(g));
        }

        let output_dir = PathBuf::from(
            self.str_opt("output", "dir")
                .unwrap_or_else(|| "isp-output".to_string()),
        );
        let seed = self.usize_opt("run", "seed").unwrap_or(0) as u64;

        let workers = self.usize_opt("sweep", "workers").unwrap_or(1);
        if workers == 0 {
            self.problems
                .push("sweep.workers must be at least 1".into());
        }
        let sweep_cells = self
            .f64_list("sweep", "cells")
            .unwrap_or_default()
            .into_iter()
            .map(|x| {
                if !(x >= 4.0 && x.fract() == 0.0) {
                    self.problems
                        .push(format!("sweep.cells entry {x} must be an integer >= 4"));
                }
                x as usize
            })
            .collect();
        let eta_divisors = self.f64_list("sweep", "eta_divisors").unwrap_or_default();
        if eta_divisors.iter().any(|x| !(*x > 1.0)) {
            self.problems
                .push("sweep.eta_divisors entries must exceed 1".into());
        }

        RunConfig {
            grid: grid_spec,
            base,
            family,
            stepper,
            snapshot_every,
            probe,
            output_dir,
            seed,
            sweep: SweepSpec {
                workers: workers.max(1),
                cells: sweep_cells,
                eta_divisors,
            },
            warnings,
        }
    }
}
