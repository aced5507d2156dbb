use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use isp_chemotaxis::config::{load_config, resolve_output, RunConfig};
use isp_chemotaxis::harness::{
    cmd_energy, cmd_family, cmd_probe, cmd_simulate, cmd_sweep, energy_text, exit_code,
};
use isp_chemotaxis::verify::{all_passed, run_checks, Level};
use isp_chemotaxis::Result;

/// Radial simulator and verification harness for chemotaxis with indirect
/// signal production.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set grid.N=2048`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: Vec<String>) -> Result<RunConfig> {
        let mut all = self.overrides.clone();
        all.extend(extra);
        let cfg = load_config(&self.config, &all)?;
        for w in &cfg.warnings {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; exits 0 when completed, 2 on blowup, 1 otherwise.
    Simulate(ConfigArgs),
    /// Energy table of the concentrated family plus one snapshot per eta.
    Family {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        gamma: Option<f64>,
        /// Absolute eta values, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "eta_divisors")]
        etas: Vec<f64>,
        /// Divisors d giving eta = eta_star / d, comma separated.
        #[arg(long, value_delimiter = ',')]
        eta_divisors: Vec<f64>,
        /// Base data kind: constant, bump or file.
        #[arg(long)]
        base: Option<String>,
    },
    /// Probe report from a diagnostics file and a snapshot directory.
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output dir>/diagnostics.csv`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Defaults to `<output dir>/snapshots`.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Defaults to `<output dir>/probes.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter sweep over cell counts and eta divisors.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the self-check scorecard.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: LevelArg,
    },
    /// Print the energy report of a snapshot file.
    Energy {
        #[command(flatten)]
        cfg: ConfigArgs,
        snapshot: PathBuf,
    },
}

fn list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.load(vec![])?;
            let report = cmd_simulate(&cfg)?;
            print!("{}", report.summary_text());
            Ok(exit_code(report.summary.status))
        }
        Command::Family {
            cfg,
            gamma,
            etas,
            eta_divisors,
            base,
        } => {
            let mut extra = Vec::new();
            if let Some(g) = gamma {
                extra.push(format!("family.gamma={g:?}"));
            }
            if !etas.is_empty() {
                extra.push(format!("family.etas={}", list(&etas)));
            }
            if !eta_divisors.is_empty() {
                extra.push(format!("family.eta_divisors={}", list(&eta_divisors)));
            }
            if let Some(b) = base {
                extra.push(format!("initial.kind=\"{b}\""));
            }
            let mut config = cfg.load(extra.clone())?;
            if config.family.is_none() {
                extra.push("family.gamma=1.5".into());
                config = cfg.load(extra)?;
            }
            let rows = cmd_family(&config)?;
            println!("eta,F,mass,min_u");
            for r in &rows {
                println!("{}", r.csv_row());
            }
            Ok(0)
        }
        Command::Probe {
            cfg,
            diagnostics,
            snapshots,
            out,
        } => {
            let config = cfg.load(vec![])?;
            let dir = resolve_output(&config.output_dir);
            let diagnostics = diagnostics.unwrap_or_else(|| dir.join("diagnostics.csv"));
            let snapshots = snapshots.unwrap_or_else(|| dir.join("snapshots"));
            let out = out.unwrap_or_else(|| dir.join("probes.csv"));
            let report = cmd_probe(&config, &diagnostics, &snapshots, &out)?;
            println!(
                "{} probe rows, {} hard failures -> {}",
                report.entries.len(),
                report.hard_failures(),
                out.display()
            );
            Ok(if report.hard_failures() == 0 { 0 } else { 1 })
        }
        Command::Sweep { cfg, workers } => {
            let mut config = cfg.load(vec![])?;
            if let Some(w) = workers {
                config.sweep.workers = w.max(1);
            }
            let rows = cmd_sweep(&config)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            for r in &rows {
                if let Err(e) = &r.outcome {
                    eprintln!("run N={} d={:?} failed: {e}", r.cells, r.eta_divisor);
                }
            }
            println!("{} runs, {} failed", rows.len(), failed);
            Ok(0)
        }
        Command::Verify { level } => {
            let level = match level {
                LevelArg::Fast => Level::Fast,
                LevelArg::Full => Level::Full,
            };
            let checks = run_checks(level);
            for c in &checks {
                println!("{c}");
            }
            Ok(if all_passed(&checks) { 0 } else { 1 })
        }
        Command::Energy { cfg, snapshot } => {
            let config = cfg.load(vec![])?;
            print!("{}", energy_text(&cmd_energy(&config, &snapshot)?));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
