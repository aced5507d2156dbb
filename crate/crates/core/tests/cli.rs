use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isp_chemotaxis::io::{read_diagnostics, read_table, FORMAT_LINE};

const HOMOGENEOUS: &str = "# format_version=1
[grid]
n = 5
R = 1.0
N = 64

[dynamics]
t_end = 0.5
output_every = 5
";

const BLOWUP: &str = "# format_version=1
[grid]
n = 5
R = 1.0
N = 1024
mapping = \"sinh\"
stretch = 30.0

[family]
gamma = 1.5
eta_divisors = [32.0]

[dynamics]
output_every = 1
";

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_isp-chemotaxis"))
            .args(args)
            .current_dir(self.path())
            .env("ISP_OUTPUT_ROOT", self.path().join("root"))
            .output()
            .unwrap()
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.path().join("root").join(rel)
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn homogeneous_run_completes() {
    let sb = Sandbox::new();
    sb.write("h.toml", HOMOGENEOUS);
    let o = sb.run(&["simulate", "-c", "h.toml", "--set", "output.dir=\"h\""]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let diag = std::fs::read_to_string(sb.out("h/diagnostics.csv")).unwrap();
    assert!(diag.starts_with(FORMAT_LINE));
    assert!(
        read_diagnostics(&sb.out("h/diagnostics.csv"))
            .unwrap()
            .len()
            >= 2
    );
    let summary = std::fs::read_to_string(sb.out("h/summary.txt")).unwrap();
    assert!(summary.contains("status = completed"));
    let index = read_table(&sb.out("h/snapshots/index.csv"), "step,t").unwrap();
    assert!(index.len() >= 2);
}

#[test]
fn concentrated_data_blows_up_with_exit_two() {
    let sb = Sandbox::new();
    sb.write("b.toml", BLOWUP);
    let o = sb.run(&["simulate", "-c", "b.toml", "--set", "output.dir=\"b\""]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("t_b = "));
}

#[test]
fn corrupted_snapshot_input_exits_one() {
    let sb = Sandbox::new();
    sb.write("bad.csv", "# format_version=1\nr,u,v,w,f,g\n0.1,1,1\n");
    let cfg = format!("{HOMOGENEOUS}[initial]\nkind = \"file\"\npath = \"bad.csv\"\n");
    sb.write("c.toml", &cfg);
    let o = sb.run(&["simulate", "-c", "c.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("parse error"), "{}", stderr(&o));
}

#[test]
fn snapshot_restart_reproduces_the_terminal_state() {
    let sb = Sandbox::new();
    sb.write("h.toml", HOMOGENEOUS);
    let o = sb.run(&["simulate", "-c", "h.toml", "--set", "output.dir=\"first\""]);
    assert_eq!(code(&o), 0);
    let snap = sb.out("first/snapshots/snap_00000000.csv");
    let cfg = format!(
        "{HOMOGENEOUS}[initial]\nkind = \"file\"\npath = \"{}\"\n",
        snap.display()
    );
    sb.write("r.toml", &cfg);
    let o = sb.run(&["simulate", "-c", "r.toml", "--set", "output.dir=\"second\""]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = std::fs::read(sb.out("first/diagnostics.csv")).unwrap();
    let b = std::fs::read(sb.out("second/diagnostics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_errors_name_the_key() {
    let sb = Sandbox::new();
    sb.write("m.toml", "# format_version=1\n[grid]\nn = 5\nR = 1.0\n");
    let o = sb.run(&["simulate", "-c", "m.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("grid.N"));

    sb.write("low.toml", &HOMOGENEOUS.replace("n = 5", "n = 3"));
    let o = sb.run(&["simulate", "-c", "low.toml"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn runs_are_deterministic() {
    let sb = Sandbox::new();
    sb.write("b.toml", BLOWUP);
    for dir in ["x", "y"] {
        let o = sb.run(&[
            "simulate",
            "-c",
            "b.toml",
            "--set",
            &format!("output.dir=\"{dir}\""),
        ]);
        assert_eq!(code(&o), 2);
    }
    for f in ["diagnostics.csv", "summary.txt"] {
        assert_eq!(
            std::fs::read(sb.out(&format!("x/{f}"))).unwrap(),
            std::fs::read(sb.out(&format!("y/{f}"))).unwrap()
        );
    }
}

#[test]
fn family_table_and_snapshots() {
    let sb = Sandbox::new();
    sb.write("b.toml", BLOWUP);
    let o = sb.run(&[
        "family",
        "-c",
        "b.toml",
        "--eta-divisors",
        "4,8,16,32",
        "--set",
        "output.dir=\"fam\"",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_table(&sb.out("fam/family.csv"), "eta,F,mass,min_u").unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|p| p[1][1] < p[0][1]));
    for k in 0..4 {
        assert!(sb.out(&format!("fam/family/eta_{k:02}.csv")).is_file());
    }
    let o = sb.run(&["family", "-c", "b.toml", "--set", "family.eta_divisors=[]"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn probe_and_energy_commands() {
    let sb = Sandbox::new();
    sb.write("b.toml", &format!("{BLOWUP}snapshot_every = 25\n"));
    let o = sb.run(&["simulate", "-c", "b.toml", "--set", "output.dir=\"p\""]);
    assert_eq!(code(&o), 2);
    let o = sb.run(&["probe", "-c", "b.toml", "--set", "output.dir=\"p\""]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(sb.out("p/probes.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(FORMAT_LINE));
    assert_eq!(
        lines.next(),
        Some("probe,param,sample,lhs,rhs_free,implied_C,hard_pass")
    );
    assert!(text.contains("\nodi,"));
    assert!(!text.contains(",fail"));

    let snap = sb.out("p/snapshots/snap_00000000.csv");
    let o = sb.run(&["energy", "-c", "b.toml", snap.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("F = "));
}

fn sweep_csv(sb: &Sandbox, cfg: &str, dir: &str, workers: &str) -> Vec<u8> {
    let o = sb.run(&[
        "sweep",
        "-c",
        cfg,
        "--workers",
        workers,
        "--set",
        &format!("output.dir=\"{dir}\""),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    std::fs::read(sb.out(&format!("{dir}/sweep.csv"))).unwrap()
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let sb = Sandbox::new();
    sb.write(
        "s.toml",
        &format!("{BLOWUP}\n[sweep]\ncells = [512, 1024]\neta_divisors = [8.0, 16.0, 32.0]\n"),
    );
    let one = sweep_csv(&sb, "s.toml", "w1", "1");
    let eight = sweep_csv(&sb, "s.toml", "w8", "8");
    assert_eq!(one, eight);

    // blowup time shrinks as eta decreases
    let rows = read_sweep(&sb.out("w1/sweep.csv"));
    for cells in ["512", "1024"] {
        let tb: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] == cells)
            .map(|r| {
                assert_eq!(r[3], "blown_up");
                r[4].parse().unwrap()
            })
            .collect();
        assert_eq!(tb.len(), 3);
        assert!(tb.windows(2).all(|p| p[1] <= p[0]), "{tb:?}");
    }
}

fn read_sweep(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn one_point_sweep_matches_simulate() {
    let sb = Sandbox::new();
    sb.write("b.toml", BLOWUP);
    let o = sb.run(&["simulate", "-c", "b.toml", "--set", "output.dir=\"single\""]);
    assert_eq!(code(&o), 2);
    sweep_csv(&sb, "b.toml", "sw", "2");
    for f in ["diagnostics.csv", "summary.txt"] {
        assert_eq!(
            std::fs::read(sb.out(&format!("single/{f}"))).unwrap(),
            std::fs::read(sb.out(&format!("sw/run_N1024_d32/{f}"))).unwrap()
        );
    }
}

#[test]
fn failed_sweep_points_are_recorded() {
    let sb = Sandbox::new();
    // 8 cells cannot resolve the bump; the row records the error
    sb.write("s.toml", &format!("{BLOWUP}\n[sweep]\ncells = [8, 1024]\n"));
    sweep_csv(&sb, "s.toml", "f", "2");
    let rows = read_sweep(&sb.out("f/sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][3], "error");
    assert_eq!(rows[1][3], "blown_up");
}

#[test]
fn verify_fast_passes() {
    let sb = Sandbox::new();
    let o = sb.run(&["verify", "--level", "fast"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn diagnostics_are_readable_while_open() {
    use isp_chemotaxis::dynamics::{sample_state, State};
    use isp_chemotaxis::grid::Grid;
    use isp_chemotaxis::helmholtz::HelmholtzSolver;
    use isp_chemotaxis::io::DiagnosticsWriter;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let g = Grid::new(5, 1.0, 16).unwrap();
    let s = HelmholtzSolver::new(g.clone());
    let state = State::new(g.constant(1.0), g.constant(1.0), 0.1).unwrap();
    let sample = sample_state(&state, &s, None).unwrap();
    let mut w = DiagnosticsWriter::create(&path).unwrap();
    for _ in 0..3 {
        w.write(&sample).unwrap();
    }
    // still open: every written row is already on disk
    assert_eq!(read_diagnostics(&path).unwrap().len(), 3);
    drop(w);
}
