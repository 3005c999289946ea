use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use endosim_core::bangbang::rf_amplitude;
use endosim_core::model::SpinModel;
use endosim_core::pulse::{parse_program, serialize, Channel, PulseProgram, Segment};
use tempfile::TempDir;

fn endosim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endosim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Rows of a trajectory CSV as numbers (NaN allowed).
fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

/// Metric value from a `{k=v, ...}` summary line.
fn metric(summary: &str, key: &str) -> f64 {
    let body = summary.trim().trim_start_matches('{').trim_end_matches('}');
    body.split(", ")
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {summary}"))
        .parse()
        .unwrap()
}

fn rabi_program(nu1: f64, total: f64) -> String {
    let m = SpinModel::reference();
    let mut p = PulseProgram::new("rabi", total).with_sampling(total / 100.0);
    p.push_segment(
        Segment::new(Channel::rf(), 0.0, total, m.nuclear_frequency_0(), rf_amplitude(&m, nu1), 0.0).unwrap(),
    )
    .unwrap();
    serialize(&p)
}

#[test]
fn free_evolution_keeps_populations() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "free.pp", "name free\ntotal 10\nsample every=1\n");
    let o = endosim(dir.path(), &["run", "--program", "free.pp", "--out", "free.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("free.csv")).unwrap();
    assert!(csv.starts_with("time_us,p00,p01,p10,p11,other,phase01_rad\n"));
    let r = rows(&csv);
    assert_eq!(r.len(), 11);
    for row in &r {
        assert_eq!(&row[1..6], &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }
    assert!(dir.path().join("free.csv.gp").exists());
}

#[test]
fn rf_program_oscillates_at_rabi_frequency() {
    let dir = TempDir::new().unwrap();
    let nu1 = 0.004;
    write(dir.path(), "rabi.pp", &rabi_program(nu1, 500.0));
    let o = endosim(
        dir.path(),
        &["run", "--program", "rabi.pp", "--set", "cutoff_RF_MHz=0.015", "--out", "r.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for row in rows(&fs::read_to_string(dir.path().join("r.csv")).unwrap()) {
        let expect = (std::f64::consts::PI * nu1 * row[0]).sin().powi(2);
        assert!((row[2] - expect).abs() < 1e-6, "t = {}: {} vs {expect}", row[0], row[2]);
    }
}

#[test]
fn missing_file_exits_2_with_path() {
    let dir = TempDir::new().unwrap();
    let o = endosim(dir.path(), &["run", "--program", "nowhere.pp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.pp"));
}

#[test]
fn parse_error_exits_2_with_line() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.pp", "name bad\ntotal 5\nseg RF t=0 dur=1 f=22 amp=0.1 ph=zero\n");
    let o = endosim(dir.path(), &["run", "--program", "bad.pp", "--out", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!dir.path().join("bad.csv").exists());

    write(dir.path(), "preset.txt", "a_MHz=15\nwhat=1\n");
    write(dir.path(), "ok.pp", "name ok\ntotal 1\n");
    let o = endosim(dir.path(), &["run", "--program", "ok.pp", "--preset", "preset.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("preset.txt") && stderr(&o).contains("line 2"));
}

#[test]
fn invariant_violation_exits_3_without_output() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "hot.pp", "name hot\ntotal 1\nseg MW t=0 dur=1 f=9650 amp=1e9 ph=0\n");
    let o = endosim(dir.path(), &["run", "--program", "hot.pp", "--out", "hot.csv"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("hot.csv").exists());
}

#[test]
fn unknown_override_and_figure_are_rejected() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "ok.pp", "name ok\ntotal 1\n");
    let o = endosim(dir.path(), &["run", "--program", "ok.pp", "--set", "colour=red"]);
    assert_eq!(o.status.code(), Some(2));
    let o = endosim(dir.path(), &["replicate", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "rabi.pp", &rabi_program(0.004, 200.0));
    let args = |out: &'static str| {
        vec![
            "run", "--program", "rabi.pp", "--seed", "7", "--set", "ensemble_sigma=0.05", "--set",
            "ensemble_samples=8", "--set", "cutoff_RF_MHz=0.015", "--out", out,
        ]
    };
    assert!(endosim(dir.path(), &args("a.csv")).status.success());
    assert!(endosim(dir.path(), &args("b.csv")).status.success());
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn replicate_reports_figure_metrics() {
    let dir = TempDir::new().unwrap();
    let o = endosim(dir.path(), &["replicate", "fig3a", "--out", "a.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(metric(&stdout(&o), "reversal_score") < 1e-3);
    let gp = fs::read_to_string(dir.path().join("a.csv.gp")).unwrap();
    assert!(gp.contains("lc rgb 'red'"));

    let o = endosim(dir.path(), &["replicate", "fig3c", "--out", "c.csv"]);
    assert_eq!(metric(&stdout(&o), "alternates"), 1.0);

    let o = endosim(dir.path(), &["replicate", "fig3e", "--out", "e.csv"]);
    let s = stdout(&o);
    assert!(metric(&s, "lock_residual") <= metric(&s, "lock_bound") + 1e-3);

    let o = endosim(dir.path(), &["replicate", "fig3f", "--out", "f.csv"]);
    assert!((metric(&stdout(&o), "period_after_release_us") - 250.0).abs() < 5.0);

    let o = endosim(dir.path(), &["replicate", "fig4", "--set", "grid_points=16", "--out", "g.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(metric(&stdout(&o), "monotone"), 1.0);
    let table = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(table.lines().count(), 17);
}

#[test]
fn one_point_sweep_matches_run() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "rabi.pp", &rabi_program(0.004, 100.0));
    write(dir.path(), "one.txt", "driver=run\nprogram=rabi.pp\ncutoff_RF_MHz=0.015\ngrid.dt_max_us=0.5\n");
    let o = endosim(dir.path(), &["sweep", "--spec", "one.txt", "--out", "one.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = endosim(
        dir.path(),
        &["run", "--program", "rabi.pp", "--set", "cutoff_RF_MHz=0.015", "--out", "run.csv"],
    );
    assert!(o.status.success());
    let run = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let last = run.lines().last().unwrap();
    let sweep = fs::read_to_string(dir.path().join("one.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "dt_max_us,p00,p01,p10,p11,other,phase01_rad");
    assert_eq!(lines.len(), 2);
    let (_, run_cells) = last.split_once(',').unwrap();
    let (_, sweep_cells) = lines[1].split_once(',').unwrap();
    assert_eq!(run_cells, sweep_cells);
}

#[test]
fn gate_sweep_is_monotone_and_resumable() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "gate.txt", "driver=symmetric_gate\na_MHz=15.8\ngrid.nu1_MHz=2:40:7\n");
    let o = endosim(dir.path(), &["sweep", "--spec", "gate.txt", "--out", "gate.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let full = fs::read_to_string(dir.path().join("gate.csv")).unwrap();
    let phases: Vec<f64> = rows(&full).iter().map(|r| r[2]).collect();
    assert_eq!(phases.len(), 7);
    assert!(phases.windows(2).all(|w| w[1] < w[0]), "{phases:?}");

    // interrupted run: three rows done, the fourth torn mid-write
    let manifest = dir.path().join("gate.csv.manifest");
    let text = fs::read_to_string(&manifest).unwrap();
    let kept: Vec<&str> = text.lines().take(4).collect();
    let torn = &text.lines().nth(4).unwrap()[..20];
    fs::write(&manifest, format!("{}\n{torn}", kept.join("\n"))).unwrap();
    fs::remove_file(dir.path().join("gate.csv")).unwrap();
    let o = endosim(dir.path(), &["sweep", "--spec", "gate.txt", "--out", "gate.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("gate.csv")).unwrap(), full);
}

#[test]
fn malformed_grid_exits_2() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.txt", "driver=symmetric_gate\ngrid.nu1_MHz=2:40\n");
    let o = endosim(dir.path(), &["sweep", "--spec", "bad.txt", "--out", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert!(!dir.path().join("bad.csv").exists());
}

#[test]
fn calibrate_emits_parseable_snippet() {
    let dir = TempDir::new().unwrap();
    let o = endosim(
        dir.path(),
        &["calibrate", "--phase", "3.141592653589793", "--duration", "0.12", "--out", "kick.pp"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("mode=symmetric-detuning"));
    assert!((metric(&s, "phase_simulated") - std::f64::consts::PI).abs() < 1e-3);
    let p = parse_program(&fs::read_to_string(dir.path().join("kick.pp")).unwrap()).unwrap();
    assert_eq!(p.segments.len(), 1);
    assert!((p.total_duration - 0.12).abs() < 0.03);
}

#[test]
fn validate_checks_without_running() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "ok.pp", "name ok\ntotal 2\nkick t=1 ph=1.5\n");
    let o = endosim(dir.path(), &["validate", "--program", "ok.pp"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1 kicks"));
    write(dir.path(), "overlap.pp", "name o\nseg RF t=0 dur=2 f=22 amp=0.1 ph=0\nseg RF t=1 dur=2 f=22 amp=0.1 ph=0\n");
    let o = endosim(dir.path(), &["validate", "--program", "overlap.pp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}
