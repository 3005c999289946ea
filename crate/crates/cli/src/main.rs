//! `endosim`: run pulse programs, replicate the decoupling and phase-gate
//! experiments, sweep parameters and calibrate gates.

mod failure;
mod output;
mod settings;
mod sweep;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use endosim_core::bangbang::{
    kicked_rabi, lock_release, odd_even, summary_line, ExperimentResult, ExperimentSpec, KickSchedule,
};
use endosim_core::config::KeyValues;
use endosim_core::engine::{ensemble_average, trajectory_csv};
use endosim_core::phasegate::{
    calibrated_kick, is_strictly_monotone, linear_grid, resonant_gate, resonant_partner_gate,
    solve_amplitude_for_phase, symmetric_gate, with_simulation, PhaseMapper, SolveOptions,
};
use endosim_core::pulse::parse_program;
use log::info;

use failure::Failure;
use output::{emit_table, read_file, write_atomic};
use settings::{initial_state, is_model_or_sim_key, is_run_key, load_key_values, merge, model_and_config};
use sweep::{is_sweep_key, run_sweep, SweepSpec};

#[derive(Parser, Debug)]
#[command(name = "endosim", version, about = "Electron-nuclear spin dynamics of N@C60")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Physical parameters and simulation settings (key=value file).
    #[arg(long, global = true)]
    preset: Option<PathBuf>,
    /// Pulse program (.pp).
    #[arg(long, global = true)]
    program: Option<PathBuf>,
    /// Experiment or sweep spec (key=value file).
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the RF-amplitude ensemble.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one setting, e.g. `--set dt_max_us=0.1`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve a pulse program and write the trajectory CSV.
    Run,
    /// Run one of the built-in experiments.
    Replicate {
        #[arg(value_enum)]
        figure: Figure,
    },
    /// Evaluate a driver over a parameter grid (needs --spec and --out).
    Sweep,
    /// Design a phase gate and print its summary and program snippet.
    Calibrate {
        /// Target relative phase, rad (symmetric mode).
        #[arg(long, allow_negative_numbers = true)]
        phase: Option<f64>,
        #[arg(long, value_enum, default_value_t = CalMode::Symmetric)]
        mode: CalMode,
        /// Pick the solution with duration nearest this value, µs.
        #[arg(long)]
        duration: Option<f64>,
        /// Drive amplitude, MHz (resonant mode).
        #[arg(long)]
        nu1: Option<f64>,
        #[arg(long, default_value_t = 1)]
        cycles: u32,
        /// Driven and partner cycle counts (partner mode).
        #[arg(long)]
        n1: Option<u32>,
        #[arg(long)]
        n2: Option<u32>,
    },
    /// Parse the given files and report problems without simulating.
    Validate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Figure {
    Fig3a,
    Fig3c,
    Fig3e,
    Fig3f,
    Fig4,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CalMode {
    Symmetric,
    Resonant,
    Partner,
}

const FIG4_KEYS: [&str; 4] = ["cycles", "nu1_min_MHz", "nu1_max_MHz", "grid_points"];

fn sources<F>(paths: &[Option<&Path>], known: F) -> Result<Vec<KeyValues>, Failure>
where
    F: Fn(&str) -> bool + Copy,
{
    paths.iter().flatten().map(|p| load_key_values(p, known)).collect()
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .program
        .as_deref()
        .ok_or_else(|| Failure::input("run needs --program <file.pp>"))?;
    let program = parse_program(&read_file(path)?).map_err(|e| Failure::from(e).in_file(path))?;
    let kv = merge(
        &sources(&[cli.preset.as_deref()], is_run_key)?,
        &cli.overrides,
        cli.seed,
        is_run_key,
    )?;
    let (model, cfg) = model_and_config(&kv)?;
    let psi = initial_state(&model, &kv, &cfg)?;
    let traj = ensemble_average(&model, &psi, &program, &cfg)?;
    let last = traj.times.len() - 1;
    let metrics = vec![
        ("samples".to_string(), traj.times.len() as f64),
        ("final_p01".to_string(), traj.p01()[last]),
        ("final_other".to_string(), traj.other()[last]),
    ];
    emit_table(cli.out.as_deref(), &trajectory_csv(&traj), "population", "")?;
    report(cli, &summary_line(&program.name, &metrics));
    Ok(())
}

/// Summary to stdout, or stderr when the CSV itself went to stdout.
fn report(cli: &Cli, line: &str) {
    if cli.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn kick_markers(kicks: &[f64]) -> String {
    let mut s = String::new();
    for t in kicks {
        let _ = writeln!(s, "set arrow from {t}, graph 0 to {t}, graph 1 nohead lc rgb 'red'");
    }
    s
}

fn replicate(cli: &Cli, figure: Figure) -> Result<(), Failure> {
    if let Figure::Fig4 = figure {
        return replicate_fig4(cli);
    }
    let known = ExperimentSpec::is_known_key;
    let kv = merge(
        &sources(&[cli.preset.as_deref(), cli.spec.as_deref()], known)?,
        &cli.overrides,
        cli.seed,
        known,
    )?;
    let mut spec = ExperimentSpec::from_key_values(&kv)?;
    let result: ExperimentResult = match figure {
        Figure::Fig3a => kicked_rabi(&spec)?,
        Figure::Fig3c => odd_even(&spec)?,
        Figure::Fig3e => {
            // kicks through the whole record: locking only
            let tr = spec.rabi_period();
            let total = spec.total.unwrap_or(2.0 * tr);
            if spec.schedule.is_none() {
                spec.schedule = Some(KickSchedule::Periodic {
                    period: tr / 50.0,
                    start: tr / 100.0,
                    end: total,
                });
            }
            spec.total = Some(total);
            let (mut r, m) = lock_release(&spec)?;
            r.name = "fig3e".into();
            r.metrics.retain(|(k, _)| !k.contains("after_release"));
            r.metrics.push(("locked".into(), f64::from(u8::from(m.max_locked <= m.bound + 1e-3))));
            r
        }
        Figure::Fig3f => lock_release(&spec)?.0,
        Figure::Fig4 => unreachable!(),
    };
    let name = format!("{figure:?}").to_lowercase();
    emit_table(
        cli.out.as_deref(),
        &trajectory_csv(&result.trajectory),
        "population",
        &kick_markers(&result.kick_times),
    )?;
    report(cli, &summary_line(&name, &result.metrics));
    Ok(())
}

fn replicate_fig4(cli: &Cli) -> Result<(), Failure> {
    let known = |k: &str| is_model_or_sim_key(k) || FIG4_KEYS.contains(&k);
    let mut kv = merge(
        &sources(&[cli.preset.as_deref(), cli.spec.as_deref()], known)?,
        &cli.overrides,
        cli.seed,
        known,
    )?;
    if kv.get("a_MHz").is_none() {
        kv.set("a_MHz", "15.8");
    }
    let (model, cfg) = model_and_config(&kv)?;
    let n: u32 = kv.parsed("cycles")?.unwrap_or(1);
    let lo = kv.f64_or("nu1_min_MHz", 2.0)?;
    let hi = kv.f64_or("nu1_max_MHz", 40.0)?;
    let points: usize = kv.parsed("grid_points")?.unwrap_or(153);
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(Failure::input("fig4 needs 0 < nu1_min_MHz < nu1_max_MHz and grid_points >= 2"));
    }
    let map = PhaseMapper::new(&model, n, &cfg).map(&linear_grid(lo, hi, points))?;
    let mut csv = String::from("nu1_MHz,duration_us,phase_rad,leakage\n");
    for p in &map {
        let _ = writeln!(csv, "{:.8e},{:.8e},{:.8e},{:.8e}", p.nu1, p.duration, p.phase, p.leakage);
    }
    let half = symmetric_gate(&model, 0.5 * model.params.a_mhz, n)?;
    let metrics = vec![
        ("points".to_string(), map.len() as f64),
        ("monotone".to_string(), f64::from(u8::from(is_strictly_monotone(&map)))),
        ("phase_first_rad".to_string(), map[0].phase),
        ("phase_last_rad".to_string(), map[map.len() - 1].phase),
        ("max_leakage".to_string(), map.iter().map(|p| p.leakage).fold(0.0, f64::max)),
        ("duration_at_half_a_us".to_string(), half.duration),
    ];
    emit_table(cli.out.as_deref(), &csv, "phase (rad)", "")?;
    report(cli, &summary_line("fig4", &metrics));
    Ok(())
}

fn sweep(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .spec
        .as_deref()
        .ok_or_else(|| Failure::input("sweep needs --spec <file>"))?;
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| Failure::input("sweep needs --out <file.csv>"))?;
    let kv = merge(
        &sources(&[cli.preset.as_deref(), Some(path)], is_sweep_key)?,
        &cli.overrides,
        cli.seed,
        is_sweep_key,
    )?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let spec = SweepSpec::from_key_values(&kv, dir).map_err(|e| e.in_file(path))?;
    info!("sweep `{}` over {} points", spec.driver, spec.len());
    let rows = run_sweep(&spec, out)?;
    println!("{{experiment=sweep, driver={}, rows={rows}}}", spec.driver);
    Ok(())
}

fn calibrate(cli: &Cli, cmd: &Command) -> Result<(), Failure> {
    let Command::Calibrate {
        phase,
        mode,
        duration,
        nu1,
        cycles,
        n1,
        n2,
    } = cmd
    else {
        unreachable!()
    };
    let kv = merge(
        &sources(&[cli.preset.as_deref()], is_model_or_sim_key)?,
        &cli.overrides,
        cli.seed,
        is_model_or_sim_key,
    )?;
    let (model, cfg) = model_and_config(&kv)?;
    let gate = match mode {
        CalMode::Symmetric => {
            let phase = phase.ok_or_else(|| Failure::input("symmetric mode needs --phase <rad>"))?;
            match duration {
                Some(t) => calibrated_kick(&model, phase, *t, &cfg)?,
                None => {
                    let opts = SolveOptions::default();
                    solve_amplitude_for_phase(&model, phase, *cycles, &opts, &cfg)?
                }
            }
        }
        CalMode::Resonant => {
            let nu1 = nu1.ok_or_else(|| Failure::input("resonant mode needs --nu1 <MHz>"))?;
            with_simulation(&model, resonant_gate(&model, nu1, *cycles)?, &cfg)?
        }
        CalMode::Partner => {
            let (n1, n2) = n1
                .zip(*n2)
                .ok_or_else(|| Failure::input("partner mode needs --n1 and --n2"))?;
            with_simulation(&model, resonant_partner_gate(&model, n1, n2)?, &cfg)?
        }
    };
    println!("{}", gate.summary());
    match cli.out.as_deref() {
        Some(p) => write_atomic(p, &gate.pp_snippet())?,
        None => print!("{}", gate.pp_snippet()),
    }
    Ok(())
}

fn validate(cli: &Cli) -> Result<(), Failure> {
    let mut checked = 0;
    if let Some(path) = cli.program.as_deref() {
        let p = parse_program(&read_file(path)?).map_err(|e| Failure::from(e).in_file(path))?;
        p.validate().map_err(|e| Failure::from(e).in_file(path))?;
        println!(
            "ok {}: program `{}`, {} segments, {} kicks, {} µs",
            path.display(),
            p.name,
            p.segments.len(),
            p.kicks.len(),
            p.total_duration
        );
        checked += 1;
    }
    if let Some(path) = cli.preset.as_deref() {
        let kv = load_key_values(path, is_run_key)?;
        let (model, cfg) = model_and_config(&kv).map_err(|e| e.in_file(path))?;
        initial_state(&model, &kv, &cfg).map_err(|e| e.in_file(path))?;
        println!("ok {}: preset, {} keys", path.display(), kv.entries().len());
        checked += 1;
    }
    if let Some(path) = cli.spec.as_deref() {
        let kv = load_key_values(path, is_sweep_key)?;
        if kv.get("driver").is_some() {
            let dir = path.parent().unwrap_or(Path::new("."));
            let s = SweepSpec::from_key_values(&kv, dir).map_err(|e| e.in_file(path))?;
            println!("ok {}: sweep `{}`, {} points", path.display(), s.driver, s.len());
        } else {
            kv.check_keys(ExperimentSpec::is_known_key)
                .map_err(|e| Failure::from(e).in_file(path))?;
            ExperimentSpec::from_key_values(&kv).map_err(|e| Failure::from(e).in_file(path))?;
            println!("ok {}: experiment spec, {} keys", path.display(), kv.entries().len());
        }
        checked += 1;
    }
    if checked == 0 {
        return Err(Failure::input("validate needs --program, --preset or --spec"));
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("ENDOSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::input(format!("ENDOSIM_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Run => run(cli),
        Command::Replicate { figure } => replicate(cli, *figure),
        Command::Sweep => sweep(cli),
        cmd @ Command::Calibrate { .. } => calibrate(cli, cmd),
        Command::Validate => validate(cli),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
