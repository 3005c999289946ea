//! Parameter sweeps over `grid.<key>=...` lines of a spec file.
//!
//! Completed rows are appended to `<out>.manifest` as they finish; a rerun
//! with the same spec reuses them, so an interrupted sweep can be resumed
//! and still produces the same table.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use endosim_core::bangbang::{
    kicked_rabi, lock_release, odd_even, rabi, suppression_scan, ExperimentSpec,
};
use endosim_core::config::KeyValues;
use endosim_core::engine::{ensemble_average, SimConfig};
use endosim_core::model::PARAM_KEYS;
use endosim_core::phasegate::{calibrated_kick, symmetric_gate, PhaseMapper, DEFAULT_KICK_DURATION};
use endosim_core::pulse::{parse_program, PulseProgram};
use log::{info, warn};
use rayon::prelude::*;

use crate::failure::Failure;
use crate::output::{gnuplot_path, gnuplot_script, manifest_path, read_file, write_atomic};
use crate::settings::{initial_state, is_model_or_sim_key, is_run_key, model_and_config};

pub const DRIVERS: [&str; 8] = [
    "run",
    "rabi",
    "kicked_rabi",
    "odd_even",
    "lock_release",
    "suppression",
    "symmetric_gate",
    "calibrate",
];

const MANIFEST_TAG: &str = "endosim-sweep-manifest v1";

fn driver_accepts(driver: &str, key: &str) -> bool {
    match driver {
        "run" => is_run_key(key),
        "symmetric_gate" => is_model_or_sim_key(key) || key == "nu1_MHz" || key == "cycles",
        "calibrate" => is_model_or_sim_key(key) || key == "phase_rad" || key == "duration_us",
        _ => ExperimentSpec::is_known_key(key),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

/// `lo:hi:n` (n evenly spaced points, ends included) or a comma list.
pub fn parse_axis(key: &str, spec: &str) -> Result<Axis, String> {
    let bad = |why: &str| format!("malformed grid for `{key}` (`{spec}`): {why}");
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:hi:n"));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = parts[1].parse().map_err(|_| bad("hi is not a number"))?;
        let n: usize = parts[2].parse().map_err(|_| bad("n is not a positive integer"))?;
        if n == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad("need finite bounds and n >= 1"));
        }
        if n == 1 {
            vec![lo.to_string()]
        } else {
            (0..n)
                .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).to_string())
                .collect()
        }
    } else {
        let vals: Vec<String> = spec
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        if vals.iter().any(|v| v.parse::<f64>().is_err()) {
            return Err(bad("values must be numbers"));
        }
        vals
    };
    Ok(Axis {
        key: key.to_string(),
        values,
    })
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub driver: String,
    pub program: Option<(PathBuf, PulseProgram, String)>,
    pub base: KeyValues,
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    /// Build from merged key/values. `dir` resolves a relative `program` path.
    pub fn from_key_values(kv: &KeyValues, dir: &Path) -> Result<Self, Failure> {
        let driver = kv
            .get("driver")
            .ok_or_else(|| Failure::input("sweep spec needs `driver=`"))?
            .to_string();
        if !DRIVERS.contains(&driver.as_str()) {
            return Err(Failure::input(format!(
                "unknown driver `{driver}`; expected one of {}",
                DRIVERS.join(", ")
            )));
        }
        let mut base = KeyValues::new();
        let mut axes = Vec::new();
        let mut program = None;
        for e in kv.entries() {
            let at = |m: String| {
                if e.line > 0 {
                    Failure::input(format!("line {}: {m}", e.line))
                } else {
                    Failure::input(m)
                }
            };
            if e.key == "driver" {
                continue;
            }
            if e.key == "program" {
                let path = dir.join(&e.value);
                let text = read_file(&path)?;
                let p = parse_program(&text).map_err(|err| Failure::from(err).in_file(&path))?;
                program = Some((path, p, text));
                continue;
            }
            if let Some(key) = e.key.strip_prefix("grid.") {
                if !driver_accepts(&driver, key) {
                    return Err(at(format!("driver `{driver}` has no key `{key}` to sweep")));
                }
                axes.push(parse_axis(key, &e.value).map_err(at)?);
                continue;
            }
            if !driver_accepts(&driver, &e.key) {
                return Err(at(format!("unknown key `{}` for driver `{driver}`", e.key)));
            }
            base.set(&e.key, e.value.clone());
        }
        if driver == "run" && program.is_none() {
            return Err(Failure::input("driver `run` needs `program=<file.pp>`"));
        }
        if axes.is_empty() {
            return Err(Failure::input("sweep spec has no `grid.<key>=` line"));
        }
        Ok(SweepSpec {
            driver,
            program,
            base,
            axes,
        })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Grid values of point `index`; the last axis varies fastest.
    pub fn point(&self, index: usize) -> Vec<&str> {
        let mut rem = index;
        let mut out = vec![""; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[k] = &axis.values[rem % n];
            rem /= n;
        }
        out
    }

    pub fn point_key_values(&self, index: usize) -> KeyValues {
        let mut kv = self.base.clone();
        for (axis, v) in self.axes.iter().zip(self.point(index)) {
            kv.set(&axis.key, v);
        }
        kv
    }

    /// Changes whenever the driver, settings, grid or program text change.
    pub fn fingerprint(&self) -> u64 {
        let mut text = format!("driver={}\n{}", self.driver, self.base.to_text());
        for a in &self.axes {
            text.push_str(&format!("grid.{}={}\n", a.key, a.values.join(",")));
        }
        if let Some((_, _, src)) = &self.program {
            text.push_str(src);
        }
        fnv1a(text.as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

type Metrics = Vec<(String, f64)>;

fn compute_point(spec: &SweepSpec, kv: &KeyValues) -> Result<Metrics, Failure> {
    let named = |v: &[(&str, f64)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect();
    match spec.driver.as_str() {
        "run" => {
            let (model, cfg) = model_and_config(kv)?;
            let psi = initial_state(&model, kv, &cfg)?;
            let program = &spec.program.as_ref().expect("checked at parse").1;
            let traj = ensemble_average(&model, &psi, program, &cfg)?;
            let last = traj.times.len() - 1;
            let p = &traj.populations[last];
            let q: Vec<f64> = traj.qubit_levels.iter().map(|&l| p[l]).collect();
            Ok(named(&[
                ("p00", q[0]),
                ("p01", q[1]),
                ("p10", q[2]),
                ("p11", q[3]),
                ("other", traj.other()[last]),
                ("phase01_rad", traj.phase01[last].unwrap_or(f64::NAN)),
            ]))
        }
        "symmetric_gate" => {
            let (model, cfg) = model_and_config(kv)?;
            let nu1: f64 = kv.require("nu1_MHz")?;
            let n: u32 = kv.parsed("cycles")?.unwrap_or(1);
            let gate = symmetric_gate(&model, nu1, n)?;
            let point = PhaseMapper::new(&model, n, &cfg).map(&[nu1])?[0].clone();
            Ok(named(&[
                ("duration_us", gate.duration),
                ("phase_rad", point.phase),
                ("effective_phase_rad", gate.prediction.effective),
                ("leakage", point.leakage),
            ]))
        }
        "calibrate" => {
            let (model, cfg) = model_and_config(kv)?;
            let phase: f64 = kv.require("phase_rad")?;
            let target = kv.f64_or("duration_us", DEFAULT_KICK_DURATION)?;
            let gate = calibrated_kick(&model, phase, target, &cfg)?;
            Ok(named(&[
                ("nu1_MHz", gate.amplitude),
                ("duration_us", gate.duration),
                ("phase_rad", gate.prediction.simulated.unwrap_or(f64::NAN)),
                ("leakage", gate.prediction.leakage.unwrap_or(f64::NAN)),
            ]))
        }
        "suppression" => {
            let es = ExperimentSpec::from_key_values(kv)?;
            let period: f64 = kv.require("kick_period_us")?;
            let total = es.total.unwrap_or(50.0);
            let rows = suppression_scan(&es, es.nu1_rf, &[period], total)?;
            Ok(named(&[
                ("unkicked_residual", rows[0].residual),
                ("residual", rows[1].residual),
                ("suppression", rows[1].suppression),
            ]))
        }
        driver => {
            let es = ExperimentSpec::from_key_values(kv)?;
            let result = match driver {
                "rabi" => rabi(&es)?,
                "kicked_rabi" => kicked_rabi(&es)?,
                "odd_even" => odd_even(&es)?,
                "lock_release" => lock_release(&es)?.0,
                _ => unreachable!("driver checked at parse"),
            };
            Ok(result.metrics)
        }
    }
}

fn format_row(values: &[&str], metrics: &Metrics) -> String {
    let mut cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    cells.extend(metrics.iter().map(|(_, x)| format!("{x:.8e}")));
    cells.join(",")
}

fn header(spec: &SweepSpec, metrics: &Metrics) -> String {
    let mut cols: Vec<&str> = spec.axes.iter().map(|a| a.key.as_str()).collect();
    cols.extend(metrics.iter().map(|(k, _)| k.as_str()));
    cols.join(",")
}

fn manifest_line(index: usize, header: &str, row: &str) -> String {
    let sum = fnv1a(format!("{index}\t{header}\t{row}").as_bytes());
    format!("{index}\t{header}\t{row}\t{sum:016x}")
}

fn parse_manifest_line(line: &str) -> Option<(usize, String, String)> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != 4 {
        return None;
    }
    let index: usize = parts[0].parse().ok()?;
    let expect = manifest_line(index, parts[1], parts[2]);
    (expect == line).then(|| (index, parts[1].to_string(), parts[2].to_string()))
}

/// Completed rows from an existing manifest written for the same spec.
fn load_manifest(path: &Path, tag: &str, len: usize) -> BTreeMap<usize, (String, String)> {
    let Ok(text) = fs::read_to_string(path) else {
        return BTreeMap::new();
    };
    let mut lines = text.lines();
    if lines.next() != Some(tag) {
        warn!("{} belongs to a different sweep; starting over", path.display());
        return BTreeMap::new();
    }
    lines
        .filter_map(parse_manifest_line)
        .filter(|(i, _, _)| *i < len)
        .map(|(i, h, r)| (i, (h, r)))
        .collect()
}

/// Run (or resume) the sweep and write the table to `out`.
pub fn run_sweep(spec: &SweepSpec, out: &Path) -> Result<usize, Failure> {
    let manifest = manifest_path(out);
    let tag = format!("{MANIFEST_TAG} {:016x}", spec.fingerprint());
    let mut done = load_manifest(&manifest, &tag, spec.len());
    if !done.is_empty() {
        info!("resuming: {} of {} rows already complete", done.len(), spec.len());
    }
    let io = |e: std::io::Error| Failure::Runtime(format!("cannot write {}: {e}", manifest.display()));
    // rewrite the manifest with only the verified rows, dropping any torn tail
    let mut text = format!("{tag}\n");
    for (i, (h, r)) in &done {
        text.push_str(&manifest_line(*i, h, r));
        text.push('\n');
    }
    write_atomic(&manifest, &text)?;
    let file = OpenOptions::new().append(true).open(&manifest).map_err(io)?;
    let file = Mutex::new(file);

    let pending: Vec<usize> = (0..spec.len()).filter(|i| !done.contains_key(i)).collect();
    let results: Vec<Result<(usize, String, String), Failure>> = pending
        .par_iter()
        .map(|&i| {
            let metrics = compute_point(spec, &spec.point_key_values(i)).map_err(|e| match e {
                Failure::Input(m) => Failure::Input(format!("grid point {i}: {m}")),
                Failure::Invariant(m) => Failure::Invariant(format!("grid point {i}: {m}")),
                Failure::Runtime(m) => Failure::Runtime(format!("grid point {i}: {m}")),
            })?;
            let h = header(spec, &metrics);
            let row = format_row(&spec.point(i), &metrics);
            let mut f = file.lock().expect("manifest lock");
            writeln!(f, "{}", manifest_line(i, &h, &row)).map_err(io)?;
            f.flush().map_err(io)?;
            Ok((i, h, row))
        })
        .collect();
    for r in results {
        let (i, h, row) = r?;
        done.insert(i, (h, row));
    }

    let mut headers = done.values().map(|(h, _)| h);
    let first = headers.next().expect("grid has at least one point").clone();
    if headers.any(|h| *h != first) {
        return Err(Failure::Runtime(
            "grid points produced different metric columns; sweep a key that keeps the kick count fixed".into(),
        ));
    }
    let mut table = format!("{first}\n");
    for (_, row) in done.values() {
        table.push_str(row);
        table.push('\n');
    }
    write_atomic(out, &table)?;
    write_atomic(&gnuplot_path(out), &gnuplot_script(out, &first, "value", ""))?;
    Ok(done.len())
}

/// Settings keys a sweep spec may carry besides `driver`, `program` and grids.
pub fn is_sweep_key(key: &str) -> bool {
    key == "driver"
        || key == "program"
        || key.starts_with("grid.")
        || PARAM_KEYS.contains(&key)
        || SimConfig::is_known_key(key)
        || ExperimentSpec::is_known_key(key)
        || ["initial", "nu1_MHz", "cycles", "phase_rad", "duration_us"].contains(&key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_forms() {
        let a = parse_axis("x", "1:2:3").unwrap();
        assert_eq!(a.values, vec!["1", "1.5", "2"]);
        let b = parse_axis("x", "0.1, 0.2").unwrap();
        assert_eq!(b.values, vec!["0.1", "0.2"]);
        assert!(parse_axis("x", "1:2").is_err());
        assert!(parse_axis("x", "1:2:0").is_err());
        assert!(parse_axis("x", "a,b").is_err());
    }

    #[test]
    fn last_axis_fastest() {
        let kv = KeyValues::parse("driver=symmetric_gate\ngrid.nu1_MHz=1,2\ngrid.cycles=1,2,3\n").unwrap();
        let s = SweepSpec::from_key_values(&kv, Path::new(".")).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s.point(0), vec!["1", "1"]);
        assert_eq!(s.point(1), vec!["1", "2"]);
        assert_eq!(s.point(5), vec!["2", "3"]);
    }

    #[test]
    fn manifest_lines_verify() {
        let l = manifest_line(3, "a,b", "1,2");
        assert_eq!(parse_manifest_line(&l), Some((3, "a,b".into(), "1,2".into())));
        assert_eq!(parse_manifest_line(&l[..l.len() - 1]), None);
    }
}
