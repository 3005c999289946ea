//! Bang-bang control of a driven nuclear Rabi oscillation.
//!
//! A resonant RF drive rotates |00⟩ into |01⟩; phase kicks on the nuclear
//! `1` state reverse, bend or freeze that rotation. Every driver builds a
//! [`PulseProgram`], runs it through the engine and reports metrics computed
//! from the trajectory.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::engine::{
    ensemble_average, prepare_initial, EngineError, InitialMode, QuantumState, SimConfig, Trajectory,
};
use crate::model::{DriveKind, ModelError, PhysicalParams, QubitState, SpinModel, PARAM_KEYS};
use crate::phasegate::{calibrated_kick, GateSpec, PhaseGateError, DEFAULT_KICK_DURATION};
use crate::pulse::{Channel, Kick, ProgramError, PulseProgram, Segment};

/// Default RF Rabi frequency of the |00⟩↔|01⟩ transition, MHz.
pub const DEFAULT_NU1_RF: f64 = 0.004;
/// Default RF cutoff: keeps the driven qubit line and drops the other
/// nuclear lines of the same electron manifold (≈ 39 kHz away).
pub const DEFAULT_RF_CUTOFF: f64 = 0.015;
/// Default number of samples per Rabi period.
pub const SAMPLES_PER_PERIOD: f64 = 400.0;

#[derive(Debug, Error)]
pub enum BangBangError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Gate(#[from] PhaseGateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum KickSchedule {
    Times(Vec<f64>),
    /// Kicks at `start + k·period` up to `end` inclusive.
    Periodic { period: f64, start: f64, end: f64 },
}

impl KickSchedule {
    /// Kick times not later than `total`.
    pub fn times(&self, total: f64) -> Vec<f64> {
        match self {
            KickSchedule::Times(t) => t.iter().copied().filter(|&x| x <= total + 1e-12).collect(),
            KickSchedule::Periodic { period, start, end } => {
                let n = ((end.min(total) - start) / period + 1e-9).floor();
                if !(n >= 0.0) {
                    return Vec::new();
                }
                (0..=n as usize).map(|k| start + k as f64 * period).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KickKind {
    /// Instantaneous phase multiplication.
    Ideal,
    /// Simulated symmetric-detuning MW pulse centred on each kick time, with
    /// duration nearest the given value (µs).
    Calibrated { target_duration: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub params: PhysicalParams,
    /// Actual |00⟩↔|01⟩ Rabi frequency, MHz.
    pub nu1_rf: f64,
    pub kick_kind: KickKind,
    /// rad
    pub kick_phase: f64,
    pub schedule: Option<KickSchedule>,
    /// µs
    pub total: Option<f64>,
    /// µs
    pub sample_every: Option<f64>,
    pub initial: InitialMode,
    pub sim: SimConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let sim = SimConfig {
            rf_cutoff: DEFAULT_RF_CUTOFF,
            ..SimConfig::default()
        };
        Self {
            params: PhysicalParams::reference(),
            nu1_rf: DEFAULT_NU1_RF,
            kick_kind: KickKind::Ideal,
            kick_phase: PI,
            schedule: None,
            total: None,
            sample_every: None,
            initial: InitialMode::Pure,
            sim,
        }
    }
}

pub const SPEC_KEYS: [&str; 13] = [
    "nu1_rf_MHz",
    "kick_kind",
    "kick_phase_rad",
    "kick_duration_us",
    "kick_times_us",
    "kick_period_us",
    "kick_start_us",
    "kick_end_us",
    "total_us",
    "sample_us",
    "initial",
    "rf_cutoff_MHz",
    "coupling_MHz",
];

fn parse_list(kv: &KeyValues, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
    let Some(e) = kv.entry(key) else {
        return Ok(None);
    };
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
        .map_err(|_| ConfigError::InvalidValue {
            line: e.line,
            key: e.key.clone(),
            value: e.value.clone(),
        })
}

impl ExperimentSpec {
    pub fn is_known_key(key: &str) -> bool {
        SPEC_KEYS.contains(&key) || PARAM_KEYS.contains(&key) || SimConfig::is_known_key(key)
    }

    /// Build from key=value entries on top of the defaults. Unknown keys are
    /// rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, BangBangError> {
        kv.check_keys(Self::is_known_key)?;
        let mut spec = ExperimentSpec::default();
        let mut params_kv = spec.params_key_values();
        for key in PARAM_KEYS {
            if let Some(v) = kv.get(key) {
                params_kv.set(key, v);
            }
        }
        spec.params = PhysicalParams::from_key_values(&params_kv)?;
        if let Some(v) = kv.parsed("nu1_rf_MHz")? {
            spec.nu1_rf = v;
        }
        if let Some(v) = kv.parsed("coupling_MHz")? {
            spec.nu1_rf = v;
        }
        let duration = kv.f64_or("kick_duration_us", DEFAULT_KICK_DURATION)?;
        match kv.get("kick_kind") {
            None | Some("ideal") => {}
            Some("calibrated") => {
                spec.kick_kind = KickKind::Calibrated {
                    target_duration: duration,
                }
            }
            Some(other) => {
                return Err(BangBangError::Invalid(format!(
                    "kick_kind must be `ideal` or `calibrated`, got `{other}`"
                )))
            }
        }
        if let Some(v) = kv.parsed("kick_phase_rad")? {
            spec.kick_phase = v;
        }
        if let Some(times) = parse_list(kv, "kick_times_us")? {
            spec.schedule = Some(KickSchedule::Times(times));
        } else if let Some(period) = kv.parsed::<f64>("kick_period_us")? {
            let start = kv.f64_or("kick_start_us", period)?;
            let end = kv.f64_or("kick_end_us", f64::INFINITY)?;
            spec.schedule = Some(KickSchedule::Periodic { period, start, end });
        }
        spec.total = kv.parsed("total_us")?;
        spec.sample_every = kv.parsed("sample_us")?;
        match kv.get("initial") {
            None | Some("pure") => {}
            Some("thermal") => spec.initial = InitialMode::Thermal,
            Some(other) => {
                return Err(BangBangError::Invalid(format!(
                    "initial must be `pure` or `thermal`, got `{other}`"
                )))
            }
        }
        if let Some(v) = kv.parsed("rf_cutoff_MHz")? {
            spec.sim.rf_cutoff = v;
        }
        spec.sim.apply_key_values(kv)?;
        spec.validate()?;
        Ok(spec)
    }

    fn params_key_values(&self) -> KeyValues {
        KeyValues::parse(&self.params.to_text()).expect("canonical parameter text")
    }

    pub fn validate(&self) -> Result<(), BangBangError> {
        if !(self.nu1_rf.is_finite() && self.nu1_rf > 0.0) {
            return Err(BangBangError::Invalid(format!(
                "RF Rabi frequency must be positive, got {}",
                self.nu1_rf
            )));
        }
        if !self.kick_phase.is_finite() {
            return Err(BangBangError::Invalid("kick phase must be finite".into()));
        }
        if let Some(t) = self.total {
            if !(t.is_finite() && t > 0.0) {
                return Err(BangBangError::Invalid(format!("total must be positive, got {t}")));
            }
        }
        if let Some(KickSchedule::Periodic { period, .. }) = &self.schedule {
            if !(period.is_finite() && *period > 0.0) {
                return Err(BangBangError::Invalid(format!(
                    "kick period must be positive, got {period}"
                )));
            }
        }
        if let KickKind::Calibrated { target_duration } = self.kick_kind {
            if !(target_duration > 0.0) {
                return Err(BangBangError::Invalid("kick duration must be positive".into()));
            }
        }
        self.sim.validate()?;
        Ok(())
    }

    /// Rabi period 1/ν1, µs.
    pub fn rabi_period(&self) -> f64 {
        1.0 / self.nu1_rf
    }
}

/// Output of a driver.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub name: String,
    pub program: PulseProgram,
    /// Settings the program was run with.
    pub config: SimConfig,
    pub initial: QuantumState,
    pub trajectory: Trajectory,
    /// Kick times as scheduled (pulse centres for calibrated kicks), µs.
    pub kick_times: Vec<f64>,
    pub kick_gate: Option<GateSpec>,
    pub metrics: Vec<(String, f64)>,
}

impl ExperimentResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// `{name=value, ...}` with fixed formatting.
    pub fn summary(&self) -> String {
        summary_line(&self.name, &self.metrics)
    }
}

pub fn summary_line(name: &str, metrics: &[(String, f64)]) -> String {
    let mut parts = vec![format!("experiment={name}")];
    parts.extend(metrics.iter().map(|(k, v)| format!("{k}={v:.6e}")));
    format!("{{{}}}", parts.join(", "))
}

/// Sampling step: the largest value not above `target` that puts every kick
/// time on the grid, or `target` when the schedule has no common grid.
fn sampling_step(times: &[f64], target: f64) -> f64 {
    let Some(&first) = times.iter().find(|&&t| t > 1e-12) else {
        return target;
    };
    let on_grid = |step: f64| {
        times.iter().all(|&t| {
            let r = t / step;
            (r - r.round()).abs() < 1e-6
        })
    };
    let m0 = (first / target).ceil().max(1.0) as usize;
    for m in m0..m0 * 64 {
        let step = first / m as f64;
        if on_grid(step) {
            return step;
        }
    }
    target
}

fn snap(t: f64, step: f64) -> f64 {
    (t / step).round() * step
}

struct Prepared {
    model: SpinModel,
    program: PulseProgram,
    kicks: Vec<f64>,
    gate: Option<GateSpec>,
}

/// RF program amplitude giving Rabi frequency ν1 on |00⟩↔|01⟩.
pub fn rf_amplitude(model: &SpinModel, nu1: f64) -> f64 {
    let (a, b) = (model.level(QubitState::Q00), model.level(QubitState::Q01));
    let d = model.drive_element(DriveKind::Nuclear, a.min(b), a.max(b)).norm();
    nu1 / (2.0 * d)
}

fn prepare(
    spec: &ExperimentSpec,
    name: &str,
    default_total: f64,
    default_schedule: Option<KickSchedule>,
) -> Result<Prepared, BangBangError> {
    spec.validate()?;
    let model = SpinModel::new(spec.params.clone())?;
    let total = spec.total.unwrap_or(default_total);
    let schedule = spec.schedule.clone().or(default_schedule);
    let mut kicks: Vec<f64> = schedule
        .map(|s| s.times(total))
        .unwrap_or_default();
    kicks.sort_by(f64::total_cmp);

    let target = spec
        .sample_every
        .unwrap_or(spec.rabi_period() / SAMPLES_PER_PERIOD);
    let step = match spec.sample_every {
        Some(s) => s,
        None => sampling_step(&kicks, target),
    };
    for t in kicks.iter_mut() {
        *t = snap(*t, step);
    }
    let total = snap(total, step).max(step);

    let mut program = PulseProgram::new(name, total).with_sampling(step);
    program.push_segment(Segment::new(
        Channel::rf(),
        0.0,
        total,
        model.nuclear_frequency_0(),
        rf_amplitude(&model, spec.nu1_rf),
        0.0,
    )?)?;

    let mut gate = None;
    match spec.kick_kind {
        KickKind::Ideal => {
            for &t in &kicks {
                program.push_kick(Kick::new(t, spec.kick_phase)?)?;
            }
        }
        KickKind::Calibrated { target_duration } => {
            if !kicks.is_empty() {
                let g = calibrated_kick(&model, spec.kick_phase, target_duration, &spec.sim)?;
                let half = 0.5 * g.duration;
                for &t in &kicks {
                    if t - half < 0.0 || t + half > total {
                        return Err(BangBangError::Invalid(format!(
                            "calibrated kick at {t} µs does not fit inside [0, {total}]"
                        )));
                    }
                    program.push_segment(g.segment(t - half)).map_err(|e| {
                        BangBangError::Invalid(format!(
                            "kick pulses overlap ({e}); the kick period must exceed {} µs",
                            g.duration
                        ))
                    })?;
                }
                gate = Some(g);
            }
        }
    }
    Ok(Prepared {
        model,
        program,
        kicks,
        gate,
    })
}

fn run(spec: &ExperimentSpec, prepared: Prepared, name: &str) -> Result<ExperimentResult, BangBangError> {
    let initial = prepare_initial(&prepared.model, spec.initial, &spec.sim)?;
    let trajectory = ensemble_average(&prepared.model, &initial, &prepared.program, &spec.sim)?;
    Ok(ExperimentResult {
        name: name.to_string(),
        program: prepared.program,
        config: spec.sim.clone(),
        initial,
        trajectory,
        kick_times: prepared.kicks,
        kick_gate: prepared.gate,
        metrics: Vec::new(),
    })
}

fn kick_half_width(result: &ExperimentResult) -> f64 {
    result.kick_gate.as_ref().map_or(0.0, |g| 0.5 * g.duration)
}

/// Interpolated maxima of a sampled curve: (time, value).
pub fn local_maxima(times: &[f64], values: &[f64], min_value: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        if b > a && b >= c && b >= min_value {
            let h = times[i + 1] - times[i];
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            let shift = shift.clamp(-0.5, 0.5);
            let value = b - 0.25 * (a - c) * shift;
            out.push((times[i] + shift * h, value));
        }
    }
    out
}

/// Mean spacing of successive maxima above `min_value`, µs.
pub fn oscillation_period(times: &[f64], values: &[f64], min_value: f64) -> Option<f64> {
    let peaks = local_maxima(times, values, min_value);
    if peaks.len() < 2 {
        return None;
    }
    Some((peaks.last()?.0 - peaks[0].0) / (peaks.len() - 1) as f64)
}

/// Unperturbed Rabi oscillation over three periods.
pub fn rabi(spec: &ExperimentSpec) -> Result<ExperimentResult, BangBangError> {
    let mut s = spec.clone();
    s.schedule = Some(KickSchedule::Times(Vec::new()));
    let tr = s.rabi_period();
    let prepared = prepare(&s, "rabi", 3.0 * tr, None)?;
    let mut result = run(&s, prepared, "rabi")?;
    let p = result.trajectory.p01();
    let period = oscillation_period(&result.trajectory.times, &p, 0.5).unwrap_or(f64::NAN);
    result.metrics = vec![
        ("nu1_rf_MHz".into(), s.nu1_rf),
        ("fitted_frequency_MHz".into(), 1.0 / period),
        ("max_p01".into(), p.iter().copied().fold(0.0, f64::max)),
    ];
    Ok(result)
}

/// max over τ of |P(t_k+τ) − P(t_k−τ)|, τ up to the nearest neighbouring kick
/// or record end.
pub fn reversal_score(times: &[f64], values: &[f64], kicks: &[f64], total: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let at = |t: f64| -> Option<f64> {
        let i = times.partition_point(|&x| x < t - 1e-9);
        (i < times.len() && (times[i] - t).abs() < 1e-6).then(|| values[i])
    };
    for (k, &tk) in kicks.iter().enumerate() {
        let before = if k == 0 { tk } else { tk - kicks[k - 1] };
        let after = if k + 1 == kicks.len() { total - tk } else { kicks[k + 1] - tk };
        let reach = before.min(after);
        let i0 = times.partition_point(|&x| x < tk - 1e-9);
        for (j, &t) in times.iter().enumerate().skip(i0) {
            let tau = t - tk;
            if tau > reach + 1e-9 {
                break;
            }
            if let Some(mirror) = at(tk - tau) {
                worst = worst.max((values[j] - mirror).abs());
            }
        }
    }
    worst
}

/// Rabi drive with kicks (π by default) every T_R/3 starting at T_R/3.
pub fn kicked_rabi(spec: &ExperimentSpec) -> Result<ExperimentResult, BangBangError> {
    let tr = spec.rabi_period();
    let default = KickSchedule::Periodic {
        period: tr / 3.0,
        start: tr / 3.0,
        end: 2.0 * tr - tr / 6.0,
    };
    let prepared = prepare(spec, "kicked_rabi", 2.0 * tr, Some(default))?;
    let mut result = run(spec, prepared, "kicked_rabi")?;
    let traj = &result.trajectory;
    let p = traj.p01();
    let total = result.program.total_duration;
    let score = reversal_score(&traj.times, &p, &result.kick_times, total);
    result.metrics = vec![
        ("kicks".into(), result.kick_times.len() as f64),
        ("reversal_score".into(), score),
        ("max_p01".into(), p.iter().copied().fold(0.0, f64::max)),
    ];
    Ok(result)
}

/// Range (max − min) of `values` on each interval between consecutive kicks,
/// excluding `guard` µs around each kick.
pub fn interval_ranges(
    times: &[f64],
    values: &[f64],
    kicks: &[f64],
    total: f64,
    guard: f64,
) -> Vec<(f64, f64, f64)> {
    let mut edges = vec![0.0];
    edges.extend_from_slice(kicks);
    edges.push(total);
    edges
        .windows(2)
        .filter_map(|w| {
            let (lo, hi) = (w[0] + guard, w[1] - guard);
            let vals: Vec<f64> = times
                .iter()
                .zip(values)
                .filter(|(t, _)| **t >= lo - 1e-9 && **t <= hi + 1e-9)
                .map(|(_, v)| *v)
                .collect();
            if vals.is_empty() {
                return None;
            }
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            Some((max - min, max, min))
        })
        .collect()
}

/// True when consecutive differences strictly alternate in sign.
pub fn alternates(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.iter().all(|d| d.abs() > 1e-6) && diffs.windows(2).all(|w| (w[0] > 0.0) != (w[1] > 0.0))
}

/// Sub-π kicks: one kick per Rabi period starting at T_R/8, φ = π/2 by
/// default.
pub fn odd_even(spec: &ExperimentSpec) -> Result<ExperimentResult, BangBangError> {
    let mut s = spec.clone();
    if spec.kick_phase == PI {
        s.kick_phase = 0.5 * PI;
    }
    if !(s.kick_phase > 0.0 && s.kick_phase < PI) {
        return Err(BangBangError::Invalid(format!(
            "odd-even kicks need a phase in (0, π), got {}",
            s.kick_phase
        )));
    }
    let tr = s.rabi_period();
    let default = KickSchedule::Periodic {
        period: tr,
        start: tr / 8.0,
        end: f64::INFINITY,
    };
    let prepared = prepare(&s, "odd_even", 6.0 * tr, Some(default))?;
    let mut result = run(&s, prepared, "odd_even")?;
    let traj = &result.trajectory;
    let p = traj.p01();
    let total = result.program.total_duration;
    let ranges = interval_ranges(&traj.times, &p, &result.kick_times, total, kick_half_width(&result));
    // interval k (k ≥ 1) follows kick k; even kicks are k = 2, 4, ...
    let post_even_min_max = ranges
        .iter()
        .enumerate()
        .filter(|(k, _)| *k >= 2 && k % 2 == 0)
        .map(|(_, r)| r.1)
        .fold(f64::INFINITY, f64::min);
    let after_first: Vec<f64> = ranges.iter().skip(1).map(|r| r.0).collect();
    result.metrics = vec![
        ("kicks".into(), result.kick_times.len() as f64),
        ("kick_phase_rad".into(), s.kick_phase),
        ("alternates".into(), if alternates(&after_first) { 1.0 } else { 0.0 }),
        ("post_even_recovery".into(), post_even_min_max),
    ];
    for (k, r) in ranges.iter().enumerate() {
        result.metrics.push((format!("range_{k}"), r.0));
    }
    Ok(result)
}

/// Lock window metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct LockMetrics {
    pub max_locked: f64,
    pub bound: f64,
    pub release: f64,
    pub first_max_after_release: f64,
    pub period_after_release: f64,
}

/// Dense π kicks every `T_k` (default T_R/50) over a lock window, then free
/// Rabi evolution. Kicks sit at `w0 + T_k/2 + k·T_k`; an even number of kicks
/// is used so the release point, half a period after the last kick, is where
/// the rotation angle returns to its locked value.
pub fn lock_release(spec: &ExperimentSpec) -> Result<(ExperimentResult, LockMetrics), BangBangError> {
    let tr = spec.rabi_period();
    let mut s = spec.clone();
    let (tk, w0, w1) = match &spec.schedule {
        Some(KickSchedule::Periodic { period, start, end }) => {
            (*period, start - 0.5 * period, *end)
        }
        Some(KickSchedule::Times(_)) => {
            return Err(BangBangError::Invalid(
                "lock/release needs a periodic kick schedule".into(),
            ))
        }
        None => (tr / 50.0, 0.0, tr),
    };
    let total = spec.total.unwrap_or(w1 + 2.5 * tr);
    let mut count = ((w1.min(total) - w0) / tk + 1e-9).floor() as usize;
    if count % 2 == 1 {
        count -= 1;
    }
    if count == 0 {
        return Err(BangBangError::Invalid("lock window holds no kick pair".into()));
    }
    let times: Vec<f64> = (0..count).map(|k| w0 + 0.5 * tk + k as f64 * tk).collect();
    s.schedule = Some(KickSchedule::Times(times));
    s.total = Some(total);
    if s.sample_every.is_none() {
        s.sample_every = Some(sampling_step(&[0.5 * tk, tk], tr / SAMPLES_PER_PERIOD));
    }
    let prepared = prepare(&s, "lock_release", total, None)?;
    let mut result = run(&s, prepared, "lock_release")?;
    let traj = &result.trajectory;
    let p = traj.p01();
    let last = *result.kick_times.last().expect("kicks present");
    let release = last + 0.5 * tk;
    let first = result.kick_times[0];
    let max_locked = traj
        .times
        .iter()
        .zip(&p)
        .filter(|(t, _)| **t >= first - 0.5 * tk - 1e-9 && **t <= release + 1e-9)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let (after_t, after_p): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&p)
        .filter(|(t, _)| **t >= release)
        .map(|(t, v)| (*t, *v))
        .unzip();
    let peaks = local_maxima(&after_t, &after_p, 0.5);
    let first_max = peaks.first().map_or(f64::NAN, |p| p.0);
    let period = oscillation_period(&after_t, &after_p, 0.5).unwrap_or(f64::NAN);
    let metrics = LockMetrics {
        max_locked,
        bound: (PI * s.nu1_rf * tk).sin().powi(2),
        release,
        first_max_after_release: first_max,
        period_after_release: period,
    };
    result.metrics = vec![
        ("kick_period_us".into(), tk),
        ("kicks".into(), count as f64),
        ("lock_residual".into(), metrics.max_locked),
        ("lock_bound".into(), metrics.bound),
        ("release_us".into(), metrics.release),
        ("first_max_after_release_us".into(), metrics.first_max_after_release),
        ("period_after_release_us".into(), metrics.period_after_release),
    ];
    Ok((result, metrics))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuppressionRow {
    /// µs; infinite for the unkicked reference.
    pub kick_period: f64,
    pub residual: f64,
    pub suppression: f64,
}

/// Residual max P(|01⟩) under π kicks every `T_k` (first at T_k/2) for a
/// resonant coupling of strength `coupling` MHz over `total` µs. Rows come
/// back in input order, preceded by the unkicked reference.
pub fn suppression_scan(
    spec: &ExperimentSpec,
    coupling: f64,
    periods: &[f64],
    total: f64,
) -> Result<Vec<SuppressionRow>, BangBangError> {
    let mut base = spec.clone();
    base.nu1_rf = coupling;
    base.total = Some(total);
    base.kick_phase = PI;
    base.kick_kind = KickKind::Ideal;
    let residual_for = |period: Option<f64>| -> Result<f64, BangBangError> {
        let mut s = base.clone();
        s.schedule = Some(match period {
            Some(tk) => KickSchedule::Periodic {
                period: tk,
                start: 0.5 * tk,
                end: f64::INFINITY,
            },
            None => KickSchedule::Times(Vec::new()),
        });
        if s.sample_every.is_none() {
            let target = (1.0 / coupling / SAMPLES_PER_PERIOD).min(total / 2000.0);
            s.sample_every = Some(match period {
                Some(tk) => sampling_step(&[0.5 * tk, tk], target.min(tk / 8.0)),
                None => target,
            });
        }
        let prepared = prepare(&s, "suppression", total, None)?;
        let result = run(&s, prepared, "suppression")?;
        Ok(result.trajectory.p01().into_iter().fold(0.0, f64::max))
    };
    let reference = residual_for(None)?;
    let rows: Vec<f64> = periods
        .par_iter()
        .map(|&tk| residual_for(Some(tk)))
        .collect::<Result<_, _>>()?;
    let mut out = vec![SuppressionRow {
        kick_period: f64::INFINITY,
        residual: reference,
        suppression: 1.0,
    }];
    out.extend(periods.iter().zip(rows).map(|(&tk, r)| SuppressionRow {
        kick_period: tk,
        residual: r,
        suppression: reference / r,
    }));
    Ok(out)
}

/// Least-squares slope of ln(residual) against ln(T_k).
pub fn zeno_slope(rows: &[SuppressionRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.kick_period.is_finite() && r.residual > 0.0)
        .map(|r| (r.kick_period.ln(), r.residual.ln()))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2))
    });
    sxy / sxx
}

/// Geometric grid of `n` kick periods on [lo, hi].
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::evolve;

    fn spec() -> ExperimentSpec {
        ExperimentSpec::default()
    }

    #[test]
    fn rabi_frequency_is_recovered() {
        let r = rabi(&spec()).unwrap();
        let f = r.metric("fitted_frequency_MHz").unwrap();
        assert!((f - 0.004).abs() < 0.01 * 0.004, "{f}");
        // extrema at k/(2ν1)
        let tr = &r.trajectory;
        let p = tr.p01();
        for k in 1..6 {
            let t = k as f64 * 125.0;
            let v = p[tr.index_at(t)];
            let expected = if k % 2 == 1 { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-3, "t={t}: {v}");
        }
    }

    #[test]
    fn driver_output_reproduces_through_engine() {
        let r = kicked_rabi(&spec()).unwrap();
        let model = SpinModel::new(spec().params).unwrap();
        let again = evolve(&model, &r.initial, &r.program, &r.config).unwrap();
        assert_eq!(again, r.trajectory);
    }

    #[test]
    fn third_period_kicks_cap_population() {
        let r = kicked_rabi(&spec()).unwrap();
        assert!(r.metric("max_p01").unwrap() <= 0.75 + 1e-3);
        assert!(r.metric("reversal_score").unwrap() < 1e-3);
    }

    #[test]
    fn single_quarter_kick_returns_to_zero() {
        let mut s = spec();
        s.schedule = Some(KickSchedule::Times(vec![62.5]));
        s.total = Some(150.0);
        let r = kicked_rabi(&s).unwrap();
        let p = r.trajectory.p01();
        assert!(p[r.trajectory.index_at(125.0)] < 1e-3);
    }

    #[test]
    fn zero_phase_kick_is_identity() {
        let mut s = spec();
        s.kick_phase = 0.0;
        s.sample_every = Some(250.0 / 300.0);
        let kicked = kicked_rabi(&s).unwrap();
        s.schedule = Some(KickSchedule::Times(Vec::new()));
        let plain = kicked_rabi(&s).unwrap();
        for (a, b) in kicked.trajectory.p01().iter().zip(plain.trajectory.p01()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn double_kick_composes() {
        // two φ kicks at one instant equal a single 2φ kick
        let mut s = spec();
        s.schedule = Some(KickSchedule::Times(vec![50.0, 50.0]));
        s.kick_phase = 0.5 * PI;
        s.total = Some(200.0);
        let two = kicked_rabi(&s).unwrap();
        s.schedule = Some(KickSchedule::Times(vec![50.0]));
        s.kick_phase = PI;
        let one = kicked_rabi(&s).unwrap();
        for (a, b) in two.trajectory.p01().iter().zip(one.trajectory.p01()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_even_alternates_and_recovers() {
        let r = odd_even(&spec()).unwrap();
        assert_eq!(r.metric("alternates"), Some(1.0), "{}", r.summary());
        assert!(r.metric("post_even_recovery").unwrap() >= 0.95);
        let mut s = spec();
        s.kick_phase = 3.5;
        assert!(odd_even(&s).is_err());
    }

    #[test]
    fn lock_holds_and_releases() {
        let (_, m) = lock_release(&spec()).unwrap();
        assert!(m.max_locked <= m.bound + 1e-3, "{m:?}");
        assert!((m.first_max_after_release - m.release - 125.0).abs() < 0.02 * 125.0, "{m:?}");
        assert!((m.period_after_release - 250.0).abs() < 0.02 * 250.0, "{m:?}");
    }

    #[test]
    fn suppression_is_monotone() {
        let rows = suppression_scan(&spec(), 0.1, &[2.0, 1.0, 0.5, 0.25], 50.0).unwrap();
        assert!((rows[0].residual - 1.0).abs() < 1e-3);
        for w in rows.windows(2) {
            assert!(w[1].residual <= w[0].residual + 1e-12);
        }
        assert!(rows.last().unwrap().suppression >= 20.0);
    }

    #[test]
    fn weak_coupling_stays_small() {
        let rows = suppression_scan(&spec(), 1e-4, &[1000.0], 20_000.0).unwrap();
        assert!(rows[1].residual < 0.1);
    }

    #[test]
    fn spec_from_key_values() {
        let kv = KeyValues::parse(
            "nu1_rf_MHz=0.002\nkick_kind=calibrated\nkick_period_us=100\ntotal_us=500\na_MHz=15.8\ndt_max_us=0.2\n",
        )
        .unwrap();
        let s = ExperimentSpec::from_key_values(&kv).unwrap();
        assert_eq!(s.nu1_rf, 0.002);
        assert_eq!(s.params.a_mhz, 15.8);
        assert_eq!(s.sim.dt_max, 0.2);
        assert_eq!(s.sim.rf_cutoff, DEFAULT_RF_CUTOFF);
        assert!(matches!(s.kick_kind, KickKind::Calibrated { .. }));
        assert_eq!(
            s.schedule.unwrap().times(500.0)[..3],
            [100.0, 200.0, 300.0]
        );
        let bad = KeyValues::parse("bogus=1\n").unwrap();
        assert!(ExperimentSpec::from_key_values(&bad).is_err());
        let bad = KeyValues::parse("nu1_rf_MHz=-1\n").unwrap();
        assert!(ExperimentSpec::from_key_values(&bad).is_err());
    }

    #[test]
    fn sampling_grid_contains_kicks() {
        let step = sampling_step(&[250.0 / 8.0, 250.0 + 250.0 / 8.0], 250.0 / 400.0);
        assert!((step - 250.0 / 400.0).abs() < 1e-12);
        let step = sampling_step(&[250.0 / 3.0, 500.0 / 3.0], 250.0 / 400.0);
        assert!(step <= 250.0 / 400.0);
        assert!(((250.0 / 3.0) / step).fract().min(1.0 - ((250.0 / 3.0) / step).fract()) < 1e-6);
    }

    #[test]
    fn zeno_fit_on_synthetic_rows() {
        let rows: Vec<SuppressionRow> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&t| SuppressionRow {
                kick_period: t,
                residual: 0.01 * t * t,
                suppression: 1.0,
            })
            .collect();
        assert!((zeno_slope(&rows) - 2.0).abs() < 1e-12);
    }
}
