//! Fast electron-mediated phase gates on the nuclear qubit.
//!
//! A microwave pulse that takes an electron manifold through whole Rabi
//! cycles returns its populations and leaves only a phase. With the carrier
//! half-way between the two kick transitions both manifolds see detunings
//! ±a/2 and close after `n / √(ν1² + (a/2)²)` for any ν1, so the relative
//! phase is set by ν1 alone.
//!
//! Phases reported here are shifts of arg ρ_{00,01} in the interaction frame.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{evolve, EngineError, QuantumState, SimConfig};
use crate::model::{QubitState, SpinModel, ELECTRON_SPIN};
use crate::pulse::{serialize, Channel, PulseProgram, Segment};
use crate::spin_core::{herm_expm, spin_operators, Operator, SpinError, C64};

/// Bisection stops once the simulated phase is this close to the target, rad.
pub const PHASE_TOL: f64 = 1e-3;
/// Calibrated kick durations are chosen nearest to this value, µs.
pub const DEFAULT_KICK_DURATION: f64 = 0.12;

#[derive(Debug, Error)]
pub enum PhaseGateError {
    #[error("generalized Rabi frequency is zero (ν1 = {nu1}, Δ = {delta})")]
    ZeroRabi { nu1: f64, delta: f64 },
    #[error("no integer-cycle solution for n1 = {n1}, n2 = {n2} (need n2 > n1 >= 1)")]
    NoSolution { n1: u32, n2: u32 },
    #[error("invalid gate parameter: {0}")]
    InvalidParam(String),
    #[error("phase {target:.4} rad is not reachable with n = {n} in ν1 ∈ [{lo}, {hi}] MHz; try a larger n")]
    Unreachable { target: f64, n: u32, lo: f64, hi: f64 },
    #[error("bisection did not converge (residual {residual:e} rad)")]
    NotConverged { residual: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Spin(#[from] SpinError),
}

/// Wrap into (-π, π].
pub fn wrap_pi(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

/// T = n / √(ν1² + Δ²).
pub fn full_cycle_duration(nu1: f64, delta: f64, n: u32) -> Result<f64, PhaseGateError> {
    let omega = nu1.hypot(delta);
    if !(omega > 0.0) || nu1 < 0.0 {
        return Err(PhaseGateError::ZeroRabi { nu1, delta });
    }
    Ok(n as f64 / omega)
}

/// ν1 for which the resonant transition completes `n1` cycles while the
/// partner detuned by `a` completes `n2` in the same time. Returns (ν1, T).
pub fn resonant_kick_amplitude(a: f64, n1: u32, n2: u32) -> Result<(f64, f64), PhaseGateError> {
    if n1 < 1 || n2 <= n1 || !(a > 0.0) {
        return Err(PhaseGateError::NoSolution { n1, n2 });
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let nu1 = a * n1f / (n2f * n2f - n1f * n1f).sqrt();
    Ok((nu1, n1f / nu1))
}

/// Half the solid angle of a cone with cos θ = Δ/Ω: π(1 − Δ/Ω).
pub fn geometric_phase(nu1: f64, delta: f64) -> Result<f64, PhaseGateError> {
    let omega = nu1.hypot(delta);
    if !(omega > 0.0) {
        return Err(PhaseGateError::ZeroRabi { nu1, delta });
    }
    Ok(PI * (1.0 - delta / omega))
}

/// Aharonov–Anandan phase of one cycle of H = (Δσz + ν1σx)/2 starting from
/// |↑⟩: total phase of the returning state minus the dynamical phase,
/// evaluated with `steps` propagation steps. Returned in (-π, π].
pub fn aharonov_anandan_phase(nu1: f64, delta: f64, steps: usize) -> Result<f64, PhaseGateError> {
    let period = full_cycle_duration(nu1, delta, 1)?;
    let half = Operator::new(
        2,
        vec![
            C64::new(0.5 * delta, 0.0),
            C64::new(0.5 * nu1, 0.0),
            C64::new(0.5 * nu1, 0.0),
            C64::new(-0.5 * delta, 0.0),
        ],
    )
    ?;
    let steps = steps.max(2);
    let dt = period / steps as f64;
    let u = herm_expm(&half, dt)?;
    let energy = |psi: &[C64]| -> f64 {
        let h_psi = half.apply(psi);
        psi.iter().zip(&h_psi).map(|(a, b)| a.conj() * b).sum::<C64>().re
    };
    let start = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let mut psi = start.clone();
    // trapezoid rule on ⟨H⟩ along the path
    let mut integral = 0.5 * energy(&psi);
    for k in 1..=steps {
        psi = u.apply(&psi);
        let e = energy(&psi);
        integral += if k == steps { 0.5 * e } else { e };
    }
    integral *= dt;
    let overlap: C64 = start.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
    let total = overlap.arg();
    let dynamical = -TAU * integral;
    Ok(wrap_pi(total - dynamical))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    /// Resonant on the M_I = 0 kick line, partner ignored.
    ResonantSelective,
    /// Resonant on the M_I = 0 line with the partner closing `n2` cycles.
    ResonantWithPartner,
    /// Carrier at the midpoint of the kick lines.
    SymmetricDetuning,
}

impl GateMode {
    pub fn name(self) -> &'static str {
        match self {
            GateMode::ResonantSelective => "resonant-selective",
            GateMode::ResonantWithPartner => "resonant-with-partner",
            GateMode::SymmetricDetuning => "symmetric-detuning",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "resonant-selective" | "resonant" => Some(GateMode::ResonantSelective),
            "resonant-with-partner" | "partner" => Some(GateMode::ResonantWithPartner),
            "symmetric-detuning" | "symmetric" => Some(GateMode::SymmetricDetuning),
            _ => None,
        }
    }
}

/// Relative-phase predictions and results for one gate, all in [0, 2π).
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePrediction {
    /// Two-level (S = 1/2) closed form.
    pub closed_form: f64,
    /// Rotating-frame spin-3/2 model of the two manifolds.
    pub effective: f64,
    /// Full 12-level simulation, when run.
    pub simulated: Option<f64>,
    /// Population outside {|00⟩, |01⟩} after the gate, when simulated.
    pub leakage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateSpec {
    pub mode: GateMode,
    /// MHz
    pub amplitude: f64,
    /// MHz
    pub carrier: f64,
    /// Detuning of the M_I = +1 and M_I = 0 kick lines, ν − f, MHz.
    pub detunings: [f64; 2],
    pub cycles: u32,
    pub partner_cycles: Option<u32>,
    /// µs
    pub duration: f64,
    pub prediction: PhasePrediction,
}

impl GateSpec {
    pub fn omega(&self) -> f64 {
        self.amplitude.hypot(self.detunings[0].abs().max(self.detunings[1].abs()))
    }

    pub fn segment(&self, t_start: f64) -> Segment {
        Segment::new(
            Channel::mw(),
            t_start,
            self.duration,
            self.carrier,
            self.amplitude,
            0.0,
        )
        .expect("gate parameters are positive")
    }

    pub fn program(&self) -> PulseProgram {
        let mut p = PulseProgram::new(format!("{}-gate", self.mode.name()), self.duration);
        p.push_segment(self.segment(0.0)).expect("single segment");
        p
    }

    /// Importable `.pp` snippet for the gate starting at t = 0.
    pub fn pp_snippet(&self) -> String {
        serialize(&self.program())
    }

    /// `{key=value, ...}` record.
    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("NaN".to_string(), |x| format!("{x:.6}"));
        format!(
            "{{mode={}, nu1_MHz={:.6}, carrier_MHz={:.6}, delta0_MHz={:.6}, delta1_MHz={:.6}, n={}, n2={}, duration_us={:.6}, phase_closed_form={:.6}, phase_effective={:.6}, phase_simulated={}, leakage={}}}",
            self.mode.name(),
            self.amplitude,
            self.carrier,
            self.detunings[0],
            self.detunings[1],
            self.cycles,
            self.partner_cycles.map_or("none".into(), |n| n.to_string()),
            self.duration,
            self.prediction.closed_form,
            self.prediction.effective,
            opt(self.prediction.simulated),
            self.prediction.leakage.map_or("NaN".to_string(), |x| format!("{x:.3e}")),
        )
    }
}

/// ⟨m|exp(-i2π(Δ S_z + ν1 S_x)T)|m⟩ for the top projection of the electron spin.
fn top_return_amplitude(nu1: f64, delta: f64, t: f64) -> C64 {
    let ops = spin_operators(ELECTRON_SPIN);
    let h = &ops.sz.scale_re(delta) + &ops.sx.scale_re(nu1);
    let u = herm_expm(&h, t).expect("Hermitian by construction");
    u[(0, 0)]
}

/// Relative phase from the rotating-frame spin-3/2 model: each manifold
/// rotates about its own tilted axis, and the interaction frame adds
/// 2π Δ m T to the top level. Continuous in its arguments apart from the
/// wrapped rotation factors.
pub fn effective_relative_phase(nu1: f64, delta0: f64, delta1: f64, t: f64) -> f64 {
    let m = ELECTRON_SPIN.value();
    let frame = TAU * m * (delta0 - delta1) * t;
    let u0 = top_return_amplitude(nu1, delta0, t);
    let u1 = top_return_amplitude(nu1, delta1, t);
    frame + wrap_pi(u0.arg() - u1.arg())
}

/// Symmetric-detuning gate of `n` cycles at amplitude ν1, with predictions
/// from the closed form and the effective model. Detunings come from the
/// model's actual kick lines.
pub fn symmetric_gate(model: &SpinModel, nu1: f64, n: u32) -> Result<GateSpec, PhaseGateError> {
    if !(nu1 > 0.0) || n == 0 {
        return Err(PhaseGateError::InvalidParam(format!(
            "symmetric gate needs ν1 > 0 and n >= 1, got ν1 = {nu1}, n = {n}"
        )));
    }
    let enc = &model.encoding;
    let carrier = enc.kick_midpoint();
    let d0 = enc.kick_frequency_0 - carrier;
    let d1 = enc.kick_frequency_1 - carrier;
    let half = 0.5 * enc.kick_splitting();
    let duration = full_cycle_duration(nu1, half, n)?;
    let omega = nu1.hypot(half);
    Ok(GateSpec {
        mode: GateMode::SymmetricDetuning,
        amplitude: nu1,
        carrier,
        detunings: [d0, d1],
        cycles: n,
        partner_cycles: None,
        duration,
        prediction: PhasePrediction {
            closed_form: (TAU * n as f64 * (1.0 - half / omega)).rem_euclid(TAU),
            effective: effective_relative_phase(nu1, d0, d1, duration).rem_euclid(TAU),
            simulated: None,
            leakage: None,
        },
    })
}

/// Gate resonant on the |01⟩↔|11⟩ rotation for `n` cycles at amplitude ν1.
pub fn resonant_gate(model: &SpinModel, nu1: f64, n: u32) -> Result<GateSpec, PhaseGateError> {
    if !(nu1 > 0.0) || n == 0 {
        return Err(PhaseGateError::InvalidParam(format!(
            "resonant gate needs ν1 > 0 and n >= 1, got ν1 = {nu1}, n = {n}"
        )));
    }
    let enc = &model.encoding;
    let carrier = enc.kick_frequency_1;
    let d0 = enc.kick_frequency_0 - carrier;
    let duration = n as f64 / nu1;
    Ok(GateSpec {
        mode: GateMode::ResonantSelective,
        amplitude: nu1,
        carrier,
        detunings: [d0, 0.0],
        cycles: n,
        partner_cycles: None,
        duration,
        prediction: PhasePrediction {
            closed_form: (PI * n as f64).rem_euclid(TAU),
            effective: effective_relative_phase(nu1, d0, 0.0, duration).rem_euclid(TAU),
            simulated: None,
            leakage: None,
        },
    })
}

/// Resonant gate whose amplitude makes the detuned partner close `n2` cycles.
pub fn resonant_partner_gate(model: &SpinModel, n1: u32, n2: u32) -> Result<GateSpec, PhaseGateError> {
    let a = model.encoding.kick_splitting();
    let (nu1, _) = resonant_kick_amplitude(a, n1, n2)?;
    let mut g = resonant_gate(model, nu1, n1)?;
    g.mode = GateMode::ResonantWithPartner;
    g.partner_cycles = Some(n2);
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateOutcome {
    /// Shift of arg ρ_{00,01} in (-π, π].
    pub relative_phase: f64,
    pub leakage: f64,
    /// Final populations of |00⟩ and |01⟩ starting from (|00⟩+|01⟩)/√2.
    pub p00: f64,
    pub p01: f64,
}

/// Run the gate on (|00⟩+|01⟩)/√2 through the full model.
pub fn simulate_gate(
    model: &SpinModel,
    gate: &GateSpec,
    config: &SimConfig,
) -> Result<GateOutcome, PhaseGateError> {
    let one = C64::new(1.0, 0.0);
    let psi = QuantumState::superposition(model, &[(QubitState::Q00, one), (QubitState::Q01, one)]);
    let mut cfg = config.clone();
    cfg.sample_every = None;
    let tr = evolve(model, &psi, &gate.program(), &cfg)?;
    let (l0, l1) = (model.level(QubitState::Q00), model.level(QubitState::Q01));
    let c = tr.final_state.coherence(l0, l1);
    let pops = tr.final_state.populations();
    Ok(GateOutcome {
        relative_phase: wrap_pi(c.arg()),
        leakage: (1.0 - pops[l0] - pops[l1]).max(0.0),
        p00: pops[l0],
        p01: pops[l1],
    })
}

/// Simulate and record the outcome in the gate's prediction.
pub fn with_simulation(
    model: &SpinModel,
    mut gate: GateSpec,
    config: &SimConfig,
) -> Result<GateSpec, PhaseGateError> {
    let out = simulate_gate(model, &gate, config)?;
    gate.prediction.simulated = Some(out.relative_phase.rem_euclid(TAU));
    gate.prediction.leakage = Some(out.leakage);
    Ok(gate)
}

/// One sampled point of the simulated phase map.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub nu1: f64,
    pub duration: f64,
    /// Unwrapped simulated relative phase.
    pub phase: f64,
    pub leakage: f64,
}

/// Simulated relative phase of the symmetric gate as a function of ν1.
/// Values are unwrapped by continuation from a strong-drive anchor where the
/// phase is close to zero. Simulations are cached by ν1.
pub struct PhaseMapper<'a> {
    model: &'a SpinModel,
    config: SimConfig,
    n: u32,
    cache: Mutex<HashMap<u64, (f64, f64)>>,
}

impl<'a> PhaseMapper<'a> {
    pub fn new(model: &'a SpinModel, n: u32, config: &SimConfig) -> Self {
        Self {
            model,
            config: config.clone(),
            n,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cycles(&self) -> u32 {
        self.n
    }

    fn gate(&self, nu1: f64) -> Result<GateSpec, PhaseGateError> {
        symmetric_gate(self.model, nu1, self.n)
    }

    /// Wrapped simulated phase and leakage at ν1.
    pub fn simulate(&self, nu1: f64) -> Result<(f64, f64), PhaseGateError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&nu1.to_bits()) {
            return Ok(*v);
        }
        let out = simulate_gate(self.model, &self.gate(nu1)?, &self.config)?;
        let v = (out.relative_phase, out.leakage);
        self.cache.lock().expect("cache lock").insert(nu1.to_bits(), v);
        Ok(v)
    }

    fn simulate_all(&self, nus: &[f64]) -> Result<Vec<(f64, f64)>, PhaseGateError> {
        nus.par_iter().map(|&x| self.simulate(x)).collect()
    }

    /// Strong-drive anchor where the phase per cycle is well below π/4.
    pub fn anchor(&self) -> f64 {
        let a = self.model.encoding.kick_splitting();
        // phase ≈ 3π a n / ν1 for ν1 ≫ a
        3.0 * PI * a * self.n as f64 / (PI / 8.0)
    }

    /// Continuation grid from the anchor down to `hi`, geometric spacing.
    fn approach(&self, hi: f64) -> Vec<f64> {
        let anchor = self.anchor().max(hi);
        let mut out = vec![anchor];
        let mut x = anchor;
        while x > hi * 1.05 {
            x /= 1.25;
            out.push(x.max(hi));
        }
        if *out.last().expect("non-empty") > hi {
            out.push(hi);
        }
        out
    }

    /// Phase map on `nus` (sorted descending internally), unwrapped from the anchor.
    pub fn map(&self, nus: &[f64]) -> Result<Vec<PhasePoint>, PhaseGateError> {
        let mut grid: Vec<f64> = nus.to_vec();
        grid.sort_by(|a, b| b.total_cmp(a));
        grid.dedup();
        let hi = grid.first().copied().ok_or_else(|| {
            PhaseGateError::InvalidParam("phase map needs at least one ν1".into())
        })?;
        let path = self.approach(hi);
        let all: Vec<f64> = path.iter().chain(grid.iter()).copied().collect();
        let sims = self.simulate_all(&all)?;
        let mut prev = sims[0].0;
        let mut unwrapped = Vec::with_capacity(all.len());
        for (k, &(ph, _)) in sims.iter().enumerate() {
            let u = if k == 0 { ph } else { prev + wrap_pi(ph - prev) };
            unwrapped.push(u);
            prev = u;
        }
        let mut out: Vec<PhasePoint> = grid
            .iter()
            .enumerate()
            .map(|(i, &nu1)| {
                let k = path.len() + i;
                PhasePoint {
                    nu1,
                    duration: self.gate(nu1).map(|g| g.duration).unwrap_or(f64::NAN),
                    phase: unwrapped[k],
                    leakage: sims[k].1,
                }
            })
            .collect();
        out.sort_by(|a, b| a.nu1.total_cmp(&b.nu1));
        Ok(out)
    }
}

/// Uniform ν1 grid of `points` values on [lo, hi].
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

/// True when the phases strictly decrease with increasing ν1.
pub fn is_strictly_monotone(points: &[PhasePoint]) -> bool {
    points.windows(2).all(|w| w[1].phase < w[0].phase)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Search interval for ν1, MHz.
    pub lo: f64,
    pub hi: f64,
    /// Grid points used to bracket the crossing.
    pub grid_points: usize,
    /// Pick the crossing nearest this ν1 instead of the strongest-drive one.
    pub prefer: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            lo: 2.0,
            hi: 40.0,
            grid_points: 153,
            prefer: None,
        }
    }
}

/// Find ν1 whose simulated symmetric gate gives relative phase `target`
/// (mod 2π) to within [`PHASE_TOL`], by bisection on the simulated map.
/// Without a preference, the crossing at the strongest drive is returned.
pub fn solve_amplitude_for_phase(
    model: &SpinModel,
    target: f64,
    n: u32,
    opts: &SolveOptions,
    config: &SimConfig,
) -> Result<GateSpec, PhaseGateError> {
    if !(opts.lo > 0.0 && opts.hi > opts.lo) || !target.is_finite() {
        return Err(PhaseGateError::InvalidParam(format!(
            "bad search interval [{}, {}] or target {target}",
            opts.lo, opts.hi
        )));
    }
    let mapper = PhaseMapper::new(model, n, config);
    let map = mapper.map(&linear_grid(opts.lo, opts.hi, opts.grid_points))?;
    let target_c = target.rem_euclid(TAU);

    // brackets [left, right] (ascending ν1) where the unwrapped map crosses target + 2πk
    let mut brackets: Vec<(usize, f64)> = Vec::new();
    for i in 0..map.len() - 1 {
        let (p_hi_nu, p_lo_nu) = (map[i + 1].phase, map[i].phase);
        let (lo_v, hi_v) = (p_hi_nu.min(p_lo_nu), p_hi_nu.max(p_lo_nu));
        let k0 = ((lo_v - target_c) / TAU).ceil() as i64;
        let mut k = k0;
        while target_c + TAU * k as f64 <= hi_v {
            brackets.push((i, target_c + TAU * k as f64));
            k += 1;
        }
    }
    let Some(&(i, level)) = (match opts.prefer {
        Some(p) => brackets.iter().min_by(|a, b| {
            let da = (0.5 * (map[a.0].nu1 + map[a.0 + 1].nu1) - p).abs();
            let db = (0.5 * (map[b.0].nu1 + map[b.0 + 1].nu1) - p).abs();
            da.total_cmp(&db)
        }),
        None => brackets.iter().max_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1))),
    }) else {
        return Err(PhaseGateError::Unreachable {
            target: target_c,
            n,
            lo: opts.lo,
            hi: opts.hi,
        });
    };

    let (mut a, mut b) = (map[i].nu1, map[i + 1].nu1);
    let (mut fa, fb) = (map[i].phase - level, map[i + 1].phase - level);
    let anchor_phase = 0.5 * (map[i].phase + map[i + 1].phase);
    if fa == 0.0 {
        b = a;
    } else if fb == 0.0 {
        a = b;
    }
    let mut best = (f64::INFINITY, 0.5 * (a + b));
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        let (ph, _) = mapper.simulate(mid)?;
        let unwrapped = anchor_phase + wrap_pi(ph - anchor_phase);
        let f = unwrapped - level;
        if f.abs() < best.0 {
            best = (f.abs(), mid);
        }
        if f.abs() < PHASE_TOL * 0.5 || (b - a).abs() < 1e-12 {
            break;
        }
        if (f < 0.0) == (fa < 0.0) {
            a = mid;
            fa = f;
        } else {
            b = mid;
        }
    }
    if best.0 >= PHASE_TOL {
        return Err(PhaseGateError::NotConverged { residual: best.0 });
    }
    with_simulation(model, symmetric_gate(model, best.1, n)?, config)
}

/// Symmetric-detuning kick of relative phase `phase` whose duration is
/// closest to `target_duration`.
///
/// The effective model puts the phase near 2π m a T (m the top electron
/// projection), so candidate durations T_k = (φ + 2πk)/(2π m a) seed a
/// bisection on the simulated map; admissible candidates need Ω ≥ a/2 with
/// some margin.
pub fn calibrated_kick(
    model: &SpinModel,
    phase: f64,
    target_duration: f64,
    config: &SimConfig,
) -> Result<GateSpec, PhaseGateError> {
    let a = model.encoding.kick_splitting();
    let half = 0.5 * a;
    let m = ELECTRON_SPIN.value();
    let phase = phase.rem_euclid(TAU);
    let mut best: Option<(f64, f64)> = None;
    for k in 0..256 {
        let t = (phase + TAU * k as f64) / (TAU * m * a);
        if t <= 0.0 {
            continue;
        }
        let omega = 1.0 / t;
        if omega <= half * 1.05 {
            break;
        }
        let nu1 = (omega * omega - half * half).sqrt();
        let dist = (t - target_duration).abs();
        if best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, nu1));
        }
    }
    let (_, guess) = best.ok_or_else(|| {
        PhaseGateError::InvalidParam(format!("no kick of phase {phase} near {target_duration} µs"))
    })?;
    let opts = SolveOptions {
        lo: guess * 0.8,
        hi: guess * 1.25,
        grid_points: 21,
        prefer: Some(guess),
    };
    solve_amplitude_for_phase(model, phase, 1, &opts, config)
}

/// π kick nearest `target_duration`.
pub fn calibrated_pi_kick(
    model: &SpinModel,
    target_duration: f64,
    config: &SimConfig,
) -> Result<GateSpec, PhaseGateError> {
    calibrated_kick(model, PI, target_duration, config)
}
