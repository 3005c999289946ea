//! Time evolution of the 12-level system under a pulse program.
//!
//! States live in the interaction frame of the static Hamiltonian, expressed
//! in its eigenbasis. Drives enter through the rotating-wave form
//!
//! `H_jk(t) = ν1 · d_jk · exp(-i(2π(ν_jk - f)t + φ))` for levels `j < k`,
//!
//! keeping only pairs with `|ν_jk - f|` inside the channel cutoff. Levels
//! coupled by kept terms are grouped into independent blocks and propagated
//! with exponential-midpoint steps.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::model::{
    DriveKind, ModelError, QubitState, SpinModel, DIM, H_OVER_KB_K_PER_MHZ, TRANSITION_THRESHOLD,
};
use crate::pulse::{
    compile_intervals, ActiveDrive, Channel, ProgramError, PulseProgram, Segment, TIME_EPS,
};
use crate::spin_core::{eigenbasis, herm_expm, propagator_from_eigen, Eigen, Operator, C64};

/// Tolerance on ket norm and density trace.
pub const NORM_TOL: f64 = 1e-9;
/// Tolerance on the sum of sampled populations.
pub const POPULATION_SUM_TOL: f64 = 1e-6;
/// Cycles the partner manifolds complete during the thermal preparation pulse.
pub const PREP_PARTNER_CYCLES: u32 = 8;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step size {dt:e} µs at t = {t} µs is below the floor {floor:e} µs")]
    StepUnderflow { t: f64, dt: f64, floor: f64 },
    #[error("invariant violated at t = {t} µs: {what} (deviation {deviation:e})")]
    InvariantViolation {
        t: f64,
        what: &'static str,
        deviation: f64,
    },
    #[error("coherence magnitude {magnitude:e} is below the phase floor {floor:e}")]
    UndefinedPhase { magnitude: f64, floor: f64 },
    #[error("ensemble needs at least one sample")]
    EmptyEnsemble,
}

impl EngineError {
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            EngineError::InvariantViolation { .. } | EngineError::StepUnderflow { .. }
        )
    }
}

/// Distribution of RF amplitude scale factors `1 + ε`, ε ~ N(0, σ²).
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            samples: 1,
            seed: 0,
        }
    }
}

impl EnsembleSpec {
    /// Stratified draws: ε_i = σ Φ⁻¹((i + U_i)/N).
    pub fn scale_factors(&self) -> Result<Vec<f64>, EngineError> {
        if self.samples < 1 {
            return Err(EngineError::EmptyEnsemble);
        }
        if self.sigma == 0.0 {
            return Ok(vec![1.0; self.samples]);
        }
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.samples as f64;
        Ok((0..self.samples)
            .map(|i| {
                let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
                1.0 + self.sigma * normal.inverse_cdf((i as f64 + u) / n)
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// µs
    pub dt_max: f64,
    /// Default cutoff for `MW*` channels, MHz.
    pub mw_cutoff: f64,
    /// Default cutoff for `RF*` channels, MHz.
    pub rf_cutoff: f64,
    /// Per-channel overrides, MHz.
    pub channel_cutoffs: BTreeMap<String, f64>,
    pub leakage_threshold: f64,
    pub phase_floor: f64,
    /// Replaces the program's sampling step when set, µs.
    pub sample_every: Option<f64>,
    /// Smallest step accepted before reporting underflow, µs.
    pub min_dt: f64,
    pub ensemble: EnsembleSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_max: 0.5,
            mw_cutoff: 100.0,
            rf_cutoff: 10.0,
            channel_cutoffs: BTreeMap::new(),
            leakage_threshold: 1e-2,
            phase_floor: 1e-6,
            sample_every: None,
            min_dt: 1e-7,
            ensemble: EnsembleSpec::default(),
        }
    }
}

pub const CONFIG_KEYS: [&str; 9] = [
    "dt_max_us",
    "cutoff_MW_MHz",
    "cutoff_RF_MHz",
    "leakage_threshold",
    "phase_floor",
    "sample_every_us",
    "ensemble_sigma",
    "ensemble_samples",
    "seed",
];

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if !(self.dt_max.is_finite() && self.dt_max > 0.0) {
            return bad(format!("dt_max must be positive, got {}", self.dt_max));
        }
        let cutoffs = [("MW", self.mw_cutoff), ("RF", self.rf_cutoff)];
        for (name, c) in cutoffs
            .into_iter()
            .chain(self.channel_cutoffs.iter().map(|(k, v)| (k.as_str(), *v)))
        {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("cutoff for {name} must be positive, got {c}"));
            }
        }
        if !(self.leakage_threshold > 0.0) {
            return bad("leakage threshold must be positive".into());
        }
        if !(self.phase_floor >= 0.0) {
            return bad("phase floor must be non-negative".into());
        }
        if let Some(s) = self.sample_every {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("sampling step must be positive, got {s}"));
            }
        }
        if !(self.ensemble.sigma.is_finite() && self.ensemble.sigma >= 0.0) {
            return bad(format!("ensemble sigma must be non-negative, got {}", self.ensemble.sigma));
        }
        if self.ensemble.samples < 1 {
            return Err(EngineError::EmptyEnsemble);
        }
        Ok(())
    }

    pub fn cutoff(&self, channel: &Channel) -> f64 {
        if let Some(c) = self.channel_cutoffs.get(channel.name()) {
            return *c;
        }
        match channel.kind() {
            DriveKind::Electron => self.mw_cutoff,
            DriveKind::Nuclear => self.rf_cutoff,
        }
    }

    /// Apply recognised keys; `cutoff.<CHANNEL>_MHz` sets a per-channel cutoff.
    pub fn apply_key_values(&mut self, kv: &KeyValues) -> Result<(), EngineError> {
        if let Some(v) = kv.parsed("dt_max_us")? {
            self.dt_max = v;
        }
        if let Some(v) = kv.parsed("cutoff_MW_MHz")? {
            self.mw_cutoff = v;
        }
        if let Some(v) = kv.parsed("cutoff_RF_MHz")? {
            self.rf_cutoff = v;
        }
        if let Some(v) = kv.parsed("leakage_threshold")? {
            self.leakage_threshold = v;
        }
        if let Some(v) = kv.parsed("phase_floor")? {
            self.phase_floor = v;
        }
        if let Some(v) = kv.parsed("sample_every_us")? {
            self.sample_every = Some(v);
        }
        if let Some(v) = kv.parsed("ensemble_sigma")? {
            self.ensemble.sigma = v;
        }
        if let Some(v) = kv.parsed("ensemble_samples")? {
            self.ensemble.samples = v;
        }
        if let Some(v) = kv.parsed("seed")? {
            self.ensemble.seed = v;
        }
        for e in kv.entries() {
            if let Some(ch) = e
                .key
                .strip_prefix("cutoff.")
                .and_then(|rest| rest.strip_suffix("_MHz"))
            {
                Channel::new(ch)?;
                let v = kv.require::<f64>(&e.key)?;
                self.channel_cutoffs.insert(ch.to_string(), v);
            }
        }
        self.validate()
    }

    pub fn is_known_key(key: &str) -> bool {
        CONFIG_KEYS.contains(&key)
            || key
                .strip_prefix("cutoff.")
                .and_then(|r| r.strip_suffix("_MHz"))
                .is_some_and(|ch| Channel::new(ch).is_ok())
    }
}

/// State in the interaction-frame eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Ket(Vec<C64>),
    Density(Operator),
}

impl QuantumState {
    pub fn basis(level: usize) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); DIM];
        v[level] = C64::new(1.0, 0.0);
        QuantumState::Ket(v)
    }

    pub fn qubit(model: &SpinModel, q: QubitState) -> Self {
        Self::basis(model.level(q))
    }

    /// Normalized superposition of logical states.
    pub fn superposition(model: &SpinModel, terms: &[(QubitState, C64)]) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); DIM];
        for (q, c) in terms {
            v[model.level(*q)] += *c;
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        QuantumState::Ket(v.into_iter().map(|z| z / norm).collect())
    }

    pub fn to_density(&self) -> Operator {
        match self {
            QuantumState::Ket(v) => Operator::from_fn(DIM, |i, j| v[i] * v[j].conj()),
            QuantumState::Density(r) => r.clone(),
        }
    }

    pub fn populations(&self) -> [f64; DIM] {
        let mut p = [0.0; DIM];
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = match self {
                QuantumState::Ket(v) => v[k].norm_sqr(),
                QuantumState::Density(r) => r[(k, k)].re,
            };
        }
        p
    }

    /// ρ_ij
    pub fn coherence(&self, i: usize, j: usize) -> C64 {
        match self {
            QuantumState::Ket(v) => v[i] * v[j].conj(),
            QuantumState::Density(r) => r[(i, j)],
        }
    }

    /// Ket norm squared or density trace.
    pub fn norm(&self) -> f64 {
        match self {
            QuantumState::Ket(v) => v.iter().map(|z| z.norm_sqr()).sum(),
            QuantumState::Density(r) => r.trace().re,
        }
    }

    /// Check norm, Hermiticity and positivity to `NORM_TOL`.
    pub fn check(&self, t: f64) -> Result<(), EngineError> {
        let violation = |what, deviation| EngineError::InvariantViolation { t, what, deviation };
        let dn = (self.norm() - 1.0).abs();
        if !(dn <= NORM_TOL) {
            return Err(violation("norm not conserved", dn));
        }
        if let QuantumState::Density(r) = self {
            let h = r.hermiticity_error();
            if h > NORM_TOL {
                return Err(violation("density matrix not Hermitian", h));
            }
            let eig = eigenbasis(r).map_err(|_| violation("density matrix not Hermitian", h))?;
            let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
            if min < -NORM_TOL {
                return Err(violation("density matrix not positive", -min));
            }
        }
        Ok(())
    }

    fn apply_diagonal(&mut self, factors: &[C64; DIM]) {
        match self {
            QuantumState::Ket(v) => {
                for (z, f) in v.iter_mut().zip(factors) {
                    *z *= f;
                }
            }
            QuantumState::Density(r) => {
                for i in 0..DIM {
                    for j in 0..DIM {
                        r[(i, j)] *= factors[i] * factors[j].conj();
                    }
                }
            }
        }
    }

    fn apply_block(&mut self, levels: &[usize], u: &Operator) {
        let n = levels.len();
        match self {
            QuantumState::Ket(v) => {
                let sub: Vec<C64> = levels.iter().map(|&l| v[l]).collect();
                let out = u.apply(&sub);
                for (a, &l) in levels.iter().enumerate() {
                    v[l] = out[a];
                }
            }
            QuantumState::Density(r) => {
                // rows then columns: ρ ← U ρ U† restricted to the block
                let mut tmp = r.clone();
                for col in 0..DIM {
                    for a in 0..n {
                        tmp[(levels[a], col)] = (0..n).map(|b| u[(a, b)] * r[(levels[b], col)]).sum();
                    }
                }
                let mut out = tmp.clone();
                for row in 0..DIM {
                    for a in 0..n {
                        out[(row, levels[a])] =
                            (0..n).map(|b| tmp[(row, levels[b])] * u[(a, b)].conj()).sum();
                    }
                }
                *r = out;
            }
        }
    }
}

/// arg(ρ_ij) in (-π, π].
pub fn coherence_phase(
    state: &QuantumState,
    i: usize,
    j: usize,
    floor: f64,
) -> Result<f64, EngineError> {
    phase_of(state.coherence(i, j), floor)
}

fn phase_of(z: C64, floor: f64) -> Result<f64, EngineError> {
    let magnitude = z.norm();
    if !(magnitude > floor) {
        return Err(EngineError::UndefinedPhase { magnitude, floor });
    }
    let p = z.arg();
    Ok(if p <= -PI { PI } else { p })
}

/// Instantaneous phase kick: the nuclear-`1` qubit levels are multiplied by
/// e^{-iφ}, so ρ_{00,01} gains e^{iφ}.
pub fn apply_ideal_kick(state: &mut QuantumState, model: &SpinModel, phase: f64) {
    let mut factors = [C64::new(1.0, 0.0); DIM];
    for q in [QubitState::Q01, QubitState::Q11] {
        factors[model.level(q)] = C64::from_polar(1.0, -phase);
    }
    state.apply_diagonal(&factors);
}

/// One kept rotating-wave term between eigenlevels `lower < upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub lower: usize,
    pub upper: usize,
    /// ν1 · d · e^{-iφ}, MHz.
    pub weight: C64,
    /// ν_jk − f, MHz.
    pub detuning: f64,
}

/// Kept terms for a set of simultaneous drives; RF amplitudes are scaled by
/// `rf_scale`.
pub fn drive_couplings(
    model: &SpinModel,
    drives: &[ActiveDrive],
    config: &SimConfig,
    rf_scale: f64,
) -> Vec<Coupling> {
    let mut out = Vec::new();
    for d in drives {
        let kind = d.channel.kind();
        let scale = match kind {
            DriveKind::Electron => 1.0,
            DriveKind::Nuclear => rf_scale,
        };
        let amp = d.amplitude * scale;
        if amp == 0.0 {
            continue;
        }
        let cutoff = config.cutoff(&d.channel);
        let before = out.len();
        for j in 0..DIM {
            for k in (j + 1)..DIM {
                let element = model.drive_element(kind, j, k);
                if element.norm() <= TRANSITION_THRESHOLD {
                    continue;
                }
                let detuning = (model.energy(k) - model.energy(j)) - d.carrier;
                if detuning.abs() <= cutoff {
                    out.push(Coupling {
                        lower: j,
                        upper: k,
                        weight: element * C64::from_polar(amp, -d.phase),
                        detuning,
                    });
                }
            }
        }
        if out.len() == before {
            warn!(
                "channel {} at {} MHz reaches no transition within {} MHz; it acts as identity",
                d.channel, d.carrier, cutoff
            );
        }
    }
    out
}

/// Full 12×12 interaction-frame Hamiltonian at time `t`, MHz.
pub fn interaction_hamiltonian(
    model: &SpinModel,
    drives: &[ActiveDrive],
    config: &SimConfig,
    t: f64,
) -> Operator {
    let mut h = Operator::zeros(DIM);
    for c in drive_couplings(model, drives, config, 1.0) {
        let z = c.weight * C64::from_polar(1.0, -2.0 * PI * c.detuning * t);
        h[(c.lower, c.upper)] += z;
        h[(c.upper, c.lower)] += z.conj();
    }
    h
}

struct Block {
    levels: Vec<usize>,
    /// (local lower, local upper, weight, detuning)
    terms: Vec<(usize, usize, C64, f64)>,
    /// Decomposition reused for every step when the block has no time dependence.
    fixed: Option<Eigen>,
}

impl Block {
    fn hamiltonian(&self, t: f64) -> Operator {
        let mut h = Operator::zeros(self.levels.len());
        for &(a, b, w, det) in &self.terms {
            let z = w * C64::from_polar(1.0, -2.0 * PI * det * t);
            h[(a, b)] += z;
            h[(b, a)] += z.conj();
        }
        h
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn build_blocks(couplings: &[Coupling], horizon: f64) -> Result<Vec<Block>, EngineError> {
    let mut parent: Vec<usize> = (0..DIM).collect();
    for c in couplings {
        let (a, b) = (find(&mut parent, c.lower), find(&mut parent, c.upper));
        parent[a] = b;
    }
    let roots: Vec<usize> = (0..DIM).map(|l| find(&mut parent, l)).collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in couplings {
        for l in [c.lower, c.upper] {
            let root = roots[l];
            let g = groups.entry(root).or_default();
            if !g.contains(&l) {
                g.push(l);
            }
        }
    }
    let mut blocks = Vec::new();
    for (root, mut levels) in groups {
        levels.sort_unstable();
        let local = |l: usize| levels.iter().position(|&x| x == l).expect("level in block");
        let terms: Vec<_> = couplings
            .iter()
            .filter(|c| roots[c.lower] == root)
            .map(|c| (local(c.lower), local(c.upper), c.weight, c.detuning))
            .collect();
        let mut block = Block {
            levels,
            terms,
            fixed: None,
        };
        // drift of the rotating factors over the whole record stays below 1e-9 rad
        if block
            .terms
            .iter()
            .all(|t| (2.0 * PI * t.3 * horizon).abs() < 1e-9)
        {
            let eig = eigenbasis(&block.hamiltonian(0.0)).map_err(ModelError::from)?;
            block.fixed = Some(eig);
        }
        blocks.push(block);
    }
    Ok(blocks)
}

/// Largest step allowed for a set of kept terms.
pub fn step_limit(couplings: &[Coupling], drives: &[ActiveDrive], rf_scale: f64, dt_max: f64) -> f64 {
    let mut dt = dt_max;
    let max_det = couplings.iter().map(|c| c.detuning.abs()).fold(0.0, f64::max);
    if max_det > 0.0 {
        dt = dt.min(1.0 / (20.0 * max_det));
    }
    let max_amp = drives
        .iter()
        .map(|d| match d.channel.kind() {
            DriveKind::Electron => d.amplitude,
            DriveKind::Nuclear => d.amplitude * rf_scale.abs(),
        })
        .fold(0.0, f64::max);
    if max_amp > 0.0 {
        dt = dt.min(1.0 / (20.0 * max_amp));
    }
    dt
}

fn advance(
    state: &mut QuantumState,
    blocks: &[Block],
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<(), EngineError> {
    let span = t1 - t0;
    if span <= TIME_EPS || blocks.is_empty() {
        return Ok(());
    }
    let n = (span / dt - 1e-9).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let fixed: Vec<Option<Operator>> = blocks
        .iter()
        .map(|b| b.fixed.as_ref().map(|e| propagator_from_eigen(e, h)))
        .collect();
    for s in 0..n {
        let tm = t0 + (s as f64 + 0.5) * h;
        for (b, u) in blocks.iter().zip(&fixed) {
            match u {
                Some(u) => state.apply_block(&b.levels, u),
                None => {
                    let u = herm_expm(&b.hamiltonian(tm), h).map_err(ModelError::from)?;
                    state.apply_block(&b.levels, &u);
                }
            }
        }
    }
    Ok(())
}

/// Sampled observables of one evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub program: String,
    pub params_hash: u64,
    pub times: Vec<f64>,
    /// Eigenlevel populations at each sample.
    pub populations: Vec<[f64; DIM]>,
    /// ρ_{00,01} at each sample.
    pub coherence01: Vec<C64>,
    /// arg ρ_{00,01}, `None` below the phase floor.
    pub phase01: Vec<Option<f64>>,
    /// Eigenlevels of |00⟩, |01⟩, |10⟩, |11⟩.
    pub qubit_levels: [usize; 4],
    pub final_state: QuantumState,
}

impl Trajectory {
    pub fn population(&self, q: QubitState) -> Vec<f64> {
        let l = self.qubit_levels[q as usize];
        self.populations.iter().map(|p| p[l]).collect()
    }

    pub fn p01(&self) -> Vec<f64> {
        self.population(QubitState::Q01)
    }

    /// Population outside the four logical levels.
    pub fn other(&self) -> Vec<f64> {
        self.populations
            .iter()
            .map(|p| {
                let inside: f64 = self.qubit_levels.iter().map(|&l| p[l]).sum();
                (p.iter().sum::<f64>() - inside).max(0.0)
            })
            .collect()
    }

    /// Nearest sample index to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&x| x < t);
        if i == 0 {
            0
        } else if i == self.times.len() || (t - self.times[i - 1]) <= (self.times[i] - t) {
            i - 1
        } else {
            i
        }
    }
}

pub fn params_hash(model: &SpinModel) -> u64 {
    // FNV-1a over the canonical parameter text
    model
        .params
        .to_text()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn sample_times(program: &PulseProgram, config: &SimConfig) -> Vec<f64> {
    match config.sample_every {
        Some(step) => {
            let mut p = program.clone();
            p.sample_every = Some(step);
            p.sample_points()
        }
        None => program.sample_points(),
    }
}

/// Evolve `state` through `program`, sampling observables.
pub fn evolve(
    model: &SpinModel,
    state: &QuantumState,
    program: &PulseProgram,
    config: &SimConfig,
) -> Result<Trajectory, EngineError> {
    evolve_scaled(model, state, program, config, 1.0)
}

/// As [`evolve`] with every RF amplitude multiplied by `rf_scale`.
pub fn evolve_scaled(
    model: &SpinModel,
    state: &QuantumState,
    program: &PulseProgram,
    config: &SimConfig,
    rf_scale: f64,
) -> Result<Trajectory, EngineError> {
    config.validate()?;
    program.validate()?;
    state.check(0.0)?;

    let samples = sample_times(program, config);
    let mut kicks: Vec<(f64, f64)> = program.kicks.iter().map(|k| (k.time, k.phase)).collect();
    kicks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut traj = Trajectory {
        program: program.name.clone(),
        params_hash: params_hash(model),
        times: Vec::with_capacity(samples.len()),
        populations: Vec::with_capacity(samples.len()),
        coherence01: Vec::with_capacity(samples.len()),
        phase01: Vec::with_capacity(samples.len()),
        qubit_levels: model.encoding.levels,
        final_state: state.clone(),
    };
    let (l00, l01) = (model.level(QubitState::Q00), model.level(QubitState::Q01));

    let mut psi = state.clone();
    let mut next_sample = 0usize;
    let mut next_kick = 0usize;
    let horizon = program.total_duration.max(1.0);

    let settle = |psi: &mut QuantumState,
                      t: f64,
                      next_sample: &mut usize,
                      next_kick: &mut usize,
                      traj: &mut Trajectory|
     -> Result<(), EngineError> {
        while *next_kick < kicks.len() && kicks[*next_kick].0 <= t + TIME_EPS {
            apply_ideal_kick(psi, model, kicks[*next_kick].1);
            *next_kick += 1;
        }
        while *next_sample < samples.len() && samples[*next_sample] <= t + TIME_EPS {
            psi.check(t)?;
            let pops = psi.populations();
            let sum: f64 = pops.iter().sum();
            if (sum - 1.0).abs() > POPULATION_SUM_TOL {
                return Err(EngineError::InvariantViolation {
                    t,
                    what: "populations do not sum to one",
                    deviation: (sum - 1.0).abs(),
                });
            }
            let c = psi.coherence(l00, l01);
            traj.times.push(samples[*next_sample]);
            traj.populations.push(pops);
            traj.coherence01.push(c);
            traj.phase01.push(phase_of(c, config.phase_floor).ok());
            *next_sample += 1;
        }
        Ok(())
    };

    settle(&mut psi, 0.0, &mut next_sample, &mut next_kick, &mut traj)?;
    for iv in compile_intervals(program) {
        let couplings = drive_couplings(model, &iv.drives, config, rf_scale);
        let blocks = build_blocks(&couplings, horizon)?;
        let dt = step_limit(&couplings, &iv.drives, rf_scale, config.dt_max);
        if dt < config.min_dt {
            return Err(EngineError::StepUnderflow {
                t: iv.t_start,
                dt,
                floor: config.min_dt,
            });
        }
        let mut cuts: Vec<f64> = samples
            .iter()
            .copied()
            .chain(kicks.iter().map(|k| k.0))
            .filter(|&t| t > iv.t_start + TIME_EPS && t < iv.t_end - TIME_EPS)
            .collect();
        cuts.push(iv.t_end);
        cuts.sort_by(f64::total_cmp);
        let mut t = iv.t_start;
        for c in cuts {
            advance(&mut psi, &blocks, t, c, dt)?;
            t = c;
            settle(&mut psi, t, &mut next_sample, &mut next_kick, &mut traj)?;
        }
    }
    traj.final_state = psi;
    Ok(traj)
}

/// Average populations and coherences over the configured RF-amplitude
/// ensemble. Members run in parallel and are combined in a fixed order.
pub fn ensemble_average(
    model: &SpinModel,
    state: &QuantumState,
    program: &PulseProgram,
    config: &SimConfig,
) -> Result<Trajectory, EngineError> {
    config.validate()?;
    let factors = config.ensemble.scale_factors()?;
    if config.ensemble.sigma == 0.0 {
        return evolve(model, state, program, config);
    }
    let members: Vec<Trajectory> = factors
        .par_iter()
        .map(|&s| evolve_scaled(model, state, program, config, s))
        .collect::<Result<_, _>>()?;
    let n = members.len() as f64;
    let mut out = members[0].clone();
    let mut rho = Operator::zeros(DIM);
    for (i, m) in members.iter().enumerate() {
        rho = &rho + &m.final_state.to_density();
        if i == 0 {
            continue;
        }
        for (acc, p) in out.populations.iter_mut().zip(&m.populations) {
            for (a, b) in acc.iter_mut().zip(p) {
                *a += b;
            }
        }
        for (acc, c) in out.coherence01.iter_mut().zip(&m.coherence01) {
            *acc += c;
        }
    }
    for p in out.populations.iter_mut() {
        for a in p.iter_mut() {
            *a /= n;
        }
    }
    for c in out.coherence01.iter_mut() {
        *c /= n;
    }
    out.phase01 = out
        .coherence01
        .iter()
        .map(|&c| phase_of(c, config.phase_floor).ok())
        .collect();
    out.final_state = QuantumState::Density(rho.scale_re(1.0 / n));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialMode {
    /// |00⟩
    Pure,
    /// Boltzmann state followed by a selective π pulse on the M_I = +1 manifold.
    Thermal,
}

/// Boltzmann density matrix of the static Hamiltonian at `temperature` K;
/// `f64::INFINITY` gives the maximally mixed state.
pub fn boltzmann_state(model: &SpinModel, temperature: f64) -> Result<QuantumState, EngineError> {
    if !(temperature > 0.0) || temperature.is_nan() {
        return Err(ModelError::InvalidParam {
            name: "temperature_K",
            value: temperature,
            reason: "must be positive",
        }
        .into());
    }
    let beta = H_OVER_KB_K_PER_MHZ / temperature;
    let e0 = model.energy(0);
    let w: Vec<f64> = (0..DIM).map(|k| (-(model.energy(k) - e0) * beta).exp()).collect();
    let z: f64 = w.iter().sum();
    let diag: Vec<f64> = w.iter().map(|x| x / z).collect();
    Ok(QuantumState::Density(Operator::from_diagonal(&diag)))
}

/// Selective π rotation of the M_I = +1 electron manifold. The amplitude is
/// chosen so the M_I = 0 manifold, detuned by the kick splitting, completes
/// `PREP_PARTNER_CYCLES` whole cycles.
pub fn prep_pulse(model: &SpinModel, t_start: f64) -> Segment {
    let a = model.encoding.kick_splitting();
    let n2 = PREP_PARTNER_CYCLES as f64;
    let nu1 = a * 0.5 / (n2 * n2 - 0.25).sqrt();
    Segment::new(
        Channel::mw(),
        t_start,
        0.5 / nu1,
        model.encoding.kick_frequency_0,
        nu1,
        0.0,
    )
    .expect("positive prep pulse parameters")
}

pub fn prepare_thermal(
    model: &SpinModel,
    temperature: f64,
    config: &SimConfig,
) -> Result<QuantumState, EngineError> {
    let rho = boltzmann_state(model, temperature)?;
    let seg = prep_pulse(model, 0.0);
    let mut program = PulseProgram::new("thermal-prep", seg.end());
    program.push_segment(seg)?;
    let mut cfg = config.clone();
    cfg.sample_every = None;
    Ok(evolve(model, &rho, &program, &cfg)?.final_state)
}

pub fn prepare_initial(
    model: &SpinModel,
    mode: InitialMode,
    config: &SimConfig,
) -> Result<QuantumState, EngineError> {
    match mode {
        InitialMode::Pure => Ok(QuantumState::qubit(model, QubitState::Q00)),
        InitialMode::Thermal => {
            let t = model.params.temperature_k.ok_or(ModelError::InvalidParam {
                name: "temperature_K",
                value: f64::NAN,
                reason: "required for thermal preparation",
            })?;
            prepare_thermal(model, t, config)
        }
    }
}

pub const CSV_HEADER: &str = "time_us,p00,p01,p10,p11,other,phase01_rad";

/// CSV with nine significant digits; undefined phases are written as NaN.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 * (traj.times.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let other = traj.other();
    for (i, t) in traj.times.iter().enumerate() {
        let p = &traj.populations[i];
        let q: Vec<f64> = traj.qubit_levels.iter().map(|&l| p[l]).collect();
        let _ = write!(
            out,
            "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},",
            t, q[0], q[1], q[2], q[3], other[i]
        );
        match traj.phase01[i] {
            Some(ph) => {
                let _ = writeln!(out, "{ph:.8e}");
            }
            None => out.push_str("NaN\n"),
        }
    }
    out
}
