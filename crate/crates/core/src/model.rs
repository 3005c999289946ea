//! Static spin Hamiltonian of N@C60 and the four-level qubit encoding.
//!
//! The product basis is |M_S, M_I⟩ with M_S = 3/2 … -3/2 (outer) and
//! M_I = 1, 0, -1 (inner), so index = 3·(3/2 - M_S) + (1 - M_I).
//!
//! H0 = ν_e S_z + a S·I - ν_n I_z, all terms in MHz. The isotropic S·I keeps
//! its flip-flop part, so the second-order hyperfine shifts that split the
//! ENDOR lines come out of exact diagonalization rather than a formula.

use std::fmt;

use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::spin_core::{
    eigenbasis, embed, spin_operators, Eigen, Operator, Spin, SpinError, SpinSite, C64,
};

/// Bohr magneton over Planck's constant, MHz per mT.
pub const BOHR_MHZ_PER_MT: f64 = 13.996_244_917_1;
/// h / k_B in kelvin per MHz.
pub const H_OVER_KB_K_PER_MHZ: f64 = 4.799_243_073e-5;
/// Default matrix-element threshold for listing a transition.
pub const TRANSITION_THRESHOLD: f64 = 1e-6;

pub const ELECTRON_SPIN: Spin = Spin::THREE_HALVES;
pub const NUCLEAR_SPIN: Spin = Spin::ONE;
pub const DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("qubit level {label} has ambiguous character (dominant weight {weight:.3} <= 0.5)")]
    AmbiguousLevel { label: &'static str, weight: f64 },
    #[error("qubit levels {first} and {second} map to the same eigenlevel {level}")]
    DuplicateLevel {
        first: &'static str,
        second: &'static str,
        level: usize,
    },
    #[error("electron kick transitions are degenerate ({0:.3e} MHz apart); the manifolds cannot be addressed separately")]
    DegenerateKickTransitions(f64),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Physical constants of the spin system.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Electron g-factor.
    pub g: f64,
    /// Isotropic hyperfine constant, MHz.
    pub a_mhz: f64,
    /// Static field, mT.
    pub b0_mt: f64,
    /// Nuclear Larmor frequency at `b0_mt`, MHz.
    pub nu_n_mhz: f64,
    /// Sample temperature for thermal initial states, K.
    pub temperature_k: Option<f64>,
}

pub const PARAM_KEYS: [&str; 5] = ["g", "a_MHz", "B0_mT", "nu_n_MHz", "temperature_K"];

impl PhysicalParams {
    /// Reference preset. `a` and `ν_n` reproduce the two driven ENDOR lines
    /// (mean = 3a/2, half-difference = ν_n); B0 puts ν_e in X-band.
    pub fn reference() -> Self {
        Self {
            g: 2.003,
            a_mhz: 15.793,
            b0_mt: 344.5,
            nu_n_mhz: 1.092,
            temperature_k: Some(190.0),
        }
    }

    pub fn with_hyperfine(mut self, a_mhz: f64) -> Self {
        self.a_mhz = a_mhz;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |name, value, reason| Err(ModelError::InvalidParam { name, value, reason });
        if !(self.g.is_finite() && self.g > 0.0) {
            return bad("g", self.g, "must be positive");
        }
        if !(self.a_mhz.is_finite() && self.a_mhz > 0.0) {
            return bad("a_MHz", self.a_mhz, "must be positive");
        }
        if !(self.b0_mt.is_finite() && self.b0_mt > 0.0) {
            return bad("B0_mT", self.b0_mt, "must be positive");
        }
        if !(self.nu_n_mhz.is_finite() && self.nu_n_mhz >= 0.0) {
            return bad("nu_n_MHz", self.nu_n_mhz, "must be non-negative");
        }
        if let Some(t) = self.temperature_k {
            if !(t.is_finite() && t > 0.0) {
                return bad("temperature_K", t, "must be positive");
            }
        }
        Ok(())
    }

    /// ν_e = g μB B0 / h in MHz.
    pub fn electron_larmor_mhz(&self) -> f64 {
        self.g * BOHR_MHZ_PER_MT * self.b0_mt
    }

    /// Read the preset keys from `kv`, starting from the reference values.
    /// Keys outside the preset set are ignored here.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ModelError> {
        let r = Self::reference();
        let p = Self {
            g: kv.f64_or("g", r.g)?,
            a_mhz: kv.f64_or("a_MHz", r.a_mhz)?,
            b0_mt: kv.f64_or("B0_mT", r.b0_mt)?,
            nu_n_mhz: kv.f64_or("nu_n_MHz", r.nu_n_mhz)?,
            temperature_k: match kv.get("temperature_K") {
                Some("none") => None,
                _ => Some(kv.f64_or("temperature_K", r.temperature_k.unwrap_or(190.0))?),
            },
        };
        p.validate()?;
        Ok(p)
    }

    /// Parse a preset file; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let kv = KeyValues::parse(text)?;
        kv.check_keys(|k| PARAM_KEYS.contains(&k))?;
        Self::from_key_values(&kv)
    }

    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::new();
        kv.set("g", self.g.to_string());
        kv.set("a_MHz", self.a_mhz.to_string());
        kv.set("B0_mT", self.b0_mt.to_string());
        kv.set("nu_n_MHz", self.nu_n_mhz.to_string());
        kv.set(
            "temperature_K",
            self.temperature_k.map_or("none".to_string(), |t| t.to_string()),
        );
        kv.to_text()
    }
}

/// Hyperfine constant in MHz from a field-unit value (mT) and g.
pub fn hyperfine_mt_to_mhz(a_mt: f64, g: f64) -> f64 {
    g * BOHR_MHZ_PER_MT * a_mt
}

pub fn spin_system() -> [SpinSite; 2] {
    [
        SpinSite::new("S", ELECTRON_SPIN),
        SpinSite::new("I", NUCLEAR_SPIN),
    ]
}

/// Index of |M_S, M_I⟩ in the product basis.
pub fn product_index(ms: f64, mi: f64) -> usize {
    let e = (1.5 - ms).round() as usize;
    let n = (1.0 - mi).round() as usize;
    e * NUCLEAR_SPIN.dim() + n
}

/// (M_S, M_I) of a product-basis index.
pub fn product_labels(index: usize) -> (f64, f64) {
    let e = index / NUCLEAR_SPIN.dim();
    let n = index % NUCLEAR_SPIN.dim();
    (1.5 - e as f64, 1.0 - n as f64)
}

/// Product-space spin operators used to build H0 and the drives.
#[derive(Clone, Debug)]
pub struct SpinOperatorSet {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    pub ix: Operator,
    pub iy: Operator,
    pub iz: Operator,
}

impl SpinOperatorSet {
    pub fn new() -> Self {
        let sys = spin_system();
        let s = spin_operators(ELECTRON_SPIN);
        let i = spin_operators(NUCLEAR_SPIN);
        let lift = |op: &Operator, site| embed(op, site, &sys).expect("static system dimensions");
        Self {
            sx: lift(&s.sx, 0),
            sy: lift(&s.sy, 0),
            sz: lift(&s.sz, 0),
            ix: lift(&i.sx, 1),
            iy: lift(&i.sy, 1),
            iz: lift(&i.sz, 1),
        }
    }
}

impl Default for SpinOperatorSet {
    fn default() -> Self {
        Self::new()
    }
}

/// H0 from frequencies directly; no sign or range checks.
pub fn hamiltonian_from_frequencies(nu_e: f64, a: f64, nu_n: f64) -> Operator {
    let ops = SpinOperatorSet::new();
    let s_dot_i = &(&ops.sx.matmul(&ops.ix) + &ops.sy.matmul(&ops.iy)) + &ops.sz.matmul(&ops.iz);
    let h = &ops.sz.scale_re(nu_e) + &s_dot_i.scale_re(a);
    &h - &ops.iz.scale_re(nu_n)
}

pub fn static_hamiltonian(p: &PhysicalParams) -> Result<Operator, ModelError> {
    p.validate()?;
    Ok(hamiltonian_from_frequencies(
        p.electron_larmor_mhz(),
        p.a_mhz,
        p.nu_n_mhz,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Lower eigenlevel (ascending energy index).
    pub lower: usize,
    pub upper: usize,
    /// λ_upper - λ_lower, MHz.
    pub frequency: f64,
    /// |⟨lower| S_x ⊗ 1 |upper⟩|
    pub electron_element: f64,
    /// |⟨lower| 1 ⊗ I_x |upper⟩|
    pub nuclear_element: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitionTable {
    pub rows: Vec<Transition>,
}

impl TransitionTable {
    pub fn electron(&self, threshold: f64) -> impl Iterator<Item = &Transition> {
        self.rows.iter().filter(move |t| t.electron_element > threshold)
    }

    pub fn nuclear(&self, threshold: f64) -> impl Iterator<Item = &Transition> {
        self.rows.iter().filter(move |t| t.nuclear_element > threshold)
    }
}

/// Enumerate level pairs with an electron or nuclear matrix element above
/// `threshold`, sorted by frequency.
pub fn transition_table(
    h0: &Operator,
    electron_x: &Operator,
    nuclear_x: &Operator,
    threshold: f64,
) -> Result<TransitionTable, ModelError> {
    let eig = eigenbasis(h0)?;
    let ex = to_eigenbasis(electron_x, &eig);
    let nx = to_eigenbasis(nuclear_x, &eig);
    let n = h0.dim();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let frequency = eig.values[j] - eig.values[i];
            let electron_element = ex[(i, j)].norm();
            let nuclear_element = nx[(i, j)].norm();
            if frequency > 0.0 && (electron_element > threshold || nuclear_element > threshold) {
                rows.push(Transition {
                    lower: i,
                    upper: j,
                    frequency,
                    electron_element,
                    nuclear_element,
                });
            }
        }
    }
    rows.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(TransitionTable { rows })
}

/// V† O V
pub fn to_eigenbasis(op: &Operator, eig: &Eigen) -> Operator {
    eig.vectors.adjoint().matmul(op).matmul(&eig.vectors)
}

/// The four computational states, in the order |00⟩, |01⟩, |10⟩, |11⟩.
/// The first bit is the electron (M_S = +3/2 → 0, -3/2 → 1), the second the
/// nucleus (M_I = +1 → 0, M_I = 0 → 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QubitState {
    Q00 = 0,
    Q01 = 1,
    Q10 = 2,
    Q11 = 3,
}

impl QubitState {
    pub const ALL: [QubitState; 4] = [Self::Q00, Self::Q01, Self::Q10, Self::Q11];

    pub fn label(self) -> &'static str {
        match self {
            Self::Q00 => "|00>",
            Self::Q01 => "|01>",
            Self::Q10 => "|10>",
            Self::Q11 => "|11>",
        }
    }

    /// (M_S, M_I) carried by this logical state.
    pub fn projections(self) -> (f64, f64) {
        match self {
            Self::Q00 => (1.5, 1.0),
            Self::Q01 => (1.5, 0.0),
            Self::Q10 => (-1.5, 1.0),
            Self::Q11 => (-1.5, 0.0),
        }
    }

    pub fn nuclear_bit(self) -> u8 {
        (self as u8) & 1
    }
}

impl fmt::Display for QubitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QubitEncoding {
    /// Eigenlevel index for |00⟩, |01⟩, |10⟩, |11⟩.
    pub levels: [usize; 4],
    /// Weight of the dominant product state in each of the four eigenvectors.
    pub weights: [f64; 4],
    /// Per-quantum frequency of the |00⟩↔|10⟩ electron rotation (M_I = +1), MHz.
    pub kick_frequency_0: f64,
    /// Per-quantum frequency of the |01⟩↔|11⟩ electron rotation (M_I = 0), MHz.
    pub kick_frequency_1: f64,
}

impl QubitEncoding {
    pub fn level(&self, q: QubitState) -> usize {
        self.levels[q as usize]
    }

    /// Electron carrier half-way between the two kick transitions.
    pub fn kick_midpoint(&self) -> f64 {
        0.5 * (self.kick_frequency_0 + self.kick_frequency_1)
    }

    /// Separation of the two kick transitions, ≈ a.
    pub fn kick_splitting(&self) -> f64 {
        (self.kick_frequency_0 - self.kick_frequency_1).abs()
    }
}

/// Map the four logical states onto eigenlevels of `h0` by dominant character.
pub fn qubit_encoding(h0: &Operator) -> Result<QubitEncoding, ModelError> {
    let eig = eigenbasis(h0)?;
    encoding_from_eigen(&eig)
}

fn encoding_from_eigen(eig: &Eigen) -> Result<QubitEncoding, ModelError> {
    let mut levels = [0usize; 4];
    let mut weights = [0f64; 4];
    for q in QubitState::ALL {
        let (ms, mi) = q.projections();
        let basis = product_index(ms, mi);
        let (level, weight) = (0..eig.values.len())
            .map(|k| (k, eig.vectors[(basis, k)].norm_sqr()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty spectrum");
        if weight <= 0.5 {
            return Err(ModelError::AmbiguousLevel {
                label: q.label(),
                weight,
            });
        }
        levels[q as usize] = level;
        weights[q as usize] = weight;
    }
    for a in 0..4 {
        for b in (a + 1)..4 {
            if levels[a] == levels[b] {
                return Err(ModelError::DuplicateLevel {
                    first: QubitState::ALL[a].label(),
                    second: QubitState::ALL[b].label(),
                    level: levels[a],
                });
            }
        }
    }
    let quanta = ELECTRON_SPIN.twice() as f64;
    let e = |q: QubitState| eig.values[levels[q as usize]];
    let kick_frequency_0 = (e(QubitState::Q00) - e(QubitState::Q10)).abs() / quanta;
    let kick_frequency_1 = (e(QubitState::Q01) - e(QubitState::Q11)).abs() / quanta;
    let splitting = (kick_frequency_0 - kick_frequency_1).abs();
    if splitting < 1e-6 {
        return Err(ModelError::DegenerateKickTransitions(splitting));
    }
    Ok(QubitEncoding {
        levels,
        weights,
        kick_frequency_0,
        kick_frequency_1,
    })
}

/// Everything the engine needs about the static problem, computed once.
#[derive(Clone, Debug)]
pub struct SpinModel {
    pub params: PhysicalParams,
    pub h0: Operator,
    pub eigen: Eigen,
    /// S_x ⊗ 1 in the H0 eigenbasis.
    pub electron_x: Operator,
    /// 1 ⊗ I_x in the H0 eigenbasis.
    pub nuclear_x: Operator,
    pub encoding: QubitEncoding,
    /// Dominant (M_S, M_I) of each eigenlevel.
    pub characters: Vec<(f64, f64)>,
}

impl SpinModel {
    pub fn new(params: PhysicalParams) -> Result<Self, ModelError> {
        let h0 = static_hamiltonian(&params)?;
        let eigen = eigenbasis(&h0)?;
        let ops = SpinOperatorSet::new();
        let electron_x = to_eigenbasis(&ops.sx, &eigen);
        let nuclear_x = to_eigenbasis(&ops.ix, &eigen);
        let encoding = encoding_from_eigen(&eigen)?;
        let characters = (0..DIM)
            .map(|k| {
                let basis = (0..DIM)
                    .max_by(|&a, &b| {
                        eigen.vectors[(a, k)]
                            .norm_sqr()
                            .total_cmp(&eigen.vectors[(b, k)].norm_sqr())
                    })
                    .expect("non-empty");
                product_labels(basis)
            })
            .collect();
        Ok(Self {
            params,
            h0,
            eigen,
            electron_x,
            nuclear_x,
            encoding,
            characters,
        })
    }

    pub fn reference() -> Self {
        Self::new(PhysicalParams::reference()).expect("reference parameters are valid")
    }

    pub fn energy(&self, level: usize) -> f64 {
        self.eigen.values[level]
    }

    pub fn level(&self, q: QubitState) -> usize {
        self.encoding.level(q)
    }

    /// |E(a) - E(b)| for two logical states, MHz.
    pub fn qubit_gap(&self, a: QubitState, b: QubitState) -> f64 {
        (self.energy(self.level(a)) - self.energy(self.level(b))).abs()
    }

    /// Nuclear qubit transition |00⟩↔|01⟩ (M_S = +3/2 manifold).
    pub fn nuclear_frequency_0(&self) -> f64 {
        self.qubit_gap(QubitState::Q00, QubitState::Q01)
    }

    /// Nuclear qubit transition |10⟩↔|11⟩ (M_S = -3/2 manifold).
    pub fn nuclear_frequency_1(&self) -> f64 {
        self.qubit_gap(QubitState::Q10, QubitState::Q11)
    }

    /// ⟨j|O|k⟩ in the eigenbasis for the drive operator of a channel kind.
    pub fn drive_element(&self, kind: DriveKind, j: usize, k: usize) -> C64 {
        match kind {
            DriveKind::Electron => self.electron_x[(j, k)],
            DriveKind::Nuclear => self.nuclear_x[(j, k)],
        }
    }

    pub fn transitions(&self) -> TransitionTable {
        let ops = SpinOperatorSet::new();
        transition_table(&self.h0, &ops.sx, &ops.ix, TRANSITION_THRESHOLD)
            .expect("H0 is Hermitian by construction")
    }

    /// Levels whose dominant character has the given nuclear projection.
    pub fn levels_with_mi(&self, mi: f64) -> Vec<usize> {
        (0..DIM)
            .filter(|&k| (self.characters[k].1 - mi).abs() < 1e-9)
            .collect()
    }
}

/// Which spin a drive channel couples to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DriveKind {
    /// Microwave: S_x ⊗ 1.
    Electron,
    /// Radio frequency: 1 ⊗ I_x.
    Nuclear,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn electron_larmor_at_x_band() {
        let p = PhysicalParams::reference();
        // ν_e = g · 13.996 GHz/T · B0
        let oracle = 2.003 * 13.996_244_917_1e3 * 0.3445;
        assert!((p.electron_larmor_mhz() - oracle).abs() < 1e-9);
        assert!((p.electron_larmor_mhz() / 1000.0 - 9.66).abs() < 0.01);
    }

    #[test]
    fn hyperfine_field_units_consistent_with_frequency() {
        let a = hyperfine_mt_to_mhz(0.56, 2.003);
        assert!((a - 15.7).abs() < 0.05, "{a}");
        assert!((a - 15.8).abs() / 15.8 < 0.01);
    }

    #[test]
    fn zero_hyperfine_gives_zeeman_ladder() {
        let nu_e = PhysicalParams::reference().electron_larmor_mhz();
        let h = hamiltonian_from_frequencies(nu_e, 0.0, 1.092);
        let e = eigenbasis(&h).unwrap();
        let mut expected = Vec::new();
        for ms in [1.5, 0.5, -0.5, -1.5] {
            for mi in [1.0, 0.0, -1.0] {
                expected.push(nu_e * ms - 1.092 * mi);
            }
        }
        for (x, y) in e.values.iter().zip(sorted(expected)) {
            assert!((x - y).abs() < 1e-8);
        }
        // every EPR line sits at ν_e
        let ops = SpinOperatorSet::new();
        let table = transition_table(&h, &ops.sx, &ops.ix, TRANSITION_THRESHOLD).unwrap();
        for t in table.electron(0.1) {
            assert!((t.frequency - nu_e).abs() < 1e-8);
        }
    }

    #[test]
    fn traceless_and_sign_symmetry() {
        let p = PhysicalParams::reference();
        let h = static_hamiltonian(&p).unwrap();
        assert!(h.trace().norm() < 1e-9);
        assert!(h.hermiticity_error() == 0.0);

        let nu_e = p.electron_larmor_mhz();
        let fwd = eigenbasis(&hamiltonian_from_frequencies(nu_e, p.a_mhz, p.nu_n_mhz)).unwrap();
        let rev = eigenbasis(&hamiltonian_from_frequencies(-nu_e, p.a_mhz, -p.nu_n_mhz)).unwrap();
        // the isotropic S·I term is invariant under a π rotation of both
        // spins about x, which maps the Zeeman terms to their negatives
        for (x, y) in fwd.values.iter().zip(rev.values.iter()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn reference_spectrum_is_nondegenerate() {
        let m = SpinModel::reference();
        for w in m.eigen.values.windows(2) {
            assert!(w[1] - w[0] > 1e-3);
        }
    }

    #[test]
    fn epr_lines_split_by_hyperfine() {
        let m = SpinModel::reference();
        let mut groups: Vec<f64> = Vec::new();
        for t in m.transitions().electron(0.1) {
            if !groups.iter().any(|g| (g - t.frequency).abs() < 1.0) {
                groups.push(t.frequency);
            }
        }
        assert_eq!(groups.len(), 3, "{groups:?}");
        groups.sort_by(f64::total_cmp);
        for w in groups.windows(2) {
            assert!((w[1] - w[0] - m.params.a_mhz).abs() < 0.2, "{groups:?}");
        }
    }

    #[test]
    fn endor_lines_match_driven_frequencies() {
        let m = SpinModel::reference();
        assert!((m.nuclear_frequency_0() - 22.598).abs() < 0.05, "{}", m.nuclear_frequency_0());
        assert!((m.nuclear_frequency_1() - 24.782).abs() < 0.05, "{}", m.nuclear_frequency_1());
    }

    #[test]
    fn second_order_endor_splitting() {
        let p = PhysicalParams::reference();
        let m = SpinModel::new(p.clone()).unwrap();
        let a = p.a_mhz;
        let nu_e = p.electron_larmor_mhz();
        // first order: both M_S = +3/2 nuclear transitions at 3a/2 - ν_n
        let first = 1.5 * a - p.nu_n_mhz;
        let shift = first - m.nuclear_frequency_0();
        // perturbative scale: 3 a² / (2 ν_e)
        let scale = 1.5 * a * a / nu_e;
        assert!(shift > 0.01 && shift < 0.1, "shift {shift}");
        assert!((shift - scale).abs() / scale < 0.05, "{shift} vs {scale}");

        // ENDOR line pair for M_S = +3/2: |+1⟩↔|0⟩ and |0⟩↔|-1⟩
        let lvl = |ms, mi| (0..DIM).find(|&k| m.characters[k] == (ms, mi)).unwrap();
        let other = (m.energy(lvl(1.5, 0.0)) - m.energy(lvl(1.5, -1.0))).abs();
        let split = (other - m.nuclear_frequency_0()).abs();
        assert!(split > 0.01 && split < 0.1, "{split}");
    }

    #[test]
    fn endor_converges_to_first_order_at_high_field() {
        let p = PhysicalParams::reference();
        let mut last = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0] {
            let q = PhysicalParams {
                b0_mt: p.b0_mt * scale,
                nu_n_mhz: p.nu_n_mhz,
                ..p.clone()
            };
            let m = SpinModel::new(q).unwrap();
            let err = (m.nuclear_frequency_0() - (1.5 * p.a_mhz - p.nu_n_mhz)).abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn encoding_distinct_and_kick_splitting_near_a() {
        let m = SpinModel::reference();
        let mut lv = m.encoding.levels.to_vec();
        lv.sort();
        lv.dedup();
        assert_eq!(lv.len(), 4);
        assert!(m.encoding.weights.iter().all(|&w| w > 0.99));
        let diff = m.encoding.kick_splitting();
        assert!((diff - m.params.a_mhz).abs() / m.params.a_mhz < 0.01, "{diff}");
        // M_I = +1 line lies above the M_I = 0 line by ≈ a
        assert!(m.encoding.kick_frequency_0 > m.encoding.kick_frequency_1);
    }

    #[test]
    fn zero_hyperfine_encoding_fails() {
        let nu_e = PhysicalParams::reference().electron_larmor_mhz();
        let h = hamiltonian_from_frequencies(nu_e, 0.0, 1.092);
        assert!(matches!(
            qubit_encoding(&h),
            Err(ModelError::DegenerateKickTransitions(_))
        ));
    }

    #[test]
    fn preset_text_round_trip_and_validation() {
        let p = PhysicalParams::reference();
        assert_eq!(PhysicalParams::parse(&p.to_text()).unwrap(), p);
        assert!(PhysicalParams::parse("a_MHz=-1\n").is_err());
        assert!(PhysicalParams::parse("B0_mT=0\n").is_err());
        assert!(matches!(
            PhysicalParams::parse("bogus=1\n"),
            Err(ModelError::Config(ConfigError::UnknownKey { line: 1, .. }))
        ));
        let q = PhysicalParams::parse("a_MHz=15.8\ntemperature_K=none\n").unwrap();
        assert_eq!(q.a_mhz, 15.8);
        assert_eq!(q.temperature_k, None);
    }

    #[test]
    fn product_index_layout() {
        assert_eq!(product_index(1.5, 1.0), 0);
        assert_eq!(product_index(1.5, 0.0), 1);
        assert_eq!(product_index(-1.5, -1.0), 11);
        for k in 0..DIM {
            let (ms, mi) = product_labels(k);
            assert_eq!(product_index(ms, mi), k);
        }
    }
}
