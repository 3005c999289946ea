//! Engine checks behind the hygiene criterion: cutoff and step convergence,
//! kick fidelity and norm conservation.

use std::f64::consts::PI;

use endosim_core::bangbang::{kicked_rabi, rf_amplitude, ExperimentSpec, KickKind};
use endosim_core::engine::{evolve, QuantumState, SimConfig, NORM_TOL};
use endosim_core::model::{QubitState, SpinModel};
use endosim_core::phasegate::{calibrated_pi_kick, simulate_gate, DEFAULT_KICK_DURATION};
use endosim_core::pulse::{Channel, Kick, PulseProgram, Segment};
use endosim_core::spin_core::C64;
use proptest::prelude::*;

fn plus_state(m: &SpinModel) -> QuantumState {
    let one = C64::new(1.0, 0.0);
    QuantumState::superposition(m, &[(QubitState::Q00, one), (QubitState::Q01, one)])
}

fn short_kick_program(m: &SpinModel) -> PulseProgram {
    let gate = calibrated_pi_kick(m, DEFAULT_KICK_DURATION, &SimConfig::default()).unwrap();
    let mut p = PulseProgram::new("kick-in-rf", 2.0).with_sampling(0.05);
    p.push_segment(
        Segment::new(Channel::rf(), 0.0, 2.0, m.nuclear_frequency_0(), rf_amplitude(m, 0.05), 0.0).unwrap(),
    )
    .unwrap();
    p.push_segment(gate.segment(0.5)).unwrap();
    p.push_segment(gate.segment(1.3)).unwrap();
    p
}

fn max_population_diff(a: &endosim_core::engine::Trajectory, b: &endosim_core::engine::Trajectory) -> f64 {
    assert_eq!(a.times, b.times);
    a.populations
        .iter()
        .zip(&b.populations)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn widening_rwa_cutoffs_changes_little() {
    let m = SpinModel::reference();
    let p = short_kick_program(&m);
    let base = SimConfig::default();
    let wide = SimConfig {
        mw_cutoff: 2.0 * base.mw_cutoff,
        rf_cutoff: 2.0 * base.rf_cutoff,
        ..base.clone()
    };
    let a = evolve(&m, &plus_state(&m), &p, &base).unwrap();
    let b = evolve(&m, &plus_state(&m), &p, &wide).unwrap();
    assert!(max_population_diff(&a, &b) < 1e-2);
}

#[test]
fn halving_dt_is_converged() {
    let m = SpinModel::reference();
    let p = short_kick_program(&m);
    let c = SimConfig {
        dt_max: 0.002,
        ..SimConfig::default()
    };
    let h = SimConfig { dt_max: 0.001, ..c.clone() };
    let a = evolve(&m, &plus_state(&m), &p, &c).unwrap();
    let b = evolve(&m, &plus_state(&m), &p, &h).unwrap();
    assert!(max_population_diff(&a, &b) < 1e-4);
}

#[test]
fn calibrated_kick_leaks_little() {
    let m = SpinModel::reference();
    let cfg = SimConfig::default();
    let gate = calibrated_pi_kick(&m, DEFAULT_KICK_DURATION, &cfg).unwrap();
    let out = simulate_gate(&m, &gate, &cfg).unwrap();
    assert!(out.leakage < 1e-2, "leakage {}", out.leakage);
    assert!((out.relative_phase.rem_euclid(2.0 * PI) - PI).abs() < 1e-3);
    assert!((gate.duration - DEFAULT_KICK_DURATION).abs() < 0.03);
}

#[test]
fn ideal_and_calibrated_kicks_agree() {
    let ideal = kicked_rabi(&ExperimentSpec::default()).unwrap();
    let spec = ExperimentSpec {
        kick_kind: KickKind::Calibrated {
            target_duration: DEFAULT_KICK_DURATION,
        },
        ..ExperimentSpec::default()
    };
    let cal = kicked_rabi(&spec).unwrap();
    let half = 0.5 * cal.kick_gate.as_ref().unwrap().duration;
    let (a, b) = (ideal.trajectory.p01(), cal.trajectory.p01());
    assert_eq!(ideal.trajectory.times, cal.trajectory.times);
    let worst = ideal
        .trajectory
        .times
        .iter()
        .zip(a.iter().zip(&b))
        .filter(|(t, _)| cal.kick_times.iter().all(|k| (*t - k).abs() > half))
        .map(|(_, (x, y))| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(worst < 5e-2, "max |ΔP01| = {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_conserved(
        amp_rf in 0.0f64..0.5,
        amp_mw in 0.0f64..8.0,
        det in -10.0f64..10.0,
        t_mw in 0.0f64..0.8,
        kick_t in 0.0f64..1.0,
        kick_phase in -PI..PI,
    ) {
        let m = SpinModel::reference();
        let mut p = PulseProgram::new("random", 1.0).with_sampling(0.1);
        p.push_segment(Segment::new(Channel::rf(), 0.0, 1.0, m.nuclear_frequency_1(), amp_rf, 0.3).unwrap()).unwrap();
        p.push_segment(Segment::new(Channel::mw(), t_mw, 0.2, m.encoding.kick_midpoint() + det, amp_mw, 0.0).unwrap()).unwrap();
        p.push_kick(Kick::new(kick_t, kick_phase).unwrap()).unwrap();
        let traj = evolve(&m, &plus_state(&m), &p, &SimConfig::default()).unwrap();
        prop_assert!((traj.final_state.norm() - 1.0).abs() <= NORM_TOL);
        for row in &traj.populations {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= NORM_TOL);
        }
    }
}
