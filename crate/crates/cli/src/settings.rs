use std::path::Path;

use endosim_core::config::KeyValues;
use endosim_core::engine::{prepare_initial, InitialMode, QuantumState, SimConfig};
use endosim_core::model::{PhysicalParams, QubitState, SpinModel, PARAM_KEYS};
use endosim_core::spin_core::C64;

use crate::failure::Failure;
use crate::output::read_file;

pub fn is_model_or_sim_key(key: &str) -> bool {
    PARAM_KEYS.contains(&key) || SimConfig::is_known_key(key)
}

/// Keys accepted by `run` presets.
pub fn is_run_key(key: &str) -> bool {
    is_model_or_sim_key(key) || key == "initial"
}

pub fn load_key_values<F>(path: &Path, known: F) -> Result<KeyValues, Failure>
where
    F: Fn(&str) -> bool,
{
    let text = read_file(path)?;
    let kv = KeyValues::parse(&text).map_err(|e| Failure::from(e).in_file(path))?;
    kv.check_keys(known).map_err(|e| Failure::from(e).in_file(path))?;
    Ok(kv)
}

/// Later sources win. `--set` overrides are checked against `known`.
pub fn merge<F>(sources: &[KeyValues], overrides: &[String], seed: Option<u64>, known: F) -> Result<KeyValues, Failure>
where
    F: Fn(&str) -> bool,
{
    let mut kv = KeyValues::new();
    for src in sources {
        kv.extend_from(src);
    }
    for o in overrides {
        let mut single = KeyValues::new();
        single
            .apply_override(o)
            .map_err(|_| Failure::input(format!("--set expects key=value, got `{o}`")))?;
        let key = single.entries()[0].key.clone();
        if !known(&key) {
            return Err(Failure::input(format!("--set: unknown key `{key}`")));
        }
        kv.apply_override(o)?;
    }
    if let Some(s) = seed {
        kv.set("seed", s.to_string());
    }
    Ok(kv)
}

pub fn model_and_config(kv: &KeyValues) -> Result<(SpinModel, SimConfig), Failure> {
    let params = PhysicalParams::from_key_values(kv)?;
    let model = SpinModel::new(params)?;
    let mut cfg = SimConfig::default();
    cfg.apply_key_values(kv)?;
    Ok((model, cfg))
}

/// `initial` accepts `pure` (= `00`), `01`, `10`, `11`, `plus` for
/// (|00⟩+|01⟩)/√2, and `thermal`.
pub fn initial_state(model: &SpinModel, kv: &KeyValues, cfg: &SimConfig) -> Result<QuantumState, Failure> {
    let q = |s| Ok(QuantumState::qubit(model, s));
    match kv.get("initial").unwrap_or("pure") {
        "pure" | "00" => q(QubitState::Q00),
        "01" => q(QubitState::Q01),
        "10" => q(QubitState::Q10),
        "11" => q(QubitState::Q11),
        "plus" => {
            let one = C64::new(1.0, 0.0);
            Ok(QuantumState::superposition(
                model,
                &[(QubitState::Q00, one), (QubitState::Q01, one)],
            ))
        }
        "thermal" => Ok(prepare_initial(model, InitialMode::Thermal, cfg)?),
        other => Err(Failure::input(format!(
            "initial must be one of pure, 00, 01, 10, 11, plus, thermal; got `{other}`"
        ))),
    }
}
