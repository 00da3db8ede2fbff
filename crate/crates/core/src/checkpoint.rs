//! Versioned JSON checkpoints of the full training state.
//!
//! Floats are written with shortest round-trip formatting, so a save/load
//! cycle reproduces every weight, moment and the RNG position bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nd::{AdamState, Tensor};
use crate::nets::{NetworkParams, NetworkSpec};
use crate::rng::RngState;
use crate::trainer::TrainState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    version: u32,
    spec_g: NetworkSpec,
    spec_d: NetworkSpec,
    weights_g: Vec<Tensor>,
    weights_d: Vec<Tensor>,
    adam_g: AdamState,
    adam_d: AdamState,
    step: u64,
    rng: RngState,
}

pub fn save_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        spec_g: state.g.spec.clone(),
        spec_d: state.d.spec.clone(),
        weights_g: state.g.tensors.clone(),
        weights_d: state.d.tensors.clone(),
        adam_g: state.adam_g.clone(),
        adam_d: state.adam_d.clone(),
        step: state.step,
        rng: RngState::capture(&state.rng),
    };
    Ok(serde_json::to_vec(&file)?)
}

fn check_moments(name: &str, adam: &AdamState, params: &NetworkParams) -> Result<()> {
    let ok = adam.m.len() == params.tensors.len()
        && adam.v.len() == params.tensors.len()
        && params
            .tensors
            .iter()
            .zip(adam.m.iter().zip(&adam.v))
            .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
    if !ok {
        return Err(Error::Checkpoint(format!("{name} optimiser moments do not match the weights")));
    }
    Ok(())
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let probe: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
    match probe.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == CHECKPOINT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {v} (expected {CHECKPOINT_VERSION})"
            )))
        }
        None => return Err(Error::Checkpoint("missing checkpoint version".into())),
    }
    let file: CheckpointFile =
        serde_json::from_value(probe).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    let g = NetworkParams::from_tensors(file.spec_g, file.weights_g)?;
    let d = NetworkParams::from_tensors(file.spec_d, file.weights_d)?;
    check_moments("generator", &file.adam_g, &g)?;
    check_moments("discriminator", &file.adam_d, &d)?;
    Ok(TrainState {
        g,
        d,
        adam_g: file.adam_g,
        adam_d: file.adam_d,
        step: file.step,
        rng: file.rng.restore()?,
    })
}

/// Loads a checkpoint and requires its network specs to equal the expected ones.
pub fn load_checkpoint_for(bytes: &[u8], spec_g: &NetworkSpec, spec_d: &NetworkSpec) -> Result<TrainState> {
    let state = load_checkpoint(bytes)?;
    for (name, found, want) in [("generator", &state.g.spec, spec_g), ("discriminator", &state.d.spec, spec_d)] {
        if found != want {
            return Err(Error::Shape {
                op: if name == "generator" { "load generator" } else { "load discriminator" },
                lhs: found.param_shapes().concat(),
                rhs: want.param_shapes().concat(),
            });
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{train_step, Task, TrainConfig};

    fn trained() -> (TrainConfig, TrainState) {
        let mut cfg = TrainConfig::for_task(Task::Ring);
        cfg.batch_size = 16;
        let mut state = TrainState::init(&cfg).unwrap();
        for _ in 0..3 {
            train_step(&mut state, &cfg).unwrap();
        }
        (cfg, state)
    }

    #[test]
    fn round_trip_is_exact_and_resumes_identically() {
        let (cfg, mut state) = trained();
        let bytes = save_checkpoint(&state).unwrap();
        let mut restored = load_checkpoint(&bytes).unwrap();
        assert_eq!(restored, state);
        let a = train_step(&mut state, &cfg).unwrap();
        let b = train_step(&mut restored, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(restored, state);
    }

    #[test]
    fn truncated_and_wrong_version_fail() {
        let (_, state) = trained();
        let bytes = save_checkpoint(&state).unwrap();
        assert!(matches!(load_checkpoint(&bytes[..bytes.len() / 2]), Err(Error::Checkpoint(_))));
        let text = String::from_utf8(bytes).unwrap().replacen("\"version\":1", "\"version\":2", 1);
        let err = load_checkpoint(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("version 2"));
    }

    #[test]
    fn different_spec_is_shape_error() {
        let (_, state) = trained();
        let bytes = save_checkpoint(&state).unwrap();
        let other = TrainConfig::for_task(Task::ConditionalRing);
        let err = load_checkpoint_for(&bytes, &other.generator_spec(), &other.discriminator_spec()).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(load_checkpoint_for(&bytes, &state.g.spec, &state.d.spec).is_ok());
    }
}
