//! JSON run configuration: every key is checked against the known set before
//! values are read, so misspelled keys are reported instead of ignored.

use std::path::{Path, PathBuf};

use dsgan_core::objectives::{DiversitySpace, GLossForm, Norm};
use dsgan_core::trainer::{Task, TrainConfig};
use dsgan_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

const TOP_KEYS: &[&str] = &[
    "task",
    "z_dim",
    "batch_size",
    "steps",
    "seed",
    "lambda",
    "tau",
    "norm",
    "space",
    "beta",
    "g_loss_form",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "eval_every",
    "d_steps_per_g",
    "min_z_gap",
    "warm_start_discriminator",
    "d_freeze_steps",
    "ring",
    "conditional",
    "trajectory",
];
const RING_KEYS: &[&str] = &["n_modes", "radius", "std"];
const CONDITIONAL_KEYS: &[&str] = &["n_labels", "modes_per_label"];
const TRAJECTORY_KEYS: &[&str] = &["context_len", "horizon", "radius", "angular_step", "noise_std"];

/// Dotted paths of every key not in the schema, in document order.
pub fn unknown_keys(doc: &Map<String, Value>) -> Vec<String> {
    let mut unknown = Vec::new();
    for (key, value) in doc {
        let nested = match key.as_str() {
            "ring" => Some(RING_KEYS),
            "conditional" => Some(CONDITIONAL_KEYS),
            "trajectory" => Some(TRAJECTORY_KEYS),
            k if TOP_KEYS.contains(&k) => None,
            _ => {
                unknown.push(key.clone());
                continue;
            }
        };
        if let (Some(allowed), Value::Object(inner)) = (nested, value) {
            for k in inner.keys() {
                if !allowed.contains(&k.as_str()) {
                    unknown.push(format!("{key}.{k}"));
                }
            }
        }
    }
    unknown
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<Option<T>> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("{prefix}{key}: {e}"))),
    }
}

fn section<'a>(doc: &'a Map<String, Value>, key: &str) -> Result<Option<&'a Map<String, Value>>> {
    match doc.get(key) {
        None => Ok(None),
        Some(Value::Object(m)) => Ok(Some(m)),
        Some(_) => Err(Error::Config(format!("{key}: expected an object"))),
    }
}

fn parse_tau(v: &Value) -> Result<Option<f64>> {
    match v {
        Value::Null => Ok(None),
        Value::String(s) if matches!(s.as_str(), "inf" | "unbounded" | "none") => Ok(None),
        Value::Number(n) => n
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::Config(format!("tau: {n} is not a float"))),
        other => Err(Error::Config(format!(
            "tau: expected a number, null or \"inf\", got {other}"
        ))),
    }
}

/// Builds a validated [`TrainConfig`]. Relative warm-start paths resolve
/// against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<TrainConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
    let Value::Object(doc) = value else {
        return Err(Error::Config("config must be a JSON object".into()));
    };
    let unknown = unknown_keys(&doc);
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
    }

    let task: Task = field(&doc, "", "task")?.ok_or_else(|| Error::Config("task: required".into()))?;
    let mut cfg = TrainConfig::for_task(task);
    macro_rules! set {
        ($obj:expr, $prefix:expr, $key:literal => $target:expr) => {
            if let Some(v) = field($obj, $prefix, $key)? {
                $target = v;
            }
        };
    }
    set!(&doc, "", "z_dim" => cfg.z_dim);
    set!(&doc, "", "batch_size" => cfg.batch_size);
    set!(&doc, "", "steps" => cfg.steps);
    set!(&doc, "", "seed" => cfg.seed);
    set!(&doc, "", "eval_every" => cfg.eval_every);
    set!(&doc, "", "d_steps_per_g" => cfg.d_steps_per_g);
    set!(&doc, "", "d_freeze_steps" => cfg.d_freeze_steps);
    set!(&doc, "", "lr" => cfg.adam.lr);
    set!(&doc, "", "beta1" => cfg.adam.beta1);
    set!(&doc, "", "beta2" => cfg.adam.beta2);
    set!(&doc, "", "eps" => cfg.adam.eps);
    set!(&doc, "", "beta" => cfg.objective.beta);
    let form: Option<GLossForm> = field(&doc, "", "g_loss_form")?;
    if let Some(f) = form {
        cfg.objective.g_loss_form = f;
    }
    let div = &mut cfg.objective.diversity;
    set!(&doc, "", "lambda" => div.lambda);
    set!(&doc, "", "min_z_gap" => div.min_z_gap);
    let norm: Option<Norm> = field(&doc, "", "norm")?;
    if let Some(n) = norm {
        div.norm = n;
    }
    let space: Option<DiversitySpace> = field(&doc, "", "space")?;
    if let Some(s) = space {
        div.space = s;
    }
    if let Some(t) = doc.get("tau") {
        div.tau = parse_tau(t)?;
    }
    if let Some(p) = field::<PathBuf>(&doc, "", "warm_start_discriminator")? {
        cfg.warm_start_discriminator = Some(if p.is_absolute() { p } else { base_dir.join(p) });
    }
    if let Some(ring) = section(&doc, "ring")? {
        set!(ring, "ring.", "n_modes" => cfg.ring.n_modes);
        set!(ring, "ring.", "radius" => cfg.ring.radius);
        set!(ring, "ring.", "std" => cfg.ring.std);
    }
    if let Some(c) = section(&doc, "conditional")? {
        set!(c, "conditional.", "n_labels" => cfg.conditional.n_labels);
        set!(c, "conditional.", "modes_per_label" => cfg.conditional.modes_per_label);
    }
    if let Some(t) = section(&doc, "trajectory")? {
        set!(t, "trajectory.", "context_len" => cfg.trajectory.context_len);
        set!(t, "trajectory.", "horizon" => cfg.trajectory.horizon);
        set!(t, "trajectory.", "radius" => cfg.trajectory.radius);
        set!(t, "trajectory.", "angular_step" => cfg.trajectory.angular_step);
        set!(t, "trajectory.", "noise_std" => cfg.trajectory.noise_std);
    }
    cfg.conditional.base = cfg.ring;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
