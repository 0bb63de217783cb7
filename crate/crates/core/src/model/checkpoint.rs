//! Versioned text checkpoints.
//!
//! ```text
//! TRISTREAM-CKPT v1
//! epoch <n>
//! config <single-line JSON>
//! tensor <name> <dim> <dim> ...
//! <values, shortest round-trip decimal>
//! ...
//! end
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ModelParams, ThreeStreamConfig, ThreeStreamModel};
use crate::error::{Error, Result};
use crate::params::ParamSet;

const MAGIC: &str = "TRISTREAM-CKPT v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ThreeStreamModel,
    /// Number of completed training epochs.
    pub epoch: usize,
}

pub fn encode_checkpoint(model: &ThreeStreamModel, epoch: usize) -> Result<String> {
    let config = serde_json::to_string(model.config()).map_err(|e| Error::format("checkpoint config", e.to_string()))?;
    let mut out = format!("{MAGIC}\nepoch {epoch}\nconfig {config}\n");
    for (name, t) in model.params().named_tensors() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        writeln!(out, "tensor {name} {}", dims.join(" ")).expect("write to string");
        let values: Vec<String> = t.data().iter().map(f64::to_string).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    out.push_str("end\n");
    Ok(out)
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("checkpoint", reason)
}

pub fn decode_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad(format!("missing '{MAGIC}' header")));
    }
    let epoch = lines
        .next()
        .and_then(|l| l.strip_prefix("epoch "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("missing epoch line"))?;
    let config: ThreeStreamConfig = lines
        .next()
        .and_then(|l| l.strip_prefix("config "))
        .ok_or_else(|| bad("missing config line"))
        .and_then(|json| serde_json::from_str(json).map_err(|e| bad(format!("config: {e}"))))?;
    config.validate()?;

    let mut tensors: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    let mut finished = false;
    while let Some(line) = lines.next() {
        if line == "end" {
            finished = true;
            break;
        }
        let mut head = line.split_whitespace();
        if head.next() != Some("tensor") {
            return Err(bad(format!("expected a tensor line, found {line:?}")));
        }
        let name = head.next().ok_or_else(|| bad("tensor line without a name"))?.to_string();
        let shape = head
            .map(|d| d.parse::<usize>().map_err(|_| bad(format!("{name}: bad dimension {d:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let values = lines
            .next()
            .ok_or_else(|| bad(format!("{name}: missing values")))?
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("{name}: bad value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        tensors.insert(name, (shape, values));
    }
    if !finished {
        return Err(bad("truncated: no end marker"));
    }

    let mut model = ThreeStreamModel::zeros(config)?;
    let mut missing = Vec::new();
    let mut mismatch = None;
    model.params_mut().visit_mut("", &mut |name, t| match tensors.remove(&name) {
        Some((shape, values)) if shape == t.shape() && values.len() == t.len() => t.data_mut().copy_from_slice(&values),
        Some((shape, _)) => mismatch = Some(format!("{name}: stored shape {shape:?}, model expects {:?}", t.shape())),
        None => missing.push(name),
    });
    if let Some(m) = mismatch {
        return Err(bad(m));
    }
    if !missing.is_empty() {
        return Err(bad(format!("missing tensors: {}", missing.join(", "))));
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(bad(format!("unknown tensor {extra}")));
    }
    if !model.params().all_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    let params: ModelParams = model.params().clone();
    let model = ThreeStreamModel::from_params(model.config().clone(), params)?;
    Ok(Checkpoint { model, epoch })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ThreeStreamModel, epoch: usize) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model, epoch)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&text)
}
