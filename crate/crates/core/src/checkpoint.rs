//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, u32 format version, u64 header length, a compact
//! UTF-8 JSON header, then raw little-endian f64 payloads in header order.
//! Every section (`params`, `fisher`, `theta_star`, `adam_m`, `adam_v`)
//! carries its own name → (shape, byte offset) table; offsets are relative
//! to the start of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ewc::FisherDiagonal;
use crate::model::{check_params, ModelConfig, ParamSet};
use crate::tensor::Tensor;
use crate::train::AdamState;

pub const MAGIC: &[u8; 8] = b"GEOFCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub step: u64,
    /// Hex digest identifying the training configuration that produced it.
    pub config_hash: String,
    pub params: ParamSet,
    pub fisher: Option<FisherDiagonal>,
    pub theta_star: Option<ParamSet>,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParamSet) -> Self {
        Checkpoint {
            config,
            seed: 0,
            step: 0,
            config_hash: String::new(),
            params,
            fisher: None,
            theta_star: None,
            optimizer: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Section {
    name: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    step: u64,
    config_hash: String,
    fisher_examples: Option<usize>,
    adam_step: Option<u64>,
    sections: Vec<Section>,
}

fn sections(ck: &Checkpoint) -> Vec<(&'static str, &ParamSet)> {
    let mut out = vec![("params", &ck.params)];
    if let Some(f) = &ck.fisher {
        out.push(("fisher", f.entries()));
    }
    if let Some(t) = &ck.theta_star {
        out.push(("theta_star", t));
    }
    if let Some(o) = &ck.optimizer {
        out.push(("adam_m", &o.m));
        out.push(("adam_v", &o.v));
    }
    out
}

pub fn to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let mut header_sections = Vec::new();
    let mut payload = Vec::new();
    for (name, set) in sections(ck) {
        check_params(&ck.config, set).map_err(|e| Error::Schema(format!("section {name}: {e}")))?;
        let mut tensors = Vec::with_capacity(set.len());
        for (tname, t) in set.iter() {
            tensors.push(TensorEntry {
                name: tname.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            offset += 8 * t.numel() as u64;
        }
        header_sections.push(Section {
            name: name.to_string(),
            tensors,
        });
    }
    let header = Header {
        config: ck.config.clone(),
        seed: ck.seed,
        step: ck.step,
        config_hash: ck.config_hash.clone(),
        fisher_examples: ck.fisher.as_ref().map(FisherDiagonal::num_examples),
        adam_step: ck.optimizer.as_ref().map(|o| o.step),
        sections: header_sections,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn truncated(what: &str) -> Error {
    Error::Schema(format!("checkpoint truncated while reading {what}"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 {
        return Err(truncated("preamble"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Schema("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Schema(format!(
            "checkpoint version {version}, expected {VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize.checked_add(header_len).ok_or_else(|| truncated("header"))?;
    let header_bytes = bytes.get(20..header_end).ok_or_else(|| truncated("header"))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    header.config.validate()?;
    let payload = &bytes[header_end..];

    let mut expected_len = 0u64;
    let mut read = |section: &Section| -> Result<ParamSet> {
        let mut set = ParamSet::new();
        for e in &section.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 8 * n;
            let raw = payload
                .get(start..end)
                .ok_or_else(|| truncated(&format!("{}/{}", section.name, e.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            set.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
            expected_len = expected_len.max(end as u64);
        }
        check_params(&header.config, &set).map_err(|err| Error::Schema(format!("section {}: {err}", section.name)))?;
        Ok(set)
    };

    let mut params = None;
    let mut fisher = None;
    let mut theta_star = None;
    let mut adam_m = None;
    let mut adam_v = None;
    for s in &header.sections {
        let set = read(s)?;
        let slot = match s.name.as_str() {
            "params" => &mut params,
            "fisher" => &mut fisher,
            "theta_star" => &mut theta_star,
            "adam_m" => &mut adam_m,
            "adam_v" => &mut adam_v,
            other => return Err(Error::Schema(format!("unknown checkpoint section {other}"))),
        };
        if slot.replace(set).is_some() {
            return Err(Error::Schema(format!("duplicate section {}", s.name)));
        }
    }
    if expected_len != payload.len() as u64 {
        return Err(Error::Schema(format!(
            "payload is {} bytes, header describes {expected_len}",
            payload.len()
        )));
    }
    let params = params.ok_or_else(|| Error::Schema("checkpoint has no params section".into()))?;
    let fisher = match (fisher, header.fisher_examples) {
        (Some(f), Some(n)) => Some(FisherDiagonal::new(f, n)?),
        (None, None) => None,
        _ => return Err(Error::Schema("fisher section and example count disagree".into())),
    };
    let optimizer = match (adam_m, adam_v, header.adam_step) {
        (Some(m), Some(v), Some(step)) => Some(AdamState { step, m, v }),
        (None, None, None) => None,
        _ => return Err(Error::Schema("incomplete optimizer state".into())),
    };
    Ok(Checkpoint {
        config: header.config,
        seed: header.seed,
        step: header.step,
        config_hash: header.config_hash,
        params,
        fisher,
        theta_star,
        optimizer,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_bytes(ck)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}

/// Loads and requires the stored model layout to equal `config`.
pub fn load_for(path: &Path, config: &ModelConfig) -> Result<Checkpoint> {
    let ck = load(path)?;
    if &ck.config != config {
        return Err(Error::Schema(format!(
            "checkpoint was written for {:?}, expected {:?}",
            ck.config, config
        )));
    }
    Ok(ck)
}
