//! Single-file checkpoints.
//!
//! Layout: the 8-byte magic `ADGANCKP`, a little-endian u32 format version,
//! a u64 header length, a JSON header, then every tensor of the header's
//! `tensors` list as little-endian f64 in order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdganModel, ArchConfig, Network};
use crate::autodiff::{AdamConfig, AdamState};
use crate::data::cube::hex_digest;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ADGANCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: AdganModel,
    pub g_opt: AdamState,
    pub d_opt: AdamState,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: ArchConfig,
    arch_sha256: String,
    meta: CheckpointMeta,
    g_adam: AdamConfig,
    g_adam_step: u64,
    d_adam: AdamConfig,
    d_adam_step: u64,
    tensors: Vec<TensorEntry>,
}

fn arch_hash(arch: &ArchConfig) -> Result<String> {
    Ok(hex_digest(serde_json::to_string(arch)?.as_bytes()))
}

/// Every stored tensor in payload order, with its name.
fn collect(ck: &Checkpoint) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    let mut net = |prefix: &str, n: &Network, opt: &AdamState| {
        for (name, t) in n.params.names().iter().zip(n.params.tensors()) {
            out.push((name.clone(), t.clone()));
        }
        for (i, r) in n.running.iter().enumerate() {
            let c = r.mean.len();
            out.push((format!("{prefix}.running{i}.mean"), Tensor::new(vec![c], r.mean.clone()).unwrap()));
            out.push((format!("{prefix}.running{i}.var"), Tensor::new(vec![c], r.var.clone()).unwrap()));
        }
        for (name, (m, v)) in n.params.names().iter().zip(opt.m.iter().zip(&opt.v)) {
            out.push((format!("adam.{name}.m"), m.clone()));
            out.push((format!("adam.{name}.v"), v.clone()));
        }
    };
    net("g", &ck.model.generator, &ck.g_opt);
    net("d", &ck.model.discriminator, &ck.d_opt);
    out
}

pub fn checkpoint_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let tensors = collect(ck);
    let header = Header {
        arch: ck.model.arch.clone(),
        arch_sha256: arch_hash(&ck.model.arch)?,
        meta: ck.meta.clone(),
        g_adam: ck.g_opt.config,
        g_adam_step: ck.g_opt.step,
        d_adam: ck.d_opt.config,
        d_adam_step: ck.d_opt.step,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(20 + json.len() + 8 * tensors.iter().map(|(_, t)| t.len()).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, checkpoint_bytes(ck)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { msg, .. } => Error::format(path, msg),
        other => other,
    })
}

fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let fail = |msg: String| Error::format("<checkpoint>", msg);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(fail("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() < 20 + hlen {
        return Err(fail(format!("header of {hlen} bytes is truncated")));
    }
    let header: Header =
        serde_json::from_slice(&bytes[20..20 + hlen]).map_err(|e| fail(e.to_string()))?;
    if arch_hash(&header.arch)? != header.arch_sha256 {
        return Err(fail("architecture hash does not match header".into()));
    }
    let payload = &bytes[20 + hlen..];
    let expected: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() * 8)
        .sum();
    if payload.len() != expected {
        return Err(fail(format!(
            "expected {expected} payload bytes, found {}",
            payload.len()
        )));
    }

    let mut model = AdganModel::new(header.arch.clone(), 0)?;
    let mut g_opt = AdamState::new(&model.generator.params, header.g_adam);
    let mut d_opt = AdamState::new(&model.discriminator.params, header.d_adam);
    g_opt.step = header.g_adam_step;
    d_opt.step = header.d_adam_step;
    let template = collect(&Checkpoint {
        model: model.clone(),
        g_opt: g_opt.clone(),
        d_opt: d_opt.clone(),
        meta: header.meta.clone(),
    });
    if template.len() != header.tensors.len() {
        return Err(fail(format!(
            "expected {} tensors for this architecture, header lists {}",
            template.len(),
            header.tensors.len()
        )));
    }
    let mut values = Vec::with_capacity(template.len());
    let mut offset = 0;
    for ((name, t), entry) in template.iter().zip(&header.tensors) {
        if *name != entry.name || t.shape() != entry.shape.as_slice() {
            return Err(fail(format!(
                "tensor `{}` {:?} does not match expected `{name}` {:?}",
                entry.name,
                entry.shape,
                t.shape()
            )));
        }
        let n = t.len();
        let data: Vec<f64> = payload[offset..offset + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += 8 * n;
        values.push(Tensor::new(entry.shape.clone(), data)?);
    }

    let mut it = values.into_iter();
    for (net, opt) in [
        (&mut model.generator, &mut g_opt),
        (&mut model.discriminator, &mut d_opt),
    ] {
        for p in net.params.tensors_mut() {
            *p = it.next().unwrap();
        }
        for r in net.running.iter_mut() {
            r.mean = it.next().unwrap().into_data();
            r.var = it.next().unwrap().into_data();
        }
        for i in 0..opt.m.len() {
            opt.m[i] = it.next().unwrap();
            opt.v[i] = it.next().unwrap();
        }
    }
    Ok(Checkpoint {
        model,
        g_opt,
        d_opt,
        meta: header.meta,
    })
}
