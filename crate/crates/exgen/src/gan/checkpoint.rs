//! Checkpoint persistence: a JSON manifest line (architectures, seeds, shift
//! iteration, conditioning GPD, config echo, tensor directory), the tensor
//! blob as f32 little-endian in directory order, and a CRC-64 of the blob.

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};

use crate::evt::GpdParams;
use crate::nn::{build_network, ArchDescriptor, Model};

use super::{GanError, GanModel};

const MAGIC: &str = "EXGC1";
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// Run provenance stored alongside the weights.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub shift_iteration: Option<usize>,
    /// Fully resolved run configuration, echoed for reproducibility.
    pub config: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    magic: String,
    conditional: bool,
    cond_gpd: Option<GpdParams>,
    ext_scale: f64,
    latent_dim: usize,
    grid: (usize, usize),
    generator_arch: ArchDescriptor,
    discriminator_arch: ArchDescriptor,
    seed: u64,
    shift_iteration: Option<usize>,
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(
    model: &GanModel,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), GanError> {
    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    for (prefix, net) in [("g", &model.generator.net), ("d", &model.discriminator.net)] {
        for (name, shape, data) in net.named_params() {
            tensors.push(TensorEntry {
                name: format!("{prefix}.{name}"),
                shape,
            });
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        magic: MAGIC.into(),
        conditional: model.conditional,
        cond_gpd: model.cond_gpd,
        ext_scale: model.ext_scale,
        latent_dim: model.latent_dim,
        grid: model.grid,
        generator_arch: model.generator.net.arch.clone(),
        discriminator_arch: model.discriminator.net.arch.clone(),
        seed: meta.seed,
        shift_iteration: meta.shift_iteration,
        config: meta.config.clone(),
        tensors,
    };
    let mut bytes = serde_json::to_string(&manifest)
        .map_err(|e| GanError::Checkpoint(e.to_string()))?
        .into_bytes();
    bytes.push(b'\n');
    let crc = CRC64.checksum(&blob);
    bytes.extend_from_slice(&blob);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(GanModel, CheckpointMeta), GanError> {
    let bytes = fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| GanError::Checkpoint("no manifest line".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| GanError::Checkpoint(format!("manifest: {e}")))?;
    if manifest.magic != MAGIC {
        return Err(GanError::Checkpoint(format!(
            "magic {:?}, expected {MAGIC:?}",
            manifest.magic
        )));
    }
    if manifest.conditional != manifest.cond_gpd.is_some() {
        return Err(GanError::Checkpoint(
            "conditional flag and cond_gpd presence disagree".into(),
        ));
    }
    let rest = &bytes[nl + 1..];
    let expected: usize = manifest
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() * 4)
        .sum();
    if rest.len() != expected + 8 {
        return Err(GanError::Checkpoint(format!(
            "blob length {} does not match directory ({} + 8)",
            rest.len(),
            expected
        )));
    }
    let (blob, crc_bytes) = rest.split_at(expected);
    let stored = u64::from_le_bytes(crc_bytes.try_into().expect("8 crc bytes"));
    let computed = CRC64.checksum(blob);
    if stored != computed {
        return Err(GanError::Checkpoint(format!(
            "checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"
        )));
    }

    let mut g_params: Vec<(String, Vec<f32>)> = Vec::new();
    let mut d_params: Vec<(String, Vec<f32>)> = Vec::new();
    let mut off = 0usize;
    for t in &manifest.tensors {
        let len: usize = t.shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for i in 0..len {
            let p = off + i * 4;
            data.push(f32::from_le_bytes(blob[p..p + 4].try_into().unwrap()));
        }
        off += len * 4;
        if let Some(name) = t.name.strip_prefix("g.") {
            g_params.push((name.to_string(), data));
        } else if let Some(name) = t.name.strip_prefix("d.") {
            d_params.push((name.to_string(), data));
        } else {
            return Err(GanError::Checkpoint(format!(
                "tensor {} has no g./d. prefix",
                t.name
            )));
        }
    }

    let mut g_net = build_network::<f32>(&manifest.generator_arch, 0)?;
    g_net.load_named_params(&g_params)?;
    let mut d_net = build_network::<f32>(&manifest.discriminator_arch, 0)?;
    d_net.load_named_params(&d_params)?;

    let model = GanModel {
        generator: Model::new(g_net),
        discriminator: Model::new(d_net),
        conditional: manifest.conditional,
        cond_gpd: manifest.cond_gpd,
        ext_scale: manifest.ext_scale,
        latent_dim: manifest.latent_dim,
        grid: manifest.grid,
    };
    let meta = CheckpointMeta {
        seed: manifest.seed,
        shift_iteration: manifest.shift_iteration,
        config: manifest.config,
    };
    Ok((model, meta))
}
