//! On-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.json                 config, seed, instance list
//! <dir>/instance_0000.json            header: dims and file names
//! <dir>/instance_0000.theta_star.bin  d*d little-endian f64, row-major
//! <dir>/instance_0000.sigma_hat.bin   d*d little-endian f64, row-major
//! <dir>/instance_0000.samples.bin     m*d little-endian f64, one row per sample
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneratorTag, GraphFamilyConfig, ProblemInstance, Samples};
use crate::error::{Error, Result};
use crate::matcore::SymmetricMatrix;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: GraphFamilyConfig,
    pub seed: u64,
    pub instances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InstanceHeader {
    index: usize,
    d: usize,
    m: usize,
    generator_tag: GeneratorTag,
    seed: u64,
    p: Option<f64>,
    layout: String,
    theta_star: String,
    sigma_hat: String,
    samples: String,
}

const LAYOUT: &str = "f64-le-row-major";

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::ShapeError(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Writes one instance as `<stem>.json` plus three `.bin` arrays in `dir`.
pub fn write_instance(dir: &Path, stem: &str, inst: &ProblemInstance) -> Result<()> {
    let header = InstanceHeader {
        index: inst.index,
        d: inst.dim(),
        m: inst.num_samples(),
        generator_tag: inst.generator_tag,
        seed: inst.seed,
        p: inst.p,
        layout: LAYOUT.into(),
        theta_star: format!("{stem}.theta_star.bin"),
        sigma_hat: format!("{stem}.sigma_hat.bin"),
        samples: format!("{stem}.samples.bin"),
    };
    write_f64s(&dir.join(&header.theta_star), inst.theta_star.as_slice())?;
    write_f64s(&dir.join(&header.sigma_hat), inst.sigma_hat.as_slice())?;
    write_f64s(&dir.join(&header.samples), inst.samples.as_slice())?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn read_instance(dir: &Path, stem: &str) -> Result<ProblemInstance> {
    let header: InstanceHeader = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    if header.layout != LAYOUT {
        return Err(Error::InvalidConfig(format!("unsupported array layout '{}'", header.layout)));
    }
    let d = header.d;
    let theta_star = SymmetricMatrix::new(d, read_f64s(&dir.join(&header.theta_star), d * d)?)?;
    let sigma_hat = SymmetricMatrix::new(d, read_f64s(&dir.join(&header.sigma_hat), d * d)?)?;
    let samples = Samples::new(d, read_f64s(&dir.join(&header.samples), header.m * d)?)?;
    Ok(ProblemInstance {
        theta_star,
        sigma_hat,
        samples,
        generator_tag: header.generator_tag,
        seed: header.seed,
        index: header.index,
        p: header.p,
    })
}

/// Writes a dataset directory (created if missing).
pub fn save_dataset(
    dir: &Path,
    config: &GraphFamilyConfig,
    seed: u64,
    instances: &[ProblemInstance],
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(instances.len());
    for inst in instances {
        let stem = format!("instance_{:04}", inst.index);
        write_instance(dir, &stem, inst)?;
        names.push(stem);
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        config: config.clone(),
        seed,
        instances: names,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<ProblemInstance>)> {
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "dataset format version {} is not supported",
            manifest.format_version
        )));
    }
    let instances = manifest
        .instances
        .iter()
        .map(|stem| read_instance(dir, stem))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, instances))
}
