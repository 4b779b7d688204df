//! Dataset directories: `train/` and `test/` manoeuvre CSVs plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use kfat::scenario::{self, Manoeuvre, ManoeuvreKind, Mismatch, ScenarioConfig, NOISE_ONLY_PROCESS_STD};
use kfat::vehicle::VehicleParams;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Truth simulated with model mismatch.
    #[default]
    Standard,
    /// Truth equal to the filter model plus known process noise.
    NoiseOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub vehicle: VehicleParams,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub dataset_id: String,
    pub seed: u64,
    pub variant: Variant,
    pub vehicle: VehicleParams,
    /// Ideal process-noise variances, known only for the noise-only variant.
    pub true_process_noise: Option<[f64; 3]>,
    pub composition: Composition,
    pub train: Vec<FileEntry>,
    pub test: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    pub train: Vec<(ManoeuvreKind, usize)>,
    pub test: Vec<(ManoeuvreKind, usize)>,
}

/// Identity of a dataset, copied into every report derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetTag {
    pub id: String,
    pub seed: u64,
    pub variant: Variant,
}

pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<Manoeuvre>,
    pub test: Vec<Manoeuvre>,
}

impl Dataset {
    pub fn tag(&self) -> DatasetTag {
        DatasetTag { id: self.manifest.dataset_id.clone(), seed: self.manifest.seed, variant: self.manifest.variant }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn noise_only(mut c: ScenarioConfig) -> ScenarioConfig {
    c.mismatch = Mismatch::none();
    c.process_noise = Some(NOISE_ONLY_PROCESS_STD);
    c
}

fn dataset_id(train: &[FileEntry], test: &[FileEntry]) -> String {
    let mut listing = String::new();
    for (dir, entries) in [("train", train), ("test", test)] {
        for e in entries {
            listing.push_str(&format!("{dir}/{} {}\n", e.file, e.sha256));
        }
    }
    sha256_hex(listing.as_bytes())
}

fn write_set(dir: &Path, configs: &[ScenarioConfig], params: &VehicleParams) -> Result<Vec<FileEntry>, CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let encoded: Vec<(String, Vec<u8>)> = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let man = scenario::generate(c, params)?;
            let mut bytes = Vec::new();
            man.write_csv(&mut bytes)?;
            Ok((format!("{i:02}_{}.csv", man.name), bytes))
        })
        .collect::<Result<_, CliError>>()?;
    encoded
        .into_iter()
        .zip(configs)
        .map(|((file, bytes), config)| {
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(CliError::io(&path))?;
            Ok(FileEntry { sha256: sha256_hex(&bytes), file, config: config.clone() })
        })
        .collect()
}

/// Simulate both sets into `out`. An existing non-empty directory is only
/// reused with `force`, in which case previous dataset files are replaced.
pub fn generate(out: &Path, seed: u64, cfg: &GenConfig, force: bool) -> Result<Manifest, CliError> {
    cfg.vehicle.validate().map_err(|e| CliError::Usage(format!("vehicle parameters: {e}")))?;
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(CliError::io(out))?;
        if entries.next().is_some() {
            if !force {
                return Err(CliError::Usage(format!("{} is not empty; pass --force to overwrite", out.display())));
            }
            for name in ["train", "test"] {
                let p = out.join(name);
                if p.exists() {
                    fs::remove_dir_all(&p).map_err(CliError::io(&p))?;
                }
            }
        }
    }
    let p = &cfg.vehicle;
    let (mut train, mut test) = (scenario::training_configs(seed, p), scenario::test_configs(seed, p));
    if cfg.variant == Variant::NoiseOnly {
        train = train.into_iter().map(noise_only).collect();
        test = test.into_iter().map(noise_only).collect();
    }
    let train = write_set(&out.join("train"), &train, p)?;
    let test = write_set(&out.join("test"), &test, p)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        dataset_id: dataset_id(&train, &test),
        seed,
        variant: cfg.variant,
        vehicle: *p,
        true_process_noise: (cfg.variant == Variant::NoiseOnly).then(scenario::noise_only_true_q),
        composition: Composition {
            train: scenario::TRAINING_COMPOSITION.to_vec(),
            test: scenario::TEST_COMPOSITION.to_vec(),
        },
        train,
        test,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn load_set(dir: &Path, entries: &[FileEntry]) -> Result<Vec<Manoeuvre>, CliError> {
    entries
        .par_iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(CliError::io(&path))?;
            if sha256_hex(&bytes) != e.sha256 {
                return Err(CliError::Data(format!("{}: checksum differs from the manifest", path.display())));
            }
            let name = e.file.trim_end_matches(".csv");
            Ok(Manoeuvre::read_csv(bytes.as_slice(), name)?)
        })
        .collect()
}

pub fn load(dir: &Path) -> Result<Dataset, CliError> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if dataset_id(&manifest.train, &manifest.test) != manifest.dataset_id {
        return Err(CliError::Data(format!("{}: dataset_id does not match the listed files", dir.display())));
    }
    let train = load_set(&dir.join("train"), &manifest.train)?;
    let test = load_set(&dir.join("test"), &manifest.test)?;
    if train.is_empty() {
        return Err(CliError::Data(format!("{}: no training manoeuvres", dir.display())));
    }
    Ok(Dataset { manifest, train, test })
}

/// Read a JSON document, rejecting any `schema_version` other than ours.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    match value.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => return Err(CliError::Data(format!("{}: unsupported schema_version {v}", path.display()))),
        None => return Err(CliError::Data(format!("{}: missing schema_version", path.display()))),
    }
    serde_json::from_value(value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Read an unversioned JSON configuration file.
pub fn read_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}
