//! On-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.json               format version, generation law, file list
//! <dir>/sample_{i}.json             one MetaSample per file
//! <dir>/sample_{i}/run_{j}/frame_{t}.ppm   optional rendered frames
//! ```
//!
//! Run `j = 0` is the prediction run and `j >= 1` are the experience runs.
//! Every file is listed in the manifest with its CRC32; a mismatch, missing
//! file or parse failure is reported as [`DatasetError::CorruptManifest`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{render_run, Dataset, DatasetError, MetaSample, ScenarioConfig};
use crate::render::codec::encode_ppm;

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the dataset directory.
    pub path: String,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ScenarioConfig,
    pub master_seed: u64,
    pub n_experience: usize,
    pub prediction_frames: usize,
    pub seeds: Vec<u64>,
    pub samples: Vec<FileEntry>,
    pub frames: Vec<FileEntry>,
}

fn write_entry(dir: &Path, rel: String, bytes: &[u8]) -> Result<FileEntry, DatasetError> {
    let full = dir.join(&rel);
    if let Some(parent) = full.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&full, bytes)?;
    Ok(FileEntry {
        path: rel,
        crc32: crc32fast::hash(bytes),
    })
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(v).expect("dataset types always serialize")
}

/// Writes `ds` under `dir`, rendering frames as PPM when `with_frames`.
pub fn save_dataset(ds: &Dataset, dir: &Path, with_frames: bool) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir)?;
    let mut samples = Vec::with_capacity(ds.samples.len());
    let mut frames = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        samples.push(write_entry(dir, format!("sample_{i}.json"), &to_json(s))?);
        if !with_frames {
            continue;
        }
        let runs = std::iter::once(&s.prediction_run).chain(&s.experience_runs);
        for (j, run) in runs.enumerate() {
            for (t, img) in render_run(&s.scenario, run, &ds.config.palette)?.iter().enumerate() {
                let mut buf = Vec::new();
                encode_ppm(img, &mut buf)?;
                frames.push(write_entry(dir, format!("sample_{i}/run_{j}/frame_{t}.ppm"), &buf)?);
            }
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: ds.config.clone(),
        master_seed: ds.master_seed,
        n_experience: ds.n_experience,
        prediction_frames: ds.prediction_frames,
        seeds: ds.samples.iter().map(|s| s.seed).collect(),
        samples,
        frames,
    };
    fs::write(dir.join(MANIFEST), to_json(&manifest))?;
    Ok(manifest)
}

fn read_checked(dir: &Path, e: &FileEntry) -> Result<Vec<u8>, DatasetError> {
    let bytes = fs::read(dir.join(&e.path)).map_err(|err| DatasetError::CorruptManifest(format!("{}: {err}", e.path)))?;
    let crc = crc32fast::hash(&bytes);
    if crc != e.crc32 {
        return Err(DatasetError::CorruptManifest(format!(
            "{}: checksum {crc:08x}, expected {:08x}",
            e.path, e.crc32
        )));
    }
    Ok(bytes)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let bytes = fs::read(dir.join(MANIFEST))?;
    let m: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| DatasetError::CorruptManifest(format!("{MANIFEST}: {e}")))?;
    if m.format_version != FORMAT_VERSION {
        return Err(DatasetError::CorruptManifest(format!(
            "unsupported format_version {}",
            m.format_version
        )));
    }
    if m.seeds.len() != m.samples.len() {
        return Err(DatasetError::CorruptManifest("seed and sample lists differ in length".into()));
    }
    Ok(m)
}

/// Loads and verifies a dataset written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let m = read_manifest(dir)?;
    for f in &m.frames {
        read_checked(dir, f)?;
    }
    let mut samples = Vec::with_capacity(m.samples.len());
    for (e, &seed) in m.samples.iter().zip(&m.seeds) {
        let s: MetaSample = serde_json::from_slice(&read_checked(dir, e)?)
            .map_err(|err| DatasetError::CorruptManifest(format!("{}: {err}", e.path)))?;
        if s.seed != seed {
            return Err(DatasetError::CorruptManifest(format!("{}: seed does not match manifest", e.path)));
        }
        samples.push(s);
    }
    Ok(Dataset {
        config: m.config,
        master_seed: m.master_seed,
        n_experience: m.n_experience,
        prediction_frames: m.prediction_frames,
        samples,
    })
}
