//! Prediction bundles: a directory holding a JSON manifest, the ground-truth
//! labels and one probability matrix per source.
//!
//! Binary files start with the 8-byte magic `EEPB0001` followed by a raw
//! little-endian payload (`f32` row-major for predictions, `i32` for ground
//! truth). Dimensions live only in the manifest.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LabelSpace, PixelRef, SampleSet, SourceMeta, SourcePredictions};

pub const MATRIX_MAGIC: &[u8; 8] = b"EEPB0001";
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "gt.bin";

pub fn prediction_file_name(source_id: &str) -> String {
    format!("pred_{source_id}.bin")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub target: LabelSpace,
    pub num_samples: usize,
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Vec<PixelRef>>,
    #[serde(default)]
    pub sources: Vec<ManifestSource>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestSource {
    #[serde(flatten)]
    pub meta: SourceMeta,
    pub label_space: LabelSpace,
    pub file: String,
}

/// Everything a bundle directory holds, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub samples: SampleSet,
    pub predictions: Vec<SourcePredictions>,
    pub metas: Vec<SourceMeta>,
}

impl Bundle {
    pub fn source_ids(&self) -> impl Iterator<Item = &str> {
        self.predictions.iter().map(|p| p.source_id())
    }
}

pub fn write_f32_file(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + values.len() * 4);
    bytes.extend_from_slice(MATRIX_MAGIC);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

pub fn write_i32_file(path: &Path, values: &[i32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + values.len() * 4);
    bytes.extend_from_slice(MATRIX_MAGIC);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a magic-prefixed file and checks that its payload holds exactly
/// `expected` 4-byte words.
fn read_words(path: &Path, magic: &[u8; 8], expected: usize, what: &str) -> Result<Vec<[u8; 4]>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(Error::format(
            path,
            format!("missing magic {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let payload = &bytes[8..];
    if payload.len() % 4 != 0 {
        return Err(Error::format(
            path,
            format!("payload length {} is not a multiple of 4", payload.len()),
        ));
    }
    let found = payload.len() / 4;
    if found != expected {
        return Err(Error::dims(
            format!("{what} ({})", path.display()),
            expected,
            found,
        ));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect())
}

pub fn read_f32_file(path: &Path, expected: usize, what: &str) -> Result<Vec<f32>> {
    Ok(read_words(path, MATRIX_MAGIC, expected, what)?
        .into_iter()
        .map(f32::from_le_bytes)
        .collect())
}

pub fn read_i32_file(path: &Path, expected: usize, what: &str) -> Result<Vec<i32>> {
    read_i32_words(path, MATRIX_MAGIC, expected, what)
}

fn read_i32_words(path: &Path, magic: &[u8; 8], expected: usize, what: &str) -> Result<Vec<i32>> {
    Ok(read_words(path, magic, expected, what)?
        .into_iter()
        .map(i32::from_le_bytes)
        .collect())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::format(
            &path,
            format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                manifest.schema_version
            ),
        ));
    }
    Ok(manifest)
}

/// Loads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let n = manifest.num_samples;

    let gt_path = dir.join(&manifest.ground_truth);
    let raw_gt = read_i32_file(&gt_path, n, "ground truth")?;
    let mut ground_truth = Vec::with_capacity(n);
    for (i, y) in raw_gt.into_iter().enumerate() {
        let y = u32::try_from(y).map_err(|_| {
            Error::Invalid(format!("ground truth sample {i} has negative label {y}"))
        })?;
        ground_truth.push(y);
    }
    let samples = SampleSet::with_provenance(manifest.target, ground_truth, manifest.provenance)?;

    let mut seen = HashSet::new();
    let mut predictions = Vec::with_capacity(manifest.sources.len());
    let mut metas = Vec::with_capacity(manifest.sources.len());
    for source in manifest.sources {
        source.meta.validate()?;
        let id = source.meta.source_id.clone();
        if !seen.insert(id.clone()) {
            return Err(Error::Invalid(format!("duplicate source id {id:?}")));
        }
        let k = source.label_space.cardinality();
        let path = dir.join(&source.file);
        let probs = read_f32_file(&path, n * k, &format!("predictions of {id}"))?;
        predictions.push(SourcePredictions::new(id, source.label_space, n, probs)?);
        metas.push(source.meta);
    }
    Ok(Bundle {
        samples,
        predictions,
        metas,
    })
}

/// Writes a bundle directory, creating it if needed. `metas` must hold one
/// entry per prediction matrix, matched by source id.
pub fn write_bundle(
    samples: &SampleSet,
    predictions: &[SourcePredictions],
    metas: &[SourceMeta],
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    let n = samples.len();
    let mut sources = Vec::with_capacity(predictions.len());
    for preds in predictions {
        if preds.num_samples() != n {
            return Err(Error::dims(
                format!("samples of source {}", preds.source_id()),
                n,
                preds.num_samples(),
            ));
        }
        let meta = metas
            .iter()
            .find(|m| m.source_id == preds.source_id())
            .ok_or_else(|| Error::UnknownSource(preds.source_id().to_string()))?;
        meta.validate()?;
        sources.push(ManifestSource {
            meta: meta.clone(),
            label_space: preds.space().clone(),
            file: prediction_file_name(preds.source_id()),
        });
    }

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gt: Vec<i32> = samples.ground_truth().iter().map(|&y| y as i32).collect();
    write_i32_file(&dir.join(GROUND_TRUTH_FILE), &gt)?;
    for preds in predictions {
        write_f32_file(
            &dir.join(prediction_file_name(preds.source_id())),
            preds.probs(),
        )?;
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        target: samples.target_space().clone(),
        num_samples: n,
        ground_truth: GROUND_TRUTH_FILE.to_string(),
        provenance: samples.provenance().map(|p| p.to_vec()),
        sources,
    };
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
