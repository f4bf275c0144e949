//! Class-balanced pixel sampling over dense label rasters.
//!
//! Each non-ignored pixel gets weight `1 / frequency[label]`, with frequencies
//! counted over the whole target dataset. Per image, `min(k, available)`
//! pixels are drawn without replacement with inclusion probability
//! proportional to that weight (capped at 1), using randomized systematic
//! sampling. With no capping the expected number of sampled pixels of each
//! class is therefore proportional to its in-image count over its global
//! count, which is uniform over classes for a single-image dataset.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LabelSpace, PixelRef, SampleSet};

pub const RASTER_MAGIC: &[u8; 8] = b"EEPR0001";
pub const DEFAULT_PIXELS_PER_IMAGE: usize = 1000;
pub const DEFAULT_IGNORE_VALUE: i32 = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    /// Row-major label indices.
    pub labels: Vec<i32>,
    pub ignore_value: i32,
}

impl LabelRaster {
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        labels: Vec<i32>,
        ignore_value: i32,
    ) -> Result<Self> {
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(Error::dims("raster labels", expected, labels.len()));
        }
        Ok(LabelRaster {
            image_id: image_id.into(),
            width,
            height,
            labels,
            ignore_value,
        })
    }

    /// Reads the raw raster format: magic `EEPR0001`, little-endian `u32`
    /// width and height, then `width * height` little-endian `i32` labels.
    pub fn read(path: &Path, image_id: impl Into<String>, ignore_value: i32) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..8] != RASTER_MAGIC {
            return Err(Error::format(path, "missing raster magic \"EEPR0001\""));
        }
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let expected = width as usize * height as usize;
        let payload = &bytes[16..];
        if payload.len() % 4 != 0 || payload.len() / 4 != expected {
            return Err(Error::dims(
                format!("raster labels ({})", path.display()),
                expected,
                payload.len() / 4,
            ));
        }
        let labels = payload
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(image_id, width, height, labels, ignore_value)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 + self.labels.len() * 4);
        bytes.extend_from_slice(RASTER_MAGIC);
        bytes.extend_from_slice(&self.width.to_le_bytes());
        bytes.extend_from_slice(&self.height.to_le_bytes());
        for l in &self.labels {
            bytes.extend_from_slice(&l.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    fn check_labels(&self, num_classes: usize) -> Result<()> {
        for (i, &l) in self.labels.iter().enumerate() {
            if l != self.ignore_value && (l < 0 || l as usize >= num_classes) {
                return Err(Error::Invalid(format!(
                    "raster {}: pixel {i} has label {l}, outside [0, {num_classes}) and not the ignore value {}",
                    self.image_id, self.ignore_value
                )));
            }
        }
        Ok(())
    }
}

/// Per-class pixel counts over all rasters, ignoring the ignore value.
pub fn class_frequencies(rasters: &[LabelRaster], num_classes: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; num_classes];
    for raster in rasters {
        raster.check_labels(num_classes)?;
        for &l in &raster.labels {
            if l != raster.ignore_value {
                counts[l as usize] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Invalid(
            "every pixel carries the ignore value".into(),
        ));
    }
    Ok(counts)
}

/// One sampled pixel, with its label so downstream tools can build the
/// ground-truth vector without re-reading rasters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub image_id: String,
    pub pixel_index: u32,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleIndexList {
    pub seed: u64,
    pub k_per_image: usize,
    pub entries: Vec<SampleEntry>,
}

impl SampleIndexList {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("sample list serialization: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// The sampled ground truth as a [`SampleSet`] with provenance.
    pub fn to_sample_set(&self, target_space: LabelSpace) -> Result<SampleSet> {
        let gt = self.entries.iter().map(|e| e.label).collect();
        let provenance = self
            .entries
            .iter()
            .map(|e| PixelRef {
                image_id: e.image_id.clone(),
                pixel_index: e.pixel_index,
            })
            .collect();
        SampleSet::with_provenance(target_space, gt, Some(provenance))
    }
}

/// Draws up to `k_per_image` pixels per raster. Output is ordered by raster
/// then ascending pixel index, and depends only on `(rasters, k, frequencies,
/// seed)`: each raster uses its own ChaCha8 stream selected by its position.
pub fn sample_pixels(
    rasters: &[LabelRaster],
    k_per_image: usize,
    frequencies: &[u64],
    seed: u64,
) -> Result<SampleIndexList> {
    if rasters.is_empty() {
        return Err(Error::Invalid("no rasters to sample from".into()));
    }
    if k_per_image == 0 {
        return Err(Error::Invalid("pixels per image must be >= 1".into()));
    }
    let per_image: Vec<Vec<SampleEntry>> = rasters
        .par_iter()
        .enumerate()
        .map(|(idx, raster)| sample_one(raster, idx as u64, k_per_image, frequencies, seed))
        .collect::<Result<_>>()?;
    Ok(SampleIndexList {
        seed,
        k_per_image,
        entries: per_image.into_iter().flatten().collect(),
    })
}

fn sample_one(
    raster: &LabelRaster,
    stream: u64,
    k: usize,
    frequencies: &[u64],
    seed: u64,
) -> Result<Vec<SampleEntry>> {
    raster.check_labels(frequencies.len())?;
    let mut pixels = Vec::new();
    let mut weights = Vec::new();
    for (p, &l) in raster.labels.iter().enumerate() {
        if l == raster.ignore_value {
            continue;
        }
        let freq = frequencies[l as usize];
        if freq == 0 {
            return Err(Error::Invalid(format!(
                "raster {}: class {l} present but its dataset frequency is 0",
                raster.image_id
            )));
        }
        pixels.push(p);
        weights.push(1.0 / freq as f64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut chosen: Vec<usize> = draw_proportional(&weights, k, &mut rng)
        .into_iter()
        .map(|i| pixels[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|p| SampleEntry {
            image_id: raster.image_id.clone(),
            pixel_index: p as u32,
            label: raster.labels[p] as u32,
        })
        .collect())
}

/// Inclusion probabilities proportional to `weights` summing to `k`, with any
/// item that would exceed 1 pinned at 1 and the remainder redistributed.
pub(crate) fn inclusion_probabilities(weights: &[f64], k: usize) -> Vec<f64> {
    let m = weights.len();
    if k >= m {
        return vec![1.0; m];
    }
    let mut pinned = vec![false; m];
    loop {
        let remaining = (k - pinned.iter().filter(|&&p| p).count()) as f64;
        let total: f64 = weights
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(w, _)| w)
            .sum();
        let mut changed = false;
        for i in 0..m {
            if !pinned[i] && remaining * weights[i] / total >= 1.0 {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return (0..m)
                .map(|i| {
                    if pinned[i] {
                        1.0
                    } else {
                        remaining * weights[i] / total
                    }
                })
                .collect();
        }
    }
}

/// Randomized systematic sampling: exactly `min(k, len)` distinct indices,
/// index `i` included with probability `inclusion_probabilities(weights, k)[i]`.
pub(crate) fn draw_proportional(weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = weights.len();
    if k >= m {
        return (0..m).collect();
    }
    let pi = inclusion_probabilities(weights, k);
    let mut chosen: Vec<usize> = (0..m).filter(|&i| pi[i] >= 1.0).collect();
    let mut open: Vec<usize> = (0..m).filter(|&i| pi[i] < 1.0).collect();
    let target = k - chosen.len();
    if target == 0 {
        return chosen;
    }
    open.shuffle(rng);

    let mut point: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut picked = vec![false; open.len()];
    let mut count = 0;
    for (slot, &i) in open.iter().enumerate() {
        cumulative += pi[i];
        if point < cumulative {
            picked[slot] = true;
            count += 1;
            point += 1.0;
            if count == target {
                break;
            }
        }
    }
    // Rounding in the cumulative sum can leave the last point just past the
    // end; top up from the back of the shuffled order.
    for slot in (0..open.len()).rev() {
        if count == target {
            break;
        }
        if !picked[slot] {
            picked[slot] = true;
            count += 1;
        }
    }
    chosen.extend(
        open.iter()
            .zip(&picked)
            .filter(|(_, &p)| p)
            .map(|(&i, _)| i),
    );
    chosen
}
