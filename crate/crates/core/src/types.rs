//! Domain types shared by every stage: label spaces, the sampled target set,
//! per-source prediction matrices and source metadata.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums of a prediction matrix must lie within this band around 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Identifiers end up in file names and `+`-joined ensemble keys, so they are
/// restricted to a conservative character set.
pub fn validate_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Invalid(format!("{kind} id is empty")));
    }
    if let Some(c) = id
        .chars()
        .find(|c| !(c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')))
    {
        return Err(Error::Invalid(format!(
            "{kind} id {id:?} contains {c:?}; allowed: ASCII letters, digits, '_', '-', '.'"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    id: String,
    class_names: Vec<String>,
}

impl LabelSpace {
    pub fn new(id: impl Into<String>, class_names: Vec<String>) -> Result<Self> {
        let space = LabelSpace {
            id: id.into(),
            class_names,
        };
        space.validate()?;
        Ok(space)
    }

    /// A space with generated class names `c0..c{k-1}`.
    pub fn with_cardinality(id: impl Into<String>, k: usize) -> Result<Self> {
        Self::new(id, (0..k).map(|c| format!("c{c}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() < 2 {
            return Err(Error::Invalid(format!(
                "label space {:?} has {} classes, need at least 2",
                self.id,
                self.class_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.class_names.len());
        for name in &self.class_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Invalid(format!(
                    "label space {:?} repeats class name {name:?}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn cardinality(&self) -> usize {
        self.class_names.len()
    }
}

/// Where a sample came from: an image and a row-major pixel index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelRef {
    pub image_id: String,
    pub pixel_index: u32,
}

/// The sampled target training set: one ground-truth label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    target_space: LabelSpace,
    ground_truth: Vec<u32>,
    provenance: Option<Vec<PixelRef>>,
}

impl SampleSet {
    pub fn new(target_space: LabelSpace, ground_truth: Vec<u32>) -> Result<Self> {
        Self::with_provenance(target_space, ground_truth, None)
    }

    pub fn with_provenance(
        target_space: LabelSpace,
        ground_truth: Vec<u32>,
        provenance: Option<Vec<PixelRef>>,
    ) -> Result<Self> {
        target_space.validate()?;
        if ground_truth.is_empty() {
            return Err(Error::Invalid("sample set is empty".into()));
        }
        let k = target_space.cardinality();
        if let Some((i, &y)) = ground_truth
            .iter()
            .enumerate()
            .find(|(_, &y)| y as usize >= k)
        {
            return Err(Error::Invalid(format!(
                "ground truth sample {i} has label {y}, target space has {k} classes"
            )));
        }
        if let Some(p) = &provenance {
            if p.len() != ground_truth.len() {
                return Err(Error::dims("provenance", ground_truth.len(), p.len()));
            }
        }
        Ok(SampleSet {
            target_space,
            ground_truth,
            provenance,
        })
    }

    pub fn target_space(&self) -> &LabelSpace {
        &self.target_space
    }

    pub fn num_classes(&self) -> usize {
        self.target_space.cardinality()
    }

    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }

    pub fn ground_truth(&self) -> &[u32] {
        &self.ground_truth
    }

    pub fn provenance(&self) -> Option<&[PixelRef]> {
        self.provenance.as_deref()
    }

    /// Empirical class counts over the ground truth.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes()];
        for &y in &self.ground_truth {
            counts[y as usize] += 1;
        }
        counts
    }
}

/// One source model applied to every sample: an `n x |Z|` row-major matrix of
/// `p_s(z | x_i)`.
///
/// The stored floats are kept exactly as produced or read. Rows are allowed to
/// drift from 1 by up to [`ROW_SUM_TOLERANCE`]; consumers divide by
/// [`SourcePredictions::row_sum`] in f64 when they need a normalized row.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePredictions {
    source_id: String,
    space: LabelSpace,
    n: usize,
    probs: Vec<f32>,
}

impl SourcePredictions {
    pub fn new(
        source_id: impl Into<String>,
        space: LabelSpace,
        n: usize,
        probs: Vec<f32>,
    ) -> Result<Self> {
        let preds = SourcePredictions {
            source_id: source_id.into(),
            space,
            n,
            probs,
        };
        preds.validate()?;
        Ok(preds)
    }

    pub fn validate(&self) -> Result<()> {
        validate_id("source", &self.source_id)?;
        self.space.validate()?;
        let k = self.space.cardinality();
        if self.probs.len() != self.n * k {
            return Err(Error::dims(
                format!("prediction matrix of {}", self.source_id),
                self.n * k,
                self.probs.len(),
            ));
        }
        for (row, values) in self.probs.chunks_exact(k).enumerate() {
            let mut sum = 0.0f64;
            for (col, &v) in values.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidProbability {
                        source_id: self.source_id.clone(),
                        row,
                        col,
                        value: v,
                    });
                }
                sum += v as f64;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::RowSum {
                    source_id: self.source_id.clone(),
                    row,
                    sum,
                });
            }
        }
        Ok(())
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.space.cardinality()
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let k = self.num_classes();
        &self.probs[i * k..(i + 1) * k]
    }

    /// f64 sum of row `i`, accumulated in column order.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().map(|&v| v as f64).sum()
    }
}

/// Descriptive metadata of a source model, used by the BASE baseline and by
/// pool exclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub source_id: String,
    pub dataset_name: String,
    pub architecture_tag: String,
    pub pretraining_tag: String,
    /// Source test-set performance, a fraction in [0, 1].
    pub source_performance: f64,
    /// Number of images in the source training set.
    pub source_size: u64,
    /// Number of classes in the source label space.
    pub source_classes: u32,
}

impl SourceMeta {
    pub fn validate(&self) -> Result<()> {
        validate_id("source", &self.source_id)?;
        if !(0.0..=1.0).contains(&self.source_performance) {
            return Err(Error::Invalid(format!(
                "source {}: performance {} outside [0, 1]",
                self.source_id, self.source_performance
            )));
        }
        if self.source_size < 1 {
            return Err(Error::Invalid(format!(
                "source {}: source_size must be >= 1",
                self.source_id
            )));
        }
        if self.source_classes < 2 {
            return Err(Error::Invalid(format!(
                "source {}: source_classes must be >= 2",
                self.source_id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_space_rejects_duplicates_and_singletons() {
        assert!(LabelSpace::new("t", vec!["a".into()]).is_err());
        assert!(LabelSpace::new("t", vec!["a".into(), "a".into()]).is_err());
        let s = LabelSpace::new("t", vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(s.cardinality(), 2);
    }

    #[test]
    fn sample_set_checks_label_range() {
        let space = LabelSpace::with_cardinality("t", 3).unwrap();
        assert!(SampleSet::new(space.clone(), vec![0, 2, 1]).is_ok());
        assert!(SampleSet::new(space.clone(), vec![0, 3]).is_err());
        assert!(SampleSet::new(space, vec![]).is_err());
    }

    #[test]
    fn predictions_reject_bad_rows() {
        let space = LabelSpace::with_cardinality("z", 2).unwrap();
        assert!(SourcePredictions::new("a", space.clone(), 1, vec![0.5, 0.5]).is_ok());
        let err = SourcePredictions::new("a", space.clone(), 2, vec![0.5, 0.5, 0.5, 0.4]);
        assert!(matches!(err, Err(Error::RowSum { row: 1, .. })));
        let err = SourcePredictions::new("a", space.clone(), 1, vec![f32::NAN, 1.0]);
        assert!(matches!(err, Err(Error::InvalidProbability { col: 0, .. })));
        let err = SourcePredictions::new("a", space.clone(), 1, vec![-0.1, 1.1]);
        assert!(matches!(err, Err(Error::InvalidProbability { .. })));
        let err = SourcePredictions::new("a", space, 2, vec![1.0, 0.0]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ids_are_restricted() {
        assert!(validate_id("source", "hrnet_coco-1.v2").is_ok());
        assert!(validate_id("source", "a+b").is_err());
        assert!(validate_id("source", "a/b").is_err());
        assert!(validate_id("source", "").is_err());
    }
}
