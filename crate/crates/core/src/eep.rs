//! Empirical joint and conditional label distributions between a source label
//! space and the target label space, the expected empirical predictor (EEP)
//! built from them, and single-source LEEP.
//!
//! All accumulation is in f64, samples ascending then source classes
//! ascending. Prediction rows are normalized by their f64 row sum at use time.

use crate::error::{Error, Result};
use crate::types::{SampleSet, SourcePredictions};

/// Probabilities are clamped to at least this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
pub fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Empirical `P(y, z)`, `P(z)` and `P(y | z)` for one source/target pair.
/// Matrices are `|Y| x |Z|`, row-major by target class.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    source_id: String,
    target_classes: usize,
    source_classes: usize,
    joint: Vec<f64>,
    marginal_z: Vec<f64>,
    conditional: Vec<f64>,
}

impl JointModel {
    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn target_classes(&self) -> usize {
        self.target_classes
    }

    pub fn source_classes(&self) -> usize {
        self.source_classes
    }

    pub fn joint(&self, y: usize, z: usize) -> f64 {
        self.joint[y * self.source_classes + z]
    }

    pub fn marginal_z(&self) -> &[f64] {
        &self.marginal_z
    }

    pub fn conditional(&self, y: usize, z: usize) -> f64 {
        self.conditional[y * self.source_classes + z]
    }

    /// Writes the EEP row `p(y | x) = sum_z P(y | z) p(z | x)` for every
    /// target class `y`, with `p(z | x)` taken from `pred_row` divided by its
    /// sum. `scratch` holds the normalized row and is resized as needed.
    pub fn eep_row(&self, pred_row: &[f32], scratch: &mut Vec<f64>, out: &mut [f64]) {
        debug_assert_eq!(pred_row.len(), self.source_classes);
        debug_assert_eq!(out.len(), self.target_classes);
        let sum: f64 = pred_row.iter().map(|&v| v as f64).sum();
        scratch.clear();
        scratch.extend(pred_row.iter().map(|&v| v as f64 / sum));
        for (y, slot) in out.iter_mut().enumerate() {
            let cond = &self.conditional[y * self.source_classes..(y + 1) * self.source_classes];
            let mut acc = 0.0f64;
            for (c, q) in cond.iter().zip(scratch.iter()) {
                acc += c * q;
            }
            *slot = acc;
        }
    }
}

/// Soft-count estimate of the joint distribution:
/// `P(y, z) = (1/n) * sum_{i : y_i = y} p(z | x_i)`.
pub fn empirical_joint(preds: &SourcePredictions, samples: &SampleSet) -> Result<JointModel> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Invalid("empty sample set".into()));
    }
    if preds.num_samples() != n {
        return Err(Error::dims(
            format!("samples of source {}", preds.source_id()),
            n,
            preds.num_samples(),
        ));
    }
    let ny = samples.num_classes();
    let nz = preds.num_classes();
    let mut joint = vec![0.0f64; ny * nz];
    for (i, &y) in samples.ground_truth().iter().enumerate() {
        let row = preds.row(i);
        let sum: f64 = row.iter().map(|&v| v as f64).sum();
        let target = &mut joint[y as usize * nz..(y as usize + 1) * nz];
        for (slot, &p) in target.iter_mut().zip(row) {
            *slot += p as f64 / sum;
        }
    }
    let n_f = n as f64;
    for v in &mut joint {
        *v /= n_f;
    }

    let mut marginal_z = vec![0.0f64; nz];
    for y in 0..ny {
        for z in 0..nz {
            marginal_z[z] += joint[y * nz + z];
        }
    }
    let mut conditional = vec![0.0f64; ny * nz];
    for z in 0..nz {
        if marginal_z[z] > 0.0 {
            for y in 0..ny {
                conditional[y * nz + z] = joint[y * nz + z] / marginal_z[z];
            }
        }
    }
    Ok(JointModel {
        source_id: preds.source_id().to_string(),
        target_classes: ny,
        source_classes: nz,
        joint,
        marginal_z,
        conditional,
    })
}

/// Per-source EEP predictions over the whole target label space.
#[derive(Debug, Clone, PartialEq)]
pub struct EepMatrix {
    source_id: String,
    n: usize,
    num_classes: usize,
    probs: Vec<f64>,
    deficient_rows: usize,
}

impl EepMatrix {
    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Rows whose mass fell short of 1 by more than 1e-6 because the source
    /// put probability on a class that never received empirical mass.
    pub fn deficient_rows(&self) -> usize {
        self.deficient_rows
    }
}

pub fn eep_matrix(preds: &SourcePredictions, joint: &JointModel) -> Result<EepMatrix> {
    if preds.num_classes() != joint.source_classes {
        return Err(Error::dims(
            format!("source classes of {}", preds.source_id()),
            joint.source_classes,
            preds.num_classes(),
        ));
    }
    let n = preds.num_samples();
    let k = joint.target_classes;
    let mut probs = vec![0.0f64; n * k];
    let mut deficient_rows = 0;
    let mut scratch = Vec::with_capacity(joint.source_classes);
    for (i, out) in probs.chunks_exact_mut(k).enumerate() {
        joint.eep_row(preds.row(i), &mut scratch, out);
        let mass: f64 = out.iter().sum();
        if mass < 1.0 - 1e-6 {
            deficient_rows += 1;
        }
    }
    Ok(EepMatrix {
        source_id: preds.source_id().to_string(),
        n,
        num_classes: k,
        probs,
        deficient_rows,
    })
}

/// Mean log EEP probability of the ground-truth label; always `<= 0`.
pub fn leep(eep: &EepMatrix, samples: &SampleSet) -> Result<f64> {
    if eep.n != samples.len() {
        return Err(Error::dims("EEP samples", samples.len(), eep.n));
    }
    if eep.num_classes != samples.num_classes() {
        return Err(Error::dims(
            "EEP classes",
            samples.num_classes(),
            eep.num_classes,
        ));
    }
    let mut acc = 0.0f64;
    for (i, &y) in samples.ground_truth().iter().enumerate() {
        acc += floored_ln(eep.row(i)[y as usize]);
    }
    Ok(acc / samples.len() as f64)
}
