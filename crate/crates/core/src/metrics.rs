//! Ensemble transferability metrics built on per-source EEP predictions:
//! MS-LEEP (sum of member LEEPs), E-LEEP (LEEP of the averaged EEP),
//! IoU-EEP (mean IoU of the averaged EEP's argmax), SoftIoU-EEP (the same
//! with per-sample confidence weights) and the target-agnostic BASE score.
//!
//! These functions are the reference path. [`crate::engine`] computes the
//! same quantities for every ensemble of a pool in one streaming pass and
//! shares [`ConfusionAccumulator`] and [`ensemble_row`] with this module so
//! both routes perform identical arithmetic.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::eep::{floored_ln, EepMatrix};
use crate::error::{Error, Result};
use crate::types::{validate_id, SampleSet, SourceMeta};

/// A set of distinct source ids, kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ensemble(Vec<String>);

impl Ensemble {
    pub fn new<I, S>(members: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = members.into_iter().map(Into::into).collect();
        if ids.is_empty() {
            return Err(Error::Invalid("ensemble has no members".into()));
        }
        for id in &ids {
            validate_id("source", id)?;
        }
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!(
                "ensemble lists source {:?} twice",
                w[0]
            )));
        }
        Ok(Ensemble(ids))
    }

    /// Built from ids already known to be valid, distinct and sorted.
    pub(crate) fn from_sorted_unchecked(ids: Vec<String>) -> Self {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        Ensemble(ids)
    }

    pub fn members(&self) -> &[String] {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    /// Members joined with `+`, the key used in CSV files.
    pub fn key(&self) -> String {
        self.0.join("+")
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ensemble::new(s.split('+'))
    }
}

/// Score columns produced by ensemble scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    MsLeep,
    ELeep,
    IouEep,
    SoftIouEep,
    Base,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::MsLeep,
        Metric::ELeep,
        Metric::IouEep,
        Metric::SoftIouEep,
        Metric::Base,
    ];

    /// The four target-aware transferability metrics (everything but BASE).
    pub const TRANSFERABILITY: [Metric; 4] = [
        Metric::MsLeep,
        Metric::ELeep,
        Metric::IouEep,
        Metric::SoftIouEep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MsLeep => "ms_leep",
            Metric::ELeep => "e_leep",
            Metric::IouEep => "iou_eep",
            Metric::SoftIouEep => "soft_iou_eep",
            Metric::Base => "base",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Averaged EEP predictions of an ensemble, `n x |Y|` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDistribution {
    n: usize,
    num_classes: usize,
    probs: Vec<f64>,
}

impl EnsembleDistribution {
    /// Wraps precomputed rows; entries must be finite and non-negative.
    pub fn new(n: usize, num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || probs.len() != n * num_classes {
            return Err(Error::dims(
                "ensemble distribution",
                n * num_classes,
                probs.len(),
            ));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Invalid(
                "ensemble distribution has a negative or non-finite entry".into(),
            ));
        }
        Ok(EnsembleDistribution {
            n,
            num_classes,
            probs,
        })
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
}

/// Divides an accumulated member sum by the ensemble size in place. Member
/// rows must have been added to a zeroed buffer in ascending member order.
#[inline]
pub(crate) fn ensemble_row(sum: &mut [f64], size: usize) {
    let s = size as f64;
    for v in sum {
        *v /= s;
    }
}

/// Index of the largest entry; ties go to the lowest index.
#[inline]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Per-class hard and weighted confusion counts. Hard counts drive IoU-EEP,
/// weighted counts drive SoftIoU-EEP.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionAccumulator {
    tp: Vec<u64>,
    fp: Vec<u64>,
    fn_: Vec<u64>,
    soft_tp: Vec<f64>,
    soft_fp: Vec<f64>,
    soft_fn: Vec<f64>,
}

impl ConfusionAccumulator {
    pub fn new(num_classes: usize) -> Self {
        ConfusionAccumulator {
            tp: vec![0; num_classes],
            fp: vec![0; num_classes],
            fn_: vec![0; num_classes],
            soft_tp: vec![0.0; num_classes],
            soft_fp: vec![0.0; num_classes],
            soft_fn: vec![0.0; num_classes],
        }
    }

    #[inline]
    pub fn push(&mut self, truth: usize, predicted: usize, weight: f64) {
        if truth == predicted {
            self.tp[truth] += 1;
            self.soft_tp[truth] += weight;
        } else {
            self.fp[predicted] += 1;
            self.fn_[truth] += 1;
            self.soft_fp[predicted] += weight;
            self.soft_fn[truth] += weight;
        }
    }

    /// Mean over classes with nonzero union of `TP / (TP + FP + FN)`.
    pub fn mean_iou(&self) -> Result<f64> {
        let mut sum = 0.0f64;
        let mut classes = 0usize;
        for c in 0..self.tp.len() {
            let union = self.tp[c] + self.fp[c] + self.fn_[c];
            if union > 0 {
                sum += self.tp[c] as f64 / union as f64;
                classes += 1;
            }
        }
        if classes == 0 {
            return Err(Error::Degenerate("no class has a nonzero union".into()));
        }
        Ok(sum / classes as f64)
    }

    /// Weighted counterpart of [`Self::mean_iou`].
    pub fn mean_soft_iou(&self) -> Result<f64> {
        let mut sum = 0.0f64;
        let mut classes = 0usize;
        for c in 0..self.soft_tp.len() {
            let union = self.soft_tp[c] + self.soft_fp[c] + self.soft_fn[c];
            if union > 0.0 {
                sum += self.soft_tp[c] / union;
                classes += 1;
            }
        }
        if classes == 0 {
            return Err(Error::Degenerate(
                "no class has a nonzero soft union".into(),
            ));
        }
        Ok(sum / classes as f64)
    }
}

/// Sum of member LEEP scores, in ascending member order.
pub fn ms_leep(leep_scores: &HashMap<String, f64>, ensemble: &Ensemble) -> Result<f64> {
    let mut acc = 0.0f64;
    for id in ensemble.members() {
        acc += leep_scores
            .get(id)
            .ok_or_else(|| Error::UnknownSource(id.clone()))?;
    }
    Ok(acc)
}

fn member_matrices<'a>(eeps: &'a [EepMatrix], ensemble: &Ensemble) -> Result<Vec<&'a EepMatrix>> {
    let members: Vec<&EepMatrix> = ensemble
        .members()
        .iter()
        .map(|id| {
            eeps.iter()
                .find(|e| e.source_id() == id)
                .ok_or_else(|| Error::UnknownSource(id.clone()))
        })
        .collect::<Result<_>>()?;
    let first = members[0];
    for m in &members[1..] {
        if m.num_samples() != first.num_samples() {
            return Err(Error::dims(
                "EEP samples",
                first.num_samples(),
                m.num_samples(),
            ));
        }
        if m.num_classes() != first.num_classes() {
            return Err(Error::dims(
                "EEP classes",
                first.num_classes(),
                m.num_classes(),
            ));
        }
    }
    Ok(members)
}

/// Elementwise mean of the members' EEP matrices.
pub fn ensemble_distribution(
    eeps: &[EepMatrix],
    ensemble: &Ensemble,
) -> Result<EnsembleDistribution> {
    let members = member_matrices(eeps, ensemble)?;
    let n = members[0].num_samples();
    let k = members[0].num_classes();
    let mut probs = vec![0.0f64; n * k];
    for m in &members {
        for (acc, &p) in probs.iter_mut().zip(m.probs()) {
            *acc += p;
        }
    }
    for row in probs.chunks_exact_mut(k) {
        ensemble_row(row, members.len());
    }
    Ok(EnsembleDistribution {
        n,
        num_classes: k,
        probs,
    })
}

fn check_dist(dist: &EnsembleDistribution, samples: &SampleSet) -> Result<()> {
    if dist.n != samples.len() {
        return Err(Error::dims("ensemble samples", samples.len(), dist.n));
    }
    if dist.num_classes != samples.num_classes() {
        return Err(Error::dims(
            "ensemble classes",
            samples.num_classes(),
            dist.num_classes,
        ));
    }
    Ok(())
}

/// Mean log of the averaged EEP probability at the ground truth.
pub fn e_leep(dist: &EnsembleDistribution, samples: &SampleSet) -> Result<f64> {
    check_dist(dist, samples)?;
    let mut acc = 0.0f64;
    for (i, &y) in samples.ground_truth().iter().enumerate() {
        acc += floored_ln(dist.row(i)[y as usize]);
    }
    Ok(acc / samples.len() as f64)
}

pub fn argmax_predictions(dist: &EnsembleDistribution) -> Vec<u32> {
    dist.probs
        .chunks_exact(dist.num_classes)
        .map(|row| argmax(row) as u32)
        .collect()
}

/// Mean IoU over classes present in either labeling.
pub fn mean_iou(pred: &[u32], truth: &[u32], num_classes: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dims("label vectors", truth.len(), pred.len()));
    }
    let mut acc = ConfusionAccumulator::new(num_classes);
    for (&p, &t) in pred.iter().zip(truth) {
        if p as usize >= num_classes || t as usize >= num_classes {
            return Err(Error::Invalid(format!(
                "label {} outside [0, {num_classes})",
                p.max(t)
            )));
        }
        acc.push(t as usize, p as usize, 1.0);
    }
    acc.mean_iou()
}

pub fn iou_eep(eeps: &[EepMatrix], ensemble: &Ensemble, samples: &SampleSet) -> Result<f64> {
    let dist = ensemble_distribution(eeps, ensemble)?;
    check_dist(&dist, samples)?;
    mean_iou(
        &argmax_predictions(&dist),
        samples.ground_truth(),
        samples.num_classes(),
    )
}

/// Per-sample confidence: `p_ens(y_i)` where the argmax is right, `1 - p_ens(y_i)`
/// where it is wrong.
pub fn soft_weights(
    dist: &EnsembleDistribution,
    samples: &SampleSet,
    y_star: &[u32],
) -> Result<Vec<f64>> {
    check_dist(dist, samples)?;
    if y_star.len() != samples.len() {
        return Err(Error::dims("argmax labels", samples.len(), y_star.len()));
    }
    Ok(samples
        .ground_truth()
        .iter()
        .zip(y_star)
        .enumerate()
        .map(|(i, (&y, &ys))| soft_weight(dist.row(i)[y as usize], y == ys))
        .collect())
}

#[inline]
pub(crate) fn soft_weight(p_truth: f64, correct: bool) -> f64 {
    if correct {
        p_truth
    } else {
        1.0 - p_truth
    }
}

/// Weighted-confusion mean IoU: every sample adds its weight to TP of its
/// class when correct, or to FP of the predicted class and FN of the true
/// class when wrong.
pub fn soft_mean_iou(
    pred: &[u32],
    truth: &[u32],
    weights: &[f64],
    num_classes: usize,
) -> Result<f64> {
    if pred.len() != truth.len() || weights.len() != truth.len() {
        return Err(Error::dims(
            "label/weight vectors",
            truth.len(),
            pred.len().min(weights.len()),
        ));
    }
    let mut acc = ConfusionAccumulator::new(num_classes);
    for ((&p, &t), &w) in pred.iter().zip(truth).zip(weights) {
        acc.push(t as usize, p as usize, w);
    }
    acc.mean_soft_iou()
}

pub fn soft_iou_eep(eeps: &[EepMatrix], ensemble: &Ensemble, samples: &SampleSet) -> Result<f64> {
    let dist = ensemble_distribution(eeps, ensemble)?;
    let y_star = argmax_predictions(&dist);
    let weights = soft_weights(&dist, samples, &y_star)?;
    soft_mean_iou(
        &y_star,
        samples.ground_truth(),
        &weights,
        samples.num_classes(),
    )
}

/// `sum_s P_s * N_s * C_s` over members.
pub fn base_score(metas: &[SourceMeta], ensemble: &Ensemble) -> Result<f64> {
    let mut acc = 0.0f64;
    for id in ensemble.members() {
        let m = metas
            .iter()
            .find(|m| &m.source_id == id)
            .ok_or_else(|| Error::UnknownSource(id.clone()))?;
        acc += base_term(m);
    }
    Ok(acc)
}

#[inline]
pub(crate) fn base_term(m: &SourceMeta) -> f64 {
    m.source_performance * m.source_size as f64 * m.source_classes as f64
}
