//! Streaming evaluation of every size-S ensemble of a source pool.
//!
//! Samples are processed in fixed-size chunks. For each chunk the EEP rows of
//! every pool source are computed once, then every ensemble folds the chunk
//! into its own accumulators. Ensembles sharing their first `S - 1` members
//! form a group that sums the shared prefix once per chunk.
//!
//! Every accumulator receives samples in ascending order and member rows are
//! summed in ascending member order, so the output does not depend on the
//! chunk size or the number of workers, and matches the reference functions
//! in [`crate::metrics`] bit for bit.

use itertools::Itertools;
use rayon::prelude::*;

use crate::eep::{floored_ln, JointModel};
use crate::error::{Error, Result};
use crate::metrics::{soft_weight, ConfusionAccumulator};
use crate::types::{SampleSet, SourcePredictions};

pub const DEFAULT_MEMORY_BUDGET_BYTES: u64 = 2 << 30;
pub const DEFAULT_MAX_CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Worker threads; 0 uses the ambient rayon pool.
    pub workers: usize,
    pub memory_budget_bytes: u64,
    pub max_chunk_rows: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 0,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET_BYTES,
            max_chunk_rows: DEFAULT_MAX_CHUNK_ROWS,
        }
    }
}

/// Raw per-ensemble results, ensembles in lexicographic order of source
/// positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolScores {
    pub leep: Vec<f64>,
    pub ensembles: Vec<Vec<usize>>,
    pub e_leep: Vec<f64>,
    pub iou_eep: Vec<f64>,
    pub soft_iou_eep: Vec<f64>,
}

/// One source as seen by the engine: its predictions on the evaluated samples
/// and the joint model used to map them to the target space (fit on the same
/// samples for scoring, on a training split for held-out evaluation).
#[derive(Debug, Clone, Copy)]
pub struct EngineSource<'a> {
    pub predictions: &'a SourcePredictions,
    pub joint: &'a JointModel,
}

struct Group {
    prefix: Vec<usize>,
    first_last: usize,
    len: usize,
}

struct EnsembleAcc {
    log_sum: f64,
    confusion: ConfusionAccumulator,
}

fn groups_for(num_sources: usize, size: usize) -> Vec<Group> {
    (0..num_sources)
        .combinations(size - 1)
        .filter_map(|prefix| {
            let first_last = prefix.last().map_or(0, |&p| p + 1);
            (first_last < num_sources).then(|| Group {
                len: num_sources - first_last,
                prefix,
                first_last,
            })
        })
        .collect()
}

fn accumulator_bytes(num_classes: usize) -> u64 {
    let vec_header = 3 * std::mem::size_of::<usize>() as u64;
    (std::mem::size_of::<EnsembleAcc>() as u64) + 6 * (vec_header + 8 * num_classes as u64)
}

/// Picks the chunk row count that fits in the memory budget. Independent of
/// the worker count: per-worker scratch is charged for a fixed 64 workers.
fn chunk_rows(
    config: &EngineConfig,
    n: usize,
    num_sources: usize,
    num_classes: usize,
    num_ensembles: u64,
) -> Result<usize> {
    const SCRATCH_WORKERS: u64 = 64;
    let fixed = num_ensembles * accumulator_bytes(num_classes);
    let per_row = 8 * num_classes as u64 * (num_sources as u64 + SCRATCH_WORKERS);
    let budget = config.memory_budget_bytes;
    if budget < fixed + per_row {
        return Err(Error::Budget {
            budget,
            needed: fixed + per_row,
        });
    }
    let rows = ((budget - fixed) / per_row).min(n as u64) as usize;
    Ok(rows.clamp(1, config.max_chunk_rows.max(1)))
}

pub fn num_combinations(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

pub fn score_pool(
    samples: &SampleSet,
    sources: &[EngineSource<'_>],
    ensemble_size: usize,
    config: &EngineConfig,
) -> Result<PoolScores> {
    if config.workers == 0 {
        return score_pool_inner(samples, sources, ensemble_size, config);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
    pool.install(|| score_pool_inner(samples, sources, ensemble_size, config))
}

fn score_pool_inner(
    samples: &SampleSet,
    sources: &[EngineSource<'_>],
    size: usize,
    config: &EngineConfig,
) -> Result<PoolScores> {
    let n = samples.len();
    let k = samples.num_classes();
    let num_sources = sources.len();
    if size == 0 {
        return Err(Error::Invalid("ensemble size must be >= 1".into()));
    }
    if size > num_sources {
        return Err(Error::Invalid(format!(
            "ensemble size {size} exceeds pool size {num_sources}"
        )));
    }
    for src in sources {
        let id = src.predictions.source_id();
        if src.predictions.num_samples() != n {
            return Err(Error::dims(
                format!("samples of source {id}"),
                n,
                src.predictions.num_samples(),
            ));
        }
        if src.joint.target_classes() != k {
            return Err(Error::dims(
                format!("target classes of joint model {id}"),
                k,
                src.joint.target_classes(),
            ));
        }
        if src.joint.source_classes() != src.predictions.num_classes() {
            return Err(Error::dims(
                format!("source classes of {id}"),
                src.joint.source_classes(),
                src.predictions.num_classes(),
            ));
        }
    }

    let groups = groups_for(num_sources, size);
    let num_ensembles: usize = groups.iter().map(|g| g.len).sum();
    if num_ensembles as u64 != num_combinations(num_sources, size) {
        return Err(Error::Internal("ensemble grouping miscounted".into()));
    }
    let rows = chunk_rows(config, n, num_sources, k, num_ensembles as u64)?;

    let mut accs: Vec<EnsembleAcc> = (0..num_ensembles)
        .map(|_| EnsembleAcc {
            log_sum: 0.0,
            confusion: ConfusionAccumulator::new(k),
        })
        .collect();
    let mut leep_sums = vec![0.0f64; num_sources];
    let mut eep_chunk = vec![0.0f64; num_sources * rows * k];
    let gt = samples.ground_truth();
    let size_f = size as f64;

    let mut start = 0;
    while start < n {
        let len = rows.min(n - start);
        let chunk_gt = &gt[start..start + len];

        eep_chunk
            .par_chunks_mut(rows * k)
            .zip(leep_sums.par_iter_mut())
            .zip(sources.par_iter())
            .for_each(|((buf, leep_sum), src)| {
                let mut scratch = Vec::with_capacity(src.joint.source_classes());
                for (r, &y) in chunk_gt.iter().enumerate() {
                    let out = &mut buf[r * k..(r + 1) * k];
                    src.joint
                        .eep_row(src.predictions.row(start + r), &mut scratch, out);
                    *leep_sum += floored_ln(out[y as usize]);
                }
            });

        let eep_chunk = &eep_chunk;
        let source_rows = |s: usize| &eep_chunk[s * rows * k..s * rows * k + len * k];

        let mut slices: Vec<&mut [EnsembleAcc]> = Vec::with_capacity(groups.len());
        let mut rest: &mut [EnsembleAcc] = &mut accs;
        for g in &groups {
            let (head, tail) = rest.split_at_mut(g.len);
            slices.push(head);
            rest = tail;
        }

        groups.par_iter().zip(slices.into_par_iter()).for_each_init(
            || vec![0.0f64; rows * k],
            |prefix, (group, group_accs)| {
                let prefix = &mut prefix[..len * k];
                prefix.fill(0.0);
                for &m in &group.prefix {
                    for (a, &p) in prefix.iter_mut().zip(source_rows(m)) {
                        *a += p;
                    }
                }
                for (offset, acc) in group_accs.iter_mut().enumerate() {
                    let last = source_rows(group.first_last + offset);
                    let rows = prefix.chunks_exact(k).zip(last.chunks_exact(k));
                    for ((head, tail), &y) in rows.zip(chunk_gt) {
                        // Same values and tie rule as `ensemble_row` + `argmax`.
                        let mut predicted = 0;
                        let mut best = f64::NEG_INFINITY;
                        for (c, (&a, &b)) in head.iter().zip(tail).enumerate() {
                            let v = (a + b) / size_f;
                            if v > best {
                                best = v;
                                predicted = c;
                            }
                        }
                        let y = y as usize;
                        let p_truth = (head[y] + tail[y]) / size_f;
                        acc.log_sum += floored_ln(p_truth);
                        acc.confusion
                            .push(y, predicted, soft_weight(p_truth, predicted == y));
                    }
                }
            },
        );
        start += len;
    }

    let n_f = n as f64;
    let mut e_leep = Vec::with_capacity(num_ensembles);
    let mut iou_eep = Vec::with_capacity(num_ensembles);
    let mut soft_iou_eep = Vec::with_capacity(num_ensembles);
    for acc in &accs {
        e_leep.push(acc.log_sum / n_f);
        iou_eep.push(acc.confusion.mean_iou()?);
        soft_iou_eep.push(acc.confusion.mean_soft_iou()?);
    }
    let ensembles = groups
        .iter()
        .flat_map(|g| {
            (g.first_last..num_sources).map(move |last| {
                let mut members = g.prefix.clone();
                members.push(last);
                members
            })
        })
        .collect();
    Ok(PoolScores {
        leep: leep_sums.into_iter().map(|s| s / n_f).collect(),
        ensembles,
        e_leep,
        iou_eep,
        soft_iou_eep,
    })
}
