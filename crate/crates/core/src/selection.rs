//! Ensemble enumeration, whole-pool scoring, ranking and candidate-source
//! pre-selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio::{format_real, parse_real, read_records};
use crate::eep::{empirical_joint, JointModel};
use crate::engine::{score_pool, EngineConfig, EngineSource};
use crate::error::{Error, Result};
use crate::metrics::{base_score, ms_leep, Ensemble, Metric};
use crate::types::{validate_id, SampleSet, SourceMeta, SourcePredictions};

pub const DEFAULT_ENSEMBLE_SIZE: usize = 3;
pub const DEFAULT_PER_METRIC_TOP_K: usize = 10;
pub const DEFAULT_N_GOOD: usize = 5;
pub const DEFAULT_N_RANDOM: usize = 10;

/// Distinct source ids, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePool {
    ids: Vec<String>,
}

impl SourcePool {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        for id in &ids {
            validate_id("source", id)?;
        }
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!("pool lists {:?} twice", w[0])));
        }
        Ok(SourcePool { ids })
    }

    /// Every source in `metas`, minus those trained on `exclude_dataset`.
    pub fn from_metas(metas: &[SourceMeta], exclude_dataset: Option<&str>) -> Result<Self> {
        Self::new(
            metas
                .iter()
                .filter(|m| exclude_dataset != Some(m.dataset_name.as_str()))
                .map(|m| m.source_id.clone()),
        )
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// All `C(N, S)` ensembles of the pool in lexicographic order.
pub fn enumerate_ensembles(
    pool: &SourcePool,
    size: usize,
) -> Result<impl Iterator<Item = Ensemble> + '_> {
    if size == 0 || size > pool.len() {
        return Err(Error::Invalid(format!(
            "ensemble size {size} must be in [1, {}]",
            pool.len()
        )));
    }
    Ok(pool
        .ids
        .iter()
        .cloned()
        .combinations(size)
        .map(Ensemble::from_sorted_unchecked))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub ensemble: Ensemble,
    /// One value per entry of [`ScoreTable::metrics`].
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ensemble_size: usize,
    pub pool_size: usize,
    pub metrics: Vec<Metric>,
    pub rows: Vec<ScoreRow>,
    /// Single-source LEEP of every pool member, when known.
    pub source_leep: BTreeMap<String, f64>,
}

impl ScoreTable {
    fn column_index(&self, metric: Metric) -> Result<usize> {
        self.metrics
            .iter()
            .position(|&m| m == metric)
            .ok_or_else(|| Error::UnknownMetric(metric.name().to_string()))
    }

    pub fn column(&self, metric: Metric) -> Result<Vec<f64>> {
        let j = self.column_index(metric)?;
        Ok(self.rows.iter().map(|r| r.scores[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ensemble");
        for m in &self.metrics {
            out.push(',');
            out.push_str(m.name());
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.ensemble.key());
            for &v in &row.scores {
                out.push(',');
                out.push_str(&format_real(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn source_leep_csv(&self) -> String {
        let mut out = String::from("source_id,leep\n");
        for (id, v) in &self.source_leep {
            let _ = writeln!(out, "{id},{}", format_real(*v));
        }
        out
    }

    /// Reads a score table written by [`ScoreTable::to_csv`]. Columns other
    /// than `ensemble` must be metric names.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, records) = read_records(path)?;
        if header.first().map(String::as_str) != Some("ensemble") {
            return Err(Error::format(path, "first column must be \"ensemble\""));
        }
        let metrics = header[1..]
            .iter()
            .map(|h| h.parse::<Metric>())
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::with_capacity(records.len());
        let mut members = BTreeSet::new();
        let mut size = None;
        for rec in records {
            if rec.len() != header.len() {
                return Err(Error::format(
                    path,
                    format!("row has {} fields, header has {}", rec.len(), header.len()),
                ));
            }
            let ensemble: Ensemble = rec[0].parse()?;
            if *size.get_or_insert(ensemble.size()) != ensemble.size() {
                return Err(Error::format(path, "rows mix ensemble sizes"));
            }
            members.extend(ensemble.members().iter().cloned());
            let scores = rec[1..]
                .iter()
                .map(|f| parse_real(path, f))
                .collect::<Result<_>>()?;
            rows.push(ScoreRow { ensemble, scores });
        }
        Ok(ScoreTable {
            ensemble_size: size.unwrap_or(0),
            pool_size: members.len(),
            metrics,
            rows,
            source_leep: BTreeMap::new(),
        })
    }
}

pub fn read_source_leep(path: &Path) -> Result<BTreeMap<String, f64>> {
    let (header, records) = read_records(path)?;
    if header != ["source_id", "leep"] {
        return Err(Error::format(path, "expected header source_id,leep"));
    }
    records
        .into_iter()
        .map(|r| {
            if r.len() != 2 {
                return Err(Error::format(path, "expected 2 fields per row"));
            }
            Ok((r[0].clone(), parse_real(path, &r[1])?))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScoreConfig {
    pub metrics: Vec<Metric>,
    pub engine: EngineConfig,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            metrics: Metric::ALL.to_vec(),
            engine: EngineConfig::default(),
        }
    }
}

/// Fits one joint model per source, in parallel.
pub fn fit_joint_models(
    predictions: &[&SourcePredictions],
    samples: &SampleSet,
) -> Result<Vec<JointModel>> {
    predictions
        .par_iter()
        .map(|p| empirical_joint(p, samples))
        .collect()
}

/// Scores every size-`ensemble_size` ensemble of `pool`.
pub fn score_all(
    samples: &SampleSet,
    predictions: &[SourcePredictions],
    metas: &[SourceMeta],
    pool: &SourcePool,
    ensemble_size: usize,
    config: &ScoreConfig,
) -> Result<ScoreTable> {
    if config.metrics.is_empty() {
        return Err(Error::Invalid("no metrics requested".into()));
    }
    let by_id: HashMap<&str, &SourcePredictions> =
        predictions.iter().map(|p| (p.source_id(), p)).collect();
    let pool_preds: Vec<&SourcePredictions> = pool
        .ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownSource(id.clone()))
        })
        .collect::<Result<_>>()?;
    if config.metrics.contains(&Metric::Base) {
        for id in pool.ids() {
            if !metas.iter().any(|m| &m.source_id == id) {
                return Err(Error::UnknownSource(format!("{id} (no metadata for BASE)")));
            }
        }
    }
    if ensemble_size == 0 || ensemble_size > pool.len() {
        return Err(Error::Invalid(format!(
            "ensemble size {ensemble_size} must be in [1, {}]",
            pool.len()
        )));
    }

    let joints = run_with_workers(config.engine.workers, || {
        fit_joint_models(&pool_preds, samples)
    })?;
    let sources: Vec<EngineSource> = pool_preds
        .iter()
        .zip(&joints)
        .map(|(&predictions, joint)| EngineSource { predictions, joint })
        .collect();
    let raw = score_pool(samples, &sources, ensemble_size, &config.engine)?;

    let leep_map: HashMap<String, f64> = pool
        .ids()
        .iter()
        .cloned()
        .zip(raw.leep.iter().copied())
        .collect();
    let mut rows = Vec::with_capacity(raw.ensembles.len());
    for (e, members) in raw.ensembles.iter().enumerate() {
        let ensemble = Ensemble::from_sorted_unchecked(
            members.iter().map(|&m| pool.ids()[m].clone()).collect(),
        );
        let mut scores = Vec::with_capacity(config.metrics.len());
        for &metric in &config.metrics {
            scores.push(match metric {
                Metric::MsLeep => ms_leep(&leep_map, &ensemble)?,
                Metric::ELeep => raw.e_leep[e],
                Metric::IouEep => raw.iou_eep[e],
                Metric::SoftIouEep => raw.soft_iou_eep[e],
                Metric::Base => base_score(metas, &ensemble)?,
            });
        }
        rows.push(ScoreRow { ensemble, scores });
    }
    Ok(ScoreTable {
        ensemble_size,
        pool_size: pool.len(),
        metrics: config.metrics.clone(),
        rows,
        source_leep: leep_map.into_iter().collect(),
    })
}

pub(crate) fn run_with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?
        .install(f)
}

/// Ensembles ordered by one metric, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub metric: Metric,
    pub entries: Vec<(Ensemble, f64)>,
}

impl RankedList {
    pub fn to_csv(&self) -> String {
        let mut out = format!("rank,ensemble,{}\n", self.metric.name());
        for (i, (e, v)) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, e.key(), format_real(*v));
        }
        out
    }
}

/// The `k` best ensembles by `metric`; equal scores are ordered by ensemble.
pub fn top_k(table: &ScoreTable, metric: Metric, k: usize) -> Result<RankedList> {
    let j = table.column_index(metric)?;
    let mut order: Vec<usize> = (0..table.rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&table.rows[a], &table.rows[b]);
        rb.scores[j]
            .total_cmp(&ra.scores[j])
            .then_with(|| ra.ensemble.cmp(&rb.ensemble))
    });
    order.truncate(k);
    Ok(RankedList {
        metric,
        entries: order
            .into_iter()
            .map(|i| (table.rows[i].ensemble.clone(), table.rows[i].scores[j]))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preselection {
    /// Most frequent members of top-ranked ensembles, best first.
    pub good: Vec<String>,
    /// Uniformly drawn from the rest of the pool, sorted.
    pub random: Vec<String>,
    /// Occurrence count of every pool source in the top lists.
    pub frequency: BTreeMap<String, usize>,
}

impl Preselection {
    pub fn all(&self) -> Vec<String> {
        self.good.iter().chain(&self.random).cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct PreselectParams {
    pub per_metric_top_k: usize,
    pub n_good: usize,
    pub n_random: usize,
    pub seed: u64,
}

impl Default for PreselectParams {
    fn default() -> Self {
        PreselectParams {
            per_metric_top_k: DEFAULT_PER_METRIC_TOP_K,
            n_good: DEFAULT_N_GOOD,
            n_random: DEFAULT_N_RANDOM,
            seed: 0,
        }
    }
}

/// Counts how often each pool source appears in the top ensembles of every
/// transferability metric in the table, keeps the `n_good` most frequent
/// (ties: higher single-source LEEP, then id) and adds `n_random` others drawn
/// uniformly with `seed`.
pub fn preselect_sources(
    table: &ScoreTable,
    params: &PreselectParams,
    pool: &SourcePool,
    source_leep: &BTreeMap<String, f64>,
) -> Result<Preselection> {
    let wanted = params.n_good + params.n_random;
    if wanted > pool.len() {
        return Err(Error::Invalid(format!(
            "pre-selection needs {wanted} sources, pool has {}",
            pool.len()
        )));
    }
    let metrics: Vec<Metric> = Metric::TRANSFERABILITY
        .into_iter()
        .filter(|m| table.metrics.contains(m))
        .collect();
    if metrics.is_empty() {
        return Err(Error::Invalid(
            "score table has no transferability metric columns".into(),
        ));
    }

    let mut frequency: BTreeMap<String, usize> =
        pool.ids().iter().map(|id| (id.clone(), 0)).collect();
    for metric in metrics {
        for (ensemble, _) in top_k(table, metric, params.per_metric_top_k)?.entries {
            for id in ensemble.members() {
                if let Some(c) = frequency.get_mut(id) {
                    *c += 1;
                }
            }
        }
    }

    let mut ranked: Vec<&String> = pool.ids().iter().collect();
    let leep_of = |id: &str| source_leep.get(id).copied().unwrap_or(f64::NEG_INFINITY);
    ranked.sort_by(|a, b| {
        frequency[*b]
            .cmp(&frequency[*a])
            .then_with(|| leep_of(b).total_cmp(&leep_of(a)))
            .then_with(|| a.cmp(b))
    });
    let good: Vec<String> = ranked[..params.n_good]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut rest: Vec<String> = pool
        .ids()
        .iter()
        .filter(|id| !good.contains(id))
        .cloned()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (drawn, _) = rest.partial_shuffle(&mut rng, params.n_random);
    let mut random = drawn.to_vec();
    random.sort();

    Ok(Preselection {
        good,
        random,
        frequency,
    })
}
