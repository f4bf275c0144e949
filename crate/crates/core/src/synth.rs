//! Synthetic targets, synthetic source models and a held-out performance
//! oracle, for exercising the whole pipeline without trained networks.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{correlation_report, CorrelationReport, PerformanceTable};
use crate::eep::EepMatrix;
use crate::engine::{score_pool, EngineConfig, EngineSource};
use crate::error::{Error, Result};
use crate::metrics::{iou_eep, Ensemble, Metric};
use crate::selection::{
    fit_joint_models, run_with_workers, score_all, ScoreConfig, ScoreTable, SourcePool,
};
use crate::types::{validate_id, LabelSpace, SampleSet, SourceMeta, SourcePredictions};

pub const SYNTHETIC_DATASET: &str = "synthetic";
const PRIOR_TOLERANCE: f64 = 1e-9;

/// Draws `n` labels i.i.d. from `prior`.
pub fn gen_target(num_classes: usize, n: usize, prior: &[f64], seed: u64) -> Result<SampleSet> {
    if prior.len() != num_classes {
        return Err(Error::dims("class prior", num_classes, prior.len()));
    }
    if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Invalid(
            "class prior has a negative or non-finite entry".into(),
        ));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOLERANCE {
        return Err(Error::Invalid(format!(
            "class prior sums to {total}, not 1"
        )));
    }
    let dist =
        WeightedIndex::new(prior).map_err(|e| Error::Invalid(format!("class prior: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = (0..n).map(|_| dist.sample(&mut rng) as u32).collect();
    SampleSet::new(LabelSpace::with_cardinality("target", num_classes)?, gt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSourceSpec {
    pub source_id: String,
    /// Source class predicted for each target class.
    pub label_map: Vec<u32>,
    pub source_classes: usize,
    pub noise: f64,
    /// Seed the label map was drawn from.
    pub seed: u64,
}

impl SyntheticSourceSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        validate_id("source", &self.source_id)?;
        if self.label_map.len() != num_classes {
            return Err(Error::dims(
                format!("label map of {}", self.source_id),
                num_classes,
                self.label_map.len(),
            ));
        }
        if self.source_classes == 0
            || self
                .label_map
                .iter()
                .any(|&z| z as usize >= self.source_classes)
        {
            return Err(Error::Invalid(format!(
                "label map of {} points outside {} source classes",
                self.source_id, self.source_classes
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Invalid(format!(
                "noise of {} is {}, outside [0, 1]",
                self.source_id, self.noise
            )));
        }
        Ok(())
    }
}

/// Surjective map of `num_classes` target classes onto `source_classes`
/// source classes: a random balanced merge.
pub fn random_label_map(num_classes: usize, source_classes: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets: Vec<usize> = (0..num_classes).collect();
    let mut sources: Vec<u32> = (0..source_classes as u32).collect();
    targets.shuffle(&mut rng);
    sources.shuffle(&mut rng);
    let mut map = vec![0; num_classes];
    for (j, &y) in targets.iter().enumerate() {
        map[y] = sources[j % source_classes];
    }
    map
}

/// `p(z|x_i) = (1 - noise) * onehot(label_map[y_i]) + noise / |Z|`.
pub fn gen_source(spec: &SyntheticSourceSpec, samples: &SampleSet) -> Result<SourcePredictions> {
    spec.validate(samples.num_classes())?;
    let zs = spec.source_classes;
    let floor = spec.noise / zs as f64;
    let peak = ((1.0 - spec.noise) + floor) as f32;
    let floor = floor as f32;
    let mut probs = vec![floor; samples.len() * zs];
    for (row, &y) in probs.chunks_exact_mut(zs).zip(samples.ground_truth()) {
        row[spec.label_map[y as usize] as usize] = peak;
    }
    SourcePredictions::new(
        spec.source_id.clone(),
        LabelSpace::with_cardinality(format!("{}_space", spec.source_id), zs)?,
        samples.len(),
        probs,
    )
}

/// Stand-in metadata for BASE.
pub fn synthetic_meta(spec: &SyntheticSourceSpec) -> SourceMeta {
    SourceMeta {
        source_id: spec.source_id.clone(),
        dataset_name: SYNTHETIC_DATASET.into(),
        architecture_tag: "synthetic".into(),
        pretraining_tag: "none".into(),
        source_performance: 1.0 - spec.noise / 2.0,
        source_size: 1000,
        source_classes: spec.source_classes as u32,
    }
}

/// Held-out mean IoU of the ensemble's argmax EEP predictions, where the EEP
/// matrices come from joint models fit on the training split.
pub fn oracle_performance(
    ensemble: &Ensemble,
    heldout_eeps: &[EepMatrix],
    heldout: &SampleSet,
) -> Result<f64> {
    iou_eep(heldout_eeps, ensemble, heldout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSeeds {
    pub train: u64,
    pub heldout: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub num_classes: usize,
    pub n_train: usize,
    pub n_heldout: usize,
    pub class_prior: Vec<f64>,
    pub sources: Vec<SyntheticSourceSpec>,
    pub ensemble_size: usize,
    pub seeds: BenchSeeds,
}

/// Geometric prior: each class `ratio` times as likely as the previous one.
pub fn geometric_prior(num_classes: usize, ratio: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..num_classes).map(|c| ratio.powi(c as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

impl BenchConfig {
    /// `num_sources` sources with noise evenly spread over
    /// `[noise_lo, noise_hi]`, each merging the target classes into a random
    /// number of source classes in `[num_classes / 2, num_classes - 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn spread(
        num_sources: usize,
        num_classes: usize,
        n_train: usize,
        n_heldout: usize,
        ensemble_size: usize,
        noise_lo: f64,
        noise_hi: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let min_classes = (num_classes / 2).max(1);
        let step = if num_sources > 1 {
            (noise_hi - noise_lo) / (num_sources - 1) as f64
        } else {
            0.0
        };
        let sources = (0..num_sources)
            .map(|i| {
                let source_classes = rng.gen_range(min_classes..num_classes.max(min_classes + 1));
                let map_seed = rng.gen();
                SyntheticSourceSpec {
                    source_id: format!("syn{i:02}"),
                    label_map: random_label_map(num_classes, source_classes, map_seed),
                    source_classes,
                    noise: noise_lo + step * i as f64,
                    seed: map_seed,
                }
            })
            .collect();
        BenchConfig {
            num_classes,
            n_train,
            n_heldout,
            class_prior: geometric_prior(num_classes, 0.8),
            sources,
            ensemble_size,
            seeds: BenchSeeds {
                train: seed.wrapping_mul(2).wrapping_add(1),
                heldout: seed.wrapping_mul(2).wrapping_add(2),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_heldout == 0 {
            return Err(Error::Invalid("n_train and n_heldout must be >= 1".into()));
        }
        if self.ensemble_size == 0 || self.sources.len() < self.ensemble_size {
            return Err(Error::Invalid(format!(
                "need at least ensemble_size = {} source specs, have {}",
                self.ensemble_size,
                self.sources.len()
            )));
        }
        for s in &self.sources {
            s.validate(self.num_classes)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub train: SampleSet,
    pub train_predictions: Vec<SourcePredictions>,
    pub heldout: SampleSet,
    pub heldout_predictions: Vec<SourcePredictions>,
    pub metas: Vec<SourceMeta>,
    pub table: ScoreTable,
    pub performance: PerformanceTable,
    pub report: CorrelationReport,
}

/// Generates both splits, scores every ensemble on the training split,
/// computes the held-out oracle for each and correlates the two.
pub fn run_benchmark(
    config: &BenchConfig,
    metrics: &[Metric],
    engine: &EngineConfig,
) -> Result<BenchRun> {
    config.validate()?;
    let train = gen_target(
        config.num_classes,
        config.n_train,
        &config.class_prior,
        config.seeds.train,
    )?;
    let heldout = gen_target(
        config.num_classes,
        config.n_heldout,
        &config.class_prior,
        config.seeds.heldout,
    )?;
    let generate = |set: &SampleSet| -> Result<Vec<SourcePredictions>> {
        config
            .sources
            .par_iter()
            .map(|s| gen_source(s, set))
            .collect()
    };
    let (train_predictions, heldout_predictions) = run_with_workers(engine.workers, || {
        Ok((generate(&train)?, generate(&heldout)?))
    })?;
    let metas: Vec<SourceMeta> = config.sources.iter().map(synthetic_meta).collect();

    let pool = SourcePool::from_metas(&metas, None)?;
    let score_config = ScoreConfig {
        metrics: metrics.to_vec(),
        engine: engine.clone(),
    };
    let table = score_all(
        &train,
        &train_predictions,
        &metas,
        &pool,
        config.ensemble_size,
        &score_config,
    )?;
    let performance = oracle_table(
        &train,
        &train_predictions,
        &heldout,
        &heldout_predictions,
        &pool,
        config.ensemble_size,
        engine,
    )?;
    let report = correlation_report(&table, &performance, SYNTHETIC_DATASET)?;
    Ok(BenchRun {
        train,
        train_predictions,
        heldout,
        heldout_predictions,
        metas,
        table,
        performance,
        report,
    })
}

/// Held-out oracle for every ensemble of `pool`, in enumeration order.
pub fn oracle_table(
    train: &SampleSet,
    train_predictions: &[SourcePredictions],
    heldout: &SampleSet,
    heldout_predictions: &[SourcePredictions],
    pool: &SourcePool,
    ensemble_size: usize,
    engine: &EngineConfig,
) -> Result<PerformanceTable> {
    let find = |preds: &'_ [SourcePredictions], id: &str| -> Result<usize> {
        preds
            .iter()
            .position(|p| p.source_id() == id)
            .ok_or_else(|| Error::UnknownSource(id.to_string()))
    };
    let mut train_refs = Vec::with_capacity(pool.len());
    let mut heldout_refs = Vec::with_capacity(pool.len());
    for id in pool.ids() {
        train_refs.push(&train_predictions[find(train_predictions, id)?]);
        heldout_refs.push(&heldout_predictions[find(heldout_predictions, id)?]);
    }
    let joints = run_with_workers(engine.workers, || fit_joint_models(&train_refs, train))?;
    let sources: Vec<EngineSource> = heldout_refs
        .iter()
        .zip(&joints)
        .map(|(&predictions, joint)| EngineSource { predictions, joint })
        .collect();
    let raw = score_pool(heldout, &sources, ensemble_size, engine)?;
    let rows = raw
        .ensembles
        .iter()
        .zip(raw.iou_eep)
        .map(|(members, iou)| {
            let ensemble = Ensemble::from_sorted_unchecked(
                members.iter().map(|&m| pool.ids()[m].clone()).collect(),
            );
            (ensemble, iou)
        })
        .collect();
    PerformanceTable::new(rows)
}
