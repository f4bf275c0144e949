mod common;

use common::*;
use eepsel::bundle::{load_bundle, write_bundle};
use eepsel::correlation::{kendall_tau, pearson, weighted_kendall_tau};
use eepsel::csvio::format_real;
use eepsel::eep::{eep_matrix, empirical_joint, leep};
use eepsel::metrics::Metric;
use eepsel::sampler::{class_frequencies, sample_pixels, LabelRaster};
use eepsel::selection::{preselect_sources, score_all, PreselectParams, ScoreConfig, SourcePool};
use eepsel::types::{LabelSpace, SampleSet};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn distinct_vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::hash_set(-1000i32..1000, 2..max_len)
        .prop_map(|s| s.into_iter().map(|v| v as f64 / 7.0).collect())
}

fn distinct_pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (distinct_vector(max_len), any::<u64>()).prop_map(|(x, seed)| {
        let mut y = x.clone();
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let y = y.iter().map(|v| v * 3.0 + 1.0).collect();
        (x, y)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlations_are_bounded(
        x in prop::collection::vec(0u8..6, 2..40),
        y in prop::collection::vec(0u8..6, 2..40),
    ) {
        let n = x.len().min(y.len());
        let x: Vec<f64> = x[..n].iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = y[..n].iter().map(|&v| v as f64).collect();
        for v in [pearson(&x, &y), kendall_tau(&x, &y), weighted_kendall_tau(&x, &y)]
            .into_iter()
            .flatten()
        {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn antisymmetric_without_ties((x, y) in distinct_pair(30)) {
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(kendall_tau(&neg, &y).unwrap(), -kendall_tau(&x, &y).unwrap());
        prop_assert!((weighted_kendall_tau(&neg, &y).unwrap() + weighted_kendall_tau(&x, &y).unwrap()).abs() < 1e-12);
        prop_assert!((pearson(&neg, &y).unwrap() + pearson(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rank_measures_ignore_monotone_transforms((x, y) in distinct_pair(30)) {
        let tx: Vec<f64> = x.iter().map(|v| (v / 50.0).exp()).collect();
        let ty: Vec<f64> = y.iter().map(|v| v * v * v + 2.0).collect();
        prop_assert_eq!(kendall_tau(&tx, &ty).unwrap(), kendall_tau(&x, &y).unwrap());
        prop_assert_eq!(weighted_kendall_tau(&tx, &ty).unwrap(), weighted_kendall_tau(&x, &y).unwrap());
    }

    #[test]
    fn top_swap_outweighs_bottom_swap(n in 4usize..30) {
        let actual: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let mut top = actual.clone();
        top.swap(0, 1);
        let mut bottom = actual.clone();
        bottom.swap(n - 2, n - 1);
        prop_assert!(weighted_kendall_tau(&top, &actual).unwrap() < weighted_kendall_tau(&bottom, &actual).unwrap());
    }

    #[test]
    fn leep_is_non_positive_and_order_free(seed in any::<u64>(), n in 1usize..80, k in 2usize..5, zs in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_samples(&mut rng, n, k);
        let p = random_predictions(&mut rng, "p", n, zs);
        let jm = empirical_joint(&p, &s).unwrap();
        let score = leep(&eep_matrix(&p, &jm).unwrap(), &s).unwrap();
        prop_assert!(score <= 0.0);

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let gt: Vec<u32> = order.iter().map(|&i| s.ground_truth()[i]).collect();
        let probs: Vec<f32> = order.iter().flat_map(|&i| p.row(i).to_vec()).collect();
        let s2 = SampleSet::new(s.target_space().clone(), gt).unwrap();
        let p2 = eepsel::SourcePredictions::new("p", p.space().clone(), n, probs).unwrap();
        let jm2 = empirical_joint(&p2, &s2).unwrap();
        for y in 0..k {
            for z in 0..zs {
                prop_assert!((jm.joint(y, z) - jm2.joint(y, z)).abs() < 1e-12);
            }
        }
        let score2 = leep(&eep_matrix(&p2, &jm2).unwrap(), &s2).unwrap();
        prop_assert!((score - score2).abs() < 1e-12);
    }

    #[test]
    fn scores_respect_bounds_and_jensen(seed in any::<u64>(), size in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_samples(&mut rng, 60, 3);
        let preds: Vec<_> = (0..4).map(|j| random_predictions(&mut rng, &format!("s{j}"), 60, 3 + j)).collect();
        let metas: Vec<_> = preds.iter().map(|p| meta(p.source_id(), 0.5, 10, 3)).collect();
        let pool = SourcePool::from_metas(&metas, None).unwrap();
        let t = score_all(&s, &preds, &metas, &pool, size, &ScoreConfig::default()).unwrap();
        for r in &t.rows {
            let [ms, el, iou, soft, _base] = r.scores[..] else { unreachable!() };
            prop_assert!(ms <= 0.0 && el <= 0.0);
            prop_assert!((0.0..=1.0).contains(&iou) && (0.0..=1.0).contains(&soft));
            prop_assert!(el >= ms / size as f64 - 1e-9);
        }
    }

    #[test]
    fn bundle_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..30, sources in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_samples(&mut rng, n, 3);
        let preds: Vec<_> = (0..sources).map(|j| random_predictions(&mut rng, &format!("s{j}"), n, 2 + j)).collect();
        let metas: Vec<_> = preds.iter().map(|p| meta(p.source_id(), 0.25, 7, 4)).collect();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&s, &preds, &metas, dir.path()).unwrap();
        let b = load_bundle(dir.path()).unwrap();
        prop_assert_eq!(&b.samples, &s);
        prop_assert_eq!(&b.metas, &metas);
        prop_assert_eq!(b.predictions.len(), preds.len());
        for (a, p) in b.predictions.iter().zip(&preds) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a.probs()), bits(p.probs()));
            prop_assert_eq!(a.space(), p.space());
        }
    }

    #[test]
    fn sampler_is_deterministic_and_clean(seed in any::<u64>(), k in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rasters: Vec<LabelRaster> = (0..3)
            .map(|i| {
                let labels = (0..50).map(|_| rand::Rng::gen_range(&mut rng, 0..4)).map(|v| if v == 3 { 255 } else { v }).collect();
                LabelRaster::new(format!("img{i}"), 10, 5, labels, 255).unwrap()
            })
            .collect();
        let freqs = class_frequencies(&rasters, 3).unwrap();
        let a = sample_pixels(&rasters, k, &freqs, seed).unwrap();
        prop_assert_eq!(&a, &sample_pixels(&rasters, k, &freqs, seed).unwrap());
        for r in &rasters {
            let mine: Vec<_> = a.entries.iter().filter(|e| e.image_id == r.image_id).collect();
            let available = r.labels.iter().filter(|&&l| l != 255).count();
            prop_assert_eq!(mine.len(), k.min(available));
            let unique: HashSet<u32> = mine.iter().map(|e| e.pixel_index).collect();
            prop_assert_eq!(unique.len(), mine.len());
            prop_assert!(mine.windows(2).all(|w| w[0].pixel_index < w[1].pixel_index));
            for e in mine {
                prop_assert_eq!(r.labels[e.pixel_index as usize], e.label as i32);
            }
        }
    }

    #[test]
    fn preselection_is_distinct_and_seeded(seed in any::<u64>(), n_good in 0usize..4, n_random in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_samples(&mut rng, 30, 3);
        let preds: Vec<_> = (0..8).map(|j| random_predictions(&mut rng, &format!("s{j}"), 30, 3)).collect();
        let metas: Vec<_> = preds.iter().map(|p| meta(p.source_id(), 0.5, 10, 3)).collect();
        let pool = SourcePool::from_metas(&metas, None).unwrap();
        let cfg = ScoreConfig { metrics: Metric::TRANSFERABILITY.to_vec(), ..ScoreConfig::default() };
        let t = score_all(&s, &preds, &metas, &pool, 2, &cfg).unwrap();
        let params = PreselectParams { per_metric_top_k: 5, n_good, n_random, seed };
        let a = preselect_sources(&t, &params, &pool, &t.source_leep).unwrap();
        let all = a.all();
        prop_assert_eq!(all.len(), n_good + n_random);
        prop_assert_eq!(all.iter().collect::<HashSet<_>>().len(), all.len());
        prop_assert!(all.iter().all(|id| pool.ids().contains(id)));
        prop_assert_eq!(a, preselect_sources(&t, &params, &pool, &t.source_leep).unwrap());
    }

    #[test]
    fn formatted_reals_keep_nine_digits(v in -1e12f64..1e12) {
        let back: f64 = format_real(v).parse().unwrap();
        prop_assert!((back - v).abs() <= v.abs() * 5e-9);
    }
}

#[test]
fn label_spaces_survive_serialization() {
    let space = LabelSpace::new("t", vec!["road".into(), "sky".into()]).unwrap();
    let text = serde_json::to_string(&space).unwrap();
    assert_eq!(serde_json::from_str::<LabelSpace>(&text).unwrap(), space);
}
