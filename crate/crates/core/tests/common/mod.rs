//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use eepsel::types::{LabelSpace, SampleSet, SourceMeta, SourcePredictions};
use rand::Rng;

pub fn random_samples(rng: &mut impl Rng, n: usize, k: usize) -> SampleSet {
    let gt = (0..n).map(|_| rng.gen_range(0..k as u32)).collect();
    SampleSet::new(LabelSpace::with_cardinality("target", k).unwrap(), gt).unwrap()
}

/// Rows of random positive weights, normalized in f64 and stored as f32.
pub fn random_predictions(rng: &mut impl Rng, id: &str, n: usize, zs: usize) -> SourcePredictions {
    let mut probs = Vec::with_capacity(n * zs);
    for _ in 0..n {
        let raw: Vec<f64> = (0..zs).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| (v / total) as f32));
    }
    SourcePredictions::new(
        id,
        LabelSpace::with_cardinality(format!("{id}_space"), zs).unwrap(),
        n,
        probs,
    )
    .unwrap()
}

pub fn meta(id: &str, performance: f64, size: u64, classes: u32) -> SourceMeta {
    SourceMeta {
        source_id: id.into(),
        dataset_name: format!("{id}_data"),
        architecture_tag: "arch".into(),
        pretraining_tag: "none".into(),
        source_performance: performance,
        source_size: size,
        source_classes: classes,
    }
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Tau-b from explicit pair counts.
pub fn brute_kendall(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let s = sign(x[i] - x[j]) * sign(y[i] - y[j]);
            if s > 0 {
                c += 1;
            } else if s < 0 {
                d += 1;
            }
            if x[i] == x[j] {
                tx += 1;
            }
            if y[i] == y[j] {
                ty += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    if tx == n0 || ty == n0 {
        return None;
    }
    Some((c - d) as f64 / (((n0 - tx) as f64) * ((n0 - ty) as f64)).sqrt())
}

/// Weighted tau straight from the pair definition, ranks by `actual`
/// descending (rank = number of strictly larger values).
pub fn brute_weighted_tau(predicted: &[f64], actual: &[f64]) -> Option<f64> {
    let n = actual.len();
    if predicted.iter().all(|&v| v == predicted[0]) || actual.iter().all(|&v| v == actual[0]) {
        return None;
    }
    let rank: Vec<usize> = (0..n)
        .map(|i| actual.iter().filter(|&&a| a > actual[i]).count())
        .collect();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            let w = 1.0 / (rank[i] as f64 + 1.0) + 1.0 / (rank[j] as f64 + 1.0);
            num += w * (sign(predicted[i] - predicted[j]) * sign(actual[i] - actual[j])) as f64;
            den += w;
        }
    }
    Some(num / den)
}

pub fn two_pass_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Random vector of length `n`; with `ties`, values come from a small set.
pub fn random_vector(rng: &mut impl Rng, n: usize, ties: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if ties {
                rng.gen_range(0..5) as f64 / 4.0
            } else {
                rng.gen::<f64>()
            }
        })
        .collect()
}
