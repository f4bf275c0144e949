//! Rank and linear correlation between predicted transferability and actual
//! performance: hyperbolic weighted Kendall tau, Kendall tau-b and Pearson.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::csvio::{format_real, parse_real, read_records};
use crate::error::{Error, Result};
use crate::metrics::{Ensemble, Metric};
use crate::selection::ScoreTable;

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::dims("correlation inputs", xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::Invalid("correlation needs at least 2 points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("correlation inputs must be finite".into()));
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Sample Pearson correlation, two-pass.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_inputs(xs, ys)?;
    if is_constant(xs) || is_constant(ys) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn tied_pairs<T: Copy>(sorted: &[T], eq: impl Fn(T, T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(w[0], w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts pairs `i < j` with `v[i] > v[j]`, sorting `v` in the process.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall tau-b, `O(n log n)` (Knight's algorithm).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_inputs(xs, ys)?;
    let n = xs.len() as u64;
    let n0 = n * (n - 1) / 2;

    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let tie_x = tied_pairs(&order, |a, b| xs[a] == xs[b]);
    let tie_xy = tied_pairs(&order, |a, b| xs[a] == xs[b] && ys[a] == ys[b]);

    let mut y_seq: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let discordant = count_inversions(&mut y_seq, &mut Vec::with_capacity(xs.len()));
    // y_seq is now sorted.
    let tie_y = tied_pairs(&y_seq, |a, b| a == b);

    if tie_x == n0 || tie_y == n0 {
        return Err(Error::Degenerate("all values tied".into()));
    }
    let c_minus_d = n0 as i64 - tie_x as i64 - tie_y as i64 + tie_xy as i64 - 2 * discordant as i64;
    Ok(tau_b_ratio(c_minus_d, n0 - tie_x, n0 - tie_y))
}

/// `(C - D) / sqrt(untied_x * untied_y)`, clamped to [-1, 1].
pub(crate) fn tau_b_ratio(c_minus_d: i64, untied_x: u64, untied_y: u64) -> f64 {
    (c_minus_d as f64 / ((untied_x as f64) * (untied_y as f64)).sqrt()).clamp(-1.0, 1.0)
}

/// Competition ranks by `values` descending: tied values share the smallest
/// 0-based position of their tie group.
pub fn descending_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0; values.len()];
    let mut group_start = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && values[order[pos - 1]] != values[i] {
            group_start = pos;
        }
        ranks[i] = group_start;
    }
    ranks
}

struct Fenwick(Vec<i64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, pos: usize) {
        let mut i = pos + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions `< pos`.
    fn below(&self, pos: usize) -> i64 {
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// For every item `i`, `sum_j sign(p_i - p_j) * sign(a_i - a_j)`.
fn concordance_balance(predicted: &[f64], actual: &[f64]) -> Vec<i64> {
    let n = predicted.len();
    // Dense ranks of predicted values.
    let mut by_pred: Vec<usize> = (0..n).collect();
    by_pred.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));
    let mut prank = vec![0usize; n];
    let mut r = 0;
    for (pos, &i) in by_pred.iter().enumerate() {
        if pos > 0 && predicted[by_pred[pos - 1]] != predicted[i] {
            r += 1;
        }
        prank[i] = r;
    }

    let mut by_actual: Vec<usize> = (0..n).collect();
    by_actual.sort_by(|&a, &b| actual[a].total_cmp(&actual[b]));
    let groups: Vec<&[usize]> = by_actual
        .chunk_by(|&a, &b| actual[a] == actual[b])
        .collect();

    let mut balance = vec![0i64; n];
    let mut sweep = |groups: &mut dyn Iterator<Item = &&[usize]>, sign: i64| {
        let mut tree = Fenwick::new(r + 1);
        let mut inserted = 0i64;
        for group in groups {
            for &i in group.iter() {
                let less = tree.below(prank[i]);
                let greater = inserted - tree.below(prank[i] + 1);
                balance[i] += sign * (less - greater);
            }
            for &i in group.iter() {
                tree.add(prank[i]);
            }
            inserted += group.len() as i64;
        }
    };
    // Items with smaller actual: same-sign pairs when predicted is also smaller.
    sweep(&mut groups.iter(), 1);
    // Items with larger actual: concordant when predicted is larger.
    sweep(&mut groups.iter().rev(), -1);
    balance
}

/// Weighted Kendall tau with additive hyperbolic weights
/// `w_ij = 1/(r_i + 1) + 1/(r_j + 1)`, `r` the rank by `actual` descending.
/// Pairs tied in either vector add nothing to the numerator and their full
/// weight to the denominator.
///
/// Since `sum_{i<j} (h_i + h_j) s_ij = sum_i h_i sum_{j != i} s_ij`, the
/// numerator only needs each item's concordance balance, computed in
/// `O(n log n)`; the denominator is `(n - 1) sum_i h_i`.
pub fn weighted_kendall_tau(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_inputs(predicted, actual)?;
    if is_constant(predicted) || is_constant(actual) {
        return Err(Error::Degenerate("all values tied".into()));
    }
    let ranks = descending_ranks(actual);
    let balance = concordance_balance(predicted, actual);
    let mut numerator = 0.0f64;
    let mut weight_sum = 0.0f64;
    for (&r, &b) in ranks.iter().zip(&balance) {
        let h = 1.0 / (r as f64 + 1.0);
        numerator += h * b as f64;
        weight_sum += h;
    }
    let denominator = (predicted.len() - 1) as f64 * weight_sum;
    Ok((numerator / denominator).clamp(-1.0, 1.0))
}

/// Actual performance per ensemble key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceTable {
    rows: Vec<(Ensemble, f64)>,
}

impl PerformanceTable {
    pub fn new(rows: Vec<(Ensemble, f64)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (e, v) in &rows {
            if !seen.insert(e.clone()) {
                return Err(Error::Invalid(format!("duplicate performance key {e}")));
            }
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Invalid(format!(
                    "performance of {e} is {v}, outside [0, 1]"
                )));
            }
        }
        Ok(PerformanceTable { rows })
    }

    pub fn rows(&self) -> &[(Ensemble, f64)] {
        &self.rows
    }

    pub fn get(&self, ensemble: &Ensemble) -> Option<f64> {
        self.rows
            .iter()
            .find(|(e, _)| e == ensemble)
            .map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ensemble,actual_mean_iou\n");
        for (e, v) in &self.rows {
            let _ = writeln!(out, "{},{}", e.key(), format_real(*v));
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, records) = read_records(path)?;
        if header.len() < 2 || header[0] != "ensemble" || header[1] != "actual_mean_iou" {
            return Err(Error::format(
                path,
                "expected header ensemble,actual_mean_iou",
            ));
        }
        let rows = records
            .into_iter()
            .map(|r| {
                if r.len() < 2 {
                    return Err(Error::format(path, "expected at least 2 fields per row"));
                }
                Ok((r[0].parse::<Ensemble>()?, parse_real(path, &r[1])?))
            })
            .collect::<Result<_>>()?;
        Self::new(rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEntry {
    pub target: String,
    pub metric: Metric,
    /// `None` when the measure is undefined (constant input).
    pub weighted_tau: Option<f64>,
    pub tau: Option<f64>,
    pub pearson: Option<f64>,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationReport {
    pub fn entry(&self, metric: Metric) -> Option<&CorrelationEntry> {
        self.entries.iter().find(|e| e.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "degenerate".to_string(), format_real);
        let mut out = String::from("target,metric,weighted_tau,tau,pearson,n_pairs\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.target,
                e.metric.name(),
                cell(e.weighted_tau),
                cell(e.tau),
                cell(e.pearson),
                e.n_pairs
            );
        }
        out
    }
}

/// Paired (predicted, actual) values of one metric column, in table order.
pub fn paired_columns(
    table: &ScoreTable,
    performance: &PerformanceTable,
    metric: Metric,
) -> Result<Vec<(Ensemble, f64, f64)>> {
    let actual: HashMap<&Ensemble, f64> = performance.rows.iter().map(|(e, v)| (e, *v)).collect();
    let mut missing: Vec<String> = table
        .rows
        .iter()
        .filter(|r| !actual.contains_key(&r.ensemble))
        .map(|r| r.ensemble.key())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingKeys(missing));
    }
    let column = table.column(metric)?;
    Ok(table
        .rows
        .iter()
        .zip(column)
        .map(|(r, p)| (r.ensemble.clone(), p, actual[&r.ensemble]))
        .collect())
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// All three measures for every metric column of `table`.
pub fn correlation_report(
    table: &ScoreTable,
    performance: &PerformanceTable,
    target: &str,
) -> Result<CorrelationReport> {
    let mut entries = Vec::with_capacity(table.metrics.len());
    for &metric in &table.metrics {
        let pairs = paired_columns(table, performance, metric)?;
        let predicted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let actual: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        entries.push(CorrelationEntry {
            target: target.to_string(),
            metric,
            weighted_tau: defined(weighted_kendall_tau(&predicted, &actual))?,
            tau: defined(kendall_tau(&predicted, &actual))?,
            pearson: defined(pearson(&predicted, &actual))?,
            n_pairs: pairs.len(),
        });
    }
    Ok(CorrelationReport { entries })
}

/// Scatter data (`ensemble,predicted,actual`) for one metric.
pub fn scatter_csv(pairs: &[(Ensemble, f64, f64)]) -> String {
    let mut out = String::from("ensemble,predicted,actual\n");
    for (e, p, a) in pairs {
        let _ = writeln!(out, "{},{},{}", e.key(), format_real(*p), format_real(*a));
    }
    out
}

/// Position of an ensemble within the `actual`-descending order, ties by
/// ensemble key. Used to check how highly a metric's favourite really ranks.
pub fn actual_rank(pairs: &[(Ensemble, f64, f64)], target: &Ensemble) -> Option<usize> {
    let mut order: Vec<&(Ensemble, f64, f64)> = pairs.iter().collect();
    order.sort_by(|a, b| match b.2.total_cmp(&a.2) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    order.iter().position(|p| &p.0 == target)
}
