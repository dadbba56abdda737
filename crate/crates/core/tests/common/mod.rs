//! Independent reference computations for dataset metrics.
#![allow(dead_code)]

use std::collections::BTreeMap;

use perpilot::Corpus;

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
pub fn counting_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let smaller = values.iter().filter(|w| *w < v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Pearson via raw sums.
pub fn raw_sum_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

pub fn oracle_dlc(corpus: &Corpus) -> f64 {
    let d: Vec<f64> = corpus.iter().map(|r| f64::from(r.difficulty.ordinal())).collect();
    let s: Vec<f64> = corpus.iter().map(|r| f64::from(r.min_steps)).collect();
    raw_sum_pearson(&counting_ranks(&d), &counting_ranks(&s))
}

/// Entropy in bits over `K = weights.len()`, normalized by log2 K.
pub fn oracle_entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let h: f64 = weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let p = w / total;
            -p * p.log2()
        })
        .sum();
    h / (weights.len() as f64).log2()
}

pub fn difficulty_weights(corpus: &Corpus) -> Vec<f64> {
    let mut counts = [0.0; 3];
    for r in corpus.iter() {
        counts[usize::from(r.difficulty.ordinal()) - 1] += 1.0;
    }
    counts.to_vec()
}

/// Occurrence count per app: each listed app of each record counts once.
pub fn app_occurrence_weights(corpus: &Corpus) -> BTreeMap<String, f64> {
    let mut w = BTreeMap::new();
    for r in corpus.iter() {
        for a in &r.apps {
            *w.entry(a.clone()).or_insert(0.0) += 1.0;
        }
    }
    w
}

/// Fractional count: a record spread evenly over the apps it lists.
pub fn app_fractional_weights(corpus: &Corpus) -> BTreeMap<String, f64> {
    let mut w = BTreeMap::new();
    for r in corpus.iter() {
        let share = 1.0 / r.apps.len() as f64;
        for a in &r.apps {
            *w.entry(a.clone()).or_insert(0.0) += share;
        }
    }
    w
}

pub fn values(map: &BTreeMap<String, f64>) -> Vec<f64> {
    map.values().copied().collect()
}
