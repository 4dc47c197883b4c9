//! Brute-force recomputations shared by property tests and the acceptance
//! runner. Nothing here calls into the library code it checks.

#![allow(dead_code)]

pub struct BruteMetrics {
    pub counts: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub weighted_f1: f64,
}

/// Direct recount from the label lists, one pass per class.
pub fn brute_metrics(k: usize, t: &[usize], p: &[usize]) -> BruteMetrics {
    let n = t.len();
    let mut counts = vec![vec![0u64; k]; k];
    for i in 0..n {
        counts[t[i]][p[i]] += 1;
    }
    let correct = t.iter().zip(p).filter(|(a, b)| a == b).count();
    let mut precision = vec![0.0; k];
    let mut recall = vec![0.0; k];
    let mut f1 = vec![0.0; k];
    let mut support = vec![0u64; k];
    let mut weighted_f1 = 0.0;
    for c in 0..k {
        let tp = (0..n).filter(|&i| t[i] == c && p[i] == c).count();
        let fp = (0..n).filter(|&i| t[i] != c && p[i] == c).count();
        let fneg = (0..n).filter(|&i| t[i] == c && p[i] != c).count();
        precision[c] = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        recall[c] = if tp + fneg == 0 {
            0.0
        } else {
            tp as f64 / (tp + fneg) as f64
        };
        let s = precision[c] + recall[c];
        f1[c] = if s == 0.0 {
            0.0
        } else {
            2.0 * precision[c] * recall[c] / s
        };
        support[c] = (tp + fneg) as u64;
        weighted_f1 += (tp + fneg) as f64 / n as f64 * f1[c];
    }
    BruteMetrics {
        counts,
        accuracy: correct as f64 / n as f64,
        precision,
        recall,
        f1,
        support,
        weighted_f1,
    }
}

/// L1 distance between the class proportions of two count vectors.
pub fn l1_divergence(a: &[u64], b: &[u64]) -> f64 {
    let (sa, sb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / sa - y as f64 / sb).abs())
        .sum()
}

/// Smallest divergence over every assignment of whole blocks that leaves
/// both sides non-empty.
pub fn exhaustive_split_divergence(hists: &[Vec<u64>]) -> f64 {
    let n = hists.len();
    let k = hists[0].len();
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << n) - 1 {
        let mut t = vec![0u64; k];
        let mut v = vec![0u64; k];
        for (i, h) in hists.iter().enumerate() {
            let dst = if mask >> i & 1 == 1 { &mut v } else { &mut t };
            dst.iter_mut().zip(h).for_each(|(a, &b)| *a += b);
        }
        best = best.min(l1_divergence(&t, &v));
    }
    best
}

/// Mean and population standard deviation by the two-pass formula.
pub fn two_pass_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
