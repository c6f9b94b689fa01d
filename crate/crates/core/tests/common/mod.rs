//! Brute-force reference implementations used by the integration tests.
#![allow(dead_code)]

use dynchain::dataset::MultiLabelDataset;
use dynchain::knn_chain::KnnChainModel;
use dynchain::preprocess::{FeatureSubset, LabelView};
use dynchain::synth::{generate, SynthSpec};
use dynchain::{LabelPermutation, RngSeed};
use statrs::distribution::{Continuous, Normal};

pub fn synth(n: usize, d: usize, l: usize, dependence: f64, noise: f64, seed: u64) -> MultiLabelDataset {
    generate(&SynthSpec {
        n,
        d,
        l,
        dependence,
        noise,
        seed: RngSeed(seed),
    })
    .unwrap()
}

/// Retrains, for every step of `pi`, a Naive Bayes classifier whose inputs are
/// the label's selected features plus the labels decided earlier in the chain,
/// then runs greedy chain inference. Returns `[log P(y=0, ·), log P(y=1, ·)]`
/// per label (unnormalized) and the hard decisions.
///
/// The classifier for label `j` is fitted on the rows of `views[j]` with
/// Laplace smoothing 1, population variances floored at 1e-9, and the pooled
/// rows standing in for an empty class.
pub fn extended_nb_chain(
    train: &MultiLabelDataset,
    views: &[LabelView],
    subsets: &[FeatureSubset],
    pi: &LabelPermutation,
    x: &[f64],
) -> (Vec<[f64; 2]>, Vec<u8>) {
    let l = train.n_labels();
    let mut hard = vec![0u8; l];
    let mut out = vec![[0.0; 2]; l];
    let mut decided: Vec<usize> = Vec::new();
    for &j in pi.order() {
        let rows = &views[j].source_rows;
        let target: Vec<u8> = rows.iter().map(|&r| train.labels()[[r, j]]).collect();
        let n = rows.len() as f64;
        let mut lp = [0.0f64; 2];
        for y in 0..2u8 {
            let class_rows: Vec<usize> = rows
                .iter()
                .zip(&target)
                .filter(|(_, &t)| t == y)
                .map(|(&r, _)| r)
                .collect();
            let count = class_rows.len() as f64;
            let fit_rows = if class_rows.is_empty() { rows.clone() } else { class_rows.clone() };
            let mut score = ((count + 1.0) / (n + 2.0)).ln();
            for &f in &subsets[j].indices {
                let vals: Vec<f64> = fit_rows.iter().map(|&r| train.features()[[r, f]]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).max(1e-9);
                score += Normal::new(m, var.sqrt()).unwrap().ln_pdf(x[f]);
            }
            for &prev in &decided {
                let ones = class_rows.iter().filter(|&&r| train.labels()[[r, prev]] == 1).count() as f64;
                let p_one = (ones + 1.0) / (count + 2.0);
                score += if hard[prev] == 1 { p_one.ln() } else { (1.0 - p_one).ln() };
            }
            lp[y as usize] = score;
        }
        out[j] = lp;
        hard[j] = u8::from(lp[1] > lp[0]);
        decided.push(j);
    }
    (out, hard)
}

/// Chain inference computing, at every step, all distances in the extended
/// space, fully sorting them (ties by row index) and voting among the first `r`.
pub fn full_sort_knn_chain(model: &KnnChainModel, pi: &LabelPermutation, x: &[f64]) -> (Vec<u8>, Vec<f64>) {
    let train = model.train();
    let l = train.n_labels();
    let r = model.r();
    let mut hard = vec![0u8; l];
    let mut scores = vec![0.0; l];
    for step in 0..l {
        let mut dist: Vec<(f64, usize)> = (0..train.n_rows())
            .map(|n| {
                let feat: f64 = x
                    .iter()
                    .zip(train.feature_row(n))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let lab: f64 = pi.order()[..step]
                    .iter()
                    .map(|&p| (f64::from(hard[p]) - f64::from(train.labels()[[n, p]])).powi(2))
                    .sum();
                ((feat + lab).sqrt(), n)
            })
            .collect();
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let label = pi.label_at(step);
        let positives = dist[..r].iter().filter(|(_, n)| train.labels()[[*n, label]] == 1).count();
        scores[label] = positives as f64 / r as f64;
        hard[label] = u8::from(positives * 2 > r);
    }
    (hard, scores)
}
