//! Synthetic multi-label data with chain-structured label dependence.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{MultiLabelDataset, RngSeed};
use crate::error::{Error, Result};

/// Distance between the two class means of every feature, in units of its noise std.
pub const CLUSTER_SEPARATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub l: usize,
    /// Probability that label `j` copies label `j − 1`.
    pub dependence: f64,
    /// Probability that each label is flipped after the features are drawn.
    pub noise: f64,
    pub seed: RngSeed,
}

/// Draws a dataset from `spec`.
///
/// Label 0 is a fair coin; label `j` copies label `j − 1` with probability
/// `dependence` and is otherwise a fresh fair coin. Feature `m` belongs to
/// label `m mod l` and is normal with unit variance around
/// `±CLUSTER_SEPARATION / 2` depending on that label. Finally every label is
/// flipped with probability `noise`.
pub fn generate(spec: &SynthSpec) -> Result<MultiLabelDataset> {
    if spec.n == 0 || spec.d == 0 || spec.l == 0 {
        return Err(Error::Argument("n, d and l must all be positive".into()));
    }
    for (name, v) in [("dependence", spec.dependence), ("noise", spec.noise)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Argument(format!("{name} {v} outside [0, 1]")));
        }
    }
    let mut rng = spec.seed.rng();
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut labels = Array2::<u8>::zeros((spec.n, spec.l));
    let mut features = Array2::<f64>::zeros((spec.n, spec.d));
    for i in 0..spec.n {
        let mut prev = u8::from(rng.gen_bool(0.5));
        labels[[i, 0]] = prev;
        for j in 1..spec.l {
            let y = if rng.gen_bool(spec.dependence) {
                prev
            } else {
                u8::from(rng.gen_bool(0.5))
            };
            labels[[i, j]] = y;
            prev = y;
        }
        for m in 0..spec.d {
            let sign = if labels[[i, m % spec.l]] == 1 { 0.5 } else { -0.5 };
            features[[i, m]] = sign * CLUSTER_SEPARATION + unit.sample(&mut rng);
        }
        for j in 0..spec.l {
            if rng.gen_bool(spec.noise) {
                labels[[i, j]] ^= 1;
            }
        }
    }
    MultiLabelDataset::from_arrays(features, labels)
}
