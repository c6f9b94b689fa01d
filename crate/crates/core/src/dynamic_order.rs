//! Per-query chain order from a fuzzy, locally weighted F1 score.
//!
//! Every validation row belongs to the neighbourhood of a query with
//! membership `exp(−β·δ²)`. For each label, the binary-relevance decisions on
//! the validation set are tallied into fuzzy TP/FP/FN counts (sigma-count
//! cardinality), the local F1 is computed from them, and labels are chained in
//! descending order of local F1.

use ndarray::Array2;

use crate::dataset::MultiLabelDataset;
use crate::error::{Error, Result};
use crate::permutation::LabelPermutation;

/// Validation rows, their true labels and the binary-relevance decisions on them.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCache {
    validation: MultiLabelDataset,
    br_predictions: Array2<u8>,
}

impl ValidationCache {
    pub fn new(validation: MultiLabelDataset, br_predictions: Array2<u8>) -> Result<Self> {
        if br_predictions.dim() != validation.labels().dim() {
            return Err(Error::Argument(format!(
                "BR prediction matrix {:?} does not match validation labels {:?}",
                br_predictions.dim(),
                validation.labels().dim()
            )));
        }
        if br_predictions.iter().any(|&v| v > 1) {
            return Err(Error::Argument("BR predictions must be 0 or 1".into()));
        }
        Ok(Self {
            validation,
            br_predictions,
        })
    }

    /// Runs `predict` once per validation row to fill the BR decisions.
    pub fn from_predictor<F>(validation: MultiLabelDataset, mut predict: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<u8>>,
    {
        let (n, l) = validation.labels().dim();
        let mut br = Array2::zeros((n, l));
        for i in 0..n {
            let h = predict(validation.feature_row(i))?;
            if h.len() != l {
                return Err(Error::Argument("BR predictor returned wrong label count".into()));
            }
            br.row_mut(i).assign(&ndarray::ArrayView1::from(&h));
        }
        Self::new(validation, br)
    }

    pub fn validation(&self) -> &MultiLabelDataset {
        &self.validation
    }

    pub fn br_predictions(&self) -> &Array2<u8> {
        &self.br_predictions
    }

    pub fn n_rows(&self) -> usize {
        self.validation.n_rows()
    }

    pub fn n_labels(&self) -> usize {
        self.validation.n_labels()
    }
}

/// `exp(−β·‖query − point‖²)`.
pub fn membership(query: &[f64], point: &[f64], beta: f64) -> Result<f64> {
    if query.len() != point.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            query.len(),
            point.len()
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta {beta} must be positive")));
    }
    let sq: f64 = query.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-beta * sq).exp())
}

/// Membership of every validation row in the neighbourhood of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyNeighborhood {
    pub memberships: Vec<f64>,
    /// `None` for the crisp neighbourhood (every membership 1).
    pub beta: Option<f64>,
}

impl FuzzyNeighborhood {
    pub fn around(cache: &ValidationCache, query: &[f64], beta: f64) -> Result<Self> {
        let v = cache.validation();
        if query.len() != v.n_features() {
            return Err(Error::Argument(format!(
                "query has {} features, validation set has {}",
                query.len(),
                v.n_features()
            )));
        }
        let memberships = (0..v.n_rows())
            .map(|n| membership(query, v.feature_row(n), beta))
            .collect::<Result<_>>()?;
        Ok(Self {
            memberships,
            beta: Some(beta),
        })
    }

    /// The `β → 0⁺` limit: all of the validation set with membership 1.
    pub fn crisp(n_rows: usize) -> Self {
        Self {
            memberships: vec![1.0; n_rows],
            beta: None,
        }
    }
}

/// Fuzzy confusion counts of one label around a query.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalCounts {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
}

/// Sigma-count tallies of label `l` under the given neighbourhood.
pub fn local_counts_in(cache: &ValidationCache, l: usize, nbhd: &FuzzyNeighborhood) -> Result<LocalCounts> {
    if l >= cache.n_labels() {
        return Err(Error::Argument(format!("label {l} out of range")));
    }
    if nbhd.memberships.len() != cache.n_rows() {
        return Err(Error::Argument("neighbourhood size differs from validation set".into()));
    }
    let truth = cache.validation().labels().column(l);
    let pred = cache.br_predictions().column(l);
    let mut c = LocalCounts::default();
    for ((&mu, &y), &h) in nbhd.memberships.iter().zip(truth).zip(pred) {
        match (y, h) {
            (1, 1) => c.tp += mu,
            (0, 1) => c.fp += mu,
            (1, 0) => c.fn_ += mu,
            _ => {}
        }
    }
    Ok(c)
}

pub fn local_counts(cache: &ValidationCache, l: usize, query: &[f64], beta: f64) -> Result<LocalCounts> {
    let nbhd = FuzzyNeighborhood::around(cache, query, beta)?;
    local_counts_in(cache, l, &nbhd)
}

/// `2tp / (2tp + fp + fn)`, or 0 when the denominator vanishes.
pub fn local_f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    let den = 2.0 * tp + fp + fn_;
    if den > 0.0 {
        2.0 * tp / den
    } else {
        0.0
    }
}

/// Local F1 of every label under one neighbourhood.
pub fn label_scores_in(cache: &ValidationCache, nbhd: &FuzzyNeighborhood) -> Result<Vec<f64>> {
    (0..cache.n_labels())
        .map(|l| local_counts_in(cache, l, nbhd).map(|c| local_f1(c.tp, c.fp, c.fn_)))
        .collect()
}

pub fn label_scores(cache: &ValidationCache, query: &[f64], beta: f64) -> Result<Vec<f64>> {
    label_scores_in(cache, &FuzzyNeighborhood::around(cache, query, beta)?)
}

/// Labels sorted by score, highest first; equal scores keep ascending label order.
pub fn permutation_from_scores(scores: &[f64]) -> LabelPermutation {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    LabelPermutation::new(order).expect("sorted range")
}

/// Chain order for one query.
pub fn dynamic_permutation(cache: &ValidationCache, query: &[f64], beta: f64) -> Result<LabelPermutation> {
    Ok(permutation_from_scores(&label_scores(cache, query, beta)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cache() -> ValidationCache {
        let v = MultiLabelDataset::from_arrays(
            array![[0.0], [1.0], [2.0], [3.0]],
            array![[1u8, 0], [1, 1], [0, 1], [0, 0]],
        )
        .unwrap();
        ValidationCache::new(v, array![[1u8, 0], [0, 1], [1, 1], [0, 1]]).unwrap()
    }

    #[test]
    fn membership_values() {
        assert_eq!(membership(&[1.0, 2.0], &[1.0, 2.0], 3.0).unwrap(), 1.0);
        assert!((membership(&[0.0], &[1.0], 1.0).unwrap() - 0.36787944117144233).abs() < 1e-15);
        assert!((membership(&[0.0], &[5.0], 1e-300).unwrap() - 1.0).abs() < 1e-15);
        assert!(membership(&[0.0], &[1.0, 2.0], 1.0).is_err());
        assert!(membership(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn crisp_counts_match_confusion() {
        let c = cache();
        let crisp = FuzzyNeighborhood::crisp(4);
        // label 0: truth 1,1,0,0 vs pred 1,0,1,0
        let k = local_counts_in(&c, 0, &crisp).unwrap();
        assert_eq!((k.tp, k.fp, k.fn_), (1.0, 1.0, 1.0));
        // label 1: truth 0,1,1,0 vs pred 0,1,1,1
        let k = local_counts_in(&c, 1, &crisp).unwrap();
        assert_eq!((k.tp, k.fp, k.fn_), (2.0, 1.0, 0.0));
    }

    #[test]
    fn single_row_false_negative() {
        let v = MultiLabelDataset::from_arrays(array![[0.0]], array![[1u8]]).unwrap();
        let c = ValidationCache::new(v, array![[0u8]]).unwrap();
        let beta = 2.0f64.ln();
        let k = local_counts(&c, 0, &[1.0], beta).unwrap();
        assert_eq!(k.tp, 0.0);
        assert_eq!(k.fp, 0.0);
        assert!((k.fn_ - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_classifier_has_no_errors() {
        let v = MultiLabelDataset::from_arrays(array![[0.0], [1.0]], array![[1u8], [0]]).unwrap();
        let c = ValidationCache::new(v, array![[1u8], [0]]).unwrap();
        let k = local_counts(&c, 0, &[0.3], 1.0).unwrap();
        assert_eq!((k.fp, k.fn_), (0.0, 0.0));
    }

    #[test]
    fn f1_values() {
        assert_eq!(local_f1(1.0, 0.0, 0.0), 1.0);
        assert_eq!(local_f1(1.0, 1.0, 1.0), 0.5);
        assert_eq!(local_f1(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn ordering() {
        assert_eq!(permutation_from_scores(&[0.9, 0.2, 0.5]).order(), &[0, 2, 1]);
        assert_eq!(permutation_from_scores(&[0.3; 4]), LabelPermutation::identity(4));
        assert_eq!(permutation_from_scores(&[0.0]), LabelPermutation::identity(1));
    }

    #[test]
    fn scale_invariance() {
        let c = cache();
        let nbhd = FuzzyNeighborhood::around(&c, &[1.2], 0.7).unwrap();
        let scaled = FuzzyNeighborhood {
            memberships: nbhd.memberships.iter().map(|m| m * 0.125).collect(),
            beta: None,
        };
        let a = label_scores_in(&c, &nbhd).unwrap();
        let b = label_scores_in(&c, &scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(permutation_from_scores(&a), permutation_from_scores(&b));
    }
}
