//! Per-label conditioning: random undersampling of the majority class and
//! correlation-based feature selection.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::dataset::{MultiLabelDataset, RngSeed};
use crate::error::{Error, Result};

/// The binary problem of one label: features, the label's column, and the
/// rows of the parent dataset they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelView {
    pub label: usize,
    pub features: Array2<f64>,
    pub target: Vec<u8>,
    pub source_rows: Vec<usize>,
}

impl LabelView {
    pub fn from_dataset(ds: &MultiLabelDataset, label: usize) -> Result<Self> {
        if label >= ds.n_labels() {
            return Err(Error::Argument(format!(
                "label {label} out of range for {} labels",
                ds.n_labels()
            )));
        }
        Ok(Self {
            label,
            features: ds.features().clone(),
            target: ds.labels().column(label).to_vec(),
            source_rows: (0..ds.n_rows()).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn positives(&self) -> usize {
        self.target.iter().filter(|&&v| v == 1).count()
    }

    /// Keeps only the rows at `positions` (indices into this view).
    pub fn retain(&self, positions: &[usize]) -> Self {
        Self {
            label: self.label,
            features: self.features.select(Axis(0), positions),
            target: positions.iter().map(|&p| self.target[p]).collect(),
            source_rows: positions.iter().map(|&p| self.source_rows[p]).collect(),
        }
    }
}

/// Random undersampling of the majority class down to `ceil(max_ir · minority)` rows.
///
/// Views at or below the ratio, or with an empty class, are returned unchanged.
pub fn undersample(view: &LabelView, max_ir: f64, seed: RngSeed) -> Result<LabelView> {
    if !(max_ir >= 1.0) {
        return Err(Error::Argument(format!("max imbalance ratio {max_ir} is below 1")));
    }
    let pos = view.positives();
    let neg = view.n_rows() - pos;
    let (minority, majority, majority_class) = if pos <= neg { (pos, neg, 0u8) } else { (neg, pos, 1u8) };
    if minority == 0 || (majority as f64) / (minority as f64) <= max_ir {
        return Ok(view.clone());
    }
    let keep = ((max_ir * minority as f64).ceil() as usize).min(majority);
    let majority_rows: Vec<usize> = (0..view.n_rows())
        .filter(|&i| view.target[i] == majority_class)
        .collect();
    let mut rng = seed.rng();
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, majority, keep)
        .into_iter()
        .map(|k| majority_rows[k])
        .collect();
    chosen.extend((0..view.n_rows()).filter(|&i| view.target[i] != majority_class));
    chosen.sort_unstable();
    Ok(view.retain(&chosen))
}

/// Selected feature columns for one label, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSubset {
    pub indices: Vec<usize>,
    pub target_label: usize,
}

impl FeatureSubset {
    pub fn new(indices: Vec<usize>, target_label: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Argument("feature subset must not be empty".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!(
                "feature subset {indices:?} is not strictly increasing"
            )));
        }
        Ok(Self {
            indices,
            target_label,
        })
    }

    /// Every column of a `d`-feature space.
    pub fn all(d: usize, target_label: usize) -> Self {
        Self {
            indices: (0..d).collect(),
            target_label,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Centers a column and scales it to unit Euclidean norm; constant columns become zero.
fn unit_centered(col: ArrayView1<f64>) -> Array1<f64> {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let centered = col.mapv(|v| v - mean);
    let norm = centered.dot(&centered).sqrt();
    if norm > 0.0 && col.iter().any(|&v| v != col[0]) {
        centered / norm
    } else {
        Array1::zeros(col.len())
    }
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    unit_centered(a).dot(&unit_centered(b))
}

/// CFS merit `k·r̄_ct / sqrt(k + k(k−1)·r̄_cc)` written with sums:
/// `Σ r_ct / sqrt(k + 2·Σ_pairs r_cc)`.
pub fn cfs_merit(k: usize, sum_target_corr: f64, sum_pair_corr: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let den = (k as f64 + 2.0 * sum_pair_corr).sqrt();
    if den > 0.0 {
        sum_target_corr / den
    } else {
        0.0
    }
}

/// Greedy forward correlation-based feature selection, then a random cap.
///
/// Each step adds the feature that maximizes the merit of the enlarged set and
/// the search stops at the first step that fails to improve it. Correlations
/// are absolute Pearson values. When nothing improves on the empty set, the
/// single feature most correlated with the target is kept.
pub fn select_features(view: &LabelView, cap: usize, seed: RngSeed) -> Result<FeatureSubset> {
    if cap == 0 {
        return Err(Error::Argument("feature cap must be positive".into()));
    }
    let d = view.n_features();
    if d == 0 {
        return Err(Error::Argument("view has no features".into()));
    }
    if view.n_rows() == 0 {
        return Err(Error::Argument("view has no rows".into()));
    }
    let target = Array1::from_iter(view.target.iter().map(|&v| v as f64));
    let target = unit_centered(target.view());
    let cols: Vec<Array1<f64>> = view.features.columns().into_iter().map(unit_centered).collect();
    let target_corr: Vec<f64> = cols.iter().map(|c| c.dot(&target).abs()).collect();

    let mut chosen = vec![false; d];
    let mut selected = Vec::new();
    // Σ |r(f, s)| over selected s, per candidate f
    let mut pair_acc = vec![0.0f64; d];
    let mut sum_ct = 0.0;
    let mut sum_pairs = 0.0;
    let mut merit = 0.0;
    loop {
        let k = selected.len() + 1;
        let mut best: Option<(usize, f64)> = None;
        for f in (0..d).filter(|&f| !chosen[f]) {
            let m = cfs_merit(k, sum_ct + target_corr[f], sum_pairs + pair_acc[f]);
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((f, m));
            }
        }
        let Some((f, m)) = best else { break };
        if m <= merit {
            break;
        }
        merit = m;
        chosen[f] = true;
        selected.push(f);
        sum_ct += target_corr[f];
        sum_pairs += pair_acc[f];
        for g in (0..d).filter(|&g| !chosen[g]) {
            pair_acc[g] += cols[g].dot(&cols[f]).abs();
        }
    }

    if selected.is_empty() {
        let best = (0..d)
            .fold(0, |b, f| if target_corr[f] > target_corr[b] { f } else { b });
        selected.push(best);
    }
    if selected.len() > cap {
        let mut rng = seed.rng();
        selected = rand::seq::index::sample(&mut rng, selected.len(), cap)
            .into_iter()
            .map(|k| selected[k])
            .collect();
    }
    selected.sort_unstable();
    FeatureSubset::new(selected, view.label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn view(target: Vec<u8>, features: Array2<f64>) -> LabelView {
        LabelView {
            label: 0,
            source_rows: (0..target.len()).collect(),
            features,
            target,
        }
    }

    fn imbalanced(neg: usize, pos: usize) -> LabelView {
        let n = neg + pos;
        let target: Vec<u8> = (0..n).map(|i| u8::from(i >= neg)).collect();
        let f = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        view(target, f)
    }

    #[test]
    fn undersample_caps_ratio() {
        let out = undersample(&imbalanced(100, 2), 20.0, RngSeed(1)).unwrap();
        assert_eq!(out.positives(), 2);
        assert_eq!(out.n_rows() - out.positives(), 40);
        // source rows stay consistent with features
        for (i, &r) in out.source_rows.iter().enumerate() {
            assert_eq!(out.features[[i, 0]], r as f64);
        }
    }

    #[test]
    fn undersample_passes_through() {
        let v = imbalanced(30, 2);
        assert_eq!(undersample(&v, 20.0, RngSeed(1)).unwrap(), v);
        let v = imbalanced(100, 0);
        assert_eq!(undersample(&v, 20.0, RngSeed(1)).unwrap(), v);
    }

    #[test]
    fn undersample_positive_majority() {
        let n = 90;
        let target: Vec<u8> = (0..n).map(|i| u8::from(i >= 2)).collect();
        let v = view(target, Array2::zeros((n, 1)));
        let out = undersample(&v, 10.0, RngSeed(4)).unwrap();
        assert_eq!(out.n_rows() - out.positives(), 2);
        assert_eq!(out.positives(), 20);
    }

    #[test]
    fn undersample_invariants_on_random_fixtures() {
        let mut rng = RngSeed(99).rng();
        for case in 0..1000 {
            let n = rng.gen_range(1..200);
            let p: f64 = rng.gen_range(0.0..0.5);
            let target: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(p))).collect();
            // integral caps: ceil(max_ir · minority) is then exact
            let max_ir = rng.gen_range(1..30) as f64;
            let v = view(target, Array2::zeros((n, 1)));
            let out = undersample(&v, max_ir, RngSeed(case)).unwrap();
            let (pos, neg) = (v.positives(), n - v.positives());
            let minority = pos.min(neg);
            let (opos, oneg) = (out.positives(), out.n_rows() - out.positives());
            // minority rows are never removed
            if pos <= neg {
                assert_eq!(opos, pos);
            } else {
                assert_eq!(oneg, neg);
            }
            if minority > 0 {
                let ir = opos.max(oneg) as f64 / opos.min(oneg) as f64;
                assert!(ir <= max_ir.max(pos.max(neg) as f64 / minority as f64), "case {case}");
                assert!(ir <= max_ir || (opos, oneg) == (pos, neg), "case {case}");
                assert!(ir <= (pos.max(neg) as f64 / minority as f64) + 1e-12);
            }
        }
    }

    #[test]
    fn feature_identical_to_target_selected() {
        let mut rng = RngSeed(5).rng();
        let n = 20;
        let target: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let d = 6;
        let f = Array2::from_shape_fn((n, d), |(i, j)| {
            if j == 3 {
                target[i] as f64
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let v = view(target, f);
        let s = select_features(&v, 300, RngSeed(1)).unwrap();
        assert!(s.indices.contains(&3));
    }

    #[test]
    fn single_feature() {
        let v = view(vec![0, 1, 0], Array2::from_shape_vec((3, 1), vec![1.0, 1.0, 1.0]).unwrap());
        let s = select_features(&v, 300, RngSeed(1)).unwrap();
        assert_eq!(s.indices, vec![0]);
    }

    #[test]
    fn cap_applies() {
        // Orthogonal-ish features each weakly correlated with the target: all get selected.
        let n = 64;
        let d = 40;
        let target: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        let mut rng = RngSeed(11).rng();
        let f = Array2::from_shape_fn((n, d), |(i, _)| target[i] as f64 + rng.gen_range(-3.0..3.0));
        let v = view(target, f);
        let full = select_features(&v, 300, RngSeed(2)).unwrap();
        assert!(full.len() > 10, "selected {}", full.len());
        let capped = select_features(&v, 10, RngSeed(2)).unwrap();
        assert_eq!(capped.len(), 10);
        assert!(capped.indices.iter().all(|i| full.indices.contains(i)));
        assert_eq!(select_features(&v, 10, RngSeed(2)).unwrap(), capped);
    }

    #[test]
    fn merit_formula() {
        // k=2, r_ct = 0.5 each, r_cc = 0.25: 2·0.5 / sqrt(2 + 2·0.25)
        let m = cfs_merit(2, 1.0, 0.25);
        assert!((m - 1.0 / 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cfs_merit(1, 0.7, 0.0), 0.7);
    }
}
