//! Naive Bayes classifier chain that is trained once and evaluated under any
//! label order.
//!
//! Under the naive independence assumption, the chain classifier for label `i`
//! at any position only needs `P(Y_i = y)`, the class-conditional feature
//! densities `P(X_m | Y_i = y)`, and the label conditionals `P(Y_l | Y_i = y)`
//! for every other label `l`. None of those depend on the chain order, so all
//! of them are fitted up front and the order is supplied at prediction time.
//!
//! All products are accumulated in log space.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::MultiLabelDataset;
use crate::error::{Error, Result};
use crate::permutation::{LabelPermutation, Prediction};
use crate::preprocess::{FeatureSubset, LabelView};

/// Lower bound on every fitted variance.
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Default additive (Laplace) smoothing.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

const FORMAT_TAG: &str = "dynchain-nb-chain";
const FORMAT_VERSION: u32 = 1;

/// Normal density for one (label, class, feature) triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianEstimator {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianEstimator {
    /// Sample mean and population variance, floored at [`VARIANCE_FLOOR`].
    pub fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
        if n == 0 {
            return Self {
                mean: 0.0,
                variance: 1.0,
            };
        }
        let mean = sum / n as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Self {
            mean,
            variance: var.max(VARIANCE_FLOOR),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let diff = x - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - diff * diff / (2.0 * self.variance)
    }
}

/// `P(Y_l = 1 | Y_i = y)` for one ordered label pair and one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliTable {
    pub p_one: f64,
}

impl BernoulliTable {
    pub fn log_prob(&self, value: u8) -> f64 {
        if value == 1 {
            self.p_one.ln()
        } else {
            (1.0 - self.p_one).ln()
        }
    }
}

/// Trained estimators for a reorderable Naive Bayes chain.
#[derive(Debug, Clone, PartialEq)]
pub struct NbChainModel {
    n_features: usize,
    smoothing: f64,
    /// `priors[i][y] = P(Y_i = y)`.
    priors: Vec<[f64; 2]>,
    feature_subsets: Vec<FeatureSubset>,
    /// `feature_likelihoods[i][y][k]` models feature `feature_subsets[i].indices[k]`.
    feature_likelihoods: Vec<[Vec<GaussianEstimator>; 2]>,
    /// `label_conditionals[i][l][y] = P(Y_l = 1 | Y_i = y)`; `None` on the diagonal.
    label_conditionals: Vec<Vec<[Option<BernoulliTable>; 2]>>,
}

/// Fits every order-independent estimator of the chain.
///
/// `views[i]` is the (possibly undersampled) binary problem of label `i`; its
/// `source_rows` index into `train`, which supplies the other labels' values.
/// Every estimator of label `i` is fitted on `views[i]` only, restricted to the
/// columns in `subsets[i]`.
pub fn train_nb(
    train: &MultiLabelDataset,
    views: &[LabelView],
    subsets: &[FeatureSubset],
    smoothing: f64,
) -> Result<NbChainModel> {
    let l = train.n_labels();
    let d = train.n_features();
    if !(smoothing > 0.0) {
        return Err(Error::Argument(format!("smoothing {smoothing} must be positive")));
    }
    if views.len() != l || subsets.len() != l {
        return Err(Error::Argument(format!(
            "expected {l} label views and subsets, got {} and {}",
            views.len(),
            subsets.len()
        )));
    }

    let mut priors = Vec::with_capacity(l);
    let mut feature_likelihoods = Vec::with_capacity(l);
    let mut label_conditionals = Vec::with_capacity(l);
    for (i, (view, subset)) in views.iter().zip(subsets).enumerate() {
        if view.label != i || subset.target_label != i {
            return Err(Error::Argument(format!(
                "view/subset at position {i} belong to labels {}/{}",
                view.label, subset.target_label
            )));
        }
        if view.n_rows() == 0 {
            return Err(Error::Training {
                label: i,
                message: "label view has no rows".into(),
            });
        }
        if view.n_features() != d {
            return Err(Error::Training {
                label: i,
                message: format!("view has {} features, dataset has {d}", view.n_features()),
            });
        }
        if let Some(&bad) = subset.indices.iter().find(|&&j| j >= d) {
            return Err(Error::Training {
                label: i,
                message: format!("feature index {bad} out of range"),
            });
        }
        if let Some(&bad) = view.source_rows.iter().find(|&&r| r >= train.n_rows()) {
            return Err(Error::Training {
                label: i,
                message: format!("source row {bad} out of range"),
            });
        }

        let n = view.n_rows() as f64;
        let class_count = [(view.n_rows() - view.positives()) as f64, view.positives() as f64];
        priors.push([
            (class_count[0] + smoothing) / (n + 2.0 * smoothing),
            (class_count[1] + smoothing) / (n + 2.0 * smoothing),
        ]);

        let class_rows: [Vec<usize>; 2] = [0u8, 1u8].map(|y| {
            let rows: Vec<usize> = (0..view.n_rows()).filter(|&r| view.target[r] == y).collect();
            // An empty class shares the pooled fit, so features cancel in the argmax.
            if rows.is_empty() {
                (0..view.n_rows()).collect()
            } else {
                rows
            }
        });
        let likelihoods = [0, 1].map(|y| {
            subset
                .indices
                .iter()
                .map(|&j| {
                    GaussianEstimator::fit(class_rows[y].iter().map(|&r| view.features[[r, j]]))
                })
                .collect::<Vec<_>>()
        });
        feature_likelihoods.push(likelihoods);

        let mut cond = vec![[None, None]; l];
        for (other, slot) in cond.iter_mut().enumerate() {
            if other == i {
                continue;
            }
            let mut ones = [0.0f64; 2];
            for (pos, &src) in view.source_rows.iter().enumerate() {
                if train.labels()[[src, other]] == 1 {
                    ones[view.target[pos] as usize] += 1.0;
                }
            }
            *slot = [0, 1].map(|y| {
                Some(BernoulliTable {
                    p_one: (ones[y] + smoothing) / (class_count[y] + 2.0 * smoothing),
                })
            });
        }
        label_conditionals.push(cond);
    }

    Ok(NbChainModel {
        n_features: d,
        smoothing,
        priors,
        feature_subsets: subsets.to_vec(),
        feature_likelihoods,
        label_conditionals,
    })
}

fn two_class_softmax(lp: [f64; 2]) -> f64 {
    // P(y = 1) = 1 / (1 + exp(lp0 - lp1))
    1.0 / (1.0 + (lp[0] - lp[1]).exp())
}

fn decide(lp: [f64; 2]) -> u8 {
    // ties go to 0
    u8::from(lp[1] > lp[0])
}

impl NbChainModel {
    pub fn n_labels(&self) -> usize {
        self.priors.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn prior(&self, label: usize, class: u8) -> f64 {
        self.priors[label][class as usize]
    }

    pub fn feature_subset(&self, label: usize) -> &FeatureSubset {
        &self.feature_subsets[label]
    }

    pub fn feature_subsets(&self) -> &[FeatureSubset] {
        &self.feature_subsets
    }

    /// Estimators of label `label`, class `class`, aligned with its feature subset.
    pub fn feature_likelihoods(&self, label: usize, class: u8) -> &[GaussianEstimator] {
        &self.feature_likelihoods[label][class as usize]
    }

    /// `P(Y_other = 1 | Y_label = class)`, `None` when `other == label`.
    pub fn label_conditional(&self, label: usize, other: usize, class: u8) -> Option<BernoulliTable> {
        self.label_conditionals[label][other][class as usize]
    }

    pub fn prior_entry_count(&self) -> usize {
        self.priors.len() * 2
    }

    pub fn gaussian_count(&self) -> usize {
        self.feature_likelihoods
            .iter()
            .map(|per_class| per_class[0].len() + per_class[1].len())
            .sum()
    }

    pub fn valid_conditional_count(&self) -> usize {
        self.label_conditionals
            .iter()
            .flatten()
            .flatten()
            .filter(|t| t.is_some())
            .count()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Argument(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// `log P(Y_i = y) + Σ_m log P(X_m = x_m | Y_i = y)` for every label, i.e.
    /// the binary-relevance log posterior up to the shared normalizer.
    pub fn br_log_terms(&self, x: &[f64]) -> Result<Vec<[f64; 2]>> {
        self.check_dim(x)?;
        Ok((0..self.n_labels())
            .map(|i| {
                let subset = &self.feature_subsets[i].indices;
                [0, 1].map(|y| {
                    let feat: f64 = self.feature_likelihoods[i][y]
                        .iter()
                        .zip(subset)
                        .map(|(g, &j)| g.log_density(x[j]))
                        .sum();
                    self.priors[i][y].ln() + feat
                })
            })
            .collect())
    }

    /// Unnormalized log posteriors of each label at the step where the chain
    /// ordered by `pi` decides it, indexed by label.
    pub fn chain_log_posteriors(&self, x: &[f64], pi: &LabelPermutation) -> Result<Vec<[f64; 2]>> {
        if pi.len() != self.n_labels() {
            return Err(Error::Argument(format!(
                "permutation covers {} labels, model has {}",
                pi.len(),
                self.n_labels()
            )));
        }
        let mut acc = self.br_log_terms(x)?;
        let mut out = vec![[0.0; 2]; self.n_labels()];
        for step in 0..pi.len() {
            let decided = pi.label_at(step);
            let lp = acc[decided];
            out[decided] = lp;
            let h = decide(lp);
            for &later in &pi.order()[step + 1..] {
                let tables = &self.label_conditionals[later][decided];
                for y in 0..2 {
                    acc[later][y] += tables[y].expect("off-diagonal").log_prob(h);
                }
            }
        }
        Ok(out)
    }

    pub fn predict_chain(&self, x: &[f64], pi: &LabelPermutation) -> Result<Prediction> {
        Ok(prediction_from(&self.chain_log_posteriors(x, pi)?))
    }

    pub fn predict_br(&self, x: &[f64]) -> Result<Prediction> {
        Ok(prediction_from(&self.br_log_terms(x)?))
    }

    /// Text serialization; see [`NbChainModel::from_text`].
    ///
    /// ```text
    /// dynchain-nb-chain 1
    /// labels <L>
    /// features <d>
    /// smoothing <s>
    /// subset <i> <k> <j1> ... <jk>
    /// prior <i> <P(Y_i=0)> <P(Y_i=1)>
    /// gaussian <i> <y> <feature> <mean> <variance>
    /// conditional <i> <l> <y> <P(Y_l=1|Y_i=y)>
    /// end
    /// ```
    ///
    /// One record per estimator; reals carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let l = self.n_labels();
        writeln!(s, "{FORMAT_TAG} {FORMAT_VERSION}").unwrap();
        writeln!(s, "labels {l}").unwrap();
        writeln!(s, "features {}", self.n_features).unwrap();
        writeln!(s, "smoothing {:.16e}", self.smoothing).unwrap();
        for (i, subset) in self.feature_subsets.iter().enumerate() {
            let idx: Vec<String> = subset.indices.iter().map(usize::to_string).collect();
            writeln!(s, "subset {i} {} {}", idx.len(), idx.join(" ")).unwrap();
        }
        for (i, p) in self.priors.iter().enumerate() {
            writeln!(s, "prior {i} {:.16e} {:.16e}", p[0], p[1]).unwrap();
        }
        for i in 0..l {
            for y in 0..2 {
                for (g, &j) in self.feature_likelihoods[i][y]
                    .iter()
                    .zip(&self.feature_subsets[i].indices)
                {
                    writeln!(s, "gaussian {i} {y} {j} {:.16e} {:.16e}", g.mean, g.variance).unwrap();
                }
            }
        }
        for i in 0..l {
            for other in 0..l {
                for y in 0..2 {
                    if let Some(t) = self.label_conditionals[i][other][y] {
                        writeln!(s, "conditional {i} {other} {y} {:.16e}", t.p_one).unwrap();
                    }
                }
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("unexpected end of model, expected {what}")))
        };
        let (_, head) = next("header")?;
        let expected = format!("{FORMAT_TAG} {FORMAT_VERSION}");
        if head != expected {
            return Err(Error::Format(format!("expected header {expected:?}, found {head:?}")));
        }
        let l: usize = keyed(next("labels")?, "labels")?;
        let d: usize = keyed(next("features")?, "features")?;
        let smoothing: f64 = keyed(next("smoothing")?, "smoothing")?;
        if l == 0 || d == 0 {
            return Err(Error::Format("label and feature counts must be positive".into()));
        }

        let mut subsets: Vec<Option<FeatureSubset>> = vec![None; l];
        let mut priors: Vec<Option<[f64; 2]>> = vec![None; l];
        let mut gaussians: Vec<[Vec<(usize, GaussianEstimator)>; 2]> =
            (0..l).map(|_| [Vec::new(), Vec::new()]).collect();
        let mut conds = vec![vec![[None, None]; l]; l];
        let mut ended = false;
        for (lineno, line) in lines {
            let err = |m: &str| Error::Format(format!("line {}: {m}: {line:?}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            let label_idx = |k: usize| -> Result<usize> {
                let v: usize = parse_field(&fields, k).map_err(|_| err("bad index"))?;
                if v >= l {
                    return Err(err("label index out of range"));
                }
                Ok(v)
            };
            let class_idx = |k: usize| -> Result<usize> {
                match fields.get(k) {
                    Some(&"0") => Ok(0),
                    Some(&"1") => Ok(1),
                    _ => Err(err("class must be 0 or 1")),
                }
            };
            match fields.first().copied() {
                Some("subset") => {
                    let i = label_idx(1)?;
                    let k: usize = parse_field(&fields, 2).map_err(|_| err("bad count"))?;
                    if fields.len() != 3 + k {
                        return Err(err("subset length mismatch"));
                    }
                    let idx = (0..k)
                        .map(|m| parse_field::<usize>(&fields, 3 + m).map_err(|_| err("bad index")))
                        .collect::<Result<Vec<_>>>()?;
                    if idx.iter().any(|&j| j >= d) {
                        return Err(err("feature index out of range"));
                    }
                    subsets[i] = Some(FeatureSubset::new(idx, i).map_err(|e| err(&e.to_string()))?);
                }
                Some("prior") => {
                    let i = label_idx(1)?;
                    let p0: f64 = parse_field(&fields, 2).map_err(|_| err("bad number"))?;
                    let p1: f64 = parse_field(&fields, 3).map_err(|_| err("bad number"))?;
                    priors[i] = Some([p0, p1]);
                }
                Some("gaussian") => {
                    let i = label_idx(1)?;
                    let y = class_idx(2)?;
                    let j: usize = parse_field(&fields, 3).map_err(|_| err("bad index"))?;
                    let mean: f64 = parse_field(&fields, 4).map_err(|_| err("bad number"))?;
                    let variance: f64 = parse_field(&fields, 5).map_err(|_| err("bad number"))?;
                    if !(variance >= VARIANCE_FLOOR) {
                        return Err(err("variance below floor"));
                    }
                    gaussians[i][y].push((j, GaussianEstimator { mean, variance }));
                }
                Some("conditional") => {
                    let i = label_idx(1)?;
                    let other = label_idx(2)?;
                    let y = class_idx(3)?;
                    let p_one: f64 = parse_field(&fields, 4).map_err(|_| err("bad number"))?;
                    if i == other || !(p_one > 0.0 && p_one < 1.0) {
                        return Err(err("invalid conditional entry"));
                    }
                    conds[i][other][y] = Some(BernoulliTable { p_one });
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                _ => return Err(err("unknown record")),
            }
        }
        if !ended {
            return Err(Error::Format("missing end record".into()));
        }

        let mut feature_subsets = Vec::with_capacity(l);
        let mut feature_likelihoods = Vec::with_capacity(l);
        let mut prior_table = Vec::with_capacity(l);
        for i in 0..l {
            let subset = subsets[i]
                .take()
                .ok_or_else(|| Error::Format(format!("missing subset for label {i}")))?;
            let p = priors[i].ok_or_else(|| Error::Format(format!("missing prior for label {i}")))?;
            if !(p[0] > 0.0 && p[1] > 0.0) || ((p[0] + p[1]) - 1.0).abs() > 1e-12 {
                return Err(Error::Format(format!("invalid prior for label {i}")));
            }
            prior_table.push(p);
            let per_class = [0, 1].map(|y| {
                let entries = &gaussians[i][y];
                let ordered: Option<Vec<GaussianEstimator>> = subset
                    .indices
                    .iter()
                    .map(|&j| entries.iter().find(|(f, _)| *f == j).map(|(_, g)| *g))
                    .collect();
                ordered.filter(|v| v.len() == entries.len())
            });
            let [Some(g0), Some(g1)] = per_class else {
                return Err(Error::Format(format!(
                    "gaussian records of label {i} do not match its subset"
                )));
            };
            feature_likelihoods.push([g0, g1]);
            feature_subsets.push(subset);
            for (other, cond) in conds[i].iter().enumerate() {
                let complete = cond.iter().all(Option::is_some);
                if (other != i) != complete {
                    return Err(Error::Format(format!(
                        "conditional table entry ({i}, {other}) incomplete"
                    )));
                }
            }
        }
        Ok(Self {
            n_features: d,
            smoothing,
            priors: prior_table,
            feature_subsets,
            feature_likelihoods,
            label_conditionals: conds,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_field<T: std::str::FromStr>(fields: &[&str], k: usize) -> std::result::Result<T, ()> {
    fields.get(k).ok_or(())?.parse().map_err(|_| ())
}

fn keyed<T: std::str::FromStr>((lineno, line): (usize, &str), key: &str) -> Result<T> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad {key} value {v:?}", lineno + 1))),
        _ => Err(Error::Format(format!(
            "line {}: expected `{key} <value>`, found {line:?}",
            lineno + 1
        ))),
    }
}

fn prediction_from(log_posteriors: &[[f64; 2]]) -> Prediction {
    Prediction {
        hard: log_posteriors.iter().map(|&lp| decide(lp)).collect(),
        scores: log_posteriors.iter().map(|&lp| two_class_softmax(lp)).collect(),
    }
}

/// Chain prediction under order `pi`; see [`NbChainModel::predict_chain`].
pub fn predict_chain_nb(model: &NbChainModel, x: &[f64], pi: &LabelPermutation) -> Result<Prediction> {
    model.predict_chain(x, pi)
}

/// Binary-relevance prediction (no label factors).
pub fn predict_br_nb(model: &NbChainModel, x: &[f64]) -> Result<Prediction> {
    model.predict_br(x)
}

/// Unconditioned views and full feature subsets for every label of `ds`.
pub fn plain_views(ds: &MultiLabelDataset) -> (Vec<LabelView>, Vec<FeatureSubset>) {
    let views = (0..ds.n_labels())
        .map(|i| LabelView::from_dataset(ds, i).expect("label in range"))
        .collect();
    let subsets = (0..ds.n_labels())
        .map(|i| FeatureSubset::all(ds.n_features(), i))
        .collect();
    (views, subsets)
}
