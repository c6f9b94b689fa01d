//! Bagged committees of chain classifiers.
//!
//! Every member is trained on its own bag of the training data: the bag is
//! standardized, split into a fitting part and a validation part, each label's
//! binary problem is undersampled and feature-selected (Naive Bayes base), the
//! base model is fitted, and binary-relevance decisions on the validation part
//! are cached for dynamic ordering. Members vote with hard decisions; a label
//! is relevant when strictly more than half of the members say so.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;

use crate::dataset::{
    bag_rows, load_csv, save_csv, split_train_validation, standardize, MultiLabelDataset, RngSeed,
    StandardizationParams,
};
use crate::dynamic_order::{dynamic_permutation, ValidationCache};
use crate::error::{Error, Result};
use crate::knn_chain::KnnChainModel;
use crate::kv;
use crate::nb_chain::{train_nb, NbChainModel};
use crate::permutation::{LabelPermutation, Prediction};
use crate::preprocess::{select_features, undersample, LabelView};
use crate::tuning;

const MANIFEST: &str = "manifest.txt";
const FORMAT_TAG: &str = "dynchain-ensemble 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseModel {
    NaiveBayes,
    NearestNeighbour,
}

impl fmt::Display for BaseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseModel::NaiveBayes => "nb",
            BaseModel::NearestNeighbour => "knn",
        })
    }
}

impl FromStr for BaseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb" | "naive_bayes" => Ok(BaseModel::NaiveBayes),
            "knn" | "nearest_neighbour" => Ok(BaseModel::NearestNeighbour),
            other => Err(Error::Argument(format!("unknown base model {other:?} (nb|knn)"))),
        }
    }
}

/// How each member picks its label order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ordering {
    /// Per query, by descending local F1 on the member's validation part.
    Dynamic,
    /// One random order per member, drawn at build time (ECC).
    Random,
    /// The same order for every member; `None` is the identity.
    Fixed(Option<LabelPermutation>),
    /// No chaining: every label decided independently.
    BinaryRelevance,
}

impl Ordering {
    pub fn name(&self) -> &'static str {
        match self {
            Ordering::Dynamic => "dynamic",
            Ordering::Random => "random",
            Ordering::Fixed(_) => "fixed",
            Ordering::BinaryRelevance => "br",
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(Ordering::Dynamic),
            "random" | "ecc" => Ok(Ordering::Random),
            "fixed" => Ok(Ordering::Fixed(None)),
            "br" => Ok(Ordering::BinaryRelevance),
            other => Err(Error::Argument(format!(
                "unknown ordering {other:?} (dynamic|random|fixed|br)"
            ))),
        }
    }
}

/// A hyperparameter given explicitly or tuned by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tunable<T> {
    Tune,
    Value(T),
}

impl<T: fmt::Display> fmt::Display for Tunable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tunable::Tune => f.write_str("tune"),
            Tunable::Value(v) => v.fmt(f),
        }
    }
}

impl<T: FromStr> FromStr for Tunable<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "tune" {
            return Ok(Tunable::Tune);
        }
        s.parse()
            .map(Tunable::Value)
            .map_err(|_| Error::Argument(format!("expected a number or `tune`, got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub k: usize,
    pub bag_fraction: f64,
    /// Fraction of each bag used for fitting; the rest is the validation part.
    pub split_ratio: f64,
    pub max_ir: f64,
    pub feature_cap: usize,
    pub smoothing: f64,
    pub base: BaseModel,
    pub ordering: Ordering,
    pub beta: Tunable<f64>,
    pub r: Tunable<usize>,
    pub seed: RngSeed,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            k: 20,
            bag_fraction: 0.66,
            split_ratio: 0.6,
            max_ir: 20.0,
            feature_cap: 300,
            smoothing: crate::nb_chain::DEFAULT_SMOOTHING,
            base: BaseModel::NaiveBayes,
            ordering: Ordering::Dynamic,
            beta: Tunable::Tune,
            r: Tunable::Tune,
            seed: RngSeed(0),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Argument("ensemble size k must be at least 1".into()));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(Error::Argument(format!("bag fraction {} outside (0, 1]", self.bag_fraction)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Argument(format!("split ratio {} outside (0, 1)", self.split_ratio)));
        }
        if !(self.max_ir >= 1.0) {
            return Err(Error::Argument(format!("max imbalance ratio {} below 1", self.max_ir)));
        }
        if self.feature_cap == 0 {
            return Err(Error::Argument("feature cap must be positive".into()));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::Argument("smoothing must be positive".into()));
        }
        if let Tunable::Value(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Argument(format!("beta {b} must be positive")));
            }
        }
        if self.r == Tunable::Value(0) {
            return Err(Error::Argument("neighbour count r must be positive".into()));
        }
        Ok(())
    }

    /// Short algorithm label, e.g. `nb-dynamic`.
    pub fn algorithm_name(&self) -> String {
        format!("{}-{}", self.base, self.ordering)
    }
}

/// A fitted base model.
#[derive(Debug, Clone, PartialEq)]
pub enum MemberModel {
    NaiveBayes(NbChainModel),
    NearestNeighbour(KnnChainModel),
}

impl MemberModel {
    pub fn n_labels(&self) -> usize {
        match self {
            MemberModel::NaiveBayes(m) => m.n_labels(),
            MemberModel::NearestNeighbour(m) => m.n_labels(),
        }
    }

    pub fn predict_chain(&self, x: &[f64], pi: &LabelPermutation) -> Result<Prediction> {
        match self {
            MemberModel::NaiveBayes(m) => m.predict_chain(x, pi),
            MemberModel::NearestNeighbour(m) => m.predict_chain(x, pi),
        }
    }

    pub fn predict_br(&self, x: &[f64]) -> Result<Prediction> {
        match self {
            MemberModel::NaiveBayes(m) => m.predict_br(x),
            MemberModel::NearestNeighbour(m) => m.predict_br(x),
        }
    }

    fn to_text(&self) -> String {
        match self {
            MemberModel::NaiveBayes(m) => m.to_text(),
            MemberModel::NearestNeighbour(m) => m.to_text(),
        }
    }
}

/// One committee member with everything it needs at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub standardization: StandardizationParams,
    pub model: MemberModel,
    pub validation: ValidationCache,
    /// Build-time order for random and fixed ordering.
    pub fixed_order: Option<LabelPermutation>,
}

impl Member {
    /// Trains one member on a bag of `data`.
    ///
    /// `r` is the neighbour count for the nearest-neighbour base (clamped to
    /// the fitting part's size) and is ignored for Naive Bayes.
    pub fn train(data: &MultiLabelDataset, config: &EnsembleConfig, r: usize, seed: RngSeed) -> Result<Self> {
        let rows = bag_rows(data.n_rows(), config.bag_fraction, seed.derive(0))?;
        let bag = data.select_rows(&rows)?;
        let (bag, standardization) = standardize(&bag);
        let split = split_train_validation(&bag, config.split_ratio, seed.derive(1))?;
        let fit = split.train;
        let l = fit.n_labels();

        let model = match config.base {
            BaseModel::NaiveBayes => {
                let mut views = Vec::with_capacity(l);
                let mut subsets = Vec::with_capacity(l);
                for i in 0..l {
                    let view = LabelView::from_dataset(&fit, i)?;
                    let view = undersample(&view, config.max_ir, seed.derive(100 + i as u64))?;
                    let subset =
                        select_features(&view, config.feature_cap, seed.derive(100_000 + i as u64))?;
                    views.push(view);
                    subsets.push(subset);
                }
                MemberModel::NaiveBayes(train_nb(&fit, &views, &subsets, config.smoothing)?)
            }
            BaseModel::NearestNeighbour => {
                let r = r.clamp(1, fit.n_rows());
                MemberModel::NearestNeighbour(KnnChainModel::new(fit, r)?)
            }
        };

        let validation = ValidationCache::from_predictor(split.validation, |x| {
            model.predict_br(x).map(|p| p.hard)
        })?;
        let fixed_order = match &config.ordering {
            Ordering::Random => Some(LabelPermutation::random(l, seed.derive(2))),
            Ordering::Fixed(Some(p)) => {
                if p.len() != l {
                    return Err(Error::Argument(format!(
                        "fixed order covers {} labels, data has {l}",
                        p.len()
                    )));
                }
                Some(p.clone())
            }
            Ordering::Fixed(None) => Some(LabelPermutation::identity(l)),
            Ordering::Dynamic | Ordering::BinaryRelevance => None,
        };
        Ok(Self {
            standardization,
            model,
            validation,
            fixed_order,
        })
    }

    /// Prediction for a raw (unstandardized) feature vector.
    pub fn predict(&self, x: &[f64], ordering: &Ordering, beta: f64) -> Result<Prediction> {
        let mut z = x.to_vec();
        self.standardization.transform_row(&mut z)?;
        match ordering {
            Ordering::BinaryRelevance => self.model.predict_br(&z),
            Ordering::Dynamic => {
                let pi = dynamic_permutation(&self.validation, &z, beta)?;
                self.model.predict_chain(&z, &pi)
            }
            Ordering::Random | Ordering::Fixed(_) => {
                let pi = self
                    .fixed_order
                    .as_ref()
                    .ok_or_else(|| Error::Contract("member has no build-time order".into()))?;
                self.model.predict_chain(&z, pi)
            }
        }
    }
}

/// A trained committee.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Member>,
    pub config: EnsembleConfig,
    /// β used for dynamic ordering (tuned or given).
    pub beta: f64,
    /// Neighbour count for the nearest-neighbour base (tuned or given).
    pub r: Option<usize>,
    feature_names: Vec<String>,
    label_names: Vec<String>,
}

/// Hard-vote aggregation: label `i` is relevant iff the mean vote exceeds 0.5.
///
/// Scores are the mean votes.
pub fn aggregate_votes(votes: &[Vec<u8>]) -> Result<Prediction> {
    let Some(first) = votes.first() else {
        return Err(Error::Argument("no member votes to aggregate".into()));
    };
    let l = first.len();
    if votes.iter().any(|v| v.len() != l) {
        return Err(Error::Argument("member votes differ in length".into()));
    }
    let k = votes.len();
    let counts: Vec<usize> = (0..l)
        .map(|i| votes.iter().filter(|v| v[i] == 1).count())
        .collect();
    Ok(Prediction {
        hard: counts.iter().map(|&c| u8::from(2 * c > k)).collect(),
        scores: counts.iter().map(|&c| c as f64 / k as f64).collect(),
    })
}

/// Builds the committee described by `config` on `train`, tuning β and r first when requested.
pub fn build_ensemble(train: &MultiLabelDataset, config: &EnsembleConfig) -> Result<Ensemble> {
    config.validate()?;
    let r = match (config.base, config.r) {
        (BaseModel::NaiveBayes, _) => None,
        (BaseModel::NearestNeighbour, Tunable::Value(r)) => Some(r),
        (BaseModel::NearestNeighbour, Tunable::Tune) => Some(tuning::tune_r(train, config)?),
    };
    let beta = match (&config.ordering, config.beta) {
        (_, Tunable::Value(b)) => b,
        (Ordering::Dynamic, Tunable::Tune) => {
            let resolved = EnsembleConfig {
                r: r.map_or(config.r, Tunable::Value),
                ..config.clone()
            };
            tuning::tune_beta(train, &resolved)?
        }
        (_, Tunable::Tune) => 1.0,
    };
    build_with(train, config, beta, r)
}

/// Builds the committee with β and r already resolved.
pub fn build_with(
    train: &MultiLabelDataset,
    config: &EnsembleConfig,
    beta: f64,
    r: Option<usize>,
) -> Result<Ensemble> {
    config.validate()?;
    let members = (0..config.k)
        .into_par_iter()
        .map(|index| {
            Member::train(train, config, r.unwrap_or(1), config.seed.derive(index as u64)).map_err(|e| {
                Error::Member {
                    index,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        members,
        config: config.clone(),
        beta,
        r,
        feature_names: train.feature_names().to_vec(),
        label_names: train.label_names().to_vec(),
    })
}

impl Ensemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Hard predictions of every member for a raw feature vector.
    pub fn member_votes(&self, x: &[f64]) -> Result<Vec<Vec<u8>>> {
        if x.len() != self.n_features() {
            return Err(Error::Argument(format!(
                "feature vector has {} entries, ensemble expects {}",
                x.len(),
                self.n_features()
            )));
        }
        self.members
            .iter()
            .map(|m| m.predict(x, &self.config.ordering, self.beta).map(|p| p.hard))
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        aggregate_votes(&self.member_votes(x)?)
    }

    /// Hard predictions for every row of `features`.
    pub fn predict_matrix(&self, features: &Array2<f64>) -> Result<Array2<u8>> {
        let rows = features
            .rows()
            .into_iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|row| self.predict(&row.to_vec()).map(|p| p.hard))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((rows.len(), self.n_labels()));
        for (i, h) in rows.iter().enumerate() {
            for (j, &v) in h.iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }

    /// Writes the ensemble into directory `dir`.
    ///
    /// `manifest.txt` holds `key = value` lines for the configuration and the
    /// file names of each member: its model (`.model`), its standardization
    /// (`.std`, one `mean stddev` line per feature) and its validation part
    /// (`.validation.csv`, dataset CSV format).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = &self.config;
        let mut m = String::new();
        let mut put = |k: &str, v: String| {
            m.push_str(k);
            m.push_str(" = ");
            m.push_str(&v);
            m.push('\n');
        };
        put("format", FORMAT_TAG.into());
        put("k", c.k.to_string());
        put("bag_fraction", format!("{:.16e}", c.bag_fraction));
        put("split_ratio", format!("{:.16e}", c.split_ratio));
        put("max_ir", format!("{:.16e}", c.max_ir));
        put("feature_cap", c.feature_cap.to_string());
        put("smoothing", format!("{:.16e}", c.smoothing));
        put("base", c.base.to_string());
        put("ordering", c.ordering.to_string());
        if let Ordering::Fixed(Some(p)) = &c.ordering {
            put("fixed_order", p.to_string());
        }
        put("beta", format!("{:.16e}", self.beta));
        put("r", self.r.map_or_else(|| "none".to_string(), |r| r.to_string()));
        put("seed", c.seed.0.to_string());
        put("labels", self.n_labels().to_string());
        for (i, member) in self.members.iter().enumerate() {
            let stem = format!("member_{i:03}");
            let model = format!("{stem}.model");
            let stdf = format!("{stem}.std");
            let val = format!("{stem}.validation.csv");
            let p = dir.join(&model);
            std::fs::write(&p, member.model.to_text()).map_err(|e| Error::io(&p, e))?;
            let p = dir.join(&stdf);
            std::fs::write(&p, standardization_text(&member.standardization)).map_err(|e| Error::io(&p, e))?;
            save_csv(member.validation.validation(), dir.join(&val))?;
            put(&format!("member.{i}.model"), model);
            put(&format!("member.{i}.standardization"), stdf);
            put(&format!("member.{i}.validation"), val);
            if let Some(order) = &member.fixed_order {
                put(&format!("member.{i}.order"), order.to_string());
            }
        }
        let p = dir.join(MANIFEST);
        std::fs::write(&p, m).map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let e = kv::parse(&text)?;
        if kv::require(&e, "format")? != FORMAT_TAG {
            return Err(Error::Format(format!("{}: not a {FORMAT_TAG} manifest", path.display())));
        }
        let num = |key: &str| -> Result<f64> { kv::parse_value(key, kv::require(&e, key)?) };
        let int = |key: &str| -> Result<usize> { kv::parse_value(key, kv::require(&e, key)?) };
        let base: BaseModel = kv::require(&e, "base")?.parse()?;
        let mut ordering: Ordering = kv::require(&e, "ordering")?.parse()?;
        if let (Ordering::Fixed(slot), Some(order)) = (&mut ordering, kv::get(&e, "fixed_order")) {
            *slot = Some(LabelPermutation::parse(order)?);
        }
        let r = match kv::require(&e, "r")? {
            "none" => None,
            v => Some(kv::parse_value::<usize>("r", v)?),
        };
        let beta = num("beta")?;
        let config = EnsembleConfig {
            k: int("k")?,
            bag_fraction: num("bag_fraction")?,
            split_ratio: num("split_ratio")?,
            max_ir: num("max_ir")?,
            feature_cap: int("feature_cap")?,
            smoothing: num("smoothing")?,
            base,
            ordering,
            beta: Tunable::Value(beta),
            r: r.map_or(Tunable::Tune, Tunable::Value),
            seed: RngSeed(kv::parse_value("seed", kv::require(&e, "seed")?)?),
        };
        config.validate()?;
        let labels = int("labels")?;

        let mut members = Vec::with_capacity(config.k);
        for i in 0..config.k {
            let file = |what: &str| kv::require(&e, &format!("member.{i}.{what}")).map(|f| dir.join(f));
            let model_path = file("model")?;
            let model_text = std::fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
            let model = match base {
                BaseModel::NaiveBayes => MemberModel::NaiveBayes(NbChainModel::from_text(&model_text)?),
                BaseModel::NearestNeighbour => {
                    MemberModel::NearestNeighbour(KnnChainModel::from_text(&model_text)?)
                }
            };
            let std_path = file("standardization")?;
            let std_text = std::fs::read_to_string(&std_path).map_err(|e| Error::io(&std_path, e))?;
            let standardization = parse_standardization(&std_text)?;
            let validation = load_csv(file("validation")?, labels)?;
            if model.n_labels() != labels || standardization.dim() != validation.n_features() {
                return Err(Error::Format(format!("member {i} files disagree on dimensions")));
            }
            let validation =
                ValidationCache::from_predictor(validation, |x| model.predict_br(x).map(|p| p.hard))?;
            let fixed_order = kv::get(&e, &format!("member.{i}.order"))
                .map(LabelPermutation::parse)
                .transpose()?;
            members.push(Member {
                standardization,
                model,
                validation,
                fixed_order,
            });
        }
        let first = members
            .first()
            .ok_or_else(|| Error::Format("ensemble has no members".into()))?
            .validation
            .validation();
        let feature_names = first.feature_names().to_vec();
        let label_names = first.label_names().to_vec();
        Ok(Self {
            members,
            config,
            beta,
            r,
            feature_names,
            label_names,
        })
    }
}

fn standardization_text(p: &StandardizationParams) -> String {
    p.means
        .iter()
        .zip(&p.stddevs)
        .map(|(m, s)| format!("{m:.16e} {s:.16e}\n"))
        .collect()
}

fn parse_standardization(text: &str) -> Result<StandardizationParams> {
    let mut means = Vec::new();
    let mut stddevs = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(m)), Some(Ok(s)), None) if s >= 0.0 => {
                means.push(m);
                stddevs.push(s);
            }
            _ => {
                return Err(Error::Format(format!(
                    "standardization line {}: expected `mean stddev`",
                    k + 1
                )))
            }
        }
    }
    Ok(StandardizationParams { means, stddevs })
}

/// Free-function form of [`Ensemble::predict`].
pub fn predict_ensemble(ens: &Ensemble, x: &[f64]) -> Result<Prediction> {
    ens.predict(x)
}
