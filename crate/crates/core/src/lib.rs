//! Dynamic classifier-chain ensembles for multi-label classification.
//!
//! A classifier chain predicts labels one after another, feeding each decision
//! into the classifiers further down the chain. This crate provides two base
//! chain models whose label order can be chosen per query without retraining:
//!
//! - [`nb_chain::NbChainModel`], a Naive Bayes chain that fits every
//!   order-independent estimator once (class priors, per-feature Gaussians and
//!   all pairwise label conditionals) so any order is evaluable at inference cost.
//! - [`knn_chain::KnnChainModel`], a lazy nearest-neighbour chain whose distance
//!   extends the feature space with the labels decided so far.
//!
//! [`dynamic_order`] picks the order per query from a fuzzy, locally weighted
//! F1 score of the binary-relevance classifier on a held-out validation set, and
//! [`ensemble`] wraps either model into a bagged committee with dynamic,
//! random (ECC) or fixed ordering. [`harness`] runs cross-validated experiments
//! and [`stats`] compares algorithms with Wilcoxon/Holm and Friedman/Nemenyi.

pub mod dataset;
pub mod dynamic_order;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod knn_chain;
mod kv;
pub mod metrics;
pub mod nb_chain;
pub mod permutation;
pub mod preprocess;
pub mod stats;
pub mod synth;
pub mod tuning;

pub use dataset::{MultiLabelDataset, RngSeed, SplitPair, StandardizationParams};
pub use ensemble::{BaseModel, Ensemble, EnsembleConfig, Ordering};
pub use error::{Error, Result};
pub use metrics::EvaluationReport;
pub use permutation::{LabelPermutation, Prediction};
