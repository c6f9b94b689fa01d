//! Grid search for β and r by 3-fold cross-validation of a single member.
//!
//! The objective is the mean macro F1 loss over the folds; ties go to the
//! smallest candidate.

use crate::dataset::{apply_standardization, kfold, standardize, MultiLabelDataset};
use crate::ensemble::{BaseModel, EnsembleConfig, Member, Ordering, Tunable};
use crate::error::{Error, Result};
use crate::metrics::evaluate;

pub const BETA_GRID: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
pub const R_GRID: [usize; 6] = [1, 3, 5, 7, 9, 11];
pub const TUNING_FOLDS: usize = 3;

struct Fold {
    train: MultiLabelDataset,
    test: MultiLabelDataset,
}

fn folds(train: &MultiLabelDataset, config: &EnsembleConfig, stream: &str) -> Result<Vec<Fold>> {
    if train.n_rows() < TUNING_FOLDS {
        return Err(Error::Tuning(format!(
            "{} row(s) cannot be split into {TUNING_FOLDS} folds",
            train.n_rows()
        )));
    }
    kfold(train, TUNING_FOLDS, config.seed.derive_str(stream))?
        .into_iter()
        .map(|pair| {
            let (tr, params) = standardize(&pair.train);
            let test = apply_standardization(&pair.validation, &params)?;
            Ok(Fold { train: tr, test })
        })
        .collect()
}

fn single_member(config: &EnsembleConfig) -> EnsembleConfig {
    EnsembleConfig {
        k: 1,
        ..config.clone()
    }
}

fn fold_loss(member: &Member, test: &MultiLabelDataset, ordering: &Ordering, beta: f64) -> Result<f64> {
    let mut predicted = ndarray::Array2::zeros(test.labels().dim());
    for i in 0..test.n_rows() {
        let p = member.predict(test.feature_row(i), ordering, beta)?;
        for (j, &h) in p.hard.iter().enumerate() {
            predicted[[i, j]] = h;
        }
    }
    Ok(evaluate(test.labels(), &predicted)?.macro_f1_loss)
}

/// Index of the smallest loss; the first one wins ties.
fn argmin(losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in losses.iter().enumerate() {
        if best.is_none_or(|b| v < losses[b]) {
            best = Some(i);
        }
    }
    best
}

fn wrap(stage: &str, e: Error) -> Error {
    match e {
        Error::Tuning(_) => e,
        other => Error::Tuning(format!("{stage}: {other}")),
    }
}

/// β from [`BETA_GRID`] for a dynamic-order committee.
pub fn tune_beta(train: &MultiLabelDataset, config: &EnsembleConfig) -> Result<f64> {
    tune_beta_over(train, config, &BETA_GRID)
}

/// β from `grid` minimizing the cross-validated macro F1 loss.
///
/// β only enters at prediction time, so one member per fold serves every
/// candidate.
pub fn tune_beta_over(train: &MultiLabelDataset, config: &EnsembleConfig, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Argument("β grid must be non-empty and positive".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let cfg = single_member(config);
    let r = match cfg.r {
        Tunable::Value(r) => r,
        Tunable::Tune => 1,
    };
    let mut losses = vec![0.0; grid.len()];
    for (f, fold) in folds(train, config, "tune-beta")?.iter().enumerate() {
        let member = Member::train(&fold.train, &cfg, r, cfg.seed.derive_str("tune-beta").derive(f as u64))
            .map_err(|e| wrap("β", e))?;
        for (loss, &beta) in losses.iter_mut().zip(grid) {
            *loss += fold_loss(&member, &fold.test, &Ordering::Dynamic, beta).map_err(|e| wrap("β", e))?;
        }
    }
    Ok(grid[argmin(&losses).expect("non-empty grid")])
}

/// r from [`R_GRID`] for a nearest-neighbour committee.
pub fn tune_r(train: &MultiLabelDataset, config: &EnsembleConfig) -> Result<usize> {
    tune_r_over(train, config, &R_GRID)
}

/// r from `grid` minimizing the cross-validated macro F1 loss.
///
/// Candidates larger than the smallest fold training set are skipped. When β
/// is itself being tuned, r is searched with β = 1.
pub fn tune_r_over(train: &MultiLabelDataset, config: &EnsembleConfig, grid: &[usize]) -> Result<usize> {
    if config.base != BaseModel::NearestNeighbour {
        return Err(Error::Argument("r is only tuned for the nearest-neighbour base".into()));
    }
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::Argument("r grid must be non-empty and positive".into()));
    }
    let beta = match config.beta {
        Tunable::Value(b) => b,
        Tunable::Tune => 1.0,
    };
    let cfg = single_member(config);
    let folds = folds(train, config, "tune-r")?;
    let limit = folds.iter().map(|f| f.train.n_rows()).min().unwrap_or(0);
    let candidates: Vec<usize> = grid.iter().copied().filter(|&r| r <= limit).collect();
    if candidates.is_empty() {
        return Err(Error::Tuning(format!("no r candidate fits folds of {limit} training rows")));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let mut losses = vec![0.0; candidates.len()];
    for (f, fold) in folds.iter().enumerate() {
        let seed = cfg.seed.derive_str("tune-r").derive(f as u64);
        for (loss, &r) in losses.iter_mut().zip(&candidates) {
            let member = Member::train(&fold.train, &cfg, r, seed).map_err(|e| wrap("r", e))?;
            *loss += fold_loss(&member, &fold.test, &cfg.ordering, beta).map_err(|e| wrap("r", e))?;
        }
    }
    Ok(candidates[argmin(&losses).expect("non-empty candidates")])
}
