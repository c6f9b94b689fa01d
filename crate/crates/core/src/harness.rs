//! Cross-validated experiments: every (dataset, algorithm, fold) cell trains
//! one committee on the fold's training part and scores it on the test part.
//!
//! Experiment files are `key = value` text:
//!
//! ```text
//! dataset = data/flags.csv 7        # path, label count, optional name
//! algorithm = nb dynamic            # base, ordering, optional fixed order
//! algorithm = nb random
//! folds = 10
//! k = 20
//! beta = tune                       # or a positive number
//! r = tune                          # or a positive integer
//! seed = 1
//! out = results
//! ```
//!
//! `bag_fraction`, `split_ratio`, `max_ir`, `feature_cap`, `smoothing` and
//! `alpha` (significance level of the Nemenyi critical distance) are optional.
//! Relative paths are resolved against the experiment file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::{apply_standardization, kfold, load_csv, standardize, MultiLabelDataset, RngSeed, SplitPair};
use crate::ensemble::{build_ensemble, BaseModel, Ensemble, EnsembleConfig, Ordering, Tunable};
use crate::error::{Error, Result};
use crate::kv;
use crate::metrics::{evaluate, mean_values, EvaluationReport, CRITERIA};
use crate::permutation::LabelPermutation;
use crate::stats::{friedman_nemenyi, pairwise_wilcoxon_holm, ComparisonMatrix};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub label_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub base: BaseModel,
    pub ordering: Ordering,
}

impl AlgorithmSpec {
    pub fn new(base: BaseModel, ordering: Ordering) -> Self {
        Self { base, ordering }
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.base, self.ordering)
    }

    fn configure(&self, base: &EnsembleConfig) -> EnsembleConfig {
        EnsembleConfig {
            base: self.base,
            ordering: self.ordering.clone(),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub datasets: Vec<DatasetSpec>,
    pub algorithms: Vec<AlgorithmSpec>,
    pub folds: usize,
    /// Shared settings; `base`, `ordering` and `seed` are set per cell.
    pub config: EnsembleConfig,
    pub out: Option<PathBuf>,
    pub seed: RngSeed,
    pub alpha: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Argument("experiment needs at least one dataset".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Argument("experiment needs at least one algorithm".into()));
        }
        if self.folds < 2 {
            return Err(Error::Argument(format!("folds must be at least 2, got {}", self.folds)));
        }
        let mut names: Vec<String> = self.algorithms.iter().map(AlgorithmSpec::name).collect();
        names.sort();
        names.dedup();
        if names.len() != self.algorithms.len() {
            return Err(Error::Argument("algorithm names must be distinct".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.datasets.len() {
            return Err(Error::Argument("dataset names must be distinct".into()));
        }
        self.config.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Parses spec text; relative paths are taken relative to `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let entries = kv::parse(text)?;
        let mut datasets = Vec::new();
        let mut algorithms = Vec::new();
        for (key, value) in &entries {
            match key.as_str() {
                "dataset" => datasets.push(parse_dataset(value, base_dir)?),
                "algorithm" => algorithms.push(parse_algorithm(value)?),
                "folds" | "k" | "beta" | "r" | "seed" | "out" | "bag_fraction" | "split_ratio" | "max_ir"
                | "feature_cap" | "smoothing" | "alpha" => {}
                other => return Err(Error::Format(format!("unknown spec key {other:?}"))),
            }
        }
        let opt = |key: &str| kv::get(&entries, key);
        let mut config = EnsembleConfig::default();
        if let Some(v) = opt("k") {
            config.k = kv::parse_value("k", v)?;
        }
        if let Some(v) = opt("bag_fraction") {
            config.bag_fraction = kv::parse_value("bag_fraction", v)?;
        }
        if let Some(v) = opt("split_ratio") {
            config.split_ratio = kv::parse_value("split_ratio", v)?;
        }
        if let Some(v) = opt("max_ir") {
            config.max_ir = kv::parse_value("max_ir", v)?;
        }
        if let Some(v) = opt("feature_cap") {
            config.feature_cap = kv::parse_value("feature_cap", v)?;
        }
        if let Some(v) = opt("smoothing") {
            config.smoothing = kv::parse_value("smoothing", v)?;
        }
        if let Some(v) = opt("beta") {
            config.beta = v.parse::<Tunable<f64>>().map_err(|e| Error::Format(e.to_string()))?;
        }
        if let Some(v) = opt("r") {
            config.r = v.parse::<Tunable<usize>>().map_err(|e| Error::Format(e.to_string()))?;
        }
        let seed = RngSeed(opt("seed").map(|v| kv::parse_value("seed", v)).transpose()?.unwrap_or(0));
        config.seed = seed;
        let spec = Self {
            datasets,
            algorithms,
            folds: opt("folds").map(|v| kv::parse_value("folds", v)).transpose()?.unwrap_or(DEFAULT_FOLDS),
            config,
            out: opt("out").map(|v| base_dir.join(v)),
            seed,
            alpha: opt("alpha").map(|v| kv::parse_value("alpha", v)).transpose()?.unwrap_or(DEFAULT_ALPHA),
        };
        spec.validate().map_err(|e| match e {
            Error::Argument(m) => Error::Format(m),
            other => other,
        })?;
        Ok(spec)
    }
}

fn parse_dataset(value: &str, base_dir: &Path) -> Result<DatasetSpec> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let (path, count, name) = match tokens.as_slice() {
        [p, c] => (*p, *c, None),
        [p, c, n] => (*p, *c, Some(*n)),
        _ => return Err(Error::Format(format!("dataset entry {value:?}: expected `path labels [name]`"))),
    };
    let path = base_dir.join(path);
    let name = name.map(str::to_string).unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    });
    Ok(DatasetSpec {
        name,
        path,
        label_count: kv::parse_value("dataset label count", count)?,
    })
}

fn parse_algorithm(value: &str) -> Result<AlgorithmSpec> {
    let mut tokens = value.split_whitespace();
    let base: BaseModel = tokens
        .next()
        .ok_or_else(|| Error::Format("empty algorithm entry".into()))?
        .parse()?;
    let mut ordering: Ordering = tokens.next().unwrap_or("dynamic").parse()?;
    let rest: Vec<&str> = tokens.collect();
    if !rest.is_empty() {
        match &mut ordering {
            Ordering::Fixed(slot) => *slot = Some(LabelPermutation::parse(&rest.join(" "))?),
            _ => return Err(Error::Format(format!("algorithm entry {value:?}: unexpected {rest:?}"))),
        }
    }
    Ok(AlgorithmSpec { base, ordering })
}

/// Outcome of one (dataset, algorithm, fold) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub dataset: String,
    pub algorithm: String,
    pub fold: usize,
    pub beta: Option<f64>,
    pub r: Option<usize>,
    pub outcome: std::result::Result<EvaluationReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub algorithm: String,
    pub folds_ok: usize,
    /// Fold means in [`CRITERIA`] order; `None` when every fold failed.
    pub means: Option<[f64; 11]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    pub alpha: f64,
}

/// Seed of one cell, independent of execution order.
pub fn cell_seed(seed: RngSeed, dataset: &str, algorithm: &str, fold: usize) -> RngSeed {
    seed.derive_str(dataset).derive_str(algorithm).derive(fold as u64)
}

/// Folds of one dataset; the same for every algorithm.
pub fn dataset_folds(ds: &MultiLabelDataset, name: &str, folds: usize, seed: RngSeed) -> Result<Vec<SplitPair>> {
    kfold(ds, folds, seed.derive_str("folds").derive_str(name))
}

/// Trains on one fold: standardization is fitted on the training part only
/// and applied to the test part. Returns the committee and the standardized test part.
pub fn fit_fold(split: &SplitPair, config: &EnsembleConfig) -> Result<(Ensemble, MultiLabelDataset)> {
    let (train, params) = standardize(&split.train);
    let test = apply_standardization(&split.validation, &params)?;
    Ok((build_ensemble(&train, config)?, test))
}

fn run_cell(split: &SplitPair, config: &EnsembleConfig) -> Result<(Ensemble, EvaluationReport)> {
    let (ens, test) = fit_fold(split, config)?;
    let predicted = ens.predict_matrix(test.features())?;
    let report = evaluate(test.labels(), &predicted)?;
    Ok((ens, report))
}

/// Loads the experiment's datasets and runs the experiment on them.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut loaded = Vec::with_capacity(spec.datasets.len());
    for d in &spec.datasets {
        loaded.push((d.name.clone(), load_csv(&d.path, d.label_count)?));
    }
    run_on(spec, &loaded)
}

/// Runs the experiment on in-memory datasets (`spec.datasets` is ignored).
pub fn run_on(spec: &ExperimentSpec, datasets: &[(String, MultiLabelDataset)]) -> Result<ExperimentResult> {
    if datasets.is_empty() {
        return Err(Error::Argument("experiment needs at least one dataset".into()));
    }
    if spec.algorithms.is_empty() {
        return Err(Error::Argument("experiment needs at least one algorithm".into()));
    }
    if spec.folds < 2 {
        return Err(Error::Argument(format!("folds must be at least 2, got {}", spec.folds)));
    }
    let mut tasks = Vec::new();
    let mut failed = Vec::new();
    for (name, ds) in datasets {
        match dataset_folds(ds, name, spec.folds, spec.seed) {
            Ok(folds) => {
                for (f, split) in folds.into_iter().enumerate() {
                    for alg in &spec.algorithms {
                        tasks.push((name.clone(), alg, f, split.clone()));
                    }
                }
            }
            Err(e) => {
                for f in 0..spec.folds {
                    for alg in &spec.algorithms {
                        failed.push(CellResult {
                            dataset: name.clone(),
                            algorithm: alg.name(),
                            fold: f,
                            beta: None,
                            r: None,
                            outcome: Err(e.to_string()),
                        });
                    }
                }
            }
        }
    }
    let mut cells: Vec<CellResult> = tasks
        .par_iter()
        .map(|(dataset, alg, fold, split)| {
            let algorithm = alg.name();
            let config = EnsembleConfig {
                seed: cell_seed(spec.seed, dataset, &algorithm, *fold),
                ..alg.configure(&spec.config)
            };
            let (beta, r, outcome) = match run_cell(split, &config) {
                Ok((ens, report)) => {
                    let beta = (config.ordering == Ordering::Dynamic).then_some(ens.beta);
                    (beta, ens.r, Ok(report))
                }
                Err(e) => (None, None, Err(e.to_string())),
            };
            CellResult {
                dataset: dataset.clone(),
                algorithm,
                fold: *fold,
                beta,
                r,
                outcome,
            }
        })
        .collect();
    cells.extend(failed);
    let order = |c: &CellResult| {
        (
            datasets.iter().position(|(n, _)| *n == c.dataset),
            spec.algorithms.iter().position(|a| a.name() == c.algorithm),
            c.fold,
        )
    };
    cells.sort_by_key(order);

    let mut summary = Vec::new();
    for (name, _) in datasets {
        for alg in &spec.algorithms {
            let algorithm = alg.name();
            let reports: Vec<EvaluationReport> = cells
                .iter()
                .filter(|c| c.dataset == *name && c.algorithm == algorithm)
                .filter_map(|c| c.outcome.as_ref().ok().cloned())
                .collect();
            summary.push(SummaryRow {
                dataset: name.clone(),
                algorithm,
                folds_ok: reports.len(),
                means: mean_values(&reports),
            });
        }
    }
    Ok(ExperimentResult {
        cells,
        summary,
        alpha: spec.alpha,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentResult {
    /// One row per cell: `dataset,algorithm,fold,status,beta,r,<criteria>`.
    pub fn folds_csv(&self) -> String {
        let mut s = format!("dataset,algorithm,fold,status,beta,r,{}\n", CRITERIA.join(","));
        for c in &self.cells {
            let (status, values) = match &c.outcome {
                Ok(r) => ("ok".to_string(), r.values().map(|v| v.to_string()).join(",")),
                Err(e) => (format!("error: {e}"), vec![String::new(); 11].join(",")),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                csv_field(&c.dataset),
                csv_field(&c.algorithm),
                c.fold,
                csv_field(&status),
                opt(c.beta),
                opt(c.r),
                values
            );
        }
        s
    }

    /// Fold means: `dataset,algorithm,folds_ok,<criteria>`.
    pub fn summary_csv(&self) -> String {
        let mut s = format!("dataset,algorithm,folds_ok,{}\n", CRITERIA.join(","));
        for row in &self.summary {
            let values = match row.means {
                Some(m) => m.map(|v| v.to_string()).join(","),
                None => vec![String::new(); 11].join(","),
            };
            let _ = writeln!(
                s,
                "{},{},{},{}",
                csv_field(&row.dataset),
                csv_field(&row.algorithm),
                row.folds_ok,
                values
            );
        }
        s
    }

    /// Algorithms × datasets matrix of fold means for one criterion.
    pub fn comparison_matrix(&self, criterion: &str) -> Result<ComparisonMatrix> {
        let k = CRITERIA
            .iter()
            .position(|&c| c == criterion)
            .ok_or_else(|| Error::Argument(format!("unknown criterion {criterion:?}")))?;
        let mut algorithms: Vec<String> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        for row in &self.summary {
            if !algorithms.contains(&row.algorithm) {
                algorithms.push(row.algorithm.clone());
            }
            if !datasets.contains(&row.dataset) {
                datasets.push(row.dataset.clone());
            }
        }
        let mut scores = ndarray::Array2::from_elem((algorithms.len(), datasets.len()), f64::NAN);
        for row in &self.summary {
            let i = algorithms.iter().position(|a| *a == row.algorithm).expect("collected");
            let j = datasets.iter().position(|d| *d == row.dataset).expect("collected");
            scores[[i, j]] = row.means.map_or(f64::NAN, |m| m[k]);
        }
        ComparisonMatrix::new(scores, algorithms, datasets)
    }

    /// Pairwise Wilcoxon/Holm and Friedman/Nemenyi results for every criterion.
    ///
    /// Returns (`comparison.csv`, `ranks.csv`) contents. Tests that cannot
    /// run record the reason instead of numbers.
    pub fn comparison_csvs(&self) -> (String, String) {
        let mut pairs = String::from("criterion,first,second,n,statistic,p_value,p_holm,exact,note\n");
        let mut ranks = String::from("criterion,algorithm,avg_rank,friedman_statistic,friedman_p,critical_distance,note\n");
        for criterion in CRITERIA {
            let m = match self.comparison_matrix(criterion) {
                Ok(m) => m,
                Err(e) => {
                    let _ = writeln!(pairs, "{criterion},,,,,,,,{}", csv_field(&e.to_string()));
                    let _ = writeln!(ranks, "{criterion},,,,,,{}", csv_field(&e.to_string()));
                    continue;
                }
            };
            for p in pairwise_wilcoxon_holm(&m) {
                match &p.result {
                    Ok(w) => {
                        let _ = writeln!(
                            pairs,
                            "{criterion},{},{},{},{},{},{},{},",
                            csv_field(&p.first),
                            csv_field(&p.second),
                            w.n,
                            w.statistic,
                            w.p_value,
                            opt(p.p_adjusted),
                            w.exact
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(
                            pairs,
                            "{criterion},{},{},,,,,,{}",
                            csv_field(&p.first),
                            csv_field(&p.second),
                            csv_field(e)
                        );
                    }
                }
            }
            match friedman_nemenyi(&m, self.alpha) {
                Ok(f) => {
                    for (name, r) in m.algorithm_names.iter().zip(&f.avg_ranks) {
                        let _ = writeln!(
                            ranks,
                            "{criterion},{},{r},{},{},{},",
                            csv_field(name),
                            f.statistic,
                            f.p_value,
                            f.critical_distance
                        );
                    }
                }
                Err(e) => {
                    let _ = writeln!(ranks, "{criterion},,,,,,{}", csv_field(&e.to_string()));
                }
            }
        }
        (pairs, ranks)
    }

    /// Writes `folds.csv`, `summary.csv`, `comparison.csv` and `ranks.csv` into `dir`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (pairs, ranks) = self.comparison_csvs();
        for (file, body) in [
            ("folds.csv", self.folds_csv()),
            ("summary.csv", self.summary_csv()),
            ("comparison.csv", pairs),
            ("ranks.csv", ranks),
        ] {
            let p = dir.join(file);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}
