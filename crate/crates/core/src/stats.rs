//! Nonparametric comparison of algorithms over datasets: Wilcoxon signed-rank
//! with Holm correction, and the Friedman test with the Nemenyi critical
//! distance.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::metrics::CRITERIA;

/// Largest sample size for which the exact null distribution is used.
pub const EXACT_WILCOXON_MAX_N: usize = 50;

/// Minimum number of nonzero differences accepted by the Wilcoxon test.
pub const WILCOXON_MIN_N: usize = 5;

/// Losses of `A` algorithms (rows) on `D` datasets (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    pub scores: Array2<f64>,
    pub algorithm_names: Vec<String>,
    pub dataset_names: Vec<String>,
}

impl ComparisonMatrix {
    pub fn new(scores: Array2<f64>, algorithm_names: Vec<String>, dataset_names: Vec<String>) -> Result<Self> {
        let (a, d) = scores.dim();
        if algorithm_names.len() != a || dataset_names.len() != d {
            return Err(Error::Argument(format!(
                "{a}×{d} score matrix with {} algorithm and {} dataset names",
                algorithm_names.len(),
                dataset_names.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("comparison matrix has missing or non-finite entries".into()));
        }
        Ok(Self {
            scores,
            algorithm_names,
            dataset_names,
        })
    }

    pub fn n_algorithms(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_datasets(&self) -> usize {
        self.scores.ncols()
    }

    /// Builds the matrix for `criterion` from harness summary CSV files
    /// (`dataset,algorithm,folds_ok,<criteria...>`).
    pub fn from_summary_csvs<P: AsRef<Path>>(paths: &[P], criterion: &str) -> Result<Self> {
        if !CRITERIA.contains(&criterion) {
            return Err(Error::Argument(format!("unknown criterion {criterion:?}")));
        }
        let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
        let mut algorithms: Vec<String> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        for path in paths {
            let path = path.as_ref();
            let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
            let col = |name: &str| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Format(format!("{}: missing column {name:?}", path.display())))
            };
            let (dc, ac, vc) = (col("dataset")?, col("algorithm")?, col(criterion)?);
            for (k, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
                let dataset = rec.get(dc).unwrap_or_default().to_string();
                let algorithm = rec.get(ac).unwrap_or_default().to_string();
                let value: f64 = rec.get(vc).unwrap_or_default().parse().map_err(|_| Error::Parse {
                    row: k + 2,
                    message: format!("{}: bad {criterion} value", path.display()),
                })?;
                if !algorithms.contains(&algorithm) {
                    algorithms.push(algorithm.clone());
                }
                if !datasets.contains(&dataset) {
                    datasets.push(dataset.clone());
                }
                cells.insert((algorithm, dataset), value);
            }
        }
        let mut scores = Array2::from_elem((algorithms.len(), datasets.len()), f64::NAN);
        for (i, a) in algorithms.iter().enumerate() {
            for (j, d) in datasets.iter().enumerate() {
                scores[[i, j]] = *cells.get(&(a.clone(), d.clone())).ok_or_else(|| {
                    Error::Validation(format!("no {criterion} value for algorithm {a} on dataset {d}"))
                })?;
            }
        }
        Self::new(scores, algorithms, datasets)
    }
}

/// Mid-ranks of `values` in ascending order (rank 1 = smallest).
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub p_value: f64,
    /// Number of nonzero differences.
    pub n: usize,
    /// Whether the exact null distribution was used.
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test of `a − b`.
///
/// Zero differences are dropped. With at most [`EXACT_WILCOXON_MAX_N`]
/// differences and no tied magnitudes the p-value comes from the exact null
/// distribution; otherwise from the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!("samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n < WILCOXON_MIN_N {
        return Err(Error::InsufficientData(format!(
            "{n} nonzero differences, at least {WILCOXON_MIN_N} required"
        )));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&magnitudes);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let mut sorted = magnitudes.clone();
    sorted.sort_by(f64::total_cmp);
    let tie_groups = tie_group_sizes(&sorted);
    let has_ties = tie_groups.iter().any(|&t| t > 1);

    let (p_value, exact) = if n <= EXACT_WILCOXON_MAX_N && !has_ties {
        (exact_two_sided_p(n, statistic.round() as usize), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = tie_groups.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let p = if var > 0.0 {
            let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
            erfc(z / std::f64::consts::SQRT_2)
        } else {
            1.0
        };
        (p.min(1.0), false)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        p_value,
        n,
        exact,
    })
}

fn tie_group_sizes(sorted: &[f64]) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        groups.push(end - start);
        start = end;
    }
    groups
}

/// `min(1, 2·P(W ≤ t))` under the exact null distribution of the signed-rank
/// sum for `n` untied ranks.
fn exact_two_sided_p(n: usize, t: usize) -> f64 {
    let max = n * (n + 1) / 2;
    // counts[s] = number of sign assignments with W+ = s
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for rank in 1..=n {
        for s in (rank..=max).rev() {
            counts[s] += counts[s - rank];
        }
    }
    let total = 2f64.powi(n as i32);
    let tail: f64 = counts[..=t.min(max)].iter().sum();
    (2.0 * tail / total).min(1.0)
}

/// Holm step-down adjustment; results are returned in input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Argument(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &k) in idx.iter().enumerate() {
        let adj = ((m - j) as f64 * p_values[k]).min(1.0);
        running = running.max(adj);
        out[k] = running;
    }
    Ok(out)
}

/// Critical values `q_α` of the Nemenyi test for 2..=10 algorithms.
const NEMENYI_Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const NEMENYI_Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

pub fn nemenyi_q(alpha: f64, n_algorithms: usize) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &NEMENYI_Q_05
    } else if (alpha - 0.1).abs() < 1e-12 {
        &NEMENYI_Q_10
    } else {
        return Err(Error::Unsupported(format!(
            "Nemenyi critical values are tabulated for alpha 0.05 and 0.1 only, not {alpha}"
        )));
    };
    if !(2..=10).contains(&n_algorithms) {
        return Err(Error::Unsupported(format!(
            "Nemenyi critical values are tabulated for 2..=10 algorithms, not {n_algorithms}"
        )));
    }
    Ok(table[n_algorithms - 2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult {
    pub avg_ranks: Vec<f64>,
    pub statistic: f64,
    pub p_value: f64,
    pub critical_distance: f64,
}

/// Friedman test over the rows of `m` followed by the Nemenyi critical distance.
pub fn friedman_nemenyi(m: &ComparisonMatrix, alpha: f64) -> Result<FriedmanResult> {
    let a = m.n_algorithms();
    let d = m.n_datasets();
    if a < 3 {
        return Err(Error::Unsupported(format!(
            "Friedman test needs at least 3 algorithms (got {a}); use the Wilcoxon test"
        )));
    }
    if d < 2 {
        return Err(Error::InsufficientData(format!("Friedman test needs at least 2 datasets, got {d}")));
    }
    let q = nemenyi_q(alpha, a)?;
    let mut rank_sums = vec![0.0; a];
    for col in m.scores.columns() {
        let ranks = mid_ranks(&col.to_vec());
        for (s, r) in rank_sums.iter_mut().zip(ranks) {
            *s += r;
        }
    }
    let (af, df) = (a as f64, d as f64);
    let avg_ranks: Vec<f64> = rank_sums.iter().map(|s| s / df).collect();
    let sum_sq: f64 = avg_ranks.iter().map(|r| r * r).sum();
    let statistic = (12.0 * df / (af * (af + 1.0)) * (sum_sq - af * (af + 1.0) * (af + 1.0) / 4.0)).max(0.0);
    let chi = ChiSquared::new(af - 1.0).expect("positive degrees of freedom");
    let p_value = (1.0 - chi.cdf(statistic)).clamp(0.0, 1.0);
    let critical_distance = q * (af * (af + 1.0) / (6.0 * df)).sqrt();
    Ok(FriedmanResult {
        avg_ranks,
        statistic,
        p_value,
        critical_distance,
    })
}

/// One pairwise Wilcoxon comparison with its Holm-adjusted p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseComparison {
    pub first: String,
    pub second: String,
    /// `Err` text when the test could not run (e.g. too few datasets).
    pub result: std::result::Result<WilcoxonResult, String>,
    pub p_adjusted: Option<f64>,
}

/// Wilcoxon test for every pair of algorithms, Holm-adjusted over the pairs that ran.
pub fn pairwise_wilcoxon_holm(m: &ComparisonMatrix) -> Vec<PairwiseComparison> {
    let a = m.n_algorithms();
    let mut out = Vec::new();
    for i in 0..a {
        for j in i + 1..a {
            let x = m.scores.row(i).to_vec();
            let y = m.scores.row(j).to_vec();
            out.push(PairwiseComparison {
                first: m.algorithm_names[i].clone(),
                second: m.algorithm_names[j].clone(),
                result: wilcoxon_signed_rank(&x, &y).map_err(|e| e.to_string()),
                p_adjusted: None,
            });
        }
    }
    let ran: Vec<usize> = (0..out.len()).filter(|&k| out[k].result.is_ok()).collect();
    let ps: Vec<f64> = ran
        .iter()
        .map(|&k| out[k].result.as_ref().expect("ok").p_value)
        .collect();
    let adjusted = holm_adjust(&ps).expect("p-values in range");
    for (k, p) in ran.into_iter().zip(adjusted) {
        out[k].p_adjusted = Some(p);
    }
    out
}
