//! Multi-label datasets, CSV ingestion, standardization and the sampling
//! primitives used by training and evaluation.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seed for every random decision in the crate.
///
/// Streams for sub-tasks (ensemble members, folds, labels) are obtained with
/// [`RngSeed::derive`], so results never depend on scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for sub-stream `stream`.
    pub fn derive(self, stream: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(stream).rotate_left(23)))
    }

    /// Child seed keyed by a string, e.g. a dataset or algorithm name.
    pub fn derive_str(self, key: &str) -> RngSeed {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in key.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.derive(h)
    }
}

/// N×d real features paired with N×L binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelDataset {
    features: Array2<f64>,
    labels: Array2<u8>,
    feature_names: Vec<String>,
    label_names: Vec<String>,
}

impl MultiLabelDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Array2<u8>,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        let (n_l, l) = labels.dim();
        if n == 0 {
            return Err(Error::Validation("dataset has no rows".into()));
        }
        if d == 0 {
            return Err(Error::Validation("dataset has no feature columns".into()));
        }
        if l == 0 {
            return Err(Error::Validation("dataset has no label columns".into()));
        }
        if n != n_l {
            return Err(Error::Validation(format!(
                "feature matrix has {n} rows but label matrix has {n_l}"
            )));
        }
        if feature_names.len() != d || label_names.len() != l {
            return Err(Error::Validation(format!(
                "expected {d} feature names and {l} label names, got {} and {}",
                feature_names.len(),
                label_names.len()
            )));
        }
        if let Some(((r, c), v)) = labels.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::Validation(format!(
                "label value {v} at row {r}, column {c} is not 0 or 1"
            )));
        }
        check_unique(&feature_names, "feature")?;
        check_unique(&label_names, "label")?;
        // Standard layout keeps row slices contiguous.
        let features = features.as_standard_layout().into_owned();
        let labels = labels.as_standard_layout().into_owned();
        Ok(Self {
            features,
            labels,
            feature_names,
            label_names,
        })
    }

    /// Builds a dataset with generated names `x0..`, `y0..`.
    pub fn from_arrays(features: Array2<f64>, labels: Array2<u8>) -> Result<Self> {
        let feature_names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        let label_names = (0..labels.ncols()).map(|j| format!("y{j}")).collect();
        Self::new(features, labels, feature_names, label_names)
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        self.features
            .row(i)
            .to_slice()
            .expect("standard layout")
    }

    pub fn label_row(&self, i: usize) -> &[u8] {
        self.labels.row(i).to_slice().expect("standard layout")
    }

    /// New dataset made of `rows` (in the given order, repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Argument("cannot select zero rows".into()));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n_rows()) {
            return Err(Error::Argument(format!(
                "row {r} out of range for {} rows",
                self.n_rows()
            )));
        }
        Ok(Self {
            features: self.features.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
        })
    }

    /// Same rows and names with the label matrix replaced.
    pub fn with_labels(&self, labels: Array2<u8>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            labels,
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }
}

fn check_unique(names: &[String], kind: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::Validation(format!("duplicate {kind} name {name:?}")));
        }
    }
    Ok(())
}

/// Loads a CSV file whose trailing `label_count` columns are 0/1 labels.
///
/// Row numbers in errors are 1-based file line numbers (the header is line 1).
pub fn load_csv(path: impl AsRef<Path>, label_count: usize) -> Result<MultiLabelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_count)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, label_count: usize) -> Result<MultiLabelDataset> {
    if label_count == 0 {
        return Err(Error::Argument("label_count must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let total = header.len();
    if label_count >= total {
        return Err(Error::Argument(format!(
            "label_count {label_count} leaves no feature columns in a file with {total} columns"
        )));
    }
    let d = total - label_count;
    let names: Vec<String> = header.iter().map(str::to_owned).collect();

    let mut feats = Vec::new();
    let mut labs = Vec::new();
    let mut n = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(n + 2, |p| p.line() as usize);
        if record.len() != total {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {total} columns, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                message: format!("column {} ({}): {field:?} is not a number", j + 1, names[j]),
            })?;
            feats.push(v);
        }
        for (j, field) in record.iter().skip(d).enumerate() {
            let v = match field {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(Error::Validation(format!(
                        "row {line}, column {} ({}): label value {other:?} is not 0 or 1",
                        d + j + 1,
                        names[d + j]
                    )))
                }
            };
            labs.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation("CSV file has no data rows".into()));
    }
    let features = Array2::from_shape_vec((n, d), feats).expect("shape");
    let labels = Array2::from_shape_vec((n, label_count), labs).expect("shape");
    let mut feature_names = names;
    let label_names = feature_names.split_off(d);
    MultiLabelDataset::new(features, labels, feature_names, label_names)
}

/// Writes `ds` in the format read by [`load_csv`].
pub fn save_csv(ds: &MultiLabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// [`save_csv`] over any writer. Floats use the shortest round-trip form.
pub fn write_csv<W: Write>(ds: &MultiLabelDataset, w: &mut W) -> std::io::Result<()> {
    let header: Vec<&str> = ds
        .feature_names
        .iter()
        .chain(ds.label_names.iter())
        .map(String::as_str)
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..ds.n_rows() {
        line.clear();
        for (j, v) in ds.feature_row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        for v in ds.label_row(i) {
            line.push(',');
            line.push(if *v == 1 { '1' } else { '0' });
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a CSV of 0/1 columns (a header line, then one row per example).
///
/// With `last = Some(l)` only the trailing `l` columns are taken, so a full
/// dataset file can serve as ground truth.
pub fn load_label_matrix(path: impl AsRef<Path>, last: Option<usize>) -> Result<(Vec<String>, Array2<u8>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let total = header.len();
    let l = last.unwrap_or(total);
    if l == 0 || l > total {
        return Err(Error::Argument(format!("cannot take {l} label column(s) from {total}")));
    }
    let skip = total - l;
    let names: Vec<String> = header.iter().skip(skip).map(str::to_owned).collect();
    let mut values = Vec::new();
    let mut n = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(n + 2, |p| p.line() as usize);
        for (j, field) in record.iter().skip(skip).enumerate() {
            values.push(match field {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(Error::Validation(format!(
                        "row {line}, column {} ({}): label value {other:?} is not 0 or 1",
                        skip + j + 1,
                        names[j]
                    )))
                }
            });
        }
        n += 1;
    }
    let labels = Array2::from_shape_vec((n, l), values).expect("uniform record length");
    Ok((names, labels))
}

/// Writes a 0/1 matrix with a header line.
pub fn write_label_matrix<W: Write>(names: &[String], labels: &Array2<u8>, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", names.join(","))?;
    for row in labels.rows() {
        let line: Vec<&str> = row.iter().map(|&v| if v == 1 { "1" } else { "0" }).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    /// Zero marks a constant column.
    pub stddevs: Vec<f64>,
}

impl StandardizationParams {
    pub fn fit(ds: &MultiLabelDataset) -> Self {
        let n = ds.n_rows() as f64;
        let mut means = Vec::with_capacity(ds.n_features());
        let mut stddevs = Vec::with_capacity(ds.n_features());
        for col in ds.features.columns() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                means.push(first);
                stddevs.push(0.0);
                continue;
            }
            let mean = col.sum() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            stddevs.push(var.sqrt());
        }
        Self { means, stddevs }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Standardizes a single feature vector in place.
    pub fn transform_row(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Argument(format!(
                "feature vector has {} entries, standardization expects {}",
                x.len(),
                self.dim()
            )));
        }
        for ((v, &m), &s) in x.iter_mut().zip(&self.means).zip(&self.stddevs) {
            *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
        }
        Ok(())
    }
}

/// Standardizes every column to mean 0 and population std 1; constant columns become 0.
pub fn standardize(ds: &MultiLabelDataset) -> (MultiLabelDataset, StandardizationParams) {
    let params = StandardizationParams::fit(ds);
    let out = apply_standardization(ds, &params).expect("params fit on the same dataset");
    (out, params)
}

pub fn apply_standardization(
    ds: &MultiLabelDataset,
    params: &StandardizationParams,
) -> Result<MultiLabelDataset> {
    if params.dim() != ds.n_features() {
        return Err(Error::Argument(format!(
            "standardization has {} columns, dataset has {}",
            params.dim(),
            ds.n_features()
        )));
    }
    let mut out = ds.clone();
    for mut row in out.features.rows_mut() {
        params.transform_row(row.as_slice_mut().expect("standard layout"))?;
    }
    Ok(out)
}

/// A disjoint, exhaustive two-way partition of a dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: MultiLabelDataset,
    pub validation: MultiLabelDataset,
    /// Source row indices of `train` in the parent dataset.
    pub train_rows: Vec<usize>,
    /// Source row indices of `validation` in the parent dataset.
    pub validation_rows: Vec<usize>,
    /// Fraction of the parent rows in `train`.
    pub ratio: f64,
}

fn shuffled_rows(n: usize, seed: RngSeed) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    idx
}

/// Size of the training part: round-half-up of `t·n`, kept inside `1..n`.
pub fn train_part_size(n: usize, t: f64) -> usize {
    let m = (t * n as f64 + 0.5).floor() as usize;
    m.clamp(1, n.saturating_sub(1).max(1))
}

/// Uniform random split into a training part of `round(t·N)` rows and a validation part.
pub fn split_train_validation(ds: &MultiLabelDataset, t: f64, seed: RngSeed) -> Result<SplitPair> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Argument(format!("split ratio {t} is outside (0, 1)")));
    }
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::Argument(format!("cannot split {n} row(s)")));
    }
    let idx = shuffled_rows(n, seed);
    let m = train_part_size(n, t);
    let (a, v) = idx.split_at(m);
    Ok(SplitPair {
        train: ds.select_rows(a)?,
        validation: ds.select_rows(v)?,
        train_rows: a.to_vec(),
        validation_rows: v.to_vec(),
        ratio: m as f64 / n as f64,
    })
}

/// `k` folds; `validation` of each pair is the test fold, `train` its complement.
///
/// Test fold sizes differ by at most one; the first `N mod k` folds are larger.
pub fn kfold(ds: &MultiLabelDataset, k: usize, seed: RngSeed) -> Result<Vec<SplitPair>> {
    let n = ds.n_rows();
    if k < 2 || k > n {
        return Err(Error::Argument(format!(
            "fold count {k} must lie in 2..={n}"
        )));
    }
    let idx = shuffled_rows(n, seed);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test: Vec<usize> = idx[start..start + size].to_vec();
        test.sort_unstable();
        start += size;
        let in_test: HashSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = (0..n).filter(|r| !in_test.contains(r)).collect();
        folds.push(SplitPair {
            train: ds.select_rows(&train)?,
            validation: ds.select_rows(&test)?,
            ratio: train.len() as f64 / n as f64,
            train_rows: train,
            validation_rows: test,
        });
    }
    Ok(folds)
}

/// Row indices of a bag of `round(fraction·N)` rows drawn without replacement.
pub fn bag_rows(n: usize, fraction: f64, seed: RngSeed) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!(
            "bag fraction {fraction} is outside (0, 1]"
        )));
    }
    let m = ((fraction * n as f64 + 0.5).floor() as usize).clamp(1, n);
    let mut rng = seed.rng();
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

/// Uniform sample without replacement of `round(fraction·N)` rows.
pub fn bag_sample(ds: &MultiLabelDataset, fraction: f64, seed: RngSeed) -> Result<MultiLabelDataset> {
    let rows = bag_rows(ds.n_rows(), fraction, seed)?;
    ds.select_rows(&rows)
}
