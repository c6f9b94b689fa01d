//! Lazy nearest-neighbour classifier chain.
//!
//! At chain step `i` the distance between a query and a training point is the
//! Euclidean distance over the features extended with the labels decided at
//! steps `1..i`. Changing the order only changes which label columns enter the
//! distance, so the stored training set never changes.

use std::cmp::Ordering as CmpOrdering;
use std::io::Write as _;
use std::path::Path;

use crate::dataset::{read_csv, write_csv, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::permutation::{LabelPermutation, Prediction};

const FORMAT_TAG: &str = "dynchain-knn-chain";
const FORMAT_VERSION: u32 = 1;

/// The retained training set plus the neighbour count `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnChainModel {
    train: MultiLabelDataset,
    r: usize,
}

/// The `r` closest training rows, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub member_rows: Vec<usize>,
    pub distances: Vec<f64>,
}

impl KnnChainModel {
    pub fn new(train: MultiLabelDataset, r: usize) -> Result<Self> {
        if r == 0 || r > train.n_rows() {
            return Err(Error::Argument(format!(
                "neighbour count {r} must lie in 1..={}",
                train.n_rows()
            )));
        }
        Ok(Self { train, r })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn train(&self) -> &MultiLabelDataset {
        &self.train
    }

    pub fn n_labels(&self) -> usize {
        self.train.n_labels()
    }

    pub fn n_features(&self) -> usize {
        self.train.n_features()
    }

    /// Same training set with another neighbour count.
    pub fn with_r(&self, r: usize) -> Result<Self> {
        Self::new(self.train.clone(), r)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Argument(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    fn feature_sq_distances(&self, x: &[f64]) -> Vec<f64> {
        (0..self.train.n_rows())
            .map(|n| squared_euclidean(x, self.train.feature_row(n)))
            .collect()
    }

    /// Chain prediction under order `pi`.
    ///
    /// Each label's score is the fraction of its step's neighbours carrying
    /// the label; the decision is 1 only for scores strictly above one half.
    pub fn predict_chain(&self, x: &[f64], pi: &LabelPermutation) -> Result<Prediction> {
        self.check_dim(x)?;
        let l = self.n_labels();
        if pi.len() != l {
            return Err(Error::Argument(format!(
                "permutation covers {} labels, model has {l}",
                pi.len()
            )));
        }
        let feat = self.feature_sq_distances(x);
        // Σ over decided labels of (h − y')², per training row
        let mut label_sq = vec![0.0f64; feat.len()];
        let mut hard = vec![0u8; l];
        let mut scores = vec![0.0; l];
        let mut dist = vec![0.0f64; feat.len()];
        for step in 0..l {
            for ((d, &f), &s) in dist.iter_mut().zip(&feat).zip(&label_sq) {
                *d = (f + s).sqrt();
            }
            let members = nearest(&dist, self.r);
            let label = pi.label_at(step);
            let (score, h) = self.vote(&members, label);
            scores[label] = score;
            hard[label] = h;
            for (n, s) in label_sq.iter_mut().enumerate() {
                if self.train.labels()[[n, label]] != h {
                    *s += 1.0;
                }
            }
        }
        Ok(Prediction { hard, scores })
    }

    /// Binary-relevance prediction: every label voted on by the feature-only
    /// (step-one) neighbourhood.
    pub fn predict_br(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        let dist: Vec<f64> = self.feature_sq_distances(x).into_iter().map(f64::sqrt).collect();
        let members = nearest(&dist, self.r);
        let (scores, hard) = (0..self.n_labels()).map(|label| self.vote(&members, label)).unzip();
        Ok(Prediction { hard, scores })
    }

    fn vote(&self, members: &[usize], label: usize) -> (f64, u8) {
        let positives = members
            .iter()
            .filter(|&&n| self.train.labels()[[n, label]] == 1)
            .count();
        (positives as f64 / self.r as f64, u8::from(2 * positives > self.r))
    }

    /// Header line `dynchain-knn-chain 1 r=<r> labels=<L>` followed by the
    /// training set in the dataset CSV format.
    pub fn write_text<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{FORMAT_TAG} {FORMAT_VERSION} r={} labels={}",
            self.r,
            self.n_labels()
        )?;
        write_csv(&self.train, w)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Format("missing KNN model header".into()))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        let version = FORMAT_VERSION.to_string();
        let (r, labels) = match fields.as_slice() {
            [tag, v, r, labels] if *tag == FORMAT_TAG && *v == version => (
                r.strip_prefix("r=").and_then(|v| v.parse::<usize>().ok()),
                labels.strip_prefix("labels=").and_then(|v| v.parse::<usize>().ok()),
            ),
            _ => (None, None),
        };
        let (Some(r), Some(labels)) = (r, labels) else {
            return Err(Error::Format(format!("bad KNN model header {head:?}")));
        };
        let train = read_csv(body.as_bytes(), labels)?;
        Self::new(train, r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_text(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn by_distance_then_index(dist: &[f64]) -> impl Fn(&usize, &usize) -> CmpOrdering + '_ {
    move |&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b))
}

/// Indices of the `r` smallest entries, ties broken by index, sorted ascending.
fn nearest(dist: &[f64], r: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    let cmp = by_distance_then_index(dist);
    if r < idx.len() {
        idx.select_nth_unstable_by(r - 1, &cmp);
        idx.truncate(r);
    }
    idx.sort_unstable_by(&cmp);
    idx
}

/// Permutation-dependent distance at 1-based chain step `step`.
///
/// Step 1 uses the features only; step `i > 1` adds the squared differences
/// of the labels decided at steps `1..i`, which must be set in `query_labels`.
pub fn chain_distance(
    pi: &LabelPermutation,
    step: usize,
    query_features: &[f64],
    query_labels: &[Option<u8>],
    train_features: &[f64],
    train_labels: &[u8],
) -> Result<f64> {
    check_step(pi, step, query_labels)?;
    if query_features.len() != train_features.len() {
        return Err(Error::Argument(format!(
            "feature dimensions differ: {} vs {}",
            query_features.len(),
            train_features.len()
        )));
    }
    if train_labels.len() != pi.len() {
        return Err(Error::Argument("training label vector length mismatch".into()));
    }
    Ok(distance_unchecked(pi, step, query_features, query_labels, train_features, train_labels))
}

fn check_step(pi: &LabelPermutation, step: usize, query_labels: &[Option<u8>]) -> Result<()> {
    if step == 0 || step > pi.len() {
        return Err(Error::Argument(format!(
            "chain step {step} outside 1..={}",
            pi.len()
        )));
    }
    if query_labels.len() != pi.len() {
        return Err(Error::Argument("query label vector length mismatch".into()));
    }
    for &label in &pi.order()[..step - 1] {
        if query_labels[label].is_none() {
            return Err(Error::Contract(format!(
                "label {label} is used at step {step} but has not been decided"
            )));
        }
    }
    Ok(())
}

fn distance_unchecked(
    pi: &LabelPermutation,
    step: usize,
    query_features: &[f64],
    query_labels: &[Option<u8>],
    train_features: &[f64],
    train_labels: &[u8],
) -> f64 {
    let feat = squared_euclidean(query_features, train_features);
    let labels: f64 = pi.order()[..step - 1]
        .iter()
        .map(|&l| {
            let diff = query_labels[l].expect("checked") as f64 - train_labels[l] as f64;
            diff * diff
        })
        .sum();
    (feat + labels).sqrt()
}

/// The `model.r()` training rows closest to the query at chain step `step`.
pub fn find_neighborhood(
    model: &KnnChainModel,
    pi: &LabelPermutation,
    step: usize,
    query_features: &[f64],
    query_labels: &[Option<u8>],
) -> Result<Neighborhood> {
    model.check_dim(query_features)?;
    if pi.len() != model.n_labels() {
        return Err(Error::Argument("permutation length mismatch".into()));
    }
    check_step(pi, step, query_labels)?;
    let train = model.train();
    let dist: Vec<f64> = (0..train.n_rows())
        .map(|n| {
            distance_unchecked(
                pi,
                step,
                query_features,
                query_labels,
                train.feature_row(n),
                train.label_row(n),
            )
        })
        .collect();
    let member_rows = nearest(&dist, model.r());
    let distances = member_rows.iter().map(|&n| dist[n]).collect();
    Ok(Neighborhood {
        member_rows,
        distances,
    })
}

pub fn predict_chain_knn(model: &KnnChainModel, x: &[f64], pi: &LabelPermutation) -> Result<Prediction> {
    model.predict_chain(x, pi)
}

pub fn predict_br_knn(model: &KnnChainModel, x: &[f64]) -> Result<Prediction> {
    model.predict_br(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn model(r: usize) -> KnnChainModel {
        let f = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [5.0, 5.0]];
        let l = array![[1u8, 0], [1, 1], [0, 1], [1, 0], [0, 0]];
        KnnChainModel::new(MultiLabelDataset::from_arrays(f, l).unwrap(), r).unwrap()
    }

    #[test]
    fn distances() {
        let pi = LabelPermutation::identity(3);
        let d = chain_distance(&pi, 1, &[0.0, 0.0], &[None; 3], &[3.0, 4.0], &[0, 0, 0]).unwrap();
        assert_eq!(d, 5.0);
        let d = chain_distance(
            &pi,
            3,
            &[1.0, 1.0],
            &[Some(1), Some(0), None],
            &[1.0, 1.0],
            &[1, 1, 0],
        )
        .unwrap();
        assert_eq!(d, 1.0);
        let d = chain_distance(&pi, 3, &[1.0], &[Some(1), Some(0), None], &[1.0], &[1, 0, 1]).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn undecided_label_is_contract_violation() {
        let pi = LabelPermutation::new(vec![2, 0, 1]).unwrap();
        let err = chain_distance(&pi, 2, &[0.0], &[Some(1), None, None], &[0.0], &[0, 0, 0]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn neighborhood_boundaries() {
        let m = model(5);
        let pi = LabelPermutation::identity(2);
        let nb = find_neighborhood(&m, &pi, 1, &[0.0, 0.0], &[None, None]).unwrap();
        assert_eq!(nb.member_rows.len(), 5);
        assert!(nb.distances.windows(2).all(|w| w[0] <= w[1]));

        let m = model(1);
        let nb = find_neighborhood(&m, &pi, 1, &[0.0, 1.0], &[None, None]).unwrap();
        assert_eq!(nb.member_rows, vec![2]);
        assert_eq!(nb.distances, vec![0.0]);
    }

    #[test]
    fn neighborhood_ties_by_index() {
        // rows 1, 2 and 3 are all at distance 1 from the origin-shifted query
        let m = model(2);
        let pi = LabelPermutation::identity(2);
        let nb = find_neighborhood(&m, &pi, 1, &[0.0, 0.0], &[None, None]).unwrap();
        assert_eq!(nb.member_rows, vec![0, 1]);
        let f = array![[1.0], [-1.0], [1.0], [3.0]];
        let l = array![[0u8], [1], [1], [0]];
        let m = KnnChainModel::new(MultiLabelDataset::from_arrays(f, l).unwrap(), 2).unwrap();
        let nb = find_neighborhood(&m, &LabelPermutation::identity(1), 1, &[0.0], &[None]).unwrap();
        assert_eq!(nb.member_rows, vec![0, 1]);
    }

    #[test]
    fn single_neighbour_copies_labels() {
        let m = model(1);
        for pi in LabelPermutation::all(2) {
            for k in 0..5 {
                let x = m.train().feature_row(k).to_vec();
                let p = m.predict_chain(&x, &pi).unwrap();
                assert_eq!(p.hard, m.train().label_row(k));
            }
        }
    }

    #[test]
    fn vote_scores_and_ties() {
        let f = array![[0.0], [0.1], [0.2], [0.3], [0.4], [9.0]];
        let l = array![[1u8], [1], [0], [0], [0], [1]];
        let ds = MultiLabelDataset::from_arrays(f, l).unwrap();
        let m = KnnChainModel::new(ds.clone(), 5).unwrap();
        let p = m.predict_br(&[0.0]).unwrap();
        assert!((p.scores[0] - 0.4).abs() < 1e-15);
        assert_eq!(p.hard, vec![0]);
        let m = KnnChainModel::new(ds, 4).unwrap();
        let p = m.predict_chain(&[0.0], &LabelPermutation::identity(1)).unwrap();
        assert_eq!(p.scores, vec![0.5]);
        assert_eq!(p.hard, vec![0]);
    }

    #[test]
    fn rejects_bad_r_and_dims() {
        let ds = MultiLabelDataset::from_arrays(array![[0.0]], array![[1u8]]).unwrap();
        assert!(KnnChainModel::new(ds.clone(), 0).is_err());
        assert!(KnnChainModel::new(ds.clone(), 2).is_err());
        let m = KnnChainModel::new(ds, 1).unwrap();
        assert!(matches!(m.predict_br(&[0.0, 1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn text_round_trip() {
        let m = model(3);
        let back = KnnChainModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(KnnChainModel::from_text("dynchain-knn-chain 1 r=x labels=2\na,b\n").is_err());
    }
}
