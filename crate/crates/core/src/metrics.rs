//! Eleven multi-label quality criteria, all reported as losses (lower is better).
//!
//! Zero-denominator conventions, per row for example-based criteria and per
//! label for macro criteria: FDR is 0 when nothing is predicted, FNR is 0 when
//! nothing is relevant, and the F1 loss is 0 when both sets are empty.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion tallies of one label over all rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelTally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl LabelTally {
    fn add(&mut self, other: &LabelTally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

fn fdr(tp: f64, fp: f64) -> f64 {
    if tp + fp > 0.0 {
        fp / (tp + fp)
    } else {
        0.0
    }
}

fn fnr(tp: f64, fn_: f64) -> f64 {
    if tp + fn_ > 0.0 {
        fn_ / (tp + fn_)
    } else {
        0.0
    }
}

fn f1_loss(tp: f64, fp: f64, fn_: f64) -> f64 {
    let den = 2.0 * tp + fp + fn_;
    if den > 0.0 {
        1.0 - 2.0 * tp / den
    } else {
        0.0
    }
}

/// Names of the eleven criteria, in report order.
pub const CRITERIA: [&str; 11] = [
    "hamming",
    "zero_one",
    "ex_fdr",
    "ex_fnr",
    "ex_f1_loss",
    "macro_fdr",
    "macro_fnr",
    "macro_f1_loss",
    "micro_fdr",
    "micro_fnr",
    "micro_f1_loss",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub hamming: f64,
    pub zero_one: f64,
    pub ex_fdr: f64,
    pub ex_fnr: f64,
    pub ex_f1_loss: f64,
    pub macro_fdr: f64,
    pub macro_fnr: f64,
    pub macro_f1_loss: f64,
    pub micro_fdr: f64,
    pub micro_fnr: f64,
    pub micro_f1_loss: f64,
    #[serde(skip)]
    pub support: Vec<LabelTally>,
}

impl EvaluationReport {
    /// The eleven values in [`CRITERIA`] order.
    pub fn values(&self) -> [f64; 11] {
        [
            self.hamming,
            self.zero_one,
            self.ex_fdr,
            self.ex_fnr,
            self.ex_f1_loss,
            self.macro_fdr,
            self.macro_fnr,
            self.macro_f1_loss,
            self.micro_fdr,
            self.micro_fnr,
            self.micro_f1_loss,
        ]
    }

    pub fn get(&self, criterion: &str) -> Option<f64> {
        CRITERIA
            .iter()
            .position(|&c| c == criterion)
            .map(|k| self.values()[k])
    }

    /// Flat JSON object keyed by the criterion names.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain floats")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// Aggregate tallies over all labels.
    pub fn micro_tally(&self) -> LabelTally {
        let mut t = LabelTally::default();
        for s in &self.support {
            t.add(s);
        }
        t
    }
}

/// Scores `predicted` against `truth`; both are N×L 0/1 matrices.
pub fn evaluate(truth: &Array2<u8>, predicted: &Array2<u8>) -> Result<EvaluationReport> {
    if truth.dim() != predicted.dim() {
        return Err(Error::Argument(format!(
            "truth {:?} and prediction {:?} differ in shape",
            truth.dim(),
            predicted.dim()
        )));
    }
    let (n, l) = truth.dim();
    if n == 0 || l == 0 {
        return Err(Error::Argument("evaluation needs at least one row and label".into()));
    }
    if truth.iter().chain(predicted.iter()).any(|&v| v > 1) {
        return Err(Error::Argument("label matrices must contain only 0 and 1".into()));
    }

    let mut support = vec![LabelTally::default(); l];
    let (mut wrong_bits, mut wrong_rows) = (0u64, 0u64);
    let (mut ex_fdr, mut ex_fnr, mut ex_f1) = (0.0, 0.0, 0.0);
    for (t_row, p_row) in truth.rows().into_iter().zip(predicted.rows()) {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (j, (&t, &p)) in t_row.iter().zip(p_row.iter()).enumerate() {
            let s = &mut support[j];
            match (t, p) {
                (1, 1) => {
                    tp += 1;
                    s.tp += 1;
                }
                (0, 1) => {
                    fp += 1;
                    s.fp += 1;
                }
                (1, 0) => {
                    fn_ += 1;
                    s.fn_ += 1;
                }
                _ => s.tn += 1,
            }
        }
        wrong_bits += fp + fn_;
        wrong_rows += u64::from(fp + fn_ > 0);
        let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
        ex_fdr += fdr(tp, fp);
        ex_fnr += fnr(tp, fn_);
        ex_f1 += f1_loss(tp, fp, fn_);
    }

    let nf = n as f64;
    let lf = l as f64;
    let macro_of = |f: &dyn Fn(&LabelTally) -> f64| support.iter().map(f).sum::<f64>() / lf;
    let macro_fdr = macro_of(&|s| fdr(s.tp as f64, s.fp as f64));
    let macro_fnr = macro_of(&|s| fnr(s.tp as f64, s.fn_ as f64));
    let macro_f1_loss = macro_of(&|s| f1_loss(s.tp as f64, s.fp as f64, s.fn_ as f64));

    let mut micro = LabelTally::default();
    for s in &support {
        micro.add(s);
    }
    let (tp, fp, fn_) = (micro.tp as f64, micro.fp as f64, micro.fn_ as f64);

    Ok(EvaluationReport {
        hamming: wrong_bits as f64 / (nf * lf),
        zero_one: wrong_rows as f64 / nf,
        ex_fdr: ex_fdr / nf,
        ex_fnr: ex_fnr / nf,
        ex_f1_loss: ex_f1 / nf,
        macro_fdr,
        macro_fnr,
        macro_f1_loss,
        micro_fdr: fdr(tp, fp),
        micro_fnr: fnr(tp, fn_),
        micro_f1_loss: f1_loss(tp, fp, fn_),
        support,
    })
}

/// Mean of each criterion over several reports (e.g. CV folds).
pub fn mean_values(reports: &[EvaluationReport]) -> Option<[f64; 11]> {
    if reports.is_empty() {
        return None;
    }
    let mut acc = [0.0; 11];
    for r in reports {
        for (a, v) in acc.iter_mut().zip(r.values()) {
            *a += v;
        }
    }
    Some(acc.map(|a| a / reports.len() as f64))
}
