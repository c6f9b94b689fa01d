//! Label orders and chain predictions shared by both base models.

use rand::seq::SliceRandom;

use crate::dataset::RngSeed;
use crate::error::{Error, Result};

/// A bijection on `0..L`. `order[i]` is the label decided at chain step `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelPermutation {
    order: Vec<usize>,
    inverse: Vec<usize>,
}

impl LabelPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let l = order.len();
        if l == 0 {
            return Err(Error::Argument("permutation must cover at least one label".into()));
        }
        let mut inverse = vec![usize::MAX; l];
        for (pos, &label) in order.iter().enumerate() {
            if label >= l || inverse[label] != usize::MAX {
                return Err(Error::Argument(format!(
                    "{order:?} is not a permutation of 0..{l}"
                )));
            }
            inverse[label] = pos;
        }
        Ok(Self { order, inverse })
    }

    pub fn identity(l: usize) -> Self {
        let order: Vec<usize> = (0..l).collect();
        Self {
            inverse: order.clone(),
            order,
        }
    }

    pub fn random(l: usize, seed: RngSeed) -> Self {
        let mut order: Vec<usize> = (0..l).collect();
        order.shuffle(&mut seed.rng());
        Self::new(order).expect("shuffle of a range")
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Label decided at chain step `step` (0-based).
    pub fn label_at(&self, step: usize) -> usize {
        self.order[step]
    }

    /// Chain step (0-based) at which `label` is decided.
    pub fn position_of(&self, label: usize) -> usize {
        self.inverse[label]
    }

    /// Parses a whitespace- or comma-separated list of label indices.
    pub fn parse(text: &str) -> Result<Self> {
        let order = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Argument(format!("bad label index {s:?} in permutation")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(order)
    }

    /// Every permutation of `0..l` in lexicographic order.
    pub fn all(l: usize) -> Vec<LabelPermutation> {
        let mut out = Vec::new();
        let mut current: Vec<usize> = (0..l).collect();
        loop {
            out.push(Self::new(current.clone()).expect("valid"));
            // next lexicographic permutation
            let Some(i) = (0..l.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1])
            else {
                break;
            };
            let j = (i + 1..l).rev().find(|&j| current[j] > current[i]).expect("exists");
            current.swap(i, j);
            current[i + 1..].reverse();
        }
        out
    }
}

impl std::fmt::Display for LabelPermutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.order.iter().map(usize::to_string).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Hard decisions plus per-label relevance scores in `[0, 1]`.
///
/// Both vectors are indexed by label, not by chain position.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub hard: Vec<u8>,
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty()
    }
}
