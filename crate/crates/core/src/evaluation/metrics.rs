use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::granularity::LabelSequence;

use super::EvalError;

/// Binary confusion counts relative to `positive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub positive: Label,
}

impl ConfusionCounts {
    pub fn new(positive: Label) -> Self {
        Self {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 0,
            positive,
        }
    }

    pub fn record(&mut self, pred: Label, gold: Label) {
        let p = pred == self.positive;
        let g = gold == self.positive;
        match (p, g) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn from_pairs(pred: &[Label], gold: &[Label], positive: Label) -> Self {
        let mut c = Self::new(positive);
        for (&p, &g) in pred.iter().zip(gold) {
            c.record(p, g);
        }
        c
    }

    /// Same predictions scored with the other label as positive.
    pub fn flipped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
            positive: self.positive.other(),
        }
    }

    /// Adds `other`'s counts; both must share the positive label.
    pub fn merge(&mut self, other: &Self) {
        let o = if other.positive == self.positive {
            *other
        } else {
            other.flipped()
        };
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn correct(&self) -> u64 {
        self.tp + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2tp / (2tp + fp + fn)`, the harmonic mean of precision and recall.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// Zero when the denominator is zero.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts for two label sequences at the same level.
pub fn confusion(
    pred: &LabelSequence,
    gold: &LabelSequence,
    positive: Label,
) -> Result<ConfusionCounts, EvalError> {
    if pred.level != gold.level {
        return Err(EvalError::LevelMismatch {
            pred: pred.level,
            gold: gold.level,
        });
    }
    if pred.labels.len() != gold.labels.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.labels.len(),
            gold: gold.labels.len(),
        });
    }
    Ok(ConfusionCounts::from_pairs(
        &pred.labels,
        &gold.labels,
        positive,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::granularity::Level;
    use proptest::prelude::*;
    use Label::{Human as H, Machine as M};

    fn seq(level: Level, labels: Vec<Label>) -> LabelSequence {
        let n = labels.len();
        LabelSequence {
            level,
            labels,
            alignment: (0..n).map(|i| (i, i + 1)).collect(),
        }
    }

    #[test]
    fn formula_example() {
        let c = ConfusionCounts {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 5,
            positive: M,
        };
        assert_eq!(c.accuracy(), 0.8);
        assert_eq!(c.precision(), 0.75);
        assert_eq!(c.recall(), 0.75);
        assert_eq!(c.f1(), 0.75);
    }

    #[test]
    fn perfect_and_all_positive() {
        let gold = seq(Level::Word, vec![H, M, M, H]);
        let c = confusion(&gold, &gold, M).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(c.f1(), 1.0);
        let c = confusion(&seq(Level::Word, vec![M; 4]), &gold, M).unwrap();
        assert_eq!(c.precision(), 0.5);
        assert_eq!(c.recall(), 1.0);
    }

    #[test]
    fn zero_denominators() {
        let c = ConfusionCounts::new(M);
        assert_eq!([c.accuracy(), c.precision(), c.recall(), c.f1()], [0.0; 4]);
    }

    #[test]
    fn mismatches_are_errors() {
        let a = seq(Level::Word, vec![H]);
        assert!(matches!(
            confusion(&a, &seq(Level::Sentence, vec![H]), M),
            Err(EvalError::LevelMismatch { .. })
        ));
        assert!(matches!(
            confusion(&a, &seq(Level::Word, vec![H, H]), M),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn flip_and_merge(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..40)) {
            let lab = |b: bool| if b { M } else { H };
            let pred: Vec<Label> = pairs.iter().map(|p| lab(p.0)).collect();
            let gold: Vec<Label> = pairs.iter().map(|p| lab(p.1)).collect();
            let m = ConfusionCounts::from_pairs(&pred, &gold, M);
            let h = ConfusionCounts::from_pairs(&pred, &gold, H);
            prop_assert_eq!(m.flipped(), h);
            prop_assert_eq!(m.total(), pairs.len() as u64);
            prop_assert_eq!(m.accuracy(), h.accuracy());
            let mut acc = ConfusionCounts::new(M);
            acc.merge(&h);
            prop_assert_eq!(acc, m);
        }
    }
}
