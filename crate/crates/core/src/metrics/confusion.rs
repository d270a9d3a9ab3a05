//! Confusion matrices and the IoU / F1 scores derived from them.

use serde::{Deserialize, Serialize};

use crate::data::LabelMask;
use crate::error::{Error, Result};

/// `counts[gt * k + pred]`, plus a tally of ignored pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
    pub ignored: u64,
}

/// True positives, false positives and false negatives of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Per-class scores (`None` when undefined) and their mean over defined classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k], ignored: 0 }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    /// Adds one `(gt, pred)` pair; `gt == ignore` only bumps the ignored tally.
    pub fn add(&mut self, gt: usize, pred: usize, ignore: usize) -> Result<()> {
        if gt == ignore {
            self.ignored += 1;
            return Ok(());
        }
        for v in [gt, pred] {
            if v >= self.k {
                return Err(Error::ClassOutOfRange { value: v, classes: self.k });
            }
        }
        self.counts[gt * self.k + pred] += 1;
        Ok(())
    }

    pub fn update(&mut self, pred: &LabelMask, gt: &LabelMask, ignore: u8) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::shape(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        let mut next = self.clone();
        for (&g, &p) in gt.data().iter().zip(pred.data()) {
            next.add(usize::from(g), usize::from(p), usize::from(ignore))?;
        }
        *self = next;
        Ok(())
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix> {
        if self.k != other.k {
            return Err(Error::shape(format!("merging {}-class and {}-class matrices", self.k, other.k)));
        }
        Ok(ConfusionMatrix {
            k: self.k,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            ignored: self.ignored + other.ignored,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn class_counts(&self, c: usize) -> ClassCounts {
        let tp = self.get(c, c);
        let row: u64 = (0..self.k).map(|p| self.get(c, p)).sum();
        let col: u64 = (0..self.k).map(|g| self.get(g, c)).sum();
        ClassCounts { tp, fp: col - tp, fn_: row - tp }
    }

    fn scores(&self, f: impl Fn(ClassCounts) -> (u64, u64)) -> ClassScores {
        let per_class: Vec<Option<f64>> = (0..self.k)
            .map(|c| {
                let (num, den) = f(self.class_counts(c));
                (den > 0).then(|| num as f64 / den as f64)
            })
            .collect();
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        ClassScores { per_class, mean }
    }

    /// `TP / (TP + FP + FN)` per class; classes with an empty union are undefined.
    pub fn iou_scores(&self) -> ClassScores {
        self.scores(|c| (c.tp, c.tp + c.fp + c.fn_))
    }

    /// `2TP / (2TP + FP + FN)` per class.
    pub fn f1_scores(&self) -> ClassScores {
        self.scores(|c| (2 * c.tp, 2 * c.tp + c.fp + c.fn_))
    }

    /// Fraction of non-ignored pixels on the diagonal.
    pub fn pixel_accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (0..self.k).map(|c| self.get(c, c)).sum::<u64>() as f64 / total as f64)
    }
}
