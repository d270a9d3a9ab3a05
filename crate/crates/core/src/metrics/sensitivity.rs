//! Accuracy of a classifier under channel permutations of its input.

use serde::{Deserialize, Serialize};

use super::topk::{argmax, label_rank};
use crate::autodiff::Tensor;
use crate::batch::stack_images;
use crate::csp::{apply_plan, ChannelPlan};
use crate::data::{normalize, NormStats, RasterImage, Sample};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::scalar::Scalar;

const EVAL_BATCH: usize = 64;

/// A named channel permutation: output channel `j` reads input channel `perm[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedPermutation {
    pub name: String,
    pub perm: Vec<usize>,
}

impl NamedPermutation {
    pub fn identity(c: usize) -> Self {
        Self { name: "identity".into(), perm: (0..c).collect() }
    }

    pub fn reversal(c: usize) -> Self {
        Self { name: "reversed".into(), perm: (0..c).rev().collect() }
    }

    /// Name built from band labels, e.g. `BGR` for a reversed `R,G,B` input.
    pub fn labelled(perm: Vec<usize>, bands: &[String]) -> Self {
        let name = if bands.iter().all(|b| b.chars().count() == 1) {
            perm.iter().map(|&p| bands[p].as_str()).collect::<String>()
        } else {
            perm.iter().map(|&p| bands[p].as_str()).collect::<Vec<_>>().join(",")
        };
        Self { name, perm }
    }
}

/// Classification accuracy under one input permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub name: String,
    pub perm: Vec<usize>,
    pub top1: f64,
    pub top5: Option<f64>,
    /// Accuracy per class; `None` for classes without samples.
    pub per_class: Vec<Option<f64>>,
    pub delta_top1: f64,
    pub delta_top5: Option<f64>,
    pub per_class_delta: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub strategy: String,
    pub samples: usize,
    pub class_names: Vec<String>,
    pub rows: Vec<PermutationResult>,
}

struct Accuracy {
    top1: f64,
    top5: Option<f64>,
    per_class: Vec<Option<f64>>,
}

fn evaluate<T: Scalar>(net: &Network<T>, inputs: &[RasterImage], labels: &[usize]) -> Result<Accuracy> {
    let k = net.spec().num_classes;
    let (mut hit1, mut hit5) = (0usize, 0usize);
    let mut class_hits = vec![0usize; k];
    let mut class_total = vec![0usize; k];
    for (chunk, lab) in inputs.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let refs: Vec<&RasterImage> = chunk.iter().collect();
        let logits: Tensor<T> = net.predict(stack_images(&refs)?)?;
        for (row, &l) in logits.data().chunks_exact(k).zip(lab) {
            let rank = label_rank(row, l);
            class_total[l] += 1;
            if argmax(row) == l {
                hit1 += 1;
                class_hits[l] += 1;
            }
            if rank < 5 {
                hit5 += 1;
            }
        }
    }
    let n = inputs.len() as f64;
    Ok(Accuracy {
        top1: hit1 as f64 / n,
        top5: (k >= 5).then(|| hit5 as f64 / n),
        per_class: class_hits.iter().zip(&class_total).map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64)).collect(),
    })
}

/// Permutations act on the normalized data channels. When the network takes
/// more channels than the data has, the permuted channels are then expanded
/// with the natural plan (`j ↦ j mod m`).
pub fn permutation_sensitivity<T: Scalar>(
    net: &Network<T>,
    samples: &[Sample],
    stats: &NormStats,
    permutations: &[NamedPermutation],
    strategy: &str,
    class_names: &[String],
) -> Result<SensitivityReport> {
    let first = samples.first().ok_or_else(|| Error::EmptyDataset("evaluation".into()))?;
    let m = first.image.channels();
    let expand = ChannelPlan::natural(m, net.spec().input_channels)?;
    let normalized = samples.iter().map(|s| normalize(&s.image, stats)).collect::<Result<Vec<_>>>()?;
    let labels = samples
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::config("split", "sensitivity needs classification labels")))
        .collect::<Result<Vec<_>>>()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= net.spec().num_classes) {
        return Err(Error::ClassOutOfRange { value: bad, classes: net.spec().num_classes });
    }
    let mut results = Vec::new();
    for p in permutations {
        if p.perm.len() != m {
            return Err(Error::config(
                "permutations",
                format!("{} has {} entries for {m} channels", p.name, p.perm.len()),
            ));
        }
        let plan = ChannelPlan::permutation(&p.perm)
            .map_err(|_| Error::config("permutations", format!("{} is not a permutation of 0..{m}", p.name)))?;
        let full = expand.after(&plan);
        let inputs = normalized.iter().map(|img| apply_plan(img, &full)).collect::<Result<Vec<_>>>()?;
        results.push((p, evaluate(net, &inputs, &labels)?));
    }
    let base = results.first().map(|(_, a)| (a.top1, a.top5, a.per_class.clone()));
    let rows = results
        .into_iter()
        .map(|(p, a)| {
            let (b1, b5, bpc) = base.clone().expect("at least one row");
            PermutationResult {
                name: p.name.clone(),
                perm: p.perm.clone(),
                delta_top1: a.top1 - b1,
                delta_top5: a.top5.zip(b5).map(|(x, y)| x - y),
                per_class_delta: a.per_class.iter().zip(&bpc).map(|(x, y)| x.zip(*y).map(|(x, y)| x - y)).collect(),
                top1: a.top1,
                top5: a.top5,
                per_class: a.per_class,
            }
        })
        .collect();
    Ok(SensitivityReport {
        strategy: strategy.to_string(),
        samples: samples.len(),
        class_names: class_names.to_vec(),
        rows,
    })
}
