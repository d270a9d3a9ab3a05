use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Position of `label` when classes are ordered by descending score, ties
/// going to the lower class index.
pub fn label_rank<T: Scalar>(row: &[T], label: usize) -> usize {
    let s = row[label];
    row.iter().enumerate().filter(|&(c, &v)| v > s || (v == s && c < label)).count()
}

/// Index of the highest score, lowest index on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Fraction of rows whose label is among the `k` highest logits.
pub fn topk_accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize], k: usize) -> Result<f64> {
    let (n, classes) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
    }
    if k == 0 || k > classes {
        return Err(Error::config("k", format!("k = {k} must be in 1..={classes}")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::ClassOutOfRange { value: bad, classes });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let hits = logits.data().chunks_exact(classes).zip(labels).filter(|(row, &l)| label_rank(row, l) < k).count();
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, v: Vec<f64>) -> Tensor<f64> {
        let k = v.len() / rows;
        Tensor::new(vec![rows, k], v).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(topk_accuracy(&t(1, vec![0.1, 0.5, 0.2]), &[1], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&t(1, vec![0.5, 0.5]), &[1], 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&t(1, vec![0.5, 0.5]), &[0], 1).unwrap(), 1.0);
        let l = t(2, vec![3.0, 1.0, 2.0, 0.0, 0.0, 9.0]);
        assert_eq!(topk_accuracy(&l, &[1, 0], 3).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&l, &[2, 2], 2).unwrap(), 1.0);
        assert!(topk_accuracy(&l, &[0, 0], 4).is_err());
        assert!(topk_accuracy(&l, &[0], 1).is_err());
    }
}
