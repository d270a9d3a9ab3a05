//! Moving a pre-trained encoder into a fresh network.

use super::checkpoint::Checkpoint;
use super::network::{Network, STEM_WEIGHT};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Resizes a stem weight `[w, n_old, kh, kw]` to `n_new` input channels.
/// The first `min(n_old, n_new)` slices are kept, extra slices take the mean
/// of the original slices, and everything is scaled by `n_old / n_new`.
pub fn adapt_input_stem<T: Scalar>(weight: &Tensor<T>, n_new: usize) -> Result<Tensor<T>> {
    let (w, n_old, kh, kw) = weight.dims4()?;
    if n_new == 0 {
        return Err(Error::config("input_channels", "must be at least 1"));
    }
    if n_new == n_old {
        return Ok(weight.clone());
    }
    let k = kh * kw;
    let scale = T::lit(n_old as f64 / n_new as f64);
    let src = weight.data();
    let mut out = Vec::with_capacity(w * n_new * k);
    for o in 0..w {
        let filt = &src[o * n_old * k..(o + 1) * n_old * k];
        let mean: Vec<T> = (0..k)
            .map(|j| {
                let mut acc = T::zero();
                for c in 0..n_old {
                    acc += filt[c * k + j];
                }
                acc / T::lit(n_old as f64)
            })
            .collect();
        for c in 0..n_new {
            if c < n_old {
                out.extend(filt[c * k..(c + 1) * k].iter().map(|&v| v * scale));
            } else {
                out.extend(mean.iter().map(|&v| v * scale));
            }
        }
    }
    Tensor::new(vec![w, n_new, kh, kw], out)
}

/// Copies every encoder tensor of `ckpt` into `target`, adapting the stem
/// when channel counts differ. Returns the new network and whether the stem
/// was adapted.
pub fn transfer_encoder<T: Scalar>(ckpt: &Checkpoint, target: &Network<T>) -> Result<(Network<T>, bool)> {
    if ckpt.meta.width != target.spec().width {
        return Err(Error::WidthMismatch { checkpoint: ckpt.meta.width, target: target.spec().width });
    }
    let mut out = target.clone();
    let mut adapted = false;
    for name in target.encoder_names() {
        let src = ckpt.tensor(&name).ok_or_else(|| Error::MissingTensor(name.clone()))?.cast::<T>();
        let value = if name == STEM_WEIGHT && ckpt.meta.input_channels != target.spec().input_channels {
            adapted = true;
            adapt_input_stem(&src, target.spec().input_channels)?
        } else {
            src
        };
        out.set_param(&name, value)?;
    }
    Ok((out, adapted))
}
