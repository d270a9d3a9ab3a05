//! Stacking images into network input tensors.

use crate::autodiff::Tensor;
use crate::data::RasterImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `[n, c, h, w]` tensor from equally shaped images.
pub fn stack_images<T: Scalar>(images: &[&RasterImage]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::shape("cannot stack an empty batch"))?;
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if (img.channels(), img.height(), img.width()) != (c, h, w) {
            return Err(Error::shape(format!(
                "batch mixes {c}x{h}x{w} with {}x{}x{}",
                img.channels(),
                img.height(),
                img.width()
            )));
        }
        match img.as_f32() {
            Some(v) => data.extend(v.iter().map(|&x| T::lit(f64::from(x)))),
            None => {
                for ch in 0..c {
                    data.extend(img.plane_f32(ch).into_iter().map(|x| T::lit(f64::from(x))));
                }
            }
        }
    }
    Tensor::new(vec![images.len(), c, h, w], data)
}
