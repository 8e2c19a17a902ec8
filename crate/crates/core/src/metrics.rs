//! Reconstruction quality measures.

use crate::error::{Error, Result};
use crate::model::Datacube;
use crate::real::Real;

/// `‖est − reference‖₂ / ‖reference‖₂`, accumulated in f64.
pub fn relative_error<T: Real>(estimate: &Datacube<T>, reference: &Datacube<T>) -> Result<f64> {
    reference
        .geometry()
        .ensure_same_shape(estimate.geometry())?;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (&e, &r) in estimate.data().iter().zip(reference.data()) {
        let (e, r) = (e.to_f64_lossless(), r.to_f64_lossless());
        num += (e - r) * (e - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelError {
    /// Mean of `|a_j − b_j| / b_j` over the retained voxels.
    pub mean: f64,
    pub used: usize,
    /// Voxels with `b_j <= threshold`, left out of the mean.
    pub excluded: usize,
}

/// Average relative per-voxel deviation of `a` from `b`, skipping voxels
/// where `b` is at or below `threshold`.
pub fn avg_relative_pixel_error<T: Real>(
    a: &Datacube<T>,
    b: &Datacube<T>,
    threshold: f64,
) -> Result<PixelError> {
    b.geometry().ensure_same_shape(a.geometry())?;
    let (mut total, mut used) = (0.0f64, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x.to_f64_lossless(), y.to_f64_lossless());
        if y > threshold {
            total += (x - y).abs() / y;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::AllPixelsExcluded);
    }
    Ok(PixelError {
        mean: total / used as f64,
        used,
        excluded: b.len() - used,
    })
}
