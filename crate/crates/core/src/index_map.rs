//! The zero-padding embedding `(I_w ⊗ E)` and its transpose as index maps.
//!
//! Voxel `j` of the datacube lands at position
//! `i = j - s*ell + (gamma - a) * floor((j - s*ell) / a) + s*n` with
//! `s = floor(j / ell)`, i.e. voxel `(r, c)` of band `s` goes to FPA pixel
//! `(r, c)` of plane `s`. No arithmetic touches the values.

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::SystemGeometry;
use crate::model::{Datacube, EmbeddedStack};
use crate::real::Real;

/// Position in the embedded stack that datacube index `j` maps to.
#[inline]
pub fn embed_index(geometry: &SystemGeometry, j: usize) -> usize {
    let (ell, a) = (geometry.ell(), geometry.a());
    let s = j / ell;
    let local = j - s * ell;
    local + (geometry.gamma() - a) * (local / a) + s * geometry.n()
}

/// `v = (I_w ⊗ E) f`, zero-filling `out` first.
///
/// `f` has length `m` and `out` length `n * w`.
pub fn embed_into<T: Real>(geometry: &SystemGeometry, f: &[T], out: &mut [T]) {
    let (a, gamma, ell, n) = (geometry.a(), geometry.gamma(), geometry.ell(), geometry.n());
    assert_eq!(f.len(), geometry.m());
    assert_eq!(out.len(), n * geometry.w());

    // One column of the field stop is `a` consecutive voxels and lands at the
    // top of an FPA column, so each column of each band is one slice copy.
    out.par_chunks_mut(n)
        .zip(f.par_chunks(ell))
        .for_each(|(plane, block)| {
            plane.fill(T::zero());
            for (col, src) in block.chunks_exact(a).enumerate() {
                plane[gamma * col..gamma * col + a].copy_from_slice(src);
            }
        });
}

pub fn embed<T: Real>(f: &Datacube<T>) -> EmbeddedStack<T> {
    let geometry = f.geometry();
    let mut out = EmbeddedStack::zeros(geometry);
    embed_into(geometry, f.data(), out.data_mut());
    out
}

/// `zeta = (I_w ⊗ E)^T z`, each value multiplied by `scale`.
pub fn extract_scaled_into<T: Real>(geometry: &SystemGeometry, z: &[T], scale: T, out: &mut [T]) {
    let (a, gamma, ell, n) = (geometry.a(), geometry.gamma(), geometry.ell(), geometry.n());
    assert_eq!(z.len(), n * geometry.w());
    assert_eq!(out.len(), geometry.m());

    out.par_chunks_mut(ell)
        .zip(z.par_chunks(n))
        .for_each(|(block, plane)| {
            for (col, dst) in block.chunks_exact_mut(a).enumerate() {
                let src = &plane[gamma * col..gamma * col + a];
                if scale == T::one() {
                    dst.copy_from_slice(src);
                } else {
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = s * scale;
                    }
                }
            }
        });
}

pub fn extract_into<T: Real>(geometry: &SystemGeometry, z: &[T], out: &mut [T]) {
    extract_scaled_into(geometry, z, T::one(), out)
}

pub fn extract<T: Real>(z: &EmbeddedStack<T>) -> Datacube<T> {
    let geometry = z.geometry();
    let mut out = Datacube::zeros(geometry);
    extract_into(geometry, z.data(), out.data_mut());
    out
}

/// Checked variant of [`embed`] for callers that hold a raw vector.
pub fn embed_vec<T: Real>(geometry: &SystemGeometry, f: Vec<T>) -> Result<EmbeddedStack<T>> {
    Ok(embed(&Datacube::new(geometry, f)?))
}
