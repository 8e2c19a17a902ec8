//! Explicit system matrix and brute-force products.
//!
//! Column `j` of `H` is the band-`floor(j / ell)` kernel cyclically shifted by
//! the in-plane embed position of `j`, i.e. column `j` of `C_s E`. This is the
//! ground truth for the spectral projector and the "bf" benchmark arm.

use rayon::prelude::*;

use crate::calibration::{ColumnSums, KernelSet};
use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::index_map::embed_index;
use crate::model::{Datacube, FpaImage};
use crate::projector::Projector;
use crate::real::Real;
use crate::solver::{apply_ratio, clamp_forward};

/// Largest `n` for which [`Storage::Auto`] picks dense storage.
pub const DENSE_FALLBACK_MAX_N: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    /// Dense when `n <= DENSE_FALLBACK_MAX_N`, sparse otherwise.
    Auto,
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    /// Cap on `n * w`.
    pub max_nw: usize,
    /// Cap on `n * m` stored values when dense.
    pub max_dense_entries: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_nw: 1_000_000,
            max_dense_entries: 1 << 25,
        }
    }
}

#[derive(Debug, Clone)]
enum Columns<T> {
    /// Column-major `n × m`.
    Dense(Vec<T>),
    /// Compressed sparse columns.
    Sparse {
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<T>,
    },
}

#[derive(Debug, Clone)]
pub struct DenseSystemMatrix<T> {
    geometry: SystemGeometry,
    columns: Columns<T>,
}

pub fn build_dense_h<T: Real>(kernels: &KernelSet<T>) -> Result<DenseSystemMatrix<T>> {
    build_system_matrix(kernels, Storage::Auto, OracleLimits::default())
}

pub fn build_system_matrix<T: Real>(
    kernels: &KernelSet<T>,
    storage: Storage,
    limits: OracleLimits,
) -> Result<DenseSystemMatrix<T>> {
    let g = kernels.geometry();
    let (n, m, ell) = (g.n(), g.m(), g.ell());
    if n * g.w() > limits.max_nw {
        return Err(Error::SizeCapExceeded {
            requested: n * g.w(),
            cap: limits.max_nw,
        });
    }
    let dense = match storage {
        Storage::Auto => n <= DENSE_FALLBACK_MAX_N,
        Storage::Dense => true,
        Storage::Sparse => false,
    };

    let columns = if dense {
        let entries = n.saturating_mul(m);
        if entries > limits.max_dense_entries {
            return Err(Error::SizeCapExceeded {
                requested: entries,
                cap: limits.max_dense_entries,
            });
        }
        let mut values = vec![T::zero(); entries];
        values.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
            let band = j / ell;
            let shift = embed_index(g, j) - band * n;
            let kernel = kernels.spatial(band);
            // col[r] = c[(r - shift) mod n]
            col[shift..].copy_from_slice(&kernel[..n - shift]);
            col[..shift].copy_from_slice(&kernel[n - shift..]);
        });
        Columns::Dense(values)
    } else {
        let support: Vec<Vec<(usize, T)>> = (0..g.w())
            .map(|band| {
                kernels
                    .spatial(band)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(q, v)| (q, *v))
                    .collect()
            })
            .collect();
        let mut col_ptr = Vec::with_capacity(m + 1);
        col_ptr.push(0);
        let nnz: usize = support.iter().map(|s| s.len() * ell).sum();
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for j in 0..m {
            let band = j / ell;
            let shift = embed_index(g, j) - band * n;
            for &(q, v) in &support[band] {
                row_idx.push((q + shift) % n);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        Columns::Sparse {
            col_ptr,
            row_idx,
            values,
        }
    };

    Ok(DenseSystemMatrix {
        geometry: g.clone(),
        columns,
    })
}

impl<T: Real> DenseSystemMatrix<T> {
    pub fn geometry(&self) -> &SystemGeometry {
        &self.geometry
    }

    pub fn rows(&self) -> usize {
        self.geometry.n()
    }

    pub fn cols(&self) -> usize {
        self.geometry.m()
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.columns, Columns::Dense(_))
    }

    /// Nonzero `(row, value)` pairs of column `j`, sorted by row.
    pub fn column(&self, j: usize) -> Vec<(usize, T)> {
        let mut out: Vec<(usize, T)> = match &self.columns {
            Columns::Dense(values) => {
                let n = self.rows();
                values[j * n..(j + 1) * n]
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(r, v)| (r, *v))
                    .collect()
            }
            Columns::Sparse {
                col_ptr,
                row_idx,
                values,
            } => (col_ptr[j]..col_ptr[j + 1])
                .map(|k| (row_idx[k], values[k]))
                .collect(),
        };
        out.sort_by_key(|(r, _)| *r);
        out
    }

    pub fn column_sum(&self, j: usize) -> T {
        self.column(j).into_iter().map(|(_, v)| v).sum()
    }

    fn forward_slice(&self, f: &[T], out: &mut [T]) {
        let n = self.rows();
        assert_eq!(f.len(), self.cols());
        assert_eq!(out.len(), n);
        match &self.columns {
            Columns::Dense(values) => {
                const ROWS: usize = 256;
                out.par_chunks_mut(ROWS)
                    .enumerate()
                    .for_each(|(chunk, rows)| {
                        let r0 = chunk * ROWS;
                        rows.fill(T::zero());
                        for (j, &fj) in f.iter().enumerate() {
                            let col = &values[j * n + r0..j * n + r0 + rows.len()];
                            for (o, &h) in rows.iter_mut().zip(col) {
                                *o = *o + h * fj;
                            }
                        }
                    });
            }
            Columns::Sparse {
                col_ptr,
                row_idx,
                values,
            } => {
                out.fill(T::zero());
                for (j, &fj) in f.iter().enumerate() {
                    for k in col_ptr[j]..col_ptr[j + 1] {
                        out[row_idx[k]] = out[row_idx[k]] + values[k] * fj;
                    }
                }
            }
        }
    }

    fn backward_slice(&self, u: &[T], out: &mut [T]) {
        let n = self.rows();
        assert_eq!(u.len(), n);
        assert_eq!(out.len(), self.cols());
        match &self.columns {
            Columns::Dense(values) => {
                out.par_iter_mut().enumerate().for_each(|(j, o)| {
                    let col = &values[j * n..(j + 1) * n];
                    *o = col
                        .iter()
                        .zip(u)
                        .fold(T::zero(), |acc, (&h, &x)| acc + h * x);
                });
            }
            Columns::Sparse {
                col_ptr,
                row_idx,
                values,
            } => {
                out.par_iter_mut().enumerate().for_each(|(j, o)| {
                    *o = (col_ptr[j]..col_ptr[j + 1])
                        .fold(T::zero(), |acc, k| acc + values[k] * u[row_idx[k]]);
                });
            }
        }
    }
}

pub fn bf_forward<T: Real>(h: &DenseSystemMatrix<T>, f: &Datacube<T>) -> Result<FpaImage<T>> {
    h.geometry.ensure_same_shape(f.geometry())?;
    let mut out = vec![T::zero(); h.rows()];
    h.forward_slice(f.data(), &mut out);
    FpaImage::new(&h.geometry, out)
}

pub fn bf_backward<T: Real>(h: &DenseSystemMatrix<T>, u: &FpaImage<T>) -> Result<Datacube<T>> {
    h.geometry.ensure_same_shape(u.geometry())?;
    let mut out = vec![T::zero(); h.cols()];
    h.backward_slice(u.data(), &mut out);
    Datacube::new(&h.geometry, out)
}

/// One literal EM update `(f ⊘ h) ⊙ Hᵀ(g ⊘ H f)` with the solver's
/// zero-division and clamping policy.
pub fn bf_em_step<T: Real>(
    matrix: &DenseSystemMatrix<T>,
    h: &ColumnSums<T>,
    f: &Datacube<T>,
    g: &FpaImage<T>,
    epsilon: T,
) -> Result<Datacube<T>> {
    let geometry = &matrix.geometry;
    for other in [h.geometry(), f.geometry(), g.geometry()] {
        geometry.ensure_same_shape(other)?;
    }
    let mut hf = vec![T::zero(); matrix.rows()];
    matrix.forward_slice(f.data(), &mut hf);
    clamp_forward(&mut hf);
    let ratio: Vec<T> = g
        .data()
        .iter()
        .zip(&hf)
        .map(|(&gp, &fp)| apply_ratio(gp, fp, epsilon))
        .collect();
    let mut back = vec![T::zero(); matrix.cols()];
    matrix.backward_slice(&ratio, &mut back);
    let next = f
        .data()
        .iter()
        .zip(h.data())
        .zip(&back)
        .map(|((&fj, &hj), &bj)| (fj / hj) * bj.max(T::zero()))
        .collect();
    Datacube::new(geometry, next)
}

impl<T: Real> Projector<T> for DenseSystemMatrix<T> {
    fn geometry(&self) -> &SystemGeometry {
        &self.geometry
    }

    fn forward_into(&mut self, f: &[T], out: &mut [T]) {
        self.forward_slice(f, out)
    }

    fn backward_into(&mut self, u: &[T], out: &mut [T]) {
        self.backward_slice(u, out)
    }

    fn name(&self) -> &'static str {
        "bf"
    }
}
