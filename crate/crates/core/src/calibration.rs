//! Calibration kernels, column sums, and synthetic kernels and scenes.
//!
//! Band `i` of a shift-invariant instrument is fully described by its
//! calibration image `c_i`: the FPA response to a monochromatic point source
//! at field-stop position `(0, 0)`. Every other column of the system matrix is
//! a cyclic shift of `c_i`, so the projectors only ever need `c_i` and its
//! half spectrum `d_i`.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::model::{validate_nonnegative, Datacube, FpaImage};
use crate::real::Real;
use crate::spectrum::HalfSpectrumPlan;

/// Per-band calibration kernels in spatial and half-spectrum form.
#[derive(Debug, Clone)]
pub struct KernelSet<T> {
    geometry: SystemGeometry,
    /// `w` planes of length `n`.
    spatial: Vec<T>,
    /// `w` half spectra of length `beta`.
    spectral: Vec<Complex<T>>,
}

impl<T: Real> KernelSet<T> {
    pub fn geometry(&self) -> &SystemGeometry {
        &self.geometry
    }

    pub fn spatial(&self, band: usize) -> &[T] {
        let n = self.geometry.n();
        &self.spatial[band * n..(band + 1) * n]
    }

    pub fn spectral(&self, band: usize) -> &[Complex<T>] {
        let beta = self.geometry.beta();
        &self.spectral[band * beta..(band + 1) * beta]
    }

    /// All spatial kernels, band after band.
    pub fn spatial_flat(&self) -> &[T] {
        &self.spatial
    }

    pub fn spatial_image(&self, band: usize) -> FpaImage<T> {
        FpaImage::new(&self.geometry, self.spatial(band).to_vec())
            .expect("stored kernels are validated")
    }

    pub fn kernel_sum(&self, band: usize) -> T {
        self.spatial(band).iter().copied().sum()
    }

    /// Element-wise conversion to another precision. Spectra are recomputed.
    pub fn cast<U: Real>(&self) -> KernelSet<U> {
        let spatial = self
            .spatial
            .iter()
            .map(|x| U::from_f64_lossy(x.to_f64_lossless()))
            .collect();
        KernelSet::from_flat(&self.geometry, spatial).expect("cast preserves validity")
    }

    /// Build from `w` concatenated kernels of length `n`.
    pub fn from_flat(geometry: &SystemGeometry, spatial: Vec<T>) -> Result<Self> {
        let (n, w, beta) = (geometry.n(), geometry.w(), geometry.beta());
        if spatial.len() != n * w {
            return Err(Error::LengthMismatch {
                what: "kernel set",
                expected: n * w,
                found: spatial.len(),
            });
        }
        validate_nonnegative(&spatial)?;
        warn_if_support_wraps(geometry, &spatial);

        let plan = HalfSpectrumPlan::<T>::new(n);
        let mut spectral = vec![Complex::default(); beta * w];
        spectral
            .par_chunks_mut(beta)
            .zip(spatial.par_chunks(n))
            .for_each_init(
                || {
                    (
                        vec![T::zero(); n],
                        vec![Complex::default(); plan.scratch_len],
                    )
                },
                |(input, scratch), (out, kernel)| {
                    input.copy_from_slice(kernel);
                    plan.forward(input, out, scratch);
                },
            );

        Ok(KernelSet {
            geometry: geometry.clone(),
            spatial,
            spectral,
        })
    }
}

/// Kernels with support that a field-stop shift could push past the FPA edge
/// make the circulant model differ from the physical one. Accepted, but noted.
fn warn_if_support_wraps<T: Real>(geometry: &SystemGeometry, spatial: &[T]) {
    let (gamma, n) = (geometry.gamma(), geometry.n());
    let row_limit = gamma - geometry.a();
    let col_limit = geometry.xi() - geometry.alpha();
    for (band, kernel) in spatial.chunks(n).enumerate() {
        let wraps = kernel
            .iter()
            .enumerate()
            .any(|(p, &v)| v != T::zero() && (p % gamma > row_limit || p / gamma > col_limit));
        if wraps {
            log::warn!(
                "kernel for band {band} has support within the field-stop extent of the FPA edge; \
                 shifted copies wrap around"
            );
        }
    }
}

pub fn build_kernel_set<T: Real>(
    geometry: &SystemGeometry,
    calibration_images: &[FpaImage<T>],
) -> Result<KernelSet<T>> {
    if calibration_images.len() != geometry.w() {
        return Err(Error::CountMismatch {
            expected: geometry.w(),
            found: calibration_images.len(),
        });
    }
    let mut spatial = Vec::with_capacity(geometry.n() * geometry.w());
    for image in calibration_images {
        geometry.ensure_same_shape(image.geometry())?;
        spatial.extend_from_slice(image.data());
    }
    KernelSet::from_flat(geometry, spatial)
}

/// The EM normalizer `h`: column sums of the system matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSums<T> {
    geometry: SystemGeometry,
    data: Vec<T>,
}

impl<T: Real> ColumnSums<T> {
    pub fn geometry(&self) -> &SystemGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Every column of block `i` is a cyclic shift of `c_i`, so it sums to `sum(c_i)`.
pub fn column_sums<T: Real>(kernels: &KernelSet<T>) -> Result<ColumnSums<T>> {
    let g = kernels.geometry();
    let mut data = Vec::with_capacity(g.m());
    for band in 0..g.w() {
        let sum = kernels.kernel_sum(band);
        if !(sum > T::zero()) {
            return Err(Error::ZeroColumn {
                band,
                sum: sum.to_f64_lossless(),
            });
        }
        data.extend(std::iter::repeat_n(sum, g.ell()));
    }
    Ok(ColumnSums {
        geometry: g.clone(),
        data,
    })
}

/// Layout of synthetic calibration spots.
///
/// Each band renders a zeroth-order spot at `center` plus `orders`
/// first-order spots evenly spaced in angle at radius
/// `base_radius + dispersion * band`. Spots are Gaussians with integral
/// `amplitude` (before truncation at `4 * sigma`). Coordinates are
/// `(row, col)` in FPA pixels for a source at field-stop position `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotSpec {
    pub center: (f64, f64),
    pub orders: usize,
    pub base_radius: f64,
    pub dispersion: f64,
    pub sigma: f64,
    pub amplitude: f64,
    pub zeroth_amplitude: f64,
    /// Relative amplitude jitter per spot, drawn from the seed.
    pub jitter: f64,
}

const TRUNCATION_SIGMAS: f64 = 4.0;

impl SpotSpec {
    /// Default layout sized so every band fits the region a kernel may occupy
    /// without wrapping: rows `0..=gamma-a`, cols `0..=xi-alpha`.
    pub fn fitted(geometry: &SystemGeometry) -> Self {
        let sigma = 0.8;
        let half_rows = (geometry.gamma() - geometry.a()) as f64 / 2.0;
        let half_cols = (geometry.xi() - geometry.alpha()) as f64 / 2.0;
        let max_radius = (half_rows.min(half_cols) - TRUNCATION_SIGMAS * sigma).floor();
        let w = geometry.w();
        let (orders, base_radius, dispersion) = if max_radius < 1.0 {
            (0, 0.0, 0.0)
        } else if w == 1 {
            (8, 0.6 * max_radius, 0.0)
        } else {
            (8, 0.4 * max_radius, 0.6 * max_radius / (w - 1) as f64)
        };
        SpotSpec {
            center: (half_rows, half_cols),
            orders,
            base_radius,
            dispersion,
            sigma,
            amplitude: 1.0,
            zeroth_amplitude: 1.0,
            jitter: 0.1,
        }
    }

    pub fn radius(&self, band: usize) -> f64 {
        self.base_radius + self.dispersion * band as f64
    }

    /// Analytic spot centers for a band, zeroth order first.
    pub fn spot_centers(&self, band: usize) -> Vec<(f64, f64)> {
        let radius = self.radius(band);
        let mut centers = vec![self.center];
        centers.extend((0..self.orders).map(|k| {
            let theta = 2.0 * PI * k as f64 / self.orders as f64;
            (
                self.center.0 + radius * theta.sin(),
                self.center.1 + radius * theta.cos(),
            )
        }));
        centers
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && self.sigma.is_finite()
            && self.amplitude >= 0.0
            && self.zeroth_amplitude >= 0.0
            && (0.0..1.0).contains(&self.jitter)
            && self.base_radius >= 0.0
            && self.dispersion.is_finite()
            && self.center.0.is_finite()
            && self.center.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid spot spec {self:?}")))
        }
    }
}

/// Render seeded Gaussian-spot kernels that never wrap under any field-stop shift.
pub fn synth_kernels<T: Real>(
    geometry: &SystemGeometry,
    spec: &SpotSpec,
    seed: u64,
) -> Result<KernelSet<T>> {
    spec.validate()?;
    let (gamma, n) = (geometry.gamma(), geometry.n());
    let row_limit = (gamma - geometry.a()) as f64;
    let col_limit = (geometry.xi() - geometry.alpha()) as f64;
    let reach = TRUNCATION_SIGMAS * spec.sigma;
    let norm = 1.0 / (2.0 * PI * spec.sigma * spec.sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut spatial = vec![0.0f64; n * geometry.w()];
    for band in 0..geometry.w() {
        let plane = &mut spatial[band * n..(band + 1) * n];
        for (k, (cr, cc)) in spec.spot_centers(band).into_iter().enumerate() {
            let (r0, r1) = ((cr - reach).ceil(), (cr + reach).floor());
            let (c0, c1) = ((cc - reach).ceil(), (cc + reach).floor());
            if r0 < 0.0 || c0 < 0.0 || r1 > row_limit || c1 > col_limit {
                return Err(Error::SpotOutOfBounds {
                    band,
                    detail: format!(
                        "spot {k} at ({cr:.2}, {cc:.2}) covers rows {r0}..={r1}, cols {c0}..={c1}; \
                         allowed rows 0..={row_limit}, cols 0..={col_limit}"
                    ),
                });
            }
            let base = if k == 0 {
                spec.zeroth_amplitude
            } else {
                spec.amplitude
            };
            let amplitude = base * (1.0 + spec.jitter * rng.gen_range(-1.0..=1.0));
            for r in r0 as usize..=r1 as usize {
                for c in c0 as usize..=c1 as usize {
                    let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                    if d2 <= reach * reach {
                        plane[r + gamma * c] +=
                            amplitude * norm * (-d2 / (2.0 * spec.sigma * spec.sigma)).exp();
                    }
                }
            }
        }
    }
    KernelSet::from_flat(
        geometry,
        spatial.into_iter().map(T::from_f64_lossy).collect(),
    )
}

/// Unit impulse at FPA pixel `(row, col)` for every band: `C_i` is a pure shift.
pub fn impulse_kernels<T: Real>(
    geometry: &SystemGeometry,
    row: usize,
    col: usize,
) -> Result<KernelSet<T>> {
    if row >= geometry.gamma() || col >= geometry.xi() {
        return Err(Error::SpotOutOfBounds {
            band: 0,
            detail: format!("impulse at ({row}, {col}) is outside the FPA"),
        });
    }
    let n = geometry.n();
    let mut spatial = vec![T::zero(); n * geometry.w()];
    for band in 0..geometry.w() {
        spatial[band * n + row + geometry.gamma() * col] = T::one();
    }
    KernelSet::from_flat(geometry, spatial)
}

/// Synthetic scene contents.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneKind {
    /// Every voxel set to one value; `Constant(100.0)` is the fully
    /// illuminated field stop.
    Constant(f64),
    /// 8-bit RGB image of `a` rows by `alpha` columns, one channel per band.
    Rgb(PathBuf),
    /// Uniform values in `[0, 100)` from a seeded generator.
    Random(u64),
}

pub fn synth_scene<T: Real>(geometry: &SystemGeometry, kind: &SceneKind) -> Result<Datacube<T>> {
    match kind {
        SceneKind::Constant(value) => {
            if !value.is_finite() {
                return Err(Error::NonFinite { index: 0 });
            }
            Ok(Datacube::filled(geometry, T::from_f64_lossy(*value)))
        }
        SceneKind::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let data = (0..geometry.m())
                .map(|_| T::from_f64_lossy(rng.gen_range(0.0..100.0)))
                .collect();
            Datacube::new(geometry, data)
        }
        SceneKind::Rgb(path) => {
            if geometry.w() != 3 {
                return Err(Error::BandMismatch { w: geometry.w() });
            }
            crate::io::read_rgb_scene(path, geometry)
        }
    }
}
