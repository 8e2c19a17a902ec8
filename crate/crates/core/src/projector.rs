//! Matrix-free forward and backward projection through the circulant
//! decomposition `H = [C_1 … C_w] (I_w ⊗ E)`.
//!
//! Forward: `g = F⁻¹ Σ_i d_i ⊙ F(v_i)` with `v = (I_w ⊗ E) f`.
//! Backward: `Hᵀu = (I_w ⊗ E)ᵀ [F⁻¹(conj(d_i) ⊙ F u)]_i`, reusing `F u` for
//! every band. `F` is the length-`n` real-to-complex transform, so all
//! Hadamard products run over `beta = n/2 + 1` bins.

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::calibration::KernelSet;
use crate::error::Result;
use crate::geometry::SystemGeometry;
use crate::index_map::{embed_into, extract_scaled_into};
use crate::model::{Datacube, FpaImage};
use crate::real::Real;
use crate::spectrum::{full_from_half, HalfSpectrumPlan};

/// A linear operator pair `(H, Hᵀ)` over one geometry.
///
/// Implemented by the spectral projector and by the explicit system matrix,
/// so the solver can run against either.
pub trait Projector<T: Real> {
    fn geometry(&self) -> &SystemGeometry;

    /// `out = H f`; `f` has length `m`, `out` length `n`.
    fn forward_into(&mut self, f: &[T], out: &mut [T]);

    /// `out = Hᵀ u`; `u` has length `n`, `out` length `m`.
    fn backward_into(&mut self, u: &[T], out: &mut [T]);

    fn name(&self) -> &'static str;
}

/// Reusable buffers for one in-flight projection.
pub struct ProjectorWorkspace<T: Real> {
    geometry: SystemGeometry,
    plan: HalfSpectrumPlan<T>,
    /// Embedded datacube, `n * w`. Clobbered by the forward transforms.
    v: Vec<T>,
    /// Per-band back-projections, `n * w`.
    z: Vec<T>,
    /// Per-band spectra, `beta * w`.
    band_spectra: Vec<Complex<T>>,
    accumulator: Vec<Complex<T>>,
    /// Spectrum of the back-projected image.
    u_spectrum: Vec<Complex<T>>,
    u_real: Vec<T>,
    /// One transform scratch area per band.
    scratch: Vec<Complex<T>>,
}

impl<T: Real> ProjectorWorkspace<T> {
    pub fn new(geometry: &SystemGeometry) -> Self {
        let (n, w, beta) = (geometry.n(), geometry.w(), geometry.beta());
        let plan = HalfSpectrumPlan::<T>::new(n);
        let scratch = vec![Complex::default(); plan.scratch_len.max(1) * w];
        ProjectorWorkspace {
            geometry: geometry.clone(),
            plan,
            v: vec![T::zero(); n * w],
            z: vec![T::zero(); n * w],
            band_spectra: vec![Complex::default(); beta * w],
            accumulator: vec![Complex::default(); beta],
            u_spectrum: vec![Complex::default(); beta],
            u_real: vec![T::zero(); n],
            scratch,
        }
    }

    pub fn geometry(&self) -> &SystemGeometry {
        &self.geometry
    }

    fn scratch_stride(&self) -> usize {
        self.plan.scratch_len.max(1)
    }
}

fn check_geometry(kernels: &SystemGeometry, other: &SystemGeometry) -> Result<()> {
    kernels.ensure_same_shape(other)
}

/// `out = H f` through the half-spectrum path. Slices must be sized from the
/// workspace geometry.
pub fn forward_into<T: Real>(
    kernels: &KernelSet<T>,
    f: &[T],
    ws: &mut ProjectorWorkspace<T>,
    out: &mut [T],
) {
    let g = kernels.geometry();
    let (n, beta) = (g.n(), g.beta());
    assert_eq!(out.len(), n);
    let stride = ws.scratch_stride();
    let plan = &ws.plan;

    embed_into(g, f, &mut ws.v);

    ws.v.par_chunks_mut(n)
        .zip(ws.band_spectra.par_chunks_mut(beta))
        .zip(ws.scratch.par_chunks_mut(stride))
        .enumerate()
        .for_each(|(band, ((plane, spectrum), scratch))| {
            plan.forward(plane, spectrum, scratch);
            for (s, d) in spectrum.iter_mut().zip(kernels.spectral(band)) {
                *s = *s * *d;
            }
        });

    // Band-major sum per bin: each bin adds bands 0..w in order, so the
    // result does not depend on how bins are split across threads.
    let band_spectra = &ws.band_spectra;
    ws.accumulator
        .par_iter_mut()
        .enumerate()
        .for_each(|(k, acc)| {
            let mut sum = Complex::default();
            for band in band_spectra.chunks_exact(beta) {
                sum = sum + band[k];
            }
            *acc = sum;
        });

    let (head, _) = ws.scratch.split_at_mut(stride);
    plan.inverse(&mut ws.accumulator, out, head);
    let inv_n = T::one() / T::from_usize(n).unwrap();
    out.par_iter_mut().for_each(|x| *x = *x * inv_n);
}

/// `out = Hᵀ u` through the half-spectrum path (conjugated kernel spectra).
pub fn backward_into<T: Real>(
    kernels: &KernelSet<T>,
    u: &[T],
    ws: &mut ProjectorWorkspace<T>,
    out: &mut [T],
) {
    let g = kernels.geometry();
    let (n, beta) = (g.n(), g.beta());
    assert_eq!(u.len(), n);
    let stride = ws.scratch_stride();
    let plan = &ws.plan;

    ws.u_real.copy_from_slice(u);
    plan.forward(
        &mut ws.u_real,
        &mut ws.u_spectrum,
        &mut ws.scratch[..stride],
    );

    let u_spectrum = &ws.u_spectrum;
    ws.z.par_chunks_mut(n)
        .zip(ws.band_spectra.par_chunks_mut(beta))
        .zip(ws.scratch.par_chunks_mut(stride))
        .enumerate()
        .for_each(|(band, ((plane, spectrum), scratch))| {
            for ((s, d), uk) in spectrum
                .iter_mut()
                .zip(kernels.spectral(band))
                .zip(u_spectrum)
            {
                *s = d.conj() * *uk;
            }
            plan.inverse(spectrum, plane, scratch);
        });

    let inv_n = T::one() / T::from_usize(n).unwrap();
    extract_scaled_into(g, &ws.z, inv_n, out);
}

/// Forward projection `g = H f`.
pub fn forward<T: Real>(
    kernels: &KernelSet<T>,
    f: &Datacube<T>,
    ws: &mut ProjectorWorkspace<T>,
) -> Result<FpaImage<T>> {
    check_geometry(kernels.geometry(), f.geometry())?;
    check_geometry(kernels.geometry(), ws.geometry())?;
    let mut out = vec![T::zero(); kernels.geometry().n()];
    forward_into(kernels, f.data(), ws, &mut out);
    FpaImage::new(kernels.geometry(), out)
}

/// Simulated measurement: `H f` through any projector, with FFT roundoff
/// below zero clamped so the result is a valid EM input.
pub fn project<T: Real, P: Projector<T> + ?Sized>(
    projector: &mut P,
    f: &Datacube<T>,
) -> Result<FpaImage<T>> {
    ensure_projector_geometry(projector, f.geometry())?;
    let mut out = vec![T::zero(); f.geometry().n()];
    projector.forward_into(f.data(), &mut out);
    for x in &mut out {
        *x = x.max(T::zero());
    }
    FpaImage::new(f.geometry(), out)
}

/// Backward projection `Hᵀ u`.
pub fn backward<T: Real>(
    kernels: &KernelSet<T>,
    u: &FpaImage<T>,
    ws: &mut ProjectorWorkspace<T>,
) -> Result<Datacube<T>> {
    check_geometry(kernels.geometry(), u.geometry())?;
    check_geometry(kernels.geometry(), ws.geometry())?;
    let mut out = vec![T::zero(); kernels.geometry().m()];
    backward_into(kernels, u.data(), ws, &mut out);
    Datacube::new(kernels.geometry(), out)
}

/// Result of the full-spectrum backward path, with the imaginary residue
/// that was discarded by the final real cast.
#[derive(Debug, Clone)]
pub struct FullSpectrumBackward<T> {
    pub cube: Datacube<T>,
    /// `max |Im|` over the per-band outputs divided by their `max |Re|`.
    pub imaginary_residue: f64,
}

/// `Hᵀ u` evaluated as `C_iᵀ u = F D_i F⁻¹ u` with full-length complex
/// transforms. Slower than [`backward`]; kept as an independent cross-check
/// of the conjugate half-spectrum form. Allocates its own buffers.
pub fn full_spectrum_backward<T: Real>(
    kernels: &KernelSet<T>,
    u: &FpaImage<T>,
) -> Result<FullSpectrumBackward<T>> {
    let g = kernels.geometry();
    check_geometry(g, u.geometry())?;
    let (n, w) = (g.n(), g.w());
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let inv_n = T::one() / T::from_usize(n).unwrap();

    // F⁻¹ u, shared by every band.
    let mut u_inv: Vec<Complex<T>> = u
        .data()
        .iter()
        .map(|&x| Complex::new(x, T::zero()))
        .collect();
    ifft.process(&mut u_inv);
    for x in u_inv.iter_mut() {
        *x = *x * inv_n;
    }

    let mut z = vec![T::zero(); n * w];
    let mut residue = 0.0f64;
    let mut peak = 0.0f64;
    for band in 0..w {
        let full_d = full_from_half(kernels.spectral(band), n);
        let mut buf: Vec<Complex<T>> = u_inv.iter().zip(&full_d).map(|(x, d)| *x * *d).collect();
        fft.process(&mut buf);
        for (dst, c) in z[band * n..(band + 1) * n].iter_mut().zip(&buf) {
            *dst = c.re;
            residue = residue.max(c.im.abs().to_f64_lossless());
            peak = peak.max(c.re.abs().to_f64_lossless());
        }
    }
    let mut out = vec![T::zero(); g.m()];
    extract_scaled_into(g, &z, T::one(), &mut out);
    Ok(FullSpectrumBackward {
        cube: Datacube::new(g, out)?,
        imaginary_residue: if peak > 0.0 { residue / peak } else { residue },
    })
}

/// The spectral projector bound to one kernel set, owning its workspace.
pub struct SpectralProjector<'k, T: Real> {
    kernels: &'k KernelSet<T>,
    workspace: ProjectorWorkspace<T>,
}

impl<'k, T: Real> SpectralProjector<'k, T> {
    pub fn new(kernels: &'k KernelSet<T>) -> Self {
        SpectralProjector {
            kernels,
            workspace: ProjectorWorkspace::new(kernels.geometry()),
        }
    }

    pub fn kernels(&self) -> &KernelSet<T> {
        self.kernels
    }

    pub fn forward(&mut self, f: &Datacube<T>) -> Result<FpaImage<T>> {
        forward(self.kernels, f, &mut self.workspace)
    }

    pub fn backward(&mut self, u: &FpaImage<T>) -> Result<Datacube<T>> {
        backward(self.kernels, u, &mut self.workspace)
    }
}

impl<T: Real> Projector<T> for SpectralProjector<'_, T> {
    fn geometry(&self) -> &SystemGeometry {
        self.kernels.geometry()
    }

    fn forward_into(&mut self, f: &[T], out: &mut [T]) {
        forward_into(self.kernels, f, &mut self.workspace, out)
    }

    fn backward_into(&mut self, u: &[T], out: &mut [T]) {
        backward_into(self.kernels, u, &mut self.workspace, out)
    }

    fn name(&self) -> &'static str {
        "wbh"
    }
}

pub fn ensure_projector_geometry<T: Real, P: Projector<T> + ?Sized>(
    projector: &P,
    other: &SystemGeometry,
) -> Result<()> {
    projector.geometry().ensure_same_shape(other)
}
