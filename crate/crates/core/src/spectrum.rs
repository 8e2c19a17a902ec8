//! Thin layer over `realfft` for the length-`n` half-spectrum transforms.
//!
//! Forward transforms are unnormalized; the `1/n` factor belongs to the
//! inverse and is applied by the caller exactly once per round trip.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::real::Real;

#[derive(Clone)]
pub struct HalfSpectrumPlan<T: Real> {
    pub r2c: Arc<dyn RealToComplex<T>>,
    pub c2r: Arc<dyn ComplexToReal<T>>,
    pub scratch_len: usize,
}

impl<T: Real> HalfSpectrumPlan<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = RealFftPlanner::<T>::new();
        let r2c = planner.plan_fft_forward(n);
        let c2r = planner.plan_fft_inverse(n);
        let scratch_len = r2c.get_scratch_len().max(c2r.get_scratch_len());
        HalfSpectrumPlan {
            r2c,
            c2r,
            scratch_len,
        }
    }

    pub fn len(&self) -> usize {
        self.r2c.len()
    }

    /// Half spectrum of `input`; `input` is used as scratch and left garbage.
    pub fn forward(&self, input: &mut [T], output: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        self.r2c
            .process_with_scratch(input, output, &mut scratch[..self.scratch_len])
            .expect("half-spectrum buffers are sized from the plan");
    }

    /// Unnormalized inverse. The imaginary parts of the DC bin (and the
    /// Nyquist bin for even `n`) are discarded; they are zero for spectra of
    /// real signals up to roundoff.
    pub fn inverse(&self, input: &mut [Complex<T>], output: &mut [T], scratch: &mut [Complex<T>]) {
        let n = self.len();
        debug_assert!(self.residue_is_small(input));
        input[0].im = T::zero();
        if n.is_multiple_of(2) && n > 0 {
            input[n / 2].im = T::zero();
        }
        self.c2r
            .process_with_scratch(input, output, &mut scratch[..self.scratch_len])
            .expect("half-spectrum buffers are sized from the plan");
    }

    /// Imaginary residue in the bins that must be real, relative to the
    /// spectrum magnitude.
    fn residue_is_small(&self, spectrum: &[Complex<T>]) -> bool {
        let n = self.len();
        let scale = spectrum
            .iter()
            .map(|c| c.norm().to_f64_lossless())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut residue = spectrum[0].im.abs().to_f64_lossless();
        if n.is_multiple_of(2) && n > 0 {
            residue = residue.max(spectrum[n / 2].im.abs().to_f64_lossless());
        }
        let tol = if T::DTYPE == crate::real::Dtype::F64 {
            1e-10
        } else {
            1e-4
        };
        residue <= tol * scale
    }
}

/// Half spectrum of a real signal, allocating.
pub fn half_spectrum<T: Real>(signal: &[T]) -> Vec<Complex<T>> {
    let plan = HalfSpectrumPlan::<T>::new(signal.len());
    let mut input = signal.to_vec();
    let mut output = vec![Complex::default(); signal.len() / 2 + 1];
    let mut scratch = vec![Complex::default(); plan.scratch_len];
    plan.forward(&mut input, &mut output, &mut scratch);
    output
}

/// Rebuild the full length-`n` spectrum from its half by conjugate symmetry.
pub fn full_from_half<T: Real>(half: &[Complex<T>], n: usize) -> Vec<Complex<T>> {
    let mut full = vec![Complex::default(); n];
    for k in 0..n {
        full[k] = if k < half.len() {
            half[k]
        } else {
            half[n - k].conj()
        };
    }
    full
}
