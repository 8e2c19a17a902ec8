//! Expectation-maximization reconstruction over any [`Projector`].
//!
//! Each iteration computes
//!
//! ```text
//! g_k   = H f_k                    (clamped at 0)
//! u     = g ⊘ g_k                  (0/0 -> 0, x/0 -> x/epsilon)
//! zeta  = Hᵀ u                     (clamped at 0)
//! f_k+1 = (f_k ⊙ zeta) ⊘ h
//! ```

use std::time::Instant;

use crate::calibration::{ColumnSums, KernelSet};
use crate::error::{Error, Result};
use crate::model::{Datacube, FpaImage};
use crate::oracle::build_dense_h;
use crate::projector::{Projector, SpectralProjector};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// `f_1 = 1`.
    Ones,
    /// `f_1 = Hᵀ g`.
    Backproject,
}

impl std::str::FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ones" => Ok(Init::Ones),
            "backproject" => Ok(Init::Backproject),
            other => Err(format!(
                "unknown init `{other}` (expected ones or backproject)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub init: Init,
    /// Division guard; `None` uses the element type's default
    /// (`1e-12` for f64, `1e-6` for f32).
    pub epsilon: Option<f64>,
    pub record_residuals: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            iterations: 25,
            init: Init::Ones,
            epsilon: None,
            record_residuals: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!(
                    "epsilon must be positive, got {eps}"
                )));
            }
        }
        Ok(())
    }

    pub fn epsilon_for<T: Real>(&self) -> T {
        self.epsilon
            .map(T::from_f64_lossy)
            .unwrap_or_else(T::default_epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub cube: Datacube<T>,
    pub iteration_seconds: Vec<f64>,
    /// `‖g − H f_k‖ / ‖g‖` for the iterate entering iteration `k`.
    pub residuals: Option<Vec<f64>>,
    pub iterations: usize,
}

impl<T> SolveReport<T> {
    pub fn total_seconds(&self) -> f64 {
        self.iteration_seconds.iter().sum()
    }
}

/// Spectral roundoff can leave tiny negatives in a projection of
/// nonnegative data.
pub fn clamp_forward<T: Real>(values: &mut [T]) {
    for x in values.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// `g_p / g_k,p` under the zero-division policy. `forward` must already be
/// clamped at zero.
#[inline]
pub fn apply_ratio<T: Real>(measured: T, forward: T, epsilon: T) -> T {
    if measured == T::zero() && forward <= epsilon {
        T::zero()
    } else {
        measured / forward.max(epsilon)
    }
}

/// Step-by-step EM driver. [`em_solve`] runs it for a fixed count.
pub struct EmSolver<'a, T: Real, P: Projector<T> + ?Sized> {
    projector: &'a mut P,
    g: &'a [T],
    h: &'a [T],
    epsilon: T,
    g_norm: f64,
    f: Vec<T>,
    projection: Vec<T>,
    ratio: Vec<T>,
    zeta: Vec<T>,
}

impl<'a, T: Real, P: Projector<T> + ?Sized> EmSolver<'a, T, P> {
    pub fn new(
        projector: &'a mut P,
        g: &'a FpaImage<T>,
        h: &'a ColumnSums<T>,
        init: Init,
        epsilon: T,
    ) -> Result<Self> {
        let geometry = projector.geometry().clone();
        geometry.ensure_same_shape(g.geometry())?;
        geometry.ensure_same_shape(h.geometry())?;
        if let Some(index) = g.data().iter().position(|&x| x < T::zero()) {
            return Err(Error::NegativeImage {
                index,
                value: g.data()[index].to_f64_lossless(),
            });
        }
        if let Some(j) = h.data().iter().position(|&x| !(x > T::zero())) {
            return Err(Error::ZeroColumn {
                band: j / geometry.ell(),
                sum: h.data()[j].to_f64_lossless(),
            });
        }
        if !(epsilon > T::zero()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }

        let (n, m) = (geometry.n(), geometry.m());
        let mut f = vec![T::one(); m];
        if init == Init::Backproject {
            projector.backward_into(g.data(), &mut f);
            clamp_forward(&mut f);
        }
        let g_norm = g
            .data()
            .iter()
            .map(|x| x.to_f64_lossless().powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(EmSolver {
            projector,
            g: g.data(),
            h: h.data(),
            epsilon,
            g_norm,
            f,
            projection: vec![T::zero(); n],
            ratio: vec![T::zero(); n],
            zeta: vec![T::zero(); m],
        })
    }

    pub fn current(&self) -> &[T] {
        &self.f
    }

    /// Replace the iterate, e.g. to continue from a saved cube.
    pub fn restart_from(&mut self, f: &Datacube<T>) -> Result<()> {
        self.projector.geometry().ensure_same_shape(f.geometry())?;
        f.validate_nonnegative()?;
        self.f.copy_from_slice(f.data());
        Ok(())
    }

    /// One EM update. Returns the relative residual of the iterate that was
    /// updated.
    pub fn step(&mut self) -> f64 {
        self.projector.forward_into(&self.f, &mut self.projection);

        let mut diff2 = 0.0f64;
        for (&gp, &hp) in self.g.iter().zip(&self.projection) {
            diff2 += (gp.to_f64_lossless() - hp.to_f64_lossless()).powi(2);
        }
        let residual = if self.g_norm > 0.0 {
            diff2.sqrt() / self.g_norm
        } else {
            diff2.sqrt()
        };

        clamp_forward(&mut self.projection);
        let eps = self.epsilon;
        for ((r, &gp), &hp) in self.ratio.iter_mut().zip(self.g).zip(&self.projection) {
            *r = apply_ratio(gp, hp, eps);
        }

        self.projector.backward_into(&self.ratio, &mut self.zeta);

        for ((fj, &zj), &hj) in self.f.iter_mut().zip(&self.zeta).zip(self.h) {
            *fj = (*fj * zj.max(T::zero())) / hj;
        }
        residual
    }

    pub fn into_cube(self) -> Result<Datacube<T>> {
        let geometry = self.projector.geometry().clone();
        Datacube::new(&geometry, self.f)
    }
}

pub fn em_solve<T: Real, P: Projector<T> + ?Sized>(
    projector: &mut P,
    g: &FpaImage<T>,
    h: &ColumnSums<T>,
    cfg: &SolverConfig,
) -> Result<SolveReport<T>> {
    cfg.validate()?;
    let epsilon = cfg.epsilon_for::<T>();
    log::debug!(
        "em: K={} init={:?} epsilon={:e} backend={} (0/0 -> 0, x/0 -> x/epsilon)",
        cfg.iterations,
        cfg.init,
        epsilon.to_f64_lossless(),
        projector.name()
    );
    let mut solver = EmSolver::new(projector, g, h, cfg.init, epsilon)?;
    let mut seconds = Vec::with_capacity(cfg.iterations);
    let mut residuals = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let start = Instant::now();
        let residual = solver.step();
        seconds.push(start.elapsed().as_secs_f64());
        residuals.push(residual);
    }
    Ok(SolveReport {
        cube: solver.into_cube()?,
        iteration_seconds: seconds,
        residuals: cfg.record_residuals.then_some(residuals),
        iterations: cfg.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Half-spectrum matrix-free projector.
    Wbh,
    /// Explicit system matrix.
    Bf,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Wbh => "wbh",
            Backend::Bf => "bf",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wbh" => Ok(Backend::Wbh),
            "bf" => Ok(Backend::Bf),
            other => Err(format!("unknown backend `{other}` (expected wbh or bf)")),
        }
    }
}

/// [`em_solve`] with the projector built from `kernels` for the chosen backend.
pub fn em_solve_with_backend<T: Real>(
    kernels: &KernelSet<T>,
    g: &FpaImage<T>,
    h: &ColumnSums<T>,
    cfg: &SolverConfig,
    backend: Backend,
) -> Result<SolveReport<T>> {
    match backend {
        Backend::Wbh => em_solve(&mut SpectralProjector::new(kernels), g, h, cfg),
        Backend::Bf => em_solve(&mut build_dense_h(kernels)?, g, h, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{column_sums, impulse_kernels, synth_kernels, SpotSpec};
    use crate::geometry::SystemGeometry;
    use crate::oracle::{bf_em_step, bf_forward};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (SystemGeometry, KernelSet<f64>, ColumnSums<f64>) {
        let g = SystemGeometry::new(3, 3, 12, 11, 2).unwrap();
        let ks = synth_kernels::<f64>(&g, &SpotSpec::fitted(&g), seed).unwrap();
        let h = column_sums(&ks).unwrap();
        (g, ks, h)
    }

    #[test]
    fn ratio_policy() {
        assert_eq!(apply_ratio(0.0, 0.0, 1e-12), 0.0);
        assert_eq!(apply_ratio(0.0, 1e-13, 1e-12), 0.0);
        assert_eq!(apply_ratio(2.0, 0.0, 1e-12), 2e12);
        assert_eq!(apply_ratio(3.0, 2.0, 1e-12), 1.5);
        assert_eq!(apply_ratio(0.0, 2.0, 1e-12), 0.0);
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            iterations: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = SolverConfig {
            epsilon: Some(0.0),
            ..SolverConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert_eq!(SolverConfig::default().iterations, 25);
        assert_eq!(SolverConfig::default().epsilon_for::<f32>(), 1e-6);
        assert_eq!(SolverConfig::default().epsilon_for::<f64>(), 1e-12);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let (g, ks, h) = setup(1);
        let mut proj = SpectralProjector::new(&ks);
        let ones = Datacube::filled(&g, 1.0);
        let gimg = proj.forward(&ones).unwrap();
        let mut gclean = gimg.clone();
        clamp_forward(gclean.data_mut());
        let cfg = SolverConfig {
            iterations: 1,
            ..SolverConfig::default()
        };
        let report = em_solve(&mut proj, &gclean, &h, &cfg).unwrap();
        for &x in report.cube.data() {
            assert!((x - 1.0).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn zero_image_gives_zero_cube() {
        let (g, ks, h) = setup(2);
        let zero = FpaImage::zeros(&g);
        for k in 1..4 {
            let cfg = SolverConfig {
                iterations: k,
                ..SolverConfig::default()
            };
            let report = em_solve_with_backend(&ks, &zero, &h, &cfg, Backend::Wbh).unwrap();
            assert!(report.cube.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn one_step_matches_dense_em() {
        let (g, ks, h) = setup(3);
        let matrix = build_dense_h(&ks).unwrap();
        let truth = Datacube::filled(&g, 100.0);
        let gimg = bf_forward(&matrix, &truth).unwrap();
        let cfg = SolverConfig {
            iterations: 1,
            ..SolverConfig::default()
        };
        let wbh = em_solve(&mut SpectralProjector::new(&ks), &gimg, &h, &cfg).unwrap();
        let dense = bf_em_step(&matrix, &h, &Datacube::filled(&g, 1.0), &gimg, 1e-12).unwrap();
        for (a, b) in wbh.cube.data().iter().zip(dense.data()) {
            assert!((a - b).abs() <= 1e-8 * b.abs());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, ks, h) = setup(4);
        let mut neg = FpaImage::zeros(&g);
        neg.data_mut()[3] = -1.0;
        let cfg = SolverConfig::default();
        assert!(matches!(
            em_solve_with_backend(&ks, &neg, &h, &cfg, Backend::Wbh),
            Err(Error::NegativeImage { index: 3, .. })
        ));
        let other = SystemGeometry::new(3, 3, 12, 12, 2).unwrap();
        assert!(matches!(
            em_solve_with_backend(&ks, &FpaImage::zeros(&other), &h, &cfg, Backend::Wbh),
            Err(Error::GeometryMismatch { .. })
        ));
    }

    #[test]
    fn impulse_kernels_recover_in_one_iteration() {
        let g = SystemGeometry::new(3, 4, 5, 6, 1).unwrap();
        let ks = impulse_kernels::<f64>(&g, 0, 0).unwrap();
        let h = column_sums(&ks).unwrap();
        let truth = Datacube::filled(&g, 42.0);
        let gimg = bf_forward(&build_dense_h(&ks).unwrap(), &truth).unwrap();
        let cfg = SolverConfig {
            iterations: 1,
            ..SolverConfig::default()
        };
        let report = em_solve_with_backend(&ks, &gimg, &h, &cfg, Backend::Wbh).unwrap();
        assert!(report.cube.data().iter().all(|&x| (x - 42.0).abs() < 1e-10));
    }

    #[test]
    fn report_lengths_and_residuals() {
        let (g, ks, h) = setup(5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth =
            Datacube::new(&g, (0..g.m()).map(|_| rng.gen_range(0.0..10.0)).collect()).unwrap();
        let mut gimg = SpectralProjector::new(&ks).forward(&truth).unwrap();
        clamp_forward(gimg.data_mut());
        let cfg = SolverConfig {
            iterations: 7,
            record_residuals: true,
            init: Init::Backproject,
            ..SolverConfig::default()
        };
        let report = em_solve_with_backend(&ks, &gimg, &h, &cfg, Backend::Bf).unwrap();
        assert_eq!(report.iterations, 7);
        assert_eq!(report.iteration_seconds.len(), 7);
        let residuals = report.residuals.unwrap();
        assert_eq!(residuals.len(), 7);
        assert!(residuals.iter().all(|r| r.is_finite() && *r >= 0.0));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn iterates_stay_nonnegative_and_finite(seed in 0u64..10_000, k in 1usize..12) {
            let (g, ks, h) = setup(seed % 7);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Sparse image with exact zeros exercises both ratio branches.
            let data = (0..g.n()).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..5.0) }).collect();
            let gimg = FpaImage::new(&g, data).unwrap();
            let mut proj = SpectralProjector::new(&ks);
            let mut solver = EmSolver::new(&mut proj, &gimg, &h, Init::Ones, 1e-12).unwrap();
            for _ in 0..k {
                solver.step();
                proptest::prop_assert!(solver.current().iter().all(|x| x.is_finite() && *x >= 0.0));
            }
        }
    }
}
