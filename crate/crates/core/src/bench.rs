//! Timing harness: EM runs per (backend, K, repeat) plus median summaries.

use crate::calibration::{column_sums, KernelSet};
use crate::error::{Error, Result};
use crate::io::BenchRow;
use crate::metrics::{avg_relative_pixel_error, relative_error};
use crate::model::{Datacube, FpaImage};
use crate::oracle::{build_system_matrix, OracleLimits, Storage};
use crate::projector::{Projector, SpectralProjector};
use crate::real::Real;
use crate::solver::{em_solve, Backend, Init, SolverConfig};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub iterations: Vec<usize>,
    pub backends: Vec<Backend>,
    pub repeats: usize,
    pub init: Init,
    pub epsilon: Option<f64>,
    /// Reference voxels at or below this are skipped by the pixel error.
    pub pixel_threshold: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            iterations: vec![25],
            backends: vec![Backend::Wbh, Backend::Bf],
            repeats: 3,
            init: Init::Ones,
            epsilon: None,
            pixel_threshold: 0.0,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Runs EM on `image` for every backend, K and repeat. `seconds` is the
/// summed iteration time, excluding projector setup. Quality columns are
/// filled when a reference cube is given.
///
/// The `bf` arm always uses dense storage so its cost is the textbook
/// dense product.
pub fn run_benchmark<T: Real>(
    kernels: &KernelSet<T>,
    image: &FpaImage<T>,
    reference: Option<&Datacube<T>>,
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    if cfg.repeats == 0 || cfg.iterations.is_empty() || cfg.backends.is_empty() {
        return Err(Error::Config(
            "benchmark needs repeats, iterations and backends".into(),
        ));
    }
    let h = column_sums(kernels)?;
    let w = kernels.geometry().w();
    let mut rows = Vec::new();
    for &backend in &cfg.backends {
        let mut projector: Box<dyn Projector<T> + '_> = match backend {
            Backend::Wbh => Box::new(SpectralProjector::new(kernels)),
            Backend::Bf => Box::new(build_system_matrix(
                kernels,
                Storage::Dense,
                OracleLimits::default(),
            )?),
        };
        for &k in &cfg.iterations {
            let solver_cfg = SolverConfig {
                iterations: k,
                init: cfg.init,
                epsilon: cfg.epsilon,
                record_residuals: false,
            };
            let mut times = Vec::with_capacity(cfg.repeats);
            let mut quality = (None, None);
            for _ in 0..cfg.repeats {
                let report = em_solve(projector.as_mut(), image, &h, &solver_cfg)?;
                let seconds = report.total_seconds();
                if let Some(truth) = reference {
                    quality = (
                        Some(relative_error(&report.cube, truth)?),
                        Some(
                            avg_relative_pixel_error(&report.cube, truth, cfg.pixel_threshold)?
                                .mean,
                        ),
                    );
                }
                times.push(seconds);
                rows.push(BenchRow {
                    solver: "em".into(),
                    backend: backend.as_str().into(),
                    w,
                    iterations: k,
                    seconds,
                    relative_error: quality.0,
                    avg_rel_pixel_error: quality.1,
                });
            }
            rows.push(BenchRow {
                solver: "em-median".into(),
                backend: backend.as_str().into(),
                w,
                iterations: k,
                seconds: median(&times),
                relative_error: quality.0,
                avg_rel_pixel_error: quality.1,
            });
        }
    }
    Ok(rows)
}
