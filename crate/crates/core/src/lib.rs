//! Shift-invariant CTIS reconstruction.
//!
//! The system matrix of a shift-invariant CTIS is a stack of circulant
//! blocks, one per wavelength, composed with a zero-padding embed of the
//! field stop into the focal plane. Projections therefore reduce to index
//! maps and real-to-complex FFTs over the focal plane; EM runs on top.
//!
//! ```
//! use ctis_core::{
//!     column_sums, em_solve, project, synth_kernels, synth_scene, SceneKind, SolverConfig,
//!     SpectralProjector, SpotSpec, SystemGeometry,
//! };
//!
//! let g = SystemGeometry::new(4, 4, 16, 16, 2).unwrap();
//! let kernels = synth_kernels::<f64>(&g, &SpotSpec::fitted(&g), 7).unwrap();
//! let truth = synth_scene::<f64>(&g, &SceneKind::Constant(100.0)).unwrap();
//! let mut projector = SpectralProjector::new(&kernels);
//! let image = project(&mut projector, &truth).unwrap();
//! let h = column_sums(&kernels).unwrap();
//! let report = em_solve(&mut projector, &image, &h, &SolverConfig::default()).unwrap();
//! assert_eq!(report.iteration_seconds.len(), 25);
//! ```

pub mod bench;
pub mod calibration;
pub mod error;
pub mod geometry;
pub mod index_map;
pub mod io;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod projector;
pub mod real;
pub mod solver;
pub mod spectrum;

pub use calibration::{
    build_kernel_set, column_sums, impulse_kernels, synth_kernels, synth_scene, ColumnSums,
    KernelSet, SceneKind, SpotSpec,
};
pub use error::{Error, Result};
pub use geometry::{make_geometry, SystemGeometry};
pub use index_map::{embed, embed_index, extract};
pub use metrics::{avg_relative_pixel_error, relative_error, PixelError};
pub use model::{Datacube, EmbeddedStack, FpaImage};
pub use oracle::{
    bf_backward, bf_em_step, bf_forward, build_dense_h, build_system_matrix, DenseSystemMatrix,
    Storage,
};
pub use projector::{
    backward, forward, full_spectrum_backward, project, Projector, ProjectorWorkspace,
    SpectralProjector,
};
pub use real::{Dtype, Real};
pub use solver::{
    em_solve, em_solve_with_backend, Backend, EmSolver, Init, SolveReport, SolverConfig,
};
