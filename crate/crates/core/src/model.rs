//! Datacubes, FPA images and embedded per-band stacks.
//!
//! Every container pairs a flat `Vec<T>` with the geometry that sizes it.
//! Layouts are column-major throughout:
//!
//! * [`Datacube`]: `w` blocks of `a * alpha` voxels, voxel `(r, c)` of band
//!   `b` at `b * ell + r + a * c`.
//! * [`FpaImage`]: pixel `(r, c)` at `r + gamma * c`.
//! * [`EmbeddedStack`]: `w` FPA-sized planes back to back.

use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::real::Real;

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            found,
        })
    }
}

fn check_finite<T: Real>(data: &[T]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Ok iff every entry is finite and `>= 0`. Non-finite entries are reported
/// before negative ones so a NaN is never mistaken for a sign problem.
pub fn validate_nonnegative<T: Real>(data: &[T]) -> Result<()> {
    check_finite(data)?;
    match data.iter().position(|&x| x < T::zero()) {
        Some(index) => Err(Error::NegativeData {
            index,
            value: data[index].to_f64_lossless(),
        }),
        None => Ok(()),
    }
}

macro_rules! shared_accessors {
    ($ty:ident) => {
        impl<T: Real> $ty<T> {
            pub fn geometry(&self) -> &SystemGeometry {
                &self.geometry
            }

            pub fn data(&self) -> &[T] {
                &self.data
            }

            /// Mutable access to the values. Callers are responsible for
            /// keeping them finite.
            pub fn data_mut(&mut self) -> &mut [T] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<T> {
                self.data
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn validate_nonnegative(&self) -> Result<()> {
                validate_nonnegative(&self.data)
            }

            /// Element-wise conversion to another precision.
            pub fn cast<U: Real>(&self) -> $ty<U> {
                $ty {
                    geometry: self.geometry.clone(),
                    data: self
                        .data
                        .iter()
                        .map(|x| U::from_f64_lossy(x.to_f64_lossless()))
                        .collect(),
                }
            }
        }
    };
}

/// The unknown scene `f`: `w` bands of `a * alpha` voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct Datacube<T> {
    geometry: SystemGeometry,
    data: Vec<T>,
}

shared_accessors!(Datacube);

impl<T: Real> Datacube<T> {
    pub fn new(geometry: &SystemGeometry, data: Vec<T>) -> Result<Self> {
        check_len("datacube", geometry.m(), data.len())?;
        check_finite(&data)?;
        Ok(Datacube {
            geometry: geometry.clone(),
            data,
        })
    }

    pub fn filled(geometry: &SystemGeometry, value: T) -> Self {
        Datacube {
            geometry: geometry.clone(),
            data: vec![value; geometry.m()],
        }
    }

    pub fn zeros(geometry: &SystemGeometry) -> Self {
        Self::filled(geometry, T::zero())
    }

    pub fn index(&self, band: usize, row: usize, col: usize) -> usize {
        let g = &self.geometry;
        debug_assert!(band < g.w() && row < g.a() && col < g.alpha());
        band * g.ell() + row + g.a() * col
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> T {
        self.data[self.index(band, row, col)]
    }

    pub fn band(&self, band: usize) -> &[T] {
        let ell = self.geometry.ell();
        &self.data[band * ell..(band + 1) * ell]
    }
}

/// A real `gamma × xi` sensor image (the measurement `g`, a ratio `u`, or a
/// projection `H f`).
#[derive(Debug, Clone, PartialEq)]
pub struct FpaImage<T> {
    geometry: SystemGeometry,
    data: Vec<T>,
}

shared_accessors!(FpaImage);

impl<T: Real> FpaImage<T> {
    pub fn new(geometry: &SystemGeometry, data: Vec<T>) -> Result<Self> {
        check_len("FPA image", geometry.n(), data.len())?;
        check_finite(&data)?;
        Ok(FpaImage {
            geometry: geometry.clone(),
            data,
        })
    }

    pub fn zeros(geometry: &SystemGeometry) -> Self {
        FpaImage {
            geometry: geometry.clone(),
            data: vec![T::zero(); geometry.n()],
        }
    }

    /// Build from `gamma` rows of `xi` values each.
    pub fn from_rows(geometry: &SystemGeometry, rows: &[Vec<T>]) -> Result<Self> {
        let (gamma, xi) = (geometry.gamma(), geometry.xi());
        check_len("FPA rows", gamma, rows.len())?;
        let mut data = vec![T::zero(); geometry.n()];
        for (r, row) in rows.iter().enumerate() {
            check_len("FPA row", xi, row.len())?;
            for (c, &value) in row.iter().enumerate() {
                data[r + gamma * c] = value;
            }
        }
        Self::new(geometry, data)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        let gamma = self.geometry.gamma();
        (0..gamma)
            .map(|r| {
                (0..self.geometry.xi())
                    .map(|c| self.data[r + gamma * c])
                    .collect()
            })
            .collect()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row + self.geometry.gamma() * col]
    }
}

/// `w` FPA-sized planes: the embedded datacube `v` or the per-band
/// back-projections `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStack<T> {
    geometry: SystemGeometry,
    data: Vec<T>,
}

shared_accessors!(EmbeddedStack);

impl<T: Real> EmbeddedStack<T> {
    pub fn new(geometry: &SystemGeometry, data: Vec<T>) -> Result<Self> {
        check_len("embedded stack", geometry.n() * geometry.w(), data.len())?;
        check_finite(&data)?;
        Ok(EmbeddedStack {
            geometry: geometry.clone(),
            data,
        })
    }

    pub fn zeros(geometry: &SystemGeometry) -> Self {
        EmbeddedStack {
            geometry: geometry.clone(),
            data: vec![T::zero(); geometry.n() * geometry.w()],
        }
    }

    pub fn plane(&self, band: usize) -> &[T] {
        let n = self.geometry.n();
        &self.data[band * n..(band + 1) * n]
    }
}
