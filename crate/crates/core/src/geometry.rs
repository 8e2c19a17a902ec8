//! Instrument geometry: field stop, focal plane array and band count.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Dimensions of a shift-invariant CTIS instrument.
///
/// The field stop is `a × alpha` pixels, the focal plane array (FPA) is
/// `gamma × xi` pixels, and the datacube has `w` spectral bands. All vectors
/// are flattened column-major (row index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGeometry {
    a: usize,
    alpha: usize,
    gamma: usize,
    xi: usize,
    w: usize,
    n: usize,
    ell: usize,
    m: usize,
    beta: usize,
    wavelengths: Option<Arc<[f64]>>,
}

impl SystemGeometry {
    pub fn new(a: usize, alpha: usize, gamma: usize, xi: usize, w: usize) -> Result<Self> {
        make_geometry(a, alpha, gamma, xi, w, None)
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn xi(&self) -> usize {
        self.xi
    }

    /// Number of spectral bands.
    pub fn w(&self) -> usize {
        self.w
    }

    /// FPA pixel count, `gamma * xi`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Voxels per band, `a * alpha`.
    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Datacube length, `ell * w`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Half-spectrum length of a real transform over `n` samples.
    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    /// Same instrument dimensions. Wavelength metadata is not compared.
    pub fn same_shape(&self, other: &SystemGeometry) -> bool {
        (self.a, self.alpha, self.gamma, self.xi, self.w)
            == (other.a, other.alpha, other.gamma, other.xi, other.w)
    }

    pub fn ensure_same_shape(&self, other: &SystemGeometry) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            })
        }
    }

    /// Copy of this geometry with a different band count; wavelengths are dropped.
    pub fn with_bands(&self, w: usize) -> Result<Self> {
        SystemGeometry::new(self.a, self.alpha, self.gamma, self.xi, w)
    }
}

impl fmt::Display for SystemGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "a={} alpha={} gamma={} xi={} w={}",
            self.a, self.alpha, self.gamma, self.xi, self.w
        )
    }
}

pub fn make_geometry(
    a: usize,
    alpha: usize,
    gamma: usize,
    xi: usize,
    w: usize,
    wavelengths: Option<Vec<f64>>,
) -> Result<SystemGeometry> {
    for (name, value) in [
        ("a", a),
        ("alpha", alpha),
        ("gamma", gamma),
        ("xi", xi),
        ("w", w),
    ] {
        if value < 1 {
            return Err(Error::Dimension(format!("{name} must be at least 1")));
        }
    }
    // The field stop has to fit inside the FPA for the embedding to exist.
    if gamma < a {
        return Err(Error::Dimension(format!("gamma ({gamma}) < a ({a})")));
    }
    if xi < alpha {
        return Err(Error::Dimension(format!("xi ({xi}) < alpha ({alpha})")));
    }
    let overflow = || Error::Dimension("derived sizes overflow usize".into());
    let n = gamma.checked_mul(xi).ok_or_else(overflow)?;
    let ell = a.checked_mul(alpha).ok_or_else(overflow)?;
    let m = ell.checked_mul(w).ok_or_else(overflow)?;
    n.checked_mul(w).ok_or_else(overflow)?;

    let wavelengths = match wavelengths {
        None => None,
        Some(list) => {
            if list.len() != w {
                return Err(Error::Metadata(format!(
                    "{} wavelengths given for {w} bands",
                    list.len()
                )));
            }
            if list.iter().any(|x| !x.is_finite()) {
                return Err(Error::Metadata("wavelengths must be finite".into()));
            }
            if list.windows(2).any(|p| p[1] <= p[0]) {
                return Err(Error::Metadata(
                    "wavelengths must be strictly increasing".into(),
                ));
            }
            Some(Arc::from(list))
        }
    };

    Ok(SystemGeometry {
        a,
        alpha,
        gamma,
        xi,
        w,
        n,
        ell,
        m,
        beta: n / 2 + 1,
        wavelengths,
    })
}
