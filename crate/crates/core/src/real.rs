//! Element types the reconstruction pipeline runs in.

use std::fmt;
use std::iter::Sum;

use num_traits::Float;
use realfft::FftNum;

/// Stored element type tag, as written in container headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(format!("unknown dtype `{other}` (expected f32 or f64)")),
        }
    }
}

/// Real scalar usable by the projectors: `f32` or `f64`.
pub trait Real: FftNum + Float + Default + Sum + Send + Sync + 'static {
    const DTYPE: Dtype;

    /// Division guard used by the EM ratio when none is configured.
    fn default_epsilon() -> Self;

    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossless(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);

    /// Panics if `bytes` is shorter than `DTYPE.size()`.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn default_epsilon() -> Self {
        1e-12
    }

    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    fn to_f64_lossless(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn default_epsilon() -> Self {
        1e-6
    }

    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    fn to_f64_lossless(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}
