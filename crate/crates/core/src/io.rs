//! On-disk formats.
//!
//! # Container
//!
//! A UTF-8 header of `key: value` lines, terminated by an empty line,
//! followed by the raw little-endian payload:
//!
//! ```text
//! magic: CTIS1
//! kind: cube
//! dtype: f64
//! byte_order: little-endian
//! a: 8
//! alpha: 6
//! gamma: 32
//! xi: 24
//! w: 4
//! ordering: column-major
//! wavelengths: 421,446,470,495      (optional)
//! iterations: 25                    (report only)
//! residuals: yes                    (report only)
//! payload_bytes: 1536
//! crc32: 8c0d2a11
//!
//! <payload>
//! ```
//!
//! Payloads: `kernels` is `w` spatial kernels of `n` values each (spectra are
//! recomputed on load); `image` is `n` values; `cube` is `m` values; `report`
//! is the `m`-value cube followed by per-iteration seconds and, if present,
//! per-iteration residuals, both always as f64.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::calibration::KernelSet;
use crate::error::{Error, Result};
use crate::geometry::{make_geometry, SystemGeometry};
use crate::model::{Datacube, FpaImage};
use crate::real::{Dtype, Real};
use crate::solver::SolveReport;

pub const MAGIC: &str = "CTIS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Kernels,
    Image,
    Cube,
    Report,
}

impl ContainerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContainerKind::Kernels => "kernels",
            ContainerKind::Image => "image",
            ContainerKind::Cube => "cube",
            ContainerKind::Report => "report",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(ContainerKind::Kernels),
            "image" => Ok(ContainerKind::Image),
            "cube" => Ok(ContainerKind::Cube),
            "report" => Ok(ContainerKind::Report),
            other => Err(Error::Format(format!("unknown kind `{other}`"))),
        }
    }
}

/// Parsed container header.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainerInfo {
    pub kind: ContainerKind,
    pub dtype: Dtype,
    pub geometry: SystemGeometry,
    pub payload_bytes: usize,
    pub crc32: u32,
    pub iterations: Option<usize>,
    pub residuals: bool,
}

fn encode(info: &ContainerInfo, payload: &[u8]) -> Vec<u8> {
    let g = &info.geometry;
    let mut header = format!(
        "magic: {MAGIC}\nkind: {}\ndtype: {}\nbyte_order: little-endian\na: {}\nalpha: {}\ngamma: {}\nxi: {}\nw: {}\nordering: column-major\n",
        info.kind.as_str(),
        info.dtype,
        g.a(),
        g.alpha(),
        g.gamma(),
        g.xi(),
        g.w()
    );
    if let Some(wl) = g.wavelengths() {
        let list: Vec<String> = wl.iter().map(|x| x.to_string()).collect();
        header.push_str(&format!("wavelengths: {}\n", list.join(",")));
    }
    if let Some(k) = info.iterations {
        header.push_str(&format!("iterations: {k}\n"));
        header.push_str(&format!(
            "residuals: {}\n",
            if info.residuals { "yes" } else { "no" }
        ));
    }
    header.push_str(&format!(
        "payload_bytes: {}\ncrc32: {:08x}\n\n",
        payload.len(),
        crc32fast::hash(payload)
    ));
    let mut out = header.into_bytes();
    out.extend_from_slice(payload);
    out
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Format("header terminator not found".into()))?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    Ok((header, &bytes[end + 2..]))
}

fn parse_header(header: &str) -> Result<ContainerInfo> {
    let mut fields = HashMap::new();
    for line in header.lines() {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("bad header line `{line}`")))?;
        fields.insert(key.trim(), value.trim());
    }
    match fields.get("magic") {
        Some(&MAGIC) => {}
        Some(other) => {
            return Err(Error::FormatVersion(format!(
                "magic `{other}`, expected `{MAGIC}`"
            )))
        }
        None => return Err(Error::FormatVersion("missing magic".into())),
    }
    let get = |key: &str| {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| Error::Format(format!("missing header key `{key}`")))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("header key `{key}` is not an integer")))
    };
    if get("byte_order")? != "little-endian" {
        return Err(Error::FormatVersion(format!(
            "byte order `{}`",
            get("byte_order")?
        )));
    }
    if get("ordering")? != "column-major" {
        return Err(Error::FormatVersion(format!(
            "ordering `{}`",
            get("ordering")?
        )));
    }
    let dtype: Dtype = get("dtype")?.parse().map_err(Error::Format)?;
    let wavelengths = match fields.get("wavelengths") {
        None => None,
        Some(list) => Some(
            list.split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Format("bad wavelengths list".into()))?,
        ),
    };
    let geometry = make_geometry(
        num("a")?,
        num("alpha")?,
        num("gamma")?,
        num("xi")?,
        num("w")?,
        wavelengths,
    )?;
    let kind = ContainerKind::parse(get("kind")?)?;
    let (iterations, residuals) = if kind == ContainerKind::Report {
        (Some(num("iterations")?), get("residuals")? == "yes")
    } else {
        (None, false)
    };
    let crc32 = u32::from_str_radix(get("crc32")?, 16)
        .map_err(|_| Error::Format("crc32 is not hexadecimal".into()))?;
    Ok(ContainerInfo {
        kind,
        dtype,
        geometry,
        payload_bytes: num("payload_bytes")?,
        crc32,
        iterations,
        residuals,
    })
}

/// Parse and verify a container, returning its header and payload.
pub fn decode(bytes: &[u8]) -> Result<(ContainerInfo, &[u8])> {
    let (header, payload) = split_header(bytes)?;
    let info = parse_header(header)?;
    let found = crc32fast::hash(payload);
    if found != info.crc32 {
        return Err(Error::Checksum {
            expected: info.crc32,
            found,
        });
    }
    if payload.len() != info.payload_bytes {
        return Err(Error::Format(format!(
            "payload is {} bytes, header says {}",
            payload.len(),
            info.payload_bytes
        )));
    }
    Ok((info, payload))
}

/// Read only the header of a container file.
pub fn read_info(path: impl AsRef<Path>) -> Result<ContainerInfo> {
    let mut file = fs::File::open(path)?;
    let mut head = Vec::new();
    let mut buf = [0u8; 512];
    loop {
        let read = file.read(&mut buf)?;
        if read == 0 {
            break;
        }
        head.extend_from_slice(&buf[..read]);
        if head.windows(2).any(|w| w == b"\n\n") {
            break;
        }
    }
    let (header, _) = split_header(&head)?;
    parse_header(header)
}

fn values_to_bytes<T: Real>(values: &[T], out: &mut Vec<u8>) {
    out.reserve(values.len() * T::DTYPE.size());
    for &v in values {
        v.write_le(out);
    }
}

fn bytes_to_values<T: Real>(bytes: &[u8], dtype: Dtype) -> Vec<T> {
    match dtype {
        d if d == T::DTYPE => bytes.chunks_exact(d.size()).map(T::read_le).collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| T::from_f64_lossy(f64::read_le(c)))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::read_le(c) as f64))
            .collect(),
    }
}

fn expect_kind(info: &ContainerInfo, kind: ContainerKind) -> Result<()> {
    if info.kind == kind {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "expected a {} container, found {}",
            kind.as_str(),
            info.kind.as_str()
        )))
    }
}

fn expect_payload(info: &ContainerInfo, values: usize, extra: usize) -> Result<()> {
    let expected = values * info.dtype.size() + extra;
    if info.payload_bytes == expected {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "payload holds {} bytes, geometry needs {expected}",
            info.payload_bytes
        )))
    }
}

fn info_for<T: Real>(kind: ContainerKind, geometry: &SystemGeometry) -> ContainerInfo {
    ContainerInfo {
        kind,
        dtype: T::DTYPE,
        geometry: geometry.clone(),
        payload_bytes: 0,
        crc32: 0,
        iterations: None,
        residuals: false,
    }
}

pub fn encode_cube<T: Real>(cube: &Datacube<T>) -> Vec<u8> {
    let mut payload = Vec::new();
    values_to_bytes(cube.data(), &mut payload);
    encode(
        &info_for::<T>(ContainerKind::Cube, cube.geometry()),
        &payload,
    )
}

pub fn decode_cube<T: Real>(bytes: &[u8]) -> Result<Datacube<T>> {
    let (info, payload) = decode(bytes)?;
    expect_kind(&info, ContainerKind::Cube)?;
    expect_payload(&info, info.geometry.m(), 0)?;
    Datacube::new(&info.geometry, bytes_to_values(payload, info.dtype))
}

pub fn encode_image<T: Real>(image: &FpaImage<T>) -> Vec<u8> {
    let mut payload = Vec::new();
    values_to_bytes(image.data(), &mut payload);
    encode(
        &info_for::<T>(ContainerKind::Image, image.geometry()),
        &payload,
    )
}

pub fn decode_image<T: Real>(bytes: &[u8]) -> Result<FpaImage<T>> {
    let (info, payload) = decode(bytes)?;
    expect_kind(&info, ContainerKind::Image)?;
    expect_payload(&info, info.geometry.n(), 0)?;
    FpaImage::new(&info.geometry, bytes_to_values(payload, info.dtype))
}

pub fn encode_kernels<T: Real>(kernels: &KernelSet<T>) -> Vec<u8> {
    let mut payload = Vec::new();
    values_to_bytes(kernels.spatial_flat(), &mut payload);
    encode(
        &info_for::<T>(ContainerKind::Kernels, kernels.geometry()),
        &payload,
    )
}

pub fn decode_kernels<T: Real>(bytes: &[u8]) -> Result<KernelSet<T>> {
    let (info, payload) = decode(bytes)?;
    expect_kind(&info, ContainerKind::Kernels)?;
    expect_payload(&info, info.geometry.n() * info.geometry.w(), 0)?;
    KernelSet::from_flat(&info.geometry, bytes_to_values(payload, info.dtype))
}

pub fn encode_report<T: Real>(report: &SolveReport<T>) -> Vec<u8> {
    let mut payload = Vec::new();
    values_to_bytes(report.cube.data(), &mut payload);
    values_to_bytes(&report.iteration_seconds, &mut payload);
    if let Some(res) = &report.residuals {
        values_to_bytes(res, &mut payload);
    }
    let mut info = info_for::<T>(ContainerKind::Report, report.cube.geometry());
    info.iterations = Some(report.iterations);
    info.residuals = report.residuals.is_some();
    encode(&info, &payload)
}

pub fn decode_report<T: Real>(bytes: &[u8]) -> Result<SolveReport<T>> {
    let (info, payload) = decode(bytes)?;
    expect_kind(&info, ContainerKind::Report)?;
    let k = info.iterations.unwrap_or(0);
    let lists = if info.residuals { 2 } else { 1 };
    expect_payload(&info, info.geometry.m(), 8 * k * lists)?;
    let cube_bytes = info.geometry.m() * info.dtype.size();
    let cube = Datacube::new(
        &info.geometry,
        bytes_to_values(&payload[..cube_bytes], info.dtype),
    )?;
    let times_end = cube_bytes + 8 * k;
    let iteration_seconds = bytes_to_values::<f64>(&payload[cube_bytes..times_end], Dtype::F64);
    let residuals = info
        .residuals
        .then(|| bytes_to_values::<f64>(&payload[times_end..], Dtype::F64));
    Ok(SolveReport {
        cube,
        iteration_seconds,
        residuals,
        iterations: k,
    })
}

fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(bytes)?;
    Ok(())
}

pub fn save_cube<T: Real>(path: impl AsRef<Path>, cube: &Datacube<T>) -> Result<()> {
    write_file(path, &encode_cube(cube))
}

pub fn load_cube<T: Real>(path: impl AsRef<Path>) -> Result<Datacube<T>> {
    decode_cube(&fs::read(path)?)
}

pub fn save_image<T: Real>(path: impl AsRef<Path>, image: &FpaImage<T>) -> Result<()> {
    write_file(path, &encode_image(image))
}

pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<FpaImage<T>> {
    decode_image(&fs::read(path)?)
}

pub fn save_kernels<T: Real>(path: impl AsRef<Path>, kernels: &KernelSet<T>) -> Result<()> {
    write_file(path, &encode_kernels(kernels))
}

pub fn load_kernels<T: Real>(path: impl AsRef<Path>) -> Result<KernelSet<T>> {
    decode_kernels(&fs::read(path)?)
}

pub fn save_report<T: Real>(path: impl AsRef<Path>, report: &SolveReport<T>) -> Result<()> {
    write_file(path, &encode_report(report))
}

pub fn load_report<T: Real>(path: impl AsRef<Path>) -> Result<SolveReport<T>> {
    decode_report(&fs::read(path)?)
}

/// Fails with `GeometryMismatch` unless `found` has the expected dimensions.
pub fn expect_geometry(expected: &SystemGeometry, found: &SystemGeometry) -> Result<()> {
    expected.ensure_same_shape(found)
}

/// Per-iteration solver log: `iteration,seconds,residual`.
pub fn write_report_csv<T: Real, W: Write>(writer: W, report: &SolveReport<T>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["iteration", "seconds", "residual"])?;
    for (k, seconds) in report.iteration_seconds.iter().enumerate() {
        let residual = report
            .residuals
            .as_ref()
            .map(|r| r[k].to_string())
            .unwrap_or_default();
        csv.write_record([(k + 1).to_string(), seconds.to_string(), residual])?;
    }
    csv.flush()?;
    Ok(())
}

pub const BENCH_CSV_HEADER: [&str; 7] = [
    "solver",
    "backend",
    "w",
    "K",
    "seconds",
    "relative_error",
    "avg_rel_pixel_error",
];

/// One benchmark CSV line. Quality columns are empty when not measured.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub solver: String,
    pub backend: String,
    pub w: usize,
    pub iterations: usize,
    pub seconds: f64,
    pub relative_error: Option<f64>,
    pub avg_rel_pixel_error: Option<f64>,
}

pub fn write_bench_csv<W: Write>(writer: W, rows: &[BenchRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(BENCH_CSV_HEADER)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in rows {
        csv.write_record([
            row.solver.clone(),
            row.backend.clone(),
            row.w.to_string(),
            row.iterations.to_string(),
            row.seconds.to_string(),
            opt(row.relative_error),
            opt(row.avg_rel_pixel_error),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Parse a benchmark CSV, rejecting any header other than [`BENCH_CSV_HEADER`].
pub fn read_bench_csv<R: Read>(reader: R) -> Result<Vec<BenchRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
    if header != BENCH_CSV_HEADER {
        return Err(Error::Format(format!(
            "unexpected benchmark header {header:?}"
        )));
    }
    let bad = |field: &str| Error::Format(format!("bad benchmark field `{field}`"));
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(s))
        }
    };
    let mut rows = Vec::new();
    for record in csv.records() {
        let r = record?;
        rows.push(BenchRow {
            solver: r[0].to_string(),
            backend: r[1].to_string(),
            w: r[2].parse().map_err(|_| bad(&r[2]))?,
            iterations: r[3].parse().map_err(|_| bad(&r[3]))?,
            seconds: r[4].parse().map_err(|_| bad(&r[4]))?,
            relative_error: opt(&r[5])?,
            avg_rel_pixel_error: opt(&r[6])?,
        });
    }
    Ok(rows)
}

/// Load an 8-bit RGB image (PNG or PPM) of `a` rows by `alpha` columns as a
/// three-band datacube, channel `b` into band `b`, values in `[0, 255]`.
pub fn read_rgb_scene<T: Real>(
    path: impl AsRef<Path>,
    geometry: &SystemGeometry,
) -> Result<Datacube<T>> {
    if geometry.w() != 3 {
        return Err(Error::BandMismatch { w: geometry.w() });
    }
    let rgb = image::open(path)?.to_rgb8();
    let (width, height) = (rgb.width() as usize, rgb.height() as usize);
    if (height, width) != (geometry.a(), geometry.alpha()) {
        return Err(Error::GeometryMismatch {
            expected: format!("{}x{} field stop", geometry.a(), geometry.alpha()),
            found: format!("{height}x{width} image"),
        });
    }
    let (a, ell) = (geometry.a(), geometry.ell());
    let mut data = vec![T::zero(); geometry.m()];
    for (col, row, pixel) in rgb.enumerate_pixels() {
        let (r, c) = (row as usize, col as usize);
        for band in 0..3 {
            data[band * ell + r + a * c] = T::from_f64_lossy(pixel.0[band] as f64);
        }
    }
    Datacube::new(geometry, data)
}
