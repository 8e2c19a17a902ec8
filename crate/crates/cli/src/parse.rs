//! Value parsers for the compound flag syntaxes.

use std::path::PathBuf;

use ctis_core::SceneKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometryArg {
    pub a: usize,
    pub alpha: usize,
    pub gamma: usize,
    pub xi: usize,
    pub w: usize,
}

/// `a,alpha,gamma,xi,w`
pub fn geometry(s: &str) -> Result<GeometryArg, String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| format!("`{s}` is not a list of integers"))?;
    match parts[..] {
        [a, alpha, gamma, xi, w] => Ok(GeometryArg {
            a,
            alpha,
            gamma,
            xi,
            w,
        }),
        _ => Err(format!(
            "expected a,alpha,gamma,xi,w; got {} values",
            parts.len()
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpotsArg {
    /// Unit impulse at `(row, col)` for every band.
    Impulse { row: usize, col: usize },
    /// Fitted layout with optional overrides.
    Fitted(Vec<(String, f64)>),
}

pub const SPOT_KEYS: [&str; 8] = [
    "orders",
    "base",
    "dispersion",
    "sigma",
    "amplitude",
    "zeroth",
    "jitter",
    "center",
];

/// `fitted`, `impulse`, `impulse:ROW,COL`, or `key=value;...` overrides of the
/// fitted layout (`center=ROW,COL` takes two values).
pub fn spots(s: &str) -> Result<SpotsArg, String> {
    if s == "fitted" {
        return Ok(SpotsArg::Fitted(Vec::new()));
    }
    if s == "impulse" {
        return Ok(SpotsArg::Impulse { row: 0, col: 0 });
    }
    if let Some(rest) = s.strip_prefix("impulse:") {
        let (r, c) = rest
            .split_once(',')
            .ok_or_else(|| format!("expected impulse:ROW,COL, got `{s}`"))?;
        let num = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad impulse position `{rest}`"))
        };
        return Ok(SpotsArg::Impulse {
            row: num(r)?,
            col: num(c)?,
        });
    }
    let mut overrides = Vec::new();
    for item in s.split(';').filter(|x| !x.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{item}`"))?;
        let key = key.trim();
        if !SPOT_KEYS.contains(&key) {
            return Err(format!(
                "unknown spot key `{key}` (known: {})",
                SPOT_KEYS.join(", ")
            ));
        }
        if key == "center" {
            let (r, c) = value
                .split_once(',')
                .ok_or_else(|| format!("center needs ROW,COL, got `{value}`"))?;
            for (name, v) in [("center_row", r), ("center_col", c)] {
                let v = v.trim().parse().map_err(|_| format!("bad number `{v}`"))?;
                overrides.push((name.to_string(), v));
            }
        } else {
            let v = value
                .trim()
                .parse()
                .map_err(|_| format!("bad number `{value}` for {key}"))?;
            overrides.push((key.to_string(), v));
        }
    }
    Ok(SpotsArg::Fitted(overrides))
}

/// `constant:V`, `rgb:PATH` or `random:SEED`.
pub fn scene(s: &str) -> Result<SceneKind, String> {
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| format!("expected constant:V, rgb:PATH or random:SEED, got `{s}`"))?;
    match kind {
        "constant" => value
            .parse()
            .map(SceneKind::Constant)
            .map_err(|_| format!("bad constant `{value}`")),
        "random" => value
            .parse()
            .map(SceneKind::Random)
            .map_err(|_| format!("bad seed `{value}`")),
        "rgb" if !value.is_empty() => Ok(SceneKind::Rgb(PathBuf::from(value))),
        _ => Err(format!("unknown scene kind `{s}`")),
    }
}

/// `poisson:SCALE`: counts are drawn with mean `SCALE * g` and divided back.
pub fn noise(s: &str) -> Result<f64, String> {
    let scale = s
        .strip_prefix("poisson:")
        .ok_or_else(|| format!("expected poisson:SCALE, got `{s}`"))?
        .parse::<f64>()
        .map_err(|_| format!("bad poisson scale in `{s}`"))?;
    if scale.is_finite() && scale > 0.0 {
        Ok(scale)
    } else {
        Err(format!("poisson scale must be positive, got {scale}"))
    }
}
