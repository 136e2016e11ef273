//! Scalar fields on regular 1D/2D grids: synthetic ensembles, normalization,
//! grid adjacency and the plain-text field file.
//!
//! # Field file
//!
//! UTF-8 text. Each field starts with a header line
//!
//! ```text
//! field <id> <d0> [d1]
//! ```
//!
//! followed by `d0` (or `d0 * d1`) lines holding one value each in row-major
//! order. Values are written in Rust's shortest round-trip float notation, so
//! loading a saved file reproduces every value bit for bit. Blank lines are
//! ignored. Ids must be non-empty and free of whitespace.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub id: String,
    /// Grid shape: `[len]` or `[rows, cols]`.
    pub dims: Vec<usize>,
    /// Row-major samples.
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(id: impl Into<String>, dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let field = Self {
            id: id.into(),
            dims,
            values,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() > 2 || self.dims.contains(&0) {
            return Err(Error::Argument(format!(
                "field {}: dims must be 1 or 2 positive integers, got {:?}",
                self.id, self.dims
            )));
        }
        let expected: usize = self.dims.iter().product();
        if self.values.len() != expected {
            return Err(Error::Argument(format!(
                "field {}: {} values for dims {:?}",
                self.id,
                self.values.len(),
                self.dims
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "field {}: non-finite value at index {i}",
                self.id
            )));
        }
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(Error::Argument(format!("invalid field id {:?}", self.id)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid neighbours of vertex `v`: left/right in 1D, 4-connectivity in 2D.
    pub fn neighbors(&self, v: usize, out: &mut Vec<usize>) {
        out.clear();
        match self.dims.as_slice() {
            [len] => {
                if v > 0 {
                    out.push(v - 1);
                }
                if v + 1 < *len {
                    out.push(v + 1);
                }
            }
            [rows, cols] => {
                let (r, c) = (v / cols, v % cols);
                if r > 0 {
                    out.push(v - cols);
                }
                if c > 0 {
                    out.push(v - 1);
                }
                if c + 1 < *cols {
                    out.push(v + 1);
                }
                if r + 1 < *rows {
                    out.push(v + cols);
                }
            }
            _ => {}
        }
    }
}

/// Affinely maps values so that min -> 0 and max -> 1. A constant field maps
/// to all zeros.
pub fn normalize_field(field: &ScalarField) -> ScalarField {
    let (lo, hi) = field
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let values = if span > 0.0 {
        field.values.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; field.values.len()]
    };
    ScalarField {
        id: field.id.clone(),
        dims: field.dims.clone(),
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    Gauss2d,
    Rand1d,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Gauss2d => "gauss2d",
            EnsembleKind::Rand1d => "rand1d",
        }
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss2d" => Ok(EnsembleKind::Gauss2d),
            "rand1d" => Ok(EnsembleKind::Rand1d),
            other => Err(Error::Config(format!("unknown ensemble kind {other:?}"))),
        }
    }
}

/// Number of Fourier modes in `rand1d` fields.
pub const RAND1D_MODES: usize = 8;

/// Parameters of a synthetic ensemble. Equal specs generate bitwise-equal
/// ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub count: usize,
    pub grid: Vec<usize>,
    pub seed: u64,
    /// Inclusive range for the number of Gaussian bumps (gauss2d).
    pub blobs: (usize, usize),
    /// Range for bump amplitudes (gauss2d) or Fourier amplitudes (rand1d).
    /// Negative amplitudes produce wells.
    pub amplitude: (f64, f64),
    /// Bump standard deviation as a fraction of the shorter grid side.
    pub width: (f64, f64),
    /// Fraction of the way each bump centre travels towards a random
    /// target over the ensemble; 0 gives a static ensemble.
    pub drift: f64,
}

impl EnsembleSpec {
    /// Defaults: 4 to 6 wells of depth 0.3 to 1 and width 0.1 to 0.2, each
    /// drifting across the grid over the ensemble.
    pub fn gauss2d(count: usize, rows: usize, cols: usize, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::Gauss2d,
            count,
            grid: vec![rows, cols],
            seed,
            blobs: (4, 6),
            amplitude: (-1.0, -0.3),
            width: (0.1, 0.2),
            drift: 1.0,
        }
    }

    pub fn rand1d(count: usize, len: usize, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::Rand1d,
            count,
            grid: vec![len],
            seed,
            blobs: (1, 1),
            amplitude: (-1.0, 1.0),
            width: (0.0, 0.0),
            drift: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("ensemble count must be positive".into()));
        }
        if !(self.amplitude.0.is_finite() && self.amplitude.1.is_finite())
            || self.amplitude.0 > self.amplitude.1
        {
            return Err(Error::Config(format!(
                "bad amplitude range {:?}",
                self.amplitude
            )));
        }
        match self.kind {
            EnsembleKind::Gauss2d => {
                if self.grid.len() != 2 || self.grid.iter().any(|&d| d < 8) {
                    return Err(Error::Config(format!(
                        "gauss2d needs a 2D grid with sides >= 8, got {:?}",
                        self.grid
                    )));
                }
                if self.blobs.0 == 0 || self.blobs.0 > self.blobs.1 {
                    return Err(Error::Config(format!("bad blob range {:?}", self.blobs)));
                }
                if !(self.width.0 > 0.0 && self.width.0 <= self.width.1 && self.width.1.is_finite())
                {
                    return Err(Error::Config(format!("bad width range {:?}", self.width)));
                }
                if !(self.drift >= 0.0 && self.drift.is_finite()) {
                    return Err(Error::Config(format!("bad drift {}", self.drift)));
                }
            }
            EnsembleKind::Rand1d => {
                if self.grid.len() != 1 || self.grid[0] < 8 {
                    return Err(Error::Config(format!(
                        "rand1d needs a 1D grid of length >= 8, got {:?}",
                        self.grid
                    )));
                }
            }
        }
        Ok(())
    }

    fn field_id(&self, index: usize) -> String {
        format!("{}-s{}-{:05}", self.kind.name(), self.seed, index)
    }
}

/// Generates an ensemble of either kind.
pub fn generate(spec: &EnsembleSpec) -> Result<Vec<ScalarField>> {
    match spec.kind {
        EnsembleKind::Gauss2d => gen_gauss2d(spec),
        EnsembleKind::Rand1d => gen_rand1d(spec),
    }
}

#[derive(Debug, Clone, Copy)]
struct Bump {
    start: (f64, f64),
    end: (f64, f64),
    amplitude: f64,
    sigma: f64,
}

/// Sums of Gaussian bumps whose centres move linearly from a start to an end
/// position across the ensemble, mimicking consecutive time steps.
pub fn gen_gauss2d(spec: &EnsembleSpec) -> Result<Vec<ScalarField>> {
    if spec.kind != EnsembleKind::Gauss2d {
        return Err(Error::Config("gen_gauss2d called with a rand1d spec".into()));
    }
    spec.validate()?;
    let (rows, cols) = (spec.grid[0], spec.grid[1]);
    let side = rows.min(cols) as f64;
    let mut rng = Rng::new(spec.seed);
    let k = rng.int_inclusive(spec.blobs.0, spec.blobs.1);
    let bumps: Vec<Bump> = (0..k)
        .map(|_| {
            let start = (
                rng.range(0.0, (rows - 1) as f64),
                rng.range(0.0, (cols - 1) as f64),
            );
            let target = (
                rng.range(0.0, (rows - 1) as f64),
                rng.range(0.0, (cols - 1) as f64),
            );
            let end = (
                start.0 + spec.drift * (target.0 - start.0),
                start.1 + spec.drift * (target.1 - start.1),
            );
            Bump {
                start,
                end,
                amplitude: rng.range(spec.amplitude.0, spec.amplitude.1),
                sigma: rng.range(spec.width.0, spec.width.1) * side,
            }
        })
        .collect();

    let fields = (0..spec.count)
        .map(|t| {
            let s = if spec.count > 1 {
                t as f64 / (spec.count - 1) as f64
            } else {
                0.0
            };
            let mut values = vec![0.0; rows * cols];
            for b in &bumps {
                let cy = b.start.0 + s * (b.end.0 - b.start.0);
                let cx = b.start.1 + s * (b.end.1 - b.start.1);
                let inv = 1.0 / (2.0 * b.sigma * b.sigma);
                for r in 0..rows {
                    let dy = r as f64 - cy;
                    for c in 0..cols {
                        let dx = c as f64 - cx;
                        values[r * cols + c] += b.amplitude * (-(dx * dx + dy * dy) * inv).exp();
                    }
                }
            }
            ScalarField {
                id: spec.field_id(t),
                dims: vec![rows, cols],
                values,
            }
        })
        .collect();
    Ok(fields)
}

/// Smooth random 1D functions: independent random Fourier series with
/// [`RAND1D_MODES`] modes, mode `k` damped by `1/k`.
pub fn gen_rand1d(spec: &EnsembleSpec) -> Result<Vec<ScalarField>> {
    if spec.kind != EnsembleKind::Rand1d {
        return Err(Error::Config("gen_rand1d called with a gauss2d spec".into()));
    }
    spec.validate()?;
    let len = spec.grid[0];
    let mut rng = Rng::new(spec.seed);
    let fields = (0..spec.count)
        .map(|t| {
            let modes: Vec<(f64, f64)> = (1..=RAND1D_MODES)
                .map(|k| {
                    let a = rng.range(spec.amplitude.0, spec.amplitude.1) / k as f64;
                    let phase = rng.range(0.0, std::f64::consts::TAU);
                    (a, phase)
                })
                .collect();
            let values = (0..len)
                .map(|x| {
                    let u = x as f64 / len as f64;
                    modes
                        .iter()
                        .enumerate()
                        .map(|(k, &(a, phase))| {
                            a * (std::f64::consts::TAU * (k + 1) as f64 * u + phase).sin()
                        })
                        .sum()
                })
                .collect();
            ScalarField {
                id: spec.field_id(t),
                dims: vec![len],
                values,
            }
        })
        .collect();
    Ok(fields)
}

pub fn write_fields(fields: &[ScalarField]) -> Result<String> {
    let mut out = String::new();
    for f in fields {
        f.validate()?;
        let dims: Vec<String> = f.dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "field {} {}", f.id, dims.join(" ")).unwrap();
        for v in &f.values {
            writeln!(out, "{v}").unwrap();
        }
    }
    Ok(out)
}

pub fn parse_fields(text: &str) -> Result<Vec<ScalarField>> {
    let mut fields = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    while let Some((lineno, header)) = lines.next() {
        let mut tok = header.split_whitespace();
        if tok.next() != Some("field") {
            return Err(Error::parse(lineno, format!("expected field header, got {header:?}")));
        }
        let id = tok
            .next()
            .ok_or_else(|| Error::parse(lineno, "missing field id"))?
            .to_string();
        let dims = tok
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::parse(lineno, format!("bad dimension {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if dims.is_empty() || dims.len() > 2 || dims.contains(&0) {
            return Err(Error::parse(lineno, format!("bad dims {dims:?}")));
        }
        let n: usize = dims.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let (l, v) = lines.next().ok_or_else(|| {
                Error::parse(lineno, format!("field {id}: truncated, expected {n} values"))
            })?;
            let v: f64 = v
                .parse()
                .map_err(|e| Error::parse(l, format!("bad value {v:?}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::parse(l, "non-finite value"));
            }
            values.push(v);
        }
        fields.push(ScalarField { id, dims, values });
    }
    Ok(fields)
}

pub fn save_fields(fields: &[ScalarField], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_fields(fields)?).map_err(|e| Error::io(path, e))
}

pub fn load_fields(path: impl AsRef<Path>) -> Result<Vec<ScalarField>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fields(&text)
}
