//! The canonical 128x128 pixel grid over `[-1, 1]²`, masked to the unit disk,
//! with central finite differences and the binary grid file format.
//!
//! Pixel `(row, col)` sits at `x = (2 col - (n-1)) / (n-1)`,
//! `y = (2 row - (n-1)) / (n-1)`, so the spacing is `h = 2/(n-1)` and the
//! endpoints ±1 are included. The mask is evaluated in integer arithmetic and
//! is therefore exactly invariant under the dihedral symmetries of the grid.

use std::io::{Read, Write};

use crate::error::{EitError, Result};
use crate::mesh::{ElectrodeArc, Point};

pub const GRID_N: usize = 128;

/// Grid geometry and disk mask.
#[derive(Debug, Clone)]
pub struct GridSpec {
    n: usize,
    h: f64,
    mask: Vec<bool>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl GridSpec {
    /// The 128x128 grid shared by every component.
    pub fn canonical() -> Self {
        Self::new(GRID_N)
    }

    pub fn new(n: usize) -> Self {
        assert!(n >= 3, "grid needs at least 3 pixels per axis");
        let m = (n - 1) as i64;
        let mut mask = vec![false; n * n];
        for row in 0..n {
            for col in 0..n {
                let a = 2 * col as i64 - m;
                let b = 2 * row as i64 - m;
                mask[row * n + col] = a * a + b * b <= m * m;
            }
        }
        GridSpec {
            n,
            h: 2.0 / m as f64,
            mask,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn in_mask(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.n, idx % self.n)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        let m = (self.n - 1) as f64;
        (2.0 * i as f64 - m) / m
    }

    /// Physical coordinates of a pixel center.
    pub fn coord(&self, idx: usize) -> Point {
        let (row, col) = self.row_col(idx);
        [self.axis_coord(col), self.axis_coord(row)]
    }

    /// Indices of all in-mask pixels in row-major order.
    pub fn mask_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn n_mask(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Nearest pixel to a point, if that pixel is in the mask.
    pub fn nearest_pixel(&self, p: Point) -> Option<usize> {
        let to_i = |x: f64| ((x + 1.0) / self.h).round();
        let (c, r) = (to_i(p[0]), to_i(p[1]));
        if c < 0.0 || r < 0.0 || c >= self.n as f64 || r >= self.n as f64 {
            return None;
        }
        let idx = self.index(r as usize, c as usize);
        self.mask[idx].then_some(idx)
    }

    /// Bilinear interpolation of `values` at `p`; `None` if any of the four
    /// surrounding pixels is masked.
    pub fn bilinear(&self, values: &[f64], p: Point) -> Option<f64> {
        let fc = (p[0] + 1.0) / self.h;
        let fr = (p[1] + 1.0) / self.h;
        if fc < 0.0 || fr < 0.0 {
            return None;
        }
        let (c0, r0) = (fc.floor() as usize, fr.floor() as usize);
        if c0 + 1 >= self.n || r0 + 1 >= self.n {
            return None;
        }
        let (tc, tr) = (fc - c0 as f64, fr - r0 as f64);
        let ids = [
            self.index(r0, c0),
            self.index(r0, c0 + 1),
            self.index(r0 + 1, c0),
            self.index(r0 + 1, c0 + 1),
        ];
        if ids.iter().any(|&i| !self.mask[i]) {
            return None;
        }
        let v = |k: usize| values[ids[k]];
        Some((1.0 - tr) * ((1.0 - tc) * v(0) + tc * v(1)) + tr * ((1.0 - tc) * v(2) + tc * v(3)))
    }
}

/// What a grid file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum GridSource {
    /// Potential rasterized from a finite-element solve.
    Fem = 0,
    /// Potential predicted by the forward surrogate network.
    Cnn = 1,
    /// Reconstructed conductivity.
    Sigma = 2,
    /// Ground-truth conductivity.
    Truth = 3,
}

impl GridSource {
    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(GridSource::Fem),
            1 => Some(GridSource::Cnn),
            2 => Some(GridSource::Sigma),
            3 => Some(GridSource::Truth),
            _ => None,
        }
    }

    pub fn is_potential(self) -> bool {
        matches!(self, GridSource::Fem | GridSource::Cnn)
    }
}

/// A masked scalar field on a [`GridSpec`]. Masked pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub source: GridSource,
    pub excitation_id: u32,
}

/// Potential `u_d` on the grid.
pub type PotentialGrid = GridField;
/// Conductivity on the grid.
pub type SigmaGrid = GridField;

impl GridField {
    /// Samples `f` at every in-mask pixel center.
    pub fn from_fn(spec: &GridSpec, source: GridSource, excitation_id: u32, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = (0..spec.len())
            .map(|i| if spec.in_mask(i) { f(spec.coord(i)) } else { f64::NAN })
            .collect();
        GridField {
            spec: spec.clone(),
            values,
            source,
            excitation_id,
        }
    }

    pub fn masked_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(self.spec.mask())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
    }

    /// Smallest and largest in-mask value.
    pub fn range(&self) -> (f64, f64) {
        self.masked_values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// Partition of the mask into pixels with a full 4-neighbourhood (`interior`)
/// and the rest (`ring`).
#[derive(Debug, Clone, PartialEq)]
pub struct StencilSets {
    pub interior: Vec<usize>,
    pub ring: Vec<usize>,
}

impl StencilSets {
    pub fn new(spec: &GridSpec) -> Self {
        let n = spec.n();
        let mut interior = Vec::new();
        let mut ring = Vec::new();
        for idx in 0..spec.len() {
            if !spec.in_mask(idx) {
                continue;
            }
            let (r, c) = spec.row_col(idx);
            let full = r > 0
                && c > 0
                && r + 1 < n
                && c + 1 < n
                && spec.in_mask(idx - 1)
                && spec.in_mask(idx + 1)
                && spec.in_mask(idx - n)
                && spec.in_mask(idx + n);
            if full {
                interior.push(idx);
            } else {
                ring.push(idx);
            }
        }
        StencilSets { interior, ring }
    }
}

fn interior_map(field: &GridField, f: impl Fn(&[f64], usize, usize, f64) -> f64) -> Vec<f64> {
    let spec = &field.spec;
    let sets = StencilSets::new(spec);
    let mut out = vec![f64::NAN; spec.len()];
    for &i in &sets.interior {
        out[i] = f(&field.values, i, spec.n(), spec.h());
    }
    out
}

/// Central difference in `x` at interior pixels; NaN elsewhere.
pub fn ddx(field: &GridField) -> Vec<f64> {
    interior_map(field, |u, i, _, h| (u[i + 1] - u[i - 1]) / (2.0 * h))
}

/// Central difference in `y` at interior pixels; NaN elsewhere.
pub fn ddy(field: &GridField) -> Vec<f64> {
    interior_map(field, |u, i, n, h| (u[i + n] - u[i - n]) / (2.0 * h))
}

/// Three-point second difference in `x` at interior pixels.
pub fn d2dx2(field: &GridField) -> Vec<f64> {
    interior_map(field, |u, i, _, h| (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h))
}

/// Three-point second difference in `y` at interior pixels.
pub fn d2dy2(field: &GridField) -> Vec<f64> {
    interior_map(field, |u, i, n, h| (u[i + n] - 2.0 * u[i] + u[i - n]) / (h * h))
}

/// Outward radial derivative at ring pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RingDerivative {
    /// Ring pixels with a usable stencil.
    pub pixels: Vec<usize>,
    pub values: Vec<f64>,
    /// Ring pixels without two usable inward samples.
    pub excluded: Vec<usize>,
}

/// Radial derivative at each ring pixel from a one-sided first-order fit
/// through the pixel value and two bilinear samples at distances `h` and `2h`
/// along the inward normal.
pub fn normal_derivative_ring(field: &GridField) -> RingDerivative {
    let spec = &field.spec;
    let sets = StencilSets::new(spec);
    let h = spec.h();
    let mut out = RingDerivative {
        pixels: Vec::new(),
        values: Vec::new(),
        excluded: Vec::new(),
    };
    for &i in &sets.ring {
        let p = spec.coord(i);
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r < 1e-12 {
            out.excluded.push(i);
            continue;
        }
        let nrm = [p[0] / r, p[1] / r];
        let q1 = spec.bilinear(&field.values, [p[0] - h * nrm[0], p[1] - h * nrm[1]]);
        let q2 = spec.bilinear(&field.values, [p[0] - 2.0 * h * nrm[0], p[1] - 2.0 * h * nrm[1]]);
        match (q1, q2) {
            (Some(_), Some(u2)) => {
                // Least-squares slope through offsets 0, -h, -2h.
                out.pixels.push(i);
                out.values.push((field.values[i] - u2) / (2.0 * h));
            }
            _ => out.excluded.push(i),
        }
    }
    out
}

/// Applied current density at each listed pixel: the density of the
/// electrode arc containing the pixel's polar angle, zero between electrodes.
/// `electrode_currents[k]` is the total current through electrode `k`, spread
/// uniformly over the arc length.
pub fn ring_current_density(spec: &GridSpec, pixels: &[usize], arcs: &[ElectrodeArc], electrode_currents: &[f64]) -> Vec<f64> {
    pixels
        .iter()
        .map(|&i| {
            let p = spec.coord(i);
            let theta = p[1].atan2(p[0]);
            arcs.iter()
                .zip(electrode_currents)
                .find(|(a, _)| a.contains(theta))
                .map_or(0.0, |(a, &c)| c / a.width())
        })
        .collect()
}

const GRID_MAGIC: &[u8; 4] = b"EITG";
pub const GRID_FORMAT_VERSION: u32 = 1;
const MASKED_BITS: u32 = 0x7FC0_0000;

/// Writes the little-endian grid file: magic `EITG`, version `u32`, `n u32`,
/// `excitation_id u32`, source flag `u8`, then `n·n` row-major `f32` values
/// with masked pixels stored as the quiet NaN `0x7FC00000`.
pub fn write_grid<W: Write>(mut w: W, field: &GridField) -> std::io::Result<()> {
    let n = field.spec.n();
    let mut buf = Vec::with_capacity(17 + 4 * n * n);
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&GRID_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&field.excitation_id.to_le_bytes());
    buf.push(field.source as u8);
    for (i, &v) in field.values.iter().enumerate() {
        let bits = if field.spec.in_mask(i) {
            (v as f32).to_bits()
        } else {
            MASKED_BITS
        };
        buf.extend_from_slice(&bits.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn grid_to_bytes(field: &GridField) -> Vec<u8> {
    let mut v = Vec::new();
    write_grid(&mut v, field).expect("writing to a Vec cannot fail");
    v
}

/// Parses a grid file, naming the first violated field on failure.
pub fn grid_from_bytes(bytes: &[u8]) -> Result<GridField> {
    let err = |field: String| EitError::format("grid file", field);
    if bytes.len() < 17 {
        return Err(err(format!("header truncated ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != GRID_MAGIC {
        return Err(err("magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != GRID_FORMAT_VERSION {
        return Err(err(format!("version {version}")));
    }
    let n = u32_at(8) as usize;
    if !(3..=8192).contains(&n) {
        return Err(err(format!("n = {n}")));
    }
    let excitation_id = u32_at(12);
    let source = GridSource::from_flag(bytes[16]).ok_or_else(|| err(format!("source flag {}", bytes[16])))?;
    let expected = 17 + 4 * n * n;
    if bytes.len() != expected {
        return Err(err(format!("payload length {} (expected {expected})", bytes.len())));
    }
    let spec = GridSpec::new(n);
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n * n {
        let bits = u32_at(17 + 4 * i);
        let v = f32::from_bits(bits);
        if spec.in_mask(i) {
            if !v.is_finite() {
                return Err(err(format!("payload pixel {i}: non-finite in-mask value")));
            }
            values.push(v as f64);
        } else {
            if bits != MASKED_BITS {
                return Err(err(format!("payload pixel {i}: masked pixel not quiet NaN")));
            }
            values.push(f64::NAN);
        }
    }
    Ok(GridField {
        spec,
        values,
        source,
        excitation_id,
    })
}

pub fn read_grid<R: Read>(mut r: R) -> Result<GridField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| EitError::format("grid file", format!("read failed: {e}")))?;
    grid_from_bytes(&bytes)
}

pub fn read_grid_file(path: &std::path::Path) -> Result<GridField> {
    let bytes = std::fs::read(path).map_err(|e| EitError::io(path, e))?;
    grid_from_bytes(&bytes).map_err(|e| match e {
        EitError::Format { field, .. } => EitError::format(path.display().to_string(), field),
        other => other,
    })
}

pub fn write_grid_file(path: &std::path::Path, field: &GridField) -> Result<()> {
    std::fs::write(path, grid_to_bytes(field)).map_err(|e| EitError::io(path, e))
}
