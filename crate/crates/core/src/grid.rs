//! Non-negative step functions on the dyadic cells of a centred box.
//!
//! A [`GridFunction`] lives on `[-2^{j0}, 2^{j0})^n` and is constant on every
//! cell of generation `j_max`; it is zero outside the box. Integrals over
//! boxes aligned to the grid are finite sums and therefore exact.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BinaryRational, DyadicBox, DyadicCube, MAX_LEVEL};
use crate::quadrature;

/// Largest `n · (j0 + j_max + 1)`: the grid never exceeds 2^24 cells.
pub const MAX_CELL_BITS: i32 = 24;

/// Domain and resolution of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    j0: i32,
    j_max: i32,
}

impl GridSpec {
    pub fn new(dim: usize, j0: i32, j_max: i32) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        for level in [j0, j_max] {
            if level.abs() > MAX_LEVEL {
                return Err(Error::LevelOutOfRange(level as i64));
            }
        }
        if j_max < -j0 {
            return Err(Error::ResolutionCap(format!(
                "resolution {j_max} is coarser than the domain level {}",
                -j0
            )));
        }
        let bits = dim as i32 * (j0 + j_max + 1);
        if bits > MAX_CELL_BITS {
            return Err(Error::ResolutionCap(format!("2^{bits} cells exceed the 2^{MAX_CELL_BITS} cap")));
        }
        Ok(Self { dim, j0, j_max })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The domain is `[-2^{j0}, 2^{j0})^n`.
    pub fn j0(&self) -> i32 {
        self.j0
    }

    /// Cell generation; cells have side `2^{-j_max}`.
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn per_axis(&self) -> usize {
        1usize << (self.j0 + self.j_max + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.per_axis().pow(self.dim as u32)
    }

    pub fn cell_width(&self) -> f64 {
        2f64.powi(-self.j_max)
    }

    pub fn cell_volume(&self) -> f64 {
        2f64.powi(-self.j_max * self.dim as i32)
    }

    pub fn domain(&self) -> DyadicBox {
        DyadicBox::centered(self.dim, self.j0).expect("validated spec")
    }

    /// Same domain, `levels` generations finer.
    pub fn refined(&self, levels: i32) -> Result<Self> {
        Self::new(self.dim, self.j0, self.j_max + levels)
    }

    /// Per-axis cell indices of a flat index (axis 0 fastest).
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        let n = self.per_axis();
        if self.dim == 1 { [flat, 0] } else { [flat % n, flat / n] }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 { idx[0] } else { idx[0] + self.per_axis() * idx[1] }
    }

    /// Lattice index (level `j_max`) of per-axis cell index `i`.
    pub fn global_index(&self, i: usize) -> i64 {
        i as i64 - (self.per_axis() / 2) as i64
    }

    /// Per-axis cell index of lattice index `g`, if inside the domain.
    pub fn local_index(&self, g: i64) -> Option<usize> {
        let i = g + (self.per_axis() / 2) as i64;
        (i >= 0 && (i as usize) < self.per_axis()).then_some(i as usize)
    }

    /// The dyadic cube of generation `j_max` occupied by a cell.
    pub fn cell_cube(&self, flat: usize) -> DyadicCube {
        let idx = self.unflatten(flat);
        let index = (0..self.dim).map(|a| self.global_index(idx[a])).collect();
        DyadicCube::new(self.j_max, index).expect("cell inside lattice caps")
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let idx = self.unflatten(flat);
        let h = self.cell_width();
        (0..self.dim).map(|a| (self.global_index(idx[a]) as f64 + 0.5) * h).collect()
    }

    /// Flat index of the cell containing `x`.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim {
            return None;
        }
        let h = self.cell_width();
        let mut idx = [0usize; 2];
        for a in 0..self.dim {
            idx[a] = self.local_index((x[a] / h).floor() as i64)?;
        }
        Some(self.flatten(idx))
    }

    /// Range of per-axis cell indices covered by `[lo, hi)` at `level`, with the
    /// overlap length of each cell.
    fn axis_overlaps(&self, level: i32, lo: i64, hi: i64) -> Vec<(usize, f64)> {
        let m = level.max(self.j_max);
        let scale_box = (m - level) as u32;
        let scale_cell = (m - self.j_max) as u32;
        let (lo_m, hi_m) = ((lo as i128) << scale_box, (hi as i128) << scale_box);
        let s = 1i128 << scale_cell;
        let unit = 2f64.powi(-m);
        let half = (self.per_axis() / 2) as i128;
        let first = lo_m.div_euclid(s).max(-half);
        let last = (hi_m - 1).div_euclid(s).min(half - 1);
        let mut out = Vec::new();
        let mut g = first;
        while g <= last {
            let a = (g * s).max(lo_m);
            let b = ((g + 1) * s).min(hi_m);
            if b > a {
                out.push(((g + half) as usize, (b - a) as f64 * unit));
            }
            g += 1;
        }
        out
    }
}

/// A non-negative step function at dyadic resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![0.0; spec.cell_count()] }
    }

    /// Signed values are rectified to `|v|`.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells",
                values.len(),
                spec.cell_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at cell {i}")));
        }
        Ok(Self { spec, values: values.into_iter().map(f64::abs).collect() })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(usize) -> f64 + Sync + Send) -> Result<Self> {
        let values: Vec<f64> = (0..spec.cell_count()).into_par_iter().map(f).collect();
        Self::from_values(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.spec.locate(x).map_or(0.0, |i| self.values[i])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Characteristic function of a region aligned to the grid and inside the domain.
    pub fn indicator(spec: GridSpec, region: &DyadicBox) -> Result<Self> {
        if region.dim() != spec.dim() {
            return Err(Error::DimensionMismatch(region.dim(), spec.dim()));
        }
        if region.level() > spec.j_max() {
            let fine = region.at_level(spec.j_max()).map_err(|_| Error::FinerThanGrid {
                cube: format!("{region:?}"),
                j_max: spec.j_max(),
            })?;
            return Self::indicator(spec, &fine);
        }
        let inside = spec.domain().intersect(region)?;
        if inside.as_ref().map(DyadicBox::volume) != Some(region.volume()) {
            return Err(Error::OutsideDomain);
        }
        let mut f = Self::zeros(spec);
        let axes: Vec<Vec<(usize, f64)>> = (0..spec.dim())
            .map(|a| spec.axis_overlaps(region.level(), region.lo()[a], region.hi()[a]))
            .collect();
        for_each_cell(&axes, |flat_idx, _| f.values[spec.flatten(flat_idx)] = 1.0);
        Ok(f)
    }

    pub fn indicator_cube(spec: GridSpec, cube: &DyadicCube) -> Result<Self> {
        if cube.level() > spec.j_max() {
            return Err(Error::FinerThanGrid { cube: cube.to_string(), j_max: spec.j_max() });
        }
        Self::indicator(spec, &cube.to_box())
    }

    /// Cell averages of `|x|^{-n/p}`.
    pub fn power_law(spec: GridSpec, p: f64) -> Result<Self> {
        Self::power_law_at(spec, p, &[])
    }

    /// Cell averages of `|x - c|^{-n/p}` for a centre `c` on the lattice of
    /// generation `<= j_max` (an empty slice means the origin).
    ///
    /// Requires `p > 1` so that the singularity is integrable.
    pub fn power_law_at(spec: GridSpec, p: f64, center: &[BinaryRational]) -> Result<Self> {
        if p.is_nan() || p <= 0.0 {
            return Err(Error::InvalidExponent(format!("power law needs p > 0, got {p}")));
        }
        if p <= 1.0 {
            return Err(Error::InvalidExponent(format!(
                "|x|^(-n/p) is not locally integrable for p = {p} <= 1"
            )));
        }
        let n = spec.dim();
        let c: Vec<f64> = if center.is_empty() {
            vec![0.0; n]
        } else if center.len() != n {
            return Err(Error::DimensionMismatch(center.len(), n));
        } else {
            if center.iter().any(|c| -c.exponent() > spec.j_max() && c.mantissa() != 0) {
                return Err(Error::InvalidParameter("power-law centre is not a grid vertex".into()));
            }
            center.iter().map(|c| c.to_f64()).collect()
        };
        let alpha = n as f64 - n as f64 / p;
        let h = spec.cell_width();
        let vol = spec.cell_volume();
        Self::from_fn(spec, |i| {
            let centre = spec.cell_center(i);
            let lo: Vec<f64> = centre.iter().zip(&c).map(|(x, c)| x - 0.5 * h - c).collect();
            let hi: Vec<f64> = lo.iter().map(|x| x + h).collect();
            quadrature::cell_power_integral(&lo, &hi, alpha) / vol
        })
    }

    /// `∫_R f`, exact on the step representation; the part of `R` outside the
    /// domain contributes nothing.
    pub fn integrate(&self, region: &DyadicBox) -> Result<f64> {
        if region.dim() != self.spec.dim() {
            return Err(Error::DimensionMismatch(region.dim(), self.spec.dim()));
        }
        let axes: Vec<Vec<(usize, f64)>> = (0..self.spec.dim())
            .map(|a| self.spec.axis_overlaps(region.level(), region.lo()[a], region.hi()[a]))
            .collect();
        let mut total = 0.0;
        match self.spec.dim() {
            1 => {
                for &(i, len) in &axes[0] {
                    total += self.values[i] * len;
                }
            }
            _ => {
                for &(i1, len1) in &axes[1] {
                    let mut row = 0.0;
                    for &(i0, len0) in &axes[0] {
                        row += self.values[self.spec.flatten([i0, i1])] * len0;
                    }
                    total += row * len1;
                }
            }
        }
        Ok(total)
    }

    pub fn integrate_cube(&self, cube: &DyadicCube) -> Result<f64> {
        self.integrate(&cube.to_box())
    }

    /// `∫ f` over the whole domain.
    pub fn total(&self) -> f64 {
        let vol = self.spec.cell_volume();
        self.values.iter().map(|v| v * vol).sum()
    }

    /// `x ↦ f(2^m x)`: the same values on a grid with `j0 - m`, `j_max + m`.
    pub fn dilate_dyadic(&self, m: i32) -> Result<Self> {
        let spec = GridSpec::new(self.spec.dim(), self.spec.j0() - m, self.spec.j_max() + m)?;
        Ok(Self { spec, values: self.values.clone() })
    }

    /// `x ↦ f(x - k 2^{-level})`, truncated to the domain.
    pub fn translate_dyadic(&self, level: i32, shift: &[i64]) -> Result<Self> {
        let n = self.spec.dim();
        if shift.len() != n {
            return Err(Error::DimensionMismatch(shift.len(), n));
        }
        if level > self.spec.j_max() {
            return Err(Error::FinerThanGrid { cube: format!("shift at level {level}"), j_max: self.spec.j_max() });
        }
        let scale = 1i64 << (self.spec.j_max() - level).min(62);
        let cells: Vec<i64> = shift.iter().map(|k| k.saturating_mul(scale)).collect();
        let spec = self.spec;
        let per = spec.per_axis() as i64;
        Self::from_fn(spec, |flat| {
            let idx = spec.unflatten(flat);
            let mut src = [0usize; 2];
            for a in 0..n {
                let s = idx[a] as i64 - cells[a];
                if s < 0 || s >= per {
                    return 0.0;
                }
                src[a] = s as usize;
            }
            self.values[spec.flatten(src)]
        })
    }

    /// The same step function on a grid `levels` generations finer.
    pub fn refine(&self, levels: i32) -> Result<Self> {
        if levels < 0 {
            return Err(Error::InvalidParameter("refine needs levels >= 0".into()));
        }
        let spec = self.spec.refined(levels)?;
        let src = self.spec;
        Self::from_fn(spec, |flat| {
            let idx = spec.unflatten(flat);
            self.values[src.flatten([idx[0] >> levels, idx[1] >> levels])]
        })
    }

    /// Multiply by `χ_R` for a region aligned to the grid.
    pub fn restrict(&self, region: &DyadicBox) -> Result<Self> {
        let inside = match self.spec.domain().intersect(region)? {
            Some(b) => b,
            None => return Ok(Self::zeros(self.spec)),
        };
        self.mul(&Self::indicator(self.spec, &inside)?)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.spec, other.spec)));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self { spec: self.spec, values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect() }
    }

    pub fn powf(&self, u: f64) -> Result<Self> {
        if !(u > 0.0) || !u.is_finite() {
            return Err(Error::InvalidExponent(format!("power must be positive, got {u}")));
        }
        Ok(self.map(|v| v.powf(u)))
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("scale factor must be finite and >= 0, got {c}")));
        }
        Ok(self.map(|v| v * c))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Text form: a `# n j0 j_max` header line followed by one value per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n={} j0={} j_max={}", self.spec.dim(), self.spec.j0(), self.spec.j_max())?;
        for v in &self.values {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty grid file".into()))?;
        let field = |key: &str| -> Result<i64> {
            header
                .split_whitespace()
                .find_map(|t| t.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse(format!("header lacks {key}: {header:?}")))
        };
        let spec = GridSpec::new(field("n")? as usize, field("j0")? as i32, field("j_max")? as i32)?;
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| l.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad value on data line {}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(spec, values)
    }

    /// Binary form: `MGF1`, `u8` dimension, `i32` j0, `i32` j_max, `u64` count,
    /// then little-endian `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"MGF1")?;
        w.write_all(&[self.spec.dim() as u8])?;
        w.write_all(&self.spec.j0().to_le_bytes())?;
        w.write_all(&self.spec.j_max().to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Parse(e.to_string());
        let mut head = [0u8; 21];
        r.read_exact(&mut head).map_err(io)?;
        if &head[..4] != b"MGF1" {
            return Err(Error::Parse("bad magic".into()));
        }
        let j0 = i32::from_le_bytes(head[5..9].try_into().unwrap());
        let j_max = i32::from_le_bytes(head[9..13].try_into().unwrap());
        let count = u64::from_le_bytes(head[13..21].try_into().unwrap());
        let spec = GridSpec::new(head[4] as usize, j0, j_max)?;
        if count != spec.cell_count() as u64 {
            return Err(Error::Parse(format!("count {count} does not match header")));
        }
        let mut bytes = vec![0u8; 8 * count as usize];
        r.read_exact(&mut bytes).map_err(io)?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_values(spec, values)
    }
}

fn for_each_cell(axes: &[Vec<(usize, f64)>], mut f: impl FnMut([usize; 2], f64)) {
    if axes.len() == 1 {
        for &(i, w) in &axes[0] {
            f([i, 0], w);
        }
    } else {
        for &(i1, w1) in &axes[1] {
            for &(i0, w0) in &axes[0] {
                f([i0, i1], w0 * w1);
            }
        }
    }
}

/// Integrals of a function over every dyadic cube of generations
/// `-j0 ..= j_max` inside the domain, built bottom-up by summing children.
#[derive(Debug, Clone)]
pub struct BlockSums {
    spec: GridSpec,
    /// `levels[l]` holds generation `j_max - l`.
    levels: Vec<Vec<f64>>,
}

impl BlockSums {
    pub fn new(f: &GridFunction) -> Self {
        Self::from_cell_masses(*f.spec(), f.values.iter().map(|v| v * f.spec.cell_volume()).collect())
    }

    /// Block sums of `|f|^u`.
    pub fn of_power(f: &GridFunction, u: f64) -> Self {
        let vol = f.spec.cell_volume();
        Self::from_cell_masses(*f.spec(), f.values.iter().map(|v| v.powf(u) * vol).collect())
    }

    fn from_cell_masses(spec: GridSpec, masses: Vec<f64>) -> Self {
        let mut levels = vec![masses];
        let mut per = spec.per_axis();
        while per > 2 {
            let prev = levels.last().unwrap();
            let half = per / 2;
            let next: Vec<f64> = match spec.dim() {
                1 => (0..half).map(|i| prev[2 * i] + prev[2 * i + 1]).collect(),
                _ => (0..half * half)
                    .map(|f| {
                        let (i, j) = (f % half, f / half);
                        let at = |a: usize, b: usize| prev[a + per * b];
                        (at(2 * i, 2 * j) + at(2 * i + 1, 2 * j)) + (at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j + 1))
                    })
                    .collect(),
            };
            levels.push(next);
            per = half;
        }
        Self { spec, levels }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coarsest_level(&self) -> i32 {
        -self.spec.j0()
    }

    /// Block integrals at generation `level ∈ [-j0, j_max]`, axis 0 fastest.
    pub fn level(&self, level: i32) -> &[f64] {
        &self.levels[(self.spec.j_max() - level) as usize]
    }

    pub fn per_axis_at(&self, level: i32) -> usize {
        1usize << (level + self.spec.j0() + 1)
    }

    /// `∫_Q f` for any dyadic cube.
    pub fn cube(&self, cube: &DyadicCube) -> f64 {
        self.aligned_box(cube.level(), cube.index(), &cube.index().iter().map(|k| k + 1).collect::<Vec<_>>())
    }

    /// `∫_{3Q} f`.
    pub fn tripled(&self, level: i32, index: &[i64]) -> f64 {
        let lo: Vec<i64> = index.iter().map(|k| k - 1).collect();
        let hi: Vec<i64> = index.iter().map(|k| k + 2).collect();
        self.aligned_box(level, &lo, &hi)
    }

    /// `∫` over `Π [lo_i 2^{-level}, hi_i 2^{-level})` for `level <= j_max`.
    pub fn aligned_box(&self, level: i32, lo: &[i64], hi: &[i64]) -> f64 {
        assert!(level <= self.spec.j_max(), "aligned_box needs level <= j_max");
        let coarsest = self.coarsest_level();
        let (level, lo, hi): (i32, Vec<i64>, Vec<i64>) = if level < coarsest {
            let s = (coarsest - level).min(62) as u32;
            let up = |v: &i64| (*v as i128).checked_shl(s).map_or(i64::MAX, |x| x.clamp(i64::MIN as i128, i64::MAX as i128) as i64);
            (coarsest, lo.iter().map(up).collect(), hi.iter().map(up).collect())
        } else {
            (level, lo.to_vec(), hi.to_vec())
        };
        let per = self.per_axis_at(level) as i64;
        let half = per / 2;
        let clip = |a: usize| ((lo[a] + half).clamp(0, per) as usize, (hi[a] + half).clamp(0, per) as usize);
        let data = self.level(level);
        match self.spec.dim() {
            1 => {
                let (a, b) = clip(0);
                data[a..b.max(a)].iter().sum()
            }
            _ => {
                let (a0, b0) = clip(0);
                let (a1, b1) = clip(1);
                let mut total = 0.0;
                for j in a1..b1 {
                    let row = &data[j * per as usize..(j + 1) * per as usize];
                    total += row[a0..b0.max(a0)].iter().sum::<f64>();
                }
                total
            }
        }
    }
}
