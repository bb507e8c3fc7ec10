//! Bilinear fractional integrals, their dyadic majorants and the averaged
//! variants built from them.
//!
//! Every operator is evaluated at cell centres. Offsets between cells are
//! whole multiples of the cell width, so `f1(x + y) f2(x - y)` is constant on
//! each y-cell and the kernel can be integrated over cells exactly. Kernel
//! tables are built for unit cells and rescaled by `h^alpha`.
//!
//! Sums run in a fixed order (levels ascending, offsets lexicographic) and
//! each output cell is computed independently, so results do not depend on
//! the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BlockSums, GridFunction, GridSpec};
use crate::lattice::{DyadicBox, DyadicCube, MAX_LEVEL};
use crate::quadrature;

/// Largest grid accepted by [`i_alpha`].
pub const I_ALPHA_MAX_CELLS: usize = 1 << 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    alpha: f64,
    dim: usize,
}

impl OperatorParams {
    /// Accepts `0 < alpha < 2n`; the J-type operators further need `alpha < n`.
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 2.0 * dim as f64) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, {})", 2 * dim)));
        }
        Ok(Self { alpha, dim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn require_j(&self) -> Result<()> {
        if self.alpha >= self.dim as f64 {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} must be below n = {} for J-type operators",
                self.alpha, self.dim
            )));
        }
        Ok(())
    }
}

/// Finite range of generations `j_min ..= j_max_sum` replacing the sum over
/// all `j ∈ Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorantTruncation {
    pub j_min: i32,
    pub j_max_sum: i32,
}

impl MajorantTruncation {
    pub fn new(j_min: i32, j_max_sum: i32) -> Result<Self> {
        for level in [j_min, j_max_sum] {
            if level.abs() > MAX_LEVEL {
                return Err(Error::LevelOutOfRange(level as i64));
            }
        }
        if j_min > j_max_sum {
            return Err(Error::InvalidParameter(format!("truncation {j_min} > {j_max_sum}")));
        }
        Ok(Self { j_min, j_max_sum })
    }

    /// `-(j0 + 2) ..= j_max`.
    pub fn default_for(spec: &GridSpec) -> Self {
        Self { j_min: -(spec.j0() + 2), j_max_sum: spec.j_max() }
    }

    /// One more generation on each side.
    pub fn widened(&self) -> Result<Self> {
        Self::new(self.j_min - 1, self.j_max_sum + 1)
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max_sum
    }
}

fn check_pair(f1: &GridFunction, f2: &GridFunction, p: &OperatorParams) -> Result<GridSpec> {
    let spec = *f1.spec();
    if spec != *f2.spec() {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", spec, f2.spec())));
    }
    if spec.dim() != p.dim {
        return Err(Error::DimensionMismatch(spec.dim(), p.dim));
    }
    Ok(spec)
}

fn check_u(u: f64) -> Result<()> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::InvalidParameter(format!("u = {u} must be positive")));
    }
    Ok(())
}

/// Visits the reflected pairs `(x + m, x - m)` around the cell `flat`, once per
/// pair `{m, -m}`. The callback gets the table key `|m0| + N |m1|` and
/// `f1(x+m) f2(x-m) + f1(x-m) f2(x+m)` (just `f1(x) f2(x)` for `m = 0`), which
/// is symmetric in `(f1, f2)` bit for bit.
fn visit_pairs(spec: &GridSpec, f1: &[f64], f2: &[f64], flat: usize, mut visit: impl FnMut(usize, f64)) {
    let n = spec.per_axis();
    let idx = spec.unflatten(flat);
    visit(0, f1[flat] * f2[flat]);
    if spec.dim() == 1 {
        let i = idx[0];
        let r = i.min(n - 1 - i);
        for m in 1..=r {
            visit(m, f1[i + m] * f2[i - m] + f1[i - m] * f2[i + m]);
        }
        return;
    }
    let (i0, i1) = (idx[0] as isize, idx[1] as isize);
    let r0 = i0.min(n as isize - 1 - i0);
    let r1 = i1.min(n as isize - 1 - i1);
    let at = |a: isize, b: isize| a as usize + n * b as usize;
    for m1 in 0..=r1 {
        let start = if m1 == 0 { 1 } else { -r0 };
        for m0 in start..=r0 {
            let a = at(i0 + m0, i1 + m1);
            let b = at(i0 - m0, i1 - m1);
            visit(m0.unsigned_abs() + n * m1 as usize, f1[a] * f2[b] + f1[b] * f2[a]);
        }
    }
}

/// `∫_cell |y|^{alpha-n}` for every non-negative offset cell, unit cell width.
fn kernel_table(spec: &GridSpec, alpha: f64) -> Vec<f64> {
    let n = spec.per_axis();
    let dim = spec.dim();
    let count = n.pow(dim as u32);
    (0..count)
        .into_par_iter()
        .map(|key| {
            let m = [key % n, key / n];
            let lo: Vec<f64> = (0..dim).map(|a| m[a] as f64 - 0.5).collect();
            let hi: Vec<f64> = (0..dim).map(|a| m[a] as f64 + 0.5).collect();
            quadrature::cell_power_integral(&lo, &hi, alpha)
        })
        .collect()
}

/// `J_α[f1, f2](x) = ∫ f1(x + y) f2(x - y) |y|^{α-n} dy` at cell centres.
pub fn j_alpha(f1: &GridFunction, f2: &GridFunction, p: &OperatorParams) -> Result<GridFunction> {
    let spec = check_pair(f1, f2, p)?;
    p.require_j()?;
    let scale = spec.cell_width().powf(p.alpha);
    let table: Vec<f64> = kernel_table(&spec, p.alpha).into_iter().map(|w| w * scale).collect();
    let (a, b) = (f1.values(), f2.values());
    GridFunction::from_fn(spec, |flat| {
        let mut total = 0.0;
        visit_pairs(&spec, a, b, flat, |key, v| {
            if v != 0.0 {
                total += table[key] * v;
            }
        });
        total
    })
}

/// Per offset cell, the smallest `d >= 0` with `4^d > |m|²` (in cell units).
/// The cell centre lies in `B(2^{-j})` iff `j <= j_max - d`.
fn depth_table(spec: &GridSpec) -> Vec<u8> {
    let n = spec.per_axis();
    let count = n.pow(spec.dim() as u32);
    (0..count)
        .map(|key| {
            let (a, b) = ((key % n) as u128, (key / n) as u128);
            let r2 = a * a + b * b;
            let mut d = 0u8;
            while (1u128 << (2 * d as u32)) <= r2 {
                d += 1;
            }
            d
        })
        .collect()
}

/// Ball integrals `B_j(x) = ∫_{B(2^{-j})} f1(x + y) f2(x - y) dy` for every
/// cell and every generation of `levels`, with a y-cell counted iff its centre
/// lies in the ball; the cell at the origin contributes `vol(cell ∩ ball)`.
/// Returned as one slice per generation.
fn ball_integrals(f1: &GridFunction, f2: &GridFunction, levels: &[i32]) -> Vec<Vec<f64>> {
    let spec = *f1.spec();
    let depths = depth_table(&spec);
    let max_depth = depths.iter().copied().max().unwrap_or(0) as usize;
    let vol = spec.cell_volume();
    let h = spec.cell_width();
    let centre: Vec<f64> = levels
        .iter()
        .map(|&j| quadrature::centered_cell_ball_volume(spec.dim(), h, 2f64.powi(-j)))
        .collect();
    let (a, b) = (f1.values(), f2.values());
    let rows: Vec<Vec<f64>> = (0..spec.cell_count())
        .into_par_iter()
        .map(|flat| {
            let mut g0 = 0.0;
            let mut bins = vec![0.0; max_depth + 1];
            visit_pairs(&spec, a, b, flat, |key, v| {
                if key == 0 {
                    g0 = v;
                } else {
                    bins[depths[key] as usize] += v;
                }
            });
            // prefix[d] = mass of the offset cells with depth <= d
            let mut prefix = Vec::with_capacity(bins.len());
            let mut acc = 0.0;
            for v in &bins {
                acc += v * vol;
                prefix.push(acc);
            }
            levels
                .iter()
                .zip(&centre)
                .map(|(&j, c)| {
                    let d = spec.j_max() - j;
                    let ring = if d <= 0 { 0.0 } else { prefix[(d as usize).min(max_depth)] };
                    ring + g0 * c
                })
                .collect()
        })
        .collect();
    (0..levels.len()).map(|l| rows.iter().map(|r| r[l]).collect()).collect()
}

fn level_weight(j: i32, exponent: f64) -> f64 {
    2f64.powf(j as f64 * exponent)
}

/// `G_j(x) = 2^{j(n-α)} B_j(x)` for each generation of `t`.
fn majorant_slices(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    t: &MajorantTruncation,
) -> Result<Vec<(i32, Vec<f64>)>> {
    check_pair(f1, f2, p)?;
    p.require_j()?;
    let levels: Vec<i32> = t.levels().collect();
    let e = p.dim as f64 - p.alpha;
    Ok(levels
        .iter()
        .zip(ball_integrals(f1, f2, &levels))
        .map(|(&j, slice)| {
            let w = level_weight(j, e);
            (j, slice.into_iter().map(|v| v * w).collect())
        })
        .collect())
}

fn sum_slices(spec: GridSpec, slices: &[(i32, Vec<f64>)]) -> Result<GridFunction> {
    GridFunction::from_fn(spec, |flat| slices.iter().map(|(_, s)| s[flat]).sum())
}

/// `Σ_j 2^{j(n-α)} ∫_{B(2^{-j})} f1(x + y) f2(x - y) dy` over the generations of `t`.
pub fn dyadic_majorant_j(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    t: &MajorantTruncation,
) -> Result<GridFunction> {
    let slices = majorant_slices(f1, f2, p, t)?;
    sum_slices(*f1.spec(), &slices)
}

/// The generation-`level` term of [`dyadic_majorant_j`] on the whole grid.
pub fn majorant_j_level(f1: &GridFunction, f2: &GridFunction, p: &OperatorParams, level: i32) -> Result<GridFunction> {
    let t = MajorantTruncation::new(level, level)?;
    let mut slices = majorant_slices(f1, f2, p, &t)?;
    GridFunction::from_values(*f1.spec(), slices.remove(0).1)
}

/// `F_{j,Q} = χ_Q ℓ(Q)^{α-n} ∫_{B(2^{-j})} f1(· + y) f2(· - y) dy` with `j` the
/// generation of `Q`.
pub fn f_jq(f1: &GridFunction, f2: &GridFunction, p: &OperatorParams, q: &DyadicCube) -> Result<GridFunction> {
    let spec = check_pair(f1, f2, p)?;
    if q.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(q.dim(), spec.dim()));
    }
    if q.level() > spec.j_max() {
        return Err(Error::FinerThanGrid { cube: q.to_string(), j_max: spec.j_max() });
    }
    let Some(inside) = q.to_box().intersect(&spec.domain())? else {
        return Ok(GridFunction::zeros(spec));
    };
    let slice = majorant_j_level(f1, f2, p, q.level())?;
    slice.mul(&GridFunction::indicator(spec, &inside)?)
}

/// Flat index of the generation-`level` block containing cell `idx`, for
/// `-j0 <= level <= j_max`.
fn block_index(spec: &GridSpec, idx: [usize; 2], level: i32) -> usize {
    let shift = (spec.j_max() - level) as u32;
    let per = 1usize << (level + spec.j0() + 1);
    if spec.dim() == 1 { idx[0] >> shift } else { (idx[0] >> shift) + per * (idx[1] >> shift) }
}

/// Per cell: `(m_Q(g^u))^{1/u}` for the generation-`level` cube `Q` containing
/// it. Cubes coarser than the domain average over their full volume, where `g`
/// vanishes outside the domain. For `level > j_max` this is `g` itself.
fn block_average(spec: GridSpec, g: &[f64], level: i32, u: f64) -> Result<Vec<f64>> {
    if level >= spec.j_max() {
        return Ok(g.to_vec());
    }
    let gf = GridFunction::from_values(spec, g.to_vec())?;
    let sums = BlockSums::of_power(&gf, u);
    let n = spec.dim() as i32;
    let vol = 2f64.powi(-level * n);
    let inv = 1.0 / u;
    Ok((0..spec.cell_count())
        .map(|flat| {
            let mass = if level >= sums.coarsest_level() {
                sums.level(level)[block_index(&spec, spec.unflatten(flat), level)]
            } else {
                let cube = spec.cell_cube(flat).ancestor_at_level(level).expect("coarser level");
                sums.cube(&cube)
            };
            (mass / vol).powf(inv)
        })
        .collect())
}

/// `Σ_j Σ_{Q ∈ D_j} m_Q(F_{j,Q}) χ_Q` over the generations of `t`.
pub fn averaged_majorant(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    t: &MajorantTruncation,
) -> Result<GridFunction> {
    averaged_with(f1, f2, p, t, 1.0)
}

/// `Σ_j Σ_{Q ∈ D_j} m^{(u)}_Q(F_{j,Q}) χ_Q` for `u > 1`.
pub fn powered_averaged_majorant(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    t: &MajorantTruncation,
    u: f64,
) -> Result<GridFunction> {
    if !(u.is_finite() && u > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "u = {u}: the powered averaging bound moves the L^u average inside the ball integral \
             with Minkowski's integral inequality, which needs u > 1"
        )));
    }
    averaged_with(f1, f2, p, t, u)
}

fn averaged_with(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    t: &MajorantTruncation,
    u: f64,
) -> Result<GridFunction> {
    let spec = *f1.spec();
    let slices = majorant_slices(f1, f2, p, t)?
        .into_iter()
        .map(|(j, s)| Ok((j, block_average(spec, &s, j, u)?)))
        .collect::<Result<Vec<_>>>()?;
    sum_slices(spec, &slices)
}

/// Per generation of `t`, the per-cell term
/// `2^{j(2n/u - α)} (∫_{3Q} f1^u ∫_{3Q} f2^u)^{1/u}` of the cube `Q ∋ x`.
///
/// Below the grid scale the cube is the one containing the cell centre.
fn cube_terms(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    u: f64,
    t: &MajorantTruncation,
) -> Result<Vec<(i32, Vec<f64>)>> {
    let spec = check_pair(f1, f2, p)?;
    check_u(u)?;
    let s1 = BlockSums::of_power(f1, u);
    let s2 = BlockSums::of_power(f2, u);
    let (g1, g2) = (f1.powf(u)?, f2.powf(u)?);
    let e = 2.0 * p.dim as f64 / u - p.alpha;
    let inv = 1.0 / u;
    let term = |w: f64, a: f64, b: f64| w * (a * b).powf(inv);
    t.levels()
        .map(|j| {
            let w = level_weight(j, e);
            let values: Vec<f64> = if j >= s1.coarsest_level() && j <= spec.j_max() {
                // one value per block, then broadcast
                let per = s1.per_axis_at(j);
                let half = (per / 2) as i64;
                let blocks: Vec<f64> = (0..per.pow(spec.dim() as u32))
                    .into_par_iter()
                    .map(|b| {
                        let index: Vec<i64> =
                            [b % per, b / per][..spec.dim()].iter().map(|&i| i as i64 - half).collect();
                        term(w, s1.tripled(j, &index), s2.tripled(j, &index))
                    })
                    .collect();
                (0..spec.cell_count()).map(|flat| blocks[block_index(&spec, spec.unflatten(flat), j)]).collect()
            } else if j < s1.coarsest_level() {
                (0..spec.cell_count())
                    .map(|flat| {
                        let cube = spec.cell_cube(flat).ancestor_at_level(j).expect("coarser level");
                        term(w, s1.tripled(j, cube.index()), s2.tripled(j, cube.index()))
                    })
                    .collect()
            } else {
                let s = (j - spec.j_max()) as u32;
                (0..spec.cell_count())
                    .into_par_iter()
                    .map(|flat| {
                        let cell = spec.cell_cube(flat);
                        let lo: Vec<i64> = cell.index().iter().map(|&g| (g << s) + (1 << (s - 1)) - 1).collect();
                        let hi: Vec<i64> = lo.iter().map(|&k| k + 3).collect();
                        let tripled = DyadicBox::new(j, lo, hi).expect("inside caps");
                        let a = g1.integrate(&tripled).expect("matching dimension");
                        let b = g2.integrate(&tripled).expect("matching dimension");
                        term(w, a, b)
                    })
                    .collect()
            };
            Ok((j, values))
        })
        .collect()
}

/// `Σ_{Q ∋ x} ℓ(Q)^{α - 2n/u} (∫_{(3Q)²} (f1 ⊗ f2)^u)^{1/u}` over the generations of `t`.
pub fn u_powered_cube_sum(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    u: f64,
    t: &MajorantTruncation,
) -> Result<GridFunction> {
    let terms = cube_terms(f1, f2, p, u, t)?;
    sum_slices(*f1.spec(), &terms)
}

/// `Σ_{Q ∋ x} ℓ(Q)^{α-2n} ∫_{3Q} f1 ∫_{3Q} f2`; the `u = 1` cube sum.
pub fn dyadic_majorant_i(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    t: &MajorantTruncation,
) -> Result<GridFunction> {
    u_powered_cube_sum(f1, f2, p, 1.0, t)
}

/// Kernel `∫_{cell d1} ∫_{cell d2} (|a| + |b|)^{α-2}` over unit cells, indexed
/// by `|d1| + N |d2|`. Cells through the origin fold onto `[0, 1/2]` twice.
/// Away from the axes the value depends on `d1 + d2` only, so just `O(N)`
/// distinct integrals are needed.
fn l1_kernel_table(n: usize, alpha: f64) -> Vec<f64> {
    let interval = |d: usize| if d == 0 { (2.0, [0.0, 0.5]) } else { (1.0, [d as f64 - 0.5, d as f64 + 0.5]) };
    let cell = |d1: usize, d2: usize| {
        let (w1, a) = interval(d1);
        let (w2, b) = interval(d2);
        w1 * w2 * quadrature::l1_rect_kernel(a, b, alpha)
    };
    let edge: Vec<f64> = (0..n).map(|d| cell(0, d)).collect();
    let diagonal: Vec<f64> = (0..2 * n).map(|s| if s < 2 { 0.0 } else { cell(1, s - 1) }).collect();
    (0..n * n)
        .map(|key| {
            let (d1, d2) = (key % n, key / n);
            match (d1, d2) {
                (0, d) | (d, 0) => edge[d],
                _ => diagonal[d1 + d2],
            }
        })
        .collect()
}

/// Folded values `G(0) = f(x)`, `G(d) = f(x + d) + f(x - d)`.
fn folded(values: &[f64], i: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|d| {
            if d == 0 {
                values[i]
            } else {
                let up = if i + d < n { values[i + d] } else { 0.0 };
                let down = if d <= i { values[i - d] } else { 0.0 };
                up + down
            }
        })
        .collect()
}

fn i_alpha_cell(a: &[f64], b: &[f64], table: &[f64], i: usize) -> f64 {
    let n = a.len();
    let g1 = folded(a, i);
    let g2 = folded(b, i);
    let Some(last2) = g2.iter().rposition(|&v| v != 0.0) else { return 0.0 };
    let first2 = g2.iter().position(|&v| v != 0.0).unwrap_or(0);
    let mut total = 0.0;
    for (d1, &v1) in g1.iter().enumerate() {
        if v1 == 0.0 {
            continue;
        }
        // the kernel is symmetric, so row d1 holds K(d1, ·) contiguously
        let row = &table[d1 * n..(d1 + 1) * n];
        let mut inner = 0.0;
        for d2 in first2..=last2 {
            inner += g2[d2] * row[d2];
        }
        total += v1 * inner;
    }
    total
}

fn i_alpha_setup(f1: &GridFunction, f2: &GridFunction, p: &OperatorParams) -> Result<(GridSpec, f64)> {
    let spec = check_pair(f1, f2, p)?;
    if spec.dim() != 1 {
        return Err(Error::UnsupportedDimension(spec.dim()));
    }
    Ok((spec, spec.cell_width().powf(p.alpha)))
}

/// `I_α[f1, f2](x) = ∫∫ f1(y1) f2(y2) (|x - y1| + |x - y2|)^{α-2} dy1 dy2`
/// at cell centres, n = 1 only, grids of at most [`I_ALPHA_MAX_CELLS`] cells.
pub fn i_alpha(f1: &GridFunction, f2: &GridFunction, p: &OperatorParams) -> Result<GridFunction> {
    let (spec, scale) = i_alpha_setup(f1, f2, p)?;
    if spec.cell_count() > I_ALPHA_MAX_CELLS {
        return Err(Error::ResolutionCap(format!(
            "i_alpha needs O(N^3) work; {} cells exceed {I_ALPHA_MAX_CELLS}",
            spec.cell_count()
        )));
    }
    let table = l1_kernel_table(spec.per_axis(), p.alpha);
    let (a, b) = (f1.values(), f2.values());
    GridFunction::from_fn(spec, |i| scale * i_alpha_cell(a, b, &table, i))
}

/// [`i_alpha`] at the centre of one cell, without the grid-size cap.
pub fn i_alpha_at(f1: &GridFunction, f2: &GridFunction, p: &OperatorParams, flat: usize) -> Result<f64> {
    let (spec, scale) = i_alpha_setup(f1, f2, p)?;
    if flat >= spec.cell_count() {
        return Err(Error::IndexOutOfRange(flat as i64));
    }
    let table = l1_kernel_table(spec.per_axis(), p.alpha);
    Ok(scale * i_alpha_cell(f1.values(), f2.values(), &table, flat))
}

/// Per-cell terms of [`u_powered_cube_sum`], kept apart so the sum can be cut
/// at any side length `L`.
#[derive(Debug, Clone)]
pub struct HedbergSplit {
    terms: Vec<(i32, Vec<f64>)>,
}

impl HedbergSplit {
    pub fn new(
        f1: &GridFunction,
        f2: &GridFunction,
        p: &OperatorParams,
        u: f64,
        t: &MajorantTruncation,
    ) -> Result<Self> {
        Ok(Self { terms: cube_terms(f1, f2, p, u, t)? })
    }

    /// `(S1, S2)` at cell `flat`: cubes with `ℓ(Q) <= L` go to `S1`.
    pub fn split(&self, flat: usize, l: f64) -> Result<(f64, f64)> {
        if !(l > 0.0) || l.is_nan() {
            return Err(Error::InvalidParameter(format!("L = {l} must be positive")));
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for (j, values) in &self.terms {
            let v = *values.get(flat).ok_or(Error::IndexOutOfRange(flat as i64))?;
            if 2f64.powi(-j) <= l {
                s1 += v;
            } else {
                s2 += v;
            }
        }
        Ok((s1, s2))
    }

    pub fn total(&self, flat: usize) -> f64 {
        self.terms.iter().map(|(_, v)| v[flat]).sum()
    }
}

/// `S1, S2` of the Hedberg decomposition of [`u_powered_cube_sum`] at one cell.
pub fn hedberg_split(
    f1: &GridFunction,
    f2: &GridFunction,
    p: &OperatorParams,
    u: f64,
    l: f64,
    flat: usize,
    t: &MajorantTruncation,
) -> Result<(f64, f64)> {
    HedbergSplit::new(f1, f2, p, u, t)?.split(flat, l)
}

/// The balancing cutoff `L = (‖f1‖ ‖f2‖ / (M^{(u)}f1(x) M^{(u)}f2(x)))^{p/n}`;
/// `+∞` when the maximal product vanishes.
pub fn hedberg_optimal_l(norm_product: f64, maximal_product: f64, p: f64, dim: usize) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(format!("p = {p}")));
    }
    if !(norm_product >= 0.0 && maximal_product >= 0.0) {
        return Err(Error::InvalidParameter("negative norm or maximal value".into()));
    }
    if maximal_product == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((norm_product / maximal_product).powf(p / dim as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(spec: GridSpec) -> GridFunction {
        GridFunction::indicator_cube(spec, &DyadicCube::unit(spec.dim())).unwrap()
    }

    fn params(alpha: f64, dim: usize) -> OperatorParams {
        OperatorParams::new(alpha, dim).unwrap()
    }

    #[test]
    fn parameter_ranges() {
        assert!(OperatorParams::new(0.0, 1).is_err());
        assert!(OperatorParams::new(2.0, 1).is_err());
        assert!(OperatorParams::new(3.9, 2).is_ok());
        let spec = GridSpec::new(1, 1, 4).unwrap();
        let f = unit(spec);
        assert!(j_alpha(&f, &f, &params(1.5, 1)).is_err());
        assert!(MajorantTruncation::new(3, 2).is_err());
        assert!(MajorantTruncation::new(-41, 2).is_err());
    }

    #[test]
    fn j_alpha_unit_indicator() {
        let spec = GridSpec::new(1, 2, 8).unwrap();
        let f = unit(spec);
        let j = j_alpha(&f, &f, &params(0.5, 1)).unwrap();
        // the centre x = 1/2 sits on a cell boundary; neighbouring centres
        // see |y| < 1/2 ∓ h/2, both within 1% of ∫_{|y|<1/2} |y|^{-1/2} = 2√2
        let x = spec.locate(&[0.5]).unwrap();
        assert_relative_eq!(j.values()[x], 2.0 * 2f64.sqrt(), max_relative = 0.01);
        assert_eq!(j.value_at(&[3.0]), 0.0);
        // exact at a centre: x = 1/2 - h/2 integrates |y| < 1/2 - h/2
        let h = spec.cell_width();
        let r: f64 = 0.5 - 0.5 * h;
        assert_relative_eq!(j.values()[x - 1], 4.0 * r.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn j_alpha_two_dimensional_matches_direct_sum() {
        let spec = GridSpec::new(2, 0, 2).unwrap();
        let f = unit(spec);
        let g = GridFunction::from_fn(spec, |i| (i % 5) as f64).unwrap();
        let p = params(0.7, 2);
        let j = j_alpha(&f, &g, &p).unwrap();
        let h = spec.cell_width();
        let n = spec.per_axis() as i64;
        for flat in 0..spec.cell_count() {
            let x = spec.unflatten(flat);
            let mut direct = 0.0;
            for m1 in -n..n {
                for m0 in -n..n {
                    let (a0, a1) = (x[0] as i64 + m0, x[1] as i64 + m1);
                    let (b0, b1) = (x[0] as i64 - m0, x[1] as i64 - m1);
                    let ok = |v: i64| (0..n).contains(&v);
                    if !(ok(a0) && ok(a1) && ok(b0) && ok(b1)) {
                        continue;
                    }
                    let lo = [(m0 as f64 - 0.5) * h, (m1 as f64 - 0.5) * h];
                    let hi = [(m0 as f64 + 0.5) * h, (m1 as f64 + 0.5) * h];
                    let w = quadrature::rect_power_integral(lo, hi, 0.7);
                    direct += w
                        * f.values()[spec.flatten([a0 as usize, a1 as usize])]
                        * g.values()[spec.flatten([b0 as usize, b1 as usize])];
                }
            }
            assert_relative_eq!(j.values()[flat], direct, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn single_level_below_resolution_is_centre_cell() {
        let spec = GridSpec::new(1, 1, 4).unwrap();
        let f = GridFunction::from_fn(spec, |i| 1.0 + i as f64).unwrap();
        let p = params(0.5, 1);
        let level = 6;
        let t = MajorantTruncation::new(level, level).unwrap();
        let m = dyadic_majorant_j(&f, &f, &p, &t).unwrap();
        let h = spec.cell_width();
        for (i, v) in m.values().iter().enumerate() {
            let fx = f.values()[i];
            let expected = 2f64.powf(level as f64 * 0.5) * fx * fx * h.min(2.0 * 2f64.powi(-level));
            assert_relative_eq!(*v, expected, max_relative = 1e-14);
        }
    }

    /// Brute-force ball integral: all offsets, membership by centre distance.
    fn ball_oracle(f1: &GridFunction, f2: &GridFunction, flat: usize, j: i32) -> f64 {
        let spec = *f1.spec();
        let h = spec.cell_width();
        let r = 2f64.powi(-j);
        let n = spec.per_axis() as i64;
        let x = spec.unflatten(flat);
        let dims = spec.dim();
        let mut total = 0.0;
        let range = |d: usize| if d < dims { -n..n } else { 0..1 };
        for m1 in range(1) {
            for m0 in range(0) {
                let m = [m0, m1];
                let a: Vec<i64> = (0..dims).map(|k| x[k] as i64 + m[k]).collect();
                let b: Vec<i64> = (0..dims).map(|k| x[k] as i64 - m[k]).collect();
                if a.iter().chain(&b).any(|v| !(0..n).contains(v)) {
                    continue;
                }
                let at = |v: &[i64]| spec.flatten([v[0] as usize, if dims == 2 { v[1] as usize } else { 0 }]);
                let prod = f1.values()[at(&a)] * f2.values()[at(&b)];
                let dist = ((m0 * m0 + m1 * m1) as f64).sqrt() * h;
                if m0 == 0 && m1 == 0 {
                    total += prod * quadrature::centered_cell_ball_volume(dims, h, r);
                } else if dist < r {
                    total += prod * spec.cell_volume();
                }
            }
        }
        total
    }

    #[test]
    fn majorant_j_matches_ball_oracle() {
        for dim in [1, 2] {
            let spec = if dim == 1 { GridSpec::new(1, 1, 4).unwrap() } else { GridSpec::new(2, 0, 3).unwrap() };
            let f1 = GridFunction::from_fn(spec, |i| ((i * 7) % 3) as f64).unwrap();
            let f2 = GridFunction::from_fn(spec, |i| ((i * 5) % 4) as f64 * 0.5).unwrap();
            let p = params(0.5, dim);
            let t = MajorantTruncation::default_for(&spec).widened().unwrap();
            let m = dyadic_majorant_j(&f1, &f2, &p, &t).unwrap();
            for flat in 0..spec.cell_count() {
                let oracle: f64 = t
                    .levels()
                    .map(|j| 2f64.powf(j as f64 * (dim as f64 - 0.5)) * ball_oracle(&f1, &f2, flat, j))
                    .sum();
                assert_relative_eq!(m.values()[flat], oracle, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn f_jq_blocks_tile_the_level_slice() {
        let spec = GridSpec::new(1, 1, 5).unwrap();
        let f = GridFunction::from_fn(spec, |i| (i % 3) as f64).unwrap();
        let p = params(0.4, 1);
        for level in [-1, 0, 2] {
            let slice = majorant_j_level(&f, &f, &p, level).unwrap();
            let mut total = GridFunction::zeros(spec);
            for q in crate::lattice::cubes_at_level_intersecting(level, &spec.domain()).unwrap() {
                let block = f_jq(&f, &f, &p, &q).unwrap();
                let inside = q.to_box().intersect(&spec.domain()).unwrap().unwrap();
                let outside = block.total() - block.integrate(&inside).unwrap();
                assert!(outside.abs() <= 1e-14 * block.total().max(1.0));
                total = total.add(&block).unwrap();
            }
            for (a, b) in total.values().iter().zip(slice.values()) {
                assert_relative_eq!(a, b, max_relative = 1e-14, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn cube_sum_single_terms() {
        let spec = GridSpec::new(1, 2, 5).unwrap();
        let f = unit(spec);
        let p = params(0.8, 1);
        let t = MajorantTruncation::new(0, 0).unwrap();
        let i = dyadic_majorant_i(&f, &f, &p, &t).unwrap();
        for u in [1.0, 1.7, 3.0] {
            let s = u_powered_cube_sum(&f, &f, &p, u, &t).unwrap();
            for x in [0.0, 0.4, 0.99] {
                assert_relative_eq!(s.value_at(&[x]), 1.0, max_relative = 1e-14);
            }
        }
        assert_eq!(i.value_at(&[0.5]), 1.0);
    }

    #[test]
    fn cube_sum_at_u_one_is_majorant_i() {
        let spec = GridSpec::new(1, 1, 5).unwrap();
        let f1 = GridFunction::from_fn(spec, |i| (i % 4) as f64 * 0.3).unwrap();
        let f2 = GridFunction::from_fn(spec, |i| ((i + 1) % 3) as f64).unwrap();
        let p = params(1.2, 1);
        let t = MajorantTruncation::default_for(&spec).widened().unwrap();
        assert_eq!(
            u_powered_cube_sum(&f1, &f2, &p, 1.0, &t).unwrap(),
            dyadic_majorant_i(&f1, &f2, &p, &t).unwrap()
        );
    }

    #[test]
    fn cube_sum_fine_levels_match_box_integrals() {
        let spec = GridSpec::new(1, 1, 3).unwrap();
        let f = GridFunction::from_fn(spec, |i| 1.0 + i as f64).unwrap();
        let p = params(0.5, 1);
        let t = MajorantTruncation::new(5, 5).unwrap();
        let s = dyadic_majorant_i(&f, &f, &p, &t).unwrap();
        for flat in 0..spec.cell_count() {
            let c = spec.cell_center(flat)[0];
            // Q at generation 5 containing c is [c, c + 1/32)
            let ell = 1.0 / 32.0;
            let tripled = |g: &GridFunction| {
                let (lo, hi) = (c - ell, c + 2.0 * ell);
                let left = spec.locate(&[lo]).map_or(0.0, |i| g.values()[i]);
                let right = spec.locate(&[c]).map_or(0.0, |i| g.values()[i]);
                let far = spec.locate(&[hi - 1e-9]).map_or(0.0, |i| g.values()[i]);
                // c is a centre, so [c - ℓ, c + 2ℓ) lies in one cell here
                assert_eq!(left, right);
                assert_eq!(right, far);
                right * 3.0 * ell
            };
            let expected = 2f64.powf(5.0 * 1.5) * tripled(&f).powi(2);
            assert_relative_eq!(s.values()[flat], expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn powered_average_requires_u_above_one() {
        let spec = GridSpec::new(1, 1, 4).unwrap();
        let f = unit(spec);
        let p = params(0.5, 1);
        let t = MajorantTruncation::default_for(&spec);
        let err = powered_averaged_majorant(&f, &f, &p, &t, 1.0).unwrap_err();
        assert!(err.to_string().contains("Minkowski"));
        assert!(powered_averaged_majorant(&f, &f, &p, &t, 1.5).is_ok());
    }

    #[test]
    fn averaged_majorant_preserves_block_integrals() {
        let spec = GridSpec::new(1, 1, 5).unwrap();
        let f1 = GridFunction::from_fn(spec, |i| (i % 3) as f64).unwrap();
        let f2 = GridFunction::from_fn(spec, |i| (i % 2) as f64 + 0.5).unwrap();
        let p = params(0.3, 1);
        // averaging each level over its own cubes preserves the total integral
        // as long as the cubes lie in the domain
        let t = MajorantTruncation::new(-spec.j0(), spec.j_max() + 1).unwrap();
        let a = averaged_majorant(&f1, &f2, &p, &t).unwrap();
        let m = dyadic_majorant_j(&f1, &f2, &p, &t).unwrap();
        assert_relative_eq!(a.total(), m.total(), max_relative = 1e-12);
        let pa = powered_averaged_majorant(&f1, &f2, &p, &t, 2.0).unwrap();
        assert!(pa.values().iter().zip(a.values()).all(|(x, y)| *x >= y * (1.0 - 1e-12)));
    }

    #[test]
    fn i_alpha_agrees_with_refined_midpoint_quadrature() {
        let spec = GridSpec::new(1, 1, 5).unwrap();
        let f = unit(spec);
        let p = params(1.5, 1);
        let i = i_alpha(&f, &f, &p).unwrap();
        // cell centre next to x = 1/2; oracle: midpoint rule on a 4x finer
        // sub-grid of [0,1)^2. Coarse centres fall on sub-cell edges, so no
        // sub-cell midpoint is singular.
        let flat = spec.locate(&[0.49]).unwrap();
        let x = spec.cell_center(flat)[0];
        let k = 4 * spec.per_axis() / 4;
        let hs = 1.0 / k as f64;
        let mut oracle = 0.0;
        for a in 0..k {
            for b in 0..k {
                let (y1, y2) = ((a as f64 + 0.5) * hs, (b as f64 + 0.5) * hs);
                oracle += ((x - y1).abs() + (x - y2).abs()).powf(-0.5) * hs * hs;
            }
        }
        assert_relative_eq!(i.values()[flat], oracle, max_relative = 0.01);
        assert_relative_eq!(i_alpha_at(&f, &f, &p, flat).unwrap(), i.values()[flat], max_relative = 1e-15);
        assert!(i_alpha(&GridFunction::zeros(spec), &f, &p).unwrap().is_zero());
    }

    #[test]
    fn i_alpha_exact_on_indicator() {
        // ∫_0^1∫_0^1 (|x-y1|+|x-y2|)^{α-2} at x = 1/2 - h/2 splits into four
        // quadrant rectangles with closed-form values
        let spec = GridSpec::new(1, 1, 4).unwrap();
        let f = unit(spec);
        let alpha = 1.5;
        let i = i_alpha(&f, &f, &params(alpha, 1)).unwrap();
        let h = spec.cell_width();
        let x = 0.5 - 0.5 * h;
        let (l, r) = (x, 1.0 - x);
        let q = |a: f64, b: f64| quadrature::l1_rect_kernel([0.0, a], [0.0, b], alpha);
        let exact = q(l, l) + q(r, r) + q(l, r) + q(r, l);
        let flat = spec.locate(&[x]).unwrap();
        assert_relative_eq!(i.values()[flat], exact, max_relative = 1e-12);
    }

    #[test]
    fn i_alpha_cap_and_dimension() {
        let big = GridSpec::new(1, 0, 10).unwrap();
        let f = unit(big);
        let p = params(1.5, 1);
        assert!(matches!(i_alpha(&f, &f, &p), Err(Error::ResolutionCap(_))));
        assert!(i_alpha_at(&f, &f, &p, 1500).is_ok());
        let plane = GridSpec::new(2, 0, 2).unwrap();
        let g = unit(plane);
        assert!(matches!(i_alpha(&g, &g, &params(1.5, 2)), Err(Error::UnsupportedDimension(2))));
    }

    #[test]
    fn hedberg_geometric_series() {
        let spec = GridSpec::new(1, 1, 6).unwrap();
        let f = unit(spec);
        let (alpha, u) = (0.5, 1.5);
        let p = params(alpha, 1);
        let t = MajorantTruncation::default_for(&spec);
        let split = HedbergSplit::new(&f, &f, &p, u, &t).unwrap();
        let flat = spec.locate(&[0.5]).unwrap();
        let l = 1.0 / 16.0;
        let (s1, s2) = split.split(flat, l).unwrap();
        assert_relative_eq!(s1 + s2, split.total(flat), max_relative = 1e-14);
        // terms 3^{2n/u} ℓ^α for ℓ = L, L/2, ..., 2^{-j_max}
        let c = 3f64.powf(2.0 / u);
        let finite: f64 = (4..=6).map(|j| c * 2f64.powf(-j as f64 * alpha)).sum();
        assert_relative_eq!(s1, finite, max_relative = 1e-12);
        let infinite = c * l.powf(alpha) / (1.0 - 2f64.powf(-alpha));
        assert!(s1 < infinite && s1 > 0.5 * infinite);
        let (tiny, _) = split.split(flat, 1e-6).unwrap();
        assert_eq!(tiny, 0.0);
        assert!(split.split(flat, 0.0).is_err());
    }

    #[test]
    fn optimal_cutoff() {
        assert_eq!(hedberg_optimal_l(1.0, 0.0, 0.7, 1).unwrap(), f64::INFINITY);
        assert_relative_eq!(hedberg_optimal_l(8.0, 2.0, 1.0, 2).unwrap(), 2.0);
        assert!(hedberg_optimal_l(1.0, 1.0, -1.0, 1).is_err());
    }

    fn small_fn(dim: usize) -> impl Strategy<Value = (GridFunction, GridFunction)> {
        let spec = if dim == 1 { GridSpec::new(1, 1, 3).unwrap() } else { GridSpec::new(2, 0, 2).unwrap() };
        let n = spec.cell_count();
        (prop::collection::vec(0.0..4.0f64, n), prop::collection::vec(0.0..4.0f64, n)).prop_map(move |(a, b)| {
            (GridFunction::from_values(spec, a).unwrap(), GridFunction::from_values(spec, b).unwrap())
        })
    }

    fn close(a: &GridFunction, b: &GridFunction, tol: f64) -> bool {
        a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn j_alpha_symmetric_and_bilinear((f1, f2) in small_fn(1), c in 0.1..10.0f64, alpha in 0.05..0.95f64) {
            let p = params(alpha, 1);
            prop_assert_eq!(j_alpha(&f1, &f2, &p).unwrap(), j_alpha(&f2, &f1, &p).unwrap());
            let scaled = j_alpha(&f1.scale(c).unwrap(), &f2, &p).unwrap();
            prop_assert!(close(&scaled, &j_alpha(&f1, &f2, &p).unwrap().scale(c).unwrap(), 1e-13));
            let sum = j_alpha(&f1.add(&f2).unwrap(), &f2, &p).unwrap();
            let parts = j_alpha(&f1, &f2, &p).unwrap().add(&j_alpha(&f2, &f2, &p).unwrap()).unwrap();
            prop_assert!(close(&sum, &parts, 1e-13));
        }

        #[test]
        fn j_alpha_symmetric_plane((f1, f2) in small_fn(2), alpha in 0.1..1.9f64) {
            let p = params(alpha, 2);
            prop_assert_eq!(j_alpha(&f1, &f2, &p).unwrap(), j_alpha(&f2, &f1, &p).unwrap());
        }

        #[test]
        fn majorants_monotone_in_inputs_and_truncation((f1, f2) in small_fn(1), bump in 0.0..2.0f64) {
            let p = params(0.5, 1);
            let spec = *f1.spec();
            let t = MajorantTruncation::default_for(&spec);
            let bigger = f1.map(|v| v + bump);
            let m = dyadic_majorant_j(&f1, &f2, &p, &t).unwrap();
            let mb = dyadic_majorant_j(&bigger, &f2, &p, &t).unwrap();
            prop_assert!(mb.values().iter().zip(m.values()).all(|(a, b)| *a >= *b));
            let mw = dyadic_majorant_j(&f1, &f2, &p, &t.widened().unwrap()).unwrap();
            prop_assert!(mw.values().iter().zip(m.values()).all(|(a, b)| *a >= *b));
            let i = dyadic_majorant_i(&f1, &f2, &p, &t).unwrap();
            let iw = dyadic_majorant_i(&f1, &f2, &p, &t.widened().unwrap()).unwrap();
            prop_assert!(iw.values().iter().zip(i.values()).all(|(a, b)| *a >= *b));
            let ia = i_alpha(&f1, &f2, &p).unwrap();
            let iab = i_alpha(&bigger, &f2, &p).unwrap();
            prop_assert!(iab.values().iter().zip(ia.values()).all(|(a, b)| *a >= b * (1.0 - 1e-14)));
        }

        #[test]
        fn majorant_bilinear((f1, f2) in small_fn(2), c in 0.1..10.0f64) {
            let p = params(1.0, 2);
            let t = MajorantTruncation::default_for(f1.spec());
            let base = dyadic_majorant_j(&f1, &f2, &p, &t).unwrap();
            let scaled = dyadic_majorant_j(&f1, &f2.scale(c).unwrap(), &p, &t).unwrap();
            prop_assert!(close(&scaled, &base.scale(c).unwrap(), 1e-13));
            let ibase = dyadic_majorant_i(&f1, &f2, &p, &t).unwrap();
            let iscaled = dyadic_majorant_i(&f1.scale(c).unwrap(), &f2, &p, &t).unwrap();
            prop_assert!(close(&iscaled, &ibase.scale(c).unwrap(), 1e-13));
        }

        #[test]
        fn powered_average_monotone_in_u((f1, f2) in small_fn(1), u in 1.01..3.0f64, du in 0.0..2.0f64) {
            let p = params(0.5, 1);
            let t = MajorantTruncation::default_for(f1.spec());
            let lo = powered_averaged_majorant(&f1, &f2, &p, &t, u).unwrap();
            let hi = powered_averaged_majorant(&f1, &f2, &p, &t, u + du).unwrap();
            prop_assert!(hi.values().iter().zip(lo.values()).all(|(a, b)| *a >= b * (1.0 - 1e-12)));
        }

        #[test]
        fn hedberg_partition((f1, f2) in small_fn(1), l in 0.001..10.0f64, u in 0.5..3.0f64) {
            let p = params(0.5, 1);
            let t = MajorantTruncation::default_for(f1.spec());
            let split = HedbergSplit::new(&f1, &f2, &p, u, &t).unwrap();
            let total = u_powered_cube_sum(&f1, &f2, &p, u, &t).unwrap();
            for flat in 0..f1.spec().cell_count() {
                let (s1, s2) = split.split(flat, l).unwrap();
                let want = total.values()[flat];
                prop_assert!((s1 + s2 - want).abs() <= 1e-13 * want.max(1e-300));
            }
        }
    }
}
