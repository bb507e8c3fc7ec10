//! Seeded, resolution-independent test functions.
//!
//! A corpus item is a description (cubes, heights, a power-law centre) rather
//! than a vector of samples, so the same item can be materialised on finer
//! grids for resolution-stability checks. Item `i` draws from its own ChaCha
//! stream, so items can be generated in any order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::lattice::{relation, BinaryRational, DyadicBox, DyadicCube, Relation};

/// Relative weights of the three item kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusMix {
    pub indicator: f64,
    pub power_law: f64,
    pub step: f64,
}

impl Default for CorpusMix {
    fn default() -> Self {
        Self { indicator: 0.4, power_law: 0.3, step: 0.3 }
    }
}

impl CorpusMix {
    pub fn indicators_only() -> Self {
        Self { indicator: 1.0, power_law: 0.0, step: 0.0 }
    }

    /// Exact per-kind counts for `size` items, largest remainders first.
    fn counts(&self, size: usize) -> Result<[usize; 3]> {
        let w = [self.indicator, self.power_law, self.step];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter(format!("bad corpus mix {w:?}")));
        }
        let total: f64 = w.iter().sum();
        let exact: Vec<f64> = w.iter().map(|v| v / total * size as f64).collect();
        let mut counts = [0usize; 3];
        for k in 0..3 {
            counts[k] = exact[k].floor() as usize;
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut missing = size - counts.iter().sum::<usize>();
        for k in order {
            if missing == 0 {
                break;
            }
            if w[k] > 0.0 {
                counts[k] += 1;
                missing -= 1;
            }
        }
        Ok(counts)
    }
}

/// What to generate: the grid the items are designed for, a seed and a size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub grid: GridSpec,
    pub seed: u64,
    pub size: usize,
    #[serde(default)]
    pub mix: CorpusMix,
    /// Integrability exponents the power laws are drawn around (each `> 1`).
    #[serde(default = "default_targets")]
    pub power_targets: Vec<f64>,
}

fn default_targets() -> Vec<f64> {
    vec![2.0]
}

impl CorpusSpec {
    pub fn new(grid: GridSpec, seed: u64, size: usize) -> Self {
        Self { grid, seed, size, mix: CorpusMix::default(), power_targets: default_targets() }
    }

    pub fn with_mix(mut self, mix: CorpusMix) -> Self {
        self.mix = mix;
        self
    }

    pub fn with_power_targets(mut self, targets: Vec<f64>) -> Self {
        self.power_targets = targets;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Indicator { cube: DyadicCube },
    /// `|x - c|^{-n/p}` restricted to `support`.
    PowerLaw { p: f64, center: Vec<BinaryRational>, support: DyadicBox },
    /// `Σ height_i χ_{Q_i}` over pairwise disjoint cubes.
    Step { pieces: Vec<(DyadicCube, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub shape: Shape,
}

impl Shape {
    /// Finest generation the description needs.
    pub fn finest_level(&self) -> i32 {
        match self {
            Shape::Indicator { cube } => cube.level(),
            Shape::PowerLaw { center, support, .. } => {
                center.iter().map(|c| -c.exponent()).max().unwrap_or(0).max(support.level())
            }
            Shape::Step { pieces } => pieces.iter().map(|(c, _)| c.level()).max().unwrap_or(0),
        }
    }

    /// Sample on `spec`; fails if the grid is coarser than the description.
    pub fn materialize(&self, spec: GridSpec) -> Result<GridFunction> {
        if self.finest_level() > spec.j_max() {
            return Err(Error::FinerThanGrid { cube: format!("{self:?}"), j_max: spec.j_max() });
        }
        match self {
            Shape::Indicator { cube } => GridFunction::indicator_cube(spec, cube),
            Shape::PowerLaw { p, center, support } => GridFunction::power_law_at(spec, *p, center)?.restrict(support),
            Shape::Step { pieces } => {
                let mut total = GridFunction::zeros(spec);
                for (cube, height) in pieces {
                    total = total.add(&GridFunction::indicator_cube(spec, cube)?.scale(*height)?)?;
                }
                Ok(total)
            }
        }
    }
}

impl CorpusItem {
    pub fn materialize(&self, spec: GridSpec) -> Result<GridFunction> {
        self.shape.materialize(spec)
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Lowest generation used for placing cubes: coarse enough to vary, but
/// inside the domain.
fn coarse_level(spec: &GridSpec) -> i32 {
    (-spec.j0()).max(0).min(spec.j_max())
}

/// A uniformly placed cube of generation `level` inside the domain.
fn random_cube(rng: &mut ChaCha8Rng, spec: &GridSpec, level: i32) -> DyadicCube {
    let half = 1i64 << (level + spec.j0());
    let index = (0..spec.dim()).map(|_| rng.gen_range(-half..half)).collect();
    DyadicCube::new(level, index).expect("inside the domain")
}

fn random_level(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> i32 {
    rng.gen_range(lo..=hi.max(lo))
}

fn log_uniform_height(rng: &mut ChaCha8Rng) -> f64 {
    2f64.powf(rng.gen_range(-4.0..4.0))
}

fn gen_indicator(rng: &mut ChaCha8Rng, spec: &GridSpec) -> Shape {
    let level = random_level(rng, -spec.j0(), spec.j_max() - 2);
    Shape::Indicator { cube: random_cube(rng, spec, level) }
}

fn gen_power_law(rng: &mut ChaCha8Rng, spec: &GridSpec, targets: &[f64]) -> Shape {
    let target = targets[rng.gen_range(0..targets.len())];
    // a power law with p <= 1 is not integrable; keep a margin above 1
    let p = (target * rng.gen_range(0.9..1.1)).max(1.05);
    let fine = (spec.j_max() - 2).max(coarse_level(spec));
    let lc = random_level(rng, coarse_level(spec), fine);
    let support_level = random_level(rng, -spec.j0(), lc);
    let half = 1i64 << (lc + spec.j0());
    // a vertex strictly inside the domain
    let k: Vec<i64> = (0..spec.dim()).map(|_| rng.gen_range(-half + 1..half)).collect();
    let radius = 1i64 << (lc - support_level);
    let lo: Vec<i64> = k.iter().map(|v| v - radius).collect();
    let hi: Vec<i64> = k.iter().map(|v| v + radius).collect();
    let support = DyadicBox::new(lc, lo, hi)
        .and_then(|b| b.intersect(&spec.domain()))
        .ok()
        .flatten()
        .expect("the centre lies inside the domain");
    Shape::PowerLaw { p, center: k.iter().map(|&v| BinaryRational::new(v, -lc)).collect(), support }
}

fn gen_step(rng: &mut ChaCha8Rng, spec: &GridSpec) -> Shape {
    let count = rng.gen_range(1..=64);
    let lo = coarse_level(spec);
    let mut pieces: Vec<(DyadicCube, f64)> = Vec::new();
    for _ in 0..count * 4 {
        if pieces.len() == count {
            break;
        }
        let level = random_level(rng, lo, spec.j_max() - 2);
        let cube = random_cube(rng, spec, level);
        if pieces.iter().all(|(q, _)| relation(q, &cube) == Ok(Relation::Disjoint)) {
            let height = log_uniform_height(rng);
            pieces.push((cube, height));
        }
    }
    Shape::Step { pieces }
}

/// Items `0..size`, kinds shuffled with exact proportions from the mix.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<CorpusItem>> {
    if spec.power_targets.is_empty() || spec.power_targets.iter().any(|p| !(*p > 1.0) || !p.is_finite()) {
        return Err(Error::InvalidExponent(format!("power-law targets must exceed 1: {:?}", spec.power_targets)));
    }
    let counts = spec.mix.counts(spec.size)?;
    let mut kinds: Vec<u8> = (0..3u8).flat_map(|k| std::iter::repeat(k).take(counts[k as usize])).collect();
    kinds.shuffle(&mut stream(spec.seed, u64::MAX - 1));
    let g = spec.grid;
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let mut rng = stream(spec.seed, i as u64);
            let (tag, shape) = match kind {
                0 => ("ind", gen_indicator(&mut rng, &g)),
                1 => ("pow", gen_power_law(&mut rng, &g, &spec.power_targets)),
                _ => ("step", gen_step(&mut rng, &g)),
            };
            CorpusItem { id: format!("{tag}-{i:04}"), shape }
        })
        .collect())
}

/// Pairs `(f1, f2)`: items `2i` and `2i + 1` of a corpus twice the size.
pub fn generate_pairs(spec: &CorpusSpec) -> Result<Vec<(CorpusItem, CorpusItem)>> {
    let doubled = CorpusSpec { size: 2 * spec.size, ..spec.clone() };
    let items = generate(&doubled)?;
    let mut it = items.into_iter();
    let mut out = Vec::with_capacity(spec.size);
    while let (Some(a), Some(b)) = (it.next(), it.next()) {
        out.push((a, b));
    }
    Ok(out)
}

/// One member `f_j` of an averaging family, supported in `cube`: a sum of
/// sub-cube indicators of `cube`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub cube: DyadicCube,
    pub pieces: Vec<(DyadicCube, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub id: String,
    pub members: Vec<FamilyMember>,
}

impl Family {
    /// `{(χ_Q, Q)}`.
    pub fn single_indicator(id: impl Into<String>, cube: DyadicCube) -> Self {
        Self { id: id.into(), members: vec![FamilyMember { pieces: vec![(cube.clone(), 1.0)], cube }] }
    }

    pub fn finest_level(&self) -> i32 {
        self.members.iter().flat_map(|m| m.pieces.iter().map(|(c, _)| c.level())).max().unwrap_or(0)
    }

    pub fn materialize(&self, spec: GridSpec) -> Result<Vec<(GridFunction, DyadicCube)>> {
        self.members
            .iter()
            .map(|m| {
                let shape = Shape::Step { pieces: m.pieces.clone() };
                Ok((shape.materialize(spec)?, m.cube.clone()))
            })
            .collect()
    }
}

/// A random descendant of `cube`, `depth` generations down.
fn random_descendant(rng: &mut ChaCha8Rng, cube: &DyadicCube, depth: i32) -> DyadicCube {
    let mut c = cube.clone();
    for _ in 0..depth {
        let children = c.children().expect("within caps");
        c = children[rng.gen_range(0..children.len())].clone();
    }
    c
}

fn random_member(rng: &mut ChaCha8Rng, cube: DyadicCube, j_max: i32) -> FamilyMember {
    let room = (j_max - cube.level()).clamp(0, 3);
    let count = rng.gen_range(1..=4);
    let pieces = (0..count)
        .map(|_| {
            let depth = rng.gen_range(0..=room);
            (random_descendant(rng, &cube, depth), log_uniform_height(rng))
        })
        .collect();
    FamilyMember { cube, pieces }
}

/// Random families of 1–8 members: even indices are nested chains, odd ones
/// scatter cubes of mixed generations (disjoint or overlapping).
pub fn generate_families(grid: GridSpec, seed: u64, size: usize) -> Vec<Family> {
    let lo = coarse_level(&grid);
    let hi = (grid.j_max() - 1).max(lo);
    (0..size)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let count = rng.gen_range(1..=8);
            let members = if i % 2 == 0 {
                let level = random_level(&mut rng, lo, hi);
                let mut cube = random_cube(&mut rng, &grid, level);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    out.push(random_member(&mut rng, cube.clone(), grid.j_max()));
                    if cube.level() < hi {
                        let step = rng.gen_range(1..=2).min(hi - cube.level());
                        cube = random_descendant(&mut rng, &cube, step);
                    }
                }
                out
            } else {
                (0..count)
                    .map(|_| {
                        let level = random_level(&mut rng, lo, hi);
                        let cube = random_cube(&mut rng, &grid, level);
                        random_member(&mut rng, cube, grid.j_max())
                    })
                    .collect()
            };
            Family { id: format!("fam-{i:04}"), members }
        })
        .collect()
}
