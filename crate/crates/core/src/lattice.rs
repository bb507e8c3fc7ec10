//! Dyadic cubes `Q_{jk} = Π_i [k_i 2^{-j}, (k_i+1) 2^{-j})` in exact integer form.
//!
//! A cube is stored as its generation `j` and corner multi-index `k`; real
//! coordinates only appear through [`BinaryRational`], so half-open membership
//! and nesting are decided on integers. Boxes with binary-rational endpoints
//! ([`DyadicBox`]) describe truncation domains and tripled cubes `3Q`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible |j|.
pub const MAX_LEVEL: i32 = 40;
/// Exclusive bound on |k_i|.
pub const MAX_INDEX: i64 = 1 << 40;

/// `mantissa · 2^exponent`, kept normalized (odd mantissa or zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryRational {
    mantissa: i64,
    exponent: i32,
}

impl BinaryRational {
    pub fn new(mantissa: i64, exponent: i32) -> Self {
        if mantissa == 0 {
            return Self { mantissa: 0, exponent: 0 };
        }
        let shift = mantissa.trailing_zeros() as i32;
        Self { mantissa: mantissa >> shift, exponent: exponent + shift }
    }

    pub fn pow2(exponent: i32) -> Self {
        Self { mantissa: 1, exponent }
    }

    pub fn mantissa(&self) -> i64 {
        self.mantissa
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }

    /// Exact for every value produced inside the lattice caps.
    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 * 2f64.powi(self.exponent)
    }
}

impl PartialOrd for BinaryRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BinaryRational {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.exponent.min(other.exponent);
        let a = (self.mantissa as i128) << (self.exponent - e).min(100);
        let b = (other.mantissa as i128) << (other.exponent - e).min(100);
        a.cmp(&b)
    }
}

impl fmt::Display for BinaryRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent >= 0 {
            write!(f, "{}", (self.mantissa as i128) << self.exponent)
        } else {
            write!(f, "{}/2^{}", self.mantissa, -self.exponent)
        }
    }
}

/// How two dyadic cubes sit relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Equal,
    /// The first cube is a strict subset of the second.
    Inside,
    /// The second cube is a strict subset of the first.
    Contains,
    Disjoint,
}

fn check_level(level: i64) -> Result<i32> {
    if level.abs() > MAX_LEVEL as i64 {
        return Err(Error::LevelOutOfRange(level));
    }
    Ok(level as i32)
}

fn check_index(k: i64) -> Result<i64> {
    if k.abs() >= MAX_INDEX {
        return Err(Error::IndexOutOfRange(k));
    }
    Ok(k)
}

/// `k · 2^shift` with overflow checks against the index cap.
fn shift_index(k: i64, shift: i32) -> Result<i64> {
    if shift >= 0 {
        if shift > 62 {
            return Err(Error::IndexOutOfRange(k));
        }
        let v = (k as i128) << shift;
        if v.abs() >= MAX_INDEX as i128 {
            return Err(Error::IndexOutOfRange(k));
        }
        Ok(v as i64)
    } else {
        Ok(k >> (-shift).min(63))
    }
}

/// The dyadic cube `Π_i [k_i 2^{-j}, (k_i+1) 2^{-j})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    level: i32,
    index: Vec<i64>,
}

impl DyadicCube {
    pub fn new(level: i32, index: Vec<i64>) -> Result<Self> {
        check_level(level as i64)?;
        if index.is_empty() {
            return Err(Error::UnsupportedDimension(0));
        }
        for &k in &index {
            check_index(k)?;
        }
        Ok(Self { level, index })
    }

    /// The unit cube `[0,1)^n`.
    pub fn unit(dim: usize) -> Self {
        Self { level: 0, index: vec![0; dim] }
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn index(&self) -> &[i64] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// `ℓ(Q) = 2^{-j}`.
    pub fn side_length(&self) -> BinaryRational {
        BinaryRational::pow2(-self.level)
    }

    /// `|Q| = 2^{-jn}`.
    pub fn volume(&self) -> f64 {
        2f64.powi(-self.level * self.dim() as i32)
    }

    pub fn parent(&self) -> Result<Self> {
        let level = check_level(self.level as i64 - 1)?;
        Ok(Self { level, index: self.index.iter().map(|k| k.div_euclid(2)).collect() })
    }

    /// The `2^n` children, axis 0 varying fastest.
    pub fn children(&self) -> Result<Vec<Self>> {
        let level = check_level(self.level as i64 + 1)?;
        let n = self.dim();
        let mut out = Vec::with_capacity(1 << n);
        for bits in 0..(1usize << n) {
            let mut index = Vec::with_capacity(n);
            for (axis, &k) in self.index.iter().enumerate() {
                index.push(check_index(2 * k + ((bits >> axis) & 1) as i64)?);
            }
            out.push(Self { level, index });
        }
        Ok(out)
    }

    /// The unique cube of generation `level <= self.level` containing `self`.
    pub fn ancestor_at_level(&self, level: i32) -> Result<Self> {
        check_level(level as i64)?;
        if level > self.level {
            return Err(Error::InvalidParameter(format!(
                "ancestor level {level} is finer than cube level {}",
                self.level
            )));
        }
        let shift = (self.level - level) as u32;
        Ok(Self { level, index: self.index.iter().map(|&k| k >> shift).collect() })
    }

    /// Half-open membership test.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        let side = 2f64.powi(-self.level);
        x.len() == self.dim()
            && self.index.iter().zip(x).all(|(&k, &xi)| {
                let lo = k as f64 * side;
                xi >= lo && xi < lo + side
            })
    }

    /// The concentric tripled cube `3Q = Π_i [(k_i-1)2^{-j}, (k_i+2)2^{-j})`.
    pub fn dilate3(&self) -> DyadicBox {
        DyadicBox {
            level: self.level,
            lo: self.index.iter().map(|k| k - 1).collect(),
            hi: self.index.iter().map(|k| k + 2).collect(),
        }
    }

    pub fn to_box(&self) -> DyadicBox {
        DyadicBox {
            level: self.level,
            lo: self.index.clone(),
            hi: self.index.iter().map(|k| k + 1).collect(),
        }
    }
}

/// Nesting relation between two dyadic cubes of the same dimension.
pub fn relation(q: &DyadicCube, r: &DyadicCube) -> Result<Relation> {
    if q.dim() != r.dim() {
        return Err(Error::DimensionMismatch(q.dim(), r.dim()));
    }
    let (fine, coarse, fine_is_q) = if q.level >= r.level { (q, r, true) } else { (r, q, false) };
    let shift = (fine.level - coarse.level) as u32;
    let nested = fine.index.iter().zip(&coarse.index).all(|(&a, &b)| a >> shift == b);
    Ok(match (nested, shift == 0, fine_is_q) {
        (false, _, _) => Relation::Disjoint,
        (true, true, _) => Relation::Equal,
        (true, false, true) => Relation::Inside,
        (true, false, false) => Relation::Contains,
    })
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.level)?;
        for (i, k) in self.index.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for DyadicCube {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (level, rest) =
            s.split_once(':').ok_or_else(|| Error::Parse(format!("missing ':' in cube {s:?}")))?;
        let level: i32 =
            level.trim().parse().map_err(|_| Error::Parse(format!("bad level in {s:?}")))?;
        let index = rest
            .split(',')
            .map(|k| k.trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad index in {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(level, index)
    }
}

/// Axis-aligned half-open box `Π_i [lo_i 2^{-level}, hi_i 2^{-level})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicBox {
    level: i32,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl DyadicBox {
    pub fn new(level: i32, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        check_level(level as i64)?;
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(lo.len(), hi.len()));
        }
        if lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::EmptyBox);
        }
        Ok(Self { level, lo, hi })
    }

    /// `[-2^{j0}, 2^{j0})^n`.
    pub fn centered(dim: usize, j0: i32) -> Result<Self> {
        Self::new(-j0, vec![-1; dim], vec![1; dim])
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lower(&self, axis: usize) -> BinaryRational {
        BinaryRational::new(self.lo[axis], -self.level)
    }

    pub fn upper(&self, axis: usize) -> BinaryRational {
        BinaryRational::new(self.hi[axis], -self.level)
    }

    pub fn volume(&self) -> f64 {
        let side = 2f64.powi(-self.level);
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) as f64 * side).product()
    }

    /// Same point set expressed on the (finer) lattice `level`.
    pub fn at_level(&self, level: i32) -> Result<Self> {
        check_level(level as i64)?;
        let shift = level - self.level;
        if shift < 0 {
            let coarse = 1i64 << (-shift);
            if self.lo.iter().chain(&self.hi).any(|v| v.rem_euclid(coarse) != 0) {
                return Err(Error::InvalidParameter(format!(
                    "box endpoints are not aligned to level {level}"
                )));
            }
        }
        let map = |v: &Vec<i64>| v.iter().map(|&k| shift_index(k, shift)).collect::<Result<Vec<_>>>();
        Ok(Self { level, lo: map(&self.lo)?, hi: map(&self.hi)? })
    }

    /// Intersection, expressed on the finer of the two lattices. `None` when empty.
    pub fn intersect(&self, other: &DyadicBox) -> Result<Option<DyadicBox>> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        let level = self.level.max(other.level);
        let a = self.at_level(level)?;
        let b = other.at_level(level)?;
        let lo: Vec<i64> = a.lo.iter().zip(&b.lo).map(|(x, y)| *x.max(y)).collect();
        let hi: Vec<i64> = a.hi.iter().zip(&b.hi).map(|(x, y)| *x.min(y)).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Ok(None);
        }
        Ok(Some(DyadicBox { level, lo, hi }))
    }
}

/// All cubes of `D_j` meeting `b`, each exactly once, axis 0 varying fastest.
pub fn cubes_at_level_intersecting(level: i32, b: &DyadicBox) -> Result<Vec<DyadicCube>> {
    check_level(level as i64)?;
    let n = b.dim();
    let mut ranges = Vec::with_capacity(n);
    for axis in 0..n {
        let (lo, hi) = (b.lo[axis], b.hi[axis]);
        let range = if level >= b.level {
            let s = level - b.level;
            (shift_index(lo, s)?, shift_index(hi, s)? - 1)
        } else {
            let d = 1i64 << (b.level - level).min(62);
            (lo.div_euclid(d), (hi - 1).div_euclid(d))
        };
        check_index(range.0)?;
        check_index(range.1)?;
        ranges.push(range);
    }
    let total: i128 = ranges.iter().map(|(a, b)| (b - a + 1) as i128).product();
    if total > (1 << 26) {
        return Err(Error::ResolutionCap(format!("{total} cubes requested at level {level}")));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(DyadicCube { level, index: cur.clone() });
        let mut axis = 0;
        loop {
            if axis == n {
                return Ok(out);
            }
            if cur[axis] < ranges[axis].1 {
                cur[axis] += 1;
                break;
            }
            cur[axis] = ranges[axis].0;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(level: i32, index: &[i64]) -> DyadicCube {
        DyadicCube::new(level, index.to_vec()).unwrap()
    }

    #[test]
    fn side_lengths() {
        assert_eq!(cube(0, &[0]).side_length().to_f64(), 1.0);
        assert_eq!(cube(2, &[5]).side_length().to_f64(), 0.25);
        assert_eq!(cube(-3, &[-1, -1]).side_length().to_f64(), 8.0);
    }

    #[test]
    fn relations() {
        assert_eq!(relation(&cube(1, &[0]), &cube(0, &[0])).unwrap(), Relation::Inside);
        assert_eq!(relation(&cube(0, &[0]), &cube(1, &[1])).unwrap(), Relation::Contains);
        assert_eq!(relation(&cube(0, &[0]), &cube(0, &[1])).unwrap(), Relation::Disjoint);
        assert_eq!(relation(&cube(0, &[0]), &cube(0, &[0])).unwrap(), Relation::Equal);
        assert_eq!(relation(&cube(3, &[-1]), &cube(0, &[0])).unwrap(), Relation::Disjoint);
        assert_eq!(relation(&cube(3, &[-1]), &cube(0, &[-1])).unwrap(), Relation::Inside);
        assert!(matches!(
            relation(&cube(0, &[0]), &cube(0, &[0, 0])),
            Err(Error::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn tripled_cubes() {
        let b = cube(0, &[0]).dilate3();
        assert_eq!((b.lower(0).to_f64(), b.upper(0).to_f64()), (-1.0, 2.0));
        let b = cube(1, &[0, 0]).dilate3();
        for axis in 0..2 {
            assert_eq!((b.lower(axis).to_f64(), b.upper(axis).to_f64()), (-0.5, 1.0));
        }
        for q in [cube(3, &[5, -2]), cube(-2, &[0, 7])] {
            assert_eq!(q.dilate3().volume(), 9.0 * q.volume());
        }
    }

    #[test]
    fn level_enumeration() {
        let b = DyadicBox::new(0, vec![0], vec![2]).unwrap();
        assert_eq!(cubes_at_level_intersecting(0, &b).unwrap(), vec![cube(0, &[0]), cube(0, &[1])]);
        let b = DyadicBox::new(0, vec![0], vec![1]).unwrap();
        assert_eq!(cubes_at_level_intersecting(1, &b).unwrap(), vec![cube(1, &[0]), cube(1, &[1])]);
        let b = DyadicBox::new(2, vec![1], vec![3]).unwrap(); // [0.25, 0.75)
        assert_eq!(cubes_at_level_intersecting(0, &b).unwrap(), vec![cube(0, &[0])]);
        let b = DyadicBox::new(2, vec![-3, 1], vec![3, 2]).unwrap();
        let got = cubes_at_level_intersecting(0, &b).unwrap();
        assert_eq!(got, vec![cube(0, &[-1, 0]), cube(0, &[0, 0])]);
    }

    #[test]
    fn caps_are_errors() {
        assert!(DyadicCube::new(41, vec![0]).is_err());
        assert!(DyadicCube::new(0, vec![1 << 40]).is_err());
        let b = DyadicBox::new(0, vec![0], vec![1]).unwrap();
        assert!(cubes_at_level_intersecting(45, &b).is_err());
        assert!(cube(40, &[0]).children().is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let q = cube(-3, &[4, -17]);
        assert_eq!(q.to_string(), "-3:4,-17");
        assert_eq!("-3:4,-17".parse::<DyadicCube>().unwrap(), q);
        assert!("3;1".parse::<DyadicCube>().is_err());
    }

    #[test]
    fn binary_rationals_compare_exactly() {
        assert!(BinaryRational::new(3, -2) < BinaryRational::new(1, 0));
        assert_eq!(BinaryRational::new(4, -2), BinaryRational::pow2(0));
        assert_eq!(BinaryRational::new(-6, 0).to_string(), "-6");
        assert_eq!(BinaryRational::new(3, -3).to_string(), "3/2^3");
    }

    fn arb_cube() -> impl Strategy<Value = DyadicCube> {
        (-6i32..12, prop::collection::vec(-200i64..200, 2))
            .prop_map(|(level, index)| DyadicCube::new(level, index).unwrap())
    }

    proptest! {
        #[test]
        fn nesting_trichotomy(q in arb_cube(), r in arb_cube()) {
            let rel = relation(&q, &r).unwrap();
            let qb = q.to_box();
            let rb = r.to_box();
            let overlap = qb.intersect(&rb).unwrap().map(|b| b.volume()).unwrap_or(0.0);
            match rel {
                Relation::Disjoint => prop_assert_eq!(overlap, 0.0),
                Relation::Equal => prop_assert_eq!(overlap, q.volume()),
                Relation::Inside => prop_assert_eq!(overlap, q.volume()),
                Relation::Contains => prop_assert_eq!(overlap, r.volume()),
            }
        }

        #[test]
        fn parent_of_children_is_identity(q in arb_cube()) {
            for c in q.children().unwrap() {
                prop_assert_eq!(c.parent().unwrap(), q.clone());
                prop_assert_eq!(relation(&c, &q).unwrap(), Relation::Inside);
            }
        }

        #[test]
        fn ancestors_contain(q in arb_cube(), up in 0i32..8) {
            let a = q.ancestor_at_level(q.level() - up).unwrap();
            let rel = relation(&q, &a).unwrap();
            prop_assert!(rel == Relation::Inside || rel == Relation::Equal);
        }

        #[test]
        fn level_cubes_tile_the_box(
            level in -2i32..5,
            lo in prop::collection::vec(-20i64..20, 1..3),
            ext in prop::collection::vec(1i64..9, 2),
            blevel in 0i32..4,
        ) {
            let hi: Vec<i64> = lo.iter().zip(&ext).map(|(a, e)| a + e).collect();
            let b = DyadicBox::new(blevel, lo.clone(), hi).unwrap();
            let cubes = cubes_at_level_intersecting(level, &b).unwrap();
            let bound: i64 = (0..b.dim())
                .map(|i| ((b.hi()[i] - b.lo()[i]) as f64 * 2f64.powi(level - blevel)).ceil() as i64 + 1)
                .product();
            prop_assert!(cubes.len() as i64 <= bound);
            // Indicator sum equals one at sample points of the box.
            let side = 2f64.powi(-blevel) / 4.0;
            let n = b.dim();
            let steps: Vec<i64> = (0..n).map(|i| (b.hi()[i] - b.lo()[i]) * 4).collect();
            let total: i64 = steps.iter().product();
            for s in 0..total {
                let mut rem = s;
                let x: Vec<f64> = (0..n).map(|i| {
                    let t = rem % steps[i];
                    rem /= steps[i];
                    b.lo()[i] as f64 * 4.0 * side + (t as f64 + 0.5) * side
                }).collect();
                let hits = cubes.iter().filter(|c| c.contains_point(&x)).count();
                prop_assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn million_random_pairs_never_overlap_without_nesting() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1_000_000 {
            let q = cube(rng.gen_range(-4..10), &[rng.gen_range(-64..64), rng.gen_range(-64..64)]);
            let r = cube(rng.gen_range(-4..10), &[rng.gen_range(-64..64), rng.gen_range(-64..64)]);
            let rel = relation(&q, &r).unwrap();
            let overlaps = q.to_box().intersect(&r.to_box()).unwrap().is_some();
            assert_eq!(overlaps, rel != Relation::Disjoint);
        }
    }
}
