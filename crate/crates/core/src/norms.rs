//! Lebesgue and dyadic Morrey norms, cube averages and the powered maximal operator.
//!
//! The Morrey norm is the supremum over dyadic cubes of
//! `|Q|^{1/p - 1/q} (∫_Q |f|^q)^{1/q}`. On a step function only the
//! generations `-j0 ..= j_max` matter: a cube coarser than the domain blocks
//! holds no more mass than the domain block it contains while its volume
//! factor is no larger (`1/p - 1/q <= 0`), and inside a constant cell the
//! quantity is `|Q|^{1/p}·value`, which shrinks with `Q`. The supremum over
//! that finite range is therefore exact rather than a truncation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BlockSums, GridFunction};
use crate::lattice::{cubes_at_level_intersecting, DyadicBox, DyadicCube};

/// Morrey exponents with `0 < q <= p < ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorreyExponents {
    p: f64,
    q: f64,
}

impl MorreyExponents {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= p && p.is_finite()) {
            return Err(Error::InvalidExponent(format!("Morrey exponents need 0 < q <= p < inf, got p={p}, q={q}")));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

fn check_power(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(format!("exponent must be positive and finite, got {q}")))
    }
}

/// `(∫_R |f|^q)^{1/q}`.
pub fn lq_norm(f: &GridFunction, q: f64, region: &DyadicBox) -> Result<f64> {
    check_power(q)?;
    Ok(f.powf(q)?.integrate(region)?.powf(1.0 / q))
}

/// `(∫ |f|^q)^{1/q}` over the whole domain.
pub fn lq_norm_total(f: &GridFunction, q: f64) -> Result<f64> {
    check_power(q)?;
    Ok(f.powf(q)?.total().powf(1.0 / q))
}

/// The Morrey supremum together with a cube attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct MorreySup {
    pub value: f64,
    pub cube: Option<DyadicCube>,
}

/// `‖f‖_{M^p_q}` over dyadic cubes.
pub fn morrey_norm(f: &GridFunction, e: MorreyExponents) -> f64 {
    morrey_sup(f, e).value
}

pub fn morrey_sup(f: &GridFunction, e: MorreyExponents) -> MorreySup {
    let sums = BlockSums::of_power(f, e.q);
    morrey_sup_from_sums(&sums, e)
}

/// Morrey supremum from precomputed block sums of `|f|^q`.
pub fn morrey_sup_from_sums(sums: &BlockSums, e: MorreyExponents) -> MorreySup {
    let spec = *sums.spec();
    let n = spec.dim() as f64;
    let mut best = MorreySup { value: 0.0, cube: None };
    for level in sums.coarsest_level()..=spec.j_max() {
        let data = sums.level(level);
        let (arg, &mass) = data
            .iter()
            .enumerate()
            .fold((0, &0.0), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
        if mass <= 0.0 {
            continue;
        }
        let volume_factor = 2f64.powf(-(level as f64) * n * (1.0 / e.p - 1.0 / e.q));
        let value = volume_factor * mass.powf(1.0 / e.q);
        if value > best.value {
            let per = sums.per_axis_at(level);
            let half = (per / 2) as i64;
            let index = if spec.dim() == 1 {
                vec![arg as i64 - half]
            } else {
                vec![(arg % per) as i64 - half, (arg / per) as i64 - half]
            };
            best = MorreySup { value, cube: DyadicCube::new(level, index).ok() };
        }
    }
    best
}

/// Brute-force Morrey supremum: every cube of generations
/// `-j0 - extra ..= j_max + extra` meeting the domain, each integrated
/// directly. Used as an oracle for [`morrey_norm`].
pub fn morrey_norm_exhaustive(f: &GridFunction, e: MorreyExponents, extra: i32) -> Result<f64> {
    let spec = *f.spec();
    let g = f.powf(e.q)?;
    let domain = spec.domain();
    let n = spec.dim() as i32;
    let mut best = 0.0f64;
    for level in (-spec.j0() - extra)..=(spec.j_max() + extra) {
        let cubes = cubes_at_level_intersecting(level, &domain)?;
        let volume_factor = 2f64.powf(-(level * n) as f64 * (1.0 / e.p - 1.0 / e.q));
        for q in cubes {
            let mass = g.integrate_cube(&q)?;
            best = best.max(volume_factor * mass.powf(1.0 / e.q));
        }
    }
    Ok(best)
}

/// `m_Q(f) = |Q|^{-1} ∫_Q f`.
pub fn average(f: &GridFunction, q: &DyadicCube) -> Result<f64> {
    Ok(f.integrate_cube(q)? / q.volume())
}

/// `m_Q^{(u)}(f) = m_Q(|f|^u)^{1/u}`.
pub fn powered_average(f: &GridFunction, q: &DyadicCube, u: f64) -> Result<f64> {
    check_power(u)?;
    Ok(average(&f.powf(u)?, q)?.powf(1.0 / u))
}

/// Powered dyadic maximal function
/// `M^{(η)} f(x) = sup_{Q ∋ x} m_{3Q}(|f|^η)^{1/η}`, with `Q` ranging over the
/// dyadic cubes of generations `-j0 - 1 ..= j_max` and, below the grid
/// scale, the cell value itself (small cubes inside a constant cell).
pub fn maximal(f: &GridFunction, eta: f64) -> Result<GridFunction> {
    check_power(eta)?;
    let sums = BlockSums::of_power(f, eta);
    let levels = tripled_averages(&sums);
    let spec = *f.spec();
    let j_max = spec.j_max();
    let powered = f.powf(eta)?;
    let inv = 1.0 / eta;
    GridFunction::from_fn(spec, |flat| {
        let idx = spec.unflatten(flat);
        let mut best = powered.values()[flat];
        for (level, table) in &levels {
            let per = sums.per_axis_at(*level);
            let shift = (j_max - level) as u32;
            let b = if spec.dim() == 1 { idx[0] >> shift } else { (idx[0] >> shift) + per * (idx[1] >> shift) };
            best = best.max(table[b]);
        }
        best = best.max(coarse_average(&sums, flat));
        best.powf(inv).max(f.values()[flat])
    })
}

/// Per level `-j0 ..= j_max`: `m_{3Q}` for every block `Q` of that level.
fn tripled_averages(sums: &BlockSums) -> Vec<(i32, Vec<f64>)> {
    let spec = *sums.spec();
    let n = spec.dim() as i32;
    (sums.coarsest_level()..=spec.j_max())
        .map(|level| {
            let per = sums.per_axis_at(level);
            let data = sums.level(level);
            let vol3 = 3f64.powi(n) * 2f64.powi(-level * n);
            let near = |i: usize| i.saturating_sub(1)..(i + 2).min(per);
            let table: Vec<f64> = (0..data.len())
                .into_par_iter()
                .map(|b| {
                    let s: f64 = if n == 1 {
                        data[near(b)].iter().sum()
                    } else {
                        let (i, j) = (b % per, b / per);
                        near(j).map(|jj| data[jj * per..(jj + 1) * per][near(i)].iter().sum::<f64>()).sum()
                    };
                    s / vol3
                })
                .collect();
            (level, table)
        })
        .collect()
}

/// `m_{3Q}` for the generation `-j0 - 1` cube containing the cell.
fn coarse_average(sums: &BlockSums, flat: usize) -> f64 {
    let spec = *sums.spec();
    let level = -spec.j0() - 1;
    let cube = spec.cell_cube(flat);
    let shift = (spec.j_max() - level) as u32;
    let index: Vec<i64> = cube.index().iter().map(|k| k >> shift).collect();
    let n = spec.dim() as i32;
    sums.tripled(level, &index) / (3f64.powi(n) * 2f64.powi(-level * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(spec: GridSpec) -> GridFunction {
        GridFunction::indicator_cube(spec, &DyadicCube::unit(spec.dim())).unwrap()
    }

    #[test]
    fn exponent_validation() {
        assert!(MorreyExponents::new(2.0, 1.0).is_ok());
        assert!(MorreyExponents::new(1.0, 2.0).is_err());
        assert!(MorreyExponents::new(1.0, 0.0).is_err());
        assert!(MorreyExponents::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn lq_examples() {
        let spec = GridSpec::new(1, 2, 8).unwrap();
        let chi = unit(spec);
        let whole = spec.domain();
        assert_eq!(lq_norm(&chi, 2.0, &whole).unwrap(), 1.0);
        for q in [0.3, 1.0, 2.5] {
            assert_relative_eq!(lq_norm(&chi.scale(2.0).unwrap(), q, &whole).unwrap(), 2.0, max_relative = 1e-13);
        }
        let pl = GridFunction::power_law(spec, 2.0).unwrap();
        assert_relative_eq!(lq_norm(&pl, 1.0, &DyadicCube::unit(1).to_box()).unwrap(), 2.0, max_relative = 1e-12);
        assert!(lq_norm(&chi, 0.0, &whole).is_err());
    }

    #[test]
    fn morrey_of_unit_indicator_is_one() {
        for spec in [GridSpec::new(1, 2, 8).unwrap(), GridSpec::new(2, 1, 4).unwrap()] {
            let chi = unit(spec);
            for (p, q) in [(1.0, 1.0), (3.0, 1.5), (0.9, 0.3), (5.0, 0.5)] {
                let sup = morrey_sup(&chi, MorreyExponents::new(p, q).unwrap());
                assert_eq!(sup.value, 1.0);
            }
        }
        assert_eq!(morrey_norm(&GridFunction::zeros(GridSpec::new(1, 0, 3).unwrap()), MorreyExponents::new(2.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn morrey_equals_lebesgue_when_p_equals_q() {
        // Dyadic cubes never straddle 0, so the identity needs the support
        // inside one dyadic cube; here [0, 4).
        let spec = GridSpec::new(1, 2, 8).unwrap();
        let centre = [crate::lattice::BinaryRational::new(3, -1)];
        let f = GridFunction::power_law_at(spec, 2.5, &centre)
            .unwrap()
            .restrict(&DyadicCube::new(-2, vec![0]).unwrap().to_box())
            .unwrap();
        for p in [0.6, 1.0, 2.0] {
            let m = morrey_norm(&f, MorreyExponents::new(p, p).unwrap());
            assert_relative_eq!(m, lq_norm_total(&f, p).unwrap(), max_relative = 1e-12);
        }
        // Straddling the origin: the supremum is the larger half.
        let g = GridFunction::power_law(spec, 2.5).unwrap();
        let right = lq_norm(&g, 1.0, &DyadicCube::new(-2, vec![0]).unwrap().to_box()).unwrap();
        assert_relative_eq!(morrey_norm(&g, MorreyExponents::new(1.0, 1.0).unwrap()), right, max_relative = 1e-12);
    }

    #[test]
    fn morrey_of_power_law_matches_exhaustive_search() {
        let spec = GridSpec::new(1, 2, 7).unwrap();
        let f = GridFunction::power_law(spec, 2.0).unwrap();
        let e = MorreyExponents::new(2.0, 1.0).unwrap();
        let fast = morrey_norm(&f, e);
        assert!(fast.is_finite() && fast > 0.0);
        assert_relative_eq!(fast, morrey_norm_exhaustive(&f, e, 3).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn averages() {
        let spec = GridSpec::new(1, 1, 6).unwrap();
        let unit_cube = DyadicCube::unit(1);
        let half = GridFunction::indicator_cube(spec, &DyadicCube::new(1, vec![0]).unwrap()).unwrap();
        assert_eq!(average(&half, &unit_cube).unwrap(), 0.5);
        let quarter = GridFunction::indicator_cube(spec, &DyadicCube::new(2, vec![0]).unwrap()).unwrap();
        assert_eq!(powered_average(&quarter, &unit_cube, 2.0).unwrap(), 0.5);
        assert_eq!(average(&unit(spec), &unit_cube).unwrap(), 1.0);
        assert!(powered_average(&quarter, &unit_cube, -1.0).is_err());
    }

    #[test]
    fn maximal_examples() {
        let spec = GridSpec::new(1, 2, 6).unwrap();
        let chi = unit(spec);
        let m = maximal(&chi, 1.0).unwrap();
        assert_eq!(m.value_at(&[0.5]), 1.0);
        assert!(maximal(&GridFunction::zeros(spec), 1.5).unwrap().is_zero());

        // Brute force at x = 2.5: every dyadic Q ∋ 2.5 down to the cell, m_{3Q}(χ_[0,1)).
        let x = 2.5;
        let mut expected = 0.0f64;
        for level in -10..=spec.j_max() {
            let side = 2f64.powi(-level);
            let k = (x / side).floor();
            let (a, b) = ((k - 1.0) * side, (k + 2.0) * side);
            let overlap = (b.min(1.0) - a.max(0.0)).max(0.0);
            expected = expected.max(overlap / (3.0 * side));
        }
        assert_relative_eq!(m.value_at(&[x]), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 1.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn maximal_dominates_function() {
        let spec = GridSpec::new(2, 1, 3).unwrap();
        let f = GridFunction::from_fn(spec, |i| ((i * 37) % 11) as f64).unwrap();
        for eta in [0.5, 1.0, 2.0] {
            let m = maximal(&f, eta).unwrap();
            assert!(m.values().iter().zip(f.values()).all(|(m, f)| m >= f));
        }
    }

    fn arb_fn() -> impl Strategy<Value = GridFunction> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..8.0], 128)
            .prop_map(|v| GridFunction::from_values(GridSpec::new(1, 2, 4).unwrap(), v).unwrap())
    }

    fn arb_exponents() -> impl Strategy<Value = MorreyExponents> {
        (0.2f64..4.0, 0.05f64..1.0).prop_map(|(p, r)| MorreyExponents::new(p, p * r).unwrap())
    }

    proptest! {
        #[test]
        fn morrey_homogeneity(f in arb_fn(), e in arb_exponents(), c in 0.0f64..10.0) {
            let a = morrey_norm(&f.scale(c).unwrap(), e);
            let b = c * morrey_norm(&f, e);
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }

        #[test]
        fn morrey_dilation(f in arb_fn(), e in arb_exponents(), m in -3i32..4) {
            let a = morrey_norm(&f.dilate_dyadic(m).unwrap(), e);
            let b = 2f64.powf(-(m as f64) / e.p()) * morrey_norm(&f, e);
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }

        #[test]
        fn morrey_monotone_in_q(f in arb_fn(), p in 0.3f64..4.0, r1 in 0.05f64..1.0, r2 in 0.05f64..1.0) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let a = morrey_norm(&f, MorreyExponents::new(p, p * lo).unwrap());
            let b = morrey_norm(&f, MorreyExponents::new(p, p * hi).unwrap());
            prop_assert!(a <= b * (1.0 + 1e-12));
        }

        #[test]
        fn morrey_matches_exhaustive(f in arb_fn(), e in arb_exponents()) {
            let a = morrey_norm(&f, e);
            let b = morrey_norm_exhaustive(&f, e, 2).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }

        #[test]
        fn powered_average_monotone_in_u(f in arb_fn(), u in 0.2f64..3.0, du in 0.0f64..3.0, level in -1i32..3, k in -2i64..2) {
            let q = DyadicCube::new(level, vec![k]).unwrap();
            let a = powered_average(&f, &q, u).unwrap();
            let b = powered_average(&f, &q, u + du).unwrap();
            prop_assert!(a <= b * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn maximal_monotone_in_eta_and_subadditive(f in arb_fn(), g in arb_fn(), eta in 0.2f64..2.0, deta in 0.0f64..2.0) {
            let a = maximal(&f, eta).unwrap();
            let b = maximal(&f, eta + deta).unwrap();
            prop_assert!(a.values().iter().zip(b.values()).all(|(a, b)| *a <= b * (1.0 + 1e-12)));
            let sum = maximal(&f.add(&g).unwrap(), 1.0).unwrap();
            let (mf, mg) = (maximal(&f, 1.0).unwrap(), maximal(&g, 1.0).unwrap());
            for i in 0..sum.values().len() {
                prop_assert!(sum.values()[i] <= (mf.values()[i] + mg.values()[i]) * (1.0 + 1e-12));
            }
        }
    }
}
