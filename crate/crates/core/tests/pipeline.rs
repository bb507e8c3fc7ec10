//! Public-API pipelines: corpus -> grid functions -> operators -> reports.

use approx::assert_relative_eq;
use morrey::corpus::{self, CorpusSpec};
use morrey::norms::{self, MorreyExponents};
use morrey::operators::{self, OperatorParams};
use morrey::verifier::{self, OperatorChoice, Regime};
use morrey::{Error, GridFunction, GridSpec, MajorantTruncation};

fn small() -> GridSpec {
    GridSpec::new(1, 2, 6).unwrap()
}

fn pairs(seed: u64, n: usize) -> Vec<(GridFunction, GridFunction)> {
    let spec = small();
    corpus::generate_pairs(&CorpusSpec::new(spec, seed, n))
        .unwrap()
        .into_iter()
        .map(|(a, b)| (a.materialize(spec).unwrap(), b.materialize(spec).unwrap()))
        .filter(|(a, b)| !a.is_zero() && !b.is_zero())
        .collect()
}

#[test]
fn corpus_is_reproducible() {
    let spec = CorpusSpec::new(small(), 9, 30);
    let a = corpus::generate(&spec).unwrap();
    assert_eq!(a, corpus::generate(&spec).unwrap());
    assert_ne!(a, corpus::generate(&CorpusSpec::new(small(), 10, 30)).unwrap());
    for item in &a {
        let f = item.materialize(small()).unwrap();
        assert!(f.values().iter().all(|v| *v >= 0.0 && v.is_finite()), "{}", item.id);
    }
}

#[test]
fn grid_functions_round_trip_through_csv_and_binary() {
    for (f, _) in pairs(3, 4) {
        let mut text = Vec::new();
        f.write_csv(&mut text).unwrap();
        assert_eq!(GridFunction::read_csv(text.as_slice()).unwrap(), f);
        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        assert_eq!(GridFunction::read_binary(bin.as_slice()).unwrap(), f);
    }
}

#[test]
fn j_alpha_never_exceeds_its_majorant_where_the_majorant_vanishes() {
    let p = OperatorParams::new(0.5, 1).unwrap();
    let t = MajorantTruncation::default_for(&small());
    for (f1, f2) in pairs(5, 12) {
        let j = operators::j_alpha(&f1, &f2, &p).unwrap();
        let m = operators::dyadic_majorant_j(&f1, &f2, &p, &t).unwrap();
        let c = verifier::check_pointwise(&j, &m).unwrap();
        assert_eq!(c.violations, 0);
        assert!(c.max_ratio.is_finite() && c.max_ratio > 0.0);
    }
}

#[test]
fn boundedness_ratio_is_dilation_and_scalar_invariant() {
    let tp = verifier::solve_params(1, 1.0 / 6.0, 1.5, 1.2, 1.5, 1.2).unwrap();
    assert!(tp.admits(Regime::T13));
    for (f1, f2) in pairs(7, 4) {
        let t = MajorantTruncation::default_for(f1.spec());
        let base = verifier::check_boundedness(&tp, Regime::T13, OperatorChoice::J, &f1, &f2, &t).unwrap();
        for m in [-1, 1] {
            let (g1, g2) = (f1.dilate_dyadic(m).unwrap(), f2.dilate_dyadic(m).unwrap());
            let t = MajorantTruncation::default_for(g1.spec());
            let r = verifier::check_boundedness(&tp, Regime::T13, OperatorChoice::J, &g1, &g2, &t).unwrap();
            assert_relative_eq!(r.ratio, base.ratio, max_relative = 1e-9);
        }
        let scaled = f1.scale(3.7).unwrap();
        let r = verifier::check_boundedness(&tp, Regime::T13, OperatorChoice::J, &scaled, &f2, &t).unwrap();
        assert_relative_eq!(r.ratio, base.ratio, max_relative = 1e-12);
    }
}

#[test]
fn regime_hypotheses_are_enforced() {
    let tp = verifier::solve_params(1, 1.0 / 6.0, 1.5, 1.2, 1.5, 1.2).unwrap();
    let (f1, f2) = pairs(1, 2).remove(0);
    let t = MajorantTruncation::default_for(f1.spec());
    let err = verifier::check_boundedness(&tp, Regime::T12, OperatorChoice::J, &f1, &f2, &t);
    assert!(matches!(err, Err(Error::Regime(_))));
    let err = verifier::check_boundedness(&tp, Regime::T13, OperatorChoice::I, &f1, &f2, &t);
    assert!(matches!(err, Err(Error::Regime(_))));
    let e = MorreyExponents::new(1.5, 1.2).unwrap();
    assert!(matches!(verifier::check_maximal(&f1, e, 1.2), Err(Error::Regime(_))));
    assert!(verifier::check_maximal(&f1, e, 0.6).unwrap().ratio >= 1.0 - 1e-12);
}

#[test]
fn hedberg_halves_partition_the_cube_sum() {
    let tp = verifier::solve_params(1, 1.0 / 6.0, 1.5, 1.2, 1.5, 1.2).unwrap().with_u(1.1);
    for (f1, f2) in pairs(11, 4) {
        let t = MajorantTruncation::default_for(f1.spec());
        let h = verifier::HedbergHarness::new(&tp, &f1, &f2, &t).unwrap();
        for cell in (0..small().cell_count()).step_by(17) {
            let total = h.total(cell);
            for l in [1.0 / 64.0, 0.25, 1.0, 8.0] {
                let s = h.sample(cell, l).unwrap();
                assert!((s.s1 + s.s2 - total).abs() <= 1e-12 * total.max(1e-300), "cell {cell}, L {l}");
            }
        }
    }
}

#[test]
fn constant_estimate_tracks_resolution() {
    let e = MorreyExponents::new(1.5, 1.2).unwrap();
    let spec = small();
    let items = corpus::generate(&CorpusSpec::new(spec, 2, 10)).unwrap();
    let run = |spec: GridSpec| -> Vec<verifier::InequalityReport> {
        items
            .iter()
            .map(|it| verifier::check_maximal(&it.materialize(spec).unwrap(), e, 0.6).unwrap().item(&it.id))
            .collect()
    };
    let base = run(spec);
    let fine = run(spec.refined(1).unwrap());
    let s = verifier::estimate_constant("maximal", &base, Some(&fine));
    assert_eq!(s.count, 10);
    assert!(s.max >= s.median && s.max.is_finite());
    assert!(s.stability_delta.unwrap() < 0.1);
    // norms of the maximal function are monotone in the exponent
    let f = items[0].materialize(spec).unwrap();
    let m1 = norms::morrey_norm(&norms::maximal(&f, 0.3).unwrap(), e);
    let m2 = norms::morrey_norm(&norms::maximal(&f, 0.9).unwrap(), e);
    assert!(m1 <= m2 * (1.0 + 1e-12));
}
