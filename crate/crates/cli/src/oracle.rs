//! Reference values: closed forms, refined grids and exhaustive suprema.
//!
//! Each comparison becomes a report row; rows outside tolerance are hard
//! failures.

use std::path::Path;

use morrey::norms::{self, MorreyExponents};
use morrey::operators::{self, OperatorParams};
use morrey::verifier::{estimate_constant, InequalityReport};
use morrey::{DyadicCube, GridFunction, GridSpec};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::suite::{self, CheckSummary, Outcome};

/// Closed-form `J_α` at the example point.
pub const CLOSED_FORM_TOL: f64 = 0.01;
/// Refined-grid agreement, relative to the largest refined value.
pub const REFINED_TOL: f64 = 0.02;
/// Exhaustive vs level-restricted Morrey supremum.
pub const EXACT_TOL: f64 = 1e-12;
/// Values the quadrature reproduces exactly up to rounding.
pub const ROUNDING_TOL: f64 = 1e-9;

type CoreResult<T> = morrey::Result<T>;

/// Values of `fine` (a grid `levels` generations finer) at the cell centres of
/// `coarse`. Each coarse centre is a corner shared by `2^n` fine cells; their
/// mean interpolates the fine values at that point.
pub fn at_coarse_centres(fine: &GridFunction, coarse: GridSpec, levels: i32) -> CoreResult<GridFunction> {
    if levels < 1 {
        return Err(morrey::Error::InvalidParameter("need at least one level of refinement".into()));
    }
    let spec = *fine.spec();
    let k = 1usize << levels;
    let n = spec.dim();
    let corners: &[[usize; 2]] = if n == 2 { &[[0, 0], [1, 0], [0, 1], [1, 1]] } else { &[[0, 0], [1, 0]] };
    GridFunction::from_fn(coarse, |flat| {
        let idx = coarse.unflatten(flat);
        let mut sum = 0.0;
        for c in corners {
            let mut i = [0usize; 2];
            for a in 0..n {
                i[a] = idx[a] * k + k / 2 - 1 + c[a];
            }
            sum += fine.values()[spec.flatten(i)];
        }
        sum / corners.len() as f64
    })
}

/// `max |a - b| / max |b|` as `(numerator, denominator)`.
pub fn relative_linf(a: &GridFunction, b: &GridFunction) -> (f64, f64) {
    let num = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    (num, den)
}

fn check(out: &mut Outcome, r: InequalityReport, ok: bool) {
    if !ok {
        out.failures.push(format!("{}: {} lhs {:e} rhs {:e} ratio {:e}", r.check_id, r.corpus_item_id, r.lhs, r.rhs, r.ratio));
    }
    out.reports.push(r);
}

/// `J_{1/2}[χ_{[0,1)}, χ_{[0,1)}]` next to `x = 1/2` on a grid of resolution 10.
fn closed_form_j(cfg: &RunConfig, out: &mut Outcome, dump: Option<&Path>) -> CoreResult<()> {
    let spec = GridSpec::new(1, 1, 10)?;
    let f = GridFunction::indicator_cube(spec, &DyadicCube::unit(1))?;
    let p = OperatorParams::new(0.5, 1)?;
    let j = operators::j_alpha(&f, &f, &p)?;
    if let Some(dir) = dump {
        let file = std::fs::File::create(dir.join("reference-j-indicator.csv")).map_err(io)?;
        j.write_csv(std::io::BufWriter::new(file)).map_err(io)?;
    }
    let h = spec.cell_width();
    let cell = spec.locate(&[0.5 - h / 2.0]).expect("inside the domain");
    let v = j.values()[cell];
    // ∫_{|y| < r} |y|^{-1/2} dy = 4√r with r = 1/2 at x = 1/2
    let r = InequalityReport::new("oracle/j_closed_form", v, 2.0 * 2f64.sqrt()).at(10, cfg.seed).note("x=1/2;alpha=0.5");
    let ok = (r.ratio - 1.0).abs() <= CLOSED_FORM_TOL;
    check(out, r, ok);
    // the nearest cell centre x = 1/2 - h/2 gives r = 1/2 - h/2 exactly
    let r = InequalityReport::new("oracle/j_cell_centre", v, 4.0 * (0.5 - h / 2.0).sqrt())
        .at(10, cfg.seed)
        .note("x=1/2-h/2;alpha=0.5");
    let ok = (r.ratio - 1.0).abs() <= ROUNDING_TOL;
    check(out, r, ok);
    Ok(())
}

fn io(e: std::io::Error) -> morrey::Error {
    morrey::Error::Parse(e.to_string())
}

/// Production `J_α` (and `I_α`) against the operator on a grid two levels
/// finer, both read at the coarse cell centres.
fn refined(cfg: &RunConfig, out: &mut Outcome) -> CoreResult<()> {
    let grid = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    let p = OperatorParams::new(cfg.alpha_j, grid.dim())?;
    let items = suite::indicator_corpus(cfg, grid, cfg.oracle_items)?;
    let fine = grid.refined(2)?;
    let rows: Vec<InequalityReport> = items
        .par_iter()
        .map(|item| {
            let f = item.materialize(grid)?;
            let coarse = operators::j_alpha(&f, &f, &p)?;
            let g = f.refine(2)?;
            let reference = at_coarse_centres(&operators::j_alpha(&g, &g, &p)?, grid, 2)?;
            let (num, den) = relative_linf(&coarse, &reference);
            Ok(InequalityReport::new("oracle/j_refined", num, den)
                .item(item.id.clone())
                .at(grid.j_max(), cfg.seed)
                .note(format!("alpha={};reference={}", cfg.alpha_j, fine.j_max())))
        })
        .collect::<CoreResult<_>>()?;
    for r in rows {
        let ok = r.ratio <= REFINED_TOL;
        check(out, r, ok);
    }
    if grid.dim() == 1 {
        let small = cfg.ialpha_grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
        let levels = if small.cell_count() << 2 <= operators::I_ALPHA_MAX_CELLS { 2 } else { 1 };
        let p = OperatorParams::new(cfg.alpha_i, 1)?;
        let items = suite::indicator_corpus(cfg, small, cfg.oracle_items.min(5))?;
        let rows: Vec<InequalityReport> = items
            .par_iter()
            .map(|item| {
                let f = item.materialize(small)?;
                let coarse = operators::i_alpha(&f, &f, &p)?;
                let g = f.refine(levels)?;
                let reference = at_coarse_centres(&operators::i_alpha(&g, &g, &p)?, small, levels)?;
                let (num, den) = relative_linf(&coarse, &reference);
                Ok(InequalityReport::new("oracle/i_refined", num, den)
                    .item(item.id.clone())
                    .at(small.j_max(), cfg.seed)
                    .note(format!("alpha={};reference={}", cfg.alpha_i, small.j_max() + levels)))
            })
            .collect::<CoreResult<_>>()?;
        for r in rows {
            let ok = r.ratio <= REFINED_TOL;
            check(out, r, ok);
        }
    }
    Ok(())
}

/// Morrey norms against the exhaustive supremum over two extra generations
/// on each side, and `L^q` norms of indicators against `|Q|^{1/q}`.
fn exhaustive(cfg: &RunConfig, out: &mut Outcome) -> CoreResult<()> {
    let grid = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    let mut exps: Vec<MorreyExponents> = Vec::new();
    for t in &cfg.params {
        exps.push(MorreyExponents::new(t.p1, t.q1)?);
        exps.push(MorreyExponents::new(t.p2, t.q2)?);
    }
    exps.push(MorreyExponents::new(cfg.maximal.p, cfg.maximal.q)?);
    for a in &cfg.averaging {
        exps.push(MorreyExponents::new(a.p, a.q)?);
    }
    exps.dedup();
    let items = suite::mixed_corpus(cfg, grid, cfg.oracle_items)?;
    let rows: Vec<Vec<InequalityReport>> = items
        .par_iter()
        .map(|item| {
            let f = item.materialize(grid)?;
            exps.iter()
                .map(|e| {
                    let fast = norms::morrey_norm(&f, *e);
                    let slow = norms::morrey_norm_exhaustive(&f, *e, 2)?;
                    Ok(InequalityReport::new("oracle/morrey_exhaustive", fast, slow)
                        .item(item.id.clone())
                        .at(grid.j_max(), cfg.seed)
                        .note(format!("p={};q={}", e.p(), e.q())))
                })
                .collect()
        })
        .collect::<CoreResult<_>>()?;
    for r in rows.into_iter().flatten() {
        let ok = r.degenerate || (r.ratio - 1.0).abs() <= EXACT_TOL;
        check(out, r, ok);
    }
    let indicators = suite::indicator_corpus(cfg, grid, cfg.oracle_items)?;
    for item in &indicators {
        let f = item.materialize(grid)?;
        let morrey::corpus::Shape::Indicator { cube } = &item.shape else { continue };
        for q in [0.5, 1.0, 2.0] {
            let v = norms::lq_norm_total(&f, q)?;
            let exact = cube.volume().powf(1.0 / q);
            let r = InequalityReport::new("oracle/indicator_lq", v, exact)
                .item(item.id.clone())
                .at(grid.j_max(), cfg.seed)
                .note(format!("q={q}"));
            let ok = (r.ratio - 1.0).abs() <= EXACT_TOL;
            check(out, r, ok);
        }
    }
    Ok(())
}

/// All oracle comparisons; `dump` receives the reference grid values.
pub fn run_oracle(cfg: &RunConfig, dump: Option<&Path>) -> CoreResult<Outcome> {
    let mut out = Outcome::default();
    closed_form_j(cfg, &mut out, dump)?;
    refined(cfg, &mut out)?;
    exhaustive(cfg, &mut out)?;
    let mut ids: Vec<String> = out.reports.iter().map(|r| r.check_id.clone()).collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        let rows: Vec<InequalityReport> = out.reports.iter().filter(|r| r.check_id == id).cloned().collect();
        let constant = estimate_constant(&id, &rows, None);
        out.summaries.push(CheckSummary { group: "oracle".into(), constant, widening_delta: None });
    }
    out.sort();
    Ok(out)
}
