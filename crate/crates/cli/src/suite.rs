//! Execution of the configured checks over generated corpora.
//!
//! Items are evaluated in parallel and collected in input order, so the
//! output depends only on the configuration.

use morrey::corpus::{self, CorpusItem, CorpusMix, CorpusSpec};
use morrey::operators;
use morrey::verifier::{
    self, check_boundedness, check_pointwise, estimate_constant, ConstantSummary, HedbergHarness,
    InequalityReport, OperatorChoice, Regime, TheoremParams,
};
use morrey::{GridFunction, GridSpec, MajorantTruncation, MorreyExponents, OperatorParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CheckId, ParamTuple, RunConfig};

/// Relative tolerance of the Hedberg partition identity.
pub const PARTITION_TOL: f64 = 1e-12;

/// A check's constant with its two stability deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub group: String,
    #[serde(flatten)]
    pub constant: ConstantSummary,
    /// `|max' - max| / max` with the truncation widened by one level.
    pub widening_delta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub reports: Vec<InequalityReport>,
    pub summaries: Vec<CheckSummary>,
    /// Hard invariant failures; any entry makes the run exit nonzero.
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self, check_id: &str) -> Option<&CheckSummary> {
        self.summaries.iter().find(|s| s.constant.check_id == check_id)
    }

    pub fn rows<'a>(&'a self, check_id: &'a str) -> impl Iterator<Item = &'a InequalityReport> + 'a {
        self.reports.iter().filter(move |r| r.check_id == check_id)
    }

    /// Sort rows by check, item, resolution and truncation.
    pub fn sort(&mut self) {
        self.reports.sort_by(|a, b| {
            a.check_id
                .cmp(&b.check_id)
                .then_with(|| a.corpus_item_id.cmp(&b.corpus_item_id))
                .then_with(|| a.resolution.cmp(&b.resolution))
                .then_with(|| trunc_key(a).cmp(&trunc_key(b)))
                .then_with(|| a.notes.cmp(&b.notes))
        });
        self.summaries.sort_by(|a, b| a.constant.check_id.cmp(&b.constant.check_id));
    }
}

fn trunc_key(r: &InequalityReport) -> (i32, i32) {
    r.truncation.map_or((i32::MIN, i32::MIN), |t| (t.j_min, t.j_max_sum))
}

/// Reports of one check id split by variant.
#[derive(Default)]
struct Measured {
    base: Vec<InequalityReport>,
    fine: Vec<InequalityReport>,
    widened: Vec<InequalityReport>,
}

impl Measured {
    fn finish(self, group: CheckId, check_id: &str, out: &mut Outcome) {
        let fine = (!self.fine.is_empty()).then_some(self.fine.as_slice());
        let constant = estimate_constant(check_id, &self.base, fine);
        let widening_delta = (!self.widened.is_empty()).then(|| {
            let other = estimate_constant(check_id, &self.widened, None).max;
            relative_change(constant.max, other)
        });
        out.summaries.push(CheckSummary { group: group.to_string(), constant, widening_delta });
        out.reports.extend(self.base);
        out.reports.extend(self.fine);
        out.reports.extend(self.widened);
    }
}

fn relative_change(base: f64, other: f64) -> f64 {
    if base == 0.0 && other == 0.0 {
        0.0
    } else {
        (other - base).abs() / base
    }
}

type CoreResult<T> = morrey::Result<T>;

fn pair_id(a: &CorpusItem, b: &CorpusItem) -> String {
    format!("{}+{}", a.id, b.id)
}

fn power_targets(cfg: &RunConfig) -> Vec<f64> {
    let mut t: Vec<f64> = cfg.params.iter().flat_map(|p| [p.p1, p.p2]).filter(|p| *p > 1.0).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    if t.is_empty() {
        vec![2.0]
    } else {
        t
    }
}

fn corpus_spec(cfg: &RunConfig, grid: GridSpec, size: usize) -> CorpusSpec {
    CorpusSpec::new(grid, cfg.seed, size).with_power_targets(power_targets(cfg)).with_mix(cfg.corpus_mix)
}

/// Pairs for the pointwise checks: `(c_i, c_i)` for even `i`, `(c_i, c_{i-1})`
/// for odd `i`, so each item appears both squared and against a neighbour.
fn pointwise_pairs(items: &[CorpusItem]) -> Vec<(CorpusItem, CorpusItem)> {
    items
        .iter()
        .enumerate()
        .map(|(i, c)| if i % 2 == 0 { (c.clone(), c.clone()) } else { (c.clone(), items[i - 1].clone()) })
        .collect()
}

/// The grids a check runs on: the base and, with stability on, one finer.
fn resolutions(cfg: &RunConfig, base: GridSpec) -> CoreResult<Vec<GridSpec>> {
    let mut out = vec![base];
    if cfg.stability {
        out.push(base.refined(1)?);
    }
    Ok(out)
}

fn truncation(cfg: &RunConfig, spec: &GridSpec) -> CoreResult<MajorantTruncation> {
    cfg.truncation_for(spec).map_err(|e| morrey::Error::InvalidParameter(e.to_string()))
}

/// Run every configured check.
pub fn run_suite(cfg: &RunConfig) -> CoreResult<Outcome> {
    let mut out = Outcome::default();
    for check in CheckId::ALL {
        if !cfg.wants(check) {
            continue;
        }
        match check {
            CheckId::Lem24 | CheckId::IalphaMajorant => pointwise(cfg, check, &mut out)?,
            CheckId::Prop21 | CheckId::Thm22 | CheckId::Thm23 => averaging(cfg, check, &mut out)?,
            CheckId::Thm12 | CheckId::Thm13 | CheckId::Thm14 => theorem(cfg, check, &mut out)?,
            CheckId::Lem25 | CheckId::Lem26 => cube_sums(cfg, check, &mut out)?,
            CheckId::Hedberg => hedberg(cfg, &mut out)?,
            CheckId::Scaling => scaling(cfg, &mut out)?,
            CheckId::Maximal => maximal(cfg, &mut out)?,
        }
    }
    out.sort();
    Ok(out)
}

fn pointwise(cfg: &RunConfig, check: CheckId, out: &mut Outcome) -> CoreResult<()> {
    let use_i = check == CheckId::IalphaMajorant;
    let base = if use_i {
        cfg.ialpha_grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?
    } else {
        cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?
    };
    let alpha = if use_i { cfg.alpha_i } else { cfg.alpha_j };
    let p = OperatorParams::new(alpha, base.dim())?;
    let items = corpus::generate(&corpus_spec(cfg, base, cfg.corpus_size))?;
    let pairs = pointwise_pairs(&items);
    let id = check.as_str();
    let grids = resolutions(cfg, base)?;
    let mut m = Measured::default();
    for (level, spec) in grids.iter().enumerate() {
        let t = truncation(cfg, spec)?;
        let widen = level == 0 && cfg.stability;
        let rows: Vec<Vec<InequalityReport>> = pairs
            .par_iter()
            .map(|(a, b)| -> CoreResult<Vec<InequalityReport>> {
                let f1 = a.materialize(*spec)?;
                let f2 = b.materialize(*spec)?;
                let (op, major) = if use_i {
                    (operators::i_alpha(&f1, &f2, &p)?, operators::dyadic_majorant_i(&f1, &f2, &p, &t)?)
                } else {
                    (operators::j_alpha(&f1, &f2, &p)?, operators::dyadic_majorant_j(&f1, &f2, &p, &t)?)
                };
                let item = pair_id(a, b);
                let report = |major: &GridFunction, t: MajorantTruncation| -> CoreResult<InequalityReport> {
                    Ok(check_pointwise(&op, major)?
                        .into_report(id, &op, major)
                        .item(item.clone())
                        .at(spec.j_max(), cfg.seed)
                        .truncated(t)
                        .note(format!("alpha={alpha}")))
                };
                let mut rows = vec![report(&major, t)?];
                if widen {
                    let w = t.widened()?;
                    let wide = if use_i {
                        operators::dyadic_majorant_i(&f1, &f2, &p, &w)?
                    } else {
                        operators::dyadic_majorant_j(&f1, &f2, &p, &w)?
                    };
                    rows.push(report(&wide, w)?);
                }
                Ok(rows)
            })
            .collect::<CoreResult<_>>()?;
        for mut r in rows {
            if widen {
                m.widened.push(r.pop().expect("widened row"));
            }
            let r = r.pop().expect("base row");
            if level == 0 {
                m.base.push(r);
            } else {
                m.fine.push(r);
            }
        }
    }
    for r in m.base.iter().chain(&m.fine).chain(&m.widened) {
        if r.ratio.is_infinite() {
            out.failures.push(format!(
                "{id}: {} at resolution {} has {}",
                r.corpus_item_id, r.resolution, r.notes
            ));
        }
    }
    m.finish(check, id, out);
    Ok(())
}

fn averaging(cfg: &RunConfig, check: CheckId, out: &mut Outcome) -> CoreResult<()> {
    let base = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    let families = corpus::generate_families(base, cfg.seed, cfg.family_count);
    let grids = resolutions(cfg, base)?;
    let cases: Vec<(String, Box<dyn Fn(&[(GridFunction, morrey::DyadicCube)]) -> CoreResult<InequalityReport> + Sync>)> =
        match check {
            CheckId::Prop21 | CheckId::Thm22 => cfg
                .averaging
                .iter()
                .filter(|a| (a.p == a.q) == (check == CheckId::Prop21))
                .map(|a| {
                    let e = MorreyExponents::new(a.p, a.q)?;
                    let id = format!("{check}[p={};q={}]", a.p, a.q);
                    let f: Box<dyn Fn(&[_]) -> _ + Sync> = Box::new(move |fam: &[_]| verifier::check_averaging(fam, e));
                    Ok((id, f))
                })
                .collect::<CoreResult<_>>()?,
            _ => cfg
                .powered_averaging
                .iter()
                .map(|a| {
                    let e = MorreyExponents::new(a.p, a.q)?;
                    let u = a.u;
                    let id = format!("{check}[p={};q={};u={}]", a.p, a.q, a.u);
                    let f: Box<dyn Fn(&[_]) -> _ + Sync> =
                        Box::new(move |fam: &[_]| verifier::check_u_powered_averaging(fam, e, u));
                    Ok((id, f))
                })
                .collect::<CoreResult<_>>()?,
        };
    for (id, run) in &cases {
        let mut m = Measured::default();
        for (level, spec) in grids.iter().enumerate() {
            let rows: Vec<InequalityReport> = families
                .par_iter()
                .map(|fam| {
                    let members = fam.materialize(*spec)?;
                    let mut r = run(&members)?;
                    r.check_id = id.clone();
                    Ok(r.item(fam.id.clone()).at(spec.j_max(), cfg.seed).note(format!("members={}", members.len())))
                })
                .collect::<CoreResult<_>>()?;
            if level == 0 {
                m.base = rows;
            } else {
                m.fine = rows;
            }
        }
        m.finish(check, id, out);
    }
    Ok(())
}

/// Parameter tuples admitted by `regime`, with their labels.
fn admitted(cfg: &RunConfig, regime: Regime) -> CoreResult<Vec<(ParamTuple, TheoremParams)>> {
    let mut out = Vec::new();
    for t in &cfg.params {
        let tp = t.solve(cfg.dimension)?;
        if tp.admits(regime) {
            out.push((*t, tp));
        }
    }
    Ok(out)
}

fn regime_of(check: CheckId) -> Regime {
    match check {
        CheckId::Thm12 => Regime::T12,
        CheckId::Thm13 => Regime::T13,
        CheckId::Thm14 => Regime::T14,
        CheckId::Lem25 => Regime::L25,
        _ => Regime::L26,
    }
}

fn pairs(cfg: &RunConfig, grid: GridSpec) -> CoreResult<Vec<(CorpusItem, CorpusItem)>> {
    corpus::generate_pairs(&corpus_spec(cfg, grid, cfg.pair_count))
}

/// Boundedness ratios of `op` over the pair corpus on `base` (and one finer).
#[allow(clippy::too_many_arguments)]
fn boundedness(
    cfg: &RunConfig,
    group: CheckId,
    id: &str,
    tp: &TheoremParams,
    regime: Regime,
    op: OperatorChoice,
    base: GridSpec,
    out: &mut Outcome,
) -> CoreResult<()> {
    let pairs = pairs(cfg, base)?;
    let mut m = Measured::default();
    for (level, spec) in resolutions(cfg, base)?.iter().enumerate() {
        let t = truncation(cfg, spec)?;
        let rows: Vec<InequalityReport> = pairs
            .par_iter()
            .map(|(a, b)| {
                let f1 = a.materialize(*spec)?;
                let f2 = b.materialize(*spec)?;
                let mut r = check_boundedness(tp, regime, op, &f1, &f2, &t)?;
                r.check_id = id.to_string();
                Ok(r.item(pair_id(a, b)).at(spec.j_max(), cfg.seed).note(format!("op={op:?};s={};t={}", tp.s, tp.t)))
            })
            .collect::<CoreResult<_>>()?;
        if level == 0 {
            m.base = rows;
        } else {
            m.fine = rows;
        }
    }
    m.finish(group, id, out);
    Ok(())
}

fn theorem(cfg: &RunConfig, check: CheckId, out: &mut Outcome) -> CoreResult<()> {
    let regime = regime_of(check);
    let tuples = admitted(cfg, regime)?;
    if tuples.is_empty() {
        out.failures.push(format!("{check}: no configured parameter tuple satisfies the hypotheses of {}", regime.label()));
        return Ok(());
    }
    let base = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    for (t, tp) in &tuples {
        let id = format!("{check}[{}]", t.label());
        boundedness(cfg, check, &id, tp, regime, OperatorChoice::J, base, out)?;
    }
    Ok(())
}

fn cube_sums(cfg: &RunConfig, check: CheckId, out: &mut Outcome) -> CoreResult<()> {
    let regime = regime_of(check);
    let tuples = admitted(cfg, regime)?;
    if tuples.is_empty() {
        out.failures.push(format!("{check}: no configured parameter tuple satisfies the hypotheses of {}", regime.label()));
        return Ok(());
    }
    let base = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    for (t, tp) in &tuples {
        if check == CheckId::Lem25 {
            let id = format!("{check}/majorant_I[{}]", t.label());
            boundedness(cfg, check, &id, tp, regime, OperatorChoice::MajorantI, base, out)?;
            let small = cfg.ialpha_grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
            let id = format!("{check}/I[{}]", t.label());
            boundedness(cfg, check, &id, tp, regime, OperatorChoice::I, small, out)?;
        } else {
            let id = format!("{check}[{};u={}]", t.label(), tp.u.expect("admitted by L2.6"));
            boundedness(cfg, check, &id, tp, regime, OperatorChoice::UPoweredSum, base, out)?;
        }
    }
    Ok(())
}

/// Per pair: the worst `S1 / bound1`, `S2 / bound2` and partition error over
/// random `(x, L)`, and the worst bound spread at the balancing cutoff.
fn hedberg(cfg: &RunConfig, out: &mut Outcome) -> CoreResult<()> {
    let tuples = admitted(cfg, Regime::L26)?;
    if tuples.is_empty() {
        out.failures.push("hedberg: no configured parameter tuple admits s < u < min(q1, q2)".into());
        return Ok(());
    }
    let spec = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    let t = truncation(cfg, &spec)?;
    let pairs = pairs(cfg, spec)?;
    let (lo, hi) = (-(spec.j_max() + 1) as f64, (spec.j0() + 1) as f64);
    for (k, (tuple, tp)) in tuples.iter().enumerate() {
        let label = tuple.label();
        let rows: Vec<[InequalityReport; 4]> = pairs
            .par_iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let f1 = a.materialize(spec)?;
                let f2 = b.materialize(spec)?;
                let h = HedbergHarness::new(tp, &f1, &f2, &t)?;
                let live: Vec<usize> = (0..spec.cell_count()).filter(|&c| h.total(c) > 0.0).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((k as u64) << 32) | i as u64);
                let mut s1 = (0.0, 0.0, f64::NEG_INFINITY);
                let mut s2 = (0.0, 0.0, f64::NEG_INFINITY);
                // (error, total) at the worst relative partition error
                let mut part = (0.0f64, 1.0f64);
                for _ in 0..if live.is_empty() { 0 } else { cfg.hedberg_samples } {
                    let cell = live[rng.gen_range(0..live.len())];
                    let l = 2f64.powf(rng.gen_range(lo..hi));
                    let s = h.sample(cell, l)?;
                    for (acc, v, bound) in [(&mut s1, s.s1, s.bound1), (&mut s2, s.s2, s.bound2)] {
                        let r = if v == 0.0 { 0.0 } else { v / bound };
                        if r > acc.2 {
                            *acc = (v, bound, r);
                        }
                    }
                    let err = (s.s1 + s.s2 - s.total).abs();
                    if err / s.total > part.0 / part.1 {
                        part = (err, s.total);
                    }
                }
                let mut spread = (0.0, 0.0);
                for &cell in &live {
                    if let Some((s, _)) = h.balanced(cell)? {
                        let (hi_b, lo_b) = (s.bound1.max(s.bound2), s.bound1.min(s.bound2));
                        if spread.1 == 0.0 || hi_b / lo_b > spread.0 / spread.1 {
                            spread = (hi_b, lo_b);
                        }
                    }
                }
                let item = pair_id(a, b);
                let mk = |name: &str, lhs: f64, rhs: f64| {
                    InequalityReport::new(format!("hedberg/{name}[{label}]"), lhs, rhs)
                        .item(item.clone())
                        .at(spec.j_max(), cfg.seed)
                        .truncated(t)
                        .note(format!("samples={};cells={}", cfg.hedberg_samples, live.len()))
                };
                Ok([mk("S1", s1.0, s1.1), mk("S2", s2.0, s2.1), mk("partition", part.0, part.1), mk("balance", spread.0, spread.1)])
            })
            .collect::<CoreResult<_>>()?;
        let mut by_name: [Measured; 4] = Default::default();
        for row in rows {
            for (slot, r) in by_name.iter_mut().zip(row) {
                slot.base.push(r);
            }
        }
        for r in &by_name[2].base {
            if r.ratio > PARTITION_TOL {
                out.failures.push(format!("{}: {} partition error {:e}", r.check_id, r.corpus_item_id, r.ratio));
            }
        }
        for m in by_name {
            let id = m.base[0].check_id.clone();
            m.finish(CheckId::Hedberg, &id, out);
        }
    }
    Ok(())
}

/// Boundedness ratio of `J_α` for one pair after dilating both inputs by
/// `2^m`, and after scaling `f1` by a constant.
fn scaling(cfg: &RunConfig, out: &mut Outcome) -> CoreResult<()> {
    let spec = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    let pairs = pairs(cfg, spec)?;
    let take = cfg.scaling_pairs.min(pairs.len());
    for t in &cfg.params {
        let tp = t.solve(cfg.dimension)?;
        let Some(regime) = tp.regimes().first().copied() else { continue };
        let label = t.label();
        let rows: Vec<Vec<InequalityReport>> = pairs[..take]
            .par_iter()
            .map(|(a, b)| {
                let f1 = a.materialize(spec)?;
                let f2 = b.materialize(spec)?;
                let t0 = truncation(cfg, &spec)?;
                let base = check_boundedness(&tp, regime, OperatorChoice::J, &f1, &f2, &t0)?.ratio;
                let item = pair_id(a, b);
                let mut rows = Vec::new();
                for &m in &cfg.scaling_dilations {
                    let g1 = f1.dilate_dyadic(m)?;
                    let g2 = f2.dilate_dyadic(m)?;
                    let r = check_boundedness(&tp, regime, OperatorChoice::J, &g1, &g2, &t0)?.ratio;
                    rows.push(
                        InequalityReport::new(format!("scaling/dilation[{label}]"), r, base)
                            .item(item.clone())
                            .at(spec.j_max(), cfg.seed)
                            .note(format!("m={m};regime={}", regime.label())),
                    );
                }
                let c = cfg.scaling_scalar;
                let r = check_boundedness(&tp, regime, OperatorChoice::J, &f1.scale(c)?, &f2, &t0)?.ratio;
                rows.push(
                    InequalityReport::new(format!("scaling/scalar[{label}]"), r, base)
                        .item(item)
                        .at(spec.j_max(), cfg.seed)
                        .note(format!("c={c};regime={}", regime.label())),
                );
                Ok(rows)
            })
            .collect::<CoreResult<_>>()?;
        let mut dil = Measured::default();
        let mut sca = Measured::default();
        for mut r in rows {
            sca.base.push(r.pop().expect("scalar row"));
            dil.base.extend(r);
        }
        if !dil.base.is_empty() {
            let id = dil.base[0].check_id.clone();
            dil.finish(CheckId::Scaling, &id, out);
        }
        if !sca.base.is_empty() {
            let id = sca.base[0].check_id.clone();
            sca.finish(CheckId::Scaling, &id, out);
        }
    }
    Ok(())
}

fn maximal(cfg: &RunConfig, out: &mut Outcome) -> CoreResult<()> {
    let base = cfg.grid().map_err(|e| morrey::Error::InvalidParameter(e.to_string()))?;
    let e = MorreyExponents::new(cfg.maximal.p, cfg.maximal.q)?;
    let items = corpus::generate(&corpus_spec(cfg, base, cfg.corpus_size))?;
    let grids = resolutions(cfg, base)?;
    for frac in &cfg.maximal.eta_fractions {
        let eta = frac * e.q();
        let id = format!("maximal[p={};q={};eta={frac}q]", e.p(), e.q());
        let mut m = Measured::default();
        for (level, spec) in grids.iter().enumerate() {
            let rows: Vec<InequalityReport> = items
                .par_iter()
                .map(|item| {
                    let f = item.materialize(*spec)?;
                    let mut r = verifier::check_maximal(&f, e, eta)?;
                    r.check_id = id.clone();
                    Ok(r.item(item.id.clone()).at(spec.j_max(), cfg.seed).note(format!("eta={eta}")))
                })
                .collect::<CoreResult<_>>()?;
            if level == 0 {
                m.base = rows;
            } else {
                m.fine = rows;
            }
        }
        m.finish(CheckId::Maximal, &id, out);
    }
    Ok(())
}

/// Indicator-only corpus used by the oracle.
pub fn indicator_corpus(cfg: &RunConfig, grid: GridSpec, size: usize) -> CoreResult<Vec<CorpusItem>> {
    corpus::generate(&corpus_spec(cfg, grid, size).with_mix(CorpusMix::indicators_only()))
}

/// Mixed corpus used by the oracle.
pub fn mixed_corpus(cfg: &RunConfig, grid: GridSpec, size: usize) -> CoreResult<Vec<CorpusItem>> {
    corpus::generate(&corpus_spec(cfg, grid, size))
}
