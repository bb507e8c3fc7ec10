//! Inequalities turned into measured ratios.
//!
//! Each check evaluates both sides of an inequality on concrete step
//! functions and reports `lhs / rhs`; implicit constants are estimated as the
//! maximum ratio over a corpus. Nothing here asserts a particular constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::lattice::DyadicCube;
use crate::norms::{self, MorreyExponents};
use crate::operators::{self, HedbergSplit, MajorantTruncation, OperatorParams};

const REL_TOL: f64 = 1e-9;

/// Which boundedness statement a parameter tuple is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    /// `1 <= t <= s < min(q1, q2)`.
    T12,
    /// `0 < t <= s < 1`.
    T13,
    /// `0 < t <= 1 <= s < min(q1, q2)`.
    T14,
    /// Cube-sum majorant of `I_α`: `0 < α < 2n`, `0 < t <= s`.
    L25,
    /// u-powered cube sum: as [`Regime::L25`] with `s < u < min(q1, q2)`.
    L26,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::T12 => "T1.2",
            Regime::T13 => "T1.3",
            Regime::T14 => "T1.4",
            Regime::L25 => "L2.5",
            Regime::L26 => "L2.6",
        }
    }
}

/// Exponents of a bilinear boundedness statement, with the derived `p, q, s, t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    pub n: usize,
    pub alpha: f64,
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    pub p: f64,
    pub q: f64,
    pub s: f64,
    pub t: f64,
    pub u: Option<f64>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

/// Derive `p, q, s, t` from `1/p = 1/p1 + 1/p2`, `1/q = 1/q1 + 1/q2`,
/// `1/s = 1/p - α/n` and `q/p = t/s`; propose `u = √(s · min(q1, q2))` when
/// `s < min(q1, q2)`.
pub fn solve_params(n: usize, alpha: f64, p1: f64, q1: f64, p2: f64, q2: f64) -> Result<TheoremParams> {
    if !(1..=2).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    for (name, v) in [("alpha", alpha), ("p1", p1), ("q1", q1), ("p2", p2), ("q2", q2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidExponent(format!("{name} = {v} must be positive and finite")));
        }
    }
    for (q, p) in [(q1, p1), (q2, p2)] {
        if !(1.0 < q && q <= p) {
            return Err(Error::InvalidExponent(format!("need 1 < q_j <= p_j, got q = {q}, p = {p}")));
        }
    }
    let p = 1.0 / (1.0 / p1 + 1.0 / p2);
    let q = 1.0 / (1.0 / q1 + 1.0 / q2);
    let inv_s = 1.0 / p - alpha / n as f64;
    if !(inv_s > 0.0) {
        return Err(Error::Regime(format!("alpha = {alpha} >= n/p = {}: s is undefined", n as f64 / p)));
    }
    let s = 1.0 / inv_s;
    let t = s * q / p;
    let min_q = q1.min(q2);
    let u = (s < min_q).then(|| (s * min_q).sqrt());
    Ok(TheoremParams { n, alpha, p1, q1, p2, q2, p, q, s, t, u })
}

impl TheoremParams {
    pub fn with_u(mut self, u: f64) -> Self {
        self.u = Some(u);
        self
    }

    /// Whether the index relations hold to `1e-9` relative.
    pub fn relations_hold(&self) -> bool {
        close(1.0 / self.p, 1.0 / self.p1 + 1.0 / self.p2)
            && close(1.0 / self.q, 1.0 / self.q1 + 1.0 / self.q2)
            && close(1.0 / self.s, 1.0 / self.p - self.alpha / self.n as f64)
            && close(self.q / self.p, self.t / self.s)
    }

    fn base_ok(&self, alpha_cap: f64) -> bool {
        self.relations_hold()
            && self.alpha > 0.0
            && self.alpha < alpha_cap
            && 1.0 < self.q1
            && self.q1 <= self.p1
            && 1.0 < self.q2
            && self.q2 <= self.p2
            && self.q > 0.0
            && self.q <= self.p
            && self.t > 0.0
            && self.t <= self.s
    }

    /// Whether the hypotheses of `regime` hold, read off each statement.
    pub fn admits(&self, regime: Regime) -> bool {
        let n = self.n as f64;
        let min_q = self.q1.min(self.q2);
        match regime {
            Regime::T12 => self.base_ok(n) && 1.0 <= self.t && self.s < min_q,
            Regime::T13 => self.base_ok(n) && self.s < 1.0,
            Regime::T14 => self.base_ok(n) && self.t <= 1.0 && 1.0 <= self.s && self.s < min_q,
            Regime::L25 => self.base_ok(2.0 * n),
            Regime::L26 => self.base_ok(2.0 * n) && self.u.is_some_and(|u| self.s < u && u < min_q),
        }
    }

    /// The `J_α` theorems whose hypotheses hold.
    pub fn regimes(&self) -> Vec<Regime> {
        [Regime::T12, Regime::T13, Regime::T14].into_iter().filter(|r| self.admits(*r)).collect()
    }

    pub fn source(&self) -> MorreyExponents {
        MorreyExponents::new(self.s, self.t).expect("t <= s after validation")
    }

    pub fn first(&self) -> Result<MorreyExponents> {
        MorreyExponents::new(self.p1, self.q1)
    }

    pub fn second(&self) -> Result<MorreyExponents> {
        MorreyExponents::new(self.p2, self.q2)
    }
}

/// One measured instance of an inequality `lhs ≲ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub check_id: String,
    pub corpus_item_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub resolution: i32,
    pub truncation: Option<MajorantTruncation>,
    pub seed: u64,
    pub notes: String,
    /// `lhs = rhs = 0`: excluded from maxima.
    pub degenerate: bool,
}

impl InequalityReport {
    pub fn new(check_id: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let degenerate = lhs == 0.0 && rhs == 0.0;
        let ratio = if degenerate {
            0.0
        } else if rhs > 0.0 {
            lhs / rhs
        } else {
            f64::INFINITY
        };
        Self {
            check_id: check_id.into(),
            corpus_item_id: String::new(),
            lhs,
            rhs,
            ratio,
            resolution: 0,
            truncation: None,
            seed: 0,
            notes: String::new(),
            degenerate,
        }
    }

    pub fn item(mut self, id: impl Into<String>) -> Self {
        self.corpus_item_id = id.into();
        self
    }

    pub fn at(mut self, resolution: i32, seed: u64) -> Self {
        self.resolution = resolution;
        self.seed = seed;
        self
    }

    pub fn truncated(mut self, t: MajorantTruncation) -> Self {
        self.truncation = Some(t);
        self
    }

    pub fn note(mut self, note: impl AsRef<str>) -> Self {
        if !self.notes.is_empty() {
            self.notes.push(';');
        }
        self.notes.push_str(note.as_ref());
        self
    }
}

fn check_family(family: &[(GridFunction, DyadicCube)]) -> Result<GridSpec> {
    let spec = *family.first().ok_or(Error::InvalidParameter("empty family".into()))?.0.spec();
    for (f, q) in family {
        if *f.spec() != spec {
            return Err(Error::GridMismatch("family members on different grids".into()));
        }
        if q.level() > spec.j_max() {
            return Err(Error::FinerThanGrid { cube: q.to_string(), j_max: spec.j_max() });
        }
        let inside = match q.to_box().intersect(&spec.domain())? {
            Some(b) => f.integrate(&b)?,
            None => 0.0,
        };
        let outside = f.total() - inside;
        if outside > 1e-12 * f.total().max(f64::MIN_POSITIVE) {
            return Err(Error::SupportViolation(outside));
        }
    }
    Ok(spec)
}

fn family_sides(family: &[(GridFunction, DyadicCube)], u: f64) -> Result<(GridFunction, GridFunction)> {
    let spec = check_family(family)?;
    let mut lhs = GridFunction::zeros(spec);
    let mut rhs = GridFunction::zeros(spec);
    for (f, q) in family {
        lhs = lhs.add(f)?;
        let avg = if u == 1.0 { norms::average(f, q)? } else { norms::powered_average(f, q, u)? };
        let chi = match q.to_box().intersect(&spec.domain())? {
            Some(b) => GridFunction::indicator(spec, &b)?,
            None => GridFunction::zeros(spec),
        };
        rhs = rhs.add(&chi.scale(avg)?)?;
    }
    Ok((lhs, rhs))
}

/// `‖Σ f_j‖ / ‖Σ m_{Q_j}(f_j) χ_{Q_j}‖` for `f_j` supported in `Q_j`.
///
/// With `p = q <= 1` the norms are global `L^p` norms; otherwise
/// `0 < q <= p < 1` and the norms are Morrey norms.
pub fn check_averaging(family: &[(GridFunction, DyadicCube)], e: MorreyExponents) -> Result<InequalityReport> {
    let (lhs, rhs) = family_sides(family, 1.0)?;
    if e.p() == e.q() {
        if e.p() > 1.0 {
            return Err(Error::Regime(format!("L^p averaging needs p <= 1, got {}", e.p())));
        }
        let report = InequalityReport::new("prop2.1", norms::lq_norm_total(&lhs, e.p())?, norms::lq_norm_total(&rhs, e.p())?);
        return Ok(report.at(lhs.spec().j_max(), 0));
    }
    if !(e.p() < 1.0) {
        return Err(Error::Regime(format!("Morrey averaging needs q <= p < 1, got p = {}", e.p())));
    }
    Ok(InequalityReport::new("thm2.2", norms::morrey_norm(&lhs, e), norms::morrey_norm(&rhs, e)).at(lhs.spec().j_max(), 0))
}

/// As [`check_averaging`] with `m^{(u)}_{Q_j}` on the right, `0 < q <= 1 <= p < u`.
pub fn check_u_powered_averaging(
    family: &[(GridFunction, DyadicCube)],
    e: MorreyExponents,
    u: f64,
) -> Result<InequalityReport> {
    if !(e.q() <= 1.0 && 1.0 <= e.p() && e.p() < u && u.is_finite()) {
        return Err(Error::Regime(format!("need 0 < q <= 1 <= p < u, got q = {}, p = {}, u = {u}", e.q(), e.p())));
    }
    let (lhs, rhs) = family_sides(family, u)?;
    Ok(InequalityReport::new("thm2.3", norms::morrey_norm(&lhs, e), norms::morrey_norm(&rhs, e)).at(lhs.spec().j_max(), 0))
}

/// Operators whose `M^s_t` boundedness is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorChoice {
    J,
    I,
    MajorantI,
    UPoweredSum,
}

/// `‖op(f1, f2)‖_{M^s_t} / (‖f1‖_{M^{p1}_{q1}} ‖f2‖_{M^{p2}_{q2}})` after
/// checking that `tp` satisfies the hypotheses of `regime`.
pub fn check_boundedness(
    tp: &TheoremParams,
    regime: Regime,
    op: OperatorChoice,
    f1: &GridFunction,
    f2: &GridFunction,
    t: &MajorantTruncation,
) -> Result<InequalityReport> {
    let fits = match op {
        OperatorChoice::J => matches!(regime, Regime::T12 | Regime::T13 | Regime::T14),
        OperatorChoice::I | OperatorChoice::MajorantI => regime == Regime::L25,
        OperatorChoice::UPoweredSum => regime == Regime::L26,
    };
    if !fits {
        return Err(Error::Regime(format!("{op:?} is not covered by {}", regime.label())));
    }
    if !tp.admits(regime) {
        return Err(Error::Regime(format!("parameters violate the hypotheses of {}", regime.label())));
    }
    let rhs = norms::morrey_norm(f1, tp.first()?) * norms::morrey_norm(f2, tp.second()?);
    if rhs == 0.0 {
        return Err(Error::InvalidParameter("zero right-hand side: f1 or f2 vanishes".into()));
    }
    let p = OperatorParams::new(tp.alpha, tp.n)?;
    let value = match op {
        OperatorChoice::J => operators::j_alpha(f1, f2, &p)?,
        OperatorChoice::I => operators::i_alpha(f1, f2, &p)?,
        OperatorChoice::MajorantI => operators::dyadic_majorant_i(f1, f2, &p, t)?,
        OperatorChoice::UPoweredSum => {
            operators::u_powered_cube_sum(f1, f2, &p, tp.u.expect("admitted by L2.6"), t)?
        }
    };
    let lhs = norms::morrey_norm(&value, tp.source());
    let mut report = InequalityReport::new(regime.label(), lhs, rhs).at(f1.spec().j_max(), 0);
    if op != OperatorChoice::J && op != OperatorChoice::I {
        report = report.truncated(*t);
    }
    Ok(report)
}

/// Cellwise comparison of `lhs <= C rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCheck {
    /// `max lhs/rhs` over cells with `rhs > 0`.
    pub max_ratio: f64,
    pub argmax: Option<usize>,
    /// Cells with `lhs > 0 = rhs`.
    pub violations: usize,
    pub compared: usize,
}

pub fn check_pointwise(lhs: &GridFunction, rhs: &GridFunction) -> Result<PointwiseCheck> {
    if lhs.spec() != rhs.spec() {
        return Err(Error::GridMismatch("pointwise sides on different grids".into()));
    }
    let mut out = PointwiseCheck { max_ratio: 0.0, argmax: None, violations: 0, compared: 0 };
    for (i, (a, b)) in lhs.values().iter().zip(rhs.values()).enumerate() {
        if *b > 0.0 {
            out.compared += 1;
            let r = a / b;
            if r > out.max_ratio || out.argmax.is_none() {
                out.max_ratio = out.max_ratio.max(r);
                out.argmax = Some(i);
            }
        } else if *a > 0.0 {
            out.violations += 1;
        }
    }
    Ok(out)
}

impl PointwiseCheck {
    pub fn into_report(self, check_id: &str, lhs: &GridFunction, rhs: &GridFunction) -> InequalityReport {
        let (a, b) = self.argmax.map_or((0.0, 0.0), |i| (lhs.values()[i], rhs.values()[i]));
        let mut report = InequalityReport::new(check_id, a, b).at(lhs.spec().j_max(), 0);
        report.ratio = if self.violations > 0 { f64::INFINITY } else { self.max_ratio };
        report.degenerate = self.argmax.is_none() && self.violations == 0;
        report.note(format!("violations={}", self.violations))
    }
}

/// `‖M^{(η)} f‖_{M^p_q} / ‖f‖_{M^p_q}`.
pub fn check_maximal(f: &GridFunction, e: MorreyExponents, eta: f64) -> Result<InequalityReport> {
    if !(eta > 0.0 && eta < e.q()) {
        return Err(Error::Regime(format!("need 0 < eta < q, got eta = {eta}, q = {}", e.q())));
    }
    let m = norms::maximal(f, eta)?;
    Ok(InequalityReport::new("maximal", norms::morrey_norm(&m, e), norms::morrey_norm(f, e)).at(f.spec().j_max(), 0))
}

/// Ratios for the two halves of the Hedberg split at one cell and cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedbergSample {
    pub cell: usize,
    pub l: f64,
    pub s1: f64,
    pub s2: f64,
    /// `L^α M^{(u)}f1(x) M^{(u)}f2(x)`.
    pub bound1: f64,
    /// `L^{-n/s} ‖f1‖ ‖f2‖`.
    pub bound2: f64,
    pub total: f64,
}

/// Precomputed pieces for sampling the Hedberg bounds of one pair.
pub struct HedbergHarness {
    split: HedbergSplit,
    maximal: Vec<f64>,
    norm_product: f64,
    tp: TheoremParams,
}

impl HedbergHarness {
    pub fn new(tp: &TheoremParams, f1: &GridFunction, f2: &GridFunction, t: &MajorantTruncation) -> Result<Self> {
        if !tp.admits(Regime::L26) {
            return Err(Error::Regime("the Hedberg split needs s < u < min(q1, q2)".into()));
        }
        let u = tp.u.expect("admitted");
        let p = OperatorParams::new(tp.alpha, tp.n)?;
        let split = HedbergSplit::new(f1, f2, &p, u, t)?;
        let m1 = norms::maximal(f1, u)?;
        let m2 = norms::maximal(f2, u)?;
        let maximal = m1.values().iter().zip(m2.values()).map(|(a, b)| a * b).collect();
        let norm_product = norms::morrey_norm(f1, tp.first()?) * norms::morrey_norm(f2, tp.second()?);
        Ok(Self { split, maximal, norm_product, tp: *tp })
    }

    pub fn sample(&self, cell: usize, l: f64) -> Result<HedbergSample> {
        let (s1, s2) = self.split.split(cell, l)?;
        let n = self.tp.n as f64;
        Ok(HedbergSample {
            cell,
            l,
            s1,
            s2,
            bound1: l.powf(self.tp.alpha) * self.maximal[cell],
            bound2: l.powf(-n / self.tp.s) * self.norm_product,
            total: self.split.total(cell),
        })
    }

    /// The full cube sum at `cell`.
    pub fn total(&self, cell: usize) -> f64 {
        self.split.total(cell)
    }

    /// The balancing cutoff at `cell`; infinite where the maximal product vanishes.
    pub fn optimal_l(&self, cell: usize) -> Result<f64> {
        operators::hedberg_optimal_l(self.norm_product, self.maximal[cell], self.tp.p, self.tp.n)
    }

    /// At the balancing cutoff `L*` only dyadic side lengths separate the two
    /// sums, so the split is taken at the largest dyadic `L <= L*`. Returns the
    /// sample there and `max(bound1, bound2) / min(bound1, bound2)`.
    pub fn balanced(&self, cell: usize) -> Result<Option<(HedbergSample, f64)>> {
        let l_star = self.optimal_l(cell)?;
        if !l_star.is_finite() || l_star <= 0.0 || self.norm_product == 0.0 {
            return Ok(None);
        }
        let l = 2f64.powi(l_star.log2().floor() as i32);
        let s = self.sample(cell, l)?;
        let spread = s.bound1.max(s.bound2) / s.bound1.min(s.bound2);
        Ok(Some((s, spread)))
    }
}

/// Max/median of a check's ratios over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSummary {
    pub check_id: String,
    pub count: usize,
    pub degenerate: usize,
    pub max: f64,
    pub median: f64,
    pub argmax_item: String,
    /// `|max' - max| / max` for the same corpus one generation finer.
    pub stability_delta: Option<f64>,
}

/// Fold reports of one check into a summary. Degenerate reports are counted
/// but excluded; ties for the maximum go to the smallest item id.
pub fn estimate_constant(check_id: &str, reports: &[InequalityReport], finer: Option<&[InequalityReport]>) -> ConstantSummary {
    let mut live: Vec<&InequalityReport> = reports.iter().filter(|r| !r.degenerate).collect();
    live.sort_by(|a, b| a.ratio.total_cmp(&b.ratio).then_with(|| b.corpus_item_id.cmp(&a.corpus_item_id)));
    let max = live.last().map_or(0.0, |r| r.ratio);
    let argmax_item = live.last().map_or(String::new(), |r| r.corpus_item_id.clone());
    let median = match live.len() {
        0 => 0.0,
        k if k % 2 == 1 => live[k / 2].ratio,
        k => 0.5 * (live[k / 2 - 1].ratio + live[k / 2].ratio),
    };
    let stability_delta = finer.map(|f| {
        let other = estimate_constant(check_id, f, None).max;
        if max == 0.0 && other == 0.0 { 0.0 } else { (other - max).abs() / max }
    });
    ConstantSummary {
        check_id: check_id.to_string(),
        count: reports.len(),
        degenerate: reports.len() - live.len(),
        max,
        median,
        argmax_item,
        stability_delta,
    }
}
