//! Run configuration: a single JSON document, overridable by flags.
//!
//! Precedence is flags > config file > built-in defaults. Every field has a
//! default, so `{}` is a valid configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use morrey::corpus::CorpusMix;
use morrey::verifier::{solve_params, TheoremParams};
use morrey::{GridSpec, MajorantTruncation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MORREY_OUT_DIR";

/// Largest `j_max + J0` for one- and two-dimensional grids.
pub const RESOLUTION_CAP_1D: i32 = 14;
pub const RESOLUTION_CAP_2D: i32 = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

/// The checks a run can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckId {
    #[serde(rename = "prop2.1")]
    Prop21,
    #[serde(rename = "thm2.2")]
    Thm22,
    #[serde(rename = "thm2.3")]
    Thm23,
    #[serde(rename = "lem2.4")]
    Lem24,
    #[serde(rename = "ialpha_majorant")]
    IalphaMajorant,
    #[serde(rename = "lem2.5")]
    Lem25,
    #[serde(rename = "lem2.6")]
    Lem26,
    #[serde(rename = "hedberg")]
    Hedberg,
    #[serde(rename = "thm1.2")]
    Thm12,
    #[serde(rename = "thm1.3")]
    Thm13,
    #[serde(rename = "thm1.4")]
    Thm14,
    #[serde(rename = "scaling")]
    Scaling,
    #[serde(rename = "maximal")]
    Maximal,
}

impl CheckId {
    pub const ALL: [CheckId; 13] = [
        CheckId::Prop21,
        CheckId::Thm22,
        CheckId::Thm23,
        CheckId::Lem24,
        CheckId::IalphaMajorant,
        CheckId::Lem25,
        CheckId::Lem26,
        CheckId::Hedberg,
        CheckId::Thm12,
        CheckId::Thm13,
        CheckId::Thm14,
        CheckId::Scaling,
        CheckId::Maximal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::Prop21 => "prop2.1",
            CheckId::Thm22 => "thm2.2",
            CheckId::Thm23 => "thm2.3",
            CheckId::Lem24 => "lem2.4",
            CheckId::IalphaMajorant => "ialpha_majorant",
            CheckId::Lem25 => "lem2.5",
            CheckId::Lem26 => "lem2.6",
            CheckId::Hedberg => "hedberg",
            CheckId::Thm12 => "thm1.2",
            CheckId::Thm13 => "thm1.3",
            CheckId::Thm14 => "thm1.4",
            CheckId::Scaling => "scaling",
            CheckId::Maximal => "maximal",
        }
    }

    /// Checks that evaluate `I_α` itself and therefore need `n = 1`.
    pub fn needs_i_alpha(&self) -> bool {
        matches!(self, CheckId::IalphaMajorant | CheckId::Lem25)
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CheckId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| invalid("checks", format!("unknown check `{s}`")))
    }
}

/// Inputs of `solve_params`; `u` overrides the proposed geometric mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamTuple {
    pub alpha: f64,
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
}

impl ParamTuple {
    pub fn symmetric(alpha: f64, p: f64, q: f64) -> Self {
        Self { alpha, p1: p, q1: q, p2: p, q2: q, u: None }
    }

    pub fn solve(&self, n: usize) -> morrey::Result<TheoremParams> {
        let tp = solve_params(n, self.alpha, self.p1, self.q1, self.p2, self.q2)?;
        Ok(match self.u {
            Some(u) => tp.with_u(u),
            None => tp,
        })
    }

    /// Short label used inside check ids and notes.
    pub fn label(&self) -> String {
        let mut s = format!("a={};p1={};q1={};p2={};q2={}", self.alpha, self.p1, self.q1, self.p2, self.q2);
        if let Some(u) = self.u {
            s.push_str(&format!(";u={u}"));
        }
        s
    }
}

/// `(p, q)` for the averaging checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingExponents {
    pub p: f64,
    pub q: f64,
}

/// `(p, q, u)` for the u-powered averaging check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoweredExponents {
    pub p: f64,
    pub q: f64,
    pub u: f64,
}

/// Exponents for the maximal-operator check; each `η = fraction · q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaximalConfig {
    pub p: f64,
    pub q: f64,
    pub eta_fractions: Vec<f64>,
}

impl Default for MaximalConfig {
    fn default() -> Self {
        Self { p: 1.5, q: 1.2, eta_fractions: vec![0.5, 0.75] }
    }
}

/// Explicit level range for the majorants and cube sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationOverride {
    pub j_min: i32,
    pub j_max_sum: i32,
}

/// Cartesian grid of parameter tuples for `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub p1: Vec<f64>,
    pub q1: Vec<f64>,
    pub p2: Vec<f64>,
    pub q2: Vec<f64>,
}

impl SweepGrid {
    /// All combinations with `1 < q_j <= p_j` that `solve_params` accepts,
    /// in lexicographic order of the axes.
    pub fn tuples(&self, n: usize) -> Vec<ParamTuple> {
        let mut out = Vec::new();
        for &alpha in &self.alpha {
            for &p1 in &self.p1 {
                for &q1 in &self.q1 {
                    for &p2 in &self.p2 {
                        for &q2 in &self.q2 {
                            let t = ParamTuple { alpha, p1, q1, p2, q2, u: None };
                            if t.solve(n).is_ok() {
                                out.push(t);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dimension: usize,
    pub j0: i32,
    pub j_max: i32,
    pub seed: u64,
    /// Items for the pointwise and maximal checks.
    pub corpus_size: usize,
    /// Pairs for the boundedness, Hedberg and scaling checks.
    pub pair_count: usize,
    /// Families per exponent choice for the averaging checks.
    pub family_count: usize,
    /// Resolution of the `I_α` grid; defaults to a 2^8-cell grid.
    pub ialpha_j_max: Option<i32>,
    pub params: Vec<ParamTuple>,
    /// `α` for the `J_α` pointwise domination.
    pub alpha_j: f64,
    /// `α` for the `I_α` pointwise domination.
    pub alpha_i: f64,
    pub averaging: Vec<AveragingExponents>,
    pub powered_averaging: Vec<PoweredExponents>,
    pub maximal: MaximalConfig,
    /// Random `(x, L)` samples per pair in the Hedberg check.
    pub hedberg_samples: usize,
    /// Pairs used for the dilation and scalar invariance checks.
    pub scaling_pairs: usize,
    pub scaling_dilations: Vec<i32>,
    pub scaling_scalar: f64,
    /// Also rerun at `j_max + 1` and with the truncation widened by one level.
    pub stability: bool,
    pub checks: Vec<CheckId>,
    pub truncation: Option<TruncationOverride>,
    pub out_dir: Option<PathBuf>,
    pub sweep: Option<SweepGrid>,
    /// Items of the indicator corpus compared against refined grids by `oracle`.
    pub oracle_items: usize,
    /// Relative weights of indicators, power laws and step functions.
    pub corpus_mix: CorpusMix,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            j0: 2,
            j_max: 9,
            seed: 1,
            corpus_size: 200,
            pair_count: 100,
            family_count: 100,
            ialpha_j_max: None,
            params: vec![
                ParamTuple::symmetric(0.1, 4.0, 3.0),
                ParamTuple::symmetric(1.0 / 6.0, 1.5, 1.2),
                ParamTuple::symmetric(3.0 / 35.0, 2.5, 1.5),
            ],
            alpha_j: 0.5,
            alpha_i: 1.5,
            averaging: vec![
                AveragingExponents { p: 0.9, q: 0.9 },
                AveragingExponents { p: 0.9, q: 0.5 },
                AveragingExponents { p: 0.7, q: 0.3 },
            ],
            powered_averaging: vec![
                PoweredExponents { p: 1.2, q: 0.8, u: 2.0 },
                PoweredExponents { p: 1.5, q: 1.0, u: 3.0 },
            ],
            maximal: MaximalConfig::default(),
            hedberg_samples: 50,
            scaling_pairs: 10,
            scaling_dilations: vec![-2, -1, 1, 2],
            scaling_scalar: 3.7,
            stability: true,
            checks: CheckId::ALL.to_vec(),
            truncation: None,
            out_dir: None,
            sweep: None,
            oracle_items: 20,
            corpus_mix: CorpusMix::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub j0: Option<i32>,
    pub j_max: Option<i32>,
    pub dimension: Option<usize>,
    pub checks: Option<Vec<CheckId>>,
    pub out_dir: Option<PathBuf>,
    pub truncation: Option<TruncationOverride>,
    pub no_stability: bool,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        // serde_json reports "... at line L column C", naming the offending field.
        serde_json::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.j0 {
            self.j0 = v;
        }
        if let Some(v) = o.j_max {
            self.j_max = v;
        }
        if let Some(v) = o.dimension {
            self.dimension = v;
        }
        if let Some(v) = &o.checks {
            self.checks = v.clone();
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = Some(v.clone());
        }
        if let Some(v) = o.truncation {
            self.truncation = Some(v);
        }
        if o.no_stability {
            self.stability = false;
        }
    }

    /// Output directory: config/flag, then the environment, then `morrey-out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("morrey-out"))
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::new(self.dimension, self.j0, self.j_max).map_err(|e| invalid("j_max", e.to_string()))
    }

    pub fn ialpha_grid(&self) -> Result<GridSpec, ConfigError> {
        let j = self.ialpha_j_max.unwrap_or(7 - self.j0);
        GridSpec::new(1, self.j0, j).map_err(|e| invalid("ialpha_j_max", e.to_string()))
    }

    /// Truncation for `spec`: the override if given, else the default. The
    /// override's upper end is shifted along with the resolution.
    pub fn truncation_for(&self, spec: &GridSpec) -> Result<MajorantTruncation, ConfigError> {
        match self.truncation {
            None => Ok(MajorantTruncation::default_for(spec)),
            Some(t) => {
                let shift = spec.j_max() - self.j_max.min(spec.j_max());
                MajorantTruncation::new(t.j_min, t.j_max_sum + shift).map_err(|e| invalid("truncation", e.to_string()))
            }
        }
    }

    pub fn wants(&self, c: CheckId) -> bool {
        self.checks.contains(&c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let cap = match self.dimension {
            1 => RESOLUTION_CAP_1D,
            2 => RESOLUTION_CAP_2D,
            n => return Err(invalid("dimension", format!("n = {n}; expected 1 or 2"))),
        };
        if self.j0 < 0 {
            return Err(invalid("j0", format!("J0 = {} must be >= 0", self.j0)));
        }
        if self.j_max < 2 {
            return Err(invalid("j_max", format!("j_max = {} must be >= 2", self.j_max)));
        }
        let top = self.j_max + self.j0 + i32::from(self.stability);
        if top > cap {
            return Err(invalid(
                "j_max",
                format!(
                    "j_max + J0 = {} exceeds the cap {cap} for n = {}{}",
                    self.j_max + self.j0,
                    self.dimension,
                    if self.stability { " (stability reruns need one spare level)" } else { "" }
                ),
            ));
        }
        self.grid()?;
        if self.checks.iter().any(CheckId::needs_i_alpha) {
            if self.dimension != 1 {
                return Err(invalid("checks", "ialpha_majorant and lem2.5 need dimension 1"));
            }
            let g = self.ialpha_grid()?;
            let cells = g.cell_count() << u32::from(self.stability);
            if cells > morrey::operators::I_ALPHA_MAX_CELLS {
                return Err(invalid(
                    "ialpha_j_max",
                    format!("{cells} cells exceed the I_alpha cap {}", morrey::operators::I_ALPHA_MAX_CELLS),
                ));
            }
        }
        if let Some(t) = self.truncation {
            MajorantTruncation::new(t.j_min, t.j_max_sum).map_err(|e| invalid("truncation", e.to_string()))?;
        }
        for (i, t) in self.params.iter().enumerate() {
            t.solve(self.dimension).map_err(|e| invalid(format!("params[{i}]"), e.to_string()))?;
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} must be positive")))
            }
        };
        positive("alpha_j", self.alpha_j)?;
        positive("alpha_i", self.alpha_i)?;
        positive("scaling_scalar", self.scaling_scalar)?;
        if self.alpha_j >= self.dimension as f64 {
            return Err(invalid("alpha_j", "J_alpha needs alpha < n"));
        }
        if self.alpha_i >= 2.0 * self.dimension as f64 {
            return Err(invalid("alpha_i", "I_alpha needs alpha < 2n"));
        }
        for (i, a) in self.averaging.iter().enumerate() {
            let ok = if a.p == a.q { a.p > 0.0 && a.p <= 1.0 } else { 0.0 < a.q && a.q < a.p && a.p < 1.0 };
            if !ok {
                return Err(invalid(format!("averaging[{i}]"), "need p = q <= 1 or 0 < q < p < 1"));
            }
        }
        for (i, a) in self.powered_averaging.iter().enumerate() {
            if !(0.0 < a.q && a.q <= 1.0 && 1.0 <= a.p && a.p < a.u && a.u.is_finite()) {
                return Err(invalid(format!("powered_averaging[{i}]"), "need 0 < q <= 1 <= p < u"));
            }
        }
        let m = &self.maximal;
        if !(0.0 < m.q && m.q <= m.p && m.p.is_finite()) {
            return Err(invalid("maximal", "need 0 < q <= p"));
        }
        if m.eta_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(invalid("maximal.eta_fractions", "each fraction must lie in (0, 1) so that eta < q"));
        }
        let w = [self.corpus_mix.indicator, self.corpus_mix.power_law, self.corpus_mix.step];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("corpus_mix", "weights must be non-negative with a positive sum"));
        }
        if self.scaling_dilations.iter().any(|m| m.abs() > self.j_max.min(8)) {
            return Err(invalid("scaling_dilations", "dilations must stay within the grid resolution"));
        }
        Ok(())
    }
}
