//! Sectioned `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! [run]
//! name = demo
//! seed = 7
//!
//! [innovation]
//! kind = pareto-scalar
//! alpha = 1.5
//! ```
//!
//! Sections: `[run]`, `[innovation]`, `[coefficients]`, `[series]`,
//! `[estimators]`. Keys are lowercase snake case, values run to the end of
//! the line or the first `#`. Lists are comma separated and may be empty.
//! Parsing reports every problem at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cadlag::Grid;
use crate::coefficients::{CoefficientFamily, MultiplierLaw, Profile, MAX_TERMS};
use crate::innovations::{InnovationSpec, TailModel};
use crate::series::{SeriesSpec, Truncation};

pub const SECTIONS: [&str; 5] = ["run", "innovation", "coefficients", "series", "estimators"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All problems found in one config text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Series panel followed by the tail estimators.
    Series,
    /// Product `Y Z` against the Breiman limit.
    Breiman,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Series => "series",
            Mode::Breiman => "breiman",
        }
    }
}

/// Coefficient section as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientConfig {
    Geometric { ratio: f64, profile: Profile },
    Sre { law: MultiplierLaw, profile: Profile },
    /// Driven by the configured innovation law.
    Bilinear { coefficient: f64, squared: bool },
    /// `Ψ_1 = φ`, all later terms zero, so `X = φ Z_1`.
    SingleTerm { profile: Profile },
    /// Breiman mode only.
    Multiplier { law: MultiplierLaw },
}

impl CoefficientConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            CoefficientConfig::Geometric { .. } => "geometric",
            CoefficientConfig::Sre { .. } => "sre",
            CoefficientConfig::Bilinear { .. } => "bilinear",
            CoefficientConfig::SingleTerm { .. } => "single-term",
            CoefficientConfig::Multiplier { .. } => "multiplier",
        }
    }

    /// Kind name, with the bilinear variant spelled out.
    pub fn variant(&self) -> String {
        match self {
            CoefficientConfig::Bilinear { squared: true, .. } => "bilinear (squared innovations)".into(),
            CoefficientConfig::Bilinear { squared: false, .. } => "bilinear (plain innovations)".into(),
            other => other.kind_name().into(),
        }
    }

    /// `None` for `multiplier`.
    pub fn family(&self, grid: Grid, innovation: &InnovationSpec) -> crate::Result<Option<CoefficientFamily>> {
        Ok(Some(match *self {
            CoefficientConfig::Geometric { ratio, profile } => CoefficientFamily::Geometric { ratio, profile },
            CoefficientConfig::Sre { law, profile } => CoefficientFamily::SreProduct {
                multiplier: law,
                profile,
            },
            CoefficientConfig::Bilinear { coefficient, squared } => CoefficientFamily::BilinearProduct {
                coefficient,
                driver: innovation.clone(),
                squared,
            },
            CoefficientConfig::SingleTerm { profile } => CoefficientFamily::FiniteList {
                paths: vec![profile.path(grid)?],
            },
            CoefficientConfig::Multiplier { .. } => return Ok(None),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Hill order-statistic count; `⌈√N⌉` when absent.
    pub k: Option<usize>,
    /// `n` in `a_n`; `N / k` when absent.
    pub normalizer: Option<usize>,
    /// Spectral exceedance count; spectral block skipped when absent.
    pub spectral_k: Option<usize>,
    pub r_grid: Vec<f64>,
    /// Strictly decreasing; modulus block skipped when empty.
    pub delta_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    /// Breiman thresholds.
    pub x_grid: Vec<f64>,
    /// Time point of the marginal tail check.
    pub t: f64,
    /// Upper-tail levels of the marginal check; skipped when empty.
    pub levels: Vec<f64>,
    pub scale_s: f64,
    pub scale_quantile: f64,
    pub min_exceedances: usize,
    /// Bootstrap resamples for spectral bands; 0 disables them.
    pub bootstrap: usize,
    pub tail_constant_samples: usize,
    pub modulus_fraction: f64,
    pub modulus_floor: f64,
    /// Argmax-location bins of the pizza-slice table.
    pub angle_bins: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            k: None,
            normalizer: None,
            spectral_k: None,
            r_grid: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            delta_grid: Vec::new(),
            epsilon_grid: Vec::new(),
            x_grid: vec![20.0, 50.0],
            t: 1.0,
            levels: Vec::new(),
            scale_s: 2.0,
            scale_quantile: 0.995,
            min_exceedances: 100,
            bootstrap: 0,
            tail_constant_samples: 10_000,
            modulus_fraction: 0.1,
            modulus_floor: 0.05,
            angle_bins: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    /// Panel size, or sample size in Breiman mode.
    pub n: usize,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub innovation: InnovationSpec,
    pub coefficients: CoefficientConfig,
    pub grid: Grid,
    pub truncation: Truncation,
    pub estimators: EstimatorConfig,
}

impl ExperimentConfig {
    /// Series spec for series mode; `None` in Breiman mode.
    pub fn series_spec(&self) -> crate::Result<Option<SeriesSpec>> {
        let Some(family) = self.coefficients.family(self.grid, &self.innovation)? else {
            return Ok(None);
        };
        Ok(Some(SeriesSpec::new(self.grid, self.innovation.clone(), family, self.truncation)))
    }

    pub fn render(&self) -> String {
        render(self)
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Reader {
    sections: BTreeMap<&'static str, BTreeMap<String, Entry>>,
    used: Vec<(&'static str, String)>,
    errors: Vec<ConfigError>,
}

fn is_key(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z')) && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

impl Reader {
    fn scan(text: &str) -> Reader {
        let mut r = Reader {
            sections: SECTIONS.iter().map(|s| (*s, BTreeMap::new())).collect(),
            used: Vec::new(),
            errors: Vec::new(),
        };
        let mut current: Option<&'static str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                match SECTIONS.iter().find(|s| **s == name) {
                    Some(s) => current = Some(s),
                    None => {
                        r.err(line, format!("unknown section [{name}]"));
                        current = None;
                    }
                }
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                r.err(line, format!("expected `key = value`, found `{content}`"));
                continue;
            };
            let key = key.trim();
            if !is_key(key) {
                r.err(line, format!("key `{key}` is not lowercase snake case"));
                continue;
            }
            let Some(section) = current else {
                r.err(line, format!("key `{key}` outside a known section"));
                continue;
            };
            let map = r.sections.get_mut(section).expect("known section");
            if let Some(prev) = map.get(key) {
                let first = prev.line;
                r.err(line, format!("duplicate key `{key}` in [{section}] (lines {first} and {line})"));
                continue;
            }
            map.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        r
    }

    fn err(&mut self, line: usize, message: String) {
        self.errors.push(ConfigError {
            line: Some(line),
            message,
        });
    }

    fn has(&self, section: &'static str, key: &str) -> bool {
        self.sections[section].contains_key(key)
    }

    /// Raw value and line, marking the key as consumed.
    fn raw(&mut self, section: &'static str, key: &str) -> Option<(String, usize)> {
        let e = self.sections[section].get(key)?;
        let out = (e.value.clone(), e.line);
        self.used.push((section, key.to_string()));
        Some(out)
    }

    fn missing(&mut self, section: &'static str, key: &str) {
        self.errors.push(ConfigError {
            line: None,
            message: format!("missing required key `{key}` in [{section}]"),
        });
    }

    fn typed<T>(
        &mut self,
        section: &'static str,
        key: &str,
        default: Option<T>,
        parse: impl Fn(&str) -> Option<T>,
        type_name: &str,
    ) -> Option<T> {
        match self.raw(section, key) {
            None => {
                if default.is_none() {
                    self.missing(section, key);
                }
                default
            }
            Some((v, line)) => match parse(&v) {
                Some(x) => Some(x),
                None => {
                    self.err(line, format!("`{key}` = `{v}` is not {type_name}"));
                    None
                }
            },
        }
    }

    fn checked<T: Copy + fmt::Display>(
        &mut self,
        section: &'static str,
        key: &str,
        value: Option<T>,
        ok: impl Fn(T) -> bool,
        constraint: &str,
    ) -> Option<T> {
        let v = value?;
        if ok(v) {
            return Some(v);
        }
        let line = self.sections[section].get(key).map(|e| e.line);
        self.errors.push(ConfigError {
            line,
            message: format!("`{key}` = {v} violates {constraint}"),
        });
        None
    }

    fn float(
        &mut self,
        section: &'static str,
        key: &str,
        default: Option<f64>,
        ok: impl Fn(f64) -> bool,
        constraint: &str,
    ) -> Option<f64> {
        let v = self.typed(section, key, default, parse_f64, "a finite number");
        self.checked(section, key, v, ok, constraint)
    }

    fn uint(
        &mut self,
        section: &'static str,
        key: &str,
        default: Option<usize>,
        ok: impl Fn(usize) -> bool,
        constraint: &str,
    ) -> Option<usize> {
        let v = self.typed(section, key, default, |s| s.parse().ok(), "a nonnegative integer");
        self.checked(section, key, v, ok, constraint)
    }

    fn opt_uint(
        &mut self,
        section: &'static str,
        key: &str,
        ok: impl Fn(usize) -> bool,
        constraint: &str,
    ) -> Result<Option<usize>, ()> {
        if !self.has(section, key) {
            return Ok(None);
        }
        self.uint(section, key, None, ok, constraint).map(Some).ok_or(())
    }

    fn list(
        &mut self,
        section: &'static str,
        key: &str,
        default: Vec<f64>,
        ok: impl Fn(&[f64]) -> bool,
        constraint: &str,
    ) -> Option<Vec<f64>> {
        let v = self.typed(section, key, Some(default), parse_list, "a comma-separated number list")?;
        if ok(&v) {
            return Some(v);
        }
        let line = self.sections[section].get(key).map(|e| e.line);
        self.errors.push(ConfigError {
            line,
            message: format!("`{key}` violates {constraint}"),
        });
        None
    }

    fn word(&mut self, section: &'static str, key: &str, default: Option<&str>, choices: &[&str]) -> Option<String> {
        let v = self.typed(section, key, default.map(str::to_string), |s| Some(s.to_string()), "")?;
        if choices.contains(&v.as_str()) {
            return Some(v);
        }
        let line = self.sections[section].get(key).map(|e| e.line);
        self.errors.push(ConfigError {
            line,
            message: format!("`{key}` = `{v}` is not one of {}", choices.join(", ")),
        });
        None
    }

    fn text(&mut self, section: &'static str, key: &str) -> Option<String> {
        let (v, line) = self.raw(section, key)?;
        if v.is_empty() {
            self.err(line, format!("`{key}` must not be empty"));
            return None;
        }
        Some(v)
    }

    fn unknown_keys(&mut self) {
        let mut extra = Vec::new();
        for (section, map) in &self.sections {
            for (key, entry) in map {
                if !self.used.iter().any(|(s, k)| s == section && k == key) {
                    extra.push(ConfigError {
                        line: Some(entry.line),
                        message: format!("unknown key `{key}` in [{section}]"),
                    });
                }
            }
        }
        self.errors.extend(extra);
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|p| parse_f64(p.trim())).collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn positive(v: f64) -> bool {
    v > 0.0
}

const INNOVATION_KINDS: [&str; 5] = ["pareto-scalar", "stable-scalar", "compound-poisson", "single-jump", "constant"];
const COEFFICIENT_KINDS: [&str; 5] = ["geometric", "sre", "bilinear", "single-term", "multiplier"];

fn read_tail(r: &mut Reader) -> Option<TailModel> {
    const S: &str = "innovation";
    let alpha = r.float(S, "alpha", None, positive, "alpha > 0");
    let p = r.float(S, "p", Some(1.0), |v| (0.0..=1.0).contains(&v), "0 <= p <= 1");
    let c = match (r.has(S, "c"), r.has(S, "scale")) {
        (true, true) => {
            let line = r.sections[S]["scale"].line;
            r.raw(S, "scale");
            r.raw(S, "c");
            r.err(line, "give either `c` or `scale`, not both".into());
            None
        }
        (false, true) => {
            let scale = r.float(S, "scale", None, positive, "scale > 0");
            alpha.zip(scale).map(|(a, s)| s.powf(a))
        }
        _ => r.float(S, "c", Some(1.0), positive, "c > 0"),
    };
    Some(TailModel {
        alpha: alpha?,
        c: c?,
        p: p?,
    })
}

fn read_innovation(r: &mut Reader) -> Option<InnovationSpec> {
    const S: &str = "innovation";
    let kind = r.word(S, "kind", None, &INNOVATION_KINDS)?;
    match kind.as_str() {
        "pareto-scalar" => read_tail(r).map(|tail| InnovationSpec::ParetoScalar { tail }),
        "single-jump" => read_tail(r).map(|tail| InnovationSpec::SingleJump { tail }),
        "compound-poisson" => {
            let rate = r.float(S, "rate", None, positive, "rate > 0");
            let tail = read_tail(r);
            Some(InnovationSpec::CompoundPoisson {
                rate: rate?,
                tail: tail?,
            })
        }
        "stable-scalar" => {
            let alpha = r.float(S, "alpha", None, |a| a > 0.0 && a <= 2.0, "0 < alpha <= 2");
            let beta = r.float(S, "beta", Some(0.0), |b| (-1.0..=1.0).contains(&b), "-1 <= beta <= 1");
            Some(InnovationSpec::StableScalar {
                alpha: alpha?,
                beta: beta?,
            })
        }
        _ => r
            .float(S, "value", None, |_| true, "")
            .map(|value| InnovationSpec::Constant { value }),
    }
}

fn read_profile(r: &mut Reader) -> Option<Profile> {
    const S: &str = "coefficients";
    let intercept = r.float(S, "intercept", Some(1.0), |_| true, "");
    let slope = r.float(S, "slope", Some(0.0), |_| true, "");
    Some(Profile::Affine {
        intercept: intercept?,
        slope: slope?,
    })
}

fn read_law(r: &mut Reader) -> Option<MultiplierLaw> {
    const S: &str = "coefficients";
    let law = r.word(S, "law", None, &["uniform", "constant"])?;
    if law == "constant" {
        return r
            .float(S, "value", None, |_| true, "")
            .map(|value| MultiplierLaw::Constant { value });
    }
    let lower = r.float(S, "lower", None, |_| true, "");
    let upper = r.float(S, "upper", None, |_| true, "");
    let (lower, upper) = (lower?, upper?);
    if lower >= upper {
        let line = r.sections[S].get("upper").map(|e| e.line);
        r.errors.push(ConfigError {
            line,
            message: format!("`lower` = {lower} must be below `upper` = {upper}"),
        });
        return None;
    }
    Some(MultiplierLaw::Uniform { lower, upper })
}

fn read_coefficients(r: &mut Reader) -> Option<CoefficientConfig> {
    const S: &str = "coefficients";
    let kind = r.word(S, "kind", None, &COEFFICIENT_KINDS)?;
    match kind.as_str() {
        "geometric" => {
            let ratio = r.float(S, "ratio", None, |a| a.abs() < 1.0, "|ratio| < 1");
            let profile = read_profile(r);
            Some(CoefficientConfig::Geometric {
                ratio: ratio?,
                profile: profile?,
            })
        }
        "sre" => {
            let law = read_law(r);
            let profile = read_profile(r);
            Some(CoefficientConfig::Sre {
                law: law?,
                profile: profile?,
            })
        }
        "bilinear" => {
            let coefficient = r.float(S, "coefficient", None, |_| true, "");
            let squared = r.typed(S, "squared", Some(false), parse_bool, "true or false");
            Some(CoefficientConfig::Bilinear {
                coefficient: coefficient?,
                squared: squared?,
            })
        }
        "single-term" => read_profile(r).map(|profile| CoefficientConfig::SingleTerm { profile }),
        _ => read_law(r).map(|law| CoefficientConfig::Multiplier { law }),
    }
}

fn read_truncation(r: &mut Reader) -> Option<Truncation> {
    const S: &str = "series";
    let kind = r.word(S, "truncation", Some("adaptive"), &["fixed", "adaptive"])?;
    let cap = |v: usize| (1..=MAX_TERMS).contains(&v);
    if kind == "fixed" {
        return r
            .uint(S, "terms", Some(50), cap, "1 <= terms <= 10000")
            .map(|terms| Truncation::Fixed { terms });
    }
    let tolerance = r.float(S, "tolerance", Some(1e-9), positive, "tolerance > 0");
    let max_terms = r.uint(S, "max_terms", Some(1000), cap, "1 <= max_terms <= 10000");
    Some(Truncation::Adaptive {
        tolerance: tolerance?,
        max_terms: max_terms?,
    })
}

fn ascending_positive(v: &[f64]) -> bool {
    v.iter().all(|&x| x > 0.0) && v.windows(2).all(|w| w[0] < w[1])
}

fn read_estimators(r: &mut Reader) -> Option<EstimatorConfig> {
    const S: &str = "estimators";
    let d = EstimatorConfig::default();
    let k = r.opt_uint(S, "k", |v| v >= 1, "k >= 1");
    let normalizer = r.opt_uint(S, "normalizer", |v| v >= 2, "normalizer >= 2");
    let spectral_k = r.opt_uint(S, "spectral_k", |v| v >= 30, "spectral_k >= 30");
    let r_grid = r.list(S, "r_grid", d.r_grid, ascending_positive, "positive strictly ascending values");
    let delta_grid = r.list(
        S,
        "delta_grid",
        d.delta_grid,
        |v| v.iter().all(|&x| x > 0.0 && x <= 1.0) && v.windows(2).all(|w| w[0] > w[1]),
        "strictly decreasing values in (0, 1]",
    );
    let epsilon_grid = r.list(S, "epsilon_grid", d.epsilon_grid, |v| v.iter().all(|&x| x > 0.0), "positive values");
    let x_grid = r.list(S, "x_grid", d.x_grid, |v| !v.is_empty() && v.iter().all(|&x| x > 0.0), "nonempty positive values");
    let t = r.float(S, "t", Some(d.t), |v| (0.0..=1.0).contains(&v), "0 <= t <= 1");
    let levels = r.list(S, "levels", d.levels, |v| v.iter().all(|&x| x > 0.0 && x < 1.0), "values in (0, 1)");
    let scale_s = r.float(S, "scale_s", Some(d.scale_s), |s| s > 0.0 && s != 1.0, "s > 0 and s != 1");
    let scale_quantile = r.float(S, "scale_quantile", Some(d.scale_quantile), |q| q > 0.0 && q < 1.0, "0 < q < 1");
    let min_exceedances = r.uint(S, "min_exceedances", Some(d.min_exceedances), |v| v >= 1, "min_exceedances >= 1");
    let bootstrap = r.uint(S, "bootstrap", Some(d.bootstrap), |v| v != 1, "bootstrap = 0 or >= 2");
    let tail_constant_samples = r.uint(
        S,
        "tail_constant_samples",
        Some(d.tail_constant_samples),
        |v| v >= 2,
        "tail_constant_samples >= 2",
    );
    let modulus_fraction = r.float(S, "modulus_fraction", Some(d.modulus_fraction), positive, "modulus_fraction > 0");
    let modulus_floor = r.float(S, "modulus_floor", Some(d.modulus_floor), |v| v >= 0.0, "modulus_floor >= 0");
    let angle_bins = r.uint(S, "angle_bins", Some(d.angle_bins), |v| v >= 1, "angle_bins >= 1");
    let (delta_grid, epsilon_grid) = (delta_grid?, epsilon_grid?);
    if !delta_grid.is_empty() && epsilon_grid.is_empty() {
        r.errors.push(ConfigError {
            line: r.sections[S].get("delta_grid").map(|e| e.line),
            message: "`delta_grid` needs a nonempty `epsilon_grid`".into(),
        });
        return None;
    }
    Some(EstimatorConfig {
        k: k.ok()?,
        normalizer: normalizer.ok()?,
        spectral_k: spectral_k.ok()?,
        r_grid: r_grid?,
        delta_grid,
        epsilon_grid,
        x_grid: x_grid?,
        t: t?,
        levels: levels?,
        scale_s: scale_s?,
        scale_quantile: scale_quantile?,
        min_exceedances: min_exceedances?,
        bootstrap: bootstrap?,
        tail_constant_samples: tail_constant_samples?,
        modulus_fraction: modulus_fraction?,
        modulus_floor: modulus_floor?,
        angle_bins: angle_bins?,
    })
}

/// Parses and validates a config, collecting every error.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut r = Reader::scan(text);
    const RUN: &str = "run";
    let name = match r.text(RUN, "name") {
        Some(n) => Some(n),
        None if r.has(RUN, "name") => None,
        None => Some("experiment".to_string()),
    };
    let mode = r.word(RUN, "mode", Some("series"), &["series", "breiman"]).map(|m| {
        if m == "breiman" {
            Mode::Breiman
        } else {
            Mode::Series
        }
    });
    let seed = r.typed(RUN, "seed", Some(0u64), |s| s.parse().ok(), "a nonnegative integer");
    let n = r.uint(RUN, "n", Some(1000), |v| v >= 1, "n >= 1");
    let workers = r.uint(RUN, "workers", Some(1), |v| v >= 1, "workers >= 1");
    let out = r.text(RUN, "out").map(PathBuf::from);
    let out_ok = !r.has(RUN, "out") || out.is_some();

    let innovation = read_innovation(&mut r);
    let coefficients = read_coefficients(&mut r);
    let grid = r
        .uint("series", "grid", Some(100), |v| v >= 1, "grid >= 1")
        .and_then(|m| Grid::new(m).ok());
    let truncation = read_truncation(&mut r);
    let estimators = read_estimators(&mut r);
    r.unknown_keys();

    if let (Some(mode), Some(inn), Some(coef)) = (mode, &innovation, &coefficients) {
        let line = |r: &Reader, s: &'static str| r.sections[s].get("kind").map(|e| e.line);
        match mode {
            Mode::Breiman => {
                if !matches!(inn, InnovationSpec::ParetoScalar { .. }) {
                    r.errors.push(ConfigError {
                        line: line(&r, "innovation"),
                        message: "breiman mode needs `kind = pareto-scalar` in [innovation]".into(),
                    });
                }
                if !matches!(coef, CoefficientConfig::Multiplier { .. }) {
                    r.errors.push(ConfigError {
                        line: line(&r, "coefficients"),
                        message: "breiman mode needs `kind = multiplier` in [coefficients]".into(),
                    });
                }
            }
            Mode::Series => {
                if matches!(coef, CoefficientConfig::Multiplier { .. }) {
                    r.errors.push(ConfigError {
                        line: line(&r, "coefficients"),
                        message: "`kind = multiplier` is only valid with `mode = breiman`".into(),
                    });
                }
            }
        }
    }

    if !r.errors.is_empty() || !out_ok {
        r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        return Err(ConfigErrors(r.errors));
    }
    let config = ExperimentConfig {
        name: name.expect("checked"),
        mode: mode.expect("checked"),
        seed: seed.expect("checked"),
        n: n.expect("checked"),
        workers: workers.expect("checked"),
        out,
        innovation: innovation.expect("checked"),
        coefficients: coefficients.expect("checked"),
        grid: grid.expect("checked"),
        truncation: truncation.expect("checked"),
        estimators: estimators.expect("checked"),
    };
    if let Err(e) = config.series_spec().and_then(|s| s.map_or(Ok(()), |s| s.validate())) {
        return Err(ConfigErrors(vec![ConfigError {
            line: None,
            message: format!("invalid series: {e}"),
        }]));
    }
    Ok(config)
}

fn list_text(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Canonical text with every key written out; `parse_config(render(c)) == c`.
pub fn render(c: &ExperimentConfig) -> String {
    let mut s = String::new();
    let kv = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
    s.push_str("[run]\n");
    kv(&mut s, "name", c.name.clone());
    kv(&mut s, "mode", c.mode.as_str().into());
    kv(&mut s, "seed", c.seed.to_string());
    kv(&mut s, "n", c.n.to_string());
    kv(&mut s, "workers", c.workers.to_string());
    if let Some(out) = &c.out {
        kv(&mut s, "out", out.display().to_string());
    }

    s.push_str("\n[innovation]\n");
    kv(&mut s, "kind", c.innovation.kind_name().into());
    let tail = |s: &mut String, t: &TailModel| {
        s.push_str(&format!("alpha = {}\nc = {}\np = {}\n", t.alpha, t.c, t.p));
    };
    match &c.innovation {
        InnovationSpec::ParetoScalar { tail: t } | InnovationSpec::SingleJump { tail: t } => tail(&mut s, t),
        InnovationSpec::CompoundPoisson { rate, tail: t } => {
            kv(&mut s, "rate", rate.to_string());
            tail(&mut s, t);
        }
        InnovationSpec::StableScalar { alpha, beta } => {
            kv(&mut s, "alpha", alpha.to_string());
            kv(&mut s, "beta", beta.to_string());
        }
        InnovationSpec::Constant { value } => kv(&mut s, "value", value.to_string()),
    }

    s.push_str("\n[coefficients]\n");
    kv(&mut s, "kind", c.coefficients.kind_name().into());
    let profile = |s: &mut String, p: &Profile| {
        let Profile::Affine { intercept, slope } = p;
        s.push_str(&format!("intercept = {intercept}\nslope = {slope}\n"));
    };
    let law = |s: &mut String, l: &MultiplierLaw| match l {
        MultiplierLaw::Constant { value } => s.push_str(&format!("law = constant\nvalue = {value}\n")),
        MultiplierLaw::Uniform { lower, upper } => {
            s.push_str(&format!("law = uniform\nlower = {lower}\nupper = {upper}\n"))
        }
    };
    match &c.coefficients {
        CoefficientConfig::Geometric { ratio, profile: p } => {
            kv(&mut s, "ratio", ratio.to_string());
            profile(&mut s, p);
        }
        CoefficientConfig::Sre { law: l, profile: p } => {
            law(&mut s, l);
            profile(&mut s, p);
        }
        CoefficientConfig::Bilinear { coefficient, squared } => {
            kv(&mut s, "coefficient", coefficient.to_string());
            kv(&mut s, "squared", squared.to_string());
        }
        CoefficientConfig::SingleTerm { profile: p } => profile(&mut s, p),
        CoefficientConfig::Multiplier { law: l } => law(&mut s, l),
    }

    s.push_str("\n[series]\n");
    kv(&mut s, "grid", c.grid.resolution().to_string());
    match c.truncation {
        Truncation::Fixed { terms } => {
            kv(&mut s, "truncation", "fixed".into());
            kv(&mut s, "terms", terms.to_string());
        }
        Truncation::Adaptive { tolerance, max_terms } => {
            kv(&mut s, "truncation", "adaptive".into());
            kv(&mut s, "tolerance", tolerance.to_string());
            kv(&mut s, "max_terms", max_terms.to_string());
        }
    }

    let e = &c.estimators;
    s.push_str("\n[estimators]\n");
    for (key, v) in [("k", e.k), ("normalizer", e.normalizer), ("spectral_k", e.spectral_k)] {
        if let Some(v) = v {
            kv(&mut s, key, v.to_string());
        }
    }
    kv(&mut s, "r_grid", list_text(&e.r_grid));
    kv(&mut s, "delta_grid", list_text(&e.delta_grid));
    kv(&mut s, "epsilon_grid", list_text(&e.epsilon_grid));
    kv(&mut s, "x_grid", list_text(&e.x_grid));
    kv(&mut s, "t", e.t.to_string());
    kv(&mut s, "levels", list_text(&e.levels));
    kv(&mut s, "scale_s", e.scale_s.to_string());
    kv(&mut s, "scale_quantile", e.scale_quantile.to_string());
    kv(&mut s, "min_exceedances", e.min_exceedances.to_string());
    kv(&mut s, "bootstrap", e.bootstrap.to_string());
    kv(&mut s, "tail_constant_samples", e.tail_constant_samples.to_string());
    kv(&mut s, "modulus_fraction", e.modulus_fraction.to_string());
    kv(&mut s, "modulus_floor", e.modulus_floor.to_string());
    kv(&mut s, "angle_bins", e.angle_bins.to_string());
    s
}
