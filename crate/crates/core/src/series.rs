//! Truncated draws of `X = Σ_{j≥1} Ψ_j Z_j` and replicate panels.
//!
//! Under a replicate key `R`, innovation `Z_j` is drawn from
//! `R.child(INNOVATION).child(j)` and coefficient randomness from
//! `R.child(COEFFICIENT)`. For coupled (bilinear) families the coefficient
//! stream draws `W_j` from the innovation slot and the series uses it as
//! `Z_j`, so `Ψ_j` only ever reads `Z_1..Z_{j-1}`.
//!
//! The realised partial sums obey
//! `‖X^{(J')} - X^{(J)}‖_∞ <= Σ_{J'<j<=J} ‖Ψ_j‖_∞ ‖Z_j‖_∞`, and each draw
//! records the per-term products on the right-hand side.
//!
//! Adaptive truncation extrapolates the remainder geometrically. After term
//! `n` the remainder estimate is
//!
//! ```text
//! b_n = ‖Ψ_n‖_∞ · max_{j<=n} ‖Z_j‖_∞ · ρ / (1 - ρ)
//! ```
//!
//! where `ρ` is the geometric-mean ratio of the last five coefficient norms,
//! clamped to `[0, 0.99]`. The innovation factor is a running maximum rather
//! than `‖Z_n‖_∞` because compound-Poisson innovations are identically zero
//! with positive probability. This is a stopping rule, not a proven bound.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cadlag::{CadlagPath, Grid};
use crate::coefficients::{CoefficientDraw, CoefficientFamily, CoefficientStream, MAX_TERMS};
use crate::error::{Error, Result};
use crate::innovations::{lineage, InnovationSpec, StreamKey};

/// Number of trailing coefficient norms used to estimate the decay ratio.
pub const DECAY_WINDOW: usize = 5;
/// Upper clamp for the decay ratio.
pub const MAX_DECAY: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Truncation {
    Fixed { terms: usize },
    Adaptive { tolerance: f64, max_terms: usize },
}

/// Whether coefficient drivers reuse the series' innovation draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Wiring {
    Independent,
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub grid: Grid,
    pub innovation: InnovationSpec,
    pub coefficients: CoefficientFamily,
    pub truncation: Truncation,
    pub wiring: Wiring,
}

impl SeriesSpec {
    /// Spec with wiring inferred from the coefficient family.
    pub fn new(
        grid: Grid,
        innovation: InnovationSpec,
        coefficients: CoefficientFamily,
        truncation: Truncation,
    ) -> Self {
        let wiring = if coefficients.is_coupled() {
            Wiring::Coupled
        } else {
            Wiring::Independent
        };
        SeriesSpec {
            grid,
            innovation,
            coefficients,
            truncation,
            wiring,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.innovation.validate()?;
        self.coefficients.validate(self.grid)?;
        match self.truncation {
            Truncation::Fixed { terms } => {
                if terms == 0 || terms > MAX_TERMS {
                    return Err(Error::param("terms", terms as f64, "1 <= terms <= 10000"));
                }
            }
            Truncation::Adaptive {
                tolerance,
                max_terms,
            } => {
                if !(tolerance > 0.0 && tolerance.is_finite()) {
                    return Err(Error::param("tolerance", tolerance, "tolerance > 0"));
                }
                if max_terms == 0 || max_terms > MAX_TERMS {
                    return Err(Error::param(
                        "max_terms",
                        max_terms as f64,
                        "1 <= max_terms <= 10000",
                    ));
                }
            }
        }
        match (&self.coefficients, self.wiring) {
            (CoefficientFamily::BilinearProduct { driver, .. }, Wiring::Coupled) => {
                if *driver != self.innovation {
                    return Err(Error::WiringMismatch(
                        "bilinear driver law must equal the innovation law",
                    ));
                }
            }
            (CoefficientFamily::BilinearProduct { .. }, Wiring::Independent) => {
                return Err(Error::WiringMismatch(
                    "bilinear coefficients require coupled wiring",
                ));
            }
            (_, Wiring::Coupled) => {
                return Err(Error::WiringMismatch(
                    "only bilinear coefficients can use coupled wiring",
                ));
            }
            _ => {}
        }
        Ok(())
    }

    fn max_terms(&self) -> usize {
        match self.truncation {
            Truncation::Fixed { terms } => terms,
            Truncation::Adaptive { max_terms, .. } => max_terms,
        }
    }

    fn squared(&self) -> bool {
        matches!(
            self.coefficients,
            CoefficientFamily::BilinearProduct { squared: true, .. }
        )
    }
}

/// One realised series `X^{(J)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDraw {
    pub path: CadlagPath,
    pub terms_used: usize,
    /// Extrapolated remainder `Σ_{j>J} ‖Ψ_j‖_∞ ‖Z_j‖_∞`.
    pub residual_bound: f64,
    /// `‖Ψ_j‖_∞ ‖Z_j‖_∞` for `j = 1..=terms_used`.
    pub term_norms: Vec<f64>,
}

impl SeriesDraw {
    pub fn sup_norm(&self) -> f64 {
        self.path.sup_norm()
    }
}

struct Accumulator {
    sum: CadlagPath,
    term_norms: Vec<f64>,
    coefficient_norms: Vec<f64>,
    innovation_max: f64,
    partials: Option<Vec<CadlagPath>>,
}

impl Accumulator {
    fn new(grid: Grid, trace: bool) -> Self {
        Accumulator {
            sum: CadlagPath::zero(grid),
            term_norms: Vec::new(),
            coefficient_norms: Vec::new(),
            innovation_max: 0.0,
            partials: trace.then(Vec::new),
        }
    }

    fn push(&mut self, coefficient: &CadlagPath, factor: &CadlagPath) -> Result<()> {
        let c = coefficient.sup_norm();
        let z = factor.sup_norm();
        self.sum.add_assign(&coefficient.pointwise_product(factor)?)?;
        self.term_norms.push(c * z);
        self.coefficient_norms.push(c);
        self.innovation_max = self.innovation_max.max(z);
        if let Some(p) = self.partials.as_mut() {
            p.push(self.sum.clone());
        }
        Ok(())
    }

    fn residual(&self) -> f64 {
        let last = *self.coefficient_norms.last().unwrap_or(&0.0);
        if last == 0.0 || self.innovation_max == 0.0 {
            return 0.0;
        }
        let rho = decay_ratio(&self.coefficient_norms);
        last * self.innovation_max * rho / (1.0 - rho)
    }

    fn finish(self, residual_bound: f64) -> (SeriesDraw, Vec<CadlagPath>) {
        let draw = SeriesDraw {
            terms_used: self.term_norms.len(),
            path: self.sum,
            residual_bound,
            term_norms: self.term_norms,
        };
        (draw, self.partials.unwrap_or_default())
    }
}

/// Geometric-mean ratio over the last [`DECAY_WINDOW`] norms, clamped to
/// `[0, MAX_DECAY]`.
fn decay_ratio(norms: &[f64]) -> f64 {
    let window = &norms[norms.len().saturating_sub(DECAY_WINDOW)..];
    if window.len() < 2 {
        return MAX_DECAY;
    }
    let first = window[0];
    let last = window[window.len() - 1];
    if first == 0.0 {
        return if last == 0.0 { 0.0 } else { MAX_DECAY };
    }
    let rho = (last / first).powf(1.0 / (window.len() - 1) as f64);
    if rho.is_nan() {
        MAX_DECAY
    } else {
        rho.clamp(0.0, MAX_DECAY)
    }
}

fn innovation_factor(z: &CadlagPath, j: usize, squared: bool) -> CadlagPath {
    if squared && j >= 2 {
        z.map(|v| v * v)
    } else {
        z.clone()
    }
}

fn draw_inner(key: &StreamKey, spec: &SeriesSpec, trace: bool) -> Result<(SeriesDraw, Vec<CadlagPath>)> {
    spec.validate()?;
    let grid = spec.grid;
    let squared = spec.squared();
    let mut stream = CoefficientStream::new(key, &spec.coefficients, grid)?;
    let innovation_key = key.child(lineage::INNOVATION);
    let mut acc = Accumulator::new(grid, trace);
    let cap = spec.max_terms();
    for j in 1..=cap {
        let term = stream.next_term()?;
        if let Some(k) = term.max_driver {
            if k >= j {
                return Err(Error::PredictabilityViolation { term: j, driver: k });
            }
        }
        let z = match (spec.wiring, term.driver) {
            (Wiring::Coupled, Some(w)) => w,
            (Wiring::Coupled, None) => {
                return Err(Error::WiringMismatch("coupled family produced no driver"))
            }
            (Wiring::Independent, _) => spec.innovation.draw(&innovation_key.child(j as u64), grid)?,
        };
        acc.push(&term.path, &innovation_factor(&z, j, squared))?;
        if let Truncation::Adaptive { tolerance, .. } = spec.truncation {
            let bound = acc.residual();
            if bound < tolerance {
                return Ok(acc.finish(bound));
            }
        }
    }
    let bound = acc.residual();
    match spec.truncation {
        Truncation::Fixed { .. } => Ok(acc.finish(bound)),
        Truncation::Adaptive { .. } => {
            let (partial, _) = acc.finish(bound);
            Err(Error::TruncationFailure {
                terms: cap,
                bound,
                partial: Box::new(partial),
            })
        }
    }
}

/// Draw one series for the replicate key `key`.
///
/// Adaptive truncation that reaches its cap with the remainder estimate
/// still above tolerance returns [`Error::TruncationFailure`] carrying the
/// partial sum.
pub fn draw_series(key: &StreamKey, spec: &SeriesSpec) -> Result<SeriesDraw> {
    draw_inner(key, spec, false).map(|(d, _)| d)
}

/// Like [`draw_series`], also returning every partial sum `X^{(1)}, X^{(2)}, ...`.
pub fn draw_series_traced(key: &StreamKey, spec: &SeriesSpec) -> Result<(SeriesDraw, Vec<CadlagPath>)> {
    draw_inner(key, spec, true)
}

/// Fixed-length series from explicit coefficients and innovations.
pub fn assemble_series(
    coefficients: &CoefficientDraw,
    innovations: &[CadlagPath],
    squared: bool,
) -> Result<SeriesDraw> {
    coefficients.check_predictability()?;
    let Some(first) = coefficients.paths.first() else {
        return Err(Error::InsufficientData("no coefficients".into()));
    };
    if innovations.len() < coefficients.paths.len() {
        return Err(Error::InsufficientData(format!(
            "{} coefficients but {} innovations",
            coefficients.paths.len(),
            innovations.len()
        )));
    }
    let mut acc = Accumulator::new(first.grid(), false);
    for (j, (psi, z)) in coefficients.paths.iter().zip(innovations).enumerate() {
        acc.push(psi, &innovation_factor(z, j + 1, squared))?;
    }
    let bound = acc.residual();
    Ok(acc.finish(bound).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrawStatus {
    Ok,
    TruncationFailure,
}

impl DrawStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            DrawStatus::Ok => "ok",
            DrawStatus::TruncationFailure => "truncation-failure",
        }
    }
}

/// One replicate of a panel; truncation failures keep their partial sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub replicate: usize,
    pub status: DrawStatus,
    pub draw: SeriesDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub entries: Vec<PanelEntry>,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.status != DrawStatus::Ok)
            .count()
    }

    pub fn ok_draws(&self) -> impl Iterator<Item = &SeriesDraw> {
        self.entries
            .iter()
            .filter(|e| e.status == DrawStatus::Ok)
            .map(|e| &e.draw)
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.ok_draws().map(|d| d.sup_norm()).collect()
    }

    /// CSV rows `replicate,sup_norm,J_used,residual_bound,status`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,sup_norm,J_used,residual_bound,status\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.replicate,
                e.draw.sup_norm(),
                e.draw.terms_used,
                e.draw.residual_bound,
                e.status.as_str()
            );
        }
        out
    }
}

/// `n` independent replicates; replicate `r` uses `key.child(r)`.
///
/// Replicates run on the current rayon pool and are collected in index
/// order, so the panel does not depend on the number of workers.
pub fn draw_panel(key: &StreamKey, spec: &SeriesSpec, n: usize) -> Result<Panel> {
    if n == 0 {
        return Err(Error::param("n", 0.0, "n >= 1"));
    }
    spec.validate()?;
    let entries = (0..n)
        .into_par_iter()
        .map(|r| match draw_series(&key.child(r as u64), spec) {
            Ok(draw) => Ok(PanelEntry {
                replicate: r,
                status: DrawStatus::Ok,
                draw,
            }),
            Err(Error::TruncationFailure { partial, .. }) => Ok(PanelEntry {
                replicate: r,
                status: DrawStatus::TruncationFailure,
                draw: *partial,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Panel { entries })
}
