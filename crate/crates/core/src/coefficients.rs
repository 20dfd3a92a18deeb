//! Coefficient processes `Ψ_j` for the series `X = Σ_{j≥1} Ψ_j Z_j`.
//!
//! Indexing starts at `j = 1`, with `Ψ_1` the coefficient of the present
//! innovation. Product families therefore read
//!
//! * SRE: `Ψ_1 ≡ 1`, `Ψ_j(t) = Π_{k=1}^{j-1} Y_k(t)`,
//! * bilinear: `Ψ_1 ≡ 1`, `Ψ_j(t) = c^{j-1} Π_{k=1}^{j-1} W_k(t)`,
//!
//! which is the lag-`j-1` coefficient of the usual zero-based recursion.
//!
//! Every term is generated from its own keyed substream, so the first `J`
//! coefficients never depend on how many more are requested later.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cadlag::{CadlagPath, Grid};
use crate::error::{Error, Result};
use crate::innovations::{lineage, InnovationSpec, StreamKey};
use crate::quadrature;

/// Hard cap on the number of coefficients generated for one series.
pub const MAX_TERMS: usize = 10_000;

/// Smooth spatial profile `φ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    /// `φ(t) = intercept + slope · t`.
    Affine { intercept: f64, slope: f64 },
}

impl Profile {
    pub const UNIT: Profile = Profile::Affine {
        intercept: 1.0,
        slope: 0.0,
    };

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Profile::Affine { intercept, slope } => intercept + slope * t,
        }
    }

    pub fn is_unit(&self) -> bool {
        *self == Profile::UNIT
    }

    pub fn path(&self, grid: Grid) -> Result<CadlagPath> {
        CadlagPath::from_fn(grid, |t| self.eval(t))
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Profile::Affine { intercept, slope } => {
                if !intercept.is_finite() {
                    return Err(Error::param("profile_intercept", intercept, "finite"));
                }
                if !slope.is_finite() {
                    return Err(Error::param("profile_slope", slope, "finite"));
                }
                Ok(())
            }
        }
    }
}

impl Default for Profile {
    fn default() -> Self {
        Profile::UNIT
    }
}

/// Law of a bounded scalar multiplier `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MultiplierLaw {
    Constant { value: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl MultiplierLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MultiplierLaw::Constant { value } if value.is_finite() => Ok(()),
            MultiplierLaw::Constant { value } => Err(Error::param("value", value, "finite")),
            MultiplierLaw::Uniform { lower, upper } => {
                if lower.is_finite() && upper.is_finite() && lower < upper {
                    Ok(())
                } else {
                    Err(Error::param("upper", upper, "finite lower < upper"))
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MultiplierLaw::Constant { value } => value,
            MultiplierLaw::Uniform { lower, upper } => {
                let u: f64 = rng.random();
                lower + (upper - lower) * u
            }
        }
    }

    /// `E|Y|^p`, by adaptive quadrature against the density.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match *self {
            MultiplierLaw::Constant { value } => value.abs().powf(p),
            MultiplierLaw::Uniform { lower, upper } => {
                let density = 1.0 / (upper - lower);
                let f = |y: f64| y.abs().powf(p) * density;
                // split at zero so the integrand is smooth on each piece
                if lower < 0.0 && upper > 0.0 {
                    quadrature::integrate(f, lower, 0.0, 1e-13)
                        + quadrature::integrate(f, 0.0, upper, 1e-13)
                } else {
                    quadrature::integrate(f, lower, upper, 1e-13)
                }
            }
        }
    }

    /// `E log|Y|`, finite for the laws supported here unless `Y` has an atom at 0.
    pub fn log_moment(&self) -> f64 {
        match *self {
            MultiplierLaw::Constant { value } => value.abs().ln(),
            MultiplierLaw::Uniform { lower, upper } => {
                let g = |y: f64| if y == 0.0 { 0.0 } else { y * y.ln() - y };
                // antiderivative of ln|y| on each side of zero
                let piece = |a: f64, b: f64| {
                    if a >= 0.0 {
                        g(b) - g(a)
                    } else {
                        g(-a) - g(-b)
                    }
                };
                let total = if lower < 0.0 && upper > 0.0 {
                    piece(lower, 0.0) + piece(0.0, upper)
                } else {
                    piece(lower, upper)
                };
                total / (upper - lower)
            }
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            MultiplierLaw::Constant { value } => value.abs(),
            MultiplierLaw::Uniform { lower, upper } => lower.abs().max(upper.abs()),
        }
    }
}

/// Generative description of `(Ψ_j)_{j≥1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientFamily {
    /// `Ψ_j(t) = a^{j-1} φ(t)`.
    Geometric { ratio: f64, profile: Profile },
    /// `Ψ_j(t) = Π_{k<j} Y_k φ(t)` with `Y_k` i.i.d. scalars.
    SreProduct {
        multiplier: MultiplierLaw,
        profile: Profile,
    },
    /// `Ψ_j = c^{j-1} Π_{k<j} W_k`, where `W_k` are the series' own
    /// innovations. With `squared`, the series multiplies `Ψ_j` by `Z_j²`
    /// for `j >= 2` instead of `Z_j`.
    BilinearProduct {
        coefficient: f64,
        driver: InnovationSpec,
        squared: bool,
    },
    /// Explicit `Ψ_1..Ψ_m`; `Ψ_j = 0` for `j > m`.
    FiniteList { paths: Vec<CadlagPath> },
}

impl CoefficientFamily {
    pub fn geometric(ratio: f64) -> Self {
        CoefficientFamily::Geometric {
            ratio,
            profile: Profile::UNIT,
        }
    }

    pub fn sre(multiplier: MultiplierLaw) -> Self {
        CoefficientFamily::SreProduct {
            multiplier,
            profile: Profile::UNIT,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CoefficientFamily::Geometric { .. } => "geometric",
            CoefficientFamily::SreProduct { .. } => "sre",
            CoefficientFamily::BilinearProduct { .. } => "bilinear",
            CoefficientFamily::FiniteList { .. } => "finite-list",
        }
    }

    /// Whether coefficients are built from the series' own innovations.
    pub fn is_coupled(&self) -> bool {
        matches!(self, CoefficientFamily::BilinearProduct { .. })
    }

    pub fn validate(&self, grid: Grid) -> Result<()> {
        match self {
            CoefficientFamily::Geometric { ratio, profile } => {
                if !(ratio.abs() < 1.0) {
                    return Err(Error::param("ratio", *ratio, "|ratio| < 1"));
                }
                profile.validate()
            }
            CoefficientFamily::SreProduct {
                multiplier,
                profile,
            } => {
                multiplier.validate()?;
                profile.validate()
            }
            CoefficientFamily::BilinearProduct {
                coefficient,
                driver,
                ..
            } => {
                if !coefficient.is_finite() {
                    return Err(Error::param("coefficient", *coefficient, "finite"));
                }
                driver.validate()
            }
            CoefficientFamily::FiniteList { paths } => {
                if paths.is_empty() {
                    return Err(Error::InsufficientData("finite-list family has no paths".into()));
                }
                for p in paths {
                    if p.grid() != grid {
                        return Err(Error::GridMismatch {
                            left: p.grid().resolution(),
                            right: grid.resolution(),
                        });
                    }
                }
                Ok(())
            }
        }
    }
}

/// One generated coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTerm {
    pub index: usize,
    pub path: CadlagPath,
    /// Largest innovation index `Ψ_j` was built from, if any.
    pub max_driver: Option<usize>,
    /// Innovation `W_j` drawn alongside `Ψ_j` (coupled families only).
    pub driver: Option<CadlagPath>,
}

/// Lazy generator of `Ψ_1, Ψ_2, ...` for one replicate.
pub struct CoefficientStream<'a> {
    family: &'a CoefficientFamily,
    key: StreamKey,
    grid: Grid,
    profile: Option<CadlagPath>,
    next: usize,
    product: Option<CadlagPath>,
}

impl<'a> CoefficientStream<'a> {
    /// `key` is the replicate key; substreams follow [`lineage`].
    pub fn new(key: &StreamKey, family: &'a CoefficientFamily, grid: Grid) -> Result<Self> {
        family.validate(grid)?;
        let profile = match family {
            CoefficientFamily::Geometric { profile, .. }
            | CoefficientFamily::SreProduct { profile, .. } => Some(profile.path(grid)?),
            _ => None,
        };
        Ok(CoefficientStream {
            family,
            key: key.clone(),
            grid,
            profile,
            next: 1,
            product: None,
        })
    }

    pub fn next_term(&mut self) -> Result<CoefficientTerm> {
        let j = self.next;
        if j > MAX_TERMS {
            return Err(Error::TooManyTerms {
                requested: j,
                cap: MAX_TERMS,
            });
        }
        self.next += 1;
        let grid = self.grid;
        let term = match self.family {
            CoefficientFamily::Geometric { ratio, .. } => {
                let profile = self.profile.as_ref().expect("profile built in new");
                CoefficientTerm {
                    index: j,
                    path: profile.scale(ratio.powi(j as i32 - 1)),
                    max_driver: None,
                    driver: None,
                }
            }
            CoefficientFamily::SreProduct { multiplier, .. } => {
                let path = match self.product.take() {
                    None => CadlagPath::constant(grid, 1.0),
                    Some(prev) => {
                        let y = multiplier.sample(
                            &mut self
                                .key
                                .child(lineage::COEFFICIENT)
                                .child(j as u64 - 1)
                                .rng(),
                        );
                        let factor = self.profile.as_ref().expect("profile built in new").scale(y);
                        prev.pointwise_product(&factor)?
                    }
                };
                self.product = Some(path.clone());
                CoefficientTerm {
                    index: j,
                    path,
                    max_driver: None,
                    driver: None,
                }
            }
            CoefficientFamily::BilinearProduct {
                coefficient,
                driver,
                ..
            } => {
                let path = self
                    .product
                    .take()
                    .unwrap_or_else(|| CadlagPath::constant(grid, 1.0));
                let w = driver.draw(&self.key.child(lineage::INNOVATION).child(j as u64), grid)?;
                self.product = Some(path.pointwise_product(&w.scale(*coefficient))?);
                CoefficientTerm {
                    index: j,
                    path,
                    max_driver: if j > 1 { Some(j - 1) } else { None },
                    driver: Some(w),
                }
            }
            CoefficientFamily::FiniteList { paths } => CoefficientTerm {
                index: j,
                path: paths.get(j - 1).cloned().unwrap_or_else(|| CadlagPath::zero(grid)),
                max_driver: None,
                driver: None,
            },
        };
        Ok(term)
    }
}

/// `Ψ_1..Ψ_J` with the driver record needed to wire coupled families.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDraw {
    pub paths: Vec<CadlagPath>,
    /// `W_1..W_J` for coupled families, empty otherwise.
    pub drivers: Vec<CadlagPath>,
    /// Per `j` (0-based), the largest innovation index `Ψ_{j+1}` reads.
    pub max_driver: Vec<Option<usize>>,
}

impl CoefficientDraw {
    /// Every coefficient may only read innovations strictly before its own index.
    pub fn check_predictability(&self) -> Result<()> {
        for (i, d) in self.max_driver.iter().enumerate() {
            if let Some(k) = *d {
                if k > i {
                    return Err(Error::PredictabilityViolation {
                        term: i + 1,
                        driver: k,
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn generate_coefficients(
    key: &StreamKey,
    family: &CoefficientFamily,
    grid: Grid,
    terms: usize,
) -> Result<CoefficientDraw> {
    if terms == 0 {
        return Err(Error::param("terms", 0.0, "terms >= 1"));
    }
    if terms > MAX_TERMS {
        return Err(Error::TooManyTerms {
            requested: terms,
            cap: MAX_TERMS,
        });
    }
    let mut stream = CoefficientStream::new(key, family, grid)?;
    let mut draw = CoefficientDraw {
        paths: Vec::with_capacity(terms),
        drivers: Vec::new(),
        max_driver: Vec::with_capacity(terms),
    };
    for _ in 0..terms {
        let t = stream.next_term()?;
        draw.paths.push(t.path);
        draw.max_driver.push(t.max_driver);
        if let Some(w) = t.driver {
            draw.drivers.push(w);
        }
    }
    Ok(draw)
}

/// Coefficient panel as CSV rows `j,t,value`.
pub fn coefficients_to_csv(paths: &[CadlagPath]) -> String {
    let mut out = String::from("j,t,value\n");
    for (i, p) in paths.iter().enumerate() {
        for (k, v) in p.values().iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, p.grid().point(k), v);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonzeroCheck {
    pub pass: bool,
    /// Estimated `P(∪_{j≤m} {Ψ_j(t_k) ≠ 0})` per grid point.
    pub probabilities: Vec<f64>,
    /// Grid points where the estimate is zero.
    pub failing: Vec<f64>,
    pub samples: usize,
}

/// Monte Carlo check that some `Ψ_j(t)`, `j <= m`, is nonzero with positive
/// probability at every grid point.
pub fn nonzero_condition_check(
    key: &StreamKey,
    family: &CoefficientFamily,
    grid: Grid,
    head: usize,
    samples: usize,
) -> Result<NonzeroCheck> {
    if head == 0 {
        return Err(Error::param("head", 0.0, "m >= 1"));
    }
    if samples == 0 {
        return Err(Error::param("samples", 0.0, "samples >= 1"));
    }
    let mut hits = vec![0usize; grid.len()];
    for s in 0..samples as u64 {
        let mut stream = CoefficientStream::new(&key.child(s), family, grid)?;
        let mut any = vec![false; grid.len()];
        for _ in 0..head {
            let t = stream.next_term()?;
            for (a, v) in any.iter_mut().zip(t.path.values()) {
                *a |= *v != 0.0;
            }
        }
        for (h, a) in hits.iter_mut().zip(&any) {
            *h += *a as usize;
        }
    }
    let probabilities: Vec<f64> = hits.iter().map(|&h| h as f64 / samples as f64).collect();
    let failing: Vec<f64> = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p == 0.0)
        .map(|(k, _)| grid.point(k))
        .collect();
    Ok(NonzeroCheck {
        pass: failing.is_empty(),
        probabilities,
        failing,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheckSpec {
    pub alpha: f64,
    pub gamma: f64,
    /// Head length `m`.
    pub head: usize,
    pub samples: usize,
    pub max_terms: usize,
}

impl MomentCheckSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", self.alpha, "alpha > 0"));
        }
        if !(self.gamma > 0.0 && self.gamma < self.alpha) {
            return Err(Error::param("gamma", self.gamma, "0 < gamma < alpha"));
        }
        if self.head == 0 {
            return Err(Error::param("head", 0.0, "m >= 1"));
        }
        if self.samples == 0 {
            return Err(Error::param("samples", 0.0, "samples >= 1"));
        }
        if self.max_terms < self.head || self.max_terms > MAX_TERMS {
            return Err(Error::param(
                "max_terms",
                self.max_terms as f64,
                "m <= max_terms <= 10000",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentRegime {
    /// `α ∈ (0,1) ∪ (1,2)`: head `(α-γ)` and full `(α+γ)` moment sums.
    Separate,
    /// `α ∈ {1, 2}`: one joint moment of the `(α-γ)` power sum.
    Boundary,
    /// `α > 2`: moment of the square sum.
    SquareSum,
}

impl MomentRegime {
    pub fn for_alpha(alpha: f64) -> Self {
        if alpha == 1.0 || alpha == 2.0 {
            MomentRegime::Boundary
        } else if alpha > 2.0 {
            MomentRegime::SquareSum
        } else {
            MomentRegime::Separate
        }
    }
}

/// Below this consecutive-term ratio the moment terms count as summable.
pub const DECAY_CEILING: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub regime: MomentRegime,
    /// Named truncated Monte Carlo estimates.
    pub estimates: Vec<(String, f64)>,
    /// `Ê‖Ψ_j‖^{α+γ}` for `j = 1..=max_terms`.
    pub term_moments: Vec<f64>,
    /// Geometric-mean ratio of consecutive terms over the second half.
    pub decay_ratio: f64,
    pub pass: bool,
    pub method: &'static str,
}

/// Heuristic check of the moment conditions on `(‖Ψ_j‖_∞)`.
///
/// Finiteness of an expectation cannot be decided from samples; "pass" means
/// the truncated estimates are finite and `j ↦ Ê‖Ψ_j‖^{α+γ}` decays at a
/// geometric rate below [`DECAY_CEILING`].
pub fn moment_regime_check(
    key: &StreamKey,
    family: &CoefficientFamily,
    grid: Grid,
    spec: &MomentCheckSpec,
) -> Result<MomentReport> {
    spec.validate()?;
    let (alpha, gamma) = (spec.alpha, spec.gamma);
    let lo = alpha - gamma;
    let hi = alpha + gamma;
    let regime = MomentRegime::for_alpha(alpha);
    let n = spec.samples as f64;

    let mut term_moments = vec![0.0; spec.max_terms];
    let mut head_sum = 0.0;
    let mut joint = 0.0;
    for s in 0..spec.samples as u64 {
        let mut stream = CoefficientStream::new(&key.child(s), family, grid)?;
        let mut power_sum = 0.0;
        let mut square_sum = 0.0;
        for (j, slot) in term_moments.iter_mut().enumerate() {
            let norm = stream.next_term()?.path.sup_norm();
            *slot += norm.powf(hi) / n;
            if j < spec.head {
                head_sum += norm.powf(lo) / n;
            }
            power_sum += norm.powf(lo);
            square_sum += norm * norm;
        }
        joint += match regime {
            MomentRegime::Separate => 0.0,
            MomentRegime::Boundary => power_sum.powf(hi / lo) / n,
            MomentRegime::SquareSum => square_sum.powf(hi / 2.0) / n,
        };
    }

    let estimates = match regime {
        MomentRegime::Separate => vec![
            ("head_sum_alpha_minus_gamma".to_string(), head_sum),
            (
                "sum_alpha_plus_gamma".to_string(),
                term_moments.iter().sum::<f64>(),
            ),
        ],
        MomentRegime::Boundary => vec![("moment_of_power_sum".to_string(), joint)],
        MomentRegime::SquareSum => vec![("moment_of_square_sum".to_string(), joint)],
    };
    let decay_ratio = decay_ratio(&term_moments);
    let finite = estimates.iter().all(|(_, v)| v.is_finite());
    Ok(MomentReport {
        regime,
        estimates,
        term_moments,
        decay_ratio,
        pass: finite && decay_ratio < DECAY_CEILING,
        method: "heuristic: truncated Monte Carlo moments plus geometric-decay diagnostic",
    })
}

fn decay_ratio(terms: &[f64]) -> f64 {
    let mid = terms.len() / 2;
    let tail = &terms[mid..];
    if tail.len() < 2 {
        return if terms.last().copied().unwrap_or(0.0) == 0.0 {
            0.0
        } else {
            1.0
        };
    }
    let first = tail[0];
    let last = tail[tail.len() - 1];
    if last == 0.0 {
        return 0.0;
    }
    if !first.is_finite() || !last.is_finite() || first == 0.0 {
        return f64::INFINITY;
    }
    (last / first).powf(1.0 / (tail.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(10).unwrap()
    }

    #[test]
    fn geometric_norms() {
        let d = generate_coefficients(&StreamKey::new(0), &CoefficientFamily::geometric(0.5), grid(), 3)
            .unwrap();
        let norms: Vec<f64> = d.paths.iter().map(|p| p.sup_norm()).collect();
        assert_eq!(norms, vec![1.0, 0.5, 0.25]);
        assert!(d.drivers.is_empty());
    }

    #[test]
    fn constant_sre_is_geometric() {
        let fam = CoefficientFamily::sre(MultiplierLaw::Constant { value: 0.5 });
        let d = generate_coefficients(&StreamKey::new(1), &fam, grid(), 6).unwrap();
        for (j, p) in d.paths.iter().enumerate() {
            assert_eq!(*p, CadlagPath::constant(grid(), 0.5f64.powi(j as i32)));
        }
    }

    #[test]
    fn bilinear_first_term_is_one() {
        let fam = CoefficientFamily::BilinearProduct {
            coefficient: 0.3,
            driver: InnovationSpec::StableScalar {
                alpha: 1.5,
                beta: 0.0,
            },
            squared: false,
        };
        let d = generate_coefficients(&StreamKey::new(2), &fam, grid(), 4).unwrap();
        assert_eq!(d.paths[0], CadlagPath::constant(grid(), 1.0));
        assert_eq!(d.drivers.len(), 4);
        // Ψ_3 = c² W_1 W_2
        let expect = d.drivers[0]
            .pointwise_product(&d.drivers[1])
            .unwrap()
            .scale(0.09);
        for (a, b) in d.paths[2].values().iter().zip(expect.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert_eq!(d.max_driver, vec![None, Some(1), Some(2), Some(3)]);
        d.check_predictability().unwrap();
    }

    #[test]
    fn finite_list_pads_with_zero() {
        let g = grid();
        let fam = CoefficientFamily::FiniteList {
            paths: vec![CadlagPath::constant(g, 2.0)],
        };
        let d = generate_coefficients(&StreamKey::new(0), &fam, g, 3).unwrap();
        assert_eq!(d.paths[2], CadlagPath::zero(g));
        let bad = CoefficientFamily::FiniteList {
            paths: vec![CadlagPath::zero(Grid::new(3).unwrap())],
        };
        assert!(generate_coefficients(&StreamKey::new(0), &bad, g, 1).is_err());
    }

    #[test]
    fn generation_errors() {
        let key = StreamKey::new(0);
        assert!(generate_coefficients(&key, &CoefficientFamily::geometric(1.0), grid(), 2).is_err());
        assert!(matches!(
            generate_coefficients(&key, &CoefficientFamily::geometric(0.5), grid(), MAX_TERMS + 1),
            Err(Error::TooManyTerms { .. })
        ));
        let bad = CoefficientDraw {
            paths: vec![],
            drivers: vec![],
            max_driver: vec![None, Some(2)],
        };
        assert!(matches!(
            bad.check_predictability(),
            Err(Error::PredictabilityViolation { term: 2, driver: 2 })
        ));
    }

    #[test]
    fn nonzero_condition_examples() {
        let key = StreamKey::new(3);
        let r = nonzero_condition_check(&key, &CoefficientFamily::geometric(0.5), grid(), 1, 5).unwrap();
        assert!(r.pass);
        // continuous bump: 0 on [0, 0.4], ramps to 1 at 0.5
        let g = grid();
        let bump = CadlagPath::from_fn(g, |t| ((t - 0.4) * 10.0).clamp(0.0, 1.0)).unwrap();
        let fam = CoefficientFamily::FiniteList { paths: vec![bump] };
        let r = nonzero_condition_check(&key, &fam, g, 1, 5).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failing, vec![0.0, 0.1, 0.2, 0.3, 0.4]);
        let sre = CoefficientFamily::sre(MultiplierLaw::Uniform {
            lower: 0.0,
            upper: 0.9,
        });
        assert!(nonzero_condition_check(&key, &sre, g, 3, 200).unwrap().pass);
    }

    #[test]
    fn moment_check_geometric_closed_form() {
        let spec = MomentCheckSpec {
            alpha: 1.5,
            gamma: 0.25,
            head: 1,
            samples: 1,
            max_terms: 60,
        };
        let r = moment_regime_check(&StreamKey::new(0), &CoefficientFamily::geometric(0.5), grid(), &spec)
            .unwrap();
        assert_eq!(r.regime, MomentRegime::Separate);
        assert!(r.pass);
        let expect = 1.0 / (1.0 - 0.5f64.powf(1.75));
        assert!((r.estimates[1].1 - expect).abs() < 1e-12);
        assert!((expect - 1.4231).abs() < 1e-4);
        assert!((r.decay_ratio - 0.5f64.powf(1.75)).abs() < 1e-9);
    }

    #[test]
    fn moment_check_flags_non_summable() {
        let spec = MomentCheckSpec {
            alpha: 1.5,
            gamma: 0.25,
            head: 2,
            samples: 10,
            max_terms: 40,
        };
        let fam = CoefficientFamily::sre(MultiplierLaw::Constant { value: 1.0 });
        let r = moment_regime_check(&StreamKey::new(0), &fam, grid(), &spec).unwrap();
        assert!(!r.pass);
        let g = grid();
        let list = CoefficientFamily::FiniteList {
            paths: vec![CadlagPath::constant(g, 3.0), CadlagPath::constant(g, -1.0)],
        };
        let r = moment_regime_check(&StreamKey::new(0), &list, g, &spec).unwrap();
        assert!(r.pass);
        assert_eq!(r.decay_ratio, 0.0);
    }

    #[test]
    fn moment_regimes_by_alpha() {
        assert_eq!(MomentRegime::for_alpha(0.5), MomentRegime::Separate);
        assert_eq!(MomentRegime::for_alpha(1.0), MomentRegime::Boundary);
        assert_eq!(MomentRegime::for_alpha(2.0), MomentRegime::Boundary);
        assert_eq!(MomentRegime::for_alpha(2.5), MomentRegime::SquareSum);
        let bad = MomentCheckSpec {
            alpha: 1.0,
            gamma: 1.0,
            head: 1,
            samples: 1,
            max_terms: 2,
        };
        assert!(bad.validate().is_err());
        let fam = CoefficientFamily::geometric(0.5);
        let spec = MomentCheckSpec { gamma: 0.5, ..bad };
        let r = moment_regime_check(&StreamKey::new(0), &fam, grid(), &spec).unwrap();
        assert_eq!(r.estimates[0].0, "moment_of_power_sum");
        // (1 + 0.5^{0.5})^{3}
        let expect = (1.0 + 0.5f64.sqrt()).powi(3);
        assert!((r.estimates[0].1 - expect).abs() < 1e-12);
    }

    #[test]
    fn multiplier_moments_match_closed_form() {
        let u = MultiplierLaw::Uniform {
            lower: 0.0,
            upper: 0.9,
        };
        let closed = 0.9f64.powf(1.5) / 2.5;
        assert!((u.abs_moment(1.5) - closed).abs() < 1e-10);
        assert!((closed - 0.3415).abs() < 1e-4);
        assert!((u.log_moment() - (0.9f64.ln() - 1.0)).abs() < 1e-12);
        let sym = MultiplierLaw::Uniform {
            lower: -1.0,
            upper: 1.0,
        };
        assert!((sym.abs_moment(2.0) - 1.0 / 3.0).abs() < 1e-10);
        assert!((sym.log_moment() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_export() {
        let g = Grid::new(1).unwrap();
        let csv = coefficients_to_csv(&[CadlagPath::constant(g, 1.0), CadlagPath::constant(g, 0.5)]);
        assert_eq!(csv, "j,t,value\n1,0,1\n1,1,1\n2,0,0.5\n2,1,0.5\n");
    }
}
