//! Tail inference and limit-constant predictions.
//!
//! Estimators operate on materialised samples (usually sup-norms of a
//! panel) and are deterministic functions of their inputs. Conventions:
//!
//! * Hill uses the top `k` order statistics against `X_(k+1)`; the default
//!   `k` is `⌈√n⌉`.
//! * `a_n` is the empirical `(1 - 1/n)` quantile: the ascending order
//!   statistic of rank `N - ⌊N/n⌋`.
//! * Tail curves report `n · P̂(X > a_n r)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cadlag::{CadlagPath, Grid, Interval};
use crate::coefficients::{CoefficientFamily, CoefficientStream, MultiplierLaw, MAX_TERMS};
use crate::error::{Error, Result};
use crate::innovations::{pareto, StreamKey, TailModel};

/// Tail index and tail constant `P(X > x) ≈ c x^{-α}` from one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegVarEstimate {
    pub alpha: f64,
    pub c: f64,
    pub k: usize,
    pub n: usize,
    pub alpha_se: f64,
    pub c_se: f64,
}

pub fn default_k(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn sorted_asc(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Hill estimator on the `k` largest values.
///
/// `α̂ = [k^{-1} Σ_{i≤k} ln X_(i) - ln X_(k+1)]^{-1}`,
/// `ĉ = (k/n) X_(k+1)^{α̂}`, `se(α̂) = α̂/√k`.
pub fn hill_estimate(values: &[f64], k: usize) -> Result<RegVarEstimate> {
    let n = values.len();
    if k == 0 || k >= n {
        return Err(Error::param("k", k as f64, "1 <= k < n"));
    }
    let desc = sorted_desc(values);
    hill_sorted(&desc, k)
}

fn hill_sorted(desc: &[f64], k: usize) -> Result<RegVarEstimate> {
    let n = desc.len();
    let pivot = desc[k];
    if !(pivot > 0.0) || !pivot.is_finite() {
        return Err(Error::InsufficientData(format!(
            "Hill needs the top {} values positive and finite, X_(k+1) = {pivot}",
            k + 1
        )));
    }
    let ln_pivot = pivot.ln();
    let mean_log = desc[..k].iter().map(|x| x.ln()).sum::<f64>() / k as f64;
    let gap = mean_log - ln_pivot;
    if !(gap > 0.0) {
        return Err(Error::InsufficientData(
            "top order statistics are tied; Hill estimate undefined".into(),
        ));
    }
    let alpha = 1.0 / gap;
    let c = (k as f64 / n as f64) * pivot.powf(alpha);
    let kf = k as f64;
    let alpha_se = alpha / kf.sqrt();
    // delta method on ln ĉ = ln(k/n) + α̂ ln X_(k+1)
    let c_se = c * (1.0 / kf + (ln_pivot * alpha_se).powi(2)).sqrt();
    Ok(RegVarEstimate {
        alpha,
        c,
        k,
        n,
        alpha_se,
        c_se,
    })
}

/// Hill at `k/2`, `k`, `2k` (clamped to the valid range).
pub fn hill_sweep(values: &[f64], k: usize) -> Vec<Result<RegVarEstimate>> {
    let desc = sorted_desc(values);
    let n = desc.len();
    [k / 2, k, 2 * k]
        .into_iter()
        .map(|kk| {
            let kk = kk.clamp(1, n.saturating_sub(1).max(1));
            if kk >= n {
                Err(Error::param("k", kk as f64, "1 <= k < n"))
            } else {
                hill_sorted(&desc, kk)
            }
        })
        .collect()
}

/// Empirical `(1 - 1/n_target)` quantile used as `a_n`.
pub fn normalizer_a_n(values: &[f64], n_target: usize) -> Result<f64> {
    let big_n = values.len();
    if n_target < 2 || n_target > big_n {
        return Err(Error::param(
            "n_target",
            n_target as f64,
            "2 <= n_target <= sample size",
        ));
    }
    let rank = big_n - big_n / n_target;
    Ok(sorted_asc(values)[rank - 1])
}

fn count_above(asc: &[f64], x: f64) -> usize {
    asc.len() - asc.partition_point(|&v| v <= x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub r: f64,
    /// `n · P̂(X > a_n r)`.
    pub empirical: f64,
    /// `n · ĉ (a_n r)^{-α̂}` when a fit is supplied.
    pub model: Option<f64>,
}

pub fn tail_curve(
    values: &[f64],
    a_n: f64,
    n: usize,
    r_grid: &[f64],
    fit: Option<&RegVarEstimate>,
) -> Result<Vec<TailPoint>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if r_grid.iter().any(|&r| !(r > 0.0)) || r_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InsufficientData(
            "r grid must be positive and strictly ascending".into(),
        ));
    }
    let asc = sorted_asc(values);
    let total = asc.len() as f64;
    Ok(r_grid
        .iter()
        .map(|&r| {
            let x = a_n * r;
            TailPoint {
                r,
                empirical: n as f64 * count_above(&asc, x) as f64 / total,
                model: fit.map(|f| n as f64 * f.c * x.powf(-f.alpha)),
            }
        })
        .collect())
}

/// Minimum exceedance count for [`scaling_check`].
pub const MIN_SCALING_EXCEEDANCES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub s: f64,
    pub x0: f64,
    /// `P̂(X > s x0) / P̂(X > x0)`.
    pub ratio: f64,
    /// `s^{-α̂}`.
    pub expected: f64,
    pub alpha_hat: f64,
    /// Combined standard error of ratio and prediction.
    pub se: f64,
    pub exceedances_base: usize,
    pub exceedances_scaled: usize,
    pub sufficient: bool,
    /// `|ratio - expected| <= 4 se`.
    pub agrees: bool,
}

pub fn scaling_check(values: &[f64], s: f64, x0: f64) -> Result<ScalingCheck> {
    scaling_check_with(values, s, x0, MIN_SCALING_EXCEEDANCES)
}

/// [`scaling_check`] with an explicit exceedance floor. Too few exceedances
/// are reported through `sufficient`, not as an error.
pub fn scaling_check_with(values: &[f64], s: f64, x0: f64, min_exceedances: usize) -> Result<ScalingCheck> {
    if !(s > 0.0) || s == 1.0 || !s.is_finite() {
        return Err(Error::param("s", s, "s > 0 and s != 1"));
    }
    if !(x0 > 0.0) {
        return Err(Error::param("x0", x0, "x0 > 0"));
    }
    let fit = hill_estimate(values, default_k(values.len()))?;
    let asc = sorted_asc(values);
    let base = count_above(&asc, x0);
    let scaled = count_above(&asc, s * x0);
    let small = base.min(scaled);
    let ratio = if base > 0 {
        scaled as f64 / base as f64
    } else {
        f64::NAN
    };
    let expected = s.powf(-fit.alpha);
    let ratio_var = if small > 0 {
        ratio * ratio * (1.0 / small as f64 - 1.0 / base.max(scaled) as f64).abs()
    } else {
        f64::INFINITY
    };
    let model_se = s.ln().abs() * expected * fit.alpha_se;
    let se = (ratio_var + model_se * model_se).sqrt();
    let sufficient = small >= min_exceedances;
    Ok(ScalingCheck {
        s,
        x0,
        ratio,
        expected,
        alpha_hat: fit.alpha,
        se,
        exceedances_base: base,
        exceedances_scaled: scaled,
        sufficient,
        agrees: sufficient && (ratio - expected).abs() <= 4.0 * se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreimanPoint {
    pub x: f64,
    /// `P̂(YZ > x) / P̂(Z > x)`.
    pub ratio: f64,
    pub se: f64,
    pub product_exceedances: usize,
    pub innovation_exceedances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreimanReport {
    pub alpha: f64,
    pub points: Vec<BreimanPoint>,
    pub mean_ratio: f64,
    /// `E[Y^α]` by quadrature.
    pub limit: f64,
    pub limit_method: String,
    pub n: usize,
}

const CHUNK: usize = 4096;

/// Monte Carlo ratio `P(YZ > x)/P(Z > x)` against the Breiman limit `E[Y^α]`.
///
/// `Z` is one-sided Pareto with the tail index and scale of `z_tail`; `Y`
/// is drawn independently from a bounded nonnegative law. Standard errors
/// treat the two exceedance counts as independent Poisson counts, which
/// overstates the variance since they share the `Z` sample.
pub fn breiman_check(
    key: &StreamKey,
    multiplier: &MultiplierLaw,
    z_tail: &TailModel,
    n: usize,
    x_grid: &[f64],
) -> Result<BreimanReport> {
    multiplier.validate()?;
    z_tail.validate()?;
    let nonnegative = match *multiplier {
        MultiplierLaw::Constant { value } => value >= 0.0,
        MultiplierLaw::Uniform { lower, .. } => lower >= 0.0,
    };
    if !nonnegative {
        return Err(Error::param("multiplier", -1.0, "Y >= 0"));
    }
    if n == 0 {
        return Err(Error::param("n", 0.0, "n >= 1"));
    }
    if x_grid.is_empty() || x_grid.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InsufficientData("x grid must be nonempty and positive".into()));
    }
    let alpha = z_tail.alpha;
    let scale = z_tail.scale();
    let chunks = n.div_ceil(CHUNK);
    let counts: Vec<(Vec<usize>, Vec<usize>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = key.child(c as u64).rng();
            let len = CHUNK.min(n - c * CHUNK);
            let mut num = vec![0usize; x_grid.len()];
            let mut den = vec![0usize; x_grid.len()];
            for _ in 0..len {
                let z = pareto(&mut rng, alpha, scale);
                let y = multiplier.sample(&mut rng);
                for (i, &x) in x_grid.iter().enumerate() {
                    num[i] += (y * z > x) as usize;
                    den[i] += (z > x) as usize;
                }
            }
            (num, den)
        })
        .collect();
    let mut num = vec![0usize; x_grid.len()];
    let mut den = vec![0usize; x_grid.len()];
    for (a, b) in &counts {
        for i in 0..x_grid.len() {
            num[i] += a[i];
            den[i] += b[i];
        }
    }
    let points: Vec<BreimanPoint> = x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let ratio = if den[i] > 0 {
                num[i] as f64 / den[i] as f64
            } else {
                f64::NAN
            };
            let se = ratio * (1.0 / num[i] as f64 + 1.0 / den[i] as f64).sqrt();
            BreimanPoint {
                x,
                ratio,
                se,
                product_exceedances: num[i],
                innovation_exceedances: den[i],
            }
        })
        .collect();
    let mean_ratio = points.iter().map(|p| p.ratio).sum::<f64>() / points.len() as f64;
    Ok(BreimanReport {
        alpha,
        points,
        mean_ratio,
        limit: multiplier.abs_moment(alpha),
        limit_method: "adaptive Simpson quadrature".into(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantMethod {
    ClosedForm,
    MonteCarlo,
}

/// Predicted limit of `P(X(t) > x) / P(Z(t) > x)`, i.e. `Σ_j E|Ψ_j(t)|^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConstant {
    pub t: f64,
    pub value: f64,
    pub se: f64,
    pub method: ConstantMethod,
}

/// Marginal tail constant `Σ_{j≥1} E|Ψ_j(t)|^α` for one-sided innovations.
///
/// Closed form for geometric (`|φ(t)|^α / (1 - |a|^α)`), SRE
/// (`1 / (1 - |φ(t)|^α E|Y|^α)`) and finite-list families; Monte Carlo with
/// `samples` replicates otherwise.
pub fn series_tail_constant(
    key: &StreamKey,
    family: &CoefficientFamily,
    grid: Grid,
    t: f64,
    alpha: f64,
    samples: usize,
) -> Result<TailConstant> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", alpha, "alpha > 0"));
    }
    family.validate(grid)?;
    let closed = |value| TailConstant {
        t,
        value,
        se: 0.0,
        method: ConstantMethod::ClosedForm,
    };
    match family {
        CoefficientFamily::Geometric { ratio, profile } => {
            Ok(closed(profile.eval(t).abs().powf(alpha) / (1.0 - ratio.abs().powf(alpha))))
        }
        CoefficientFamily::SreProduct {
            multiplier,
            profile,
        } => {
            let q = profile.eval(t).abs().powf(alpha) * multiplier.abs_moment(alpha);
            if q >= 1.0 {
                return Err(Error::DivergentTailConstant(q));
            }
            Ok(closed(1.0 / (1.0 - q)))
        }
        CoefficientFamily::FiniteList { paths } => {
            Ok(closed(paths.iter().map(|p| p.eval(t).abs().powf(alpha)).sum()))
        }
        CoefficientFamily::BilinearProduct { .. } => {
            series_tail_constant_mc(key, family, grid, t, alpha, samples, MAX_TERMS)
        }
    }
}

/// Monte Carlo route for [`series_tail_constant`], available for every family.
///
/// Each replicate sums `|Ψ_j(t)|^α` until a term drops below `1e-17` of the
/// running sum after at least ten terms, or `max_terms` is reached.
pub fn series_tail_constant_mc(
    key: &StreamKey,
    family: &CoefficientFamily,
    grid: Grid,
    t: f64,
    alpha: f64,
    samples: usize,
    max_terms: usize,
) -> Result<TailConstant> {
    if samples < 2 {
        return Err(Error::param("samples", samples as f64, "samples >= 2"));
    }
    let k = grid.floor_index(t);
    let sums = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut stream = CoefficientStream::new(&key.child(s), family, grid)?;
            let mut total = 0.0;
            for j in 1..=max_terms.min(MAX_TERMS) {
                let term = stream.next_term()?.path.values()[k].abs().powf(alpha);
                total += term;
                if j >= 10 && term <= 1e-17 * total {
                    break;
                }
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(TailConstant {
        t,
        value: mean,
        se: (var / n).sqrt(),
        method: ConstantMethod::MonteCarlo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalPoint {
    /// Upper-tail probability level of the threshold.
    pub level: f64,
    pub x: f64,
    pub empirical: f64,
    pub innovation_tail: f64,
    pub ratio: f64,
    pub se: f64,
}

/// Ratio of the empirical tail of `values` to the exact innovation tail
/// `p c x^{-α}`, at the empirical `(1 - level)` quantiles.
pub fn marginal_tail_ratio(values: &[f64], innovation: &TailModel, levels: &[f64]) -> Result<Vec<MarginalPoint>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let asc = sorted_asc(values);
    let n = asc.len();
    levels
        .iter()
        .map(|&level| {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::param("level", level, "0 < level < 1"));
            }
            let rank = ((n as f64) * (1.0 - level)).ceil() as usize;
            let x = asc[rank.clamp(1, n) - 1];
            let count = count_above(&asc, x);
            if count == 0 {
                return Err(Error::InsufficientData(format!("no exceedances at level {level}")));
            }
            let empirical = count as f64 / n as f64;
            let innovation_tail = innovation.p * innovation.exceedance(x);
            let ratio = empirical / innovation_tail;
            Ok(MarginalPoint {
                level,
                x,
                empirical,
                innovation_tail,
                ratio,
                se: ratio / (count as f64).sqrt(),
            })
        })
        .collect()
}

/// Empirical `q` quantile: ascending order statistic of rank `⌈N q⌉`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", q, "0 < q < 1"));
    }
    let asc = sorted_asc(values);
    Ok(quantile_sorted(&asc, q))
}

/// One cell `V_{r;S}` of the pizza-slice table: norm above `a_n r`, sign
/// at the argmax and argmax location in one of `bins` equal bins of (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub r: f64,
    pub positive: bool,
    pub bin: usize,
    /// `n · P̂(‖Z‖ > a_n r, angle ∈ S)`.
    pub empirical: f64,
    /// `n ĉ (a_n r)^{-α̂} σ̂(S)`, with `σ̂` taken from the exceedances of `a_n`.
    pub model: f64,
}

fn slice_of(path: &CadlagPath, bins: usize) -> (bool, usize) {
    let k = path.argmax_abs();
    let t = path.grid().point(k);
    let bin = ((t * bins as f64).ceil() as usize).clamp(1, bins) - 1;
    (path.values()[k] > 0.0, bin)
}

/// Product-form check of the limit measure on the sets `V_{r;S}`.
pub fn pizza_slices(
    panel: &[CadlagPath],
    a_n: f64,
    n: usize,
    r_grid: &[f64],
    bins: usize,
    fit: &RegVarEstimate,
) -> Result<Vec<SliceRow>> {
    if panel.is_empty() {
        return Err(Error::InsufficientData("empty panel".into()));
    }
    if bins == 0 {
        return Err(Error::param("bins", 0.0, "bins >= 1"));
    }
    let cells = 2 * bins;
    let cell = |positive: bool, bin: usize| usize::from(positive) * bins + bin;
    let tagged: Vec<(f64, usize)> = panel
        .iter()
        .map(|p| {
            let (positive, bin) = slice_of(p, bins);
            (p.sup_norm(), cell(positive, bin))
        })
        .collect();
    let mut sigma = vec![0.0; cells];
    let above: Vec<usize> = tagged.iter().filter(|(x, _)| *x > a_n).map(|(_, c)| *c).collect();
    if above.is_empty() {
        return Err(Error::InsufficientData(format!("no path exceeds a_n = {a_n}")));
    }
    for c in &above {
        sigma[*c] += 1.0 / above.len() as f64;
    }
    let total = panel.len() as f64;
    let mut rows = Vec::with_capacity(r_grid.len() * cells);
    for &r in r_grid {
        let x = a_n * r;
        let mut counts = vec![0usize; cells];
        for (norm, c) in &tagged {
            if *norm > x {
                counts[*c] += 1;
            }
        }
        let radial = n as f64 * fit.c * x.powf(-fit.alpha);
        for positive in [false, true] {
            for bin in 0..bins {
                let c = cell(positive, bin);
                rows.push(SliceRow {
                    r,
                    positive,
                    bin,
                    empirical: n as f64 * counts[c] as f64 / total,
                    model: radial * sigma[c],
                });
            }
        }
    }
    Ok(rows)
}

/// Polar decomposition of one extreme path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub radius: f64,
    pub angle: CadlagPath,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleMarginal {
    pub t: f64,
    pub mean: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Grid time of the first maximiser of `|angle|`, per sample.
    pub argmax_locations: Vec<f64>,
    /// Fraction of angles that are `+1` at their argmax.
    pub positive_fraction: f64,
    pub angle_marginals: Vec<AngleMarginal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub threshold: f64,
    pub samples: Vec<SpectralSample>,
    pub summary: SpectralSummary,
}

/// Minimum number of exceedances for [`spectral_estimate`].
pub const MIN_SPECTRAL_K: usize = 30;

/// Time points at which angle marginals are summarised.
pub const ANGLE_POINTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Angles `x/‖x‖_∞` of the `k` paths with the largest sup-norm.
///
/// The threshold is the `(k+1)`-th largest norm (0 if the panel has exactly
/// `k` paths); paths at or below it are not used.
pub fn spectral_estimate(panel: &[CadlagPath], k: usize) -> Result<SpectralEstimate> {
    if k < MIN_SPECTRAL_K {
        return Err(Error::param("k", k as f64, "k >= 30"));
    }
    if panel.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} paths, need at least {k}",
            panel.len()
        )));
    }
    let mut order: Vec<(f64, usize)> = panel.iter().map(|p| p.sup_norm()).zip(0..).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let threshold = order.get(k).map_or(0.0, |o| o.0);
    let samples: Vec<SpectralSample> = order[..k]
        .iter()
        .filter(|(norm, _)| *norm > threshold)
        .map(|&(radius, i)| SpectralSample {
            radius,
            angle: panel[i].map(|v| v / radius),
            threshold,
        })
        .collect();
    if samples.len() < k {
        return Err(Error::InsufficientData(format!(
            "only {} paths strictly above the threshold {threshold}",
            samples.len()
        )));
    }
    let argmax_locations: Vec<f64> = samples
        .iter()
        .map(|s| s.angle.grid().point(s.angle.argmax_abs()))
        .collect();
    let positive = samples
        .iter()
        .filter(|s| s.angle.values()[s.angle.argmax_abs()] > 0.0)
        .count();
    let angle_marginals = ANGLE_POINTS
        .iter()
        .map(|&t| {
            let vals = sorted_asc(&samples.iter().map(|s| s.angle.eval(t)).collect::<Vec<_>>());
            AngleMarginal {
                t,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                q10: quantile_sorted(&vals, 0.1),
                median: quantile_sorted(&vals, 0.5),
                q90: quantile_sorted(&vals, 0.9),
            }
        })
        .collect();
    Ok(SpectralEstimate {
        threshold,
        summary: SpectralSummary {
            argmax_locations,
            positive_fraction: positive as f64 / samples.len() as f64,
            angle_marginals,
        },
        samples,
    })
}

/// Lower empirical quantile of an ascending sample.
fn quantile_sorted(asc: &[f64], q: f64) -> f64 {
    let rank = ((asc.len() as f64) * q).ceil() as usize;
    asc[rank.clamp(1, asc.len()) - 1]
}

/// Percentile bootstrap band for a statistic of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

pub fn bootstrap_band(
    key: &StreamKey,
    values: &[f64],
    statistic: impl Fn(&[f64]) -> f64 + Sync,
    resamples: usize,
    level: f64,
) -> Result<Band> {
    if values.is_empty() || resamples < 2 || !(level > 0.0 && level < 1.0) {
        return Err(Error::InsufficientData("bootstrap needs data, resamples >= 2, 0 < level < 1".into()));
    }
    let mut stats: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = key.child(b).rng();
            let resample: Vec<f64> = (0..values.len())
                .map(|_| values[rng.random_range(0..values.len())])
                .collect();
            statistic(&resample)
        })
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - level) / 2.0;
    Ok(Band {
        estimate: statistic(values),
        lower: quantile_sorted(&stats, tail),
        upper: quantile_sorted(&stats, 1.0 - tail),
        level,
    })
}

/// KS distance between the empirical law of `locations` and the uniform law
/// on the grid points `{t_1, ..., t_m}`.
pub fn ks_distance_uniform_grid(locations: &[f64], grid: Grid) -> Result<f64> {
    if locations.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let m = grid.resolution();
    let mut counts = vec![0usize; m + 1];
    for &t in locations {
        counts[grid.nearest_index(t)] += 1;
    }
    let n = locations.len() as f64;
    let mut cum = 0usize;
    let mut worst = 0.0_f64;
    for (k, c) in counts.iter().enumerate() {
        cum += c;
        let model = k as f64 / m as f64;
        worst = worst.max((cum as f64 / n - model).abs());
    }
    Ok(worst)
}

/// One-sample KS distance against a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let asc = sorted_asc(sample);
    let n = asc.len() as f64;
    Ok(asc
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let a = sorted_asc(a);
    let b = sorted_asc(b);
    let (mut i, mut j) = (0, 0);
    let mut worst = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub delta: f64,
    pub epsilon: f64,
    /// `n P̂(w''(Z, δ) > a_n ε)`.
    pub c1: f64,
    /// `n P̂(w(Z, [0, δ)) > a_n ε)`.
    pub c2: f64,
    /// `n P̂(w(Z, [1-δ, 1)) > a_n ε)`.
    pub c3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusThresholds {
    /// Pass if the smallest-δ estimate is below this fraction of the largest-δ one.
    pub fraction: f64,
    /// ... or below this absolute floor.
    pub floor: f64,
}

impl Default for ModulusThresholds {
    fn default() -> Self {
        ModulusThresholds {
            fraction: 0.1,
            floor: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusDiagnostic {
    pub n: usize,
    pub a_n: f64,
    pub rows: Vec<ModulusRow>,
    pub thresholds: ModulusThresholds,
    pub pass_c1: bool,
    pub pass_c2: bool,
    pub pass_c3: bool,
    pub pass: bool,
}

impl ModulusDiagnostic {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,epsilon,c1,c2,c3\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.delta, r.epsilon, r.c1, r.c2, r.c3));
        }
        out
    }
}

/// Finite-`n` estimates of the relative-compactness quantities for a panel.
pub fn modulus_diagnostic(
    panel: &[CadlagPath],
    a_n: f64,
    n: usize,
    epsilons: &[f64],
    deltas: &[f64],
    thresholds: ModulusThresholds,
) -> Result<ModulusDiagnostic> {
    if panel.is_empty() {
        return Err(Error::InsufficientData("empty panel".into()));
    }
    if deltas.is_empty() || deltas.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InsufficientData("delta grid must be nonempty and strictly decreasing".into()));
    }
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InsufficientData("epsilon grid must be nonempty and positive".into()));
    }
    // per path, per δ: (w'', left, right)
    let moduli = panel
        .par_iter()
        .map(|p| {
            deltas
                .iter()
                .map(|&d| {
                    Ok((
                        p.modulus_wpp(d)?,
                        p.modulus_interval(Interval::left(d)?),
                        p.modulus_interval(Interval::right(d)?),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = n as f64 / panel.len() as f64;
    let mut rows = Vec::with_capacity(deltas.len() * epsilons.len());
    for (di, &delta) in deltas.iter().enumerate() {
        for &epsilon in epsilons {
            let level = a_n * epsilon;
            let (mut c1, mut c2, mut c3) = (0usize, 0usize, 0usize);
            for m in &moduli {
                let (a, b, c) = m[di];
                c1 += (a > level) as usize;
                c2 += (b > level) as usize;
                c3 += (c > level) as usize;
            }
            rows.push(ModulusRow {
                delta,
                epsilon,
                c1: scale * c1 as f64,
                c2: scale * c2 as f64,
                c3: scale * c3 as f64,
            });
        }
    }
    let column_pass = |pick: fn(&ModulusRow) -> f64| {
        epsilons.iter().all(|&e| {
            let first = rows.iter().find(|r| r.epsilon == e).map(pick).unwrap_or(0.0);
            let last = rows.iter().rev().find(|r| r.epsilon == e).map(pick).unwrap_or(0.0);
            last < thresholds.fraction * first || last < thresholds.floor
        })
    };
    let pass_c1 = column_pass(|r| r.c1);
    let pass_c2 = column_pass(|r| r.c2);
    let pass_c3 = column_pass(|r| r.c3);
    Ok(ModulusDiagnostic {
        n,
        a_n,
        rows,
        thresholds,
        pass_c1,
        pass_c2,
        pass_c3,
        pass: pass_c1 && pass_c2 && pass_c3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn pareto_sample(seed: u64, alpha: f64, n: usize) -> Vec<f64> {
        let mut rng = StreamKey::new(seed).rng();
        (0..n).map(|_| pareto(&mut rng, alpha, 1.0)).collect()
    }

    #[test]
    fn hill_formula_arithmetic() {
        let est = hill_estimate(&[1.0, E.powi(3), E, E.powi(2)], 2).unwrap();
        assert!((est.alpha - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(est.k, 2);
        assert_eq!(est.n, 4);
        assert!((est.alpha_se - est.alpha / 2f64.sqrt()).abs() < 1e-15);
        assert!((est.c - 0.5 * E.powf(2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn hill_errors() {
        assert!(hill_estimate(&[1.0, 2.0], 2).is_err());
        assert!(hill_estimate(&[1.0, 2.0], 0).is_err());
        assert!(matches!(
            hill_estimate(&[0.0, 0.0, 3.0, 5.0], 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn hill_recovers_pareto_index() {
        let xs = pareto_sample(1, 2.0, 100_000);
        let est = hill_estimate(&xs, default_k(xs.len())).unwrap();
        assert!((est.alpha - 2.0).abs() <= 4.0 * est.alpha_se, "{}", est.alpha);
        let sweep = hill_sweep(&xs, default_k(xs.len()));
        assert_eq!(sweep.len(), 3);
        assert_eq!(sweep[1].as_ref().unwrap().alpha, est.alpha);
    }

    #[test]
    fn a_n_convention() {
        let xs: Vec<f64> = (1..=100).map(f64::from).rev().collect();
        assert_eq!(normalizer_a_n(&xs, 100).unwrap(), 99.0);
        assert_eq!(normalizer_a_n(&xs, 2).unwrap(), 50.0);
        assert!(normalizer_a_n(&xs, 1).is_err());
        assert!(normalizer_a_n(&xs, 101).is_err());
        let ys = pareto_sample(2, 1.0, 1_000_000);
        let a = normalizer_a_n(&ys, 10_000).unwrap();
        assert!((a / 10_000.0 - 1.0).abs() < 0.1, "{a}");
    }

    #[test]
    fn tail_curve_edges() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let c = tail_curve(&xs, 1.0, 10, &[0.5, 5.0], None).unwrap();
        assert_eq!(c[0].empirical, 10.0);
        assert_eq!(c[1].empirical, 0.0);
        assert!(c[0].model.is_none());
        assert!(tail_curve(&[], 1.0, 10, &[1.0], None).is_err());
        assert!(tail_curve(&xs, 1.0, 10, &[2.0, 1.0], None).is_err());
    }

    #[test]
    fn tail_curve_pareto_level() {
        let xs = pareto_sample(3, 1.0, 1_000_000);
        let a_n = normalizer_a_n(&xs, 1000).unwrap();
        let c = tail_curve(&xs, a_n, 1000, &[2.0], None).unwrap();
        // binomial SE of n·P̂ at p = 5e-4, N = 1e6
        let se = 1000.0 * (5e-4 * (1.0 - 5e-4) / 1e6f64).sqrt();
        assert!((c[0].empirical - 0.5).abs() <= 4.0 * se, "{}", c[0].empirical);
    }

    #[test]
    fn scaling_check_pareto() {
        for (alpha, seed) in [(1.0, 4), (2.0, 5)] {
            let xs = pareto_sample(seed, alpha, 200_000);
            let r = scaling_check(&xs, 2.0, 5.0).unwrap();
            assert!(r.sufficient);
            assert!((r.ratio - 2f64.powf(-alpha)).abs() < 0.05, "{r:?}");
            assert!(r.agrees, "{r:?}");
        }
        let xs = pareto_sample(6, 1.0, 1000);
        assert!(scaling_check(&xs, 1.0, 2.0).is_err());
        assert!(!scaling_check(&xs, 2.0, 100.0).unwrap().sufficient);
    }

    #[test]
    fn breiman_identity_and_constant_multipliers() {
        let z = TailModel::new(1.0, 1.0, 1.0).unwrap();
        let key = StreamKey::new(7);
        let one = breiman_check(&key, &MultiplierLaw::Constant { value: 1.0 }, &z, 50_000, &[5.0, 20.0]).unwrap();
        for p in &one.points {
            assert_eq!(p.ratio, 1.0);
        }
        assert_eq!(one.limit, 1.0);
        let three = breiman_check(&key, &MultiplierLaw::Constant { value: 3.0 }, &z, 200_000, &[10.0]).unwrap();
        assert_eq!(three.limit, 3.0);
        assert!((three.points[0].ratio - 3.0).abs() < 4.0 * three.points[0].se);
        let neg = MultiplierLaw::Uniform {
            lower: -1.0,
            upper: 1.0,
        };
        assert!(breiman_check(&key, &neg, &z, 10, &[1.0]).is_err());
    }

    #[test]
    fn tail_constant_closed_forms() {
        let g = Grid::new(4).unwrap();
        let key = StreamKey::new(0);
        let geo = series_tail_constant(&key, &CoefficientFamily::geometric(0.5), g, 1.0, 1.5, 10).unwrap();
        assert!((geo.value - 1.0 / (1.0 - 0.5f64.powf(1.5))).abs() < 1e-12);
        assert!((geo.value - 1.5469).abs() < 1e-4);
        let sre = CoefficientFamily::sre(MultiplierLaw::Uniform {
            lower: 0.0,
            upper: 0.9,
        });
        let c = series_tail_constant(&key, &sre, g, 1.0, 1.5, 10).unwrap();
        assert!((c.value - 1.0 / (1.0 - 0.9f64.powf(1.5) / 2.5)).abs() < 1e-9);
        assert!((c.value - 1.5187).abs() < 1e-4);
        let list = CoefficientFamily::FiniteList {
            paths: vec![CadlagPath::constant(g, 1.0)],
        };
        assert_eq!(series_tail_constant(&key, &list, g, 0.5, 1.5, 10).unwrap().value, 1.0);
        let divergent = CoefficientFamily::sre(MultiplierLaw::Uniform {
            lower: 0.0,
            upper: 2.0,
        });
        assert!(matches!(
            series_tail_constant(&key, &divergent, g, 1.0, 1.5, 10),
            Err(Error::DivergentTailConstant(_))
        ));
    }

    #[test]
    fn tail_constant_mc_matches_closed_form() {
        let g = Grid::new(4).unwrap();
        let key = StreamKey::new(12);
        let fam = CoefficientFamily::sre(MultiplierLaw::Uniform {
            lower: 0.0,
            upper: 0.9,
        });
        let closed = series_tail_constant(&key, &fam, g, 0.5, 1.5, 10).unwrap();
        let mc = series_tail_constant_mc(&key, &fam, g, 0.5, 1.5, 20_000, 500).unwrap();
        assert!((mc.value - closed.value).abs() <= 3.0 * mc.se, "{mc:?} vs {closed:?}");
    }

    #[test]
    fn spectral_constant_paths() {
        let g = Grid::new(10).unwrap();
        let panel: Vec<CadlagPath> = (1..=40)
            .map(|i| CadlagPath::constant(g, if i % 3 == 0 { -(i as f64) } else { i as f64 }))
            .collect();
        let est = spectral_estimate(&panel, 30).unwrap();
        assert_eq!(est.samples.len(), 30);
        assert_eq!(est.threshold, 10.0);
        for s in &est.samples {
            assert!(s.radius > est.threshold);
            let v = s.angle.values()[0];
            assert!(v == 1.0 || v == -1.0);
            assert_eq!(s.angle, CadlagPath::constant(g, v));
        }
        assert!(spectral_estimate(&panel, 29).is_err());
        assert!(spectral_estimate(&panel[..20], 30).is_err());
        // ties at the threshold leave fewer than k usable paths
        let tied = vec![CadlagPath::constant(g, 1.0); 40];
        assert!(spectral_estimate(&tied, 30).is_err());
    }

    #[test]
    fn ks_distances() {
        let g = Grid::new(4).unwrap();
        let exact = [0.25, 0.5, 0.75, 1.0];
        assert_eq!(ks_distance_uniform_grid(&exact, g).unwrap(), 0.0);
        assert_eq!(ks_distance_uniform_grid(&[1.0, 1.0], g).unwrap(), 0.75);
        let u = [0.1, 0.3, 0.5, 0.7, 0.9];
        assert!((ks_distance(&u, |x| x).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
    }

    #[test]
    fn modulus_diagnostic_exact_zero_cases() {
        let g = Grid::new(20).unwrap();
        let singles: Vec<CadlagPath> = (1..=20).map(|k| CadlagPath::step(g, k, k as f64)).collect();
        let d = modulus_diagnostic(&singles, 1.0, 20, &[0.1, 0.5], &[0.5, 0.1, 0.01], Default::default()).unwrap();
        assert!(d.rows.iter().all(|r| r.c1 == 0.0));
        assert!(d.pass_c1);
        let constants = vec![CadlagPath::constant(g, 3.0); 5];
        let d = modulus_diagnostic(&constants, 1.0, 5, &[0.1], &[0.5, 0.05], Default::default()).unwrap();
        assert!(d.rows.iter().all(|r| r.c1 == 0.0 && r.c2 == 0.0 && r.c3 == 0.0));
        assert!(d.pass);
        assert!(d.to_csv().starts_with("delta,epsilon,c1,c2,c3\n0.5,0.1,0,0,0\n"));
        assert!(modulus_diagnostic(&[], 1.0, 1, &[0.1], &[0.5], Default::default()).is_err());
        assert!(modulus_diagnostic(&constants, 1.0, 5, &[0.1], &[0.1, 0.5], Default::default()).is_err());
    }

    #[test]
    fn pizza_slices_sum_to_tail_curve() {
        let g = Grid::new(8).unwrap();
        let mut rng = StreamKey::new(9).rng();
        let panel: Vec<CadlagPath> = (0..2000)
            .map(|_| {
                let k = rng.random_range(1..=8);
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                CadlagPath::step(g, k, sign * pareto(&mut rng, 1.5, 1.0))
            })
            .collect();
        let norms: Vec<f64> = panel.iter().map(|p| p.sup_norm()).collect();
        let a_n = normalizer_a_n(&norms, 50).unwrap();
        let fit = hill_estimate(&norms, 45).unwrap();
        let rows = pizza_slices(&panel, a_n, 50, &[1.0, 2.0], 4, &fit).unwrap();
        assert_eq!(rows.len(), 16);
        let curve = tail_curve(&norms, a_n, 50, &[1.0, 2.0], Some(&fit)).unwrap();
        for (i, point) in curve.iter().enumerate() {
            let block = &rows[i * 8..(i + 1) * 8];
            let emp: f64 = block.iter().map(|r| r.empirical).sum();
            let model: f64 = block.iter().map(|r| r.model).sum();
            assert!((emp - point.empirical).abs() < 1e-9);
            assert!((model - point.model.unwrap()).abs() < 1e-9);
        }
        assert!(pizza_slices(&panel, a_n, 50, &[1.0], 0, &fit).is_err());
        assert!(pizza_slices(&panel, 1e9, 50, &[1.0], 2, &fit).is_err());
    }

    #[test]
    fn empirical_quantile_rank() {
        let xs: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(empirical_quantile(&xs, 0.995).unwrap(), 199.0);
        assert!(empirical_quantile(&xs, 1.0).is_err());
    }

    #[test]
    fn bootstrap_band_brackets_mean() {
        let xs: Vec<f64> = (0..500).map(|i| (i % 10) as f64).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let b = bootstrap_band(&StreamKey::new(1), &xs, mean, 200, 0.9).unwrap();
        assert!(b.lower <= b.estimate && b.estimate <= b.upper);
        assert!(b.upper - b.lower < 1.0);
    }
}
