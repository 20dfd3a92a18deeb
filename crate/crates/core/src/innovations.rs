//! Regularly varying innovations and the keyed random-stream discipline.
//!
//! Every random draw in the crate comes from a [`StreamKey`]: a master seed
//! plus a lineage of indices (replicate, series index, ...). The key is hashed
//! into a ChaCha8 seed, so a draw depends only on its key and never on the
//! order in which other draws were made or on how work is split across
//! threads.
//!
//! Tails are pure power laws. A [`TailModel`] `(α, c, p)` is realised as a
//! signed Pareto variable with scale `x_m = c^{1/α}`, so that
//! `P(|J| > x) = c x^{-α}` for `x >= x_m` and `P(J > 0) = p`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Open01, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cadlag::{CadlagPath, Grid};
use crate::error::{Error, Result};

/// Identifies one independent random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    seed: u64,
    lineage: Vec<u64>,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey {
            seed,
            lineage: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lineage(&self) -> &[u64] {
        &self.lineage
    }

    /// Key for the `index`-th substream below this one.
    pub fn child(&self, index: u64) -> StreamKey {
        let mut lineage = self.lineage.clone();
        lineage.push(index);
        StreamKey {
            seed: self.seed,
            lineage,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"rvseries/stream/v1");
        h.update(self.seed.to_le_bytes());
        h.update((self.lineage.len() as u64).to_le_bytes());
        for i in &self.lineage {
            h.update(i.to_le_bytes());
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

/// Lineage slots used below a replicate key.
pub mod lineage {
    /// Innovation `Z_j` lives at `replicate.child(INNOVATION).child(j)`.
    pub const INNOVATION: u64 = 0;
    /// Coefficient driver `Y_k` lives at `replicate.child(COEFFICIENT).child(k)`.
    pub const COEFFICIENT: u64 = 1;
}

/// Power-law tail `P(|Z| > x) ~ c x^{-α}` with positive-tail weight `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub alpha: f64,
    pub c: f64,
    pub p: f64,
}

impl TailModel {
    pub fn new(alpha: f64, c: f64, p: f64) -> Result<Self> {
        let t = TailModel { alpha, c, p };
        t.validate()?;
        Ok(t)
    }

    /// Tail with Pareto scale `x_m`, i.e. `c = x_m^α`.
    pub fn from_scale(alpha: f64, scale: f64, p: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::param("scale", scale, "scale > 0"));
        }
        TailModel::new(alpha, scale.powf(alpha), p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", self.alpha, "alpha > 0"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param("c", self.c, "c > 0"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", self.p, "0 <= p <= 1"));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        self.c.powf(1.0 / self.alpha)
    }

    /// `P(|Z| > x)`.
    pub fn exceedance(&self, x: f64) -> f64 {
        let xm = self.scale();
        if x < xm {
            1.0
        } else {
            (x / xm).powf(-self.alpha)
        }
    }

    pub(crate) fn sample_signed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let magnitude = pareto(rng, self.alpha, self.scale());
        let u: f64 = rng.random();
        if u < self.p {
            magnitude
        } else {
            -magnitude
        }
    }
}

/// Inverse-CDF Pareto transform `x_m u^{-1/α}`.
pub fn pareto_from_uniform(u: f64, alpha: f64, scale: f64) -> f64 {
    scale * u.powf(-1.0 / alpha)
}

pub(crate) fn pareto<R: Rng + ?Sized>(rng: &mut R, alpha: f64, scale: f64) -> f64 {
    let u: f64 = Open01.sample(rng);
    pareto_from_uniform(u, alpha, scale)
}

fn check_pareto(alpha: f64, scale: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", alpha, "alpha > 0"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param("scale", scale, "scale > 0"));
    }
    Ok(())
}

/// One Pareto draw: `P(X > x) = (x / x_m)^{-α}` for `x >= x_m`.
///
/// The uniform is drawn from the open interval, so `x_m` is never returned.
pub fn pareto_sample(key: &StreamKey, alpha: f64, scale: f64) -> Result<f64> {
    check_pareto(alpha, scale)?;
    Ok(pareto(&mut key.rng(), alpha, scale))
}

fn check_stable(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::param("alpha", alpha, "0 < alpha <= 2"));
    }
    if !(-1.0..=1.0).contains(&beta) {
        return Err(Error::param("beta", beta, "-1 <= beta <= 1"));
    }
    Ok(())
}

/// Chambers–Mallows–Stuck transform of an angle `v ∈ (-π/2, π/2)` and a
/// standard exponential `w` into a standard α-stable variate.
///
/// For `α = 2` the result is `N(0, 2)`; for `α = 1, β = 0` it is standard
/// Cauchy.
pub fn stable_from_inputs(v: f64, w: f64, alpha: f64, beta: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    if alpha == 1.0 {
        let a = FRAC_PI_2 + beta * v;
        return (a * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / a).ln()) / FRAC_PI_2;
    }
    let zeta = beta * (FRAC_PI_2 * alpha).tan();
    let b = zeta.atan() / alpha;
    let s = (1.0 + zeta * zeta).powf(1.0 / (2.0 * alpha));
    let shifted = alpha * (v + b);
    s * shifted.sin() / v.cos().powf(1.0 / alpha)
        * ((v - shifted).cos() / w).powf((1.0 - alpha) / alpha)
}

pub(crate) fn stable<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    let u: f64 = Open01.sample(rng);
    let v = std::f64::consts::PI * (u - 0.5);
    let w: f64 = Exp1.sample(rng);
    stable_from_inputs(v, w, alpha, beta)
}

pub fn stable_sample(key: &StreamKey, alpha: f64, beta: f64) -> Result<f64> {
    check_stable(alpha, beta)?;
    Ok(stable(&mut key.rng(), alpha, beta))
}

/// Compound-Poisson step path `Z(t) = Σ_{τ_i <= t} J_i` with `N ~ Poisson(λ)`
/// jumps. Jump times are uniform on `[0, 1]` snapped to the nearest grid
/// point with index at least 1, so `Z(0) = 0`.
pub fn compound_poisson_path(
    key: &StreamKey,
    grid: Grid,
    rate: f64,
    jump_tail: &TailModel,
) -> Result<CadlagPath> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::param("rate", rate, "rate >= 0"));
    }
    jump_tail.validate()?;
    let mut rng = key.rng();
    let count = if rate > 0.0 {
        let poisson = Poisson::new(rate).map_err(|_| Error::param("rate", rate, "rate >= 0"))?;
        poisson.sample(&mut rng) as usize
    } else {
        0
    };
    let mut increments = vec![0.0; grid.len()];
    for _ in 0..count {
        let tau: f64 = rng.random();
        let k = grid.nearest_index(tau).max(1);
        increments[k] += jump_tail.sample_signed(&mut rng);
    }
    let mut acc = 0.0;
    for v in increments.iter_mut() {
        acc += *v;
        *v = acc;
    }
    CadlagPath::new(grid, increments)
}

/// `Z = J · 1_{[τ, 1]}` with `τ` uniform on `{t_1, ..., t_m}`.
pub fn single_jump_path(key: &StreamKey, grid: Grid, jump_tail: &TailModel) -> Result<CadlagPath> {
    jump_tail.validate()?;
    let mut rng = key.rng();
    let k = rng.random_range(1..=grid.resolution());
    let jump = jump_tail.sample_signed(&mut rng);
    Ok(CadlagPath::step(grid, k, jump))
}

/// Description of the law of one innovation `Z_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InnovationSpec {
    /// Constant-in-time path carrying one signed Pareto variable.
    ParetoScalar { tail: TailModel },
    /// Constant-in-time path carrying one standard α-stable variable.
    StableScalar { alpha: f64, beta: f64 },
    CompoundPoisson { rate: f64, tail: TailModel },
    SingleJump { tail: TailModel },
    /// Deterministic constant path.
    Constant { value: f64 },
}

impl InnovationSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            InnovationSpec::ParetoScalar { tail } | InnovationSpec::SingleJump { tail } => {
                tail.validate()
            }
            InnovationSpec::StableScalar { alpha, beta } => check_stable(*alpha, *beta),
            InnovationSpec::CompoundPoisson { rate, tail } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::param("rate", *rate, "rate >= 0"));
                }
                tail.validate()
            }
            InnovationSpec::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("value", *value, "finite"))
                }
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            InnovationSpec::ParetoScalar { .. } => "pareto-scalar",
            InnovationSpec::StableScalar { .. } => "stable-scalar",
            InnovationSpec::CompoundPoisson { .. } => "compound-poisson",
            InnovationSpec::SingleJump { .. } => "single-jump",
            InnovationSpec::Constant { .. } => "constant",
        }
    }

    /// Tail index of the innovation, if it is heavy tailed.
    pub fn tail_index(&self) -> Option<f64> {
        match self {
            InnovationSpec::ParetoScalar { tail }
            | InnovationSpec::SingleJump { tail }
            | InnovationSpec::CompoundPoisson { tail, .. } => Some(tail.alpha),
            InnovationSpec::StableScalar { alpha, .. } if *alpha < 2.0 => Some(*alpha),
            _ => None,
        }
    }

    pub fn draw(&self, key: &StreamKey, grid: Grid) -> Result<CadlagPath> {
        self.validate()?;
        match self {
            InnovationSpec::ParetoScalar { tail } => {
                let v = tail.sample_signed(&mut key.rng());
                Ok(CadlagPath::constant(grid, v))
            }
            InnovationSpec::StableScalar { alpha, beta } => {
                let v = stable(&mut key.rng(), *alpha, *beta);
                Ok(CadlagPath::constant(grid, v))
            }
            InnovationSpec::CompoundPoisson { rate, tail } => {
                compound_poisson_path(key, grid, *rate, tail)
            }
            InnovationSpec::SingleJump { tail } => single_jump_path(key, grid, tail),
            InnovationSpec::Constant { value } => Ok(CadlagPath::constant(grid, *value)),
        }
    }
}

/// `count` i.i.d. innovations; element `j` (0-based) is drawn from
/// `key.child(j)` and can be reproduced in isolation.
pub fn iid_panel(
    key: &StreamKey,
    spec: &InnovationSpec,
    grid: Grid,
    count: usize,
) -> Result<Vec<CadlagPath>> {
    if count == 0 {
        return Err(Error::param("count", 0.0, "count >= 1"));
    }
    spec.validate()?;
    (0..count as u64).map(|j| spec.draw(&key.child(j), grid)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tail(alpha: f64, p: f64) -> TailModel {
        TailModel::new(alpha, 1.0, p).unwrap()
    }

    #[test]
    fn keys_are_deterministic_and_split() {
        let k = StreamKey::new(7).child(3);
        let a: Vec<u64> = (0..4).map(|_| k.rng().random()).collect();
        let b: Vec<u64> = (0..4).map(|_| k.rng().random()).collect();
        assert_eq!(a, b);
        let x: u64 = StreamKey::new(7).child(4).rng().random();
        let y: u64 = StreamKey::new(8).child(3).rng().random();
        let z: u64 = StreamKey::new(7).child(3).child(0).rng().random();
        assert_ne!(a[0], x);
        assert_ne!(a[0], y);
        assert_ne!(a[0], z);
    }

    #[test]
    fn pareto_inverse_cdf() {
        assert_eq!(pareto_from_uniform(0.25, 2.0, 1.0), 2.0);
        assert_eq!(pareto_from_uniform(1.0, 2.0, 3.0), 3.0);
        let key = StreamKey::new(1);
        for i in 0..10_000 {
            assert!(pareto_sample(&key.child(i), 0.5, 2.0).unwrap() > 2.0);
        }
        assert!(pareto_sample(&key, 0.0, 1.0).is_err());
        assert!(pareto_sample(&key, 1.0, -1.0).is_err());
    }

    #[test]
    fn stable_golden_values() {
        // symmetric case at the zero angle is exactly zero
        assert_eq!(stable_from_inputs(0.0, 1.0, 1.5, 0.0), 0.0);
        // α = 2 collapses to 2 sin(v) sqrt(w)
        let v: f64 = 0.4;
        let w: f64 = 1.3;
        let g = stable_from_inputs(v, w, 2.0, 0.0);
        assert!((g - 2.0 * v.sin() * w.sqrt()).abs() < 1e-12);
        // α = 1, β = 0 collapses to tan(v)
        assert!((stable_from_inputs(v, w, 1.0, 0.0) - v.tan()).abs() < 1e-12);
        // independent evaluation of the transform at (v, w) = (0.3, 1), α = 1.5
        let s = stable_from_inputs(0.3, 1.0, 1.5, 0.0);
        assert!((s - 0.450_110_022_546_271_85).abs() < 1e-12, "{s}");
        assert!(stable_sample(&StreamKey::new(0), 2.5, 0.0).is_err());
        assert!(stable_sample(&StreamKey::new(0), 1.0, 1.5).is_err());
    }

    #[test]
    fn compound_poisson_structure() {
        let g = Grid::new(50).unwrap();
        let key = StreamKey::new(11);
        let zero = compound_poisson_path(&key, g, 0.0, &tail(1.5, 0.5)).unwrap();
        assert_eq!(zero, CadlagPath::zero(g));
        for i in 0..200 {
            let p = compound_poisson_path(&key.child(i), g, 3.0, &tail(1.0, 1.0)).unwrap();
            assert_eq!(p.values()[0], 0.0);
            assert!(p.values().windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(compound_poisson_path(&key, g, -1.0, &tail(1.0, 1.0)).is_err());
    }

    #[test]
    fn single_jump_structure() {
        let g = Grid::new(40).unwrap();
        for i in 0..500 {
            let p = single_jump_path(&StreamKey::new(5).child(i), g, &tail(1.2, 0.3)).unwrap();
            let jump = p.values()[g.resolution()];
            assert_eq!(p.sup_norm(), jump.abs());
            assert_eq!(p.values()[0], 0.0);
            assert_eq!(p.modulus_wpp(0.5).unwrap(), 0.0);
            // polar decomposition: angle has unit sup-norm
            let angle = p.angle().unwrap();
            assert_eq!(angle.sup_norm(), 1.0);
        }
    }

    #[test]
    fn panel_is_reproducible_elementwise() {
        let g = Grid::new(10).unwrap();
        let spec = InnovationSpec::CompoundPoisson {
            rate: 2.0,
            tail: tail(1.5, 0.5),
        };
        let key = StreamKey::new(9);
        let a = iid_panel(&key, &spec, g, 5).unwrap();
        let b = iid_panel(&key, &spec, g, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(iid_panel(&key, &spec, g, 1).unwrap()[0], spec.draw(&key.child(0), g).unwrap());
        assert_eq!(a[3], spec.draw(&key.child(3), g).unwrap());
        assert!(iid_panel(&key, &spec, g, 0).is_err());
    }

    #[test]
    fn tail_model_validation() {
        assert!(TailModel::new(0.0, 1.0, 0.5).is_err());
        assert!(TailModel::new(1.0, 0.0, 0.5).is_err());
        assert!(TailModel::new(1.0, 1.0, 1.5).is_err());
        let t = TailModel::from_scale(2.0, 3.0, 1.0).unwrap();
        assert!((t.c - 9.0).abs() < 1e-12);
        assert!((t.scale() - 3.0).abs() < 1e-12);
        assert!((t.exceedance(6.0) - 0.25).abs() < 1e-12);
    }
}
