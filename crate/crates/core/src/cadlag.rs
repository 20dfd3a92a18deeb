//! Finite-resolution càdlàg paths on `[0, 1]`.
//!
//! A [`CadlagPath`] stores values at the uniform grid points `t_k = k/m`,
//! `k = 0..=m`, and is read as the right-continuous step function
//! `x(t) = values[floor(t m)]`. Suprema over `[0, 1]` are grid maxima, which
//! is exact for step paths whose jumps sit on grid points.
//!
//! Window widths `δ` are converted to a grid span `W`, the largest integer
//! with `W / m <= δ` evaluated in `f64`. All moduli here use that same
//! predicate, so they agree bit-for-bit with a naive scan over grid tuples.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < ... < t_m = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    resolution: usize,
}

impl Grid {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Grid { resolution })
    }

    /// Number of subintervals `m`.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Number of grid points, `m + 1`.
    pub fn len(&self) -> usize {
        self.resolution + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> f64 {
        k as f64 / self.resolution as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.resolution).map(move |k| self.point(k))
    }

    /// Index of the grid point at or immediately left of `t`.
    pub fn floor_index(&self, t: f64) -> usize {
        let t = t.clamp(0.0, 1.0);
        let mut k = (t * self.resolution as f64).floor() as usize;
        k = k.min(self.resolution);
        // guard against rounding in t*m
        while k > 0 && self.point(k) > t {
            k -= 1;
        }
        while k < self.resolution && self.point(k + 1) <= t {
            k += 1;
        }
        k
    }

    /// Nearest grid point to `t`, ties to the upper point.
    pub fn nearest_index(&self, t: f64) -> usize {
        let t = t.clamp(0.0, 1.0);
        ((t * self.resolution as f64).round() as usize).min(self.resolution)
    }

    /// Largest span `W` (in grid steps) with `W / m <= delta`.
    pub fn span(&self, delta: f64) -> Result<usize> {
        if !(delta > 0.0) {
            return Err(Error::InvalidDelta(delta));
        }
        let m = self.resolution;
        let mut w = ((delta * m as f64).floor() as usize).min(m);
        while w > 0 && (w as f64) / (m as f64) > delta {
            w -= 1;
        }
        while w < m && ((w + 1) as f64) / (m as f64) <= delta {
            w += 1;
        }
        Ok(w)
    }
}

/// Half-open subinterval `[start, end)` of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    start: f64,
    end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let ok = start.is_finite() && end.is_finite() && 0.0 <= start && start < end && end <= 1.0;
        if !ok {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(Interval { start, end })
    }

    /// `[0, δ)`, the left-boundary window.
    pub fn left(delta: f64) -> Result<Self> {
        Interval::new(0.0, delta.min(1.0))
    }

    /// `[1 - δ, 1)`, the right-boundary window.
    pub fn right(delta: f64) -> Result<Self> {
        Interval::new((1.0 - delta).max(0.0), 1.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Right-continuous step path sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadlagPath {
    grid: Grid,
    values: Vec<f64>,
}

impl CadlagPath {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(CadlagPath { grid, values })
    }

    pub fn zero(grid: Grid) -> Self {
        CadlagPath::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        CadlagPath {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// `value · 1_{[t_k, 1]}`.
    pub fn step(grid: Grid, jump_index: usize, value: f64) -> Self {
        let values = (0..grid.len())
            .map(|k| if k >= jump_index { value } else { 0.0 })
            .collect();
        CadlagPath { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        CadlagPath::new(grid, grid.points().map(f).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Evaluate the step function at `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.grid.floor_index(t)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Index of the first grid point where `|x|` attains its maximum.
    pub fn argmax_abs(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if v.abs() > self.values[best].abs() {
                best = k;
            }
        }
        best
    }

    /// Oscillation modulus `w(x, δ)`: max of `|x(s) - x(t)|` over grid
    /// pairs with `|s - t| <= δ`. Cost is `O(m·W)`.
    pub fn modulus_w(&self, delta: f64) -> Result<f64> {
        let span = self.grid.span(delta)?;
        let v = &self.values;
        let mut best = 0.0_f64;
        for k in 0..v.len() {
            let hi = (k + span).min(v.len() - 1);
            for l in k + 1..=hi {
                best = best.max((v[l] - v[k]).abs());
            }
        }
        Ok(best)
    }

    /// Skorohod-type modulus `w''(x, δ)`: max over grid triples
    /// `k1 <= k <= k2`, `(k2 - k1)/m <= δ`, of
    /// `min(|x_k - x_k1|, |x_k2 - x_k|)`.
    ///
    /// For a fixed middle point the best triple only depends on the running
    /// maxima of the left and right increments, so one pass per middle point
    /// suffices. Cost is `O(m·W)` time and `O(W)` scratch space.
    pub fn modulus_wpp(&self, delta: f64) -> Result<f64> {
        let span = self.grid.span(delta)?;
        let v = &self.values;
        let last = v.len() - 1;
        let mut left = vec![0.0_f64; span + 1];
        let mut right = vec![0.0_f64; span + 1];
        let mut best = 0.0_f64;
        for k in 0..=last {
            // left[i] = max_{i' <= i} |x_k - x_{k-i'}|, right[j] likewise forward
            let max_i = span.min(k);
            let max_j = span.min(last - k);
            left[0] = 0.0;
            for i in 1..=max_i {
                left[i] = left[i - 1].max((v[k] - v[k - i]).abs());
            }
            right[0] = 0.0;
            for j in 1..=max_j {
                right[j] = right[j - 1].max((v[k + j] - v[k]).abs());
            }
            for (i, l) in left[..=max_i].iter().enumerate() {
                let j = (span - i).min(max_j);
                best = best.max(l.min(right[j]));
            }
        }
        Ok(best)
    }

    /// `w(x, T) = sup_{s,t ∈ T} |x(s) - x(t)|` over grid points inside `T`.
    pub fn modulus_interval(&self, interval: Interval) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, &v) in self.values.iter().enumerate() {
            if interval.contains(self.grid.point(k)) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    fn check_grid(&self, other: &CadlagPath) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.resolution,
                right: other.grid.resolution,
            });
        }
        Ok(())
    }

    /// `(ψx)(t) = ψ(t) x(t)`.
    pub fn pointwise_product(&self, other: &CadlagPath) -> Result<CadlagPath> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(CadlagPath {
            grid: self.grid,
            values,
        })
    }

    pub fn add(&self, other: &CadlagPath) -> Result<CadlagPath> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(CadlagPath {
            grid: self.grid,
            values,
        })
    }

    pub(crate) fn add_assign(&mut self, other: &CadlagPath) -> Result<()> {
        self.check_grid(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> CadlagPath {
        CadlagPath {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `x / ‖x‖_∞` by division, so the result has sup-norm exactly 1.
    /// `None` for the zero path.
    pub fn angle(&self) -> Option<CadlagPath> {
        let norm = self.sup_norm();
        (norm > 0.0).then(|| self.map(|v| v / norm))
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> CadlagPath {
        CadlagPath {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// CSV with header `t,value`, one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.grid.point(k), v);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<CadlagPath> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "t,value" => {}
            _ => return Err(Error::Io("missing `t,value` header".into())),
        }
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let (_, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Io(format!("row {}: expected two columns", row + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Io(format!("row {}: bad value `{}`", row + 1, v)))?;
            values.push(v);
        }
        if values.len() < 2 {
            return Err(Error::Io("path needs at least two rows".into()));
        }
        let grid = Grid::new(values.len() - 1)?;
        CadlagPath::new(grid, values)
    }
}
