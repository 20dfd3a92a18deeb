//! Simulation and Monte Carlo verification of regularly varying series
//!
//! ```text
//! X(t) = Σ_{j≥1} Ψ_j(t) Z_j(t),   t ∈ [0, 1],
//! ```
//!
//! where `Z_j` are i.i.d. regularly varying càdlàg processes and `Ψ_j` are
//! random coefficient processes with continuous paths.
//!
//! The crate is organised bottom-up:
//!
//! * [`cadlag`]: gridded càdlàg paths, sup-norm, moduli `w`, `w''`, path algebra.
//! * [`innovations`]: keyed random streams, Pareto / stable / compound-Poisson innovations.
//! * [`coefficients`]: geometric, SRE, bilinear and explicit coefficient families,
//!   plus moment-condition diagnostics.
//! * [`series`]: truncated series draws and replicate panels.
//! * [`tails`]: Hill estimation, tail curves, scaling, Breiman ratios, tail-constant
//!   predictions, spectral samples and modulus diagnostics.
//! * [`harness`]: config format, presets, deterministic experiment runs and reports.
//!
//! A worked tour lives in the guide under `book/`.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cadlag;
pub mod coefficients;
pub mod error;
pub mod harness;
pub mod innovations;
mod quadrature;
pub mod series;
pub mod tails;

pub use cadlag::{CadlagPath, Grid, Interval};
pub use coefficients::{CoefficientFamily, MultiplierLaw, Profile};
pub use error::{Error, Result};
pub use innovations::{InnovationSpec, StreamKey, TailModel};
pub use series::{SeriesDraw, SeriesSpec, Truncation};

// The guide's code listings are compiled and run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/paths.md")]
    mod paths {}
    #[doc = include_str!("../../../book/src/innovations.md")]
    mod innovations {}
    #[doc = include_str!("../../../book/src/series.md")]
    mod series {}
    #[doc = include_str!("../../../book/src/tails.md")]
    mod tails {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
