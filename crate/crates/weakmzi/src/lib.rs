//! Analysis toolkit for a weak-measurement experiment on a square nested
//! Mach-Zehnder interferometer.
//!
//! A single particle enters a nested interferometer with three output
//! detectors. A Gaussian meter ("pointer") is weakly coupled to the projector
//! on one inner arm, and a remote phase shifter phi sits on another arm. The
//! crate provides:
//!
//! * [`interferometer`] — per-history amplitudes, weak values, bare detector
//!   probabilities and the spacelike timing margin of the geometry;
//! * [`pointer`] — the meter wavefunctions and probability densities in the
//!   position, wavenumber, and rotated-quadrature bases, plus click
//!   probabilities;
//! * [`phasespace`] — Wigner functions, marginals, Radon tomograms and
//!   negativity scans;
//! * [`lhv`] — the local-hidden-variables model hierarchy: convex weights,
//!   splitting weights, bivariate constraint checking, factorized candidate
//!   solutions, and weight-probability histograms;
//! * [`simulate`] — a Monte Carlo harness with an exact quantum sampler, a
//!   light-cone-respecting strategy contract, concrete hidden-variable
//!   strategies, and chi-square / Kolmogorov-Smirnov verdicts;
//! * [`numerics`] — grids, quadrature, root finding, inverse-CDF sampling and
//!   reproducible RNG streams shared by everything above.
//!
//! Units: hbar = 1 and c = 1 throughout; `k` is the wavenumber and doubles as
//! the meter momentum.

pub mod error;
pub mod interferometer;
pub mod lhv;
pub mod numerics;
pub mod phasespace;
pub mod pointer;
pub mod simulate;
mod stats;

pub use error::{Error, Result};
pub use interferometer::{DetectorId, ExperimentConfig};
