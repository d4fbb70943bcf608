//! Local-hidden-variables analysis: default distributions, the mixture
//! arriving at the final beam splitter, convex-weight admissibility,
//! splitting weights, the bivariate constraint system, factorized candidate
//! solutions, and weight-probability histograms.

use crate::error::{Error, Result};
use crate::interferometer::{DetectorId, ExperimentConfig};
use crate::numerics::{find_root, integrate, Domain, Grid1D, QuadratureSpec};
use crate::phasespace::{wigner_closed_form, PhaseSpaceField, WignerLabel};
use crate::pointer::{
    click_probability, default_grid_k, default_grid_x, density, Basis, Distribution,
};
use std::f64::consts::PI;
use std::sync::Arc;

/// Densities below this are treated as underflowed tails; weight functions
/// are only evaluated where the reference density exceeds it.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// The two default meter distributions: the g-shifted Gaussian committed on
/// Alice's side (A) and the unshifted one on Bob's side (B), each in both
/// bases, all normalized.
#[derive(Debug, Clone)]
pub struct DefaultDistributions {
    pub phi_a_x: Distribution,
    pub phi_b_x: Distribution,
    pub phi_a_k: Distribution,
    pub phi_b_k: Distribution,
}

fn gaussian_x(x: f64, center: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(x - center) * (x - center) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt()
}

fn gaussian_k(k: f64, sigma: f64) -> f64 {
    (2.0 / PI).sqrt() * sigma * (-2.0 * k * k * sigma * sigma).exp()
}

/// Normalized default distributions Phi_A and Phi_B in both bases.
///
/// In the wavenumber basis the two are identical (translation only changes
/// the phase), which is what makes convex weights undefined there.
pub fn default_distributions(config: &ExperimentConfig) -> DefaultDistributions {
    let (g, sigma) = (config.g, config.sigma);
    let gx = default_grid_x(config);
    let gk = default_grid_k(config);
    DefaultDistributions {
        phi_a_x: Distribution::from_fn(Basis::Position, 1.0, gx.clone(), move |x| {
            gaussian_x(x, g, sigma)
        }),
        phi_b_x: Distribution::from_fn(Basis::Position, 1.0, gx, move |x| {
            gaussian_x(x, 0.0, sigma)
        }),
        phi_a_k: Distribution::from_fn(Basis::Wavenumber, 1.0, gk.clone(), move |k| {
            gaussian_k(k, sigma)
        }),
        phi_b_k: Distribution::from_fn(Basis::Wavenumber, 1.0, gk, move |k| {
            gaussian_k(k, sigma)
        }),
    }
}

/// The unnormalized mixture arriving at the final beam splitter:
/// Phi_+ = (1/2) Phi_A + (1/4)(1 - cos phi) Phi_B, with mass
/// (3 - cos phi)/4. Equals Phi_1 + Phi_2 pointwise (no-communication
/// identity). Supports the position, wavenumber and quadrature bases.
pub fn mixture_before_b2(config: &ExperimentConfig, basis: Basis) -> Distribution {
    // Sum of the two detector densities; algebraically identical to the
    // (1/2, (1-cos phi)/4) convex combination of the defaults.
    let d1 = density(config, DetectorId::D1, basis);
    let d2 = density(config, DetectorId::D2, basis);
    let mass = (3.0 - config.phi.cos()) / 4.0;
    let grid = d1.grid.clone();
    Distribution::from_fn(basis, mass, grid, move |lambda| {
        d1.eval(lambda) + d2.eval(lambda)
    })
}

/// Theorem-style convex weights in the position basis:
/// w_A(x) = (Phi~_i(x) - Phi_B(x)) / (Phi_A(x) - Phi_B(x)), w_B = 1 - w_A,
/// where Phi~_i is the detector density normalized by its click probability.
///
/// The denominator vanishes at the single point x = g/2; the weight is
/// genuinely undefined there (reported, not interpolated). The continuum
/// function is unbounded in any neighborhood of that point for phi != 0, so
/// scans of its range depend on the scan resolution.
#[derive(Clone)]
pub struct ConvexWeightFunction {
    pub detector: DetectorId,
    pub config: ExperimentConfig,
    /// The point where Phi_A = Phi_B and the weight is undefined.
    pub excluded_point: f64,
    numer: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    denom: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ConvexWeightFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvexWeightFunction")
            .field("detector", &self.detector)
            .field("excluded_point", &self.excluded_point)
            .finish()
    }
}

impl ConvexWeightFunction {
    /// w_A at x, or None at the excluded point (denominator within float
    /// noise of zero relative to the local density scale).
    pub fn eval_a(&self, x: f64) -> Option<f64> {
        let den = (self.denom)(x);
        let scale = gaussian_x(self.excluded_point, self.config.g / 2.0, self.config.sigma)
            .max(UNDERFLOW_FLOOR);
        if den.abs() < 1e-12 * scale {
            return None;
        }
        Some((self.numer)(x) / den)
    }

    /// w_B = 1 - w_A.
    pub fn eval_b(&self, x: f64) -> Option<f64> {
        self.eval_a(x).map(|w| 1.0 - w)
    }
}

/// Build the convex weights for `detector` in `basis`.
///
/// Only the position basis is defined: in the wavenumber basis
/// Phi_A(k) = Phi_B(k) identically and every weight is undefined.
pub fn convex_weights(
    config: &ExperimentConfig,
    detector: DetectorId,
    basis: Basis,
) -> Result<ConvexWeightFunction> {
    match basis {
        Basis::Position => {}
        Basis::Wavenumber => return Err(Error::UndefinedWeights),
        Basis::Quadrature { .. } => {
            return Err(Error::InvalidParameter(
                "convex weights are defined for the position basis only".into(),
            ))
        }
    }
    if !matches!(detector, DetectorId::D1 | DetectorId::D2) {
        return Err(Error::InvalidParameter(
            "convex weights apply to the post-selected detectors D1/D2".into(),
        ));
    }
    let cfg = *config;
    let prob = click_probability(config, detector);
    if prob <= 0.0 {
        return Err(Error::SingularWeakValue);
    }
    let dens = density(config, detector, Basis::Position);
    let (g, sigma) = (config.g, config.sigma);
    let numer = move |x: f64| dens.eval(x) / prob - gaussian_x(x, 0.0, sigma);
    let denom = move |x: f64| gaussian_x(x, g, sigma) - gaussian_x(x, 0.0, sigma);
    Ok(ConvexWeightFunction {
        detector,
        config: cfg,
        excluded_point: config.g / 2.0,
        numer: Arc::new(numer),
        denom: Arc::new(denom),
    })
}

/// Classify the range of a convex weight over a scan grid (the excluded
/// point is skipped).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvexWeightRange {
    pub min: f64,
    pub max: f64,
    pub argmin: f64,
    pub argmax: f64,
    pub has_below_zero: bool,
    pub has_above_one: bool,
    pub excluded_points: usize,
}

/// Scan w_A over `grid`.
pub fn convex_weight_range(w: &ConvexWeightFunction, grid: &Grid1D) -> ConvexWeightRange {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let (mut argmin, mut argmax) = (grid.min, grid.min);
    let mut excluded = 0usize;
    for x in grid.iter() {
        match w.eval_a(x) {
            Some(v) => {
                if v < min {
                    min = v;
                    argmin = x;
                }
                if v > max {
                    max = v;
                    argmax = x;
                }
            }
            None => excluded += 1,
        }
    }
    ConvexWeightRange {
        min,
        max,
        argmin,
        argmax,
        has_below_zero: min < 0.0,
        has_above_one: max > 1.0,
        excluded_points: excluded,
    }
}

/// Smallest phi in (lo, hi) at which min_x w_A(x, phi) over the default scan
/// grid crosses zero, found by bisection on the scanned minimum.
///
/// The scanned minimum is resolution-dependent: the continuum w_A is
/// unbounded below near x = g/2 for every phi != 0, so the returned onset
/// shrinks toward zero as the scan grid is refined. The default 2048-point
/// grid is used so the value is reproducible.
pub fn convex_negative_region_onset(
    g: f64,
    sigma: f64,
    detector: DetectorId,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let grid = default_grid_x(&ExperimentConfig::new(0.0, g, sigma)?);
    let min_at = |phi: f64| -> f64 {
        let config = ExperimentConfig::new(phi, g, sigma).expect("validated above");
        let w = convex_weights(&config, detector, Basis::Position).expect("position basis");
        convex_weight_range(&w, &grid).min
    };
    find_root(min_at, lo, hi, 1e-6)
}

/// Quantum splitting weights w_i(lambda) = Phi_i(lambda)/Phi_+(lambda) at the
/// final beam splitter, valid in any basis; always within [0,1].
#[derive(Clone)]
pub struct SplitWeightFunction {
    pub detector: DetectorId,
    pub basis: Basis,
    pub config: ExperimentConfig,
    numer: Arc<Distribution>,
    denom: Arc<Distribution>,
}

impl std::fmt::Debug for SplitWeightFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplitWeightFunction")
            .field("detector", &self.detector)
            .field("basis", &self.basis)
            .finish()
    }
}

impl SplitWeightFunction {
    /// w_i at lambda; None where Phi_+ has underflowed (clamped domain).
    pub fn eval(&self, lambda: f64) -> Option<f64> {
        let den = self.denom.eval(lambda);
        if den <= UNDERFLOW_FLOOR {
            return None;
        }
        Some(self.numer.eval(lambda) / den)
    }

    /// Scan grid inherited from the underlying densities.
    pub fn grid(&self) -> &Grid1D {
        &self.numer.grid
    }

    /// (min, max) of the weight over a range-scan grid.
    ///
    /// In the position and quadrature bases the extremal weights are only
    /// approached deep in the Gaussian tails, so the scan extends the default
    /// grid threefold; in the wavenumber basis the weight is periodic in g*k
    /// and the default grid already contains full periods.
    pub fn range_on_grid(&self) -> (f64, f64) {
        let grid = match self.basis {
            Basis::Wavenumber => self.grid().clone(),
            _ => {
                let g = self.grid();
                let mid = 0.5 * (g.min + g.max);
                let half = 3.0 * 0.5 * (g.max - g.min);
                Grid1D::new(mid - half, mid + half, 3 * g.points)
                    .expect("valid by construction")
            }
        };
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for lambda in grid.iter() {
            if let Some(v) = self.eval(lambda) {
                min = min.min(v);
                max = max.max(v);
            }
        }
        (min, max)
    }
}

/// Build the splitting weight for `detector` in `basis`.
pub fn split_weights(
    config: &ExperimentConfig,
    detector: DetectorId,
    basis: Basis,
) -> Result<SplitWeightFunction> {
    if !matches!(detector, DetectorId::D1 | DetectorId::D2) {
        return Err(Error::InvalidParameter(
            "splitting weights apply to the post-selected detectors D1/D2".into(),
        ));
    }
    Ok(SplitWeightFunction {
        detector,
        basis,
        config: *config,
        numer: Arc::new(density(config, detector, basis)),
        denom: Arc::new(mixture_before_b2(config, basis)),
    })
}

/// A candidate bivariate hidden model: two phase-plane densities committed on
/// the two sides, and a pair of weight functions deciding the D1 routing for
/// each commitment.
#[derive(Clone)]
pub struct HiddenBivariateModel {
    pub f_a: PhaseSpaceField,
    pub f_b: PhaseSpaceField,
    /// w_1 given an A commitment, as a function of (x, k).
    pub w1_a: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// w_1 given a B commitment.
    pub w1_b: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for HiddenBivariateModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HiddenBivariateModel").finish()
    }
}

/// The Wigner-identified candidate: f_A = W_A, f_B = W_B, and both weight
/// functions equal to W_i/W_+ pointwise. Satisfies every marginal and
/// reproduction constraint by construction, but the weights leave [0,1]
/// wherever W_i is negative.
pub fn wigner_identified_model(config: &ExperimentConfig) -> HiddenBivariateModel {
    let wa = wigner_closed_form(WignerLabel::A, config);
    let wb = wigner_closed_form(WignerLabel::B, config);
    let w1 = wigner_closed_form(WignerLabel::D1, config);
    let wp = wigner_closed_form(WignerLabel::Plus, config);
    let ratio = move |x: f64, k: f64| {
        let den = wp.eval(x, k);
        if den.abs() <= UNDERFLOW_FLOOR {
            0.5
        } else {
            w1.eval(x, k) / den
        }
    };
    let ratio2 = ratio.clone();
    HiddenBivariateModel {
        f_a: wa,
        f_b: wb,
        w1_a: Arc::new(ratio),
        w1_b: Arc::new(move |x, k| ratio2(x, k)),
    }
}

/// One checked constraint: worst residual seen and the location it occurred.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub worst_residual: f64,
    pub worst_at: (f64, f64),
    pub pass: bool,
}

/// Verdict of [`verify_bivariate_constraints`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConstraintVerdict {
    pub checks: Vec<ConstraintCheck>,
    pub pass: bool,
}

impl ConstraintVerdict {
    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Check a candidate model against the full constraint system, each to `tol`:
///
/// * marginals: integrating f_A (f_B) over either axis returns the default
///   Phi_A (Phi_B) in the other basis;
/// * nonnegativity of f_A and f_B on the scan grid;
/// * weights within [0,1] on the scan grid;
/// * reproduction: (1/2) f_A w_i^A + (1/4)(1-cos phi) f_B w_i^B integrates
///   (over k, resp. x) to the detector densities Phi_i(x), Phi_i(k), for
///   i = 1, 2.
///
/// Failures are verdicts, not errors.
pub fn verify_bivariate_constraints(
    model: &HiddenBivariateModel,
    config: &ExperimentConfig,
    tol: f64,
) -> ConstraintVerdict {
    let spec = QuadratureSpec {
        abs_tol: tol.min(1e-9) * 0.01,
        ..QuadratureSpec::default()
    };
    let defaults = default_distributions(config);
    let gx = default_grid_x(config);
    let gk = default_grid_k(config);
    let sample_x: Vec<f64> = (0..41).map(|i| gx.point(i * (gx.points - 1) / 40)).collect();
    let sample_k: Vec<f64> = (0..41).map(|i| gk.point(i * (gk.points - 1) / 40)).collect();
    let mut checks = Vec::new();

    let mut record = |name: &str, worst: f64, at: (f64, f64), tol: f64| {
        checks.push(ConstraintCheck {
            name: name.into(),
            worst_residual: worst,
            worst_at: at,
            pass: worst <= tol,
        });
    };

    // Marginal constraints.
    for (field, dist_x, dist_k, tag) in [
        (&model.f_a, &defaults.phi_a_x, &defaults.phi_a_k, "A"),
        (&model.f_b, &defaults.phi_b_x, &defaults.phi_b_k, "B"),
    ] {
        let mut worst = 0.0f64;
        let mut at = (0.0, 0.0);
        for &x in &sample_x {
            let m = integrate(|k| field.eval(x, k), Domain::WholeLine, &spec).unwrap_or(f64::NAN);
            let r = (m - dist_x.eval(x)).abs();
            if !(r <= worst) {
                worst = r;
                at = (x, f64::NAN);
            }
        }
        for &k in &sample_k {
            let m = integrate(|x| field.eval(x, k), Domain::WholeLine, &spec).unwrap_or(f64::NAN);
            let r = (m - dist_k.eval(k)).abs();
            if !(r <= worst) {
                worst = r;
                at = (f64::NAN, k);
            }
        }
        record(&format!("marginals_{tag}"), worst, at, tol);
    }

    // Nonnegativity and weight-range scans on the default phase-space grid.
    let (sx, sk) = crate::phasespace::default_scan_grids(config, 256);
    for (field, tag) in [(&model.f_a, "A"), (&model.f_b, "B")] {
        let mut worst = 0.0f64;
        let mut at = (0.0, 0.0);
        for x in sx.iter() {
            for k in sk.iter() {
                let v = field.eval(x, k);
                if v < -worst {
                    worst = -v;
                    at = (x, k);
                }
            }
        }
        record(&format!("nonnegative_{tag}"), worst, at, tol);
    }
    for (w, tag) in [(&model.w1_a, "A"), (&model.w1_b, "B")] {
        let mut worst = 0.0f64;
        let mut at = (0.0, 0.0);
        for x in sx.iter() {
            for k in sk.iter() {
                // Only meaningful where the carrying density has support.
                let support = match tag {
                    "A" => model.f_a.eval(x, k),
                    _ => model.f_b.eval(x, k),
                };
                if support.abs() <= 1e-30 {
                    continue;
                }
                let v = w(x, k);
                let excess = (-v).max(v - 1.0).max(0.0);
                if excess > worst {
                    worst = excess;
                    at = (x, k);
                }
            }
        }
        record(&format!("weights_in_unit_interval_{tag}"), worst, at, tol);
    }

    // Reproduction of the detector densities.
    let u = 1.0 - config.phi.cos();
    for (det, sign) in [(DetectorId::D1, 1.0), (DetectorId::D2, -1.0)] {
        let dx = density(config, det, Basis::Position);
        let dk = density(config, det, Basis::Wavenumber);
        // w_2 = 1 - w_1 for each commitment.
        let w_a = model.w1_a.clone();
        let w_b = model.w1_b.clone();
        let f_a = model.f_a.clone();
        let f_b = model.f_b.clone();
        let weight = move |x: f64, k: f64| -> f64 {
            let (wa, wb) = (w_a(x, k), w_b(x, k));
            let (wa, wb) = if sign > 0.0 { (wa, wb) } else { (1.0 - wa, 1.0 - wb) };
            0.5 * f_a.eval(x, k) * wa + 0.25 * u * f_b.eval(x, k) * wb
        };
        let mut worst = 0.0f64;
        let mut at = (0.0, 0.0);
        for &x in &sample_x {
            let m = integrate(|k| weight(x, k), Domain::WholeLine, &spec).unwrap_or(f64::NAN);
            let r = (m - dx.eval(x)).abs();
            if !(r <= worst) {
                worst = r;
                at = (x, f64::NAN);
            }
        }
        for &k in &sample_k {
            let m = integrate(|x| weight(x, k), Domain::WholeLine, &spec).unwrap_or(f64::NAN);
            let r = (m - dk.eval(k)).abs();
            if !(r <= worst) {
                worst = r;
                at = (f64::NAN, k);
            }
        }
        record(&format!("reproduces_{}", det.name()), worst, at, tol);
    }

    let pass = checks.iter().all(|c| c.pass);
    ConstraintVerdict { checks, pass }
}

/// Which factorized candidate solution to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorizedSolution {
    /// w_1^+(x,k) = [Prob(D_+)/Prob(D_1)] w_1(x) w_1(k).
    Solution1,
    /// w_1^+(x,k) = w_1(x) + w_1(k) - [Prob(D_+)/Prob(D_2)] ... the
    /// complementary form built from the D2 product; see
    /// [`factorized_solutions`].
    Solution2,
}

/// Verdict for a factorized candidate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FactorizedVerdict {
    /// Worst residual of the x-basis integral equation over the sample grid.
    pub residual_x: f64,
    /// Worst residual of the k-basis integral equation.
    pub residual_k: f64,
    /// Range of the effective weight over the scan grid.
    pub weight_min: f64,
    pub weight_max: f64,
    /// True when the weight stays within [0,1] (up to 1e-12).
    pub admissible: bool,
}

/// The factorized hidden density f_+ = Phi_+(x) Phi_+(k) / Prob(D_+) with the
/// candidate effective weight, plus a quadrature verdict.
///
/// Solution 1 takes w_1^+ = [Prob(D_+)/Prob(D_1)] w_1(x) w_1(k) and derives
/// w_2^+ = 1 - w_1^+; solution 2 instead factorizes the D2 weight,
/// w_2^+ = [Prob(D_+)/Prob(D_2)] w_2(x) w_2(k), giving a different w_1^+.
/// Both satisfy the integral equations for every phi, but the weights can
/// leave [0,1] for some phi.
pub fn factorized_solutions(
    config: &ExperimentConfig,
    which: FactorizedSolution,
) -> Result<(PhaseSpaceField, Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>, FactorizedVerdict)> {
    let p_plus = (3.0 - config.phi.cos()) / 4.0;
    let p1 = click_probability(config, DetectorId::D1);
    let p2 = click_probability(config, DetectorId::D2);
    if p1 <= 0.0 || p2 <= 0.0 {
        return Err(Error::SingularWeakValue);
    }
    let plus_x = mixture_before_b2(config, Basis::Position);
    let plus_k = mixture_before_b2(config, Basis::Wavenumber);
    let f_plus = {
        let (px, pk) = (plus_x.clone(), plus_k.clone());
        PhaseSpaceField::from_fn(p_plus, None, move |x, k| px.eval(x) * pk.eval(k) / p_plus)
    };
    let w1x = split_weights(config, DetectorId::D1, Basis::Position)?;
    let w1k = split_weights(config, DetectorId::D1, Basis::Wavenumber)?;
    let weight: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = match which {
        FactorizedSolution::Solution1 => {
            let ratio = p_plus / p1;
            Arc::new(move |x: f64, k: f64| {
                let (wx, wk) = (w1x.eval(x).unwrap_or(0.0), w1k.eval(k).unwrap_or(0.0));
                ratio * wx * wk
            })
        }
        FactorizedSolution::Solution2 => {
            let ratio = p_plus / p2;
            Arc::new(move |x: f64, k: f64| {
                let (wx, wk) = (w1x.eval(x).unwrap_or(0.0), w1k.eval(k).unwrap_or(0.0));
                1.0 - ratio * (1.0 - wx) * (1.0 - wk)
            })
        }
    };

    // Residuals of the two integral equations: integrating f_+ w_1^+ over k
    // must return Phi_1(x), and over x must return Phi_1(k).
    let d1x = density(config, DetectorId::D1, Basis::Position);
    let d1k = density(config, DetectorId::D1, Basis::Wavenumber);
    let spec = QuadratureSpec {
        abs_tol: 1e-9,
        ..QuadratureSpec::default()
    };
    let gx = default_grid_x(config);
    let gk = default_grid_k(config);
    let mut residual_x = 0.0f64;
    for i in 0..41 {
        let x = gx.point(i * (gx.points - 1) / 40);
        let m = integrate(
            |k| f_plus.eval(x, k) * weight(x, k),
            Domain::Interval(gk.min, gk.max),
            &spec,
        )
        .unwrap_or(f64::NAN);
        let r = (m - d1x.eval(x)).abs();
        if !(r <= residual_x) {
            residual_x = r;
        }
    }
    let mut residual_k = 0.0f64;
    for i in 0..41 {
        let k = gk.point(i * (gk.points - 1) / 40);
        let m = integrate(
            |x| f_plus.eval(x, k) * weight(x, k),
            Domain::Interval(gx.min, gx.max),
            &spec,
        )
        .unwrap_or(f64::NAN);
        let r = (m - d1k.eval(k)).abs();
        if !(r <= residual_k) {
            residual_k = r;
        }
    }

    // Weight range over the scan grid restricted to non-underflowed support.
    let (sx, sk) = crate::phasespace::default_scan_grids(config, 256);
    let mut wmin = f64::INFINITY;
    let mut wmax = f64::NEG_INFINITY;
    for x in sx.iter() {
        if plus_x.eval(x) <= UNDERFLOW_FLOOR {
            continue;
        }
        for k in sk.iter() {
            if plus_k.eval(k) <= UNDERFLOW_FLOOR {
                continue;
            }
            let v = weight(x, k);
            wmin = wmin.min(v);
            wmax = wmax.max(v);
        }
    }
    let verdict = FactorizedVerdict {
        residual_x,
        residual_k,
        weight_min: wmin,
        weight_max: wmax,
        admissible: wmin >= -1e-12 && wmax <= 1.0 + 1e-12,
    };
    Ok((f_plus, weight, verdict))
}

/// Scan phi over (0, 2 pi) and report the phi values where the factorized
/// solution's weight leaves [0,1]. Resolution: `points` samples.
pub fn factorized_violation_scan(
    g: f64,
    sigma: f64,
    which: FactorizedSolution,
    points: usize,
) -> Result<Vec<f64>> {
    let mut violations = Vec::new();
    for i in 1..points {
        let phi = 2.0 * PI * i as f64 / points as f64;
        if (phi - PI).abs() < 1e-9 {
            continue; // Prob(D2) can vanish exactly at pi when g = 0
        }
        let config = ExperimentConfig::new(phi, g, sigma)?;
        let (_, _, verdict) = factorized_solutions(&config, which)?;
        if !verdict.admissible {
            violations.push(phi);
        }
    }
    Ok(violations)
}

/// A weight-probability histogram: the distribution of the splitting weight
/// w_i(lambda) under the mixture Phi_+, binned over [0, 1].
#[derive(Debug, Clone, serde::Serialize)]
pub struct WeightHistogram {
    pub detector: DetectorId,
    pub basis_label: String,
    pub bins: usize,
    /// Bin width 1/bins.
    pub delta_w: f64,
    /// p_i(n): mass of Phi_+ falling in weight bin n (1-based in the
    /// definition; stored 0-based).
    pub probabilities: Vec<f64>,
    /// Detector mass per bin: the same regions of lambda integrated against
    /// Phi_i = w_i Phi_+ instead of Phi_+. Sums to the click probability at
    /// any binning.
    pub routed: Vec<f64>,
    /// Density mode: probabilities divided by delta_w.
    pub density_mode: bool,
}

impl WeightHistogram {
    /// Total Phi_+ mass across the bins, (3 - cos phi)/4.
    pub fn total_mass(&self) -> f64 {
        let raw: f64 = self.probabilities.iter().sum();
        if self.density_mode {
            raw * self.delta_w
        } else {
            raw
        }
    }

    /// Total detector mass across the bins; equals the click probability and
    /// is invariant under bin refinement (the integral-recovery identity).
    pub fn routed_mass(&self) -> f64 {
        self.routed.iter().sum()
    }

    /// Bins with non-zero content, as (lo, hi) weight bounds.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.probabilities.iter().position(|&p| p > 0.0)?;
        let last = self.probabilities.iter().rposition(|&p| p > 0.0)?;
        Some((first as f64 * self.delta_w, (last + 1) as f64 * self.delta_w))
    }

    /// The same histogram with bins reversed (w -> 1 - w).
    pub fn reversed(&self) -> WeightHistogram {
        let mut h = self.clone();
        h.probabilities.reverse();
        h.routed.reverse();
        h
    }
}

/// Build the weight-probability histogram of w_detector in `basis` with
/// `bins` left-closed bins over [0,1] (the last bin is closed).
///
/// The integral over lambda is a fine midpoint sum over the default grid,
/// refined 64x, so bin boundaries are resolved without adaptive quadrature
/// fighting the indicator discontinuities.
pub fn weight_histogram(
    config: &ExperimentConfig,
    detector: DetectorId,
    basis: Basis,
    bins: usize,
) -> Result<WeightHistogram> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    let w = split_weights(config, detector, basis)?;
    let plus = mixture_before_b2(config, basis);
    let grid = plus.grid.clone();
    let fine = (grid.points - 1) * 64;
    let h = (grid.max - grid.min) / fine as f64;
    let delta_w = 1.0 / bins as f64;
    let mut probabilities = vec![0.0f64; bins];
    let mut routed = vec![0.0f64; bins];
    for i in 0..fine {
        let lambda = grid.min + (i as f64 + 0.5) * h;
        let mass = plus.eval(lambda) * h;
        if mass <= 0.0 {
            continue;
        }
        if let Some(wv) = w.eval(lambda) {
            let idx = ((wv / delta_w).floor() as isize).clamp(0, bins as isize - 1) as usize;
            probabilities[idx] += mass;
            routed[idx] += wv * mass;
        }
    }
    Ok(WeightHistogram {
        detector,
        basis_label: basis.label(),
        bins,
        delta_w,
        probabilities,
        routed,
        density_mode: false,
    })
}

/// Per-bin overlap of two equally-binned histograms plus the Theorem-style
/// remainder bookkeeping.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OverlapRecord {
    /// OVL per bin: [p^k + p^x - |p^k - p^x|]/2 = min(p^x, p^k).
    pub overlap: Vec<f64>,
    pub remainder_x: Vec<f64>,
    pub remainder_k: Vec<f64>,
    pub remainder_mass_x: f64,
    pub remainder_mass_k: f64,
    /// |routed mass of h_x - routed mass of h_k|: the precondition that both
    /// bases carry the same detector probability.
    pub precondition_residual: f64,
}

/// Overlap analysis of the x- and k-basis histograms of one detector.
pub fn histogram_overlap(h_x: &WeightHistogram, h_k: &WeightHistogram) -> Result<OverlapRecord> {
    if h_x.bins != h_k.bins || h_x.density_mode != h_k.density_mode {
        return Err(Error::BinMismatch(format!(
            "{} bins vs {} bins",
            h_x.bins, h_k.bins
        )));
    }
    let overlap: Vec<f64> = h_x
        .probabilities
        .iter()
        .zip(&h_k.probabilities)
        .map(|(&a, &b)| 0.5 * (a + b - (a - b).abs()))
        .collect();
    let remainder_x: Vec<f64> = h_x
        .probabilities
        .iter()
        .zip(&overlap)
        .map(|(&p, &o)| p - o)
        .collect();
    let remainder_k: Vec<f64> = h_k
        .probabilities
        .iter()
        .zip(&overlap)
        .map(|(&p, &o)| p - o)
        .collect();
    Ok(OverlapRecord {
        remainder_mass_x: remainder_x.iter().sum(),
        remainder_mass_k: remainder_k.iter().sum(),
        precondition_residual: (h_x.routed_mass() - h_k.routed_mass()).abs(),
        overlap,
        remainder_x,
        remainder_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cfg(phi: f64, g: f64, sigma: f64) -> ExperimentConfig {
        ExperimentConfig::new(phi, g, sigma).unwrap()
    }

    #[test]
    fn defaults_are_normalized_shifted_gaussians() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let d = default_distributions(&config);
        let spec = QuadratureSpec::default();
        assert_abs_diff_eq!(
            integrate(|x| d.phi_b_x.eval(x), Domain::WholeLine, &spec).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        // Peak of Phi_A at x = g.
        assert!(d.phi_a_x.eval(1.0) > d.phi_a_x.eval(0.5));
        assert_abs_diff_eq!(d.phi_a_x.eval(1.3), d.phi_b_x.eval(0.3), epsilon = 1e-15);
        // Identical k-basis distributions.
        for k in [-1.0, 0.0, 0.7, 2.0] {
            assert_abs_diff_eq!(d.phi_a_k.eval(k), d.phi_b_k.eval(k), epsilon = 1e-16);
        }
    }

    #[test]
    fn mixture_identity_and_mass() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let d = default_distributions(&config);
        let plus = mixture_before_b2(&config, Basis::Position);
        let u = 1.0 - config.phi.cos();
        let mut worst = 0.0f64;
        for x in plus.grid.iter() {
            let direct = 0.5 * d.phi_a_x.eval(x) + 0.25 * u * d.phi_b_x.eval(x);
            worst = worst.max((plus.eval(x) - direct).abs());
        }
        assert!(worst < 1e-10, "no-communication identity violated by {worst}");
        assert_abs_diff_eq!(plus.mass, (3.0 - config.phi.cos()) / 4.0, epsilon = 1e-15);

        // phi = 0: Bob's term vanishes.
        let flat = cfg(0.0, 1.0, 1.0);
        let d0 = default_distributions(&flat);
        let plus0 = mixture_before_b2(&flat, Basis::Position);
        for x in [-1.0, 0.3, 1.5] {
            assert_abs_diff_eq!(plus0.eval(x), 0.5 * d0.phi_a_x.eval(x), epsilon = 1e-12);
        }
        // phi = pi: equal-weight mixture.
        let anti = cfg(PI, 1.0, 1.0);
        let dp = default_distributions(&anti);
        let plusp = mixture_before_b2(&anti, Basis::Position);
        for x in [-1.0, 0.3, 1.5] {
            assert_abs_diff_eq!(
                plusp.eval(x),
                0.5 * dp.phi_a_x.eval(x) + 0.5 * dp.phi_b_x.eval(x),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn convex_weights_exit_unit_interval() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        for det in [DetectorId::D1, DetectorId::D2] {
            let w = convex_weights(&config, det, Basis::Position).unwrap();
            let range = convex_weight_range(&w, &default_grid_x(&config));
            assert!(range.has_below_zero, "{det:?} should have a w_A < 0 region");
            assert!(range.has_above_one, "{det:?} should have a w_A > 1 region");
            // Complementarity w_A + w_B = 1.
            for x in [-0.5, 0.2, 0.9, 2.0] {
                let a = w.eval_a(x).unwrap();
                let b = w.eval_b(x).unwrap();
                assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn convex_weights_excluded_point_and_k_basis() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let w = convex_weights(&config, DetectorId::D1, Basis::Position).unwrap();
        assert_eq!(w.excluded_point, 0.5);
        assert!(w.eval_a(0.5).is_none());
        assert!(matches!(
            convex_weights(&config, DetectorId::D1, Basis::Wavenumber),
            Err(Error::UndefinedWeights)
        ));
    }

    #[test]
    fn split_weight_ranges_match_reference_values() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let wx = split_weights(&config, DetectorId::D1, Basis::Position).unwrap();
        let (lo, hi) = wx.range_on_grid();
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(hi, 0.8535533905932737, epsilon = 1e-3);
        let wk = split_weights(&config, DetectorId::D1, Basis::Wavenumber).unwrap();
        let (lo, hi) = wk.range_on_grid();
        assert_abs_diff_eq!(lo, 0.02859547920896832, epsilon = 1e-3);
        assert_abs_diff_eq!(hi, 0.9714045207910317, epsilon = 1e-3);
        // Complementarity and unit-interval bound everywhere on the grid.
        let w2 = split_weights(&config, DetectorId::D2, Basis::Position).unwrap();
        for x in wx.grid().iter() {
            if let (Some(a), Some(b)) = (wx.eval(x), w2.eval(x)) {
                assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-12);
                assert!((-1e-12..=1.0 + 1e-12).contains(&a));
            }
        }
    }

    #[test]
    fn wigner_identified_model_passes_reproduction_fails_admissibility() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let model = wigner_identified_model(&config);
        let verdict = verify_bivariate_constraints(&model, &config, 1e-6);
        for name in [
            "marginals_A",
            "marginals_B",
            "nonnegative_A",
            "nonnegative_B",
            "reproduces_D1",
            "reproduces_D2",
        ] {
            assert!(verdict.check(name).unwrap().pass, "{name} failed: {verdict:?}");
        }
        // The weight check must fail exactly because the Wigner functions
        // carry negative regions at this config.
        assert!(!verdict.check("weights_in_unit_interval_A").unwrap().pass);
        assert!(!verdict.pass);
    }

    #[test]
    fn constant_weights_fail_reproduction() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let mut model = wigner_identified_model(&config);
        model.w1_a = Arc::new(|_, _| 0.5);
        model.w1_b = Arc::new(|_, _| 0.5);
        let verdict = verify_bivariate_constraints(&model, &config, 1e-6);
        assert!(verdict.check("weights_in_unit_interval_A").unwrap().pass);
        assert!(!verdict.check("reproduces_D1").unwrap().pass);
    }

    #[test]
    fn negative_density_flagged() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let mut model = wigner_identified_model(&config);
        let wb = wigner_closed_form(WignerLabel::B, &config);
        model.f_a = PhaseSpaceField::from_fn(1.0, None, move |x, k| {
            wb.eval(x - 1.0, k) - 0.01 * (-x * x - k * k).exp()
        });
        let verdict = verify_bivariate_constraints(&model, &config, 1e-6);
        assert!(!verdict.check("nonnegative_A").unwrap().pass);
    }

    #[test]
    fn factorized_solutions_satisfy_equations() {
        // Both candidates satisfy the integral equations at every phi; the
        // weights stay in [0,1] at small phi but not at pi/2, where the
        // product form overshoots 1 (candidate 1) or goes negative
        // (candidate 2).
        for (phi, adm1, adm2) in [(0.3, true, true), (FRAC_PI_2, false, false)] {
            let config = cfg(phi, 1.0, 1.0);
            for (which, adm) in [
                (FactorizedSolution::Solution1, adm1),
                (FactorizedSolution::Solution2, adm2),
            ] {
                let (_, _, verdict) = factorized_solutions(&config, which).unwrap();
                assert!(verdict.residual_x < 1e-6, "{which:?}: {verdict:?}");
                assert!(verdict.residual_k < 1e-6, "{which:?}: {verdict:?}");
                assert_eq!(verdict.admissible, adm, "{which:?} at {phi}: {verdict:?}");
            }
        }
        let half = cfg(FRAC_PI_2, 1.0, 1.0);
        let (_, _, v1) = factorized_solutions(&half, FactorizedSolution::Solution1).unwrap();
        assert!(v1.weight_max > 1.0 && v1.weight_min > 0.0, "{v1:?}");
        let (_, _, v2) = factorized_solutions(&half, FactorizedSolution::Solution2).unwrap();
        assert!(v2.weight_min < 0.0 && v2.weight_max < 1.0, "{v2:?}");
    }

    #[test]
    fn factorized_violations_exist_somewhere_in_phi() {
        for which in [FactorizedSolution::Solution1, FactorizedSolution::Solution2] {
            let v = factorized_violation_scan(1.0, 1.0, which, 72).unwrap();
            assert!(!v.is_empty(), "{which:?} never violates [0,1]");
            // Violations appear in the strong-interference half around pi.
            assert!(v.iter().any(|&phi| (1.0..5.3).contains(&phi)));
        }
    }

    #[test]
    fn histogram_mass_identity_and_reversal() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        for bins in [10, 100, 1000] {
            let h1 = weight_histogram(&config, DetectorId::D1, Basis::Position, bins).unwrap();
            assert_abs_diff_eq!(
                h1.routed_mass(),
                click_probability(&config, DetectorId::D1),
                epsilon = 1e-6
            );
            assert_abs_diff_eq!(
                h1.total_mass(),
                (3.0 - config.phi.cos()) / 4.0,
                epsilon = 1e-6
            );
            let h2 = weight_histogram(&config, DetectorId::D2, Basis::Position, bins).unwrap();
            let r = h2.reversed();
            for (a, b) in h1.probabilities.iter().zip(&r.probabilities) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn histogram_supports_match_weight_ranges() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let hx = weight_histogram(&config, DetectorId::D1, Basis::Position, 1000).unwrap();
        let (lo, hi) = hx.support().unwrap();
        assert!(lo >= 0.5 - 2e-3 && hi <= 0.854 + 2e-3, "x support [{lo}, {hi}]");
        let hk = weight_histogram(&config, DetectorId::D1, Basis::Wavenumber, 1000).unwrap();
        let (lo, hi) = hk.support().unwrap();
        assert!(lo >= 0.029 - 2e-3 && hi <= 0.971 + 2e-3, "k support [{lo}, {hi}]");
    }

    #[test]
    fn overlap_record_properties() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let hx = weight_histogram(&config, DetectorId::D1, Basis::Position, 100).unwrap();
        let hk = weight_histogram(&config, DetectorId::D1, Basis::Wavenumber, 100).unwrap();
        // Trivial self-overlap: zero remainders.
        let self_overlap = histogram_overlap(&hx, &hx).unwrap();
        assert!(self_overlap.remainder_mass_x.abs() < 1e-15);
        assert!(self_overlap.remainder_mass_k.abs() < 1e-15);

        let record = histogram_overlap(&hx, &hk).unwrap();
        assert!(record.precondition_residual < 1e-8);
        assert_abs_diff_eq!(
            record.remainder_mass_x,
            record.remainder_mass_k,
            epsilon = 1e-6
        );
        for ((o, px), pk) in record
            .overlap
            .iter()
            .zip(&hx.probabilities)
            .zip(&hk.probabilities)
        {
            assert!(*o <= px.min(*pk) + 1e-15);
        }

        let bad = weight_histogram(&config, DetectorId::D1, Basis::Wavenumber, 50).unwrap();
        assert!(matches!(histogram_overlap(&hx, &bad), Err(Error::BinMismatch(_))));
    }
}
