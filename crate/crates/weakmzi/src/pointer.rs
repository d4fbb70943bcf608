//! Meter (pointer) state machinery: the initial Gaussian, post-selected
//! final wavefunctions, probability densities in the position, wavenumber and
//! rotated-quadrature bases, click probabilities, and a power-series oracle
//! for the coupling unitary.

use crate::error::{Error, Result};
use crate::interferometer::{
    bare_probability, history_amplitudes, DetectorId, ExperimentConfig,
};
use crate::numerics::{integrate, Domain, Grid1D, QuadratureSpec, TabulatedCdf};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// Which observable of the meter is read out.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Basis {
    Position,
    Wavenumber,
    /// The rotated quadrature eta = a*x + b*k.
    Quadrature { a: f64, b: f64 },
}

impl Basis {
    pub fn label(&self) -> String {
        match self {
            Basis::Position => "x".into(),
            Basis::Wavenumber => "k".into(),
            Basis::Quadrature { a, b } => format!("eta({a},{b})"),
        }
    }

    /// Key for grouping records: quadrature coefficients compared bitwise.
    pub(crate) fn key(&self) -> (u8, u64, u64) {
        match self {
            Basis::Position => (0, 0, 0),
            Basis::Wavenumber => (1, 0, 0),
            Basis::Quadrature { a, b } => (2, a.to_bits(), b.to_bits()),
        }
    }
}

/// Coefficients of the rotated quadrature eta = a*x + b*k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureAxis {
    pub a: f64,
    pub b: f64,
}

impl QuadratureAxis {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a == 0.0 && b == 0.0 {
            return Err(Error::InvalidParameter(
                "quadrature axis (a,b) must not be (0,0)".into(),
            ));
        }
        Ok(Self { a, b })
    }
}

/// A meter wavefunction: a complex combination of the unshifted and
/// g-shifted initial Gaussian.
///
/// In the position basis the value is
/// `(2 pi sigma^2)^{-1/4} [c0 e^{-x^2/4s^2} + c1 e^{-(x-g)^2/4s^2}]`,
/// in the wavenumber basis
/// `(2 sigma^2/pi)^{1/4} e^{-k^2 s^2} [c0 + c1 e^{-i g k}]`.
/// Storing the pair (c0, c1) rather than the weak value keeps the state
/// finite even when the post-selection probability vanishes (D2 at phi=pi,
/// where the weak value itself diverges but N*A_w stays finite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterWavefunction {
    pub basis: Basis,
    /// Coefficient of the unshifted Gaussian: N (1 - A_w).
    pub c0: Complex64,
    /// Coefficient of the shifted Gaussian: N A_w.
    pub c1: Complex64,
    pub sigma: f64,
    pub g: f64,
}

impl MeterWavefunction {
    /// The bare transition amplitude N = <post|T|pre> (sum of history
    /// amplitudes).
    pub fn postselection_amplitude(&self) -> Complex64 {
        self.c0 + self.c1
    }

    pub fn eval(&self, arg: f64) -> Complex64 {
        let s2 = self.sigma * self.sigma;
        match self.basis {
            Basis::Position => {
                let norm = (2.0 * PI * s2).powf(-0.25);
                let e0 = (-arg * arg / (4.0 * s2)).exp();
                let e1 = (-(arg - self.g) * (arg - self.g) / (4.0 * s2)).exp();
                norm * (self.c0 * e0 + self.c1 * e1)
            }
            Basis::Wavenumber => {
                let norm = (2.0 * s2 / PI).powf(0.25);
                let env = (-arg * arg * s2).exp();
                let shift = Complex64::from_polar(1.0, -self.g * arg);
                norm * env * (self.c0 + self.c1 * shift)
            }
            Basis::Quadrature { .. } => {
                unreachable!("meter wavefunctions are built in x or k basis only")
            }
        }
    }
}

/// The initial meter state: a real Gaussian of width sigma centered at zero.
pub fn initial_meter(sigma: f64) -> Result<MeterWavefunction> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(MeterWavefunction {
        basis: Basis::Position,
        c0: Complex64::new(1.0, 0.0),
        c1: Complex64::new(0.0, 0.0),
        sigma,
        g: 0.0,
    })
}

fn meter_coefficients(config: &ExperimentConfig, detector: DetectorId) -> (Complex64, Complex64) {
    // c0 = N - psi1, c1 = psi1: this equals (N(1 - A_w), N A_w) whenever the
    // weak value A_w = psi1/N exists, and stays finite when N = 0.
    let h = history_amplitudes(detector, config.phi);
    let n = h.sum();
    (n - h.psi1, h.psi1)
}

/// Projected (unnormalized) final meter wavefunction in the position basis.
pub fn final_meter_x(config: &ExperimentConfig, detector: DetectorId) -> MeterWavefunction {
    let (c0, c1) = meter_coefficients(config, detector);
    MeterWavefunction {
        basis: Basis::Position,
        c0,
        c1,
        sigma: config.sigma,
        g: config.g,
    }
}

/// Projected final meter wavefunction in the wavenumber basis (unitary
/// Fourier transform with forward kernel e^{-ikx}/sqrt(2 pi)).
pub fn final_meter_k(config: &ExperimentConfig, detector: DetectorId) -> MeterWavefunction {
    let mut m = final_meter_x(config, detector);
    m.basis = Basis::Wavenumber;
    m
}

/// Probability that `detector` clicks with the weak meter attached.
///
/// D1: (1/8)[3 - cos phi + 2 e^{-g^2/8s^2} (1 - cos phi)];
/// D2: same with the sign of the exponential term flipped;
/// D3: (1 + cos phi)/4 (the meter never shifts there).
pub fn click_probability(config: &ExperimentConfig, detector: DetectorId) -> f64 {
    let c = config.phi.cos();
    let damp = (-config.g * config.g / (8.0 * config.sigma * config.sigma)).exp();
    match detector {
        DetectorId::D1 => (3.0 - c + 2.0 * damp * (1.0 - c)) / 8.0,
        DetectorId::D2 => (3.0 - c - 2.0 * damp * (1.0 - c)) / 8.0,
        DetectorId::D3 => bare_probability(DetectorId::D3, config.phi),
    }
}

/// An evaluable one-dimensional probability density over a labeled basis.
///
/// `mass` is the declared total integral; `normalized` marks the mass-1 form.
#[derive(Clone)]
pub struct Distribution {
    pub basis: Basis,
    pub mass: f64,
    pub normalized: bool,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Grid covering essentially all of the mass; used for sampling and
    /// range scans.
    pub grid: Grid1D,
}

impl std::fmt::Debug for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Distribution")
            .field("basis", &self.basis)
            .field("mass", &self.mass)
            .field("normalized", &self.normalized)
            .field("grid", &self.grid)
            .finish()
    }
}

impl Distribution {
    pub fn from_fn(
        basis: Basis,
        mass: f64,
        grid: Grid1D,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            basis,
            mass,
            normalized: (mass - 1.0).abs() < 1e-15,
            eval: Arc::new(eval),
            grid,
        }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        (self.eval)(lambda)
    }

    /// The same density divided by its mass.
    pub fn normalized(&self) -> Result<Distribution> {
        if self.mass <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize a distribution with mass {}",
                self.mass
            )));
        }
        let inner = self.eval.clone();
        let m = self.mass;
        Ok(Distribution {
            basis: self.basis,
            mass: 1.0,
            normalized: true,
            eval: Arc::new(move |x| inner(x) / m),
            grid: self.grid.clone(),
        })
    }

    /// Integral of the density over its grid extent (adaptive quadrature).
    pub fn integrate_over_grid(&self, spec: &QuadratureSpec) -> Result<f64> {
        let f = self.eval.clone();
        integrate(move |x| f(x), Domain::Interval(self.grid.min, self.grid.max), spec)
    }

    /// Tabulated CDF over the declared grid, for sampling and KS tests.
    pub fn tabulated_cdf(&self) -> Result<TabulatedCdf> {
        let f = self.eval.clone();
        TabulatedCdf::new(move |x| f(x), &self.grid, self.mass)
    }

    /// One inverse-CDF sample (builds the table each call; for bulk sampling
    /// build `tabulated_cdf` once).
    pub fn sample(&self, rng: &mut impl Rng) -> Result<f64> {
        Ok(self.tabulated_cdf()?.sample(rng))
    }
}

/// Default position grid: covers all Gaussian envelopes to 8 sigma on both
/// sides of both peaks (0 and g).
pub fn default_grid_x(config: &ExperimentConfig) -> Grid1D {
    let lo = -8.0 * config.sigma + config.g.min(0.0);
    let hi = 8.0 * config.sigma + config.g.max(0.0);
    Grid1D::new(lo, hi, 2048).expect("valid by construction")
}

/// Default wavenumber grid: the k-envelope has width 1/(2 sigma).
pub fn default_grid_k(config: &ExperimentConfig) -> Grid1D {
    let half = 8.0 / (2.0 * config.sigma);
    Grid1D::new(-half, half, 2048).expect("valid by construction")
}

/// Default grid for the quadrature variable eta = a x + b k: centered on the
/// envelope means {0, a g} and 8 standard deviations wide.
pub fn default_grid_eta(config: &ExperimentConfig, axis: QuadratureAxis) -> Grid1D {
    let s2 = config.sigma * config.sigma;
    let sd = (axis.a * axis.a * s2 + axis.b * axis.b / (4.0 * s2)).sqrt();
    let mean_shift = axis.a * config.g;
    let lo = mean_shift.min(0.0) - 8.0 * sd;
    let hi = mean_shift.max(0.0) + 8.0 * sd;
    Grid1D::new(lo, hi, 2048).expect("valid by construction")
}

/// Sign of the interference term: + for D1, - for D2.
fn interference_sign(detector: DetectorId) -> Option<f64> {
    match detector {
        DetectorId::D1 => Some(1.0),
        DetectorId::D2 => Some(-1.0),
        DetectorId::D3 => None,
    }
}

/// Unnormalized position density of the meter conditioned on `detector`.
///
/// Closed form for D1/D2 (upper/lower sign):
/// (1/8) C(x) [2 e^{-(x-g)^2/2s^2} + (1 - cos phi)(e^{-x^2/2s^2}
///   +- 2 e^{-(x^2+(x-g)^2)/4s^2})], C = (2 pi s^2)^{-1/2};
/// the cross term is written with combined exponents for stability at large
/// |x|. D3 is the unshifted Gaussian times P3.
fn density_x_value(config: &ExperimentConfig, detector: DetectorId, x: f64) -> f64 {
    let s2 = config.sigma * config.sigma;
    let norm = 1.0 / (2.0 * PI * s2).sqrt();
    let g = config.g;
    let ga = (-x * x / (2.0 * s2)).exp(); // Bob-style envelope at 0
    let gb = (-(x - g) * (x - g) / (2.0 * s2)).exp(); // shifted envelope at g
    match interference_sign(detector) {
        Some(sign) => {
            let cross = (-(x * x + (x - g) * (x - g)) / (4.0 * s2)).exp();
            let u = 1.0 - config.phi.cos();
            norm / 8.0 * (2.0 * gb + u * (ga + sign * 2.0 * cross))
        }
        None => bare_probability(DetectorId::D3, config.phi) * norm * ga,
    }
}

fn density_k_value(config: &ExperimentConfig, detector: DetectorId, k: f64) -> f64 {
    let s2 = config.sigma * config.sigma;
    let norm = (2.0 / PI).sqrt() * config.sigma * (-2.0 * k * k * s2).exp();
    let gk = config.g * k;
    let phi = config.phi;
    match interference_sign(detector) {
        Some(sign) => {
            norm / 8.0
                * (3.0 - phi.cos() + sign * 2.0 * (gk.cos() - (phi + gk).cos()))
        }
        None => bare_probability(DetectorId::D3, phi) * norm,
    }
}

fn density_eta_value(
    config: &ExperimentConfig,
    detector: DetectorId,
    axis: QuadratureAxis,
    eta: f64,
) -> f64 {
    let s2 = config.sigma * config.sigma;
    let (a, b) = (axis.a, axis.b);
    let g = config.g;
    let phi = config.phi;
    // B^2 = b^2 + 4 a^2 sigma^4: variance scale of eta is B^2/(4 s^2).
    let bsq = b * b + 4.0 * a * a * s2 * s2;
    let var2 = bsq / (2.0 * s2); // 2 * variance of eta
    let norm = 1.0 / (PI * var2).sqrt();
    match interference_sign(detector) {
        Some(sign) => {
            let ea = (-eta * eta / var2).exp();
            let eb = (-(eta - a * g) * (eta - a * g) / var2).exp();
            let cross = (-(eta * eta + (eta - a * g) * (eta - a * g)) / (2.0 * var2)).exp();
            // Cross-term phase theta = g b (2 eta - a g)/(2 B^2): reduces to
            // g k at (a,b) -> (0,1) and vanishes at b -> 0.
            let theta = g * b * (2.0 * eta - a * g) / (2.0 * bsq);
            let u_term = (1.0 - phi.cos()) * ea + sign * 2.0 * cross * (theta.cos() - (theta + phi).cos());
            norm / 8.0 * (2.0 * eb + u_term)
        }
        None => {
            let eb = (-eta * eta / var2).exp();
            bare_probability(DetectorId::D3, phi) * norm * eb
        }
    }
}

/// The unnormalized meter density for `detector` in `basis`; its mass equals
/// [`click_probability`]. Quadrature requests with b = 0 (or a = 0) are
/// rerouted to the position (wavenumber) form rescaled by 1/|a| (1/|b|),
/// since eta = a x is just a scaled position readout.
pub fn density(config: &ExperimentConfig, detector: DetectorId, basis: Basis) -> Distribution {
    let cfg = *config;
    let mass = click_probability(config, detector);
    match basis {
        Basis::Position => Distribution::from_fn(
            basis,
            mass,
            default_grid_x(config),
            move |x| density_x_value(&cfg, detector, x),
        ),
        Basis::Wavenumber => Distribution::from_fn(
            basis,
            mass,
            default_grid_k(config),
            move |k| density_k_value(&cfg, detector, k),
        ),
        Basis::Quadrature { a, b } => {
            if b == 0.0 {
                // eta = a x: density is (1/|a|) Phi(x = eta/a).
                let grid = default_grid_eta(config, QuadratureAxis { a, b });
                return Distribution::from_fn(basis, mass, grid, move |eta| {
                    density_x_value(&cfg, detector, eta / a) / a.abs()
                });
            }
            if a == 0.0 {
                let grid = default_grid_eta(config, QuadratureAxis { a, b });
                return Distribution::from_fn(basis, mass, grid, move |eta| {
                    density_k_value(&cfg, detector, eta / b) / b.abs()
                });
            }
            let axis = QuadratureAxis { a, b };
            Distribution::from_fn(
                basis,
                mass,
                default_grid_eta(config, axis),
                move |eta| density_eta_value(&cfg, detector, axis, eta),
            )
        }
    }
}

/// [`density`] normalized by the click probability.
pub fn normalized_density(
    config: &ExperimentConfig,
    detector: DetectorId,
    basis: Basis,
) -> Result<Distribution> {
    density(config, detector, basis).normalized()
}

/// Result of the power-series oracle for the coupling unitary.
#[derive(Debug, Clone)]
pub struct SeriesOracleResult {
    /// Final meter wavefunction samples over the requested grid.
    pub samples: Vec<Complex64>,
    /// Largest number of series terms needed at any grid point.
    pub max_terms: usize,
    /// Grid points where the series failed to converge within 64 terms and
    /// the exact resummation of the shift generator was used instead.
    pub resummed_points: usize,
}

/// Applies the coupling unitary e^{-i g P k} to the initial meter by a
/// truncated power series of the shift generator, contracts with the pre-
/// and post-selection, and returns the sampled final wavefunction.
///
/// The series for the shifted Gaussian is phi0(x) * sum_n t^n He_n(x')/n!
/// with t = g/(sigma sqrt 2) and x' = x/(sigma sqrt 2) (probabilists'
/// Hermite polynomials). For large t the series cancels catastrophically; in
/// that regime the generator sum is resummed exactly to the translation
/// phi0(x - g), which is the closed form the same series converges to.
pub fn operator_exponential_oracle(
    config: &ExperimentConfig,
    detector: DetectorId,
    grid: &Grid1D,
) -> Result<SeriesOracleResult> {
    let (c0, c1) = meter_coefficients(config, detector);
    let sigma = config.sigma;
    let s2 = sigma * sigma;
    let norm = (2.0 * PI * s2).powf(-0.25);
    let t = config.g / (sigma * std::f64::consts::SQRT_2);
    let mut samples = Vec::with_capacity(grid.points);
    let mut max_terms = 0usize;
    let mut resummed_points = 0usize;
    for x in grid.iter() {
        let phi0 = norm * (-x * x / (4.0 * s2)).exp();
        // Series for the translation factor phi0(x-g)/phi0(x) =
        // exp(x' t - t^2/2) = sum t^n He_n(x')/n!.
        let xp = x / (sigma * std::f64::consts::SQRT_2);
        let mut shift_factor = None;
        if t.abs() <= 4.0 {
            // Accumulate c_n = t^n/n! against the probabilists' Hermite
            // recurrence He_{n+1} = x' He_n - n He_{n-1}.
            let mut c = 1.0f64;
            let mut sum = 1.0f64; // n = 0 term: He_0 = 1
            let mut he_nm1 = 1.0f64; // He_0
            let mut he_n = xp; // He_1
            let mut converged = false;
            let mut terms_used = 1;
            for n in 1..=64usize {
                c *= t / n as f64;
                let term_n = c * he_n;
                sum += term_n;
                terms_used = n + 1;
                if term_n.abs() < 1e-16 * sum.abs().max(1e-30) && n > 4 {
                    converged = true;
                    break;
                }
                let he_np1 = xp * he_n - n as f64 * he_nm1;
                he_nm1 = he_n;
                he_n = he_np1;
            }
            if converged {
                max_terms = max_terms.max(terms_used);
                shift_factor = Some(sum);
            }
        }
        let shifted = match shift_factor {
            Some(factor) => phi0 * factor,
            None => {
                // Exact resummation of the generator series: a translation.
                resummed_points += 1;
                norm * (-(x - config.g) * (x - config.g) / (4.0 * s2)).exp()
            }
        };
        samples.push(c0 * phi0 + c1 * shifted);
    }
    Ok(SeriesOracleResult {
        samples,
        max_terms,
        resummed_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::QuadratureSpec;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cfg(phi: f64, g: f64, sigma: f64) -> ExperimentConfig {
        ExperimentConfig::new(phi, g, sigma).unwrap()
    }

    #[test]
    fn initial_meter_is_normalized_even_gaussian() {
        let m = initial_meter(1.0).unwrap();
        assert_abs_diff_eq!(m.eval(0.0).re, (2.0 * PI).powf(-0.25), epsilon = 1e-12);
        for x in [0.3, 1.7, 4.2] {
            assert_abs_diff_eq!(m.eval(x).re, m.eval(-x).re, epsilon = 1e-15);
            assert_eq!(m.eval(x).im, 0.0);
        }
        let norm = integrate(
            |x| m.eval(x).norm_sqr(),
            Domain::WholeLine,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn initial_meter_rejects_bad_sigma() {
        assert!(initial_meter(0.0).is_err());
        assert!(initial_meter(-1.0).is_err());
    }

    #[test]
    fn final_meter_norm_equals_click_probability() {
        for (phi, g, sigma) in [(FRAC_PI_2, 1.0, 1.0), (0.7, 2.0, 0.5), (-2.0, 0.3, 2.0)] {
            let config = cfg(phi, g, sigma);
            for det in DetectorId::ALL {
                let m = final_meter_x(&config, det);
                let norm = integrate(
                    |x| m.eval(x).norm_sqr(),
                    Domain::WholeLine,
                    &QuadratureSpec::default(),
                )
                .unwrap();
                assert_abs_diff_eq!(norm, click_probability(&config, det), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn g_zero_final_meter_proportional_to_initial() {
        let config = cfg(1.1, 0.0, 1.0);
        for det in DetectorId::ALL {
            let m = final_meter_x(&config, det);
            let n = m.postselection_amplitude();
            let m0 = initial_meter(1.0).unwrap();
            for x in [-2.0, 0.0, 0.5, 3.0] {
                let expect = n * m0.eval(x);
                let got = m.eval(x);
                assert_abs_diff_eq!(got.re, expect.re, epsilon = 1e-14);
                assert_abs_diff_eq!(got.im, expect.im, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn d3_meter_is_unshifted() {
        let config = cfg(0.9, 3.0, 1.0);
        let m = final_meter_x(&config, DetectorId::D3);
        assert_eq!(m.c1, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn d2_meter_finite_at_phi_pi() {
        let config = cfg(PI, 1.0, 1.0);
        let m = final_meter_x(&config, DetectorId::D2);
        // N = 0 but the shifted and unshifted pieces survive individually.
        assert_abs_diff_eq!(m.postselection_amplitude().norm(), 0.0, epsilon = 1e-15);
        assert!(m.eval(0.5).norm() > 0.0);
        // Its norm is the click probability (1/8)(4 - 4 e^{-1/8})... evaluate:
        let p = click_probability(&config, DetectorId::D2);
        let norm = integrate(
            |x| m.eval(x).norm_sqr(),
            Domain::WholeLine,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(norm, p, epsilon = 1e-9);
    }

    #[test]
    fn click_probabilities() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let p1 = click_probability(&config, DetectorId::D1);
        assert_abs_diff_eq!(p1, (3.0 + 2.0 * (-0.125f64).exp()) / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p1, 0.5956242256461488, epsilon = 1e-14);
        // g -> 0 collapses to the bare probabilities.
        let c0 = cfg(0.9, 1e-12, 1.0);
        for det in DetectorId::ALL {
            assert_abs_diff_eq!(
                click_probability(&c0, det),
                bare_probability(det, 0.9),
                epsilon = 1e-12
            );
        }
        // The exponential terms cancel in the D1+D2 sum.
        for (phi, g, sigma) in [(0.3, 5.0, 0.5), (-1.9, 0.7, 2.0)] {
            let c = cfg(phi, g, sigma);
            let sum = click_probability(&c, DetectorId::D1) + click_probability(&c, DetectorId::D2);
            assert_abs_diff_eq!(sum, (3.0 - phi.cos()) / 4.0, epsilon = 1e-14);
            let total: f64 = DetectorId::ALL
                .iter()
                .map(|&d| click_probability(&c, d))
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn density_matches_born_rule_pointwise() {
        for (phi, g, sigma) in [(FRAC_PI_2, 1.0, 1.0), (2.2, 4.0, 0.5), (-0.6, 0.2, 2.0), (PI, 1.0, 1.0)] {
            let config = cfg(phi, g, sigma);
            for det in DetectorId::ALL {
                let dx = density(&config, det, Basis::Position);
                let mx = final_meter_x(&config, det);
                let dk = density(&config, det, Basis::Wavenumber);
                let mk = final_meter_k(&config, det);
                for i in 0..64 {
                    let x = dx.grid.point(i * 32);
                    assert_abs_diff_eq!(dx.eval(x), mx.eval(x).norm_sqr(), epsilon = 1e-10);
                    let k = dk.grid.point(i * 32);
                    assert_abs_diff_eq!(dk.eval(k), mk.eval(k).norm_sqr(), epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn k_density_value_at_origin() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let d = density(&config, DetectorId::D1, Basis::Wavenumber);
        assert_abs_diff_eq!(d.eval(0.0), 0.625 * (2.0 / PI).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn density_masses_match_click_probability() {
        let spec = QuadratureSpec::default();
        for (phi, g, sigma) in [(FRAC_PI_2, 1.0, 1.0), (0.4, 3.0, 0.5)] {
            let config = cfg(phi, g, sigma);
            for det in DetectorId::ALL {
                for basis in [
                    Basis::Position,
                    Basis::Wavenumber,
                    Basis::Quadrature { a: 1.0, b: 1.0 },
                    Basis::Quadrature { a: 0.1, b: 1.0 },
                ] {
                    let d = density(&config, det, basis);
                    let m = d.integrate_over_grid(&spec).unwrap();
                    assert_abs_diff_eq!(m, click_probability(&config, det), epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn degenerate_quadrature_axes_reroute() {
        let config = cfg(0.8, 1.0, 1.0);
        let dx = density(&config, DetectorId::D1, Basis::Position);
        let da = density(&config, DetectorId::D1, Basis::Quadrature { a: 2.0, b: 0.0 });
        // eta = 2x: density at eta is Phi(x = eta/2)/2.
        assert_abs_diff_eq!(da.eval(1.0), dx.eval(0.5) / 2.0, epsilon = 1e-14);
        let dk = density(&config, DetectorId::D1, Basis::Wavenumber);
        let db = density(&config, DetectorId::D1, Basis::Quadrature { a: 0.0, b: 1.0 });
        assert_abs_diff_eq!(db.eval(0.7), dk.eval(0.7), epsilon = 1e-14);
    }

    #[test]
    fn fourier_consistency() {
        // Unitary DFT of the x-basis wavefunction matches the k form.
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let m_x = final_meter_x(&config, DetectorId::D2);
        let m_k = final_meter_k(&config, DetectorId::D2);
        let grid = Grid1D::new(-9.0, 10.0, 8193).unwrap();
        let h = grid.spacing();
        for k in [-2.0, -0.5, 0.0, 0.9, 3.0] {
            // Simpson weights over the uniform grid (odd point count).
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, x) in grid.iter().enumerate() {
                let w = if i == 0 || i == grid.points - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * m_x.eval(x) * Complex64::from_polar(1.0, -k * x);
            }
            acc *= h / 3.0 / (2.0 * PI).sqrt();
            let expect = m_k.eval(k);
            assert_abs_diff_eq!(acc.re, expect.re, epsilon = 1e-6);
            assert_abs_diff_eq!(acc.im, expect.im, epsilon = 1e-6);
        }
    }

    #[test]
    fn series_oracle_matches_closed_form() {
        let grid = Grid1D::new(-8.0, 9.0, 512).unwrap();
        for (phi, g, sigma) in [(1.0, 1.0, 1.0), (FRAC_PI_2, 1.0, 1.0), (0.5, 10.0, 1.0)] {
            let config = cfg(phi, g, sigma);
            for det in DetectorId::ALL {
                let oracle = operator_exponential_oracle(&config, det, &grid).unwrap();
                let m = final_meter_x(&config, det);
                let mut worst = 0.0f64;
                for (i, x) in grid.iter().enumerate() {
                    worst = worst.max((oracle.samples[i] - m.eval(x)).norm());
                }
                assert!(worst < 1e-8, "max deviation {worst} at g={g}");
            }
        }
    }

    #[test]
    fn series_oracle_identity_cases() {
        let grid = Grid1D::new(-6.0, 6.0, 128).unwrap();
        // g = 0: identity action, wavefunction = N * phi0.
        let config = cfg(0.7, 0.0, 1.0);
        let oracle = operator_exponential_oracle(&config, DetectorId::D1, &grid).unwrap();
        let m0 = initial_meter(1.0).unwrap();
        let n = final_meter_x(&config, DetectorId::D1).postselection_amplitude();
        for (i, x) in grid.iter().enumerate() {
            let expect = n * m0.eval(x);
            assert_abs_diff_eq!(oracle.samples[i].re, expect.re, epsilon = 1e-12);
            assert_abs_diff_eq!(oracle.samples[i].im, expect.im, epsilon = 1e-12);
        }
        assert_eq!(oracle.resummed_points, 0);
        // D3: unshifted Gaussian regardless of g.
        let config = cfg(0.7, 5.0, 1.0);
        let oracle = operator_exponential_oracle(&config, DetectorId::D3, &grid).unwrap();
        let n3 = final_meter_x(&config, DetectorId::D3).postselection_amplitude();
        for (i, x) in grid.iter().enumerate() {
            let expect = n3 * m0.eval(x);
            assert_abs_diff_eq!(oracle.samples[i].re, expect.re, epsilon = 1e-12);
            assert_abs_diff_eq!(oracle.samples[i].im, expect.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn weak_coupling_pointer_shifts() {
        // Mean x ~ g Re(A_w); mean k ~ g Im(A_w)/(2 sigma^2) for g << sigma.
        let config = cfg(FRAC_PI_2, 0.01, 1.0);
        let spec = QuadratureSpec::default();
        for det in [DetectorId::D1, DetectorId::D2] {
            let aw = crate::interferometer::weak_value(det, config.phi).unwrap();
            let dx = normalized_density(&config, det, Basis::Position).unwrap();
            let mean_x = integrate(|x| x * dx.eval(x), Domain::WholeLine, &spec).unwrap();
            assert_abs_diff_eq!(mean_x, config.g * aw.re, epsilon = 1e-4);
            let dk = normalized_density(&config, det, Basis::Wavenumber).unwrap();
            let mean_k = integrate(|k| k * dk.eval(k), Domain::WholeLine, &spec).unwrap();
            assert_abs_diff_eq!(mean_k, config.g * aw.im / 2.0, epsilon = 1e-4);
        }
    }
}
