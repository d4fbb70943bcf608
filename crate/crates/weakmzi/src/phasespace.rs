//! Wigner functions for the relevant meter states, marginalization, Radon
//! tomograms along rotated quadratures, and negativity detection.

use crate::error::{Error, Result};
use crate::interferometer::{DetectorId, ExperimentConfig};
use crate::numerics::{integrate, integrate_complex, Domain, Grid1D, QuadratureSpec};
use crate::pointer::{click_probability, Basis, Distribution, MeterWavefunction, QuadratureAxis};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

/// The named Wigner functions of this experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WignerLabel {
    /// Meter shifted to g (Alice's default).
    A,
    /// Unshifted meter (Bob's default).
    B,
    /// Mixture arriving at the final beam splitter.
    Plus,
    /// Post-selected on D1.
    D1,
    /// Post-selected on D2.
    D2,
}

impl std::str::FromStr for WignerLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WA" | "A" | "W_A" => Ok(WignerLabel::A),
            "WB" | "B" | "W_B" => Ok(WignerLabel::B),
            "WPLUS" | "PLUS" | "W+" | "W_PLUS" => Ok(WignerLabel::Plus),
            "W1" | "D1" | "W_1" => Ok(WignerLabel::D1),
            "W2" | "D2" | "W_2" => Ok(WignerLabel::D2),
            other => Err(Error::InvalidParameter(format!("unknown Wigner label {other:?}"))),
        }
    }
}

/// An evaluable real function over the (x, k) phase plane with a declared
/// total mass.
#[derive(Clone)]
pub struct PhaseSpaceField {
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub mass: f64,
    pub label: Option<WignerLabel>,
}

impl std::fmt::Debug for PhaseSpaceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseSpaceField")
            .field("mass", &self.mass)
            .field("label", &self.label)
            .finish()
    }
}

impl PhaseSpaceField {
    pub fn from_fn(
        mass: f64,
        label: Option<WignerLabel>,
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            mass,
            label,
        }
    }

    pub fn eval(&self, x: f64, k: f64) -> f64 {
        (self.eval)(x, k)
    }
}

fn gaussian_wigner(x: f64, k: f64, center: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (1.0 / PI) * (-(x - center) * (x - center) / (2.0 * s2) - 2.0 * k * k * s2).exp()
}

/// Exact closed-form Wigner function for `label`.
///
/// W_A and W_B are unit-mass Gaussians at (g, 0) and (0, 0); W_+ is the
/// mixture (1/2) W_A + (1/4)(1 - cos phi) W_B; W_1 and W_2 add (subtract)
/// the interference term
/// (1/4 pi) e^{-2 k^2 s^2} e^{-(2x-g)^2/8 s^2} [cos(g k) - cos(g k + phi)].
pub fn wigner_closed_form(label: WignerLabel, config: &ExperimentConfig) -> PhaseSpaceField {
    let cfg = *config;
    let mass = match label {
        WignerLabel::A | WignerLabel::B => 1.0,
        WignerLabel::Plus => (3.0 - config.phi.cos()) / 4.0,
        WignerLabel::D1 => click_probability(config, DetectorId::D1),
        WignerLabel::D2 => click_probability(config, DetectorId::D2),
    };
    PhaseSpaceField::from_fn(mass, Some(label), move |x, k| {
        wigner_value(label, &cfg, x, k)
    })
}

fn wigner_value(label: WignerLabel, config: &ExperimentConfig, x: f64, k: f64) -> f64 {
    let (g, sigma) = (config.g, config.sigma);
    let u = 1.0 - config.phi.cos();
    match label {
        WignerLabel::A => gaussian_wigner(x, k, g, sigma),
        WignerLabel::B => gaussian_wigner(x, k, 0.0, sigma),
        WignerLabel::Plus => {
            0.5 * gaussian_wigner(x, k, g, sigma) + 0.25 * u * gaussian_wigner(x, k, 0.0, sigma)
        }
        WignerLabel::D1 | WignerLabel::D2 => {
            let sign = if label == WignerLabel::D1 { 1.0 } else { -1.0 };
            let s2 = sigma * sigma;
            let gk = g * k;
            let interference = (1.0 / (4.0 * PI))
                * (-2.0 * k * k * s2).exp()
                * (-(2.0 * x - g) * (2.0 * x - g) / (8.0 * s2)).exp()
                * (gk.cos() - (gk + config.phi).cos());
            0.25 * gaussian_wigner(x, k, g, sigma)
                + 0.125 * u * gaussian_wigner(x, k, 0.0, sigma)
                + sign * interference
        }
    }
}

/// Wigner function computed from the defining integral
/// W(x,k) = (1/pi) integral of conj(phi)(x+z) phi(x-z) e^{2ikz} dz,
/// as an independent oracle for the closed forms.
pub fn wigner_from_wavefunction(wavefunction: &MeterWavefunction) -> Result<PhaseSpaceField> {
    if wavefunction.basis != Basis::Position {
        return Err(Error::InvalidParameter(
            "Wigner transform expects a position-basis wavefunction".into(),
        ));
    }
    let wf = *wavefunction;
    let mass = integrate(
        |x| wf.eval(x).norm_sqr(),
        Domain::WholeLine,
        &QuadratureSpec::default(),
    )?;
    let spec = QuadratureSpec {
        abs_tol: 1e-9,
        ..QuadratureSpec::default()
    };
    Ok(PhaseSpaceField::from_fn(mass, None, move |x, k| {
        let v = integrate_complex(
            |z| {
                wf.eval(x + z).conj() * wf.eval(x - z) * Complex64::from_polar(1.0, 2.0 * k * z)
            },
            Domain::WholeLine,
            &spec,
        )
        .unwrap_or(Complex64::new(f64::NAN, 0.0));
        v.re / PI
    }))
}

/// Which marginal of a phase-space field to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalAxis {
    /// Integrate k out, leaving a position density.
    X,
    /// Integrate x out, leaving a wavenumber density.
    K,
}

/// Marginal density of `field` along the requested axis, as a lazy
/// distribution evaluating a whole-line quadrature per point.
pub fn marginal(field: &PhaseSpaceField, axis: MarginalAxis, grid: Grid1D) -> Distribution {
    let f = field.clone();
    let spec = QuadratureSpec {
        abs_tol: 1e-10,
        ..QuadratureSpec::default()
    };
    let basis = match axis {
        MarginalAxis::X => Basis::Position,
        MarginalAxis::K => Basis::Wavenumber,
    };
    Distribution::from_fn(basis, field.mass, grid, move |lambda| {
        let value = match axis {
            MarginalAxis::X => integrate(|k| f.eval(lambda, k), Domain::WholeLine, &spec),
            MarginalAxis::K => integrate(|x| f.eval(x, lambda), Domain::WholeLine, &spec),
        };
        value.unwrap_or(f64::NAN)
    })
}

/// Radon transform of `field` along the line a x + b k = eta:
/// integral of W over the line with the delta-function normalization
/// delta(eta - a x - b k), i.e. (1/|b|) integral over x of
/// W(x, (eta - a x)/b) dx for b != 0 (symmetric form in a otherwise).
///
/// Reduces to the x-marginal at (1,0) and the k-marginal at (0,1).
pub fn radon_tomogram(
    field: &PhaseSpaceField,
    axis: QuadratureAxis,
    eta_grid: Grid1D,
) -> Distribution {
    let f = field.clone();
    let (a, b) = (axis.a, axis.b);
    let spec = QuadratureSpec {
        abs_tol: 1e-10,
        ..QuadratureSpec::default()
    };
    let basis = Basis::Quadrature { a, b };
    Distribution::from_fn(basis, field.mass, eta_grid, move |eta| {
        let value = if b != 0.0 {
            integrate(
                |x| f.eval(x, (eta - a * x) / b) / b.abs(),
                Domain::WholeLine,
                &spec,
            )
        } else {
            integrate(
                |k| f.eval((eta - b * k) / a, k) / a.abs(),
                Domain::WholeLine,
                &spec,
            )
        };
        value.unwrap_or(f64::NAN)
    })
}

/// Outcome of scanning a phase-space field for negative values.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NegativityReport {
    pub min_value: f64,
    pub argmin: (f64, f64),
    /// Integral of |min(W, 0)| over the scanned rectangle (cell sum).
    pub negative_mass: f64,
    pub grid_x: Grid1D,
    pub grid_k: Grid1D,
}

/// Scan `field` on the grid product and report the minimum value, its
/// location, and the integrated negative mass.
pub fn negativity_scan(field: &PhaseSpaceField, grid_x: &Grid1D, grid_k: &Grid1D) -> NegativityReport {
    let mut min_value = f64::INFINITY;
    let mut argmin = (grid_x.min, grid_k.min);
    let mut negative_mass = 0.0;
    let cell = grid_x.spacing() * grid_k.spacing();
    for x in grid_x.iter() {
        for k in grid_k.iter() {
            let v = field.eval(x, k);
            if v < min_value {
                min_value = v;
                argmin = (x, k);
            }
            if v < 0.0 {
                negative_mass += -v * cell;
            }
        }
    }
    NegativityReport {
        min_value,
        argmin,
        negative_mass,
        grid_x: grid_x.clone(),
        grid_k: grid_k.clone(),
    }
}

/// Default phase-space scan grids: x in [-6 sigma, g + 6 sigma],
/// k in [-3/sigma, 3/sigma], `points` per axis.
pub fn default_scan_grids(config: &ExperimentConfig, points: usize) -> (Grid1D, Grid1D) {
    let x = Grid1D::new(
        -6.0 * config.sigma + config.g.min(0.0),
        config.g.max(0.0) + 6.0 * config.sigma,
        points,
    )
    .expect("valid by construction");
    let half = 6.0 / (2.0 * config.sigma);
    let k = Grid1D::new(-half, half, points).expect("valid by construction");
    (x, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{density, final_meter_x, initial_meter};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cfg(phi: f64, g: f64, sigma: f64) -> ExperimentConfig {
        ExperimentConfig::new(phi, g, sigma).unwrap()
    }

    #[test]
    fn closed_form_values_and_mixture_identity() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let wb = wigner_closed_form(WignerLabel::B, &config);
        assert_abs_diff_eq!(wb.eval(0.0, 0.0), 1.0 / PI, epsilon = 1e-15);
        let wa = wigner_closed_form(WignerLabel::A, &config);
        let wp = wigner_closed_form(WignerLabel::Plus, &config);
        let w1 = wigner_closed_form(WignerLabel::D1, &config);
        let w2 = wigner_closed_form(WignerLabel::D2, &config);
        let u = 1.0 - config.phi.cos();
        for x in [-2.0, 0.0, 0.5, 1.0, 3.0] {
            for k in [-1.5, 0.0, 0.8] {
                assert_abs_diff_eq!(
                    wp.eval(x, k),
                    0.5 * wa.eval(x, k) + 0.25 * u * wb.eval(x, k),
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    w1.eval(x, k) + w2.eval(x, k),
                    wp.eval(x, k),
                    epsilon = 1e-12
                );
                assert!(wa.eval(x, k) >= 0.0);
                assert!(wb.eval(x, k) >= 0.0);
            }
        }
    }

    #[test]
    fn wigner_oracle_matches_gaussian_forms() {
        let m0 = initial_meter(1.0).unwrap();
        let config = cfg(0.0, 1.5, 1.0);
        let w = wigner_from_wavefunction(&m0).unwrap();
        let wb = wigner_closed_form(WignerLabel::B, &config);
        for (x, k) in [(0.0, 0.0), (0.7, -0.4), (-1.2, 1.0)] {
            assert_abs_diff_eq!(w.eval(x, k), wb.eval(x, k), epsilon = 1e-8);
        }
        // Shifted Gaussian: translate the initial meter by writing it as a
        // final meter with c0 = 0, c1 = 1.
        let shifted = MeterWavefunction {
            basis: Basis::Position,
            c0: Complex64::new(0.0, 0.0),
            c1: Complex64::new(1.0, 0.0),
            sigma: 1.0,
            g: 1.5,
        };
        let w = wigner_from_wavefunction(&shifted).unwrap();
        let wa = wigner_closed_form(WignerLabel::A, &config);
        for (x, k) in [(1.5, 0.0), (0.7, -0.4), (2.4, 1.0)] {
            assert_abs_diff_eq!(w.eval(x, k), wa.eval(x, k), epsilon = 1e-8);
        }
    }

    #[test]
    fn wigner_oracle_matches_postselected_closed_forms() {
        let config = cfg(FRAC_PI_2, 10.0, 1.0);
        for (label, det) in [(WignerLabel::D1, DetectorId::D1), (WignerLabel::D2, DetectorId::D2)] {
            let wf = final_meter_x(&config, det);
            let oracle = wigner_from_wavefunction(&wf).unwrap();
            let closed = wigner_closed_form(label, &config);
            for (x, k) in [(0.0, 0.0), (5.0, 0.3), (5.0, -1.2), (10.0, 0.0), (2.0, 1.0)] {
                assert_abs_diff_eq!(oracle.eval(x, k), closed.eval(x, k), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn marginals_match_densities() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let w1 = wigner_closed_form(WignerLabel::D1, &config);
        let dx = density(&config, DetectorId::D1, Basis::Position);
        let mx = marginal(&w1, MarginalAxis::X, dx.grid.clone());
        for x in [-1.0, 0.0, 0.5, 1.0, 2.5] {
            assert_abs_diff_eq!(mx.eval(x), dx.eval(x), epsilon = 1e-8);
        }
        let dk = density(&config, DetectorId::D1, Basis::Wavenumber);
        let mk = marginal(&w1, MarginalAxis::K, dk.grid.clone());
        for k in [-2.0, -0.3, 0.0, 1.1] {
            assert_abs_diff_eq!(mk.eval(k), dk.eval(k), epsilon = 1e-8);
        }
        // W_B marginal is the normalized Bob Gaussian.
        let wb = wigner_closed_form(WignerLabel::B, &config);
        let mb = marginal(&wb, MarginalAxis::X, dx.grid.clone());
        let s2 = 1.0f64;
        for x in [-1.0f64, 0.0, 0.9] {
            let expect = (-x * x / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
            assert_abs_diff_eq!(mb.eval(x), expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn radon_reduces_to_marginals_and_matches_eta_density() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let w1 = wigner_closed_form(WignerLabel::D1, &config);
        let dx = density(&config, DetectorId::D1, Basis::Position);
        let rx = radon_tomogram(&w1, QuadratureAxis::new(1.0, 0.0).unwrap(), dx.grid.clone());
        for x in [-0.5, 0.0, 1.0, 2.0] {
            assert_abs_diff_eq!(rx.eval(x), dx.eval(x), epsilon = 1e-8);
        }
        let dk = density(&config, DetectorId::D1, Basis::Wavenumber);
        let rk = radon_tomogram(&w1, QuadratureAxis::new(0.0, 1.0).unwrap(), dk.grid.clone());
        for k in [-1.0, 0.0, 0.4] {
            assert_abs_diff_eq!(rk.eval(k), dk.eval(k), epsilon = 1e-8);
        }
        let de = density(&config, DetectorId::D1, Basis::Quadrature { a: 1.0, b: 1.0 });
        let re = radon_tomogram(&w1, QuadratureAxis::new(1.0, 1.0).unwrap(), de.grid.clone());
        for eta in [-1.5, -0.2, 0.0, 0.8, 1.9] {
            assert_abs_diff_eq!(re.eval(eta), de.eval(eta), epsilon = 1e-6);
        }
    }

    #[test]
    fn negativity_appears_only_with_phase() {
        let (gx, gk) = default_scan_grids(&cfg(FRAC_PI_2, 10.0, 1.0), 256);
        // At phi = 0 the interference term vanishes identically.
        let flat = cfg(0.0, 10.0, 1.0);
        for label in [WignerLabel::D1, WignerLabel::D2] {
            let report = negativity_scan(&wigner_closed_form(label, &flat), &gx, &gk);
            assert!(report.min_value >= -1e-12);
        }
        let config = cfg(FRAC_PI_2, 10.0, 1.0);
        for label in [WignerLabel::D1, WignerLabel::D2] {
            let report = negativity_scan(&wigner_closed_form(label, &config), &gx, &gk);
            assert!(report.min_value < 0.0);
            assert!(report.negative_mass > 0.0);
        }
        let wa = wigner_closed_form(WignerLabel::A, &config);
        let report = negativity_scan(&wa, &gx, &gk);
        assert!(report.min_value >= -1e-15);
    }

    #[test]
    fn masses_integrate_correctly() {
        let config = cfg(FRAC_PI_2, 1.0, 1.0);
        let spec = QuadratureSpec::default();
        for label in [WignerLabel::A, WignerLabel::Plus, WignerLabel::D1, WignerLabel::D2] {
            let w = wigner_closed_form(label, &config);
            let total = integrate(
                |x| {
                    integrate(|k| w.eval(x, k), Domain::WholeLine, &QuadratureSpec {
                        abs_tol: 1e-11,
                        ..spec
                    })
                    .unwrap()
                },
                Domain::WholeLine,
                &QuadratureSpec {
                    abs_tol: 1e-9,
                    ..spec
                },
            )
            .unwrap();
            assert_abs_diff_eq!(total, w.mass, epsilon = 1e-6);
        }
    }
}
