//! Shared numerical substrate: grids, quadrature, root finding, inverse-CDF
//! sampling and reproducible RNG streams.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// A uniform one-dimensional grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid1D {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid1D {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must be finite with min < max, got [{min}, {max}]"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 points, got {points}"
            )));
        }
        Ok(Self { min, max, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + self.spacing() * i as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.point(i))
    }
}

/// Integration domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval(f64, f64),
    WholeLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureMethod {
    AdaptiveSimpson,
    GaussHermite,
}

/// How to integrate: method, absolute tolerance, and a work budget
/// (recursion depth for adaptive Simpson, node count for Gauss-Hermite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    pub abs_tol: f64,
    /// Max recursion depth for adaptive Simpson; node count for Gauss-Hermite.
    pub budget: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: QuadratureMethod::AdaptiveSimpson,
            abs_tol: 1e-10,
            budget: 48,
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_hermite(nodes: usize) -> Self {
        Self {
            method: QuadratureMethod::GaussHermite,
            abs_tol: 1e-10,
            budget: nodes,
        }
    }
}

/// Integrate `f` over `domain`.
///
/// Whole-line integrals with the adaptive Simpson method use the rational
/// substitution x = t/(1-t^2) mapping (-1,1) onto the real line; the
/// integrand is assumed to decay at least Gaussian-fast. Gauss-Hermite is
/// only available for whole-line integrands and integrates f itself (the
/// e^{x^2} reweighting is folded into the modified weights).
pub fn integrate(f: impl Fn(f64) -> f64, domain: Domain, spec: &QuadratureSpec) -> Result<f64> {
    match (spec.method, domain) {
        (QuadratureMethod::GaussHermite, Domain::WholeLine) => {
            let rule = hermite_rule(spec.budget.max(2));
            Ok(rule.iter().map(|&(x, w)| w * f(x)).sum())
        }
        (QuadratureMethod::GaussHermite, Domain::Interval(..)) => Err(Error::InvalidParameter(
            "Gauss-Hermite quadrature is whole-line only".into(),
        )),
        (QuadratureMethod::AdaptiveSimpson, Domain::Interval(a, b)) => {
            adaptive_simpson(&f, a, b, spec.abs_tol, spec.budget)
        }
        (QuadratureMethod::AdaptiveSimpson, Domain::WholeLine) => {
            let g = |t: f64| {
                let u = 1.0 - t * t;
                if u <= 0.0 {
                    return 0.0;
                }
                let x = t / u;
                let jac = (1.0 + t * t) / (u * u);
                let v = f(x) * jac;
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            };
            adaptive_simpson(&g, -1.0, 1.0, spec.abs_tol, spec.budget)
        }
    }
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
        failed: &mut bool,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 * (1.0 + m.abs()) {
            return left + right + delta / 15.0;
        }
        if depth == 0 {
            *failed = true;
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, failed)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, failed)
    }

    // Seed with a few panels so narrow features between the Simpson sample
    // points are not missed by an accidentally-exact coarse estimate.
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    let mut failed = false;
    for i in 0..panels {
        let pa = a + i as f64 * h;
        let pb = pa + h;
        let pm = 0.5 * (pa + pb);
        let (fa, fm, fb) = (f(pa), f(pm), f(pb));
        let whole = simpson(fa, fm, fb, h);
        total += recurse(
            f,
            pa,
            pb,
            fa,
            fm,
            fb,
            whole,
            tol / panels as f64,
            max_depth,
            &mut failed,
        );
    }
    if failed {
        return Err(Error::QuadratureFailure {
            partial: total,
            subdivisions: max_depth,
        });
    }
    Ok(total)
}

/// Integrate a complex-valued function (real and imaginary parts separately).
pub fn integrate_complex(
    f: impl Fn(f64) -> num_complex::Complex64,
    domain: Domain,
    spec: &QuadratureSpec,
) -> Result<num_complex::Complex64> {
    let re = integrate(|x| f(x).re, domain, spec)?;
    let im = integrate(|x| f(x).im, domain, spec)?;
    Ok(num_complex::Complex64::new(re, im))
}

/// Gauss-Hermite nodes with modified weights w_i * e^{x_i^2}, so that
/// integral of f over the line ~ sum w~_i f(x_i) for Gaussian-decaying f.
///
/// Nodes are Newton-refined from the classic asymptotic initial guesses;
/// weights come from the orthonormal-polynomial Christoffel formula.
fn hermite_rule(n: usize) -> Vec<(f64, f64)> {
    use std::f64::consts::PI;
    // Orthonormal (w.r.t. e^{-x^2}) Hermite value and derivative at x.
    let eval = |x: f64| -> (f64, f64, f64) {
        let mut p0 = PI.powf(-0.25); // h_0
        let mut p1 = std::f64::consts::SQRT_2 * x * p0; // h_1
        let mut sumsq = p0 * p0;
        for k in 1..n {
            sumsq += p1 * p1;
            let p2 = x * (2.0 / (k as f64 + 1.0)).sqrt() * p1
                - (k as f64 / (k as f64 + 1.0)).sqrt() * p0;
            p0 = p1;
            p1 = p2;
        }
        // p1 = h_n, p0 = h_{n-1}; h_n' = sqrt(2n) h_{n-1}
        let deriv = (2.0 * n as f64).sqrt() * p0;
        (p1, deriv, sumsq)
    };

    let mut half = Vec::with_capacity(n / 2 + 1);
    let mut z = 0.0_f64;
    let mut z_prev = 0.0_f64;
    let m = (n + 1) / 2;
    for i in 0..m {
        // Initial guesses, largest root first (Numerical Recipes style).
        z = match i {
            0 => {
                let an = (2 * n + 1) as f64;
                an.sqrt() - 1.85575 * an.powf(-1.0 / 6.0)
            }
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * z_prev,
            3 => 1.91 * z - 0.91 * z_prev,
            _ => 2.0 * z - z_prev,
        };
        for _ in 0..100 {
            let (p, dp, _) = eval(z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        let (_, _, sumsq) = eval(z);
        // Christoffel weight 1/sum h_k(z)^2; modified by e^{z^2}.
        let wmod = (z * z).exp() / sumsq;
        half.push((z, wmod));
        if half.len() >= 2 {
            z_prev = half[half.len() - 2].0;
        }
    }
    let mut rule = Vec::with_capacity(n);
    for &(x, w) in &half {
        rule.push((x, w));
        if x > 1e-12 {
            rule.push((-x, w));
        }
    }
    rule
}

/// Bisection root finding on a bracketing interval.
///
/// Requires f(lo) and f(hi) to have opposite signs (or one of them to be
/// zero); shrinks the bracket below `tol` width.
pub fn find_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "bracket must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break; // bracket at floating-point resolution
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// A reproducible, splittable random stream.
///
/// Same (seed, stream_id) yields the same sequence on every platform; the
/// underlying generator is ChaCha12, whose cross-platform determinism is a
/// documented guarantee of the `rand_chacha` crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

/// Name of the RNG algorithm, recorded in output metadata.
pub const RNG_ALGORITHM: &str = "chacha12";

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A sibling stream with the same seed and a different stream id.
    pub fn derive(&self, stream_id: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id,
        }
    }
}

/// Tabulated CDF of a (possibly unnormalized) density on a grid, supporting
/// inverse-CDF sampling and CDF evaluation.
///
/// The density is integrated cell-by-cell with Simpson's rule; sampling
/// inverts the piecewise-linear interpolant of the cumulative table.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    xs: Vec<f64>,
    cum: Vec<f64>, // normalized to end at 1
    mass_on_grid: f64,
}

impl TabulatedCdf {
    /// Build from a density function. `declared_mass` is the mass the density
    /// is supposed to carry in total; if the grid captures less than
    /// 1 - 1e-6 of it, a domain-coverage error is raised.
    pub fn new(f: impl Fn(f64) -> f64, grid: &Grid1D, declared_mass: f64) -> Result<Self> {
        if !(declared_mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "declared mass must be positive, got {declared_mass}"
            )));
        }
        let n = grid.points;
        let h = grid.spacing();
        let mut xs = Vec::with_capacity(n);
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let x = grid.point(i);
            let v = f(x);
            if v < -1e-12 * declared_mass {
                return Err(Error::InvalidParameter(format!(
                    "density is negative at x = {x}: {v}"
                )));
            }
            xs.push(x);
            vals.push(v.max(0.0));
        }
        let mut cum = Vec::with_capacity(n);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 1..n {
            // Simpson over the cell using the midpoint evaluation.
            let mid = f(0.5 * (xs[i - 1] + xs[i])).max(0.0);
            acc += h / 6.0 * (vals[i - 1] + 4.0 * mid + vals[i]);
            cum.push(acc);
        }
        let mass_on_grid = acc;
        if mass_on_grid < declared_mass * (1.0 - 1e-6) {
            return Err(Error::DomainCoverage {
                covered: mass_on_grid,
                declared: declared_mass,
            });
        }
        for c in &mut cum {
            *c /= mass_on_grid;
        }
        Ok(Self {
            xs,
            cum,
            mass_on_grid,
        })
    }

    pub fn mass_on_grid(&self) -> f64 {
        self.mass_on_grid
    }

    /// Normalized CDF value at x (0 below the grid, 1 above).
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let i = self.xs.partition_point(|&p| p <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.cum[i] + t * (self.cum[i + 1] - self.cum[i])
    }

    /// Draw one sample by inverting the tabulated CDF.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        let i = match self.cum.partition_point(|&c| c <= u) {
            0 => 0,
            j if j >= self.cum.len() => self.cum.len() - 2,
            j => j - 1,
        };
        let (c0, c1) = (self.cum[i], self.cum[i + 1]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[i] + t * (self.xs[i + 1] - self.xs[i])
    }
}

/// Convenience wrapper: one inverse-CDF sample of `density` on `grid`.
pub fn sample_inverse_cdf(
    density: impl Fn(f64) -> f64,
    grid: &Grid1D,
    declared_mass: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    Ok(TabulatedCdf::new(density, grid, declared_mass)?.sample(rng))
}
