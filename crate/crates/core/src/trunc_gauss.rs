//! Truncated-Gaussian input law: density, truncated mean and variance,
//! raw/central moments via the standardized-moment recursion, scaling,
//! inverse-CDF sampling and quadrature expectations.

use libm::erfc;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::numeric::{binomial, CompensatedSum};
use crate::quadrature::Quadrature;

/// Highest moment order the recursion is trusted to.
pub const MAX_MOMENT_ORDER: usize = 64;

/// Smallest admissible probability mass of the parent Gaussian on `[a, b]`.
pub const MIN_MASS: f64 = 1e-12;

/// Half-width of the integration window in parent standard deviations.
/// Beyond it the Gaussian factor underflows.
const WINDOW_SIGMAS: f64 = 38.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Φ(β) - Φ(α)` evaluated on whichever side of the distribution keeps
/// full relative precision.
fn normal_mass(alpha: f64, beta: f64) -> f64 {
    if alpha >= 0.0 {
        std_normal_sf(alpha) - std_normal_sf(beta)
    } else if beta <= 0.0 {
        std_normal_cdf(beta) - std_normal_cdf(alpha)
    } else {
        1.0 - std_normal_cdf(alpha) - std_normal_sf(beta)
    }
}

/// Serialized form: `{"mu_bar", "sigma_bar", "a", "b"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu_bar: f64,
    pub sigma_bar: f64,
    pub a: f64,
    pub b: f64,
}

/// Gaussian `N(μ̄, σ̄²)` conditioned on `[a, b]`, with derived quantities
/// cached at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianParams", into = "GaussianParams")]
pub struct TruncatedGaussianSpec {
    mu_bar: f64,
    sigma_bar: f64,
    a: f64,
    b: f64,
    alpha: f64,
    beta: f64,
    z: f64,
    pdf_alpha: f64,
    pdf_beta: f64,
    mu: f64,
    sigma2: f64,
}

impl TryFrom<GaussianParams> for TruncatedGaussianSpec {
    type Error = Error;

    fn try_from(p: GaussianParams) -> Result<Self> {
        Self::new(p.mu_bar, p.sigma_bar, p.a, p.b)
    }
}

impl From<TruncatedGaussianSpec> for GaussianParams {
    fn from(s: TruncatedGaussianSpec) -> Self {
        s.params()
    }
}

impl TruncatedGaussianSpec {
    pub fn new(mu_bar: f64, sigma_bar: f64, a: f64, b: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        if ![mu_bar, sigma_bar, a, b].iter().all(|v| v.is_finite()) {
            return bad(format!(
                "parameters must be finite (mu_bar={mu_bar}, sigma_bar={sigma_bar}, a={a}, b={b})"
            ));
        }
        if sigma_bar <= 0.0 {
            return bad(format!("sigma_bar must be positive, got {sigma_bar}"));
        }
        if a < 0.0 || a >= b {
            return bad(format!(
                "truncation must satisfy 0 <= a < b, got [{a}, {b}]"
            ));
        }
        let alpha = (a - mu_bar) / sigma_bar;
        let beta = (b - mu_bar) / sigma_bar;
        let z = normal_mass(alpha, beta);
        if !(z > MIN_MASS) {
            return bad(format!("truncation mass {z:e} is below {MIN_MASS:e}"));
        }
        let pdf_alpha = std_normal_pdf(alpha);
        let pdf_beta = std_normal_pdf(beta);
        let ratio = (pdf_beta - pdf_alpha) / z;
        let mu = (mu_bar - ratio * sigma_bar).clamp(a, b);
        let sigma2 = sigma_bar
            * sigma_bar
            * (1.0
                - (tail_term(beta, pdf_beta, 1) - tail_term(alpha, pdf_alpha, 1)) / z
                - ratio * ratio);
        if !(sigma2 > 0.0) || sigma2 > sigma_bar * sigma_bar * (1.0 + 1e-12) {
            return bad(format!(
                "truncated variance {sigma2:e} is not in (0, sigma_bar^2]"
            ));
        }
        Ok(Self {
            mu_bar,
            sigma_bar,
            a,
            b,
            alpha,
            beta,
            z,
            pdf_alpha,
            pdf_beta,
            mu,
            sigma2,
        })
    }

    pub fn params(&self) -> GaussianParams {
        GaussianParams {
            mu_bar: self.mu_bar,
            sigma_bar: self.sigma_bar,
            a: self.a,
            b: self.b,
        }
    }

    pub fn mu_bar(&self) -> f64 {
        self.mu_bar
    }
    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    /// Parent probability mass on `[a, b]`.
    pub fn mass(&self) -> f64 {
        self.z
    }
    /// Truncated mean.
    pub fn mu(&self) -> f64 {
        self.mu
    }
    /// Truncated variance.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn truncated_mean_var(&self) -> (f64, f64) {
        (self.mu, self.sigma2)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.a || x > self.b {
            return 0.0;
        }
        self.density_unchecked(x)
    }

    fn density_unchecked(&self, x: f64) -> f64 {
        std_normal_pdf((x - self.mu_bar) / self.sigma_bar) / (self.sigma_bar * self.z)
    }

    /// Standardized moments `L_i = E[z^i]` of the standard normal truncated to
    /// `[α, β]`, by the forward recursion
    /// `L_i = -(β^{i-1}φ(β) - α^{i-1}φ(α))/Z + (i-1) L_{i-2}`.
    ///
    /// The recursion amplifies rounding by roughly `(i-1)!!`; it is accurate
    /// while the truncation window is wide in standard units.
    pub fn standardized_moments(&self, order: usize) -> Vec<f64> {
        let mut l = Vec::with_capacity(order + 1);
        l.push(1.0);
        if order >= 1 {
            l.push(-(self.pdf_beta - self.pdf_alpha) / self.z);
        }
        for i in 2..=order {
            let boundary = tail_term(self.beta, self.pdf_beta, i - 1)
                - tail_term(self.alpha, self.pdf_alpha, i - 1);
            l.push(-boundary / self.z + (i - 1) as f64 * l[i - 2]);
        }
        l
    }

    /// Raw moments `E[x^m] = Σ_i C(m,i) σ̄^i μ̄^{m-i} L_i` straight from the
    /// standardized recursion, with no cross-check.
    pub fn recursion_raw_moments(&self, order: usize) -> Vec<f64> {
        let l = self.standardized_moments(order);
        (0..=order)
            .map(|m| {
                let mut acc = CompensatedSum::new();
                for (i, li) in l.iter().enumerate().take(m + 1) {
                    acc.add(
                        binomial(m, i)
                            * self.sigma_bar.powi(i as i32)
                            * self.mu_bar.powi((m - i) as i32)
                            * li,
                    );
                }
                acc.value()
            })
            .collect()
    }

    /// Central moments `E[(x-μ)^k] = σ̄^k E[(z - L_1)^k]` from the
    /// standardized recursion.
    pub fn recursion_central_moments(&self, order: usize) -> Vec<f64> {
        let l = self.standardized_moments(order);
        let shift = -l.get(1).copied().unwrap_or(0.0);
        let mut central: Vec<f64> = (0..=order)
            .map(|k| {
                let mut acc = CompensatedSum::new();
                for (j, lj) in l.iter().enumerate().take(k + 1) {
                    acc.add(binomial(k, j) * lj * shift.powi((k - j) as i32));
                }
                self.sigma_bar.powi(k as i32) * acc.value()
            })
            .collect();
        if order >= 1 {
            central[1] = 0.0;
        }
        if order >= 2 {
            central[2] = self.sigma2;
        }
        central
    }

    /// Moment table up to `order` (at most [`MAX_MOMENT_ORDER`]).
    ///
    /// Values come from the recursion and are cross-checked order by order
    /// against quadrature. From the first order whose raw moment deviates by
    /// more than [`RECURSION_TOL`] onward, raw and central moments are taken
    /// from quadrature instead; the table records where that happened.
    pub fn raw_moments(&self, order: usize) -> Result<MomentTable> {
        self.raw_moments_with(order, &Quadrature::default())
    }

    pub fn raw_moments_with(&self, order: usize, quad: &Quadrature) -> Result<MomentTable> {
        if order > MAX_MOMENT_ORDER {
            return Err(Error::OrderTooHigh {
                requested: order,
                max: MAX_MOMENT_ORDER,
            });
        }
        let mut raw = self.recursion_raw_moments(order);
        let mut central = self.recursion_central_moments(order);
        let reference = self.quadrature_raw_moments(order, quad)?;
        let deviation: Vec<f64> = raw
            .iter()
            .zip(&reference)
            .map(|(r, q)| rel_dev(*r, *q))
            .collect();
        let max_rel_deviation = deviation.iter().copied().fold(0.0, f64::max);
        let unstable_from = deviation.iter().position(|d| !(*d <= RECURSION_TOL));
        if let Some(start) = unstable_from {
            raw[start..].copy_from_slice(&reference[start..]);
            for (k, c) in central.iter_mut().enumerate().skip(start.max(3)) {
                *c = self.expectation_with(quad, |x| (x - self.mu).powi(k as i32))?;
            }
        }
        Ok(MomentTable {
            order,
            raw,
            central,
            recursion_max_rel_deviation: max_rel_deviation,
            quadrature_from_order: unstable_from,
        })
    }

    /// `E[x^m]` for `m = 0..=order` by direct quadrature. Independent of the
    /// recursion; used to cross-check it.
    pub fn quadrature_raw_moments(&self, order: usize, quad: &Quadrature) -> Result<Vec<f64>> {
        (0..=order)
            .map(|m| self.expectation_with(quad, |x| x.powi(m as i32)))
            .collect()
    }

    /// Draws one value by inverting the CDF on the truncated mass. Works in
    /// the upper tail when `α > 0` so both ends keep full precision.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let z = if self.alpha > 0.0 {
            let hi = std_normal_sf(self.alpha);
            let lo = std_normal_sf(self.beta);
            inverse_sf(lo + u * (hi - lo))
        } else {
            let lo = std_normal_cdf(self.alpha);
            let hi = std_normal_cdf(self.beta);
            -inverse_sf(lo + u * (hi - lo))
        };
        let z = z.clamp(self.alpha, self.beta);
        (self.mu_bar + self.sigma_bar * z).clamp(self.a, self.b)
    }

    /// `q·x` for `x` from this law is again truncated Gaussian with every
    /// location and scale parameter multiplied by `q`.
    pub fn scale(&self, q: f64) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::DomainError(format!(
                "scale factor must be positive, got {q}"
            )));
        }
        if q == 1.0 {
            return Ok(*self);
        }
        Self::new(q * self.mu_bar, q * self.sigma_bar, q * self.a, q * self.b)
    }

    /// Interval outside which the density is numerically zero.
    pub fn support_window(&self) -> (f64, f64) {
        let lo = self.a.max(self.mu_bar - WINDOW_SIGMAS * self.sigma_bar);
        let hi = self.b.min(self.mu_bar + WINDOW_SIGMAS * self.sigma_bar);
        (lo, hi)
    }

    /// `∫ f(x) p(x) dx` with the default refinement policy.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.expectation_with(&Quadrature::default(), f)
    }

    pub fn expectation_with<F: Fn(f64) -> f64>(&self, quad: &Quadrature, f: F) -> Result<f64> {
        // integrate in standard units so the weight is resolved even when
        // σ̄ is far below the spacing of floats near μ̄
        let (lo, hi) = self.support_window();
        let zlo = (lo - self.mu_bar) / self.sigma_bar;
        let zhi = (hi - self.mu_bar) / self.sigma_bar;
        let v = quad.integrate(zlo, zhi, |t| {
            let x = (self.mu_bar + self.sigma_bar * t).clamp(lo, hi);
            f(x) * std_normal_pdf(t)
        })?;
        Ok(v / self.z)
    }
}

/// `z` with `1 - Φ(z) = p`: rational initial guess polished by two Newton
/// steps against the full-precision tail function.
pub fn inverse_sf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let mut z = std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let pdf = std_normal_pdf(z);
        if pdf == 0.0 {
            break;
        }
        z += (std_normal_sf(z) - p) / pdf;
    }
    z
}

fn tail_term(t: f64, pdf: f64, power: usize) -> f64 {
    if pdf == 0.0 {
        0.0
    } else {
        t.powi(power as i32) * pdf
    }
}

/// Relative tolerance for accepting a recursion moment against quadrature.
pub const RECURSION_TOL: f64 = 1e-8;

fn rel_dev(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value.abs()
    } else {
        ((value - reference) / reference).abs()
    }
}

/// Largest relative deviation of `values` from `reference`.
pub fn max_rel_deviation(values: &[f64], reference: &[f64]) -> f64 {
    values
        .iter()
        .zip(reference)
        .map(|(v, r)| rel_dev(*v, *r))
        .fold(0.0, f64::max)
}

/// Raw and central moments up to `order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub order: usize,
    /// `raw[m] = E[x^m]`.
    pub raw: Vec<f64>,
    /// `central[i] = E[(x - μ)^i]`.
    pub central: Vec<f64>,
    /// Worst relative disagreement between recursion and quadrature raw
    /// moments.
    pub recursion_max_rel_deviation: f64,
    /// First order served by quadrature because the recursion had drifted.
    pub quadrature_from_order: Option<usize>,
}
