//! Mutual information rate of the receptor channel, three ways: the
//! finite-step entropy difference, the exact continuous-time limit by
//! quadrature, and the logarithm-series approximation.
//!
//! All three share the decomposition `MIR = g · (E[x ln x] - μ ln μ)` in the
//! `Δt → 0` limit, where `g` is [`ReceptorSpec::sensitive_gain`].

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial, CompensatedSum};
use crate::quadrature::Quadrature;
use crate::receptor::ReceptorSpec;
use crate::trunc_gauss::{TruncatedGaussianSpec, MAX_MOMENT_ORDER};

/// Highest series order at which the raw-moment form is cross-checked.
pub const LITERAL_CHECK_ORDER: usize = 20;

/// Allowed disagreement between the raw-moment and central series forms.
pub const LITERAL_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MirMethod {
    Discrete { delta_t: f64 },
    Quadrature,
    Series { order: usize },
    MonteCarlo { n: usize, stderr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirResult {
    /// Bits per second.
    pub value: f64,
    pub method: MirMethod,
    /// `g`, already carrying the `1/ln 2` conversion.
    pub gain: f64,
    /// `E[x ln x] - μ ln μ` in nats, as used by this method.
    pub gap_nats: f64,
    /// Discrete method only: summed contribution of diagonal sensitive
    /// pairs, bits/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagonal_part: Option<f64>,
    /// Series method only: raw-moment form minus central form over the
    /// cross-checked orders, nats.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_form_discrepancy: Option<f64>,
}

/// `p log₂ p`, with `0 log 0 = 0`.
pub fn plogp(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::DomainError(format!(
            "probability {p} is outside [0, 1]"
        )));
    }
    Ok(plogp_bits(p))
}

fn plogp_bits(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * p.log2()
    }
}

/// `x ln x`, extended by continuity at 0.
pub fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Jensen gap `E[x ln x] - μ ln μ` in nats. The tangent line at `μ` has zero
/// mean and is subtracted inside the integral, which keeps the integrand
/// nonnegative and avoids cancellation for nearly degenerate inputs.
pub fn jensen_gap_quadrature(dist: &TruncatedGaussianSpec, quad: &Quadrature) -> Result<f64> {
    let mu = dist.mu();
    let f_mu = xlnx(mu);
    let slope = 1.0 + mu.ln();
    dist.expectation_with(quad, |x| xlnx(x) - f_mu - slope * (x - mu))
}

/// `I(X;Y)/Δt` at finite `Δt`: the sum over every `x`-dependent transition
/// entry (off-diagonal and diagonal) of `π_i (E[φ(p(x))] - φ(E[p(x)])) / Δt`
/// with `φ(p) = p log₂ p`.
pub fn mir_discrete(
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
    delta_t: f64,
) -> Result<MirResult> {
    mir_discrete_with(spec, dist, delta_t, &Quadrature::default())
}

pub fn mir_discrete_with(
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
    delta_t: f64,
    quad: &Quadrature,
) -> Result<MirResult> {
    if !(delta_t > 0.0) || !delta_t.is_finite() {
        return Err(Error::DomainError(format!(
            "delta_t must be positive, got {delta_t}"
        )));
    }
    // worst case for admissibility is the top of the support
    spec.rate_matrix(dist.b())?.transition_matrix(delta_t)?;
    let mu = dist.mu();
    let p_bar = spec.mean_rate_matrix(mu)?.transition_matrix(delta_t)?;
    let pi = p_bar.steady_state()?;

    let mut total = CompensatedSum::new();
    let mut diagonal = CompensatedSum::new();
    for pair in spec.sensitive_pairs(delta_t) {
        let mean_p = pair.at(mu);
        let (f_mean, slope) = if mean_p > 0.0 {
            (plogp_bits(mean_p), mean_p.log2() + 1.0 / LN_2)
        } else {
            (0.0, 0.0)
        };
        let gap = dist.expectation_with(quad, |x| {
            let p = pair.at(x).clamp(0.0, 1.0);
            plogp_bits(p) - f_mean - slope * (p - mean_p)
        })?;
        let term = pi.probabilities()[pair.from] * gap / delta_t;
        total.add(term);
        if pair.is_diagonal() {
            diagonal.add(term);
        }
    }
    Ok(MirResult {
        value: total.value(),
        method: MirMethod::Discrete { delta_t },
        gain: spec.sensitive_gain(&pi),
        gap_nats: jensen_gap_quadrature(dist, quad)?,
        diagonal_part: Some(diagonal.value()),
        series_form_discrepancy: None,
    })
}

/// Continuous-time MIR `g · (E[x ln x] - μ ln μ)` with the expectation by
/// quadrature.
pub fn mir_quadrature(spec: &ReceptorSpec, dist: &TruncatedGaussianSpec) -> Result<MirResult> {
    mir_quadrature_with(spec, dist, &Quadrature::default())
}

pub fn mir_quadrature_with(
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
    quad: &Quadrature,
) -> Result<MirResult> {
    let pi = spec.mean_steady_state(dist.mu())?;
    let gain = spec.sensitive_gain(&pi);
    let gap = jensen_gap_quadrature(dist, quad)?;
    Ok(MirResult {
        value: gain * gap,
        method: MirMethod::Quadrature,
        gain,
        gap_nats: gap,
        diagonal_part: None,
        series_form_discrepancy: None,
    })
}

/// Continuous-time MIR with `E[x ln x]` replaced by its logarithm series
/// truncated at order `order`:
/// `E[x ln x] ≈ E[x] - 1 + Σ_{k=2}^{K} (-1)^k E[(x-1)^k] / (k(k-1))`.
///
/// Requires support in `(0, 2]`. The central moments about 1 are the
/// production path; the raw-moment expansion
/// `Σ_m (-1)^m C(k,m) E[x^m]` is evaluated alongside for `k ≤ 20` (on
/// quadrature raw moments) and must agree to [`LITERAL_CHECK_TOL`].
pub fn mir_series(
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
    order: usize,
) -> Result<MirResult> {
    mir_series_with(spec, dist, order, &Quadrature::default())
}

pub fn mir_series_with(
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
    order: usize,
    quad: &Quadrature,
) -> Result<MirResult> {
    if !(dist.a() > 0.0) || dist.b() > 2.0 {
        return Err(Error::OutOfConvergenceRegion {
            a: dist.a(),
            b: dist.b(),
        });
    }
    if order < 2 {
        return Err(Error::DomainError(format!(
            "series order must be >= 2, got {order}"
        )));
    }
    if order > MAX_MOMENT_ORDER {
        return Err(Error::OrderTooHigh {
            requested: order,
            max: MAX_MOMENT_ORDER,
        });
    }
    let terms = series_terms(dist, order, quad)?;
    let mu = dist.mu();
    let mut acc = CompensatedSum::new();
    acc.extend(terms.iter().copied());
    acc.add(mu - 1.0);
    acc.add(-xlnx(mu));
    let gap = acc.value();

    let check_order = order.min(LITERAL_CHECK_ORDER);
    let raw = dist.quadrature_raw_moments(check_order, quad)?;
    let literal = literal_series_sum(&raw, check_order);
    let central: f64 = crate::numeric::compensated_sum(terms[..check_order - 1].iter().copied());
    let discrepancy = literal - central;
    if discrepancy.abs() > LITERAL_CHECK_TOL {
        return Err(Error::SeriesCrossCheck { discrepancy });
    }

    let pi = spec.mean_steady_state(mu)?;
    let gain = spec.sensitive_gain(&pi);
    Ok(MirResult {
        value: gain * gap,
        method: MirMethod::Series { order },
        gain,
        gap_nats: gap,
        diagonal_part: None,
        series_form_discrepancy: Some(discrepancy),
    })
}

/// `(-1)^k E[(x-1)^k] / (k(k-1))` for `k = 2..=order`.
fn series_terms(dist: &TruncatedGaussianSpec, order: usize, quad: &Quadrature) -> Result<Vec<f64>> {
    (2..=order)
        .map(|k| {
            let c = dist.expectation_with(quad, |x| (x - 1.0).powi(k as i32))?;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            Ok(sign * c / (k * (k - 1)) as f64)
        })
        .collect()
}

/// `Σ_{k=2}^{order} Σ_{m=0}^{k} (-1)^m C(k,m) E[x^m] / (k(k-1))` given raw
/// moments `raw[m] = E[x^m]`.
///
/// The alternating binomial sum amplifies relative error in the moments by
/// up to `3^k`, so it needs moments accurate to a few ulps.
pub fn literal_series_sum(raw: &[f64], order: usize) -> f64 {
    let mut outer = CompensatedSum::new();
    for k in 2..=order {
        let mut inner = CompensatedSum::new();
        for (m, raw) in raw.iter().enumerate().take(k + 1) {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            inner.add(sign * binomial(k, m) * raw);
        }
        outer.add(inner.value() / (k * (k - 1)) as f64);
    }
    outer.value()
}
