//! Closed-form bounds on the Jensen gap of `f(x) = x ln x`.
//!
//! Expanding `f` around `μ` to order `s - 1` leaves the remainder
//! `h_s(x; μ) (x - μ)^s`. When `h_s` is decreasing in `x`, its values at the
//! truncation endpoints bound the remainder, so
//!
//! ```text
//! Σ_{i<s} f^(i)(μ) μ_i / i! + h_s(b; μ) μ_s  ≤  E[f(x)] - f(μ)  ≤  Σ_{i<s} f^(i)(μ) μ_i / i! + h_s(a; μ) μ_s
//! ```
//!
//! with `μ_i` the central moments. For `s = 2` the sum is empty (`μ_1 = 0`);
//! for `s = 4` it is `σ²/(2μ) - μ₃/(6μ²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mir::xlnx;
use crate::quadrature::Quadrature;
use crate::receptor::ReceptorSpec;
use crate::trunc_gauss::TruncatedGaussianSpec;

/// Separation `|x - μ|` below which [`h_s`] reports a degenerate argument.
pub const DEGENERATE_SEPARATION: f64 = 1e-10;

/// Relative distance `|x - μ|/μ` under which `h_s` switches to its Taylor
/// series.
const SERIES_RADIUS: f64 = 0.25;
const SERIES_TERMS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    /// Bits per second.
    pub lower: f64,
    /// Bits per second.
    pub upper: f64,
    pub s: u32,
    /// `(lower, upper)` on the Jensen gap in nats, before the gain factor.
    pub gap_bounds_nats: (f64, f64),
}

impl BoundPair {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64, slack: f64) -> bool {
        self.lower - slack <= value && value <= self.upper + slack
    }
}

fn check_order(s: u32) -> Result<()> {
    match s {
        2 | 4 => Ok(()),
        _ => Err(Error::DomainError(format!(
            "bound order s must be 2 or 4, got {s}"
        ))),
    }
}

/// `i`-th derivative of `x ln x` at `x > 0`, for `1 ≤ i ≤ 4`.
fn f_derivative(i: u32, x: f64) -> f64 {
    match i {
        1 => x.ln() + 1.0,
        2 => 1.0 / x,
        3 => -1.0 / (x * x),
        4 => 2.0 / (x * x * x),
        _ => unreachable!("only derivatives up to order 4 are needed"),
    }
}

/// Normalized Taylor remainder of `x ln x` about `mu`:
///
/// `h_s(x; μ) = (f(x) - f(μ))/(x - μ)^s - Σ_{i=1}^{s-1} f^(i)(μ) / (i! (x - μ)^{s-i})`.
///
/// Close to `μ` the explicit form cancels catastrophically, so it is replaced
/// by the series `μ^{1-s} Σ_{i≥s} (-1)^i t^{i-s} / (i(i-1))`, `t = (x-μ)/μ`.
pub fn h_s(x: f64, mu: f64, s: u32) -> Result<f64> {
    check_order(s)?;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::DomainError(format!(
            "expansion point must be positive, got {mu}"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::DomainError(format!("h_s needs x >= 0, got {x}")));
    }
    let d = x - mu;
    if d.abs() < DEGENERATE_SEPARATION {
        return Err(Error::DegenerateArgument(d));
    }
    let t = d / mu;
    if t.abs() < SERIES_RADIUS {
        let mut acc = 0.0;
        // summed from the smallest term up
        for i in (s as usize..s as usize + SERIES_TERMS).rev() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc = acc * t + sign / (i * (i - 1)) as f64;
        }
        return Ok(acc * mu.powi(1 - s as i32));
    }
    let mut value = (xlnx(x) - xlnx(mu)) / d.powi(s as i32);
    let mut factorial = 1.0;
    for i in 1..s {
        factorial *= i as f64;
        value -= f_derivative(i, mu) / (factorial * d.powi((s - i) as i32));
    }
    Ok(value)
}

/// `(lower, upper)` bounds on `E[x ln x] - μ ln μ` in nats.
pub fn jensen_gap_bounds(dist: &TruncatedGaussianSpec, s: u32) -> Result<(f64, f64)> {
    jensen_gap_bounds_with(dist, s, &Quadrature::default())
}

pub fn jensen_gap_bounds_with(
    dist: &TruncatedGaussianSpec,
    s: u32,
    quad: &Quadrature,
) -> Result<(f64, f64)> {
    check_order(s)?;
    let mu = dist.mu();
    let at_b = h_s(dist.b(), mu, s)?;
    let at_a = h_s(dist.a(), mu, s)?;
    match s {
        2 => {
            let sigma2 = dist.sigma2();
            Ok((at_b * sigma2, at_a * sigma2))
        }
        _ => {
            let table = dist.raw_moments_with(4, quad)?;
            let (mu3, mu4) = (table.central[3], table.central[4]);
            let base = dist.sigma2() * f_derivative(2, mu) / 2.0 + mu3 * f_derivative(3, mu) / 6.0;
            Ok((base + at_b * mu4, base + at_a * mu4))
        }
    }
}

/// MIR bounds in bits/s: the gap bounds scaled by the receptor gain.
pub fn mir_bounds(spec: &ReceptorSpec, dist: &TruncatedGaussianSpec, s: u32) -> Result<BoundPair> {
    mir_bounds_with(spec, dist, s, &Quadrature::default())
}

pub fn mir_bounds_with(
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
    s: u32,
    quad: &Quadrature,
) -> Result<BoundPair> {
    let (lo, hi) = jensen_gap_bounds_with(dist, s, quad)?;
    let pi = spec.mean_steady_state(dist.mu())?;
    let gain = spec.sensitive_gain(&pi);
    Ok(BoundPair {
        lower: gain * lo,
        upper: gain * hi,
        s,
        gap_bounds_nats: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mir::mir_quadrature;

    fn reference() -> TruncatedGaussianSpec {
        TruncatedGaussianSpec::new(1.0, 0.5, 1e-5, 2.0).unwrap()
    }

    #[test]
    fn h2_limit_is_half_curvature() {
        for mu in [0.3, 1.0, 1.7] {
            let near = h_s(mu + 1e-4, mu, 2).unwrap();
            let limit = 1.0 / (2.0 * mu);
            assert!(
                ((near - limit) / limit).abs() < 1e-3,
                "mu={mu}: {near} vs {limit}"
            );
        }
    }

    #[test]
    fn series_and_direct_forms_meet() {
        for s in [2, 4] {
            for mu in [0.4, 1.0, 1.6] {
                let x = mu * (1.0 + SERIES_RADIUS);
                let series = h_s(x * (1.0 - 1e-12), mu, s).unwrap();
                let direct = h_s(x * (1.0 + 1e-12), mu, s).unwrap();
                assert!(
                    ((series - direct) / direct).abs() < 1e-8,
                    "s={s} mu={mu}: {series} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn h_s_rejects_bad_arguments() {
        assert!(matches!(
            h_s(1.0, 1.0, 2),
            Err(Error::DegenerateArgument(_))
        ));
        assert!(matches!(h_s(0.5, 1.0, 3), Err(Error::DomainError(_))));
        assert!(matches!(h_s(0.5, 0.0, 2), Err(Error::DomainError(_))));
        assert!(h_s(0.0, 1.0, 2).is_ok());
        assert!(h_s(0.0, 1.0, 4).is_ok());
    }

    #[test]
    fn h2_at_zero_uses_continuous_extension() {
        // f(0) = 0: h2(0; μ) = (0 - μ ln μ)/μ² + (ln μ + 1)/μ = 1/μ
        for mu in [0.5, 1.0, 1.5] {
            assert!((h_s(0.0, mu, 2).unwrap() - 1.0 / mu).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_sandwich() {
        let d = reference();
        let gap = mir_quadrature(&ReceptorSpec::chr2(1.0, 1.0, 1.0).unwrap(), &d)
            .unwrap()
            .gap_nats;
        for s in [2, 4] {
            let (lo, hi) = jensen_gap_bounds(&d, s).unwrap();
            assert!(lo <= gap && gap <= hi, "s={s}: {lo} <= {gap} <= {hi}");
        }
    }

    #[test]
    fn degenerate_input_collapses_bounds() {
        let d = TruncatedGaussianSpec::new(1.0, 1e-9, 1e-5, 2.0).unwrap();
        for s in [2, 4] {
            let (lo, hi) = jensen_gap_bounds(&d, s).unwrap();
            assert!(lo.abs() < 1e-15 && hi.abs() < 1e-15, "s={s}: {lo}, {hi}");
        }
    }

    #[test]
    fn fourth_order_is_tighter_on_reference_panel() {
        for mu_bar in [0.4, 0.8, 1.2, 1.6] {
            let d = TruncatedGaussianSpec::new(mu_bar, 0.5, 1e-5, 2.0).unwrap();
            let (l2, u2) = jensen_gap_bounds(&d, 2).unwrap();
            let (l4, u4) = jensen_gap_bounds(&d, 4).unwrap();
            assert!(
                u4 - l4 <= u2 - l2,
                "mu_bar={mu_bar}: {} vs {}",
                u4 - l4,
                u2 - l2
            );
        }
    }

    #[test]
    fn bounds_scale_with_gain() {
        let d = reference();
        let slow = mir_bounds(&ReceptorSpec::chr2(1.0, 1.0, 1.0).unwrap(), &d, 2).unwrap();
        let fast = mir_bounds(&ReceptorSpec::chr2(2.0, 2.0, 2.0).unwrap(), &d, 2).unwrap();
        assert!((fast.lower - 2.0 * slow.lower).abs() < 1e-13);
        assert!((fast.upper - 2.0 * slow.upper).abs() < 1e-13);
        assert_eq!(fast.gap_bounds_nats, slow.gap_bounds_nats);
    }
}
