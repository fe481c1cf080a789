//! Gauss–Legendre quadrature with node-doubling refinement.
//!
//! Rules are computed by Newton iteration on the Legendre three-term
//! recurrence and cached per node count, so repeated integrations over a
//! sweep grid only pay for node generation once.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let theta = std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5);
            let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared cached rule for `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap().get(&n) {
            return Arc::clone(rule);
        }
        let rule = Arc::new(GaussLegendre::new(n));
        cache
            .lock()
            .unwrap()
            .entry(n)
            .or_insert_with(|| Arc::clone(&rule))
            .clone()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, lo: f64, hi: f64, f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = CompensatedSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        half * acc.value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Largest single Gauss–Legendre rule; finer levels tile the interval with
/// equal panels of this size.
pub const MAX_RULE_NODES: usize = 6400;

/// Integrate with `n` nodes in total: one global rule up to
/// [`MAX_RULE_NODES`], composite panels beyond that.
fn integrate_level<F: Fn(f64) -> f64>(n: usize, lo: f64, hi: f64, f: &F) -> f64 {
    if n <= MAX_RULE_NODES {
        return GaussLegendre::cached(n).integrate(lo, hi, f);
    }
    let panels = n.div_ceil(MAX_RULE_NODES);
    let rule = GaussLegendre::cached(MAX_RULE_NODES);
    let width = (hi - lo) / panels as f64;
    let mut acc = CompensatedSum::new();
    for j in 0..panels {
        let a = lo + width * j as f64;
        let b = if j + 1 == panels { hi } else { a + width };
        acc.add(rule.integrate(a, b, f));
    }
    acc.value()
}

/// Refinement policy: start at `initial_nodes`, double until two successive
/// estimates agree to `rel_tol` (or `abs_tol` near zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub initial_nodes: usize,
    pub max_doublings: u32,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            initial_nodes: 200,
            max_doublings: 12,
            rel_tol: 1e-12,
            abs_tol: 1e-14,
        }
    }
}

impl Quadrature {
    pub fn with_initial_nodes(initial_nodes: usize) -> Self {
        Self {
            initial_nodes: initial_nodes.max(1),
            ..Self::default()
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, lo: f64, hi: f64, f: F) -> Result<f64> {
        if lo == hi {
            return Ok(0.0);
        }
        let mut n = self.initial_nodes;
        let mut prev = integrate_level(n, lo, hi, &f);
        let mut change = f64::INFINITY;
        for _ in 0..self.max_doublings {
            n *= 2;
            let next = integrate_level(n, lo, hi, &f);
            change = (next - prev).abs();
            if change < self.rel_tol * next.abs() || change < self.abs_tol {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::NoConvergence {
            doublings: self.max_doublings,
            last_change: change,
        })
    }
}
