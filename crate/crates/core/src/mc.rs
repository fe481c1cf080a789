//! Sample-path Monte Carlo for the receptor channel.
//!
//! [`simulate`] draws an IID input sequence and the receptor response to it;
//! [`estimate_mir`] turns that path into a plug-in MIR estimate from the
//! known per-step kernels; [`mc_gap`] estimates the Jensen gap directly.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mir::xlnx;
use crate::numeric::{batch_means, CompensatedSum};
use crate::receptor::ReceptorSpec;
use crate::trunc_gauss::TruncatedGaussianSpec;

/// Number of contiguous batches behind every batch-means standard error.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub delta_t: f64,
    pub seed: u64,
    /// Number of receptor states.
    pub dim: usize,
    /// `y₀`, drawn from the stationary law of the mean chain.
    pub initial_state: usize,
    /// `y₁..yₙ`.
    pub states: Vec<usize>,
    /// `x₁..xₙ`; `xᵢ` drives the step from `yᵢ₋₁` to `yᵢ`.
    pub inputs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `(yᵢ₋₁, yᵢ, xᵢ)` for every step.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        std::iter::once(self.initial_state)
            .chain(self.states.iter().copied())
            .zip(&self.states)
            .zip(&self.inputs)
            .map(|((from, &to), &x)| (from, to, x))
    }

    /// Fraction of `y₁..yₙ` spent in each state.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.dim];
        for &y in &self.states {
            counts[y] += 1;
        }
        let n = self.states.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// `counts[i][j]` = number of steps from `i` to `j`.
    pub fn bigram_counts(&self) -> Vec<Vec<u64>> {
        let mut counts = vec![vec![0u64; self.dim]; self.dim];
        for (from, to, _) in self.steps() {
            counts[from][to] += 1;
        }
        counts
    }

    /// Row-normalized bigram counts; rows never visited stay zero.
    pub fn empirical_transition_matrix(&self) -> Vec<Vec<f64>> {
        self.bigram_counts()
            .into_iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.into_iter()
                    .map(|c| {
                        if total == 0 {
                            0.0
                        } else {
                            c as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Tab-separated dump: a `step\tx\ty` header, then one line per step.
    /// Step 0 carries the initial state and an empty input.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step\tx\ty")?;
        writeln!(out, "0\t\t{}", self.initial_state)?;
        for (i, (y, x)) in self.states.iter().zip(&self.inputs).enumerate() {
            writeln!(out, "{}\t{}\t{}", i + 1, x, y)?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// `P(x) = base + x·slope`, both row-major.
struct Kernel {
    dim: usize,
    base: Vec<f64>,
    slope: Vec<f64>,
}

impl Kernel {
    fn new(spec: &ReceptorSpec, delta_t: f64) -> Result<Self> {
        let base = spec.rate_matrix(0.0)?.transition_matrix(delta_t)?;
        let dim = base.dim();
        let mut slope = vec![0.0; dim * dim];
        for pair in spec.sensitive_pairs(delta_t) {
            slope[pair.from * dim + pair.to] = pair.slope;
        }
        let base = (0..dim).flat_map(|i| base.row(i).to_vec()).collect();
        Ok(Self { dim, base, slope })
    }

    fn entry(&self, from: usize, to: usize, x: f64) -> f64 {
        let k = from * self.dim + to;
        (self.base[k] + self.slope[k] * x).max(0.0)
    }

    fn draw<R: Rng + ?Sized>(&self, from: usize, x: f64, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut last_positive = from;
        for to in 0..self.dim {
            let p = self.entry(from, to, x);
            if p > 0.0 {
                last_positive = to;
                cumulative += p;
                if u < cumulative {
                    return to;
                }
            }
        }
        // rounding left u above the final cumulative sum
        last_positive
    }
}

fn draw_from<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
    }
    last_positive
}

/// Simulates `n` steps of the receptor under IID inputs from `dist`.
///
/// The initial state is drawn from the stationary law of the mean chain, so
/// the path is stationary from the first step. Deterministic given `seed`.
pub fn simulate(
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
    delta_t: f64,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::DomainError(
            "trajectory length must be at least 1".into(),
        ));
    }
    spec.rate_matrix(dist.b())?.transition_matrix(delta_t)?;
    let kernel = Kernel::new(spec, delta_t)?;
    let pi = spec.mean_steady_state(dist.mu())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial_state = draw_from(pi.probabilities(), &mut rng);
    let mut states = Vec::with_capacity(n);
    let mut inputs = Vec::with_capacity(n);
    let mut y = initial_state;
    for _ in 0..n {
        let x = dist.sample(&mut rng);
        y = kernel.draw(y, x, &mut rng);
        inputs.push(x);
        states.push(y);
    }
    Ok(Trajectory {
        delta_t,
        seed,
        dim: kernel.dim,
        initial_state,
        states,
        inputs,
    })
}

/// Plug-in MIR estimate in bits/s from a simulated path.
///
/// Per step the estimator contributes `log₂ P(xᵢ)[yᵢ₋₁, yᵢ] - log₂ P̄[yᵢ₋₁, yᵢ]`
/// with `P̄ = P(μ)`; its mean is `H(Y|Y₋) - H(Y|X, Y₋)`. The standard error
/// uses [`BATCHES`] batch means, since successive terms are Markov-dependent.
pub fn estimate_mir(
    traj: &Trajectory,
    spec: &ReceptorSpec,
    dist: &TruncatedGaussianSpec,
) -> Result<McEstimate> {
    if traj.len() < BATCHES {
        return Err(Error::InsufficientData(format!(
            "need at least {BATCHES} steps, trajectory has {}",
            traj.len()
        )));
    }
    let kernel = Kernel::new(spec, traj.delta_t)?;
    if kernel.dim != traj.dim {
        return Err(Error::InsufficientData(format!(
            "trajectory has {} states, receptor has {}",
            traj.dim, kernel.dim
        )));
    }
    let mu = dist.mu();
    let mut terms = Vec::with_capacity(traj.len());
    for (from, to, x) in traj.steps() {
        let mean = kernel.entry(from, to, mu);
        if mean <= 0.0 {
            return Err(Error::InsufficientData(format!(
                "observed transition {from} -> {to} has zero probability under the mean chain"
            )));
        }
        let actual = kernel.entry(from, to, x);
        terms.push(actual.log2() - mean.log2());
    }
    let (mean, stderr) = batch_means(&terms, BATCHES).expect("length checked above");
    Ok(McEstimate {
        value: mean / traj.delta_t,
        stderr: stderr / traj.delta_t,
        n: traj.len(),
    })
}

/// Direct Monte Carlo estimate of `E[x ln x] - μ ln μ` in nats, with the
/// analytic truncated mean `μ`.
pub fn mc_gap(dist: &TruncatedGaussianSpec, n: usize, seed: u64) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::DomainError("sample count must be at least 1".into()));
    }
    let mu = dist.mu();
    let f_mu = xlnx(mu);
    let slope = 1.0 + mu.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // x ln x - f(μ) is accumulated as its tangent-free remainder plus the
    // linear part, which is the same sum with far less cancellation.
    let mut curved = CompensatedSum::new();
    let mut linear = CompensatedSum::new();
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let x = dist.sample(&mut rng);
        let v = xlnx(x) - f_mu - slope * (x - mu);
        curved.add(v);
        linear.add(x - mu);
        values.push(v + slope * (x - mu));
    }
    let nf = n as f64;
    let value = curved.value() / nf + slope * (linear.value() / nf);
    let stderr = if n > 1 {
        let mean = values.iter().sum::<f64>() / nf;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { value, stderr, n })
}
