//! Mutual information rate (MIR) of intensity-driven signal-transduction
//! channels.
//!
//! A receptor is a finite-state Markov chain whose sensitive transitions fire
//! at a rate proportional to an input intensity `x`. With IID
//! truncated-Gaussian inputs the receptor output forms a time-homogeneous
//! chain, and the continuous-time MIR reduces to a gain factor times the
//! Jensen gap of `x ln x`. This crate computes that quantity several ways:
//!
//! * [`mir::mir_discrete`]: the finite-step entropy difference,
//! * [`mir::mir_quadrature`]: the exact `Δt → 0` limit by Gauss–Legendre quadrature,
//! * [`mir::mir_series`]: the logarithm-series approximation,
//! * [`bounds::mir_bounds`]: closed-form lower/upper Jensen-gap bounds,
//! * [`mc`]: sample-path Monte Carlo estimators,
//!
//! and [`sweep`] runs any subset of them over `(μ̄, σ̄)` grids.

pub mod bounds;
pub mod error;
pub mod mc;
pub mod mir;
pub mod numeric;
pub mod quadrature;
pub mod receptor;
pub mod sweep;
pub mod trunc_gauss;

pub use error::{Error, Result};

pub use bounds::{h_s, jensen_gap_bounds, mir_bounds, BoundPair};
pub use mc::{estimate_mir, mc_gap, simulate, McEstimate, Trajectory};
pub use mir::{mir_discrete, mir_quadrature, mir_series, plogp, MirMethod, MirResult};
pub use quadrature::Quadrature;
pub use receptor::{RateMatrix, ReceptorSpec, SteadyState, Transition, TransitionMatrix};
pub use sweep::{
    find_capacity, run_sweep, Grid, Method, OutputFormat, RowField, SweepConfig, SweepRow,
};
pub use trunc_gauss::{MomentTable, TruncatedGaussianSpec};
