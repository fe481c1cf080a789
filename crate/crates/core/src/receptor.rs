//! Receptor Markov model: intensity-dependent generator `Q(x)`, first-order
//! transition matrix `P = I + QΔt`, and the stationary law of the mean chain.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// One listed off-diagonal transition. Sensitive transitions fire at
/// `rate · x`; insensitive ones at `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    pub sensitive: bool,
}

/// Validated receptor description. Diagonal rates are always derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReceptorConfig", into = "ReceptorConfig")]
pub struct ReceptorSpec {
    name: String,
    states: Vec<String>,
    transitions: Vec<Transition>,
}

/// On-disk form; transitions refer to states by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceptorConfig {
    pub name: String,
    pub states: Vec<String>,
    pub transitions: Vec<TransitionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionConfig {
    pub from: String,
    pub to: String,
    pub rate: f64,
    pub sensitive: bool,
}

impl TryFrom<ReceptorConfig> for ReceptorSpec {
    type Error = Error;

    fn try_from(cfg: ReceptorConfig) -> Result<Self> {
        let index: HashMap<&str, usize> = cfg
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let lookup = |label: &str, k: usize| {
            index.get(label).copied().ok_or_else(|| {
                Error::InvalidReceptor(format!("transition {k} refers to unknown state `{label}`"))
            })
        };
        let transitions = cfg
            .transitions
            .iter()
            .enumerate()
            .map(|(k, t)| {
                Ok(Transition {
                    from: lookup(&t.from, k)?,
                    to: lookup(&t.to, k)?,
                    rate: t.rate,
                    sensitive: t.sensitive,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ReceptorSpec::new(cfg.name, cfg.states, transitions)
    }
}

impl From<ReceptorSpec> for ReceptorConfig {
    fn from(spec: ReceptorSpec) -> Self {
        let transitions = spec
            .transitions
            .iter()
            .map(|t| TransitionConfig {
                from: spec.states[t.from].clone(),
                to: spec.states[t.to].clone(),
                rate: t.rate,
                sensitive: t.sensitive,
            })
            .collect();
        ReceptorConfig {
            name: spec.name,
            states: spec.states,
            transitions,
        }
    }
}

impl ReceptorSpec {
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        transitions: Vec<Transition>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidReceptor(m));
        let k = states.len();
        if k == 0 {
            return bad("at least one state is required".into());
        }
        let mut labels = HashSet::new();
        for s in &states {
            if !labels.insert(s.as_str()) {
                return bad(format!("duplicate state label `{s}`"));
            }
        }
        let mut pairs = HashSet::new();
        for (i, t) in transitions.iter().enumerate() {
            if t.from >= k || t.to >= k {
                return bad(format!(
                    "transition {i}: state index out of range for {k} states"
                ));
            }
            if t.from == t.to {
                return bad(format!(
                    "transition {i}: self-transition `{}` (diagonals are derived)",
                    states[t.from]
                ));
            }
            if !(t.rate > 0.0) || !t.rate.is_finite() {
                return bad(format!(
                    "transition {i}: rate must be positive and finite, got {}",
                    t.rate
                ));
            }
            if !pairs.insert((t.from, t.to)) {
                return bad(format!(
                    "transition {i}: duplicate pair {} -> {}",
                    states[t.from], states[t.to]
                ));
            }
        }
        if !transitions.iter().any(|t| t.sensitive) {
            return bad("at least one transition must be sensitive".into());
        }
        Ok(Self {
            name: name.into(),
            states,
            transitions,
        })
    }

    /// Three-state ChR2 ring `C1 -> O2 -> C3 -> C1` with only `C1 -> O2`
    /// sensitive to the input.
    pub fn chr2(q12: f64, q23: f64, q31: f64) -> Result<Self> {
        Self::new(
            "ChR2",
            vec!["C1".into(), "O2".into(), "C3".into()],
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    rate: q12,
                    sensitive: true,
                },
                Transition {
                    from: 1,
                    to: 2,
                    rate: q23,
                    sensitive: false,
                },
                Transition {
                    from: 2,
                    to: 0,
                    rate: q31,
                    sensitive: false,
                },
            ],
        )
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: "receptor".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json_str(&text).map_err(|e| Error::Config {
            field: "receptor".into(),
            message: format!("{}: {e}", path.display()),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// `Q(x)`: sensitive entries `rate·x`, insensitive entries `rate`, zero
    /// elsewhere off the diagonal, diagonals closing each row to zero.
    pub fn rate_matrix(&self, x: f64) -> Result<RateMatrix> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::DomainError(format!(
                "intensity must be finite and >= 0, got {x}"
            )));
        }
        let k = self.dim();
        let mut entries = vec![0.0; k * k];
        for t in &self.transitions {
            entries[t.from * k + t.to] = if t.sensitive { t.rate * x } else { t.rate };
        }
        for i in 0..k {
            let row = &mut entries[i * k..(i + 1) * k];
            let exit: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum();
            row[i] = -exit;
        }
        Ok(RateMatrix { dim: k, entries })
    }

    /// `E[Q]`. Since every sensitive entry is linear in `x`, this is `Q(E[x])`.
    pub fn mean_rate_matrix(&self, mean_x: f64) -> Result<RateMatrix> {
        self.rate_matrix(mean_x)
    }

    /// `g = Σ_{sensitive i→j} π_i q_ij / ln 2`, in bits per second per nat of
    /// Jensen gap.
    pub fn sensitive_gain(&self, pi: &SteadyState) -> f64 {
        let p = pi.probabilities();
        compensated_sum(
            self.transitions
                .iter()
                .filter(|t| t.sensitive)
                .map(|t| p[t.from] * t.rate),
        ) / std::f64::consts::LN_2
    }

    /// Stationary law of the mean chain at mean intensity `mean_x`. The
    /// fixed point does not depend on `Δt`, so an admissible step is chosen
    /// internally.
    pub fn mean_steady_state(&self, mean_x: f64) -> Result<SteadyState> {
        let q = self.mean_rate_matrix(mean_x)?;
        let max_exit = (0..q.dim).map(|i| -q.get(i, i)).fold(0.0, f64::max);
        let dt = if max_exit > 0.0 { 0.5 / max_exit } else { 1.0 };
        q.transition_matrix(dt)?.steady_state()
    }

    /// Entries of `P(x)` that depend on `x`, written as `intercept + slope·x`:
    /// each sensitive off-diagonal transition and the diagonal of every state
    /// with a sensitive exit.
    pub fn sensitive_pairs(&self, delta_t: f64) -> Vec<SensitivePair> {
        let k = self.dim();
        let mut pairs = Vec::new();
        for i in 0..k {
            let outgoing: Vec<&Transition> =
                self.transitions.iter().filter(|t| t.from == i).collect();
            if !outgoing.iter().any(|t| t.sensitive) {
                continue;
            }
            let fixed_exit: f64 = outgoing
                .iter()
                .filter(|t| !t.sensitive)
                .map(|t| t.rate)
                .sum();
            let sensitive_exit: f64 = outgoing
                .iter()
                .filter(|t| t.sensitive)
                .map(|t| t.rate)
                .sum();
            for t in outgoing.iter().filter(|t| t.sensitive) {
                pairs.push(SensitivePair {
                    from: i,
                    to: t.to,
                    intercept: 0.0,
                    slope: t.rate * delta_t,
                });
            }
            pairs.push(SensitivePair {
                from: i,
                to: i,
                intercept: 1.0 - fixed_exit * delta_t,
                slope: -sensitive_exit * delta_t,
            });
        }
        pairs
    }
}

/// An `x`-dependent entry `P(x)[from][to] = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivePair {
    pub from: usize,
    pub to: usize,
    pub intercept: f64,
    pub slope: f64,
}

impl SensitivePair {
    pub fn is_diagonal(&self) -> bool {
        self.from == self.to
    }

    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// `k × k` generator, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl RateMatrix {
    /// Builds from explicit entries; rows must sum to zero and
    /// off-diagonals must be nonnegative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DomainError("rate matrix must be square".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.iter()
                .enumerate()
                .any(|(j, v)| j != i && (*v < 0.0 || !v.is_finite()))
            {
                return Err(Error::DomainError(format!(
                    "row {i} has a negative off-diagonal rate"
                )));
            }
            let s: f64 = r.iter().sum();
            if s.abs() > 1e-12 {
                return Err(Error::DomainError(format!(
                    "row {i} sums to {s:e}, expected 0"
                )));
            }
        }
        Ok(Self {
            dim: k,
            entries: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// `P = I + QΔt`. Fails with `StepTooLarge` if any entry leaves `[0, 1]`.
    pub fn transition_matrix(&self, delta_t: f64) -> Result<TransitionMatrix> {
        if !(delta_t >= 0.0) || !delta_t.is_finite() {
            return Err(Error::DomainError(format!(
                "delta_t must be finite and >= 0, got {delta_t}"
            )));
        }
        let k = self.dim;
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                let q = self.get(i, j);
                let p = if i == j {
                    1.0 + q * delta_t
                } else {
                    q * delta_t
                };
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::StepTooLarge {
                        delta_t,
                        row: i,
                        col: j,
                        value: p,
                    });
                }
                entries[i * k + j] = p;
            }
        }
        Ok(TransitionMatrix {
            dim: k,
            entries,
            delta_t,
        })
    }
}

/// Row-stochastic one-step matrix for step `delta_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    dim: usize,
    entries: Vec<f64>,
    delta_t: f64,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// True if every state reaches every other through positive entries.
    pub fn is_irreducible(&self) -> bool {
        let k = self.dim;
        let reach = |forward: bool| {
            let mut seen = vec![false; k];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..k {
                    let p = if forward {
                        self.get(i, j)
                    } else {
                        self.get(j, i)
                    };
                    if i != j && p > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Unique `π` with `πP = π`, `Σπ = 1`: solves `(P - I)ᵀ πᵀ = 0` with the
    /// last balance equation replaced by normalization.
    pub fn steady_state(&self) -> Result<SteadyState> {
        let k = self.dim;
        if !self.is_irreducible() {
            return Err(Error::NotIrreducible(
                "transition graph is not strongly connected".into(),
            ));
        }
        // a[r][c] = (P - I)[c][r]
        let mut a = vec![vec![0.0; k + 1]; k];
        for (r, row) in a.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().take(k).enumerate() {
                *v = if r == c {
                    self.get(c, r) - 1.0
                } else {
                    self.get(c, r)
                };
            }
        }
        for v in a[k - 1].iter_mut() {
            *v = 1.0;
        }
        let pi = solve_augmented(a)
            .ok_or_else(|| Error::NotIrreducible("balance equations are singular".into()))?;
        let pi: Vec<f64> = pi.into_iter().map(|p| p.max(0.0)).collect();
        let total = compensated_sum(pi.iter().copied());
        Ok(SteadyState {
            probabilities: pi.into_iter().map(|p| p / total).collect(),
        })
    }
}

/// Gaussian elimination with partial pivoting on an augmented `k × (k+1)`
/// system.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r[..k].iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][k] - s) / a[r][r];
    }
    Some(x)
}

/// Stationary distribution of the output chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    probabilities: Vec<f64>,
}

impl SteadyState {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `‖πP - π‖∞`.
    pub fn residual(&self, p: &TransitionMatrix) -> f64 {
        let pi = &self.probabilities;
        (0..p.dim())
            .map(|j| {
                let v = compensated_sum((0..p.dim()).map(|i| pi[i] * p.get(i, j)));
                (v - pi[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ring() -> ReceptorSpec {
        ReceptorSpec::chr2(1.0, 1.0, 1.0).unwrap()
    }

    fn assert_generator(q: &RateMatrix) {
        for i in 0..q.dim() {
            let s: f64 = q.row(i).iter().sum();
            assert!(s.abs() <= 1e-12, "row {i} sums to {s}");
            for j in 0..q.dim() {
                if i != j {
                    assert!(q.get(i, j) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_malformed_specs() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let t = |from, to, rate, sensitive| Transition {
            from,
            to,
            rate,
            sensitive,
        };
        assert!(ReceptorSpec::new("x", s(&["A", "B"]), vec![t(0, 0, 1.0, true)]).is_err());
        assert!(ReceptorSpec::new("x", s(&["A", "B"]), vec![t(0, 1, 0.0, true)]).is_err());
        assert!(ReceptorSpec::new("x", s(&["A", "B"]), vec![t(0, 2, 1.0, true)]).is_err());
        assert!(ReceptorSpec::new("x", s(&["A", "B"]), vec![t(0, 1, 1.0, false)]).is_err());
        assert!(ReceptorSpec::new(
            "x",
            s(&["A", "B"]),
            vec![t(0, 1, 1.0, true), t(0, 1, 2.0, false)]
        )
        .is_err());
        assert!(ReceptorSpec::new("x", s(&["A", "A"]), vec![t(0, 1, 1.0, true)]).is_err());
    }

    #[test]
    fn darkness_blocks_sensitive_exit() {
        let q = unit_ring().rate_matrix(0.0).unwrap();
        assert_eq!(q.row(0), &[0.0, 0.0, 0.0]);
        assert_generator(&q);
    }

    #[test]
    fn unit_ring_at_unit_intensity() {
        let expected = vec![
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
            vec![1.0, 0.0, -1.0],
        ];
        assert_eq!(unit_ring().rate_matrix(1.0).unwrap().to_rows(), expected);
        assert_eq!(
            unit_ring().mean_rate_matrix(1.0).unwrap().to_rows(),
            expected
        );
    }

    #[test]
    fn mixed_rates_form_generator() {
        let q = ReceptorSpec::chr2(0.5, 3.0, 4.0)
            .unwrap()
            .rate_matrix(2.0)
            .unwrap();
        assert_generator(&q);
        assert_eq!(q.get(0, 1), 1.0);
        assert_eq!(q.get(1, 2), 3.0);
        assert_eq!(q.get(2, 0), 4.0);
    }

    #[test]
    fn first_order_transition_matrix() {
        let q = unit_ring().rate_matrix(1.0).unwrap();
        let p = q.transition_matrix(0.1).unwrap();
        let expected = [[0.9, 0.1, 0.0], [0.0, 0.9, 0.1], [0.1, 0.0, 0.9]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((p.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
        let id = q.transition_matrix(0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(id.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let q = RateMatrix::from_rows(&[vec![-20.0, 20.0], vec![1.0, -1.0]]).unwrap();
        assert!(matches!(
            q.transition_matrix(0.1),
            Err(Error::StepTooLarge { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn symmetric_steady_states() {
        let p = unit_ring()
            .rate_matrix(1.0)
            .unwrap()
            .transition_matrix(0.01)
            .unwrap();
        let pi = p.steady_state().unwrap();
        for v in pi.probabilities() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let two = RateMatrix::from_rows(&[vec![-2.5, 2.5], vec![2.5, -2.5]])
            .unwrap()
            .transition_matrix(0.1)
            .unwrap();
        assert_eq!(two.steady_state().unwrap().probabilities(), &[0.5, 0.5]);
    }

    #[test]
    fn reducible_chain_rejected() {
        // C1 absorbing in darkness
        let p = unit_ring()
            .rate_matrix(0.0)
            .unwrap()
            .transition_matrix(0.1)
            .unwrap();
        assert!(matches!(p.steady_state(), Err(Error::NotIrreducible(_))));
    }

    #[test]
    fn gain_of_single_sensitive_transition() {
        let spec = unit_ring();
        let pi = spec.mean_steady_state(1.0).unwrap();
        let g = spec.sensitive_gain(&pi);
        assert!((g - 1.0 / 3.0 / std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g - 0.4809).abs() < 1e-4);
    }

    #[test]
    fn sensitive_pairs_reproduce_transition_entries() {
        let spec = ReceptorSpec::chr2(0.5, 3.0, 4.0).unwrap();
        let dt = 0.01;
        let x = 1.7;
        let p = spec.rate_matrix(x).unwrap().transition_matrix(dt).unwrap();
        let pairs = spec.sensitive_pairs(dt);
        assert_eq!(pairs.len(), 2);
        for pair in pairs {
            assert!((pair.at(x) - p.get(pair.from, pair.to)).abs() < 1e-15);
        }
    }

    #[test]
    fn config_round_trip_resolves_labels() {
        let text = r#"{"name":"ChR2","states":["C1","O2","C3"],"transitions":[
            {"from":"C1","to":"O2","rate":2.0,"sensitive":true},
            {"from":"O2","to":"C3","rate":3.0,"sensitive":false},
            {"from":"C3","to":"C1","rate":4.0,"sensitive":false}]}"#;
        let spec = ReceptorSpec::from_json_str(text).unwrap();
        assert_eq!(spec, ReceptorSpec::chr2(2.0, 3.0, 4.0).unwrap());
        let back = ReceptorSpec::from_json_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = text
            .replace("\"C3\",\"C1\"", "\"C3\",\"C9\"")
            .replace("\"to\":\"C1\"", "\"to\":\"C9\"");
        assert!(ReceptorSpec::from_json_str(&bad).is_err());
    }
}
