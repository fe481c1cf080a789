//! Reference computations shared by the integration tests. None of these
//! call into the library's numerics: quadrature here is plain composite
//! Simpson, normalization is integrated rather than taken from `erfc`, and
//! stationary laws come from power iteration.

#![allow(dead_code)]

use rand::Rng;

/// Composite Simpson on `[lo, hi]` with `panels` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(lo: f64, hi: f64, panels: usize, f: F) -> f64 {
    let panels = panels + panels % 2;
    let h = (hi - lo) / panels as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..panels {
        let v = f(lo + h * i as f64);
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (f(lo) + f(hi) + 4.0 * odd + 2.0 * even)
}

/// `E[g(x)]` for `x ~ N(mu_bar, sigma_bar²)` truncated to `[a, b]`, by
/// Simpson in standard units with an integrated normalizer.
pub fn tg_expectation<G: Fn(f64) -> f64>(mu_bar: f64, sigma_bar: f64, a: f64, b: f64, g: G) -> f64 {
    let lo = ((a - mu_bar) / sigma_bar).max(-40.0);
    let hi = ((b - mu_bar) / sigma_bar).min(40.0);
    let w = |z: f64| (-0.5 * z * z).exp();
    let panels = 200_000;
    let mass = simpson(lo, hi, panels, w);
    simpson(lo, hi, panels, |z| g(mu_bar + sigma_bar * z) * w(z)) / mass
}

/// Raw moments `E[x^m]`, `m = 0..=order`, all from one Simpson pass.
pub fn tg_raw_moments(mu_bar: f64, sigma_bar: f64, a: f64, b: f64, order: usize) -> Vec<f64> {
    let lo = ((a - mu_bar) / sigma_bar).max(-40.0);
    let hi = ((b - mu_bar) / sigma_bar).min(40.0);
    let panels = 200_000usize;
    let h = (hi - lo) / panels as f64;
    let mut acc = vec![0.0; order + 1];
    for i in 0..=panels {
        let z = lo + h * i as f64;
        let c = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let x = mu_bar + sigma_bar * z;
        let mut p = c * (-0.5 * z * z).exp();
        for slot in acc.iter_mut() {
            *slot += p;
            p *= x;
        }
    }
    let mass = acc[0];
    acc.iter().map(|v| v / mass).collect()
}

/// Stationary row vector of a row-stochastic matrix by repeated
/// multiplication from the uniform law.
pub fn power_iteration(p: &[Vec<f64>], max_iter: usize, tol: f64) -> Vec<f64> {
    let k = p.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..max_iter {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += pi[i] * p[i][j];
            }
        }
        let change = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if change < tol {
            break;
        }
    }
    pi
}

/// Row sums and sign pattern of a generator, checked entry by entry.
pub fn is_generator(rows: &[Vec<f64>], tol: f64) -> bool {
    rows.iter().enumerate().all(|(i, row)| {
        let sum: f64 = row.iter().sum();
        let offdiag_ok = row.iter().enumerate().all(|(j, &v)| j == i || v >= 0.0);
        sum.abs() <= tol && offdiag_ok && row[i] <= 0.0
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && v[idx[end + 1]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0 + 1.0;
        for &k in &idx[start..=end] {
            r[k] = avg;
        }
        start = end + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Truncated-Gaussian draw by rejection from a uniform proposal on `[a, b]`.
pub fn rejection_sample<R: Rng>(mu_bar: f64, sigma_bar: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    // peak of the unnormalized density over [a, b]
    let peak_z = ((mu_bar.clamp(a, b)) - mu_bar) / sigma_bar;
    let peak = (-0.5 * peak_z * peak_z).exp();
    loop {
        let x = a + (b - a) * rng.random::<f64>();
        let z = (x - mu_bar) / sigma_bar;
        if rng.random::<f64>() * peak <= (-0.5 * z * z).exp() {
            return x;
        }
    }
}

pub fn mean_and_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var)
}
