//! One-dimensional two-component Gaussian mixtures and their overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIGMA_FLOOR: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200;
pub const LOG_LIKELIHOOD_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    /// Mixing weight of the lower component.
    pub weight1: f64,
    pub converged: bool,
}

fn log_normal(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    log_normal(x, mu, sigma).exp()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt().max(SIGMA_FLOOR))
}

/// Expectation-maximization from a median split.
///
/// The lower half of the sorted values seeds the first component and the upper
/// half the second. Stops after [`MAX_ITERATIONS`] or when the log-likelihood
/// changes by less than [`LOG_LIKELIHOOD_TOLERANCE`] relative to its size.
pub fn fit_gmm2(values: &[f64]) -> Result<GmmFit> {
    if values.len() < 2 {
        return Err(Error::invalid("a two-component fit needs at least two values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = sorted.len() / 2;
    let (mut mu1, mut s1) = mean_std(&sorted[..half]);
    let (mut mu2, mut s2) = mean_std(&sorted[half..]);
    let mut w1: f64 = 0.5;
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let n = values.len() as f64;
    let mut resp = vec![0.0; values.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let a = w1.ln() + log_normal(x, mu1, s1);
            let b = (1.0 - w1).ln() + log_normal(x, mu2, s2);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            *r = (a - lse).exp();
            ll += lse;
        }
        let n1: f64 = resp.iter().sum();
        let n2 = n - n1;
        if n1 > f64::EPSILON * n {
            mu1 = resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / n1;
            let v = resp.iter().zip(values).map(|(r, x)| r * (x - mu1) * (x - mu1)).sum::<f64>() / n1;
            s1 = v.sqrt().max(SIGMA_FLOOR);
        }
        if n2 > f64::EPSILON * n {
            mu2 = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n2;
            let v = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * (x - mu2) * (x - mu2)).sum::<f64>() / n2;
            s2 = v.sqrt().max(SIGMA_FLOOR);
        }
        w1 = (n1 / n).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        if (ll - prev).abs() <= LOG_LIKELIHOOD_TOLERANCE * ll.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = ll;
    }
    if mu1 > mu2 {
        std::mem::swap(&mut mu1, &mut mu2);
        std::mem::swap(&mut s1, &mut s2);
        w1 = 1.0 - w1;
    }
    Ok(GmmFit {
        mu1,
        sigma1: s1,
        mu2,
        sigma2: s2,
        weight1: w1,
        converged,
    })
}

/// Points where the two component densities are equal.
fn crossings(fit: &GmmFit) -> Vec<f64> {
    let (m1, s1, m2, s2) = (fit.mu1, fit.sigma1, fit.mu2, fit.sigma2);
    let a = 0.5 / (s1 * s1) - 0.5 / (s2 * s2);
    let b = m2 / (s2 * s2) - m1 / (s1 * s1);
    let c = 0.5 * m1 * m1 / (s1 * s1) - 0.5 * m2 * m2 / (s2 * s2) + (s1 / s2).ln();
    if a.abs() < 1e-300 {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let r = disc.sqrt();
    vec![(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)]
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫ min(pdf₁, pdf₂)` over `[mu1 − 8σ1, mu2 + 8σ2]`, split at the density
/// crossings and at several standard deviations around each mean.
pub fn gaussian_overlap(fit: &GmmFit) -> f64 {
    let lo = (fit.mu1 - 8.0 * fit.sigma1).min(fit.mu2 - 8.0 * fit.sigma2);
    let hi = (fit.mu1 + 8.0 * fit.sigma1).max(fit.mu2 + 8.0 * fit.sigma2);
    if !(hi > lo) {
        return 1.0;
    }
    let mut cuts = vec![lo, hi];
    for (mu, s) in [(fit.mu1, fit.sigma1), (fit.mu2, fit.sigma2)] {
        for k in [-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0] {
            cuts.push(mu + k * s);
        }
    }
    cuts.extend(crossings(fit));
    cuts.retain(|x| x.is_finite() && *x >= lo && *x <= hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let f = |x: f64| normal_pdf(x, fit.mu1, fit.sigma1).min(normal_pdf(x, fit.mu2, fit.sigma2));
    let tol = 1e-6 / cuts.len() as f64;
    let total: f64 = cuts.windows(2).map(|w| integrate(&f, w[0], w[1], tol)).sum();
    total.clamp(0.0, 1.0)
}
