//! Symmetrised pinned transfer operator `P̃ = e^{V/2} P e^{V/2}` on the
//! half-line `[0, h_max]`, its top eigenvalue, and the sine test-function
//! lower bound used to certify localization.

use serde::{Deserialize, Serialize};

use crate::certify::{Certificate, CertificateParams, Evidence, SpectralEvidence, Verdict};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::WalkKernel;
use crate::potentials::PinningPotential;

/// Banded symmetric operator with a Dirichlet wall below 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnedOperator {
    probs: Vec<f64>,
    max_step: usize,
    eps: Vec<f64>,
    half: Vec<f64>,
}

impl PinnedOperator {
    /// States `0..=h_max`, state `i` carrying `ε_i`.
    pub fn new(kernel: &WalkKernel, pot: Option<&PinningPotential>, h_max: usize) -> Result<Self> {
        let eps = (0..=h_max).map(|i| pot.map_or(0.0, |p| p.eps(i))).collect();
        Self::from_levels(kernel, eps)
    }

    /// Operator on `eps.len()` states with the given diagonal potential.
    pub fn from_levels(kernel: &WalkKernel, eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::Configuration("operator needs at least one state".into()));
        }
        let half = eps.iter().map(|e| (0.5 * e).exp()).collect();
        Ok(PinnedOperator {
            probs: kernel.probs().to_vec(),
            max_step: kernel.max_step(),
            eps,
            half,
        })
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    fn p(&self, k: i64) -> f64 {
        let ka = k.unsigned_abs() as usize;
        if ka > self.max_step {
            0.0
        } else {
            self.probs[(k + self.max_step as i64) as usize]
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.half[i] * self.p(i as i64 - j as i64) * self.half[j]
    }

    /// `y = P̃ x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        let k = self.max_step;
        for i in 0..n {
            let lo = i.saturating_sub(k);
            let hi = (i + k).min(n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.p(i as i64 - j as i64) * self.half[j] * x[j];
            }
            y[i] = self.half[i] * s;
        }
    }

    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        dot(x, &y) / dot(x, x)
    }

    /// Number of eigenvalues strictly above `lambda`, from the inertia of
    /// `λI − P̃` (banded LDLᵀ, Sylvester's law).
    pub fn count_above(&self, lambda: f64) -> usize {
        let n = self.dim();
        let k = self.max_step;
        let scale = lambda.abs().max(1.0);
        let tiny = f64::EPSILON * f64::EPSILON * scale;
        let mut d = vec![0.0; n];
        // l[i*k + (o-1)] = L(i, i-o), o = 1..=k
        let mut l = vec![0.0; n * k.max(1)];
        let mut negatives = 0;
        for i in 0..n {
            let first = i.saturating_sub(k);
            for j in first..i {
                let mut s = -self.entry(i, j);
                for m in first..j {
                    if j - m <= k {
                        s -= l[i * k + (i - m - 1)] * l[j * k + (j - m - 1)] * d[m];
                    }
                }
                l[i * k + (i - j - 1)] = s / d[j];
            }
            let mut di = lambda - self.entry(i, i);
            for m in first..i {
                let lim = l[i * k + (i - m - 1)];
                di -= lim * lim * d[m];
            }
            if di == 0.0 {
                di = -tiny;
            }
            if di < 0.0 {
                negatives += 1;
            }
            d[i] = di;
        }
        negatives
    }

    fn max_row_sum(&self) -> f64 {
        let n = self.dim();
        let k = self.max_step;
        (0..n)
            .map(|i| {
                (i.saturating_sub(k)..=(i + k).min(n - 1))
                    .map(|j| self.entry(i, j))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An eigenvalue estimate. For bisection `residual` is the half-width of the
/// final bracket; for power iteration it is `‖P̃v − λv‖/‖v‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Default iteration cap of [`top_eigenvalue`].
pub const POWER_ITERATION_CAP: usize = 200_000;

/// Shifted power iteration from a positive start vector.
pub fn top_eigenvalue(op: &PinnedOperator, tol: f64) -> EigenEstimate {
    top_eigenvalue_capped(op, tol, POWER_ITERATION_CAP)
}

pub fn top_eigenvalue_capped(op: &PinnedOperator, tol: f64, max_iter: usize) -> EigenEstimate {
    let n = op.dim();
    let diag_max = (0..n).map(|i| op.entry(i, i)).fold(0.0, f64::max);
    let shift = 0.25 * diag_max;
    let mut x: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::PI * (i + 1) as f64 / (n + 1) as f64).sin())
        .collect();
    let mut y = vec![0.0; n];
    let mut lambda = op.rayleigh(&x);
    let mut iterations = 0;
    let mut converged = n == 1;
    while !converged && iterations < max_iter {
        op.apply(&x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi -= shift * xi;
        }
        let norm = dot(&y, &y).sqrt();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        let next = op.rayleigh(&x);
        iterations += 1;
        converged = (next - lambda).abs() <= tol * next.abs();
        lambda = next;
    }
    op.apply(&x, &mut y);
    let xn = dot(&x, &x).sqrt();
    let residual = y
        .iter()
        .zip(&x)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
        / xn;
    EigenEstimate {
        value: lambda,
        residual,
        iterations,
        converged,
    }
}

/// Top eigenvalue by bisection on the inertia count; robust when the
/// spectral gap is tiny (the delocalized regime).
pub fn top_eigenvalue_bisection(op: &PinnedOperator, tol: f64) -> EigenEstimate {
    let n = op.dim();
    let mut lo = (0..n).map(|i| op.entry(i, i)).fold(0.0, f64::max);
    let mut hi = op.max_row_sum() * (1.0 + 4.0 * f64::EPSILON) + f64::MIN_POSITIVE;
    if n == 1 {
        return EigenEstimate {
            value: lo,
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    // Rayleigh quotient of a unit vector is a lower bound; step just below it.
    lo *= 1.0 - 4.0 * f64::EPSILON;
    let mut iterations = 0;
    while hi - lo > tol * hi.abs().max(1e-300) && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if op.count_above(mid) >= 1 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    EigenEstimate {
        value: 0.5 * (lo + hi),
        residual: 0.5 * (hi - lo),
        iterations,
        converged: hi - lo <= tol * hi.abs().max(1e-300),
    }
}

/// The sine test function on `[0, d]` and its Rayleigh quotient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionBound {
    pub d: usize,
    /// `Σ s(i)²`.
    pub norm_sq: f64,
    /// `K = Σ s(i)² e^{-ε_i}`.
    pub k_norm: f64,
    /// `½ Σ_{i,j∈ℤ} p(i−j)(s(i)−s(j))²` with `s` extended by zero.
    pub dirichlet_form: f64,
    /// `(s, P s)`.
    pub quadratic: f64,
    /// `(s, P s)/K`, a lower bound on the top of the spectrum.
    pub quotient: f64,
    /// The cruder bound obtained from the Lipschitz estimate of the Dirichlet
    /// form and `e^{-x} ≤ 1 − x/4`; `None` when some `ε_i > log 2`.
    pub chain_bound: Option<f64>,
    pub eps_exceeds_log2: bool,
}

pub fn test_function_bound(kernel: &WalkKernel, pot: &PinningPotential, d: usize) -> TestFunctionBound {
    let n = d + 1;
    let s: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::PI * (i + 1) as f64 / (d + 2) as f64).sin())
        .collect();
    let k = kernel.max_step() as i64;
    let norm_sq: f64 = s.iter().map(|v| v * v).sum();
    let k_norm: f64 = s
        .iter()
        .enumerate()
        .map(|(i, v)| v * v * (-pot.eps(i)).exp())
        .sum();
    let at = |i: i64| if i >= 0 && i < n as i64 { s[i as usize] } else { 0.0 };
    let mut quadratic = 0.0;
    let mut dirichlet = 0.0;
    for i in 0..n as i64 {
        for step in -k..=k {
            let p = kernel.p(step);
            let j = i + step;
            quadratic += p * at(i) * at(j);
            let diff = at(i) - at(j);
            // pairs with both ends inside are visited twice, pairs with one
            // end outside once from the inside end
            if j >= 0 && j < n as i64 {
                dirichlet += 0.5 * p * diff * diff;
            } else {
                dirichlet += p * diff * diff;
            }
        }
    }
    let eps_exceeds_log2 = (0..n).any(|i| pot.eps(i) > std::f64::consts::LN_2);
    let chain_bound = (!eps_exceeds_log2).then(|| {
        let num = norm_sq
            - std::f64::consts::PI.powi(2) * kernel.sigma2() / (2.0 * (d + 1) as f64);
        let den: f64 = s
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if i <= d / 2 {
                    v * v * (1.0 - pot.eps(i) / 4.0)
                } else {
                    v * v
                }
            })
            .sum();
        num / den
    });
    TestFunctionBound {
        d,
        norm_sq,
        k_norm,
        dirichlet_form: dirichlet,
        quadratic,
        quotient: quadratic / k_norm,
        chain_bound,
        eps_exceeds_log2,
    }
}

/// Options for [`localization_certificate_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationOptions {
    /// Largest test-function width scanned.
    pub d_max: usize,
    /// Truncation of the operator for the eigenvalue route.
    pub h_max: usize,
    pub tol: f64,
    pub exec: Execution,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions {
            d_max: 1 << 12,
            h_max: 1 << 11,
            tol: 1e-9,
            exec: Execution::default(),
        }
    }
}

/// Widths scanned: `0`, powers of two and their 3/2 multiples, and `2j`,
/// `2j+1` around each pinned level.
pub fn scan_widths(pot: &PinningPotential, d_max: usize) -> Vec<usize> {
    let mut ds = vec![0usize];
    let mut p = 1usize;
    while p <= d_max {
        ds.push(p);
        if p >= 2 && p + p / 2 <= d_max {
            ds.push(p + p / 2);
        }
        p *= 2;
    }
    let mut levels = 0;
    for (j, &e) in pot.values().iter().enumerate() {
        if e > 0.0 && 2 * j + 1 <= d_max {
            ds.push(2 * j);
            ds.push(2 * j + 1);
            levels += 1;
            if levels >= 256 {
                break;
            }
        }
    }
    ds.sort_unstable();
    ds.dedup();
    ds
}

pub fn localization_certificate(kernel: &WalkKernel, pot: &PinningPotential) -> Certificate {
    localization_certificate_with(kernel, pot, &LocalizationOptions::default())
}

pub fn localization_certificate_with(
    kernel: &WalkKernel,
    pot: &PinningPotential,
    opts: &LocalizationOptions,
) -> Certificate {
    let widths = scan_widths(pot, opts.d_max);
    let bounds = opts.exec.map(&widths, |&d| test_function_bound(kernel, pot, d));
    let best = bounds
        .iter()
        .max_by(|a, b| a.quotient.total_cmp(&b.quotient))
        .expect("width scan is never empty");

    // A point mass at level j has Rayleigh quotient p(0)e^{ε_j}.
    let (stick_level, stick) = pot
        .values()
        .iter()
        .enumerate()
        .map(|(j, e)| (j, kernel.p(0) * e.exp()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, kernel.p(0)));

    let h = opts
        .h_max
        .max(4 * (pot.top_level().unwrap_or(0) + 1))
        .min(1 << 15);
    let eig = PinnedOperator::new(kernel, Some(pot), h)
        .map(|op| top_eigenvalue_bisection(&op, opts.tol * 1e-2))
        .ok();
    let lambda = eig.map_or(f64::NAN, |e| e.value);
    let eig_threshold = 1.0 + 10.0 * opts.tol;

    let mut evidence = vec![
        Evidence::at_scale(best.d, "test_function_quotient", best.quotient, 1.0, best.quotient > 1.0),
        Evidence::at_level(stick_level, "point_mass_quotient", stick, 1.0, stick > 1.0),
        Evidence::at_scale(h, "truncated_eigenvalue", lambda, eig_threshold, lambda > eig_threshold),
    ];
    evidence[1].scale = Some(0);

    let rigorous = best.quotient.max(stick);
    let (verdict, method, growth) = if rigorous > 1.0 {
        let m = if best.quotient >= stick { "test_function" } else { "point_mass" };
        (Verdict::Localized, m, rigorous.ln())
    } else if lambda > eig_threshold {
        (Verdict::Localized, "truncated_eigenvalue", lambda.ln())
    } else {
        (Verdict::Undetermined, "none", 0.0)
    };
    let mut notes = Vec::new();
    if let Some(j) = pot.exceeds_log2() {
        notes.push(format!("eps at level {j} exceeds log 2"));
    }
    Certificate {
        verdict,
        params: CertificateParams::new(kernel, pot),
        evidence,
        valid_up_to: None,
        spectral: Some(SpectralEvidence {
            d: best.d,
            quotient: best.quotient,
            chain_bound: best.chain_bound,
            point_mass_quotient: stick,
            point_mass_level: stick_level,
            lambda_max: lambda,
            h_max: h,
            method: method.to_string(),
            growth_rate: growth,
        }),
        coverage: None,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_binomial, make_sos};

    #[test]
    fn one_by_one_operator() {
        let k = make_binomial(0.5).unwrap();
        let op = PinnedOperator::from_levels(&k, vec![0.4]).unwrap();
        let a = 0.5 * 0.4f64.exp();
        assert_eq!(top_eigenvalue(&op, 1e-12).value, a);
        assert!((top_eigenvalue_bisection(&op, 1e-12).value - a).abs() < 1e-15);
    }

    #[test]
    fn test_function_small_d() {
        let k = make_binomial(0.5).unwrap();
        let t = test_function_bound(&k, &PinningPotential::zero(), 0);
        assert!((t.quotient - 0.5).abs() < 1e-15);
        let eps = 0.7;
        let t = test_function_bound(&k, &PinningPotential::single(0, eps).unwrap(), 0);
        assert!((t.quotient - 0.5 * eps.exp()).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_identity() {
        let k = make_sos(2.0, 1e-9).unwrap();
        for d in [0, 1, 5, 40] {
            let t = test_function_bound(&k, &PinningPotential::zero(), d);
            assert!((t.quadratic - (t.norm_sq - t.dirichlet_form)).abs() < 1e-12 * t.norm_sq);
            assert!(t.quotient <= 1.0);
        }
    }

    #[test]
    fn inertia_matches_power_iteration() {
        let k = make_sos(2.2, 1e-10).unwrap();
        let pot = PinningPotential::from_values(vec![0.3, 0.2, 0.0, 0.4]).unwrap();
        let op = PinnedOperator::new(&k, Some(&pot), 60).unwrap();
        let a = top_eigenvalue(&op, 1e-14);
        let b = top_eigenvalue_bisection(&op, 1e-13);
        assert!(a.converged);
        assert!((a.value - b.value).abs() < 1e-9, "{a:?} {b:?}");
        assert!(a.residual < 1e-5);
    }

    #[test]
    fn zero_potential_undetermined() {
        let k = make_binomial(0.25).unwrap();
        let c = localization_certificate(&k, &PinningPotential::zero());
        assert_eq!(c.verdict, Verdict::Undetermined);
        let op = PinnedOperator::new(&k, None, 200).unwrap();
        assert!(top_eigenvalue_bisection(&op, 1e-12).value <= 1.0 + 1e-12);
    }

    #[test]
    fn strong_pin_localized() {
        let k = make_binomial(0.5).unwrap();
        let c = localization_certificate(&k, &PinningPotential::single(0, 1.0).unwrap());
        assert_eq!(c.verdict, Verdict::Localized);
        let sp = c.spectral.unwrap();
        assert!(sp.quotient >= 0.5 * 1f64.exp() - 1e-12);
    }
}
