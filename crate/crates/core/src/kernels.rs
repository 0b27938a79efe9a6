//! Symmetric step distributions: binomial, SOS (discrete Laplace) and
//! tabulated kernels, with class-membership validation.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Provenance of a kernel, kept for reporting and for the lattice-path
/// correspondence which needs the SOS normalizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    Binomial,
    Sos {
        beta: f64,
        /// `2e^{-β}/(1-e^{-β})²`, the variance of the untruncated law.
        sigma2_analytic: f64,
        /// `Σ_{|k|≤K} e^{-β|k|}`, the normalizer actually used.
        truncated_normalizer: f64,
    },
    Table,
}

/// A symmetric, finitely supported step distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkKernel {
    /// `probs[k + max_step]` is `p(k)`.
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    sigma2: f64,
    c0: f64,
    max_step: usize,
    truncation_defect: f64,
    family: KernelFamily,
}

/// Variance of the untruncated SOS law.
pub fn sos_sigma2(beta: f64) -> f64 {
    let x = (-beta).exp();
    2.0 * x / ((1.0 - x) * (1.0 - x))
}

/// `Z_β = Σ_k e^{-β|k|} = (1+e^{-β})/(1-e^{-β})`.
pub fn sos_normalizer(beta: f64) -> f64 {
    let x = (-beta).exp();
    (1.0 + x) / (1.0 - x)
}

/// Smallest β for which the SOS variance does not exceed ½: `ln(3+2√2)`.
pub fn sos_beta_min() -> f64 {
    (3.0 + 2.0 * 2f64.sqrt()).ln()
}

impl WalkKernel {
    fn from_half(half: &[f64], family: KernelFamily, truncation_defect: f64) -> Result<Self> {
        // half[k] = p(k) for k = 0..=K, already normalised.
        let mut k_max = half.len() - 1;
        while k_max > 0 && half[k_max] == 0.0 {
            k_max -= 1;
        }
        let mut probs = Vec::with_capacity(2 * k_max + 1);
        for k in (1..=k_max).rev() {
            probs.push(half[k]);
        }
        probs.extend_from_slice(&half[..=k_max]);
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        let sigma2 = (1..=k_max).map(|k| 2.0 * (k * k) as f64 * half[k]).sum();
        Ok(WalkKernel {
            probs,
            log_probs,
            sigma2,
            c0: 1.0,
            max_step: k_max,
            truncation_defect,
            family,
        })
    }

    /// Returns the same kernel with a different class constant `c₀ ∈ (0,1]`.
    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0 <= 1.0) {
            return param(format!("c0 must lie in (0,1], got {c0}"));
        }
        self.c0 = c0;
        Ok(self)
    }

    pub fn p(&self, k: i64) -> f64 {
        let k_abs = k.unsigned_abs() as usize;
        if k_abs > self.max_step {
            0.0
        } else {
            self.probs[(k + self.max_step as i64) as usize]
        }
    }

    pub fn log_p(&self, k: i64) -> f64 {
        let k_abs = k.unsigned_abs() as usize;
        if k_abs > self.max_step {
            f64::NEG_INFINITY
        } else {
            self.log_probs[(k + self.max_step as i64) as usize]
        }
    }

    /// Step values `-K..=K`.
    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        let k = self.max_step as i64;
        -k..=k
    }

    /// Linear probabilities aligned with [`offsets`](Self::offsets).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Effective variance of the (truncated) kernel.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn max_step(&self) -> usize {
        self.max_step
    }

    pub fn truncation_defect(&self) -> f64 {
        self.truncation_defect
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn analytic_sigma2(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Sos {
                sigma2_analytic, ..
            } => Some(sigma2_analytic),
            _ => None,
        }
    }

    /// Spec-string form accepted by [`crate::specs::parse_kernel`] (tables are
    /// described by their values, not their source path).
    pub fn describe(&self) -> String {
        match &self.family {
            KernelFamily::Binomial => format!("binomial:sigma2={}", self.sigma2),
            KernelFamily::Sos { beta, .. } => {
                format!("sos:beta={beta},tail_tol={:e}", self.truncation_defect.max(1e-300))
            }
            KernelFamily::Table => {
                let vals: Vec<String> = (0..=self.max_step as i64)
                    .map(|k| format!("{}", self.p(k)))
                    .collect();
                format!("table:[{}]", vals.join(" "))
            }
        }
    }
}

/// Nearest-neighbour lazy walk: `p(±1) = σ²/2`, `p(0) = 1 − σ²`.
pub fn make_binomial(sigma2: f64) -> Result<WalkKernel> {
    if !(sigma2 > 0.0 && sigma2 <= 0.5) {
        return param(format!("binomial sigma2 must lie in (0, 1/2], got {sigma2}"));
    }
    let mut k = WalkKernel::from_half(&[1.0 - sigma2, sigma2 / 2.0], KernelFamily::Binomial, 0.0)?;
    k.sigma2 = sigma2;
    Ok(k)
}

/// Discrete Laplace law `p(k) ∝ e^{-β|k|}`, cut at the smallest `K` whose
/// discarded mass `2e^{-β(K+1)}/(1+e^{-β})` is below `tail_tol`.
pub fn make_sos(beta: f64, tail_tol: f64) -> Result<WalkKernel> {
    if !(beta.is_finite() && beta > 0.0) {
        return param(format!("sos beta must be positive and finite, got {beta}"));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return param(format!("sos tail_tol must lie in (0,1), got {tail_tol}"));
    }
    let sigma2_analytic = sos_sigma2(beta);
    if sigma2_analytic > 0.5 {
        return param(format!(
            "sos beta={beta} gives sigma2={sigma2_analytic:.6} > 1/2 (need beta >= {:.6})",
            sos_beta_min()
        ));
    }
    let x = (-beta).exp();
    let discarded = |k: usize| 2.0 * x.powi(k as i32 + 1) / (1.0 + x);
    let mut k_max = 1usize;
    while discarded(k_max) >= tail_tol {
        k_max += 1;
    }
    let weights: Vec<f64> = (0..=k_max).map(|k| x.powi(k as i32)).collect();
    let norm = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
    let half: Vec<f64> = weights.iter().map(|w| w / norm).collect();
    WalkKernel::from_half(
        &half,
        KernelFamily::Sos {
            beta,
            sigma2_analytic,
            truncated_normalizer: norm,
        },
        discarded(k_max),
    )
}

/// Kernel from `(k, p(k))` pairs for `k ≥ 0`; `p(-k) = p(k)` is implied.
/// The table must be normalised to within `1e-6`; it is then renormalised
/// exactly and the deficit recorded as the truncation defect.
pub fn make_table(entries: &[(u64, f64)]) -> Result<WalkKernel> {
    if entries.is_empty() {
        return param("empty kernel table");
    }
    let k_max = entries.iter().map(|e| e.0).max().unwrap_or(0) as usize;
    let mut half = vec![0.0; k_max + 1];
    let mut seen = vec![false; k_max + 1];
    for &(k, p) in entries {
        if !(p.is_finite() && p >= 0.0) {
            return param(format!("kernel table entry p({k})={p} is not a probability"));
        }
        if seen[k as usize] {
            return param(format!("kernel table lists k={k} twice"));
        }
        seen[k as usize] = true;
        half[k as usize] = p;
    }
    let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    if (total - 1.0).abs() > 1e-6 {
        return param(format!("kernel table sums to {total}, expected 1"));
    }
    for v in &mut half {
        *v /= total;
    }
    let k = WalkKernel::from_half(&half, KernelFamily::Table, (1.0 - total).max(0.0))?;
    if !(k.sigma2 > 0.0 && k.sigma2 <= 0.5) {
        return param(format!("kernel table variance {} outside (0, 1/2]", k.sigma2));
    }
    Ok(k)
}

/// Result of checking a kernel against the class conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub c0: f64,
    pub p0: f64,
    pub p1: f64,
    pub sigma2: f64,
    pub third_moment: f64,
    pub total_mass: f64,
    pub p1_condition: bool,
    pub third_moment_condition: bool,
    pub p0_condition: bool,
    pub symmetric: bool,
    pub normalized: bool,
    pub irreducible: bool,
}

impl MembershipReport {
    pub fn member(&self) -> bool {
        self.p1_condition
            && self.third_moment_condition
            && self.p0_condition
            && self.symmetric
            && self.normalized
            && self.irreducible
    }
}

/// Report-only check of class membership for a given `c₀`.
pub fn validate_kernel(kernel: &WalkKernel, c0: f64) -> MembershipReport {
    // Relative slack for conditions that hold with equality (binomial σ²=½).
    let slack = 1e-12;
    let k = kernel.max_step as i64;
    let mut total = 0.0;
    let mut second = 0.0;
    let mut third = 0.0;
    let mut symmetric = true;
    for s in -k..=k {
        let p = kernel.p(s);
        total += p;
        second += (s * s) as f64 * p;
        third += (s.abs().pow(3)) as f64 * p;
        if p != kernel.p(-s) {
            symmetric = false;
        }
    }
    let sigma2 = kernel.sigma2;
    let p0 = kernel.p(0);
    let p1 = kernel.p(1);
    MembershipReport {
        c0,
        p0,
        p1,
        sigma2,
        third_moment: third,
        total_mass: total,
        p1_condition: p1 >= 0.5 * c0 * sigma2 * (1.0 - slack),
        third_moment_condition: third <= sigma2 / c0 * (1.0 + slack),
        p0_condition: p0 >= (1.0 - sigma2) * (1.0 - slack) && 1.0 - sigma2 >= 0.5,
        symmetric,
        normalized: (total - 1.0).abs() <= 1e-12 && (second - sigma2).abs() <= 1e-10,
        irreducible: p1 > 0.0,
    }
}
