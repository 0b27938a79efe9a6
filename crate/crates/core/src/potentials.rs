//! Pinning sequences `ε_j`, the ratio ρ, and the single-level decoupling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Default cap on the number of retained levels for closed-form families.
pub const MAX_LEVELS: usize = 2048;

/// Sign convention of the power-law family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSign {
    /// `(j+1)^{-2-δ}`: summable against `(j+1)`.
    Plus,
    /// `(j+1)^{-2+δ}`: weighted tail diverges; retained levels are a lower
    /// bound for the true potential.
    Minus,
}

/// Shape of a pinning sequence before scaling by an amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Single { level: usize },
    Power { delta: f64, sign: PowerSign },
    Exponential { delta: f64 },
    List { values: Vec<f64> },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Single { level } => write!(f, "single:j={level}"),
            Family::Power { delta, sign } => {
                let s = if *sign == PowerSign::Plus { '+' } else { '-' };
                write!(f, "power:delta={delta},sign={s}")
            }
            Family::Exponential { delta } => write!(f, "exp:delta={delta}"),
            Family::List { values } => write!(f, "list:{}", values.len()),
        }
    }
}

impl Family {
    fn validate(&self) -> Result<()> {
        match self {
            Family::Power { delta, .. } | Family::Exponential { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return param(format!("family exponent delta must be positive, got {delta}"));
                }
            }
            Family::List { values } => {
                if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return param(format!("potential values must be finite and >= 0, got {v}"));
                }
            }
            Family::Single { .. } => {}
        }
        Ok(())
    }

    /// Unscaled reference value `ε⁰_j`.
    pub fn base_value(&self, j: usize) -> f64 {
        let jp = (j + 1) as f64;
        match self {
            Family::Single { level } => {
                if j == *level {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Power { delta, sign } => match sign {
                PowerSign::Plus => jp.powf(-2.0 - delta),
                PowerSign::Minus => jp.powf(-2.0 + delta),
            },
            Family::Exponential { delta } => (-delta * j as f64).exp(),
            Family::List { values } => values.get(j).copied().unwrap_or(0.0),
        }
    }
}

/// A nonnegative pinning sequence with a certified bound on the weighted tail
/// `Σ_{j>j_max} (j+1) ε_j` of discarded levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinningPotential {
    eps: Vec<f64>,
    tail_bound: f64,
    family: Family,
    amplitude: f64,
    tail_tol_met: bool,
}

/// `Σ_{j≥n} (j+1) x^j = x^n((n+1) − n x)/(1−x)²`.
fn weighted_geometric_tail(x: f64, n: usize) -> f64 {
    let nf = n as f64;
    x.powf(nf) * ((nf + 1.0) - nf * x) / ((1.0 - x) * (1.0 - x))
}

impl PinningPotential {
    /// The identically-zero potential.
    pub fn zero() -> Self {
        PinningPotential {
            eps: vec![0.0],
            tail_bound: 0.0,
            family: Family::List { values: vec![0.0] },
            amplitude: 0.0,
            tail_tol_met: true,
        }
    }

    /// Explicit values `ε₀, ε₁, …` (no tail).
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        make_family(&Family::List { values }, 1.0, 0.0)
    }

    /// A single level `j` with strength `eps`.
    pub fn single(level: usize, eps: f64) -> Result<Self> {
        make_family(&Family::Single { level }, eps, 0.0)
    }

    pub fn eps(&self, j: usize) -> f64 {
        self.eps.get(j).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.eps
    }

    pub fn j_max(&self) -> usize {
        self.eps.len() - 1
    }

    /// Highest level carrying a positive value, if any.
    pub fn top_level(&self) -> Option<usize> {
        self.eps.iter().rposition(|&e| e > 0.0)
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Whether the requested weighted-tail tolerance was achieved within the
    /// level cap.
    pub fn tail_tol_met(&self) -> bool {
        self.tail_tol_met
    }

    pub fn is_zero(&self) -> bool {
        self.eps.iter().all(|&e| e == 0.0) && self.tail_bound == 0.0
    }

    pub fn max_eps(&self) -> f64 {
        self.eps.iter().copied().fold(0.0, f64::max)
    }

    /// Level of the largest value if it exceeds `log 2` — such a level
    /// localizes by itself. Values are kept as given.
    pub fn exceeds_log2(&self) -> Option<usize> {
        let (j, &e) = self
            .eps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        (e > std::f64::consts::LN_2).then_some(j)
    }

    /// The potential multiplied by `t ≥ 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return param(format!("scale factor must be finite and >= 0, got {t}"));
        }
        Ok(PinningPotential {
            eps: self.eps.iter().map(|e| e * t).collect(),
            tail_bound: self.tail_bound * t,
            family: self.family.clone(),
            amplitude: self.amplitude * t,
            tail_tol_met: self.tail_tol_met,
        })
    }

    pub fn describe(&self) -> String {
        match &self.family {
            Family::Single { level } => format!("single:j={level},eps={}", self.amplitude),
            Family::Power { delta, sign } => {
                let s = if *sign == PowerSign::Plus { '+' } else { '-' };
                format!("power:delta={delta},amp={},sign={s}", self.amplitude)
            }
            Family::Exponential { delta } => format!("exp:delta={delta},amp={}", self.amplitude),
            Family::List { .. } => {
                let v: Vec<String> = self.eps.iter().map(|e| e.to_string()).collect();
                format!("list:[{}]", v.join(" "))
            }
        }
    }
}

/// Build `ε_j = amplitude · ε⁰_j`, retaining levels until the weighted tail is
/// at most `weighted_tail_tol` (or [`MAX_LEVELS`] levels are kept).
pub fn make_family(family: &Family, amplitude: f64, weighted_tail_tol: f64) -> Result<PinningPotential> {
    make_family_capped(family, amplitude, weighted_tail_tol, MAX_LEVELS)
}

pub fn make_family_capped(
    family: &Family,
    amplitude: f64,
    weighted_tail_tol: f64,
    max_levels: usize,
) -> Result<PinningPotential> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return param(format!("amplitude must be finite and >= 0, got {amplitude}"));
    }
    if max_levels == 0 {
        return param("max_levels must be positive");
    }
    family.validate()?;
    let tol = weighted_tail_tol.max(0.0);
    let (levels, tail) = match family {
        Family::Single { level } => (level + 1, 0.0),
        Family::List { values } => (values.len().max(1), 0.0),
        Family::Exponential { delta } => {
            let x = (-delta).exp();
            let tail = |n: usize| amplitude * weighted_geometric_tail(x, n);
            let mut n = 1;
            while n < max_levels && tail(n) > tol {
                n += 1;
            }
            (n, tail(n))
        }
        Family::Power { delta, sign } => match sign {
            PowerSign::Plus => {
                // Σ_{j≥n}(j+1)^{-1-δ} ≤ n^{-δ}/δ for n ≥ 1.
                let tail = |n: usize| amplitude * (n as f64).powf(-delta) / delta;
                let n = if amplitude == 0.0 {
                    1
                } else if tol > 0.0 {
                    let need = (amplitude / (delta * tol)).powf(1.0 / delta).ceil();
                    if need >= max_levels as f64 {
                        max_levels
                    } else {
                        (need as usize).max(1)
                    }
                } else {
                    max_levels
                };
                (n, tail(n))
            }
            PowerSign::Minus => {
                let tail = if amplitude == 0.0 { 0.0 } else { f64::INFINITY };
                (if amplitude == 0.0 { 1 } else { max_levels }, tail)
            }
        },
    };
    let eps: Vec<f64> = (0..levels).map(|j| amplitude * family.base_value(j)).collect();
    Ok(PinningPotential {
        eps,
        tail_bound: tail,
        family: family.clone(),
        amplitude,
        tail_tol_met: tail <= tol,
    })
}

/// ρ with the interval induced by the discarded tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rho {
    pub value: f64,
    pub upper: f64,
}

/// `ρ = σ⁻² Σ_j (j+1) ε_j`.
pub fn rho(pot: &PinningPotential, sigma2: f64) -> Rho {
    let s: f64 = pot
        .eps
        .iter()
        .enumerate()
        .map(|(j, e)| (j + 1) as f64 * e)
        .sum();
    let value = s / sigma2;
    Rho {
        value,
        upper: value + pot.tail_bound / sigma2,
    }
}

/// One level of the decoupling: `ρ_j κ_j = ε_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelWeight {
    pub level: usize,
    pub weight: f64,
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoupling {
    pub b: f64,
    pub sigma2: f64,
    pub levels: Vec<LevelWeight>,
    /// `Σ_j ρ_j` over retained levels.
    pub total_weight: f64,
    /// Bound on the weight carried by discarded levels.
    pub tail_weight: f64,
}

impl Decoupling {
    /// Levels with positive weight.
    pub fn active(&self) -> impl Iterator<Item = &LevelWeight> {
        self.levels.iter().filter(|l| l.weight > 0.0)
    }
}

/// `ρ_j = (bσ²)⁻¹ (j+1) ε_j`, `κ_j = bσ²/(j+1)`.
pub fn decouple(pot: &PinningPotential, b: f64, sigma2: f64) -> Result<Decoupling> {
    if !(b.is_finite() && b > 0.0) {
        return param(format!("decoupling constant b must be positive, got {b}"));
    }
    if !(sigma2 > 0.0) {
        return param(format!("sigma2 must be positive, got {sigma2}"));
    }
    let bs = b * sigma2;
    let levels: Vec<LevelWeight> = pot
        .eps
        .iter()
        .enumerate()
        .map(|(j, &e)| LevelWeight {
            level: j,
            weight: (j + 1) as f64 * e / bs,
            strength: bs / (j + 1) as f64,
        })
        .collect();
    let total_weight = levels.iter().map(|l| l.weight).sum();
    Ok(Decoupling {
        b,
        sigma2,
        levels,
        total_weight,
        tail_weight: pot.tail_bound / bs,
    })
}

/// Upper summation limit of the localization condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumLimit {
    /// `j ≤ d/2` (random walks).
    HalfWidth,
    /// `j ≤ d` (lattice paths).
    FullWidth,
}

/// `(d+1)⁻¹ Σ_{j≤limit} (j+1)² ε_j`.
pub fn localization_lhs(pot: &PinningPotential, d: usize, limit: SumLimit) -> f64 {
    let top = match limit {
        SumLimit::HalfWidth => d / 2,
        SumLimit::FullWidth => d,
    };
    let s: f64 = (0..=top.min(pot.j_max()))
        .map(|j| ((j + 1) * (j + 1)) as f64 * pot.eps[j])
        .sum();
    s / (d + 1) as f64
}

/// Random-walk form of the localization condition (sum up to `d/2`).
pub fn theorem2_lhs(pot: &PinningPotential, d: usize) -> f64 {
    localization_lhs(pot, d, SumLimit::HalfWidth)
}
