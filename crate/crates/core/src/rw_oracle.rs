//! Brute-force enumeration of random-walk bridges: the reference against
//! which the transfer engine is tested. It refuses instances beyond its cap
//! instead of approximating.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::WalkKernel;
use crate::numeric::CompensatedSum;
use crate::potentials::PinningPotential;
use crate::transfer::{log_partition_series, TransferConfig};

/// Largest length enumerated for a given stencil: 14 for nearest-neighbour
/// kernels, correspondingly fewer for wider stencils (about `3^14` paths).
pub fn default_cap(kernel: &WalkKernel) -> usize {
    let branches = (2 * kernel.max_step() + 1) as f64;
    ((14.0 * 3f64.ln() / branches.ln()).floor() as usize).max(1)
}

/// How path weights are accumulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Accumulation {
    /// All `p(k)·2^m` are integers: weights are summed exactly as integers
    /// over `2^{mL}`.
    ExactDyadic { m: u32 },
    /// Neumaier-compensated floating-point sums with an error bound.
    Compensated,
}

/// An enumeration request.
#[derive(Clone, Debug)]
pub struct PathEnumeration<'a> {
    kernel: &'a WalkKernel,
    length: usize,
    wall: Option<usize>,
    mode: Accumulation,
}

fn dyadic_exponent(kernel: &WalkKernel, length: usize) -> Option<u32> {
    (0..=30u32).find(|&m| {
        let scale = (1u64 << m) as f64;
        kernel.probs().iter().all(|p| {
            let v = p * scale;
            v.fract() == 0.0 && v < 9.0e15
        })
    })
    .filter(|&m| (m as usize) * length <= 120)
}

impl<'a> PathEnumeration<'a> {
    pub fn new(kernel: &'a WalkKernel, length: usize, wall: Option<usize>) -> Result<Self> {
        Self::with_cap(kernel, length, wall, default_cap(kernel))
    }

    pub fn with_cap(kernel: &'a WalkKernel, length: usize, wall: Option<usize>, cap: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::Parameter("bridge length must be at least 1".into()));
        }
        if length > cap {
            return Err(Error::Refused(format!(
                "oracle enumeration capped at L={cap} for stencil width {}, requested L={length}",
                kernel.max_step()
            )));
        }
        let mode = match dyadic_exponent(kernel, length) {
            Some(m) => Accumulation::ExactDyadic { m },
            None => Accumulation::Compensated,
        };
        Ok(PathEnumeration {
            kernel,
            length,
            wall,
            mode,
        })
    }

    pub fn mode(&self) -> Accumulation {
        self.mode
    }

    /// Calls `visit` with the heights `γ_0..=γ_L` of every admissible bridge,
    /// in lexicographic order of step sequences.
    pub fn for_each(&self, mut visit: impl FnMut(&[i64])) {
        let k = self.kernel.max_step() as i64;
        let steps: Vec<i64> = (-k..=k).filter(|&s| self.kernel.p(s) > 0.0).collect();
        let floor = self.wall.map_or(i64::MIN, |j| -(j as i64));
        let l = self.length;
        let mut path = vec![0i64; l + 1];
        // iterative DFS over step indices
        let mut choice = vec![0usize; l + 1];
        let mut t = 0usize;
        loop {
            if t == l {
                if path[l] == 0 {
                    visit(&path);
                }
                // backtrack
                if t == 0 {
                    return;
                }
                t -= 1;
                choice[t] += 1;
                continue;
            }
            if choice[t] >= steps.len() {
                if t == 0 {
                    return;
                }
                choice[t] = 0;
                t -= 1;
                choice[t] += 1;
                continue;
            }
            let h = path[t] + steps[choice[t]];
            let remaining = (l - t - 1) as i64;
            if h >= floor && h.abs() <= k * remaining {
                path[t + 1] = h;
                t += 1;
                choice[t] = 0;
            } else {
                choice[t] += 1;
            }
        }
    }

    /// Bridge weights grouped by contact vector `(N_0, N_1, …)` at interior
    /// times.
    fn classes(&self) -> (BTreeMap<Vec<u16>, ClassWeight>, u64) {
        let mut map: BTreeMap<Vec<u16>, ClassWeight> = BTreeMap::new();
        let mut count = 0u64;
        let levels = self.kernel.max_step() * (self.length / 2) + 1;
        let mut contacts = vec![0u16; levels];
        let kernel = self.kernel;
        let mode = self.mode;
        let scale = match mode {
            Accumulation::ExactDyadic { m } => (1u64 << m) as f64,
            Accumulation::Compensated => 1.0,
        };
        self.for_each(|path| {
            count += 1;
            contacts.iter_mut().for_each(|c| *c = 0);
            for &h in &path[1..path.len() - 1] {
                if h >= 0 {
                    contacts[h as usize] += 1;
                }
            }
            let entry = map.entry(contacts.clone()).or_insert_with(|| match mode {
                Accumulation::ExactDyadic { .. } => ClassWeight::Exact(0),
                Accumulation::Compensated => ClassWeight::Float(CompensatedSum::default()),
            });
            match entry {
                ClassWeight::Exact(n) => {
                    let mut prod: u128 = 1;
                    for w in path.windows(2) {
                        prod *= (kernel.p(w[1] - w[0]) * scale) as u128;
                    }
                    *n += prod;
                }
                ClassWeight::Float(s) => {
                    let mut prod = 1.0;
                    for w in path.windows(2) {
                        prod *= kernel.p(w[1] - w[0]);
                    }
                    s.add(prod);
                }
            }
        });
        (map, count)
    }
}

#[derive(Clone, Debug)]
enum ClassWeight {
    Exact(u128),
    Float(CompensatedSum),
}

/// Value with a bound on its absolute floating-point error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub error_bound: f64,
    pub exact_accumulation: bool,
    pub paths: u64,
}

/// `Z` (free, walled, pinned, or with a full potential) by enumeration.
pub fn oracle_partition(
    kernel: &WalkKernel,
    length: usize,
    wall: Option<usize>,
    pot: Option<&PinningPotential>,
) -> Result<OracleValue> {
    let en = PathEnumeration::new(kernel, length, wall)?;
    oracle_partition_of(&en, pot)
}

pub fn oracle_partition_of(en: &PathEnumeration<'_>, pot: Option<&PinningPotential>) -> Result<OracleValue> {
    Ok(oracle_partitions(en, &[pot])?.remove(0))
}

/// Several potentials over one enumeration; the paths are walked once.
pub fn oracle_partitions(en: &PathEnumeration<'_>, pots: &[Option<&PinningPotential>]) -> Result<Vec<OracleValue>> {
    let (classes, paths) = en.classes();
    let l = en.length as i32;
    let classes: Vec<(&Vec<u16>, f64, f64)> = classes
        .iter()
        .map(|(contacts, w)| {
            let (base, rel) = match (w, en.mode) {
                (ClassWeight::Exact(n), Accumulation::ExactDyadic { m }) => {
                    // one rounding for the integer, exact power-of-two scaling
                    ((*n as f64) * 2f64.powi(-(m as i32) * l), f64::EPSILON)
                }
                (ClassWeight::Float(s), _) => (
                    s.value(),
                    (l as f64 + 2.0) * f64::EPSILON + s.rounding_bound() / s.value().abs().max(f64::MIN_POSITIVE),
                ),
                _ => unreachable!("accumulator matches mode"),
            };
            (contacts, base, rel)
        })
        .collect();
    Ok(pots
        .iter()
        .map(|pot| {
            let mut total = CompensatedSum::default();
            let mut term_error = 0.0;
            for &(contacts, base, rel) in &classes {
                let phi: f64 = contacts
                    .iter()
                    .enumerate()
                    .map(|(h, &c)| pot.map_or(0.0, |p| p.eps(h)) * c as f64)
                    .sum();
                let term = base * phi.exp();
                // exp() and the product add a few ulps each
                term_error += term.abs() * (rel + 4.0 * f64::EPSILON * (1.0 + phi.abs()));
                total.add(term);
            }
            OracleValue {
                value: total.value(),
                error_bound: term_error + total.rounding_bound(),
                exact_accumulation: matches!(en.mode, Accumulation::ExactDyadic { .. }),
                paths,
            }
        })
        .collect())
}

/// Number of admissible bridges.
pub fn path_count(kernel: &WalkKernel, length: usize, wall: Option<usize>) -> Result<u64> {
    let en = PathEnumeration::new(kernel, length, wall)?;
    let mut n = 0u64;
    en.for_each(|_| n += 1);
    Ok(n)
}

/// Law of `N_level` (interior visits at height `level`) under the bridge
/// measure; entry `n` is `P(N = n)`.
pub fn oracle_contact_distribution(
    kernel: &WalkKernel,
    length: usize,
    wall: Option<usize>,
    level: usize,
) -> Result<Vec<f64>> {
    let en = PathEnumeration::new(kernel, length, wall)?;
    let mut sums: Vec<CompensatedSum> = vec![CompensatedSum::default(); length];
    en.for_each(|path| {
        let n = path[1..path.len() - 1].iter().filter(|&&h| h == level as i64).count();
        let w: f64 = path.windows(2).map(|s| kernel.p(s[1] - s[0])).product();
        sums[n].add(w);
    });
    let z: f64 = sums.iter().map(CompensatedSum::value).sum();
    let mut pmf: Vec<f64> = sums.iter().map(|s| s.value() / z).collect();
    while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
        pmf.pop();
    }
    Ok(pmf)
}

/// `P_{0,L}(γ_m ≥ −j, γ_{m+1} ≥ −j)` with `m = ⌊L/2⌋`, by enumeration.
pub fn oracle_midpoint_prob(kernel: &WalkKernel, length: usize, j: usize) -> Result<f64> {
    if length < 2 {
        return Err(Error::Parameter("midpoint probability needs L >= 2".into()));
    }
    let en = PathEnumeration::new(kernel, length, None)?;
    let m = length / 2;
    let floor = -(j as i64);
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    en.for_each(|path| {
        let w: f64 = path.windows(2).map(|s| kernel.p(s[1] - s[0])).product();
        den.add(w);
        if path[m] >= floor && path[m + 1] >= floor {
            num.add(w);
        }
    });
    Ok(num.value() / den.value())
}

/// `(L, √(σ²L)·Z_{0,L})`: enumeration up to the oracle cap, transfer above.
pub fn clt_band(kernel: &WalkKernel, lengths: &[usize]) -> Result<Vec<(usize, f64)>> {
    let cap = default_cap(kernel);
    let big = lengths.iter().copied().filter(|&l| l > cap).max();
    let series = match big {
        Some(l) => Some(log_partition_series(kernel, l, None, None, &TransferConfig::default())?),
        None => None,
    };
    lengths
        .iter()
        .map(|&l| {
            if l == 0 {
                return Err(Error::Parameter("length must be at least 1".into()));
            }
            let z = if l <= cap {
                oracle_partition(kernel, l, None, None)?.value
            } else {
                series.as_ref().expect("series computed").at(l).exp()
            };
            Ok((l, (kernel.sigma2() * l as f64).sqrt() * z))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_binomial, make_sos};

    #[test]
    fn two_step_values() {
        let k = make_binomial(0.5).unwrap();
        let free = oracle_partition(&k, 2, None, None).unwrap();
        assert_eq!(free.value, 0.375);
        assert!(free.exact_accumulation);
        assert_eq!(free.paths, 3);
        assert_eq!(oracle_partition(&k, 2, Some(0), None).unwrap().value, 0.3125);
        for s2 in [0.1, 0.5] {
            let k = make_binomial(s2).unwrap();
            assert!((oracle_partition(&k, 1, None, None).unwrap().value - k.p(0)).abs() < 1e-16);
        }
    }

    #[test]
    fn refuses_beyond_cap() {
        let k = make_binomial(0.5).unwrap();
        assert!(matches!(oracle_partition(&k, 15, None, None), Err(Error::Refused(_))));
        let wide = make_sos(2.0, 1e-3).unwrap();
        assert!(default_cap(&wide) < 14);
    }

    #[test]
    fn contact_distribution_two_steps() {
        let k = make_binomial(0.5).unwrap();
        let pmf = oracle_contact_distribution(&k, 2, Some(0), 0).unwrap();
        assert!((pmf[1] - 0.8).abs() < 1e-15);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let unreachable = oracle_contact_distribution(&k, 6, Some(0), 4).unwrap();
        assert_eq!(unreachable, vec![1.0]);
    }

    #[test]
    fn compensated_mode_for_non_dyadic() {
        let k = make_binomial(0.1).unwrap();
        let en = PathEnumeration::new(&k, 6, None).unwrap();
        assert_eq!(en.mode(), Accumulation::Compensated);
        let v = oracle_partition_of(&en, None).unwrap();
        assert!(v.error_bound < 1e-13);
    }
}
