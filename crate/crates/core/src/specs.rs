//! Parsing of the kernel and potential spec strings used on the command line.
//!
//! Kernels: `binomial:sigma2=<x>`, `sos:beta=<x>[,tail_tol=<y>]`,
//! `table:<path>` (lines `k p(k)` for `k ≥ 0`).
//!
//! Potentials: `single:j=<n>,eps=<x>`, `power:delta=<d>,amp=<a>[,sign=+|-]`,
//! `exp:delta=<d>,amp=<a>`, `list:<path>` (one value per line). The amplitude
//! may be omitted where only the family is needed.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{param, Error, Result};
use crate::kernels::{make_binomial, make_sos, make_table, WalkKernel};
use crate::potentials::{make_family, Family, PinningPotential, PowerSign};

/// Default SOS truncation tolerance.
pub const DEFAULT_SOS_TAIL_TOL: f64 = 1e-12;
/// Default weighted-tail tolerance for closed-form potential families.
pub const DEFAULT_WEIGHTED_TAIL_TOL: f64 = 1e-10;

fn split_spec(spec: &str) -> Result<(&str, &str)> {
    spec.split_once(':')
        .ok_or_else(|| Error::Parameter(format!("spec '{spec}' must have the form kind:args")))
}

fn parse_kv(args: &str) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for part in args.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("expected key=value, got '{part}'")))?;
        if m.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return param(format!("key '{k}' given twice"));
        }
    }
    Ok(m)
}

fn take_f64(m: &mut BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    m.remove(key)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::Parameter(format!("{key}='{v}' is not a number")))
        })
        .transpose()
}

fn require_f64(m: &mut BTreeMap<String, String>, key: &str, spec: &str) -> Result<f64> {
    take_f64(m, key)?.ok_or_else(|| Error::Parameter(format!("spec '{spec}' is missing {key}")))
}

fn no_leftovers(m: &BTreeMap<String, String>, spec: &str) -> Result<()> {
    match m.keys().next() {
        Some(k) => param(format!("unknown key '{k}' in spec '{spec}'")),
        None => Ok(()),
    }
}

fn read_numbers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Parameter(format!("'{t}' in {} is not a number", path.display())))
                })
                .collect()
        })
        .collect()
}

pub fn parse_kernel(spec: &str) -> Result<WalkKernel> {
    let (kind, args) = split_spec(spec)?;
    match kind {
        "binomial" => {
            let mut m = parse_kv(args)?;
            let s2 = require_f64(&mut m, "sigma2", spec)?;
            no_leftovers(&m, spec)?;
            make_binomial(s2)
        }
        "sos" => {
            let mut m = parse_kv(args)?;
            let beta = require_f64(&mut m, "beta", spec)?;
            let tol = take_f64(&mut m, "tail_tol")?.unwrap_or(DEFAULT_SOS_TAIL_TOL);
            no_leftovers(&m, spec)?;
            make_sos(beta, tol)
        }
        "table" => {
            let rows = read_numbers(Path::new(args))?;
            let mut entries = Vec::with_capacity(rows.len());
            for r in rows {
                if r.len() != 2 || r[0] < 0.0 || r[0].fract() != 0.0 {
                    return param(format!("kernel table rows must be 'k p' with integer k >= 0, got {r:?}"));
                }
                entries.push((r[0] as u64, r[1]));
            }
            make_table(&entries)
        }
        _ => param(format!("unknown kernel kind '{kind}'")),
    }
}

/// A potential family with an optional amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    pub family: Family,
    pub amplitude: Option<f64>,
}

impl PotentialSpec {
    pub fn build(&self, weighted_tail_tol: f64) -> Result<PinningPotential> {
        let amp = self
            .amplitude
            .ok_or_else(|| Error::Parameter("potential spec needs an amplitude".into()))?;
        make_family(&self.family, amp, weighted_tail_tol)
    }
}

pub fn parse_potential(spec: &str) -> Result<PotentialSpec> {
    let (kind, args) = split_spec(spec)?;
    match kind {
        "single" => {
            let mut m = parse_kv(args)?;
            let j = require_f64(&mut m, "j", spec)?;
            if j < 0.0 || j.fract() != 0.0 {
                return param(format!("level j must be a nonnegative integer, got {j}"));
            }
            let eps = take_f64(&mut m, "eps")?;
            no_leftovers(&m, spec)?;
            Ok(PotentialSpec {
                family: Family::Single { level: j as usize },
                amplitude: eps,
            })
        }
        "power" => {
            let mut m = parse_kv(args)?;
            let delta = require_f64(&mut m, "delta", spec)?;
            let amp = take_f64(&mut m, "amp")?;
            let sign = match m.remove("sign").as_deref() {
                None | Some("+") => PowerSign::Plus,
                Some("-") => PowerSign::Minus,
                Some(s) => return param(format!("sign must be + or -, got '{s}'")),
            };
            no_leftovers(&m, spec)?;
            Ok(PotentialSpec {
                family: Family::Power { delta, sign },
                amplitude: amp,
            })
        }
        "exp" => {
            let mut m = parse_kv(args)?;
            let delta = require_f64(&mut m, "delta", spec)?;
            let amp = take_f64(&mut m, "amp")?;
            no_leftovers(&m, spec)?;
            Ok(PotentialSpec {
                family: Family::Exponential { delta },
                amplitude: amp,
            })
        }
        "list" => {
            let rows = read_numbers(Path::new(args))?;
            let values: Vec<f64> = rows.into_iter().flatten().collect();
            Ok(PotentialSpec {
                family: Family::List { values },
                amplitude: Some(1.0),
            })
        }
        _ => param(format!("unknown potential kind '{kind}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn kernels() {
        assert_eq!(parse_kernel("binomial:sigma2=0.5").unwrap().p(1), 0.25);
        let k = parse_kernel("sos:beta=3,tail_tol=1e-9").unwrap();
        assert!(k.truncation_defect() < 1e-9);
        assert!(parse_kernel("binomial:sigma2=0.7").is_err());
        assert!(parse_kernel("binomial:s=0.1").is_err());
        assert!(parse_kernel("gauss:x=1").is_err());
        assert!(parse_kernel("binomial").is_err());
    }

    #[test]
    fn table_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# k p\n0 0.8\n1 0.1").unwrap();
        let k = parse_kernel(&format!("table:{}", f.path().display())).unwrap();
        assert!((k.sigma2() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn potentials() {
        let p = parse_potential("single:j=2,eps=0.1").unwrap();
        assert_eq!(p.family, Family::Single { level: 2 });
        assert_eq!(p.build(0.0).unwrap().eps(2), 0.1);
        let p = parse_potential("power:delta=0.5,amp=1,sign=-").unwrap();
        assert!(matches!(p.family, Family::Power { sign: PowerSign::Minus, .. }));
        let p = parse_potential("exp:delta=1").unwrap();
        assert_eq!(p.amplitude, None);
        assert!(p.build(1e-6).is_err());
        assert!(parse_potential("power:delta=0,amp=1").unwrap().build(1e-6).is_err());
        assert!(parse_potential("single:j=1.5,eps=1").is_err());
    }
}
