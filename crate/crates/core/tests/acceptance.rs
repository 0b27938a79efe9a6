//! Quantitative acceptance checks. Runs every check, prints one PASS/FAIL
//! line each, and exits non-zero if any failed.
//!
//! `cargo test -p wetting-core --test acceptance` (optionally followed by
//! `-- <substring>` to run a subset).

use std::panic;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wetting_core::certify::{
    bootstrap_profile, free_energy_crossing, l1, wetting_threshold, ThresholdOptions, MIDPOINT_CONSTANT,
};
use wetting_core::kernels::make_binomial;
use wetting_core::potentials::{decouple, make_family, Family, PowerSign};
use wetting_core::rw_oracle::{clt_band, oracle_partitions, PathEnumeration};
use wetting_core::saw::{
    excess_delta, excess_length, minimal_partition_identity, permutation_sum, regularity_stats, saw_partition,
    Constraint,
};
use wetting_core::spectral::{scan_widths, test_function_bound};
use wetting_core::transfer::{log_partition_series, midpoint_probs, TransferConfig};
use wetting_core::{Execution, PinningPotential};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

const GRID_SIGMA2: [f64; 3] = [0.1, 0.25, 0.5];
const GRID_LEVELS: [usize; 4] = [0, 1, 2, 4];

fn oracle_equivalence() -> Outcome {
    let mixed = [
        PinningPotential::from_values(vec![0.3, 0.1, 0.05]).map_err(e)?,
        make_family(&Family::Power { delta: 0.5, sign: PowerSign::Plus }, 0.2, 1e-10).map_err(e)?,
        make_family(&Family::Exponential { delta: 0.7 }, 0.4, 1e-10).map_err(e)?,
    ];
    let singles = [
        PinningPotential::single(0, 0.4).map_err(e)?,
        PinningPotential::single(1, 0.25).map_err(e)?,
    ];
    let cfg = TransferConfig::default();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for s2 in GRID_SIGMA2 {
        let k = make_binomial(s2).map_err(e)?;
        for wall in [None, Some(0), Some(1), Some(2), Some(3)] {
            let mut pots: Vec<Option<&PinningPotential>> = vec![None];
            pots.extend(singles.iter().map(Some));
            if wall.is_some() {
                pots.extend(mixed.iter().map(Some));
            }
            let series: Vec<_> = pots
                .iter()
                .map(|p| log_partition_series(&k, 14, wall, *p, &cfg))
                .collect::<Result<_, _>>()
                .map_err(e)?;
            for l in 1..=14 {
                let en = PathEnumeration::new(&k, l, wall).map_err(e)?;
                let oracle = oracle_partitions(&en, &pots).map_err(e)?;
                for (o, s) in oracle.iter().zip(&series) {
                    let t = s.at(l).exp();
                    let rel = (t - o.value).abs() / o.value;
                    ensure(rel <= 1e-12, || {
                        format!("sigma2={s2} wall={wall:?} L={l}: transfer {t:e} vs oracle {:e}", o.value)
                    })?;
                    worst = worst.max(rel);
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} values, max relative error {worst:.2e}"))
}

fn clt_sandwich() -> Outcome {
    let target = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut notes = Vec::new();
    for s2 in [0.1, 0.5] {
        let k = make_binomial(s2).map_err(e)?;
        let from = (100.0 / s2).ceil() as usize;
        let lengths: Vec<usize> = (from..=1 << 14).collect();
        let band = clt_band(&k, &lengths).map_err(e)?;
        let (lo, hi) = band.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &(_, v)| (a.min(v), b.max(v)));
        ensure(lo >= 0.2 && hi <= 0.6, || format!("sigma2={s2}: band [{lo}, {hi}] leaves [0.2, 0.6]"))?;
        let last = band.last().unwrap().1;
        ensure((last - target).abs() <= 0.05, || format!("sigma2={s2}: value {last} at L=2^14"))?;
        notes.push(format!("s2={s2}: [{lo:.4}, {hi:.4}], end {last:.5}"));
    }
    Ok(notes.join("; "))
}

fn midpoint_bound() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for s2 in GRID_SIGMA2 {
        let k = make_binomial(s2).map_err(e)?;
        for j in GRID_LEVELS {
            let base = (8.0 * ((j + 1) * (j + 1)) as f64 / s2).ceil() as usize;
            let shipped = l1(MIDPOINT_CONSTANT, j, s2);
            let ls: Vec<usize> = [1, 2, 4].iter().flat_map(|m| [base * m, shipped * m]).collect();
            let probs = midpoint_probs(&k, j, &ls).map_err(e)?;
            for (l, p) in ls.iter().zip(&probs) {
                ensure(*p <= 0.75, || format!("sigma2={s2} j={j} L={l}: midpoint probability {p}"))?;
                worst = worst.max(*p);
                count += 1;
            }
        }
    }
    Ok(format!("C={MIDPOINT_CONSTANT}, {count} points, max {worst:.4}"))
}

fn pinned_ratio() -> Outcome {
    let cfg = TransferConfig::default();
    let l_max = 1 << 12;
    let mut worst = 0.0f64;
    for s2 in GRID_SIGMA2 {
        let k = make_binomial(s2).map_err(e)?;
        let free = log_partition_series(&k, l_max, None, None, &cfg).map_err(e)?;
        for j in GRID_LEVELS {
            let eps = 0.1 * s2 / (j + 1) as f64;
            let pot = PinningPotential::single(0, eps).map_err(e)?;
            let pinned = log_partition_series(&k, l_max, Some(j), Some(&pot), &cfg).map_err(e)?;
            for l in 1..=l_max {
                let r = (pinned.at(l) - free.at(l)).exp();
                ensure(r <= 2.0, || format!("sigma2={s2} j={j} L={l}: ratio {r}"))?;
                worst = worst.max(r);
            }
        }
    }
    Ok(format!("max ratio {worst:.4}"))
}

fn spectral_growth() -> Outcome {
    let cfg = TransferConfig::default();
    let l = 1 << 12;
    let mut notes = Vec::new();
    for s2 in GRID_SIGMA2 {
        let k = make_binomial(s2).map_err(e)?;
        let free = log_partition_series(&k, l, None, None, &cfg).map_err(e)?.at(l);
        for j in GRID_LEVELS {
            let mut found = None;
            for a in 1..=30 {
                let eps = a as f64 * s2 / (j + 1) as f64;
                let pot = PinningPotential::single(j, eps).map_err(e)?;
                let q = scan_widths(&pot, 4096)
                    .into_iter()
                    .map(|d| test_function_bound(&k, &pot, d).quotient)
                    .fold(0.0, f64::max);
                if q > 1.0 {
                    found = Some((a, pot, q));
                    break;
                }
            }
            let (a, pot, q) = found.ok_or_else(|| format!("sigma2={s2} j={j}: no a <= 30 with quotient > 1"))?;
            let pinned = log_partition_series(&k, l, Some(0), Some(&pot), &cfg).map_err(e)?.at(l);
            let growth = (pinned - free) / l as f64;
            ensure(growth >= q.ln() - 0.01, || {
                format!("sigma2={s2} j={j} a={a}: growth {growth} < log q - 0.01 = {}", q.ln() - 0.01)
            })?;
            notes.push(format!("({s2},{j}):a={a}"));
        }
    }
    Ok(notes.join(" "))
}

fn decoupling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut worst_slack = f64::INFINITY;
    for trial in 0..20 {
        let s2 = *GRID_SIGMA2.choose(&mut rng).unwrap();
        let k = make_binomial(s2).map_err(e)?;
        let levels = rng.gen_range(1..=4);
        let values: Vec<f64> = (0..levels).map(|_| rng.gen_range(0.0..0.5)).collect();
        let pot = PinningPotential::from_values(values.clone()).map_err(e)?;
        // b chosen so that Σρ_j = 1
        let b: f64 = values.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum::<f64>() / s2;
        let dec = decouple(&pot, b, s2).map_err(e)?;
        ensure((dec.total_weight - 1.0).abs() < 1e-12, || format!("trial {trial}: weights sum to {}", dec.total_weight))?;
        let parts: Vec<(f64, PinningPotential)> = dec
            .active()
            .map(|w| Ok((w.weight, PinningPotential::single(w.level, w.strength)?)))
            .collect::<Result<_, wetting_core::Error>>()
            .map_err(e)?;
        let mut pots: Vec<Option<&PinningPotential>> = vec![Some(&pot)];
        pots.extend(parts.iter().map(|(_, p)| Some(p)));
        for l in 1..=12 {
            let en = PathEnumeration::new(&k, l, Some(0)).map_err(e)?;
            let vals = oracle_partitions(&en, &pots).map_err(e)?;
            let lhs = vals[0];
            let (rhs, rhs_err) = parts
                .iter()
                .zip(&vals[1..])
                .fold((0.0, 0.0), |(s, err), ((w, _), v)| (s + w * v.value, err + w * v.error_bound));
            ensure(lhs.value - lhs.error_bound <= rhs + rhs_err, || {
                format!("trial {trial} L={l}: {} > {rhs}", lhs.value)
            })?;
            worst_slack = worst_slack.min((rhs - lhs.value) / rhs);
            let t = log_partition_series(&k, l, Some(0), Some(&pot), &TransferConfig::default())
                .map_err(e)?
                .at(l)
                .exp();
            ensure((t - lhs.value).abs() <= 1e-12 * lhs.value, || {
                format!("trial {trial} L={l}: transfer {t} vs oracle {}", lhs.value)
            })?;
        }
    }
    Ok(format!("20 potentials x L<=12, min relative slack {worst_slack:.3e}"))
}

fn threshold_consistency() -> Outcome {
    let fam = Family::Single { level: 0 };
    let opts = ThresholdOptions::default();
    let mut brackets = Vec::new();
    let mut notes = Vec::new();
    for s2 in [0.1, 0.5] {
        let k = make_binomial(s2).map_err(e)?;
        let t = wetting_threshold(&k, &fam, 0.1 * s2, 2.0 * s2, 0.01, &opts).map_err(e)?;
        ensure(!t.inconsistent, || format!("sigma2={s2}: inconsistent verdicts"))?;
        let (c_lo, c_hi) = free_energy_crossing(&k, &fam, 0.1 * s2, 2.0 * s2, 1e-4, 2048).map_err(e)?;
        ensure(t.rho_lo <= c_hi && c_lo <= t.rho_hi, || {
            format!("sigma2={s2}: threshold [{}, {}] misses crossing [{c_lo}, {c_hi}]", t.rho_lo, t.rho_hi)
        })?;
        notes.push(format!(
            "s2={s2}: rho in [{:.4}, {:.4}], crossing [{c_lo:.4}, {c_hi:.4}]",
            t.rho_lo, t.rho_hi
        ));
        brackets.push((t.rho_lo, t.rho_hi));
    }
    let lo = brackets.iter().map(|b| b.0).fold(0.0, f64::max);
    let hi = brackets.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    ensure(lo <= hi, || format!("brackets have no common point: {brackets:?}"))?;
    notes.push(format!("common [{lo:.4}, {hi:.4}]"));
    Ok(notes.join("; "))
}

fn saw_identity() -> Outcome {
    let mut widest = 0.0f64;
    for l in [2, 4, 6, 8] {
        for beta in [2.5, 3.0, 4.0] {
            let id = minimal_partition_identity(l, beta).map_err(e)?;
            ensure(id.consistent, || format!("L={l} beta={beta}: {:?} vs {:?}", id.left, id.right))?;
            if beta == 3.0 {
                for side in [id.left, id.right] {
                    let rel = side.width() / side.mid();
                    ensure(rel < 1e-6, || format!("L={l}: certificate width {rel:e} of the value"))?;
                    widest = widest.max(rel);
                }
            }
        }
    }
    Ok(format!("12 cases consistent, widest relative certificate at beta=3: {widest:.2e}"))
}

fn saw_pinned_bound() -> Outcome {
    let mut worst = 0.0f64;
    for beta in [2.5, 3.0] {
        let values = (0..64).map(|j| 0.1 * (-beta - j as f64).exp()).collect();
        let pot = PinningPotential::from_values(values).map_err(e)?;
        for l in 2..=8 {
            let cap = 8;
            let pinned =
                saw_partition(l, beta, cap, Constraint::Wall { depth: 0 }, Some(&pot), false, Execution::default())
                    .map_err(e)?;
            let free = saw_partition(l, beta, cap, Constraint::None, None, false, Execution::default()).map_err(e)?;
            let (p, z) = (pinned.interval(), free.interval());
            ensure(p.hi <= 4.0 * z.lo, || format!("L={l} beta={beta}: {p:?} vs 4 x {z:?}"))?;
            worst = worst.max(p.hi / z.lo);
        }
    }
    Ok(format!("max certified ratio {worst:.4}"))
}

fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    // Heap's algorithm
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    f(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn permutation_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0010);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let c = [2.0, 3.0, 4.0][trial % 3];
        let n = rng.gen_range(1..=8);
        let span = rng.gen_range(n as i64 + 1..=n as i64 + 30);
        let mut pool: Vec<i64> = (1..span).collect();
        pool.shuffle(&mut rng);
        let mut pts: Vec<i64> = pool[..n].to_vec();
        pts.sort_unstable();
        let mut direct = 0.0;
        let mut err = None;
        for_each_permutation(n, |perm| {
            let ell = excess_length(&pts, perm, span).unwrap();
            let identity = perm.iter().enumerate().all(|(i, &p)| i == p);
            if ell < 0 || (ell == 0) != identity {
                err.get_or_insert(format!("trial {trial}: l({perm:?}) = {ell} for {pts:?}"));
            }
            direct += (-c * ell as f64).exp();
        });
        if let Some(m) = err {
            return Err(m);
        }
        let sum = permutation_sum(&pts, span, c, Execution::default()).map_err(e)?;
        ensure((sum - direct).abs() <= 1e-12 * direct, || format!("trial {trial}: {sum} vs {direct}"))?;
        let bound = (1.0 + excess_delta(c)).powi(n as i32);
        ensure(sum <= bound, || format!("trial {trial} c={c} n={n}: {sum} > {bound}"))?;
        worst = worst.max(sum / bound);
    }
    Ok(format!("100 configurations, max sum/bound {worst:.4}"))
}

fn regularity_trends() -> Outcome {
    let cap = 10;
    let hot = regularity_stats(6, 2.5, cap, 0.1, Execution::default()).map_err(e)?;
    let cold = regularity_stats(6, 4.0, cap, 0.1, Execution::default()).map_err(e)?;
    let pairs = [
        ("non-regular at u=3", hot.nonregular_at(3), cold.nonregular_at(3)),
        ("first edge vertical", hot.first_edge_vertical, cold.first_edge_vertical),
        ("E[exp(0.1 N_ext)]-1", hot.ext_moment_minus_one, cold.ext_moment_minus_one),
    ];
    let mut notes = Vec::new();
    for (name, h, c) in pairs {
        ensure(c.hi < h.lo, || format!("{name}: beta=4 {c:?} not below beta=2.5 {h:?}"))?;
        notes.push(format!("{name}: {:.3e} -> {:.3e}", h.mid(), c.mid()));
    }
    Ok(notes.join("; "))
}

fn bootstrap_stability() -> Outcome {
    let s2 = 0.25;
    let k = make_binomial(s2).map_err(e)?;
    let mut notes = Vec::new();
    for j in 0..=2 {
        let eps = 0.1 * s2 / (j + 1) as f64;
        let from = l1(MIDPOINT_CONSTANT, j, s2);
        let prof = bootstrap_profile(&k, j, eps, from, 1 << 12, &TransferConfig::default()).map_err(e)?;
        let g = prof.final_doubling_growth();
        ensure(g < 0.01, || format!("j={j}: running max grew {:.3}% over the last doubling", 100.0 * g))?;
        notes.push(format!("j={j}: {:.4}%", 100.0 * g));
    }
    Ok(notes.join(", "))
}

struct Check {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let checks = [
        Check { id: 1, name: "oracle equivalence", budget: secs(60), run: oracle_equivalence },
        Check { id: 2, name: "local CLT sandwich", budget: secs(30), run: clt_sandwich },
        Check { id: 3, name: "midpoint bound", budget: secs(120), run: midpoint_bound },
        Check { id: 4, name: "pinned/free ratio <= 2", budget: secs(300), run: pinned_ratio },
        Check { id: 5, name: "spectral certificate growth", budget: secs(300), run: spectral_growth },
        Check { id: 6, name: "decoupling inequality", budget: secs(60), run: decoupling },
        Check { id: 7, name: "threshold bracketing", budget: secs(600), run: threshold_consistency },
        Check { id: 8, name: "SAW/SOS identity", budget: secs(120), run: saw_identity },
        Check { id: 9, name: "SAW pinned bound <= 4Z", budget: secs(300), run: saw_pinned_bound },
        Check { id: 10, name: "permutation bound", budget: secs(60), run: permutation_bound },
        Check { id: 11, name: "regularity trends", budget: secs(120), run: regularity_trends },
        Check { id: 12, name: "bootstrap stability", budget: secs(120), run: bootstrap_stability },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for c in &checks {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(c.run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(msg) if took > c.budget => Err(format!("{msg} (over the {}s budget)", c.budget.as_secs())),
            r => r,
        };
        match result {
            Ok(msg) => println!("PASS [{:>2}] {} ({:.1}s): {msg}", c.id, c.name, took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{:>2}] {} ({:.1}s): {msg}", c.id, c.name, took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
