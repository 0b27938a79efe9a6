use serde::Serialize;

use wetting_core::certify::{
    delocalization_at, delocalization_certificate, free_energy_crossing, phase_scan, wetting_threshold, Certificate,
    Coverage, InductionOptions, PhaseRow, ScanOptions, ScanPoint, ThresholdOptions, Verdict, MIDPOINT_CONSTANT,
};
use wetting_core::kernels::{validate_kernel, WalkKernel};
use wetting_core::potentials::{make_family, rho, Family};
use wetting_core::rw_oracle::{oracle_partitions, PathEnumeration};
use wetting_core::saw::{enumerate_saw_with, minimal_partition_identity_with, Constraint, LatticePath, Vertex};
use wetting_core::spectral::{localization_certificate_with, LocalizationOptions};
use wetting_core::specs::{parse_kernel, parse_potential, DEFAULT_WEIGHTED_TAIL_TOL};
use wetting_core::transfer::{free_energy_with, log_partition_series, FreeEnergy, FreeEnergyOptions, PartitionSeries, TransferConfig};
use wetting_core::{Error, Execution, PinningPotential};

use crate::args::*;
use crate::cache;
use crate::error::{CliError, CliResult};
use crate::output::Sink;

/// Outcome of a successful run: text for stdout and any flagged findings.
#[derive(Default)]
pub struct Report {
    pub stdout: String,
    pub flags: Vec<String>,
}

pub struct Ctx<'a> {
    pub sink: &'a mut Sink,
    pub exec: Execution,
    pub deterministic: bool,
}

pub fn dispatch(cmd: &Command, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    match cmd {
        Command::FreeEnergy(a) => free_energy(a, ctx),
        Command::PhaseScan(a) => scan(a, ctx),
        Command::CertifyDeloc(a) => certify_deloc(a, ctx),
        Command::CertifyLoc(a) => certify_loc(a, ctx),
        Command::Threshold(a) => threshold(a, ctx),
        Command::VerifyClt(a) => verify_clt(a, ctx),
        Command::SawEnumerate(a) => saw_enumerate(a, ctx),
        Command::SawVerify(a) => saw_verify(a, ctx),
        Command::OracleCheck(a) => oracle_check(a, ctx),
    }
}

fn potential(spec: &str) -> CliResult<PinningPotential> {
    Ok(parse_potential(spec)?.build(DEFAULT_WEIGHTED_TAIL_TOL)?)
}

fn family(spec: &str) -> CliResult<Family> {
    Ok(parse_potential(spec)?.family)
}

/// `log Z` series, memoized under `WETTING_LAB_CACHE`.
fn cached_series(
    kernel: &WalkKernel,
    l_max: usize,
    wall: Option<usize>,
    pot: Option<&PinningPotential>,
) -> CliResult<PartitionSeries> {
    let cfg = TransferConfig::default();
    let key = (kernel.probs(), l_max, wall, pot.map(|p| p.values()), &cfg);
    cache::memo("log-partition-series", &key, || {
        Ok(log_partition_series(kernel, l_max, wall, pot, &cfg)?)
    })
}

#[derive(Serialize)]
struct FreeEnergyRow<'a> {
    kernel: &'a str,
    sigma2: f64,
    potential: &'a str,
    rho: f64,
    f: f64,
    uncertainty: f64,
    lambda_max: f64,
    h_max: usize,
    cross_check: f64,
    cross_length: usize,
    gap: f64,
    flagged: bool,
    stick_bound: f64,
    eps_above_log2: bool,
    c0: f64,
    kernel_in_class: bool,
}

fn free_energy(a: &FreeEnergyArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let k = parse_kernel(&a.kernel)?;
    let pot = potential(&a.potential)?;
    if !(a.c0 > 0.0 && a.c0 <= 1.0) {
        return Err(CliError::Usage(format!("--c0 must lie in (0,1], got {}", a.c0)));
    }
    let membership = validate_kernel(&k, a.c0);
    let opts = FreeEnergyOptions {
        tol: a.tol,
        cross_length: a.cross_length,
        max_window: a.max_window,
        ..Default::default()
    };
    let fe: FreeEnergy = cache::memo("free-energy", &(k.probs(), pot.values(), &opts), || {
        Ok(free_energy_with(&k, &pot, &opts)?)
    })?;
    let row = FreeEnergyRow {
        kernel: &a.kernel,
        sigma2: k.sigma2(),
        potential: &a.potential,
        rho: rho(&pot, k.sigma2()).value,
        f: fe.f,
        uncertainty: fe.uncertainty,
        lambda_max: fe.lambda_max,
        h_max: fe.h_max,
        cross_check: fe.cross_check,
        cross_length: fe.cross_length,
        gap: fe.gap,
        flagged: fe.flagged,
        stick_bound: fe.stick_bound,
        eps_above_log2: pot.exceeds_log2().is_some(),
        c0: a.c0,
        kernel_in_class: membership.member(),
    };
    let stdout = ctx.sink.csv("free_energy.csv", &[row])?;
    let mut flags = Vec::new();
    if fe.flagged {
        flags.push(format!(
            "eigenvalue estimate {} and growth-rate cross-check {} differ by {:.3e}",
            fe.f, fe.cross_check, fe.gap
        ));
    }
    Ok(Report { stdout, flags })
}

fn scan(a: &PhaseScanArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let mut points = Vec::new();
    for ks in &a.kernel {
        let k = parse_kernel(ks)?;
        for fs in &a.family {
            let fam = family(fs)?;
            for &amp in &a.amplitudes {
                points.push(ScanPoint {
                    kernel_spec: ks.clone(),
                    kernel: k.clone(),
                    family: fam.clone(),
                    amplitude: amp,
                });
            }
        }
    }
    let mut opts = ScanOptions {
        deterministic: ctx.deterministic,
        exec: ctx.exec,
        ..Default::default()
    };
    opts.threshold.induction.l_max = a.l_max;
    let rows: Vec<PhaseRow> = phase_scan(&points, &opts);
    let flags = rows
        .iter()
        .filter(|r| {
            r.verdict_spectral == Verdict::Localized.as_str()
                && r.verdict_induction == Verdict::DelocalizedEmpirical.as_str()
        })
        .map(|r| format!("{} {} amplitude {}: both verdicts", r.kernel, r.family, r.amplitude))
        .collect();
    let stdout = ctx.sink.csv("phase_scan.csv", &rows)?;
    Ok(Report { stdout, flags })
}

fn certify_deloc(a: &CertifyDelocArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let k = parse_kernel(&a.kernel)?;
    let pot = potential(&a.potential)?;
    let opts = InductionOptions {
        c: a.c.unwrap_or(MIDPOINT_CONSTANT),
        l_max: a.l_max,
        coverage: if a.exhaustive {
            Coverage::Exhaustive
        } else {
            InductionOptions::default().coverage
        },
        exec: ctx.exec,
        ..Default::default()
    };
    let b = match a.b {
        Some(b) => b,
        None => rho(&pot, k.sigma2()).upper.max(1e-12),
    };
    let cert = delocalization_certificate(&k, &pot, b, a.delta, &opts)?;
    let stdout = ctx.sink.json("certificate.json", &cert)?;
    Ok(Report { stdout, flags: vec![] })
}

fn loc_options(exec: Execution) -> LocalizationOptions {
    LocalizationOptions {
        exec,
        ..Default::default()
    }
}

fn certify_loc(a: &CertifyLocArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let k = parse_kernel(&a.kernel)?;
    let pot = potential(&a.potential)?;
    let opts = LocalizationOptions {
        d_max: a.d_max,
        h_max: a.h_max,
        tol: a.tol,
        ..loc_options(ctx.exec)
    };
    let cert = localization_certificate_with(&k, &pot, &opts);
    let stdout = ctx.sink.json("certificate.json", &cert)?;
    Ok(Report { stdout, flags: vec![] })
}

#[derive(Serialize)]
struct ThresholdRow<'a> {
    kernel: &'a str,
    sigma2: f64,
    family: &'a str,
    amp_lo: f64,
    amp_hi: f64,
    rho_lo: f64,
    rho_hi: f64,
    crossing_rho_lo: Option<f64>,
    crossing_rho_hi: Option<f64>,
    bisections: usize,
    inconsistent: bool,
    caveat: &'a str,
}

#[derive(Serialize)]
struct ThresholdCertificates<'a> {
    delocalized: &'a Certificate,
    localized: &'a Certificate,
}

const BRACKET_SEARCH_STEPS: usize = 20;

fn threshold(a: &ThresholdArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let k = parse_kernel(&a.kernel)?;
    let fam = family(&a.family)?;
    let mut opts = ThresholdOptions::default();
    opts.induction.l_max = a.l_max;
    opts.induction.exec = ctx.exec;
    opts.localization.exec = ctx.exec;

    // ρ per unit amplitude fixes the natural scale of the search
    let unit = rho(&make_family(&fam, 1.0, opts.weighted_tail_tol)?, k.sigma2()).value;
    if !(unit > 0.0 && unit.is_finite()) {
        return Err(CliError::Usage(format!("family {fam} has no finite positive scale")));
    }
    let lo = match a.amp_lo {
        Some(v) => v,
        None => {
            let mut v = 0.1 / unit;
            let mut steps = 0;
            loop {
                let pot = make_family(&fam, v, opts.weighted_tail_tol)?;
                if delocalization_at(&k, &pot, &opts)?.verdict == Verdict::DelocalizedEmpirical {
                    break v;
                }
                steps += 1;
                if steps > BRACKET_SEARCH_STEPS {
                    return Err(Error::Refused("no delocalized amplitude found below the threshold".into()).into());
                }
                v *= 0.5;
            }
        }
    };
    let hi = match a.amp_hi {
        Some(v) => v,
        None => {
            let mut v = (2.0 / unit).max(2.0 * lo);
            let mut steps = 0;
            loop {
                let pot = make_family(&fam, v, opts.weighted_tail_tol)?;
                if localization_certificate_with(&k, &pot, &opts.localization).verdict == Verdict::Localized {
                    break v;
                }
                steps += 1;
                if steps > BRACKET_SEARCH_STEPS {
                    return Err(Error::Refused("no localized amplitude found above the threshold".into()).into());
                }
                v *= 2.0;
            }
        }
    };
    let t = wetting_threshold(&k, &fam, lo, hi, a.tol, &opts)?;
    let crossing = free_energy_crossing(&k, &fam, lo, hi, a.tol, opts.localization.h_max).ok();
    let row = ThresholdRow {
        kernel: &a.kernel,
        sigma2: t.sigma2,
        family: &a.family,
        amp_lo: t.amp_lo,
        amp_hi: t.amp_hi,
        rho_lo: t.rho_lo,
        rho_hi: t.rho_hi,
        crossing_rho_lo: crossing.map(|c| c.0),
        crossing_rho_hi: crossing.map(|c| c.1),
        bisections: t.bisections,
        inconsistent: t.inconsistent,
        caveat: &t.caveat,
    };
    ctx.sink.json(
        "threshold_certificates.json",
        &ThresholdCertificates {
            delocalized: &t.delocalized,
            localized: &t.localized,
        },
    )?;
    let stdout = ctx.sink.csv("threshold.csv", &[row])?;
    let flags = if t.inconsistent {
        vec![format!("amplitude bracket [{}, {}] received both verdicts", t.amp_lo, t.amp_hi)]
    } else {
        vec![]
    };
    Ok(Report { stdout, flags })
}

#[derive(Serialize)]
struct CltRow<'a> {
    kernel: &'a str,
    sigma2: f64,
    #[serde(rename = "L")]
    l: usize,
    scaled_z: f64,
    gaussian_ratio: f64,
}

#[derive(Serialize)]
struct CltSummary<'a> {
    kernel: &'a str,
    sigma2: f64,
    l_from: usize,
    l_max: usize,
    min_scaled_z: f64,
    max_scaled_z: f64,
    scaled_z_at_l_max: f64,
    band_lo: f64,
    band_hi: f64,
    within_band: bool,
}

fn verify_clt(a: &VerifyCltArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let kernels: Vec<(String, WalkKernel)> = a
        .kernel
        .iter()
        .map(|s| Ok((s.clone(), parse_kernel(s)?)))
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut flags = Vec::new();
    let series: Vec<CliResult<PartitionSeries>> =
        ctx.exec.map(&kernels, |(_, k)| cached_series(k, a.l_max, None, None));
    for ((spec, k), s) in kernels.iter().zip(series) {
        let s = s?;
        let s2 = k.sigma2();
        let from = ((a.min_scale / s2).ceil() as usize).max(1);
        if from > a.l_max {
            return Err(CliError::Usage(format!("{spec}: sigma2*L >= {} needs L > L-max", a.min_scale)));
        }
        let scaled = |l: usize| (s2 * l as f64).sqrt() * s.at(l).exp();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for l in from..=a.l_max {
            let v = scaled(l);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let mut grid = Vec::new();
        let mut i = 0;
        loop {
            let l = (from as f64 * 2f64.powf(i as f64 / 4.0)).round() as usize;
            if l >= a.l_max {
                break;
            }
            if grid.last() != Some(&l) {
                grid.push(l);
            }
            i += 1;
        }
        grid.push(a.l_max);
        for l in grid {
            let v = scaled(l);
            rows.push(CltRow {
                kernel: spec,
                sigma2: s2,
                l,
                scaled_z: v,
                gaussian_ratio: v * (2.0 * std::f64::consts::PI).sqrt(),
            });
        }
        let within = lo >= a.band_lo && hi <= a.band_hi;
        if !within {
            flags.push(format!("{spec}: sqrt(sigma2 L) Z ranges over [{lo}, {hi}]"));
        }
        summaries.push(CltSummary {
            kernel: spec,
            sigma2: s2,
            l_from: from,
            l_max: a.l_max,
            min_scaled_z: lo,
            max_scaled_z: hi,
            scaled_z_at_l_max: scaled(a.l_max),
            band_lo: a.band_lo,
            band_hi: a.band_hi,
            within_band: within,
        });
    }
    ctx.sink.csv("clt.csv", &rows)?;
    let stdout = ctx.sink.csv("clt_summary.csv", &summaries)?;
    Ok(Report { stdout, flags })
}

/// Longest path the enumerator is asked for.
pub const MAX_ENUMERATION_LENGTH: usize = 20;

fn vertex(s: &str) -> CliResult<Vertex> {
    let bad = || CliError::Usage(format!("vertex '{s}' must be 'x,y' with odd x and even y (doubled coordinates)"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    let x: i32 = x.trim().parse().map_err(|_| bad())?;
    let y: i32 = y.trim().parse().map_err(|_| bad())?;
    if x.rem_euclid(2) != 1 || y.rem_euclid(2) != 0 {
        return Err(bad());
    }
    Ok(((x - 1) / 2, y / 2))
}

fn constraint(s: &str) -> CliResult<Constraint> {
    let bad = || CliError::Usage(format!("constraint '{s}' must be none, wall:<depth> or avoid:<level>"));
    if s == "none" {
        return Ok(Constraint::None);
    }
    let (kind, v) = s.split_once(':').ok_or_else(bad)?;
    let v: i32 = v.parse().map_err(|_| bad())?;
    match kind {
        "wall" => Ok(Constraint::Wall { depth: v }),
        "avoid" => Ok(Constraint::AvoidLevel { level: v }),
        _ => Err(bad()),
    }
}

fn saw_enumerate(a: &SawEnumerateArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let (x, y) = (vertex(&a.from)?, vertex(&a.to)?);
    let c = constraint(&a.constraint)?;
    let minimal = ((x.0 - y.0).abs() + (x.1 - y.1).abs()) as usize;
    if minimal + a.cap > MAX_ENUMERATION_LENGTH {
        return Err(Error::Refused(format!(
            "paths up to length {} requested; enumeration capped at {MAX_ENUMERATION_LENGTH}",
            minimal + a.cap
        ))
        .into());
    }
    let paths = enumerate_saw_with(x, y, a.cap, c, ctx.exec)?;
    let mut dump = String::new();
    for p in &paths {
        dump.push_str(&p.to_dump());
        dump.push('\n');
    }
    ctx.sink.text("paths.txt", &dump)?;
    let longest = paths.iter().map(LatticePath::length).max().unwrap_or(0);
    Ok(Report {
        stdout: format!("{} paths (longest {longest}) written to paths.txt\n", paths.len()),
        flags: vec![],
    })
}

#[derive(Serialize)]
struct IdentityRow {
    #[serde(rename = "L")]
    l: usize,
    beta: f64,
    left_lo: f64,
    left_hi: f64,
    right_lo: f64,
    right_hi: f64,
    rel_width: f64,
    vertical_cap: usize,
    sos_max_step: usize,
    gap: f64,
    consistent: bool,
}

fn saw_verify(a: &SawVerifyArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let grid: Vec<(usize, f64)> = a.l.iter().flat_map(|&l| a.beta.iter().map(move |&b| (l, b))).collect();
    let rel_tol = a.rel_tol;
    let results = ctx
        .exec
        .map(&grid, |&(l, b)| minimal_partition_identity_with(l, b, rel_tol, Execution::Sequential));
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for r in results {
        let id = r?;
        let rel = id.left.width().max(id.right.width()) / id.left.mid();
        if !id.consistent {
            flags.push(format!("L={} beta={}: sides do not overlap", id.l, id.beta));
        }
        rows.push(IdentityRow {
            l: id.l,
            beta: id.beta,
            left_lo: id.left.lo,
            left_hi: id.left.hi,
            right_lo: id.right.lo,
            right_hi: id.right.hi,
            rel_width: rel,
            vertical_cap: id.vertical_cap,
            sos_max_step: id.sos_max_step,
            gap: id.gap,
            consistent: id.consistent,
        });
    }
    let stdout = ctx.sink.csv("saw_identity.csv", &rows)?;
    Ok(Report { stdout, flags })
}

#[derive(Serialize)]
struct OracleRow {
    kernel: String,
    variant: String,
    wall: Option<usize>,
    #[serde(rename = "L_max")]
    l_max: usize,
    max_rel_err: f64,
    max_rel_error_bound: f64,
    values: usize,
    exact_accumulation: bool,
}

fn oracle_variants() -> Vec<(String, Option<usize>, Option<PinningPotential>)> {
    let mut v: Vec<(String, Option<usize>, Option<PinningPotential>)> = vec![("free".into(), None, None)];
    for j in 0..=3 {
        v.push((format!("wall:{j}"), Some(j), None));
        v.push((format!("wall:{j}+single:eps=0.4"), Some(j), PinningPotential::single(0, 0.4).ok()));
    }
    v.push(("single:j=1,eps=0.25".into(), None, PinningPotential::single(1, 0.25).ok()));
    let mixed = [
        ("list:0.3,0.1,0.05", PinningPotential::from_values(vec![0.3, 0.1, 0.05]).ok()),
        ("power:delta=0.5,amp=0.2", parse_potential("power:delta=0.5,amp=0.2").ok().and_then(|p| p.build(DEFAULT_WEIGHTED_TAIL_TOL).ok())),
        ("exp:delta=0.7,amp=0.4", parse_potential("exp:delta=0.7,amp=0.4").ok().and_then(|p| p.build(DEFAULT_WEIGHTED_TAIL_TOL).ok())),
    ];
    for (name, p) in mixed {
        v.push((format!("wall:0+{name}"), Some(0), p));
    }
    v
}

fn oracle_check(a: &OracleCheckArgs, ctx: &mut Ctx<'_>) -> CliResult<Report> {
    let kernels: Vec<(String, WalkKernel)> = a
        .kernel
        .iter()
        .map(|s| Ok((s.clone(), parse_kernel(s)?)))
        .collect::<CliResult<_>>()?;
    // refuse up front rather than after partial work
    for (_, k) in &kernels {
        PathEnumeration::new(k, a.l_max, None)?;
    }
    let variants = oracle_variants();
    let l_max = a.l_max;
    let per_kernel: Vec<CliResult<Vec<OracleRow>>> = ctx.exec.map(&kernels, |(spec, k)| {
        let mut rows = Vec::new();
        for wall in [None, Some(0), Some(1), Some(2), Some(3)] {
            let group: Vec<&(String, Option<usize>, Option<PinningPotential>)> =
                variants.iter().filter(|v| v.1 == wall).collect();
            let pots: Vec<Option<&PinningPotential>> = group.iter().map(|v| v.2.as_ref()).collect();
            let series: Vec<PartitionSeries> = pots
                .iter()
                .map(|p| cached_series(k, l_max, wall, *p))
                .collect::<CliResult<_>>()?;
            let mut worst = vec![(0.0f64, 0.0f64, true); group.len()];
            for l in 1..=l_max {
                let en = PathEnumeration::new(k, l, wall)?;
                let vals = oracle_partitions(&en, &pots)?;
                for (i, (o, s)) in vals.iter().zip(&series).enumerate() {
                    let rel = (s.at(l).exp() - o.value).abs() / o.value;
                    worst[i].0 = worst[i].0.max(rel);
                    worst[i].1 = worst[i].1.max(o.error_bound / o.value);
                    worst[i].2 &= o.exact_accumulation;
                }
            }
            for (v, w) in group.iter().zip(worst) {
                rows.push(OracleRow {
                    kernel: spec.clone(),
                    variant: v.0.clone(),
                    wall,
                    l_max,
                    max_rel_err: w.0,
                    max_rel_error_bound: w.1,
                    values: l_max,
                    exact_accumulation: w.2,
                });
            }
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    for r in per_kernel {
        rows.extend(r?);
    }
    let flags = rows
        .iter()
        .filter(|r| !(r.max_rel_err <= a.tol))
        .map(|r| format!("{} {}: relative error {:e} above {:e}", r.kernel, r.variant, r.max_rel_err, a.tol))
        .collect();
    let stdout = ctx.sink.csv("oracle_check.csv", &rows)?;
    Ok(Report { stdout, flags })
}
