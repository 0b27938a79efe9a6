//! Log-scaled transfer recursion for random-walk bridges under a wall and a
//! pinning potential, with monitored height truncation.
//!
//! Heights are kept in original coordinates: with a wall at depth `j` the
//! states are `-j ..= -j + h_max`; without a wall they are
//! `-h_max ..= h_max`. The potential acts at heights `h ≥ 0` (level `h`), at
//! interior times `1..L-1` only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::WalkKernel;
use crate::potentials::PinningPotential;
use crate::spectral::{top_eigenvalue_bisection, PinnedOperator};

/// Truncation policy for the height window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Largest tolerated relative mass in the outermost `max_step` rows.
    pub defect_tol: f64,
    /// Window doubling stops (with a truncation error) beyond this many states.
    pub max_states: usize,
    /// Smallest window tried.
    pub min_window: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            defect_tol: 1e-12,
            max_states: 1 << 20,
            min_window: 16,
        }
    }
}

/// One row `h ↦ W_L(start, h)` stored as `exp(log_scale) · weights[h - lo]`
/// with `max(weights) = 1`.
#[derive(Clone, Debug)]
pub struct TransferTable {
    length: usize,
    wall: Option<usize>,
    lo: i64,
    start: i64,
    log_scale: f64,
    weights: Vec<f64>,
    pin: Vec<f64>,
    probs: Vec<f64>,
    max_step: usize,
    defect: f64,
    scratch: Vec<f64>,
}

fn window_bounds(wall: Option<usize>, h_max: usize) -> (i64, i64) {
    match wall {
        Some(j) => (-(j as i64), -(j as i64) + h_max as i64),
        None => (-(h_max as i64), h_max as i64),
    }
}

impl TransferTable {
    /// Table at length 1 (the kernel row from height 0).
    pub fn new(
        kernel: &WalkKernel,
        wall: Option<usize>,
        pot: Option<&PinningPotential>,
        h_max: usize,
    ) -> Result<Self> {
        Self::with_start(kernel, wall, pot, h_max, 0)
    }

    pub(crate) fn with_start(
        kernel: &WalkKernel,
        wall: Option<usize>,
        pot: Option<&PinningPotential>,
        h_max: usize,
        start: i64,
    ) -> Result<Self> {
        let k = kernel.max_step();
        if h_max < k {
            return Err(Error::Configuration(format!(
                "window h_max={h_max} narrower than kernel stencil {k}"
            )));
        }
        let (lo, hi) = window_bounds(wall, h_max);
        if start < lo || start > hi {
            return Err(Error::Configuration(format!(
                "start height {start} outside window [{lo}, {hi}]"
            )));
        }
        let n = (hi - lo + 1) as usize;
        let pin = (0..n)
            .map(|i| {
                let h = lo + i as i64;
                match pot {
                    Some(p) if h >= 0 => p.eps(h as usize).exp(),
                    _ => 1.0,
                }
            })
            .collect();
        let weights: Vec<f64> = (0..n).map(|i| kernel.p(lo + i as i64 - start)).collect();
        let mut t = TransferTable {
            length: 1,
            wall,
            lo,
            start,
            log_scale: 0.0,
            weights,
            pin,
            probs: kernel.probs().to_vec(),
            max_step: k,
            defect: 0.0,
            scratch: vec![0.0; n],
        };
        t.record_defect();
        t.normalize();
        Ok(t)
    }

    fn normalize(&mut self) {
        let m = self.weights.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            self.log_scale += m.ln();
            let inv = 1.0 / m;
            for w in &mut self.weights {
                *w *= inv;
            }
        }
    }

    fn record_defect(&mut self) {
        let n = self.weights.len();
        let k = self.max_step.min(n);
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return;
        }
        let mut edge: f64 = self.weights[n - k..].iter().sum();
        if self.wall.is_none() {
            edge += self.weights[..k].iter().sum::<f64>();
        }
        self.defect = self.defect.max(edge / total);
    }

    /// Extend every path by one step: `W_{L+1}(h) = Σ_z W_L(z) e^{ε_z} p(h−z)`.
    pub fn advance(&mut self) {
        let n = self.weights.len();
        let k = self.max_step as i64;
        for (s, (w, e)) in self.scratch.iter_mut().zip(self.weights.iter().zip(&self.pin)) {
            *s = w * e;
        }
        let next = &mut self.weights;
        next.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &p) in self.probs.iter().enumerate() {
            // h = z + step
            let step = idx as i64 - k;
            let (dst_from, src_from) = if step >= 0 {
                (step as usize, 0usize)
            } else {
                (0usize, (-step) as usize)
            };
            let len = n - step.unsigned_abs() as usize;
            let dst = &mut next[dst_from..dst_from + len];
            let src = &self.scratch[src_from..src_from + len];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += p * s;
            }
        }
        self.length += 1;
        self.record_defect();
        self.normalize();
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn wall(&self) -> Option<usize> {
        self.wall
    }

    /// Number of states minus one.
    pub fn h_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn lowest(&self) -> i64 {
        self.lo
    }

    pub fn highest(&self) -> i64 {
        self.lo + self.weights.len() as i64 - 1
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// Largest relative boundary mass seen so far.
    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn defect_flag(&self, tol: f64) -> bool {
        self.defect > tol
    }

    /// `log W_L(start, h)`; `-∞` outside the window or for zero weight.
    pub fn log_weight(&self, h: i64) -> f64 {
        if h < self.lo || h > self.highest() {
            return f64::NEG_INFINITY;
        }
        let w = self.weights[(h - self.lo) as usize];
        if w > 0.0 {
            self.log_scale + w.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `(h, log W_L(start, h))` for every state.
    pub fn log_row(&self) -> Vec<(i64, f64)> {
        (self.lo..=self.highest()).map(|h| (h, self.log_weight(h))).collect()
    }

    fn scaled_row(&self) -> (&[f64], f64) {
        (&self.weights, self.log_scale)
    }
}

/// Functional form of [`TransferTable::advance`].
pub fn transfer_step(table: &TransferTable) -> TransferTable {
    let mut t = table.clone();
    t.advance();
    t
}

/// Information about the window finally used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub h_max: usize,
    pub defect: f64,
    /// The window was large enough to contain every admissible bridge.
    pub exact: bool,
}

/// `log Z_L` for `L = 1..=l_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSeries {
    pub log_z: Vec<f64>,
    pub window: WindowInfo,
}

impl PartitionSeries {
    /// `log Z_L` (`L ≥ 1`).
    pub fn at(&self, l: usize) -> f64 {
        self.log_z[l - 1]
    }

    pub fn l_max(&self) -> usize {
        self.log_z.len()
    }
}

/// Window large enough that no bridge of length `l_max` from 0 can leave it.
fn exact_window(kernel: &WalkKernel, wall: Option<usize>, l_max: usize) -> usize {
    let k = kernel.max_step();
    let reach = (k * (l_max / 2)).max(k);
    match wall {
        Some(j) => j + reach,
        None => reach,
    }
}

fn initial_window(
    kernel: &WalkKernel,
    wall: Option<usize>,
    pot: Option<&PinningPotential>,
    l_max: usize,
    cfg: &TransferConfig,
) -> usize {
    let k = kernel.max_step();
    let diffusive = (8.0 * (kernel.sigma2() * l_max as f64).sqrt()).ceil() as usize + 2 * k;
    let support = pot.and_then(|p| p.top_level()).map_or(0, |t| t + 2 * k);
    let depth = wall.unwrap_or(0);
    let h = cfg.min_window.max(diffusive).max(support) + depth;
    h.min(exact_window(kernel, wall, l_max)).max(k)
}

fn states_for(wall: Option<usize>, h: usize) -> usize {
    if wall.is_some() {
        h + 1
    } else {
        2 * h + 1
    }
}

/// Runs `body` on a fresh table, doubling the window until the boundary
/// defect is below tolerance or the window is exact.
fn with_doubling<T>(
    kernel: &WalkKernel,
    wall: Option<usize>,
    pot: Option<&PinningPotential>,
    l_max: usize,
    cfg: &TransferConfig,
    mut body: impl FnMut(&mut TransferTable) -> T,
    partial: impl Fn(&T) -> f64,
) -> Result<(T, WindowInfo)> {
    let exact = exact_window(kernel, wall, l_max);
    let mut h = initial_window(kernel, wall, pot, l_max, cfg);
    loop {
        let capped = states_for(wall, h) > cfg.max_states;
        if capped {
            h = match wall {
                Some(_) => cfg.max_states - 1,
                None => (cfg.max_states - 1) / 2,
            }
            .max(kernel.max_step());
        }
        let mut table = TransferTable::new(kernel, wall, pot, h)?;
        let out = body(&mut table);
        let info = WindowInfo {
            h_max: h,
            defect: table.defect(),
            exact: h >= exact,
        };
        if info.exact || info.defect <= cfg.defect_tol {
            return Ok((out, info));
        }
        if capped {
            return Err(Error::Truncation {
                partial_log_value: partial(&out),
                defect: info.defect,
                h_max: h,
            });
        }
        h = (2 * h).min(exact);
    }
}

/// `log Z_L` for all `L ≤ l_max` in one pass.
pub fn log_partition_series(
    kernel: &WalkKernel,
    l_max: usize,
    wall: Option<usize>,
    pot: Option<&PinningPotential>,
    cfg: &TransferConfig,
) -> Result<PartitionSeries> {
    if l_max == 0 {
        return Err(Error::Parameter("length must be at least 1".into()));
    }
    let (log_z, window) = with_doubling(
        kernel,
        wall,
        pot,
        l_max,
        cfg,
        |t| {
            let mut out = Vec::with_capacity(l_max);
            out.push(t.log_weight(0));
            while t.length() < l_max {
                t.advance();
                out.push(t.log_weight(0));
            }
            out
        },
        |v: &Vec<f64>| v.last().copied().unwrap_or(f64::NAN),
    )?;
    Ok(PartitionSeries { log_z, window })
}

/// `log Z_{0,L}` (free), `log Z^{+,j}`, `log Z^{ε,+,j}` or `log Z^{Φ,+,0}`
/// depending on `wall` and `pot`.
pub fn log_partition(
    kernel: &WalkKernel,
    l: usize,
    wall: Option<usize>,
    pot: Option<&PinningPotential>,
) -> Result<f64> {
    Ok(log_partition_series(kernel, l, wall, pot, &TransferConfig::default())?.at(l))
}

/// Full matrix `log W_L(i, h)` over a fixed window (no doubling); rows are
/// start heights. Intended for small consistency checks.
pub fn transfer_matrix(
    kernel: &WalkKernel,
    l: usize,
    wall: Option<usize>,
    pot: Option<&PinningPotential>,
    h_max: usize,
) -> Result<Vec<Vec<f64>>> {
    if l == 0 {
        return Err(Error::Parameter("length must be at least 1".into()));
    }
    let (lo, hi) = window_bounds(wall, h_max);
    (lo..=hi)
        .map(|i| {
            let mut t = TransferTable::with_start(kernel, wall, pot, h_max, i)?;
            while t.length() < l {
                t.advance();
            }
            Ok(t.log_row().into_iter().map(|(_, v)| v).collect())
        })
        .collect()
}

/// `E^{+,j}_{0,L}[e^{εN}] = Z^{ε,+,j}/Z^{+,j}` with `N` the interior zeros.
pub fn pinned_expectation(kernel: &WalkKernel, l: usize, j: usize, eps: f64) -> Result<f64> {
    Ok(*pinned_expectation_series(kernel, l, j, eps, &TransferConfig::default())?
        .last()
        .expect("non-empty"))
}

/// [`pinned_expectation`] for every `L = 1..=l_max` (index `L-1`).
pub fn pinned_expectation_series(
    kernel: &WalkKernel,
    l_max: usize,
    j: usize,
    eps: f64,
    cfg: &TransferConfig,
) -> Result<Vec<f64>> {
    let pot = PinningPotential::single(0, eps)?;
    let pinned = log_partition_series(kernel, l_max, Some(j), Some(&pot), cfg)?;
    let plain = log_partition_series(kernel, l_max, Some(j), None, cfg)?;
    Ok(pinned
        .log_z
        .iter()
        .zip(&plain.log_z)
        .map(|(a, b)| (a - b).exp())
        .collect())
}

/// `E_{0,L}[e^{bσN/√L}]` for the unconstrained bridge, `N` the interior zeros.
pub fn zero_moment(kernel: &WalkKernel, l: usize, b: f64) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(Error::Parameter(format!("b must be >= 0, got {b}")));
    }
    let eps = b * kernel.sigma() / (l as f64).sqrt();
    let pot = PinningPotential::single(0, eps)?;
    let cfg = TransferConfig::default();
    let pinned = log_partition_series(kernel, l, None, Some(&pot), &cfg)?.at(l);
    let plain = log_partition_series(kernel, l, None, None, &cfg)?.at(l);
    Ok((pinned - plain).exp())
}

/// `P_{0,L}(γ_m ≥ −j, γ_{m+1} ≥ −j)`, `m = ⌊L/2⌋`, for each requested `L ≥ 2`
/// (results in input order). Computed in one forward pass of the free bridge.
pub fn midpoint_probs(kernel: &WalkKernel, j: usize, lengths: &[usize]) -> Result<Vec<f64>> {
    midpoint_probs_with(kernel, j, lengths, &TransferConfig::default())
}

pub fn midpoint_prob(kernel: &WalkKernel, l: usize, j: usize) -> Result<f64> {
    Ok(midpoint_probs(kernel, j, &[l])?[0])
}

pub fn midpoint_probs_with(
    kernel: &WalkKernel,
    j: usize,
    lengths: &[usize],
    cfg: &TransferConfig,
) -> Result<Vec<f64>> {
    if lengths.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(&l) = lengths.iter().find(|&&l| l < 2) {
        return Err(Error::Parameter(format!("midpoint probability needs L >= 2, got {l}")));
    }
    let l_max = *lengths.iter().max().unwrap();
    let mut wanted = vec![false; l_max + 1];
    for &l in lengths {
        wanted[l] = true;
    }
    let ((num_den, _), _info) = with_doubling(
        kernel,
        None,
        None,
        l_max,
        cfg,
        |t| {
            let mut res = vec![(f64::NAN, f64::NAN); l_max + 1];
            let n = t.h_max() + 1;
            let lo = t.lowest();
            let wall_idx = (-(j as i64) - lo).max(0) as usize;
            // F_0 = δ_0
            let mut prev: Vec<f64> = (0..n).map(|i| if lo + i as i64 == 0 { 1.0 } else { 0.0 }).collect();
            let mut conv_all = vec![0.0; n];
            let mut conv_wall = vec![0.0; n];
            let mut time = 0usize;
            let mut last_ratio = f64::NAN;
            loop {
                // current row F_{time+1} lives in t after `time` advances
                let (cur, _) = t.scaled_row();
                let tt = time + 1;
                // L = 2tt: m = tt uses (F_tt, F_{tt-1}); L = 2tt+1: (F_tt, F_tt)
                for (l, back) in [(2 * tt, &prev[..]), (2 * tt + 1, cur)] {
                    if l <= l_max && wanted[l] {
                        midpoint_convolve(kernel, back, wall_idx, &mut conv_all, &mut conv_wall);
                        let mut num = 0.0;
                        let mut den = 0.0;
                        for i in 0..n {
                            den += cur[i] * conv_all[i];
                            if i >= wall_idx {
                                num += cur[i] * conv_wall[i];
                            }
                        }
                        res[l] = (num, den);
                        last_ratio = num / den;
                    }
                }
                if 2 * tt >= l_max {
                    break;
                }
                prev.copy_from_slice(cur);
                t.advance();
                time += 1;
            }
            (res, last_ratio)
        },
        |r| r.1,
    )?;
    Ok(lengths
        .iter()
        .map(|&l| {
            let (num, den) = num_den[l];
            (num / den).min(1.0)
        })
        .collect())
}

/// `conv_all[h] = Σ_{h'} p(h'−h) back[h']`, `conv_wall` restricted to
/// `h' ≥ wall_idx`.
fn midpoint_convolve(kernel: &WalkKernel, back: &[f64], wall_idx: usize, all: &mut [f64], wall: &mut [f64]) {
    let n = back.len();
    let k = kernel.max_step() as i64;
    all.iter_mut().for_each(|x| *x = 0.0);
    wall.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..n as i64 {
        let mut sa = 0.0;
        let mut sw = 0.0;
        for s in -k..=k {
            let h2 = i + s;
            if h2 < 0 || h2 >= n as i64 {
                continue;
            }
            let v = kernel.p(s) * back[h2 as usize];
            sa += v;
            if h2 as usize >= wall_idx {
                sw += v;
            }
        }
        all[i as usize] = sa;
        wall[i as usize] = sw;
    }
}

/// Free-energy estimate with its cross-check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergy {
    /// Primary estimate `max(0, log λ_max)`.
    pub f: f64,
    /// Last change under window doubling, floored at the eigenvalue resolution.
    pub uncertainty: f64,
    pub lambda_max: f64,
    pub h_max: usize,
    /// `max(0, (log Z_{2L} − log Z_L)/L)` for the pinned wall ensemble.
    pub cross_check: f64,
    pub cross_length: usize,
    pub gap: f64,
    /// Estimators disagree by more than `10·tol`.
    pub flagged: bool,
    /// `max_j (log p(0) + ε_j)`: a path sitting at one level.
    pub stick_bound: f64,
    pub trace: Vec<String>,
}

/// Options for [`free_energy_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyOptions {
    pub tol: f64,
    pub initial_window: usize,
    pub max_window: usize,
    pub cross_length: usize,
}

impl Default for FreeEnergyOptions {
    fn default() -> Self {
        FreeEnergyOptions {
            tol: 1e-6,
            initial_window: 64,
            max_window: 1 << 14,
            cross_length: 1 << 11,
        }
    }
}

pub fn free_energy(kernel: &WalkKernel, pot: &PinningPotential, tol: f64) -> Result<FreeEnergy> {
    free_energy_with(
        kernel,
        pot,
        &FreeEnergyOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn free_energy_with(kernel: &WalkKernel, pot: &PinningPotential, opts: &FreeEnergyOptions) -> Result<FreeEnergy> {
    if !(opts.tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut trace = Vec::new();
    let k = kernel.max_step();
    let support = pot.top_level().map_or(0, |t| t + 1);
    let mut h = opts.initial_window.max(4 * support + 2 * k).min(opts.max_window.max(k));
    let bisection_tol = opts.tol * 1e-3;
    let mut prev: Option<f64> = None;
    let mut lambda;
    let mut f;
    let mut change;
    loop {
        let op = PinnedOperator::new(kernel, Some(pot), h)?;
        lambda = top_eigenvalue_bisection(&op, bisection_tol).value;
        f = lambda.ln().max(0.0);
        change = prev.map_or(f64::INFINITY, |p| (f - p).abs());
        trace.push(format!("eigenvalue h_max={h} lambda={lambda:.15} f={f:.12e}"));
        if change < opts.tol || h >= opts.max_window {
            break;
        }
        prev = Some(f);
        h = (2 * h).min(opts.max_window);
    }
    let cl = opts.cross_length.max(1);
    let series = log_partition_series(kernel, 2 * cl, Some(0), Some(pot), &TransferConfig::default())?;
    let cross_check = ((series.at(2 * cl) - series.at(cl)) / cl as f64).max(0.0);
    trace.push(format!("growth L={cl} cross={cross_check:.12e}"));
    let stick_bound = pot
        .values()
        .iter()
        .map(|e| kernel.p(0).ln() + e)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = (f - cross_check).abs();
    Ok(FreeEnergy {
        f,
        // never below the eigenvalue resolution, even when two windows agree bitwise
        uncertainty: if change.is_finite() { change.max(bisection_tol / lambda) } else { opts.tol },
        lambda_max: lambda,
        h_max: h,
        cross_check,
        cross_length: cl,
        gap,
        flagged: gap > 10.0 * opts.tol,
        stick_bound,
        trace,
    })
}
