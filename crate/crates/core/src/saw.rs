//! Self-avoiding lattice paths on `(ℤ+½)×ℤ` weighted by `e^{-β|γ|}`:
//! certified truncated enumeration, contact statistics, regularity, the SOS
//! correspondence and the permutation excess-length bound.
//!
//! A vertex `(i+½, y)` is stored as the integer pair `(i, y)`. Dumps use
//! doubled coordinates `(2i+1, 2y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::make_sos;
use crate::numeric::{CompensatedSum, Interval};
use crate::potentials::PinningPotential;
use crate::transfer::{log_partition_series, TransferConfig};

/// `(column i, height y)` for the vertex `(i+½, y)`.
pub type Vertex = (i32, i32);

/// Step preference of every enumeration: E, N, W, S.
pub const STEPS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Default margin above `log 3` required of β.
pub const BETA_MARGIN: f64 = 0.5;

pub fn beta_min() -> f64 {
    3f64.ln() + BETA_MARGIN
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePath {
    vertices: Vec<Vertex>,
}

impl LatticePath {
    /// Validates distinct vertices joined by unit steps.
    pub fn new(vertices: Vec<Vertex>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Parameter("a path needs at least two vertices".into()));
        }
        for w in vertices.windows(2) {
            let d = (w[1].0 - w[0].0).abs() + (w[1].1 - w[0].1).abs();
            if d != 1 {
                return Err(Error::Parameter(format!("{:?} -> {:?} is not a unit step", w[0], w[1])));
            }
        }
        let mut sorted = vertices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("path visits a vertex twice".into()));
        }
        Ok(LatticePath { vertices })
    }

    /// Straight horizontal path from `(½, 0)` to `(L−½, 0)`.
    pub fn straight(l: usize) -> Self {
        LatticePath {
            vertices: (0..l as i32).map(|i| (i, 0)).collect(),
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Number of edges.
    pub fn length(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn start(&self) -> Vertex {
        self.vertices[0]
    }

    pub fn end(&self) -> Vertex {
        *self.vertices.last().unwrap()
    }

    /// `x0,y0;x1,y1;…` in doubled coordinates.
    pub fn to_dump(&self) -> String {
        let parts: Vec<String> = self
            .vertices
            .iter()
            .map(|&(i, y)| format!("{},{}", 2 * i + 1, 2 * y))
            .collect();
        parts.join(";")
    }

    pub fn from_dump(line: &str) -> Result<Self> {
        let mut v = Vec::new();
        for part in line.trim().split(';') {
            let (x, y) = part
                .split_once(',')
                .ok_or_else(|| Error::Parameter(format!("bad vertex '{part}'")))?;
            let x: i32 = x.trim().parse().map_err(|_| Error::Parameter(format!("bad x in '{part}'")))?;
            let y: i32 = y.trim().parse().map_err(|_| Error::Parameter(format!("bad y in '{part}'")))?;
            if x.rem_euclid(2) != 1 || y.rem_euclid(2) != 0 {
                return Err(Error::Parameter(format!("'{part}' is not a doubled half-integer vertex")));
            }
            v.push(((x - 1) / 2, y / 2));
        }
        Self::new(v)
    }
}

/// Restriction on the vertices of enumerated paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    None,
    /// All vertices at height `≥ −depth`.
    Wall { depth: i32 },
    /// No vertex at height `level` except the endpoints.
    AvoidLevel { level: i32 },
}

#[derive(Clone, Copy, Debug)]
enum Goal {
    Vertex(Vertex),
    /// Any vertex in the column; every visit of the column ends a path.
    Column(i32),
}

#[derive(Clone, Copy, Debug)]
struct Search {
    start: Vertex,
    goal: Goal,
    max_len: usize,
    constraint: Constraint,
    no_west: bool,
}

struct Grid {
    radius: i32,
    side: usize,
    cells: Vec<bool>,
    origin: Vertex,
}

impl Grid {
    fn new(origin: Vertex, radius: usize) -> Self {
        let side = 2 * radius + 3;
        Grid {
            radius: radius as i32 + 1,
            side,
            cells: vec![false; side * side],
            origin,
        }
    }

    fn idx(&self, v: Vertex) -> usize {
        let x = (v.0 - self.origin.0 + self.radius) as usize;
        let y = (v.1 - self.origin.1 + self.radius) as usize;
        x * self.side + y
    }

    fn get(&self, v: Vertex) -> bool {
        self.cells[self.idx(v)]
    }

    fn set(&mut self, v: Vertex, b: bool) {
        let i = self.idx(v);
        self.cells[i] = b;
    }
}

enum Task {
    Complete(Vec<Vertex>),
    Prefix(Vec<Vertex>),
}

impl Search {
    fn allowed(&self, v: Vertex) -> bool {
        match self.constraint {
            Constraint::None => true,
            Constraint::Wall { depth } => v.1 >= -depth,
            Constraint::AvoidLevel { level } => {
                v.1 != level || matches!(self.goal, Goal::Vertex(t) if t == v)
            }
        }
    }

    fn reached(&self, v: Vertex) -> bool {
        match self.goal {
            Goal::Vertex(t) => v == t,
            Goal::Column(c) => v.0 == c,
        }
    }

    fn distance(&self, v: Vertex) -> usize {
        match self.goal {
            Goal::Vertex(t) => ((t.0 - v.0).abs() + (t.1 - v.1).abs()) as usize,
            Goal::Column(c) => (c - v.0).unsigned_abs() as usize,
        }
    }

    fn children<'a>(&'a self, path: &'a [Vertex], grid: &'a Grid) -> impl Iterator<Item = Vertex> + 'a {
        let cur = *path.last().unwrap();
        let len = path.len() - 1;
        STEPS.iter().filter_map(move |&(dx, dy)| {
            if self.no_west && dx < 0 {
                return None;
            }
            let next = (cur.0 + dx, cur.1 + dy);
            if grid.get(next) || !self.allowed(next) {
                return None;
            }
            if len + 1 + self.distance(next) > self.max_len {
                return None;
            }
            Some(next)
        })
    }

    fn dfs(&self, path: &mut Vec<Vertex>, grid: &mut Grid, visit: &mut dyn FnMut(&[Vertex])) {
        let cur = *path.last().unwrap();
        if path.len() > 1 && self.reached(cur) {
            visit(path);
            if matches!(self.goal, Goal::Vertex(_)) {
                return;
            }
        }
        if path.len() - 1 == self.max_len {
            return;
        }
        let next: Vec<Vertex> = self.children(path, grid).collect();
        for n in next {
            path.push(n);
            grid.set(n, true);
            self.dfs(path, grid, visit);
            grid.set(n, false);
            path.pop();
        }
    }

    /// Tasks in DFS order: completed short paths and live prefixes of length
    /// `depth`.
    fn tasks(&self, depth: usize) -> Vec<Task> {
        let mut out = Vec::new();
        let mut grid = Grid::new(self.start, self.max_len);
        grid.set(self.start, true);
        let mut path = vec![self.start];
        self.split(&mut path, &mut grid, depth, &mut out);
        out
    }

    fn split(&self, path: &mut Vec<Vertex>, grid: &mut Grid, depth: usize, out: &mut Vec<Task>) {
        let cur = *path.last().unwrap();
        if path.len() > 1 && self.reached(cur) {
            out.push(Task::Complete(path.clone()));
            if matches!(self.goal, Goal::Vertex(_)) {
                return;
            }
        }
        if path.len() - 1 == self.max_len {
            return;
        }
        if path.len() - 1 == depth {
            out.push(Task::Prefix(path.clone()));
            return;
        }
        let next: Vec<Vertex> = self.children(path, grid).collect();
        for n in next {
            path.push(n);
            grid.set(n, true);
            self.split(path, grid, depth, out);
            grid.set(n, false);
            path.pop();
        }
    }

    /// Ordered parallel fold: results merge in sequential DFS order.
    fn fold<A, I, V, M>(&self, init: I, visit: V, merge: M, exec: Execution) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        V: Fn(&mut A, &[Vertex]) + Sync + Send,
        M: Fn(&mut A, A),
    {
        let depth = if exec.is_parallel() { 4.min(self.max_len) } else { 0 };
        let tasks = if depth == 0 {
            vec![Task::Prefix(vec![self.start])]
        } else {
            self.tasks(depth)
        };
        let parts = exec.map(&tasks, |task| {
            let mut acc = init();
            match task {
                Task::Complete(p) => visit(&mut acc, p),
                Task::Prefix(p) => {
                    let mut grid = Grid::new(self.start, self.max_len);
                    for &v in p {
                        grid.set(v, true);
                    }
                    let mut path = p.clone();
                    // A prefix of length > 0 already passed the goal test in
                    // `split`; only continue below it.
                    if path.len() > 1 {
                        let next: Vec<Vertex> = self.children(&path, &grid).collect();
                        for n in next {
                            path.push(n);
                            grid.set(n, true);
                            self.dfs(&mut path, &mut grid, &mut |q| visit(&mut acc, q));
                            grid.set(n, false);
                            path.pop();
                        }
                    } else {
                        self.dfs(&mut path, &mut grid, &mut |q| visit(&mut acc, q));
                    }
                }
            }
            acc
        });
        let mut it = parts.into_iter();
        let mut acc = it.next().unwrap_or_else(&init);
        for p in it {
            merge(&mut acc, p);
        }
        acc
    }
}

fn manhattan(a: Vertex, b: Vertex) -> usize {
    ((a.0 - b.0).abs() + (a.1 - b.1).abs()) as usize
}

/// All paths from `x` to `y` with `|γ| ≤ |x−y|₁ + excess_cap`, in the fixed
/// E, N, W, S lexicographic order.
pub fn enumerate_saw(x: Vertex, y: Vertex, excess_cap: usize) -> Result<Vec<LatticePath>> {
    enumerate_saw_with(x, y, excess_cap, Constraint::None, Execution::default())
}

pub fn enumerate_saw_with(
    x: Vertex,
    y: Vertex,
    excess_cap: usize,
    constraint: Constraint,
    exec: Execution,
) -> Result<Vec<LatticePath>> {
    if x == y {
        return Err(Error::Parameter("path endpoints must differ".into()));
    }
    let search = Search {
        start: x,
        goal: Goal::Vertex(y),
        max_len: manhattan(x, y) + excess_cap,
        constraint,
        no_west: false,
    };
    Ok(search.fold(
        Vec::new,
        |acc: &mut Vec<LatticePath>, p| {
            acc.push(LatticePath {
                vertices: p.to_vec(),
            })
        },
        |a, b| a.extend(b),
        exec,
    ))
}

/// `Σ_{m>M} 4·3^{m−1} e^{−βm} e^{e(m+1)}`, the weight bound for all paths
/// longer than `M` when each vertex carries at most `e_max`.
pub fn tail_certificate(max_len: usize, beta: f64, e_max: f64) -> f64 {
    let r = 3.0 * (e_max - beta).exp();
    if r >= 1.0 {
        return f64::INFINITY;
    }
    4.0 / 3.0 * e_max.exp() * r.powi(max_len as i32 + 1) / (1.0 - r)
}

/// Enumerated weight plus a rigorous bound on everything not enumerated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedEnsemble {
    pub l: usize,
    pub beta: f64,
    pub excess_cap: usize,
    pub partial_sum: f64,
    pub tail_cert: f64,
    pub paths: u64,
}

impl TruncatedEnsemble {
    /// Empty ensemble; refuses β below `log 3 + margin`.
    pub fn new(l: usize, beta: f64, excess_cap: usize, margin: f64) -> Result<Self> {
        if l < 2 {
            return Err(Error::Parameter(format!("span L must be at least 2, got {l}")));
        }
        let bmin = 3f64.ln() + margin;
        if !(beta >= bmin) {
            return Err(Error::Refused(format!(
                "beta={beta} below log 3 + {margin} = {bmin:.4}: no tail certificate"
            )));
        }
        Ok(TruncatedEnsemble {
            l,
            beta,
            excess_cap,
            partial_sum: 0.0,
            tail_cert: tail_certificate(l - 1 + excess_cap, beta, 0.0),
            paths: 0,
        })
    }

    pub fn max_len(&self) -> usize {
        self.l - 1 + self.excess_cap
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.partial_sum, self.partial_sum + self.tail_cert)
    }
}

/// Contact counts of a path spanning columns `0..L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contacts {
    /// Vertices `(i+½, j)` with `i ∈ [1, L−2]`.
    pub n: usize,
    /// Horizontal edges at height `j`.
    pub n_hat: usize,
    /// Level-zero vertices in columns outside `[0, L−1]`.
    pub n_ext: usize,
}

pub fn contacts(path: &LatticePath, j: i32, l: usize) -> Contacts {
    let l = l as i32;
    let v = path.vertices();
    Contacts {
        n: v.iter().filter(|&&(i, y)| y == j && i >= 1 && i <= l - 2).count(),
        n_hat: v.windows(2).filter(|w| w[0].1 == j && w[1].1 == j).count(),
        n_ext: v.iter().filter(|&&(i, y)| y == 0 && (i < 0 || i > l - 1)).count(),
    }
}

/// Horizontal edges crossing the vertical line `x = u`.
pub fn crossings(path: &LatticePath, u: i32) -> usize {
    path.vertices()
        .windows(2)
        .filter(|w| w[0].1 == w[1].1 && w[0].0.min(w[1].0) == u - 1)
        .count()
}

/// One crossing of `x = u` for `u ∈ [1, L−1]`, none for `u ∈ {0, L}`.
pub fn is_regular(path: &LatticePath, u: i64, l: usize) -> Result<bool> {
    if u < 0 || u > l as i64 {
        return Err(Error::Parameter(format!("u={u} outside [0, {l}]")));
    }
    let c = crossings(path, u as i32);
    Ok(if u == 0 || u == l as i64 { c == 0 } else { c == 1 })
}

fn potential_weight(path: &[Vertex], l: i32, pot: Option<&PinningPotential>, ext: bool) -> f64 {
    let Some(p) = pot else { return 0.0 };
    let mut phi = 0.0;
    for &(i, y) in path {
        if y >= 0 && i >= 1 && i <= l - 2 {
            phi += p.eps(y as usize);
        }
        if ext && y == 0 && (i < 0 || i > l - 1) {
            phi += p.eps(0);
        }
    }
    phi
}

fn sum_merge(a: &mut (CompensatedSum, u64), b: (CompensatedSum, u64)) {
    a.0.merge(&b.0);
    a.1 += b.1;
}

/// `𝒵` (optionally constrained, pinned and with external contacts) between
/// `(½,0)` and `(L−½,0)`, enumerated up to `L−1+excess_cap` edges.
pub fn saw_partition(
    l: usize,
    beta: f64,
    excess_cap: usize,
    constraint: Constraint,
    pot: Option<&PinningPotential>,
    include_ext: bool,
    exec: Execution,
) -> Result<TruncatedEnsemble> {
    let mut ens = TruncatedEnsemble::new(l, beta, excess_cap, BETA_MARGIN)?;
    let e_max = pot.map_or(0.0, |p| p.max_eps());
    ens.tail_cert = tail_certificate(ens.max_len(), beta, e_max);
    if !ens.tail_cert.is_finite() {
        return Err(Error::Refused(format!(
            "potential maximum {e_max} too large for a tail certificate at beta={beta}"
        )));
    }
    let search = Search {
        start: (0, 0),
        goal: Goal::Vertex((l as i32 - 1, 0)),
        max_len: ens.max_len(),
        constraint,
        no_west: false,
    };
    let li = l as i32;
    let (sum, count) = search.fold(
        || (CompensatedSum::default(), 0u64),
        |acc, p| {
            let m = (p.len() - 1) as f64;
            acc.0.add((potential_weight(p, li, pot, include_ext) - beta * m).exp());
            acc.1 += 1;
        },
        sum_merge,
        exec,
    );
    ens.partial_sum = sum.value();
    ens.paths = count;
    Ok(ens)
}

/// Grand-canonical `Ξ_L`: paths from `(½,0)` ending anywhere in column
/// `L−½`.
pub fn grand_canonical_partition(l: usize, beta: f64, excess_cap: usize, exec: Execution) -> Result<TruncatedEnsemble> {
    let mut ens = TruncatedEnsemble::new(l, beta, excess_cap, BETA_MARGIN)?;
    let search = Search {
        start: (0, 0),
        goal: Goal::Column(l as i32 - 1),
        max_len: ens.max_len(),
        constraint: Constraint::None,
        no_west: false,
    };
    let (sum, count) = search.fold(
        || (CompensatedSum::default(), 0u64),
        |acc, p| {
            acc.0.add((-beta * (p.len() - 1) as f64).exp());
            acc.1 += 1;
        },
        sum_merge,
        exec,
    );
    ens.partial_sum = sum.value();
    ens.paths = count;
    Ok(ens)
}

/// Both sides of the minimal-horizontal-path identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub l: usize,
    pub beta: f64,
    /// Enumeration of paths with exactly `L−1` horizontal edges.
    pub left: Interval,
    /// `e^{−β(L−1)} Z_β^L Z_{0,L}` from the SOS kernel and transfer recursion.
    pub right: Interval,
    pub vertical_cap: usize,
    pub sos_max_step: usize,
    pub consistent: bool,
    pub gap: f64,
}

/// `Σ_{v>V} T(v) z^v` bounded by `t^{−(V+1)}((1+zt)/(1−zt))^L`, minimised
/// over `t ∈ (1, 1/z)`; `T(v)` counts `k ∈ ℤ^L` with `Σ|k_i| = v`.
fn vertical_tail(l: usize, z: f64, vcap: usize) -> f64 {
    let mut best = f64::INFINITY;
    let steps = 2000;
    for i in 1..steps {
        let t = 1.0 + (1.0 / z - 1.0) * i as f64 / steps as f64;
        let zt = z * t;
        let v = ((1.0 + zt) / (1.0 - zt)).ln() * l as f64 - (vcap as f64 + 1.0) * t.ln();
        best = best.min(v.exp());
    }
    best
}

/// Default relative precision targeted by [`minimal_partition_identity`].
pub const IDENTITY_REL_TOL: f64 = 1e-8;

pub fn minimal_partition_identity(l: usize, beta: f64) -> Result<IdentityCheck> {
    minimal_partition_identity_with(l, beta, IDENTITY_REL_TOL, Execution::default())
}

pub fn minimal_partition_identity_with(l: usize, beta: f64, rel_tol: f64, exec: Execution) -> Result<IdentityCheck> {
    if l < 2 {
        return Err(Error::Parameter(format!("span L must be at least 2, got {l}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
    }
    let z = (-beta).exp();
    let base = (-beta * (l - 1) as f64).exp();
    let mut vcap = 0;
    while vertical_tail(l, z, vcap) > rel_tol && vcap < 64 {
        vcap += 1;
    }
    let search = Search {
        start: (0, 0),
        goal: Goal::Vertex((l as i32 - 1, 0)),
        max_len: l - 1 + vcap,
        constraint: Constraint::None,
        no_west: true,
    };
    let (sum, _) = search.fold(
        || (CompensatedSum::default(), 0u64),
        |acc, p| {
            acc.0.add((-beta * (p.len() - 1) as f64).exp());
            acc.1 += 1;
        },
        sum_merge,
        exec,
    );
    let left_lo = sum.value();
    let left = Interval::new(left_lo, left_lo + base * vertical_tail(l, z, vcap) + sum.rounding_bound());

    let tail_tol = (rel_tol * 1e-3 / l as f64).max(1e-300);
    let kernel = make_sos(beta, tail_tol)?;
    let kk = kernel.max_step();
    let zk = match kernel.family() {
        crate::kernels::KernelFamily::Sos {
            truncated_normalizer, ..
        } => *truncated_normalizer,
        _ => unreachable!("make_sos builds an SOS kernel"),
    };
    let series = log_partition_series(&kernel, l, None, None, &TransferConfig::default())?;
    let right_lo = base * (l as f64 * zk.ln() + series.at(l)).exp();
    let full = (1.0 + z) / (1.0 - z);
    let w_tail = 2.0 * z.powi(kk as i32 + 1) / (1.0 - z);
    let right_err = base * l as f64 * w_tail * full.powi(l as i32 - 1);
    let fp = 64.0 * l as f64 * f64::EPSILON * right_lo;
    let right = Interval::new(right_lo - fp, right_lo + right_err + fp);
    let left_fp = Interval::new(left.lo - 8.0 * f64::EPSILON * left.lo, left.hi);
    Ok(IdentityCheck {
        l,
        beta,
        left: left_fp,
        right,
        vertical_cap: vcap,
        sos_max_step: kk,
        consistent: left_fp.overlaps(&right),
        gap: (left.mid() - right.mid()).abs(),
    })
}

/// Ensemble probabilities at `(L, β)` with certified intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityStats {
    pub l: usize,
    pub beta: f64,
    pub excess_cap: usize,
    pub z: Interval,
    /// `(u, P(not regular at u))` for `u = 0..=L`.
    pub nonregular: Vec<(usize, Interval)>,
    pub first_edge_vertical: Interval,
    pub a: f64,
    /// `E[e^{a N_ext}] − 1`.
    pub ext_moment_minus_one: Interval,
}

impl RegularityStats {
    pub fn nonregular_at(&self, u: usize) -> Interval {
        self.nonregular[u].1
    }
}

/// Enumeration refuses beyond `L = 12` or an excess cap of 14.
pub const REGULARITY_MAX_L: usize = 12;
pub const REGULARITY_MAX_CAP: usize = 14;

fn ratio(num: f64, num_tail: f64, z: Interval) -> Interval {
    Interval::new(num / z.hi, ((num + num_tail) / z.lo).min(f64::MAX))
}

pub fn regularity_stats(l: usize, beta: f64, excess_cap: usize, a: f64, exec: Execution) -> Result<RegularityStats> {
    if l > REGULARITY_MAX_L || excess_cap > REGULARITY_MAX_CAP {
        return Err(Error::Refused(format!(
            "regularity enumeration capped at L={REGULARITY_MAX_L}, cap={REGULARITY_MAX_CAP}"
        )));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Parameter(format!("moment parameter a must be >= 0, got {a}")));
    }
    let ens = TruncatedEnsemble::new(l, beta, excess_cap, BETA_MARGIN)?;
    let search = Search {
        start: (0, 0),
        goal: Goal::Vertex((l as i32 - 1, 0)),
        max_len: ens.max_len(),
        constraint: Constraint::None,
        no_west: false,
    };
    struct Acc {
        z: CompensatedSum,
        nonreg: Vec<CompensatedSum>,
        vertical: CompensatedSum,
        ext: CompensatedSum,
    }
    let li = l as i32;
    let init = || Acc {
        z: CompensatedSum::default(),
        nonreg: vec![CompensatedSum::default(); l + 1],
        vertical: CompensatedSum::default(),
        ext: CompensatedSum::default(),
    };
    let acc = search.fold(
        init,
        |acc, p| {
            let w = (-beta * (p.len() - 1) as f64).exp();
            acc.z.add(w);
            let path = LatticePath { vertices: p.to_vec() };
            for u in 0..=l {
                let c = crossings(&path, u as i32);
                let regular = if u == 0 || u == l { c == 0 } else { c == 1 };
                if !regular {
                    acc.nonreg[u].add(w);
                }
            }
            if p[1].0 == p[0].0 {
                acc.vertical.add(w);
            }
            let n_ext = p.iter().filter(|&&(i, y)| y == 0 && (i < 0 || i > li - 1)).count();
            if n_ext > 0 {
                acc.ext.add(w * (a * n_ext as f64).exp_m1());
            }
        },
        |a, b| {
            a.z.merge(&b.z);
            for (x, y) in a.nonreg.iter_mut().zip(&b.nonreg) {
                x.merge(y);
            }
            a.vertical.merge(&b.vertical);
            a.ext.merge(&b.ext);
        },
        exec,
    );
    let tail = ens.tail_cert;
    let z = Interval::new(acc.z.value(), acc.z.value() + tail);
    // e^{aN}−1 ≤ e^{a(m+1)} on the discarded paths
    let ext_tail = tail_certificate(ens.max_len(), beta, a);
    Ok(RegularityStats {
        l,
        beta,
        excess_cap,
        z,
        nonregular: acc
            .nonreg
            .iter()
            .enumerate()
            .map(|(u, s)| (u, ratio(s.value(), tail, z)))
            .collect(),
        first_edge_vertical: ratio(acc.vertical.value(), tail, z),
        a,
        ext_moment_minus_one: ratio(acc.ext.value(), ext_tail, z),
    })
}

/// `ℓ(π) = −L + |x_{π₁}| + Σ|x_{π(i+1)} − x_{π(i)}| + |L − x_{πₙ}|` for
/// interior points `0 < x₁ < … < xₙ < L`.
pub fn excess_length(points: &[i64], order: &[usize], span: i64) -> Result<i64> {
    validate_points(points, span)?;
    if order.len() != points.len() {
        return Err(Error::Parameter("permutation length differs from point count".into()));
    }
    let mut seen = vec![false; points.len()];
    for &o in order {
        if o >= points.len() || seen[o] {
            return Err(Error::Parameter(format!("{order:?} is not a permutation")));
        }
        seen[o] = true;
    }
    let mut prev = 0i64;
    let mut total = -span;
    for &o in order {
        total += (points[o] - prev).abs();
        prev = points[o];
    }
    total += (span - prev).abs();
    Ok(total)
}

fn validate_points(points: &[i64], span: i64) -> Result<()> {
    let mut prev = 0;
    for &x in points {
        if x <= prev {
            return Err(Error::Parameter(format!("points must increase strictly inside (0, {span})")));
        }
        prev = x;
    }
    if prev >= span && !points.is_empty() {
        return Err(Error::Parameter(format!("points must lie below L={span}")));
    }
    Ok(())
}

/// Largest point count for the brute-force permutation sum.
pub const PERMUTATION_MAX_N: usize = 9;

/// `Σ_π e^{−cℓ(π)}` over all `n!` orders.
pub fn permutation_sum(points: &[i64], span: i64, c: f64, exec: Execution) -> Result<f64> {
    validate_points(points, span)?;
    let n = points.len();
    if n > PERMUTATION_MAX_N {
        return Err(Error::Refused(format!(
            "permutation sum limited to n <= {PERMUTATION_MAX_N}, got {n}"
        )));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let firsts: Vec<usize> = (0..n).collect();
    let parts = exec.map(&firsts, |&f| {
        let mut used = vec![false; n];
        used[f] = true;
        let mut acc = CompensatedSum::default();
        permute(points, span, c, &mut used, points[f], points[f], 1, &mut acc);
        acc.value()
    });
    Ok(parts.iter().sum())
}

#[allow(clippy::too_many_arguments)]
fn permute(points: &[i64], span: i64, c: f64, used: &mut [bool], last: i64, dist: i64, depth: usize, acc: &mut CompensatedSum) {
    if depth == points.len() {
        let ell = dist + (span - last).abs() - span;
        acc.add((-c * ell as f64).exp());
        return;
    }
    for i in 0..points.len() {
        if !used[i] {
            used[i] = true;
            permute(points, span, c, used, points[i], dist + (points[i] - last).abs(), depth + 1, acc);
            used[i] = false;
        }
    }
}

/// `δ = 2Σ_{h≥1} e^{−ch}`.
pub fn excess_delta(c: f64) -> f64 {
    2.0 * (-c).exp() / (1.0 - (-c).exp())
}
