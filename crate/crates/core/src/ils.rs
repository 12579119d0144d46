//! Iterated local search.
//!
//! A run builds a greedy route, improves it with 2-Opt, Or-Opt, two
//! replacement moves and greedy insertion, then alternates perturbation and
//! local search, restarting from the best route after `threshold`
//! consecutive non-improving iterations.
//!
//! Randomness comes from ChaCha8 seeded with the run seed; run `r` of a
//! batch uses stream `r` of the batch seed. Integer draws go through `u64`
//! so results do not depend on the platform word size.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::Instance;
use crate::objective::{eval_objective, Selection};
use crate::oracle::canonical_orientation;
use crate::solver::{SolveReport, SolveStats, Status};

const IMPROVE_EPS: f64 = 1e-12;

/// How replacement moves pick their candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Screening {
    /// One candidate per round: the pair with the largest first-order
    /// estimate, confirmed by an exact evaluation.
    #[default]
    Taylor,
    /// Every pair is evaluated exactly; the best feasible improvement wins.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlsConfig {
    pub nb_iter: usize,
    pub time_limit: Duration,
    /// Consecutive non-improving iterations before restarting from the best.
    pub threshold: usize,
    pub runs: usize,
    pub seed: u64,
    pub screening: Screening,
    pub trace: bool,
}

impl Default for IlsConfig {
    fn default() -> Self {
        IlsConfig {
            nb_iter: 10_000,
            time_limit: Duration::from_secs(3600),
            threshold: 10,
            runs: 20,
            seed: 1,
            screening: Screening::Taylor,
            trace: false,
        }
    }
}

/// Depot-anchored route with cached tour length and per-zone attractions.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSolution {
    order: Vec<usize>,
    visited: Vec<bool>,
    length: f64,
    attraction: Vec<f64>,
    objective: f64,
}

impl RouteSolution {
    pub fn empty(inst: &Instance) -> Self {
        RouteSolution {
            order: vec![0, 0],
            visited: vec![false; inst.m + 1],
            length: 0.0,
            attraction: vec![0.0; inst.n_zones()],
            objective: 0.0,
        }
    }

    /// Route through `order`, which must start and end at the depot.
    pub fn from_order(inst: &Instance, order: &[usize]) -> Self {
        assert!(order.len() >= 2 && order[0] == 0 && order[order.len() - 1] == 0, "route must be depot-anchored");
        let mut sol = RouteSolution::empty(inst);
        sol.order = order.to_vec();
        for &v in &order[1..order.len() - 1] {
            assert!(!sol.visited[v], "location {v} visited twice");
            sol.visited[v] = true;
        }
        sol.recompute(inst);
        sol
    }

    fn recompute(&mut self, inst: &Instance) {
        self.length = self.order.windows(2).map(|w| inst.t(w[0], w[1])).sum();
        for (n, z) in inst.zones.iter().enumerate() {
            self.attraction[n] = self.order[1..self.order.len() - 1].iter().map(|&v| z.v[v - 1]).sum();
        }
        self.objective = objective_from(inst, &self.attraction);
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Cached `sum_j V_nj x_j + U_n` per zone.
    pub fn denominators(&self, inst: &Instance) -> Vec<f64> {
        inst.zones.iter().zip(&self.attraction).map(|(z, a)| z.u_comp + a).collect()
    }

    pub fn n_visited(&self) -> usize {
        self.order.len() - 2
    }

    pub fn is_visited(&self, v: usize) -> bool {
        self.visited[v]
    }

    pub fn unvisited(&self) -> Vec<usize> {
        (1..self.visited.len()).filter(|&v| !self.visited[v]).collect()
    }

    pub fn selection(&self) -> Selection {
        Selection::from_bools(self.visited[1..].to_vec())
    }

    /// Caches agree with a from-scratch recomputation and the route is
    /// feasible.
    pub fn is_coherent(&self, inst: &Instance) -> bool {
        let mut fresh = self.clone();
        fresh.recompute(inst);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
        close(fresh.length, self.length)
            && fresh.attraction.iter().zip(&self.attraction).all(|(a, b)| close(*a, *b))
            && close(fresh.objective, self.objective)
            && inst.within_budget(self.length)
            && self.n_visited() <= inst.cap_c
    }

    fn insert(&mut self, inst: &Instance, pos: usize, v: usize) {
        let (a, b) = (self.order[pos - 1], self.order[pos]);
        self.length += inst.t(a, v) + inst.t(v, b) - inst.t(a, b);
        self.order.insert(pos, v);
        self.visited[v] = true;
        for (n, z) in inst.zones.iter().enumerate() {
            self.attraction[n] += z.v[v - 1];
        }
        self.objective = objective_from(inst, &self.attraction);
    }

    fn remove_positions(&mut self, inst: &Instance, positions: &[usize]) {
        let mut drop = vec![false; self.order.len()];
        for &p in positions {
            drop[p] = true;
            self.visited[self.order[p]] = false;
        }
        let mut k = 0;
        self.order.retain(|_| {
            k += 1;
            !drop[k - 1]
        });
        self.recompute(inst);
    }

    /// Objective after adding `v`.
    fn gain_insert(&self, inst: &Instance, v: usize) -> f64 {
        objective_with(inst, &self.attraction, |z| z.v[v - 1])
    }

    /// Cheapest insertion position for `v` and the added time.
    fn best_position(&self, inst: &Instance, v: usize) -> (usize, f64) {
        let mut best = (1, f64::INFINITY);
        for p in 1..self.order.len() {
            let (a, b) = (self.order[p - 1], self.order[p]);
            let added = inst.t(a, v) + inst.t(v, b) - inst.t(a, b);
            if added < best.1 {
                best = (p, added);
            }
        }
        best
    }

    /// `F_i = sum_n q_n V_ni U_n / (U_n + A_n)^2` at the current set.
    fn taylor(&self, inst: &Instance) -> Vec<f64> {
        let mut f = vec![0.0; inst.m + 1];
        for (z, a) in inst.zones.iter().zip(&self.attraction) {
            let d = z.u_comp + a;
            let scale = z.q * z.u_comp / (d * d);
            for (i, v) in z.v.iter().enumerate() {
                f[i + 1] += scale * v;
            }
        }
        f
    }
}

fn objective_from(inst: &Instance, attraction: &[f64]) -> f64 {
    inst.zones.iter().zip(attraction).map(|(z, a)| z.q * a / (z.u_comp + a)).sum()
}

fn objective_with(inst: &Instance, attraction: &[f64], delta: impl Fn(&crate::instance::Zone) -> f64) -> f64 {
    inst.zones
        .iter()
        .zip(attraction)
        .map(|(z, a)| {
            let a = a + delta(z);
            z.q * a / (z.u_comp + a)
        })
        .sum()
}

/// Feasible insertions as `(objective after, vertex, position)`.
fn insertion_candidates(inst: &Instance, sol: &RouteSolution) -> Vec<(f64, usize, usize)> {
    if sol.n_visited() >= inst.cap_c {
        return Vec::new();
    }
    sol.unvisited()
        .into_iter()
        .filter_map(|v| {
            let (pos, added) = sol.best_position(inst, v);
            inst.within_budget(sol.length + added).then(|| (sol.gain_insert(inst, v), v, pos))
        })
        .collect()
}

/// Inserts the feasible vertex with the best objective, at its cheapest
/// position, until nothing fits.
fn greedy_insertion(inst: &Instance, sol: &mut RouteSolution) -> bool {
    let mut changed = false;
    loop {
        let cands = insertion_candidates(inst, sol);
        let mut best: Option<(f64, usize, usize)> = None;
        for c in cands {
            if best.is_none_or(|b| c.0 > b.0) {
                best = Some(c);
            }
        }
        let Some((_, v, pos)) = best else { return changed };
        sol.insert(inst, pos, v);
        changed = true;
    }
}

pub fn construct(inst: &Instance) -> RouteSolution {
    let mut sol = RouteSolution::empty(inst);
    greedy_insertion(inst, &mut sol);
    sol
}

/// First-improvement 2-Opt until no reversal shortens the route.
pub fn two_opt(inst: &Instance, sol: &mut RouteSolution) -> bool {
    let mut changed = false;
    'scan: loop {
        let n = sol.order.len();
        for i in 0..n.saturating_sub(3) {
            for j in i + 2..n - 1 {
                let (a, b, c, d) = (sol.order[i], sol.order[i + 1], sol.order[j], sol.order[j + 1]);
                let delta = inst.t(a, c) + inst.t(b, d) - inst.t(a, b) - inst.t(c, d);
                if delta < -IMPROVE_EPS {
                    sol.order[i + 1..=j].reverse();
                    sol.length += delta;
                    changed = true;
                    continue 'scan;
                }
            }
        }
        return changed;
    }
}

/// First-improvement Or-Opt: relocate a segment of one to three visits,
/// possibly reversed, to another gap of the route.
pub fn or_opt(inst: &Instance, sol: &mut RouteSolution) -> bool {
    let mut changed = false;
    'scan: loop {
        let n = sol.order.len();
        let visits = n - 2;
        for len in 1..=3.min(visits) {
            for s in 1..=visits + 1 - len {
                let e = s + len - 1;
                let (prev, next) = (sol.order[s - 1], sol.order[e + 1]);
                let (first, last) = (sol.order[s], sol.order[e]);
                let removed = inst.t(prev, first) + inst.t(last, next) - inst.t(prev, next);
                for g in 0..n - 1 {
                    if g + 1 >= s && g <= e {
                        continue;
                    }
                    let (a, b) = (sol.order[g], sol.order[g + 1]);
                    let base = inst.t(a, b);
                    let fwd = inst.t(a, first) + inst.t(last, b) - base;
                    let rev = inst.t(a, last) + inst.t(first, b) - base;
                    let (added, reverse) = if rev < fwd { (rev, true) } else { (fwd, false) };
                    let delta = added - removed;
                    if delta < -IMPROVE_EPS {
                        let mut seg: Vec<usize> = sol.order.drain(s..=e).collect();
                        if reverse {
                            seg.reverse();
                        }
                        let at = if g < s { g + 1 } else { g + 1 - len };
                        sol.order.splice(at..at, seg);
                        sol.length += delta;
                        changed = true;
                        continue 'scan;
                    }
                }
            }
        }
        return changed;
    }
}

fn replace_one_delta(inst: &Instance, sol: &RouteSolution, p: usize, h: usize) -> f64 {
    let (a, k, b) = (sol.order[p - 1], sol.order[p], sol.order[p + 1]);
    inst.t(a, h) + inst.t(h, b) - inst.t(a, k) - inst.t(k, b)
}

fn swap_objective(inst: &Instance, sol: &RouteSolution, out: usize, add: &[usize]) -> f64 {
    objective_with(inst, &sol.attraction, |z| add.iter().map(|&v| z.v[v - 1]).sum::<f64>() - z.v[out - 1])
}

fn apply_replace(inst: &Instance, sol: &mut RouteSolution, p: usize, seg: &[usize]) {
    let k = sol.order[p];
    sol.visited[k] = false;
    for &v in seg {
        sol.visited[v] = true;
    }
    sol.order.splice(p..=p, seg.iter().copied());
    sol.recompute(inst);
}

/// Swaps one visited vertex for one unvisited vertex in place while the
/// exact objective strictly improves and the budget holds.
pub fn replace_1(inst: &Instance, sol: &mut RouteSolution, screening: Screening) -> bool {
    let mut changed = false;
    while let Some((p, h)) = replace_1_move(inst, sol, screening) {
        apply_replace(inst, sol, p, &[h]);
        changed = true;
    }
    changed
}

fn replace_1_move(inst: &Instance, sol: &RouteSolution, screening: Screening) -> Option<(usize, usize)> {
    let unvisited = sol.unvisited();
    let positions = 1..sol.order.len() - 1;
    match screening {
        Screening::Taylor => {
            let f = sol.taylor(inst);
            let h = argmax(unvisited.iter().copied(), |v| f[v])?;
            let p = argmax(positions, |p| -f[sol.order[p]])?;
            let k = sol.order[p];
            let ok = f[h] - f[k] > 0.0
                && swap_objective(inst, sol, k, &[h]) > sol.objective
                && inst.within_budget(sol.length + replace_one_delta(inst, sol, p, h));
            ok.then_some((p, h))
        }
        Screening::Exact => {
            let mut best: Option<(f64, usize, usize)> = None;
            for p in positions {
                let k = sol.order[p];
                for &h in &unvisited {
                    if !inst.within_budget(sol.length + replace_one_delta(inst, sol, p, h)) {
                        continue;
                    }
                    let obj = swap_objective(inst, sol, k, &[h]);
                    if obj > sol.objective && best.is_none_or(|b| obj > b.0) {
                        best = Some((obj, p, h));
                    }
                }
            }
            best.map(|b| (b.1, b.2))
        }
    }
}

/// Replaces one visited vertex by an edge of two unvisited vertices while
/// the exact objective strictly improves, the budget holds and the set
/// stays within the cardinality cap.
pub fn replace_2(inst: &Instance, sol: &mut RouteSolution, screening: Screening) -> bool {
    let mut changed = false;
    while let Some((p, seg)) = replace_2_move(inst, sol, screening) {
        apply_replace(inst, sol, p, &seg);
        changed = true;
    }
    changed
}

/// Orientation of the edge `(i, k)` at position `p` with the shorter
/// insertion, and the resulting change in route length.
fn oriented_pair(inst: &Instance, sol: &RouteSolution, p: usize, i: usize, k: usize) -> ([usize; 2], f64) {
    let (a, j, b) = (sol.order[p - 1], sol.order[p], sol.order[p + 1]);
    let seg = if inst.t(a, i) + inst.t(b, k) <= inst.t(a, k) + inst.t(b, i) { [i, k] } else { [k, i] };
    let delta = inst.t(a, seg[0]) + inst.t(seg[1], b) + inst.t(i, k) - inst.t(a, j) - inst.t(j, b);
    (seg, delta)
}

fn replace_2_move(inst: &Instance, sol: &RouteSolution, screening: Screening) -> Option<(usize, [usize; 2])> {
    if sol.n_visited() + 1 > inst.cap_c || sol.n_visited() == 0 {
        return None;
    }
    let unvisited = sol.unvisited();
    let positions = 1..sol.order.len() - 1;
    match screening {
        Screening::Taylor => {
            let f = sol.taylor(inst);
            let i = argmax(unvisited.iter().copied(), |v| f[v])?;
            let k = argmax(unvisited.iter().copied().filter(|&v| v != i), |v| f[v])?;
            let p = argmax(positions, |p| -f[sol.order[p]])?;
            let j = sol.order[p];
            let (seg, delta) = oriented_pair(inst, sol, p, i, k);
            let ok = f[i] + f[k] - f[j] > 0.0
                && swap_objective(inst, sol, j, &seg) > sol.objective
                && inst.within_budget(sol.length + delta);
            ok.then_some((p, seg))
        }
        Screening::Exact => {
            let mut best: Option<(f64, usize, [usize; 2])> = None;
            for p in positions {
                let j = sol.order[p];
                for (x, &i) in unvisited.iter().enumerate() {
                    for &k in &unvisited[x + 1..] {
                        let (seg, delta) = oriented_pair(inst, sol, p, i, k);
                        if !inst.within_budget(sol.length + delta) {
                            continue;
                        }
                        let obj = swap_objective(inst, sol, j, &seg);
                        if obj > sol.objective && best.is_none_or(|b| obj > b.0) {
                            best = Some((obj, p, seg));
                        }
                    }
                }
            }
            best.map(|b| (b.1, b.2))
        }
    }
}

/// First index with the largest key.
fn argmax<I: Iterator<Item = usize>>(items: I, key: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for v in items {
        let k = key(v);
        if best.is_none_or(|b| k > b.0) {
            best = Some((k, v));
        }
    }
    best.map(|b| b.1)
}

/// 2-Opt, Or-Opt, both replacements to a fixpoint, 2-Opt, Or-Opt, then
/// greedy insertion.
pub fn local_search(inst: &Instance, sol: &mut RouteSolution, screening: Screening) {
    two_opt(inst, sol);
    or_opt(inst, sol);
    loop {
        let a = replace_1(inst, sol, screening);
        let b = replace_2(inst, sol, screening);
        if !a && !b {
            break;
        }
    }
    two_opt(inst, sol);
    or_opt(inst, sol);
    greedy_insertion(inst, sol);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Removal {
    Random,
    Historical,
    String,
}

impl Removal {
    pub fn name(self) -> &'static str {
        match self {
            Removal::Random => "random-removal",
            Removal::Historical => "historical-removal",
            Removal::String => "string-removal",
        }
    }
}

/// Inclusive range for the number of removed visits out of `l`.
pub fn removal_count_range(l: usize) -> (usize, usize) {
    let lo = l.div_ceil(3).max(1);
    (lo, (l / 2).max(lo))
}

fn draw(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

/// Removes part of the route with one of three removal rules, then rebuilds
/// by inserting one of the three best feasible vertices at a time.
/// `history` counts removals per location over the run.
pub fn perturb(inst: &Instance, sol: &mut RouteSolution, rng: &mut ChaCha8Rng, history: &mut [u64]) -> Removal {
    let kind = [Removal::Random, Removal::Historical, Removal::String][draw(rng, 3)];
    let l = sol.n_visited();
    if l > 0 {
        let (lo, hi) = removal_count_range(l);
        let r = lo + draw(rng, hi - lo + 1);
        let positions: Vec<usize> = match kind {
            Removal::Random => {
                let mut pool: Vec<usize> = (1..=l).collect();
                for i in 0..r {
                    let j = i + draw(rng, pool.len() - i);
                    pool.swap(i, j);
                }
                pool.truncate(r);
                pool
            }
            Removal::Historical => {
                let mut pos: Vec<usize> = (1..=l).collect();
                pos.sort_by_key(|&p| (history[sol.order[p]], sol.order[p]));
                pos.truncate(r);
                pos
            }
            Removal::String => {
                let start = 1 + draw(rng, l - r + 1);
                (start..start + r).collect()
            }
        };
        for &p in &positions {
            history[sol.order[p]] += 1;
        }
        sol.remove_positions(inst, &positions);
    }
    loop {
        let mut cands = insertion_candidates(inst, sol);
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let (_, v, pos) = cands[draw(rng, cands.len().min(3))];
        sol.insert(inst, pos, v);
    }
    kind
}

/// One row per ILS iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IlsTraceRow {
    pub iteration: usize,
    pub current: f64,
    pub best: f64,
    pub operator: &'static str,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A single run seeded with `seed`.
pub fn ils_run(inst: &Instance, cfg: &IlsConfig, seed: u64) -> SolveReport {
    ils_run_traced(inst, cfg, seed, 0).0
}

/// A single run on stream `stream` of `seed`, with its iteration trace when
/// `cfg.trace` is set.
pub fn ils_run_traced(inst: &Instance, cfg: &IlsConfig, seed: u64, stream: u64) -> (SolveReport, Vec<IlsTraceRow>) {
    let started = Instant::now();
    let mut rng = rng_for(seed, stream);
    let mut history = vec![0u64; inst.m + 1];
    let mut trace = Vec::new();
    let mut current = construct(inst);
    local_search(inst, &mut current, cfg.screening);
    let mut best = current.clone();
    let mut nb_imp = 1usize;
    let mut iterations = 0;
    while iterations < cfg.nb_iter && started.elapsed() < cfg.time_limit {
        iterations += 1;
        let kind = perturb(inst, &mut current, &mut rng, &mut history);
        local_search(inst, &mut current, cfg.screening);
        if current.objective > best.objective + IMPROVE_EPS {
            best = current.clone();
            nb_imp = 1;
        } else {
            nb_imp += 1;
            if cfg.threshold > 0 && nb_imp.is_multiple_of(cfg.threshold) {
                current = best.clone();
            }
        }
        if cfg.trace {
            trace.push(IlsTraceRow { iteration: iterations, current: current.objective, best: best.objective, operator: kind.name() });
        }
    }
    let x = best.selection();
    let mut tour = best.order.clone();
    canonical_orientation(&mut tour);
    let report = SolveReport {
        objective: eval_objective(inst, &x),
        best_x: x,
        best_tour: tour,
        bound: None,
        status: Status::Feasible,
        stats: SolveStats { outer_iters: iterations, ..SolveStats::default() },
        wall_time: started.elapsed(),
        trace: Vec::new(),
    };
    (report, trace)
}

/// `cfg.runs` runs on streams `0..runs` of `cfg.seed`; the best by objective,
/// then by lexicographically smallest tour.
pub fn ils_batch(inst: &Instance, cfg: &IlsConfig) -> SolveReport {
    let started = Instant::now();
    let mut best: Option<SolveReport> = None;
    let mut iterations = 0;
    for run in 0..cfg.runs.max(1) {
        let (r, _) = ils_run_traced(inst, cfg, cfg.seed, run as u64);
        iterations += r.stats.outer_iters;
        let better = match &best {
            None => true,
            Some(b) => r.objective > b.objective || (r.objective == b.objective && r.best_tour < b.best_tour),
        };
        if better {
            best = Some(r);
        }
    }
    let mut report = best.expect("at least one run");
    report.stats.outer_iters = iterations;
    report.wall_time = started.elapsed();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_instance, t1};
    use crate::instance::{euclidean_travel_matrix, Zone};
    use crate::oracle::{brute_force_optimum, route_length};

    fn line_instance(coords: &[(f64, f64)], zones: Vec<Zone>, t_max: f64, cap: usize) -> Instance {
        let travel = euclidean_travel_matrix(coords).unwrap();
        Instance::new("fixture", zones, travel, t_max, cap).unwrap()
    }

    fn flat_zone(m: usize) -> Vec<Zone> {
        vec![Zone { q: 1.0, u_comp: 1.0, v: vec![1.0; m] }]
    }

    #[test]
    fn construct_t1() {
        let inst = t1();
        let sol = construct(&inst);
        assert_eq!(sol.n_visited(), 2);
        assert!((sol.objective() - 0.8).abs() < 1e-12);
        assert!(sol.is_coherent(&inst));
        let mut capped = t1();
        capped.cap_c = 1;
        let sol = construct(&capped);
        assert_eq!(sol.order(), &[0, 2, 0]);
        assert!((sol.objective() - 0.75).abs() < 1e-12);
        let mut tight = t1();
        tight.t_max = 1.0;
        assert_eq!(construct(&tight).order(), &[0, 0]);
    }

    #[test]
    fn construct_inserts_best_gain_first() {
        let mut inst = t1();
        inst.t_max = 2.0;
        assert_eq!(construct(&inst).order(), &[0, 2, 0]);
    }

    #[test]
    fn two_opt_uncrosses() {
        let coords = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (0.5, -0.5)];
        let inst = line_instance(&coords, flat_zone(4), 100.0, 4);
        let mut sol = RouteSolution::from_order(&inst, &[0, 1, 3, 2, 4, 0]);
        let before = sol.length();
        assert!(two_opt(&inst, &mut sol));
        assert!(sol.length() < before - 1e-9);
        assert!(sol.is_coherent(&inst));
        let mut tri = RouteSolution::from_order(&inst, &[0, 1, 2, 0]);
        assert!(!two_opt(&inst, &mut tri));
        let mut single = RouteSolution::from_order(&inst, &[0, 3, 0]);
        assert!(!two_opt(&inst, &mut single));
    }

    #[test]
    fn or_opt_relocates() {
        let coords = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)];
        let inst = line_instance(&coords, flat_zone(3), 100.0, 3);
        let mut sol = RouteSolution::from_order(&inst, &[0, 2, 1, 3, 0]);
        assert!(or_opt(&inst, &mut sol));
        assert!((sol.length() - 6.0).abs() < 1e-12);
        assert!(sol.is_coherent(&inst));
        assert!(!or_opt(&inst, &mut sol));
        let mut single = RouteSolution::from_order(&inst, &[0, 1, 0]);
        assert!(!or_opt(&inst, &mut single));
    }

    #[test]
    fn replace_1_examples() {
        let mut inst = t1();
        inst.cap_c = 1;
        for screening in [Screening::Taylor, Screening::Exact] {
            let mut sol = RouteSolution::from_order(&inst, &[0, 1, 0]);
            assert!((sol.objective() - 0.5).abs() < 1e-12);
            assert!(replace_1(&inst, &mut sol, screening));
            assert_eq!(sol.order(), &[0, 2, 0]);
            assert!((sol.objective() - 0.75).abs() < 1e-12);
            assert!(!replace_1(&inst, &mut sol, screening));
        }
    }

    #[test]
    fn replace_1_rejects_overestimated_swap() {
        let zones = vec![
            Zone { q: 1.0, u_comp: 1.0, v: vec![3.0, 0.001] },
            Zone { q: 1.0, u_comp: 1.0, v: vec![0.001, 1.0] },
        ];
        let inst = line_instance(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], zones, 10.0, 1);
        let mut sol = RouteSolution::from_order(&inst, &[0, 1, 0]);
        let f = sol.taylor(&inst);
        assert!(f[2] - f[1] > 0.0);
        assert!(!replace_1(&inst, &mut sol, Screening::Taylor));
        assert_eq!(sol.order(), &[0, 1, 0]);
    }

    fn replace_2_fixture(t_max: f64, cap: usize) -> Instance {
        let coords = [(0.0, 0.0), (3.0, 0.0), (2.9, 0.3), (2.9, -0.3)];
        let zones = vec![Zone { q: 1.0, u_comp: 1.0, v: vec![0.1, 2.0, 2.0] }];
        line_instance(&coords, zones, t_max, cap)
    }

    #[test]
    fn replace_2_examples() {
        for screening in [Screening::Taylor, Screening::Exact] {
            let inst = replace_2_fixture(7.0, 2);
            let mut sol = RouteSolution::from_order(&inst, &[0, 1, 0]);
            let before = sol.objective();
            assert!(replace_2(&inst, &mut sol, screening));
            assert_eq!(sol.n_visited(), 2);
            assert!(!sol.is_visited(1));
            assert!(sol.objective() > before);
            assert!(sol.is_coherent(&inst));

            let inst = replace_2_fixture(7.0, 1);
            let mut sol = RouteSolution::from_order(&inst, &[0, 1, 0]);
            assert!(!replace_2(&inst, &mut sol, screening));

            let inst = replace_2_fixture(6.2, 2);
            let mut sol = RouteSolution::from_order(&inst, &[0, 1, 0]);
            assert!(!replace_2(&inst, &mut sol, screening));
        }
    }

    #[test]
    fn local_search_keeps_or_improves() {
        let inst = t1();
        let mut sol = construct(&inst);
        let before = sol.clone();
        local_search(&inst, &mut sol, Screening::Taylor);
        assert_eq!(sol.objective(), before.objective());

        let inst = random_instance(6, 5, 4);
        let mut sol = RouteSolution::from_order(&inst, &[0, 0]);
        local_search(&inst, &mut sol, Screening::Taylor);
        assert!(sol.objective() > 0.0);
        assert!(sol.is_coherent(&inst));

        let mut zero = t1();
        zero.t_max = 0.0;
        let mut sol = RouteSolution::empty(&zero);
        local_search(&zero, &mut sol, Screening::Taylor);
        assert_eq!(sol.order(), &[0, 0]);
    }

    #[test]
    fn removal_ranges() {
        assert_eq!(removal_count_range(1), (1, 1));
        assert_eq!(removal_count_range(6), (2, 3));
        assert_eq!(removal_count_range(2), (1, 1));
        assert_eq!(removal_count_range(7), (3, 3));
    }

    #[test]
    fn perturb_is_deterministic_and_feasible() {
        let inst = random_instance(10, 8, 5);
        let base = construct(&inst);
        let run = |seed| {
            let mut sol = base.clone();
            let mut rng = rng_for(seed, 0);
            let mut history = vec![0; inst.m + 1];
            let kinds: Vec<Removal> = (0..20).map(|_| perturb(&inst, &mut sol, &mut rng, &mut history)).collect();
            assert!(sol.is_coherent(&inst));
            (sol, kinds, history)
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn ils_matches_oracle_on_small_instances() {
        let cfg = IlsConfig { nb_iter: 200, runs: 3, ..IlsConfig::default() };
        assert!((ils_batch(&t1(), &cfg).objective - 0.8).abs() < 1e-12);
        for seed in 0..4 {
            let inst = random_instance(8, 10, seed);
            let r = ils_batch(&inst, &cfg);
            let o = brute_force_optimum(&inst).unwrap();
            assert!(r.objective <= o.objective + 1e-9);
            assert!(r.objective >= 0.98 * o.objective);
            assert!(inst.within_budget(route_length(&inst, &r.best_tour)));
        }
    }

    #[test]
    fn same_seed_same_report() {
        let inst = random_instance(9, 12, 8);
        let cfg = IlsConfig { nb_iter: 100, ..IlsConfig::default() };
        let a = ils_run(&inst, &cfg, 5);
        let b = ils_run(&inst, &cfg, 5);
        assert_eq!((a.best_tour, a.objective), (b.best_tour, b.objective));
    }
}
