//! Exact master-problem backend.
//!
//! `theta_l` depends only on `x`, so the master optimum is the best-valued
//! location set that admits some admissible edge selection. Sets are scanned
//! in decreasing `sum_l theta_l`; the first set with a routing witness wins.
//! A witness is the shortest tour when it fits the budget, otherwise a
//! cycle cover of the depot and the set (cycles of three or more nodes) that
//! fits the budget and satisfies every pooled sub-tour cut.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::cuts::{CutPool, EdgeSet, LinearCut, RoutingCut, SecKind};
use crate::instance::Instance;
use crate::objective::{GroupPartition, Selection};
use crate::oracle::{tsp_length, TourLengths};
use crate::subset::{locations, tie_cmp};

use super::{check_guard, group_seeds, Deadline, SolveConfig, SolverError, MAX_TABLE_ENTRIES};

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub theta: Vec<f64>,
    pub x: Selection,
    pub y: EdgeSet,
    /// `sum_l theta_l`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterOutcome {
    Solved(MasterSolution),
    Infeasible,
    TimeLimit,
}

/// Solves the master problem for a given cut pool from scratch.
pub fn solve_master(
    inst: &Instance,
    part: &GroupPartition,
    pool: &CutPool,
    cfg: &SolveConfig,
) -> Result<MasterOutcome, SolverError> {
    check_guard(inst, cfg)?;
    let mut backend = MasterBackend::new(inst, part, false)?;
    for l in 0..pool.n_groups() {
        for c in pool.group(l) {
            backend.add_cut(c);
        }
    }
    Ok(backend.solve(pool.routing(), Deadline::after(cfg.time_limit)))
}

pub(crate) enum Witness {
    Tour(Vec<usize>),
    Cover(EdgeSet),
    None,
    Aborted,
}

/// Routing witnesses per location set, with a cache of sets that have none.
/// Adding cuts only removes witnesses, so the cache stays sound.
pub(crate) struct RouteFinder {
    tours: TourLengths,
    dead: HashSet<u64>,
    single_cycle: bool,
}

impl RouteFinder {
    pub(crate) fn new(inst: &Instance, single_cycle: bool) -> Self {
        RouteFinder { tours: TourLengths::new(inst), dead: HashSet::new(), single_cycle }
    }

    pub(crate) fn find(&mut self, inst: &Instance, mask: u64, cuts: &[RoutingCut], deadline: Deadline) -> Witness {
        if self.dead.contains(&mask) {
            return Witness::None;
        }
        let w = self.search(inst, mask, cuts, deadline);
        if matches!(w, Witness::None) {
            self.dead.insert(mask);
        }
        w
    }

    fn search(&mut self, inst: &Instance, mask: u64, cuts: &[RoutingCut], deadline: Deadline) -> Witness {
        let locs: Vec<usize> = locations(mask).collect();
        match locs.len() {
            0 => return Witness::Tour(vec![0, 0]),
            1 => {
                let i = locs[0];
                return if inst.within_budget(2.0 * inst.t(0, i)) { Witness::Tour(vec![0, i, 0]) } else { Witness::None };
            }
            2 => {
                let (i, j) = (locs[0], locs[1]);
                let len = inst.t(0, i) + inst.t(i, j) + inst.t(j, 0);
                return if inst.within_budget(len) { Witness::Tour(vec![0, i, j, 0]) } else { Witness::None };
            }
            _ => {}
        }
        match self.tours.get(inst, mask) {
            Some(len) if inst.within_budget(len) => {
                let order = tsp_length(inst, &Selection::from_mask(inst.m, mask))
                    .expect("tour length was available")
                    .order;
                return Witness::Tour(order);
            }
            Some(_) if self.single_cycle => return Witness::None,
            _ => {}
        }
        let mut search = CoverSearch::new(inst, mask, &locs, cuts, self.single_cycle, deadline);
        if search.open_cycle() {
            let mut y = EdgeSet::new();
            for &(a, b) in &search.edges {
                y.push(a, b);
            }
            Witness::Cover(y)
        } else if search.aborted {
            Witness::Aborted
        } else {
            Witness::None
        }
    }
}

/// `theta` table over every location set within the cardinality cap.
pub(crate) struct MasterBackend<'a> {
    inst: &'a Instance,
    n_groups: usize,
    masks: Vec<u64>,
    theta: Vec<f64>,
    finder: RouteFinder,
}

impl<'a> MasterBackend<'a> {
    pub(crate) fn new(inst: &'a Instance, part: &GroupPartition, single_cycle: bool) -> Result<Self, SolverError> {
        let cap = inst.cap_c.min(inst.m);
        let count: usize = (0..=cap).map(|k| binomial(inst.m, k)).sum();
        let entries = count.saturating_mul(part.len().max(1));
        if entries > MAX_TABLE_ENTRIES {
            return Err(SolverError::TableTooLarge { entries, limit: MAX_TABLE_ENTRIES });
        }
        let masks: Vec<u64> = (0u64..1 << inst.m).filter(|s| s.count_ones() as usize <= cap).collect();
        let seeds = group_seeds(inst, part);
        let mut theta = Vec::with_capacity(masks.len() * seeds.len());
        for _ in 0..masks.len() {
            theta.extend_from_slice(&seeds);
        }
        Ok(MasterBackend { inst, n_groups: seeds.len(), masks, theta, finder: RouteFinder::new(inst, single_cycle) })
    }

    pub(crate) fn add_cut(&mut self, cut: &LinearCut) {
        let l = cut.group;
        for (idx, &mask) in self.masks.iter().enumerate() {
            let v = cut.value_mask(mask);
            let slot = &mut self.theta[idx * self.n_groups + l];
            if v < *slot {
                *slot = v;
            }
        }
    }

    pub(crate) fn solve(&mut self, cuts: &[RoutingCut], deadline: Deadline) -> MasterOutcome {
        let g = self.n_groups;
        let totals: Vec<f64> = self.theta.chunks(g.max(1)).map(|row| row.iter().sum()).collect();
        let mut order: Vec<u32> = (0..self.masks.len() as u32).collect();
        let masks = &self.masks;
        order.sort_unstable_by(|&a, &b| {
            totals[b as usize]
                .partial_cmp(&totals[a as usize])
                .unwrap_or(Ordering::Equal)
                .then_with(|| tie_cmp(masks[a as usize], masks[b as usize]))
        });
        for idx in order {
            let idx = idx as usize;
            let mask = self.masks[idx];
            let y = match self.finder.find(self.inst, mask, cuts, deadline) {
                Witness::Tour(order) => EdgeSet::from_route(&order),
                Witness::Cover(y) => y,
                Witness::None => continue,
                Witness::Aborted => return MasterOutcome::TimeLimit,
            };
            return MasterOutcome::Solved(MasterSolution {
                theta: self.theta[idx * g..(idx + 1) * g].to_vec(),
                x: Selection::from_mask(self.inst.m, mask),
                y,
                value: totals[idx],
            });
        }
        MasterOutcome::Infeasible
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn bit(v: usize) -> u64 {
    if v == 0 {
        0
    } else {
        1 << (v - 1)
    }
}

struct PackedCut {
    kind: SecKind,
    set: u64,
    anchor: u64,
}

/// Depth-first enumeration of cycle covers under the budget and the pooled
/// sub-tour cuts. A cut is checked once all of its selected nodes sit on
/// closed cycles, since its left-hand side cannot change after that.
struct CoverSearch<'a> {
    inst: &'a Instance,
    nodes: Vec<usize>,
    cap: f64,
    min1: Vec<f64>,
    min2: Vec<f64>,
    covered: Vec<bool>,
    uncovered: usize,
    closed: u64,
    s_mask: u64,
    cuts: Vec<PackedCut>,
    edges: Vec<(usize, usize)>,
    path: Vec<usize>,
    cost: f64,
    lb_rest: f64,
    single_cycle: bool,
    deadline: Deadline,
    steps: u64,
    aborted: bool,
}

impl<'a> CoverSearch<'a> {
    fn new(
        inst: &'a Instance,
        s_mask: u64,
        locs: &[usize],
        cuts: &[RoutingCut],
        single_cycle: bool,
        deadline: Deadline,
    ) -> Self {
        let mut nodes = vec![0];
        nodes.extend_from_slice(locs);
        let n = nodes.len();
        let mut min1 = vec![f64::INFINITY; n];
        let mut min2 = vec![f64::INFINITY; n];
        for a in 0..n {
            let mut best = [f64::INFINITY; 2];
            for b in 0..n {
                if a == b {
                    continue;
                }
                let t = inst.t(nodes[a], nodes[b]);
                if t < best[0] {
                    best = [t, best[0]];
                } else if t < best[1] {
                    best[1] = t;
                }
            }
            min1[a] = best[0];
            min2[a] = best[0] + best[1];
        }
        let lb_rest = min2.iter().sum::<f64>() / 2.0;
        let cuts = cuts
            .iter()
            .filter_map(|c| {
                let set = c.node_set.iter().fold(0u64, |acc, &v| acc | bit(v));
                (set & s_mask != 0).then(|| PackedCut { kind: c.kind, set, anchor: c.anchor_k.map_or(0, bit) })
            })
            .collect();
        let t_max = inst.t_max;
        CoverSearch {
            inst,
            nodes,
            cap: t_max + 1e-9 * t_max.max(1.0),
            min1,
            min2,
            covered: vec![false; n],
            uncovered: n,
            closed: 0,
            s_mask,
            cuts,
            edges: Vec::with_capacity(n),
            path: Vec::with_capacity(n),
            cost: 0.0,
            lb_rest,
            single_cycle,
            deadline,
            steps: 0,
            aborted: false,
        }
    }

    fn tick(&mut self) -> bool {
        self.steps += 1;
        if self.steps.is_multiple_of(4096) && self.deadline.expired() {
            self.aborted = true;
        }
        self.aborted
    }

    fn cut_holds(&self, c: &PackedCut) -> bool {
        let mut cross = 0usize;
        let mut internal = 0usize;
        for &(a, b) in &self.edges {
            let (ia, ib) = (c.set & bit(a) != 0, c.set & bit(b) != 0);
            if ia && ib {
                internal += 1;
            } else if ia != ib {
                cross += 1;
            }
        }
        match c.kind {
            SecKind::Sec1 => cross >= if c.anchor & self.s_mask != 0 { 2 } else { 0 },
            SecKind::Sec2 => {
                let size = c.set.count_ones() as usize;
                let chosen = (c.set & self.s_mask).count_ones() as usize;
                size * internal <= (size - 1) * chosen
            }
        }
    }

    fn settled_cuts_hold(&self) -> bool {
        self.cuts
            .iter()
            .filter(|c| c.set & self.s_mask & !self.closed == 0)
            .all(|c| self.cut_holds(c))
    }

    fn open_cycle(&mut self) -> bool {
        if self.uncovered == 0 {
            return true;
        }
        let a = self.covered.iter().position(|&c| !c).expect("uncovered node");
        self.covered[a] = true;
        self.uncovered -= 1;
        self.lb_rest -= self.min2[a] / 2.0;
        self.path.push(a);
        if self.extend() {
            return true;
        }
        self.path.pop();
        self.lb_rest += self.min2[a] / 2.0;
        self.uncovered += 1;
        self.covered[a] = false;
        false
    }

    fn extend(&mut self) -> bool {
        if self.tick() {
            return false;
        }
        let start = self.path[0];
        let cur = *self.path.last().expect("non-empty path");
        if self.path.len() >= 3 && self.path[1] < cur && (!self.single_cycle || self.uncovered == 0) {
            let c = self.inst.t(self.nodes[cur], self.nodes[start]);
            if self.cost + c + self.lb_rest <= self.cap {
                let before = self.closed;
                for &p in &self.path {
                    self.closed |= bit(self.nodes[p]);
                }
                self.edges.push((self.nodes[cur], self.nodes[start]));
                self.cost += c;
                let cycle = std::mem::take(&mut self.path);
                if self.settled_cuts_hold() && self.open_cycle() {
                    return true;
                }
                self.path = cycle;
                self.cost -= c;
                self.edges.pop();
                self.closed = before;
                if self.aborted {
                    return false;
                }
            }
        }
        for v in 0..self.nodes.len() {
            if self.covered[v] {
                continue;
            }
            let c = self.inst.t(self.nodes[cur], self.nodes[v]);
            let rest = self.lb_rest - self.min2[v] / 2.0;
            let lb = rest + (self.min1[start] + self.min1[v]) / 2.0;
            if self.cost + c + lb > self.cap {
                continue;
            }
            self.covered[v] = true;
            self.uncovered -= 1;
            self.lb_rest = rest;
            self.edges.push((self.nodes[cur], self.nodes[v]));
            self.cost += c;
            self.path.push(v);
            if self.extend() {
                return true;
            }
            self.path.pop();
            self.cost -= c;
            self.edges.pop();
            self.lb_rest += self.min2[v] / 2.0;
            self.uncovered += 1;
            self.covered[v] = false;
            if self.aborted {
                return false;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuts::{find_subtours, sec_cuts_for, CutPool, SecVariant};
    use crate::fixtures::{two_cluster_fixture, t1};
    use crate::objective::partition_zones;
    use crate::solver::is_valid_tour;
    use std::time::Duration;

    fn far() -> Deadline {
        Deadline::after(Duration::from_secs(3600))
    }

    #[test]
    fn empty_pool_picks_largest_set() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let pool = CutPool::new(1);
        let MasterOutcome::Solved(sol) = solve_master(&inst, &part, &pool, &SolveConfig::default()).unwrap() else {
            panic!("master should be solvable");
        };
        assert_eq!(sol.x.locations(), vec![1, 2]);
        assert_eq!(sol.value, 1.0);
        assert!(is_valid_tour(&sol.x, &sol.y));
    }

    #[test]
    fn two_cluster_cover_then_sec_round() {
        let mut inst = two_cluster_fixture();
        inst.cap_c = 5;
        let part = partition_zones(&inst, 1);
        let mut pool = CutPool::new(1);
        let mut backend = MasterBackend::new(&inst, &part, false).unwrap();
        let MasterOutcome::Solved(sol) = backend.solve(pool.routing(), far()) else { panic!() };
        assert_eq!(sol.x.count(), 5);
        let comps = find_subtours(&sol.x, &sol.y).unwrap();
        assert!(comps.len() >= 2, "all five locations only fit as a cover with a sub-tour");
        let mut added = 0;
        for comp in comps.iter().filter(|c| !c.contains(&0)) {
            for cut in sec_cuts_for(&inst, comp, SecVariant::Both).unwrap() {
                assert!(!cut.is_satisfied(&sol.x, &sol.y));
                added += pool.add_routing(cut) as usize;
            }
        }
        assert!(added > 0);
        let MasterOutcome::Solved(next) = backend.solve(pool.routing(), far()) else { panic!() };
        assert!(pool.routing().iter().all(|c| c.is_satisfied(&next.x, &next.y)));
        assert!(next.value <= sol.value);
    }

    #[test]
    fn single_cycle_mode_only_returns_tours() {
        let mut inst = two_cluster_fixture();
        inst.cap_c = 5;
        let part = partition_zones(&inst, 1);
        let mut backend = MasterBackend::new(&inst, &part, true).unwrap();
        let MasterOutcome::Solved(sol) = backend.solve(&[], far()) else { panic!() };
        assert!(is_valid_tour(&sol.x, &sol.y));
        assert!(inst.within_budget(sol.y.cost(&inst)));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(20, 10), 184_756);
        assert_eq!((0..=6).map(|k| binomial(6, k)).sum::<usize>(), 64);
    }
}
