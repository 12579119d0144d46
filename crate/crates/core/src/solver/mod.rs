//! Exact methods built on a desk-scale master-problem backend.
//!
//! The master problem maximizes `sum_l theta_l` over location sets within the
//! cardinality cap, degree-2 edge selections within the time budget that
//! satisfy every pooled sub-tour cut, and `theta_l` bounded by the pooled
//! objective cuts. [`master`] solves it exactly by best-first enumeration of
//! location sets; the three drivers differ in how they feed cuts back.

mod bnc;
mod master;
mod mtz;
mod ncp;

use std::collections::HashSet;
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cuts::{CutGenerator, CutOrigin, CutPool, EdgeSet, SecVariant};
use crate::instance::Instance;
use crate::objective::{eval_group, GroupPartition, Selection};
use crate::oracle::OracleError;

pub use bnc::nested_branch_and_cut;
pub use master::{solve_master, MasterOutcome, MasterSolution};
pub use mtz::cp_mtz;
pub use ncp::nested_cutting_plane;

/// Default bound on `m` for the exact backend.
pub const DEFAULT_MAX_M: usize = 24;
/// Largest master table (subsets times groups) the backend will allocate.
const MAX_TABLE_ENTRIES: usize = 1 << 26;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("instance has m = {m}; the exact backend requires m <= {guard}")]
    TooLarge { m: usize, guard: usize },
    #[error("master table of {entries} entries exceeds the limit of {limit}; lower C or the group count")]
    TableTooLarge { entries: usize, limit: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Which objective-cut families are added at a violating anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutFamilies {
    pub oa: bool,
    pub sub1: bool,
    pub sub2: bool,
}

impl Default for CutFamilies {
    fn default() -> Self {
        CutFamilies { oa: true, sub1: true, sub2: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Tolerance of the `theta_l <= Psi_l + epsilon` stopping test.
    pub epsilon: f64,
    /// Scale `epsilon` by `max(1, |Psi_l|)` instead of using it as is.
    pub relative_epsilon: bool,
    /// Number of zone groups `L`.
    pub groups: usize,
    pub time_limit: Duration,
    pub sec_variant: SecVariant,
    pub families: CutFamilies,
    /// Guard on `m` for the exact backend.
    pub max_m: usize,
    /// Collect one [`TraceRow`] per outer iteration.
    pub trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon: 1e-6,
            relative_epsilon: false,
            groups: 20,
            time_limit: Duration::from_secs(3600),
            sec_variant: SecVariant::default(),
            families: CutFamilies::default(),
            max_m: DEFAULT_MAX_M,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "OPTIMAL",
            Status::Feasible => "FEASIBLE",
            Status::Infeasible => "INFEASIBLE",
            Status::TimeLimit => "TIME_LIMIT",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub outer_iters: usize,
    /// Inner rounds that added sub-tour cuts.
    pub sec_rounds: usize,
    pub master_solves: usize,
    pub cuts_oa: usize,
    pub cuts_sub1: usize,
    pub cuts_sub2: usize,
    pub cuts_sec1: usize,
    pub cuts_sec2: usize,
    /// Distinct valid-tour candidates collected (the solution pool).
    pub pool_size: usize,
}

impl SolveStats {
    pub fn objective_cuts(&self) -> usize {
        self.cuts_oa + self.cuts_sub1 + self.cuts_sub2
    }

    pub fn total_cuts(&self) -> usize {
        self.objective_cuts() + self.cuts_sec1 + self.cuts_sec2
    }
}

/// One outer iteration of an exact method.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub theta_sum: f64,
    pub objective: f64,
    pub cuts_added: usize,
    pub sec_rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub best_x: Selection,
    /// Depot-anchored visiting order, `[0, .., 0]`.
    pub best_tour: Vec<usize>,
    pub objective: f64,
    /// Proven upper bound, when the method has one.
    pub bound: Option<f64>,
    pub status: Status,
    pub stats: SolveStats,
    pub wall_time: Duration,
    pub trace: Vec<TraceRow>,
}

/// `theta_l(x) = min(sum_{n in D_l} q_n, min over pooled cuts of alpha^T x + beta)`.
pub fn theta_upper_bound(pool: &CutPool, part: &GroupPartition, inst: &Instance, x: &Selection) -> Vec<f64> {
    theta_from_pool(pool, &group_seeds(inst, part), x.to_mask())
}

pub(crate) fn group_seeds(inst: &Instance, part: &GroupPartition) -> Vec<f64> {
    part.groups()
        .iter()
        .map(|g| g.iter().map(|&n| inst.zones[n].q).sum())
        .collect()
}

pub(crate) fn theta_from_pool(pool: &CutPool, seeds: &[f64], mask: u64) -> Vec<f64> {
    seeds
        .iter()
        .enumerate()
        .map(|(l, &seed)| pool.group(l).iter().map(|c| c.value_mask(mask)).fold(seed, f64::min))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Deadline(Instant);

impl Deadline {
    pub(crate) fn after(limit: Duration) -> Self {
        Deadline(Instant::now().checked_add(limit).unwrap_or_else(|| Instant::now() + Duration::from_secs(86_400 * 365)))
    }

    pub(crate) fn expired(&self) -> bool {
        Instant::now() >= self.0
    }
}

pub(crate) fn check_guard(inst: &Instance, cfg: &SolveConfig) -> Result<(), SolverError> {
    if inst.m > cfg.max_m || inst.m > 63 {
        return Err(SolverError::TooLarge { m: inst.m, guard: cfg.max_m.min(63) });
    }
    Ok(())
}

/// Whether `y` is a single depot-anchored cycle over the selected locations.
pub(crate) fn is_valid_tour(x: &Selection, y: &EdgeSet) -> bool {
    if x.count() == 0 {
        return true;
    }
    matches!(crate::cuts::find_subtours(x, y), Ok(c) if c.len() == 1)
}

/// Walks a single cycle through the depot.
pub(crate) fn route_from_edges(y: &EdgeSet) -> Vec<usize> {
    if y.is_empty() {
        return vec![0, 0];
    }
    let mut order = vec![0];
    let mut used = vec![false; y.len()];
    let mut cur = 0;
    loop {
        let next = y
            .edges()
            .iter()
            .enumerate()
            .find(|(i, &(a, b))| !used[*i] && (a == cur || b == cur));
        let Some((i, &(a, b))) = next else { break };
        used[i] = true;
        cur = if a == cur { b } else { a };
        order.push(cur);
        if cur == 0 {
            break;
        }
    }
    crate::oracle::canonical_orientation(&mut order);
    order
}

/// Stopping test shared by the drivers. Returns the groups that still need
/// cuts at `x`, or `None` when `x` is certified.
pub(crate) fn groups_needing_cuts(
    inst: &Instance,
    part: &GroupPartition,
    cfg: &SolveConfig,
    theta: &[f64],
    x: &Selection,
) -> Option<Vec<usize>> {
    let psi: Vec<f64> = (0..part.len()).map(|l| eval_group(inst, part, l, x)).collect();
    let tol = |v: f64| if cfg.relative_epsilon { cfg.epsilon * v.abs().max(1.0) } else { cfg.epsilon };
    let violating: Vec<usize> = (0..part.len()).filter(|&l| theta[l] > psi[l] + tol(psi[l])).collect();
    if !violating.is_empty() {
        return Some(violating);
    }
    let f: f64 = psi.iter().sum();
    let gap: f64 = theta.iter().sum::<f64>() - f;
    if gap <= tol(f) {
        return None;
    }
    // Every group passes on its own but the summed slack does not; tighten
    // wherever theta is still above Psi.
    let loose: Vec<usize> = (0..part.len()).filter(|&l| theta[l] > psi[l]).collect();
    if loose.is_empty() {
        None
    } else {
        Some(loose)
    }
}

/// Generates the configured cut families at `x` for the given groups and
/// adds them to the pool. Returns the cuts that were new.
pub(crate) fn add_objective_cuts(
    gen: &mut CutGenerator<'_>,
    pool: &mut CutPool,
    families: CutFamilies,
    groups: &[usize],
    x: &Selection,
    stats: &mut SolveStats,
) -> Vec<crate::cuts::LinearCut> {
    let mut added = Vec::new();
    for &l in groups {
        let mut cuts = Vec::with_capacity(3);
        if families.oa {
            cuts.push(gen.oa(l, x));
        }
        if families.sub1 {
            cuts.push(gen.submodular_1(l, x));
        }
        if families.sub2 {
            cuts.push(gen.submodular_2(l, x));
        }
        for c in cuts {
            if pool.add(c.clone()) {
                match c.origin {
                    CutOrigin::OuterApprox => stats.cuts_oa += 1,
                    CutOrigin::Submodular1 => stats.cuts_sub1 += 1,
                    CutOrigin::Submodular2 => stats.cuts_sub2 += 1,
                }
                added.push(c);
            }
        }
    }
    added
}

/// Incumbent, counters and trace shared by the drivers.
pub(crate) struct RunState {
    started: Instant,
    m: usize,
    best: Option<(f64, Selection, Vec<usize>)>,
    seen: HashSet<u64>,
    pub(crate) stats: SolveStats,
    pub(crate) trace: Vec<TraceRow>,
    keep_trace: bool,
}

impl RunState {
    pub(crate) fn new(inst: &Instance, cfg: &SolveConfig) -> Self {
        RunState {
            started: Instant::now(),
            m: inst.m,
            best: None,
            seen: HashSet::new(),
            stats: SolveStats::default(),
            trace: Vec::new(),
            keep_trace: cfg.trace,
        }
    }

    /// Records a valid tour; returns false when the set was already pooled.
    pub(crate) fn offer(&mut self, f: f64, x: &Selection, route: Vec<usize>) -> bool {
        let fresh = self.seen.insert(x.to_mask());
        self.stats.pool_size = self.seen.len();
        if self.best.as_ref().is_none_or(|(b, _, _)| f > *b) {
            self.best = Some((f, x.clone(), route));
        }
        fresh
    }

    pub(crate) fn incumbent_value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }

    pub(crate) fn record(&mut self, row: TraceRow) {
        if self.keep_trace {
            self.trace.push(row);
        }
    }

    pub(crate) fn finish(self, status: Status, bound: Option<f64>) -> SolveReport {
        let (objective, best_x, best_tour) = self.best.unwrap_or_else(|| (0.0, Selection::empty(self.m), vec![0, 0]));
        let bound = bound.map(|b| b.max(objective));
        SolveReport { best_x, best_tour, objective, bound, status, stats: self.stats, wall_time: self.started.elapsed(), trace: self.trace }
    }
}

/// Adds the configured sub-tour cuts for every depot-free component of `y`.
pub(crate) fn add_sec_cuts(
    inst: &Instance,
    pool: &mut CutPool,
    variant: SecVariant,
    x: &Selection,
    y: &EdgeSet,
    stats: &mut SolveStats,
) -> usize {
    let comps = crate::cuts::find_subtours(x, y).expect("master returned a degree-feasible cover");
    let mut added = 0;
    for comp in comps.iter().filter(|c| !c.contains(&0)) {
        for cut in crate::cuts::sec_cuts_for(inst, comp, variant).expect("cover cycles have three or more nodes") {
            let kind = cut.kind;
            if pool.add_routing(cut) {
                added += 1;
                match kind {
                    crate::cuts::SecKind::Sec1 => stats.cuts_sec1 += 1,
                    crate::cuts::SecKind::Sec2 => stats.cuts_sec2 += 1,
                }
            }
        }
    }
    added
}
