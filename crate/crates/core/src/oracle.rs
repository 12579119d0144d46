//! Ground truth: exact tour lengths by Held-Karp dynamic programming and a
//! brute-force optimum over all location subsets.

use std::collections::HashMap;
use std::time::Instant;

use thiserror::Error;

use crate::instance::{euclidean_travel_matrix, Instance, Zone};
use crate::objective::{eval_objective, Selection};
use crate::solver::{SolveReport, SolveStats, Status};
use crate::subset;

/// Largest set handled by [`tsp_length`].
pub const TSP_GUARD: usize = 18;
/// Largest `m` handled by [`brute_force_optimum`].
pub const BRUTE_FORCE_GUARD: usize = 14;
/// Largest `m` for which [`TourLengths`] tabulates every subset up front.
pub const FULL_TABLE_GUARD: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("set of {size} locations exceeds the Held-Karp guard |S| <= {guard}")]
    TourTooLarge { size: usize, guard: usize },
    #[error("instance has m = {m}; brute force requires m <= {guard}")]
    InstanceTooLarge { m: usize, guard: usize },
}

/// Shortest depot-anchored tour over a set of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct TourResult {
    pub length: f64,
    /// Node sequence starting and ending at the depot.
    pub order: Vec<usize>,
}

/// Sum of consecutive travel times along `order`.
pub fn route_length(inst: &Instance, order: &[usize]) -> f64 {
    order.windows(2).map(|w| inst.t(w[0], w[1])).sum()
}

/// Flips a closed tour so that its second node is smaller than its
/// second-to-last node.
pub fn canonical_orientation(order: &mut [usize]) {
    let n = order.len();
    if n > 3 && order[1] > order[n - 2] {
        order[1..n - 1].reverse();
    }
}

/// Exact shortest tour over `s` by Held-Karp.
pub fn tsp_length(inst: &Instance, s: &Selection) -> Result<TourResult, OracleError> {
    let nodes = s.locations();
    let k = nodes.len();
    if k > TSP_GUARD {
        return Err(OracleError::TourTooLarge { size: k, guard: TSP_GUARD });
    }
    if k == 0 {
        return Ok(TourResult { length: 0.0, order: vec![0, 0] });
    }
    let full = (1usize << k) - 1;
    let mut dp = vec![f64::INFINITY; (full + 1) * k];
    let mut parent = vec![u8::MAX; (full + 1) * k];
    for (j, &a) in nodes.iter().enumerate() {
        dp[(1 << j) * k + j] = inst.t(0, a);
    }
    for mask in 1..=full {
        for j in 0..k {
            if mask >> j & 1 == 0 {
                continue;
            }
            let cur = dp[mask * k + j];
            if !cur.is_finite() {
                continue;
            }
            for nxt in 0..k {
                if mask >> nxt & 1 == 1 {
                    continue;
                }
                let nm = mask | 1 << nxt;
                let cand = cur + inst.t(nodes[j], nodes[nxt]);
                if cand < dp[nm * k + nxt] {
                    dp[nm * k + nxt] = cand;
                    parent[nm * k + nxt] = j as u8;
                }
            }
        }
    }
    let (mut best, mut last) = (f64::INFINITY, 0);
    for j in 0..k {
        let c = dp[full * k + j] + inst.t(nodes[j], 0);
        if c < best {
            best = c;
            last = j;
        }
    }
    let mut rev = Vec::with_capacity(k);
    let (mut mask, mut j) = (full, last);
    loop {
        rev.push(nodes[j]);
        let p = parent[mask * k + j];
        mask &= !(1 << j);
        if p == u8::MAX {
            break;
        }
        j = p as usize;
    }
    let mut order = Vec::with_capacity(k + 2);
    order.push(0);
    order.extend(rev.into_iter().rev());
    order.push(0);
    canonical_orientation(&mut order);
    Ok(TourResult { length: route_length(inst, &order), order })
}

/// Shortest-tour lengths keyed by location bitmask.
///
/// For `m <= FULL_TABLE_GUARD` one dynamic program fills every subset;
/// otherwise lengths are computed per set on demand and memoized.
#[derive(Debug, Clone)]
pub struct TourLengths {
    full: Option<Vec<f64>>,
    memo: HashMap<u64, f64>,
}

impl TourLengths {
    pub fn new(inst: &Instance) -> Self {
        if inst.m <= FULL_TABLE_GUARD {
            TourLengths { full: Some(all_subset_lengths(inst)), memo: HashMap::new() }
        } else {
            TourLengths { full: None, memo: HashMap::new() }
        }
    }

    /// `None` when the set is too large for the exact dynamic program.
    pub fn get(&mut self, inst: &Instance, mask: u64) -> Option<f64> {
        if let Some(t) = &self.full {
            return Some(t[mask as usize]);
        }
        if let Some(&v) = self.memo.get(&mask) {
            return Some(v);
        }
        let len = tsp_length(inst, &Selection::from_mask(inst.m, mask)).ok()?.length;
        self.memo.insert(mask, len);
        Some(len)
    }
}

/// Held-Karp over all subsets of `[m]` at once.
fn all_subset_lengths(inst: &Instance) -> Vec<f64> {
    let m = inst.m;
    let size = 1usize << m;
    let mut path = vec![f64::INFINITY; size * m.max(1)];
    let mut out = vec![0.0; size];
    for j in 0..m {
        path[(1 << j) * m + j] = inst.t(0, j + 1);
    }
    for mask in 1..size {
        let mut best = f64::INFINITY;
        for j in 0..m {
            if mask >> j & 1 == 0 {
                continue;
            }
            let cur = path[mask * m + j];
            best = best.min(cur + inst.t(j + 1, 0));
            for nxt in 0..m {
                if mask >> nxt & 1 == 1 {
                    continue;
                }
                let slot = &mut path[(mask | 1 << nxt) * m + nxt];
                let cand = cur + inst.t(j + 1, nxt + 1);
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
        out[mask] = best;
    }
    out
}

/// Optimum by enumerating every subset within the cardinality cap.
pub fn brute_force_optimum(inst: &Instance) -> Result<SolveReport, OracleError> {
    if inst.m > BRUTE_FORCE_GUARD {
        return Err(OracleError::InstanceTooLarge { m: inst.m, guard: BRUTE_FORCE_GUARD });
    }
    let start = Instant::now();
    let m = inst.m;
    let lengths = all_subset_lengths(inst);
    let (mut best_mask, mut best_f) = (0u64, 0.0);
    for mask in 1u64..1 << m {
        if mask.count_ones() as usize > inst.cap_c || !inst.within_budget(lengths[mask as usize]) {
            continue;
        }
        let f = eval_objective(inst, &Selection::from_mask(m, mask));
        if f > best_f || (f == best_f && subset::lex_cmp(mask, best_mask).is_lt()) {
            best_f = f;
            best_mask = mask;
        }
    }
    let best_x = Selection::from_mask(m, best_mask);
    let tour = tsp_length(inst, &best_x)?;
    Ok(SolveReport {
        best_x,
        best_tour: tour.order,
        objective: best_f,
        bound: Some(best_f),
        status: Status::Optimal,
        stats: SolveStats::default(),
        wall_time: start.elapsed(),
        trace: Vec::new(),
    })
}

/// Five locations in two clusters on opposite sides of the depot. Each
/// cluster fits the budget on its own, no mix of the two does, and a
/// cycle cover of both clusters (with a sub-tour) also fits.
pub fn two_cluster_fixture() -> Instance {
    let coords = [(0.0, 0.0), (-4.0, 0.5), (-4.0, -0.5), (4.0, 0.5), (4.0, -0.5), (4.5, 0.0)];
    let travel = euclidean_travel_matrix(&coords).unwrap();
    let zones = vec![
        Zone { q: 10.0, u_comp: 1.0, v: vec![1.5, 1.2, 1.0, 0.8, 0.9] },
        Zone { q: 20.0, u_comp: 1.0, v: vec![0.6, 0.7, 1.1, 1.3, 0.9] },
        Zone { q: 15.0, u_comp: 1.0, v: vec![1.0, 1.0, 1.0, 1.0, 1.0] },
    ];
    Instance::new("two_cluster", zones, travel, 12.0, 3).unwrap()
}
