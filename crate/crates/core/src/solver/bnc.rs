//! Single-tree variant of the nested scheme. One best-first queue of
//! location sets is kept for the whole run; keys are refreshed lazily from
//! the cut pool when a set reaches the top, and candidates are checked as
//! they surface instead of re-solving the master after every cut round.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cuts::{CutGenerator, CutPool};
use crate::instance::Instance;
use crate::objective::{eval_objective, partition_zones, Selection};
use crate::subset::tie_cmp;

use super::master::{RouteFinder, Witness};
use super::{
    add_objective_cuts, add_sec_cuts, check_guard, group_seeds, groups_needing_cuts, is_valid_tour,
    route_from_edges, theta_from_pool, Deadline, RunState, SolveConfig, SolveReport, SolverError, Status, TraceRow,
    MAX_TABLE_ENTRIES,
};

#[derive(Debug, Clone, Copy)]
struct Node {
    key: f64,
    mask: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then_with(|| tie_cmp(other.mask, self.mask))
    }
}

pub fn nested_branch_and_cut(inst: &Instance, cfg: &SolveConfig) -> Result<SolveReport, SolverError> {
    check_guard(inst, cfg)?;
    let deadline = Deadline::after(cfg.time_limit);
    let part = partition_zones(inst, cfg.groups);
    let seeds = group_seeds(inst, &part);
    let mut pool = CutPool::new(part.len());
    let mut gen = CutGenerator::new(inst, &part);
    let mut finder = RouteFinder::new(inst, false);
    let mut run = RunState::new(inst, cfg);

    let cap = inst.cap_c.min(inst.m) as u32;
    let start_key: f64 = seeds.iter().sum();
    let nodes: Vec<Node> = (0u64..1 << inst.m)
        .filter(|s| s.count_ones() <= cap)
        .map(|mask| Node { key: start_key, mask })
        .collect();
    if nodes.len() > MAX_TABLE_ENTRIES {
        return Err(SolverError::TableTooLarge { entries: nodes.len(), limit: MAX_TABLE_ENTRIES });
    }
    let mut heap = BinaryHeap::from(nodes);
    let tol = |v: f64| if cfg.relative_epsilon { cfg.epsilon * v.abs().max(1.0) } else { cfg.epsilon };

    while let Some(top) = heap.pop() {
        if deadline.expired() {
            return Ok(run.finish(Status::TimeLimit, Some(top.key)));
        }
        if let Some(inc) = run.incumbent_value() {
            if top.key <= inc + tol(inc) {
                return Ok(run.finish(Status::Optimal, Some(top.key)));
            }
        }
        let theta = theta_from_pool(&pool, &seeds, top.mask);
        let fresh: f64 = theta.iter().sum();
        if fresh < top.key {
            heap.push(Node { key: fresh, mask: top.mask });
            continue;
        }
        run.stats.master_solves += 1;
        let y = match finder.find(inst, top.mask, pool.routing(), deadline) {
            Witness::Tour(order) => crate::cuts::EdgeSet::from_route(&order),
            Witness::Cover(y) => y,
            Witness::None => continue,
            Witness::Aborted => return Ok(run.finish(Status::TimeLimit, Some(top.key))),
        };
        let x = Selection::from_mask(inst.m, top.mask);
        if !is_valid_tour(&x, &y) {
            run.stats.sec_rounds += 1;
            add_sec_cuts(inst, &mut pool, cfg.sec_variant, &x, &y, &mut run.stats);
            heap.push(top);
            continue;
        }
        run.stats.outer_iters += 1;
        let f = eval_objective(inst, &x);
        run.offer(f, &x, route_from_edges(&y));
        let Some(groups) = groups_needing_cuts(inst, &part, cfg, &theta, &x) else {
            run.record(TraceRow { iteration: run.stats.outer_iters, theta_sum: fresh, objective: f, cuts_added: 0, sec_rounds: 0 });
            return Ok(run.finish(Status::Optimal, Some(fresh)));
        };
        let added = add_objective_cuts(&mut gen, &mut pool, cfg.families, &groups, &x, &mut run.stats);
        run.record(TraceRow {
            iteration: run.stats.outer_iters,
            theta_sum: fresh,
            objective: f,
            cuts_added: added.len(),
            sec_rounds: 0,
        });
        let key: f64 = theta_from_pool(&pool, &seeds, top.mask).iter().sum();
        if added.is_empty() || key >= fresh {
            log::warn!("candidate revisited without progress; stopping at gap {:e}", fresh - f);
            return Ok(run.finish(Status::Optimal, Some(fresh)));
        }
        heap.push(Node { key, mask: top.mask });
    }
    let bound = run.incumbent_value();
    Ok(run.finish(if bound.is_some() { Status::Optimal } else { Status::Infeasible }, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_cluster_fixture, random_instance, t1};
    use crate::oracle::brute_force_optimum;
    use crate::solver::nested_cutting_plane;

    #[test]
    fn t1_optimum() {
        let r = nested_branch_and_cut(&t1(), &SolveConfig { groups: 1, ..SolveConfig::default() }).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective - 0.8).abs() < 1e-12);
    }

    #[test]
    fn two_cluster_adds_secs() {
        let mut inst = two_cluster_fixture();
        inst.cap_c = 5;
        let r = nested_branch_and_cut(&inst, &SolveConfig { groups: 1, ..SolveConfig::default() }).unwrap();
        assert!(r.stats.sec_rounds >= 1);
        assert!((r.objective - brute_force_optimum(&inst).unwrap().objective).abs() <= 1e-6);
    }

    #[test]
    fn agrees_with_ncp_and_oracle() {
        for seed in 0..8 {
            let inst = random_instance(8, 5, 100 + seed);
            let cfg = SolveConfig { groups: 3, epsilon: 1e-10, ..SolveConfig::default() };
            let a = nested_branch_and_cut(&inst, &cfg).unwrap();
            let b = nested_cutting_plane(&inst, &cfg).unwrap();
            let o = brute_force_optimum(&inst).unwrap();
            assert!((a.objective - o.objective).abs() <= 1e-9, "seed {seed}");
            assert!((b.objective - o.objective).abs() <= 1e-9, "seed {seed}");
        }
    }
}
