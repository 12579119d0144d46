//! Cutting plane over a single-tour master: every candidate the master
//! returns is already a feasible route, so only objective cuts are added.
//! The master is equivalent to the MTZ routing formulation restricted to
//! the sets whose shortest tour fits the budget.

use crate::instance::Instance;

use super::ncp::outer_loop;
use super::{SolveConfig, SolveReport, SolverError};

pub fn cp_mtz(inst: &Instance, cfg: &SolveConfig) -> Result<SolveReport, SolverError> {
    outer_loop(inst, cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_cluster_fixture, random_instance};
    use crate::oracle::brute_force_optimum;
    use crate::solver::Status;

    #[test]
    fn agrees_with_brute_force_without_sec_rounds() {
        let mut clusters = two_cluster_fixture();
        clusters.cap_c = 5;
        for inst in [clusters, random_instance(9, 5, 11), random_instance(7, 4, 2)] {
            let r = cp_mtz(&inst, &SolveConfig { groups: 2, ..SolveConfig::default() }).unwrap();
            let bf = brute_force_optimum(&inst).unwrap();
            assert_eq!(r.status, Status::Optimal);
            assert_eq!(r.stats.sec_rounds, 0);
            assert!((r.objective - bf.objective).abs() <= 1e-6);
        }
    }
}
