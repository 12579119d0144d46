//! Small canonical instances used by tests, examples and the CLI.

use crate::instance::{generate_synthetic, Instance, SyntheticConfig, TravelMatrix, Zone};

/// Two locations, one zone with `q = 1`, `U = 1`, `V = (1, 3)`, all travel
/// times 1, budget 3 and cap 2.
pub fn t1() -> Instance {
    let travel = TravelMatrix::from_rows(3, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
    let zones = vec![Zone { q: 1.0, u_comp: 1.0, v: vec![1.0, 3.0] }];
    Instance::new("t1", zones, travel, 3.0, 2).unwrap()
}

/// Synthetic instance with default generator settings.
pub fn random_instance(m: usize, n_zones: usize, seed: u64) -> Instance {
    generate_synthetic(&SyntheticConfig::new(m, n_zones, seed)).unwrap()
}

pub use crate::oracle::two_cluster_fixture;
