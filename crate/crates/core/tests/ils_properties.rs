use mcpr_core::fixtures::random_instance;
use mcpr_core::ils::{construct, local_search, or_opt, perturb, replace_1, replace_2, two_opt, RouteSolution, Screening};
use mcpr_core::instance::Instance;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A feasible, usually non-greedy route: construction followed by a few
/// perturbations.
fn shaken(inst: &Instance, seed: u64, rounds: usize) -> RouteSolution {
    let mut sol = construct(inst);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = vec![0; inst.m + 1];
    for _ in 0..rounds {
        perturb(inst, &mut sol, &mut rng, &mut history);
    }
    sol
}

fn instance(m: usize, zones: usize, seed: u64, budget_scale: f64, cap: usize) -> Instance {
    let mut inst = random_instance(m, zones, seed);
    inst.t_max *= budget_scale;
    inst.cap_c = cap.min(m);
    inst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_keep_feasibility_and_caches(
        seed in 0u64..1000, m in 4usize..12, scale in 0.3f64..2.0, cap in 1usize..12, rounds in 0usize..4,
    ) {
        let inst = instance(m, 12, seed, scale, cap);
        let mut sol = shaken(&inst, seed, rounds);
        prop_assert!(sol.is_coherent(&inst));
        for screening in [Screening::Taylor, Screening::Exact] {
            let before = sol.objective();
            replace_1(&inst, &mut sol, screening);
            prop_assert!(sol.is_coherent(&inst));
            replace_2(&inst, &mut sol, screening);
            prop_assert!(sol.is_coherent(&inst));
            prop_assert!(sol.objective() >= before);
        }
    }

    #[test]
    fn tour_moves_keep_the_set(seed in 0u64..1000, m in 3usize..12, rounds in 0usize..4) {
        let inst = instance(m, 8, seed, 1.5, m);
        let mut sol = shaken(&inst, seed, rounds);
        let (set, objective) = (sol.selection(), sol.objective());
        let len = sol.length();
        two_opt(&inst, &mut sol);
        prop_assert!(sol.length() <= len + 1e-12);
        let len = sol.length();
        or_opt(&inst, &mut sol);
        prop_assert!(sol.length() <= len + 1e-12);
        prop_assert_eq!(sol.selection(), set);
        prop_assert_eq!(sol.objective(), objective);
        prop_assert!(sol.is_coherent(&inst));
    }

    #[test]
    fn local_search_never_loses(seed in 0u64..1000, m in 3usize..12, scale in 0.3f64..2.0, rounds in 0usize..4) {
        let inst = instance(m, 10, seed, scale, m);
        let mut sol = shaken(&inst, seed, rounds);
        let before = sol.objective();
        local_search(&inst, &mut sol, Screening::Taylor);
        prop_assert!(sol.objective() >= before);
        prop_assert!(sol.is_coherent(&inst));
    }

    #[test]
    fn exact_replace_fixpoint_has_no_improving_swap(seed in 0u64..1000, m in 3usize..10, rounds in 0usize..4) {
        let inst = instance(m, 10, seed, 0.8, m);
        let mut sol = shaken(&inst, seed, rounds);
        replace_1(&inst, &mut sol, Screening::Exact);
        let order = sol.order().to_vec();
        for p in 1..order.len() - 1 {
            for h in sol.unvisited() {
                let mut swapped = order.clone();
                swapped[p] = h;
                let cand = RouteSolution::from_order(&inst, &swapped);
                let fits = inst.within_budget(cand.length());
                prop_assert!(!(fits && cand.objective() > sol.objective()), "swap {} -> {h} improves", order[p]);
            }
        }
        let mut again = sol.clone();
        prop_assert!(!replace_1(&inst, &mut again, Screening::Taylor));
    }

    #[test]
    fn perturb_is_reproducible(seed in 0u64..1000, m in 2usize..12) {
        let inst = instance(m, 6, seed, 1.0, m);
        prop_assert_eq!(shaken(&inst, seed, 5), shaken(&inst, seed, 5));
    }
}
