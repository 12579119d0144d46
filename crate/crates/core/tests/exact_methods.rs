use mcpr_core::fixtures::random_instance;
use mcpr_core::instance::parse_instance;
use mcpr_core::model::{build_conic_model, build_li_milp, build_mtz_model, parse_lp, write_lp, WBounds};
use mcpr_core::oracle::{brute_force_optimum, route_length};
use mcpr_core::solver::{cp_mtz, nested_branch_and_cut, nested_cutting_plane, SolveConfig, Status};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_methods_match_brute_force(
        seed in 0u64..10_000, m in 2usize..10, zones in 1usize..15, groups in 1usize..6,
        scale in 0.2f64..1.8, cap in 1usize..10,
    ) {
        let mut inst = random_instance(m, zones, seed);
        inst.t_max *= scale;
        inst.cap_c = cap.min(m);
        let cfg = SolveConfig { groups, epsilon: 1e-10, ..SolveConfig::default() };
        let best = brute_force_optimum(&inst).unwrap().objective;
        for r in [
            nested_cutting_plane(&inst, &cfg).unwrap(),
            nested_branch_and_cut(&inst, &cfg).unwrap(),
            cp_mtz(&inst, &cfg).unwrap(),
        ] {
            prop_assert_eq!(r.status, Status::Optimal);
            prop_assert!((r.objective - best).abs() <= 1e-9);
            prop_assert!(r.bound.unwrap() >= r.objective);
            prop_assert!(inst.within_budget(route_length(&inst, &r.best_tour)));
            prop_assert!(r.best_x.count() <= inst.cap_c);
        }
    }

    #[test]
    fn instance_text_round_trips(seed in 0u64..10_000, m in 1usize..15, zones in 1usize..20) {
        let inst = random_instance(m, zones, seed);
        prop_assert_eq!(parse_instance(&inst.to_text()).unwrap(), inst);
    }

    #[test]
    fn lp_exports_round_trip(seed in 0u64..10_000, m in 1usize..7, zones in 1usize..5) {
        let inst = random_instance(m, zones, seed);
        let li = build_li_milp(&inst, &WBounds::default_for(&inst)).unwrap();
        for model in [li, build_conic_model(&inst).model, build_mtz_model(&inst)] {
            let text = write_lp(&model);
            prop_assert_eq!(write_lp(&parse_lp(&text).unwrap()), text);
        }
    }
}
