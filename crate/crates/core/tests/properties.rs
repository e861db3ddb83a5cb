use proptest::prelude::*;

use admcap::aggregation::{build_aggregate_mdp, build_epsilon_partition, lift_policy};
use admcap::evaluation::{always_serve_policy, matched_action_percentage, myopic_policy, simulate, SimConfig};
use admcap::model::{
    apply_transition, enumerate_arrival_vectors, immediate_cost, truncated_poisson, Class, Costs, LoadKind,
    ModelConfig, SegmentKind,
};
use admcap::solve::{policy_gain, relative_value_iteration, RviOptions};
use admcap::space::{build_instance, enumerate_actions, MdpInstance};

fn small_config() -> impl Strategy<Value = ModelConfig> {
    let shape = prop_oneof![(Just(2usize), 1u32..=3), (Just(3usize), Just(1u32))];
    let costs = (
        prop::sample::select(vec![50.0, 100.0, 150.0]),
        prop::sample::select(vec![100.0, 150.0, 200.0, 300.0]),
        prop::sample::select(vec![50.0, 150.0, 250.0]),
    );
    let load = prop::sample::select(vec![LoadKind::EL, LoadKind::FL, LoadKind::BL]);
    let seg = prop::sample::select(vec![SegmentKind::ES, SegmentKind::HS, SegmentKind::LS]);
    (shape, prop::sample::select(vec![1u32, 2, 5]), costs, load, seg).prop_map(
        |((k, a), m, (cr, e1, e2), load, seg)| {
            ModelConfig::with_profiles(m, k, a, load, seg, Costs::new(200.0, cr, e1, e2)).unwrap()
        },
    )
}

fn build(cfg: &ModelConfig, eliminate: bool) -> MdpInstance {
    build_instance(cfg, eliminate).unwrap()
}

fn opt_gain(inst: &MdpInstance) -> f64 {
    relative_value_iteration(&inst.mdp, &RviOptions::default()).unwrap().gain
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_poisson_is_a_distribution(rate in 0.05f64..4.0, max in 0u32..8) {
        let p = truncated_poisson(rate, max);
        prop_assert_eq!(p.len(), max as usize + 1);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_rows_sum_to_one(cfg in small_config()) {
        let inst = build(&cfg, false);
        for p in 0..inst.mdp.num_posts() {
            let (_, q) = inst.mdp.successors(p);
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transitions_stay_in_the_state_space(cfg in small_config(), pick in any::<prop::sample::Index>()) {
        let inst = build(&cfg, false);
        let s = inst.state(pick.index(inst.num_states()));
        let k = cfg.horizon;
        for d in enumerate_actions(&s, &cfg) {
            prop_assert!(immediate_cost(&s, &d, &cfg).unwrap() >= 0.0);
            for v in enumerate_arrival_vectors(&cfg) {
                let t = apply_transition(&s, &d, &v.counts, &cfg).unwrap();
                prop_assert!(inst.space.index_of(&t).is_some());
                prop_assert_eq!(t.x.get(Class::Low, 0), 0);
                for c in Class::ALL {
                    prop_assert_eq!(t.x.get(c, k - 1), 0);
                }
            }
        }
    }

    #[test]
    fn elimination_keeps_a_subset_and_the_gain(cfg in small_config()) {
        let full = build(&cfg, false);
        let reduced = build(&cfg, true);
        prop_assert_eq!(full.num_states(), reduced.num_states());
        for s in 0..full.num_states() {
            let kept = reduced.mdp.labels(s);
            prop_assert!(!kept.is_empty());
            prop_assert!(kept.iter().all(|d| full.mdp.labels(s).contains(d)));
        }
        let (g, gr) = (opt_gain(&full), opt_gain(&reduced));
        prop_assert!((g - gr).abs() <= 1e-7 * g.abs().max(1.0), "{} vs {}", g, gr);
    }

    #[test]
    fn power_of_two_cost_scaling(cfg in small_config(), e in -3i32..=3) {
        let f = 2f64.powi(e);
        let a = relative_value_iteration(&build(&cfg, false).mdp, &RviOptions::default()).unwrap();
        let scaled = cfg.with_costs(cfg.costs.scaled(f));
        let b = relative_value_iteration(&build(&scaled, false).mdp, &RviOptions::default()).unwrap();
        prop_assert_eq!(a.choices, b.choices);
        prop_assert!((b.gain - f * a.gain).abs() <= 1e-9 * (f * a.gain).abs().max(1.0));
    }

    #[test]
    fn heuristics_never_beat_the_optimum(cfg in small_config(), overflow in any::<bool>()) {
        let inst = build(&cfg, false);
        let g = opt_gain(&inst);
        for p in [myopic_policy(&inst.mdp), always_serve_policy(&inst, overflow)] {
            prop_assert!(policy_gain(&inst.mdp, &p).unwrap() >= g - 1e-9 * g.abs().max(1.0));
        }
    }

    #[test]
    fn matched_action_percentage_is_symmetric(cfg in small_config()) {
        let inst = build(&cfg, false);
        let p = myopic_policy(&inst.mdp);
        let q = always_serve_policy(&inst, false);
        let pq = matched_action_percentage(&p, &q).unwrap();
        prop_assert_eq!(pq, matched_action_percentage(&q, &p).unwrap());
        prop_assert!((0.0..=100.0).contains(&pq));
        prop_assert_eq!(matched_action_percentage(&p, &p).unwrap(), 100.0);
    }

    #[test]
    fn epsilon_aggregates_are_stochastic_and_lift(cfg in small_config(), eps in 0.0f64..=1.0) {
        let inst = build(&cfg, false);
        let part = build_epsilon_partition(&inst.mdp, eps).unwrap();
        part.validate(&inst.mdp).unwrap();
        let agg = build_aggregate_mdp(&inst.mdp, &part).unwrap();
        for p in 0..agg.num_posts() {
            prop_assert!((agg.successors(p).1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let sol = relative_value_iteration(&agg, &RviOptions::default()).unwrap();
        let lifted = lift_policy(&sol.policy, &part).unwrap();
        let g = opt_gain(&inst);
        prop_assert!(policy_gain(&inst.mdp, &lifted).unwrap() >= g - 1e-9 * g.abs().max(1.0));
    }

    #[test]
    fn simulation_is_a_function_of_the_seed(cfg in small_config(), seed in any::<u64>()) {
        let inst = build(&cfg, false);
        let p = myopic_policy(&inst.mdp);
        let sc = SimConfig { seed, warmup: 100, horizon: 2_000, batches: 10, ..SimConfig::default() };
        let a = simulate(&inst, &p, &sc).unwrap();
        let b = simulate(&inst, &p, &sc).unwrap();
        prop_assert_eq!(a, b);
    }
}
