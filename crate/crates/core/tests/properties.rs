//! Property-based invariants across the crate.

use proptest::prelude::*;

use sectionflow_core::cases;
use sectionflow_core::env::{economic_cost, Environment, EnvConfig, Scenario, Split, TaskContext};
use sectionflow_core::grid::{
    build_graph, parse_matpower_case, write_matpower_case, Branch, Bus, BusType, GenCost,
    Generator, GridCase, Section,
};
use sectionflow_core::powerflow::{
    generator_outputs, residual, section_flow, solve_ac, solve_dc,
};
use sectionflow_core::rng::Rng;
use sectionflow_core::tensor::{Tape, Tensor};

/// Small synthetic case: a chain of `n` buses with a generator on bus 1.
fn arb_case() -> impl Strategy<Value = GridCase> {
    (2usize..7, 0.02f64..0.3, 0.0f64..40.0, -5.0f64..20.0).prop_map(|(n, x, pd, qd)| {
        let mut buses = vec![Bus {
            id: 1,
            bus_type: BusType::Slack,
            pd: 0.0,
            qd: 0.0,
            vm: 1.0,
            va: 0.0,
            vmin: 0.9,
            vmax: 1.1,
        }];
        let mut branches = Vec::new();
        for i in 2..=n as u32 {
            buses.push(Bus {
                id: i,
                bus_type: BusType::Pq,
                pd,
                qd,
                vm: 1.0,
                va: 0.0,
                vmin: 0.9,
                vmax: 1.1,
            });
            branches.push(Branch {
                from_bus: i - 1,
                to_bus: i,
                r: x / 10.0,
                x,
                b: 0.01,
                rate: 200.0,
                status: true,
            });
        }
        let total = pd * (n - 1) as f64;
        GridCase {
            base_mva: 100.0,
            buses,
            branches,
            generators: vec![Generator {
                bus: 1,
                pg: total,
                qg: 0.0,
                qmax: 300.0,
                qmin: -300.0,
                pmax: 400.0,
                pmin: 0.0,
                status: true,
            }],
            gencost: vec![GenCost::DEFAULT],
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn case_roundtrip_is_field_identical(case in arb_case()) {
        let text = write_matpower_case(&case);
        let reparsed = parse_matpower_case(&text).unwrap();
        prop_assert_eq!(case, reparsed);
    }

    #[test]
    fn graph_is_stable_under_row_shuffles(seed in 0u64..1000) {
        let case = cases::bench30();
        let reference = build_graph(&case);

        let mut rng = Rng::seed_from(seed);
        let mut shuffled = case.clone();
        // shuffle declaration order while keeping ids
        for list_len in [shuffled.buses.len(), shuffled.branches.len()] {
            let _ = list_len;
        }
        for i in (1..shuffled.buses.len()).rev() {
            let j = rng.below(i + 1);
            shuffled.buses.swap(i, j);
        }
        for i in (1..shuffled.branches.len()).rev() {
            let j = rng.below(i + 1);
            shuffled.branches.swap(i, j);
        }
        prop_assert_eq!(reference, build_graph(&shuffled));
    }

    #[test]
    fn softmax_rows_normalise_and_shift_invariant(
        rows in prop::collection::vec(prop::collection::vec(-30.0f64..30.0, 4), 1..6),
        shift in -50.0f64..50.0,
    ) {
        let r = rows.len();
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_vec(r, 4, data.clone()));
        let s = tape.softmax_rows(a);
        let sv = tape.value(s).clone();
        for i in 0..r {
            let sum: f64 = (0..4).map(|j| sv.at(i, j)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "row {} sums to {}", i, sum);
        }
        // adding a constant to one row leaves its softmax unchanged
        let mut shifted = data;
        for j in 0..4 {
            shifted[j] += shift;
        }
        let b = tape.input(Tensor::from_vec(r, 4, shifted));
        let s2 = tape.softmax_rows(b);
        let sv2 = tape.value(s2);
        for j in 0..4 {
            prop_assert!((sv.at(0, j) - sv2.at(0, j)).abs() <= 1e-12);
        }
    }

    #[test]
    fn ac_solutions_satisfy_residual_bound(scale in 0.3f64..1.4) {
        let mut case = cases::bench30();
        for b in &mut case.buses {
            b.pd *= scale;
            b.qd *= scale;
        }
        let tol = 1e-8;
        if let Ok(sol) = solve_ac(&case, tol, 20) {
            prop_assert!(residual(&case, &sol) <= tol);
        }
    }

    #[test]
    fn dc_matches_ac_on_lossless_light_cases(scale in 0.1f64..0.6) {
        // small angles, r = 0, b = 0, flat voltage setpoints: the linear
        // model tracks the full solve
        let mut case = cases::bench30();
        for br in &mut case.branches {
            br.r = 0.0;
            br.b = 0.0;
        }
        for b in &mut case.buses {
            b.pd *= scale;
            b.qd = 0.0;
            b.vm = 1.0;
        }
        for (i, g) in case.generators.iter_mut().enumerate() {
            if i > 0 {
                g.pg *= scale;
            }
        }
        let ac = solve_ac(&case, 1e-10, 30).unwrap();
        let dc = solve_dc(&case).unwrap();
        for (k, br) in case.branches.iter().enumerate() {
            if !br.status {
                continue;
            }
            let a = ac.branch_p[k];
            let d = dc.branch_p[k];
            if a.abs() > 1.0 {
                let rel = (a - d).abs() / a.abs();
                prop_assert!(rel < 0.02, "branch {}: ac {} vs dc {} ({:.3}%)", k, a, d, rel * 100.0);
            }
        }
    }

    #[test]
    fn section_flow_is_additive_over_disjoint_unions(split_at in 1usize..3) {
        let case = cases::bench30();
        let (sections, _) = cases::bench30_sections(&case);
        let sol = solve_ac(&case, 1e-8, 20).unwrap();
        // split section 1's lines into two disjoint sub-sections
        let lines = &sections[0].lines;
        let make = |lines: Vec<(u32, u32)>| Section {
            id: 90,
            lines,
            p_min: -1e9,
            p_max: 1e9,
            q_min: None,
            q_max: None,
        };
        let a = make(lines[..split_at].to_vec());
        let b = make(lines[split_at..].to_vec());
        let whole = section_flow(&sol, &case, &sections[0]).unwrap();
        let fa = section_flow(&sol, &case, &a).unwrap();
        let fb = section_flow(&sol, &case, &b).unwrap();
        prop_assert!((whole.p - (fa.p + fb.p)).abs() < 1e-9);
        prop_assert!((whole.q - (fa.q + fb.q)).abs() < 1e-9);
    }

    #[test]
    fn reward_components_stay_bounded(seed in 0u64..200) {
        let case = cases::nine_bus();
        let (sections, _) = cases::nine_bus_sections(&case);
        let ctx = TaskContext::new(case, sections, EnvConfig::default());
        let set = match sectionflow_core::env::generate_scenarios(&ctx, seed, 1) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let mut env = Environment::new(&ctx);
        env.reset(&set.scenarios[0]).unwrap();
        let mut rng = Rng::seed_from(seed);
        for _ in 0..12 {
            let mask = env.action_mask();
            let allowed: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
            if allowed.is_empty() {
                break;
            }
            let r = env.step(allowed[rng.below(allowed.len())]).unwrap();
            if r.outcome == sectionflow_core::env::Outcome::Diverged {
                break;
            }
            let section = env.section();
            let mid = 0.5 * (section.p_min + section.p_max);
            let half = 0.5 * (section.p_max - section.p_min);
            let r_pf = -(r.section_p - mid).abs() / half;
            let r_ed = -r.cost / env.initial_cost();
            prop_assert!(r_ed <= 0.0, "economic component must be non-positive");
            if section.p_min <= r.section_p && r.section_p <= section.p_max {
                prop_assert!(r_pf.abs() <= 1.0, "in-bounds flow must score within [-1, 0]");
            }
            // reward decomposition holds: bonus is the only other term
            let bonus = r.reward - r_pf - ctx.cfg.w_ed * r_ed;
            prop_assert!(bonus.abs() < 1e-9 || (bonus - ctx.cfg.success_bonus).abs() < 1e-9);
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn lossless_solves_conserve_power(scale in 0.2f64..1.2) {
        let mut case = cases::nine_bus();
        for br in &mut case.branches {
            br.r = 0.0;
            br.b = 0.0;
        }
        for b in &mut case.buses {
            b.pd *= scale;
        }
        let tol = 1e-9;
        if let Ok(sol) = solve_ac(&case, tol, 30) {
            let outputs = generator_outputs(&case, &sol);
            let gen: f64 = outputs.iter().sum();
            let load: f64 = case.buses.iter().map(|b| b.pd).sum();
            prop_assert!((gen - load).abs() <= tol * case.base_mva * case.buses.len() as f64);
        }
    }

    #[test]
    fn unperturbed_secure_state_never_passes_the_filter(seed in 0u64..50) {
        // a section whose bounds contain the base flow: the all-ones scenario
        // must be rejected by the insecurity filter (here: the filter keeps
        // rejecting; generation exhausts instead of accepting a secure draw)
        let case = cases::two_bus();
        let sections = sectionflow_core::grid::load_section_config(
            "version 1\nsection 1 p_min=-10000 p_max=10000 lines=(1,2)\n",
            &case,
        )
        .unwrap();
        let ctx = TaskContext::new(case, sections, EnvConfig::default());
        let exhausted = matches!(
            sectionflow_core::env::generate_scenarios(&ctx, seed, 1),
            Err(sectionflow_core::env::EnvError::ExhaustedAttempts { .. })
        );
        prop_assert!(exhausted, "secure draws must be filtered, not accepted");
    }

    #[test]
    fn economic_cost_is_linear_when_quadratics_vanish(p in 0.0f64..200.0) {
        let mut case = cases::two_bus();
        case.gencost = vec![GenCost { alpha: 0.0, beta: 1.0, lambda: 0.0 }];
        let scenario = Scenario {
            id: 0,
            section_id: 1,
            perturbations: vec![],
            split: Split::Train,
            initial_p_mw: 0.0,
        };
        let _ = scenario;
        prop_assert!((economic_cost(&case, &[p]) - p).abs() < 1e-12);
    }
}
