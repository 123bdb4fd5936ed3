use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::dispatch::solve_scdcopf;
use crate::grid_model::{Branch, Bus, Generator, LoadPoint};

fn branch(f: u32, t: u32, rating: f64) -> Branch {
    Branch { from_bus: f, to_bus: t, reactance: 0.1, rating_long: rating, rating_short: rating, outage_rate: 1.0, in_service: true }
}

fn fixed_dispatch(case: &GridCase, p_gen: Vec<f64>, p_served: Vec<f64>) -> DispatchSolution {
    DispatchSolution {
        load_factor: case.load_factor,
        p_gen,
        p_served,
        angles: vec![0.0; case.buses.len()],
        flows: vec![0.0; case.branches.len()],
        objective: 0.0,
        shed_total: 0.0,
        security_constraints_active: Vec::new(),
        cycles: 0,
        cycle_objectives: Vec::new(),
    }
}

/// Ring 1-2-3-4-1 with chord 1-3. 120 MW flows from bus 1 to the load at
/// bus 3; bus 4 holds an idle 50 MW unit.
fn ring(d_rating: f64) -> (GridCase, DispatchSolution) {
    let case = GridCase::new(
        "ring",
        (1..=4).map(|id| Bus { id, area: 1 }).collect(),
        vec![branch(1, 2, 150.0), branch(2, 3, 100.0), branch(1, 4, 150.0), branch(4, 3, d_rating), branch(1, 3, 150.0)],
        vec![
            Generator { bus: 1, p_max: 300.0, marginal_cost: 10.0, p_scheduled: 0.0 },
            Generator { bus: 4, p_max: 50.0, marginal_cost: 20.0, p_scheduled: 0.0 },
        ],
        vec![LoadPoint { bus: 3, p_nominal: 120.0, shed_cost: 1000.0 }],
        100.0,
    )
    .unwrap();
    let dispatch = fixed_dispatch(&case, vec![120.0, 0.0], vec![120.0]);
    (case, dispatch)
}

fn radial() -> GridCase {
    GridCase::new(
        "radial",
        (1..=4).map(|id| Bus { id, area: 1 }).collect(),
        vec![branch(1, 2, 200.0), branch(2, 3, 200.0), branch(1, 3, 200.0), branch(3, 4, 200.0)],
        vec![Generator { bus: 1, p_max: 300.0, marginal_cost: 10.0, p_scheduled: 0.0 }],
        vec![
            LoadPoint { bus: 2, p_nominal: 40.0, shed_cost: 1000.0 },
            LoadPoint { bus: 4, p_nominal: 50.0, shed_cost: 1000.0 },
        ],
        100.0,
    )
    .unwrap()
}

fn mesh() -> GridCase {
    let lines = [(1, 2, 0.06), (1, 3, 0.24), (2, 3, 0.18), (2, 4, 0.18), (2, 5, 0.12), (3, 4, 0.03), (4, 5, 0.24)];
    GridCase::new(
        "mesh",
        (1..=5).map(|id| Bus { id, area: 1 }).collect(),
        lines
            .iter()
            .map(|&(f, t, x)| Branch {
                from_bus: f,
                to_bus: t,
                reactance: x,
                rating_long: 120.0,
                rating_short: 150.0,
                outage_rate: 1.0,
                in_service: true,
            })
            .collect(),
        vec![
            Generator { bus: 1, p_max: 250.0, marginal_cost: 12.0, p_scheduled: 0.0 },
            Generator { bus: 2, p_max: 100.0, marginal_cost: 20.0, p_scheduled: 0.0 },
            Generator { bus: 5, p_max: 100.0, marginal_cost: 30.0, p_scheduled: 0.0 },
        ],
        vec![
            LoadPoint { bus: 3, p_nominal: 90.0, shed_cost: 1000.0 },
            LoadPoint { bus: 4, p_nominal: 110.0, shed_cost: 1000.0 },
            LoadPoint { bus: 5, p_nominal: 60.0, shed_cost: 1000.0 },
        ],
        100.0,
    )
    .unwrap()
}

#[test]
fn empty_contingency_is_a_no_op() {
    let (case, dispatch) = ring(40.0);
    let r = simulate_cascade(&case, &dispatch, &[], &CascadeConfig::default()).unwrap();
    assert_eq!(r.blackout_mw, 0.0);
    assert_eq!(r.tiers, 0);
    assert!(r.trip_sequence.is_empty());
    assert_eq!(r.final_islands, 1);
}

#[test]
fn hand_traced_ring_cascade() {
    // tier 1: all 120 MW on 1-2-3 trips 2-3 (100 MW)
    // tier 2: island {3,4} ramps bus 4 to 50 MW, sheds 70; 50 MW on 4-3 trips it (40 MW)
    // final: bus 3 alone sheds the remaining 50
    let (case, dispatch) = ring(40.0);
    let r = simulate_cascade(&case, &dispatch, &[2, 4], &CascadeConfig::default()).unwrap();
    assert_eq!(r.trip_sequence, vec![(1, 1), (2, 3)]);
    assert_eq!(r.tiers, 2);
    assert_eq!(r.final_islands, 3);
    assert_abs_diff_eq!(r.blackout_mw, 120.0, epsilon = 1e-9);
    let shed: Vec<f64> = r.events.iter().map(|e| e.shed_mw).collect();
    assert_eq!(shed.len(), 3);
    assert_abs_diff_eq!(shed[0], 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(shed[1], 70.0, epsilon = 1e-9);
    assert_abs_diff_eq!(shed[2], 120.0, epsilon = 1e-9);
    assert_eq!(r.events[0].tripped, vec![2, 4]);

    // with a 60 MW rating on 4-3 the island holds after shedding 70
    let (case, dispatch) = ring(60.0);
    let r = simulate_cascade(&case, &dispatch, &[2, 4], &CascadeConfig::default()).unwrap();
    assert_eq!(r.trip_sequence, vec![(1, 1)]);
    assert_abs_diff_eq!(r.blackout_mw, 70.0, epsilon = 1e-9);
}

#[test]
fn ramp_limit_and_pro_rata_modes() {
    let (case, dispatch) = ring(40.0);
    let ramp = CascadeConfig { gen_ramp_limit: Some(20.0), ..Default::default() };
    let r = simulate_cascade(&case, &dispatch, &[2, 4], &ramp).unwrap();
    assert_eq!(r.trip_sequence, vec![(1, 1)]);
    assert_abs_diff_eq!(r.blackout_mw, 100.0, epsilon = 1e-9);

    let pro_rata = CascadeConfig { rebalance: RebalanceMode::ProRata, ..Default::default() };
    let r = simulate_cascade(&case, &dispatch, &[2, 4], &pro_rata).unwrap();
    assert_abs_diff_eq!(r.blackout_mw, 120.0, epsilon = 1e-9);
}

#[test]
fn continuous_threshold_trips_earlier() {
    let (mut case, dispatch) = ring(60.0);
    case.branches[1].rating_long = 90.0;
    case.branches[1].rating_short = 130.0;
    let short = simulate_cascade(&case, &dispatch, &[2, 4], &CascadeConfig::default()).unwrap();
    assert_eq!(short.blackout_mw, 0.0);
    let long = CascadeConfig { trip_threshold: TripThreshold::Continuous, ..Default::default() };
    let r = simulate_cascade(&case, &dispatch, &[2, 4], &long).unwrap();
    assert_abs_diff_eq!(r.blackout_mw, 70.0, epsilon = 1e-9);
}

#[test]
fn islanded_radial_load_is_lost() {
    let case = radial();
    let dispatch = solve_scdcopf(&case).unwrap();
    let r = simulate_cascade(&case, &dispatch, &[3], &CascadeConfig::default()).unwrap();
    assert_abs_diff_eq!(r.blackout_mw, 50.0, epsilon = 1e-9);
    assert_eq!(r.final_islands, 2);
    assert!(r.trip_sequence.is_empty());
    assert_eq!(r.tiers, 0);
}

#[test]
fn secured_case_survives_single_outages() {
    let case = mesh();
    let dispatch = solve_scdcopf(&case).unwrap();
    for k in 0..case.branches.len() {
        let r = simulate_cascade(&case, &dispatch, &[k], &CascadeConfig::default()).unwrap();
        assert_eq!(r.blackout_mw, 0.0, "branch {k}");
    }
}

#[test]
fn rejects_bad_contingencies() {
    let (case, dispatch) = ring(40.0);
    let cfg = CascadeConfig::default();
    assert!(matches!(simulate_cascade(&case, &dispatch, &[9], &cfg), Err(CascadeError::InvalidContingency { branch: 9, .. })));
    assert!(matches!(simulate_cascade(&case, &dispatch, &[1, 1], &cfg), Err(CascadeError::InvalidContingency { .. })));
    let bad = CascadeConfig { max_tiers: 0, ..Default::default() };
    assert!(matches!(simulate_cascade(&case, &dispatch, &[1], &bad), Err(CascadeError::Config(_))));
}

#[test]
fn tier_cap_is_reported() {
    let (case, dispatch) = ring(40.0);
    let cfg = CascadeConfig { max_tiers: 1, ..Default::default() };
    match simulate_cascade(&case, &dispatch, &[2, 4], &cfg) {
        Err(CascadeError::Nontermination { contingency, partial }) => {
            assert_eq!(contingency, vec![2, 4]);
            assert_eq!(partial.tiers, 1);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn event_log_is_line_delimited_json() {
    let (case, dispatch) = ring(40.0);
    let r = simulate_cascade(&case, &dispatch, &[2, 4], &CascadeConfig::default()).unwrap();
    let mut buf = Vec::new();
    r.write_event_log(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let events: Vec<TierEvent> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events, r.events);
}

proptest! {
    #[test]
    fn rebalance_conserves_and_sheds_minimum(
        p in proptest::collection::vec(0.0f64..100.0, 3),
        caps in proptest::collection::vec(0.0f64..150.0, 3),
        demand in proptest::collection::vec(0.0f64..200.0, 2),
        ramp in proptest::option::of(0.0f64..50.0),
    ) {
        let case = GridCase::new(
            "iso",
            vec![Bus { id: 1, area: 1 }],
            vec![],
            caps.iter().map(|&c| Generator { bus: 1, p_max: c.max(1.0), marginal_cost: 1.0, p_scheduled: 0.0 }).collect(),
            demand.iter().map(|&d| LoadPoint { bus: 1, p_nominal: d + 1.0, shed_cost: 100.0 }).collect(),
            100.0,
        ).unwrap();
        let config = CascadeConfig { gen_ramp_limit: ramp, ..Default::default() };
        let mut gen: Vec<f64> = p.iter().zip(&case.generators).map(|(x, g)| x.min(g.p_max)).collect();
        let mut load: Vec<f64> = case.loads.iter().map(|l| l.p_nominal).collect();
        let before = load.clone();
        let reach: f64 = gen.iter().zip(&case.generators)
            .map(|(x, g)| g.p_max.min(x + ramp.unwrap_or(f64::INFINITY)))
            .sum();
        let start = gen.clone();
        rebalance(&case, &config, &[0, 1, 2], &[0, 1], &mut gen, &mut load);
        let total_gen: f64 = gen.iter().sum();
        let total_load: f64 = load.iter().sum();
        prop_assert!((total_gen - total_load).abs() < 1e-6);
        for ((x, s), g) in gen.iter().zip(&start).zip(&case.generators) {
            prop_assert!(*x >= -1e-9 && *x <= g.p_max + 1e-9);
            if let Some(r) = ramp {
                prop_assert!(*x <= s + r + 1e-9);
            }
        }
        for (a, b) in load.iter().zip(&before) {
            prop_assert!(*a <= *b + 1e-12);
        }
        let expected_shed = (before.iter().sum::<f64>() - reach).max(0.0);
        prop_assert!((before.iter().sum::<f64>() - total_load - expected_shed).abs() < 1e-6);
    }

    #[test]
    fn random_contingencies_behave(mask in proptest::collection::vec(proptest::bool::weighted(0.3), 7)) {
        let case = mesh();
        let dispatch = solve_scdcopf(&case).unwrap();
        let contingency: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect();
        let cfg = CascadeConfig::default();
        let r = simulate_cascade(&case, &dispatch, &contingency, &cfg).unwrap();
        prop_assert_eq!(&r, &simulate_cascade(&case, &dispatch, &contingency, &cfg).unwrap());
        prop_assert!(r.blackout_mw >= 0.0 && r.blackout_mw <= dispatch.total_served() + 1e-9);
        prop_assert!(r.tiers <= case.branches.len());
        let mut seen: Vec<usize> = r.trip_sequence.iter().map(|t| t.1).collect();
        seen.extend(&contingency);
        let n = seen.len();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), n);
        for w in r.events.windows(2) {
            prop_assert!(w[1].shed_mw >= w[0].shed_mw - 1e-9);
        }
    }
}
