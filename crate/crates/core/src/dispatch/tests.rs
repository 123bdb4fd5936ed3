use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::dc_powerflow::{build_dc_system, solve_dc_flow};
use crate::grid_model::{Branch, Bus, Generator, GridCase, LoadPoint};

fn branch(f: u32, t: u32, x: f64, long: f64, short: f64) -> Branch {
    Branch { from_bus: f, to_bus: t, reactance: x, rating_long: long, rating_short: short, outage_rate: 1.0, in_service: true }
}

fn gen(bus: u32, p_max: f64, cost: f64) -> Generator {
    Generator { bus, p_max, marginal_cost: cost, p_scheduled: 0.0 }
}

fn load(bus: u32, p: f64) -> LoadPoint {
    LoadPoint { bus, p_nominal: p, shed_cost: 1000.0 }
}

fn buses(n: u32) -> Vec<Bus> {
    (1..=n).map(|id| Bus { id, area: 1 }).collect()
}

fn two_bus(capacity: f64, demand: f64, limit: f64) -> GridCase {
    GridCase::new(
        "two",
        buses(2),
        vec![branch(1, 2, 0.1, limit, limit * 1.2)],
        vec![gen(1, capacity, 10.0)],
        vec![load(2, demand)],
        100.0,
    )
    .unwrap()
}

/// Cheap generator at bus 1, expensive one at the load bus 3.
fn triangle(short: f64) -> GridCase {
    let long = short.min(200.0);
    GridCase::new(
        "tri",
        buses(3),
        vec![branch(1, 2, 0.1, long, short), branch(2, 3, 0.1, long, short), branch(1, 3, 0.1, long, short)],
        vec![gen(1, 300.0, 10.0), gen(3, 300.0, 50.0)],
        vec![load(3, 150.0)],
        100.0,
    )
    .unwrap()
}

fn mesh() -> GridCase {
    GridCase::new(
        "mesh",
        buses(5),
        vec![
            branch(1, 2, 0.06, 120.0, 150.0),
            branch(1, 3, 0.24, 120.0, 150.0),
            branch(2, 3, 0.18, 120.0, 150.0),
            branch(2, 4, 0.18, 120.0, 150.0),
            branch(2, 5, 0.12, 120.0, 150.0),
            branch(3, 4, 0.03, 120.0, 150.0),
            branch(4, 5, 0.24, 120.0, 150.0),
        ],
        vec![gen(1, 250.0, 12.0), gen(2, 100.0, 20.0), gen(5, 100.0, 30.0)],
        vec![load(3, 90.0), load(4, 110.0), load(5, 60.0)],
        100.0,
    )
    .unwrap()
}

#[test]
fn two_bus_examples() {
    let sol = solve_dcopf(&two_bus(200.0, 100.0, 150.0), &[]).unwrap();
    assert_abs_diff_eq!(sol.p_gen[0], 100.0, epsilon = 1e-9);
    assert_abs_diff_eq!(sol.shed_total, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(sol.objective, 100.0 * 10.0 - 100.0 * 1000.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.flows[0], 100.0, epsilon = 1e-9);

    let sol = solve_dcopf(&two_bus(200.0, 100.0, 60.0), &[]).unwrap();
    assert_abs_diff_eq!(sol.p_served[0], 60.0, epsilon = 1e-9);
    assert_abs_diff_eq!(sol.shed_total, 40.0, epsilon = 1e-9);

    let sol = solve_dcopf(&two_bus(200.0, 300.0, 500.0), &[]).unwrap();
    assert_abs_diff_eq!(sol.p_served[0], 200.0, epsilon = 1e-9);
    assert_abs_diff_eq!(sol.shed_total, 100.0, epsilon = 1e-9);
}

#[test]
fn solution_invariants_hold() {
    let case = mesh();
    let sol = solve_dcopf(&case, &[]).unwrap();
    assert_abs_diff_eq!(sol.total_generation(), sol.total_served(), epsilon = 1e-6);
    for (g, p) in case.generators.iter().zip(&sol.p_gen) {
        assert!(*p >= -1e-6 && *p <= g.p_max + 1e-6);
    }
    for (br, f) in case.branches.iter().zip(&sol.flows) {
        assert!(f.abs() <= br.rating_long + 1e-6);
    }
    // flows agree with angles
    for (br, f) in case.branches.iter().zip(&sol.flows) {
        let a = sol.angles[case.bus_position(br.from_bus).unwrap()];
        let b = sol.angles[case.bus_position(br.to_bus).unwrap()];
        assert_abs_diff_eq!(*f, case.mva_base * (a - b) / br.reactance, epsilon = 1e-9);
    }
}

#[test]
fn objective_beats_hand_built_points() {
    let case = mesh();
    let sol = solve_dcopf(&case, &[]).unwrap();
    let system = build_dc_system(&case);
    let loads = [90.0, 110.0, 60.0];
    for p_gen in [[100.0, 100.0, 60.0], [160.0, 60.0, 40.0], [120.0, 80.0, 60.0]] {
        let inj = system.bus_injections(&case, &p_gen, &loads);
        let st = solve_dc_flow(&system, &inj).unwrap();
        let feasible = st.flows.iter().zip(&case.branches).all(|(f, br)| f.abs() <= br.rating_long);
        assert!(feasible);
        let obj = 12.0 * p_gen[0] + 20.0 * p_gen[1] + 30.0 * p_gen[2] - 1000.0 * 260.0;
        assert!(sol.objective <= obj + 1e-6);
    }
}

#[test]
fn security_scan_examples() {
    let case = GridCase::new(
        "par",
        buses(2),
        vec![branch(1, 2, 0.1, 100.0, 100.0), branch(1, 2, 0.1, 100.0, 100.0)],
        vec![gen(1, 500.0, 1.0)],
        vec![load(2, 180.0)],
        100.0,
    )
    .unwrap();
    let mut sol = solve_dcopf(&case, &[]).unwrap();
    assert_abs_diff_eq!(sol.flows[0], 90.0, epsilon = 1e-9);
    let check = check_security(&case, &sol).unwrap();
    assert_eq!(check.violations.len(), 2);
    for v in &check.violations {
        assert_abs_diff_eq!(v.margin, 80.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v.predicted_flow, 180.0, epsilon = 1e-9);
    }
    sol.flows = vec![0.0, 0.0];
    assert!(check_security(&case, &sol).unwrap().is_secure());
}

#[test]
fn security_scan_matches_outage_resolves() {
    let case = mesh();
    let sol = solve_dcopf(&case, &[]).unwrap();
    let check = check_security(&case, &sol).unwrap();
    let mut brute = Vec::new();
    for j in 0..case.branches.len() {
        let out = case.with_outages(&[j]);
        let system = build_dc_system(&out);
        let inj = system.bus_injections(&out, &sol.p_gen, &sol.p_served);
        let st = solve_dc_flow(&system, &inj).unwrap();
        for (l, &k) in system.branches().iter().enumerate() {
            if st.flows[l].abs() > case.branches[k].rating_short + SECURITY_TOLERANCE_PU * case.mva_base {
                brute.push((j, k));
            }
        }
    }
    let got: Vec<(usize, usize)> = check.violations.iter().map(|v| (v.outaged_branch, v.monitored_branch)).collect();
    assert!(!got.is_empty());
    assert_eq!(got, brute);
}

#[test]
fn radial_branch_is_reported_as_islanding() {
    let mut case = triangle(500.0);
    case.buses.push(Bus { id: 4, area: 1 });
    case.branches.push(branch(3, 4, 0.1, 200.0, 250.0));
    case.validate().unwrap();
    let sol = solve_scdcopf(&case).unwrap();
    let check = check_security(&case, &sol).unwrap();
    assert_eq!(check.islanding, vec![3]);
}

#[test]
fn secure_case_takes_one_cycle() {
    let case = triangle(500.0);
    let plain = solve_dcopf(&case, &[]).unwrap();
    let sol = solve_scdcopf(&case).unwrap();
    assert_eq!(sol.cycles, 1);
    assert!(sol.security_constraints_active.is_empty());
    assert_eq!(sol.p_gen, plain.p_gen);
}

#[test]
fn decomposition_secures_triangle() {
    // post-outage every MW from bus 1 runs over one 120 MW path
    let case = triangle(120.0);
    let sol = solve_scdcopf(&case).unwrap();
    assert_abs_diff_eq!(sol.p_gen[0], 120.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.p_gen[1], 30.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.shed_total, 0.0, epsilon = 1e-9);
    assert!(sol.cycles >= 2);
    assert!(!sol.security_constraints_active.is_empty());
    assert!(check_security(&case, &sol).unwrap().is_secure());
    for w in sol.cycle_objectives.windows(2) {
        assert!(w[1] >= w[0] - 1e-9);
    }
}

#[test]
fn cycle_limit_reports_residual_violations() {
    let case = triangle(120.0);
    let options = ScdcopfOptions { max_cycles: 1, ..Default::default() };
    match solve_scdcopf_with(&case, &options) {
        Err(DispatchError::NonConvergence { cycles: 1, violations }) => assert!(!violations.is_empty()),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn disconnected_case_is_rejected() {
    let mut case = triangle(500.0);
    for br in &mut case.branches[1..] {
        br.in_service = false;
    }
    assert!(matches!(solve_dcopf(&case, &[]), Err(DispatchError::Topology(TopologyError::Disconnected { .. }))));
}

#[test]
fn proportional_scaling() {
    let case = mesh();
    let anchor = solve_scdcopf(&case).unwrap();
    assert_eq!(proportional_dispatch(&anchor, 1.0).unwrap(), anchor);
    let half = proportional_dispatch(&anchor, 0.5).unwrap();
    assert_eq!(half.load_factor, 0.5);
    for (a, b) in anchor.flows.iter().zip(&half.flows) {
        assert_abs_diff_eq!(*b, 0.5 * a, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(half.total_generation(), half.total_served(), epsilon = 1e-6);
    assert!(matches!(proportional_dispatch(&anchor, 1.1), Err(DispatchError::Domain(_))));
}

#[test]
fn table_round_trip() {
    let case = triangle(120.0);
    let sol = solve_scdcopf(&case).unwrap();
    let text = sol.to_table(&case);
    assert_eq!(DispatchSolution::from_table(&text).unwrap(), sol);
    let broken = text.replace("[loads]", "[lodes]");
    assert!(DispatchSolution::from_table(&broken).is_err());
}

proptest! {
    /// Shedding equals the exact shortfall `max(0, D − min(C, F))`.
    #[test]
    fn sheds_only_when_forced(capacity in 10.0f64..400.0, demand in 1.0f64..400.0, limit in 10.0f64..400.0) {
        let sol = solve_dcopf(&two_bus(capacity, demand, limit), &[]).unwrap();
        let expected = (demand - capacity.min(limit)).max(0.0);
        prop_assert!((sol.shed_total - expected).abs() < 1e-6);
    }
}

#[test]
fn flow_range_over_tied_generators() {
    // equal-cost units at buses 1 and 2 can split the 150 MW load any way
    let mut case = triangle(500.0);
    case.generators = vec![gen(1, 300.0, 10.0), gen(2, 300.0, 10.0)];
    case.validate().unwrap();
    let k = case.find_branch(1, 3).unwrap();
    let (lo, hi) = optimal_flow_range(&case, k, 1e-9, &ScdcopfOptions::default()).unwrap();
    // all from bus 2: f13 = 50; all from bus 1: f13 = 100
    assert_abs_diff_eq!(lo, 50.0, epsilon = 1e-6);
    assert_abs_diff_eq!(hi, 100.0, epsilon = 1e-6);

    let case = triangle(120.0);
    let sol = solve_scdcopf(&case).unwrap();
    let (lo, hi) = optimal_flow_range(&case, k, 1e-9, &ScdcopfOptions::default()).unwrap();
    // the cost slack of 1e-9 relative buys a few µW of freedom
    assert_abs_diff_eq!(lo, sol.flows[k], epsilon = 1e-4);
    assert_abs_diff_eq!(hi, sol.flows[k], epsilon = 1e-4);
}
