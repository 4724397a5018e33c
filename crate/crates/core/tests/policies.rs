mod common;

use capacity_rct::power::{sqrt_policy_on, DEFAULT_GAMMA};
use capacity_rct::{
    naive_no_scaleup, naive_proportional, optimal_n_sweep, power_at_mde, power_at_true_effect, sqrt_policy,
    steady_state_effect, DesignTriple, EvenRange, ModelParams, PilotStudy, PolicyTag, SearchGrid, TestConfig,
};
use common::*;

fn cfg() -> TestConfig {
    TestConfig::new(0.05, 0.8, 10.0).unwrap()
}

fn triple(d: &DesignTriple) -> (u32, u32, u32) {
    (d.m1, d.n1, d.n0)
}

fn designs(n1p: u32) -> [DesignTriple; 3] {
    let pilot = PilotStudy::new(staffed(), 5, n1p, n1p).unwrap();
    [
        naive_no_scaleup(&pilot, &cfg()).unwrap(),
        naive_proportional(&pilot, &cfg()).unwrap(),
        sqrt_policy(&pilot, &cfg(), DEFAULT_GAMMA).unwrap(),
    ]
}

#[test]
fn scenario_one_triples() {
    let [a, b, c] = designs(10);
    assert_eq!(triple(&a), (5, 35, 35));
    assert_eq!(triple(&b), (18, 35, 35));
    assert_eq!(triple(&c), (16, 34, 34));
    assert_eq!(a.policy, PolicyTag::NaiveNoScaleUp);
    assert_eq!(b.policy, PolicyTag::NaiveProportional);
    assert_eq!(c.policy, PolicyTag::SqrtStaffing);
}

#[test]
fn scenario_two_triples() {
    let [a, b, c] = designs(25);
    assert_eq!(triple(&a), (5, 140, 140));
    assert_eq!(triple(&b), (28, 140, 140));
    assert_eq!(triple(&c), (16, 33, 33));
    assert!(c.m1 <= b.m1 && c.n1 <= b.n1);
}

#[test]
fn unit_step_sqrt_search_finds_smaller_design() {
    // Unanchored unit-step scans land on the same, smaller design in both scenarios.
    let grid = SearchGrid::new(1, 1, 10_000).unwrap();
    let d = sqrt_policy_on(&staffed(), &cfg(), DEFAULT_GAMMA, grid).unwrap();
    assert_eq!(triple(&d), (16, 32, 32));
    assert!(d.achieved_power >= 0.8);
    let below = power_at_true_effect(&staffed(), 15, 31, 31, &cfg()).unwrap();
    assert!(below < 0.8);
}

#[test]
fn achieved_power_is_honest() {
    for n1p in [10, 25] {
        for d in designs(n1p) {
            let exact = power_at_true_effect(&staffed(), d.m1, d.n1, d.n0, &cfg()).unwrap();
            assert_eq!(d.achieved_power, exact);
        }
    }
    let [a, b, c] = designs(10);
    let pilot = PilotStudy::new(staffed(), 5, 10, 10).unwrap().power(&cfg()).unwrap();
    assert!(a.achieved_power < 0.8 && a.achieved_power < pilot);
    assert!(b.achieved_power >= 0.8);
    assert!(c.achieved_power >= 0.8);
}

#[test]
fn pilot_matches_analytics() {
    let pilot = PilotStudy::new(staffed(), 5, 10, 10).unwrap();
    assert_eq!(pilot.effect(), steady_state_effect(&staffed(), 5, 10).unwrap());
    let by_hand = power_at_mde(pilot.treat_variance() / 10.0, pilot.control_variance() / 10.0, pilot.effect(), 0.05).unwrap();
    assert_eq!(pilot.power(&cfg()).unwrap(), by_hand);
}

#[test]
fn power_peaks_inside_the_sweep() {
    let range = EvenRange::new(2, 400, 2).unwrap();
    for m1 in [5, 10, 20] {
        let sweep = optimal_n_sweep(m1, &staffed(), &cfg(), range).unwrap();
        assert!(sweep.has_interior_max(), "M1 = {m1}");
        assert_eq!(sweep.points.len(), 200);
        assert!(sweep.points.windows(2).all(|w| w[0].n < w[1].n));
    }
}

#[test]
fn constant_effect_gives_monotone_power() {
    // Without interference the effect would not shrink and both groups would
    // behave like independent users, so power only grows with N.
    let sweep = optimal_n_sweep(5, &staffed(), &cfg(), EvenRange::new(10, 400, 10).unwrap()).unwrap();
    let fixed = sweep.points[0].effect;
    let mut prev = 0.0;
    for pt in &sweep.points {
        let pw = power_at_mde(pt.var_control, pt.var_control, fixed, 0.05).unwrap();
        assert!(pw > prev);
        prev = pw;
    }
}

#[test]
fn effect_shape_in_n() {
    // Flat while the treated group is small relative to M1, then decreasing.
    let p = staffed();
    let m1 = 10;
    let effects: Vec<f64> = (1..=200).map(|n1| steady_state_effect(&p, m1, n1).unwrap()).collect();
    for n1 in 1..=m1 as usize {
        assert!((effects[n1 - 1] - effects[0]).abs() < 1e-12);
    }
    assert!(effects[m1 as usize..].windows(2).all(|w| w[1] < w[0]));
}

fn argmax_n(p: ModelParams) -> u32 {
    optimal_n_sweep(5, &p, &cfg(), EvenRange::new(2, 800, 2).unwrap()).unwrap().best().n
}

fn check_direction(values: &[f64], make: impl Fn(f64) -> ModelParams, increasing: bool) {
    let ns: Vec<u32> = values.iter().map(|&x| argmax_n(make(x))).collect();
    for w in ns.windows(2) {
        if increasing {
            assert!(w[1] >= w[0], "{ns:?}");
        } else {
            assert!(w[1] <= w[0], "{ns:?}");
        }
    }
    assert_ne!(ns.first(), ns.last(), "{ns:?}");
}

#[test]
fn optimal_n_directions() {
    let b = sweep_base();
    check_direction(&[0.05, 0.1, 0.2, 0.3, 0.4, 0.5], |x| b.with_lambda(x).unwrap(), false);
    check_direction(&[0.05, 0.1, 0.2, 0.3, 0.4, 0.5], |x| b.with_tau(x).unwrap(), true);
    check_direction(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], |x| b.with_mu(x).unwrap(), true);
    check_direction(&[0.1, 0.3, 0.5, 0.7, 0.9, 1.0], |x| b.with_p(x).unwrap(), true);
}
