//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use capacity_rct::power::DEFAULT_GAMMA;
use capacity_rct::sim::validate_against_clt;
use capacity_rct::{
    critical_ratio, fluid_effect, mean_queue_length, naive_no_scaleup, naive_proportional, optimal_n_sweep,
    power_at_mde, sqrt_policy, stationary_distribution, steady_state_effect, DesignTriple, EvenRange,
    InitialState, ModelParams, PilotStudy, ServerRatio, SimConfig, SystemSize, TestConfig,
};
use common::*;

type Outcome = (bool, String);

fn test_config() -> TestConfig {
    TestConfig::new(0.05, 0.8, 10.0).unwrap()
}

fn designs(n1p: u32) -> [DesignTriple; 3] {
    let pilot = PilotStudy::new(staffed(), 5, n1p, n1p).unwrap();
    let cfg = test_config();
    [
        naive_no_scaleup(&pilot, &cfg).unwrap(),
        naive_proportional(&pilot, &cfg).unwrap(),
        sqrt_policy(&pilot, &cfg, DEFAULT_GAMMA).unwrap(),
    ]
}

fn triples(ds: &[DesignTriple; 3]) -> [(u32, u32, u32); 3] {
    ds.each_ref().map(|d| (d.m1, d.n1, d.n0))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn critical_ratios() -> Outcome {
    let a = critical_ratio(&staffed());
    let b = critical_ratio(&pilot_model());
    let ok = round2(a) == round2(0.38) && round2(b) == round2(0.196);
    (ok, format!("r = {a:.6} (want 0.38), r = {b:.6} (want 0.196), compared at 2 decimals"))
}

fn pilot_effects() -> Outcome {
    let a = steady_state_effect(&staffed(), 5, 10).unwrap();
    let b = steady_state_effect(&staffed(), 5, 25).unwrap();
    let ok = (a - 0.14).abs() <= 0.005 && (b - 0.07).abs() <= 0.005;
    (ok, format!("theta(5,10) = {a:.6} (want 0.14 ± 0.005), theta(5,25) = {b:.6} (want 0.07 ± 0.005)"))
}

fn policy_triples() -> Outcome {
    let s1 = triples(&designs(10));
    let s2 = triples(&designs(25));
    let ok = s1 == [(5, 35, 35), (18, 35, 35), (16, 34, 34)] && s2 == [(5, 140, 140), (28, 140, 140), (16, 33, 33)];
    (ok, format!("scenario 1 {s1:?}, scenario 2 {s2:?}"))
}

fn honest_power() -> Outcome {
    let [a, b, c] = designs(10);
    let pilot = PilotStudy::new(staffed(), 5, 10, 10).unwrap().power(&test_config()).unwrap();
    let ok = a.achieved_power < 0.8 && a.achieved_power < pilot && b.achieved_power >= 0.8 && c.achieved_power >= 0.8;
    (
        ok,
        format!(
            "pilot {pilot:.4}, no scale-up {:.4}, proportional {:.4}, square root {:.4}",
            a.achieved_power, b.achieved_power, c.achieved_power
        ),
    )
}

fn resource_savings() -> Outcome {
    let [_, b, c] = designs(25);
    let servers = f64::from(b.m1 - c.m1) / f64::from(b.m1);
    let users = f64::from(b.n1 - c.n1) / f64::from(b.n1);
    let exact = (b.m1, c.m1, b.n1, c.n1) == (28, 16, 140, 33);
    let ok = exact && (servers * 100.0 - 42.0).abs() < 1.0 && (users * 100.0 - 76.0).abs() < 1.0;
    (ok, format!("{:.2}% fewer servers, {:.2}% fewer users", servers * 100.0, users * 100.0))
}

fn power_non_monotone() -> Outcome {
    let range = EvenRange::new(2, 400, 2).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for m1 in [5, 10, 20] {
        let s = optimal_n_sweep(m1, &staffed(), &test_config(), range).unwrap();
        ok &= s.has_interior_max();
        parts.push(format!("M1={m1}: argmax N={} power {:.4}", s.best().n, s.best().power));
    }
    (ok, parts.join("; "))
}

fn fluid_plateau() -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for p in [staffed(), pilot_model(), sweep_base()] {
        let r = critical_ratio(&p);
        let e = |x: f64| fluid_effect(ServerRatio::new(x).unwrap(), &p);
        let slope = p.effective_service() / (p.lambda() + p.tau());
        for k in 0..=20 {
            let x = r * f64::from(k) / 20.0;
            ok &= (e(x) - slope * x).abs() < 1e-12;
            ok &= (e(r * (1.0 + f64::from(k) / 10.0)) - e(r)).abs() < 1e-12;
        }
        ok &= (e(r - 1e-12) - e(r)).abs() < 1e-10;
        for frac in [0.5, 1.5] {
            let n = 1000;
            let m = (frac * r * f64::from(n)).round() as u32;
            let size = SystemSize::new(m, n).unwrap();
            let finite = steady_state_effect(&p, m, n).unwrap();
            let fluid = fluid_effect(ServerRatio::of(size), &p);
            let rel = (finite - fluid).abs() / fluid;
            worst = worst.max(rel);
            ok &= rel < 0.02;
        }
    }
    (ok, format!("piecewise linear with plateau; worst N=1000 relative gap {worst:.5} (limit 0.02)"))
}

fn simulation_validation() -> Outcome {
    let p = pilot_model();
    // Stationary start: see the notes on initial conditions in the README.
    let cfg = SimConfig::new(2025, 150.0, 500)
        .unwrap()
        .with_initial(InitialState::Stationary)
        .with_checkpoints(vec![10.0, 20.0, 50.0, 100.0, 150.0])
        .unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    // (pair, fluid expected to deviate)
    let cases = [((2, 10), None), ((5, 20), None), ((20, 100), Some(true)), ((40, 200), Some(true)), ((10, 20), Some(false)), ((10, 100), Some(false))];
    for ((m, n), fluid_deviates) in cases {
        let report = validate_against_clt(&p, SystemSize::new(m, n).unwrap(), &cfg).unwrap();
        let last = report.rows.last().unwrap();
        let var_ok = last.scaled_variance_error.abs() < 0.15;
        let mut row_ok = last.clt_mean_covered && var_ok;
        if let Some(dev) = fluid_deviates {
            row_ok &= last.fluid_mean_covered != dev;
        }
        ok &= row_ok;
        parts.push(format!(
            "({m},{n}) mean {:.3} vs K̄ {:.3} {}, T·var err {:+.3}, fluid {}",
            last.sim.mean,
            last.clt_mean,
            if last.clt_mean_covered { "covered" } else { "MISSED" },
            last.scaled_variance_error,
            if last.fluid_mean_covered { "ok" } else { "flagged" }
        ));
    }
    (ok, parts.join("; "))
}

fn test_size() -> Outcome {
    let mut worst: f64 = 0.0;
    for alpha in [0.01, 0.05, 0.1] {
        for (vt, vc) in [(1.0, 1.0), (0.02, 0.3), (5.0, 0.0)] {
            worst = worst.max((power_at_mde(vt, vc, 0.0, alpha).unwrap() - alpha).abs());
        }
    }
    (worst < 1e-9, format!("max |power - alpha| = {worst:.2e}"))
}

fn small_chain_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let grid: [ModelParams; 3] = [staffed(), pilot_model(), sweep_base()];
    for params in grid {
        for n in 1..=8 {
            for m in 0..=n {
                let dist = stationary_distribution(&params, SystemSize::new(m, n).unwrap());
                let dense = dense_stationary(&params, m, n);
                for (a, b) in dist.probs().iter().zip(&dense) {
                    worst = worst.max((a - b).abs());
                }
                worst = worst.max((mean_queue_length(&dist) - dense_mean(&dense)).abs());
            }
        }
    }
    (worst < 1e-9, format!("max deviation from dense solve {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("critical ratios", critical_ratios),
        ("pilot effects", pilot_effects),
        ("policy triples", policy_triples),
        ("honest power", honest_power),
        ("resource savings", resource_savings),
        ("power non-monotonicity", power_non_monotone),
        ("fluid plateau", fluid_plateau),
        ("simulation validation", simulation_validation),
        ("size of the test", test_size),
        ("small-chain oracle", small_chain_oracle),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        let secs = start.elapsed().as_secs_f64();
        println!("{} {:>2} {name}: {detail} [{secs:.2}s]", if ok { "PASS" } else { "FAIL" }, i + 1);
        if !ok {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
