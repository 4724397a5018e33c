//! Subcommand bodies. Each returns the tables it produced; writing them is
//! left to the caller.

use capacity_rct::power::{naive_no_scaleup_on, naive_proportional_on, sqrt_policy_on, DesignTriple, SearchGrid};
use capacity_rct::sim::validate_against_clt_with;
use capacity_rct::{
    classify_regime, critical_ratio, estimator_moments, fluid_effect, fluid_steady_state, integrate_fluid,
    optimal_n_sweep, power_at_mde, stationary_distribution, steady_state_effect,
    queue_length_asymptotic_variance, approx_queue_length, offered_load, EvenRange, FluidState, ModelParams,
    PilotStudy, RegimeLabel, ServerRatio, SimConfig, SystemSize,
};

use crate::config::Loaded;
use crate::error::{CliError, CliResult, Context};
use crate::table::{Kind, ResultTable};

pub const SUBCOMMANDS: &[(&str, &str)] = &[
    ("analyze", "stationary distribution, mean queue, critical ratio and regime of one or more systems"),
    ("fluid", "fluid steady state and effect, with an optional trajectory"),
    ("power", "effect, variances and power of a given design"),
    ("policy-compare", "designs chosen by the three power-analysis policies for a pilot"),
    ("simulate", "simulated time averages against the stationary and fluid approximations"),
    ("sweep-effect", "treatment effect across N for each server count"),
    ("sweep-power", "variances, normalized effect and power across N for each server count"),
    ("sweep-optimal-n", "power-maximizing N as one model parameter varies"),
];

pub fn run(name: &str, cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    match name {
        "analyze" => analyze(cfg),
        "fluid" => fluid(cfg),
        "power" => power(cfg),
        "policy-compare" => policy_compare(cfg),
        "simulate" => simulate(cfg),
        "sweep-effect" => sweep_effect(cfg),
        "sweep-power" => sweep_power(cfg),
        "sweep-optimal-n" => sweep_optimal_n(cfg),
        other => Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn systems(cfg: &Loaded) -> CliResult<Vec<SystemSize>> {
    let c = &cfg.config;
    let raw = match (&c.pairs, c.m, c.n) {
        (Some(pairs), _, _) => pairs.iter().map(|[m, n]| (*m, *n)).collect(),
        (None, Some(m), Some(n)) => vec![(m, n)],
        _ => return Err(CliError::Config("set `m` and `n`, or `pairs`".into())),
    };
    let key = if c.pairs.is_some() { "pairs" } else { "n" };
    if raw.is_empty() {
        return Err(cfg.invalid(key, "needs at least one system"));
    }
    raw.into_iter()
        .map(|(m, n)| SystemSize::new(m, n).map_err(|e| cfg.invalid(key, e)))
        .collect()
}

fn sweep_range(cfg: &Loaded) -> CliResult<EvenRange> {
    let c = &cfg.config;
    let n_max = cfg.require(&c.n_max, "n_max")?;
    EvenRange::new(c.n_min.unwrap_or(2), n_max, c.n_step.unwrap_or(2)).map_err(|e| cfg.invalid("n_min", e))
}

fn m_list(cfg: &Loaded) -> CliResult<Vec<u32>> {
    let list = cfg.require(&cfg.config.m_list, "m_list")?;
    if list.is_empty() {
        return Err(cfg.invalid("m_list", "needs at least one server count"));
    }
    Ok(list)
}

fn analyze(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let params = cfg.params()?;
    let r = critical_ratio(&params);
    let mut summary = ResultTable::new(
        "analyze",
        &[
            ("m", Kind::Int),
            ("n", Kind::Int),
            ("ratio", Kind::Float),
            ("critical_ratio", Kind::Float),
            ("offered_load", Kind::Float),
            ("mean_queue", Kind::Float),
            ("fluid_queue", Kind::Float),
            ("desired_fraction", Kind::Float),
            ("queue_asy_variance", Kind::Float),
            ("regime", Kind::Text),
            ("limit_regime", Kind::Text),
        ],
    );
    let mut stationary = ResultTable::new(
        "analyze_stationary",
        &[("m", Kind::Int), ("n", Kind::Int), ("j", Kind::Int), ("probability", Kind::Float)],
    );
    for size in systems(cfg)? {
        let dist = stationary_distribution(&params, size);
        let (m, n) = (size.servers(), size.users());
        summary.push(vec![
            m.into(),
            n.into(),
            size.ratio().into(),
            r.into(),
            offered_load(&params, n).context("analyze")?.into(),
            dist.mean().into(),
            approx_queue_length(&params, size).into(),
            (1.0 - dist.mean() / f64::from(n)).into(),
            queue_length_asymptotic_variance(&dist).into(),
            classify_regime(&params, size).short_name().into(),
            RegimeLabel::from_ratio(size.ratio(), r).short_name().into(),
        ]);
        for (j, &pj) in dist.probs().iter().enumerate() {
            stationary.push(vec![m.into(), n.into(), (j as u32).into(), pj.into()]);
        }
    }
    Ok(vec![summary, stationary])
}

fn fluid(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let params = cfg.params()?;
    let c = &cfg.config;
    let ratio = match (c.mbar, c.m, c.n) {
        (Some(x), _, _) => ServerRatio::new(x).map_err(|e| cfg.invalid("mbar", e))?,
        (None, Some(_), Some(_)) => ServerRatio::of(systems(cfg)?[0]),
        _ => return Err(CliError::Config("set `mbar`, or `m` and `n`".into())),
    };
    let r = critical_ratio(&params);
    let mut summary = ResultTable::new(
        "fluid",
        &[
            ("mbar", Kind::Float),
            ("critical_ratio", Kind::Float),
            ("z_star", Kind::Float),
            ("effect", Kind::Float),
            ("limit_regime", Kind::Text),
        ],
    );
    summary.push(vec![
        ratio.value().into(),
        r.into(),
        fluid_steady_state(ratio, &params).into(),
        fluid_effect(ratio, &params).into(),
        RegimeLabel::from_ratio(ratio.value(), r).short_name().into(),
    ]);
    let mut out = vec![summary];
    if let Some(horizon) = c.fluid_horizon {
        let z0 = c.z0.unwrap_or(0.0);
        let start = FluidState::new(z0, 0.0).map_err(|e| cfg.invalid("z0", e))?;
        let step = c.fluid_step.unwrap_or(capacity_rct::fluid::DEFAULT_STEP);
        let traj = integrate_fluid(start, ratio, &params, horizon, step).map_err(|e| cfg.invalid("fluid_horizon", e))?;
        let mut t = ResultTable::new("fluid_trajectory", &[("time", Kind::Float), ("z", Kind::Float)]);
        for s in traj {
            t.push(vec![s.time.into(), s.z.into()]);
        }
        out.push(t);
    }
    Ok(out)
}

fn power(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let params = cfg.params()?;
    let test = cfg.test_config()?;
    let c = &cfg.config;
    let m1 = cfg.require(&c.m1, "m1")?;
    let n1 = cfg.require(&c.n1, "n1")?;
    let n0 = c.n0.unwrap_or(n1);
    let t = test.horizon();
    let m = estimator_moments(&params, m1, n1, n0, t).context("power")?;
    let (vt, vc) = (m.treatment.asy_variance / t, m.control.asy_variance / t);
    let pw = power_at_mde(vt, vc, m.effect.max(0.0), test.alpha()).context("power")?;
    let mut table = ResultTable::new(
        "power",
        &[
            ("m1", Kind::Int),
            ("n1", Kind::Int),
            ("n0", Kind::Int),
            ("effect", Kind::Float),
            ("var_treat", Kind::Float),
            ("var_control", Kind::Float),
            ("power", Kind::Float),
            ("meets_target", Kind::Bool),
        ],
    );
    table.push(vec![m1.into(), n1.into(), n0.into(), m.effect.into(), vt.into(), vc.into(), pw.into(), (pw >= test.beta()).into()]);
    Ok(vec![table])
}

fn policy_compare(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let params = cfg.params()?;
    let test = cfg.test_config()?;
    let c = &cfg.config;
    let m1p = cfg.require(&c.m1p, "m1p")?;
    let n1p = cfg.require(&c.n1p, "n1p")?;
    let n0p = c.n0p.unwrap_or(n1p);
    let pilot = PilotStudy::new(params, m1p, n1p, n0p).map_err(|e| cfg.invalid("n1p", e))?;
    let cap = cfg.search_cap();
    let naive_grid = SearchGrid::new(n1p, 1, cap).map_err(|e| cfg.invalid("search_cap", e))?;
    let sqrt_grid = SearchGrid::new(n1p, cfg.sqrt_step()?, cap).map_err(|e| cfg.invalid("search_cap", e))?;
    let gamma = cfg.gamma()?;

    let designs: Vec<DesignTriple> = vec![
        naive_no_scaleup_on(&pilot, &test, naive_grid).context("policy-compare (NaiveNoScaleUp)")?,
        naive_proportional_on(&pilot, &test, naive_grid).context("policy-compare (NaiveProportional)")?,
        sqrt_policy_on(&params, &test, gamma, sqrt_grid).context("policy-compare (SqrtStaffing)")?,
    ];
    let mut table = ResultTable::new(
        "policy_compare",
        &[
            ("policy", Kind::Text),
            ("m1", Kind::Int),
            ("n1", Kind::Int),
            ("n0", Kind::Int),
            ("effect", Kind::Float),
            ("achieved_power", Kind::Float),
            ("meets_target", Kind::Bool),
        ],
    );
    for d in designs {
        let effect = steady_state_effect(&params, d.m1, d.n1).context("policy-compare")?;
        table.push(vec![
            d.policy.name().into(),
            d.m1.into(),
            d.n1.into(),
            d.n0.into(),
            effect.into(),
            d.achieved_power.into(),
            (d.achieved_power >= test.beta()).into(),
        ]);
    }
    let mut pilot_table = ResultTable::new(
        "policy_compare_pilot",
        &[
            ("m1", Kind::Int),
            ("n1", Kind::Int),
            ("n0", Kind::Int),
            ("effect", Kind::Float),
            ("power", Kind::Float),
        ],
    );
    pilot_table.push(vec![
        m1p.into(),
        n1p.into(),
        n0p.into(),
        pilot.effect().into(),
        pilot.power(&test).context("policy-compare")?.into(),
    ]);
    Ok(vec![table, pilot_table])
}

fn sim_config(cfg: &Loaded) -> CliResult<SimConfig> {
    let c = &cfg.config;
    let checkpoints = match (&c.checkpoint_times, c.sim_horizon) {
        (Some(ts), _) => ts.clone(),
        (None, Some(h)) => vec![h],
        (None, None) => return Err(CliError::Config("set `sim_horizon` or `checkpoint_times`".into())),
    };
    let horizon = c.sim_horizon.or_else(|| checkpoints.last().copied()).unwrap_or(0.0);
    let replications = c.replications.unwrap_or(500);
    let base = SimConfig::new(c.seed.unwrap_or(0), horizon, replications).map_err(|e| {
        if replications == 0 {
            cfg.invalid("replications", e)
        } else {
            cfg.invalid("sim_horizon", e)
        }
    })?;
    let key = if c.checkpoint_times.is_some() { "checkpoint_times" } else { "sim_horizon" };
    base.with_initial(cfg.initial_state()?)
        .with_checkpoints(checkpoints)
        .map_err(|e| cfg.invalid(key, e))
}

fn simulate(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let params = cfg.params()?;
    let sim = sim_config(cfg)?;
    let (level, resamples) = (cfg.level()?, cfg.resamples()?);
    if sim.replications < 2 {
        return Err(cfg.invalid("replications", "validation needs at least two replications"));
    }
    let mut table = ResultTable::new(
        "simulate",
        &[
            ("m", Kind::Int),
            ("n", Kind::Int),
            ("time", Kind::Float),
            ("replications", Kind::Int),
            ("sim_mean", Kind::Float),
            ("sim_variance", Kind::Float),
            ("mean_ci_low", Kind::Float),
            ("mean_ci_high", Kind::Float),
            ("variance_ci_low", Kind::Float),
            ("variance_ci_high", Kind::Float),
            ("clt_mean", Kind::Float),
            ("clt_variance", Kind::Float),
            ("fluid_mean", Kind::Float),
            ("clt_mean_covered", Kind::Bool),
            ("clt_variance_covered", Kind::Bool),
            ("fluid_mean_covered", Kind::Bool),
            ("scaled_variance_error", Kind::Float),
        ],
    );
    for size in systems(cfg)? {
        let report = validate_against_clt_with(&params, size, &sim, level, resamples).context("simulate")?;
        for row in report.rows {
            table.push(vec![
                size.servers().into(),
                size.users().into(),
                row.time.into(),
                (row.sim.replications as u32).into(),
                row.sim.mean.into(),
                row.sim.variance.into(),
                row.sim.ci_low.into(),
                row.sim.ci_high.into(),
                row.variance_ci.0.into(),
                row.variance_ci.1.into(),
                row.clt_mean.into(),
                row.clt_variance.into(),
                row.fluid_mean.into(),
                row.clt_mean_covered.into(),
                row.clt_variance_covered.into(),
                row.fluid_mean_covered.into(),
                row.scaled_variance_error.into(),
            ]);
        }
    }
    Ok(vec![table])
}

fn sweep_effect(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let params = cfg.params()?;
    let range = sweep_range(cfg)?;
    let mut table = ResultTable::new(
        "sweep_effect",
        &[
            ("m1", Kind::Int),
            ("n", Kind::Int),
            ("n1", Kind::Int),
            ("effect", Kind::Float),
            ("fluid_effect", Kind::Float),
            ("unlimited_effect", Kind::Float),
        ],
    );
    let unlimited = fluid_effect(ServerRatio::new(1.0).context("sweep-effect")?, &params);
    for m1 in m_list(cfg)? {
        for n in range.values() {
            let n1 = n / 2;
            let size = SystemSize::new(m1, n1).context("sweep-effect")?;
            table.push(vec![
                m1.into(),
                n.into(),
                n1.into(),
                steady_state_effect(&params, m1, n1).context("sweep-effect")?.into(),
                fluid_effect(ServerRatio::of(size), &params).into(),
                unlimited.into(),
            ]);
        }
    }
    Ok(vec![table])
}

fn sweep_power(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let params = cfg.params()?;
    let test = cfg.test_config()?;
    let range = sweep_range(cfg)?;
    let t = test.horizon();
    let mut table = ResultTable::new(
        "sweep_power",
        &[
            ("m1", Kind::Int),
            ("n", Kind::Int),
            ("n1", Kind::Int),
            ("effect", Kind::Float),
            ("var_treat", Kind::Float),
            ("var_control", Kind::Float),
            ("normalized_effect", Kind::Float),
            ("power", Kind::Float),
            ("unlimited_power", Kind::Float),
            ("is_argmax", Kind::Bool),
        ],
    );
    for m1 in m_list(cfg)? {
        let sweep = optimal_n_sweep(m1, &params, &test, range).context("sweep-power")?;
        for (i, pt) in sweep.points.iter().enumerate() {
            // Every treated user has a server of their own.
            let full = estimator_moments(&params, pt.n1, pt.n1, pt.n1, t).context("sweep-power")?;
            let unlimited = power_at_mde(
                full.treatment.asy_variance / t,
                full.control.asy_variance / t,
                full.effect.max(0.0),
                test.alpha(),
            )
            .context("sweep-power")?;
            table.push(vec![
                m1.into(),
                pt.n.into(),
                pt.n1.into(),
                pt.effect.into(),
                pt.var_treat.into(),
                pt.var_control.into(),
                pt.normalized_effect().into(),
                pt.power.into(),
                unlimited.into(),
                (i == sweep.argmax).into(),
            ]);
        }
    }
    Ok(vec![table])
}

fn vary(params: &ModelParams, name: &str, value: f64) -> capacity_rct::Result<ModelParams> {
    match name {
        "lambda" => params.with_lambda(value),
        "tau" => params.with_tau(value),
        "mu" => params.with_mu(value),
        _ => params.with_p(value),
    }
}

fn sweep_optimal_n(cfg: &Loaded) -> CliResult<Vec<ResultTable>> {
    let base = cfg.params()?;
    let test = cfg.test_config()?;
    let range = sweep_range(cfg)?;
    let c = &cfg.config;
    let name = cfg.require(&c.vary, "vary")?;
    if !["lambda", "tau", "mu", "p"].contains(&name.as_str()) {
        return Err(cfg.invalid("vary", format!("expected lambda, tau, mu or p, got \"{name}\"")));
    }
    let values = cfg.require(&c.values, "values")?;
    if values.is_empty() {
        return Err(cfg.invalid("values", "needs at least one value"));
    }
    let mut table = ResultTable::new(
        "sweep_optimal_n",
        &[
            ("parameter", Kind::Text),
            ("value", Kind::Float),
            ("m1", Kind::Int),
            ("argmax_n", Kind::Int),
            ("max_power", Kind::Float),
            ("interior", Kind::Bool),
        ],
    );
    for m1 in m_list(cfg)? {
        for &v in &values {
            let params = vary(&base, &name, v).map_err(|e| cfg.invalid("values", e))?;
            let sweep = optimal_n_sweep(m1, &params, &test, range).context("sweep-optimal-n")?;
            table.push(vec![
                name.as_str().into(),
                v.into(),
                m1.into(),
                sweep.best().n.into(),
                sweep.best().power.into(),
                sweep.has_interior_max().into(),
            ]);
        }
    }
    Ok(vec![table])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load;

    fn cfg(pairs: &[(&str, &str)]) -> Loaded {
        let v: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        load(None, &v).unwrap()
    }

    const STAFFED: [(&str, &str); 4] = [("lambda", "0.4"), ("tau", "0.35"), ("mu", "3"), ("p", "0.1")];

    #[test]
    fn missing_keys_are_config_errors() {
        let e = run("power", &cfg(&STAFFED)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("m1"));
        let e = run("bogus", &cfg(&STAFFED)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn exhausted_search_exits_with_three() {
        let mut kv = STAFFED.to_vec();
        kv.extend([("m1p", "5"), ("n1p", "25"), ("search_cap", "60")]);
        let e = run("policy-compare", &cfg(&kv)).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().starts_with("policy-compare (NaiveNoScaleUp)"), "{e}");
    }

    #[test]
    fn fluid_trajectory_is_optional() {
        let mut kv = STAFFED.to_vec();
        kv.push(("mbar", "0.2"));
        assert_eq!(run("fluid", &cfg(&kv)).unwrap().len(), 1);
        kv.push(("fluid_horizon", "1"));
        let tables = run("fluid", &cfg(&kv)).unwrap();
        assert_eq!(tables[1].len(), 101);
    }
}
