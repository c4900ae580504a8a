//! Dispatch from a validated config to the library operations.

use std::sync::Arc;

use mfbsde_core::bsde::profile::GrowthProfile;
use mfbsde_core::forward::{integrate_reference, moment_report};
use mfbsde_core::measure::EmpiricalMeasure;
use mfbsde_core::particles::particle_sup_bound;
use mfbsde_core::pde::{PdeArgs, PdeDriver, PdeTerminal};
use mfbsde_core::stochastic::increment_moments;
use mfbsde_core::{
    compute_bounds, convergence_study, cumulate, feynman_kac_check, fit_rate, generate_comparison_case,
    make_driver, make_grid, make_terminal, picard_meanfield, run_comparison, sample_brownian, solve_lsmc,
    solve_pde, DriverSpec, FrozenLaws, NoiseBatch, ParticleOptions, PathBatch, PdeSpec, SeedSpec, SpaceGrid,
    TerminalFn, TimeGrid,
};

use crate::config::{ExperimentConfig, ExperimentKind, PdeDriverName};
use crate::error::CliError;
use crate::report::{Cell, Report, ResultRow, Table};

struct Setup {
    grid: TimeGrid<f64>,
    noise: NoiseBatch<f64>,
    features: PathBatch<f64>,
    terminal: Vec<f64>,
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid<f64>, CliError> {
    make_grid(0.0, cfg.horizon, cfg.n_steps).map_err(CliError::core("time grid"))
}

fn terminal_fn(cfg: &ExperimentConfig) -> Result<TerminalFn<f64>, CliError> {
    make_terminal(cfg.terminal_name()?, cfg.terminal_param).map_err(CliError::core("terminal"))
}

fn driver(cfg: &ExperimentConfig) -> Result<DriverSpec<f64>, CliError> {
    make_driver(cfg.driver_name()?, &cfg.driver_params(), &cfg.profile.to_profile())
        .map_err(CliError::core("driver"))
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let grid = grid(cfg)?;
    let noise = sample_brownian(&grid, cfg.n_paths, cfg.dim, SeedSpec::master(cfg.seed))
        .map_err(CliError::core("noise"))?;
    let features = cumulate(&noise, &grid).map_err(CliError::core("paths"))?;
    let eta = terminal_fn(cfg)?;
    let m = grid.n_steps();
    let terminal = (0..cfg.n_paths).map(|i| eta(features.state(i, m))).collect();
    Ok(Setup {
        grid,
        noise,
        features,
        terminal,
    })
}

pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<Report, CliError> {
    log::info!("running {kind} with seed {}", cfg.seed);
    match kind {
        ExperimentKind::Solve => solve(cfg),
        ExperimentKind::Picard => picard(cfg),
        ExperimentKind::Particles => particles(cfg),
        ExperimentKind::Compare => compare(cfg),
        ExperimentKind::Pde => pde(cfg),
        ExperimentKind::FkCheck => fk_check(cfg),
        ExperimentKind::Bounds => bounds(cfg),
        ExperimentKind::BrownianCheck => brownian_check(cfg),
        ExperimentKind::RateFit => rate_fit(cfg),
        ExperimentKind::Forward => forward(cfg),
    }
}

fn solution_table(sol: &mfbsde_core::BsdeSolution<f64>) -> Table {
    let mut t = Table::new(&["step", "t", "mean_y", "std_y", "mean_abs_z", "residual"]);
    for (k, (my, sy, mz)) in sol.step_summary().into_iter().enumerate() {
        let res = sol.residuals.get(k).copied().unwrap_or(0.0);
        t.push(vec![k.into(), sol.grid().time(k).into(), my.into(), sy.into(), mz.into(), res.into()]);
    }
    t
}

fn solve(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(cfg)?;
    let g = driver(cfg)?;
    if !g.is_law_free() {
        log::warn!("driver '{}' reads the laws; solve freezes them at delta_0", g.name);
    }
    let laws = FrozenLaws::constant(
        s.grid.n_steps(),
        EmpiricalMeasure::dirac_zero(1),
        EmpiricalMeasure::dirac_zero(cfg.dim),
    );
    let sol = solve_lsmc(&g, &laws, &s.terminal, &s.features, &s.noise, &cfg.regression())
        .map_err(CliError::core("solve"))?;
    let e = "solve";
    Ok(Report {
        rows: vec![
            ResultRow::new(e, "y0", sol.y0()),
            ResultRow::new(e, "y0_std_error", sol.y0_std_error),
            ResultRow::new(e, "sup_norm_y", sol.sup_norm_y),
            ResultRow::new(e, "bmo", sol.bmo),
        ],
        table: Some(solution_table(&sol)),
    })
}

fn picard(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(cfg)?;
    let g = driver(cfg)?;
    let (sol, trace) = picard_meanfield(&g, &s.terminal, &s.features, &s.noise, &cfg.regression(), &cfg.picard_options())
        .map_err(CliError::core("picard"))?;
    let mut t = Table::new(&["iteration", "y_gap", "z_gap", "sup_delta", "bmo"]);
    for r in &trace.records {
        t.push(vec![r.iteration.into(), r.y_gap.into(), r.z_gap.into(), r.sup_delta.into(), r.bmo.into()]);
    }
    let last = trace.last().copied();
    let e = "picard";
    Ok(Report {
        rows: vec![
            ResultRow::new(e, "y0", sol.y0()),
            ResultRow::new(e, "y0_std_error", sol.y0_std_error),
            ResultRow::new(e, "iterations", trace.iterations() as f64),
            ResultRow::new(e, "converged", f64::from(u8::from(trace.converged))).at_least(1.0),
            ResultRow::new(e, "y_gap", last.map_or(f64::NAN, |r| r.y_gap)),
            ResultRow::new(e, "z_gap", last.map_or(f64::NAN, |r| r.z_gap)),
            ResultRow::new(e, "sup_norm_y", sol.sup_norm_y),
            ResultRow::new(e, "bmo", sol.bmo),
        ],
        table: Some(t),
    })
}

fn particles(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let grid = grid(cfg)?;
    let g = driver(cfg)?;
    let eta = terminal_fn(cfg)?;
    let opts = ParticleOptions {
        dim: cfg.dim,
        replicates: cfg.particles.replicates,
        ..ParticleOptions::default()
    };
    let study = convergence_study(
        &g,
        &eta,
        &grid,
        &cfg.regression(),
        &cfg.particles.n_list,
        cfg.seed,
        &cfg.picard_options(),
        &opts,
    )
    .map_err(CliError::core("particles"))?;
    let mut t = Table::new(&["N", "w2_y", "w2_z", "mean_sup_dy", "slope_so_far"]);
    for (r, &n) in study.n_list.iter().enumerate() {
        let slope: Cell = match study.slope_so_far[r] {
            Some(s) => s.into(),
            None => "".into(),
        };
        t.push(vec![n.into(), study.w2_y[r].into(), study.w2_z[r].into(), study.mean_sup_dy[r].into(), slope]);
    }
    let bound = particle_sup_bound(&g.profile, cfg.horizon).map_err(CliError::core("particle bound"))?;
    let sup = study.particle_sup.iter().copied().fold(0.0, f64::max);
    let e = "particles";
    let mut rows = vec![
        ResultRow::new(e, "limit_paths", study.limit_paths as f64),
        ResultRow::new(e, "nonincreasing_steps", study.nonincreasing_steps() as f64),
        ResultRow::new(e, "particle_sup", sup).at_most(1.1 * bound),
        ResultRow::new(e, "particle_sup_bound", bound),
    ];
    if let Some(rate) = study.rate {
        rows.push(ResultRow::new(e, "slope", rate.slope));
    }
    Ok(Report { rows, table: Some(t) })
}

fn compare(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(cfg)?;
    let profile = cfg.profile.to_profile();
    let rc = cfg.regression();
    let po = cfg.picard_options();
    let mut t = Table::new(&["seed", "holds", "max_excess", "threshold", "y0", "y0_bar", "label"]);
    let mut held = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let e = "compare";
    for j in 0..cfg.compare.n_cases as u64 {
        let seed = cfg.seed.wrapping_add(j);
        let outcome = generate_comparison_case::<f64>(seed, &profile, cfg.horizon)
            .and_then(|case| run_comparison(&case, &s.features, &s.noise, &rc, &po).map(|v| (case, v)));
        let (case, v) = match outcome {
            Ok(x) => x,
            Err(err) => {
                return Err(CliError::Partial {
                    source: Box::new(CliError::Core {
                        context: format!("compare case {seed}"),
                        source: err,
                    }),
                    partial: Box::new(Report {
                        rows: Vec::new(),
                        table: Some(t),
                    }),
                })
            }
        };
        held += usize::from(v.holds);
        worst = worst.max(v.max_excess - v.threshold);
        t.push(vec![
            seed.into(),
            v.holds.into(),
            v.max_excess.into(),
            v.threshold.into(),
            v.y0.into(),
            v.y0_bar.into(),
            case.label.into(),
        ]);
    }
    let n = cfg.compare.n_cases as f64;
    Ok(Report {
        rows: vec![
            ResultRow::new(e, "cases", n),
            ResultRow::new(e, "holds", held as f64).at_least(n),
            ResultRow::new(e, "max_excess", worst),
        ],
        table: Some(t),
    })
}

fn pde_spec(cfg: &ExperimentConfig) -> Result<(PdeSpec<f64>, SpaceGrid, TimeGrid<f64>), CliError> {
    let p = &cfg.pde;
    let c = p.driver_c;
    let driver = match p.driver {
        PdeDriverName::Zero => PdeDriver::new("zero", false, |_: &PdeArgs<f64>| 0.0),
        PdeDriverName::Unit => PdeDriver::new("unit", false, |_: &PdeArgs<f64>| 1.0),
        PdeDriverName::HalfQuadratic => PdeDriver::new("half-quadratic", false, |a: &PdeArgs<f64>| 0.5 * a.z * a.z),
        PdeDriverName::ReferenceMean => PdeDriver::new("reference-mean", true, move |a: &PdeArgs<f64>| c * a.u_ref),
    };
    let name = p.terminal.parse().map_err(CliError::core("pde.terminal"))?;
    let phi = make_terminal::<f64>(name, p.terminal_param).map_err(CliError::core("pde.terminal"))?;
    let terminal = PdeTerminal::local(move |x: f64| phi(&[x]));
    let grid = grid(cfg)?;
    let spec = PdeSpec::build(
        Arc::new(cfg.forward.to_linear()),
        driver,
        terminal,
        cfg.forward.x0,
        &grid,
        cfg.n_paths,
        SeedSpec::master(cfg.seed),
    )
    .map_err(CliError::core("pde reference"))?;
    let space = SpaceGrid::new(p.x_min, p.x_max, p.n_x).map_err(CliError::core("pde space grid"))?;
    let time = make_grid(0.0, cfg.horizon, p.n_steps).map_err(CliError::core("pde time grid"))?;
    Ok((spec, space, time))
}

fn pde(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (spec, space, time) = pde_spec(cfg)?;
    let field = solve_pde(&spec, &space, &time).map_err(CliError::core("pde"))?;
    let mut t = Table::new(&["t", "x", "u"]);
    let m = time.n_steps();
    let stride = cfg.pde.output_stride;
    for k in (0..=m).filter(|k| k % stride == 0 || *k == m) {
        for i in 0..space.n_x() {
            t.push(vec![time.time(k).into(), space.x(i).into(), field.at(k, i).into()]);
        }
    }
    Ok(Report {
        rows: vec![ResultRow::new("pde", "u_pde", field.eval(0, cfg.forward.x0))],
        table: Some(t),
    })
}

fn fk_check(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (spec, space, time) = pde_spec(cfg)?;
    let r = feynman_kac_check(&spec, &space, &time, &cfg.regression(), &cfg.picard_options())
        .map_err(CliError::core("fk-check"))?;
    let e = "fk-check";
    Ok(Report {
        rows: vec![
            ResultRow::new(e, "u_pde", r.u_pde),
            ResultRow::new(e, "y0_bsde", r.y0_bsde),
            ResultRow::new(e, "gap", r.gap),
            ResultRow::new(e, "y0_std_error", r.y0_std_error),
            ResultRow::new(e, "picard_iterations", r.picard_iterations as f64),
            ResultRow::new(e, "restriction_sup", r.restriction.sup_gap),
            ResultRow::new(e, "restriction_q99", r.restriction.q99_gap),
            ResultRow::new(e, "restriction_clamped", r.restriction.clamped as f64),
        ],
        table: None,
    })
}

fn bounds(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let profile: GrowthProfile = cfg.profile.to_profile();
    let b = compute_bounds(&profile, cfg.horizon).map_err(CliError::core("bounds"))?;
    let rows = b
        .rows()
        .into_iter()
        .map(|(name, v)| {
            let metric = crate::report::METRICS
                .iter()
                .copied()
                .find(|m| *m == name)
                .expect("bound names are registered");
            ResultRow::new("bounds", metric, v)
        })
        .collect();
    Ok(Report { rows, table: None })
}

fn brownian_check(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let grid = grid(cfg)?;
    let noise = sample_brownian(&grid, cfg.n_paths, cfg.dim, SeedSpec::master(cfg.seed))
        .map_err(CliError::core("noise"))?;
    let dt = grid.dt();
    let count = (cfg.n_paths * cfg.dim) as f64;
    let mut t = Table::new(&["step", "mean", "var", "mean_z", "var_ratio"]);
    let mut max_z = 0.0f64;
    let mut max_dev = 0.0f64;
    for (k, (mean, var)) in increment_moments(&noise).into_iter().enumerate() {
        let z = mean / (dt / count).sqrt();
        let ratio = var / dt;
        max_z = max_z.max(z.abs());
        max_dev = max_dev.max((ratio - 1.0).abs());
        t.push(vec![k.into(), mean.into(), var.into(), z.into(), ratio.into()]);
    }
    let e = "brownian-check";
    Ok(Report {
        rows: vec![
            ResultRow::new(e, "max_mean_z", max_z),
            ResultRow::new(e, "max_var_ratio_dev", max_dev),
        ],
        table: Some(t),
    })
}

fn rate_fit(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let r = &cfg.rate_fit;
    let fit = fit_rate(&r.ns, &r.errors).map_err(CliError::core("rate-fit"))?;
    let mut t = Table::new(&["N", "error", "fitted"]);
    for (&n, &err) in r.ns.iter().zip(&r.errors) {
        let fitted = (fit.intercept + fit.slope * (n as f64).ln()).exp();
        t.push(vec![n.into(), err.into(), fitted.into()]);
    }
    let e = "rate-fit";
    Ok(Report {
        rows: vec![
            ResultRow::new(e, "slope", fit.slope),
            ResultRow::new(e, "intercept", fit.intercept),
            ResultRow::new(e, "residual_norm", fit.residual_norm),
        ],
        table: Some(t),
    })
}

fn forward(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let grid = grid(cfg)?;
    let spec = cfg.forward.to_linear();
    let batch = integrate_reference(&spec, &[cfg.forward.x0], &grid, cfg.n_paths, SeedSpec::master(cfg.seed))
        .map_err(CliError::core("forward"))?;
    let mut t = Table::new(&["step", "t", "mean", "var"]);
    let n = batch.n_paths() as f64;
    let mut last = (0.0, 0.0);
    for k in 0..=grid.n_steps() {
        let col = batch.column(k, 0);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        last = (mean, var);
        t.push(vec![k.into(), grid.time(k).into(), mean.into(), var.into()]);
    }
    let mr = moment_report(&batch, 2.0).map_err(CliError::core("forward moments"))?;
    let e = "forward";
    Ok(Report {
        rows: vec![
            ResultRow::new(e, "terminal_mean", last.0),
            ResultRow::new(e, "terminal_var", last.1),
            ResultRow::new(e, "sup_moment", mr.sup_moment),
            ResultRow::new(e, "increment_moment", mr.increment_moment),
        ],
        table: Some(t),
    })
}
