//! Subcommand implementations.

use infoflux::causality::{
    causality_map, correlation_map, enumerate_subsets, FluxEngine, FluxQuery, FluxReport, SubsetFlux,
};
use infoflux::control::{pmf_on_edges, ControlProblem, ControlTrace, ControllerParams, Evaluation};
use infoflux::infocore::{Bits, KlOptions};
use infoflux::io::{read_binary, read_csv_file, write_binary, write_csv_file};
use infoflux::modeling::{
    kl_fit, ml_equivalence_check, MlEquivalenceReport, ObservableSpec, ReferenceMatch, SimRequest,
};
use infoflux::systems::{build_plant, fixture, simulate as run_system, symbolic_map_suite, SymbolicFixture};
use infoflux::{discretize, estimate_joint_pmf, Error, SignalMatrix, SymbolSeries};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    load, reject_flags, resolve_path, CausalityConfig, ControlConfig, FitConfig, InputSource, ReferenceSource,
    SignalFormat, SimulateConfig,
};
use crate::output::RunDir;
use crate::{CliError, FixtureArgs, RunArgs};

fn fmt(x: f64) -> String {
    x.to_string()
}

#[derive(Serialize)]
struct ColumnSummary {
    name: String,
    mean: f64,
    variance: f64,
    min: f64,
    max: f64,
}

fn summarize(signal: &SignalMatrix) -> Vec<ColumnSummary> {
    let n = signal.n_samples() as f64;
    signal
        .names()
        .iter()
        .enumerate()
        .map(|(v, name)| {
            let c = signal.column(v);
            let mean = c.iter().sum::<f64>() / n;
            ColumnSummary {
                name: name.clone(),
                mean,
                variance: c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n,
                min: c.iter().cloned().fold(f64::INFINITY, f64::min),
                max: c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    command: &'static str,
    config: &'a SimulateConfig,
    signal_file: &'static str,
    n_samples: usize,
    dt: f64,
    columns: Vec<ColumnSummary>,
}

pub fn simulate(args: &RunArgs) -> Result<(), CliError> {
    reject_flags(args, "simulate", &["bins", "lag", "order", "tolerance"])?;
    let mut cfg: SimulateConfig = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.system.seed = s;
    }
    cfg.system = cfg.system.resolved()?;
    let signal = run_system(&cfg.system)?;
    let dir = RunDir::create(&args.out)?;
    let signal_file = match cfg.format {
        SignalFormat::Csv => {
            write_csv_file(&signal, &dir.path("signal.csv"))?;
            "signal.csv"
        }
        SignalFormat::Binary => {
            write_binary(&signal, &dir.path("signal.bin"))?;
            "signal.bin"
        }
    };
    let report = SimulateReport {
        command: "simulate",
        config: &cfg,
        signal_file,
        n_samples: signal.n_samples(),
        dt: signal.dt(),
        columns: summarize(&signal),
    };
    dir.write_json("report.json", &report)?;
    println!(
        "{}: {} samples of {} variables -> {}",
        cfg.system.kind.name(),
        signal.n_samples(),
        signal.n_vars(),
        dir.path(signal_file).display()
    );
    Ok(())
}

/// Data behind a causality run.
enum Loaded {
    Sampled { signal: SignalMatrix, symbols: SymbolSeries },
    Exact(SymbolicFixture),
}

fn symbol_names(n: usize) -> Vec<String> {
    (0..n).map(|v| format!("q{v}")).collect()
}

fn load_input(cfg: &CausalityConfig, config_path: &std::path::Path) -> Result<Loaded, CliError> {
    let signal = match &cfg.input {
        InputSource::Csv { path, dt } => read_csv_file(&resolve_path(config_path, path), *dt)?,
        InputSource::Binary { path } => read_binary(&resolve_path(config_path, path))?,
        InputSource::System(spec) => run_system(spec)?,
        InputSource::Fixture { name, n_samples: None, .. } => {
            if cfg.lag != 1 {
                return Err(CliError::Config {
                    path: "lag".into(),
                    message: "exact fixture PMFs describe one step; use lag 1 or sample the fixture".into(),
                });
            }
            return Ok(Loaded::Exact(fixture(name)?));
        }
        InputSource::Fixture { name, n_samples: Some(n), seed } => {
            let symbols = fixture(name)?.trajectory(*n, *seed)?;
            let cols = (0..symbols.n_vars()).map(|v| symbols.codes(v).iter().map(|&c| c as f64).collect()).collect();
            let signal = SignalMatrix::from_columns(cols, symbol_names(symbols.n_vars()), 1.0)?;
            return Ok(Loaded::Sampled { signal, symbols });
        }
    };
    let symbols = discretize(&signal, &cfg.partition)?;
    Ok(Loaded::Sampled { signal, symbols })
}

#[derive(Serialize)]
struct TargetSummary {
    target: usize,
    name: String,
    lag: usize,
    n_q: usize,
    fluxes: Vec<SubsetFlux>,
    leak: Bits,
    target_entropy: Bits,
    leak_fraction: f64,
    residual: f64,
}

#[derive(Serialize)]
struct MapSummary {
    order: usize,
    lag: usize,
    sources: Vec<String>,
    /// `values[source][target]` in bits.
    values: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CausalityReport<'a> {
    command: &'static str,
    config: &'a CausalityConfig,
    names: Vec<String>,
    /// Absent for exact fixture PMFs.
    n_samples: Option<usize>,
    alphabet: Vec<usize>,
    identity_holds: bool,
    targets: Vec<TargetSummary>,
    map: MapSummary,
    /// Lagged normalized cross-correlation, `correlation[source][target]`.
    correlation: Option<Vec<Vec<f64>>>,
}

fn label(subset: &[usize], names: &[String]) -> String {
    subset.iter().map(|&i| names[i].as_str()).collect::<Vec<_>>().join("+")
}

fn check_targets(targets: &[usize], n: usize) -> Result<(), CliError> {
    match targets.iter().find(|&&t| t >= n) {
        Some(t) => Err(CliError::Config {
            path: "targets".into(),
            message: format!("target {t} out of range ({n} variables)"),
        }),
        None => Ok(()),
    }
}

pub fn causality(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg: CausalityConfig = load(&args.config)?;
    cfg.apply(args)?;
    let loaded = load_input(&cfg, &args.config)?;
    let n = match &loaded {
        Loaded::Sampled { symbols, .. } => symbols.n_vars(),
        Loaded::Exact(f) => f.n_vars(),
    };
    if n >= 64 || (1u64 << n) > cfg.subset_cap {
        return Err(Error::SubsetExplosion { n_vars: n, cap: cfg.subset_cap }.into());
    }
    let targets = cfg.targets.clone().unwrap_or_else(|| (0..n).collect());
    check_targets(&targets, n)?;
    let (names, n_samples, alphabet, reports, map, correlation) = match &loaded {
        Loaded::Sampled { signal, symbols } => {
            let reports: Vec<FluxReport> = targets
                .par_iter()
                .map(|&t| {
                    let q = FluxQuery::new(symbols, t, cfg.lag).with_subset_cap(cfg.subset_cap);
                    infoflux::causality::flux_report(&q)
                })
                .collect::<infoflux::Result<_>>()?;
            let map = causality_map(symbols, cfg.lag, cfg.order)?;
            let corr = correlation_map(signal, cfg.lag)?;
            (
                signal.names().to_vec(),
                Some(signal.n_samples()),
                symbols.alphabet().to_vec(),
                reports,
                (map.sources, map.values),
                Some(corr),
            )
        }
        Loaded::Exact(f) => {
            if !(1..=3).contains(&cfg.order) || cfg.order > n {
                return Err(Error::InvalidArgument(format!("order {} invalid for {n} variables", cfg.order)).into());
            }
            let mut engines: Vec<FluxEngine> =
                (0..n).map(|t| FluxEngine::from_joint(f.flux_joint(t)?)).collect::<infoflux::Result<_>>()?;
            let reports =
                targets.iter().map(|&t| engines[t].report(n, cfg.subset_cap)).collect::<infoflux::Result<Vec<_>>>()?;
            let sources: Vec<Vec<usize>> =
                enumerate_subsets(n, cfg.order).into_iter().filter(|s| s.len() == cfg.order).collect();
            let values = sources
                .iter()
                .map(|s| engines.iter_mut().map(|e| e.flux(s).map(|b| b.0)).collect())
                .collect::<infoflux::Result<Vec<Vec<f64>>>>()?;
            (symbol_names(n), None, f.alphabet().to_vec(), reports, (sources, values), None)
        }
    };

    let summaries: Vec<TargetSummary> = targets
        .iter()
        .zip(reports)
        .map(|(&t, r)| TargetSummary {
            target: t,
            name: names[t].clone(),
            lag: cfg.lag,
            n_q: alphabet[t],
            residual: r.decomposition_residual(),
            leak_fraction: r.normalized_leak,
            fluxes: r.fluxes,
            leak: r.leak,
            target_entropy: r.target_entropy,
        })
        .collect();
    let identity_holds = summaries.iter().all(|s| s.residual.abs() <= cfg.identity_tolerance);

    let dir = RunDir::create(&args.out)?;
    let (sources, values) = map;
    let labels: Vec<String> = sources.iter().map(|s| label(s, &names)).collect();
    let mut header = vec!["source".to_string()];
    header.extend(names.iter().cloned());
    let rows: Vec<Vec<String>> = labels
        .iter()
        .zip(&values)
        .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(|&v| fmt(v))).collect())
        .collect();
    dir.write_table("flux_map.csv", &header, &rows)?;
    if let Some(corr) = &correlation {
        let rows: Vec<Vec<String>> = names
            .iter()
            .zip(corr)
            .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(|&v| fmt(v))).collect())
            .collect();
        dir.write_table("correlation_map.csv", &header, &rows)?;
    }
    let mut long = Vec::new();
    for s in &summaries {
        for f in &s.fluxes {
            long.push(vec![s.name.clone(), label(&f.subset, &names), fmt(f.bits.0), fmt(f.normalized)]);
        }
        long.push(vec![s.name.clone(), "leak".into(), fmt(s.leak.0), fmt(s.leak_fraction)]);
    }
    let long_header: Vec<String> = ["target", "source", "bits", "normalized"].iter().map(|s| s.to_string()).collect();
    dir.write_table("fluxes.csv", &long_header, &long)?;

    let report = CausalityReport {
        command: "causality",
        config: &cfg,
        names: names.clone(),
        n_samples,
        alphabet,
        identity_holds,
        map: MapSummary { order: cfg.order, lag: cfg.lag, sources: labels, values },
        correlation,
        targets: summaries,
    };
    dir.write_json("report.json", &report)?;
    for s in &report.targets {
        println!(
            "{}: H = {:.6} bits, leak fraction {:.4}, residual {:.2e}",
            s.name, s.target_entropy.0, s.leak_fraction, s.residual
        );
    }
    if let Some(s) = report.targets.iter().find(|s| !(s.residual.abs() <= cfg.identity_tolerance)) {
        return Err(CliError::Identity {
            target: s.name.clone(),
            residual: s.residual,
            tolerance: cfg.identity_tolerance,
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'static str,
    config: &'a FitConfig,
    family: &'static str,
    theta: Vec<f64>,
    kl_bits: f64,
    initial_kl_bits: f64,
    converged: bool,
    iterations: usize,
    trace_monotone: bool,
    /// `theta - theta_reference` when the reference parameters are known.
    theta_error: Option<Vec<f64>>,
    ml_equivalence: Option<MlEquivalenceReport>,
}

pub fn fit(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg: FitConfig = load(&args.config)?;
    cfg.apply(args)?;
    let family = cfg.family;
    let request = SimRequest { seed: cfg.options.seed, n_samples: cfg.options.batch_len };
    let reference = match &cfg.reference {
        ReferenceSource::Theta { theta, seed } => {
            family.simulate(theta, &SimRequest { seed: seed.unwrap_or(request.seed), ..request })?
        }
        ReferenceSource::Csv { path, dt } => {
            let s = read_csv_file(&resolve_path(&args.config, path), *dt)?;
            if s.n_vars() != family.columns().len() {
                return Err(CliError::Config {
                    path: "reference".into(),
                    message: format!(
                        "{} outputs {} columns, reference has {}",
                        family.name(),
                        family.columns().len(),
                        s.n_vars()
                    ),
                });
            }
            s
        }
    };
    let columns = cfg.columns.clone().unwrap_or_default();
    let observable = ObservableSpec { columns, partition: cfg.partition.clone() };
    let objective = ReferenceMatch::from_signal(&reference, &observable, KlOptions { epsilon_floor: cfg.kl_floor })?;
    let outcome = kl_fit(|t: &[f64], r: &SimRequest| family.simulate(t, r), &objective, &cfg.init, &cfg.options)?;

    let ml_equivalence = match &cfg.ml_check {
        None => None,
        Some(check) => {
            let frozen = objective.observable();
            if frozen.columns.len() != 1 {
                return Err(CliError::Config {
                    path: "ml_check".into(),
                    message: "the likelihood check needs a single observable column".into(),
                });
            }
            let samples = discretize(&reference.select(&frozen.columns)?, &frozen.partition)?;
            let pmf = |theta: &[f64]| {
                let s = family.simulate(theta, &request)?;
                let sym = discretize(&s.select(&frozen.columns)?, &frozen.partition)?;
                estimate_joint_pmf(&sym, &[(0, 0)])
            };
            Some(ml_equivalence_check(&samples, pmf, &check.grid)?)
        }
    };

    let dir = RunDir::create(&args.out)?;
    let w = dir.writer("trace.csv")?;
    outcome.trace.write_csv(w)?;
    let theta = outcome.params.theta.clone();
    let header: Vec<String> = (0..theta.len()).map(|i| format!("theta_{i}")).collect();
    dir.write_table("theta.csv", &header, &[theta.iter().map(|&x| fmt(x)).collect()])?;
    let theta_error = match &cfg.reference {
        ReferenceSource::Theta { theta: truth, .. } => Some(theta.iter().zip(truth).map(|(a, b)| a - b).collect()),
        ReferenceSource::Csv { .. } => None,
    };
    let report = FitReport {
        command: "fit",
        config: &cfg,
        family: family.name(),
        theta,
        kl_bits: outcome.kl_bits,
        initial_kl_bits: outcome.initial_kl_bits,
        converged: outcome.converged,
        iterations: outcome.iterations,
        trace_monotone: outcome.trace.is_monotone(),
        theta_error,
        ml_equivalence,
    };
    dir.write_json("report.json", &report)?;
    println!(
        "{}: theta = {:?}, KL {:.3e} -> {:.3e} bits after {} iterations",
        family.name(),
        report.theta,
        report.initial_kl_bits,
        report.kl_bits,
        report.iterations
    );
    if let Some(ml) = &report.ml_equivalence {
        println!(
            "likelihood check: KL argmin {} vs likelihood argmax {} (agree: {})",
            ml.kl_argmin, ml.ll_argmax, ml.agree
        );
    }
    if !report.converged {
        return Err(CliError::NotConverged(cfg.options.descent.max_iter));
    }
    Ok(())
}

#[derive(Serialize)]
struct TargetStats {
    kl: f64,
    mean: Vec<f64>,
    variance: Vec<f64>,
    /// Probability of each reference cell of `J`.
    pmf: Vec<f64>,
}

fn target_stats(e: &Evaluation, edges: &[Vec<f64>]) -> Result<TargetStats, CliError> {
    let cols = summarize(&e.j_next);
    Ok(TargetStats {
        kl: e.kl,
        mean: cols.iter().map(|c| c.mean).collect(),
        variance: cols.iter().map(|c| c.variance).collect(),
        pmf: pmf_on_edges(&e.j_next, edges)?.to_dense(),
    })
}

#[derive(Serialize)]
struct ControlReport<'a> {
    command: &'static str,
    config: &'a ControlConfig,
    params: ControllerParams,
    kl: f64,
    initial_kl: f64,
    trace_strictly_decreasing: bool,
    target_edges: Vec<Vec<f64>>,
    /// `J` with the active gain switched off.
    before: TargetStats,
    /// `J` under the optimized controller.
    after: TargetStats,
    trace: ControlTrace,
}

fn trace_rows(trace: &ControlTrace) -> (Vec<String>, Vec<Vec<String>>) {
    let first = &trace.records[0].theta;
    let mut header: Vec<String> = ["iteration", "kl", "obs_mi", "ctrl_mi", "relax_mu", "relax_sigma", "accepted"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..first.theta_s.len()).map(|i| format!("theta_s_{i}")));
    header.extend((0..first.theta_pa.len()).map(|i| format!("theta_pa_{i}")));
    header.extend((0..first.theta_aa.len()).map(|i| format!("theta_aa_{i}")));
    header.push("failure".into());
    let rows = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.iteration.to_string(),
                fmt(r.kl),
                fmt(r.obs_mi),
                fmt(r.ctrl_mi),
                fmt(r.relax.0),
                fmt(r.relax.1),
                r.accepted.to_string(),
            ];
            row.extend(r.theta.theta_s.iter().chain(&r.theta.theta_pa).chain(&r.theta.theta_aa).map(|&x| fmt(x)));
            row.push(r.failure.clone().unwrap_or_default());
            row
        })
        .collect();
    (header, rows)
}

pub fn control(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg: ControlConfig = load(&args.config)?;
    cfg.apply(args)?;
    let plant = build_plant(&cfg.plant.spec(&cfg.options))?;
    let problem = ControlProblem::new(&plant, &cfg.target, &cfg.init, cfg.options)?;
    let outcome = problem.optimize(&cfg.init)?;
    let mut free = cfg.init.clone();
    free.theta_aa.iter_mut().for_each(|x| *x = 0.0);
    let edges = problem.target_edges().to_vec();
    let before = target_stats(&problem.evaluate(&free)?, &edges)?;
    let after = target_stats(&problem.evaluate(&outcome.params)?, &edges)?;

    let dir = RunDir::create(&args.out)?;
    let (header, rows) = trace_rows(&outcome.trace);
    dir.write_table("trace.csv", &header, &rows)?;
    let mut dist = Vec::new();
    if edges.len() == 1 {
        for (k, w) in edges[0].windows(2).enumerate() {
            dist.push(vec![k.to_string(), fmt(w[0]), fmt(w[1]), fmt(before.pmf[k]), fmt(after.pmf[k])]);
        }
        let h: Vec<String> = ["cell", "lower", "upper", "before", "after"].iter().map(|s| s.to_string()).collect();
        dir.write_table("target_distribution.csv", &h, &dist)?;
    }
    let report = ControlReport {
        command: "control",
        config: &cfg,
        params: outcome.params.clone(),
        kl: outcome.kl,
        initial_kl: outcome.initial_kl,
        trace_strictly_decreasing: outcome.trace.is_strictly_decreasing(),
        target_edges: edges,
        before,
        after,
        trace: outcome.trace,
    };
    dir.write_json("report.json", &report)?;
    println!(
        "theta_s = {:?}, theta_aa = {:?}, KL {:.4} -> {:.4} bits, var(J) {:?} -> {:?}",
        report.params.theta_s,
        report.params.theta_aa,
        report.initial_kl,
        report.kl,
        report.before.variance,
        report.after.variance
    );
    Ok(())
}

#[derive(Serialize)]
struct FixtureEntry {
    name: &'static str,
    description: &'static str,
    alphabet: Vec<usize>,
    stationary: bool,
}

#[derive(Serialize)]
struct FixtureRequest {
    name: Option<String>,
    samples: Option<usize>,
    seed: u64,
}

#[derive(Serialize)]
struct FixtureCell {
    present: Vec<u32>,
    next: Vec<u32>,
    p: f64,
}

#[derive(Serialize)]
struct FixturesReport {
    command: &'static str,
    config: FixtureRequest,
    catalog: Vec<FixtureEntry>,
    one_step_joint: Option<Vec<FixtureCell>>,
    trajectory_file: Option<&'static str>,
}

pub fn fixtures(args: &FixtureArgs) -> Result<(), CliError> {
    let catalog: Vec<FixtureEntry> = symbolic_map_suite()
        .iter()
        .map(|f| FixtureEntry {
            name: f.name,
            description: f.description,
            alphabet: f.alphabet().to_vec(),
            stationary: f.is_stationary(),
        })
        .collect();
    let dir = RunDir::create(&args.out)?;
    let mut one_step_joint = None;
    let mut trajectory_file = None;
    match &args.name {
        Some(name) => {
            let f = fixture(name)?;
            let v = f.n_vars();
            let cells: Vec<FixtureCell> = f
                .one_step_joint()
                .iter()
                .map(|(key, p)| FixtureCell { present: key[..v].to_vec(), next: key[v..].to_vec(), p })
                .collect();
            let mut header: Vec<String> = (0..v).map(|i| format!("q{i}")).collect();
            header.extend((0..v).map(|i| format!("q{i}_next")));
            header.push("p".into());
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| c.present.iter().chain(&c.next).map(u32::to_string).chain(std::iter::once(fmt(c.p))).collect())
                .collect();
            dir.write_table("one_step_joint.csv", &header, &rows)?;
            one_step_joint = Some(cells);
            if let Some(n) = args.samples {
                let s = f.trajectory(n, args.seed)?;
                let rows: Vec<Vec<String>> =
                    (0..s.n_samples()).map(|t| (0..v).map(|i| s.codes(i)[t].to_string()).collect()).collect();
                dir.write_table("trajectory.csv", &symbol_names(v), &rows)?;
                trajectory_file = Some("trajectory.csv");
            }
        }
        None if args.samples.is_some() => {
            return Err(CliError::Config { path: "--samples".into(), message: "needs --name".into() });
        }
        None => {
            for f in &catalog {
                println!("{:<20} {:?} {}", f.name, f.alphabet, f.description);
            }
        }
    }
    let report = FixturesReport {
        command: "fixtures",
        config: FixtureRequest { name: args.name.clone(), samples: args.samples, seed: args.seed },
        catalog,
        one_step_joint,
        trajectory_file,
    };
    dir.write_json("report.json", &report)?;
    Ok(())
}
