//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! quantities, the pinned tolerance and the runtime. Exits non-zero when any
//! criterion fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use infoflux::causality::{causality_map, correlation_map, FluxEngine, FluxQuery};
use infoflux::control::{
    channel_capacity, controllability, noisy_observability_bound, observability, ControlOptions, ControlProblem,
    ControlTarget, ControllerParams,
};
use infoflux::infocore::{co_information, KlOptions};
use infoflux::modeling::{
    expected_error_lower_bound, fano_error_probability_bound, kl_fit, ml_equivalence_check, pinsker_statistical_bound,
    KlFitOptions, ModelAssessment, ModelParams, ObservableSpec, ReferenceMatch, SimRequest,
};
use infoflux::optim::DescentOptions;
use infoflux::rng::{stream, StreamRng};
use infoflux::systems::{simulate, symbolic_map_suite, LinearPlant, LinearPlantParams, SystemKind, SystemSpec};
use infoflux::{discretize, JointPMF, PartitionSpec, SignalMatrix, SymbolSeries};
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

// ---------------------------------------------------------------- oracles

/// Random PMF with every cell strictly positive.
fn random_pmf(rng: &mut StreamRng, dims: Vec<usize>) -> JointPMF {
    let n: usize = dims.iter().product();
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / total).collect();
    JointPMF::from_dense(dims, &p).unwrap()
}

/// Random PMF where about a third of the cells are empty.
fn random_sparse_pmf(rng: &mut StreamRng, dims: Vec<usize>) -> JointPMF {
    let n: usize = dims.iter().product();
    let mut w: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < 0.35 { 0.0 } else { rng.gen::<f64>() }).collect();
    w[0] += 1e-3;
    let total: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / total).collect();
    JointPMF::from_dense(dims, &p).unwrap()
}

/// Entropy of the marginal over `keep`, computed from scratch.
fn oracle_entropy(pmf: &JointPMF, keep: &[usize]) -> f64 {
    let mut marginal: HashMap<Vec<u32>, f64> = HashMap::new();
    for (key, p) in pmf.iter() {
        *marginal.entry(keep.iter().map(|&d| key[d]).collect()).or_default() += p;
    }
    marginal.values().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

/// `H(X_target | X_given)` as a difference of marginal entropies.
fn oracle_conditional(pmf: &JointPMF, target: usize, given: &[usize]) -> f64 {
    let mut all = vec![target];
    all.extend_from_slice(given);
    oracle_entropy(pmf, &all) - oracle_entropy(pmf, given)
}

fn cv(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

fn binary_entropy(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

// ---------------------------------------------------------------- criteria

fn c1_decomposition_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut check = |report: infoflux::causality::FluxReport| {
        worst = worst.max(report.decomposition_residual().abs());
        cases += 1;
    };
    for f in symbolic_map_suite() {
        for t in 0..f.n_vars() {
            let mut engine = FluxEngine::from_joint(f.flux_joint(t).unwrap()).unwrap();
            check(engine.report(f.n_vars(), 1 << 20).unwrap());
        }
        if f.is_stationary() {
            let s = f.trajectory(20_000, 1).unwrap();
            for t in 0..s.n_vars() {
                check(infoflux::causality::flux_report(&FluxQuery::new(&s, t, 1)).unwrap());
            }
        }
    }
    let specs = [
        SystemSpec::new(SystemKind::CoupledLogistic, 51_000, 1_000, 2).with("coupling", 0.3),
        SystemSpec::new(SystemKind::Lorenz96, 21_000, 1_000, 2).with("n_sites", 4.0),
        SystemSpec::new(SystemKind::GoyShell, 21_000, 1_000, 2),
        SystemSpec::new(SystemKind::LinearPlant, 21_000, 1_000, 2).with("beta", 0.3),
    ];
    for spec in &specs {
        let signal = simulate(spec).unwrap();
        let s = discretize(&signal, &PartitionSpec::default()).unwrap();
        for t in 0..s.n_vars() {
            check(infoflux::causality::flux_report(&FluxQuery::new(&s, t, 1)).unwrap());
        }
    }
    Outcome::new(worst <= 1e-10, format!("max |sum T + leak - H| = {worst:.2e} bits over {cases} targets (tol 1e-10)"))
}

fn c2_zero_flux() -> Outcome {
    let spec = SystemSpec::new(SystemKind::CoupledLogistic, 1_001_000, 1_000, 42).with("coupling", 0.0);
    let signal = simulate(&spec).unwrap();
    let s = discretize(&signal, &PartitionSpec::quantile(8)).unwrap();
    let mut e = FluxQuery::new(&s, 1, 1).engine().unwrap();
    let sampled = e.flux(&[0]).unwrap().0;
    let f = infoflux::systems::fixture("independent-chains").unwrap();
    let mut exact: f64 = 0.0;
    for (target, source) in [(0, 1), (1, 0)] {
        let mut engine = FluxEngine::from_joint(f.flux_joint(target).unwrap()).unwrap();
        exact = exact.max(engine.flux(&[source]).unwrap().0.abs());
    }
    Outcome::new(
        sampled.abs() < 0.01 && exact < 1e-12,
        format!(
            "logistic |T_x->y| = {:.2e} (tol 0.01), exact decoupled max |T| = {exact:.2e} (tol 1e-12)",
            sampled.abs()
        ),
    )
}

fn c3_transfer_entropy() -> Outcome {
    let mut rng = stream(3, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n_vars = rng.gen_range(2..=4);
        let mut dims = vec![rng.gen_range(2..=3)];
        dims.extend((0..n_vars).map(|_| rng.gen_range(2..=3)));
        let pmf = random_sparse_pmf(&mut rng, dims);
        let mut engine = FluxEngine::from_joint(pmf.clone()).unwrap();
        let all: Vec<usize> = (1..=n_vars).collect();
        let full = oracle_conditional(&pmf, 0, &all);
        for i in 1..=n_vars {
            let rest: Vec<usize> = all.iter().copied().filter(|&d| d != i).collect();
            let oracle = oracle_conditional(&pmf, 0, &rest) - full;
            let got = engine.flux(&[i - 1]).unwrap().0;
            worst = worst.max((got - oracle).abs());
        }
    }
    Outcome::new(worst <= 1e-12, format!("max |T_i - [H(Y|Y_-i) - H(Y|Y)]| = {worst:.2e} over 50 PMFs (tol 1e-12)"))
}

fn c4_cascade() -> Outcome {
    let spec = SystemSpec::new(SystemKind::GoyShell, 505_000, 5_000, 1);
    let signal = simulate(&spec).unwrap();
    let s = discretize(&signal, &PartitionSpec::quantile(4)).unwrap();
    let map = causality_map(&s, 1, 1).unwrap();
    let t = |i: usize, j: usize| map.values[i][j];
    let asym = (0..3).all(|i| t(i, i + 1) > t(i + 1, i));
    let forward: Vec<f64> = (0..3).map(|i| t(i, i + 1)).collect();
    let min_forward = forward.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_other = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && j != i + 1)
        .map(|(i, j)| t(i, j))
        .fold(f64::NEG_INFINITY, f64::max);
    let corr = correlation_map(&signal, 1).unwrap();
    let off = |m: &Vec<Vec<f64>>| -> Vec<f64> {
        (0..4).flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j]).collect()
    };
    let ratio = cv(&off(&map.values)) / cv(&off(&corr));
    Outcome::new(
        asym && min_forward > max_other && ratio >= 5.0,
        format!(
            "forward T_i->i+1 = {:.4?} > backward {:.4?}: {asym}; min forward {min_forward:.4} vs max other {max_other:.4}; \
             spread ratio {ratio:.2} (need >= 5)",
            forward,
            (0..3).map(|i| t(i + 1, i)).collect::<Vec<_>>()
        ),
    )
}

fn c5_xor() -> Outcome {
    let f = infoflux::systems::fixture("xor").unwrap();
    // dims of the flux joint: (y', x1, x2, y)
    let joint = f.flux_joint(2).unwrap();
    let triple = joint.marginalize(&[0, 1, 2]).unwrap();
    let coinfo = co_information(&triple, &[&[0], &[1], &[2]], &[]).unwrap().0;
    let mut engine = FluxEngine::from_joint(joint).unwrap();
    let pair = engine.flux(&[0, 1]).unwrap().0;
    let singles = [engine.flux(&[0]).unwrap().0, engine.flux(&[1]).unwrap().0];
    let pass = coinfo == -1.0 && pair >= 0.99 && singles.iter().all(|s| s.abs() < 0.01);
    Outcome::new(
        pass,
        format!(
            "co-information {coinfo} (need -1 exactly); T_[x1,x2]->y = {pair:.4} (need >= 0.99); \
             T_x1->y, T_x2->y = {:.4?} (need < 0.01)",
            singles
        ),
    )
}

fn c6_fano_markov() -> Outcome {
    let mut rng = stream(6, 0);
    let (mut worst_pe, mut worst_mean) = (f64::INFINITY, f64::INFINITY);
    let mut nontrivial = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=5);
        let r = rng.gen_range(0..=(n - 1) / 2);
        let list = 2 * r + 1;
        if list >= n {
            continue;
        }
        let delta = 0.5 + rng.gen::<f64>();
        let eps = list as f64 * delta;
        let joint = if rng.gen::<bool>() {
            random_sparse_pmf(&mut rng, vec![n, n])
        } else {
            // near-perfect models keep the bound informative
            let mut w = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    w[i * n + j] = if i == j { 1.0 } else { 0.2 * rng.gen::<f64>() };
                }
            }
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            JointPMF::from_dense(vec![n, n], &p).unwrap()
        };
        let a = ModelAssessment::from_joint(&joint, eps, delta).unwrap();
        let bound_pe = fano_error_probability_bound(&a).unwrap();
        let bound_mean = expected_error_lower_bound(&a).unwrap();
        if bound_pe > 0.0 {
            nontrivial += 1;
        }
        // error = width of the smallest centred cell window holding the truth
        let error = |k: &[u32]| delta * (2 * (k[0] as i64 - k[1] as i64).unsigned_abs() + 1) as f64;
        let pe: f64 = joint.iter().filter(|(k, _)| error(k) > eps).map(|(_, p)| p).sum();
        let mean: f64 = joint.iter().map(|(k, p)| p * error(k)).sum();
        worst_pe = worst_pe.min(pe - bound_pe);
        worst_mean = worst_mean.min(mean - bound_mean);
    }
    Outcome::new(
        worst_pe >= -1e-12 && worst_mean >= -1e-12,
        format!(
            "min Pr(e > eps) - bound = {worst_pe:.3e}, min E[e] - bound = {worst_mean:.3e} (tol -1e-12); \
             {nontrivial} non-zero bounds"
        ),
    )
}

fn c7_pinsker() -> Outcome {
    let mut rng = stream(7, 0);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=8);
        let p = random_sparse_pmf(&mut rng, vec![k]);
        let q = if rng.gen::<bool>() { random_pmf(&mut rng, vec![k]) } else { random_sparse_pmf(&mut rng, vec![k]) };
        let bound = pinsker_statistical_bound(&p, &q).unwrap();
        worst = worst.min(bound - p.l1_distance(&q).unwrap());
    }
    Outcome::new(worst >= 0.0, format!("min sqrt(2 ln2 KL) - |p - q|_1 = {worst:.3e} over 1000 pairs (need >= 0)"))
}

fn c8_ml_equivalence() -> Outcome {
    let mut rng = stream(8, 0);
    let k = 6;
    // tilted family p_theta(c) proportional to exp(theta c); theta = 0 is uniform
    let grid: Vec<Vec<f64>> = (0..9).map(|i| vec![-1.0 + 0.25 * i as f64]).collect();
    let family = |t: &[f64]| {
        let w: Vec<f64> = (0..k).map(|c| (t[0] * c as f64).exp()).collect();
        let z: f64 = w.iter().sum();
        JointPMF::from_dense(vec![k], &w.iter().map(|x| x / z).collect::<Vec<_>>())
    };
    let mut disagreements = 0;
    let mut worst_identity: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(20..2000);
        let tilt = rng.gen_range(-1.2..1.2);
        let probs = family(&[tilt]).unwrap().to_dense();
        let codes: Vec<u32> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                probs
                    .iter()
                    .position(|&p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(k - 1) as u32
            })
            .collect();
        let samples = SymbolSeries::from_codes(vec![codes], vec![k]).unwrap();
        let report = ml_equivalence_check(&samples, family, &grid).unwrap();
        if !report.agree {
            disagreements += 1;
        }
        worst_identity = worst_identity.max(report.identity_residual);
    }
    Outcome::new(
        disagreements == 0,
        format!("{disagreements} disagreements over 100 sample sets, max |KL + LL + H| = {worst_identity:.2e}"),
    )
}

/// `theta_0 + theta_1 z` with standard normal `z`, from the request seed.
fn location_scale(theta: &[f64], req: &SimRequest) -> infoflux::Result<SignalMatrix> {
    let mut rng = stream(req.seed, 0);
    let col =
        (0..req.n_samples).map(|_| theta[0] + theta[1] * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    SignalMatrix::unnamed(vec![col])
}

fn c9_kl_fit() -> Outcome {
    let truth = [0.7, 1.3];
    let n = 200_000;
    let reference = location_scale(&truth, &SimRequest { seed: 11, n_samples: n }).unwrap();
    let obs = ObservableSpec { columns: vec![0], partition: PartitionSpec::quantile(16) };
    let objective = ReferenceMatch::from_signal(&reference, &obs, KlOptions::regularized()).unwrap();
    let init = ModelParams::new(vec![0.0, 1.0], vec![(-5.0, 5.0), (0.1, 5.0)]).unwrap();
    let opts = KlFitOptions { seed: 11, batch_len: n, descent: DescentOptions { tol: 1e-10, ..Default::default() } };
    let out = kl_fit(location_scale, &objective, &init, &opts).unwrap();
    let err: Vec<f64> = out.params.theta.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect();
    Outcome::new(
        err.iter().all(|e| *e < 1e-3) && out.trace.is_monotone(),
        format!(
            "theta = {:.5?}, max |error| = {:.1e} (tol 1e-3), monotone trace: {}",
            out.params.theta,
            err.iter().cloned().fold(0.0, f64::max),
            out.trace.is_monotone()
        ),
    )
}

fn c10_capacity() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 2..=8 {
        let identity: Vec<Vec<f64>> =
            (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let c = channel_capacity(&identity, 1e-9).unwrap().bits.0;
        worst = worst.max((c - (k as f64).log2()).abs());
    }
    let bsc = vec![vec![0.89, 0.11], vec![0.11, 0.89]];
    let c = channel_capacity(&bsc, 1e-9).unwrap().bits.0;
    let bsc_err = (c - (1.0 - binary_entropy(0.11))).abs();
    Outcome::new(
        worst <= 1e-9 && bsc_err <= 1e-6,
        format!("identity max error {worst:.1e} (tol 1e-9), BSC(0.11) error {bsc_err:.1e} (tol 1e-6)"),
    )
}

fn c11_observability() -> Outcome {
    let mut in_range = true;
    let mut evaluated = 0;
    for f in symbolic_map_suite() {
        let v = f.n_vars();
        let joint = f.one_step_joint();
        for target in 0..v {
            for sensor in 0..v {
                // J is the next target state; S and A are present states
                let pair = joint.marginalize(&[v + target, sensor]).unwrap();
                // scores of a constant J are undefined and skipped
                for x in [observability(&pair), controllability(&pair)].into_iter().flatten() {
                    evaluated += 1;
                    in_range &= (-1e-12..=1.0 + 1e-12).contains(&x);
                }
            }
        }
    }
    let diag: Vec<(Vec<u32>, f64)> = (0..5).map(|j| (vec![j, j], 0.2)).collect();
    let equal = JointPMF::from_masses(vec![5, 5], diag).unwrap();
    let o_identity = observability(&equal).unwrap();
    let det: Vec<(Vec<u32>, f64)> = (0..4).map(|a| (vec![(3 * a + 1) % 4, a], 0.25)).collect();
    let c_det = controllability(&JointPMF::from_masses(vec![4, 4], det).unwrap()).unwrap();
    let mut all_hold = true;
    let mut worst_margin = f64::INFINITY;
    for level in 0..20 {
        // S = J with probability 1 - p, otherwise S = W; W independent of J
        let p = level as f64 / 19.0;
        let mut cells = Vec::new();
        for j in 0..4u32 {
            for w in 0..4u32 {
                let base = 1.0 / 16.0;
                cells.push((vec![j, j, w], base * (1.0 - p)));
                cells.push((vec![j, w, w], base * p));
            }
        }
        let joint = JointPMF::from_weights(vec![4, 4, 4], cells).unwrap();
        let nb = noisy_observability_bound(&joint).unwrap();
        all_hold &= nb.holds && nb.observability <= nb.bound + 1e-12;
        worst_margin = worst_margin.min(nb.bound - nb.observability);
    }
    Outcome::new(
        in_range && o_identity == 1.0 && c_det == 1.0 && all_hold,
        format!(
            "{evaluated} fixture scores in [0,1]: {in_range}; O_J(S=J) = {o_identity}; C_J(A->J) = {c_det}; \
             noisy bound holds on 20 levels: {all_hold} (min margin {worst_margin:.3e})"
        ),
    )
}

fn c12_control() -> Outcome {
    let plant = LinearPlant::new(LinearPlantParams::default(), 0).unwrap();
    let target = ControlTarget::scalar(0.0, 0.5);
    let init = ControllerParams::new(vec![2.0], vec![0.2], vec![(0.0, 10.0)], vec![(0.0, 1.2)]).unwrap();
    let opts = ControlOptions { n_steps: 100_000, seed: 0, ..Default::default() };
    let problem = ControlProblem::new(&plant, &target, &init, opts).unwrap();
    let out = problem.optimize(&init).unwrap();
    let (ds, db) = (0.5, 0.05);
    let grid: Vec<(f64, f64)> = (0..=20).flat_map(|i| (0..=24).map(move |j| (ds * i as f64, db * j as f64))).collect();
    let values: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&(s, b)| {
            let p = ControllerParams { theta_s: vec![s], theta_aa: vec![b], ..init.clone() };
            (problem.kl(&p).unwrap(), s, b)
        })
        .collect();
    let best = values.iter().cloned().fold((f64::INFINITY, 0.0, 0.0), |m, v| if v.0 < m.0 { v } else { m });
    let (s_opt, b_opt) = (out.params.theta_s[0], out.params.theta_aa[0]);
    let within = (s_opt - best.1).abs() <= ds && (b_opt - best.2).abs() <= db;
    let mut free = init.clone();
    free.theta_aa = vec![0.0];
    let var = |p: &ControllerParams| {
        let j = problem.evaluate(p).unwrap().j_next;
        let c = j.column(0);
        let m = c.iter().sum::<f64>() / c.len() as f64;
        c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / c.len() as f64
    };
    let (v_free, v_ctrl) = (var(&free), var(&out.params));
    let decreasing = out.trace.is_strictly_decreasing();
    Outcome::new(
        within && decreasing && v_ctrl < v_free,
        format!(
            "optimizer ({s_opt:.3}, {b_opt:.3}) vs grid ({}, {}) with cells ({ds}, {db}): {within}; \
             strictly decreasing: {decreasing}; var(J) {v_free:.3} -> {v_ctrl:.3}",
            best.1, best.2
        ),
    )
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn c13_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_infoflux");
    let dir = std::env::temp_dir().join(format!("infoflux-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let runs: Vec<(&str, PathBuf)> = vec![
        (
            "simulate",
            write_config(
                &dir,
                "sim.json",
                r#"{"system":{"kind":"lorenz96","n_steps":5000,"transient_steps":500,"seed":3}}"#,
            ),
        ),
        (
            "causality",
            write_config(
                &dir,
                "cau.json",
                r#"{"input":{"system":{"kind":"coupled-logistic","parameters":{"coupling":0.2},"n_steps":60000,"transient_steps":1000,"seed":9}},"order":2}"#,
            ),
        ),
        (
            "fit",
            write_config(
                &dir,
                "fit.json",
                r#"{"family":"ar1","reference":{"theta":{"theta":[0.6,0.8]}},"init":{"theta":[0.2,1.2],"bounds":[[-0.9,0.9],[0.1,3.0]]},"options":{"seed":2,"batch_len":20000}}"#,
            ),
        ),
        (
            "control",
            write_config(
                &dir,
                "ctl.json",
                r#"{"plant":{"kind":"linear-plant"},"target":{"mu_target":[0.0],"sigma_target":[[0.5]]},"init":{"theta_s":[3.0],"theta_aa":[0.2],"bounds_s":[[0.0,10.0]],"bounds_aa":[[0.0,1.2]]},"options":{"n_steps":8000,"transient":200,"seed":4,"max_outer":3}}"#,
            ),
        ),
    ];
    let mut identical = 0;
    let mut problems = Vec::new();
    for (cmd, config) in &runs {
        let mut reports = Vec::new();
        for (k, workers) in ["1", "4"].iter().enumerate() {
            let out = dir.join(format!("{cmd}-{k}"));
            let status = Command::new(exe)
                .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers])
                .output()
                .unwrap();
            if !(status.status.success() || (*cmd == "fit" && status.status.code() == Some(3))) {
                problems.push(format!(
                    "{cmd} exited {:?}: {}",
                    status.status.code(),
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
            reports.push(std::fs::read(out.join("report.json")).unwrap_or_default());
        }
        if !reports[0].is_empty() && reports[0] == reports[1] {
            identical += 1;
        } else {
            problems.push(format!("{cmd} reports differ"));
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    Outcome::new(
        identical == runs.len() && problems.is_empty(),
        format!("{identical}/{} commands byte-identical across reruns (1 vs 4 workers) {problems:?}", runs.len()),
    )
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "decomposition identity",
            limit: Some(Duration::from_secs(30)),
            run: c1_decomposition_identity,
        },
        Criterion { id: 2, name: "zero-flux law", limit: None, run: c2_zero_flux },
        Criterion { id: 3, name: "transfer-entropy reduction", limit: None, run: c3_transfer_entropy },
        Criterion { id: 4, name: "cascade directionality", limit: Some(Duration::from_secs(300)), run: c4_cascade },
        Criterion { id: 5, name: "xor synergy", limit: None, run: c5_xor },
        Criterion { id: 6, name: "fano and markov bounds", limit: None, run: c6_fano_markov },
        Criterion { id: 7, name: "pinsker bound", limit: None, run: c7_pinsker },
        Criterion { id: 8, name: "maximum-likelihood equivalence", limit: None, run: c8_ml_equivalence },
        Criterion { id: 9, name: "kl_fit recovery", limit: Some(Duration::from_secs(60)), run: c9_kl_fit },
        Criterion { id: 10, name: "channel capacity", limit: None, run: c10_capacity },
        Criterion { id: 11, name: "observability and controllability", limit: None, run: c11_observability },
        Criterion { id: 12, name: "control optimization", limit: Some(Duration::from_secs(300)), run: c12_control },
        Criterion { id: 13, name: "cli determinism", limit: None, run: c13_determinism },
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let pass = outcome.pass && in_time;
        let limit = c.limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs()));
        println!(
            "{} [{:>2}] {}: {} ({:.1}s{limit})",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            outcome.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
