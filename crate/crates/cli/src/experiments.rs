//! Expansion of a config into independent tasks and their execution.

use polymer_core::charge::{sample_charges, ChargeDistribution};
use polymer_core::energy::{decompose, hamiltonian, HamiltonianMethod};
use polymer_core::gibbs::{log_partition, phase_scan, ChainBudget, GibbsConfig};
use polymer_core::green::{green_table, return_probabilities, GreenMethod};
use polymer_core::lattice::{local_times, sample_walk};
use polymer_core::rng::task_rng;
use polymer_core::tails::{
    conjecture_scan, d2_moderate_strategy, exact_h_distribution, gamma1, naive_samples, naive_tail,
    strategy_lower_bound, tilted_upper_bound, StrategyBudget, StrategyConfig,
};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{Map, Value};
use std::time::Instant;

use crate::config::{ExperimentConfig, Kind, TailMethod};
use crate::record::{finite, ResultRecord};

#[derive(Debug, Clone)]
enum Job {
    Identity { n_max: usize, d: usize, dist: ChargeDistribution },
    Oracle { n: usize, d: usize },
    Levels { n: usize, d: usize },
    Green { d: usize },
    Tail { method: TailMethod, n: usize, d: usize, xi: f64 },
    Gibbs { n: usize, d: usize, beta: f64 },
    Conjecture { n: usize, d: usize },
}

#[derive(Debug, Clone)]
pub struct Task {
    pub index: usize,
    pub params: Map<String, Value>,
    job: Job,
}

/// One computed metric, with parameters beyond the task's own.
struct Metric {
    name: &'static str,
    value: f64,
    stderr: Option<f64>,
    extra: Vec<(&'static str, Value)>,
}

fn metric(name: &'static str, value: f64, stderr: Option<f64>) -> Metric {
    Metric {
        name,
        value,
        stderr,
        extra: Vec::new(),
    }
}

fn params(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn dist_name(d: ChargeDistribution) -> Value {
    serde_json::to_value(d).expect("serialisable")
}

/// Expand the grids of `cfg` into tasks, in a fixed order.
pub fn plan(cfg: &ExperimentConfig) -> Vec<Task> {
    let m = &cfg.model;
    let mut jobs: Vec<(Map<String, Value>, Job)> = Vec::new();
    match cfg.kind {
        Kind::IdentitySuite => {
            let n_max = *m.n.iter().max().expect("validated");
            for &d in &m.d {
                for &dist in &m.distribution {
                    let p = params(&[("n_max", n_max.into()), ("d", d.into()), ("distribution", dist_name(dist))]);
                    jobs.push((p, Job::Identity { n_max, d, dist }));
                }
            }
        }
        Kind::OracleCompare => {
            for &d in &m.d {
                for &n in &m.n {
                    jobs.push((params(&[("n", n.into()), ("d", d.into())]), Job::Oracle { n, d }));
                }
            }
        }
        Kind::LevelSets => {
            for &d in &m.d {
                for &n in &m.n {
                    jobs.push((params(&[("n", n.into()), ("d", d.into())]), Job::Levels { n, d }));
                }
            }
        }
        Kind::Green => {
            for &d in &m.d {
                jobs.push((params(&[("d", d.into())]), Job::Green { d }));
            }
        }
        Kind::TailsScan => {
            let method = m.method.expect("validated");
            for &d in &m.d {
                for &n in &m.n {
                    let xis: Vec<f64> = match m.xi_exponent {
                        Some(e) => vec![(n as f64).powf(e)],
                        None => m.xi.clone(),
                    };
                    for xi in xis {
                        let p = params(&[
                            ("method", serde_json::to_value(method).unwrap()),
                            ("n", n.into()),
                            ("d", d.into()),
                            ("xi", xi.into()),
                        ]);
                        jobs.push((p, Job::Tail { method, n, d, xi }));
                    }
                }
            }
        }
        Kind::GibbsScan => {
            for &d in &m.d {
                for &n in &m.n {
                    for &beta in &m.beta {
                        let p = params(&[("n", n.into()), ("d", d.into()), ("beta", beta.into())]);
                        jobs.push((p, Job::Gibbs { n, d, beta }));
                    }
                }
            }
        }
        Kind::ConjectureProbe => {
            for &d in &m.d {
                for &n in &m.n {
                    jobs.push((params(&[("n", n.into()), ("d", d.into())]), Job::Conjecture { n, d }));
                }
            }
        }
    }
    jobs.into_iter()
        .enumerate()
        .map(|(index, (params, job))| Task { index, params, job })
        .collect()
}

fn identity_suite<R: Rng>(n_max: usize, d: usize, dist: ChargeDistribution, instances: usize, rng: &mut R) -> Result<Vec<Metric>, String> {
    let mut violations = 0u64;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(2..=n_max);
        let walk = sample_walk(n, d, rng).map_err(|e| e.to_string())?;
        let charges = sample_charges(n, dist, rng);
        let direct = hamiltonian(&walk, &charges, HamiltonianMethod::Direct).map_err(|e| e.to_string())?;
        let per_site = hamiltonian(&walk, &charges, HamiltonianMethod::PerSite).map_err(|e| e.to_string())?;
        let parts = decompose(&walk, &charges).map_err(|e| e.to_string())?;
        let scale = 1.0 + charges.values.iter().map(|v| v * v).sum::<f64>();
        let rel = (direct - per_site).abs() / scale;
        worst = worst.max(rel);
        let eta_sq: f64 = charges.values.iter().map(|v| v * v).sum();
        let ok = if dist == ChargeDistribution::Rademacher {
            direct == per_site && parts.y == 0.0 && parts.h == direct && direct >= -(n as f64)
        } else {
            rel < 1e-10
                && (parts.h - (parts.x_check + parts.y)).abs() < 1e-10 * scale
                && (parts.h - direct).abs() < 1e-10 * scale
                && direct >= -eta_sq - 1e-10 * scale
                && parts.x_check >= -(n as f64) - 1e-10 * scale
        };
        if !ok {
            violations += 1;
        }
    }
    Ok(vec![
        metric("violations", violations as f64, None),
        metric("instances", instances as f64, None),
        metric("max_rel_err", worst, None),
    ])
}

fn oracle_compare<R: Rng>(n: usize, d: usize, samples: usize, rng: &mut R) -> Result<Vec<Metric>, String> {
    let exact = exact_h_distribution(n, d).map_err(|e| e.to_string())?;
    let draws = naive_samples(n, d, ChargeDistribution::Rademacher, samples, rng).map_err(|e| e.to_string())?;
    let tv = exact.total_variation(&draws);
    let mut sorted = draws;
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut max_z = 0.0f64;
    for &h in exact.counts.keys() {
        let p = exact.lower_tail(-(h as f64));
        if p <= 0.0 || p >= 1.0 {
            continue;
        }
        let hits = sorted.partition_point(|&v| v <= h as f64);
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        max_z = max_z.max((hits as f64 / samples as f64 - p).abs() / se);
    }
    Ok(vec![metric("tv", tv, None), metric("max_tail_z", max_z, None)])
}

fn level_sets<R: Rng>(n: usize, d: usize, walks: usize, rng: &mut R) -> Result<Vec<Metric>, String> {
    let gamma0 = green_table(d).map_err(|e| e.to_string())?.gamma0;
    let mut sums = [0.0f64; 4];
    let mut sq = [0.0f64; 4];
    let mut range = 0.0;
    let mut l2 = 0.0;
    for _ in 0..walks {
        let f = local_times(&sample_walk(n, d, rng).map_err(|e| e.to_string())?);
        let h = f.level_histogram();
        for k in 1..=4 {
            let v = h.get(k).copied().unwrap_or(0) as f64 / n as f64;
            sums[k - 1] += v;
            sq[k - 1] += v * v;
        }
        range += f.range_size() as f64 / n as f64;
        l2 += f.q_norm(2.0).map_err(|e| e.to_string())? / n as f64;
    }
    let w = walks as f64;
    let mut out = Vec::new();
    for k in 1..=4 {
        let mean = sums[k - 1] / w;
        let se = ((sq[k - 1] / w - mean * mean).max(0.0) / w).sqrt();
        let mut m = metric("level_fraction", mean, Some(se));
        m.extra.push(("k", k.into()));
        out.push(m);
        let mut p = metric("level_prediction", gamma0 * gamma0 * (1.0 - gamma0).powi(k as i32 - 1), None);
        p.extra.push(("k", k.into()));
        out.push(p);
    }
    out.push(metric("range_fraction", range / w, None));
    out.push(metric("l2_per_n", l2 / w, None));
    out.push(metric("gamma0", gamma0, None));
    Ok(out)
}

fn green(d: usize) -> Result<Vec<Metric>, String> {
    let t = green_table(d).map_err(|e| e.to_string())?;
    let q = return_probabilities(d, 100, GreenMethod::Quadrature).map_err(|e| e.to_string())?;
    let c = return_probabilities(d, 100, GreenMethod::Convolution).map_err(|e| e.to_string())?;
    let diff = (1..=100).map(|m| ((q.prob(m) - c.prob(m)) / c.prob(m)).abs()).fold(0.0, f64::max);
    Ok(vec![
        metric("c_d", t.c_d, Some(t.tail_bound)),
        metric("gamma0", t.gamma0, None),
        metric("terms", t.terms as f64, None),
        metric("max_rel_diff", diff, None),
    ])
}

fn tail<R: Rng>(cfg: &ExperimentConfig, method: TailMethod, n: usize, d: usize, xi: f64, rng: &mut R) -> Result<Vec<Metric>, String> {
    let m = &cfg.model;
    let b = &cfg.budget;
    let nf = n as f64;
    let strategy_budget = StrategyBudget {
        replicates: b.replicates,
        particles: b.particles,
        ..StrategyBudget::default()
    };
    let err = |e: polymer_core::Error| e.to_string();
    let mut out = Vec::new();
    match method {
        TailMethod::Naive => {
            let x = xi * nf.powf(2.0 / 3.0);
            let est = naive_tail(n, d, ChargeDistribution::Rademacher, x, b.samples, rng).map_err(err)?;
            out.push(metric("x", x, None));
            out.push(metric("p_hat", est.p_hat, Some(est.stderr)));
            out.push(metric("log_p", est.log_p, Some(est.rel_stderr)));
            if let Some(u) = est.upper_bound {
                out.push(metric("upper_bound", u, None));
            }
        }
        TailMethod::Strategy | TailMethod::Folded => {
            let x = if method == TailMethod::Strategy { xi * nf.powf(2.0 / 3.0) } else { xi * nf };
            let sc = StrategyConfig::for_target(n, d, x).with_delta0(m.delta0);
            let est = strategy_lower_bound(n, d, x, &sc, &strategy_budget, rng).map_err(err)?;
            out.push(metric("x", x, None));
            out.push(metric("log_p", est.estimate.log_p, Some(est.estimate.rel_stderr)));
            out.push(metric("neg_log_p", -est.estimate.log_p, Some(est.estimate.rel_stderr)));
            out.push(metric("log_walk_factor", est.log_walk_factor, None));
            out.push(metric("log_charge_factor", est.log_charge_factor, None));
            out.push(metric("restriction_failure", est.restriction_failure.p_hat, Some(est.restriction_failure.stderr)));
            out.push(metric("ball_volume", est.lattice_volume as f64, None));
        }
        TailMethod::Tilted => {
            let x = xi * nf.powf(2.0 / 3.0);
            let y = xi.powf(0.2) * nf.powf(1.0 / 3.0);
            let bound = tilted_upper_bound(n, d, x, m.lambda, y, b.walks, rng).map_err(err)?;
            out.push(metric("x", x, None));
            out.push(metric("log_p", bound.log_bound, Some(bound.rel_stderr)));
            out.push(metric("neg_log_p", -bound.log_bound, Some(bound.rel_stderr)));
        }
        TailMethod::D2 => {
            let g1 = gamma1(green_table(d).map_err(err)?.gamma0);
            let est = d2_moderate_strategy(n, d, xi, g1, 0.1, b.walks, rng).map_err(err)?;
            out.push(metric("log_p", est.estimate.log_p, Some(est.estimate.rel_stderr)));
            out.push(metric("neg_log_p", -est.estimate.log_p, Some(est.estimate.rel_stderr)));
            out.push(metric("rate_over_xi2", -est.estimate.log_p / (xi * xi), None));
            out.push(metric("envelope_constant", est.envelope_constant, None));
            out.push(metric("d2_fraction", est.d2_fraction, None));
            out.push(metric("qualifying_fraction", est.qualifying_fraction, None));
            out.push(metric("gamma1", g1, None));
        }
    }
    Ok(out)
}

fn gibbs<R: Rng>(cfg: &ExperimentConfig, n: usize, d: usize, beta: f64, rng: &mut R) -> Result<Vec<Metric>, String> {
    let m = &cfg.model;
    let budget = ChainBudget {
        chains: cfg.budget.chains,
        steps: cfg.budget.chain_steps,
        thin: cfg.budget.thin,
    };
    let mut out = Vec::new();
    let cell = phase_scan(&[n], &[beta], &m.a, &m.b, d, &budget, rng)
        .map_err(|e| e.to_string())?
        .remove(0);
    if let Some(e) = cell.error {
        return Err(e);
    }
    for (a, f) in cell.mid_level {
        let mut r = metric("mid_level_freq", f, None);
        r.extra.push(("a", a.into()));
        out.push(r);
    }
    for (b, f) in cell.max_local {
        let mut r = metric("max_local_freq", f, None);
        r.extra.push(("b", b.into()));
        out.push(r);
    }
    out.push(metric("beta_eff", cell.beta_eff, None));
    out.push(metric("mean_energy", cell.energy.mean, Some(cell.energy.stderr)));
    out.push(metric("acceptance", cell.energy.acceptance, None));
    out.push(metric("equilibrated", cell.energy.equilibrated as u8 as f64, None));
    out.push(metric("mean_max_local_time", cell.mean_max_local_time, None));
    out.push(metric("audits", cell.audits as f64, None));
    if m.log_partition && beta > 0.0 {
        let mut gc = GibbsConfig::new(n, d, beta);
        gc.scaling = m.scaling;
        let lz = log_partition(&gc, &[0.0, beta], &budget, 1e-3, rng).map_err(|e| e.to_string())?;
        let v = *lz.log_z.last().unwrap();
        out.push(metric("log_z", v, Some(*lz.stderr.last().unwrap())));
        out.push(metric("log_z_upper", gc.beta_eff() * n as f64, None));
        out.push(metric("scaled_log_z", v * (n as f64).powf(-0.2), None));
        if let Ok(t) = green_table(d) {
            out.push(metric("high_temp_target", t.c_d * beta * beta / 2.0, None));
        }
    }
    Ok(out)
}

fn conjecture<R: Rng>(cfg: &ExperimentConfig, n: usize, d: usize, rng: &mut R) -> Result<Vec<Metric>, String> {
    let est = conjecture_scan(n, d, &cfg.model.y, cfg.budget.walks, rng).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (&y, e) in cfg.model.y.iter().zip(est) {
        let mut r = metric("p_hat", e.p_hat, Some(e.stderr));
        r.extra.push(("y", y.into()));
        out.push(r);
        if let Some(u) = e.upper_bound {
            let mut r = metric("upper_bound", u, None);
            r.extra.push(("y", y.into()));
            out.push(r);
        }
    }
    Ok(out)
}

fn run_job(cfg: &ExperimentConfig, task: &Task) -> Result<Vec<Metric>, String> {
    let mut rng = task_rng(cfg.seed, task.index as u64);
    let b = &cfg.budget;
    match task.job {
        Job::Identity { n_max, d, dist } => identity_suite(n_max, d, dist, b.samples, &mut rng),
        Job::Oracle { n, d } => oracle_compare(n, d, b.samples, &mut rng),
        Job::Levels { n, d } => level_sets(n, d, b.walks, &mut rng),
        Job::Green { d } => green(d),
        Job::Tail { method, n, d, xi } => tail(cfg, method, n, d, xi, &mut rng),
        Job::Gibbs { n, d, beta } => gibbs(cfg, n, d, beta, &mut rng),
        Job::Conjecture { n, d } => conjecture(cfg, n, d, &mut rng),
    }
}

pub struct RunOutcome {
    pub records: Vec<ResultRecord>,
    /// `(task index, parameters, error)` of failed tasks.
    pub failures: Vec<(usize, Map<String, Value>, String)>,
}

/// Run every task on a pool of `workers` threads. Records come back in
/// task order, so the output does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> RunOutcome {
    let tasks = plan(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(f64, Result<Vec<Metric>, String>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let start = Instant::now();
                let r = run_job(cfg, t);
                (start.elapsed().as_secs_f64(), r)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (task, (secs, result)) in tasks.iter().zip(results) {
        match result {
            Ok(metrics) => {
                for m in metrics {
                    let mut params = task.params.clone();
                    for (k, v) in m.extra {
                        params.insert(k.to_string(), v);
                    }
                    records.push(ResultRecord {
                        experiment: cfg.kind.name().to_string(),
                        task: task.index,
                        seed: cfg.seed,
                        params,
                        metric: m.name.to_string(),
                        value: finite(m.value),
                        stderr: m.stderr.and_then(finite),
                        wall_clock_s: secs,
                    });
                }
            }
            Err(e) => failures.push((task.index, task.params.clone(), e)),
        }
    }
    RunOutcome { records, failures }
}
