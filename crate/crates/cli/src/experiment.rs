//! Experiment runners. Replicas are evaluated in parallel chunks on per-replica streams
//! and merged in replica order, so results never depend on the worker count.

use std::collections::BTreeMap;
use std::fs;

use anyhow::{bail, Context, Result};
use gwve_core::coalescent::{
    coalescent_record, empirical_tail, uniform_leaf_sample, write_record_stream, CoalescentRecord, Estimate,
};
use gwve_core::limits::{
    bush_laplace, limit_group_split, limit_joint_tail_integral, limit_psi1_tail, yaglom_cdf, LimitQuery,
};
use gwve_core::oracle::{exact_q_distribution, write_outcomes_csv};
use gwve_core::rng::{replica_stream, Stream};
use gwve_core::sampler::{ImportanceSampler, QContext, QTreeSampler, SurvivalSampler};
use gwve_core::{EnvSummary, Environment};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::plot::{render_svg, Plot};
use crate::report::{write_report, write_results_csv, write_theory_csv, Curve, Report, ReportRow};
use crate::stats::{ks_statistic, mutual_information, normalize, null_tv_scale, total_variation, KOLMOGOROV_MEAN};

/// Partitions observed fewer times get no next-block rows: an absolute tolerance on
/// such small cells would test noise.
pub const MIN_CELL_COUNT: u64 = 1000;

/// Equal-width bins of ρ_B/ρ_n for the time/topology dependence check.
pub const TIME_BINS: usize = 4;

/// Replicas evaluated per parallel batch; bounds memory for large runs.
const CHUNK: u64 = 1 << 14;

/// Points on dense theory curves.
const CURVE_POINTS: usize = 101;

#[derive(Default)]
struct Outcome {
    rows: Vec<ReportRow>,
    curves: Vec<Curve>,
    plot: Option<Plot>,
    /// Extra output files (name, contents).
    files: Vec<(&'static str, Vec<u8>)>,
    failure: Option<String>,
}

impl Outcome {
    fn failed(message: String) -> Self {
        Outcome { failure: Some(message), ..Outcome::default() }
    }
}

/// Runs one experiment and writes its files into `config.out_dir`.
///
/// A run that stops early still writes every file, with the rows completed so far and
/// a `failure` entry in report.json, and then returns the error.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let out = &config.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .context("building worker pool")?;
    let outcome = pool.install(|| dispatch(config)).unwrap_or_else(|e| Outcome::failed(format!("{e:#}")));

    let report = Report::new(config, outcome.rows, outcome.failure);
    write_results_csv(&out.join("results.csv"), &report.rows)?;
    write_theory_csv(&out.join("theory.csv"), &report.rows, &outcome.curves)?;
    for (name, bytes) in &outcome.files {
        fs::write(out.join(name), bytes).with_context(|| format!("writing {name}"))?;
    }
    let svg_path = out.join("plots.svg");
    match &outcome.plot {
        Some(plot) => fs::write(&svg_path, render_svg(plot)?).context("writing plots.svg")?,
        None if svg_path.exists() => fs::remove_file(&svg_path).context("removing stale plots.svg")?,
        None => {}
    }
    write_report(&out.join("report.json"), &report)?;
    if let Some(failure) = &report.failure {
        bail!("{} stopped early: {failure} (partial results in {})", config.experiment.name(), out.display());
    }
    Ok(report)
}

fn dispatch(config: &ExperimentConfig) -> Result<Outcome> {
    let env = config.environment()?;
    match config.experiment {
        ExperimentKind::Yaglom => yaglom(config, &env),
        ExperimentKind::Psi1Tail => psi1_tail(config, &env),
        ExperimentKind::CoalescentTimes => coalescent_times(config, &env),
        ExperimentKind::Topology => topology(config, &env),
        ExperimentKind::OracleVerify => oracle_verify(config, &env),
        ExperimentKind::BushLaplace => bush_laplace_experiment(config, &env),
    }
}

/// Evaluates `draw` for every replica and feeds results to `sink` in replica order.
/// Stops at the first failing replica and returns its error message.
fn replicate<T, F, S>(config: &ExperimentConfig, draw: F, mut sink: S) -> Option<String>
where
    T: Send,
    F: Fn(&mut Stream) -> gwve_core::Result<T> + Sync,
    S: FnMut(T),
{
    let mut start = 0;
    while start < config.replicas {
        let end = (start + CHUNK).min(config.replicas);
        let batch: Vec<gwve_core::Result<T>> =
            (start..end).into_par_iter().map(|r| draw(&mut replica_stream(config.seed, r))).collect();
        for (r, result) in (start..).zip(batch) {
            match result {
                Ok(v) => sink(v),
                Err(e) => return Some(format!("replica {r}: {e}")),
            }
        }
        start = end;
    }
    None
}

fn estimate(e: Estimate) -> (f64, f64) {
    (e.value, e.std_error)
}

fn mean_with_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..CURVE_POINTS).map(move |i| lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64)
}

/// Survival conditioning uses the reduced-tree sampler; this row reports what plain
/// rejection would cost per accepted tree, next to its a_n/μ_n scaling.
fn rejection_cost_row(sampler: &SurvivalSampler, summary: &EnvSummary) -> ReportRow {
    let n = summary.horizon();
    ReportRow::info(
        "rejection_cost",
        1.0 / sampler.survival()[0],
        summary.a(n) / summary.mu(n),
        "expected rejection attempts 1/P(Z_n > 0) against a_n/mu_n",
    )
}

fn yaglom(config: &ExperimentConfig, env: &Environment) -> Result<Outcome> {
    let n = config.n;
    let summary = EnvSummary::new(env, n)?;
    let a = summary.a(n);
    let sampler = SurvivalSampler::new(env, n)?;
    let mut x = Vec::with_capacity(config.replicas as usize);
    let failure = replicate(config, |rng| Ok(sampler.sample(rng)?.population(n) as f64 / a), |v| x.push(v));
    if x.is_empty() {
        return Ok(Outcome::failed(failure.unwrap_or_default()));
    }
    x.sort_by(f64::total_cmp);
    let tol = &config.tolerances;
    let count = x.len() as f64;
    let ks = ks_statistic(&x, yaglom_cdf)?;
    let mut rows = vec![ReportRow::check(
        "ks_yaglom",
        None,
        (ks, KOLMOGOROV_MEAN / count.sqrt()),
        0.0,
        tol.ks,
        "Yaglom limit Exp(1)",
    )];
    let mut points = Vec::new();
    for &t in &config.t_grid {
        let quantile = -(-t).ln_1p();
        let hits = x.partition_point(|&v| v <= quantile);
        let est = Estimate::from_hits(hits, x.len());
        rows.push(ReportRow::check("yaglom_cdf", Some(t), estimate(est), t, tol.ks, "Exp(1) CDF at its t-quantile"));
        points.push((quantile, est.value, est.std_error));
    }
    rows.push(rejection_cost_row(&sampler, &summary));
    let curve: Vec<(f64, f64)> = grid(0.0, 5.0).map(|v| (v, yaglom_cdf(v))).collect();
    Ok(Outcome {
        rows,
        curves: vec![Curve { quantity: "yaglom_cdf_curve".into(), provenance: "1 - exp(-x)".into(), points: curve.clone() }],
        plot: Some(Plot {
            title: format!("Z_n/a_n given survival, n = {n}"),
            x_label: "x".into(),
            y_label: "P(Z_n/a_n <= x)".into(),
            curve,
            points,
        }),
        files: Vec::new(),
        failure,
    })
}

fn psi1_tail(config: &ExperimentConfig, env: &Environment) -> Result<Outcome> {
    let (n, k, theta) = (config.n, config.k, config.theta);
    let summary = EnvSummary::new(env, n)?;
    let ctx = QContext::new(env, n, k, theta / summary.a(n))?;
    let mut psi = Vec::with_capacity(config.replicas as usize);
    let failure = replicate(
        config,
        |rng| Ok(ctx.sample_skeleton(rng).splits.first().map_or(n, |s| s.generation)),
        |v| psi.push(v),
    );
    if psi.is_empty() {
        return Ok(Outcome::failed(failure.unwrap_or_default()));
    }
    let tol = config.tolerances.psi1_tail;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &t in &config.t_grid {
        let s = summary.time_change(t)?;
        let est = Estimate::from_hits(psi.iter().filter(|&&p| p >= s).count(), psi.len());
        rows.push(ReportRow::check(
            "psi1_tail",
            Some(t),
            estimate(est),
            limit_psi1_tail(k, theta, t),
            tol,
            "limit ((1+theta)(1-t)/(1+theta(1-t)))^(k-1) under theta_n = theta/a_n",
        ));
        rows.push(ReportRow::check(
            "psi1_tail_exact",
            Some(t),
            estimate(est),
            ctx.psi1_survival(s),
            tol,
            "finite-n Q(psi1 >= S_n(t)) from discounted factorial moments",
        ));
        points.push((t, est.value, est.std_error));
    }
    let curve: Vec<(f64, f64)> = grid(0.0, 1.0).map(|t| (t, limit_psi1_tail(k, theta, t))).collect();
    Ok(Outcome {
        rows,
        curves: vec![Curve {
            quantity: "psi1_tail_curve".into(),
            provenance: "((1+theta)(1-t)/(1+theta(1-t)))^(k-1)".into(),
            points: curve.clone(),
        }],
        plot: Some(Plot {
            title: format!("Q(psi1 >= S_n(t)), n = {n}, k = {k}, theta = {theta}"),
            x_label: "t".into(),
            y_label: "tail".into(),
            curve,
            points,
        }),
        files: Vec::new(),
        failure,
    })
}

/// Limit of P(B̃_1 ≥ S_n(t)): the mixture integral with the other k − 2 times at 0.
fn marginal_tail(k: usize, t: f64) -> Result<f64> {
    let mut times = vec![0.0; k - 1];
    times[0] = t;
    Ok(limit_joint_tail_integral(&LimitQuery::new(k, times))?)
}

/// Uniform k-samples from survival-conditioned trees with Z_n ≥ k.
fn sample_records(
    config: &ExperimentConfig,
    sampler: &SurvivalSampler,
) -> (Vec<CoalescentRecord>, Option<String>) {
    let (n, k) = (config.n, config.k);
    let mut records = Vec::with_capacity(config.replicas as usize);
    let failure = replicate(
        config,
        |rng| {
            let (tree, _) = sampler.sample_at_least(rng, k)?;
            let leaves = uniform_leaf_sample(&tree, n, k, rng)?;
            coalescent_record(&tree, &leaves, rng)
        },
        |r| records.push(r),
    );
    (records, failure)
}

fn coalescent_times(config: &ExperimentConfig, env: &Environment) -> Result<Outcome> {
    let (n, k) = (config.n, config.k);
    let summary = EnvSummary::new(env, n)?;
    let sampler = SurvivalSampler::new(env, n)?;
    let (records, failure) = sample_records(config, &sampler);
    if records.is_empty() {
        return Ok(Outcome::failed(failure.unwrap_or_default()));
    }
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for row in empirical_tail(&records, &summary, &config.t_grid)? {
        rows.push(ReportRow::check(
            "btilde_tail",
            Some(row.t),
            estimate(row.estimate),
            marginal_tail(k, row.t)?,
            config.tolerances.joint_tail,
            "mixture integral k * int_0^1 u^(k-1) (1-t)/(1-u t) du",
        ));
        points.push((row.t, row.estimate.value, row.estimate.std_error));
    }
    rows.push(rejection_cost_row(&sampler, &summary));
    let mut curve = grid(0.0, 0.99).map(|t| Ok((t, marginal_tail(k, t)?))).collect::<Result<Vec<_>>>()?;
    curve.push((1.0, 0.0));
    let mut stream = Vec::new();
    let indexed: Vec<(u64, CoalescentRecord)> = (0..).zip(records).collect();
    write_record_stream(&mut stream, &indexed)?;
    Ok(Outcome {
        rows,
        curves: vec![Curve { quantity: "btilde_tail_curve".into(), provenance: "mixture integral".into(), points: curve.clone() }],
        plot: Some(Plot {
            title: format!("P(B~ >= S_n(t) | Z_n >= {k}), n = {n}"),
            x_label: "t".into(),
            y_label: "tail".into(),
            curve,
            points,
        }),
        files: vec![("records.csv", stream)],
        failure,
    })
}

fn topology(config: &ExperimentConfig, env: &Environment) -> Result<Outcome> {
    let (n, k) = (config.n, config.k);
    let summary = EnvSummary::new(env, n)?;
    let sampler = SurvivalSampler::new(env, n)?;
    let (records, failure) = sample_records(config, &sampler);
    if records.is_empty() {
        return Ok(Outcome::failed(failure.unwrap_or_default()));
    }
    let tol = &config.tolerances;
    let total = records.len();
    let mut rows = Vec::new();

    for k1 in 1..=k / 2 {
        let sizes = vec![k1, k - k1];
        let hits = records.iter().filter(|r| r.first_split_sizes().as_ref() == Some(&sizes)).count();
        rows.push(ReportRow::check(
            format!("first_split[{k1},{}]", k - k1),
            None,
            estimate(Estimate::from_hits(hits, total)),
            limit_group_split(k, k1, k - k1)?,
            tol.first_split,
            "limit (1{k1=k2} + 2*1{k1!=k2})/(k-1)",
        ));
    }

    // Ordered block sizes before a split -> (steps seen, splits per block index).
    let mut cells: BTreeMap<Vec<usize>, (u64, Vec<u64>)> = BTreeMap::new();
    for step in records.iter().flat_map(CoalescentRecord::split_steps) {
        let sizes: Vec<usize> = step.before.iter().map(Vec::len).collect();
        if sizes.len() < 2 {
            continue;
        }
        let cell = cells.entry(sizes).or_insert_with_key(|s| (0, vec![0; s.len()]));
        cell.0 += 1;
        cell.1[step.split_block] += 1;
    }
    for (sizes, (seen, per_block)) in &cells {
        if *seen < MIN_CELL_COUNT {
            continue;
        }
        let free = (k - sizes.len()) as f64;
        let label = sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        for (j, (&a, &hits)) in sizes.iter().zip(per_block).enumerate() {
            let target = (a as f64 - 1.0) / free;
            if target <= 0.0 || target >= 1.0 {
                continue;
            }
            rows.push(ReportRow::check(
                format!("next_block[{label}]#{j}"),
                None,
                estimate(Estimate::from_hits(hits as usize, *seen as usize)),
                target,
                tol.next_block,
                "Kingman rule (a_j-1)/(k-i-1)",
            ));
        }
    }

    let mut table: BTreeMap<(String, usize), u64> = BTreeMap::new();
    for r in &records {
        let bin = ((summary.rho_ratio(r.permuted[0]) * TIME_BINS as f64) as usize).min(TIME_BINS - 1);
        *table.entry((r.topology_code(), bin)).or_default() += 1;
    }
    let codes = table.keys().map(|(c, _)| c).collect::<std::collections::BTreeSet<_>>().len();
    let bias = (codes.saturating_sub(1) * (TIME_BINS - 1)) as f64 / (2.0 * total as f64);
    rows.push(
        ReportRow::check(
            "mutual_information_topology_time",
            None,
            (mutual_information(&table), bias),
            0.0,
            tol.mutual_information,
            "asymptotic independence of split times and topology",
        )
        .soft(),
    );
    rows.push(rejection_cost_row(&sampler, &summary));
    Ok(Outcome { rows, failure, ..Outcome::default() })
}

fn oracle_verify(config: &ExperimentConfig, env: &Environment) -> Result<Outcome> {
    let (n, k, theta) = (config.n, config.k, config.theta);
    let tol = &config.tolerances;
    let exact = exact_q_distribution::<f64>(env, n, k, theta)?;
    let ctx = QContext::new(env, n, k, theta)?;
    let mut rows = vec![ReportRow::check(
        "normalizer",
        None,
        (ctx.normalizer(), 0.0),
        exact.normalizer,
        tol.identity,
        "E[exp(-theta Z_n) Z_n^[k]] by enumeration",
    )];
    let psi1 = exact.psi1_law();
    for m in 0..=n {
        let target = psi1.get(&m).copied().unwrap_or(0.0);
        rows.push(ReportRow::check(
            format!("psi1_law[{m}]"),
            None,
            (ctx.psi1_probability(m), 0.0),
            target,
            tol.identity,
            "law of psi1 by enumeration",
        ));
    }
    let mut plans: BTreeMap<(usize, Vec<usize>), (f64, f64)> = BTreeMap::new();
    for plan in ctx.split_plans() {
        plans.entry((plan.generation, plan.groups)).or_default().0 += plan.probability;
    }
    for (key, p) in exact.split_plan_law() {
        plans.entry(key).or_default().1 += p;
    }
    for ((m, groups), (analytic, enumerated)) in &plans {
        let sizes = groups.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        rows.push(ReportRow::check(
            format!("split_plan[{m}:{sizes}]"),
            None,
            (*analytic, 0.0),
            *enumerated,
            tol.identity,
            "first spine split by enumeration",
        ));
    }

    let law = exact.by_key();
    let q_sampler = QTreeSampler::new(ctx)?;
    let importance = ImportanceSampler::new(env, n, k, theta)?;
    let mut q_counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    let (mut draws, mut w_sum, mut w_sq) = (0u64, 0.0, 0.0);
    let failure = replicate(
        config,
        |rng| {
            let q = q_sampler.sample(rng)?.serialize();
            let d = importance.sample(rng)?;
            Ok((q, d.tree.serialize(), d.weight))
        },
        |(q, key, w)| {
            *q_counts.entry(q).or_default() += 1.0;
            *weights.entry(key).or_default() += w;
            draws += 1;
            w_sum += w;
            w_sq += w * w;
        },
    );
    if draws > 0 {
        let tv_q = total_variation(&normalize(q_counts), &law);
        let tv_w = total_variation(&normalize(weights), &law);
        rows.push(ReportRow::check(
            "tv_q_tree",
            None,
            (tv_q, null_tv_scale(law.values(), draws as f64)),
            0.0,
            tol.tv,
            "exact Q over (tree, spines) by enumeration",
        ));
        rows.push(ReportRow::check(
            "tv_importance",
            None,
            (tv_w, null_tv_scale(law.values(), w_sum * w_sum / w_sq)),
            0.0,
            tol.tv,
            "exact Q over (tree, spines) by enumeration",
        ));
    }
    let mut outcomes = Vec::new();
    write_outcomes_csv(&exact.outcomes, &mut outcomes)?;
    Ok(Outcome { rows, files: vec![("oracle.csv", outcomes)], failure, ..Outcome::default() })
}

/// ln E[e^{−λ Z_n} Z_n^[k]].
fn ln_discounted_moment(env: &Environment, n: usize, k: usize, lambda: f64) -> Result<f64> {
    Ok(QContext::new(env, n, k, lambda)?.ln_factorial_moment(0, k))
}

fn bush_laplace_experiment(config: &ExperimentConfig, env: &Environment) -> Result<Outcome> {
    let (n, k) = (config.n, config.k);
    let summary = EnvSummary::new(env, n)?;
    let a = summary.a(n);
    let theta_n = config.theta / a;
    let ctx = QContext::new(env, n, k, theta_n)?;
    let ln_base = ctx.ln_factorial_moment(0, k);
    let sampler = QTreeSampler::new(ctx)?;
    let mut z = Vec::with_capacity(config.replicas as usize);
    let failure = replicate(config, |rng| Ok(sampler.sample(rng)?.tree().population(n)), |v| z.push(v));
    if z.is_empty() {
        return Ok(Outcome::failed(failure.unwrap_or_default()));
    }
    let transform = |lambda: f64| -> Result<f64> { Ok((ln_discounted_moment(env, n, k, lambda / a)? - ln_base).exp()) };
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &lambda in &config.lambda_grid {
        let lambda_n = lambda / a;
        let values: Vec<f64> = z.iter().map(|&zn| (-(lambda_n - theta_n) * zn as f64).exp()).collect();
        let est = mean_with_error(&values);
        let target = transform(lambda)?;
        rows.push(ReportRow::check(
            "q_laplace",
            Some(lambda),
            est,
            target,
            config.tolerances.laplace,
            "E[exp(-lambda_n Z_n) Z_n^[k]] / E[exp(-theta_n Z_n) Z_n^[k]] from jets",
        ));
        if k == 1 {
            let chain = (0..n)
                .map(|m| bush_laplace(env, n, m, 1, theta_n, lambda_n))
                .product::<gwve_core::Result<f64>>()?
                * (theta_n - lambda_n).exp();
            rows.push(ReportRow::check(
                "spine_bush_product",
                Some(lambda),
                (chain, 0.0),
                target,
                config.tolerances.identity,
                "product of per-generation bush transforms along the spine",
            ));
        }
        points.push((lambda, est.0, est.1));
    }
    let lo = config.theta;
    let hi = config.lambda_grid.iter().copied().fold(lo, f64::max);
    let curve = if hi > lo { grid(lo, hi).map(|l| Ok((l, transform(l)?))).collect::<Result<Vec<_>>>()? } else { Vec::new() };
    let plot = (curve.len() > 1).then(|| Plot {
        title: format!("Q[exp(-(lambda-theta) Z_n/a_n)], n = {n}, k = {k}"),
        x_label: "lambda".into(),
        y_label: "Laplace transform".into(),
        curve: curve.clone(),
        points,
    });
    Ok(Outcome {
        rows,
        curves: vec![Curve { quantity: "q_laplace_curve".into(), provenance: "ratio of discounted factorial moments".into(), points: curve }],
        plot,
        files: Vec::new(),
        failure,
    })
}
