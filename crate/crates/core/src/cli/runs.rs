//! Experiment runners. Each takes a validated config, the raw config text
//! and an output directory, and returns the manifest it wrote.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use super::config::*;
use super::output::{RunDir, RunManifest, RunSummary, TRACE_FILE};
use crate::error::{Error, Result};
use crate::geometry::{coupon_collector_sim, coupon_expectation, CoverReport};
use crate::iddim::{cloud_estimate, estimate_manifold_dim, read_point_cloud, write_estimates_csv, EstimateRow, EstimatorConfig};
use crate::manifold::{HypersphereSpec, ManifoldSpec};
use crate::nn::{label_with, train, DataSource, LabeledSample, ReluNetwork, TrainConfig, TrainTrace};
use crate::rng::{stream, LabRng};
use crate::sampler::{PointSampler, UnitCube};
use crate::sq::{
    ols_slope, pairwise_independence_exact, parity_class_eta, scan_lifted_class, variance_bound_check,
    ClippedLinearQuery, Law, ParityClass,
};
use crate::targets::{hard_target, random_target, teacher_width, HardTargetSpec};

/// Stream reserved for run-level draws such as the learning-rate exponent.
const RUN_STREAM: u64 = u64::MAX;

/// Learning-rate exponent: the configured value, or one draw from
/// `Unif([-2, 1])` for the whole run.
pub fn lr_exponent(block: &TrainBlock, seed: u64) -> f64 {
    block.lr_log_multiplier.unwrap_or_else(|| stream(seed, RUN_STREAM).random_range(-2.0..=1.0))
}

fn train_config(block: &TrainBlock, c: f64, fresh_batches: bool, rng: &mut LabRng) -> TrainConfig {
    TrainConfig {
        optimizer: block.optimizer,
        base_lr: block.base_lr,
        lr_log_multiplier: c,
        batch_size: block.batch_size,
        steps: block.steps,
        seed: rng.random(),
        fresh_batches,
        eval_every: block.eval_every,
    }
}

/// One row of a training `trace.csv`: header `size,step,train_mse,test_mse,lr`.
#[derive(Serialize)]
struct TraceCsvRow {
    size: usize,
    step: usize,
    train_mse: f64,
    test_mse: f64,
    lr: f64,
}

fn traces_csv(traces: &[(usize, TrainTrace)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (size, trace) in traces {
        for r in &trace.rows {
            w.serialize(TraceCsvRow {
                size: *size,
                step: r.step,
                train_mse: r.train_mse,
                test_mse: r.test_mse,
                lr: r.lr,
            })?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Per-size outcome of a training run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeOutcome {
    pub size: usize,
    pub ambient_dim: usize,
    pub final_test_mse: f64,
    pub diverged: bool,
    pub seconds: f64,
}

fn finite_or_nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

pub fn run_learnable(cfg: &LearnableConfig, config_text: &str, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut dir = RunDir::new(out)?;
    let c = lr_exponent(&cfg.train, cfg.seed);
    let mut traces = Vec::new();
    let mut outcomes = Vec::new();
    for &n in &cfg.grid {
        let t0 = Instant::now();
        let mut rng = stream(cfg.seed, n as u64);
        let sphere = HypersphereSpec::random(cfg.sphere_dim, n, &mut rng)?;
        let width = cfg.target_width.unwrap_or_else(|| teacher_width(n));
        let target = random_target(n, width, cfg.weight_bound, &sphere, &mut rng)?;
        let train_set = label_with(&target, sphere.sample_many(cfg.train_size, &mut rng));
        let test_set = label_with(&target, sphere.sample_many(cfg.test_size, &mut rng));
        let mut student = ReluNetwork::random_uniform(
            n,
            &[cfg.student_width],
            crate::nn::BiasPlacement::BeforeActivation,
            &mut rng,
        )?;
        let tc = train_config(&cfg.train, c, false, &mut rng);
        let trace = train(&mut student, DataSource::Dataset(&train_set), &tc, &test_set)?;
        outcomes.push(SizeOutcome {
            size: n,
            ambient_dim: n,
            final_test_mse: finite_or_nan(trace.final_test_mse()),
            diverged: trace.diverged,
            seconds: t0.elapsed().as_secs_f64(),
        });
        traces.push((n, trace));
    }
    dir.write(TRACE_FILE, &traces_csv(&traces)?)?;
    let flagged = outcomes.iter().any(|o| o.diverged || !(o.final_test_mse <= cfg.success_mse));
    let mut metrics = BTreeMap::new();
    for o in &outcomes {
        metrics.insert(format!("final_mse_n{}", o.size), o.final_test_mse);
        metrics.insert(format!("seconds_n{}", o.size), o.seconds);
    }
    metrics.insert("lr_exponent".into(), c);
    let summary = RunSummary {
        kind: "learnable".into(),
        seed: cfg.seed,
        flagged,
        metrics,
        details: json!({ "runs": outcomes, "lr": cfg.train.base_lr * c.exp() }),
    };
    dir.finish(config_text, &summary, start.elapsed().as_secs_f64())
}

pub fn run_hard(cfg: &HardConfig, config_text: &str, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut dir = RunDir::new(out)?;
    let c = lr_exponent(&cfg.train, cfg.seed);
    let mut traces = Vec::new();
    let mut outcomes = Vec::new();
    let mut targets = Vec::new();
    for &code_bits in &cfg.grid {
        let t0 = Instant::now();
        let mut rng = stream(cfg.seed, code_bits as u64);
        let manifold = ManifoldSpec::new(cfg.reach, 1, code_bits)?;
        let spec = match &cfg.subset {
            Some(s) => HardTargetSpec::new(manifold.clone(), s.clone())?,
            None => HardTargetSpec::random(manifold.clone(), &mut rng)?,
        };
        let target = hard_target(&spec)?;
        let n = manifold.ambient_dim();
        let hidden = vec![cfg.width_factor * n; cfg.hidden_layers];
        let mut student = ReluNetwork::random_uniform(n, &hidden, cfg.bias_placement, &mut rng)?;
        let test_set = label_with(&target, manifold.sample_many(cfg.test_size, &mut rng));
        let draw = |r: &mut LabRng| {
            let x = manifold.sample(r);
            let y = target.eval(&x);
            LabeledSample { x, y }
        };
        let tc = train_config(&cfg.train, c, true, &mut rng);
        let trace = train(&mut student, DataSource::Stream(&draw), &tc, &test_set)?;
        outcomes.push(SizeOutcome {
            size: code_bits as usize,
            ambient_dim: n,
            final_test_mse: finite_or_nan(trace.final_test_mse()),
            diverged: trace.diverged,
            seconds: t0.elapsed().as_secs_f64(),
        });
        traces.push((code_bits as usize, trace));
        targets.push(spec);
    }
    dir.write(TRACE_FILE, &traces_csv(&traces)?)?;
    dir.write_json("targets.json", &targets)?;
    let flagged = outcomes.iter().any(|o| o.diverged);
    let mut metrics = BTreeMap::new();
    for (o, t) in outcomes.iter().zip(&targets) {
        metrics.insert(format!("final_mse_nb{}", o.size), o.final_test_mse);
        metrics.insert(format!("subset_size_nb{}", o.size), t.subset().len() as f64);
    }
    metrics.insert("lr_exponent".into(), c);
    let summary = RunSummary {
        kind: "hard".into(),
        seed: cfg.seed,
        flagged,
        metrics,
        details: json!({ "runs": outcomes, "lr": cfg.train.base_lr * c.exp() }),
    };
    dir.finish(config_text, &summary, start.elapsed().as_secs_f64())
}

pub fn run_sq(cfg: &SqConfig, config_text: &str, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut dir = RunDir::new(out)?;
    let mut rng = stream(cfg.seed, 0);

    let class = ParityClass::new(cfg.parity_dim)?;
    let law = Law::uniform_boolean(cfg.parity_dim)?;
    let eta = pairwise_independence_exact(&class, &law)?.eta;
    let queries: Vec<ClippedLinearQuery> =
        (0..cfg.queries).map(|_| ClippedLinearQuery::random(cfg.parity_dim, &mut rng)).collect();
    let gs: Vec<_> = queries.iter().map(|q| move |x: &[f64], y: f64| q.eval(x, y)).collect();
    let variance = variance_bound_check(&class, &law, &gs, eta)?;

    let rows = cfg
        .grid
        .iter()
        .map(|&b| scan_lifted_class(cfg.reach, b, cfg.tau, cfg.quadrature))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    dir.write(TRACE_FILE, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let xs: Vec<f64> = rows.iter().map(|r| (r.code_bits - r.truncation) as f64).collect();
    let mean_slope = ols_slope(&xs, &rows.iter().map(|r| r.mean_queries.log2()).collect::<Vec<_>>());
    let max_slope = ols_slope(&xs, &rows.iter().map(|r| (r.max_queries as f64).log2()).collect::<Vec<_>>());
    let min_success = rows.iter().map(|r| r.success).fold(1.0, f64::min);

    let metrics = BTreeMap::from([
        ("eta".to_string(), eta),
        ("eta_closed_form".to_string(), parity_class_eta(cfg.parity_dim)),
        ("max_query_variance".to_string(), variance.max_variance()),
        ("variance_bound_pass".to_string(), f64::from(u8::from(variance.all_pass()))),
        ("scan_slope_mean".to_string(), mean_slope),
        ("scan_slope_max".to_string(), max_slope),
        ("scan_min_success".to_string(), min_success),
    ]);
    let summary = RunSummary {
        kind: "sq".into(),
        seed: cfg.seed,
        flagged: !variance.all_pass(),
        metrics,
        details: json!({ "scaling": rows, "variance": variance }),
    };
    dir.finish(config_text, &summary, start.elapsed().as_secs_f64())
}

/// One row of the dimension-suite `trace.csv`.
#[derive(Serialize)]
struct SuiteRow {
    ambient: usize,
    intrinsic: usize,
    center: usize,
    raw: f64,
    rounded: i64,
    method: crate::iddim::DimMethod,
    shifted_spectrum: f64,
    truncated_stable_rank: f64,
    spectral_gap: usize,
    literal_square: f64,
}

pub fn run_iddim(cfg: &IddimConfig, config_text: &str, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut dir = RunDir::new(out)?;
    let est = EstimatorConfig { method: cfg.method, truncation: cfg.truncation };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut metrics = BTreeMap::new();
    let mut flagged = false;
    for (i, case) in cfg.suite.iter().enumerate() {
        let mut rng = stream(cfg.seed, i as u64);
        // A d-sphere spans d + 1 directions.
        let sphere = HypersphereSpec::random(case.intrinsic + 1, case.ambient, &mut rng)?;
        let report =
            estimate_manifold_dim(&sphere, cfg.centers, cfg.sigma, cfg.oversampling * case.ambient, &est, &mut rng)?;
        for (c, e) in report.per_center.iter().enumerate() {
            flagged |= !e.dim.is_finite();
            w.serialize(SuiteRow {
                ambient: case.ambient,
                intrinsic: case.intrinsic,
                center: c,
                raw: e.dim,
                rounded: e.rounded(),
                method: e.method,
                shifted_spectrum: e.shifted_spectrum,
                truncated_stable_rank: e.truncated_stable_rank,
                spectral_gap: e.spectral_gap,
                literal_square: e.literal_square,
            })?;
        }
        metrics.insert(format!("mean_dim_n{}_d{}", case.ambient, case.intrinsic), report.mean_dim);
    }
    dir.write(TRACE_FILE, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    if let Some(path) = &cfg.point_cloud {
        let points = read_point_cloud(std::fs::File::open(path)?)?;
        let k = cfg.neighbors.min(points.len() - 1);
        let step = (points.len() / cfg.centers).max(1);
        let mut rows = Vec::new();
        for center in (0..points.len()).step_by(step).take(cfg.centers) {
            let e = cloud_estimate(&points, center, k, &est)?;
            rows.push(EstimateRow { center, raw: e.dim, rounded: e.rounded(), method: e.method });
        }
        let mut buf = Vec::new();
        write_estimates_csv(&rows, &mut buf)?;
        dir.write("cloud.csv", &buf)?;
        let mean = rows.iter().map(|r| r.raw).sum::<f64>() / rows.len() as f64;
        metrics.insert("cloud_mean_dim".into(), mean);
    }

    let summary = RunSummary {
        kind: "iddim".into(),
        seed: cfg.seed,
        flagged,
        metrics,
        details: json!({ "method": cfg.method, "oversampling": cfg.oversampling, "sigma": cfg.sigma }),
    };
    dir.finish(config_text, &summary, start.elapsed().as_secs_f64())
}

pub fn run_geometry(cfg: &GeometryConfig, config_text: &str, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut dir = RunDir::new(out)?;
    let mut metrics = BTreeMap::new();
    let mut flagged = false;

    // trace.csv: header `bins,t,cdf`.
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bins", "t", "cdf"])?;
    let mut coupons = Vec::new();
    for (i, &bins) in cfg.coupon_bins.iter().enumerate() {
        let report = coupon_collector_sim(bins, cfg.coupon_trials, &mut stream(cfg.seed, i as u64))?;
        let expected = coupon_expectation(bins);
        let rel = (report.mean_t - expected).abs() / expected;
        flagged |= rel > 0.1;
        for (t, f) in report.empirical_cdf() {
            w.write_record([bins.to_string(), t.to_string(), f.to_string()])?;
        }
        metrics.insert(format!("coupon_rel_err_n{bins}"), rel);
        coupons.push(json!({ "bins": bins, "mean": report.mean_t, "std_err": report.std_err, "expected": expected }));
    }
    dir.write(TRACE_FILE, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let mut rng = stream(cfg.seed, RUN_STREAM);
    let mut reports = Vec::with_capacity(cfg.clouds);
    for _ in 0..cfg.clouds {
        let dim = rng.random_range(2..=5);
        let points = UnitCube { dim }.sample_many(cfg.cloud_points, &mut rng);
        reports.push(CoverReport::measure(&points, cfg.cloud_epsilon));
    }
    let holds = reports.iter().filter(|r| r.duality_holds()).count();
    flagged |= holds < reports.len();
    metrics.insert("duality_fraction".into(), if reports.is_empty() { 1.0 } else { holds as f64 / reports.len() as f64 });

    let summary = RunSummary {
        kind: "geometry".into(),
        seed: cfg.seed,
        flagged,
        metrics,
        details: json!({ "coupon": coupons, "duality": reports }),
    };
    dir.finish(config_text, &summary, start.elapsed().as_secs_f64())
}

/// Sample a dataset and write it as `data.csv` with columns `x0..x{n-1}`
/// and, when labelled, `y`.
pub fn run_generate(cfg: &GenerateConfig, config_text: &str, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut dir = RunDir::new(out)?;
    let mut rng = stream(cfg.seed, 0);
    let (sampler, curve): (Box<dyn PointSampler>, Option<ManifoldSpec>) = match &cfg.manifold {
        ManifoldChoice::Curve { reach, intrinsic_dim, code_bits } => {
            let m = ManifoldSpec::new(*reach, *intrinsic_dim, *code_bits)?;
            (Box::new(m.clone()), Some(m))
        }
        ManifoldChoice::Sphere { sphere_dim, ambient_dim } => {
            (Box::new(HypersphereSpec::random(*sphere_dim, *ambient_dim, &mut rng)?), None)
        }
    };
    let label: Option<ReluNetwork> = match (&cfg.label, curve) {
        (LabelChoice::None, _) => None,
        (LabelChoice::Parity { subset }, Some(m)) => {
            let spec = match subset {
                Some(s) => HardTargetSpec::new(m, s.clone())?,
                None => HardTargetSpec::random(m, &mut rng)?,
            };
            dir.write_json("target.json", &spec)?;
            Some(hard_target(&spec)?)
        }
        (LabelChoice::Parity { .. }, None) => return Err(Error::Config("parity labels need the curve".into())),
        (LabelChoice::Random { width }, _) => {
            let t = random_target(sampler.dim(), *width, 10.0, &*sampler, &mut rng)?;
            dir.write_json("target.json", &t)?;
            Some(t)
        }
    };
    let dim = sampler.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    if label.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for _ in 0..cfg.count {
        let x = sampler.sample(&mut rng);
        let mut rec: Vec<String> = x.iter().map(f64::to_string).collect();
        if let Some(t) = &label {
            rec.push(t.eval(&x).to_string());
        }
        w.write_record(&rec)?;
    }
    dir.write("data.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    let summary = RunSummary {
        kind: "generate".into(),
        seed: cfg.seed,
        flagged: false,
        metrics: BTreeMap::from([("count".to_string(), cfg.count as f64), ("ambient_dim".to_string(), dim as f64)]),
        details: serde_json::Value::Null,
    };
    dir.finish(config_text, &summary, start.elapsed().as_secs_f64())
}

/// Dispatch on the config kind.
pub fn run_experiment(cfg: &ExperimentConfig, config_text: &str, out: &Path) -> Result<RunManifest> {
    match cfg {
        ExperimentConfig::Generate(c) => run_generate(c, config_text, out),
        ExperimentConfig::Learnable(c) => run_learnable(c, config_text, out),
        ExperimentConfig::Hard(c) => run_hard(c, config_text, out),
        ExperimentConfig::Sq(c) => run_sq(c, config_text, out),
        ExperimentConfig::Iddim(c) => run_iddim(c, config_text, out),
        ExperimentConfig::Geometry(c) => run_geometry(c, config_text, out),
    }
}
