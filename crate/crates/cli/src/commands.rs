use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use kfat::evaluation::{cost, cost_breakdown, evaluate_set, CostBreakdown, CostWeights, EvaluationError, FilterContext, KpiReport};
use kfat::ga::{ga_minimize, GaConfig};
use kfat::scenario::Manoeuvre;
use kfat::surrogate::{FitConfig, ObservationSet, SurrogateDump, SurrogateKind, SurrogateModel};
use kfat::tsbo::{tune as tsbo_tune, BoxSpace, TsboConfig};
use kfat::tuning::TuningResult;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, read_config, read_json, write_json, DatasetTag, GenConfig, SCHEMA_VERSION};
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON with `vehicle` parameters and `variant` (standard | noise_only).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replace the dataset in a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TsboTsp,
    TsboGp,
    Ga,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::TsboTsp => "tsbo-tsp",
            Method::TsboGp => "tsbo-gp",
            Method::Ga => "ga",
        }
    }
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trace CSV path [default: the output path with a .csv extension].
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Record wall time in the result (the output then differs between runs).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A `tune` result or a parameter file with `q`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// `tune` results on the same dataset; the first one is the baseline.
    #[arg(long, num_args = 1.., required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SurrogateChoice {
    Tsp,
    Gp,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// A `tune` result whose trace is refitted.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Process to fit [default: the one the method used; tsp for ga].
    #[arg(long, value_enum)]
    pub surrogate: Option<SurrogateChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub space: BoxSpace,
    pub weights: CostWeights,
    pub filter: FilterContext,
    pub tsbo: TsboConfig,
    pub ga: GaConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            space: BoxSpace::process_noise(),
            weights: CostWeights::default(),
            filter: FilterContext::default(),
            tsbo: TsboConfig::default(),
            ga: GaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetReport {
    pub cost: CostBreakdown,
    pub kpi: KpiReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneReport {
    pub schema_version: u32,
    pub method: Method,
    pub seed: u64,
    pub dataset: DatasetTag,
    pub config: TuneConfig,
    pub train: SetReport,
    pub test: Option<SetReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub result: TuningResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub schema_version: u32,
    pub q: [f64; 3],
    #[serde(default)]
    pub filter: FilterContext,
    #[serde(default)]
    pub weights: CostWeights,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ParamsSource {
    Tuned(Box<TuneReport>),
    Plain(ParamsFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub dataset: DatasetTag,
    pub q: [f64; 3],
    pub train: SetReport,
    pub test: Option<SetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpiSummary {
    pub rmse: f64,
    pub mae: f64,
    pub rmse_non: Option<f64>,
    pub mae_non: Option<f64>,
}

impl From<&KpiReport> for KpiSummary {
    fn from(k: &KpiReport) -> Self {
        Self { rmse: k.rmse, mae: k.mae, rmse_non: k.rmse_non, mae_non: k.mae_non }
    }
}

/// Relative improvement over the baseline in percent; positive is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Improvement {
    pub best_j: Option<f64>,
    pub evaluations: Option<f64>,
    pub wall_time: Option<f64>,
    pub test_rmse: Option<f64>,
    pub test_mae: Option<f64>,
    pub test_rmse_non: Option<f64>,
    pub test_mae_non: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRow {
    pub source: String,
    pub method: Method,
    pub seed: u64,
    pub best_j: f64,
    pub evaluations: usize,
    pub wall_time_s: Option<f64>,
    pub train: KpiSummary,
    pub test: Option<KpiSummary>,
    pub improvement_pct: Improvement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub dataset: DatasetTag,
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Incumbent {
    pub q: Vec<f64>,
    pub j: f64,
    pub predicted_mean: f64,
    pub predicted_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateReport {
    pub schema_version: u32,
    pub method: Method,
    pub dataset: DatasetTag,
    pub model: SurrogateDump,
    pub incumbent: Incumbent,
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let cfg: GenConfig = read_config(args.config.as_ref())?;
    let manifest = dataset::generate(&args.out, args.seed, &cfg, args.force)?;
    println!(
        "wrote {} training and {} test manoeuvres to {} (dataset {})",
        manifest.train.len(),
        manifest.test.len(),
        args.out.display(),
        &manifest.dataset_id[..12]
    );
    Ok(())
}

fn as_q(q: &[f64]) -> Result<[f64; 3], CliError> {
    q.try_into().map_err(|_| CliError::Usage(format!("expected 3 process-noise values, got {}", q.len())))
}

fn set_report(q: &[f64; 3], set: &[Manoeuvre], weights: &CostWeights, ctx: &FilterContext) -> Result<SetReport, CliError> {
    let cost = cost_breakdown(q, set, weights, ctx)?;
    let (kpi, _) = evaluate_set(q, set, ctx)?;
    Ok(SetReport { cost, kpi })
}

fn test_report(q: &[f64; 3], set: &[Manoeuvre], weights: &CostWeights, ctx: &FilterContext) -> Result<Option<SetReport>, CliError> {
    if set.is_empty() {
        Ok(None)
    } else {
        set_report(q, set, weights, ctx).map(Some)
    }
}

pub fn tune(args: &TuneArgs) -> Result<(), CliError> {
    let mut cfg: TuneConfig = read_config(args.config.as_ref())?;
    if cfg.space.dim() != 3 {
        return Err(CliError::Usage(format!("search space has {} dimensions, expected 3", cfg.space.dim())));
    }
    cfg.tsbo.seed = args.seed;
    cfg.ga.seed = args.seed;
    cfg.tsbo.surrogate = match args.method {
        Method::TsboGp => SurrogateKind::Gaussian,
        _ => SurrogateKind::StudentT,
    };
    let data = dataset::load(&args.data)?;
    let objective = |q: &[f64]| -> Result<f64, EvaluationError> { cost(&[q[0], q[1], q[2]], &data.train, &cfg.weights, &cfg.filter) };
    let start = Instant::now();
    let result = match args.method {
        Method::TsboTsp | Method::TsboGp => tsbo_tune(objective, &cfg.space, &cfg.tsbo)?,
        Method::Ga => ga_minimize(objective, &cfg.space, &cfg.ga)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let q = as_q(&result.best_q)?;
    let report = TuneReport {
        schema_version: SCHEMA_VERSION,
        method: args.method,
        seed: args.seed,
        dataset: data.tag(),
        train: set_report(&q, &data.train, &cfg.weights, &cfg.filter)?,
        test: test_report(&q, &data.test, &cfg.weights, &cfg.filter)?,
        config: cfg,
        wall_time_s: args.timing.then_some(wall),
        result,
    };
    write_json(&args.out, &report)?;
    let trace_path = args.trace.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    if let Some(parent) = trace_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let file = File::create(&trace_path).map_err(CliError::io(&trace_path))?;
    report
        .result
        .write_trace_csv(BufWriter::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", trace_path.display())))?;
    println!(
        "{}: best J {:.6} after {} evaluations ({:.1} s) -> {}",
        args.method.as_str(),
        report.result.best_j,
        report.result.evaluations(),
        wall,
        args.out.display()
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let (q, ctx, weights) = match read_json::<ParamsSource>(&args.params)? {
        ParamsSource::Tuned(r) => (as_q(&r.result.best_q)?, r.config.filter, r.config.weights),
        ParamsSource::Plain(p) => (p.q, p.filter, p.weights),
    };
    if q.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(CliError::Usage(format!("process noise must be positive, got {q:?}")));
    }
    let data = dataset::load(&args.data)?;
    let report = EvaluationReport {
        schema_version: SCHEMA_VERSION,
        dataset: data.tag(),
        q,
        train: set_report(&q, &data.train, &weights, &ctx)?,
        test: test_report(&q, &data.test, &weights, &ctx)?,
    };
    write_json(&args.out, &report)?;
    let line = |name: &str, s: &SetReport| {
        println!("{name}: J {:.6}, sideslip RMSE {:.4} deg, MAE {:.4} deg", s.cost.total, s.kpi.rmse, s.kpi.mae)
    };
    line("train", &report.train);
    if let Some(t) = &report.test {
        line("test", t);
    }
    Ok(())
}

fn pct(base: f64, value: f64) -> Option<f64> {
    (base != 0.0 && base.is_finite() && value.is_finite()).then(|| 100.0 * (base - value) / base)
}

fn pct_opt(base: Option<f64>, value: Option<f64>) -> Option<f64> {
    pct(base?, value?)
}

fn source_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let reports: Vec<TuneReport> = args.results.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    let base = &reports[0];
    if let Some((path, other)) = args.results.iter().zip(&reports).find(|(_, r)| r.dataset != base.dataset) {
        return Err(CliError::Data(format!(
            "{} was tuned on dataset {} but {} on {}",
            path.display(),
            other.dataset.id,
            args.results[0].display(),
            base.dataset.id
        )));
    }
    let base_test = base.test.as_ref().map(|t| KpiSummary::from(&t.kpi));
    let rows: Vec<ComparisonRow> = args
        .results
        .iter()
        .zip(&reports)
        .map(|(path, r)| {
            let test = r.test.as_ref().map(|t| KpiSummary::from(&t.kpi));
            let field = |f: fn(&KpiSummary) -> Option<f64>| pct_opt(base_test.as_ref().and_then(f), test.as_ref().and_then(f));
            ComparisonRow {
                source: source_label(path),
                method: r.method,
                seed: r.seed,
                best_j: r.result.best_j,
                evaluations: r.result.evaluations(),
                wall_time_s: r.wall_time_s,
                train: KpiSummary::from(&r.train.kpi),
                improvement_pct: Improvement {
                    best_j: pct(base.result.best_j, r.result.best_j),
                    evaluations: pct(base.result.evaluations() as f64, r.result.evaluations() as f64),
                    wall_time: pct_opt(base.wall_time_s, r.wall_time_s),
                    test_rmse: field(|k| Some(k.rmse)),
                    test_mae: field(|k| Some(k.mae)),
                    test_rmse_non: field(|k| k.rmse_non),
                    test_mae_non: field(|k| k.mae_non),
                },
                test,
            }
        })
        .collect();
    let report = ComparisonReport {
        schema_version: SCHEMA_VERSION,
        dataset: base.dataset.clone(),
        baseline: rows[0].source.clone(),
        rows,
    };
    write_json(&args.out, &report)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!("{:<24} {:<9} {:>10} {:>6} {:>10} {:>10} {:>9}", "source", "method", "best J", "evals", "test RMSE", "test MAE", "dJ %");
    for row in &report.rows {
        println!(
            "{:<24} {:<9} {:>10.6} {:>6} {:>10} {:>10} {:>9}",
            row.source,
            row.method.as_str(),
            row.best_j,
            row.evaluations,
            fmt(row.test.as_ref().map(|t| t.rmse)),
            fmt(row.test.as_ref().map(|t| t.mae)),
            fmt(row.improvement_pct.best_j),
        );
    }
    Ok(())
}

pub fn inspect_surrogate(args: &InspectArgs) -> Result<(), CliError> {
    let report: TuneReport = read_json(&args.result)?;
    let kind = match (args.surrogate, report.method) {
        (Some(SurrogateChoice::Gp), _) | (None, Method::TsboGp) => SurrogateKind::Gaussian,
        _ => SurrogateKind::StudentT,
    };
    let space = &report.config.space;
    let mut obs = ObservationSet::new();
    for e in &report.result.trace {
        let u = space.normalize(&e.q).map_err(|err| CliError::Data(err.to_string()))?;
        if !obs.contains(&u) {
            obs.push(u, e.j).map_err(|err| CliError::Data(err.to_string()))?;
        }
    }
    let fit = FitConfig { starts: report.config.tsbo.fit_starts, seed: report.seed, ..FitConfig::default() };
    let model = SurrogateModel::fit(&obs, kind, report.config.tsbo.dof, &fit).map_err(|e| CliError::Numerical(e.to_string()))?;
    let best_u = space.normalize(&report.result.best_q).map_err(|e| CliError::Data(e.to_string()))?;
    let post = model.posterior(&best_u);
    let out = SurrogateReport {
        schema_version: SCHEMA_VERSION,
        method: report.method,
        dataset: report.dataset.clone(),
        model: model.dump(),
        incumbent: Incumbent {
            q: report.result.best_q.clone(),
            j: report.result.best_j,
            predicted_mean: post.mean,
            predicted_std: post.std(),
        },
    };
    write_json(&args.out, &out)?;
    println!(
        "{} surrogate on {} points, length scales {:?}",
        if kind == SurrogateKind::Gaussian { "gp" } else { "tsp" },
        obs.len(),
        out.model.length_scales
    );
    Ok(())
}

