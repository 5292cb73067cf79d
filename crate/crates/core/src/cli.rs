//! Command-line front end.
//!
//! Every subcommand prints a plain-text table on stdout and, with
//! `--output`, writes a JSON document alongside it. Exit status is 0 on
//! success, 1 for bad input and 2 when a constraint cannot be met.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adaptive::{
    ars_fit, ars_predict, irs_fit, irs_predict, select_k, EstimatorConfig, IrsOptions,
    DEFAULT_CLUSTERS,
};
use crate::coverage::{pareto_frontier, realized_coverage, robust_coverage, DEFAULT_SLICES};
use crate::dataset::PredictionSet;
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{metric_bundle, MetricBundle, RobustTarget, Target};
use crate::scaling::{
    evaluate, full_grid_search, greedy_search, scaled_predict, ScalingVector, SearchConfig,
};
use crate::synth::{
    cr_weights, generate, gr_weights, subsample_balanced, train_linear, BalanceMode, LabeledSplit,
    SyntheticConfig, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "robust-scaling",
    version,
    about = "Post-hoc robust scaling of classifier scores"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every random choice (clustering, subsampling, synthesis).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Score columns are logits; apply a softmax on load.
    #[arg(long, global = true)]
    logits: bool,
    /// Metric to maximize.
    #[arg(long, global = true, value_enum, default_value_t = TargetArg::Unbiased)]
    target: TargetArg,
    /// Base of the geometric scaling grid.
    #[arg(long, global = true, default_value_t = 1.05)]
    grid_base: f64,
    /// Exponent range, `N` for [-N, N] or `MIN:MAX`.
    #[arg(long, global = true, default_value = "200", allow_hyphen_values = true)]
    grid_range: String,
    /// JSON array of per-group weights for the adjusted average accuracy.
    #[arg(long, global = true)]
    weights_file: Option<PathBuf>,
    /// Write a machine-readable JSON report here.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Keep only this fraction of the validation split (seeded).
    #[arg(long, global = true)]
    val_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Worst,
    Unbiased,
    Average,
    Balanced,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Target {
        match t {
            TargetArg::Worst => Target::WorstGroup,
            TargetArg::Unbiased => Target::Unbiased,
            TargetArg::Average => Target::Average,
            TargetArg::Balanced => Target::Balanced,
        }
    }
}

#[derive(Debug, Args)]
struct SplitFiles {
    /// Validation predictions CSV.
    #[arg(long)]
    val: PathBuf,
    /// Test predictions CSV.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Debug, Args)]
struct FeatureFiles {
    /// Validation features CSV.
    #[arg(long)]
    val_features: PathBuf,
    /// Test features CSV.
    #[arg(long)]
    test_features: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Reweight {
    None,
    Cr,
    Gr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subsample {
    Suby,
    Subg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Accuracy metrics of one prediction file.
    Metrics {
        /// Predictions CSV.
        predictions: PathBuf,
        /// Scaling to apply first, `e0;e1;...` or `x:f0;f1;...`.
        #[arg(long, allow_hyphen_values = true)]
        scaling: Option<String>,
    },
    /// Search a scaling on validation data and report its effect on test data.
    Search {
        #[command(flatten)]
        files: SplitFiles,
        /// Exhaustive search instead of the greedy one.
        #[arg(long)]
        full_grid: bool,
        /// Only accept scalings with at least this validation average accuracy.
        #[arg(long)]
        min_average: Option<f64>,
        /// Evaluation budget of the exhaustive search.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Robust coverage of the validation trade-off curve.
    Coverage {
        /// Validation predictions CSV.
        #[arg(long)]
        val: PathBuf,
        /// Number of average-accuracy thresholds.
        #[arg(long, default_value_t = DEFAULT_SLICES)]
        slices: usize,
        /// Write the frontier as CSV.
        #[arg(long)]
        frontier_csv: Option<PathBuf>,
        /// Write the full trade-off pool as JSON.
        #[arg(long)]
        pool_out: Option<PathBuf>,
    },
    /// Instance-wise scaling with one vector per feature cluster.
    Irs {
        #[command(flatten)]
        files: SplitFiles,
        #[command(flatten)]
        features: FeatureFiles,
        /// Number of clusters.
        #[arg(long, default_value_t = DEFAULT_CLUSTERS, conflicts_with = "select_k")]
        k: usize,
        /// Pick K among these candidates by validation robust coverage.
        #[arg(long, value_delimiter = ',')]
        select_k: Option<Vec<usize>>,
        /// Thresholds used when selecting K.
        #[arg(long, default_value_t = DEFAULT_SLICES)]
        slices: usize,
    },
    /// Attribute-specific scaling routed by a linear attribute estimator.
    Ars {
        #[command(flatten)]
        files: SplitFiles,
        #[command(flatten)]
        features: FeatureFiles,
        /// Share of validation samples with a known attribute.
        #[arg(long, default_value_t = 1.0)]
        labeled_fraction: f64,
    },
    /// Pareto frontier of a saved trade-off pool.
    Pareto {
        /// Pool JSON written by `coverage --pool-out`.
        #[arg(long)]
        pool: PathBuf,
        /// Write the frontier as CSV.
        #[arg(long)]
        frontier_csv: Option<PathBuf>,
    },
    /// Generate synthetic splits and optionally train a linear model on them.
    Synth {
        /// JSON generator config; missing keys take the biased preset values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the CSV files.
        #[arg(long)]
        out_dir: PathBuf,
        /// Sample weighting of the training loss.
        #[arg(long, value_enum, default_value_t = Reweight::None, conflicts_with = "subsample")]
        reweight: Reweight,
        /// Balanced subsampling of the training split.
        #[arg(long, value_enum)]
        subsample: Option<Subsample>,
        /// Only write features and labels.
        #[arg(long)]
        no_train: bool,
        /// Training epochs.
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
    },
    /// Test robust accuracy of the validation-optimal scaling per threshold.
    Realized {
        #[command(flatten)]
        files: SplitFiles,
        #[arg(long, default_value_t = DEFAULT_SLICES)]
        slices: usize,
    },
}

/// Exit status and captured text of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (program name first) and runs the subcommand without
/// touching the process streams.
pub fn execute<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: 1,
                    stdout: String::new(),
                    stderr: rendered,
                }
            } else {
                Outcome {
                    code: 0,
                    stdout: rendered,
                    stderr: String::new(),
                }
            };
        }
    };
    match run(&cli) {
        Ok(stdout) => Outcome {
            code: 0,
            stdout,
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: exit_code(&e),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

/// [`execute`], printing the captured text; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let out = execute(args);
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    out.code
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } | Error::NoFeasibleThreshold => 2,
        _ => 1,
    }
}

struct Context<'a> {
    global: &'a Global,
    config: SearchConfig,
    weights: Option<Vec<f64>>,
}

impl Context<'_> {
    fn target(&self) -> Target {
        self.global.target.into()
    }

    fn robust_target(&self) -> Result<RobustTarget> {
        RobustTarget::try_from(self.target())
    }

    fn bundle(&self, set: &PredictionSet, preds: &[usize]) -> Result<MetricBundle> {
        metric_bundle(
            preds,
            set.labels(),
            set.attributes(),
            set.num_classes(),
            set.num_attributes(),
            self.weights.as_deref(),
        )
    }

    fn load(&self, path: &Path, features: Option<&Path>) -> Result<PredictionSet> {
        io::load_prediction_set(path, features, self.global.logits)
    }

    /// Validation and test sets with a shared attribute range, the
    /// validation split optionally subsampled.
    fn load_pair(
        &self,
        files: &SplitFiles,
        features: Option<&FeatureFiles>,
    ) -> Result<(PredictionSet, PredictionSet)> {
        let val = self.load(&files.val, features.map(|f| f.val_features.as_path()))?;
        let test = self.load(&files.test, features.map(|f| f.test_features.as_path()))?;
        if val.num_classes() != test.num_classes() {
            return Err(Error::DimensionMismatch {
                what: "test class count",
                expected: val.num_classes(),
                actual: test.num_classes(),
            });
        }
        let a = val.num_attributes().max(test.num_attributes());
        let val = self.subsample_val(val.with_num_attributes(a)?)?;
        Ok((val, test.with_num_attributes(a)?))
    }

    fn subsample_val(&self, set: PredictionSet) -> Result<PredictionSet> {
        let Some(fraction) = self.global.val_fraction else {
            return Ok(set);
        };
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "validation fraction {fraction} must be in (0, 1]"
            )));
        }
        let n = set.len();
        let keep = ((n as f64 * fraction).round() as usize).clamp(1, n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.global.seed));
        idx.truncate(keep);
        idx.sort_unstable();
        set.subset(&idx)
    }

    fn write_output<T: Serialize>(&self, value: &T) -> Result<()> {
        match &self.global.output {
            Some(path) => io::save_json(value, path),
            None => Ok(()),
        }
    }
}

fn parse_range(text: &str) -> Result<(i32, i32)> {
    let bad = || Error::invalid(format!("grid range `{text}` is not `N` or `MIN:MAX`"));
    match text.split_once(':') {
        Some((lo, hi)) => Ok((
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        )),
        None => {
            let n: i32 = text.trim().parse().map_err(|_| bad())?;
            if n < 0 {
                return Err(bad());
            }
            Ok((-n, n))
        }
    }
}

fn run(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    let (lo, hi) = parse_range(&g.grid_range)?;
    let config = SearchConfig {
        grid_base: g.grid_base,
        ..SearchConfig::default()
    }
    .with_range(lo, hi)
    .with_target(g.target.into());
    config.validate()?;
    let weights = g
        .weights_file
        .as_deref()
        .map(io::load_json::<Vec<f64>>)
        .transpose()?;
    let ctx = Context {
        global: g,
        config,
        weights,
    };

    match &cli.command {
        Command::Metrics {
            predictions,
            scaling,
        } => run_metrics(&ctx, predictions, scaling.as_deref()),
        Command::Search {
            files,
            full_grid,
            min_average,
            budget,
        } => run_search(&ctx, files, *full_grid, *min_average, *budget),
        Command::Coverage {
            val,
            slices,
            frontier_csv,
            pool_out,
        } => run_coverage(
            &ctx,
            val,
            *slices,
            frontier_csv.as_deref(),
            pool_out.as_deref(),
        ),
        Command::Irs {
            files,
            features,
            k,
            select_k,
            slices,
        } => run_irs(&ctx, files, features, *k, select_k.as_deref(), *slices),
        Command::Ars {
            files,
            features,
            labeled_fraction,
        } => run_ars(&ctx, files, features, *labeled_fraction),
        Command::Pareto { pool, frontier_csv } => run_pareto(&ctx, pool, frontier_csv.as_deref()),
        Command::Synth {
            config,
            out_dir,
            reweight,
            subsample,
            no_train,
            epochs,
        } => run_synth(
            &ctx,
            config.as_deref(),
            out_dir,
            *reweight,
            *subsample,
            *no_train,
            *epochs,
        ),
        Command::Realized { files, slices } => run_realized(&ctx, files, *slices),
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn metric_rows(m: &MetricBundle) -> Vec<(&'static str, f64)> {
    let mut rows = vec![
        ("worst_group", m.worst_group),
        ("unbiased", m.unbiased),
        ("average", m.average),
        ("balanced", m.balanced),
    ];
    if let Some(adj) = m.adjusted_average {
        rows.push(("adjusted_average", adj));
    }
    rows
}

fn metrics_table(m: &MetricBundle) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<18}{:>9}", "metric", "value");
    for (name, v) in metric_rows(m) {
        let _ = writeln!(out, "{name:<18}{:>9}", pct(v));
    }
    out
}

/// Before, after and gain (after - before) per metric, in percentage points.
fn gain_table(before: &MetricBundle, after: &MetricBundle) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18}{:>9}{:>9}{:>9}",
        "metric", "before", "after", "gain"
    );
    for ((name, b), (_, a)) in metric_rows(before).into_iter().zip(metric_rows(after)) {
        let _ = writeln!(
            out,
            "{name:<18}{:>9}{:>9}{:>+9.2}",
            pct(b),
            pct(a),
            100.0 * (a - b)
        );
    }
    out
}

fn group_lines(m: &MetricBundle, num_attributes: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<18}{:>9}", "group (y, a)", "accuracy");
    for (g, acc) in m.per_group.iter().enumerate() {
        let label = format!("({}, {})", g / num_attributes, g % num_attributes);
        let value = acc.map_or_else(|| "-".to_string(), pct);
        let _ = writeln!(out, "{label:<18}{value:>9}");
    }
    out
}

#[derive(Serialize)]
struct GainReport<'a, T: Serialize> {
    target: Target,
    model: T,
    validation: &'a MetricBundle,
    test_before: &'a MetricBundle,
    test_after: &'a MetricBundle,
}

fn run_metrics(ctx: &Context<'_>, path: &Path, scaling: Option<&str>) -> Result<String> {
    let set = ctx.load(path, None)?;
    let preds = match scaling {
        Some(text) => scaled_predict(&set, &io::parse_scaling(text, ctx.config.grid_base)?)?,
        None => set.argmax_predictions(),
    };
    let m = ctx.bundle(&set, &preds)?;
    ctx.write_output(&m)?;
    let mut text = metrics_table(&m);
    text.push('\n');
    text.push_str(&group_lines(&m, set.num_attributes()));
    Ok(text)
}

fn run_search(
    ctx: &Context<'_>,
    files: &SplitFiles,
    full_grid: bool,
    min_average: Option<f64>,
    budget: Option<u64>,
) -> Result<String> {
    let (val, test) = ctx.load_pair(files, None)?;
    let mut config = ctx.config.clone();
    if let Some(b) = budget {
        config.max_evaluations = b;
    }
    let result = if full_grid {
        full_grid_search(&val, &config, min_average)?
    } else {
        greedy_search(&val, &config, min_average)?
    };
    let before = ctx.bundle(&test, &test.argmax_predictions())?;
    let after = ctx.bundle(&test, &scaled_predict(&test, &result.scaling)?)?;
    let validation = ctx.bundle(&val, &scaled_predict(&val, &result.scaling)?)?;
    ctx.write_output(&GainReport {
        target: ctx.target(),
        model: &result.scaling,
        validation: &validation,
        test_before: &before,
        test_after: &after,
    })?;
    Ok(gain_table(&before, &after))
}

#[derive(Serialize)]
struct IrsReport<'a> {
    selection: Option<crate::adaptive::KSelection>,
    model: &'a crate::adaptive::ClusterScalingModel,
}

fn run_irs(
    ctx: &Context<'_>,
    files: &SplitFiles,
    features: &FeatureFiles,
    k: usize,
    candidates: Option<&[usize]>,
    slices: usize,
) -> Result<String> {
    let (val, test) = ctx.load_pair(files, Some(features))?;
    let options = IrsOptions {
        seed: ctx.global.seed,
        ..IrsOptions::default()
    };
    let selection = match candidates {
        Some(c) => Some(select_k(
            &val,
            c,
            &ctx.config,
            &options,
            ctx.robust_target()?,
            slices,
        )?),
        None => None,
    };
    let k = selection.as_ref().map_or(k, |s| s.k);
    let model = irs_fit(&val, k, &ctx.config, &options)?;
    let before = ctx.bundle(&test, &test.argmax_predictions())?;
    let after = ctx.bundle(&test, &irs_predict(&test, &model)?)?;
    let validation = ctx.bundle(&val, &irs_predict(&val, &model)?)?;
    ctx.write_output(&GainReport {
        target: ctx.target(),
        model: IrsReport {
            selection,
            model: &model,
        },
        validation: &validation,
        test_before: &before,
        test_after: &after,
    })?;
    Ok(gain_table(&before, &after))
}

fn run_ars(
    ctx: &Context<'_>,
    files: &SplitFiles,
    features: &FeatureFiles,
    labeled_fraction: f64,
) -> Result<String> {
    let (val, test) = ctx.load_pair(files, Some(features))?;
    let est = EstimatorConfig {
        labeled_fraction,
        seed: ctx.global.seed,
        ..EstimatorConfig::default()
    };
    let model = ars_fit(&val, &ctx.config, &est)?;
    let before = ctx.bundle(&test, &test.argmax_predictions())?;
    let after = ctx.bundle(&test, &ars_predict(&test, &model)?)?;
    let validation = ctx.bundle(&val, &ars_predict(&val, &model)?)?;
    ctx.write_output(&GainReport {
        target: ctx.target(),
        model: &model,
        validation: &validation,
        test_before: &before,
        test_after: &after,
    })?;
    let mut text = gain_table(&before, &after);
    let _ = writeln!(
        text,
        "\nattribute estimator accuracy on labeled samples: {}",
        pct(model.estimator.train_accuracy)
    );
    Ok(text)
}

fn run_coverage(
    ctx: &Context<'_>,
    val_path: &Path,
    slices: usize,
    frontier_csv: Option<&Path>,
    pool_out: Option<&Path>,
) -> Result<String> {
    let target = ctx.robust_target()?;
    let val = ctx.subsample_val(ctx.load(val_path, None)?)?;
    let search = greedy_search(&val, &ctx.config, None)?;
    let report = robust_coverage(&search.pool, target, slices)?;
    if let Some(p) = frontier_csv {
        io::save_frontier_csv(&report.frontier, p)?;
    }
    if let Some(p) = pool_out {
        io::save_pool(&search.pool, p)?;
    }
    ctx.write_output(&report)?;
    let mut text = String::new();
    let _ = writeln!(text, "robust accuracy     {}", target.as_target().name());
    let _ = writeln!(text, "pool size           {}", search.pool.len());
    let _ = writeln!(text, "frontier points     {}", report.frontier.len());
    let _ = writeln!(
        text,
        "feasible thresholds {}/{}",
        report.feasible_thresholds, slices
    );
    let _ = writeln!(text, "robust coverage     {}", pct(report.coverage));
    Ok(text)
}

fn run_pareto(ctx: &Context<'_>, pool_path: &Path, frontier_csv: Option<&Path>) -> Result<String> {
    let target = ctx.robust_target()?;
    let pool = io::load_pool(pool_path)?;
    let frontier = pareto_frontier(&pool, target)?;
    if let Some(p) = frontier_csv {
        io::save_frontier_csv(&frontier, p)?;
    }
    ctx.write_output(&frontier)?;
    let mut text = String::new();
    let _ = writeln!(text, "{:>9}{:>9}  scaling", "average", "robust");
    for p in &frontier {
        let _ = writeln!(
            text,
            "{:>9}{:>9}  {}",
            pct(p.average),
            pct(p.robust),
            io::format_scaling(&p.scaling)
        );
    }
    Ok(text)
}

#[derive(Serialize)]
struct RealizedReport {
    target: RobustTarget,
    validation_coverage: f64,
    feasible_mean: Option<f64>,
    realized: f64,
    feasible_thresholds: usize,
    slices: usize,
}

fn run_realized(ctx: &Context<'_>, files: &SplitFiles, slices: usize) -> Result<String> {
    let target = ctx.robust_target()?;
    let (val, test) = ctx.load_pair(files, None)?;
    let search = greedy_search(&val, &ctx.config, None)?;
    let val_report = robust_coverage(&search.pool, target, slices)?;
    let realized = realized_coverage(&search.pool, &test, target, slices)?;
    let report = RealizedReport {
        target,
        validation_coverage: val_report.coverage,
        feasible_mean: val_report.feasible_mean,
        realized: realized.value,
        feasible_thresholds: realized.feasible_thresholds,
        slices,
    };
    ctx.write_output(&report)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "validation coverage {}",
        pct(report.validation_coverage)
    );
    if let Some(m) = report.feasible_mean {
        let _ = writeln!(text, "feasible mean       {}", pct(m));
    }
    let _ = writeln!(text, "realized coverage   {}", pct(report.realized));
    let _ = writeln!(
        text,
        "feasible thresholds {}/{}",
        report.feasible_thresholds, slices
    );
    Ok(text)
}

#[derive(Serialize)]
struct SynthReport {
    config: SyntheticConfig,
    train_samples: usize,
    splits: Vec<(String, MetricBundle)>,
}

fn write_labels(split: &LabeledSplit, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(["label", "attribute"]).map_err(io_err)?;
    for (y, a) in split.labels.iter().zip(&split.attributes) {
        w.write_record([y.to_string(), a.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run_synth(
    ctx: &Context<'_>,
    config_path: Option<&Path>,
    out_dir: &Path,
    reweight: Reweight,
    subsample: Option<Subsample>,
    no_train: bool,
    epochs: usize,
) -> Result<String> {
    let mut config: SyntheticConfig = match config_path {
        Some(p) => io::load_json(p)?,
        None => SyntheticConfig::biased(),
    };
    if config_path.is_none() {
        config.seed = ctx.global.seed;
    }
    let data = generate(&config)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let splits = [
        ("train", &data.train),
        ("val", &data.val),
        ("test", &data.test),
    ];
    for (name, split) in &splits {
        io::save_features(
            split.features.view(),
            &out_dir.join(format!("{name}_features.csv")),
        )?;
    }
    if no_train {
        for (name, split) in &splits {
            write_labels(split, &out_dir.join(format!("{name}_labels.csv")))?;
        }
        let text = format!(
            "wrote {} train, {} val and {} test samples to {}\n",
            data.train.len(),
            data.val.len(),
            data.test.len(),
            out_dir.display()
        );
        ctx.write_output(&config)?;
        return Ok(text);
    }

    let train = match subsample {
        Some(mode) => {
            let mode = match mode {
                Subsample::Suby => BalanceMode::Class,
                Subsample::Subg => BalanceMode::Group,
            };
            let idx = subsample_balanced(
                &data.train.labels,
                &data.train.attributes,
                mode,
                ctx.global.seed,
            )?;
            data.train.subset(&idx)
        }
        None => data.train.clone(),
    };
    let weights = match reweight {
        Reweight::None => None,
        Reweight::Cr => Some(cr_weights(&train.labels)),
        Reweight::Gr => Some(gr_weights(&train.labels, &train.attributes)?),
    };
    let train_config = TrainConfig {
        epochs,
        seed: ctx.global.seed,
        ..TrainConfig::default()
    };
    let model = train_linear(
        train.features.view(),
        &train.labels,
        config.num_classes,
        weights.as_deref(),
        &train_config,
    )?;
    io::save_json(&model, &out_dir.join("model.json"))?;

    let mut report = SynthReport {
        config: config.clone(),
        train_samples: train.len(),
        splits: Vec::new(),
    };
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<8}{:>9}{:>9}{:>9}{:>9}",
        "split", "worst", "unbiased", "average", "balanced"
    );
    for (name, split) in splits {
        let scores = model.predict_proba(split.features.view())?;
        let set = split.clone().into_prediction_set(scores)?;
        io::save_prediction_set(&set, &out_dir.join(format!("{name}_predictions.csv")), None)?;
        let m = evaluate(&set, &ScalingVector::identity(set.num_classes()))?;
        let _ = writeln!(
            text,
            "{name:<8}{:>9}{:>9}{:>9}{:>9}",
            pct(m.worst_group),
            pct(m.unbiased),
            pct(m.average),
            pct(m.balanced)
        );
        report.splits.push((name.to_string(), m));
    }
    ctx.write_output(&report)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_range_forms() {
        assert_eq!(parse_range("200").unwrap(), (-200, 200));
        assert_eq!(parse_range("-10:30").unwrap(), (-10, 30));
        assert!(parse_range("-3").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_an_input_error() {
        assert_eq!(
            execute(["robust-scaling", "metrics", "x.csv", "--bogus"]).code,
            1
        );
        assert_eq!(execute(["robust-scaling"]).code, 1);
        assert_eq!(execute(["robust-scaling", "--help"]).code, 0);
    }
}
