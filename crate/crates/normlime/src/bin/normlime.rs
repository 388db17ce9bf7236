//! Command-line front end: `train`, `explain`, `class-salience`, and `kar`.
//!
//! Every option can also come from a `key=value` config file (`--config`);
//! explicit flags win over the file, which wins over built-in defaults. The
//! global seed falls back to the `NORMLIME_SEED` environment variable.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use normlime::commands::{
    cmd_class_salience, cmd_explain, cmd_kar, cmd_train, ClassSalienceOptions, DataOptions,
    ExplainOptions, KarOptions, TrainOptions,
};
use normlime::config::ConfigMap;
use normlime::model::TrainConfig;
use normlime::salience::Method;
use normlime::{Error, Result};

#[derive(Parser)]
#[command(
    name = "normlime",
    version,
    about = "Sparse local explanations, global salience maps, and keep-and-retrain evaluation for small classifiers"
)]
struct Cli {
    /// Worker threads for the parallel sections; results are identical for
    /// any value (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Optional key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an MLP classifier and save it.
    Train(TrainArgs),
    /// Explain one instance with a sparse local surrogate.
    Explain(ExplainArgs),
    /// Aggregate per-class salience maps and render them as images.
    ClassSalience(ClassSalienceArgs),
    /// Rank, mask, retrain: measure how much error feature removal costs.
    Kar(KarArgs),
}

/// Primary dataset flags (training split for `train`/`kar`, the explained
/// or anchor data elsewhere).
#[derive(Args)]
struct DataArgs {
    /// IDX image file (requires --data-labels).
    #[arg(long)]
    data_images: Option<PathBuf>,
    /// IDX label file (requires --data-images).
    #[arg(long)]
    data_labels: Option<PathBuf>,
    /// Labelled CSV with header `label,f0,f1,...` (alternative to IDX).
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl DataArgs {
    fn to_options(&self) -> DataOptions {
        DataOptions {
            images: self.data_images.clone(),
            labels: self.data_labels.clone(),
            csv: self.csv.clone(),
        }
    }
}

/// Test-split dataset flags for commands that need two splits.
#[derive(Args)]
struct TestDataArgs {
    /// IDX image file for the test split.
    #[arg(long)]
    test_images: Option<PathBuf>,
    /// IDX label file for the test split.
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Labelled CSV for the test split.
    #[arg(long)]
    test_csv: Option<PathBuf>,
}

impl TestDataArgs {
    fn to_options(&self) -> Option<DataOptions> {
        if self.test_images.is_none() && self.test_labels.is_none() && self.test_csv.is_none() {
            return None;
        }
        Some(DataOptions {
            images: self.test_images.clone(),
            labels: self.test_labels.clone(),
            csv: self.test_csv.clone(),
        })
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Global seed (fallback: NORMLIME_SEED environment variable, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for outputs and the run manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    test_data: TestDataArgs,
    /// Where to save the trained model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Hidden layer widths, comma-separated.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2_penalty: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Dataset row to explain.
    #[arg(long)]
    index: Option<usize>,
    /// Target class (default: the model's prediction).
    #[arg(long)]
    class: Option<usize>,
    /// Maximum surrogate features.
    #[arg(long)]
    k: Option<usize>,
    /// Perturbation standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Perturbation sample count.
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ClassSalienceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Attribution method: normlime, lime, splime_l2, smoothgrad_sq,
    /// vargrad, shapley, or random.
    #[arg(long)]
    method: String,
    /// Classes to map: comma list (`0,3,7`), inclusive range (`0..9`), or a
    /// single class. Default: every class.
    #[arg(long, alias = "class")]
    classes: Option<String>,
    /// Anchor instances sampled per class.
    #[arg(long)]
    anchors_per_class: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Noise draws per instance for the gradient baselines.
    #[arg(long)]
    noise_samples: Option<usize>,
    /// Permutations per instance for sampled Shapley.
    #[arg(long)]
    shapley_permutations: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct KarArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    test_data: TestDataArgs,
    /// Trained baseline model file.
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated attribution methods to compare.
    #[arg(long)]
    methods: Option<String>,
    /// Removal fractions in (0,1), comma-separated and increasing.
    #[arg(long)]
    thresholds: Option<String>,
    /// Retraining runs per cell.
    #[arg(long)]
    runs: Option<usize>,
    /// Ablate this hidden layer's units instead of input features.
    #[arg(long)]
    hidden_layer: Option<usize>,
    #[arg(long)]
    anchors_per_class: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    noise_samples: Option<usize>,
    #[arg(long)]
    shapley_permutations: Option<usize>,
    /// Retraining epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2_penalty: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not configure {jobs} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let file_cfg = match &cli.config {
        Some(path) => match ConfigMap::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => ConfigMap::new(),
    };
    let outcome = match &cli.command {
        Command::Train(args) => run_train(args, &file_cfg),
        Command::Explain(args) => run_explain(args, &file_cfg),
        Command::ClassSalience(args) => run_class_salience(args, &file_cfg),
        Command::Kar(args) => run_kar_cmd(args, &file_cfg),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Flag, then config file, then default.
fn resolve<T: FromStr + Clone>(
    flag: &Option<T>,
    cfg: &ConfigMap,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    match cfg.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("config key {key}: bad value `{raw}`"))),
        None => Ok(default),
    }
}

fn resolve_seed(flag: &Option<u64>, cfg: &ConfigMap) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(*seed);
    }
    if let Some(raw) = cfg.get("seed") {
        return raw
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("config key seed: bad value `{raw}`")));
    }
    match std::env::var("NORMLIME_SEED") {
        Ok(raw) => raw.parse().map_err(|_| {
            Error::InvalidConfig(format!("NORMLIME_SEED: bad value `{raw}`"))
        }),
        Err(_) => Ok(0),
    }
}

fn resolve_out_dir(flag: &Option<PathBuf>, cfg: &ConfigMap) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.get("out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

/// `0..9` (inclusive), `1,4,7`, or a single index.
fn parse_classes(raw: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = raw.split_once("..") {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad class range `{raw}`")))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad class range `{raw}`")))?;
        if hi < lo {
            return Err(Error::InvalidConfig(format!("empty class range `{raw}`")));
        }
        return Ok((lo..=hi).collect());
    }
    parse_list(raw, "class")
}

fn parse_methods(raw: &str) -> Result<Vec<Method>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Method::from_str)
        .collect()
}

fn train_cfg_from(
    epochs: &Option<usize>,
    batch_size: &Option<usize>,
    learning_rate: &Option<f64>,
    l2_penalty: &Option<f64>,
    cfg: &ConfigMap,
) -> Result<TrainConfig> {
    let default = TrainConfig::default();
    Ok(TrainConfig {
        epochs: resolve(epochs, cfg, "epochs", default.epochs)?,
        batch_size: resolve(batch_size, cfg, "batch_size", default.batch_size)?,
        learning_rate: resolve(learning_rate, cfg, "learning_rate", default.learning_rate)?,
        l2_penalty: resolve(l2_penalty, cfg, "l2_penalty", default.l2_penalty)?,
        seed: 0, // commands derive the real seed
    })
}

fn run_train(args: &TrainArgs, cfg: &ConfigMap) -> Result<()> {
    let out_dir = resolve_out_dir(&args.common.out_dir, cfg);
    let hidden_raw = resolve(&args.hidden, cfg, "hidden", "128,128".to_string())?;
    let opts = TrainOptions {
        train_data: args.data.to_options(),
        test_data: args.test_data.to_options(),
        hidden_layers: parse_list(&hidden_raw, "hidden width")?,
        train_cfg: train_cfg_from(
            &args.epochs,
            &args.batch_size,
            &args.learning_rate,
            &args.l2_penalty,
            cfg,
        )?,
        seed: resolve_seed(&args.common.seed, cfg)?,
        model_out: resolve(&args.model, cfg, "model", out_dir.join("model.bin"))?,
        out_dir,
    };
    let summary = cmd_train(&opts)?;
    println!(
        "trained {:?} -> {}",
        summary.layer_sizes,
        summary.model_path.display()
    );
    println!("train accuracy: {:.4}", 1.0 - summary.train_error);
    if let Some(err) = summary.test_error {
        println!("test accuracy:  {:.4}", 1.0 - err);
    }
    println!("manifest: {}", summary.manifest_path.display());
    Ok(())
}

fn run_explain(args: &ExplainArgs, cfg: &ConfigMap) -> Result<()> {
    let base = ExplainOptions::new(
        args.data.to_options(),
        &args.model,
        resolve_out_dir(&args.common.out_dir, cfg),
    );
    let opts = ExplainOptions {
        index: resolve(&args.index, cfg, "index", 0)?,
        class: args.class,
        k: resolve(&args.k, cfg, "k", base.k)?,
        sigma: resolve(&args.sigma, cfg, "sigma", base.sigma)?,
        samples: resolve(&args.samples, cfg, "samples", base.samples)?,
        seed: resolve_seed(&args.common.seed, cfg)?,
        ..base
    };
    let summary = cmd_explain(&opts)?;
    let r = &summary.record;
    println!(
        "instance {} (label {}): explaining class {}",
        r.anchor_id, r.anchor_label, r.target_class
    );
    for w in &r.weights {
        println!("  feature {:>4}  weight {:+.6}", w.index, w.value);
    }
    println!("  intercept     {:+.6}", r.intercept);
    if r.ridge_fallback {
        println!("  (refit used a ridge fallback for a singular system)");
    }
    println!("explanation: {}", summary.explanation_path.display());
    println!("manifest:    {}", summary.manifest_path.display());
    Ok(())
}

fn run_class_salience(args: &ClassSalienceArgs, cfg: &ConfigMap) -> Result<()> {
    let method = Method::from_str(&args.method)?;
    let classes = match &args.classes {
        Some(raw) => parse_classes(raw)?,
        None => match cfg.get("classes") {
            Some(raw) => parse_classes(raw)?,
            None => Vec::new(),
        },
    };
    let base = ClassSalienceOptions::new(
        args.data.to_options(),
        &args.model,
        method,
        resolve_out_dir(&args.common.out_dir, cfg),
    );
    let opts = ClassSalienceOptions {
        classes,
        anchors_per_class: resolve(
            &args.anchors_per_class,
            cfg,
            "anchors_per_class",
            base.anchors_per_class,
        )?,
        k: resolve(&args.k, cfg, "k", base.k)?,
        sigma: resolve(&args.sigma, cfg, "sigma", base.sigma)?,
        samples: resolve(&args.samples, cfg, "samples", base.samples)?,
        noise_samples: resolve(&args.noise_samples, cfg, "noise_samples", base.noise_samples)?,
        shapley_permutations: resolve(
            &args.shapley_permutations,
            cfg,
            "shapley_permutations",
            base.shapley_permutations,
        )?,
        seed: resolve_seed(&args.common.seed, cfg)?,
        ..base
    };
    let summary = cmd_class_salience(&opts)?;
    println!("method {method}: {} class maps", summary.maps.len());
    for path in &summary.image_paths {
        println!("  image: {}", path.display());
    }
    if summary.image_paths.is_empty() {
        println!("  (feature count is not a square; no images rendered)");
    }
    println!("scores:   {}", summary.json_path.display());
    println!("manifest: {}", summary.manifest_path.display());
    Ok(())
}

fn run_kar_cmd(args: &KarArgs, cfg: &ConfigMap) -> Result<()> {
    let test_data = args.test_data.to_options().ok_or_else(|| {
        Error::InvalidConfig(
            "kar needs a test split: --test-images/--test-labels or --test-csv".into(),
        )
    })?;
    let methods_raw = resolve(
        &args.methods,
        cfg,
        "methods",
        "normlime,lime,smoothgrad_sq,vargrad,random".to_string(),
    )?;
    let thresholds_raw = resolve(
        &args.thresholds,
        cfg,
        "thresholds",
        "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9".to_string(),
    )?;
    let base = KarOptions::new(
        args.data.to_options(),
        test_data,
        &args.model,
        resolve_out_dir(&args.common.out_dir, cfg),
    );
    let opts = KarOptions {
        methods: parse_methods(&methods_raw)?,
        thresholds: parse_list(&thresholds_raw, "threshold")?,
        runs: resolve(&args.runs, cfg, "runs", base.runs)?,
        hidden_layer: args.hidden_layer,
        anchors_per_class: resolve(
            &args.anchors_per_class,
            cfg,
            "anchors_per_class",
            base.anchors_per_class,
        )?,
        k: resolve(&args.k, cfg, "k", base.k)?,
        sigma: resolve(&args.sigma, cfg, "sigma", base.sigma)?,
        samples: resolve(&args.samples, cfg, "samples", base.samples)?,
        noise_samples: resolve(&args.noise_samples, cfg, "noise_samples", base.noise_samples)?,
        shapley_permutations: resolve(
            &args.shapley_permutations,
            cfg,
            "shapley_permutations",
            base.shapley_permutations,
        )?,
        train_cfg: train_cfg_from(
            &args.epochs,
            &args.batch_size,
            &args.learning_rate,
            &args.l2_penalty,
            cfg,
        )?,
        seed: resolve_seed(&args.common.seed, cfg)?,
        ..base
    };
    let summary = cmd_kar(&opts)?;
    print_kar_table(&summary.report, &opts.thresholds);
    println!("records:  {}", summary.csv_path.display());
    println!("summary:  {}", summary.json_path.display());
    println!("manifest: {}", summary.manifest_path.display());
    Ok(())
}

/// Mean error gain (in percentage points, ±std) per method and threshold.
fn print_kar_table(report: &normlime::kar::KarReport, thresholds: &[f64]) {
    println!(
        "baseline test error: {:.4} (accuracy {:.4})",
        report.baseline_error,
        1.0 - report.baseline_error
    );
    print!("{:<14}", "error gain pp");
    for t in thresholds {
        print!(" {:>12}", format!("{:.0}%", t * 100.0));
    }
    println!();
    let methods: Vec<_> = {
        let mut seen = Vec::new();
        for c in &report.cells {
            if !seen.contains(&c.method) {
                seen.push(c.method);
            }
        }
        seen
    };
    for method in methods {
        print!("{:<14}", method.to_string());
        for &t in thresholds {
            let cell = report.cell(method, t);
            let text = match cell {
                Some(c) => match (c.mean_error_gain, c.std_error_gain) {
                    (Some(mean), Some(std)) => {
                        format!("{:+.2}±{:.2}", mean * 100.0, std * 100.0)
                    }
                    (Some(mean), None) => format!("{:+.2}", mean * 100.0),
                    _ => "failed".to_string(),
                },
                None => "-".to_string(),
            };
            print!(" {text:>12}");
        }
        println!();
    }
    if !report.failures.is_empty() {
        println!("({} runs diverged and were excluded)", report.failures.len());
    }
}
