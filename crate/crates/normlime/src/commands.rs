//! Implementations of the `normlime` subcommands, shared by the binary and
//! by integration tests so both exercise exactly the same code paths.
//!
//! Every command is a pure function of (input files, options, seed): it
//! derives all internal seeds from the one global seed, writes its artifacts
//! under `out_dir`, and records them in a run manifest with content digests.
//! Rerunning a command with the same inputs reproduces the data artifacts
//! (JSON, CSV, PGM) byte for byte.

use std::path::{Path, PathBuf};

use crate::baselines::{
    class_average_map, masked_probability_value, random_importance, shapley_sampled,
    smoothgrad_sq, vargrad, ClassAverageConfig, NoiseConfig,
};
use crate::config::ConfigMap;
use crate::data::{load_csv, load_idx, Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, sha256_hex};
use crate::kar::{
    build_explanation_set, global_salience_maps, run_kar, salience_for_hidden_features,
    FeatureSpace, GlobalMapConfig, KarConfig, KarReport,
};
use crate::manifest::RunManifest;
use crate::model::{
    classification_error, load_model, save_model, train, MlpModel, Predictor, TrainConfig,
};
use crate::render::render_salience_image;
use crate::salience::{
    normlime_for_class, partition_by_label, positive_part, splime_l2, Method, SalienceMap, Scope,
};
use crate::surrogate::{
    explain_instance, explain_instance_for_class, LocalExplanationRecord, PerturbationConfig,
    SurrogateConfig,
};

// Children of the global seed, one per independent source of randomness.
const SEED_INIT: u64 = 1;
const SEED_SHUFFLE: u64 = 2;
const SEED_EXPLAIN: u64 = 3;
const SEED_ANCHORS: u64 = 4;
const SEED_MAPS: u64 = 5;
const SEED_KAR: u64 = 6;
const SEED_NOISE: u64 = 7;
const SEED_SHAPLEY: u64 = 8;
const SEED_RANDOM: u64 = 9;
const SEED_SURROGATE: u64 = 10;

/// Where a dataset comes from: an IDX image/label pair or a labelled CSV.
#[derive(Clone, Debug, Default)]
pub struct DataOptions {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl DataOptions {
    pub fn idx(images: impl Into<PathBuf>, labels: impl Into<PathBuf>) -> Self {
        DataOptions {
            images: Some(images.into()),
            labels: Some(labels.into()),
            csv: None,
        }
    }

    pub fn csv(path: impl Into<PathBuf>) -> Self {
        DataOptions {
            images: None,
            labels: None,
            csv: Some(path.into()),
        }
    }

    /// Loads and retags the dataset, insisting on exactly one source.
    pub fn load(&self, split: SplitTag) -> Result<Dataset> {
        let dataset = match (&self.images, &self.labels, &self.csv) {
            (Some(images), Some(labels), None) => {
                require_file(images, "image file")?;
                require_file(labels, "label file")?;
                load_idx(images, labels)?
            }
            (None, None, Some(csv)) => {
                require_file(csv, "csv file")?;
                load_csv(csv)?
            }
            (None, Some(_), None) | (Some(_), None, None) => {
                return Err(Error::InvalidConfig(
                    "IDX input needs both --data-images and --data-labels".into(),
                ))
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "provide either --data-images/--data-labels or --csv, not both".into(),
                ))
            }
        };
        Ok(dataset.into_split(split))
    }

    fn describe(&self) -> String {
        match (&self.images, &self.labels, &self.csv) {
            (Some(i), Some(l), _) => format!("idx:{}+{}", i.display(), l.display()),
            (_, _, Some(c)) => format!("csv:{}", c.display()),
            _ => "unset".into(),
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

/// Loads a model with an explicit error when the file is missing.
fn read_model(path: &Path) -> Result<MlpModel> {
    require_file(path, "model file")?;
    load_model(path)
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn finish_manifest(
    command: &str,
    config: &ConfigMap,
    seed: u64,
    out_dir: &Path,
    outputs: &[&Path],
) -> Result<PathBuf> {
    let mut manifest = RunManifest::new(command, &config.digest(), seed);
    for path in outputs {
        manifest.add_output(path)?;
    }
    let manifest_path = out_dir.join(format!("{}_manifest.json", command.replace('-', "_")));
    manifest.finish_and_save(&manifest_path)?;
    Ok(manifest_path)
}

/// Options for `normlime train`.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub train_data: DataOptions,
    pub test_data: Option<DataOptions>,
    /// Hidden layer widths; input and output sizes come from the data.
    pub hidden_layers: Vec<usize>,
    /// Optimizer settings; the shuffle seed inside is ignored in favor of
    /// one derived from `seed`.
    pub train_cfg: TrainConfig,
    pub seed: u64,
    pub model_out: PathBuf,
    pub out_dir: PathBuf,
}

impl TrainOptions {
    pub fn new(train_data: DataOptions, model_out: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        TrainOptions {
            train_data,
            test_data: None,
            hidden_layers: vec![128, 128],
            train_cfg: TrainConfig::default(),
            seed: 0,
            model_out: model_out.into(),
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub layer_sizes: Vec<usize>,
    pub train_error: f64,
    pub test_error: Option<f64>,
    pub config_digest: String,
    pub manifest_path: PathBuf,
}

/// Trains an MLP on the given data and saves it, together with a manifest.
pub fn cmd_train(opts: &TrainOptions) -> Result<TrainSummary> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let train_split = opts.train_data.load(SplitTag::Train)?;
    let test_split = opts
        .test_data
        .as_ref()
        .map(|d| d.load(SplitTag::Test))
        .transpose()?;

    let mut layers = Vec::with_capacity(opts.hidden_layers.len() + 2);
    layers.push(train_split.dim());
    layers.extend_from_slice(&opts.hidden_layers);
    layers.push(train_split.num_classes);

    let init = MlpModel::new(&layers, derive_seed(opts.seed, &[SEED_INIT]))?;
    let cfg = TrainConfig {
        seed: derive_seed(opts.seed, &[SEED_SHUFFLE]),
        ..opts.train_cfg.clone()
    };
    let model = train(&init, &train_split, &cfg)?;
    save_model(&model, &opts.model_out)?;

    let train_error = classification_error(&model, &train_split)?;
    let test_error = test_split
        .as_ref()
        .map(|t| classification_error(&model, t))
        .transpose()?;

    let mut config = ConfigMap::new();
    config
        .set("command", "train")
        .set("train_data", opts.train_data.describe())
        .set("train_data_digest", &train_split.source_digest)
        .set("hidden_layers", join(&opts.hidden_layers))
        .set("epochs", opts.train_cfg.epochs)
        .set("batch_size", opts.train_cfg.batch_size)
        .set("learning_rate", opts.train_cfg.learning_rate)
        .set("l2_penalty", opts.train_cfg.l2_penalty)
        .set("seed", opts.seed);
    if let Some(test) = &test_split {
        config.set("test_data_digest", &test.source_digest);
    }

    let manifest_path = finish_manifest(
        "train",
        &config,
        opts.seed,
        &opts.out_dir,
        &[&opts.model_out],
    )?;
    Ok(TrainSummary {
        model_path: opts.model_out.clone(),
        layer_sizes: layers,
        train_error,
        test_error,
        config_digest: config.digest(),
        manifest_path,
    })
}

/// Options for `normlime explain`.
#[derive(Clone, Debug)]
pub struct ExplainOptions {
    pub data: DataOptions,
    pub model: PathBuf,
    /// Row of the dataset to explain.
    pub index: usize,
    /// Target class; defaults to the model's prediction at the anchor.
    pub class: Option<usize>,
    pub k: usize,
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl ExplainOptions {
    pub fn new(data: DataOptions, model: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        ExplainOptions {
            data,
            model: model.into(),
            index: 0,
            class: None,
            k: SurrogateConfig::default().k,
            sigma: PerturbationConfig::default().sigma,
            samples: PerturbationConfig::default().num_samples,
            seed: 0,
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExplainSummary {
    pub record: LocalExplanationRecord,
    pub explanation_path: PathBuf,
    pub config_digest: String,
    pub manifest_path: PathBuf,
}

/// Explains one instance with the sparse local surrogate and writes the
/// explanation as JSON.
pub fn cmd_explain(opts: &ExplainOptions) -> Result<ExplainSummary> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let model = read_model(&opts.model)?;
    let data = opts.data.load(SplitTag::Test)?;
    if opts.index >= data.n() {
        return Err(Error::InvalidConfig(format!(
            "instance index {} out of range for {} instances",
            opts.index,
            data.n()
        )));
    }

    let pcfg = PerturbationConfig {
        num_samples: opts.samples,
        sigma: opts.sigma,
        seed: derive_seed(opts.seed, &[SEED_EXPLAIN, opts.index as u64]),
    };
    let scfg = SurrogateConfig::default_with_k(opts.k);
    let anchor = data.instances.row(opts.index);
    let explanation = match opts.class {
        Some(class) => explain_instance_for_class(anchor, &model, &pcfg, &scfg, class)?,
        None => explain_instance(anchor, &model, &pcfg, &scfg)?,
    };

    let mut config = ConfigMap::new();
    config
        .set("command", "explain")
        .set("data", opts.data.describe())
        .set("data_digest", &data.source_digest)
        .set("model_digest", file_digest(&opts.model)?)
        .set("index", opts.index)
        .set("k", opts.k)
        .set("sigma", opts.sigma)
        .set("samples", opts.samples)
        .set("seed", opts.seed);
    if let Some(class) = opts.class {
        config.set("class", class);
    }

    let record = explanation.record(opts.index as u64, &config.digest());
    let explanation_path = opts.out_dir.join("explanation.json");
    std::fs::write(
        &explanation_path,
        serde_json::to_string_pretty(&record)? + "\n",
    )?;

    let manifest_path = finish_manifest(
        "explain",
        &config,
        opts.seed,
        &opts.out_dir,
        &[&explanation_path],
    )?;
    Ok(ExplainSummary {
        record,
        explanation_path,
        config_digest: config.digest(),
        manifest_path,
    })
}

/// Options for `normlime class-salience`.
#[derive(Clone, Debug)]
pub struct ClassSalienceOptions {
    pub data: DataOptions,
    pub model: PathBuf,
    pub method: Method,
    /// Classes to map; empty means every class in the dataset.
    pub classes: Vec<usize>,
    pub anchors_per_class: usize,
    pub k: usize,
    pub sigma: f64,
    pub samples: usize,
    pub noise_samples: usize,
    pub shapley_permutations: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl ClassSalienceOptions {
    pub fn new(
        data: DataOptions,
        model: impl Into<PathBuf>,
        method: Method,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        ClassSalienceOptions {
            data,
            model: model.into(),
            method,
            classes: Vec::new(),
            anchors_per_class: 100,
            k: SurrogateConfig::default().k,
            sigma: PerturbationConfig::default().sigma,
            samples: PerturbationConfig::default().num_samples,
            noise_samples: NoiseConfig::default().num_noise_samples,
            shapley_permutations: 20,
            seed: 0,
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassSalienceSummary {
    /// One map per requested class, in request order.
    pub maps: Vec<SalienceMap>,
    /// Rendered images, one per class; empty when the feature count is not
    /// a perfect square.
    pub image_paths: Vec<PathBuf>,
    pub json_path: PathBuf,
    pub config_digest: String,
    pub manifest_path: PathBuf,
}

/// Computes per-class salience maps for one method, rendering each as a PGM
/// image (when the features form a square grid) plus a JSON dump of the raw
/// scores. LIME and NormLIME maps keep only positively contributing
/// features, matching how the maps are meant to be read: evidence *for* the
/// class.
pub fn cmd_class_salience(opts: &ClassSalienceOptions) -> Result<ClassSalienceSummary> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let model = read_model(&opts.model)?;
    let data = opts.data.load(SplitTag::Test)?;
    if data.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "data dimension",
            expected: model.input_dim(),
            got: data.dim(),
        });
    }
    let classes: Vec<usize> = if opts.classes.is_empty() {
        (0..data.num_classes).collect()
    } else {
        if let Some(&bad) = opts.classes.iter().find(|&&c| c >= data.num_classes) {
            return Err(Error::InvalidConfig(format!(
                "class {bad} out of range for {} classes",
                data.num_classes
            )));
        }
        opts.classes.clone()
    };

    let anchors = data.sample_stratified(
        opts.anchors_per_class,
        derive_seed(opts.seed, &[SEED_ANCHORS]),
    )?;

    let mut config = ConfigMap::new();
    config
        .set("command", "class-salience")
        .set("data", opts.data.describe())
        .set("data_digest", &data.source_digest)
        .set("model_digest", file_digest(&opts.model)?)
        .set("method", opts.method)
        .set("classes", join(&classes))
        .set("anchors_per_class", opts.anchors_per_class)
        .set("k", opts.k)
        .set("sigma", opts.sigma)
        .set("samples", opts.samples)
        .set("noise_samples", opts.noise_samples)
        .set("shapley_permutations", opts.shapley_permutations)
        .set("seed", opts.seed);
    let digest = config.digest();

    let maps = class_maps(&model, &anchors, opts.method, &classes, opts, &digest)?;

    let json_path = opts.out_dir.join("class_salience.json");
    #[derive(serde::Serialize)]
    struct ClassSalienceFile<'a> {
        method: Method,
        classes: &'a [usize],
        maps: &'a [SalienceMap],
    }
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&ClassSalienceFile {
            method: opts.method,
            classes: &classes,
            maps: &maps,
        })? + "\n",
    )?;

    // render only when the feature vector is a square image
    let side = (data.dim() as f64).sqrt().round() as usize;
    let mut image_paths = Vec::new();
    if side * side == data.dim() {
        for (map, &class) in maps.iter().zip(&classes) {
            let path = opts
                .out_dir
                .join(format!("salience_{}_class{}.pgm", opts.method, class));
            render_salience_image(map, side, side, &path)?;
            image_paths.push(path);
        }
    }

    let mut outputs: Vec<&Path> = vec![&json_path];
    outputs.extend(image_paths.iter().map(PathBuf::as_path));
    let manifest_path = finish_manifest(
        "class-salience",
        &config,
        opts.seed,
        &opts.out_dir,
        &outputs,
    )?;
    Ok(ClassSalienceSummary {
        maps,
        image_paths,
        json_path,
        config_digest: digest,
        manifest_path,
    })
}

/// One salience map per class for the chosen method.
fn class_maps(
    model: &MlpModel,
    anchors: &Dataset,
    method: Method,
    classes: &[usize],
    opts: &ClassSalienceOptions,
    digest: &str,
) -> Result<Vec<SalienceMap>> {
    let d = model.input_dim();
    let mut maps = Vec::with_capacity(classes.len());
    match method {
        Method::Normlime | Method::SplimeL2 => {
            // one shared explanation set; per-class maps restrict to the
            // anchors the model assigns to that class
            let pcfg = PerturbationConfig {
                num_samples: opts.samples,
                sigma: opts.sigma,
                seed: derive_seed(opts.seed, &[SEED_SURROGATE]),
            };
            let scfg = SurrogateConfig::default_with_k(opts.k);
            let set = build_explanation_set(model, anchors.instances.view(), &pcfg, &scfg)?;
            for &class in classes {
                let base = match method {
                    Method::Normlime => normlime_for_class(&set, class)?,
                    _ => {
                        let subset = partition_by_label(&set, class);
                        let mut map = splime_l2(&subset)?;
                        map.scope = Scope::Class(class);
                        map
                    }
                };
                maps.push(positive_part(&base, &set, class)?);
            }
        }
        Method::SmoothgradSq | Method::Vargrad => {
            for &class in classes {
                let ncfg = NoiseConfig {
                    sigma: opts.sigma,
                    num_noise_samples: opts.noise_samples,
                    seed: derive_seed(opts.seed, &[SEED_NOISE, class as u64]),
                };
                let average = class_average_map(
                    anchors,
                    class,
                    method,
                    |row| match method {
                        Method::SmoothgradSq => smoothgrad_sq(model, row, class, &ncfg),
                        _ => vargrad(model, row, class, &ncfg),
                    },
                    &ClassAverageConfig {
                        images_per_class: opts.anchors_per_class,
                        seed: derive_seed(opts.seed, &[SEED_ANCHORS, class as u64]),
                    },
                )?;
                maps.push(average.map);
            }
        }
        Method::Shapley => {
            let background = anchors.feature_means();
            for &class in classes {
                let seed = derive_seed(opts.seed, &[SEED_SHAPLEY, class as u64]);
                let average = class_average_map(
                    anchors,
                    class,
                    method,
                    |row| {
                        let value =
                            masked_probability_value(model, row, background.view(), class)?;
                        let phi =
                            shapley_sampled(value, d, opts.shapley_permutations, seed)?;
                        Ok(phi.mapv(f64::abs))
                    },
                    &ClassAverageConfig {
                        images_per_class: opts.anchors_per_class,
                        seed: derive_seed(opts.seed, &[SEED_ANCHORS, class as u64]),
                    },
                )?;
                maps.push(average.map);
            }
        }
        Method::Random => {
            for &class in classes {
                let scores =
                    random_importance(d, derive_seed(opts.seed, &[SEED_RANDOM, class as u64]));
                maps.push(SalienceMap::new(
                    Method::Random,
                    Scope::Class(class),
                    scores.to_vec(),
                ));
            }
        }
    }
    Ok(maps
        .into_iter()
        .map(|m| m.with_provenance(digest, opts.seed))
        .collect())
}

/// Options for `normlime kar`.
#[derive(Clone, Debug)]
pub struct KarOptions {
    pub train_data: DataOptions,
    pub test_data: DataOptions,
    pub model: PathBuf,
    pub methods: Vec<Method>,
    pub thresholds: Vec<f64>,
    pub runs: usize,
    /// `Some(layer)` ablates that hidden layer's units instead of inputs.
    pub hidden_layer: Option<usize>,
    pub anchors_per_class: usize,
    pub k: usize,
    pub sigma: f64,
    pub samples: usize,
    pub noise_samples: usize,
    pub shapley_permutations: usize,
    /// Retraining hyperparameters; per-cell seeds are derived internally.
    pub train_cfg: TrainConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl KarOptions {
    pub fn new(
        train_data: DataOptions,
        test_data: DataOptions,
        model: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        let kcfg = KarConfig::default();
        KarOptions {
            train_data,
            test_data,
            model: model.into(),
            methods: vec![Method::Normlime, Method::Random],
            thresholds: kcfg.thresholds,
            runs: kcfg.num_runs,
            hidden_layer: None,
            anchors_per_class: 100,
            k: SurrogateConfig::default().k,
            sigma: PerturbationConfig::default().sigma,
            samples: PerturbationConfig::default().num_samples,
            noise_samples: NoiseConfig::default().num_noise_samples,
            shapley_permutations: 20,
            train_cfg: TrainConfig::default(),
            seed: 0,
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KarSummary {
    pub report: KarReport,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub config_digest: String,
    pub manifest_path: PathBuf,
}

/// Runs the keep-and-retrain grid end to end: build one global salience map
/// per method from test-split anchors, mask, retrain, and write the per-run
/// CSV plus the aggregated JSON summary.
pub fn cmd_kar(opts: &KarOptions) -> Result<KarSummary> {
    std::fs::create_dir_all(&opts.out_dir)?;
    if opts.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let model = read_model(&opts.model)?;
    let train_split = opts.train_data.load(SplitTag::Train)?;
    let test_split = opts.test_data.load(SplitTag::Test)?;

    let anchors = test_split.sample_stratified(
        opts.anchors_per_class,
        derive_seed(opts.seed, &[SEED_ANCHORS]),
    )?;

    let map_cfg = GlobalMapConfig {
        perturbation: PerturbationConfig {
            num_samples: opts.samples,
            sigma: opts.sigma,
            seed: 0, // replaced by derived per-anchor seeds
        },
        surrogate: SurrogateConfig::default_with_k(opts.k),
        noise: NoiseConfig {
            sigma: opts.sigma,
            num_noise_samples: opts.noise_samples,
            seed: 0,
        },
        shapley_permutations: opts.shapley_permutations,
        seed: derive_seed(opts.seed, &[SEED_MAPS]),
    };
    let maps = match opts.hidden_layer {
        None => global_salience_maps(&model, anchors.instances.view(), &opts.methods, &map_cfg)?,
        Some(layer) => opts
            .methods
            .iter()
            .map(|&m| {
                salience_for_hidden_features(&model, anchors.instances.view(), layer, m, &map_cfg)
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let kcfg = KarConfig {
        thresholds: opts.thresholds.clone(),
        num_runs: opts.runs,
        feature_space: match opts.hidden_layer {
            None => FeatureSpace::Input,
            Some(layer_index) => FeatureSpace::Hidden { layer_index },
        },
        train_cfg: opts.train_cfg.clone(),
        seed: derive_seed(opts.seed, &[SEED_KAR]),
    };
    let report = run_kar(&model, &train_split, &test_split, &maps, &kcfg)?;

    let methods: Vec<String> = opts.methods.iter().map(|m| m.to_string()).collect();
    let mut config = ConfigMap::new();
    config
        .set("command", "kar")
        .set("train_data", opts.train_data.describe())
        .set("train_data_digest", &train_split.source_digest)
        .set("test_data_digest", &test_split.source_digest)
        .set("model_digest", file_digest(&opts.model)?)
        .set("methods", methods.join(","))
        .set("thresholds", join(&opts.thresholds))
        .set("runs", opts.runs)
        .set("anchors_per_class", opts.anchors_per_class)
        .set("k", opts.k)
        .set("sigma", opts.sigma)
        .set("samples", opts.samples)
        .set("noise_samples", opts.noise_samples)
        .set("shapley_permutations", opts.shapley_permutations)
        .set("epochs", opts.train_cfg.epochs)
        .set("batch_size", opts.train_cfg.batch_size)
        .set("learning_rate", opts.train_cfg.learning_rate)
        .set("l2_penalty", opts.train_cfg.l2_penalty)
        .set("seed", opts.seed);
    if let Some(layer) = opts.hidden_layer {
        config.set("hidden_layer", layer);
    }

    let csv_path = opts.out_dir.join("kar.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    let json_path = opts.out_dir.join("kar_summary.json");
    std::fs::write(&json_path, report.summary_json())?;

    let manifest_path = finish_manifest(
        "kar",
        &config,
        opts.seed,
        &opts.out_dir,
        &[&csv_path, &json_path],
    )?;
    Ok(KarSummary {
        report,
        csv_path,
        json_path,
        config_digest: config.digest(),
        manifest_path,
    })
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    /// Tiny 4-feature, 2-class CSV: class 0 lives near (1,1,0,0), class 1
    /// near (0,0,1,1).
    fn write_toy_csv(dir: &Path, n_per_class: usize) -> PathBuf {
        let path = dir.join("toy.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "label,f0,f1,f2,f3").unwrap();
        for i in 0..n_per_class {
            let jitter = (i % 7) as f64 / 70.0;
            writeln!(f, "0,{},{},{},{}", 0.9 - jitter, 0.8 + jitter / 2.0, 0.1, jitter).unwrap();
            writeln!(f, "1,{},{},{},{}", jitter, 0.1, 0.9 - jitter, 0.85 + jitter / 3.0).unwrap();
        }
        path
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 15,
            batch_size: 8,
            learning_rate: 0.3,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }

    fn trained_toy_model(dir: &Path) -> (PathBuf, PathBuf) {
        let csv = write_toy_csv(dir, 30);
        let model_path = dir.join("toy.model");
        let opts = TrainOptions {
            hidden_layers: vec![8],
            train_cfg: quick_cfg(),
            seed: 5,
            ..TrainOptions::new(DataOptions::csv(&csv), &model_path, dir)
        };
        let summary = cmd_train(&opts).unwrap();
        assert!(summary.train_error <= 0.05, "toy task should be easy");
        (csv, model_path)
    }

    #[test]
    fn train_writes_model_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_toy_csv(dir.path(), 20);
        let model_path = dir.path().join("m.model");
        let opts = TrainOptions {
            hidden_layers: vec![6],
            train_cfg: quick_cfg(),
            seed: 1,
            test_data: Some(DataOptions::csv(&csv)),
            ..TrainOptions::new(DataOptions::csv(&csv), &model_path, dir.path())
        };
        let summary = cmd_train(&opts).unwrap();
        assert_eq!(summary.layer_sizes, vec![4, 6, 2]);
        assert!(summary.test_error.is_some());
        assert!(model_path.is_file());

        let manifest: crate::manifest::RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&summary.manifest_path).unwrap())
                .unwrap();
        assert_eq!(manifest.command, "train");
        assert_eq!(manifest.outputs.len(), 1);
        assert_eq!(manifest.config_digest, summary.config_digest);

        // reloadable and equivalent
        let model = read_model(&model_path).unwrap();
        assert_eq!(model.layer_sizes(), &[4, 6, 2]);
    }

    #[test]
    fn explain_emits_a_parsable_record() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, model_path) = trained_toy_model(dir.path());
        let opts = ExplainOptions {
            index: 3,
            samples: 300,
            k: 2,
            seed: 9,
            ..ExplainOptions::new(DataOptions::csv(&csv), &model_path, dir.path())
        };
        let summary = cmd_explain(&opts).unwrap();
        let parsed: LocalExplanationRecord =
            serde_json::from_str(&std::fs::read_to_string(&summary.explanation_path).unwrap())
                .unwrap();
        assert_eq!(parsed, summary.record);
        assert_eq!(parsed.anchor_id, 3);
        assert!(parsed.weights.len() <= 2);
        assert_eq!(parsed.config_digest, summary.config_digest);

        // out-of-range index is refused
        let bad = ExplainOptions {
            index: 10_000,
            ..opts
        };
        assert!(cmd_explain(&bad).is_err());
    }

    #[test]
    fn explain_is_deterministic_across_reruns() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, model_path) = trained_toy_model(dir.path());
        let mk = |out: &Path| ExplainOptions {
            index: 1,
            samples: 200,
            k: 2,
            seed: 4,
            ..ExplainOptions::new(DataOptions::csv(&csv), &model_path, out)
        };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cmd_explain(&mk(&out_a)).unwrap();
        cmd_explain(&mk(&out_b)).unwrap();
        assert_eq!(
            std::fs::read(out_a.join("explanation.json")).unwrap(),
            std::fs::read(out_b.join("explanation.json")).unwrap()
        );
    }

    #[test]
    fn class_salience_renders_square_features_and_dumps_json() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, model_path) = trained_toy_model(dir.path());
        let opts = ClassSalienceOptions {
            anchors_per_class: 10,
            samples: 200,
            k: 2,
            seed: 2,
            ..ClassSalienceOptions::new(
                DataOptions::csv(&csv),
                &model_path,
                Method::Normlime,
                dir.path(),
            )
        };
        let summary = cmd_class_salience(&opts).unwrap();
        assert_eq!(summary.maps.len(), 2);
        // 4 features form a 2x2 image
        assert_eq!(summary.image_paths.len(), 2);
        for path in &summary.image_paths {
            assert!(path.is_file());
            let (w, h, _) = crate::render::decode_pgm(&std::fs::read(path).unwrap()).unwrap();
            assert_eq!((w, h), (2, 2));
        }
        for (map, class) in summary.maps.iter().zip([0usize, 1]) {
            assert_eq!(map.scope, Scope::Class(class));
            // positive-part rule: nothing negative survives
            assert!(map.scores.iter().all(|&v| v >= 0.0));
        }
        assert!(summary.json_path.is_file());
    }

    #[test]
    fn class_salience_handles_every_method() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, model_path) = trained_toy_model(dir.path());
        for method in [
            Method::SplimeL2,
            Method::SmoothgradSq,
            Method::Vargrad,
            Method::Shapley,
            Method::Random,
        ] {
            let out = dir.path().join(method.to_string());
            let opts = ClassSalienceOptions {
                anchors_per_class: 6,
                samples: 150,
                noise_samples: 10,
                shapley_permutations: 5,
                k: 2,
                seed: 3,
                classes: vec![1],
                ..ClassSalienceOptions::new(
                    DataOptions::csv(&csv),
                    &model_path,
                    method,
                    &out,
                )
            };
            let summary = cmd_class_salience(&opts).unwrap();
            assert_eq!(summary.maps.len(), 1, "{method}");
            assert_eq!(summary.maps[0].method, method);
            assert!(summary.maps[0].scores.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn kar_writes_csv_and_summary_reproducibly() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, model_path) = trained_toy_model(dir.path());
        let mk = |out: &Path| KarOptions {
            methods: vec![Method::Random, Method::Vargrad],
            thresholds: vec![0.25, 0.5],
            runs: 2,
            anchors_per_class: 6,
            samples: 100,
            noise_samples: 8,
            train_cfg: quick_cfg(),
            seed: 12,
            ..KarOptions::new(
                DataOptions::csv(&csv),
                DataOptions::csv(&csv),
                &model_path,
                out,
            )
        };
        let out_a = dir.path().join("ka");
        let summary = cmd_kar(&mk(&out_a)).unwrap();
        assert_eq!(summary.report.records.len(), 2 * 2 * 2);
        let csv_text = std::fs::read_to_string(&summary.csv_path).unwrap();
        assert_eq!(csv_text.lines().count(), 1 + 8);
        assert!(summary.json_path.is_file());

        let out_b = dir.path().join("kb");
        cmd_kar(&mk(&out_b)).unwrap();
        assert_eq!(
            std::fs::read(out_a.join("kar.csv")).unwrap(),
            std::fs::read(out_b.join("kar.csv")).unwrap()
        );
        assert_eq!(
            std::fs::read(out_a.join("kar_summary.json")).unwrap(),
            std::fs::read(out_b.join("kar_summary.json")).unwrap()
        );
    }

    #[test]
    fn missing_model_is_an_explicit_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_toy_csv(dir.path(), 5);
        let opts = ExplainOptions::new(
            DataOptions::csv(&csv),
            dir.path().join("missing.model"),
            dir.path(),
        );
        let err = cmd_explain(&opts).unwrap_err();
        assert!(err.to_string().contains("model file not found"));
        assert!(err.to_string().contains("missing.model"));
    }

    #[test]
    fn data_source_must_be_unambiguous() {
        let both = DataOptions {
            images: Some("x".into()),
            labels: Some("y".into()),
            csv: Some("z".into()),
        };
        assert!(both.load(SplitTag::Train).is_err());
        let half = DataOptions {
            images: Some("x".into()),
            labels: None,
            csv: None,
        };
        assert!(half.load(SplitTag::Train).is_err());
        assert!(DataOptions::default().load(SplitTag::Train).is_err());
    }
}
