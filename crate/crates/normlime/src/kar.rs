//! Keep-And-Retrain (KAR) evaluation: rank features with an attribution
//! method, zero out the least important fraction, retrain from a fresh
//! initialization, and report how much test error the ablation costs.
//!
//! Masking replaces features with zero instead of deleting columns, so the
//! architecture (and therefore the comparison) is identical across
//! thresholds. The grid of (method, threshold, run) cells is embarrassingly
//! parallel; every cell derives its own seeds from the grid coordinates, so
//! results are bit-identical regardless of thread count.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    masked_probability_value, random_importance, shapley_sampled, smoothgrad_sq, vargrad,
    NoiseConfig,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::model::{
    classification_error, classification_error_masked, train, train_masked, HiddenMask, MlpModel,
    Predictor, TrainConfig,
};
use crate::salience::{normlime, splime_l2, ExplanationSet, Method, SalienceMap, Scope};
use crate::surrogate::{
    explain_instance, LocalExplanation, PerturbationConfig, SurrogateConfig,
};

/// Which feature space the ablation operates on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Raw input features, zeroed in the dataset itself.
    Input,
    /// Activations of one hidden layer, zeroed between layers during both
    /// training and evaluation.
    Hidden { layer_index: usize },
}

/// Grid settings for a KAR experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarConfig {
    /// Removal fractions, strictly increasing, each in (0,1).
    pub thresholds: Vec<f64>,
    /// Independent retraining runs per (method, threshold) cell.
    pub num_runs: usize,
    pub feature_space: FeatureSpace,
    pub train_cfg: TrainConfig,
    /// Master seed; per-cell initialization and shuffle seeds derive from it.
    pub seed: u64,
}

impl Default for KarConfig {
    fn default() -> Self {
        KarConfig {
            thresholds: (1..=9).map(|i| i as f64 / 10.0).collect(),
            num_runs: 5,
            feature_space: FeatureSpace::Input,
            train_cfg: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl KarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig("thresholds must be non-empty".into()));
        }
        for &t in &self.thresholds {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "threshold {t} outside (0, 1)"
                )));
            }
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "thresholds must be strictly increasing".into(),
            ));
        }
        if self.num_runs == 0 {
            return Err(Error::InvalidConfig("num_runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One completed retraining cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarRecord {
    pub method: Method,
    pub threshold: f64,
    pub run: usize,
    /// Test error of the unmasked baseline model.
    pub baseline_error: f64,
    /// Test error of the freshly retrained model under the mask.
    pub retrained_error: f64,
    /// `retrained_error - baseline_error`; negative means the ablated model
    /// beat the baseline.
    pub error_gain: f64,
}

/// A retraining run that diverged; excluded from means but reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarFailure {
    pub method: Method,
    pub threshold: f64,
    pub run: usize,
    pub reason: String,
}

/// Aggregate over the completed runs of one (method, threshold) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarCell {
    pub method: Method,
    pub threshold: f64,
    /// `None` when every run in the cell failed.
    pub mean_error_gain: Option<f64>,
    /// Sample standard deviation (n-1); `None` below two completed runs.
    pub std_error_gain: Option<f64>,
    pub completed: usize,
    pub failed: usize,
}

/// Full results of a KAR experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarReport {
    pub feature_space: FeatureSpace,
    pub baseline_error: f64,
    /// Per-run records in (method, threshold, run) order.
    pub records: Vec<KarRecord>,
    pub failures: Vec<KarFailure>,
    /// One aggregate per (method, threshold), same ordering as `records`.
    pub cells: Vec<KarCell>,
}

impl KarReport {
    fn from_outcomes(
        feature_space: FeatureSpace,
        baseline_error: f64,
        methods: &[Method],
        thresholds: &[f64],
        outcomes: Vec<Vec<std::result::Result<KarRecord, KarFailure>>>,
    ) -> Self {
        let mut records = Vec::new();
        let mut failures = Vec::new();
        let mut cells = Vec::new();
        let mut outcomes = outcomes.into_iter();
        for &method in methods {
            for &threshold in thresholds {
                let cell_outcomes = outcomes.next().expect("one outcome list per grid cell");
                let mut gains = Vec::new();
                let mut failed = 0usize;
                for outcome in cell_outcomes {
                    match outcome {
                        Ok(rec) => {
                            gains.push(rec.error_gain);
                            records.push(rec);
                        }
                        Err(fail) => {
                            failed += 1;
                            failures.push(fail);
                        }
                    }
                }
                cells.push(KarCell {
                    method,
                    threshold,
                    mean_error_gain: mean(&gains),
                    std_error_gain: sample_std(&gains),
                    completed: gains.len(),
                    failed,
                });
            }
        }
        KarReport {
            feature_space,
            baseline_error,
            records,
            failures,
            cells,
        }
    }

    /// The aggregate for one (method, threshold) pair, if that cell exists.
    pub fn cell(&self, method: Method, threshold: f64) -> Option<&KarCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.threshold == threshold)
    }

    /// Per-run records as CSV, one row per completed run.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,threshold,run,baseline_error,retrained_error,error_gain\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method, r.threshold, r.run, r.baseline_error, r.retrained_error, r.error_gain
            ));
        }
        out
    }

    /// Aggregates (not per-run records) as pretty-printed JSON.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            feature_space: &'a FeatureSpace,
            baseline_error: f64,
            completed_runs: usize,
            failed_runs: usize,
            cells: &'a [KarCell],
        }
        serde_json::to_string_pretty(&Summary {
            feature_space: &self.feature_space,
            baseline_error: self.baseline_error,
            completed_runs: self.records.len(),
            failed_runs: self.failures.len(),
            cells: &self.cells,
        })
        .expect("report serialization cannot fail")
        + "\n"
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let var =
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

/// Feature indices ordered ascending by score, ties broken by ascending
/// index. The head of the ranking is what gets masked first.
pub fn rank_features(map: &SalienceMap) -> Result<Vec<usize>> {
    if let Some(bad) = map.scores.iter().position(|v| v.is_nan()) {
        return Err(Error::InvalidSalience(format!(
            "score for feature {bad} is NaN"
        )));
    }
    let mut order: Vec<usize> = (0..map.scores.len()).collect();
    // stable sort keeps equal scores in index order
    order.sort_by(|&a, &b| map.scores[a].partial_cmp(&map.scores[b]).unwrap());
    Ok(order)
}

/// How many features a threshold removes: floor(threshold * d), evaluated
/// so that decimal thresholds hit exact multiples despite float rounding.
fn num_masked(threshold: f64, d: usize) -> usize {
    let raw = threshold * d as f64;
    let nearest = raw.round();
    if (raw - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        raw.floor() as usize
    }
}

/// Keep-flags for a ranking at one threshold: `false` marks the
/// floor(threshold * d) lowest-ranked features for removal.
pub fn keep_vector(ranking: &[usize], threshold: f64) -> Vec<bool> {
    let d = ranking.len();
    let masked = num_masked(threshold, d);
    let mut keep = vec![true; d];
    for &i in &ranking[..masked] {
        keep[i] = false;
    }
    keep
}

/// Zeroes the least important features in every instance, returning the
/// masked dataset and the keep-flags used (for reuse at evaluation time).
/// Masking preserves the feature count, so models keep their architecture.
pub fn mask_least_important(
    dataset: &Dataset,
    ranking: &[usize],
    threshold: f64,
) -> Result<(Dataset, Vec<bool>)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    if ranking.len() != dataset.dim() {
        return Err(Error::ShapeMismatch {
            what: "ranking length",
            expected: dataset.dim(),
            got: ranking.len(),
        });
    }
    let mut seen = vec![false; ranking.len()];
    for &i in ranking {
        if i >= ranking.len() || seen[i] {
            return Err(Error::InvalidConfig(
                "ranking is not a permutation of the feature indices".into(),
            ));
        }
        seen[i] = true;
    }

    let keep = keep_vector(ranking, threshold);
    let mut instances = dataset.instances.clone();
    for (i, &kept) in keep.iter().enumerate() {
        if !kept {
            instances.column_mut(i).fill(0.0);
        }
    }
    let masked = Dataset::new(
        instances,
        dataset.labels.clone(),
        dataset.num_classes,
        dataset.split,
        format!("{}#masked", dataset.source_digest),
    )?;
    Ok((masked, keep))
}

/// Runs the full (method x threshold x run) grid: each cell freshly
/// initializes the baseline architecture with a seed derived from its grid
/// coordinates, trains on the masked train split, and measures test error
/// under the same mask. `model` must already be trained on the full
/// features; its test error is the shared baseline.
pub fn run_kar(
    model: &MlpModel,
    train_split: &Dataset,
    test_split: &Dataset,
    maps: &[SalienceMap],
    kcfg: &KarConfig,
) -> Result<KarReport> {
    kcfg.validate()?;
    if maps.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one salience map is required".into(),
        ));
    }
    let feature_dim = match kcfg.feature_space {
        FeatureSpace::Input => model.input_dim(),
        FeatureSpace::Hidden { layer_index } => {
            if layer_index >= model.num_hidden_layers() {
                return Err(Error::LayerOutOfRange {
                    layer: layer_index,
                    hidden_layers: model.num_hidden_layers(),
                });
            }
            model.layer_sizes()[layer_index + 1]
        }
    };
    let mut methods = Vec::with_capacity(maps.len());
    let mut rankings = Vec::with_capacity(maps.len());
    for map in maps {
        if map.len() != feature_dim {
            return Err(Error::ShapeMismatch {
                what: "salience map length",
                expected: feature_dim,
                got: map.len(),
            });
        }
        if methods.contains(&map.method) {
            return Err(Error::InvalidConfig(format!(
                "duplicate salience map for method {}",
                map.method
            )));
        }
        methods.push(map.method);
        rankings.push(rank_features(map)?);
    }

    let baseline_error = classification_error(model, test_split)?;

    let pairs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|mi| (0..kcfg.thresholds.len()).map(move |ti| (mi, ti)))
        .collect();

    // one task per (method, threshold): the masked data is built once and
    // shared by that cell's runs, bounding peak memory at one masked copy
    // of the training split per worker thread
    let outcomes: Vec<Vec<std::result::Result<KarRecord, KarFailure>>> = pairs
        .par_iter()
        .map(|&(mi, ti)| {
            let threshold = kcfg.thresholds[ti];
            run_cell(
                model,
                train_split,
                test_split,
                &rankings[mi],
                methods[mi],
                mi,
                threshold,
                ti,
                baseline_error,
                kcfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(KarReport::from_outcomes(
        kcfg.feature_space,
        baseline_error,
        &methods,
        &kcfg.thresholds,
        outcomes,
    ))
}

/// All runs of one (method, threshold) cell, sequentially.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    model: &MlpModel,
    train_split: &Dataset,
    test_split: &Dataset,
    ranking: &[usize],
    method: Method,
    method_index: usize,
    threshold: f64,
    threshold_index: usize,
    baseline_error: f64,
    kcfg: &KarConfig,
) -> Result<Vec<std::result::Result<KarRecord, KarFailure>>> {
    enum CellData {
        Input { train: Box<Dataset>, test: Box<Dataset> },
        Hidden { mask: HiddenMask },
    }
    let data = match kcfg.feature_space {
        FeatureSpace::Input => {
            let (masked_train, _) = mask_least_important(train_split, ranking, threshold)?;
            let (masked_test, _) = mask_least_important(test_split, ranking, threshold)?;
            CellData::Input {
                train: Box::new(masked_train),
                test: Box::new(masked_test),
            }
        }
        FeatureSpace::Hidden { layer_index } => CellData::Hidden {
            mask: HiddenMask {
                layer_index,
                keep: keep_vector(ranking, threshold),
            },
        },
    };

    let mut outcomes = Vec::with_capacity(kcfg.num_runs);
    for run in 0..kcfg.num_runs {
        let coords = [method_index as u64, threshold_index as u64, run as u64];
        let init_seed = derive_seed(kcfg.seed, &[coords[0], coords[1], coords[2], 0]);
        let shuffle_seed = derive_seed(kcfg.seed, &[coords[0], coords[1], coords[2], 1]);
        let fresh = MlpModel::new(model.layer_sizes(), init_seed)?;
        let cfg = TrainConfig {
            seed: shuffle_seed,
            ..kcfg.train_cfg.clone()
        };

        let trained = match &data {
            CellData::Input { train: tr, .. } => train(&fresh, tr, &cfg),
            CellData::Hidden { mask } => train_masked(&fresh, train_split, &cfg, Some(mask)),
        };
        let outcome = match trained {
            Ok(trained) => {
                let retrained_error = match &data {
                    CellData::Input { test: te, .. } => classification_error(&trained, te)?,
                    CellData::Hidden { mask } => {
                        classification_error_masked(&trained, test_split, Some(mask))?
                    }
                };
                Ok(KarRecord {
                    method,
                    threshold,
                    run,
                    baseline_error,
                    retrained_error,
                    error_gain: retrained_error - baseline_error,
                })
            }
            Err(err @ Error::Diverged { .. }) => Err(KarFailure {
                method,
                threshold,
                run,
                reason: err.to_string(),
            }),
            Err(err) => return Err(err),
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Settings for building global salience maps over a sample of anchors.
///
/// The `seed` field governs all randomness: per-anchor seeds are derived
/// from it, and the seed fields inside the sub-configurations are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMapConfig {
    pub perturbation: PerturbationConfig,
    pub surrogate: SurrogateConfig,
    pub noise: NoiseConfig,
    /// Permutations per anchor for the sampled Shapley method.
    pub shapley_permutations: usize,
    pub seed: u64,
}

impl Default for GlobalMapConfig {
    fn default() -> Self {
        GlobalMapConfig {
            perturbation: PerturbationConfig::default(),
            surrogate: SurrogateConfig::default(),
            noise: NoiseConfig::default(),
            shapley_permutations: 20,
            seed: 0,
        }
    }
}

// Seed-derivation tags, one per source of randomness.
const TAG_SURROGATE: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_SHAPLEY: u64 = 3;
const TAG_RANDOM: u64 = 4;

/// Explains every anchor row against the model's predicted class, with one
/// derived seed per anchor. Anchors are processed in parallel; the result
/// order (and therefore every downstream aggregate) matches the input order.
pub fn build_explanation_set<M: Predictor + Sync>(
    model: &M,
    anchors: ArrayView2<f64>,
    pcfg: &PerturbationConfig,
    scfg: &SurrogateConfig,
) -> Result<ExplanationSet> {
    if anchors.nrows() == 0 {
        return Err(Error::EmptySet);
    }
    let explanations: Vec<LocalExplanation> = (0..anchors.nrows())
        .into_par_iter()
        .map(|idx| {
            let pcfg_i = PerturbationConfig {
                seed: derive_seed(pcfg.seed, &[idx as u64]),
                ..*pcfg
            };
            explain_instance(anchors.row(idx), model, &pcfg_i, scfg)
        })
        .collect::<Result<Vec<_>>>()?;
    ExplanationSet::from_explanations(anchors.ncols(), explanations)
}

/// One global salience map per requested method, sharing work where
/// possible: NormLIME and the SP-LIME aggregate reuse a single explanation
/// set, and the gradient baselines average per-anchor maps against each
/// anchor's predicted class.
pub fn global_salience_maps<M: Predictor + Sync>(
    model: &M,
    anchors: ArrayView2<f64>,
    methods: &[Method],
    cfg: &GlobalMapConfig,
) -> Result<Vec<SalienceMap>> {
    let scores = method_scores_over_anchors(model, anchors, methods, cfg, 1.0)?;
    Ok(methods
        .iter()
        .zip(scores)
        .map(|(&method, s)| {
            SalienceMap::new(method, Scope::Global, s).with_provenance("", cfg.seed)
        })
        .collect())
}

/// Runs an attribution method over one hidden layer's activation space: the
/// anchors are pushed through the lower layers, and the network above the
/// layer acts as the predictor. Perturbation scales (surrogate sigma, noise
/// sigma) are multiplied by the pooled standard deviation of the activations
/// so the configured scales remain meaningful in activation units.
pub fn salience_for_hidden_features(
    model: &MlpModel,
    anchors: ArrayView2<f64>,
    layer_index: usize,
    method: Method,
    cfg: &GlobalMapConfig,
) -> Result<SalienceMap> {
    if !model.capabilities().hidden_features {
        return Err(Error::UnsupportedCapability("hidden features"));
    }
    let head = model.head_from(layer_index)?;
    if anchors.nrows() == 0 {
        return Err(Error::EmptySet);
    }
    if anchors.ncols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "anchor dimension",
            expected: model.input_dim(),
            got: anchors.ncols(),
        });
    }

    let width = model.layer_sizes()[layer_index + 1];
    let mut activations = Array2::zeros((anchors.nrows(), width));
    for (i, anchor) in anchors.outer_iter().enumerate() {
        let h = model.hidden_features(anchor, layer_index)?;
        activations.row_mut(i).assign(&h);
    }
    let scale = pooled_std(activations.view());
    let sigma_scale = if scale > 0.0 { scale } else { 1.0 };

    let scores =
        method_scores_over_anchors(&head, activations.view(), &[method], cfg, sigma_scale)?
            .pop()
            .expect("one score vector per method");
    Ok(SalienceMap::new(method, Scope::Global, scores).with_provenance("", cfg.seed))
}

/// Population standard deviation over every entry of a matrix.
fn pooled_std(values: ArrayView2<f64>) -> f64 {
    let n = values.len() as f64;
    let mean = values.sum() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Scores per method over a shared anchor sample. `sigma_scale` multiplies
/// the perturbation and noise sigmas (1.0 for raw inputs; the activation
/// spread for hidden features).
fn method_scores_over_anchors<M: Predictor + Sync>(
    model: &M,
    anchors: ArrayView2<f64>,
    methods: &[Method],
    cfg: &GlobalMapConfig,
    sigma_scale: f64,
) -> Result<Vec<Vec<f64>>> {
    if anchors.nrows() == 0 {
        return Err(Error::EmptySet);
    }
    let d = model.input_dim();
    if anchors.ncols() != d {
        return Err(Error::ShapeMismatch {
            what: "anchor dimension",
            expected: d,
            got: anchors.ncols(),
        });
    }

    // one shared explanation set for the surrogate-based methods
    let needs_set = methods
        .iter()
        .any(|m| matches!(m, Method::Normlime | Method::SplimeL2));
    let set = if needs_set {
        let pcfg = PerturbationConfig {
            sigma: cfg.perturbation.sigma * sigma_scale,
            seed: derive_seed(cfg.seed, &[TAG_SURROGATE]),
            ..cfg.perturbation
        };
        Some(build_explanation_set(model, anchors, &pcfg, &cfg.surrogate)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let scores = match method {
            Method::Normlime => normlime(set.as_ref().unwrap())?.scores,
            Method::SplimeL2 => splime_l2(set.as_ref().unwrap())?.scores,
            Method::SmoothgradSq | Method::Vargrad => {
                let ncfg_base = NoiseConfig {
                    sigma: cfg.noise.sigma * sigma_scale,
                    ..cfg.noise
                };
                let per_anchor: Vec<Array1<f64>> = (0..anchors.nrows())
                    .into_par_iter()
                    .map(|idx| {
                        let anchor = anchors.row(idx);
                        let ncfg = NoiseConfig {
                            seed: derive_seed(cfg.seed, &[TAG_NOISE, idx as u64]),
                            ..ncfg_base.clone()
                        };
                        let class = predicted_class(model, anchor)?;
                        match method {
                            Method::SmoothgradSq => smoothgrad_sq(model, anchor, class, &ncfg),
                            _ => vargrad(model, anchor, class, &ncfg),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                mean_of_maps(&per_anchor)
            }
            Method::Shapley => {
                if cfg.shapley_permutations == 0 {
                    return Err(Error::InvalidConfig(
                        "shapley_permutations must be at least 1".into(),
                    ));
                }
                let baseline = anchors.mean_axis(Axis(0)).expect("anchors are non-empty");
                let per_anchor: Vec<Array1<f64>> = (0..anchors.nrows())
                    .into_par_iter()
                    .map(|idx| {
                        let anchor = anchors.row(idx);
                        let class = predicted_class(model, anchor)?;
                        let value =
                            masked_probability_value(model, anchor, baseline.view(), class)?;
                        let phi = shapley_sampled(
                            value,
                            d,
                            cfg.shapley_permutations,
                            derive_seed(cfg.seed, &[TAG_SHAPLEY, idx as u64]),
                        )?;
                        Ok(phi.mapv(f64::abs))
                    })
                    .collect::<Result<Vec<_>>>()?;
                mean_of_maps(&per_anchor)
            }
            Method::Random => random_importance(d, derive_seed(cfg.seed, &[TAG_RANDOM])).to_vec(),
        };
        out.push(scores);
    }
    Ok(out)
}

fn predicted_class<M: Predictor + Sync>(model: &M, x: ArrayView1<f64>) -> Result<usize> {
    let probs = model.predict_proba(x)?;
    Ok(probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0))
}

/// Elementwise mean with shifted accumulation, so averaging identical maps
/// reproduces them exactly.
fn mean_of_maps(maps: &[Array1<f64>]) -> Vec<f64> {
    let d = maps[0].len();
    let n = maps.len();
    let mut out = vec![0.0; d];
    for i in 0..d {
        let first = maps[0][i];
        let mut acc = 0.0;
        for m in maps {
            acc += m[i] - first;
        }
        out[i] = first + acc / n as f64;
    }
    out
}
