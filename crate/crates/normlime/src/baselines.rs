//! Reference attribution methods: gradient-noise baselines (SmoothGrad
//! Squared, VarGrad), Shapley values (exact enumeration and permutation
//! sampling), and random scores.
//!
//! The gradient baselines use shifted accumulation (statistics of
//! `v - v_first` plus `v_first`) so that models with constant gradients come
//! out exact: an affine model yields SmoothGrad² = squared weights and
//! VarGrad = 0 bit-for-bit, not merely approximately.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::salience::{Method, SalienceMap, Scope};

/// Noise settings for the gradient baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub num_noise_samples: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma: 0.3,
            num_noise_samples: 100,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    fn validate(&self) -> Result<()> {
        if self.num_noise_samples < 2 {
            return Err(Error::InvalidConfig(
                "num_noise_samples must be at least 2".into(),
            ));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidConfig("sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// How many instances per class feed a class-average map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAverageConfig {
    pub images_per_class: usize,
    pub seed: u64,
}

impl Default for ClassAverageConfig {
    fn default() -> Self {
        ClassAverageConfig {
            images_per_class: 10,
            seed: 0,
        }
    }
}

/// |gradient| samples at `x + eta` for `num_noise_samples` draws of
/// eta ~ N(0, sigma^2 I); one row per draw.
fn gradient_magnitude_samples(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    class_index: usize,
    ncfg: &NoiseConfig,
) -> Result<Array2<f64>> {
    if !model.capabilities().gradients {
        return Err(Error::UnsupportedCapability("input gradients"));
    }
    ncfg.validate()?;
    let d = model.input_dim();
    if x.len() != d {
        return Err(Error::ShapeMismatch {
            what: "input dimension",
            expected: d,
            got: x.len(),
        });
    }

    let n = ncfg.num_noise_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(ncfg.seed);
    let normal = StandardNormal;
    let mut samples = Array2::zeros((n, d));
    let mut point = x.to_owned();
    for s in 0..n {
        for i in 0..d {
            let noise: f64 = normal.sample(&mut rng);
            point[i] = x[i] + ncfg.sigma * noise;
        }
        let grad = model.gradient_wrt_input(point.view(), class_index)?;
        for i in 0..d {
            samples[[s, i]] = grad[i].abs();
        }
    }
    Ok(samples)
}

/// SmoothGrad Squared: the Monte-Carlo mean of |d f(x+eta) / d c_k|^2 per
/// feature. Nonnegative; deterministic given the seed.
pub fn smoothgrad_sq(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    class_index: usize,
    ncfg: &NoiseConfig,
) -> Result<Array1<f64>> {
    let samples = gradient_magnitude_samples(model, x, class_index, ncfg)?;
    let n = samples.nrows();
    let d = samples.ncols();
    let mut out = Array1::zeros(d);
    for i in 0..d {
        let first = samples[[0, i]] * samples[[0, i]];
        let mut acc = 0.0;
        for s in 0..n {
            let sq = samples[[s, i]] * samples[[s, i]];
            acc += sq - first;
        }
        out[i] = first + acc / n as f64;
    }
    Ok(out)
}

/// VarGrad: unbiased per-feature sample variance of |gradient| under input
/// noise. Exactly zero for any model with constant gradient (e.g. affine).
pub fn vargrad(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    class_index: usize,
    ncfg: &NoiseConfig,
) -> Result<Array1<f64>> {
    let samples = gradient_magnitude_samples(model, x, class_index, ncfg)?;
    let n = samples.nrows();
    let d = samples.ncols();
    let mut out = Array1::zeros(d);
    for i in 0..d {
        let first = samples[[0, i]];
        let mut mean_shifted = 0.0;
        for s in 0..n {
            mean_shifted += samples[[s, i]] - first;
        }
        mean_shifted /= n as f64;
        let mut var = 0.0;
        for s in 0..n {
            let dev = (samples[[s, i]] - first) - mean_shifted;
            var += dev * dev;
        }
        out[i] = var / (n - 1) as f64;
    }
    Ok(out)
}

/// A class-average salience map plus how it was sampled.
#[derive(Clone, Debug)]
pub struct ClassAverage {
    pub map: SalienceMap,
    /// Instances actually averaged.
    pub sampled: usize,
    /// True when the class had fewer instances than requested and all of
    /// them were used.
    pub undersampled: bool,
}

/// Averages a per-instance attribution over a seeded sample of class-`y`
/// instances. Classes smaller than `images_per_class` contribute everything
/// they have, flagged via [`ClassAverage::undersampled`].
pub fn class_average_map<F>(
    dataset: &Dataset,
    y: usize,
    method: Method,
    per_instance: F,
    cacfg: &ClassAverageConfig,
) -> Result<ClassAverage>
where
    F: Fn(ArrayView1<f64>) -> Result<Array1<f64>>,
{
    if cacfg.images_per_class == 0 {
        return Err(Error::InvalidConfig(
            "images_per_class must be at least 1".into(),
        ));
    }
    let mut indices = dataset.class_indices(y);
    if indices.is_empty() {
        return Err(Error::EmptyClass { class: y });
    }
    let undersampled = indices.len() < cacfg.images_per_class;
    if !undersampled {
        let mut rng = ChaCha8Rng::seed_from_u64(cacfg.seed);
        indices.shuffle(&mut rng);
        indices.truncate(cacfg.images_per_class);
        indices.sort_unstable();
    }

    let mut maps = Vec::with_capacity(indices.len());
    for &idx in &indices {
        let map = per_instance(dataset.instances.row(idx))?;
        if let Some(prev) = maps.first() {
            let prev: &Array1<f64> = prev;
            if map.len() != prev.len() {
                return Err(Error::ShapeMismatch {
                    what: "per-instance map length",
                    expected: prev.len(),
                    got: map.len(),
                });
            }
        }
        maps.push(map);
    }

    // shifted mean keeps "constant method -> that constant" exact
    let d = maps[0].len();
    let n = maps.len();
    let mut scores = vec![0.0f64; d];
    for i in 0..d {
        let first = maps[0][i];
        let mut acc = 0.0;
        for m in &maps {
            acc += m[i] - first;
        }
        scores[i] = first + acc / n as f64;
    }

    Ok(ClassAverage {
        map: SalienceMap::new(method, Scope::Class(y), scores),
        sampled: n,
        undersampled,
    })
}

pub const SHAPLEY_EXACT_MAX_FEATURES: usize = 15;

/// Exact Shapley values of a set function by full subset enumeration:
/// phi_i = sum over S not containing i of |S|!(d-|S|-1)!/d! * (v(S+i) - v(S)).
/// Exponential in `d`; refused above 15 features.
pub fn shapley_exact<F>(value: F, d: usize) -> Result<Array1<f64>>
where
    F: Fn(&[bool]) -> f64,
{
    if d > SHAPLEY_EXACT_MAX_FEATURES {
        return Err(Error::TooManyFeatures {
            d,
            max: SHAPLEY_EXACT_MAX_FEATURES,
        });
    }
    if d == 0 {
        return Ok(Array1::zeros(0));
    }

    // tabulate v over all 2^d coalitions
    let size = 1usize << d;
    let mut table = Vec::with_capacity(size);
    let mut members = vec![false; d];
    for mask in 0..size {
        for (i, m) in members.iter_mut().enumerate() {
            *m = mask & (1 << i) != 0;
        }
        table.push(value(&members));
    }

    // |S|! (d-|S|-1)! / d! per coalition size (all exact integers in f64)
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - 1 - s] / fact[d]).collect();

    let mut phi = Array1::zeros(d);
    for i in 0..d {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..size {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            acc += weight[s] * (table[mask | bit] - table[mask]);
        }
        phi[i] = acc;
    }
    Ok(phi)
}

/// Unbiased Monte-Carlo Shapley estimate: average marginal contributions
/// along `num_permutations` uniformly sampled feature orderings.
pub fn shapley_sampled<F>(
    value: F,
    d: usize,
    num_permutations: usize,
    seed: u64,
) -> Result<Array1<f64>>
where
    F: Fn(&[bool]) -> f64,
{
    if num_permutations == 0 {
        return Err(Error::InvalidConfig(
            "num_permutations must be at least 1".into(),
        ));
    }
    if d == 0 {
        return Ok(Array1::zeros(0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    let mut members = vec![false; d];
    let mut phi = Array1::zeros(d);
    for _ in 0..num_permutations {
        order.shuffle(&mut rng);
        members.fill(false);
        let mut prev = value(&members);
        for &i in &order {
            members[i] = true;
            let next = value(&members);
            phi[i] += next - prev;
            prev = next;
        }
    }
    phi /= num_permutations as f64;
    Ok(phi)
}

/// A coalition value function for feature attribution on a classifier:
/// v(S) = target-class probability with features outside S replaced by
/// `baseline` (typically dataset feature means).
pub fn masked_probability_value<'a>(
    model: &'a dyn Predictor,
    x: ArrayView1<'a, f64>,
    baseline: ArrayView1<'a, f64>,
    target_class: usize,
) -> Result<impl Fn(&[bool]) -> f64 + 'a> {
    let d = model.input_dim();
    if x.len() != d || baseline.len() != d {
        return Err(Error::ShapeMismatch {
            what: "value-function input",
            expected: d,
            got: if x.len() != d { x.len() } else { baseline.len() },
        });
    }
    if target_class >= model.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "target class {target_class} out of range for {} classes",
            model.num_classes()
        )));
    }
    let buffer = std::cell::RefCell::new(Array1::zeros(d));
    Ok(move |members: &[bool]| {
        let mut z = buffer.borrow_mut();
        for i in 0..d {
            z[i] = if members[i] { x[i] } else { baseline[i] };
        }
        model
            .predict_proba(z.view())
            .map(|p| p[target_class])
            .unwrap_or(f64::NAN)
    })
}

/// I.i.d. uniform [0,1) scores; the null baseline.
pub fn random_importance(d: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(d, |_| rng.random::<f64>())
}
