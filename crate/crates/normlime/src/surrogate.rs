//! Local surrogate models: sample a Gaussian neighborhood of an anchor, query
//! the black box, and fit a sparse weighted linear approximation in two
//! stages (LASSO feature selection, then least-squares refit on the top K).

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, Predictor};

/// How the neighborhood around an anchor is sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub num_samples: usize,
    /// Perturbation standard deviation, in normalized feature units.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            num_samples: 1000,
            sigma: 0.3,
            seed: 0,
        }
    }
}

/// What the local regression predicts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTarget {
    /// Probability of the anchor's predicted class (or an explicit override).
    #[default]
    PredictedClassProbability,
}

/// Sparsity and regularization settings for the surrogate fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Upper limit on the number of nonzero surrogate weights.
    pub k: usize,
    /// Fixed LASSO penalty; `None` walks a 20-point logarithmic grid and picks
    /// the smallest penalty that keeps at most 3k features alive.
    pub lasso_lambda: Option<f64>,
    pub target: RegressionTarget,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            k: 20,
            lasso_lambda: None,
            target: RegressionTarget::PredictedClassProbability,
        }
    }
}

impl SurrogateConfig {
    /// Default config with a different sparsity cap; handy in tests and
    /// examples.
    pub fn default_with_k(k: usize) -> Self {
        SurrogateConfig {
            k,
            ..SurrogateConfig::default()
        }
    }
}

/// The sampled neighborhood: perturbed points, black-box targets, and
/// proximity weights.
#[derive(Clone, Debug)]
pub struct LocalDataset {
    /// One perturbed instance per row.
    pub points: Array2<f64>,
    /// Target-class probability at each point.
    pub targets: Array1<f64>,
    /// Proximity weight pi(x') of each point.
    pub pi_weights: Array1<f64>,
}

impl LocalDataset {
    pub fn from_parts(
        points: Array2<f64>,
        targets: Array1<f64>,
        pi_weights: Array1<f64>,
    ) -> Result<Self> {
        if targets.len() != points.nrows() {
            return Err(Error::ShapeMismatch {
                what: "local targets",
                expected: points.nrows(),
                got: targets.len(),
            });
        }
        if pi_weights.len() != points.nrows() {
            return Err(Error::ShapeMismatch {
                what: "local weights",
                expected: points.nrows(),
                got: pi_weights.len(),
            });
        }
        if pi_weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidConfig(
                "pi weights must be finite and nonnegative".into(),
            ));
        }
        Ok(LocalDataset {
            points,
            targets,
            pi_weights,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Draws `num_samples` Gaussian perturbations of `anchor`, evaluates the
/// model's `target_class` probability at each, and attaches proximity
/// weights exp(-||x'-x0||^2 / (2 sigma_k^2)) with sigma_k = sigma * sqrt(d).
///
/// With sigma = 0 every point equals the anchor and every weight is 1.
pub fn sample_locality(
    anchor: ArrayView1<f64>,
    pcfg: &PerturbationConfig,
    model: &dyn Predictor,
    target_class: usize,
) -> Result<LocalDataset> {
    let d = model.input_dim();
    if anchor.len() != d {
        return Err(Error::ShapeMismatch {
            what: "anchor dimension",
            expected: d,
            got: anchor.len(),
        });
    }
    if target_class >= model.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "target class {target_class} out of range for {} classes",
            model.num_classes()
        )));
    }
    if pcfg.num_samples == 0 {
        return Err(Error::InvalidConfig("num_samples must be at least 1".into()));
    }
    if !pcfg.sigma.is_finite() || pcfg.sigma < 0.0 {
        return Err(Error::InvalidConfig("sigma must be finite and >= 0".into()));
    }

    let n = pcfg.num_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(pcfg.seed);
    let normal = StandardNormal;
    let mut points = Array2::zeros((n, d));
    let mut pi_weights = Array1::ones(n);
    let sigma_kernel_sq = pcfg.sigma * pcfg.sigma * d as f64;
    for s in 0..n {
        let mut dist_sq = 0.0;
        for i in 0..d {
            let noise: f64 = normal.sample(&mut rng);
            let eta = pcfg.sigma * noise;
            points[[s, i]] = anchor[i] + eta;
            dist_sq += eta * eta;
        }
        if pcfg.sigma > 0.0 {
            pi_weights[s] = (-dist_sq / (2.0 * sigma_kernel_sq)).exp();
        }
    }

    let probs = model.predict_proba_batch(points.view())?;
    let targets = probs.column(target_class).to_owned();
    LocalDataset::from_parts(points, targets, pi_weights)
}

/// Result of a weighted LASSO fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    /// Coordinate-descent sweeps actually used.
    pub sweeps: usize,
    /// False when the sweep cap was hit before the tolerance.
    pub converged: bool,
}

impl LassoFit {
    pub fn num_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&v| v != 0.0).count()
    }
}

const CD_TOLERANCE: f64 = 1e-8;
const CD_MAX_SWEEPS: usize = 10_000;

/// Feature-major design cache shared between penalty values on one locality.
struct Design {
    /// d x n, row i = feature i across samples.
    feats: Array2<f64>,
    /// feats with each sample scaled by its pi weight.
    wfeats: Array2<f64>,
    col_sq: Array1<f64>,
    targets: Array1<f64>,
    pi: Array1<f64>,
    w_total: f64,
}

impl Design {
    fn new(ds: &LocalDataset) -> Result<Self> {
        if ds.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        let w_total = ds.pi_weights.sum();
        if w_total <= 0.0 {
            return Err(Error::DegenerateWeights);
        }
        let feats = ds.points.t().as_standard_layout().to_owned();
        let wfeats = &feats * &ds.pi_weights; // broadcasts over rows
        let col_sq = Array1::from_shape_fn(feats.nrows(), |i| {
            wfeats.row(i).dot(&feats.row(i))
        });
        Ok(Design {
            feats,
            wfeats,
            col_sq,
            targets: ds.targets.clone(),
            pi: ds.pi_weights.clone(),
            w_total,
        })
    }

    fn dim(&self) -> usize {
        self.feats.nrows()
    }

    fn weighted_target_mean(&self) -> f64 {
        self.pi.dot(&self.targets) / self.w_total
    }

    /// Smallest penalty that zeroes every coefficient (given intercept at the
    /// weighted target mean).
    fn lambda_max(&self) -> f64 {
        let ybar = self.weighted_target_mean();
        let centered = &self.targets - ybar;
        let mut max_corr: f64 = 0.0;
        for i in 0..self.dim() {
            max_corr = max_corr.max(self.wfeats.row(i).dot(&centered).abs());
        }
        2.0 * max_corr / self.w_total
    }

    /// Cyclic coordinate descent on
    ///   (1/W) sum_j pi_j (y_j - b0 - b.x_j)^2 + lambda * ||b||_1,
    /// soft-thresholding one coordinate at a time. `beta`/`intercept` are
    /// warm-start state, updated in place. Returns (sweeps, converged).
    fn descend(&self, lambda: f64, beta: &mut Array1<f64>, intercept: &mut f64) -> (usize, bool) {
        let threshold = lambda * self.w_total / 2.0;
        // full residual r = y - b0 - X.b for the warm-start state
        let mut residual = &self.targets - self.feats.t().dot(beta) - *intercept;
        for sweep in 1..=CD_MAX_SWEEPS {
            let mut max_delta = 0.0f64;

            let d0 = self.pi.dot(&residual) / self.w_total;
            *intercept += d0;
            residual -= d0;
            max_delta = max_delta.max(d0.abs());

            for i in 0..self.dim() {
                let a = self.col_sq[i];
                if a == 0.0 {
                    continue;
                }
                let rho = self.wfeats.row(i).dot(&residual) + beta[i] * a;
                let new = soft_threshold(rho, threshold) / a;
                let delta = new - beta[i];
                if delta != 0.0 {
                    residual.scaled_add(-delta, &self.feats.row(i));
                    beta[i] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }

            if max_delta < CD_TOLERANCE {
                return (sweep, true);
            }
        }
        (CD_MAX_SWEEPS, false)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes the pi-weighted mean squared error plus `lambda * ||beta||_1`
/// by cyclic coordinate descent (intercept unpenalized). Converges when the
/// largest coefficient change in a sweep drops below 1e-8, capped at 10,000
/// sweeps.
pub fn fit_weighted_lasso(ds: &LocalDataset, lambda: f64) -> Result<LassoFit> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidConfig("lambda must be finite and >= 0".into()));
    }
    let design = Design::new(ds)?;
    let mut beta = Array1::zeros(design.dim());
    let mut intercept = design.weighted_target_mean();
    let (sweeps, converged) = design.descend(lambda, &mut beta, &mut intercept);
    Ok(LassoFit {
        coefficients: beta,
        intercept,
        sweeps,
        converged,
    })
}

/// Walks a 20-point logarithmic penalty grid downward from `lambda_max`
/// (warm-starting each step) and returns the fit at the smallest penalty
/// with at most `3k` surviving features, together with the penalty used.
pub fn fit_weighted_lasso_auto(ds: &LocalDataset, k: usize) -> Result<(LassoFit, f64)> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let design = Design::new(ds)?;
    let lambda_max = design.lambda_max();
    if lambda_max <= f64::MIN_POSITIVE {
        // constant target: plain least squares, which still shrinks to the mean
        let fit = fit_weighted_lasso(ds, 0.0)?;
        return Ok((fit, 0.0));
    }

    // Two decades keeps the densest grid solution at lambda_max/100: deep
    // enough to free every feature with real explanatory power, shallow
    // enough that near-unpenalized fits don't flood the selection with
    // sampling noise that the later unpenalized refit would inflate.
    const GRID_POINTS: usize = 20;
    const GRID_DECADES: f64 = 2.0;
    let mut beta = Array1::zeros(design.dim());
    let mut intercept = design.weighted_target_mean();
    let mut best: Option<(LassoFit, f64)> = None;
    for t in 0..GRID_POINTS {
        let lambda =
            lambda_max * 10f64.powf(-GRID_DECADES * t as f64 / (GRID_POINTS - 1) as f64);
        let (sweeps, converged) = design.descend(lambda, &mut beta, &mut intercept);
        let fit = LassoFit {
            coefficients: beta.clone(),
            intercept,
            sweeps,
            converged,
        };
        let nnz = fit.num_nonzero();
        if nnz <= 3 * k {
            best = Some((fit, lambda));
        } else {
            break; // grid is ordered; smaller penalties only get denser
        }
    }
    Ok(best.expect("lambda_max yields the all-zero fit, which always qualifies"))
}

/// One sparse linear local explanation.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalExplanation {
    pub anchor: Array1<f64>,
    /// argmax of the model's probabilities at the anchor.
    pub anchor_label: usize,
    /// Class whose probability the surrogate regresses.
    pub target_class: usize,
    /// Sparse weights, ascending by feature index, none exactly zero.
    pub weights: Vec<FeatureWeight>,
    pub intercept: f64,
    /// True when the restricted least-squares system was singular and a
    /// 1e-8 ridge was added.
    pub ridge_fallback: bool,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub index: usize,
    pub value: f64,
}

impl LocalExplanation {
    /// Weight on feature `i`, zero if unused.
    pub fn weight_for(&self, i: usize) -> f64 {
        self.weights
            .binary_search_by_key(&i, |fw| fw.index)
            .map(|pos| self.weights[pos].value)
            .unwrap_or(0.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|fw| fw.value.abs()).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.anchor.len()
    }

    /// Serializable form with identification fields attached.
    pub fn record(&self, anchor_id: u64, config_digest: &str) -> LocalExplanationRecord {
        LocalExplanationRecord {
            anchor_id,
            anchor_label: self.anchor_label,
            target_class: self.target_class,
            intercept: self.intercept,
            weights: self.weights.clone(),
            ridge_fallback: self.ridge_fallback,
            seed: self.seed,
            config_digest: config_digest.to_string(),
        }
    }
}

/// JSON artifact for one explanation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanationRecord {
    pub anchor_id: u64,
    pub anchor_label: usize,
    pub target_class: usize,
    pub intercept: f64,
    pub weights: Vec<FeatureWeight>,
    pub ridge_fallback: bool,
    pub seed: u64,
    pub config_digest: String,
}

/// Explains the model's predicted class at `anchor`.
pub fn explain_instance(
    anchor: ArrayView1<f64>,
    model: &dyn Predictor,
    pcfg: &PerturbationConfig,
    scfg: &SurrogateConfig,
) -> Result<LocalExplanation> {
    explain(anchor, model, pcfg, scfg, None)
}

/// Explains an explicit target class instead of the predicted one.
pub fn explain_instance_for_class(
    anchor: ArrayView1<f64>,
    model: &dyn Predictor,
    pcfg: &PerturbationConfig,
    scfg: &SurrogateConfig,
    target_class: usize,
) -> Result<LocalExplanation> {
    explain(anchor, model, pcfg, scfg, Some(target_class))
}

fn explain(
    anchor: ArrayView1<f64>,
    model: &dyn Predictor,
    pcfg: &PerturbationConfig,
    scfg: &SurrogateConfig,
    target_override: Option<usize>,
) -> Result<LocalExplanation> {
    if !model.capabilities().probabilities {
        return Err(Error::UnsupportedCapability("probabilities"));
    }
    let d = model.input_dim();
    if scfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if scfg.k > d {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds the input dimension {d}",
            scfg.k
        )));
    }
    if pcfg.num_samples < scfg.k + 1 {
        return Err(Error::InvalidConfig(format!(
            "num_samples = {} is too small to fit {} coefficients (need k+1)",
            pcfg.num_samples, scfg.k
        )));
    }

    let anchor_label = argmax(model.predict_proba(anchor)?.view());
    let target_class = match target_override {
        Some(c) => {
            if c >= model.num_classes() {
                return Err(Error::InvalidConfig(format!(
                    "target class {c} out of range for {} classes",
                    model.num_classes()
                )));
            }
            c
        }
        None => anchor_label,
    };

    let ds = sample_locality(anchor, pcfg, model, target_class)?;

    // Stage 1: LASSO over the full feature set.
    let stage1 = match scfg.lasso_lambda {
        Some(lambda) => fit_weighted_lasso(&ds, lambda)?,
        None => fit_weighted_lasso_auto(&ds, scfg.k)?.0,
    };

    // Keep the K largest |coefficient|s (nonzero only); lower index wins ties.
    let mut candidates: Vec<usize> = (0..d).filter(|&i| stage1.coefficients[i] != 0.0).collect();
    candidates.sort_by(|&a, &b| {
        stage1.coefficients[b]
            .abs()
            .partial_cmp(&stage1.coefficients[a].abs())
            .expect("finite coefficients")
            .then(a.cmp(&b))
    });
    candidates.truncate(scfg.k);
    candidates.sort_unstable();

    if candidates.is_empty() {
        return Ok(LocalExplanation {
            anchor: anchor.to_owned(),
            anchor_label,
            target_class,
            weights: Vec::new(),
            intercept: stage1.intercept,
            ridge_fallback: false,
            seed: pcfg.seed,
        });
    }

    // Stage 2: unpenalized weighted least squares on the selected support.
    let (coefs, intercept, ridge_fallback) = wls_refit(&ds, &candidates)?;
    let weights = candidates
        .iter()
        .zip(coefs.iter())
        .filter(|(_, &v)| v != 0.0)
        .map(|(&index, &value)| FeatureWeight { index, value })
        .collect();

    Ok(LocalExplanation {
        anchor: anchor.to_owned(),
        anchor_label,
        target_class,
        weights,
        intercept,
        ridge_fallback,
        seed: pcfg.seed,
    })
}

/// Weighted least squares restricted to `support` (plus an intercept).
/// Falls back to a 1e-8 ridge when the normal equations are singular.
fn wls_refit(ds: &LocalDataset, support: &[usize]) -> Result<(Array1<f64>, f64, bool)> {
    let m = support.len() + 1; // + intercept, kept in the last slot
    let n = ds.n();
    let mut a = Array2::zeros((m, m));
    let mut b = Array1::zeros(m);
    let mut phi = vec![0.0; m];
    for j in 0..n {
        let w = ds.pi_weights[j];
        if w == 0.0 {
            continue;
        }
        for (s, &idx) in support.iter().enumerate() {
            phi[s] = ds.points[[j, idx]];
        }
        phi[m - 1] = 1.0;
        let y = ds.targets[j];
        for r in 0..m {
            let wr = w * phi[r];
            b[r] += wr * y;
            for c in r..m {
                a[[r, c]] += wr * phi[c];
            }
        }
    }
    // symmetrize the lower triangle
    for r in 0..m {
        for c in 0..r {
            a[[r, c]] = a[[c, r]];
        }
    }

    match solve_linear(a.clone(), b.clone()) {
        Some(x) => Ok((x.slice(ndarray::s![..m - 1]).to_owned(), x[m - 1], false)),
        None => {
            for i in 0..m {
                a[[i, i]] += 1e-8;
            }
            let x = solve_linear(a, b).ok_or_else(|| {
                Error::InvalidSalience("restricted system singular even with ridge".into())
            })?;
            Ok((x.slice(ndarray::s![..m - 1]).to_owned(), x[m - 1], true))
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` on (near-)singularity.
fn solve_linear(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let m = b.len();
    let scale = a.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1.0);
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&r1, &r2| a[[r1, col]].abs().partial_cmp(&a[[r2, col]].abs()).unwrap())
            .unwrap();
        if a[[pivot_row, col]].abs() <= 1e-12 * scale {
            return None;
        }
        if pivot_row != col {
            for c in 0..m {
                a.swap([pivot_row, c], [col, c]);
            }
            b.swap(pivot_row, col);
        }
        for r in col + 1..m {
            let factor = a[[r, col]] / a[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for c in col..m {
                let v = a[[col, c]];
                a[[r, c]] -= factor * v;
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = Array1::zeros(m);
    for r in (0..m).rev() {
        let mut acc = b[r];
        for c in r + 1..m {
            acc -= a[[r, c]] * x[c];
        }
        x[r] = acc / a[[r, r]];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::{Capabilities, MlpModel};
    use ndarray::array;
    use rand::Rng;

    /// Test double whose "probability" of class 1 is a plain affine function,
    /// so the surrogate should recover the coefficients exactly.
    struct AffineProbe {
        w: Array1<f64>,
        b: f64,
    }

    impl Predictor for AffineProbe {
        fn input_dim(&self) -> usize {
            self.w.len()
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                probabilities: true,
                gradients: false,
                hidden_features: false,
            }
        }
        fn predict_proba(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
            let p1 = self.w.dot(&x) + self.b;
            Ok(array![1.0 - p1, p1])
        }
    }

    fn probe(w: Vec<f64>, b: f64) -> AffineProbe {
        AffineProbe {
            w: Array1::from_vec(w),
            b,
        }
    }

    #[test]
    fn sigma_zero_collapses_to_the_anchor() {
        let model = MlpModel::zeros(&[3, 2]).unwrap();
        let anchor = array![0.25, 0.5, 0.75];
        let pcfg = PerturbationConfig {
            num_samples: 7,
            sigma: 0.0,
            seed: 3,
        };
        let ds = sample_locality(anchor.view(), &pcfg, &model, 0).unwrap();
        assert_eq!(ds.n(), 7);
        for row in ds.points.rows() {
            assert_eq!(row, anchor.view());
        }
        assert!(ds.pi_weights.iter().all(|&w| w == 1.0));
        // zero model is constant: every target is the uniform probability
        assert!(ds.targets.iter().all(|&t| t == 0.5));
    }

    #[test]
    fn sample_mean_stays_near_the_anchor() {
        let model = MlpModel::zeros(&[3, 2]).unwrap();
        let anchor = array![0.1, -0.4, 2.0];
        let pcfg = PerturbationConfig {
            num_samples: 1000,
            sigma: 0.3,
            seed: 11,
        };
        let ds = sample_locality(anchor.view(), &pcfg, &model, 1).unwrap();
        let mean = ds.points.mean_axis(ndarray::Axis(0)).unwrap();
        let bound = 5.0 * pcfg.sigma / (pcfg.num_samples as f64).sqrt();
        for i in 0..3 {
            assert!(
                (mean[i] - anchor[i]).abs() <= bound,
                "coordinate {i}: mean {} vs anchor {}",
                mean[i],
                anchor[i]
            );
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = MlpModel::zeros(&[4, 3]).unwrap();
        let anchor = array![0.0, 1.0, 0.5, 0.25];
        let pcfg = PerturbationConfig {
            num_samples: 50,
            sigma: 0.2,
            seed: 42,
        };
        let a = sample_locality(anchor.view(), &pcfg, &model, 2).unwrap();
        let b = sample_locality(anchor.view(), &pcfg, &model, 2).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.pi_weights, b.pi_weights);
    }

    /// Independent normal-equations solve used as the oracle for LASSO at
    /// lambda = 0 (intercept handled by augmenting with a ones column).
    fn ols_oracle(ds: &LocalDataset) -> (Vec<f64>, f64) {
        let n = ds.n();
        let d = ds.dim();
        let m = d + 1;
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for j in 0..n {
            let w = ds.pi_weights[j];
            let mut phi = Vec::with_capacity(m);
            for i in 0..d {
                phi.push(ds.points[[j, i]]);
            }
            phi.push(1.0);
            for r in 0..m {
                b[r] += w * phi[r] * ds.targets[j];
                for c in 0..m {
                    a[r][c] += w * phi[r] * phi[c];
                }
            }
        }
        // plain Gauss-Jordan without pivoting tricks (test sizes are tiny)
        for col in 0..m {
            let pivot = (col..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            let p = a[col][col];
            for v in a[col].iter_mut() {
                *v /= p;
            }
            b[col] /= p;
            for r in 0..m {
                if r != col && a[r][col] != 0.0 {
                    let f = a[r][col];
                    for c in 0..m {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        (b[..d].to_vec(), b[d])
    }

    fn synthetic_linear_locality(seed: u64, beta: &[f64], intercept: f64) -> LocalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let n = 80;
        let d = beta.len();
        let points = Array2::from_shape_fn((n, d), |_| {
            let v: f64 = normal.sample(&mut rng);
            v
        });
        let targets = Array1::from_shape_fn(n, |j| {
            let mut acc = intercept;
            for i in 0..d {
                acc += beta[i] * points[[j, i]];
            }
            acc
        });
        let pi = Array1::from_shape_fn(n, |_| 0.1 + rng.random_range(0.0..1.0));
        LocalDataset::from_parts(points, targets, pi).unwrap()
    }

    #[test]
    fn lasso_at_zero_matches_normal_equations() {
        let beta = [1.5, -0.75, 0.0, 2.25, 0.4];
        let ds = synthetic_linear_locality(5, &beta, 0.3);
        let fit = fit_weighted_lasso(&ds, 0.0).unwrap();
        let (oracle_beta, oracle_b0) = ols_oracle(&ds);
        for i in 0..beta.len() {
            assert!(
                (fit.coefficients[i] - oracle_beta[i]).abs() <= 1e-8,
                "feature {i}: cd {} vs oracle {}",
                fit.coefficients[i],
                oracle_beta[i]
            );
            assert!((fit.coefficients[i] - beta[i]).abs() <= 1e-6);
        }
        assert!((fit.intercept - oracle_b0).abs() <= 1e-8);
        assert!(fit.converged);
    }

    #[test]
    fn huge_lambda_kills_every_coefficient() {
        let ds = synthetic_linear_locality(9, &[2.0, -1.0, 0.5], -0.2);
        let fit = fit_weighted_lasso(&ds, 1e9).unwrap();
        assert_eq!(fit.num_nonzero(), 0);
        // with no active features the intercept is the weighted target mean
        let ybar = ds.pi_weights.dot(&ds.targets) / ds.pi_weights.sum();
        assert!((fit.intercept - ybar).abs() <= 1e-10);
    }

    #[test]
    fn duplicating_every_sample_changes_nothing() {
        let ds = synthetic_linear_locality(13, &[0.8, -0.3, 1.1], 0.5);
        let doubled = LocalDataset::from_parts(
            ndarray::concatenate(ndarray::Axis(0), &[ds.points.view(), ds.points.view()]).unwrap(),
            ndarray::concatenate(ndarray::Axis(0), &[ds.targets.view(), ds.targets.view()])
                .unwrap(),
            ndarray::concatenate(
                ndarray::Axis(0),
                &[ds.pi_weights.view(), ds.pi_weights.view()],
            )
            .unwrap(),
        )
        .unwrap();
        let lambda = 0.05;
        let single = fit_weighted_lasso(&ds, lambda).unwrap();
        let double = fit_weighted_lasso(&doubled, lambda).unwrap();
        for i in 0..3 {
            assert!(
                (single.coefficients[i] - double.coefficients[i]).abs() <= 1e-9,
                "feature {i}"
            );
        }
        assert!((single.intercept - double.intercept).abs() <= 1e-9);
    }

    #[test]
    fn single_feature_soft_threshold_closed_form() {
        // centered single feature: beta = S(sum(pi x y), lambda W / 2) / sum(pi x^2)
        let points = array![[-1.0], [1.0], [-2.0], [2.0]];
        let targets = array![-2.0, 2.0, -4.0, 4.0];
        let pi = array![1.0, 1.0, 1.0, 1.0];
        let ds = LocalDataset::from_parts(points, targets, pi).unwrap();
        let w_total = 4.0;
        let sum_xy = 20.0; // 2 + 2 + 8 + 8
        let sum_xx = 10.0;
        for lambda in [0.0, 0.5, 1.0, 3.9] {
            let expected = soft_threshold(sum_xy, lambda * w_total / 2.0) / sum_xx;
            let fit = fit_weighted_lasso(&ds, lambda).unwrap();
            assert!(
                (fit.coefficients[0] - expected).abs() <= 1e-9,
                "lambda {lambda}: got {} expected {expected}",
                fit.coefficients[0]
            );
        }
        // a lambda beyond the kill point zeroes it exactly
        let fit = fit_weighted_lasso(&ds, 10.1).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
    }

    #[test]
    fn all_zero_weights_are_degenerate() {
        let ds = LocalDataset::from_parts(
            array![[1.0], [2.0]],
            array![1.0, 2.0],
            array![0.0, 0.0],
        )
        .unwrap();
        assert!(matches!(
            fit_weighted_lasso(&ds, 0.1).unwrap_err(),
            Error::DegenerateWeights
        ));
    }

    #[test]
    fn explain_recovers_a_sparse_linear_model() {
        // 10 features, 4 truly active
        let mut w = vec![0.0; 10];
        w[1] = 0.6;
        w[4] = -0.4;
        w[7] = 0.25;
        w[9] = 0.1;
        let model = probe(w.clone(), 0.3);
        let anchor = Array1::from_elem(10, 0.5);
        let pcfg = PerturbationConfig {
            num_samples: 400,
            sigma: 0.3,
            seed: 17,
        };
        let scfg = SurrogateConfig {
            k: 4,
            lasso_lambda: Some(1e-7),
            target: RegressionTarget::PredictedClassProbability,
        };
        let expl = explain_instance_for_class(anchor.view(), &model, &pcfg, &scfg, 1).unwrap();
        let support: Vec<usize> = expl.weights.iter().map(|fw| fw.index).collect();
        assert_eq!(support, vec![1, 4, 7, 9]);
        for fw in &expl.weights {
            assert!(
                (fw.value - w[fw.index]).abs() <= 1e-3,
                "feature {}: {} vs {}",
                fw.index,
                fw.value,
                w[fw.index]
            );
        }
        assert!(!expl.ridge_fallback);
    }

    #[test]
    fn constant_model_yields_an_empty_explanation() {
        let model = probe(vec![0.0; 6], 0.42);
        let anchor = Array1::zeros(6);
        let pcfg = PerturbationConfig {
            num_samples: 100,
            sigma: 0.3,
            seed: 2,
        };
        let scfg = SurrogateConfig::default_with_k(3);
        let expl = explain_instance_for_class(anchor.view(), &model, &pcfg, &scfg, 1).unwrap();
        assert!(expl.weights.is_empty());
        assert!((expl.intercept - 0.42).abs() <= 1e-12);
    }

    #[test]
    fn full_k_at_zero_lambda_equals_weighted_least_squares() {
        let model = probe(vec![0.3, -0.8, 0.5], 0.1);
        let anchor = array![0.2, 0.4, 0.6];
        let pcfg = PerturbationConfig {
            num_samples: 200,
            sigma: 0.25,
            seed: 23,
        };
        let scfg = SurrogateConfig {
            k: 3,
            lasso_lambda: Some(0.0),
            target: RegressionTarget::PredictedClassProbability,
        };
        let expl = explain_instance_for_class(anchor.view(), &model, &pcfg, &scfg, 1).unwrap();
        let ds = sample_locality(anchor.view(), &pcfg, &model, 1).unwrap();
        let (oracle_beta, oracle_b0) = ols_oracle(&ds);
        for (i, want) in oracle_beta.iter().enumerate().take(3) {
            assert!((expl.weight_for(i) - want).abs() <= 1e-8, "feature {i}");
        }
        assert!((expl.intercept - oracle_b0).abs() <= 1e-8);
    }

    #[test]
    fn surrogate_beats_the_best_constant_predictor() {
        // weighted R^2 of the surrogate >= that of the constant model
        for trial in 0..10u64 {
            let model = MlpModel::new(&[6, 10, 3], 100 + trial).unwrap();
            let anchor = Array1::from_shape_fn(6, |i| 0.1 * (i as f64) + 0.05 * trial as f64);
            let pcfg = PerturbationConfig {
                num_samples: 150,
                sigma: 0.3,
                seed: trial,
            };
            let scfg = SurrogateConfig::default_with_k(4);
            let expl = explain_instance(anchor.view(), &model, &pcfg, &scfg).unwrap();
            let ds = sample_locality(anchor.view(), &pcfg, &model, expl.target_class).unwrap();

            let ybar = ds.pi_weights.dot(&ds.targets) / ds.pi_weights.sum();
            let mut sse_model = 0.0;
            let mut sse_const = 0.0;
            for j in 0..ds.n() {
                let mut pred = expl.intercept;
                for fw in &expl.weights {
                    pred += fw.value * ds.points[[j, fw.index]];
                }
                sse_model += ds.pi_weights[j] * (ds.targets[j] - pred).powi(2);
                sse_const += ds.pi_weights[j] * (ds.targets[j] - ybar).powi(2);
            }
            assert!(
                sse_model <= sse_const + 1e-9,
                "trial {trial}: {sse_model} > {sse_const}"
            );
        }
    }

    #[test]
    fn explanations_are_bit_reproducible() {
        let model = MlpModel::new(&[5, 8, 4], 3).unwrap();
        let anchor = array![0.2, 0.8, 0.5, 0.1, 0.9];
        let pcfg = PerturbationConfig {
            num_samples: 120,
            sigma: 0.3,
            seed: 31,
        };
        let scfg = SurrogateConfig::default_with_k(3);
        let a = explain_instance(anchor.view(), &model, &pcfg, &scfg).unwrap();
        let b = explain_instance(anchor.view(), &model, &pcfg, &scfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sparsity_cap_is_respected() {
        let model = MlpModel::new(&[12, 16, 3], 8).unwrap();
        let anchor = Array1::from_elem(12, 0.4);
        let pcfg = PerturbationConfig {
            num_samples: 300,
            sigma: 0.3,
            seed: 5,
        };
        for k in [1usize, 3, 7] {
            let scfg = SurrogateConfig::default_with_k(k);
            let expl = explain_instance(anchor.view(), &model, &pcfg, &scfg).unwrap();
            assert!(expl.weights.len() <= k, "k={k}: got {}", expl.weights.len());
            assert!(expl.weights.iter().all(|fw| fw.value != 0.0));
            let mut indices: Vec<usize> = expl.weights.iter().map(|fw| fw.index).collect();
            let sorted = {
                let mut s = indices.clone();
                s.sort_unstable();
                s
            };
            assert_eq!(indices, sorted, "weights sorted by index");
            indices.dedup();
            assert_eq!(indices.len(), expl.weights.len());
        }
    }

    #[test]
    fn too_few_samples_for_k_is_rejected() {
        let model = MlpModel::zeros(&[4, 2]).unwrap();
        let anchor = Array1::zeros(4);
        let pcfg = PerturbationConfig {
            num_samples: 3,
            sigma: 0.3,
            seed: 0,
        };
        let scfg = SurrogateConfig::default_with_k(3);
        let err = explain_instance(anchor.view(), &model, &pcfg, &scfg).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "got {err:?}");
    }

    #[test]
    fn k_larger_than_input_dim_is_rejected() {
        let model = MlpModel::zeros(&[4, 2]).unwrap();
        let anchor = Array1::zeros(4);
        let scfg = SurrogateConfig::default_with_k(5);
        let err =
            explain_instance(anchor.view(), &model, &PerturbationConfig::default(), &scfg)
                .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn record_serializes_with_the_documented_fields() {
        let expl = LocalExplanation {
            anchor: array![0.0, 1.0],
            anchor_label: 1,
            target_class: 1,
            weights: vec![FeatureWeight {
                index: 1,
                value: -0.5,
            }],
            intercept: 0.25,
            ridge_fallback: false,
            seed: 9,
        };
        let json = serde_json::to_value(expl.record(3, "deadbeef")).unwrap();
        assert_eq!(json["anchor_id"], 3);
        assert_eq!(json["anchor_label"], 1);
        assert_eq!(json["target_class"], 1);
        assert_eq!(json["intercept"], 0.25);
        assert_eq!(json["weights"][0]["index"], 1);
        assert_eq!(json["weights"][0]["value"], -0.5);
        assert_eq!(json["seed"], 9);
        assert_eq!(json["config_digest"], "deadbeef");
        let back: LocalExplanationRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, expl.record(3, "deadbeef"));
    }
}
