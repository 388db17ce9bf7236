//! Aggregation of local explanations into global and class-specific feature
//! salience.
//!
//! With E(c_i) the set of explanations whose weight on feature i is nonzero,
//! the importance of feature i is the average attributed mass
//!
//!     S(c_i) = (1/|E(c_i)|) * sum_{w in E(c_i)} gamma(w, i) * |w_i|,
//!     gamma(w, i) = |w_i| / ||w||_1,
//!
//! i.e. the mean of w_i^2 / ||w||_1 over the explanations that use feature i;
//! features no explanation uses score exactly 0. [`normlime_matrix_form`]
//! computes the same quantity column-wise over the stacked weight matrix, and
//! [`splime_l2`] is the plain column L2 norm used by SP-LIME. Class-specific
//! maps restrict the average to explanations whose anchors the model labels
//! with one class.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::LocalExplanation;

/// Attribution methods that can produce a [`SalienceMap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Normlime,
    SplimeL2,
    SmoothgradSq,
    Vargrad,
    Shapley,
    Random,
}

impl Method {
    pub const fn as_str(self) -> &'static str {
        match self {
            Method::Normlime => "normlime",
            Method::SplimeL2 => "splime_l2",
            Method::SmoothgradSq => "smoothgrad_sq",
            Method::Vargrad => "vargrad",
            Method::Shapley => "shapley",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normlime" => Ok(Method::Normlime),
            // "lime" is the colloquial name for the SP-LIME style L2
            // aggregation of plain LIME explanations
            "splime_l2" | "lime" => Ok(Method::SplimeL2),
            "smoothgrad_sq" => Ok(Method::SmoothgradSq),
            "vargrad" => Ok(Method::Vargrad),
            "shapley" => Ok(Method::Shapley),
            "random" => Ok(Method::Random),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// Whether a map aggregates over all anchors or one predicted class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    Class(usize),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Global => write!(f, "global"),
            Scope::Class(y) => write!(f, "class {y}"),
        }
    }
}

/// Where a map came from: digest of the effective configuration plus the
/// seed that produced it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub seed: u64,
}

/// One importance score per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalienceMap {
    pub method: Method,
    pub scope: Scope,
    pub scores: Vec<f64>,
    pub provenance: Provenance,
}

impl SalienceMap {
    pub fn new(method: Method, scope: Scope, scores: Vec<f64>) -> Self {
        SalienceMap {
            method,
            scope,
            scores,
            provenance: Provenance::default(),
        }
    }

    pub fn with_provenance(mut self, config_digest: &str, seed: u64) -> Self {
        self.provenance = Provenance {
            config_digest: config_digest.to_string(),
            seed,
        };
        self
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// The `n` highest-scoring features, descending; ties favor the lower
    /// index.
    pub fn top_k(&self, n: usize) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(n);
        order.into_iter().map(|i| (i, self.scores[i])).collect()
    }
}

/// A collection of local explanations over a common feature space.
#[derive(Clone, Debug, Default)]
pub struct ExplanationSet {
    explanations: Vec<LocalExplanation>,
    input_dim: usize,
}

impl ExplanationSet {
    pub fn new(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be at least 1".into()));
        }
        Ok(ExplanationSet {
            explanations: Vec::new(),
            input_dim,
        })
    }

    pub fn from_explanations(
        input_dim: usize,
        explanations: Vec<LocalExplanation>,
    ) -> Result<Self> {
        let mut set = ExplanationSet::new(input_dim)?;
        for e in explanations {
            set.push(e)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, explanation: LocalExplanation) -> Result<()> {
        if explanation.input_dim() != self.input_dim {
            return Err(Error::ShapeMismatch {
                what: "explanation dimension",
                expected: self.input_dim,
                got: explanation.input_dim(),
            });
        }
        self.explanations.push(explanation);
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.explanations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.explanations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LocalExplanation> {
        self.explanations.iter()
    }

    pub fn explanations(&self) -> &[LocalExplanation] {
        &self.explanations
    }

    /// |E(c_i)| for every i: how many explanations use each feature.
    pub fn usage_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.input_dim];
        for e in &self.explanations {
            for fw in &e.weights {
                counts[fw.index] += 1;
            }
        }
        counts
    }
}

/// Relative importance of feature `i` inside one explanation:
/// |w_i| / ||w||_1. Sums to 1 over the explanation's support.
pub fn gamma(explanation: &LocalExplanation, i: usize) -> Result<f64> {
    let l1 = explanation.l1_norm();
    if l1 == 0.0 {
        return Err(Error::DegenerateExplanation);
    }
    Ok(explanation.weight_for(i).abs() / l1)
}

/// Global NormLIME scores: mean of gamma(w, i) * |w_i| over E(c_i).
pub fn normlime(set: &ExplanationSet) -> Result<SalienceMap> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut scores = vec![0.0f64; set.input_dim()];
    let mut counts = vec![0usize; set.input_dim()];
    for e in set.iter() {
        let l1 = e.l1_norm();
        if l1 == 0.0 {
            continue; // an empty explanation utilizes no features
        }
        for fw in &e.weights {
            scores[fw.index] += fw.value * fw.value / l1;
            counts[fw.index] += 1;
        }
    }
    for (s, &c) in scores.iter_mut().zip(&counts) {
        if c > 0 {
            *s /= c as f64;
        }
    }
    Ok(SalienceMap::new(Method::Normlime, Scope::Global, scores))
}

/// NormLIME via the stacked-matrix formulation: with M the explanations-by-
/// features weight matrix and v the row L1 norms,
/// S(c_i) = (1 / ||w_i||_0) * w_i^T diag(v^-1) w_i for column w_i.
/// Agrees with [`normlime`] to floating-point roundoff.
pub fn normlime_matrix_form(set: &ExplanationSet) -> Result<SalienceMap> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = set.len();
    let d = set.input_dim();
    let mut m = ndarray::Array2::<f64>::zeros((n, d));
    let mut v = vec![0.0f64; n];
    for (j, e) in set.iter().enumerate() {
        v[j] = e.l1_norm();
        for fw in &e.weights {
            m[[j, fw.index]] = fw.value;
        }
    }

    let mut scores = vec![0.0f64; d];
    for (i, score) in scores.iter_mut().enumerate() {
        let column = m.column(i);
        let nonzero = column.iter().filter(|&&w| w != 0.0).count();
        if nonzero == 0 {
            continue; // 0/0 convention: unused features score exactly 0
        }
        let quad: f64 = column
            .iter()
            .zip(&v)
            .filter(|(&w, _)| w != 0.0)
            .map(|(&w, &vj)| w * w / vj)
            .sum();
        *score = quad / nonzero as f64;
    }
    Ok(SalienceMap::new(Method::Normlime, Scope::Global, scores))
}

/// SP-LIME importance: the L2 norm of each feature's column across all
/// explanations.
pub fn splime_l2(set: &ExplanationSet) -> Result<SalienceMap> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut scores = vec![0.0f64; set.input_dim()];
    for e in set.iter() {
        for fw in &e.weights {
            scores[fw.index] += fw.value * fw.value;
        }
    }
    for s in scores.iter_mut() {
        *s = s.sqrt();
    }
    Ok(SalienceMap::new(Method::SplimeL2, Scope::Global, scores))
}

/// The subset of explanations whose anchors the model labelled `y`. Over all
/// labels these subsets partition the set.
pub fn partition_by_label(set: &ExplanationSet, y: usize) -> ExplanationSet {
    ExplanationSet {
        explanations: set
            .iter()
            .filter(|e| e.anchor_label == y)
            .cloned()
            .collect(),
        input_dim: set.input_dim(),
    }
}

/// Class-specific NormLIME: the global formula restricted to the class-`y`
/// partition.
pub fn normlime_for_class(set: &ExplanationSet, y: usize) -> Result<SalienceMap> {
    let subset = partition_by_label(set, y);
    if subset.is_empty() {
        return Err(Error::EmptyClass { class: y });
    }
    let mut map = normlime(&subset)?;
    map.scope = Scope::Class(y);
    Ok(map)
}

/// Zeroes scores of features that are not positively correlated with the
/// class: feature i survives only when its mean signed weight over the
/// class-`y` explanations that use it is > 0.
pub fn positive_part(map: &SalienceMap, set: &ExplanationSet, y: usize) -> Result<SalienceMap> {
    if !matches!(map.method, Method::Normlime | Method::SplimeL2) {
        return Err(Error::InvalidConfig(format!(
            "positive_part applies to normlime/splime_l2 maps, not {}",
            map.method
        )));
    }
    if map.scope != Scope::Class(y) {
        return Err(Error::InvalidConfig(format!(
            "positive_part over class {y} needs a class-{y} map, got scope {}",
            map.scope
        )));
    }
    if map.scores.len() != set.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "salience scores",
            expected: set.input_dim(),
            got: map.scores.len(),
        });
    }

    let d = set.input_dim();
    let mut sums = vec![0.0f64; d];
    let mut counts = vec![0usize; d];
    for e in set.iter().filter(|e| e.anchor_label == y) {
        for fw in &e.weights {
            sums[fw.index] += fw.value;
            counts[fw.index] += 1;
        }
    }

    let mut out = map.clone();
    for i in 0..d {
        let mean_ok = counts[i] > 0 && sums[i] / counts[i] as f64 > 0.0;
        if !mean_ok {
            out.scores[i] = 0.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::FeatureWeight;
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Builds an explanation from (index, value) pairs; anchor content is
    /// irrelevant to aggregation.
    fn expl(d: usize, label: usize, pairs: &[(usize, f64)]) -> LocalExplanation {
        let mut weights: Vec<FeatureWeight> = pairs
            .iter()
            .map(|&(index, value)| FeatureWeight { index, value })
            .collect();
        weights.sort_by_key(|fw| fw.index);
        LocalExplanation {
            anchor: Array1::zeros(d),
            anchor_label: label,
            target_class: label,
            weights,
            intercept: 0.0,
            ridge_fallback: false,
            seed: 0,
        }
    }

    fn set_of(d: usize, expls: Vec<LocalExplanation>) -> ExplanationSet {
        ExplanationSet::from_explanations(d, expls).unwrap()
    }

    /// Independent double-loop oracle for the NormLIME formula.
    fn normlime_oracle(set: &ExplanationSet) -> Vec<f64> {
        let d = set.input_dim();
        let mut scores = vec![0.0; d];
        for (i, score) in scores.iter_mut().enumerate() {
            let users: Vec<&LocalExplanation> = set
                .iter()
                .filter(|e| e.weights.iter().any(|fw| fw.index == i && fw.value != 0.0))
                .collect();
            if users.is_empty() {
                continue;
            }
            let mut total = 0.0;
            for e in users.iter() {
                let wi = e
                    .weights
                    .iter()
                    .find(|fw| fw.index == i)
                    .map(|fw| fw.value)
                    .unwrap();
                let l1: f64 = e.weights.iter().map(|fw| fw.value.abs()).sum();
                total += (wi.abs() / l1) * wi.abs();
            }
            *score = total / users.len() as f64;
        }
        scores
    }

    fn splime_oracle(set: &ExplanationSet) -> Vec<f64> {
        let d = set.input_dim();
        (0..d)
            .map(|i| {
                set.iter()
                    .map(|e| {
                        let wi = e
                            .weights
                            .iter()
                            .find(|fw| fw.index == i)
                            .map(|fw| fw.value)
                            .unwrap_or(0.0);
                        wi * wi
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    fn random_set(seed: u64, n: usize, d: usize, num_labels: usize) -> ExplanationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut expls = Vec::new();
        for _ in 0..n {
            let label = rng.random_range(0..num_labels);
            let mut pairs = Vec::new();
            for i in 0..d {
                if rng.random_range(0.0..1.0) < 0.45 {
                    let mut v: f64 = rng.random_range(-2.0..2.0);
                    if v == 0.0 {
                        v = 0.5;
                    }
                    pairs.push((i, v));
                }
            }
            if pairs.is_empty() {
                pairs.push((rng.random_range(0..d), 1.0));
            }
            expls.push(expl(d, label, &pairs));
        }
        set_of(d, expls)
    }

    #[test]
    fn gamma_direct_arithmetic() {
        let e = expl(3, 0, &[(0, 2.0), (1, -1.0), (2, 1.0)]);
        assert_eq!(gamma(&e, 0).unwrap(), 0.5);
        let onehot = expl(3, 0, &[(1, 5.0)]);
        assert_eq!(gamma(&onehot, 1).unwrap(), 1.0);
        assert_eq!(gamma(&onehot, 0).unwrap(), 0.0);
    }

    #[test]
    fn gamma_sums_to_one_over_features() {
        let e = expl(6, 0, &[(0, 0.3), (2, -1.7), (3, 0.9), (5, -0.01)]);
        let total: f64 = (0..6).map(|i| gamma(&e, i).unwrap()).sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gamma_of_empty_explanation_is_degenerate() {
        let e = expl(3, 0, &[]);
        assert!(matches!(
            gamma(&e, 0).unwrap_err(),
            Error::DegenerateExplanation
        ));
    }

    #[test]
    fn normlime_single_explanation_closed_form() {
        let set = set_of(3, vec![expl(3, 0, &[(0, 2.0), (1, -1.0), (2, 1.0)])]);
        let map = normlime(&set).unwrap();
        assert_eq!(map.scores, vec![1.0, 0.25, 0.25]);
    }

    #[test]
    fn normlime_two_disjoint_onehots() {
        let set = set_of(2, vec![expl(2, 0, &[(0, 1.0)]), expl(2, 0, &[(1, 1.0)])]);
        let map = normlime(&set).unwrap();
        assert_eq!(map.scores, vec![1.0, 1.0]);
    }

    #[test]
    fn normlime_matches_double_loop_oracle() {
        for seed in 0..30 {
            let set = random_set(seed, 5, 8, 2);
            let map = normlime(&set).unwrap();
            let oracle = normlime_oracle(&set);
            for (i, (got, want)) in map.scores.iter().zip(&oracle).enumerate() {
                assert!(
                    (got - want).abs() <= 1e-12,
                    "seed {seed}, feature {i}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn matrix_form_handles_unused_columns() {
        let set = set_of(4, vec![expl(4, 0, &[(0, 1.0), (2, -2.0)])]);
        let map = normlime_matrix_form(&set).unwrap();
        assert_eq!(map.scores[1], 0.0);
        assert_eq!(map.scores[3], 0.0);
        assert!(map.scores[0] > 0.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        let set = ExplanationSet::new(4).unwrap();
        assert!(matches!(normlime(&set).unwrap_err(), Error::EmptySet));
        assert!(matches!(splime_l2(&set).unwrap_err(), Error::EmptySet));
    }

    #[test]
    fn splime_l2_closed_forms() {
        let single = set_of(3, vec![expl(3, 0, &[(0, 3.0), (1, 4.0)])]);
        assert_eq!(splime_l2(&single).unwrap().scores, vec![3.0, 4.0, 0.0]);

        let pythagorean = set_of(2, vec![expl(2, 0, &[(0, 3.0)]), expl(2, 0, &[(0, 4.0)])]);
        assert_eq!(splime_l2(&pythagorean).unwrap().scores, vec![5.0, 0.0]);

        for seed in 100..110 {
            let set = random_set(seed, 6, 7, 3);
            let map = splime_l2(&set).unwrap();
            let oracle = splime_oracle(&set);
            for (got, want) in map.scores.iter().zip(&oracle) {
                assert!((got - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn uniform_weight_explanation_separates_the_two_norms() {
        // one explanation, |w_i| = a on a support of size s:
        // normlime gives a/s, splime gives a
        let a = 0.6;
        let set = set_of(5, vec![expl(5, 0, &[(0, a), (2, -a), (4, a)])]);
        let nl = normlime(&set).unwrap();
        let sp = splime_l2(&set).unwrap();
        for &i in &[0usize, 2, 4] {
            assert!((nl.scores[i] - a / 3.0).abs() <= 1e-15);
            assert!((sp.scores[i] - a).abs() <= 1e-15);
        }
    }

    #[test]
    fn partition_filters_by_anchor_label() {
        let set = set_of(
            2,
            vec![
                expl(2, 0, &[(0, 1.0)]),
                expl(2, 1, &[(1, 1.0)]),
                expl(2, 0, &[(0, 2.0)]),
            ],
        );
        let zeros = partition_by_label(&set, 0);
        assert_eq!(zeros.len(), 2);
        assert!(zeros.iter().all(|e| e.anchor_label == 0));
        let ones = partition_by_label(&set, 1);
        assert_eq!(ones.len(), 1);
        assert!(partition_by_label(&set, 7).is_empty());
        assert_eq!(zeros.len() + ones.len(), set.len());
    }

    #[test]
    fn partition_law_counts_sum_exactly() {
        for seed in 0..20 {
            let set = random_set(seed, 9, 6, 4);
            let total = set.usage_counts();
            let mut summed = vec![0usize; 6];
            for y in 0..4 {
                for (s, c) in summed
                    .iter_mut()
                    .zip(partition_by_label(&set, y).usage_counts())
                {
                    *s += c;
                }
            }
            assert_eq!(total, summed, "seed {seed}");
        }
    }

    #[test]
    fn class_scores_reduce_to_global_when_single_class() {
        let set = random_set(7, 6, 5, 1);
        let global = normlime(&set).unwrap();
        let class = normlime_for_class(&set, 0).unwrap();
        assert_eq!(global.scores, class.scores);
        assert_eq!(class.scope, Scope::Class(0));
    }

    #[test]
    fn missing_class_errors_with_the_class_index() {
        let set = random_set(3, 4, 5, 2);
        let err = normlime_for_class(&set, 9).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: 9 }));
        assert!(err.to_string().contains('9'));
    }

    #[test]
    fn per_class_scores_match_oracle() {
        for seed in 40..55 {
            let set = random_set(seed, 8, 6, 2);
            for y in 0..2 {
                let subset = partition_by_label(&set, y);
                if subset.is_empty() {
                    continue;
                }
                let map = normlime_for_class(&set, y).unwrap();
                let oracle = normlime_oracle(&subset);
                for (got, want) in map.scores.iter().zip(&oracle) {
                    assert!((got - want).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn positive_part_filters_by_mean_sign() {
        let set = set_of(
            3,
            vec![
                expl(3, 1, &[(0, 1.0), (1, -1.0), (2, 3.0)]),
                expl(3, 1, &[(1, -2.0), (2, -1.0)]),
            ],
        );
        let map = normlime_for_class(&set, 1).unwrap();
        let filtered = positive_part(&map, &set, 1).unwrap();
        assert_eq!(filtered.scores[0], map.scores[0]); // all positive: kept
        assert_eq!(filtered.scores[1], 0.0); // {-1,-2}: zeroed
        assert_eq!(filtered.scores[2], map.scores[2]); // {+3,-1}: mean +1 > 0
    }

    #[test]
    fn positive_part_keeps_all_positive_maps_unchanged() {
        let set = set_of(
            2,
            vec![expl(2, 0, &[(0, 0.5), (1, 0.25)]), expl(2, 0, &[(0, 1.5)])],
        );
        let map = normlime_for_class(&set, 0).unwrap();
        let filtered = positive_part(&map, &set, 0).unwrap();
        assert_eq!(filtered.scores, map.scores);
    }

    #[test]
    fn positive_part_rejects_mismatched_scope() {
        let set = random_set(1, 4, 5, 2);
        let global = normlime(&set).unwrap();
        assert!(positive_part(&global, &set, 0).is_err());
    }

    #[test]
    fn scale_covariance_preserves_ranking() {
        let c = 2.5;
        for seed in 60..70 {
            let set = random_set(seed, 7, 9, 2);
            let scaled = set_of(
                9,
                set.iter()
                    .map(|e| {
                        let pairs: Vec<(usize, f64)> =
                            e.weights.iter().map(|fw| (fw.index, c * fw.value)).collect();
                        expl(9, e.anchor_label, &pairs)
                    })
                    .collect(),
            );
            let base = normlime(&set).unwrap();
            let big = normlime(&scaled).unwrap();
            for i in 0..9 {
                assert!(
                    (big.scores[i] - c * base.scores[i]).abs() <= 1e-12 * (1.0 + base.scores[i]),
                    "seed {seed}, feature {i}"
                );
            }
            let rank = |m: &SalienceMap| {
                let mut idx: Vec<usize> = (0..m.scores.len()).collect();
                idx.sort_by(|&a, &b| {
                    m.scores[a]
                        .partial_cmp(&m.scores[b])
                        .unwrap()
                        .then(a.cmp(&b))
                });
                idx
            };
            assert_eq!(rank(&base), rank(&big), "seed {seed}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Normlime,
            Method::SplimeL2,
            Method::SmoothgradSq,
            Method::Vargrad,
            Method::Shapley,
            Method::Random,
        ] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("lime".parse::<Method>().unwrap(), Method::SplimeL2);
        let err = "gradcam".parse::<Method>().unwrap_err();
        assert!(matches!(err, Error::UnknownMethod(_)));
        assert!(err.to_string().contains("normlime"));
    }

    #[test]
    fn salience_map_serializes_with_scope_variants() {
        let map = SalienceMap::new(Method::Normlime, Scope::Class(3), vec![0.5, 0.0])
            .with_provenance("abc123", 7);
        let json = serde_json::to_value(&map).unwrap();
        assert_eq!(json["method"], "normlime");
        assert_eq!(json["scope"]["class"], 3);
        assert_eq!(json["provenance"]["config_digest"], "abc123");
        assert_eq!(json["provenance"]["seed"], 7);
        let back: SalienceMap = serde_json::from_value(json).unwrap();
        assert_eq!(back, map);

        let global = SalienceMap::new(Method::Random, Scope::Global, vec![1.0]);
        let json = serde_json::to_value(&global).unwrap();
        assert_eq!(json["scope"], "global");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn normlime_equals_matrix_form(seed in 0u64..10_000) {
            let set = random_set(seed, 1 + (seed % 9) as usize, 2 + (seed % 11) as usize, 3);
            let a = normlime(&set).unwrap();
            let b = normlime_matrix_form(&set).unwrap();
            for i in 0..set.input_dim() {
                prop_assert!((a.scores[i] - b.scores[i]).abs() <= 1e-12);
            }
        }

        #[test]
        fn normlime_scores_are_nonnegative_and_zero_iff_unused(seed in 0u64..10_000) {
            let set = random_set(seed, 1 + (seed % 7) as usize, 2 + (seed % 9) as usize, 2);
            let map = normlime(&set).unwrap();
            let counts = set.usage_counts();
            for (score, count) in map.scores.iter().zip(&counts) {
                prop_assert!(*score >= 0.0);
                prop_assert_eq!(*score == 0.0, *count == 0);
            }
        }
    }
}
