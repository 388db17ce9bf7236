//! Fits a local surrogate around one instance of a synthetic two-blob
//! problem and prints the sparse explanation it finds.
//!
//!     cargo run --release --example explain_instance

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use normlime::data::{Dataset, SplitTag};
use normlime::model::{classification_error, train, MlpModel, Predictor, TrainConfig};
use normlime::surrogate::{explain_instance, PerturbationConfig, SurrogateConfig};

/// Two Gaussian blobs that differ only in the first two of `d` features;
/// the rest is noise a good explanation should ignore.
fn blobs(n: usize, d: usize, seed: u64) -> normlime::Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = rng.random_range(0..2usize);
        let center = if y == 0 { 0.25 } else { 0.75 };
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = if j < 2 { center } else { 0.5 };
            instances[[i, j]] = (mean + 0.08 * noise).clamp(0.0, 1.0);
        }
        labels.push(y);
    }
    Dataset::new(instances, labels, 2, SplitTag::Train, "blobs")
}

fn main() -> normlime::Result<()> {
    let data = blobs(400, 8, 3)?;
    let model = MlpModel::new(&[8, 16, 2], 0)?;
    let cfg = TrainConfig {
        epochs: 25,
        batch_size: 16,
        learning_rate: 0.3,
        ..TrainConfig::default()
    };
    let trained = train(&model, &data, &cfg)?;
    println!(
        "trained blob classifier, train accuracy {:.3}",
        1.0 - classification_error(&trained, &data)?
    );

    let anchor = data.instances.row(0);
    let probs = trained.predict_proba(anchor)?;
    println!(
        "anchor label {}, predicted probabilities {:?}",
        data.labels[0],
        probs
            .iter()
            .map(|p| (p * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );

    let pcfg = PerturbationConfig {
        sigma: 0.2,
        seed: 42,
        ..PerturbationConfig::default()
    };
    let scfg = SurrogateConfig::default_with_k(4);
    let explanation = explain_instance(anchor, &trained, &pcfg, &scfg)?;

    println!(
        "local surrogate: intercept {:+.4}, {} nonzero weights (cap {})",
        explanation.intercept,
        explanation.weights.len(),
        scfg.k
    );
    let mut weights = explanation.weights.clone();
    weights.sort_by(|a, b| b.value.abs().partial_cmp(&a.value.abs()).unwrap());
    for w in &weights {
        let role = if w.index < 2 { "signal" } else { "noise" };
        println!("  feature {:>2} ({role}): {:+.4}", w.index, w.value);
    }

    // All class-separating information lives in features 0 and 1, so the
    // strongest surrogate weight should land there.
    let top = weights.first().expect("explanation is nonempty");
    assert!(top.index < 2, "strongest weight should be a signal feature");
    println!("strongest weight is on a signal feature, as expected");
    Ok(())
}
