//! Builds an explanation set over many anchors, aggregates it into global
//! and per-class salience maps, and shows the class maps keying on the
//! features that actually define each class.
//!
//!     cargo run --release --example class_salience

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use normlime::data::{Dataset, SplitTag};
use normlime::kar::{build_explanation_set, GlobalMapConfig};
use normlime::model::{classification_error, train, MlpModel, TrainConfig};
use normlime::salience::{normlime, normlime_for_class, positive_part, splime_l2};
use normlime::surrogate::{PerturbationConfig, SurrogateConfig};

/// Three classes, each marked by elevated values in its own feature pair:
/// class 0 -> features {0,1}, class 1 -> {2,3}, class 2 -> {4,5}.
fn striped(n: usize, seed: u64) -> normlime::Result<Dataset> {
    let d = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = rng.random_range(0..3usize);
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = if j / 2 == y && j < 6 { 0.8 } else { 0.3 };
            instances[[i, j]] = (mean + 0.1 * noise).clamp(0.0, 1.0);
        }
        labels.push(y);
    }
    Dataset::new(instances, labels, 3, SplitTag::Train, "striped")
}

fn main() -> normlime::Result<()> {
    let data = striped(600, 9)?;
    let model = MlpModel::new(&[9, 16, 3], 0)?;
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 16,
        learning_rate: 0.3,
        ..TrainConfig::default()
    };
    let trained = train(&model, &data, &cfg)?;
    println!(
        "train accuracy {:.3}",
        1.0 - classification_error(&trained, &data)?
    );

    let map_cfg = GlobalMapConfig {
        surrogate: SurrogateConfig::default_with_k(4),
        ..GlobalMapConfig::default()
    };
    let pcfg = PerturbationConfig {
        sigma: 0.2,
        seed: map_cfg.seed,
        ..PerturbationConfig::default()
    };
    let set = build_explanation_set(&trained, data.instances.view(), &pcfg, &map_cfg.surrogate)?;
    println!("built {} local explanations", set.len());

    let global = normlime(&set)?;
    let sp = splime_l2(&set)?;
    println!("global normlime top-4: {:?}", fmt_top(&global.top_k(4)));
    println!("global splime-l2 top-4: {:?}", fmt_top(&sp.top_k(4)));

    for y in 0..3 {
        let class_map = positive_part(&normlime_for_class(&set, y)?, &set, y)?;
        let top = class_map.top_k(2);
        println!("class {y} positive normlime top-2: {:?}", fmt_top(&top));
        // Each class map should key on that class's own feature pair.
        for (idx, _) in &top {
            assert_eq!(idx / 2, y, "class {y} map should rank its own features");
        }
    }
    println!("each class map ranks its defining feature pair first");
    Ok(())
}

fn fmt_top(entries: &[(usize, f64)]) -> Vec<String> {
    entries
        .iter()
        .map(|(i, s)| format!("f{i}={s:.4}"))
        .collect()
}
