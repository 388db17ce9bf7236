//! Trains the reference digit classifier (784 -> 128 -> 128 -> 10) on the IDX
//! files under `data/mnist/` and reports train/test accuracy.
//!
//!     cargo run --release --example train_digits [-- <epochs>]

use std::path::Path;
use std::time::Instant;

use normlime::data::{load_idx, SplitTag};
use normlime::model::{classification_error, train, MlpModel, TrainConfig};

fn main() -> normlime::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("epochs must be an integer"))
        .unwrap_or(TrainConfig::default().epochs);

    let root = Path::new("data/mnist");
    let train_set = load_idx(
        &root.join("train-images-idx3-ubyte"),
        &root.join("train-labels-idx1-ubyte"),
    )?;
    let test_set = load_idx(
        &root.join("test-images-idx3-ubyte"),
        &root.join("test-labels-idx1-ubyte"),
    )?
    .into_split(SplitTag::Test);
    println!(
        "loaded {} train / {} test instances of dim {}",
        train_set.n(),
        test_set.n(),
        train_set.dim()
    );

    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let model = MlpModel::new(&[train_set.dim(), 128, 128, train_set.num_classes], 0)?;

    let t0 = Instant::now();
    let trained = train(&model, &train_set, &cfg)?;
    let elapsed = t0.elapsed();

    let train_err = classification_error(&trained, &train_set)?;
    let test_err = classification_error(&trained, &test_set)?;
    println!(
        "{} epochs in {:.1?} ({:.2?}/epoch)",
        cfg.epochs,
        elapsed,
        elapsed / cfg.epochs.max(1) as u32
    );
    println!("train accuracy: {:.4}", 1.0 - train_err);
    println!("test accuracy:  {:.4}", 1.0 - test_err);
    Ok(())
}
