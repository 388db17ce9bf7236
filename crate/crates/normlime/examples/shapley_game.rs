//! Exact and sampled Shapley values on cooperative games with known
//! solutions, then on a tiny classifier via the masked-probability value
//! function.
//!
//!     cargo run --release --example shapley_game

use ndarray::arr1;

use normlime::baselines::{masked_probability_value, shapley_exact, shapley_sampled};
use normlime::model::MlpModel;

fn main() -> normlime::Result<()> {
    // Additive game: v(S) = sum of per-player worths. Shapley returns each
    // player's own worth exactly.
    let worth = [4.0, -1.0, 2.5, 0.0, 1.0];
    let additive = |members: &[bool]| -> f64 {
        members
            .iter()
            .zip(worth)
            .filter(|(m, _)| **m)
            .map(|(_, w)| w)
            .sum()
    };
    let phi = shapley_exact(additive, worth.len())?;
    println!("additive game: phi = {:?}", phi.to_vec());
    for (i, w) in worth.iter().enumerate() {
        assert!((phi[i] - w).abs() < 1e-12);
    }

    // Glove game: player 0 owns a left glove, players 1 and 2 own right
    // gloves; a pair is worth 1. The scarce left glove takes 2/3 of the
    // surplus, the interchangeable right gloves 1/6 each.
    let glove = |m: &[bool]| -> f64 {
        let pairs = (m[0] as usize).min(m[1] as usize + m[2] as usize);
        pairs as f64
    };
    let phi = shapley_exact(glove, 3)?;
    println!(
        "glove game: phi = {:?} (expect [2/3, 1/6, 1/6])",
        phi.to_vec()
    );
    assert!((phi[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((phi[1] - 1.0 / 6.0).abs() < 1e-12);

    // Efficiency: contributions sum to v(grand coalition) - v(empty set).
    let all = vec![true; 3];
    let none = vec![false; 3];
    let total: f64 = phi.sum();
    assert!((total - (glove(&all) - glove(&none))).abs() < 1e-10);
    println!("efficiency: sum(phi) = {total:.6} = v(N) - v(0)");

    // Permutation sampling converges to the exact values.
    let sampled = shapley_sampled(glove, 3, 5000, 99)?;
    println!("sampled (5000 perms): {:?}", sampled.to_vec());
    for i in 0..3 {
        assert!((sampled[i] - phi[i]).abs() <= 0.05 * phi[i].abs().max(0.1));
    }

    // The same machinery explains a classifier: v(S) is the predicted-class
    // probability with the features outside S pinned to a baseline.
    let model = MlpModel::new(&[6, 12, 3], 11)?;
    let x = arr1(&[0.9, 0.1, 0.5, 0.7, 0.3, 0.6]);
    let baseline = arr1(&[0.5; 6]);
    let value = masked_probability_value(&model, x.view(), baseline.view(), 0)?;
    let phi = shapley_exact(&value, 6)?;
    println!("feature attribution: phi = {:?}", phi.to_vec());
    let gap = value(&[true; 6]) - value(&[false; 6]);
    assert!((phi.sum() - gap).abs() < 1e-10, "efficiency on the classifier");
    println!("classifier efficiency gap reproduced: {gap:+.6}");
    Ok(())
}
