//! SmoothGrad-squared and VarGrad on models where the right answer is known
//! in closed form: for an affine model the gradient is constant, so
//! SmoothGrad^2 returns the squared weights exactly and VarGrad returns
//! exactly zero, independent of the noise draw.
//!
//!     cargo run --release --example gradient_baselines

use ndarray::{arr1, arr2, Array1};

use normlime::baselines::{smoothgrad_sq, vargrad, NoiseConfig};
use normlime::model::{MlpModel, Predictor};

fn main() -> normlime::Result<()> {
    // Affine model: logits = W x + b with no hidden layers.
    let w = arr2(&[[0.5, -1.5, 0.0, 2.0], [-0.25, 0.75, 1.0, -2.0]]);
    let b = arr1(&[0.1, -0.1]);
    let model = MlpModel::from_parts(vec![w.clone()], vec![b])?;

    let x = arr1(&[0.2, 0.4, 0.6, 0.8]);
    let ncfg = NoiseConfig {
        sigma: 0.3,
        num_noise_samples: 50,
        seed: 123,
    };

    for class in 0..2 {
        let sg = smoothgrad_sq(&model, x.view(), class, &ncfg)?;
        let vg = vargrad(&model, x.view(), class, &ncfg)?;
        let expected: Array1<f64> = w.row(class).mapv(|v| v * v);
        println!("class {class}:");
        println!("  smoothgrad^2 = {:?}", sg.to_vec());
        println!("  squared row  = {:?}", expected.to_vec());
        println!("  vargrad      = {:?}", vg.to_vec());
        assert_eq!(sg, expected, "affine smoothgrad^2 is exact");
        assert!(vg.iter().all(|&v| v == 0.0), "affine vargrad is exactly 0");
    }
    println!("affine identities hold bit-for-bit");

    // On a nonlinear model the two maps genuinely differ: VarGrad picks up
    // gradient variation that SmoothGrad^2 folds into its mean.
    let nonlinear = MlpModel::new(&[4, 8, 2], 7)?;
    let sg = smoothgrad_sq(&nonlinear, x.view(), 0, &ncfg)?;
    let vg = vargrad(&nonlinear, x.view(), 0, &ncfg)?;
    println!("untrained MLP, class 0:");
    println!("  smoothgrad^2 = {:?}", round3(&sg));
    println!("  vargrad      = {:?}", round3(&vg));
    assert!(vg.iter().any(|&v| v > 0.0), "ReLU kinks give vargrad mass");

    // The finite-difference check that backs every gradient map.
    let g = nonlinear.gradient_wrt_input(x.view(), 0)?;
    let mut x_hi = x.clone();
    let mut x_lo = x.clone();
    let h = 1e-6;
    x_hi[2] += h;
    x_lo[2] -= h;
    let fd = (nonlinear.logits(x_hi.view())?[0] - nonlinear.logits(x_lo.view())?[0]) / (2.0 * h);
    println!("analytic dlogit/dx2 {:+.6} vs central difference {fd:+.6}", g[2]);
    assert!((g[2] - fd).abs() <= 1e-4 * fd.abs().max(1.0));
    Ok(())
}

fn round3(v: &Array1<f64>) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
