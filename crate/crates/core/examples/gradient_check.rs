//! Compares backpropagated gradients with central finite differences on a
//! few random networks.

use cgp::nn::{DenseNet, OutputActivation};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cgp::Result<()> {
    let h = 1e-5;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::new(&[4, 16, 16, 2], OutputActivation::Tanh, &mut rng)?;
        let x = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let objective = |n: &DenseNet| -> cgp::Result<f64> { Ok((n.forward(x.view())? * &w).sum()) };

        let tape = net.forward_tape(x.view())?;
        let analytic = net.backward(&tape, w.view())?.grads.flatten();
        let params = net.flat_params();
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            probe.set_flat_params(&p)?;
            let up = objective(&probe)?;
            p[i] -= 2.0 * h;
            probe.set_flat_params(&p)?;
            let down = objective(&probe)?;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-7));
        }
        println!("seed {seed}: {} parameters, max relative error {worst:.2e}", params.len());
    }
    Ok(())
}
