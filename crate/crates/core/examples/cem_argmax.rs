//! Maximizes a two-dimensional function over the action box with CEM and
//! prints how the proposal distribution tightens each iteration.

use cgp::cem::{cem_argmax_traced, CemConfig};
use ndarray::{Array1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cgp::Result<()> {
    // peak at (0.3, -0.6)
    let score = |a: ArrayView2<f64>| -> cgp::Result<Array1<f64>> {
        Ok(a.rows()
            .into_iter()
            .map(|r| -((r[0] - 0.3).powi(2) + 2.0 * (r[1] + 0.6).powi(2)))
            .collect())
    };
    let config = CemConfig {
        iterations: 6,
        ..CemConfig::new(2)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (best, trace) = cem_argmax_traced(score, &config, &mut rng)?;
    for (i, t) in trace.iter().enumerate() {
        println!(
            "iter {i}: best elite {:>9.5}  mean {:>7.3?}  max var {:.3e}",
            t.best_elite_score, t.proposal.mean, t.proposal.variance.iter().cloned().fold(0.0, f64::max)
        );
    }
    println!("argmax {:.4?} value {:.6}", best.action, best.value);
    Ok(())
}
