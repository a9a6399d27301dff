//! Classical scaling and Sammon mapping of a noisy distance matrix.
use latent_extremes::mds::{classical_scaling, raw_stress, sammon_mds, DissimilarityMatrix, SammonOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> latent_extremes::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
    let exact = DissimilarityMatrix::from_points(&pts);
    let mut noisy = exact.matrix().clone();
    for i in 0..30 {
        for j in (i + 1)..30 {
            let v = noisy[(i, j)] * (1.0 + 0.05 * rng.random_range(-1.0..1.0));
            noisy[(i, j)] = v;
            noisy[(j, i)] = v;
        }
    }
    let d = DissimilarityMatrix::new(noisy)?;
    for dim in 1..=5 {
        let init = classical_scaling(&d, dim)?;
        let fit = sammon_mds(&d, dim, &SammonOptions::default())?;
        println!(
            "d = {dim}: raw stress {:.4}, Sammon stress {:.5} -> {:.5} in {} steps",
            raw_stress(&init, &d, None)?,
            fit.initial_stress,
            fit.stress,
            fit.iterations
        );
    }
    Ok(())
}
