//! F-madogram extremal coefficients against the Brown-Resnick truth.
use latent_extremes::brown_resnick::{cov_from_theta, extremal_coefficient};
use latent_extremes::covariance::CovFunction;
use latent_extremes::madogram::f_madogram_theta;
use latent_extremes::simulator::{simulate_field, SimSpec};
use nalgebra::DMatrix;

fn main() -> latent_extremes::Result<()> {
    let sigma = 2.0;
    let cov = CovFunction::PowerExponential { alpha: 1.0 };
    // pairs at latent distances with k = 0.9, 0.5, 0.1
    for k in [0.9, 0.5, 0.1] {
        let h = cov.inverse(k)?;
        let points = DMatrix::from_row_slice(2, 1, &[0.0, h]);
        let spec = SimSpec::new(points, sigma, cov, 500, 11);
        let z = simulate_field(&spec)?;
        let theta = f_madogram_theta(&z.column(0), &z.column(1))?;
        println!(
            "k = {k:.1}: true theta {:.4}, madogram {theta:.4}, inverted k {:.4}",
            extremal_coefficient(sigma, k),
            cov_from_theta(sigma, theta)?
        );
    }
    Ok(())
}
