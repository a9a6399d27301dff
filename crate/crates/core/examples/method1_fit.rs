//! Method 1: invert madogram coefficients, embed by MDS, krige the warp.
use latent_extremes::madogram::extremal_matrix;
use latent_extremes::pipeline::{fit_mds_sweep, select_dimension, FitInputs, GridSpec, Method, SweepOptions};
use latent_extremes::simulator::{simulate_field, WarpedGrid};

fn main() -> latent_extremes::Result<()> {
    let scenario = WarpedGrid {
        nx: 6,
        ny: 4,
        p: 150,
        ..WarpedGrid::default()
    };
    let data = simulate_field(&scenario.spec())?;
    let stations = scenario.stations();
    let theta_hat = extremal_matrix(&data)?;
    let grid = GridSpec::reduced();
    let inputs = FitInputs {
        data: &data,
        theta_hat: &theta_hat,
        stations: &stations,
    };
    let sweep = fit_mds_sweep(Method::Method1, &inputs, &grid, &SweepOptions::default())?;
    for (d, m) in &sweep.per_d {
        println!("d = {d}: sigma {:.2}, cov {:?}, theta MSE {:.5}", m.sigma, m.cov, m.theta_mse);
    }
    let d = select_dimension(&sweep.per_d, &grid, Method::Method1)?;
    println!("selected d = {d}");
    Ok(())
}
