//! Hold-out experiment: fit on training stations, place the test stations by the warp.
use latent_extremes::madogram::extremal_matrix;
use latent_extremes::pipeline::{
    fit_mds_sweep, holdout_experiment, FitInputs, GridSpec, HoldoutOptions, Method, SweepOptions,
};
use latent_extremes::simulator::{simulate_field, WarpedGrid};

fn main() -> latent_extremes::Result<()> {
    let scenario = WarpedGrid {
        nx: 6,
        ny: 5,
        p: 150,
        ..WarpedGrid::default()
    };
    let data = simulate_field(&scenario.spec())?;
    let stations = scenario.stations();
    let theta_hat = extremal_matrix(&data)?;
    let grid = GridSpec {
        d_set: vec![3],
        ..GridSpec::reduced()
    };
    let inputs = FitInputs {
        data: &data,
        theta_hat: &theta_hat,
        stations: &stations,
    };
    let full = fit_mds_sweep(Method::Method1, &inputs, &grid, &SweepOptions::default())?;
    let opts = HoldoutOptions {
        method: Method::Method1,
        d: 3,
        n2_range: (5, 7),
        seed: 1,
        sweep: SweepOptions::default(),
    };
    let res = holdout_experiment(&data, &stations, &full.alpha_map, &grid, &opts)?;
    let test: Vec<&str> = res.split.test.iter().map(|&i| stations.ids[i].as_str()).collect();
    println!("held out {}: {}", res.split.n2, test.join(" "));
    println!(
        "pair theta MSE: train {:.5}, test {:.5}, mixed {:.5}",
        res.train_pair_mse, res.test_pair_mse, res.mixed_pair_mse
    );
    println!("all-station loglik {:.2}, theta MSE {:.5}", res.log_likelihood, res.theta_mse);
    Ok(())
}
