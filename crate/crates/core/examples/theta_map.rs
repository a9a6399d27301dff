//! Extremal-coefficient maps around a reference station: fitted and observed.
use latent_extremes::io::{export_observed_theta_map, export_theta_map, MapGrid, Reference};
use latent_extremes::madogram::extremal_matrix;
use latent_extremes::pipeline::{fit_mds_model, FitInputs, GridSpec, Method, SweepOptions};
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
    let inputs = FitInputs {
        data: &data,
        theta_hat: &theta_hat,
        stations: &stations,
    };
    let model = fit_mds_model(Method::Method1, &inputs, &GridSpec::reduced(), 3, &SweepOptions::default())?;
    let grid = MapGrid::new((0.0, 50.0), (0.0, 30.0), 10.0)?;
    let reference = stations.ids[8].clone();
    let fitted = export_theta_map(&model, &Reference::Station(reference.clone()), &grid)?;
    let observed = export_observed_theta_map(&theta_hat, &stations, &reference, &grid)?;
    println!("reference {reference}; rows are northing, columns easting");
    for (label, map) in [("fitted", &fitted), ("observed", &observed)] {
        println!("{label}:");
        for row in map.chunks(6) {
            let line: Vec<String> = row.iter().map(|p| format!("{:.3}", p.theta)).collect();
            println!("  {}", line.join(" "));
        }
    }
    Ok(())
}
