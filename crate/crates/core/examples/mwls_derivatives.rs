//! Meshless derivatives on a scattered cloud: exact for cubics, accurate
//! for smooth functions, and interpolation with an extrapolation flag.
//!
//!     cargo run --release --example mwls_derivatives

use rand::{Rng, SeedableRng};

use qhydro::mwls::{differentiate_field, interpolate_to, MwlsConfig, PointCloud};

fn main() -> qhydro::Result<()> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let positions: Vec<[f64; 2]> = (0..2000)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let cloud = PointCloud::new(positions.clone())?;
    let cfg = MwlsConfig::default();

    let cubic = |p: [f64; 2]| 1.0 + p[0] - 2.0 * p[0] * p[1] + p[1].powi(3);
    let values: Vec<f64> = positions.iter().map(|&p| cubic(p)).collect();
    let d = differentiate_field(&cloud, &values, &cfg)?;
    let worst = positions
        .iter()
        .zip(&d)
        .map(|(p, d)| {
            (d.f_y - (-2.0 * p[0] + 3.0 * p[1] * p[1]))
                .abs()
                .max((d.f_xy + 2.0).abs())
        })
        .fold(0.0f64, f64::max);
    println!(
        "cubic: worst error in f_y, f_xy over {} points: {worst:.2e}",
        positions.len()
    );

    let smooth = |p: [f64; 2]| (2.0 * p[0]).sin() * (-p[1] * p[1]).exp();
    let values: Vec<f64> = positions.iter().map(|&p| smooth(p)).collect();
    let d = differentiate_field(&cloud, &values, &cfg)?;
    let rms = (positions
        .iter()
        .zip(&d)
        .map(|(p, d)| {
            let lap = -4.0 * smooth(*p) + (4.0 * p[1] * p[1] - 2.0) * smooth(*p);
            (d.laplacian() - lap).powi(2)
        })
        .sum::<f64>()
        / positions.len() as f64)
        .sqrt();
    println!("sin(2x) exp(-y^2): rms laplacian error {rms:.2e}");

    let targets = [[0.1, 0.2], [0.9, -0.9], [1.5, 0.0]];
    let out = interpolate_to(&cloud, &values, &cfg, &targets)?;
    for ((t, v), outside) in targets.iter().zip(&out.values).zip(&out.extrapolated) {
        println!(
            "f{t:?} = {v:+.6} (exact {:+.6}){}",
            smooth(*t),
            if *outside { "  extrapolated" } else { "" }
        );
    }
    Ok(())
}
