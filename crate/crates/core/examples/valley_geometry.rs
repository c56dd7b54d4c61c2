//! The coupled potential's valley and the classical force along it.
//!
//!     cargo run --release --example valley_geometry

use qhydro::model::{potential, potential_gradient, valley_direction, Case, PhysicalParams};

fn main() -> qhydro::Result<()> {
    let p = PhysicalParams::default();
    let angle = valley_direction(&p, Case::Coupled)?;
    println!(
        "k = {:.4e}, c = {}, valley at {angle:.2} deg",
        p.stiffness(),
        p.coupling(Case::Coupled)
    );
    let slope = angle.to_radians().tan();
    println!("     x     y_valley     V(valley)     force");
    for i in -4..=4 {
        let x = 0.5 * i as f64;
        let pt = [x, slope * x];
        let f = potential_gradient(&p, Case::Coupled, pt);
        println!(
            "{x:6.2} {:12.5} {:13.4e}  ({:+.3e}, {:+.3e})",
            pt[1],
            potential(&p, Case::Coupled, pt),
            f[0],
            f[1]
        );
    }
    match valley_direction(&p, Case::Uncoupled) {
        Ok(a) => println!("uncoupled: {a}"),
        Err(e) => println!("uncoupled: {e}"),
    }
    Ok(())
}
