//! Build one phantom at exhale and inhale and report how the organs move.
//!
//! `cargo run --release --example phantom_states [seed]`

use synthreg::metrics::dice;
use synthreg::phantom::{organ, phantom_state, respiration_field, PhantomSpec, RespirationParams};
use synthreg::volume::{warp_labels, Geometry};

fn main() -> synthreg::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = PhantomSpec::new(seed);
    let grid = Geometry::desk();
    let exhale = phantom_state(&spec, &RespirationParams::exhale(), &grid)?;
    let inhale = phantom_state(&spec, &RespirationParams::inhale(), &grid)?;
    let field = respiration_field(&spec, &RespirationParams::inhale(), &grid)?;

    println!("seed {seed}, grid {:?} at {:?} mm", grid.dims, grid.spacing);
    println!("{:<16} {:>9} {:>9} {:>8}", "organ", "exhale", "inhale", "dz mm");
    for (name, id) in [
        ("liver", organ::LIVER),
        ("spleen", organ::SPLEEN),
        ("kidney left", organ::KIDNEY_LEFT),
        ("lung right", organ::LUNG_RIGHT),
    ] {
        let dz = match (exhale.centroid(id), inhale.centroid(id)) {
            (Some(a), Some(b)) => b[2] - a[2],
            _ => f64::NAN,
        };
        println!("{name:<16} {:>9} {:>9} {dz:>8.2}", exhale.count(id), inhale.count(id));
    }

    let warped = warp_labels(&exhale, &field)?;
    println!(
        "peak displacement {:.2} mm; liver Dice of warped exhale vs inhale {:.4}",
        field.max_magnitude(),
        dice(&warped.select(organ::LIVER), &inhale.select(organ::LIVER))?
    );
    Ok(())
}
