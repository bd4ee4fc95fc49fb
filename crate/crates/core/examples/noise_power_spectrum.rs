//! Radial noise power spectra of white and textured noise, and their NCC.
//!
//! `cargo run --release --example noise_power_spectrum`

use synthreg::metrics::{ncc, radial_nps, RadialNps};
use synthreg::modality::{add_textured_noise, NoiseSpec};
use synthreg::volume::{Geometry, LabelMap, Volume};

fn main() -> synthreg::Result<()> {
    let g = Geometry::centered([128, 128, 8], [1.0; 3])?;
    let roi = LabelMap::filled(g, 1)?;
    let zero = Volume::filled(g, 0.0)?;
    let spectrum = |spec: &NoiseSpec, seed| -> synthreg::Result<RadialNps> {
        radial_nps(&add_textured_noise(&zero, &roi, 1, spec, seed)?, &roi, 1, 32)
    };

    let white = spectrum(&NoiseSpec::white(39.0), 1)?;
    let textured = spectrum(&NoiseSpec::textured(39.0, 0.08), 2)?;
    let textured_again = spectrum(&NoiseSpec::textured(39.0, 0.08), 3)?;

    println!("{} patches of 32 x 32", white.patches);
    println!("{:>10} {:>12} {:>12}", "cycles/mm", "white", "textured");
    for ((f, w), t) in white.bin_centers.iter().zip(&white.power).zip(&textured.power) {
        println!("{f:>10.4} {w:>12.1} {t:>12.1}");
    }
    println!("NCC textured vs textured (new seed) {:.4}", ncc(&textured, &textured_again)?);
    println!("NCC textured vs white               {:.4}", ncc(&textured, &white)?);
    Ok(())
}
