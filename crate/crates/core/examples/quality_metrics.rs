//! Image-quality metrics between a clean CT and degraded copies of it.
//!
//! `cargo run --release --example quality_metrics`

use synthreg::modality::{add_textured_noise, simulate, AcquisitionSpec, NoiseSpec, TissueTable};
use synthreg::phantom::{generate_phantom, organ, PhantomSpec};
use synthreg::pipeline::evaluate_pair;
use synthreg::volume::{gaussian_smooth, Geometry};

fn main() -> synthreg::Result<()> {
    let labels = generate_phantom(&PhantomSpec::new(0), &Geometry::desk())?;
    let sim = simulate(&labels, &TissueTable::builtin(), &AcquisitionSpec::ct(100, NoiseSpec::none()))?;
    let clean = sim.volume;
    let body = labels.select_where(|id| id != organ::BACKGROUND);

    let candidates = [
        ("identical", clean.clone()),
        ("noise 20 HU", add_textured_noise(&clean, &body, 1, &NoiseSpec::white(20.0 / sim.window.native_per_unit()), 1)?),
        ("noise 60 HU", add_textured_noise(&clean, &body, 1, &NoiseSpec::white(60.0 / sim.window.native_per_unit()), 1)?),
        ("blur 2 mm", gaussian_smooth(&clean, 2.0)?),
        ("blur 6 mm", gaussian_smooth(&clean, 6.0)?),
    ];
    println!("{:<12} {:>8} {:>7} {:>7} {:>7} {:>7} {:>8}", "candidate", "mae HU", "ssim", "fsim", "epr", "egr", "nm HU");
    for (name, v) in candidates {
        let m = evaluate_pair(&v, &clean, &labels, &sim.window)?;
        println!(
            "{name:<12} {:>8.2} {:>7.4} {:>7.4} {:>7.3} {:>7.3} {:>8.2}",
            m["mae"], m["ssim"], m["fsim"], m["epr"], m["egr"], m["nm"]
        );
    }
    Ok(())
}
