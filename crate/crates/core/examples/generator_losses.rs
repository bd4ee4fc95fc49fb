//! Intensity and gradient-difference losses on a translated phantom slice.
//!
//! `cargo run --release --example generator_losses`

use ndarray::Array2;
use synthreg::ganloss::{gradient_difference_loss, intensity_loss, total_generator_loss, ImagePair, LossWeights};
use synthreg::modality::{simulate, AcquisitionSpec, NoiseSpec, TissueTable, VibeParams};
use synthreg::phantom::{generate_phantom, PhantomSpec};
use synthreg::volume::{Geometry, Volume};

fn mid_slice(v: &Volume, shift: usize) -> Array2<f64> {
    let [nx, ny, nz] = v.dims();
    let s = v.axial_slice(nz / 2);
    Array2::from_shape_fn((ny, nx), |(r, c)| s[r * nx + (c + shift).min(nx - 1)] as f64)
}

fn main() -> synthreg::Result<()> {
    let grid = Geometry::desk();
    let table = TissueTable::builtin();
    let labels = generate_phantom(&PhantomSpec::new(2).with_arms(true), &grid)?;
    let ct = simulate(&labels, &table, &AcquisitionSpec::ct(100, NoiseSpec::none()))?.volume;
    let mri = simulate(&labels, &table, &AcquisitionSpec::mri(VibeParams::default(), NoiseSpec::none()))?.volume;

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "shift", "intensity", "gdl fwd", "gdl bwd", "total ct");
    for shift in [0, 1, 2, 4, 8] {
        let fwd = ImagePair::new(mid_slice(&mri, 0), mid_slice(&mri, shift))?;
        let bwd = ImagePair::new(mid_slice(&ct, 0), mid_slice(&ct, shift))?;
        let int = intensity_loss(&fwd, &bwd)?;
        let (gf, gb) = (gradient_difference_loss(&fwd)?, gradient_difference_loss(&bwd)?);
        let total = total_generator_loss(0.0, 0.0, int, gf, gb, &LossWeights::ct());
        println!("{shift:>6} {int:>10.4} {gf:>10.4} {gb:>10.4} {total:>10.3}");
    }
    Ok(())
}
