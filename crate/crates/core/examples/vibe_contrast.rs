//! VIBE signal of each tissue, and how it changes with flip angle.
//!
//! `cargo run --release --example vibe_contrast`

use synthreg::modality::{vibe_signal, TissueTable, VibeParams};

fn main() {
    let table = TissueTable::builtin();
    let angles = [5.0, 10.0, 15.0, 25.0];
    print!("{:<16}", "tissue");
    for a in angles {
        print!(" {:>9}", format!("{a} deg"));
    }
    println!();
    for t in table.organs.values() {
        print!("{:<16}", t.name);
        for alpha_deg in angles {
            let p = VibeParams {
                alpha_deg,
                ..VibeParams::default()
            };
            print!(" {:>9.5}", vibe_signal(t.t1, t.t2, t.rho, &p));
        }
        println!();
    }
}
