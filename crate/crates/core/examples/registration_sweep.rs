//! Generate a small dataset and run a reduced registration sweep on it.
//!
//! `cargo run --release --example registration_sweep [n_models] [out_dir]`

use std::path::PathBuf;

use synthreg::pipeline::{cmd_generate, cmd_sweep, DatasetConfig, SweepConfig};
use synthreg::registration::RegistrationConfig;

fn main() -> synthreg::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_models = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let root = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("synthreg-sweep"));

    let dataset = DatasetConfig {
        n_models,
        output_dir: root.join("dataset"),
        ..Default::default()
    };
    let generated = cmd_generate(&dataset)?;
    println!("models written {:?}, reused {:?}", generated.written, generated.skipped);

    let defaults = SweepConfig::default();
    let sweep = SweepConfig {
        dataset_dir: dataset.output_dir.clone(),
        output_dir: Some(root.join("sweep")),
        registration: RegistrationConfig {
            max_iterations: 100,
            ..defaults.registration.clone().with_sampling(0.02, 0)
        },
        ..defaults
    };
    let s = cmd_sweep(&sweep)?;
    println!("{:<9} {:<5} {:>8} {:>9} {:>9}", "pair", "metric", "spacing", "pre DSC", "post DSC");
    for r in &s.summary {
        println!(
            "{:<9} {:<5} {:>8} {:>9.3} {:>9.3}",
            r.pair, r.metric.to_string(), r.grid_spacing, r.mean_pre_dsc, r.mean_post_dsc
        );
    }
    println!("{} rows, {} failed; results in {}", s.rows.len(), s.failed_rows(), sweep.output_dir().display());
    Ok(())
}
