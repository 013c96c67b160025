//! Train the adaptive network and its plain-convolution twin on the same
//! data and seed, then compare them on held-out pairs.
//!
//! `cargo run --release --example ablation -- <dir>`

use rapnet::cli::commands::ablate_run;
use rapnet::config::RunConfig;
use rapnet::data::{synth_dataset, write_dataset, DegradeSpec, Role};

fn main() -> rapnet::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "ablation_run".into());
    let dir = std::path::Path::new(&dir);
    let pairs = synth_dataset::<f32>(2, 10, 32, 4, &DegradeSpec::with_ratio(4))?;
    let tagged: Vec<_> = pairs.iter().enumerate().map(|(i, p)| (if i < 8 { Role::Train } else { Role::Test }, p)).collect();
    write_dataset(&dir.join("data"), "toy", &tagged)?;

    let cfg = RunConfig::from_toml(
        "[network]\nfeatures = 16\n[train]\nepochs = 10\nbatch_size = 4\n",
        &[],
    )?;
    let report = ablate_run(&cfg, &dir.join("data/manifest.json"), &dir.join("runs"))?;
    for line in report.lines() {
        println!("{line}");
    }
    Ok(())
}
