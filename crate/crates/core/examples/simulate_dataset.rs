//! Build reduced-resolution training pairs with the Wald protocol and write
//! them as NPY files plus a manifest.
//!
//! `cargo run --example simulate_dataset -- <dir>`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rapnet::data::{synth_scene, wald_degrade, write_dataset, DegradeSpec, Manifest, Role};

fn main() -> rapnet::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "simulated".into());
    let dir = std::path::Path::new(&dir);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = DegradeSpec {
        gnyq: vec![0.35, 0.3, 0.28, 0.25],
        ..DegradeSpec::with_ratio(4)
    };
    let mut pairs = Vec::new();
    for _ in 0..4 {
        // a PAN four times larger than the HRMS is degraded alongside it
        let (hrms, _) = synth_scene::<f32>(&mut rng, 64, 4);
        let (_, pan) = synth_scene::<f32>(&mut rng, 256, 4);
        pairs.push(wald_degrade(&hrms, &pan, &spec, 1.0)?);
    }
    let tagged: Vec<_> = pairs.iter().enumerate().map(|(i, p)| (if i < 3 { Role::Train } else { Role::Test }, p)).collect();
    write_dataset(dir, "scene", &tagged)?;

    let m = Manifest::load(&dir.join("manifest.json"))?;
    let back = m.load_pairs::<f32>(Some(Role::Train))?;
    println!("{} train pairs, pan {} ms {}", back.len(), back[0].pan.shape(), back[0].ms.shape());
    println!("sigmas: {:?}", spec.sigmas(4)?);
    Ok(())
}
