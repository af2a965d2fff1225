//! Regenerates `assets/landmark_basis.csv` from its seed.

use jointmotion_core::metrics::{LandmarkBasis, LANDMARKS, LANDMARK_SEED};

fn main() -> jointmotion_core::Result<()> {
    let basis = LandmarkBasis::seeded(LANDMARK_SEED, LANDMARKS, 103)?;
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/landmark_basis.csv");
    std::fs::write(path, basis.to_csv())?;
    println!("wrote {path}");
    Ok(())
}
