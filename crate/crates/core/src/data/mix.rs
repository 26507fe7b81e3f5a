use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::Manifest;
use crate::error::{Error, Result};

/// Number of contaminant records drawn for a primary:contaminant count ratio.
/// An infinite ratio disables contamination.
pub fn contaminant_count(primary: usize, ratio: f64) -> Result<usize> {
    if ratio.is_nan() || ratio <= 0.0 {
        return Err(Error::invalid(format!("contamination ratio {ratio} must be positive")));
    }
    if ratio.is_infinite() {
        return Ok(0);
    }
    Ok((primary as f64 / ratio).floor() as usize)
}

/// All primary records plus a seeded random subset of `⌊|primary|/ratio⌋`
/// contaminant records, shuffled together with the same seed.
pub fn mix_datasets(primary: &Manifest, contaminant: &Manifest, ratio: f64, seed: u64) -> Result<Manifest> {
    let k = contaminant_count(primary.len(), ratio)?;
    if k == 0 {
        return Ok(primary.clone());
    }
    if k > contaminant.len() {
        return Err(Error::invalid(format!(
            "ratio {ratio} needs {k} contaminant records but only {} are available",
            contaminant.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x6d6978);
    let mut picked = index::sample(&mut rng, contaminant.len(), k).into_vec();
    picked.sort_unstable();
    let mut records = primary.records.clone();
    records.extend(picked.into_iter().map(|i| contaminant.records[i].clone()));
    records.shuffle(&mut rng);
    Manifest::new(records)
}
