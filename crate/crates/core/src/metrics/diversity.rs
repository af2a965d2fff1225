use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_SET_SIZE: usize = 50;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance between the `i`-th members of two disjoint
/// random subsets of `set_size` features each.
pub fn diversity(features: &[Vec<f64>], set_size: usize, rng: &mut impl Rng) -> Result<f64> {
    if set_size == 0 {
        return Err(Error::Config("diversity set size must be positive".into()));
    }
    if features.len() < 2 * set_size {
        return Err(Error::Data(format!(
            "diversity with set size {set_size} needs at least {} clips, got {}",
            2 * set_size,
            features.len()
        )));
    }
    let picks = sample(rng, features.len(), 2 * set_size).into_vec();
    let (a, b) = picks.split_at(set_size);
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(&i, &j)| distance(&features[i], &features[j]))
        .sum();
    Ok(total / set_size as f64)
}
