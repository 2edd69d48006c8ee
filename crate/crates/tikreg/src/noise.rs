//! Seeded synthetic noise for experiment data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Noisy data samples together with the scalar noise level that produced
/// them, which whitening needs downstream.
#[derive(Clone, Debug)]
pub struct NoisySamples {
    pub values: Vec<f64>,
    /// Per-sample noise standard deviation, nu * max_j(g_j). Zero when
    /// nu = 0.
    pub zeta_e: f64,
}

/// Add white noise scaled to the data magnitude:
/// out_i = g_i + nu * max_j(g_j) * e_i with e_i standard normal.
///
/// The generator is ChaCha8 seeded directly with `seed`, so identical
/// (data, nu, seed) triples reproduce byte-identical output on any platform.
pub fn gen_noise(g_clean: &[f64], nu: f64, seed: u64) -> Result<NoisySamples> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!(
            "noise fraction must be nonnegative and finite, got {nu}"
        )));
    }
    if g_clean.is_empty() {
        return Err(Error::invalid("cannot add noise to an empty data vector"));
    }
    if nu == 0.0 {
        return Ok(NoisySamples {
            values: g_clean.to_vec(),
            zeta_e: 0.0,
        });
    }
    let max_g = g_clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let zeta_e = nu * max_g;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = g_clean
        .iter()
        .map(|&g| {
            let e: f64 = StandardNormal.sample(&mut rng);
            g + zeta_e * e
        })
        .collect();
    Ok(NoisySamples { values, zeta_e })
}
