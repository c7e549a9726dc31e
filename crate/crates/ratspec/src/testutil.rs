//! Shared helpers for the unit-test suites.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::RationalModel;

/// Deterministic random conjugate-symmetric stable model, normalized to unit
/// energy.
pub(crate) fn random_symmetric_model(
    rng: &mut ChaCha8Rng,
    pairs: usize,
    with_real: bool,
) -> RationalModel {
    let mut poles = Vec::new();
    for _ in 0..pairs {
        let re = -rng.gen_range(0.05..1.0);
        let im = rng.gen_range(0.3..5.0);
        poles.push(Complex64::new(re, im));
        poles.push(Complex64::new(re, -im));
    }
    if with_real {
        poles.push(Complex64::new(-rng.gen_range(0.1..1.5), 0.0));
    }
    RationalModel::new(poles, 1.0, 1.0).unwrap().normalize_energy().unwrap()
}

/// Like [`random_symmetric_model`], but with pole widths two orders of
/// magnitude below the peak spacing, so each spectrum is close to a sum of
/// point masses at the pole frequencies.
pub(crate) fn random_near_axis_model(rng: &mut ChaCha8Rng, pairs: usize) -> RationalModel {
    let mut poles = Vec::new();
    for _ in 0..pairs {
        let re = -rng.gen_range(0.005..0.05);
        let im = rng.gen_range(0.3..5.0);
        poles.push(Complex64::new(re, im));
        poles.push(Complex64::new(re, -im));
    }
    RationalModel::new(poles, 1.0, 1.0).unwrap().normalize_energy().unwrap()
}

pub(crate) use crate::experiments::pearson;
