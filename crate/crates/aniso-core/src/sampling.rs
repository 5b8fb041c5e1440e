//! Internal deterministic sampling helpers: seeded RNG construction, unit
//! directions, and low-discrepancy sequences used for shell sampling.
//!
//! Everything here is reproducible by construction — either seeded ChaCha
//! streams or closed-form Kronecker/golden-angle sequences — so that reports
//! built from "random" samples are byte-identical across runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-standard seeded RNG.
pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A uniformly random unit direction.
pub(crate) fn random_direction<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0_f64)).collect();
        let norm2: f64 = v.iter().map(|c| c * c).sum();
        if norm2 > 1e-4 && norm2 <= 1.0 {
            let norm = norm2.sqrt();
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// `count` well-spread unit directions (deterministic, low-discrepancy).
///
/// Dimension 1 alternates signs; dimension 2 uses the golden angle;
/// dimension 3 uses a Fibonacci sphere.
pub(crate) fn unit_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    const PHI: f64 = 1.618033988749894848;
    match n {
        1 => (0..count)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..count)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * ((i as f64 * PHI) % 1.0);
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        _ => (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let rad = (1.0 - z * z).max(0.0).sqrt();
                let theta = 2.0 * std::f64::consts::PI * ((i as f64 * PHI) % 1.0);
                vec![rad * theta.cos(), rad * theta.sin(), z]
            })
            .collect(),
    }
}

/// The `i`-th point of a rank-1 Kronecker lattice in `[0,1)^d` (d <= 3),
/// built on inverse powers of the plastic constant. Consecutive points fill
/// the cube far more evenly than pseudo-random draws.
pub(crate) fn kronecker_point(i: usize, d: usize) -> Vec<f64> {
    // Plastic constant: the real root of x^3 = x + 1.
    const PLASTIC: f64 = 1.324717957244746;
    (1..=d)
        .map(|k| {
            let alpha = PLASTIC.powi(-(k as i32));
            ((i as f64 + 1.0) * alpha) % 1.0
        })
        .collect()
}
