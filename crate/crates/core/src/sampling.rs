//! Deterministic sample generators shared by the checks and the trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `k` in `base`.
fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut scale = inv;
    while k > 0 {
        out += (k % base) as f64 * scale;
        k /= base;
        scale *= inv;
    }
    out
}

/// `k`-th Halton point in `[0,1)^dim`. Dimensions beyond the prime table
/// fall back to scrambling with larger odd bases, which is adequate for
/// the low dimensions used here.
pub fn halton(k: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let base = PRIMES.get(d).copied().unwrap_or(2 * d as u64 + 55);
            radical_inverse(k as u64, base)
        })
        .collect()
}

/// `count` unit directions: the `2·dim` signed coordinate axes first, then
/// normalized Halton points mapped to `[-1,1]^dim`.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    for axis in 0..dim {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[axis] = sign;
            out.push(e);
        }
    }
    let mut k = 1;
    while out.len() < count {
        let p: Vec<f64> = halton(k, dim).iter().map(|c| 2.0 * c - 1.0).collect();
        k += 1;
        let n = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(p.iter().map(|c| c / n).collect());
        }
    }
    out.truncate(count);
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` points drawn uniformly from the axis-aligned box `[lo, hi]`.
pub fn uniform_in_box(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| lo.iter().zip(hi).map(|(a, b)| if a < b { rng.gen_range(*a..=*b) } else { *a }).collect())
        .collect()
}
