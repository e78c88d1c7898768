//! Brute-force reference computations used to check the closed forms.
//!
//! Nothing here shares code with the production paths: each routine works
//! directly on sample paths of the hidden source.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Probability that the symmetric chain is back in its start state after
/// `n` steps, summed over all `2^n` flip patterns.
pub fn enumerate_return_prob(n: u32, p: f64) -> f64 {
    (0u64..1 << n)
        .map(|mask| {
            let flips = mask.count_ones();
            if flips % 2 == 0 {
                (1.0 - p).powi(flips as i32) * p.powi((n - flips) as i32)
            } else {
                0.0
            }
        })
        .sum()
}

/// AoII at slot `theta` along one source path that started synchronised
/// at slot 0 (the monitor holds `X(0)` from slot 1 on). Bit `k` of
/// `flips` says whether the source flipped entering slot `k + 1`.
fn path_aoii(theta: u32, flips: u64) -> u32 {
    let mut x = 0u8;
    let mut last_match = 0u32;
    for slot in 1..=theta {
        if flips >> (slot - 1) & 1 == 1 {
            x ^= 1;
        }
        if x == 0 {
            last_match = slot;
        }
    }
    theta - last_match
}

/// AoII distribution after `theta` slots without sampling, obtained by
/// enumerating all `2^theta` source paths following a synchronising
/// sample and binning their AoII.
pub fn forward_filter_belief(theta: u32, p: f64) -> Vec<f64> {
    let mut mass = vec![0.0; theta as usize + 1];
    for flips in 0u64..1 << theta {
        let k = flips.count_ones() as i32;
        let prob = (1.0 - p).powi(k) * p.powi(theta as i32 - k);
        mass[path_aoii(theta, flips) as usize] += prob;
    }
    mass
}

/// Monte Carlo estimate of `E[AoII | theta slots since a sample]`,
/// returned as `(mean, standard error)`.
pub fn monte_carlo_expected_aoii(theta: u32, p: f64, paths: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..paths {
        let mut flips = 0u64;
        for k in 0..theta {
            if rng.gen::<f64>() >= p {
                flips |= 1 << k;
            }
        }
        let d = path_aoii(theta, flips) as f64;
        sum += d;
        sum_sq += d * d;
    }
    let n = paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}
