//! Seeded random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 generator keyed by
//! `(seed, stream)`. ChaCha is counter based, so distinct stream ids give
//! independent sequences from the same integer seed, and a stream can be
//! recreated anywhere (a rayon worker, a later process) without coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used for forward-pass routing decisions.
pub const ROUTING_STREAM: u64 = 0;
/// Stream used by outcome providers (Bernoulli draws, noise flips, replay order).
pub const OUTCOME_STREAM: u64 = 1;
/// Base stream for per-problem permutation sampling; problem `i` uses `SHAP_STREAM_BASE + i`.
pub const SHAP_STREAM_BASE: u64 = 1 << 32;
/// Stream for scenario-level shuffles (grouping ablation, random pruning orders).
pub const SCENARIO_STREAM: u64 = 2;

pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The first `n` primes, the seed convention of the recorded agentic traces.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| !candidate.is_multiple_of(p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}
