//! Filtered uniform negative sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{FilterIndex, Triple};

/// Attempts per requested negative before giving up.
const RETRY_BUDGET: usize = 1000;

/// Draws `k` corruptions of `triple`: each picks head or tail uniformly and
/// replaces it with a uniform entity, rejecting corruptions that form a
/// known-true triple in `filter`.
pub fn negative_sample(
    triple: Triple,
    vocab_size: usize,
    k: usize,
    filter: &FilterIndex,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Triple>> {
    debug_assert!(k >= 1);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut accepted = None;
        for _ in 0..RETRY_BUDGET {
            let corrupt_head = rng.gen_bool(0.5);
            let candidate = rng.gen_range(0..vocab_size) as u32;
            let corrupted = if corrupt_head {
                Triple::new(candidate, triple.relation, triple.tail)
            } else {
                Triple::new(triple.head, triple.relation, candidate)
            };
            if !filter.contains(corrupted.head, corrupted.relation, corrupted.tail) {
                accepted = Some(corrupted);
                break;
            }
        }
        match accepted {
            Some(neg) => out.push(neg),
            None => {
                return Err(Error::Sampling(format!(
                    "no valid corruption of ({}, {}, {}) after {RETRY_BUDGET} attempts",
                    triple.head, triple.relation, triple.tail
                )))
            }
        }
    }
    Ok(out)
}
