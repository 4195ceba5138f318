//! Reservoir-sampled episodic memory over past training triples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::kg::Triple;

/// Fixed-capacity uniform sample over everything streamed in (algorithm R).
#[derive(Clone, Debug)]
pub struct ReservoirBuffer {
    capacity: usize,
    items: Vec<Triple>,
    seen: u64,
}

impl ReservoirBuffer {
    pub fn new(capacity: usize) -> Self {
        ReservoirBuffer {
            capacity: capacity.max(1),
            items: Vec::new(),
            seen: 0,
        }
    }

    /// Streams a snapshot's training triples into the reservoir.
    pub fn update(&mut self, triples: &[Triple], rng: &mut ChaCha8Rng) {
        for &t in triples {
            self.seen += 1;
            if self.items.len() < self.capacity {
                self.items.push(t);
            } else {
                let j = rng.gen_range(0..self.seen);
                if (j as usize) < self.capacity {
                    self.items[j as usize] = t;
                }
            }
        }
    }

    /// Draws `m` triples without replacement (all of them if `m` exceeds the
    /// current size).
    pub fn sample(&self, m: usize, rng: &mut ChaCha8Rng) -> Vec<Triple> {
        let take = m.min(self.items.len());
        if take == 0 {
            return Vec::new();
        }
        rand::seq::index::sample(rng, self.items.len(), take)
            .iter()
            .map(|i| self.items[i])
            .collect()
    }

    pub fn as_slice(&self) -> &[Triple] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total triples ever streamed in.
    pub fn seen(&self) -> u64 {
        self.seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(i: u32) -> Triple {
        Triple::new(i, 0, i + 1)
    }

    #[test]
    fn capacity_at_least_total_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReservoirBuffer::new(100);
        let triples: Vec<Triple> = (0..60).map(t).collect();
        buf.update(&triples[..30], &mut rng);
        buf.update(&triples[30..], &mut rng);
        assert_eq!(buf.len(), 60);
        let mut got: Vec<Triple> = buf.as_slice().to_vec();
        got.sort();
        assert_eq!(got, triples);
    }

    #[test]
    fn sample_zero_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReservoirBuffer::new(10);
        buf.update(&(0..5).map(t).collect::<Vec<_>>(), &mut rng);
        assert!(buf.sample(0, &mut rng).is_empty());
        assert_eq!(buf.sample(99, &mut rng).len(), 5);
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        // 10^4 triples into a 100-slot reservoir over 10^3 trials: any given
        // triple lands with probability 0.01 ± 0.002. Pooling 20 probes
        // spread over the stream keeps the estimator noise well inside the
        // tolerance (a single probe alone has σ ≈ 0.003).
        let stream: Vec<Triple> = (0..10_000).map(t).collect();
        let probes: Vec<Triple> = (0..20).map(|k| t(123 + 499 * k)).collect();
        let mut hits = 0usize;
        let trials = 1000u64;
        for trial in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let mut buf = ReservoirBuffer::new(100);
            buf.update(&stream, &mut rng);
            let held: std::collections::HashSet<&Triple> = buf.as_slice().iter().collect();
            hits += probes.iter().filter(|p| held.contains(p)).count();
        }
        let freq = hits as f64 / (trials as f64 * probes.len() as f64);
        assert!((freq - 0.01).abs() < 0.002, "inclusion frequency {freq}");
    }
}
