//! Seeded state sampling.
//!
//! All randomness in the toolkit flows through a ChaCha8 generator seeded
//! from a single `u64`, so every sample sequence is reproducible across runs
//! and platforms. Draws are uniform per coordinate over a per-model interval
//! box (the region where the model's assumptions are known to hold).

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-coordinate interval box describing the admissible state region.
#[derive(Debug, Clone)]
pub struct SampleBox {
    bounds: Vec<(f64, f64)>,
}

impl SampleBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        assert!(
            bounds.iter().all(|(lo, hi)| lo <= hi),
            "interval bounds must satisfy lo <= hi"
        );
        Self { bounds }
    }

    /// Symmetric box [-r, r]^dim.
    pub fn symmetric(dim: usize, radius: f64) -> Self {
        Self::new(vec![(-radius, radius); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)))
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.bounds.iter().map(|&(lo, hi)| {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }),
        )
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// The toolkit-wide generator: ChaCha8 seeded from a u64.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
