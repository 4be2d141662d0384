//! Complex Wiener increments for the diffusion term.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Reproducible stream of complex increments dξ with `M(dξ) = M(dξ²) = 0`
/// and `M(|dξ|²) = dt`.
///
/// Each `(seed, stream_id)` pair selects an independent ChaCha stream, so the
/// same pair always produces the same increments bit for bit.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// One increment over a step of length `dt`.
    pub fn increment(&mut self, dt: f64) -> Complex64 {
        let s = (0.5 * dt).sqrt();
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    }

    /// Increment over `dt` assembled from `substeps` finer increments, so a
    /// run at step `dt` and a run at `dt/substeps` see the same Brownian path.
    pub fn increment_refined(&mut self, dt: f64, substeps: u32) -> Complex64 {
        let fine = dt / substeps as f64;
        (0..substeps).map(|_| self.increment(fine)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = NoiseStream::new(42, 7);
        let mut b = NoiseStream::new(42, 7);
        for _ in 0..100 {
            let (x, y) = (a.increment(0.01), b.increment(0.01));
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        let mut c = NoiseStream::new(42, 8);
        assert_ne!(NoiseStream::new(42, 7).increment(0.01), c.increment(0.01));
    }

    #[test]
    fn increment_statistics() {
        let dt = 0.04;
        let n = 200_000;
        let mut s = NoiseStream::new(1, 0);
        let (mut mre, mut mim, mut vre, mut vim, mut sq_re, mut abs2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = s.increment(dt);
            mre += x.re;
            mim += x.im;
            vre += x.re * x.re;
            vim += x.im * x.im;
            sq_re += (x * x).re;
            abs2 += x.norm_sqr();
        }
        let nf = n as f64;
        // standard errors: mean ~ sqrt(dt/2/n) ≈ 3.2e-4, variance ~ dt/2·sqrt(2/n) ≈ 6e-5
        assert!((mre / nf).abs() < 2e-3);
        assert!((mim / nf).abs() < 2e-3);
        assert!((vre / nf - dt / 2.0).abs() < 5e-4);
        assert!((vim / nf - dt / 2.0).abs() < 5e-4);
        assert!((sq_re / nf).abs() < 5e-4);
        assert!((abs2 / nf - dt).abs() < 5e-4);
    }

    #[test]
    fn refined_increments_sum_fine_path() {
        let mut coarse = NoiseStream::new(9, 3);
        let mut fine = NoiseStream::new(9, 3);
        for _ in 0..10 {
            let c = coarse.increment_refined(0.02, 2);
            let f = fine.increment(0.01) + fine.increment(0.01);
            assert_eq!(c, f);
        }
    }
}
