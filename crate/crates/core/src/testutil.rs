//! Small helpers shared by unit tests: a self-contained RNG so test vectors
//! stay frozen regardless of external crates, and a central-difference stub.

/// 64-bit LCG (Knuth's MMIX constants). Test-only.
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.state
    }

    /// Uniform in [-1, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    pub fn vector(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_f64()).collect()
    }
}

/// Central finite difference (f(+h) - f(-h)) / 2h, where `f` receives the
/// signed perturbation to apply.
pub fn central_diff<F: FnMut(f64) -> f64>(step: f64, mut f: F) -> f64 {
    (f(step) - f(-step)) / (2.0 * step)
}
