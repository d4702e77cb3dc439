//! Counter-based standard-normal stream.
//!
//! Every normal draw is addressed by `(seed, step, component)`: the ChaCha
//! keystream for `seed` is positioned at a fixed offset derived from `step`,
//! and each pair of components consumes exactly two 64-bit words through a
//! Box-Muller transform. Any increment can be regenerated without replaying
//! the preceding steps.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    width: usize,
    words_per_step: u128,
}

impl NormalStream {
    /// A stream producing `width` normals per step.
    pub fn new(seed: u64, width: usize) -> Self {
        let pairs = width.div_ceil(2) as u128;
        Self { rng: ChaCha8Rng::seed_from_u64(seed), width, words_per_step: 4 * pairs }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Writes the `width` normals of `step` into `out`.
    pub fn fill_step(&mut self, step: u64, out: &mut [f64]) {
        assert_eq!(out.len(), self.width, "output slice must match stream width");
        self.rng.set_word_pos(step as u128 * self.words_per_step);
        let mut i = 0;
        while i < self.width {
            let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            out[i] = z0;
            if i + 1 < self.width {
                out[i + 1] = z1;
            }
            i += 2;
        }
    }
}

/// The normal addressed by `(seed, step, component)` in a stream of `width`.
pub fn normal_at(seed: u64, width: usize, step: u64, component: usize) -> f64 {
    let mut s = NormalStream::new(seed, width);
    let mut buf = vec![0.0; width];
    s.fill_step(step, &mut buf);
    buf[component]
}

fn box_muller(a: u64, b: u64) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) as f64 + 1.0) * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}
