use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LATTICE: usize = 256;

/// Band-limited value noise: uniform random values on a square lattice with
/// `cell` metre spacing, bilinearly interpolated and tiled every
/// `256 * cell` metres. Values lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueNoise {
    cell: f64,
    values: Vec<f32>,
}

impl ValueNoise {
    pub fn new(seed: u64, cell: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..LATTICE * LATTICE)
            .map(|_| rng.random::<f32>())
            .collect();
        Self { cell, values }
    }

    #[inline]
    fn lattice(&self, i: i64, j: i64) -> f64 {
        let n = LATTICE as i64;
        self.values[(j.rem_euclid(n) * n + i.rem_euclid(n)) as usize] as f64
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let (fx, fy) = (gx.floor(), gy.floor());
        let (tx, ty) = (gx - fx, gy - fy);
        let (i, j) = (fx as i64, fy as i64);
        let top = self.lattice(i, j) * (1.0 - tx) + self.lattice(i + 1, j) * tx;
        let bot = self.lattice(i, j + 1) * (1.0 - tx) + self.lattice(i + 1, j + 1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}
