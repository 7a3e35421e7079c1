use serde::{Deserialize, Serialize};

use super::UqError;
use crate::scalar::Real;

const ZERO_CLAMP: f64 = 1e-6;
const MAX_ITERS: usize = 100;
const REL_TOL: f64 = 1e-10;
const ASYMPTOTIC_FROM: f64 = 10.0;

/// `ln(x) - digamma(x)` for `x > 0`, computed without cancellation for large `x`.
fn log_minus_digamma<T: Real>(x: T) -> T {
    if x >= T::lit(ASYMPTOTIC_FROM) {
        let r = T::one() / x;
        let r2 = r * r;
        // Bernoulli-number series
        r * T::lit(0.5)
            + r2 * (T::lit(1.0 / 12.0)
                - r2 * (T::lit(1.0 / 120.0)
                    - r2 * (T::lit(1.0 / 252.0)
                        - r2 * (T::lit(1.0 / 240.0)
                            - r2 * (T::lit(1.0 / 132.0)
                                - r2 * (T::lit(691.0 / 32760.0) - r2 * T::lit(1.0 / 12.0)))))))
    } else {
        x.ln() - digamma(x)
    }
}

/// Digamma function for `x > 0`.
pub fn digamma<T: Real>(mut x: T) -> T {
    let mut acc = T::zero();
    while x < T::lit(ASYMPTOTIC_FROM) {
        acc -= T::one() / x;
        x += T::one();
    }
    acc + x.ln() - log_minus_digamma(x)
}

/// Trigamma function for `x > 0`.
pub fn trigamma<T: Real>(mut x: T) -> T {
    let mut acc = T::zero();
    while x < T::lit(ASYMPTOTIC_FROM) {
        acc += T::one() / (x * x);
        x += T::one();
    }
    let r = T::one() / x;
    let r2 = r * r;
    acc + r
        + r2 * T::lit(0.5)
        + r2 * r
            * (T::lit(1.0 / 6.0)
                - r2 * (T::lit(1.0 / 30.0)
                    - r2 * (T::lit(1.0 / 42.0)
                        - r2 * (T::lit(1.0 / 30.0)
                            - r2 * (T::lit(5.0 / 66.0)
                                - r2 * (T::lit(691.0 / 2730.0) - r2 * T::lit(7.0 / 6.0)))))))
}

/// Two-parameter Gamma fit (shape/scale).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit<T: Real> {
    pub shape: T,
    pub scale: T,
    pub count: usize,
    /// Zero samples replaced by a tiny positive value before fitting.
    pub zeros_clamped: usize,
    pub iterations: usize,
}

impl<T: Real> GammaFit<T> {
    pub fn mean(&self) -> T {
        self.shape * self.scale
    }

    pub fn std(&self) -> T {
        self.shape.sqrt() * self.scale
    }
}

/// Maximum-likelihood Gamma fit by Newton iteration on the shape equation
/// `ln k - digamma(k) = ln(mean) - mean(ln x)`.
pub fn fit_gamma<T: Real>(samples: &[T]) -> Result<GammaFit<T>, UqError> {
    if samples.is_empty() {
        return Err(UqError::NoSamples);
    }
    let mut zeros = 0;
    let mut values = Vec::with_capacity(samples.len());
    for &v in samples {
        if !v.is_finite() || v < T::zero() {
            return Err(UqError::InvalidSample(v.as_f64()));
        }
        if v == T::zero() {
            zeros += 1;
            values.push(T::lit(ZERO_CLAMP));
        } else {
            values.push(v);
        }
    }
    let n = T::from_usize(values.len()).expect("count fits");
    let mean = values.iter().fold(T::zero(), |a, &v| a + v) / n;
    let var = values
        .iter()
        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
        / n;
    if var.as_f64() < 1e-18 {
        return Err(UqError::DegenerateSamples);
    }
    let mean_log = values.iter().fold(T::zero(), |a, &v| a + v.ln()) / n;
    let s = mean.ln() - mean_log;
    if !(s > T::zero()) {
        return Err(UqError::DegenerateSamples);
    }
    let three = T::lit(3.0);
    let mut k =
        (three - s + ((s - three) * (s - three) + T::lit(24.0) * s).sqrt()) / (T::lit(12.0) * s);
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let f = log_minus_digamma(k) - s;
        let df = T::one() / k - trigamma(k);
        let mut next = k - f / df;
        if !(next > T::zero()) {
            next = k * T::lit(0.5);
        }
        let step = (next - k).abs() / k;
        k = next;
        if step < T::lit(REL_TOL) {
            break;
        }
    }
    Ok(GammaFit {
        shape: k,
        scale: mean / k,
        count: values.len(),
        zeros_clamped: zeros,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Gamma};

    const EULER: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn special_values() {
        assert!((digamma(1.0f64) + EULER).abs() < 1e-14);
        assert!((digamma(0.5f64) + EULER + 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((trigamma(1.0f64) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        assert!((trigamma(0.5f64) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-13);
        // recurrences across the series threshold
        for x in [0.1f64, 3.7, 9.5, 9.99, 10.0, 25.0] {
            assert!(
                (digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-13,
                "{x}"
            );
            assert!(
                (trigamma(x) - trigamma(x + 1.0) - 1.0 / (x * x)).abs() < 1e-12,
                "{x}"
            );
        }
        assert!((digamma(3.0f32) - (1.5 - EULER as f32)).abs() < 1e-6);
    }

    fn draws<D: Distribution<f64>>(d: D, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn recovers_gamma_parameters() {
        let x = draws(Gamma::new(2.0, 0.5).unwrap(), 100_000, 11);
        let fit = fit_gamma(&x).unwrap();
        assert!((fit.shape / 2.0 - 1.0).abs() < 0.02, "{fit:?}");
        assert!((fit.scale / 0.5 - 1.0).abs() < 0.02, "{fit:?}");
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((fit.mean() / mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exponential_has_unit_shape() {
        let fit = fit_gamma(&draws(Exp::new(1.0).unwrap(), 100_000, 3)).unwrap();
        assert!((fit.shape - 1.0).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn degenerate_and_invalid() {
        assert_eq!(fit_gamma(&[0.7; 500]), Err(UqError::DegenerateSamples));
        assert_eq!(fit_gamma::<f64>(&[]), Err(UqError::NoSamples));
        assert_eq!(fit_gamma(&[1.0, -1.0]), Err(UqError::InvalidSample(-1.0)));
        let fit = fit_gamma(&[0.0, 1.0, 2.0, 0.5]).unwrap();
        assert_eq!(fit.zeros_clamped, 1);
    }

    #[test]
    fn newton_converges_fast() {
        let fit = fit_gamma(&draws(Gamma::new(40.0, 0.1).unwrap(), 5_000, 1)).unwrap();
        assert!(fit.iterations < 10);
        assert!((fit.shape / 40.0 - 1.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn moment_identity_and_scale_equivariance(
            k in 0.3f64..20.0,
            seed in any::<u64>(),
            c in 0.01f64..100.0,
        ) {
            let x = draws(Gamma::new(k, 1.0).unwrap(), 400, seed);
            let fit = fit_gamma(&x).unwrap();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            prop_assert!((fit.mean() / mean - 1.0).abs() < 1e-9);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let fit_c = fit_gamma(&scaled).unwrap();
            prop_assert!((fit_c.shape / fit.shape - 1.0).abs() < 1e-6);
            prop_assert!((fit_c.scale / (fit.scale * c) - 1.0).abs() < 1e-6);
        }
    }
}
