//! Random variate generators used by the samplers.
//!
//! * Inverse Gaussian by the transformation-with-multiple-roots method
//!   (squared normal, pick a root, accept with probability `μ/(μ+x)`).
//! * Pólya-Gamma `PG(1, c)` by the exact alternating-series method with a
//!   truncation point at 0.64.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Inverse Gaussian law with mean `mu` and shape `lambda`.
#[derive(Debug, Clone, Copy)]
pub struct InverseGaussian {
    mu: f64,
    lambda: f64,
}

impl InverseGaussian {
    pub fn new(mu: f64, lambda: f64) -> Option<Self> {
        (mu > 0.0 && lambda > 0.0 && mu.is_finite() && lambda.is_finite()).then_some(Self { mu, lambda })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (m, l) = (self.mu, self.lambda);
        (l / (2.0 * PI * x.powi(3))).sqrt() * (-l * (x - m).powi(2) / (2.0 * m * m * x)).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        ig_cdf(x, self.mu, self.lambda)
    }
}

impl Distribution<f64> for InverseGaussian {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (mu, lambda) = (self.mu, self.lambda);
        let n: f64 = rng.sample(StandardNormal);
        let w = mu * n * n / (2.0 * lambda);
        // μ(1 + w − sqrt(w² + 2w)) written without cancellation.
        let x = mu / (1.0 + w + (w * w + 2.0 * w).sqrt());
        let u: f64 = rng.random();
        if u * (mu + x) <= mu {
            x
        } else {
            mu * (mu / x)
        }
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(−a)` for `a ≥ 0`, accurate far into the tail.
fn ln_norm_sf(a: f64) -> f64 {
    if a < 30.0 {
        (0.5 * erfc(a * FRAC_1_SQRT_2)).ln()
    } else {
        let a2 = a * a;
        -0.5 * a2 - a.ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / a2 + 3.0 / (a2 * a2)).ln()
    }
}

/// Inverse Gaussian CDF; `mu = ∞` gives the Lévy limit.
pub fn ig_cdf(x: f64, mu: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let r = (lambda / x).sqrt();
    if mu.is_infinite() {
        return 2.0 * norm_cdf(-r);
    }
    let a = r * (x / mu - 1.0);
    let b = r * (x / mu + 1.0);
    let second = (2.0 * lambda / mu + ln_norm_sf(b)).exp();
    (norm_cdf(a) + second).min(1.0)
}

/// Pólya-Gamma `PG(1, c)` law.
#[derive(Debug, Clone, Copy)]
pub struct PolyaGamma {
    c: f64,
}

impl PolyaGamma {
    pub fn new(c: f64) -> Self {
        Self { c }
    }

    /// `E[ω] = tanh(c/2)/(2c)`, with the limit `1/4` at zero.
    pub fn mean(c: f64) -> f64 {
        pg_mean(c)
    }
}

pub fn pg_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

const PG_T: f64 = 0.64;

/// Coefficient `a_n(x)` of the alternating series for the `J*(1, z)` density.
fn pg_a(n: usize, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > PG_T {
        PI * k * (-0.5 * k * k * PI * PI * x).exp()
    } else {
        PI * k * (2.0 / (PI * x)).powf(1.5) * (-2.0 * k * k / x).exp()
    }
}

/// `IG(1/z, 1)` truncated to `(0, t)`.
fn truncated_ig<R: Rng + ?Sized>(z: f64, t: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > t {
        loop {
            let (mut e1, mut e2): (f64, f64) = (rng.sample(Exp1), rng.sample(Exp1));
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let x = t / (1.0 + t * e1).powi(2);
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        let ig = InverseGaussian { mu, lambda: 1.0 };
        loop {
            let x = ig.sample(rng);
            if x < t {
                return x;
            }
        }
    }
}

impl Distribution<f64> for PolyaGamma {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // PG(1, c) = J*(1, c/2) / 4.
        let z = 0.5 * self.c.abs();
        let k = PI * PI / 8.0 + 0.5 * z * z;
        let p = PI / (2.0 * k) * (-k * PG_T).exp();
        let q = 2.0 * (-z).exp() * ig_cdf(PG_T, if z > 0.0 { 1.0 / z } else { f64::INFINITY }, 1.0);
        loop {
            let x = if rng.random::<f64>() < p / (p + q) {
                PG_T + rng.sample::<f64, _>(Exp1) / k
            } else {
                truncated_ig(z, PG_T, rng)
            };
            let mut s = pg_a(0, x);
            let y = rng.random::<f64>() * s;
            let mut n = 0;
            loop {
                n += 1;
                if n % 2 == 1 {
                    s -= pg_a(n, x);
                    if y <= s {
                        return 0.25 * x;
                    }
                } else {
                    s += pg_a(n, x);
                    if y > s {
                        break;
                    }
                }
            }
        }
    }
}
