//! Single-link propagation: exponential LOS blockage, dual-slope path loss
//! and normalized-Gamma (Nakagami-m power) fading.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::config::{Tier, TierParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One sampled link from a base station to the user at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub distance_m: f64,
    pub los: bool,
    pub tier: Tier,
    /// Power fading gain `|h|^2`, unit mean.
    pub fading_h: f64,
}

/// Probability that a link of length `d` is line-of-sight.
pub fn p_los<T: Scalar>(beta: T, d: T) -> T {
    (-beta * d).exp()
}

pub fn p_nlos<T: Scalar>(beta: T, d: T) -> T {
    -(-beta * d).exp_m1()
}

/// Linear path gain `c d^-alpha` for the LOS or NLOS branch.
pub fn path_loss(tier: &TierParams, los: bool, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Precondition(format!(
            "path loss is singular at distance {d}"
        )));
    }
    let (c, alpha) = tier.path_gain(los);
    Ok(path_gain(c, alpha, d))
}

#[inline]
pub fn path_gain<T: Scalar>(c: T, alpha: T, d: T) -> T {
    c * d.powf(-alpha)
}

/// Sampler for the unit-mean Gamma(n, 1/n) power gain.
#[derive(Debug, Clone, Copy)]
pub struct FadingSampler {
    gamma: Gamma<f64>,
}

impl FadingSampler {
    pub fn new(shape_n: u32) -> Self {
        assert!(shape_n >= 1, "Nakagami shape must be >= 1");
        let n = f64::from(shape_n);
        FadingSampler {
            gamma: Gamma::new(n, 1.0 / n).expect("positive shape and scale"),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.gamma.sample(rng)
    }
}

/// One draw of the normalized Gamma fading gain with integer shape.
pub fn sample_fading<R: Rng + ?Sized>(shape_n: u32, rng: &mut R) -> f64 {
    FadingSampler::new(shape_n).sample(rng)
}

/// Exact tail `P(H > x)` of `H ~ Gamma(n, 1/n)`.
pub fn gamma_ccdf<T: Scalar>(shape_n: u32, x: T) -> T {
    if x <= T::zero() {
        return T::one();
    }
    let n = T::from_u32(shape_n).expect("shape fits scalar");
    let nx = n * x;
    let mut term = T::one();
    let mut sum = T::one();
    for k in 1..shape_n {
        term = term * nx / T::from_u32(k).expect("k fits scalar");
        sum = sum + term;
    }
    (-nx).exp() * sum
}

/// Coefficient of the tight Gamma CDF bound `(1 - e^{-eta x})^N`:
/// `eta = N (N!)^{-1/N}`.
pub fn alzer_eta<T: Scalar>(n: u32) -> T {
    let nf = T::from_u32(n).expect("shape fits scalar");
    let log_fact = (1..=n).fold(T::zero(), |acc, k| {
        acc + T::from_u32(k).expect("k fits scalar").ln()
    });
    nf * (-log_fact / nf).exp()
}

/// `F(N, x) = 1 - (1 + x)^{-N}`, the per-interferer Laplace term of a
/// Gamma(N, 1/N) fade.
pub fn alzer_f<T: Scalar>(n: u32, x: T) -> T {
    let nf = T::from_u32(n).expect("shape fits scalar");
    -(-nf * x.ln_1p()).exp_m1()
}

/// Binomial coefficient as a float.
pub fn binomial<T: Scalar>(n: u32, k: u32) -> T {
    let k = k.min(n - k.min(n));
    (0..k).fold(T::one(), |acc, i| {
        acc * T::from_u32(n - i).expect("fits") / T::from_u32(i + 1).expect("fits")
    })
}
