//! Per-class building blocks of the coverage integrals.
//!
//! Independent LOS thinning splits each tier's PPP into a LOS and an NLOS
//! process, giving four link classes. For a class with intensity `lambda`,
//! LOS probability `p(t)`, transmit power `P`, path gain `c t^-alpha` and
//! Gamma(N, 1/N) fading:
//!
//! - void exponent: `Lambda(r) = 2 pi lambda int_0^r p(t) t dt`
//! - nearest-point density: `2 pi lambda p(x) x exp(-Lambda(x))`
//! - interference Laplace exponent beyond `r0` at argument `s`:
//!   `2 pi lambda int_r0^inf F(N, s P c t^-alpha / N) p(t) t dt`
//!   with `F(N, z) = 1 - (1 + z)^-N`.

use std::f64::consts::PI;

use crate::channel::alzer_f;
use crate::config::{NetworkConfig, Tier};
use crate::quadrature::{integrate, Domain, Integral, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkClass {
    pub tier: Tier,
    pub los: bool,
    pub density: f64,
    /// Transmit power relative to a small cell.
    pub power: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub shape: u32,
}

impl LinkClass {
    pub fn new(cfg: &NetworkConfig, tier: Tier, los: bool) -> Self {
        let t = cfg.tier(tier);
        let (c, alpha) = t.path_gain(los);
        LinkClass {
            tier,
            los,
            density: t.density,
            power: cfg.relative_power(tier),
            c,
            alpha,
            beta: t.beta,
            shape: t.fading_shape(los),
        }
    }

    /// The other LOS state of the same tier.
    pub fn sibling(&self, cfg: &NetworkConfig) -> Self {
        LinkClass::new(cfg, self.tier, !self.los)
    }

    #[inline]
    pub fn los_probability(&self, t: f64) -> f64 {
        if self.los {
            (-self.beta * t).exp()
        } else {
            -(-self.beta * t).exp_m1()
        }
    }

    /// Long-term received power at distance `r`.
    #[inline]
    pub fn gain(&self, r: f64) -> f64 {
        self.power * self.c * r.powf(-self.alpha)
    }

    /// Distance at which the long-term received power equals `p`.
    #[inline]
    pub fn radius_at_power(&self, p: f64) -> f64 {
        (self.power * self.c / p).powf(1.0 / self.alpha)
    }

    /// `Lambda(r)`, closed form.
    pub fn void_exponent(&self, r: f64) -> f64 {
        if self.density <= 0.0 || r <= 0.0 {
            return 0.0;
        }
        let area = if self.los {
            los_area_integral(self.beta, r)
        } else {
            nlos_area_integral(self.beta, r)
        };
        2.0 * PI * self.density * area.max(0.0)
    }

    /// Density of the distance to the nearest point of this class.
    pub fn nearest_density(&self, x: f64) -> f64 {
        if self.density <= 0.0 || x <= 0.0 {
            return 0.0;
        }
        2.0 * PI * self.density * self.los_probability(x) * x * (-self.void_exponent(x)).exp()
    }

    /// Length scale of the nearest-point distance, used to map `[0, inf)`.
    pub fn length_scale(&self) -> f64 {
        let l = 1.0 / (PI * self.density).sqrt();
        if self.los && self.beta > 0.0 {
            l.min(1.0 / self.beta)
        } else {
            l
        }
    }

    /// Laplace exponent of the interference from points beyond `r0`.
    pub fn interference_exponent(&self, s: f64, r0: f64, spec: &QuadratureSpec<f64>) -> Integral<f64> {
        if s <= 0.0 {
            return Integral::zero();
        }
        self.exponent_derivative(s, r0, 0, spec)
    }

    /// `order`-th derivative in `s` of [`Self::interference_exponent`].
    ///
    /// With `a = P c t^-alpha / N`, the per-point term is
    /// `d^m/ds^m [1 - (1 + s a)^-N] = (-1)^{m+1} N (N+1)...(N+m-1) a^m (1 + s a)^{-N-m}`.
    pub fn exponent_derivative(&self, s: f64, r0: f64, order: u32, spec: &QuadratureSpec<f64>) -> Integral<f64> {
        if self.density <= 0.0 {
            return Integral::zero();
        }
        let n = f64::from(self.shape);
        let pc = self.power * self.c / n;
        let rising: f64 = (0..order).map(|i| n + f64::from(i)).product();
        let sign = if order % 2 == 1 { 1.0 } else { -1.0 };
        let m = f64::from(order);
        let integrand = |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let a = pc * t.powf(-self.alpha);
            let v = if order == 0 {
                alzer_f(self.shape, s * a)
            } else {
                sign * rising * a.powf(m) * (-(n + m) * (s * a).ln_1p()).exp()
            };
            v * self.los_probability(t) * t
        };
        // radius where the per-point argument reaches one
        let knee = (s.max(f64::MIN_POSITIVE) * pc).powf(1.0 / self.alpha);
        let mut scale = r0.max(knee);
        if self.los && self.beta > 0.0 {
            scale = scale.min(r0.max(1.0 / self.beta));
        }
        let scale = scale.max(1e-3);
        let r = match integrate(integrand, Domain::SemiInfinite { lower: r0.max(0.0), scale }, spec) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("interference exponent did not converge: {:?}", e.best);
                e.best
            }
        };
        r * (2.0 * PI * self.density)
    }
}

/// `int_0^r exp(-beta t) t dt`, stable for small `beta r`.
pub fn los_area_integral(beta: f64, r: f64) -> f64 {
    let u = beta * r;
    if u < 0.5 {
        r * r * (0.5 - area_series(u))
    } else {
        (-(-u).exp_m1() - u * (-u).exp()) / (beta * beta)
    }
}

/// `int_0^r (1 - exp(-beta t)) t dt`.
pub fn nlos_area_integral(beta: f64, r: f64) -> f64 {
    let u = beta * r;
    if u < 0.5 {
        r * r * area_series(u)
    } else {
        0.5 * r * r - los_area_integral(beta, r)
    }
}

/// `(u^2 / 2 - 1 + e^-u (1 + u)) / u^2 = sum_{k>=3} (-1)^{k+1} (k - 1) u^{k-2} / k!`
fn area_series(u: f64) -> f64 {
    let mut term = 0.5; // u^{k-2} / k! at k = 2
    let mut sum = 0.0;
    for k in 3..24 {
        term *= u / f64::from(k);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * f64::from(k - 1) * term;
    }
    sum
}

/// The four classes in a fixed order: small LOS, small NLOS, macro LOS,
/// macro NLOS.
pub fn all_classes(cfg: &NetworkConfig) -> [LinkClass; 4] {
    [
        LinkClass::new(cfg, Tier::Small, true),
        LinkClass::new(cfg, Tier::Small, false),
        LinkClass::new(cfg, Tier::Macro, true),
        LinkClass::new(cfg, Tier::Macro, false),
    ]
}
