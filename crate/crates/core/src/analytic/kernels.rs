//! Coverage kernels: the Alzer-expanded success probabilities for a
//! typical user, integrated over the serving distance.
//!
//! A kernel at effective threshold `tau` approximates
//! `P(H g(x) > tau (I + sigma^2), association event)` by
//! `sum_n c_n E[exp(-s_n (I + sigma^2))]` with
//! `c_n = (-1)^{n+1} C(N, n)` and `s_n = n eta tau / g(x)`.

use crate::channel::{alzer_eta, binomial};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Domain, Integral, QuadratureSpec};

use super::geometry::LinkClass;

/// Alternating binomial weights and scaled arguments of the expansion.
pub(crate) fn expansion(shape: u32) -> Vec<(f64, f64)> {
    let eta: f64 = alzer_eta(shape);
    (1..=shape)
        .map(|n| {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            (f64::from(n) * eta, sign * binomial::<f64>(shape, n))
        })
        .collect()
}

fn outer_result(r: std::result::Result<Integral<f64>, crate::quadrature::NonConvergence<f64>>, extra: f64) -> Result<Integral<f64>> {
    match r {
        Ok(i) => Ok(Integral {
            value: i.value,
            error: i.error + extra,
        }),
        Err(e) => Err(Error::NonConvergence {
            value: e.best.value,
            error: e.best.error + extra,
        }),
    }
}

/// Kernel with a single serving class and weighted association boundaries.
///
/// A point of class `c` at distance `r` is excluded (would have won the
/// association) when `w_c * gain_c(r) > gain_k(x)`. All remaining points
/// interfere.
pub(crate) fn serving_kernel(
    classes: &[LinkClass; 4],
    k: usize,
    weights: [f64; 4],
    tau: f64,
    noise: f64,
    outer: &QuadratureSpec<f64>,
    inner: &QuadratureSpec<f64>,
) -> Result<Integral<f64>> {
    let serv = classes[k];
    if serv.density <= 0.0 {
        return Ok(Integral::zero());
    }
    let terms = expansion(serv.shape);
    let mut worst = 0.0f64;
    let f = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let g = serv.gain(x);
        let mut radii = [x; 4];
        let mut void = 0.0;
        for (c, class) in classes.iter().enumerate() {
            if c != k {
                radii[c] = class.radius_at_power(g / weights[c]);
                void += class.void_exponent(radii[c]);
            }
        }
        let dens = serv.nearest_density(x) * (-void).exp();
        if dens == 0.0 || tau <= 0.0 {
            return dens;
        }
        let mut acc = 0.0;
        let mut err = 0.0;
        for &(n_eta, cn) in &terms {
            let s = n_eta * tau / g;
            let mut e = s * noise;
            let mut de = 0.0;
            for (c, class) in classes.iter().enumerate() {
                let r = class.interference_exponent(s, radii[c], inner);
                e += r.value;
                de += r.error;
            }
            let t = cn * (-e).exp();
            acc += t;
            err += t.abs() * de;
        }
        worst = worst.max(err);
        dens * acc
    };
    let r = integrate(
        f,
        Domain::SemiInfinite {
            lower: 0.0,
            scale: serv.length_scale(),
        },
        outer,
    );
    outer_result(r, worst)
}

/// Kernel of the range-expanded case: serving small class `ks`, strongest
/// macro (the SIC target) of class `j` at distance `R` with
/// `gain_k(x) < gain_j(R) <= b gain_k(x)`.
///
/// The target is removed from the interference. With `target_tau` set, the
/// target is put back with its own threshold multiplier, which turns the
/// kernel into the probability of `H g > target_tau X1 + tau (I + sigma^2)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn expanded_kernel(
    classes: &[LinkClass; 4],
    ks: usize,
    j: usize,
    bias: f64,
    tau: f64,
    target_tau: Option<f64>,
    noise: f64,
    outer: &QuadratureSpec<f64>,
    inner: &QuadratureSpec<f64>,
) -> Result<Integral<f64>> {
    let serv = classes[ks];
    let sib = classes[ks ^ 1];
    let mj = classes[j];
    let mjbar = classes[j ^ 1];
    if serv.density <= 0.0 || mj.density <= 0.0 || bias <= 1.0 {
        return Ok(Integral::zero());
    }
    let terms = expansion(serv.shape);
    let target_tau = target_tau.unwrap_or(0.0);
    let fading = tau > 0.0 || target_tau > 0.0;
    let n_j = f64::from(mj.shape);
    let mut worst = 0.0f64;
    let mut failed: Option<Integral<f64>> = None;

    let f = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let g = serv.gain(x);
        let r_sib = sib.radius_at_power(g);
        let base = serv.nearest_density(x) * (-sib.void_exponent(r_sib)).exp();
        if base == 0.0 {
            return 0.0;
        }
        let r_lo = mj.radius_at_power(bias * g);
        let r_hi = mj.radius_at_power(g);

        // per-n factors that depend on x only
        let mut own = Vec::with_capacity(terms.len());
        let mut own_err = 0.0f64;
        if fading {
            for &(n_eta, cn) in &terms {
                let s = n_eta * tau / g;
                let a = serv.interference_exponent(s, x, inner);
                let b = sib.interference_exponent(s, r_sib, inner);
                own_err = own_err.max(a.error + b.error);
                own.push((n_eta, cn * (-(s * noise) - a.value - b.value).exp()));
            }
        }

        let mut node_err = 0.0f64;
        let h = |big_r: f64| {
            let pj = mj.gain(big_r);
            let rho = mjbar.radius_at_power(pj);
            let dens = mj.nearest_density(big_r) * (-mjbar.void_exponent(rho)).exp();
            if !fading || dens == 0.0 {
                return dens;
            }
            let mut acc = 0.0;
            for &(n_eta, w) in &own {
                let s = n_eta * tau / g;
                let a = mj.interference_exponent(s, big_r, inner);
                let b = mjbar.interference_exponent(s, rho, inner);
                let mut v = w * (-a.value - b.value).exp();
                if target_tau > 0.0 {
                    let sx = n_eta * target_tau / g;
                    v *= (-n_j * (sx * pj / n_j).ln_1p()).exp();
                }
                node_err = node_err.max(a.error + b.error);
                acc += v;
            }
            dens * acc
        };
        let r = match integrate(h, Domain::Finite(r_lo, r_hi), inner) {
            Ok(r) => r,
            Err(e) => {
                failed = Some(e.best);
                e.best
            }
        };
        worst = worst.max(r.error + (own_err + node_err) * r.value.abs());
        base * r.value
    };
    let r = integrate(
        f,
        Domain::SemiInfinite {
            lower: 0.0,
            scale: serv.length_scale(),
        },
        outer,
    );
    if let Some(best) = failed {
        log::warn!("inner dominant-macro integral did not converge (best {:?})", best);
    }
    outer_result(r, worst)
}

/// Range-expanded kernel of the SIC rescue event for the secondary layer:
/// `P(D and not 0)` with `0 = {S >= tau_m (X1 + J)}`,
/// `D = {S >= tau_n J}`, `J` the interference without `X1` plus noise and
/// `tau_n > tau_m`.
///
/// Writing `max(tau_m (X1 + J), tau_n J) = tau_n J + tau_m (X1 - k J)^+` with
/// `k = (tau_n - tau_m) / tau_m` and averaging over the Gamma(N, 1/N) fade
/// of `X1 = p_x H` gives, per Alzer term with argument `s`,
/// `E[e^{-s max}] = L(s tau_n) - sum_{k<N} w_k nu^k / k! (-1)^k L^(k)(s tau_n + nu)`
/// where `L` is the Laplace transform of `J`, `nu = N k / p_x` and
/// `w_k = 1 - (N / (N + s tau_m p_x))^{N-k}`. The subtracted sum is the
/// rescue probability.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rescue_kernel(
    classes: &[LinkClass; 4],
    ks: usize,
    j: usize,
    bias: f64,
    tau_m: f64,
    tau_n: f64,
    noise: f64,
    outer: &QuadratureSpec<f64>,
    inner: &QuadratureSpec<f64>,
) -> Result<Integral<f64>> {
    let serv = classes[ks];
    let sib = classes[ks ^ 1];
    let mj = classes[j];
    let mjbar = classes[j ^ 1];
    if serv.density <= 0.0 || mj.density <= 0.0 || bias <= 1.0 || !(tau_n > tau_m && tau_m > 0.0) {
        return Ok(Integral::zero());
    }
    let terms = expansion(serv.shape);
    let n_x = mj.shape as usize;
    let nf = f64::from(mj.shape);
    let kappa = (tau_n - tau_m) / tau_m;
    let mut worst = 0.0f64;
    let mut failed: Option<Integral<f64>> = None;

    let f = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let g = serv.gain(x);
        let r_sib = sib.radius_at_power(g);
        let base = serv.nearest_density(x) * (-sib.void_exponent(r_sib)).exp();
        if base == 0.0 {
            return 0.0;
        }
        let r_lo = mj.radius_at_power(bias * g);
        let r_hi = mj.radius_at_power(g);
        let mut node_err = 0.0f64;
        let h = |big_r: f64| {
            let px = mj.gain(big_r);
            let rho = mjbar.radius_at_power(px);
            let dens = mj.nearest_density(big_r) * (-mjbar.void_exponent(rho)).exp();
            if dens == 0.0 {
                return 0.0;
            }
            let nu = nf * kappa / px;
            let field = [(serv, x), (sib, r_sib), (mj, big_r), (mjbar, rho)];
            let mut acc = 0.0;
            for &(n_eta, cn) in &terms {
                let s = n_eta / g;
                let u = s * tau_n + nu;
                // phi[m] = m-th derivative of the log-Laplace exponent of J at u
                let mut phi = vec![0.0; n_x];
                phi[0] = u * noise;
                if n_x > 1 {
                    phi[1] = noise;
                }
                let mut err = 0.0;
                for &(class, r0) in &field {
                    for (m, slot) in phi.iter_mut().enumerate() {
                        let d = class.exponent_derivative(u, r0, m as u32, inner);
                        *slot += d.value;
                        err += d.error;
                    }
                }
                node_err = node_err.max(err);
                let moments = laplace_moments(&phi);
                let ratio = nf / (nf + s * tau_m * px);
                let mut sum = 0.0;
                let mut pow = 1.0;
                for (k, mk) in moments.iter().enumerate() {
                    let w = 1.0 - ratio.powi((n_x - k) as i32);
                    sum += w * pow * mk;
                    pow *= nu / (k + 1) as f64;
                }
                acc += cn * (-phi[0]).exp() * sum;
            }
            dens * acc
        };
        let r = match integrate(h, Domain::Finite(r_lo, r_hi), inner) {
            Ok(r) => r,
            Err(e) => {
                failed = Some(e.best);
                e.best
            }
        };
        worst = worst.max(r.error + node_err * r.value.abs());
        base * r.value
    };
    let r = integrate(
        f,
        Domain::SemiInfinite {
            lower: 0.0,
            scale: serv.length_scale(),
        },
        outer,
    );
    if let Some(best) = failed {
        log::warn!("inner rescue integral did not converge (best {:?})", best);
    }
    outer_result(r, worst)
}

/// `(-1)^k L^(k)(u) / L(u)` for `k < phi.len()`, where `L = exp(-Phi)` and
/// `phi[m]` holds the `m`-th derivative of `Phi` (`phi[0]` unused). Complete
/// Bell recurrence on the derivatives of `-Phi`.
fn laplace_moments(phi: &[f64]) -> Vec<f64> {
    let n = phi.len();
    let mut bell = vec![0.0; n];
    bell[0] = 1.0;
    for k in 0..n.saturating_sub(1) {
        let mut b = 0.0;
        for i in 0..=k {
            b += binomial::<f64>(k as u32, i as u32) * bell[k - i] * -phi[i + 1];
        }
        bell[k + 1] = b;
    }
    bell.iter()
        .enumerate()
        .map(|(k, b)| if k % 2 == 0 { *b } else { -*b })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_weights_sum_to_one() {
        for n in 1..6 {
            let s: f64 = expansion(n).iter().map(|t| t.1).sum();
            assert!((s - 1.0).abs() < 1e-12, "{n}: {s}");
        }
        assert_eq!(expansion(1), vec![(1.0, 1.0)]);
    }

    #[test]
    fn laplace_moments_of_exponential() {
        // J ~ Exp(1): L(u) = 1/(1+u), Phi = ln(1+u), Phi' = 1/(1+u),
        // Phi'' = -1/(1+u)^2; E[J^k e^{-uJ}] = k!/(1+u)^{k+1}.
        let u: f64 = 0.7;
        let phi = [u.ln_1p(), 1.0 / (1.0 + u), -1.0 / ((1.0 + u) * (1.0 + u))];
        let m = laplace_moments(&phi);
        assert_eq!(m[0], 1.0);
        assert!((m[1] - 1.0 / (1.0 + u)).abs() < 1e-15);
        assert!((m[2] - 2.0 / ((1.0 + u) * (1.0 + u))).abs() < 1e-15);
    }
}
