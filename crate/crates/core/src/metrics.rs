//! Average rate, MOS and the OMA baseline.

use std::f64::consts::LN_2;

use crate::analytic::AnalyticModel;
use crate::config::{rate_to_threshold, MosMode, MosWeighting, NomaConfig};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Domain, Integral, QuadratureSpec};
use crate::scalar::Scalar;
use crate::simulator::DecodingOutcome;
use crate::stats::MeanEstimate;

/// Logarithmic MOS curve: 1 below `theta1`, `a ln(theta / b)` in between, 5
/// above `theta4`. Rates in b/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosCurve<T> {
    pub theta1: T,
    pub theta4: T,
    pub a_coef: T,
    pub b_coef: T,
    pub mode: MosMode,
}

impl<T: Scalar> MosCurve<T> {
    pub fn new(theta1: T, theta4: T, mode: MosMode) -> Result<Self> {
        if !(theta1 > T::zero() && theta4 > theta1) {
            return Err(Error::Precondition(format!(
                "MOS breakpoints must satisfy 0 < theta1 < theta4, got {theta1} and {theta4}"
            )));
        }
        let span = theta4 / theta1;
        let (a_coef, b_coef) = match mode {
            MosMode::Paper => (T::lit(3.5) / span.ln(), theta1 * span.powf(T::lit(1.0 / 3.5))),
            MosMode::Continuous => (T::lit(4.0) / span.ln(), theta1 * span.powf(T::lit(-0.25))),
        };
        Ok(MosCurve {
            theta1,
            theta4,
            a_coef,
            b_coef,
            mode,
        })
    }

    pub fn from_config(noma: &NomaConfig) -> Result<Self> {
        MosCurve::new(T::lit(noma.mos_theta1), T::lit(noma.mos_theta4), noma.mos_mode)
    }

    pub fn mos(&self, theta: T) -> T {
        let (one, five) = (T::one(), T::lit(5.0));
        if theta <= self.theta1 {
            one
        } else if theta >= self.theta4 {
            five
        } else {
            (self.a_coef * (theta / self.b_coef).ln()).max(one).min(five)
        }
    }
}

pub fn mos<T: Scalar>(theta: T, curve: &MosCurve<T>) -> T {
    curve.mos(theta)
}

/// Average MOS of a multicast user: base quality when only the primary
/// layer is decoded, enhanced quality when both are.
pub fn avg_mos(p_pl: f64, p_psl: f64, noma: &NomaConfig, curve: &MosCurve<f64>) -> Result<f64> {
    if p_psl > p_pl {
        return Err(Error::Precondition(format!(
            "both-layer coverage {p_psl} exceeds primary coverage {p_pl}"
        )));
    }
    let base = curve.mos(noma.rate_pl) * (p_pl - p_psl);
    let full = curve.mos(noma.rate_pl + noma.rate_sl) * p_psl;
    Ok(base + full + floor_term(p_pl, noma))
}

/// Average MOS of the single-layer OMA transmission with coverage `p`.
pub fn oma_avg_mos(p: f64, noma: &NomaConfig, curve: &MosCurve<f64>) -> f64 {
    curve.mos(noma.rate_pl + noma.rate_sl) * p + floor_term(p, noma)
}

fn floor_term(p_pl: f64, noma: &NomaConfig) -> f64 {
    match noma.mos_weighting {
        MosWeighting::Verbatim => 0.0,
        MosWeighting::Floor => 1.0 - p_pl,
    }
}

/// Mean of `log2(1 + SINR)` over decoded layers.
pub fn avg_rate_sim(outcomes: &[DecodingOutcome]) -> MeanEstimate {
    let rates: Vec<f64> = outcomes.iter().map(DecodingOutcome::rate).collect();
    MeanEstimate::from_samples(&rates)
}

/// `E[log2(1 + X) 1{X > t0}]` from the exceedance `P(X > t)`:
/// `log2(1 + t0) P(X > t0) + (1/ln 2) int_t0^t_max P(X > t) / (1 + t) dt`.
///
/// `t_max` is an a.s. upper bound of `X`, or `None`.
pub fn avg_rate_from_exceedance<F>(mut exceed: F, t0: f64, t_max: Option<f64>, spec: &QuadratureSpec<f64>) -> Result<Integral<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let p0 = exceed(t0)?;
    let head = p0 * (t0.ln_1p() / LN_2);
    let tail = exceedance_tail(&mut exceed, t0, t_max, spec)?;
    Ok(Integral {
        value: head + tail.value,
        error: tail.error,
    })
}

/// `(1/ln 2) int_lo^hi P(X > t) / (1 + t) dt`, `hi = None` meaning infinity.
pub fn exceedance_tail<F>(exceed: &mut F, lo: f64, hi: Option<f64>, spec: &QuadratureSpec<f64>) -> Result<Integral<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut failure = None;
    let mut f = |t: f64| match exceed(t) {
        Ok(p) => p / (1.0 + t),
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let domain = match hi {
        Some(h) if h <= lo => return Ok(Integral::zero()),
        Some(h) => Domain::Finite(lo, h),
        None => Domain::SemiInfinite {
            lower: lo,
            scale: 1.0 + lo,
        },
    };
    let r = integrate(&mut f, domain, spec);
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r.map_err(Error::from)?;
    Ok(r * (1.0 / LN_2))
}

/// Exceedance curve `P(X > t)` interpolated on Chebyshev-Lobatto nodes in
/// the log-rate variable `u = ln(1 + t)`, where the rate integrand
/// `P(X > t) / (1 + t) dt = P du` is smooth and decays exponentially.
///
/// Meant for exceedances that are expensive to evaluate: the whole curve
/// costs a fixed number of evaluations and any number of tails are then
/// read off it.
#[derive(Debug, Clone)]
pub struct LogExceedance {
    lo: f64,
    hi: f64,
    /// Antiderivative coefficients of the full and the half-order interpolant.
    fine: Vec<f64>,
    coarse: Vec<f64>,
    /// Estimated integral beyond `hi` when the support is unbounded.
    beyond: f64,
}

const LOBATTO_ORDER: usize = 32;
const TAIL_DROP: f64 = 1e-4;
const MAX_WIDTH: f64 = 48.0;

impl LogExceedance {
    /// Samples `exceed` on `[t0, t_max]`, or on `[t0, inf)` when `t_max` is
    /// `None` (the support is then cut where the exceedance has dropped by
    /// `1e-4` and the remainder extrapolated exponentially).
    pub fn build<F>(mut exceed: F, t0: f64, t_max: Option<f64>) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let lo = t0.ln_1p();
        let p0 = exceed(t0)?;
        let empty = LogExceedance {
            lo,
            hi: lo,
            fine: vec![0.0],
            coarse: vec![0.0],
            beyond: 0.0,
        };
        if p0 <= 0.0 {
            return Ok(empty);
        }
        let mut ends = None;
        let mut beyond = 0.0;
        let hi = match t_max {
            Some(t) => t.ln_1p(),
            None => {
                let (mut prev, mut p_prev, mut w) = (lo, p0, 4.0);
                loop {
                    let u = lo + w;
                    let p = exceed(u.exp_m1())?;
                    if p <= TAIL_DROP * p0 || w >= MAX_WIDTH {
                        let rate = (p_prev / p).ln() / (u - prev);
                        beyond = if p <= 0.0 {
                            0.0
                        } else if rate.is_finite() && rate > 0.0 {
                            p / rate
                        } else {
                            log::warn!("exceedance does not decay beyond u = {u}");
                            p * MAX_WIDTH
                        };
                        ends = Some(p);
                        break u;
                    }
                    (prev, p_prev) = (u, p);
                    w *= 2.0;
                }
            }
        };
        if hi <= lo {
            return Ok(empty);
        }
        let n = LOBATTO_ORDER;
        let mut values = vec![0.0; n + 1];
        for (j, v) in values.iter_mut().enumerate() {
            // x_j = cos(pi j / n) runs from hi (j = 0) down to lo
            let x = (std::f64::consts::PI * j as f64 / n as f64).cos();
            let u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
            *v = match (j, ends) {
                (j, _) if j == n => p0,
                (0, Some(p)) => p,
                _ => exceed(u.exp_m1())?,
            };
        }
        let coarse_values: Vec<f64> = values.iter().step_by(2).copied().collect();
        Ok(LogExceedance {
            lo,
            hi,
            fine: antiderivative(&chebyshev_coefficients(&values)),
            coarse: antiderivative(&chebyshev_coefficients(&coarse_values)),
            beyond,
        })
    }

    /// `(1/ln 2) int_t^inf P(X > t') / (1 + t') dt'` for `t` at or above the
    /// lower end of the curve. The error is the gap to the half-order
    /// interpolant plus half the extrapolated remainder.
    pub fn tail(&self, t: f64) -> Integral<f64> {
        let u = t.ln_1p().clamp(self.lo, self.hi);
        let half = 0.5 * (self.hi - self.lo);
        let x = if half > 0.0 { (u - self.lo) / half - 1.0 } else { 1.0 };
        let seg = |c: &[f64]| half * (clenshaw(c, 1.0) - clenshaw(c, x));
        let (f, c) = (seg(&self.fine), seg(&self.coarse));
        Integral {
            value: (f + self.beyond) / LN_2,
            error: ((f - c).abs() + 0.5 * self.beyond) / LN_2,
        }
    }
}

/// Coefficients of the interpolant through values at `cos(pi j / n)`.
fn chebyshev_coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len() - 1;
    if n == 0 {
        return values.to_vec();
    }
    let mut a = vec![0.0; n + 1];
    for (k, ak) in a.iter_mut().enumerate() {
        let mut sum = 0.0;
        for (j, &f) in values.iter().enumerate() {
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            sum += w * f * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos();
        }
        *ak = 2.0 * sum / n as f64;
    }
    a[0] *= 0.5;
    a[n] *= 0.5;
    a
}

fn antiderivative(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let at = |k: usize| a.get(k).copied().unwrap_or(0.0);
    let mut b = vec![0.0; n + 1];
    for (k, bk) in b.iter_mut().enumerate().skip(1) {
        *bk = if k == 1 {
            at(0) - 0.5 * at(2)
        } else {
            (at(k - 1) - at(k + 1)) / (2.0 * k as f64)
        };
    }
    b
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        (b1, b2) = (2.0 * x * b1 - b2 + ck, b1);
    }
    x * b1 - b2 + c[0]
}

/// Rate, coverage and MOS of one transmission scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeMetrics {
    pub p_pl: Integral<f64>,
    pub p_psl: Integral<f64>,
    pub avg_rate: Integral<f64>,
    pub avg_mos: f64,
}

fn head(p: Integral<f64>, t: f64) -> Integral<f64> {
    let w = t.ln_1p() / LN_2;
    Integral {
        value: p.value * w,
        error: p.error * w,
    }
}

/// Analytic NOMA average rate and MOS for each secondary-layer rate in
/// `rate_sl` (ascending), at the primary rate and split of `noma`.
pub fn noma_metrics_analytic(model: &AnalyticModel, noma: &NomaConfig, rate_sl: &[f64]) -> Result<Vec<SchemeMetrics>> {
    let curve = MosCurve::from_config(noma)?;
    let t_pl = noma.t_pl();
    let alpha = noma.alpha_p;
    let pl = model.coverage_pl(noma, t_pl)?;
    let pl_cap = (alpha < 1.0).then(|| alpha / (1.0 - alpha));
    let pl_rate = head(pl.total, t_pl)
        + LogExceedance::build(|t| Ok(model.coverage_pl(noma, t)?.total.value), t_pl, pl_cap)?.tail(t_pl);

    let t_sl: Vec<f64> = rate_sl.iter().map(|&r| rate_to_threshold(r)).collect();
    let sl_curve = match t_sl.first() {
        Some(&t0) if alpha < 1.0 => Some(LogExceedance::build(
            |t| Ok(model.coverage_both_layers_at(noma, t_pl, t)?.total.value),
            t0,
            None,
        )?),
        _ => None,
    };
    let mut out = Vec::with_capacity(t_sl.len());
    for (i, &r) in rate_sl.iter().enumerate() {
        let cfg = NomaConfig { rate_sl: r, ..*noma };
        let psl = model.coverage_both_layers(&cfg)?.total;
        let sl_rate = match &sl_curve {
            Some(c) => head(psl, t_sl[i]) + c.tail(t_sl[i]),
            None => Integral::zero(),
        };
        let p_psl = psl.value.min(pl.total.value);
        out.push(SchemeMetrics {
            p_pl: pl.total,
            p_psl: psl,
            avg_rate: pl_rate + sl_rate,
            avg_mos: avg_mos(pl.total.value, p_psl, &cfg, &curve)?,
        });
    }
    Ok(out)
}

/// Analytic OMA baseline for each secondary-layer rate in `rate_sl`
/// (ascending): whole-power transmission at `R_pl + R_sl`.
pub fn oma_metrics_analytic(model: &AnalyticModel, noma: &NomaConfig, rate_sl: &[f64]) -> Result<Vec<SchemeMetrics>> {
    let curve = MosCurve::from_config(noma)?;
    let oma = NomaConfig {
        alpha_p: 1.0,
        ..*noma
    };
    let t0: Vec<f64> = rate_sl.iter().map(|&r| rate_to_threshold(noma.rate_pl + r)).collect();
    let Some(&first) = t0.first() else {
        return Ok(Vec::new());
    };
    let tails = LogExceedance::build(|t| Ok(model.coverage_pl(&oma, t)?.total.value), first, None)?;
    let mut out = Vec::with_capacity(t0.len());
    for (i, &r) in rate_sl.iter().enumerate() {
        let cfg = NomaConfig { rate_sl: r, ..*noma };
        let p = model.coverage_pl(&oma, t0[i])?.total;
        out.push(SchemeMetrics {
            p_pl: p,
            p_psl: Integral::zero(),
            avg_rate: head(p, t0[i]) + tails.tail(t0[i]),
            avg_mos: oma_avg_mos(p.value, &cfg, &curve),
        });
    }
    Ok(out)
}

/// Simulated OMA metrics from outcomes decoded with
/// [`NomaConfig::oma_equivalent`].
pub fn oma_metrics_sim(outcomes: &[DecodingOutcome], noma: &NomaConfig, curve: &MosCurve<f64>) -> (f64, MeanEstimate, f64) {
    let n = outcomes.len().max(1) as f64;
    let p = outcomes.iter().filter(|o| o.pl_ok).count() as f64 / n;
    let rate = avg_rate_sim(outcomes);
    (p, rate, oma_avg_mos(p, noma, curve))
}
