//! Semi-analytic coverage of the primary layer and of both layers.
//!
//! Every probability is a sum of kernels (see [`kernels`]) evaluated by
//! nested adaptive quadrature. Association regions follow the simulator:
//!
//! - case 1: the best small cell is at least as strong as the best macro;
//! - case 2: the best macro beats the biased best small cell;
//! - case 3: the small cell wins only thanks to the bias. The strongest macro
//!   is then the SIC target `X1`.
//!
//! In case 3 the direct-decode part is the difference of two small-serving
//! kernels (macro weight `1/b` and `1`), and the post-SIC part is a double
//! integral over the serving distance and the distance of `X1`. Decoding of
//! `X1` itself is assumed to succeed whenever the primary layer does after
//! cancellation; the simulator does not make that assumption, which is the
//! main source of disagreement between the two at high primary rates.

pub mod geometry;
mod kernels;

use std::cell::RefCell;
use std::collections::HashMap;

use crate::config::{NetworkConfig, NomaConfig, SicMode, Tier};
use crate::error::Result;
use crate::quadrature::{Integral, QuadratureSpec};

use geometry::{all_classes, LinkClass};

const SMALL: [usize; 2] = [0, 1];
const MACRO: [usize; 2] = [2, 3];

/// How the both-layer probability of the range-expanded case is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PslMode {
    /// Direct decoding of both layers plus the probability that SIC rescues
    /// a user whose primary layer failed directly, averaged in closed form
    /// over the fading of the cancelled macro.
    #[default]
    Direct,
    /// `P(A) - P(C)` below the power-split breakpoint and `P(A) - P(D)`
    /// above it, where `A` is the direct-decode failure within case 3.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticOptions {
    pub quad: QuadratureSpec<f64>,
    pub psl_mode: PslMode,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        AnalyticOptions {
            quad: QuadratureSpec::with_tolerances(1e-5, 1e-7),
            psl_mode: PslMode::Direct,
        }
    }
}

impl AnalyticOptions {
    /// Tolerances for integrals nested inside another integrand.
    fn inner(&self) -> QuadratureSpec<f64> {
        self.quad.scaled(0.1)
    }
}

/// Effective primary-layer threshold on `H g / (I + sigma^2)`, `None` when
/// the superposed secondary layer alone already exceeds the target.
pub fn effective_pl_threshold(alpha_p: f64, t_pl: f64) -> Option<f64> {
    let margin = alpha_p - (1.0 - alpha_p) * t_pl;
    (margin > 0.0).then(|| t_pl / margin)
}

/// Effective secondary-layer threshold once the primary layer is removed.
pub fn effective_sl_threshold(alpha_p: f64, t_sl: f64) -> f64 {
    if alpha_p >= 1.0 {
        f64::INFINITY
    } else {
        t_sl / (1.0 - alpha_p)
    }
}

/// Power split above which the secondary layer becomes the binding
/// constraint: `T_PL (1 + T_SL) / (T_SL + T_PL (1 + T_SL))`.
pub fn alpha_star(t_pl: f64, t_sl: f64) -> f64 {
    t_pl * (1.0 + t_sl) / (t_sl + t_pl * (1.0 + t_sl))
}

fn clamp_probability(label: &str, v: Integral<f64>) -> Integral<f64> {
    if v.value > 1.0 + 1e-6 || v.value < -1e-6 {
        log::warn!("{label}: value {} outside [0, 1], clamped", v.value);
    }
    Integral {
        value: v.value.clamp(0.0, 1.0),
        error: v.error,
    }
}

/// Case-3 primary-layer terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case3Terms {
    /// Decoded directly with the dominant macro still interfering.
    pub direct: Integral<f64>,
    /// Decoded once the dominant macro has been cancelled.
    pub after_sic: Integral<f64>,
    /// Extra coverage gained through SIC, clamped at zero.
    pub sic_gain: f64,
    pub total: Integral<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlCoverage {
    pub total: Integral<f64>,
    pub case1: Integral<f64>,
    pub case2: Integral<f64>,
    pub case3: Case3Terms,
}

impl PlCoverage {
    fn zero() -> Self {
        let z = Integral::zero();
        PlCoverage {
            total: z,
            case1: z,
            case2: z,
            case3: Case3Terms {
                direct: z,
                after_sic: z,
                sic_gain: 0.0,
                total: z,
            },
        }
    }
}

/// Which layer sets the effective threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Primary,
    Secondary,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BothLayerCoverage {
    pub total: Integral<f64>,
    pub case1: Integral<f64>,
    pub case2: Integral<f64>,
    pub case3: Integral<f64>,
    pub alpha_star: f64,
    pub binding: Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Small { macro_weight: u64, tau: u64 },
    Macro { tau: u64 },
    Expanded { tau: u64, target: Option<u64> },
    Rescue { tau_m: u64, tau_n: u64 },
}

/// Coverage evaluator for one network. Kernel values are memoized for the
/// lifetime of the model, so build one per evaluation point or sweep.
#[derive(Debug)]
pub struct AnalyticModel {
    net: NetworkConfig,
    classes: [LinkClass; 4],
    noise: f64,
    opts: AnalyticOptions,
    cache: RefCell<HashMap<Key, Integral<f64>>>,
}

impl AnalyticModel {
    pub fn new(net: &NetworkConfig, opts: AnalyticOptions) -> Self {
        AnalyticModel {
            net: *net,
            classes: all_classes(net),
            noise: net.normalized_noise(),
            opts,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn options(&self) -> &AnalyticOptions {
        &self.opts
    }

    pub fn network(&self) -> &NetworkConfig {
        &self.net
    }

    fn memo(&self, key: Key, f: impl FnOnce() -> Result<Integral<f64>>) -> Result<Integral<f64>> {
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let v = f()?;
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }

    /// Small cell serving, macros excluded where `w gain_M > gain_S`.
    /// `w = 1` gives case 1; `w = 1/b` gives cases 1 and 3 together.
    pub fn small_serving_kernel(&self, tau: f64, macro_weight: f64) -> Result<Integral<f64>> {
        let key = Key::Small {
            macro_weight: macro_weight.to_bits(),
            tau: tau.to_bits(),
        };
        self.memo(key, || {
            let weights = [1.0, 1.0, macro_weight, macro_weight];
            let (outer, inner) = (self.opts.quad, self.opts.inner());
            SMALL.iter().try_fold(Integral::zero(), |acc, &k| {
                Ok(acc + kernels::serving_kernel(&self.classes, k, weights, tau, self.noise, &outer, &inner)?)
            })
        })
    }

    /// Macro serving against biased small cells (case 2).
    pub fn macro_serving_kernel(&self, tau: f64) -> Result<Integral<f64>> {
        self.memo(Key::Macro { tau: tau.to_bits() }, || {
            let b = self.net.bias_b;
            let weights = [b, b, 1.0, 1.0];
            let (outer, inner) = (self.opts.quad, self.opts.inner());
            MACRO.iter().try_fold(Integral::zero(), |acc, &k| {
                Ok(acc + kernels::serving_kernel(&self.classes, k, weights, tau, self.noise, &outer, &inner)?)
            })
        })
    }

    /// Case-3 kernel with the dominant macro cancelled, or, with
    /// `target_tau`, weighted by its own threshold.
    pub fn expanded_kernel(&self, tau: f64, target_tau: Option<f64>) -> Result<Integral<f64>> {
        let key = Key::Expanded {
            tau: tau.to_bits(),
            target: target_tau.map(f64::to_bits),
        };
        self.memo(key, || {
            let (outer, inner) = (self.opts.quad, self.opts.inner());
            let mut acc = Integral::zero();
            for ks in SMALL {
                for j in MACRO {
                    acc = acc
                        + kernels::expanded_kernel(
                            &self.classes,
                            ks,
                            j,
                            self.net.bias_b,
                            tau,
                            target_tau,
                            self.noise,
                            &outer,
                            &inner,
                        )?;
                }
            }
            Ok(acc)
        })
    }

    /// Case-3 probability that the primary layer fails directly but both
    /// layers decode after SIC, for `tau_n > tau_m`.
    pub fn rescue_kernel(&self, tau_m: f64, tau_n: f64) -> Result<Integral<f64>> {
        let key = Key::Rescue {
            tau_m: tau_m.to_bits(),
            tau_n: tau_n.to_bits(),
        };
        self.memo(key, || {
            let (outer, inner) = (self.opts.quad, self.opts.inner());
            let mut acc = Integral::zero();
            for ks in SMALL {
                for j in MACRO {
                    acc = acc
                        + kernels::rescue_kernel(
                            &self.classes,
                            ks,
                            j,
                            self.net.bias_b,
                            tau_m,
                            tau_n,
                            self.noise,
                            &outer,
                            &inner,
                        )?;
                }
            }
            Ok(acc)
        })
    }

    /// Case-3 direct decoding as a difference of small-serving kernels.
    pub fn expanded_direct(&self, tau: f64) -> Result<Integral<f64>> {
        if self.net.bias_b <= 1.0 {
            return Ok(Integral::zero());
        }
        Ok(self.small_serving_kernel(tau, 1.0 / self.net.bias_b)? - self.small_serving_kernel(tau, 1.0)?)
    }

    /// Association probabilities of cases 1, 2 and 3.
    pub fn case_probabilities(&self) -> Result<[Integral<f64>; 3]> {
        Ok([
            self.small_serving_kernel(0.0, 1.0)?,
            self.macro_serving_kernel(0.0)?,
            self.expanded_direct(0.0)?,
        ])
    }

    pub fn coverage_case1(&self, noma: &NomaConfig, t_pl: f64) -> Result<Integral<f64>> {
        match effective_pl_threshold(noma.alpha_p, t_pl) {
            Some(tau) => Ok(clamp_probability("case 1", self.small_serving_kernel(tau, 1.0)?)),
            None => Ok(Integral::zero()),
        }
    }

    pub fn coverage_case2(&self, noma: &NomaConfig, t_pl: f64) -> Result<Integral<f64>> {
        match effective_pl_threshold(noma.alpha_p, t_pl) {
            Some(tau) => Ok(clamp_probability("case 2", self.macro_serving_kernel(tau)?)),
            None => Ok(Integral::zero()),
        }
    }

    pub fn coverage_case3(&self, noma: &NomaConfig, t_pl: f64) -> Result<Case3Terms> {
        let z = Integral::zero();
        let Some(tau) = effective_pl_threshold(noma.alpha_p, t_pl) else {
            return Ok(Case3Terms {
                direct: z,
                after_sic: z,
                sic_gain: 0.0,
                total: z,
            });
        };
        let direct = self.expanded_direct(tau)?;
        let after_sic = match noma.sic {
            SicMode::Enabled => self.expanded_kernel(tau, None)?,
            SicMode::Disabled => z,
        };
        let mut gain = after_sic.value - direct.value;
        if gain < 0.0 {
            if noma.sic == SicMode::Enabled && -gain > after_sic.error + direct.error {
                log::warn!("case 3: post-SIC coverage {} below direct {}, SIC gain clamped", after_sic.value, direct.value);
            }
            gain = 0.0;
        }
        let total = Integral {
            value: direct.value + gain,
            error: direct.error + after_sic.error,
        };
        Ok(Case3Terms {
            direct: clamp_probability("case 3 direct", direct),
            after_sic,
            sic_gain: gain,
            total: clamp_probability("case 3", total),
        })
    }

    /// Primary-layer coverage at threshold `t_pl`, with its case breakdown.
    pub fn coverage_pl(&self, noma: &NomaConfig, t_pl: f64) -> Result<PlCoverage> {
        if effective_pl_threshold(noma.alpha_p, t_pl).is_none() {
            return Ok(PlCoverage::zero());
        }
        let case1 = self.coverage_case1(noma, t_pl)?;
        let case2 = self.coverage_case2(noma, t_pl)?;
        let case3 = self.coverage_case3(noma, t_pl)?;
        let total = clamp_probability("primary layer", case1 + case2 + case3.total);
        Ok(PlCoverage {
            total,
            case1,
            case2,
            case3,
        })
    }

    /// Both-layer coverage at the configured thresholds.
    pub fn coverage_both_layers(&self, noma: &NomaConfig) -> Result<BothLayerCoverage> {
        self.coverage_both_layers_at(noma, noma.t_pl(), noma.t_sl())
    }

    pub fn coverage_both_layers_at(&self, noma: &NomaConfig, t_pl: f64, t_sl: f64) -> Result<BothLayerCoverage> {
        let z = Integral::zero();
        let a_star = alpha_star(t_pl, t_sl);
        let tau_m = effective_pl_threshold(noma.alpha_p, t_pl);
        let tau_n = effective_sl_threshold(noma.alpha_p, t_sl);
        let (Some(tau_m), true) = (tau_m, tau_n.is_finite()) else {
            return Ok(BothLayerCoverage {
                total: z,
                case1: z,
                case2: z,
                case3: z,
                alpha_star: a_star,
                binding: Binding::Infeasible,
            });
        };
        let binding = if tau_m >= tau_n { Binding::Primary } else { Binding::Secondary };
        let tau = tau_m.max(tau_n);
        let case1 = clamp_probability("both layers, case 1", self.small_serving_kernel(tau, 1.0)?);
        let case2 = clamp_probability("both layers, case 2", self.macro_serving_kernel(tau)?);
        let case3 = if self.net.bias_b <= 1.0 {
            z
        } else if noma.sic == SicMode::Disabled {
            self.expanded_direct(tau)?
        } else {
            match self.opts.psl_mode {
                PslMode::Direct => self.both_layers_case3_direct(tau_m, tau)?,
                PslMode::Verbatim => self.both_layers_case3_verbatim(tau_m, tau_n)?,
            }
        };
        let case3 = clamp_probability("both layers, case 3", case3);
        let total = clamp_probability("both layers", case1 + case2 + case3);
        Ok(BothLayerCoverage {
            total,
            case1,
            case2,
            case3,
            alpha_star: a_star,
            binding,
        })
    }

    /// Direct decoding of both layers plus the SIC rescue: with the
    /// secondary layer binding, `P(N) + P(D and not 0)`; otherwise the
    /// post-SIC primary event already implies the secondary one.
    fn both_layers_case3_direct(&self, tau_m: f64, tau: f64) -> Result<Integral<f64>> {
        if tau <= tau_m {
            return self.expanded_kernel(tau, None);
        }
        let direct = self.expanded_direct(tau)?;
        let rescue = self.rescue_kernel(tau_m, tau)?;
        if rescue.value < -rescue.error {
            log::warn!("both layers, case 3: negative rescue probability {}", rescue.value);
        }
        Ok(Integral {
            value: direct.value + rescue.value.max(0.0),
            error: direct.error + rescue.error,
        })
    }

    fn both_layers_case3_verbatim(&self, tau_m: f64, tau_n: f64) -> Result<Integral<f64>> {
        let share = self.expanded_direct(0.0)?;
        let direct = self.expanded_direct(tau_m)?;
        let p_a = share - direct;
        let sub = if tau_m >= tau_n {
            self.expanded_kernel(tau_m, None)?
        } else {
            self.expanded_kernel(tau_n, None)?
        };
        let v = p_a - sub;
        if v.value < 0.0 {
            log::warn!("both layers, case 3: verbatim difference {} negative, clamped", v.value);
        }
        Ok(Integral {
            value: v.value.max(0.0),
            error: v.error,
        })
    }

    /// Class descriptors in the order small LOS, small NLOS, macro LOS,
    /// macro NLOS.
    pub fn classes(&self) -> &[LinkClass; 4] {
        &self.classes
    }

    pub fn tier_classes(&self, tier: Tier) -> [LinkClass; 2] {
        match tier {
            Tier::Small => [self.classes[0], self.classes[1]],
            Tier::Macro => [self.classes[2], self.classes[3]],
        }
    }
}

/// Primary-layer coverage for one configuration.
pub fn coverage_pl(net: &NetworkConfig, noma: &NomaConfig, t_pl: f64, opts: AnalyticOptions) -> Result<PlCoverage> {
    AnalyticModel::new(net, opts).coverage_pl(noma, t_pl)
}

/// Both-layer coverage for one configuration.
pub fn coverage_both_layers(net: &NetworkConfig, noma: &NomaConfig, opts: AnalyticOptions) -> Result<BothLayerCoverage> {
    AnalyticModel::new(net, opts).coverage_both_layers(noma)
}
