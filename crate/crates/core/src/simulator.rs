//! Monte Carlo ground truth.
//!
//! Each trial samples both tiers as Poisson point processes on a disk
//! centred at the user, draws per-link LOS state and fading, associates the
//! user with range expansion, and decodes the two multicast layers with at
//! most one round of interference cancellation.
//!
//! Trials use counter-based random substreams: trial `t` of a run seeded
//! with `seed` reads ChaCha8 stream `t`, and every annular shell of every
//! tier starts at its own fixed word offset inside that stream. Results
//! therefore do not depend on the worker count, and a larger window
//! contains the smaller window's deployment exactly.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{p_los, FadingSampler};
use crate::config::{NetworkConfig, NomaConfig, SicInterference, SicMode, Tier, TierParams};
use crate::error::{Error, Result};
use crate::stats::{CoverageEstimate, MeanEstimate};

/// Radial width of the sampling shells, meters.
pub const SHELL_WIDTH_M: f64 = 250.0;

const SHELL_SLOTS: u64 = 1 << 20;
const SHELL_WORD_SHIFT: u32 = 36;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaseStation {
    pub position: [f64; 2],
    pub los: bool,
    pub fading: f64,
}

impl BaseStation {
    pub fn distance(&self) -> f64 {
        (self.position[0] * self.position[0] + self.position[1] * self.position[1]).sqrt()
    }
}

/// One sampled deployment around the user at the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Realization {
    pub macro_bs: Vec<BaseStation>,
    pub small_bs: Vec<BaseStation>,
}

impl Realization {
    pub fn tier(&self, tier: Tier) -> &[BaseStation] {
        match tier {
            Tier::Macro => &self.macro_bs,
            Tier::Small => &self.small_bs,
        }
    }
}

/// The three association regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AssociationCase {
    /// Strongest small cell beats every macro cell.
    SmallStronger,
    /// Strongest macro cell beats the biased strongest small cell.
    MacroDominant,
    /// Range-expanded small-cell user: the strongest macro is stronger than
    /// the serving small cell, but not by the bias factor.
    RangeExpanded,
}

impl AssociationCase {
    pub const ALL: [AssociationCase; 3] = [
        AssociationCase::SmallStronger,
        AssociationCase::MacroDominant,
        AssociationCase::RangeExpanded,
    ];

    pub fn id(self) -> u8 {
        match self {
            AssociationCase::SmallStronger => 1,
            AssociationCase::MacroDominant => 2,
            AssociationCase::RangeExpanded => 3,
        }
    }

    pub fn index(self) -> usize {
        self.id() as usize - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Association {
    pub case: AssociationCase,
    pub serving: (Tier, usize),
    /// Strongest macro cell, present only for range-expanded users.
    pub sic_target: Option<usize>,
}

/// Everything decoding needs from one realization, in powers normalized by
/// the small-cell transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudget {
    pub trial: u64,
    pub case: AssociationCase,
    pub serving_tier: Tier,
    /// Serving received power including fading.
    pub serving_power: f64,
    /// Sum over every other base station of both tiers.
    pub interference: f64,
    /// Received power of the cancellation candidate (range-expanded only).
    pub sic_target_power: Option<f64>,
    /// `interference` without the cancellation candidate.
    pub residual_interference: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodingOutcome {
    /// Primary layer decoded against full interference.
    pub pl_direct: bool,
    pub sic_attempted: bool,
    /// Strongest interferer decoded.
    pub sic_success: bool,
    /// Primary layer decoded after cancellation.
    pub pl_after_sic: bool,
    pub pl_ok: bool,
    pub sl_ok: bool,
    /// Primary-layer SINR at the last decoding attempt.
    pub sinr_pl: f64,
    pub sinr_sl: f64,
}

impl DecodingOutcome {
    /// `log2(1 + SINR)` summed over the layers that were decoded.
    pub fn rate(&self) -> f64 {
        let mut r = 0.0;
        if self.pl_ok {
            r += self.sinr_pl.ln_1p() / std::f64::consts::LN_2;
        }
        if self.sl_ok {
            r += self.sinr_sl.ln_1p() / std::f64::consts::LN_2;
        }
        r
    }
}

fn shell_rng(seed: u64, trial: u64, tier: Tier, shell: u64) -> ChaCha8Rng {
    let slot = match tier {
        Tier::Macro => shell,
        Tier::Small => SHELL_SLOTS + shell,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng.set_word_pos(u128::from(slot) << SHELL_WORD_SHIFT);
    rng
}

fn sample_tier(
    params: &TierParams,
    tier: Tier,
    window: f64,
    seed: u64,
    trial: u64,
) -> Vec<BaseStation> {
    if params.density <= 0.0 {
        return Vec::new();
    }
    let expected = params.density * std::f64::consts::PI * window * window;
    let mut out = Vec::with_capacity((expected * 1.05 + 16.0) as usize);
    let fade_los = FadingSampler::new(params.n_los);
    let fade_nlos = FadingSampler::new(params.n_nlos);
    let n_shells = (window / SHELL_WIDTH_M).ceil() as u64;
    assert!(n_shells < SHELL_SLOTS, "window too large for the shell layout");
    for shell in 0..n_shells {
        let r0 = shell as f64 * SHELL_WIDTH_M;
        let r1 = r0 + SHELL_WIDTH_M;
        let (a0, a1) = (r0 * r0, r1 * r1);
        let mean = params.density * std::f64::consts::PI * (a1 - a0);
        let mut rng = shell_rng(seed, trial, tier, shell);
        let count = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
        for _ in 0..count {
            // 1 - u lies in (0, 1], so the innermost shell never yields r = 0
            let u: f64 = rng.random();
            let r = (a0 + (1.0 - u) * (a1 - a0)).sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let los = rng.random::<f64>() < p_los(params.beta, r);
            let fading = if los {
                fade_los.sample(&mut rng)
            } else {
                fade_nlos.sample(&mut rng)
            };
            if r < window {
                let (s, c) = theta.sin_cos();
                out.push(BaseStation {
                    position: [r * c, r * s],
                    los,
                    fading,
                });
            }
        }
    }
    out
}

/// Samples trial `trial` of the run seeded by `seed`.
pub fn sample_realization_trial(cfg: &NetworkConfig, seed: u64, trial: u64) -> Realization {
    Realization {
        macro_bs: sample_tier(&cfg.macro_tier, Tier::Macro, cfg.window_radius_m, seed, trial),
        small_bs: sample_tier(&cfg.small_tier, Tier::Small, cfg.window_radius_m, seed, trial),
    }
}

/// Samples one deployment, drawing the substream seed from `rng`.
pub fn sample_realization<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Realization {
    let seed = rng.random::<u64>();
    sample_realization_trial(cfg, seed, 0)
}

/// Fading-averaged received powers of every station of one tier.
fn long_term_powers(cfg: &NetworkConfig, tier: Tier, stations: &[BaseStation]) -> Vec<f64> {
    let params = cfg.tier(tier);
    let scale = cfg.relative_power(tier);
    stations
        .iter()
        .map(|bs| {
            let (c, alpha) = params.path_gain(bs.los);
            let d2 = bs.position[0] * bs.position[0] + bs.position[1] * bs.position[1];
            scale * c * (-0.5 * alpha * d2.ln()).exp()
        })
        .collect()
}

fn strongest(powers: &[f64]) -> Option<(usize, f64)> {
    powers.iter().copied().enumerate().fold(None, |best, (i, p)| match best {
        Some((_, bp)) if bp >= p => best,
        _ => Some((i, p)),
    })
}

fn associate_powers(cfg: &NetworkConfig, macro_p: &[f64], small_p: &[f64]) -> Result<Association> {
    let small = |s| Association {
        case: AssociationCase::SmallStronger,
        serving: (Tier::Small, s),
        sic_target: None,
    };
    let macro_ = |m| Association {
        case: AssociationCase::MacroDominant,
        serving: (Tier::Macro, m),
        sic_target: None,
    };
    let assoc = match (strongest(small_p), strongest(macro_p)) {
        (None, None) => return Err(Error::VoidRealization),
        (Some((s, _)), None) => small(s),
        (None, Some((m, _))) => macro_(m),
        (Some((s, ps)), Some((m, pm))) => {
            if ps >= pm {
                small(s)
            } else if pm > cfg.bias_b * ps {
                macro_(m)
            } else {
                Association {
                    case: AssociationCase::RangeExpanded,
                    serving: (Tier::Small, s),
                    sic_target: Some(m),
                }
            }
        }
    };
    Ok(assoc)
}

/// Range-expansion association on fading-averaged received power.
pub fn associate(real: &Realization, cfg: &NetworkConfig) -> Result<Association> {
    let macro_p = long_term_powers(cfg, Tier::Macro, &real.macro_bs);
    let small_p = long_term_powers(cfg, Tier::Small, &real.small_bs);
    associate_powers(cfg, &macro_p, &small_p)
}

/// Collapses a realization into the received powers decoding depends on.
pub fn link_budget(real: &Realization, cfg: &NetworkConfig, trial: u64) -> Result<LinkBudget> {
    let macro_p = long_term_powers(cfg, Tier::Macro, &real.macro_bs);
    let small_p = long_term_powers(cfg, Tier::Small, &real.small_bs);
    let assoc = associate_powers(cfg, &macro_p, &small_p)?;
    let mut serving_power = 0.0;
    let mut target_power = None;
    let mut others = 0.0;
    for (tier, powers) in [(Tier::Macro, &macro_p), (Tier::Small, &small_p)] {
        for (i, (bs, lt)) in real.tier(tier).iter().zip(powers.iter()).enumerate() {
            let p = lt * bs.fading;
            if assoc.serving == (tier, i) {
                serving_power = p;
            } else if tier == Tier::Macro && assoc.sic_target == Some(i) {
                target_power = Some(p);
            } else {
                others += p;
            }
        }
    }
    Ok(LinkBudget {
        trial,
        case: assoc.case,
        serving_tier: assoc.serving.0,
        serving_power,
        interference: others + target_power.unwrap_or(0.0),
        sic_target_power: target_power,
        residual_interference: others,
        noise: cfg.normalized_noise(),
    })
}

/// Decodes the primary layer (directly, or after cancelling the strongest
/// macro interferer for range-expanded users) and then the secondary layer.
pub fn decode(link: &LinkBudget, noma: &NomaConfig) -> DecodingOutcome {
    let a = noma.alpha_p;
    let t_pl = noma.t_pl();
    let t_sl = noma.t_sl();
    let s = link.serving_power;
    let n = link.noise;
    // a S >= T ((1-a) S + I + N) has no solution when a <= T (1 - a)
    let feasible = a - (1.0 - a) * t_pl > 0.0;

    let sinr_direct = a * s / ((1.0 - a) * s + link.interference + n);
    let pl_direct = feasible && sinr_direct >= t_pl;

    let mut sic_attempted = false;
    let mut sic_success = false;
    let mut pl_after_sic = false;
    let mut sinr_pl = sinr_direct;
    let mut remaining = link.interference;

    if !pl_direct && link.case == AssociationCase::RangeExpanded && noma.sic == SicMode::Enabled {
        if let Some(x1) = link.sic_target_power {
            sic_attempted = true;
            let own = match noma.sic_interference {
                SicInterference::FullPower => s,
                SicInterference::PrimaryOnly => a * s,
            };
            let sinr_target = x1 / (link.residual_interference + own + n);
            sic_success = sinr_target >= t_pl;
            if sic_success {
                remaining = link.residual_interference;
                sinr_pl = a * s / ((1.0 - a) * s + remaining + n);
                pl_after_sic = feasible && sinr_pl >= t_pl;
            }
        }
    }

    let pl_ok = pl_direct || (sic_success && pl_after_sic);
    let sinr_sl = (1.0 - a) * s / (remaining + n);
    let sl_ok = pl_ok && a < 1.0 && sinr_sl >= t_sl;

    DecodingOutcome {
        pl_direct,
        sic_attempted,
        sic_success,
        pl_after_sic,
        pl_ok,
        sl_ok,
        sinr_pl,
        sinr_sl,
    }
}

/// Convenience: associate and decode one realization.
pub fn decode_realization(
    real: &Realization,
    cfg: &NetworkConfig,
    noma: &NomaConfig,
) -> Result<DecodingOutcome> {
    Ok(decode(&link_budget(real, cfg, 0)?, noma))
}

/// Link budgets of a batch of independent trials.
///
/// Decoding is cheap compared with sampling, so one `LinkSet` is reused for
/// every point of a sweep over multicast parameters; all points then see the
/// same deployments (coupled comparisons).
#[derive(Debug, Clone)]
pub struct LinkSet {
    pub links: Vec<LinkBudget>,
    pub void_count: u64,
    pub n_trials: u64,
    pub seed: u64,
}

/// Samples `n_trials` realizations in parallel and keeps their link budgets.
pub fn sample_links(cfg: &NetworkConfig, n_trials: u64, seed: u64) -> LinkSet {
    let results: Vec<Option<LinkBudget>> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let real = sample_realization_trial(cfg, seed, t);
            link_budget(&real, cfg, t).ok()
        })
        .collect();
    let void_count = results.iter().filter(|r| r.is_none()).count() as u64;
    if void_count > 0 {
        log::warn!("{void_count} void realizations excluded from the estimates");
    }
    LinkSet {
        links: results.into_iter().flatten().collect(),
        void_count,
        n_trials,
        seed,
    }
}

#[derive(Debug, Clone)]
pub struct SimEstimate {
    pub p_pl: CoverageEstimate,
    pub p_psl: CoverageEstimate,
    /// Fraction of trials in each association case (index = case id - 1).
    pub case_shares: [CoverageEstimate; 3],
    /// Joint probability of PL coverage and each case; sums to `p_pl`.
    pub p_pl_by_case: [CoverageEstimate; 3],
    /// Per-trial `log2(1 + SINR)` over decoded layers.
    pub avg_rate: MeanEstimate,
    pub n_trials: u64,
    pub void_count: u64,
    pub outcomes: Vec<DecodingOutcome>,
}

impl LinkSet {
    pub fn decode_all(&self, noma: &NomaConfig) -> Vec<DecodingOutcome> {
        self.links.iter().map(|l| decode(l, noma)).collect()
    }

    pub fn estimate(&self, noma: &NomaConfig) -> SimEstimate {
        let outcomes = self.decode_all(noma);
        let n = outcomes.len() as u64;
        let count = |pred: &dyn Fn(usize, &DecodingOutcome) -> bool| {
            outcomes.iter().enumerate().filter(|(i, o)| pred(*i, o)).count() as u64
        };
        let pl = count(&|_, o| o.pl_ok);
        let psl = count(&|_, o| o.sl_ok);
        let mut shares = [CoverageEstimate::from_counts(0, n); 3];
        let mut by_case = [CoverageEstimate::from_counts(0, n); 3];
        for case in AssociationCase::ALL {
            let k = case.index();
            shares[k] = CoverageEstimate::from_counts(count(&|i, _| self.links[i].case == case), n);
            by_case[k] = CoverageEstimate::from_counts(
                count(&|i, o| self.links[i].case == case && o.pl_ok),
                n,
            );
        }
        let rates: Vec<f64> = outcomes.iter().map(DecodingOutcome::rate).collect();
        SimEstimate {
            p_pl: CoverageEstimate::from_counts(pl, n),
            p_psl: CoverageEstimate::from_counts(psl, n),
            case_shares: shares,
            p_pl_by_case: by_case,
            avg_rate: MeanEstimate::from_samples(&rates),
            n_trials: n,
            void_count: self.void_count,
            outcomes,
        }
    }

    /// Writes one CSV row per trial: trial, case_id, sinr_pl, sinr_sl,
    /// pl_ok, sl_ok.
    pub fn write_trials_csv<W: Write>(&self, out: W, outcomes: &[DecodingOutcome]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["trial", "case_id", "sinr_pl", "sinr_sl", "pl_ok", "sl_ok"])?;
        for (l, o) in self.links.iter().zip(outcomes) {
            w.write_record([
                l.trial.to_string(),
                l.case.id().to_string(),
                format!("{:e}", o.sinr_pl),
                format!("{:e}", o.sinr_sl),
                u8::from(o.pl_ok).to_string(),
                u8::from(o.sl_ok).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples and decodes in one go.
pub fn estimate(cfg: &NetworkConfig, noma: &NomaConfig, n_trials: u64, seed: u64) -> SimEstimate {
    sample_links(cfg, n_trials, seed).estimate(noma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{defaults, rate_to_threshold};
    use crate::channel::path_gain;

    fn bs(x: f64, los: bool, fading: f64) -> BaseStation {
        BaseStation {
            position: [x, 0.0],
            los,
            fading,
        }
    }

    fn silent_network() -> NetworkConfig {
        let (mut net, _) = defaults();
        net.noise_dbm = -1000.0;
        net
    }

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let (net, _) = defaults();
        let a = sample_realization_trial(&net, 7, 3);
        let b = sample_realization_trial(&net, 7, 3);
        let c = sample_realization_trial(&net, 7, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn larger_window_nests_smaller_one() {
        let (net, _) = defaults();
        let mut big = net;
        big.window_radius_m = 2.0 * net.window_radius_m;
        let small = sample_realization_trial(&net, 1, 0);
        let large = sample_realization_trial(&big, 1, 0);
        let inner: Vec<_> = large
            .small_bs
            .iter()
            .filter(|b| b.distance() < net.window_radius_m)
            .cloned()
            .collect();
        assert_eq!(inner, small.small_bs);
        assert!(large.small_bs.len() > small.small_bs.len());
    }

    #[test]
    fn empty_small_tier_forces_macro_case() {
        let (mut net, _) = defaults();
        net.small_tier.density = 0.0;
        let real = sample_realization_trial(&net, 3, 0);
        assert!(real.small_bs.is_empty());
        let a = associate(&real, &net).unwrap();
        assert_eq!(a.case, AssociationCase::MacroDominant);
        assert_eq!(a.serving.0, Tier::Macro);
    }

    #[test]
    fn empty_realization_is_void() {
        let (net, _) = defaults();
        let real = Realization {
            macro_bs: vec![],
            small_bs: vec![],
        };
        assert!(matches!(associate(&real, &net), Err(Error::VoidRealization)));
    }

    /// Places one macro so that its long-term power is `ratio` times the
    /// single small cell's.
    fn two_cell(ratio: f64) -> (NetworkConfig, Realization) {
        let net = silent_network();
        let d_small = 50.0;
        let p_small = path_gain(net.small_tier.c_los, net.small_tier.alpha_los, d_small);
        // solve m c d^-alpha = ratio * p_small for d
        let m = net.power_ratio();
        let d_macro = (m * net.macro_tier.c_los / (ratio * p_small)).powf(1.0 / net.macro_tier.alpha_los);
        let real = Realization {
            macro_bs: vec![bs(d_macro, true, 1.0)],
            small_bs: vec![bs(d_small, true, 1.0)],
        };
        (net, real)
    }

    #[test]
    fn association_examples() {
        let (net, real) = two_cell(2.0);
        let a = associate(&real, &net).unwrap();
        assert_eq!(a.case, AssociationCase::RangeExpanded);
        assert_eq!(a.serving, (Tier::Small, 0));
        assert_eq!(a.sic_target, Some(0));

        let (net, real) = two_cell(20.0);
        let a = associate(&real, &net).unwrap();
        assert_eq!(a.case, AssociationCase::MacroDominant);
        assert_eq!(a.serving, (Tier::Macro, 0));
        assert_eq!(a.sic_target, None);

        let (net, real) = two_cell(0.5);
        assert_eq!(associate(&real, &net).unwrap().case, AssociationCase::SmallStronger);
    }

    #[test]
    fn unit_bias_never_range_expands() {
        let (mut net, _) = defaults();
        net.bias_b = 1.0;
        for t in 0..200 {
            let real = sample_realization_trial(&net, 9, t);
            assert_ne!(associate(&real, &net).unwrap().case, AssociationCase::RangeExpanded);
        }
    }

    #[test]
    fn interference_free_sinr() {
        let net = silent_network();
        let real = Realization {
            macro_bs: vec![],
            small_bs: vec![bs(50.0, true, 1.0)],
        };
        let (_, mut noma) = defaults();
        noma.alpha_p = 0.8;
        let o = decode_realization(&real, &net, &noma).unwrap();
        assert!((o.sinr_pl - 4.0).abs() < 1e-12, "{}", o.sinr_pl);
        assert!(o.pl_ok);
    }

    #[test]
    fn full_primary_power_never_decodes_secondary() {
        let (net, mut noma) = defaults();
        noma.alpha_p = 1.0;
        let links = sample_links(&net, 300, 2);
        for o in links.decode_all(&noma) {
            assert!(!o.sl_ok);
        }
    }

    #[test]
    fn infeasible_split_never_decodes_primary() {
        let (net, mut noma) = defaults();
        noma.alpha_p = 0.5;
        noma.rate_pl = 1.0;
        assert_eq!(rate_to_threshold(1.0), 1.0);
        let links = sample_links(&net, 300, 2);
        assert!(links.decode_all(&noma).iter().all(|o| !o.pl_ok));
    }

    #[test]
    fn cancellation_rescues_range_expanded_user() {
        // macro 5x stronger than the serving small cell, no other interference
        let (net, real) = two_cell(5.0);
        let (_, mut noma) = defaults();
        noma.alpha_p = 0.9;
        noma.rate_pl = 0.5;
        let link = link_budget(&real, &net, 0).unwrap();
        assert_eq!(link.case, AssociationCase::RangeExpanded);
        let o = decode(&link, &noma);
        assert!(!o.pl_direct);
        assert!(o.sic_attempted && o.sic_success && o.pl_after_sic && o.pl_ok);
        // secondary decoded with the macro removed: 0.1 / noise is huge
        assert!(o.sl_ok);

        noma.sic = SicMode::Disabled;
        let o = decode(&link, &noma);
        assert!(!o.pl_ok && !o.sic_attempted);
    }

    #[test]
    fn sic_interference_switch_changes_target_sinr() {
        let (net, real) = two_cell(1.2);
        let (_, mut noma) = defaults();
        noma.alpha_p = 0.6;
        // T = 1.4: the target's SINR is 1.2 against the whole serving signal
        // and 2.0 against its primary portion only
        noma.rate_pl = 2.4f64.log2();
        let link = link_budget(&real, &net, 0).unwrap();
        let full = decode(&link, &noma);
        noma.sic_interference = SicInterference::PrimaryOnly;
        let primary = decode(&link, &noma);
        assert!(!full.pl_direct && full.sic_attempted && !full.sic_success && !full.pl_ok);
        assert!(primary.sic_success && primary.pl_after_sic && primary.pl_ok);
    }

    #[test]
    fn outcome_invariants_hold_on_random_trials() {
        let (net, noma) = defaults();
        let links = sample_links(&net, 500, 21);
        for (l, o) in links.links.iter().zip(links.decode_all(&noma)) {
            assert!(!o.sl_ok || o.pl_ok);
            let expect = o.pl_direct
                || (l.case == AssociationCase::RangeExpanded && o.sic_success && o.pl_after_sic);
            assert_eq!(o.pl_ok, expect);
            assert_eq!(l.sic_target_power.is_some(), l.case == AssociationCase::RangeExpanded);
        }
    }

    #[test]
    fn estimate_partitions_cases() {
        let (net, noma) = defaults();
        let e = estimate(&net, &noma, 400, 5);
        let share_sum: f64 = e.case_shares.iter().map(|c| c.value).sum();
        assert!((share_sum - 1.0).abs() < 1e-12);
        let by_case: f64 = e.p_pl_by_case.iter().map(|c| c.value).sum();
        assert!((by_case - e.p_pl.value).abs() < 1e-12);
        assert!(e.p_psl.value <= e.p_pl.value);
    }

    #[test]
    fn impossible_threshold_gives_zero_coverage() {
        let (net, mut noma) = defaults();
        noma.alpha_p = 1.0;
        noma.rate_pl = 60.0;
        assert_eq!(estimate(&net, &noma, 200, 1).p_pl.value, 0.0);
    }

    #[test]
    fn trial_dump_has_header_and_rows() {
        let (net, noma) = defaults();
        let links = sample_links(&net, 20, 4);
        let outcomes = links.decode_all(&noma);
        let mut buf = Vec::new();
        links.write_trials_csv(&mut buf, &outcomes).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "trial,case_id,sinr_pl,sinr_sl,pl_ok,sl_ok");
        assert_eq!(lines.count(), 20);
    }
}
