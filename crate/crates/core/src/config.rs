//! Parameter model of the two-tier network and of the NOMA multicast layer.
//!
//! Units: powers are carried in dBm at the interface and converted to linear
//! milliwatts internally; distances are meters; densities are base stations
//! per square meter. Reference path gains `c_los`/`c_nlos` are taken at 1 m.
//!
//! Received powers inside the evaluators are normalized by the small-cell
//! transmit power, so a small cell transmits 1 and a macro cell transmits
//! [`NetworkConfig::power_ratio`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Linear SINR threshold for a target spectral efficiency: `2^r - 1`.
pub fn rate_to_threshold(rate: f64) -> f64 {
    (rate * std::f64::consts::LN_2).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    Macro,
    Small,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Macro => "macro",
            Tier::Small => "small",
        }
    }
}

/// Per-tier deployment and propagation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierParams {
    pub tx_power_dbm: f64,
    /// PPP intensity, BS / m^2.
    pub density: f64,
    pub c_los: f64,
    pub c_nlos: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// Blockage rate per meter: P(LOS at distance d) = exp(-beta d).
    pub beta: f64,
    /// Nakagami shape of LOS links.
    pub n_los: u32,
    /// Nakagami shape of NLOS links.
    pub n_nlos: u32,
}

impl TierParams {
    pub fn path_gain(&self, los: bool) -> (f64, f64) {
        if los {
            (self.c_los, self.alpha_los)
        } else {
            (self.c_nlos, self.alpha_nlos)
        }
    }

    pub fn fading_shape(&self, los: bool) -> u32 {
        if los {
            self.n_los
        } else {
            self.n_nlos
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub macro_tier: TierParams,
    pub small_tier: TierParams,
    /// Cell range expansion bias applied to small-cell received power.
    pub bias_b: f64,
    pub noise_dbm: f64,
    /// Radius of the simulated disk around the user.
    pub window_radius_m: f64,
}

impl NetworkConfig {
    pub fn tier(&self, tier: Tier) -> &TierParams {
        match tier {
            Tier::Macro => &self.macro_tier,
            Tier::Small => &self.small_tier,
        }
    }

    /// Macro over small transmit power, linear.
    pub fn power_ratio(&self) -> f64 {
        dbm_to_mw(self.macro_tier.tx_power_dbm - self.small_tier.tx_power_dbm)
    }

    /// Transmit power of `tier` relative to the small-cell transmit power.
    pub fn relative_power(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Macro => self.power_ratio(),
            Tier::Small => 1.0,
        }
    }

    /// Noise power relative to the small-cell transmit power.
    pub fn normalized_noise(&self) -> f64 {
        dbm_to_mw(self.noise_dbm - self.small_tier.tx_power_dbm)
    }
}

/// MOS curve coefficients as printed, or re-derived for endpoint continuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MosMode {
    Paper,
    Continuous,
}

/// How uncovered users enter the average MOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MosWeighting {
    /// Uncovered users carry zero weight.
    Verbatim,
    /// Uncovered users score MOS 1.
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SicMode {
    Enabled,
    Disabled,
}

/// Serving-signal power counted as interference while decoding the
/// strongest interferer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SicInterference {
    /// Whole serving signal, both layers.
    FullPower,
    /// Primary-layer portion only.
    PrimaryOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NomaConfig {
    /// Fraction of the serving power given to the primary layer.
    pub alpha_p: f64,
    /// Primary-layer target rate, b/s/Hz.
    pub rate_pl: f64,
    /// Secondary-layer target rate, b/s/Hz.
    pub rate_sl: f64,
    /// MOS breakpoints, as rates in b/s/Hz.
    pub mos_theta1: f64,
    pub mos_theta4: f64,
    pub mos_mode: MosMode,
    pub mos_weighting: MosWeighting,
    pub sic: SicMode,
    pub sic_interference: SicInterference,
    /// Whether sweeps also evaluate the OMA baseline.
    pub oma_baseline: bool,
}

impl NomaConfig {
    pub fn t_pl(&self) -> f64 {
        rate_to_threshold(self.rate_pl)
    }

    pub fn t_sl(&self) -> f64 {
        rate_to_threshold(self.rate_sl)
    }

    /// Single-layer, whole-power transmission at the combined rate.
    pub fn oma_equivalent(&self) -> NomaConfig {
        NomaConfig {
            alpha_p: 1.0,
            rate_pl: self.rate_pl + self.rate_sl,
            rate_sl: 0.0,
            ..*self
        }
    }
}

/// A network together with its multicast configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub noma: NomaConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        let (network, noma) = defaults();
        Scenario { network, noma }
    }
}

/// Default parameter set of the two-tier model.
pub fn defaults() -> (NetworkConfig, NomaConfig) {
    let macro_tier = TierParams {
        tx_power_dbm: 36.0,
        density: 1e-5,
        c_los: 10f64.powf(-3.08),
        c_nlos: 10f64.powf(-0.27),
        alpha_los: 2.42,
        alpha_nlos: 4.28,
        beta: 0.004,
        n_los: 3,
        n_nlos: 2,
    };
    let small_tier = TierParams {
        tx_power_dbm: 26.0,
        density: 1e-4,
        c_los: 10f64.powf(-4.11),
        c_nlos: 10f64.powf(-3.29),
        alpha_los: 2.09,
        alpha_nlos: 3.75,
        beta: 0.008,
        n_los: 3,
        n_nlos: 2,
    };
    let network = NetworkConfig {
        macro_tier,
        small_tier,
        bias_b: 15.0,
        noise_dbm: -95.0,
        window_radius_m: 5000.0,
    };
    let noma = NomaConfig {
        alpha_p: 0.9,
        rate_pl: 0.1,
        rate_sl: 0.2,
        mos_theta1: 0.1,
        mos_theta4: 10.0,
        mos_mode: MosMode::Continuous,
        mos_weighting: MosWeighting::Verbatim,
        sic: SicMode::Enabled,
        sic_interference: SicInterference::FullPower,
        oma_baseline: true,
    };
    (network, noma)
}

/// One failed invariant, tagged with the offending field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check(out: &mut Vec<Violation>, ok: bool, field: &str, message: &str) {
    if !ok {
        out.push(Violation {
            field: field.to_string(),
            message: message.to_string(),
        });
    }
}

fn validate_tier(out: &mut Vec<Violation>, prefix: &str, t: &TierParams) {
    let f = |name: &str| format!("{prefix}.{name}");
    check(out, t.tx_power_dbm.is_finite(), &f("tx_power_dbm"), "not finite");
    check(out, t.density >= 0.0 && t.density.is_finite(), &f("density"), "density < 0");
    check(out, t.c_los > 0.0, &f("c_los"), "c_los <= 0");
    check(out, t.c_nlos > 0.0, &f("c_nlos"), "c_nlos <= 0");
    check(out, t.alpha_los > 2.0, &f("alpha_los"), "alpha_los <= 2");
    check(out, t.alpha_nlos > 2.0, &f("alpha_nlos"), "alpha_nlos <= 2");
    check(out, t.beta >= 0.0 && t.beta.is_finite(), &f("beta"), "beta < 0");
    check(out, t.n_los >= 1, &f("n_los"), "n_los < 1");
    check(out, t.n_nlos >= 1, &f("n_nlos"), "n_nlos < 1");
}

/// Checks every invariant and reports all violations at once.
pub fn validate(cfg: &NetworkConfig, noma: &NomaConfig) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    validate_tier(&mut out, "macro", &cfg.macro_tier);
    validate_tier(&mut out, "small", &cfg.small_tier);
    check(
        &mut out,
        cfg.macro_tier.density > 0.0 || cfg.small_tier.density > 0.0,
        "density",
        "both tiers empty",
    );
    check(&mut out, cfg.bias_b >= 1.0, "bias_b", "bias_b < 1");
    check(&mut out, cfg.noise_dbm.is_finite(), "noise_dbm", "not finite");
    check(
        &mut out,
        cfg.window_radius_m > 0.0 && cfg.window_radius_m.is_finite(),
        "window_radius_m",
        "window_radius_m <= 0",
    );
    check(&mut out, cfg.power_ratio() > 1.0, "power_ratio_m", "power_ratio_m <= 1");
    check(
        &mut out,
        noma.alpha_p > 0.0 && noma.alpha_p <= 1.0,
        "alpha_p",
        "alpha_p out of (0,1]",
    );
    check(&mut out, noma.rate_pl > 0.0, "rate_pl", "t_pl <= 0");
    check(&mut out, noma.rate_sl > 0.0, "rate_sl", "t_sl <= 0");
    check(
        &mut out,
        noma.mos_theta1 > 0.0 && noma.mos_theta1 < noma.mos_theta4,
        "mos_theta1",
        "mos_theta1 must be positive and below mos_theta4",
    );
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        validate(&self.network, &self.noma).map_err(Error::InvalidConfig)
    }

    /// Every key accepted by [`Scenario::set`], in documentation order.
    pub const KEYS: &'static [&'static str] = &[
        "macro_tx_power_dbm",
        "macro_density",
        "macro_c_los",
        "macro_c_nlos",
        "macro_alpha_los",
        "macro_alpha_nlos",
        "macro_beta",
        "macro_n_los",
        "macro_n_nlos",
        "small_tx_power_dbm",
        "small_density",
        "small_c_los",
        "small_c_nlos",
        "small_alpha_los",
        "small_alpha_nlos",
        "small_beta",
        "small_n_los",
        "small_n_nlos",
        "bias_b",
        "noise_dbm",
        "window_radius_m",
        "alpha_p",
        "rate_pl",
        "rate_sl",
        "mos_theta1",
        "mos_theta4",
        "mos_mode",
        "mos_weighting",
        "sic",
        "sic_interference",
        "oma_baseline",
    ];

    /// Sets one parameter from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        let bad = |reason: &str| Error::BadValue {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| bad(&format!("`{value}` is not a number")))
        };
        let shape = || -> Result<u32> {
            let v = num()?;
            if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
                return Err(bad("Nakagami shape must be a positive integer"));
            }
            Ok(v as u32)
        };

        if let Some((tier, field)) = key
            .strip_prefix("macro_")
            .map(|f| (Tier::Macro, f))
            .or_else(|| key.strip_prefix("small_").map(|f| (Tier::Small, f)))
        {
            let t = match tier {
                Tier::Macro => &mut self.network.macro_tier,
                Tier::Small => &mut self.network.small_tier,
            };
            match field {
                "tx_power_dbm" => t.tx_power_dbm = num()?,
                "density" => t.density = num()?,
                "c_los" => t.c_los = num()?,
                "c_nlos" => t.c_nlos = num()?,
                "alpha_los" => t.alpha_los = num()?,
                "alpha_nlos" => t.alpha_nlos = num()?,
                "beta" => t.beta = num()?,
                "n_los" => t.n_los = shape()?,
                "n_nlos" => t.n_nlos = shape()?,
                _ => return Err(Error::UnknownKey(key.to_string())),
            }
            return Ok(());
        }

        match key {
            "bias_b" => self.network.bias_b = num()?,
            "noise_dbm" => self.network.noise_dbm = num()?,
            "window_radius_m" => self.network.window_radius_m = num()?,
            "alpha_p" => self.noma.alpha_p = num()?,
            "rate_pl" => self.noma.rate_pl = num()?,
            "rate_sl" => self.noma.rate_sl = num()?,
            "mos_theta1" => self.noma.mos_theta1 = num()?,
            "mos_theta4" => self.noma.mos_theta4 = num()?,
            "mos_mode" => {
                self.noma.mos_mode = match value {
                    "paper" => MosMode::Paper,
                    "continuous" => MosMode::Continuous,
                    _ => return Err(bad("expected `paper` or `continuous`")),
                }
            }
            "mos_weighting" => {
                self.noma.mos_weighting = match value {
                    "verbatim" => MosWeighting::Verbatim,
                    "floor" => MosWeighting::Floor,
                    _ => return Err(bad("expected `verbatim` or `floor`")),
                }
            }
            "sic" => {
                self.noma.sic = match value {
                    "on" | "true" | "enabled" => SicMode::Enabled,
                    "off" | "false" | "disabled" => SicMode::Disabled,
                    _ => return Err(bad("expected `on` or `off`")),
                }
            }
            "sic_interference" => {
                self.noma.sic_interference = match value {
                    "full" => SicInterference::FullPower,
                    "primary" => SicInterference::PrimaryOnly,
                    _ => return Err(bad("expected `full` or `primary`")),
                }
            }
            "oma_baseline" => {
                self.noma.oma_baseline = value
                    .parse::<bool>()
                    .map_err(|_| bad("expected `true` or `false`"))?
            }
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a flat `key = value` configuration text on top of `self`.
    ///
    /// The text is TOML restricted to top-level scalar keys.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        for (key, value) in &table {
            let literal = match value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                _ => {
                    return Err(Error::BadValue {
                        key: key.clone(),
                        reason: "only scalar values are allowed".into(),
                    })
                }
            };
            self.set(key, &literal)?;
        }
        Ok(())
    }

    pub fn from_config_file(path: &Path) -> Result<Scenario> {
        let mut s = Scenario::default();
        s.apply_config_text(&std::fs::read_to_string(path)?)?;
        Ok(s)
    }

    /// Renders the full parameter set as a config file that
    /// [`Scenario::apply_config_text`] reads back.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let n = &self.network;
        for (prefix, t) in [("macro", &n.macro_tier), ("small", &n.small_tier)] {
            out.push_str(&format!("# {prefix} tier\n"));
            out.push_str(&format!("{prefix}_tx_power_dbm = {:?}\n", t.tx_power_dbm));
            out.push_str(&format!("{prefix}_density = {:?}\n", t.density));
            out.push_str(&format!("{prefix}_c_los = {:?}\n", t.c_los));
            out.push_str(&format!("{prefix}_c_nlos = {:?}\n", t.c_nlos));
            out.push_str(&format!("{prefix}_alpha_los = {:?}\n", t.alpha_los));
            out.push_str(&format!("{prefix}_alpha_nlos = {:?}\n", t.alpha_nlos));
            out.push_str(&format!("{prefix}_beta = {:?}\n", t.beta));
            out.push_str(&format!("{prefix}_n_los = {}\n", t.n_los));
            out.push_str(&format!("{prefix}_n_nlos = {}\n", t.n_nlos));
        }
        out.push_str("# network\n");
        out.push_str(&format!("bias_b = {:?}\n", n.bias_b));
        out.push_str(&format!("noise_dbm = {:?}\n", n.noise_dbm));
        out.push_str(&format!("window_radius_m = {:?}\n", n.window_radius_m));
        let m = &self.noma;
        out.push_str("# multicast layers\n");
        out.push_str(&format!("alpha_p = {:?}\n", m.alpha_p));
        out.push_str(&format!("rate_pl = {:?}\n", m.rate_pl));
        out.push_str(&format!("rate_sl = {:?}\n", m.rate_sl));
        out.push_str(&format!("mos_theta1 = {:?}\n", m.mos_theta1));
        out.push_str(&format!("mos_theta4 = {:?}\n", m.mos_theta4));
        let mode = match m.mos_mode {
            MosMode::Paper => "paper",
            MosMode::Continuous => "continuous",
        };
        out.push_str(&format!("mos_mode = \"{mode}\"\n"));
        let weighting = match m.mos_weighting {
            MosWeighting::Verbatim => "verbatim",
            MosWeighting::Floor => "floor",
        };
        out.push_str(&format!("mos_weighting = \"{weighting}\"\n"));
        let sic = match m.sic {
            SicMode::Enabled => "on",
            SicMode::Disabled => "off",
        };
        out.push_str(&format!("sic = \"{sic}\"\n"));
        let si = match m.sic_interference {
            SicInterference::FullPower => "full",
            SicInterference::PrimaryOnly => "primary",
        };
        out.push_str(&format!("sic_interference = \"{si}\"\n"));
        out.push_str(&format!("oma_baseline = {}\n", m.oma_baseline));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_published_parameter_set() {
        let (net, _) = defaults();
        assert_eq!(net.macro_tier.tx_power_dbm, 36.0);
        assert_eq!(net.small_tier.tx_power_dbm, 26.0);
        assert_eq!(net.bias_b, 15.0);
        assert_eq!(net.macro_tier.c_nlos, 10f64.powf(-0.27));
        assert_eq!(net.macro_tier.c_los, 10f64.powf(-3.08));
        assert_eq!(net.small_tier.c_nlos, 10f64.powf(-3.29));
        assert_eq!(net.small_tier.c_los, 10f64.powf(-4.11));
        assert_eq!(net.macro_tier.alpha_nlos, 4.28);
        assert_eq!(net.macro_tier.alpha_los, 2.42);
        assert_eq!(net.small_tier.alpha_nlos, 3.75);
        assert_eq!(net.small_tier.alpha_los, 2.09);
        assert_eq!(net.macro_tier.beta, 0.004);
        assert_eq!(net.small_tier.beta, 0.008);
        assert_eq!(net.macro_tier.density, 1e-5);
        assert_eq!(net.small_tier.density, 1e-4);
        assert_eq!((net.macro_tier.n_los, net.macro_tier.n_nlos), (3, 2));
        assert_eq!((net.small_tier.n_los, net.small_tier.n_nlos), (3, 2));
        assert_eq!(net.noise_dbm, -95.0);
        assert_relative_eq!(net.power_ratio(), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn defaults_validate() {
        let (net, noma) = defaults();
        assert!(validate(&net, &noma).is_ok());
    }

    #[test]
    fn alpha_p_zero_is_rejected() {
        let (net, mut noma) = defaults();
        noma.alpha_p = 0.0;
        let v = validate(&net, &noma).unwrap_err();
        assert!(v.iter().any(|v| v.message == "alpha_p out of (0,1]" && v.field == "alpha_p"));
    }

    #[test]
    fn bias_below_one_is_rejected() {
        let (mut net, noma) = defaults();
        net.bias_b = 0.5;
        let v = validate(&net, &noma).unwrap_err();
        assert!(v.iter().any(|v| v.message == "bias_b < 1"));
    }

    #[test]
    fn all_violations_are_reported() {
        let (mut net, mut noma) = defaults();
        net.bias_b = 0.5;
        net.small_tier.alpha_los = 1.5;
        net.macro_tier.n_nlos = 0;
        noma.alpha_p = 1.5;
        let fields: Vec<_> = validate(&net, &noma)
            .unwrap_err()
            .into_iter()
            .map(|v| v.field)
            .collect();
        for f in ["bias_b", "small.alpha_los", "macro.n_nlos", "alpha_p"] {
            assert!(fields.iter().any(|x| x == f), "missing {f} in {fields:?}");
        }
    }

    #[test]
    fn equal_powers_violate_power_ratio() {
        let (mut net, noma) = defaults();
        net.macro_tier.tx_power_dbm = 26.0;
        let v = validate(&net, &noma).unwrap_err();
        assert!(v.iter().any(|v| v.field == "power_ratio_m"));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(rate_to_threshold(0.0), 0.0);
        assert_relative_eq!(rate_to_threshold(1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(rate_to_threshold(0.1), 2f64.powf(0.1) - 1.0, max_relative = 1e-14);
        assert_relative_eq!(rate_to_threshold(0.1), 0.071_773_462_536_293_2, max_relative = 1e-12);
    }

    #[test]
    fn config_text_round_trip() {
        let mut s = Scenario::default();
        s.noma.mos_mode = MosMode::Paper;
        s.network.small_tier.n_los = 1;
        let text = s.to_config_text();
        let mut back = Scenario::default();
        back.apply_config_text(&text).unwrap();
        assert_eq!(s, back);
        for key in Scenario::KEYS {
            assert!(text.contains(&format!("\n{key} = ")) || text.starts_with(key), "{key}");
        }
    }

    #[test]
    fn config_text_rejects_unknown_and_fractional_shape() {
        let mut s = Scenario::default();
        assert!(matches!(s.apply_config_text("foo = 1"), Err(Error::UnknownKey(_))));
        assert!(matches!(
            s.apply_config_text("small_n_los = 2.5"),
            Err(Error::BadValue { .. })
        ));
        s.apply_config_text("alpha_p = 0.7\nrate_pl = 0.3 # comment\n").unwrap();
        assert_eq!(s.noma.alpha_p, 0.7);
        assert_eq!(s.noma.rate_pl, 0.3);
    }

    proptest! {
        #[test]
        fn dbm_round_trip(d in -150.0f64..80.0) {
            let back = mw_to_dbm(dbm_to_mw(d));
            prop_assert!((back - d).abs() <= 1e-12 * d.abs().max(1.0));
        }

        #[test]
        fn threshold_strictly_increasing(a in 0.0f64..8.0, da in 1e-6f64..2.0) {
            prop_assert!(rate_to_threshold(a + da) > rate_to_threshold(a));
        }
    }
}
