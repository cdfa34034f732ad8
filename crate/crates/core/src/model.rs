//! Physical parameters and closed-form channel/detector statistics.
//!
//! Everything here is a pure function of [`ChannelParams`] and a one-arm
//! efficiency `eta`. Distances are always the total Alice–Bob separation;
//! each arm (sender to the middle node) sees half of it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Value returned by [`plob_bound`] where the bound diverges (zero loss).
pub const PLOB_CAP: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
}

fn domain(name: &'static str, value: f64, domain: &'static str) -> ModelError {
    ModelError::Domain {
        name,
        value,
        domain,
    }
}

/// All physical and protocol constants of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Detector efficiency.
    pub eta_d: f64,
    /// Fiber attenuation in dB/km.
    pub zeta: f64,
    /// Dark count probability per detector per round.
    pub p_d: f64,
    /// Background error rate.
    pub e_0: f64,
    /// Misalignment error.
    pub delta: f64,
    /// Signal intensity (mean photon number).
    pub mu: f64,
    /// Decoy intensity.
    pub nu: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
    /// Maximum event interval in rounds.
    #[serde(rename = "T")]
    pub t: u64,
    /// Abort threshold on isolated valid events.
    pub lambda_threshold: u64,
    /// Number of phase slices used to publish relative phases.
    pub phase_slices: u32,
    /// Whether the quantum layer also emits decoy pulses.
    pub emit_decoy: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            eta_d: 0.2,
            zeta: 0.2,
            p_d: 1e-7,
            e_0: 0.5,
            delta: 0.02,
            mu: 0.5,
            nu: 0.1,
            f_ec: 1.1,
            t: 1000,
            lambda_threshold: 10,
            phase_slices: 16,
            emit_decoy: false,
        }
    }
}

impl ChannelParams {
    /// Config keys, in file order.
    pub const KEYS: [&'static str; 12] = [
        "eta_d",
        "zeta",
        "p_d",
        "e_0",
        "delta",
        "mu",
        "nu",
        "f_ec",
        "T",
        "lambda_threshold",
        "phase_slices",
        "emit_decoy",
    ];

    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |ok: bool, name: &'static str, value: f64, dom: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(domain(name, value, dom))
            }
        };
        check(self.eta_d > 0.0 && self.eta_d <= 1.0, "eta_d", self.eta_d, "(0,1]")?;
        check(self.zeta >= 0.0 && self.zeta.is_finite(), "zeta", self.zeta, ">= 0")?;
        check(self.p_d >= 0.0 && self.p_d < 0.5, "p_d", self.p_d, "[0,0.5)")?;
        check((0.0..=1.0).contains(&self.e_0), "e_0", self.e_0, "[0,1]")?;
        check((0.0..=1.0).contains(&self.delta), "delta", self.delta, "[0,1]")?;
        check(self.mu > 0.0 && self.mu.is_finite(), "mu", self.mu, "> 0")?;
        check(self.nu >= 0.0 && self.nu < self.mu, "nu", self.nu, "[0, mu)")?;
        check(self.f_ec >= 1.0 && self.f_ec.is_finite(), "f_ec", self.f_ec, ">= 1")?;
        check(self.t >= 1, "T", self.t as f64, ">= 1")?;
        if self.phase_slices < 2 || !self.phase_slices.is_multiple_of(2) {
            return Err(ModelError::InvalidParam {
                name: "phase_slices",
                reason: format!("{} must be even and >= 2", self.phase_slices),
            });
        }
        Ok(())
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    /// Parses a flat `key = value` config on top of the defaults.
    ///
    /// Blank lines and `#` comments are ignored. Unknown and repeated keys
    /// are errors; the result is validated.
    pub fn from_config_str(text: &str) -> Result<Self, ModelError> {
        let mut params = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ModelError::Config {
                line: line_no,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key.to_string()) {
                return Err(ModelError::Config {
                    line: line_no,
                    reason: format!("duplicate key `{key}`"),
                });
            }
            params.set(key, value).map_err(|reason| ModelError::Config {
                line: line_no,
                reason,
            })?;
            seen.push(key.to_string());
        }
        params.validate()?;
        Ok(params)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("cannot parse `{value}` for `{key}`"))
        }
        match key {
            "eta_d" => self.eta_d = num(key, value)?,
            "zeta" => self.zeta = num(key, value)?,
            "p_d" => self.p_d = num(key, value)?,
            "e_0" => self.e_0 = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "nu" => self.nu = num(key, value)?,
            "f_ec" => self.f_ec = num(key, value)?,
            "T" => self.t = num(key, value)?,
            "lambda_threshold" => self.lambda_threshold = num(key, value)?,
            "phase_slices" => self.phase_slices = num(key, value)?,
            "emit_decoy" => self.emit_decoy = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

impl fmt::Display for ChannelParams {
    /// Renders the params in config-file syntax; parses back to `self`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "eta_d = {}", self.eta_d)?;
        writeln!(f, "zeta = {}", self.zeta)?;
        writeln!(f, "p_d = {}", self.p_d)?;
        writeln!(f, "e_0 = {}", self.e_0)?;
        writeln!(f, "delta = {}", self.delta)?;
        writeln!(f, "mu = {}", self.mu)?;
        writeln!(f, "nu = {}", self.nu)?;
        writeln!(f, "f_ec = {}", self.f_ec)?;
        writeln!(f, "T = {}", self.t)?;
        writeln!(f, "lambda_threshold = {}", self.lambda_threshold)?;
        writeln!(f, "phase_slices = {}", self.phase_slices)?;
        writeln!(f, "emit_decoy = {}", self.emit_decoy)
    }
}

/// Per-path gains for intensities in {0, mu}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub q_mumu: f64,
    pub q_mu0: f64,
    pub q_0mu: f64,
    pub q_00: f64,
    /// Average gain Q over the four intensity combinations.
    pub q_avg: f64,
}

/// Photon-number yields and the phase-error/yield product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldSet {
    pub y0: f64,
    pub y1: f64,
    pub y2: f64,
    pub y11: f64,
    /// Product of the single-photon-pair phase error rate and `y11`.
    pub e11_prod: f64,
}

/// h(x) in bits, with 0·log 0 = 0.
pub fn binary_entropy(x: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("x", x, "[0,1]"));
    }
    Ok(entropy(x))
}

pub(crate) fn entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// One-arm efficiency `eta_d * 10^(-zeta d / 20)` for total distance `d_km`.
pub fn transmittance(params: &ChannelParams, d_km: f64) -> Result<f64, ModelError> {
    if d_km.is_nan() || d_km < 0.0 {
        return Err(domain("d", d_km, ">= 0"));
    }
    Ok(params.eta_d * 10f64.powf(-params.zeta * d_km / 20.0))
}

fn check_eta(eta: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(domain("eta", eta, "[0,1]"))
    }
}

pub fn gains(params: &ChannelParams, eta: f64) -> Result<GainSet, ModelError> {
    check_eta(eta)?;
    let pd = params.p_d;
    let mu = params.mu;
    let both = (-2.0 * eta * mu).exp();
    let q_mumu = 1.0 - both + 2.0 * pd * both;
    let q_mu0 = 1.0 - (1.0 - 2.0 * pd) * (-eta * mu).exp();
    let q_00 = 2.0 * pd * (1.0 - pd);
    Ok(GainSet {
        q_mumu,
        q_mu0,
        q_0mu: q_mu0,
        q_00,
        q_avg: (q_mumu + 2.0 * q_mu0 + q_00) / 4.0,
    })
}

/// Yields without an eavesdropper.
///
/// `y0` and `y2` follow the pattern of the `y1` expression: `y0` is the
/// probability of exactly one dark click, `y2 = 1 - (1-2p_d)(1-eta)^2`.
pub fn yields(params: &ChannelParams, eta: f64) -> Result<YieldSet, ModelError> {
    check_eta(eta)?;
    let pd = params.p_d;
    let y0 = 2.0 * pd * (1.0 - pd);
    let y1 = 1.0 - (1.0 - 2.0 * pd) * (1.0 - eta);
    let y2 = 1.0 - (1.0 - 2.0 * pd) * (1.0 - eta).powi(2);
    let y11 = (1.0 - pd).powi(2)
        * (eta * eta / 2.0
            + pd * (4.0 * eta - 3.0 * eta * eta)
            + 4.0 * pd * pd * (1.0 - eta).powi(2));
    let e11_prod =
        params.e_0 * y11 - (params.e_0 - params.delta) * (1.0 - pd * pd) * eta * eta / 2.0;
    Ok(YieldSet {
        y0,
        y1,
        y2,
        y11,
        e11_prod,
    })
}

/// Repeaterless bound at total distance `d_km`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlobBound {
    pub value: f64,
    /// Set when the bound diverges and `value` is [`PLOB_CAP`].
    pub capped: bool,
}

/// `-log2(1 - eta_c)` with end-to-end transmittance `eta_c = 10^(-zeta d / 10)`.
pub fn plob_bound(zeta: f64, d_km: f64) -> Result<PlobBound, ModelError> {
    if d_km.is_nan() || d_km < 0.0 {
        return Err(domain("d", d_km, ">= 0"));
    }
    if zeta.is_nan() || zeta < 0.0 {
        return Err(domain("zeta", zeta, ">= 0"));
    }
    let loss_db = zeta * d_km;
    if loss_db == 0.0 {
        return Ok(PlobBound {
            value: PLOB_CAP,
            capped: true,
        });
    }
    let eta_c = 10f64.powf(-loss_db / 10.0);
    let value = if eta_c < 0.5 {
        -(-eta_c).ln_1p() / std::f64::consts::LN_2
    } else {
        // 1 - eta_c without cancellation
        let lost = -(-loss_db / 10.0 * std::f64::consts::LN_10).exp_m1();
        -lost.log2()
    };
    if value > PLOB_CAP {
        return Ok(PlobBound {
            value: PLOB_CAP,
            capped: true,
        });
    }
    Ok(PlobBound {
        value,
        capped: false,
    })
}

/// Modified Bessel function of the first kind, order zero.
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Phase-averaged probability that exactly one detector clicks when the
/// two senders emit intensities `a` and `b` into arms of efficiency `eta`.
pub fn exactly_one_click(p_d: f64, eta: f64, a: f64, b: f64) -> f64 {
    let keep = 1.0 - p_d;
    let total = eta * (a + b);
    2.0 * keep * (-total / 2.0).exp() * bessel_i0(eta * (a * b).sqrt())
        - 2.0 * keep * keep * (-total).exp()
}

/// Probability that at least one detector clicks (phase independent).
pub fn at_least_one_click(p_d: f64, eta: f64, a: f64, b: f64) -> f64 {
    1.0 - (1.0 - p_d).powi(2) * (-eta * (a + b)).exp()
}
