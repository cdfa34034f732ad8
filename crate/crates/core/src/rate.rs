//! Secrecy rate, X-basis preparation statistics and distance sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, entropy, ChannelParams, GainSet, ModelError, YieldSet};

/// Basis preparation rate: two valid events make one basis.
pub const BASIS_PREPARATION_RATE: f64 = 0.5;
/// Basis matching rate: 2 of the 16 intensity combinations of an event pair.
pub const BASIS_MATCHING_RATE: f64 = 1.0 / 8.0;
/// Target X-basis failure rate used for frame sizing.
pub const DEFAULT_TARGET_FAILURE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("division by zero: {0} vanishes")]
    DivisionByZero(&'static str),
    #[error("intensity grid is empty")]
    EmptyGrid,
    #[error("invalid intensity {0}")]
    InvalidIntensity(f64),
    #[error("distances must be nonnegative and sorted ascending")]
    UnsortedDistances,
    #[error("{name} = {value} is outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
}

/// A probability-like value that may have been clamped into its range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub clamped: bool,
}

impl Bounded {
    fn clamp(raw: f64, lo: f64, hi: f64) -> Self {
        let value = raw.clamp(lo, hi);
        Self {
            value,
            clamped: value != raw,
        }
    }
}

/// Z-basis QBER from dark-count-induced intensity patterns.
pub fn qber_z(gains: &GainSet, q_match: f64) -> Result<Bounded, RateError> {
    if gains.q_avg <= 0.0 {
        return Err(RateError::DivisionByZero("Q"));
    }
    if q_match <= 0.0 {
        return Err(RateError::DivisionByZero("q"));
    }
    let num = (gains.q_00 * gains.q_mumu + gains.q_mumu * gains.q_00) / 16.0;
    Ok(Bounded::clamp(
        num / (q_match * gains.q_avg * gains.q_avg),
        0.0,
        1.0,
    ))
}

/// Fraction of matched bases carried by single photons on both paths.
pub fn single_photon_fraction(
    params: &ChannelParams,
    gains: &GainSet,
    yields: &YieldSet,
    q_match: f64,
) -> Result<Bounded, RateError> {
    if gains.q_avg <= 0.0 {
        return Err(RateError::DivisionByZero("Q"));
    }
    if q_match <= 0.0 {
        return Err(RateError::DivisionByZero("q"));
    }
    let p1 = params.mu * (-params.mu).exp();
    let num = 2.0 * p1 * p1 * (yields.y1 * yields.y1 + yields.y2 * yields.y0) / 16.0;
    Ok(Bounded::clamp(
        num / (q_match * gains.q_avg * gains.q_avg),
        0.0,
        1.0,
    ))
}

/// Single-photon-pair phase error rate `e11 / Y11`, clamped to [0, 0.5].
pub fn phase_error_rate(yields: &YieldSet) -> Result<Bounded, RateError> {
    if yields.y11 <= 0.0 {
        return Err(RateError::DivisionByZero("Y11"));
    }
    Ok(Bounded::clamp(yields.e11_prod / yields.y11, 0.0, 0.5))
}

/// `max(0, p q Q {Δ1 [1 - h(eX)] - f h(EZ)})`.
pub fn rate_from_parts(q_avg: f64, delta_1: f64, e_x11: f64, e_z: f64, f_ec: f64) -> f64 {
    let brace = delta_1 * (1.0 - entropy(e_x11)) - f_ec * entropy(e_z);
    (BASIS_PREPARATION_RATE * BASIS_MATCHING_RATE * q_avg * brace).max(0.0)
}

/// Full breakdown of the secrecy rate at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub d: f64,
    pub eta: f64,
    pub mu_used: f64,
    pub q_avg: f64,
    pub e_z: f64,
    pub delta_1: f64,
    pub e_x11: f64,
    pub r: f64,
    pub plob: f64,
    pub plob_capped: bool,
    /// Some intermediate left its range and was clamped.
    pub clamped: bool,
    /// A denominator vanished; `r` is reported as 0.
    pub dead: bool,
}

pub fn secrecy_rate(params: &ChannelParams, d: f64, mu: f64) -> Result<RateBreakdown, RateError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(RateError::InvalidIntensity(mu));
    }
    let params = params.with_mu(mu);
    let eta = model::transmittance(&params, d)?;
    let plob = model::plob_bound(params.zeta, d)?;
    let gains = model::gains(&params, eta)?;
    let yields = model::yields(&params, eta)?;

    let mut row = RateBreakdown {
        d,
        eta,
        mu_used: mu,
        q_avg: gains.q_avg,
        e_z: 0.0,
        delta_1: 0.0,
        e_x11: 0.0,
        r: 0.0,
        plob: plob.value,
        plob_capped: plob.capped,
        clamped: false,
        dead: false,
    };
    let parts = qber_z(&gains, BASIS_MATCHING_RATE).and_then(|ez| {
        Ok((
            ez,
            single_photon_fraction(&params, &gains, &yields, BASIS_MATCHING_RATE)?,
            phase_error_rate(&yields)?,
        ))
    });
    match parts {
        Ok((ez, delta_1, ex)) => {
            let ez_half = Bounded::clamp(ez.value, 0.0, 0.5);
            row.e_z = ez_half.value;
            row.delta_1 = delta_1.value;
            row.e_x11 = ex.value;
            row.clamped = ez.clamped || ez_half.clamped || delta_1.clamped || ex.clamped;
            row.r = rate_from_parts(row.q_avg, row.delta_1, row.e_x11, row.e_z, params.f_ec);
        }
        Err(RateError::DivisionByZero(_)) => row.dead = true,
        Err(e) => return Err(e),
    }
    Ok(row)
}

/// 0.01, 0.02, ..., 1.00.
pub fn default_mu_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

/// Grid point maximizing the secrecy rate; ties go to the smaller intensity.
pub fn optimize_intensity(
    params: &ChannelParams,
    d: f64,
    mu_grid: &[f64],
) -> Result<(f64, RateBreakdown), RateError> {
    let mut best: Option<RateBreakdown> = None;
    for &mu in mu_grid {
        let row = secrecy_rate(params, d, mu)?;
        best = match best {
            Some(b) if b.r > row.r || (b.r == row.r && b.mu_used <= row.mu_used) => Some(b),
            _ => Some(row),
        };
    }
    let best = best.ok_or(RateError::EmptyGrid)?;
    Ok((best.mu_used, best))
}

fn check_event_args(t: u64, p_event: f64) -> Result<(), RateError> {
    if t < 1 {
        return Err(RateError::Domain {
            name: "T",
            value: t as f64,
            domain: ">= 1",
        });
    }
    if !(0.0..=1.0).contains(&p_event) {
        return Err(RateError::Domain {
            name: "p_event",
            value: p_event,
            domain: "[0,1]",
        });
    }
    Ok(())
}

/// Probability that at least two of `t` independent events succeed.
pub fn x_basis_success(t: u64, p_event: f64) -> Result<f64, RateError> {
    check_event_args(t, p_event)?;
    if t < 2 || p_event == 0.0 {
        return Ok(0.0);
    }
    if p_event == 1.0 {
        return Ok(1.0);
    }
    let tf = t as f64;
    if tf * p_event < 0.25 {
        // binomial tail summed upward from k = 2; terms shrink geometrically
        let ratio = p_event / (1.0 - p_event);
        let mut term = tf * (tf - 1.0) / 2.0
            * p_event
            * p_event
            * ((tf - 2.0) * (-p_event).ln_1p()).exp();
        let mut sum = 0.0;
        let mut k = 2.0;
        while k <= tf {
            sum += term;
            if term <= sum * 1e-18 {
                break;
            }
            term *= (tf - k) / (k + 1.0) * ratio;
            k += 1.0;
        }
        return Ok(sum.min(1.0));
    }
    // 1 - (1-p)^(T-1) (1 + (T-1) p)
    let log_fail = (tf - 1.0) * (-p_event).ln_1p() + ((tf - 1.0) * p_event).ln_1p();
    Ok((-log_fail.exp_m1()).clamp(0.0, 1.0))
}

/// Poisson approximation `1 - (1 + z) e^{-z}` with `z = (T-1) p`.
pub fn x_basis_success_approx(t: u64, p_event: f64) -> Result<f64, RateError> {
    check_event_args(t, p_event)?;
    let z = (t as f64 - 1.0) * p_event;
    Ok((-(-z).exp_m1() - z * (-z).exp()).clamp(0.0, 1.0))
}

/// Number of T-round blocks needed to push the X-basis failure rate below target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameCount {
    Frames(u64),
    /// A single block never succeeds.
    Unreachable,
}

impl FrameCount {
    pub fn frames(self) -> Option<u64> {
        match self {
            FrameCount::Frames(n) => Some(n),
            FrameCount::Unreachable => None,
        }
    }
}

/// Smallest N with `(1 - success)^N <= target_failure`.
pub fn frames_for_success(success: f64, target_failure: f64) -> Result<FrameCount, RateError> {
    if !(0.0..=1.0).contains(&success) {
        return Err(RateError::Domain {
            name: "Pr(X|T)",
            value: success,
            domain: "[0,1]",
        });
    }
    if !(target_failure > 0.0 && target_failure < 1.0) {
        return Err(RateError::Domain {
            name: "target_failure",
            value: target_failure,
            domain: "(0,1)",
        });
    }
    if success == 0.0 {
        return Ok(FrameCount::Unreachable);
    }
    if success == 1.0 {
        return Ok(FrameCount::Frames(1));
    }
    let log_fail = (-success).ln_1p();
    let log_target = target_failure.ln();
    let fail_after = |n: u64| n as f64 * log_fail;
    let mut n = (log_target / log_fail).ceil().max(1.0) as u64;
    while fail_after(n) > log_target {
        n += 1;
    }
    while n > 1 && fail_after(n - 1) <= log_target {
        n -= 1;
    }
    Ok(FrameCount::Frames(n))
}

pub fn frames_required(t: u64, p_event: f64, target_failure: f64) -> Result<FrameCount, RateError> {
    frames_for_success(x_basis_success(t, p_event)?, target_failure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XBasisPlan {
    pub t: u64,
    pub p_event: f64,
    pub pr_exact: f64,
    pub pr_approx: f64,
    pub n_frames: FrameCount,
    pub target_failure: f64,
}

pub fn x_basis_plan(t: u64, p_event: f64, target_failure: f64) -> Result<XBasisPlan, RateError> {
    let pr_exact = x_basis_success(t, p_event)?;
    Ok(XBasisPlan {
        t,
        p_event,
        pr_exact,
        pr_approx: x_basis_success_approx(t, p_event)?,
        n_frames: frames_for_success(pr_exact, target_failure)?,
        target_failure,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntensityChoice {
    Fixed(f64),
    Optimize(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub intensity: IntensityChoice,
    /// Adds Pr(X|T) and N columns for this `(T, target failure)`.
    pub xbasis: Option<(u64, f64)>,
}

impl SweepOptions {
    pub fn optimized() -> Self {
        Self {
            intensity: IntensityChoice::Optimize(default_mu_grid()),
            xbasis: None,
        }
    }

    pub fn fixed(mu: f64) -> Self {
        Self {
            intensity: IntensityChoice::Fixed(mu),
            xbasis: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: RateBreakdown,
    pub xbasis: Option<XBasisPlan>,
}

/// Evaluates every distance (in parallel); rows come back in input order.
pub fn sweep(
    params: &ChannelParams,
    d_values: &[f64],
    options: &SweepOptions,
) -> Result<Vec<SweepRow>, RateError> {
    if d_values.iter().any(|d| d.is_nan() || *d < 0.0) || d_values.windows(2).any(|w| w[0] > w[1])
    {
        return Err(RateError::UnsortedDistances);
    }
    d_values
        .par_iter()
        .map(|&d| {
            let rate = match &options.intensity {
                IntensityChoice::Fixed(mu) => secrecy_rate(params, d, *mu)?,
                IntensityChoice::Optimize(grid) => optimize_intensity(params, d, grid)?.1,
            };
            let xbasis = match options.xbasis {
                Some((t, target)) => Some(x_basis_plan(t, rate.q_avg / 2.0, target)?),
                None => None,
            };
            Ok(SweepRow { rate, xbasis })
        })
        .collect()
}

/// Distances `d_min, d_min + step, ...` strictly below `d_max`.
pub fn distance_grid(d_min: f64, d_max: f64, d_step: f64) -> Result<Vec<f64>, RateError> {
    if !(d_min >= 0.0 && d_max > d_min && d_step > 0.0 && d_max.is_finite()) {
        return Err(RateError::Domain {
            name: "distance range",
            value: d_step,
            domain: "0 <= d_min < d_max, step > 0",
        });
    }
    let count = ((d_max - d_min) / d_step - 1e-9).ceil() as usize;
    Ok((0..count).map(|i| d_min + i as f64 * d_step).collect())
}

pub const SWEEP_CSV_HEADER: [&str; 12] = [
    "d_km", "eta", "mu", "Q", "E_Z", "Delta1", "eX11", "R", "PLOB", "PrXT", "N", "clamped",
];

/// Writes sweep rows with the fixed column set; optional columns stay empty.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for row in rows {
        let r = &row.rate;
        let (pr, n) = match &row.xbasis {
            Some(x) => (
                x.pr_exact.to_string(),
                x.n_frames.frames().map(|n| n.to_string()).unwrap_or_default(),
            ),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.d.to_string(),
            r.eta.to_string(),
            r.mu_used.to_string(),
            r.q_avg.to_string(),
            r.e_z.to_string(),
            r.delta_1.to_string(),
            r.e_x11.to_string(),
            r.r.to_string(),
            r.plob.to_string(),
            pr,
            n,
            u8::from(r.clamped || r.dead).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gainset(q_mumu: f64, q_mu0: f64, q_00: f64) -> GainSet {
        GainSet {
            q_mumu,
            q_mu0,
            q_0mu: q_mu0,
            q_00,
            q_avg: (q_mumu + 2.0 * q_mu0 + q_00) / 4.0,
        }
    }

    #[test]
    fn qber_examples() {
        let g = gainset(0.5, 0.3, 0.0);
        assert_eq!(qber_z(&g, 0.125).unwrap().value, 0.0);

        let g = gainset(0.5, 0.3, 0.18);
        assert!((g.q_avg - 0.32).abs() < 1e-15);
        // 0.01125 / 0.0128 lies inside [0,1]; the clamp to 1 needs a smaller q
        let ez = qber_z(&g, 0.125).unwrap();
        assert!((ez.value - 0.878_906_25).abs() < 1e-12);
        assert!(!ez.clamped);
        let ez = qber_z(&g, 0.05).unwrap();
        assert_eq!(ez.value, 1.0);
        assert!(ez.clamped);

        assert!(matches!(
            qber_z(&gainset(0.0, 0.0, 0.0), 0.125),
            Err(RateError::DivisionByZero("Q"))
        ));
    }

    #[test]
    fn qber_tiny_at_defaults() {
        let p = ChannelParams::default();
        let eta = model::transmittance(&p, 100.0).unwrap();
        let g = model::gains(&p, eta).unwrap();
        assert!(qber_z(&g, BASIS_MATCHING_RATE).unwrap().value < 1e-3);
    }

    #[test]
    fn single_photon_fraction_limits() {
        let mut p = ChannelParams {
            p_d: 0.0,
            ..Default::default()
        };
        let eta = 0.01;
        let g = model::gains(&p, eta).unwrap();
        let y = model::yields(&p, eta).unwrap();
        let d1 = single_photon_fraction(&p, &g, &y, 0.125).unwrap().value;
        let mu = p.mu;
        let expected = (mu * (-mu).exp()).powi(2) * eta * eta / 8.0 / (0.125 * g.q_avg * g.q_avg);
        assert!((d1 - expected).abs() < 1e-12 * expected);

        p.mu = 0.0;
        let g = model::gains(&p, eta).unwrap();
        assert!(matches!(
            single_photon_fraction(&p, &g, &y, 0.125),
            Err(RateError::DivisionByZero(_))
        ));
    }

    #[test]
    fn phase_error_examples() {
        let p = ChannelParams {
            p_d: 0.0,
            delta: 0.031,
            ..Default::default()
        };
        let y = model::yields(&p, 0.004).unwrap();
        assert!((phase_error_rate(&y).unwrap().value - 0.031).abs() < 1e-12);

        let p = ChannelParams {
            p_d: 1e-4,
            delta: 0.3,
            e_0: 0.3,
            ..Default::default()
        };
        let y = model::yields(&p, 0.004).unwrap();
        assert!((phase_error_rate(&y).unwrap().value - 0.3).abs() < 1e-12);

        let y = model::yields(&ChannelParams { p_d: 0.0, ..Default::default() }, 0.0).unwrap();
        assert!(phase_error_rate(&y).is_err());
    }

    #[test]
    fn rate_from_forced_parts() {
        assert!((rate_from_parts(0.1, 1.0, 0.0, 0.0, 1.1) - 0.00625).abs() < 1e-15);
        assert_eq!(rate_from_parts(0.1, 1e-6, 0.0, 0.5, 1.1), 0.0);
    }

    #[test]
    fn dead_channel_reports_zero() {
        let p = ChannelParams {
            p_d: 0.0,
            ..Default::default()
        };
        let row = secrecy_rate(&p, 1e5, 0.5).unwrap();
        assert!(row.dead);
        assert_eq!(row.r, 0.0);
        assert!(secrecy_rate(&p, 10.0, 0.0).is_err());
        assert!(secrecy_rate(&p, -1.0, 0.5).is_err());
    }

    #[test]
    fn optimizer_basics() {
        let p = ChannelParams::default();
        let (mu, row) = optimize_intensity(&p, 50.0, &[0.1]).unwrap();
        assert_eq!(mu, 0.1);
        assert_eq!(row, secrecy_rate(&p, 50.0, 0.1).unwrap());
        assert_eq!(optimize_intensity(&p, 50.0, &[]), Err(RateError::EmptyGrid));

        // all-zero rates beyond the cutoff tie; the smallest intensity wins
        let (mu, row) = optimize_intensity(&p, 2000.0, &[0.7, 0.3, 0.5]).unwrap();
        assert_eq!(row.r, 0.0);
        assert_eq!(mu, 0.3);
    }

    #[test]
    fn x_basis_examples() {
        assert_eq!(x_basis_success(1, 0.7).unwrap(), 0.0);
        assert_eq!(x_basis_success(2, 1.0).unwrap(), 1.0);
        assert!((x_basis_success(3, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(x_basis_success(0, 0.5).is_err());
        assert!(x_basis_success(3, 1.5).is_err());

        assert_eq!(x_basis_success_approx(1, 0.3).unwrap(), 0.0);
        assert_eq!(x_basis_success_approx(5, 0.0).unwrap(), 0.0);
        assert!(x_basis_success_approx(1_000_000, 0.5).unwrap() > 1.0 - 1e-12);
        let exact = x_basis_success(1000, 0.005).unwrap();
        let approx = x_basis_success_approx(1000, 0.005).unwrap();
        assert!((exact - approx).abs() < 0.01);
    }

    #[test]
    fn small_probability_keeps_relative_accuracy() {
        // leading term C(T,2) p^2 dominates
        let v = x_basis_success(2, 1e-12).unwrap();
        assert!((v - 1e-24).abs() < 1e-36);
        let v = x_basis_success(10, 1e-9).unwrap();
        assert!((v / (45.0 * 1e-18) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn frames_examples() {
        assert_eq!(frames_for_success(0.9, 1e-10).unwrap(), FrameCount::Frames(10));
        assert_eq!(frames_for_success(1.0, 1e-10).unwrap(), FrameCount::Frames(1));
        assert_eq!(frames_for_success(0.0, 1e-10).unwrap(), FrameCount::Unreachable);
        assert_eq!(frames_required(1, 0.5, 1e-10).unwrap(), FrameCount::Unreachable);
        assert!(frames_for_success(0.5, 0.0).is_err());
        assert!(frames_for_success(0.5, 1.0).is_err());
    }

    #[test]
    fn sweep_matches_standalone_calls() {
        let p = ChannelParams::default();
        assert!(sweep(&p, &[], &SweepOptions::fixed(0.5)).unwrap().is_empty());
        let ds = [0.0, 50.0, 100.0, 150.0];
        let rows = sweep(&p, &ds, &SweepOptions::fixed(0.5)).unwrap();
        assert_eq!(rows[2].rate, secrecy_rate(&p, 100.0, 0.5).unwrap());
        assert!(rows.windows(2).all(|w| w[1].rate.q_avg < w[0].rate.q_avg));
        assert!(sweep(&p, &[10.0, 5.0], &SweepOptions::fixed(0.5)).is_err());
    }

    #[test]
    fn distance_grid_is_half_open() {
        let g = distance_grid(0.0, 450.0, 5.0).unwrap();
        assert_eq!(g.len(), 90);
        assert_eq!(*g.last().unwrap(), 445.0);
        assert_eq!(distance_grid(10.0, 15.0, 5.0).unwrap(), vec![10.0]);
        assert_eq!(distance_grid(0.0, 1.0, 0.3).unwrap().len(), 4);
        assert!(distance_grid(10.0, 5.0, 1.0).is_err());
        assert!(distance_grid(5.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let p = ChannelParams::default();
        let opts = SweepOptions {
            intensity: IntensityChoice::Fixed(0.5),
            xbasis: Some((1000, 1e-10)),
        };
        let rows = sweep(&p, &[100.0], &opts).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "d_km,eta,mu,Q,E_Z,Delta1,eX11,R,PLOB,PrXT,N,clamped");
        assert_eq!(lines.next().unwrap().split(',').count(), 12);

        let rows = sweep(&p, &[100.0], &SweepOptions::fixed(0.5)).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,,0"));
    }
}
