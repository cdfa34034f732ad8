//! Empirical gain and QBER, analytic single-photon terms.

use serde::{Deserialize, Serialize};

use super::quantum::{Intensity, RoundTally};
use super::sifting::{BasisKind, Sifting, ValidEvent};
use super::SimError;
use crate::model::{self, ChannelParams};
use crate::rate::{self, BASIS_MATCHING_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub n_rounds: u64,
    pub n_valid: u64,
    /// Valid (exactly one click) events per round.
    pub q_emp: f64,
    /// Rounds with at least one click per round.
    pub q_any_emp: f64,
    pub n_matched: u64,
    pub n_z_matched: u64,
    pub n_x_matched: u64,
    pub ez_emp: f64,
    /// Post-flip X disagreement, if any X pair matched.
    pub ex_emp: Option<f64>,
    /// Complementary fraction over consecutive disjoint valid-event pairs.
    pub q_match_emp: f64,
    /// Fraction of Alice's Z pairs that survive matching.
    pub z_survival: f64,
    pub delta_1: f64,
    pub e_x11: f64,
    pub r_est: f64,
    pub isolation_count: u64,
    pub aborted: bool,
    pub abort_reason: Option<String>,
}

impl EstimationReport {
    /// Report for a run that stopped before sifting.
    pub fn aborted(tally: &RoundTally, isolation_count: u64, reason: impl Into<String>) -> Self {
        Self {
            n_rounds: tally.rounds,
            n_valid: tally.valid,
            q_emp: ratio(tally.valid, tally.rounds),
            q_any_emp: ratio(tally.any_click, tally.rounds),
            n_matched: 0,
            n_z_matched: 0,
            n_x_matched: 0,
            ez_emp: 0.0,
            ex_emp: None,
            q_match_emp: 0.0,
            z_survival: 0.0,
            delta_1: 0.0,
            e_x11: 0.0,
            r_est: 0.0,
            isolation_count,
            aborted: true,
            abort_reason: Some(reason.into()),
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fraction of consecutive disjoint valid-event pairs whose joint pattern is
/// `[(0, x), (x, 0)]` or `[(x, 0), (0, x)]`.
pub fn complementary_fraction(valid: &[ValidEvent]) -> f64 {
    let z_type = |e: &ValidEvent| e.round.alice.is_vacuum() != e.round.bob.is_vacuum();
    let pairs = valid.chunks_exact(2);
    let total = pairs.len();
    let hits = pairs
        .filter(|w| {
            z_type(&w[0])
                && z_type(&w[1])
                && w[0].round.alice.is_vacuum() != w[1].round.alice.is_vacuum()
        })
        .count();
    ratio(hits as u64, total as u64)
}

/// Analytic Δ1 and e^X_11 at the run's parameters.
pub fn analytic_single_photon(params: &ChannelParams, eta: f64) -> Result<(f64, f64), SimError> {
    let gains = model::gains(params, eta)?;
    let yields = model::yields(params, eta)?;
    let d1 = rate::single_photon_fraction(params, &gains, &yields, BASIS_MATCHING_RATE)?;
    let ex = rate::phase_error_rate(&yields)?;
    Ok((d1.value, ex.value))
}

pub fn estimate_parameters(
    params: &ChannelParams,
    eta: f64,
    tally: &RoundTally,
    sifting: &Sifting,
    isolation_count: u64,
) -> Result<EstimationReport, SimError> {
    let Sifting {
        valid,
        assignment,
        matched,
        bits,
    } = sifting;
    if tally.valid == 0 {
        return Ok(EstimationReport::aborted(tally, isolation_count, "no valid events"));
    }
    if matched.is_empty() {
        return Err(SimError::NoMatchedPairs);
    }
    let (mut z, mut z_err, mut x, mut x_err) = (0u64, 0u64, 0u64, 0u64);
    for (m, (a, b)) in matched.iter().zip(bits.alice.iter().zip(&bits.bob)) {
        let wrong = (a != b) as u64;
        if m.pair.kind == BasisKind::X {
            x += 1;
            x_err += wrong;
        } else {
            z += 1;
            z_err += wrong;
        }
    }
    let z_assigned = assignment.z_pairs().count() as u64;
    let (delta_1, e_x11) = analytic_single_photon(params, eta).unwrap_or((0.0, 0.5));
    let q_emp = ratio(tally.valid, tally.rounds);
    let ez_emp = ratio(z_err, z);
    Ok(EstimationReport {
        n_rounds: tally.rounds,
        n_valid: tally.valid,
        q_emp,
        q_any_emp: ratio(tally.any_click, tally.rounds),
        n_matched: matched.len() as u64,
        n_z_matched: z,
        n_x_matched: x,
        ez_emp,
        ex_emp: (x > 0).then(|| ratio(x_err, x)),
        q_match_emp: complementary_fraction(valid),
        z_survival: ratio(z, z_assigned),
        delta_1,
        e_x11,
        r_est: rate::rate_from_parts(q_emp, delta_1, e_x11, ez_emp.min(0.5), params.f_ec),
        isolation_count,
        aborted: false,
        abort_reason: None,
    })
}

fn prob(params: &ChannelParams, i: Intensity) -> f64 {
    match (params.emit_decoy, i) {
        (true, _) => 1.0 / 3.0,
        (false, Intensity::Decoy) => 0.0,
        (false, _) => 0.5,
    }
}

/// Phase-averaged valid-event probability of one intensity class.
pub fn valid_probability(params: &ChannelParams, eta: f64, alice: Intensity, bob: Intensity) -> f64 {
    prob(params, alice)
        * prob(params, bob)
        * model::exactly_one_click(
            params.p_d,
            eta,
            alice.mean_photons(params),
            bob.mean_photons(params),
        )
}

/// Valid events per round where Alice sent vacuum, and where she did not.
pub fn valid_rates(params: &ChannelParams, eta: f64) -> (f64, f64) {
    let mut rates = (0.0, 0.0);
    for a in Intensity::ALL {
        for b in Intensity::ALL {
            let p = valid_probability(params, eta, a, b);
            if a.is_vacuum() {
                rates.0 += p;
            } else {
                rates.1 += p;
            }
        }
    }
    rates
}

/// Predicted (survival, error) of one Z symbol: the probability that Bob's
/// own pattern is Z-type, and the fraction of survivors that are wrong.
pub fn z_symbol_statistics(params: &ChannelParams, eta: f64) -> (f64, f64) {
    // P(Bob vacuum | valid, Alice vacuum or not)
    let bob_vacuum = |alice_vac: bool| {
        let (mut vac, mut all) = (0.0, 0.0);
        for a in Intensity::ALL.into_iter().filter(|a| a.is_vacuum() == alice_vac) {
            for b in Intensity::ALL {
                let p = valid_probability(params, eta, a, b);
                all += p;
                if b.is_vacuum() {
                    vac += p;
                }
            }
        }
        if all > 0.0 {
            vac / all
        } else {
            0.0
        }
    };
    let (v0, v1) = (bob_vacuum(true), bob_vacuum(false));
    // Alice (vacuum, pulse): Bob (pulse, vacuum) is right, (vacuum, pulse) wrong.
    let right = (1.0 - v0) * v1;
    let wrong = v0 * (1.0 - v1);
    let survival = right + wrong;
    (survival, if survival > 0.0 { wrong / survival } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_statistics_at_defaults() {
        let params = ChannelParams::default();
        let eta = model::transmittance(&params, 100.0).unwrap();
        let (s, e) = z_symbol_statistics(&params, eta);
        assert!((s - 1.0 / 3.0).abs() < 0.02, "survival {s}");
        assert!(e < 1e-4);
        let (v0, v1) = valid_rates(&params, eta);
        assert!(v1 > 2.5 * v0 && v1 < 3.5 * v0);
    }

    #[test]
    fn dead_channel_reports_abort() {
        let tally = RoundTally {
            rounds: 100,
            ..Default::default()
        };
        let params = ChannelParams::default();
        let r = estimate_parameters(
            &params,
            0.0,
            &tally,
            &Sifting::default(),
            0,
        )
        .unwrap();
        assert!(r.aborted);
        assert_eq!(r.q_emp, 0.0);
    }
}
