//! One frame end to end: classical encoding, the quantum layer sized for
//! the ciphertext, sifting, estimation and Bob's decoding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::estimate::{analytic_single_photon, valid_rates, z_symbol_statistics};
use super::sifting::{prepare_bases, Sifting, ValidEvent};
use super::{
    check_isolation_threshold, default_x_pairs, estimate_parameters, simulate_clicks,
    EstimationReport, RoundTally, SimConfig, SimError,
};
use crate::coding::{
    self, bits, check_rate_conditions, decode_frame, encode_frame, publish_pad, FrameCodingConfig,
    RateVerdict, SstsPool, Symbol, ToeplitzHash,
};
use crate::model::{self, entropy, ChannelParams};
use crate::rate::{self, FrameCount, DEFAULT_TARGET_FAILURE};

/// Pre-shared SSTS bits at link start.
pub const DEFAULT_POOL_BITS: usize = 1 << 16;
/// Target probability that some repetition block is fully erased.
pub const BLOCK_ERASURE_TARGET: f64 = 1e-4;
const MAX_EXTENSIONS: usize = 12;

/// Everything published or decided for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame: u64,
    pub coding: FrameCodingConfig,
    pub verdict: RateVerdict,
    /// Survival and QBER used to size the code and check the rates.
    pub prior_survival: f64,
    pub prior_qber: f64,
    pub n_rounds: u64,
    pub ciphertext: String,
    pub hash_seed: String,
    pub received: usize,
    /// SHA-256 of the serialized sifting record (valid events, assignment,
    /// matched pairs, bits).
    pub sifting_digest: String,
    pub report: EstimationReport,
    pub recovered: Option<Vec<bool>>,
    pub decode_error: Option<String>,
}

impl FrameOutcome {
    pub fn aborted(&self) -> bool {
        self.report.aborted
    }
}

/// State carried between frames of one Alice-Bob link.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: SimConfig,
    alice_pool: SstsPool,
    bob_pool: SstsPool,
    classical: ChaCha8Rng,
    frame_index: u64,
    prior: Option<(f64, f64)>,
}

impl Link {
    pub fn new(params: ChannelParams, d_km: f64, seed: u64) -> Result<Self, SimError> {
        Self::with_pool(params, d_km, seed, DEFAULT_POOL_BITS)
    }

    pub fn with_pool(
        params: ChannelParams,
        d_km: f64,
        seed: u64,
        pool_bits: usize,
    ) -> Result<Self, SimError> {
        let cfg = SimConfig::new(params, d_km, seed)?;
        let mut classical = ChaCha8Rng::seed_from_u64(seed);
        classical.set_stream(u64::MAX);
        let shared = bits::random_bits(&mut classical, pool_bits);
        Ok(Self {
            cfg,
            alice_pool: SstsPool::new(shared.clone(), 0),
            bob_pool: SstsPool::new(shared, 0),
            classical,
            frame_index: 0,
            prior: None,
        })
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.cfg.workers = workers;
        self
    }

    pub fn params(&self) -> &ChannelParams {
        &self.cfg.params
    }

    pub fn eta(&self) -> f64 {
        self.cfg.eta
    }

    pub fn pool_sizes(&self) -> (usize, usize) {
        (self.alice_pool.len(), self.bob_pool.len())
    }

    /// Sends one plaintext frame; `recovered` is Bob's output.
    pub fn run_frame(&mut self, plaintext: &[bool]) -> Result<FrameOutcome, SimError> {
        if plaintext.is_empty() {
            return Err(SimError::EmptyPlaintext);
        }
        let frame = self.frame_index;
        self.frame_index += 1;
        let params = self.cfg.params.clone();
        let eta = self.cfg.eta;
        let m = plaintext.len();

        let (survival, qber) = self
            .prior
            .unwrap_or_else(|| z_symbol_statistics(&params, eta));
        let l = FrameCodingConfig::default_for(m)?.l;
        let coding = FrameCodingConfig::repetition(m, l, repetition_for(l, survival))?;
        let code = coding.code();
        let encoded = encode_frame(&coding, &code, plaintext, &mut self.alice_pool, &mut self.classical)?;
        let s_bob = self.bob_pool.take(m)?;

        let (delta_1, e_x11) = analytic_single_photon(&params, eta).unwrap_or((0.0, 0.5));
        let i_sym = survival * (1.0 - entropy(qber.min(0.5)));
        let r_sym = (survival * (delta_1 * (1.0 - entropy(e_x11)) - params.f_ec * entropy(qber.min(0.5))))
            .max(0.0);
        let verdict = check_rate_conditions(&coding, i_sym, r_sym)?;

        let mut outcome = FrameOutcome {
            frame,
            coding: coding.clone(),
            verdict,
            prior_survival: survival,
            prior_qber: qber,
            n_rounds: 0,
            ciphertext: bits::to_string(&encoded.c),
            hash_seed: bits::to_string(&encoded.g),
            received: 0,
            sifting_digest: String::new(),
            report: EstimationReport::aborted(&RoundTally::default(), 0, "rate conditions not met"),
            recovered: None,
            decode_error: None,
        };
        if !verdict.pass {
            return Ok(outcome);
        }

        let cfg = SimConfig {
            stream: frame,
            ..self.cfg.clone()
        };
        let (sifting, tally, isolation) = match self.quantum_layer(&cfg, &encoded.c)? {
            Some(x) => x,
            None => {
                outcome.report = EstimationReport::aborted(
                    &RoundTally::default(),
                    0,
                    "not enough valid events for the ciphertext",
                );
                return Ok(outcome);
            }
        };
        outcome.n_rounds = tally.rounds;
        outcome.sifting_digest = digest(&sifting);
        if !isolation.pass {
            outcome.report = EstimationReport::aborted(
                &tally,
                isolation.count,
                format!(
                    "{} isolated events, threshold {}",
                    isolation.count, params.lambda_threshold
                ),
            );
            return Ok(outcome);
        }
        outcome.report = match estimate_parameters(&params, eta, &tally, &sifting, isolation.count) {
            Ok(r) => r,
            Err(SimError::NoMatchedPairs) => {
                EstimationReport::aborted(&tally, isolation.count, "no basis survived matching")
            }
            Err(e) => return Err(e),
        };
        if outcome.report.aborted {
            return Ok(outcome);
        }

        let mut received: Vec<Symbol> = vec![None; coding.n];
        for (pair, &bit) in sifting.matched.iter().zip(&sifting.bits.bob) {
            if let Some(pos) = pair.symbol {
                received[pos] = Some(bit);
            }
        }
        let positions: Vec<bool> = received.iter().map(Option::is_some).collect();
        outcome.received = positions.iter().filter(|&&p| p).count();
        let pad = publish_pad(&encoded.l_mask, &positions);
        match decode_frame(&coding, &code, &received, &pad, &encoded.g, &s_bob) {
            Ok(dec) => {
                let hash = ToeplitzHash::from_published(&encoded.g, m)?;
                coding::distill_ssts(&encoded.y, l - m, &hash, &mut self.alice_pool)?;
                coding::distill_ssts(&dec.y, l - m, &hash, &mut self.bob_pool)?;
                outcome.recovered = Some(dec.p);
            }
            Err(e) => outcome.decode_error = Some(e.to_string()),
        }
        self.prior = Some((outcome.report.z_survival, outcome.report.ez_emp));
        Ok(outcome)
    }

    /// Runs rounds until the ciphertext fits, extending the run as needed.
    fn quantum_layer(
        &self,
        cfg: &SimConfig,
        ciphertext: &[bool],
    ) -> Result<Option<(Sifting, RoundTally, super::IsolationVerdict)>, SimError> {
        let params = &cfg.params;
        let unit = round_unit(params, cfg.eta)?;
        let (v0, _) = valid_rates(params, cfg.eta);
        if v0 <= 0.0 {
            return Ok(None);
        }
        let wanted = (1.1 * ciphertext.len() as f64 / v0).ceil() as u64;
        let mut next = wanted.div_ceil(unit).max(1) * unit;
        let mut total = 0;
        let mut tally = RoundTally::default();
        let mut valid: Vec<ValidEvent> = Vec::new();
        for _ in 0..MAX_EXTENSIONS {
            let run = simulate_clicks(cfg, total, next)?;
            total += next;
            tally.merge(&run.tally);
            valid.extend(
                run.clicked
                    .iter()
                    .filter_map(|(r, d)| ValidEvent::from_detection(*r, d)),
            );
            let n_x = default_x_pairs(valid.len());
            match prepare_bases(&valid, ciphertext, n_x, params.t) {
                Ok(assignment) => {
                    let indices: Vec<u64> = valid.iter().map(ValidEvent::index).collect();
                    let isolation =
                        check_isolation_threshold(&indices, params.t, params.lambda_threshold);
                    let sifting = Sifting::new(valid, assignment, params.phase_slices)?;
                    return Ok(Some((sifting, tally, isolation)));
                }
                Err(SimError::InsufficientEvents { .. } | SimError::InsufficientXPairs { .. }) => {
                    next = (total / 4).div_ceil(unit).max(1) * unit;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }
}

/// Rounds per block: `N T` with `N` from the X-basis frame count.
fn round_unit(params: &ChannelParams, eta: f64) -> Result<u64, SimError> {
    let q = model::gains(params, eta)?.q_avg;
    let n = match rate::frames_required(params.t, q / 2.0, DEFAULT_TARGET_FAILURE) {
        Ok(FrameCount::Frames(n)) => n,
        _ => 1,
    };
    Ok(n.max(1) * params.t)
}

/// Smallest repetition factor (at least 5) with `l (1 - s)^r` below target.
pub fn repetition_for(l: usize, survival: f64) -> usize {
    let erase = (1.0 - survival).clamp(0.0, 1.0);
    if erase <= 0.0 {
        return 5;
    }
    if erase >= 1.0 {
        return 5;
    }
    let r = ((BLOCK_ERASURE_TARGET / l as f64).ln() / erase.ln()).ceil() as usize;
    r.clamp(5, 1000)
}

fn digest(sifting: &Sifting) -> String {
    let json = serde_json::to_vec(sifting).expect("sifting record serializes");
    Sha256::digest(json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repetition_sizing() {
        assert_eq!(repetition_for(160, 1.0), 5);
        assert_eq!(repetition_for(160, 0.9), 7);
        assert_eq!(repetition_for(160, 1.0 / 3.0), 36);
    }

    #[test]
    fn noiseless_frame_round_trip() {
        let params = ChannelParams {
            p_d: 0.0,
            delta: 0.0,
            ..Default::default()
        };
        let mut link = Link::new(params, 50.0, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = bits::random_bits(&mut rng, 64);
        let out = link.run_frame(&p).unwrap();
        assert!(!out.aborted(), "{:?}", out.report.abort_reason);
        assert_eq!(out.report.ez_emp, 0.0);
        assert_eq!(out.recovered.as_deref(), Some(&p[..]));
        assert!(link.run_frame(&[]).is_err());
    }
}
