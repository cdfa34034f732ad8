//! Event-level Monte Carlo of the protocol: pulse preparation, detection,
//! sifting, basis preparation and matching, bit mapping and estimation.

pub mod estimate;
pub mod frame;
pub mod quantum;
pub mod sifting;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{bits, CodingError};
use crate::model::{self, ChannelParams, ModelError};
use crate::rate::RateError;

pub use estimate::{estimate_parameters, EstimationReport};
pub use frame::{FrameOutcome, Link};
pub use quantum::{
    check_isolation_threshold, filter_valid_events, simulate_clicks, simulate_quantum_layer,
    DetectionEvent, Intensity, IsolationVerdict, PulseRound, RoundTally,
};
pub use sifting::{
    map_bits, match_bases, prepare_bases, BasisAssignment, BasisKind, BasisPair, MatchedPair,
    SiftedBits, Sifting, ValidEvent,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("at least one round is required")]
    NoRounds,
    #[error("not enough valid events to embed ciphertext bit {position}")]
    InsufficientEvents { position: usize },
    #[error("found {found} X-basis pairs, {needed} required")]
    InsufficientXPairs { found: usize, needed: usize },
    #[error("malformed pair ({i}, {j}): X-basis member without a pulse")]
    MalformedPair { i: u64, j: u64 },
    #[error("round {0} is not a valid event")]
    UnknownRound(u64),
    #[error("no basis survived matching")]
    NoMatchedPairs,
    #[error("plaintext is empty")]
    EmptyPlaintext,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// What identifies one quantum-layer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ChannelParams,
    /// Per-arm transmittance.
    pub eta: f64,
    pub seed: u64,
    /// Independent round stream under the same seed.
    pub stream: u64,
    /// Worker threads; `None` uses the global pool. Never affects output.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl SimConfig {
    pub fn new(params: ChannelParams, d_km: f64, seed: u64) -> Result<Self, SimError> {
        params.validate()?;
        let eta = model::transmittance(&params, d_km)?;
        Ok(Self {
            params,
            eta,
            seed,
            stream: 0,
            workers: None,
        })
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }
}

/// Default number of X pairs: `max(64, 5%)` of the valid events.
pub fn default_x_pairs(n_valid: usize) -> usize {
    64.max(n_valid / 20)
}

/// Aggregate round statistics written instead of raw rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundsSummary {
    pub n_rounds: u64,
    pub eta: f64,
    pub tally: RoundTally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTranscript {
    pub params: ChannelParams,
    pub rounds_summary: RoundsSummary,
    pub valid_indices: Vec<u64>,
    pub assignment: BasisAssignment,
    pub matched: Vec<MatchedPair>,
    pub bits: SiftedBits,
    pub report: EstimationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<(PulseRound, DetectionEvent)>>,
}

/// Runs the quantum layer through estimation with a random ciphertext that fills as many Z pairs as
/// the valid events allow.
pub fn simulate_protocol(
    cfg: &SimConfig,
    n_rounds: u64,
    dump_rounds: bool,
) -> Result<SimTranscript, SimError> {
    let run = simulate_clicks(cfg, 0, n_rounds)?;
    let valid: Vec<ValidEvent> = run
        .clicked
        .iter()
        .filter_map(|(r, d)| ValidEvent::from_detection(*r, d))
        .collect();
    let valid_indices: Vec<u64> = valid.iter().map(ValidEvent::index).collect();
    let params = &cfg.params;
    let isolation = check_isolation_threshold(&valid_indices, params.t, params.lambda_threshold);

    let (sifting, report) = if !isolation.pass {
        let report = EstimationReport::aborted(
            &run.tally,
            isolation.count,
            format!("{} isolated events, threshold {}", isolation.count, params.lambda_threshold),
        );
        (Sifting::default(), report)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(cfg.stream ^ (1 << 63));
        let ciphertext = bits::random_bits(&mut rng, valid.len() / 2);
        let n_x = default_x_pairs(valid.len());
        let (assignment, _) = sifting::prepare_bases_prefix(&valid, &ciphertext, n_x, params.t);
        let sifting = Sifting::new(valid, assignment, params.phase_slices)?;
        let report = match estimate_parameters(params, cfg.eta, &run.tally, &sifting, isolation.count) {
            Ok(r) => r,
            Err(SimError::NoMatchedPairs) => {
                EstimationReport::aborted(&run.tally, isolation.count, "no basis survived matching")
            }
            Err(e) => return Err(e),
        };
        let sifting = if report.aborted {
            Sifting {
                bits: SiftedBits::default(),
                ..sifting
            }
        } else {
            sifting
        };
        (sifting, report)
    };

    Ok(SimTranscript {
        params: params.clone(),
        rounds_summary: RoundsSummary {
            n_rounds,
            eta: cfg.eta,
            tally: run.tally,
        },
        valid_indices,
        assignment: sifting.assignment,
        matched: sifting.matched,
        bits: sifting.bits,
        report,
        rounds: dump_rounds.then_some(run.clicked),
    })
}
