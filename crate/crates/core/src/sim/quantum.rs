//! Pulse preparation and Charlie's two-detector measurement.

use std::f64::consts::TAU;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SimConfig, SimError};
use crate::model::ChannelParams;

/// Rounds per parallel work unit. Output does not depend on it.
const CHUNK: u64 = 1 << 15;
/// Six u64 draws per round, two 32-bit words each.
const WORDS_PER_ROUND: u128 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Vacuum,
    Decoy,
    Signal,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Vacuum, Intensity::Decoy, Intensity::Signal];

    pub fn mean_photons(self, params: &ChannelParams) -> f64 {
        match self {
            Intensity::Vacuum => 0.0,
            Intensity::Decoy => params.nu,
            Intensity::Signal => params.mu,
        }
    }

    pub fn is_vacuum(self) -> bool {
        self == Intensity::Vacuum
    }

    fn slot(self) -> usize {
        self as usize
    }

    fn draw(u: u64, emit_decoy: bool) -> Self {
        if emit_decoy {
            Self::ALL[(unit(u) * 3.0) as usize]
        } else if u >> 63 == 1 {
            Intensity::Signal
        } else {
            Intensity::Vacuum
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRound {
    pub index: u64,
    pub alice: Intensity,
    pub alice_phase: f64,
    pub bob: Intensity,
    pub bob_phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub index: u64,
    pub d0: bool,
    pub d1: bool,
}

impl DetectionEvent {
    pub fn is_valid(&self) -> bool {
        self.d0 != self.d1
    }

    pub fn any_click(&self) -> bool {
        self.d0 || self.d1
    }
}

/// Uniform in [0, 1) from the top 53 bits.
fn unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Mean photon numbers at the constructive and destructive ports.
pub fn port_means(eta: f64, a: f64, b: f64, dphi: f64) -> (f64, f64) {
    let (x, y) = (a.sqrt(), b.sqrt());
    let cross = 2.0 * x * y * dphi.cos();
    let base = x * x + y * y;
    (
        (eta / 2.0 * (base + cross)).max(0.0),
        (eta / 2.0 * (base - cross)).max(0.0),
    )
}

/// `1 - (1 - p_d) e^(-nbar)`.
pub fn click_probability(p_d: f64, nbar: f64) -> f64 {
    -((-p_d).ln_1p() - nbar).exp_m1()
}

fn rng_at(cfg: &SimConfig, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);
    rng.set_word_pos(round as u128 * WORDS_PER_ROUND);
    rng
}

fn next_round(rng: &mut ChaCha8Rng, cfg: &SimConfig, index: u64) -> (PulseRound, DetectionEvent) {
    let params = &cfg.params;
    let draws: [u64; 6] = std::array::from_fn(|_| rng.next_u64());
    let round = PulseRound {
        index,
        alice: Intensity::draw(draws[0], params.emit_decoy),
        bob: Intensity::draw(draws[1], params.emit_decoy),
        alice_phase: unit(draws[2]) * TAU,
        bob_phase: unit(draws[3]) * TAU,
    };
    let (n0, n1) = port_means(
        cfg.eta,
        round.alice.mean_photons(params),
        round.bob.mean_photons(params),
        round.alice_phase - round.bob_phase,
    );
    let det = DetectionEvent {
        index,
        d0: unit(draws[4]) < click_probability(params.p_d, n0),
        d1: unit(draws[5]) < click_probability(params.p_d, n1),
    };
    (round, det)
}

/// Click statistics per (Alice, Bob) intensity class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTally {
    pub rounds: u64,
    pub any_click: u64,
    pub valid: u64,
    /// `[alice][bob]` counts of rounds, at-least-one clicks and valid events.
    pub by_class: [[[u64; 3]; 3]; 3],
}

impl RoundTally {
    fn record(&mut self, round: &PulseRound, det: &DetectionEvent) {
        let cell = &mut self.by_class[round.alice.slot()][round.bob.slot()];
        self.rounds += 1;
        cell[0] += 1;
        if det.any_click() {
            self.any_click += 1;
            cell[1] += 1;
        }
        if det.is_valid() {
            self.valid += 1;
            cell[2] += 1;
        }
    }

    pub fn merge(&mut self, other: &RoundTally) {
        self.rounds += other.rounds;
        self.any_click += other.any_click;
        self.valid += other.valid;
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..3 {
                    self.by_class[a][b][k] += other.by_class[a][b][k];
                }
            }
        }
    }

    /// (rounds, at-least-one clicks, valid events) for one intensity class.
    pub fn class(&self, alice: Intensity, bob: Intensity) -> (u64, u64, u64) {
        let c = self.by_class[alice.slot()][bob.slot()];
        (c[0], c[1], c[2])
    }
}

/// Rounds where at least one detector clicked, plus the full tally.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClickRun {
    pub clicked: Vec<(PulseRound, DetectionEvent)>,
    pub tally: RoundTally,
}

fn run_parallel<T: Send>(
    cfg: &SimConfig,
    start: u64,
    n_rounds: u64,
    chunk: impl Fn(u64, u64) -> T + Sync + Send,
) -> Result<Vec<T>, SimError> {
    let chunks: Vec<(u64, u64)> = (0..n_rounds.div_ceil(CHUNK))
        .map(|k| {
            let lo = start + k * CHUNK;
            (lo, CHUNK.min(start + n_rounds - lo))
        })
        .collect();
    let job = || chunks.par_iter().map(|&(lo, n)| chunk(lo, n)).collect();
    match cfg.workers {
        Some(w) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(job)),
        None => Ok(job()),
    }
}

/// Every round and its detection outcome, deterministic in `cfg.seed`.
pub fn simulate_quantum_layer(
    cfg: &SimConfig,
    n_rounds: u64,
) -> Result<(Vec<PulseRound>, Vec<DetectionEvent>), SimError> {
    if n_rounds == 0 {
        return Err(SimError::NoRounds);
    }
    let parts = run_parallel(cfg, 0, n_rounds, |lo, n| {
        let mut rng = rng_at(cfg, lo);
        (lo..lo + n)
            .map(|i| next_round(&mut rng, cfg, i))
            .unzip::<_, _, Vec<_>, Vec<_>>()
    })?;
    let mut rounds = Vec::with_capacity(n_rounds as usize);
    let mut dets = Vec::with_capacity(n_rounds as usize);
    for (r, d) in parts {
        rounds.extend(r);
        dets.extend(d);
    }
    Ok((rounds, dets))
}

/// Like [`simulate_quantum_layer`] over `start..start + n_rounds`, keeping
/// only rounds with a click.
pub fn simulate_clicks(cfg: &SimConfig, start: u64, n_rounds: u64) -> Result<ClickRun, SimError> {
    if n_rounds == 0 {
        return Err(SimError::NoRounds);
    }
    let parts = run_parallel(cfg, start, n_rounds, |lo, n| {
        let mut rng = rng_at(cfg, lo);
        let mut part = ClickRun::default();
        for i in lo..lo + n {
            let (round, det) = next_round(&mut rng, cfg, i);
            part.tally.record(&round, &det);
            if det.any_click() {
                part.clicked.push((round, det));
            }
        }
        part
    })?;
    let mut out = ClickRun::default();
    for part in parts {
        out.clicked.extend(part.clicked);
        out.tally.merge(&part.tally);
    }
    Ok(out)
}

/// Indices of rounds where exactly one detector clicked, in order.
pub fn filter_valid_events(detections: &[DetectionEvent]) -> Vec<u64> {
    detections
        .iter()
        .filter(|d| d.is_valid())
        .map(|d| d.index)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationVerdict {
    pub count: u64,
    pub pass: bool,
}

/// Counts valid events with no other valid event closer than `t` rounds.
pub fn check_isolation_threshold(valid: &[u64], t: u64, lambda: u64) -> IsolationVerdict {
    let count = (0..valid.len())
        .filter(|&k| {
            let left = k.checked_sub(1).map(|p| valid[k] - valid[p]);
            let right = valid.get(k + 1).map(|n| n - valid[k]);
            left.into_iter().chain(right).all(|gap| gap >= t)
        })
        .count() as u64;
    IsolationVerdict {
        count,
        pass: count < lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(params: ChannelParams, eta: f64) -> SimConfig {
        SimConfig {
            params,
            eta,
            seed: 9,
            stream: 0,
            workers: None,
        }
    }

    #[test]
    fn dark_vacuum_never_clicks() {
        assert_eq!(click_probability(0.0, 0.0), 0.0);
        let params = ChannelParams {
            p_d: 0.0,
            ..Default::default()
        };
        let (rounds, dets) = simulate_quantum_layer(&cfg(params, 0.3), 20_000).unwrap();
        for (r, d) in rounds.iter().zip(&dets) {
            if r.alice.is_vacuum() && r.bob.is_vacuum() {
                assert!(!d.any_click());
            }
        }
    }

    #[test]
    fn destructive_port_is_dark_in_phase() {
        let (n0, n1) = port_means(0.3, 0.5, 0.5, 0.0);
        assert_eq!(n1, 0.0);
        assert!((n0 - 0.3).abs() < 1e-15);
        assert_eq!(click_probability(0.0, n1), 0.0);
        assert!((click_probability(0.0, n0) - (1.0 - (-0.3f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn chunking_does_not_change_rounds() {
        let c = cfg(ChannelParams::default(), 0.05);
        let (all, dets) = simulate_quantum_layer(&c, CHUNK + 2000).unwrap();
        let tail = simulate_clicks(&c, 1000, CHUNK).unwrap();
        let expect: Vec<_> = all[1000..1000 + CHUNK as usize]
            .iter()
            .zip(&dets[1000..1000 + CHUNK as usize])
            .filter(|(_, d)| d.any_click())
            .map(|(r, d)| (*r, *d))
            .collect();
        assert_eq!(tail.clicked, expect);
        let one = SimConfig {
            workers: Some(1),
            ..c.clone()
        };
        assert_eq!(simulate_quantum_layer(&one, CHUNK + 2000).unwrap().0, all);
    }

    #[test]
    fn valid_filter_example() {
        let dets: Vec<_> = [(true, false), (true, true), (false, true), (false, false)]
            .iter()
            .enumerate()
            .map(|(i, &(d0, d1))| DetectionEvent {
                index: i as u64,
                d0,
                d1,
            })
            .collect();
        assert_eq!(filter_valid_events(&dets), vec![0, 2]);
        assert!(filter_valid_events(&dets[3..]).is_empty());
    }

    #[test]
    fn isolation_examples() {
        assert_eq!(
            check_isolation_threshold(&[], 10, 1),
            IsolationVerdict { count: 0, pass: true }
        );
        assert_eq!(
            check_isolation_threshold(&[0, 5, 100], 10, 2),
            IsolationVerdict { count: 1, pass: true }
        );
        assert_eq!(
            check_isolation_threshold(&[0, 50, 100], 10, 2),
            IsolationVerdict { count: 3, pass: false }
        );
    }

    #[test]
    fn decoy_gate() {
        let mut params = ChannelParams::default();
        let (rounds, _) = simulate_quantum_layer(&cfg(params.clone(), 0.1), 5000).unwrap();
        assert!(rounds.iter().all(|r| r.alice != Intensity::Decoy && r.bob != Intensity::Decoy));
        params.emit_decoy = true;
        let (rounds, _) = simulate_quantum_layer(&cfg(params, 0.1), 5000).unwrap();
        assert!(rounds.iter().any(|r| r.alice == Intensity::Decoy));
        assert!(rounds.iter().all(|r| (0.0..TAU).contains(&r.alice_phase)));
    }
}
