//! Basis preparation, matching and bit mapping over valid events.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::quantum::{DetectionEvent, Intensity, PulseRound};
use super::SimError;

/// A round where exactly one detector clicked, with its preparation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidEvent {
    pub round: PulseRound,
    /// `true` if D0 clicked, `false` if D1 did.
    pub d0: bool,
}

impl ValidEvent {
    pub fn from_detection(round: PulseRound, det: &DetectionEvent) -> Option<Self> {
        det.is_valid().then_some(Self { round, d0: det.d0 })
    }

    pub fn index(&self) -> u64 {
        self.round.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisKind {
    X,
    /// Encodes 0: (vacuum, pulse).
    Z0,
    /// Encodes 1: (pulse, vacuum).
    Z1,
    O,
}

impl BasisKind {
    pub fn is_z(self) -> bool {
        matches!(self, BasisKind::Z0 | BasisKind::Z1)
    }
}

/// Two valid events `i < j` (round indices) combined into one basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisPair {
    pub i: u64,
    pub j: u64,
    pub kind: BasisKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisAssignment {
    pub pairs: Vec<BasisPair>,
}

impl BasisAssignment {
    /// Z pairs in ciphertext order.
    pub fn z_pairs(&self) -> impl Iterator<Item = &BasisPair> {
        self.pairs.iter().filter(|p| p.kind.is_z())
    }

    pub fn count(&self, kind: BasisKind) -> usize {
        self.pairs.iter().filter(|p| p.kind == kind).count()
    }
}

/// Greedy preparation that stops at the first ciphertext bit it cannot place.
///
/// Returns the assignment and how many ciphertext bits were embedded.
pub fn prepare_bases_prefix(
    valid: &[ValidEvent],
    ciphertext: &[bool],
    n_x: usize,
    t: u64,
) -> (BasisAssignment, usize) {
    let mut used = vec![false; valid.len()];
    let mut pairs = Vec::new();

    let mut k = 0;
    while pairs.len() < n_x && k + 1 < valid.len() {
        let (a, b) = (&valid[k], &valid[k + 1]);
        if !a.round.alice.is_vacuum()
            && !b.round.alice.is_vacuum()
            && b.index() - a.index() < t
        {
            pairs.push(BasisPair {
                i: a.index(),
                j: b.index(),
                kind: BasisKind::X,
            });
            used[k] = true;
            used[k + 1] = true;
            k += 2;
        } else {
            k += 1;
        }
    }

    let mut zeros = BTreeSet::new();
    let mut pulses = BTreeSet::new();
    for (k, ev) in valid.iter().enumerate().filter(|(k, _)| !used[*k]) {
        if ev.round.alice.is_vacuum() {
            zeros.insert(k);
        } else {
            pulses.insert(k);
        }
    }

    let mut embedded = 0;
    for &bit in ciphertext {
        let (first_set, second_set) = if bit {
            (&mut pulses, &mut zeros)
        } else {
            (&mut zeros, &mut pulses)
        };
        let Some(&first) = first_set.first() else { break };
        let Some(&second) = second_set.range(first + 1..).next() else { break };
        first_set.remove(&first);
        second_set.remove(&second);
        pairs.push(BasisPair {
            i: valid[first].index(),
            j: valid[second].index(),
            kind: if bit { BasisKind::Z1 } else { BasisKind::Z0 },
        });
        embedded += 1;
    }

    let zeros: Vec<usize> = zeros.into_iter().collect();
    for w in zeros.chunks_exact(2) {
        pairs.push(BasisPair {
            i: valid[w[0]].index(),
            j: valid[w[1]].index(),
            kind: BasisKind::O,
        });
    }
    (BasisAssignment { pairs }, embedded)
}

/// Alice's basis preparation: `n_x` X pairs, one Z pair per ciphertext bit,
/// then O pairs from leftover vacuum events.
pub fn prepare_bases(
    valid: &[ValidEvent],
    ciphertext: &[bool],
    n_x: usize,
    t: u64,
) -> Result<BasisAssignment, SimError> {
    let (assignment, embedded) = prepare_bases_prefix(valid, ciphertext, n_x, t);
    let found = assignment.count(BasisKind::X);
    if found < n_x {
        return Err(SimError::InsufficientXPairs { found, needed: n_x });
    }
    if embedded < ciphertext.len() {
        return Err(SimError::InsufficientEvents { position: embedded });
    }
    Ok(assignment)
}

/// `phi_j - phi_i = theta + pi * bit` with `theta` in `[0, pi)`.
pub fn relative_phase(phi_i: f64, phi_j: f64) -> (f64, bool) {
    let d = (phi_j - phi_i).rem_euclid(TAU);
    if d >= PI {
        (d - PI, true)
    } else {
        (d, false)
    }
}

/// Index of the published slice of width `2 pi / m` that contains `theta`.
pub fn phase_slice(theta: f64, m: u32) -> u32 {
    ((theta / (TAU / m as f64)) as u32).min(m / 2 - 1)
}

/// A basis kept after matching, with both parties' preparation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pair: BasisPair,
    /// Position of the carried ciphertext bit, for Z pairs.
    pub symbol: Option<usize>,
    pub alice: [Intensity; 2],
    pub bob: [Intensity; 2],
    pub alice_phases: [f64; 2],
    pub bob_phases: [f64; 2],
    /// D0 clicked (rather than D1) at `i` and `j`.
    pub d0: [bool; 2],
}

fn lookup(valid: &[ValidEvent], index: u64) -> Result<&ValidEvent, SimError> {
    valid
        .binary_search_by_key(&index, ValidEvent::index)
        .map(|k| &valid[k])
        .map_err(|_| SimError::UnknownRound(index))
}

/// Keeps Z pairs where Bob's own intensities form a Z pattern and X pairs
/// where intensities and published phase slices agree.
pub fn match_bases(
    assignment: &BasisAssignment,
    valid: &[ValidEvent],
    phase_slices: u32,
) -> Result<Vec<MatchedPair>, SimError> {
    let mut out = Vec::new();
    let mut symbol = 0;
    for pair in &assignment.pairs {
        let (a, b) = (lookup(valid, pair.i)?, lookup(valid, pair.j)?);
        let bob = [a.round.bob, b.round.bob];
        let keep = match pair.kind {
            BasisKind::Z0 | BasisKind::Z1 => {
                symbol += 1;
                bob[0].is_vacuum() != bob[1].is_vacuum()
            }
            BasisKind::X => {
                let alice = [a.round.alice, b.round.alice];
                let (ta, _) = relative_phase(a.round.alice_phase, b.round.alice_phase);
                let (tb, _) = relative_phase(a.round.bob_phase, b.round.bob_phase);
                !bob[0].is_vacuum()
                    && !bob[1].is_vacuum()
                    && alice == bob
                    && phase_slice(ta, phase_slices) == phase_slice(tb, phase_slices)
            }
            BasisKind::O => false,
        };
        if keep {
            out.push(MatchedPair {
                pair: *pair,
                symbol: pair.kind.is_z().then(|| symbol - 1),
                alice: [a.round.alice, b.round.alice],
                bob,
                alice_phases: [a.round.alice_phase, b.round.alice_phase],
                bob_phases: [a.round.bob_phase, b.round.bob_phase],
                d0: [a.d0, b.d0],
            });
        }
    }
    Ok(out)
}

/// One bit per matched pair for each party.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedBits {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
}

pub fn map_bits(matched: &[MatchedPair]) -> Result<SiftedBits, SimError> {
    let mut bits = SiftedBits::default();
    for m in matched {
        let (a, b) = match m.pair.kind {
            BasisKind::Z0 | BasisKind::Z1 => (m.pair.kind == BasisKind::Z1, m.bob[0].is_vacuum()),
            BasisKind::X => {
                if m.alice.iter().chain(&m.bob).any(|i| i.is_vacuum()) {
                    return Err(SimError::MalformedPair {
                        i: m.pair.i,
                        j: m.pair.j,
                    });
                }
                let (_, ba) = relative_phase(m.alice_phases[0], m.alice_phases[1]);
                let (_, bb) = relative_phase(m.bob_phases[0], m.bob_phases[1]);
                (ba, bb ^ (m.d0[0] != m.d0[1]))
            }
            BasisKind::O => {
                return Err(SimError::MalformedPair {
                    i: m.pair.i,
                    j: m.pair.j,
                })
            }
        };
        bits.alice.push(a);
        bits.bob.push(b);
    }
    Ok(bits)
}

/// Preparation, matching and bit mapping over one batch of valid events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sifting {
    pub valid: Vec<ValidEvent>,
    pub assignment: BasisAssignment,
    pub matched: Vec<MatchedPair>,
    pub bits: SiftedBits,
}

impl Sifting {
    pub fn new(
        valid: Vec<ValidEvent>,
        assignment: BasisAssignment,
        phase_slices: u32,
    ) -> Result<Self, SimError> {
        let matched = match_bases(&assignment, &valid, phase_slices)?;
        let bits = map_bits(&matched)?;
        Ok(Self {
            valid,
            assignment,
            matched,
            bits,
        })
    }
}
