//! Pluggable error-correcting codes with erasure-aware decoding.

use std::fmt;

use thiserror::Error;

/// Received symbol: `None` marks an erasure.
pub type Symbol = Option<bool>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeFailure {
    #[error("received length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("block {block} has too few unerased symbols")]
    Erased { block: usize },
    #[error("block {block} has a tied vote")]
    Tie { block: usize },
}

pub trait ErrorCorrectingCode: fmt::Debug + Send + Sync {
    fn id(&self) -> String;

    fn encoded_len(&self, message_len: usize) -> usize;

    fn encode(&self, message: &[bool]) -> Vec<bool>;

    fn decode(&self, received: &[Symbol], message_len: usize) -> Result<Vec<bool>, DecodeFailure>;

    /// Whether every pattern with this many errors and erasures over one
    /// codeword is guaranteed to decode to the sent message.
    fn guarantees(&self, message_len: usize, errors: usize, erasures: usize) -> bool;
}

/// Each message bit repeated `r` times, decoded by majority over the
/// unerased copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Repetition {
    r: usize,
    quorum: usize,
}

impl Repetition {
    pub fn new(r: usize) -> Self {
        Self::with_quorum(r, 1)
    }

    /// Requires at least `quorum` unerased copies per block.
    pub fn with_quorum(r: usize, quorum: usize) -> Self {
        assert!(r >= 1, "repetition factor must be positive");
        assert!((1..=r).contains(&quorum), "quorum must lie in 1..=r");
        Self { r, quorum }
    }

    pub fn factor(&self) -> usize {
        self.r
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }
}

impl ErrorCorrectingCode for Repetition {
    fn id(&self) -> String {
        if self.quorum == 1 {
            format!("repetition-{}", self.r)
        } else {
            format!("repetition-{}-q{}", self.r, self.quorum)
        }
    }

    fn encoded_len(&self, message_len: usize) -> usize {
        message_len * self.r
    }

    fn encode(&self, message: &[bool]) -> Vec<bool> {
        message
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, self.r))
            .collect()
    }

    fn decode(&self, received: &[Symbol], message_len: usize) -> Result<Vec<bool>, DecodeFailure> {
        if received.len() != message_len * self.r {
            return Err(DecodeFailure::Length {
                expected: message_len * self.r,
                got: received.len(),
            });
        }
        received
            .chunks(self.r)
            .enumerate()
            .map(|(block, chunk)| {
                let ones = chunk.iter().filter(|s| **s == Some(true)).count();
                let zeros = chunk.iter().filter(|s| **s == Some(false)).count();
                if ones + zeros < self.quorum {
                    Err(DecodeFailure::Erased { block })
                } else if ones == zeros {
                    Err(DecodeFailure::Tie { block })
                } else {
                    Ok(ones > zeros)
                }
            })
            .collect()
    }

    fn guarantees(&self, _message_len: usize, errors: usize, erasures: usize) -> bool {
        // worst case puts everything in one block
        2 * errors + erasures < self.r && erasures + self.quorum <= self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::bits::parse;

    fn received(bits: &[bool]) -> Vec<Symbol> {
        bits.iter().copied().map(Some).collect()
    }

    #[test]
    fn repetition_three() {
        let code = Repetition::new(3);
        let z = code.encode(&parse("101").unwrap());
        assert_eq!(z, parse("111000111").unwrap());
        let mut noisy = z.clone();
        noisy[0] = !noisy[0];
        noisy[4] = !noisy[4];
        noisy[8] = !noisy[8];
        assert_eq!(code.decode(&received(&noisy), 3).unwrap(), parse("101").unwrap());
    }

    #[test]
    fn erasure_handling() {
        let code = Repetition::new(3);
        let rx = vec![None, None, Some(true), None, None, None];
        assert_eq!(code.decode(&rx, 2), Err(DecodeFailure::Erased { block: 1 }));
        let rx = vec![None, Some(false), Some(true)];
        assert_eq!(code.decode(&rx, 1), Err(DecodeFailure::Tie { block: 0 }));
        assert!(matches!(code.decode(&rx, 2), Err(DecodeFailure::Length { .. })));

        let strict = Repetition::with_quorum(5, 3);
        let rx = vec![Some(true), Some(true), None, None, None];
        assert_eq!(strict.decode(&rx, 1), Err(DecodeFailure::Erased { block: 0 }));
        assert_eq!(strict.id(), "repetition-5-q3");
    }
}
