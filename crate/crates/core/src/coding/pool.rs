use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::hash::ToeplitzHash;
use super::CodingError;

/// Shared secure transmission sequence: a FIFO of pre-shared secret bits.
///
/// Bits leave the pool exactly once; distillation appends at the back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SstsPool {
    bits: VecDeque<bool>,
    low_water_mark: usize,
    consumed: usize,
}

impl SstsPool {
    pub fn new(bits: Vec<bool>, low_water_mark: usize) -> Self {
        Self {
            bits: bits.into(),
            low_water_mark,
            consumed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_low(&self) -> bool {
        self.bits.len() < self.low_water_mark
    }

    /// Total bits ever taken.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn take(&mut self, amount: usize) -> Result<Vec<bool>, CodingError> {
        if amount > self.bits.len() {
            return Err(CodingError::PoolUnderflow {
                requested: amount,
                available: self.bits.len(),
            });
        }
        self.consumed += amount;
        Ok(self.bits.drain(..amount).collect())
    }

    pub fn extend(&mut self, bits: impl IntoIterator<Item = bool>) {
        self.bits.extend(bits);
    }
}

/// Appends the first `amount` free-position bits of `y` to `pool`.
pub fn distill_ssts(
    y: &[bool],
    amount: usize,
    hash: &ToeplitzHash,
    pool: &mut SstsPool,
) -> Result<(), CodingError> {
    if y.len() != hash.input_len() {
        return Err(CodingError::Length {
            what: "distillation input",
            expected: hash.input_len(),
            got: y.len(),
        });
    }
    let free = hash.free_positions();
    if amount > free.len() {
        return Err(CodingError::Distill {
            amount,
            max: free.len(),
        });
    }
    pool.extend(y[free].iter().copied().take(amount));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_accounting() {
        let mut pool = SstsPool::new(vec![true, false, true, true], 3);
        assert!(!pool.is_low());
        assert_eq!(pool.take(2).unwrap(), vec![true, false]);
        assert!(pool.is_low());
        assert_eq!(pool.consumed(), 2);
        assert!(pool.take(3).is_err());
        pool.extend([false]);
        assert_eq!(pool.take(3).unwrap(), vec![true, true, false]);
        assert!(pool.is_empty());
    }

    #[test]
    fn distill_limits() {
        let hash = ToeplitzHash::from_published(&[true; 7], 4).unwrap();
        let mut pool = SstsPool::new(Vec::new(), 0);
        let y = vec![true, false, true, false, false, false, false, false];
        distill_ssts(&y, 3, &hash, &mut pool).unwrap();
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.take(3).unwrap(), vec![true, false, true]);
        assert!(matches!(
            distill_ssts(&y, 5, &hash, &mut pool),
            Err(CodingError::Distill { amount: 5, max: 4 })
        ));
        assert!(distill_ssts(&y[..7], 1, &hash, &mut pool).is_err());
    }
}
