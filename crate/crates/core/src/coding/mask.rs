use super::ecc::Symbol;
use super::{bits, CodingError};

pub fn mask(z: &[bool], l_mask: &[bool]) -> Result<Vec<bool>, CodingError> {
    if z.len() != l_mask.len() {
        return Err(CodingError::Length {
            what: "mask",
            expected: z.len(),
            got: l_mask.len(),
        });
    }
    Ok(bits::xor(z, l_mask))
}

/// Pad bits revealed only where `received[i]` is set.
pub fn publish_pad(l_mask: &[bool], received: &[bool]) -> Vec<Symbol> {
    l_mask
        .iter()
        .zip(received)
        .map(|(&m, &r)| r.then_some(m))
        .collect()
}

/// Removes the pad where both the symbol and its pad bit are known; every
/// other position stays an erasure.
pub fn unmask(c: &[Symbol], published: &[Symbol]) -> Result<Vec<Symbol>, CodingError> {
    if c.len() != published.len() {
        return Err(CodingError::Length {
            what: "published pad",
            expected: c.len(),
            got: published.len(),
        });
    }
    Ok(c.iter()
        .zip(published)
        .map(|(c, m)| match (c, m) {
            (Some(c), Some(m)) => Some(c ^ m),
            _ => None,
        })
        .collect())
}
