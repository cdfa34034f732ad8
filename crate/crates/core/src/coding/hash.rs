//! Toeplitz universal hashing and its systematic inverse.
//!
//! The hash maps `l` bits to `m` bits through an `m x l` Toeplitz matrix.
//! Its `l + m - 1` diagonals come from the published sequence `G` (`l - 1`
//! bits) followed by `m` bits expanded deterministically from `G`.
//! Inversion fixes the first `l - m` input bits to local randomness and
//! solves the remaining `m x m` block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::bits::{self, xor};
use super::gf2::BitMatrix;
use super::CodingError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzHash {
    m: usize,
    l: usize,
    diagonals: Vec<bool>,
    matrix: BitMatrix,
}

/// The `m` extra diagonal bits derived from the published seed.
pub fn expand_seed(g: &[bool], m: usize) -> Vec<bool> {
    let mut hasher = Sha256::new();
    hasher.update((m as u32).to_be_bytes());
    hasher.update((g.len() as u32).to_be_bytes());
    hasher.update(bits::pack(g));
    let seed: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    bits::random_bits(&mut rng, m)
}

impl ToeplitzHash {
    /// Builds the hash from all `m + l - 1` diagonals; entry (i, j) is
    /// `diagonals[i - j + l - 1]`.
    pub fn from_diagonals(m: usize, l: usize, diagonals: Vec<bool>) -> Result<Self, CodingError> {
        if m == 0 || m > l {
            return Err(CodingError::Geometry(format!("need 0 < m <= l, got m={m}, l={l}")));
        }
        if diagonals.len() != m + l - 1 {
            return Err(CodingError::Length {
                what: "Toeplitz diagonals",
                expected: m + l - 1,
                got: diagonals.len(),
            });
        }
        let mut matrix = BitMatrix::zeros(m, l);
        for i in 0..m {
            for j in 0..l {
                matrix.set(i, j, diagonals[i + l - 1 - j]);
            }
        }
        Ok(Self {
            m,
            l,
            diagonals,
            matrix,
        })
    }

    /// Hash for the published `g` of length `l - 1`.
    ///
    /// If the solved block comes out singular, its diagonals are reset to a
    /// unit upper-triangular pattern so that every `g` yields an invertible
    /// hash. Both parties apply the same rule.
    pub fn from_published(g: &[bool], m: usize) -> Result<Self, CodingError> {
        let l = g.len() + 1;
        let mut diagonals = g.to_vec();
        diagonals.extend(expand_seed(g, m));
        let hash = Self::from_diagonals(m, l, diagonals)?;
        if hash.solved_block().solve(&vec![false; m]).is_some() {
            return Ok(hash);
        }
        let mut diagonals = hash.diagonals;
        diagonals[m - 1] = true;
        diagonals[m..2 * m - 1].fill(false);
        Self::from_diagonals(m, l, diagonals)
    }

    /// Draws a published seed `g` and returns the hash it defines.
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        m: usize,
        l: usize,
    ) -> Result<(Self, Vec<bool>), CodingError> {
        let g = bits::random_bits(rng, l.saturating_sub(1));
        Ok((Self::from_published(&g, m)?, g))
    }

    pub fn input_len(&self) -> usize {
        self.l
    }

    pub fn output_len(&self) -> usize {
        self.m
    }

    pub fn diagonals(&self) -> &[bool] {
        &self.diagonals
    }

    /// Input positions carrying local randomness (and later distilled).
    pub fn free_positions(&self) -> std::ops::Range<usize> {
        0..self.l - self.m
    }

    fn solved_positions(&self) -> Vec<usize> {
        (self.l - self.m..self.l).collect()
    }

    fn solved_block(&self) -> BitMatrix {
        self.matrix.select_columns(&self.solved_positions())
    }

    pub fn apply(&self, y: &[bool]) -> Result<Vec<bool>, CodingError> {
        if y.len() != self.l {
            return Err(CodingError::Length {
                what: "hash input",
                expected: self.l,
                got: y.len(),
            });
        }
        Ok(self.matrix.mul_vec(y))
    }

    /// A preimage of `x` whose free positions equal `free_bits`.
    pub fn invert(&self, x: &[bool], free_bits: &[bool]) -> Result<Vec<bool>, CodingError> {
        if x.len() != self.m {
            return Err(CodingError::Length {
                what: "hash output",
                expected: self.m,
                got: x.len(),
            });
        }
        if free_bits.len() != self.l - self.m {
            return Err(CodingError::Length {
                what: "local randomness",
                expected: self.l - self.m,
                got: free_bits.len(),
            });
        }
        let mut y = free_bits.to_vec();
        y.resize(self.l, false);
        // contribution of the free part, with solved positions still zero
        let partial = self.matrix.mul_vec(&y);
        let rhs = xor(x, &partial);
        let solved = self
            .solved_block()
            .solve(&rhs)
            .ok_or(CodingError::SingularHash)?;
        y[self.l - self.m..].copy_from_slice(&solved);
        Ok(y)
    }
}

/// Encrypts `p` with `s` and maps the result to a hash preimage of length `l`.
pub fn secure_encode(
    p: &[bool],
    s: &[bool],
    hash: &ToeplitzHash,
    l_pad: &[bool],
) -> Result<Vec<bool>, CodingError> {
    if p.len() != hash.output_len() || s.len() != p.len() {
        return Err(CodingError::Length {
            what: "plaintext/SSTS",
            expected: hash.output_len(),
            got: if p.len() != hash.output_len() { p.len() } else { s.len() },
        });
    }
    hash.invert(&xor(p, s), l_pad)
}

pub fn secure_decode(y: &[bool], hash: &ToeplitzHash, s: &[bool]) -> Result<Vec<bool>, CodingError> {
    let x = hash.apply(y)?;
    if s.len() != x.len() {
        return Err(CodingError::Length {
            what: "SSTS",
            expected: x.len(),
            got: s.len(),
        });
    }
    Ok(xor(&x, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::bits::parse;

    #[test]
    fn identity_family_is_passthrough() {
        let l = 6;
        // only the main diagonal (index l-1) set
        let mut diag = vec![false; 2 * l - 1];
        diag[l - 1] = true;
        let hash = ToeplitzHash::from_diagonals(l, l, diag).unwrap();
        let p = parse("101100").unwrap();
        let s = parse("011010").unwrap();
        let y = secure_encode(&p, &s, &hash, &[]).unwrap();
        assert_eq!(y, xor(&p, &s));
        assert_eq!(secure_decode(&y, &hash, &s).unwrap(), p);
    }

    #[test]
    fn toeplitz_layout() {
        // m=2, l=3: diagonals d0..d3, row i col j -> d[i - j + 2]
        let hash = ToeplitzHash::from_diagonals(2, 3, parse("1000").unwrap()).unwrap();
        // only d0 set -> entry (0, 2)
        assert_eq!(hash.apply(&parse("001").unwrap()).unwrap(), parse("10").unwrap());
        assert_eq!(hash.apply(&parse("110").unwrap()).unwrap(), parse("00").unwrap());
    }

    #[test]
    fn expansion_is_deterministic() {
        let g = parse("1101001").unwrap();
        assert_eq!(expand_seed(&g, 40), expand_seed(&g, 40));
        assert_ne!(expand_seed(&g, 40), expand_seed(&parse("1101000").unwrap(), 40));
        assert_eq!(
            ToeplitzHash::from_published(&g, 4).unwrap(),
            ToeplitzHash::from_published(&g, 4).unwrap()
        );
    }

    #[test]
    fn geometry_errors() {
        assert!(ToeplitzHash::from_diagonals(5, 4, vec![false; 8]).is_err());
        assert!(ToeplitzHash::from_diagonals(2, 4, vec![false; 3]).is_err());
        let hash = ToeplitzHash::from_published(&[true; 7], 4).unwrap();
        assert!(hash.apply(&[true; 7]).is_err());
        assert!(hash.invert(&[true; 4], &[true; 3]).is_err());
    }

    #[test]
    fn every_published_seed_is_invertible() {
        for (m, l) in [(1, 1), (2, 2), (3, 4), (4, 4)] {
            for v in 0u32..1 << (l - 1) {
                let g: Vec<bool> = (0..l - 1).map(|b| v >> b & 1 == 1).collect();
                let hash = ToeplitzHash::from_published(&g, m).unwrap();
                let x = vec![true; m];
                let y = hash.invert(&x, &vec![false; l - m]).unwrap();
                assert_eq!(hash.apply(&y).unwrap(), x);
            }
        }
    }
}
