//! Classical layer of a frame: SSTS encryption, inverse-hash preprocessing,
//! error correction, masking, and the matching decode path.
//!
//! Alice's chain is `p -> x = p ^ s -> y (hash preimage) -> z (ECC) -> c = z ^ L`.
//! Bob learns the mask only at the positions he received, treats every other
//! position as an erasure, decodes `y`, hashes back to `x` and strips `s`.

pub mod bits;
pub mod ecc;
pub mod frame_file;
pub mod gf2;
pub mod hash;
pub mod mask;
pub mod pool;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ecc::{DecodeFailure, ErrorCorrectingCode, Repetition, Symbol};
pub use hash::{secure_decode, secure_encode, ToeplitzHash};
pub use mask::{mask, publish_pad, unmask};
pub use pool::{distill_ssts, SstsPool};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodingError {
    #[error("{what}: expected length {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid coding geometry: {0}")]
    Geometry(String),
    #[error("solved hash block is singular")]
    SingularHash,
    #[error("SSTS pool underflow: requested {requested}, available {available}")]
    PoolUnderflow { requested: usize, available: usize },
    #[error("decode failed: {0}")]
    Decode(#[from] DecodeFailure),
    #[error("cannot distill {amount} bits, at most {max} available")]
    Distill { amount: usize, max: usize },
    #[error("{0}")]
    Domain(String),
    #[error("frame file: {0}")]
    FrameFile(String),
}

/// Lengths of one frame: `m` plaintext bits, `l` after secure coding,
/// `n` after error correction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCodingConfig {
    pub m: usize,
    pub l: usize,
    pub n: usize,
    pub ecc_id: String,
    /// Repetition factor of the reference code.
    pub r: usize,
}

impl FrameCodingConfig {
    pub fn repetition(m: usize, l: usize, r: usize) -> Result<Self, CodingError> {
        if m == 0 || m > l || r == 0 {
            return Err(CodingError::Geometry(format!(
                "need 0 < m <= l and r > 0, got m={m}, l={l}, r={r}"
            )));
        }
        Ok(Self {
            m,
            l,
            n: l * r,
            ecc_id: Repetition::new(r).id(),
            r,
        })
    }

    /// Repetition-5 with `max(16, m/4)` bits of local randomness.
    pub fn default_for(m: usize) -> Result<Self, CodingError> {
        Self::repetition(m, m + (m / 4).max(16), 5)
    }

    pub fn code(&self) -> Repetition {
        Repetition::new(self.r)
    }

    pub fn ecc_rate(&self) -> f64 {
        self.l as f64 / self.n as f64
    }

    pub fn secure_rate(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

/// Every intermediate sequence of one encoded frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedFrame {
    pub config: FrameCodingConfig,
    pub p: Vec<bool>,
    pub s: Vec<bool>,
    pub x: Vec<bool>,
    /// Published hash seed, `l - 1` bits.
    pub g: Vec<bool>,
    pub l_pad: Vec<bool>,
    pub y: Vec<bool>,
    pub z: Vec<bool>,
    pub l_mask: Vec<bool>,
    pub c: Vec<bool>,
}

pub fn encode_frame<R: Rng + ?Sized>(
    config: &FrameCodingConfig,
    code: &dyn ErrorCorrectingCode,
    p: &[bool],
    pool: &mut SstsPool,
    rng: &mut R,
) -> Result<CodedFrame, CodingError> {
    if p.len() != config.m {
        return Err(CodingError::Length {
            what: "plaintext",
            expected: config.m,
            got: p.len(),
        });
    }
    if code.encoded_len(config.l) != config.n {
        return Err(CodingError::Geometry(format!(
            "code {} maps {} bits to {}, config says {}",
            code.id(),
            config.l,
            code.encoded_len(config.l),
            config.n
        )));
    }
    let s = pool.take(config.m)?;
    let (hash, g) = ToeplitzHash::draw(rng, config.m, config.l)?;
    let l_pad = bits::random_bits(rng, config.l - config.m);
    let y = secure_encode(p, &s, &hash, &l_pad)?;
    let z = code.encode(&y);
    let l_mask = bits::random_bits(rng, config.n);
    let c = mask(&z, &l_mask)?;
    Ok(CodedFrame {
        config: config.clone(),
        p: p.to_vec(),
        x: bits::xor(p, &s),
        s,
        g,
        l_pad,
        y,
        z,
        l_mask,
        c,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFrame {
    pub y: Vec<bool>,
    pub p: Vec<bool>,
}

/// Bob's side: unmask at the published positions, decode, hash, decrypt.
pub fn decode_frame(
    config: &FrameCodingConfig,
    code: &dyn ErrorCorrectingCode,
    received: &[Symbol],
    published_pad: &[Symbol],
    g: &[bool],
    s: &[bool],
) -> Result<DecodedFrame, CodingError> {
    let z = unmask(received, published_pad)?;
    let y = code.decode(&z, config.l)?;
    let hash = ToeplitzHash::from_published(g, config.m)?;
    let p = secure_decode(&y, &hash, s)?;
    Ok(DecodedFrame { y, p })
}

/// Outcome of the two rate conditions of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateVerdict {
    pub pass: bool,
    /// `i_ab - l/n`
    pub reliability_margin: f64,
    /// `r_prev - m/n`
    pub secrecy_margin: f64,
}

/// Checks `l/n <= I(A:B)` and `m/n <= R` (both in bits per channel use).
pub fn check_rate_conditions(
    config: &FrameCodingConfig,
    i_ab: f64,
    r_prev: f64,
) -> Result<RateVerdict, CodingError> {
    if !(i_ab >= 0.0 && r_prev >= 0.0) {
        return Err(CodingError::Domain(format!(
            "rates must be nonnegative, got I(A:B)={i_ab}, R={r_prev}"
        )));
    }
    let reliability_margin = i_ab - config.ecc_rate();
    let secrecy_margin = r_prev - config.secure_rate();
    Ok(RateVerdict {
        pass: reliability_margin >= 0.0 && secrecy_margin >= 0.0,
        reliability_margin,
        secrecy_margin,
    })
}
