//! Syndrome-based reconciliation, leakage accounting and privacy amplification.

pub mod bch;

use std::sync::{Arc, OnceLock};

use md5::{Digest as _, Md5};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

pub use bch::{select_code, BchCode, BchParams, Syndrome, SUPPORTED};

/// Final key length in bits.
pub const KEY_BITS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageBudget {
    pub eta1: f64,
    pub eta2: f64,
    /// L_q: raw key length the budget is computed for.
    pub raw_len: usize,
    /// L_s: publicly disclosed reconciliation bits.
    pub syndrome_len: usize,
    /// L_req = ⌈128 / ((1 − η₁)(1 − η₂))⌉.
    pub required_len: usize,
}

pub fn leakage(raw_len: usize, syndrome_len: usize, eta1: f64) -> Result<LeakageBudget> {
    if syndrome_len >= raw_len {
        return Err(Error::param(format!(
            "disclosed {syndrome_len} bits for a raw key of {raw_len}"
        )));
    }
    if !(0.0..1.0).contains(&eta1) {
        return Err(Error::param(format!("eta1 = {eta1} outside [0, 1)")));
    }
    let eta2 = syndrome_len as f64 / raw_len as f64;
    let required = (KEY_BITS as f64 / ((1.0 - eta1) * (1.0 - eta2))).ceil() as usize;
    Ok(LeakageBudget {
        eta1,
        eta2,
        raw_len,
        syndrome_len,
        required_len: required,
    })
}

/// Bob's public reconciliation message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyndromeMessage {
    pub params: BchParams,
    pub pad_len: usize,
    pub syndromes: Vec<Syndrome>,
}

impl SyndromeMessage {
    /// Header (big-endian u16 n, u16 k, u32 blocks, u16 pad), then all
    /// syndrome bits packed MSB first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.params.n as u16).to_be_bytes());
        out.extend_from_slice(&(self.params.k as u16).to_be_bytes());
        out.extend_from_slice(&(self.syndromes.len() as u32).to_be_bytes());
        out.extend_from_slice(&(self.pad_len as u16).to_be_bytes());
        let bits: Vec<u8> = self.syndromes.iter().flat_map(|s| s.0.iter().copied()).collect();
        out.extend(pack_bits(&bits));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 {
            return Err(Error::Parse {
                line: 0,
                msg: "syndrome file shorter than its header".into(),
            });
        }
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]) as usize;
        let (n, k) = (u16_at(0), u16_at(2));
        let blocks = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let pad_len = u16_at(8);
        let params = SUPPORTED
            .iter()
            .find(|p| p.n == n && p.k == k)
            .copied()
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unsupported code ({n},{k})"),
            })?;
        let r = params.redundancy();
        let bits = unpack_bits(&bytes[10..]);
        if bits.len() < blocks * r {
            return Err(Error::Parse {
                line: 0,
                msg: "syndrome file truncated".into(),
            });
        }
        Ok(Self {
            params,
            pad_len,
            syndromes: bits.chunks(r).take(blocks).map(|c| Syndrome(c.to_vec())).collect(),
        })
    }

    /// Bits disclosed: every emitted syndrome bit plus the announced pad length.
    pub fn disclosed_bits(&self) -> usize {
        self.syndromes.len() * self.params.redundancy() + self.pad_len
    }
}

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i))))
        .collect()
}

pub fn unpack_bits(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|&b| (0..8).map(move |i| (b >> (7 - i)) & 1)).collect()
}

fn blocks(bits: &[u8], n: usize) -> (Vec<Vec<u8>>, usize) {
    let count = bits.len().div_ceil(n);
    let pad = count * n - bits.len();
    let mut padded = bits.to_vec();
    padded.resize(count * n, 0);
    (padded.chunks(n).map(|c| c.to_vec()).collect(), pad)
}

/// Bob's side: split, zero-pad, and compute one syndrome per block.
pub fn syndrome_message(q_b: &[u8], params: BchParams) -> Result<SyndromeMessage> {
    let code = BchCode::new(params)?;
    let (bl, pad_len) = blocks(q_b, params.n);
    let syndromes = bl.iter().map(|b| code.syndrome(b)).collect::<Result<_>>()?;
    Ok(SyndromeMessage {
        params,
        pad_len,
        syndromes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconciliation {
    /// Alice's corrected bits, discarded blocks and padding removed.
    pub alice: Vec<u8>,
    /// Bob's bits with the same blocks removed.
    pub bob: Vec<u8>,
    /// Blocks both parties dropped after a decoding failure (public).
    pub discarded: Vec<usize>,
    pub message: SyndromeMessage,
}

/// Alice corrects block by block; failed blocks are dropped by both.
pub fn reconcile(q_a: &[u8], q_b: &[u8], params: BchParams) -> Result<Reconciliation> {
    if q_a.len() != q_b.len() {
        return Err(Error::Dimension(format!(
            "raw keys of {} and {} bits",
            q_a.len(),
            q_b.len()
        )));
    }
    let code = BchCode::new(params)?;
    let message = syndrome_message(q_b, params)?;
    let (blocks_a, _) = blocks(q_a, params.n);
    let (blocks_b, _) = blocks(q_b, params.n);
    let last = blocks_a.len().saturating_sub(1);
    let data_len = |i: usize| if i == last { params.n - message.pad_len } else { params.n };

    let mut out = Reconciliation {
        alice: Vec::new(),
        bob: Vec::new(),
        discarded: Vec::new(),
        message: message.clone(),
    };
    for (i, (a, s)) in blocks_a.iter().zip(&message.syndromes).enumerate() {
        match code.correct(a, s)? {
            Some(fixed) => {
                out.alice.extend_from_slice(&fixed[..data_len(i)]);
                out.bob.extend_from_slice(&blocks_b[i][..data_len(i)]);
            }
            None => out.discarded.push(i),
        }
    }
    Ok(out)
}

/// 128-bit digest used for privacy amplification.
pub trait KeyDigest: Named + Send + Sync {
    fn digest(&self, data: &[u8]) -> [u8; 16];
}

pub struct Md5Digest;

impl Named for Md5Digest {
    fn name(&self) -> &str {
        "md5"
    }
}

impl KeyDigest for Md5Digest {
    fn digest(&self, data: &[u8]) -> [u8; 16] {
        Md5::digest(data).into()
    }
}

/// First 128 bits of SHA-256.
pub struct Sha256Truncated;

impl Named for Sha256Truncated {
    fn name(&self) -> &str {
        "sha256_128"
    }
}

impl KeyDigest for Sha256Truncated {
    fn digest(&self, data: &[u8]) -> [u8; 16] {
        let full = Sha256::digest(data);
        let mut out = [0u8; 16];
        out.copy_from_slice(&full[..16]);
        out
    }
}

pub fn digest_registry() -> &'static Registry<dyn KeyDigest> {
    static REG: OnceLock<Registry<dyn KeyDigest>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn KeyDigest> = Registry::new("digest");
        r.register(Arc::new(Md5Digest));
        r.register(Arc::new(Sha256Truncated));
        r
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FinalKey(pub [u8; 16]);

impl FinalKey {
    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 64 bits of SHA-256 over the key, in hex. Safe to publish.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.0)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Hashes a one-byte header (count of zero bits padding the last byte)
/// followed by the bits packed MSB first.
pub fn privacy_amplify(bits: &[u8], required_len: usize, digest: &dyn KeyDigest) -> Result<FinalKey> {
    if bits.len() < required_len {
        return Err(Error::KeyTooShort {
            have: bits.len(),
            need: required_len,
        });
    }
    let pad = (8 - bits.len() % 8) % 8;
    let mut data = vec![pad as u8];
    data.extend(pack_bits(bits));
    Ok(FinalKey(digest.digest(&data)))
}
