//! One-way key chains, per-slot keys and slot digests.
//!
//! `H` is SHA-256 truncated to its low-order 128 bits. A chain of length `n`
//! starts from the master key `K_M`; the public commitment is
//! `K_0 = H^n(K_M)` and the key of chain index `i` is `K_i = H^(n-i)(K_M)`,
//! so any disclosed `K_i` authenticates by hashing back `i` times to `K_0`.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{RawFrame, CHUNK_CONTENT_BITS};

/// Default chain length: 2^16 slots of 2 s cover more than 36 hours.
pub const DEFAULT_CHAIN_LENGTH: u64 = 1 << 16;
/// Number of 46-bit chunks needed to carry a 128-bit value.
pub const CHUNKS_PER_VALUE: usize = 3;

const SHA256_BLOCK: usize = 64;
const IPAD: u8 = 0x36;
const OPAD: u8 = 0x5c;
const CONTENT_MASK: u128 = (1 << CHUNK_CONTENT_BITS) - 1;
const LAST_CHUNK_BITS: u32 = 128 - 2 * CHUNK_CONTENT_BITS;
const PAD_BITS: u32 = CHUNK_CONTENT_BITS - LAST_CHUNK_BITS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("chain length must be at least 1")]
    EmptyChain,
    #[error("slot key index must be at least 1")]
    ZeroIndex,
    #[error("key chain exhausted: index {index} exceeds chain length {length}")]
    Exhausted { index: u64, length: u64 },
    #[error("slot digest needs at least one message")]
    NoMessages,
    #[error("invalid 128-bit hex value: {0}")]
    Hex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("missing chunk {0}")]
    Missing(u8),
    #[error("chunk {0} received with conflicting contents")]
    Conflict(u8),
    #[error("chunk id {0} out of range")]
    BadChunkId(u8),
    #[error("chunk {chunk_id} content {content:#x} wider than 46 bits")]
    ContentOverflow { chunk_id: u8, content: u64 },
}

macro_rules! block128 {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; 16]);

        impl $name {
            pub fn from_u128(v: u128) -> Self {
                $name(v.to_be_bytes())
            }

            pub fn to_u128(self) -> u128 {
                u128::from_be_bytes(self.0)
            }

            pub fn to_hex(&self) -> String {
                format!("{:032x}", self.to_u128())
            }

            pub fn from_hex(s: &str) -> Result<Self, ChainError> {
                let s = s.trim();
                if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(ChainError::Hex(s.to_string()));
                }
                u128::from_str_radix(s, 16)
                    .map(Self::from_u128)
                    .map_err(|_| ChainError::Hex(s.to_string()))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = ChainError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_hex(s)
            }
        }
    };
}

block128!(
    /// A 128-bit chain key (master, root or slot key).
    Key128
);
block128!(
    /// A 128-bit slot digest.
    Digest128
);

fn low_order_128(full: &[u8]) -> [u8; 16] {
    full[full.len() - 16..]
        .try_into()
        .expect("sha-256 output is 32 bytes")
}

/// One application of the chain hash.
pub fn hash_step(key: &Key128) -> Key128 {
    Key128(low_order_128(&Sha256::digest(key.0)))
}

/// `H^times(key)`.
pub fn hash_iter(key: &Key128, times: u64) -> Key128 {
    let mut cur = *key;
    for _ in 0..times {
        cur = hash_step(&cur);
    }
    cur
}

/// `K_0 = H^n(K_M)`.
pub fn derive_root_key(master: &Key128, n: u64) -> Result<Key128, ChainError> {
    if n == 0 {
        return Err(ChainError::EmptyChain);
    }
    Ok(hash_iter(master, n))
}

/// A disclosed or derived slot key together with its chain index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotKey {
    pub index: u64,
    pub key: Key128,
}

/// `K_i = H^(n-i)(K_M)` for `1 <= i <= n`.
pub fn derive_slot_key(master: &Key128, n: u64, index: u64) -> Result<SlotKey, ChainError> {
    check_index(n, index)?;
    Ok(SlotKey {
        index,
        key: hash_iter(master, n - index),
    })
}

fn check_index(n: u64, index: u64) -> Result<(), ChainError> {
    if n == 0 {
        return Err(ChainError::EmptyChain);
    }
    if index == 0 {
        return Err(ChainError::ZeroIndex);
    }
    if index > n {
        return Err(ChainError::Exhausted { index, length: n });
    }
    Ok(())
}

/// True iff `H^index(key) == root`.
pub fn verify_slot_key(key: &Key128, index: u64, root: &Key128) -> bool {
    index >= 1 && hash_iter(key, index) == *root
}

/// A fully materialized chain, for senders that need every key in order.
#[derive(Clone)]
pub struct KeyChain {
    master: Key128,
    // hashes[j] = H^j(K_M); hashes[n] = K_0
    hashes: Vec<Key128>,
}

impl KeyChain {
    pub fn generate(master: Key128, n: u64) -> Result<Self, ChainError> {
        if n == 0 {
            return Err(ChainError::EmptyChain);
        }
        let len = usize::try_from(n).expect("chain length fits in memory") + 1;
        let mut hashes = Vec::with_capacity(len);
        hashes.push(master);
        for j in 1..len {
            let next = hash_step(&hashes[j - 1]);
            hashes.push(next);
        }
        Ok(KeyChain { master, hashes })
    }

    pub fn master(&self) -> &Key128 {
        &self.master
    }

    pub fn len(&self) -> u64 {
        (self.hashes.len() - 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> Key128 {
        *self.hashes.last().expect("chain is never empty")
    }

    pub fn slot_key(&self, index: u64) -> Result<SlotKey, ChainError> {
        check_index(self.len(), index)?;
        Ok(SlotKey {
            index,
            key: self.hashes[(self.len() - index) as usize],
        })
    }
}

impl fmt::Debug for KeyChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyChain")
            .field("n", &self.len())
            .field("root", &self.root())
            .finish_non_exhaustive()
    }
}

/// Plain HMAC-SHA256 (RFC 2104 key preprocessing), full 32-byte output.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new(key);
    mac.update(message);
    mac.finalize()
}

/// HMAC-SHA256 with the inner and outer pads absorbed once; cloning the
/// keyed state is how the recovery search amortizes the key schedule.
#[derive(Clone)]
pub struct HmacSha256 {
    inner: Sha256,
    outer: Sha256,
}

impl HmacSha256 {
    pub fn new(key: &[u8]) -> Self {
        let mut block = [0u8; SHA256_BLOCK];
        if key.len() > SHA256_BLOCK {
            block[..32].copy_from_slice(&Sha256::digest(key));
        } else {
            block[..key.len()].copy_from_slice(key);
        }
        let ipad: Vec<u8> = block.iter().map(|b| b ^ IPAD).collect();
        let opad: Vec<u8> = block.iter().map(|b| b ^ OPAD).collect();
        let mut inner = Sha256::new();
        inner.update(&ipad);
        let mut outer = Sha256::new();
        outer.update(&opad);
        HmacSha256 { inner, outer }
    }

    pub fn update(&mut self, data: &[u8]) {
        self.inner.update(data);
    }

    pub fn finalize(self) -> [u8; 32] {
        let inner_hash = self.inner.finalize();
        let mut outer = self.outer;
        outer.update(inner_hash);
        outer.finalize().into()
    }
}

/// Keyed slot digest engine for one slot key.
#[derive(Clone)]
pub struct SlotMac {
    keyed: HmacSha256,
}

impl SlotMac {
    pub fn new(key: &Key128) -> Self {
        SlotMac {
            keyed: HmacSha256::new(&key.0),
        }
    }

    /// Digest over the frames in the given order. Callers guarantee at least
    /// one frame.
    pub fn digest<'a, I>(&self, frames: I) -> Digest128
    where
        I: IntoIterator<Item = &'a RawFrame>,
    {
        let mut mac = self.keyed.clone();
        for frame in frames {
            mac.update(frame.as_bytes());
        }
        Digest128(low_order_128(&mac.finalize()))
    }
}

/// `h_i = HMAC(m_1 || ... || m_N, K_i)` truncated to 128 bits.
pub fn slot_digest(messages: &[RawFrame], key: &Key128) -> Result<Digest128, ChainError> {
    if messages.is_empty() {
        return Err(ChainError::NoMessages);
    }
    Ok(SlotMac::new(key).digest(messages))
}

/// One 46-bit piece of a chunked 128-bit value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Chunk {
    pub chunk_id: u8,
    pub content: u64,
}

/// Splits `v` MSB-first into three 46-bit chunks; the last chunk holds the
/// remaining 36 bits followed by 10 zero pad bits.
pub fn chunk_value(v: u128) -> [Chunk; CHUNKS_PER_VALUE] {
    let c0 = (v >> (128 - CHUNK_CONTENT_BITS)) & CONTENT_MASK;
    let c1 = (v >> LAST_CHUNK_BITS) & CONTENT_MASK;
    let c2 = (v & ((1 << LAST_CHUNK_BITS) - 1)) << PAD_BITS;
    [
        Chunk {
            chunk_id: 0,
            content: c0 as u64,
        },
        Chunk {
            chunk_id: 1,
            content: c1 as u64,
        },
        Chunk {
            chunk_id: 2,
            content: c2 as u64,
        },
    ]
}

/// Inverse of [`chunk_value`]. Identical duplicates are tolerated; differing
/// duplicates are reported as a conflict.
pub fn reassemble_value(chunks: &[Chunk]) -> Result<u128, ChunkError> {
    let mut slots: [Option<u64>; CHUNKS_PER_VALUE] = [None; CHUNKS_PER_VALUE];
    for c in chunks {
        let idx = usize::from(c.chunk_id);
        if idx >= CHUNKS_PER_VALUE {
            return Err(ChunkError::BadChunkId(c.chunk_id));
        }
        if u128::from(c.content) > CONTENT_MASK {
            return Err(ChunkError::ContentOverflow {
                chunk_id: c.chunk_id,
                content: c.content,
            });
        }
        match slots[idx] {
            Some(prev) if prev != c.content => return Err(ChunkError::Conflict(c.chunk_id)),
            _ => slots[idx] = Some(c.content),
        }
    }
    let mut parts = [0u128; CHUNKS_PER_VALUE];
    for (i, slot) in slots.iter().enumerate() {
        parts[i] = u128::from(slot.ok_or(ChunkError::Missing(i as u8))?);
    }
    Ok((parts[0] << (128 - CHUNK_CONTENT_BITS))
        | (parts[1] << LAST_CHUNK_BITS)
        | (parts[2] >> PAD_BITS))
}
