//! Node identities, public-salt hash chains and private salts.
//!
//! A node publishes the *last* element of a hash chain `s_0, s_1 = H(s_0), ...`
//! as its first public salt and walks backwards on every update. Anyone who
//! saw an older salt can check a newer one by hashing forward, while future
//! salts stay unpredictable until revealed.

use std::collections::HashSet;
use std::fmt;

use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Length in bytes of identities, salts and digests.
pub const DIGEST_LEN: usize = 32;

/// Default number of elements in a freshly provisioned hash chain.
pub const DEFAULT_CHAIN_LENGTH: usize = 64;

/// Default cap on the number of hashes a verifier will compute for one request.
pub const DEFAULT_MAX_VERIFY_STEPS: u32 = 16;

/// SHA-256 over raw bytes.
pub fn digest(data: &[u8]) -> [u8; DIGEST_LEN] {
    Sha256::digest(data).into()
}

/// SHA-256 over the concatenation of `parts`, without an intermediate buffer.
pub fn digest_concat(parts: &[&[u8]]) -> [u8; DIGEST_LEN] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("hash chain length must be at least 2, got {0}")]
    ChainTooShort(usize),
    #[error("hash chain exhausted; a new chain must be provisioned")]
    ChainExhausted,
    #[error("refusing to verify {requested} salt updates (limit {limit})")]
    VerificationRefused { requested: u32, limit: u32 },
}

/// Opaque 32-byte node identifier (stands in for the hash of a public key).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId([u8; DIGEST_LEN]);

impl NodeId {
    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Draws 32 random bytes. Uniqueness within a simulation is the job of
    /// [`IdentityGenerator`].
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    /// Short hex prefix for logs.
    pub fn short(&self) -> String {
        self.0[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.short())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Returns a fresh random identity. Deterministic in the rng state.
pub fn new_identity<R: RngCore + ?Sized>(rng: &mut R) -> NodeId {
    NodeId::random(rng)
}

/// Hands out identities that are unique for the lifetime of the generator,
/// redrawing on the (astronomically unlikely) collision.
#[derive(Debug, Default)]
pub struct IdentityGenerator {
    issued: HashSet<NodeId>,
}

impl IdentityGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> NodeId {
        loop {
            let id = new_identity(rng);
            if self.issued.insert(id) {
                return id;
            }
        }
    }

    /// Registers an externally chosen identity. Returns `false` if it was
    /// already issued.
    pub fn reserve(&mut self, id: NodeId) -> bool {
        self.issued.insert(id)
    }

    pub fn issued(&self) -> usize {
        self.issued.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SaltKind {
    Public,
    Private,
}

/// A 32-byte salt mixed into score hashes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Salt {
    bytes: [u8; DIGEST_LEN],
    kind: SaltKind,
}

impl Salt {
    pub const fn new(bytes: [u8; DIGEST_LEN], kind: SaltKind) -> Self {
        Self { bytes, kind }
    }

    pub const fn public(bytes: [u8; DIGEST_LEN]) -> Self {
        Self::new(bytes, SaltKind::Public)
    }

    pub const fn private(bytes: [u8; DIGEST_LEN]) -> Self {
        Self::new(bytes, SaltKind::Private)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.bytes
    }

    pub fn kind(&self) -> SaltKind {
        self.kind
    }
}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix: String = self.bytes[..4].iter().map(|b| format!("{b:02x}")).collect();
        write!(f, "Salt({:?}, {prefix})", self.kind)
    }
}

/// Fresh random private salt.
pub fn new_private_salt<R: RngCore + ?Sized>(rng: &mut R) -> Salt {
    let mut bytes = [0u8; DIGEST_LEN];
    rng.fill_bytes(&mut bytes);
    Salt::private(bytes)
}

/// One-way chain `s_{t+1} = H(s_t)` revealed from the end towards `s_0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashChain {
    elements: Vec<[u8; DIGEST_LEN]>,
    cursor: usize,
}

impl HashChain {
    /// Builds the chain from `seed` (= `s_0`) with `length` elements and
    /// positions the cursor on the last one.
    pub fn create(seed: [u8; DIGEST_LEN], length: usize) -> Result<Self, IdentityError> {
        if length < 2 {
            return Err(IdentityError::ChainTooShort(length));
        }
        let mut elements = Vec::with_capacity(length);
        elements.push(seed);
        for t in 1..length {
            let next = digest(&elements[t - 1]);
            elements.push(next);
        }
        Ok(Self {
            elements,
            cursor: length - 1,
        })
    }

    /// Chain seeded with 32 random bytes.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R, length: usize) -> Result<Self, IdentityError> {
        let mut seed = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut seed);
        Self::create(seed, length)
    }

    /// Steps the cursor back by one and returns the newly published salt.
    pub fn advance(&mut self) -> Result<Salt, IdentityError> {
        if self.cursor == 0 {
            return Err(IdentityError::ChainExhausted);
        }
        self.cursor -= 1;
        Ok(self.current())
    }

    /// The currently published public salt.
    pub fn current(&self) -> Salt {
        Salt::public(self.elements[self.cursor])
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Number of further advances before exhaustion.
    pub fn remaining(&self) -> usize {
        self.cursor
    }

    pub fn element(&self, index: usize) -> Option<&[u8; DIGEST_LEN]> {
        self.elements.get(index)
    }
}

/// Free-function form of [`HashChain::create`].
pub fn chain_create(seed: [u8; DIGEST_LEN], length: usize) -> Result<HashChain, IdentityError> {
    HashChain::create(seed, length)
}

/// Free-function form of [`HashChain::advance`].
pub fn chain_advance(chain: &mut HashChain) -> Result<Salt, IdentityError> {
    chain.advance()
}

/// Checks that hashing `claimed` forward `updates` times yields `last_known`.
///
/// `updates == 0` degenerates to byte equality. More than `max_updates` steps
/// is refused outright rather than reported as a mismatch.
pub fn verify_salt(
    claimed: &Salt,
    last_known: &Salt,
    updates: u32,
    max_updates: u32,
) -> Result<bool, IdentityError> {
    if updates > max_updates {
        return Err(IdentityError::VerificationRefused {
            requested: updates,
            limit: max_updates,
        });
    }
    let mut cur = *claimed.as_bytes();
    for _ in 0..updates {
        cur = digest(&cur);
    }
    Ok(&cur == last_known.as_bytes())
}
