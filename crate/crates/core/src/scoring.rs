//! Outbound/inbound scores, the θ eligibility test and candidate ranking.
//!
//! A score is the first eight bytes of a SHA-256 digest read as a big-endian
//! integer and divided by 2^64. It is kept as the raw integer so that ordering
//! and threshold comparisons are exact.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::identity::{digest_concat, NodeId, Salt, DIGEST_LEN};

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoringError {
    #[error("a node cannot score itself ({0:?})")]
    SelfScore(NodeId),
}

/// Dyadic rational `raw / 2^64` in `[0, 1)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Score(u64);

impl Score {
    pub const ZERO: Score = Score(0);
    pub const MAX: Score = Score(u64::MAX);

    pub const fn from_raw(raw: u64) -> Self {
        Self(raw)
    }

    /// Normalizes a digest: first 8 bytes, big-endian, over 2^64.
    pub fn from_digest(digest: &[u8; DIGEST_LEN]) -> Self {
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Self(u64::from_be_bytes(head))
    }

    /// Largest score not exceeding `fraction`; values outside `[0, 1)` clamp.
    pub fn from_fraction(fraction: f64) -> Self {
        if fraction.is_nan() || fraction <= 0.0 {
            Self(0)
        } else if fraction >= 1.0 {
            Self(u64::MAX)
        } else {
            // Scaling by a power of two is exact; `as` truncates toward zero.
            Self((fraction * TWO_POW_64) as u64)
        }
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    /// Nearest-below `f64` of the exact value. Only the top 53 bits survive,
    /// so the result stays strictly below 1.
    pub fn value(self) -> f64 {
        (self.0 >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exact `self <= threshold` for a real threshold.
    pub fn at_most(self, threshold: f64) -> bool {
        if threshold >= 1.0 {
            return true;
        }
        // negative or NaN thresholds admit nothing
        if threshold.is_nan() || threshold < 0.0 {
            return false;
        }
        self.0 <= (threshold * TWO_POW_64) as u64
    }
}

impl fmt::Debug for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Score({:.6})", self.value())
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.value(), f)
    }
}

fn hash_score(first: &NodeId, second: &NodeId, salt: &Salt) -> Score {
    let digest = digest_concat(&[first.as_bytes(), second.as_bytes(), salt.as_bytes()]);
    Score::from_digest(&digest)
}

/// `H(requester || candidate || public salt of requester)`.
pub fn outbound_score(
    requester: &NodeId,
    candidate: &NodeId,
    requester_public_salt: &Salt,
) -> Result<Score, ScoringError> {
    if requester == candidate {
        return Err(ScoringError::SelfScore(*requester));
    }
    Ok(hash_score(requester, candidate, requester_public_salt))
}

/// `H(target || requester || private salt of target)`; the target's id goes first.
pub fn inbound_score(
    target: &NodeId,
    requester: &NodeId,
    target_private_salt: &Salt,
) -> Result<Score, ScoringError> {
    if target == requester {
        return Err(ScoringError::SelfScore(*target));
    }
    Ok(hash_score(target, requester, target_private_salt))
}

/// Passes iff `score <= theta` (inclusive).
pub fn theta_test(score: Score, theta: f64) -> bool {
    score.at_most(theta)
}

/// Candidate order: ascending score, then ascending id.
pub fn candidate_order(a: &(NodeId, Score), b: &(NodeId, Score)) -> Ordering {
    a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0))
}

/// Ranks `candidates` by outbound score under `public_salt`, best first.
///
/// `me` is skipped if present. Duplicates in the input are collapsed.
pub fn rank_candidates<'a, I>(me: &NodeId, public_salt: &Salt, candidates: I) -> Vec<(NodeId, Score)>
where
    I: IntoIterator<Item = &'a NodeId>,
{
    let mut ranked: Vec<(NodeId, Score)> = candidates
        .into_iter()
        .filter(|c| *c != me)
        .map(|c| (*c, hash_score(me, c, public_salt)))
        .collect();
    ranked.sort_unstable_by(candidate_order);
    ranked.dedup_by(|a, b| a.0 == b.0);
    ranked
}
