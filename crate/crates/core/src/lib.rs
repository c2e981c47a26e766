//! Salt-based autopeering for DLT peer-to-peer networks.
//!
//! Nodes pick outbound neighbors by ascending `H(self || peer || public salt)`
//! and accept inbound neighbors by ascending `H(self || peer || private salt)`.
//! Public salts are revealed backwards along a hash chain so requests can be
//! checked against the θ eligibility test without letting anyone pick their salt.
//!
//! - [`identity`]: node ids, salt hash chains, private salts
//! - [`scoring`]: outbound/inbound scores, θ-test, candidate ranking
//! - [`protocol`]: the per-node peering state machine and its messages
//! - [`simulator`]: deterministic discrete-event simulation and metrics
//! - [`adversary`]: attacker models and Monte-Carlo takeover estimates
//! - [`analytics`]: closed-form order-statistic and takeover formulas
//! - [`verify`]: the oracle-equivalence suite behind `autopeer verify`

pub mod adversary;
pub mod analytics;
pub mod identity;
pub mod protocol;
pub mod scoring;
pub mod simulator;
pub mod verify;

/// Simulation time, in ticks.
pub type Tick = u64;

/// Seedable generator used everywhere randomness is needed.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// `ChaCha8Rng::seed_from_u64(seed)`; every golden vector derives from this.
pub fn seeded_rng(seed: u64) -> SimRng {
    <SimRng as rand::SeedableRng>::seed_from_u64(seed)
}

pub use identity::{HashChain, IdentityError, NodeId, Salt, SaltKind};
pub use protocol::{Direction, Message, MessageBody, NeighborEntry, PeeringRequest, PeeringState, ProtocolParams};
pub use scoring::Score;
