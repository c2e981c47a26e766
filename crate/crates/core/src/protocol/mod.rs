//! Per-node neighbor selection.
//!
//! Every node keeps at most `k` outbound neighbors (peers it asked) and at most
//! `k` inbound neighbors (peers that asked it). Outbound candidates are tried
//! in ascending outbound score; requests are accepted while inbound slots are
//! free, or when the requester's inbound score beats the current worst inbound
//! neighbor, which is then dropped. Requesters must pass the θ-test and prove
//! their public salt descends from the last one the recipient saw.
//!
//! [`PeeringState`] is a pure state machine: handlers consume one event and
//! return the messages to send. Scheduling is the simulator's job.

mod message;

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::identity::{
    new_private_salt, verify_salt, HashChain, IdentityError, NodeId, Salt, SaltKind, DEFAULT_CHAIN_LENGTH,
};
use crate::scoring::{candidate_order, inbound_score, outbound_score, rank_candidates, theta_test, Score};
use crate::Tick;

pub use message::{DecodeError, Message, MessageBody, PeeringRequest};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid protocol parameter: {0}")]
    InvalidParams(String),
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Neighbor cap per direction.
    pub k: usize,
    /// θ-test threshold; 1.0 disables the test.
    pub theta: f64,
    /// Maximum salt updates a verifier hashes through for one request.
    pub max_verify_steps: u32,
    /// Elements per public-salt hash chain.
    pub chain_length: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            k: 4,
            theta: 1.0,
            max_verify_steps: (DEFAULT_CHAIN_LENGTH - 1) as u32,
            chain_length: DEFAULT_CHAIN_LENGTH,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.k == 0 {
            return Err(ProtocolError::InvalidParams("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ProtocolError::InvalidParams(format!("theta {} outside [0, 1]", self.theta)));
        }
        if self.chain_length < 2 {
            return Err(ProtocolError::InvalidParams("chain length must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Outbound,
    Inbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborEntry {
    pub peer: NodeId,
    /// Score under the owner's current salt for this direction.
    pub score: Score,
    pub direction: Direction,
    pub established_at: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// Claimed salt does not hash forward to the last one seen.
    Verification,
    /// More salt updates claimed than the verifier is willing to check.
    VerificationRefused,
    /// Requester's outbound score toward us exceeds θ.
    Theta,
    /// Requester is already a neighbor in some direction.
    AlreadyNeighbor,
    /// We have an outstanding request to the same peer.
    CrossRequest,
    /// Inbound set full and the requester does not beat the worst entry.
    NotBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    Accepted { evicted: Option<NodeId> },
    Rejected(RejectReason),
}

impl RequestOutcome {
    /// Whether the request got past verification and the θ-test.
    pub fn eligible(&self) -> bool {
        !matches!(
            self,
            RequestOutcome::Rejected(RejectReason::Verification | RejectReason::VerificationRefused | RejectReason::Theta)
        )
    }

    pub fn accepted(&self) -> bool {
        matches!(self, RequestOutcome::Accepted { .. })
    }
}

/// Result of [`PeeringState::handle_request`].
#[derive(Debug, Clone, PartialEq)]
pub struct RequestDecision {
    pub outcome: RequestOutcome,
    /// Inbound score of the requester under our private salt, when computed.
    pub inbound_score: Option<Score>,
    pub response: Message,
    pub drop: Option<Message>,
}

/// Per-node event counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeCounters {
    pub requests_sent: u64,
    /// Requests issued while the outbound set was full.
    pub replacement_requests: u64,
    pub requests_received: u64,
    pub eligible_requests: u64,
    pub accepted_requests: u64,
    pub rejected_verification: u64,
    pub rejected_theta: u64,
    pub rejected_neighbor: u64,
    pub rejected_full: u64,
    /// Inbound neighbors dropped to make room for a better requester.
    pub evictions: u64,
    pub responses_accepted: u64,
    pub responses_rejected: u64,
    pub unmatched_responses: u64,
    pub drops_sent: u64,
    pub drops_received: u64,
    pub stray_drops: u64,
    pub public_salt_updates: u64,
    pub private_salt_updates: u64,
    pub chain_reprovisions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pending {
    pub target: NodeId,
    /// Issued while the outbound set was full, to replace its worst entry.
    pub replacement: bool,
    pub sent_at: Tick,
}

/// What a node knows about one other node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct PeerRecord {
    /// Last public salt this peer proved to us.
    last_salt: Option<Salt>,
    /// `(chain generation, cursor)` of our chain when we last requested this peer.
    last_told: Option<(u32, usize)>,
}

/// Full protocol state of one node.
#[derive(Debug, Clone)]
pub struct PeeringState {
    id: NodeId,
    params: ProtocolParams,
    rng: ChaCha8Rng,
    chain: HashChain,
    chain_generation: u32,
    private_salt: Salt,
    outbound: Vec<NeighborEntry>,
    inbound: Vec<NeighborEntry>,
    known: BTreeMap<NodeId, PeerRecord>,
    ranked: Vec<(NodeId, Score)>,
    rejected: HashSet<NodeId>,
    pending: Option<Pending>,
    seeking_replacement: bool,
    counters: NodeCounters,
    pub next_query_at: Tick,
    pub next_salt_update_at: Tick,
}

impl PeeringState {
    /// Creates a node with a fresh chain and private salt drawn from `rng`,
    /// which the node keeps for later private-salt updates and chain renewal.
    pub fn new(id: NodeId, params: ProtocolParams, mut rng: ChaCha8Rng) -> Result<Self, ProtocolError> {
        params.validate()?;
        let chain = HashChain::random(&mut rng, params.chain_length)?;
        let private_salt = new_private_salt(&mut rng);
        Ok(Self {
            id,
            params,
            rng,
            chain,
            chain_generation: 0,
            private_salt,
            outbound: Vec::with_capacity(params.k + 1),
            inbound: Vec::with_capacity(params.k),
            known: BTreeMap::new(),
            ranked: Vec::new(),
            rejected: HashSet::new(),
            pending: None,
            seeking_replacement: false,
            counters: NodeCounters::default(),
            next_query_at: 0,
            next_salt_update_at: 0,
        })
    }

    /// Convenience constructor seeding the node's rng from a `u64`.
    pub fn with_seed(id: NodeId, params: ProtocolParams, seed: u64) -> Result<Self, ProtocolError> {
        Self::new(id, params, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn public_salt(&self) -> Salt {
        self.chain.current()
    }

    pub fn private_salt(&self) -> Salt {
        self.private_salt
    }

    pub fn chain(&self) -> &HashChain {
        &self.chain
    }

    pub fn outbound(&self) -> &[NeighborEntry] {
        &self.outbound
    }

    pub fn inbound(&self) -> &[NeighborEntry] {
        &self.inbound
    }

    pub fn degree(&self) -> usize {
        self.outbound.len() + self.inbound.len()
    }

    pub fn pending(&self) -> Option<&Pending> {
        self.pending.as_ref()
    }

    pub fn counters(&self) -> &NodeCounters {
        &self.counters
    }

    pub fn is_seeking_replacement(&self) -> bool {
        self.seeking_replacement
    }

    /// Number of candidates that rejected us in the current public-salt epoch.
    pub fn rejected_this_epoch(&self) -> usize {
        self.rejected.len()
    }

    pub fn was_rejected(&self, peer: &NodeId) -> bool {
        self.rejected.contains(peer)
    }

    /// Current candidate list, best first.
    pub fn ranked_candidates(&self) -> &[(NodeId, Score)] {
        &self.ranked
    }

    pub fn known_peers(&self) -> impl Iterator<Item = &NodeId> {
        self.known.keys()
    }

    /// Last public salt `peer` proved to us, if any.
    pub fn last_known_salt(&self, peer: &NodeId) -> Option<Salt> {
        self.known.get(peer).and_then(|r| r.last_salt)
    }

    pub fn is_neighbor(&self, peer: &NodeId) -> bool {
        self.outbound.iter().chain(&self.inbound).any(|e| &e.peer == peer)
    }

    pub fn neighbor_direction(&self, peer: &NodeId) -> Option<Direction> {
        if self.outbound.iter().any(|e| &e.peer == peer) {
            Some(Direction::Outbound)
        } else if self.inbound.iter().any(|e| &e.peer == peer) {
            Some(Direction::Inbound)
        } else {
            None
        }
    }

    pub fn min_inbound_score(&self) -> Option<Score> {
        self.inbound.iter().map(|e| e.score).min()
    }

    pub fn min_outbound_score(&self) -> Option<Score> {
        self.outbound.iter().map(|e| e.score).min()
    }

    /// Adds peers to the candidate pool and re-ranks.
    pub fn learn_peers<'a, I: IntoIterator<Item = &'a NodeId>>(&mut self, peers: I) {
        let mut added = false;
        for p in peers {
            if *p != self.id && !self.known.contains_key(p) {
                self.known.insert(*p, PeerRecord::default());
                added = true;
            }
        }
        if added {
            self.rerank();
        }
    }

    fn learn_peer(&mut self, peer: NodeId) {
        if peer == self.id || self.known.contains_key(&peer) {
            return;
        }
        self.known.insert(peer, PeerRecord::default());
        let salt = self.public_salt();
        let score = outbound_score(&self.id, &peer, &salt).expect("peer differs from self");
        let entry = (peer, score);
        let pos = self.ranked.partition_point(|e| candidate_order(e, &entry).is_lt());
        self.ranked.insert(pos, entry);
    }

    fn rerank(&mut self) {
        let salt = self.public_salt();
        self.ranked = rank_candidates(&self.id, &salt, self.known.keys());
    }

    fn worst_index(entries: &[NeighborEntry]) -> Option<usize> {
        entries
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.score.cmp(&b.score).then_with(|| a.peer.cmp(&b.peer)))
            .map(|(i, _)| i)
    }

    fn worst_outbound(&self) -> Option<Score> {
        Self::worst_index(&self.outbound).map(|i| self.outbound[i].score)
    }

    /// Which peer to ask next, and whether it would replace an existing
    /// outbound neighbor. Pure; see [`PeeringState::poll_query`].
    pub fn next_outbound_target(&self) -> Option<(NodeId, bool)> {
        if self.pending.is_some() {
            return None;
        }
        let usable = |(peer, _): &&(NodeId, Score)| !self.rejected.contains(peer) && !self.is_neighbor(peer);
        if self.outbound.len() < self.params.k {
            return self.ranked.iter().find(usable).map(|(p, _)| (*p, false));
        }
        if !self.seeking_replacement {
            return None;
        }
        let worst = self.worst_outbound()?;
        self.ranked
            .iter()
            .take_while(|(_, s)| *s < worst)
            .find(usable)
            .map(|(p, _)| (*p, true))
    }

    /// Query-timer handler: issues at most one outbound request.
    pub fn poll_query(&mut self, now: Tick) -> Option<Message> {
        if self.pending.is_some() {
            return None;
        }
        match self.next_outbound_target() {
            Some((target, replacement)) => {
                self.pending = Some(Pending { target, replacement, sent_at: now });
                self.counters.replacement_requests += u64::from(replacement);
                Some(self.build_request(target))
            }
            None => {
                if self.outbound.len() >= self.params.k {
                    // Nothing beats the current worst; stop looking until the next salt update.
                    self.seeking_replacement = false;
                }
                None
            }
        }
    }

    /// Builds a request to `target` and records the salt position we told it.
    /// Does not touch `pending`; adversarial roles use this directly.
    pub fn build_request(&mut self, target: NodeId) -> Message {
        self.learn_peer(target);
        let generation = self.chain_generation;
        let cursor = self.chain.cursor();
        let record = self.known.get_mut(&target).expect("learned above");
        let (updates_since_last, new_chain) = match record.last_told {
            None => (0, false),
            Some((g, c)) if g == generation => ((c - cursor) as u32, false),
            Some(_) => (0, true),
        };
        record.last_told = Some((generation, cursor));
        self.counters.requests_sent += 1;
        Message::request(
            self.id,
            target,
            PeeringRequest { public_salt: self.chain.current(), updates_since_last, new_chain },
        )
    }

    /// Decides on an incoming peering request.
    pub fn handle_request(
        &mut self,
        now: Tick,
        from: NodeId,
        req: &PeeringRequest,
    ) -> Result<RequestDecision, ProtocolError> {
        if from == self.id {
            return Err(ProtocolError::Malformed("request from self"));
        }
        if req.public_salt.kind() != SaltKind::Public {
            return Err(ProtocolError::Malformed("request carries a private salt"));
        }
        self.counters.requests_received += 1;
        self.learn_peer(from);

        let reject = |state: &mut Self, reason: RejectReason, inbound: Option<Score>| {
            match reason {
                RejectReason::Verification | RejectReason::VerificationRefused => state.counters.rejected_verification += 1,
                RejectReason::Theta => state.counters.rejected_theta += 1,
                RejectReason::AlreadyNeighbor | RejectReason::CrossRequest => state.counters.rejected_neighbor += 1,
                RejectReason::NotBetter => state.counters.rejected_full += 1,
            }
            RequestDecision {
                outcome: RequestOutcome::Rejected(reason),
                inbound_score: inbound,
                response: Message::response(state.id, from, false),
                drop: None,
            }
        };

        // (a) salt must descend from the last one this peer proved to us
        let record = self.known.get_mut(&from).expect("learned above");
        let verified = match record.last_salt {
            Some(last) if !req.new_chain => {
                verify_salt(&req.public_salt, &last, req.updates_since_last, self.params.max_verify_steps)
            }
            // first contact, or a re-provisioned chain: trust on first use
            _ => Ok(true),
        };
        match verified {
            Ok(true) => record.last_salt = Some(req.public_salt),
            Ok(false) => return Ok(reject(self, RejectReason::Verification, None)),
            Err(_) => return Ok(reject(self, RejectReason::VerificationRefused, None)),
        }

        // (b) θ-test on the requester's own outbound score toward us
        let out = outbound_score(&from, &self.id, &req.public_salt).expect("checked from != self");
        if !theta_test(out, self.params.theta) {
            return Ok(reject(self, RejectReason::Theta, None));
        }
        self.counters.eligible_requests += 1;

        // (c) one edge per pair
        if self.is_neighbor(&from) {
            return Ok(reject(self, RejectReason::AlreadyNeighbor, None));
        }
        if self.pending.is_some_and(|p| p.target == from) {
            return Ok(reject(self, RejectReason::CrossRequest, None));
        }

        let score = inbound_score(&self.id, &from, &self.private_salt).expect("checked from != self");
        let mut drop = None;
        let mut evicted = None;
        if self.inbound.len() >= self.params.k {
            let worst = Self::worst_index(&self.inbound).expect("k >= 1");
            if score >= self.inbound[worst].score {
                return Ok(reject(self, RejectReason::NotBetter, Some(score)));
            }
            let gone = self.inbound.swap_remove(worst);
            self.counters.drops_sent += 1;
            self.counters.evictions += 1;
            drop = Some(Message::drop(self.id, gone.peer));
            evicted = Some(gone.peer);
        }
        debug_assert!(theta_test(out, self.params.theta));
        self.inbound.push(NeighborEntry {
            peer: from,
            score,
            direction: Direction::Inbound,
            established_at: now,
        });
        self.counters.accepted_requests += 1;
        Ok(RequestDecision {
            outcome: RequestOutcome::Accepted { evicted },
            inbound_score: Some(score),
            response: Message::response(self.id, from, true),
            drop,
        })
    }

    /// Applies a response to our pending request. Returns any drop we must send.
    pub fn handle_response(&mut self, now: Tick, from: NodeId, accepted: bool) -> Option<Message> {
        if !self.pending.is_some_and(|p| p.target == from) {
            self.counters.unmatched_responses += 1;
            return None;
        }
        self.pending = None;
        if !accepted {
            self.counters.responses_rejected += 1;
            self.rejected.insert(from);
            return None;
        }
        self.counters.responses_accepted += 1;
        self.adopt_outbound(now, from)
    }

    /// Records `from` as an outbound neighbor after it accepted a request,
    /// keeping the `k` best. Returns the drop for whichever peer is let go.
    /// Used directly for requests sent without [`PeeringState::poll_query`].
    pub fn adopt_outbound(&mut self, now: Tick, from: NodeId) -> Option<Message> {
        if from == self.id {
            return None;
        }
        if self.is_neighbor(&from) {
            // Only reachable for requests sent outside the pending slot; undo the peer's side.
            self.counters.drops_sent += 1;
            return Some(Message::drop(self.id, from));
        }
        let score = outbound_score(&self.id, &from, &self.public_salt()).expect("never targets self");
        self.outbound.push(NeighborEntry {
            peer: from,
            score,
            direction: Direction::Outbound,
            established_at: now,
        });
        if self.outbound.len() >= self.params.k {
            // The set is filled again; further replacements wait for the next public salt.
            self.seeking_replacement = false;
        }
        if self.outbound.len() > self.params.k {
            // Keep the k best; the newcomer itself goes if a salt change made it the worst.
            let worst = Self::worst_index(&self.outbound).expect("non-empty");
            let gone = self.outbound.swap_remove(worst);
            self.counters.drops_sent += 1;
            return Some(Message::drop(self.id, gone.peer));
        }
        None
    }

    /// Removes `from` from whichever neighbor set holds it.
    pub fn handle_drop(&mut self, from: NodeId) -> Option<Direction> {
        self.counters.drops_received += 1;
        if let Some(i) = self.outbound.iter().position(|e| e.peer == from) {
            self.outbound.swap_remove(i);
            // It preferred other peers; asking again this epoch is futile.
            self.rejected.insert(from);
            return Some(Direction::Outbound);
        }
        if let Some(i) = self.inbound.iter().position(|e| e.peer == from) {
            self.inbound.swap_remove(i);
            return Some(Direction::Inbound);
        }
        self.counters.stray_drops += 1;
        None
    }

    /// Dispatches a delivered message. Returns messages to send.
    pub fn handle_message(&mut self, now: Tick, msg: &Message) -> Result<Vec<Message>, ProtocolError> {
        if msg.to != self.id {
            return Err(ProtocolError::Malformed("message addressed to another node"));
        }
        match &msg.body {
            MessageBody::Request(req) => {
                let d = self.handle_request(now, msg.from, req)?;
                Ok(std::iter::once(d.response).chain(d.drop).collect())
            }
            MessageBody::Response { accepted } => Ok(self.handle_response(now, msg.from, *accepted).into_iter().collect()),
            MessageBody::Drop => {
                self.handle_drop(msg.from);
                Ok(Vec::new())
            }
        }
    }

    /// Reveals the next public salt. Existing outbound neighbors are kept but
    /// re-scored, the candidate list is re-ranked and replacement seeking starts.
    pub fn update_public_salt(&mut self) -> Salt {
        let salt = match self.chain.advance() {
            Ok(salt) => salt,
            Err(_) => {
                self.chain = HashChain::random(&mut self.rng, self.params.chain_length).expect("validated length");
                self.chain_generation += 1;
                self.counters.chain_reprovisions += 1;
                self.chain.current()
            }
        };
        self.counters.public_salt_updates += 1;
        for e in &mut self.outbound {
            e.score = outbound_score(&self.id, &e.peer, &salt).expect("never self");
        }
        self.rerank();
        self.rejected.clear();
        self.seeking_replacement = true;
        salt
    }

    /// Draws a new private salt and re-scores the current inbound neighbors.
    pub fn update_private_salt(&mut self) -> Salt {
        self.private_salt = new_private_salt(&mut self.rng);
        self.counters.private_salt_updates += 1;
        for e in &mut self.inbound {
            e.score = inbound_score(&self.id, &e.peer, &self.private_salt).expect("never self");
        }
        self.private_salt
    }

    /// Checks the local invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let k = self.params.k;
        if self.outbound.len() > k || self.inbound.len() > k {
            return Err(format!("capacity exceeded: out={} in={} k={k}", self.outbound.len(), self.inbound.len()));
        }
        let mut seen = HashSet::new();
        for e in self.outbound.iter().chain(&self.inbound) {
            if e.peer == self.id {
                return Err("self edge".into());
            }
            if !seen.insert(e.peer) {
                return Err(format!("duplicate neighbor {:?}", e.peer));
            }
        }
        let salt = self.public_salt();
        for e in &self.outbound {
            if outbound_score(&self.id, &e.peer, &salt).ok() != Some(e.score) {
                return Err(format!("stale outbound score for {:?}", e.peer));
            }
        }
        for e in &self.inbound {
            if inbound_score(&self.id, &e.peer, &self.private_salt).ok() != Some(e.score) {
                return Err(format!("stale inbound score for {:?}", e.peer));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
