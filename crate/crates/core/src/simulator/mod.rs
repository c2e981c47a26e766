//! Deterministic discrete-event simulation of a peering network.
//!
//! Every node runs a [`PeeringState`]. Three per-node timers drive it: the
//! query timer (period `d`), and the public and private salt timers (period
//! `T`, independent phases). Messages arrive `latency` ticks after sending.
//! Events are processed in `(tick, seq)` order, with `seq` assigned at
//! scheduling time, so a config and seed determine the whole run.

mod experiments;
pub mod metrics;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::identity::{IdentityGenerator, NodeId};
use crate::protocol::{Direction, Message, MessageBody, NodeCounters, PeeringState, ProtocolError, ProtocolParams};
use crate::{SimRng, Tick};

pub use experiments::{score_distribution_experiment, ScoreDistribution};
pub use metrics::{write_topology_csv, Edge, EpochSample, MetricsSeries, TickRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SaltPhase {
    /// Each node draws independent phases for its two salt timers, uniform in `[0, T)`.
    Random,
    /// All salt timers fire together at multiples of `T`.
    Synchronized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Honest node count `N`.
    pub nodes: usize,
    pub k: usize,
    /// Salt update period `T`, in ticks.
    pub salt_interval: Tick,
    /// Query period `d`, in ticks.
    pub query_delay: Tick,
    pub theta: f64,
    pub latency: Tick,
    pub max_ticks: Tick,
    pub seed: u64,
    pub salt_phase: SaltPhase,
    pub chain_length: usize,
    pub max_verify_steps: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        let p = ProtocolParams::default();
        Self {
            nodes: 100,
            k: p.k,
            salt_interval: 100,
            query_delay: 1,
            theta: p.theta,
            latency: 1,
            max_ticks: 5000,
            seed: 0,
            salt_phase: SaltPhase::Random,
            chain_length: p.chain_length,
            max_verify_steps: p.max_verify_steps,
        }
    }
}

impl SimConfig {
    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            k: self.k,
            theta: self.theta,
            max_verify_steps: self.max_verify_steps,
            chain_length: self.chain_length,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.nodes));
        }
        if self.query_delay < 1 {
            return bad("query delay must be at least 1 tick".into());
        }
        if self.salt_interval < self.query_delay {
            return bad(format!(
                "salt interval {} shorter than query delay {}",
                self.salt_interval, self.query_delay
            ));
        }
        self.protocol_params().validate().map_err(|e| SimError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackBehavior {
    /// Runs the honest protocol.
    ProtocolFollowing,
    /// Sends a request to the victim (node index) on every query tick.
    SpamInbound { victim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Honest,
    Attacker(AttackBehavior),
}

impl NodeRole {
    pub fn is_honest(&self) -> bool {
        matches!(self, NodeRole::Honest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    QueryTimer(usize),
    PublicSaltTimer(usize),
    PrivateSaltTimer(usize),
    Deliver(Message),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub at: Tick,
    pub seq: u64,
    pub kind: EventKind,
}

// Reversed so the std max-heap pops the earliest (at, seq) first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct Simulation {
    config: SimConfig,
    nodes: Vec<PeeringState>,
    roles: Vec<NodeRole>,
    index: HashMap<NodeId, usize>,
    queue: BinaryHeap<Event>,
    seq: u64,
    next_tick: Tick,
    metrics: MetricsSeries,
    tick_drops: u64,
    tick_salt_updates: u64,
    /// Eligible-request counter at each node's last private salt update.
    eligible_at_epoch: Vec<u64>,
    /// Requests-sent counter at each node's last public salt update.
    sent_at_epoch: Vec<u64>,
    attacker_requests: Vec<AttackerTally>,
}

/// Requests a node received from attacker identities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttackerTally {
    pub received: u64,
    /// Passed salt verification and the θ-test.
    pub eligible: u64,
    pub accepted: u64,
}

impl Simulation {
    /// Honest-only network.
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let roles = vec![NodeRole::Honest; config.nodes];
        Self::with_roles(config, roles)
    }

    /// `config.nodes` honest nodes followed by `attackers` attacker identities.
    pub fn with_attackers(config: SimConfig, attackers: usize, behavior: AttackBehavior) -> Result<Self, SimError> {
        let mut roles = vec![NodeRole::Honest; config.nodes];
        roles.extend(std::iter::repeat(NodeRole::Attacker(behavior)).take(attackers));
        Self::with_roles(config, roles)
    }

    /// One node per role; `config.nodes` must equal the number of honest roles.
    pub fn with_roles(config: SimConfig, roles: Vec<NodeRole>) -> Result<Self, SimError> {
        config.validate()?;
        let honest = roles.iter().filter(|r| r.is_honest()).count();
        if honest != config.nodes {
            return Err(SimError::InvalidConfig(format!(
                "{honest} honest roles for {} configured nodes",
                config.nodes
            )));
        }
        for role in &roles {
            if let NodeRole::Attacker(AttackBehavior::SpamInbound { victim }) = role {
                if *victim >= roles.len() || !roles[*victim].is_honest() {
                    return Err(SimError::InvalidConfig(format!("victim {victim} is not an honest node")));
                }
            }
        }

        let mut master = crate::seeded_rng(config.seed);
        let mut ids = IdentityGenerator::new();
        let id_list: Vec<NodeId> = roles.iter().map(|_| ids.next(&mut master)).collect();
        let params = config.protocol_params();
        let mut nodes = Vec::with_capacity(roles.len());
        for (i, id) in id_list.iter().enumerate() {
            let mut rng = SimRng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            let mut state = PeeringState::new(*id, params, rng)?;
            // full candidate knowledge from the start
            state.learn_peers(&id_list);
            nodes.push(state);
        }
        let index = id_list.iter().enumerate().map(|(i, id)| (*id, i)).collect();

        let n = roles.len();
        let mut sim = Self {
            config,
            nodes,
            roles,
            index,
            queue: BinaryHeap::new(),
            seq: 0,
            next_tick: 0,
            metrics: MetricsSeries::default(),
            tick_drops: 0,
            tick_salt_updates: 0,
            eligible_at_epoch: vec![0; n],
            sent_at_epoch: vec![0; n],
            attacker_requests: vec![AttackerTally::default(); n],
        };
        let (d, t) = (sim.config.query_delay, sim.config.salt_interval);
        for i in 0..n {
            let query_at = master.random_range(0..d);
            let (public_at, private_at) = match sim.config.salt_phase {
                SaltPhase::Random => (first_firing(master.random_range(0..t), t), first_firing(master.random_range(0..t), t)),
                SaltPhase::Synchronized => (t, t),
            };
            sim.nodes[i].next_query_at = query_at;
            sim.nodes[i].next_salt_update_at = public_at;
            sim.schedule(query_at, EventKind::QueryTimer(i));
            sim.schedule(public_at, EventKind::PublicSaltTimer(i));
            sim.schedule(private_at, EventKind::PrivateSaltTimer(i));
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[PeeringState] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &PeeringState {
        &self.nodes[i]
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Requests node `i` received from attacker identities so far.
    pub fn attacker_requests(&self, i: usize) -> AttackerTally {
        self.attacker_requests[i]
    }

    pub fn is_attacker(&self, id: &NodeId) -> bool {
        self.index_of(id).is_some_and(|i| !self.roles[i].is_honest())
    }

    /// Next tick to be processed.
    pub fn now(&self) -> Tick {
        self.next_tick
    }

    pub fn metrics(&self) -> &MetricsSeries {
        &self.metrics
    }

    pub fn into_metrics(mut self) -> MetricsSeries {
        self.metrics.totals = self.honest_totals();
        self.metrics
    }

    /// Counters summed over honest nodes.
    pub fn honest_totals(&self) -> NodeCounters {
        let mut t = NodeCounters::default();
        for (node, role) in self.nodes.iter().zip(&self.roles) {
            if role.is_honest() {
                add_counters(&mut t, node.counters());
            }
        }
        t
    }

    fn schedule(&mut self, at: Tick, kind: EventKind) {
        self.queue.push(Event { at, seq: self.seq, kind });
        self.seq += 1;
    }

    fn send(&mut self, now: Tick, msg: Message) {
        if msg.is_drop() {
            self.tick_drops += 1;
        }
        self.schedule(now + self.config.latency, EventKind::Deliver(msg));
    }

    /// Processes every event of the current tick and records its metrics.
    pub fn step(&mut self) {
        let now = self.next_tick;
        while self.queue.peek().is_some_and(|e| e.at <= now) {
            let ev = self.queue.pop().expect("peeked");
            self.process(now, ev.kind);
        }
        self.record_tick(now);
        self.next_tick += 1;
    }

    /// Runs until tick `end` (exclusive) has been processed.
    pub fn run_until(&mut self, end: Tick) {
        while self.next_tick < end {
            self.step();
        }
    }

    pub fn run_to_end(&mut self) {
        self.run_until(self.config.max_ticks);
    }

    fn process(&mut self, now: Tick, kind: EventKind) {
        match kind {
            EventKind::QueryTimer(i) => {
                let out = match self.roles[i] {
                    NodeRole::Attacker(AttackBehavior::SpamInbound { victim }) => {
                        let target = self.nodes[victim].id();
                        Some(self.nodes[i].build_request(target))
                    }
                    _ => self.nodes[i].poll_query(now),
                };
                if let Some(msg) = out {
                    self.send(now, msg);
                }
                let next = now + self.config.query_delay;
                self.nodes[i].next_query_at = next;
                self.schedule(next, EventKind::QueryTimer(i));
            }
            EventKind::PublicSaltTimer(i) => {
                if self.roles[i].is_honest() {
                    let sent = self.nodes[i].counters().requests_sent;
                    let requests = sent - std::mem::replace(&mut self.sent_at_epoch[i], sent);
                    self.sample(i, now, Direction::Outbound, requests);
                }
                self.nodes[i].update_public_salt();
                self.tick_salt_updates += 1;
                let next = now + self.config.salt_interval;
                self.nodes[i].next_salt_update_at = next;
                self.schedule(next, EventKind::PublicSaltTimer(i));
            }
            EventKind::PrivateSaltTimer(i) => {
                if self.roles[i].is_honest() {
                    let eligible = self.nodes[i].counters().eligible_requests;
                    let requests = eligible - std::mem::replace(&mut self.eligible_at_epoch[i], eligible);
                    self.sample(i, now, Direction::Inbound, requests);
                }
                self.nodes[i].update_private_salt();
                self.tick_salt_updates += 1;
                self.schedule(now + self.config.salt_interval, EventKind::PrivateSaltTimer(i));
            }
            EventKind::Deliver(msg) => self.deliver(now, msg),
        }
    }

    fn deliver(&mut self, now: Tick, msg: Message) {
        let Some(i) = self.index_of(&msg.to) else {
            self.metrics.malformed_messages += 1;
            return;
        };
        let replies = match (self.roles[i], msg.body) {
            // spam requests bypass the pending slot, so their acceptances are adopted directly
            (NodeRole::Attacker(AttackBehavior::SpamInbound { .. }), MessageBody::Response { accepted }) => {
                if accepted {
                    self.nodes[i].adopt_outbound(now, msg.from).into_iter().collect()
                } else {
                    Vec::new()
                }
            }
            (_, MessageBody::Request(req)) if msg.to == self.nodes[i].id() => {
                match self.nodes[i].handle_request(now, msg.from, &req) {
                    Ok(decision) => {
                        if self.is_attacker(&msg.from) {
                            let tally = &mut self.attacker_requests[i];
                            tally.received += 1;
                            tally.eligible += u64::from(decision.outcome.eligible());
                            tally.accepted += u64::from(decision.outcome.accepted());
                        }
                        std::iter::once(decision.response).chain(decision.drop).collect()
                    }
                    Err(_) => {
                        self.metrics.malformed_messages += 1;
                        Vec::new()
                    }
                }
            }
            _ => match self.nodes[i].handle_message(now, &msg) {
                Ok(replies) => replies,
                Err(_) => {
                    self.metrics.malformed_messages += 1;
                    Vec::new()
                }
            },
        };
        for reply in replies {
            self.send(now, reply);
        }
    }

    fn sample(&mut self, i: usize, now: Tick, direction: Direction, requests: u64) {
        let node = &self.nodes[i];
        let min = match direction {
            Direction::Inbound => node.min_inbound_score(),
            Direction::Outbound => node.min_outbound_score(),
        };
        let Some(min_score) = min else {
            self.metrics.empty_epoch_samples += 1;
            return;
        };
        let sample = EpochSample {
            node: i,
            tick: now,
            direction,
            min_score,
            scaled: min_score.value() * self.config.nodes as f64,
            requests,
        };
        match direction {
            Direction::Inbound => self.metrics.inbound_minima.push(sample),
            Direction::Outbound => self.metrics.outbound_minima.push(sample),
        }
    }

    fn record_tick(&mut self, tick: Tick) {
        let full = 2 * self.config.k;
        let (mut total, mut saturated) = (0usize, 0usize);
        for (node, role) in self.nodes.iter().zip(&self.roles) {
            if role.is_honest() {
                let d = node.degree();
                total += d;
                saturated += usize::from(d == full);
            }
        }
        self.metrics.ticks.push(TickRecord {
            tick,
            avg_neighbors: total as f64 / self.config.nodes as f64,
            nodes_with_2k: saturated,
            drops: std::mem::take(&mut self.tick_drops),
            salt_updates: std::mem::take(&mut self.tick_salt_updates),
        });
    }

    /// Delivers every in-flight message, including replies they trigger,
    /// without firing timers. Timers keep their scheduled ticks.
    pub fn settle(&mut self) {
        let mut timers = Vec::new();
        while let Some(ev) = self.queue.pop() {
            match ev.kind {
                EventKind::Deliver(msg) => {
                    let now = ev.at.max(self.next_tick);
                    self.deliver(now, msg);
                }
                _ => timers.push(ev),
            }
        }
        self.queue.extend(timers);
        self.tick_drops = 0;
    }

    /// Directed neighbor relations as currently held by every node.
    pub fn snapshot_topology(&self) -> Vec<Edge> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.outbound().iter().chain(n.inbound()).map(move |e| Edge {
                    owner: n.id(),
                    peer: e.peer,
                    direction: e.direction,
                    score: e.score,
                })
            })
            .collect()
    }

    /// Checks that every outbound edge is mirrored by an inbound edge at its
    /// peer and vice versa. Meaningful only after [`Simulation::settle`].
    pub fn check_consistency(&self) -> Result<(), String> {
        for node in &self.nodes {
            node.check_invariants().map_err(|e| format!("{}: {e}", node.id().short()))?;
            for e in node.outbound().iter().chain(node.inbound()) {
                let peer = &self.nodes[self.index[&e.peer]];
                let mirrored = match e.direction {
                    Direction::Outbound => Direction::Inbound,
                    Direction::Inbound => Direction::Outbound,
                };
                if peer.neighbor_direction(&node.id()) != Some(mirrored) {
                    return Err(format!(
                        "{} holds {:?} edge to {} which is not mirrored",
                        node.id().short(),
                        e.direction,
                        e.peer.short()
                    ));
                }
            }
        }
        Ok(())
    }
}

fn first_firing(phase: Tick, period: Tick) -> Tick {
    if phase == 0 {
        period
    } else {
        phase
    }
}

fn add_counters(acc: &mut NodeCounters, c: &NodeCounters) {
    acc.requests_sent += c.requests_sent;
    acc.replacement_requests += c.replacement_requests;
    acc.requests_received += c.requests_received;
    acc.eligible_requests += c.eligible_requests;
    acc.accepted_requests += c.accepted_requests;
    acc.rejected_verification += c.rejected_verification;
    acc.rejected_theta += c.rejected_theta;
    acc.rejected_neighbor += c.rejected_neighbor;
    acc.rejected_full += c.rejected_full;
    acc.evictions += c.evictions;
    acc.responses_accepted += c.responses_accepted;
    acc.responses_rejected += c.responses_rejected;
    acc.unmatched_responses += c.unmatched_responses;
    acc.drops_sent += c.drops_sent;
    acc.drops_received += c.drops_received;
    acc.stray_drops += c.stray_drops;
    acc.public_salt_updates += c.public_salt_updates;
    acc.private_salt_updates += c.private_salt_updates;
    acc.chain_reprovisions += c.chain_reprovisions;
}

/// Runs a fresh honest-only simulation to completion.
pub fn run(config: SimConfig) -> Result<MetricsSeries, SimError> {
    let mut sim = Simulation::new(config)?;
    sim.run_to_end();
    Ok(sim.into_metrics())
}

/// Runs a fresh simulation up to `tick`, lets in-flight messages settle, and
/// returns the edge list.
pub fn snapshot_topology(config: SimConfig, tick: Tick) -> Result<Vec<Edge>, SimError> {
    let mut sim = Simulation::new(config)?;
    sim.run_until(tick);
    sim.settle();
    Ok(sim.snapshot_topology())
}
