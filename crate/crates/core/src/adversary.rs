//! Attacker models: Monte-Carlo takeover estimates under the i.i.d. score
//! model, and eclipse attacks run through the full simulator.
//!
//! Monte-Carlo routines take a seed rather than a generator. Trials are split
//! into fixed-size chunks, each with its own ChaCha stream, so results do not
//! depend on the number of worker threads.

use std::io::{self, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::simulator::{AttackBehavior, SimConfig, SimError, Simulation};
use crate::{SimRng, Tick};

const CHUNK: u64 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A Monte-Carlo success fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub p: f64,
    /// `sqrt(p (1-p) / trials)`
    pub std_err: f64,
    pub successes: u64,
    pub trials: u64,
}

impl Estimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let p = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        let std_err = if trials == 0 { 0.0 } else { (p * (1.0 - p) / trials as f64).sqrt() };
        Self { p, std_err, successes, trials }
    }

    /// Binomial standard error of a `trials`-sample mean if the truth were `reference`.
    pub fn std_err_under(&self, reference: f64) -> f64 {
        (reference * (1.0 - reference) / self.trials as f64).sqrt()
    }

    /// `|p - reference| <= sigmas · SE(reference)`. A reference of exactly 0
    /// or 1 demands an exact match.
    pub fn agrees_with(&self, reference: f64, sigmas: f64) -> bool {
        (self.p - reference).abs() <= sigmas * self.std_err_under(reference)
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `trials` Bernoulli trials in parallel chunks and counts successes.
fn count_successes<F>(trials: u64, seed: u64, trial: F) -> u64
where
    F: Fn(&mut SimRng) -> bool + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n).filter(|_| trial(&mut rng)).count() as u64
        })
        .sum()
}

/// Probability that `n_a` attackers take all `k` inbound slots of a node that
/// also received `l` honest requests, with all inbound scores i.i.d. uniform.
/// Each trial draws all `n_a + l` scores.
pub fn mc_inbound_takeover(n_a: u64, l: u64, k: u64, trials: u64, seed: u64) -> Result<Estimate, AdversaryError> {
    if k == 0 || trials == 0 {
        return Err(AdversaryError::InvalidParameter("need k >= 1 and trials >= 1".into()));
    }
    let hits = count_successes(trials, seed, |rng| {
        let honest_min = (0..l).map(|_| rng.random::<f64>()).fold(f64::INFINITY, f64::min);
        // the k smallest are all attackers iff at least k attacker scores beat every honest one
        let below = (0..n_a).filter(|_| rng.random::<f64>() < honest_min).count() as u64;
        below >= k
    });
    Ok(Estimate::from_counts(hits, trials))
}

/// Probability that `n_a` attackers displace all `k` honest outbound neighbors
/// of a node that made `l` requests to honest nodes among `n`.
///
/// Per trial: `n` honest and `n_a` attacker scores are drawn; the node's
/// requests went to the `l` smallest honest ones; the accepted set is the
/// `l`-th request plus `k-1` indices drawn without replacement from
/// `1..=l-1`. The attack succeeds iff the `k`-th smallest attacker score lies
/// below the smallest accepted honest score.
pub fn mc_outbound_takeover(
    n_a: u64,
    n: u64,
    l: u64,
    k: u64,
    trials: u64,
    seed: u64,
) -> Result<Estimate, AdversaryError> {
    if k < 2 || l < k || l > n || trials == 0 {
        return Err(AdversaryError::InvalidParameter(format!(
            "need 2 <= k <= L <= N and trials >= 1; got k={k} L={l} N={n}"
        )));
    }
    if n_a < k {
        return Ok(Estimate::from_counts(0, trials));
    }
    let (n_us, n_a_us, l_us, k_us) = (n as usize, n_a as usize, l as usize, k as usize);
    let hits = count_successes(trials, seed, |rng| {
        let mut honest: Vec<f64> = (0..n_us).map(|_| rng.random()).collect();
        let mut attackers: Vec<f64> = (0..n_a_us).map(|_| rng.random()).collect();
        // 1-based rank of the best accepted honest request
        let y = index::sample(rng, l_us - 1, k_us - 1).into_iter().min().expect("k >= 2") + 1;
        let (_, h_y, _) = honest.select_nth_unstable_by(y - 1, f64::total_cmp);
        let h_y = *h_y;
        let (_, a_k, _) = attackers.select_nth_unstable_by(k_us - 1, f64::total_cmp);
        *a_k < h_y
    });
    Ok(Estimate::from_counts(hits, trials))
}

/// Probability that `k` slots filled uniformly at random from `n` honest and
/// `n_a` attacker identities all go to attackers.
pub fn random_choice_eclipse_mc(n: u64, n_a: u64, k: u64, trials: u64, seed: u64) -> Result<Estimate, AdversaryError> {
    let total = n + n_a;
    if k == 0 || k > total || trials == 0 {
        return Err(AdversaryError::InvalidParameter(format!("need 1 <= k <= N + N_A, got k={k}")));
    }
    let hits = count_successes(trials, seed, |rng| {
        // indices below n_a are attackers
        index::sample(rng, total as usize, k as usize).into_iter().all(|i| (i as u64) < n_a)
    });
    Ok(Estimate::from_counts(hits, trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackStrategy {
    /// Every attacker identity requests the victim on every query tick.
    SpamInbound,
    /// Attackers run the honest protocol.
    ProtocolFollowing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub n_attackers: usize,
    pub strategy: AttackStrategy,
    /// Index of the victim among the honest nodes.
    pub victim: usize,
    pub trials: u64,
    /// Honest network; trial `t` runs with seed `sim.seed + t`.
    pub sim: SimConfig,
    /// First measurement tick.
    pub measure_from: Tick,
    /// Ticks between measurements.
    pub measure_every: Tick,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        if self.trials == 0 || self.measure_every == 0 {
            return Err(AdversaryError::InvalidParameter("trials and measure_every must be positive".into()));
        }
        if self.victim >= self.sim.nodes {
            return Err(AdversaryError::InvalidParameter(format!("victim {} out of range", self.victim)));
        }
        self.sim.validate()?;
        Ok(())
    }
}

/// Outcome of one simulated attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    /// First measurement tick at which the victim was eclipsed.
    pub time_to_eclipse: Option<Tick>,
    pub eclipsed_measurements: u64,
    pub measurements: u64,
    /// Mean fraction of the victim's `2k` slots held by attackers.
    pub attacker_slot_share: f64,
    /// Attacker requests received by the victim.
    pub attacker_requests: u64,
    /// Of those, the ones that passed verification and the θ-test.
    pub eligible_attacker_requests: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EclipseStats {
    pub trials: Vec<TrialOutcome>,
}

impl EclipseStats {
    /// Fraction of trials with the victim eclipsed at some measurement tick.
    pub fn eclipse_fraction(&self) -> f64 {
        let hit = self.trials.iter().filter(|t| t.time_to_eclipse.is_some()).count();
        hit as f64 / self.trials.len().max(1) as f64
    }

    /// Fraction of all measurement ticks at which the victim was eclipsed.
    pub fn eclipsed_measurement_fraction(&self) -> f64 {
        let (e, m) = self
            .trials
            .iter()
            .fold((0, 0), |(e, m), t| (e + t.eclipsed_measurements, m + t.measurements));
        if m == 0 {
            0.0
        } else {
            e as f64 / m as f64
        }
    }

    pub fn mean_slot_share(&self) -> f64 {
        self.trials.iter().map(|t| t.attacker_slot_share).sum::<f64>() / self.trials.len().max(1) as f64
    }

    pub fn times_to_eclipse(&self) -> Vec<Tick> {
        self.trials.iter().filter_map(|t| t.time_to_eclipse).collect()
    }

    /// Eligible attacker requests over all attacker requests at the victim.
    pub fn eligible_fraction(&self) -> f64 {
        let (e, r) = self.trials.iter().fold((0, 0), |(e, r), t| {
            (e + t.eligible_attacker_requests, r + t.attacker_requests)
        });
        if r == 0 {
            0.0
        } else {
            e as f64 / r as f64
        }
    }

    /// Eligible attacker requests per tick at the victim, averaged over trials.
    pub fn eligible_rate(&self, ticks: Tick) -> f64 {
        let total: u64 = self.trials.iter().map(|t| t.eligible_attacker_requests).sum();
        total as f64 / (ticks.max(1) as f64 * self.trials.len().max(1) as f64)
    }
}

fn run_trial(attack: &AttackConfig, seed: u64) -> Result<TrialOutcome, AdversaryError> {
    let sim_cfg = SimConfig { seed, ..attack.sim.clone() };
    let behavior = match attack.strategy {
        AttackStrategy::SpamInbound => AttackBehavior::SpamInbound { victim: attack.victim },
        AttackStrategy::ProtocolFollowing => AttackBehavior::ProtocolFollowing,
    };
    let mut sim = Simulation::with_attackers(sim_cfg, attack.n_attackers, behavior)?;
    let k = sim.config().k;
    let end = sim.config().max_ticks;
    let mut outcome = TrialOutcome {
        seed,
        time_to_eclipse: None,
        eclipsed_measurements: 0,
        measurements: 0,
        attacker_slot_share: 0.0,
        attacker_requests: 0,
        eligible_attacker_requests: 0,
    };
    let mut share_sum = 0.0;
    let mut tick = attack.measure_from;
    while tick < end {
        sim.run_until(tick + 1);
        let victim = sim.node(attack.victim);
        let held = victim
            .outbound()
            .iter()
            .chain(victim.inbound())
            .filter(|e| sim.is_attacker(&e.peer))
            .count();
        share_sum += held as f64 / (2 * k) as f64;
        outcome.measurements += 1;
        if held == 2 * k {
            outcome.eclipsed_measurements += 1;
            outcome.time_to_eclipse.get_or_insert(tick);
        }
        tick += attack.measure_every;
    }
    sim.run_until(end);
    let tally = sim.attacker_requests(attack.victim);
    outcome.attacker_requests = tally.received;
    outcome.eligible_attacker_requests = tally.eligible;
    if outcome.measurements > 0 {
        outcome.attacker_slot_share = share_sum / outcome.measurements as f64;
    }
    Ok(outcome)
}

/// Runs `attack.trials` independent simulations with attacker identities
/// added to the honest network, in parallel.
pub fn run_eclipse_simulation(attack: &AttackConfig) -> Result<EclipseStats, AdversaryError> {
    attack.validate()?;
    let trials = (0..attack.trials)
        .into_par_iter()
        .map(|t| run_trial(attack, attack.sim.seed.wrapping_add(t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EclipseStats { trials })
}

/// One row of a Monte-Carlo versus closed-form comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub model: &'static str,
    pub n_a: u64,
    pub n: Option<u64>,
    pub l: Option<u64>,
    pub k: u64,
    pub estimate: Estimate,
    /// `None` where the closed form is undefined for the parameters.
    pub closed_form: Option<f64>,
}

impl OracleRow {
    pub fn abs_diff(&self) -> Option<f64> {
        self.closed_form.map(|c| (self.estimate.p - c).abs())
    }
}

/// `model,N_A,N,L,k,trials,mc_estimate,std_err,closed_form,abs_diff`
pub fn write_oracle_csv<W: Write>(rows: &[OracleRow], out: W) -> io::Result<()> {
    let mut w = crate::simulator::metrics::csv_writer(out);
    w.write_record(["model", "N_A", "N", "L", "k", "trials", "mc_estimate", "std_err", "closed_form", "abs_diff"])?;
    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
    let real = |v: Option<f64>| v.map(|v| format!("{v:.8}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.model.to_string(),
            r.n_a.to_string(),
            opt(r.n),
            opt(r.l),
            r.k.to_string(),
            r.estimate.trials.to_string(),
            format!("{:.8}", r.estimate.p),
            format!("{:.8}", r.estimate.std_err),
            real(r.closed_form),
            real(r.abs_diff()),
        ])?;
    }
    w.flush()
}
