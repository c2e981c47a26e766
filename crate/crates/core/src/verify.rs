//! Oracle-equivalence suite: Monte-Carlo estimates, exhaustive enumerations
//! and quadrature checked against the closed forms, plus digest vectors.

use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};

use crate::adversary::{mc_inbound_takeover, mc_outbound_takeover, random_choice_eclipse_mc, Estimate};
use crate::analytics::{
    eclipse_lower_bound, finite_outbound_cdf, inbound_takeover_prob, limiting_outbound_cdf, min_order_stat_cdf,
    order_stat_mean, order_stat_pdf, outbound_takeover_prob, random_choice_eclipse_prob,
};
use crate::identity::{chain_create, digest, verify_salt, HashChain, NodeId, Salt};
use crate::scoring::{outbound_score, theta_test};
use crate::SimRng;

/// SHA-256 of `"abc"`.
pub const SHA256_ABC: &str = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
/// SHA-256 of 32 zero bytes.
pub const SHA256_ZERO32: &str = "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925";
/// SHA-256 of the empty string.
pub const SHA256_EMPTY: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
/// SHA-256 of the two-block FIPS message.
pub const SHA256_TWO_BLOCK: &str = "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1";
const TWO_BLOCK_MSG: &[u8] = b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";

/// Composite Simpson rule on `[a, b]` with `intervals` rounded up to even.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = (intervals + intervals % 2).max(2);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Counts rank assignments of `n_a` attacker and `l` honest scores in which
/// the `k` smallest all belong to the attacker: `(hits, assignments)`.
pub fn enumerate_inbound(n_a: u32, l: u32, k: u32) -> (u64, u64) {
    let total = n_a + l;
    assert!(total < 32, "enumeration limited to 31 scores");
    let (mut hits, mut all) = (0, 0);
    for mask in 0u32..(1 << total) {
        if mask.count_ones() != n_a {
            continue;
        }
        all += 1;
        // bit i set: rank i is held by the attacker
        if (0..k).all(|i| mask & (1 << i) != 0) {
            hits += 1;
        }
    }
    (hits, all)
}

/// Outbound takeover probability by enumerating every rank assignment of
/// `n_a` attacker and `n` honest scores and every choice of accepted requests.
pub fn enumerate_outbound(n_a: u32, n: u32, l: u32, k: u32) -> f64 {
    let total = n_a + n;
    assert!(total < 32 && k >= 2 && l >= k && l <= n, "parameters outside the enumerable range");
    let positions: Vec<u32> = (1..l).collect();
    let mut num = 0.0;
    let mut all = 0.0;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() != n_a {
            continue;
        }
        all += 1.0;
        let honest: Vec<u32> = (0..total).filter(|i| mask & (1 << i) == 0).collect();
        let attackers: Vec<u32> = (0..total).filter(|i| mask & (1 << i) != 0).collect();
        let kth_attacker = attackers[(k - 1) as usize];
        // accepted set: request L plus k-1 of requests 1..L-1
        let mut hit = 0.0;
        let mut count = 0.0;
        for sub in 0u32..(1 << positions.len()) {
            if sub.count_ones() != k - 1 {
                continue;
            }
            count += 1.0;
            let y = (0..positions.len()).find(|i| sub & (1 << i) != 0).map(|i| positions[i]).unwrap_or(l);
            if kth_attacker < honest[(y - 1) as usize] {
                hit += 1.0;
            }
        }
        num += hit / count;
    }
    num / all
}

/// Fraction of `samples` random requester identities passing the θ-test
/// against one fixed target under one public salt.
pub fn theta_pass_fraction(theta: f64, samples: u64, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let target = NodeId::random(&mut rng);
    let salt = Salt::public(rng.random());
    let passed = (0..samples)
        .filter(|_| {
            let requester = NodeId::random(&mut rng);
            outbound_score(&requester, &target, &salt).is_ok_and(|s| theta_test(s, theta))
        })
        .count();
    passed as f64 / samples as f64
}

/// Mean of the minimum of `l` uniforms over `samples` draws.
pub fn empirical_min_mean(l: u64, samples: u64, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let total: f64 = (0..samples)
        .map(|_| (0..l).map(|_| rng.random::<f64>()).fold(f64::INFINITY, f64::min))
        .sum();
    total / samples as f64
}

/// Outcome of the chain property over `chains` random chains: every honest
/// gap verifies and every single-bit tamper of the claimed salt fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainPropertyTally {
    pub honest_checks: u64,
    pub honest_failures: u64,
    pub tamper_checks: u64,
    pub tamper_accepted: u64,
}

pub fn chain_property(chains: u64, length: usize, max_updates: u32, seed: u64) -> ChainPropertyTally {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut t = ChainPropertyTally { honest_checks: 0, honest_failures: 0, tamper_checks: 0, tamper_accepted: 0 };
    for _ in 0..chains {
        let chain = HashChain::random(&mut rng, length).expect("length >= 2");
        let c = rng.random_range(0..length - 1);
        let gap = rng.random_range(0..=(length - 1 - c).min(max_updates as usize));
        let claimed = Salt::public(*chain.element(c).expect("in range"));
        let known = Salt::public(*chain.element(c + gap).expect("in range"));
        t.honest_checks += 1;
        if verify_salt(&claimed, &known, gap as u32, max_updates) != Ok(true) {
            t.honest_failures += 1;
        }
        let bit = rng.random_range(0..256);
        let mut bytes = *claimed.as_bytes();
        bytes[bit / 8] ^= 1 << (bit % 8);
        t.tamper_checks += 1;
        if verify_salt(&Salt::public(bytes), &known, gap as u32, max_updates) != Ok(false) {
            t.tamper_accepted += 1;
        }
    }
    t
}

/// Suite parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Monte-Carlo trials per parameter point.
    pub trials: u64,
    pub seed: u64,
    /// Allowed deviation of an estimate, in standard errors.
    pub sigmas: f64,
    /// Scales every closed-form takeover probability by this factor before
    /// comparison. `1.0` checks the real formulas; anything else is a fixture
    /// that the suite must catch.
    pub closed_form_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { trials: 200_000, seed: 0, sigmas: 3.0, closed_form_scale: 1.0 }
    }
}

/// One comparison with its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub reference: f64,
    /// Human-readable tolerance, e.g. `abs <= 1e-8` or `3.0 sigma`.
    pub tolerance: String,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured={:.8} reference={:.8} tolerance={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.reference,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for c in &self.checks {
            writeln!(out, "{c}")?;
        }
        let failed = self.failures().count();
        writeln!(out, "{} checks, {} failed", self.checks.len(), failed)
    }

    fn exact(&mut self, name: impl Into<String>, passed: bool) {
        let v = if passed { 1.0 } else { 0.0 };
        self.checks.push(CheckResult { name: name.into(), measured: v, reference: 1.0, tolerance: "exact".into(), passed });
    }

    fn abs(&mut self, name: impl Into<String>, measured: f64, reference: f64, tol: f64) {
        self.checks.push(CheckResult {
            name: name.into(),
            measured,
            reference,
            tolerance: format!("abs <= {tol:e}"),
            passed: (measured - reference).abs() <= tol,
        });
    }

    fn sigma(&mut self, name: impl Into<String>, estimate: &Estimate, reference: f64, sigmas: f64) {
        self.checks.push(CheckResult {
            name: name.into(),
            measured: estimate.p,
            reference,
            tolerance: format!("{sigmas} sigma (se {:.2e}, {} trials)", estimate.std_err_under(reference), estimate.trials),
            passed: estimate.agrees_with(reference, sigmas),
        });
    }
}

fn hex_digest_matches(data: &[u8], expected: &str) -> bool {
    digest(data).iter().map(|b| format!("{b:02x}")).collect::<String>() == expected
}

/// Runs every check. Monte-Carlo points use independent seeds derived from
/// `options.seed`.
pub fn run_suite(options: &VerifyOptions) -> VerifyReport {
    let mut r = VerifyReport::default();
    let scale = options.closed_form_scale;
    let trials = options.trials;
    let mut next_seed = {
        let mut s = options.seed;
        move || {
            s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
            s
        }
    };

    r.exact("sha256 abc", hex_digest_matches(b"abc", SHA256_ABC));
    r.exact("sha256 empty", hex_digest_matches(b"", SHA256_EMPTY));
    r.exact("sha256 two-block", hex_digest_matches(TWO_BLOCK_MSG, SHA256_TWO_BLOCK));
    r.exact("sha256 32 zero bytes", hex_digest_matches(&[0u8; 32], SHA256_ZERO32));
    let chain = chain_create([0u8; 32], 2).expect("valid length");
    r.exact("chain of zero seed publishes H(0^32)", hex_digest_matches(&[0u8; 32], SHA256_ZERO32) && chain.current().as_bytes() == &digest(&[0u8; 32]));
    let tally = chain_property(1000, 64, 16, next_seed());
    r.exact("chain property: honest advance verifies", tally.honest_failures == 0);
    r.exact("chain property: single-bit tamper rejected", tally.tamper_accepted == 0);

    for (rank, l, mean) in [(1u64, 1u64, 0.5), (2, 3, 0.5), (1, 9, 0.1)] {
        r.abs(format!("order_stat_mean({rank},{l})"), order_stat_mean(rank, l).unwrap_or(f64::NAN), mean, 1e-15);
    }
    r.abs("order_stat_pdf(1,9,0)", order_stat_pdf(1, 9, 0.0).unwrap_or(f64::NAN), 9.0, 1e-12);
    for l in [4u64, 9, 19] {
        r.abs(format!("mean of min of {l} uniforms"), empirical_min_mean(l, 100_000, next_seed()), 1.0 / (l + 1) as f64, 0.005);
    }
    let mut worst = 0.0f64;
    for l in [1u64, 5, 9, 19, 50, 100] {
        for x in [0.01, 0.1, 0.37, 0.8, 1.0] {
            let q = simpson(|t| order_stat_pdf(1, l, t).unwrap_or(f64::NAN), 0.0, x, 4000);
            worst = worst.max((q - min_order_stat_cdf(l, x)).abs());
        }
    }
    r.abs("integral of f_(1,L) vs 1-(1-x)^L, L <= 100", worst, 0.0, 1e-8);

    let (hits, all) = enumerate_inbound(4, 4, 4);
    r.abs("inbound (4,4,4) enumeration vs closed form", hits as f64 / all as f64, scale * inbound_takeover_prob(4, 4, 4), 1e-15);
    r.abs("inbound (4,4,4) closed form = 1/70", scale * inbound_takeover_prob(4, 4, 4), 1.0 / 70.0, 1e-15);
    for n_a in [5u64, 20, 80] {
        for l in [5u64, 20, 80] {
            let est = mc_inbound_takeover(n_a, l, 4, trials, next_seed()).expect("valid parameters");
            r.sigma(format!("inbound MC N_A={n_a} L={l} k=4"), &est, scale * inbound_takeover_prob(n_a, l, 4), options.sigmas);
        }
    }

    let closed = |n_a, n, l, k| scale * outbound_takeover_prob(n_a, n, l, k).unwrap_or(f64::NAN);
    r.abs("outbound (2,2,2,2) enumeration = 1/6", enumerate_outbound(2, 2, 2, 2), 1.0 / 6.0, 1e-15);
    r.abs("outbound (2,2,2,2) closed form = 1/6", closed(2, 2, 2, 2), 1.0 / 6.0, 1e-14);
    r.abs("outbound (4,5,4,3) enumeration vs closed form", enumerate_outbound(4, 5, 4, 3), closed(4, 5, 4, 3), 1e-12);
    for (n_a, n, l, k) in [(20u64, 50u64, 10u64, 4u64), (2, 2, 2, 2)] {
        let est = mc_outbound_takeover(n_a, n, l, k, trials, next_seed()).expect("valid parameters");
        r.sigma(format!("outbound MC N_A={n_a} N={n} L={l} k={k}"), &est, closed(n_a, n, l, k), options.sigmas);
    }

    let n = 10_000u64;
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let x_bar = i as f64 * 0.1;
        let finite = finite_outbound_cdf(x_bar / n as f64, n, 4, 16).unwrap_or(f64::NAN);
        let limit = limiting_outbound_cdf(x_bar, 4, 16).unwrap_or(f64::NAN);
        worst = worst.max((finite - limit).abs());
    }
    r.abs("finite vs limiting outbound CDF, N=1e4, k=4, L=16", worst, 0.0, 1e-3);

    let hyper = random_choice_eclipse_prob(1000, 500, 4);
    let bound = eclipse_lower_bound(0.5, 4).unwrap_or(f64::NAN);
    r.checks.push(CheckResult {
        name: "hypergeometric eclipse N=1000 a=0.5 k=4 vs (a/(1+a))^4".into(),
        measured: hyper,
        reference: bound,
        tolerance: "rel <= 0.1".into(),
        passed: ((hyper - bound) / bound).abs() <= 0.1,
    });
    let est = random_choice_eclipse_mc(1000, 500, 4, trials, next_seed()).expect("valid parameters");
    r.sigma("random-choice eclipse MC N=1000 N_A=500 k=4", &est, random_choice_eclipse_prob(1000, 500, 4), options.sigmas);

    let pass = theta_pass_fraction(0.1, 100_000, next_seed());
    r.checks.push(CheckResult {
        name: "theta-test pass rate, theta=0.1".into(),
        measured: pass,
        reference: 0.1,
        tolerance: "in [0.097, 0.103]".into(),
        passed: (0.097..=0.103).contains(&pass),
    });
    r
}
