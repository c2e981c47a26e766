//! Per-tick topology metrics, per-epoch score minima, and CSV writers.

use std::io::{self, Write};

use crate::analytics::{limiting_outbound_cdf, min_order_stat_cdf};
use crate::protocol::{Direction, NodeCounters};
use crate::scoring::Score;
use crate::{NodeId, Tick};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub tick: Tick,
    /// Mean of `|outbound| + |inbound|` over honest nodes.
    pub avg_neighbors: f64,
    /// Honest nodes holding all `2k` slots.
    pub nodes_with_2k: usize,
    /// Drop messages sent during this tick.
    pub drops: u64,
    /// Salt updates (public and private) applied during this tick.
    pub salt_updates: u64,
}

/// Smallest neighbor score of one node, sampled right before a salt update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSample {
    pub node: usize,
    pub tick: Tick,
    pub direction: Direction,
    pub min_score: Score,
    /// `min_score · N` with `N` the honest node count.
    pub scaled: f64,
    /// Eligible requests received (inbound) or requests sent (outbound) during the epoch.
    pub requests: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    pub ticks: Vec<TickRecord>,
    pub inbound_minima: Vec<EpochSample>,
    pub outbound_minima: Vec<EpochSample>,
    /// Epoch boundaries where the node had no neighbor in that direction.
    pub empty_epoch_samples: u64,
    /// Counters summed over honest nodes.
    pub totals: NodeCounters,
    pub malformed_messages: u64,
}

impl MetricsSeries {
    /// Mean `avg_neighbors` over ticks `>= from`.
    pub fn time_avg_neighbors(&self, from: Tick) -> f64 {
        mean(self.ticks.iter().filter(|r| r.tick >= from).map(|r| r.avg_neighbors))
    }

    /// Mean drops per tick over ticks `>= from`.
    pub fn drops_per_tick(&self, from: Tick) -> f64 {
        mean(self.ticks.iter().filter(|r| r.tick >= from).map(|r| r.drops as f64))
    }

    /// Fraction of ticks `>= from` with at least `threshold` saturated nodes.
    pub fn fraction_ticks_with_saturated(&self, from: Tick, threshold: usize) -> f64 {
        mean(
            self.ticks
                .iter()
                .filter(|r| r.tick >= from)
                .map(|r| if r.nodes_with_2k >= threshold { 1.0 } else { 0.0 }),
        )
    }

    pub fn max_salt_updates_per_tick(&self) -> u64 {
        self.ticks.iter().map(|r| r.salt_updates).max().unwrap_or(0)
    }

    /// `tick,avg_neighbors,nodes_with_2k,drops`
    pub fn write_tick_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["tick", "avg_neighbors", "nodes_with_2k", "drops"])?;
        for r in &self.ticks {
            w.write_record([
                r.tick.to_string(),
                format!("{:.6}", r.avg_neighbors),
                r.nodes_with_2k.to_string(),
                r.drops.to_string(),
            ])?;
        }
        w.flush()
    }

    /// One row per epoch sample: `node,tick,direction,min_score,scaled,requests`.
    pub fn write_epoch_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["node", "tick", "direction", "min_score", "scaled", "requests"])?;
        let mut all: Vec<&EpochSample> = self.inbound_minima.iter().chain(&self.outbound_minima).collect();
        all.sort_by_key(|s| (s.tick, s.node, s.direction));
        for s in all {
            let dir = match s.direction {
                Direction::Inbound => "inbound",
                Direction::Outbound => "outbound",
            };
            w.write_record([
                s.node.to_string(),
                s.tick.to_string(),
                dir.to_string(),
                format!("{:.12}", s.min_score.value()),
                format!("{:.9}", s.scaled),
                s.requests.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Tab-free, LF-terminated CSV.
pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// One directed neighbor relation as seen by its owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub owner: NodeId,
    pub peer: NodeId,
    pub direction: Direction,
    pub score: Score,
}

/// `owner,peer,direction,score` with full hex ids and the score as a fraction.
pub fn write_topology_csv<W: Write>(edges: &[Edge], out: W) -> io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["owner", "peer", "direction", "score"])?;
    for e in edges {
        let dir = match e.direction {
            Direction::Inbound => "inbound",
            Direction::Outbound => "outbound",
        };
        w.write_record([e.owner.to_string(), e.peer.to_string(), dir.to_string(), format!("{:.12}", e.score.value())])?;
    }
    w.flush()
}

/// Empirical CDF of `samples` evaluated at `x`: fraction of samples `<= x`.
pub fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter()
        .chain(&b)
        .map(|&x| (empirical_cdf(&a, x) - empirical_cdf(&b, x)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfRow {
    pub score: f64,
    pub empirical_cdf: f64,
    pub analytic_l_eq_k: f64,
    pub analytic_l_eq_4k: f64,
}

/// Empirical CDF rows paired with `1-(1-x)^L` for `L = k` and `L = 4k`.
pub fn inbound_cdf_rows(samples: &[f64], k: usize, grid: &[f64]) -> Vec<CdfRow> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&x| CdfRow {
            score: x,
            empirical_cdf: empirical_cdf(&sorted, x),
            analytic_l_eq_k: min_order_stat_cdf(k as u64, x),
            analytic_l_eq_4k: min_order_stat_cdf(4 * k as u64, x),
        })
        .collect()
}

/// Empirical CDF of scaled scores paired with `1 - exp(-x̄ k/L)` for `L = k, 4k`.
pub fn outbound_cdf_rows(scaled_samples: &[f64], k: usize, grid: &[f64]) -> Vec<CdfRow> {
    let mut sorted = scaled_samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = k as u64;
    grid.iter()
        .map(|&x| CdfRow {
            score: x,
            empirical_cdf: empirical_cdf(&sorted, x),
            analytic_l_eq_k: limiting_outbound_cdf(x, k, k).expect("k >= 1"),
            analytic_l_eq_4k: limiting_outbound_cdf(x, k, 4 * k).expect("k >= 1"),
        })
        .collect()
}

/// `score,empirical_cdf,analytic_L_eq_k,analytic_L_eq_4k`
pub fn write_cdf_csv<W: Write>(rows: &[CdfRow], out: W) -> io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["score", "empirical_cdf", "analytic_L_eq_k", "analytic_L_eq_4k"])?;
    for r in rows {
        w.write_record([
            format!("{:.6}", r.score),
            format!("{:.6}", r.empirical_cdf),
            format!("{:.6}", r.analytic_l_eq_k),
            format!("{:.6}", r.analytic_l_eq_4k),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_cdf_steps() {
        let s = [0.1, 0.2, 0.2, 0.9];
        assert_eq!(empirical_cdf(&s, 0.05), 0.0);
        assert_eq!(empirical_cdf(&s, 0.2), 0.75);
        assert_eq!(empirical_cdf(&s, 1.0), 1.0);
        assert_eq!(empirical_cdf(&[], 0.5), 0.0);
    }

    #[test]
    fn ks_of_identical_and_disjoint() {
        let a = [0.1, 0.2, 0.3];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&a, &[0.7, 0.8]), 1.0);
    }

    #[test]
    fn cdf_rows_are_monotone_probabilities() {
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37) % 1.0).collect();
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let inbound = inbound_cdf_rows(&samples, 4, &grid);
        let outbound = outbound_cdf_rows(&samples, 4, &grid);
        for rows in [&inbound, &outbound] {
            for w in rows.windows(2) {
                assert!(w[0].empirical_cdf <= w[1].empirical_cdf);
                assert!(w[0].analytic_l_eq_k <= w[1].analytic_l_eq_k);
            }
            for r in rows.iter() {
                for v in [r.empirical_cdf, r.analytic_l_eq_k, r.analytic_l_eq_4k] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
        // more competing requests push the smallest inbound score down
        assert!(inbound.iter().all(|r| r.analytic_l_eq_4k >= r.analytic_l_eq_k));
        assert!(outbound.iter().all(|r| r.analytic_l_eq_4k <= r.analytic_l_eq_k));
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        MetricsSeries::default().write_tick_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tick,avg_neighbors,nodes_with_2k,drops\n");
        let mut buf = Vec::new();
        write_cdf_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "score,empirical_cdf,analytic_L_eq_k,analytic_L_eq_4k\n");
    }
}
