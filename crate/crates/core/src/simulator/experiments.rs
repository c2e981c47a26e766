//! Distribution of the smallest neighbor scores, sampled at salt updates.

use super::metrics::{inbound_cdf_rows, ks_distance, outbound_cdf_rows, CdfRow};
use super::{SimConfig, SimError, Simulation};

/// Samples collected after the first (warm-up) salt epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    pub nodes: usize,
    pub k: usize,
    /// Smallest inbound score right before each private salt update.
    pub inbound: Vec<f64>,
    /// Smallest outbound score right before each public salt update.
    pub outbound: Vec<f64>,
    /// `outbound` multiplied by the node count.
    pub outbound_scaled: Vec<f64>,
    /// Eligible requests received during each sampled inbound epoch.
    pub inbound_requests: Vec<u64>,
}

impl ScoreDistribution {
    /// `0.01, 0.02, ..., 0.50`
    pub fn default_inbound_grid() -> Vec<f64> {
        (1..=50).map(|i| i as f64 / 100.0).collect()
    }

    /// `0.0, 0.25, ..., 10.0` in scaled units.
    pub fn default_outbound_grid() -> Vec<f64> {
        (0..=40).map(|i| i as f64 / 4.0).collect()
    }

    pub fn inbound_rows(&self, grid: &[f64]) -> Vec<CdfRow> {
        inbound_cdf_rows(&self.inbound, self.k, grid)
    }

    pub fn outbound_rows(&self, grid: &[f64]) -> Vec<CdfRow> {
        outbound_cdf_rows(&self.outbound_scaled, self.k, grid)
    }

    /// Fraction of grid points where the empirical inbound CDF lies between
    /// the `L = k` and `L = 4k` curves, inclusive.
    pub fn inbound_band_fraction(&self, grid: &[f64]) -> f64 {
        let rows = self.inbound_rows(grid);
        if rows.is_empty() {
            return 0.0;
        }
        let inside = rows
            .iter()
            .filter(|r| r.analytic_l_eq_k <= r.empirical_cdf && r.empirical_cdf <= r.analytic_l_eq_4k)
            .count();
        inside as f64 / rows.len() as f64
    }

    /// Sup-norm distance between the scaled outbound CDFs of two runs.
    pub fn scaled_outbound_distance(&self, other: &ScoreDistribution) -> f64 {
        ks_distance(&self.outbound_scaled, &other.outbound_scaled)
    }

    pub fn mean_inbound_requests(&self) -> f64 {
        if self.inbound_requests.is_empty() {
            return 0.0;
        }
        self.inbound_requests.iter().sum::<u64>() as f64 / self.inbound_requests.len() as f64
    }
}

/// Runs `epochs + 1` salt periods and keeps the samples taken after the first.
/// `config.max_ticks` is ignored.
pub fn score_distribution_experiment(config: &SimConfig, epochs: u64) -> Result<ScoreDistribution, SimError> {
    if epochs == 0 {
        return Err(SimError::InvalidConfig("need at least one sampled epoch".into()));
    }
    let mut config = config.clone();
    let warmup = config.salt_interval;
    config.max_ticks = warmup * (epochs + 1);
    let mut sim = Simulation::new(config.clone())?;
    sim.run_to_end();
    let m = sim.metrics();
    let inbound: Vec<_> = m.inbound_minima.iter().filter(|s| s.tick >= warmup).collect();
    let outbound: Vec<_> = m.outbound_minima.iter().filter(|s| s.tick >= warmup).collect();
    Ok(ScoreDistribution {
        nodes: config.nodes,
        k: config.k,
        inbound: inbound.iter().map(|s| s.min_score.value()).collect(),
        inbound_requests: inbound.iter().map(|s| s.requests).collect(),
        outbound: outbound.iter().map(|s| s.min_score.value()).collect(),
        outbound_scaled: outbound.iter().map(|s| s.scaled).collect(),
    })
}
