//! Subcommand implementations. Each returns the process exit code.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use autopeer_core::adversary::{
    mc_inbound_takeover, mc_outbound_takeover, random_choice_eclipse_mc, run_eclipse_simulation, write_oracle_csv,
    AttackConfig, AttackStrategy, OracleRow,
};
use autopeer_core::analytics::{
    eclipse_lower_bound, finite_outbound_cdf, inbound_takeover_prob, inbound_takeover_prob_with_theta,
    limiting_outbound_cdf, min_order_stat_cdf, order_stat_mean, order_stat_pdf, outbound_takeover_prob,
    random_choice_eclipse_prob,
};
use autopeer_core::simulator::metrics::write_cdf_csv;
use autopeer_core::simulator::{score_distribution_experiment, write_topology_csv, ScoreDistribution, Simulation};
use autopeer_core::verify::{run_suite, VerifyOptions};

use crate::args::{
    AnalyticsArgs, AttackArgs, EclipseArgs, FormulaArg, ModelArg, ScoresArgs, SimArgs, SimulateArgs, StrategyArg,
    VerifyArgs,
};
use crate::manifest::Manifest;
use crate::UsageError;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Creates `dir/name`, hands a buffered writer to `write`, and records the artifact.
fn artifact<F>(dir: &Path, name: &str, manifest: &mut Manifest, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
    manifest.artifacts.push(name.to_string());
    Ok(())
}

fn validated(sim: &SimArgs) -> Result<autopeer_core::simulator::SimConfig> {
    let config = sim.config();
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}

pub fn simulate(args: &SimulateArgs, mut manifest: Manifest) -> Result<i32> {
    let config = validated(&args.sim)?;
    let snapshot_at = args.topology_at.unwrap_or(config.max_ticks);
    if snapshot_at > config.max_ticks {
        return Err(UsageError(format!("--topology-at {snapshot_at} is past --ticks {}", config.max_ticks)).into());
    }
    create_dir(&args.out)?;
    let mut sim = Simulation::new(config.clone())?;
    sim.run_until(snapshot_at);
    let edges = sim.snapshot_topology();
    sim.run_to_end();
    let metrics = sim.into_metrics();

    artifact(&args.out, "metrics.csv", &mut manifest, |w| metrics.write_tick_csv(w))?;
    artifact(&args.out, "epochs.csv", &mut manifest, |w| metrics.write_epoch_csv(w))?;
    artifact(&args.out, "topology.csv", &mut manifest, |w| write_topology_csv(&edges, w))?;
    manifest.write(&args.out)?;

    let from = args.warmup.min(config.max_ticks);
    println!("time-averaged neighbors after tick {from}: {:.4}", metrics.time_avg_neighbors(from));
    println!(
        "ticks with >= 90% of nodes at 2k neighbors: {:.4}",
        metrics.fraction_ticks_with_saturated(from, config.nodes * 9 / 10)
    );
    println!("drops per tick: {:.4}", metrics.drops_per_tick(from));
    Ok(0)
}

pub fn scores(args: &ScoresArgs, mut manifest: Manifest) -> Result<i32> {
    let config = validated(&args.sim)?;
    if args.epochs == 0 {
        return Err(UsageError("--epochs must be at least 1".into()).into());
    }
    create_dir(&args.out)?;
    let dist = score_distribution_experiment(&config, args.epochs)?;
    let inbound_grid = ScoreDistribution::default_inbound_grid();
    let outbound_grid = ScoreDistribution::default_outbound_grid();
    artifact(&args.out, "inbound_cdf.csv", &mut manifest, |w| write_cdf_csv(&dist.inbound_rows(&inbound_grid), w))?;
    artifact(&args.out, "outbound_cdf.csv", &mut manifest, |w| write_cdf_csv(&dist.outbound_rows(&outbound_grid), w))?;
    manifest.write(&args.out)?;
    println!("inbound samples: {}, outbound samples: {}", dist.inbound.len(), dist.outbound.len());
    println!("mean eligible requests per inbound epoch (L): {:.2}", dist.mean_inbound_requests());
    println!("inbound CDF inside the L=k..4k band: {:.3}", dist.inbound_band_fraction(&inbound_grid));
    Ok(0)
}

pub fn eclipse(args: &EclipseArgs, mut manifest: Manifest) -> Result<i32> {
    if args.trials == 0 {
        return Err(UsageError("--trials must be positive".into()).into());
    }
    let mut rows = Vec::new();
    let mut point = 0u64;
    let mut next_seed = || {
        point += 1;
        args.seed.wrapping_add(point.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    };
    let usage = |e: autopeer_core::adversary::AdversaryError| UsageError(e.to_string());
    for &k in &args.k {
        for &n_a in &args.n_attackers {
            match args.model {
                ModelArg::Inbound => {
                    for &l in &args.requests {
                        let estimate = mc_inbound_takeover(n_a, l, k, args.trials, next_seed()).map_err(usage)?;
                        let closed_form = Some(inbound_takeover_prob(n_a, l, k));
                        rows.push(OracleRow { model: "inbound", n_a, n: None, l: Some(l), k, estimate, closed_form });
                    }
                }
                ModelArg::Outbound => {
                    for &n in &args.honest {
                        for &l in &args.requests {
                            let estimate =
                                mc_outbound_takeover(n_a, n, l, k, args.trials, next_seed()).map_err(usage)?;
                            let closed_form = outbound_takeover_prob(n_a, n, l, k).ok();
                            rows.push(OracleRow { model: "outbound", n_a, n: Some(n), l: Some(l), k, estimate, closed_form });
                        }
                    }
                }
                ModelArg::RandomChoice => {
                    for &n in &args.honest {
                        let estimate = random_choice_eclipse_mc(n, n_a, k, args.trials, next_seed()).map_err(usage)?;
                        let closed_form = Some(random_choice_eclipse_prob(n, n_a, k));
                        rows.push(OracleRow { model: "random-choice", n_a, n: Some(n), l: None, k, estimate, closed_form });
                    }
                }
            }
        }
    }
    create_dir(&args.out)?;
    artifact(&args.out, "eclipse.csv", &mut manifest, |w| write_oracle_csv(&rows, w))?;
    manifest.write(&args.out)?;
    println!("{} parameter points written", rows.len());
    Ok(0)
}

pub fn attack(args: &AttackArgs, mut manifest: Manifest) -> Result<i32> {
    let sim = validated(&args.sim)?;
    let attack = AttackConfig {
        n_attackers: args.n_attackers,
        strategy: match args.strategy {
            StrategyArg::Spam => AttackStrategy::SpamInbound,
            StrategyArg::ProtocolFollowing => AttackStrategy::ProtocolFollowing,
        },
        victim: args.victim,
        trials: args.trials,
        measure_from: args.measure_from.unwrap_or(sim.salt_interval),
        measure_every: args.measure_every,
        sim,
    };
    attack.validate().map_err(|e| UsageError(e.to_string()))?;
    let stats = run_eclipse_simulation(&attack)?;
    create_dir(&args.out)?;
    artifact(&args.out, "attack.csv", &mut manifest, |w| {
        writeln!(
            w,
            "trial,seed,time_to_eclipse,eclipsed_measurements,measurements,attacker_slot_share,attacker_requests,eligible_attacker_requests"
        )?;
        for (i, t) in stats.trials.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{},{:.6},{},{}",
                t.seed,
                t.time_to_eclipse.map(|v| v.to_string()).unwrap_or_default(),
                t.eclipsed_measurements,
                t.measurements,
                t.attacker_slot_share,
                t.attacker_requests,
                t.eligible_attacker_requests
            )?;
        }
        Ok(())
    })?;
    manifest.write(&args.out)?;
    println!("trials with an eclipse: {:.3}", stats.eclipse_fraction());
    println!("mean attacker share of victim slots: {:.4}", stats.mean_slot_share());
    println!("eligible fraction of attacker requests: {:.4}", stats.eligible_fraction());
    Ok(0)
}

/// Grid values of integer parameters are whole numbers stored as `f64`.
fn u(v: f64) -> u64 {
    v as u64
}

/// Formula parameters in column order, and an evaluator over one grid point.
type Evaluator = fn(&[f64]) -> Option<f64>;

fn formula_table(args: &AnalyticsArgs) -> (Vec<(&'static str, Vec<f64>)>, Evaluator) {
    let ints = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    match args.formula {
        FormulaArg::OrderStatPdf => (
            vec![("r", ints(&args.r)), ("L", ints(&args.l)), ("x", args.x.clone())],
            |p| order_stat_pdf(u(p[0]), u(p[1]), p[2]).ok(),
        ),
        FormulaArg::OrderStatMean => {
            (vec![("r", ints(&args.r)), ("L", ints(&args.l))], |p| order_stat_mean(u(p[0]), u(p[1])).ok())
        }
        FormulaArg::MinCdf => (vec![("L", ints(&args.l)), ("x", args.x.clone())], |p| Some(min_order_stat_cdf(u(p[0]), p[1]))),
        FormulaArg::Inbound => (
            vec![("N_A", ints(&args.n_attackers)), ("L", ints(&args.l)), ("k", ints(&args.k))],
            |p| Some(inbound_takeover_prob(u(p[0]), u(p[1]), u(p[2]))),
        ),
        FormulaArg::InboundTheta => (
            vec![("N_A", ints(&args.n_attackers)), ("L", ints(&args.l)), ("k", ints(&args.k)), ("theta", args.theta.clone())],
            |p| inbound_takeover_prob_with_theta(u(p[0]), u(p[1]), u(p[2]), p[3]).ok(),
        ),
        FormulaArg::Outbound => (
            vec![("N_A", ints(&args.n_attackers)), ("N", ints(&args.n)), ("L", ints(&args.l)), ("k", ints(&args.k))],
            |p| outbound_takeover_prob(u(p[0]), u(p[1]), u(p[2]), u(p[3])).ok(),
        ),
        FormulaArg::FiniteCdf => (
            vec![("x", args.x.clone()), ("N", ints(&args.n)), ("k", ints(&args.k)), ("L", ints(&args.l))],
            |p| finite_outbound_cdf(p[0], u(p[1]), u(p[2]), u(p[3])).ok(),
        ),
        FormulaArg::LimitingCdf => (
            vec![("x_bar", args.x_bar.clone()), ("k", ints(&args.k)), ("L", ints(&args.l))],
            |p| limiting_outbound_cdf(p[0], u(p[1]), u(p[2])).ok(),
        ),
        FormulaArg::EclipseBound => (
            vec![("a", args.a.clone()), ("k", ints(&args.k))],
            |p| u32::try_from(u(p[1])).ok().and_then(|k| eclipse_lower_bound(p[0], k).ok()),
        ),
        FormulaArg::RandomChoice => (
            vec![("N", ints(&args.n)), ("N_A", ints(&args.n_attackers)), ("k", ints(&args.k))],
            |p| Some(random_choice_eclipse_prob(u(p[0]), u(p[1]), u(p[2]))),
        ),
    }
}

/// Cartesian product, last parameter varying fastest.
fn grid(params: &[Vec<f64>]) -> Vec<Vec<f64>> {
    params.iter().fold(vec![Vec::new()], |acc, values| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

pub fn analytics(args: &AnalyticsArgs, mut manifest: Manifest) -> Result<i32> {
    let (params, eval) = formula_table(args);
    let values: Vec<Vec<f64>> = params.iter().map(|(_, v)| v.clone()).collect();
    create_dir(&args.out)?;
    artifact(&args.out, "analytics.csv", &mut manifest, |w| {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header: Vec<&str> = params.iter().map(|(name, _)| *name).collect();
        header.push("value");
        csv.write_record(&header)?;
        for point in grid(&values) {
            let mut record: Vec<String> = point.iter().map(f64::to_string).collect();
            // undefined points keep an empty value cell
            record.push(eval(&point).map(|v| v.to_string()).unwrap_or_default());
            csv.write_record(&record)?;
        }
        csv.flush()
    })?;
    manifest.write(&args.out)?;
    Ok(0)
}

pub fn verify(args: &VerifyArgs, mut manifest: Manifest) -> Result<i32> {
    if args.trials == 0 || args.sigmas <= 0.0 {
        return Err(UsageError("--trials and --sigmas must be positive".into()).into());
    }
    let options = VerifyOptions {
        trials: args.trials,
        seed: args.seed,
        sigmas: args.sigmas,
        closed_form_scale: args.perturb.unwrap_or(1.0),
    };
    let report = run_suite(&options);
    report.write_to(io::stdout().lock())?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        artifact(dir, "verify_report.txt", &mut manifest, |w| report.write_to(w))?;
        manifest.write(dir)?;
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_a_cartesian_product() {
        let g = grid(&[vec![1.0, 2.0], vec![10.0, 20.0, 30.0]]);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], [1.0, 10.0]);
        assert_eq!(g[5], [2.0, 30.0]);
        assert!(grid(&[vec![1.0], vec![]]).is_empty());
    }
}
