//! Command-line surface for the pool simulation laboratory.

use clap::{Parser, Subcommand};
use poolsim::game::{calibrate_mfg, calibrate_nplayer, mape, r_score, wasserstein1};
use poolsim::harness::{
    detect_sandwich_attacks, emit_reports, load_pool_snapshot, load_transaction_records,
    run_scenario, ScenarioConfig,
};
use poolsim::lp::{CrnMode, SimContext};
use poolsim::rng::derive_seed;
use poolsim::stochastic::{
    fit_joint_density, synthetic_swap_samples, ArrivalModel, MarketModel, SyntheticSwapParams,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "poolsim",
    about = "Concentrated-liquidity pool simulation laboratory",
    version
)]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config end to end and emit reports.
    Simulate { config: PathBuf },
    /// Calibrate a type distribution against the configured snapshot.
    Calibrate {
        config: PathBuf,
        /// Use the N-player procedure with this many players instead of
        /// the mean-field one.
        #[arg(long)]
        n_players: Option<usize>,
    },
    /// Scan a transaction-record file for sandwich attacks.
    Detect { records: PathBuf },
    /// Print the attack thresholds for a pool snapshot.
    Thresholds {
        snapshot: PathBuf,
        /// Bot liquidity in pool units.
        #[arg(long, short = 'L')]
        liquidity: f64,
        /// Gas cost per attack in token B.
        #[arg(long, short = 'G', default_value_t = 20.0)]
        gas: f64,
        /// Fee rate override (defaults to the snapshot's).
        #[arg(long)]
        gamma: Option<f64>,
        /// Market rate (defaults to the snapshot's pool rate).
        #[arg(long)]
        market: Option<f64>,
    },
    /// Compare two liquidity snapshots (Wasserstein-1, R-score, MAPE).
    Metrics { a: PathBuf, b: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon_threads(cli.threads);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn rayon_threads(n: usize) {
    // The library pulls rayon in transitively; configure its global pool.
    poolsim::configure_threads(n);
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Simulate { config } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                cfg.game.seed = seed;
            }
            let bundle = run_scenario(&cfg)?;
            let out = cli
                .out
                .or_else(|| cfg.output.dir.as_ref().map(|d| cfg.resolve(d)))
                .unwrap_or_else(|| PathBuf::from("out"));
            emit_reports(&bundle, &out)?;
            println!(
                "{} periods, {} blocks, lp fees {:.6}, bot profit {:.6} -> {}",
                bundle.summary.periods,
                bundle.summary.total_blocks,
                bundle.summary.total_lp_fees,
                bundle.summary.total_bot_profit,
                out.display()
            );
            if let Some(m) = bundle.summary.mape_pool_vs_market {
                println!("pool-vs-market mape: {m:.4}%");
            }
            if let Some(w) = bundle.summary.w1_final_vs_target {
                println!("final-vs-target W1: {w:.4} ticks");
            }
            if !bundle.summary.converged_all {
                println!("warning: at least one period used a non-converged iterate");
            }
            Ok(())
        }
        Command::Calibrate { config, n_players } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                cfg.game.seed = seed;
            }
            let snapshot = load_pool_snapshot(&cfg.resolve(&cfg.pool.snapshot))?;
            let sizes = if let Some(history) = &cfg.swaps.history {
                let records = poolsim::harness::load_swap_history(&cfg.resolve(history))?;
                fit_joint_density(&poolsim::harness::history_to_samples(&records))?
            } else {
                let params = cfg.swaps.synthetic.unwrap_or(SyntheticSwapParams {
                    arbitrage_sd: (snapshot.pool_rate() * 0.002).max(1e-6),
                    ..SyntheticSwapParams::default()
                });
                fit_joint_density(&synthetic_swap_samples(
                    &params,
                    derive_seed(cfg.game.seed, 0x5151),
                ))?
            };
            let arrival = ArrivalModel {
                scale: cfg.swaps.arrival_scale.unwrap_or(ArrivalModel::default().scale),
                offset: cfg.swaps.arrival_offset.unwrap_or(ArrivalModel::default().offset),
            };
            let ctx = SimContext {
                base: &snapshot,
                market0: cfg.market.initial_rate.unwrap_or_else(|| snapshot.pool_rate()),
                horizon: cfg.game_horizon(),
                arrival: &arrival,
                sizes: &sizes,
                market: MarketModel {
                    drift: cfg.market.drift,
                    vol: cfg.market.vol,
                    belief: 0,
                    dt: cfg.market.dt_seconds,
                },
                n_paths: cfg.game.n_paths,
                seed: derive_seed(cfg.game.seed, 0xCAFE),
                crn: CrnMode::Common,
            };
            let ccfg = cfg.calibration.to_config();
            let (dist, report) = match n_players {
                Some(n) => calibrate_nplayer(&ctx, n, &ccfg)?,
                None => calibrate_mfg(&ctx, &ccfg, None)?,
            };
            let out = cli.out.unwrap_or_else(|| PathBuf::from("theta.json"));
            dist.save(&out)?;
            println!(
                "calibrated {} cells in {:?}, fit residual {:.6}, unmatched mass {:.4} -> {}",
                dist.cells.len(),
                report.elapsed,
                report.residual,
                report.unmatched_mass,
                out.display()
            );
            Ok(())
        }
        Command::Detect { records } => {
            let records = load_transaction_records(&records)?;
            let findings = detect_sandwich_attacks(&records);
            println!("block,first_index,kind,attacker,victim,symmetry_error");
            for f in &findings {
                println!(
                    "{},{},{},{},{},{:.6}",
                    f.block,
                    f.indices.0,
                    match f.kind {
                        poolsim::harness::AttackKind::SwapBased => "swap_based",
                        poolsim::harness::AttackKind::LiquidityBased => "liquidity_based",
                    },
                    f.attacker,
                    f.victim,
                    f.symmetry_error
                );
            }
            eprintln!("{} finding(s)", findings.len());
            Ok(())
        }
        Command::Thresholds {
            snapshot,
            liquidity,
            gas,
            gamma,
            market,
        } => {
            let mut pool = load_pool_snapshot(&snapshot)?;
            if let Some(g) = gamma {
                pool = poolsim::pool::PoolState::new(
                    pool.grid().clone(),
                    pool.liquidity_vec().to_vec(),
                    pool.pool_rate(),
                    g,
                )?;
            }
            let market = market.unwrap_or_else(|| pool.pool_rate());
            let cfg = poolsim::bot::BotConfig {
                liquidity,
                gas,
                engagement: 1.0,
            };
            let strat = poolsim::bot::bot_thresholds(&pool, market, &cfg);
            println!(
                "active_tick={} pool_rate={} market_rate={market}",
                pool.active_tick(),
                pool.pool_rate()
            );
            println!("lower={} upper={}", strat.lower, strat.upper);
            Ok(())
        }
        Command::Metrics { a, b } => {
            let pa = load_pool_snapshot(&a)?;
            let pb = load_pool_snapshot(&b)?;
            let la = pa.liquidity_vec();
            let lb = pb.liquidity_vec();
            println!(
                "mass_a={} mass_b={}",
                la.iter().sum::<f64>(),
                lb.iter().sum::<f64>()
            );
            match wasserstein1(la, lb) {
                Ok(w) => println!("wasserstein1={w}"),
                Err(e) => println!("wasserstein1=undefined ({e})"),
            }
            match r_score(la, lb) {
                Ok(r) => println!("r_score={r}"),
                Err(e) => println!("r_score=undefined ({e})"),
            }
            match mape(la, lb) {
                Ok(m) => println!("mape_percent={m}"),
                Err(e) => println!("mape=undefined ({e})"),
            }
            Ok(())
        }
    }
}
