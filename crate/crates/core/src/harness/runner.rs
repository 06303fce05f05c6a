//! The multi-period scenario runner and report emission.
//!
//! Each period solves the configured game against the previous period's
//! liquidity distribution at the current rates, freezes the resulting
//! distribution, and simulates one period of block-by-block flow (with
//! attacks when a bot is configured). Rates carry across periods; all
//! randomness derives from the scenario seed, so a run is reproducible
//! byte-for-byte.

use super::{io, GameMode, HarnessError, ScenarioConfig};
use crate::bot::{self, BlockRecord, BotConfig, LedgerSim, ThresholdAttacker};
use crate::game::{
    calibrate_mfg, fictitious_play_mfg, fictitious_play_nplayer, mape, r_score, wasserstein1,
    FpConfig, GameError, TypeDistribution,
};
use crate::lp::{self, AttackPolicy, CrnMode, LpType, SimContext};
use crate::pool::{self, LiquidityPosition, PoolState};
use crate::rng::derive_seed;
use crate::stochastic::{
    fit_joint_density, synthetic_swap_samples, ArrivalModel, JointSwapDensity, MarketModel,
    SyntheticSwapParams,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub index: usize,
    pub opening_rate: f64,
    pub closing_rate: f64,
    pub opening_market: f64,
    pub converged: bool,
    pub game_iterations: usize,
    pub lp_fees: f64,
    pub bot_profit: f64,
    pub swaps: u64,
    pub attacked: u64,
    /// Liquidity distribution in force during the period.
    pub liquidity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub mode: GameMode,
    pub seed: u64,
    pub periods: usize,
    pub period_blocks: usize,
    pub total_blocks: usize,
    pub converged_all: bool,
    pub total_lp_fees: f64,
    pub total_bot_profit: f64,
    pub total_bot_fees: f64,
    pub swaps: u64,
    pub engaged: u64,
    pub attacked: u64,
    pub clamped: u64,
    pub containment_violations: u64,
    pub final_liquidity_mass: f64,
    pub mape_pool_vs_market: Option<f64>,
    pub r_score_pool_vs_market: Option<f64>,
    pub w1_final_vs_target: Option<f64>,
    pub target_liquidity_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub summary: Summary,
    pub periods: Vec<PeriodReport>,
    pub ledger: Vec<BlockRecord>,
}

struct Models {
    arrival: ArrivalModel,
    sizes: JointSwapDensity,
    market: MarketModel,
    market_path: Option<Vec<f64>>,
    market0: f64,
}

fn build_models(cfg: &ScenarioConfig, pool: &PoolState) -> Result<Models, HarnessError> {
    let mut arrival = ArrivalModel::default();
    if let Some(s) = cfg.swaps.arrival_scale {
        arrival.scale = s;
    }
    if let Some(o) = cfg.swaps.arrival_offset {
        arrival.offset = o;
    }
    let sizes = if let Some(history) = &cfg.swaps.history {
        let records = io::load_swap_history(&cfg.resolve(history))?;
        let samples = io::history_to_samples(&records);
        fit_joint_density(&samples)?
    } else {
        let params = cfg.swaps.synthetic.unwrap_or_else(|| {
            // Scale the synthetic arbitrage spread to the pool's rate so
            // the default works on toy grids as well as realistic ones.
            SyntheticSwapParams {
                arbitrage_sd: (pool.pool_rate() * 0.002).max(1e-6),
                ..SyntheticSwapParams::default()
            }
        });
        let samples = synthetic_swap_samples(&params, derive_seed(cfg.game.seed, 0x5151));
        fit_joint_density(&samples)?
    };
    let market = MarketModel {
        drift: cfg.market.drift,
        vol: cfg.market.vol,
        belief: 0,
        dt: cfg.market.dt_seconds,
    };
    let (market_path, market0) = if let Some(path) = &cfg.market.path {
        let minutes = io::load_market_path(&cfg.resolve(path))?;
        let blocks = io::step_interpolate(
            &minutes,
            cfg.total_blocks(),
            cfg.market.blocks_per_minute,
        )?;
        let m0 = blocks[0];
        (Some(blocks), m0)
    } else {
        (None, cfg.market.initial_rate.unwrap_or_else(|| pool.pool_rate()))
    };
    Ok(Models {
        arrival,
        sizes,
        market,
        market_path,
        market0,
    })
}

fn bot_config(cfg: &ScenarioConfig, pool: &PoolState, market0: f64) -> Result<Option<BotConfig>, HarnessError> {
    let Some(section) = &cfg.bot else {
        return Ok(None);
    };
    let liquidity = match (section.liquidity, section.capital) {
        (Some(l), _) => l,
        (None, Some(capital)) => bot::liquidity_for_capital(capital, pool, market0)?,
        (None, None) => unreachable!("validated"),
    };
    Ok(Some(BotConfig {
        liquidity,
        gas: section.gas,
        engagement: section.engagement,
    }))
}

fn game_fp_config(cfg: &ScenarioConfig) -> FpConfig {
    FpConfig {
        thresh: cfg.game.thresh,
        max_iterations: cfg.game.max_iterations,
        population_scale: None,
    }
}

/// Runs the whole scenario and returns the report bundle.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ReportBundle, HarnessError> {
    cfg.validate()?;
    let snapshot = io::load_pool_snapshot(&cfg.resolve(&cfg.pool.snapshot))?;
    let models = build_models(cfg, &snapshot)?;
    let bot = bot_config(cfg, &snapshot, models.market0)?;
    let policy = bot.map(|config| ThresholdAttacker { config });

    // Mean-field modes need a type distribution.
    let dist: Option<TypeDistribution> = match cfg.game.mode {
        GameMode::Mfg | GameMode::Stackelberg => {
            if cfg.types.calibrate_first {
                let ctx = SimContext {
                    base: &snapshot,
                    market0: models.market0,
                    horizon: cfg.game_horizon(),
                    arrival: &models.arrival,
                    sizes: &models.sizes,
                    market: models.market,
                    n_paths: cfg.game.n_paths,
                    seed: derive_seed(cfg.game.seed, 0xCAFE),
                    crn: CrnMode::Common,
                };
                let anticipating = matches!(cfg.game.mode, GameMode::Stackelberg);
                let p: Option<&dyn AttackPolicy> = match (&policy, anticipating) {
                    (Some(pol), true) => Some(pol),
                    _ => None,
                };
                let (dist, report) = calibrate_mfg(&ctx, &cfg.calibration.to_config(), p)?;
                log::info!(
                    "calibrated type distribution in {:?}, fit residual {:.4}",
                    report.elapsed,
                    report.residual
                );
                Some(dist)
            } else {
                let path = cfg
                    .types
                    .distribution
                    .as_ref()
                    .expect("validated: distribution or calibrate_first");
                Some(TypeDistribution::load(&cfg.resolve(path))?)
            }
        }
        _ => None,
    };

    let mut cur_liq = snapshot.liquidity_vec().to_vec();
    let mut cur_rate = snapshot.pool_rate();
    let mut cur_market = models.market0;
    let mut prev_profile: Option<Vec<(usize, usize)>> = None;
    let mut periods = Vec::with_capacity(cfg.horizon.periods);
    let mut ledger: Vec<BlockRecord> = Vec::with_capacity(cfg.total_blocks());
    let mut totals = crate::bot::LedgerTotals::default();
    let mut converged_all = true;

    for h in 0..cfg.horizon.periods {
        let period_pool = snapshot.with_liquidity(cur_liq.clone())?.at_rate(cur_rate)?;
        let ctx = SimContext {
            base: &period_pool,
            market0: cur_market,
            horizon: cfg.game_horizon(),
            arrival: &models.arrival,
            sizes: &models.sizes,
            market: models.market,
            n_paths: cfg.game.n_paths,
            seed: derive_seed(cfg.game.seed, 1000 + h as u64),
            crn: CrnMode::Common,
        };
        let (liquidity, converged, iterations) = match cfg.game.mode {
            GameMode::Single => {
                let (capital, risk_aversion, belief) =
                    cfg.game.single.expect("validated");
                let theta = LpType::new(capital, risk_aversion, belief);
                // The exogenous pool is the snapshot; the LP re-adjusts its
                // own position each period.
                let base = snapshot.at_rate(cur_rate)?;
                let mut c = ctx;
                c.base = &base;
                let ((j1, j2), _) = lp::optimize_single(&theta, &c, None)?;
                let u = pool::liquidity_per_tick(j1, j2, capital, cur_market, &base)?;
                let next = pool::add_liquidity(
                    &base,
                    &LiquidityPosition::new(j1, j2, u)?,
                );
                (next.liquidity_vec().to_vec(), true, 1)
            }
            GameMode::Nplayer => {
                let players: Vec<LpType> = cfg
                    .game
                    .players
                    .as_ref()
                    .expect("validated")
                    .iter()
                    .map(|&(k, l, b)| LpType::new(k, l, b))
                    .collect();
                let d = snapshot.tick_count();
                let empty = snapshot.with_liquidity(vec![0.0; d])?.at_rate(cur_rate)?;
                let mut c = ctx;
                c.base = &empty;
                let initial = prev_profile
                    .clone()
                    .unwrap_or_else(|| vec![(1, d + 1); players.len()]);
                match fictitious_play_nplayer(&players, &initial, &c, &game_fp_config(cfg)) {
                    Ok(out) => {
                        prev_profile = Some(out.profile.clone());
                        (out.liquidity, true, out.trace.iterations())
                    }
                    Err(GameError::NonConvergence { best, iterations, .. }) => {
                        log::warn!(
                            "period {h}: n-player game did not converge; using best iterate"
                        );
                        prev_profile = Some(best.actions.clone());
                        (best.liquidity, false, iterations)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            GameMode::Mfg | GameMode::Stackelberg => {
                let dist = dist.as_ref().expect("mean-field distribution");
                let p: Option<&dyn AttackPolicy> =
                    if matches!(cfg.game.mode, GameMode::Stackelberg) {
                        policy.as_ref().map(|pol| pol as &dyn AttackPolicy)
                    } else {
                        None
                    };
                match fictitious_play_mfg(dist, &ctx, &game_fp_config(cfg), p) {
                    Ok(out) => (out.equilibrium, true, out.trace.iterations()),
                    Err(GameError::NonConvergence { best, iterations, .. }) => {
                        log::warn!(
                            "period {h}: mean-field game did not converge; using best iterate"
                        );
                        (best.liquidity, false, iterations)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        converged_all &= converged;

        let sim_pool = snapshot.with_liquidity(liquidity.clone())?.at_rate(cur_rate)?;
        let path_slice = models.market_path.as_ref().map(|p| {
            &p[h * cfg.horizon.period_blocks..(h + 1) * cfg.horizon.period_blocks]
        });
        let ledger_out = bot::run_ledger(&LedgerSim {
            pool: &sim_pool,
            market0: cur_market,
            horizon: cfg.horizon.period_blocks,
            arrival: &models.arrival,
            sizes: &models.sizes,
            market: models.market,
            market_path: path_slice,
            bot: bot.as_ref(),
            seed: derive_seed(cfg.game.seed, 2000 + h as u64),
            stream: 0,
        });
        let report = PeriodReport {
            index: h,
            opening_rate: cur_rate,
            closing_rate: ledger_out.final_rate,
            opening_market: cur_market,
            converged,
            game_iterations: iterations,
            lp_fees: ledger_out.totals.lp_fees,
            bot_profit: ledger_out.totals.bot_profit,
            swaps: ledger_out.totals.swaps,
            attacked: ledger_out.totals.attacked,
            liquidity: liquidity.clone(),
        };
        totals.bot_profit += ledger_out.totals.bot_profit;
        totals.bot_fees += ledger_out.totals.bot_fees;
        totals.lp_fees += ledger_out.totals.lp_fees;
        totals.swaps += ledger_out.totals.swaps;
        totals.engaged += ledger_out.totals.engaged;
        totals.attacked += ledger_out.totals.attacked;
        totals.clamped += ledger_out.totals.clamped;
        totals.containment_violations += ledger_out.totals.containment_violations;
        cur_rate = ledger_out.final_rate;
        cur_market = ledger_out
            .blocks
            .last()
            .map_or(cur_market, |b| b.market_rate);
        cur_liq = liquidity;
        let offset = (h * cfg.horizon.period_blocks) as u64;
        for mut b in ledger_out.blocks {
            b.block += offset;
            ledger.push(b);
        }
        periods.push(report);
    }

    let pool_series: Vec<f64> = ledger.iter().map(|b| b.pool_rate).collect();
    let market_series: Vec<f64> = ledger.iter().map(|b| b.market_rate).collect();
    let mape_pm = mape(&pool_series, &market_series).ok();
    let r_pm = r_score(&pool_series, &market_series).ok();
    let (w1_target, target_mass) = if let Some(target) = &cfg.target.snapshot {
        let target_pool = io::load_pool_snapshot(&cfg.resolve(target))?;
        let w1 = wasserstein1(&cur_liq, target_pool.liquidity_vec()).ok();
        (w1, Some(target_pool.liquidity_vec().iter().sum()))
    } else {
        (None, None)
    };

    let summary = Summary {
        schema_version: super::SCHEMA_VERSION,
        mode: cfg.game.mode,
        seed: cfg.game.seed,
        periods: cfg.horizon.periods,
        period_blocks: cfg.horizon.period_blocks,
        total_blocks: cfg.total_blocks(),
        converged_all,
        total_lp_fees: totals.lp_fees,
        total_bot_profit: totals.bot_profit,
        total_bot_fees: totals.bot_fees,
        swaps: totals.swaps,
        engaged: totals.engaged,
        attacked: totals.attacked,
        clamped: totals.clamped,
        containment_violations: totals.containment_violations,
        final_liquidity_mass: cur_liq.iter().sum(),
        mape_pool_vs_market: mape_pm,
        r_score_pool_vs_market: r_pm,
        w1_final_vs_target: w1_target,
        target_liquidity_mass: target_mass,
    };
    Ok(ReportBundle {
        summary,
        periods,
        ledger,
    })
}

/// Writes the bundle: `summary.toml`, `rates.csv`, `ledger.csv`,
/// `periods.csv`, and one `liquidity_period_<h>.csv` histogram per period.
/// An empty bundle produces the summary alone.
pub fn emit_reports(bundle: &ReportBundle, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let summary_text =
        toml::to_string_pretty(&bundle.summary).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(dir.join("summary.toml"), summary_text)?;
    if bundle.periods.is_empty() {
        return Ok(());
    }
    let mut rates = String::from("block,pool_rate,market_rate\n");
    for b in &bundle.ledger {
        writeln!(rates, "{},{},{}", b.block, b.pool_rate, b.market_rate)
            .expect("string write");
    }
    std::fs::write(dir.join("rates.csv"), rates)?;
    io::save_ledger(&bundle.ledger, &dir.join("ledger.csv"))?;
    let mut periods = String::from(
        "index,opening_rate,closing_rate,opening_market,converged,game_iterations,\
         lp_fees,bot_profit,swaps,attacked\n",
    );
    for p in &bundle.periods {
        writeln!(
            periods,
            "{},{},{},{},{},{},{},{},{},{}",
            p.index,
            p.opening_rate,
            p.closing_rate,
            p.opening_market,
            u8::from(p.converged),
            p.game_iterations,
            p.lp_fees,
            p.bot_profit,
            p.swaps,
            p.attacked
        )
        .expect("string write");
    }
    std::fs::write(dir.join("periods.csv"), periods)?;
    for p in &bundle.periods {
        let mut hist = String::from("tick_index,liquidity\n");
        for (i, l) in p.liquidity.iter().enumerate() {
            writeln!(hist, "{},{}", i + 1, l).expect("string write");
        }
        std::fs::write(
            dir.join(format!("liquidity_period_{}.csv", p.index)),
            hist,
        )?;
    }
    Ok(())
}

pub fn read_summary(dir: &Path) -> Result<Summary, HarnessError> {
    let text = std::fs::read_to_string(dir.join("summary.toml"))?;
    Ok(toml::from_str(&text)?)
}
