//! The just-in-time liquidity attacker and the leader-follower LP rewards.
//!
//! The bot watches incoming swaps. When it engages and the swap is outside
//! its profitability thresholds, it injects `liquidity` units into the
//! active tick, lets the swap execute, and withdraws its share of the
//! tick's reserves and fees, paying a fixed `gas` cost per attack. Because
//! profitability reduces to a quadratic inequality in the swap size, the
//! bot's whole strategy is two signed thresholds.

pub mod sim;

pub use sim::{run_ledger, BlockRecord, BotLedger, LedgerSim, LedgerTotals};

use crate::lp::{self, AttackPolicy, LpType, SimContext, ValueEstimate};
use crate::pool::{self, PoolError, PoolState};
use serde::{Deserialize, Serialize};

/// Attacker parameters: injected liquidity (pool units), per-attack gas in
/// token B, and the probability an attackable swap is engaged at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotConfig {
    pub liquidity: f64,
    pub gas: f64,
    pub engagement: f64,
}

impl BotConfig {
    pub fn new(liquidity: f64) -> Self {
        Self {
            liquidity,
            gas: 20.0,
            engagement: 0.5278,
        }
    }
}

/// Attack region: attack exactly when the swap size leaves
/// `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotStrategy {
    pub lower: f64,
    pub upper: f64,
}

impl BotStrategy {
    pub fn attacks(&self, xi: f64) -> bool {
        xi < self.lower || xi > self.upper
    }
}

/// Value of the attack decision `attack` against swap `xi`: the bot's share
/// of the active tick's reserve change valued at the market rate, plus its
/// fee share, minus gas. The swap executes against the pool with the bot's
/// liquidity injected; `contained` reports whether it stayed within the
/// active tick (outside that regime the closed-form thresholds are not
/// exact).
pub fn bot_value(
    attack: bool,
    xi: f64,
    state: &PoolState,
    market: f64,
    config: &BotConfig,
) -> Result<(f64, bool), PoolError> {
    if !attack {
        return Ok((0.0, true));
    }
    let i_star = state.active_tick();
    let l0 = state.liquidity(i_star);
    let l1 = l0 + config.liquidity;
    let mut injected = state.clone();
    injected.liquidity_mut()[i_star - 1] = l1;
    let mut fees = vec![0.0; state.tick_count()];
    let ((psi, _, new_active, executed), clamped) =
        injected.execute_swap_clamped_into(xi, &mut fees);
    let contained = !clamped && new_active == i_star && executed == xi;
    let share = config.liquidity / l1;
    let gamma = state.fee_rate();
    let value = share * (executed - market * psi + gamma * executed.abs()) - config.gas;
    Ok((value, contained))
}

/// Closed-form attack thresholds for the current pool and market rates.
///
/// Within single-tick containment the profitability condition multiplies
/// out to `C xi^2 + D xi + E > 0` per sign branch, with
///
/// ```text
/// C = 1 + gamma * sgn(xi)
/// D = (l0 + L) * ((1 + gamma * sgn(xi)) * p - m) / sqrt(p) - G (l0 + L) / L
/// E = -G * sqrt(p) * (l0 + L)^2 / L
/// ```
///
/// after substituting the active tick's virtual reserves (`l0` its
/// liquidity, `p` the pool rate, `m` the market rate); `E <= 0` guarantees
/// real roots. The positive branch takes the right root clamped up to 0,
/// the negative branch the left root clamped down to 0.
pub fn bot_thresholds(state: &PoolState, market: f64, config: &BotConfig) -> BotStrategy {
    assert!(config.liquidity > 0.0, "bot liquidity must be positive");
    let p = state.pool_rate();
    let sqrt_p = p.sqrt();
    let l0 = state.liquidity(state.active_tick());
    let l1 = l0 + config.liquidity;
    let gamma = state.fee_rate();
    let gas_term = config.gas * l1 / config.liquidity;
    let e = -config.gas * sqrt_p * l1 * l1 / config.liquidity;

    let branch = |sign: f64| -> f64 {
        let c = 1.0 + gamma * sign;
        let d = l1 * ((1.0 + gamma * sign) * p - market) / sqrt_p - gas_term;
        let disc = (d * d - 4.0 * c * e).max(0.0).sqrt();
        if sign > 0.0 {
            ((-d + disc) / (2.0 * c)).max(0.0)
        } else {
            ((-d - disc) / (2.0 * c)).min(0.0)
        }
    };
    BotStrategy {
        lower: branch(-1.0),
        upper: branch(1.0),
    }
}

/// Threshold-following attacker usable by the simulation engine: decides
/// per block from the live pool and market rates.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdAttacker {
    pub config: BotConfig,
}

impl AttackPolicy for ThresholdAttacker {
    fn engagement(&self) -> f64 {
        self.config.engagement
    }

    fn liquidity(&self) -> f64 {
        self.config.liquidity
    }

    fn attacks(&self, live: &PoolState, market: f64, xi: f64) -> bool {
        bot_thresholds(live, market, &self.config).attacks(xi)
    }
}

/// LP reward under the leader-follower protocol: an attacked swap is pinned
/// to the active tick, where the bot's injection dilutes everyone, so a
/// position earns `gamma |xi| u / (l_star + L)` if it covers the active
/// tick and nothing otherwise; an untouched swap pays the plain mean-field
/// reward.
#[allow(clippy::too_many_arguments)]
pub fn stackelberg_reward(
    xi: f64,
    attacked: bool,
    j1: usize,
    j2: usize,
    theta: &LpType,
    state: &PoolState,
    rate: f64,
    market0: f64,
    config: &BotConfig,
) -> Result<f64, PoolError> {
    if attacked {
        let i_star = state.at_rate(rate)?.active_tick();
        if j1 <= i_star && i_star < j2 {
            let u = pool::liquidity_per_tick(j1, j2, theta.capital, market0, state)?;
            let gamma = state.fee_rate();
            return Ok(gamma * xi.abs() * u / (state.liquidity(i_star) + config.liquidity));
        }
        return Ok(0.0);
    }
    lp::per_swap_reward(
        xi,
        j1,
        j2,
        theta,
        state,
        rate,
        market0,
        lp::RewardMode::MeanField,
    )
}

/// Position scan that anticipates the attacker: identical to the plain
/// single-LP scan except that attacked blocks pay the pinned-tick reward.
pub fn lp_optimize_with_bot(
    theta: &LpType,
    ctx: &SimContext,
    config: &BotConfig,
) -> Result<((usize, usize), ValueEstimate), PoolError> {
    let policy = ThresholdAttacker { config: *config };
    lp::optimize_single(theta, ctx, Some(&policy))
}

/// Bot liquidity equivalent to a token-B capital amount, priced by a
/// single-tick position on the active tick.
pub fn liquidity_for_capital(
    capital: f64,
    state: &PoolState,
    market: f64,
) -> Result<f64, PoolError> {
    let i_star = state.active_tick();
    pool::liquidity_per_tick(i_star, i_star + 1, capital, market, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::testpools::toks_pool;
    use crate::pool::{swap_boundaries, PriceGrid};
    use approx::assert_abs_diff_eq;

    fn attack_all() -> BotConfig {
        BotConfig {
            liquidity: 500.0,
            gas: 0.0,
            engagement: 1.0,
        }
    }

    #[test]
    fn no_attack_is_worth_zero() {
        let pool = toks_pool(0.0005);
        let (v, contained) =
            bot_value(false, -4.0, &pool, 1.6, &BotConfig::new(100.0)).unwrap();
        assert_eq!(v, 0.0);
        assert!(contained);
    }

    #[test]
    fn slippage_capture_is_profitable_without_gas() {
        // gamma = 0 and m = p: the bot still gains because the swapper pays
        // a worse-than-market average price across the fill.
        let pool = toks_pool(0.0);
        for xi in [-3.0, -0.5, 0.7, 2.9] {
            let (v, contained) = bot_value(true, xi, &pool, 1.6, &attack_all()).unwrap();
            assert!(contained);
            assert!(v > 0.0, "xi {xi} gave value {v}");
        }
        // Large fixed cost dominates any bounded swap.
        let costly = BotConfig {
            gas: 1e9,
            ..attack_all()
        };
        let (v, _) = bot_value(true, 2.9, &pool, 1.6, &costly).unwrap();
        assert!(v < 0.0);
    }

    #[test]
    fn zero_gas_thresholds_collapse_at_market_parity() {
        let pool = toks_pool(0.0005);
        let cfg = attack_all();
        let strat = bot_thresholds(&pool, 1.6, &cfg);
        assert_eq!(strat.lower, 0.0);
        assert_eq!(strat.upper, 0.0);
        assert!(strat.attacks(0.001));
        assert!(strat.attacks(-0.001));
        assert!(!strat.attacks(0.0));
    }

    #[test]
    fn thresholds_match_brute_force_sign_of_value() {
        let pool = toks_pool(0.0005);
        let cases = [
            (1.6, 0.05, 120.0),
            (1.605, 0.02, 60.0),
            (1.59, 0.08, 300.0),
        ];
        for &(market, gas, liq) in &cases {
            let cfg = BotConfig {
                liquidity: liq,
                gas,
                engagement: 1.0,
            };
            let strat = bot_thresholds(&pool, market, &cfg);
            // Containment range of the injected pool.
            let mut injected = pool.clone();
            injected.liquidity_mut()[pool.active_tick() - 1] += liq;
            let beta = swap_boundaries(&injected);
            let (lo, hi) = (beta[pool.active_tick() - 1], beta[pool.active_tick()]);
            // Strictly interior grid: the exact endpoints leave the tick.
            for k in 1..200 {
                let xi = lo + (hi - lo) * k as f64 / 200.0;
                if xi == 0.0
                    || (xi - strat.lower).abs() < 1e-6
                    || (xi - strat.upper).abs() < 1e-6
                {
                    continue;
                }
                let (v, contained) = bot_value(true, xi, &pool, market, &cfg).unwrap();
                assert!(contained);
                assert_eq!(
                    v > 0.0,
                    strat.attacks(xi),
                    "xi {xi}: value {v}, thresholds {strat:?}"
                );
            }
        }
    }

    #[test]
    fn thresholds_widen_with_gas() {
        let pool = toks_pool(0.0005);
        let mut last = bot_thresholds(
            &pool,
            1.6,
            &BotConfig {
                liquidity: 100.0,
                gas: 0.0,
                engagement: 1.0,
            },
        );
        for gas in [0.001, 0.01, 0.1, 1.0] {
            let strat = bot_thresholds(
                &pool,
                1.6,
                &BotConfig {
                    liquidity: 100.0,
                    gas,
                    engagement: 1.0,
                },
            );
            assert!(strat.upper >= last.upper);
            assert!(strat.lower <= last.lower);
            last = strat;
        }
    }

    #[test]
    fn thresholds_well_defined_on_empty_active_tick() {
        let grid = PriceGrid::new(vec![1.0, 1.21, 1.44, 1.69]).unwrap();
        let pool = PoolState::new(grid, vec![50.0, 0.0, 50.0], 1.3, 0.001).unwrap();
        let cfg = BotConfig {
            liquidity: 80.0,
            gas: 0.01,
            engagement: 1.0,
        };
        let strat = bot_thresholds(&pool, 1.3, &cfg);
        assert!(strat.lower.is_finite() && strat.upper.is_finite());
        assert!(strat.lower <= 0.0 && strat.upper >= 0.0);
        // Sign agreement inside the (bot-only) containment range.
        let mut injected = pool.clone();
        injected.liquidity_mut()[1] += cfg.liquidity;
        let beta = swap_boundaries(&injected);
        for k in 1..40 {
            let xi = beta[1] + (beta[2] - beta[1]) * k as f64 / 40.0;
            if xi == 0.0
                || (xi - strat.lower).abs() < 1e-6
                || (xi - strat.upper).abs() < 1e-6
            {
                continue;
            }
            let (v, contained) = bot_value(true, xi, &pool, 1.3, &cfg).unwrap();
            assert!(contained);
            assert_eq!(v > 0.0, strat.attacks(xi), "xi {xi} value {v}");
        }
    }

    #[test]
    fn anticipating_scan_weakly_narrows_the_position() {
        use crate::lp::{optimize_single, CrnMode, SimContext};
        use crate::stochastic::{
            fit_joint_density, synthetic_swap_samples, ArrivalModel, MarketModel,
            SyntheticSwapParams,
        };
        // With a heavy attacker, fees outside the active tick vanish for
        // attacked (large) swaps, so anticipating LPs concentrate.
        let pool = toks_pool(0.002);
        let params = SyntheticSwapParams {
            n: 700,
            log_size_mean: 0.5,
            log_size_sd: 0.3,
            arbitrage_sd: 0.05,
            direction_slope: 8.0,
        };
        let sizes = fit_joint_density(&synthetic_swap_samples(&params, 91)).unwrap();
        let arrival = ArrivalModel::default();
        let ctx = SimContext {
            base: &pool,
            market0: 1.6,
            horizon: 120,
            arrival: &arrival,
            sizes: &sizes,
            market: MarketModel {
                vol: 0.0008,
                ..MarketModel::default()
            },
            n_paths: 96,
            seed: 47,
            crn: CrnMode::Common,
        };
        let theta = LpType::new(30.0, 0.4, 0);
        let ((f1, f2), _) = optimize_single(&theta, &ctx, None).unwrap();
        let bot = BotConfig {
            liquidity: 2000.0,
            gas: 0.001,
            engagement: 0.9,
        };
        let ((b1, b2), _) = lp_optimize_with_bot(&theta, &ctx, &bot).unwrap();
        assert!(
            b2 - b1 <= f2 - f1,
            "anticipating width {} > bot-free width {}",
            b2 - b1,
            f2 - f1
        );
    }

    #[test]
    fn stackelberg_reward_cases() {
        let pool = toks_pool(0.0005);
        let theta = LpType::new(5.0, 0.0, 0);
        // Attacked swap, position excludes the active tick (3): nothing.
        let r = stackelberg_reward(
            -4.0,
            true,
            4,
            6,
            &theta,
            &pool,
            1.6,
            1.6,
            &BotConfig::new(200.0),
        )
        .unwrap();
        assert_eq!(r, 0.0);
        // Sole non-bot LP in the active tick earns l / (l + L) of the fee.
        let grid = pool.grid().clone();
        let empty = PoolState::new(grid, vec![0.0; 6], 1.6, 0.0005).unwrap();
        let u = pool::liquidity_per_tick(3, 4, 5.0, 1.6, &empty).unwrap();
        let r = stackelberg_reward(
            -4.0,
            true,
            3,
            4,
            &theta,
            &empty,
            1.6,
            1.6,
            &BotConfig::new(200.0),
        )
        .unwrap();
        assert_abs_diff_eq!(
            r,
            0.0005 * 4.0 * u / (0.0 + 200.0),
            epsilon = 1e-15
        );
        // L -> 0 with an attacked contained swap recovers the plain reward.
        let tiny = BotConfig::new(1e-9);
        let attacked = stackelberg_reward(
            -4.0, true, 2, 5, &theta, &pool, 1.6, 1.6, &tiny,
        )
        .unwrap();
        let plain = lp::per_swap_reward(
            -4.0,
            2,
            5,
            &theta,
            &pool,
            1.6,
            1.6,
            lp::RewardMode::MeanField,
        )
        .unwrap();
        assert_abs_diff_eq!(attacked / plain, 1.0, epsilon = 1e-6);
    }
}
