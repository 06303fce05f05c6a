//! Liquidity-provider types, rewards, and the single-LP position scan.
//!
//! An LP is summarized by `(capital, risk_aversion, belief)`. Given a base
//! pool, a position `(j1, j2)` converts capital into `u` liquidity units per
//! covered tick at the initial rates, and the LP earns, per swap, its share
//! of each covered tick's fees. Values are mean-variance: the Monte-Carlo
//! mean of horizon profit minus `risk_aversion` times its variance.

pub mod sim;

pub use sim::{
    estimate_value, optimize_single, simulate_profit, AttackPolicy, CrnMode, MeanFieldTable,
    PathSpec, RewardMode, SimContext,
};

use crate::pool::{self, PoolError, PoolState};
use serde::{Deserialize, Serialize};

/// LP characteristics: capital in token B, mean-variance risk aversion, and
/// a market-trend belief in {-1, 0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpType {
    pub capital: f64,
    pub risk_aversion: f64,
    pub belief: i8,
}

impl LpType {
    pub fn new(capital: f64, risk_aversion: f64, belief: i8) -> Self {
        Self {
            capital,
            risk_aversion,
            belief,
        }
    }
}

/// All admissible positions `(j1, j2)` with `1 <= j1 < j2 <= d+1`, in
/// lexicographic order. Size d(d+1)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    d: usize,
    actions: Vec<(usize, usize)>,
}

impl ActionSpace {
    pub fn new(d: usize) -> Self {
        let mut actions = Vec::with_capacity(d * (d + 1) / 2);
        for j1 in 1..=d {
            for j2 in (j1 + 1)..=(d + 1) {
                actions.push((j1, j2));
            }
        }
        Self { d, actions }
    }

    pub fn tick_count(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[(usize, usize)] {
        &self.actions
    }

    pub fn get(&self, idx: usize) -> (usize, usize) {
        self.actions[idx]
    }
}

/// Monte-Carlo mean-variance estimate for one action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub variance: f64,
    /// `mean - risk_aversion * variance`, exactly.
    pub value: f64,
    pub n_paths: usize,
    /// Delta-method standard error of `value`.
    pub std_error: f64,
}

impl ValueEstimate {
    pub fn from_profits(profits: &[f64], risk_aversion: f64) -> Self {
        let n = profits.len();
        assert!(n >= 2, "need at least two paths for a variance");
        let nf = n as f64;
        let mean = profits.iter().sum::<f64>() / nf;
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        let mut m4 = 0.0;
        for &p in profits {
            let d = p - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        let variance = m2 * nf / (nf - 1.0);
        let value = mean - risk_aversion * variance;
        let l = risk_aversion;
        let se2 = (m2 + l * l * (m4 - m2 * m2) - 2.0 * l * m3) / nf;
        ValueEstimate {
            mean,
            variance,
            value,
            n_paths: n,
            std_error: se2.max(0.0).sqrt(),
        }
    }
}

/// Share of tick `i`'s fees for `u` units against base liquidity `base_l`.
///
/// Under [`RewardMode::SelfImpact`] the position is part of the pool, so the
/// share is `u / (base_l + u)`; under [`RewardMode::MeanField`] the player
/// is infinitesimal relative to the pool and the share is `u / base_l`
/// (zero when the tick is empty: no capacity means no fees).
pub fn tick_share(u: f64, base_l: f64, mode: RewardMode) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    match mode {
        RewardMode::SelfImpact => u / (base_l + u),
        RewardMode::MeanField => {
            if base_l > 0.0 {
                u / base_l
            } else {
                0.0
            }
        }
    }
}

/// Fees (token B) earned by the position for one swap of `xi` executed at
/// `rate` against the base pool, with `u` bought at the base pool's stored
/// rate and the market rate `market0`.
///
/// Under self-impact the swap runs against the pool including the position.
#[allow(clippy::too_many_arguments)]
pub fn per_swap_reward(
    xi: f64,
    j1: usize,
    j2: usize,
    theta: &LpType,
    base: &PoolState,
    rate: f64,
    market0: f64,
    mode: RewardMode,
) -> Result<f64, PoolError> {
    let u = pool::liquidity_per_tick(j1, j2, theta.capital, market0, base)?;
    let position = pool::LiquidityPosition::new(j1, j2, u)?;
    let exec_pool = match mode {
        RewardMode::SelfImpact => pool::add_liquidity(base, &position),
        RewardMode::MeanField => base.clone(),
    };
    let exec_pool = exec_pool.at_rate(rate)?;
    let outcome = exec_pool.execute_swap(xi)?;
    let mut reward = 0.0;
    for i in j1..j2.min(base.tick_count() + 1) {
        reward += tick_share(u, base.liquidity(i), mode) * outcome.fees_per_tick[i - 1];
    }
    Ok(reward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::testpools::liqcalc_pool;
    use approx::assert_abs_diff_eq;

    #[test]
    fn action_space_enumeration() {
        let a = ActionSpace::new(6);
        assert_eq!(a.len(), 21);
        assert_eq!(a.get(0), (1, 2));
        assert_eq!(a.get(5), (1, 7));
        assert_eq!(a.get(6), (2, 3));
        assert_eq!(*a.actions().last().unwrap(), (6, 7));
        assert_eq!(ActionSpace::new(1).actions(), &[(1, 2)]);
    }

    #[test]
    fn value_estimate_identities() {
        let profits = [1.0, 3.0, 5.0, 7.0];
        let v0 = ValueEstimate::from_profits(&profits, 0.0);
        assert_eq!(v0.value, v0.mean);
        assert_abs_diff_eq!(v0.mean, 4.0);
        assert_abs_diff_eq!(v0.variance, 20.0 / 3.0, epsilon = 1e-12);
        let v2 = ValueEstimate::from_profits(&profits, 2.0);
        assert_eq!(v2.value, v2.mean - 2.0 * v2.variance);
        // Deterministic profit: zero variance, value = the constant.
        let vc = ValueEstimate::from_profits(&[3.5; 16], 4.0);
        assert_eq!(vc.variance, 0.0);
        assert_eq!(vc.value, 3.5);
        assert_eq!(vc.std_error, 0.0);
        // Value decreases weakly in risk aversion.
        let mut last = f64::INFINITY;
        for l in [0.0, 0.5, 1.0, 2.0] {
            let v = ValueEstimate::from_profits(&profits, l).value;
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn reward_zero_cases() {
        let base = liqcalc_pool(0.0);
        let theta = LpType::new(2.87, 0.0, 0);
        let r = per_swap_reward(-5.0, 2, 5, &theta, &base, 1.6, 1.6, RewardMode::SelfImpact)
            .unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn reward_matches_hand_computation() {
        // Fee-bearing toy pool, swap of -5 confined to tick 3: the position
        // earns gamma * 5 * u / (l0_3 + u).
        let base = liqcalc_pool(0.0005);
        let theta = LpType::new(2.87, 0.0, 0);
        let u = pool::liquidity_per_tick(2, 5, 2.87, 1.6, &base).unwrap();
        let r = per_swap_reward(-5.0, 2, 5, &theta, &base, 1.6, 1.6, RewardMode::SelfImpact)
            .unwrap();
        assert_abs_diff_eq!(r, 0.0005 * 5.0 * u / (111.052 + u), epsilon = 1e-12);
    }

    #[test]
    fn full_ownership_earns_full_fee() {
        // LP owns all liquidity in every touched tick: reward equals the
        // whole fee. Build an empty pool and let the position be the pool.
        let grid = pool::PriceGrid::new(vec![1.0, 1.21, 1.44, 1.69]).unwrap();
        let empty = PoolState::new(grid, vec![0.0; 3], 1.3, 0.001).unwrap();
        let theta = LpType::new(50.0, 0.0, 0);
        let u = pool::liquidity_per_tick(1, 4, 50.0, 1.3, &empty).unwrap();
        let position = pool::LiquidityPosition::new(1, 4, u).unwrap();
        let filled = pool::add_liquidity(&empty, &position);
        let xi = 0.5 * pool::swap_boundaries(&filled)[3];
        let r = per_swap_reward(xi, 1, 4, &theta, &empty, 1.3, 1.3, RewardMode::SelfImpact)
            .unwrap();
        let total = filled.execute_swap(xi).unwrap().total_fee();
        assert_abs_diff_eq!(r, total, epsilon = 1e-12);
    }
}
