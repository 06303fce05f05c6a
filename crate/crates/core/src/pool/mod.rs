//! Concentrated-liquidity constant-product pool.
//!
//! A pool partitions the supported exchange-rate range (units B/A) into `d`
//! ticks bounded by `d+1` grid points. Each tick holds its own liquidity
//! `l_i`, and the token reserves of a tick are derived from `(l_i, rate)`:
//! ticks below the active tick hold only token B, ticks above hold only
//! token A, and the active tick holds both. Reserves of tick `i` satisfy the
//! shifted constant-product identity
//!
//! ```text
//! (B_i + l_i * sqrt(p_i)) * (A_i + l_i / sqrt(p_{i+1})) = l_i^2
//! ```
//!
//! Tick indices are 1-based throughout the crate: tick `i` spans
//! `[p_i, p_{i+1})` for `i in 1..=d`. Ingestion maps 0-based external data on
//! load.
//!
//! Swaps change the pool rate but not the liquidity vector; liquidity
//! additions change the liquidity vector but not the pool rate. Fees are
//! charged on top of the swap input at rate `fee_rate` and accrue outside
//! the pool: they never compound into reserves.

mod swap;

pub use swap::{swap_boundaries, SwapOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by pool construction and pool operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PoolError {
    #[error("price grid needs at least 2 points, got {0}")]
    GridTooShort(usize),
    #[error("price grid must be strictly increasing and positive at index {index}: {value}")]
    GridNotIncreasing { index: usize, value: f64 },
    #[error("rate {rate} outside grid span [{low}, {high})")]
    RateOutOfRange { rate: f64, low: f64, high: f64 },
    #[error("liquidity vector has {got} entries, grid has {expected} ticks")]
    LiquidityLengthMismatch { expected: usize, got: usize },
    #[error("negative liquidity {value} in tick {tick}")]
    NegativeLiquidity { tick: usize, value: f64 },
    #[error("fee rate {0} outside [0, 1)")]
    InvalidFeeRate(f64),
    #[error("invalid position ({lower}, {upper}) for a {ticks}-tick grid")]
    InvalidPosition { lower: usize, upper: usize, ticks: usize },
    #[error("degenerate position: unit capital requirement {denom} is not positive")]
    DegeneratePosition { denom: f64 },
    #[error("swap of {requested} token B exceeds pool capacity; at most {max_executable} executable")]
    CapacityExceeded { requested: f64, max_executable: f64 },
}

/// Ordered tick boundaries `p_1 < p_2 < ... < p_{d+1}`, units B/A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceGrid {
    points: Vec<f64>,
}

impl PriceGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, PoolError> {
        if points.len() < 2 {
            return Err(PoolError::GridTooShort(points.len()));
        }
        let mut prev = 0.0;
        for (idx, &p) in points.iter().enumerate() {
            if !p.is_finite() || p <= prev {
                return Err(PoolError::GridNotIncreasing {
                    index: idx + 1,
                    value: p,
                });
            }
            prev = p;
        }
        Ok(Self { points })
    }

    /// Number of ticks `d`.
    pub fn tick_count(&self) -> usize {
        self.points.len() - 1
    }

    /// Grid point `p_i`, 1-based, `i in 1..=d+1`.
    pub fn point(&self, i: usize) -> f64 {
        self.points[i - 1]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Smallest and one-past-largest supported rates.
    pub fn span(&self) -> (f64, f64) {
        (self.points[0], *self.points.last().unwrap())
    }

    /// Index of the tick holding `rate`: `max{i : p_i < rate}`, with the
    /// boundary convention that `rate == p_1` maps to tick 1.
    pub fn active_tick(&self, rate: f64) -> Result<usize, PoolError> {
        let (low, high) = self.span();
        if !(rate >= low && rate < high) {
            return Err(PoolError::RateOutOfRange { rate, low, high });
        }
        if rate == low {
            return Ok(1);
        }
        // partition_point returns the count of points strictly below rate.
        let below = self.points.partition_point(|&p| p < rate);
        Ok(below.min(self.tick_count()))
    }
}

/// Full pool state: grid, per-tick liquidity, current rate and fee rate.
///
/// Immutable value; operations return fresh states or pure results.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    grid: PriceGrid,
    liquidity: Vec<f64>,
    pool_rate: f64,
    fee_rate: f64,
    active: usize,
}

impl PoolState {
    pub fn new(
        grid: PriceGrid,
        liquidity: Vec<f64>,
        pool_rate: f64,
        fee_rate: f64,
    ) -> Result<Self, PoolError> {
        if liquidity.len() != grid.tick_count() {
            return Err(PoolError::LiquidityLengthMismatch {
                expected: grid.tick_count(),
                got: liquidity.len(),
            });
        }
        for (idx, &l) in liquidity.iter().enumerate() {
            if !l.is_finite() || l < 0.0 {
                return Err(PoolError::NegativeLiquidity {
                    tick: idx + 1,
                    value: l,
                });
            }
        }
        if !(0.0..1.0).contains(&fee_rate) {
            return Err(PoolError::InvalidFeeRate(fee_rate));
        }
        let active = Self::active_for_rate(&grid, pool_rate)?;
        Ok(Self {
            grid,
            liquidity,
            pool_rate,
            fee_rate,
            active,
        })
    }

    /// Like [`PriceGrid::active_tick`] but also accepts the closed top of
    /// the grid, which a capacity-exhausting swap legitimately reaches;
    /// the last tick is active there (with zero remaining deposit room).
    fn active_for_rate(grid: &PriceGrid, rate: f64) -> Result<usize, PoolError> {
        if rate == grid.span().1 {
            Ok(grid.tick_count())
        } else {
            grid.active_tick(rate)
        }
    }

    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    pub fn tick_count(&self) -> usize {
        self.grid.tick_count()
    }

    pub fn pool_rate(&self) -> f64 {
        self.pool_rate
    }

    pub fn fee_rate(&self) -> f64 {
        self.fee_rate
    }

    /// Cached active tick index `i*` (1-based).
    pub fn active_tick(&self) -> usize {
        self.active
    }

    /// Liquidity of tick `i`, 1-based.
    pub fn liquidity(&self, i: usize) -> f64 {
        self.liquidity[i - 1]
    }

    pub fn liquidity_vec(&self) -> &[f64] {
        &self.liquidity
    }

    /// Token reserves `(A_i, B_i)` of tick `i` derived from `(l_i, rate)`.
    pub fn tick_reserves(&self, i: usize) -> (f64, f64) {
        tick_tokens(
            self.liquidity(i),
            i,
            &self.grid,
            self.pool_rate,
            self.active,
        )
    }

    /// State after a swap: same liquidity, updated rate and active tick.
    pub fn after_swap(&self, outcome: &SwapOutcome) -> PoolState {
        let mut next = self.clone();
        next.pool_rate = outcome.new_pool_rate;
        next.active = outcome.new_active_tick;
        next
    }

    /// Replaces the liquidity vector, keeping rate and fee. Used by the
    /// simulation layers to restore a reference distribution.
    pub fn with_liquidity(&self, liquidity: Vec<f64>) -> Result<PoolState, PoolError> {
        PoolState::new(self.grid.clone(), liquidity, self.pool_rate, self.fee_rate)
    }

    /// State identical to `self` but at a different rate.
    pub fn at_rate(&self, rate: f64) -> Result<PoolState, PoolError> {
        let active = Self::active_for_rate(&self.grid, rate)?;
        let mut next = self.clone();
        next.pool_rate = rate;
        next.active = active;
        Ok(next)
    }

    pub(crate) fn set_rate_unchecked(&mut self, rate: f64, active: usize) {
        self.pool_rate = rate;
        self.active = active;
    }

    pub(crate) fn liquidity_mut(&mut self) -> &mut Vec<f64> {
        &mut self.liquidity
    }
}

/// Token reserves `(A, B)` held by tick `i` for liquidity `l` at pool `rate`
/// with active tick `active`.
pub fn tick_tokens(l: f64, i: usize, grid: &PriceGrid, rate: f64, active: usize) -> (f64, f64) {
    let lo = grid.point(i);
    let hi = grid.point(i + 1);
    if i < active {
        (0.0, l * (hi.sqrt() - lo.sqrt()))
    } else if i > active {
        (l * (1.0 / lo.sqrt() - 1.0 / hi.sqrt()), 0.0)
    } else {
        (
            l * (1.0 / rate.sqrt() - 1.0 / hi.sqrt()),
            l * (rate.sqrt() - lo.sqrt()),
        )
    }
}

/// A liquidity position: `units_per_tick` liquidity on every tick in
/// `[lower, upper)`, tick indices 1-based with `upper <= d+1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidityPosition {
    pub lower: usize,
    pub upper: usize,
    pub units_per_tick: f64,
}

impl LiquidityPosition {
    pub fn new(lower: usize, upper: usize, units_per_tick: f64) -> Result<Self, PoolError> {
        if lower < 1 || lower >= upper {
            return Err(PoolError::InvalidPosition {
                lower,
                upper,
                ticks: 0,
            });
        }
        Ok(Self {
            lower,
            upper,
            units_per_tick,
        })
    }

    pub fn contains(&self, tick: usize) -> bool {
        tick >= self.lower && tick < self.upper
    }

    /// Expands to a `d`-vector with `units_per_tick` on covered ticks.
    pub fn expand(&self, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        for i in self.lower..self.upper {
            v[i - 1] = self.units_per_tick;
        }
        v
    }
}

/// Per-unit token requirement `(dA, dB)` of the range `[j1, j2)` at the
/// pool's current rate: the tokens needed to put one unit of liquidity on
/// each covered tick.
pub fn position_unit_tokens(j1: usize, j2: usize, state: &PoolState) -> Result<(f64, f64), PoolError> {
    let d = state.tick_count();
    if j1 < 1 || j2 > d + 1 || j1 >= j2 {
        return Err(PoolError::InvalidPosition {
            lower: j1,
            upper: j2,
            ticks: d,
        });
    }
    let grid = state.grid();
    let i_star = state.active_tick();
    let rate = state.pool_rate();
    // The per-tick requirements telescope within each of the three regimes.
    let (da, db) = if j2 <= i_star {
        // Entirely below the active tick: all token B.
        (0.0, grid.point(j2).sqrt() - grid.point(j1).sqrt())
    } else if j1 > i_star {
        // Entirely above: all token A.
        (
            1.0 / grid.point(j1).sqrt() - 1.0 / grid.point(j2).sqrt(),
            0.0,
        )
    } else {
        (
            1.0 / rate.sqrt() - 1.0 / grid.point(j2).sqrt(),
            rate.sqrt() - grid.point(j1).sqrt(),
        )
    };
    Ok((da, db))
}

/// Units of liquidity per tick bought by `capital` token B spread over
/// `[j1, j2)`, with token A valued at the market rate `market_rate`.
pub fn liquidity_per_tick(
    j1: usize,
    j2: usize,
    capital: f64,
    market_rate: f64,
    state: &PoolState,
) -> Result<f64, PoolError> {
    let (da, db) = position_unit_tokens(j1, j2, state)?;
    let denom = db + market_rate * da;
    // NaN-aware: anything that is not strictly positive is degenerate.
    if denom.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(PoolError::DegeneratePosition { denom });
    }
    Ok(capital / denom)
}

/// Adds a position to the pool. The pool rate is unchanged: additions scale
/// reserves within each covered tick but never move the rate.
pub fn add_liquidity(state: &PoolState, position: &LiquidityPosition) -> PoolState {
    let mut next = state.clone();
    let upper = position.upper.min(state.tick_count() + 1);
    for i in position.lower..upper {
        next.liquidity_mut()[i - 1] += position.units_per_tick;
    }
    next
}

/// Fraction of tick `i`'s fees the position would earn after being added to
/// `state`: `u / (l_i + u)` on covered ticks, 0 elsewhere.
pub fn fee_share(position: &LiquidityPosition, state: &PoolState, i: usize) -> f64 {
    if !position.contains(i) || position.units_per_tick <= 0.0 {
        return 0.0;
    }
    let u = position.units_per_tick;
    u / (state.liquidity(i) + u)
}
