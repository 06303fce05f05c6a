//! Swap execution against the tick liquidity.
//!
//! The swap function walks ticks outward from the active tick in the
//! direction of the trade, working tick by tick in virtual-reserve
//! coordinates: with entry rate `r` a tick of liquidity `l` has virtual
//! reserves `(l*sqrt(r), l/sqrt(r))`, and depositing `x` token B moves the
//! virtual B reserve to `vb + x` while the virtual A reserve follows the
//! hyperbola `va = l^2 / vb`. The token-B capacity of a tick in each
//! direction is what bounds the per-tick fill.

use super::{PoolError, PoolState};

/// Result of executing a swap of `executed` token B.
///
/// `token_a_delta` is the amount of token A received by the swapper
/// (negative when the swapper deposits token A). `fees_per_tick` holds
/// `fee_rate * |dB_i|` for each touched tick; fees are charged on top of the
/// input and do not enter the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    pub token_a_delta: f64,
    pub new_pool_rate: f64,
    pub new_active_tick: usize,
    pub fees_per_tick: Vec<f64>,
    /// Token B actually executed; equals the request unless clamped.
    pub executed: f64,
}

impl SwapOutcome {
    pub fn total_fee(&self) -> f64 {
        self.fees_per_tick.iter().sum()
    }
}

struct Walk {
    token_a_delta: f64,
    new_pool_rate: f64,
    new_active_tick: usize,
    executed: f64,
}

/// Walks the swap, accumulating fees into `fees` (len d, caller-zeroed).
/// Returns the executed portion even when the pool runs out of capacity;
/// `complete` is false in that case.
fn walk(state: &PoolState, x: f64, fees: &mut [f64]) -> (Walk, bool) {
    let grid = state.grid();
    let d = state.tick_count();
    let gamma = state.fee_rate();
    let start = state.active_tick();
    let mut psi = 0.0;
    let mut i = start;

    if x > 0.0 {
        // Deposit token B, withdraw token A, moving up through ticks.
        let mut remaining = x;
        loop {
            let l = state.liquidity(i);
            if l > 0.0 {
                let entry = if i == start { state.pool_rate() } else { grid.point(i) };
                let top = grid.point(i + 1);
                let vb = l * entry.sqrt();
                let va = l / entry.sqrt();
                let cap = (l * top.sqrt() - vb).max(0.0);
                if remaining < cap {
                    let vb2 = vb + remaining;
                    let va2 = l * l / vb2;
                    psi += va - va2;
                    fees[i - 1] += gamma * remaining;
                    let w = Walk {
                        token_a_delta: psi,
                        new_pool_rate: vb2 / va2,
                        new_active_tick: i,
                        executed: x,
                    };
                    return (w, true);
                }
                psi += va - l / top.sqrt();
                fees[i - 1] += gamma * cap;
                remaining -= cap;
                if remaining <= 0.0 {
                    // Landed exactly on the tick's upper boundary.
                    let w = Walk {
                        token_a_delta: psi,
                        new_pool_rate: top,
                        new_active_tick: i,
                        executed: x,
                    };
                    return (w, true);
                }
            }
            if i == d {
                // A request equal to the pool's total capacity can leave a
                // few ulps unexecuted from accumulation order; treat that
                // as a complete fill at the grid edge.
                let complete = remaining <= 1e-9 * (1.0 + x.abs());
                let executed = if complete { x } else { x - remaining };
                let w = Walk {
                    token_a_delta: psi,
                    new_pool_rate: grid.point(d + 1),
                    new_active_tick: d,
                    executed,
                };
                return (w, complete);
            }
            i += 1;
        }
    } else {
        // Withdraw token B, deposit token A, moving down through ticks.
        let mut remaining = -x;
        loop {
            let l = state.liquidity(i);
            if l > 0.0 {
                let entry = if i == start { state.pool_rate() } else { grid.point(i + 1) };
                let bottom = grid.point(i);
                let vb = l * entry.sqrt();
                let va = l / entry.sqrt();
                let avail = (vb - l * bottom.sqrt()).max(0.0);
                if remaining < avail {
                    let vb2 = vb - remaining;
                    let va2 = l * l / vb2;
                    psi += va - va2;
                    fees[i - 1] += gamma * remaining;
                    let w = Walk {
                        token_a_delta: psi,
                        new_pool_rate: vb2 / va2,
                        new_active_tick: i,
                        executed: x,
                    };
                    return (w, true);
                }
                psi += va - l / bottom.sqrt();
                fees[i - 1] += gamma * avail;
                remaining -= avail;
                if remaining <= 0.0 {
                    // Drained to the tick's lower boundary; the boundary rate
                    // belongs to the tick below except at the grid floor.
                    let w = Walk {
                        token_a_delta: psi,
                        new_pool_rate: bottom,
                        new_active_tick: if i > 1 { i - 1 } else { 1 },
                        executed: x,
                    };
                    return (w, true);
                }
            }
            if i == 1 {
                let complete = remaining <= 1e-9 * (1.0 + x.abs());
                let executed = if complete { x } else { -((-x) - remaining) };
                let w = Walk {
                    token_a_delta: psi,
                    new_pool_rate: grid.point(1),
                    new_active_tick: 1,
                    executed,
                };
                return (w, complete);
            }
            i -= 1;
        }
    }
}

fn zero_outcome(state: &PoolState) -> SwapOutcome {
    SwapOutcome {
        token_a_delta: 0.0,
        new_pool_rate: state.pool_rate(),
        new_active_tick: state.active_tick(),
        fees_per_tick: vec![0.0; state.tick_count()],
        executed: 0.0,
    }
}

impl PoolState {
    /// Executes a swap of `x` token B (`x > 0` deposits B for A, `x < 0`
    /// takes B out for A). Errors if `x` exceeds the pool's remaining
    /// capacity in that direction, carrying the maximal executable amount.
    pub fn execute_swap(&self, x: f64) -> Result<SwapOutcome, PoolError> {
        if x == 0.0 {
            return Ok(zero_outcome(self));
        }
        let mut fees = vec![0.0; self.tick_count()];
        let (w, complete) = walk(self, x, &mut fees);
        if !complete {
            return Err(PoolError::CapacityExceeded {
                requested: x,
                max_executable: w.executed,
            });
        }
        Ok(SwapOutcome {
            token_a_delta: w.token_a_delta,
            new_pool_rate: w.new_pool_rate,
            new_active_tick: w.new_active_tick,
            fees_per_tick: fees,
            executed: w.executed,
        })
    }

    /// Like [`execute_swap`](Self::execute_swap) but clamps an over-capacity
    /// request to the executable amount instead of failing. The second
    /// return value is true when clamping occurred. `fees` must have length
    /// `d` and is zeroed here.
    pub fn execute_swap_clamped_into(
        &self,
        x: f64,
        fees: &mut [f64],
    ) -> ((f64, f64, usize, f64), bool) {
        fees.iter_mut().for_each(|f| *f = 0.0);
        if x == 0.0 {
            return (
                (0.0, self.pool_rate(), self.active_tick(), 0.0),
                false,
            );
        }
        let (w, complete) = walk(self, x, fees);
        (
            (w.token_a_delta, w.new_pool_rate, w.new_active_tick, w.executed),
            !complete,
        )
    }
}

/// Endpoints of the swap function's piecewise domains in token B: entry `i`
/// (1-based, `i in 1..=d+1`) is the cumulative token-B flow that carries the
/// rate to grid point `p_i`. Negative entries below the active tick are
/// withdrawable token B, positive entries above are deposit capacity.
#[allow(clippy::needless_range_loop)]
pub fn swap_boundaries(state: &PoolState) -> Vec<f64> {
    let d = state.tick_count();
    let i_star = state.active_tick();
    let grid = state.grid();
    let mut beta = vec![0.0; d + 1];
    // Downward: beta_i = -sum_{j=i..=i*} B_j.
    let mut acc = 0.0;
    for i in (1..=i_star).rev() {
        let (_, b) = state.tick_reserves(i);
        acc -= b;
        beta[i - 1] = acc;
    }
    // Upward: cumulative token-B deposit capacity from the active tick.
    let mut acc = 0.0;
    for i in i_star..=d {
        let l = state.liquidity(i);
        let full = l * (grid.point(i + 1).sqrt() - grid.point(i).sqrt());
        let (_, b) = state.tick_reserves(i);
        acc += full - b;
        beta[i] = acc;
    }
    beta
}
