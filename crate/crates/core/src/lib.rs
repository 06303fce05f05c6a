//! Simulation laboratory for concentrated-liquidity AMM pools.
//!
//! The crate is organized around six subsystems:
//!
//! - [`pool`] — the constant-product pool itself: price grid, per-tick
//!   liquidity, multi-tick swap execution, and fee accounting.
//! - [`stochastic`] — the exogenous randomness: swap arrivals, a fitted joint
//!   density for swap sizes conditional on the arbitrage level, and the
//!   market-rate process.
//! - [`lp`] — liquidity-provider types, per-swap rewards, Monte-Carlo
//!   mean-variance value estimation, and the single-LP position scan.
//! - [`game`] — equilibrium machinery: Wasserstein-1 distance, non-negative
//!   least squares, type-distribution calibration, and fictitious play for
//!   both the N-player and mean-field formulations.
//! - [`bot`] — the JIT-liquidity attacker: closed-form attack thresholds,
//!   the leader-follower LP reward, and the per-block attack simulation.
//! - [`harness`] — scenario configuration, file ingestion, the sandwich-attack
//!   detector, the multi-period predictive runner, and report emission.
//!
//! All simulation entry points take explicit seeds and derive independent
//! per-path random streams, so results are reproducible bit-for-bit and do
//! not depend on the number of worker threads.

pub mod bot;
pub mod game;
pub mod harness;
pub mod lp;
pub mod pool;
pub mod rng;
pub mod stochastic;

pub use pool::{LiquidityPosition, PoolError, PoolState, PriceGrid, SwapOutcome};

/// Sizes rayon's global worker pool (0 = library default). Call once,
/// before any parallel work; later calls are ignored. Results never depend
/// on the thread count.
pub fn configure_threads(n: usize) {
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
}
