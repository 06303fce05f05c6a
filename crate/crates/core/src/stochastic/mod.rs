//! Exogenous randomness: swap arrivals, swap sizes, and the market rate.
//!
//! Swappers are semi-strategic: both the chance that a block contains a swap
//! and the size of that swap depend on the pool's arbitrage level (pool rate
//! minus market rate). At most one swap occurs per block. Sizes are drawn
//! from a fitted joint density over (signed-log size, arbitrage level); see
//! [`JointSwapDensity`].

mod density;

pub use density::{
    fit_joint_density, fit_joint_density_with, synthetic_swap_samples, JointSwapDensity,
    KdeOptions, SyntheticSwapParams,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error("degenerate sample set for density fit: {0}")]
    DegenerateSamples(String),
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model encode/decode error: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Block-level swap arrival probability as a function of the arbitrage
/// level `x = pool_rate - market_rate`:
///
/// ```text
/// rho(x) = 1 / (1 + exp(-scale * |x| + offset))
/// ```
///
/// With the default parameters `rho(0) = 0.3505` and `rho -> 1` as `|x|`
/// grows. The defaults come from a fit against block-level arrival
/// frequencies; both are exposed because they are dataset-specific.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    pub scale: f64,
    pub offset: f64,
}

impl Default for ArrivalModel {
    fn default() -> Self {
        Self {
            scale: 0.01145,
            offset: 0.6169,
        }
    }
}

impl ArrivalModel {
    pub fn prob(&self, arbitrage: f64) -> f64 {
        1.0 / (1.0 + (-self.scale * arbitrage.abs() + self.offset).exp())
    }

    /// One Bernoulli draw with success probability `prob(arbitrage)`.
    /// Consumes exactly one uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, arbitrage: f64, rng: &mut R) -> bool {
        rng.gen::<f64>() < self.prob(arbitrage)
    }
}

/// Geometric market-rate dynamics between blocks:
///
/// ```text
/// m_t = m_{t-1} * exp((drift + belief/1000 - vol^2) * dt + vol * dW)
/// ```
///
/// with `dW ~ N(0, dt)` and `dt` the block interval in seconds. `belief` is
/// the holder's trend view in {-1, 0, 1}; it tilts the drift by one part per
/// thousand per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub drift: f64,
    pub vol: f64,
    pub belief: i8,
    pub dt: f64,
}

impl Default for MarketModel {
    fn default() -> Self {
        Self {
            drift: 0.0,
            vol: 0.00106,
            belief: 0,
            dt: 12.0,
        }
    }
}

impl MarketModel {
    pub fn with_belief(mut self, belief: i8) -> Self {
        self.belief = belief;
        self
    }

    /// Deterministic part of the per-block log increment.
    pub fn log_drift(&self) -> f64 {
        (self.drift + f64::from(self.belief) / 1000.0 - self.vol * self.vol) * self.dt
    }

    /// Per-block log-increment standard deviation.
    pub fn log_sd(&self) -> f64 {
        self.vol * self.dt.sqrt()
    }

    /// Advances the rate by one block. Consumes exactly one normal draw.
    pub fn step<R: Rng + ?Sized>(&self, prev: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        prev * (self.log_drift() + self.log_sd() * z).exp()
    }
}

/// Signed-log encoding of a token-B swap size: `sign(s) * log10(|s|)`.
///
/// The map is only invertible for `|s| >= 1` (below that the sign of the
/// encoding flips), so sub-unit swaps are excluded from density fitting.
pub fn signed_log_size(size: f64) -> Option<f64> {
    if !size.is_finite() || size.abs() < 1.0 {
        return None;
    }
    Some(size.signum() * size.abs().log10())
}

/// Inverse of [`signed_log_size`] on its valid range: `sign(v) * 10^|v|`.
/// Respects the sign bit so that encoded unit-size sells (`-0.0`) decode
/// back to `-1`.
pub fn decode_signed_log(v: f64) -> f64 {
    let mag = 10f64.powf(v.abs());
    if v.is_sign_negative() {
        -mag
    } else {
        mag
    }
}
