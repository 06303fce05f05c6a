//! Equilibrium machinery: distribution metrics, type distributions,
//! calibration, and fictitious play.

mod calibrate;
mod fp;
mod nnls;

pub use calibrate::{
    calibrate_mfg, calibrate_nplayer, CalibrationConfig, CalibrationReport,
};
pub use fp::{
    certify_nplayer, fictitious_play_mfg, fictitious_play_nplayer, mfe_residual, FpConfig,
    FpTrace, MfgOutcome, NPlayerOutcome, NashCertification,
};
pub use nnls::nnls;

/// Best iterate carried by [`GameError::NonConvergence`].
#[derive(Debug, Clone, PartialEq)]
pub struct FpBest {
    pub liquidity: Vec<f64>,
    pub actions: Vec<(usize, usize)>,
    pub error: f64,
}

use crate::lp::LpType;
use crate::pool::{self, PoolError, PoolState};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("distribution has zero or negative mass")]
    ZeroMass,
    #[error("reference series has zero variance; r-score undefined")]
    ZeroVariance,
    #[error("reference series must be strictly positive for mape")]
    NonPositiveReference,
    #[error("invalid type distribution: {0}")]
    InvalidDistribution(String),
    #[error(
        "fictitious play did not converge: error {error} after {iterations} iterations \
         (threshold {thresh})"
    )]
    NonConvergence {
        iterations: usize,
        error: f64,
        thresh: f64,
        /// Lowest-error iterate seen, so callers can proceed with a flag.
        best: Box<FpBest>,
    },
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model encode/decode error: {0}")]
    Encode(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Distribution metrics
// ---------------------------------------------------------------------------

/// Wasserstein-1 distance between two liquidity vectors interpreted as
/// distributions over tick indices (ground metric: one tick = distance one).
/// Vectors are mass-normalized first; total mass is deliberately ignored and
/// reported separately by callers that care.
pub fn wasserstein1(f: &[f64], g: &[f64]) -> Result<f64, GameError> {
    if f.len() != g.len() {
        return Err(GameError::LengthMismatch(f.len(), g.len()));
    }
    let mf: f64 = f.iter().sum();
    let mg: f64 = g.iter().sum();
    if mf <= 0.0 || mg <= 0.0 {
        return Err(GameError::ZeroMass);
    }
    let mut cf = 0.0;
    let mut cg = 0.0;
    let mut dist = 0.0;
    // Sum of |CDF differences| over the first d-1 ticks (both CDFs are 1 at
    // the last tick).
    for i in 0..f.len() - 1 {
        cf += f[i] / mf;
        cg += g[i] / mg;
        dist += (cf - cg).abs();
    }
    Ok(dist)
}

/// Coefficient of determination of `f` against the reference `g`:
/// `1 - SS_res / SS_tot`. Errors when `g` has zero variance.
pub fn r_score(f: &[f64], g: &[f64]) -> Result<f64, GameError> {
    if f.len() != g.len() {
        return Err(GameError::LengthMismatch(f.len(), g.len()));
    }
    let n = g.len() as f64;
    let mean_g = g.iter().sum::<f64>() / n;
    let ss_tot: f64 = g.iter().map(|&y| (y - mean_g) * (y - mean_g)).sum();
    if ss_tot <= 0.0 {
        return Err(GameError::ZeroVariance);
    }
    let ss_res: f64 = f
        .iter()
        .zip(g.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute percentage error of `a` against the strictly positive
/// reference `b`, in percent.
pub fn mape(a: &[f64], b: &[f64]) -> Result<f64, GameError> {
    if a.len() != b.len() {
        return Err(GameError::LengthMismatch(a.len(), b.len()));
    }
    if b.iter().any(|&x| x <= 0.0) {
        return Err(GameError::NonPositiveReference);
    }
    let n = a.len() as f64;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / y)
        .sum::<f64>()
        / n
        * 100.0)
}

// ---------------------------------------------------------------------------
// Type distributions
// ---------------------------------------------------------------------------

/// One `(capital, belief)` cell of a type distribution with its
/// risk-aversion profile over the shared lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeCell {
    pub capital: f64,
    pub belief: i8,
    /// Total probability mass of the cell.
    pub weight: f64,
    /// Mass per lambda grid node; sums to `weight`.
    pub lambda_weights: Vec<f64>,
}

/// Discrete weights over `(capital, belief)` cells crossed with a
/// kernel-smoothed risk-aversion profile on a shared lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution {
    pub lambda_grid: Vec<f64>,
    pub cells: Vec<TypeCell>,
}

impl TypeDistribution {
    /// Equispaced lambda grid on `[0, lambda_max]`.
    pub fn lambda_grid(lambda_max: f64, nodes: usize) -> Vec<f64> {
        (0..nodes)
            .map(|i| lambda_max * i as f64 / (nodes - 1) as f64)
            .collect()
    }

    /// Point-mass distribution at explicit types; each lambda snaps to the
    /// nearest grid node.
    pub fn from_discrete(types: &[(LpType, f64)], lambda_grid: Vec<f64>) -> Self {
        let mut cells: Vec<TypeCell> = Vec::new();
        for &(theta, w) in types {
            let node = nearest_node(&lambda_grid, theta.risk_aversion);
            if let Some(cell) = cells
                .iter_mut()
                .find(|c| c.capital == theta.capital && c.belief == theta.belief)
            {
                cell.weight += w;
                cell.lambda_weights[node] += w;
            } else {
                let mut lw = vec![0.0; lambda_grid.len()];
                lw[node] = w;
                cells.push(TypeCell {
                    capital: theta.capital,
                    belief: theta.belief,
                    weight: w,
                    lambda_weights: lw,
                });
            }
        }
        TypeDistribution {
            lambda_grid,
            cells,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.cells.iter().map(|c| c.weight).sum()
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.lambda_grid.len() < 2 {
            return Err(GameError::InvalidDistribution(
                "lambda grid needs at least 2 nodes".into(),
            ));
        }
        if (self.total_weight() - 1.0).abs() > 1e-9 {
            return Err(GameError::InvalidDistribution(format!(
                "weights sum to {}, expected 1",
                self.total_weight()
            )));
        }
        for cell in &self.cells {
            if cell.lambda_weights.len() != self.lambda_grid.len() {
                return Err(GameError::InvalidDistribution(
                    "lambda weights length mismatch".into(),
                ));
            }
            if cell.lambda_weights.iter().any(|&w| w < 0.0) {
                return Err(GameError::InvalidDistribution(
                    "negative lambda weight".into(),
                ));
            }
            let s: f64 = cell.lambda_weights.iter().sum();
            if (s - cell.weight).abs() > 1e-9 * (1.0 + cell.weight) {
                return Err(GameError::InvalidDistribution(format!(
                    "cell ({}, {}) integrates to {}, weight {}",
                    cell.capital, cell.belief, s, cell.weight
                )));
            }
        }
        Ok(())
    }

    /// All `(type, mass)` atoms in a fixed order: cells in declaration
    /// order, lambda nodes inner. Strategies over the distribution are
    /// vectors aligned with this order.
    pub fn atoms(&self) -> Vec<(LpType, f64)> {
        let mut out = Vec::with_capacity(self.cells.len() * self.lambda_grid.len());
        for cell in &self.cells {
            for (node, &mass) in cell.lambda_weights.iter().enumerate() {
                out.push((
                    LpType::new(cell.capital, self.lambda_grid[node], cell.belief),
                    mass,
                ));
            }
        }
        out
    }

    /// Marginal over capital levels as `(capital, mass)` pairs.
    pub fn capital_marginal(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for cell in &self.cells {
            if let Some(e) = out.iter_mut().find(|e| e.0 == cell.capital) {
                e.1 += cell.weight;
            } else {
                out.push((cell.capital, cell.weight));
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), GameError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GameError> {
        let file = std::fs::File::open(path)?;
        let dist: TypeDistribution = serde_json::from_reader(std::io::BufReader::new(file))?;
        dist.validate()?;
        Ok(dist)
    }
}

fn nearest_node(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let d = (g - x).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Gaussian-kernel smoothing of discrete mass over the lambda grid,
/// truncated to the grid range and renormalized to preserve total mass.
/// Scott bandwidth on the weighted sample; point masses fall back to one
/// grid step so the result is a proper density.
pub(crate) fn smooth_lambda_kde(node_masses: &[f64], grid: &[f64]) -> Vec<f64> {
    let total: f64 = node_masses.iter().sum();
    let n = grid.len();
    if total <= 0.0 {
        return vec![0.0; n];
    }
    let mean: f64 = node_masses
        .iter()
        .zip(grid.iter())
        .map(|(w, g)| w * g)
        .sum::<f64>()
        / total;
    let var: f64 = node_masses
        .iter()
        .zip(grid.iter())
        .map(|(w, g)| w * (g - mean) * (g - mean))
        .sum::<f64>()
        / total;
    let n_eff = total * total
        / node_masses
            .iter()
            .map(|w| w * w)
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
    let step = grid[1] - grid[0];
    let h = (var.sqrt() * n_eff.powf(-0.2)).max(step);
    let mut out = vec![0.0; n];
    for (center, &mass) in grid.iter().zip(node_masses.iter()) {
        if mass == 0.0 {
            continue;
        }
        for (o, &g) in out.iter_mut().zip(grid.iter()) {
            let z = (g - center) / h;
            *o += mass * (-0.5 * z * z).exp();
        }
    }
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o *= total / s;
    }
    out
}

/// Liquidity distribution generated by a unit population distributed as
/// `dist` playing `strategy` (one action per atom, in `atoms()` order),
/// buying liquidity at the base pool's rates with market rate `market0`.
pub fn mfg_liquidity(
    strategy: &[(usize, usize)],
    dist: &TypeDistribution,
    base: &PoolState,
    market0: f64,
) -> Result<Vec<f64>, GameError> {
    let atoms = dist.atoms();
    if strategy.len() != atoms.len() {
        return Err(GameError::LengthMismatch(strategy.len(), atoms.len()));
    }
    let d = base.tick_count();
    let mut out = vec![0.0; d];
    for ((theta, mass), &(j1, j2)) in atoms.iter().zip(strategy.iter()) {
        if *mass == 0.0 {
            continue;
        }
        let u = pool::liquidity_per_tick(j1, j2, theta.capital, market0, base)?;
        for i in j1..j2.min(d + 1) {
            out[i - 1] += mass * u;
        }
    }
    Ok(out)
}
