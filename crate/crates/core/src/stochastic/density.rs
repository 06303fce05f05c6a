//! Joint density of (signed-log swap size, arbitrage level).
//!
//! A product-Gaussian kernel density estimate evaluated on a fixed
//! rectangular grid. Conditional sampling takes the grid column nearest the
//! requested arbitrage level, renormalizes it, and inverts its piecewise-
//! constant CDF, so one uniform draw yields one swap size.

use super::{decode_signed_log, StochasticError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

/// Grid and bandwidth controls for [`fit_joint_density_with`].
#[derive(Debug, Clone, Copy)]
pub struct KdeOptions {
    /// Grid resolution (size axis, arbitrage axis).
    pub grid: (usize, usize),
    /// Multiplier on the Scott bandwidths.
    pub bandwidth_scale: f64,
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            grid: (256, 256),
            bandwidth_scale: 1.0,
        }
    }
}

/// Fitted joint density over (signed-log size `v`, arbitrage level `y`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointSwapDensity {
    v_grid: Vec<f64>,
    y_grid: Vec<f64>,
    /// Row-major `values[iy * nv + iv]`, normalized to integrate to 1 on
    /// the grid.
    values: Vec<f64>,
    bandwidth: (f64, f64),
    n_samples: usize,
    /// Per-column cumulative distribution over `v`, normalized to 1.
    #[serde(skip)]
    column_cdf: Vec<f64>,
    #[serde(skip, default = "new_flag")]
    clamp_warned: std::sync::Arc<AtomicBool>,
}

fn new_flag() -> std::sync::Arc<AtomicBool> {
    std::sync::Arc::new(AtomicBool::new(false))
}

/// Fits with default options. Needs at least two samples with positive
/// spread on both axes.
pub fn fit_joint_density(
    samples: &[(f64, f64)],
) -> Result<JointSwapDensity, StochasticError> {
    fit_joint_density_with(samples, KdeOptions::default())
}

pub fn fit_joint_density_with(
    samples: &[(f64, f64)],
    opts: KdeOptions,
) -> Result<JointSwapDensity, StochasticError> {
    let n = samples.len();
    if n < 2 {
        return Err(StochasticError::DegenerateSamples(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    if samples
        .iter()
        .any(|(v, y)| !v.is_finite() || !y.is_finite())
    {
        return Err(StochasticError::DegenerateSamples(
            "non-finite sample".into(),
        ));
    }
    let (sd_v, sd_y) = (spread(samples.iter().map(|s| s.0)), spread(samples.iter().map(|s| s.1)));
    if sd_v <= 0.0 || sd_y <= 0.0 {
        return Err(StochasticError::DegenerateSamples(
            "zero spread on one axis".into(),
        ));
    }
    // Scott's rule per dimension for a 2-d product kernel.
    let factor = (n as f64).powf(-1.0 / 6.0) * opts.bandwidth_scale;
    let h_v = sd_v * factor;
    let h_y = sd_y * factor;

    let (nv, ny) = opts.grid;
    let v_grid = padded_grid(samples.iter().map(|s| s.0), 3.0 * h_v, nv);
    let y_grid = padded_grid(samples.iter().map(|s| s.1), 3.0 * h_y, ny);

    // Sum of per-sample outer products of the two kernel vectors.
    let mut values = vec![0.0; nv * ny];
    let mut kv = vec![0.0; nv];
    let mut ky = vec![0.0; ny];
    for &(v, y) in samples {
        for (j, g) in v_grid.iter().enumerate() {
            let z = (g - v) / h_v;
            kv[j] = (-0.5 * z * z).exp();
        }
        for (k, g) in y_grid.iter().enumerate() {
            let z = (g - y) / h_y;
            ky[k] = (-0.5 * z * z).exp();
        }
        for (k, &wy) in ky.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            let row = &mut values[k * nv..(k + 1) * nv];
            for (cell, &wv) in row.iter_mut().zip(kv.iter()) {
                *cell += wy * wv;
            }
        }
    }
    // Normalize to unit mass on the grid; the Gaussian prefactors cancel.
    let dv = v_grid[1] - v_grid[0];
    let dy = y_grid[1] - y_grid[0];
    let total: f64 = values.iter().sum::<f64>() * dv * dy;
    if total <= 0.0 {
        return Err(StochasticError::DegenerateSamples(
            "density vanished on grid".into(),
        ));
    }
    for cell in &mut values {
        *cell /= total;
    }

    let column_cdf = build_column_cdfs(&values, nv, ny);
    Ok(JointSwapDensity {
        v_grid,
        y_grid,
        values,
        bandwidth: (h_v, h_y),
        n_samples: n,
        column_cdf,
        clamp_warned: new_flag(),
    })
}

fn spread(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = it.clone().count() as f64;
    let mean = it.clone().sum::<f64>() / n;
    let var = it.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

fn padded_grid(it: impl Iterator<Item = f64> + Clone, pad: f64, n: usize) -> Vec<f64> {
    let lo = it.clone().fold(f64::INFINITY, f64::min) - pad;
    let hi = it.fold(f64::NEG_INFINITY, f64::max) + pad;
    (0..n)
        .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
        .collect()
}

fn build_column_cdfs(values: &[f64], nv: usize, ny: usize) -> Vec<f64> {
    let mut cdf = vec![0.0; nv * ny];
    for k in 0..ny {
        let row = &values[k * nv..(k + 1) * nv];
        let total: f64 = row.iter().sum();
        let out = &mut cdf[k * nv..(k + 1) * nv];
        let mut acc = 0.0;
        if total > 0.0 {
            for (o, &w) in out.iter_mut().zip(row.iter()) {
                acc += w / total;
                *o = acc;
            }
        } else {
            // Column too far from any sample for the kernels to reach:
            // fall back to uniform.
            for (j, o) in out.iter_mut().enumerate() {
                *o = (j + 1) as f64 / nv as f64;
            }
        }
        out[nv - 1] = 1.0;
    }
    cdf
}

impl JointSwapDensity {
    pub fn bandwidth(&self) -> (f64, f64) {
        self.bandwidth
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn v_grid(&self) -> &[f64] {
        &self.v_grid
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    /// Grid cell value nearest to `(v, y)`.
    pub fn grid_density_at(&self, v: f64, y: f64) -> f64 {
        let iv = nearest(&self.v_grid, v);
        let iy = nearest(&self.y_grid, y);
        self.values[iy * self.v_grid.len() + iv]
    }

    /// Mass of the whole grid under cell quadrature (1 by construction, up
    /// to accumulation error).
    pub fn grid_mass(&self) -> f64 {
        let dv = self.v_grid[1] - self.v_grid[0];
        let dy = self.y_grid[1] - self.y_grid[0];
        self.values.iter().sum::<f64>() * dv * dy
    }

    /// Conditional probabilities over the size axis at the column nearest
    /// `arbitrage`.
    pub fn conditional_slice(&self, arbitrage: f64) -> Vec<f64> {
        let nv = self.v_grid.len();
        let iy = self.column_index(arbitrage);
        let row = &self.values[iy * nv..(iy + 1) * nv];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / nv as f64; nv]
        }
    }

    /// Conditional mean of the signed-log size at the given arbitrage level.
    pub fn conditional_mean(&self, arbitrage: f64) -> f64 {
        self.conditional_slice(arbitrage)
            .iter()
            .zip(self.v_grid.iter())
            .map(|(p, v)| p * v)
            .sum()
    }

    fn column_index(&self, arbitrage: f64) -> usize {
        let (lo, hi) = (self.y_grid[0], *self.y_grid.last().unwrap());
        if (arbitrage < lo || arbitrage > hi) && !self.clamp_warned.swap(true, Ordering::Relaxed) {
            log::warn!(
                "arbitrage level {arbitrage} outside fitted grid [{lo}, {hi}]; clamping \
                 (warning emitted once per model)"
            );
        }
        nearest(&self.y_grid, arbitrage)
    }

    /// Draws a signed-log size from the conditional distribution at
    /// `arbitrage`. Consumes exactly one uniform.
    pub fn sample_signed_log<R: Rng + ?Sized>(&self, arbitrage: f64, rng: &mut R) -> f64 {
        self.sample_signed_log_with(arbitrage, rng.gen())
    }

    /// Inverse-CDF transform of an externally supplied uniform; the
    /// simulation engine uses this to keep its per-block draw count fixed.
    pub fn sample_signed_log_with(&self, arbitrage: f64, u: f64) -> f64 {
        let nv = self.v_grid.len();
        let iy = self.column_index(arbitrage);
        let cdf = &self.column_cdf[iy * nv..(iy + 1) * nv];
        let j = cdf.partition_point(|&c| c < u).min(nv - 1);
        let lo_c = if j == 0 { 0.0 } else { cdf[j - 1] };
        let w = cdf[j] - lo_c;
        let frac = if w > 0.0 { (u - lo_c) / w } else { 0.5 };
        let dv = self.v_grid[1] - self.v_grid[0];
        self.v_grid[j] + (frac - 0.5) * dv
    }

    /// Signed token-B size from an externally supplied uniform.
    pub fn sample_size_with(&self, arbitrage: f64, u: f64) -> f64 {
        decode_signed_log(self.sample_signed_log_with(arbitrage, u))
    }

    /// Draws a signed token-B swap size at the given arbitrage level.
    pub fn sample_size<R: Rng + ?Sized>(&self, arbitrage: f64, rng: &mut R) -> f64 {
        decode_signed_log(self.sample_signed_log(arbitrage, rng))
    }

    pub fn save(&self, path: &Path) -> Result<(), StochasticError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StochasticError> {
        let file = std::fs::File::open(path)?;
        let mut model: JointSwapDensity =
            serde_json::from_reader(std::io::BufReader::new(file))?;
        model.column_cdf =
            build_column_cdfs(&model.values, model.v_grid.len(), model.y_grid.len());
        Ok(model)
    }
}

fn nearest(grid: &[f64], x: f64) -> usize {
    if x <= grid[0] {
        return 0;
    }
    if x >= *grid.last().unwrap() {
        return grid.len() - 1;
    }
    let hi = grid.partition_point(|&g| g < x);
    if (grid[hi] - x).abs() < (x - grid[hi - 1]).abs() {
        hi
    } else {
        hi - 1
    }
}

/// Parameters for the built-in synthetic swap-history generator, used when a
/// scenario supplies no historical swap file.
///
/// Positive arbitrage (pool above market) tilts draws toward sales of token
/// A (negative sizes), giving the negative size/arbitrage correlation seen
/// in production flows, and the two signed clusters make the signed-log
/// marginal bimodal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyntheticSwapParams {
    pub n: usize,
    /// Center of log10 |size| for both clusters.
    pub log_size_mean: f64,
    pub log_size_sd: f64,
    /// Spread of observed arbitrage levels (token B).
    pub arbitrage_sd: f64,
    /// Logistic slope of P(buy) in the arbitrage level; > 0 produces the
    /// negative correlation.
    pub direction_slope: f64,
}

impl Default for SyntheticSwapParams {
    fn default() -> Self {
        Self {
            n: 4000,
            log_size_mean: 3.0,
            log_size_sd: 0.8,
            arbitrage_sd: 4.0,
            direction_slope: 0.35,
        }
    }
}

/// Generates (signed-log size, arbitrage) pairs from the synthetic model.
pub fn synthetic_swap_samples(params: &SyntheticSwapParams, seed: u64) -> Vec<(f64, f64)> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = crate::rng::stream_rng(seed, 0);
    (0..params.n)
        .map(|_| {
            let y: f64 = {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * params.arbitrage_sd
            };
            let p_buy = 1.0 / (1.0 + (params.direction_slope * y).exp());
            let sign = if rng.gen::<f64>() < p_buy { 1.0 } else { -1.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            let mag = (params.log_size_mean + params.log_size_sd * z).max(0.05);
            (sign * mag, y)
        })
        .collect()
}
