//! Calibration of a type distribution to an observed liquidity target.
//!
//! Both procedures look for a distribution over `(capital, risk-aversion,
//! belief)` whose best responses regenerate the target distribution. The
//! N-player form prices each candidate type against Monte-Carlo samples of
//! the other players' actions; the mean-field form prices types against the
//! target directly, which removes the sample dimension and is why it is an
//! order of magnitude faster on the same instance.

use super::{
    nnls::nnls, smooth_lambda_kde, GameError, TypeCell, TypeDistribution,
};
use crate::lp::sim::{position_profit, run_path, AttackPolicy, RewardMode};
use crate::lp::{ActionSpace, SimContext, ValueEstimate};
use crate::pool::{self, LiquidityPosition};
use crate::rng::{derive_seed, stream_rng};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    pub capitals: Vec<f64>,
    pub beliefs: Vec<i8>,
    pub lambda_max: f64,
    pub lambda_nodes: usize,
    /// Opponent-profile sample count for the N-player procedure.
    pub opponent_samples: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            capitals: vec![2124.0, 35786.0, 1_706_034.0],
            beliefs: vec![-1, 0, 1],
            lambda_max: 5.0,
            lambda_nodes: 30,
            opponent_samples: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    /// Residual norm of the non-negative fit against the target.
    pub residual: f64,
    /// Best-response action per atom (cells x lambda nodes).
    pub best_responses: Vec<(usize, usize)>,
    /// Mass of fitted actions no type best-responded with (N-player only;
    /// renormalized away with a warning).
    pub unmatched_mass: f64,
    pub elapsed: Duration,
}

fn scaffold(cfg: &CalibrationConfig) -> TypeDistribution {
    let lambda_grid = TypeDistribution::lambda_grid(cfg.lambda_max, cfg.lambda_nodes);
    let n_cells = cfg.capitals.len() * cfg.beliefs.len();
    let cells = cfg
        .capitals
        .iter()
        .flat_map(|&capital| {
            cfg.beliefs.iter().map(move |&belief| (capital, belief))
        })
        .map(|(capital, belief)| {
            let w = 1.0 / n_cells as f64;
            let mut lw = vec![0.0; cfg.lambda_nodes];
            lw[0] = w;
            TypeCell {
                capital,
                belief,
                weight: w,
                lambda_weights: lw,
            }
        })
        .collect();
    TypeDistribution {
        lambda_grid,
        cells,
    }
}

/// Turns per-atom fitted mass into a smoothed distribution.
fn distribution_from_atom_masses(
    cfg: &CalibrationConfig,
    template: &TypeDistribution,
    atom_mass: &[f64],
) -> Result<TypeDistribution, GameError> {
    let total: f64 = atom_mass.iter().sum();
    if total <= 0.0 {
        return Err(GameError::ZeroMass);
    }
    let nodes = cfg.lambda_nodes;
    let mut cells = Vec::with_capacity(template.cells.len());
    for (cell_idx, cell) in template.cells.iter().enumerate() {
        let raw: Vec<f64> = (0..nodes)
            .map(|n| atom_mass[cell_idx * nodes + n] / total)
            .collect();
        let weight: f64 = raw.iter().sum();
        let lambda_weights = if weight > 0.0 {
            smooth_lambda_kde(&raw, &template.lambda_grid)
        } else {
            vec![0.0; nodes]
        };
        cells.push(TypeCell {
            capital: cell.capital,
            belief: cell.belief,
            weight,
            lambda_weights,
        });
    }
    let dist = TypeDistribution {
        lambda_grid: template.lambda_grid.clone(),
        cells,
    };
    dist.validate()?;
    Ok(dist)
}

/// Mean-field calibration: per-type best responses to the target stored in
/// `ctx.base`, capital-scaled position rows, and a non-negative fit of row
/// weights against the target.
pub fn calibrate_mfg(
    ctx: &SimContext,
    cfg: &CalibrationConfig,
    policy: Option<&dyn AttackPolicy>,
) -> Result<(TypeDistribution, CalibrationReport), GameError> {
    let start = Instant::now();
    let d = ctx.base.tick_count();
    let space = ActionSpace::new(d);
    let template = scaffold(cfg);
    let units: Vec<Vec<f64>> = template
        .cells
        .iter()
        .map(|cell| {
            space
                .actions()
                .iter()
                .map(|&(j1, j2)| {
                    pool::liquidity_per_tick(j1, j2, cell.capital, ctx.market0, ctx.base)
                        .map_err(GameError::from)
                })
                .collect::<Result<Vec<f64>, GameError>>()
        })
        .collect::<Result<_, _>>()?;
    let best_responses =
        super::fp::mfg_best_response_for_calibration(&template, &units, &space, ctx, policy);

    // Row per atom: the liquidity its type would contribute with its best
    // response; fit non-negative row weights against the target.
    let n_atoms = best_responses.len();
    let nodes = cfg.lambda_nodes;
    let mut a = DMatrix::zeros(d, n_atoms);
    for (atom, &(j1, j2)) in best_responses.iter().enumerate() {
        let u = units[atom / nodes][space
            .actions()
            .iter()
            .position(|&x| x == (j1, j2))
            .expect("action in space")];
        for i in j1..j2.min(d + 1) {
            a[(i - 1, atom)] = u;
        }
    }
    let b = DVector::from_column_slice(ctx.base.liquidity_vec());
    let (x, residual) = nnls(&a, &b);
    let dist = distribution_from_atom_masses(cfg, &template, x.as_slice())?;
    let report = CalibrationReport {
        residual,
        best_responses,
        unmatched_mass: 0.0,
        elapsed: start.elapsed(),
    };
    Ok((dist, report))
}

/// N-player calibration: fit an action law over unit positions to the
/// target, sample opponent profiles from it, best-respond every candidate
/// type against those samples, then split the action law's mass equally
/// among the types that best-respond with each action.
pub fn calibrate_nplayer(
    ctx: &SimContext,
    n_players: usize,
    cfg: &CalibrationConfig,
) -> Result<(TypeDistribution, CalibrationReport), GameError> {
    assert!(n_players >= 2, "need at least two players");
    let start = Instant::now();
    let d = ctx.base.tick_count();
    let space = ActionSpace::new(d);
    let n_actions = space.len();

    // Action law from a non-negative fit of unit rectangles to the target.
    let mut a = DMatrix::zeros(d, n_actions);
    for (q, &(j1, j2)) in space.actions().iter().enumerate() {
        for i in j1..j2.min(d + 1) {
            a[(i - 1, q)] = 1.0;
        }
    }
    let b = DVector::from_column_slice(ctx.base.liquidity_vec());
    let (x, residual) = nnls(&a, &b);
    let x_total: f64 = x.iter().sum();
    if x_total <= 0.0 {
        return Err(GameError::ZeroMass);
    }
    let mu: Vec<f64> = x.iter().map(|v| v / x_total).collect();

    // Sampled opponent worlds. Every sampled action carries the same
    // liquidity x_q / ((N-1) mu_q) = |x| / (N-1), which makes the sampled
    // pools unbiased for the target.
    let s_count = cfg.opponent_samples;
    let per_opponent = x_total / (n_players - 1) as f64;
    let mut cum = vec![0.0; n_actions];
    let mut acc = 0.0;
    for (c, m) in cum.iter_mut().zip(mu.iter()) {
        acc += m;
        *c = acc;
    }
    let mut sampler = stream_rng(derive_seed(ctx.seed, 0x0c41), 0);
    use rand::Rng;
    let opponent_pools: Vec<Vec<f64>> = (0..s_count)
        .map(|_| {
            let mut l = vec![0.0; d];
            for _ in 0..n_players - 1 {
                let u: f64 = sampler.gen();
                let q = cum.partition_point(|&c| c < u).min(n_actions - 1);
                let (j1, j2) = space.get(q);
                for i in j1..j2.min(d + 1) {
                    l[i - 1] += per_opponent;
                }
            }
            l
        })
        .collect();

    let template = scaffold(cfg);
    let nodes = cfg.lambda_nodes;
    let empty = ctx.base.with_liquidity(vec![0.0; d])?;

    // Per cell: (mean, variance) of path profits per (action, sample);
    // the lambda sweep is then pure algebra.
    let mut best_responses = vec![(0usize, 0usize); template.cells.len() * nodes];
    for (cell_idx, cell) in template.cells.iter().enumerate() {
        let units: Vec<f64> = space
            .actions()
            .iter()
            .map(|&(j1, j2)| {
                pool::liquidity_per_tick(j1, j2, cell.capital, ctx.market0, ctx.base)
            })
            .collect::<Result<_, _>>()?;
        let market = ctx.market.with_belief(cell.belief);
        let seed = derive_seed(ctx.seed, 0xca00 + cell_idx as u64);
        let stats: Vec<Vec<(f64, f64)>> = opponent_pools
            .par_iter()
            .map(|opp| {
                let pool = empty.with_liquidity(opp.clone()).expect("valid sample");
                space
                    .actions()
                    .iter()
                    .enumerate()
                    .map(|(ai, &(j1, j2))| {
                        let u = units[ai];
                        let pos = LiquidityPosition::new(j1, j2, u).expect("valid");
                        let exec = pool::add_liquidity(&pool, &pos);
                        let profits: Vec<f64> = (0..ctx.n_paths)
                            .map(|p| {
                                let mut rng = stream_rng(seed, p as u64);
                                let totals = run_path(
                                    &exec,
                                    &market,
                                    ctx.market0,
                                    ctx.horizon,
                                    ctx.arrival,
                                    ctx.sizes,
                                    None,
                                    &mut rng,
                                );
                                position_profit(
                                    &totals,
                                    j1,
                                    j2,
                                    u,
                                    pool.liquidity_vec(),
                                    RewardMode::SelfImpact,
                                    0.0,
                                )
                            })
                            .collect();
                        let est = ValueEstimate::from_profits(&profits, 0.0);
                        (est.mean, est.variance)
                    })
                    .collect()
            })
            .collect();
        // Average over samples, then sweep lambda.
        let s_f = s_count as f64;
        let avg: Vec<(f64, f64)> = (0..n_actions)
            .map(|ai| {
                let mut m = 0.0;
                let mut v = 0.0;
                for row in &stats {
                    m += row[ai].0;
                    v += row[ai].1;
                }
                (m / s_f, v / s_f)
            })
            .collect();
        for (node, &lambda) in template.lambda_grid.iter().enumerate() {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (ai, &(m, v)) in avg.iter().enumerate() {
                let val = m - lambda * v;
                if val > best_v {
                    best_v = val;
                    best = ai;
                }
            }
            best_responses[cell_idx * nodes + node] = space.get(best);
        }
    }

    // Split each fitted action's mass equally among the types that
    // best-respond with it.
    let mut counts = vec![0usize; n_actions];
    for br in &best_responses {
        let q = space.actions().iter().position(|a| a == br).unwrap();
        counts[q] += 1;
    }
    let mut unmatched = 0.0;
    for (q, &c) in counts.iter().enumerate() {
        if c == 0 && mu[q] > 0.0 {
            unmatched += mu[q];
        }
    }
    if unmatched > 0.0 {
        log::warn!(
            "{:.3}% of fitted action mass had no best-responding type; renormalizing",
            unmatched * 100.0
        );
    }
    let tie_histogram: Vec<usize> = counts.iter().copied().filter(|&c| c > 1).collect();
    if !tie_histogram.is_empty() {
        log::debug!("tie-split group sizes: {tie_histogram:?}");
    }
    let mut atom_mass: Vec<f64> = best_responses
        .iter()
        .map(|br| {
            let q = space.actions().iter().position(|a| a == br).unwrap();
            mu[q] / counts[q] as f64
        })
        .collect();
    if atom_mass.iter().sum::<f64>() <= 0.0 {
        // Degenerate instance: no fitted action is anyone's best response.
        // Fall back to equal mass over the best-responding types so the
        // pipeline stays usable; the unmatched mass reported is 1.
        log::warn!(
            "no overlap between fitted actions and best responses; \
             falling back to a uniform distribution over types"
        );
        atom_mass = vec![1.0 / best_responses.len() as f64; best_responses.len()];
    }
    let dist = distribution_from_atom_masses(cfg, &template, &atom_mass)?;
    let report = CalibrationReport {
        residual,
        best_responses,
        unmatched_mass: unmatched,
        elapsed: start.elapsed(),
    };
    Ok((dist, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fp::{fictitious_play_mfg, FpConfig};
    use crate::game::{mfg_liquidity, wasserstein1};
    use crate::lp::CrnMode;
    use crate::pool::{PoolState, PriceGrid};
    use crate::stochastic::{
        fit_joint_density, synthetic_swap_samples, ArrivalModel, JointSwapDensity, MarketModel,
        SyntheticSwapParams,
    };

    fn toy_sizes() -> JointSwapDensity {
        let params = SyntheticSwapParams {
            n: 600,
            log_size_mean: 0.45,
            log_size_sd: 0.3,
            arbitrage_sd: 0.08,
            direction_slope: 6.0,
        };
        fit_joint_density(&synthetic_swap_samples(&params, 99)).unwrap()
    }

    fn pool_with(liq: Vec<f64>) -> PoolState {
        let grid = PriceGrid::new(vec![1.0, 1.21, 1.44, 1.69, 1.96, 2.25, 2.56]).unwrap();
        PoolState::new(grid, liq, 1.6, 0.001).unwrap()
    }

    fn ctx<'a>(
        base: &'a PoolState,
        arrival: &'a ArrivalModel,
        sizes: &'a JointSwapDensity,
    ) -> SimContext<'a> {
        SimContext {
            base,
            market0: 1.6,
            horizon: 40,
            arrival,
            sizes,
            market: MarketModel {
                vol: 0.0003,
                ..MarketModel::default()
            },
            n_paths: 32,
            seed: 31,
            crn: CrnMode::Common,
        }
    }

    fn small_cfg() -> CalibrationConfig {
        CalibrationConfig {
            capitals: vec![20.0, 80.0],
            beliefs: vec![-1, 0, 1],
            lambda_max: 2.0,
            lambda_nodes: 8,
            opponent_samples: 24,
        }
    }

    #[test]
    fn mfg_calibration_round_trip() {
        // Target = equilibrium of a known distribution; calibration must
        // regenerate it closely.
        let arrival = ArrivalModel::default();
        let sizes = toy_sizes();
        let seed_pool = pool_with(vec![50.0, 70.0, 90.0, 80.0, 60.0, 40.0]);
        let c0 = ctx(&seed_pool, &arrival, &sizes);
        let cfg = small_cfg();
        let known = scaffold(&cfg);
        let eq = fictitious_play_mfg(&known, &c0, &FpConfig::default(), None).unwrap();

        let target_pool = seed_pool.with_liquidity(eq.equilibrium.clone()).unwrap();
        let c1 = ctx(&target_pool, &arrival, &sizes);
        let (dist, report) = calibrate_mfg(&c1, &cfg, None).unwrap();
        dist.validate().unwrap();
        // Regenerate from the calibrated distribution with its own best
        // responses and compare shapes.
        let regen = mfg_liquidity(&report.best_responses, &dist, &target_pool, 1.6).unwrap();
        let w1 = wasserstein1(&regen, &eq.equilibrium).unwrap();
        assert!(w1 <= 0.5, "round-trip W1 {w1}");
    }

    #[test]
    fn nplayer_calibration_single_cell_point_mass() {
        let arrival = ArrivalModel::default();
        let sizes = toy_sizes();
        // Target exactly one rectangle on the active tick; a single-cell
        // world must put all mass on that cell.
        let target = pool_with(vec![0.0, 0.0, 30.0, 0.0, 0.0, 0.0]);
        let c = ctx(&target, &arrival, &sizes);
        let cfg = CalibrationConfig {
            capitals: vec![25.0],
            beliefs: vec![0],
            lambda_max: 1.0,
            lambda_nodes: 4,
            opponent_samples: 16,
        };
        let (dist, report) = calibrate_nplayer(&c, 4, &cfg).unwrap();
        assert_eq!(dist.cells.len(), 1);
        assert!((dist.cells[0].weight - 1.0).abs() < 1e-9);
        assert!(report.residual < 1e-6);
        // The fitted action law concentrates on the target rectangle and
        // at least the risk-neutral types best-respond with it.
        assert!(report.unmatched_mass < 0.5, "unmatched {}", report.unmatched_mass);
    }

    #[test]
    fn mfg_calibration_is_faster_than_nplayer() {
        let arrival = ArrivalModel::default();
        let sizes = toy_sizes();
        let target = pool_with(vec![50.0, 70.0, 90.0, 80.0, 60.0, 40.0]);
        let c = ctx(&target, &arrival, &sizes);
        let cfg = small_cfg();
        let (_, mfg_report) = calibrate_mfg(&c, &cfg, None).unwrap();
        let (_, np_report) = calibrate_nplayer(&c, 10, &cfg).unwrap();
        assert!(
            np_report.elapsed >= mfg_report.elapsed,
            "mfg {:?} vs nplayer {:?}",
            mfg_report.elapsed,
            np_report.elapsed
        );
    }
}
