//! Worker-count independence: every Monte-Carlo surface must produce
//! bit-identical results on 1 thread and on many.

use poolsim::game::{fictitious_play_mfg, FpConfig, TypeDistribution};
use poolsim::lp::{estimate_value, optimize_single, CrnMode, LpType, MeanFieldTable, SimContext};
use poolsim::pool::{PoolState, PriceGrid};
use poolsim::stochastic::{
    fit_joint_density, synthetic_swap_samples, ArrivalModel, JointSwapDensity, MarketModel,
    SyntheticSwapParams,
};

fn toy_pool() -> PoolState {
    let grid = PriceGrid::new(vec![1.0, 1.21, 1.44, 1.69, 1.96, 2.25, 2.56]).unwrap();
    PoolState::new(
        grid,
        vec![70.0, 90.0, 111.052, 113.75, 105.0, 90.0],
        1.6,
        0.0015,
    )
    .unwrap()
}

fn sizes() -> JointSwapDensity {
    let params = SyntheticSwapParams {
        n: 600,
        log_size_mean: 0.4,
        log_size_sd: 0.25,
        arbitrage_sd: 0.06,
        direction_slope: 7.0,
    };
    fit_joint_density(&synthetic_swap_samples(&params, 71)).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn value_estimates_and_scans_are_thread_count_independent() {
    let base = toy_pool();
    let sizes = sizes();
    let arrival = ArrivalModel::default();
    let ctx = SimContext {
        base: &base,
        market0: 1.6,
        horizon: 80,
        arrival: &arrival,
        sizes: &sizes,
        market: MarketModel {
            vol: 0.0004,
            ..MarketModel::default()
        },
        n_paths: 64,
        seed: 99,
        crn: CrnMode::Common,
    };
    let theta = LpType::new(25.0, 0.7, 1);

    let serial = in_pool(1, || {
        (
            estimate_value(2, 5, &theta, &ctx, None).unwrap(),
            optimize_single(&theta, &ctx, None).unwrap(),
        )
    });
    let parallel = in_pool(8, || {
        (
            estimate_value(2, 5, &theta, &ctx, None).unwrap(),
            optimize_single(&theta, &ctx, None).unwrap(),
        )
    });
    assert_eq!(serial.0, parallel.0);
    assert_eq!(serial.1 .0, parallel.1 .0);
    assert_eq!(serial.1 .1, parallel.1 .1);

    let t_serial = in_pool(1, || MeanFieldTable::build(&ctx, 0, None));
    let t_parallel = in_pool(8, || MeanFieldTable::build(&ctx, 0, None));
    for (j1, j2) in [(1usize, 2usize), (2, 5), (1, 7)] {
        assert_eq!(t_serial.unit_stats(j1, j2), t_parallel.unit_stats(j1, j2));
    }
}

#[test]
fn mean_field_play_is_thread_count_independent() {
    let base = toy_pool();
    let sizes = sizes();
    let arrival = ArrivalModel::default();
    let ctx = SimContext {
        base: &base,
        market0: 1.6,
        horizon: 60,
        arrival: &arrival,
        sizes: &sizes,
        market: MarketModel {
            vol: 0.0004,
            ..MarketModel::default()
        },
        n_paths: 48,
        seed: 5,
        crn: CrnMode::Common,
    };
    let grid = TypeDistribution::lambda_grid(2.0, 6);
    let dist = TypeDistribution::from_discrete(
        &[
            (LpType::new(15.0, 0.1, 0), 0.5),
            (LpType::new(45.0, 1.0, -1), 0.5),
        ],
        grid,
    );
    let a = in_pool(1, || {
        fictitious_play_mfg(&dist, &ctx, &FpConfig::default(), None).unwrap()
    });
    let b = in_pool(6, || {
        fictitious_play_mfg(&dist, &ctx, &FpConfig::default(), None).unwrap()
    });
    assert_eq!(a.equilibrium, b.equilibrium);
    assert_eq!(a.strategy, b.strategy);
    assert_eq!(a.trace.errors, b.trace.errors);
}
