//! Scenario configuration, data ingestion, the sandwich-attack detector,
//! the multi-period predictive runner, and report emission.

mod detect;
mod io;
mod runner;

pub use detect::{
    detect_sandwich_attacks, load_transaction_records, AttackKind, SandwichFinding,
    TransactionRecord, TxKind, SYMMETRY_TOLERANCE,
};
pub use io::{
    history_to_samples, load_ledger, load_market_path, load_pool_snapshot, load_swap_history,
    save_ledger, save_pool_snapshot, step_interpolate, SwapRecord,
};
pub use runner::{
    emit_reports, read_summary, run_scenario, PeriodReport, ReportBundle, Summary,
};

use crate::game::GameError;
use crate::pool::PoolError;
use crate::stochastic::{StochasticError, SyntheticSwapParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
}

pub const SCHEMA_VERSION: u32 = 1;

/// Which game produces each period's liquidity distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameMode {
    /// One LP re-optimizes against the snapshot pool each period.
    Single,
    /// Explicitly listed players play fictitious play each period.
    Nplayer,
    /// Mean-field fictitious play from the previous period's distribution.
    Mfg,
    /// Mean-field play anticipating the attacker, with attacks simulated.
    Stackelberg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    pub snapshot: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SwapSection {
    /// Historical swaps to fit the size density on; when absent the
    /// synthetic generator below is used.
    pub history: Option<PathBuf>,
    pub arrival_scale: Option<f64>,
    pub arrival_offset: Option<f64>,
    pub synthetic: Option<SyntheticSwapParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketSection {
    /// Per-minute market rates; step-interpolated to blocks. GBM otherwise.
    pub path: Option<PathBuf>,
    pub drift: f64,
    pub vol: f64,
    pub dt_seconds: f64,
    /// Blocks per minute for path interpolation.
    pub blocks_per_minute: usize,
    /// Initial market rate for GBM mode; defaults to the pool rate.
    pub initial_rate: Option<f64>,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            path: None,
            drift: 0.0,
            vol: 0.00106,
            dt_seconds: 12.0,
            blocks_per_minute: 5,
            initial_rate: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonSection {
    pub period_blocks: usize,
    pub periods: usize,
}

impl Default for HorizonSection {
    fn default() -> Self {
        Self {
            period_blocks: 900,
            periods: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    pub mode: GameMode,
    pub n_paths: usize,
    /// Optimization horizon T used inside the games; defaults to the full
    /// simulation span `period_blocks * periods`.
    pub horizon_blocks: Option<usize>,
    pub thresh: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Single-LP mode: (capital, risk_aversion, belief).
    pub single: Option<(f64, f64, i8)>,
    /// N-player mode: one (capital, risk_aversion, belief) per player.
    pub players: Option<Vec<(f64, f64, i8)>>,
}

impl Default for GameSection {
    fn default() -> Self {
        Self {
            mode: GameMode::Mfg,
            n_paths: 1000,
            horizon_blocks: None,
            thresh: 0.1,
            max_iterations: 200,
            seed: 1,
            single: None,
            players: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TypesSection {
    /// Calibrated type distribution for the mean-field modes.
    pub distribution: Option<PathBuf>,
    /// Calibrate against the snapshot first instead of loading a file.
    pub calibrate_first: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub capitals: Vec<f64>,
    pub beliefs: Vec<i8>,
    pub lambda_max: f64,
    pub lambda_nodes: usize,
    pub opponent_samples: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let d = crate::game::CalibrationConfig::default();
        Self {
            capitals: d.capitals,
            beliefs: d.beliefs,
            lambda_max: d.lambda_max,
            lambda_nodes: d.lambda_nodes,
            opponent_samples: d.opponent_samples,
        }
    }
}

impl CalibrationSection {
    pub fn to_config(&self) -> crate::game::CalibrationConfig {
        crate::game::CalibrationConfig {
            capitals: self.capitals.clone(),
            beliefs: self.beliefs.clone(),
            lambda_max: self.lambda_max,
            lambda_nodes: self.lambda_nodes,
            opponent_samples: self.opponent_samples,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BotSection {
    /// Liquidity units injected per attack; alternatively give `capital`.
    pub liquidity: Option<f64>,
    /// Token-B capital converted to liquidity on the active tick at load.
    pub capital: Option<f64>,
    pub gas: f64,
    pub engagement: f64,
}

impl Default for BotSection {
    fn default() -> Self {
        Self {
            liquidity: None,
            capital: None,
            gas: 20.0,
            engagement: 0.5278,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    /// Optional snapshot the final liquidity is compared against.
    pub snapshot: Option<PathBuf>,
}

/// A full scenario: every run is a pure function of this structure plus the
/// referenced files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub pool: PoolSection,
    #[serde(default)]
    pub swaps: SwapSection,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub horizon: HorizonSection,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub types: TypesSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub bot: Option<BotSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub target: TargetSection,
    /// Directory other paths are resolved against (set on load).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ScenarioConfig = toml::from_str(&text)?;
        cfg.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn total_blocks(&self) -> usize {
        self.horizon.period_blocks * self.horizon.periods
    }

    /// Optimization horizon used inside the games.
    pub fn game_horizon(&self) -> usize {
        self.game.horizon_blocks.unwrap_or_else(|| self.total_blocks())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported schema_version {} (expected {})",
                self.schema_version, SCHEMA_VERSION
            )));
        }
        if self.horizon.periods == 0 || self.horizon.period_blocks == 0 {
            return Err(HarnessError::Config(
                "horizon needs at least one period of at least one block".into(),
            ));
        }
        if let Some(t) = self.game.horizon_blocks {
            if self.horizon.periods > 1 && t != self.total_blocks() {
                return Err(HarnessError::Config(format!(
                    "multi-period runs need horizon_blocks = period_blocks * periods \
                     ({} != {})",
                    t,
                    self.total_blocks()
                )));
            }
        }
        match self.game.mode {
            GameMode::Single if self.game.single.is_none() => Err(HarnessError::Config(
                "single mode needs [game] single = [capital, risk_aversion, belief]".into(),
            )),
            GameMode::Nplayer
                if self.game.players.as_ref().is_none_or(|p| p.len() < 2) =>
            {
                Err(HarnessError::Config(
                    "nplayer mode needs [game] players with at least two entries".into(),
                ))
            }
            GameMode::Mfg | GameMode::Stackelberg
                if self.types.distribution.is_none() && !self.types.calibrate_first =>
            {
                Err(HarnessError::Config(
                    "mean-field modes need [types] distribution or calibrate_first = true"
                        .into(),
                ))
            }
            GameMode::Stackelberg if self.bot.is_none() => Err(HarnessError::Config(
                "stackelberg mode needs a [bot] section".into(),
            )),
            _ => Ok(()),
        }?;
        if let Some(bot) = &self.bot {
            if bot.liquidity.is_none() && bot.capital.is_none() {
                return Err(HarnessError::Config(
                    "[bot] needs liquidity or capital".into(),
                ));
            }
            if !(0.0..=1.0).contains(&bot.engagement) {
                return Err(HarnessError::Config("bot engagement outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        "schema_version = 1\n[pool]\nsnapshot = \"pool.csv\"\n\
         [game]\nmode = \"mfg\"\n[types]\ncalibrate_first = true\n"
            .to_string()
    }

    #[test]
    fn loads_minimal_config_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.toml");
        std::fs::write(&path, minimal_toml()).unwrap();
        let cfg = ScenarioConfig::load(&path).unwrap();
        assert_eq!(cfg.horizon.period_blocks, 900);
        assert_eq!(cfg.horizon.periods, 8);
        assert_eq!(cfg.total_blocks(), 7200);
        assert_eq!(cfg.game_horizon(), 7200);
        assert_eq!(cfg.game.n_paths, 1000);
        assert!(cfg.bot.is_none());
        assert_eq!(cfg.resolve(Path::new("pool.csv")), dir.path().join("pool.csv"));
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.toml");
        // Wrong schema version.
        std::fs::write(&path, minimal_toml().replace("= 1", "= 9")).unwrap();
        assert!(ScenarioConfig::load(&path).is_err());
        // Stackelberg without a bot.
        std::fs::write(&path, minimal_toml().replace("\"mfg\"", "\"stackelberg\"")).unwrap();
        assert!(ScenarioConfig::load(&path).is_err());
        // Mismatched game horizon.
        let text = format!("{}[horizon]\nperiods = 2\n", minimal_toml())
            .replace("[game]\nmode = \"mfg\"\n", "[game]\nmode = \"mfg\"\nhorizon_blocks = 100\n");
        std::fs::write(&path, text).unwrap();
        assert!(ScenarioConfig::load(&path).is_err());
        // Unknown keys are rejected.
        std::fs::write(&path, format!("{}typo_key = 3\n", minimal_toml())).unwrap();
        assert!(ScenarioConfig::load(&path).is_err());
    }
}
