//! Flat-file formats: pool snapshots, swap histories, market paths,
//! transaction records, and ledgers. All files are comma-delimited text
//! with a header row; parse errors carry 1-based line numbers.

use super::HarnessError;
use crate::bot::BlockRecord;
use crate::pool::{PoolState, PriceGrid};
use crate::stochastic::signed_log_size;
use std::fmt::Write as _;
use std::path::Path;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64, HarnessError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad {field} value {s:?}")))
}

/// Pool snapshot: `tick_index,price_lower,price_upper,liquidity` rows (any
/// order, 0- or 1-based contiguous indices) plus one `meta` row carrying
/// `pool_rate` and `fee_rate` in the price columns:
///
/// ```text
/// tick_index,price_lower,price_upper,liquidity
/// 1,1.0,1.21,70
/// ...
/// meta,1.6,0.0005,
/// ```
pub fn load_pool_snapshot(path: &Path) -> Result<PoolState, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(usize, f64, f64, f64, usize)> = Vec::new();
    let mut meta: Option<(f64, f64)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || idx == 0 {
            if idx == 0 && !line.starts_with("tick_index") {
                return Err(parse_err(path, 1, "missing header row"));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 3 {
            return Err(parse_err(path, line_no, "expected at least 3 columns"));
        }
        if cols[0].trim() == "meta" {
            if meta.is_some() {
                return Err(parse_err(path, line_no, "duplicate meta row"));
            }
            let rate = parse_f64(path, line_no, "pool_rate", cols[1])?;
            let fee = parse_f64(path, line_no, "fee_rate", cols[2])?;
            meta = Some((rate, fee));
            continue;
        }
        if cols.len() < 4 {
            return Err(parse_err(path, line_no, "expected 4 columns"));
        }
        let tick: usize = cols[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad tick_index {:?}", cols[0])))?;
        let lower = parse_f64(path, line_no, "price_lower", cols[1])?;
        let upper = parse_f64(path, line_no, "price_upper", cols[2])?;
        let liq = parse_f64(path, line_no, "liquidity", cols[3])?;
        if liq < 0.0 {
            return Err(parse_err(path, line_no, format!("negative liquidity {liq}")));
        }
        rows.push((tick, lower, upper, liq, line_no));
    }
    let (pool_rate, fee_rate) =
        meta.ok_or_else(|| parse_err(path, text.lines().count(), "missing meta row"))?;
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no tick rows"));
    }
    rows.sort_by_key(|r| r.0);
    // External data is often 0-based; map onto the crate's 1-based ticks.
    let offset = rows[0].0;
    if offset > 1 {
        return Err(parse_err(
            path,
            rows[0].4,
            format!("tick indices must start at 0 or 1, got {}", rows[0].0),
        ));
    }
    let mut points = Vec::with_capacity(rows.len() + 1);
    let mut liquidity = Vec::with_capacity(rows.len());
    for (pos, row) in rows.iter().enumerate() {
        if row.0 != pos + offset {
            return Err(parse_err(
                path,
                row.4,
                format!("tick indices not contiguous at {}", row.0),
            ));
        }
        if pos == 0 {
            points.push(row.1);
        } else {
            let prev_upper: f64 = points[pos];
            if (row.1 - prev_upper).abs() > 1e-9 * prev_upper.abs().max(1.0) {
                return Err(parse_err(
                    path,
                    row.4,
                    format!(
                        "price_lower {} does not match previous price_upper {}",
                        row.1, prev_upper
                    ),
                ));
            }
        }
        points.push(row.2);
        liquidity.push(row.3);
    }
    if liquidity.iter().all(|&l| l == 0.0) {
        log::warn!("pool snapshot {} has no liquidity", path.display());
    }
    let grid = PriceGrid::new(points)?;
    Ok(PoolState::new(grid, liquidity, pool_rate, fee_rate)?)
}

pub fn save_pool_snapshot(state: &PoolState, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from("tick_index,price_lower,price_upper,liquidity\n");
    for i in 1..=state.tick_count() {
        writeln!(
            out,
            "{},{},{},{}",
            i,
            state.grid().point(i),
            state.grid().point(i + 1),
            state.liquidity(i)
        )
        .expect("string write");
    }
    writeln!(out, "meta,{},{},", state.pool_rate(), state.fee_rate()).expect("string write");
    std::fs::write(path, out)?;
    Ok(())
}

/// One historical swap: `block,size_token_b,pool_rate_before,market_rate_before`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapRecord {
    pub block: u64,
    pub size: f64,
    pub pool_rate: f64,
    pub market_rate: f64,
}

pub fn load_swap_history(path: &Path) -> Result<Vec<SwapRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || idx == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 4 {
            return Err(parse_err(path, line_no, "expected 4 columns"));
        }
        let block: u64 = cols[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad block {:?}", cols[0])))?;
        out.push(SwapRecord {
            block,
            size: parse_f64(path, line_no, "size", cols[1])?,
            pool_rate: parse_f64(path, line_no, "pool_rate", cols[2])?,
            market_rate: parse_f64(path, line_no, "market_rate", cols[3])?,
        });
    }
    Ok(out)
}

/// Converts history rows to density samples (signed-log size, arbitrage
/// level), dropping sub-unit swaps where the encoding folds.
pub fn history_to_samples(records: &[SwapRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| {
            signed_log_size(r.size).map(|v| (v, r.pool_rate - r.market_rate))
        })
        .collect()
}

/// Market path file: `minute,rate` rows at one-minute granularity.
pub fn load_market_path(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || idx == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 2 {
            return Err(parse_err(path, line_no, "expected 2 columns"));
        }
        let rate = parse_f64(path, line_no, "rate", cols[1])?;
        if rate <= 0.0 {
            return Err(parse_err(path, line_no, format!("non-positive rate {rate}")));
        }
        out.push(rate);
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no rate rows"));
    }
    Ok(out)
}

/// Step-interpolates a per-minute series to `blocks` per-block rates
/// (`blocks_per_minute` blocks hold each minute value).
pub fn step_interpolate(
    minutes: &[f64],
    blocks: usize,
    blocks_per_minute: usize,
) -> Result<Vec<f64>, HarnessError> {
    let needed = blocks.div_ceil(blocks_per_minute);
    if minutes.len() < needed {
        return Err(HarnessError::Config(format!(
            "market path has {} minutes, horizon needs {}",
            minutes.len(),
            needed
        )));
    }
    Ok((0..blocks).map(|t| minutes[t / blocks_per_minute]).collect())
}

pub fn save_ledger(blocks: &[BlockRecord], path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from(
        "block,swap,engaged,attacked,bot_profit,lp_fees_total,pool_rate,market_rate\n",
    );
    for b in blocks {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.block,
            b.swap,
            u8::from(b.engaged),
            u8::from(b.attacked),
            b.bot_profit,
            b.lp_fees,
            b.pool_rate,
            b.market_rate
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_ledger(path: &Path) -> Result<Vec<BlockRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || idx == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 8 {
            return Err(parse_err(path, line_no, "expected 8 columns"));
        }
        out.push(BlockRecord {
            block: cols[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, "bad block"))?,
            swap: parse_f64(path, line_no, "swap", cols[1])?,
            engaged: cols[2].trim() == "1",
            attacked: cols[3].trim() == "1",
            bot_profit: parse_f64(path, line_no, "bot_profit", cols[4])?,
            lp_fees: parse_f64(path, line_no, "lp_fees_total", cols[5])?,
            pool_rate: parse_f64(path, line_no, "pool_rate", cols[6])?,
            market_rate: parse_f64(path, line_no, "market_rate", cols[7])?,
        });
    }
    Ok(out)
}
