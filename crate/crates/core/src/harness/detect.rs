//! Sandwich-attack detection over raw transaction records.
//!
//! A sandwich is a same-block triple: two opposite-direction transactions
//! by one account bracketing a single swap by a different account, with
//! the outer legs symmetric to within 5% in at least one token. Outer swap
//! pairs are swap-based attacks, add-then-remove pairs are just-in-time
//! liquidity attacks.

use super::HarnessError;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxKind {
    Swap,
    AddLiquidity,
    RemoveLiquidity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub block: u64,
    /// Position within the block; unique per block.
    pub index: u32,
    pub account: String,
    pub kind: TxKind,
    /// Token deltas from the account's perspective: positive receives,
    /// negative pays.
    pub token_a: f64,
    pub token_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    SwapBased,
    LiquidityBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichFinding {
    pub block: u64,
    pub indices: (u32, u32, u32),
    pub attacker: String,
    pub victim: String,
    pub kind: AttackKind,
    /// Worst relative mismatch between the outer legs across the tokens
    /// they move.
    pub symmetry_error: f64,
}

/// Maximum allowed relative mismatch of the outer legs.
pub const SYMMETRY_TOLERANCE: f64 = 0.05;

fn leg_error(x1: f64, x3: f64) -> Option<f64> {
    let (m1, m3) = (x1.abs(), x3.abs());
    let max = m1.max(m3);
    if max == 0.0 {
        return None; // token untouched by both legs
    }
    Some((m1 - m3).abs() / max)
}

/// Errors per token between the outer legs: `(qualifying, reported)` =
/// (min, max) over the tokens either leg moves.
fn symmetry(t1: &TransactionRecord, t3: &TransactionRecord) -> Option<(f64, f64)> {
    let errs: Vec<f64> = [
        leg_error(t1.token_a, t3.token_a),
        leg_error(t1.token_b, t3.token_b),
    ]
    .into_iter()
    .flatten()
    .collect();
    if errs.is_empty() {
        return None;
    }
    let min = errs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = errs.iter().cloned().fold(0.0, f64::max);
    Some((min, max))
}

fn pair_kind(t1: &TransactionRecord, t3: &TransactionRecord) -> Option<AttackKind> {
    match (t1.kind, t3.kind) {
        (TxKind::Swap, TxKind::Swap) => {
            // Opposite directions: one buys token A, the other sells it.
            if t1.token_a * t3.token_a < 0.0 {
                Some(AttackKind::SwapBased)
            } else {
                None
            }
        }
        (TxKind::AddLiquidity, TxKind::RemoveLiquidity) => Some(AttackKind::LiquidityBased),
        _ => None,
    }
}

/// Scans consecutive same-block triples and returns every qualifying
/// sandwich. Records are processed in `(block, index)` order regardless of
/// input order.
pub fn detect_sandwich_attacks(records: &[TransactionRecord]) -> Vec<SandwichFinding> {
    let mut sorted: Vec<&TransactionRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.block, r.index));
    let mut findings = Vec::new();
    for w in sorted.windows(3) {
        let (t1, t2, t3) = (w[0], w[1], w[2]);
        if t1.block != t2.block || t2.block != t3.block {
            continue;
        }
        if t1.account != t3.account || t2.account == t1.account {
            continue;
        }
        if t2.kind != TxKind::Swap {
            continue;
        }
        let Some(kind) = pair_kind(t1, t3) else {
            continue;
        };
        let Some((qualifying, reported)) = symmetry(t1, t3) else {
            continue;
        };
        if qualifying <= SYMMETRY_TOLERANCE {
            findings.push(SandwichFinding {
                block: t1.block,
                indices: (t1.index, t2.index, t3.index),
                attacker: t1.account.clone(),
                victim: t2.account.clone(),
                kind,
                symmetry_error: reported,
            });
        }
    }
    findings
}

/// Transaction records file:
/// `block,index,account,kind,token_a_delta,token_b_delta` with kind in
/// `{swap, add, remove}`.
pub fn load_transaction_records(path: &Path) -> Result<Vec<TransactionRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || idx == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 6 {
            return Err(HarnessError::Parse {
                path: path.display().to_string(),
                line: line_no,
                msg: "expected 6 columns".into(),
            });
        }
        let bad = |msg: String| HarnessError::Parse {
            path: path.display().to_string(),
            line: line_no,
            msg,
        };
        let kind = match cols[3].trim() {
            "swap" => TxKind::Swap,
            "add" => TxKind::AddLiquidity,
            "remove" => TxKind::RemoveLiquidity,
            other => return Err(bad(format!("unknown kind {other:?}"))),
        };
        out.push(TransactionRecord {
            block: cols[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad block {:?}", cols[0])))?,
            index: cols[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad index {:?}", cols[1])))?,
            account: cols[2].trim().to_string(),
            kind,
            token_a: cols[4]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad token_a {:?}", cols[4])))?,
            token_b: cols[5]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad token_b {:?}", cols[5])))?,
        });
    }
    Ok(out)
}
