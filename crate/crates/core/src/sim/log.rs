//! Per-round log records and their CSV form.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "round,iters_cum,bytes_cum,train_loss,val_acc,test_acc,grad_norm_sq,kappaA,kappaB_note";

/// State of the global model after one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    /// Cumulative local iterations per worker (server steps excluded).
    pub iters_cum: u64,
    pub bytes_cum: u64,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub grad_norm_sq: f64,
    pub kappa_a_sq: Option<f64>,
    /// Written to the `kappaB_note` column.
    pub kappa_x_sq: Option<f64>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with the mandatory header. Floats use the shortest representation
/// that parses back to the same value.
pub fn format_csv(logs: &[RoundLog]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for l in logs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            l.round,
            l.iters_cum,
            l.bytes_cum,
            l.train_loss,
            l.val_acc,
            l.test_acc,
            l.grad_norm_sq,
            opt(l.kappa_a_sq),
            opt(l.kappa_x_sq)
        );
    }
    out
}

/// Parses a RoundLog CSV. Never panics on malformed input.
pub fn parse_csv(bytes: &[u8]) -> Result<Vec<RoundLog>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("not UTF-8: {e}")))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(_) => return Err(Error::parse(1, "unexpected header")),
        None => return Err(Error::Format("empty log file".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::parse(lineno, format!("expected 9 columns, found {}", f.len())));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::parse(lineno, format!("invalid integer `{s}`")))
        };
        let float = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(lineno, format!("invalid number `{s}`")))
        };
        let maybe = |s: &str| {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                float(s).map(Some)
            }
        };
        out.push(RoundLog {
            round: int(f[0])? as usize,
            iters_cum: int(f[1])?,
            bytes_cum: int(f[2])?,
            train_loss: float(f[3])?,
            val_acc: float(f[4])?,
            test_acc: float(f[5])?,
            grad_norm_sq: float(f[6])?,
            kappa_a_sq: maybe(f[7])?,
            kappa_x_sq: maybe(f[8])?,
        });
    }
    Ok(out)
}
