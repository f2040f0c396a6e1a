//! Text container for network parameters.
//!
//! ```text
//! mlp v1
//! widths 2 4 1
//! activation relu
//! params 17
//! 1.25e-1
//! ...
//! ```
//!
//! Values are printed with Rust's shortest round-trip exponent form
//! (`{:e}`), which parses back to the identical bit pattern.

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};

const MAGIC: &str = "mlp v1";

pub fn to_text(net: &Mlp) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str("widths");
    for w in net.widths() {
        out.push_str(&format!(" {w}"));
    }
    out.push('\n');
    out.push_str(&format!("activation {}\n", net.activation().name()));
    out.push_str(&format!("params {}\n", net.param_count()));
    for v in net.params() {
        out.push_str(&format!("{v:e}\n"));
    }
    out
}

pub fn from_text(text: &str) -> Result<Mlp> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of input, expected {what}")))
    };
    let (_, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::Parse(format!("line 1: expected `{MAGIC}`")));
    }
    let (ln, widths_line) = next("widths")?;
    let widths = widths_line
        .strip_prefix("widths")
        .ok_or_else(|| Error::Parse(format!("line {}: expected `widths`", ln + 1)))?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (ln, act_line) = next("activation")?;
    let act = act_line
        .strip_prefix("activation ")
        .ok_or_else(|| Error::Parse(format!("line {}: expected `activation`", ln + 1)))?;
    let activation = Activation::from_name(act.trim())?;
    let (ln, count_line) = next("params")?;
    let count: usize = count_line
        .strip_prefix("params ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {}: expected `params <count>`", ln + 1)))?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, v) = next("parameter value")?;
        params.push(
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?,
        );
    }
    Mlp::from_params(&widths, activation, params)
}
