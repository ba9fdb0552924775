//! Plain-text sequence files.
//!
//! ```text
//! activity=walking dims=54 period_ms=40
//! 0.1,-0.25,...        (dims comma-separated decimals per frame)
//! ```
//!
//! Values are written in Rust's shortest round-trip notation, so
//! `parse(emit(s)) == s` bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::MotionSequence;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub fn emit_sequence(seq: &MotionSequence) -> String {
    let mut out = format!("activity={} dims={} period_ms={}\n", seq.activity, seq.dim(), seq.period_ms);
    for r in 0..seq.len() {
        for (i, v) in seq.frames.row_slice(r).iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to String");
        }
        out.push('\n');
    }
    out
}

pub fn parse_sequence(text: &str, origin: &str) -> Result<MotionSequence> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(origin, 1, "empty file"))?;
    let mut activity = None;
    let mut dims = None;
    let mut period = None;
    for field in header.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, 1, format!("malformed header field `{field}`")))?;
        match k {
            "activity" => activity = Some(v.to_string()),
            "dims" => dims = Some(v.parse::<usize>().map_err(|_| Error::parse(origin, 1, format!("bad dims `{v}`")))?),
            "period_ms" => {
                period = Some(v.parse::<f64>().map_err(|_| Error::parse(origin, 1, format!("bad period_ms `{v}`")))?)
            }
            other => return Err(Error::parse(origin, 1, format!("unknown header key `{other}`"))),
        }
    }
    let (Some(activity), Some(dims), Some(period)) = (activity, dims, period) else {
        return Err(Error::parse(origin, 1, "header needs activity=, dims= and period_ms="));
    };
    if dims == 0 {
        return Err(Error::parse(origin, 1, "dims must be positive"));
    }

    let mut data = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 =
                tok.trim().parse().map_err(|_| Error::parse(origin, line_no, format!("`{tok}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, line_no, "non-finite value"));
            }
            data.push(v);
        }
        if data.len() - before != dims {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected {dims} columns, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::parse(origin, 1, "sequence has no frames"));
    }
    let frames = Tensor::new(vec![rows, dims], data)?;
    MotionSequence::new(activity, frames, period).map_err(|e| Error::parse(origin, 1, e.to_string()))
}

pub fn read_sequence(path: &Path) -> Result<MotionSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence(&text, &path.display().to_string())
}

pub fn write_sequence(path: &Path, seq: &MotionSequence) -> Result<()> {
    std::fs::write(path, emit_sequence(seq)).map_err(|e| Error::io(path, e))
}
