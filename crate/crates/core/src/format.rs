//! Operator files.
//!
//! Binary layout (little endian):
//!
//! ```text
//! b"ROELAB1"                    magic, 7 bytes
//! u64 n, n × u64                target fiber dimensions
//! u32 flags                     bit 0: source dimensions follow
//! [u64 m, m × u64]              source fiber dimensions when bit 0 is set
//! rows × cols × (f64, f64)      dense matrix, row-major, (re, im)
//! ```
//!
//! The JSON form lists nonzero blocks:
//! `{"fiber_dims": [..], "source_fiber_dims": [..]?, "blocks": [{"row", "col", "re", "im"}]}`
//! with `re` and `im` as row-major nested arrays. Either way the metric
//! space is supplied separately.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::metric_space::FiniteMetricSpace;
use crate::operators::{BlockOperator, FiberedSpace};

pub const MAGIC: &[u8; 7] = b"ROELAB1";
const FLAG_SOURCE: u32 = 1;
const MAX_DIM: u64 = 1 << 16;

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| fmt_err(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_dims(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = read_u64(r)?;
    if n > MAX_DIM {
        return Err(fmt_err(format!("point count {n} is implausible")));
    }
    (0..n)
        .map(|_| {
            let d = read_u64(r)?;
            if d > MAX_DIM {
                return Err(fmt_err(format!("fiber dimension {d} is implausible")));
            }
            Ok(d as usize)
        })
        .collect()
}

fn write_dims(w: &mut impl Write, dims: &[usize]) -> Result<()> {
    w.write_all(&(dims.len() as u64).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_binary(op: &BlockOperator, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    write_dims(w, op.target().fiber_dims())?;
    let square = op.source() == op.target();
    w.write_all(&(if square { 0 } else { FLAG_SOURCE }).to_le_bytes())?;
    if !square {
        write_dims(w, op.source().fiber_dims())?;
    }
    let dense = op.to_dense();
    let mut buf = Vec::with_capacity(dense.len() * 16);
    for i in 0..dense.nrows() {
        for j in 0..dense.ncols() {
            let z = dense[(i, j)];
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a binary operator over `target_base` (and `source_base`, which
/// defaults to the target's).
pub fn read_binary(
    r: &mut impl Read,
    target_base: Arc<FiniteMetricSpace>,
    source_base: Option<Arc<FiniteMetricSpace>>,
) -> Result<BlockOperator> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic).map_err(|_| fmt_err("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    let target_dims = read_dims(r)?;
    let mut flags = [0u8; 4];
    r.read_exact(&mut flags).map_err(|_| fmt_err("truncated flags"))?;
    let flags = u32::from_le_bytes(flags);
    if flags & !FLAG_SOURCE != 0 {
        return Err(fmt_err(format!("unknown flags {flags:#x}")));
    }
    let source_dims = if flags & FLAG_SOURCE != 0 { read_dims(r)? } else { target_dims.clone() };
    let target = FiberedSpace::new(target_base.clone(), target_dims)?;
    let source = FiberedSpace::new(source_base.unwrap_or(target_base), source_dims)?;
    let (rows, cols) = (target.total_dim(), source.total_dim());
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 16 {
        return Err(fmt_err(format!(
            "payload has {} bytes, expected {} for a {rows}×{cols} matrix",
            bytes.len(),
            rows * cols * 16
        )));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
    let m = CMat::from_fn(rows, cols, |i, j| {
        let k = (i * cols + j) * 16;
        C64::new(f(k), f(k + 8))
    });
    BlockOperator::from_dense(source, target, &m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonBlock {
    row: usize,
    col: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonOperator {
    fiber_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_fiber_dims: Option<Vec<usize>>,
    blocks: Vec<JsonBlock>,
}

pub fn to_json(op: &BlockOperator) -> Result<String> {
    let square = op.source() == op.target();
    let blocks = op
        .blocks()
        .iter()
        .map(|(&(y, x), b)| JsonBlock {
            row: y,
            col: x,
            re: (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| b[(i, j)].re).collect()).collect(),
            im: (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| b[(i, j)].im).collect()).collect(),
        })
        .collect();
    let doc = JsonOperator {
        fiber_dims: op.target().fiber_dims().to_vec(),
        source_fiber_dims: (!square).then(|| op.source().fiber_dims().to_vec()),
        blocks,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(
    text: &str,
    target_base: Arc<FiniteMetricSpace>,
    source_base: Option<Arc<FiniteMetricSpace>>,
) -> Result<BlockOperator> {
    let doc: JsonOperator = serde_json::from_str(text)?;
    let target = FiberedSpace::new(target_base.clone(), doc.fiber_dims.clone())?;
    let source = FiberedSpace::new(
        source_base.unwrap_or(target_base),
        doc.source_fiber_dims.unwrap_or(doc.fiber_dims),
    )?;
    let mut blocks = BTreeMap::new();
    for b in doc.blocks {
        if b.row >= target.len() || b.col >= source.len() {
            return Err(fmt_err(format!("block ({}, {}) out of range", b.row, b.col)));
        }
        let (h, w) = (target.fiber_dim(b.row), source.fiber_dim(b.col));
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == h && m.iter().all(|r| r.len() == w);
        if !shape_ok(&b.re) || !shape_ok(&b.im) {
            return Err(fmt_err(format!("block ({}, {}) must be {h}×{w}", b.row, b.col)));
        }
        let m = CMat::from_fn(h, w, |i, j| C64::new(b.re[i][j], b.im[i][j]));
        if blocks.insert((b.row, b.col), m).is_some() {
            return Err(fmt_err(format!("block ({}, {}) given twice", b.row, b.col)));
        }
    }
    BlockOperator::from_blocks(source, target, blocks)
}

/// Loads binary or JSON by sniffing the magic bytes.
pub fn load_operator(
    path: &Path,
    target_base: Arc<FiniteMetricSpace>,
    source_base: Option<Arc<FiniteMetricSpace>>,
) -> Result<BlockOperator> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(MAGIC) {
        read_binary(&mut bytes.as_slice(), target_base, source_base)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| fmt_err("neither binary nor UTF-8 JSON"))?;
        from_json(&text, target_base, source_base)
    }
}

/// Writes JSON for a `.json` extension and binary otherwise.
pub fn save_operator(op: &BlockOperator, path: &Path) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e == "json") {
        to_json(op)?.into_bytes()
    } else {
        let mut buf = Vec::new();
        write_binary(op, &mut buf)?;
        buf
    };
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
