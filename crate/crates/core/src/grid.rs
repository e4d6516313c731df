//! Per-frame posterior lattices and their file formats.
//!
//! Binary layout (`CTCGRID1`): 8-byte magic, little-endian `u32` frame count,
//! `u32` vocabulary size, `u8` domain flag (1 = natural log, 0 = linear
//! probability), then `T * V` little-endian `f64` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{log_sum_exp, LOG_ZERO};

pub const GRID_MAGIC: &[u8; 8] = b"CTCGRID1";
const ROW_TOLERANCE: f64 = 1e-6;

/// Where the blank and start/end symbols sit in a vocabulary of `size` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolLayout {
    pub size: usize,
    pub blank: usize,
    pub eos: usize,
}

impl SymbolLayout {
    pub fn new(size: usize, blank: usize, eos: usize) -> Result<Self> {
        if blank >= size || eos >= size || blank == eos {
            return Err(Error::InvalidVocabulary(format!(
                "layout size={size} blank={blank} eos={eos} is inconsistent"
            )));
        }
        Ok(Self { size, blank, eos })
    }

    /// The decodable set: every symbol except blank (includes the end token).
    pub fn decodable(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.size).filter(move |&v| v != self.blank)
    }

    /// Symbols that can appear inside a transcript (neither blank nor end token).
    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.size).filter(move |&v| v != self.blank && v != self.eos)
    }

    pub fn decodable_count(&self) -> usize {
        self.size - 1
    }
}

/// A `T x V` matrix of natural-log posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    layout: SymbolLayout,
    frames: usize,
    log_probs: Vec<f64>,
}

impl PosteriorGrid {
    /// Validated constructor: every row must log-sum-exp to 0 within 1e-6.
    pub fn new(layout: SymbolLayout, frames: usize, log_probs: Vec<f64>) -> Result<Self> {
        let grid = Self::new_unnormalized(layout, frames, log_probs)?;
        for t in 0..frames {
            let row = grid.row(t);
            if let Some(v) = row.iter().position(|&x| x > ROW_TOLERANCE) {
                return Err(Error::InvalidGrid(format!(
                    "entry ({t}, {v}) = {} is a log-probability above 0",
                    row[v]
                )));
            }
            let total = log_sum_exp(row.iter().copied());
            if total.abs() > ROW_TOLERANCE {
                return Err(Error::InvalidGrid(format!(
                    "row {t} is not normalized (log-sum-exp {total})"
                )));
            }
        }
        Ok(grid)
    }

    /// Shape-checked constructor without normalization checks. Used for
    /// perturbation studies of the CTC objective.
    pub fn new_unnormalized(layout: SymbolLayout, frames: usize, log_probs: Vec<f64>) -> Result<Self> {
        if log_probs.len() != frames * layout.size {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {frames}x{}, got {}",
                frames * layout.size,
                layout.size,
                log_probs.len()
            )));
        }
        if let Some(i) = log_probs.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::InvalidGrid(format!("entry {i} is not a log-probability")));
        }
        Ok(Self { layout, frames, log_probs })
    }

    /// Builds a grid from linear-domain probability rows.
    pub fn from_prob_rows(layout: SymbolLayout, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * layout.size);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != layout.size {
                return Err(Error::InvalidGrid(format!(
                    "row {t} has {} columns, expected {}",
                    row.len(),
                    layout.size
                )));
            }
            data.extend(row.iter().map(|&p| to_log(p)));
        }
        Self::new(layout, rows.len(), data)
    }

    pub fn layout(&self) -> SymbolLayout {
        self.layout
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.layout.size
    }

    pub fn blank(&self) -> usize {
        self.layout.blank
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        let v = self.layout.size;
        &self.log_probs[t * v..(t + 1) * v]
    }

    #[inline]
    pub fn log_prob(&self, t: usize, symbol: usize) -> f64 {
        self.log_probs[t * self.layout.size + symbol]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_probs
    }

    /// Copy with a single entry replaced; the result is not re-normalized.
    pub fn with_entry(&self, t: usize, symbol: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.log_probs[t * self.layout.size + symbol] = value;
        out
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        w.write_all(&(self.layout.size as u32).to_le_bytes())?;
        w.write_all(&[1u8])?;
        for x in &self.log_probs {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the binary format; `layout.size` must match the stored width.
    pub fn read_binary<R: Read>(mut r: R, layout: SymbolLayout) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::Format("missing CTCGRID1 magic".into()));
        }
        let frames = read_u32(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        if width != layout.size {
            return Err(Error::InvalidGrid(format!(
                "grid width {width} does not match vocabulary size {}",
                layout.size
            )));
        }
        let log_domain = match flag[0] {
            1 => true,
            0 => false,
            other => return Err(Error::Format(format!("unknown domain flag {other}"))),
        };
        let mut data = Vec::with_capacity(frames * width);
        let mut buf = [0u8; 8];
        for _ in 0..frames * width {
            r.read_exact(&mut buf)?;
            let x = f64::from_le_bytes(buf);
            data.push(if log_domain { x } else { to_log(x) });
        }
        Self::new(layout, frames, data)
    }

    pub fn to_json(&self) -> GridJson {
        GridJson {
            log_domain: true,
            blank: Some(self.layout.blank),
            eos: Some(self.layout.eos),
            rows: (0..self.frames).map(|t| self.row(t).to_vec()).collect(),
        }
    }

    /// Reads the JSON mirror. Rows must have `layout.size` columns unless the
    /// file carries its own `blank`/`eos` indices.
    pub fn from_json(json: &GridJson, default_layout: SymbolLayout) -> Result<Self> {
        let width = json.rows.first().map_or(default_layout.size, Vec::len);
        let layout = match (json.blank, json.eos) {
            (Some(blank), Some(eos)) => SymbolLayout::new(width, blank, eos)?,
            _ => default_layout,
        };
        let mut data = Vec::with_capacity(json.rows.len() * layout.size);
        for (t, row) in json.rows.iter().enumerate() {
            if row.len() != layout.size {
                return Err(Error::InvalidGrid(format!("row {t} has {} columns", row.len())));
            }
            // JSON has no infinity; null stands for exact zero probability in log domain.
            data.extend(row.iter().map(|&x| if json.log_domain { x } else { to_log(x) }));
        }
        Self::new(layout, json.rows.len(), data)
    }

    /// Loads a grid file, picking the format by magic bytes.
    pub fn load(path: impl AsRef<Path>, layout: SymbolLayout) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(GRID_MAGIC) {
            Self::read_binary(bytes.as_slice(), layout)
        } else {
            let json: GridJson = serde_json::from_slice(&bytes)?;
            Self::from_json(&json, layout)
        }
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// JSON mirror of the grid format for hand-written fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    #[serde(default = "default_true")]
    pub log_domain: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos: Option<usize>,
    #[serde(with = "nullable_rows")]
    pub rows: Vec<Vec<f64>>,
}

fn default_true() -> bool {
    true
}

fn to_log(p: f64) -> f64 {
    if p <= 0.0 {
        LOG_ZERO
    } else {
        p.ln()
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

// Non-finite values (log 0) are written as null.
mod nullable_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mapped: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| x.is_finite().then_some(x)).collect())
            .collect();
        mapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
            .collect())
    }
}
