//! Autoregressive label scorers, cross-entropy with label smoothing and the
//! hybrid CTC/attention training loss.
//!
//! A [`Scorer`] stands in for the attention decoder: given a prefix it returns
//! a distribution over the decodable set (every symbol except blank). Three
//! reference scorers are provided: uniform, table-driven and a character
//! bigram with add-one smoothing.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PosteriorGrid, SymbolLayout};
use crate::logspace::{log_sum_exp, LOG_ZERO};
use crate::vocab::Vocabulary;

const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// Prefix handle plus the cumulative attention log-probability of the prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerState {
    pub prefix: Vec<usize>,
    pub score: f64,
}

impl ScorerState {
    pub fn root() -> Self {
        Self { prefix: Vec::new(), score: 0.0 }
    }

    pub fn advance(&self, symbol: usize, step_log_prob: f64) -> Self {
        let mut prefix = Vec::with_capacity(self.prefix.len() + 1);
        prefix.extend_from_slice(&self.prefix);
        prefix.push(symbol);
        Self { prefix, score: self.score + step_log_prob }
    }
}

pub trait Scorer: Send + Sync {
    fn layout(&self) -> SymbolLayout;

    /// Log-probabilities over all `V` symbols for the next position. The blank
    /// entry is always [`LOG_ZERO`].
    fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64>;

    fn name(&self) -> String;

    fn is_deterministic(&self) -> bool {
        true
    }

    /// Root state for an utterance whose posteriors are `grid`.
    fn start(&self, grid: &PosteriorGrid) -> Result<ScorerState> {
        if grid.layout() != self.layout() {
            return Err(Error::ContextMismatch);
        }
        Ok(ScorerState::root())
    }

    fn step(&self, state: &ScorerState, symbol: usize) -> Result<(ScorerState, f64)> {
        let layout = self.layout();
        if symbol == layout.blank {
            return Err(Error::BlankToken);
        }
        if symbol >= layout.size {
            return Err(Error::TokenOutOfRange { id: symbol, size: layout.size });
        }
        let lp = self.next_log_probs(&state.prefix)[symbol];
        Ok((state.advance(symbol, lp), lp))
    }
}

/// Cumulative log-probability of `sequence` (which should end with the end token).
pub fn sequence_log_prob(scorer: &dyn Scorer, sequence: &[usize]) -> Result<f64> {
    let mut state = ScorerState::root();
    for &c in sequence {
        state = scorer.step(&state, c)?.0;
    }
    Ok(state.score)
}

/// Per-step distributions under teacher forcing: row `l` conditions on `target[..l]`.
pub fn teacher_forced_log_probs(scorer: &dyn Scorer, target: &[usize]) -> Vec<Vec<f64>> {
    (0..target.len()).map(|l| scorer.next_log_probs(&target[..l])).collect()
}

fn check_distribution(layout: SymbolLayout, row: &[f64]) -> Result<()> {
    if row.len() != layout.size {
        return Err(Error::LengthMismatch { expected: layout.size, actual: row.len() });
    }
    if row[layout.blank] != LOG_ZERO {
        return Err(Error::InvalidScorer("blank must have zero probability".into()));
    }
    let total = log_sum_exp(row.iter().copied());
    if total.abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::InvalidScorer(format!(
            "distribution does not sum to one (log-sum-exp {total})"
        )));
    }
    Ok(())
}

fn uniform_row(layout: SymbolLayout) -> Vec<f64> {
    let lp = -(layout.decodable_count() as f64).ln();
    (0..layout.size).map(|v| if v == layout.blank { LOG_ZERO } else { lp }).collect()
}

#[derive(Debug, Clone)]
pub struct UniformScorer {
    layout: SymbolLayout,
    row: Vec<f64>,
}

impl UniformScorer {
    pub fn new(layout: SymbolLayout) -> Self {
        Self { layout, row: uniform_row(layout) }
    }
}

impl Scorer for UniformScorer {
    fn layout(&self) -> SymbolLayout {
        self.layout
    }

    fn next_log_probs(&self, _prefix: &[usize]) -> Vec<f64> {
        self.row.clone()
    }

    fn name(&self) -> String {
        "uniform".into()
    }
}

/// Looks up the next-symbol distribution by exact prefix; prefixes missing
/// from the table get the uniform distribution.
#[derive(Debug, Clone)]
pub struct TableScorer {
    layout: SymbolLayout,
    table: HashMap<Vec<usize>, Vec<f64>>,
    fallback: Vec<f64>,
}

/// File form: `{"steps": [{"<prefix>": {"<label>": logp, ...}, ...}, ...]}`.
/// Step `l` holds prefixes of length `l`; prefixes are written as text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableFile {
    pub steps: Vec<std::collections::BTreeMap<String, std::collections::BTreeMap<String, f64>>>,
}

impl TableScorer {
    pub fn new(layout: SymbolLayout, table: HashMap<Vec<usize>, Vec<f64>>) -> Result<Self> {
        for row in table.values() {
            check_distribution(layout, row)?;
        }
        Ok(Self { layout, table, fallback: uniform_row(layout) })
    }

    pub fn from_file(file: &TableFile, vocab: &Vocabulary) -> Result<Self> {
        let layout = vocab.layout();
        let mut table = HashMap::new();
        for (step, entries) in file.steps.iter().enumerate() {
            for (prefix_text, dist) in entries {
                let prefix = vocab.encode_text(prefix_text)?.ids;
                if prefix.len() != step {
                    return Err(Error::InvalidScorer(format!(
                        "prefix {prefix_text:?} listed under step {step}"
                    )));
                }
                let mut row = vec![LOG_ZERO; layout.size];
                for (label, &lp) in dist {
                    let id = vocab.id_of_label(label).ok_or_else(|| {
                        Error::InvalidScorer(format!("unknown label {label:?}"))
                    })?;
                    row[id] = lp;
                }
                table.insert(prefix, row);
            }
        }
        Self::new(layout, table)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let file: TableFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(&file, vocab)
    }
}

impl Scorer for TableScorer {
    fn layout(&self) -> SymbolLayout {
        self.layout
    }

    fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64> {
        self.table.get(prefix).unwrap_or(&self.fallback).clone()
    }

    fn name(&self) -> String {
        "table".into()
    }
}

/// Character bigram with add-one smoothing over the decodable set. The
/// start-of-sentence context shares the end token's row.
#[derive(Debug, Clone)]
pub struct BigramScorer {
    layout: SymbolLayout,
    rows: Vec<Vec<f64>>,
    counts: Vec<Vec<u64>>,
}

impl BigramScorer {
    pub fn fit<S: AsRef<[usize]>>(layout: SymbolLayout, sequences: &[S]) -> Result<Self> {
        let mut counts = vec![vec![0u64; layout.size]; layout.size];
        for seq in sequences {
            let mut prev = layout.eos;
            for &c in seq.as_ref() {
                if c == layout.blank || c == layout.eos || c >= layout.size {
                    return Err(Error::InvalidTarget(format!("symbol {c} cannot appear in text")));
                }
                counts[prev][c] += 1;
                prev = c;
            }
            counts[prev][layout.eos] += 1;
        }
        let decodable = layout.decodable_count() as f64;
        let rows = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                let denom = (total as f64 + decodable).ln();
                (0..layout.size)
                    .map(|v| {
                        if v == layout.blank {
                            LOG_ZERO
                        } else {
                            ((row[v] + 1) as f64).ln() - denom
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { layout, rows, counts })
    }

    /// Fits on text lines (one utterance per line, blank lines skipped).
    pub fn fit_text(vocab: &Vocabulary, corpus: &str) -> Result<Self> {
        let sequences = corpus
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| vocab.encode_text(l).map(|t| t.ids))
            .collect::<Result<Vec<_>>>()?;
        Self::fit(vocab.layout(), &sequences)
    }

    pub fn count(&self, prev: usize, next: usize) -> u64 {
        self.counts[prev][next]
    }
}

impl Scorer for BigramScorer {
    fn layout(&self) -> SymbolLayout {
        self.layout
    }

    fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let prev = prefix.last().copied().unwrap_or(self.layout.eos);
        self.rows[prev].clone()
    }

    fn name(&self) -> String {
        "bigram".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridLossConfig {
    pub lambda: f64,
    pub smoothing: f64,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        Self { lambda: 0.2, smoothing: 0.01 }
    }
}

impl HybridLossConfig {
    pub fn new(lambda: f64, smoothing: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidConfig(format!("lambda {lambda} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::InvalidConfig(format!("smoothing {smoothing} outside [0, 1)")));
        }
        Ok(Self { lambda, smoothing })
    }
}

/// Teacher-forced cross-entropy with uniform label smoothing over the
/// decodable set:
/// `-Σ_l [(1-ε) log p(y_l) + ε · mean_{v≠blank} log p(v)]`.
///
/// `step_log_probs` has one row of `V` log-probabilities per target position.
pub fn cross_entropy_loss(
    step_log_probs: &[Vec<f64>],
    target: &[usize],
    layout: SymbolLayout,
    smoothing: f64,
) -> Result<f64> {
    if step_log_probs.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: step_log_probs.len(),
        });
    }
    if target.last() != Some(&layout.eos) {
        return Err(Error::InvalidTarget("teacher-forcing target must end with the end token".into()));
    }
    let decodable = layout.decodable_count() as f64;
    let mut loss = 0.0;
    for (row, &y) in step_log_probs.iter().zip(target) {
        if row.len() != layout.size {
            return Err(Error::LengthMismatch { expected: layout.size, actual: row.len() });
        }
        if y == layout.blank {
            return Err(Error::BlankToken);
        }
        let mut term = (1.0 - smoothing) * row[y];
        if smoothing > 0.0 {
            let mean: f64 = layout.decodable().map(|v| row[v]).sum::<f64>() / decodable;
            term += smoothing * mean;
        }
        loss -= term;
    }
    Ok(loss)
}

/// `λ · ctc + (1 − λ) · ce`, both given as negative log-likelihoods.
pub fn hybrid_loss(ctc_nll: f64, ce_nll: f64, config: &HybridLossConfig) -> f64 {
    config.lambda * ctc_nll + (1.0 - config.lambda) * ce_nll
}
