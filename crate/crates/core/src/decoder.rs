//! Joint CTC/attention one-pass beam search with shallow fusion.
//!
//! Every level expands each surviving prefix by every decodable symbol.
//! Extensions by the end token become complete hypotheses scored with the
//! exact CTC probability of the prefix; all other extensions are scored with
//! the CTC prefix probability. Each candidate's joint score is
//! `α · log p_ctc + (1 − α) · log p_att`, and the level is pruned to the
//! `beam_width` best. After the last level the survivors are completed with
//! the end token, so complete hypotheses of every label length
//! `0..=l_max` compete in the final ranking.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctc::{ctc_forward_loss, prefix_extend, prefix_init, Extension, PrefixState};
use crate::error::{Error, Result};
use crate::grid::PosteriorGrid;
use crate::logspace::{weighted, LOG_ZERO};
use crate::scorer::{sequence_log_prob, Scorer, ScorerState};

/// Upper bound on the number of sequences [`exhaustive_oracle`] will score.
pub const ORACLE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub alpha: f64,
    pub beam_width: usize,
    /// Maximum label length; `None` means the grid's frame count.
    pub l_max: Option<usize>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { alpha: 0.1, beam_width: 5, l_max: None }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam width must be at least 1".into()));
        }
        Ok(())
    }

    fn max_len(&self, grid: &PosteriorGrid) -> usize {
        self.l_max.unwrap_or(grid.frame_count())
    }

    pub fn joint(&self, ctc: f64, attn: f64) -> f64 {
        weighted(self.alpha, ctc) + weighted(1.0 - self.alpha, attn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Joint,
    Ctc,
    Attention,
    Greedy,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "ctc" => Ok(Self::Ctc),
            "attention" => Ok(Self::Attention),
            "greedy" => Ok(Self::Greedy),
            other => Err(Error::InvalidConfig(format!("unknown decode mode {other:?}"))),
        }
    }
}

/// A scored prefix or, when `complete`, a full sequence ending in the end token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub ctc_score: f64,
    pub attn_score: f64,
    pub joint_score: f64,
    pub complete: bool,
}

impl Hypothesis {
    /// Tokens without the trailing end token.
    pub fn labels(&self) -> &[usize] {
        match (self.complete, self.tokens.split_last()) {
            (true, Some((_, rest))) => rest,
            _ => &self.tokens,
        }
    }
}

/// Descending joint score; ties go to the shorter, then lexicographically
/// smaller, token sequence.
pub fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.joint_score
        .total_cmp(&a.joint_score)
        .then_with(|| a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    pub best: Hypothesis,
    /// Every complete hypothesis, best first.
    pub ranking: Vec<Hypothesis>,
    /// Complete hypotheses produced by closing the beam after the last level.
    pub final_level_completions: usize,
}

struct Active {
    hyp: Hypothesis,
    prefix: PrefixState,
    attn: ScorerState,
}

fn check_inputs(grid: &PosteriorGrid, scorer: &dyn Scorer, config: &DecoderConfig) -> Result<ScorerState> {
    config.validate()?;
    if grid.frame_count() == 0 {
        return Err(Error::EmptyGrid);
    }
    if !scorer.is_deterministic() {
        return Err(Error::NondeterministicScorer);
    }
    scorer.start(grid)
}

/// Beam search over the joint CTC/attention score.
pub fn decode(grid: &PosteriorGrid, scorer: &dyn Scorer, config: &DecoderConfig) -> Result<DecodeOutput> {
    let attn_root = check_inputs(grid, scorer, config)?;
    let layout = grid.layout();
    let l_max = config.max_len(grid);

    let mut active = vec![Active {
        hyp: Hypothesis {
            tokens: Vec::new(),
            ctc_score: 0.0,
            attn_score: 0.0,
            joint_score: 0.0,
            complete: false,
        },
        prefix: prefix_init(grid)?,
        attn: attn_root,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _level in 1..=l_max {
        let mut candidates = Vec::with_capacity(active.len() * layout.decodable_count());
        for g in &active {
            let next = scorer.next_log_probs(&g.attn.prefix);
            for c in layout.decodable() {
                let attn = g.attn.advance(c, next[c]);
                let mut tokens = Vec::with_capacity(g.hyp.tokens.len() + 1);
                tokens.extend_from_slice(&g.hyp.tokens);
                tokens.push(c);
                match prefix_extend(grid, &g.prefix, c)? {
                    Extension::Complete(ctc) => finished.push(Hypothesis {
                        tokens,
                        ctc_score: ctc,
                        attn_score: attn.score,
                        joint_score: config.joint(ctc, attn.score),
                        complete: true,
                    }),
                    Extension::Prefix(prefix) => candidates.push(Active {
                        hyp: Hypothesis {
                            tokens,
                            ctc_score: prefix.psi,
                            attn_score: attn.score,
                            joint_score: config.joint(prefix.psi, attn.score),
                            complete: false,
                        },
                        prefix,
                        attn,
                    }),
                }
            }
        }
        candidates.sort_by(|a, b| rank(&a.hyp, &b.hyp));
        candidates.truncate(config.beam_width);
        active = candidates;
        if active.is_empty() {
            break;
        }
    }

    let mut final_level_completions = 0;
    for g in &active {
        let eos_lp = scorer.next_log_probs(&g.attn.prefix)[layout.eos];
        let attn = g.attn.score + eos_lp;
        let ctc = g.prefix.complete_score();
        let mut tokens = g.hyp.tokens.clone();
        tokens.push(layout.eos);
        finished.push(Hypothesis {
            tokens,
            ctc_score: ctc,
            attn_score: attn,
            joint_score: config.joint(ctc, attn),
            complete: true,
        });
        final_level_completions += 1;
    }

    finished.sort_by(rank);
    let best = finished.first().cloned().ok_or(Error::EmptyResult)?;
    Ok(DecodeOutput { best, ranking: finished, final_level_completions })
}

/// Decodes with the weight implied by `mode` (`Ctc` = α 1, `Attention` = α 0).
pub fn decode_with_mode(
    grid: &PosteriorGrid,
    scorer: &dyn Scorer,
    config: &DecoderConfig,
    mode: DecodeMode,
) -> Result<DecodeOutput> {
    let config = match mode {
        DecodeMode::Joint => *config,
        DecodeMode::Ctc => DecoderConfig { alpha: 1.0, ..*config },
        DecodeMode::Attention => DecoderConfig { alpha: 0.0, ..*config },
        DecodeMode::Greedy => {
            check_inputs(grid, scorer, config)?;
            let mut tokens = greedy_ctc(grid);
            let ctc = complete_ctc_score(grid, &tokens)?;
            tokens.push(grid.layout().eos);
            let attn = sequence_log_prob(scorer, &tokens)?;
            let best = Hypothesis {
                tokens,
                ctc_score: ctc,
                attn_score: attn,
                joint_score: config.joint(ctc, attn),
                complete: true,
            };
            return Ok(DecodeOutput { ranking: vec![best.clone()], best, final_level_completions: 0 });
        }
    };
    decode(grid, scorer, &config)
}

/// Decodes independent utterances in parallel; results keep input order.
pub fn decode_batch(
    grids: &[PosteriorGrid],
    scorer: &dyn Scorer,
    config: &DecoderConfig,
    mode: DecodeMode,
) -> Vec<Result<DecodeOutput>> {
    grids.par_iter().map(|g| decode_with_mode(g, scorer, config, mode)).collect()
}

/// `log p_ctc(labels | grid)` for a complete label sequence, zero-probability
/// sequences included.
pub fn complete_ctc_score(grid: &PosteriorGrid, labels: &[usize]) -> Result<f64> {
    match ctc_forward_loss(grid, labels) {
        Ok(loss) => Ok(-loss),
        Err(Error::Unalignable { .. }) => Ok(LOG_ZERO),
        Err(e) => Err(e),
    }
}

/// Scores every label sequence of length `<= l_max` and returns the best
/// complete hypothesis. Exponential; for verification only.
pub fn exhaustive_oracle(grid: &PosteriorGrid, scorer: &dyn Scorer, config: &DecoderConfig) -> Result<Hypothesis> {
    check_inputs(grid, scorer, config)?;
    let layout = grid.layout();
    let labels: Vec<usize> = layout.labels().collect();
    let l_max = config.max_len(grid);
    let n = labels.len() as u128;
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=l_max {
        total = total.saturating_add(level);
        if total > ORACLE_LIMIT {
            return Err(Error::SearchSpaceTooLarge(total));
        }
        level = level.saturating_mul(n);
    }

    let mut best: Option<Hypothesis> = None;
    let mut seq = Vec::with_capacity(l_max + 1);
    let mut visit = |seq: &[usize]| -> Result<()> {
        let ctc = complete_ctc_score(grid, seq)?;
        let mut tokens = seq.to_vec();
        tokens.push(layout.eos);
        let attn = sequence_log_prob(scorer, &tokens)?;
        let hyp = Hypothesis {
            tokens,
            ctc_score: ctc,
            attn_score: attn,
            joint_score: config.joint(ctc, attn),
            complete: true,
        };
        if best.as_ref().is_none_or(|b| rank(&hyp, b) == Ordering::Less) {
            best = Some(hyp);
        }
        Ok(())
    };
    enumerate_sequences(&labels, l_max, &mut seq, &mut visit)?;
    best.ok_or(Error::EmptyResult)
}

fn enumerate_sequences(
    labels: &[usize],
    remaining: usize,
    seq: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    visit(seq)?;
    if remaining == 0 {
        return Ok(());
    }
    for &c in labels {
        seq.push(c);
        enumerate_sequences(labels, remaining - 1, seq, visit)?;
        seq.pop();
    }
    Ok(())
}

/// Per-frame argmax, repeats collapsed, blanks dropped. Ties go to the lower id.
pub fn greedy_ctc(grid: &PosteriorGrid) -> Vec<usize> {
    let blank = grid.blank();
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..grid.frame_count() {
        let row = grid.row(t);
        let mut arg = 0;
        for (v, &x) in row.iter().enumerate() {
            if x > row[arg] {
                arg = v;
            }
        }
        if Some(arg) != prev && arg != blank {
            out.push(arg);
        }
        prev = Some(arg);
    }
    out
}
