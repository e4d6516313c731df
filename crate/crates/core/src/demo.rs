//! End-to-end comparison of decoding modes on synthetic posteriors.
//!
//! Two corpora are decoded with greedy CTC, CTC-only beam search,
//! attention-only beam search and joint decoding: a small hand-built fixture
//! whose grids make greedy CTC stumble on repeated characters, and a seeded
//! random corpus whose grids are noisy one-hot alignments of random
//! transcripts. A character bigram fit on the transcript distribution plays
//! the attention decoder.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctc::ctc_forward_loss;
use crate::decoder::{decode_with_mode, DecodeMode, DecoderConfig};
use crate::error::Result;
use crate::grid::{PosteriorGrid, SymbolLayout};
use crate::logspace::LOG_ZERO;
use crate::scorer::{cross_entropy_loss, hybrid_loss, teacher_forced_log_probs, BigramScorer, HybridLossConfig};
use crate::vocab::Vocabulary;
use crate::wer::{corpus_wer, WerBreakdown};

pub const MODES: [DecodeMode; 4] = [DecodeMode::Greedy, DecodeMode::Ctc, DecodeMode::Attention, DecodeMode::Joint];

const LEXICON: &[&str] = &[
    "THE", "CAT", "SAT", "ON", "MAT", "A", "DOG", "RAN", "HOME", "GO", "GOOD", "BOOK", "SEE", "IT", "IS", "ALL",
    "WELL", "TOO", "FAR", "AWAY", "ARE", "YOU", "WHAT", "NOT", "TIME",
];

#[derive(Debug, Clone)]
pub struct DemoUtterance {
    pub id: String,
    pub reference: String,
    pub grid: PosteriorGrid,
}

#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub name: String,
    pub utterances: Vec<DemoUtterance>,
    /// Text the bigram scorer is fit on.
    pub scorer_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub utterances: usize,
    pub frames_per_char: usize,
    /// Logit margin of the aligned symbol.
    pub sharpness: f64,
    /// Standard deviation of Gaussian logit noise.
    pub noise: f64,
    pub scorer_sentences: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { seed: 0, utterances: 20, frames_per_char: 3, sharpness: 20.0, noise: 4.0, scorer_sentences: 400 }
    }
}

/// One frame of a hand-built grid.
#[derive(Debug, Clone)]
enum Frame {
    Sharp(usize),
    Mixed(Vec<(usize, f64)>),
}

/// Residual probability spread over every symbol not named in a frame.
const RESIDUAL: f64 = 1e-15;

fn build_grid(layout: SymbolLayout, frames: &[Frame]) -> Result<PosteriorGrid> {
    let rows: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let named: Vec<(usize, f64)> = match f {
                Frame::Sharp(s) => vec![(*s, 1.0)],
                Frame::Mixed(v) => v.clone(),
            };
            let others: Vec<usize> =
                layout.labels().chain([layout.blank]).filter(|s| !named.iter().any(|(n, _)| n == s)).collect();
            let mass = RESIDUAL * others.len() as f64;
            let named_total: f64 = named.iter().map(|(_, p)| p).sum();
            let mut row = vec![0.0; layout.size];
            for (s, p) in &named {
                row[*s] = p / named_total * (1.0 - mass);
            }
            for s in others {
                row[s] = RESIDUAL;
            }
            row
        })
        .collect();
    PosteriorGrid::from_prob_rows(layout, &rows)
}

/// Sharp frames for `text` (`per_char` frames per character, a blank
/// between equal neighbours, one blank at each end).
fn sharp_frames(vocab: &Vocabulary, text: &str, per_char: usize) -> Result<Vec<Frame>> {
    let ids = vocab.encode_text(text)?.ids;
    let mut frames = vec![Frame::Sharp(vocab.blank_id())];
    for (i, &c) in ids.iter().enumerate() {
        if i > 0 && ids[i - 1] == c {
            frames.push(Frame::Sharp(vocab.blank_id()));
        }
        frames.extend(std::iter::repeat_n(Frame::Sharp(c), per_char));
    }
    frames.push(Frame::Sharp(vocab.blank_id()));
    Ok(frames)
}

/// Hand-built corpus. `u1` has a frame torn between blank and a repeat of
/// the previous character (greedy inserts a doubled letter); `u2` spreads a
/// character over two uncertain frames whose individual argmax is blank
/// (greedy drops it); the rest are clean.
pub fn fixture_corpus(vocab: &Vocabulary) -> Result<DemoCorpus> {
    let layout = vocab.layout();
    let id = |c: char| vocab.id_of(c).expect("fixture symbol");
    let blank = vocab.blank_id();
    let mut utterances = Vec::new();

    let mut u1 = sharp_frames(vocab, "THE C", 3)?;
    u1.extend([Frame::Sharp(id('A')), Frame::Sharp(id('A'))]);
    u1.push(Frame::Mixed(vec![(blank, 0.52), (id('A'), 0.48)]));
    u1.extend([Frame::Sharp(id('A')), Frame::Sharp(id('T')), Frame::Sharp(id('T')), Frame::Sharp(id('T'))]);
    u1.extend(sharp_frames(vocab, " SAT", 3)?);
    utterances.push(("u1", "THE CAT SAT", u1));

    let mut u2 = sharp_frames(vocab, "G", 3)?;
    u2.extend([
        Frame::Mixed(vec![(blank, 0.6), (id('O'), 0.4)]),
        Frame::Mixed(vec![(blank, 0.6), (id('O'), 0.4)]),
    ]);
    u2.extend(sharp_frames(vocab, " HOME", 3)?);
    utterances.push(("u2", "GO HOME", u2));

    for (name, text) in [("u3", "A GOOD BOOK"), ("u4", "SEE IT"), ("u5", "ALL IS WELL"), ("u6", "THE DOG RAN FAR AWAY")] {
        utterances.push((name, text, sharp_frames(vocab, text, 3)?));
    }

    let utterances = utterances
        .into_iter()
        .map(|(id, text, frames)| {
            Ok(DemoUtterance { id: id.to_string(), reference: text.to_string(), grid: build_grid(layout, &frames)? })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scorer_text: Vec<String> = utterances.iter().map(|u| u.reference.clone()).collect();
    scorer_text.extend(
        ["THE CAT SAT ON THE MAT", "GO HOME", "IT IS A GOOD BOOK", "SEE THE DOG", "ALL IS WELL", "THE DOG RAN HOME"]
            .iter()
            .map(|s| s.to_string()),
    );
    Ok(DemoCorpus { name: "fixture".into(), utterances, scorer_text: scorer_text.join("\n") })
}

fn random_sentence<R: Rng>(rng: &mut R) -> String {
    let words = rng.gen_range(1..=3);
    (0..words).map(|_| *LEXICON.choose(rng).expect("non-empty lexicon")).collect::<Vec<_>>().join(" ")
}

/// Seeded random corpus: noisy logits around a one-hot alignment of each
/// transcript, softmax-normalized.
pub fn synthetic_corpus(vocab: &Vocabulary, cfg: &SyntheticConfig) -> Result<DemoCorpus> {
    let layout = vocab.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
    let mut utterances = Vec::with_capacity(cfg.utterances);
    for i in 0..cfg.utterances {
        let text = random_sentence(&mut rng);
        let frames = sharp_frames(vocab, &text, cfg.frames_per_char)?;
        let mut data = Vec::with_capacity(frames.len() * layout.size);
        for f in &frames {
            let Frame::Sharp(target) = f else { unreachable!("sharp frames only") };
            let logits: Vec<f64> = (0..layout.size)
                .map(|v| {
                    if v == layout.eos {
                        LOG_ZERO
                    } else {
                        let noise = if cfg.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                        noise + if v == *target { cfg.sharpness } else { 0.0 }
                    }
                })
                .collect();
            let max = logits.iter().copied().fold(LOG_ZERO, f64::max);
            let norm = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            data.extend(logits.iter().map(|l| l - norm));
        }
        utterances.push(DemoUtterance {
            id: format!("syn{i:04}"),
            reference: text,
            grid: PosteriorGrid::new(layout, frames.len(), data)?,
        });
    }
    let scorer_text = (0..cfg.scorer_sentences).map(|_| random_sentence(&mut rng)).collect::<Vec<_>>().join("\n");
    Ok(DemoCorpus { name: "synthetic".into(), utterances, scorer_text })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: DecodeMode,
    pub wer: Option<f64>,
    pub counts: WerBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub id: String,
    pub reference: String,
    pub frames: usize,
    /// Hypotheses in the order of [`MODES`].
    pub hypotheses: Vec<String>,
    pub ctc_nll: f64,
    pub ce_nll: f64,
    pub hybrid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub name: String,
    pub modes: Vec<ModeResult>,
    pub utterances: Vec<UtteranceResult>,
}

impl SectionReport {
    pub fn mode(&self, mode: DecodeMode) -> &ModeResult {
        self.modes.iter().find(|m| m.mode == mode).expect("every mode is reported")
    }

    pub fn hypothesis(&self, utterance: usize, mode: DecodeMode) -> &str {
        let idx = MODES.iter().position(|&m| m == mode).expect("known mode");
        &self.utterances[utterance].hypotheses[idx]
    }
}

/// Decodes every utterance in every mode and scores WER per mode.
pub fn run_corpus(
    vocab: &Vocabulary,
    corpus: &DemoCorpus,
    decoder: &DecoderConfig,
    loss: &HybridLossConfig,
) -> Result<SectionReport> {
    let scorer = BigramScorer::fit_text(vocab, &corpus.scorer_text)?;
    let utterances = corpus
        .utterances
        .par_iter()
        .map(|u| {
            let hypotheses = MODES
                .iter()
                .map(|&mode| {
                    let out = decode_with_mode(&u.grid, &scorer, decoder, mode)?;
                    vocab.decode_ids(out.best.labels())
                })
                .collect::<Result<Vec<_>>>()?;
            let reference = vocab.encode_text(&u.reference)?.ids;
            let ctc_nll = ctc_forward_loss(&u.grid, &reference)?;
            let mut target = reference.clone();
            target.push(vocab.eos_sos_id());
            let steps = teacher_forced_log_probs(&scorer, &target);
            let ce_nll = cross_entropy_loss(&steps, &target, vocab.layout(), loss.smoothing)?;
            Ok(UtteranceResult {
                id: u.id.clone(),
                reference: u.reference.clone(),
                frames: u.grid.frame_count(),
                hypotheses,
                ctc_nll,
                ce_nll,
                hybrid_loss: hybrid_loss(ctc_nll, ce_nll, loss),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let modes = MODES
        .iter()
        .enumerate()
        .map(|(i, &mode)| {
            let pairs: Vec<(&str, &str)> =
                utterances.iter().map(|u| (u.reference.as_str(), u.hypotheses[i].as_str())).collect();
            let scored = corpus_wer(&pairs)?;
            Ok(ModeResult { mode, wer: scored.wer, counts: scored.total })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SectionReport { name: corpus.name.clone(), modes, utterances })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoDefaults {
    pub alpha: f64,
    pub beam_width: usize,
    pub lambda: f64,
    pub smoothing: f64,
    pub snr_db: f64,
    pub apply_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub defaults: DemoDefaults,
    pub synthetic: SyntheticConfig,
    pub sections: Vec<SectionReport>,
}

pub fn run_demo(
    vocab: &Vocabulary,
    synthetic: &SyntheticConfig,
    decoder: &DecoderConfig,
    loss: &HybridLossConfig,
) -> Result<DemoReport> {
    let fixture = run_corpus(vocab, &fixture_corpus(vocab)?, decoder, loss)?;
    let random = run_corpus(vocab, &synthetic_corpus(vocab, synthetic)?, decoder, loss)?;
    let noise = crate::audio::NoiseSpec::default();
    Ok(DemoReport {
        defaults: DemoDefaults {
            alpha: decoder.alpha,
            beam_width: decoder.beam_width,
            lambda: loss.lambda,
            smoothing: loss.smoothing,
            snr_db: noise.snr_db,
            apply_prob: noise.apply_prob,
        },
        synthetic: *synthetic,
        sections: vec![fixture, random],
    })
}

/// Plain-text comparison table.
pub fn render_table(report: &DemoReport) -> String {
    let d = &report.defaults;
    let mut out = format!(
        "alpha={} beam={} lambda={} smoothing={} snr_db={} p_noise={}\n",
        d.alpha, d.beam_width, d.lambda, d.smoothing, d.snr_db, d.apply_prob
    );
    for section in &report.sections {
        out.push_str(&format!("\n[{}] {} utterances\n", section.name, section.utterances.len()));
        out.push_str(&format!("{:<10} {:>8} {:>4} {:>4} {:>4} {:>5}\n", "mode", "WER", "S", "D", "I", "N"));
        for m in &section.modes {
            let mode = serde_json::to_value(m.mode).expect("mode serializes");
            out.push_str(&format!(
                "{:<10} {:>8} {:>4} {:>4} {:>4} {:>5}\n",
                mode.as_str().unwrap_or("?"),
                m.wer.map_or("n/a".to_string(), |w| format!("{w:.4}")),
                m.counts.substitutions,
                m.counts.deletions,
                m.counts.insertions,
                m.counts.ref_len
            ));
        }
    }
    out
}
