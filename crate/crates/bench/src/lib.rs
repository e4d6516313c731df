//! Seeded inputs shared by the benchmarks.

use avdecode_core::demo::{synthetic_corpus, SyntheticConfig};
use avdecode_core::{BigramScorer, PosteriorGrid, SymbolLayout, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense random grid: every column positive except the end token.
pub fn random_grid(seed: u64, layout: SymbolLayout, frames: usize) -> PosteriorGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let mut r: Vec<f64> =
                (0..layout.size).map(|v| if v == layout.eos { 0.0 } else { rng.gen_range(0.01..1.0) }).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|x| *x /= s);
            r
        })
        .collect();
    PosteriorGrid::from_prob_rows(layout, &rows).expect("rows are normalized")
}

/// A realistic peaky grid plus its transcript and a bigram scorer.
pub fn utterance(seed: u64) -> (PosteriorGrid, Vec<usize>, BigramScorer) {
    let vocab = Vocabulary::default();
    let corpus = synthetic_corpus(&vocab, &SyntheticConfig { seed, utterances: 1, ..Default::default() })
        .expect("synthetic corpus");
    let u = &corpus.utterances[0];
    let target = vocab.encode_text(&u.reference).expect("lexicon text").ids;
    let scorer = BigramScorer::fit_text(&vocab, &corpus.scorer_text).expect("scorer text");
    (u.grid.clone(), target, scorer)
}
