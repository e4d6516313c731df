//! Word error rate with a full substitution/deletion/insertion breakdown.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    /// Number of reference words.
    pub ref_len: usize,
}

impl WerBreakdown {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`.
    pub fn wer(&self) -> Result<f64> {
        if self.ref_len == 0 {
            return Err(Error::EmptyReference);
        }
        Ok(self.errors() as f64 / self.ref_len as f64)
    }

    fn add(&mut self, other: &WerBreakdown) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.ref_len += other.ref_len;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Match,
    Sub,
    Del,
    Ins,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub reference: Option<String>,
    pub hypothesis: Option<String>,
    pub op: EditOp,
}

pub type AlignmentTrace = Vec<AlignedPair>;

pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Minimum-edit alignment of two word sequences. Among equally cheap
/// alignments the backtrace prefers substitution (or match), then
/// insertion, then deletion.
pub fn align_words<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> (WerBreakdown, AlignmentTrace) {
    let n = reference.len();
    let m = hypothesis.len();
    let eq = |i: usize, j: usize| reference[i].as_ref() == hypothesis[j].as_ref();
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        cost[i * w] = i;
        for j in 1..=m {
            let diag = cost[(i - 1) * w + j - 1] + usize::from(!eq(i - 1, j - 1));
            let ins = cost[i * w + j - 1] + 1;
            let del = cost[(i - 1) * w + j] + 1;
            cost[i * w + j] = diag.min(ins).min(del);
        }
    }

    let mut trace = Vec::with_capacity(n.max(m));
    let mut counts = WerBreakdown { ref_len: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let same = eq(i - 1, j - 1);
            if cost[(i - 1) * w + j - 1] + usize::from(!same) == here {
                let op = if same {
                    EditOp::Match
                } else {
                    counts.substitutions += 1;
                    EditOp::Sub
                };
                trace.push(AlignedPair {
                    reference: Some(reference[i - 1].as_ref().to_owned()),
                    hypothesis: Some(hypothesis[j - 1].as_ref().to_owned()),
                    op,
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && cost[i * w + j - 1] + 1 == here {
            counts.insertions += 1;
            trace.push(AlignedPair {
                reference: None,
                hypothesis: Some(hypothesis[j - 1].as_ref().to_owned()),
                op: EditOp::Ins,
            });
            j -= 1;
        } else {
            counts.deletions += 1;
            trace.push(AlignedPair {
                reference: Some(reference[i - 1].as_ref().to_owned()),
                hypothesis: None,
                op: EditOp::Del,
            });
            i -= 1;
        }
    }
    trace.reverse();
    (counts, trace)
}

/// Tokenizes both strings and aligns them.
pub fn align_text(reference: &str, hypothesis: &str) -> (WerBreakdown, AlignmentTrace) {
    align_words(&tokenize(reference), &tokenize(hypothesis))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceWer {
    pub index: usize,
    pub reference: String,
    pub hypothesis: String,
    pub counts: WerBreakdown,
    /// `None` when the reference is empty.
    pub wer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusWer {
    pub total: WerBreakdown,
    pub wer: Option<f64>,
    pub utterances: Vec<UtteranceWer>,
}

/// Sums counts over the corpus; the aggregate rate is `ΣE / ΣN`.
pub fn corpus_wer<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<CorpusWer> {
    if pairs.is_empty() {
        return Err(Error::InvalidManifest("no utterance pairs".into()));
    }
    let mut total = WerBreakdown::default();
    let utterances = pairs
        .iter()
        .enumerate()
        .map(|(index, (r, h))| {
            let (counts, _) = align_text(r.as_ref(), h.as_ref());
            total.add(&counts);
            let (wer, error) = match counts.wer() {
                Ok(w) => (Some(w), None),
                Err(e) => (None, Some(e.to_string())),
            };
            UtteranceWer {
                index,
                reference: r.as_ref().to_owned(),
                hypothesis: h.as_ref().to_owned(),
                counts,
                wer,
                error,
            }
        })
        .collect();
    Ok(CorpusWer { total, wer: total.wer().ok(), utterances })
}
