//! CTC lattice mathematics in the natural-log domain.
//!
//! Three computations share the blank-augmented lattice: the forward
//! likelihood of a full target (training loss), its gradient with respect to
//! the grid's log-probabilities (forward-backward occupancy), and the prefix
//! forward variables `gamma_n`/`gamma_b` used by the joint decoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PosteriorGrid;
use crate::logspace::{log_add, LOG_ZERO};

/// Minimum number of frames needed to emit `target`: one per symbol plus a
/// separating blank between each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_target(grid: &PosteriorGrid, target: &[usize]) -> Result<()> {
    if grid.frame_count() == 0 {
        return Err(Error::EmptyGrid);
    }
    for (pos, &id) in target.iter().enumerate() {
        if id == grid.blank() {
            return Err(Error::BlankInTarget(pos));
        }
        if id >= grid.vocab_size() {
            return Err(Error::TokenOutOfRange { id, size: grid.vocab_size() });
        }
    }
    let required = min_frames(target);
    if grid.frame_count() < required {
        return Err(Error::Unalignable {
            target_len: target.len(),
            required,
            frames: grid.frame_count(),
        });
    }
    Ok(())
}

/// Blank-augmented target `[b, y1, b, y2, ..., yL, b]`.
fn augment(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &y in target {
        ext.push(y);
        ext.push(blank);
    }
    ext
}

#[inline]
fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

/// Full forward table, `alpha[t * S + s]`, each entry including frame `t`.
fn forward_table(grid: &PosteriorGrid, ext: &[usize]) -> Vec<f64> {
    let frames = grid.frame_count();
    let states = ext.len();
    let blank = grid.blank();
    let mut alpha = vec![LOG_ZERO; frames * states];
    alpha[0] = grid.log_prob(0, ext[0]);
    if states > 1 {
        alpha[1] = grid.log_prob(0, ext[1]);
    }
    for t in 1..frames {
        let (prev_rows, cur_rows) = alpha.split_at_mut(t * states);
        let prev = &prev_rows[(t - 1) * states..];
        let cur = &mut cur_rows[..states];
        let row = grid.row(t);
        for s in 0..states {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip(ext, s, blank) {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = a + row[ext[s]];
        }
    }
    alpha
}

fn final_log_likelihood(alpha: &[f64], frames: usize, states: usize) -> f64 {
    let last = &alpha[(frames - 1) * states..frames * states];
    if states > 1 {
        log_add(last[states - 1], last[states - 2])
    } else {
        last[0]
    }
}

/// Negative log-likelihood `-log p(target | grid)` summed over every
/// alignment that collapses to `target`. Returns `+inf` when the target has
/// zero probability under the grid.
pub fn ctc_forward_loss(grid: &PosteriorGrid, target: &[usize]) -> Result<f64> {
    check_target(grid, target)?;
    let ext = augment(target, grid.blank());
    let alpha = forward_table(grid, &ext);
    Ok(-final_log_likelihood(&alpha, grid.frame_count(), ext.len()))
}

/// Gradient of [`ctc_forward_loss`] with respect to every log-probability
/// entry of the grid, as a row-major `T x V` matrix.
pub fn ctc_gradient(grid: &PosteriorGrid, target: &[usize]) -> Result<Vec<f64>> {
    check_target(grid, target)?;
    let frames = grid.frame_count();
    let width = grid.vocab_size();
    let blank = grid.blank();
    let ext = augment(target, blank);
    let states = ext.len();
    let alpha = forward_table(grid, &ext);
    let log_like = final_log_likelihood(&alpha, frames, states);
    if log_like == LOG_ZERO {
        return Err(Error::InvalidGrid("target has zero probability under the grid".into()));
    }

    // beta excludes the emission at its own frame.
    let mut beta = vec![LOG_ZERO; frames * states];
    beta[(frames - 1) * states + states - 1] = 0.0;
    if states > 1 {
        beta[(frames - 1) * states + states - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        let row = grid.row(t + 1);
        for s in 0..states {
            let next = &beta[(t + 1) * states..(t + 2) * states];
            let mut b = next[s] + row[ext[s]];
            if s + 1 < states {
                b = log_add(b, next[s + 1] + row[ext[s + 1]]);
            }
            if s + 2 < states && can_skip(&ext, s + 2, blank) {
                b = log_add(b, next[s + 2] + row[ext[s + 2]]);
            }
            beta[t * states + s] = b;
        }
    }

    let mut grad = vec![0.0; frames * width];
    for t in 0..frames {
        let mut occupancy = vec![LOG_ZERO; width];
        for s in 0..states {
            let v = ext[s];
            occupancy[v] = log_add(occupancy[v], alpha[t * states + s] + beta[t * states + s]);
        }
        for v in 0..width {
            if occupancy[v] != LOG_ZERO {
                grad[t * width + v] = -(occupancy[v] - log_like).exp();
            }
        }
    }
    Ok(grad)
}

/// Forward variables of one decoding prefix.
///
/// `gamma_n[t]` / `gamma_b[t]` are the log-probabilities that frames
/// `1..=t+1` collapse to the prefix with the last frame non-blank / blank.
/// `psi` is the log prefix score accumulated while extending the parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixState {
    pub gamma_n: Vec<f64>,
    pub gamma_b: Vec<f64>,
    pub psi: f64,
    /// Last emitted symbol; `None` for the start-of-sentence root.
    pub last: Option<usize>,
}

impl PrefixState {
    /// `log(gamma_T^(n) + gamma_T^(b))`: probability that the prefix is the
    /// complete output.
    pub fn complete_score(&self) -> f64 {
        match (self.gamma_n.last(), self.gamma_b.last()) {
            (Some(&n), Some(&b)) => log_add(n, b),
            _ => LOG_ZERO,
        }
    }

    pub fn is_root(&self) -> bool {
        self.last.is_none()
    }
}

/// Result of extending a prefix by one decodable symbol.
#[derive(Debug, Clone, PartialEq)]
pub enum Extension {
    Prefix(PrefixState),
    /// The end token was appended; carries the complete-hypothesis CTC score.
    Complete(f64),
}

/// State of the start-of-sentence root: no non-blank mass, running product of
/// blank probabilities.
pub fn prefix_init(grid: &PosteriorGrid) -> Result<PrefixState> {
    let frames = grid.frame_count();
    if frames == 0 {
        return Err(Error::EmptyGrid);
    }
    let mut gamma_b = Vec::with_capacity(frames);
    let mut running = 0.0;
    for t in 0..frames {
        running += grid.log_prob(t, grid.blank());
        gamma_b.push(running);
    }
    Ok(PrefixState {
        gamma_n: vec![LOG_ZERO; frames],
        gamma_b,
        psi: 0.0,
        last: None,
    })
}

/// Extends `parent` by `symbol`. The end token yields the complete score of
/// the parent; any other symbol yields the child's forward variables and
/// prefix score.
pub fn prefix_extend(grid: &PosteriorGrid, parent: &PrefixState, symbol: usize) -> Result<Extension> {
    let layout = grid.layout();
    if symbol == layout.blank {
        return Err(Error::BlankExtension);
    }
    if symbol >= layout.size {
        return Err(Error::TokenOutOfRange { id: symbol, size: layout.size });
    }
    let frames = grid.frame_count();
    if parent.gamma_n.len() != frames || parent.gamma_b.len() != frames {
        return Err(Error::InvalidGrid("prefix state belongs to a different grid".into()));
    }
    if symbol == layout.eos {
        return Ok(Extension::Complete(parent.complete_score()));
    }

    let blank = layout.blank;
    let mut gamma_n = Vec::with_capacity(frames);
    let mut gamma_b = Vec::with_capacity(frames);
    let first = if parent.is_root() { grid.log_prob(0, symbol) } else { LOG_ZERO };
    gamma_n.push(first);
    gamma_b.push(LOG_ZERO);
    let mut psi = first;
    let repeat = parent.last == Some(symbol);
    for t in 1..frames {
        let phi = if repeat {
            parent.gamma_b[t - 1]
        } else {
            log_add(parent.gamma_b[t - 1], parent.gamma_n[t - 1])
        };
        let emit = grid.log_prob(t, symbol);
        let n = log_add(gamma_n[t - 1], phi) + emit;
        let b = log_add(gamma_b[t - 1], gamma_n[t - 1]) + grid.log_prob(t, blank);
        gamma_n.push(n);
        gamma_b.push(b);
        psi = log_add(psi, phi + emit);
    }
    Ok(Extension::Prefix(PrefixState {
        gamma_n,
        gamma_b,
        psi,
        last: Some(symbol),
    }))
}

/// Follows `prefix` from the root and returns its state.
pub fn prefix_state_of(grid: &PosteriorGrid, prefix: &[usize]) -> Result<PrefixState> {
    let mut state = prefix_init(grid)?;
    for &c in prefix {
        state = match prefix_extend(grid, &state, c)? {
            Extension::Prefix(s) => s,
            Extension::Complete(_) => {
                return Err(Error::InvalidTarget("end token inside a prefix".into()))
            }
        };
    }
    Ok(state)
}
