//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the algorithms it checks.

#![allow(dead_code)]

use std::collections::BTreeMap;

use avdecode_core::{PosteriorGrid, SymbolLayout};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random grid with every column strictly positive, except the end-token
/// column when `zero_eos` is set.
pub fn random_grid(rng: &mut ChaCha8Rng, layout: SymbolLayout, frames: usize, zero_eos: bool) -> PosteriorGrid {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let mut r: Vec<f64> = (0..layout.size)
                .map(|v| if zero_eos && v == layout.eos { 0.0 } else { rng.gen_range(0.02..1.0) })
                .collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|x| *x /= s);
            r
        })
        .collect();
    PosteriorGrid::from_prob_rows(layout, &rows).unwrap()
}

/// Removes repeats then blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Linear-domain probability of every collapsed label sequence, summed over
/// all `V^T` frame paths.
pub fn path_sum(grid: &PosteriorGrid) -> BTreeMap<Vec<usize>, f64> {
    let v = grid.vocab_size();
    let t = grid.frame_count();
    let mut table = BTreeMap::new();
    let mut path = vec![0usize; t];
    loop {
        let p: f64 = path.iter().enumerate().map(|(i, &s)| grid.log_prob(i, s).exp()).product();
        *table.entry(collapse(&path, grid.blank())).or_insert(0.0) += p;
        // odometer increment
        let mut i = 0;
        loop {
            if i == t {
                return table;
            }
            path[i] += 1;
            if path[i] < v {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Every sequence over `alphabet` of length `0..=max_len`.
pub fn all_sequences(alphabet: &[usize], max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t: Vec<usize> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Plain unit-cost Levenshtein distance, single rolling row.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag } else { 1 + diag.min(up).min(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Direct-form strided convolution: `out[i] = Σ_k W[k] · x[2i + k − pad]`.
pub fn naive_conv(x: &[Vec<f64>], w: &[Vec<Vec<f64>>], stride: usize) -> Vec<Vec<f64>> {
    let width = w.len();
    let pad = (width - 1) / 2;
    let d_out = w[0][0].len();
    let n_out = x.len() / stride;
    (0..n_out)
        .map(|i| {
            (0..d_out)
                .map(|o| {
                    let mut acc = 0.0;
                    for (k, wk) in w.iter().enumerate() {
                        let pos = (stride * i + k) as i64 - pad as i64;
                        if pos < 0 || pos as usize >= x.len() {
                            continue;
                        }
                        for (xi, wi) in x[pos as usize].iter().zip(wk) {
                            acc += xi * wi[o];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Mean and population variance.
pub fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Measured SNR of `mixed` relative to `clean`, in dB.
pub fn measured_snr_db(clean: &[f64], mixed: &[f64]) -> f64 {
    let ps: f64 = clean.iter().map(|x| x * x).sum::<f64>();
    let pn: f64 = clean.iter().zip(mixed).map(|(c, m)| (m - c).powi(2)).sum::<f64>();
    10.0 * (ps / pn).log10()
}

pub fn log_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().map(f64::exp).sum::<f64>().ln()
}
