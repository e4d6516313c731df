//! Natural-log probability arithmetic.
//!
//! Exact zero probability is [`LOG_ZERO`] (negative infinity), which orders
//! below every finite log-probability and is absorbing under multiplication.

pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// `log(exp(a) + exp(b))` without overflow or underflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == LOG_ZERO {
        return LOG_ZERO;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(Σ exp(x_i))`; returns [`LOG_ZERO`] for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return LOG_ZERO;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `weight * log_value` with the convention `0 * log 0 = 0`.
#[inline]
pub fn weighted(weight: f64, log_value: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * log_value
    }
}
