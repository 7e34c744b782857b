//! Untaped kernels shared by the tape and by callers that need no gradients.

use super::error::{NumError, NumResult};
use super::scalar::Scalar;

/// Probabilities are floored at this value before any log.
pub const PROB_FLOOR: f64 = 1e-8;

/// `softmax(v / temperature)`, computed with the max subtracted.
pub fn softmax<T: Scalar>(v: &[T], temperature: T) -> NumResult<Vec<T>> {
    if !(temperature > T::zero()) {
        return Err(NumError::Parameter(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = v.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let total: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

pub fn log_softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + v.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
    v.iter().map(|&x| x - lse).collect()
}

/// `Σ q ln(q / max(p, floor))`, with `0 ln 0 = 0`.
pub fn kl_divergence<T: Scalar>(q: &[T], p: &[T]) -> NumResult<T> {
    if q.len() != p.len() {
        return Err(NumError::dim(
            "kl_divergence",
            format!("lengths {} and {} differ", q.len(), p.len()),
        ));
    }
    let floor = T::lit(PROB_FLOOR);
    Ok(q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > T::zero())
        .map(|(&qi, &pi)| qi * (qi.ln() - pi.max(floor).ln()))
        .sum())
}

/// Entropy in nats.
pub fn entropy<T: Scalar>(p: &[T]) -> T {
    -p.iter()
        .filter(|&&x| x > T::zero())
        .map(|&x| x * x.ln())
        .sum::<T>()
}
