use serde::{Deserialize, Serialize};

use super::error::{NumError, NumResult};
use super::scalar::Scalar;
use super::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment buffers for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (vec![T::zero(); p.len()], vec![T::zero(); p.len()]))
            .unzip();
        AdamState { step: 0, m, v }
    }
}

/// One bias-corrected Adam update. `grads[i] = None` means "no gradient", which
/// is treated as zero.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Option<&Tensor<T>>],
    state: &mut AdamState<T>,
    lr: T,
) -> NumResult<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NumError::dim(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let ok = state.m[i].len() == p.len() && g.is_none_or(|g| g.len() == p.len());
        if !ok {
            return Err(NumError::dim(
                "adam_step",
                format!("tensor {i} changed size"),
            ));
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (T::lit(BETA1), T::lit(BETA2), T::lit(EPSILON));
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..p.len() {
            let gj = g.map_or(T::zero(), |g| g.data()[j]);
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.data_mut()[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::vector(vec![1.0f64, -2.0]);
        let g = Tensor::vector(vec![0.0f64, 0.0]);
        let mut st = AdamState::new([&p]);
        for _ in 0..10 {
            adam_step(&mut [&mut p], &[Some(&g)], &mut st, 1e-3).unwrap();
        }
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr_sign() {
        let mut p = Tensor::vector(vec![0.0f64, 0.0]);
        let g = Tensor::vector(vec![3.0f64, -0.02]);
        let mut st = AdamState::new([&p]);
        let lr = 1e-3;
        let mut last = p.clone();
        for _ in 0..2000 {
            last = p.clone();
            adam_step(&mut [&mut p], &[Some(&g)], &mut st, lr).unwrap();
        }
        let step0 = p.data()[0] - last.data()[0];
        let step1 = p.data()[1] - last.data()[1];
        assert!((step0 + lr).abs() < 1e-6 * lr.max(1.0));
        assert!((step1 - lr).abs() < 1e-6);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // m̂ = g and v̂ = g², so the first move is −lr·g/(|g|+ε).
        let g = [0.5f64, -1e-3, 2.0e-9];
        let mut p = Tensor::vector(vec![0.1, 0.2, 0.3]);
        let before = p.clone();
        let gt = Tensor::vector(g.to_vec());
        let mut st = AdamState::new([&p]);
        let lr = 1e-2;
        adam_step(&mut [&mut p], &[Some(&gt)], &mut st, lr).unwrap();
        for j in 0..3 {
            let expect = -lr * g[j] / (g[j].abs() + EPSILON);
            let got = p.data()[j] - before.data()[j];
            assert!((got - expect).abs() < 1e-15, "{j}: {got} vs {expect}");
        }
    }

    #[test]
    fn missing_gradient_counts_as_zero() {
        let mut p = Tensor::vector(vec![1.0f64]);
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[None], &mut st, 1e-3).unwrap();
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(st.step, 1);
    }
}
