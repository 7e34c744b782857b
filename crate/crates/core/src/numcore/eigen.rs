//! Symmetric eigen-decomposition by cyclic Jacobi rotations.

use super::error::{NumError, NumResult};
use super::scalar::Scalar;
use super::tensor::Tensor;

const SYMMETRY_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending. Column `i` of
/// `vectors` pairs with `values[i]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Tensor<T>,
}

fn check_symmetric<T: Scalar>(m: &Tensor<T>) -> NumResult<usize> {
    let (r, c) = m.dims2()?;
    if r != c {
        return Err(NumError::dim(
            "symmetric_eigen",
            format!("{r}x{c} is not square"),
        ));
    }
    let tol = T::lit(SYMMETRY_TOL);
    for i in 0..r {
        for j in (i + 1)..r {
            if (m.get2(i, j) - m.get2(j, i)).abs() > tol {
                return Err(NumError::Contract(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    m.get2(i, j),
                    m.get2(j, i)
                )));
            }
        }
    }
    Ok(r)
}

pub fn symmetric_eigen<T: Scalar>(m: &Tensor<T>) -> NumResult<SymmetricEigen<T>> {
    let n = check_symmetric(m)?;
    let mut a = m.clone();
    // symmetrize exactly so rotations see one consistent matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (a.get2(i, j) + a.get2(j, i)) / T::lit(2.0);
            a.set2(i, j, avg);
            a.set2(j, i, avg);
        }
    }
    let mut v = Tensor::identity(n);
    let scale: T = a.data().iter().map(|&x| x * x).sum::<T>();
    let tol = T::epsilon() * T::epsilon() * scale;

    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get2(i, j) * a.get2(i, j))
            .sum();
        if off <= tol || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get2(p, q);
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.get2(q, q) - a.get2(p, p)) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get2(k, p), a.get2(k, q));
                    a.set2(k, p, c * akp - s * akq);
                    a.set2(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get2(p, k), a.get2(q, k));
                    a.set2(p, k, c * apk - s * aqk);
                    a.set2(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get2(k, p), v.get2(k, q));
                    v.set2(k, p, c * vkp - s * vkq);
                    v.set2(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get2(i, i)
            .partial_cmp(&a.get2(j, j))
            .expect("finite eigenvalues")
    });
    let values = order.iter().map(|&i| a.get2(i, i)).collect();
    let mut vectors = Tensor::zeros(&[n, n]);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set2(row, col, v.get2(row, src));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Ascending real eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues<T: Scalar>(m: &Tensor<T>) -> NumResult<Vec<T>> {
    symmetric_eigen(m).map(|e| e.values)
}
