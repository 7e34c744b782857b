use super::eigen::symmetric_eigen;
use super::error::{NumError, NumResult};
use super::scalar::Scalar;
use super::tensor::Tensor;

/// A fitted principal-component projection.
#[derive(Clone, Debug)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// `[n_components, dim]`, orthonormal rows, largest-magnitude entry of each row positive.
    pub components: Tensor<T>,
    pub explained_variance: Vec<T>,
    /// Input rows in component coordinates, `[n_rows, n_components]`.
    pub projected: Tensor<T>,
    /// Set when every row is identical; projections are then all zero.
    pub zero_variance: bool,
}

impl<T: Scalar> Pca<T> {
    pub fn project(&self, row: &[T]) -> Vec<T> {
        let (k, d) = self.components.dims2().expect("components are 2-D");
        (0..k)
            .map(|c| {
                (0..d)
                    .map(|j| (row[j] - self.mean[j]) * self.components.get2(c, j))
                    .sum()
            })
            .collect()
    }
}

/// Fits a PCA on `rows` (`[n, dim]`, centered internally) and projects them.
pub fn pca_fit_project<T: Scalar>(rows: &Tensor<T>, n_components: usize) -> NumResult<Pca<T>> {
    let (n, d) = rows.dims2()?;
    if n_components == 0 || n < n_components || d < n_components {
        return Err(NumError::Parameter(format!(
            "cannot extract {n_components} components from {n} rows of width {d}"
        )));
    }
    let nf = T::from_usize_lossy(n);
    let mean: Vec<T> = (0..d)
        .map(|j| (0..n).map(|i| rows.get2(i, j)).sum::<T>() / nf)
        .collect();
    let mut centered = rows.clone();
    for i in 0..n {
        for j in 0..d {
            centered.set2(i, j, rows.get2(i, j) - mean[j]);
        }
    }
    let zero_variance = centered.data().iter().all(|&v| v == T::zero());

    let denom = T::from_usize_lossy(if n > 1 { n - 1 } else { 1 });
    let mut cov = centered.transpose()?.matmul(&centered)?;
    cov.data_mut().iter_mut().for_each(|v| *v /= denom);
    let eig = symmetric_eigen(&cov)?;

    let mut components = Tensor::zeros(&[n_components, d]);
    let mut explained_variance = Vec::with_capacity(n_components);
    for c in 0..n_components {
        let src = d - 1 - c; // eigenvalues ascend
        explained_variance.push(eig.values[src].max(T::zero()));
        let col: Vec<T> = (0..d).map(|r| eig.vectors.get2(r, src)).collect();
        let pivot =
            col.iter().enumerate().fold(
                0,
                |best, (i, v)| if v.abs() > col[best].abs() { i } else { best },
            );
        let sign = if col[pivot] < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        for (j, v) in col.into_iter().enumerate() {
            components.set2(c, j, sign * v);
        }
    }

    let projected = if zero_variance {
        Tensor::zeros(&[n, n_components])
    } else {
        centered.matmul(&components.transpose()?)?
    };
    Ok(Pca {
        mean,
        components,
        explained_variance,
        projected,
        zero_variance,
    })
}
