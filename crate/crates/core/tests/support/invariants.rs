//! Softmax / KL / eigen / PCA invariants as plain checks, so they can be driven
//! both by proptest and by the seeded acceptance battery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somagrid::numcore::{
    entropy, kl_divergence, log_softmax, pca_fit_project, softmax, symmetric_eigen,
    symmetric_eigenvalues,
};
use somagrid::Tensor;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub type Check = Result<(), String>;

pub fn symmetric(n: usize, vals: &[f64]) -> Tensor {
    let mut m = Tensor::zeros(&[n, n]);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            m.set2(i, j, vals[k]);
            m.set2(j, i, vals[k]);
            k += 1;
        }
    }
    m
}

pub fn softmax_distribution(v: &[f64], temp: f64) -> Check {
    let p = softmax(v, temp).map_err(|e| e.to_string())?;
    ensure!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "softmax sums to {}", p.iter().sum::<f64>());
    ensure!(p.iter().all(|&x| (0.0..=1.0).contains(&x)), "softmax entry outside [0, 1]");
    for i in 0..v.len() {
        for j in 0..v.len() {
            ensure!(v[i] <= v[j] || p[i] >= p[j], "softmax not order preserving");
        }
    }
    Ok(())
}

pub fn softmax_shift(v: &[f64], c: f64) -> Check {
    let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
    let (a, b) = (softmax(v, 1.0).unwrap(), softmax(&shifted, 1.0).unwrap());
    for (x, y) in a.iter().zip(&b) {
        ensure!((x - y).abs() < 1e-12, "softmax moved under shift {c}");
    }
    let p = softmax(v, 1.0).unwrap();
    for (l, q) in log_softmax(v).iter().zip(&p) {
        ensure!((l - q.ln()).abs() < 1e-10, "log_softmax {l} vs ln softmax {}", q.ln());
    }
    Ok(())
}

pub fn kl_entropy(a: &[f64], b: &[f64]) -> Check {
    let n = a.len().min(b.len());
    let (q, p) = (softmax(&a[..n], 1.0).unwrap(), softmax(&b[..n], 1.0).unwrap());
    let kl = kl_divergence(&q, &p).map_err(|e| e.to_string())?;
    ensure!(kl >= -1e-12, "KL {kl} < 0");
    ensure!(kl_divergence(&q, &q).unwrap().abs() < 1e-12, "KL(q, q) != 0");
    let h = entropy(&q);
    ensure!(h >= -1e-12 && h <= (n as f64).ln() + 1e-12, "entropy {h} out of [0, ln n]");
    Ok(())
}

pub fn eigen(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..n * (n + 1) / 2).map(|_| rng.random_range(-3.0..3.0)).collect();
    let m = symmetric(n, &vals);
    let e = symmetric_eigen(&m).map_err(|e| e.to_string())?;
    ensure!(e.values.windows(2).all(|w| w[0] <= w[1]), "eigenvalues not ascending");
    let v = &e.vectors;
    let vtv = v.transpose().unwrap().matmul(v).unwrap();
    ensure!(vtv.max_abs_diff(&Tensor::identity(n)) < 1e-9, "VᵀV != I");
    let mut lam = Tensor::zeros(&[n, n]);
    for i in 0..n {
        lam.set2(i, i, e.values[i]);
    }
    let back = v.matmul(&lam).unwrap().matmul(&v.transpose().unwrap()).unwrap();
    ensure!(back.max_abs_diff(&m) < 1e-9, "V Λ Vᵀ != M");
    let trace: f64 = (0..n).map(|i| m.get2(i, i)).sum();
    ensure!((e.values.iter().sum::<f64>() - trace).abs() < 1e-9, "eigenvalues do not sum to the trace");
    ensure!(symmetric_eigenvalues(&m).unwrap() == e.values, "eigenvalue-only path disagrees");
    Ok(())
}

pub fn pca(rows: usize, dim: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Tensor::new(vec![rows, dim], (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let pca = pca_fit_project(&data, 2).map_err(|e| e.to_string())?;
    let c = &pca.components;
    let cct = c.matmul(&c.transpose().unwrap()).unwrap();
    ensure!(cct.max_abs_diff(&Tensor::identity(2)) < 1e-9, "components not orthonormal");
    for k in 0..2 {
        let row: Vec<f64> = (0..dim).map(|j| c.get2(k, j)).collect();
        let big = row.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        ensure!(big > 0.0, "component {k}: largest entry is negative");
    }
    ensure!(pca.explained_variance[0] >= pca.explained_variance[1] - 1e-12, "variance not descending");
    for k in 0..2 {
        let mean: f64 = (0..rows).map(|i| pca.projected.get2(i, k)).sum::<f64>() / rows as f64;
        ensure!(mean.abs() < 1e-9, "projection {k} not centred");
    }
    let row0: Vec<f64> = (0..dim).map(|j| data.get2(0, j)).collect();
    ensure!((pca.project(&row0)[0] - pca.projected.get2(0, 0)).abs() < 1e-9, "project() disagrees");
    let mut moved = data.clone();
    moved.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v += (i % dim) as f64 * 3.0);
    let pm = pca_fit_project(&moved, 2).unwrap();
    ensure!(pm.projected.max_abs_diff(&pca.projected) < 1e-8, "projection not translation invariant");
    Ok(())
}

/// Seeded sweep of every invariant, `instances` cases each.
pub fn seeded_battery(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let vec = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> Vec<f64> {
        let n = rng.random_range(lo..hi);
        (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
    };
    for i in 0..instances {
        let v = vec(&mut rng, 1, 10);
        softmax_distribution(&v, rng.random_range(0.05..5.0))?;
        softmax_shift(&v, rng.random_range(-50.0..50.0))?;
        let (a, b) = (vec(&mut rng, 2, 8), vec(&mut rng, 2, 8));
        kl_entropy(&a, &b)?;
        eigen(1 + i % 6, rng.random())?;
        pca(rng.random_range(3..20), rng.random_range(2..6), rng.random())?;
    }
    Ok(())
}
