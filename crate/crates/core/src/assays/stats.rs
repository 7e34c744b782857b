//! Rank statistics and summaries used by the report.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest sample for which Spearman's p is enumerated over all permutations.
pub const EXACT_SPEARMAN_MAX_N: usize = 10;
/// Largest `C(n+m, n)` for which the Mann-Whitney null is enumerated.
const EXACT_MW_MAX_ARRANGEMENTS: f64 = 2.0e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Summary {
            n: 0,
            median: f64::NAN,
            q1: f64::NAN,
            q3: f64::NAN,
        };
    }
    v.sort_by(f64::total_cmp);
    Summary {
        n: v.len(),
        median: quantile_sorted(&v, 0.5),
        q1: quantile_sorted(&v, 0.25),
        q3: quantile_sorted(&v, 0.75),
    }
}

pub fn median(values: &[f64]) -> f64 {
    summarize(values).median
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pearson correlation; `None` when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    // checked directly: a constant's computed mean need not equal the constant
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Ranks starting at 1, ties sharing their mid-rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&midranks(x), &midranks(y))
}

/// Standard normal upper tail `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes' Chebyshev fit, |rel err| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

fn for_each_permutation(items: &mut Vec<f64>, k: usize, f: &mut impl FnMut(&[f64])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        for_each_permutation(items, k + 1, f);
        items.swap(k, i);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
    pub method: PMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
    MonteCarlo,
}

/// Spearman's ρ with a two-sided p: exact enumeration for `n ≤ 10`, otherwise
/// the normal approximation `z = ρ √(n − 1)`.
pub fn residue_correlation(x: &[f64], y: &[f64]) -> Option<Correlation> {
    let rho = spearman(x, y)?;
    let n = x.len();
    if n <= EXACT_SPEARMAN_MAX_N {
        let rx = midranks(x);
        let mut ry = midranks(y);
        let mut extreme = 0usize;
        let mut total = 0usize;
        for_each_permutation(&mut ry, 0, &mut |perm| {
            total += 1;
            if pearson(&rx, perm).is_some_and(|r| r.abs() >= rho.abs() - 1e-12) {
                extreme += 1;
            }
        });
        return Some(Correlation {
            rho,
            p: extreme as f64 / total as f64,
            n,
            method: PMethod::Exact,
        });
    }
    let z = rho.abs() * ((n - 1) as f64).sqrt();
    Some(Correlation {
        rho,
        p: (2.0 * normal_sf(z)).min(1.0),
        n,
        method: PMethod::Normal,
    })
}

/// Two-sided Monte-Carlo permutation p for Spearman's ρ with a fixed seed,
/// using the `(1 + hits) / (1 + draws)` estimator.
pub fn spearman_permutation_p(
    x: &[f64],
    y: &[f64],
    draws: usize,
    seed: u64,
) -> Option<Correlation> {
    let rho = spearman(x, y)?;
    let rx = midranks(x);
    let mut ry = midranks(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..draws {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry).is_some_and(|r| r.abs() >= rho.abs() - 1e-12) {
            hits += 1;
        }
    }
    Some(Correlation {
        rho,
        p: (1 + hits) as f64 / (1 + draws) as f64,
        n: x.len(),
        method: PMethod::MonteCarlo,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// `U` of the first group: pairs `(a, b)` with `a > b`, ties counting one half.
    pub u: f64,
    pub p: f64,
    pub method: PMethod,
}

/// Number of arrangements of `n` and `m` items with each value of `U`.
fn u_distribution(n: usize, m: usize) -> Vec<f64> {
    // counts[i][j][u]: built up one item at a time
    let max_u = n * m;
    let mut prev: Vec<Vec<Vec<f64>>> = vec![vec![vec![]; m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            let mut c = vec![0.0; i * j + 1];
            if i == 0 || j == 0 {
                c[0] = 1.0;
            } else {
                // largest item belongs to group a (adds j to U) or to group b
                for (u, slot) in c.iter_mut().enumerate() {
                    let from_a = if u >= j {
                        prev[i - 1][j].get(u - j).copied().unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    let from_b = prev[i][j - 1].get(u).copied().unwrap_or(0.0);
                    *slot = from_a + from_b;
                }
            }
            prev[i][j] = c;
        }
    }
    let out = prev[n][m].clone();
    debug_assert_eq!(out.len(), max_u + 1);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Two-sided Mann-Whitney rank-sum test. Without ties and for small samples the
/// exact null distribution is used; otherwise the normal approximation with tie
/// and continuity corrections.
pub fn mannwhitney(a: &[f64], b: &[f64]) -> RankSum {
    let (n, m) = (a.len(), b.len());
    let mut pooled: Vec<f64> = a.to_vec();
    pooled.extend_from_slice(b);
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n].iter().sum();
    let u = r1 - (n * (n + 1)) as f64 / 2.0;
    if pooled.iter().all(|v| *v == pooled[0]) {
        return RankSum {
            u,
            p: 1.0,
            method: PMethod::Exact,
        };
    }
    let has_ties = {
        let mut s = pooled.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).any(|w| w[0] == w[1])
    };
    if !has_ties && binomial(n + m, n) <= EXACT_MW_MAX_ARRANGEMENTS {
        let dist = u_distribution(n, m);
        let total: f64 = dist.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = dist[..=k].iter().sum::<f64>() / total;
        let upper: f64 = dist[k..].iter().sum::<f64>() / total;
        return RankSum {
            u,
            p: (2.0 * lower.min(upper)).min(1.0),
            method: PMethod::Exact,
        };
    }
    let (nf, mf) = (n as f64, m as f64);
    let total = nf + mf;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * mf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    let mu = nf * mf / 2.0;
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    RankSum {
        u,
        p: (2.0 * normal_sf(z)).min(1.0),
        method: PMethod::Normal,
    }
}
