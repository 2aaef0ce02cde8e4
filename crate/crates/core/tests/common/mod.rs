//! Shared test support: random instances, dense reference implementations
//! (independent of the library's solvers) and synthetic two-view data.
#![allow(dead_code)]

use deepcwc::{FeatureMatrix, LabeledDataset, PairedDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn gaussian_columns(rng: &mut ChaCha8Rng, dim: usize, samples: usize) -> Vec<Vec<f64>> {
    (0..samples).map(|_| gaussian_vec(rng, dim)).collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matrix(cols: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_columns(cols).unwrap()
}

/// Random labels in `0..classes` with every class present at least once.
pub fn covering_labels(rng: &mut ChaCha8Rng, samples: usize, classes: usize) -> Vec<i64> {
    assert!(samples >= classes);
    let mut labels: Vec<i64> = (0..classes as i64).collect();
    labels.extend((classes..samples).map(|_| rng.random_range(0..classes as i64)));
    // Fisher-Yates, done by hand so the oracle side owns its randomness.
    for i in (1..labels.len()).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
            .unwrap();
        a.swap(k, pivot);
        b.swap(k, pivot);
        let (head, tail) = a.split_at_mut(k + 1);
        let pivot_row = &head[k];
        for (i, row) in tail.iter_mut().enumerate() {
            let f = row[k] / pivot_row[k];
            for (x, p) in row[k..].iter_mut().zip(&pivot_row[k..]) {
                *x -= f * p;
            }
            b[k + 1 + i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Ridge coefficients from the `n × n` primal normal system, solved densely.
pub fn oracle_ridge(cols: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let n = cols.len();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| dot(&cols[i], &cols[j]) + if i == j { lambda } else { 0.0 })
                .collect()
        })
        .collect();
    let rhs: Vec<f64> = cols.iter().map(|c| dot(c, y)).collect();
    gauss_solve(gram, rhs)
}

/// Minimizes `‖y − Aα‖² + λ‖α‖²` by fixed-step gradient descent until the
/// gradient norm drops below `tol`.
pub fn gd_ridge(cols: &[Vec<f64>], y: &[f64], lambda: f64, tol: f64) -> Vec<f64> {
    let n = cols.len();
    let d = y.len();
    let frob2: f64 = cols.iter().map(|c| dot(c, c)).sum();
    let step = 1.0 / (2.0 * (frob2 + lambda));
    let mut alpha = vec![0.0; n];
    for _ in 0..10_000_000 {
        let mut r = vec![0.0; d];
        for (c, a) in cols.iter().zip(&alpha) {
            for (ri, ci) in r.iter_mut().zip(c) {
                *ri += ci * a;
            }
        }
        for (ri, yi) in r.iter_mut().zip(y) {
            *ri -= yi;
        }
        let grad: Vec<f64> = (0..n).map(|j| 2.0 * (dot(&cols[j], &r) + lambda * alpha[j])).collect();
        if norm(&grad) < tol {
            return alpha;
        }
        for (a, g) in alpha.iter_mut().zip(&grad) {
            *a -= step * g;
        }
    }
    panic!("gradient descent did not converge");
}

/// Per-class residuals computed from scratch: normalize, solve the primal
/// system densely, reconstruct each class from its own coefficients.
pub fn oracle_residuals(
    cols: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    y: &[f64],
    lambda: f64,
    coef_normalized: bool,
) -> Vec<f64> {
    let a: Vec<Vec<f64>> = cols.iter().map(|c| unit(c)).collect();
    let y = unit(y);
    let alpha = oracle_ridge(&a, &y, lambda);
    (0..classes)
        .map(|c| {
            let mut recon = vec![0.0; y.len()];
            let mut coef2 = 0.0;
            for (j, col) in a.iter().enumerate() {
                if labels[j] == c {
                    coef2 += alpha[j] * alpha[j];
                    for (r, v) in recon.iter_mut().zip(col) {
                        *r += alpha[j] * v;
                    }
                }
            }
            let diff: Vec<f64> = y.iter().zip(&recon).map(|(a, b)| a - b).collect();
            let res = norm(&diff);
            if coef_normalized {
                if coef2.sqrt() < 1e-12 {
                    norm(&y)
                } else {
                    res / coef2.sqrt()
                }
            } else {
                res
            }
        })
        .collect()
}

/// First index of the minimum.
pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

/// Predictions of the brute-force pipeline for each query: (image, deep, fused).
pub struct OraclePredictions {
    pub image: Vec<f64>,
    pub deep: Vec<f64>,
    pub fused: Vec<f64>,
}

pub fn oracle_pair(
    img_cols: &[Vec<f64>],
    deep_cols: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    img_query: &[f64],
    deep_query: &[f64],
    lambda: f64,
) -> OraclePredictions {
    let image = oracle_residuals(img_cols, labels, classes, img_query, lambda, false);
    let deep = oracle_residuals(deep_cols, labels, classes, deep_query, lambda, false);
    let fused = image.iter().zip(&deep).map(|(a, b)| a * b).collect();
    OraclePredictions { image, deep, fused }
}

/// Two-view synthetic data where each view only separates half the classes.
///
/// Classes `0..C/2` have a prototype in view A and are pure noise in view B;
/// classes `C/2..C` the reverse. Informative samples are `prototype + σ·ε`
/// with standard normal prototype and `ε`; uninformative samples are fresh
/// standard normal vectors.
pub struct ComplementaryViews {
    pub train: PairedDataset,
    pub test: PairedDataset,
    pub train_cols_a: Vec<Vec<f64>>,
    pub train_cols_b: Vec<Vec<f64>>,
    pub test_cols_a: Vec<Vec<f64>>,
    pub test_cols_b: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
}

pub const COMP_CLASSES: usize = 10;
pub const COMP_PER_CLASS: usize = 20;
pub const COMP_DIM_A: usize = 64;
pub const COMP_DIM_B: usize = 48;
pub const COMP_SIGMA: f64 = 0.3;

pub fn complementary_views(seed: u64) -> ComplementaryViews {
    let mut rng = rng(seed);
    let half = COMP_CLASSES / 2;
    let protos_a: Vec<Vec<f64>> = (0..half).map(|_| gaussian_vec(&mut rng, COMP_DIM_A)).collect();
    let protos_b: Vec<Vec<f64>> = (0..half).map(|_| gaussian_vec(&mut rng, COMP_DIM_B)).collect();

    let draw = |class: usize, rng: &mut ChaCha8Rng| -> (Vec<f64>, Vec<f64>) {
        let noisy = |proto: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
            proto
                .iter()
                .map(|p| {
                    let e: f64 = StandardNormal.sample(rng);
                    p + COMP_SIGMA * e
                })
                .collect::<Vec<f64>>()
        };
        if class < half {
            (noisy(&protos_a[class], rng), gaussian_vec(rng, COMP_DIM_B))
        } else {
            (gaussian_vec(rng, COMP_DIM_A), noisy(&protos_b[class - half], rng))
        }
    };

    let make = |rng: &mut ChaCha8Rng| {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut labels = Vec::new();
        for class in 0..COMP_CLASSES {
            for _ in 0..COMP_PER_CLASS {
                let (x, y) = draw(class, rng);
                a.push(x);
                b.push(y);
                labels.push(class);
            }
        }
        (a, b, labels)
    };
    let (train_a, train_b, train_labels) = make(&mut rng);
    let (test_a, test_b, test_labels) = make(&mut rng);

    let pair = |a: &[Vec<f64>], b: &[Vec<f64>], labels: &[usize]| {
        let raw: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
        deepcwc::pair_views(
            LabeledDataset::from_raw_labels(matrix(a), &raw, "synthetic view A").unwrap(),
            LabeledDataset::from_raw_labels(matrix(b), &raw, "synthetic view B").unwrap(),
        )
        .unwrap()
    };
    ComplementaryViews {
        train: pair(&train_a, &train_b, &train_labels),
        test: pair(&test_a, &test_b, &test_labels),
        train_cols_a: train_a,
        train_cols_b: train_b,
        test_cols_a: test_a,
        test_cols_b: test_b,
        train_labels,
        test_labels,
    }
}

/// Accuracy of a prediction list.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}
