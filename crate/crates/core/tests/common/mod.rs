//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the code under test except for plain data types,
//! so agreement with these oracles is evidence rather than tautology.

#![allow(dead_code)]

use abr_core::evaluation::ConfusionMatrix;
use abr_core::svm::SvmFit;
use abr_core::Label;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- metrics

/// Definitional metrics; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy)]
pub struct RefMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub gmean: Option<f64>,
}

pub fn reference_metrics(cm: &ConfusionMatrix) -> RefMetrics {
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let div = |a: f64, b: f64| if b == 0.0 { None } else { Some(a / b) };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let specificity = div(tn, tn + fp);
    // harmonic mean of precision and recall, written without the 2tp shortcut
    let f1 = if tp + fp + fn_ == 0.0 {
        None
    } else {
        match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => Some(0.0),
        }
    };
    RefMetrics {
        accuracy: div(tp + tn, tp + tn + fp + fn_),
        precision,
        recall,
        f1,
        gmean: match (recall, specificity) {
            (Some(r), Some(s)) => Some((r * s).sqrt()),
            _ => None,
        },
    }
}

pub fn random_confusion(rng: &mut ChaCha8Rng) -> ConfusionMatrix {
    // small counts make zero cells (and zero denominators) common
    let draw = |rng: &mut ChaCha8Rng| {
        if rng.random::<f64>() < 0.2 {
            0
        } else {
            rng.random_range(0..200u64)
        }
    };
    loop {
        let cm = ConfusionMatrix { tp: draw(rng), tn: draw(rng), fp: draw(rng), fn_: draw(rng) };
        if cm.tp + cm.tn + cm.fp + cm.fn_ > 0 {
            return cm;
        }
    }
}

// ---------------------------------------------------------------- AUC

/// Fraction of (positive, negative) pairs ordered correctly, ties 1/2.
pub fn pairwise_auc(labels: &[Label], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if li != Label::Abnormal {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != Label::Normal {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Random labels with both classes present and scores drawn from a small
/// grid so that ties are frequent.
pub fn random_scored_set(rng: &mut ChaCha8Rng) -> (Vec<Label>, Vec<f64>) {
    let n = rng.random_range(2..80usize);
    let grid = rng.random_range(2..12u32) as f64;
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if rng.random::<bool>() { Label::Abnormal } else { Label::Normal })
        .collect();
    labels[0] = Label::Abnormal;
    labels[1] = Label::Normal;
    let scores = (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.5 {
                (rng.random::<f64>() * grid).floor() / grid - 0.5
            } else {
                rng.random::<f64>() * 2.0 - 1.0
            }
        })
        .collect();
    (labels, scores)
}

// ---------------------------------------------------------------- QP oracle

pub fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    (-gamma * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp()
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Gram matrix for `Some(gamma)` (RBF) or `None` (linear).
pub fn gram(x: &[Vec<f64>], gamma: Option<f64>) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| match gamma {
        Some(g) => rbf(&x[i], &x[j], g),
        None => dot(&x[i], &x[j]),
    })
}

pub struct QpSolution {
    pub alphas: Vec<f64>,
    pub objective: f64,
}

/// `sum a - 1/2 sum_ij a_i a_j y_i y_j K_ij`.
pub fn dual_value(k: &DMatrix<f64>, y: &[f64], a: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * k[(i, j)];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Exact maximizer of the soft-margin dual by enumerating every face of the
/// box: each multiplier is pinned at 0, pinned at `c`, or free. On a face the
/// free block solves the equality-constrained KKT system
///
/// ```text
/// [Q_FF  y_F] [a_F]   [1 - Q_FB a_B]
/// [y_F^T  0 ] [ nu] = [ -y_B^T a_B ]
/// ```
///
/// by SVD least squares; consistent, box-feasible solutions are candidates
/// and the best candidate is the global optimum of the concave program.
pub fn brute_force_dual(k: &DMatrix<f64>, y: &[f64], c: f64) -> QpSolution {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let mut best: Option<QpSolution> = None;
    let faces = 3usize.pow(n as u32);
    for code in 0..faces {
        // state per index: 0 -> at 0, 1 -> at c, 2 -> free
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            let m = free.len();
            let mut lhs = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    lhs[(r, s)] = q[(i, j)];
                }
                lhs[(r, m)] = y[i];
                lhs[(m, r)] = y[i];
                let bound_part: f64 = (0..n).filter(|&j| state[j] != 2).map(|j| q[(i, j)] * a[j]).sum();
                rhs[r] = 1.0 - bound_part;
            }
            rhs[m] = -(0..n).filter(|&j| state[j] != 2).map(|j| y[j] * a[j]).sum::<f64>();
            let svd = lhs.clone().svd(true, true);
            let Ok(sol) = svd.solve(&rhs, 1e-12) else { continue };
            if (&lhs * &sol - &rhs).amax() > 1e-8 {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r];
            }
        }
        if a.iter().any(|&v| v < -1e-10 || v > c + 1e-10) {
            continue;
        }
        if y.iter().zip(&a).map(|(y, a)| y * a).sum::<f64>().abs() > 1e-9 {
            continue;
        }
        let objective = dual_value(k, y, &a);
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            best = Some(QpSolution { alphas: a, objective });
        }
    }
    best.expect("the zero vector is always feasible")
}

/// Bias from the KKT conditions of an optimal dual point: the average over
/// free multipliers, otherwise the midpoint of the interval allowed by the
/// bound ones.
pub fn reference_bias(k: &DMatrix<f64>, y: &[f64], a: &[f64], c: f64) -> f64 {
    let n = y.len();
    let eps = 1e-7 * c.max(1.0);
    let g = |t: usize| y[t] - (0..n).map(|j| a[j] * y[j] * k[(t, j)]).sum::<f64>();
    let free: Vec<f64> = (0..n).filter(|&t| a[t] > eps && a[t] < c - eps).map(g).collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..n {
        let at_upper = a[t] >= c - eps;
        // y f >= 1 at zero, y f <= 1 at c
        if (y[t] > 0.0) != at_upper {
            lo = lo.max(g(t));
        } else {
            hi = hi.min(g(t));
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo + hi) / 2.0,
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

// ---------------------------------------------------------------- data

/// Two well-separated Gaussian-ish clusters in `dim` dimensions; class is
/// balanced to within one.
pub fn blobs(n: usize, dim: usize, separation: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut rng = rng(seed);
    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { Label::Abnormal } else { Label::Normal };
        let centre = label.sign() * separation / 2.0;
        x.push((0..dim).map(|_| centre + normal(&mut rng)).collect());
        labels.push(label);
    }
    (x, labels)
}

/// Standard normal by Box–Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn targets(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|l| l.sign()).collect()
}

/// Largest KKT violation (0 when every condition holds exactly).
pub fn worst_kkt(fit: &SvmFit, y: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, (&a, &yi)) in fit.alphas.iter().zip(y).enumerate() {
        let m = yi * fit.training_scores[i];
        let c = fit.upper_bounds[i];
        let v = if a <= 0.0 {
            (1.0 - m).max(0.0)
        } else if a >= c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst.max(fit.equality_residual(y))
}
