//! Sequential minimal optimization for the soft-margin dual
//!
//! ```text
//! maximize  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij
//! s.t.      0 <= a_i <= C_i,  sum_i a_i y_i = 0
//! ```
//!
//! The solver works on the equivalent minimization with gradient
//! `G = Q a - 1`, `Q_ij = y_i y_j K_ij`. Each step picks the maximal
//! violating pair: `i` maximizes `-y_t G_t` over the multipliers that can
//! move up, `j` minimizes it over those that can move down. Since
//! `-y_t G_t = b - E_t` this is the pair with the largest error gap
//! `E_j - E_i`. Ties go to the lowest index.

/// Curvature floor for non positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final `m - M` violation gap.
    pub gap: f64,
}

pub(crate) struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

#[inline]
fn can_move_up(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 { a < c } else { a > 0.0 }
}

#[inline]
fn can_move_down(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 { a > 0.0 } else { a < c }
}

pub(crate) fn solve(
    kernel: &KernelMatrix,
    y: &[f64],
    upper: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> SmoSolution {
    let n = y.len();
    let mut a = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut gap;

    loop {
        let mut i = None;
        let mut m = f64::NEG_INFINITY;
        let mut j = None;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if can_move_up(y[t], a[t], upper[t]) && v > m {
                m = v;
                i = Some(t);
            }
            if can_move_down(y[t], a[t], upper[t]) && v < big_m {
                big_m = v;
                j = Some(t);
            }
        }
        gap = m - big_m;
        let (Some(i), Some(j)) = (i, j) else {
            converged = true;
            break;
        };
        if gap < tolerance {
            converged = true;
            break;
        }
        if iterations >= max_iterations {
            break;
        }
        iterations += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (a[i], a[j]);
        let q_ij = y[i] * y[j] * kernel.get(i, j);
        let (q_ii, q_jj) = (kernel.get(i, i), kernel.get(j, j));
        if y[i] != y[j] {
            let quad = (q_ii + q_jj + 2.0 * q_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > ci - cj {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = ci - diff;
                }
            } else if a[j] > cj {
                a[j] = cj;
                a[i] = cj + diff;
            }
        } else {
            let quad = (q_ii + q_jj - 2.0 * q_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > ci {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = sum - ci;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > cj {
                if a[j] > cj {
                    a[j] = cj;
                    a[i] = sum - cj;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }

        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        let (row_i, row_j) = (kernel.row(i), kernel.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * row_i[t] * di + y[j] * row_j[t] * dj);
        }
    }

    SmoSolution { bias: bias(&a, &grad, y, upper), alphas: a, iterations, converged, gap }
}

/// Average of `-y_t G_t` over free multipliers; midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn bias(a: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut free = 0usize;
    let mut lower_bound = f64::NEG_INFINITY;
    let mut upper_bound = f64::INFINITY;
    for t in 0..a.len() {
        let v = -y[t] * grad[t];
        if a[t] > 0.0 && a[t] < upper[t] {
            sum += v;
            free += 1;
        } else {
            // a_t = 0 needs y f >= 1, a_t = C_t needs y f <= 1; each bounds b
            let at_upper = a[t] >= upper[t];
            if (y[t] > 0.0) != at_upper {
                lower_bound = lower_bound.max(v);
            } else {
                upper_bound = upper_bound.min(v);
            }
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        match (lower_bound.is_finite(), upper_bound.is_finite()) {
            (true, true) => (lower_bound + upper_bound) / 2.0,
            (true, false) => lower_bound,
            (false, true) => upper_bound,
            (false, false) => 0.0,
        }
    }
}

/// `sum a - 1/2 a^T Q a`.
pub(crate) fn dual_objective(kernel: &KernelMatrix, y: &[f64], a: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        let row = kernel.row(i);
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * row[j];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}
