//! Householder QR with full (row and column) pivoting.
//!
//! At step `k` the largest remaining entry is swapped to position `(k, k)`
//! before the reflection, so `P A Q = Q_h R` with `|R_00| >= |R_11| >= ...`
//! and the rank shows up as the first negligible diagonal entry.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct FullPivQr {
    /// `R` in the upper triangle, Householder vectors (without the implicit
    /// leading 1) below it.
    qr: DMatrix<f64>,
    beta: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    rank: usize,
}

impl FullPivQr {
    pub(crate) fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut qr = a.clone();
        let steps = m.min(n);
        let mut beta = vec![0.0; steps];
        // row swaps are applied to the matrix directly, so record the
        // sequence of transpositions and replay it on right-hand sides
        let mut rows = Vec::with_capacity(steps);
        let mut cols: Vec<usize> = (0..n).collect();
        let mut max_pivot = 0.0f64;
        let mut rank = steps;
        for k in 0..steps {
            let (mut pi, mut pj, mut pv) = (k, k, -1.0f64);
            for j in k..n {
                for i in k..m {
                    let v = qr[(i, j)].abs();
                    if v > pv {
                        (pi, pj, pv) = (i, j, v);
                    }
                }
            }
            qr.swap_rows(k, pi);
            qr.swap_columns(k, pj);
            cols.swap(k, pj);
            rows.push(pi);
            if k == 0 {
                max_pivot = pv;
            }
            if pv <= max_pivot * f64::EPSILON * (m.max(n) as f64) || pv == 0.0 {
                rank = rank.min(k);
            }

            let x0 = qr[(k, k)];
            let sigma: f64 = (k + 1..m).map(|i| qr[(i, k)] * qr[(i, k)]).sum();
            if sigma == 0.0 {
                beta[k] = 0.0;
                continue;
            }
            let norm = (x0 * x0 + sigma).sqrt();
            let alpha = if x0 > 0.0 { -norm } else { norm };
            let v0 = x0 - alpha;
            for i in k + 1..m {
                qr[(i, k)] /= v0;
            }
            beta[k] = -v0 / alpha;
            qr[(k, k)] = alpha;
            for j in k + 1..n {
                let mut s = qr[(k, j)];
                for i in k + 1..m {
                    s += qr[(i, k)] * qr[(i, j)];
                }
                s *= beta[k];
                qr[(k, j)] -= s;
                for i in k + 1..m {
                    let vik = qr[(i, k)];
                    qr[(i, j)] -= s * vik;
                }
            }
        }
        FullPivQr {
            qr,
            beta,
            rows,
            cols,
            rank,
        }
    }

    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    /// Least-squares solution of `A x = b` for full column rank `A`, `None`
    /// when rank deficient.
    pub(crate) fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let (m, n) = self.qr.shape();
        if self.rank < n || b.len() != m {
            return None;
        }
        let mut y = b.clone();
        for (k, &r) in self.rows.iter().enumerate() {
            y.swap_rows(k, r);
        }
        for k in 0..self.beta.len() {
            let mut s = y[k];
            for i in k + 1..m {
                s += self.qr[(i, k)] * y[i];
            }
            s *= self.beta[k];
            y[k] -= s;
            for i in k + 1..m {
                y[i] -= s * self.qr[(i, k)];
            }
        }
        let mut z = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in k + 1..n {
                s -= self.qr[(k, j)] * z[j];
            }
            z[k] = s / self.qr[(k, k)];
        }
        let mut x = DVector::zeros(n);
        for (k, &c) in self.cols.iter().enumerate() {
            x[c] = z[k];
        }
        Some(x)
    }
}
