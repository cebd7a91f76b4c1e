//! Dense helpers and a cyclic Jacobi eigen-solver for symmetric matrices.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Relative off-diagonal tolerance: the solver stops once every off-diagonal
/// element is below `CONVERGENCE * ‖A‖_F`.
pub const CONVERGENCE: f64 = 1e-12;

/// Eigenpairs sorted by descending eigenvalue. `vectors[i]` pairs with `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "row {i} has the wrong length");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn max_off_diagonal(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                m = m.max(self.get(i, j).abs());
            }
        }
        m
    }

    fn off_diagonal_abs_sum(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                s += self.get(i, j).abs();
            }
        }
        s
    }
}

/// Applies the rotation `(c, s)` to rows `p` and `q` of a row-major buffer.
#[inline]
fn rotate_rows(data: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (head, tail) = data.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Eigen-decomposes a symmetric matrix with cyclic Jacobi rotations.
///
/// The first three sweeps skip rotations whose pivot is below a fraction of the
/// mean off-diagonal magnitude; later sweeps rotate every pivot above the
/// convergence threshold. Eigenvectors are sign-normalised so their
/// largest-magnitude coordinate is positive.
pub fn symmetric_eigen(matrix: &SquareMatrix) -> Result<SymmetricEigen> {
    let n = matrix.n;
    let mut a = matrix.clone();
    // rows of `vt` are eigenvectors
    let mut vt = SquareMatrix::zeros(n);
    for i in 0..n {
        vt.set(i, i, 1.0);
    }
    let tol = CONVERGENCE * matrix.frobenius();

    let mut sweeps = 0;
    while a.max_off_diagonal() >= tol && tol > 0.0 {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        let threshold = if sweeps < 3 && n > 1 {
            (0.2 * a.off_diagonal_abs_sum() / (n * n) as f64).max(tol)
        } else {
            tol
        };
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < threshold {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // A ← Jᵀ A J: rows first, then columns.
                rotate_rows(&mut a.data, n, p, q, c, s);
                for k in 0..n {
                    let akp = a.data[k * n + p];
                    let akq = a.data[k * n + q];
                    a.data[k * n + p] = c * akp - s * akq;
                    a.data[k * n + q] = s * akp + c * akq;
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                rotate_rows(&mut vt.data, n, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v = vt.row(i).to_vec();
            normalize_sign(&mut v);
            v
        })
        .collect();
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Flips `v` so that its largest-magnitude coordinate is positive. Ties go to
/// the lowest index.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance between an input vector and an f64 vector (codebook, mean).
#[inline]
pub fn sq_dist_mixed(x: &[f32], w: &[f64]) -> f64 {
    x.iter()
        .zip(w)
        .map(|(&a, &b)| {
            let d = f64::from(a) - b;
            d * d
        })
        .sum()
}

#[inline]
pub fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}
