//! Small dense symmetric linear algebra: Cholesky solves and a condition
//! estimate. Systems here are Gram matrices of at most a few hundred rows.

use crate::error::{Error, Result};

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("matrix rows must form a square".into()));
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    fn check_symmetric(&self, tol: f64) -> Result<()> {
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..self.n {
            for j in 0..i {
                let asym = (self[(i, j)] - self[(j, i)]).abs() / scale;
                if asym > tol {
                    return Err(Error::NotSymmetric { row: i, col: j, asymmetry: asym });
                }
            }
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factorizes a symmetric matrix; a non-positive pivot is an error
    /// carrying its index. No jitter is added.
    pub fn factor(a: &Matrix) -> Result<Self> {
        a.check_symmetric(1e-10)?;
        let n = a.size();
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotSpd { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.size();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// 2-norm condition estimate `λ_max / λ_min` by power and inverse power
    /// iteration.
    pub fn condition_estimate(&self, a: &Matrix) -> f64 {
        let n = a.size();
        if n == 1 {
            return 1.0;
        }
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
        let power = |apply: &dyn Fn(&[f64]) -> Vec<f64>| -> f64 {
            let mut v = normalized(&start);
            let mut lambda = 0.0;
            for _ in 0..200 {
                let w = apply(&v);
                let next = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if next == 0.0 {
                    return 0.0;
                }
                v = w.iter().map(|x| x / next).collect();
                if (next - lambda).abs() <= 1e-10 * next {
                    lambda = next;
                    break;
                }
                lambda = next;
            }
            lambda
        };
        let lmax = power(&|v| a.mul_vec(v));
        let inv_lmin = power(&|v| self.solve(v));
        lmax * inv_lmin
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.size() {
        return Err(Error::InvalidArgument(format!(
            "right-hand side of length {} for a {}x{} system",
            b.len(),
            a.size(),
            a.size()
        )));
    }
    Ok(Cholesky::factor(a)?.solve(b))
}
