//! Small dense linear algebra for Gram systems (p ≤ 16).

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Row-major square matrix.
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
            assert_eq!(r.len(), n, "row {i} has wrong length");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    /// `G_ij = v_i · v_j`.
    pub fn gram(vectors: &[Vec<f64>]) -> Self {
        let p = vectors.len();
        let mut g = Self::zeros(p);
        for i in 0..p {
            for j in i..p {
                let d = math::dot(&vectors[i], &vectors[j]);
                g.data[i * p + j] = d;
                g.data[j * p + i] = d;
            }
        }
        g
    }

    #[inline]
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

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn lu(&self) -> Lu {
        Lu::factor(self)
    }

    pub fn det(&self) -> f64 {
        self.lu().det()
    }
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn factor(a: &SquareMatrix) -> Self {
        let n = a.n;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let mut piv = k;
            let mut best = math::abs(lu[k * n + k]);
            for i in k + 1..n {
                let v = math::abs(lu[i * n + k]);
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Self {
            n,
            lu,
            perm,
            sign,
            singular,
        }
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.n).fold(self.sign, |acc, k| acc * self.lu[k * self.n + k])
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A x = b`; `None` when a zero pivot was met.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        if self.singular {
            return None;
        }
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        Some(x)
    }
}

/// Orthonormal basis of the orthogonal complement of `span(rows)` in ℝⁿ.
///
/// `rows` must be linearly independent. Uses twice-iterated modified
/// Gram–Schmidt, completing with standard basis vectors.
pub fn orthonormal_complement(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for r in rows {
        if let Some(q) = orthonormalize_against(r.clone(), &basis, 1e-300) {
            basis.push(q);
        }
    }
    let p = basis.len();
    let mut out = Vec::with_capacity(n - p.min(n));
    // pick standard vectors in order of least overlap with the row space
    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|k| (k, basis.iter().map(|q| q[k] * q[k]).sum::<f64>()))
        .collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));
    for (k, _) in order {
        if basis.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        if let Some(q) = orthonormalize_against(e, &basis, 1e-8) {
            basis.push(q.clone());
            out.push(q);
        }
    }
    out
}

fn orthonormalize_against(mut v: Vec<f64>, basis: &[Vec<f64>], min_norm: f64) -> Option<Vec<f64>> {
    let start = math::norm2(&v);
    for _ in 0..2 {
        for q in basis {
            let c = math::dot(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
    let nrm = math::norm2(&v);
    if nrm <= min_norm * start.max(1e-300) || nrm == 0.0 {
        return None;
    }
    for vi in &mut v {
        *vi /= nrm;
    }
    Some(v)
}
