//! Dense complex-matrix kernel.
//!
//! Everything in this crate lives on matrices of dimension at most 16, so the
//! kernel is a flat row-major `Vec<Complex64>` with straightforward loops. The
//! Hermitian eigensolver is a cyclic Jacobi iteration on the real symmetric
//! embedding `[[Re, -Im], [Im, Re]]`, which is deterministic and accurate to
//! rounding for these sizes.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported matrix dimension (eight qubits).
pub const MAX_DIM: usize = 256;

/// Default tolerance for Hermiticity checks (max entrywise `|m - m^dagger|`).
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Default tolerance for positive-semidefiniteness (`lambda_min >= -tol`).
pub const PSD_TOL: f64 = 1e-10;

/// Jacobi stops once the off-diagonal Frobenius norm drops below this.
const JACOBI_OFF_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("matrix dimension must be positive".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::Size(dim));
        }
        if entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self { dim, entries: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Rank-one projector `|v><v|`.
    pub fn outer(v: &[Complex64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.entries[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        Ok(out)
    }

    /// `Tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Result<Complex64> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.entries[i * n + k] * other.entries[k * n + i];
            }
        }
        Ok(acc)
    }

    /// Largest entrywise deviation `|m_ij - conj(m_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest entrywise `|self - other|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_dim(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.dim, self.dim, other.dim, other.dim
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.dim + j]
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, |i, j| if i != j { ONE } else { ZERO })
}

pub fn pauli_y() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 1)] = -I;
    m[(1, 0)] = I;
    m
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diag(&[1.0, -1.0])
}

/// `[sigma_x, sigma_y, sigma_z]`.
pub fn paulis() -> [ComplexMatrix; 3] {
    [pauli_x(), pauli_y(), pauli_z()]
}

/// Kronecker product; `(a ⊗ b)[(i·nb + k), (j·nb + l)] = a[i,j]·b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let nb = b.dim;
    let dim = a.dim.checked_mul(nb).ok_or(Error::Size(usize::MAX))?;
    if dim > MAX_DIM {
        return Err(Error::Size(dim));
    }
    let mut out = ComplexMatrix::zeros(dim);
    for i in 0..a.dim {
        for j in 0..a.dim {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..nb {
                for l in 0..nb {
                    out[(i * nb + k, j * nb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of a non-empty list of factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut it = factors.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::Dimension("empty Kronecker product".into()))?
        .clone();
    it.try_fold(first, |acc, m| kron(&acc, m))
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn herm_eigvals(m: &ComplexMatrix) -> Result<Vec<f64>> {
    herm_eigvals_tol(m, HERMITIAN_TOL)
}

pub fn herm_eigvals_tol(m: &ComplexMatrix, herm_tol: f64) -> Result<Vec<f64>> {
    let defect = m.hermiticity_defect();
    if defect > herm_tol {
        return Err(Error::NotHermitian(defect));
    }
    let n = m.dim;
    // Real symmetric embedding; every eigenvalue appears twice.
    let n2 = 2 * n;
    let mut emb = vec![0.0; n2 * n2];
    for i in 0..n {
        for j in 0..n {
            // symmetrize so the embedding is exactly symmetric
            let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            emb[i * n2 + j] = z.re;
            emb[(i + n) * n2 + (j + n)] = z.re;
            emb[i * n2 + (j + n)] = -z.im;
            emb[(i + n) * n2 + j] = z.im;
        }
    }
    let (vals, _) = jacobi_eigh(emb, n2, false);
    Ok(vals.into_iter().step_by(2).collect())
}

/// True iff every eigenvalue of the Hermitian matrix is `>= -tol`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> bool {
    match herm_eigvals(m) {
        Ok(vals) => vals.last().is_none_or(|&min| min >= -tol),
        Err(_) => false,
    }
}

/// Eigen-decomposition of a real symmetric `n×n` matrix (row-major).
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors.
pub fn sym_eigh(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a.len(), n * n);
    let (vals, vecs) = jacobi_eigh(a.to_vec(), n, true);
    (vals, vecs.expect("eigenvectors requested"))
}

fn jacobi_eigh(mut a: Vec<f64>, n: usize, want_vectors: bool) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
    let mut v = if want_vectors {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        Some(v)
    } else {
        None
    };
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off < JACOBI_OFF_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let vals = order.iter().map(|&i| a[i * n + i]).collect();
    let vecs = v.map(|v| {
        order
            .iter()
            .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
            .collect()
    });
    (vals, vecs)
}
