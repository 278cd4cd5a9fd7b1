//! Widely-linear (WL) representation of complex quantities.
//!
//! A complex vector `a` of length `N` is stored as the real vector
//! `[Re a; Im a]` of length `2N`. A complex matrix `B` acting on such vectors
//! is *strictly linear* (SL) when its real form has the rotation-block layout
//! `[[Re B, -Im B], [Im B, Re B]]`. Arbitrary `2M x 2N` real matrices are
//! widely linear and may mix real and imaginary parts freely.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_err, Error, Result};

/// Eigenvalues above `-PSD_REL_TOL * lambda_max` count as nonnegative.
pub const PSD_REL_TOL: f64 = 1e-10;

/// Real stacking `[Re a; Im a]` of a complex vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WlVector {
    data: DVector<f64>,
}

impl WlVector {
    pub fn from_real(data: DVector<f64>) -> Result<Self> {
        if data.len() % 2 != 0 {
            return dim_err(format!("WL vector needs even length, got {}", data.len()));
        }
        Ok(Self { data })
    }

    pub fn from_complex(v: &[Complex<f64>]) -> Self {
        let n = v.len();
        let data = DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im });
        Self { data }
    }

    pub fn to_complex(&self) -> Vec<Complex<f64>> {
        let n = self.n_complex();
        (0..n).map(|i| Complex::new(self.data[i], self.data[n + i])).collect()
    }

    pub fn n_complex(&self) -> usize {
        self.data.len() / 2
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.data
    }

    pub fn real_part(&self) -> DVector<f64> {
        self.data.rows(0, self.n_complex()).into_owned()
    }

    pub fn imag_part(&self) -> DVector<f64> {
        let n = self.n_complex();
        self.data.rows(n, n).into_owned()
    }
}

/// `2M x 2N` real matrix acting on WL vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WlMatrix {
    data: DMatrix<f64>,
}

impl WlMatrix {
    pub fn from_real(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() % 2 != 0 || data.ncols() % 2 != 0 {
            return dim_err(format!(
                "WL matrix needs even dimensions, got {}x{}",
                data.nrows(),
                data.ncols()
            ));
        }
        Ok(Self { data })
    }

    /// Real form of the strictly linear map `v -> B v`.
    pub fn strictly_linear(b: &DMatrix<Complex<f64>>) -> Self {
        let (m, n) = b.shape();
        let mut data = DMatrix::zeros(2 * m, 2 * n);
        for i in 0..m {
            for j in 0..n {
                let z = b[(i, j)];
                data[(i, j)] = z.re;
                data[(i, n + j)] = -z.im;
                data[(m + i, j)] = z.im;
                data[(m + i, n + j)] = z.re;
            }
        }
        Self { data }
    }

    /// Recovers the complex matrix from the left block column. Only meaningful
    /// for SL matrices.
    pub fn to_complex(&self) -> DMatrix<Complex<f64>> {
        let (m, n) = self.half_dims();
        DMatrix::from_fn(m, n, |i, j| Complex::new(self.data[(i, j)], self.data[(m + i, j)]))
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// `(M, N)` for a `2M x 2N` matrix.
    pub fn half_dims(&self) -> (usize, usize) {
        (self.data.nrows() / 2, self.data.ncols() / 2)
    }

    pub fn top_left(&self) -> DMatrix<f64> {
        self.block(0, 0)
    }

    pub fn top_right(&self) -> DMatrix<f64> {
        self.block(0, 1)
    }

    pub fn bottom_left(&self) -> DMatrix<f64> {
        self.block(1, 0)
    }

    pub fn bottom_right(&self) -> DMatrix<f64> {
        self.block(1, 1)
    }

    fn block(&self, bi: usize, bj: usize) -> DMatrix<f64> {
        let (m, n) = self.half_dims();
        self.data.view((bi * m, bj * n), (m, n)).into_owned()
    }

    pub fn is_strictly_linear(&self, tol: f64) -> bool {
        is_strictly_linear(&self.data, tol).unwrap_or(false)
    }

    pub fn mul_vector(&self, v: &WlVector) -> Result<WlVector> {
        if self.data.ncols() != v.data.len() {
            return dim_err(format!(
                "matrix has {} columns, vector has length {}",
                self.data.ncols(),
                v.data.len()
            ));
        }
        Ok(WlVector { data: &self.data * &v.data })
    }
}

/// Symmetric PSD real covariance of a WL vector, partitioned into the blocks
/// `E[Re Re^T]`, `E[Re Im^T]`, `E[Im Re^T]`, `E[Im Im^T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WlCovariance {
    data: DMatrix<f64>,
}

impl WlCovariance {
    /// Accepts a square, even-sized, symmetric matrix. The input is
    /// symmetrized exactly after the tolerance check.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let n = data.nrows();
        if n != data.ncols() || n % 2 != 0 {
            return dim_err(format!(
                "covariance must be square with even size, got {}x{}",
                n,
                data.ncols()
            ));
        }
        let scale = data.amax().max(1.0);
        let asym = (&data - data.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(Error::Domain(format!("covariance not symmetric (max asymmetry {asym:.3e})")));
        }
        Ok(Self::from_symmetric_unchecked(data))
    }

    pub(crate) fn from_symmetric_unchecked(data: DMatrix<f64>) -> Self {
        let sym = (&data + data.transpose()) * 0.5;
        Self { data: sym }
    }

    pub fn identity(n_complex: usize) -> Self {
        Self { data: DMatrix::identity(2 * n_complex, 2 * n_complex) }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn n_complex(&self) -> usize {
        self.data.nrows() / 2
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: &self.data * c }
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.data.clone());
        (eig.eigenvalues.min(), eig.eigenvalues.max())
    }

    /// Nonnegative spectrum up to `PSD_REL_TOL` relative to the largest eigenvalue.
    pub fn is_psd(&self) -> bool {
        let (lo, hi) = self.eigen_range();
        lo >= -PSD_REL_TOL * hi.abs().max(f64::MIN_POSITIVE)
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let n = self.n_complex();
        let d = &self.data;
        for i in 0..n {
            for j in 0..n {
                let rr = d[(i, j)];
                let ii = d[(n + i, n + j)];
                let ri = d[(i, n + j)];
                let ir = d[(n + i, j)];
                if (rr - ii).abs() > tol || (ri + ir).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Frobenius-nearest proper covariance: diagonal blocks averaged, cross
    /// blocks antisymmetrized. Equals the mean of `R` and `J R J^T` with `J`
    /// the WL form of multiplication by `j`, so PSD inputs stay PSD.
    pub fn project_proper(&self) -> Self {
        let n = self.n_complex();
        let d = &self.data;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let diag = 0.5 * (d[(i, j)] + d[(n + i, n + j)]);
                let cross = 0.5 * (d[(i, n + j)] - d[(n + i, j)]);
                out[(i, j)] = diag;
                out[(n + i, n + j)] = diag;
                out[(i, n + j)] = cross;
                out[(n + i, j)] = -cross;
            }
        }
        Self { data: out }
    }
}

/// `[Re v; Im v]`.
pub fn to_wl_vector(v: &[Complex<f64>]) -> WlVector {
    WlVector::from_complex(v)
}

/// Real form of a complex matrix, see [`WlMatrix::strictly_linear`].
pub fn to_sl_matrix(b: &DMatrix<Complex<f64>>) -> WlMatrix {
    WlMatrix::strictly_linear(b)
}

/// Checks `TL == BR` and `TR == -BL` in max-abs norm.
pub fn is_strictly_linear(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let (r, c) = m.shape();
    if r % 2 != 0 || c % 2 != 0 {
        return dim_err(format!("cannot split a {r}x{c} matrix into equal blocks"));
    }
    let (hm, hn) = (r / 2, c / 2);
    for i in 0..hm {
        for j in 0..hn {
            if (m[(i, j)] - m[(hm + i, hn + j)]).abs() > tol
                || (m[(i, hn + j)] + m[(hm + i, j)]).abs() > tol
            {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub fn is_proper(r: &WlCovariance, tol: f64) -> bool {
    r.is_proper(tol)
}

pub fn project_proper(r: &WlCovariance) -> WlCovariance {
    r.project_proper()
}

/// Projects an arbitrary `2M x 2N` matrix onto the SL subspace (block averaging).
pub fn project_strictly_linear(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (hm, hn) = (m.nrows() / 2, m.ncols() / 2);
    let mut out = m.clone();
    for i in 0..hm {
        for j in 0..hn {
            let a = 0.5 * (m[(i, j)] + m[(hm + i, hn + j)]);
            let b = 0.5 * (m[(hm + i, j)] - m[(i, hn + j)]);
            out[(i, j)] = a;
            out[(hm + i, hn + j)] = a;
            out[(hm + i, j)] = b;
            out[(i, hn + j)] = -b;
        }
    }
    out
}
