use nalgebra::{DMatrix, DVector, Matrix2};

use super::{user_rows, RateScenario};
use crate::error::{Error, Result};
use crate::TWO_OVER_PI;

/// Fast evaluation of the sum-rate bound and its gradient with respect to
/// each user's covariance.
///
/// Writing `C = S R S` and `C_k = S R_k S` with `S = diag(R)^-1/2`, the
/// SQINR terms collapse to
///
/// ```text
/// T_k = (2/pi) H_k asin(C) H_k^T + sigma^2/2 I      (signal + interference + noise)
/// N_k = (2/pi) H_k (asin(C) - C_k) H_k^T + sigma^2/2 I
/// rate_k = 1/2 (log2 det T_k - log2 det N_k)
/// ```
///
/// so no inverse of `R` is needed and the bound is invariant to a common
/// scaling of all covariances.
#[derive(Debug, Clone)]
pub struct RateEvaluator {
    rows: Vec<DMatrix<f64>>,
    half_noise: f64,
    dim: usize,
}

/// Correlations are kept this far inside +-1 when differentiating `asin`.
const ASIN_SLOPE_FLOOR: f64 = 1e-12;

struct Prepared {
    s: DVector<f64>,
    c: DMatrix<f64>,
    asin_c: DMatrix<f64>,
    c_users: Vec<DMatrix<f64>>,
}

impl RateEvaluator {
    pub fn new(scenario: &RateScenario) -> Self {
        let k = scenario.num_users();
        let rows = (0..k).map(|u| user_rows(scenario.channel().data(), k, u)).collect();
        Self { rows, half_noise: 0.5 * scenario.noise_var(), dim: 2 * scenario.num_antennas() }
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    fn prepare(&self, covs: &[DMatrix<f64>]) -> Result<Prepared> {
        let n = self.dim;
        let mut total = DMatrix::zeros(n, n);
        for c in covs {
            total += c;
        }
        let mut s = DVector::zeros(n);
        for i in 0..n {
            let d = total[(i, i)];
            if !(d > 0.0) {
                return Err(Error::Domain(format!("transmit power on dimension {i} is {d}")));
            }
            s[i] = 1.0 / d.sqrt();
        }
        let scale = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]);
        let mut c = scale(&total);
        c.fill_diagonal(1.0);
        c.apply(|v| *v = v.clamp(-1.0, 1.0));
        let asin_c = c.map(f64::asin);
        let c_users = covs.iter().map(scale).collect();
        Ok(Prepared { s, c, asin_c, c_users })
    }

    fn quad(&self, k: usize, m: &DMatrix<f64>) -> Matrix2<f64> {
        let h = &self.rows[k];
        let q = h * m * h.transpose();
        Matrix2::new(q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]) * TWO_OVER_PI
            + Matrix2::identity() * self.half_noise
    }

    /// Sum-rate bound in bits per channel use.
    pub fn value(&self, covs: &[DMatrix<f64>]) -> Result<f64> {
        let p = self.prepare(covs)?;
        let mut total = 0.0;
        for k in 0..self.rows.len() {
            let t = self.quad(k, &p.asin_c);
            let nk = self.quad(k, &(&p.asin_c - &p.c_users[k]));
            total += 0.5 * (logdet2(&t)? - logdet2(&nk)?).max(0.0);
        }
        Ok(total)
    }

    /// Per-user rates.
    pub fn user_rates(&self, covs: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        let p = self.prepare(covs)?;
        (0..self.rows.len())
            .map(|k| {
                let t = self.quad(k, &p.asin_c);
                let nk = self.quad(k, &(&p.asin_c - &p.c_users[k]));
                Ok(0.5 * (logdet2(&t)? - logdet2(&nk)?).max(0.0))
            })
            .collect()
    }

    /// Bound and its gradient with respect to every `R_k`, treating the
    /// entries of `R_k` as independent (the gradient is symmetric).
    pub fn value_and_gradient(&self, covs: &[DMatrix<f64>]) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let p = self.prepare(covs)?;
        let n = self.dim;
        let users = self.rows.len();
        let ln2 = std::f64::consts::LN_2;

        let mut value = 0.0;
        let mut m_total = DMatrix::zeros(n, n);
        let mut w_noise = Vec::with_capacity(users);
        for k in 0..users {
            let t = self.quad(k, &p.asin_c);
            let nk = self.quad(k, &(&p.asin_c - &p.c_users[k]));
            value += 0.5 * (logdet2(&t)? - logdet2(&nk)?);
            let h = &self.rows[k];
            let t_inv = inv2(&t)?;
            let n_inv = inv2(&nk)?;
            let wt = h.transpose() * to_dyn(&t_inv) * h * TWO_OVER_PI;
            let wn = h.transpose() * to_dyn(&n_inv) * h * TWO_OVER_PI;
            m_total += &wt - &wn;
            w_noise.push(wn);
        }

        // weight on dC through d asin(C); the diagonal of C is fixed at one
        let mut b = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    let cij = p.c[(i, j)];
                    let slope = 1.0 / (1.0 - cij * cij).max(ASIN_SLOPE_FLOOR).sqrt();
                    b[(i, j)] = m_total[(i, j)] * slope;
                }
            }
        }

        // dependence of C and C_k on diag(R)
        let mut v = DVector::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += b[(i, j)] * p.c[(i, j)];
                for (wn, ck) in w_noise.iter().zip(&p.c_users) {
                    acc += wn[(i, j)] * ck[(i, j)];
                }
            }
            v[i] = acc * p.s[i] * p.s[i];
        }

        let scale = 1.0 / (2.0 * ln2);
        let grads = w_noise
            .iter()
            .map(|wn| {
                let mut g = DMatrix::from_fn(n, n, |i, j| (b[(i, j)] + wn[(i, j)]) * p.s[i] * p.s[j]);
                for i in 0..n {
                    g[(i, i)] -= v[i];
                }
                g * scale
            })
            .collect();
        Ok((value, grads))
    }
}

fn logdet2(m: &Matrix2<f64>) -> Result<f64> {
    let d = m.determinant();
    if !(d > 0.0) {
        return Err(Error::Singular { cond: f64::INFINITY });
    }
    Ok(d.log2())
}

fn inv2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    m.try_inverse().ok_or(Error::Singular { cond: f64::INFINITY })
}

fn to_dyn(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}
