use nalgebra::{DMatrix, DVector};

use super::{PrecoderScenario, Superposition};
use crate::error::{dim_err, Error, Result};
use crate::quantize::CORRELATION_CLAMP_TOL;
use crate::{SQRT_2_OVER_PI, TWO_OVER_PI};

/// Diagonal correction of the second-order arcsine expansion, `pi/2 - 7/6`.
pub const KAPPA: f64 = std::f64::consts::FRAC_PI_2 - 7.0 / 6.0;

/// Row powers below this are lifted before dividing by them.
const ROW_POWER_FLOOR: f64 = 1e-12;

/// Components of the approximate MSE
/// `eps = beta^2 (a + b + d) + 2 beta c + e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl MseTerms {
    pub fn mse(&self, beta: f64) -> f64 {
        beta * beta * (self.a + self.b + self.d) + 2.0 * beta * self.c + self.e
    }

    /// Minimizer of [`MseTerms::mse`] over `beta`.
    pub fn optimal_beta(&self) -> Result<f64> {
        let q = self.a + self.b + self.d;
        if !(q > 0.0) {
            return Err(Error::Domain(format!("a + b + d = {q} is not positive")));
        }
        Ok(-self.c / q)
    }

    /// `d eps / d beta`.
    pub fn beta_derivative(&self, beta: f64) -> f64 {
        2.0 * beta * (self.a + self.b + self.d) + 2.0 * self.c
    }
}

/// Gradients of `a`, `b` and `c` with respect to the precoder.
#[derive(Debug, Clone)]
pub struct MseGradient {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl MseGradient {
    pub fn combine(&self, beta: f64) -> DMatrix<f64> {
        (&self.a + &self.b) * (beta * beta) + &self.c * (2.0 * beta)
    }
}

/// Channel-dependent quantities shared by every evaluation on one problem.
#[derive(Debug, Clone)]
pub(crate) struct MseModel {
    /// Gram matrix `h^T h` of the stored (transposed) channel `h`.
    w: DMatrix<f64>,
    /// Constant gradient of `c`.
    dc: DMatrix<f64>,
    r_s: DMatrix<f64>,
    d: f64,
    e: f64,
    tx_energy: f64,
}

impl MseModel {
    pub(crate) fn new(scenario: &PrecoderScenario, pi: &Superposition, r_s: &DMatrix<f64>) -> Result<Self> {
        let h = scenario.channel().data();
        let p = pi.pi();
        if p.nrows() != h.nrows() {
            return dim_err(format!("superposition has {} rows, channel {}", p.nrows(), h.nrows()));
        }
        if r_s.nrows() != p.ncols() || r_s.ncols() != p.ncols() {
            return dim_err(format!("stream covariance must be {0}x{0}", p.ncols()));
        }
        let w = h.transpose() * h;
        let dc = h.transpose() * p * r_s * (-SQRT_2_OVER_PI);
        let e = (p * r_s * p.transpose()).trace();
        Ok(Self { w, dc, r_s: r_s.clone(), d: scenario.noise_trace(), e, tx_energy: scenario.tx_energy() })
    }

    fn check(&self, p: &DMatrix<f64>) -> Result<()> {
        if p.nrows() != self.w.nrows() || p.ncols() != self.r_s.nrows() {
            return dim_err(format!(
                "precoder is {}x{}, expected {}x{}",
                p.nrows(),
                p.ncols(),
                self.w.nrows(),
                self.r_s.nrows()
            ));
        }
        Ok(())
    }

    fn covariance(&self, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check(p)?;
        let x = p * &self.r_s * p.transpose();
        let diag = DVector::from_fn(x.nrows(), |i, _| x[(i, i)]);
        if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Domain(format!("antenna dimension {i} has no power")));
        }
        Ok((x, diag.map(|v| v.max(ROW_POWER_FLOOR))))
    }

    fn c_term(&self, p: &DMatrix<f64>) -> f64 {
        self.dc.dot(p)
    }

    pub(crate) fn terms(&self, p: &DMatrix<f64>) -> Result<MseTerms> {
        let (x, dg) = self.covariance(p)?;
        let n = x.nrows();
        let mut lin = 0.0;
        let mut cubic = 0.0;
        for j in 0..n {
            for i in 0..n {
                let (w, v) = (self.w[(i, j)], x[(i, j)]);
                lin += w * v;
                cubic += w * v * v * v / (dg[i] * dg[j]);
            }
        }
        let diag: f64 = (0..n).map(|i| self.w[(i, i)] * x[(i, i)]).sum();
        Ok(MseTerms {
            a: TWO_OVER_PI * (lin + KAPPA * diag),
            b: TWO_OVER_PI / 6.0 * cubic,
            c: self.c_term(p),
            d: self.d,
            e: self.e,
        })
    }

    pub(crate) fn exact(&self, p: &DMatrix<f64>, beta: f64) -> Result<f64> {
        let (x, dg) = self.covariance(p)?;
        let n = x.nrows();
        let mut quad = 0.0;
        for j in 0..n {
            for i in 0..n {
                let scale = (dg[i] * dg[j]).sqrt();
                let rho = x[(i, j)] / scale;
                if rho.abs() > 1.0 + CORRELATION_CLAMP_TOL {
                    return Err(Error::Domain(format!("correlation {rho} outside [-1, 1]")));
                }
                quad += self.w[(i, j)] * scale * rho.clamp(-1.0, 1.0).asin();
            }
        }
        let signal = TWO_OVER_PI * quad;
        Ok(beta * beta * (signal + self.d) + 2.0 * beta * self.c_term(p) + self.e)
    }

    pub(crate) fn gradient(&self, p: &DMatrix<f64>) -> Result<MseGradient> {
        let (x, dg) = self.covariance(p)?;
        let n = x.nrows();
        let pr = p * &self.r_s;

        let mut wa = self.w.clone();
        for i in 0..n {
            wa[(i, i)] *= 1.0 + KAPPA;
        }
        let a = &wa * &pr * (2.0 * TWO_OVER_PI);

        let mut g = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    let v = x[(i, j)];
                    g[(i, j)] = 3.0 * self.w[(i, j)] * v * v / (dg[i] * dg[j]);
                }
            }
        }
        for i in 0..n {
            let off: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| self.w[(i, j)] * x[(i, j)].powi(3) / dg[j])
                .sum();
            g[(i, i)] = self.w[(i, i)] - 2.0 * off / (dg[i] * dg[i]);
        }
        let b = &g * &pr * (2.0 * TWO_OVER_PI / 6.0);

        Ok(MseGradient { a, b, c: self.dc.clone() })
    }

    pub(crate) fn project(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        project_power(p, &self.r_s, self.tx_energy)
    }
}

/// Exact MSE with the matrix arcsine.
pub fn mse_exact(
    p: &DMatrix<f64>,
    beta: f64,
    scenario: &PrecoderScenario,
    pi: &Superposition,
    r_s: &DMatrix<f64>,
) -> Result<f64> {
    MseModel::new(scenario, pi, r_s)?.exact(p, beta)
}

/// The terms of the MSE under the second-order arcsine expansion.
pub fn mse_terms(
    p: &DMatrix<f64>,
    scenario: &PrecoderScenario,
    pi: &Superposition,
    r_s: &DMatrix<f64>,
) -> Result<MseTerms> {
    MseModel::new(scenario, pi, r_s)?.terms(p)
}

pub fn optimal_beta(
    p: &DMatrix<f64>,
    scenario: &PrecoderScenario,
    pi: &Superposition,
    r_s: &DMatrix<f64>,
) -> Result<f64> {
    mse_terms(p, scenario, pi, r_s)?.optimal_beta()
}

pub fn mse_gradient_terms(
    p: &DMatrix<f64>,
    scenario: &PrecoderScenario,
    pi: &Superposition,
    r_s: &DMatrix<f64>,
) -> Result<MseGradient> {
    MseModel::new(scenario, pi, r_s)?.gradient(p)
}

/// Gradient of the approximate MSE with `beta` held fixed.
pub fn mse_gradient(
    p: &DMatrix<f64>,
    beta: f64,
    scenario: &PrecoderScenario,
    pi: &Superposition,
    r_s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(mse_gradient_terms(p, scenario, pi, r_s)?.combine(beta))
}

/// Rescales `p` so that `tr(P R_s P^T) = e_tx`.
pub fn project_power(p: &DMatrix<f64>, r_s: &DMatrix<f64>, e_tx: f64) -> Result<DMatrix<f64>> {
    if r_s.nrows() != p.ncols() {
        return dim_err("stream covariance does not match the precoder");
    }
    let power = (p * r_s).component_mul(p).sum();
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Domain(format!("cannot normalize a precoder with power {power}")));
    }
    Ok(p * (e_tx / power).sqrt())
}
