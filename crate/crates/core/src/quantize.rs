//! Second-order statistics of the elementwise sign quantizer driven by a
//! zero-mean Gaussian input.
//!
//! For `x ~ N(0, R_x)` and `t = sign(x)`:
//!
//! - `R_t  = (2/pi) asin(diag(R_x)^-1/2 R_x diag(R_x)^-1/2)` (arcsine law),
//! - `R_tx = sqrt(2/pi) diag(R_x)^-1/2 R_x`,
//! - `t = A x + q` with `A = R_tx R_x^-1` and `q` uncorrelated with `x`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::wl::{WlCovariance, WlVector};
use crate::{SQRT_2_OVER_PI, TWO_OVER_PI};

/// Normalized correlations within this distance of +-1 are clamped.
pub const CORRELATION_CLAMP_TOL: f64 = 1e-9;

/// Inverting `R_x` fails above this 2-norm condition number.
pub const MAX_CONDITION: f64 = 1e12;

/// Linearized quantizer model `t = A x + q`.
#[derive(Debug, Clone)]
pub struct BussgangDecomposition {
    pub gain: DMatrix<f64>,
    pub error_cov: WlCovariance,
    pub quantized_cov: WlCovariance,
    pub cross_cov: DMatrix<f64>,
}

/// Elementwise sign with `sign(0) = +1`.
pub fn quantize_sign(x: &WlVector) -> WlVector {
    let data = x.data().map(sign);
    WlVector::from_real(data).expect("length preserved")
}

#[inline]
pub fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Checks the diagonal and returns `diag(R)^-1/2` as a vector.
pub fn inv_sqrt_diag(r: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = r.nrows();
    let mut s = DVector::zeros(n);
    for i in 0..n {
        let d = r[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!("diagonal entry {i} is {d}, must be positive")));
        }
        s[i] = 1.0 / d.sqrt();
    }
    Ok(s)
}

/// `diag(R)^-1/2 R diag(R)^-1/2` with unit diagonal set exactly and
/// near-boundary entries clamped into `[-1, 1]`.
pub fn normalized_correlation(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = inv_sqrt_diag(r)?;
    let n = r.nrows();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let v = if i == j { 1.0 } else { r[(i, j)] * s[i] * s[j] };
            if v.abs() > 1.0 + CORRELATION_CLAMP_TOL {
                return Err(Error::Domain(format!(
                    "normalized correlation {v} at ({i},{j}) outside [-1, 1]"
                )));
            }
            c[(i, j)] = v.clamp(-1.0, 1.0);
        }
    }
    Ok(c)
}

/// Covariance of the quantized signal (arcsine law). The diagonal is exactly one.
pub fn r_t(r_x: &WlCovariance) -> Result<WlCovariance> {
    let c = normalized_correlation(r_x.data())?;
    let mut out = c.map(|v| TWO_OVER_PI * v.asin());
    out.fill_diagonal(1.0);
    Ok(WlCovariance::from_symmetric_unchecked(out))
}

/// Cross-covariance `E[t x^T]`.
pub fn r_tx(r_x: &WlCovariance) -> Result<DMatrix<f64>> {
    let s = inv_sqrt_diag(r_x.data())?;
    let mut out = r_x.data().clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= SQRT_2_OVER_PI * s[i];
    }
    Ok(out)
}

/// Bussgang decomposition of the sign quantizer. `R_x` is inverted through its
/// eigendecomposition; a condition number above [`MAX_CONDITION`] is an error.
pub fn bussgang(r_x: &WlCovariance) -> Result<BussgangDecomposition> {
    let quantized_cov = r_t(r_x)?;
    let cross_cov = r_tx(r_x)?;
    let inv = spd_inverse(r_x.data())?;
    let gain = &cross_cov * &inv;
    let explained = &gain * cross_cov.transpose();
    let error_cov = WlCovariance::from_symmetric_unchecked(quantized_cov.data() - explained);
    Ok(BussgangDecomposition { gain, error_cov, quantized_cov, cross_cov })
}

/// Inverse of a symmetric positive definite matrix with a condition cap.
pub fn spd_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(r.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(Error::Singular { cond });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv_vals) * v.transpose())
}

/// Second-order Taylor surrogate of the elementwise arcsine on a unit-diagonal
/// matrix: `C + C.^3 / 6 + (pi/2 - 7/6) I`.
pub fn arcsin_approx(c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = c.map(|v| v + v * v * v / 6.0);
    let corr = std::f64::consts::FRAC_PI_2 - 7.0 / 6.0;
    for i in 0..out.nrows().min(out.ncols()) {
        out[(i, i)] += corr;
    }
    out
}

/// Worst-case error of the cubic arcsine surrogate for `|rho| <= bound`.
pub fn arcsin_remainder(bound: f64) -> f64 {
    let b = bound.abs().min(1.0);
    b.asin() - b - b * b * b / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cov(rows: usize, v: &[f64]) -> WlCovariance {
        WlCovariance::new(DMatrix::from_row_slice(rows, rows, v)).unwrap()
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> WlCovariance {
        let f = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = &f * f.transpose() + DMatrix::identity(n, n) * 0.1;
        WlCovariance::new(m).unwrap()
    }

    #[test]
    fn sign_examples() {
        let q = |v: &[f64]| quantize_sign(&WlVector::from_real(DVector::from_column_slice(v)).unwrap());
        assert_eq!(q(&[0.3, -1.2]).data().as_slice(), &[1.0, -1.0]);
        assert_eq!(q(&[-0.0001, 5.0]).data().as_slice(), &[-1.0, 1.0]);
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
    }

    #[test]
    fn arcsine_law_examples() {
        assert_eq!(r_t(&WlCovariance::identity(2)).unwrap().data(), &DMatrix::<f64>::identity(4, 4));
        let rt = r_t(&cov(2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        assert!((rt.data()[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rt.data()[(0, 0)], 1.0);
    }

    #[test]
    fn arcsine_law_rejects_bad_diagonal() {
        assert!(r_t(&cov(2, &[0.0, 0.0, 0.0, 1.0])).is_err());
        assert!(r_tx(&cov(2, &[-1.0, 0.0, 0.0, 1.0])).is_err());
        // correlation 1.5 is outside the clamp window
        assert!(r_t(&cov(2, &[1.0, 1.5, 1.5, 1.0])).is_err());
        // 1 + 1e-12 is clamped
        let rt = r_t(&cov(2, &[1.0, 1.0 + 1e-12, 1.0 + 1e-12, 1.0])).unwrap();
        assert_eq!(rt.data()[(0, 1)], 1.0);
    }

    #[test]
    fn cross_covariance_examples() {
        let a = r_tx(&WlCovariance::identity(1)).unwrap();
        assert!((a[(0, 0)] - 0.797_884_56).abs() < 1e-8);
        assert_eq!(a[(0, 1)], 0.0);
        let b = r_tx(&WlCovariance::identity(1).scaled(4.0)).unwrap();
        assert!((b[(1, 1)] - 1.595_769_12).abs() < 1e-8);
    }

    #[test]
    fn bussgang_closed_forms() {
        let b = bussgang(&WlCovariance::identity(2)).unwrap();
        assert!((&b.gain - DMatrix::identity(4, 4) * SQRT_2_OVER_PI).amax() < 1e-14);
        let expected = 1.0 - TWO_OVER_PI;
        assert!((expected - 0.363_38).abs() < 1e-5);
        assert!((b.error_cov.data() - DMatrix::identity(4, 4) * expected).amax() < 1e-14);

        let b4 = bussgang(&WlCovariance::identity(2).scaled(4.0)).unwrap();
        assert!((b4.gain[(0, 0)] - 0.398_942_28).abs() < 1e-8);
    }

    #[test]
    fn bussgang_gain_is_diagonal_price_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DVector::from_fn(6, |_, _| rng.random_range(0.5..4.0));
        let b = bussgang(&WlCovariance::new(DMatrix::from_diagonal(&d)).unwrap()).unwrap();
        for i in 0..6 {
            assert!((b.gain[(i, i)] - SQRT_2_OVER_PI / d[i].sqrt()).abs() < 1e-14);
        }
        // A = R_tx R_x^-1 reduces to sqrt(2/pi) diag^-1/2 for any invertible R_x
        let r = random_psd(&mut rng, 6);
        let b = bussgang(&r).unwrap();
        let s = inv_sqrt_diag(r.data()).unwrap();
        let expected = DMatrix::from_diagonal(&(s * SQRT_2_OVER_PI));
        assert!((&b.gain - expected).amax() < 1e-9);
        assert!(b.error_cov.is_psd());
    }

    #[test]
    fn bussgang_singular_input() {
        let r = cov(2, &[1.0, 1.0, 1.0, 1.0]);
        match bussgang(&r) {
            Err(Error::Singular { cond }) => assert!(cond > MAX_CONDITION),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn invariants_on_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let r = random_psd(&mut rng, 8);
            let rt = r_t(&r).unwrap();
            for i in 0..8 {
                assert_eq!(rt.data()[(i, i)], 1.0);
            }
            assert!(rt.data().iter().all(|v| (-1.0..=1.0).contains(v)));
            let scaled = r_t(&r.scaled(7.3)).unwrap();
            assert!((scaled.data() - rt.data()).amax() < 1e-14);
            let rtx = r_tx(&r).unwrap();
            // R_xt = R_tx^T: the Gaussian cross moment E[x t^T]
            let rxt = rtx.transpose();
            assert_eq!(rxt.transpose(), rtx);
        }
    }

    #[test]
    fn taylor_surrogate() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let a = arcsin_approx(&eye);
        assert!((a - eye * std::f64::consts::FRAC_PI_2).amax() < 1e-15);

        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let a = arcsin_approx(&c);
        assert!((a[(0, 1)] - 0.520_833).abs() < 1e-6);
        assert!((0.5f64.asin() - 0.523_599).abs() < 1e-6);

        // dense grid on |rho| <= 0.5
        for k in 0..=1000 {
            let rho = -0.5 + k as f64 / 1000.0;
            let approx = rho + rho.powi(3) / 6.0;
            assert!((rho.asin() - approx).abs() < 3e-3);
            assert!(approx.abs() >= rho.abs());
        }
        assert!(arcsin_remainder(0.5) < 3e-3);
    }

    /// Sampling oracle for the arcsine law, the Price cross-covariance and
    /// the uncorrelatedness of the Bussgang distortion.
    #[test]
    fn price_statistics_match_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let r = random_psd(&mut rng, 8);
        let report = crate::quantize::oracle::price_check(&r, 1_000_000, &mut rng).unwrap();
        assert!(report.passes(3.0), "{report:?} thresholds {:?}", report.thresholds(3.0));
    }

    #[test]
    fn family_threshold_reduces_to_single_test() {
        assert!((oracle::family_threshold(3.0, 1) - 3.0).abs() < 1e-9);
        let t = oracle::family_threshold(3.0, 64);
        assert!(t > 3.9 && t < 4.1, "{t}");
    }
}

/// Monte-Carlo checks of the quantizer statistics. Shared by the unit tests,
/// the acceptance suite and `qml validate`.
pub mod oracle {
    use super::*;
    use nalgebra::Cholesky;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Largest entrywise deviation between analytic and sampled statistics,
    /// in units of the per-entry Monte-Carlo standard error.
    #[derive(Debug, Clone, Copy)]
    pub struct PriceReport {
        pub worst_rt_sigma: f64,
        pub worst_rtx_sigma: f64,
        pub worst_qx_sigma: f64,
        /// Number of independent entries compared for each statistic.
        pub entries: [usize; 3],
        pub samples: usize,
    }

    impl PriceReport {
        /// Family-wise version of a `k`-sigma test for each statistic.
        pub fn thresholds(&self, k: f64) -> [f64; 3] {
            self.entries.map(|m| family_threshold(k, m))
        }

        pub fn passes(&self, k: f64) -> bool {
            let th = self.thresholds(k);
            self.worst_rt_sigma <= th[0] && self.worst_rtx_sigma <= th[1] && self.worst_qx_sigma <= th[2]
        }
    }

    /// z-threshold whose two-sided false-alarm probability over `m`
    /// independent standard-normal entries equals that of a single `k`-sigma
    /// test (Sidak correction).
    pub fn family_threshold(k: f64, m: usize) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let alpha = 2.0 * (1.0 - std.cdf(k));
        let per_entry = 1.0 - (1.0 - alpha).powf(1.0 / m.max(1) as f64);
        std.inverse_cdf(1.0 - per_entry / 2.0)
    }

    /// Function table so the validation suite can run the checks against a
    /// deliberately broken implementation.
    #[derive(Clone, Copy)]
    pub struct StatsImpl {
        pub r_t: fn(&WlCovariance) -> Result<WlCovariance>,
        pub r_tx: fn(&WlCovariance) -> Result<DMatrix<f64>>,
    }

    impl Default for StatsImpl {
        fn default() -> Self {
            Self { r_t, r_tx }
        }
    }

    pub fn price_check<R: Rng>(r_x: &WlCovariance, samples: usize, rng: &mut R) -> Result<PriceReport> {
        price_check_with(StatsImpl::default(), r_x, samples, rng)
    }

    pub fn price_check_with<R: Rng>(
        stats: StatsImpl,
        r_x: &WlCovariance,
        samples: usize,
        rng: &mut R,
    ) -> Result<PriceReport> {
        let n = r_x.data().nrows();
        let rt = (stats.r_t)(r_x)?;
        let rtx = (stats.r_tx)(r_x)?;
        let gain = &rtx * spd_inverse(r_x.data())?;
        let chol = Cholesky::new(r_x.data().clone()).ok_or(Error::Singular { cond: f64::INFINITY })?;
        let l = chol.l();

        // running first and second moments of t t^T, t x^T and q x^T
        let mut m_tt = DMatrix::<f64>::zeros(n, n);
        let mut m_tx = DMatrix::<f64>::zeros(n, n);
        let mut s_tx = DMatrix::<f64>::zeros(n, n);
        let mut m_qx = DMatrix::<f64>::zeros(n, n);
        let mut s_qx = DMatrix::<f64>::zeros(n, n);
        let mut z = DVector::<f64>::zeros(n);
        for _ in 0..samples {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = &l * &z;
            let t = x.map(sign);
            let q = &t - &gain * &x;
            for j in 0..n {
                for i in 0..n {
                    m_tt[(i, j)] += t[i] * t[j];
                    let tx = t[i] * x[j];
                    m_tx[(i, j)] += tx;
                    s_tx[(i, j)] += tx * tx;
                    let qx = q[i] * x[j];
                    m_qx[(i, j)] += qx;
                    s_qx[(i, j)] += qx * qx;
                }
            }
        }
        let ns = samples as f64;
        let mut worst = [0.0f64; 3];
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    let mean = m_tt[(i, j)] / ns;
                    let se = ((1.0 - mean * mean).max(0.0) / ns).sqrt().max(1e-300);
                    worst[0] = worst[0].max((mean - rt.data()[(i, j)]).abs() / se);
                }
                let mean = m_tx[(i, j)] / ns;
                let se = ((s_tx[(i, j)] / ns - mean * mean).max(0.0) / ns).sqrt().max(1e-300);
                worst[1] = worst[1].max((mean - rtx[(i, j)]).abs() / se);
                let mean = m_qx[(i, j)] / ns;
                let se = ((s_qx[(i, j)] / ns - mean * mean).max(0.0) / ns).sqrt().max(1e-300);
                worst[2] = worst[2].max(mean.abs() / se);
            }
        }
        Ok(PriceReport {
            worst_rt_sigma: worst[0],
            worst_rtx_sigma: worst[1],
            worst_qx_sigma: worst[2],
            entries: [n * (n - 1) / 2, n * n, n * n],
            samples,
        })
    }
}
