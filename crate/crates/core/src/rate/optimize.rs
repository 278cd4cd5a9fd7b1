use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{RateEvaluator, RateScenario};
use crate::error::{dim_err, Error, Result};
use crate::wl::{WlCovariance, WlMatrix};

/// Settings for [`optimize_covariances`].
#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Stop once an accepted step changes the objective by less than this
    /// fraction.
    pub rel_tol: f64,
    /// Random starting points in addition to the warm starts.
    pub restarts: usize,
    pub seed: u64,
    /// Lower bound on the diagonal of every factor.
    pub diag_floor: f64,
    /// Relative step length of the first iteration.
    pub initial_step: f64,
    /// Extra starting points, one covariance per user each.
    pub warm_starts: Vec<Vec<WlCovariance>>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            rel_tol: 1e-6,
            restarts: 5,
            seed: 0,
            diag_floor: 1e-6,
            initial_step: 0.1,
            warm_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerTrace {
    /// Objective evaluations of the winning start.
    pub iterations: usize,
    /// Objective evaluations over all starts.
    pub total_iterations: usize,
    pub final_grad_norm: f64,
    pub restarts_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CovarianceSolution {
    pub per_user_cov: Vec<WlCovariance>,
    pub ranks: Vec<usize>,
    pub proper_constrained: bool,
    pub sum_rate_lb: f64,
    pub optimizer_trace: OptimizerTrace,
}

impl CovarianceSolution {
    pub fn total_trace(&self) -> f64 {
        self.per_user_cov.iter().map(WlCovariance::trace).sum()
    }
}

/// Factor `L` of one user's covariance `R = L L^T`.
///
/// Improper factors are real `2Nt x 2R` lower-triangular matrices with a
/// positive diagonal. Proper factors are the strictly-linear expansion of a
/// complex `Nt x R` lower-triangular matrix with a real positive diagonal,
/// which makes `L L^T` proper by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    entries: DMatrix<f64>,
    rank: usize,
    proper: bool,
}

impl CholeskyFactor {
    pub fn new(entries: DMatrix<f64>, rank: usize, proper: bool) -> Result<Self> {
        let f = Self { entries, rank, proper };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        let (rows, cols) = self.entries.shape();
        if rows % 2 != 0 || cols != 2 * self.rank || self.rank == 0 || 2 * self.rank > rows {
            return dim_err(format!("{rows}x{cols} factor for rank {}", self.rank));
        }
        for i in 0..rows {
            for j in 0..cols {
                let v = self.entries[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Domain("non-finite factor entry".into()));
                }
                let allowed = if self.proper { proper_free(i, j, rows / 2, self.rank) } else { j <= i };
                if !allowed && v != 0.0 {
                    return Err(Error::Domain(format!("entry ({i},{j}) outside the factor pattern")));
                }
            }
        }
        for d in self.diagonal_positions() {
            if !(self.entries[d] > 0.0) {
                return Err(Error::Domain(format!("diagonal entry {d:?} must be positive")));
            }
        }
        Ok(())
    }

    fn diagonal_positions(&self) -> Vec<(usize, usize)> {
        let n = self.entries.nrows() / 2;
        if self.proper {
            (0..self.rank).flat_map(|j| [(j, j), (n + j, self.rank + j)]).collect()
        } else {
            (0..2 * self.rank).map(|j| (j, j)).collect()
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_proper(&self) -> bool {
        self.proper
    }

    pub fn covariance(&self) -> WlCovariance {
        WlCovariance::from_symmetric_unchecked(&self.entries * self.entries.transpose())
    }
}

/// Whether entry `(i, j)` of a proper factor may be nonzero: it sits in a
/// block of `SL(B)` where `B` is lower-triangular, and the imaginary part of
/// `B` has no diagonal.
fn proper_free(i: usize, j: usize, n: usize, r: usize) -> bool {
    let (bi, bj) = (i % n, j % r);
    let imag_block = (i < n) != (j < r);
    if imag_block {
        bj < bi
    } else {
        bj <= bi
    }
}

struct Problem<'a> {
    eval: RateEvaluator,
    ranks: &'a [usize],
    proper: bool,
    n: usize,
    floor: f64,
}

impl Problem<'_> {
    fn covariances(&self, factors: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        factors.iter().map(|l| l * l.transpose()).collect()
    }

    fn mask(&self, g: &mut DMatrix<f64>, rank: usize) {
        let n = self.n;
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                let free = if self.proper { proper_free(i, j, n, rank) } else { j <= i };
                if !free {
                    g[(i, j)] = 0.0;
                }
            }
        }
    }

    /// Gradient with respect to the free entries of each factor.
    fn factor_gradient(&self, factors: &[DMatrix<f64>], grads: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let n = self.n;
        factors
            .iter()
            .zip(grads)
            .zip(self.ranks)
            .map(|((l, g), &rank)| {
                let mut d = g * l * 2.0;
                if self.proper {
                    // tie the gradient to the SL structure of the factor
                    let r = rank;
                    let re = d.view((0, 0), (n, r)) + d.view((n, r), (n, r));
                    let im = d.view((n, 0), (n, r)) - d.view((0, r), (n, r));
                    d.view_mut((0, 0), (n, r)).copy_from(&re);
                    d.view_mut((n, r), (n, r)).copy_from(&re);
                    d.view_mut((n, 0), (n, r)).copy_from(&im);
                    d.view_mut((0, r), (n, r)).copy_from(&(-im));
                }
                self.mask(&mut d, rank);
                d
            })
            .collect()
    }

    /// Floors the factor diagonals and rescales every transmit dimension to
    /// unit total power. The objective only depends on the correlation
    /// pattern of the total covariance, so this leaves it unchanged while
    /// fixing `tr(sum R_k) = 2 Nt`.
    fn normalize(&self, factors: &mut [DMatrix<f64>]) {
        let n = self.n;
        for (l, &rank) in factors.iter_mut().zip(self.ranks) {
            if self.proper {
                for j in 0..rank {
                    let v = l[(j, j)].max(self.floor);
                    l[(j, j)] = v;
                    l[(n + j, rank + j)] = v;
                }
            } else {
                for j in 0..2 * rank {
                    l[(j, j)] = l[(j, j)].max(self.floor);
                }
            }
        }
        for i in 0..2 * n {
            let power: f64 = factors.iter().map(|l| l.row(i).norm_squared()).sum();
            if power > 0.0 {
                let s = power.sqrt().recip();
                for l in factors.iter_mut() {
                    l.row_mut(i).scale_mut(s);
                }
            }
        }
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
        let n = self.n;
        let mut factors: Vec<DMatrix<f64>> = self
            .ranks
            .iter()
            .map(|&rank| {
                if self.proper {
                    let b = DMatrix::from_fn(n, rank, |i, j| {
                        if j > i {
                            Complex::new(0.0, 0.0)
                        } else if i == j {
                            let x: f64 = rng.sample(StandardNormal);
                            Complex::new(x.abs() + 0.1, 0.0)
                        } else {
                            Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                        }
                    });
                    WlMatrix::strictly_linear(&b).into_inner()
                } else {
                    DMatrix::from_fn(2 * n, 2 * rank, |i, j| {
                        let x: f64 = rng.sample(StandardNormal);
                        match i.cmp(&j) {
                            std::cmp::Ordering::Less => 0.0,
                            std::cmp::Ordering::Equal => x.abs() + 0.1,
                            std::cmp::Ordering::Greater => x,
                        }
                    })
                }
            })
            .collect();
        self.normalize(&mut factors);
        factors
    }

    fn warm_start(&self, covs: &[WlCovariance]) -> Result<Vec<DMatrix<f64>>> {
        if covs.len() != self.ranks.len() {
            return dim_err("warm start has the wrong number of users");
        }
        let mut factors = covs
            .iter()
            .zip(self.ranks)
            .map(|(c, &rank)| {
                if c.data().nrows() != 2 * self.n {
                    return dim_err("warm start covariance has the wrong size");
                }
                Ok(if self.proper {
                    proper_factor_of(c.data(), rank, self.floor)
                } else {
                    real_factor_of(c.data(), rank, self.floor)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.normalize(&mut factors);
        Ok(factors)
    }

    fn ascend(&self, mut factors: Vec<DMatrix<f64>>, opts: &OptimizerOptions) -> Result<Run> {
        let (mut value, grads) = self.eval.value_and_gradient(&self.covariances(&factors))?;
        let mut grad = self.factor_gradient(&factors, &grads);
        let mut step = opts.initial_step;
        let mut evals = 1;
        let mut converged = false;
        while evals < opts.max_iters {
            let gnorm = norm(&grad);
            let lnorm = norm(&factors);
            if gnorm == 0.0 || !gnorm.is_finite() {
                converged = gnorm == 0.0;
                break;
            }
            let scale = step * lnorm / gnorm;
            let mut cand: Vec<DMatrix<f64>> =
                factors.iter().zip(&grad).map(|(l, g)| l + g * scale).collect();
            self.normalize(&mut cand);
            evals += 1;
            let trial = self.eval.value_and_gradient(&self.covariances(&cand));
            match trial {
                Ok((v, g)) if v > value => {
                    let change = (v - value) / value.abs().max(f64::MIN_POSITIVE);
                    grad = self.factor_gradient(&cand, &g);
                    factors = cand;
                    value = v;
                    step *= 2.0;
                    if change < opts.rel_tol {
                        converged = true;
                        break;
                    }
                }
                _ => {
                    step *= 0.5;
                    if step < 1e-14 {
                        converged = true;
                        break;
                    }
                }
            }
        }
        Ok(Run { grad_norm: norm(&grad), factors, value, evals, converged })
    }
}

struct Run {
    factors: Vec<DMatrix<f64>>,
    value: f64,
    evals: usize,
    grad_norm: f64,
    converged: bool,
}

fn norm(ms: &[DMatrix<f64>]) -> f64 {
    ms.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

/// Lower-triangular `2Nt x 2R` factor whose product approximates `r` by its
/// leading eigen-directions.
fn real_factor_of(r: &DMatrix<f64>, rank: usize, floor: f64) -> DMatrix<f64> {
    let m = 2 * rank;
    let eig = r.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..r.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let f = DMatrix::from_fn(r.nrows(), m, |i, j| {
        let k = order[j];
        eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt()
    });
    let q = f.rows(0, m).transpose().qr().q();
    let mut l = f * q;
    for j in 0..m {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
        l[(j, j)] = l[(j, j)].max(floor);
    }
    l
}

/// Proper counterpart of [`real_factor_of`], computed on the complex
/// Hermitian matrix whose SL expansion is the proper part of `r`.
fn proper_factor_of(r: &DMatrix<f64>, rank: usize, floor: f64) -> DMatrix<f64> {
    let n = r.nrows() / 2;
    let herm = DMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (r[(i, j)] + r[(n + i, n + j)]);
        let im = 0.5 * (r[(n + i, j)] - r[(i, n + j)]);
        Complex::new(re, im)
    });
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let f = DMatrix::from_fn(n, rank, |i, j| {
        let k = order[j];
        eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt()
    });
    let q = f.rows(0, rank).adjoint().qr().q();
    let mut b = f * q;
    for j in 0..rank {
        let d = b[(j, j)];
        if d.norm() > 0.0 {
            let phase = d.conj() / d.norm();
            for v in b.column_mut(j).iter_mut() {
                *v *= phase;
            }
        }
        for i in 0..j {
            b[(i, j)] = Complex::new(0.0, 0.0);
        }
        b[(j, j)] = Complex::new(b[(j, j)].re.max(floor), 0.0);
    }
    WlMatrix::strictly_linear(&b).into_inner()
}

/// Maximizes the sum-rate bound over per-user covariances of rank
/// `ranks[k]` (complex streams), optionally restricted to proper
/// covariances. Runs every warm start and `opts.restarts` random starts and
/// keeps the best local optimum.
pub fn optimize_covariances(
    scenario: &RateScenario,
    ranks: &[usize],
    proper: bool,
    opts: &OptimizerOptions,
) -> Result<CovarianceSolution> {
    let nt = scenario.num_antennas();
    if ranks.len() != scenario.num_users() {
        return dim_err(format!("{} ranks for {} users", ranks.len(), scenario.num_users()));
    }
    if let Some(r) = ranks.iter().find(|&&r| r == 0 || r > nt) {
        return Err(Error::Domain(format!("rank {r} outside 1..={nt}")));
    }
    if !(opts.diag_floor > 0.0) || !(opts.initial_step > 0.0) || opts.max_iters == 0 {
        return Err(Error::Config("optimizer options out of range".into()));
    }
    let problem = Problem {
        eval: RateEvaluator::new(scenario),
        ranks,
        proper,
        n: nt,
        floor: opts.diag_floor,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::new();
    for w in &opts.warm_starts {
        starts.push(problem.warm_start(w)?);
    }
    for _ in 0..opts.restarts {
        starts.push(problem.random_start(&mut rng));
    }
    if starts.is_empty() {
        return Err(Error::Config("optimizer needs at least one starting point".into()));
    }

    let mut best: Option<Run> = None;
    let mut total = 0;
    let mut last_err = None;
    for start in starts.iter().cloned() {
        match problem.ascend(start, opts) {
            Ok(run) => {
                total += run.evals;
                if best.as_ref().is_none_or(|b| run.value > b.value) {
                    best = Some(run);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start was run"),
    };

    let per_user_cov = problem
        .covariances(&best.factors)
        .into_iter()
        .map(WlCovariance::from_symmetric_unchecked)
        .collect();
    Ok(CovarianceSolution {
        per_user_cov,
        ranks: ranks.to_vec(),
        proper_constrained: proper,
        sum_rate_lb: best.value,
        optimizer_trace: OptimizerTrace {
            iterations: best.evals,
            total_iterations: total,
            final_grad_norm: best.grad_norm,
            restarts_used: starts.len(),
            converged: best.converged,
        },
    })
}

#[cfg(test)]
pub(super) mod tests_support {
    use nalgebra::DMatrix;

    pub fn real_factor(r: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
        super::real_factor_of(r, rank, 0.0)
    }

    pub fn proper_factor(r: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
        super::proper_factor_of(r, rank, 0.0)
    }
}
