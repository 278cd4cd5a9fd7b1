use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};
use crate::wl::{WlMatrix, WlVector};

/// Combines `R` QPSK streams per user into one `2^R`-level symbol per real
/// axis. Stream `i` of receive axis `a` sits at column `a * R + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Superposition {
    tau: Vec<f64>,
    pi: WlMatrix,
    streams_per_user: usize,
    users: usize,
}

impl Superposition {
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn pi(&self) -> &DMatrix<f64> {
        self.pi.data()
    }

    pub fn streams_per_user(&self) -> usize {
        self.streams_per_user
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Number of real stream components, `2 K R`.
    pub fn num_streams(&self) -> usize {
        2 * self.users * self.streams_per_user
    }

    /// `||tau||^2`, the power of one superimposed real symbol.
    pub fn symbol_power(&self) -> f64 {
        self.tau.iter().map(|t| t * t).sum()
    }

    /// Largest level on each axis, `2^R - 1`.
    pub fn max_level(&self) -> f64 {
        self.tau.iter().sum()
    }
}

pub fn make_superposition(users: usize, streams: usize) -> Result<Superposition> {
    if users == 0 || streams == 0 {
        return Err(Error::Domain("superposition needs at least one user and one stream".into()));
    }
    if streams > 52 {
        return Err(Error::Domain(format!("{streams} streams exceed the exact power-of-two range")));
    }
    let tau: Vec<f64> = (0..streams).rev().map(|p| (1u64 << p) as f64).collect();
    let axes = 2 * users;
    let mut pi = DMatrix::zeros(axes, axes * streams);
    for a in 0..axes {
        for (i, &t) in tau.iter().enumerate() {
            pi[(a, a * streams + i)] = t;
        }
    }
    Ok(Superposition { tau, pi: WlMatrix::from_real(pi)?, streams_per_user: streams, users })
}

/// `Pi s` for a vector of `+-1` stream components.
pub fn superimpose(pi: &Superposition, s: &WlVector) -> Result<WlVector> {
    if s.data().len() != pi.num_streams() {
        return dim_err(format!("{} stream components, expected {}", s.data().len(), pi.num_streams()));
    }
    if s.data().iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Domain("stream components must be +-1".into()));
    }
    WlVector::from_real(pi.pi() * s.data())
}
