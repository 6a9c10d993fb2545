//! Seeded random streams and Gaussian sampling.
//!
//! Every replication draws from its own ChaCha8 stream keyed on
//! `(master_seed, replication_index)`, so a replication's data never depends
//! on which thread runs it or in what order.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Pivots at or below this value reject the covariance.
pub const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replication_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        Self {
            master_seed,
            replication_index,
        }
    }
}

/// Geometric-decay correlation `Σ[k][j] = c^|j-k|` over `p` features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub p: usize,
    pub c: f64,
}

impl CovarianceSpec {
    pub fn new(p: usize, c: f64) -> Self {
        Self { p, c }
    }

    /// Entry `(k, j)` of the implied matrix.
    pub fn entry(&self, k: usize, j: usize) -> f64 {
        let lag = k.abs_diff(j);
        if lag == 0 {
            1.0
        } else {
            self.c.powi(lag as i32)
        }
    }
}

/// A single-owner uniform stream. Not shared across threads; derive a new
/// one per replication instead.
#[derive(Debug, Clone)]
pub struct SimStream {
    inner: ChaCha8Rng,
}

impl SimStream {
    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform on `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn next_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}

/// Derive the stream for one replication. The master seed keys the ChaCha
/// key and the replication index selects the 64-bit stream id, so streams
/// never overlap.
pub fn derive_stream(seed: SeedSpec) -> SimStream {
    let mut inner = ChaCha8Rng::seed_from_u64(seed.master_seed);
    inner.set_stream(seed.replication_index);
    SimStream { inner }
}

pub fn sample_standard_normal(stream: &mut SimStream, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    Ok((0..count).map(|_| stream.next_normal()).collect())
}

/// Lower Cholesky factor of the geometric-decay covariance.
///
/// Σ entries are evaluated on the fly; only `L` is stored.
pub fn cholesky_factor(cov: CovarianceSpec) -> Result<Array2<f64>> {
    let p = cov.p;
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    if !cov.c.is_finite() {
        return Err(Error::InvalidArgument("c must be finite".into()));
    }
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut acc = cov.entry(i, j);
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= PIVOT_FLOOR {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: acc });
                }
                l[[i, i]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Draw `n` independent rows from `N(0, Σ)` given a precomputed factor.
pub fn sample_mvn_rows_with_factor(stream: &mut SimStream, factor: &Array2<f64>, n: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let p = factor.nrows();
    let mut out = Array2::<f64>::zeros((n, p));
    let mut z = Array1::<f64>::zeros(p);
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = stream.next_normal());
        for a in 0..p {
            let mut s = 0.0;
            for b in 0..=a {
                s += factor[[a, b]] * z[b];
            }
            out[[i, a]] = s;
        }
    }
    Ok(out)
}

pub fn sample_mvn_rows(stream: &mut SimStream, cov: CovarianceSpec, n: usize) -> Result<Array2<f64>> {
    let factor = cholesky_factor(cov)?;
    sample_mvn_rows_with_factor(stream, &factor, n)
}
