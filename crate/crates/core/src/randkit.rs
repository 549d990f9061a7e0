//! Deterministic random streams and the samplers the scenarios are built on.
//!
//! Every stochastic component in the crate draws from an [`RngStream`]
//! identified by `(master_seed, stream_id)`. Streams are ChaCha8 keyed by the
//! master seed with the stream id selecting the ChaCha stream, so the output
//! is identical on every platform and independent across ids.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, StandardNormal};

use crate::error::{Error, Result};

/// Pivots at or below this value are treated as singular.
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same master seed.
    pub fn sibling(&self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n` in draw order (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn split_rng(master_seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(master_seed, stream_id)
}

/// A symmetric positive semidefinite matrix, optionally flagged as a
/// correlation matrix (unit diagonal).
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    entries: Array2<f64>,
    correlation: bool,
}

impl CovMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: c,
            });
        }
        for i in 0..r {
            for j in 0..i {
                if (entries[[i, j]] - entries[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidData(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let correlation = (0..r).all(|i| (entries[[i, i]] - 1.0).abs() < 1e-12);
        Ok(Self {
            entries,
            correlation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: Array2::eye(dim),
            correlation: true,
        }
    }

    /// Identity with a single symmetric off-diagonal pair set to `rho`.
    pub fn with_pair(dim: usize, i: usize, j: usize, rho: f64) -> Self {
        let mut entries = Array2::eye(dim);
        entries[[i, j]] = rho;
        entries[[j, i]] = rho;
        Self {
            entries,
            correlation: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_correlation(&self) -> bool {
        self.correlation
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }
}

/// Lower-triangular `L` with `L·Lᵀ = s`.
pub fn cholesky(s: &Array2<f64>) -> Result<Array2<f64>> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: s.ncols(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = s[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > CHOLESKY_PIVOT_TOL) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut v = s[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    Ok(l)
}

/// `n` rows drawn i.i.d. from `N(mean, s)`.
pub fn mvn_sample(
    mean: ArrayView1<f64>,
    s: &CovMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    let p = s.dim();
    if mean.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: mean.len(),
        });
    }
    let l = cholesky(s.entries())?;
    let mut out = Array2::<f64>::zeros((n, p));
    let mut z = vec![0.0; p];
    for mut row in out.rows_mut() {
        for v in z.iter_mut() {
            *v = rng.normal();
        }
        for i in 0..p {
            let mut acc = mean[i];
            for k in 0..=i {
                acc += l[[i, k]] * z[k];
            }
            row[i] = acc;
        }
    }
    Ok(out)
}

/// Correlation matrix from the LKJ(`eta`) distribution via the onion method.
///
/// The Cholesky factor is grown one row at a time: the new row is
/// `(sqrt(y)·u, sqrt(1 - y))` with `u` uniform on the sphere and `y` Beta
/// distributed, which keeps the product a valid correlation matrix.
pub fn lkj_sample_corr(dim: usize, eta: f64, rng: &mut RngStream) -> Result<CovMatrix> {
    if dim < 2 {
        return Err(Error::InvalidConfig(format!("LKJ dimension must be >= 2, got {dim}")));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidConfig(format!("LKJ eta must be > 0, got {eta}")));
    }
    let mut l = Array2::<f64>::zeros((dim, dim));
    l[[0, 0]] = 1.0;

    let mut b = eta + (dim as f64 - 2.0) / 2.0;
    let r = 2.0 * Beta::new(b, b).expect("positive shape").sample(rng) - 1.0;
    l[[1, 0]] = r;
    l[[1, 1]] = (1.0 - r * r).max(0.0).sqrt();

    for k in 2..dim {
        b -= 0.5;
        let y = Beta::new(k as f64 / 2.0, b)
            .expect("positive shape")
            .sample(rng);
        let mut u: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = y.sqrt() / norm;
        u.iter_mut().for_each(|v| *v *= scale);
        for (j, v) in u.iter().enumerate() {
            l[[k, j]] = *v;
        }
        l[[k, k]] = (1.0 - y).max(0.0).sqrt();
    }

    let mut c = Array2::<f64>::eye(dim);
    for i in 0..dim {
        for j in 0..i {
            let v = l.row(i).dot(&l.row(j));
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(CovMatrix {
        entries: c,
        correlation: true,
    })
}

pub fn lognormal_sample(
    meanlog: f64,
    sdlog: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<Array1<f64>> {
    let dist = LogNormal::new(meanlog, sdlog)
        .map_err(|e| Error::InvalidConfig(format!("log-normal: {e}")))?;
    if !(sdlog > 0.0) {
        return Err(Error::InvalidConfig("log-normal sdlog must be > 0".into()));
    }
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn cholesky_round_trips(dim in 1usize..=100, seed in any::<u64>()) {
            // Random SPD matrix: A·Aᵀ + dim·I.
            let mut rng = split_rng(seed, 0);
            let a = Array2::from_shape_fn((dim, dim), |_| rng.normal());
            let s = a.dot(&a.t()) + Array2::<f64>::eye(dim) * dim as f64;
            let l = cholesky(&s).unwrap();
            let back = l.dot(&l.t());
            let err = (&back - &s).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(err < 1e-10, "err {}", err);
        }
    }
}
