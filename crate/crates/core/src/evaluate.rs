//! Posterior-quality metrics.

use std::io::{Read, Write};

use crate::abc::{fmt_float, ParticleSet};
use crate::discrepancy::mmd2_rows;
use crate::error::{Error, Result};
use crate::mcmc::Chain;
use crate::scalar::Real;
use crate::sigkernel::StaticKernel;
use crate::streams::{euclidean, median_in_place};

/// `M×p` parameter draws, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SampleSet<T> {
    pub fn new(data: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidArgument("sample buffer must hold whole rows".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged sample rows".into()));
        }
        Self::new(rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Result<Vec<T>> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("mean of an empty sample set".into()));
        }
        let mut m = vec![T::zero(); self.dim];
        for r in self.rows() {
            for (a, &b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = T::from_count(self.len());
        Ok(m.into_iter().map(|v| v / n).collect())
    }

    /// CSV with header `theta_1..theta_p`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.dim).map(|k| format!("theta_{k}")))?;
        for r in self.rows() {
            w.write_record(r.iter().map(|v| fmt_float(v.as_f64())))?;
        }
        Ok(w.flush()?)
    }

    /// Reads the leading `theta_*` columns of a CSV (extra columns such as
    /// `loss` and `seed` are ignored).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers().map_err(Error::from)?.clone();
        let cols: Vec<usize> =
            headers.iter().enumerate().filter(|(_, h)| h.starts_with("theta_")).map(|(i, _)| i).collect();
        if cols.is_empty() {
            return Err(Error::InvalidArgument("no theta_* columns".into()));
        }
        let mut data = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(Error::from)?;
            for &c in &cols {
                let v: f64 = rec
                    .get(c)
                    .ok_or_else(|| Error::InvalidArgument("short CSV row".into()))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad number: {e}")))?;
                data.push(T::lit(v));
            }
        }
        Self::new(data, cols.len())
    }
}

impl SampleSet<f64> {
    pub fn from_particles(ps: &ParticleSet) -> Result<Self> {
        Self::from_rows(&ps.thetas())
    }

    pub fn from_chain(chain: &Chain) -> Result<Self> {
        Self::from_rows(&chain.states)
    }
}

fn check_pair<T: Real>(a: &SampleSet<T>, b: &SampleSet<T>) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, got: b.dim });
    }
    Ok(())
}

/// Median pairwise Euclidean distance over the pooled set `A ∪ B`.
pub fn pooled_median_bandwidth<T: Real>(a: &SampleSet<T>, b: &SampleSet<T>) -> Result<T> {
    check_pair(a, b)?;
    let pooled: Vec<&[T]> = a.rows().chain(b.rows()).collect();
    let n = pooled.len();
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(euclidean(pooled[i], pooled[j]));
        }
    }
    Ok(median_in_place(&mut d))
}

/// Unbiased MMD² with an RBF kernel whose bandwidth is the pooled median
/// pairwise distance (1 when all pooled points coincide).
pub fn mmd2_between_posteriors<T: Real>(a: &SampleSet<T>, b: &SampleSet<T>) -> Result<T> {
    check_pair(a, b)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::TooShort { need: 2, got: a.len().min(b.len()) });
    }
    let bw = pooled_median_bandwidth(a, b)?;
    let bw = if bw > T::zero() { bw } else { T::one() };
    mmd2_rows(&a.data, &b.data, a.dim, &StaticKernel::Rbf { bandwidth: bw })
}

/// `‖mean(A) − mean(B)‖²`.
pub fn sq_dist_means<T: Real>(a: &SampleSet<T>, b: &SampleSet<T>) -> Result<T> {
    check_pair(a, b)?;
    let (ma, mb) = (a.mean()?, b.mean()?);
    Ok(ma.iter().zip(&mb).map(|(&x, &y)| (x - y) * (x - y)).sum())
}
