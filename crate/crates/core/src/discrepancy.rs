//! Loss functions for rejection ABC.
//!
//! [`DiscrepancyFn`] is the configured loss `ρ(y, x)`. For repeated
//! evaluation against a fixed observation, [`DiscrepancyFn::bind`] caches
//! everything that depends on `y` only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sigkernel::{clamp_distance, sig_kernel, SigKernelConfig, StaticKernel};
use crate::streams::{check_dim, euclidean, median_pairwise_distance, TimeSeries, TransformPipeline};
use crate::summaries::{KrrSummaryModel, LinearSummaryModel};
use crate::transport::uniform_transport_cost;

/// `‖a − b‖²`.
pub fn euclidean_sq<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    check_dim(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum())
}

/// `λ = V / T`: expected vertical range over the time horizon.
pub fn lambda_heuristic<T: Real>(v: T, t: T) -> Result<T> {
    if !(v > T::zero() && t > T::zero()) || !v.is_finite() || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda heuristic needs V, T > 0 (got {v}, {t})")));
    }
    Ok(v / t)
}

/// `Σ_{i≠j} k(x_i, x_j) / (n(n−1))` over the rows of a row-major buffer.
fn ordered_self_sum<T: Real>(rows: &[T], d: usize, k: &StaticKernel<T>) -> T {
    let n = rows.len() / d;
    let mut s = T::zero();
    for i in 0..n {
        let a = &rows[i * d..(i + 1) * d];
        for j in 0..n {
            if i != j {
                s += k.eval(a, &rows[j * d..(j + 1) * d]);
            }
        }
    }
    s / T::from_count(n * (n - 1))
}

/// `2 Σ_{i,j} k(x_i, y_j) / (n m)`.
fn cross_sum<T: Real>(x: &[T], y: &[T], d: usize, k: &StaticKernel<T>) -> T {
    let mut s = T::zero();
    for a in x.chunks_exact(d) {
        for b in y.chunks_exact(d) {
            s += k.eval(a, b);
        }
    }
    T::lit(2.0) * s / T::from_count((x.len() / d) * (y.len() / d))
}

/// Unbiased MMD² between two row-major sample matrices with `d` columns.
/// Each side needs at least two rows.
pub fn mmd2_rows<T: Real>(x: &[T], y: &[T], d: usize, k: &StaticKernel<T>) -> Result<T> {
    k.validate()?;
    if d == 0 || x.len() % d != 0 || y.len() % d != 0 {
        return Err(Error::InvalidArgument("sample buffers must hold whole rows".into()));
    }
    for n in [x.len() / d, y.len() / d] {
        if n < 2 {
            return Err(Error::TooShort { need: 2, got: n });
        }
    }
    Ok(ordered_self_sum(x, d, k) + ordered_self_sum(y, d, k) - cross_sum(x, y, d, k))
}

fn mmd_check<T: Real>(x: &TimeSeries<T>, y: &TimeSeries<T>, k: &StaticKernel<T>) -> Result<()> {
    k.validate()?;
    check_dim(x.dim(), y.dim())?;
    for s in [x, y] {
        if s.len() < 2 {
            return Err(Error::TooShort { need: 2, got: s.len() });
        }
    }
    Ok(())
}

/// Unbiased squared MMD between the value samples of two series (times
/// ignored, rows treated as iid draws). May be negative.
pub fn mmd2_unbiased<T: Real>(x: &TimeSeries<T>, y: &TimeSeries<T>, k: &StaticKernel<T>) -> Result<T> {
    mmd_check(x, y, k)?;
    mmd2_rows(x.values(), y.values(), x.dim(), k)
}

/// MMD bandwidth from the observation: the median pairwise distance between
/// its value vectors. Falls back to the median absolute value, then to 1,
/// when the observation has too little spread.
pub fn mmd_bandwidth_heuristic<T: Real>(y: &TimeSeries<T>) -> Result<T> {
    let med = median_pairwise_distance(y)?;
    if med > T::zero() {
        return Ok(med);
    }
    let mut norms: Vec<T> = y.rows().map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
    let m = crate::streams::median_in_place(&mut norms);
    Ok(if m > T::zero() { m } else { T::one() })
}

/// Curve-matching Wasserstein distance: exact optimal transport between the
/// clouds `{(t_i, y_i)}` and `{(t_j, x_j)}` with uniform weights and ground
/// cost `(‖y_i − x_j‖ + λ|t_i − t_j|)^p`. Returns the `p`-th root of the
/// optimal cost.
pub fn wasserstein_cm<T: Real>(y: &TimeSeries<T>, x: &TimeSeries<T>, lambda: T, p: u32) -> Result<T> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("Wasserstein order p must be at least 1".into()));
    }
    check_dim(y.dim(), x.dim())?;
    let (n, m) = (y.len(), x.len());
    let mut cost = Vec::with_capacity(n * m);
    for i in 0..n {
        let (ti, yi) = (y.times()[i], y.row(i));
        for j in 0..m {
            let c = euclidean(yi, x.row(j)) + lambda * (ti - x.times()[j]).abs();
            cost.push(c.powi(p as i32));
        }
    }
    let total = uniform_transport_cost(&cost, n, m)?;
    let total = total.max(T::zero());
    Ok(if p == 1 { total } else { total.powf(T::one() / T::from_count(p as usize)) })
}

/// A configured loss `ρ(y, x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum DiscrepancyFn<T> {
    /// Signature-kernel distance after a (calibrated) transform pipeline.
    SigDistance { pipeline: TransformPipeline<T>, kernel: SigKernelConfig<T> },
    /// Squared distance between signature-KRR summaries.
    SigKrr { model: KrrSummaryModel<T> },
    /// Squared distance between semi-automatic linear summaries.
    SaLinear { model: LinearSummaryModel<T> },
    /// Unbiased MMD² on marginal values.
    Mmd2 { kernel: StaticKernel<T> },
    /// Curve-matching Wasserstein distance.
    WassersteinCm { lambda: T, p: u32 },
}

impl<T: Real> DiscrepancyFn<T> {
    pub fn name(&self) -> &'static str {
        match self {
            DiscrepancyFn::SigDistance { .. } => "sig",
            DiscrepancyFn::SigKrr { .. } => "skrr",
            DiscrepancyFn::SaLinear { .. } => "sa",
            DiscrepancyFn::Mmd2 { .. } => "mmd",
            DiscrepancyFn::WassersteinCm { .. } => "wass",
        }
    }

    /// Direct evaluation `ρ(y, x)`.
    pub fn eval(&self, y: &TimeSeries<T>, x: &TimeSeries<T>) -> Result<T> {
        self.bind(y)?.loss(x)
    }

    /// Precomputes the `y`-only parts of the loss.
    pub fn bind(&self, y: &TimeSeries<T>) -> Result<BoundDiscrepancy<'_, T>> {
        let cache = match self {
            DiscrepancyFn::SigDistance { pipeline, kernel } => {
                kernel.validate()?;
                let yt = pipeline.apply(y)?;
                let kyy = sig_kernel(&yt, &yt, kernel)?;
                Cache::Sig { yt, kyy }
            }
            DiscrepancyFn::SigKrr { model } => Cache::Summary(model.predict(y)?),
            DiscrepancyFn::SaLinear { model } => Cache::Summary(model.predict(y)?),
            DiscrepancyFn::Mmd2 { kernel } => {
                kernel.validate()?;
                if y.len() < 2 {
                    return Err(Error::TooShort { need: 2, got: y.len() });
                }
                Cache::Mmd { y: y.clone(), yy: ordered_self_sum(y.values(), y.dim(), kernel) }
            }
            DiscrepancyFn::WassersteinCm { .. } => Cache::Raw(y.clone()),
        };
        Ok(BoundDiscrepancy { func: self, cache })
    }
}

/// Loss evaluated against a fixed observation.
pub trait Loss<T>: Sync {
    fn loss(&self, x: &TimeSeries<T>) -> Result<T>;
}

enum Cache<T> {
    Sig { yt: TimeSeries<T>, kyy: T },
    Summary(Vec<T>),
    Mmd { y: TimeSeries<T>, yy: T },
    Raw(TimeSeries<T>),
}

/// A [`DiscrepancyFn`] with its observation-side work done once.
pub struct BoundDiscrepancy<'a, T> {
    func: &'a DiscrepancyFn<T>,
    cache: Cache<T>,
}

impl<T: Real> Loss<T> for BoundDiscrepancy<'_, T> {
    fn loss(&self, x: &TimeSeries<T>) -> Result<T> {
        match (self.func, &self.cache) {
            (DiscrepancyFn::SigDistance { pipeline, kernel }, Cache::Sig { yt, kyy }) => {
                let xt = pipeline.apply(x)?;
                let kxy = sig_kernel(&xt, yt, kernel)?;
                let kxx = sig_kernel(&xt, &xt, kernel)?;
                clamp_distance(kxx + *kyy - T::lit(2.0) * kxy)
            }
            (DiscrepancyFn::SigKrr { model }, Cache::Summary(sy)) => euclidean_sq(&model.predict(x)?, sy),
            (DiscrepancyFn::SaLinear { model }, Cache::Summary(sy)) => euclidean_sq(&model.predict(x)?, sy),
            (DiscrepancyFn::Mmd2 { kernel }, Cache::Mmd { y, yy }) => {
                mmd_check(x, y, kernel)?;
                let d = x.dim();
                Ok(ordered_self_sum(x.values(), d, kernel) + *yy - cross_sum(x.values(), y.values(), d, kernel))
            }
            (DiscrepancyFn::WassersteinCm { lambda, p }, Cache::Raw(y)) => wasserstein_cm(y, x, *lambda, *p),
            _ => unreachable!("cache built by bind matches its discrepancy"),
        }
    }
}
