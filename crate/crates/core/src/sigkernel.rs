//! Signature kernel via a finite-difference Goursat PDE solver.
//!
//! For two piecewise-linear paths the kernel `k(s,t) = ⟨Sig(x)_s, Sig(y)_t⟩`
//! solves `∂²k/∂s∂t = ⟨ẋ_s, ẏ_t⟩_H · k` with `k(0,·) = k(·,0) = 1`, where the
//! inner product is taken after lifting both paths through a static kernel.
//! On grid cell `(i,j)` the forcing is the static-kernel cross increment
//!
//! ```text
//! A_ij = κ(x_{i+1}, y_{j+1}) + κ(x_i, y_j) − κ(x_{i+1}, y_j) − κ(x_i, y_{j+1})
//! ```
//!
//! and the explicit update is
//!
//! ```text
//! u[i+1][j+1] = (u[i+1][j] + u[i][j+1])·(1 + A/2 + A²/12) − u[i][j]·(1 − A²/12).
//! ```
//!
//! With dyadic order `λ` each cell is split into `2^λ × 2^λ` sub-cells carrying
//! `A/4^λ`. This is exact for the linear static kernel (the lifted path is
//! piecewise linear) and an approximation for the RBF kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};
use crate::streams::{check_dim, TimeSeries};

/// Point-wise kernel used to lift path values into a feature space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StaticKernel<T> {
    Linear,
    /// `exp(−‖a−b‖² / (2σ²))` with `σ = bandwidth`.
    Rbf { bandwidth: T },
}

impl<T: Real> StaticKernel<T> {
    pub fn rbf(bandwidth: T) -> Result<Self> {
        let k = StaticKernel::Rbf { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StaticKernel::Linear => Ok(()),
            StaticKernel::Rbf { bandwidth } if *bandwidth > T::zero() && bandwidth.is_finite() => {
                Ok(())
            }
            StaticKernel::Rbf { bandwidth } => Err(Error::InvalidArgument(format!(
                "RBF bandwidth must be positive, got {bandwidth}"
            ))),
        }
    }

    /// Unchecked evaluation; `a` and `b` must have equal length.
    #[inline]
    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        match self {
            StaticKernel::Linear => a.iter().zip(b).map(|(&p, &q)| p * q).sum(),
            StaticKernel::Rbf { bandwidth } => {
                let sq: T = a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum();
                (-sq / (T::lit(2.0) * *bandwidth * *bandwidth)).exp()
            }
        }
    }
}

/// Checked static-kernel evaluation.
pub fn static_kernel_eval<T: Real>(spec: &StaticKernel<T>, a: &[T], b: &[T]) -> Result<T> {
    check_dim(a.len(), b.len())?;
    spec.validate()?;
    Ok(spec.eval(a, b))
}

pub const DEFAULT_MAX_DYADIC_ORDER: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigKernelConfig<T> {
    pub static_kernel: StaticKernel<T>,
    #[serde(default)]
    pub dyadic_order: u32,
    #[serde(default = "default_max_dyadic")]
    pub max_dyadic_order: u32,
}

fn default_max_dyadic() -> u32 {
    DEFAULT_MAX_DYADIC_ORDER
}

impl<T: Real> SigKernelConfig<T> {
    pub fn new(static_kernel: StaticKernel<T>, dyadic_order: u32) -> Self {
        Self { static_kernel, dyadic_order, max_dyadic_order: DEFAULT_MAX_DYADIC_ORDER }
    }

    pub fn linear(dyadic_order: u32) -> Self {
        Self::new(StaticKernel::Linear, dyadic_order)
    }

    pub fn validate(&self) -> Result<()> {
        self.static_kernel.validate()?;
        if self.dyadic_order > self.max_dyadic_order {
            return Err(Error::InvalidArgument(format!(
                "dyadic order {} exceeds the cap {}",
                self.dyadic_order, self.max_dyadic_order
            )));
        }
        Ok(())
    }
}

/// Signature kernel `k(x, y)` of the linearly interpolated streams.
pub fn sig_kernel<T: Real>(x: &TimeSeries<T>, y: &TimeSeries<T>, cfg: &SigKernelConfig<T>) -> Result<T> {
    check_dim(x.dim(), y.dim())?;
    cfg.validate()?;
    solve_goursat(x, y, cfg)
}

fn solve_goursat<T: Real>(x: &TimeSeries<T>, y: &TimeSeries<T>, cfg: &SigKernelConfig<T>) -> Result<T> {
    let (n, m) = (x.len(), y.len());
    if n < 2 || m < 2 {
        return Ok(T::one());
    }
    let kappa = &cfg.static_kernel;

    // Static Gram between the sample points, then the cell cross increments.
    let mut gram = Vec::with_capacity(n * m);
    for xi in x.rows() {
        for yj in y.rows() {
            gram.push(kappa.eval(xi, yj));
        }
    }
    let (ci, cj) = (n - 1, m - 1);
    let refine = 1usize << cfg.dyadic_order;
    let scale = T::one() / T::from_count(refine * refine);
    let half = T::lit(0.5);
    let twelfth = T::one() / T::lit(12.0);
    // Per coarse cell: (1 + a/2 + a²/12, 1 − a²/12).
    let mut coef = Vec::with_capacity(ci * cj);
    for i in 0..ci {
        for j in 0..cj {
            let a = ((gram[(i + 1) * m + j + 1] + gram[i * m + j])
                - (gram[(i + 1) * m + j] + gram[i * m + j + 1]))
                * scale;
            let a2 = a * a * twelfth;
            coef.push((T::one() + a * half + a2, T::one() - a2));
        }
    }

    let cols = cj * refine + 1;
    let mut prev = vec![T::one(); cols];
    let mut cur = vec![T::one(); cols];
    for i in 0..ci {
        let row_coef = &coef[i * cj..(i + 1) * cj];
        for _ in 0..refine {
            cur[0] = T::one();
            for (jc, &(c1, c2)) in row_coef.iter().enumerate() {
                let base = jc * refine;
                for s in 0..refine {
                    let j = base + s;
                    cur[j + 1] = (cur[j] + prev[j + 1]) * c1 - prev[j] * c2;
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
    }
    let k = prev[cols - 1];
    if k.is_finite() {
        Ok(k)
    } else {
        Err(Error::NonFiniteKernel)
    }
}

/// Clamps a kernel-induced squared distance, rejecting negatives beyond
/// the `1e-8` floating-point allowance.
pub fn clamp_distance<T: Real>(d: T) -> Result<T> {
    if d >= T::zero() {
        Ok(d)
    } else if d > T::lit(-1e-8) {
        Ok(T::zero())
    } else {
        Err(Error::NegativeDistance(d.as_f64()))
    }
}

/// `‖Sig(x) − Sig(y)‖² = k(x,x) + k(y,y) − 2k(x,y)`.
pub fn sig_distance<T: Real>(x: &TimeSeries<T>, y: &TimeSeries<T>, cfg: &SigKernelConfig<T>) -> Result<T> {
    let kxy = sig_kernel(x, y, cfg)?;
    let kxx = solve_goursat(x, x, cfg)?;
    let kyy = solve_goursat(y, y, cfg)?;
    clamp_distance(kxx + kyy - T::lit(2.0) * kxy)
}

/// Symmetric Gram matrix `G[a][b] = k(xs[a], xs[b])`, row-major. Entries are
/// evaluated in parallel; the result does not depend on scheduling.
pub fn gram_matrix<T: Real>(xs: &[TimeSeries<T>], cfg: &SigKernelConfig<T>) -> Result<Vec<T>> {
    cfg.validate()?;
    let r = xs.len();
    if let Some(first) = xs.first() {
        for s in xs {
            check_dim(first.dim(), s.dim())?;
        }
    }
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect();
    let vals = pairs
        .par_iter()
        .map(|&(a, b)| solve_goursat(&xs[a], &xs[b], cfg))
        .collect::<Result<Vec<T>>>()?;
    let mut g = vec![T::zero(); r * r];
    for (&(a, b), v) in pairs.iter().zip(vals) {
        g[a * r + b] = v;
        g[b * r + a] = v;
    }
    Ok(g)
}

/// Cross Gram `C[a][b] = k(xs[a], ys[b])`, row-major `|xs|×|ys|`.
pub fn cross_gram<T: Real>(
    xs: &[TimeSeries<T>],
    ys: &[TimeSeries<T>],
    cfg: &SigKernelConfig<T>,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let cols = ys.len();
    (0..xs.len() * cols)
        .into_par_iter()
        .map(|idx| sig_kernel(&xs[idx / cols], &ys[idx % cols], cfg))
        .collect()
}

/// Signature truncated at a finite depth. Level `m` holds `d^m`
/// coefficients indexed lexicographically by multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSignature<F> {
    dim: usize,
    levels: Vec<Vec<F>>,
}

impl<F: Field> TruncatedSignature<F> {
    /// The unit element `(1, 0, 0, …)`.
    pub fn identity(dim: usize, depth: usize) -> Self {
        let levels = (0..=depth)
            .map(|m| {
                let mut v = vec![F::zero(); dim.pow(m as u32)];
                if m == 0 {
                    v[0] = F::one();
                }
                v
            })
            .collect();
        Self { dim, levels }
    }

    /// Tensor exponential of one increment: level `m` is `Δ^{⊗m} / m!`.
    pub fn segment(increment: &[F], depth: usize) -> Self {
        let dim = increment.len();
        let mut levels = vec![vec![F::one()]];
        for m in 1..=depth {
            let prev = &levels[m - 1];
            let mf = F::from_count(m);
            let mut next = Vec::with_capacity(prev.len() * dim);
            for p in prev {
                for inc in increment {
                    next.push(p.clone() * inc.clone() / mf.clone());
                }
            }
            levels.push(next);
        }
        Self { dim, levels }
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self, m: usize) -> &[F] {
        &self.levels[m]
    }

    pub fn levels(&self) -> &[Vec<F>] {
        &self.levels
    }

    /// Truncated tensor product (Chen concatenation `self` then `other`).
    pub fn concat(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let depth = self.depth().min(other.depth());
        let mut levels = Vec::with_capacity(depth + 1);
        for m in 0..=depth {
            let mut out = vec![F::zero(); self.dim.pow(m as u32)];
            for k in 0..=m {
                let a = &self.levels[k];
                let b = &other.levels[m - k];
                for (ia, va) in a.iter().enumerate() {
                    let off = ia * b.len();
                    for (ib, vb) in b.iter().enumerate() {
                        out[off + ib] = out[off + ib].clone() + va.clone() * vb.clone();
                    }
                }
            }
            levels.push(out);
        }
        Self { dim: self.dim, levels }
    }

    /// `Σ_m ⟨a_m, b_m⟩` over the common depth.
    pub fn inner(&self, other: &Self) -> F {
        let mut acc = F::zero();
        for (a, b) in self.levels.iter().zip(&other.levels) {
            for (p, q) in a.iter().zip(b) {
                acc = acc + p.clone() * q.clone();
            }
        }
        acc
    }
}

/// Truncated signature of the piecewise-linear path through `points`
/// (row-major, `dim` wide), built from per-segment tensor exponentials.
pub fn signature_of_points<F: Field>(points: &[F], dim: usize, depth: usize) -> Result<TruncatedSignature<F>> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::InvalidArgument("point buffer does not match dimension".into()));
    }
    let n = points.len() / dim;
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    let mut sig = TruncatedSignature::identity(dim, depth);
    for w in 0..n - 1 {
        let inc: Vec<F> = (0..dim)
            .map(|c| points[(w + 1) * dim + c].clone() - points[w * dim + c].clone())
            .collect();
        sig = sig.concat(&TruncatedSignature::segment(&inc, depth));
    }
    Ok(sig)
}

pub fn truncated_signature<T: Real>(x: &TimeSeries<T>, depth: usize) -> Result<TruncatedSignature<T>> {
    if depth == 0 {
        return Err(Error::InvalidArgument("truncation depth must be ≥ 1".into()));
    }
    signature_of_points(x.values(), x.dim(), depth)
}

/// Inner product of the depth-`D` truncated signatures.
pub fn truncated_sig_inner<T: Real>(x: &TimeSeries<T>, y: &TimeSeries<T>, depth: usize) -> Result<T> {
    check_dim(x.dim(), y.dim())?;
    if depth == 0 {
        return Ok(T::one());
    }
    let sx = signature_of_points(x.values(), x.dim(), depth)?;
    let sy = signature_of_points(y.values(), y.dim(), depth)?;
    Ok(sx.inner(&sy))
}
