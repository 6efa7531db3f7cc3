//! Regression summaries: semi-automatic linear summaries on hand-made
//! features, and signature kernel ridge regression (KRR) summaries.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_jittered, cholesky_solve};
use crate::scalar::Real;
use crate::sigkernel::{gram_matrix, sig_kernel, SigKernelConfig, StaticKernel};
use crate::streams::{TimeSeries, TransformPipeline};

/// Largest diagonal jitter tried when factorising a KRR Gram matrix.
pub const MAX_GRAM_JITTER: f64 = 1e-6;
/// Ridge added to the linear-summary normal equations.
pub const LINEAR_RIDGE: f64 = 1e-8;

/// Affine map of parameters onto `[0, 1]` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamNormalizer<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> ParamNormalizer<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(h > l)) {
            return Err(Error::InvalidArgument("normaliser needs lo < hi in every dimension".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn normalize(&self, theta: &[T]) -> Vec<T> {
        theta.iter().zip(self.lo.iter().zip(&self.hi)).map(|(&t, (&l, &h))| (t - l) / (h - l)).collect()
    }

    pub fn denormalize(&self, z: &[T]) -> Vec<T> {
        z.iter().zip(self.lo.iter().zip(&self.hi)).map(|(&v, (&l, &h))| l + v * (h - l)).collect()
    }
}

/// Simulated `(stream, θ)` pairs used to fit summaries.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    pub streams: Vec<TimeSeries<T>>,
    pub thetas: Vec<Vec<T>>,
    pub normalizer: Option<ParamNormalizer<T>>,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(
        streams: Vec<TimeSeries<T>>,
        thetas: Vec<Vec<T>>,
        normalizer: Option<ParamNormalizer<T>>,
    ) -> Result<Self> {
        if streams.len() != thetas.len() {
            return Err(Error::DimensionMismatch { expected: streams.len(), got: thetas.len() });
        }
        if streams.len() < 2 {
            return Err(Error::TooShort { need: 2, got: streams.len() });
        }
        let (d, p) = (streams[0].dim(), thetas[0].len());
        if p == 0 {
            return Err(Error::InvalidArgument("empty parameter vectors".into()));
        }
        for (s, t) in streams.iter().zip(&thetas) {
            if s.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: s.dim() });
            }
            if t.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: t.len() });
            }
        }
        if let Some(norm) = &normalizer {
            if norm.lo.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: norm.lo.len() });
            }
        }
        Ok(Self { streams, thetas, normalizer })
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn param_dim(&self) -> usize {
        self.thetas[0].len()
    }

    /// Regression targets: parameters, normalised when a normaliser is set.
    fn targets(&self) -> Vec<Vec<T>> {
        match &self.normalizer {
            Some(n) => self.thetas.iter().map(|t| n.normalize(t)).collect(),
            None => self.thetas.clone(),
        }
    }
}

/// `values^1, …, values^pmax` concatenated (power-major).
pub fn power_features<T: Real>(ts: &TimeSeries<T>, pmax: u32) -> Result<Vec<T>> {
    if pmax == 0 {
        return Err(Error::InvalidArgument("pmax must be at least 1".into()));
    }
    if ts.dim() != 1 {
        return Err(Error::InvalidArgument(format!("power features need univariate input, got d={}", ts.dim())));
    }
    Ok((1..=pmax as i32).flat_map(|k| ts.values().iter().map(move |v| v.powi(k))).collect())
}

/// Candidate statistics for semi-automatic summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    Powers { pmax: u32 },
    /// The Ricker hand-crafted statistics.
    Wood,
}

impl FeatureMap {
    pub fn apply<T: Real>(&self, ts: &TimeSeries<T>) -> Result<Vec<T>> {
        match *self {
            FeatureMap::Powers { pmax } => power_features(ts, pmax),
            FeatureMap::Wood => crate::models::wood_summaries(ts),
        }
    }
}

/// `s(x) = A g(x) + b` with `A` stored row-major `p×J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LinearSummaryModel<T> {
    pub feature_map: FeatureMap,
    pub n_features: usize,
    #[serde(with = "crate::codec::b64")]
    pub coef: Vec<T>,
    pub intercept: Vec<T>,
}

impl<T: Real> LinearSummaryModel<T> {
    pub fn param_dim(&self) -> usize {
        self.intercept.len()
    }

    /// Summary of precomputed features.
    pub fn apply_features(&self, g: &[T]) -> Result<Vec<T>> {
        if g.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: g.len() });
        }
        Ok(self
            .intercept
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let row = &self.coef[j * self.n_features..(j + 1) * self.n_features];
                row.iter().zip(g).map(|(&a, &x)| a * x).sum::<T>() + b
            })
            .collect())
    }

    pub fn predict(&self, ts: &TimeSeries<T>) -> Result<Vec<T>> {
        self.apply_features(&self.feature_map.apply(ts)?)
    }
}

/// Least-squares fit of θ on features with an intercept. Features are
/// standardised for the solve and the coefficients mapped back, so the
/// stored model acts on raw features.
pub fn fit_linear_summary<T: Real>(train: &TrainingSet<T>, feature_map: FeatureMap) -> Result<LinearSummaryModel<T>> {
    let feats = train.streams.iter().map(|s| feature_map.apply(s)).collect::<Result<Vec<_>>>()?;
    let j = feats[0].len();
    if feats.iter().any(|f| f.len() != j) {
        return Err(Error::InvalidArgument("linear summaries need equal-length streams".into()));
    }
    let targets = train.thetas.clone();
    let (r, p) = (train.len(), train.param_dim());
    let rf = T::from_count(r);

    let mut mean = vec![T::zero(); j];
    for f in &feats {
        for (m, &v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rf);
    let mut scale = vec![T::zero(); j];
    for f in &feats {
        for ((s, &v), &m) in scale.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / rf).sqrt();
        if !(*s > T::zero()) {
            *s = T::one();
        }
    }
    let tmean: Vec<T> = (0..p).map(|k| targets.iter().map(|t| t[k]).sum::<T>() / rf).collect();

    let x: Vec<T> = feats
        .iter()
        .flat_map(|f| f.iter().zip(&mean).zip(&scale).map(|((&v, &m), &s)| (v - m) / s))
        .collect();
    let y: Vec<T> = targets.iter().flat_map(|t| t.iter().zip(&tmean).map(|(&v, &m)| v - m)).collect();
    let beta = ridge_solve(&x, r, j, &y, p, T::lit(LINEAR_RIDGE))?;

    let mut coef = vec![T::zero(); p * j];
    let mut intercept = tmean;
    for k in 0..p {
        for c in 0..j {
            let a = beta[c * p + k] / scale[c];
            coef[k * j + c] = a;
            intercept[k] -= a * mean[c];
        }
    }
    Ok(LinearSummaryModel { feature_map, n_features: j, coef, intercept })
}

/// Ridge least squares `(XᵀX + ridge·I)⁻¹ Xᵀ Y`, using the dual form
/// `Xᵀ (XXᵀ + ridge·I)⁻¹ Y` when there are fewer rows than columns.
/// Returns `cols×k` row-major.
fn ridge_solve<T: Real>(x: &[T], rows: usize, cols: usize, y: &[T], k: usize, ridge: T) -> Result<Vec<T>> {
    if rows >= cols {
        return crate::linalg::ridge_normal_equations(x, rows, cols, y, k, ridge);
    }
    let mut gram = vec![T::zero(); rows * rows];
    for a in 0..rows {
        for b in 0..=a {
            let v: T = (0..cols).map(|c| x[a * cols + c] * x[b * cols + c]).sum();
            gram[a * rows + b] = v;
            gram[b * rows + a] = v;
        }
        gram[a * rows + a] += ridge;
    }
    let l = cholesky(&gram, rows)?;
    let mut out = vec![T::zero(); cols * k];
    for t in 0..k {
        let rhs: Vec<T> = (0..rows).map(|a| y[a * k + t]).collect();
        let dual = cholesky_solve(&l, rows, &rhs);
        for c in 0..cols {
            out[c * k + t] = (0..rows).map(|a| x[a * cols + c] * dual[a]).sum();
        }
    }
    Ok(out)
}

/// Signature KRR summary: `ŝ_j(x) = Σ_i ω_ji k(x, x_i)`, in normalised
/// parameter space when a normaliser is present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KrrSummaryModel<T> {
    /// Calibrated transform applied to every stream before the kernel.
    pub pipeline: TransformPipeline<T>,
    pub kernel: SigKernelConfig<T>,
    pub alpha: T,
    /// Diagonal jitter the factorisation needed on top of `alpha`.
    pub jitter: T,
    /// Transformed training streams.
    pub streams: Vec<TimeSeries<T>>,
    /// Row-major `p×R`.
    #[serde(with = "crate::codec::b64")]
    pub weights: Vec<T>,
    pub normalizer: Option<ParamNormalizer<T>>,
}

impl<T: Real> KrrSummaryModel<T> {
    pub fn param_dim(&self) -> usize {
        self.weights.len() / self.streams.len()
    }

    /// Summary of a raw stream.
    pub fn predict(&self, ts: &TimeSeries<T>) -> Result<Vec<T>> {
        let xt = self.pipeline.apply(ts)?;
        let kv = self.streams.iter().map(|s| sig_kernel(&xt, s, &self.kernel)).collect::<Result<Vec<T>>>()?;
        Ok(self.combine(&kv))
    }

    /// Prediction mapped back to parameter units.
    pub fn predict_params(&self, ts: &TimeSeries<T>) -> Result<Vec<T>> {
        let z = self.predict(ts)?;
        Ok(match &self.normalizer {
            Some(n) => n.denormalize(&z),
            None => z,
        })
    }

    fn combine(&self, kv: &[T]) -> Vec<T> {
        let r = self.streams.len();
        (0..self.param_dim())
            .map(|j| self.weights[j * r..(j + 1) * r].iter().zip(kv).map(|(&w, &k)| w * k).sum())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Solution of `(G + αI) W = Ψ` for targets stored `R×p`, returning `p×R`
/// weights and the jitter used. The jittered factor is refined iteratively
/// against the unjittered system.
fn krr_weights<T: Real>(gram: &[T], r: usize, alpha: T, targets: &[Vec<T>]) -> Result<(Vec<T>, T)> {
    let mut a = gram.to_vec();
    for i in 0..r {
        a[i * r + i] += alpha;
    }
    let (l, jitter) = cholesky_jittered(&a, r, T::lit(MAX_GRAM_JITTER)).map_err(|e| Error::Singular(format!("KRR Gram factorisation: {e}")))?;
    let p = targets.first().map_or(0, Vec::len);
    let mut weights = vec![T::zero(); p * r];
    for j in 0..p {
        let psi: Vec<T> = targets.iter().map(|t| t[j]).collect();
        let psi_norm = norm(&psi);
        let mut w = cholesky_solve(&l, r, &psi);
        let mut res = residual(&a, r, &w, &psi);
        let mut res_norm = norm(&res);
        for _ in 0..20 {
            if res_norm <= T::lit(1e-13) * psi_norm {
                break;
            }
            let dw = cholesky_solve(&l, r, &res);
            let cand: Vec<T> = w.iter().zip(&dw).map(|(&a, &b)| a + b).collect();
            let cand_res = residual(&a, r, &cand, &psi);
            let cand_norm = norm(&cand_res);
            if !(cand_norm < res_norm) {
                break;
            }
            w = cand;
            res = cand_res;
            res_norm = cand_norm;
        }
        weights[j * r..(j + 1) * r].copy_from_slice(&w);
    }
    Ok((weights, jitter))
}

fn residual<T: Real>(a: &[T], n: usize, w: &[T], b: &[T]) -> Vec<T> {
    (0..n).map(|i| b[i] - a[i * n..(i + 1) * n].iter().zip(w).map(|(&x, &y)| x * y).sum::<T>()).collect()
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Calibrates `pipeline` on the training streams (if needed) and fits the
/// KRR weights.
pub fn fit_krr_summary<T: Real>(
    train: &TrainingSet<T>,
    pipeline: &TransformPipeline<T>,
    cfg: &SigKernelConfig<T>,
    alpha: T,
) -> Result<KrrSummaryModel<T>> {
    if !(alpha >= T::zero()) {
        return Err(Error::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
    }
    cfg.validate()?;
    let mut pipeline = pipeline.clone();
    if pipeline.needs_calibration() {
        pipeline.calibrate(&train.streams)?;
    }
    let streams = train.streams.iter().map(|s| pipeline.apply(s)).collect::<Result<Vec<_>>>()?;
    let r = streams.len();
    let gram = gram_matrix(&streams, cfg)?;
    let (weights, jitter) = krr_weights(&gram, r, alpha, &train.targets())?;
    Ok(KrrSummaryModel {
        pipeline,
        kernel: *cfg,
        alpha,
        jitter,
        streams,
        weights,
        normalizer: train.normalizer.clone(),
    })
}

/// Grid search with `folds`-fold cross-validation over `alpha_grid ×
/// bandwidth_grid` (RBF static kernel). The score is the mean over folds of
/// the validation MSE summed across parameter dimensions. Ties go to the
/// larger α, then the larger bandwidth.
pub fn cross_validate_krr<T: Real>(
    train: &TrainingSet<T>,
    pipeline: &TransformPipeline<T>,
    dyadic_order: u32,
    alpha_grid: &[T],
    bandwidth_grid: &[T],
    folds: usize,
    seed: u64,
) -> Result<(T, T)> {
    if alpha_grid.is_empty() || bandwidth_grid.is_empty() {
        return Err(Error::InvalidArgument("empty cross-validation grid".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    let r = train.len();
    if r < folds {
        return Err(Error::TooShort { need: folds, got: r });
    }
    let mut pipeline = pipeline.clone();
    if pipeline.needs_calibration() {
        pipeline.calibrate(&train.streams)?;
    }
    let streams = train.streams.iter().map(|s| pipeline.apply(s)).collect::<Result<Vec<_>>>()?;
    let targets = train.targets();

    let mut order: Vec<usize> = (0..r).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; r];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let mut alphas = alpha_grid.to_vec();
    let mut bands = bandwidth_grid.to_vec();
    let desc = |a: &T, b: &T| b.partial_cmp(a).expect("finite grid");
    alphas.sort_by(desc);
    bands.sort_by(desc);

    let grams = bands
        .iter()
        .map(|&bw| {
            let cfg = SigKernelConfig::new(StaticKernel::rbf(bw)?, dyadic_order);
            gram_matrix(&streams, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(T, T, T)> = None;
    for &alpha in &alphas {
        for (&bw, gram) in bands.iter().zip(&grams) {
            let score = cv_score(gram, r, alpha, &targets, &fold_of, folds);
            if best.map_or(true, |(s, _, _)| score < s) {
                best = Some((score, alpha, bw));
            }
        }
    }
    let (score, alpha, bw) = best.expect("non-empty grid");
    log::debug!("cross-validation picked alpha={alpha} bandwidth={bw} (score {score})");
    Ok((alpha, bw))
}

fn cv_score<T: Real>(gram: &[T], r: usize, alpha: T, targets: &[Vec<T>], fold_of: &[usize], folds: usize) -> T {
    let scores: Vec<T> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let tr: Vec<usize> = (0..r).filter(|&i| fold_of[i] != f).collect();
            let va: Vec<usize> = (0..r).filter(|&i| fold_of[i] == f).collect();
            let nt = tr.len();
            let sub: Vec<T> = tr.iter().flat_map(|&a| tr.iter().map(move |&b| gram[a * r + b])).collect();
            let tt: Vec<Vec<T>> = tr.iter().map(|&i| targets[i].clone()).collect();
            let Ok((w, _)) = krr_weights(&sub, nt, alpha, &tt) else {
                return T::infinity();
            };
            let p = targets[0].len();
            let mut sse = T::zero();
            for &v in &va {
                for j in 0..p {
                    let pred: T = tr.iter().enumerate().map(|(c, &i)| w[j * nt + c] * gram[v * r + i]).sum();
                    let e = pred - targets[v][j];
                    sse += e * e;
                }
            }
            sse / T::from_count(va.len())
        })
        .collect();
    scores.iter().copied().sum::<T>() / T::from_count(folds)
}
