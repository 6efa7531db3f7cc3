//! Benchmark simulators and their exact likelihoods or posteriors.
//!
//! * MA(2): `x_t = ε_t + θ1 ε_{t−1} + θ2 ε_{t−2}` on `t = 0..T`, `x_0 = 0`.
//! * GBM: exact log-normal discretisation on `[0, 1]` with `T` points.
//! * Ricker: `log N_t = log r + log N_{t−1} − N_{t−1} + σ e_t`,
//!   `y_t ~ Poisson(φ N_t)`, `t = 1..T`.
//! * GSE: general stochastic epidemic simulated with the Gillespie algorithm.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ridge_normal_equations;
use crate::scalar::Real;
use crate::streams::TimeSeries;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Floor applied to the Ricker latent state before taking its log.
pub const RICKER_FLOOR: f64 = 1e-12;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- MA(2)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ma2Params {
    pub theta1: f64,
    pub theta2: f64,
}

/// MA(2) series of length `T+1` on integer times `0..=T`.
pub fn simulate_ma2<R: Rng + ?Sized>(p: Ma2Params, t: usize, rng: &mut R) -> Result<TimeSeries<f64>> {
    if t < 2 {
        return Err(Error::TooShort { need: 2, got: t });
    }
    let eps: Vec<f64> = (0..=t).map(|_| normal(rng)).collect();
    let mut x = vec![0.0; t + 1];
    x[1] = eps[1] + p.theta1 * eps[0];
    for k in 2..=t {
        x[k] = eps[k] + p.theta1 * eps[k - 1] + p.theta2 * eps[k - 2];
    }
    TimeSeries::univariate((0..=t).map(|k| k as f64).collect(), x)
}

/// Covariance bands `(diagonal, first off-diagonal, second off-diagonal)`
/// of `(x_1, …, x_n)`. Only `x_1` differs from the stationary variance.
fn ma2_bands(p: Ma2Params, n: usize) -> (Vec<f64>, f64, f64) {
    let (a, b) = (p.theta1, p.theta2);
    let mut diag = vec![1.0 + a * a + b * b; n];
    diag[0] = 1.0 + a * a;
    (diag, a + a * b, b)
}

/// Exact Gaussian log-likelihood of `y_1..y_T` (the deterministic `x_0` is
/// dropped) via a banded Cholesky factorisation.
pub fn ma2_log_likelihood(p: Ma2Params, y: &TimeSeries<f64>) -> Result<f64> {
    if y.dim() != 1 {
        return Err(Error::InvalidArgument("MA(2) observations are univariate".into()));
    }
    let v = &y.values()[1..];
    let n = v.len();
    if n == 0 {
        return Err(Error::TooShort { need: 2, got: y.len() });
    }
    let (diag, g1, g2) = ma2_bands(p, n);
    // L has bandwidth two: l0[i] = L[i][i], l1[i] = L[i][i−1], l2[i] = L[i][i−2].
    let (mut l0, mut l1, mut l2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut logdet = 0.0;
    let mut quad = 0.0;
    let mut z = vec![0.0; n];
    for i in 0..n {
        if i >= 2 {
            l2[i] = g2 / l0[i - 2];
        }
        if i >= 1 {
            let carry = if i >= 2 { l2[i] * l1[i - 1] } else { 0.0 };
            l1[i] = (g1 - carry) / l0[i - 1];
        }
        let d = diag[i] - l1[i] * l1[i] - l2[i] * l2[i];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Singular("MA(2) covariance is not positive definite".into()));
        }
        l0[i] = d.sqrt();
        let mut r = v[i];
        if i >= 1 {
            r -= l1[i] * z[i - 1];
        }
        if i >= 2 {
            r -= l2[i] * z[i - 2];
        }
        z[i] = r / l0[i];
        logdet += 2.0 * l0[i].ln();
        quad += z[i] * z[i];
    }
    Ok(-0.5 * (n as f64 * LN_2PI + logdet + quad))
}

/// Dense covariance of `(x_1, …, x_n)`, row-major.
pub fn ma2_covariance(p: Ma2Params, n: usize) -> Vec<f64> {
    let (diag, g1, g2) = ma2_bands(p, n);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = diag[i];
        if i + 1 < n {
            m[i * n + i + 1] = g1;
            m[(i + 1) * n + i] = g1;
        }
        if i + 2 < n {
            m[i * n + i + 2] = g2;
            m[(i + 2) * n + i] = g2;
        }
    }
    m
}

/// Inside the invertibility triangle used as the MA(2) prior support.
pub fn ma2_in_triangle(theta1: f64, theta2: f64) -> bool {
    (-2.0..=2.0).contains(&theta1) && theta1 + theta2 > -1.0 && theta1 - theta2 < 1.0 && theta2 < 1.0
}

// ---------------------------------------------------------------- GBM

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
}

/// GBM path on `t_i = i/(T−1)`, `i = 0..T`. Overflow is reported as an error.
pub fn simulate_gbm<R: Rng + ?Sized>(p: GbmParams, x0: f64, t: usize, rng: &mut R) -> Result<TimeSeries<f64>> {
    if t < 2 {
        return Err(Error::TooShort { need: 2, got: t });
    }
    if !(x0 > 0.0) {
        return Err(Error::InvalidArgument(format!("GBM start must be positive, got {x0}")));
    }
    if !(p.sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("GBM sigma must be non-negative, got {}", p.sigma)));
    }
    let dt = 1.0 / (t - 1) as f64;
    let drift = (p.mu - 0.5 * p.sigma * p.sigma) * dt;
    let vol = p.sigma * dt.sqrt();
    let mut logx = x0.ln();
    let mut values = Vec::with_capacity(t);
    values.push(x0);
    for _ in 1..t {
        logx += drift + vol * normal(rng);
        values.push(logx.exp());
    }
    TimeSeries::univariate((0..t).map(|i| i as f64 * dt).collect(), values)
}

/// Sum of the log-normal transition log-densities of `log y`; the
/// Jacobian term `−Σ log y_i` is omitted.
pub fn gbm_log_likelihood(p: GbmParams, y: &TimeSeries<f64>) -> Result<f64> {
    if !(p.sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("GBM sigma must be positive, got {}", p.sigma)));
    }
    if y.dim() != 1 {
        return Err(Error::InvalidArgument("GBM observations are univariate".into()));
    }
    if y.values().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("GBM observations must be positive".into()));
    }
    let (t, v) = (y.times(), y.values());
    let mut ll = 0.0;
    for i in 1..v.len() {
        let dt = t[i] - t[i - 1];
        let var = p.sigma * p.sigma * dt;
        let r = (v[i] / v[i - 1]).ln() - (p.mu - 0.5 * p.sigma * p.sigma) * dt;
        ll += -0.5 * (LN_2PI + var.ln() + r * r / var);
    }
    Ok(ll)
}

// ---------------------------------------------------------------- Ricker

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RickerParams {
    pub log_r: f64,
    pub phi: f64,
    pub sigma: f64,
}

/// One latent step given the standard-normal innovation.
#[inline]
pub fn ricker_step(p: &RickerParams, n_prev: f64, e: f64) -> f64 {
    let n = n_prev.max(RICKER_FLOOR);
    (p.log_r + n.ln() - n + p.sigma * e).exp()
}

/// Poisson draw tolerating a zero mean.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(f64::NAN)
    } else {
        0.0
    }
}

/// Latent Ricker path `N_1..N_T` from `N_0`.
pub fn ricker_latent<R: Rng + ?Sized>(p: &RickerParams, t: usize, n0: f64, rng: &mut R) -> Vec<f64> {
    let mut n = n0;
    (0..t)
        .map(|_| {
            n = ricker_step(p, n, normal(rng));
            n
        })
        .collect()
}

/// Observed counts on times `1..=T`.
pub fn simulate_ricker<R: Rng + ?Sized>(p: RickerParams, t: usize, n0: f64, rng: &mut R) -> Result<TimeSeries<f64>> {
    if t < 1 {
        return Err(Error::TooShort { need: 1, got: t });
    }
    if !(n0 > 0.0) || !(p.phi >= 0.0) || !(p.sigma >= 0.0) {
        return Err(Error::InvalidArgument("Ricker needs N0 > 0, phi >= 0, sigma >= 0".into()));
    }
    let mut n = n0;
    let mut values = Vec::with_capacity(t);
    for _ in 0..t {
        n = ricker_step(&p, n, normal(rng));
        values.push(poisson(p.phi * n, rng));
    }
    TimeSeries::univariate((1..=t).map(|k| k as f64).collect(), values)
}

/// `ln P(y | mean)` for a Poisson count, with `ln y!` summed directly.
pub fn poisson_log_pmf(y: f64, mean: f64) -> f64 {
    poisson_log_pmf_with(y, mean, ln_factorial(y))
}

pub(crate) fn ln_factorial(y: f64) -> f64 {
    (2..=y as u64).map(|i| (i as f64).ln()).sum()
}

/// [`poisson_log_pmf`] with `ln y!` supplied.
#[inline]
pub(crate) fn poisson_log_pmf_with(y: f64, mean: f64, log_fact: f64) -> f64 {
    if mean <= 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    y * mean.ln() - mean - log_fact
}

fn regression_or_zero<T: Real>(x: &[T], rows: usize, cols: usize, y: &[T]) -> Vec<T> {
    if rows == 0 || x.iter().all(|v| *v == T::zero()) {
        return vec![T::zero(); cols];
    }
    ridge_normal_equations(x, rows, cols, y, 1, T::lit(1e-8))
        .ok()
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| vec![T::zero(); cols])
}

/// The 14 Ricker statistics: biased autocovariances at lags 0..5, mean,
/// number of zeros, the coefficients of
/// `x_{t+1}^0.3 ~ β1 x_t^0.3 + β2 x_t^0.6`, and the cubic regression
/// (with intercept) of the sorted differences on the unsorted differences.
pub fn wood_summaries<T: Real>(ts: &TimeSeries<T>) -> Result<Vec<T>> {
    let n = ts.len();
    if n < 7 {
        return Err(Error::TooShort { need: 7, got: n });
    }
    if ts.dim() != 1 {
        return Err(Error::InvalidArgument("Wood summaries need univariate input".into()));
    }
    let x = ts.values();
    let nf = T::from_count(n);
    let mean = x.iter().copied().sum::<T>() / nf;
    let mut out = Vec::with_capacity(14);
    for lag in 0..=5 {
        let s: T = (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum();
        out.push(s / nf);
    }
    out.push(mean);
    out.push(T::from_count(x.iter().filter(|v| **v == T::zero()).count()));

    let p3 = T::lit(0.3);
    let p6 = T::lit(0.6);
    let design: Vec<T> = x[..n - 1].iter().flat_map(|&v| [v.powf(p3), v.powf(p6)]).collect();
    let target: Vec<T> = x[1..].iter().map(|&v| v.powf(p3)).collect();
    out.extend(regression_or_zero(&design, n - 1, 2, &target));

    let diffs: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = diffs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let design: Vec<T> = diffs.iter().flat_map(|&d| [T::one(), d, d * d, d * d * d]).collect();
    let cubic = if diffs.iter().all(|d| *d == T::zero()) {
        vec![T::zero(); 4]
    } else {
        regression_or_zero(&design, diffs.len(), 4, &sorted)
    };
    out.extend(cubic);
    Ok(out)
}

// ---------------------------------------------------------------- GSE

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GseParams {
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Infection,
    Recovery,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Infection => "infection",
            EventKind::Recovery => "recovery",
        }
    }
}

/// One event with the state `(X, Y)` right after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GseEvent {
    pub t: f64,
    pub kind: EventKind,
    pub x: u32,
    pub y: u32,
}

/// Complete event record of an epidemic started at `t = 0` with one
/// infective and `Z − 1` susceptibles.
#[derive(Debug, Clone, PartialEq)]
pub struct GseTrajectory {
    pub z: u32,
    pub t_end: f64,
    pub events: Vec<GseEvent>,
    /// `∫_0^T X_t Y_t dt`.
    pub int_xy: f64,
    /// `∫_0^T Y_t dt`.
    pub int_y: f64,
    /// Infections, counting the initial infective.
    pub n_i: u32,
    pub n_r: u32,
}

impl GseTrajectory {
    /// Rebuilds counts and integrals from an event list.
    pub fn from_events(z: u32, t_end: f64, events: Vec<GseEvent>) -> Result<Self> {
        if z < 2 {
            return Err(Error::InvalidArgument("population must be at least 2".into()));
        }
        let (mut x, mut y, mut t) = (z - 1, 1u32, 0.0);
        let (mut int_xy, mut int_y, mut n_i, mut n_r) = (0.0, 0.0, 1, 0);
        for e in &events {
            if !(e.t > t) || e.t > t_end {
                return Err(Error::InvalidSeries("event times must increase within [0, T]".into()));
            }
            let dt = e.t - t;
            int_xy += (x as f64) * (y as f64) * dt;
            int_y += (y as f64) * dt;
            match e.kind {
                EventKind::Infection if x > 0 && y > 0 => {
                    x -= 1;
                    y += 1;
                    n_i += 1;
                }
                EventKind::Recovery if y > 0 => {
                    y -= 1;
                    n_r += 1;
                }
                _ => return Err(Error::InvalidSeries("impossible epidemic transition".into())),
            }
            if (e.x, e.y) != (x, y) {
                return Err(Error::InvalidSeries("event state does not match the transitions".into()));
            }
            t = e.t;
        }
        int_xy += (x as f64) * (y as f64) * (t_end - t);
        int_y += (y as f64) * (t_end - t);
        Ok(Self { z, t_end, events, int_xy, int_y, n_i, n_r })
    }

    /// Event log with header `t,kind,X,Y`.
    pub fn write_event_log<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "kind", "X", "Y"])?;
        for e in &self.events {
            w.write_record([format!("{:?}", e.t), e.kind.as_str().to_string(), e.x.to_string(), e.y.to_string()])
                ?;
        }
        Ok(w.flush()?)
    }

    pub fn read_event_log<R: Read>(reader: R, z: u32, t_end: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let bad = |m: String| Error::InvalidSeries(m);
        let mut events = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(Error::from)?;
            if rec.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", rec.len())));
            }
            let kind = match &rec[1] {
                "infection" => EventKind::Infection,
                "recovery" => EventKind::Recovery,
                other => return Err(bad(format!("unknown event kind {other:?}"))),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            let cnt = |s: &str| s.parse::<u32>().map_err(|e| bad(e.to_string()));
            events.push(GseEvent { t: num(&rec[0])?, kind, x: cnt(&rec[2])?, y: cnt(&rec[3])? });
        }
        Self::from_events(z, t_end, events)
    }
}

/// Gillespie simulation on `[0, T]`, stopping early once no infective
/// remains.
pub fn simulate_gse<R: Rng + ?Sized>(p: GseParams, z: u32, t_end: f64, rng: &mut R) -> Result<GseTrajectory> {
    if z < 2 {
        return Err(Error::InvalidArgument("population must be at least 2".into()));
    }
    if !(p.beta >= 0.0 && p.gamma >= 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidArgument("GSE needs beta, gamma >= 0 and T > 0".into()));
    }
    let (mut x, mut y, mut t) = (z - 1, 1u32, 0.0f64);
    let (mut int_xy, mut int_y, mut n_i, mut n_r) = (0.0, 0.0, 1, 0);
    let mut events = Vec::new();
    while y > 0 {
        let inf = p.beta * x as f64 * y as f64;
        let rate = inf + p.gamma * y as f64;
        let dt = if rate > 0.0 { Exp::new(rate).map(|d| d.sample(rng)).unwrap_or(f64::INFINITY) } else { f64::INFINITY };
        let next = t + dt;
        if !(next <= t_end) || next <= t {
            break;
        }
        int_xy += x as f64 * y as f64 * dt;
        int_y += y as f64 * dt;
        t = next;
        let kind = if rng.random::<f64>() * rate < inf {
            x -= 1;
            y += 1;
            n_i += 1;
            EventKind::Infection
        } else {
            y -= 1;
            n_r += 1;
            EventKind::Recovery
        };
        events.push(GseEvent { t, kind, x, y });
    }
    int_xy += x as f64 * y as f64 * (t_end - t);
    int_y += y as f64 * (t_end - t);
    Ok(GseTrajectory { z, t_end, events, int_xy, int_y, n_i, n_r })
}

/// Observed stream: the initial state at `t = 0` and the state after every
/// event, with channels `(infected/Z, recovered/Z)` and times `t/T`.
pub fn gse_observation(traj: &GseTrajectory) -> Result<TimeSeries<f64>> {
    let zf = traj.z as f64;
    let mut times = vec![0.0];
    let mut values = vec![1.0 / zf, 0.0];
    for e in &traj.events {
        let recovered = traj.z - e.x - e.y;
        let t = e.t / traj.t_end;
        let row = [e.y as f64 / zf, recovered as f64 / zf];
        if t > *times.last().expect("non-empty") {
            times.push(t);
            values.extend(row);
        } else {
            // Coincident in floating point: keep the later state.
            let k = values.len() - 2;
            values[k..].copy_from_slice(&row);
        }
    }
    TimeSeries::new(times, values, 2)
}

/// Gamma hyperparameters `(λβ, νβ, λγ, νγ)`: shapes and rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GseHyper {
    pub lambda_beta: f64,
    pub nu_beta: f64,
    pub lambda_gamma: f64,
    pub nu_gamma: f64,
}

impl Default for GseHyper {
    fn default() -> Self {
        Self { lambda_beta: 0.1, nu_beta: 2.0, lambda_gamma: 0.2, nu_gamma: 0.5 }
    }
}

impl GseHyper {
    /// Posterior `(shape, rate)` pairs for β and γ.
    pub fn posterior(&self, traj: &GseTrajectory) -> Result<((f64, f64), (f64, f64))> {
        if traj.n_i == 0 {
            return Err(Error::InvalidArgument("posterior needs at least one infection".into()));
        }
        Ok((
            (self.lambda_beta + traj.n_i as f64 - 1.0, self.nu_beta + traj.int_xy),
            (self.lambda_gamma + traj.n_r as f64, self.nu_gamma + traj.int_y),
        ))
    }
}

/// One draw from the conjugate Gamma posterior.
pub fn gse_exact_posterior_sample<R: Rng + ?Sized>(
    traj: &GseTrajectory,
    hyper: &GseHyper,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let ((sb, rb), (sg, rg)) = hyper.posterior(traj)?;
    let gb = Gamma::new(sb, 1.0 / rb).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let gg = Gamma::new(sg, 1.0 / rg).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((gb.sample(rng), gg.sample(rng)))
}

// ---------------------------------------------------------------- models as simulators

/// A benchmark model with its experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Ma2 { t: usize },
    Gbm { x0: f64, t: usize },
    Ricker { t: usize, n0: f64 },
    Gse { z: u32, t_end: f64 },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Ma2 { .. } => "ma2",
            Model::Gbm { .. } => "gbm",
            Model::Ricker { .. } => "ricker",
            Model::Gse { .. } => "gse",
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Model::Ricker { .. } => 3,
            _ => 2,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Model::Ma2 { .. } => &["theta1", "theta2"],
            Model::Gbm { .. } => &["mu", "sigma"],
            Model::Ricker { .. } => &["log_r", "phi", "sigma"],
            Model::Gse { .. } => &["beta", "gamma"],
        }
    }

    /// Time horizon of the raw output, used by the Wasserstein λ heuristic.
    pub fn horizon(&self) -> f64 {
        match *self {
            Model::Ma2 { t } => t as f64,
            Model::Gbm { .. } => 1.0,
            Model::Ricker { t, .. } => t as f64,
            // Observation times are already divided by T.
            Model::Gse { .. } => 1.0,
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<TimeSeries<f64>> {
        self.check_theta(theta)?;
        match *self {
            Model::Ma2 { t } => simulate_ma2(Ma2Params { theta1: theta[0], theta2: theta[1] }, t, rng),
            Model::Gbm { x0, t } => simulate_gbm(GbmParams { mu: theta[0], sigma: theta[1] }, x0, t, rng),
            Model::Ricker { t, n0 } => {
                simulate_ricker(RickerParams { log_r: theta[0], phi: theta[1], sigma: theta[2] }, t, n0, rng)
            }
            Model::Gse { z, t_end } => {
                let traj = simulate_gse(GseParams { beta: theta[0], gamma: theta[1] }, z, t_end, rng)?;
                gse_observation(&traj)
            }
        }
    }
}
