//! Reference posteriors: random-walk Metropolis–Hastings and particle
//! marginal MH with a bootstrap filter for the Ricker model.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::abc::{fmt_float, PriorSpec};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::models::{ln_factorial, poisson_log_pmf_with, ricker_step, RickerParams};
use crate::streams::TimeSeries;

/// Iterations of the PMCMC pilot run.
pub const PMCMC_PILOT_ITERS: usize = 5000;

/// MH output: one state per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub states: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    pub accepted: usize,
    pub proposals: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    /// CSV with header `iter,theta_1..theta_p,log_post`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iter".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("theta_{k}")));
        header.push("log_post".into());
        w.write_record(&header)?;
        for (i, (s, lp)) in self.states.iter().zip(&self.log_post).enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(s.iter().map(|&v| fmt_float(v)));
            rec.push(fmt_float(*lp));
            w.write_record(&rec)?;
        }
        Ok(w.flush()?)
    }
}

/// Random-walk MH with Gaussian proposals `N(θ, Σ)`. The target is called
/// once per proposal and never for the current state, so a noisy
/// (pseudo-marginal) target keeps its stored estimate until a move is
/// accepted.
pub fn mh_random_walk<F, R>(
    mut log_post: F,
    init: &[f64],
    proposal_cov: &[f64],
    iters: usize,
    rng: &mut R,
) -> Result<Chain>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let p = init.len();
    if p == 0 || proposal_cov.len() != p * p {
        return Err(Error::DimensionMismatch { expected: p * p, got: proposal_cov.len() });
    }
    for i in 0..p {
        for j in 0..i {
            if (proposal_cov[i * p + j] - proposal_cov[j * p + i]).abs() > 1e-12 * proposal_cov[i * p + i].abs().max(1.0) {
                return Err(Error::InvalidArgument("proposal covariance must be symmetric".into()));
            }
        }
    }
    let l = cholesky(proposal_cov, p)
        .map_err(|_| Error::InvalidArgument("proposal covariance must be positive definite".into()))?;
    let mut cur = init.to_vec();
    let mut cur_lp = log_post(&cur);
    if !cur_lp.is_finite() {
        return Err(Error::InvalidArgument(format!("log-posterior at the initial state is {cur_lp}")));
    }
    let mut chain = Chain { states: Vec::with_capacity(iters), log_post: Vec::with_capacity(iters), accepted: 0, proposals: 0 };
    let mut z = vec![0.0; p];
    for _ in 0..iters {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let prop: Vec<f64> = (0..p).map(|i| cur[i] + (0..=i).map(|j| l[i * p + j] * z[j]).sum::<f64>()).collect();
        let prop_lp = log_post(&prop);
        let u: f64 = rng.random();
        chain.proposals += 1;
        if prop_lp.is_finite() && u.ln() < prop_lp - cur_lp {
            cur = prop;
            cur_lp = prop_lp;
            chain.accepted += 1;
        }
        chain.states.push(cur.clone());
        chain.log_post.push(cur_lp);
    }
    Ok(chain)
}

/// `(2.38²/p)·Cov(pilot) + 1e-8·I`.
pub fn tune_mh(pilot: &Chain) -> Result<Vec<f64>> {
    let (n, p) = (pilot.len(), pilot.dim());
    if p == 0 || n < 10 * p {
        return Err(Error::TooShort { need: 10 * p.max(1), got: n });
    }
    let mean: Vec<f64> = (0..p).map(|k| pilot.states.iter().map(|s| s[k]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; p * p];
    for s in &pilot.states {
        for a in 0..p {
            for b in 0..p {
                cov[a * p + b] += (s[a] - mean[a]) * (s[b] - mean[b]);
            }
        }
    }
    let scale = 2.38 * 2.38 / p as f64 / (n - 1) as f64;
    for v in cov.iter_mut() {
        *v *= scale;
    }
    for k in 0..p {
        if !(cov[k * p + k] > 0.0) {
            return Err(Error::InvalidArgument(format!("pilot has zero variance in dimension {}", k + 1)));
        }
        cov[k * p + k] += 1e-8;
    }
    Ok(cov)
}

/// Bootstrap particle-filter estimate of `log p(y | θ)` for the Ricker
/// model with `n_particles` latent particles started at `n0`, systematic
/// resampling at every step. Returns `−∞` when all weights vanish.
pub fn bootstrap_pf_loglik<R: Rng + ?Sized>(
    p: &RickerParams,
    y: &TimeSeries<f64>,
    n0: f64,
    n_particles: usize,
    rng: &mut R,
) -> f64 {
    let np = n_particles.max(1);
    let mut parts = vec![n0; np];
    let mut next = vec![0.0; np];
    let mut logw = vec![0.0; np];
    let mut cum = vec![0.0; np];
    let mut ll = 0.0;
    for &obs in y.values() {
        let lf = ln_factorial(obs);
        for (q, lw) in parts.iter_mut().zip(logw.iter_mut()) {
            *q = ricker_step(p, *q, rng.sample(StandardNormal));
            *lw = poisson_log_pmf_with(obs, p.phi * *q, lf);
        }
        let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY || mx.is_nan() {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for (c, lw) in cum.iter_mut().zip(&logw) {
            total += (lw - mx).exp();
            *c = total;
        }
        ll += mx + (total / np as f64).ln();
        let u0: f64 = rng.random::<f64>() / np as f64;
        let mut j = 0;
        for (k, slot) in next.iter_mut().enumerate() {
            let target = (u0 + k as f64 / np as f64) * total;
            while j + 1 < np && cum[j] < target {
                j += 1;
            }
            *slot = parts[j];
        }
        std::mem::swap(&mut parts, &mut next);
    }
    ll
}

/// Particle marginal MH on the Ricker parameters `(log r, φ, σ)`.
///
/// Runs [`tuned_mh`] on the particle-filter target. The chain and the particle
/// filter draw from separate ChaCha8 streams of `seed`.
pub fn pmcmc(
    prior: &PriorSpec,
    y: &TimeSeries<f64>,
    n0: f64,
    iters: usize,
    n_particles: usize,
    seed: u64,
) -> Result<Chain> {
    prior.validate()?;
    if prior.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: prior.dim() });
    }
    if n_particles < 2 {
        return Err(Error::InvalidArgument("the particle filter needs at least 2 particles".into()));
    }
    let mut chain_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pf_rng = ChaCha8Rng::seed_from_u64(seed);
    pf_rng.set_stream(1);
    let mut target = |theta: &[f64]| {
        let lp = prior.log_density(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let rp = RickerParams { log_r: theta[0], phi: theta[1], sigma: theta[2] };
        lp + bootstrap_pf_loglik(&rp, y, n0, n_particles, &mut pf_rng)
    };
    tuned_mh(prior, &mut target, iters, &mut chain_rng)
}

/// Pilot-tuned random-walk MH. A pilot of [`PMCMC_PILOT_ITERS`] iterations
/// starts at the prior mean with proposal `diag((0.1·prior sd)²)`; the main
/// run of `iters` starts at the pilot's last state with the covariance from
/// [`tune_mh`].
pub fn tuned_mh<F, R>(prior: &PriorSpec, mut log_post: F, iters: usize, rng: &mut R) -> Result<Chain>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    prior.validate()?;
    let p = prior.dim();
    let sd = prior.sd();
    let mut pilot_cov = vec![0.0; p * p];
    for k in 0..p {
        pilot_cov[k * p + k] = (0.1 * sd[k]).powi(2);
    }
    let pilot = mh_random_walk(&mut log_post, &prior.mean(), &pilot_cov, PMCMC_PILOT_ITERS, rng)?;
    log::info!("pilot acceptance {:.3}", pilot.acceptance_rate());
    let cov = tune_mh(&pilot)?;
    let start = pilot.states.last().cloned().unwrap_or_else(|| prior.mean());
    mh_random_walk(&mut log_post, &start, &cov, iters, rng)
}

/// `keep` evenly spaced states ending at the last one: indices
/// `len−1 − (keep−1−k)·⌊len/keep⌋`.
pub fn thin(chain: &Chain, keep: usize) -> Result<Chain> {
    let len = chain.len();
    if keep == 0 || keep > len {
        return Err(Error::InvalidArgument(format!("cannot keep {keep} of {len} states")));
    }
    let step = len / keep;
    let idx: Vec<usize> = (0..keep).map(|k| len - 1 - (keep - 1 - k) * step).collect();
    Ok(Chain {
        states: idx.iter().map(|&i| chain.states[i].clone()).collect(),
        log_post: idx.iter().map(|&i| chain.log_post[i]).collect(),
        accepted: chain.accepted,
        proposals: chain.proposals,
    })
}
