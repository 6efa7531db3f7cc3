//! Rejection ABC: draw `N` prior-predictive pairs, keep the `M` with the
//! smallest loss.
//!
//! Particle `i` draws its parameter and its simulation from a ChaCha8
//! stream seeded with [`particle_seed`]`(seed, i)`, and the `N` losses are
//! ranked by `(loss, i)`. Results therefore do not depend on the number of
//! worker threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrepancy::Loss;
use crate::error::{Error, Result};
use crate::models::{ma2_in_triangle, Model};
use crate::streams::TimeSeries;
use crate::summaries::ParamNormalizer;

/// Prior over simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Uniform on the MA(2) invertibility triangle.
    Ma2Triangle,
    /// Independent Gammas, shape/rate parameterisation.
    GammaPair { shape: Vec<f64>, rate: Vec<f64> },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        match self {
            PriorSpec::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return bad("uniform box needs matching non-empty bounds");
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                    return bad("uniform box needs finite lo < hi");
                }
            }
            PriorSpec::Ma2Triangle => {}
            PriorSpec::GammaPair { shape, rate } => {
                if shape.is_empty() || shape.len() != rate.len() {
                    return bad("gamma prior needs matching non-empty shapes and rates");
                }
                if shape.iter().chain(rate).any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return bad("gamma shapes and rates must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::UniformBox { lo, .. } => lo.len(),
            PriorSpec::Ma2Triangle => 2,
            PriorSpec::GammaPair { shape, .. } => shape.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            PriorSpec::UniformBox { lo, hi } => {
                lo.iter().zip(hi).map(|(&l, &h)| l + (h - l) * rng.random::<f64>()).collect()
            }
            PriorSpec::Ma2Triangle => loop {
                let t1 = -2.0 + 4.0 * rng.random::<f64>();
                let t2 = -1.0 + 2.0 * rng.random::<f64>();
                if ma2_in_triangle(t1, t2) {
                    break vec![t1, t2];
                }
            },
            PriorSpec::GammaPair { shape, rate } => shape
                .iter()
                .zip(rate)
                .map(|(&k, &r)| Gamma::new(k, 1.0 / r).expect("validated gamma").sample(rng))
                .collect(),
        }
    }

    /// Normalised log-density; `−∞` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() || theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        match self {
            PriorSpec::UniformBox { lo, hi } => {
                let mut lp = 0.0;
                for ((&t, &l), &h) in theta.iter().zip(lo).zip(hi) {
                    if !(l..=h).contains(&t) {
                        return f64::NEG_INFINITY;
                    }
                    lp -= (h - l).ln();
                }
                lp
            }
            // The triangle has area 4.
            PriorSpec::Ma2Triangle if ma2_in_triangle(theta[0], theta[1]) => -(4f64.ln()),
            PriorSpec::Ma2Triangle => f64::NEG_INFINITY,
            PriorSpec::GammaPair { shape, rate } => {
                let mut lp = 0.0;
                for ((&t, &k), &r) in theta.iter().zip(shape).zip(rate) {
                    if !(t > 0.0) {
                        return f64::NEG_INFINITY;
                    }
                    lp += k * r.ln() - libm::lgamma(k) + (k - 1.0) * t.ln() - r * t;
                }
                lp
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            PriorSpec::UniformBox { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            PriorSpec::Ma2Triangle => vec![0.0, 1.0 / 3.0],
            PriorSpec::GammaPair { shape, rate } => shape.iter().zip(rate).map(|(k, r)| k / r).collect(),
        }
    }

    /// Marginal standard deviations.
    pub fn sd(&self) -> Vec<f64> {
        match self {
            PriorSpec::UniformBox { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l) / 12f64.sqrt()).collect(),
            PriorSpec::Ma2Triangle => vec![(2.0f64 / 3.0).sqrt(), (2.0f64 / 9.0).sqrt()],
            PriorSpec::GammaPair { shape, rate } => shape.iter().zip(rate).map(|(k, r)| k.sqrt() / r).collect(),
        }
    }

    /// Prior-range normaliser for bounded supports.
    pub fn normalizer(&self) -> Option<ParamNormalizer<f64>> {
        match self {
            PriorSpec::UniformBox { lo, hi } => ParamNormalizer::new(lo.clone(), hi.clone()).ok(),
            PriorSpec::Ma2Triangle => ParamNormalizer::new(vec![-2.0, -1.0], vec![2.0, 1.0]).ok(),
            PriorSpec::GammaPair { .. } => None,
        }
    }
}

/// Parameter-to-stream simulator callable from many threads.
pub trait Simulator: Sync {
    fn simulate(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Result<TimeSeries<f64>>;
}

impl Simulator for Model {
    fn simulate(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Result<TimeSeries<f64>> {
        Model::simulate(self, theta, rng)
    }
}

impl<F> Simulator for F
where
    F: Fn(&[f64], &mut ChaCha8Rng) -> Result<TimeSeries<f64>> + Sync,
{
    fn simulate(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Result<TimeSeries<f64>> {
        self(theta, rng)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of particle `i`'s ChaCha8 stream: `splitmix64(splitmix64(seed) + i)`.
pub fn particle_seed(seed: u64, i: usize) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(i as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub seed: u64,
}

/// Retained particles, sorted by `(loss, index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub n_total: usize,
    pub n_nonfinite: usize,
    #[serde(default)]
    pub fingerprint: String,
}

/// Formats a float with 12 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.11e}")
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.particles.iter().map(|p| p.theta.clone()).collect()
    }

    /// CSV with header `theta_1..theta_p,loss,seed`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.particles.first().map_or(0, |q| q.theta.len());
        let mut header: Vec<String> = (1..=p).map(|k| format!("theta_{k}")).collect();
        header.extend(["loss".to_string(), "seed".to_string()]);
        w.write_record(&header)?;
        for q in &self.particles {
            let mut rec: Vec<String> = q.theta.iter().map(|&v| fmt_float(v)).collect();
            rec.push(fmt_float(q.loss));
            rec.push(q.seed.to_string());
            w.write_record(&rec)?;
        }
        Ok(w.flush()?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Arithmetic mean of the retained parameters.
pub fn posterior_mean(ps: &ParticleSet) -> Result<Vec<f64>> {
    let first = ps.particles.first().ok_or_else(|| Error::InvalidArgument("empty particle set".into()))?;
    let mut mean = vec![0.0; first.theta.len()];
    for q in &ps.particles {
        for (m, v) in mean.iter_mut().zip(&q.theta) {
            *m += v;
        }
    }
    let n = ps.particles.len() as f64;
    Ok(mean.into_iter().map(|m| m / n).collect())
}

fn check_budget(prior: &PriorSpec, n: usize, m: usize) -> Result<()> {
    prior.validate()?;
    if m == 0 || m >= n {
        return Err(Error::InvalidArgument(format!("need 0 < M < N, got M={m}, N={n}")));
    }
    Ok(())
}

fn select(thetas: &[Vec<f64>], seeds: &[u64], losses: &[f64], m: usize) -> Result<ParticleSet> {
    let n = losses.len();
    let key = |i: usize| if losses[i].is_finite() { losses[i] } else { f64::INFINITY };
    let n_nonfinite = (0..n).filter(|&i| !losses[i].is_finite()).count();
    if n_nonfinite == n {
        return Err(Error::AllLossesNonFinite(n));
    }
    if n_nonfinite > 0 {
        log::warn!("{n_nonfinite} of {n} losses were non-finite and ranked last");
    }
    let mut order: Vec<usize> = (0..n).collect();
    let cmp = |&a: &usize, &b: &usize| key(a).total_cmp(&key(b)).then(a.cmp(&b));
    if m < n {
        order.select_nth_unstable_by(m, cmp);
        order.truncate(m);
    }
    order.sort_unstable_by(cmp);
    let particles = order
        .into_iter()
        .filter(|&i| losses[i].is_finite())
        .map(|i| Particle { theta: thetas[i].clone(), loss: losses[i], seed: seeds[i] })
        .collect();
    Ok(ParticleSet { particles, n_total: n, n_nonfinite, fingerprint: String::new() })
}

/// Algorithm 1 for several losses at once. Every loss sees the same `N`
/// prior-predictive pairs, so each returned set equals what a separate run
/// with that loss alone would give.
pub fn rejection_abc_multi<S: Simulator + ?Sized>(
    prior: &PriorSpec,
    simulator: &S,
    losses: &[&dyn Loss<f64>],
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<ParticleSet>> {
    check_budget(prior, n, m)?;
    let k = losses.len();
    let draws: Vec<(Vec<f64>, u64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = particle_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let theta = prior.sample(&mut rng);
            let ls = match simulator.simulate(&theta, &mut rng) {
                Ok(x) => losses.iter().map(|l| l.loss(&x).unwrap_or(f64::INFINITY)).collect(),
                Err(_) => vec![f64::INFINITY; k],
            };
            (theta, s, ls)
        })
        .collect();
    let thetas: Vec<Vec<f64>> = draws.iter().map(|d| d.0.clone()).collect();
    let seeds: Vec<u64> = draws.iter().map(|d| d.1).collect();
    (0..k)
        .map(|j| {
            let col: Vec<f64> = draws.iter().map(|d| d.2[j]).collect();
            select(&thetas, &seeds, &col, m)
        })
        .collect()
}

/// Algorithm 1: `N` prior draws and simulations, keep the `M` smallest
/// losses (ties by particle index). Failed simulations and non-finite
/// losses rank as `+∞` and are never retained.
pub fn rejection_abc<S: Simulator + ?Sized>(
    prior: &PriorSpec,
    simulator: &S,
    loss: &dyn Loss<f64>,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<ParticleSet> {
    Ok(rejection_abc_multi(prior, simulator, &[loss], n, m, seed)?.remove(0))
}
