//! Turns a config and an observation into a calibrated loss for one seed.
//!
//! Every calibration (pilot normalisation, training sets, the λ heuristic)
//! draws from its own ChaCha8 streams derived from the ABC seed, so a method
//! prepared for seed `s` is the same whichever command or thread builds it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sigabc::abc::{particle_seed, PriorSpec};
use sigabc::discrepancy::{lambda_heuristic, mmd_bandwidth_heuristic, DiscrepancyFn};
use sigabc::models::Model;
use sigabc::sigkernel::{SigKernelConfig, StaticKernel};
use sigabc::streams::{median_pairwise_distance, TimeSeries, TransformPipeline};
use sigabc::summaries::{cross_validate_krr, fit_krr_summary, fit_linear_summary, TrainingSet};

use crate::config::{ExperimentConfig, KernelKind, Method, Step};
use crate::error::{CliError, CliResult};

/// Calibration streams, offset from the top of the index range so they never
/// meet the per-particle streams of the ABC run.
#[derive(Debug, Clone, Copy)]
enum Purpose {
    SigPilot = 0,
    SkrrTraining = 1,
    SaTraining = 2,
    WassHeuristic = 3,
    SkrrFolds = 4,
}

fn calibration_seed(seed: u64, purpose: Purpose) -> u64 {
    particle_seed(seed, usize::MAX - purpose as usize)
}

/// `count` prior-predictive pairs in index order; failed simulations are
/// dropped.
pub fn prior_predictive(
    prior: &PriorSpec,
    model: &Model,
    count: usize,
    seed: u64,
) -> Vec<(Vec<f64>, TimeSeries<f64>)> {
    (0..count)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(particle_seed(seed, i));
            let theta = prior.sample(&mut rng);
            model.simulate(&theta, &mut rng).ok().map(|x| (theta, x))
        })
        .collect()
}

fn pipeline_of(steps: &[Step]) -> TransformPipeline<f64> {
    TransformPipeline::new(steps.iter().map(|s| s.transform()).collect())
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        1.0
    }
}

/// Largest per-channel range `max − min` of one stream.
pub fn vertical_range(ts: &TimeSeries<f64>) -> f64 {
    (0..ts.dim())
        .map(|c| {
            let (lo, hi) = ts.channel(c).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Builds the loss for `method` against observation `y`.
pub fn build_discrepancy(
    cfg: &ExperimentConfig,
    method: Method,
    y: &TimeSeries<f64>,
    seed: u64,
) -> CliResult<DiscrepancyFn<f64>> {
    let model = cfg.model.model();
    let prior = cfg.model.prior();
    let f = match method {
        Method::Sig | Method::SigLeadlag => {
            let mut pipeline = pipeline_of(&cfg.sig_steps(method));
            if pipeline.needs_calibration() {
                let pilot = prior_predictive(&prior, &model, cfg.sig.pilot, calibration_seed(seed, Purpose::SigPilot));
                let streams: Vec<_> = pilot.into_iter().map(|p| p.1).collect();
                pipeline.calibrate(&streams)?;
            }
            let static_kernel = match cfg.sig.kernel {
                KernelKind::Linear => StaticKernel::Linear,
                KernelKind::Rbf => {
                    let bw = match cfg.sig.bandwidth {
                        Some(bw) => bw,
                        None => positive_or_one(median_pairwise_distance(&pipeline.apply(y)?)?),
                    };
                    StaticKernel::rbf(bw)?
                }
            };
            log::info!("{method}: kernel {static_kernel:?}");
            DiscrepancyFn::SigDistance { pipeline, kernel: SigKernelConfig::new(static_kernel, cfg.sig.dyadic_order) }
        }
        Method::Skrr => {
            let s = &cfg.skrr;
            let train = training_set(cfg, s.r, calibration_seed(seed, Purpose::SkrrTraining))?;
            let mut pipeline = pipeline_of(&cfg.skrr_steps());
            if pipeline.needs_calibration() {
                pipeline.calibrate(&train.streams)?;
            }
            let median = positive_or_one(median_pairwise_distance(&pipeline.apply(y)?)?);
            let bands: Vec<f64> = s.bandwidth_multipliers.iter().map(|k| k * median).collect();
            let folds_seed = calibration_seed(seed, Purpose::SkrrFolds);
            let (alpha, bw) =
                cross_validate_krr(&train, &pipeline, s.dyadic_order, &s.alpha_grid, &bands, s.folds, folds_seed)?;
            log::info!("skrr: cross-validated alpha {alpha}, bandwidth {bw}");
            let kernel = SigKernelConfig::new(StaticKernel::rbf(bw)?, s.dyadic_order);
            DiscrepancyFn::SigKrr { model: fit_krr_summary(&train, &pipeline, &kernel, alpha)? }
        }
        Method::Sa => {
            let map = cfg
                .model
                .feature_map(cfg.sa.pmax)
                .ok_or_else(|| CliError::Validation("sa has no candidate statistics for this model".into()))?;
            let train = training_set(cfg, cfg.sa.r, calibration_seed(seed, Purpose::SaTraining))?;
            DiscrepancyFn::SaLinear { model: fit_linear_summary(&train, map)? }
        }
        Method::Mmd => {
            let bw = match cfg.mmd.bandwidth {
                Some(bw) => bw,
                None => mmd_bandwidth_heuristic(y)?,
            };
            DiscrepancyFn::Mmd2 { kernel: StaticKernel::rbf(bw)? }
        }
        Method::Wass => {
            let lambda = match cfg.wass.lambda {
                Some(l) => l,
                None => {
                    let sims = prior_predictive(
                        &prior,
                        &model,
                        cfg.wass.prior_predictive,
                        calibration_seed(seed, Purpose::WassHeuristic),
                    );
                    if sims.is_empty() {
                        return Err(CliError::Runtime("every prior-predictive simulation failed".into()));
                    }
                    let v = sims.iter().map(|s| vertical_range(&s.1)).sum::<f64>() / sims.len() as f64;
                    let lambda = lambda_heuristic(v, model.horizon())?;
                    log::info!("wass: V = {v}, lambda = {lambda}");
                    lambda
                }
            };
            DiscrepancyFn::WassersteinCm { lambda, p: cfg.wass.p }
        }
    };
    Ok(f)
}

fn training_set(cfg: &ExperimentConfig, r: usize, seed: u64) -> CliResult<TrainingSet<f64>> {
    let prior = cfg.model.prior();
    let pairs = prior_predictive(&prior, &cfg.model.model(), r, seed);
    if pairs.len() < r {
        log::warn!("{} of {r} training simulations failed", r - pairs.len());
    }
    let (thetas, streams): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(TrainingSet::new(streams, thetas, prior.normalizer())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!("out_dir = \"o\"\n{extra}\n[model]\nkind = \"ma2\"\nt = 30\n")).unwrap()
    }

    fn observation() -> TimeSeries<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Model::Ma2 { t: 30 }.simulate(&[0.6, 0.2], &mut rng).unwrap()
    }

    #[test]
    fn calibration_is_a_function_of_the_seed() {
        let cfg = config("");
        let y = observation();
        for m in [Method::SigLeadlag, Method::Wass, Method::Sa] {
            let a = serde_json::to_string(&build_discrepancy(&cfg, m, &y, 3).unwrap()).unwrap();
            let b = serde_json::to_string(&build_discrepancy(&cfg, m, &y, 3).unwrap()).unwrap();
            let c = serde_json::to_string(&build_discrepancy(&cfg, m, &y, 4).unwrap()).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c, "{m}");
        }
    }

    #[test]
    fn explicit_settings_override_heuristics() {
        let cfg = config("[wass]\nlambda = 0.25\n[mmd]\nbandwidth = 2.0\n");
        let y = observation();
        match build_discrepancy(&cfg, Method::Wass, &y, 0).unwrap() {
            DiscrepancyFn::WassersteinCm { lambda, p } => assert_eq!((lambda, p), (0.25, 1)),
            other => panic!("{other:?}"),
        }
        match build_discrepancy(&cfg, Method::Mmd, &y, 0).unwrap() {
            DiscrepancyFn::Mmd2 { kernel } => assert_eq!(kernel, StaticKernel::Rbf { bandwidth: 2.0 }),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vertical_range_takes_the_widest_channel() {
        let ts = TimeSeries::from_rows(vec![0.0, 1.0, 2.0], &[vec![0.0, 5.0], vec![1.0, 2.0], vec![-1.0, 4.0]]).unwrap();
        assert_eq!(vertical_range(&ts), 3.0);
    }
}
