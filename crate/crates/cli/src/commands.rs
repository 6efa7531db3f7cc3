//! The five subcommands as library functions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sigabc::abc::{fmt_float, rejection_abc_multi, ParticleSet};
use sigabc::discrepancy::{DiscrepancyFn, Loss};
use sigabc::evaluate::{mmd2_between_posteriors, sq_dist_means, SampleSet};
use sigabc::mcmc::{pmcmc, thin, tuned_mh, Chain};
use sigabc::models::{
    gbm_log_likelihood, gse_exact_posterior_sample, gse_observation, ma2_log_likelihood, simulate_gse, GbmParams,
    GseHyper, GseParams, GseTrajectory, Ma2Params,
};
use sigabc::streams::TimeSeries;

use crate::config::{check_budget, ExperimentConfig, Method, ModelConfig, RECOMMENDED_PMCMC_ITERS};
use crate::error::{invalid, CliError, CliResult};
use crate::methods::build_discrepancy;

/// Writes through a temporary file and a rename, so a crash never leaves a
/// truncated result that a resumed sweep would trust.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn events_path(observation: &Path) -> PathBuf {
    let stem = observation.file_stem().and_then(|s| s.to_str()).unwrap_or("observation");
    observation.with_file_name(format!("{stem}_events.csv"))
}

pub fn particles_path(cfg: &ExperimentConfig, method: Method, seed: u64) -> PathBuf {
    cfg.out_dir.join("particles").join(format!("{method}_seed{seed}.csv"))
}

pub fn metrics_path(cfg: &ExperimentConfig, method: Method, seed: u64) -> PathBuf {
    cfg.out_dir.join("results").join(format!("{method}_seed{seed}.json"))
}

pub fn reference_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("reference.csv")
}

pub fn sweep_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("sweep.csv")
}

// ------------------------------------------------------------------ simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub fingerprint: String,
    pub model: String,
    pub theta: Vec<f64>,
    pub seed: u64,
    pub len: usize,
    #[serde(default)]
    pub events: Option<PathBuf>,
}

/// Simulates the observation at the configured `theta_true`.
pub fn simulate(cfg: &ExperimentConfig, seed: Option<u64>, out: Option<&Path>) -> CliResult<PathBuf> {
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join("observation.csv"));
    let seed = seed.unwrap_or(cfg.obs_seed);
    let theta = cfg.theta();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = None;
    let y = match cfg.model {
        ModelConfig::Gse { z, t_end } => {
            let traj = simulate_gse(GseParams { beta: theta[0], gamma: theta[1] }, z, t_end, &mut rng)?;
            let ev = events_path(&path);
            let mut buf = Vec::new();
            traj.write_event_log(&mut buf)?;
            write_atomic(&ev, &buf)?;
            events = Some(ev);
            gse_observation(&traj)?
        }
        _ => cfg.model.model().simulate(&theta, &mut rng)?,
    };
    let mut buf = Vec::new();
    y.write_csv(&mut buf)?;
    write_atomic(&path, &buf)?;
    let meta = ObservationMeta {
        fingerprint: cfg.fingerprint(),
        model: cfg.model.model().name().into(),
        theta,
        seed,
        len: y.len(),
        events,
    };
    write_atomic(&sidecar(&path), &to_json(&meta)?)?;
    log::info!("wrote observation {} ({} samples)", path.display(), y.len());
    Ok(path)
}

pub fn load_observation(cfg: &ExperimentConfig) -> CliResult<TimeSeries<f64>> {
    let path = cfg.observation_path();
    let file = fs::File::open(&path).map_err(|e| {
        CliError::Validation(format!("cannot open observation {}: {e} (run `simulate` first)", path.display()))
    })?;
    let y = TimeSeries::read_csv(file).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let want = match cfg.model {
        ModelConfig::Gse { .. } => 2,
        _ => 1,
    };
    if y.dim() != want {
        return invalid(format!("observation has {} channels, the {} model produces {want}", y.dim(), cfg.model.model().name()));
    }
    Ok(y)
}

// --------------------------------------------------------------------- infer

/// Metadata written next to a particle CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferRecord {
    pub fingerprint: String,
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub discrepancy: DiscrepancyFn<f64>,
    pub particles: ParticleSet,
}

#[derive(Debug, Clone, Copy)]
pub struct RunSpec {
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
}

fn write_particles(path: &Path, record: &InferRecord) -> CliResult<()> {
    let mut buf = Vec::new();
    record.particles.write_csv(&mut buf)?;
    write_atomic(path, &buf)?;
    write_atomic(&sidecar(path), &to_json(record)?)
}

/// Calibrates and runs rejection ABC for several methods sharing one set of
/// simulations. Each result equals a run of that method alone.
pub fn infer_many(
    cfg: &ExperimentConfig,
    y: &TimeSeries<f64>,
    methods: &[Method],
    seed: u64,
    n: usize,
    m: usize,
) -> CliResult<Vec<InferRecord>> {
    check_budget(n, m)?;
    let fingerprint = cfg.fingerprint();
    let funcs = methods.iter().map(|&k| build_discrepancy(cfg, k, y, seed)).collect::<CliResult<Vec<_>>>()?;
    let bound = funcs.iter().map(|f| f.bind(y)).collect::<sigabc::Result<Vec<_>>>()?;
    let losses: Vec<&dyn Loss<f64>> = bound.iter().map(|b| b as &dyn Loss<f64>).collect();
    let sets = rejection_abc_multi(&cfg.model.prior(), &cfg.model.model(), &losses, n, m, seed)?;
    Ok(methods
        .iter()
        .zip(funcs)
        .zip(sets)
        .map(|((&method, discrepancy), mut particles)| {
            particles.fingerprint = fingerprint.clone();
            InferRecord { fingerprint: fingerprint.clone(), method, seed, n, m, discrepancy, particles }
        })
        .collect())
}

/// `infer`: one method, one seed; returns the particle CSV path.
pub fn infer(cfg: &ExperimentConfig, run: RunSpec, out: Option<&Path>) -> CliResult<PathBuf> {
    cfg.validate_method(run.method)?;
    let y = load_observation(cfg)?;
    let record = infer_many(cfg, &y, &[run.method], run.seed, run.n, run.m)?.remove(0);
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| particles_path(cfg, run.method, run.seed));
    write_particles(&path, &record)?;
    log::info!("wrote {} particles to {}", record.particles.len(), path.display());
    Ok(path)
}

// ----------------------------------------------------------------- reference

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub fingerprint: String,
    pub model: String,
    pub sampler: String,
    pub iters: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub acceptance_rate: Option<f64>,
}

fn log_target<'a>(
    cfg: &'a ExperimentConfig,
    y: &'a TimeSeries<f64>,
) -> impl FnMut(&[f64]) -> f64 + 'a {
    let prior = cfg.model.prior();
    let model = cfg.model.clone();
    move |th: &[f64]| {
        let lp = prior.log_density(th);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let ll = match model {
            ModelConfig::Ma2 { .. } => ma2_log_likelihood(Ma2Params { theta1: th[0], theta2: th[1] }, y),
            ModelConfig::Gbm { .. } => gbm_log_likelihood(GbmParams { mu: th[0], sigma: th[1] }, y),
            _ => unreachable!("exact likelihood only for ma2 and gbm"),
        };
        ll.map_or(f64::NEG_INFINITY, |v| lp + v)
    }
}

/// `reference`: samples from the (approximate) true posterior.
pub fn reference(cfg: &ExperimentConfig, seed: Option<u64>, out: Option<&Path>) -> CliResult<PathBuf> {
    let seed = seed.unwrap_or(cfg.reference.seed);
    let keep = cfg.reference.samples;
    let iters = cfg.reference_iters();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (set, sampler, acceptance, iters) = match cfg.model {
        ModelConfig::Ma2 { .. } | ModelConfig::Gbm { .. } => {
            let y = load_observation(cfg)?;
            let chain = tuned_mh(&cfg.model.prior(), log_target(cfg, &y), iters, &mut rng)?;
            thinned(&chain, keep, "mh", iters)?
        }
        ModelConfig::Ricker { n0, .. } => {
            if iters < RECOMMENDED_PMCMC_ITERS {
                log::warn!("pmcmc with {iters} iterations; {RECOMMENDED_PMCMC_ITERS} are recommended");
            }
            let y = load_observation(cfg)?;
            let chain = pmcmc(&cfg.model.prior(), &y, n0, iters, cfg.reference.particles, seed)?;
            thinned(&chain, keep, "pmcmc", iters)?
        }
        ModelConfig::Gse { z, t_end } => {
            let ev = events_path(&cfg.observation_path());
            let file = fs::File::open(&ev).map_err(|e| {
                CliError::Validation(format!("exact gse posterior needs the event log {}: {e}", ev.display()))
            })?;
            let traj = GseTrajectory::read_event_log(file, z, t_end)?;
            let hyper = GseHyper::default();
            let rows = (0..keep)
                .map(|_| gse_exact_posterior_sample(&traj, &hyper, &mut rng).map(|(b, g)| vec![b, g]))
                .collect::<sigabc::Result<Vec<_>>>()?;
            (SampleSet::from_rows(&rows)?, "exact_gamma", None, 0)
        }
    };
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| reference_path(cfg));
    let mut buf = Vec::new();
    set.write_csv(&mut buf)?;
    write_atomic(&path, &buf)?;
    let record = ReferenceRecord {
        fingerprint: cfg.fingerprint(),
        model: cfg.model.model().name().into(),
        sampler: sampler.into(),
        iters,
        samples: set.len(),
        seed,
        acceptance_rate: acceptance,
    };
    write_atomic(&sidecar(&path), &to_json(&record)?)?;
    log::info!("wrote {} reference samples to {}", set.len(), path.display());
    Ok(path)
}

fn thinned(
    chain: &Chain,
    keep: usize,
    sampler: &'static str,
    iters: usize,
) -> CliResult<(SampleSet<f64>, &'static str, Option<f64>, usize)> {
    let rate = chain.acceptance_rate();
    log::info!("{sampler} acceptance rate {rate:.3}");
    Ok((SampleSet::from_chain(&thin(chain, keep)?)?, sampler, Some(rate), iters))
}

// ------------------------------------------------------------------ evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mmd2: f64,
    pub sq_dist_means: f64,
    #[serde(rename = "M")]
    pub m: usize,
    /// Simulation budget of the ABC run, when known.
    pub n: Option<usize>,
    pub reference_samples: usize,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub particles_fingerprint: String,
    pub reference_fingerprint: String,
}

fn fingerprint_of(path: &Path) -> CliResult<String> {
    let value: serde_json::Value = read_json(&sidecar(path))?;
    value
        .get("fingerprint")
        .and_then(|f| f.as_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::Validation(format!("{} carries no fingerprint", sidecar(path).display())))
}

fn read_samples(path: &Path) -> CliResult<SampleSet<f64>> {
    let file = fs::File::open(path).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
    SampleSet::read_csv(file).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Computes the metrics; refuses inputs from different configs unless
/// `force`.
pub fn compute_metrics(particles: &Path, reference: &Path, force: bool) -> CliResult<Metrics> {
    let (pf, rf) = (fingerprint_of(particles)?, fingerprint_of(reference)?);
    if pf != rf {
        if !force {
            return invalid(format!(
                "fingerprint mismatch: particles {} vs reference {} (pass --force to compare anyway)",
                &pf[..pf.len().min(12)],
                &rf[..rf.len().min(12)]
            ));
        }
        log::warn!("comparing outputs of different configs");
    }
    let (a, b) = (read_samples(particles)?, read_samples(reference)?);
    if a.dim() != b.dim() {
        return invalid(format!("particles have {} parameters, the reference has {}", a.dim(), b.dim()));
    }
    let record: Option<InferRecord> = read_json(&sidecar(particles)).ok();
    Ok(Metrics {
        mmd2: mmd2_between_posteriors(&a, &b)?,
        sq_dist_means: sq_dist_means(&a, &b)?,
        m: a.len(),
        n: record.as_ref().map(|r| r.n),
        reference_samples: b.len(),
        method: record.as_ref().map(|r| r.method),
        seed: record.as_ref().map(|r| r.seed),
        particles_fingerprint: pf,
        reference_fingerprint: rf,
    })
}

/// `evaluate`: writes the metrics JSON and returns its path.
pub fn evaluate(particles: &Path, reference: &Path, out: Option<&Path>, force: bool) -> CliResult<PathBuf> {
    let metrics = compute_metrics(particles, reference, force)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| particles.with_extension("metrics.json"));
    write_atomic(&path, &to_json(&metrics)?)?;
    Ok(path)
}

// --------------------------------------------------------------------- sweep

/// One row of the long-format results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub seed: u64,
    pub mmd2: f64,
    pub sq_dist_means: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub ran: usize,
    pub skipped: usize,
    pub errors: Vec<(Method, u64, String)>,
}

pub struct SweepOptions {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub m: usize,
    pub force: bool,
}

impl SweepOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self { methods: cfg.methods.clone(), seeds: cfg.seeds.clone(), n: cfg.budget.n, m: cfg.budget.m, force: false }
    }
}

/// Existing result for `(method, seed)`, if it is current.
fn existing_result(cfg: &ExperimentConfig, method: Method, seed: u64, opts: &SweepOptions) -> CliResult<Option<Metrics>> {
    let path = metrics_path(cfg, method, seed);
    if !path.exists() {
        return Ok(None);
    }
    let metrics: Metrics = read_json(&path)?;
    if metrics.particles_fingerprint == cfg.fingerprint() && metrics.n == Some(opts.n) {
        return Ok(Some(metrics));
    }
    if opts.force {
        log::warn!("recomputing stale result {}", path.display());
        return Ok(None);
    }
    invalid(format!("{} comes from a different config or budget (pass --force to recompute)", path.display()))
}

/// `sweep`: infer + evaluate for every `(method, seed)` without a result,
/// then the long-format CSV over all of them. Seeds run in parallel; the
/// methods of one seed share simulations.
pub fn sweep(cfg: &ExperimentConfig, opts: &SweepOptions) -> CliResult<SweepReport> {
    if opts.seeds.is_empty() || opts.methods.is_empty() {
        return invalid("sweep needs at least one seed and one method");
    }
    check_budget(opts.n, opts.m)?;
    for &method in &opts.methods {
        cfg.validate_method(method)?;
    }
    if cfg.observation.is_none() && !cfg.observation_path().exists() {
        simulate(cfg, None, None)?;
    }
    let y = load_observation(cfg)?;
    let ref_path = reference_path(cfg);
    if !ref_path.exists() {
        reference(cfg, None, None)?;
    } else if fingerprint_of(&ref_path)? != cfg.fingerprint() && !opts.force {
        return invalid(format!("{} comes from a different config (pass --force to use it)", ref_path.display()));
    }

    let mut pending: BTreeMap<u64, Vec<Method>> = BTreeMap::new();
    let mut skipped = 0;
    for &seed in &opts.seeds {
        for &method in &opts.methods {
            if existing_result(cfg, method, seed, opts)?.is_some() {
                skipped += 1;
            } else {
                pending.entry(seed).or_default().push(method);
            }
        }
    }
    if skipped > 0 {
        log::info!("skipping {skipped} finished runs");
    }

    let outcomes: Vec<(u64, Vec<Method>, CliResult<()>)> = pending
        .into_par_iter()
        .map(|(seed, methods)| {
            let res = run_seed(cfg, &y, &ref_path, &methods, seed, opts);
            (seed, methods, res)
        })
        .collect();
    let mut report = SweepReport { skipped, ..Default::default() };
    for (seed, methods, res) in outcomes {
        match res {
            Ok(()) => report.ran += methods.len(),
            Err(e) => report.errors.extend(methods.into_iter().map(|m| (m, seed, e.to_string()))),
        }
    }

    for &method in &opts.methods {
        for &seed in &opts.seeds {
            if let Some(mt) = existing_result(cfg, method, seed, opts).ok().flatten() {
                report.rows.push(SweepRow { method, seed, mmd2: mt.mmd2, sq_dist_means: mt.sq_dist_means });
            }
        }
    }
    let mut csv = String::from("method,seed,mmd2,sq_dist_means\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{},{},{}\n", r.method, r.seed, fmt_float(r.mmd2), fmt_float(r.sq_dist_means)));
    }
    write_atomic(&sweep_path(cfg), csv.as_bytes())?;
    if !report.errors.is_empty() {
        let lines: Vec<String> =
            report.errors.iter().map(|(m, s, e)| format!("  {m} seed {s}: {e}")).collect();
        return Err(CliError::Runtime(format!(
            "{} of {} runs failed (finished runs are kept):\n{}",
            report.errors.len(),
            report.errors.len() + report.ran,
            lines.join("\n")
        )));
    }
    Ok(report)
}

fn run_seed(
    cfg: &ExperimentConfig,
    y: &TimeSeries<f64>,
    reference: &Path,
    methods: &[Method],
    seed: u64,
    opts: &SweepOptions,
) -> CliResult<()> {
    let records = infer_many(cfg, y, methods, seed, opts.n, opts.m)?;
    for record in records {
        let path = particles_path(cfg, record.method, seed);
        write_particles(&path, &record)?;
        let metrics = compute_metrics(&path, reference, opts.force)?;
        write_atomic(&metrics_path(cfg, record.method, seed), &to_json(&metrics)?)?;
        log::info!("{} seed {seed}: mmd2 {:.4e}", record.method, metrics.mmd2);
    }
    Ok(())
}
