//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sigabc::discrepancy::{mmd2_unbiased, wasserstein_cm};
use sigabc::mcmc::bootstrap_pf_loglik;
use sigabc::models::*;
use sigabc::sigkernel::{gram_matrix, sig_distance, sig_kernel, truncated_sig_inner, SigKernelConfig, StaticKernel};
use sigabc::streams::{TimeSeries, Transform, TransformPipeline};
use sigabc::summaries::{fit_krr_summary, TrainingSet};
use sigabc_cli::commands::{self, SweepOptions, SweepRow};
use sigabc_cli::{ExperimentConfig, Method};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn uniform_stream(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TimeSeries<f64> {
    let values: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    TimeSeries::new((0..n).map(|i| i as f64).collect(), values, d).unwrap()
}

fn uniform_pair(rng: &mut ChaCha8Rng) -> (TimeSeries<f64>, TimeSeries<f64>) {
    let d = rng.random_range(1..=3);
    let n = rng.random_range(2..=10);
    let m = rng.random_range(2..=10);
    (uniform_stream(rng, n, d), uniform_stream(rng, m, d))
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cfg = SigKernelConfig::linear(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (x, y) = uniform_pair(&mut rng);
        let oracle = truncated_sig_inner(&x, &y, 10).unwrap();
        let k = sig_kernel(&x, &y, &cfg).unwrap();
        worst = worst.max(((k - oracle) / oracle).abs());
    }
    // Σ_m 1/(m!)² for the unit straight line.
    let mut expect = 0.0;
    let mut fact = 1.0;
    for m in 0..30 {
        if m > 0 {
            fact *= m as f64;
        }
        expect += 1.0 / (fact * fact);
    }
    let line = TimeSeries::from_values(vec![0.0, 1.0]).unwrap();
    let k_line = sig_kernel(&line, &line, &SigKernelConfig::linear(5)).unwrap();
    let line_err = (k_line - expect).abs();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-3 && line_err < 1e-4 && (expect - 2.2795853).abs() < 1e-7 && secs < 30.0,
        format!("max rel err {worst:.3e} (tol 1e-3), straight line {k_line:.7} err {line_err:.1e} (tol 1e-4), {secs:.2} s"),
    )
}

fn min_eigenvalue(g: &[f64], n: usize) -> f64 {
    DMatrix::from_row_slice(n, n, g).symmetric_eigenvalues().min()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let rbf = SigKernelConfig::new(StaticKernel::rbf(1.0).unwrap(), 2);
    let mut self_dist: f64 = 0.0;
    let mut symmetric = true;
    for _ in 0..50 {
        let (x, y) = uniform_pair(&mut rng);
        for cfg in [SigKernelConfig::linear(2), rbf] {
            self_dist = self_dist.max(sig_distance(&x, &x, &cfg).unwrap());
            symmetric &= sig_distance(&x, &y, &cfg).unwrap() == sig_distance(&y, &x, &cfg).unwrap();
        }
    }
    let mut min_eig = f64::INFINITY;
    for d in 1..=3 {
        let streams: Vec<_> = (0..8)
            .map(|_| {
                let n = rng.random_range(2..=10);
                uniform_stream(&mut rng, n, d)
            })
            .collect();
        for cfg in [SigKernelConfig::linear(6), rbf] {
            min_eig = min_eig.min(min_eigenvalue(&gram_matrix(&streams, &cfg).unwrap(), 8));
        }
    }
    outcome(
        self_dist <= 1e-8 && symmetric && min_eig >= -1e-6,
        format!("max d(x,x) {self_dist:.1e}, symmetry exact: {symmetric}, min Gram eigenvalue {min_eig:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut sorted_err: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..6.0)).collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys = TimeSeries::univariate(times.clone(), y.clone()).unwrap();
        let xs = TimeSeries::univariate(times, x.clone()).unwrap();
        let w = wasserstein_cm(&ys, &xs, 0.0, 1).unwrap();
        y.sort_by(f64::total_cmp);
        x.sort_by(f64::total_cmp);
        let expect = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
        sorted_err = sorted_err.max((w - expect).abs());
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut brute_err: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=2);
        let rows = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..3).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
        };
        let (y, x) = (rows(&mut rng), rows(&mut rng));
        let ty: Vec<f64> = (0..3).map(|i| i as f64 + 0.5 * rng.random::<f64>()).collect();
        let tx: Vec<f64> = (0..3).map(|i| i as f64 + 0.5 * rng.random::<f64>()).collect();
        let lambda = rng.random_range(0.0..2.0);
        let best = perms
            .iter()
            .map(|p| {
                (0..3)
                    .map(|i| {
                        let e: f64 = y[i].iter().zip(&x[p[i]]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        e + lambda * (ty[i] - tx[p[i]]).abs()
                    })
                    .sum::<f64>()
                    / 3.0
            })
            .fold(f64::INFINITY, f64::min);
        let w = wasserstein_cm(
            &TimeSeries::from_rows(ty, &y).unwrap(),
            &TimeSeries::from_rows(tx, &x).unwrap(),
            lambda,
            1,
        )
        .unwrap();
        brute_err = brute_err.max((w - best).abs());
    }
    outcome(
        sorted_err < 1e-10 && brute_err < 1e-10,
        format!("sorted coupling max err {sorted_err:.1e}, 3-point enumeration max err {brute_err:.1e} (tol 1e-10)"),
    )
}

fn naive_mmd2(x: &[Vec<f64>], y: &[Vec<f64>], bw: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-sq / (2.0 * bw * bw)).exp()
    };
    let (n, m) = (x.len(), y.len());
    let mut xx = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                xx += k(&x[i], &x[j]);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                yy += k(&y[i], &y[j]);
            }
        }
    }
    let mut xy = 0.0;
    for a in x {
        for b in y {
            xy += k(a, b);
        }
    }
    xx / (n * (n - 1)) as f64 + yy / (m * (m - 1)) as f64 - 2.0 * xy / (n * m) as f64
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

fn as_series(rows: &[Vec<f64>]) -> TimeSeries<f64> {
    TimeSeries::from_rows((0..rows.len()).map(|i| i as f64).collect(), rows).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut exact = true;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let (n, m) = (rng.random_range(2..=20), rng.random_range(2..=20));
        let (x, y) = (gaussian_rows(&mut rng, n, d), gaussian_rows(&mut rng, m, d));
        let bw = rng.random_range(0.2..3.0);
        let got = mmd2_unbiased(&as_series(&x), &as_series(&y), &StaticKernel::rbf(bw).unwrap()).unwrap();
        exact &= got == naive_mmd2(&x, &y, bw);
    }
    let k = StaticKernel::rbf(1.0).unwrap();
    let reps: Vec<f64> = (0..200)
        .map(|_| {
            let (x, y) = (gaussian_rows(&mut rng, 50, 1), gaussian_rows(&mut rng, 50, 1));
            mmd2_unbiased(&as_series(&x), &as_series(&y), &k).unwrap()
        })
        .collect();
    let (mean, se) = mean_and_se(&reps);
    outcome(
        exact && mean.abs() < 3.0 * se,
        format!("naive loop exact: {exact}, null mean {mean:.2e} vs 3 SE {:.2e}", 3.0 * se),
    )
}

fn criterion_5() -> Outcome {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut checked, mut worst): (usize, f64) = (0, 0.0);
    while checked < 20 {
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        if !ma2_in_triangle(a, b) {
            continue;
        }
        checked += 1;
        let p = Ma2Params { theta1: a, theta2: b };
        let y = simulate_ma2(p, 10, &mut rng).unwrap();
        let mut bmat = DMatrix::<f64>::zeros(10, 11);
        for t in 1..=10 {
            bmat[(t - 1, t)] = 1.0;
            bmat[(t - 1, t - 1)] = a;
            if t >= 2 {
                bmat[(t - 1, t - 2)] = b;
            }
        }
        let chol = (&bmat * bmat.transpose()).cholesky().unwrap();
        let v = DVector::from_column_slice(&y.values()[1..]);
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let dense = -0.5 * (10.0 * LN_2PI + logdet + v.dot(&chol.solve(&v)));
        worst = worst.max((ma2_log_likelihood(p, &y).unwrap() - dense).abs());
    }
    outcome(worst < 1e-8, format!("max |banded − dense| {worst:.1e} over 20 θ (tol 1e-8)"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let streams: Vec<_> = (0..20).map(|_| uniform_stream(&mut rng, 10, 1)).collect();
    let thetas: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)]).collect();
    let train = TrainingSet::new(streams, thetas, None).unwrap();
    let pipeline = TransformPipeline::new(vec![Transform::TimeAugment, Transform::BasepointAugment]);
    let cfg = SigKernelConfig::new(StaticKernel::rbf(1.0).unwrap(), 0);
    let model = fit_krr_summary(&train, &pipeline, &cfg, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for (s, t) in train.streams.iter().zip(&train.thetas) {
        let pred = model.predict_params(s).unwrap();
        for (p, q) in pred.iter().zip(t) {
            worst = worst.max((p - q).abs());
        }
    }
    outcome(worst < 1e-6, format!("max interpolation error {worst:.1e} at jitter {:.0e} (tol 1e-6)", model.jitter))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let p = GseParams { beta: 1e-2, gamma: 1e-1 };
    let traj = simulate_gse(p, 100, 50.0, &mut rng).unwrap();
    let hyper = GseHyper::default();
    let ((sb, rb), (sg, rg)) = hyper.posterior(&traj).unwrap();
    let draws: Vec<(f64, f64)> =
        (0..100_000).map(|_| gse_exact_posterior_sample(&traj, &hyper, &mut rng).unwrap()).collect();
    let mb = draws.iter().map(|d| d.0).sum::<f64>() / draws.len() as f64;
    let mg = draws.iter().map(|d| d.1).sum::<f64>() / draws.len() as f64;
    let (eb, eg) = ((mb / (sb / rb) - 1.0).abs(), (mg / (sg / rg) - 1.0).abs());

    let times: Vec<f64> = (0..100_000).map(|_| simulate_gse(p, 100, 1e6, &mut rng).unwrap().events[0].t).collect();
    let (m, se) = mean_and_se(&times);
    let expect = 1.0 / (1e-2 * 99.0 + 1e-1);

    let mut conserved = true;
    for _ in 0..1000 {
        let q = GseParams { beta: rng.random_range(0.0..0.05), gamma: rng.random_range(0.0..0.5) };
        let traj = simulate_gse(q, 100, 50.0, &mut rng).unwrap();
        let mut recovered = 0;
        for e in &traj.events {
            if e.kind == EventKind::Recovery {
                recovered += 1;
            }
            conserved &= e.x + e.y + recovered == 100;
        }
    }
    outcome(
        eb < 0.01 && eg < 0.01 && (m - expect).abs() < 3.0 * se && conserved,
        format!(
            "posterior mean rel err ({eb:.1e}, {eg:.1e}), first event {m:.5} vs {expect:.5} (3 SE {:.1e}), conservation: {conserved}",
            3.0 * se
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for (log_r, phi) in [(4.0, 10.0), (3.2, 5.0), (3.8, 15.0)] {
        let p = RickerParams { log_r, phi, sigma: 0.0 };
        let y = simulate_ricker(p, 50, 1.0, &mut rng).unwrap();
        let mut n = 1.0f64;
        let mut exact = 0.0;
        for &obs in y.values() {
            n = (log_r + n.ln() - n).exp();
            let mean = phi * n;
            exact += obs * mean.ln() - mean - (1..=obs as u64).map(|k| (k as f64).ln()).sum::<f64>();
        }
        for particles in [10, 100] {
            worst = worst.max((bootstrap_pf_loglik(&p, &y, 1.0, particles, &mut rng) - exact).abs());
        }
    }
    outcome(worst < 1e-8, format!("max |PF − closed form| {worst:.1e} (tol 1e-8)"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str, out_dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&configs_dir().join(name)).unwrap();
    cfg.out_dir = out_dir.to_path_buf();
    cfg.validate().unwrap();
    cfg
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mmd_of(rows: &[SweepRow], method: Method, seed: u64) -> f64 {
    rows.iter().find(|r| r.method == method && r.seed == seed).map(|r| r.mmd2).unwrap()
}

fn criterion_9(work: &Path) -> Outcome {
    let start = Instant::now();
    let ma2 = load_config("ma2_desk.toml", &work.join("ma2"));
    let ma2_rows = commands::sweep(&ma2, &SweepOptions::from_config(&ma2)).unwrap().rows;
    let meds: Vec<f64> = [Method::SigLeadlag, Method::Mmd, Method::Wass]
        .iter()
        .map(|&m| median(ma2.seeds.iter().map(|&s| mmd_of(&ma2_rows, m, s)).collect()))
        .collect();
    let wins = ma2
        .seeds
        .iter()
        .filter(|&&s| {
            let sig = mmd_of(&ma2_rows, Method::SigLeadlag, s);
            sig <= mmd_of(&ma2_rows, Method::Mmd, s) && sig <= mmd_of(&ma2_rows, Method::Wass, s)
        })
        .count();
    let ma2_secs = start.elapsed().as_secs_f64();

    let gse = load_config("gse_desk.toml", &work.join("gse"));
    let gse_rows = commands::sweep(&gse, &SweepOptions::from_config(&gse)).unwrap().rows;
    let gse_sig = median(gse.seeds.iter().map(|&s| mmd_of(&gse_rows, Method::Sig, s)).collect());
    let gse_wass = median(gse.seeds.iter().map(|&s| mmd_of(&gse_rows, Method::Wass, s)).collect());
    let secs = start.elapsed().as_secs_f64();

    let pass = meds[0] <= meds[1] && meds[0] <= meds[2] && wins >= 6 && gse_sig <= gse_wass && secs <= 3600.0;
    outcome(
        pass,
        format!(
            "MA(2) median MMD² sig+leadlag {:.4} / mmd {:.4} / wass {:.4}, per-seed wins {wins}/10 ({ma2_secs:.0} s); \
             GSE median sig {gse_sig:.4} / wass {gse_wass:.4}; total {secs:.0} s",
            meds[0], meds[1], meds[2]
        ),
    )
}

fn criterion_10(work: &Path) -> Outcome {
    let dir = work.join("determinism");
    let mut cfg = load_config("ma2_desk.toml", &dir);
    cfg.methods = vec![Method::SigLeadlag, Method::Wass];
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("exp.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    commands::simulate(&cfg, None, None).unwrap();
    let bin = env!("CARGO_BIN_EXE_sigabc");
    let mut identical = true;
    let mut checked = Vec::new();
    for method in ["sig_leadlag", "wass"] {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "8"] {
            let out = dir.join(format!("{method}_{threads}.csv"));
            let status = Command::new(bin)
                .args(["infer", "--config", cfg_path.to_str().unwrap(), "--method", method, "--seed", "7"])
                .args(["--n", "2000", "--m", "50", "--out", out.to_str().unwrap()])
                .env("SIGABC_THREADS", threads)
                .env("RUST_LOG", "warn")
                .status()
                .unwrap();
            assert!(status.success());
            outputs.push(std::fs::read(&out).unwrap());
        }
        identical &= outputs.windows(2).all(|w| w[0] == w[1]);
        checked.push(method);
    }
    outcome(identical, format!("particle CSVs byte-identical at 1, 4 and 8 threads for {}: {identical}", checked.join(", ")))
}

fn main() {
    let work = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("signature-kernel oracle equivalence", Box::new(criterion_1)),
        ("distance axioms", Box::new(criterion_2)),
        ("OT correctness", Box::new(criterion_3)),
        ("MMD estimator", Box::new(criterion_4)),
        ("MA(2) likelihood oracle", Box::new(criterion_5)),
        ("KRR interpolation", Box::new(criterion_6)),
        ("GSE exact machinery", Box::new(criterion_7)),
        ("PF oracle", Box::new(criterion_8)),
        ("desk-scale replication", Box::new(|| criterion_9(work.path()))),
        ("determinism", Box::new(|| criterion_10(work.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} ({name}): {} | {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
