use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sigabc::discrepancy::{mmd2_unbiased, wasserstein_cm};
use sigabc::evaluate::{mmd2_between_posteriors, pooled_median_bandwidth, SampleSet};
use sigabc::sigkernel::StaticKernel;
use sigabc::streams::TimeSeries;

fn kernel(a: &[f64], b: &[f64], bw: Option<f64>) -> f64 {
    match bw {
        None => a.iter().zip(b).map(|(p, q)| p * q).sum(),
        Some(s) => {
            let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
            (-sq / (2.0 * s * s)).exp()
        }
    }
}

/// The estimator written out term by term.
fn naive_mmd2(x: &[Vec<f64>], y: &[Vec<f64>], bw: Option<f64>) -> f64 {
    let (n, m) = (x.len(), y.len());
    let mut xx = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                xx += kernel(&x[i], &x[j], bw);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                yy += kernel(&y[i], &y[j], bw);
            }
        }
    }
    let mut xy = 0.0;
    for a in x {
        for b in y {
            xy += kernel(a, b, bw);
        }
    }
    xx / (n * (n - 1)) as f64 + yy / (m * (m - 1)) as f64 - 2.0 * xy / (n * m) as f64
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

fn series(rows: &[Vec<f64>]) -> TimeSeries<f64> {
    TimeSeries::from_rows((0..rows.len()).map(|i| i as f64).collect(), rows).unwrap()
}

#[test]
fn mmd_matches_naive_loops_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let (n, m) = (rng.random_range(2..=20), rng.random_range(2..=20));
        let (x, y) = (gaussian_rows(&mut rng, n, d, 0.0), gaussian_rows(&mut rng, m, d, 0.3));
        let bw = rng.random_range(0.2..3.0);
        let lin = mmd2_unbiased(&series(&x), &series(&y), &StaticKernel::Linear).unwrap();
        assert_eq!(lin, naive_mmd2(&x, &y, None));
        let rbf = mmd2_unbiased(&series(&x), &series(&y), &StaticKernel::rbf(bw).unwrap()).unwrap();
        assert_eq!(rbf, naive_mmd2(&x, &y, Some(bw)));
    }
}

#[test]
fn mmd_is_unbiased_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let k = StaticKernel::rbf(1.0).unwrap();
    let vals: Vec<f64> = (0..200)
        .map(|_| {
            let (x, y) = (gaussian_rows(&mut rng, 50, 1, 0.0), gaussian_rows(&mut rng, 50, 1, 0.0));
            mmd2_unbiased(&series(&x), &series(&y), &k).unwrap()
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
}

#[test]
fn posterior_mmd_agrees_with_series_mmd() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let (a, b) = (gaussian_rows(&mut rng, 30, 2, 0.0), gaussian_rows(&mut rng, 40, 2, 0.5));
        let (sa, sb) = (SampleSet::from_rows(&a).unwrap(), SampleSet::from_rows(&b).unwrap());
        let bw = pooled_median_bandwidth(&sa, &sb).unwrap();
        let direct = mmd2_unbiased(&series(&a), &series(&b), &StaticKernel::rbf(bw).unwrap()).unwrap();
        assert_eq!(mmd2_between_posteriors(&sa, &sb).unwrap(), direct);
    }
}

#[test]
fn posterior_mmd_has_no_bias_for_equal_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let vals: Vec<f64> = (0..100)
        .map(|_| {
            let a = SampleSet::from_rows(&gaussian_rows(&mut rng, 500, 1, 0.0)).unwrap();
            let b = SampleSet::from_rows(&gaussian_rows(&mut rng, 500, 1, 0.0)).unwrap();
            mmd2_between_posteriors(&a, &b).unwrap()
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt());
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn wasserstein_equals_best_permutation_at_three_points() {
    // With equal uniform masses the optimum is attained at a permutation.
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let perms = permutations(3);
    for _ in 0..200 {
        let d = rng.random_range(1..=2);
        let (y, x) = (gaussian_rows(&mut rng, 3, d, 0.0), gaussian_rows(&mut rng, 3, d, 0.5));
        let ty: Vec<f64> = (0..3).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        let tx: Vec<f64> = (0..3).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        let ys = TimeSeries::from_rows(ty.clone(), &y).unwrap();
        let xs = TimeSeries::from_rows(tx.clone(), &x).unwrap();
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
        let w = wasserstein_cm(&ys, &xs, lambda, 1).unwrap();
        assert!((w - best).abs() < 1e-10, "{w} vs {best}");
    }
}

#[test]
fn wasserstein_univariate_sorted_coupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..6.0)).collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let w = wasserstein_cm(
            &TimeSeries::univariate(times.clone(), y.clone()).unwrap(),
            &TimeSeries::univariate(times, x.clone()).unwrap(),
            0.0,
            1,
        )
        .unwrap();
        y.sort_by(f64::total_cmp);
        x.sort_by(f64::total_cmp);
        let expect = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
        assert!((w - expect).abs() < 1e-10);
    }
}
