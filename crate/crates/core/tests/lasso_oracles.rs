use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use raresight::glm::{irls_fit, IrlsOptions, LinkKind};
use raresight::lasso::{
    fit_path, lambda_max, penalized_objective, soft_threshold, standardize, PathOptions, StandardizedDesign,
};
use raresight::rng::rng_from_seed;

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("c{j}")).collect()
}

fn sim(n: usize, p: usize, seed: u64, link: LinkKind) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = (0..n)
        .map(|i| {
            let eta = -1.0 + 0.8 * x[(i, 0)] - 0.6 * x[(i, 1 % p)];
            f64::from(u8::from(rng.random::<f64>() < link.inverse(eta)))
        })
        .collect();
    (x, y)
}

#[test]
fn unpenalized_end_of_path_matches_irls() {
    for seed in 0..4u64 {
        for link in LinkKind::ALL {
            let (x, y) = sim(500, 10, seed, link);
            let sd = standardize(&x, &names(10)).unwrap();
            let mut lambdas = raresight::lasso::lambda_grid(lambda_max(&sd, &y, link).unwrap(), 20, 1e-3);
            lambdas.push(0.0);
            let path = fit_path(&sd, &y, link, &PathOptions { lambdas: Some(lambdas), ..Default::default() }).unwrap();
            let fit = irls_fit(&x.clone().insert_column(0, 1.0), &y, link, &IrlsOptions::default()).unwrap();
            let diff = (path.coefs.last().unwrap() - &fit.beta).amax();
            assert!(diff < 1e-6, "seed {seed} {link}: {diff:e}");
        }
    }
}

/// Smallest λ at which the null model is optimal, found by bisection on the
/// sign of one-sided directional derivatives of the penalized objective.
fn bisect_lambda_max(sd: &StandardizedDesign, y: &[f64], link: LinkKind) -> f64 {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let b0 = link.link(ybar);
    let null_optimal = |lambda: f64| {
        let f0 = penalized_objective(sd, y, link, b0, &vec![0.0; sd.p()], lambda);
        let d = 1e-7;
        (0..sd.p()).all(|j| {
            [-1.0, 1.0].iter().all(|s| {
                let mut b = vec![0.0; sd.p()];
                b[j] = s * d;
                penalized_objective(sd, y, link, b0, &b, lambda) >= f0
            })
        })
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    assert!(null_optimal(hi));
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if null_optimal(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[test]
fn lambda_max_agrees_with_bisection_on_a_toy() {
    let x = DMatrix::from_row_slice(4, 2, &[0.5, 1.0, 1.5, -0.3, -1.0, 0.7, 2.0, 0.1]);
    let y = [1.0, 0.0, 0.0, 1.0];
    for link in LinkKind::ALL {
        let sd = standardize(&x, &names(2)).unwrap();
        let lmax = lambda_max(&sd, &y, link).unwrap();
        let oracle = bisect_lambda_max(&sd, &y, link);
        assert!((lmax - oracle).abs() < 1e-5 * lmax, "{link}: {lmax} vs {oracle}");

        let at = |l: f64| {
            let p = fit_path(&sd, &y, link, &PathOptions { lambdas: Some(vec![l]), ..Default::default() }).unwrap();
            p.std_coefs[0].iter().skip(1).filter(|b| **b != 0.0).count()
        };
        assert_eq!(at(1.01 * lmax), 0);
        assert!(at(0.99 * lmax) >= 1);
    }
}

#[test]
fn single_column_lambda_max_formula() {
    let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
    let y = [1.0, 0.0, 0.0, 0.0];
    let sd = standardize(&x, &names(1)).unwrap();
    let xs = sd.xs.column(0);
    let expected = xs.iter().zip(&y).map(|(a, b)| a * (b - 0.25)).sum::<f64>().abs() / 4.0;
    assert!((lambda_max(&sd, &y, LinkKind::Logit).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn one_sweep_on_orthonormal_design_is_soft_thresholded_score() {
    // three Hadamard columns: mean 0, variance 1, mutually orthogonal
    let x = DMatrix::from_row_slice(
        8,
        3,
        &[
            1., 1., 1., -1., 1., -1., 1., -1., -1., -1., -1., 1., 1., 1., 1., -1., 1., -1., 1., -1., -1., -1., -1., 1.,
        ],
    );
    let y = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let sd = standardize(&x, &names(3)).unwrap();
    assert_eq!(sd.xs, x);
    let n = 8.0;
    let pbar = 3.0 / 8.0;
    let w = pbar * (1.0 - pbar);
    let lmax = lambda_max(&sd, &y, LinkKind::Logit).unwrap();
    let lambda = 0.5 * lmax;
    let opts = PathOptions {
        lambdas: Some(vec![lambda]),
        max_outer: 1,
        ..Default::default()
    };
    let path = fit_path(&sd, &y, LinkKind::Logit, &opts).unwrap();
    for j in 0..3 {
        let g: f64 = (0..8).map(|i| x[(i, j)] * (y[i] - pbar)).sum::<f64>() / n;
        let expected = soft_threshold(g, lambda) / w;
        assert!((path.std_coefs[0][j + 1] - expected).abs() < 1e-12, "column {j}");
    }
}

#[test]
fn every_path_point_passes_kkt_and_objective_never_rises() {
    for seed in 0..3u64 {
        for link in LinkKind::ALL {
            let (x, y) = sim(300, 15, 40 + seed, link);
            let sd = standardize(&x, &names(15)).unwrap();
            let path = fit_path(&sd, &y, link, &PathOptions::default()).unwrap();
            assert!(path.kkt_violation.iter().all(|&v| v <= 1e-5), "{:?}", path.kkt_violation);
            assert!(path.converged.iter().all(|&c| c));
            for trace in &path.objective_traces {
                for w in trace.windows(2) {
                    assert!(w[1] <= w[0], "objective rose: {w:?}");
                }
            }
            assert!(path.std_coefs[0].iter().skip(1).all(|&b| b == 0.0));
            for k in 0..path.len() {
                for j in 0..15 {
                    let nonzero = path.std_coefs[k][j + 1] != 0.0;
                    assert_eq!(nonzero, path.active_sets[k].contains(&j));
                }
            }
        }
    }
}

#[test]
fn path_is_continuous_on_a_well_conditioned_toy() {
    let (x, y) = sim(400, 5, 77, LinkKind::Logit);
    let sd = standardize(&x, &names(5)).unwrap();
    let path = fit_path(&sd, &y, LinkKind::Logit, &PathOptions::default()).unwrap();
    for k in 1..path.len() {
        let dl = path.lambdas[k - 1] - path.lambdas[k];
        let jump = (&path.std_coefs[k] - &path.std_coefs[k - 1]).rows(1, 5).amax();
        assert!(jump < 10.0 * dl * 5.0, "k {k}: jump {jump} vs bound {}", 50.0 * dl);
    }
}

#[test]
fn row_permutation_leaves_the_path_unchanged() {
    let (x, y) = sim(250, 6, 9, LinkKind::Cloglog);
    let perm: Vec<usize> = (0..250).map(|i| (i * 97) % 250).collect();
    let xp = x.select_rows(perm.iter());
    let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let a = fit_path(&standardize(&x, &names(6)).unwrap(), &y, LinkKind::Cloglog, &PathOptions::default()).unwrap();
    let b = fit_path(&standardize(&xp, &names(6)).unwrap(), &yp, LinkKind::Cloglog, &PathOptions::default()).unwrap();
    for k in 0..a.len() {
        assert!((&a.coefs[k] - &b.coefs[k]).amax() < 1e-7, "k {k}");
    }
}

#[test]
fn standardization_round_trip_and_moments() {
    let (x, _) = sim(120, 4, 3, LinkKind::Logit);
    let x = x.map(|v| 3.0 * v + 10.0);
    let sd = standardize(&x, &names(4)).unwrap();
    for j in 0..4 {
        let c = sd.xs.column(j);
        let mean = c.sum() / 120.0;
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 120.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }
    assert!((sd.destandardize() - &x).amax() < 1e-12);
    let constant = DMatrix::from_element(5, 1, 2.0);
    assert!(standardize(&constant, &names(1)).is_err());
}

#[test]
fn path_csv_has_long_format() {
    let (x, y) = sim(100, 2, 5, LinkKind::Logit);
    let sd = standardize(&x, &names(2)).unwrap();
    let path = fit_path(&sd, &y, LinkKind::Logit, &PathOptions { n_lambda: 4, ..Default::default() }).unwrap();
    let mut buf = Vec::new();
    path.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,term,coefficient"));
    assert_eq!(lines.count(), 4 * 3);
}
