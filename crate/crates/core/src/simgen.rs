//! Synthetic rare-event panels with known support, plus a brute-force MLE used
//! as an oracle for the IRLS solver.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::glm::{log_likelihood, LinkKind};
use crate::panel::{Column, ColumnKind, PanelDataset};
use crate::rng::{rng_from_seed, stream_seed};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimScenario {
    pub n_countries: usize,
    pub years_per_country: usize,
    pub start_year: i32,
    /// One coefficient per covariate; zeros are noise columns.
    pub true_beta: Vec<f64>,
    pub link: LinkKind,
    /// Target onset probability among at-risk rows.
    pub event_rate_target: f64,
    /// Share of cells missing in each covariate that is not always observed.
    pub missing_rate: f64,
    /// Covariate correlation is `rho^|j-k|`.
    pub correlation: f64,
    /// The last `always_observed` covariates never go missing; missingness of
    /// the others depends on the last of them.
    pub always_observed: usize,
    /// Covariates dichotomized at zero.
    pub binary: Vec<usize>,
    /// Mean length in years of an existence spell after onset.
    pub mean_spell: f64,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            n_countries: 40,
            years_per_country: 25,
            start_year: 1951,
            true_beta: vec![1.0, -1.0, 0.0, 0.0, 0.0],
            link: LinkKind::Logit,
            event_rate_target: 0.03,
            missing_rate: 0.0,
            correlation: 0.2,
            always_observed: 1,
            binary: Vec::new(),
            mean_spell: 3.0,
            seed: 1,
        }
    }
}

impl SimScenario {
    pub fn p(&self) -> usize {
        self.true_beta.len()
    }

    pub fn covariate_names(&self) -> Vec<String> {
        let width = self.p().to_string().len().max(2);
        (1..=self.p()).map(|j| format!("x{j:0width$}")).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTruth {
    pub link: LinkKind,
    pub intercept: f64,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub support: Vec<String>,
    pub binary: Vec<String>,
    pub n_events: usize,
    pub n_at_risk: usize,
    pub seed: u64,
}

fn toeplitz_cholesky(p: usize, rho: f64) -> DMatrix<f64> {
    let c = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    c.cholesky().expect("correlation matrix must be positive definite").unpack()
}

/// Intercept giving a mean probability of `target` over `eta`.
fn calibrate_intercept(eta: &[f64], link: LinkKind, target: f64) -> f64 {
    let mean_p = |b: f64| eta.iter().map(|e| link.inverse(b + e)).sum::<f64>() / eta.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draw a panel from the scenario.
///
/// Covariates are i.i.d. across rows with Toeplitz correlation across columns.
/// A country not currently holding the institution forms it with probability
/// `F(β0 + xβ)`; it then exists for a geometric spell, during which the coded
/// onset is censored. The intercept is calibrated on the drawn covariates so
/// the mean formation probability equals the target.
pub fn generate(s: &SimScenario) -> (PanelDataset, SimTruth) {
    let p = s.p();
    let n = s.n_countries * s.years_per_country;
    let names = s.covariate_names();
    let mut rng = rng_from_seed(stream_seed(s.seed, "simulate", 0));

    let l = toeplitz_cholesky(p, s.correlation);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        x.row_mut(i).copy_from(&(&l * z).transpose());
    }
    for &j in &s.binary {
        for i in 0..n {
            x[(i, j)] = if x[(i, j)] > 0.0 { 1.0 } else { 0.0 };
        }
    }
    let beta = DVector::from_row_slice(&s.true_beta);
    let lin: Vec<f64> = (&x * &beta).iter().copied().collect();
    let intercept = calibrate_intercept(&lin, s.link, s.event_rate_target);

    let mut countries = Vec::with_capacity(n);
    let mut years = Vec::with_capacity(n);
    let mut existence = Vec::with_capacity(n);
    let (mut events, mut at_risk) = (0, 0);
    let width = s.n_countries.to_string().len().max(3);
    let stay = if s.mean_spell > 1.0 { 1.0 - 1.0 / s.mean_spell } else { 0.0 };
    for c in 0..s.n_countries {
        let mut remaining = 0usize;
        for t in 0..s.years_per_country {
            let i = c * s.years_per_country + t;
            countries.push(format!("C{c:0width$}"));
            years.push(s.start_year + t as i32);
            if remaining > 0 {
                existence.push(Some(1.0));
                remaining -= 1;
                continue;
            }
            if t > 0 {
                at_risk += 1;
            }
            let prob = s.link.inverse(intercept + lin[i]);
            if rng.random::<f64>() < prob {
                existence.push(Some(1.0));
                if t > 0 {
                    events += 1;
                }
                let mut extra = 0;
                while rng.random::<f64>() < stay {
                    extra += 1;
                }
                remaining = extra;
            } else {
                existence.push(Some(0.0));
            }
        }
    }

    let anchor = (s.always_observed > 0 && p > 0).then(|| p - 1);
    let maskable = p.saturating_sub(s.always_observed);
    let mut columns: Vec<Column> = (0..p)
        .map(|j| Column {
            name: names[j].clone(),
            kind: if s.binary.contains(&j) {
                ColumnKind::Binary
            } else {
                ColumnKind::Continuous
            },
            values: x.column(j).iter().map(|&v| Some(v)).collect(),
        })
        .collect();
    if s.missing_rate > 0.0 {
        for col in columns.iter_mut().take(maskable) {
            for i in 0..n {
                let prob = match anchor {
                    Some(a) => {
                        let z = x[(i, a)];
                        (2.0 * s.missing_rate / (1.0 + (-z).exp())).min(1.0)
                    }
                    None => s.missing_rate,
                };
                if rng.random::<f64>() < prob {
                    col.values[i] = None;
                }
            }
        }
    }

    let data = PanelDataset::new(countries, years, "dv_exists", existence, columns)
        .expect("generated keys are unique");
    let truth = SimTruth {
        link: s.link,
        intercept,
        support: names
            .iter()
            .zip(&s.true_beta)
            .filter(|(_, b)| **b != 0.0)
            .map(|(n, _)| n.clone())
            .collect(),
        binary: s.binary.iter().map(|&j| names[j].clone()).collect(),
        names,
        beta: s.true_beta.clone(),
        n_events: events,
        n_at_risk: at_risk,
        seed: s.seed,
    };
    (data, truth)
}

/// Exhaustive maximum likelihood for tiny problems: a grid over `[-10, 10]^k`
/// at spacing 0.5, successive zoomed grids around the incumbent, then a
/// compass search at the final 1e-3 resolution. `x` includes the intercept
/// column and has at most three columns.
pub fn brute_force_mle(x: &DMatrix<f64>, y: &[f64], link: LinkKind) -> DVector<f64> {
    let k = x.ncols();
    assert!((1..=3).contains(&k), "brute force supports 1 to 3 coefficients");
    let ll = |b: &[f64]| {
        let eta: Vec<f64> = (0..x.nrows())
            .map(|i| (0..k).map(|j| x[(i, j)] * b[j]).sum())
            .collect();
        log_likelihood(y, &eta, link)
    };
    let grid_search = |center: &[f64], half: f64, step: f64| -> (Vec<f64>, f64) {
        let pts = (2.0 * half / step).round() as i64;
        let axis = |c: f64| -> Vec<f64> {
            (0..=pts)
                .map(|i| (c - half + i as f64 * step).clamp(-10.0, 10.0))
                .collect()
        };
        let axes: Vec<Vec<f64>> = center.iter().map(|&c| axis(c)).collect();
        let mut best = (center.to_vec(), f64::NEG_INFINITY);
        let mut idx = vec![0usize; k];
        loop {
            let b: Vec<f64> = (0..k).map(|j| axes[j][idx[j]]).collect();
            let v = ll(&b);
            if v > best.1 {
                best = (b, v);
            }
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == k {
                    return best;
                }
            }
        }
    };

    let (mut best, mut best_ll) = grid_search(&vec![0.0; k], 10.0, 0.5);
    let mut step: f64 = 0.5;
    while step > 1e-3 {
        let next = (step / 4.0).max(1e-3);
        let (b, v) = grid_search(&best, 2.0 * step, next);
        if v >= best_ll {
            best = b;
            best_ll = v;
        }
        step = next;
    }
    loop {
        let mut improved = false;
        for j in 0..k {
            for dir in [-1.0, 1.0] {
                let mut b = best.clone();
                b[j] = (b[j] + dir * 1e-3).clamp(-10.0, 10.0);
                let v = ll(&b);
                if v > best_ll {
                    best = b;
                    best_ll = v;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    DVector::from_vec(best)
}
