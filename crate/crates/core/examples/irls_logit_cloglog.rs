//! Logit and cloglog maximum likelihood by IRLS, checked against the
//! brute-force oracle on a tiny problem.

use nalgebra::DMatrix;
use raresight::glm::{irls_fit, IrlsOptions, LinkKind};
use raresight::panel::code_onset;
use raresight::simgen::{brute_force_mle, generate, SimScenario};
use raresight::AnalysisMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = SimScenario {
        n_countries: 80,
        true_beta: vec![0.9, -0.7, 0.0],
        event_rate_target: 0.05,
        seed: 3,
        ..Default::default()
    };
    let (panel, truth) = generate(&scenario);
    let onset = code_onset(&panel)?;
    let design = AnalysisMatrix::from_panel(&panel, &onset, &truth.names)?;
    println!("{} rows, {} events; true intercept {:.3}, beta {:?}", design.n(), design.n_events(), truth.intercept, truth.beta);

    for link in LinkKind::ALL {
        let fit = irls_fit(&design.with_intercept(), &design.y, link, &IrlsOptions::default())?
            .with_terms(design.terms());
        println!("\n{link}: {} iterations, loglik {:.4}, AIC {:.3}", fit.iters, fit.loglik, fit.aic);
        for (j, t) in fit.terms.iter().enumerate() {
            println!("  {t:<12} {:>9.4}  ({:.4})", fit.beta[j], fit.std_errors()[j]);
        }
    }

    let x = DMatrix::from_row_slice(8, 2, &[1., -1.2, 1., -0.4, 1., 0.1, 1., 0.3, 1., 0.8, 1., -0.7, 1., 1.5, 1., 0.2]);
    let y = [0., 1., 0., 0., 1., 0., 1., 1.];
    let irls = irls_fit(&x, &y, LinkKind::Logit, &IrlsOptions::default())?;
    let brute = brute_force_mle(&x, &y, LinkKind::Logit);
    println!("\ntiny problem: irls {:.4?} vs brute force {:.4?}", irls.beta.as_slice(), brute.as_slice());
    Ok(())
}
