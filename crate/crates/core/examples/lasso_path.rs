//! A full lasso path for both links.

use raresight::glm::LinkKind;
use raresight::lasso::{fit_path, standardize, PathOptions};
use raresight::panel::code_onset;
use raresight::simgen::{generate, SimScenario};
use raresight::AnalysisMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut beta = vec![0.0; 12];
    beta[0] = 1.0;
    beta[4] = -0.8;
    let (panel, truth) = generate(&SimScenario {
        n_countries: 60,
        true_beta: beta,
        event_rate_target: 0.06,
        seed: 5,
        ..Default::default()
    });
    let onset = code_onset(&panel)?;
    let a = AnalysisMatrix::from_panel(&panel, &onset, &truth.names)?;
    let design = standardize(&a.x, &a.names)?;

    for link in LinkKind::ALL {
        let path = fit_path(&design, &a.y, link, &PathOptions { n_lambda: 40, ..Default::default() })?;
        println!("{link}: lambda_max {:.5}, worst KKT residual {:.1e}", path.lambda_max, path.kkt_violation.iter().fold(0.0f64, |m, v| m.max(*v)));
        let mut last = usize::MAX;
        for k in 0..path.len() {
            let active = path.active_names(k);
            if active.len() != last {
                println!("  lambda {:>9.6}  {:>2} active  {}", path.lambdas[k], active.len(), active.join(" "));
                last = active.len();
            }
        }
    }
    let path = fit_path(&design, &a.y, LinkKind::Logit, &PathOptions { n_lambda: 3, ..Default::default() })?;
    println!("\nlong-format coefficients:");
    path.write_csv(std::io::stdout())?;
    Ok(())
}
