//! Event-stratified k-fold CV for the lasso penalty.

use raresight::glm::LinkKind;
use raresight::panel::code_onset;
use raresight::selection::{cv_choose_lambda, make_stratified_folds, CvOptions};
use raresight::simgen::{generate, SimScenario};
use raresight::AnalysisMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 31 events over three folds deal out as 11/10/10
    let mut y = vec![0.0; 500];
    y.iter_mut().take(31).for_each(|v| *v = 1.0);
    let folds = make_stratified_folds(&y, 3, 1)?;
    println!("fold events {:?}, fold sizes {:?}", folds.event_counts(&y), folds.sizes());

    let mut beta = vec![0.0; 10];
    beta[1] = 1.0;
    beta[6] = 0.8;
    let (panel, truth) = generate(&SimScenario {
        n_countries: 50,
        true_beta: beta,
        event_rate_target: 0.04,
        seed: 8,
        ..Default::default()
    });
    let onset = code_onset(&panel)?;
    let a = AnalysisMatrix::from_panel(&panel, &onset, &truth.names)?;
    let r = cv_choose_lambda(&a, LinkKind::Logit, &CvOptions { seed: 17, ..Default::default() })?;
    println!("\n{} rows, {} events, truth {:?}", a.n(), a.n_events(), truth.support);
    println!("chosen lambda {:.5} (index {}), active {:?}", r.chosen_lambda, r.chosen_index, r.active);
    println!("max KKT residual over all fitted points {:.1e}", r.max_kkt_violation());
    for l in (0..r.lambdas.len()).step_by(10) {
        let mark = if l == r.chosen_index { " <" } else { "" };
        println!("  {:>9.6}  {:.5} ± {:.5}{mark}", r.lambdas[l], r.mean_dev[l], r.se_dev[l]);
    }
    Ok(())
}
