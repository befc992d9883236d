//! Impute, refit a fixed model on every completed dataset, pool with Rubin's
//! rule and report average marginal effects.

use raresight::glm::{IrlsOptions, LinkKind};
use raresight::impute::{bootstrap_impute, ImputeOptions};
use raresight::inference::{average_marginal_effects, refit_selected, rubin_pool, AmeOptions};
use raresight::panel::code_onset;
use raresight::simgen::{generate, SimScenario};
use raresight::AnalysisMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (panel, truth) = generate(&SimScenario {
        n_countries: 60,
        true_beta: vec![0.8, -0.6, 0.0, 0.4],
        binary: vec![3],
        missing_rate: 0.15,
        event_rate_target: 0.05,
        seed: 4,
        ..Default::default()
    });
    let onset = code_onset(&panel)?;
    let imps = bootstrap_impute(&panel, &onset, 5, 99, &ImputeOptions::default())?;
    let designs: Vec<AnalysisMatrix> = imps
        .datasets
        .iter()
        .map(|d| AnalysisMatrix::from_panel(d, &onset, &truth.names))
        .collect::<Result<_, _>>()?;

    let terms: Vec<String> = ["x01", "x02", "x04"].map(String::from).to_vec();
    for link in LinkKind::ALL {
        let fits = refit_selected(&designs, &terms, link, &IrlsOptions::default())?;
        let pooled = rubin_pool(&fits)?;
        println!("{link} (M = {})", pooled.m);
        println!("  {:<12} {:>9} {:>8} {:>8} {:>8}", "term", "estimate", "se", "W", "B");
        for j in 0..pooled.terms.len() {
            println!(
                "  {:<12} {:>9.4} {:>8.4} {:>8.5} {:>8.5}",
                pooled.terms[j], pooled.qbar[j], pooled.se[j], pooled.within[j], pooled.between[j]
            );
        }
        let ame = average_marginal_effects(&fits, &designs, &terms, &AmeOptions::default())?;
        for r in &ame.rows {
            println!(
                "  AME {:<8} {:?}  {:+.5} ({:.5})  90% [{:+.5}, {:+.5}]",
                r.term, r.kind, r.ame, r.se, r.ci90.0, r.ci90.1
            );
        }
    }
    Ok(())
}
