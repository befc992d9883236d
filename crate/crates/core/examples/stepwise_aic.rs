//! Forward stepwise selection by AIC.

use raresight::glm::{IrlsOptions, LinkKind};
use raresight::panel::code_onset;
use raresight::selection::stepwise_aic;
use raresight::simgen::{generate, SimScenario};
use raresight::AnalysisMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (panel, truth) = generate(&SimScenario {
        n_countries: 60,
        true_beta: vec![1.0, 0.0, -0.9, 0.0, 0.0, 0.0],
        event_rate_target: 0.05,
        seed: 21,
        ..Default::default()
    });
    let onset = code_onset(&panel)?;
    let a = AnalysisMatrix::from_panel(&panel, &onset, &truth.names)?;
    for link in LinkKind::ALL {
        let r = stepwise_aic(&a, link, &a.names, &IrlsOptions::default())?;
        println!("{link}: selected {:?}", r.selected);
        println!("  AIC trace {:.3?}", r.aic_trace);
    }
    println!("truth: {:?}", truth.support);
    Ok(())
}
