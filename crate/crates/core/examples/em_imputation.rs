//! Bootstrap-EM imputation of a simulated panel with MAR gaps.

use raresight::impute::{bootstrap_impute, em_mvn, EmOptions, ImputeOptions, IncompleteMatrix};
use raresight::panel::code_onset;
use raresight::simgen::{generate, SimScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = SimScenario {
        missing_rate: 0.2,
        always_observed: 1,
        seed: 11,
        ..Default::default()
    };
    let (data, _) = generate(&scenario);
    let onset = code_onset(&data)?;

    let cols: Vec<Vec<Option<f64>>> = data.columns.iter().map(|c| c.values.clone()).collect();
    let incomplete = IncompleteMatrix::from_columns(&cols);
    let (params, trace) = em_mvn(&incomplete, &EmOptions::default())?;
    println!(
        "EM on {} x {} ({} missing cells): {} iterations, final delta {:.2e}",
        incomplete.nrows(),
        incomplete.ncols(),
        incomplete.n_missing(),
        trace.iterations(),
        trace.deltas.last().copied().unwrap_or(0.0)
    );
    println!("loglik trace head: {:?}", &trace.loglik[..trace.loglik.len().min(5)]);
    println!("means: {:.3?}", params.mean.as_slice());

    let set = bootstrap_impute(&data, &onset, 5, 2024, &ImputeOptions::default())?;
    println!("\nimputation  seed                  mean(x01)");
    for (k, d) in set.datasets.iter().enumerate() {
        let v = &d.columns[0].values;
        let mean = v.iter().flatten().sum::<f64>() / v.len() as f64;
        println!("{:>10}  {:<20}  {mean:+.4}", k + 1, set.seeds[k]);
    }
    set.write_em_log(std::io::sink())?;
    Ok(())
}
