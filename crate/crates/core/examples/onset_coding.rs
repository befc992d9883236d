//! Onset coding and panel transforms on a hand-written panel.
//!
//! Run with `cargo run --example onset_coding`.

use raresight::panel::{self, read_panel, Schema};

const PANEL: &str = "\
country,year,dv_exists,repression,coup
A,1960,0,0.5,0
A,1961,0,0.7,1
A,1962,1,1.1,0
A,1963,1,1.0,0
A,1964,0,0.9,0
B,1990,0,2.0,1
B,1992,1,2.4,0
B,1993,1,NA,0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = read_panel(PANEL.as_bytes(), &Schema::default())?;
    let onset = panel::code_onset(&data)?;

    let data = panel::first_difference(&data, &["repression".into()])?;
    let data = panel::years_since(&data, &["coup".into()])?;
    let lagged = panel::lag_covariates(&data, 1)?;

    println!("{} rows, {} onsets, {} rows at risk", data.n_rows(), onset.n_events(), onset.n_observed());
    for c in &lagged.columns {
        println!("  {:<14} {:<10} missing {}", c.name, c.kind.to_string(), c.n_missing());
    }
    println!();
    // B's 1992 entry follows a gap, so it is not an onset
    panel::write_panel(&lagged, Some(&onset), std::io::stdout())?;
    Ok(())
}
