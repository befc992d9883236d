use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raresight::report::{run_through, PipelineConfig, PipelineError, Stage};
use raresight::simgen::{generate, SimScenario};
use raresight::{panel, LinkKind, Selector};

#[derive(Parser)]
#[command(name = "raresight", version, about = "Rare-event selection and inference on country-year panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, onset-code and transform the panel.
    Ingest(Common),
    /// Ingest, then write the imputed datasets and EM log.
    Impute(Common),
    /// Through consensus selection.
    Select(Common),
    /// Through pooled refits and coefficient tables.
    Fit(Common),
    /// Through average marginal effects.
    Ame(Common),
    /// The full pipeline.
    Run(Common),
    /// Write a synthetic panel and its truth record.
    Simulate(SimArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these links (repeatable or comma separated).
    #[arg(long, value_delimiter = ',')]
    link: Vec<LinkKind>,
    #[arg(long, value_delimiter = ',')]
    selector: Vec<Selector>,
    /// Existence column to onset-code.
    #[arg(long)]
    dv: Option<String>,
}

#[derive(Args)]
struct SimArgs {
    /// Scenario TOML; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "sim")]
    out: PathBuf,
    #[arg(long)]
    link: Option<LinkKind>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::from_file(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if !self.link.is_empty() {
            cfg.selection.links = self.link.clone();
        }
        if !self.selector.is_empty() {
            cfg.selection.selectors = self.selector.clone();
        }
        if let Some(dv) = &self.dv {
            cfg.input.schema.dv = dv.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn simulate(a: &SimArgs) -> Result<(), PipelineError> {
    let err = |e: String| PipelineError {
        stage: Stage::Write,
        message: e,
    };
    let mut s: SimScenario = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| err(e.to_string()))?;
            toml::from_str(&text).map_err(|e| PipelineError {
                stage: Stage::Config,
                message: e.to_string(),
            })?
        }
        None => SimScenario::default(),
    };
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(l) = a.link {
        s.link = l;
    }
    let (data, truth) = generate(&s);
    fs::create_dir_all(&a.out).map_err(|e| err(e.to_string()))?;
    let f = fs::File::create(a.out.join("sim_panel.csv")).map_err(|e| err(e.to_string()))?;
    panel::write_panel(&data, None, f).map_err(|e| err(e.to_string()))?;
    let json = serde_json::to_string_pretty(&truth).map_err(|e| err(e.to_string()))?;
    fs::write(a.out.join("sim_truth.json"), json + "\n").map_err(|e| err(e.to_string()))?;
    let mut cfg = PipelineConfig::default();
    cfg.input.path = PathBuf::from("sim_panel.csv");
    cfg.seed = s.seed;
    // outcomes are generated from same-year covariates
    cfg.transforms.lag = 0;
    cfg.output_dir = a.out.join("report");
    fs::write(a.out.join("pipeline.toml"), cfg.to_toml_string()).map_err(|e| err(e.to_string()))?;
    println!(
        "wrote {} rows ({} onsets) to {}",
        data.n_rows(),
        truth.n_events,
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    raresight::init_threads_from_env();
    let cli = Cli::parse();
    let (common, last) = match &cli.command {
        Command::Ingest(c) => (c, Stage::Ingest),
        Command::Impute(c) => (c, Stage::Impute),
        Command::Select(c) => (c, Stage::Select),
        Command::Fit(c) => (c, Stage::Fit),
        Command::Ame(c) | Command::Run(c) => (c, Stage::Ame),
        Command::Simulate(a) => {
            return match simulate(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
    };
    match common.load().and_then(|cfg| run_through(&cfg, last)) {
        Ok(bundle) => {
            for m in &bundle.models {
                println!("{}: {}", m.tag, m.retained.join(", "));
            }
            println!("outputs in {}", bundle.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &PipelineError) -> ExitCode {
    eprintln!("error: {e}");
    eprintln!("{}", e.to_json());
    ExitCode::from(2)
}
