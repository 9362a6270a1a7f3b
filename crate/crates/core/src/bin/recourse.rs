use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use recourse_core::fixture::{write_credit, CREDIT_ROWS, CREDIT_SEED};
use recourse_core::pipeline::{compare, preset, run, write_compare_csv, Method, RunConfig, RunError};
use recourse_core::Error;

#[derive(Parser)]
#[command(name = "recourse", version, about = "Global counterfactual explanations for tabular classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run generation, evaluation and optimization once.
    Run(RunArgs),
    /// Run several configs on one dataset and model and merge their traces.
    Compare {
        /// Run config files (TOML), at least two.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Merged trace CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic credit dataset, schema and model.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CREDIT_ROWS)]
        rows: usize,
        #[arg(long, default_value_t = CREDIT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Base config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named hyperparameters (german-og, german-rl, german-then, heloc-og, heloc-rl, heloc-then).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long = "r-prime")]
    r_prime: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    eps1: Option<usize>,
    #[arg(long)]
    eps2: Option<usize>,
    #[arg(long)]
    eps3: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Four-term objective weights, `l1,l2,l3`.
    #[arg(long = "four-term", value_delimiter = ',', num_args = 3)]
    four_term: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "budget-seconds")]
    budget_seconds: Option<f64>,
    /// Skip optimization unless the ground set reaches this accuracy (%).
    #[arg(long = "target-acc")]
    target_acc: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "sd-file")]
    sd_file: Option<PathBuf>,
    #[arg(long = "cost-table")]
    cost_table: Option<PathBuf>,
    #[arg(long = "ground-set")]
    ground_set: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn missing(flag: &str) -> Error {
    Error::Config(format!("missing --{flag}"))
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new(
                self.dataset.clone().ok_or_else(|| missing("dataset"))?,
                self.schema.clone().ok_or_else(|| missing("schema"))?,
                self.model.clone().ok_or_else(|| missing("model"))?,
                self.out.clone().ok_or_else(|| missing("out"))?,
            ),
        };
        if let Some(name) = &self.preset {
            cfg.apply_preset(preset(name)?);
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    cfg.$field = self.$field;
                }
            )*};
        }
        set!(dataset, schema, model, out, p, eps1, eps2, eps3, lambda, seed, budget_seconds);
        set_opt!(q, r, r_prime, s, target_acc, sd_file, cost_table, ground_set, workers);
        if let Some(m) = &self.method {
            cfg.method = m.parse::<Method>()?;
        }
        if let Some(ls) = self.four_term {
            cfg.four_term = Some([ls[0], ls[1], ls[2]]);
        }
        Ok(cfg)
    }
}

fn report_error(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.into_config() {
                Ok(c) => c,
                Err(e) => return report_error(&RunError::Config(e)),
            };
            match run(&cfg) {
                Ok(outcome) => {
                    let r = &outcome.report;
                    println!(
                        "seed {} | |V| {} | acc(V) {:.1}% | acc(R) {:.1}% | {} rules | {}",
                        cfg.seed,
                        r.ground_set_size.unwrap_or(0),
                        r.acc_v.unwrap_or(0.0),
                        r.acc_r.unwrap_or(0.0),
                        r.recourse_size.unwrap_or(0),
                        r.termination.map(|t| t.to_string()).unwrap_or_else(|| "skipped".into()),
                    );
                    println!("artifacts in {}", cfg.out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => report_error(&e),
            }
        }
        Command::Compare { configs, out } => {
            let loaded: Result<Vec<RunConfig>, Error> = configs.iter().map(RunConfig::load).collect();
            let loaded = match loaded {
                Ok(c) => c,
                Err(e) => return report_error(&RunError::Config(e)),
            };
            let table = match compare(&loaded) {
                Ok(t) => t,
                Err(e) => return report_error(&e),
            };
            let written = match out {
                Some(path) => std::fs::File::create(&path)
                    .map_err(|e| Error::Io { path, source: e })
                    .and_then(|f| write_compare_csv(&table, f)),
                None => write_compare_csv(&table, std::io::stdout().lock()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => report_error(&RunError::Stage {
                    stage: "output",
                    source: e,
                }),
            }
        }
        Command::Fixture { out, rows, seed } => match write_credit(&out, rows, seed) {
            Ok(()) => {
                println!("wrote fixture to {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => report_error(&RunError::Stage {
                stage: "fixture",
                source: e,
            }),
        },
    }
}
