use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bage::data::{open_dataset, Dataset, Format};
use bage::eval::{evaluate_classification, evaluate_clustering};
use bage::experiment::{parse_grid_entry, read_embedding, run_experiment, sweep, RunSpec};
use bage::model::ModelKind;
use bage::train::TrainConfig;
use bage::{Error, Result};

const SEED_ENV: &str = "AGAE_SEED";

#[derive(Parser)]
#[command(name = "bage", version, about = "Graph autoencoders with adaptive graph learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and evaluate its embedding.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train over a parameter grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Grid entry `key=v1,v2,…`; keys: lambda, beta, alpha, tau, k_init,
        /// missing_ratio. Repeat for a Cartesian product.
        #[arg(long = "grid", value_name = "KEY=VALUES")]
        grid: Vec<String>,
        /// Maximum number of runs in flight.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score an existing embedding CSV against the dataset labels.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Headerless embedding CSV, one row per node.
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Citation,
    Csv,
}

#[derive(Args)]
struct DataArgs {
    /// `blobs`, `planted`, a CSV file, or a citation `.content`/`.cites` stem or directory.
    #[arg(long)]
    dataset: String,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let format = self.format.map(|f| match f {
            FormatArg::Citation => Format::Citation,
            FormatArg::Csv => Format::Csv,
        });
        let ds = open_dataset(&self.dataset, format)?;
        log::info!(
            "{}: {} nodes, {} features, {} classes, {}",
            ds.name,
            ds.n(),
            ds.features.ncols(),
            ds.classes(),
            match &ds.edges {
                Some(e) => format!("{} edge records", e.len()),
                None => "no graph".into(),
            }
        );
        Ok(ds)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "bage")]
    model: ModelKind,
    #[arg(long)]
    epochs: Option<usize>,
    /// Defaults to 1e-4 for bage and 1e-3 for vbage.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    k_init: Option<usize>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    missing_ratio: f64,
    /// Overridden by the AGAE_SEED environment variable when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn spec(&self) -> Result<RunSpec> {
        let mut c = TrainConfig::for_model(self.model);
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { c.$field = v; })*};
        }
        set!(epochs, lr, lambda, nu, beta, alpha, tau, k_init, k_min, k_max, hidden, embed);
        c.seed = seed_override()?.unwrap_or(self.seed);
        c.validate()?;
        let mut spec = RunSpec::new(c, self.missing_ratio);
        spec.restarts = self.restarts;
        Ok(spec)
    }
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { run } => {
            let spec = run.spec()?;
            let ds = run.data.load()?;
            let r = run_experiment(&ds, &spec, Some(&run.out))?;
            print_json(&serde_json::json!({
                "run_id": r.run_id,
                "acc_mean": r.acc_mean(),
                "nmi_mean": r.nmi_mean(),
                "f1": r.f1,
                "final_loss": r.losses.last(),
                "seconds": r.seconds,
                "out": run.out,
            }))
        }
        Command::Sweep { run, grid, jobs } => {
            let spec = run.spec()?;
            let grid = grid.iter().map(|g| parse_grid_entry(g)).collect::<Result<Vec<_>>>()?;
            if jobs == 0 {
                return Err(Error::Config("--jobs must be at least 1".into()));
            }
            let ds = run.data.load()?;
            let results = sweep(&ds, &spec, &grid, jobs, Some(&run.out))?;
            let rows: Vec<_> = results
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "run_id": r.run_id,
                        "acc_mean": r.acc_mean(),
                        "nmi_mean": r.nmi_mean(),
                        "f1": r.f1,
                    })
                })
                .collect();
            print_json(&serde_json::Value::Array(rows))
        }
        Command::Eval {
            data,
            embedding,
            restarts,
            seed,
        } => {
            let seed = seed_override()?.unwrap_or(seed);
            let ds = data.load()?;
            let labels = ds
                .labels
                .as_ref()
                .ok_or_else(|| Error::Structural(format!("dataset `{}` has no labels", ds.name)))?;
            let z = read_embedding(&embedding)?;
            if z.nrows() != ds.n() {
                return Err(Error::Structural(format!(
                    "embedding has {} rows, dataset has {} nodes",
                    z.nrows(),
                    ds.n()
                )));
            }
            let clustering = evaluate_clustering(&z, labels, ds.classes(), restarts, seed)?;
            let f1 = evaluate_classification(&z, labels, ds.classes(), seed)?;
            print_json(&serde_json::json!({ "clustering": clustering, "f1": f1 }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
