use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use slhvb::analysis::{bootstrap_did, did_ols, did_z_test, lift_percentages, CellSamples, DidFit};
use slhvb::grids::{build_grid, GridKind};
use slhvb::harness::output::{coefficient_table, read_cells, read_observations, z_table};
use slhvb::harness::{
    fmt_f64, round_table, run_replications, run_scenario, run_sweep, summary_table, ExperimentConfig,
    HarnessError, ScenarioOptions, SweepSpec, Table, SCENARIOS, SEED_ENV,
};
use slhvb::prior::fit_beta_moments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "slhvb", version, about = "Short-lived high-volume bandit simulations")]
struct Cli {
    /// Config file (JSON) or input CSV, depending on the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides base_seed and SLHVB_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (or directory for `scenario`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every replication of one experiment config.
    Simulate {
        /// Also write per-round logs here.
        #[arg(long)]
        rounds_out: Option<PathBuf>,
    },
    /// Run a sweep spec.
    Sweep,
    /// Print a grid.
    Grid {
        #[arg(long, value_enum, default_value = "revised-geometric")]
        kind: GridKindArg,
        #[arg(long)]
        level: usize,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        n: u64,
    },
    /// Beta parameters with the given mean and variance.
    FitPrior {
        #[arg(long)]
        mean: f64,
        #[arg(long)]
        var: f64,
    },
    /// DID regression on rows `t,i,y`.
    Did,
    /// Z-test on cells `group,period,count,mean,se`, or on rows `t,i,y`.
    Ztest,
    /// Bootstrap Z-test on rows `t,i,y`.
    Bootstrap {
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        /// Defaults to the size of each cell.
        #[arg(long)]
        resample_size: Option<usize>,
    },
    /// Run a preset scenario.
    Scenario {
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        replications: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridKindArg {
    RevisedGeometric,
    RevisedGeometricLog,
    ArrivalAdaptive,
    Minimax,
    Geometric,
}

impl From<GridKindArg> for GridKind {
    fn from(k: GridKindArg) -> Self {
        match k {
            GridKindArg::RevisedGeometric => GridKind::RevisedGeometric,
            GridKindArg::RevisedGeometricLog => GridKind::RevisedGeometricLog,
            GridKindArg::ArrivalAdaptive => GridKind::ArrivalAdaptive,
            GridKindArg::Minimax => GridKind::Minimax,
            GridKindArg::Geometric => GridKind::Geometric,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))
}

fn required_input(cli: &Cli) -> Result<String, HarnessError> {
    let path = cli.config.as_ref().ok_or_else(|| invalid("config", "--config is required"))?;
    read_file(path)
}

fn seed_override(cli: &Cli) -> Result<Option<u64>, HarnessError> {
    if cli.seed.is_some() {
        return Ok(cli.seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(SEED_ENV, format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn emit(cli: &Cli, table: &Table, json: &impl Serialize) -> Result<(), HarnessError> {
    let text = match cli.format {
        Format::Csv => table.to_csv()?,
        Format::Json => serde_json::to_string_pretty(json).map_err(|e| HarnessError::Io(e.to_string()))? + "\n",
    };
    write_out(cli.out.as_deref(), &text)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    if cli.parallelism < 1 {
        return Err(invalid("parallelism", "--parallelism must be >= 1"));
    }
    match &cli.command {
        Command::Simulate { rounds_out } => {
            let mut cfg = ExperimentConfig::from_json(&required_input(cli)?)?;
            if let Some(s) = seed_override(cli)? {
                cfg.base_seed = s;
            }
            cfg.validate()?;
            let report = run_replications(&cfg, cli.parallelism)?;
            emit(cli, &summary_table(&report), &report)?;
            if let Some(p) = rounds_out {
                write_out(Some(p), &round_table(&report).to_csv()?)?;
            }
            Ok(())
        }
        Command::Sweep => {
            let mut spec: SweepSpec = serde_json::from_str(&required_input(cli)?)
                .map_err(|e| invalid("config", e.to_string()))?;
            if let Some(s) = seed_override(cli)? {
                spec.base.base_seed = s;
            }
            let t = run_sweep(&spec, cli.parallelism)?;
            emit(cli, &t, &table_json(&t))
        }
        Command::Grid { kind, level, k, n } => {
            let g = build_grid((*kind).into(), *level, *k, *n).map_err(|e| invalid("grid", e.to_string()))?;
            let mut t = Table::new(&["batch", "fraction", "size"]);
            for i in 0..=g.level() {
                let size = if i < g.level() { g.batch_size(i, *n) } else { g.final_batch_size(*n) };
                t.push(vec![i.to_string(), fmt_f64(g.fraction(i)), size.to_string()]);
            }
            emit(cli, &t, &g)
        }
        Command::FitPrior { mean, var } => {
            let b = fit_beta_moments(*mean, *var).map_err(|e| invalid("mean/var", e.to_string()))?;
            let mut t = Table::new(&["alpha", "beta"]);
            t.push(vec![fmt_f64(b.alpha), fmt_f64(b.beta)]);
            emit(cli, &t, &b)
        }
        Command::Did => {
            let tab = read_observations(&required_input(cli)?)?;
            let fit = did_ols(&tab)?;
            emit(cli, &fit_table(&fit), &fit)
        }
        Command::Ztest => {
            let text = required_input(cli)?;
            let header = text.lines().next().unwrap_or_default();
            let cells = if header.contains("group") {
                read_cells(&text)?
            } else {
                CellSamples::from_table(&read_observations(&text)?).summaries()?
            };
            let z = did_z_test(&cells)?;
            emit(cli, &z_table(&[("z_test", z)]), &z)
        }
        Command::Bootstrap { draws, resample_size } => {
            let tab = read_observations(&required_input(cli)?)?;
            let samples = CellSamples::from_table(&tab);
            let size = resample_size.unwrap_or_else(|| {
                [
                    samples.control_pre.len(),
                    samples.control_post.len(),
                    samples.treatment_pre.len(),
                    samples.treatment_post.len(),
                ]
                .into_iter()
                .max()
                .unwrap_or(0)
            });
            let mut rng = ChaCha8Rng::seed_from_u64(seed_override(cli)?.unwrap_or(0));
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cli.parallelism)
                .build()
                .map_err(|e| HarnessError::Io(e.to_string()))?;
            let z = pool.install(|| bootstrap_did(&samples, *draws, size, &mut rng))?;
            emit(cli, &z_table(&[("bootstrap", z)]), &z)
        }
        Command::Scenario {
            name,
            list,
            replications,
        } => {
            if *list || name.is_none() {
                for s in SCENARIOS {
                    println!("{s}");
                }
                return Ok(());
            }
            let opts = ScenarioOptions {
                out_dir: cli.out.clone().unwrap_or_else(|| PathBuf::from(".")),
                parallelism: cli.parallelism,
                seed: seed_override(cli)?.unwrap_or(0),
                replications: *replications,
            };
            for p in run_scenario(name.as_deref().unwrap_or_default(), &opts)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn table_json(t: &Table) -> Vec<serde_json::Map<String, serde_json::Value>> {
    t.rows
        .iter()
        .map(|r| {
            t.header
                .iter()
                .cloned()
                .zip(r.iter().map(|v| serde_json::Value::String(v.clone())))
                .collect()
        })
        .collect()
}

fn fit_table(fit: &DidFit) -> Table {
    let mut t = coefficient_table(fit);
    let lift = lift_percentages(fit).map(fmt_f64).unwrap_or_else(|_| "NaN".into());
    let mut row = vec![String::new(); 7];
    row[0] = "lift_pct".into();
    row[1] = lift;
    t.push(row);
    t
}
