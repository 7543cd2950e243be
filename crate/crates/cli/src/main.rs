//! `qoesim`: run seeded scenarios and sweeps and write their result tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qoesim_core::delivery::{exact_max_coverage, greedy_max_coverage, EXACT_USER_LIMIT};
use qoesim_core::experiment::{
    emit_results, pr_rows, scenario_metadata, share_rows, sweep_gt_density, sweep_performance_cloud, sweep_xi_mu,
    validate_scenario, Cell, DeliveryMode, Format, Metadata, RespondentRow, Row, Scenario, ScenarioConfig, Tabular,
};
use qoesim_core::io::{read_visit_matrix, write_visit_matrix, VisitFormat};

#[derive(Parser)]
#[command(name = "qoesim", version, about = "Seeded crowdsourced-QoE detection experiments")]
struct Cli {
    /// Scenario file (TOML). Defaults apply to every field it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config field, e.g. `--set mobility.preset=S2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Master seed, replacing the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,

    /// Table format: csv or json-lines.
    #[arg(long, default_value = "csv", global = true)]
    format: Format,

    /// Keep wall-clock columns in the written tables. Output is then no
    /// longer byte-stable across runs.
    #[arg(long, global = true)]
    timings: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: runs, pr-curve and visit-shares tables.
    Simulate(SimulateArgs),
    /// Full-truth AUC over a (xi, mu) grid.
    SweepXiMu(XiMuArgs),
    /// Recall at Omega over the classifier (FPR, TPR) grid.
    SweepCloud(CloudArgs),
    /// Respondent density against classifier benefit, per delivery strategy.
    SweepDensity(DensityArgs),
    /// Solve a max-coverage survey assignment on a visit-matrix file.
    SolveCoverage(CoverageArgs),
    /// Check the simulation invariants on repetition 0 of the scenario.
    Validate,
}

#[derive(Args)]
struct SimulateArgs {
    /// Also write the repetition-0 visit matrix.
    #[arg(long)]
    save_visits: bool,

    #[arg(long, value_enum, default_value_t = VisitKind::Text)]
    visits_format: VisitKind,
}

#[derive(Args)]
struct XiMuArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5])]
    xi: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.15, 0.25, 0.35])]
    mu: Vec<f64>,
}

#[derive(Args)]
struct CloudArgs {
    /// FPR/TPR grid spacing.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
}

#[derive(Args)]
struct DensityArgs {
    /// Respondents per site.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0735, 0.735, 7.35])]
    densities: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_values = ["random", "optimized"])]
    strategies: Vec<DeliveryMode>,
}

#[derive(Args)]
struct CoverageArgs {
    /// Visit matrix, text or binary.
    #[arg(long)]
    visits: PathBuf,

    #[arg(long)]
    budget: usize,

    #[arg(long, default_value_t = 0.2)]
    xi: f64,

    #[arg(long, default_value_t = 3)]
    n_min: usize,

    #[arg(long, value_enum, default_value_t = Method::Greedy)]
    method: Method,

    /// Largest number of candidate users the exact solver accepts.
    #[arg(long, default_value_t = EXACT_USER_LIMIT)]
    user_limit: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Greedy,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum VisitKind {
    Text,
    Binary,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Command::SolveCoverage(args) = &cli.command {
        return solve_coverage(cli, args);
    }
    let config = load_config(cli)?;
    match &cli.command {
        Command::Simulate(args) => simulate(cli, &config, args)?,
        Command::SweepXiMu(args) => {
            let cells = sweep_xi_mu(&config, &args.xi, &args.mu)?;
            write(cli, "auc-vs-xi", &cells, scenario_metadata("auc-vs-xi", &config))?;
        }
        Command::SweepCloud(args) => {
            let cloud = sweep_performance_cloud(&config, args.step)?;
            let meta = scenario_metadata("performance-cloud", &config).with("grid_step", args.step.to_string());
            write(cli, "performance-cloud", &cloud, meta)?;
        }
        Command::SweepDensity(args) => {
            let table = sweep_gt_density(&config, &args.densities, &args.strategies)?;
            let mut meta = scenario_metadata("density-tradeoff", &config);
            for c in &table.crossovers {
                let value = c.density.map_or_else(|| "none".to_string(), |d| d.to_string());
                meta = meta.with(&format!("crossover_{}", c.strategy.as_str()), value);
            }
            write(cli, "density-tradeoff", &table.rows, meta)?;
        }
        Command::Validate => validate(cli, &config)?,
        Command::SolveCoverage(_) => unreachable!("handled above"),
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut overrides = Vec::with_capacity(cli.overrides.len() + 1);
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("override `{item}` is not of the form key=value"))?;
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    let config = match &cli.config {
        Some(path) => ScenarioConfig::load(path, &overrides)?,
        None => ScenarioConfig::from_toml_with_overrides("", &overrides)?,
    };
    Ok(config)
}

fn table_path(cli: &Cli, stem: &str) -> PathBuf {
    cli.out.join(format!("{stem}.{}", cli.format.extension()))
}

fn write<T: Tabular>(cli: &Cli, stem: &str, rows: &[T], meta: Metadata) -> Result<()> {
    let path = table_path(cli, stem);
    emit_results(rows, &meta, cli.format, &path, cli.timings)?;
    eprintln!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn simulate(cli: &Cli, config: &ScenarioConfig, args: &SimulateArgs) -> Result<()> {
    let scenario = Scenario::new(config.clone())?;
    let records = scenario.run()?;
    write(cli, "runs", &records, scenario_metadata("runs", config))?;
    write(
        cli,
        "pr-curve",
        &pr_rows(&records),
        scenario_metadata("pr-curve", config),
    )?;

    let world = scenario.world(0)?;
    let shares = share_rows(&world.visits.mean_share_by_rank());
    let meta = scenario_metadata("visit-shares", config).with("repetition", "0");
    write(cli, "visit-shares", &shares, meta)?;

    if args.save_visits {
        let (format, name) = match args.visits_format {
            VisitKind::Text => (VisitFormat::Text, "visits.txt"),
            VisitKind::Binary => (VisitFormat::Binary, "visits.bin"),
        };
        let path = cli.out.join(name);
        write_visit_matrix(&path, &world.visits, format)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn solve_coverage(cli: &Cli, args: &CoverageArgs) -> Result<()> {
    let visits = read_visit_matrix(&args.visits)?;
    let assignment = match args.method {
        Method::Greedy => greedy_max_coverage(&visits, args.budget, args.xi, args.n_min)?,
        Method::Exact => exact_max_coverage(&visits, args.budget, args.xi, args.n_min, args.user_limit)?,
    };
    let rows: Vec<RespondentRow> = assignment
        .respondents
        .iter()
        .map(|&user| RespondentRow { user })
        .collect();
    let covered: Vec<String> = assignment.covered_sites.iter().map(usize::to_string).collect();
    let meta = Metadata::new("assignment")
        .with("generator", concat!("qoesim ", env!("CARGO_PKG_VERSION")))
        .with("visits", display_name(&args.visits))
        .with("users", visits.users().to_string())
        .with("sites", visits.sites().to_string())
        .with(
            "method",
            match args.method {
                Method::Greedy => "greedy",
                Method::Exact => "exact",
            },
        )
        .with("budget", args.budget.to_string())
        .with("xi", args.xi.to_string())
        .with("n_min", args.n_min.to_string())
        .with("covered_sites", covered.join(";"))
        .with("coverage", assignment.coverage.to_string());
    write(cli, "assignment", &rows, meta)?;
    println!(
        "{} respondents cover {} of {} sites (coverage {:.4})",
        assignment.respondents.len(),
        assignment.covered_sites.len(),
        visits.sites(),
        assignment.coverage
    );
    Ok(())
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

struct CheckRow {
    name: String,
    passed: bool,
    detail: String,
}

impl Tabular for CheckRow {
    const KIND: &'static str = "checks";
    const COLUMNS: &'static [&'static str] = &["check", "passed", "detail"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Text(self.name.clone()),
            Cell::Bool(self.passed),
            Cell::Text(self.detail.clone()),
        ]
    }

    fn from_row(row: &Row<'_>) -> qoesim_core::Result<Self> {
        Ok(CheckRow {
            name: row.raw("check")?.to_string(),
            passed: row.get("passed")?,
            detail: row.raw("detail")?.to_string(),
        })
    }
}

fn validate(cli: &Cli, config: &ScenarioConfig) -> Result<()> {
    let checks = validate_scenario(config)?;
    let rows: Vec<CheckRow> = checks
        .iter()
        .map(|c| CheckRow {
            name: c.name.to_string(),
            passed: c.passed,
            detail: c.detail.clone(),
        })
        .collect();
    for c in &rows {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    write(cli, "checks", &rows, scenario_metadata("checks", config))?;
    let failed = rows.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", rows.len());
    }
    Ok(())
}
