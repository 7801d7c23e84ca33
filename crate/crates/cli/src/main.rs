use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gdpacer::engine::Algorithm;
use gdpacer::report;
use gdpacer::sim::{run_ablation, run_experiment, ScenarioConfig};
use gdpacer::validate::{run_checks, ValidateOptions};

#[derive(Parser)]
#[command(
    name = "gdpacer",
    version,
    about = "Budget pacing experiments for guaranteed-display campaigns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm over all rounds.
    Run(RunArgs),
    /// Run RCPacing over the config's ablation grid.
    Ablate(RunArgs),
    /// Numeric property checks on the quality model and transforms.
    Validate(ValidateArgs),
    /// Render a comparison table from rounds files.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Args)]
struct Output {
    /// Output directory, created if absent.
    #[arg(long, default_value = "gdpacer-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "GDPACER_SEED")]
    seed: Option<u64>,
    /// Comma-separated subset of dmd, smart, rcpacing.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ValidateArgs {
    /// Check a reduced grid only.
    #[arg(long)]
    narrow: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Negate the shift fluctuation ratio to confirm failures are reported.
    #[arg(long, hide = true)]
    inject_sign_flip: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Rounds files (`.csv` or `.json`) written by `run`.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Also write the aggregate table to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    force: bool,
}

enum Failure {
    Input(String),
    Runtime(String),
    Validation,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Validation => 3,
        }
    }
}

impl From<gdpacer::Error> for Failure {
    fn from(e: gdpacer::Error) -> Self {
        use gdpacer::Error as E;
        match e {
            // The library only does I/O when reading configs and streams.
            E::Config { .. } | E::Parse { .. } | E::InvalidModel(_) | E::Io(_) => {
                Failure::Input(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(msg) | Failure::Runtime(msg) => eprintln!("error: {msg}"),
                Failure::Validation => eprintln!("error: validation failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

/// Flags over config file over defaults.
fn load_config(args: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &args.algorithms {
        let mut algs = Vec::new();
        for name in list {
            let alg: Algorithm = name
                .trim()
                .parse()
                .map_err(|e: gdpacer::Error| Failure::Input(format!("--algorithms: {e}")))?;
            if !algs.contains(&alg) {
                algs.push(alg);
            }
        }
        cfg.algorithms = algs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_pool(jobs: Option<usize>) -> Outcome {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::Input("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}

/// Creates the directory and refuses to clobber any of `names` without
/// `force`.
fn prepare_outputs(dir: &Path, names: &[String], force: bool) -> Result<Vec<PathBuf>, Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Failure::Input(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    Ok(paths)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> gdpacer::Result<()>) -> Outcome {
    let runtime = |e: String| Failure::Runtime(format!("{}: {e}", path.display()));
    let file = File::create(path).map_err(|e| runtime(e.to_string()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| runtime(e.to_string()))?;
    w.flush().map_err(|e| runtime(e.to_string()))
}

fn cmd_run(args: RunArgs) -> Outcome {
    let cfg = load_config(&args)?;
    init_pool(args.jobs)?;
    let fmt = args.output.format;
    let paths = prepare_outputs(
        &args.output.out,
        &[
            format!("rounds.{}", fmt.ext()),
            format!("aggregate.{}", fmt.ext()),
            "series.csv".to_string(),
        ],
        args.output.force,
    )?;
    let out = run_experiment(&cfg)?;
    match fmt {
        Format::Csv => {
            write_file(&paths[0], |w| report::write_rounds_csv(w, &out.reports))?;
            write_file(&paths[1], |w| {
                report::write_aggregate_csv(w, &out.aggregate)
            })?;
        }
        Format::Json => {
            write_file(&paths[0], |w| report::write_json(w, &out.reports))?;
            write_file(&paths[1], |w| report::write_json(w, &out.aggregate))?;
        }
    }
    write_file(&paths[2], |w| report::write_series_csv(w, &out.series))?;
    print!("{}", report::render_table(&out.aggregate));
    Ok(())
}

fn cmd_ablate(args: RunArgs) -> Outcome {
    let cfg = load_config(&args)?;
    if cfg.ablation.is_empty() {
        return Err(Failure::Input(
            "field `ablation`: grid is empty; list values for at least one parameter".into(),
        ));
    }
    init_pool(args.jobs)?;
    let fmt = args.output.format;
    let paths = prepare_outputs(
        &args.output.out,
        &[format!("ablation.{}", fmt.ext())],
        args.output.force,
    )?;
    let results = run_ablation(&cfg)?;
    match fmt {
        Format::Csv => write_file(&paths[0], |w| report::write_ablation_csv(w, &results))?,
        Format::Json => write_file(&paths[0], |w| report::write_json(w, &results))?,
    }
    print!("{}", report::render_ablation_table(&results));
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Outcome {
    let opts = ValidateOptions {
        narrow: args.narrow,
        flip_fluctuation_sign: args.inject_sign_flip,
        ..Default::default()
    };
    let outcomes = run_checks(&opts);
    match args.format {
        Format::Json => report::write_json(std::io::stdout().lock(), &outcomes)?,
        Format::Csv => {
            for o in &outcomes {
                let tag = if o.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", o.name, o.detail);
            }
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", outcomes.len());
        return Err(Failure::Validation);
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Outcome {
    let mut reports = Vec::new();
    for path in &args.inputs {
        let file =
            File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        let loaded = if json {
            report::read_rounds_json(file)
        } else {
            report::read_rounds_csv(file)
        };
        reports.extend(loaded.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?);
    }
    if reports.is_empty() {
        return Err(Failure::Input("input files contain no rounds".into()));
    }
    let rows = report::summarize(&reports);
    if let Some(dir) = &args.out {
        let paths = prepare_outputs(dir, &[format!("report.{}", args.format.ext())], args.force)?;
        match args.format {
            Format::Csv => write_file(&paths[0], |w| report::write_aggregate_csv(w, &rows))?,
            Format::Json => write_file(&paths[0], |w| report::write_json(w, &rows))?,
        }
    }
    print!("{}", report::render_table(&rows));
    Ok(())
}
