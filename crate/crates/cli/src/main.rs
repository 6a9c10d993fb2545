//! `dmlsim`: run, compare and replay Monte Carlo studies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmlsim_core::config::{load_config, preset, preset_names};
use dmlsim_core::report::{
    comparison_forecast_table, comparison_inference_table, emit_comparison_tables, emit_run, replay, summary_notes,
    write_manifest, EmitOptions, EmittedFile, DEFAULT_BINS, DEFAULT_OUT_DIR, OUT_DIR_ENV,
};
use dmlsim_core::{run_study, AggregateReport, Error, PipelineSet, ScenarioConfig, TableFormat};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "dmlsim",
    version,
    about = "Post-lasso forecasting and partialling-out inference under confounding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write tables, histograms and per-replication data.
    Run(RunArgs),
    /// Run two scenarios and write side-by-side tables.
    Compare(CompareArgs),
    /// List the built-in scenarios.
    Presets,
    /// Rebuild tables and histograms from a previous run's output directory.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Markdown,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => TableFormat::Text,
            Format::Csv => TableFormat::Csv,
            Format::Markdown => TableFormat::Markdown,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pipeline {
    Ols,
    PostLasso,
    Naive,
    PartiallingOut,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Histogram bin count.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
}

#[derive(Args)]
struct ExecArgs {
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the replication count.
    #[arg(long)]
    replications: Option<usize>,
    /// Pipelines to run (comma separated); all by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    only: Vec<Pipeline>,
    /// Skip the per-replication CSV.
    #[arg(long)]
    no_per_rep: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file of `key = value` lines.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario name (see `dmlsim presets`).
    #[arg(long, default_value = "paper-base-48")]
    preset: String,
    #[command(flatten)]
    exec: ExecArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Two scenario files, in column order.
    #[arg(long, num_args = 2, conflicts_with = "preset")]
    config: Vec<PathBuf>,
    /// Two built-in scenarios, in column order.
    #[arg(long, num_args = 2, default_values = ["paper-base-48", "paper-extended-72"])]
    preset: Vec<String>,
    /// Give the second scenario the first one's master seed.
    #[arg(long)]
    shared_seed: bool,
    #[command(flatten)]
    exec: ExecArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReplayArgs {
    /// Directory holding `scenario.cfg` and `replications.csv`.
    #[arg(long)]
    from: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Validation(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

fn load_scenario(config: Option<&Path>, preset_name: &str) -> Result<(ScenarioConfig, String), Error> {
    match config {
        Some(path) => Ok((load_config(path)?, path.display().to_string())),
        None => preset(preset_name)
            .map(|c| (c, format!("preset:{preset_name}")))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown preset {preset_name:?}; known: {}",
                    preset_names().join(", ")
                ))
            }),
    }
}

impl ExecArgs {
    fn apply(&self, cfg: &mut ScenarioConfig) -> Result<(), Error> {
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        cfg.validate()
    }

    fn pipelines(&self) -> PipelineSet {
        if self.only.is_empty() {
            return PipelineSet::all();
        }
        PipelineSet {
            ols: self.only.contains(&Pipeline::Ols),
            post_lasso: self.only.contains(&Pipeline::PostLasso),
            naive: self.only.contains(&Pipeline::Naive),
            partialling_out: self.only.contains(&Pipeline::PartiallingOut),
        }
    }

    fn jobs(&self) -> Result<usize, Error> {
        match self.jobs {
            Some(0) => Err(Error::InvalidArgument("--jobs must be at least 1".into())),
            Some(j) => Ok(j),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    fn emit_options(&self, output: &OutputArgs) -> EmitOptions {
        EmitOptions {
            format: output.format.into(),
            bins: output.bins,
            per_replication: !self.no_per_rep,
        }
    }
}

/// Error out when a requested method never succeeded.
fn check_successes(report: &AggregateReport) -> Result<(), Error> {
    let dead: Vec<&str> = report
        .forecast_rows
        .iter()
        .filter(|r| r.successes == 0)
        .map(|r| r.method.label())
        .chain(
            report
                .inference_rows
                .iter()
                .filter(|r| r.successes == 0)
                .map(|r| r.method.label()),
        )
        .collect();
    if dead.is_empty() {
        return Ok(());
    }
    let first = report
        .failures()
        .first()
        .map(|(_, _, e)| e.to_string())
        .unwrap_or_default();
    Err(Error::Recorded(format!(
        "every replication failed for {}: {first}",
        dead.join(", ")
    )))
}

fn print_tables(reports: &[&AggregateReport], format: TableFormat) {
    if reports.iter().any(|r| !r.forecast_rows.is_empty()) {
        println!("{}", comparison_forecast_table(reports).render(format));
    }
    if reports.iter().any(|r| !r.inference_rows.is_empty()) {
        println!("{}", comparison_inference_table(reports).render(format));
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let (mut cfg, source) = load_scenario(args.config.as_deref(), &args.preset)?;
    args.exec.apply(&mut cfg)?;
    let report = run_study(&cfg, args.exec.pipelines(), args.exec.jobs()?)?;
    let manifest = emit_run(&report, &source, &args.output.out, args.exec.emit_options(&args.output))?;
    print_tables(&[&report], args.output.format.into());
    eprint!("{}", summary_notes(&report));
    eprintln!(
        "{} replications in {:.2}s; {} files written to {}",
        cfg.replications,
        report.runtime_seconds,
        manifest.emitted_files.len() + 1,
        args.output.out.display()
    );
    check_successes(&report)
}

fn scenario_dir_names(a: &ScenarioConfig, b: &ScenarioConfig) -> [String; 2] {
    if a.n_train != b.n_train {
        [format!("n{}", a.n_train), format!("n{}", b.n_train)]
    } else {
        ["scenario1".into(), "scenario2".into()]
    }
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let mut loaded = Vec::new();
    if args.config.is_empty() {
        for name in &args.preset {
            loaded.push(load_scenario(None, name)?);
        }
    } else {
        for path in &args.config {
            loaded.push(load_scenario(Some(path), "")?);
        }
    }
    for (cfg, _) in &mut loaded {
        args.exec.apply(cfg)?;
    }
    if args.shared_seed {
        loaded[1].0.master_seed = loaded[0].0.master_seed;
    }
    let jobs = args.exec.jobs()?;
    let pipelines = args.exec.pipelines();
    let reports = loaded
        .iter()
        .map(|(cfg, _)| run_study(cfg, pipelines, jobs))
        .collect::<Result<Vec<_>, _>>()?;

    let out = &args.output.out;
    let format: TableFormat = args.output.format.into();
    let refs: Vec<&AggregateReport> = reports.iter().collect();
    let mut files: Vec<EmittedFile> = emit_comparison_tables(&refs, format, out)?;
    let names = scenario_dir_names(&loaded[0].0, &loaded[1].0);
    for ((report, (_, source)), name) in reports.iter().zip(&loaded).zip(&names) {
        let sub = emit_run(report, source, &out.join(name), args.exec.emit_options(&args.output))?;
        files.extend(sub.emitted_files.into_iter().map(|f| EmittedFile {
            path: format!("{name}/{}", f.path),
            ..f
        }));
    }
    let sources: Vec<&str> = loaded.iter().map(|(_, s)| s.as_str()).collect();
    write_manifest(&sources.join(" vs "), out, files)?;

    print_tables(&refs, format);
    for (report, name) in reports.iter().zip(&names) {
        let notes = summary_notes(report);
        if !notes.is_empty() {
            eprint!("[{name}] {notes}");
        }
    }
    eprintln!(
        "runtimes {:.2}s / {:.2}s; output in {}",
        reports[0].runtime_seconds,
        reports[1].runtime_seconds,
        out.display()
    );
    reports.iter().try_for_each(check_successes)
}

fn presets() {
    for name in preset_names() {
        let cfg = preset(name).expect("listed preset exists");
        println!(
            "{name}: n_train={} n_holdout={} p={} c={} replications={} seed={}",
            cfg.n_train, cfg.n_holdout, cfg.p, cfg.c, cfg.replications, cfg.master_seed
        );
    }
}

fn replay_cmd(args: ReplayArgs) -> Result<(), Error> {
    let report = replay(&args.from)?;
    let opts = EmitOptions {
        format: args.output.format.into(),
        bins: args.output.bins,
        per_replication: true,
    };
    let source = args.from.join(dmlsim_core::report::SCENARIO_FILE);
    emit_run(&report, &source.display().to_string(), &args.output.out, opts)?;
    print_tables(&[&report], opts.format);
    eprint!("{}", summary_notes(&report));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Presets => {
            presets();
            Ok(())
        }
        Command::Replay(a) => replay_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
