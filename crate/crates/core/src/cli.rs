//! Command-line front end: `simulate`, `fit`, `summarize`, `study`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::data::{moving_average, read_csv, write_csv, CompartmentSeries};
use crate::error::{Error, Result};
use crate::likelihood::{MeanLag, Param};
use crate::posterior::{
    change_point_report, gelman_rubin, summarize, write_change_points_csv, write_summary_csv, PointEstimate,
    SummaryBand,
};
use crate::priors::{PriorKind, PriorSpec};
use crate::sampler::io::{load_draws, write_draws_binary, write_draws_csv};
use crate::sampler::{run_chains, McmcConfig, PosteriorDraws};
use crate::simulator::{simulate, RateSchedule, SimConfig, SimMode};
use crate::study::{builtin_design, run_study, StudyOptions};

#[derive(Debug, Parser)]
#[command(name = "tfsir", version, about = "Time-fused SIR: simulate, fit and study epidemic rate paths")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a compartment series and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit β(t), γ(t) to a CSV series.
    Fit(FitArgs),
    /// Summarize saved draws.
    Summarize(SummarizeArgs),
    /// Run a replication study on a built-in design.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in design 1-4; overrides rates, breakpoints and population defaults.
    #[arg(long)]
    pub design: Option<usize>,
    /// Transmission rate per piece, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub beta: Vec<f64>,
    /// Removal rate per piece, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub gamma: Vec<f64>,
    /// First day of each piece after the first, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub breakpoints: Vec<usize>,
    /// Population size [default: 1000000, or the design's].
    #[arg(long)]
    pub population: Option<u64>,
    /// Initial infectious [default: population / 1000].
    #[arg(long)]
    pub i0: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub r0: u64,
    /// Number of days.
    #[arg(long, default_value_t = 80)]
    pub horizon: usize,
    #[arg(long, value_enum, default_value_t = SimMode::Poisson)]
    pub mode: SimMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// First date of the series (ISO-8601).
    #[arg(long, default_value = "2020-03-01")]
    pub start_date: chrono::NaiveDate,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    /// Total sweeps.
    #[arg(long, default_value_t = 50_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    /// Thinned samples discarded at the start.
    #[arg(long, default_value_t = 3_000)]
    pub burnin: usize,
    /// Last adapting sweep [default: 30000, capped at burnin × thin].
    #[arg(long)]
    pub adapt_until: Option<usize>,
    #[arg(long, default_value_t = 0.44)]
    pub target_accept: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// 1 uses S, I of the previous day in the Poisson mean, 0 the same day.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub mean_lag: u8,
}

impl McmcArgs {
    fn config(&self) -> Result<McmcConfig> {
        let default = McmcConfig::default();
        let adapt_until = self
            .adapt_until
            .unwrap_or_else(|| default.adapt_until.min(self.burnin * self.thin));
        let cfg = McmcConfig {
            iterations: self.iterations,
            thin: self.thin,
            burn_in: self.burnin,
            seed: self.seed,
            adapt_until,
            target_accept: self.target_accept,
            mean_lag: MeanLag::from_int(self.mean_lag)?,
            ..default
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV; stdin when absent or `-`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Population when the CSV has no population column.
    #[arg(long)]
    pub population: Option<f64>,
    #[arg(long, value_enum, default_value_t = PriorKind::StudentT)]
    pub prior: PriorKind,
    /// TOML prior config; its `kind` wins over `--prior`.
    #[arg(long)]
    pub prior_config: Option<PathBuf>,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Apply the 3-point moving average before fitting.
    #[arg(long)]
    pub smooth: bool,
    /// HPD level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Slab-inclusion threshold for spike-and-slab change points.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Output directory; the summary goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Draws file (`draws.csv` or `draws.bin`).
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Prior used for the change-point rule [default: from the draws, else t].
    #[arg(long, value_enum)]
    pub prior: Option<PriorKind>,
    /// Output directory; the summary goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Built-in design 1-4.
    #[arg(long)]
    pub design: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "t,horseshoe,spikeslab")]
    pub priors: Vec<PriorKind>,
    #[arg(long, default_value_t = crate::study::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Initial infectious [default: population / 1000].
    #[arg(long)]
    pub i0: Option<u64>,
    #[arg(long, value_enum, default_value_t = SimMode::Poisson)]
    pub generator: SimMode,
    #[arg(long, value_enum, default_value_t = PointEstimate::Mean)]
    pub point_estimate: PointEstimate,
    /// Apply the 3-point moving average to each replicate before fitting.
    #[arg(long)]
    pub smooth: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Study(a) => cmd_study(a),
    }
}

/// Writes `bytes` to `path.partial`, then renames it into place.
fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    fs::write(&partial, bytes).map_err(|e| Error::io(&partial, e))?;
    fs::rename(&partial, path).map_err(|e| Error::io(path, e))
}

fn write_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_file(path, bytes),
        None => write_stdout(bytes),
    }
}

fn series_json(series: &CompartmentSeries) -> Result<Vec<u8>> {
    let dates: Vec<String> = series.dates.iter().map(|d| d.to_string()).collect();
    let value = json!({
        "population": series.n,
        "date": dates,
        "S": series.s,
        "I": series.i,
        "R": series.r,
    });
    Ok(serde_json::to_vec_pretty(&value)?)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let (schedule, population) = match a.design {
        Some(d) => {
            let design = builtin_design(d)?;
            (design.schedule, a.population.unwrap_or(design.population))
        }
        None => (
            RateSchedule::new(a.breakpoints.clone(), a.beta.clone(), a.gamma.clone())?,
            a.population.unwrap_or(1_000_000),
        ),
    };
    let mut cfg = SimConfig::new(
        population,
        a.i0.unwrap_or_else(|| crate::study::default_i0(population)),
        a.horizon,
        a.seed,
        a.mode,
    );
    cfg.r0 = a.r0;
    cfg.start_date = a.start_date;
    let series = simulate(&schedule, &cfg)?;
    let bytes = match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(&series, &mut buf)?;
            buf
        }
        Format::Json => series_json(&series)?,
    };
    emit(a.out.as_deref(), &bytes)
}

fn read_input(path: Option<&Path>, population: Option<f64>) -> Result<CompartmentSeries> {
    match path {
        Some(p) if p != Path::new("-") => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            read_csv(bytes.as_slice(), population)
        }
        _ => {
            let mut buf = Vec::new();
            io::stdin()
                .read_to_end(&mut buf)
                .map_err(|e| Error::io("<stdin>", e))?;
            read_csv(buf.as_slice(), population)
        }
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(j) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f)),
        None => Ok(f()),
    }
}

/// Concatenates chains in chain order, keeping the first chain's metadata.
fn pool_chains(chains: Vec<PosteriorDraws>) -> Result<PosteriorDraws> {
    let mut iter = chains.into_iter();
    let mut pooled = iter.next().ok_or_else(|| Error::Config("no chains".into()))?;
    for c in iter {
        for row in c.beta.iter_rows() {
            pooled.beta.push_row(row)?;
        }
        for row in c.gamma.iter_rows() {
            pooled.gamma.push_row(row)?;
        }
        pooled.scales.extend(c.scales);
        pooled.warnings.extend(c.warnings);
    }
    Ok(pooled)
}

/// Largest R-hat over the daily rate columns.
fn max_rhat(chains: &[PosteriorDraws]) -> Result<f64> {
    let days = chains[0].days();
    let mut worst: f64 = 0.0;
    for which in Param::BOTH {
        for day in 0..days {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.matrix(which).column(day)).collect();
            worst = worst.max(gelman_rubin(&cols)?);
        }
    }
    Ok(worst)
}

fn summary_bytes(bands: &[SummaryBand], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_summary_csv(bands, &mut buf)?;
            Ok(buf)
        }
        Format::Json => Ok(serde_json::to_vec_pretty(bands)?),
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("--level {level} outside (0, 1)")))
    }
}

fn write_outputs(
    dir: &Path,
    draws: &PosteriorDraws,
    bands: &[SummaryBand],
    kind: PriorKind,
    threshold: f64,
    format: Format,
    extra: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let points = change_point_report(draws, kind, threshold)?;
    let mut buf = Vec::new();
    write_draws_csv(draws, &mut buf)?;
    write_file(&dir.join("draws.csv"), &buf)?;
    let mut buf = Vec::new();
    write_draws_binary(draws, &mut buf)?;
    write_file(&dir.join("draws.bin"), &buf)?;
    match format {
        Format::Csv => {
            write_file(&dir.join("summary.csv"), &summary_bytes(bands, format)?)?;
            let mut buf = Vec::new();
            write_change_points_csv(&points, &mut buf)?;
            write_file(&dir.join("changepoints.csv"), &buf)?;
        }
        Format::Json => {
            write_file(&dir.join("summary.json"), &summary_bytes(bands, format)?)?;
            write_file(&dir.join("changepoints.json"), &serde_json::to_vec_pretty(&points)?)?;
        }
    }
    let meta = json!({
        "provenance": draws.provenance,
        "acceptance": draws.acceptance,
        "step_sizes": draws.step_sizes,
        "warnings": draws.warnings,
        "samples": draws.len(),
        "extra": extra,
    });
    write_file(&dir.join("provenance.json"), &serde_json::to_vec_pretty(&meta)?)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    check_level(a.level)?;
    let spec = match &a.prior_config {
        Some(path) => PriorSpec::load(path)?,
        None => PriorSpec::new(a.prior),
    };
    spec.validate()?;
    let config = a.mcmc.config()?;
    let mut series = read_input(a.data.as_deref(), a.population)?;
    if a.smooth {
        series = moving_average(&series)?;
    }
    let chains = with_pool(a.jobs, || run_chains(&series, &spec, &config, a.chains.max(1)))??;
    let rhat = if chains.len() > 1 { Some(max_rhat(&chains)?) } else { None };
    let draws = pool_chains(chains)?;
    for w in &draws.warnings {
        eprintln!("warning: {w}");
    }
    let bands = summarize(&draws, a.level)?;
    match &a.out {
        Some(dir) => write_outputs(
            dir,
            &draws,
            &bands,
            spec.kind,
            a.threshold,
            a.format,
            json!({ "chains": a.chains.max(1), "max_rhat": rhat, "smoothed": a.smooth, "level": a.level }),
        ),
        None => write_stdout(&summary_bytes(&bands, a.format)?),
    }
}

fn cmd_summarize(a: SummarizeArgs) -> Result<()> {
    check_level(a.level)?;
    let draws = load_draws(&a.draws)?;
    let kind = a
        .prior
        .or_else(|| draws.provenance.as_ref().map(|p| p.prior.kind))
        .unwrap_or(PriorKind::StudentT);
    let bands = summarize(&draws, a.level)?;
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let points = change_point_report(&draws, kind, a.threshold)?;
            match a.format {
                Format::Csv => {
                    write_file(&dir.join("summary.csv"), &summary_bytes(&bands, a.format)?)?;
                    let mut buf = Vec::new();
                    write_change_points_csv(&points, &mut buf)?;
                    write_file(&dir.join("changepoints.csv"), &buf)
                }
                Format::Json => {
                    write_file(&dir.join("summary.json"), &summary_bytes(&bands, a.format)?)?;
                    write_file(&dir.join("changepoints.json"), &serde_json::to_vec_pretty(&points)?)
                }
            }
        }
        None => write_stdout(&summary_bytes(&bands, a.format)?),
    }
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let mut design = builtin_design(a.design)?.with_priors(&a.priors);
    design.replicates = a.replicates;
    design.mcmc = a.mcmc.config()?;
    design.generator = a.generator;
    design.point_estimate = a.point_estimate;
    design.smooth = a.smooth;
    if let Some(i0) = a.i0 {
        design.i0 = i0;
    }
    let outcome = run_study(
        &design,
        &a.out,
        &StudyOptions {
            jobs: a.jobs,
            budget: None,
        },
    )?;
    eprintln!(
        "study {}: {} replicates computed, {} reused",
        design.name,
        outcome.computed.len(),
        outcome.skipped.len()
    );
    Ok(())
}
