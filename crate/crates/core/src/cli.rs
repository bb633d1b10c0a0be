//! Batch front end: `gen-swiss`, `run`, `sweep`, `ingest`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::datasets::{
    add_gaussian_noise, impute_graph_distances, load_dissimilarity, read_dissimilarity_grid, save_dissimilarity,
    save_points, swiss_roll,
};
use crate::error::{MmsjError, Result};
use crate::evaluation::{parameter_sweep, run_experiment, EvalReport, ExperimentConfig, SwissManifest};

/// Exit status when the run finished but no replicate completed.
pub const EXIT_NO_REPLICATES: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mmsj", version, about = "Manifold matching with shared joint neighborhoods")]
pub struct Cli {
    /// Worker threads; 0 picks automatically. Falls back to MMSJ_THREADS.
    #[arg(long, global = true, env = "MMSJ_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Swiss-roll matched pair and its manifest.
    GenSwiss(GenSwissArgs),
    /// Run the experiment described by a JSON config.
    Run(RunArgs),
    /// Run a (k, d) grid; the config adds `k_values` and `d_values`.
    Sweep(RunArgs),
    /// Validate (and optionally impute) dissimilarity CSVs.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct GenSwissArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Variance of Gaussian noise added to the flat sheet.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dissimilarity CSVs to check.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Entries above this value (and `inf`) are replaced by `fill`.
    #[arg(long, requires = "fill")]
    pub cutoff: Option<f64>,
    #[arg(long, requires = "cutoff")]
    pub fill: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A config file: the experiment plus CLI-only fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_values: Option<Vec<usize>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MmsjError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| MmsjError::ParseError(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Serialize)]
struct IngestEntry {
    input: PathBuf,
    output: PathBuf,
    n: usize,
    frobenius_norm: f64,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| MmsjError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| MmsjError::io(path, e))
}

pub fn cmd_gen_swiss(args: &GenSwissArgs) -> Result<()> {
    if !(args.noise >= 0.0) {
        return Err(MmsjError::InvalidArgument(format!("noise must be >= 0, got {}", args.noise)));
    }
    let (roll, flat) = swiss_roll(args.n, args.seed)?;
    let flat = add_gaussian_noise(&flat, args.noise, args.seed.wrapping_add(1))?;
    create_dir(&args.out)?;
    save_points(&roll, &args.out.join("roll3d.csv"), &["x", "y", "z"])?;
    save_points(&flat, &args.out.join("flat2d.csv"), &["u", "v"])?;
    let manifest = SwissManifest {
        generator: "swiss-roll".into(),
        n: args.n,
        seed: args.seed,
        noise_variance: args.noise,
        first: "roll3d.csv".into(),
        second: "flat2d.csv".into(),
    };
    write_file(&args.out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

/// Loads and validates a config, applying CLI overrides.
fn resolve(args: &RunArgs, sweep: bool) -> Result<(ConfigFile, PathBuf)> {
    let mut file = ConfigFile::load(&args.config)?;
    if let Some(seed) = args.seed {
        file.experiment.seed = seed;
    }
    let mut problems = match file.experiment.validate() {
        Ok(()) => Vec::new(),
        Err(p) => p,
    };
    let out = args.out.clone().or_else(|| file.output_dir.clone());
    if out.is_none() {
        problems.push("no output directory: pass --out or set output_dir".to_string());
    }
    if sweep {
        for (name, values) in [("k_values", &file.k_values), ("d_values", &file.d_values)] {
            match values {
                Some(v) if !v.is_empty() => {}
                _ => problems.push(format!("sweep config needs a nonempty {name}")),
            }
        }
    }
    if !problems.is_empty() {
        return Err(MmsjError::ValidationError(problems.join("\n  ")));
    }
    Ok((file, out.expect("checked above")))
}

pub fn cmd_run(args: &RunArgs) -> Result<EvalReport> {
    let (file, out) = resolve(args, false)?;
    let report = run_experiment(&file.experiment)?;
    create_dir(&out)?;
    write_file(&out.join("report.json"), &(report.to_json()? + "\n"))?;
    write_file(&out.join("power_curve.csv"), &report.power_curve_csv())?;
    write_file(&out.join("run.log"), &report.run_log())?;
    Ok(report)
}

/// Returns `(completed, requested)` replicate counts summed over cells.
pub fn cmd_sweep(args: &RunArgs) -> Result<(usize, usize)> {
    let (file, out) = resolve(args, true)?;
    let k_values = file.k_values.clone().unwrap_or_default();
    let d_values = file.d_values.clone().unwrap_or_default();
    let sweep = parameter_sweep(&file.experiment, &k_values, &d_values)?;
    create_dir(&out)?;
    write_file(&out.join("report.json"), &(sweep.to_json()? + "\n"))?;
    write_file(&out.join("grid.csv"), &sweep.grid_csv())?;
    let mut log = String::new();
    for c in &sweep.cells {
        match &c.error {
            Some(e) => log.push_str(&format!("cell k={} d={} rejected: {e}\n", c.k, c.d)),
            None => log.push_str(&format!(
                "cell k={} d={}: {} completed, {} skipped\n",
                c.k, c.d, c.completed, c.skipped
            )),
        }
    }
    if let Some(spread) = sweep.power_spread() {
        log.push_str(&format!("power spread (max - min): {spread}\n"));
    }
    write_file(&out.join("run.log"), &log)?;
    let completed = sweep.cells.iter().map(|c| c.completed).sum();
    Ok((completed, sweep.cells.len() * file.experiment.replicates))
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let mut stems = std::collections::HashSet::new();
    for input in &args.inputs {
        let stem = input.file_stem().unwrap_or_default().to_owned();
        if !stems.insert(stem) {
            return Err(MmsjError::InvalidArgument(format!("duplicate file name {}", input.display())));
        }
    }
    let matrices = args
        .inputs
        .iter()
        .map(|input| match (args.cutoff, args.fill) {
            (Some(cutoff), Some(fill)) => impute_graph_distances(read_dissimilarity_grid(input)?.view(), cutoff, fill),
            _ => load_dissimilarity(input),
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = matrices.first() {
        if let Some((i, m)) = matrices.iter().enumerate().find(|(_, m)| m.n() != first.n()) {
            return Err(MmsjError::SizeMismatch(format!(
                "{} has {} observations, {} has {}",
                args.inputs[0].display(),
                first.n(),
                args.inputs[i].display(),
                m.n()
            )));
        }
    }
    create_dir(&args.out)?;
    let mut entries = Vec::new();
    for (input, m) in args.inputs.iter().zip(&matrices) {
        let name = PathBuf::from(input.file_stem().unwrap_or_default()).with_extension("csv");
        let output = args.out.join(&name);
        save_dissimilarity(m, &output)?;
        entries.push(IngestEntry {
            input: input.clone(),
            output: name,
            n: m.n(),
            frobenius_norm: m.frobenius_norm(),
        });
    }
    write_file(&args.out.join("ingest.json"), &(serde_json::to_string_pretty(&entries)? + "\n"))
}

fn configure_threads(threads: Option<usize>) {
    let n = threads.unwrap_or(0);
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads(cli.threads);
    let outcome = match &cli.command {
        Command::GenSwiss(a) => cmd_gen_swiss(a).map(|()| 0),
        Command::Run(a) => cmd_run(a).map(|report| {
            log::info!("{} completed, {} skipped", report.completed, report.skipped);
            if report.completed > 0 {
                0
            } else {
                EXIT_NO_REPLICATES
            }
        }),
        Command::Sweep(a) => cmd_sweep(a).map(|(completed, _)| if completed > 0 { 0 } else { EXIT_NO_REPLICATES }),
        Command::Ingest(a) => cmd_ingest(a).map(|()| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
