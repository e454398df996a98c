use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qevo::analysis::{export_candidates, pca_project, write_candidates_csv, write_projection_csv, write_trace_csv, PcaModel};
use qevo::driver::{output_paths, preset, run_batch, run_qevo, RunConfig, RunRecord};
use qevo::refspace::{enumerate, EnumerateOptions, ReferenceSpace};
use qevo::{Error, Result, TokenTable};

const THREADS_VAR: &str = "QEVO_THREADS";

#[derive(Parser)]
#[command(name = "qevo", version, about = "Quantum ensemble variational optimization over SELFIES spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed, or a seed range with --seeds.
    Run(RunArgs),
    /// Enumerate a small space into a reference cache and a top-N CSV.
    Refspace(RefspaceArgs),
    /// Run a seed range and write success statistics.
    Batch(RunArgs),
    /// Fit PCA on a reference space and project the molecules of runs.
    Pca(PcaArgs),
    /// Write the best molecules of runs as a candidate CSV, plus per-run traces.
    Export(ExportArgs),
    /// Parse and check a TOML config, printing it back normalized.
    ValidateConfig { path: PathBuf },
}

#[derive(Args)]
struct Source {
    /// Built-in preset name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<RunConfig> {
        match (&self.preset, &self.config) {
            (Some(name), _) => preset(name),
            (None, Some(path)) => RunConfig::from_toml(&fs::read_to_string(path)?),
            (None, None) => Err(Error::Config("give --preset or --config".into())),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive range `a..b`, or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Directory for run records.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Reference cache; supplies p0 when the config leaves it unset and
    /// enables success statistics.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct RefspaceArgs {
    /// Preset or config whose vocabulary, length and scorer define the space.
    #[command(flatten)]
    source: Source,
    /// Binary cache to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    top: usize,
    /// Distinct molecules held in memory before spilling to disk.
    #[arg(long)]
    memory_budget: Option<usize>,
    #[arg(long)]
    spill_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    reference: PathBuf,
    /// Run summary files or directories holding them.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fitted model as JSON.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
    /// Directory for one trace CSV per run.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Length of the trailing loss mean in traces.
    #[arg(long, default_value_t = 10)]
    running_window: usize,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn configure(args: &RunArgs) -> Result<(RunConfig, Option<ReferenceSpace>)> {
    let mut cfg = args.source.load()?;
    if let Some(s) = args.shots {
        cfg.shots = s;
    }
    if let Some(n) = args.max_iterations {
        cfg.optimizer.max_iterations = n;
    }
    cfg.output = Some(args.out.clone());
    let reference = args.reference.as_deref().map(ReferenceSpace::load).transpose()?;
    if cfg.loss.p0.is_none() {
        cfg.loss.p0 = Some(cfg.resolve_p0(reference.as_ref())?);
    }
    cfg.validate()?;
    Ok((cfg, reference))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    if args.seeds.is_some() {
        return cmd_batch(args);
    }
    let (mut cfg, reference) = configure(args)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let record = run_qevo(&cfg, reference.as_ref())?;
    let (rows, summary) = output_paths(&args.out, &cfg.name, cfg.seed);
    let best = record.best().map(|m| (m.canonical.as_str().to_string(), m.score));
    println!(
        "{}",
        serde_json::json!({
            "rows": rows,
            "summary": summary,
            "iterations": record.summary.iterations,
            "unique_molecules": record.summary.unique_molecules,
            "best": best,
        })
    );
    Ok(())
}

fn cmd_batch(args: &RunArgs) -> Result<()> {
    let (cfg, reference) = configure(args)?;
    let seeds = match (&args.seeds, args.seed) {
        (Some(s), _) => parse_seeds(s)?,
        (None, Some(s)) => vec![s],
        (None, None) => return Err(Error::Config("batch needs --seeds".into())),
    };
    let (_, summary) = run_batch(&cfg, &seeds, reference.as_ref(), args.top_k)?;
    let path = args.out.join(format!("{}_batch.json", cfg.name));
    write_json(&path, &summary)?;
    println!(
        "{}",
        serde_json::json!({
            "batch": path,
            "runs": summary.runs.len(),
            "failed": summary.runs.iter().filter(|r| r.error.is_some()).count(),
            "success_rate": summary.success_rate,
            "median_unique_molecules": summary.median_unique_molecules,
            "median_explored_fraction": summary.median_explored_fraction,
        })
    );
    Ok(())
}

fn cmd_refspace(args: &RefspaceArgs) -> Result<()> {
    let cfg = args.source.load()?;
    let scorer = cfg.build_scorer()?;
    let opts = EnumerateOptions {
        memory_budget: args.memory_budget,
        spill_dir: args.spill_dir.clone(),
        ..EnumerateOptions::default()
    };
    let space = enumerate(cfg.vocabulary, cfg.num_tokens, scorer.as_ref(), &opts)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    space.save(&args.out)?;
    if let Some(csv) = &args.csv {
        write_file(csv, |w| space.write_csv(w, args.top))?;
    }
    println!(
        "{}",
        serde_json::json!({
            "cache": args.out,
            "unique_valid": space.unique_valid(),
            "invalid_multiplicity": space.invalid_multiplicity,
            "optimum": space.optimum().map(|e| (e.canonical.as_str().to_string(), e.score)),
        })
    );
    Ok(())
}

/// Expands directories into the run summaries they hold, sorted by path.
fn load_records(paths: &[PathBuf]) -> Result<Vec<RunRecord>> {
    const SUFFIX: &str = ".summary.json";
    let mut summaries = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(SUFFIX))
                .collect();
            found.sort();
            summaries.extend(found);
        } else {
            summaries.push(p.clone());
        }
    }
    if summaries.is_empty() {
        return Err(Error::Config("no run summaries found".into()));
    }
    summaries
        .iter()
        .map(|s| {
            let text = s.to_string_lossy();
            let stem = text
                .strip_suffix(SUFFIX)
                .ok_or_else(|| Error::Config(format!("{text} is not a run summary")))?;
            RunRecord::read(Path::new(&format!("{stem}.jsonl")), s)
        })
        .collect()
}

fn cmd_pca(args: &PcaArgs) -> Result<()> {
    let reference = ReferenceSpace::load(&args.reference)?;
    let records = load_records(&args.runs)?;
    for r in &records {
        reference.check_scope(r.summary.vocabulary, r.summary.num_tokens, &r.summary.scorer_id)?;
    }
    let model = PcaModel::fit_reference(&reference)?;
    let table = TokenTable::from_vocabulary(&reference.vocabulary.vocabulary())?;
    let rows = pca_project(&model, &records, &table)?;
    write_file(&args.out, |w| write_projection_csv(w, &rows))?;
    if let Some(path) = &args.model {
        write_json(path, &model)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "projection": args.out,
            "rows": rows.len(),
            "explained_variance": model.explained_variance,
        })
    );
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let records = load_records(&args.runs)?;
    let candidates = export_candidates(&records, args.top);
    write_file(&args.out, |w| write_candidates_csv(w, &candidates))?;
    if let Some(dir) = &args.traces {
        for r in &records {
            let path = dir.join(format!("{}_seed{}.trace.csv", r.summary.name, r.summary.seed));
            write_file(&path, |w| write_trace_csv(w, r, args.running_window))?;
        }
    }
    println!("{}", serde_json::json!({ "candidates": args.out, "rows": candidates.len() }));
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<()> {
    let cfg = RunConfig::from_toml(&fs::read_to_string(path)?)?;
    cfg.validate()?;
    print!("{}", cfg.to_toml());
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = value.trim().parse().map_err(|_| Error::Config(format!("{THREADS_VAR}={value} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Refspace(a) => cmd_refspace(a),
        Command::Pca(a) => cmd_pca(a),
        Command::Export(a) => cmd_export(a),
        Command::ValidateConfig { path } => cmd_validate(path),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            // bad input the user can fix by changing arguments
            let usage = matches!(e, Error::UnknownPreset(_) | Error::Config(_));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
