//! Command-line front end: simulate datasets, fit and sweep mixture models,
//! evaluate classifications, and replicate the built-in studies end to end.
//!
//! Exit codes: 0 on success, 2 when a fit fails, 3 for input or usage
//! errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use clickmix_core::em::{self, EmConfig, FitResult, FittedModel, ModelKind};
use clickmix_core::error::Error as CoreError;
use clickmix_core::eval::{
    adjusted_rand_index, format_selection_table, selection_table, BicTable, ReplicateOutcome,
};
use clickmix_core::math::{mean_sd, median};
use clickmix_core::mixture::GeneratorUpdate;
use clickmix_core::model_io::{parse_model, FitDocument};
use clickmix_core::seq::{
    detect_format, format_dataset, parse_dataset, parse_dataset_with_states, Dataset, LabelMode,
};
use clickmix_core::simulate::{generate_scenario, ScenarioKind, ScenarioSpec};
use clickmix_core::stream::derive_seed;
use clickmix_core::constants::CONSTANTS_VERSION;

const MANIFEST_HEADER: &str = "clickmix-manifest v1";

#[derive(Parser)]
#[command(name = "clickmix", version, about = "Markov-mixture clustering of clickstreams")]
struct Cli {
    /// Worker thread cap; defaults to CLICKMIX_THREADS or all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets from a built-in scenario or a model file.
    Simulate(SimulateArgs),
    /// Fit a mixture with a fixed number of groups.
    Fit(FitArgs),
    /// Fit a range of group counts and select by BIC.
    Sweep(SweepArgs),
    /// Score a fitted model's classification against a truth file.
    Evaluate(EvaluateArgs),
    /// Run a whole study end to end: generate, sweep, evaluate, tabulate.
    Replicate(ReplicateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioName {
    #[value(name = "sim1-small")]
    Sim1Small,
    #[value(name = "sim1-large")]
    Sim1Large,
    #[value(name = "sim2-small")]
    Sim2Small,
    #[value(name = "sim2-large")]
    Sim2Large,
    #[value(name = "sim3")]
    Sim3,
    #[value(name = "msnbc-augment")]
    MsnbcAugment,
    #[value(name = "custom")]
    Custom,
}

#[derive(Args)]
struct SimulateArgs {
    /// Which scenario to sample.
    #[arg(long, value_enum)]
    scenario: ScenarioName,
    /// Number of replicate datasets.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the per-replicate sequence count.
    #[arg(long)]
    num_sequences: Option<usize>,
    /// Override the inclusive visit-count range, e.g. 4..25.
    #[arg(long, value_parser = parse_range)]
    length_range: Option<(usize, usize)>,
    /// Override the labelled fraction in [0, 1].
    #[arg(long)]
    labelled_fraction: Option<f64>,
    /// Model file to sample from (custom scenario only).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct FitFlags {
    /// Number of random starts for the short burst phase.
    #[arg(long, default_value_t = 50)]
    starts: usize,
    /// Iterations per short burst.
    #[arg(long, default_value_t = 5)]
    short_iters: usize,
    /// Convergence tolerance for the acceleration stopping rule.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Iteration cap for the full EM run.
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Lower bound applied to all probability and rate parameters.
    #[arg(long, default_value_t = 1e-6)]
    floor: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Generator update rule (debugging aid).
    #[arg(long, value_enum, default_value_t = GeneratorUpdateName::ClosedForm)]
    generator_update: GeneratorUpdateName,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorUpdateName {
    #[value(name = "closed-form")]
    ClosedForm,
    #[value(name = "count-time-ratio")]
    CountTimeRatio,
}

impl FitFlags {
    fn config(&self, kind: ModelKind, seed: u64) -> EmConfig {
        let mut config = EmConfig::new(kind);
        config.num_starts = self.starts;
        config.short_iters = self.short_iters;
        config.epsilon = self.epsilon;
        config.max_iters = self.max_iters;
        config.floor = self.floor;
        config.seed = seed;
        config.generator_update = match self.generator_update {
            GeneratorUpdateName::ClosedForm => GeneratorUpdate::ClosedForm,
            GeneratorUpdateName::CountTimeRatio => GeneratorUpdate::CountTimeRatio,
        };
        config
    }
}

#[derive(Args)]
struct DataFlags {
    /// Input data file, one sequence per line.
    #[arg(long)]
    input: PathBuf,
    /// Fix the state catalog size instead of inferring it from the data.
    #[arg(long)]
    num_states: Option<usize>,
    /// Merge consecutive repeated states (summing their times) before
    /// fitting.
    #[arg(long)]
    collapse: bool,
    /// Treat every sequence as unlabelled even if labels are present.
    #[arg(long)]
    ignore_labels: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataFlags,
    /// Model kind: dwm, dm, or cm.
    #[arg(long, value_parser = parse_kind)]
    kind: ModelKind,
    /// Number of groups.
    #[arg(long)]
    groups: usize,
    /// Write the fit result here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataFlags,
    #[arg(long, value_parser = parse_kind)]
    kind: ModelKind,
    /// Inclusive group range, e.g. 1..5.
    #[arg(long, value_parser = parse_range, default_value = "1..5")]
    groups: (usize, usize),
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Input data file the model was fitted to.
    #[arg(long)]
    input: PathBuf,
    /// Fit result file from `fit` or `sweep`.
    #[arg(long)]
    fit: PathBuf,
    /// Truth file: `sequence,group` lines.
    #[arg(long)]
    truth: PathBuf,
    /// Score labelled sequences too instead of only unlabelled ones.
    #[arg(long)]
    include_labelled: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyName {
    Sim1,
    Sim2,
    Sim3,
    Msnbc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scale {
    Small,
    Large,
}

#[derive(Args)]
struct ReplicateArgs {
    /// Which study to run.
    #[arg(value_enum)]
    study: StudyName,
    #[arg(long)]
    replicates: Option<usize>,
    /// Sample-size configuration of the study.
    #[arg(long, value_enum, default_value_t = Scale::Large)]
    scale: Scale,
    /// Inclusive group range swept by BIC.
    #[arg(long, value_parser = parse_range, default_value = "1..5")]
    groups: (usize, usize),
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
}

fn parse_kind(token: &str) -> Result<ModelKind, String> {
    ModelKind::parse(token).map_err(|e| e.to_string())
}

fn parse_range(token: &str) -> Result<(usize, usize), String> {
    if let Some((lo, hi)) = token.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| "bad range start".to_string())?;
        let hi = hi.trim().trim_start_matches('=');
        let hi: usize = hi.parse().map_err(|_| "bad range end".to_string())?;
        if lo > hi {
            return Err("range start exceeds end".into());
        }
        Ok((lo, hi))
    } else {
        let g: usize = token.trim().parse().map_err(|_| "bad range".to_string())?;
        Ok((g, g))
    }
}

enum CliError {
    Input(String),
    Fit(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 3,
            CliError::Fit(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Fit(m) => f.write_str(m),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::FitFailed(_) => CliError::Fit(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn main() {
    // Die quietly when a pipe closes, as when output is fed to `head`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(3);
        }
    };
    configure_threads(cli.threads);
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Replicate(args) => cmd_replicate(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn configure_threads(flag: Option<usize>) {
    let from_env = std::env::var("CLICKMIX_THREADS")
        .ok()
        .and_then(|v| v.parse().ok());
    if let Some(n) = flag.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            println!("seed: {s} (generated)");
            s
        }
    }
}

struct Manifest {
    lines: Vec<String>,
    files: Vec<String>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Manifest {
            lines: vec![MANIFEST_HEADER.to_string(), format!("command: {command}")],
            files: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key}: {value}"));
    }

    fn write(mut self, dir: &Path) -> Result<(), CliError> {
        self.lines.push(format!("constants-version: {CONSTANTS_VERSION}"));
        for f in &self.files {
            self.lines.push(format!("file: {f}"));
        }
        let mut text = self.lines.join("\n");
        text.push('\n');
        std::fs::write(dir.join("manifest.txt"), text)?;
        Ok(())
    }
}

fn write_output(dir: &Path, name: &str, content: &str, manifest: &mut Manifest) -> Result<(), CliError> {
    std::fs::write(dir.join(name), content)?;
    manifest.files.push(name.to_string());
    Ok(())
}

fn truth_csv(truth: &[usize]) -> String {
    let mut out = String::from("sequence,group\n");
    for (i, g) in truth.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, g + 1);
    }
    out
}

fn parse_truth(path: &Path, expected_len: usize) -> Result<Vec<usize>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut truth = vec![None; expected_len];
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("sequence") {
            continue;
        }
        let (i, g) = line.split_once(',').ok_or_else(|| {
            CliError::Input(format!("{}:{}: expected 'sequence,group'", path.display(), no + 1))
        })?;
        let i: usize = i.trim().parse().map_err(|_| {
            CliError::Input(format!("{}:{}: bad sequence index", path.display(), no + 1))
        })?;
        let g: usize = g.trim().parse().map_err(|_| {
            CliError::Input(format!("{}:{}: bad group", path.display(), no + 1))
        })?;
        if i < 1 || i > expected_len || g < 1 {
            return Err(CliError::Input(format!(
                "{}:{}: index out of range",
                path.display(),
                no + 1
            )));
        }
        truth[i - 1] = Some(g - 1);
    }
    truth
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            g.ok_or_else(|| {
                CliError::Input(format!("{}: sequence {} missing", path.display(), i + 1))
            })
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed);
    let kind = match args.scenario {
        ScenarioName::Sim1Small => ScenarioKind::Sim1Small,
        ScenarioName::Sim1Large => ScenarioKind::Sim1Large,
        ScenarioName::Sim2Small => ScenarioKind::Sim2Small,
        ScenarioName::Sim2Large => ScenarioKind::Sim2Large,
        ScenarioName::Sim3 => ScenarioKind::Sim3,
        ScenarioName::MsnbcAugment => ScenarioKind::MsnbcAugment,
        ScenarioName::Custom => {
            let path = args.model.as_ref().ok_or_else(|| {
                CliError::Input("the custom scenario needs --model".into())
            })?;
            let text = std::fs::read_to_string(path)?;
            // Accept either a bare model document or a fit result.
            let model = parse_model(&text)
                .or_else(|_| FitDocument::parse(&text).map(|doc| doc.model))
                .map_err(|_| {
                    CliError::Input(format!(
                        "{} is neither a model nor a fit document",
                        path.display()
                    ))
                })?;
            ScenarioKind::Custom(Box::new(model))
        }
    };
    if args.scenario != ScenarioName::Custom && args.model.is_some() {
        return Err(CliError::Input(
            "--model applies only to the custom scenario".into(),
        ));
    }

    let mut spec = ScenarioSpec::preset(kind, seed);
    if let Some(n) = args.num_sequences {
        spec.num_sequences = n;
    }
    if let Some(r) = args.length_range {
        spec.length_range = r;
    }
    if let Some(f) = args.labelled_fraction {
        spec.labelled_fraction = f;
    }
    spec.replicates = args.replicates.unwrap_or(1);

    std::fs::create_dir_all(&args.out)?;
    let replicates = generate_scenario(&spec)?;
    let mut manifest = Manifest::new("simulate");
    manifest.put("scenario", spec.kind.name());
    manifest.put("replicates", spec.replicates);
    manifest.put("seed", seed);
    manifest.put("num-sequences", spec.num_sequences);
    manifest.put(
        "length-range",
        format!("{}..{}", spec.length_range.0, spec.length_range.1),
    );
    manifest.put("labelled-fraction", spec.labelled_fraction);
    for (r, (dataset, truth)) in replicates.iter().enumerate() {
        let data_name = format!("dataset_{:03}.txt", r + 1);
        let truth_name = format!("truth_{:03}.csv", r + 1);
        write_output(&args.out, &data_name, &format_dataset(dataset), &mut manifest)?;
        write_output(&args.out, &truth_name, &truth_csv(truth), &mut manifest)?;
    }
    manifest.write(&args.out)?;
    println!(
        "wrote {} replicate(s) of {} to {}",
        replicates.len(),
        spec.kind.name(),
        args.out.display()
    );
    Ok(())
}

fn load_dataset_for(kind: ModelKind, flags: &DataFlags) -> Result<Dataset, CliError> {
    if flags.collapse && kind == ModelKind::Dwm {
        return Err(CliError::Input(
            "the dwm model fits raw streams; --collapse applies to dm and cm only".into(),
        ));
    }
    load_dataset(flags)
}

fn load_dataset(flags: &DataFlags) -> Result<Dataset, CliError> {
    let format = detect_format(&flags.input)?;
    let labels = if flags.ignore_labels {
        LabelMode::Ignore
    } else {
        LabelMode::Keep
    };
    let dataset = match flags.num_states {
        Some(j) => parse_dataset_with_states(&flags.input, format, labels, j)?,
        None => parse_dataset(&flags.input, format, labels)?,
    };
    Ok(if flags.collapse {
        dataset.collapsed()
    } else {
        dataset
    })
}

fn print_fit_summary(result: &FitResult, dataset: &Dataset) {
    println!("model: {}", result.model.kind());
    println!("groups: {}", result.model.num_groups());
    println!(
        "sequences: {} ({} labelled)",
        dataset.len(),
        dataset.num_labelled()
    );
    println!("log-likelihood: {}", result.log_likelihood());
    println!("bic: {}", result.bic);
    println!(
        "iterations: {} ({})",
        result.iterations,
        if result.converged { "converged" } else { "iteration cap" }
    );
    println!("chosen start: {}", result.chosen_start);
    println!(
        "weights: {}",
        result
            .model
            .weights()
            .iter()
            .map(|w| format!("{w:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    if result.floor_decreases > 0 || result.hard_decreases > 0 {
        println!(
            "log-likelihood dips: {} at the floor, {} elsewhere",
            result.floor_decreases, result.hard_decreases
        );
    }
    if let FittedModel::Continuous(m) = &result.model {
        for (g, q) in m.generators.iter().enumerate() {
            let times: Vec<String> = (0..q.num_states())
                .map(|j| format!("{:.3}", q.expected_holding_time(j)))
                .collect();
            println!("mean holding time by state (group {}): {}", g + 1, times.join(" "));
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.fit.seed);
    let dataset = load_dataset_for(args.kind, &args.data)?;
    let config = args.fit.config(args.kind, seed);
    let result = em::fit(&dataset, args.groups, &config)?;
    print_fit_summary(&result, &dataset);
    if let Some(out) = &args.out {
        let doc = FitDocument::from_fit(&result, dataset.len(), args.data.collapse, seed);
        std::fs::write(out, doc.render())?;
        println!("fit written to {}", out.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.fit.seed);
    let dataset = load_dataset_for(args.kind, &args.data)?;
    let mut config = args.fit.config(args.kind, seed);
    config.g_range = args.groups.0..=args.groups.1;
    let sweep = em::sweep(&dataset, &config)?;
    println!("{:>6} {:>16} {:>16}", "G", "log-likelihood", "bic");
    for row in &sweep.rows {
        match (row.loglik, row.bic) {
            (Some(ll), Some(b)) => {
                let marker = if row.num_groups == sweep.best_num_groups() {
                    " *"
                } else {
                    ""
                };
                println!("{:>6} {:>16.4} {:>16.4}{}", row.num_groups, ll, b, marker);
            }
            _ => println!(
                "{:>6} {:>16} {:>16}  ({})",
                row.num_groups,
                "-",
                "-",
                row.error.as_deref().unwrap_or("failed")
            ),
        }
    }
    println!("selected groups: {}", sweep.best_num_groups());
    print_fit_summary(sweep.best(), &dataset);
    if let Some(out) = &args.out {
        let mut doc = FitDocument::from_fit(sweep.best(), dataset.len(), args.data.collapse, seed);
        doc.sweep_rows = sweep
            .rows
            .iter()
            .map(|r| (r.num_groups, r.bic))
            .collect();
        std::fs::write(out, doc.render())?;
        println!("sweep written to {}", out.display());
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.fit)?;
    let doc = FitDocument::parse(&text)?;
    let format = detect_format(&args.input)?;
    let dataset = parse_dataset_with_states(
        &args.input,
        format,
        LabelMode::Keep,
        doc.model.num_states(),
    )?;
    let dataset = if doc.collapsed {
        dataset.collapsed()
    } else {
        dataset
    };
    let truth = parse_truth(&args.truth, dataset.len())?;
    let assignments = em::classify(&doc.model, &dataset)?;

    let (eval_assign, eval_truth): (Vec<usize>, Vec<usize>) = if args.include_labelled {
        (assignments.clone(), truth.clone())
    } else {
        dataset
            .sequences
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label.is_none())
            .map(|(i, _)| (assignments[i], truth[i]))
            .unzip()
    };
    if eval_assign.len() < 2 {
        return Err(CliError::Input(
            "fewer than two sequences to evaluate".into(),
        ));
    }
    let ari = adjusted_rand_index(&eval_assign, &eval_truth)?;
    println!("model: {} with {} groups", doc.model.kind(), doc.model.num_groups());
    println!(
        "evaluated sequences: {}{}",
        eval_assign.len(),
        if args.include_labelled {
            ""
        } else {
            " (unlabelled only)"
        }
    );
    println!("adjusted rand index: {ari}");
    Ok(())
}

/// ARI over the unlabelled sequences of `dataset`.
fn ari_unlabelled(
    assignments: &[usize],
    truth: &[usize],
    dataset: &Dataset,
) -> Result<f64, CliError> {
    let (a, b): (Vec<usize>, Vec<usize>) = dataset
        .sequences
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label.is_none())
        .map(|(i, _)| (assignments[i], truth[i]))
        .unzip();
    Ok(adjusted_rand_index(&a, &b)?)
}

fn cmd_replicate(args: ReplicateArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.fit.seed);
    std::fs::create_dir_all(&args.out)?;
    let default_reps = match args.study {
        StudyName::Msnbc => 1,
        _ => 100,
    };
    let replicates = args.replicates.unwrap_or(default_reps);
    match args.study {
        StudyName::Sim1 | StudyName::Sim2 => {
            replicate_clustering_study(&args, seed, replicates)
        }
        StudyName::Sim3 => replicate_semi_supervised_study(&args, seed, replicates),
        StudyName::Msnbc => replicate_stream_study(&args, seed, replicates),
    }
}

fn study_scenario(study: StudyName, scale: Scale) -> ScenarioKind {
    match (study, scale) {
        (StudyName::Sim1, Scale::Small) => ScenarioKind::Sim1Small,
        (StudyName::Sim1, Scale::Large) => ScenarioKind::Sim1Large,
        (StudyName::Sim2, Scale::Small) => ScenarioKind::Sim2Small,
        (StudyName::Sim2, Scale::Large) => ScenarioKind::Sim2Large,
        (StudyName::Sim3, _) => ScenarioKind::Sim3,
        (StudyName::Msnbc, _) => ScenarioKind::MsnbcAugment,
    }
}

fn base_manifest(args: &ReplicateArgs, seed: u64, replicates: usize, study: &str) -> Manifest {
    let mut manifest = Manifest::new("replicate");
    manifest.put("study", study);
    manifest.put(
        "scale",
        match args.scale {
            Scale::Small => "small",
            Scale::Large => "large",
        },
    );
    manifest.put("replicates", replicates);
    manifest.put("seed", seed);
    manifest.put("groups", format!("{}..{}", args.groups.0, args.groups.1));
    manifest.put("starts", args.fit.starts);
    manifest.put("short-iters", args.fit.short_iters);
    manifest.put("epsilon", args.fit.epsilon);
    manifest.put("max-iters", args.fit.max_iters);
    manifest.put("floor", args.fit.floor);
    manifest
}

const STUDY_TAG: u64 = 0xF17;

fn replicate_clustering_study(
    args: &ReplicateArgs,
    seed: u64,
    replicates: usize,
) -> Result<(), CliError> {
    let study_name = if args.study == StudyName::Sim1 { "sim1" } else { "sim2" };
    let mut spec = ScenarioSpec::preset(study_scenario(args.study, args.scale), seed);
    spec.replicates = replicates;
    let data = generate_scenario(&spec)?;
    let g_values: Vec<usize> = (args.groups.0..=args.groups.1).collect();

    let mut summaries = Vec::new();
    let mut csv = String::from("replicate,model,selected_groups,ari\n");
    for kind in [ModelKind::Cm, ModelKind::Dm] {
        let outcomes: Result<Vec<ReplicateOutcome>, CliError> = data
            .par_iter()
            .enumerate()
            .map(|(r, (dataset, truth))| {
                let mut config = args
                    .fit
                    .config(kind, derive_seed(seed, &[STUDY_TAG, kind as u64, r as u64]));
                config.g_range = args.groups.0..=args.groups.1;
                let sweep = em::sweep(dataset, &config)?;
                let ari =
                    adjusted_rand_index(&sweep.best().assignments(), truth).map_err(CliError::from)?;
                Ok(ReplicateOutcome {
                    selected_groups: sweep.best_num_groups(),
                    ari,
                })
            })
            .collect();
        let outcomes = outcomes?;
        for (r, o) in outcomes.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{}", r + 1, kind, o.selected_groups, o.ari);
        }
        summaries.push(selection_table(kind.as_str(), &g_values, &outcomes)?);
    }

    let table = format_selection_table(&summaries);
    print!("{table}");
    let mut manifest = base_manifest(args, seed, replicates, study_name);
    write_output(&args.out, "selection_table.txt", &table, &mut manifest)?;
    write_output(&args.out, "ari_values.csv", &csv, &mut manifest)?;
    manifest.write(&args.out)?;
    Ok(())
}

fn replicate_semi_supervised_study(
    args: &ReplicateArgs,
    seed: u64,
    replicates: usize,
) -> Result<(), CliError> {
    let mut spec = ScenarioSpec::preset(ScenarioKind::Sim3, seed);
    if args.scale == Scale::Small {
        spec.num_sequences = 50;
        spec.length_range = (4, 25);
    }
    spec.replicates = replicates;
    let data = generate_scenario(&spec)?;
    let num_groups = 3;

    let mut csv = String::from("replicate,model,ari\n");
    let mut summary = String::new();
    for kind in [ModelKind::Cm, ModelKind::Dm] {
        let aris: Result<Vec<f64>, CliError> = data
            .par_iter()
            .enumerate()
            .map(|(r, (dataset, truth))| {
                let config = args
                    .fit
                    .config(kind, derive_seed(seed, &[STUDY_TAG, kind as u64, r as u64]));
                let result = em::fit(dataset, num_groups, &config)?;
                ari_unlabelled(&result.assignments(), truth, dataset)
            })
            .collect();
        let aris = aris?;
        for (r, a) in aris.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{}", r + 1, kind, a);
        }
        let (mean, sd) = mean_sd(&aris);
        let med = median(&aris);
        let _ = writeln!(
            summary,
            "{kind}: median ARI {med:.4}, mean {mean:.4} (sd {sd:.4}) over unlabelled sequences"
        );
    }
    print!("{summary}");
    let mut manifest = base_manifest(args, seed, replicates, "sim3");
    manifest.put("fixed-groups", num_groups);
    write_output(&args.out, "summary.txt", &summary, &mut manifest)?;
    write_output(&args.out, "ari_values.csv", &csv, &mut manifest)?;
    manifest.write(&args.out)?;
    Ok(())
}

fn replicate_stream_study(
    args: &ReplicateArgs,
    seed: u64,
    replicates: usize,
) -> Result<(), CliError> {
    let mut spec = ScenarioSpec::preset(ScenarioKind::MsnbcAugment, seed);
    spec.replicates = replicates;
    let data = generate_scenario(&spec)?;
    let g_values: Vec<usize> = (args.groups.0..=args.groups.1).collect();

    let mut manifest = base_manifest(args, seed, replicates, "msnbc");
    let mut summary = String::new();
    for (r, (dataset, truth)) in data.iter().enumerate() {
        let collapsed = dataset.collapsed();
        let mut table = BicTable::new(g_values.clone());
        let mut cm_best = None;
        for kind in [ModelKind::Dwm, ModelKind::Dm, ModelKind::Cm] {
            // The with-repetition model sees the raw streams; the jump
            // models see collapsed ones (times ride along, summed).
            let view = if kind == ModelKind::Dwm { dataset } else { &collapsed };
            let mut config = args
                .fit
                .config(kind, derive_seed(seed, &[STUDY_TAG, kind as u64, r as u64]));
            config.g_range = args.groups.0..=args.groups.1;
            let sweep = em::sweep(view, &config)?;
            table.push_row(
                kind.as_str(),
                sweep.rows.iter().map(|row| row.bic).collect(),
            );
            if kind == ModelKind::Cm {
                let ari = adjusted_rand_index(&sweep.best().assignments(), truth)
                    .map_err(CliError::from)?;
                cm_best = Some((sweep.best_num_groups(), ari));
            }
        }
        let text = table.format_text();
        print!("{text}");
        let (cm_groups, cm_ari) = cm_best.expect("cm row fitted");
        let spreads: Vec<String> = (0..table.rows.len())
            .map(|row| {
                format!(
                    "{} spread {:.2}",
                    table.rows[row].0,
                    table.row_spread(row).unwrap_or(f64::NAN)
                )
            })
            .collect();
        let _ = writeln!(
            summary,
            "replicate {}: cm selects G={} (ARI {:.4} against the hidden rate sets); {}",
            r + 1,
            cm_groups,
            cm_ari,
            spreads.join(", ")
        );
        let txt_name = format!("bic_table_{:03}.txt", r + 1);
        let csv_name = format!("bic_table_{:03}.csv", r + 1);
        write_output(&args.out, &txt_name, &text, &mut manifest)?;
        write_output(&args.out, &csv_name, &table.format_csv(), &mut manifest)?;
    }
    print!("{summary}");
    write_output(&args.out, "summary.txt", &summary, &mut manifest)?;
    manifest.write(&args.out)?;
    Ok(())
}
