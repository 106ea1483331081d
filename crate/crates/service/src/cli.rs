use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use triage_core::dataset::{encode, read_encoded, schema_from_pack, split_tiers, write_encoded, DatasetError, EncodedDataset, EncodingMode};
use triage_core::questionnaire::{Pack, PackError};
use triage_core::samples::SAMPLE_PACK_SOURCE;
use triage_core::simulator::{clean, generate_cohort, read_cohort, write_cohort, CohortIoError, CohortSpec, InterviewRecord, SimulatorError};
use triage_evaluation::{
    emit_report, run_completeness_sweep, run_model_comparison, ComparisonSpec, EmitOptions, EvalError, EvalReport, NamedConfig,
    ReportFormat, SweepModel, SweepSpec,
};
use triage_learner::{train, tune, Ensemble, GbdtConfig, LearnerError, Strategy, TuneSpec};

use crate::api::{router, AppState, ServiceConfig, DEFAULT_DISCLAIMER};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Config = 2,
    Data = 3,
    Internal = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        let exit = match e {
            LearnerError::InvalidConfig(_) | LearnerError::SchemaMismatch { .. } | LearnerError::ModeMismatch { .. } | LearnerError::Artifact(_) => {
                Exit::Config
            }
            LearnerError::EmptyDataset | LearnerError::SingleLabel | LearnerError::Data(_) => Exit::Data,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::new(Exit::Data, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidSpec(_) | EvalError::UnknownFormat(_) => CliError::new(Exit::Usage, e.to_string()),
            EvalError::Learner(e) => e.into(),
            EvalError::Data(e) => e.into(),
        }
    }
}

fn write_failed(e: io::Error) -> CliError {
    CliError::new(Exit::Internal, format!("write failed: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "Triage interview workbench: rule engine, cohorts, learners, experiments and the prediction service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a questionnaire pack and report on its structure.
    ValidatePack { pack: PathBuf },
    /// Simulate a cohort of completed interviews (one JSON object per line).
    Generate(GenerateArgs),
    /// Clean a cohort and encode it as a sparse dataset.
    Encode(EncodeArgs),
    /// Train a model on an encoded dataset and write the artifact.
    Train(TrainArgs),
    /// Random-search hyperparameters; writes the best config as JSON.
    Tune(TuneArgs),
    /// Compare learners and encodings over repeated stratified splits.
    Evaluate(EvaluateArgs),
    /// Score models on interviews truncated to several completeness levels.
    Sweep(SweepArgs),
    /// Run the interview service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PackArg {
    /// Questionnaire pack; the shipped sample pack when omitted.
    #[arg(long)]
    pack: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pack: PackArg,
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Probability that a simulated answer is drawn at random instead of
    /// following the patient's latent severity.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, short, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pack: PackArg,
    /// `missing` keeps unanswered questions missing; `zero` fills them with 0.
    #[arg(long, default_value = "missing")]
    mode: EncodingMode,
    #[arg(long = "in", short, default_value = "-")]
    input: PathBuf,
    #[arg(long, short, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value = "leaf-wise")]
    strategy: Strategy,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON config file (as written by `tune`); `--strategy` and `--seed`
    /// are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the number of boosting rounds (trees, for a forest).
    #[arg(long)]
    rounds: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<GbdtConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = read_text(path, Exit::Config)?;
                serde_json::from_str(&text).map_err(|e| CliError::new(Exit::Config, format!("{}: {e}", path.display())))?
            }
            None => GbdtConfig::for_strategy(self.strategy).with_seed(self.seed),
        };
        if let Some(rounds) = self.rounds {
            config.n_rounds = rounds;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long = "in", short, default_value = "-")]
    input: PathBuf,
    #[arg(long, short, default_value = "-")]
    out: PathBuf,
    /// Store the training wall-clock time in the artifact (makes it
    /// differ between otherwise identical runs).
    #[arg(long)]
    record_timing: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 20)]
    budget: usize,
    #[arg(long = "in", short, default_value = "-")]
    input: PathBuf,
    #[arg(long, short, default_value = "-")]
    out: PathBuf,
    /// Also write every trial as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pack: PackArg,
    /// Cohort file as written by `generate`.
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "leaf-wise,level-wise,symmetric,forest")]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    rounds: Option<usize>,
    /// Tune each strategy on the experimental tier first, with this many trials.
    #[arg(long)]
    tune_budget: Option<usize>,
    #[arg(long, default_value = "report")]
    out_dir: PathBuf,
    /// Leave wall-clock timings out of the written reports.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "missing,zero")]
    modes: Vec<EncodingMode>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.8,0.6,0.4")]
    levels: Vec<f64>,
    #[arg(long, default_value = "missing")]
    mode: EncodingMode,
    /// Sweep these trained artifacts instead of training from the cohort.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pack: PackArg,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Completeness proxy below which predictions are flagged.
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    #[arg(long, default_value_t = 1800)]
    session_ttl_secs: u64,
    #[arg(long)]
    disclaimer: Option<String>,
}

fn read_text(path: &Path, exit: Exit) -> CliResult<String> {
    let mut text = String::new();
    open(path, exit)?
        .read_to_string(&mut text)
        .map_err(|e| CliError::new(exit, format!("{}: {e}", path.display())))?;
    Ok(text)
}

fn open(path: &Path, exit: Exit) -> CliResult<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin().lock())));
    }
    let file = File::open(path).map_err(|e| CliError::new(exit, format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(file)))
}

fn create(path: &Path) -> CliResult<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).map_err(|e| CliError::new(Exit::Internal, format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn write_all(path: &Path, bytes: &[u8]) -> CliResult {
    let mut out = create(path)?;
    out.write_all(bytes).and_then(|_| out.flush()).map_err(write_failed)
}

fn load_pack(arg: &PackArg) -> CliResult<Pack> {
    let parse = |bytes: &[u8], origin: &str| Pack::parse(bytes).map_err(|e: PackError| CliError::new(Exit::Config, format!("{origin}: {e}")));
    match &arg.pack {
        Some(path) => parse(read_text(path, Exit::Config)?.as_bytes(), &path.display().to_string()),
        None => parse(SAMPLE_PACK_SOURCE.as_bytes(), "sample pack"),
    }
}

fn load_cohort(pack: &Pack, path: &Path) -> CliResult<Vec<InterviewRecord>> {
    let records = read_cohort(pack, open(path, Exit::Data)?).map_err(|e| match e {
        CohortIoError::Io(e) => CliError::new(Exit::Data, format!("{}: {e}", path.display())),
        other => CliError::new(Exit::Data, format!("{}: {other}", path.display())),
    })?;
    let before = records.len();
    let records = clean(records);
    tracing::info!(read = before, kept = records.len(), "cohort cleaned of empty and duplicate interviews");
    Ok(records)
}

fn load_model(path: &Path) -> CliResult<Ensemble> {
    let text = read_text(path, Exit::Config)?;
    Ensemble::from_artifact(&text).map_err(|e| CliError::new(Exit::Config, format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::ValidatePack { pack } => validate_pack(&pack),
        Command::Generate(args) => generate(args),
        Command::Encode(args) => encode_cmd(args),
        Command::Train(args) => train_cmd(args),
        Command::Tune(args) => tune_cmd(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Sweep(args) => sweep(args),
        Command::Serve(args) => serve(args),
    }
}

fn validate_pack(path: &Path) -> CliResult {
    let pack = load_pack(&PackArg { pack: Some(path.to_path_buf()) })?;
    let report = pack.validate();
    let schema = schema_from_pack(&pack);
    let text = format!(
        "pack: {}\nquestionnaires: {}\nquestions: {}\nfeature columns: {}\nschema fingerprint: {}\n{report}",
        path.display(),
        pack.questionnaires().len(),
        pack.questions().count(),
        schema.len(),
        schema.fingerprint(),
    );
    write_all(Path::new("-"), text.as_bytes())
}

fn generate(args: GenerateArgs) -> CliResult {
    let pack = load_pack(&args.pack)?;
    let spec = CohortSpec::golden().with_size(args.n).with_seed(args.seed).with_noise(args.noise);
    let records = generate_cohort(&pack, &spec).map_err(|e: SimulatorError| CliError::new(Exit::Usage, e.to_string()))?;
    let mut out = create(&args.out)?;
    write_cohort(&records, &mut out).map_err(write_failed)?;
    tracing::info!(records = records.len(), seed = args.seed, "cohort generated");
    Ok(())
}

fn encode_cmd(args: EncodeArgs) -> CliResult {
    let pack = load_pack(&args.pack)?;
    let records = load_cohort(&pack, &args.input)?;
    let dataset = encode(&records, &schema_from_pack(&pack), args.mode)?;
    let mut out = create(&args.out)?;
    write_encoded(&dataset, &mut out).and_then(|_| out.flush()).map_err(write_failed)?;
    tracing::info!(rows = dataset.n_rows(), columns = dataset.schema.len(), mode = %args.mode, "dataset encoded");
    Ok(())
}

fn load_dataset(path: &Path) -> CliResult<EncodedDataset> {
    read_encoded(open(path, Exit::Data)?).map_err(|e| CliError::new(Exit::Data, format!("{}: {e}", path.display())))
}

fn train_cmd(args: TrainArgs) -> CliResult {
    let config = args.config.load()?;
    let dataset = load_dataset(&args.input)?;
    let model = train(&config, &dataset)?;
    write_all(&args.out, model.to_artifact(args.record_timing).as_bytes())?;
    tracing::info!(
        strategy = %config.strategy,
        rows = dataset.n_rows(),
        train_ms = model.metadata.train_time_ms.unwrap_or(0.0),
        "model trained"
    );
    Ok(())
}

fn tune_cmd(args: TuneArgs) -> CliResult {
    let template = args.config.load()?;
    let dataset = load_dataset(&args.input)?;
    let spec = TuneSpec {
        budget: args.budget,
        ..TuneSpec::new(template.strategy, template.seed)
    };
    let (best, report) = tune(&spec, &template, &dataset)?;
    let mut text = serde_json::to_string_pretty(&best).expect("configs serialize");
    text.push('\n');
    write_all(&args.out, text.as_bytes())?;
    if let Some(path) = &args.report {
        let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
        text.push('\n');
        write_all(path, text.as_bytes())?;
    }
    tracing::info!(
        trials = report.trials.len(),
        best = report.best_index,
        validation_balanced_accuracy = report.best().validation_balanced_accuracy,
        "tuning finished"
    );
    Ok(())
}

/// The experimental tier (5%) for tuning, and the rest split 80/20 into
/// training and evaluation tiers.
struct TieredCohort {
    experimental: Vec<InterviewRecord>,
    training: Vec<InterviewRecord>,
    evaluation: Vec<InterviewRecord>,
}

fn tiers(records: &[InterviewRecord], seed: u64) -> CliResult<TieredCohort> {
    let labels: Vec<u8> = records.iter().map(|r| r.outcome.ordinal()).collect();
    let t = split_tiers(&labels, 0.05, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(TieredCohort {
        experimental: pick(&t.experimental),
        training: pick(&t.training),
        evaluation: pick(&t.evaluation),
    })
}

/// Default configs per strategy, plus tuned ones when a budget is given.
fn experiment_configs(args: &ExperimentArgs, pack: &Pack, experimental: &[InterviewRecord], mode: EncodingMode) -> CliResult<Vec<NamedConfig>> {
    let mut configs = Vec::new();
    for &strategy in &args.strategies {
        let mut template = GbdtConfig::for_strategy(strategy).with_seed(args.seed);
        if let Some(rounds) = args.rounds {
            template.n_rounds = rounds;
        }
        template.validate()?;
        configs.push(NamedConfig::new(strategy.name(), template.clone()));
        if let Some(budget) = args.tune_budget {
            let dataset = encode(experimental, &schema_from_pack(pack), mode)?;
            let spec = TuneSpec {
                budget,
                ..TuneSpec::new(strategy, args.seed)
            };
            let (best, report) = tune(&spec, &template, &dataset)?;
            tracing::info!(%strategy, best = report.best_index, "tuned");
            std::fs::create_dir_all(&args.out_dir).map_err(write_failed)?;
            let text = serde_json::to_string_pretty(&best).expect("configs serialize") + "\n";
            write_all(&args.out_dir.join(format!("tuned-{strategy}.json")), text.as_bytes())?;
            configs.push(NamedConfig::new(format!("{strategy}+tuned"), best));
        }
    }
    Ok(configs)
}

fn write_reports(report: &EvalReport, args: &ExperimentArgs) -> CliResult {
    std::fs::create_dir_all(&args.out_dir).map_err(write_failed)?;
    let options = EmitOptions { timing: !args.no_timing };
    for format in [ReportFormat::Tsv, ReportFormat::Meta, ReportFormat::PlotData] {
        write_all(&args.out_dir.join(format.file_name()), emit_report(report, format, options).as_bytes())?;
    }
    write_all(Path::new("-"), emit_report(report, ReportFormat::Tsv, options).as_bytes())
}

fn evaluate(args: EvaluateArgs) -> CliResult {
    let common = &args.common;
    if args.modes.is_empty() {
        return Err(CliError::new(Exit::Usage, "at least one encoding mode is needed"));
    }
    let pack = load_pack(&common.pack)?;
    let records = load_cohort(&pack, &common.cohort)?;
    let tiered = tiers(&records, common.seed)?;
    let schema = schema_from_pack(&pack);
    let configs = experiment_configs(common, &pack, &tiered.experimental, args.modes[0])?;
    let datasets = args
        .modes
        .iter()
        .map(|&mode| encode(&tiered.training, &schema, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = ComparisonSpec {
        repetitions: common.reps,
        ..ComparisonSpec::new(configs, common.seed)
    };
    let report = run_model_comparison(&spec, &datasets)?;
    write_reports(&report, common)
}

fn sweep(args: SweepArgs) -> CliResult {
    let common = &args.common;
    let spec = SweepSpec { levels: args.levels.clone() };
    spec.validate()?;
    let pack = load_pack(&common.pack)?;
    let records = load_cohort(&pack, &common.cohort)?;
    let tiered = tiers(&records, common.seed)?;
    let mut models = Vec::new();
    if !args.models.is_empty() {
        for path in &args.models {
            let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            models.push(SweepModel {
                name,
                repetition: 0,
                model: load_model(path)?,
            });
        }
    } else {
        if common.reps == 0 {
            return Err(CliError::new(Exit::Usage, "--reps must be at least 1"));
        }
        let configs = experiment_configs(common, &pack, &tiered.experimental, args.mode)?;
        let dataset = encode(&tiered.training, &schema_from_pack(&pack), args.mode)?;
        for named in &configs {
            for rep in 0..common.reps {
                let config = named.config.clone().with_seed(common.seed + rep as u64);
                models.push(SweepModel {
                    name: named.name.clone(),
                    repetition: rep,
                    model: train(&config, &dataset)?,
                });
            }
        }
    }
    let report = run_completeness_sweep(&spec, &models, &tiered.evaluation)?;
    write_reports(&report, common)
}

fn serve(args: ServeArgs) -> CliResult {
    let pack = load_pack(&args.pack)?;
    let model = load_model(&args.model)?;
    let trained_at = std::fs::metadata(&args.model)
        .and_then(|m| m.modified())
        .ok()
        .map(|t| chrono::DateTime::<chrono::Utc>::from(t).to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let config = ServiceConfig {
        completeness_threshold: args.threshold,
        session_ttl: Duration::from_secs(args.session_ttl_secs),
        disclaimer: args.disclaimer.unwrap_or_else(|| DEFAULT_DISCLAIMER.to_string()),
    };
    let state = Arc::new(AppState::new(pack, model, config, trained_at).map_err(|e| CliError::new(Exit::Config, e.to_string()))?);

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new(Exit::Internal, e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .map_err(|e| CliError::new(Exit::Config, format!("cannot listen on {}: {e}", args.listen)))?;
        let addr = listener.local_addr().map_err(|e| CliError::new(Exit::Internal, e.to_string()))?;
        tracing::info!(%addr, "listening");

        let purge_state = state.clone();
        let every = (state.config().session_ttl / 4).max(Duration::from_secs(1));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let removed = purge_state.sessions.purge_expired(std::time::Instant::now());
                if removed > 0 {
                    tracing::debug!(removed, "expired sessions dropped");
                }
            }
        });

        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::new(Exit::Internal, e.to_string()))
    })
}
