//! Command-line front end.
//!
//! Every subcommand reads its inputs without modifying them and writes each
//! output file atomically. Errors print a single `error: …` line to stderr.
//! Machine-readable reports are JSON lines with the fields `metric`, `mode`,
//! `bits`, `seed`, `value`, `dataset`, always in that order.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{self, ApDenominator, Ranking};
use crate::experiment::{self, Benchmark, Corpora, Mode, SeedRun, Variant};
use crate::hasher::{self, binarize, PreprocessFlags};
use crate::index::{self, CodeDatabase};
use crate::io;
use crate::synth::{self, ClusterSpec};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "BINHASH_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "binhash",
    version,
    about = "Training-free binary hashing of embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit PCA basis and rotation on training embeddings.
    Fit(FitArgs),
    /// Encode embeddings into packed binary codes.
    Encode(EncodeArgs),
    /// Retrieve the top-k database codes for each query embedding.
    Query(QueryArgs),
    /// Compute mAP of a model on labelled database/query sets.
    Eval(EvalArgs),
    /// Write a synthetic labelled benchmark.
    Synth(SynthArgs),
    /// Compare the pipeline against its ablation variants.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct FlagArgs {
    /// Skip per-embedding L2 normalization.
    #[arg(long)]
    pub no_l2: bool,
    /// Skip mean-centering before PCA.
    #[arg(long)]
    pub no_center: bool,
}

impl FlagArgs {
    fn flags(self) -> PreprocessFlags {
        PreprocessFlags {
            l2_normalize: !self.no_l2,
            mean_center: !self.no_center,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training embeddings (HBEM).
    #[arg(long)]
    pub train: PathBuf,
    /// Code length in bits.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub bits: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub flags: FlagArgs,
    /// Output model (HBMD).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Embeddings to encode (HBEM).
    #[arg(long)]
    pub data: PathBuf,
    /// Output codes (HBCD).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    Asym,
    Sym,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Database codes (HBCD).
    #[arg(long)]
    pub db: PathBuf,
    /// Query embeddings (HBEM).
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    #[arg(long, value_enum, default_value_t = SearchMode::Asym)]
    pub mode: SearchMode,
    /// Write results here instead of stdout (tab-separated).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Asym,
    Sym,
    Float,
}

impl From<EvalMode> for Mode {
    fn from(m: EvalMode) -> Self {
        match m {
            EvalMode::Asym => Mode::Asym,
            EvalMode::Sym => Mode::Sym,
            EvalMode::Float => Mode::Float,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApArg {
    /// Divide by relevant items retrieved within the cutoff.
    Retrieved,
    /// Divide by min(total relevant, cutoff).
    MinRelevant,
}

impl From<ApArg> for ApDenominator {
    fn from(a: ApArg) -> Self {
        match a {
            ApArg::Retrieved => ApDenominator::Retrieved,
            ApArg::MinRelevant => ApDenominator::MinRelevantCutoff,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalInputs {
    /// Database embeddings (HBEM) or precomputed codes (HBCD).
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub db_labels: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub query_labels: PathBuf,
    /// mAP cutoff; defaults to the database size.
    #[arg(long)]
    pub k_eval: Option<usize>,
    #[arg(long, value_enum, default_value_t = ApArg::Retrieved)]
    pub ap_denominator: ApArg,
    /// Comma-separated rotation seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Dataset name written into the report.
    #[arg(long, default_value = "unnamed")]
    pub dataset: String,
    /// Machine-readable report (JSON lines).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub inputs: EvalInputs,
    #[arg(long, value_enum, default_value_t = EvalMode::Asym)]
    pub mode: EvalMode,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving db.hbem, db.hblb, queries.hbem, queries.hblb.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 250)]
    pub per_class: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 40)]
    pub intrinsic_dim: usize,
    #[arg(long, default_value_t = 0.15)]
    pub intra_spread: f64,
    #[arg(long, default_value_t = 1.0)]
    pub inter_scale: f64,
    #[arg(long, default_value_t = 0.0)]
    pub offset_scale: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub query_fraction: f64,
    /// Assign 1..=N labels per item instead of one.
    #[arg(long)]
    pub multilabel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Training embeddings for the dataset-specific PCA.
    #[arg(long)]
    pub train: PathBuf,
    /// Separate corpus for the global-PCA variants.
    #[arg(long)]
    pub global_train: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: EvalInputs,
    /// Comma-separated code lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [16u32, 32, 64])]
    pub bits: Vec<u32>,
    #[arg(long, value_enum, default_value_t = EvalMode::Asym)]
    pub mode: EvalMode,
    #[command(flatten)]
    pub flags: FlagArgs,
}

/// One line of the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRecord {
    pub metric: String,
    pub mode: String,
    pub bits: usize,
    pub seed: Option<u64>,
    pub value: f64,
    pub dataset: String,
}

/// Failure of a subcommand; `usage` selects exit code 2 instead of 1.
#[derive(Debug)]
pub struct CliError {
    pub usage: bool,
    pub error: Error,
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        let usage = matches!(
            error,
            Error::RankOutOfRange { .. } | Error::InvalidArgument(_)
        );
        Self { usage, error }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        usage: true,
        error: Error::InvalidArgument(msg.into()),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn require_out_dir(path: &Path) -> CliResult<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(usage(format!(
            "output directory {} does not exist",
            parent.display()
        )))
    }
}

/// Parse `args`, run, print diagnostics and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let line = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: {line}");
            return 2;
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            let msg = e.error.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            if e.usage {
                2
            } else {
                1
            }
        }
    }
}

/// Run a parsed command; returns the text destined for stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Query(a) => cmd_query(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Ablate(a) => cmd_ablate(&a),
    }
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<String> {
    require_file(&a.train)?;
    require_out_dir(&a.out)?;
    let x = io::read_hbem(&a.train)?;
    let k = a.bits as usize;
    if k > x.d() || k > x.n() {
        return Err(usage(format!(
            "--bits {k} exceeds min(n, d) = {} for {}",
            x.n().min(x.d()),
            a.train.display()
        )));
    }
    let summary = hasher::fit_with_spectrum(&x, k, a.seed, a.flags.flags())?;
    io::write_hbmd(&summary.model, &a.out)?;
    Ok(format!(
        "fit n={} d={} k={} seed={} explained_variance={:.6} -> {}\n",
        x.n(),
        x.d(),
        k,
        a.seed,
        summary.explained_variance,
        a.out.display()
    ))
}

pub fn cmd_encode(a: &EncodeArgs) -> CliResult<String> {
    require_file(&a.model)?;
    require_file(&a.data)?;
    require_out_dir(&a.out)?;
    let model = io::read_hbmd(&a.model)?;
    let x = io::read_hbem(&a.data)?;
    let db = model.encode_batch(&x)?;
    io::write_hbcd(&db, &a.out)?;
    Ok(format!(
        "encode n={} k={} -> {}\n",
        db.len(),
        db.k(),
        a.out.display()
    ))
}

pub fn cmd_query(a: &QueryArgs) -> CliResult<String> {
    require_file(&a.model)?;
    require_file(&a.db)?;
    require_file(&a.queries)?;
    if let Some(out) = &a.out {
        require_out_dir(out)?;
    }
    if a.topk == 0 {
        return Err(usage("--topk must be at least 1"));
    }
    let model = io::read_hbmd(&a.model)?;
    let db = io::read_hbcd(&a.db)?;
    let q = io::read_hbem(&a.queries)?;
    if db.k() != model.k() {
        return Err(Error::DimensionMismatch {
            expected: model.k(),
            found: db.k(),
        }
        .into());
    }
    let probs = model.project_batch(&q)?;
    let mut text = String::from("query\trank\tid\tscore\n");
    for (qi, p) in probs.iter().enumerate() {
        let hits = match a.mode {
            SearchMode::Asym => index::search_asymmetric(&db, p, a.topk)?,
            SearchMode::Sym => index::search_symmetric(&db, &binarize(p), a.topk)?,
        };
        for (rank, (id, score)) in hits.ids.iter().zip(&hits.scores).enumerate() {
            let _ = writeln!(text, "{qi}\t{rank}\t{id}\t{score}");
        }
    }
    match &a.out {
        Some(path) => {
            io::write_atomic(path, text.as_bytes())?;
            Ok(format!(
                "query n={} topk={} -> {}\n",
                q.n(),
                a.topk,
                path.display()
            ))
        }
        None => Ok(text),
    }
}

enum Database {
    Embeddings(crate::data::EmbeddingMatrix),
    Codes(CodeDatabase),
}

fn read_database(path: &Path) -> Result<Database> {
    let bytes = std::fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(&io::HBCD_MAGIC) {
        Ok(Database::Codes(io::decode_hbcd(&bytes)?))
    } else {
        Ok(Database::Embeddings(io::decode_hbem(&bytes)?))
    }
}

struct LoadedInputs {
    db: Database,
    db_labels: crate::eval::LabelSet,
    queries: crate::data::EmbeddingMatrix,
    query_labels: crate::eval::LabelSet,
    k_eval: usize,
    warning: Option<String>,
}

fn load_inputs(i: &EvalInputs) -> CliResult<LoadedInputs> {
    for p in [&i.db, &i.db_labels, &i.queries, &i.query_labels] {
        require_file(p)?;
    }
    if let Some(r) = &i.report {
        require_out_dir(r)?;
    }
    let db = read_database(&i.db)?;
    let db_labels = io::read_hblb(&i.db_labels)?;
    let queries = io::read_hbem(&i.queries)?;
    let query_labels = io::read_hblb(&i.query_labels)?;
    let n = match &db {
        Database::Embeddings(x) => x.n(),
        Database::Codes(c) => c.len(),
    };
    if db_labels.len() != n {
        return Err(Error::LabelMismatch {
            what: "database labels",
            expected: n,
            found: db_labels.len(),
        }
        .into());
    }
    if query_labels.len() != queries.n() {
        return Err(Error::LabelMismatch {
            what: "query labels",
            expected: queries.n(),
            found: query_labels.len(),
        }
        .into());
    }
    if db_labels.classes() != query_labels.classes() {
        return Err(usage(format!(
            "class count differs: database {} vs queries {}",
            db_labels.classes(),
            query_labels.classes()
        )));
    }
    let requested = i.k_eval.unwrap_or(n);
    if requested == 0 {
        return Err(usage("--k-eval must be at least 1"));
    }
    let warning = (requested > n)
        .then(|| format!("warning: --k-eval {requested} exceeds database size {n}; using {n}"));
    Ok(LoadedInputs {
        db,
        db_labels,
        queries,
        query_labels,
        k_eval: requested.min(n).max(1),
        warning,
    })
}

fn format_pct(mean: f64, std: f64) -> String {
    format!("{:.1}±{:.1}", 100.0 * mean, 100.0 * std)
}

fn write_report(path: Option<&PathBuf>, records: &[ReportRecord]) -> Result<()> {
    if let Some(path) = path {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("plain record serializes"));
            text.push('\n');
        }
        io::write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

fn seed_records(run: &SeedRun, mode: &str, k_eval: usize, dataset: &str) -> Vec<ReportRecord> {
    let metric = format!("map@{k_eval}");
    let mut out: Vec<ReportRecord> = run
        .seeds
        .iter()
        .zip(&run.per_seed)
        .map(|(&s, &v)| ReportRecord {
            metric: metric.clone(),
            mode: mode.to_string(),
            bits: run.bits,
            seed: Some(s),
            value: v,
            dataset: dataset.to_string(),
        })
        .collect();
    for (suffix, value) in [("mean", run.mean), ("std", run.std)] {
        out.push(ReportRecord {
            metric: format!("{metric}:{suffix}"),
            mode: mode.to_string(),
            bits: run.bits,
            seed: None,
            value,
            dataset: dataset.to_string(),
        });
    }
    out
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<String> {
    require_file(&a.model)?;
    let inputs = load_inputs(&a.inputs)?;
    let model = io::read_hbmd(&a.model)?;
    let mode: Mode = a.mode.into();
    let convention: ApDenominator = a.inputs.ap_denominator.into();
    let seeds = if a.inputs.seeds.is_empty() {
        vec![model.seed()]
    } else {
        a.inputs.seeds.clone()
    };
    if inputs.queries.d() != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            found: inputs.queries.d(),
        }
        .into());
    }

    let per_seed: Vec<f64> = match &inputs.db {
        Database::Codes(codes) => {
            if mode == Mode::Float {
                return Err(usage("--mode float needs database embeddings, not codes"));
            }
            if codes.k() != model.k() {
                return Err(Error::DimensionMismatch {
                    expected: model.k(),
                    found: codes.k(),
                }
                .into());
            }
            if seeds.iter().any(|&s| s != model.seed()) {
                return Err(usage(
                    "precomputed codes are tied to the model's rotation; pass database embeddings to vary seeds",
                ));
            }
            let probs = model.project_batch(&inputs.queries)?;
            let report = match mode {
                Mode::Asym => eval::mean_ap(
                    Ranking::Asymmetric {
                        db: codes,
                        queries: &probs,
                    },
                    &inputs.query_labels,
                    &inputs.db_labels,
                    inputs.k_eval,
                    convention,
                )?,
                _ => {
                    let q: Vec<_> = probs.iter().map(binarize).collect();
                    eval::mean_ap(
                        Ranking::Symmetric {
                            db: codes,
                            queries: &q,
                        },
                        &inputs.query_labels,
                        &inputs.db_labels,
                        inputs.k_eval,
                        convention,
                    )?
                }
            };
            vec![report.map; seeds.len()]
        }
        Database::Embeddings(x) => {
            let mut bench = Benchmark::new(
                x.clone(),
                inputs.db_labels.clone(),
                inputs.queries.clone(),
                inputs.query_labels.clone(),
                inputs.k_eval,
            )?;
            bench.convention = convention;
            if mode == Mode::Float {
                vec![bench.evaluate(&model, mode)?.map; seeds.len()]
            } else {
                seeds
                    .iter()
                    .map(|&s| {
                        let m = if s == model.seed() {
                            model.clone()
                        } else {
                            model.with_rotation_seed(s)?
                        };
                        Ok(bench.evaluate(&m, mode)?.map)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        }
    };
    let (mean, std) = eval::mean_std(&per_seed);
    let run = SeedRun {
        variant: Variant::Full,
        mode,
        bits: model.k(),
        seeds: seeds.clone(),
        per_seed,
        mean,
        std,
    };
    write_report(
        a.inputs.report.as_ref(),
        &seed_records(&run, mode.as_str(), inputs.k_eval, &a.inputs.dataset),
    )?;

    let mut text = String::new();
    if let Some(w) = &inputs.warning {
        eprintln!("{w}");
    }
    let _ = writeln!(
        text,
        "dataset={} mode={} bits={} k_eval={} seeds={}",
        a.inputs.dataset,
        mode,
        model.k(),
        inputs.k_eval,
        seeds.len()
    );
    let _ = writeln!(
        text,
        "mAP@{} = {} (%)",
        inputs.k_eval,
        format_pct(mean, std)
    );
    Ok(text)
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<String> {
    if !a.out_dir.is_dir() {
        return Err(usage(format!(
            "output directory {} does not exist",
            a.out_dir.display()
        )));
    }
    let spec = ClusterSpec {
        n_classes: a.classes,
        per_class: a.per_class,
        d: a.dim,
        intra_spread: a.intra_spread,
        inter_scale: a.inter_scale,
        intrinsic_dim: a.intrinsic_dim,
        offset_scale: a.offset_scale,
        seed: a.seed,
    };
    let set = match a.multilabel {
        Some(max) => synth::generate_multilabel(&spec, max)?,
        None => synth::generate(&spec)?,
    };
    let split = synth::split(&set.embeddings, &set.labels, a.query_fraction, a.seed)?;
    let dir = &a.out_dir;
    io::write_hbem(&split.database, dir.join("db.hbem"))?;
    io::write_hblb(&split.database_labels, dir.join("db.hblb"))?;
    io::write_hbem(&split.queries, dir.join("queries.hbem"))?;
    io::write_hblb(&split.query_labels, dir.join("queries.hblb"))?;
    Ok(format!(
        "synth classes={} d={} database={} queries={} -> {}\n",
        a.classes,
        a.dim,
        split.database.n(),
        split.queries.n(),
        dir.display()
    ))
}

pub fn cmd_ablate(a: &AblateArgs) -> CliResult<String> {
    require_file(&a.train)?;
    if let Some(g) = &a.global_train {
        require_file(g)?;
    }
    if a.bits.is_empty() || a.bits.iter().any(|&b| b == 0 || b > 4096) {
        return Err(usage("--bits values must be in 1..=4096"));
    }
    let inputs = load_inputs(&a.inputs)?;
    let Database::Embeddings(database) = inputs.db else {
        return Err(usage("ablate needs database embeddings, not codes"));
    };
    let train = io::read_hbem(&a.train)?;
    let global = a.global_train.as_ref().map(io::read_hbem).transpose()?;
    let seeds = if a.inputs.seeds.is_empty() {
        (0..10).collect()
    } else {
        a.inputs.seeds.clone()
    };
    let mut bench = Benchmark::new(
        database,
        inputs.db_labels,
        inputs.queries,
        inputs.query_labels,
        inputs.k_eval,
    )?;
    bench.convention = a.inputs.ap_denominator.into();
    let mut variants = vec![Variant::Full, Variant::NoRotation, Variant::NoPca];
    if global.is_some() {
        variants.extend([Variant::GlobalPca, Variant::GlobalPcaNoRotation]);
    }
    let bits: Vec<usize> = a.bits.iter().map(|&b| b as usize).collect();
    let mode: Mode = a.mode.into();
    let corpora = Corpora {
        train: &train,
        global: global.as_ref(),
        flags: a.flags.flags(),
    };
    let rows = experiment::ablation_table(&bench, corpora, &variants, &bits, &seeds, mode)?;

    let mut records = Vec::new();
    let mut text = String::new();
    if let Some(w) = &inputs.warning {
        eprintln!("{w}");
    }
    let _ = writeln!(
        text,
        "dataset={} mode={} k_eval={} seeds={}",
        a.inputs.dataset,
        mode,
        inputs.k_eval,
        seeds.len()
    );
    let _ = writeln!(text, "{:<24} {:>5} {:>12}", "variant", "bits", "mAP (%)");
    for row in &rows {
        let _ = writeln!(
            text,
            "{:<24} {:>5} {:>12}",
            row.variant.as_str(),
            row.bits,
            format_pct(row.mean, row.std)
        );
        let mode_label = format!("{}:{}", mode, row.variant);
        records.extend(seed_records(
            row,
            &mode_label,
            inputs.k_eval,
            &a.inputs.dataset,
        ));
    }
    write_report(a.inputs.report.as_ref(), &records)?;
    Ok(text)
}

/// Configure the global thread pool from [`THREADS_ENV`], if set.
pub fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}
