use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynchain::dataset::{load_csv, load_label_matrix, save_csv, write_label_matrix};
use dynchain::ensemble::{build_ensemble, BaseModel, Ensemble, EnsembleConfig, Ordering, Tunable};
use dynchain::harness::{run_experiment, ExperimentSpec};
use dynchain::metrics::{evaluate, CRITERIA};
use dynchain::stats::{friedman_nemenyi, pairwise_wilcoxon_holm, ComparisonMatrix};
use dynchain::synth::{generate, SynthSpec};
use dynchain::{Error, LabelPermutation, RngSeed};

#[derive(Parser)]
#[command(name = "dynchain", version, about = "Multi-label classifier-chain ensembles with per-query label order")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an ensemble on a CSV dataset and save it to a directory.
    Train(TrainArgs),
    /// Predict labels for the rows of a CSV file with a saved ensemble.
    Predict(PredictArgs),
    /// Score predicted labels against the truth and print a JSON report.
    Evaluate(EvaluateArgs),
    /// Run a cross-validated experiment described by an experiment file.
    Benchmark(BenchmarkArgs),
    /// Compare algorithms over datasets from benchmark summary files.
    Compare(CompareArgs),
    /// Write a synthetic dataset with chained label dependence.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training data: features first, then the label columns.
    data: PathBuf,
    /// Number of trailing label columns.
    #[arg(long)]
    labels: usize,
    #[arg(long, default_value = "nb")]
    base: String,
    #[arg(long, default_value = "dynamic")]
    ordering: String,
    /// Chain order for `--ordering fixed`, e.g. "2 0 1".
    #[arg(long)]
    order: Option<String>,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Membership sharpness, or `tune`.
    #[arg(long, default_value = "tune")]
    beta: String,
    /// Neighbour count for the knn base, or `tune`.
    #[arg(long, default_value = "tune")]
    r: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the saved ensemble.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved ensemble directory.
    #[arg(long)]
    model: PathBuf,
    /// Rows to predict: feature columns, optionally followed by label columns.
    data: PathBuf,
    /// Write label scores (vote fractions) instead of hard labels.
    #[arg(long)]
    scores: bool,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground truth; the trailing columns are taken as labels.
    truth: PathBuf,
    /// Predicted labels, one 0/1 column per label.
    predicted: PathBuf,
    /// Report file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Benchmark summary CSV files.
    #[arg(required = true)]
    summaries: Vec<PathBuf>,
    #[arg(long, default_value = "macro_f1_loss")]
    criterion: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    l: usize,
    #[arg(long, default_value_t = 0.5)]
    dependence: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Lib(Error),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Lib(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| io_failure(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(std::io::stdout().lock()))),
    }
}

fn finish(mut w: Box<dyn Write>, path: Option<&Path>) -> Result<(), Failure> {
    w.flush()
        .map_err(|e| io_failure(path.unwrap_or(Path::new("<stdout>")), e))
}

fn parse_ordering(name: &str, order: Option<&str>) -> Result<Ordering, Failure> {
    let mut ordering: Ordering = name.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    match (&mut ordering, order) {
        (Ordering::Fixed(slot), Some(text)) => {
            *slot = Some(LabelPermutation::parse(text).map_err(|e| Failure::Usage(e.to_string()))?);
        }
        (_, Some(_)) => return Err(Failure::Usage("--order only applies to --ordering fixed".into())),
        _ => {}
    }
    Ok(ordering)
}

fn usage<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let config = EnsembleConfig {
        k: a.k,
        base: usage(a.base.parse::<BaseModel>())?,
        ordering: parse_ordering(&a.ordering, a.order.as_deref())?,
        beta: usage(a.beta.parse::<Tunable<f64>>())?,
        r: usage(a.r.parse::<Tunable<usize>>())?,
        seed: RngSeed(a.seed),
        ..EnsembleConfig::default()
    };
    usage(config.validate())?;
    let data = load_csv(&a.data, a.labels)?;
    let ens = build_ensemble(&data, &config)?;
    ens.save(&a.out)?;
    eprintln!(
        "trained {} members ({}) beta={} r={} -> {}",
        ens.members.len(),
        config.algorithm_name(),
        ens.beta,
        ens.r.map_or_else(|| "-".to_string(), |r| r.to_string()),
        a.out.display()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<(), Failure> {
    let ens = Ensemble::load(&a.model)?;
    let data = read_features(&a.data, ens.n_features(), ens.n_labels())?;
    let mut w = output(a.out.as_deref())?;
    let path = a.out.as_deref().unwrap_or(Path::new("<stdout>"));
    if a.scores {
        writeln!(w, "{}", ens.label_names().join(",")).map_err(|e| io_failure(path, e))?;
        for row in data.rows() {
            let p = ens.predict(&row.to_vec())?;
            let line: Vec<String> = p.scores.iter().map(|s| s.to_string()).collect();
            writeln!(w, "{}", line.join(",")).map_err(|e| io_failure(path, e))?;
        }
    } else {
        let hard = ens.predict_matrix(&data)?;
        write_label_matrix(ens.label_names(), &hard, &mut w).map_err(|e| io_failure(path, e))?;
    }
    finish(w, a.out.as_deref())
}

/// Feature matrix from a CSV holding either just the features or features plus labels.
fn read_features(path: &Path, d: usize, l: usize) -> Result<ndarray::Array2<f64>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Lib(Error::Format(format!("{}: {e}", path.display()))))?;
    let total = rdr
        .headers()
        .map_err(|e| Failure::Lib(Error::Parse { row: 1, message: e.to_string() }))?
        .len();
    if total != d && total != d + l {
        return Err(Failure::Lib(Error::Validation(format!(
            "{} has {total} columns; the model expects {d} features (optionally followed by {l} labels)",
            path.display()
        ))));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            Failure::Lib(Error::Parse {
                row: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })?;
        let line = rec.position().map_or(n + 2, |p| p.line() as usize);
        for (j, field) in rec.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Failure::Lib(Error::Parse {
                    row: line,
                    message: format!("column {}: {field:?} is not a number", j + 1),
                })
            })?;
            values.push(v);
        }
        n += 1;
    }
    Ok(ndarray::Array2::from_shape_vec((n, d), values).expect("uniform records"))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), Failure> {
    let (_, predicted) = load_label_matrix(&a.predicted, None)?;
    let (_, truth) = load_label_matrix(&a.truth, Some(predicted.ncols()))?;
    if truth.nrows() != predicted.nrows() {
        return Err(Failure::Lib(Error::Validation(format!(
            "truth has {} rows, prediction has {}",
            truth.nrows(),
            predicted.nrows()
        ))));
    }
    let report = evaluate(&truth, &predicted)?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "{}", report.to_json())
        .map_err(|e| io_failure(a.out.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
    finish(w, a.out.as_deref())
}

fn benchmark(a: BenchmarkArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = RngSeed(seed);
        spec.config.seed = RngSeed(seed);
    }
    if let Some(folds) = a.folds {
        spec.folds = folds;
    }
    if let Some(k) = a.k {
        spec.config.k = k;
    }
    if let Some(b) = &a.beta {
        spec.config.beta = usage(b.parse())?;
    }
    if let Some(r) = &a.r {
        spec.config.r = usage(r.parse())?;
    }
    if let Some(out) = a.out {
        spec.out = Some(out);
    }
    usage(spec.validate())?;
    let out = spec
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("no output directory: set `out` in the experiment file or pass --out".into()))?;
    let result = run_experiment(&spec)?;
    result.write_outputs(&out)?;
    eprintln!(
        "{} cells, {} failed -> {}",
        result.cells.len(),
        result.failed_cells(),
        out.display()
    );
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), Failure> {
    if !CRITERIA.contains(&a.criterion.as_str()) {
        return Err(Failure::Usage(format!(
            "unknown criterion {:?}; expected one of {}",
            a.criterion,
            CRITERIA.join(", ")
        )));
    }
    let m = ComparisonMatrix::from_summary_csvs(&a.summaries, &a.criterion)?;
    let mut w = output(a.out.as_deref())?;
    let path = a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut text = format!(
        "criterion {}: {} algorithms x {} datasets\n\nwilcoxon signed-rank (holm-adjusted)\n",
        a.criterion,
        m.n_algorithms(),
        m.n_datasets()
    );
    for p in pairwise_wilcoxon_holm(&m) {
        match &p.result {
            Ok(r) => text.push_str(&format!(
                "  {} vs {}: n={} T={} p={:.6} p_holm={:.6}{}\n",
                p.first,
                p.second,
                r.n,
                r.statistic,
                r.p_value,
                p.p_adjusted.unwrap_or(f64::NAN),
                if r.exact { " (exact)" } else { "" }
            )),
            Err(e) => text.push_str(&format!("  {} vs {}: not run: {e}\n", p.first, p.second)),
        }
    }
    text.push_str("\nfriedman / nemenyi\n");
    match friedman_nemenyi(&m, a.alpha) {
        Ok(f) => {
            text.push_str(&format!(
                "  chi2={:.6} p={:.6} critical distance (alpha={})={:.6}\n",
                f.statistic, f.p_value, a.alpha, f.critical_distance
            ));
            for (name, r) in m.algorithm_names.iter().zip(&f.avg_ranks) {
                text.push_str(&format!("  {name}: average rank {r:.4}\n"));
            }
        }
        Err(e) => text.push_str(&format!("  not run: {e}\n")),
    }
    w.write_all(text.as_bytes()).map_err(|e| io_failure(&path, e))?;
    finish(w, a.out.as_deref())
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        n: a.n,
        d: a.d,
        l: a.l,
        dependence: a.dependence,
        noise: a.noise,
        seed: RngSeed(a.seed),
    };
    let ds = generate(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    save_csv(&ds, &a.out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Compare(a) => compare(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli)))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(Failure::Internal(msg))
        });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                ExitCode::from(2)
            } else if matches!(e, Error::Argument(_) | Error::Unsupported(_)) {
                ExitCode::from(1)
            } else {
                ExitCode::from(3)
            }
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}
