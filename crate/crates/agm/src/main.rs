use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use agm::bench::{render_report, run_experiment, ExperimentSpec, ReportFormat};
use agm::io::{load_csv, load_table, save_csv, LabelColumn};
use agm::model_file::{load_model, save_model};
use agm::Error;
use agm_core::data::{random_split, stratified_split, stratified_subsample};
use agm_core::{
    fit_cascade, AgmConfig, CascadeModel, Classifier, EvalOn, FeatureMode, LearnerSpec, PcaFit,
    Version,
};
use clap::{Args, Parser, Subcommand};

// stdout may be a closed pipe (`agm eval ... | head`); that is not an error.
macro_rules! outln {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! out {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "agm", version, about = "Adaptive stacking cascade: train, predict, evaluate, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a cascade on a labelled CSV and save it.
    Train(TrainArgs),
    /// Predict class names for every row of a CSV.
    Predict(PredictArgs),
    /// Accuracy and confusion counts on a labelled CSV.
    Eval(EvalArgs),
    /// Write a train/holdout split of a labelled CSV.
    Split(SplitArgs),
    /// Run a multi-seed benchmark spec.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV file.
    #[arg(long)]
    data: PathBuf,
    /// The first row is data, not a header.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Label column: header name or zero-based index.
    #[arg(long)]
    label: LabelColumn,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ConfigArgs {
    /// v1: fixed width, no PCA. v2: fixed width, PCA. v3: adaptive width, PCA.
    #[arg(long, default_value = "v3")]
    version: Version,
    /// Models per layer for v1/v2.
    #[arg(long, default_value_t = 4)]
    width: usize,
    /// Equal-accuracy layers tolerated (in total) before depth growth stops.
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Comma-separated learner specs each layer draws from.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "random-forest-100,gbdt-100,extra-trees-100"
    )]
    base_models: Vec<LearnerSpec>,
    /// Learner added per width-probe step.
    #[arg(long, default_value = "random-forest-100")]
    probe_model: LearnerSpec,
    /// Learner that scores each width-probe step.
    #[arg(long, default_value = "random-forest-100")]
    val_model: LearnerSpec,
    /// Share of the training rows held out to drive width and depth.
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// What each model passes to the next layer: probability or label.
    #[arg(long, default_value = "probability")]
    feature_mode: FeatureMode,
    /// Rows the PCA is fitted on: train or joint (train + validation).
    #[arg(long, default_value = "train")]
    pca_fit: PcaFit,
    /// Rows layer accuracy is measured on: val or train.
    #[arg(long, default_value = "val")]
    eval_on: EvalOn,
    /// Keep the width probe's best accuracy across layers.
    #[arg(long)]
    global_acc_w: bool,
    /// Out-of-fold probe blocks with this many folds.
    #[arg(long)]
    probe_oof_folds: Option<usize>,
    #[arg(long, default_value_t = 16)]
    max_layers: usize,
    #[arg(long, default_value_t = 16)]
    max_width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn to_config(&self) -> AgmConfig {
        AgmConfig {
            version: self.version,
            fixed_width: self.width,
            patience: self.patience,
            base_model_set: self.base_models.clone(),
            probe_model: self.probe_model,
            val_model: self.val_model,
            val_fraction: self.val_fraction,
            feature_mode: self.feature_mode,
            pca_fit: self.pca_fit,
            eval_on: self.eval_on,
            global_acc_w: self.global_acc_w,
            probe_oof_folds: self.probe_oof_folds,
            max_layers: self.max_layers,
            max_width: self.max_width,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Column to ignore, e.g. the label column of a training CSV.
    #[arg(long)]
    label: Option<LabelColumn>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add one probability column per class.
    #[arg(long)]
    proba: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    label: LabelColumn,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    label: LabelColumn,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    holdout_out: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Unstratified split.
    #[arg(long)]
    random: bool,
    /// Stratified row cap applied before splitting.
    #[arg(long)]
    max_rows: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// markdown or csv.
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Fail (exit 2) if any dataset cannot be loaded.
    #[arg(long)]
    strict: bool,
    /// Worker threads. Results do not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        use agm_core::Error as C;
        match &e {
            Error::Core(C::InvalidConfig(_)) => Failure::Usage(e.to_string()),
            Error::Core(C::NonFiniteLoss { .. }) => Failure::Internal(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<agm_core::Error> for Failure {
    fn from(e: agm_core::Error) -> Self {
        Error::Core(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Split(a) => split(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}

fn train(a: TrainArgs) -> CmdResult {
    let config = a.config.to_config();
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let ds = load_csv(&a.input.data, &a.label, !a.input.no_header)?;
    let start = Instant::now();
    let model = fit_cascade(&ds, &config)?;
    save_model(&model, &a.out)?;
    print_summary(&model);
    outln!("trained in {:.1}s, saved to {}", start.elapsed().as_secs_f64(), a.out.display());
    Ok(())
}

fn print_summary(m: &CascadeModel) {
    let history: Vec<String> = m
        .acc_history()
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{a:.4}{}", if m.is_pruned(i) { " (pruned)" } else { "" }))
        .collect();
    outln!(
        "layers: {} kept of {} grown (stopped: {})",
        m.layers().len(),
        m.layers_grown(),
        m.stop_reason().as_str()
    );
    for (i, layer) in m.layers().iter().enumerate() {
        let kinds: Vec<String> = layer.kinds.iter().map(|k| k.to_string()).collect();
        let pca = layer
            .pca
            .as_ref()
            .map_or_else(String::new, |p| format!(", pca {} -> {}", p.input_dim(), p.k()));
        outln!(
            "  layer {i}: width {} [{}]{pca}, val accuracy {:.4}",
            layer.width(),
            kinds.join(", "),
            layer.val_accuracy
        );
    }
    outln!("widths: {:?}", m.widths());
    outln!("val accuracy history: {}", history.join(", "));
}

fn check_width(model: &CascadeModel, got: usize, path: &Path) -> CmdResult {
    let want = model.n_features_in();
    if got != want {
        return Err(Failure::Data(format!(
            "{}: model expects {want} feature columns, data has {got}",
            path.display()
        )));
    }
    Ok(())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn predict(a: PredictArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let table = load_table(&a.input.data, a.label.as_ref(), !a.input.no_header)?;
    check_width(&model, table.features.cols(), &a.input.data)?;
    let (labels, proba) = model.predict_with_proba(&table.features)?;
    let names = model.class_names();
    let write_err = |e: std::io::Error| Failure::Data(format!("writing predictions: {e}"));
    let mut w = csv::Writer::from_writer(open_out(a.out.as_deref())?);
    let mut header = vec!["prediction".to_string()];
    if a.proba {
        header.extend(names.iter().map(|n| format!("p_{n}")));
    }
    w.write_record(&header).map_err(|e| write_err(e.into()))?;
    for (i, &l) in labels.iter().enumerate() {
        let mut row = vec![names[l].clone()];
        if a.proba {
            row.extend(proba.row(i).iter().map(f64::to_string));
        }
        w.write_record(&row).map_err(|e| write_err(e.into()))?;
    }
    w.flush().map_err(write_err)?;
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let table = load_table(&a.input.data, Some(&a.label), !a.input.no_header)?;
    check_width(&model, table.features.cols(), &a.input.data)?;
    let truth = table.labels.unwrap_or_default();
    let pred = model.predict(&table.features)?;
    let names = model.class_names();

    let mut row_names: Vec<String> = names.to_vec();
    for t in &truth {
        if !row_names.contains(t) {
            row_names.push(t.clone());
        }
    }
    let mut counts = vec![vec![0usize; names.len()]; row_names.len()];
    let mut correct = 0;
    for (t, &p) in truth.iter().zip(&pred) {
        let r = row_names.iter().position(|n| n == t).unwrap();
        counts[r][p] += 1;
        correct += usize::from(*t == names[p]);
    }
    outln!(
        "accuracy: {:.4} ({correct}/{})",
        correct as f64 / truth.len() as f64,
        truth.len()
    );
    outln!("confusion (rows: true, columns: predicted)");
    let w = row_names.iter().map(String::len).max().unwrap_or(0).max(4);
    let cols: Vec<String> = names.iter().map(|n| format!("{n:>8}")).collect();
    outln!("{:w$} {}", "", cols.join(" "));
    for (name, row) in row_names.iter().zip(&counts) {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>8}")).collect();
        outln!("{name:w$} {}", cells.join(" "));
    }
    Ok(())
}

fn split(a: SplitArgs) -> CmdResult {
    let table = load_table(&a.input.data, Some(&a.label), !a.input.no_header)?;
    let label_name = table.label_name.clone().unwrap_or_else(|| "label".into());
    let mut ds = table.into_dataset(&a.input.data.display().to_string())?;
    if let Some(cap) = a.max_rows {
        ds = stratified_subsample(&ds, cap, a.seed)?;
    }
    let pair = if a.random {
        random_split(&ds, a.fraction, a.seed)?
    } else {
        stratified_split(&ds, a.fraction, a.seed)?
    };
    save_csv(&a.train_out, &pair.train, &label_name)?;
    save_csv(&a.holdout_out, &pair.holdout, &label_name)?;
    outln!(
        "train: {} rows -> {}\nholdout: {} rows -> {}",
        pair.train.n_samples(),
        a.train_out.display(),
        pair.holdout.n_samples(),
        a.holdout_out.display()
    );
    Ok(())
}

fn bench(a: BenchArgs) -> CmdResult {
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let spec = ExperimentSpec::load(&a.spec)?;
    let start = Instant::now();
    let report = run_experiment(&spec, a.jobs)?;
    for (name, why) in &report.failures {
        eprintln!("warning: dataset {name} skipped: {why}");
    }
    if a.strict && !report.failures.is_empty() {
        return Err(Failure::Data(format!(
            "{} dataset(s) failed to load",
            report.failures.len()
        )));
    }
    let text = render_report(&report, a.format);
    match &a.out {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            out!("{}", render_report(&report, ReportFormat::Markdown));
            outln!("report written to {}", p.display());
        }
        None => out!("{text}"),
    }
    for c in &report.cells {
        let secs: f64 = c.runs.iter().map(|r| r.wall_time.as_secs_f64()).sum();
        eprintln!("{} / {}: {secs:.1}s", c.dataset, c.method);
    }
    eprintln!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
