//! Multi-seed holdout benchmark.
//!
//! Every (dataset, seed) pair gets one stratified train/holdout split shared
//! by all methods, so methods are compared on identical rows. Cells run in
//! parallel but the report is assembled in spec order, so the output does not
//! depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use agm_core::cascade::{fit_two_layer_stacking, StackingConfig};
use agm_core::data::{random_split, stratified_split, stratified_subsample};
use agm_core::{
    fit_cascade, AgmConfig, Classifier, Dataset, DefaultFactory, LearnerFactory, LearnerSpec,
    Version,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::{load_csv, LabelColumn};

/// Environment variable that replaces the spec's `data_dir`.
pub const DATA_DIR_ENV: &str = "AGM_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    AgmV1,
    AgmV2,
    AgmV3,
    #[serde(rename = "random_forest_1000")]
    RandomForest1000,
    #[serde(rename = "gbdt_1000")]
    Gbdt1000,
    /// Cascade with fixed width and no PCA.
    FixedCascade,
    TwoLayerStacking,
}

impl MethodId {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::AgmV1 => "agm_v1",
            MethodId::AgmV2 => "agm_v2",
            MethodId::AgmV3 => "agm_v3",
            MethodId::RandomForest1000 => "random_forest_1000",
            MethodId::Gbdt1000 => "gbdt_1000",
            MethodId::FixedCascade => "fixed_cascade",
            MethodId::TwoLayerStacking => "two_layer_stacking",
        }
    }

    fn is_cascade(self) -> bool {
        matches!(
            self,
            MethodId::AgmV1 | MethodId::AgmV2 | MethodId::AgmV3 | MethodId::FixedCascade
        )
    }
}

/// Cascade settings a method entry may override. Unset fields keep the
/// method's defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub fixed_width: Option<usize>,
    pub patience: Option<usize>,
    pub base_model_set: Option<Vec<String>>,
    pub probe_model: Option<String>,
    pub val_model: Option<String>,
    pub val_fraction: Option<f64>,
    pub feature_mode: Option<String>,
    pub pca_fit: Option<String>,
    pub eval_on: Option<String>,
    pub global_acc_w: Option<bool>,
    pub probe_oof_folds: Option<usize>,
    pub max_layers: Option<usize>,
    pub max_width: Option<usize>,
}

fn parse_field<T: std::str::FromStr<Err = agm_core::Error>>(s: &str) -> Result<T> {
    Ok(s.parse()?)
}

impl ConfigOverrides {
    pub fn apply(&self, c: &mut AgmConfig) -> Result<()> {
        macro_rules! copy {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        copy!(fixed_width, patience, val_fraction, global_acc_w, max_layers, max_width);
        if let Some(k) = self.probe_oof_folds {
            c.probe_oof_folds = Some(k);
        }
        if let Some(set) = &self.base_model_set {
            c.base_model_set = set.iter().map(|s| parse_field(s)).collect::<Result<_>>()?;
        }
        if let Some(s) = &self.probe_model {
            c.probe_model = parse_field(s)?;
        }
        if let Some(s) = &self.val_model {
            c.val_model = parse_field(s)?;
        }
        if let Some(s) = &self.feature_mode {
            c.feature_mode = parse_field(s)?;
        }
        if let Some(s) = &self.pca_fit {
            c.pca_fit = parse_field(s)?;
        }
        if let Some(s) = &self.eval_on {
            c.eval_on = parse_field(s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    /// Header name or zero-based index.
    pub label: String,
    #[serde(default = "yes")]
    pub has_header: bool,
    /// Stratified row cap applied before splitting.
    pub max_rows: Option<usize>,
    /// Name under which published reference numbers are looked up; defaults to `name`.
    pub reference: Option<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub id: MethodId,
    /// Column title; defaults to the id.
    pub label: Option<String>,
    /// Replaces the single learner of `random_forest_1000` / `gbdt_1000`, or
    /// the base learner of `two_layer_stacking`.
    pub learner: Option<String>,
    pub folds: Option<usize>,
    #[serde(default)]
    pub config: ConfigOverrides,
}

impl MethodEntry {
    pub fn title(&self) -> &str {
        self.label.as_deref().unwrap_or(self.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Base directory for relative dataset paths, itself relative to the spec file.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    pub datasets: Vec<DatasetEntry>,
    pub methods: Vec<MethodEntry>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    /// Unstratified split, for fidelity experiments.
    #[serde(default)]
    pub random_split: bool,
}

fn default_holdout() -> f64 {
    0.2
}

impl ExperimentSpec {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Spec {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate(path)?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.data_dir = Some(match (std::env::var_os(DATA_DIR_ENV), &spec.data_dir) {
            (Some(env), _) => PathBuf::from(env),
            (None, Some(d)) => base.join(d),
            (None, None) => base.to_path_buf(),
        });
        Ok(spec)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let fail = |message: &str| Error::Spec {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        if self.datasets.is_empty() {
            return Err(fail("at least one dataset is required"));
        }
        if self.methods.is_empty() {
            return Err(fail("at least one method is required"));
        }
        if self.seeds.is_empty() {
            return Err(fail("at least one seed is required"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(fail("holdout_fraction must lie in (0, 1)"));
        }
        let mut titles: Vec<&str> = self.methods.iter().map(MethodEntry::title).collect();
        titles.sort_unstable();
        titles.dedup();
        if titles.len() != self.methods.len() {
            return Err(fail("method titles must be unique (set `label` to disambiguate)"));
        }
        for m in &self.methods {
            if m.id.is_cascade() && (m.learner.is_some() || m.folds.is_some()) {
                return Err(fail(&format!("{}: cascades take `config`, not `learner`/`folds`", m.title())));
            }
            if !m.id.is_cascade() && m.config != ConfigOverrides::default() {
                return Err(fail(&format!("{}: `config` only applies to cascades", m.title())));
            }
            m.config
                .apply(&mut AgmConfig::default())
                .map_err(|e| fail(&format!("{}: {e}", m.title())))?;
            if let Some(l) = &m.learner {
                l.parse::<LearnerSpec>().map_err(|e| fail(&format!("{}: {e}", m.title())))?;
            }
        }
        Ok(())
    }

    fn dataset_path(&self, entry: &DatasetEntry) -> PathBuf {
        match &self.data_dir {
            Some(d) => d.join(&entry.path),
            None => entry.path.clone(),
        }
    }
}

/// Published holdout accuracy (fraction, not percent) for a dataset/method pair.
pub fn paper_reference(dataset: &str, method: MethodId) -> Option<f64> {
    const ROWS: [(&str, [f64; 6]); 7] = [
        // v1, v2, v3, RF1000, XGB1000, gcForest
        ("mnist", [97.22, 98.05, 98.33, 97.50, 95.83, 98.33]),
        ("car", [97.68, 97.98, 98.55, 97.39, 98.55, 98.26]),
        ("cardio", [75.00, 76.75, 75.00, 74.00, 71.25, 75.00]),
        ("cortex", [98.14, 99.07, 99.54, 99.54, 93.51, 98.14]),
        ("diabetes", [82.46, 83.76, 84.42, 81.17, 79.22, 79.87]),
        ("frogs", [99.72, 99.86, 99.93, 99.65, 99.65, 99.65]),
        ("gender", [98.73, 98.42, 98.58, 98.26, 97.63, 98.58]),
    ];
    let key = dataset.to_ascii_lowercase();
    let key = match key.as_str() {
        "digits" => "mnist",
        "car_evaluation" | "car-evaluation" => "car",
        k => k,
    };
    let col = match method {
        MethodId::AgmV1 => 0,
        MethodId::AgmV2 => 1,
        MethodId::AgmV3 => 2,
        MethodId::RandomForest1000 => 3,
        MethodId::Gbdt1000 => 4,
        MethodId::FixedCascade => 5,
        MethodId::TwoLayerStacking => return None,
    };
    ROWS.iter()
        .find(|(name, _)| *name == key)
        .map(|(_, v)| v[col] / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub accuracy: f64,
    /// Cascade only: layers grown before pruning, then retained widths and PCA sizes.
    pub layers_grown: Option<usize>,
    pub widths: Vec<usize>,
    pub pca_ks: Vec<Option<usize>>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub dataset: String,
    pub method: String,
    pub method_id: MethodId,
    pub runs: Vec<RunRecord>,
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation (divisor n - 1); 0 for a single run.
    pub std: f64,
    pub paper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    /// Dataset-major, then method, in spec order.
    pub cells: Vec<Cell>,
    /// Datasets that failed to load, with the reason.
    pub failures: Vec<(String, String)>,
}

impl Report {
    pub fn cell(&self, dataset: &str, method: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.method == method)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Fits one method on `train` and scores it on `holdout`.
pub fn run_method(
    method: &MethodEntry,
    train: &Dataset,
    holdout: &Dataset,
    seed: u64,
) -> Result<RunRecord> {
    let start = Instant::now();
    let y = holdout.labels();
    let mut record = RunRecord {
        seed,
        accuracy: 0.0,
        layers_grown: None,
        widths: Vec::new(),
        pca_ks: Vec::new(),
        wall_time: Duration::ZERO,
    };
    let single = |default: &str| -> Result<f64> {
        let spec: LearnerSpec = method.learner.as_deref().unwrap_or(default).parse()?;
        let m = DefaultFactory.fit(
            &spec,
            train.features(),
            train.labels(),
            train.n_classes(),
            seed,
        )?;
        Ok(accuracy(&m.predict(holdout.features())?, y))
    };
    record.accuracy = match method.id {
        MethodId::RandomForest1000 => single("random-forest-1000")?,
        MethodId::Gbdt1000 => single("gbdt-1000")?,
        MethodId::TwoLayerStacking => {
            let mut cfg = StackingConfig {
                seed,
                ..StackingConfig::default()
            };
            if let Some(l) = &method.learner {
                cfg.base = l.parse()?;
            }
            if let Some(f) = method.folds {
                cfg.folds = f;
            }
            let m = fit_two_layer_stacking(train, &cfg)?;
            accuracy(&m.predict(holdout.features())?, y)
        }
        id => {
            let mut cfg = AgmConfig::with_version(match id {
                MethodId::AgmV1 | MethodId::FixedCascade => Version::V1,
                MethodId::AgmV2 => Version::V2,
                _ => Version::V3,
            });
            cfg.seed = seed;
            method.config.apply(&mut cfg)?;
            let m = fit_cascade(train, &cfg)?;
            record.layers_grown = Some(m.layers_grown());
            record.widths = m.widths();
            record.pca_ks = m.pca_ks();
            accuracy(&m.predict(holdout.features())?, y)
        }
    };
    record.wall_time = start.elapsed();
    Ok(record)
}

/// Runs every (dataset, seed, method) cell on `jobs` worker threads.
///
/// A dataset that fails to load is recorded in `failures` and skipped. Any
/// other error aborts the run.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Report> {
    let mut loaded = Vec::new();
    let mut failures = Vec::new();
    for entry in &spec.datasets {
        let label: LabelColumn = entry.label.parse().unwrap();
        match load_csv(&spec.dataset_path(entry), &label, entry.has_header) {
            Ok(ds) => loaded.push((entry, ds)),
            Err(e) => failures.push((entry.name.clone(), e.to_string())),
        }
    }

    let mut splits = Vec::new();
    for (di, (entry, ds)) in loaded.iter().enumerate() {
        for &seed in &spec.seeds {
            let ds = match entry.max_rows {
                Some(cap) => stratified_subsample(ds, cap, seed)?,
                None => ds.clone(),
            };
            let pair = if spec.random_split {
                random_split(&ds, spec.holdout_fraction, seed)?
            } else {
                stratified_split(&ds, spec.holdout_fraction, seed)?
            };
            splits.push((di, seed, pair));
        }
    }

    let tasks: Vec<(usize, usize)> = (0..splits.len())
        .flat_map(|s| (0..spec.methods.len()).map(move |m| (s, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<RunRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, m)| {
                let (_, seed, pair) = &splits[s];
                run_method(&spec.methods[m], &pair.train, &pair.holdout, *seed)
            })
            .collect()
    });

    let mut runs: BTreeMap<(usize, usize), Vec<RunRecord>> = BTreeMap::new();
    for (&(s, m), r) in tasks.iter().zip(results) {
        runs.entry((splits[s].0, m)).or_default().push(r?);
    }

    let mut cells = Vec::new();
    for (di, (entry, _)) in loaded.iter().enumerate() {
        for (mi, method) in spec.methods.iter().enumerate() {
            let runs = runs.remove(&(di, mi)).unwrap_or_default();
            let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&accs);
            cells.push(Cell {
                dataset: entry.name.clone(),
                method: method.title().to_string(),
                method_id: method.id,
                median: median(&accs),
                mean,
                std,
                paper: paper_reference(entry.reference.as_deref().unwrap_or(&entry.name), method.id),
                runs,
            });
        }
    }
    Ok(Report {
        datasets: loaded.iter().map(|(e, _)| e.name.clone()).collect(),
        methods: spec.methods.iter().map(|m| m.title().to_string()).collect(),
        seeds: spec.seeds.clone(),
        cells,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected markdown or csv)")),
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Renders the report. Wall times are left out so identical runs produce
/// identical text.
pub fn render_report(r: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(r),
        ReportFormat::Markdown => render_markdown(r),
    }
}

fn render_csv(r: &Report) -> String {
    let mut out = String::from("dataset,method,seed,accuracy\n");
    for c in &r.cells {
        for run in &c.runs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&c.dataset),
                csv_field(&c.method),
                run.seed,
                run.accuracy
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_markdown(r: &Report) -> String {
    let mut out = String::new();
    let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(
        out,
        "Holdout accuracy (%), median over seeds {} with sample std in parentheses.\n",
        seeds.join(", ")
    );
    let with_paper: Vec<bool> = r
        .methods
        .iter()
        .map(|m| r.cells.iter().any(|c| &c.method == m && c.paper.is_some()))
        .collect();
    let mut header = vec!["Dataset".to_string()];
    for (m, &p) in r.methods.iter().zip(&with_paper) {
        header.push(m.clone());
        if p {
            header.push(format!("{m} (paper)"));
        }
    }
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for d in &r.datasets {
        let mut row = vec![d.clone()];
        for (m, &p) in r.methods.iter().zip(&with_paper) {
            let c = r.cell(d, m).expect("cell for every dataset/method");
            row.push(format!("{} ({})", pct(c.median), pct(c.std)));
            if p {
                row.push(c.paper.map_or_else(|| "-".into(), pct));
            }
        }
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }

    if r.cells.iter().any(|c| c.method_id == MethodId::FixedCascade && c.paper.is_some()) {
        out.push_str(
            "\nfixed_cascade is compared against the published gcForest column; it is a \
             fixed-width cascade without PCA, not gcForest itself.\n",
        );
    }
    if r.cells.iter().any(|c| c.method_id == MethodId::Gbdt1000 && c.paper.is_some()) {
        out.push_str(
            "gbdt_1000 is compared against the published XGBoost column; it is a plain \
             gradient-boosted tree ensemble.\n",
        );
    }

    out.push_str("\n## Runs\n\n| Dataset | Method | Seed | Accuracy (%) | Layers grown | Widths | PCA k |\n|---|---|---|---|---|---|---|\n");
    for c in &r.cells {
        for run in &c.runs {
            let widths: Vec<String> = run.widths.iter().map(usize::to_string).collect();
            let ks: Vec<String> = run
                .pca_ks
                .iter()
                .map(|k| k.map_or_else(|| "-".into(), |k| k.to_string()))
                .collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                c.dataset,
                c.method,
                run.seed,
                pct(run.accuracy),
                run.layers_grown.map_or_else(|| "-".into(), |l| l.to_string()),
                widths.join(","),
                ks.join(","),
            );
        }
    }
    if !r.failures.is_empty() {
        out.push_str("\n## Skipped datasets\n\n");
        for (name, why) in &r.failures {
            let _ = writeln!(out, "- {name}: {why}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_std() {
        assert_eq!(median(&[0.3, 0.1, 0.2]), 0.2);
        assert_eq!(median(&[0.4, 0.1, 0.2, 0.3]), 0.25);
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn paper_values_by_name() {
        // stored as percent / 100, so compare in percent
        let pct = |d: &str, m: MethodId| paper_reference(d, m).map(|v| (v * 100.0 * 100.0).round() / 100.0);
        assert_eq!(pct("Diabetes", MethodId::AgmV3), Some(84.42));
        assert_eq!(pct("digits", MethodId::RandomForest1000), Some(97.5));
        assert_eq!(pct("car_evaluation", MethodId::FixedCascade), Some(98.26));
        assert_eq!(paper_reference("Diabetes", MethodId::TwoLayerStacking), None);
        assert_eq!(paper_reference("blobs", MethodId::AgmV1), None);
    }

    #[test]
    fn spec_invariants() {
        let p = Path::new("s.toml");
        let base = "[[datasets]]\nname='a'\npath='a.csv'\nlabel='c'\n";
        assert!(ExperimentSpec::parse(&format!("seeds=[1]\n{base}"), p).is_err());
        let ok = format!("seeds=[1]\n{base}[[methods]]\nid='agm_v3'\n");
        assert!(ExperimentSpec::parse(&ok, p).is_ok());
        let no_seeds = format!("seeds=[]\n{base}[[methods]]\nid='agm_v3'\n");
        assert!(ExperimentSpec::parse(&no_seeds, p).is_err());
        let bad_override =
            format!("seeds=[1]\n{base}[[methods]]\nid='agm_v3'\nconfig={{pca_fit='both'}}\n");
        assert!(ExperimentSpec::parse(&bad_override, p).is_err());
        let dup = format!("seeds=[1]\n{base}[[methods]]\nid='agm_v3'\n[[methods]]\nid='agm_v3'\n");
        assert!(ExperimentSpec::parse(&dup, p).is_err());
        let stray = format!("seeds=[1]\n{base}[[methods]]\nid='gbdt_1000'\nconfig={{patience=2}}\n");
        assert!(ExperimentSpec::parse(&stray, p).is_err());
    }

    #[test]
    fn overrides_apply() {
        let o = ConfigOverrides {
            patience: Some(5),
            base_model_set: Some(vec!["tree-d2".into()]),
            feature_mode: Some("label".into()),
            probe_oof_folds: Some(3),
            ..Default::default()
        };
        let mut c = AgmConfig::default();
        o.apply(&mut c).unwrap();
        assert_eq!(c.patience, 5);
        assert_eq!(c.base_model_set, vec![LearnerSpec::DecisionTree { max_depth: Some(2) }]);
        assert_eq!(c.feature_mode, agm_core::FeatureMode::Label);
        assert_eq!(c.probe_oof_folds, Some(3));
    }
}
