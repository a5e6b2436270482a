//! Run configuration, model artifacts, and the fit / report / probe / synth
//! workflows behind the command-line tool. Every output file is rendered in
//! memory first and then written atomically.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boost::{predict, BoostConfig, BoostFit, OffsetMode, Stage, StageBudget, StagePlan};
use crate::data::{
    encode, encode_with, interaction_pairs, BinaryOutcome, DatasetSchema, DesignMatrix,
    EncodeOptions, InteractionTerm, RawTable, VariableKind,
};
use crate::error::{Error, Result};
use crate::factory::{build_group, build_interaction_learners, build_mb, build_sgb, SgbSpec};
use crate::interpret::{
    default_grid, importance, interaction_probe, odds_ratios, partial_effects, ProbeOptions,
    ProbeResult,
};
use crate::loss::LossFamily;
use crate::synth::{generate, SynthSpec};
use crate::tuning::{fit_with_cv, roc_auc, split, CvResult, CvSpec, RocCurve, SplitSpec};

pub const FORMAT_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ARTIFACT_FILE: &str = "artifact.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CV_CURVE_FILE: &str = "cv_curve.csv";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const ROC_FILE: &str = "roc.csv";
pub const ODDS_RATIOS_FILE: &str = "odds_ratios.csv";
pub const PARTIAL_EFFECTS_FILE: &str = "partial_effects.csv";
pub const SELECTION_PATH_FILE: &str = "selection_path.csv";
pub const PROBE_FILE: &str = "probe_report.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mb")]
    Mb,
    #[serde(rename = "group")]
    Group,
    #[serde(rename = "sgb")]
    Sgb,
    #[serde(rename = "mb-int")]
    MbInt,
    #[serde(rename = "2-boost")]
    TwoBoost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Mb,
        ModelKind::Group,
        ModelKind::Sgb,
        ModelKind::MbInt,
        ModelKind::TwoBoost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mb => "mb",
            ModelKind::Group => "group",
            ModelKind::Sgb => "sgb",
            ModelKind::MbInt => "mb-int",
            ModelKind::TwoBoost => "2-boost",
        }
    }

    pub fn uses_interactions(self) -> bool {
        matches!(self, ModelKind::MbInt | ModelKind::TwoBoost)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown model `{s}`; expected one of mb, group, sgb, mb-int, 2-boost"
                ))
            })
    }
}

pub const DEFAULT_ALPHA: f64 = 0.5;

fn default_eta() -> f64 {
    0.1
}
fn default_m_max() -> usize {
    1000
}
fn default_cv_folds() -> usize {
    10
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Mixing parameter, sgb only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Upper bound of the cross-validated iteration count, per stage.
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub offset_mode: OffsetMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Where outputs go; not part of the recorded configuration.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(model: ModelKind) -> Self {
        RunConfig {
            model,
            alpha: None,
            eta: default_eta(),
            m_max: default_m_max(),
            cv_folds: default_cv_folds(),
            train_fraction: default_train_fraction(),
            seed: default_seed(),
            offset_mode: OffsetMode::default(),
            data: None,
            schema: None,
            out_dir: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match (self.model, self.alpha) {
            (ModelKind::Sgb, Some(a)) if !(0.0..=1.0).contains(&a) => {
                return bad(format!("alpha must lie in [0, 1], got {a}"))
            }
            (ModelKind::Sgb, _) | (_, None) => {}
            (m, Some(_)) => return bad(format!("alpha applies only to model sgb, not {m}")),
        }
        self.boost_config().validate()?;
        if self.m_max < 1 {
            return bad("m_max must be at least 1".into());
        }
        if self.cv_folds < 2 {
            return bad(format!("cv_folds must be at least 2, got {}", self.cv_folds));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction must lie strictly inside (0, 1), got {}",
                self.train_fraction
            ));
        }
        Ok(())
    }

    pub fn boost_config(&self) -> BoostConfig {
        BoostConfig {
            eta: self.eta,
            m_stop: self.m_max,
            offset_mode: self.offset_mode,
            family: LossFamily::BinomialLogit,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratified: true,
        }
    }

    pub fn cv_spec(&self) -> CvSpec {
        CvSpec {
            folds: self.cv_folds,
            m_max: self.m_max,
            seed: self.seed,
            stratified: true,
        }
    }

    fn input_paths(&self) -> Result<(&Path, &Path)> {
        fn need<'p>(p: &'p Option<PathBuf>, what: &str) -> Result<&'p Path> {
            p.as_deref()
                .ok_or_else(|| Error::InvalidConfig(format!("no {what} path given")))
        }
        Ok((need(&self.data, "data")?, need(&self.schema, "schema")?))
    }

    fn output_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no output directory given".into()))
    }
}

/// Encoded data, with interaction columns appended when the model uses them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub design: DesignMatrix,
    pub y: BinaryOutcome,
    pub terms: Vec<InteractionTerm>,
}

pub fn prepare(schema: &DatasetSchema, table: &RawTable, model: ModelKind) -> Result<Prepared> {
    let (design, y) = encode(schema, table)?;
    if !model.uses_interactions() {
        return Ok(Prepared {
            design,
            y,
            terms: Vec::new(),
        });
    }
    let terms = crate::data::expand_interactions(schema, &design)?;
    let design = design.augment(&terms)?;
    Ok(Prepared { design, y, terms })
}

/// Learner sets of `config.model` built on `design`, every stage CV-tuned.
/// Returns the plan and the interaction terms dropped for lack of variation.
pub fn build_plan(
    design: &DesignMatrix,
    schema: &DatasetSchema,
    terms: &[InteractionTerm],
    config: &RunConfig,
) -> Result<(StagePlan, Vec<String>)> {
    let budget = StageBudget::CrossValidated {
        m_max: config.m_max,
    };
    let stage = |name: &str, learners| Stage {
        name: name.into(),
        learners,
        budget,
    };
    let (stages, dropped) = match config.model {
        ModelKind::Mb => (vec![stage("main", build_mb(design, schema)?)], Vec::new()),
        ModelKind::Group => (vec![stage("main", build_group(design, schema)?)], Vec::new()),
        ModelKind::Sgb => {
            let spec = SgbSpec::new(config.alpha())?;
            (vec![stage("main", build_sgb(design, schema, &spec)?)], Vec::new())
        }
        ModelKind::MbInt => {
            let mut learners = build_mb(design, schema)?;
            let inter = build_interaction_learners(design, terms)?;
            learners.extend(inter.learners);
            (vec![stage("main+interactions", learners)], inter.dropped)
        }
        ModelKind::TwoBoost => {
            let inter = build_interaction_learners(design, terms)?;
            (
                vec![
                    stage("main", build_mb(design, schema)?),
                    stage("interactions", inter.learners),
                ],
                inter.dropped,
            )
        }
    };
    Ok((StagePlan::new(stages)?, dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_train: usize,
    pub n_test: usize,
    /// `None` when the test rows hold a single class.
    pub test_auc: Option<f64>,
}

/// A fitted model with everything needed to rebuild its design and check
/// that new data follows the same schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub software_version: String,
    pub schema_fingerprint: String,
    pub schema: DatasetSchema,
    pub config: RunConfig,
    pub interaction_terms: Vec<InteractionTerm>,
    pub dropped_terms: Vec<String>,
    pub m_stop: Vec<usize>,
    pub evaluation: Evaluation,
    pub fit: BoostFit,
}

impl ModelArtifact {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: ModelArtifact = serde_json::from_str(text)?;
        if artifact.format_version != FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "artifact format version {} is not supported (expected {FORMAT_VERSION})",
                artifact.format_version
            )));
        }
        let embedded = artifact.schema.fingerprint();
        if embedded != artifact.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                artifact: artifact.schema_fingerprint,
                supplied: embedded,
            });
        }
        Ok(artifact)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
        let name = path
            .file_name()
            .ok_or_else(|| Error::InvalidConfig(format!("`{}` is not a file path", path.display())))?;
        write_atomic(dir.unwrap_or(Path::new(".")), &name.to_string_lossy(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn check_schema(&self, schema: &DatasetSchema) -> Result<()> {
        let supplied = schema.fingerprint();
        if supplied != self.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                artifact: self.schema_fingerprint.clone(),
                supplied,
            });
        }
        Ok(())
    }

    /// Design of `table` under the artifact's schema and interaction terms.
    /// Constant columns are allowed here since new data may lack variation.
    pub fn encode(&self, table: &RawTable) -> Result<(DesignMatrix, BinaryOutcome)> {
        let options = EncodeOptions {
            reject_degenerate: false,
        };
        let (design, y) = encode_with(&self.schema, table, options)?;
        if self.interaction_terms.is_empty() {
            return Ok((design, y));
        }
        Ok((design.augment(&self.interaction_terms)?, y))
    }

    pub fn predict(&self, table: &RawTable) -> Result<Vec<f64>> {
        let (design, _) = self.encode(table)?;
        predict(&self.fit, &design)
    }
}

/// Everything produced by one tuned fit, before anything is written.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub artifact: ModelArtifact,
    pub cv: Vec<Option<CvResult>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub roc: Option<RocCurve>,
}

/// Split, tune every stage by cross-validation on the training rows, fit on
/// the training rows, and evaluate on the test rows.
pub fn fit_model(schema: &DatasetSchema, table: &RawTable, config: &RunConfig) -> Result<FitOutcome> {
    config.validate()?;
    let prepared = prepare(schema, table, config.model)?;
    let (train, test) = split(&prepared.y, &config.split_spec())?;
    let train_design = prepared.design.subset_rows(&train);
    let y_train = prepared.y.subset(&train);
    let (plan, dropped) = build_plan(&train_design, schema, &prepared.terms, config)?;
    let tuned = fit_with_cv(
        &train_design,
        &y_train,
        &plan,
        &config.boost_config(),
        &config.cv_spec(),
    )?;

    let test_design = prepared
        .design
        .subset_rows_with_centers(&test, &train_design.centers());
    let scores = predict(&tuned.fit, &test_design)?;
    let roc = match roc_auc(&scores, &prepared.y.subset(&test)) {
        Ok(roc) => Some(roc),
        Err(Error::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let artifact = ModelArtifact {
        format_version: FORMAT_VERSION,
        software_version: SOFTWARE_VERSION.into(),
        schema_fingerprint: schema.fingerprint(),
        schema: schema.clone(),
        config: config.clone(),
        interaction_terms: prepared.terms,
        dropped_terms: dropped,
        m_stop: tuned.m_stop,
        evaluation: Evaluation {
            n_train: train.len(),
            n_test: test.len(),
            test_auc: roc.as_ref().map(|r| r.auc),
        },
        fit: tuned.fit,
    };
    Ok(FitOutcome {
        artifact,
        cv: tuned.cv,
        train,
        test,
        roc,
    })
}

/// Which rows `report` evaluates on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalRows {
    /// The held-out rows of the artifact's own split; partial effects average
    /// over its training rows.
    #[default]
    Test,
    /// Every row of the supplied table, for both.
    All,
}

/// A rendered output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
}

impl OutputFile {
    fn new(name: &str, contents: Vec<u8>) -> Self {
        OutputFile {
            name: name.into(),
            contents,
        }
    }
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn kind_name<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// importance, roc, odds ratios, partial effects, and selection path tables.
pub fn render_reports(artifact: &ModelArtifact, table: &RawTable, rows: EvalRows) -> Result<Vec<OutputFile>> {
    let fit = &artifact.fit;
    let (design, y) = artifact.encode(table)?;
    let (eval_rows, mean_rows): (Vec<usize>, Vec<usize>) = match rows {
        EvalRows::All => ((0..y.len()).collect(), (0..y.len()).collect()),
        EvalRows::Test => {
            let (train, test) = split(&y, &artifact.config.split_spec())?;
            (test, train)
        }
    };
    let mut files = Vec::new();

    let imp = importance(fit);
    files.push(OutputFile::new(
        IMPORTANCE_FILE,
        csv_bytes(
            &["learner", "kind", "absolute", "relative"],
            imp.ranked().into_iter().map(|r| {
                [r.learner.clone(), kind_name(&r.kind), num(r.absolute), num(r.relative)]
            }),
        )?,
    ));

    let eval_design = design.subset_rows(&eval_rows);
    let scores = predict(fit, &eval_design)?;
    let roc = roc_auc(&scores, &y.subset(&eval_rows))?;
    let mut roc_bytes = format!("# auc={}\n", num(roc.auc)).into_bytes();
    roc_bytes.extend(csv_bytes(
        &["fpr", "tpr"],
        roc.points.iter().map(|&(f, t)| [num(f), num(t)]),
    )?);
    files.push(OutputFile::new(ROC_FILE, roc_bytes));

    files.push(OutputFile::new(
        ODDS_RATIOS_FILE,
        csv_bytes(
            &["learner", "column", "coefficient", "odds_ratio"],
            odds_ratios(fit)
                .into_iter()
                .map(|o| [o.learner, o.column, num(o.coefficient), num(o.odds_ratio)]),
        )?,
    ));

    let mean_design = design.subset_rows(&mean_rows);
    let mut effect_rows = Vec::new();
    for term in &fit.terms {
        let grid = default_grid(fit, &term.id)?;
        let effects = partial_effects(fit, &mean_design, &term.id, &grid)?;
        for row in effects.rows {
            effect_rows.push([
                term.id.clone(),
                row.point.label,
                num(row.contribution),
                num(row.probability),
            ]);
        }
    }
    files.push(OutputFile::new(
        PARTIAL_EFFECTS_FILE,
        csv_bytes(&["learner", "point", "contribution", "probability"], effect_rows)?,
    ));

    files.push(OutputFile::new(
        SELECTION_PATH_FILE,
        csv_bytes(
            &["iteration", "stage", "learner", "risk_after"],
            fit.selection_path.iter().map(|s| {
                [
                    s.iteration.to_string(),
                    s.stage.to_string(),
                    s.learner.clone(),
                    num(s.risk_after),
                ]
            }),
        )?,
    ));
    Ok(files)
}

/// Mean and per-fold out-of-fold risk for every tuned stage.
pub fn render_cv_curve(cv: &[Option<CvResult>]) -> Result<OutputFile> {
    let folds = cv.iter().flatten().map(|r| r.risk_matrix.len()).max().unwrap_or(0);
    let mut header = vec!["stage".to_string(), "m".into(), "mean_risk".into()];
    header.extend((1..=folds).map(|k| format!("fold_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (k, result) in cv.iter().enumerate() {
        let Some(result) = result else { continue };
        for (m, mean) in result.mean_risk().into_iter().enumerate() {
            let mut row = vec![(k + 1).to_string(), m.to_string(), num(mean)];
            row.extend(result.risk_matrix.iter().map(|fold| num(fold[m])));
            rows.push(row);
        }
    }
    Ok(OutputFile::new(CV_CURVE_FILE, csv_bytes(&header, rows)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// What a command was run with and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn input_digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        name: path.display().to_string(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

fn manifest_file<C: Serialize>(
    file_name: &str,
    command: &str,
    config: &C,
    inputs: &[&Path],
    outputs: &[OutputFile],
) -> Result<OutputFile> {
    let manifest = Manifest {
        software_version: SOFTWARE_VERSION.into(),
        command: command.into(),
        config: serde_json::to_value(config)?,
        inputs: inputs.iter().map(|p| input_digest(p)).collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|f| FileDigest {
                name: f.name.clone(),
                sha256: sha256_hex(&f.contents),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    Ok(OutputFile::new(file_name, text.into_bytes()))
}

/// Writes `contents` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_outputs(dir: &Path, files: &[OutputFile]) -> Result<()> {
    for file in files {
        write_atomic(dir, &file.name, &file.contents)?;
    }
    Ok(())
}

/// `fit`: tune, fit, evaluate, and write the artifact, the reports, the CV
/// curve and a manifest to `config.out_dir`.
pub fn cmd_fit(config: &RunConfig) -> Result<FitOutcome> {
    config.validate()?;
    let (data_path, schema_path) = config.input_paths()?;
    let out_dir = config.output_dir()?;
    let schema = DatasetSchema::from_path(schema_path)?;
    let table = RawTable::from_path(data_path)?;
    let outcome = fit_model(&schema, &table, config)?;

    let mut files = vec![OutputFile::new(ARTIFACT_FILE, outcome.artifact.to_json()?.into_bytes())];
    files.extend(render_reports(&outcome.artifact, &table, EvalRows::Test)?);
    files.push(render_cv_curve(&outcome.cv)?);
    let manifest = manifest_file(MANIFEST_FILE, "fit", config, &[data_path, schema_path], &files)?;
    files.push(manifest);
    write_outputs(out_dir, &files)?;
    Ok(outcome)
}

/// `cv-curve`: the cross-validated risk curves of every stage only.
pub fn cmd_cv_curve(config: &RunConfig) -> Result<Vec<Option<CvResult>>> {
    config.validate()?;
    let (data_path, schema_path) = config.input_paths()?;
    let out_dir = config.output_dir()?;
    let schema = DatasetSchema::from_path(schema_path)?;
    let table = RawTable::from_path(data_path)?;
    let outcome = fit_model(&schema, &table, config)?;
    let mut files = vec![render_cv_curve(&outcome.cv)?];
    files.push(manifest_file(
        "cv_manifest.json",
        "cv-curve",
        config,
        &[data_path, schema_path],
        &files,
    )?);
    write_outputs(out_dir, &files)?;
    Ok(outcome.cv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub artifact: PathBuf,
    pub data: PathBuf,
    /// When given, must match the artifact's schema fingerprint.
    pub schema: Option<PathBuf>,
    pub rows: EvalRows,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// `report`: regenerate the report tables from a saved artifact.
pub fn cmd_report(request: &ReportRequest) -> Result<Vec<OutputFile>> {
    let artifact = ModelArtifact::load(&request.artifact)?;
    let mut inputs = vec![request.artifact.as_path(), request.data.as_path()];
    if let Some(path) = &request.schema {
        artifact.check_schema(&DatasetSchema::from_path(path)?)?;
        inputs.push(path);
    }
    let table = RawTable::from_path(&request.data)?;
    let mut files = render_reports(&artifact, &table, request.rows)?;
    files.push(manifest_file("report_manifest.json", "report", request, &inputs, &files)?);
    write_outputs(&request.out_dir, &files)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub data: PathBuf,
    pub schema: PathBuf,
    /// Term ids `moderator:partner`; empty means every categorical pair.
    pub terms: Vec<String>,
    pub strata: Option<String>,
    pub options: ProbeOptions,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Probes for `terms`, or for every moderator pair of categorical variables.
pub fn run_probes(
    schema: &DatasetSchema,
    table: &RawTable,
    terms: &[String],
    strata: Option<&str>,
    options: &ProbeOptions,
) -> Result<Vec<ProbeResult>> {
    let pairs: Vec<(String, String)> = if terms.is_empty() {
        let categorical = |name: &str| {
            schema
                .variable(name)
                .is_some_and(|v| v.kind != VariableKind::Continuous)
        };
        interaction_pairs(schema)
            .into_iter()
            .filter(|(m, p)| categorical(m) && categorical(p))
            .collect()
    } else {
        terms
            .iter()
            .map(|t| {
                t.split_once(':')
                    .map(|(m, p)| (m.to_string(), p.to_string()))
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("term `{t}` is not of the form moderator:partner"))
                    })
            })
            .collect::<Result<_>>()?
    };
    pairs
        .iter()
        .map(|(m, p)| interaction_probe(schema, table, m, p, strata, options))
        .collect()
}

pub fn render_probe_report(results: &[ProbeResult]) -> Result<OutputFile> {
    let mut rows = Vec::new();
    for result in results {
        let term = format!("{}:{}", result.moderator, result.partner);
        for stratum in &result.strata {
            for cell in &stratum.cells {
                rows.push([
                    term.clone(),
                    stratum.stratum.clone(),
                    cell.moderator_category.clone(),
                    cell.partner_category.clone(),
                    cell.n.to_string(),
                    cell.positives.to_string(),
                    cell.probability.map(num).unwrap_or_default(),
                    stratum.converged.to_string(),
                ]);
            }
        }
    }
    let header = [
        "term",
        "stratum",
        "moderator_category",
        "partner_category",
        "n",
        "positives",
        "probability",
        "converged",
    ];
    Ok(OutputFile::new(PROBE_FILE, csv_bytes(&header, rows)?))
}

/// `probe`: one-term logistic fits per stratum and pooled.
pub fn cmd_probe(request: &ProbeRequest) -> Result<Vec<ProbeResult>> {
    let schema = DatasetSchema::from_path(&request.schema)?;
    let table = RawTable::from_path(&request.data)?;
    let results = run_probes(
        &schema,
        &table,
        &request.terms,
        request.strata.as_deref(),
        &request.options,
    )?;
    let mut files = vec![render_probe_report(&results)?];
    files.push(manifest_file(
        "probe_manifest.json",
        "probe",
        request,
        &[request.data.as_path(), request.schema.as_path()],
        &files,
    )?);
    write_outputs(&request.out_dir, &files)?;
    Ok(results)
}

#[derive(Serialize)]
struct TruthReport<'a> {
    spec: &'a SynthSpec,
    sample_prevalence: f64,
    marginal_prevalence: Option<f64>,
}

/// `synth`: data.csv, schema.toml and truth.json for a synthetic spec.
pub fn cmd_synth(spec: &SynthSpec, out_dir: &Path) -> Result<Vec<OutputFile>> {
    let data = generate(spec)?;
    let mut csv = Vec::new();
    data.table.write_csv(&mut csv)?;
    let truth = TruthReport {
        spec,
        sample_prevalence: data.truth.prevalence(),
        marginal_prevalence: data.truth.marginal_prevalence(),
    };
    let mut truth_json = serde_json::to_string_pretty(&truth)?;
    truth_json.push('\n');
    let mut files = vec![
        OutputFile::new("data.csv", csv),
        OutputFile::new("schema.toml", data.schema.to_toml_string().into_bytes()),
        OutputFile::new("truth.json", truth_json.into_bytes()),
    ];
    files.push(manifest_file("synth_manifest.json", "synth", spec, &[], &files)?);
    write_outputs(out_dir, &files)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthSpec;

    fn synth_inputs(spec: &SynthSpec) -> (DatasetSchema, RawTable) {
        let data = generate(spec).unwrap();
        (data.schema, data.table)
    }

    fn quick(model: ModelKind) -> RunConfig {
        RunConfig {
            m_max: 40,
            cv_folds: 3,
            ..RunConfig::new(model)
        }
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("lasso".parse::<ModelKind>().is_err());
    }

    #[test]
    fn alpha_validation() {
        let mut c = RunConfig::new(ModelKind::Sgb);
        c.alpha = Some(1.5);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        c.alpha = Some(1.0);
        c.validate().unwrap();
        c.model = ModelKind::Mb;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        assert_eq!(RunConfig::new(ModelKind::Sgb).alpha(), 0.5);
    }

    #[test]
    fn config_toml_defaults() {
        let c = RunConfig::from_toml_str("model = \"2-boost\"\nseed = 7\n").unwrap();
        assert_eq!(c.model, ModelKind::TwoBoost);
        assert_eq!((c.eta, c.m_max, c.cv_folds, c.train_fraction), (0.1, 1000, 10, 0.7));
        assert_eq!(c.seed, 7);
        assert!(RunConfig::from_toml_str("model = \"mb\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn plan_shapes() {
        let (schema, table) = synth_inputs(&SynthSpec::blank(6, 3, 2, 80, 1));
        for (model, n_stages) in [
            (ModelKind::Mb, 1),
            (ModelKind::Group, 1),
            (ModelKind::Sgb, 1),
            (ModelKind::MbInt, 1),
            (ModelKind::TwoBoost, 2),
        ] {
            let p = prepare(&schema, &table, model).unwrap();
            let (plan, _) = build_plan(&p.design, &schema, &p.terms, &quick(model)).unwrap();
            assert_eq!(plan.stages.len(), n_stages, "{model}");
        }
        let p = prepare(&schema, &table, ModelKind::TwoBoost).unwrap();
        // 2 moderators over 6 variables: 5 + 4 pairs
        assert_eq!(p.terms.len(), 9);
        assert_eq!(p.design.p(), 6 + 9);
    }

    #[test]
    fn artifact_round_trip_predicts_identically() {
        let (schema, table) = synth_inputs(&SynthSpec::pure_interaction(300, 2.5, 3));
        let out = fit_model(&schema, &table, &quick(ModelKind::TwoBoost)).unwrap();
        let text = out.artifact.to_json().unwrap();
        let back = ModelArtifact::from_json(&text).unwrap();
        assert_eq!(back, out.artifact);
        let a = out.artifact.predict(&table).unwrap();
        let b = back.predict(&table).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let (schema, table) = synth_inputs(&SynthSpec::blank(4, 2, 1, 60, 2));
        let out = fit_model(&schema, &table, &quick(ModelKind::Mb)).unwrap();
        let (other, _) = synth_inputs(&SynthSpec::blank(5, 2, 1, 60, 2));
        assert!(matches!(
            out.artifact.check_schema(&other),
            Err(Error::FingerprintMismatch { .. })
        ));
        out.artifact.check_schema(&schema).unwrap();
        let mut tampered = out.artifact.clone();
        tampered.schema.variables[0].group = "elsewhere".into();
        let text = tampered.to_json().unwrap();
        assert!(matches!(
            ModelArtifact::from_json(&text),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn roc_report_is_self_consistent() {
        let (schema, table) = synth_inputs(&SynthSpec::main_effects(6, 1, 200, &[1.5], 4));
        let out = fit_model(&schema, &table, &quick(ModelKind::Mb)).unwrap();
        let files = render_reports(&out.artifact, &table, EvalRows::Test).unwrap();
        let roc = files.iter().find(|f| f.name == ROC_FILE).unwrap();
        let text = String::from_utf8(roc.contents.clone()).unwrap();
        let mut lines = text.lines();
        let auc: f64 = lines.next().unwrap().trim_start_matches("# auc=").parse().unwrap();
        assert_eq!(lines.next(), Some("fpr,tpr"));
        let points: Vec<(f64, f64)> = lines
            .map(|l| {
                let (a, b) = l.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect();
        let area = crate::tuning::trapezoid_area(&points);
        assert!((area - auc).abs() < 1e-10);
        assert_eq!(Some(auc), out.artifact.evaluation.test_auc);
    }

    #[test]
    fn empty_fit_reports_header_only_importance() {
        let (schema, table) = synth_inputs(&SynthSpec::blank(4, 2, 0, 60, 9));
        let mut out = fit_model(&schema, &table, &quick(ModelKind::Mb)).unwrap();
        for t in &mut out.artifact.fit.terms {
            t.coef.iter_mut().for_each(|c| *c = 0.0);
        }
        out.artifact.fit.selection_path.clear();
        let files = render_reports(&out.artifact, &table, EvalRows::All).unwrap();
        let imp = files.iter().find(|f| f.name == IMPORTANCE_FILE).unwrap();
        assert_eq!(imp.contents, b"learner,kind,absolute,relative\n");
    }
}
