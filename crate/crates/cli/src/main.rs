use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use interboost::boost::OffsetMode;
use interboost::interpret::ProbeOptions;
use interboost::pipeline::{
    cmd_cv_curve, cmd_fit, cmd_probe, cmd_report, cmd_synth, EvalRows, ModelKind, ProbeRequest,
    ReportRequest, RunConfig,
};
use interboost::synth::{NullStudySpec, SynthSpec};
use interboost::Error;

/// Interpretable model-based boosting for binary outcomes.
#[derive(Debug, Parser)]
#[command(name = "interboost", version, about)]
struct Cli {
    /// Log progress (repeat for more detail). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model; writes the artifact, reports, CV curve and a manifest.
    Fit(RunArgs),
    /// Regenerate the report tables from a saved artifact.
    Report(ReportArgs),
    /// Fit one-term logistic probes for interaction terms.
    Probe(ProbeArgs),
    /// Generate a synthetic data set with known truth.
    Synth(SynthArgs),
    /// Write the cross-validated risk curve of every stage.
    CvCurve(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data table (CSV).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset schema (TOML).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Model: mb, group, sgb, mb-int or 2-boost.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Sparse group mixing parameter in [0, 1], sgb only [default: 0.5].
    #[arg(long)]
    alpha: Option<f64>,
    /// Learning rate [default: 0.1].
    #[arg(long)]
    eta: Option<f64>,
    /// Largest iteration count tried by CV, per stage [default: 1000].
    #[arg(long)]
    m_max: Option<usize>,
    /// Number of CV folds [default: 10].
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Share of rows in the training split [default: 0.7].
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Seed for the split and the folds [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Initial linear predictor [default: mean-link].
    #[arg(long, value_enum)]
    offset_mode: Option<OffsetArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OffsetArg {
    Zero,
    MeanLink,
}

impl From<OffsetArg> for OffsetMode {
    fn from(o: OffsetArg) -> Self {
        match o {
            OffsetArg::Zero => OffsetMode::Zero,
            OffsetArg::MeanLink => OffsetMode::MeanLink,
        }
    }
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut config = match (&self.config, self.model) {
            (Some(path), _) => RunConfig::from_path(path)?,
            (None, Some(model)) => RunConfig::new(model),
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "no model given; pass --model or --config".into(),
                ))
            }
        };
        if let Some(model) = self.model {
            config.model = model;
        }
        if self.alpha.is_some() {
            config.alpha = self.alpha;
        }
        if let Some(v) = self.eta {
            config.eta = v;
        }
        if let Some(v) = self.m_max {
            config.m_max = v;
        }
        if let Some(v) = self.cv_folds {
            config.cv_folds = v;
        }
        if let Some(v) = self.train_fraction {
            config.train_fraction = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.offset_mode {
            config.offset_mode = v.into();
        }
        if self.data.is_some() {
            config.data = self.data;
        }
        if self.schema.is_some() {
            config.schema = self.schema;
        }
        config.out_dir = Some(self.out);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Saved model artifact (JSON).
    #[arg(long)]
    artifact: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Checked against the artifact's schema fingerprint when given.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Rows to evaluate: the artifact's own test split, or every row.
    #[arg(long, value_enum, default_value = "test")]
    rows: RowsArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RowsArg {
    Test,
    All,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Term `moderator:partner`; repeatable. Default: every categorical pair.
    #[arg(long = "term")]
    terms: Vec<String>,
    /// Categorical variable to stratify by.
    #[arg(long)]
    strata: Option<String>,
    /// Fit intercept and product only, without the two main effects.
    #[arg(long)]
    no_main_effects: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Full generator specification (JSON); overrides the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "main-effects")]
    preset: Preset,
    /// Number of rows.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of binary variables (null and main-effects presets).
    #[arg(long, default_value_t = 30)]
    p_vars: usize,
    /// Number of moderators among them (null and main-effects presets).
    #[arg(long, default_value_t = 10)]
    moderators: usize,
    /// Planted interaction coefficient (pure-interaction preset).
    #[arg(long, default_value_t = 2.5)]
    beta: f64,
    /// Probability an item copies its group's latent bit (latent-groups preset).
    #[arg(long, default_value_t = 0.6)]
    latent_share: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// No effects at all.
    Null,
    /// x1 × x5 only.
    PureInteraction,
    /// Four evenly spaced main effects of ±1, no interactions.
    MainEffects,
    /// Six groups of five items; three latent group factors drive the outcome.
    LatentGroups,
}

impl SynthArgs {
    fn spec(&self) -> Result<SynthSpec, Error> {
        if let Some(path) = &self.spec {
            let spec: SynthSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
            return Ok(spec);
        }
        Ok(match self.preset {
            Preset::Null => SynthSpec::blank(self.p_vars, 5, self.moderators, self.n, self.seed),
            Preset::PureInteraction => SynthSpec::pure_interaction(self.n, self.beta, self.seed),
            Preset::MainEffects => NullStudySpec {
                n_moderators: self.moderators,
                ..NullStudySpec::new(self.p_vars, self.n, vec![self.seed])
            }
            .synth_spec(self.seed),
            Preset::LatentGroups => {
                SynthSpec::latent_groups(6, 5, &[1.5, -1.5, 1.0], self.latent_share, self.n, self.seed)
            }
        })
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Fit(args) => {
            let outcome = cmd_fit(&args.into_config()?)?;
            match outcome.artifact.evaluation.test_auc {
                Some(auc) => log::info!("test AUC {auc:.4}"),
                None => log::info!("test AUC undefined (single-class test split)"),
            }
        }
        Command::CvCurve(args) => {
            cmd_cv_curve(&args.into_config()?)?;
        }
        Command::Report(args) => {
            cmd_report(&ReportRequest {
                artifact: args.artifact,
                data: args.data,
                schema: args.schema,
                rows: match args.rows {
                    RowsArg::Test => EvalRows::Test,
                    RowsArg::All => EvalRows::All,
                },
                out_dir: args.out,
            })?;
        }
        Command::Probe(args) => {
            cmd_probe(&ProbeRequest {
                data: args.data,
                schema: args.schema,
                terms: args.terms,
                strata: args.strata,
                options: ProbeOptions {
                    main_effects: !args.no_main_effects,
                    ..ProbeOptions::default()
                },
                out_dir: args.out,
            })?;
        }
        Command::Synth(args) => {
            let spec = args.spec()?;
            cmd_synth(&spec, &args.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Exit code 2 is reserved for numerical failures.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
