//! Command-line surface: argument parsing, dispatch, output layout and
//! exit codes.
//!
//! Exit codes are 0 on success, 1 on a configuration or input error, 2 when
//! a run diverged numerically and 3 when `--assert` is given and a check
//! fails. Errors are printed to stderr as one JSON object per line.

mod tools;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use tools::{run_tool, write_tool, ToolManifest, ToolOutcome, ToolSpec};

use crate::error::Error;
use crate::experiments::{
    run_experiment, Approach, Check, ExperimentSpec, FlatSpec, FlatVariant, Manifest, ParitySpec,
    PwlSpec, PwlVariant, StocksApproach, StocksSpec, TuplesSpec,
};
use crate::models::ImageScale;
use crate::plot::{Plot, Series};
use crate::trainers::{read_metrics_csv, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

/// Environment variable that takes precedence over `--out`.
pub const OUT_ENV: &str = "GRADDIAG_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "graddiag",
    version,
    about = "Experiments and diagnostics for failure modes of gradient-based learning"
)]
pub struct Cli {
    /// Seed of the whole sweep; run seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Concurrent sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Evaluate the acceptance checks and exit with 3 if any fails.
    #[arg(long, global = true)]
    pub assert: bool,
    /// Replay the spec stored in a manifest.json.
    #[arg(long, global = true)]
    pub from_manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parity learning against the input dimension.
    Parity(ParityArgs),
    /// Tuples of line images: end-to-end against decomposition.
    Tuples(TuplesArgs),
    /// Encoding piecewise-linear curves with and without conditioning.
    Pwl(PwlArgs),
    /// Regression through a piecewise-constant link.
    Flat(FlatArgs),
    /// The two gradient estimators of the portfolio objective.
    Stocks(StocksArgs),
    /// Gradient variance, SNR and estimator noise measurements.
    Diagnose {
        #[command(subcommand)]
        tool: DiagnoseCmd,
    },
    /// Exact matrices and spectra.
    Closedform {
        #[command(subcommand)]
        tool: ClosedformCmd,
    },
    /// Plot metrics.csv files on one chart, one series per file.
    Render(RenderArgs),
}

/// Training overrides shared by the experiment subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long, alias = "number_of_iterations")]
    pub iters: Option<usize>,
    #[arg(long, alias = "learning_rate")]
    pub lr: Option<f64>,
    #[arg(long, alias = "batch_size")]
    pub batch: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

impl TrainArgs {
    fn apply(&self, c: &mut TrainConfig) {
        if let Some(it) = self.iters {
            c.iterations = it;
            if self.eval_every.is_none() {
                c.eval_every = c.eval_every.min((it / 20).max(1));
            }
        }
        if let Some(lr) = self.lr {
            c.learning_rate = lr;
        }
        if let Some(b) = self.batch {
            c.batch_size = b;
        }
        if let Some(e) = self.eval_every {
            c.eval_every = e;
        }
    }
}

#[derive(Debug, Args)]
pub struct ParityArgs {
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct TuplesArgs {
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub approach: Option<Vec<ApproachArg>>,
    /// 16x16 images and half the convolution channels.
    #[arg(long)]
    pub small: bool,
    /// Decomposition budget; `--iters` sets the end-to-end one.
    #[arg(long)]
    pub dec_iters: Option<usize>,
    #[arg(long)]
    pub stage1_fraction: Option<f64>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ApproachArg {
    EndToEnd,
    Decomposition,
}

#[derive(Debug, Args)]
pub struct PwlArgs {
    #[arg(long, value_delimiter = ',')]
    pub variant: Option<Vec<PwlVariantArg>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub kpieces: Option<usize>,
    /// Keep the given learning rates instead of the curvature-based ones.
    #[arg(long)]
    pub fixed_rate: bool,
    #[arg(long)]
    pub eval_size: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PwlVariantArg {
    Linear,
    Conv,
    ConvCond,
    Autoencoder,
}

#[derive(Debug, Args)]
pub struct FlatArgs {
    #[arg(long, value_delimiter = ',')]
    pub variant: Option<Vec<FlatVariantArg>>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Constant of the smoothed link.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FlatVariantArg {
    Approx,
    EndToEnd,
    Multiclass,
    ForwardOnly,
}

#[derive(Debug, Args)]
pub struct StocksArgs {
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub approach: Option<Vec<ApproachArg>>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub threshold_fraction: Option<f64>,
    /// Inputs used for the noise ratio at init.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCmd {
    /// Exact gradient variance over all parities of `{0,1}^d`.
    Variance {
        #[arg(long, value_delimiter = ',', default_value = "6,8,10")]
        dims: Vec<usize>,
    },
    /// Largest pairwise correlation between distinct parities.
    Orthogonality {
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,8")]
        dims: Vec<usize>,
    },
    /// SNR at init of both approaches on tuples of line images.
    Snr {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        k: Vec<usize>,
        /// Monte-Carlo tuples per init.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        /// Enumerate every tuple of the pool instead of sampling.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        pool_size: Option<usize>,
        #[arg(long, default_value_t = 10)]
        inits: usize,
        #[arg(long)]
        small: bool,
        /// Also accumulate in 32-bit floats.
        #[arg(long)]
        f32: bool,
    },
    /// Variance decay for products of sign targets.
    Thm3 {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 4000)]
        targets: usize,
        #[arg(long, default_value_t = 16)]
        features: usize,
        /// Gaussian tuples per target instead of the arcsine law.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Noise ratio and agreement of the stocks gradient estimators.
    Stocks {
        #[arg(long, value_delimiter = ',', default_value = "10,100")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum ClosedformCmd {
    /// Condition number of `W` and its log-log slope in `n`.
    Cond {
        #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
        n: Vec<usize>,
    },
    /// Condition number of the window correlation of slope +-1 curves.
    Whiten {
        #[arg(long, value_delimiter = ',', default_value = "25,50,100")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        curves: usize,
        #[arg(long, default_value_t = 3)]
        kpieces: usize,
    },
    /// Expected iterate of gradient descent on the linear encoder.
    Iterate {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        t: u64,
    },
    /// Checks `U W = I` in integer arithmetic.
    Inverse {
        #[arg(long, value_delimiter = ',', default_value = "10,50,200")]
        n: Vec<usize>,
    },
    /// Checks the explicit parity network on every input.
    ParityNet {
        #[arg(long, value_delimiter = ',', default_value = "4,8,12")]
        dims: Vec<usize>,
    },
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// metrics.csv files; each series is labelled by its run directory.
    pub files: Vec<PathBuf>,
    /// Destination SVG; defaults to `<out>/render.svg`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "eval metric")]
    pub title: String,
}

/// What a resolved invocation runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Experiment(ExperimentSpec),
    Tool(ToolSpec),
}

fn approaches(a: &[ApproachArg]) -> Vec<Approach> {
    a.iter()
        .map(|a| match a {
            ApproachArg::EndToEnd => Approach::EndToEnd,
            ApproachArg::Decomposition => Approach::Decomposition,
        })
        .collect()
}

/// Builds the full spec for a subcommand from its defaults and flags.
pub fn resolve(command: &Command, seed: Option<u64>) -> Result<Job, Error> {
    let seed = seed.unwrap_or(0);
    let job = match command {
        Command::Parity(a) => {
            let mut s = ParitySpec {
                seed,
                ..ParitySpec::default()
            };
            if let Some(d) = &a.dims {
                s.dims = d.clone();
            }
            if let Some(e) = a.eval_size {
                s.eval_size = e;
            }
            a.train.apply(&mut s.train);
            Job::Experiment(ExperimentSpec::Parity(s))
        }
        Command::Tuples(a) => {
            let mut s = if a.small {
                TuplesSpec::small()
            } else {
                TuplesSpec::default()
            };
            s.seed = seed;
            if let Some(k) = &a.k {
                s.ks = k.clone();
            }
            if let Some(ap) = &a.approach {
                s.approaches = approaches(ap);
            }
            if let Some(f) = a.stage1_fraction {
                s.stage1_fraction = f;
            }
            if let Some(e) = a.eval_size {
                s.eval_size = e;
            }
            a.train.apply(&mut s.end_to_end);
            let dec = TrainArgs {
                iters: a.dec_iters,
                ..a.train.clone()
            };
            dec.apply(&mut s.decomposition);
            Job::Experiment(ExperimentSpec::Tuples(s))
        }
        Command::Pwl(a) => {
            let mut s = PwlSpec {
                seed,
                ..PwlSpec::default()
            };
            if let Some(v) = &a.variant {
                s.variants = v
                    .iter()
                    .map(|v| match v {
                        PwlVariantArg::Linear => PwlVariant::Linear,
                        PwlVariantArg::Conv => PwlVariant::Conv,
                        PwlVariantArg::ConvCond => PwlVariant::ConvCond,
                        PwlVariantArg::Autoencoder => PwlVariant::Autoencoder,
                    })
                    .collect();
            }
            if let Some(n) = a.n {
                s.n = n;
            }
            if let Some(k) = a.kpieces {
                s.kpieces = k;
            }
            if let Some(e) = a.eval_size {
                s.eval_size = e;
            }
            if a.fixed_rate || a.train.lr.is_some() {
                s.auto_rate = false;
            }
            for v in s.variants.clone() {
                a.train.apply(s.config_mut(v));
            }
            Job::Experiment(ExperimentSpec::Pwl(s))
        }
        Command::Flat(a) => {
            let mut s = FlatSpec {
                seed,
                ..FlatSpec::default()
            };
            if let Some(v) = &a.variant {
                s.variants = v
                    .iter()
                    .map(|v| match v {
                        FlatVariantArg::Approx => FlatVariant::Approx,
                        FlatVariantArg::EndToEnd => FlatVariant::EndToEnd,
                        FlatVariantArg::Multiclass => FlatVariant::Multiclass,
                        FlatVariantArg::ForwardOnly => FlatVariant::ForwardOnly,
                    })
                    .collect();
            }
            if let Some(d) = a.d {
                s.d = d;
            }
            if let Some(c) = a.c {
                s.smooth_c = c;
            }
            if let Some(e) = a.eval_size {
                s.eval_size = e;
            }
            for v in s.variants.clone() {
                a.train.apply(s.config_mut(v));
            }
            Job::Experiment(ExperimentSpec::Flat(s))
        }
        Command::Stocks(a) => {
            let mut s = StocksSpec {
                seed,
                ..StocksSpec::default()
            };
            if let Some(k) = &a.k {
                s.ks = k.clone();
            }
            if let Some(ap) = &a.approach {
                s.approaches = ap
                    .iter()
                    .map(|a| match a {
                        ApproachArg::EndToEnd => StocksApproach::EndToEnd,
                        ApproachArg::Decomposition => StocksApproach::Decomposition,
                    })
                    .collect();
            }
            if let Some(d) = a.d {
                s.d = d;
            }
            if let Some(t) = a.threshold_fraction {
                s.threshold_fraction = t;
            }
            if let Some(n) = a.samples {
                s.noise_samples = n;
            }
            if let Some(e) = a.eval_size {
                s.eval_size = e;
            }
            a.train.apply(&mut s.train);
            Job::Experiment(ExperimentSpec::Stocks(s))
        }
        Command::Diagnose { tool } => Job::Tool(match tool {
            DiagnoseCmd::Variance { dims } => ToolSpec::Variance {
                seed,
                dims: dims.clone(),
            },
            DiagnoseCmd::Orthogonality { dims } => ToolSpec::Orthogonality { dims: dims.clone() },
            DiagnoseCmd::Snr {
                k,
                samples,
                exhaustive,
                pool_size,
                inits,
                small,
                f32,
            } => ToolSpec::Snr {
                seed,
                ks: k.clone(),
                samples: (!exhaustive).then_some(*samples),
                pool_size: pool_size.unwrap_or(if *exhaustive { 40 } else { 2000 }),
                inits: *inits,
                scale: if *small {
                    ImageScale::Small
                } else {
                    ImageScale::Full
                },
                shadow_f32: *f32,
            },
            DiagnoseCmd::Thm3 {
                k,
                d,
                targets,
                features,
                samples,
            } => ToolSpec::Thm3 {
                seed,
                ks: k.clone(),
                d: *d,
                targets: *targets,
                features: *features,
                inner_samples: *samples,
            },
            DiagnoseCmd::Stocks {
                k,
                d,
                samples,
                draws,
            } => ToolSpec::StocksNoise {
                seed,
                ks: k.clone(),
                d: *d,
                samples: *samples,
                draws: *draws,
            },
        }),
        Command::Closedform { tool } => Job::Tool(match tool {
            ClosedformCmd::Cond { n } => ToolSpec::Cond { ns: n.clone() },
            ClosedformCmd::Whiten { n, curves, kpieces } => ToolSpec::Whiten {
                seed,
                ns: n.clone(),
                curves: *curves,
                kpieces: *kpieces,
            },
            ClosedformCmd::Iterate { n, eta, lambda, t } => ToolSpec::Iterate {
                n: *n,
                eta: *eta,
                lambda: *lambda,
                t: *t,
            },
            ClosedformCmd::Inverse { n } => ToolSpec::Inverse { ns: n.clone() },
            ClosedformCmd::ParityNet { dims } => ToolSpec::ParityNet {
                seed,
                dims: dims.clone(),
            },
        }),
        Command::Render(_) => return Err(Error::invalid("render has no spec")),
    };
    Ok(job)
}

/// Reads either an experiment or a study manifest.
pub fn job_from_manifest(path: &Path) -> Result<Job, Error> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
        return Ok(Job::Experiment(m.spec));
    }
    serde_json::from_str::<ToolManifest>(&text)
        .map(|m| Job::Tool(m.tool))
        .map_err(|e| Error::Malformed(format!("{}: not a manifest: {e}", path.display())))
}

/// Renders metrics.csv files to one SVG; the series label is the name of
/// the file's directory, or its stem when it is not called metrics.csv.
pub fn render_svg(files: &[PathBuf], title: &str) -> Result<String, Error> {
    let mut plot = Plot::new(title, "iteration", "eval metric");
    for f in files {
        let label = match f.file_stem().and_then(|s| s.to_str()) {
            Some("metrics") | None => f
                .parent()
                .and_then(|p| p.file_name())
                .and_then(|s| s.to_str())
                .unwrap_or("series")
                .to_string(),
            Some(stem) => stem.to_string(),
        };
        plot = plot.with(Series::line(&label, read_metrics_csv(f)?));
    }
    Ok(plot.to_svg())
}

fn error_kind(e: &Error) -> (&'static str, i32) {
    match e {
        Error::NonFinite(_) => ("non_finite", EXIT_DIVERGED),
        Error::Divergent(_) => ("divergent", EXIT_DIVERGED),
        Error::Shape(_) => ("shape", EXIT_CONFIG),
        Error::InvalidArgument(_) => ("invalid_argument", EXIT_CONFIG),
        Error::MissingCache => ("missing_cache", EXIT_CONFIG),
        Error::RankDeficient { .. } => ("rank_deficient", EXIT_CONFIG),
        Error::TooLarge(_) => ("too_large", EXIT_CONFIG),
        Error::Malformed(_) => ("malformed", EXIT_CONFIG),
        Error::Io(_) => ("io", EXIT_CONFIG),
        Error::Json(_) => ("json", EXIT_CONFIG),
        Error::Csv(_) => ("csv", EXIT_CONFIG),
    }
}

fn error_record(kind: &str, message: &str) -> String {
    json!({ "event": "error", "kind": kind, "message": message }).to_string()
}

fn report_checks(checks: &[Check]) -> bool {
    for c in checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} -- {}", c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn execute(cli: &Cli, out: &Path) -> Result<i32, Error> {
    if let Command::Render(r) = &cli.command {
        let svg = render_svg(&r.files, &r.title)?;
        let dest = r.output.clone().unwrap_or_else(|| out.join("render.svg"));
        if let Some(dir) = dest.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&dest, svg)?;
        println!("{}", json!({ "event": "rendered", "path": dest }));
        return Ok(EXIT_OK);
    }
    let job = match &cli.from_manifest {
        Some(path) => job_from_manifest(path)?,
        None => resolve(&cli.command, cli.seed)?,
    };
    let jobs = cli.jobs.max(1);
    let (checks, diverged) = match &job {
        Job::Experiment(spec) => {
            let outcome = run_experiment(spec, Some(out), jobs)?;
            for r in outcome.records() {
                println!(
                    "{}",
                    json!({
                        "event": "run",
                        "family": spec.family(),
                        "run_id": r.run_id,
                        "status": r.status,
                        "final_eval": r.last().map(|p| p.eval_metric),
                    })
                );
            }
            (outcome.checks(), outcome.any_diverged())
        }
        Job::Tool(spec) => {
            let outcome = run_tool(spec)?;
            write_tool(spec, &outcome, out)?;
            println!(
                "{}",
                json!({ "event": "study", "tool": spec.name(), "summary": outcome.summary })
            );
            (outcome.checks, false)
        }
    };
    if diverged {
        eprintln!("{}", error_record("diverged", "at least one run diverged"));
        return Ok(EXIT_DIVERGED);
    }
    if cli.assert && !report_checks(&checks) {
        return Ok(EXIT_ASSERT);
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the invocation. `out_env`
/// replaces `--out` when set.
pub fn run_with<I, T>(args: I, out_env: Option<PathBuf>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                use std::io::Write;
                let _ = write!(std::io::stdout(), "{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("{}", error_record("usage", first));
            return EXIT_CONFIG;
        }
    };
    let out = out_env.unwrap_or_else(|| cli.out.clone());
    match execute(&cli, &out) {
        Ok(code) => code,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            eprintln!("{}", error_record(kind, &e.to_string()));
            code
        }
    }
}

/// Entry point used by the binary: process arguments and environment.
pub fn main_exit_code() -> i32 {
    let env = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    run_with(std::env::args_os(), env)
}
