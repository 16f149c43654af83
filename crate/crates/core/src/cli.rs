//! Command-line front end. Every command writes one JSON (or CSV) report;
//! the exit status is 0 on success, 1 when a check finds a violation, 2 for
//! bad input and 3 when a resource guard trips.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::constants::{
    combined_cost, mixture_lambda, perturbation_lambda, product_cost, tensorization_lambda, ConstantsPipeline,
};
use crate::costs::CostFunction;
use crate::error::{Error, Result};
use crate::hopflax::{
    cost_conjugate, hj_residual, inf_convolution_detailed, lipschitz_and_displacement_check, semigroup_check,
    GridSpec, MaxAffineFunction,
};
use crate::inequalities::{self as ineq, DualForm, TailBound};
use crate::measures::{quantile_radius, relative_entropy, weighted_median, DiscreteMeasure};
use crate::report::{set_tolerance_overrides, VerificationReport, REPORT_IDS};
use crate::transport::{check_transport_branch, standard_ot, w2_squared, weak_ot, Branch};

pub const DEFAULT_SEED: u64 = 0xC0FFEE;
pub const REPORT_SCHEMA: u32 = 1;
/// Resource guard for `hopflax` grids.
pub const MAX_GRID_NODES: f64 = 4.0e6;

#[derive(Parser, Debug, Clone)]
#[command(name = "convex-transport", version, about = "Weak transport, Hopf-Lax semigroups and convex concentration checks")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for all random test data.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads for sweeps (results do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Override a check tolerance: `<report-id>=<value>`, repeatable.
    #[arg(long = "tolerance", global = true, value_parser = parse_tolerance)]
    pub tolerances: Vec<(String, f64)>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// CSV of a tail bound against the exact discrete tail (`bounds upper-tail|lower-tail`).
    #[arg(long = "plot-data", global = true)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn parse_tolerance(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    if !REPORT_IDS.contains(&k) {
        return Err(format!("unknown tolerance key {k:?}; known keys: {}", REPORT_IDS.join(", ")));
    }
    let v: f64 = v.parse().map_err(|e| format!("tolerance for {k}: {e}"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(format!("tolerance for {k} must be finite and nonnegative"));
    }
    Ok((k.to_string(), v))
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Relative entropy H(nu | mu).
    Entropy {
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        mu: PathBuf,
    },
    /// Transport costs: `standard` gives T(from, to), `weak` gives the barycentric cost of `to` given `from`.
    Ot {
        #[command(subcommand)]
        kind: OtKind,
    },
    /// Squared quadratic Wasserstein distance.
    W2 {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        to: PathBuf,
    },
    /// Orlicz norm |x|_{theta/p} or dual norm |x|*_{theta,p}.
    Norm {
        #[command(subcommand)]
        kind: NormKind,
    },
    /// Cost values and Legendre transforms.
    Cost {
        #[command(subcommand)]
        op: CostOp,
    },
    /// Infimum convolution and its grid diagnostics.
    Hopflax {
        #[command(subcommand)]
        op: HopflaxOp,
    },
    /// Convex Poincaré constant search.
    Poincare {
        #[command(subcommand)]
        op: PoincareOp,
    },
    /// Inequality sweeps; exit 1 on any violation.
    Verify {
        #[command(subcommand)]
        check: VerifyCheck,
    },
    /// Derived constants.
    Constants {
        #[command(subcommand)]
        op: ConstantsOp,
    },
    /// Tail and moment bound calculators.
    Bounds(BoundsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PairArgs {
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub to: PathBuf,
    #[arg(long)]
    pub cost: PathBuf,
}

#[derive(Subcommand, Debug, Clone)]
pub enum OtKind {
    /// Optimal coupling cost T(from, to)
    Standard(PairArgs),
    /// Barycentric cost of `to` given `from`, with plan and FW gap
    Weak(PairArgs),
}

#[derive(Args, Debug, Clone)]
pub struct NormArgs {
    #[arg(long)]
    pub cost: PathBuf,
    #[arg(long)]
    pub p: f64,
    /// Comma-separated vector.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub x: Vec<f64>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum NormKind {
    /// Orlicz norm |x|_{theta/p}
    Orlicz(NormArgs),
    /// Dual norm |x|*_{theta,p}
    Dual(NormArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum CostOp {
    /// theta(x)
    Eval {
        #[arg(long)]
        cost: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
    },
    /// Legendre transform theta*(y)
    Legendre {
        #[arg(long)]
        cost: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        y: Vec<f64>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Lower end of every grid axis.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub hi: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
}

impl GridArgs {
    fn spec(&self, dim: usize) -> Result<GridSpec> {
        if !(self.hi > self.lo) {
            return Err(Error::InvalidInput("--hi must exceed --lo".into()));
        }
        let n = ((self.hi - self.lo) / self.h).round() as usize + 1;
        if (n as f64).powi(dim as i32) > MAX_GRID_NODES {
            return Err(Error::Resource(format!("grid of {n}^{dim} nodes exceeds {MAX_GRID_NODES}")));
        }
        GridSpec::new(vec![self.lo; dim], self.h, vec![n; dim])
    }
}

#[derive(Subcommand, Debug, Clone)]
pub enum HopflaxOp {
    /// Q_t f(x) with its dual certificate.
    Eval {
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        cost: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
    },
    /// Q_t Q_s f against Q_{s+t} f on a grid.
    Semigroup {
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        cost: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Hamilton-Jacobi residual and displacement bound for the cost alpha_{C,L}.
    Residual {
        #[arg(long)]
        function: PathBuf,
        #[arg(long = "C")]
        c: f64,
        #[arg(long = "L")]
        l: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        /// Time step of the central difference (default: grid spacing).
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
}

#[derive(Subcommand, Debug, Clone)]
pub enum PoincareOp {
    /// Best ratio Var f / E|grad f|^2 over random convex max-affine f
    Estimate {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_pieces: usize,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
    },
}

/// Test functions: files given with `--function` plus `--random` generated ones.
#[derive(Args, Debug, Clone)]
pub struct FunctionSource {
    #[arg(long = "function")]
    pub functions: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub random: usize,
    /// Pieces of each random function (1 up to this many).
    #[arg(long, default_value_t = 3)]
    pub pieces: usize,
    /// Slope norm cap of random functions (default: what the check allows).
    #[arg(long)]
    pub max_slope: Option<f64>,
}

/// Either an explicit cost file or the pipeline cost for `(lambda, c, M)`.
#[derive(Args, Debug, Clone)]
pub struct CostSource {
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Quantile radius for the plus branch (default: 3/4-quantile radius of mu).
    #[arg(long = "M")]
    pub m: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DualArgs {
    #[arg(long)]
    pub mu: PathBuf,
    #[command(flatten)]
    pub cost: CostSource,
    #[command(flatten)]
    pub functions: FunctionSource,
}

#[derive(Args, Debug, Clone)]
pub struct MlsArgs {
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub c: f64,
    #[arg(long = "M")]
    pub m: Option<f64>,
    #[command(flatten)]
    pub functions: FunctionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchChoice {
    Plus,
    Minus,
    Both,
}

#[derive(Args, Debug, Clone)]
pub struct TransportArgs {
    #[arg(long)]
    pub mu: PathBuf,
    #[command(flatten)]
    pub cost: CostSource,
    #[arg(long = "nu")]
    pub nus: Vec<PathBuf>,
    /// Random measures on the support of mu.
    #[arg(long, default_value_t = 0)]
    pub random: usize,
    #[arg(long, value_enum, default_value_t = BranchChoice::Both)]
    pub branch: BranchChoice,
}

#[derive(Args, Debug, Clone)]
pub struct ConcentrationArgs {
    #[arg(long)]
    pub mu: PathBuf,
    #[command(flatten)]
    pub cost: CostSource,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0])]
    pub p: Vec<f64>,
    #[command(flatten)]
    pub functions: FunctionSource,
}

#[derive(Subcommand, Debug, Clone)]
pub enum VerifyCheck {
    /// Dual form of the plus-branch transport inequality
    #[command(name = "dual-t+")]
    DualTPlus(DualArgs),
    /// Dual form of the minus-branch transport inequality
    #[command(name = "dual-t-")]
    DualTMinus(DualArgs),
    /// Two-sided infimum-convolution inequality
    Ic2(DualArgs),
    /// Modified log-Sobolev inequality for e^f
    MlsConvex(MlsArgs),
    /// Modified log-Sobolev inequality for e^-f
    MlsConcave(MlsArgs),
    /// Weak transport-entropy inequality against measures nu
    Transport(TransportArgs),
    /// Concentration bounds against exact probabilities under mu
    Concentration(ConcentrationArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum ConstantsOp {
    /// Constants, costs and tensorization for a Poincaré constant
    Pipeline {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        c: f64,
        #[arg(long = "M")]
        m: Option<f64>,
        /// Dimension used for the Chebyshev radius when `--M` is absent.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Tensorized constant and its ratio
    Tensorize {
        #[arg(long)]
        lambda: f64,
    },
    /// Constant for a mixture of two measures
    Mixture {
        #[arg(long)]
        lambda0: f64,
        #[arg(long)]
        lambda1: f64,
        #[arg(long)]
        w2sq: Option<f64>,
        #[arg(long)]
        mu0: Option<PathBuf>,
        #[arg(long)]
        mu1: Option<PathBuf>,
    },
    /// Constant after a bounded log-density perturbation
    Perturb {
        #[arg(long)]
        lambda: f64,
        /// Oscillation sup u - inf u of the perturbation.
        #[arg(long)]
        osc: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundKind {
    /// --lambda --L --t
    UpperTail,
    /// --lambda --p --g (the gradient p-norm)
    MomentUpper,
    /// --lambda --M --g (E|grad f|) --t
    LowerTail,
    /// --mu-a --r
    Enlargement,
    /// --p
    LipschitzConc,
    /// --p
    SelfnormMoment,
    /// --p --g (E|grad f|*)
    NonlipLower,
    /// --p --q --g (the q-quantile of |grad f|*)
    NonlipLowerQuantile,
    /// --p --g (E|grad f|*)
    LowerLp,
    /// --t --p with --mu --function --cost
    Combined,
    /// --p --g (the p-norm of |grad f|*)
    MomentQuantile,
}

#[derive(Args, Debug, Clone)]
pub struct BoundsArgs {
    #[arg(value_enum)]
    pub kind: BoundKind,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long = "M")]
    pub m: Option<f64>,
    /// Gradient statistic required by the chosen bound.
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub mu_a: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Measure and function for exact tails and plot data.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    #[arg(long)]
    pub function: Option<PathBuf>,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Points on the plot-data curve.
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

/// Report text plus the optional plot-data CSV.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: String,
    pub plot: Option<String>,
    pub failed: bool,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema: u32,
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    inputs: &'a BTreeMap<String, Value>,
    tolerances: BTreeMap<&'a str, f64>,
    passed: bool,
    result: Value,
}

struct Outcome {
    result: Value,
    reports: Vec<VerificationReport>,
    failed: bool,
    plot: Option<String>,
}

impl Outcome {
    fn value(result: Value) -> Self {
        Outcome { result, reports: Vec::new(), failed: false, plot: None }
    }

    fn checks(result: Value, reports: Vec<VerificationReport>) -> Self {
        let failed = reports.iter().any(|r| !r.passed());
        Outcome { result, reports, failed, plot: None }
    }
}

struct Ctx {
    inputs: BTreeMap<String, Value>,
    rng: ChaCha8Rng,
}

impl Ctx {
    fn read(&mut self, role: &str, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        self.inputs.insert(
            role.to_string(),
            json!({ "path": path.display().to_string(), "sha256": hex::encode(Sha256::digest(&bytes)) }),
        );
        String::from_utf8(bytes).map_err(|_| Error::Parse(format!("{} is not UTF-8", path.display())))
    }

    fn measure(&mut self, role: &str, path: &Path) -> Result<DiscreteMeasure> {
        let text = self.read(role, path)?;
        DiscreteMeasure::from_json_str(&text).map_err(|e| context(path, e))
    }

    fn cost(&mut self, role: &str, path: &Path) -> Result<CostFunction> {
        let text = self.read(role, path)?;
        CostFunction::from_json_str(&text).map_err(|e| context(path, e))
    }

    fn function(&mut self, role: &str, path: &Path) -> Result<MaxAffineFunction> {
        let text = self.read(role, path)?;
        MaxAffineFunction::from_json_str(&text).map_err(|e| context(path, e))
    }

    fn functions(&mut self, src: &FunctionSource, mu: &DiscreteMeasure, cap: f64) -> Result<Vec<MaxAffineFunction>> {
        let mut fs = Vec::new();
        for (i, p) in src.functions.iter().enumerate() {
            let f = self.function(&format!("function[{i}]"), p)?;
            if f.pieces()[0].slope.len() != mu.dim() {
                return Err(Error::DimensionMismatch { expected: mu.dim(), got: f.pieces()[0].slope.len() });
            }
            fs.push(f);
        }
        let cap = src.max_slope.unwrap_or(cap);
        let spread = spread(mu);
        let pieces = src.pieces.max(1);
        for i in 0..src.random {
            fs.push(ineq::random_max_affine(&mut self.rng, mu.dim(), 1 + i % pieces, cap, spread));
        }
        if fs.is_empty() {
            return Err(Error::InvalidInput("no test functions: pass --function or --random N".into()));
        }
        Ok(fs)
    }
}

fn context(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn spread(mu: &DiscreteMeasure) -> f64 {
    let m = mu.mean();
    let s = mu
        .points()
        .iter()
        .map(|x| x.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

#[derive(Clone, Copy)]
enum CostRole {
    Branch(Branch),
    Both,
    Product,
}

fn resolve_cost(ctx: &mut Ctx, src: &CostSource, mu: &DiscreteMeasure, role: CostRole) -> Result<(CostFunction, Value)> {
    match (&src.cost, src.lambda, src.c) {
        (Some(path), None, None) => {
            let theta = ctx.cost("cost", path)?;
            Ok((theta, json!({ "source": "file" })))
        }
        (None, Some(lambda), Some(c)) => {
            let m = match src.m {
                Some(m) => m,
                None => quantile_radius(mu, 0.75)?,
            };
            let pipeline = ConstantsPipeline::new(lambda, c, Some(m))?;
            let n = mu.dim();
            let theta = match role {
                CostRole::Branch(b) => pipeline.cost(b, n)?,
                CostRole::Both => combined_cost(&pipeline, &pipeline, n)?,
                CostRole::Product => product_cost(&pipeline, &pipeline, n)?,
            };
            Ok((theta, json!({ "source": "pipeline", "lambda": lambda, "c": c, "M": m })))
        }
        _ => Err(Error::InvalidInput("give either --cost FILE or --lambda with --c".into())),
    }
}

fn cost_json(theta: &CostFunction) -> Value {
    serde_json::to_value(theta.to_file()).unwrap_or(Value::Null)
}

/// Runs one command and renders its report; does not touch the filesystem
/// except to read inputs.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let overrides: BTreeMap<String, f64> = config.tolerances.iter().cloned().collect();
    set_tolerance_overrides(overrides.clone());
    let mut ctx = Ctx { inputs: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(config.seed) };
    let outcome = match config.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&config.command, config, &mut ctx))?
        }
        None => dispatch(&config.command, config, &mut ctx)?,
    };
    let name = command_name(&config.command);
    let mut result = outcome.result;
    if !outcome.reports.is_empty() {
        result["checks"] = serde_json::to_value(&outcome.reports).expect("reports serialize");
    }
    let envelope = Envelope {
        schema: REPORT_SCHEMA,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: &name,
        seed: config.seed,
        inputs: &ctx.inputs,
        tolerances: overrides.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
        passed: !outcome.failed,
        result,
    };
    let value = serde_json::to_value(&envelope).expect("envelope serializes");
    let report = match config.format {
        Format::Json => serde_json::to_string_pretty(&value).expect("json") + "\n",
        Format::Csv => flatten_csv(&value),
    };
    Ok(RunOutput { report, plot: outcome.plot, failed: outcome.failed })
}

/// Exit status for a finished run.
pub fn exit_status(result: &Result<RunOutput>) -> u8 {
    match result {
        Ok(out) if out.failed => 1,
        Ok(_) => 0,
        Err(e) if e.is_input_error() => 2,
        Err(_) => 3,
    }
}

/// Parses arguments, runs, writes the report and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = run(&config).and_then(|out| {
        if let (Some(path), Some(plot)) = (&config.plot_data, &out.plot) {
            fs::write(path, plot)?;
        }
        match &config.output {
            Some(path) => fs::write(path, &out.report)?,
            None => print!("{}", out.report),
        }
        Ok(out)
    });
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_status(&result))
}

fn command_name(c: &Command) -> String {
    let s = match c {
        Command::Entropy { .. } => "entropy",
        Command::Ot { kind: OtKind::Standard(_) } => "ot standard",
        Command::Ot { kind: OtKind::Weak(_) } => "ot weak",
        Command::W2 { .. } => "w2",
        Command::Norm { kind: NormKind::Orlicz(_) } => "norm orlicz",
        Command::Norm { kind: NormKind::Dual(_) } => "norm dual",
        Command::Cost { op: CostOp::Eval { .. } } => "cost eval",
        Command::Cost { op: CostOp::Legendre { .. } } => "cost legendre",
        Command::Hopflax { op: HopflaxOp::Eval { .. } } => "hopflax eval",
        Command::Hopflax { op: HopflaxOp::Semigroup { .. } } => "hopflax semigroup",
        Command::Hopflax { op: HopflaxOp::Residual { .. } } => "hopflax residual",
        Command::Poincare { .. } => "poincare estimate",
        Command::Verify { check } => match check {
            VerifyCheck::DualTPlus(_) => "verify dual-t+",
            VerifyCheck::DualTMinus(_) => "verify dual-t-",
            VerifyCheck::Ic2(_) => "verify ic2",
            VerifyCheck::MlsConvex(_) => "verify mls-convex",
            VerifyCheck::MlsConcave(_) => "verify mls-concave",
            VerifyCheck::Transport(_) => "verify transport",
            VerifyCheck::Concentration(_) => "verify concentration",
        },
        Command::Constants { op } => match op {
            ConstantsOp::Pipeline { .. } => "constants pipeline",
            ConstantsOp::Tensorize { .. } => "constants tensorize",
            ConstantsOp::Mixture { .. } => "constants mixture",
            ConstantsOp::Perturb { .. } => "constants perturb",
        },
        Command::Bounds(b) => return format!("bounds {}", b.kind.to_possible_value().expect("named").get_name()),
    };
    s.to_string()
}

fn dispatch(command: &Command, config: &RunConfig, ctx: &mut Ctx) -> Result<Outcome> {
    match command {
        Command::Entropy { nu, mu } => {
            let nu = ctx.measure("nu", nu)?;
            let mu = ctx.measure("mu", mu)?;
            Ok(Outcome::value(json!({ "relative_entropy": relative_entropy(&nu, &mu)? })))
        }
        Command::Ot { kind } => run_ot(kind, ctx),
        Command::W2 { from, to } => {
            let a = ctx.measure("from", from)?;
            let b = ctx.measure("to", to)?;
            Ok(Outcome::value(json!({ "w2_squared": w2_squared(&a, &b)? })))
        }
        Command::Norm { kind } => {
            let (args, dual) = match kind {
                NormKind::Orlicz(a) => (a, false),
                NormKind::Dual(a) => (a, true),
            };
            let theta = ctx.cost("cost", &args.cost)?;
            let result = if dual {
                let d = theta.dual_norm(args.p, &args.x)?;
                json!({ "dual_norm": d.value, "heuristic": d.heuristic, "p": args.p, "x": args.x })
            } else {
                json!({ "orlicz_norm": theta.orlicz_norm(args.p, &args.x)?, "p": args.p, "x": args.x })
            };
            Ok(Outcome::value(result))
        }
        Command::Cost { op } => match op {
            CostOp::Eval { cost, x } => {
                let theta = ctx.cost("cost", cost)?;
                Ok(Outcome::value(json!({ "value": theta.eval(x)?, "x": x })))
            }
            CostOp::Legendre { cost, y } => {
                let theta = ctx.cost("cost", cost)?;
                let v = cost_conjugate(&theta, y)?;
                Ok(Outcome::value(json!({ "legendre": v, "finite": v.is_finite(), "y": y })))
            }
        },
        Command::Hopflax { op } => run_hopflax(op, ctx),
        Command::Poincare { op: PoincareOp::Estimate { mu, k_pieces, restarts } } => {
            let mu = ctx.measure("mu", mu)?;
            let est = ineq::estimate_convex_poincare(&mu, *k_pieces, *restarts, config.seed)?;
            Ok(Outcome::value(json!({ "k_pieces": k_pieces, "restarts": restarts, "estimate": est })))
        }
        Command::Verify { check } => run_verify(check, ctx),
        Command::Constants { op } => run_constants(op, ctx),
        Command::Bounds(args) => run_bounds(args, config, ctx),
    }
}

fn run_ot(kind: &OtKind, ctx: &mut Ctx) -> Result<Outcome> {
    let (args, weak) = match kind {
        OtKind::Standard(a) => (a, false),
        OtKind::Weak(a) => (a, true),
    };
    let from = ctx.measure("from", &args.from)?;
    let to = ctx.measure("to", &args.to)?;
    let theta = ctx.cost("cost", &args.cost)?;
    if weak {
        let w = weak_ot(&to, &from, &theta)?;
        let plan = serde_json::to_value(w.to_file()).expect("plan serializes");
        Ok(Outcome::value(json!({ "cost": w.cost, "gap": w.gap, "iterations": w.iterations, "plan": plan })))
    } else {
        let s = standard_ot(&from, &to, &theta)?;
        Ok(Outcome::value(json!({ "cost": s.cost, "residual": s.residual, "pi": s.coupling.pi() })))
    }
}

fn run_hopflax(op: &HopflaxOp, ctx: &mut Ctx) -> Result<Outcome> {
    match op {
        HopflaxOp::Eval { function, cost, t, x } => {
            let f = ctx.function("function", function)?;
            let theta = ctx.cost("cost", cost)?;
            let r = inf_convolution_detailed(&f, &theta, *t, x)?;
            Ok(Outcome::value(json!({
                "value": r.value,
                "lower_bound": r.lower_bound,
                "minimizer": r.minimizer,
                "t": t,
                "x": x,
            })))
        }
        HopflaxOp::Semigroup { function, cost, s, t, grid } => {
            let f = ctx.function("function", function)?;
            let theta = ctx.cost("cost", cost)?;
            let spec = grid.spec(theta.dim())?;
            let r = semigroup_check(&f, &theta, *s, *t, &spec)?;
            let failed = !r.holds;
            let mut out = Outcome::value(json!({ "semigroup": r }));
            out.failed = failed;
            Ok(out)
        }
        HopflaxOp::Residual { function, c, l, times, dt, grid } => {
            let f = ctx.function("function", function)?;
            let dim = f.pieces()[0].slope.len();
            let spec = grid.spec(dim)?;
            let hj = hj_residual(&f, *c, *l, times, dt.unwrap_or(grid.h), &spec)?;
            let displacement = times
                .iter()
                .map(|&t| lipschitz_and_displacement_check(&f, *c, *l, t, &spec).map(|r| json!({ "t": t, "check": r })))
                .collect::<Result<Vec<_>>>()?;
            let failed = displacement.iter().any(|d| d["check"]["holds"] == Value::Bool(false));
            let mut out = Outcome::value(json!({ "hj": hj, "displacement": displacement }));
            out.failed = failed;
            Ok(out)
        }
    }
}

fn run_verify(check: &VerifyCheck, ctx: &mut Ctx) -> Result<Outcome> {
    match check {
        VerifyCheck::DualTPlus(a) | VerifyCheck::DualTMinus(a) | VerifyCheck::Ic2(a) => {
            let (form, role) = match check {
                VerifyCheck::DualTPlus(_) => (DualForm::Plus, CostRole::Branch(Branch::Plus)),
                VerifyCheck::DualTMinus(_) => (DualForm::Minus, CostRole::Branch(Branch::Minus)),
                _ => (DualForm::Both, CostRole::Both),
            };
            let mu = ctx.measure("mu", &a.mu)?;
            let (theta, source) = resolve_cost(ctx, &a.cost, &mu, role)?;
            let cap = theta.max_slope().unwrap_or(1.0);
            let fs = ctx.functions(&a.functions, &mu, cap)?;
            let report = ineq::check_dual(&mu, &theta, &fs, form)?;
            Ok(Outcome::checks(json!({ "cost": cost_json(&theta), "cost_source": source, "functions": fs.len() }), vec![report]))
        }
        VerifyCheck::MlsConvex(a) | VerifyCheck::MlsConcave(a) => {
            let mu = ctx.measure("mu", &a.mu)?;
            let fs = ctx.functions(&a.functions, &mu, a.c)?;
            let report = match check {
                VerifyCheck::MlsConvex(_) => ineq::check_mls_convex(&mu, &fs, a.lambda, a.c)?,
                _ => ineq::check_mls_concave(&mu, &fs, a.lambda, a.c, a.m)?,
            };
            Ok(Outcome::checks(json!({ "lambda": a.lambda, "c": a.c, "M": a.m, "functions": fs.len() }), vec![report]))
        }
        VerifyCheck::Transport(a) => {
            let mu = ctx.measure("mu", &a.mu)?;
            let mut nus = Vec::new();
            for (i, p) in a.nus.iter().enumerate() {
                nus.push(ctx.measure(&format!("nu[{i}]"), p)?);
            }
            for _ in 0..a.random {
                nus.push(ineq::random_measure_on_support(&mut ctx.rng, &mu));
            }
            if nus.is_empty() {
                return Err(Error::InvalidInput("no measures: pass --nu or --random N".into()));
            }
            let branches: &[Branch] = match a.branch {
                BranchChoice::Plus => &[Branch::Plus],
                BranchChoice::Minus => &[Branch::Minus],
                BranchChoice::Both => &[Branch::Plus, Branch::Minus],
            };
            let mut reports = Vec::new();
            let mut costs = serde_json::Map::new();
            for &b in branches {
                let (theta, source) = resolve_cost(ctx, &a.cost, &mu, CostRole::Branch(b))?;
                costs.insert(format!("{b:?}").to_lowercase(), json!({ "cost": cost_json(&theta), "source": source }));
                reports.push(check_transport_branch(&mu, &theta, &nus, b, 0)?);
            }
            Ok(Outcome::checks(json!({ "costs": costs, "measures": nus.len() }), reports))
        }
        VerifyCheck::Concentration(a) => {
            let mu = ctx.measure("mu", &a.mu)?;
            let (theta, source) = resolve_cost(ctx, &a.cost, &mu, CostRole::Product)?;
            let fs = ctx.functions(&a.functions, &mu, 1.0)?;
            let r = ineq::empirical_concentration_check(&mu, &fs, &theta, &a.p)?;
            let reports = vec![r.lipschitz, r.self_normalized, r.lower_quantile, r.lower_mean, r.lower_moment];
            Ok(Outcome::checks(
                json!({ "cost": cost_json(&theta), "cost_source": source, "p": a.p, "functions": fs.len() }),
                reports,
            ))
        }
    }
}

fn run_constants(op: &ConstantsOp, ctx: &mut Ctx) -> Result<Outcome> {
    match op {
        ConstantsOp::Pipeline { lambda, c, m, n } => {
            let m = match (m, n) {
                (Some(m), _) => Some(*m),
                (None, Some(n)) => Some(crate::constants::default_m(*n, *lambda)?),
                (None, None) => None,
            };
            let p = ConstantsPipeline::new(*lambda, *c, m)?;
            Ok(Outcome::value(serde_json::to_value(p).expect("pipeline serializes")))
        }
        ConstantsOp::Tensorize { lambda } => {
            Ok(Outcome::value(serde_json::to_value(tensorization_lambda(*lambda)?).expect("serializes")))
        }
        ConstantsOp::Mixture { lambda0, lambda1, w2sq, mu0, mu1 } => {
            let w2 = match (w2sq, mu0, mu1) {
                (Some(w), None, None) => *w,
                (None, Some(a), Some(b)) => {
                    let a = ctx.measure("mu0", a)?;
                    let b = ctx.measure("mu1", b)?;
                    w2_squared(&a, &b)?
                }
                _ => return Err(Error::InvalidInput("give either --w2sq or both --mu0 and --mu1".into())),
            };
            Ok(Outcome::value(json!({ "w2_squared": w2, "lambda": mixture_lambda(*lambda0, *lambda1, w2)? })))
        }
        ConstantsOp::Perturb { lambda, osc } => {
            Ok(Outcome::value(json!({ "lambda": perturbation_lambda(*lambda, *osc)? })))
        }
    }
}

fn need(v: Option<f64>, flag: &str, kind: BoundKind) -> Result<f64> {
    v.ok_or_else(|| {
        let name = kind.to_possible_value().expect("named").get_name().to_string();
        Error::InvalidInput(format!("bounds {name} needs --{flag}"))
    })
}

/// Exact data for bounds: values of `f` under `mu`, its median and the gradient lengths.
struct Sample {
    weights: Vec<f64>,
    values: Vec<f64>,
    median: f64,
    grad: Vec<f64>,
}

fn sample(ctx: &mut Ctx, args: &BoundsArgs) -> Result<Option<(DiscreteMeasure, MaxAffineFunction, Sample)>> {
    let (Some(mp), Some(fp)) = (&args.mu, &args.function) else {
        return Ok(None);
    };
    let mu = ctx.measure("mu", mp)?;
    let f = ctx.function("function", fp)?;
    if f.pieces()[0].slope.len() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: f.pieces()[0].slope.len() });
    }
    let values: Vec<f64> = mu.points().iter().map(|x| f.value(x)).collect();
    let median = weighted_median(&values, mu.weights());
    let grad = mu.points().iter().map(|x| f.gradient_length(x)).collect();
    let s = Sample { weights: mu.weights().to_vec(), values, median, grad };
    Ok(Some((mu, f, s)))
}

impl Sample {
    fn prob(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.weights.iter().zip(&self.values).filter(|(_, v)| pred(**v)).fold(0.0, |acc, (w, _)| acc + w)
    }

    fn mean_grad(&self) -> f64 {
        self.weights.iter().zip(&self.grad).map(|(w, g)| w * g).sum()
    }
}

fn run_bounds(args: &BoundsArgs, config: &RunConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let kind = args.kind;
    let data = sample(ctx, args)?;
    let bound = match kind {
        BoundKind::UpperTail => {
            let l = match (args.l, &data) {
                (Some(l), _) => l,
                (None, Some((_, f, _))) => f.max_slope_norm(),
                (None, None) => need(None, "L", kind)?,
            };
            ineq::upper_tail(need(args.lambda, "lambda", kind)?, l, need(args.t, "t", kind)?)
        }
        BoundKind::MomentUpper => {
            ineq::moment_upper(need(args.lambda, "lambda", kind)?, need(args.p, "p", kind)?, need(args.g, "g", kind)?)
        }
        BoundKind::LowerTail => {
            let g = match (args.g, &data) {
                (Some(g), _) => g,
                (None, Some((_, _, s))) => s.mean_grad(),
                (None, None) => need(None, "g", kind)?,
            };
            ineq::lower_tail(need(args.lambda, "lambda", kind)?, need(args.m, "M", kind)?, g, need(args.t, "t", kind)?)
        }
        BoundKind::Enlargement => ineq::enlargement(need(args.mu_a, "mu-a", kind)?, need(args.r, "r", kind)?),
        BoundKind::LipschitzConc => ineq::lipschitz_conc(need(args.p, "p", kind)?),
        BoundKind::SelfnormMoment => ineq::selfnorm_moment(need(args.p, "p", kind)?),
        BoundKind::NonlipLower => ineq::nonlip_lower(need(args.p, "p", kind)?, need(args.g, "g", kind)?),
        BoundKind::NonlipLowerQuantile => {
            ineq::nonlip_lower_quantile(need(args.p, "p", kind)?, need(args.q, "q", kind)?, need(args.g, "g", kind)?)
        }
        BoundKind::LowerLp => ineq::lower_lp(need(args.p, "p", kind)?, need(args.g, "g", kind)?),
        BoundKind::MomentQuantile => ineq::moment_quantile(need(args.p, "p", kind)?, need(args.g, "g", kind)?),
        BoundKind::Combined => {
            let Some((mu, f, _)) = &data else {
                return Err(Error::InvalidInput("bounds combined needs --mu and --function".into()));
            };
            let path = args.cost.as_ref().ok_or_else(|| Error::InvalidInput("bounds combined needs --cost".into()))?;
            let theta = ctx.cost("cost", path)?;
            let p = need(args.p, "p", kind)?;
            let (_, dual) = ineq::dual_gradients(mu, f, &theta, p)?;
            let w = mu.weights().to_vec();
            ineq::combined(need(args.t, "t", kind)?, p, |s| {
                w.iter().zip(&dual).filter(|(_, d)| **d >= s).fold(0.0, |acc, (w, _)| acc + w)
            })
        }
    };
    let mut result = json!({ "kind": config_kind_name(kind), "bound": bound });
    let mut reports = Vec::new();
    let mut plot = None;
    if let Some((_, _, s)) = &data {
        let exact = match kind {
            BoundKind::UpperTail | BoundKind::Combined => args.t.map(|t| s.prob(|v| v >= s.median + t)),
            BoundKind::LowerTail => args.t.map(|t| s.prob(|v| v <= s.median - t)),
            _ => None,
        };
        if let (Some(e), Some(b)) = (exact, bound.value()) {
            result["exact"] = json!(e);
            let mut r = VerificationReport::new(format!("bound-{}", config_kind_name(kind)), 1e-12);
            r.record(0, e, b, || json!({ "t": args.t }));
            reports.push(r);
        }
        if config.plot_data.is_some() {
            plot = Some(plot_csv(kind, args, s)?);
        }
    } else if config.plot_data.is_some() {
        return Err(Error::InvalidInput("--plot-data needs --mu and --function".into()));
    }
    let mut out = Outcome::checks(result, reports);
    out.plot = plot;
    Ok(out)
}

fn config_kind_name(kind: BoundKind) -> String {
    kind.to_possible_value().expect("named").get_name().to_string()
}

fn plot_csv(kind: BoundKind, args: &BoundsArgs, s: &Sample) -> Result<String> {
    let points = args.points.max(2);
    let lambda = need(args.lambda, "lambda", kind)?;
    let mut out = String::from("t,bound,exact\n");
    let fmt_bound = |b: &TailBound| b.value().map(|v| v.to_string()).unwrap_or_default();
    match kind {
        BoundKind::UpperTail => {
            let l = args.l.unwrap_or_else(|| s.grad.iter().copied().fold(0.0, f64::max));
            let top = s.values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - s.median;
            let t_max = args.t.unwrap_or(top.max(l / lambda.sqrt() * 4.0));
            for i in 0..points {
                let t = t_max * i as f64 / (points - 1) as f64;
                let b = ineq::upper_tail(lambda, l, t);
                let _ = writeln!(out, "{t},{},{}", fmt_bound(&b), s.prob(|v| v >= s.median + t));
            }
        }
        BoundKind::LowerTail => {
            let m = need(args.m, "M", kind)?;
            let g = args.g.unwrap_or_else(|| s.mean_grad());
            let start = 32.0 * m * g;
            let bottom = s.median - s.values.iter().copied().fold(f64::INFINITY, f64::min);
            let t_max = args.t.unwrap_or(bottom.max(2.0 * start).max(1.0));
            for i in 0..points {
                let t = t_max * i as f64 / (points - 1) as f64;
                let b = ineq::lower_tail(lambda, m, g, t);
                let _ = writeln!(out, "{t},{},{}", fmt_bound(&b), s.prob(|v| v <= s.median - t));
            }
        }
        _ => return Err(Error::InvalidInput("--plot-data is available for upper-tail and lower-tail".into())),
    }
    Ok(out)
}

/// `key,value` rows of a JSON document, keys joined with dots.
fn flatten_csv(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    walk(&join(prefix, k), x, out);
                }
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&join(prefix, &i.to_string()), x, out);
                }
            }
            Value::String(s) => {
                let _ = writeln!(out, "{prefix},\"{}\"", s.replace('"', "\"\""));
            }
            other => {
                let _ = writeln!(out, "{prefix},{other}");
            }
        }
    }
    fn join(a: &str, b: &str) -> String {
        if a.is_empty() {
            b.to_string()
        } else {
            format!("{a}.{b}")
        }
    }
    let mut out = String::from("key,value\n");
    walk("", v, &mut out);
    out
}
