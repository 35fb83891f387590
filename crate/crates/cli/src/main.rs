//! `birkhoff-attn` command line front end.
//!
//! Results go to stdout as CSV (default) or JSON, diagnostics to stderr.
//! Exit status: 0 on success, 1 on usage errors, 2 on numerical failures.

use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use birkhoff_attn::attention::{attention_forward, AttentionConfig, DenseMatrix, NormalizerKind};
use birkhoff_attn::birkhoff::{self, ProjectionMethod, ProjectionSettings};
use birkhoff_attn::counting::{self, CensusQuery};
use birkhoff_attn::expressivity::{
    probe_invariances, tradeoff_csv, tradeoff_sweep, uniqueness_sweep, GridDomain, GridSpec,
};
use birkhoff_attn::gradcheck::{gradcheck, GradTarget};
use birkhoff_attn::metrics::{check_stochasticity, frobenius_distance, spearman_rho};
use birkhoff_attn::qontot::{self, Ansatz, CircuitConfig, ParamVec};
use birkhoff_attn::sinkhorn::{SinkhornFlavor, SinkhornSettings};
use birkhoff_attn::{DsmOperator, Error, SquareMatrix};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Grid size processed by `sweep-unique` unless `--full` is given.
const DEFAULT_SWEEP_LIMIT: u64 = 1 << 20;
const WORKERS_ENV: &str = "BIRKHOFF_ATTN_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "birkhoff-attn",
    version,
    about = "Doubly stochastic attention toolkit"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Seed for every randomized path.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (falls back to BIRKHOFF_ATTN_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Flat key=value file; its entries act as flags given before the command line ones.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply a DSM operator to a matrix file.
    Apply(ApplyArgs),
    /// Attention forward pass from Q, K, V files.
    ApplyAttn(AttnArgs),
    /// Count distinct rounded outputs over a discretized grid.
    SweepUnique(SweepArgs),
    /// Entropy and residual for random Gaussian logits.
    SweepTradeoff(TradeoffArgs),
    /// Probe scale invariance and permutation equivariance.
    Props(PropsArgs),
    /// Discretized DSM census.
    Count(CountArgs),
    /// Finite-shot estimate of a circuit DSM.
    Shots(ShotsArgs),
    /// Circuit simulation timings.
    Bench(BenchArgs),
    /// Analytic gradients against central finite differences.
    Gradcheck(GradArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OpName {
    SinkhornNaive,
    SinkhornOt,
    BirkhoffProject,
    Qr,
    Qontot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodName {
    Dykstra,
    Qp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnsatzName {
    Simple,
    Trotter,
}

#[derive(Args, Debug, Clone)]
struct OperatorArgs {
    #[arg(long, value_enum)]
    op: OpName,
    /// Sinkhorn iterations (odd).
    #[arg(long, default_value_t = 21)]
    k: usize,
    /// Sinkhorn temperature used when exponentiating logits.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Projection tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Projection iteration budget.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodName::Dykstra)]
    method: MethodName,
    #[command(flatten)]
    circuit: CircuitArgs,
}

#[derive(Args, Debug, Clone)]
struct CircuitArgs {
    #[arg(long, default_value_t = 8)]
    layers: usize,
    /// Auxiliary qubits (default log2(T) + 1).
    #[arg(long)]
    aux_qubits: Option<usize>,
    #[arg(long, value_enum, default_value_t = AnsatzName::Simple)]
    ansatz: AnsatzName,
    /// Circuit parameters, comma or whitespace separated.
    #[arg(long, conflicts_with = "theta_seed")]
    theta_file: Option<PathBuf>,
    /// Seed for uniform random parameters (defaults to --seed).
    #[arg(long)]
    theta_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    #[command(flatten)]
    operator: OperatorArgs,
    /// Matrix file (CSV, or JSON when the name ends in .json); `-` reads stdin.
    #[arg(long)]
    input: String,
    /// Treat the input as logits: Sinkhorn exponentiates it first.
    #[arg(long)]
    logits: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormalizerName {
    Softmax,
    SoftmaxSigma,
    SoftmaxSigma2,
    SinkhornNaive,
    SinkhornOt,
    Qr,
    Qontot,
    BirkhoffProject,
}

#[derive(Args, Debug)]
struct AttnArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    keys: PathBuf,
    #[arg(long)]
    values: PathBuf,
    #[arg(long, value_enum, default_value_t = NormalizerName::Softmax)]
    normalizer: NormalizerName,
    #[arg(long, default_value_t = 21)]
    k: usize,
    /// Temperature (default sqrt of the head dimension).
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    circuit: CircuitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DomainName {
    Cube,
    Sphere,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    operator: OperatorArgs,
    #[arg(long)]
    n: usize,
    /// Grid points per entry.
    #[arg(long)]
    d: usize,
    #[arg(long, value_enum)]
    domain: DomainName,
    /// Lift the default grid size cap.
    #[arg(long)]
    full: bool,
    /// Emit the ranked multiplicity ECDF instead of the summary.
    #[arg(long)]
    ecdf: bool,
}

#[derive(Args, Debug)]
struct TradeoffArgs {
    #[command(flatten)]
    operator: OperatorArgs,
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Number of Gaussian inputs.
    #[arg(long, default_value_t = 100)]
    samples: usize,
}

#[derive(Args, Debug)]
struct PropsArgs {
    #[command(flatten)]
    operator: OperatorArgs,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CountMode {
    Brute,
    Analytic,
    Decompose,
}

#[derive(Args, Debug)]
struct CountArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, value_enum, default_value_t = CountMode::Brute)]
    mode: CountMode,
}

#[derive(Args, Debug)]
struct ShotsArgs {
    /// DSM dimension T (power of two).
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long)]
    shots: usize,
    /// Project the sampled matrix onto the Birkhoff polytope.
    #[arg(long)]
    project: bool,
    #[command(flatten)]
    circuit: CircuitArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// DSM dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    dims: Vec<usize>,
    /// Layer counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    layers: Vec<usize>,
    #[arg(long)]
    aux_qubits: Option<usize>,
    #[arg(long, value_enum, default_value_t = AnsatzName::Simple)]
    ansatz: AnsatzName,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GradName {
    Softmax,
    SinkhornNaive,
}

#[derive(Args, Debug)]
struct GradArgs {
    #[arg(long, value_enum)]
    normalizer: GradName,
    #[arg(long, default_value_t = 21)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical {
        message: String,
        input: Option<SquareMatrix>,
    },
}

impl Failure {
    fn numerical(err: Error, input: Option<&SquareMatrix>) -> Self {
        match err {
            Error::OperatorFailed {
                input,
                source,
                index,
            } => Failure::Numerical {
                message: format!("grid element {index}: {source}"),
                input: Some(*input),
            },
            Error::NoConvergence { .. }
            | Error::RankDeficient { .. }
            | Error::NotDoublyStochastic { .. }
            | Error::ZeroRankVariance => Failure::Numerical {
                message: err.to_string(),
                input: input.cloned(),
            },
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::numerical(err, None)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_workers(cli.workers) {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical { message, input }) => {
            let report = json!({ "error": message, "input": input });
            eprintln!("{report}");
            ExitCode::from(2)
        }
    }
}

/// Splices `--key value` pairs from a `--config` file in right after the
/// subcommand name, so explicit flags (which come later) take precedence.
fn expand_config(argv: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let Some(pos) = argv
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(argv);
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv
            .get(pos + 1)
            .cloned()
            .ok_or("--config requires a file")?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key=value", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            v => {
                extra.push(format!("--{key}"));
                extra.push(v.to_string());
            }
        }
    }
    let sub = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| SUBCOMMANDS.contains(&a.as_str()))
        .map(|(i, _)| i + 1)
        .unwrap_or(argv.len());
    let mut out = argv[..sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[sub..]);
    Ok(out)
}

const SUBCOMMANDS: [&str; 9] = [
    "apply",
    "apply-attn",
    "sweep-unique",
    "sweep-tradeoff",
    "props",
    "count",
    "shots",
    "bench",
    "gradcheck",
];

fn configure_workers(flag: Option<usize>) -> std::result::Result<(), String> {
    let workers = match flag {
        Some(w) => Some(w),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(w) = workers {
        if w == 0 {
            return Err("worker count must be positive".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Apply(a) => cmd_apply(cli, a),
        Command::ApplyAttn(a) => cmd_attn(cli, a),
        Command::SweepUnique(a) => cmd_sweep(cli, a),
        Command::SweepTradeoff(a) => cmd_tradeoff(cli, a),
        Command::Props(a) => cmd_props(cli, a),
        Command::Count(a) => cmd_count(cli, a),
        Command::Shots(a) => cmd_shots(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Gradcheck(a) => cmd_gradcheck(cli, a),
    }
}

fn require_seed(cli: &Cli, what: &str) -> CliResult<u64> {
    cli.seed
        .ok_or_else(|| usage(format!("{what} is randomized; pass --seed")))
}

fn read_source(path: &str) -> CliResult<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| usage(format!("cannot read stdin: {e}")))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {path}: {e}")))
    }
}

fn read_matrix(path: &str) -> CliResult<SquareMatrix> {
    let text = read_source(path)?;
    let parsed = if path.ends_with(".json") {
        SquareMatrix::from_json_str(&text)
    } else {
        SquareMatrix::from_csv_str(&text)
    };
    parsed.map_err(|e| usage(format!("{path}: {e}")))
}

fn read_dense(path: &Path) -> CliResult<DenseMatrix> {
    let text = read_source(&path.to_string_lossy())?;
    DenseMatrix::from_csv_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn ansatz(name: AnsatzName) -> Ansatz {
    match name {
        AnsatzName::Simple => Ansatz::Simple,
        AnsatzName::Trotter => Ansatz::Trotter,
    }
}

fn circuit_config(args: &CircuitArgs, dim: usize) -> CliResult<CircuitConfig> {
    let config = match args.aux_qubits {
        Some(a) => CircuitConfig::new(dim, a, args.layers, ansatz(args.ansatz)),
        None => CircuitConfig::with_default_aux(dim, args.layers, ansatz(args.ansatz)),
    };
    config.map_err(|e| usage(e.to_string()))
}

fn circuit_params(cli: &Cli, args: &CircuitArgs, config: &CircuitConfig) -> CliResult<ParamVec> {
    if let Some(path) = &args.theta_file {
        let text = read_source(&path.to_string_lossy())?;
        let values = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| usage(format!("{}: cannot parse {s:?}", path.display())))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        return ParamVec::new(config, values).map_err(|e| usage(e.to_string()));
    }
    let seed = match args.theta_seed.or(cli.seed) {
        Some(s) => s,
        None => {
            return Err(usage(
                "circuit parameters need --theta-file, --theta-seed or --seed",
            ))
        }
    };
    Ok(ParamVec::random(
        config,
        &mut ChaCha8Rng::seed_from_u64(seed),
    ))
}

fn build_operator(cli: &Cli, args: &OperatorArgs, dim: usize) -> CliResult<DsmOperator> {
    let sinkhorn = |flavor| -> CliResult<DsmOperator> {
        let s = SinkhornSettings::new(args.k, flavor)
            .and_then(|s| s.with_temperature(args.tau))
            .map_err(|e| usage(e.to_string()))?;
        Ok(DsmOperator::Sinkhorn(s))
    };
    match args.op {
        OpName::SinkhornNaive => sinkhorn(SinkhornFlavor::Naive),
        OpName::SinkhornOt => sinkhorn(SinkhornFlavor::Ot),
        OpName::BirkhoffProject => Ok(DsmOperator::BirkhoffProject(projection_settings(args)?)),
        OpName::Qr => Ok(DsmOperator::Qr {
            seed: require_seed(cli, "qr (noise restarts)")?,
        }),
        OpName::Qontot => {
            let config = circuit_config(&args.circuit, dim)?;
            let theta = circuit_params(cli, &args.circuit, &config)?;
            Ok(DsmOperator::Qontot { config, theta })
        }
    }
}

fn projection_settings(args: &OperatorArgs) -> CliResult<ProjectionSettings> {
    let mut s = ProjectionSettings::with_method(match args.method {
        MethodName::Dykstra => ProjectionMethod::Dykstra,
        MethodName::Qp => ProjectionMethod::SplittingQp,
    });
    if let Some(t) = args.tol {
        s.tolerance = t;
    }
    if let Some(m) = args.max_iter {
        s.max_iterations = m;
    }
    s.validate().map_err(|e| usage(e.to_string()))?;
    Ok(s)
}

fn cmd_apply(cli: &Cli, args: &ApplyArgs) -> CliResult<String> {
    let m = read_matrix(&args.input)?;
    let op = build_operator(cli, &args.operator, m.n())?;
    let result = if args.logits {
        op.apply_logits(&m)
    } else {
        op.apply(&m)
    };
    let out = result.map_err(|e| Failure::numerical(e, Some(&m)))?;
    let report = check_stochasticity(&out);
    eprintln!(
        "row_deviation={} col_deviation={} min_entry={}",
        report.max_row_deviation, report.max_col_deviation, report.min_entry
    );
    Ok(match cli.format {
        Format::Csv => out.to_csv_string(),
        Format::Json => {
            json!({ "operator": op.name(), "matrix": out, "report": report }).to_string() + "\n"
        }
    })
}

fn cmd_attn(cli: &Cli, args: &AttnArgs) -> CliResult<String> {
    let q = read_dense(&args.queries)?;
    let k = read_dense(&args.keys)?;
    let v = read_dense(&args.values)?;
    let t = q.rows();
    let normalizer = match args.normalizer {
        NormalizerName::Softmax => NormalizerKind::Softmax,
        NormalizerName::SoftmaxSigma => NormalizerKind::SoftmaxSigma,
        NormalizerName::SoftmaxSigma2 => NormalizerKind::SoftmaxSigma2,
        NormalizerName::SinkhornNaive => NormalizerKind::SinkhornNaive { k: args.k },
        NormalizerName::SinkhornOt => NormalizerKind::SinkhornOt { k: args.k },
        NormalizerName::Qr => NormalizerKind::QrDsm {
            seed: require_seed(cli, "qr (noise restarts)")?,
        },
        NormalizerName::Qontot => {
            let config = circuit_config(&args.circuit, t)?;
            let theta = circuit_params(cli, &args.circuit, &config)?;
            NormalizerKind::Qontot { config, theta }
        }
        NormalizerName::BirkhoffProject => NormalizerKind::BirkhoffProject {
            settings: ProjectionSettings::default(),
        },
    };
    let mut config =
        AttentionConfig::new(t, q.cols(), normalizer).map_err(|e| usage(e.to_string()))?;
    if let Some(tau) = args.tau {
        config.temperature = tau;
    }
    let out = attention_forward(&q, &k, &v, &config)?;
    Ok(match cli.format {
        Format::Csv => out.output.to_csv_string(),
        Format::Json => {
            let rows: Vec<&[f64]> = out.output.as_slice().chunks(out.output.cols()).collect();
            json!({ "output": rows, "attn": out.attn }).to_string() + "\n"
        }
    })
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> CliResult<String> {
    let domain = match args.domain {
        DomainName::Cube => GridDomain::Hypercube,
        DomainName::Sphere => GridDomain::Hypersphere,
    };
    let spec = GridSpec::new(args.n, args.d, domain).map_err(|e| usage(e.to_string()))?;
    let op = build_operator(cli, &args.operator, args.n)?;
    let limit = if args.full {
        u64::MAX
    } else {
        DEFAULT_SWEEP_LIMIT
    };
    if let Some(total) = spec.total() {
        if total > limit {
            return Err(usage(format!(
                "grid has {total} matrices, above the default cap of {limit}; pass --full"
            )));
        }
    } else if !args.full {
        return Err(usage("grid size overflows; pass --full"));
    }
    let report = uniqueness_sweep(&spec, &op, Some(limit))?;
    Ok(match (cli.format, args.ecdf) {
        (Format::Json, _) => serde_json::to_string(&report).expect("serializable report") + "\n",
        (Format::Csv, true) => report.ecdf_csv(),
        (Format::Csv, false) => format!(
            "operator,total_inputs,unique_outputs\n{},{},{}\n",
            report.operator, report.total_inputs, report.unique_outputs
        ),
    })
}

fn cmd_tradeoff(cli: &Cli, args: &TradeoffArgs) -> CliResult<String> {
    let seed = require_seed(cli, "sweep-tradeoff")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<SquareMatrix> = (0..args.samples)
        .map(|_| SquareMatrix::gaussian(args.n, &mut rng))
        .collect();
    let op = build_operator(cli, &args.operator, args.n)?;
    let points = tradeoff_sweep(&inputs, &op)?;
    Ok(match cli.format {
        Format::Csv => tradeoff_csv(op.name(), &points),
        Format::Json => json!({ "operator": op.name(), "points": points }).to_string() + "\n",
    })
}

fn cmd_props(cli: &Cli, args: &PropsArgs) -> CliResult<String> {
    let seed = require_seed(cli, "props")?;
    let op = build_operator(cli, &args.operator, args.n)?;
    let report = probe_invariances(&op, args.n, args.trials, seed)?;
    Ok(match cli.format {
        Format::Json => serde_json::to_string(&report).expect("serializable report") + "\n",
        Format::Csv => format!(
            "operator,trials,scale_invariant,permutation_equivariant,witnesses\n{},{},{},{},{}\n",
            report.operator,
            report.trials,
            report.scale_invariant,
            report.permutation_equivariant,
            report.witnesses.len()
        ),
    })
}

fn cmd_count(cli: &Cli, args: &CountArgs) -> CliResult<String> {
    let q = CensusQuery::new(args.n, args.p).map_err(|e| usage(e.to_string()))?;
    let (f, c1, c2, c12) = match args.mode {
        CountMode::Brute => (counting::count_brute(&q)?, None, None, None),
        CountMode::Analytic => {
            if args.n != 3 {
                return Err(usage("analytic mode is available for n = 3 only"));
            }
            (counting::f3_analytic(args.p)?, None, None, None)
        }
        CountMode::Decompose => {
            let d = counting::decomposition_check(&q)?;
            if !d.identity_holds() {
                return Err(Failure::Numerical {
                    message: format!("decomposition identity fails: {d:?}"),
                    input: None,
                });
            }
            (d.f, Some(d.c1), Some(d.c2), Some(d.c12))
        }
    };
    Ok(match cli.format {
        Format::Json => {
            json!({ "n": args.n, "p": args.p, "f": f, "c1": c1, "c2": c2, "c12": c12 }).to_string()
                + "\n"
        }
        Format::Csv => {
            let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
            format!(
                "n,p,f,c1,c2,c12\n{},{},{},{},{},{}\n",
                args.n,
                args.p,
                f,
                opt(c1),
                opt(c2),
                opt(c12)
            )
        }
    })
}

fn cmd_shots(cli: &Cli, args: &ShotsArgs) -> CliResult<String> {
    let seed = require_seed(cli, "shots")?;
    let config = circuit_config(&args.circuit, args.dim)?;
    let theta = circuit_params(cli, &args.circuit, &config)?;
    // the input matrix is drawn from the same seed as the sampler
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = SquareMatrix::gaussian(args.dim, &mut rng);
    let exact = qontot::simulate_dsm(&config, &theta, &m)?.into_matrix();
    let mut sampled = qontot::sample_shots(&config, &theta, &m, args.shots, seed)?;
    if args.project {
        sampled = birkhoff::project(&sampled, &ProjectionSettings::default())
            .map_err(|e| Failure::numerical(e, Some(&sampled)))?
            .into_matrix();
    }
    let frob = frobenius_distance(&sampled, &exact)?;
    let rho = spearman_rho(&sampled, &exact)?;
    Ok(match cli.format {
        Format::Csv => format!(
            "dim,shots,projected,spearman,frobenius\n{},{},{},{},{}\n",
            args.dim, args.shots, args.project, rho, frob
        ),
        Format::Json => {
            json!({
                "dim": args.dim,
                "shots": args.shots,
                "projected": args.project,
                "spearman": rho,
                "frobenius": frob,
                "sampled": sampled,
                "exact": exact,
            })
            .to_string()
                + "\n"
        }
    })
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> CliResult<String> {
    let seed = require_seed(cli, "bench")?;
    let mut configs = Vec::new();
    for &dim in &args.dims {
        for &layers in &args.layers {
            let c = match args.aux_qubits {
                Some(a) => CircuitConfig::new(dim, a, layers, ansatz(args.ansatz)),
                None => CircuitConfig::with_default_aux(dim, layers, ansatz(args.ansatz)),
            };
            configs.push(c.map_err(|e| usage(e.to_string()))?);
        }
    }
    let rows = qontot::bench_circuit(&configs, args.reps, seed)?;
    Ok(match cli.format {
        Format::Csv => qontot::bench_csv(&rows),
        Format::Json => serde_json::to_string(&rows).expect("serializable rows") + "\n",
    })
}

fn cmd_gradcheck(cli: &Cli, args: &GradArgs) -> CliResult<String> {
    let seed = require_seed(cli, "gradcheck")?;
    let target = match args.normalizer {
        GradName::Softmax => GradTarget::Softmax,
        GradName::SinkhornNaive => GradTarget::SinkhornNaive { k: args.k },
    };
    let report = gradcheck(target, args.n, args.trials, seed).map_err(|e| match e {
        Error::InvalidArgument(m) => usage(m),
        other => Failure::from(other),
    })?;
    Ok(match cli.format {
        Format::Json => serde_json::to_string(&report).expect("serializable report") + "\n",
        Format::Csv => format!(
            "normalizer,n,trials,max_relative_error\n{},{},{},{:e}\n",
            match args.normalizer {
                GradName::Softmax => "softmax",
                GradName::SinkhornNaive => "sinkhorn-naive",
            },
            report.n,
            report.trials,
            report.max_relative_error
        ),
    })
}
