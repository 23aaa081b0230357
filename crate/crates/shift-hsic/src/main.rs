use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shift_hsic::analysis::residual_lag_scan;
use shift_hsic::error::{Error, Result};
use shift_hsic::experiments::{run_experiment, ExperimentSpec};
use shift_hsic::fmtnum::fmt_f64;
use shift_hsic::ingest::{self, GapPolicy};
use shift_hsic::kernels::KernelSpec;
use shift_hsic::nulldist::{correlation_test, hsic_test, NullMethod, TestMethod, TestResult};
use shift_hsic::statistic::SeriesPair;
use shift_hsic::synth::{simulate_pair, Coupling, ProcessConfig, DEFAULT_BURN_IN};

const EXIT_REJECT: u8 = 10;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "shift-hsic",
    about = "Independence tests for stationary time series with a circular-shift null",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Master seed for all randomized steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = logical cores). Never changes output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Kernel for both series.
    #[arg(long, global = true, value_enum, default_value_t = KernelArg::Gaussian)]
    kernel: KernelArg,
    /// Explicit Gaussian bandwidth; omitted = median heuristic.
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Gaussian,
    Linear,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Test instantaneous independence of two series.
    Test(TestArgs),
    /// Simulate a pair of AR(1) series with extinct Gaussian innovations.
    Simulate(SimulateArgs),
    /// Run a batch experiment from a JSON spec.
    Experiment(ExperimentArgs),
    /// Fit a lag regression of y on x and scan residual dependence by lag.
    Scan(ScanArgs),
    /// Build pairwise dependence graphs over several tick files.
    Graph(GraphArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Two-column CSV (timestamp_ms,value) for the first series.
    #[arg(long, requires = "y", conflicts_with = "paired")]
    x: Option<PathBuf>,
    /// Two-column CSV (timestamp_ms,value) for the second series.
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// Three-column CSV (timestamp_ms,x,y).
    #[arg(long, required_unless_present = "x")]
    paired: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Shift)]
    method: MethodArg,
    /// Smallest shift offset (default: max(20, ceil(0.1 n))).
    #[arg(long)]
    shift_lo: Option<usize>,
    /// Largest shift offset (default: ceil(0.5 n)).
    #[arg(long)]
    shift_hi: Option<usize>,
    /// Permutation resamples (permutation method only).
    #[arg(long, default_value_t = 500)]
    resamples: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Use |Pearson correlation| instead of HSIC as the statistic.
    #[arg(long)]
    correlation: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Shift,
    Permutation,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = DesignArg::Dependent)]
    design: DesignArg,
    /// AR coefficient, |a| < 1.
    #[arg(long, default_value_t = 0.2)]
    a: f64,
    /// Extinction rate in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Extinction ball radius.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    Dependent,
    Independent,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment spec (design, grid, n, repetitions, alpha, methods,
    /// master_seed).
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    /// Regressor series CSV (timestamp_ms,value).
    #[arg(long)]
    x: PathBuf,
    /// Regressed series CSV (timestamp_ms,value).
    #[arg(long)]
    y: PathBuf,
    /// Highest regression lag q: y_t on x_t .. x_{t-q}.
    #[arg(long, default_value_t = 6)]
    max_reg_lag: usize,
    /// Highest scanned lag for residual dependence.
    #[arg(long, default_value_t = 30)]
    max_scan_lag: usize,
    /// Methods to run at every lag.
    #[arg(long, value_delimiter = ',', default_values_t = vec![MethodChoice::ShiftHsic, MethodChoice::Correlation])]
    methods: Vec<MethodChoice>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodChoice {
    ShiftHsic,
    BootstrapHsic,
    Correlation,
}

impl std::fmt::Display for MethodChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(TestMethod::from(*self).label())
    }
}

impl From<MethodChoice> for TestMethod {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::ShiftHsic => TestMethod::ShiftHsic,
            MethodChoice::BootstrapHsic => TestMethod::BootstrapHsic,
            MethodChoice::Correlation => TestMethod::Correlation,
        }
    }
}

#[derive(Args)]
struct GraphArgs {
    /// Tick CSV files (timestamp_ms,price), one per node.
    #[arg(long, num_args = 2.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Granulation window in milliseconds.
    #[arg(long, default_value_t = 120_000)]
    granulate: i64,
    /// First-difference each granulated series.
    #[arg(long)]
    difference: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global()
        {
            eprintln!("ERROR: thread pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ERROR: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_)
        | Error::NonStationary { .. }
        | Error::TooLarge { .. }
        | Error::InvalidShift { .. }
        | Error::Io(_)
        | Error::Json(_) => EXIT_USAGE,
        Error::ParseError { .. }
        | Error::OrderError { .. }
        | Error::EmptyInput(_)
        | Error::DegenerateSeries(_)
        | Error::TooShort { .. }
        | Error::NoOverlap
        | Error::SingularDesign
        | Error::GeneratorStall(_) => EXIT_DATA,
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let started = std::time::Instant::now();
    let code = match &cli.command {
        Command::Test(args) => cmd_test(&cli.global, args)?,
        Command::Simulate(args) => cmd_simulate(&cli.global, args)?,
        Command::Experiment(args) => cmd_experiment(&cli.global, args)?,
        Command::Scan(args) => cmd_scan(&cli.global, args)?,
        Command::Graph(args) => cmd_graph(&cli.global, args)?,
    };
    eprintln!("INFO: finished in {:.3}s", started.elapsed().as_secs_f64());
    Ok(code)
}

fn kernel_spec(global: &GlobalArgs) -> Result<KernelSpec> {
    match (global.kernel, global.bandwidth) {
        (KernelArg::Gaussian, Some(sigma)) => KernelSpec::gaussian(sigma),
        (KernelArg::Gaussian, None) => Ok(KernelSpec::gaussian_median()),
        (KernelArg::Linear, None) => Ok(KernelSpec::linear()),
        (KernelArg::Linear, Some(_)) => Err(Error::InvalidInput(
            "--bandwidth applies only to the gaussian kernel".into(),
        )),
    }
}

fn emit(global: &GlobalArgs, content: &str) -> Result<()> {
    match &global.output {
        Some(path) => {
            std::fs::write(path, content)?;
            eprintln!("INFO: wrote {}", path.display());
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

/// Read a three-column `timestamp_ms,x,y` file. An unparsable first line
/// is treated as a header, matching the two-column loader.
fn load_paired_csv(path: &Path) -> Result<SeriesPair> {
    let file = std::fs::File::open(path)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut last_ts: Option<i64> = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parsed = (|| {
            let ts = fields.next()?.trim().parse::<i64>().ok()?;
            let a = fields.next()?.trim().parse::<f64>().ok()?;
            let b = fields.next()?.trim().parse::<f64>().ok()?;
            if fields.next().is_some() {
                return None;
            }
            Some((ts, a, b))
        })();
        match parsed {
            Some((ts, a, b)) => {
                if last_ts.is_some_and(|prev| ts <= prev) {
                    return Err(Error::OrderError { line: idx + 1 });
                }
                last_ts = Some(ts);
                x.push(a);
                y.push(b);
            }
            None if idx == 0 => continue,
            None => {
                return Err(Error::ParseError {
                    line: idx + 1,
                    message: format!("expected `timestamp_ms,x,y`, got `{line}`"),
                })
            }
        }
    }
    if x.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    SeriesPair::new(x, y)
}

fn load_value_pair(x_path: &Path, y_path: &Path) -> Result<SeriesPair> {
    let x = ingest::load_csv(x_path)?;
    let y = ingest::load_csv(y_path)?;
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "series lengths differ: {} has {}, {} has {}",
            x_path.display(),
            x.len(),
            y_path.display(),
            y.len()
        )));
    }
    SeriesPair::new(x.prices, y.prices)
}

fn test_result_csv(result: &TestResult) -> String {
    format!(
        "statistic,p_value,n,null_samples\n{},{},{},{}\n",
        fmt_f64(result.statistic),
        fmt_f64(result.p_value),
        result.n,
        result.null_samples.len()
    )
}

fn cmd_test(global: &GlobalArgs, args: &TestArgs) -> Result<ExitCode> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must be in (0, 1), got {}",
            args.alpha
        )));
    }
    let pair = match (&args.paired, &args.x, &args.y) {
        (Some(p), _, _) => load_paired_csv(p)?,
        (None, Some(x), Some(y)) => load_value_pair(x, y)?,
        _ => unreachable!("clap enforces x/y or paired"),
    };
    let method = match args.method {
        MethodArg::Shift => {
            let (dlo, dhi) = shift_hsic::nulldist::default_shift_range(pair.len());
            NullMethod::Shift {
                lo: args.shift_lo.unwrap_or(dlo),
                hi: args.shift_hi.unwrap_or(dhi),
            }
        }
        MethodArg::Permutation => NullMethod::Permutation {
            resamples: args.resamples,
            seed: global.seed,
        },
    };
    let kernel = kernel_spec(global)?;
    let result = if args.correlation {
        correlation_test(&pair, &method)?
    } else {
        hsic_test(&pair, &kernel, &kernel, &method)?
    };
    let rendered = match global.format {
        FormatArg::Json => serde_json::to_string_pretty(&result)? + "\n",
        FormatArg::Csv => test_result_csv(&result),
    };
    emit(global, &rendered)?;
    if result.p_value <= args.alpha {
        eprintln!(
            "INFO: reject independence at alpha = {} (p = {})",
            args.alpha, result.p_value
        );
        Ok(ExitCode::from(EXIT_REJECT))
    } else {
        eprintln!(
            "INFO: no evidence against independence at alpha = {} (p = {})",
            args.alpha, result.p_value
        );
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<ExitCode> {
    let cfg = ProcessConfig {
        ar_coeff: args.a,
        extinction_rate: args.p,
        radius: args.r,
        length: args.n,
        burn_in: args.burn_in,
        seed: global.seed,
        coupling: match args.design {
            DesignArg::Dependent => Coupling::Dependent,
            DesignArg::Independent => Coupling::Independent,
        },
    };
    let pair = simulate_pair(&cfg)?;
    let rendered = match global.format {
        FormatArg::Csv => {
            let mut out = String::from("timestamp_ms,x,y\n");
            for (t, (a, b)) in pair.x.iter().zip(&pair.y).enumerate() {
                out.push_str(&format!("{t},{},{}\n", fmt_f64(*a), fmt_f64(*b)));
            }
            out
        }
        FormatArg::Json => serde_json::to_string_pretty(&serde_json::json!({
            "config": cfg,
            "x": pair.x,
            "y": pair.y,
        }))? + "\n",
    };
    emit(global, &rendered)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(global: &GlobalArgs, args: &ExperimentArgs) -> Result<ExitCode> {
    let raw = std::fs::read_to_string(&args.spec)?;
    let spec: ExperimentSpec = serde_json::from_str(&raw)?;
    let report = run_experiment(&spec)?;
    let rendered = match global.format {
        FormatArg::Csv => report.to_csv(),
        FormatArg::Json => report.to_json()? + "\n",
    };
    emit(global, &rendered)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan(global: &GlobalArgs, args: &ScanArgs) -> Result<ExitCode> {
    let pair = load_value_pair(&args.x, &args.y)?;
    let methods: Vec<TestMethod> = args.methods.iter().map(|&m| m.into()).collect();
    let kernel = kernel_spec(global)?;
    let result = residual_lag_scan(
        &pair,
        args.max_reg_lag,
        args.max_scan_lag,
        &methods,
        &kernel,
        &kernel,
        global.seed,
    )?;
    let rendered = match global.format {
        FormatArg::Csv => result.to_csv(),
        FormatArg::Json => serde_json::to_string_pretty(&result)? + "\n",
    };
    emit(global, &rendered)?;
    Ok(ExitCode::SUCCESS)
}

/// Granulate each input, optionally difference, and restrict all series
/// to the slots where every one of them has a value.
fn aligned_values(args: &GraphArgs) -> Result<Vec<(String, Vec<f64>)>> {
    let mut regular = Vec::new();
    for path in &args.inputs {
        let ticks = ingest::load_csv(path)?;
        let mut series = ingest::granulate(&ticks, args.granulate, GapPolicy::CarryForward)?;
        if args.difference {
            series = ingest::difference(&series)?;
        }
        regular.push(series);
    }
    let start = regular.iter().map(|s| s.start).max().unwrap();
    let end = regular
        .iter()
        .map(|s| s.start + s.interval * s.values.len() as i64)
        .min()
        .unwrap();
    if end <= start {
        return Err(Error::NoOverlap);
    }
    let slots = ((end - start) / args.granulate) as usize;
    let mut out: Vec<(String, Vec<f64>)> = regular
        .iter()
        .map(|s| (s.name.clone(), Vec::with_capacity(slots)))
        .collect();
    for slot in 0..slots {
        let t = start + slot as i64 * args.granulate;
        let vals: Option<Vec<f64>> = regular
            .iter()
            .map(|s| {
                let idx = ((t - s.start) / s.interval) as usize;
                s.values[idx]
            })
            .collect();
        if let Some(vals) = vals {
            for (dst, v) in out.iter_mut().zip(vals) {
                dst.1.push(v);
            }
        }
    }
    if out[0].1.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(out)
}

fn cmd_graph(global: &GlobalArgs, args: &GraphArgs) -> Result<ExitCode> {
    let series = aligned_values(args)?;
    eprintln!(
        "INFO: {} aligned series of length {}",
        series.len(),
        series[0].1.len()
    );
    let kernel = kernel_spec(global)?;
    let graphs =
        shift_hsic::analysis::dependence_graph(&series, args.alpha, &kernel, &kernel, global.seed)?;
    let json = serde_json::to_string_pretty(&graphs)? + "\n";
    match &global.output {
        Some(path) => {
            let stem = path.with_extension("");
            let stem = stem.to_string_lossy();
            std::fs::write(format!("{stem}.json"), &json)?;
            std::fs::write(format!("{stem}-hsic.dot"), graphs.hsic.to_dot())?;
            std::fs::write(
                format!("{stem}-correlation.dot"),
                graphs.correlation.to_dot(),
            )?;
            eprintln!("INFO: wrote {stem}.json, {stem}-hsic.dot, {stem}-correlation.dot");
        }
        None => {
            let mut stdout = std::io::stdout();
            stdout.write_all(json.as_bytes())?;
            stdout.write_all(graphs.hsic.to_dot().as_bytes())?;
            stdout.write_all(graphs.correlation.to_dot().as_bytes())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
