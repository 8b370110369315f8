//! Command-line front end: solves the model and writes plot data.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use tlmodel::criticality::{phase_boundary, zeros_at, PsiRange};
use tlmodel::distribution::{equivalent_lognormal_vol, LiborMixture};
use tlmodel::export::{self, SigmaLnRow};
use tlmodel::mc::{mc_estimate_normalization, secondary_peak, simulate_paths, McReport};
use tlmodel::pricing::{arrears_price, caplet_quote, smile};
use tlmodel::solver::solve;
use tlmodel::{ModelError, ModelSolution, TenorStructure, WideReal, YieldCurve};

const PRECISION_ENV: &str = "TLMODEL_PRECISION";
const DEFAULT_PRECISION: u32 = 256;

#[derive(Debug)]
enum CliError {
    Config(String),
    Model(ModelError),
    Io(io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(ModelError::Precision { .. }) => 3,
            CliError::Model(
                ModelError::InvalidArgument(_)
                | ModelError::NonPositiveForward { .. }
                | ModelError::HorizonOutOfRange { .. }
                | ModelError::PointMass
                | ModelError::Domain(_)
                | ModelError::Parse(_),
            ) => 2,
            CliError::Model(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "tlmodel",
    version,
    about = "Exact solver and figure data for the terminal-measure log-normal Libor model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the model at one volatility and write the solution as JSON
    Solve(SolveArgs),
    /// Write the data behind one figure
    Figures {
        #[command(subcommand)]
        which: Figure,
    },
}

#[derive(Subcommand)]
enum Figure {
    /// Forward-measure Libor density, columns L,density
    Pdf(PdfArgs),
    /// Caplet prices and Black vols across strikes, columns K,price,sigma_BS
    Smile(SmileArgs),
    /// Equivalent log-normal and ATM Black vol against psi
    SigmaLn(SweepArgs),
    /// Zeros of the generating function with the two reference circles
    Zeros(SweepArgs),
    /// Critical volatility over an (r0, tau) grid
    Phase(PhaseArgs),
    /// Libor-in-arrears price and equivalent vol against psi
    Arrears(SweepArgs),
    /// Monte Carlo estimate of the normalization against the exact value
    McCompare(McArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// flat:<r0> or csv:<path> (header t,df)
    #[arg(long, default_value = "flat:0.05")]
    curve: String,
    /// Number of accrual periods
    #[arg(long, default_value_t = 40)]
    n: usize,
    /// Accrual length in years
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    /// Working precision in bits (default from TLMODEL_PRECISION, else 256)
    #[arg(long)]
    precision: Option<u32>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output file; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    psi: f64,
    /// Solution JSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PdfArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    psi: f64,
    #[arg(long, default_value_t = 30)]
    i: usize,
    /// Libor grid: a:b:step or a comma list
    #[arg(long, default_value = "0.0005:0.2:0.0005")]
    grid: String,
}

#[derive(Args)]
struct SmileArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    psi: f64,
    #[arg(long, default_value_t = 30)]
    i: usize,
    /// Strikes: a:b:step or a comma list
    #[arg(long, default_value = "0.02:0.1:0.005")]
    strikes: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Volatilities: a value, a comma list or a:b:step
    #[arg(long)]
    psi: String,
    #[arg(long, default_value_t = 30)]
    i: usize,
}

#[derive(Args)]
struct PhaseArgs {
    #[command(flatten)]
    output: OutputArgs,
    /// Short rates: a value, a comma list or a:b:step
    #[arg(long, default_value = "0.01:0.1:0.01")]
    r0: String,
    /// Accrual lengths: a value, a comma list or a:b:step
    #[arg(long, default_value = "0.0625,0.125,0.25,0.5")]
    tau: String,
    /// Fixing time of the Libor, in years
    #[arg(long, default_value_t = 7.5)]
    fixing_time: f64,
    /// Final date of the tenor structure, in years
    #[arg(long, default_value_t = 10.0)]
    total_time: f64,
    /// Scan range for the exact critical volatility, a:b:step
    #[arg(long, default_value = "0.02:1.2:0.0025")]
    psi: String,
    #[arg(long)]
    precision: Option<u32>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Volatilities: a value, a comma list or a:b:step
    #[arg(long)]
    psi: String,
    #[arg(long, default_value_t = 30)]
    i: usize,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// `a:b:step` (inclusive), a comma list, or a single value.
fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::Config(format!("not a number: {s:?}")))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step.is_nan() || step <= 0.0 || b < a {
                return Err(CliError::Config(format!(
                    "bad sweep {spec:?}: need start <= stop and step > 0"
                )));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| a + k as f64 * step).collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(CliError::Config(format!(
            "bad grid {spec:?}: use a value, a,b,c or start:stop:step"
        ))),
    }
}

fn precision(flag: Option<u32>) -> CliResult<u32> {
    let bits = match flag {
        Some(b) => b,
        None => match std::env::var(PRECISION_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Config(format!("{PRECISION_ENV}={v:?} is not a bit count"))
            })?,
            Err(_) => DEFAULT_PRECISION,
        },
    };
    if bits < 53 {
        return Err(CliError::Config(format!(
            "precision must be at least 53 bits, got {bits}"
        )));
    }
    Ok(bits)
}

fn build_curve(m: &ModelArgs) -> CliResult<YieldCurve> {
    let tenor = TenorStructure::uniform(m.n, m.tau).map_err(|e| CliError::Config(e.to_string()))?;
    let curve = if let Some(r0) = m.curve.strip_prefix("flat:") {
        let r0 = r0
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("bad short rate in {:?}", m.curve)))?;
        YieldCurve::flat(r0, tenor)
    } else if let Some(path) = m.curve.strip_prefix("csv:") {
        YieldCurve::load_csv(tenor, path)
    } else {
        return Err(CliError::Config(format!(
            "curve must be flat:<r0> or csv:<path>, got {:?}",
            m.curve
        )));
    };
    curve.map_err(|e| match e {
        ModelError::Io(io) => CliError::Config(format!("cannot read curve: {io}")),
        other => CliError::Config(other.to_string()),
    })
}

fn check_horizon(curve: &YieldCurve, i: usize) -> CliResult<()> {
    if i + 1 >= curve.n() {
        return Err(CliError::Config(format!(
            "horizon {i} out of range 0..={}",
            curve.n() - 2
        )));
    }
    Ok(())
}

fn emit(
    output: &OutputArgs,
    write_csv: impl FnOnce(&mut Vec<u8>) -> tlmodel::Result<()>,
) -> CliResult<()> {
    let mut buf = Vec::new();
    write_csv(&mut buf)?;
    if output.format == Format::Json {
        let value = export::table_to_json(&buf)?;
        buf = serde_json::to_vec_pretty(&value).map_err(ModelError::from)?;
        buf.push(b'\n');
    }
    write_bytes(output.out.as_ref(), &buf)
}

fn write_bytes(path: Option<&PathBuf>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            w.write_all(bytes)?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let bits = precision(args.model.precision)?;
    let curve = build_curve(&args.model)?;
    let sol = solve(&curve, args.psi, bits)?;
    sol.save_json(&args.out).map_err(|e| match e {
        ModelError::Io(io) => {
            CliError::Config(format!("cannot write {}: {io}", args.out.display()))
        }
        other => other.into(),
    })?;
    let mut sum_rule = WideReal::zero(bits);
    let mut fra = WideReal::zero(bits);
    for i in 0..curve.n() {
        let s = sol.sum_rule_residual(i)?;
        if s > sum_rule {
            sum_rule = s;
        }
        let f = sol.fra_residual(i)?;
        if f > fra {
            fra = f;
        }
    }
    println!("horizons: {}", curve.n());
    println!("max sum-rule residual: {}", sum_rule.to_sci_string(6));
    println!("max FRA residual: {}", fra.to_sci_string(6));
    let last = curve.n() - 1;
    println!(
        "adjusted Libor {last}: {}",
        sol.adjusted_libor(last)?.to_sci_string(8)
    );
    Ok(())
}

fn solve_for(model: &ModelArgs, psi: f64) -> CliResult<(YieldCurve, ModelSolution)> {
    let bits = precision(model.precision)?;
    let curve = build_curve(model)?;
    let sol = solve(&curve, psi, bits)?;
    Ok((curve, sol))
}

fn cmd_pdf(a: &PdfArgs) -> CliResult<()> {
    let curve = build_curve(&a.model)?;
    check_horizon(&curve, a.i)?;
    let grid = parse_grid(&a.grid)?;
    let (_, sol) = solve_for(&a.model, a.psi)?;
    let mixture = LiborMixture::new(&sol, a.i)?;
    let points = grid
        .iter()
        .map(|&l| Ok((l, mixture.pdf(l)?)))
        .collect::<tlmodel::Result<Vec<_>>>()?;
    emit(&a.output, |w| export::write_pdf(w, &points))
}

fn cmd_smile(a: &SmileArgs) -> CliResult<()> {
    let curve = build_curve(&a.model)?;
    check_horizon(&curve, a.i)?;
    let strikes = parse_grid(&a.strikes)?;
    let (_, sol) = solve_for(&a.model, a.psi)?;
    let quotes = smile(&sol, a.i, &strikes)?;
    emit(&a.output, |w| export::write_smile(w, &quotes))
}

/// Solves every sweep cell in parallel; failed cells are reported and skipped
/// unless every cell fails.
fn sweep<T: Send>(
    a: &SweepArgs,
    cell: impl Fn(&ModelSolution) -> CliResult<T> + Sync,
) -> CliResult<Vec<(f64, T)>> {
    let bits = precision(a.model.precision)?;
    let curve = build_curve(&a.model)?;
    check_horizon(&curve, a.i)?;
    let psis = parse_grid(&a.psi)?;
    let results: Vec<(f64, CliResult<T>)> = psis
        .par_iter()
        .map(|&psi| {
            (
                psi,
                solve(&curve, psi, bits)
                    .map_err(CliError::from)
                    .and_then(|s| cell(&s)),
            )
        })
        .collect();
    let total = results.len();
    let mut rows = Vec::new();
    let mut last_err = None;
    for (psi, r) in results {
        match r {
            Ok(v) => rows.push((psi, v)),
            Err(e) => {
                eprintln!("psi = {psi}: {e}");
                last_err = Some(e);
            }
        }
    }
    match last_err {
        Some(e) if rows.is_empty() && total > 0 => Err(e),
        _ => Ok(rows),
    }
}

fn cmd_sigma_ln(a: &SweepArgs) -> CliResult<()> {
    let i = a.i;
    let rows = sweep(a, |sol| {
        let sigma_ln = equivalent_lognormal_vol(sol, i)?;
        let atm = caplet_quote(sol, i, sol.curve().forward_libor(i))?;
        Ok((sigma_ln, atm.sigma_bs))
    })?;
    let rows: Vec<SigmaLnRow> = rows
        .into_iter()
        .map(|(psi, (s, b))| SigmaLnRow {
            psi,
            sigma_ln: Some(s),
            sigma_bs_atm: b,
        })
        .collect();
    emit(&a.output, |w| export::write_sigma_ln(w, &rows))
}

fn cmd_zeros(a: &SweepArgs) -> CliResult<()> {
    let i = a.i;
    let rows = sweep(a, |sol| Ok(zeros_at(sol, i)?))?;
    let t = a.model.tau * i as f64;
    let sets: Vec<_> = rows.into_iter().map(|(_, z)| (z, t)).collect();
    emit(&a.output, |w| export::write_zeros(w, &sets))
}

fn cmd_arrears(a: &SweepArgs) -> CliResult<()> {
    let i = a.i;
    let rows = sweep(a, |sol| Ok(arrears_price(sol, i)?))?;
    emit(&a.output, |w| export::write_arrears(w, &rows))
}

fn cmd_phase(a: &PhaseArgs) -> CliResult<()> {
    let bits = precision(a.precision)?;
    let r0 = parse_grid(&a.r0)?;
    let tau = parse_grid(&a.tau)?;
    let scan = parse_grid(&a.psi)?;
    let range = match a.psi.split(':').collect::<Vec<_>>().as_slice() {
        [_, _, step] => PsiRange::new(
            scan[0],
            *scan.last().expect("non-empty"),
            step.parse().unwrap_or(0.0),
        )
        .map_err(|e| CliError::Config(e.to_string()))?,
        _ => return Err(CliError::Config("phase needs --psi start:stop:step".into())),
    };
    let times_ok = a.fixing_time > 0.0 && a.total_time > a.fixing_time;
    if r0.iter().chain(&tau).any(|v| *v <= 0.0) || !times_ok {
        return Err(CliError::Config(
            "need positive r0 and tau, and 0 < fixing time < total time".into(),
        ));
    }
    let rows = phase_boundary(&r0, &tau, a.fixing_time, a.total_time, range, bits);
    for r in rows.iter().filter(|r| r.exact.is_none()) {
        eprintln!(
            "r0 = {}, tau = {}: no exact critical volatility",
            r.r0, r.tau
        );
    }
    emit(&a.output, |w| export::write_phase(w, &rows))
}

fn cmd_mc(a: &McArgs) -> CliResult<()> {
    let bits = precision(a.model.precision)?;
    let curve = build_curve(&a.model)?;
    check_horizon(&curve, a.i)?;
    if a.paths == 0 {
        return Err(CliError::Config("need at least one path".into()));
    }
    let psis = parse_grid(&a.psi)?;
    let paths = simulate_paths(a.seed, a.paths, curve.tenor())?;
    let mut reports = Vec::new();
    for psi in psis {
        let sol = solve(&curve, psi, bits)?;
        let est = mc_estimate_normalization(&sol, &paths, a.i)?;
        if psi > 0.0 && a.i > 0 {
            if let Some(peak) = secondary_peak(&sol, a.i)? {
                eprintln!(
                    "psi = {psi}: secondary peak at x = {:.3} ({:.2} sd), weight {:.3e}, sampled with probability {:.3e}",
                    peak.x, peak.x_in_sd, peak.weight, peak.sampling_probability
                );
            }
        }
        reports.push(McReport::new(psi, a.i, a.seed, &est));
    }
    match a.output.format {
        Format::Csv => emit(&a.output, |w| export::write_mc(w, &reports)),
        Format::Json => {
            let mut buf = serde_json::to_vec_pretty(&reports).map_err(ModelError::from)?;
            buf.push(b'\n');
            write_bytes(a.output.out.as_ref(), &buf)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Figures { which } => match which {
            Figure::Pdf(a) => cmd_pdf(&a),
            Figure::Smile(a) => cmd_smile(&a),
            Figure::SigmaLn(a) => cmd_sigma_ln(&a),
            Figure::Zeros(a) => cmd_zeros(&a),
            Figure::Phase(a) => cmd_phase(&a),
            Figure::Arrears(a) => cmd_arrears(&a),
            Figure::McCompare(a) => cmd_mc(&a),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
