//! Command-line surface and file formats.
//!
//! Each subcommand renders its whole output to a string before anything is
//! written, so a failing command never leaves partial files behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{bulk_edges, eigen_map, spike_detection_threshold, AspectRatio, SpikeConfig};
use crate::error::{Error, Result};
use crate::loss::{default_gamma_grid, loss_report, regret_sweep};
use crate::montecarlo::{
    least_favorable_forecast, random_search_ratio, simulate_loss, SampleCovariance, SpectralEstimate,
    SpikedPopulation,
};
use crate::shrinkers::{apply, dead_zone_minimax, dead_zone_single, Shrinker, ShrinkerSpec};

/// Largest dimension for which a dense covariance estimate is written without `--force`.
pub const DENSE_OUTPUT_LIMIT: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "condshrink", version, about = "Eigenvalue shrinkage under condition-number loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for sweeps and simulations (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shrink the spectrum of a data matrix, an eigenvalue list, or a synthetic sample.
    Shrink(ShrinkArgs),
    /// Bulk edges and dead-zone thresholds for one aspect ratio.
    Thresholds(ThresholdArgs),
    /// Asymptotic loss of shrinkers at one spike configuration.
    Loss(LossArgs),
    /// Worst-case regret sweep over aspect ratios.
    Sweep(SweepArgs),
    /// Monte Carlo loss of a shrinker on spiked Gaussian data.
    Simulate(SimulateArgs),
    /// Least-favorable mean vector for a shrunk estimate.
    Worstcase(WorstcaseArgs),
}

#[derive(Debug, Args)]
pub struct ShrinkArgs {
    /// Data matrix CSV (no header, one observation per row).
    #[arg(long, conflicts_with_all = ["eigenvalues", "spikes"])]
    pub matrix: Option<PathBuf>,
    /// Descending eigenvalues, one per line.
    #[arg(long, conflicts_with = "spikes")]
    pub eigenvalues: Option<PathBuf>,
    /// Spikes of a synthetic population (with --p and --n).
    #[arg(long, value_delimiter = ',')]
    pub spikes: Option<Vec<f64>>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Aspect ratio; required for eigenvalue lists, else defaults to p/n.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value = "single")]
    pub shrinker: String,
    /// Tuning eigenvalue for the multi-spike shrinker.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Remove column means and divide by n−1.
    #[arg(long)]
    pub center: bool,
    /// Also write the dense shrunk covariance estimate here.
    #[arg(long)]
    pub covariance: Option<PathBuf>,
    /// Allow dense output beyond the size limit.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub gamma: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub spikes: Vec<f64>,
    #[arg(long)]
    pub gamma: f64,
    /// Comma-separated shrinkers.
    #[arg(long, value_delimiter = ',', default_value = "single,multi,minimax,mmst,pnl,identity,raw")]
    pub shrinkers: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Aspect ratios (default 0.01, 0.03, …, 1.99, 2).
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "single,minimax,mmst,pnl")]
    pub shrinkers: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub spikes: Vec<f64>,
    /// Aspect ratio; with --n fixes p = round(γn).
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value = "single")]
    pub shrinker: String,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spike directions along coordinate axes instead of random.
    #[arg(long)]
    pub canonical: bool,
    /// Fail with exit code 2 if the mean loss misses the target.
    #[arg(long)]
    pub check: bool,
    /// Relative tolerance for --check.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct WorstcaseArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub spikes: Vec<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = "single")]
    pub shrinker: String,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random unit mean vectors to try against the constructed one.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// Use the population covariance itself as the estimate.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub canonical: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Rendered result of a command.
#[derive(Debug)]
pub struct Outcome {
    pub body: String,
    pub out: Option<PathBuf>,
    /// Extra files (path, contents) produced alongside the main output.
    pub extra: Vec<(PathBuf, String)>,
    /// A failed `--check`; reported after the output is written.
    pub check: Option<Error>,
}

impl Outcome {
    fn new(body: String, out: Option<PathBuf>) -> Self {
        Outcome { body, out, extra: Vec::new(), check: None }
    }
}

/// Runs a parsed command line and writes its output.
pub fn run(cli: Cli) -> Result<()> {
    let outcome = match cli.threads {
        Some(0) => return Err(Error::Usage("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::internal(e.to_string()))?
            .install(|| execute(&cli.command))?,
        None => execute(&cli.command)?,
    };
    for (path, contents) in &outcome.extra {
        write_atomic(path, contents)?;
    }
    match &outcome.out {
        Some(path) => write_atomic(path, &outcome.body)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(outcome.body.as_bytes())?;
            stdout.flush()?;
        }
    }
    match outcome.check {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Computes a command's output without touching the file system.
pub fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Shrink(a) => cmd_shrink(a),
        Command::Thresholds(a) => cmd_thresholds(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Worstcase(a) => cmd_worstcase(a),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest text for `x` after rounding to 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let r = round12(x);
        let a = r.abs();
        if a != 0.0 && !(1e-5..1e15).contains(&a) {
            format!("{r:e}")
        } else {
            format!("{r}")
        }
    }
}

fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            serde_json::Number::from_f64(round12(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = round_json(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn parse_spec(text: &str, lambda1: Option<f64>) -> Result<ShrinkerSpec> {
    let spec: ShrinkerSpec = text.parse()?;
    match (spec, lambda1) {
        (s, None) => Ok(s),
        (ShrinkerSpec::MultiSpikeOptimal { lambda1: None }, Some(l)) => {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Usage(format!("invalid --lambda1 {l}")));
            }
            Ok(ShrinkerSpec::MultiSpikeOptimal { lambda1: Some(l) })
        }
        (s, Some(_)) => Err(Error::Usage(format!("--lambda1 applies only to an untuned multi shrinker, not {s}"))),
    }
}

fn parse_specs(list: &[String]) -> Result<Vec<ShrinkerSpec>> {
    let specs: Vec<ShrinkerSpec> = list
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    if specs.is_empty() {
        return Err(Error::Usage("empty shrinker list".into()));
    }
    Ok(specs)
}

fn gamma_arg(g: f64) -> Result<AspectRatio> {
    AspectRatio::new(g).map_err(|e| Error::Usage(e.to_string()))
}

fn spike_config(gamma: AspectRatio, spikes: &[f64]) -> Result<SpikeConfig> {
    SpikeConfig::new(gamma, spikes.to_vec()).map_err(|e| Error::Usage(e.to_string()))
}

/// Reads a header-less numeric CSV matrix (rows are observations).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Usage(format!(
                    "{}: row {} has {} fields, expected {c}",
                    path.display(),
                    i + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Usage(format!("{}: non-numeric cell {field:?} at row {}, column {}", path.display(), i + 1, j + 1))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows < 2 || cols < 2 {
        return Err(Error::Usage(format!("{}: need at least a 2x2 matrix, got {rows}x{cols}", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Reads an eigenvalue list: one value per line, or the `shrunk` column of a
/// previous `shrink` CSV output.
pub fn read_eigenvalues(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).peekable();
    let column = match lines.peek() {
        Some(first) if first.contains(',') => {
            let header: Vec<&str> = first.split(',').map(str::trim).collect();
            let idx = header
                .iter()
                .position(|&h| h == "shrunk")
                .ok_or_else(|| Error::Usage(format!("{}: expected one eigenvalue per line", path.display())))?;
            lines.next();
            Some((idx, header.len()))
        }
        _ => None,
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let field = match column {
            Some((idx, width)) => {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != width {
                    return Err(Error::Usage(format!("{}: ragged row {}", path.display(), i + 2)));
                }
                fields[idx]
            }
            None => line,
        };
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Usage(format!("{}: non-numeric value {field:?}", path.display())))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("{}: no eigenvalues", path.display())));
    }
    Ok(out)
}

/// Input spectrum plus its shrunk values.
#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    pub gamma: f64,
    pub shrinker: ShrinkerSpec,
    pub eigenvalues: Vec<f64>,
    pub shrunk: Vec<f64>,
    pub dead_zone: Vec<bool>,
}

impl EigenReport {
    pub fn new(spec: ShrinkerSpec, eigenvalues: Vec<f64>, gamma: AspectRatio) -> Result<Self> {
        let shrunk = apply(spec, &eigenvalues, gamma)?;
        let edge = bulk_edges(gamma).1;
        let dead_zone = eigenvalues.iter().zip(&shrunk).map(|(&l, &e)| e == 1.0 && l > edge).collect();
        Ok(EigenReport { gamma: gamma.value(), shrinker: spec, eigenvalues, shrunk, dead_zone })
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = (0..self.eigenvalues.len())
            .map(|i| {
                vec![
                    (i + 1).to_string(),
                    fmt_num(self.eigenvalues[i]),
                    fmt_num(self.shrunk[i]),
                    self.dead_zone[i].to_string(),
                ]
            })
            .collect();
        csv_table(&["index", "eigenvalue", "shrunk", "dead_zone"], &rows)
    }
}

fn dense_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|&x| fmt_num(x)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn cmd_shrink(a: &ShrinkArgs) -> Result<Outcome> {
    let spec = parse_spec(&a.shrinker, a.lambda1)?;
    let sample = if let Some(path) = &a.matrix {
        Some(SampleCovariance::from_data(read_matrix(path)?, a.center)?)
    } else if let Some(spikes) = &a.spikes {
        let (p, n) = match (a.p, a.n) {
            (Some(p), Some(n)) => (p, n),
            _ => return Err(Error::Usage("synthetic input needs --p and --n".into())),
        };
        let cfg = spike_config(AspectRatio::from_dims(p, n).map_err(|e| Error::Usage(e.to_string()))?, spikes)?;
        let pop = SpikedPopulation::random(p, cfg, a.seed)?;
        Some(SampleCovariance::draw(&pop, n, a.seed)?)
    } else {
        None
    };
    let (report, covariance) = match sample {
        Some(s) => {
            let gamma = match a.gamma {
                Some(g) => gamma_arg(g)?,
                None => s.gamma()?,
            };
            if a.covariance.is_some() && s.p() > DENSE_OUTPUT_LIMIT && !a.force {
                return Err(Error::Usage(format!(
                    "dense covariance for p = {} exceeds {DENSE_OUTPUT_LIMIT}; pass --force",
                    s.p()
                )));
            }
            let values = s.eigenvalues();
            let report = EigenReport::new(spec, values.clone(), gamma)?;
            let cov = match &a.covariance {
                Some(path) => {
                    let k = SpectralEstimate::leading_count(&report.shrunk);
                    let vectors = if 4 * k > s.p() { s.full_eigen().1 } else { s.top_eigenvectors(&values, k)? };
                    let est = SpectralEstimate::from_shrunk(&report.shrunk, &vectors)?;
                    Some((path.clone(), dense_csv(&est.dense())))
                }
                None => None,
            };
            (report, cov)
        }
        None => {
            let path = a
                .eigenvalues
                .as_ref()
                .ok_or_else(|| Error::Usage("give one of --matrix, --eigenvalues or --spikes".into()))?;
            if a.covariance.is_some() {
                return Err(Error::Usage("--covariance needs eigenvectors: use --matrix or --spikes".into()));
            }
            if a.center {
                return Err(Error::Usage("--center applies only to --matrix input".into()));
            }
            let gamma = gamma_arg(a.gamma.ok_or_else(|| Error::Usage("eigenvalue lists need --gamma".into()))?)?;
            (EigenReport::new(spec, read_eigenvalues(path)?, gamma)?, None)
        }
    };
    let body = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => report.to_csv(),
        Format::Json => to_json(&report)?,
    };
    let mut outcome = Outcome::new(body, a.output.out.clone());
    outcome.extra.extend(covariance);
    Ok(outcome)
}

/// Bulk edges and dead-zone thresholds at one aspect ratio.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    pub gamma: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub ell_plus: f64,
    pub ell_1_plus: f64,
    pub lambda_1_plus: f64,
    pub ell_mm_plus: f64,
    pub lambda_mm_plus: f64,
}

impl Thresholds {
    pub fn new(gamma: AspectRatio) -> Result<Self> {
        let (lambda_minus, lambda_plus) = bulk_edges(gamma);
        let single = dead_zone_single(gamma);
        let mm = dead_zone_minimax(gamma);
        let t = Thresholds {
            gamma: gamma.value(),
            lambda_minus,
            lambda_plus,
            ell_plus: spike_detection_threshold(gamma),
            ell_1_plus: single.ell_threshold,
            lambda_1_plus: single.lambda_threshold,
            ell_mm_plus: mm.ell_threshold,
            lambda_mm_plus: mm.lambda_threshold,
        };
        // Both dead zones end beyond the bulk. The minimax one is the wider
        // only from γ = 1/3 on; below that the two cross.
        let wide_enough = t.gamma < 1.0 / 3.0 || t.lambda_1_plus <= t.lambda_mm_plus * (1.0 + 1e-12);
        if !(t.lambda_plus < t.lambda_1_plus && t.lambda_plus < t.lambda_mm_plus && wide_enough) {
            return Err(Error::internal(format!("threshold ordering violated: {t:?}")));
        }
        Ok(t)
    }
}

fn cmd_thresholds(a: &ThresholdArgs) -> Result<Outcome> {
    let t = Thresholds::new(gamma_arg(a.gamma)?)?;
    let body = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_table(
            &["gamma", "lambda_minus", "lambda_plus", "ell_plus", "ell_1_plus", "lambda_1_plus", "ell_mm_plus", "lambda_mm_plus"],
            &[[t.gamma, t.lambda_minus, t.lambda_plus, t.ell_plus, t.ell_1_plus, t.lambda_1_plus, t.ell_mm_plus, t.lambda_mm_plus]
                .iter()
                .map(|&x| fmt_num(x))
                .collect()],
        ),
        Format::Json => to_json(&t)?,
    };
    Ok(Outcome::new(body, a.output.out.clone()))
}

fn cmd_loss(a: &LossArgs) -> Result<Outcome> {
    let gamma = gamma_arg(a.gamma)?;
    let cfg = spike_config(gamma, &a.spikes)?;
    let specs = parse_specs(&a.shrinkers)?;
    let mut rows = Vec::new();
    for spec in specs {
        let r = loss_report(&cfg, spec)?;
        let etas = match spec {
            ShrinkerSpec::Raw => cfg.spikes().iter().map(|&l| eigen_map(l, gamma)).collect::<Result<Vec<_>>>()?,
            _ => {
                let s = Shrinker::for_top_spike(spec, cfg.top(), gamma)?;
                cfg.spikes().iter().map(|&l| s.eta_at_spike(l)).collect::<Result<Vec<_>>>()?
            }
        };
        rows.push((spec, etas, r));
    }
    let body = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let spikes = cfg.spikes().iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";");
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|(spec, etas, r)| {
                    vec![
                        spec.to_string(),
                        fmt_num(gamma.value()),
                        spikes.clone(),
                        etas.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";"),
                        fmt_num(r.kappa),
                        fmt_num(r.rsrg),
                        fmt_num(r.kappa_star),
                        fmt_num(r.regret_kappa_pct),
                        fmt_num(r.regret_rsrg_pct),
                    ]
                })
                .collect();
            csv_table(
                &["shrinker", "gamma", "spikes", "etas", "kappa", "rsrg", "kappa_star", "regret_kappa_pct", "regret_rsrg_pct"],
                &table,
            )
        }
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|(spec, etas, r)| {
                    json!({
                        "shrinker": spec,
                        "gamma": gamma.value(),
                        "spikes": cfg.spikes(),
                        "etas": etas,
                        "kappa": r.kappa,
                        "rsrg": r.rsrg,
                        "kappa_star": r.kappa_star,
                        "regret_kappa_pct": r.regret_kappa_pct,
                        "regret_rsrg_pct": r.regret_rsrg_pct,
                    })
                })
                .collect();
            to_json(&v)?
        }
    };
    Ok(Outcome::new(body, a.output.out.clone()))
}

fn cmd_sweep(a: &SweepArgs) -> Result<Outcome> {
    let specs = parse_specs(&a.shrinkers)?;
    let gammas = a.gammas.clone().unwrap_or_else(default_gamma_grid);
    if gammas.is_empty() {
        return Err(Error::Usage("empty gamma list".into()));
    }
    for &g in &gammas {
        gamma_arg(g)?;
    }
    let rows = regret_sweep(&specs, &gammas)?;
    let body = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_num(r.gamma),
                        r.shrinker.to_string(),
                        fmt_num(r.max_regret_kappa_pct),
                        fmt_num(r.max_regret_rsrg_pct),
                        fmt_num(r.argmax_ell),
                    ]
                })
                .collect();
            csv_table(&["gamma", "shrinker", "max_regret_kappa_pct", "max_regret_rsrg_pct", "argmax_ell"], &table)
        }
        Format::Json => to_json(&rows)?,
    };
    Ok(Outcome::new(body, a.output.out.clone()))
}

fn dims(gamma: Option<f64>, p: Option<usize>, n: Option<usize>) -> Result<(usize, usize)> {
    match (gamma, p, n) {
        (_, Some(p), Some(n)) => {
            if let Some(g) = gamma {
                let implied = p as f64 / n as f64;
                if (g - implied).abs() > 1e-12 * implied.max(1.0) {
                    return Err(Error::Usage(format!("--gamma {g} disagrees with p/n = {implied}")));
                }
            }
            Ok((p, n))
        }
        (Some(g), None, Some(n)) => Ok(((gamma_arg(g)?.value() * n as f64).round() as usize, n)),
        (Some(g), Some(p), None) => Ok((p, (p as f64 / gamma_arg(g)?.value()).round() as usize)),
        _ => Err(Error::Usage("give two of --gamma, --p and --n".into())),
    }
}

fn population(spikes: &[f64], p: usize, n: usize, seed: u64, canonical: bool) -> Result<SpikedPopulation> {
    if p < 2 || n < 2 {
        return Err(Error::Usage(format!("need p, n >= 2, got p={p}, n={n}")));
    }
    let cfg = spike_config(AspectRatio::from_dims(p, n)?, spikes)?;
    if canonical {
        SpikedPopulation::canonical(p, cfg)
    } else {
        SpikedPopulation::random(p, cfg, seed)
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    if a.reps == 0 {
        return Err(Error::Usage("--reps must be at least 1".into()));
    }
    if !(a.tolerance >= 0.0) {
        return Err(Error::Usage("--tolerance must be >= 0".into()));
    }
    let spec = parse_spec(&a.shrinker, a.lambda1)?;
    let (p, n) = dims(a.gamma, a.p, Some(a.n))?;
    let pop = population(&a.spikes, p, n, a.seed, a.canonical)?;
    let res = simulate_loss(&pop, n, spec, a.reps, a.seed)?;
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&res)?,
        Format::Csv => {
            let table: Vec<Vec<String>> = res
                .per_rep
                .iter()
                .map(|r| vec![r.replicate.to_string(), fmt_num(r.kappa), fmt_num(r.rsrg), fmt_num(r.top_eigenvalue)])
                .collect();
            csv_table(&["replicate", "kappa", "rsrg", "top_eigenvalue"], &table)
        }
    };
    let mut outcome = Outcome::new(body, a.output.out.clone());
    if a.check {
        let dev = (res.mean_kappa - res.target).abs() / res.target;
        if !(dev <= a.tolerance) {
            outcome.check = Some(Error::Check(format!(
                "mean kappa {} deviates from target {} by {:.4}% (tolerance {}%)",
                fmt_num(res.mean_kappa),
                fmt_num(res.target),
                100.0 * dev,
                100.0 * a.tolerance
            )));
        }
    }
    Ok(outcome)
}

/// Output of `worstcase`.
#[derive(Debug, Clone, Serialize)]
pub struct WorstcaseReport {
    pub p: usize,
    pub n: usize,
    pub gamma: f64,
    pub spikes: Vec<f64>,
    pub shrinker: Option<ShrinkerSpec>,
    pub seed: u64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub residual: f64,
    pub achieved_ratio: f64,
    pub bound: f64,
    pub kappa: f64,
    pub samples: usize,
    pub random_search_max: Option<f64>,
    pub mu: Vec<f64>,
}

fn cmd_worstcase(a: &WorstcaseArgs) -> Result<Outcome> {
    let spec = parse_spec(&a.shrinker, a.lambda1)?;
    let (p, n) = dims(a.gamma, Some(a.p), a.n).or_else(|_| dims(a.gamma.or(Some(1.0)), Some(a.p), None))?;
    let pop = population(&a.spikes, p, n, a.seed, a.canonical)?;
    let est = if a.exact {
        SpectralEstimate::exact(&pop)
    } else {
        let s = SampleCovariance::draw(&pop, n, a.seed)?;
        let values = s.eigenvalues();
        let etas = apply(spec, &values, s.gamma()?)?;
        let k = SpectralEstimate::leading_count(&etas);
        let vectors = if 4 * k > p { s.full_eigen().1 } else { s.top_eigenvectors(&values, k)? };
        SpectralEstimate::from_shrunk(&etas, &vectors)?
    };
    let f = least_favorable_forecast(&pop, &est)?;
    let random_search_max = if a.samples > 0 {
        Some(random_search_ratio(&pop, &est, a.samples, a.seed.wrapping_add(1))?)
    } else {
        None
    };
    let report = WorstcaseReport {
        p,
        n,
        gamma: p as f64 / n as f64,
        spikes: a.spikes.clone(),
        shrinker: (!a.exact).then_some(spec),
        seed: a.seed,
        alpha1: f.alpha1,
        alpha2: f.alpha2,
        residual: f.residual,
        achieved_ratio: f.achieved_ratio,
        bound: f.bound,
        kappa: f.kappa,
        samples: a.samples,
        random_search_max,
        mu: f.mu.clone(),
    };
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => csv_table(
            &["p", "n", "gamma", "alpha1", "alpha2", "residual", "achieved_ratio", "bound", "kappa", "random_search_max"],
            &[vec![
                p.to_string(),
                n.to_string(),
                fmt_num(report.gamma),
                fmt_num(f.alpha1),
                fmt_num(f.alpha2),
                fmt_num(f.residual),
                fmt_num(f.achieved_ratio),
                fmt_num(f.bound),
                fmt_num(f.kappa),
                random_search_max.map(fmt_num).unwrap_or_default(),
            ]],
        ),
    };
    let mut outcome = Outcome::new(body, a.output.out.clone());
    let gap = (f.achieved_ratio - f.bound).abs();
    if !(gap <= 1e-8) {
        outcome.check = Some(Error::Check(format!("achieved ratio misses the bound by {gap:e}")));
    } else if let Some(m) = random_search_max {
        if m > f.achieved_ratio + 1e-6 {
            outcome.check = Some(Error::Check(format!("random search beat the constructed forecast: {m}")));
        }
    }
    Ok(outcome)
}
