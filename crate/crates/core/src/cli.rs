//! Command-line front end.
//!
//! ```text
//! altproj <run-etf|run-norms|convex-demo|analyze> --config <path> [--out <dir>] [--debug-iterates]
//! ```
//!
//! Configs are flat `key = value` files with `#` comments and comma-separated
//! lists. For `analyze`, `--config` names a trace CSV instead.
//!
//! Exit codes: 0 success, 2 bad config or input, 3 numerical failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::diagnostics::{
    analyze, check_three_point_frames, DiagnosticsReport, GuardStatus, GUARD_SLACK,
};
use crate::engine::{
    run_alternating_projections, IterateHistory, IterateTrace, RunConfig, TraceRecord,
};
use crate::error::Error;
use crate::frames::{self, FrameDesignConfig, FrameDesignResult};
use crate::numerics::DenseMatrix;
use crate::projections::{
    AffineSet, BoxSet, ColumnNormTargets, HalfSpace, OrientedBox, Projector, FEASIBILITY_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Stagnation threshold used by `convex-demo` unless the config sets one.
pub const DEFAULT_DEMO_STAGNATION: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    RunEtf,
    RunNorms,
    ConvexDemo,
    Analyze,
}

#[derive(Debug, Parser)]
#[command(
    name = "altproj",
    version,
    about = "Alternating projections with convergence diagnostics"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Config file (for `analyze`: the trace CSV).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write every iterate to CSV.
    #[arg(long)]
    pub debug_iterates: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(Error::InvalidInput(_)) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(_) => EXIT_NUMERICAL,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("altproj: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = thread_pool()?;
    pool.install(|| match cli.command {
        Command::RunEtf => cmd_run_etf(&cli.config, &cli.out, cli.debug_iterates),
        Command::RunNorms => cmd_run_norms(&cli.config, &cli.out, cli.debug_iterates),
        Command::ConvexDemo => cmd_convex_demo(&cli.config, &cli.out, cli.debug_iterates),
        Command::Analyze => cmd_analyze(&cli.config, &cli.out),
    })
}

/// Rayon pool capped by `ALTPROJ_THREADS` when set.
fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("ALTPROJ_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => {
                return config_err(format!(
                    "ALTPROJ_THREADS must be a positive integer, got {raw:?}"
                ))
            }
        }
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))
}

// ---------------------------------------------------------------------------
// Config files

/// Parsed `key = value` file.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config_err(format!("line {}: expected `key = value`", i + 1));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return config_err(format!("line {}: empty key", i + 1));
            }
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return config_err(format!("line {}: duplicate key `{key}`", i + 1));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys<'a>(
        &self,
        allowed: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), CliError> {
        let allowed: BTreeSet<&str> = allowed.into_iter().collect();
        match self.entries.keys().find(|k| !allowed.contains(k.as_str())) {
            Some(k) => config_err(format!("unknown key `{k}`")),
            None => Ok(()),
        }
    }

    fn raw(&self, key: &str) -> Result<&str, CliError> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| {
            CliError::Config(format!(
                "`{key}` must be a nonnegative integer, got {raw:?}"
            ))
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        parse_f64(key, self.raw(key)?)
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.has(key).then(|| self.usize(key)).transpose()
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.has(key).then(|| self.f64(key)).transpose()
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.raw(key)?
            .split(',')
            .map(|v| parse_f64(key, v.trim()))
            .collect()
    }

    /// Seeds as a comma list or an inclusive range `a..b`.
    pub fn seeds(&self, key: &str) -> Result<Vec<u64>, CliError> {
        let raw = self.raw(key)?;
        let bad = || {
            CliError::Config(format!(
                "`{key}` must be a list of integers or a range a..b, got {raw:?}"
            ))
        };
        if let Some((a, b)) = raw.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            return Ok((a..=b).collect());
        }
        raw.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, CliError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => config_err(format!("`{key}` must be a finite number, got {raw:?}")),
    }
}

const RUN_KEYS: [&str; 4] = ["max_iter", "tol", "record_every", "stagnation_tol"];

fn run_config(cfg: &ConfigFile, default_stagnation: Option<f64>) -> Result<RunConfig, CliError> {
    let mut run = RunConfig::new(cfg.usize("max_iter")?, cfg.f64("tol")?);
    if let Some(stride) = cfg.opt_usize("record_every")? {
        run = run.with_record_every(stride);
    }
    if let Some(tol) = cfg.opt_f64("stagnation_tol")?.or(default_stagnation) {
        run = run.with_stagnation(tol);
    }
    run.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// Trace CSV

fn fmt_f64(v: f64) -> String {
    ryu::Buffer::new().format(v).to_string()
}

/// Writes `iter,f,dx,dy,residual,<extras>`, with an empty `dx` at `k = 1`.
pub fn write_trace_csv<W: Write>(
    out: W,
    records: &[TraceRecord],
    extra_names: &[String],
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec![
        "iter".to_string(),
        "f".into(),
        "dx".into(),
        "dy".into(),
        "residual".into(),
    ];
    header.extend(extra_names.iter().cloned());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.k.to_string(),
            fmt_f64(r.f),
            r.dx.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.dy),
            fmt_f64(r.residual),
        ];
        row.extend(r.extras.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]; returns records and extra column names.
pub fn read_trace_csv(text: &str) -> Result<(Vec<TraceRecord>, Vec<String>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return config_err(format!("line 1: {e}")),
        None => return config_err("line 1: empty trace file"),
    };
    let fixed = ["iter", "f", "dx", "dy", "residual"];
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(a, b)| a != b) {
        return config_err(format!(
            "line 1: header must start with {}",
            fixed.join(",")
        ));
    }
    let extra_names: Vec<String> = header
        .iter()
        .skip(fixed.len())
        .map(str::to_string)
        .collect();

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| CliError::Config(format!("{e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| CliError::Config(format!("line {line}: {what}"));
        if row.len() != header.len() {
            return Err(bad(&format!(
                "expected {} fields, found {}",
                header.len(),
                row.len()
            )));
        }
        let num = |i: usize| -> Result<f64, CliError> {
            row[i].parse::<f64>().map_err(|_| {
                bad(&format!(
                    "column `{}` is not a number: {:?}",
                    &header[i], &row[i]
                ))
            })
        };
        let k: usize = row[0]
            .parse()
            .map_err(|_| bad("iteration is not an integer"))?;
        let dx = if row[2].is_empty() {
            None
        } else {
            Some(num(2)?)
        };
        let extras = (fixed.len()..row.len())
            .map(num)
            .collect::<Result<Vec<_>, _>>()?;
        let mut rec = TraceRecord::new(k, num(1)?, dx, num(3)?, extras);
        rec.residual = num(4)?;
        if records.last().is_some_and(|prev: &TraceRecord| prev.k >= k) {
            return Err(bad("iterations must be increasing"));
        }
        records.push(rec);
    }
    Ok((records, extra_names))
}

fn write_iterates_csv(path: &Path, history: &IterateHistory) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let size = history.y0.rows() * history.y0.cols();
    let mut header = vec!["iter".to_string(), "set".to_string()];
    header.extend((0..size).map(|i| format!("v{i}")));
    let csv_err = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(&header).map_err(csv_err)?;
    let mut emit = |k: usize, set: &str, m: &DenseMatrix| {
        let mut row = vec![k.to_string(), set.to_string()];
        row.extend(m.as_matrix().iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)
    };
    emit(0, "y", &history.y0).map_err(csv_err)?;
    for k in 1..=history.len() {
        emit(k, "x", history.x(k)).map_err(csv_err)?;
        emit(k, "y", history.y(k)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn save_trace(path: &Path, trace: &IterateTrace) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_trace_csv(file, &trace.records, &trace.extra_names).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

fn save_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values always serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))
}

fn trace_summary(trace: &IterateTrace) -> Value {
    json!({
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason.as_str(),
        "gap": trace.gap(),
        "records": trace.records.len(),
    })
}

// ---------------------------------------------------------------------------
// Commands

pub fn cmd_run_etf(config: &Path, out: &Path, debug_iterates: bool) -> Result<(), CliError> {
    let cfg = ConfigFile::load(config)?;
    cfg.check_keys(["n", "l", "seeds"].into_iter().chain(RUN_KEYS))?;
    let (n, l) = (cfg.usize("n")?, cfg.usize("l")?);
    let seeds = cfg.seeds("seeds")?;
    let mut run = run_config(&cfg, None)?;
    if debug_iterates {
        run = run.with_iterates();
    }
    let xi = frames::welch_bound(n, l).map_err(|e| CliError::Config(e.to_string()))?;
    if n == 0 || n > l {
        return config_err(format!("need 1 ≤ n ≤ l, got n={n}, l={l}"));
    }
    prepare_out(out)?;

    let results: Vec<frames::FrameDesignResult> = seeds
        .par_iter()
        .map(|&seed| frames::design_etf(&FrameDesignConfig::new(n, l, seed, run.clone())))
        .collect::<Result<_, _>>()?;

    let mut per_seed = Vec::new();
    let mut reports = Vec::new();
    for (seed, res) in seeds.iter().zip(&results) {
        let file = format!("trace_seed{seed}.csv");
        save_trace(&out.join(&file), &res.trace)?;
        if let Some(h) = &res.trace.history {
            write_iterates_csv(&out.join(format!("iterates_seed{seed}.csv")), h)?;
        }
        let mut entry = trace_summary(&res.trace);
        let extra = json!({
            "seed": seed,
            "trace_file": file,
            "coherence": res.coherence,
            "tightness_residual": res.tightness_residual,
            "certificate": res.certificate,
            "eigen_gap_guard": eigen_gap_guard(res),
        });
        merge(&mut entry, extra);
        per_seed.push(entry);
        reports.push(json!({ "seed": seed, "report": analyze(&res.trace.records) }));
    }
    let best = seeds
        .iter()
        .zip(&results)
        .min_by(|a, b| a.1.coherence.total_cmp(&b.1.coherence));
    let summary = json!({
        "config_echo": cfg.entries(),
        "results": per_seed,
        "diagnostics": {
            "welch_bound": xi,
            "best_seed": best.map(|b| b.0),
            "best_coherence": best.map(|b| b.1.coherence),
            "certified_seeds": seeds.iter().zip(&results).filter(|(_, r)| r.certificate.is_some()).map(|(s, _)| *s).collect::<Vec<_>>(),
            "traces": reports,
        },
    });
    save_json(&out.join("summary.json"), &summary)
}

/// Eigen-gap of `H_k` against the certified bound, at every record from the
/// certifying iteration on.
pub fn eigen_gap_guard(res: &FrameDesignResult) -> Option<GuardStatus> {
    let cert = res.certificate?;
    let col = res.trace.extra_index("eigen_gap")?;
    let violation = res
        .trace
        .records
        .iter()
        .filter(|r| r.k >= cert.k)
        .find(|r| r.extras[col] < cert.threshold - GUARD_SLACK);
    Some(match violation {
        Some(r) => GuardStatus::Violated {
            k: r.k,
            guard: "eigen gap of H_k".into(),
            value: r.extras[col],
            bound: cert.threshold,
        },
        None => GuardStatus::Holds,
    })
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

pub fn cmd_run_norms(config: &Path, out: &Path, debug_iterates: bool) -> Result<(), CliError> {
    let cfg = ConfigFile::load(config)?;
    cfg.check_keys(["n", "l", "c", "seed"].into_iter().chain(RUN_KEYS))?;
    let (n, l) = (cfg.usize("n")?, cfg.usize("l")?);
    let seed = cfg.usize("seed")? as u64;
    let targets = if cfg.str("c")? == "ones" {
        ColumnNormTargets::ones(l)
    } else {
        let c = cfg.list("c")?;
        if c.len() != l {
            return config_err(format!("`c` has {} entries but l = {l}", c.len()));
        }
        ColumnNormTargets::new(c).map_err(|e| CliError::Config(format!("`c`: {e}")))?
    };
    if n == 0 || n > l {
        return config_err(format!("need 1 ≤ n ≤ l, got n={n}, l={l}"));
    }
    let mut run = run_config(&cfg, None)?;
    if debug_iterates {
        run = run.with_iterates();
    }
    prepare_out(out)?;

    let res = frames::design_prescribed_norm_frame(
        &FrameDesignConfig::new(n, l, seed, run).with_targets(targets.clone()),
    )?;
    save_trace(&out.join("trace.csv"), &res.trace)?;
    if let Some(h) = &res.trace.history {
        write_iterates_csv(&out.join("iterates.csv"), h)?;
    }

    let norm_residual = targets
        .as_slice()
        .iter()
        .enumerate()
        .map(|(j, c)| (res.d.column_norm(j).powi(2) - c).abs())
        .fold(0.0, f64::max);
    let three_point = res
        .trace
        .history
        .as_ref()
        .map(|h| check_three_point_frames(h, &targets))
        .transpose()?;
    let bound = crate::diagnostics::column_norm_contraction_constant(&targets, n) + 1e-6;
    let mut entry = trace_summary(&res.trace);
    merge(
        &mut entry,
        json!({
            "seed": seed,
            "trace_file": "trace.csv",
            "tightness_residual": res.tightness_residual,
            "column_norm_residual": norm_residual,
            "coherence": res.coherence,
            "guards": frames::prop1_guards_from_trace(&res.trace, &targets),
            "three_point": three_point,
            "contraction_bound": crate::diagnostics::check_contraction_bound(&res.trace.records, bound).ok(),
        }),
    );
    let summary = json!({
        "config_echo": cfg.entries(),
        "results": [entry],
        "diagnostics": analyze(&res.trace.records),
    });
    save_json(&out.join("summary.json"), &summary)
}

const SET_KINDS: [&str; 5] = ["box", "oriented-box", "halfspace", "affine", "line"];

fn set_keys(kind: &str, side: &str) -> Vec<String> {
    let params: &[&str] = match kind {
        "box" => &["lower", "upper"],
        "oriented-box" => &["frame", "lower", "upper"],
        "halfspace" => &["normal", "offset"],
        "affine" => &["basis", "basis_cols", "point"],
        "line" => &["angle_deg", "offset"],
        _ => &[],
    };
    params.iter().map(|p| format!("{side}_{p}")).collect()
}

fn square_from_rows(
    key: &str,
    values: Vec<f64>,
    rows: usize,
    cols: usize,
) -> Result<DenseMatrix, CliError> {
    if values.len() != rows * cols {
        return config_err(format!(
            "`{key}` needs {rows}×{cols} = {} entries, got {}",
            rows * cols,
            values.len()
        ));
    }
    DenseMatrix::from_row_slice(rows, cols, &values)
        .map_err(|e| CliError::Config(format!("`{key}`: {e}")))
}

fn build_set(cfg: &ConfigFile, side: &str) -> Result<Box<dyn Projector>, CliError> {
    let kind = cfg.str(&format!("set_{side}"))?;
    let key = |p: &str| format!("{side}_{p}");
    let bad = |e: Error| CliError::Config(format!("set_{side}: {e}"));
    let vector = |p: &str| -> Result<DenseMatrix, CliError> {
        DenseMatrix::column_vector(&cfg.list(&key(p))?).map_err(bad)
    };
    Ok(match kind {
        "box" => Box::new(BoxSet::new(vector("lower")?, vector("upper")?).map_err(bad)?),
        "oriented-box" => {
            let lower = cfg.list(&key("lower"))?;
            let dim = lower.len();
            let frame = square_from_rows(&key("frame"), cfg.list(&key("frame"))?, dim, dim)?;
            Box::new(OrientedBox::new(frame, lower, cfg.list(&key("upper"))?).map_err(bad)?)
        }
        "halfspace" => {
            Box::new(HalfSpace::new(vector("normal")?, cfg.f64(&key("offset"))?).map_err(bad)?)
        }
        "affine" => {
            let point = vector("point")?;
            let cols = cfg.usize(&key("basis_cols"))?;
            let basis =
                square_from_rows(&key("basis"), cfg.list(&key("basis"))?, point.rows(), cols)?;
            Box::new(AffineSet::new(basis, point).map_err(bad)?)
        }
        "line" => Box::new(
            AffineSet::line_2d(
                cfg.f64(&key("angle_deg"))?.to_radians(),
                cfg.f64(&key("offset"))?,
            )
            .map_err(bad)?,
        ),
        other => {
            return config_err(format!(
                "`set_{side}` must be one of {}, got {other:?}",
                SET_KINDS.join(", ")
            ))
        }
    })
}

pub fn cmd_convex_demo(config: &Path, out: &Path, debug_iterates: bool) -> Result<(), CliError> {
    let cfg = ConfigFile::load(config)?;
    let mut allowed: Vec<String> = ["set_x", "set_y", "y0", "seed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    allowed.extend(RUN_KEYS.iter().map(|s| s.to_string()));
    for side in ["x", "y"] {
        if let Ok(kind) = cfg.str(&format!("set_{side}")) {
            allowed.extend(set_keys(kind, side));
        }
    }
    cfg.check_keys(allowed.iter().map(String::as_str))?;
    let px = build_set(&cfg, "x")?;
    let py = build_set(&cfg, "y")?;
    if px.shape() != py.shape() {
        return config_err(format!(
            "set_x is {:?} but set_y is {:?}",
            px.shape(),
            py.shape()
        ));
    }
    let y0 = if cfg.has("y0") {
        let y0 = DenseMatrix::column_vector(&cfg.list("y0")?)
            .map_err(|e| CliError::Config(format!("`y0`: {e}")))?;
        if y0.shape() != py.shape() || !py.contains(&y0, FEASIBILITY_TOL) {
            return config_err("`y0` is not a point of set_y");
        }
        y0
    } else {
        let seed = cfg.usize("seed")? as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = py.shape();
        let z = nalgebra::DMatrix::from_fn(rows, cols, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            5.0 * v
        });
        py.project(&DenseMatrix::new(z)?)?
    };
    let mut run = run_config(&cfg, Some(DEFAULT_DEMO_STAGNATION))?;
    if debug_iterates {
        run = run.with_iterates();
    }
    prepare_out(out)?;

    let trace = run_alternating_projections(px.as_ref(), py.as_ref(), &y0, &run)?;
    save_trace(&out.join("trace.csv"), &trace)?;
    if let Some(h) = &trace.history {
        write_iterates_csv(&out.join("iterates.csv"), h)?;
    }
    let report = analyze(&trace.records);
    let mut entry = trace_summary(&trace);
    merge(
        &mut entry,
        json!({ "trace_file": "trace.csv", "rate": rate_summary(&report) }),
    );
    let summary = json!({
        "config_echo": cfg.entries(),
        "results": [entry],
        "diagnostics": report,
    });
    save_json(&out.join("diagnostics.json"), &summary)
}

/// Headline numbers of a report; `f_ratio_hat` is the per-iteration factor on `f`.
fn rate_summary(report: &DiagnosticsReport) -> Value {
    let cert = report.certificate.value();
    let kl = report.kl.value();
    json!({
        "alpha_hat": cert.map(|c| c.alpha_hat),
        "beta_hat": cert.map(|c| c.beta_hat),
        "theta_hat": kl.map(|k| k.theta_hat),
        "rate_class": kl.map(|k| k.rate_class),
        "rho_hat": kl.and_then(|k| k.rho_hat),
        "f_ratio_hat": kl.and_then(|k| k.rho_hat).map(|r| r * r),
    })
}

pub fn cmd_analyze(trace_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(trace_path).map_err(io_err(trace_path))?;
    let (records, extra_names) = read_trace_csv(&text)?;
    let report = analyze(&records);
    prepare_out(out)?;
    let summary = json!({
        "config_echo": { "trace": trace_path.display().to_string(), "extra_columns": extra_names },
        "results": [{ "records": records.len(), "rate": rate_summary(&report) }],
        "diagnostics": report,
    });
    save_json(&out.join("analysis.json"), &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg =
            ConfigFile::parse("# comment\nn = 3\nl=6 # trailing\nseeds = 1..4\nc = 1, 2.5,3\n\n")
                .unwrap();
        assert_eq!(cfg.usize("n").unwrap(), 3);
        assert_eq!(cfg.seeds("seeds").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(cfg.list("c").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(cfg.check_keys(["n", "l", "seeds", "c"]).is_ok());
        let err = cfg.check_keys(["n", "l", "c"]).unwrap_err().to_string();
        assert!(err.contains("seeds"));
        let err = cfg.usize("max_iter").unwrap_err().to_string();
        assert!(err.contains("max_iter"));
    }

    #[test]
    fn config_rejects_malformed_lines() {
        assert!(ConfigFile::parse("n 3").is_err());
        assert!(ConfigFile::parse("n = 3\nn = 4").is_err());
        let cfg = ConfigFile::parse("tol = nan\nseeds = 4..1").unwrap();
        assert!(cfg.f64("tol").is_err());
        assert!(cfg.seeds("seeds").is_err());
    }

    #[test]
    fn trace_csv_round_trip() {
        let recs = vec![
            TraceRecord::new(1, 4.0, None, 0.5, vec![0.1]),
            TraceRecord::new(2, 1.0 / 3.0, Some(1e-300), 0.25, vec![f64::MAX]),
        ];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &recs, &["m".to_string()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,f,dx,dy,residual,m\n1,4.0,,0.5,1.0,0.1\n"));
        let (back, names) = read_trace_csv(&text).unwrap();
        assert_eq!(back, recs);
        assert_eq!(names, vec!["m"]);
    }

    #[test]
    fn trace_csv_errors_name_the_line() {
        let err = read_trace_csv("iter,f,dx,dy,residual\n1,1.0,,0.5,1.0\n2,x,1,1,2\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(read_trace_csv("k,f\n").is_err());
        assert!(read_trace_csv("").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_CONFIG);
        assert_eq!(
            CliError::Core(Error::InvalidInput("x".into())).exit_code(),
            EXIT_CONFIG
        );
        let failure = Error::NumericalFailure {
            iteration: 3,
            detail: "nan".into(),
        };
        assert_eq!(CliError::Core(failure).exit_code(), EXIT_NUMERICAL);
    }
}
