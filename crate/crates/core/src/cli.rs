//! Command-line runner: evolutions, parameter sweeps, theory tables and spin
//! snapshots. Every file written embeds the version and the resolved run
//! configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{self, AnalysisWindow, LinearFit, MesonSummary};
use crate::basis::TwoParticleBasis;
use crate::dynamics::{evolve_spectral, initial_theta_state, occupation_grid, time_grid, ObservableSeries, SpectralPropagator};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{build_momentum_block, build_sector_hamiltonian, default_r_max, SparseSymmetricOperator};
use crate::linalg::{airy_zero, eig_symmetric_split, eigenvalues_tridiagonal, EigenConfig, Spectrum};
use crate::spinmap::{self, SnapshotHeader};
use crate::theory;
use crate::VERSION;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "z2meson", version, about = "Meson dynamics in a 1D Z2 lattice gauge theory")]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Number of lattice sites.
    #[arg(long = "L", global = true)]
    sites: Option<usize>,
    /// Confinement field in units of J.
    #[arg(long = "h", global = true, allow_negative_numbers = true)]
    h: Option<f64>,
    /// Hopping amplitude.
    #[arg(long = "J", global = true, allow_negative_numbers = true)]
    j: Option<f64>,
    /// Initial-state angle; accepts `pi`, `3pi/8` or plain radians.
    #[arg(long, global = true, value_parser = parse_angle)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    tmax: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Analysis window as `start,end` in units of 1/J.
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Relative-coordinate cutoff for momentum blocks.
    #[arg(long = "r-max", global = true)]
    r_max: Option<usize>,
    /// Comma-separated times at which occupation grids are stored.
    #[arg(long, global = true)]
    snapshots: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact evolution of one tilted-link initial state.
    Evolve,
    /// Summaries over a list of field values.
    SweepField {
        /// Comma-separated field values.
        #[arg(long)]
        hs: Option<String>,
    },
    /// Summaries over a list of initial-state angles at fixed field.
    SweepTheta {
        /// Comma-separated angles.
        #[arg(long)]
        thetas: Option<String>,
    },
    /// Tabulate a closed-form quantity.
    Theory {
        /// hopping-element, peak-length, airy-zeros, airy-energy,
        /// quantized-energy, theta-energy, breathing, ravg, bessel-profile
        quantity: String,
        /// Levels or lengths, as `a..b` or a comma list.
        #[arg(long)]
        n: Option<String>,
        #[arg(long, value_parser = parse_angle)]
        k: Option<f64>,
        #[arg(long)]
        thetas: Option<String>,
    },
    /// Sample domain-wall snapshots from the evolved state.
    SpinSample {
        #[arg(long)]
        count: Option<usize>,
        /// Time of measurement.
        #[arg(long)]
        at: Option<f64>,
        /// Also run the Trotterised spin model with this step and report
        /// its fidelity against exact evolution (L <= 14).
        #[arg(long = "trotter-dt")]
        trotter_dt: Option<f64>,
    },
    /// Momentum-block eigenvalues, optionally dumping the sector operator.
    Spectrum {
        #[arg(long, value_parser = parse_angle)]
        k: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
        /// Write the sector Hamiltonian for `--L` as matrix-market triplets.
        #[arg(long = "dump-operator")]
        dump_operator: bool,
    },
}

/// Parses `pi`, `-pi/2`, `3pi/8`, `0.75pi` or a plain number.
pub fn parse_angle(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let Some(pos) = t.find("pi") else {
        return t.parse::<f64>().map_err(|e| format!("bad angle {s:?}: {e}"));
    };
    let coef = match t[..pos].trim().trim_end_matches('*') {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|e| format!("bad angle {s:?}: {e}"))?,
    };
    let rest = t[pos + 2..].trim();
    let div = if rest.is_empty() {
        1.0
    } else {
        rest.strip_prefix('/')
            .ok_or_else(|| format!("bad angle {s:?}"))?
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad angle {s:?}: {e}"))?
    };
    Ok(coef * std::f64::consts::PI / div)
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| item(x).map_err(Error::InvalidArgument))
        .collect()
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"))
}

fn parse_range(s: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad range {s:?}")))?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| Error::InvalidArgument(format!("bad range {s:?}")))?;
        if b < a {
            return invalid(format!("empty range {s:?}"));
        }
        return Ok((a..=b).collect());
    }
    parse_list(s, |x| x.parse::<usize>().map_err(|e| format!("bad integer {x:?}: {e}")))
}

/// Everything a run depends on. Serialised into every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub sites: usize,
    pub j: f64,
    pub h: f64,
    pub theta: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Explicit analysis window; the default is `[10, min(60, guard)]`.
    pub window: Option<(f64, f64)>,
    pub seed: u64,
    pub r_max: usize,
    pub snapshot_times: Vec<f64>,
    pub format: Format,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    /// `L = 100`, `J = 1`, `h = 1.1`, `theta = 0`, `Jt` in `[0, 60]` every
    /// `0.25`.
    fn default() -> Self {
        Self::resolve(&Overrides::default()).expect("defaults are valid")
    }
}

impl RunConfig {
    fn resolve(o: &Overrides) -> Result<Self> {
        let j = o.j.unwrap_or(1.0);
        let h = o.h.unwrap_or(1.1);
        let window = match &o.window {
            None => None,
            Some(w) => {
                let v = parse_list(w, parse_f64)?;
                if v.len() != 2 {
                    return invalid(format!("window needs two values, got {w:?}"));
                }
                AnalysisWindow::new(v[0], v[1])?;
                Some((v[0], v[1]))
            }
        };
        let snapshot_times = match &o.snapshots {
            None => Vec::new(),
            Some(s) => parse_list(s, parse_f64)?,
        };
        let cfg = Self {
            sites: o.sites.unwrap_or(100),
            j,
            h,
            theta: o.theta.unwrap_or(0.0),
            t_max: o.tmax.unwrap_or(60.0),
            dt: o.dt.unwrap_or(0.25),
            window,
            seed: o.seed.unwrap_or(0),
            r_max: o.r_max.unwrap_or_else(|| default_r_max(j, h.abs().max(1e-12))),
            snapshot_times,
            format: o.format.unwrap_or(Format::Csv),
            out_dir: o.out_dir.clone().unwrap_or_else(|| PathBuf::from("z2meson-out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("J", self.j), ("h", self.h), ("theta", self.theta), ("tmax", self.t_max), ("dt", self.dt)] {
            if !v.is_finite() {
                return invalid(format!("{name} must be finite"));
            }
        }
        if !(self.dt > 0.0) {
            return invalid("dt must be positive");
        }
        if self.t_max < 0.0 {
            return invalid("tmax must be nonnegative");
        }
        if self.snapshot_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return invalid("snapshot times must be finite and nonnegative");
        }
        Ok(())
    }

    fn validate_chain(&self) -> Result<()> {
        if self.sites < 4 || self.sites % 2 == 1 {
            return invalid(format!("the tilted-link state needs even L >= 4, got {}", self.sites));
        }
        Ok(())
    }

    pub fn with_point(&self, h: f64, theta: f64) -> Self {
        Self { h, theta, ..self.clone() }
    }

    fn header(&self) -> String {
        format!("# {VERSION}\n# config: {}\n", serde_json::to_string(self).expect("config serialises"))
    }
}

fn read_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)?;
    let mut o = Overrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return invalid(format!("{}:{}: expected key = value", path.display(), lineno + 1));
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |e: String| Error::InvalidArgument(format!("{}:{}: {e}", path.display(), lineno + 1));
        match key {
            "L" => o.sites = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "h" => o.h = Some(parse_f64(value).map_err(bad)?),
            "J" => o.j = Some(parse_f64(value).map_err(bad)?),
            "theta" => o.theta = Some(parse_angle(value).map_err(bad)?),
            "tmax" => o.tmax = Some(parse_f64(value).map_err(bad)?),
            "dt" => o.dt = Some(parse_f64(value).map_err(bad)?),
            "window" => o.window = Some(value.to_string()),
            "seed" => o.seed = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "out-dir" | "out_dir" => o.out_dir = Some(PathBuf::from(value)),
            "format" => o.format = Some(Format::from_str(value, true).map_err(bad)?),
            "r-max" | "r_max" => o.r_max = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "snapshots" => o.snapshots = Some(value.to_string()),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    Ok(o)
}

impl Overrides {
    /// Flags set here win over `base`.
    fn over(self, base: Overrides) -> Overrides {
        Overrides {
            sites: self.sites.or(base.sites),
            h: self.h.or(base.h),
            j: self.j.or(base.j),
            theta: self.theta.or(base.theta),
            tmax: self.tmax.or(base.tmax),
            dt: self.dt.or(base.dt),
            window: self.window.or(base.window),
            seed: self.seed.or(base.seed),
            out_dir: self.out_dir.or(base.out_dir),
            format: self.format.or(base.format),
            r_max: self.r_max.or(base.r_max),
            snapshots: self.snapshots.or(base.snapshots),
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::NoOscillation(_) => EXIT_USAGE,
        Error::Capacity(_) => EXIT_CAPACITY,
        Error::Io(_) => EXIT_IO,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let overrides = match &cli.config {
        Some(path) => cli.overrides.over(read_config_file(path)?),
        None => cli.overrides,
    };
    let explicit_out = overrides.out_dir.is_some();
    let cfg = RunConfig::resolve(&overrides)?;
    match cli.command {
        Command::Evolve => cmd_evolve(&cfg).map(|_| ()),
        Command::SweepField { hs } => {
            let hs = match hs {
                Some(s) => parse_list(&s, parse_f64)?,
                None => vec![1.1, 1.5, 2.0, 3.0, 4.0],
            };
            cmd_sweep_field(&cfg, &hs).map(|_| ())
        }
        Command::SweepTheta { thetas } => {
            let thetas = match thetas {
                Some(s) => parse_list(&s, parse_angle)?,
                None => vec![0.0, std::f64::consts::FRAC_PI_8, 3.0 * std::f64::consts::FRAC_PI_8, 0.75 * std::f64::consts::PI, std::f64::consts::PI],
            };
            cmd_sweep_theta(&cfg, &thetas).map(|_| ())
        }
        Command::Theory { quantity, n, k, thetas } => {
            let table = cmd_theory(&cfg, &quantity, n.as_deref(), k, thetas.as_deref())?;
            emit_table(&cfg, &table, explicit_out.then(|| format!("theory_{quantity}")))
        }
        Command::SpinSample { count, at, trotter_dt } => {
            cmd_spin_sample(&cfg, count.unwrap_or(10_000), at.unwrap_or(30.0), trotter_dt).map(|_| ())
        }
        Command::Spectrum { k, levels, dump_operator } => {
            let table = cmd_spectrum(&cfg, k.unwrap_or(0.0), levels.unwrap_or(10))?;
            if dump_operator {
                let basis = TwoParticleBasis::new(cfg.sites)?;
                let op = build_sector_hamiltonian(&basis, cfg.j, cfg.h)?;
                let mut raw = Vec::new();
                op.write_triplets(&mut raw)?;
                let text = String::from_utf8(raw).expect("triplets are ascii");
                let (banner, body) = text.split_once('\n').expect("banner line present");
                let mut out = format!("{banner}\n");
                for line in cfg.header().lines() {
                    out.push_str(&format!("%{}\n", line.trim_start_matches('#')));
                }
                out.push_str(body);
                write_atomic(&cfg.out_dir.join(format!("hamiltonian_L{}.mtx", cfg.sites)), out.as_bytes())?;
            }
            emit_table(&cfg, &table, explicit_out.then(|| "spectrum".to_string()))
        }
    }
}

/// A rectangular result with named columns.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn to_csv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self, cfg: &RunConfig, extra: serde_json::Value) -> String {
        let doc = serde_json::json!({
            "version": VERSION,
            "config": cfg,
            "columns": self.columns,
            "rows": self.rows,
            "extra": extra,
        });
        serde_json::to_string_pretty(&doc).expect("table serialises") + "\n"
    }
}

fn emit_table(cfg: &RunConfig, table: &Table, file_stem: Option<String>) -> Result<()> {
    let text = match cfg.format {
        Format::Csv => table.to_csv(&cfg.header()),
        Format::Json => table.to_json(cfg, serde_json::Value::Null),
    };
    print!("{text}");
    if let Some(stem) = file_stem {
        let ext = if cfg.format == Format::Csv { "csv" } else { "json" };
        write_atomic(&cfg.out_dir.join(format!("{stem}.{ext}")), text.as_bytes())?;
    }
    Ok(())
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// 16-bit binary portable graymap; one row per time, one column per site,
/// densities clipped to `[0, 1]`.
pub fn density_pgm(density: &[Vec<f64>], comment: &str) -> Vec<u8> {
    let width = density.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(64 + 2 * width * density.len());
    out.extend_from_slice(b"P5\n");
    for line in comment.lines() {
        out.extend_from_slice(format!("# {}\n", line.trim_start_matches('#').trim()).as_bytes());
    }
    out.extend_from_slice(format!("{width} {}\n65535\n", density.len()).as_bytes());
    for row in density {
        for &v in row {
            let g = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.extend_from_slice(&g.to_be_bytes());
        }
    }
    out
}

/// Spectrum plus operator for one field value.
pub struct Solved {
    pub basis: Arc<TwoParticleBasis>,
    pub hamiltonian: SparseSymmetricOperator,
    pub spectrum: Spectrum,
}

pub fn solve(sites: usize, j: f64, h: f64) -> Result<Solved> {
    let basis = Arc::new(TwoParticleBasis::new(sites)?);
    let hamiltonian = build_sector_hamiltonian(&basis, j, h)?;
    let spectrum = eig_symmetric_split(&hamiltonian, &basis.mirror_permutation(), &EigenConfig::default())?;
    Ok(Solved { basis, hamiltonian, spectrum })
}

/// Result of one `(h, theta)` point.
#[derive(Debug, Clone, Serialize)]
pub struct PointResult {
    pub h: f64,
    pub theta: f64,
    pub initial_energy: f64,
    pub reflection_time: Option<f64>,
    /// Absent when the analysis window holds too few clean samples.
    pub summary: Option<MesonSummary>,
    pub analysis_note: Option<String>,
    #[serde(skip)]
    pub series: ObservableSeries,
}

pub fn run_point(cfg: &RunConfig, solved: &Solved, theta: f64) -> Result<PointResult> {
    let psi0 = initial_theta_state(&solved.basis, theta)?;
    let times = time_grid(cfg.t_max, cfg.dt)?;
    let series = evolve_spectral(&solved.spectrum, &solved.hamiltonian, &psi0, &times, &cfg.snapshot_times)?;
    let window = match cfg.window {
        Some((a, b)) => AnalysisWindow::new(a, b).and_then(|w| w.guarded(&series)),
        None => AnalysisWindow::default_for(&series),
    };
    let (summary, analysis_note) = match window.and_then(|w| analysis::summarize(&series, &w)) {
        Ok(s) => (Some(s), None),
        Err(Error::InvalidArgument(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(PointResult {
        h: cfg.h,
        theta,
        initial_energy: series.energy[0],
        reflection_time: series.reflection_time(),
        summary,
        analysis_note,
        series,
    })
}

impl PointResult {
    pub fn r_prime_avg(&self) -> f64 {
        self.summary.as_ref().map_or(f64::NAN, |s| s.r_prime_avg)
    }

    pub fn omega(&self) -> Option<f64> {
        self.summary.as_ref().and_then(|s| s.omega)
    }

    pub fn v(&self) -> f64 {
        self.summary.as_ref().map_or(f64::NAN, |s| s.v)
    }

    pub fn speed_r_squared(&self) -> f64 {
        self.summary.as_ref().map_or(f64::NAN, |s| s.diagnostics.speed_r_squared)
    }
}

/// Applies `f` to each item on up to `available_parallelism` threads;
/// results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len()).max(1);
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results: Vec<Vec<(usize, R)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break mine;
                        }
                        mine.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (i, r) in results.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every item processed")).collect()
}

fn timeseries_table(series: &ObservableSeries) -> Table {
    let mut t = Table::new(&[
        "Jt", "r_avg", "c_s", "energy", "norm_error", "left_weight", "right_weight", "reflection",
    ]);
    for i in 0..series.len() {
        t.rows.push(vec![
            series.times[i],
            series.r_avg[i],
            series.c_s[i],
            series.energy[i],
            series.norm_error[i],
            series.left_weight[i],
            series.right_weight[i],
            f64::from(u8::from(series.reflection_flag[i])),
        ]);
    }
    t
}

fn density_table(series: &ObservableSeries) -> Table {
    let l = series.density.first().map_or(0, Vec::len);
    let mut cols = vec!["Jt".to_string()];
    cols.extend((1..=l).map(|i| format!("n{i}")));
    let rows = series
        .times
        .iter()
        .zip(&series.density)
        .map(|(&t, d)| std::iter::once(t).chain(d.iter().copied()).collect())
        .collect();
    Table { columns: cols, rows }
}

fn write_table(cfg: &RunConfig, stem: &str, table: &Table, extra: serde_json::Value) -> Result<()> {
    let (ext, text) = match cfg.format {
        Format::Csv => ("csv", table.to_csv(&cfg.header())),
        Format::Json => ("json", table.to_json(cfg, extra)),
    };
    write_atomic(&cfg.out_dir.join(format!("{stem}.{ext}")), text.as_bytes())
}

fn write_summary(cfg: &RunConfig, stem: &str, value: serde_json::Value) -> Result<()> {
    let doc = serde_json::json!({ "version": VERSION, "config": cfg, "result": value });
    let text = serde_json::to_string_pretty(&doc).expect("summary serialises") + "\n";
    write_atomic(&cfg.out_dir.join(format!("{stem}.json")), text.as_bytes())
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<PointResult> {
    cfg.validate_chain()?;
    let solved = solve(cfg.sites, cfg.j, cfg.h)?;
    let point = run_point(cfg, &solved, cfg.theta)?;
    let series = &point.series;
    write_table(cfg, "timeseries", &timeseries_table(series), serde_json::Value::Null)?;
    write_table(cfg, "density", &density_table(series), serde_json::Value::Null)?;
    write_atomic(&cfg.out_dir.join("density.pgm"), &density_pgm(&series.density, &cfg.header()))?;
    for (t, grid) in &series.snapshots {
        let mut table = Table::new(&["r", "c", "probability"]);
        table.rows = grid.cells().map(|(r, c, p)| vec![r as f64, c, p]).collect();
        write_table(cfg, &format!("grid_t{t}"), &table, serde_json::Value::Null)?;
        let profile = analysis::size_filtering_profile(grid, &(1..cfg.sites).collect::<Vec<_>>());
        let mut prof = Table::new(&["r", "mean_displacement"]);
        prof.rows = profile.into_iter().map(|(r, d)| vec![r as f64, d]).collect();
        write_table(cfg, &format!("filtering_t{t}"), &prof, serde_json::Value::Null)?;
    }
    write_summary(cfg, "summary", serde_json::to_value(&point).expect("point serialises"))?;
    match (&point.summary, &point.analysis_note) {
        (Some(s), _) => println!(
            "r'_avg = {:.4}  omega = {}  v = {:.4}  (window [{}, {}])",
            s.r_prime_avg,
            s.omega.map_or("none".into(), |w| format!("{w:.4}")),
            s.v,
            s.diagnostics.window.t_start,
            s.diagnostics.window.t_end
        ),
        (None, note) => println!("no summary: {}", note.as_deref().unwrap_or("analysis unavailable")),
    }
    Ok(point)
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldSweep {
    pub points: Vec<PointResult>,
    /// `omega = slope h + intercept`.
    pub omega_fit: Option<LinearFit>,
    /// `r'_avg - 1 = a / h`.
    pub inverse_h_fit: Option<LinearFit>,
    /// `r'_avg - 1 = a / h^2`, reported alongside for the strong-field
    /// crossover.
    pub inverse_h2_fit: Option<LinearFit>,
    pub r_prime_strictly_decreasing: bool,
}

pub fn cmd_sweep_field(cfg: &RunConfig, hs: &[f64]) -> Result<FieldSweep> {
    cfg.validate_chain()?;
    if hs.is_empty() {
        return invalid("need at least one field value");
    }
    let points: Vec<PointResult> = parallel_map(hs, |&h| {
        let c = cfg.with_point(h, cfg.theta);
        solve(c.sites, c.j, h).and_then(|s| run_point(&c, &s, c.theta))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let sweep = field_fits(points)?;

    let mut table = Table::new(&["h", "r_prime_avg", "omega", "v", "speed_r2", "reflection_time"]);
    for p in &sweep.points {
        table.rows.push(vec![
            p.h,
            p.r_prime_avg(),
            p.omega().unwrap_or(f64::NAN),
            p.v(),
            p.speed_r_squared(),
            p.reflection_time.unwrap_or(f64::NAN),
        ]);
    }
    let fits = serde_json::json!({
        "omega_vs_h": sweep.omega_fit,
        "r_minus_1_vs_inverse_h": sweep.inverse_h_fit,
        "r_minus_1_vs_inverse_h2": sweep.inverse_h2_fit,
        "r_prime_strictly_decreasing": sweep.r_prime_strictly_decreasing,
    });
    write_table(cfg, "sweep_field", &table, fits.clone())?;
    write_summary(cfg, "sweep_field_fits", fits)?;
    print!("{}", table.to_csv(""));
    Ok(sweep)
}

/// Fits over a finished field sweep; fits need at least three points.
pub fn field_fits(points: Vec<PointResult>) -> Result<FieldSweep> {
    let hs: Vec<f64> = points.iter().map(|p| p.h).collect();
    let rp: Vec<f64> = points.iter().map(PointResult::r_prime_avg).collect();
    let decreasing = rp.windows(2).all(|w| w[1] < w[0]);
    if points.len() < 3 {
        return Ok(FieldSweep {
            points,
            omega_fit: None,
            inverse_h_fit: None,
            inverse_h2_fit: None,
            r_prime_strictly_decreasing: decreasing,
        });
    }
    let with_omega: Vec<(f64, f64)> =
        points.iter().filter_map(|p| p.omega().map(|w| (p.h, w))).collect();
    let omega_fit = if with_omega.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = with_omega.into_iter().unzip();
        Some(analysis::linear_fit(&x, &y)?)
    } else {
        None
    };
    let usable: Vec<(f64, f64)> = hs.iter().zip(&rp).filter(|p| p.1.is_finite()).map(|(&h, &r)| (h, r)).collect();
    let excess: Vec<f64> = usable.iter().map(|p| p.1 - 1.0).collect();
    let inv: Vec<f64> = usable.iter().map(|p| 1.0 / p.0).collect();
    let inv2: Vec<f64> = usable.iter().map(|p| 1.0 / (p.0 * p.0)).collect();
    let enough = usable.len() >= 3;
    Ok(FieldSweep {
        points,
        omega_fit,
        inverse_h_fit: if enough { Some(analysis::fit_through_origin(&inv, &excess)?) } else { None },
        inverse_h2_fit: if enough { Some(analysis::fit_through_origin(&inv2, &excess)?) } else { None },
        r_prime_strictly_decreasing: decreasing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaSweep {
    pub points: Vec<PointResult>,
    pub energies: Vec<f64>,
    /// `r'_avg` ordered the same way as `E(theta)`.
    pub size_tracks_energy: bool,
    /// `v` nonincreasing once points are sorted by `r'_avg`.
    pub speed_nonincreasing_in_size: bool,
}

pub fn cmd_sweep_theta(cfg: &RunConfig, thetas: &[f64]) -> Result<ThetaSweep> {
    cfg.validate_chain()?;
    if thetas.is_empty() {
        return invalid("need at least one angle");
    }
    let solved = solve(cfg.sites, cfg.j, cfg.h)?;
    let points: Vec<PointResult> = parallel_map(thetas, |&th| run_point(cfg, &solved, th))
        .into_iter()
        .collect::<Result<_>>()?;
    let sweep = theta_report(points, cfg.h, cfg.j);

    let mut table = Table::new(&["theta", "energy", "r_prime_avg", "v", "speed_r2", "omega"]);
    for (p, e) in sweep.points.iter().zip(&sweep.energies) {
        table.rows.push(vec![
            p.theta,
            *e,
            p.r_prime_avg(),
            p.v(),
            p.speed_r_squared(),
            p.omega().unwrap_or(f64::NAN),
        ]);
    }
    let report = serde_json::json!({
        "size_tracks_energy": sweep.size_tracks_energy,
        "speed_nonincreasing_in_size": sweep.speed_nonincreasing_in_size,
    });
    write_table(cfg, "sweep_theta", &table, report.clone())?;
    write_summary(cfg, "sweep_theta_report", report)?;
    print!("{}", table.to_csv(""));
    Ok(sweep)
}

pub fn theta_report(points: Vec<PointResult>, h: f64, j: f64) -> ThetaSweep {
    let energies: Vec<f64> = points.iter().map(|p| theory::theta_energy(p.theta, h, j)).collect();
    let mut by_energy: Vec<usize> = (0..points.len()).collect();
    by_energy.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let size_tracks_energy = by_energy
        .windows(2)
        .all(|w| points[w[1]].r_prime_avg() >= points[w[0]].r_prime_avg());
    let mut by_size: Vec<usize> = (0..points.len()).collect();
    by_size.sort_by(|&a, &b| points[a].r_prime_avg().total_cmp(&points[b].r_prime_avg()));
    let speed_nonincreasing_in_size =
        by_size.windows(2).all(|w| points[w[1]].v() <= points[w[0]].v());
    ThetaSweep { points, energies, size_tracks_energy, speed_nonincreasing_in_size }
}

pub fn cmd_theory(cfg: &RunConfig, quantity: &str, n: Option<&str>, k: Option<f64>, thetas: Option<&str>) -> Result<Table> {
    let ns = |default: &str| parse_range(n.unwrap_or(default));
    let (h, j, k) = (cfg.h, cfg.j, k.unwrap_or(0.0));
    let table = match quantity {
        "hopping-element" => {
            let mut t = Table::new(&["n", "magnitude", "ln_magnitude"]);
            for n in ns("1..12")? {
                let ln = theory::hopping_matrix_element_ln(n, h, j)?;
                t.rows.push(vec![n as f64, ln.exp(), ln]);
            }
            t
        }
        "peak-length" => {
            let p = theory::peak_meson_length(h, j)?;
            let mut t = Table::new(&["h", "quoted", "stirling", "argmax"]);
            t.rows.push(vec![h, p.quoted, p.stirling, p.argmax as f64]);
            t
        }
        "airy-zeros" => {
            let mut t = Table::new(&["n", "z_n"]);
            for n in ns("1..3")? {
                t.rows.push(vec![n as f64, airy_zero(n)?]);
            }
            t
        }
        "airy-energy" => {
            let mut t = Table::new(&["n", "k", "energy"]);
            for n in ns("1..5")? {
                t.rows.push(vec![n as f64, k, theory::airy_energy(n, k, h, j)?]);
            }
            t
        }
        "quantized-energy" => {
            let mut t = Table::new(&["n", "energy"]);
            for n in ns("1..5")? {
                t.rows.push(vec![n as f64, theory::quantized_energy_large_h(n, h)?]);
            }
            t
        }
        "theta-energy" => {
            let list = match thetas {
                Some(s) => parse_list(s, parse_angle)?,
                None => (0..=8).map(|i| i as f64 * std::f64::consts::PI / 8.0).collect(),
            };
            let mut t = Table::new(&["theta", "energy"]);
            for th in list {
                t.rows.push(vec![th, theory::theta_energy(th, h, j)]);
            }
            t
        }
        "breathing" | "ravg" => {
            let mut t = Table::new(&["Jt", if quantity == "ravg" { "r_avg" } else { "r_s" }]);
            for time in time_grid(cfg.t_max, cfg.dt)? {
                let v = if quantity == "ravg" {
                    theory::ravg_large_h(time, h, j)?
                } else {
                    theory::breathing_amplitude(time, h, j)?
                };
                t.rows.push(vec![time, v]);
            }
            t
        }
        "bessel-profile" => {
            let levels = ns("1")?;
            let mut t = Table::new(&["n", "r", "gamma"]);
            for n in levels {
                for (r, g) in theory::bessel_limit_eigenvector(n, k, h, j, cfg.r_max)?.into_iter().enumerate() {
                    t.rows.push(vec![n as f64, (r + 1) as f64, g]);
                }
            }
            t
        }
        other => return invalid(format!("unknown theory quantity {other:?}")),
    };
    Ok(table)
}

pub fn cmd_spectrum(cfg: &RunConfig, k: f64, levels: usize) -> Result<Table> {
    let block = build_momentum_block(k, cfg.j, cfg.h, cfg.r_max)?;
    let ev = eigenvalues_tridiagonal(&block)?;
    let mut t = Table::new(&["n", "k", "energy", "quantized_2hn", "airy"]);
    for (i, e) in ev.iter().take(levels).enumerate() {
        let n = i + 1;
        let airy = theory::airy_energy(n, k, cfg.h, cfg.j)
            .map(|a| a - 4.0 * cfg.j * (k / 2.0).cos())
            .unwrap_or(f64::NAN);
        t.rows.push(vec![n as f64, k, *e, 2.0 * cfg.h * n as f64, airy]);
    }
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpinSampleReport {
    pub at: f64,
    pub count: usize,
    pub seed: u64,
    pub r_avg_exact: f64,
    pub r_avg_hat: f64,
    pub r_standard_error: f64,
    pub c_s_exact: f64,
    pub c_s_hat: f64,
    pub trotter_infidelity: Option<f64>,
}

pub fn cmd_spin_sample(cfg: &RunConfig, count: usize, at: f64, trotter_dt: Option<f64>) -> Result<SpinSampleReport> {
    cfg.validate_chain()?;
    if !(at >= 0.0 && at.is_finite()) {
        return invalid("measurement time must be finite and nonnegative");
    }
    let solved = solve(cfg.sites, cfg.j, cfg.h)?;
    let psi0 = initial_theta_state(&solved.basis, cfg.theta)?;
    let psi = SpectralPropagator::new(&solved.spectrum, &psi0)?.state_at(at);
    let dist = spinmap::sector_to_snapshot_distribution(&psi);
    let samples = spinmap::sample_snapshots(&dist, count, cfg.seed)?;
    let header = SnapshotHeader { sites: cfg.sites, h_over_j: cfg.h / cfg.j, theta: cfg.theta, jt: at, seed: cfg.seed };
    let mut buf = Vec::new();
    spinmap::write_snapshots(&mut buf, &header, &samples)?;
    write_atomic(&cfg.out_dir.join("snapshots.txt"), &buf)?;

    let trotter_infidelity = match trotter_dt {
        None => None,
        Some(dt) => {
            let steps = (at / dt).round().max(1.0) as usize;
            let step = at / steps as f64;
            let traj = spinmap::trotter_evolve_spin(cfg.sites, cfg.j, cfg.h, cfg.theta, step, steps, steps)?;
            Some(traj.last().to_sector(&solved.basis)?.infidelity(&psi))
        }
    };
    let grid = occupation_grid(&psi);
    let report = SpinSampleReport {
        at,
        count,
        seed: cfg.seed,
        r_avg_exact: psi.r_avg(),
        r_avg_hat: samples.r_avg_hat,
        r_standard_error: samples.r_standard_error(),
        c_s_exact: psi.c_s(),
        c_s_hat: samples.c_s_hat,
        trotter_infidelity,
    };
    debug_assert!((grid.total() - 1.0).abs() < 1e-9);
    write_summary(cfg, "spin_sample", serde_json::to_value(&report).expect("report serialises"))?;
    let mut line = String::new();
    let _ = write!(
        line,
        "r_avg exact {:.6}  sampled {:.6} +/- {:.6}",
        report.r_avg_exact, report.r_avg_hat, report.r_standard_error
    );
    if let Some(inf) = trotter_infidelity {
        let _ = write!(line, "  trotter infidelity {inf:.3e}");
    }
    println!("{line}");
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        let pi = std::f64::consts::PI;
        assert_eq!(parse_angle("pi").unwrap(), pi);
        assert_eq!(parse_angle("3pi/8").unwrap(), 3.0 * pi / 8.0);
        assert_eq!(parse_angle("-pi/2").unwrap(), -pi / 2.0);
        assert_eq!(parse_angle("0.75pi").unwrap(), 0.75 * pi);
        assert_eq!(parse_angle("0.5").unwrap(), 0.5);
        assert!(parse_angle("pix").is_err());
        assert!(parse_angle("abc").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_range("1..=2").unwrap(), vec![1, 2]);
        assert_eq!(parse_range("3,5").unwrap(), vec![3, 5]);
        assert!(parse_range("4..1").is_err());
    }

    #[test]
    fn config_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nL = 20\nh = 0.5 # trailing\ntheta = pi/8\nwindow = 5, 30\n").unwrap();
        let file = read_config_file(&path).unwrap();
        let cli = Overrides { h: Some(2.0), ..Default::default() };
        let cfg = RunConfig::resolve(&cli.over(file)).unwrap();
        assert_eq!(cfg.sites, 20);
        assert_eq!(cfg.h, 2.0);
        assert_eq!(cfg.theta, std::f64::consts::PI / 8.0);
        assert_eq!(cfg.window, Some((5.0, 30.0)));

        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(read_config_file(&path).is_err());
        std::fs::write(&path, "L 20\n").unwrap();
        assert!(read_config_file(&path).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = Overrides { dt: Some(0.0), ..Default::default() };
        assert!(RunConfig::resolve(&bad).is_err());
        let bad = Overrides { window: Some("3".into()), ..Default::default() };
        assert!(RunConfig::resolve(&bad).is_err());
        let odd = RunConfig::resolve(&Overrides { sites: Some(11), ..Default::default() }).unwrap();
        assert!(odd.validate_chain().is_err());
    }

    #[test]
    fn pgm_layout() {
        let img = density_pgm(&[vec![0.0, 1.0, 2.0], vec![0.5, -1.0, 0.25]], "# note");
        let header = b"P5\n# note\n3 2\n65535\n";
        assert_eq!(&img[..header.len()], header);
        let px: Vec<u16> = img[header.len()..].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        assert_eq!(px, vec![0, 65535, 65535, 32768, 0, 16384]);
    }

    #[test]
    fn ordered_parallel_map() {
        let items: Vec<usize> = (0..37).collect();
        assert_eq!(parallel_map(&items, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument(String::new())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Capacity(String::new())), EXIT_CAPACITY);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_IO);
    }
}
