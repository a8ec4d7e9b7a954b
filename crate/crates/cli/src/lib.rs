//! `geopump` command-line driver.
//!
//! Every command reads one JSON [`RunConfig`] (or the built-in defaults),
//! applies flag overrides, and writes CSV/JSON artifacts into the output
//! directory. Output bytes depend only on the effective config.

pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use geopump::drive::{fibonacci_ratios, sample_initial_phase, DriveParams, TorusPoint};
use geopump::ensemble::{run_ensemble, sigma_slope_scan, EnsembleConfig, PhaseSampling};
use geopump::evolution::evolve_pump;
use geopump::geometry::euler_class;
use geopump::InitialStateSpec;

use output::{csv_row, fmt_num, round_sig, write_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

pub const THREADS_ENV: &str = "GEOPUMP_THREADS";

pub const DEFAULT_SEED: u64 = 2024;

fn default_grid() -> usize {
    128
}

fn default_axes() -> [usize; 2] {
    [2, 1]
}

fn default_fib_depth() -> usize {
    6
}

/// Everything a run needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub delta: f64,
    pub m: f64,
    pub drive: DriveParams,
    pub init: InitialStateSpec,
    pub trajectories: usize,
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
    pub stride: usize,
    #[serde(default)]
    pub sampling: PhaseSampling,
    /// Start phase for `simulate`; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<[f64; 2]>,
    /// Euler-class grid size per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// 1-based `(nu, mu)` of `chi_{nu mu}`.
    #[serde(default = "default_axes")]
    pub axes: [usize; 2],
    #[serde(default = "default_fib_depth")]
    pub fib_depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EnsembleConfig::reference(DEFAULT_SEED);
        RunConfig {
            delta: e.delta,
            m: e.m,
            drive: e.drive,
            init: e.init,
            trajectories: e.trajectories,
            seed: e.seed,
            t_end: e.t_end,
            dt: e.dt,
            stride: e.stride,
            sampling: e.sampling,
            phi0: None,
            grid: default_grid(),
            axes: default_axes(),
            fib_depth: default_fib_depth(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            delta: self.delta,
            m: self.m,
            drive: self.drive,
            init: self.init,
            trajectories: self.trajectories,
            seed: self.seed,
            t_end: self.t_end,
            dt: self.dt,
            stride: self.stride,
            sampling: self.sampling,
        }
    }

    pub fn start_phase(&self) -> TorusPoint<2> {
        match self.phi0 {
            Some(p) => TorusPoint::new(p),
            None => sample_initial_phase(self.seed, 0),
        }
    }

    fn euler_axes(&self) -> Result<(usize, usize), CliError> {
        match self.axes {
            [a, b] if (1..=2).contains(&a) && (1..=2).contains(&b) => Ok((a - 1, b - 1)),
            other => Err(CliError::Config(format!("axes: {other:?} must be 1 or 2"))),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(geopump::Error),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "{e}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<geopump::Error> for CliError {
    fn from(e: geopump::Error) -> Self {
        match e {
            geopump::Error::Validation(m) => CliError::Config(m),
            other => CliError::Numerical(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "geopump", version, about = "Non-abelian geometric energy pump simulations")]
pub struct Cli {
    /// Worker threads (overrides GEOPUMP_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Euler class of the dark bundle on a torus grid.
    Euler(RunArgs),
    /// One transitionless trajectory with energy accounting.
    Simulate(RunArgs),
    /// Phase-averaged pumping over random initial phases.
    Ensemble(RunArgs),
    /// Growth rate of the E2 spread across Fibonacci frequency ratios.
    ScanFib(RunArgs),
    /// Cross-module invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Axis pair of chi as two digits, e.g. 21.
    #[arg(long)]
    pub axes: Option<String>,
    #[arg(long)]
    pub fib_depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Print check names without running them.
    #[arg(long)]
    pub list: bool,
    /// Flip the sign of the counterdiabatic term before checking.
    #[arg(long)]
    pub inject_fault: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(g) = self.grid {
            cfg.grid = g;
        }
        if let Some(a) = &self.axes {
            let digits: Vec<usize> = a.chars().filter_map(|c| c.to_digit(10)).map(|d| d as usize).collect();
            if digits.len() != 2 || a.chars().count() != 2 {
                return Err(CliError::Config(format!("axes: expected two digits, got {a:?}")));
            }
            cfg.axes = [digits[0], digits[1]];
        }
        if let Some(d) = self.fib_depth {
            cfg.fib_depth = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("out: cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents.as_bytes())
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

/// Result of the `euler` command; `quantized` decides the exit status.
pub struct EulerOutcome {
    pub document: String,
    pub quantized: bool,
}

pub fn cmd_euler(cfg: &RunConfig) -> Result<EulerOutcome, CliError> {
    let axes = cfg.euler_axes()?;
    if cfg.grid == 0 {
        return Err(CliError::Config("grid: must be positive".into()));
    }
    let model = geopump::TripodModel::two_tone(cfg.delta, cfg.m);
    let data = euler_class(&model, axes, (cfg.grid, cfg.grid))?;
    let document = json_text(&json!({
        "chi": round_sig(data.chi),
        "residual_to_even_integer": round_sig(data.residual),
        "grid": [cfg.grid, cfg.grid],
    }));
    if cfg.out.is_some() {
        write(&out_dir(cfg)?.join("euler.json"), &document)?;
    }
    Ok(EulerOutcome {
        document,
        quantized: data.is_quantized(),
    })
}

pub const TRACE_HEADER: &str = "t,E1,E2,Ep1,Ep2,trans_err,norm_err";
pub const ENSEMBLE_HEADER: &str = "t,E2_mean,E2_sigma,E2_analytic";

pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let e = cfg.ensemble();
    e.init.validate()?;
    let protocol = cfg.drive.protocol(cfg.start_phase())?;
    let trace = evolve_pump(&e.model(), &protocol, &cfg.init, cfg.t_end, &e.integrator())?;
    let mut text = String::with_capacity(trace.len() * 100);
    text.push_str(TRACE_HEADER);
    text.push('\n');
    for k in 0..trace.len() {
        let [e1, e2] = trace.energy[k];
        let [p1, p2] = trace.energy_h0[k];
        text.push_str(&csv_row(&[trace.t[k], e1, e2, p1, p2, trace.transitionless_err[k], trace.norm_err[k]]));
    }
    let path = out_dir(cfg)?.join("trace.csv");
    write(&path, &text)?;
    Ok(path)
}

pub fn cmd_ensemble(cfg: &RunConfig) -> Result<(PathBuf, PathBuf), CliError> {
    let stats = run_ensemble(&cfg.ensemble())?;
    let mut text = String::with_capacity(stats.t.len() * 64);
    text.push_str(ENSEMBLE_HEADER);
    text.push('\n');
    for (k, &t) in stats.t.iter().enumerate() {
        text.push_str(&csv_row(&[t, stats.mean_energy[k][1], stats.sigma_e2[k], stats.analytic_slope * t]));
    }
    let summary = json_text(&json!({
        "fitted_slope": round_sig(stats.fitted_slope),
        "analytic_slope": round_sig(stats.analytic_slope),
        "rel_err": round_sig(stats.relative_error()),
    }));
    let dir = out_dir(cfg)?;
    let (csv, json) = (dir.join("ensemble.csv"), dir.join("summary.json"));
    write(&csv, &text)?;
    write(&json, &summary)?;
    Ok((csv, json))
}

pub struct ScanOutcome {
    pub table: String,
    pub non_increasing: bool,
}

pub fn cmd_scan_fib(cfg: &RunConfig) -> Result<ScanOutcome, CliError> {
    let ratios = fibonacci_ratios(cfg.fib_depth)?;
    let slopes = sigma_slope_scan(&cfg.ensemble(), &ratios)?;
    let mut table = String::from("p,q,ratio,sigma_slope\n");
    for s in &slopes {
        table.push_str(&format!("{},{},{},{}\n", s.p, s.q, fmt_num(s.ratio), fmt_num(s.slope)));
    }
    let non_increasing = slopes.windows(2).all(|w| w[1].slope <= 1.1 * w[0].slope);
    let dir = out_dir(cfg)?;
    write(&dir.join("scan.csv"), &table)?;
    write(
        &dir.join("scan.json"),
        &json_text(&json!({
            "ratios": slopes.iter().map(|s| json!({
                "p": s.p,
                "q": s.q,
                "sigma_slope": round_sig(s.slope),
            })).collect::<Vec<_>>(),
            "non_increasing": non_increasing,
        })),
    )?;
    Ok(ScanOutcome {
        table,
        non_increasing,
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<String, CliError> {
    if args.list {
        return Ok(verify::checks().iter().map(|c| format!("{}\n", c.name)).collect());
    }
    let reports = verify::run_checks(args.inject_fault);
    let mut text: String = reports.iter().map(|r| format!("{}\n", r.line())).collect();
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(text)
    } else {
        text.push_str(&format!("{} of {} checks failed\n", failed.len(), reports.len()));
        print!("{text}");
        Err(CliError::Verification(failed.join(", ")))
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(CliError::Config("threads: must be positive".into()))
        } else {
            Ok(Some(n))
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV}: invalid thread count {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn dispatch(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Euler(a) => {
            let out = cmd_euler(&a.resolve()?)?;
            print!("{}", out.document);
            Ok(if out.quantized { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Simulate(a) => {
            let path = cmd_simulate(&a.resolve()?)?;
            println!("wrote {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Ensemble(a) => {
            let (csv, json) = cmd_ensemble(&a.resolve()?)?;
            print!("{}", fs::read_to_string(&json).unwrap_or_default());
            println!("wrote {} and {}", csv.display(), json.display());
            Ok(EXIT_OK)
        }
        Command::ScanFib(a) => {
            let out = cmd_scan_fib(&a.resolve()?)?;
            print!("{}", out.table);
            println!("non-increasing: {}", out.non_increasing);
            Ok(EXIT_OK)
        }
        Command::Verify(a) => {
            print!("{}", cmd_verify(a)?);
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
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
    let result = thread_count(cli.threads).and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
        pool.install(|| dispatch(&cli.command))
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.phi0 = Some([0.1, 1.0 / 3.0]);
        cfg.out = Some(PathBuf::from("runs/a"));
        cfg.init.delta_phi = -0.7;
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let plain = RunConfig::default();
        assert_eq!(RunConfig::from_json(&plain.to_json()).unwrap(), plain);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::default().to_json()).unwrap();
        v["bogus"] = json!(1);
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn axes_parsing() {
        let args = |axes: &str| RunArgs {
            config: None,
            out: None,
            m: None,
            delta: None,
            grid: None,
            axes: Some(axes.into()),
            fib_depth: None,
            seed: None,
        };
        assert_eq!(args("12").resolve().unwrap().axes, [1, 2]);
        assert!(args("1").resolve().is_err());
        let cfg = args("31").resolve().unwrap();
        assert!(cfg.euler_axes().is_err());
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let e: CliError = geopump::Error::Validation("c = 2".into()).into();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        let e: CliError = geopump::Error::GapViolation {
            phi: [0.0, 0.0],
            omega: 0.0,
            floor: 1e-3,
        }
        .into();
        assert_eq!(e.exit_code(), EXIT_NUMERICAL);
    }
}
