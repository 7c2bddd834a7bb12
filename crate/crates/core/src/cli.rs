//! Configuration, report rendering and the `mdiqkd` subcommands.
//!
//! Config files are JSON. Every field is optional and defaults to the
//! reference device profile:
//!
//! ```json
//! {
//!   "device":  { "eta_s": 0.9, "tau_s": 3e-10, "eta_d": 0.93, "nu_d": 1.0,
//!                "tau_a": 1.5e-7, "source_rep_rate": 1e9, "eta_bp": 1.0,
//!                "n_ff_qnd": 1, "n_ff_pair": 1, "misalignment": 0.0 },
//!   "channel": { "L": 100.0, "l_att": 22.0, "c": 2e8 },
//!   "sweep":   { "L_min": 0.0, "L_max": 800.0, "step": 10.0 },
//!   "mc":      { "trials": 100000, "seed": 42, "m_override": null, "parallel": true },
//!   "output":  { "path": null, "format": "text" }
//! }
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{ChannelParams, DeviceParams};
use crate::keyrate::{self, RateReport};
use crate::montecarlo::{self, SimSettings};
use crate::stats;

pub const SWEEP_SCHEMA: &str = "mdiqkd-sweep/v1";
pub const GM_TABLE_SCHEMA: &str = "mdiqkd-gm-table/v1";
pub const VALIDATE_SCHEMA: &str = "mdiqkd-validate/v1";

pub const SWEEP_COLUMNS: [&str; 11] = [
    "L_km",
    "eta_half",
    "R_adaptive",
    "R_original",
    "G_adaptive",
    "G_original",
    "key_hz_adaptive",
    "e_z",
    "e_x",
    "m_required",
    "crossed_over",
];

/// Below this many trials the validation report carries a low-power warning.
pub const LOW_POWER_TRIALS: u64 = 1000;

pub const GM_TABLE_M: [u64; 7] = [1, 2, 5, 10, 100, 1000, 10_000];
pub const GM_TABLE_P: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

pub const VALIDATE_M: [u64; 6] = [1, 2, 5, 20, 100, 200];
pub const VALIDATE_P_HERALD: [f64; 3] = [0.1, 0.5, 0.9];
pub const VALIDATE_P_BM: [f64; 2] = [0.43, 1.0];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(#[from] crate::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRange {
    #[serde(rename = "L_min")]
    pub l_min: f64,
    #[serde(rename = "L_max")]
    pub l_max: f64,
    pub step: f64,
}

impl Default for SweepRange {
    fn default() -> Self {
        Self {
            l_min: 0.0,
            l_max: 800.0,
            step: 10.0,
        }
    }
}

impl SweepRange {
    /// Grid points `l_min + i * step` up to `l_max` (inclusive, 1e-9 slack).
    pub fn distances(&self) -> Vec<f64> {
        let n = ((self.l_max - self.l_min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.l_min + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    /// Replaces the multiplexing grid of `validate` with this single value.
    pub m_override: Option<u64>,
    /// Execution detail only; results do not depend on it, so it is left out
    /// of report provenance.
    #[serde(skip_serializing)]
    pub parallel: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 100_000,
            seed: 42,
            m_override: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub channel: ChannelParams,
    pub sweep: SweepRange,
    pub mc: McConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, e: crate::Error| CliError::Config(format!("{name}: {e}"));
        self.device.validate().map_err(|e| field("device", e))?;
        self.channel.validate().map_err(|e| field("channel", e))?;
        let s = &self.sweep;
        if !(s.step > 0.0 && s.step.is_finite()) {
            return Err(CliError::Config(format!(
                "sweep.step = {} must be positive",
                s.step
            )));
        }
        if !(s.l_min >= 0.0 && s.l_min <= s.l_max && s.l_max.is_finite()) {
            return Err(CliError::Config(format!(
                "sweep range [{}, {}] must satisfy 0 <= L_min <= L_max",
                s.l_min, s.l_max
            )));
        }
        if self.mc.trials == 0 {
            return Err(CliError::Config("mc.trials must be at least 1".into()));
        }
        if self.mc.m_override == Some(0) {
            return Err(CliError::Config("mc.m_override must be at least 1".into()));
        }
        Ok(())
    }

    /// One-line JSON of every resolved parameter, for report headers.
    pub fn provenance(&self) -> String {
        serde_json::json!({
            "device": self.device,
            "channel": self.channel,
            "sweep": self.sweep,
            "mc": self.mc,
        })
        .to_string()
    }

    fn sim_settings(&self) -> SimSettings {
        let s = SimSettings::new(self.mc.trials, self.mc.seed);
        if self.mc.parallel {
            s
        } else {
            s.sequential()
        }
    }
}

/// Point evaluation with the finite-multiplexing mean at `m_required`
/// (or `mc.m_override`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    #[serde(flatten)]
    pub report: RateReport,
    pub crossover_km: Option<f64>,
    pub m_used: Option<u64>,
    /// `n_m / m` at `m_used`; tends to `R_adaptive` as `m` grows.
    pub finite_m_rate: Option<f64>,
    pub g_m_approximate: Option<bool>,
}

pub fn rate_point(config: &RunConfig) -> Result<RatePoint, CliError> {
    let report = RateReport::evaluate(&config.device, &config.channel)?;
    let crossover_km = keyrate::crossover_distance(&config.device, &config.channel).ok();
    let m_used = config.mc.m_override.or(report.m_required);
    let p_herald = report.p_qnd * report.eta_half * config.device.eta_s;
    let (finite_m_rate, g_m_approximate) = match m_used {
        Some(m) => {
            let g = stats::g_m(m, p_herald)?;
            let mean = stats::mean_shifted_pairs(m, p_herald, report.p_bm)?;
            (Some(mean / m as f64), Some(g.approximate))
        }
        None => (None, None),
    };
    Ok(RatePoint {
        report,
        crossover_km,
        m_used,
        finite_m_rate,
        g_m_approximate,
    })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into())
}

pub fn render_rate(config: &RunConfig, point: &RatePoint) -> String {
    if config.output.format == OutputFormat::Json {
        let doc = serde_json::json!({
            "params": serde_json::from_str::<serde_json::Value>(&config.provenance())
                .expect("provenance is valid JSON"),
            "report": point,
        });
        return format!("{doc:#}\n");
    }
    let r = &point.report;
    let mut s = String::new();
    let _ = writeln!(s, "# params {}", config.provenance());
    let _ = writeln!(s, "L_km              {}", r.length_km);
    let _ = writeln!(s, "eta_half          {}", r.eta_half);
    let _ = writeln!(s, "p_qnd             {}", r.p_qnd);
    let _ = writeln!(s, "p_bm              {}", r.p_bm);
    let _ = writeln!(s, "R_adaptive        {}", r.r_adaptive);
    let _ = writeln!(s, "R_original        {}", r.r_original);
    let _ = writeln!(s, "e_z               {}", r.e_z);
    let _ = writeln!(s, "e_x               {}", r.e_x);
    let _ = writeln!(s, "G_adaptive        {}", r.g_adaptive);
    let _ = writeln!(s, "G_original        {}", r.g_original);
    let _ = writeln!(s, "key_hz_adaptive   {}", r.key_hz_adaptive);
    let _ = writeln!(s, "m_required        {}", opt(r.m_required));
    let _ = writeln!(s, "crossed_over      {}", r.crossed_over);
    let _ = writeln!(s, "crossover_km      {}", opt(point.crossover_km));
    let _ = writeln!(
        s,
        "finite_m_rate     {} (m = {}{})",
        opt(point.finite_m_rate),
        opt(point.m_used),
        if point.g_m_approximate == Some(true) {
            ", approximate g_m"
        } else {
            ""
        }
    );
    s
}

pub fn sweep(config: &RunConfig) -> Result<Vec<RateReport>, CliError> {
    config
        .sweep
        .distances()
        .into_iter()
        .map(|l| {
            RateReport::evaluate(&config.device, &config.channel.at_length(l)).map_err(Into::into)
        })
        .collect()
}

pub fn render_sweep_csv(config: &RunConfig, rows: &[RateReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {SWEEP_SCHEMA}");
    let _ = writeln!(s, "# params {}", config.provenance());
    let _ = writeln!(s, "{}", SWEEP_COLUMNS.join(","));
    for r in rows {
        let m = r.m_required.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.length_km,
            r.eta_half,
            r.r_adaptive,
            r.r_original,
            r.g_adaptive,
            r.g_original,
            r.key_hz_adaptive,
            r.e_z,
            r.e_x,
            m,
            r.crossed_over
        );
    }
    s
}

/// One grid point of the Monte Carlo vs analytic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridResult {
    pub m: u64,
    pub p_herald: f64,
    pub p_bm: f64,
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub z_score: f64,
}

impl GridResult {
    pub fn passed(&self) -> bool {
        self.z_score.abs() <= 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub points: Vec<GridResult>,
    pub trials: u64,
    pub seed: u64,
    pub allowed_exceptions: usize,
    pub low_power: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&GridResult> {
        self.points.iter().filter(|g| !g.passed()).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().len() <= self.allowed_exceptions
    }
}

/// Grid of `(m, p_herald, p_bm)`: the default product grid, or one `m` when
/// overridden, plus a certain-success point.
pub fn validation_grid(config: &RunConfig) -> Vec<(u64, f64, f64)> {
    let ms: Vec<u64> = match config.mc.m_override {
        Some(m) => vec![m],
        None => VALIDATE_M.to_vec(),
    };
    let mut grid = Vec::new();
    for &m in &ms {
        for &p in &VALIDATE_P_HERALD {
            for &q in &VALIDATE_P_BM {
                grid.push((m, p, q));
            }
        }
    }
    grid.push((ms[ms.len() - 1].min(10), 1.0, 1.0));
    grid
}

pub fn validate(config: &RunConfig) -> Result<ValidationReport, CliError> {
    let base = config.sim_settings();
    let mut points = Vec::new();
    for (i, (m, p, q)) in validation_grid(config).into_iter().enumerate() {
        let analytic = stats::mean_shifted_pairs(m, p, q)?;
        let est = montecarlo::estimate_mean_sifted(m, p, q, &base.with_stream_key(i as u32))?;
        let diff = est.mean - analytic;
        let z_score = if est.std_error > 0.0 {
            diff / est.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        points.push(GridResult {
            m,
            p_herald: p,
            p_bm: q,
            analytic,
            mc_mean: est.mean,
            mc_stderr: est.std_error,
            z_score,
        });
    }
    let allowed_exceptions = (points.len() / 20).max(1);
    Ok(ValidationReport {
        points,
        trials: config.mc.trials,
        seed: config.mc.seed,
        allowed_exceptions,
        low_power: config.mc.trials < LOW_POWER_TRIALS,
    })
}

pub fn render_validation(config: &RunConfig, report: &ValidationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {VALIDATE_SCHEMA}");
    let _ = writeln!(s, "# params {}", config.provenance());
    if report.low_power {
        let _ = writeln!(
            s,
            "# WARNING: low power, {} trials (< {LOW_POWER_TRIALS}); z-scores are unreliable",
            report.trials
        );
    }
    let _ = writeln!(s, "m,p_herald,p_bm,analytic,mc_mean,mc_stderr,z_score");
    for g in &report.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            g.m, g.p_herald, g.p_bm, g.analytic, g.mc_mean, g.mc_stderr, g.z_score
        );
    }
    let failures = report.failures();
    let _ = writeln!(
        s,
        "# {}: {} of {} grid points outside |z| <= 3 (allowed {})",
        if report.passed() { "PASS" } else { "FAIL" },
        failures.len(),
        report.points.len(),
        report.allowed_exceptions
    );
    for g in failures {
        let _ = writeln!(
            s,
            "# outside: m={} p_herald={} p_bm={} z={}",
            g.m, g.p_herald, g.p_bm, g.z_score
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmRow {
    pub m: u64,
    pub p: f64,
    pub g_exact: f64,
    pub g_approx: f64,
    pub rel_gap: f64,
}

pub fn gm_table() -> Result<Vec<GmRow>, CliError> {
    let mut rows = Vec::new();
    for &p in &GM_TABLE_P {
        for &m in &GM_TABLE_M {
            let g_exact = stats::g_m(m, p)?.value;
            let g_approx = stats::g_m_approx(m, p)?;
            rows.push(GmRow {
                m,
                p,
                g_exact,
                g_approx,
                rel_gap: (g_approx - g_exact) / g_exact,
            });
        }
    }
    Ok(rows)
}

pub fn render_gm_table(rows: &[GmRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {GM_TABLE_SCHEMA}");
    let _ = writeln!(s, "m,p,g_exact,g_approx,rel_gap");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.m, r.p, r.g_exact, r.g_approx, r.rel_gap
        );
    }
    s
}

#[derive(Debug, Parser)]
#[command(
    name = "mdiqkd",
    version,
    about = "Key rates and Monte Carlo checks for adaptive MDI-QKD"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config file; omitted fields take the reference defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials per grid point.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Alice-Bob distance in km.
    #[arg(long = "L", global = true)]
    pub length_km: Option<f64>,
    /// Suppress the summary line when writing to --out.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Rate report at one distance.
    Rate,
    /// CSV of rates over the configured distance range.
    Sweep,
    /// Monte Carlo vs analytic mean sifted pairs.
    Validate,
    /// CSV of the finite-multiplexing correction and its approximation.
    GmTable,
}

impl Cli {
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.mc.seed = seed;
        }
        if let Some(trials) = self.trials {
            config.mc.trials = trials;
        }
        if let Some(l) = self.length_km {
            config.channel.length_km = l;
        }
        if let Some(out) = &self.out {
            config.output.path = Some(out.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs a parsed command line. Output goes to the configured path or stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = cli.resolve_config()?;
    let (content, summary, verdict) = match cli.command {
        Command::Rate => {
            let point = rate_point(&config)?;
            (
                render_rate(&config, &point),
                "rate report".to_string(),
                Ok(()),
            )
        }
        Command::Sweep => {
            let rows = sweep(&config)?;
            let n = rows.len();
            (
                render_sweep_csv(&config, &rows),
                format!("{n} sweep rows"),
                Ok(()),
            )
        }
        Command::Validate => {
            let report = validate(&config)?;
            let verdict = if report.passed() {
                Ok(())
            } else {
                let bad: Vec<String> = report
                    .failures()
                    .iter()
                    .map(|g| {
                        format!(
                            "(m={}, p_herald={}, p_bm={}, z={:.2})",
                            g.m, g.p_herald, g.p_bm, g.z_score
                        )
                    })
                    .collect();
                Err(CliError::Validation(bad.join(", ")))
            };
            let pass = if report.passed() { "PASS" } else { "FAIL" };
            (
                render_validation(&config, &report),
                format!("validation {pass}"),
                verdict,
            )
        }
        Command::GmTable => {
            let rows = gm_table()?;
            let n = rows.len();
            (render_gm_table(&rows), format!("{n} g_m rows"), Ok(()))
        }
    };
    match &config.output.path {
        Some(path) => {
            write_output(path, &content)?;
            if !cli.quiet {
                println!("wrote {summary} to {}", path.display());
            }
        }
        None => print!("{content}"),
    }
    verdict
}
