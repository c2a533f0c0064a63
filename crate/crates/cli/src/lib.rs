//! Command-line front end: `eval`, `sweep` and `validate`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use twrn_crb::fim::{evaluate, GammaQuadrature, GammaTerm};
use twrn_crb::sweep::{
    is_numerical_failure, run_sweep, validate, CheckResult, ResultRow, ScenarioConfig, SweepConfig, ValidateOptions,
};
use twrn_crb::CrbError;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const VALIDATION: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "twrn-crb", version, about = "Cramer-Rao bounds for semi-blind channel estimation in AF two-way relays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: GlobalOpts,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bounds for a single scenario.
    Eval,
    /// Bounds averaged over channel realizations on a (mode, M, SNR, N) grid.
    Sweep,
    /// Self-checks: likelihood, quadrature, identities and the Monte-Carlo FIM.
    Validate,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Exit with status 2 when a sweep cell has no usable realization.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Gauss-Legendre nodes per panel for the Γ integrals.
    #[arg(long, global = true)]
    pub quad_nodes: Option<usize>,
    /// Monte-Carlo samples for `validate`.
    #[arg(long, global = true)]
    pub mc_samples: Option<usize>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Flip the sign of one Γ term in the analytic FIM (oracle self-test).
    #[arg(long, hide = true, global = true)]
    pub inject_flip: Option<GammaTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Validation(_) => exit::VALIDATION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn from_core(e: CrbError) -> CliError {
    if is_numerical_failure(&e) {
        CliError::Numerical(e.to_string())
    } else {
        CliError::Config(e.to_string())
    }
}

fn load<T: for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    serde_json::from_str(&text).map_err(|e| {
        let origin = path.map_or("defaults".to_string(), |p| p.display().to_string());
        CliError::Config(format!("{origin}: {e}"))
    })
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => stdout.write_all(bytes).map_err(|e| CliError::Config(format!("cannot write output: {e}"))),
    }
}

/// CSV cell text: scientific below `1e-3` and from `1e6`, `NaN` for empty cells.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_finite() && v != 0.0 && !(1e-3..1e6).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "mode",
    "M",
    "snr_db",
    "N",
    "L",
    "crb_a",
    "crb_b",
    "mcrb_a",
    "mcrb_b",
    "realizations_used",
    "failures",
];

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.to_string(),
            r.m.to_string(),
            format_value(r.snr_db),
            r.n.to_string(),
            r.l.to_string(),
            format_value(r.crb_a),
            format_value(r.crb_b),
            format_value(r.mcrb_a),
            format_value(r.mcrb_b),
            r.realizations_used.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Non-finite values become `null`.
pub fn rows_to_json(rows: &[ResultRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize") + "\n"
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Eval => run_eval(&cli.opts, stdout),
        Command::Sweep => run_sweep_cmd(&cli.opts, stdout, stderr),
        Command::Validate => run_validate(&cli.opts, stdout),
    }
}

fn run_eval(o: &GlobalOpts, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg: ScenarioConfig = load(o.config.as_deref())?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(q) = o.quad_nodes {
        cfg.quad_nodes = q;
    }
    let (theta, sc) = cfg.resolve().map_err(from_core)?;
    let quad = GammaQuadrature::new(cfg.quad_nodes).map_err(from_core)?;
    let rep = evaluate(&theta, &sc, &quad).map_err(|e| match e {
        e if is_numerical_failure(&e) => CliError::Numerical(format!("{} scenario: {e}", cfg.mode)),
        e => CliError::Config(e.to_string()),
    })?;
    let (n, l) = (sc.data_len(), sc.pilot_len());
    let c = sc.effective_noise(&theta).map_err(from_core)?;

    let text = if o.format == Some(Format::Json) {
        let mut v = json!({
            "mode": rep.mode,
            "M": sc.constellation.order(),
            "N": n,
            "L": l,
            "crb_a": rep.crb_a,
            "crb_b": rep.crb_b,
            "mcrb_a": rep.mcrb_a,
            "mcrb_b": rep.mcrb_b,
        });
        if o.verbose {
            v["theta"] = json!(theta);
            v["sigma2"] = json!(sc.sigma2);
            v["C"] = json!(c);
            v["condition"] = json!(rep.condition);
            v["gammas"] = json!(rep.gammas);
        }
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    } else {
        let mut s = format!(
            "mode: {}\nM: {}\nN: {n}\nL: {l}\ncrb_a: {}\ncrb_b: {}\nmcrb_a: {}\nmcrb_b: {}\n",
            rep.mode,
            sc.constellation.order(),
            format_value(rep.crb_a),
            format_value(rep.crb_b),
            format_value(rep.mcrb_a),
            format_value(rep.mcrb_b),
        );
        if o.verbose {
            s += &format!(
                "a: {}\nb: {}\ntau: {}\nsigma2: {}\nC: {c}\ncondition: {:.6e}\n",
                theta.a, theta.b, theta.tau, sc.sigma2, rep.condition
            );
            if let Some(g) = rep.gammas {
                for (t, v) in GammaTerm::ALL.iter().zip(g.to_array()) {
                    s += &format!("{t}: {v:.12e}\n");
                }
            }
        }
        s
    };
    emit(o.out.as_deref(), stdout, text.as_bytes())
}

fn run_sweep_cmd(o: &GlobalOpts, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg: SweepConfig = load(o.config.as_deref())?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(q) = o.quad_nodes {
        cfg.quad_nodes = q;
    }
    cfg.validate().map_err(from_core)?;
    let rows = run_sweep(&cfg).map_err(from_core)?;
    let bytes = if o.format == Some(Format::Json) {
        rows_to_json(&rows).into_bytes()
    } else {
        rows_to_csv(&rows).map_err(|e| CliError::Config(format!("csv: {e}")))?
    };
    let out = o.out.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    emit(out.as_deref(), stdout, &bytes)?;

    let failed: Vec<&ResultRow> = rows.iter().filter(|r| r.failures > 0).collect();
    if o.verbose {
        let total: usize = rows.iter().map(|r| r.failures).sum();
        let _ = writeln!(stderr, "{} rows, {total} failed realizations in {} cells", rows.len(), failed.len());
    }
    let empty: Vec<String> = rows
        .iter()
        .filter(|r| r.realizations_used == 0)
        .map(|r| format!("{} M={} snr={} N={}", r.mode, r.m, r.snr_db, r.n))
        .collect();
    if o.strict && !empty.is_empty() {
        return Err(CliError::Numerical(format!("every realization failed in: {}", empty.join("; "))));
    }
    Ok(())
}

/// Optional `validate` config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateConfig {
    quad_nodes: Option<usize>,
    mc_samples: Option<usize>,
    seed: Option<u64>,
}

fn run_validate(o: &GlobalOpts, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file: ValidateConfig = load(o.config.as_deref())?;
    let mut opts = ValidateOptions::default();
    opts.quad_nodes = o.quad_nodes.or(file.quad_nodes).unwrap_or(opts.quad_nodes);
    opts.mc_samples = o.mc_samples.or(file.mc_samples).unwrap_or(opts.mc_samples);
    opts.seed = o.seed.or(file.seed).unwrap_or(opts.seed);
    opts.inject_flip = o.inject_flip;
    GammaQuadrature::new(opts.quad_nodes).map_err(from_core)?;

    let checks = validate(&opts);
    let text = if o.format == Some(Format::Json) {
        serde_json::to_string_pretty(&checks).expect("checks serialize") + "\n"
    } else {
        checks
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    };
    emit(o.out.as_deref(), stdout, text.as_bytes())?;
    let failed: Vec<&CheckResult> = checks.iter().filter(|c| !c.pass).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", ")))
    }
}
