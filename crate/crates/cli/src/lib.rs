//! `spectool` command-line interface.
//!
//! Exit codes: 0 success, 1 assertion or certificate failure, 2 usage error
//! (bad flags, unreadable or malformed input, paths escaping `--output-dir`).

pub mod suite;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use spectool_core::algebra::{AlgebraSpec, IdealKind, IdealSpec, OperatorFile, Projection};
use spectool_core::cfun::{self, CompactRealSet, PLFunction};
use spectool_core::linalg::c;
use spectool_core::norms::{self, NormSpec};
use spectool_core::riesz::{self, Contour};
use spectool_core::spectral::{self, Grid};
use spectool_core::{perturb, uppertri, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// Settings shared by every subcommand. A `--config` JSON file supplies
/// defaults; flags override it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub output_dir: PathBuf,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, tolerances: BTreeMap::new(), output_dir: PathBuf::from("."), format: Format::Json }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self.tolerances.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            Some((k, v)) => Err(format!("tolerance {k} must be positive, got {v}")),
            None => Ok(()),
        }
    }

    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

#[derive(Debug, Parser)]
#[command(name = "spectool", version, about = "Spectral perturbation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Run seed, recorded in every output.
    #[arg(long, global = true, env = "SPECTOOL_SEED")]
    pub seed: Option<u64>,
    /// Directory all outputs are written under.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Named tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", global = true, value_parser = parse_tol)]
    pub tolerances: Vec<(String, f64)>,
    /// JSON file with a RunConfig.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad tolerance value {v:?}: {e}"))?;
    Ok((k.to_string(), v))
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_circle(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

fn parse_rect(s: &str) -> Result<[f64; 4], String> {
    parse_floats::<4>(s)
}

fn parse_dims(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string())).collect()
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum IdealArg {
    Full,
    FinitelySupported,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Perturb T by X with Φ(X) < ε so that σ(T + X) is disconnected.
    Disconnect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        norm: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "full")]
        ideal: IdealArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operator-norm variant with ε₀ = ε/2.
    DisconnectRr0 {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// c_Φ and the per-summand f_Φ table.
    Cphi {
        #[arg(long)]
        alg: PathBuf,
        #[arg(long)]
        norm: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Riesz idempotent for a circle or rectangle contour.
    Riesz {
        #[arg(long = "in")]
        input: PathBuf,
        /// cx,cy,r
        #[arg(long, value_parser = parse_circle, conflicts_with = "rect", required_unless_present = "rect")]
        circle: Option<[f64; 3]>,
        /// x0,y0,x1,y1 (opposite corners)
        #[arg(long, value_parser = parse_rect)]
        rect: Option<[f64; 4]>,
        #[arg(long, default_value_t = 128)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ε-pseudospectrum of T on a square grid.
    Pseudospectrum {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.2)]
        half_width: f64,
        #[arg(long, default_value_t = 121)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated shift: spectrum of the circulant and pseudospectrum of T1.
    ShiftDemo {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 121)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturb f on X so that its range is disconnected.
    CfunDisconnect {
        #[arg(long)]
        set: PathBuf,
        #[arg(long = "fn")]
        function: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that small perturbations keep the spectrum connected when c_Φ = ∞.
    Counterexample {
        #[arg(long, default_value_t = 12)]
        k: usize,
        /// Comma-separated summand dimensions (one per k); defaults to all 2.
        #[arg(long, value_parser = parse_dims)]
        dims: Option<Vec<usize>>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0.99)]
        budget: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every invariant check and report pass/fail per invariant.
    VerifySuite {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Deliberately break one input to exercise failure reporting.
        #[arg(long, value_enum)]
        inject_fault: Option<suite::Fault>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(m: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: m.into() }
    }

    pub fn assertion(m: impl Into<String>) -> Self {
        Failure { code: EXIT_ASSERTION, message: m.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Json(_) | Error::InvalidSpec(_) | Error::ShapeMismatch(_) => EXIT_USAGE,
            _ => EXIT_ASSERTION,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

/// Resolve `name` under `dir`, rejecting absolute paths and `..`.
pub fn output_path(dir: &Path, name: &Path) -> Result<PathBuf, Failure> {
    if name.is_absolute() || name.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(Failure::usage(format!("output path {} must be relative and stay inside the output directory", name.display())));
    }
    Ok(dir.join(name))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

pub struct Ctx<'a> {
    pub config: RunConfig,
    pub command: &'static str,
    pub stdout: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn envelope(&self, result: Value) -> Value {
        json!({
            "tool": "spectool",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.config.seed,
            "result": result,
        })
    }

    /// Write `text` to `out` under the output directory, or to stdout.
    fn emit_text(&mut self, out: Option<&Path>, text: &str) -> CmdResult {
        match out {
            Some(name) => {
                let path = output_path(&self.config.output_dir, name)?;
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Failure::usage(format!("cannot create {}: {e}", parent.display())))?;
                }
                std::fs::write(&path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
                writeln!(self.stdout, "wrote {}", path.display()).ok();
            }
            None => {
                self.stdout.write_all(text.as_bytes()).ok();
            }
        }
        Ok(())
    }

    fn emit_json(&mut self, out: Option<&Path>, result: Value) -> CmdResult {
        let mut text = serde_json::to_string_pretty(&self.envelope(result)).map_err(|e| Failure::assertion(e.to_string()))?;
        text.push('\n');
        self.emit_text(out, &text)
    }

    fn emit_csv_or_json(&mut self, out: Option<&Path>, csv: String, result: Value) -> CmdResult {
        match self.config.format {
            Format::Csv => {
                let text = format!("# spectool {} {} seed={}\n{csv}", env!("CARGO_PKG_VERSION"), self.command, self.config.seed);
                self.emit_text(out, &text)
            }
            Format::Json => self.emit_json(out, result),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::assertion(e.to_string()))
}

fn check_eps(eps: f64) -> CmdResult {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Failure::usage(format!("--eps must be positive, got {eps}")))
    }
}

fn run_command(cmd: &Command, ctx: &mut Ctx) -> CmdResult {
    match cmd {
        Command::Disconnect { input, norm, eps, ideal, out } => {
            check_eps(*eps)?;
            let file = OperatorFile::from_json(&read_text(input)?)?;
            let spec = NormSpec::from_json(&read_text(norm)?)?;
            let alg = file.algebra()?;
            let ideal = IdealSpec {
                kind: match ideal {
                    IdealArg::Full => IdealKind::Full,
                    IdealArg::FinitelySupported => IdealKind::FinitelySupported,
                },
            };
            let cert = perturb::disconnect(&file.operator, *eps, &spec, &ideal, &alg)?;
            ctx.emit_json(out.as_deref(), to_value(&cert)?)
        }
        Command::DisconnectRr0 { input, eps, out } => {
            check_eps(*eps)?;
            let file = OperatorFile::from_json(&read_text(input)?)?;
            let cert = perturb::disconnect_rr0(&file.operator, *eps)?;
            ctx.emit_json(out.as_deref(), to_value(&cert)?)
        }
        Command::Cphi { alg, norm, out } => {
            let alg: AlgebraSpec = serde_json::from_str(&read_text(alg)?).map_err(Error::from)?;
            alg.validate()?;
            let spec = NormSpec::from_json(&read_text(norm)?)?;
            let c_phi = norms::c_phi(&spec, &alg)?;
            let layout = spectool_core::BlockOperator::zeros(&AlgebraSpec::finite(alg.dims.clone())?);
            let mut table = Vec::new();
            for id in 0..alg.dims.len() {
                let f = norms::f_phi(&spec, &Projection::central(&layout, &[id]))?;
                table.push(json!({ "summand": id, "dim": alg.dims[id], "f_phi": f.value }));
            }
            let f_identity = norms::f_phi_identity(&spec, &alg)?;
            ctx.emit_json(
                out.as_deref(),
                json!({
                    // JSON has no infinity; a divergent tail reports null with the flag set
                    "c_phi": if c_phi.is_finite() { json!(c_phi) } else { Value::Null },
                    "c_phi_infinite": c_phi.is_infinite(),
                    "f_phi_identity": f_identity,
                    "dominating": f_identity >= 1.0,
                    "summands": table,
                }),
            )
        }
        Command::Riesz { input, circle, rect, nodes, out } => {
            let file = OperatorFile::from_json(&read_text(input)?)?;
            let contour = match (circle, rect) {
                (Some([x, y, r]), _) => Contour::circle(c(*x, *y), *r, *nodes),
                (None, Some([x0, y0, x1, y1])) => Contour::rectangle(c(*x0, *y0), c(*x1, *y1)),
                (None, None) => return Err(Failure::usage("need --circle or --rect")),
            };
            let res = riesz::riesz_idempotent(&file.operator, &contour)?;
            let tol = ctx.config.tol("riesz", 1e-8);
            if !res.residuals.is_witness(tol, file.operator.op_norm()) {
                ctx.emit_json(out.as_deref(), to_value(&res)?)?;
                return Err(Failure::assertion(format!("idempotent residuals {:?} exceed {tol:e}", res.residuals)));
            }
            ctx.emit_json(out.as_deref(), to_value(&res)?)
        }
        Command::Pseudospectrum { input, eps, half_width, grid, out } => {
            check_eps(*eps)?;
            let file = OperatorFile::from_json(&read_text(input)?)?;
            let ps = spectral::pseudospectrum_grid(&file.operator, *eps, Grid::square(*half_width, *grid))?;
            let summary = json!({ "eps": eps, "marked_fraction": ps.marked_fraction(), "grid": ps.grid, "points": ps.points.len() });
            let csv = ps.to_csv();
            ctx.emit_csv_or_json(out.as_deref(), csv, json!({ "summary": summary, "grid": to_value(&ps)? }))
        }
        Command::ShiftDemo { n, eps, grid, out } => {
            check_eps(*eps)?;
            let demo = uppertri::shift_demo(*n, *eps, 1.2, *grid)?;
            let summary = json!({
                "n": demo.n,
                "eps": demo.eps,
                "radius": demo.radius,
                "disk_fraction": demo.disk_fraction,
                "marked_fraction": demo.marked_fraction,
                "marked_fraction_circulant": demo.marked_fraction_t,
                "circle_deviation": demo.circle_deviation,
                "nilpotency_residual": demo.nilpotency_residual,
                "note": "truncation surrogate: the pseudospectrum of the truncated shift approximates the closed unit disk",
            });
            writeln!(ctx.stdout, "{}", serde_json::to_string(&summary).unwrap_or_default()).ok();
            ctx.emit_csv_or_json(out.as_deref(), demo.t1_grid.to_csv(), json!({ "summary": summary, "grid": to_value(&demo.t1_grid)? }))
        }
        Command::CfunDisconnect { set, function, eps, out } => {
            check_eps(*eps)?;
            let x = CompactRealSet::from_json(&read_text(set)?)?;
            let f = PLFunction::from_json(&read_text(function)?)?;
            let cert = cfun::cfun_disconnect(&x, &f, *eps)?;
            let limit_note = x.generator.map(|_| "piece diameters refer to the stored stage of the limit set");
            let mut v = to_value(&cert)?;
            v["limit_object_note"] = json!(limit_note);
            ctx.emit_json(out.as_deref(), v)
        }
        Command::Counterexample { k, dims, trials, budget, out } => {
            let dims = dims.clone().unwrap_or_else(|| vec![2; *k]);
            let ce = perturb::counterexample_operator(*k, &dims)?;
            let rep = perturb::verify_counterexample(&ce, *trials, *budget, ctx.config.seed)?;
            let pass = rep.all_pass();
            ctx.emit_json(out.as_deref(), to_value(&rep)?)?;
            if pass {
                Ok(())
            } else {
                Err(Failure::assertion(format!(
                    "{}/{} block bounds and {}/{} connected spectra",
                    rep.block_bound_passes, rep.trials, rep.connected_passes, rep.trials
                )))
            }
        }
        Command::VerifySuite { trials, inject_fault, out } => {
            let report = suite::verify_suite(&ctx.config, *trials, *inject_fault);
            for r in &report.results {
                writeln!(ctx.stdout, "{} {} ({} trials) {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.trials, r.detail).ok();
            }
            let pass = report.all_pass();
            ctx.emit_json(out.as_deref(), to_value(&report)?)?;
            if pass {
                Ok(())
            } else {
                Err(Failure::assertion(format!("{} invariant(s) failed", report.results.iter().filter(|r| !r.pass).count())))
            }
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Disconnect { .. } => "disconnect",
        Command::DisconnectRr0 { .. } => "disconnect-rr0",
        Command::Cphi { .. } => "cphi",
        Command::Riesz { .. } => "riesz",
        Command::Pseudospectrum { .. } => "pseudospectrum",
        Command::ShiftDemo { .. } => "shift-demo",
        Command::CfunDisconnect { .. } => "cfun-disconnect",
        Command::Counterexample { .. } => "counterexample",
        Command::VerifySuite { .. } => "verify-suite",
    }
}

fn build_config(g: &GlobalOpts) -> Result<RunConfig, Failure> {
    let mut config = match &g.config {
        Some(p) => serde_json::from_str::<RunConfig>(&read_text(p)?).map_err(|e| Failure::usage(format!("bad config {}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        config.seed = s;
    }
    if let Some(d) = &g.output_dir {
        config.output_dir = d.clone();
    }
    if let Some(f) = g.format {
        config.format = f;
    }
    for (k, v) in &g.tolerances {
        config.tolerances.insert(k.clone(), *v);
    }
    config.validate().map_err(Failure::usage)?;
    Ok(config)
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                stdout.write_all(text.as_bytes()).ok();
            } else {
                stderr.write_all(text.as_bytes()).ok();
            }
            return code;
        }
    };
    let config = match build_config(&cli.global) {
        Ok(c) => c,
        Err(f) => {
            writeln!(stderr, "error: {}", f.message).ok();
            return f.code;
        }
    };
    if let Some(n) = cli.global.threads {
        // the global pool can only be set once per process; later calls keep the first
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut ctx = Ctx { config, command: command_name(&cli.command), stdout };
    match run_command(&cli.command, &mut ctx) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            writeln!(stderr, "error: {}", f.message).ok();
            f.code
        }
    }
}
