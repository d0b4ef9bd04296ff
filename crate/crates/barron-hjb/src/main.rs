//! Command-line entry point: validate -> solve/iterate -> sample -> verify
//! -> report, with machine-readable JSON/CSV outputs.
//!
//! Exit codes: 0 success, 2 iteration cap, 3 not contractive,
//! 4 validation, 5 I/O, 6 bad arguments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use barron_hjb::error::Error;
use barron_hjb::network::{rate_study, sample_network, BoxDomain};
use barron_hjb::policy::{self, RunOptions, StopReason};
use barron_hjb::problem::{validate, ProblemSpec, ValidatedProblem};
use barron_hjb::sde::{verify_value, SdeConfig};
use barron_hjb::solver::{solve_linearized, SolveOptions};
use barron_hjb::spectral::SpectralFunction;

#[derive(Parser)]
#[command(name = "barron-hjb", version, about = "Spectral Barron HJB solver")]
struct Cli {
    /// Cap on worker threads (also via BARRONHJB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a problem spec and report norms and constants.
    Validate(ValidateArgs),
    /// Solve the linearized HJB equation for a frozen control.
    Solve(SolveArgs),
    /// Run policy iteration.
    Iterate(IterateArgs),
    /// Sample a cosine two-layer network from a spectral function.
    Sample(SampleArgs),
    /// Monte-Carlo n^{-1/2} rate study (CSV output).
    Rate(RateArgs),
    /// Verify a value function against SDE Monte-Carlo cost estimates.
    Verify(VerifyArgs),
    /// Aggregate a run directory into summary.csv / summary.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Control file (JSON array of spectral functions) or "zero".
    #[arg(long, default_value = "zero")]
    u: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_terms: usize,
    #[arg(long, default_value_t = 20000)]
    max_atoms: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IterateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Initial control file or "zero".
    #[arg(long, default_value = "zero")]
    u0: String,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    res_tol: f64,
    /// Half-width of the uniform evaluation window.
    #[arg(long, default_value_t = std::f64::consts::PI)]
    grid_window: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Spectral-function JSON file.
    #[arg(long = "fn")]
    function: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long = "fn")]
    function: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Comma-separated neuron counts.
    #[arg(long, default_value = "8,16,32,64,128,256,512,1024", value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of the box K.
    #[arg(long, default_value_t = std::f64::consts::PI)]
    window: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "zero")]
    u: String,
    #[arg(long = "V")]
    value: PathBuf,
    /// JSON array of probe points.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 10000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
}

#[derive(Serialize)]
struct RunManifest {
    spec_path: Option<String>,
    command: String,
    options: BTreeMap<String, serde_json::Value>,
    seed: Option<u64>,
    tool_version: &'static str,
    /// Unix seconds from SOURCE_DATE_EPOCH when set; omitted otherwise so
    /// seeded outputs stay byte-reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamps: Option<i64>,
}

impl RunManifest {
    fn new(command: &str, spec_path: Option<&Path>, seed: Option<u64>) -> Self {
        RunManifest {
            spec_path: spec_path.map(|p| p.display().to_string()),
            command: command.to_string(),
            options: BTreeMap::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamps: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|v| v.parse().ok()),
        }
    }

    fn opt(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.options.insert(key.to_string(), value.into());
        self
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not argument errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(6),
            };
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("BARRONHJB_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let payload = json!({ "error": error_code(&e), "detail": e.to_string() });
            eprintln!("{payload}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::NotContractive { .. } => "not_contractive",
        Error::Validation { code, .. } => code,
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::GammaTooSmall { .. } => "gamma_too_small",
        Error::InitialControlTooLarge { .. } => "initial_control_too_large",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        _ => "error",
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Validate(a) => cmd_validate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Iterate(a) => cmd_iterate(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Rate(a) => cmd_rate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_spec(path: &Path) -> Result<ValidatedProblem, Error> {
    let text = std::fs::read_to_string(path)?;
    let spec: ProblemSpec = serde_json::from_str(&text)?;
    validate(spec)
}

fn load_control(arg: &str, m: usize, d: usize) -> Result<Vec<SpectralFunction>, Error> {
    if arg == "zero" {
        return Ok(vec![SpectralFunction::zero(d); m]);
    }
    let text = std::fs::read_to_string(arg)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<ExitCode, Error> {
    let vp = load_spec(&a.spec)?;
    let manifest = RunManifest::new("validate", Some(&a.spec), None);
    let fp = vp.gamma_ok().then(|| vp.fixed_point().ok()).flatten();
    let payload = json!({
        "manifest": manifest,
        "norm_f": vp.norm_f,
        "norm_g": vp.norm_g,
        "norm_ell": vp.norm_ell,
        "c_r1": vp.c_r1,
        "c_r2": vp.c_r2,
        "gamma": vp.spec.gamma,
        "gamma_star": vp.discount_threshold(),
        "gamma_ok": vp.gamma_ok(),
        "linear_solver_only": vp.linear_solver_only,
        "ell_negative_warning": vp.ell_negative_warning,
        "fixed_point": fp,
    });
    emit(a.out.as_deref(), &payload)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode, Error> {
    let vp = load_spec(&a.spec)?;
    let u = load_control(&a.u, vp.spec.m, vp.spec.d)?;
    let opts = SolveOptions { tol: a.tol, max_terms: a.max_terms, max_atoms: a.max_atoms };
    let res = solve_linearized(&vp, &u, &opts)?;
    let manifest = RunManifest::new("solve", Some(&a.spec), None)
        .opt("tol", a.tol)
        .opt("max_terms", a.max_terms as u64)
        .opt("max_atoms", a.max_atoms as u64);
    let payload = json!({
        "manifest": manifest,
        "terms_used": res.terms_used,
        "q": res.contraction_q,
        "tail_bound": res.tail_bound_b_s1,
        "prune_ledger": res.prune_ledger,
        "V": res.v,
    });
    emit(a.out.as_deref(), &payload)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_iterate(a: IterateArgs) -> Result<ExitCode, Error> {
    let vp = load_spec(&a.spec)?;
    let u0 = load_control(&a.u0, vp.spec.m, vp.spec.d)?;
    let mut opts = RunOptions::new(vp.spec.d);
    opts.max_iter = a.max_iter;
    opts.res_tol = a.res_tol;
    opts.grid = policy::default_grid(vp.spec.d, a.grid_window);
    let report = policy::run(&vp, u0, &opts)?;
    let manifest = RunManifest::new("iterate", Some(&a.spec), None)
        .opt("max_iter", a.max_iter as u64)
        .opt("res_tol", a.res_tol)
        .opt("grid_window", a.grid_window);
    let payload = json!({ "manifest": manifest, "report": report });
    emit(a.out.as_deref(), &payload)?;
    Ok(match report.stop_reason {
        StopReason::ResidualTol => ExitCode::SUCCESS,
        StopReason::IterCap => ExitCode::from(2),
        StopReason::NotContractive => ExitCode::from(3),
    })
}

fn cmd_sample(a: SampleArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&a.function)?;
    let f: SpectralFunction = serde_json::from_str(&text)?;
    let net = sample_network(&f, a.k, a.n, a.seed)?;
    let manifest = RunManifest::new("sample", None, Some(a.seed))
        .opt("fn", a.function.display().to_string())
        .opt("k", a.k as u64)
        .opt("n", a.n as u64);
    let payload = json!({ "manifest": manifest, "network": net });
    emit(a.out.as_deref(), &payload)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_rate(a: RateArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&a.function)?;
    let f: SpectralFunction = serde_json::from_str(&text)?;
    let domain = BoxDomain::symmetric(f.dim(), a.window);
    let rows = rate_study(&f, a.k, &domain, &a.n, a.trials, a.seed)?;
    let mut csv = String::from("n,trial,h_k_error,bound\n");
    for (n, trial, err, bound) in &rows {
        csv.push_str(&format!("{n},{trial},{err},{bound}\n"));
    }
    match a.out.as_deref() {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, Error> {
    let vp = load_spec(&a.spec)?;
    let u = load_control(&a.u, vp.spec.m, vp.spec.d)?;
    let v: SpectralFunction = serde_json::from_str(&std::fs::read_to_string(&a.value)?)?;
    let points: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(&a.points)?)?;
    let cfg = SdeConfig {
        dt: a.dt,
        t_horizon: a.horizon,
        n_paths: a.paths,
        seed: a.seed,
        x0: vec![0.0; vp.spec.d],
    };
    let report = verify_value(&vp, &u, &v, &points, &cfg, None)?;
    let manifest = RunManifest::new("verify", Some(&a.spec), Some(a.seed))
        .opt("dt", a.dt)
        .opt("horizon", a.horizon)
        .opt("paths", a.paths as u64);
    let payload = json!({ "manifest": manifest, "report": report });
    emit(a.out.as_deref(), &payload)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode, Error> {
    let iterate_path = a.run_dir.join("iterate.json");
    let verify_path = a.run_dir.join("verify.json");
    let rate_path = a.run_dir.join("rate.csv");
    if !iterate_path.exists() && !verify_path.exists() && !rate_path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no iterate.json, verify.json, or rate.csv in {}", a.run_dir.display()),
        )));
    }

    let mut summary = serde_json::Map::new();
    let mut csv = String::from("iteration,u_norm,V_norm,residual,bound_x0,bound_V,mc_pass\n");
    let mut rows = 0usize;
    let mc_pass: Option<bool> = if verify_path.exists() {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&verify_path)?)?;
        let pass = v["report"]["all_pass"].as_bool();
        summary.insert("verify_all_pass".into(), json!(pass));
        pass
    } else {
        None
    };
    if iterate_path.exists() {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&iterate_path)?)?;
        let report = &v["report"];
        let x0 = report["fixed_point"]["x0"].as_f64().unwrap_or(f64::NAN);
        let v_bound = report["fixed_point"]["V_bound"].as_f64().unwrap_or(f64::NAN);
        if let Some(iters) = report["iterations"].as_array() {
            for row in iters {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row["i"],
                    row["u_norm_s"],
                    row["V_norm_s1"],
                    row["hjb_residual"],
                    x0,
                    v_bound,
                    mc_pass.map_or("".to_string(), |p| p.to_string()),
                ));
                rows += 1;
            }
        }
        summary.insert("converged".into(), report["converged"].clone());
        summary.insert("iterations".into(), json!(rows));
    }
    if rate_path.exists() {
        // Already long-format (n, trial, h_k_error, bound); republish next
        // to the summary for plotting.
        std::fs::copy(&rate_path, a.run_dir.join("rate_long.csv"))?;
        summary.insert("rate_csv".into(), json!("rate_long.csv"));
    }
    std::fs::write(a.run_dir.join("summary.csv"), csv)?;
    std::fs::write(
        a.run_dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(summary))? + "\n",
    )?;
    Ok(ExitCode::SUCCESS)
}
