//! `efms` command-line front end.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use efms::integrator::amplitude_drift;
use efms::problems::{self, radius_drift};
use efms::specfile::{load_spec, CoefficientRecord};
use efms::{
    classical_limit, fit_phaselag, integrate, order_and_error_constant, periodicity_interval,
    plte_constant_closed_form, solve_ef_coefficients, stability_region_scan, theorem2_check, validate, CoefficientSet,
    DoubleDouble, Error, MethodSpec, Rational, Real, Scalar,
};
use serde::Serialize;
use serde_json::{json, Value};

const EXIT_OTHER: u8 = 1;
const EXIT_NOT_FOUND: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_TOLERANCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "efms", version, about = "Classical and exponentially-fitted symmetric multistep methods")]
struct Cli {
    /// Write the artifact to this file instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Artifact format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Worker threads for parallel scans (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Working precision. `auto` uses double-double for phase-lag fits
    /// (`phaselag`, `verify-theorem2`) and f64 elsewhere.
    #[arg(long, global = true, value_enum, default_value_t = Precision::Auto)]
    precision: Precision,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Precision {
    Auto,
    F64,
    Dd,
}

#[derive(Args, Debug)]
struct SpecArg {
    /// Method definition file, or the name of a bundled spec
    /// (numerov, stormer, two_step_k3p0, two_step_k1p1, simos_case2_classical).
    #[arg(long)]
    spec: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the moment system and print the coefficients at theta = k h.
    Coeffs {
        #[command(flatten)]
        spec: SpecArg,
        /// Fitting argument theta = k h (>= 0).
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
    },
    /// Check symmetry, consistency and zero-stability of the coefficients at theta.
    Validate {
        #[command(flatten)]
        spec: SpecArg,
        /// Fitting argument theta = k h (>= 0).
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
    },
    /// Algebraic order and error constant of the classical limit (exact arithmetic).
    Order {
        #[command(flatten)]
        spec: SpecArg,
    },
    /// Fit the phase-lag order and constant at r = theta / nu and compare with the closed form.
    Phaselag {
        #[command(flatten)]
        spec: SpecArg,
        /// Ratio r = theta / nu in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        /// Relative tolerance on |c_fit / c_closed - 1|.
        #[arg(long, env = "EFMS_TOL_PHASELAG", default_value_t = 0.01)]
        tol: f64,
        /// Tuning level P used in the closed form (default: the spec's P).
        #[arg(long, allow_negative_numbers = true)]
        tuning_level: Option<i32>,
    },
    /// Scan periodicity over a (nu, r) grid.
    Stability {
        #[command(flatten)]
        spec: SpecArg,
        /// Largest nu on the grid.
        #[arg(long, default_value_t = 3.0)]
        nu_max: f64,
        /// Largest r = theta / nu on the grid.
        #[arg(long, default_value_t = 1.0)]
        r_max: f64,
        /// Grid points per axis (2..=2000).
        #[arg(long, default_value_t = 41)]
        n: usize,
    },
    /// Integrate a catalog problem with fixed step h.
    Integrate {
        #[command(flatten)]
        spec: SpecArg,
        /// Problem name (see `problems --list`).
        #[arg(long)]
        problem: String,
        /// Step size (> 0).
        #[arg(long)]
        h: f64,
        /// Number of steps (>= J, <= 10^8).
        #[arg(long)]
        steps: usize,
        /// Fitting frequency k, so theta = k h (default: classical coefficients).
        #[arg(long)]
        k: Option<f64>,
        /// Frequency of the `harmonic` problem.
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
    },
    /// Check c(r) / c(0) against (1 - r^2)^(P+1) with fitted phase-lag constants.
    #[command(name = "verify-theorem2")]
    VerifyTheorem2 {
        #[command(flatten)]
        spec: SpecArg,
        /// Comma-separated r values in [0, 0.95].
        #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.6, 0.9])]
        r: Vec<f64>,
        /// Tolerance on the largest relative deviation.
        #[arg(long, env = "EFMS_TOL_THEOREM2", default_value_t = 0.02)]
        tol: f64,
    },
    /// Built-in test problems.
    Problems {
        /// List the catalog as JSON.
        #[arg(long)]
        list: bool,
    },
}

/// A rendered artifact plus whether the requested checks passed.
struct Artifact {
    json: Value,
    table: Table,
    passed: bool,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::NotFound(_) => (EXIT_NOT_FOUND, "not_found"),
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => (EXIT_NOT_FOUND, "not_found"),
            Error::Io(_) => (EXIT_OTHER, "io"),
            Error::Parse(_) => (EXIT_PARSE, "parse"),
            Error::InvalidSpec(_) | Error::Shape { .. } => (EXIT_PARSE, "invalid_spec"),
            Error::Singular { .. } => (EXIT_OTHER, "singular"),
            Error::OutOfRegion { .. } => (EXIT_OTHER, "out_of_region"),
            Error::FitFailure { .. } | Error::InsufficientData { .. } => (EXIT_OTHER, "fit_failure"),
            Error::ImplicitDivergence { .. } => (EXIT_OTHER, "implicit_divergence"),
            _ => (EXIT_OTHER, "error"),
        };
        Failure { code, kind, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_PARSE, kind: "invalid_argument", message: message.into() }
}

fn check_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<(), Failure> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(invalid(format!("--{name} = {value} must lie in [{lo}, {hi}]")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            report(&invalid(message.trim().to_string()));
            return ExitCode::from(EXIT_PARSE);
        }
    };
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            report(&f);
            ExitCode::from(f.code)
        }
    }
}

fn report(f: &Failure) {
    let obj = json!({ "error": f.kind, "message": f.message, "exit_code": f.code });
    eprintln!("{obj}");
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: EXIT_OTHER, kind: "threads", message: e.to_string() })?;
    }
    let fitting = matches!(cli.command, Command::Phaselag { .. } | Command::VerifyTheorem2 { .. });
    let artifact = match cli.precision {
        Precision::F64 => dispatch::<f64>(cli)?,
        Precision::Auto if !fitting => dispatch::<f64>(cli)?,
        Precision::Dd | Precision::Auto => dispatch::<DoubleDouble>(cli)?,
    };
    match emit(cli, &artifact) {
        Err(f) if f.kind == "broken_pipe" => return Ok(0),
        other => other?,
    }
    if artifact.passed {
        Ok(0)
    } else {
        report(&Failure {
            code: EXIT_TOLERANCE,
            kind: "tolerance",
            message: "one or more checks exceeded tolerance".into(),
        });
        Ok(EXIT_TOLERANCE)
    }
}

fn emit(cli: &Cli, artifact: &Artifact) -> Result<(), Failure> {
    let io_fail = |e: io::Error| Failure {
        code: EXIT_OTHER,
        kind: if e.kind() == io::ErrorKind::BrokenPipe { "broken_pipe" } else { "io" },
        message: e.to_string(),
    };
    let mut sink: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(File::create(path).map_err(io_fail)?),
        None => Box::new(io::stdout().lock()),
    };
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut sink, &artifact.json).map_err(|e| io_fail(e.into()))?;
            writeln!(sink).map_err(io_fail)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            let csv_fail = |e: csv::Error| io_fail(e.into());
            w.write_record(&artifact.table.header).map_err(csv_fail)?;
            for row in &artifact.table.rows {
                w.write_record(row).map_err(csv_fail)?;
            }
            w.flush().map_err(io_fail)?;
        }
    }
    Ok(())
}

fn to_json<S: Serialize>(v: &S) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn dispatch<T: Real>(cli: &Cli) -> Result<Artifact, Failure> {
    match &cli.command {
        Command::Coeffs { spec, theta } => coeffs::<T>(&load_spec(&spec.spec)?, *theta),
        Command::Validate { spec, theta } => validate_cmd::<T>(&load_spec(&spec.spec)?, *theta),
        Command::Order { spec } => order(&load_spec(&spec.spec)?),
        Command::Phaselag { spec, r, tol, tuning_level } => {
            phaselag::<T>(&load_spec(&spec.spec)?, *r, *tol, *tuning_level)
        }
        Command::Stability { spec, nu_max, r_max, n } => stability::<T>(&load_spec(&spec.spec)?, *nu_max, *r_max, *n),
        Command::Integrate { spec, problem, h, steps, k, omega } => {
            integrate_cmd::<T>(&load_spec(&spec.spec)?, problem, *h, *steps, *k, *omega)
        }
        Command::VerifyTheorem2 { spec, r, tol } => verify_theorem2::<T>(&load_spec(&spec.spec)?, r, *tol),
        Command::Problems { list } => problems_cmd(*list),
    }
}

fn solve<T: Real>(spec: &MethodSpec, theta: f64) -> Result<CoefficientSet<T>, Failure> {
    check_range("theta", theta, 0.0, 1e6)?;
    Ok(solve_ef_coefficients::<T>(spec, T::from_f64_lossy(theta))?)
}

fn coeffs<T: Real>(spec: &MethodSpec, theta: f64) -> Result<Artifact, Failure> {
    let record = CoefficientRecord::from_set(&solve::<T>(spec, theta)?);
    let mut header = vec!["J".to_string(), "theta".to_string()];
    header.extend((0..record.a.len()).map(|j| format!("a{j}")));
    header.extend((0..record.b.len()).map(|j| format!("b{j}")));
    let mut row = vec![record.step_number.to_string(), num(record.theta)];
    row.extend(record.a.iter().chain(&record.b).map(|v| num(*v)));
    Ok(Artifact { json: to_json(&record), table: Table { header, rows: vec![row] }, passed: true })
}

fn validate_cmd<T: Real>(spec: &MethodSpec, theta: f64) -> Result<Artifact, Failure> {
    let report = validate(&solve::<T>(spec, theta)?)?;
    let passed = report.symmetric && report.consistent && report.zero_stable && report.hypothesis_i;
    let mut table = Table::new(&["check", "passed"]);
    for (name, ok) in [
        ("symmetric", report.symmetric),
        ("consistent", report.consistent),
        ("zero_stable", report.zero_stable),
        ("rho_sigma_coprime", report.rho_sigma_coprime),
        ("hypothesis_i", report.hypothesis_i),
    ] {
        table.rows.push(vec![name.into(), ok.to_string()]);
    }
    let mut json = to_json(&report);
    json["label"] = json!(spec.label);
    json["theta"] = json!(theta);
    Ok(Artifact { json, table, passed })
}

fn order(spec: &MethodSpec) -> Result<Artifact, Failure> {
    let limit: CoefficientSet<Rational> = classical_limit(spec)?;
    let report = order_and_error_constant(&limit)?;
    let c = report.error_constant.to_f64_lossy();
    let mut table = Table::new(&["q", "C_q", "C_q_exact"]);
    let mut cq = Vec::new();
    for (q, v) in &report.cq_sequence {
        table.rows.push(vec![q.to_string(), num(v.to_f64_lossy()), v.to_string()]);
        cq.push(json!({ "q": q, "C": v.to_f64_lossy(), "C_exact": v.to_string() }));
    }
    let json = json!({
        "label": spec.label,
        "p": report.p,
        "C": c,
        "C_exact": report.error_constant.to_string(),
        "cq_sequence": cq,
    });
    Ok(Artifact { json, table, passed: true })
}

fn phaselag<T: Real>(spec: &MethodSpec, r: f64, tol: f64, tuning_level: Option<i32>) -> Result<Artifact, Failure> {
    check_range("r", r, 0.0, 1.0)?;
    check_range("tol", tol, 0.0, f64::MAX)?;
    let mut closed = plte_constant_closed_form(spec)?;
    if let Some(p) = tuning_level {
        closed = closed.with_tuning_level(p)?;
    }
    let fit = fit_phaselag::<T>(spec, r)?;
    let c_closed = closed.c(r);
    let deviation = if fit.vanishing || c_closed == 0.0 {
        if fit.vanishing && c_closed == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (fit.c / c_closed - 1.0).abs()
    };
    let passed = deviation <= tol && (fit.vanishing || fit.q == Some(closed.p));
    let mut table = Table::new(&["nu", "t"]);
    for (nu, t) in &fit.fit_points {
        table.rows.push(vec![num(*nu), num(*t)]);
    }
    let json = json!({
        "label": spec.label,
        "r": r,
        "q": fit.q,
        "c_fit": fit.c,
        "c_closed": c_closed,
        "c_closed_at_r0_exact": closed.c0.to_string(),
        "p": closed.p,
        "tuning_level": closed.tuning_level,
        "deviation": if deviation.is_finite() { json!(deviation) } else { Value::Null },
        "tolerance": tol,
        "slope": fit.slope,
        "slope_residual": fit.slope_residual,
        "vanishing": fit.vanishing,
        "fit_points": fit.fit_points,
    });
    Ok(Artifact { json, table, passed })
}

fn stability<T: Real>(spec: &MethodSpec, nu_max: f64, r_max: f64, n: usize) -> Result<Artifact, Failure> {
    check_range("nu-max", nu_max, 1e-6, 1e3)?;
    check_range("r-max", r_max, 0.0, 10.0)?;
    if !(2..=2000).contains(&n) {
        return Err(invalid(format!("--n = {n} must lie in [2, 2000]")));
    }
    let axis = |max: f64, start: f64| -> Vec<f64> {
        (0..n).map(|i| start + (max - start) * i as f64 / (n - 1) as f64).collect()
    };
    let nu_axis = axis(nu_max, nu_max / n as f64);
    let r_axis = axis(r_max, 0.0);
    let grid = stability_region_scan::<T>(spec, &nu_axis, &r_axis)?;
    let classical = periodicity_interval(&classical_limit::<T>(spec)?);
    let mut table = Table::new(&["nu", "theta", "periodic"]);
    for (i, nu) in grid.nu_axis.iter().enumerate() {
        for (j, r) in grid.r_axis.iter().enumerate() {
            table.rows.push(vec![num(*nu), num(r * nu), grid.periodic[i][j].to_string()]);
        }
    }
    let mut json = to_json(&grid);
    json["label"] = json!(spec.label);
    json["classical_interval"] = to_json(&classical);
    Ok(Artifact { json, table, passed: true })
}

fn integrate_cmd<T: Real>(
    spec: &MethodSpec,
    problem: &str,
    h: f64,
    steps: usize,
    k: Option<f64>,
    omega: f64,
) -> Result<Artifact, Failure> {
    check_range("h", h, f64::MIN_POSITIVE, 1e3)?;
    check_range("omega", omega, f64::MIN_POSITIVE, 1e6)?;
    if let Some(k) = k {
        check_range("k", k, 0.0, 1e6)?;
    }
    if steps < spec.step_number || steps > 100_000_000 {
        return Err(invalid(format!("--steps = {steps} must lie in [{}, 1e8]", spec.step_number)));
    }
    let entry = problems::by_name::<T>(problem, Some(omega)).ok_or_else(|| Failure {
        code: EXIT_NOT_FOUND,
        kind: "not_found",
        message: format!("unknown problem `{problem}`; known: {}", problems::NAMES.join(", ")),
    })?;
    let theta = k.unwrap_or(0.0) * h;
    let cs = solve::<T>(spec, theta)?;
    let ht = T::from_f64_lossy(h);
    let traj = integrate(&cs, &entry.problem, ht, steps)?;
    let dim = entry.problem.dimension();
    let mut header = vec!["x".to_string()];
    header.extend((0..dim).map(|c| format!("y{c}")));
    if entry.problem.exact.is_some() {
        header.extend((0..dim).map(|c| format!("err{c}")));
    }
    let mut table = Table { header, rows: Vec::with_capacity(traj.xs.len()) };
    for (x, y) in traj.xs.iter().zip(&traj.ys) {
        let mut row = vec![num(x.to_f64_lossy())];
        row.extend(y.iter().map(|v| num(v.to_f64_lossy())));
        if let Some(exact) = &entry.problem.exact {
            row.extend(exact(*x).iter().zip(y).map(|(e, v)| num((*v - *e).to_f64_lossy())));
        }
        table.rows.push(row);
    }
    let max_error = entry.problem.exact.as_ref().map(|e| traj.max_error(&**e).to_f64_lossy());
    let drift = match entry.name {
        "harmonic" => {
            let w = T::from_f64_lossy(omega);
            let nu = w * ht;
            let lambda = efms::phase_lag(&cs, nu).ok().map(|t| nu - t);
            json!({
                "amplitude": amplitude_drift(&traj, w, None).to_f64_lossy(),
                "amplitude_corrected": lambda.map(|l| amplitude_drift(&traj, w, Some(l)).to_f64_lossy()),
            })
        }
        "kepler" => json!({ "radius": radius_drift(&traj.ys).to_f64_lossy() }),
        _ => Value::Null,
    };
    let iters = &traj.implicit_iters;
    let json = json!({
        "label": spec.label,
        "problem": entry.name,
        "h": h,
        "steps": steps,
        "k": k,
        "theta": theta,
        "max_error": max_error,
        "drift": drift,
        "iterations": {
            "mean": iters.iter().map(|&i| i as f64).sum::<f64>() / iters.len().max(1) as f64,
            "max": iters.iter().copied().max().unwrap_or(0),
        },
        "max_residual": traj.max_residual,
        "f_evals": traj.f_evals,
        "start_evals": traj.start_evals,
    });
    Ok(Artifact { json, table, passed: true })
}

fn verify_theorem2<T: Real>(spec: &MethodSpec, r: &[f64], tol: f64) -> Result<Artifact, Failure> {
    check_range("tol", tol, 0.0, f64::MAX)?;
    for &v in r {
        check_range("r", v, 0.0, 0.95)?;
    }
    let report = theorem2_check::<T>(spec, r)?;
    let mut table = Table::new(&["r", "q", "c_fit", "c_closed", "deviation"]);
    for row in &report.rows {
        table.rows.push(vec![
            num(row.r),
            row.q.map_or(String::new(), |q| q.to_string()),
            num(row.c_fit),
            num(row.c_closed),
            num(row.deviation),
        ]);
    }
    let passed = report.max_deviation <= tol;
    let mut json = to_json(&report);
    json["tolerance"] = json!(tol);
    json["passed"] = json!(passed);
    Ok(Artifact { json, table, passed })
}

fn problems_cmd(list: bool) -> Result<Artifact, Failure> {
    if !list {
        return Err(invalid("use `problems --list`"));
    }
    let listings: Vec<_> = problems::catalog::<f64>().iter().map(|e| e.listing()).collect();
    let mut table = Table::new(&["name", "dimension", "dominant_frequency", "has_exact"]);
    for l in &listings {
        table.rows.push(vec![l.name.into(), l.dimension.to_string(), num(l.dominant_frequency), l.has_exact.to_string()]);
    }
    Ok(Artifact { json: to_json(&listings), table, passed: true })
}
