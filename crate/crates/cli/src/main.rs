//! `degidx`: batch front end for degree-index, Morse index and spectral
//! flow computations on problems described by TOML files.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use degree_index::degree::{default_rectangle, degree_index_with, DegreeOptions, WindingOptions};
use degree_index::fundamental::DEFAULT_STEPS_PER_UNIT;
use degree_index::morse::{morse_via_degree, write_det_g0_csv, MorseOptions};
use degree_index::oracle::{default_flow_nodes, default_nodes, morse_index, morse_report, spectral_flow, FlowOptions};
use degree_index::planar::{modal_morse_count, PlanarConstantProblem};
use degree_index::problem::{load_problem, ProblemFile};
use degree_index::turing::{conjugate_sets, count_negative_eigenvalues, local_degrees, turing_check};
use degree_index::{Error, ProblemSpec, Rectangle, Result};

/// Version of the JSON result envelope.
const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "degidx", version, about = "Degree-index, Morse index and spectral flow of second-order boundary value problems")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..=1024))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degree of ρ(z) = det(R₀ + R₁ψ_z(ℓ)) over a rectangle in the path parameter plane.
    Degree(RunConfig),
    /// Morse index from the degree over V = [−M, M] × [δ, ℓ], checked against the oracle.
    Morse(RunConfig),
    /// Spectral flow along the path, from eigenvalue crossings of the discretized operator.
    Sf(RunConfig),
    /// Conjugate points in (δ, ℓ) with local degrees and multiplicities.
    Conjugates(RunConfig),
    /// Turing conditions, negative eigenvalues and conjugate point families of a
    /// planar reaction–diffusion problem.
    RdAnalyze(RunConfig),
    /// Full cross-check matrix: degree vs. oracle vs. closed forms.
    Verify(RunConfig),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Degree(_) => "degree",
            Command::Morse(_) => "morse",
            Command::Sf(_) => "sf",
            Command::Conjugates(_) => "conjugates",
            Command::RdAnalyze(_) => "rd-analyze",
            Command::Verify(_) => "verify",
        }
    }

    fn config(&self) -> &RunConfig {
        match self {
            Command::Degree(c)
            | Command::Morse(c)
            | Command::Sf(c)
            | Command::Conjugates(c)
            | Command::RdAnalyze(c)
            | Command::Verify(c) => c,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct RunConfig {
    /// Problem file (TOML).
    problem: PathBuf,

    /// Output directory; `<command>.json` is always written there.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Output formats; JSON is always written, `csv` adds traces.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json")]
    format: Vec<Format>,

    /// RK4 steps per unit length of x (default 2048).
    #[arg(long, value_parser = clap::value_parser!(u32).range(16..=1_048_576))]
    steps: Option<u32>,

    /// Oracle grid nodes (default clamp(400ℓ, 64, 1600); spectral flow clamp(64ℓ, 32, 256)).
    #[arg(long, value_parser = clap::value_parser!(u32).range(8..=20_000))]
    m: Option<u32>,

    /// Strip half-height M (default 2·max(sup‖C‖, 1)).
    #[arg(long)]
    strip_height: Option<f64>,

    /// Lower cut δ of the Morse rectangle (default: chosen automatically, at most ℓ/64).
    #[arg(long)]
    delta: Option<f64>,

    /// Rectangle `t_min,t_max,s_min,s_max` (default: file, else [0,1]×[−M,M]).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    rect: Option<Vec<f64>>,

    /// Relative magnitude below which a boundary sample counts as a zero (default 1e-9).
    #[arg(long, default_value_t = 1e-9)]
    zero_tol: f64,

    /// Largest accepted |winding/2π − degree| (default 0.01).
    #[arg(long, default_value_t = 0.01)]
    residual_tol: f64,

    /// Initial samples per rectangle edge (default 64).
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(4..=100_000))]
    edge_samples: u32,

    /// Maximal bisection depth per boundary segment (default 24).
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u32).range(1..=48))]
    max_depth: u32,

    /// Grid points of the conjugate point scan (default 4096).
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u32).range(16..=10_000_000))]
    scan_samples: u32,

    /// Path snapshots for the spectral flow (default 32).
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(2..=100_000))]
    path_steps: u32,
}

impl RunConfig {
    fn csv(&self) -> bool {
        self.format.contains(&Format::Csv)
    }

    fn steps(&self) -> usize {
        self.steps.map_or(DEFAULT_STEPS_PER_UNIT, |s| s as usize)
    }

    fn check(&self, spec: &ProblemSpec) -> Result<()> {
        let mut bad = Vec::new();
        if let Some(m) = self.strip_height {
            if !(m > 0.0 && m.is_finite()) {
                bad.push(format!("--strip-height must be positive, got {m}"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < spec.length) {
                bad.push(format!("--delta must lie in (0, ℓ = {}), got {d}", spec.length));
            }
        }
        if !(self.zero_tol > 0.0 && self.zero_tol < 1.0) {
            bad.push(format!("--zero-tol must lie in (0, 1), got {}", self.zero_tol));
        }
        if !(self.residual_tol > 0.0 && self.residual_tol < 0.5) {
            bad.push(format!("--residual-tol must lie in (0, 0.5), got {}", self.residual_tol));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(bad))
        }
    }

    fn winding(&self) -> WindingOptions {
        WindingOptions {
            initial_samples: self.edge_samples as usize,
            max_depth: self.max_depth as usize,
            zero_tolerance: self.zero_tol,
            residual_tolerance: self.residual_tol,
            ..WindingOptions::default()
        }
    }

    fn rectangle(&self, file: &ProblemFile) -> Result<Rectangle> {
        match &self.rect {
            Some(r) if r.len() == 4 => Rectangle::new(r[0], r[1], r[2], r[3]),
            Some(r) => Err(Error::Invalid(vec![format!(
                "--rect needs four values t_min,t_max,s_min,s_max, got {}",
                r.len()
            )])),
            None => Ok(file.rectangle.unwrap_or_else(|| {
                let mut omega = default_rectangle(&file.spec);
                if let Some(m) = self.strip_height {
                    omega.s_min = -m;
                    omega.s_max = m;
                }
                omega
            })),
        }
    }

    fn morse_options(&self) -> MorseOptions {
        MorseOptions {
            delta: self.delta,
            strip_height: self.strip_height,
            steps_per_unit: self.steps(),
            scan_samples: self.scan_samples as usize,
            winding: self.winding(),
            ..MorseOptions::default()
        }
    }

    fn oracle_nodes(&self, spec: &ProblemSpec) -> usize {
        self.m.map_or_else(|| default_nodes(spec), |m| m as usize)
    }

    fn flow_options(&self, spec: &ProblemSpec) -> FlowOptions {
        FlowOptions {
            m: self.m.map_or_else(|| default_flow_nodes(spec), |m| m as usize),
            path_steps: self.path_steps as usize,
            cross_check: true,
            winding: self.winding(),
        }
    }
}

/// Writes every finite float with 17 significant digits so that identical
/// runs produce byte-identical files.
struct FixedDigits;

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits);
    serde::Serialize::serialize(value, &mut ser).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize to JSON")
}

fn csv_file(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(cfg.out.join(name))?))
}

/// Outcome of a command: the JSON payload and whether all checks passed.
struct Outcome {
    result: Value,
    pass: bool,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Outcome { result, pass: true }
    }
}

fn degree(cfg: &RunConfig, file: &ProblemFile) -> Result<Outcome> {
    let omega = cfg.rectangle(file)?;
    let opts = DegreeOptions {
        winding: cfg.winding(),
        steps_per_unit: cfg.steps(),
        ..DegreeOptions::default()
    };
    let r = degree_index_with(&file.spec, &omega, &opts)?;
    if cfg.csv() {
        r.trace.write_csv(csv_file(cfg, "degree_trace.csv")?)?;
    }
    println!("deg(ρ, Ω, 0) = {}", r.degree);
    Ok(Outcome::ok(json!({
        "rectangle": omega,
        "degree": r.degree,
        "residual": r.residual,
        "total_winding": r.trace.total_winding,
        "min_log_abs": r.trace.min_log_abs,
        "boundary_samples": r.trace.samples.len(),
        "zero_cells": r.zero_cells,
    })))
}

fn morse(cfg: &RunConfig, file: &ProblemFile) -> Result<Outcome> {
    let spec = &file.spec;
    let m = cfg.oracle_nodes(spec);
    let (deg, oracle) = rayon::join(
        || morse_via_degree(spec, &cfg.morse_options()),
        || morse_report(spec, 0.0, m, true),
    );
    let (deg, oracle) = (deg?, oracle?);
    if cfg.csv() {
        write_det_g0_csv(spec, cfg.scan_samples as usize, csv_file(cfg, "det_g0.csv")?)?;
    }
    let pass = deg.total_degree == oracle.index as i64;
    println!(
        "Morse index: degree {}, oracle {} ({})",
        deg.total_degree,
        oracle.index,
        if pass { "agree" } else { "DISAGREE" }
    );
    Ok(Outcome {
        result: json!({ "degree": deg, "oracle": oracle, "agree": pass }),
        pass,
    })
}

fn sf(cfg: &RunConfig, file: &ProblemFile) -> Result<Outcome> {
    let omega = cfg.rectangle(file)?;
    let ledger = spectral_flow(&file.spec, &omega, &cfg.flow_options(&file.spec))?;
    if cfg.csv() {
        ledger.write_trajectory_csv(csv_file(cfg, "sf_trajectories.csv")?)?;
    }
    let pass = ledger.net == ledger.morse_start as i64 - ledger.morse_end as i64;
    println!(
        "sf = {} (left→right {}, right→left {}); m⁻ {} → {}",
        ledger.net, ledger.left_to_right, ledger.right_to_left, ledger.morse_start, ledger.morse_end
    );
    Ok(Outcome {
        result: json!({ "rectangle": omega, "ledger": ledger }),
        pass,
    })
}

fn conjugates(cfg: &RunConfig, file: &ProblemFile) -> Result<Outcome> {
    let r = morse_via_degree(&file.spec, &cfg.morse_options())?;
    if cfg.csv() {
        let mut out = csv_file(cfg, "conjugates.csv")?;
        writeln!(out, "x0,local_degree,multiplicity,relative_sigma_min")?;
        for c in &r.conjugate_points {
            writeln!(out, "{},{},{},{}", c.x0, c.local_degree, c.multiplicity, c.relative_sigma_min)?;
        }
        out.flush()?;
    }
    for c in &r.conjugate_points {
        println!("x0 = {:.12}  local degree {:+}  multiplicity {}", c.x0, c.local_degree, c.multiplicity);
    }
    Ok(Outcome::ok(json!({
        "conjugate_points": r.conjugate_points,
        "count_without_multiplicity": r.count_without_multiplicity(),
        "count_with_multiplicity": r.count_with_multiplicity(),
        "total_degree": r.total_degree,
        "off_axis_cells": r.off_axis_cells,
        "delta": r.delta,
        "strip_height": r.strip_height,
    })))
}

fn rd_analyze(cfg: &RunConfig, file: &ProblemFile) -> Result<Outcome> {
    let p = PlanarConstantProblem::from_spec(&file.spec)?;
    let turing = turing_check(&p);
    let (lp, lm) = p.lambda_pm(0.0);
    let mut result = json!({
        "d": p.d,
        "v": p.v,
        "a": p.a,
        "turing": turing,
        "lambda_plus": [lp.re, lp.im],
        "lambda_minus": [lm.re, lm.im],
        "delta2": p.delta2(),
    });
    if !turing.all_pass() {
        println!("Turing conditions fail");
        return Ok(Outcome { result, pass: false });
    }
    let count = count_negative_eigenvalues(&p)?;
    let sets = conjugate_sets(&p)?;
    let degrees = local_degrees(&p)?;
    if cfg.csv() {
        let mut out = csv_file(cfg, "roster.csv")?;
        writeln!(out, "k,mu,lambda,other,residual")?;
        for r in &count.roster {
            writeln!(out, "{},{},{},{},{}", r.k, r.mu, r.lambda, r.other, r.residual)?;
        }
        out.flush()?;
        let mut out = csv_file(cfg, "local_degrees.csv")?;
        writeln!(out, "x0,in_c1,in_c2,table,numeric")?;
        for d in &degrees {
            writeln!(out, "{},{},{},{},{}", d.x0, d.in_c1, d.in_c2, d.table, d.numeric)?;
        }
        out.flush()?;
    }
    println!(
        "|C1| = {}, |C2| = {}, |C3| = {}; negative eigenvalues {}",
        sets.c1.len(),
        sets.c2.len(),
        sets.c3.len(),
        count.count
    );
    let pass = sets.c1.len() as i64 - sets.c2.len() as i64 == count.count as i64;
    let obj = result.as_object_mut().expect("object");
    obj.insert("negative_eigenvalues".into(), to_value(&count));
    obj.insert("conjugate_sets".into(), to_value(&sets));
    obj.insert("local_degrees".into(), to_value(&degrees));
    Ok(Outcome { result, pass })
}

struct Row {
    check: &'static str,
    summary: String,
    pass: bool,
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn verify(cfg: &RunConfig, file: &ProblemFile) -> Result<Outcome> {
    let spec = &file.spec;
    let m = cfg.oracle_nodes(spec);
    let planar = PlanarConstantProblem::from_spec(spec)
        .ok()
        .filter(|p| turing_check(p).all_pass());
    let (deg, oracle) = rayon::join(
        || morse_via_degree(spec, &cfg.morse_options()),
        || morse_report(spec, 0.0, m, true),
    );
    let (deg, oracle) = (deg?.total_degree, oracle?);
    let analytic = match &planar {
        Some(p) => Some(count_negative_eigenvalues(p)?.count),
        None => modal_morse_count(spec, 0.0).ok().map(|c| c.index),
    };
    let mut rows = Vec::new();
    let pass = deg == oracle.index as i64 && analytic.is_none_or(|a| a as i64 == deg);
    let neg = analytic.map_or_else(|| "n/a".to_string(), |a| a.to_string());
    rows.push(Row {
        check: "morse-index",
        summary: format!("ι_deg={deg}, #neg={neg}, oracle={}, {}", oracle.index, verdict(pass)),
        pass,
    });
    if let Some(p) = &planar {
        let sets = conjugate_sets(p)?;
        let diff = sets.c1.len() as i64 - sets.c2.len() as i64;
        let pass = diff == deg;
        rows.push(Row {
            check: "conjugate-families",
            summary: format!(
                "|C1|-|C2|={diff}, ι_deg={deg}, conjugate points={}, {}",
                sets.count_without_multiplicity,
                verdict(pass)
            ),
            pass,
        });
    }
    if file.rectangle.is_some() || cfg.rect.is_some() {
        let omega = cfg.rectangle(file)?;
        let flow = cfg.flow_options(spec);
        let degree_opts = DegreeOptions {
            winding: cfg.winding(),
            steps_per_unit: cfg.steps(),
            localization: None,
        };
        let ledger = spectral_flow(spec, &omega, &flow)?;
        let (start, end) = rayon::join(
            || morse_index(spec, omega.t_min, m),
            || morse_index(spec, omega.t_max, m),
        );
        let change = start? as i64 - end? as i64;
        let rho = degree_index_with(spec, &omega, &degree_opts)?.degree;
        let pass = ledger.net == change && change == rho;
        rows.push(Row {
            check: "spectral-flow",
            summary: format!(
                "sf={}, m⁻(t_min)-m⁻(t_max)={change}, deg(ρ,Ω)={rho}, {}",
                ledger.net,
                verdict(pass)
            ),
            pass,
        });
    }
    let width = rows.iter().map(|r| r.check.len()).max().unwrap_or(0);
    for r in &rows {
        println!("{:width$}  {}", r.check, r.summary);
    }
    if cfg.csv() {
        let mut out = csv_file(cfg, "verify.csv")?;
        writeln!(out, "check,summary,pass")?;
        for r in &rows {
            writeln!(out, "{},\"{}\",{}", r.check, r.summary, r.pass)?;
        }
        out.flush()?;
    }
    let pass = rows.iter().all(|r| r.pass);
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "check": r.check, "summary": r.summary, "pass": r.pass }))
        .collect();
    Ok(Outcome {
        result: json!({ "rows": rows, "pass": pass }),
        pass,
    })
}

fn dispatch(command: &Command, file: &ProblemFile) -> Result<Outcome> {
    let cfg = command.config();
    cfg.check(&file.spec)?;
    match command {
        Command::Degree(c) => degree(c, file),
        Command::Morse(c) => morse(c, file),
        Command::Sf(c) => sf(c, file),
        Command::Conjugates(c) => conjugates(c, file),
        Command::RdAnalyze(c) => rd_analyze(c, file),
        Command::Verify(c) => verify(c, file),
    }
}

fn run(cli: &Cli) -> ExitCode {
    let cfg = cli.command.config();
    let name = cli.command.name();
    if let Err(e) = fs::create_dir_all(&cfg.out) {
        eprintln!("error [io]: cannot create output directory {}: {e}", cfg.out.display());
        return ExitCode::from(1);
    }
    let outcome = load_problem(&cfg.problem).and_then(|file| dispatch(&cli.command, &file));
    let (envelope, code) = match outcome {
        Ok(o) => {
            let code = if o.pass { 0 } else { 1 };
            (json!({ "result": o.result, "pass": o.pass }), code)
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            let code = if e.is_ill_posed() { 2 } else { 1 };
            (json!({ "error": { "kind": e.kind(), "message": e.to_string() } }), code)
        }
    };
    let mut envelope = envelope;
    let obj = envelope.as_object_mut().expect("object");
    obj.insert("schema_version".into(), json!(RESULT_SCHEMA_VERSION));
    obj.insert("command".into(), json!(name));
    obj.insert("problem".into(), json!(cfg.problem.display().to_string()));
    let path = cfg.out.join(format!("{name}.json"));
    if let Err(e) = write_json(&path, &envelope) {
        eprintln!("error [io]: cannot write {}: {e}", path.display());
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error [threads]: {e}");
            return ExitCode::from(1);
        }
    }
    run(&cli)
}
