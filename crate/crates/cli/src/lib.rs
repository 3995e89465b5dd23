//! The `cwave` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use compact_wave::grid::{Mesh, TimeAxis};
use compact_wave::harness::{
    coefficient_probe, convergence_study, exp_cos_case, exp_sin_case, operator_order_probe, run_errors,
    samarskii_order_probe, tridiag_oracle_probe, TruncationKind,
};
use compact_wave::medium::{CourantPolicy, SchemeParams, Version};
use compact_wave::output::{
    render_table, write_field, write_image_pgm, write_section, FieldFormat, SnapshotEntry, SnapshotManifest, TableFormat,
};
use compact_wave::problems::{instantiate, parse_config, LoadedProblem, OutputConfig, ProblemConfig, ProblemId, SectionConfig};
use compact_wave::stepper::{run, Scheme};
use compact_wave::Error;

pub const EXIT_PROBE_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        Error::Divergence(_) => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "cwave", version, about = "Compact fourth-order solver for the acoustic wave equation")]
struct Cli {
    /// Abort when nu^2(c, sigma) exceeds epsilon instead of warning.
    #[arg(long, global = true)]
    strict_courant: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized probes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convergence table over dyadic refinements.
    Converge(ConvergeArgs),
    /// One simulation with snapshot export.
    Run(RunArgs),
    /// Verification probes.
    Check(CheckArgs),
    /// Courant numbers, dominance summary and mesh facts.
    Info(ProblemArgs),
}

#[derive(Debug, Clone, Args)]
struct ProblemArgs {
    /// example1, example2 or example3.
    #[arg(long)]
    problem: Option<String>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    version: Option<String>,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value = "A")]
    version: String,
    #[arg(long)]
    base_n: Option<usize>,
    #[arg(long)]
    base_m: Option<usize>,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormatArg::Csv)]
    format: TableFormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormatArg {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FieldFormatArg {
    CsvGrid,
    FlatBinary,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    #[arg(long)]
    outdir: PathBuf,
    /// Write a PGM image per snapshot.
    #[arg(long)]
    images: bool,
    /// Grey bands per image; 0 keeps a continuous ramp.
    #[arg(long)]
    image_levels: Option<u32>,
    /// Sections such as `x1=1.5,x2=1.5`.
    #[arg(long, value_delimiter = ',')]
    sections: Vec<String>,
    #[arg(long, value_enum, default_value_t = FieldFormatArg::FlatBinary)]
    field_format: FieldFormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Probe {
    All,
    Samarskii,
    Trunc1,
    Trunc2,
    Tridiag,
    Coefficients,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Probe::All)]
    probe: Probe,
}

/// Run the command line with `args` (including the program name).
pub fn cli_main<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::Usage("--threads must be at least 1".into())),
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, out, err)),
            Err(e) => Err(Error::Usage(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(&cli, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> compact_wave::Result<i32> {
    let policy = if cli.strict_courant { CourantPolicy::Strict } else { CourantPolicy::Warn };
    match &cli.command {
        Command::Converge(a) => converge(a, policy, out).map(|_| 0),
        Command::Run(a) => run_command(a, policy, out, err).map(|_| 0),
        Command::Check(a) => check(a.probe, cli.seed, out),
        Command::Info(a) => info(a, policy, out).map(|_| 0),
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e)
}

fn parse_version(s: &str) -> compact_wave::Result<Version> {
    s.parse()
}

fn load(args: &ProblemArgs) -> compact_wave::Result<LoadedProblem> {
    let mut config: ProblemConfig = match (&args.config, &args.problem) {
        (Some(path), _) => {
            let config = parse_config(&fs::read_to_string(path)?)?;
            if let Some(p) = &args.problem {
                let id: ProblemId = p.parse()?;
                if id != config.problem {
                    return Err(Error::Usage(format!("--problem {p} conflicts with the configuration file")));
                }
            }
            config
        }
        (None, Some(p)) => ProblemConfig::new(p.parse()?),
        (None, None) => return Err(Error::Usage("either --problem or --config is required".into())),
    };
    if let Some(n) = args.n {
        config.cells = Some(compact_wave::problems::CellCounts::Uniform(n));
    }
    if let Some(m) = args.m {
        config.steps = Some(m);
    }
    if let Some(v) = &args.version {
        config.version = Some(parse_version(v)?);
    }
    instantiate(&config)
}

fn converge(a: &ConvergeArgs, policy: CourantPolicy, out: &mut (dyn Write + Send)) -> compact_wave::Result<()> {
    let id: ProblemId = a.problem.parse()?;
    let mut config = ProblemConfig::new(id);
    config.version = Some(parse_version(&a.version)?);
    let loaded = instantiate(&config)?;
    let (n0, m0) = id.default_mesh();
    let params = loaded.params.with_policy(policy);
    let table = convergence_study(&loaded.problem, a.base_n.unwrap_or(n0), a.base_m.unwrap_or(m0), a.levels, &params)?;
    let format = match a.format {
        TableFormatArg::Csv => TableFormat::Csv,
        TableFormatArg::Text => TableFormat::Text,
    };
    let text = render_table(&table, format)?;
    match &a.out {
        Some(path) => fs::write(path, &text)?,
        None => out.write_all(text.as_bytes()).map_err(io)?,
    }
    if let Some(row) = table.rows.iter().find(|r| r.failure.is_some()) {
        return Err(Error::Divergence(Box::new(compact_wave::error::Divergence {
            level: 0,
            t: 0.0,
            detail: format!("N = {}: {}", row.n, row.failure.clone().unwrap_or_default()),
            last_stable: None,
        })));
    }
    Ok(())
}

fn parse_sections(specs: &[String]) -> compact_wave::Result<Vec<SectionConfig>> {
    specs
        .iter()
        .map(|s| {
            let (axis, value) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("section {s:?} must look like x1=1.5")))?;
            let axis: usize = axis
                .trim()
                .strip_prefix('x')
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::Usage(format!("section axis {axis:?} must be x1, x2, ...")))?;
            let value: f64 = value.trim().parse().map_err(|_| Error::Usage(format!("section value {value:?} is not a number")))?;
            Ok(SectionConfig { axis, value })
        })
        .collect()
}

fn run_command(a: &RunArgs, policy: CourantPolicy, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> compact_wave::Result<()> {
    let loaded = load(&a.problem)?;
    let params = loaded.params.with_policy(policy);
    let mut output: OutputConfig = loaded.output.clone();
    if !a.snapshots.is_empty() {
        output.snapshots = a.snapshots.clone();
    }
    output.images |= a.images;
    if a.image_levels.is_some() {
        output.image_levels = a.image_levels;
    }
    if !a.sections.is_empty() {
        output.sections = parse_sections(&a.sections)?;
    }
    let problem = &loaded.problem;
    for s in &output.sections {
        if s.axis == 0 || s.axis > problem.dim() {
            return Err(Error::Usage(format!("section axis x{} does not exist", s.axis)));
        }
    }
    if let Some(t) = output.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= problem.final_time)) {
        return Err(Error::Usage(format!("snapshot time {t} lies outside [0, {}]", problem.final_time)));
    }

    let mesh = Mesh::uniform(&problem.domain, &loaded.cells)?;
    let time = TimeAxis::new(problem.final_time, loaded.steps)?;
    fs::create_dir_all(&a.outdir)?;
    let field_format = match a.field_format {
        FieldFormatArg::CsvGrid => FieldFormat::CsvGrid,
        FieldFormatArg::FlatBinary => FieldFormat::FlatBinary,
    };
    let ext = match field_format {
        FieldFormat::CsvGrid => "csv",
        FieldFormat::FlatBinary => "bin",
    };

    let mut entries = Vec::new();
    let outdir = a.outdir.clone();
    let result = run(problem, &mesh, time, &params, &output.snapshots, &mut |snap| {
        let stem = format!("snapshot_m{:05}", snap.level);
        let field = outdir.join(format!("{stem}.{ext}"));
        write_field(snap.v, &field, field_format)?;
        let image = if output.images && mesh.dim() == 2 {
            let path = outdir.join(format!("{stem}.pgm"));
            write_image_pgm(snap.v, &path, output.image_levels.unwrap_or(0))?;
            Some(path)
        } else {
            None
        };
        let mut sections = Vec::new();
        for s in &output.sections {
            let path = outdir.join(format!("{stem}_x{}={}.csv", s.axis, s.value));
            write_section(&mesh, snap.v, s.axis - 1, s.value, &path)?;
            sections.push(path);
        }
        entries.push(SnapshotEntry {
            requested_t: snap.requested_t,
            t: snap.t,
            level: snap.level,
            field: relative(&outdir, &field),
            image: image.map(|p| relative(&outdir, &p)),
            sections: sections.iter().map(|p| relative(&outdir, p)).collect(),
        });
        Ok(())
    });

    let report = match result {
        Ok(r) => r,
        Err(Error::Divergence(d)) => {
            if let Some((m, _, v)) = &d.last_stable {
                let path = outdir.join(format!("last_stable_m{m:05}.{ext}"));
                write_field(v, &path, field_format)?;
                let _ = writeln!(err, "last stable level written to {}", path.display());
            }
            return Err(Error::Divergence(d));
        }
        Err(e) => return Err(e),
    };
    entries.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.requested_t.total_cmp(&b.requested_t)));
    let manifest = SnapshotManifest { problem: problem.name.clone(), cells: loaded.cells.clone(), steps: loaded.steps, snapshots: entries };
    manifest.write(&a.outdir.join("manifest.json"))?;

    for w in &report.warnings {
        writeln!(err, "warning: {w}").map_err(io)?;
    }
    let c = report.courant;
    writeln!(out, "problem {} N = {:?} M = {}", problem.name, loaded.cells, loaded.steps).map_err(io)?;
    writeln!(out, "nu(c) = {:.4} nu(c,sigma) = {:.4} nu(beta) = {:.4}", c.nu_c, c.nu_c_sigma, c.nu_beta).map_err(io)?;
    writeln!(out, "max |v(T)| = {:.4e}", report.final_state.v_curr.max_abs()).map_err(io)?;
    if problem.exact.is_some() {
        let e = run_errors(problem, &loaded.cells, loaded.steps, &params)?;
        writeln!(out, "e_C = {:.4e} e_C10 = {:.4e} e_C1 = {:.4e}", e.e_c, e.e_c10, e.e_c1).map_err(io)?;
    }
    writeln!(out, "snapshots: {} in {}", manifest.snapshots.len(), a.outdir.display()).map_err(io)?;
    writeln!(out, "wall time {:.3} s", report.wall_time.as_secs_f64()).map_err(io)?;
    Ok(())
}

fn relative(base: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf())
}

fn info(a: &ProblemArgs, policy: CourantPolicy, out: &mut (dyn Write + Send)) -> compact_wave::Result<()> {
    let loaded = load(a)?;
    let params: SchemeParams = loaded.params.with_policy(policy);
    let problem = &loaded.problem;
    let mesh = Mesh::uniform(&problem.domain, &loaded.cells)?;
    let time = TimeAxis::new(problem.final_time, loaded.steps)?;
    let scheme = Scheme::new(problem, &mesh, time, &params)?;
    let c = scheme.courant();
    let d = scheme.dominance();
    let t = scheme.tables();
    writeln!(out, "problem      {}", problem.name).map_err(io)?;
    writeln!(out, "version      {}", Version::of(&params).map_or("custom".to_string(), |v| format!("{v:?}"))).map_err(io)?;
    for (k, ax) in mesh.axes().iter().enumerate() {
        writeln!(out, "axis x{}      [{}, {}] N = {} h = {:.6e}", k + 1, ax.min(), ax.max(), ax.cells(), ax.step()).map_err(io)?;
    }
    writeln!(out, "time         T = {} M = {} h_t = {:.6e}", time.final_time(), time.levels(), time.step()).map_err(io)?;
    writeln!(out, "nodes        {} ({} interior)", mesh.node_count(), mesh.interior_count()).map_err(io)?;
    writeln!(out, "sigma        [{:.6}, {:.6}]", t.sigma_min, t.sigma_max).map_err(io)?;
    writeln!(out, "nu(c)        {:.4}", c.nu_c).map_err(io)?;
    writeln!(out, "nu(c,sigma)  {:.4}", c.nu_c_sigma).map_err(io)?;
    writeln!(out, "nu(beta)     {:.4}", c.nu_beta).map_err(io)?;
    let verdict = if c.satisfies(params.epsilon) { "satisfied" } else { "violated" };
    writeln!(out, "courant      nu(c,sigma)^2 <= {:.4} {verdict}", params.epsilon).map_err(io)?;
    writeln!(
        out,
        "dominance    {} lines: {} strict, {} with equality, {} violated (worst margin {:.3e})",
        d.lines, d.strict, d.with_equality, d.violated, d.worst_margin
    )
    .map_err(io)?;
    if !c.satisfies(params.epsilon) && params.courant_policy == CourantPolicy::Strict {
        return Err(Error::Stability(format!("nu(c,sigma)^2 = {:.4} exceeds {:.4}", c.nu_c_sigma.powi(2), params.epsilon)));
    }
    Ok(())
}

const ORDER_TOL: f64 = 0.2;
/// N = 8..128; finer meshes reach the roundoff floor of the second differences.
const PROBE_BASE_N: usize = 8;
const PROBE_LEVELS: usize = 5;
const TRIDIAG_TOL: f64 = 1e-12;

fn check(probe: Probe, seed: u64, out: &mut (dyn Write + Send)) -> compact_wave::Result<i32> {
    let wants = |p: Probe| probe == Probe::All || probe == p;
    let mut failures = 0;
    let mut report = |name: &str, ok: bool, detail: String, out: &mut (dyn Write + Send)| -> compact_wave::Result<()> {
        if !ok {
            failures += 1;
        }
        writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }).map_err(io)
    };
    let order_ok = |o: Option<f64>, target: f64| o.is_some_and(|o| (o - target).abs() <= ORDER_TOL);
    let fmt_order = |o: Option<f64>| o.map_or("undefined".to_string(), |o| format!("{o:.3}"));

    if wants(Probe::Samarskii) {
        let p = samarskii_order_probe(&exp_sin_case(), PROBE_BASE_N, PROBE_LEVELS)?;
        report("samarskii", order_ok(p.order, 4.0), format!("observed order {}", fmt_order(p.order)), out)?;
    }
    if wants(Probe::Trunc1) {
        for v in [Version::A, Version::B] {
            let p = operator_order_probe(TruncationKind::Trunc1, &exp_cos_case(), v, PROBE_BASE_N, PROBE_LEVELS)?;
            let ok = p.order.is_some_and(|o| o >= 2.0 - 0.1);
            report(&format!("trunc1 version {v:?}"), ok, format!("observed order {}", fmt_order(p.order)), out)?;
        }
    }
    if wants(Probe::Trunc2) {
        for v in [Version::A, Version::B] {
            let p = operator_order_probe(TruncationKind::Trunc2, &exp_cos_case(), v, PROBE_BASE_N, PROBE_LEVELS)?;
            report(&format!("trunc2 version {v:?}"), order_ok(p.order, 4.0), format!("observed order {}", fmt_order(p.order)), out)?;
        }
    }
    if wants(Probe::Tridiag) {
        let p = tridiag_oracle_probe(seed, 1000)?;
        report(
            "tridiag",
            p.max_rel_error <= TRIDIAG_TOL,
            format!("{} lines, max relative deviation {:.3e}", p.lines, p.max_rel_error),
            out,
        )?;
    }
    if wants(Probe::Coefficients) {
        let p = coefficient_probe(seed, 1000)?;
        let ok = p.max_asymmetry == 0.0 && p.max_harmonic_ulps <= 4 && p.numerov_exact;
        report(
            "coefficients",
            ok,
            format!(
                "asymmetry {:e}, harmonic identity within {} ulps, constant-density stencil exact: {}",
                p.max_asymmetry, p.max_harmonic_ulps, p.numerov_exact
            ),
            out,
        )?;
    }
    Ok(if failures == 0 { 0 } else { EXIT_PROBE_FAILURE })
}
