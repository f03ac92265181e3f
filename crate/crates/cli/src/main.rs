use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dynleak_core::analysis::{self, AnalysisError, AnalysisLimits, AnalysisRequest, Engine, ErrorKind};
use dynleak_core::cnf::{self, emit_dimacs, parse_dimacs, CircuitFormula};
use dynleak_core::corpus::{self, CorpusError};
use dynleak_core::counter::{self, CountLimits};
use dynleak_core::leakage::parse_measures;
use dynleak_core::prob::format_rational;
use dynleak_core::rmc::{self, RmcLimits};
use dynleak_core::semantics::{self, RunLimits};
use dynleak_core::syntax::{parse_program, validate, Program, Severity};
use dynleak_core::{Bits, Prior};

/// Dynamic leakage analysis of probabilistic Boolean programs.
#[derive(Parser, Debug)]
#[command(name = "dynleak", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Leakage of one observed output, as a JSON report.
    Analyze(AnalyzeArgs),
    /// Projected model count of a DIMACS file.
    Count(CountArgs),
    /// Compile a program and observation to DIMACS; prints the variable map.
    Compile(CompileArgs),
    /// Exact joint distribution of secrets and outputs, as JSON.
    Oracle(OracleArgs),
    /// Check the counts of a corpus directory against its expectations.
    Bench(BenchArgs),
    /// Print the recursive Markov chain built from a program.
    RmcDump(RmcDumpArgs),
}

#[derive(Args, Debug)]
struct LimitArgs {
    /// Interpreter steps per secret before giving up.
    #[arg(long, default_value_t = RunLimits::default().max_steps)]
    max_steps: usize,
    /// Simultaneous configurations per secret before giving up.
    #[arg(long, default_value_t = RunLimits::default().max_paths)]
    max_paths: usize,
    #[arg(long, default_value_t = RunLimits::default().max_recursion_depth)]
    max_recursion_depth: usize,
    /// RMC locations before giving up.
    #[arg(long, default_value_t = RmcLimits::default().max_locations)]
    max_locations: usize,
    /// Kleene iterations before giving up.
    #[arg(long, default_value_t = RmcLimits::default().max_iterations)]
    max_iterations: usize,
    /// Conflicts per SAT call (unlimited by default).
    #[arg(long)]
    max_conflicts: Option<u64>,
}

impl LimitArgs {
    fn run(&self) -> RunLimits {
        RunLimits {
            max_steps: self.max_steps,
            max_paths: self.max_paths,
            max_recursion_depth: self.max_recursion_depth,
        }
    }

    fn analysis(&self) -> AnalysisLimits {
        AnalysisLimits {
            run: self.run(),
            count: CountLimits {
                max_conflicts: self.max_conflicts,
                max_models: None,
            },
            rmc: RmcLimits {
                max_locations: self.max_locations,
                max_iterations: self.max_iterations,
            },
        }
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    program: PathBuf,
    /// Observed output bits, in declaration order.
    #[arg(long = "out")]
    observed: String,
    /// Public input bits, in declaration order.
    #[arg(long = "pub", default_value = "")]
    public: String,
    /// Prior file of `bitstring weight` lines (uniform if absent).
    #[arg(long)]
    prior: Option<PathBuf>,
    /// oracle, cnf-count, rmc or all.
    #[arg(long, default_value = "all")]
    engine: Engine,
    /// Loop unrolling bound for the CNF pipeline.
    #[arg(long)]
    unroll: Option<usize>,
    /// Bits of precision for recursive programs.
    #[arg(long, default_value_t = 20)]
    precision: u32,
    /// Comma-separated: qif1, qif2, qifdyn, bel, static, posteriorv, all.
    #[arg(long, default_value = "qif1,qif2")]
    measures: String,
    /// Secret for BEL and posterior vulnerability.
    #[arg(long)]
    secret: Option<String>,
    #[command(flatten)]
    limits: LimitArgs,
}

#[derive(Args, Debug)]
struct CountArgs {
    file: PathBuf,
    /// Also print each projected model, one bitstring per line.
    #[arg(long)]
    models: bool,
    #[arg(long)]
    max_conflicts: Option<u64>,
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long = "out")]
    observed: String,
    #[arg(long = "pub", default_value = "")]
    public: String,
    #[arg(long)]
    unroll: Option<usize>,
    /// Project on execution paths (secrets and choices) instead of secrets.
    #[arg(long)]
    paths: bool,
    /// Exclude secrets with zero weight in this prior file.
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long = "pub", default_value = "")]
    public: String,
    #[command(flatten)]
    limits: LimitArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    dir: PathBuf,
    /// Rewrite the expectation files from the reference interpreter.
    #[arg(long)]
    regenerate: bool,
    /// Print results as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RmcDumpArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long = "pub", default_value = "")]
    public: String,
    #[arg(long, default_value_t = RmcLimits::default().max_locations)]
    max_locations: usize,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn load_program(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let program = parse_program(&text).with_context(|| format!("parsing {}", path.display()))?;
    let diags = validate(&program);
    for d in &diags {
        eprintln!("{}: {d}", path.display());
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        bail!("{} is not a valid program", path.display());
    }
    Ok(program)
}

fn load_prior(path: Option<&Path>, program: &Program) -> Result<Prior> {
    let width = program.secret_inputs().len();
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Prior::parse(&text, width).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(Prior::uniform(width)),
    }
}

fn bits(text: &str, width: usize, what: &str) -> Result<Bits> {
    Bits::parse_with_len(text, width).with_context(|| format!("{what} `{text}`"))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let program = load_program(&args.program)?;
    let prior = load_prior(args.prior.as_deref(), &program)?;
    let secret_width = program.secret_inputs().len();
    let mut req = AnalysisRequest::new(bits(&args.observed, program.outputs().len(), "output")?, prior);
    req.public = bits(&args.public, program.public_inputs.len(), "public input")?;
    req.engine = args.engine;
    req.unroll = args.unroll;
    req.precision = args.precision;
    req.measures = parse_measures(&args.measures)?;
    req.secret = args
        .secret
        .as_deref()
        .map(|s| bits(s, secret_width, "secret"))
        .transpose()?;
    req.limits = args.limits.analysis();
    let report = analysis::analyze(&program, &req)?;
    let mut value = serde_json::to_value(&report)?;
    value["program"] = json!(args.program.display().to_string());
    print_json(&value)
}

fn count(args: CountArgs) -> Result<()> {
    let text = fs::read_to_string(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let query = parse_dimacs(&text).with_context(|| format!("parsing {}", args.file.display()))?;
    let limits = CountLimits {
        max_conflicts: args.max_conflicts,
        max_models: None,
    };
    let result = counter::count_projected(&query, limits, args.models);
    if !result.exhausted {
        return Err(AnalysisError::CountTruncated.into());
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{}", result.count)?;
    for m in result.models.iter().flatten() {
        writeln!(out, "{}", Bits::from_bools(m))?;
    }
    Ok(())
}

fn sidecar(formula: &CircuitFormula, projection: &[u32]) -> serde_json::Value {
    let vars = |vs: &[(String, u32)]| -> Vec<serde_json::Value> {
        vs.iter().map(|(n, v)| json!({"name": n, "var": v})).collect()
    };
    json!({
        "num_vars": formula.num_vars,
        "inputs": vars(&formula.inputs),
        "public": vars(&formula.public),
        "outputs": vars(&formula.outputs),
        "choices": formula.choices.iter().map(|c| json!({
            "procedure": c.procedure,
            "path": c.path,
            "var": c.var,
            "active": c.active,
            "prob": format_rational(&c.prob),
        })).collect::<Vec<_>>(),
        "unwind": formula.unwind,
        "projection": projection,
    })
}

fn compile(args: CompileArgs) -> Result<()> {
    let program = load_program(&args.program)?;
    if let Some(reason) = analysis::cnf_unsupported(&program, args.unroll) {
        return Err(AnalysisError::Unsupported {
            engine: Engine::CnfCount,
            reason,
        }
        .into());
    }
    let observed = bits(&args.observed, program.outputs().len(), "output")?;
    let public = bits(&args.public, program.public_inputs.len(), "public input")?;
    let formula = analysis::compile_for_counting(&program, &public, args.unroll, &CountLimits::default())?;
    let mut query = if args.paths {
        cnf::observe_paths(&formula, &observed, &public)
    } else {
        cnf::observe(&formula, &observed, &public)
    };
    if let Some(path) = &args.prior {
        cnf::restrict_to_support(&mut query, &load_prior(Some(path), &program)?);
    }
    fs::write(&args.output, emit_dimacs(&query))
        .with_context(|| format!("writing {}", args.output.display()))?;
    print_json(&sidecar(&query.formula, &query.projection))
}

fn oracle(args: OracleArgs) -> Result<()> {
    let program = load_program(&args.program)?;
    let prior = load_prior(args.prior.as_deref(), &program)?;
    let public = bits(&args.public, program.public_inputs.len(), "public input")?;
    let joint =
        semantics::run_paths(&program, &prior, &public, &args.limits.run()).map_err(AnalysisError::from)?;
    let table: Vec<_> = joint
        .entries()
        .map(|(s, o, p)| json!({"secret": s, "output": o, "p": format_rational(p)}))
        .collect();
    let p_secret: serde_json::Map<_, _> = joint
        .secrets()
        .map(|(s, p)| (s.to_string(), json!(format_rational(p))))
        .collect();
    let p_output: serde_json::Map<_, _> = joint
        .outputs()
        .map(|(o, p)| (o.to_string(), json!(format_rational(p))))
        .collect();
    print_json(&json!({
        "program": args.program.display().to_string(),
        "secret_width": joint.secret_width(),
        "output_width": joint.output_width(),
        "joint": table,
        "p_secret": p_secret,
        "p_output": p_output,
    }))
}

fn bench(args: BenchArgs) -> Result<()> {
    if args.regenerate {
        let n = corpus::regenerate_corpus(&args.dir, &RunLimits::default())?;
        eprintln!("regenerated {n} expectation files");
    }
    let results = corpus::run_corpus(&args.dir)?;
    let failed: Vec<_> = results.iter().filter(|r| !r.ok()).collect();
    let mut out = io::stdout().lock();
    if args.json {
        serde_json::to_writer_pretty(&mut out, &results)?;
        writeln!(out)?;
    } else {
        writeln!(
            out,
            "{:<28} {:<10} {:>7} {:>10}  status",
            "fixture", "engine", "outputs", "seconds"
        )?;
        for r in &results {
            writeln!(
                out,
                "{:<28} {:<10} {:>7} {:>10.4}  {}",
                r.name,
                r.engine,
                r.rows.len(),
                r.seconds,
                if r.ok() { "ok" } else { "MISMATCH" }
            )?;
        }
    }
    for r in &failed {
        for row in r.rows.iter().filter(|row| !row.ok) {
            eprintln!(
                "{}: output {}: expected count {} p(o) {}, got count {} p(o) {}",
                r.name, row.observed, row.expected_count, row.expected_p_output, row.count, row.p_output
            );
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow!(Exit(1)).context(format!("{} fixture(s) mismatched", failed.len())))
    }
}

fn rmc_dump(args: RmcDumpArgs) -> Result<()> {
    let program = load_program(&args.program)?;
    let public = bits(&args.public, program.public_inputs.len(), "public input")?;
    let k = program.secret_inputs().len();
    let build = rmc::program_to_rmc(&program, &public, Bits::all(k), args.max_locations)
        .map_err(AnalysisError::from)?;
    let mut out = io::stdout().lock();
    for (s, n) in &build.main_entries {
        writeln!(out, "secret {s} entry n{n}")?;
    }
    write!(out, "{}", build.rmc.dump())?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Exit(code)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        let analysis =
            cause
                .downcast_ref::<AnalysisError>()
                .or_else(|| match cause.downcast_ref::<CorpusError>() {
                    Some(CorpusError::Analysis { source, .. }) => Some(source.as_ref()),
                    _ => None,
                });
        if let Some(a) = analysis {
            return match a.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Inconsistent => 2,
                ErrorKind::Disagreement => 3,
                ErrorKind::Limit => 4,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Count(a) => count(a),
        Command::Compile(a) => compile(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
        Command::RmcDump(a) => rmc_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use dynleak_core::LeakageError;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let inconsistent = AnalysisError::Leakage(LeakageError::InconsistentObservation(Bits::empty()));
        assert_eq!(exit_code(&anyhow!(inconsistent).context("analyzing")), 2);
        assert_eq!(exit_code(&anyhow!(AnalysisError::CountTruncated)), 4);
        assert_eq!(exit_code(&anyhow!(AnalysisError::UnrollTooSmall(1))), 4);
        assert_eq!(exit_code(&anyhow!(Exit(3)).context("outer")), 3);
        assert_eq!(exit_code(&anyhow!("plain failure")), 1);
    }

    #[test]
    fn engine_names_parse() {
        let cli = Cli::try_parse_from([
            "dynleak",
            "analyze",
            "--program",
            "p",
            "--out",
            "1",
            "--engine",
            "cnf",
        ])
        .unwrap();
        let Command::Analyze(a) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(a.engine, Engine::CnfCount);
        assert!(Cli::try_parse_from([
            "dynleak",
            "analyze",
            "--program",
            "p",
            "--out",
            "1",
            "--engine",
            "z3"
        ])
        .is_err());
    }
}
