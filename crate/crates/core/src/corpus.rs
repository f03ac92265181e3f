//! Regression corpus: programs with oracle-generated expected counts.
//!
//! A corpus directory holds `NAME.qbp` programs, each with a
//! `NAME.expect.json` expectation file and an optional `NAME.prior` prior
//! (uniform otherwise).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, cnf_unsupported, compile_for_counting, AnalysisError, Engine};
use crate::bits::Bits;
use crate::cnf;
use crate::counter::{self, CountLimits};
use crate::prob::{format_rational, parse_rational, pow2_neg, Rational};
use crate::rmc::{self, RmcLimits};
use crate::semantics::{self, Prior, PriorError, RunLimits};
use crate::syntax::{parse_program, ParseError, Program};

/// Precision used for recursive programs that need Kleene iteration.
pub const BENCH_PRECISION: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedOutput {
    pub observed: String,
    /// Size of the pre-image, i.e. the projected model count.
    pub count: u64,
    pub p_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    #[serde(default)]
    pub public: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unroll: Option<usize>,
    pub outputs: Vec<ExpectedOutput>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: missing expectation file {expect}")]
    MissingExpectation { path: PathBuf, expect: PathBuf },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Prior { path: PathBuf, source: PriorError },
    #[error("{path}: malformed expectation: {message}")]
    Expectation { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Analysis {
        path: PathBuf,
        source: Box<AnalysisError>,
    },
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub path: PathBuf,
    pub program: Program,
    pub prior: Prior,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn expectation_path(program: &Path) -> PathBuf {
    program.with_extension("expect.json")
}

/// Loads a program and its prior (`NAME.prior` or uniform).
pub fn load_fixture(path: &Path) -> Result<Fixture, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let program = parse_program(&text).map_err(|source| CorpusError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let width = program.secret_inputs().len();
    let prior_path = path.with_extension("prior");
    let prior = if prior_path.exists() {
        let text = fs::read_to_string(&prior_path).map_err(io_err(&prior_path))?;
        Prior::parse(&text, width).map_err(|source| CorpusError::Prior {
            path: prior_path.clone(),
            source,
        })?
    } else {
        Prior::uniform(width)
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Fixture {
        name,
        path: path.to_path_buf(),
        program,
        prior,
    })
}

/// Program files of a corpus directory, sorted by name.
pub fn list_programs(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "qbp") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Expected counts and output probabilities for every reachable output,
/// computed by the reference interpreter.
pub fn generate_expectation(
    fixture: &Fixture,
    public: &Bits,
    unroll: Option<usize>,
    limits: &RunLimits,
) -> Result<Expectation, AnalysisError> {
    let joint = semantics::run_paths(&fixture.program, &fixture.prior, public, limits)?;
    let mut outputs = Vec::new();
    for (o, p) in joint.outputs() {
        let pre = semantics::preimage(&fixture.program, o, public, limits)?;
        outputs.push(ExpectedOutput {
            observed: o.to_string(),
            count: pre.len() as u64,
            p_output: format_rational(p),
        });
    }
    Ok(Expectation {
        public: public.to_string(),
        unroll,
        outputs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub observed: String,
    pub expected_count: u64,
    pub count: String,
    pub expected_p_output: String,
    pub p_output: String,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureResult {
    pub name: String,
    pub engine: Engine,
    pub rows: Vec<Row>,
    pub seconds: f64,
}

impl FixtureResult {
    pub fn ok(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }
}

/// Recomputes every expected row with the CNF pipeline when it applies and
/// with the RMC engine otherwise. Counts must match exactly; probabilities
/// too, except for inexact RMC results, which may fall short by at most
/// `2^-BENCH_PRECISION`.
pub fn check_fixture(fixture: &Fixture, expect: &Expectation) -> Result<FixtureResult, CorpusError> {
    let wrap = |source: AnalysisError| CorpusError::Analysis {
        path: fixture.path.clone(),
        source: Box::new(source),
    };
    let bad = |message: String| CorpusError::Expectation {
        path: expectation_path(&fixture.path),
        message,
    };
    let program = &fixture.program;
    let public = Bits::parse_with_len(&expect.public, program.public_inputs.len())
        .map_err(|e| bad(format!("public: {e}")))?;
    let outputs = program.outputs().len();
    let start = Instant::now();
    let mut rows = Vec::new();
    let engine = if cnf_unsupported(program, expect.unroll).is_none() {
        Engine::CnfCount
    } else {
        Engine::Rmc
    };
    let mut computed: Vec<(String, Rational, bool)> = Vec::new();
    let mut observed_all = Vec::new();
    for row in &expect.outputs {
        let o = Bits::parse_with_len(&row.observed, outputs).map_err(|e| bad(format!("observed: {e}")))?;
        observed_all.push(o);
    }
    match engine {
        Engine::CnfCount => {
            let limits = CountLimits::default();
            let formula = compile_for_counting(program, &public, expect.unroll, &limits).map_err(wrap)?;
            for o in &observed_all {
                let q = cnf::observe(&formula, o, &public);
                let count = counter::count_projected(&q, limits, false).count;
                let p = analysis::p_output_via_cnf(&formula, &fixture.prior, o, &public, &limits)
                    .map_err(wrap)?;
                computed.push((count.to_string(), p, true));
            }
        }
        _ => {
            let k = program.secret_inputs().len();
            let sol = rmc::solve_program(
                program,
                &public,
                Bits::all(k),
                BENCH_PRECISION,
                &RmcLimits::default(),
            )
            .map_err(|e| wrap(e.into()))?;
            for o in &observed_all {
                let count = sol.preimage(o).len();
                let p: Rational = fixture
                    .prior
                    .support()
                    .map(|(s, w)| w * sol.likelihood(&s, o))
                    .sum();
                computed.push((count.to_string(), p, sol.result.exact));
            }
        }
    }
    for (row, (count, p, exact)) in expect.outputs.iter().zip(computed) {
        let expected_p =
            parse_rational(&row.p_output).ok_or_else(|| bad(format!("p_output `{}`", row.p_output)))?;
        let p_ok = if exact {
            p == expected_p
        } else {
            let gap = &expected_p - &p;
            !gap.is_negative() && gap <= pow2_neg(BENCH_PRECISION)
        };
        rows.push(Row {
            observed: row.observed.clone(),
            expected_count: row.count,
            ok: count == row.count.to_string() && p_ok,
            count,
            expected_p_output: row.p_output.clone(),
            p_output: format_rational(&p),
        });
    }
    Ok(FixtureResult {
        name: fixture.name.clone(),
        engine,
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn read_expectation(program: &Path) -> Result<Expectation, CorpusError> {
    let path = expectation_path(program);
    if !path.exists() {
        return Err(CorpusError::MissingExpectation {
            path: program.to_path_buf(),
            expect: path,
        });
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Expectation {
        path,
        message: e.to_string(),
    })
}

/// Checks every fixture of `dir`.
pub fn run_corpus(dir: &Path) -> Result<Vec<FixtureResult>, CorpusError> {
    list_programs(dir)?
        .iter()
        .map(|path| {
            let expect = read_expectation(path)?;
            let fixture = load_fixture(path)?;
            check_fixture(&fixture, &expect)
        })
        .collect()
}

/// Rewrites every expectation file of `dir` from the reference
/// interpreter, keeping existing `public` and `unroll` settings.
pub fn regenerate_corpus(dir: &Path, limits: &RunLimits) -> Result<usize, CorpusError> {
    let programs = list_programs(dir)?;
    for path in &programs {
        let fixture = load_fixture(path)?;
        let (public, unroll) = match read_expectation(path) {
            Ok(e) => (e.public, e.unroll),
            Err(CorpusError::MissingExpectation { .. }) => (String::new(), None),
            Err(e) => return Err(e),
        };
        let public = Bits::parse_with_len(&public, fixture.program.public_inputs.len()).map_err(|e| {
            CorpusError::Expectation {
                path: expectation_path(path),
                message: format!("public: {e}"),
            }
        })?;
        let expect = generate_expectation(&fixture, &public, unroll, limits).map_err(|source| {
            CorpusError::Analysis {
                path: path.clone(),
                source: Box::new(source),
            }
        })?;
        let text = serde_json::to_string_pretty(&expect).expect("expectations serialize") + "\n";
        let out = expectation_path(path);
        fs::write(&out, text).map_err(io_err(&out))?;
    }
    Ok(programs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn regenerate_then_check_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "id.qbp", "proc main in s[2]; out o; o <- s[0] end");
        write(
            dir.path(),
            "coin.qbp",
            "proc main in s; out o; { o <- s } [1/3] { o <- !s } end",
        );
        assert_eq!(regenerate_corpus(dir.path(), &RunLimits::default()).unwrap(), 2);
        let results = run_corpus(dir.path()).unwrap();
        assert_eq!(results.len(), 2);
        assert!(results.iter().all(FixtureResult::ok));
        let e = read_expectation(&dir.path().join("id.qbp")).unwrap();
        assert_eq!(e.outputs.len(), 2);
        assert_eq!(e.outputs[0].count, 2);
        assert_eq!(e.outputs[0].p_output, "1/2");
    }

    #[test]
    fn corrupted_expectation_fails() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "id.qbp", "proc main in s; out o; o <- s end");
        write(
            dir.path(),
            "id.expect.json",
            r#"{"outputs": [{"observed": "1", "count": 2, "p_output": "1/2"}]}"#,
        );
        let results = run_corpus(dir.path()).unwrap();
        assert!(!results[0].ok());
        assert_eq!(results[0].rows[0].count, "1");
    }

    #[test]
    fn missing_expectation_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "id.qbp", "proc main in s; out o; o <- s end");
        assert!(matches!(
            run_corpus(dir.path()),
            Err(CorpusError::MissingExpectation { .. })
        ));
    }

    #[test]
    fn empty_directory_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(run_corpus(dir.path()).unwrap().is_empty());
    }
}
