//! Workloads shared by the benchmarks.

use std::path::PathBuf;

use dynleak_core::analysis::{cnf_unsupported, AnalysisRequest, Engine};
use dynleak_core::corpus::{self, CorpusError, Expectation, Fixture, BENCH_PRECISION};
use dynleak_core::{parse_program, Bits, Prior, Program};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// One analysis to time: a corpus program, its first expected output and
/// an engine that applies to it.
pub struct Workload {
    pub name: String,
    pub engine: Engine,
    pub program: Program,
    pub request: AnalysisRequest,
}

fn request(fixture: &Fixture, expect: &Expectation, engine: Engine) -> Result<AnalysisRequest, CorpusError> {
    let observed = &expect.outputs[0].observed;
    let bad = |message: String| CorpusError::Expectation {
        path: corpus::expectation_path(&fixture.path),
        message,
    };
    let mut req = AnalysisRequest::new(
        observed.parse().map_err(|e| bad(format!("{e}")))?,
        fixture.prior.clone(),
    );
    req.public = expect.public.parse().map_err(|e| bad(format!("{e}")))?;
    req.engine = engine;
    req.unroll = expect.unroll;
    req.precision = BENCH_PRECISION;
    Ok(req)
}

/// Every applicable (program, engine) pair in the shipped corpus.
pub fn corpus_workloads() -> Result<Vec<Workload>, CorpusError> {
    let mut out = Vec::new();
    for path in corpus::list_programs(&corpus_dir())? {
        let fixture = corpus::load_fixture(&path)?;
        let expect = corpus::read_expectation(&path)?;
        if expect.outputs.is_empty() {
            continue;
        }
        for engine in [Engine::Oracle, Engine::CnfCount, Engine::Rmc] {
            if engine == Engine::CnfCount && cnf_unsupported(&fixture.program, expect.unroll).is_some() {
                continue;
            }
            out.push(Workload {
                name: fixture.name.clone(),
                engine,
                program: fixture.program.clone(),
                request: request(&fixture, &expect, engine)?,
            });
        }
    }
    Ok(out)
}

/// Compares an `n`-bit secret against a public guess bit by bit; the
/// output `1` has a pre-image of size one.
pub fn password_checker(n: usize) -> Program {
    let mut text = format!("proc main\n  in secret s[{n}], public g[{n}];\n  out ok;\n  ok <- true");
    for i in 0..n {
        text.push_str(&format!(";\n  ok <- ok & !(s[{i}] ^ g[{i}])"));
    }
    text.push_str("\nend\n");
    parse_program(&text).expect("generated program parses")
}

/// Analysis of [`password_checker`] observing a failed guess of all zeros.
pub fn password_request(n: usize, engine: Engine) -> AnalysisRequest {
    let mut req = AnalysisRequest::new(Bits::from_value(1, 0), Prior::uniform(n));
    req.public = Bits::from_value(n, 0);
    req.engine = engine;
    req
}

#[cfg(test)]
mod tests {
    use super::*;
    use dynleak_core::analysis::analyze;
    use dynleak_core::Measure;

    #[test]
    fn corpus_workloads_run() {
        let ws = corpus_workloads().unwrap();
        assert!(ws.len() >= 30);
        for w in &ws {
            analyze(&w.program, &w.request).unwrap_or_else(|e| panic!("{}: {e}", w.name));
        }
    }

    #[test]
    fn password_checker_leaks_little_on_failure() {
        let n = 10;
        let r = analyze(&password_checker(n), &password_request(n, Engine::All)).unwrap();
        assert_eq!(r.preimage_size, (1 << n) - 1);
        let q = r.measure(Measure::Qif1).unwrap();
        assert!(q.bits > 0.0 && q.bits < 0.002);
    }
}
