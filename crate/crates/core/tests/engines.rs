//! Frozen values for the reference examples, checked engine by engine.

mod common;

use common::*;
use dynleak_core::analysis::{analyze, AnalysisError, AnalysisRequest, Engine, ErrorKind};
use dynleak_core::prob::ratio;
use dynleak_core::rmc::{qif_via_rmc, RmcLimits};
use dynleak_core::semantics::{self, run_paths};
use dynleak_core::syntax::parse_program;
use dynleak_core::{Bits, LeakageError, Measure, Prior, RunLimits};

fn request(observed: &str, prior: Prior, engine: Engine) -> AnalysisRequest {
    let mut req = AnalysisRequest::new(b(observed), prior);
    req.engine = engine;
    req
}

const SINGLE: [Engine; 3] = [Engine::Oracle, Engine::CnfCount, Engine::Rmc];

#[test]
fn example_1_1_per_engine() {
    let p = fixture("example1_1.qbp");
    for engine in SINGLE {
        let r = analyze(&p, &request("00001000", Prior::uniform(8), engine)).unwrap();
        assert_eq!(r.engines.len(), 1);
        assert_eq!(r.engines[0].p_output, "241/256", "{engine}");
        assert_eq!(r.preimage_size, 241);
        let q1 = r.measure(Measure::Qif1).unwrap();
        assert_eq!(q1.core, Some(ratio(241, 256)));
        assert!((q1.bits - 0.087_1).abs() < 1e-4);
    }
}

#[test]
fn example_1_1_boundary_outputs() {
    let p = fixture("example1_1.qbp");
    let joint = run_paths(&p, &Prior::uniform(8), &Bits::empty(), &RunLimits::default()).unwrap();
    assert_eq!(joint.outputs().count(), 16);
    assert_eq!(joint.p_output(&Bits::from_value(8, 23)), ratio(1, 256));
    assert!(joint.preimage(&Bits::from_value(8, 24)).is_empty());
    assert!(joint.is_functional());
}

#[test]
fn example_2_per_engine() {
    let p = fixture("example2.qbp");
    let prior = fixture_prior("example2.prior", 1);
    for engine in SINGLE {
        for (o, want) in [("1", "27/100"), ("0", "73/100")] {
            let r = analyze(&p, &request(o, prior.clone(), engine)).unwrap();
            assert_eq!(r.engines[0].p_output, want, "{engine} {o}");
            assert!(r.engines[0].exact);
            assert_eq!(r.measure(Measure::Qif1).unwrap().bits, 0.0);
        }
    }
}

#[test]
fn example_1_zero_prior_secret_is_not_counted() {
    let p = fixture("example1.qbp");
    let prior = fixture_prior("example1.prior", 2);
    for engine in SINGLE {
        let r = analyze(&p, &request("0", prior.clone(), engine)).unwrap();
        let q1 = r.measure(Measure::Qif1).unwrap();
        assert_eq!(q1.core, Some(ratio(1, 8)), "{engine}");
        assert_eq!(q1.bits, 3.0);
    }
}

#[test]
fn example_4_1_public_inputs() {
    let p = fixture("example4_1.qbp");
    for engine in SINGLE {
        let mut req = request("01", Prior::uniform(1), engine);
        req.public = b("0001");
        let r = analyze(&p, &req).unwrap();
        assert_eq!(r.preimage_size, 2, "{engine}");
        assert_eq!(r.measure(Measure::Qif2).unwrap().bits, 0.0);
    }
    // With x = 1 and y = 1 the branches differ: 2 versus 0.
    let pre = semantics::preimage(&p, &b("10"), &b("0101"), &RunLimits::default()).unwrap();
    assert_eq!(pre.into_iter().collect::<Vec<_>>(), vec![b("1")]);
}

#[test]
fn corpus_recursion_values() {
    let text = std::fs::read_to_string(workspace_dir().join("corpus/coin_recursion.qbp")).unwrap();
    let p = parse_program(&text).unwrap();
    let q = qif_via_rmc(
        &p,
        &b("1"),
        &Prior::uniform(2),
        &Bits::empty(),
        20,
        &RmcLimits::default(),
    )
    .unwrap();
    assert!(q.exact);
    assert_eq!(q.qif2.core, Some(ratio(11, 16)));
    assert_eq!(q.preimage.len(), 4);
    let oracle = run_paths(&p, &Prior::uniform(2), &Bits::empty(), &RunLimits::default()).unwrap();
    assert_eq!(oracle.p_output(&b("1")), ratio(11, 16));
}

#[test]
fn unbounded_probabilistic_recursion_within_tolerance() {
    let p = parse_program(
        "proc main\n  in secret s;\n  out o;\n  f(s; o)\nend\n\n\
         proc f\n  in a;\n  out r;\n  local x, y;\n  \
         { f(a; x); f(a; y); r <- x & y } [2/3] { r <- a }\nend\n",
    )
    .unwrap();
    let mut req = request("1", Prior::uniform(1), Engine::Rmc);
    req.precision = 20;
    let r = analyze(&p, &req).unwrap();
    let e = &r.engines[0];
    assert!(!e.exact);
    // p(o = 1) = 1/2 * P[s = 1 reaches 1] = 1/2 * 1/2.
    let got = r.measure(Measure::Qif2).unwrap().core.clone().unwrap();
    let err = ratio(1, 4) - got;
    assert!(err >= ratio(0, 1) && err <= dynleak_core::prob::pow2_neg(20));
}

#[test]
fn engine_all_skips_inapplicable_engines() {
    let p = fixture("noninterferent/ni09_recursion.qbp");
    let k = p.secret_inputs().len();
    let joint = run_paths(&p, &Prior::uniform(k), &Bits::empty(), &RunLimits::default()).unwrap();
    let (o, _) = joint.outputs().next().unwrap();
    let r = analyze(&p, &AnalysisRequest::new(*o, Prior::uniform(k))).unwrap();
    let names: Vec<_> = r.engines.iter().map(|e| e.engine).collect();
    assert_eq!(names, vec![Engine::Oracle, Engine::Rmc]);
    assert!(r.skipped["cnf-count"].contains("rmc"));
}

#[test]
fn inconsistent_observation_is_reported() {
    let p = fixture("example1_1.qbp");
    for engine in [Engine::Oracle, Engine::CnfCount, Engine::Rmc, Engine::All] {
        let err = analyze(&p, &request("11111111", Prior::uniform(8), engine)).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Inconsistent, "{engine}: {err}");
    }
    let err = analyze(&p, &request("0000100", Prior::uniform(8), Engine::Oracle)).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Usage);
    assert!(!matches!(
        err,
        AnalysisError::Leakage(LeakageError::InconsistentObservation(_))
    ));
}

#[test]
fn reports_are_deterministic() {
    let p = fixture("example2.qbp");
    let prior = fixture_prior("example2.prior", 1);
    let mut req = request("1", prior, Engine::All);
    req.measures = Measure::ALL.to_vec();
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    let a = strip(serde_json::to_value(analyze(&p, &req).unwrap()).unwrap());
    let b = strip(serde_json::to_value(analyze(&p, &req).unwrap()).unwrap());
    assert_eq!(a, b);
    assert_eq!(a["measures"][1]["core_num"], "27");
    assert_eq!(a["measures"][1]["core_den"], "100");
}
