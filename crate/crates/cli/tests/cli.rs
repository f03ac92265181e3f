use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).display().to_string()
}

fn dynleak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynleak"))
        .args(args)
        .output()
        .expect("failed to spawn dynleak")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn measure<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["measures"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["measure"] == name)
        .unwrap_or_else(|| panic!("no {name} in {report}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn analyze_example_1_1() {
    let r = json(&dynleak(&[
        "analyze",
        "--program",
        &fixture("example1_1.qbp"),
        "--out",
        "00001000",
    ]));
    assert_eq!(r["engines"].as_array().unwrap().len(), 3);
    let q1 = measure(&r, "QIF1");
    assert_eq!(q1["core_num"], "241");
    assert_eq!(q1["core_den"], "256");
    assert!((q1["bits"].as_f64().unwrap() - 0.0871).abs() < 1e-3);
    assert_eq!(r["preimage_size"], 241);
}

#[test]
fn analyze_example_2_with_prior() {
    let r = json(&dynleak(&[
        "analyze",
        "--program",
        &fixture("example2.qbp"),
        "--prior",
        &fixture("example2.prior"),
        "--out",
        "1",
        "--measures",
        "qif1,qif2,qifdyn,bel",
        "--secret",
        "1",
    ]));
    assert_eq!(measure(&r, "QIF2")["core_num"], "27");
    assert_eq!(measure(&r, "QIF1")["bits"], 0.0);
    let bel = measure(&r, "BEL")["bits"].as_f64().unwrap();
    assert!((bel - 1.585).abs() < 1e-3);
}

#[test]
fn analyze_single_engines_and_public_inputs() {
    for engine in ["oracle", "cnf-count", "rmc"] {
        let r = json(&dynleak(&[
            "analyze",
            "--program",
            &fixture("example4_1.qbp"),
            "--pub",
            "0001",
            "--out",
            "01",
            "--engine",
            engine,
        ]));
        assert_eq!(r["engines"][0]["engine"], engine);
        assert_eq!(r["preimage_size"], 2);
    }
}

#[test]
fn inconsistent_observation_exits_2() {
    let out = dynleak(&[
        "analyze",
        "--program",
        &fixture("example1_1.qbp"),
        "--out",
        "11111111",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("11111111"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(
        code(&dynleak(&["analyze", "--program", &fixture("example2.qbp")])),
        1
    );
    assert_eq!(
        code(&dynleak(&[
            "analyze",
            "--program",
            &fixture("example2.qbp"),
            "--out",
            "10"
        ])),
        1
    );
    assert_eq!(
        code(&dynleak(&[
            "analyze",
            "--program",
            "no/such/file.qbp",
            "--out",
            "1"
        ])),
        1
    );
    assert_eq!(code(&dynleak(&["frobnicate"])), 1);
    assert_eq!(code(&dynleak(&["--help"])), 0);
}

#[test]
fn loops_without_bound_are_refused_by_cnf() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "loop.qbp",
        "proc main\n  in secret s;\n  out o;\n  local i;\n  while !i do o <- s; i <- true end\nend\n",
    );
    let out = dynleak(&["analyze", "--program", &p, "--out", "1", "--engine", "cnf-count"]);
    assert_eq!(code(&out), 1);
    let r = json(&dynleak(&[
        "analyze",
        "--program",
        &p,
        "--out",
        "1",
        "--engine",
        "cnf-count",
        "--unroll",
        "2",
    ]));
    assert_eq!(r["measures"][0]["bits"], 1.0);
    assert_eq!(
        code(&dynleak(&[
            "analyze",
            "--program",
            &p,
            "--out",
            "1",
            "--unroll",
            "0"
        ])),
        1
    );
    let two = write(
        dir.path(),
        "two.qbp",
        "proc main\n  in secret s;\n  out o;\n  local i, j;\n  \
         while !j do if i then j <- true else i <- true end; o <- s end\nend\n",
    );
    let out = dynleak(&[
        "analyze",
        "--program",
        &two,
        "--out",
        "1",
        "--engine",
        "cnf-count",
        "--unroll",
        "1",
    ]);
    assert_eq!(code(&out), 4);
    let r = json(&dynleak(&[
        "analyze",
        "--program",
        &two,
        "--out",
        "1",
        "--unroll",
        "2",
    ]));
    assert_eq!(r["engines"].as_array().unwrap().len(), 3);
}

#[test]
fn count_dimacs() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "a.cnf", "c ind 1 2 0\np cnf 3 2\n1 2 0\n-1 3 0\n");
    let out = dynleak(&["count", &f]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "3");
    let unsat = write(dir.path(), "u.cnf", "p cnf 1 2\n1 0\n-1 0\n");
    assert_eq!(stdout(&dynleak(&["count", &unsat])).trim(), "0");
    // Without `c ind` every variable is projected.
    let all = write(dir.path(), "all.cnf", "p cnf 3 1\n1 2 0\n");
    assert_eq!(stdout(&dynleak(&["count", &all])).trim(), "6");
    let models = stdout(&dynleak(&["count", "--models", &f]));
    assert_eq!(models.lines().count(), 4);
    let bad = write(dir.path(), "bad.cnf", "p cnf 2 1\n1 x 0\n");
    assert_eq!(code(&dynleak(&["count", &bad])), 1);
}

#[test]
fn compile_then_count() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("q.cnf").display().to_string();
    let side = json(&dynleak(&[
        "compile",
        "--program",
        &fixture("example1_1.qbp"),
        "--out",
        "00001000",
        "-o",
        &cnf,
    ]));
    assert_eq!(side["inputs"].as_array().unwrap().len(), 8);
    assert_eq!(side["projection"].as_array().unwrap().len(), 8);
    assert!(fs::read_to_string(&cnf).unwrap().contains("c ind"));
    assert_eq!(stdout(&dynleak(&["count", &cnf])).trim(), "241");

    let id = write(
        dir.path(),
        "id.qbp",
        "proc main\n  in secret s;\n  out o;\n  o <- s\nend\n",
    );
    let side = json(&dynleak(&["compile", "--program", &id, "--out", "1", "-o", &cnf]));
    assert_eq!(side["num_vars"], 2);
    assert_eq!(stdout(&dynleak(&["count", &cnf])).trim(), "1");
}

#[test]
fn compile_with_prior_drops_zero_weight_secrets() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("q.cnf").display().to_string();
    let p = fixture("example1.qbp");
    json(&dynleak(&["compile", "--program", &p, "--out", "0", "-o", &cnf]));
    assert_eq!(stdout(&dynleak(&["count", &cnf])).trim(), "3");
    json(&dynleak(&[
        "compile",
        "--program",
        &p,
        "--out",
        "0",
        "--prior",
        &fixture("example1.prior"),
        "-o",
        &cnf,
    ]));
    assert_eq!(stdout(&dynleak(&["count", &cnf])).trim(), "2");
}

#[test]
fn compile_paths_counts_executions() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("q.cnf").display().to_string();
    json(&dynleak(&[
        "compile",
        "--program",
        &fixture("example2.qbp"),
        "--out",
        "1",
        "--paths",
        "-o",
        &cnf,
    ]));
    assert_eq!(stdout(&dynleak(&["count", &cnf])).trim(), "2");
}

#[test]
fn compile_refuses_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("q.cnf").display().to_string();
    let p = root().join("corpus/shift_recursion.qbp").display().to_string();
    let out = dynleak(&["compile", "--program", &p, "--out", "1", "-o", &cnf]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("use the rmc engine"));
}

#[test]
fn oracle_joint_of_identity() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "id.qbp",
        "proc main\n  in secret s[2];\n  out o[2];\n  o[0] <- s[0];\n  o[1] <- s[1]\nend\n",
    );
    let r = json(&dynleak(&["oracle", "--program", &p]));
    let joint = r["joint"].as_array().unwrap();
    assert_eq!(joint.len(), 4);
    for e in joint {
        assert_eq!(e["secret"], e["output"]);
        assert_eq!(e["p"], "1/4");
    }
    assert_eq!(r["p_output"]["10"], "1/4");
}

#[test]
fn bench_shipped_corpus() {
    let corpus = root().join("corpus").display().to_string();
    let out = dynleak(&["bench", &corpus]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).lines().skip(1).all(|l| l.ends_with("ok")));
    let r = json(&dynleak(&["bench", "--json", &corpus]));
    assert!(r.as_array().unwrap().len() >= 10);
}

#[test]
fn bench_reports_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["example2.qbp", "example2.prior", "example2.expect.json"] {
        fs::copy(root().join("corpus").join(name), dir.path().join(name)).unwrap();
    }
    let d = dir.path().display().to_string();
    assert_eq!(code(&dynleak(&["bench", &d])), 0);
    let expect = dir.path().join("example2.expect.json");
    let text = fs::read_to_string(&expect).unwrap().replace("27/100", "28/100");
    fs::write(&expect, text).unwrap();
    let out = dynleak(&["bench", &d]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("MISMATCH"));
    assert_eq!(code(&dynleak(&["bench", "--regenerate", &d])), 0);
    assert!(fs::read_to_string(&expect).unwrap().contains("27/100"));
}

#[test]
fn bench_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dynleak(&["bench", &dir.path().display().to_string()])), 0);
}

#[test]
fn rmc_dump_lists_entries() {
    let out = dynleak(&["rmc-dump", "--program", &fixture("example2.qbp")]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("secret 0 entry"));
    assert!(text.contains("secret 1 entry"));
    assert!(text.contains("component 0 main"));
}

#[test]
fn output_is_deterministic_apart_from_timings() {
    let args = [
        "analyze",
        "--program",
        &fixture("dpi_p2p1.qbp"),
        "--out",
        "1",
        "--measures",
        "qif1,qif2,staticqif",
    ];
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    assert_eq!(strip(json(&dynleak(&args))), strip(json(&dynleak(&args))));
}
