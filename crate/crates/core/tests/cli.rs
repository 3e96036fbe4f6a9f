use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;

const SCHEMA: &str = r#"{"attributes":[
    {"name":"sex","kind":"categorical","categories":["f","m"]},
    {"name":"region","kind":"categorical","categories":["n","s","e","w"]},
    {"name":"age","kind":"numeric","min":0,"max":100},
    {"name":"income","kind":"numeric"}]}"#;

fn privgsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privgsd"))
        .args(args)
        .env_remove("PRIVGSD_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: tempfile::TempDir,
    schema: PathBuf,
    data: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let schema = dir.path().join("schema.json");
        std::fs::write(&schema, SCHEMA).unwrap();
        let mut csv = String::from("sex,region,age,income\n");
        // deterministic pseudo-random rows
        let mut x: u64 = 12345;
        for _ in 0..120 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let r = x >> 33;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                ["f", "m"][(r % 2) as usize],
                ["n", "s", "e", "w"][((r >> 3) % 4) as usize],
                (r >> 5) % 101,
                20_000 + (r >> 9) % 80_000
            ));
        }
        let data = dir.path().join("data.csv");
        std::fs::write(&data, csv).unwrap();
        Self { dir, schema, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn generate(&self, out: &Path, extra: &[&str]) -> Output {
        let mut args = vec![
            "generate",
            "--data",
            self.data.to_str().unwrap(),
            "--schema",
            self.schema.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--rows",
            "40",
            "--generations",
            "200",
            "--seed",
            "11",
        ];
        args.extend_from_slice(extra);
        privgsd(&args)
    }
}

fn manifest(out: &Path) -> Json {
    let mut p = out.as_os_str().to_owned();
    p.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn metric(text: &str, name: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(name).map(|v| v.trim().parse::<f64>().unwrap()))
        .unwrap_or_else(|| panic!("no {name} in {text}"))
}

#[test]
fn missing_schema_is_a_usage_error_naming_the_path() {
    let f = Fixture::new();
    let missing = f.path("no_such_schema.json");
    let o = privgsd(&[
        "generate", "--data", f.data.to_str().unwrap(), "--schema", missing.to_str().unwrap(), "--queries",
        "cat-marginals:k=2", "--rho", "1", "--out", f.path("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_schema.json"), "{}", stderr(&o));
}

#[test]
fn bad_flags_are_usage_errors() {
    let f = Fixture::new();
    let out = f.path("o.csv");
    assert_eq!(f.generate(&out, &["--queries", "trees:k=2", "--rho", "1"]).status.code(), Some(2));
    assert_eq!(f.generate(&out, &["--queries", "cat-marginals:k=2"]).status.code(), Some(2));
    assert_eq!(
        f.generate(&out, &["--queries", "cat-marginals:k=2", "--rho", "1", "--epsilon", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(f.generate(&out, &["--queries", "cat-marginals:k=2", "--rho", "1", "--p-mut", "0", "--p-cross", "0"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_1_naming_the_stage() {
    let f = Fixture::new();
    let o = f.generate(&f.path("o.csv"), &["--queries", "cat-marginals:k=5", "--rho", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("build workloads"), "{}", stderr(&o));
}

#[test]
fn adaptive_manifest_records_the_budget_split() {
    let f = Fixture::new();
    let out = f.path("syn.csv");
    let o = f.generate(
        &out,
        &["--queries", "cat-marginals:k=2", "--mode", "adaptive", "--rho", "1", "--T", "25", "--S", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    let entries = m["ledger"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 50);
    assert!(entries.iter().all(|e| e["rho"].as_f64() == Some(0.02)));
    assert_eq!(m["ledger"]["spent_rho"].as_f64(), Some(1.0));
    assert_eq!(m["rounds"].as_array().unwrap().len(), 25);
}

#[test]
fn epsilon_budget_is_converted_to_rho() {
    let f = Fixture::new();
    let out = f.path("syn.csv");
    let o = f.generate(
        &out,
        &["--queries", "cat-marginals:k=1", "--mode", "oneshot", "--epsilon", "2", "--delta", "1e-6"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    let eps = m["ledger"]["epsilon"].as_f64().unwrap();
    let rho = m["ledger"]["spent_rho"].as_f64().unwrap();
    assert!((eps - 2.0).abs() < 1e-9, "{eps}");
    assert!((rho + 2.0 * (rho * 1e6f64.ln()).sqrt() - 2.0).abs() < 1e-9);
}

#[test]
fn generation_is_reproducible_and_eval_replays_it() {
    let f = Fixture::new();
    let flags = [
        "--queries", "cat-marginals:k=2", "--queries", "binary-tree:k=2,levels=3", "--queries", "prefixes:m=30",
        "--queries", "halfspaces:m=30", "--rho", "0.5", "--T", "3", "--S", "2",
    ];
    let (a, b) = (f.path("a.csv"), f.path("b.csv"));
    assert!(f.generate(&a, &flags).status.success());
    let o = f.generate(&b, &flags);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let mut wm = b.as_os_str().to_owned();
    wm.push(".workloads.json");
    let e = privgsd(&[
        "eval", "--original", f.data.to_str().unwrap(), "--synthetic", b.to_str().unwrap(), "--schema",
        f.schema.to_str().unwrap(), "--workload-manifest", wm.to_str().unwrap(), "--per-workload",
    ]);
    assert!(e.status.success(), "{}", stderr(&e));
    let m = manifest(&b);
    assert_eq!(metric(&stdout(&e), "max_error"), m["errors"]["max_error"].as_f64().unwrap());
    assert_eq!(metric(&stdout(&e), "avg_error"), m["errors"]["avg_error"].as_f64().unwrap());
    assert_eq!(metric(&stdout(&o), "max_error"), metric(&stdout(&e), "max_error"));
    assert!(stdout(&e).contains("bt[sex,age]"));

    // regenerating the random families from the same seed gives the same workloads
    let q = privgsd(&[
        "eval", "--original", f.data.to_str().unwrap(), "--synthetic", b.to_str().unwrap(), "--schema",
        f.schema.to_str().unwrap(), "--queries", "cat-marginals:k=2", "--queries", "binary-tree:k=2,levels=3",
        "--queries", "prefixes:m=30", "--queries", "halfspaces:m=30", "--seed", "11",
    ]);
    assert_eq!(stdout(&q), stdout(&e).lines().take(2).map(|l| format!("{l}\n")).collect::<String>());
}

#[test]
fn eval_of_identical_files_is_zero() {
    let f = Fixture::new();
    let o = privgsd(&[
        "eval", "--original", f.data.to_str().unwrap(), "--synthetic", f.data.to_str().unwrap(), "--schema",
        f.schema.to_str().unwrap(), "--queries", "cat-marginals:k=2", "--queries", "prefixes:m=50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(metric(&stdout(&o), "max_error"), 0.0);
    assert_eq!(metric(&stdout(&o), "avg_error"), 0.0);
}

#[test]
fn malformed_workload_manifest_names_the_field() {
    let f = Fixture::new();
    let out = f.path("syn.csv");
    assert!(f.generate(&out, &["--queries", "cat-marginals:k=2", "--rho", "1", "--T", "2"]).status.success());
    let mut wm = out.as_os_str().to_owned();
    wm.push(".workloads.json");
    let text = std::fs::read_to_string(&wm).unwrap();
    let broken = f.path("broken.json");
    std::fs::write(&broken, text.replacen("\"region\"", "\"regoin\"", 1)).unwrap();
    let o = privgsd(&[
        "eval", "--original", f.data.to_str().unwrap(), "--synthetic", out.to_str().unwrap(), "--schema",
        f.schema.to_str().unwrap(), "--workload-manifest", broken.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("workloads[") && err.contains("feature") && err.contains("regoin"), "{err}");
}

#[test]
fn eval_rejects_synthetic_file_with_missing_column() {
    let f = Fixture::new();
    let bad = f.path("bad.csv");
    std::fs::write(&bad, "sex,region,age\nf,n,3\n").unwrap();
    let o = privgsd(&[
        "eval", "--original", f.data.to_str().unwrap(), "--synthetic", bad.to_str().unwrap(), "--schema",
        f.schema.to_str().unwrap(), "--queries", "cat-marginals:k=1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("income"), "{}", stderr(&o));
}

#[test]
fn trace_file_has_one_line_per_generation() {
    let f = Fixture::new();
    let out = f.path("syn.csv");
    let o = f.generate(&out, &["--queries", "cat-marginals:k=2", "--mode", "oneshot", "--rho", "1", "--trace"]);
    assert!(o.status.success());
    let mut tp = out.as_os_str().to_owned();
    tp.push(".trace.jsonl");
    let trace = std::fs::read_to_string(tp).unwrap();
    let generations = manifest(&out)["rounds"][0]["generations"].as_u64().unwrap();
    assert_eq!(trace.lines().count() as u64, generations);
    let first: Json = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["generation"], 1);
}

#[test]
fn demo_sigmoid_reports_the_contrast() {
    let o = privgsd(&["demo-sigmoid"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("true prefix error=0.5\n"), "{text}");
    let gsd_line = text.lines().find(|l| l.starts_with("genetic optimizer")).unwrap();
    let err: f64 = gsd_line.rsplit('=').next().unwrap().parse().unwrap();
    assert!(err <= 0.05, "{text}");

    let frozen = privgsd(&["demo-sigmoid", "--lr", "0", "--n", "10", "--temps", "2,4"]);
    assert!(frozen.status.success());
    assert!(stdout(&frozen).contains("surrogate_loss=0e0"));
}
