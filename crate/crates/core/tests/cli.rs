use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

use chance_adjust::cli::{parse_labels_csv, parse_table_csv};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chance-adjust"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("chance-adjust-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::File::create(&path).unwrap().write_all(contents.as_bytes()).unwrap();
    path
}

#[test]
fn compute_ari_on_identical_partitions() {
    let path = temp_file("t1.csv", "2,0\n0,2\n");
    let v = json(&run(&["compute", "--measure", "ari", "--table", path.to_str().unwrap()]));
    assert_eq!(v["index"], "ari");
    assert!((num(&v["adjusted"]) - 1.0).abs() < 1e-15);
    assert_eq!(v["expected"]["method"], "closed_form");
}

#[test]
fn adjust_scott_pi_exactly() {
    let path = temp_file("t3.csv", "1,1\n0,2\n");
    let p = path.to_str().unwrap();
    let v = json(&run(&["adjust", "--index", "p", "--model", "ind1", "--max", "domain", "--table", p, "--exact"]));
    assert_eq!(v["exact"]["adjusted"], "7/15");
    let f = json(&run(&["adjust", "--index", "p", "--model", "ind1", "--max", "domain", "--table", p]));
    assert!((num(&f["adjusted"]) - 7.0 / 15.0).abs() < 1e-12);
}

#[test]
fn idempotency_counterexample() {
    let v = json(&run(&[
        "check", "--property", "idempotent", "--index", "toy_u1_squared", "--model", "ind2", "--max", "domain",
        "--second-max", "domain", "--u1", "1", "--n", "2", "--c", "0", "--exact",
    ]));
    assert_eq!(v["verdict"], "violated");
    let values = v["witnesses"][0]["values"].as_array().unwrap();
    let get = |name: &str| values.iter().find(|q| q["name"] == name).unwrap()["exact"].clone();
    assert_eq!(get("adjusted"), "-1/5");
    assert_eq!(get("adjusted_twice"), "-1");
}

#[test]
fn negative_count_names_the_cell() {
    let err = parse_table_csv("1,-1\n0,2", false).unwrap_err().to_string();
    assert!(err.contains("(1, 2)"), "{err}");
    let path = temp_file("bad.csv", "1,-1\n0,2\n");
    let out = run(&["compute", "--measure", "ari", "--table", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(1, 2)"));
}

#[test]
fn table_and_label_parsing() {
    let t = parse_table_csv("2,0\n0,2", false).unwrap();
    assert_eq!(t.to_rows(), vec![vec![2, 0], vec![0, 2]]);
    let t = parse_table_csv("a,b\n2,0\n0,2", true).unwrap();
    assert_eq!(t.to_rows(), vec![vec![2, 0], vec![0, 2]]);
    assert!(parse_table_csv("1,2\n3", false).is_err());
    assert!(parse_table_csv("1.5,2", false).is_err());
    let t = parse_labels_csv("a,c\na,c\nb,d\nb,d\n", false).unwrap();
    assert_eq!(t.to_rows(), vec![vec![2, 0], vec![0, 2]]);
    assert!(parse_labels_csv("a,c,e\n", false).is_err());
}

#[test]
fn labels_input_and_padding() {
    let path = temp_file("labels.csv", "x,y\na,c\na,c\nb,d\nb,d\n");
    let v = json(&run(&["adjust", "--index", "q_joint", "--labels", path.to_str().unwrap(), "--header", "--max", "pair-mean"]));
    assert!((num(&v["adjusted"]) - 1.0).abs() < 1e-15);
    let path = temp_file("one.csv", "3\n");
    let v = json(&run(&["expect", "--index", "p", "--model", "fixed_uniform", "--table", path.to_str().unwrap(), "--rows", "2", "--cols", "2", "--exact"]));
    assert_eq!(v["expected"]["exact"], "1/2");
}

#[test]
fn exit_codes() {
    let path = temp_file("t.csv", "2,1\n1,2\n");
    let p = path.to_str().unwrap();
    assert_eq!(run(&["compute", "--measure", "nope", "--table", p]).status.code(), Some(2));
    assert_eq!(run(&["compute", "--measure", "ari"]).status.code(), Some(2));
    assert_eq!(run(&["compute", "--measure", "ari", "--table", "/nonexistent/t.csv"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    // Monte Carlo needs a seed.
    assert_eq!(run(&["expect", "--index", "p", "--table", p, "--method", "monte-carlo"]).status.code(), Some(2));
    // Over budget without a sampling fallback.
    let out = run(&["adjust", "--index", "q_joint", "--max", "domain", "--table", p, "--budget", "3"]);
    assert_eq!(out.status.code(), Some(3));
    // Irrational square root in exact mode.
    let odd = temp_file("odd.csv", "3,1\n1,2\n");
    let out = run(&["adjust", "--index", "q_joint", "--max", "standardize", "--table", odd.to_str().unwrap(), "--exact"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(run(&["repro", "asymptotic", "--c", "0"]).status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn monte_carlo_output_is_byte_identical() {
    let args = [
        "expect", "--index", "toy_u1_squared", "--model", "ind2", "--u1", "30", "--n", "100", "--method",
        "monte-carlo", "--seed", "11", "--samples", "20000",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["seed"], 11);
    assert_eq!(v["expected"]["method"], "monte_carlo");
    assert!(v["expected"]["stderr"].is_number());
    let c = run(&[&args[..args.len() - 3], &["12", "--samples", "20000"]].concat());
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn floats_use_seventeen_significant_digits() {
    let path = temp_file("t4.csv", "1,1\n0,2\n");
    let out = run(&["compute", "--measure", "cohen_kappa", "--table", path.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"adjusted\": 5.0000000000000000e-1"), "{text}");
}

#[test]
fn help_lists_identifiers_with_provenance() {
    let out = run(&["compute", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["ari", "hari", "cohen_kappa", "scott_pi", "q_joint", "toy_u1_squared", "perm", "ind2", "ind1", "fixed_uniform", "pair-mean"] {
        assert!(text.contains(id), "help lacks {id}");
    }
    assert!(text.contains("Hubert & Arabie"));
}

#[test]
fn repro_commands() {
    let v = json(&run(&["repro", "prop1", "--part", "4", "--u1", "1", "--n", "2", "--exact"]));
    assert_eq!(v["violated"], true);
    assert_eq!(v["quantities"][2]["exact"], "-1");
    let out = run(&["repro", "figure1", "--n-max", "5", "--c", "0,-1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("c,N,u1,AS,A2S,neg_log10_diff,underflow"));
    assert_eq!(text.lines().count(), 1 + 2 * 10);
    let v = json(&run(&["repro", "asymptotic", "--j", "1", "--c", "1", "--n", "1000"]));
    assert!((num(&v[0]["ratio"]) - num(&v[0]["limit"])).abs() / num(&v[0]["limit"]) < 0.05);

    let csv = std::env::temp_dir().join(format!("fig-{}.csv", std::process::id()));
    let script = std::env::temp_dir().join(format!("fig-{}.py", std::process::id()));
    let out = run(&[
        "repro", "figure1", "--n-max", "4", "--out", csv.to_str().unwrap(), "--plot-script", script.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 3 * 6);
    assert!(std::fs::read_to_string(&script).unwrap().contains("neg_log10_diff"));
}

#[test]
fn check_properties_via_cli() {
    let path = temp_file("t5.csv", "2,1\n1,2\n");
    let p = path.to_str().unwrap();
    for prop in ["constancy", "mean-zero", "idempotent", "nested-collapse"] {
        let v = json(&run(&["check", "--property", prop, "--index", "q_joint", "--max", "pair-mean", "--table", p, "--exact"]));
        assert_eq!(v["verdict"], "holds", "{prop}");
    }
    let v = json(&run(&["check", "--property", "variance-one", "--index", "q_joint", "--table", p]));
    assert_eq!(v["verdict"], "holds");
    let v = json(&run(&["check", "--property", "linear-equiv", "--index", "rand", "--max", "pair-mean", "--table", p]));
    assert_eq!(v["verdict"], "holds");
    let out = run(&["check", "--property", "linear-equiv", "--index", "p", "--table", p]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&run(&["check", "--property", "mean-zero", "--index", "toy_u1_squared", "--model", "ind2", "--u1", "1", "--n", "2", "--exact"]));
    assert_eq!(v["verdict"], "violated");
}
