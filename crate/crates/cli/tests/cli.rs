use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const ISHIGAMI_HEAD: &str = r#"
benchmark = "ishigami"
rt_values = [0.125]

[levels]
min = 2
max = 4

[validation]
count = 500
seed = 3

[reference]
kind = "analytic"
a = 7.0
b = 0.1
"#;

const ISHIGAMI_MODELS: &str = r#"
[[models]]
id = "hf"
builtin = "ishigami"
fidelity = "hf"

[[models]]
id = "lf1"
builtin = "ishigami"
fidelity = "lf1"

[[schemes]]
kind = "hf"
hf = "hf"

[[schemes]]
kind = "mf"
hf = "hf"
lf = "lf1"
q = 1
"#;

const BOREHOLE: &str = r#"
benchmark = "borehole"
rt_values = [0.125]

[levels]
min = 1
max = 3

[validation]
count = 2000
seed = 5

[reference]
kind = "pce"
model = "hf"
w = 4

[[models]]
id = "hf"
builtin = "borehole"
fidelity = "hf"

[[models]]
id = "lf"
builtin = "borehole"
fidelity = "lf1"

[[schemes]]
kind = "hf"
hf = "hf"

[[schemes]]
kind = "mf"
hf = "hf"
lf = "lf"
q = 1
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Run {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("study.toml"), config).unwrap();
        Run { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn script(&self, name: &str, body: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        }
        path
    }

    fn cmd(&self) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mfsobol"));
        c.env_remove("MFSOBOL_CONFIG")
            .env_remove("MFSOBOL_OUT")
            .env_remove("MFSOBOL_SEED")
            .env_remove("MFSOBOL_THREADS")
            .arg("--config")
            .arg(self.path("study.toml"))
            .arg("--out")
            .arg(self.path("out"));
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd().args(args).output().unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path("out").join(name)).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"))
}

#[test]
fn sobol_ishigami_hf_level_six() {
    let run = Run::new(&format!("{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}"));
    ok(run.run(&["sobol", "--scheme", "hf", "--w", "6"]));

    let report: Value = serde_json::from_str(&run.read("sobol_hf_w6.json")).unwrap();
    assert_eq!(report["w"], 6);
    let total: Vec<f64> = report["total"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (got, want) in total.iter().zip([0.558, 0.442, 0.244]) {
        assert!((got - want).abs() < 2e-3, "{total:?}");
    }
    let first: Vec<f64> = report["first_order"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (got, want) in first.iter().zip([0.314, 0.442, 0.0]) {
        assert!((got - want).abs() < 2e-3, "{first:?}");
    }
    let subset_sum: f64 = report["subsets"].as_array().unwrap().iter().map(|s| s["index"].as_f64().unwrap()).sum();
    assert!((subset_sum - 1.0).abs() < 1e-10);

    let (header, rows) = csv_rows(&run.read("sobol_hf_w6_totals.csv"));
    assert_eq!(header, ["variable", "first_order", "total"]);
    assert_eq!(rows.len(), 3);
    let t1: f64 = rows[0][2].parse().unwrap();
    assert!((t1 - total[0]).abs() < 1e-9);
}

#[test]
fn sobol_mf_writes_named_report() {
    let run = Run::new(&format!("{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}"));
    ok(run.run(&["sobol", "--scheme", "mf", "--w", "4", "--q", "2"]));
    let report: Value = serde_json::from_str(&run.read("sobol_mf_w4_q2.json")).unwrap();
    assert_eq!(report["q"], 2);
    assert!(report["scheme"].as_str().unwrap().starts_with("MF"));
}

#[test]
fn converge_borehole_rows() {
    let run = Run::new(BOREHOLE);
    let out = ok(run.run(&["converge"]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("convergence.csv"));

    let (header, rows) = csv_rows(&run.read("convergence.csv"));
    for name in ["scheme", "w", "q", "n_hf", "n_lf", "n_tot", "mare", "r2", "e", "e_t"] {
        column(&header, name);
    }
    let (w, e_t, scheme) = (column(&header, "w"), column(&header, "e_t"), column(&header, "scheme"));
    let pick = |prefix: &str, level: &str| -> f64 {
        rows.iter().find(|r| r[scheme].starts_with(prefix) && r[w] == level).unwrap()[e_t].parse().unwrap()
    };
    // three HF rows plus MF rows for w = 1..3 with q = 1 at a single ratio
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().filter(|r| r[scheme].starts_with("MF")).all(|r| r[w] != "0"));
    assert!(pick("HF", "3") < pick("HF", "2"));
    assert!(pick("MF", "3") < pick("HF", "2"));
}

#[test]
fn decay_series_and_identical_pair() {
    let config = BOREHOLE.replace("fidelity = \"lf1\"", "fidelity = \"hf\"");
    let run = Run::new(&config);
    ok(run.run(&["decay", "--scheme", "mf", "--w", "3", "--q", "1"]));
    let (header, rows) = csv_rows(&run.read("decay_mf_w3_q1.csv"));
    assert_eq!(header, ["provenance", "rank", "abs_coeff"]);
    let labels: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels.into_iter().collect::<Vec<_>>(), ["CR", "HF", "LF"]);
    for r in rows.iter().filter(|r| r[0] == "CR") {
        assert!(r[2].parse::<f64>().unwrap() <= 1e-12, "{r:?}");
    }
    let hf_ranks: Vec<usize> = rows.iter().filter(|r| r[0] == "HF").map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(hf_ranks[0], 1);
    assert!(hf_ranks.windows(2).all(|p| p[1] == p[0] + 1));
}

#[test]
fn mc_check_writes_table() {
    let run = Run::new(&format!("{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}"));
    ok(run.run(&["mc-check", "--model", "hf", "--samples", "4096", "--w", "6"]));
    let (header, rows) = csv_rows(&run.read("mc_check.csv"));
    assert_eq!(header[0], "variable");
    assert_eq!(rows.len(), 3);
    let (pce_t, mc_t, se_t) = (column(&header, "pce_total"), column(&header, "mc_total"), column(&header, "mc_total_se"));
    for r in &rows {
        let (a, b, se): (f64, f64, f64) = (r[pce_t].parse().unwrap(), r[mc_t].parse().unwrap(), r[se_t].parse().unwrap());
        assert!(se > 0.0);
        assert!((a - b).abs() < 5.0 * se, "{r:?}");
    }
}

#[test]
fn seed_flag_and_env_agree() {
    let run = Run::new(&format!("{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}"));
    let args = ["mc-check", "--samples", "512", "--w", "3"];
    ok(run.cmd().arg("--seed").arg("9").args(args).output().unwrap());
    let by_flag = run.read("mc_check.csv");
    ok(run.cmd().env("MFSOBOL_SEED", "9").args(args).output().unwrap());
    assert_eq!(run.read("mc_check.csv"), by_flag);
    ok(run.cmd().arg("--seed").arg("10").args(args).output().unwrap());
    assert_ne!(run.read("mc_check.csv"), by_flag);
}

#[test]
fn config_from_environment() {
    let run = Run::new(&format!("{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}"));
    let out = Command::new(env!("CARGO_BIN_EXE_mfsobol"))
        .env("MFSOBOL_CONFIG", run.path("study.toml"))
        .env("MFSOBOL_OUT", run.path("env_out"))
        .args(["sobol", "--scheme", "hf", "--w", "2"])
        .output()
        .unwrap();
    ok(out);
    assert!(run.path("env_out").join("sobol_hf_w2.json").exists());
}

#[test]
fn default_output_is_relative_to_config() {
    let run = Run::new(&format!("output = \"results\"\n{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}"));
    let out = Command::new(env!("CARGO_BIN_EXE_mfsobol"))
        .env_remove("MFSOBOL_OUT")
        .arg("--config")
        .arg(run.path("study.toml"))
        .args(["sobol", "--scheme", "hf", "--w", "2"])
        .output()
        .unwrap();
    ok(out);
    assert!(run.path("results").join("sobol_hf_w2.json").exists());
}

#[test]
fn configuration_errors_exit_two() {
    let no_schemes = format!("{ISHIGAMI_HEAD}{}", ISHIGAMI_MODELS.split("[[schemes]]").next().unwrap());
    let run = Run::new(&no_schemes);
    let out = run.run(&["converge"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scheme"));

    let run = Run::new(&format!("{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}\nunknown_key = 1\n"));
    assert_eq!(code(&run.run(&["converge"])), 2);

    let run = Run::new(&format!("{ISHIGAMI_HEAD}{ISHIGAMI_MODELS}"));
    assert_eq!(code(&run.run(&["sobol", "--scheme", "mf", "--w", "1", "--q", "2"])), 2);
    assert_eq!(code(&run.run(&["sobol", "--scheme", "hf", "--w", "2", "--hf", "nope"])), 2);

    let missing = Command::new(env!("CARGO_BIN_EXE_mfsobol"))
        .env_remove("MFSOBOL_CONFIG")
        .args(["converge"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);
}

fn external_config(script: &Path) -> String {
    format!(
        "{ISHIGAMI_HEAD}\n[[models]]\nid = \"hf\"\ncommand = \"{}\"\nprotocol = \"streaming\"\nfidelity = \"hf\"\n\n[[schemes]]\nkind = \"hf\"\nhf = \"hf\"\n",
        script.display()
    )
}

#[test]
fn constant_model_exits_four() {
    let run = Run::new("");
    let script = run.script("const.sh", "while read line; do echo 1.0; done");
    fs::write(run.path("study.toml"), external_config(&script)).unwrap();
    let out = run.run(&["sobol", "--scheme", "hf", "--w", "2"]);
    assert_eq!(code(&out), 4, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failing_model_exits_three() {
    let run = Run::new("");
    let script = run.script("bad.sh", "while read line; do echo nan; done");
    fs::write(run.path("study.toml"), external_config(&script)).unwrap();
    let out = run.run(&["sobol", "--scheme", "hf", "--w", "2"]);
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));

    let script = run.script("dies.sh", "read line\nexit 1");
    fs::write(run.path("study.toml"), external_config(&script)).unwrap();
    assert_eq!(code(&run.run(&["converge"])), 3);
}
