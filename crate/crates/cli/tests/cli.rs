use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pbb-spp"))
}

fn topology(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/topologies")
        .join(format!("{name}.toml"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn pbb-spp")
}

fn generate(dir: &Path, items: u32, vars: u32, p: &str, seed: u32) -> PathBuf {
    let out = run(bin()
        .args([
            "generate",
            "--items",
            &items.to_string(),
            "--vars",
            &vars.to_string(),
            "--p",
            p,
        ])
        .args(["--seed", &seed.to_string(), "--out-dir"])
        .arg(dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

/// Parses CSV output into header-keyed rows.
fn rows(stdout: &[u8]) -> Vec<Vec<(String, String)>> {
    let text = String::from_utf8_lossy(stdout);
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().expect("header").split(',').map(str::to_string).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

fn field<'a>(row: &'a [(String, String)], key: &str) -> &'a str {
    &row.iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("no column {key}"))
        .1
}

fn solve(inst: &Path, extra: &[&str]) -> Output {
    run(bin().arg("solve").arg(inst).args(extra))
}

#[test]
fn generate_names_file_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let path = generate(dir.path(), 30, 90, "0.07", 1);
    assert_eq!(path.file_name().unwrap(), "I30-90-0.07-1.spp");
    let first = std::fs::read(&path).unwrap();
    generate(dir.path(), 30, 90, "0.07", 1);
    assert_eq!(first, std::fs::read(&path).unwrap());
    let other = generate(dir.path(), 30, 90, "0.07", 2);
    assert_ne!(first, std::fs::read(other).unwrap());
}

#[test]
fn probability_out_of_range_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = run(bin()
        .args(["generate", "--items", "10", "--vars", "20", "--p", "1.2", "--out-dir"])
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn sequential_and_parallel_agree() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), 30, 90, "0.07", 1);
    let seq = solve(&inst, &[]);
    assert_eq!(seq.status.code(), Some(0));
    let seq_cost = field(&rows(&seq.stdout)[0], "best_cost").to_string();
    assert!(!seq_cost.is_empty());
    let rio = topology("rio");
    let rio = rio.to_str().unwrap();
    for extra in [
        vec!["--topology", rio],
        vec!["--topology", rio, "--deterministic-scheduler", "--seed", "3"],
        vec!["--topology", rio, "--transport", "socket"],
        vec!["--topology", rio, "--no-balance", "--deterministic-scheduler"],
    ] {
        let out = solve(&inst, &extra);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{extra:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let row = &rows(&out.stdout)[0];
        assert_eq!(field(row, "best_cost"), seq_cost, "{extra:?}");
        assert_eq!(field(row, "threads"), "8");
    }
}

#[test]
fn missing_topology_is_an_error() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), 10, 20, "0.2", 0);
    let out = solve(&inst, &["--topology", dir.path().join("none.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.toml"));
    assert!(out.stdout.is_empty());
}

#[test]
fn list_limit_does_not_change_the_optimum() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), 30, 100, "0.06", 4);
    let rio = topology("rio");
    let cost = |limit: &str| {
        let out = solve(
            &inst,
            &[
                "--topology",
                rio.to_str().unwrap(),
                "--deterministic-scheduler",
                "--list-limit",
                limit,
            ],
        );
        assert_eq!(out.status.code(), Some(0));
        field(&rows(&out.stdout)[0], "best_cost").to_string()
    };
    assert_eq!(cost("1MB"), cost("9MB"));
    assert_eq!(cost("4KB"), cost("9MB"));
}

#[test]
fn infeasible_instance_exits_three() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("gap.spp");
    std::fs::write(&inst, "2 3\n5 1 0\n7 1 1\n").unwrap();
    let out = solve(&inst, &[]);
    assert_eq!(out.status.code(), Some(3));
    let row = &rows(&out.stdout)[0];
    assert_eq!(field(row, "status"), "infeasible");
    assert_eq!(field(row, "instance"), "gap");
    let single = topology("single");
    let out = solve(&inst, &["--topology", single.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn resource_and_cutoff_exit_codes() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), 30, 90, "0.07", 1);
    assert_eq!(solve(&inst, &["--node-limit", "3"]).status.code(), Some(4));
    let rio = topology("rio");
    let out = solve(
        &inst,
        &[
            "--topology",
            rio.to_str().unwrap(),
            "--deterministic-scheduler",
            "--node-limit",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    let out = solve(&inst, &["--cutoff", "1"]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(field(&rows(&out.stdout)[0], "best_cost"), "");
}

#[test]
fn bench_emits_repetitions_and_aggregates() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), 30, 90, "0.07", 1);
    let rio = topology("rio");
    let out = run(bin()
        .arg("bench")
        .arg(&inst)
        .args([
            "--topology",
            rio.to_str().unwrap(),
            "--deterministic-scheduler",
            "--repetitions",
            "3",
        ])
        .args(["--list-limits", "64KB,1MB", "--mode", "both", "--seq-baseline"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&out.stdout);
    assert_eq!(rows.len(), 2 * 2 * (3 + 1));
    let aggregates: Vec<_> = rows.iter().filter(|r| field(r, "repetition") == "aggregate").collect();
    assert_eq!(aggregates.len(), 4);
    for agg in &aggregates {
        assert!(!field(agg, "paired_un_factor").is_empty());
        assert!(field(agg, "speedup").parse::<f64>().unwrap() > 0.0);
    }
    for chunk in rows.chunks(4) {
        let nodes: Vec<_> = chunk
            .iter()
            .map(|r| field(r, "total_nodes").parse::<f64>().unwrap())
            .collect();
        assert!(nodes.windows(2).all(|w| w[0] == w[1]), "{nodes:?}");
        assert!(chunk.iter().all(|r| field(r, "best_cost") == "297"));
    }
}

#[test]
fn bench_presets_expand() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), 12, 30, "0.15", 0);
    let single = topology("single");
    let out = run(bin().arg("bench").arg(&inst).args([
        "--topology",
        single.to_str().unwrap(),
        "--deterministic-scheduler",
        "--repetitions",
        "1",
        "--list-limits",
        "sweep8",
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let limits: Vec<_> = rows(&out.stdout)
        .iter()
        .map(|r| field(r, "list_limit").to_string())
        .collect();
    assert_eq!(limits, ["1MB", "1MB", "3MB", "3MB", "6MB", "6MB", "8MB", "8MB"]);
}

#[test]
fn report_rerenders_json() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), 30, 90, "0.07", 1);
    let rio = topology("rio");
    let json = dir.path().join("run.json");
    let base = ["--topology", rio.to_str().unwrap(), "--deterministic-scheduler"];
    let out = solve(&inst, &[&base[..], &["--json", "-o", json.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(0));
    let csv = solve(&inst, &base);
    let again = run(bin().arg("report").arg(&json));
    assert!(again.status.success());
    assert_eq!(again.stdout, csv.stdout);

    let threads = run(bin().arg("report").arg(&json).arg("--threads"));
    assert_eq!(rows(&threads.stdout).len(), 8);

    let value: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(value["best_cost"], 297);
}
