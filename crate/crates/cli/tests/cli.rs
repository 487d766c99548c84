use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tunekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tunekit")).args(args).output().expect("binary runs")
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn sphere_config(solvers: Value, budget: usize) -> Value {
    json!({
        "search_space": [
            {"name": "x", "type": "continuous", "bounds": [-2, 2]},
            {"name": "y", "type": "continuous", "bounds": [-2, 2]}
        ],
        "objective": {"type": "builtin", "function": {"name": "sphere"}},
        "budget": {"evaluations": budget, "concurrency": 4},
        "solvers": solvers,
        "seed": 11
    })
}

fn tune(config: &Path, out: &Path) -> Output {
    tunekit(&["tune", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn tune_random_sphere_writes_budget_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &sphere_config(json!([{"type": "random"}]), 20));
    let out = dir.path().join("out");
    let res = tune(&cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(data_rows(&out.join("history.csv")).len(), 20);
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("best objective"), "{stdout}");

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["total"], 20);
    assert!(summary["best_objective"].is_number());
}

#[test]
fn unknown_solver_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &sphere_config(json!([{"type": "annealing"}]), 20));
    let res = tune(&cfg, &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert!(stderr.contains("annealing"), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = tune(&dir.path().join("absent.json"), &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn missing_external_command_yields_failure_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sphere_config(json!([{"type": "random"}]), 6);
    cfg["objective"] = json!({
        "type": "external",
        "command": ["/definitely/not/a/real/command"],
        "timeout_ms": 2000
    });
    let path = write_json(dir.path(), "run.json", &cfg);
    let out = dir.path().join("out");
    let res = tune(&path, &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let mut reader = csv_reader(&out.join("history.csv"));
    let headers = reader.headers().unwrap().clone();
    let status = headers.iter().position(|h| h == "status").unwrap();
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[status].starts_with("fail")), "{rows:?}");
}

fn csv_reader(path: &Path) -> csv::Reader<std::fs::File> {
    csv::Reader::from_path(path).unwrap()
}

#[test]
fn same_seed_gives_identical_history() {
    let dir = tempfile::tempdir().unwrap();
    let solvers = json!([{"type": "hybrid", "share": true}, {"type": "random", "share": true}, {"type": "bayes", "params": {"init": 4, "batch": 3}}]);
    let cfg = write_json(dir.path(), "run.json", &sphere_config(solvers, 40));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(tune(&cfg, &a).status.success());
    assert!(tune(&cfg, &b).status.success());
    let ha = std::fs::read(a.join("history.csv")).unwrap();
    let hb = std::fs::read(b.join("history.csv")).unwrap();
    assert_eq!(ha, hb);
}

#[test]
fn timed_objective_still_gives_identical_history() {
    let dir = tempfile::tempdir().unwrap();
    // the objective is the request length, so it depends on the point
    let script = dir.path().join("slow.sh");
    std::fs::write(&script, "read line\nsleep 0.01\necho \"{\\\"objective\\\": ${#line}}\"\n").unwrap();
    let mut cfg = sphere_config(json!([{"type": "hybrid"}, {"type": "random"}]), 24);
    cfg["objective"] = json!({"type": "external", "command": ["sh", script.to_str().unwrap()], "timeout_ms": 5000});
    let path = write_json(dir.path(), "run.json", &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(tune(&path, &a).status.success());
    assert!(tune(&path, &b).status.success());
    let history = std::fs::read_to_string(a.join("history.csv")).unwrap();
    assert!(!history.contains("fail"), "{history}");
    assert_eq!(history, std::fs::read_to_string(b.join("history.csv")).unwrap());

    let mut timings = csv_reader(&a.join("timings.csv"));
    assert_eq!(timings.headers().unwrap(), vec!["eval_id", "wall_time_ms"]);
    let ms: Vec<u64> = timings.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(ms.len(), 24);
    assert!(ms.iter().all(|&t| t >= 10), "{ms:?}");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &sphere_config(json!([{"type": "random"}]), 10));
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let res = tunekit(&["tune", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(res.status.success());
        std::fs::read(out.join("history.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "c"), run("6", "d"));
}

#[test]
fn convergence_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &sphere_config(json!([{"type": "hybrid"}, {"type": "random"}]), 60));
    let out = dir.path().join("out");
    assert!(tune(&cfg, &out).status.success());
    let mut conv = csv_reader(&out.join("convergence.csv"));
    assert_eq!(conv.headers().unwrap(), vec!["eval_id", "best_so_far"]);
    let best: Vec<f64> = conv.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert!(!best.is_empty());
    assert!(best.windows(2).all(|w| w[1] <= w[0]), "{best:?}");
}

#[test]
fn output_defaults_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sphere_config(json!([{"type": "random"}]), 5);
    cfg["output"] = json!("results");
    let path = write_json(dir.path(), "run.json", &cfg);
    let res = tunekit(&["tune", "--config", path.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(dir.path().join("results/history.csv").exists());
}

fn bench_config(dir: &Path) -> PathBuf {
    write_json(
        dir,
        "bench.json",
        &json!({
            "search_space": [
                {"name": "a", "type": "continuous", "bounds": [-5.12, 5.12]},
                {"name": "b", "type": "integer", "bounds": [-5, 5]}
            ],
            "objective": {"type": "builtin", "function": {"name": "rastrigin"}},
            "budget": {"evaluations": 20, "concurrency": 2},
            "setups": [
                {"name": "hybrid", "solvers": [{"type": "hybrid"}]},
                {"name": "random", "solvers": [{"type": "random"}]}
            ],
            "seed": 3,
            "output": "bench_out"
        }),
    )
}

#[test]
fn bench_writes_one_row_per_setup_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path());
    let res = tunekit(&["bench", "--config", cfg.to_str().unwrap(), "--seeds", "3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut rows = csv_reader(&dir.path().join("bench_out/bench.csv"));
    assert_eq!(&rows.headers().unwrap()[0], "solver");
    assert_eq!(rows.records().count(), 6);
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("median_best"));
    assert!(stdout.contains("hybrid") && stdout.contains("random"));
}

#[test]
fn bench_with_a_single_setup_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = bench_config(dir.path());
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cfg["setups"].as_array_mut().unwrap().pop();
    let path = write_json(dir.path(), "one.json", &cfg);
    let res = tunekit(&["bench", "--config", path.to_str().unwrap(), "--seeds", "2"]);
    assert_eq!(res.status.code(), Some(1));
}

fn simulate(dir: &Path, scenario: Value) -> Output {
    let path = write_json(dir, "scenario.json", &scenario);
    tunekit(&["simulate-allocation", "--scenario", path.to_str().unwrap()])
}

#[test]
fn allocation_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let res = simulate(
        dir.path(),
        json!({"grid": 32, "batch": 64, "iterations": 1, "model": {"t_serial": 64, "c_comm": 1, "t_fixed": 1}}),
    );
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert_eq!(stdout.lines().last(), Some("optimal w=1"));
    assert!(stdout.contains("minimum makespan 130"));
}

#[test]
fn allocation_fits_observations_first() {
    let dir = tempfile::tempdir().unwrap();
    let res = simulate(dir.path(), json!({"grid": 8, "batch": 8, "observations": [[1, 65], [2, 34], [4, 20], [8, 16]]}));
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.lines().next().unwrap().contains("residual="), "{stdout}");
}

#[test]
fn allocation_on_a_single_worker() {
    let dir = tempfile::tempdir().unwrap();
    let res = simulate(dir.path(), json!({"grid": 1, "batch": 4, "model": {"t_serial": 10, "c_comm": 0, "t_fixed": 1}}));
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(stdout.lines().last(), Some("optimal w=1"));
}

#[test]
fn invalid_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let res = simulate(dir.path(), json!({"grid": 0, "batch": 4, "model": {"t_serial": 10, "c_comm": 0, "t_fixed": 1}}));
    assert_eq!(res.status.code(), Some(1));
    let res = simulate(dir.path(), json!({"grid": 4, "batch": 4}));
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let loaded = if name.starts_with("allocation") {
            tunekit::config::Scenario::load(&path).and_then(|s| s.render()).map(drop)
        } else if name.starts_with("bench") {
            tunekit::config::BenchConfig::load(&path).map(drop)
        } else {
            tunekit::config::RunConfig::load(&path).and_then(|c| c.prepare(&dir)).map(drop)
        };
        assert!(loaded.is_ok(), "{name}: {:?}", loaded.err());
        seen += 1;
    }
    assert!(seen >= 5);
}
