use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MODEL: &str = "horizon = 2\nmax_arrivals = 2\ncapacity = 2\n";

fn admcap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_admcap")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(out: &str, key: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap_or_else(|| panic!("no {key} in {out}"));
    line[key.len() + 1..].parse().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.toml"), MODEL).unwrap();
    dir
}

#[test]
fn build_reports_sizes_and_writes_dump() {
    let dir = setup();
    let o = admcap(&["build", "--config", "m.toml", "--no-eliminate", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(field(&s, "states"), 405.0);
    assert_eq!(field(&s, "actions"), 1896.0);
    let dump = fs::read_to_string(dir.path().join("o/instance.txt")).unwrap();
    assert!(dump.starts_with("# admcap instance v1"));
}

#[test]
fn lp_methods_and_rvi_agree() {
    let dir = setup();
    let mut gains = Vec::new();
    for m in ["DLP", "RLP", "RVI"] {
        let o = admcap(&["solve", "--config", "m.toml", "--method", m], dir.path());
        assert!(o.status.success());
        gains.push(field(&stdout(&o), "gain"));
    }
    assert!((gains[0] - gains[1]).abs() < 1e-7, "{gains:?}");
    assert!((gains[0] - gains[2]).abs() < 1e-6, "{gains:?}");
}

#[test]
fn solve_writes_policy_and_mps() {
    let dir = setup();
    let o = admcap(&["solve", "--config", "m.toml", "--out", "o", "--mps", "lp.mps"], dir.path());
    assert!(o.status.success());
    let policy = fs::read_to_string(dir.path().join("o/policy.csv")).unwrap();
    assert_eq!(policy.lines().next().unwrap(), "state,x,a,r,y,cost");
    assert_eq!(policy.lines().count(), 406);
    let mps = fs::read_to_string(dir.path().join("lp.mps")).unwrap();
    for section in ["NAME", "ROWS", "COLUMNS", "RHS", "ENDATA"] {
        assert!(mps.contains(section), "missing {section}");
    }
}

#[test]
fn eliminate_stats_counts() {
    let dir = setup();
    let o = admcap(&["eliminate-stats", "--config", "m.toml", "--out", "o"], dir.path());
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(field(&s, "dlp_actions"), 1896.0);
    assert!(field(&s, "rlp_actions") < 1896.0);
    assert!(dir.path().join("o/elimination.txt").exists());
}

#[test]
fn total_job_aggregation_is_exact_at_k2() {
    let dir = setup();
    let o = admcap(&["aggregate", "--config", "m.toml", "--method", "TOTJOB", "--out", "o"], dir.path());
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(field(&s, "AG").abs() < 1e-6, "{s}");
    assert!(fs::read_to_string(dir.path().join("o/partition.txt")).unwrap().starts_with("# admcap partition v1"));
}

#[test]
fn heuristics_are_not_better_than_optimal() {
    let dir = setup();
    let o = admcap(&["heuristic", "--config", "m.toml", "--method", "MP,AP"], dir.path());
    assert!(o.status.success());
    let s = stdout(&o);
    let opt = field(&s, "optimal_gain");
    for line in s.lines().filter(|l| l.starts_with("MP ") || l.starts_with("AP ")) {
        let g: f64 = line.split_whitespace().nth(1).unwrap().trim_start_matches("gain=").parse().unwrap();
        assert!(g >= opt - 1e-9, "{line}");
    }
}

#[test]
fn simulation_repeats_with_the_same_seed() {
    let dir = setup();
    let args =
        ["simulate", "--config", "m.toml", "--method", "MP", "--seed", "7", "--warmup", "100", "--horizon", "20000"];
    let a = stdout(&admcap(&args, dir.path()));
    let b = stdout(&admcap(&args, dir.path()));
    assert_eq!(field(&a, "mean"), field(&b, "mean"));
}

#[test]
fn experiment_writes_results_and_tables() {
    let dir = setup();
    let spec = r#"
schema = 1
name = "t"
methods = ["RLP", "MP"]
[grid]
horizon = [2]
max_arrivals = [2]
capacity = [2]
costs = [[200, 150, 100, 50]]
loads = ["EL", "FL"]
segmentations = ["ES"]
"#;
    fs::write(dir.path().join("e.toml"), spec).unwrap();
    let o = admcap(&["experiment", "--config", "e.toml", "--out", "r", "--table", "gains"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("r/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(dir.path().join("r/run.log").exists());
    assert!(dir.path().join("r/table-gains.csv").exists());

    // re-tabulating the saved rows gives the same table
    let first = fs::read_to_string(dir.path().join("r/table-gains.csv")).unwrap();
    let o = admcap(
        &["experiment", "--config", "e.toml", "--from-results", "r/results.csv", "--out", "t", "--table", "gains"],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("t/table-gains.csv")).unwrap(), first);
}

#[test]
fn exit_codes() {
    let dir = setup();
    fs::write(dir.path().join("bad.toml"), "horizon = 9\nmax_arrivals = 2\ncapacity = 2\n").unwrap();
    assert_eq!(admcap(&["build", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(admcap(&["build", "--config", "missing.toml"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("typo.toml"), "horizon = 2\nmax_arival = 2\ncapacity = 2\n").unwrap();
    assert_eq!(admcap(&["build", "--config", "typo.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(admcap(&["solve", "--config", "m.toml", "--method", "MP"], dir.path()).status.code(), Some(2));

    // K = 3, A = 2 takes far longer than 1 ms
    fs::write(dir.path().join("big.toml"), "horizon = 3\nmax_arrivals = 2\ncapacity = 2\n").unwrap();
    let o = admcap(&["solve", "--config", "big.toml", "--method", "RVI", "--time-limit", "0.001"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
