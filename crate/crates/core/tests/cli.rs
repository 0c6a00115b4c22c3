use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bimatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bimatch"))
        .args(args)
        .env_remove("BIMATCH_SCHEDULE")
        .env_remove("BIMATCH_GRID")
        .output()
        .expect("spawn bimatch")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// c0 = {r0}, c1 = {r0, r1, r2}; maximum matching has size 2.
fn write_fig1(dir: &Path) -> PathBuf {
    let path = dir.join("fig1.mtx");
    fs::write(
        &path,
        "%%MatrixMarket matrix coordinate pattern general\n3 2 4\n1 1\n1 2\n2 2\n3 2\n",
    )
    .unwrap();
    path
}

fn gen(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    let o = bimatch(&["gen", "--nc", "60", "--nr", "50", "--deg", "3", "--seed", seed, "--out", p(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

#[test]
fn unknown_algorithm_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let g = write_fig1(dir.path());
    let o = bimatch(&["match", p(&g), "--algo", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown algorithm"), "{}", stderr(&o));
}

#[test]
fn match_reports_cardinality_and_counters() {
    let dir = TempDir::new().unwrap();
    let g = write_fig1(dir.path());
    for algo in ["apfb-wr-ct", "apsb-wr-mt", "apsb-gpubfs", "hk", "pfp"] {
        let o = bimatch(&["match", p(&g), "--algo", algo, "--schedule", "serial", "--counters"]);
        assert!(o.status.success(), "{algo}: {}", stderr(&o));
        let out = stdout(&o);
        assert!(out.starts_with("cardinality=2 time_s="), "{algo}: {out}");
        let json = out.lines().nth(1).unwrap();
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        if algo.starts_with("ap") {
            assert!(v["outer_iterations"].as_u64().unwrap() >= 1);
        } else {
            assert!(v.is_null());
        }
    }
}

#[test]
fn grid_override_and_env_schedule() {
    let dir = TempDir::new().unwrap();
    let g = gen(dir.path(), "g.mtx", "3");
    let o = Command::new(env!("CARGO_BIN_EXE_bimatch"))
        .args(["match", p(&g), "--algo", "apfb-gpubfs-ct"])
        .env("BIMATCH_SCHEDULE", "shuffled:9")
        .env("BIMATCH_GRID", "mt")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));

    let o = bimatch(&["match", p(&g), "--schedule", "parallel:0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bimatch(&["match", p(&g), "--grid", "xx"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_then_verify() {
    let dir = TempDir::new().unwrap();
    let g = gen(dir.path(), "g.mtx", "11");
    let dump = dir.path().join("m.txt");
    let o = bimatch(&["match", p(&g), "--algo", "apsb-wr-ct", "--dump", p(&dump)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bimatch(&["verify", p(&g), p(&dump)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("ok:"));
}

#[test]
fn verify_rejects_non_maximum_and_non_edges() {
    let dir = TempDir::new().unwrap();
    let g = write_fig1(dir.path());

    let short = dir.path().join("short.txt");
    fs::write(&short, "r 0 1\n").unwrap();
    let o = bimatch(&["verify", p(&g), p(&short)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("augmenting path exists"), "{}", stdout(&o));

    // row 1 is not adjacent to column 0
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "r 1 0\nr 0 1\n").unwrap();
    let o = bimatch(&["verify", p(&g), p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("row 1, column 0"), "{}", stdout(&o));

    let dup = dir.path().join("dup.txt");
    fs::write(&dup, "r 0 1\nr 1 1\n").unwrap();
    let o = bimatch(&["verify", p(&g), p(&dup)]);
    assert_eq!(o.status.code(), Some(1));

    let garbage = dir.path().join("garbage.txt");
    fs::write(&garbage, "r zero 1\n").unwrap();
    let o = bimatch(&["verify", p(&g), p(&garbage)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_graph_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("bad.mtx");
    fs::write(&g, "%%MatrixMarket matrix coordinate pattern general\n2 2 1\n3 1\n").unwrap();
    let o = bimatch(&["match", p(&g)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

fn bench(dir: &Path, manifest: &Path, algos: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join(format!("out-{}", algos.replace(',', "_")));
    let mut args = vec!["bench", p(manifest), "--algos", algos, "--reps", "1", "--schedule", "serial", "--out", p(&out)];
    args.extend_from_slice(extra);
    (bimatch(&args), out)
}

fn manifest(dir: &Path) -> PathBuf {
    gen(dir, "a.mtx", "1");
    gen(dir, "b.mtx", "2");
    let m = dir.join("suite.txt");
    fs::write(&m, "# two instances\na.mtx\nb.mtx\n").unwrap();
    m
}

#[test]
fn bench_writes_records_and_profiles() {
    let dir = TempDir::new().unwrap();
    let m = manifest(dir.path());
    let (o, out) = bench(dir.path(), &m, "hk,apfb-wr-ct", &["--profiles", "baseline=hk"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(out.join("records.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "instance");
    assert_eq!(&headers[1], "algorithm");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let algos: Vec<&str> = rows.iter().filter(|r| r[0] == row[0]).map(|r| &r[3]).collect();
        assert!(algos.iter().all(|c| *c == &row[3]));
    }
    for f in ["records.json", "traces.csv", "geomean.csv", "performance_profile.csv", "speedup_profile.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let traces = fs::read_to_string(out.join("traces.csv")).unwrap();
    assert!(traces.lines().count() > 1);
}

#[test]
fn bench_permutation_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let m = manifest(dir.path());
    let cards = |o: &Path| -> Vec<(String, String)> {
        csv::Reader::from_path(o.join("records.csv"))
            .unwrap()
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r[0].to_string(), r[3].to_string())
            })
            .collect()
    };
    let (o1, out1) = bench(dir.path(), &m, "apsb-wr-ct", &["--permute", "42"]);
    assert!(o1.status.success());
    let first = cards(&out1);
    fs::rename(&out1, dir.path().join("first")).unwrap();
    let (o2, out2) = bench(dir.path(), &m, "apsb-wr-ct", &["--permute", "42"]);
    assert!(o2.status.success());
    assert_eq!(first, cards(&out2));
    assert!(first.iter().all(|(name, _)| name.ends_with("-rcp")));

    let (o3, out3) = bench(dir.path(), &m, "hk", &[]);
    assert!(o3.status.success());
    let plain: Vec<String> = cards(&out3).into_iter().map(|(_, c)| c).collect();
    let permuted: Vec<String> = first.into_iter().map(|(_, c)| c).collect();
    assert_eq!(plain, permuted);
}

#[test]
fn bench_flags_wrong_answers() {
    let dir = TempDir::new().unwrap();
    let m = manifest(dir.path());
    let (o, _) = bench(dir.path(), &m, "hk,faulty", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("correctness failure"));
}

#[test]
fn bench_skips_missing_files_without_failing() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "a.mtx", "1");
    let m = dir.path().join("suite.txt");
    fs::write(&m, "a.mtx\nmissing.mtx\n").unwrap();
    let (o, out) = bench(dir.path(), &m, "hk", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("missing.mtx"));
    let rows = csv::Reader::from_path(out.join("records.csv")).unwrap().records().count();
    assert_eq!(rows, 1);
}

#[test]
fn gen_is_deterministic_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let a = gen(dir.path(), "a.mtx", "5");
    let b = gen(dir.path(), "b.mtx", "5");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let g = bimatch::graph::read_matrix_market(std::io::BufReader::new(fs::File::open(&a).unwrap())).unwrap();
    assert_eq!((g.num_cols(), g.num_rows()), (60, 50));

    let empty = dir.path().join("empty.mtx");
    let o = bimatch(&["gen", "--nc", "0", "--nr", "4", "--deg", "2", "--out", p(&empty)]);
    assert!(o.status.success());
    let o = bimatch(&["match", p(&empty), "--schedule", "serial"]);
    assert!(stdout(&o).starts_with("cardinality=0"), "{}", stdout(&o));
}
