//! Benchmark runner and reporting: per-run records, geometric-mean tables,
//! speedup profiles, performance profiles and per-phase BFS traces.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::algo::Algorithm;
use crate::gpu::PhaseCounters;
use crate::graph::{permute_random, read_matrix_market, BipartiteGraph};
use crate::grid::{GridError, GridOptions, Launcher, Schedule};
use crate::matching::{cheap_matching, is_maximum};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("geometric mean of an empty list")]
    Empty,
    #[error("non-positive time {0}")]
    NonPositive(f64),
    #[error("algorithm `{algorithm}` has no time for instance `{instance}`")]
    MissingCell { instance: String, algorithm: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub enum GraphSource {
    Path(PathBuf),
    Graph(BipartiteGraph),
}

impl GraphSource {
    fn label(&self) -> String {
        match self {
            GraphSource::Path(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            GraphSource::Graph(g) => g.name().to_string(),
        }
    }

    fn load(&self) -> Result<BipartiteGraph, String> {
        match self {
            GraphSource::Graph(g) => Ok(g.clone()),
            GraphSource::Path(p) => {
                let f = File::open(p).map_err(|e| format!("{}: {e}", p.display()))?;
                read_matrix_market(BufReader::new(f))
                    .map(|g| g.with_name(self.label()))
                    .map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub instance: String,
    pub algorithm: String,
    /// Matching phase only; minimum over repetitions.
    pub time_s: f64,
    pub cardinality: usize,
    pub counters: Option<PhaseCounters>,
    pub schedule: String,
    /// Thread count for GPU identifiers.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SuiteIssue {
    Load { instance: String, message: String },
    Run { instance: String, algorithm: String, message: String },
    InvalidResult { instance: String, algorithm: String, message: String },
    CardinalityMismatch { instance: String, values: Vec<(String, usize)> },
}

impl SuiteIssue {
    pub fn is_correctness_failure(&self) -> bool {
        !matches!(self, SuiteIssue::Load { .. })
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub repetitions: usize,
    pub permute_seed: Option<u64>,
    pub schedule: Schedule,
    pub grid: GridOptions,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            repetitions: 3,
            permute_seed: None,
            schedule: Schedule::Serial,
            grid: GridOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub records: Vec<BenchRecord>,
    pub issues: Vec<SuiteIssue>,
}

impl SuiteReport {
    pub fn has_correctness_failure(&self) -> bool {
        self.issues.iter().any(SuiteIssue::is_correctness_failure)
    }
}

/// Loads each instance (optionally permuted, name suffixed `-rcp`), computes
/// the cheap matching once, and times every algorithm from a copy of it.
/// Results are checked for validity, maximality and agreement.
pub fn run_suite(
    sources: &[GraphSource],
    algorithms: &[Algorithm],
    opts: &SuiteOptions,
) -> Result<SuiteReport, BenchError> {
    let mut launcher = Launcher::new(opts.schedule)?;
    let mut report = SuiteReport::default();
    let reps = opts.repetitions.max(1);

    for source in sources {
        let g = match source.load() {
            Ok(g) => g,
            Err(message) => {
                report.issues.push(SuiteIssue::Load {
                    instance: source.label(),
                    message,
                });
                continue;
            }
        };
        let g = match opts.permute_seed {
            Some(seed) => {
                let name = format!("{}-rcp", g.name());
                permute_random(&g, seed).with_name(name)
            }
            None => g,
        };
        let init = cheap_matching(&g);
        let mut sizes = Vec::new();

        for algo in algorithms {
            let mut best = f64::INFINITY;
            let mut last = None;
            for _ in 0..reps {
                let start = Instant::now();
                let out = algo.run(&g, &init, &mut launcher, &opts.grid);
                let elapsed = start.elapsed().as_secs_f64();
                best = best.min(elapsed);
                last = Some(out);
            }
            let run = match last.expect("at least one repetition") {
                Ok(run) => run,
                Err(e) => {
                    report.issues.push(SuiteIssue::Run {
                        instance: g.name().to_string(),
                        algorithm: algo.to_string(),
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let problem = match is_maximum(&g, &run.matching) {
                Ok(true) => None,
                Ok(false) => Some("augmenting path exists".to_string()),
                Err(e) => Some(e.to_string()),
            };
            if let Some(message) = problem {
                report.issues.push(SuiteIssue::InvalidResult {
                    instance: g.name().to_string(),
                    algorithm: algo.to_string(),
                    message,
                });
            }
            let cardinality = run.matching.cardinality();
            sizes.push((algo.to_string(), cardinality));
            report.records.push(BenchRecord {
                instance: g.name().to_string(),
                algorithm: algo.to_string(),
                time_s: best,
                cardinality,
                counters: run.counters,
                schedule: opts.schedule.to_string(),
                threads: match algo {
                    Algorithm::Gpu { grid, .. } => {
                        Some(opts.grid.resolve(*grid, g.num_cols()).tot_thread_num)
                    }
                    _ => None,
                },
            });
        }
        if sizes.windows(2).any(|w| w[0].1 != w[1].1) {
            report.issues.push(SuiteIssue::CardinalityMismatch {
                instance: g.name().to_string(),
                values: sizes,
            });
        }
    }
    Ok(report)
}

/// `(prod t_i)^(1/n)`, computed in log space.
pub fn geometric_mean(times: &[f64]) -> Result<f64, BenchError> {
    if times.is_empty() {
        return Err(BenchError::Empty);
    }
    if let Some(&t) = times.iter().find(|&&t| t.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(BenchError::NonPositive(t));
    }
    let mean_log = times.iter().map(|t| t.log2()).sum::<f64>() / times.len() as f64;
    Ok(mean_log.exp2())
}

/// instance -> algorithm -> time
fn time_matrix(records: &[BenchRecord]) -> BTreeMap<&str, BTreeMap<&str, f64>> {
    let mut m: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        m.entry(r.instance.as_str())
            .or_default()
            .insert(r.algorithm.as_str(), r.time_s);
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupProfile {
    /// `(x, y)`: fraction `y` of instances reach a speedup of at least `2^x`.
    pub points: Vec<(f64, f64)>,
    pub speedups: Vec<f64>,
    /// Instances lacking a baseline or target time.
    pub skipped: Vec<String>,
}

/// Speedup `t_baseline / t_target` per instance, summarized over `xs`.
pub fn speedup_profile(
    records: &[BenchRecord],
    baseline: &str,
    target: &str,
    xs: &[f64],
) -> SpeedupProfile {
    let mut speedups = Vec::new();
    let mut skipped = Vec::new();
    for (instance, row) in time_matrix(records) {
        match (row.get(baseline), row.get(target)) {
            (Some(&b), Some(&t)) => speedups.push(b / t),
            _ => skipped.push(instance.to_string()),
        }
    }
    let n = speedups.len();
    let points = xs
        .iter()
        .map(|&x| {
            let threshold = x.exp2();
            let hits = speedups.iter().filter(|&&s| s >= threshold).count();
            (x, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect();
    SpeedupProfile {
        points,
        speedups,
        skipped,
    }
}

/// Default x grid for a speedup profile: `step`-spaced from the floor of the
/// smallest to the ceiling of the largest log2 speedup.
pub fn speedup_grid(speedups: &[f64], step: f64) -> Vec<f64> {
    if speedups.is_empty() {
        return vec![0.0];
    }
    let logs = speedups.iter().map(|s| s.log2());
    let lo = logs.clone().fold(f64::INFINITY, f64::min).floor().min(0.0);
    let hi = logs.fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0);
    let steps = ((hi - lo) / step).round() as usize;
    (0..=steps).map(|k| lo + k as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceProfile {
    pub algorithm: String,
    /// `(x, y)`: on fraction `y` of instances the algorithm is within a
    /// factor `x` of the fastest one.
    pub points: Vec<(f64, f64)>,
    pub ratios: Vec<f64>,
}

/// Per-instance ratios to the fastest of `algorithms`. With `xs = None` each
/// profile is evaluated at every distinct ratio observed.
pub fn performance_profile(
    records: &[BenchRecord],
    algorithms: &[&str],
    xs: Option<&[f64]>,
) -> Result<Vec<PerformanceProfile>, BenchError> {
    let matrix = time_matrix(records);
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); algorithms.len()];
    for (instance, row) in &matrix {
        let mut times = Vec::with_capacity(algorithms.len());
        for a in algorithms {
            match row.get(a) {
                Some(&t) => times.push(t),
                None => {
                    return Err(BenchError::MissingCell {
                        instance: instance.to_string(),
                        algorithm: a.to_string(),
                    })
                }
            }
        }
        let best = times.iter().copied().fold(f64::INFINITY, f64::min);
        for (k, t) in times.into_iter().enumerate() {
            ratios[k].push(t / best);
        }
    }
    let grid: Vec<f64> = match xs {
        Some(xs) => xs.to_vec(),
        None => {
            let mut all: Vec<f64> = ratios.iter().flatten().copied().collect();
            all.push(1.0);
            all.sort_by(f64::total_cmp);
            all.dedup();
            all
        }
    };
    Ok(algorithms
        .iter()
        .zip(ratios)
        .map(|(a, rs)| {
            let n = rs.len();
            let points = grid
                .iter()
                .map(|&x| {
                    let hits = rs.iter().filter(|&&r| r <= x).count();
                    (x, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
                })
                .collect();
            PerformanceProfile {
                algorithm: a.to_string(),
                points,
                ratios: rs,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeomeanRow {
    pub algorithm: String,
    pub instances: usize,
    pub geomean_time_s: f64,
}

/// One row per algorithm, in first-appearance order.
pub fn geomean_table(records: &[BenchRecord]) -> Result<Vec<GeomeanRow>, BenchError> {
    let mut order: Vec<&str> = Vec::new();
    let mut times: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        if !times.contains_key(r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
        // sub-resolution timings would make the log blow up
        times.entry(&r.algorithm).or_default().push(r.time_s.max(1e-9));
    }
    order
        .into_iter()
        .map(|a| {
            let ts = &times[a];
            Ok(GeomeanRow {
                algorithm: a.to_string(),
                instances: ts.len(),
                geomean_time_s: geometric_mean(ts)?,
            })
        })
        .collect()
}

/// The `k` instances on which the fastest of `baselines` was slowest.
pub fn hardest_subset(records: &[BenchRecord], baselines: &[&str], k: usize) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = time_matrix(records)
        .into_iter()
        .filter_map(|(inst, row)| {
            baselines
                .iter()
                .filter_map(|b| row.get(b).copied())
                .reduce(f64::min)
                .map(|t| (t, inst))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, i)| i.to_string()).collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    instance: &'a str,
    algorithm: &'a str,
    time_s: f64,
    cardinality: usize,
    outer_iterations: Option<usize>,
    bfs_launches: Option<usize>,
    columns_scanned: Option<usize>,
    alternations_attempted: Option<usize>,
    fix_resets: Option<usize>,
    serial_fallbacks: Option<usize>,
    schedule: &'a str,
    threads: Option<usize>,
}

pub fn write_records_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let c = r.counters.as_ref();
        w.serialize(CsvRow {
            instance: &r.instance,
            algorithm: &r.algorithm,
            time_s: r.time_s,
            cardinality: r.cardinality,
            outer_iterations: c.map(|c| c.outer_iterations),
            bfs_launches: c.map(|c| c.total_bfs_launches()),
            columns_scanned: c.map(|c| c.columns_scanned),
            alternations_attempted: c.map(|c| c.alternations_attempted),
            fix_resets: c.map(|c| c.fix_resets),
            serial_fallbacks: c.map(|c| c.serial_fallbacks),
            schedule: &r.schedule,
            threads: r.threads,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `instance,algorithm,iteration,bfs_launches,cardinality` for every GPU run.
pub fn write_trace_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance", "algorithm", "iteration", "bfs_launches", "cardinality"])?;
    for r in records {
        if let Some(c) = &r.counters {
            for (i, (launches, card)) in c
                .bfs_launches_per_iteration
                .iter()
                .zip(&c.cardinality_per_iteration)
                .enumerate()
            {
                w.write_record([
                    r.instance.clone(),
                    r.algorithm.clone(),
                    (i + 1).to_string(),
                    launches.to_string(),
                    card.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_geomean_csv<W: Write>(rows: &[GeomeanRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `series,x,y` point list.
pub fn write_profile_csv<W: Write>(series: &[(String, Vec<(f64, f64)>)], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "x", "y"])?;
    for (name, points) in series {
        for (x, y) in points {
            w.write_record([name.clone(), x.to_string(), y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One graph path per line; `#` starts a comment. Relative paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let entry = line.split('#').next().unwrap_or("").trim();
        if entry.is_empty() {
            continue;
        }
        let p = Path::new(entry);
        out.push(if p.is_absolute() { p.to_path_buf() } else { base.join(p) });
    }
    Ok(out)
}

/// Checks that every profile is monotone non-decreasing in x and within [0, 1].
pub fn profile_is_monotone(points: &[(f64, f64)]) -> bool {
    points.iter().all(|&(_, y)| (0.0..=1.0).contains(&y))
        && points.windows(2).all(|w| w[0].0 > w[1].0 || w[0].1 <= w[1].1)
}

pub fn distinct_algorithms(records: &[BenchRecord]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .filter(|r| seen.insert(r.algorithm.clone()))
        .map(|r| r.algorithm.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_random_bipartite;

    fn rec(instance: &str, algorithm: &str, time_s: f64) -> BenchRecord {
        BenchRecord {
            instance: instance.into(),
            algorithm: algorithm.into(),
            time_s,
            cardinality: 0,
            counters: None,
            schedule: "serial".into(),
            threads: None,
        }
    }

    #[test]
    fn geometric_mean_examples() {
        assert_eq!(geometric_mean(&[1.0, 4.0]).unwrap(), 2.0);
        assert_eq!(geometric_mean(&[3.0]).unwrap(), 3.0);
        assert_eq!(geometric_mean(&[2.0, 2.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(geometric_mean(&[]), Err(BenchError::Empty)));
        assert!(matches!(geometric_mean(&[1.0, 0.0]), Err(BenchError::NonPositive(_))));
        assert!(geometric_mean(&[1.0, -2.0]).is_err());
        assert!(geometric_mean(&[f64::NAN]).is_err());
    }

    #[test]
    fn speedup_profile_examples() {
        let recs = vec![rec("a", "base", 2.0), rec("b", "base", 4.0), rec("a", "t", 1.0), rec("b", "t", 4.0)];
        let p = speedup_profile(&recs, "base", "t", &[0.0, 1.0]);
        assert_eq!(p.points, vec![(0.0, 1.0), (1.0, 0.5)]);

        let p = speedup_profile(&recs, "base", "base", &[0.0, 1e-9]);
        assert_eq!(p.points, vec![(0.0, 1.0), (1e-9, 0.0)]);

        let recs = vec![rec("a", "base", 8.0), rec("a", "t", 1.0), rec("b", "base", 1.0)];
        let p = speedup_profile(&recs, "base", "t", &[3.0, 3.1]);
        assert_eq!(p.points, vec![(3.0, 1.0), (3.1, 0.0)]);
        assert_eq!(p.skipped, vec!["b".to_string()]);
    }

    #[test]
    fn performance_profile_examples() {
        let recs = vec![rec("i1", "A", 1.0), rec("i2", "A", 3.0), rec("i1", "B", 2.0), rec("i2", "B", 1.0)];
        let p = performance_profile(&recs, &["A", "B"], Some(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(p[0].points, vec![(1.0, 0.5), (2.0, 0.5), (3.0, 1.0)]);
        assert_eq!(p[1].points, vec![(1.0, 0.5), (2.0, 1.0), (3.0, 1.0)]);

        let p = performance_profile(&recs, &["A"], Some(&[1.0, 5.0])).unwrap();
        assert_eq!(p[0].points, vec![(1.0, 1.0), (5.0, 1.0)]);

        let ties = vec![rec("i", "A", 2.0), rec("i", "B", 2.0)];
        let p = performance_profile(&ties, &["A", "B"], Some(&[1.0])).unwrap();
        assert_eq!(p[0].points, vec![(1.0, 1.0)]);
        assert_eq!(p[1].points, vec![(1.0, 1.0)]);

        let holes = vec![rec("i", "A", 2.0)];
        assert!(matches!(
            performance_profile(&holes, &["A", "B"], None),
            Err(BenchError::MissingCell { .. })
        ));
    }

    #[test]
    fn default_grid_reaches_one_at_max_ratio() {
        let recs = vec![
            rec("i1", "A", 1.0),
            rec("i2", "A", 3.0),
            rec("i3", "A", 0.7),
            rec("i1", "B", 2.0),
            rec("i2", "B", 1.0),
            rec("i3", "B", 0.9),
        ];
        for p in performance_profile(&recs, &["A", "B"], None).unwrap() {
            assert!(profile_is_monotone(&p.points));
            let max = p.ratios.iter().copied().fold(0.0, f64::max);
            let at_max = p.points.iter().find(|(x, _)| *x == max).unwrap();
            assert_eq!(at_max.1, 1.0);
        }
    }

    #[test]
    fn hardest_subset_orders_by_best_baseline() {
        let recs = vec![
            rec("a", "hk", 5.0),
            rec("a", "pfp", 1.0),
            rec("b", "hk", 3.0),
            rec("b", "pfp", 4.0),
            rec("c", "hk", 0.5),
        ];
        assert_eq!(hardest_subset(&recs, &["hk", "pfp"], 2), vec!["b", "a"]);
    }

    #[test]
    fn suite_aggregates_and_flags() {
        let graphs: Vec<GraphSource> = (0..2)
            .map(|s| GraphSource::Graph(generate_random_bipartite(60, 60, 3.0, s)))
            .collect();
        let algos: Vec<Algorithm> = ["hk", "apfb-wr-ct"].iter().map(|a| a.parse().unwrap()).collect();
        let report = run_suite(&graphs[..1], &algos, &SuiteOptions::default()).unwrap();
        assert_eq!(report.records.len(), 2);
        assert!(report.issues.is_empty());
        assert_eq!(report.records[0].cardinality, report.records[1].cardinality);
        assert!(report.records[1].counters.is_some());

        let opts = SuiteOptions { permute_seed: Some(42), ..SuiteOptions::default() };
        let permuted = run_suite(&graphs, &algos, &opts).unwrap();
        let plain = run_suite(&graphs, &algos, &SuiteOptions::default()).unwrap();
        for (p, q) in permuted.records.iter().zip(&plain.records) {
            assert_eq!(p.instance, format!("{}-rcp", q.instance));
            assert_eq!(p.cardinality, q.cardinality);
        }

        let faulty = vec![Algorithm::Hk, Algorithm::Faulty];
        let report = run_suite(&graphs[..1], &faulty, &SuiteOptions::default()).unwrap();
        assert!(report.has_correctness_failure());
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, SuiteIssue::CardinalityMismatch { .. })));

        let missing = vec![GraphSource::Path("/nonexistent/x.mtx".into()), graphs[0].clone()];
        let report = run_suite(&missing, &algos, &SuiteOptions::default()).unwrap();
        assert_eq!(report.records.len(), 2);
        assert!(matches!(report.issues[0], SuiteIssue::Load { .. }));
        assert!(!report.has_correctness_failure());
    }

    #[test]
    fn csv_outputs() {
        let graphs = vec![GraphSource::Graph(generate_random_bipartite(30, 30, 2.0, 3))];
        let algos: Vec<Algorithm> = ["hk", "apsb-wr-mt"].iter().map(|a| a.parse().unwrap()).collect();
        let report = run_suite(&graphs, &algos, &SuiteOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&report.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("instance,algorithm,time_s,cardinality,outer_iterations,"));
        assert_eq!(text.lines().count(), 3);

        let mut buf = Vec::new();
        write_trace_csv(&report.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let iters = report.records[1].counters.as_ref().unwrap().outer_iterations;
        assert_eq!(text.lines().count(), 1 + iters);
    }

    #[test]
    fn manifest_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("list.txt");
        std::fs::write(&path, "# graphs\na.mtx\n\n/abs/b.mtx # trailing\n").unwrap();
        let entries = read_manifest(&path).unwrap();
        assert_eq!(entries, vec![dir.path().join("a.mtx"), PathBuf::from("/abs/b.mtx")]);
    }

    #[test]
    fn speedup_grid_covers_range() {
        let xs = speedup_grid(&[0.5, 4.0], 0.5);
        assert_eq!(xs.first(), Some(&-1.0));
        assert_eq!(xs.last(), Some(&2.0));
    }
}
