//! `bimatch` command line. Exit codes: 0 success, 1 correctness or
//! maximality failure, 2 usage or parse error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::algo::Algorithm;
use crate::bench::{
    distinct_algorithms, geomean_table, performance_profile, read_manifest, run_suite,
    speedup_grid, speedup_profile, write_geomean_csv, write_profile_csv, write_records_csv,
    write_trace_csv, GraphSource, SuiteOptions,
};
use crate::graph::{
    generate_random_bipartite, permute_random, read_matrix_market, write_matrix_market,
    BipartiteGraph,
};
use crate::grid::{GridMode, GridOptions, Launcher, Schedule, CT_THREADS, DEFAULT_MAX_THREADS};
use crate::matching::{cheap_matching, is_maximum, read_dump, validate, MatchingState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bimatch", version, about = "Maximum cardinality bipartite matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Match one Matrix Market instance.
    Match(MatchArgs),
    /// Check that a matching dump is valid and maximum for a graph.
    Verify(VerifyArgs),
    /// Run a benchmark suite over a manifest of graphs.
    Bench(BenchArgs),
    /// Write a random bipartite graph as a Matrix Market pattern file.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Schedule: serial, shuffled:<seed> or parallel:<workers>.
    #[arg(long, env = "BIMATCH_SCHEDULE")]
    schedule: Option<String>,
    /// Threads of the constant (CT) grid.
    #[arg(long = "ct-threads", env = "BIMATCH_CT_THREADS", default_value_t = CT_THREADS, hide = true)]
    ct_threads: usize,
    /// Architecture thread cap for MT grids.
    #[arg(long = "max-threads", env = "BIMATCH_MAX_THREADS", default_value_t = DEFAULT_MAX_THREADS, hide = true)]
    max_threads: usize,
}

impl GridArgs {
    fn schedule(&self) -> Result<Schedule, String> {
        match &self.schedule {
            Some(s) => s.parse().map_err(|e| format!("{e}")),
            None => Ok(Schedule::parallel_default()),
        }
    }

    fn options(&self) -> GridOptions {
        GridOptions {
            ct_threads: self.ct_threads.max(1),
            max_threads: self.max_threads.max(1),
        }
    }
}

#[derive(Debug, Args)]
struct MatchArgs {
    graph: PathBuf,
    /// Algorithm identifier, e.g. apfb-wr-ct, apsb-gpubfs-mt, hk, pfp.
    #[arg(long, default_value = "apfb-wr-ct")]
    algo: String,
    /// Grid mode for GPU identifiers; overrides an identifier's suffix.
    #[arg(long, env = "BIMATCH_GRID")]
    grid: Option<String>,
    #[command(flatten)]
    grid_args: GridArgs,
    /// Randomly permute rows and columns with this seed first.
    #[arg(long = "seed-permute")]
    seed_permute: Option<u64>,
    /// Print the work counters as JSON.
    #[arg(long)]
    counters: bool,
    /// Write the matching as `r <row> <col>` lines.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    graph: PathBuf,
    matching: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    manifest: PathBuf,
    /// Comma-separated algorithm identifiers.
    #[arg(long, value_delimiter = ',', required = true)]
    algos: Vec<String>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Permute every instance with this seed.
    #[arg(long)]
    permute: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Speedup profiles against `baseline=<id>`.
    #[arg(long)]
    profiles: Option<String>,
    #[command(flatten)]
    grid_args: GridArgs,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    nc: usize,
    #[arg(long)]
    nr: usize,
    #[arg(long)]
    deg: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Match(a) => cmd_match(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Bench(a) => cmd_bench(a, out, err),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => code,
        Err((code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

type CmdResult = Result<i32, (i32, String)>;

fn usage(e: impl ToString) -> (i32, String) {
    (EXIT_USAGE, e.to_string())
}

fn load_graph(path: &Path) -> Result<BipartiteGraph, (i32, String)> {
    let f = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_matrix_market(BufReader::new(f))
        .map(|g| g.with_name(name))
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_match(a: MatchArgs, out: &mut dyn Write) -> CmdResult {
    let grid_override = a
        .grid
        .as_deref()
        .map(|g| g.parse::<GridMode>())
        .transpose()
        .map_err(usage)?;
    let mut algo: Algorithm = Algorithm::parse_with_grid(&a.algo, grid_override.unwrap_or(GridMode::Ct))
        .map_err(usage)?;
    if let Some(mode) = grid_override {
        algo = algo.with_grid(mode);
    }
    let schedule = a.grid_args.schedule().map_err(usage)?;
    let mut launcher = Launcher::new(schedule).map_err(usage)?;

    let mut g = load_graph(&a.graph)?;
    if let Some(seed) = a.seed_permute {
        g = permute_random(&g, seed);
    }
    let init = cheap_matching(&g);
    let start = Instant::now();
    let run = algo
        .run(&g, &init, &mut launcher, &a.grid_args.options())
        .map_err(|e| (EXIT_FAILURE, e.to_string()))?;
    let elapsed = start.elapsed().as_secs_f64();

    let _ = writeln!(
        out,
        "cardinality={} time_s={elapsed:.6}",
        run.matching.cardinality()
    );
    if a.counters {
        let json = serde_json::to_string(&run.counters).expect("counters serialize");
        let _ = writeln!(out, "{json}");
    }
    if let Some(path) = a.dump {
        let f = File::create(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        run.matching
            .write_dump(BufWriter::new(f))
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let g = load_graph(&a.graph)?;
    let f = File::open(&a.matching).map_err(|e| usage(format!("{}: {e}", a.matching.display())))?;
    let pairs = read_dump(BufReader::new(f)).map_err(usage)?;
    let m = match MatchingState::from_pairs(g.num_cols(), g.num_rows(), &pairs) {
        Ok(m) => m,
        Err(message) => {
            let _ = writeln!(out, "invalid: {message}");
            return Ok(EXIT_FAILURE);
        }
    };
    let violations = validate(&g, &m);
    if !violations.is_empty() {
        for v in &violations {
            let _ = writeln!(out, "invalid: {v}");
        }
        return Ok(EXIT_FAILURE);
    }
    match is_maximum(&g, &m) {
        Ok(true) => {
            let _ = writeln!(out, "ok: valid maximum matching of cardinality {}", m.cardinality());
            Ok(EXIT_OK)
        }
        Ok(false) => {
            let _ = writeln!(out, "not maximum: augmenting path exists");
            Ok(EXIT_FAILURE)
        }
        Err(e) => {
            let _ = writeln!(out, "invalid: {e}");
            Ok(EXIT_FAILURE)
        }
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(BufWriter<File>) -> Result<(), String>,
) -> Result<(), (i32, String)> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    f(BufWriter::new(file)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let algorithms: Vec<Algorithm> = a
        .algos
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()
        .map_err(usage)?;
    let baseline = match &a.profiles {
        None => None,
        Some(spec) => match spec.split_once('=') {
            Some(("baseline", id)) => Some(id.parse::<Algorithm>().map_err(usage)?.to_string()),
            _ => return Err(usage(format!("--profiles expects baseline=<id>, got `{spec}`"))),
        },
    };
    let schedule = a.grid_args.schedule().map_err(usage)?;
    let paths = read_manifest(&a.manifest).map_err(usage)?;
    let sources: Vec<GraphSource> = paths.into_iter().map(GraphSource::Path).collect();
    let opts = SuiteOptions {
        repetitions: a.reps.max(1),
        permute_seed: a.permute,
        schedule,
        grid: a.grid_args.options(),
    };
    let report = run_suite(&sources, &algorithms, &opts).map_err(usage)?;
    for issue in &report.issues {
        let _ = writeln!(err, "issue: {issue:?}");
    }

    fs::create_dir_all(&a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?;
    let records = &report.records;
    write_file(&a.out, "records.csv", |w| {
        write_records_csv(records, w).map_err(|e| e.to_string())
    })?;
    write_file(&a.out, "records.json", |mut w| {
        serde_json::to_writer_pretty(&mut w, records).map_err(|e| e.to_string())?;
        w.flush().map_err(|e| e.to_string())
    })?;
    write_file(&a.out, "traces.csv", |w| {
        write_trace_csv(records, w).map_err(|e| e.to_string())
    })?;
    if !records.is_empty() {
        let table = geomean_table(records).map_err(usage)?;
        write_file(&a.out, "geomean.csv", |w| {
            write_geomean_csv(&table, w).map_err(|e| e.to_string())
        })?;
        for row in &table {
            let _ = writeln!(
                out,
                "{:<16} instances={} geomean_time_s={:.6}",
                row.algorithm, row.instances, row.geomean_time_s
            );
        }
    }

    let names = distinct_algorithms(records);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    match performance_profile(records, &name_refs, None) {
        Ok(profiles) => {
            let series: Vec<(String, Vec<(f64, f64)>)> =
                profiles.into_iter().map(|p| (p.algorithm, p.points)).collect();
            write_file(&a.out, "performance_profile.csv", |w| {
                write_profile_csv(&series, w).map_err(|e| e.to_string())
            })?;
        }
        Err(e) => {
            let _ = writeln!(err, "warning: performance profile skipped: {e}");
        }
    }
    if let Some(base) = baseline {
        let mut series = Vec::new();
        for target in names.iter().filter(|n| **n != base) {
            let raw = speedup_profile(records, &base, target, &[]);
            let xs = speedup_grid(&raw.speedups, 0.25);
            let p = speedup_profile(records, &base, target, &xs);
            for inst in &p.skipped {
                let _ = writeln!(err, "warning: {inst} lacks {base} or {target}; skipped");
            }
            series.push((format!("{target}/{base}"), p.points));
        }
        write_file(&a.out, "speedup_profile.csv", |w| {
            write_profile_csv(&series, w).map_err(|e| e.to_string())
        })?;
    }

    if report.has_correctness_failure() {
        let _ = writeln!(err, "correctness failure: see issues above");
        return Ok(EXIT_FAILURE);
    }
    Ok(EXIT_OK)
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    if !(a.deg >= 0.0) {
        return Err(usage("--deg must be non-negative"));
    }
    let g = generate_random_bipartite(a.nc, a.nr, a.deg, a.seed);
    let f = File::create(&a.out).map_err(|e| (EXIT_FAILURE, format!("{}: {e}", a.out.display())))?;
    let mut w = BufWriter::new(f);
    write_matrix_market(&g, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| (EXIT_FAILURE, format!("{}: {e}", a.out.display())))?;
    Ok(EXIT_OK)
}
