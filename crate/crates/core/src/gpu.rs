//! BFS-kernel matching: level-synchronous BFS from all unmatched columns,
//! speculative lock-free alternation of the discovered paths, and a repair
//! pass that drops whatever the races left inconsistent.
//!
//! Two drivers share the phase machinery:
//!
//! * [`apfb`] keeps expanding BFS levels until nothing new is inserted and
//!   alternates every path found;
//! * [`apsb`] stops at the first level that reaches an unmatched row, so
//!   only shortest paths are alternated.
//!
//! Each accepts either the plain [`BfsKernel::GpuBfs`] or the root-tracking
//! [`BfsKernel::GpuBfsWr`], which stops expanding a search tree once its
//! root has a path. With `improved` set, the WR kernel stores the endpoint
//! row in the root's `bfs_array` slot as `-(row)` and [`alternate_wr`] walks
//! exactly one path per root.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use serde::Serialize;
use thiserror::Error;

use crate::graph::BipartiteGraph;
use crate::grid::{
    assigned_vertex, get_process_count, GridConfig, KernelFault, Launcher, SharedArray, SharedFlag,
};
use crate::matching::{validate, MatchingState, Violation, PENDING, UNMATCHED};

pub const DEFAULT_L0: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BfsKernel {
    GpuBfs,
    GpuBfsWr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Driver {
    Apfb,
    Apsb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhaseConfig {
    pub driver: Driver,
    pub kernel: BfsKernel,
    /// Endpoint encoding in GPUBFS-WR plus the one-walk-per-root alternation.
    pub improved: bool,
    pub l0: i32,
}

impl PhaseConfig {
    pub fn new(driver: Driver, kernel: BfsKernel, improved: bool) -> Self {
        Self {
            driver,
            kernel,
            improved,
            l0: DEFAULT_L0,
        }
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(transparent)]
    Kernel(#[from] KernelFault),
    #[error("initial matching is not clean: {0:?}")]
    InvalidInit(Vec<Violation>),
    #[error("improved endpoint encoding needs GPUBFS-WR with L0 = 2 (got {kernel:?}, L0 = {l0})")]
    BadConfig { kernel: BfsKernel, l0: i32 },
    #[error("no termination after {0} phases")]
    PhaseLimit(usize),
}

/// Matching arrays as seen by kernels.
#[derive(Debug)]
pub struct SharedMatching {
    pub rmatch: SharedArray,
    pub cmatch: SharedArray,
}

impl SharedMatching {
    pub fn from_state(m: &MatchingState) -> Self {
        Self {
            rmatch: SharedArray::from_slice(&m.rmatch),
            cmatch: SharedArray::from_slice(&m.cmatch),
        }
    }

    pub fn to_state(&self) -> MatchingState {
        MatchingState {
            rmatch: self.rmatch.to_vec(),
            cmatch: self.cmatch.to_vec(),
        }
    }

    pub fn cardinality(&self) -> usize {
        (0..self.rmatch.len())
            .filter(|&r| self.rmatch.load(r) >= 0)
            .count()
    }
}

/// Per-phase BFS arrays and flags.
#[derive(Debug)]
pub struct BfsPhaseState {
    pub bfs_array: SharedArray,
    pub predecessor: SharedArray,
    pub root: SharedArray,
    pub l0: i32,
    pub bfs_level: i32,
    pub vertex_inserted: SharedFlag,
    pub augmenting_path_found: SharedFlag,
    columns_scanned: AtomicUsize,
    scan_trace: Option<Box<[AtomicBool]>>,
}

impl BfsPhaseState {
    pub fn new(nc: usize, nr: usize, l0: i32) -> Self {
        Self {
            bfs_array: SharedArray::filled(nc, l0 - 1),
            predecessor: SharedArray::filled(nr, UNMATCHED),
            root: SharedArray::filled(nc, 0),
            l0,
            bfs_level: l0,
            vertex_inserted: SharedFlag::new(false),
            augmenting_path_found: SharedFlag::new(false),
            columns_scanned: AtomicUsize::new(0),
            scan_trace: None,
        }
    }

    /// Records which columns get their adjacency scanned.
    pub fn with_scan_trace(mut self) -> Self {
        self.scan_trace = Some((0..self.bfs_array.len()).map(|_| AtomicBool::new(false)).collect());
        self
    }

    /// InitBfsArray and InitRoot kernels plus predecessor reset.
    pub fn reset(
        &mut self,
        m: &SharedMatching,
        grid: &GridConfig,
        launcher: &mut Launcher,
    ) -> Result<(), KernelFault> {
        let nc = self.bfs_array.len();
        let nr = self.predecessor.len();
        let tot = grid.tot_thread_num;
        let l0 = self.l0;
        let (bfs, root, pred) = (&self.bfs_array, &self.root, &self.predecessor);
        launcher.execute_kernel_over(grid, nc, |tid| {
            for i in 0..get_process_count(nc, tid, tot) {
                let c = assigned_vertex(i, tid, tot);
                if m.cmatch.load(c) > UNMATCHED {
                    bfs.store(c, l0 - 1);
                    root.store(c, 0);
                } else {
                    bfs.store(c, l0);
                    root.store(c, c as i32);
                }
            }
        })?;
        launcher.execute_kernel_over(grid, nr, |tid| {
            for i in 0..get_process_count(nr, tid, tot) {
                pred.store(assigned_vertex(i, tid, tot), UNMATCHED);
            }
        })?;
        self.bfs_level = l0;
        self.vertex_inserted.lower();
        self.augmenting_path_found.lower();
        self.columns_scanned.store(0, Ordering::Relaxed);
        if let Some(trace) = &self.scan_trace {
            for t in trace.iter() {
                t.store(false, Ordering::Relaxed);
            }
        }
        Ok(())
    }

    pub fn columns_scanned(&self) -> usize {
        self.columns_scanned.load(Ordering::Relaxed)
    }

    pub fn scanned_columns(&self) -> Option<Vec<bool>> {
        self.scan_trace
            .as_ref()
            .map(|t| t.iter().map(|b| b.load(Ordering::Relaxed)).collect())
    }

    #[inline]
    fn note_scan(&self, col: usize) {
        if let Some(trace) = &self.scan_trace {
            trace[col].store(true, Ordering::Relaxed);
        }
    }
}

/// `L0 - 1` for matched columns, `L0` for unmatched ones.
pub fn init_bfs_array(cmatch: &[i32], l0: i32) -> Vec<i32> {
    cmatch
        .iter()
        .map(|&r| if r > UNMATCHED { l0 - 1 } else { l0 })
        .collect()
}

/// `0` for matched columns, the column itself for unmatched ones.
pub fn init_root(cmatch: &[i32]) -> Vec<i32> {
    cmatch
        .iter()
        .enumerate()
        .map(|(c, &r)| if r > UNMATCHED { 0 } else { c as i32 })
        .collect()
}

/// One level of the plain BFS kernel.
pub fn gpubfs(
    phase: &BfsPhaseState,
    g: &BipartiteGraph,
    m: &SharedMatching,
    grid: &GridConfig,
    launcher: &mut Launcher,
) -> Result<(), KernelFault> {
    let nc = g.num_cols();
    let tot = grid.tot_thread_num;
    let level = phase.bfs_level;
    let unvisited = phase.l0 - 1;
    let (cxadj, cadj) = (g.cxadj(), g.cadj());
    let bfs = &phase.bfs_array;
    let pred = &phase.predecessor;
    launcher.execute_kernel_over(grid, nc, |tid| {
        let mut scanned = 0;
        for i in 0..get_process_count(nc, tid, tot) {
            let col_vertex = assigned_vertex(i, tid, tot);
            if bfs.load(col_vertex) != level {
                continue;
            }
            scanned += 1;
            phase.note_scan(col_vertex);
            for &neighbor_row in &cadj[cxadj[col_vertex]..cxadj[col_vertex + 1]] {
                let neighbor_row = neighbor_row as usize;
                let col_match = m.rmatch.load(neighbor_row);
                if col_match > UNMATCHED {
                    if bfs.load(col_match as usize) == unvisited {
                        phase.vertex_inserted.raise();
                        bfs.store(col_match as usize, level + 1);
                        pred.store(neighbor_row, col_vertex as i32);
                    }
                } else if col_match == UNMATCHED {
                    m.rmatch.store(neighbor_row, PENDING);
                    pred.store(neighbor_row, col_vertex as i32);
                    phase.augmenting_path_found.raise();
                }
            }
        }
        phase.columns_scanned.fetch_add(scanned, Ordering::Relaxed);
    })
}

/// One level of the root-tracking BFS kernel. Columns whose root already has
/// a path are skipped.
pub fn gpubfs_wr(
    phase: &BfsPhaseState,
    g: &BipartiteGraph,
    m: &SharedMatching,
    grid: &GridConfig,
    launcher: &mut Launcher,
    improved: bool,
) -> Result<(), KernelFault> {
    let nc = g.num_cols();
    let tot = grid.tot_thread_num;
    let level = phase.bfs_level;
    let unvisited = phase.l0 - 1;
    let found_mark = phase.l0 - 2;
    let (cxadj, cadj) = (g.cxadj(), g.cadj());
    let (bfs, pred, root) = (&phase.bfs_array, &phase.predecessor, &phase.root);
    launcher.execute_kernel_over(grid, nc, |tid| {
        let mut scanned = 0;
        for i in 0..get_process_count(nc, tid, tot) {
            let col_vertex = assigned_vertex(i, tid, tot);
            if bfs.load(col_vertex) != level {
                continue;
            }
            let my_root = root.load(col_vertex);
            if bfs.load(my_root as usize) < unvisited {
                continue;
            }
            scanned += 1;
            phase.note_scan(col_vertex);
            for &neighbor_row in &cadj[cxadj[col_vertex]..cxadj[col_vertex + 1]] {
                let neighbor_row = neighbor_row as usize;
                let col_match = m.rmatch.load(neighbor_row);
                if col_match > UNMATCHED {
                    if bfs.load(col_match as usize) == unvisited {
                        phase.vertex_inserted.raise();
                        bfs.store(col_match as usize, level + 1);
                        root.store(col_match as usize, my_root);
                        pred.store(neighbor_row, col_vertex as i32);
                    }
                } else if col_match == UNMATCHED {
                    let mark = if improved {
                        -(neighbor_row as i32)
                    } else {
                        found_mark
                    };
                    bfs.store(my_root as usize, mark);
                    m.rmatch.store(neighbor_row, PENDING);
                    pred.store(neighbor_row, col_vertex as i32);
                    phase.augmenting_path_found.raise();
                }
            }
        }
        phase.columns_scanned.fetch_add(scanned, Ordering::Relaxed);
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AlternateStats {
    /// Walks started.
    pub walks: usize,
    /// Walks stopped by the claim check before reaching a root.
    pub claim_breaks: usize,
}

/// Flips one path, starting at `row`, towards its root. Returns whether the
/// claim check cut the walk short.
#[inline]
fn walk(m: &SharedMatching, pred: &SharedArray, row: usize) -> bool {
    let mut row_vertex = row as i32;
    while row_vertex != UNMATCHED {
        let matched_col = pred.load(row_vertex as usize);
        let matched_row = m.cmatch.load(matched_col as usize);
        // Claimed by another walk: that walk wrote a row whose predecessor is
        // `matched_col` into `cmatch[matched_col]`.
        if matched_row >= 0 && pred.load(matched_row as usize) == matched_col {
            return true;
        }
        m.cmatch.store(matched_col as usize, row_vertex);
        m.rmatch.store(row_vertex as usize, matched_col);
        row_vertex = matched_row;
    }
    false
}

/// Starts a walk from every row flagged `-2`.
pub fn alternate(
    g: &BipartiteGraph,
    m: &SharedMatching,
    predecessor: &SharedArray,
    grid: &GridConfig,
    launcher: &mut Launcher,
) -> Result<AlternateStats, KernelFault> {
    let nr = g.num_rows();
    let tot = grid.tot_thread_num;
    let walks = AtomicUsize::new(0);
    let breaks = AtomicUsize::new(0);
    launcher.execute_kernel_over(grid, nr, |tid| {
        let (mut w, mut b) = (0, 0);
        for i in 0..get_process_count(nr, tid, tot) {
            let row_vertex = assigned_vertex(i, tid, tot);
            if m.rmatch.load(row_vertex) == PENDING {
                w += 1;
                b += walk(m, predecessor, row_vertex) as usize;
            }
        }
        walks.fetch_add(w, Ordering::Relaxed);
        breaks.fetch_add(b, Ordering::Relaxed);
    })?;
    Ok(AlternateStats {
        walks: walks.into_inner(),
        claim_breaks: breaks.into_inner(),
    })
}

/// One walk per root whose `bfs_array` slot holds an encoded endpoint row.
pub fn alternate_wr(
    g: &BipartiteGraph,
    m: &SharedMatching,
    phase: &BfsPhaseState,
    grid: &GridConfig,
    launcher: &mut Launcher,
) -> Result<AlternateStats, KernelFault> {
    let nc = g.num_cols();
    let tot = grid.tot_thread_num;
    let encoded_below = phase.l0 - 1;
    let walks = AtomicUsize::new(0);
    let breaks = AtomicUsize::new(0);
    let (bfs, pred) = (&phase.bfs_array, &phase.predecessor);
    launcher.execute_kernel_over(grid, nc, |tid| {
        let (mut w, mut b) = (0, 0);
        for i in 0..get_process_count(nc, tid, tot) {
            let col = assigned_vertex(i, tid, tot);
            let code = bfs.load(col);
            if code < encoded_below {
                w += 1;
                b += walk(m, pred, (-code) as usize) as usize;
            }
        }
        walks.fetch_add(w, Ordering::Relaxed);
        breaks.fetch_add(b, Ordering::Relaxed);
    })?;
    Ok(AlternateStats {
        walks: walks.into_inner(),
        claim_breaks: breaks.into_inner(),
    })
}

/// Repair kernel pair. Rows: leftover `-2` and rows whose column points
/// elsewhere become `-1`. Columns: a column whose row points elsewhere
/// becomes `-1`. Returns the number of resets.
pub fn fix_matching_shared(
    m: &SharedMatching,
    grid: &GridConfig,
    launcher: &mut Launcher,
) -> Result<usize, KernelFault> {
    let (nr, nc) = (m.rmatch.len(), m.cmatch.len());
    let tot = grid.tot_thread_num;
    let resets = AtomicUsize::new(0);
    launcher.execute_kernel_over(grid, nr, |tid| {
        let mut n = 0;
        for i in 0..get_process_count(nr, tid, tot) {
            let r = assigned_vertex(i, tid, tot);
            let c = m.rmatch.load(r);
            if c == PENDING || (c >= 0 && m.cmatch.load(c as usize) != r as i32) {
                m.rmatch.store(r, UNMATCHED);
                n += 1;
            }
        }
        resets.fetch_add(n, Ordering::Relaxed);
    })?;
    launcher.execute_kernel_over(grid, nc, |tid| {
        let mut n = 0;
        for i in 0..get_process_count(nc, tid, tot) {
            let c = assigned_vertex(i, tid, tot);
            let r = m.cmatch.load(c);
            if r >= 0 && m.rmatch.load(r as usize) != c as i32 {
                m.cmatch.store(c, UNMATCHED);
                n += 1;
            }
        }
        resets.fetch_add(n, Ordering::Relaxed);
    })?;
    Ok(resets.into_inner())
}

/// Host-side [`fix_matching_shared`] on a plain state.
pub fn fix_matching(m: &mut MatchingState) -> usize {
    let shared = SharedMatching::from_state(m);
    let resets = fix_matching_shared(&shared, &GridConfig::mt(m.cmatch.len()), &mut Launcher::serial())
        .expect("repair kernel does not panic on in-range state");
    *m = shared.to_state();
    resets
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PhaseReport {
    pub augmenting_path_found: bool,
    pub bfs_launches: usize,
    pub columns_scanned: usize,
    pub alternate: AlternateStats,
    pub fix_resets: usize,
    /// Per-column scan marks, when tracing was requested.
    #[serde(skip)]
    pub scanned_columns: Option<Vec<bool>>,
}

/// One outer iteration: reset, BFS levels, alternation and repair.
pub fn run_phase(
    g: &BipartiteGraph,
    m: &SharedMatching,
    phase: &mut BfsPhaseState,
    grid: &GridConfig,
    launcher: &mut Launcher,
    cfg: &PhaseConfig,
) -> Result<PhaseReport, KernelFault> {
    phase.reset(m, grid, launcher)?;
    let mut report = PhaseReport::default();
    loop {
        phase.vertex_inserted.lower();
        match cfg.kernel {
            BfsKernel::GpuBfs => gpubfs(phase, g, m, grid, launcher)?,
            BfsKernel::GpuBfsWr => gpubfs_wr(phase, g, m, grid, launcher, cfg.improved)?,
        }
        report.bfs_launches += 1;
        if cfg.driver == Driver::Apsb && phase.augmenting_path_found.is_raised() {
            break;
        }
        if !phase.vertex_inserted.is_raised() {
            break;
        }
        phase.bfs_level += 1;
    }
    report.augmenting_path_found = phase.augmenting_path_found.is_raised();
    report.columns_scanned = phase.columns_scanned();
    report.scanned_columns = phase.scanned_columns();
    if report.augmenting_path_found {
        report.alternate = if cfg.improved {
            alternate_wr(g, m, phase, grid, launcher)?
        } else {
            alternate(g, m, &phase.predecessor, grid, launcher)?
        };
        report.fix_resets = fix_matching_shared(m, grid, launcher)?;
    }
    Ok(report)
}

/// Work counters of one driver run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCounters {
    pub outer_iterations: usize,
    pub bfs_launches_per_iteration: Vec<usize>,
    pub columns_scanned: usize,
    pub alternations_attempted: usize,
    pub claim_breaks: usize,
    pub fix_resets: usize,
    pub serial_fallbacks: usize,
    /// Cardinality after each outer iteration.
    pub cardinality_per_iteration: Vec<usize>,
}

impl PhaseCounters {
    pub fn total_bfs_launches(&self) -> usize {
        self.bfs_launches_per_iteration.iter().sum()
    }

    fn absorb(&mut self, r: &PhaseReport) {
        self.columns_scanned += r.columns_scanned;
        self.alternations_attempted += r.alternate.walks;
        self.claim_breaks += r.alternate.claim_breaks;
        self.fix_resets += r.fix_resets;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRun {
    pub matching: MatchingState,
    pub counters: PhaseCounters,
}

/// What an observer sees after each outer iteration.
#[derive(Debug, Clone)]
pub struct PhaseEvent {
    pub iteration: usize,
    pub before: MatchingState,
    pub after: MatchingState,
    pub report: PhaseReport,
    /// The phase made no progress and was rerun under the serial schedule;
    /// `report` and `after` describe the rerun.
    pub fallback: bool,
}

pub type PhaseObserver<'a> = &'a mut dyn FnMut(&PhaseEvent);

/// Shared outer loop of [`apfb`] and [`apsb`].
pub fn run_driver(
    g: &BipartiteGraph,
    init: &MatchingState,
    grid: &GridConfig,
    launcher: &mut Launcher,
    cfg: &PhaseConfig,
    mut observer: Option<PhaseObserver<'_>>,
) -> Result<MatchRun, MatchError> {
    if cfg.improved && (cfg.kernel != BfsKernel::GpuBfsWr || cfg.l0 != 2) {
        return Err(MatchError::BadConfig {
            kernel: cfg.kernel,
            l0: cfg.l0,
        });
    }
    let violations = validate(g, init);
    if !violations.is_empty() {
        return Err(MatchError::InvalidInit(violations));
    }
    let m = SharedMatching::from_state(init);
    let mut phase = BfsPhaseState::new(g.num_cols(), g.num_rows(), cfg.l0);
    let mut counters = PhaseCounters::default();
    let mut cardinality = init.cardinality();
    let limit = g.num_cols() + 1;
    let mut serial: Option<Launcher> = None;

    loop {
        if counters.outer_iterations == limit {
            return Err(MatchError::PhaseLimit(limit));
        }
        counters.outer_iterations += 1;
        let before = observer.as_ref().map(|_| m.to_state());
        let mut report = run_phase(g, &m, &mut phase, grid, launcher, cfg)?;
        let mut now = m.cardinality();
        let mut fallback = false;
        if report.augmenting_path_found && now <= cardinality {
            // only reachable when concurrent walks cancelled each other out
            let serial = serial.get_or_insert_with(Launcher::serial);
            counters.absorb(&report);
            report = run_phase(g, &m, &mut phase, grid, serial, cfg)?;
            now = m.cardinality();
            counters.serial_fallbacks += 1;
            fallback = true;
        }
        counters.absorb(&report);
        counters.bfs_launches_per_iteration.push(report.bfs_launches);
        counters.cardinality_per_iteration.push(now);
        cardinality = now;
        let found = report.augmenting_path_found;
        if let (Some(obs), Some(before)) = (observer.as_mut(), before) {
            obs(&PhaseEvent {
                iteration: counters.outer_iterations,
                before,
                after: m.to_state(),
                report,
                fallback,
            });
        }
        if !found {
            break;
        }
    }
    Ok(MatchRun {
        matching: m.to_state(),
        counters,
    })
}

/// Full-BFS driver: expands every level before alternating.
pub fn apfb(
    g: &BipartiteGraph,
    init: &MatchingState,
    grid: &GridConfig,
    launcher: &mut Launcher,
    kernel: BfsKernel,
) -> Result<MatchRun, MatchError> {
    let cfg = PhaseConfig::new(Driver::Apfb, kernel, false);
    run_driver(g, init, grid, launcher, &cfg, None)
}

/// Shortest-path driver: stops the BFS at the first level that finds a path.
/// `improved_alternate` only takes effect with [`BfsKernel::GpuBfsWr`].
pub fn apsb(
    g: &BipartiteGraph,
    init: &MatchingState,
    grid: &GridConfig,
    launcher: &mut Launcher,
    kernel: BfsKernel,
    improved_alternate: bool,
) -> Result<MatchRun, MatchError> {
    let improved = improved_alternate && kernel == BfsKernel::GpuBfsWr;
    let cfg = PhaseConfig::new(Driver::Apsb, kernel, improved);
    run_driver(g, init, grid, launcher, &cfg, None)
}

/// Runs a single phase from `snapshot` and returns its report and the
/// resulting matching. Used to compare kernels from identical states.
pub fn run_single_phase(
    g: &BipartiteGraph,
    snapshot: &MatchingState,
    grid: &GridConfig,
    launcher: &mut Launcher,
    cfg: &PhaseConfig,
    trace_scans: bool,
) -> Result<(PhaseReport, MatchingState), KernelFault> {
    let m = SharedMatching::from_state(snapshot);
    let mut phase = BfsPhaseState::new(g.num_cols(), g.num_rows(), cfg.l0);
    if trace_scans {
        phase = phase.with_scan_trace();
    }
    let report = run_phase(g, &m, &mut phase, grid, launcher, cfg)?;
    Ok((report, m.to_state()))
}
