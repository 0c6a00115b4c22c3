//! Emulated GPU thread grid.
//!
//! A kernel is a per-thread procedure `Fn(tid)` run once for every virtual
//! thread of a [`GridConfig`]. Kernels share state through [`SharedArray`]
//! and [`SharedFlag`], whose element loads and stores are indivisible but
//! otherwise unordered (relaxed): concurrent writes to one element resolve to
//! one of the written values, and no read-modify-write is offered.

use std::any::Any;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicI32, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Size of the paper-default constant grid: 256 blocks of 256 threads.
pub const CT_THREADS: usize = 256 * 256;
/// Default architecture cap used by MT grids.
pub const DEFAULT_MAX_THREADS: usize = 65536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// Constant thread count; each thread owns several vertices.
    Ct,
    /// One thread per column, capped at `max_threads`.
    Mt,
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridMode::Ct => "ct",
            GridMode::Mt => "mt",
        })
    }
}

impl FromStr for GridMode {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ct" => Ok(GridMode::Ct),
            "mt" => Ok(GridMode::Mt),
            _ => Err(GridError::BadMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridConfig {
    pub mode: GridMode,
    pub tot_thread_num: usize,
    pub max_threads: usize,
}

impl GridConfig {
    pub fn ct() -> Self {
        Self::ct_with_threads(CT_THREADS)
    }

    pub fn ct_with_threads(threads: usize) -> Self {
        Self {
            mode: GridMode::Ct,
            tot_thread_num: threads.max(1),
            max_threads: DEFAULT_MAX_THREADS,
        }
    }

    pub fn mt(nc: usize) -> Self {
        Self::mt_with_cap(nc, DEFAULT_MAX_THREADS)
    }

    pub fn mt_with_cap(nc: usize, max_threads: usize) -> Self {
        Self {
            mode: GridMode::Mt,
            tot_thread_num: nc.min(max_threads).max(1),
            max_threads,
        }
    }
}

/// Thread-count knobs, resolved against a graph by [`GridOptions::resolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOptions {
    pub ct_threads: usize,
    pub max_threads: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            ct_threads: CT_THREADS,
            max_threads: DEFAULT_MAX_THREADS,
        }
    }
}

impl GridOptions {
    pub fn resolve(&self, mode: GridMode, nc: usize) -> GridConfig {
        match mode {
            GridMode::Ct => GridConfig {
                max_threads: self.max_threads,
                ..GridConfig::ct_with_threads(self.ct_threads)
            },
            GridMode::Mt => GridConfig::mt_with_cap(nc, self.max_threads),
        }
    }
}

/// Number of items of an `n`-item domain owned by thread `tid`.
#[inline]
pub fn get_process_count(n: usize, tid: usize, tot_thread_num: usize) -> usize {
    debug_assert!(tid < tot_thread_num);
    if tid < n % tot_thread_num {
        n.div_ceil(tot_thread_num)
    } else {
        n / tot_thread_num
    }
}

/// Item handled by thread `tid` in its `i`-th iteration. Items of one thread
/// are `tot_thread_num` apart so that neighboring threads touch neighboring
/// items.
#[inline]
pub fn assigned_vertex(i: usize, tid: usize, tot_thread_num: usize) -> usize {
    i * tot_thread_num + tid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "arg", rename_all = "lowercase")]
pub enum Schedule {
    /// tids ascending, each run to completion.
    Serial,
    /// tids in a seeded random order, each run to completion.
    Shuffled(u64),
    /// contiguous tid blocks spread over concurrent workers.
    Parallel(usize),
}

impl Schedule {
    pub fn parallel_default() -> Self {
        Schedule::Parallel(default_workers())
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Serial => f.write_str("serial"),
            Schedule::Shuffled(seed) => write!(f, "shuffled:{seed}"),
            Schedule::Parallel(w) => write!(f, "parallel:{w}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GridError::BadSchedule(s.to_string());
        match s.split_once(':') {
            None if s == "serial" => Ok(Schedule::Serial),
            None if s == "parallel" => Ok(Schedule::parallel_default()),
            Some(("shuffled", seed)) => seed.parse().map(Schedule::Shuffled).map_err(|_| bad()),
            Some(("parallel", w)) => match w.parse::<usize>() {
                Ok(w) if w > 0 => Ok(Schedule::Parallel(w)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("unknown grid mode `{0}` (expected ct or mt)")]
    BadMode(String),
    #[error("unknown schedule `{0}` (expected serial, shuffled:<seed> or parallel:<workers>)")]
    BadSchedule(String),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

/// A kernel panicked; `tid` is the virtual thread that faulted.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("kernel fault in thread {tid}: {message}")]
pub struct KernelFault {
    pub tid: usize,
    pub message: String,
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

fn run_guarded<K: Fn(usize)>(kernel: &K, tid: usize) -> Result<(), KernelFault> {
    catch_unwind(AssertUnwindSafe(|| kernel(tid))).map_err(|p| KernelFault {
        tid,
        message: panic_message(p),
    })
}

/// Executes kernels under one [`Schedule`]. Reusable across launches; a
/// shuffled launcher draws a fresh permutation for every launch from its
/// seeded stream, and a parallel launcher keeps its worker pool.
pub struct Launcher {
    schedule: Schedule,
    rng: Option<ChaCha8Rng>,
    pool: Option<rayon::ThreadPool>,
    order: Vec<usize>,
}

impl fmt::Debug for Launcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Launcher")
            .field("schedule", &self.schedule)
            .finish()
    }
}

impl Launcher {
    pub fn new(schedule: Schedule) -> Result<Self, GridError> {
        let rng = match schedule {
            Schedule::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let pool = match schedule {
            Schedule::Parallel(workers) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers.max(1))
                    .thread_name(|i| format!("grid-worker-{i}"))
                    .build()
                    .map_err(|e| GridError::Pool(e.to_string()))?,
            ),
            _ => None,
        };
        Ok(Self {
            schedule,
            rng,
            pool,
            order: Vec::new(),
        })
    }

    pub fn serial() -> Self {
        Self::new(Schedule::Serial).expect("serial launcher needs no resources")
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    /// Runs `kernel` once for every `tid` in `0..grid.tot_thread_num`.
    pub fn execute_kernel<K>(&mut self, grid: &GridConfig, kernel: K) -> Result<(), KernelFault>
    where
        K: Fn(usize) + Sync,
    {
        self.run(grid.tot_thread_num, kernel)
    }

    /// Like [`execute_kernel`](Self::execute_kernel) for a kernel that walks
    /// an `items`-element domain with the [`get_process_count`] split: threads
    /// with a zero count would do nothing and are not dispatched.
    pub fn execute_kernel_over<K>(
        &mut self,
        grid: &GridConfig,
        items: usize,
        kernel: K,
    ) -> Result<(), KernelFault>
    where
        K: Fn(usize) + Sync,
    {
        self.run(grid.tot_thread_num.min(items), kernel)
    }

    fn run<K>(&mut self, threads: usize, kernel: K) -> Result<(), KernelFault>
    where
        K: Fn(usize) + Sync,
    {
        match self.schedule {
            Schedule::Serial => (0..threads).try_for_each(|tid| run_guarded(&kernel, tid)),
            Schedule::Shuffled(_) => {
                let rng = self.rng.as_mut().expect("shuffled launcher has an rng");
                self.order.clear();
                self.order.extend(0..threads);
                self.order.shuffle(rng);
                self.order
                    .iter()
                    .try_for_each(|&tid| run_guarded(&kernel, tid))
            }
            Schedule::Parallel(workers) => {
                let pool = self.pool.as_ref().expect("parallel launcher has a pool");
                let blocks = workers.max(1).min(threads.max(1));
                let fault: Mutex<Option<KernelFault>> = Mutex::new(None);
                pool.scope(|s| {
                    for b in 0..blocks {
                        let start = b * threads / blocks;
                        let end = (b + 1) * threads / blocks;
                        let kernel = &kernel;
                        let fault = &fault;
                        s.spawn(move |_| {
                            for tid in start..end {
                                if let Err(f) = run_guarded(kernel, tid) {
                                    let mut slot = fault.lock().unwrap();
                                    if slot.is_none() {
                                        *slot = Some(f);
                                    }
                                    return;
                                }
                            }
                        });
                    }
                });
                match fault.into_inner().unwrap() {
                    Some(f) => Err(f),
                    None => Ok(()),
                }
            }
        }
    }
}

/// Integer array shared by all threads of a launch.
pub struct SharedArray(Box<[AtomicI32]>);

impl SharedArray {
    pub fn filled(len: usize, value: i32) -> Self {
        Self((0..len).map(|_| AtomicI32::new(value)).collect())
    }

    pub fn from_slice(values: &[i32]) -> Self {
        Self(values.iter().map(|&v| AtomicI32::new(v)).collect())
    }

    #[inline]
    pub fn load(&self, i: usize) -> i32 {
        self.0[i].load(Ordering::Relaxed)
    }

    #[inline]
    pub fn store(&self, i: usize, v: i32) {
        self.0[i].store(v, Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_vec(&self) -> Vec<i32> {
        self.0.iter().map(|a| a.load(Ordering::Relaxed)).collect()
    }

    pub fn copy_from(&self, values: &[i32]) {
        assert_eq!(values.len(), self.len());
        for (a, &v) in self.0.iter().zip(values) {
            a.store(v, Ordering::Relaxed);
        }
    }
}

impl fmt::Debug for SharedArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

/// Boolean flag raised by kernels and lowered only between launches.
#[derive(Debug, Default)]
pub struct SharedFlag(AtomicBool);

impl SharedFlag {
    pub fn new(v: bool) -> Self {
        Self(AtomicBool::new(v))
    }

    #[inline]
    pub fn raise(&self) {
        self.0.store(true, Ordering::Relaxed)
    }

    pub fn is_raised(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }

    /// Host-side reset, never called from inside a kernel.
    pub fn lower(&mut self) {
        *self.0.get_mut() = false;
    }
}
