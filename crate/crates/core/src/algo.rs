//! Algorithm identifiers shared by the CLI and the benchmark runner.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::baselines::{hopcroft_karp, pfp};
use crate::gpu::{run_driver, BfsKernel, Driver, MatchError, PhaseConfig, PhaseCounters};
use crate::graph::BipartiteGraph;
use crate::grid::{GridMode, GridOptions, Launcher};
use crate::matching::MatchingState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Hk,
    Pfp,
    Gpu {
        driver: Driver,
        kernel: BfsKernel,
        grid: GridMode,
    },
    /// Drops one matched pair from the HK result. Exists so tests can check
    /// that the benchmark runner flags wrong answers.
    #[doc(hidden)]
    Faulty,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown algorithm `{0}`")]
pub struct UnknownAlgorithm(pub String);

impl Algorithm {
    /// The eight BFS-kernel configurations.
    pub fn gpu_variants() -> Vec<Algorithm> {
        let mut out = Vec::with_capacity(8);
        for driver in [Driver::Apfb, Driver::Apsb] {
            for kernel in [BfsKernel::GpuBfs, BfsKernel::GpuBfsWr] {
                for grid in [GridMode::Mt, GridMode::Ct] {
                    out.push(Algorithm::Gpu {
                        driver,
                        kernel,
                        grid,
                    });
                }
            }
        }
        out
    }

    /// Parses an identifier. Without a `-ct`/`-mt` suffix a GPU identifier
    /// takes `default_grid`.
    pub fn parse_with_grid(s: &str, default_grid: GridMode) -> Result<Self, UnknownAlgorithm> {
        let unknown = || UnknownAlgorithm(s.to_string());
        match s {
            "hk" => return Ok(Algorithm::Hk),
            "pfp" => return Ok(Algorithm::Pfp),
            "faulty" => return Ok(Algorithm::Faulty),
            _ => {}
        }
        let (stem, grid) = match s.rsplit_once('-') {
            Some((stem, "ct")) => (stem, GridMode::Ct),
            Some((stem, "mt")) => (stem, GridMode::Mt),
            _ => (s, default_grid),
        };
        let (driver, kernel) = match stem {
            "apfb-gpubfs" => (Driver::Apfb, BfsKernel::GpuBfs),
            "apfb-wr" => (Driver::Apfb, BfsKernel::GpuBfsWr),
            "apsb-gpubfs" => (Driver::Apsb, BfsKernel::GpuBfs),
            "apsb-wr" => (Driver::Apsb, BfsKernel::GpuBfsWr),
            _ => return Err(unknown()),
        };
        Ok(Algorithm::Gpu {
            driver,
            kernel,
            grid,
        })
    }

    pub fn with_grid(self, mode: GridMode) -> Self {
        match self {
            Algorithm::Gpu { driver, kernel, .. } => Algorithm::Gpu {
                driver,
                kernel,
                grid: mode,
            },
            other => other,
        }
    }

    /// Phase configuration of a GPU identifier. APsB with GPUBFS-WR carries the
    /// endpoint-encoding improvement; APFB never does.
    pub fn phase_config(&self) -> Option<PhaseConfig> {
        match *self {
            Algorithm::Gpu { driver, kernel, .. } => {
                let improved = driver == Driver::Apsb && kernel == BfsKernel::GpuBfsWr;
                Some(PhaseConfig::new(driver, kernel, improved))
            }
            _ => None,
        }
    }

    pub fn run(
        &self,
        g: &BipartiteGraph,
        init: &MatchingState,
        launcher: &mut Launcher,
        grid_opts: &GridOptions,
    ) -> Result<AlgorithmRun, MatchError> {
        Ok(match self {
            Algorithm::Hk => AlgorithmRun::plain(hopcroft_karp(g, init)),
            Algorithm::Pfp => AlgorithmRun::plain(pfp(g, init)),
            Algorithm::Faulty => {
                let mut m = hopcroft_karp(g, init);
                let first = m.pairs().next();
                if let Some((r, c)) = first {
                    m.rmatch[r] = -1;
                    m.cmatch[c] = -1;
                }
                AlgorithmRun::plain(m)
            }
            Algorithm::Gpu { grid, .. } => {
                let cfg = self.phase_config().expect("gpu identifier");
                let grid = grid_opts.resolve(*grid, g.num_cols());
                let run = run_driver(g, init, &grid, launcher, &cfg, None)?;
                AlgorithmRun {
                    matching: run.matching,
                    counters: Some(run.counters),
                }
            }
        })
    }
}

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_with_grid(s, GridMode::Ct)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Hk => f.write_str("hk"),
            Algorithm::Pfp => f.write_str("pfp"),
            Algorithm::Faulty => f.write_str("faulty"),
            Algorithm::Gpu {
                driver,
                kernel,
                grid,
            } => {
                let d = match driver {
                    Driver::Apfb => "apfb",
                    Driver::Apsb => "apsb",
                };
                let k = match kernel {
                    BfsKernel::GpuBfs => "gpubfs",
                    BfsKernel::GpuBfsWr => "wr",
                };
                write!(f, "{d}-{k}-{grid}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub matching: MatchingState,
    pub counters: Option<PhaseCounters>,
}

impl AlgorithmRun {
    fn plain(matching: MatchingState) -> Self {
        Self {
            matching,
            counters: None,
        }
    }
}
