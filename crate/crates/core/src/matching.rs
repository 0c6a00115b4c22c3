//! Matching state with `rmatch`/`cmatch` arrays.
//!
//! Sentinels: `-1` marks an unmatched vertex; `-2` in `rmatch` marks a row
//! that a BFS kernel has flagged as the endpoint of an augmenting path. A
//! "clean" state (between kernel phases) holds no `-2` and is mutually
//! consistent.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::graph::BipartiteGraph;

pub const UNMATCHED: i32 = -1;
pub const PENDING: i32 = -2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingState {
    pub rmatch: Vec<i32>,
    pub cmatch: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LengthMismatch { rmatch: usize, cmatch: usize, nr: usize, nc: usize },
    OutOfRange { side: Side, vertex: usize, value: i32 },
    Pending { row: usize },
    /// `rmatch[row] = col` but `cmatch[col] != row`.
    RowAsymmetry { row: usize, col: usize },
    /// `cmatch[col] = row` but `rmatch[row] != col`.
    ColumnAsymmetry { col: usize, row: usize },
    NonEdge { row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Row,
    Column,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch { rmatch, cmatch, nr, nc } => write!(
                f,
                "length mismatch: rmatch {rmatch} (nr {nr}), cmatch {cmatch} (nc {nc})"
            ),
            Violation::OutOfRange { side, vertex, value } => {
                write!(f, "{side:?} {vertex} holds out-of-range match {value}")
            }
            Violation::Pending { row } => write!(f, "row {row} still flagged pending (-2)"),
            Violation::RowAsymmetry { row, col } => {
                write!(f, "row {row} -> column {col}, but column {col} does not point back")
            }
            Violation::ColumnAsymmetry { col, row } => {
                write!(f, "column {col} -> row {row}, but row {row} does not point back")
            }
            Violation::NonEdge { row, col } => {
                write!(f, "pair (row {row}, column {col}) is not an edge")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("invalid matching: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl MatchingState {
    pub fn empty(nc: usize, nr: usize) -> Self {
        Self {
            rmatch: vec![UNMATCHED; nr],
            cmatch: vec![UNMATCHED; nc],
        }
    }

    pub fn for_graph(g: &BipartiteGraph) -> Self {
        Self::empty(g.num_cols(), g.num_rows())
    }

    /// Number of matched rows. `rmatch` is the source of truth.
    pub fn cardinality(&self) -> usize {
        self.rmatch.iter().filter(|&&c| c >= 0).count()
    }

    pub fn cardinality_by_columns(&self) -> usize {
        self.cmatch.iter().filter(|&&r| r >= 0).count()
    }

    /// Matched `(row, col)` pairs read from `rmatch`, ascending by row.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rmatch
            .iter()
            .enumerate()
            .filter(|(_, &c)| c >= 0)
            .map(|(r, &c)| (r, c as usize))
    }

    /// Builds a state from `(row, col)` pairs; a vertex used twice is an error.
    pub fn from_pairs(nc: usize, nr: usize, pairs: &[(usize, usize)]) -> Result<Self, String> {
        let mut m = Self::empty(nc, nr);
        for &(r, c) in pairs {
            if r >= nr || c >= nc {
                return Err(format!("pair (row {r}, column {c}) out of range"));
            }
            if m.rmatch[r] != UNMATCHED {
                return Err(format!("row {r} matched twice"));
            }
            if m.cmatch[c] != UNMATCHED {
                return Err(format!("column {c} matched twice"));
            }
            m.rmatch[r] = c as i32;
            m.cmatch[c] = r as i32;
        }
        Ok(m)
    }

    /// Writes one `r <row> <col>` line per matched pair.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut buf = String::new();
        for (r, c) in self.pairs() {
            buf.push_str(&format!("r {r} {c}\n"));
        }
        out.write_all(buf.as_bytes())
    }
}

/// Parses a matching dump into `(row, col)` pairs.
pub fn read_dump<R: BufRead>(source: R) -> Result<Vec<(usize, usize)>, MatchingError> {
    let mut pairs = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: &str| MatchingError::Dump {
            line: i + 1,
            message: message.to_string(),
        };
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "r" {
            return Err(err("expected `r <row> <col>`"));
        }
        let row = parts[1].parse().map_err(|_| err("invalid row index"))?;
        let col = parts[2].parse().map_err(|_| err("invalid column index"))?;
        pairs.push((row, col));
    }
    Ok(pairs)
}

/// First-fit greedy: each column, in ascending order, takes its first
/// unmatched neighbor.
pub fn cheap_matching(g: &BipartiteGraph) -> MatchingState {
    let mut m = MatchingState::for_graph(g);
    for c in 0..g.num_cols() {
        if let Some(&r) = g
            .neighbors(c)
            .iter()
            .find(|&&r| m.rmatch[r as usize] == UNMATCHED)
        {
            m.rmatch[r as usize] = c as i32;
            m.cmatch[c] = r as i32;
        }
    }
    m
}

/// Lists every violated invariant; an empty list means the state is clean.
pub fn validate(g: &BipartiteGraph, m: &MatchingState) -> Vec<Violation> {
    let (nc, nr) = (g.num_cols(), g.num_rows());
    if m.rmatch.len() != nr || m.cmatch.len() != nc {
        return vec![Violation::LengthMismatch {
            rmatch: m.rmatch.len(),
            cmatch: m.cmatch.len(),
            nr,
            nc,
        }];
    }
    let mut out = Vec::new();
    for (r, &c) in m.rmatch.iter().enumerate() {
        match c {
            PENDING => out.push(Violation::Pending { row: r }),
            UNMATCHED => {}
            c if c < 0 || c as usize >= nc => out.push(Violation::OutOfRange {
                side: Side::Row,
                vertex: r,
                value: c,
            }),
            c => {
                let c = c as usize;
                if m.cmatch[c] != r as i32 {
                    out.push(Violation::RowAsymmetry { row: r, col: c });
                } else if !g.has_edge(c, r) {
                    out.push(Violation::NonEdge { row: r, col: c });
                }
            }
        }
    }
    for (c, &r) in m.cmatch.iter().enumerate() {
        match r {
            UNMATCHED => {}
            r if r < 0 || r as usize >= nr => out.push(Violation::OutOfRange {
                side: Side::Column,
                vertex: c,
                value: r,
            }),
            r => {
                if m.rmatch[r as usize] != c as i32 {
                    out.push(Violation::ColumnAsymmetry {
                        col: c,
                        row: r as usize,
                    });
                }
            }
        }
    }
    out
}

/// Berge check: one alternating BFS from every unmatched column looking for
/// any unmatched row.
pub fn is_maximum(g: &BipartiteGraph, m: &MatchingState) -> Result<bool, MatchingError> {
    let violations = validate(g, m);
    if !violations.is_empty() {
        return Err(MatchingError::Invalid(violations));
    }
    let mut seen = vec![false; g.num_cols()];
    let mut queue: VecDeque<usize> = (0..g.num_cols())
        .filter(|&c| m.cmatch[c] == UNMATCHED)
        .collect();
    for &c in &queue {
        seen[c] = true;
    }
    while let Some(c) = queue.pop_front() {
        for &r in g.neighbors(c) {
            let next = m.rmatch[r as usize];
            if next == UNMATCHED {
                return Ok(false);
            }
            let next = next as usize;
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    Ok(true)
}

/// Maximum matching cardinality by repeated single-source DFS augmentation
/// (Kuhn's algorithm) from each column. Quadratic; meant as a test oracle.
pub fn brute_force_maximum(g: &BipartiteGraph) -> usize {
    let nc = g.num_cols();
    let mut rmatch = vec![usize::MAX; g.num_rows()];
    let mut visited = vec![usize::MAX; g.num_rows()];
    let mut size = 0;
    // stack of (column, next neighbor position); rows taken on the way
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut via: Vec<usize> = Vec::new();
    for start in 0..nc {
        stack.clear();
        via.clear();
        stack.push((start, 0));
        let mut end_row = None;
        while let Some(&mut (c, ref mut pos)) = stack.last_mut() {
            let adj = g.neighbors(c);
            if *pos == adj.len() {
                stack.pop();
                via.pop();
                continue;
            }
            let r = adj[*pos] as usize;
            *pos += 1;
            if visited[r] == start {
                continue;
            }
            visited[r] = start;
            if rmatch[r] == usize::MAX {
                end_row = Some(r);
                break;
            }
            via.push(r);
            stack.push((rmatch[r], 0));
        }
        if let Some(r) = end_row {
            // stack[k].0 takes via[k] for k > 0 ... flip along the path
            let mut row = r;
            for k in (0..stack.len()).rev() {
                let col = stack[k].0;
                rmatch[row] = col;
                if k > 0 {
                    row = via[k - 1];
                }
            }
            size += 1;
        }
    }
    size
}
