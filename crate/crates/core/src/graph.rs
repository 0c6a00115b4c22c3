//! Bipartite graphs in compressed sparse column form.
//!
//! Columns are the search side: every algorithm in this crate starts its
//! traversals from columns via `cxadj`/`cadj` and crosses back to columns
//! through the matching, so no row-major copy is kept.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge #{index} (column {col}, row {row}) is out of range for a {nc}x{nr} graph")]
    EdgeOutOfRange {
        index: usize,
        col: usize,
        row: usize,
        nc: usize,
        nr: usize,
    },
    #[error("invalid CSR: {0}")]
    InvalidCsr(String),
    #[error("graph too large: {0} vertices exceed the 32-bit index range")]
    TooLarge(usize),
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("entry count mismatch: header declares {expected}, found {found}")]
    EntryCount { expected: usize, found: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

/// Column-major adjacency of a bipartite graph with `nc` columns and `nr` rows.
///
/// Each column's slice `cadj[cxadj[c]..cxadj[c + 1]]` is sorted ascending and
/// duplicate free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    nc: usize,
    nr: usize,
    cxadj: Vec<usize>,
    cadj: Vec<u32>,
    name: String,
}

impl BipartiteGraph {
    /// Builds a graph from `(column, row)` pairs. Duplicates are dropped.
    pub fn from_edge_list(
        nc: usize,
        nr: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        check_index_range(nc, nr)?;
        let mut degree = vec![0usize; nc + 1];
        for (index, &(col, row)) in edges.iter().enumerate() {
            if col >= nc || row >= nr {
                return Err(GraphError::EdgeOutOfRange {
                    index,
                    col,
                    row,
                    nc,
                    nr,
                });
            }
            degree[col + 1] += 1;
        }
        for c in 0..nc {
            degree[c + 1] += degree[c];
        }
        let mut fill = degree.clone();
        let mut cadj = vec![0u32; edges.len()];
        for &(col, row) in edges {
            cadj[fill[col]] = row as u32;
            fill[col] += 1;
        }
        Ok(Self::compact(nc, nr, degree, cadj))
    }

    /// Builds a graph from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        nc: usize,
        nr: usize,
        cxadj: Vec<usize>,
        cadj: Vec<u32>,
    ) -> Result<Self, GraphError> {
        check_index_range(nc, nr)?;
        let g = Self {
            nc,
            nr,
            cxadj,
            cadj,
            name: String::new(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Sorts and deduplicates each column slice of an unsorted CSR.
    fn compact(nc: usize, nr: usize, cxadj: Vec<usize>, mut cadj: Vec<u32>) -> Self {
        let mut out_xadj = Vec::with_capacity(nc + 1);
        out_xadj.push(0);
        let mut write = 0;
        for c in 0..nc {
            let (start, end) = (cxadj[c], cxadj[c + 1]);
            cadj[start..end].sort_unstable();
            let mut last = None;
            for k in start..end {
                let row = cadj[k];
                if last != Some(row) {
                    cadj[write] = row;
                    write += 1;
                    last = Some(row);
                }
            }
            out_xadj.push(write);
        }
        cadj.truncate(write);
        cadj.shrink_to_fit();
        Self {
            nc,
            nr,
            cxadj: out_xadj,
            cadj,
            name: String::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_cols(&self) -> usize {
        self.nc
    }

    pub fn num_rows(&self) -> usize {
        self.nr
    }

    pub fn num_edges(&self) -> usize {
        self.cadj.len()
    }

    pub fn cxadj(&self) -> &[usize] {
        &self.cxadj
    }

    pub fn cadj(&self) -> &[u32] {
        &self.cadj
    }

    /// Rows adjacent to column `c`, ascending.
    #[inline]
    pub fn neighbors(&self, c: usize) -> &[u32] {
        &self.cadj[self.cxadj[c]..self.cxadj[c + 1]]
    }

    pub fn degree(&self, c: usize) -> usize {
        self.cxadj[c + 1] - self.cxadj[c]
    }

    pub fn has_edge(&self, col: usize, row: usize) -> bool {
        col < self.nc && self.neighbors(col).binary_search(&(row as u32)).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nc).flat_map(move |c| self.neighbors(c).iter().map(move |&r| (c, r as usize)))
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nr];
        for &r in &self.cadj {
            deg[r as usize] += 1;
        }
        deg
    }

    /// Walks the CSR arrays and reports the first broken invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::InvalidCsr(m));
        if self.cxadj.len() != self.nc + 1 {
            return bad(format!(
                "cxadj has length {}, expected {}",
                self.cxadj.len(),
                self.nc + 1
            ));
        }
        if self.cxadj[0] != 0 {
            return bad("cxadj[0] != 0".into());
        }
        if self.cxadj[self.nc] != self.cadj.len() {
            return bad(format!(
                "cxadj[nc] = {} but cadj has {} entries",
                self.cxadj[self.nc],
                self.cadj.len()
            ));
        }
        for c in 0..self.nc {
            if self.cxadj[c] > self.cxadj[c + 1] {
                return bad(format!("cxadj decreases at column {c}"));
            }
            let slice = self.neighbors(c);
            for (k, &r) in slice.iter().enumerate() {
                if r as usize >= self.nr {
                    return bad(format!("column {c} has row {r} >= nr = {}", self.nr));
                }
                if k > 0 && slice[k - 1] >= r {
                    return bad(format!("column {c} is unsorted or repeats row {r}"));
                }
            }
        }
        Ok(())
    }
}

fn check_index_range(nc: usize, nr: usize) -> Result<(), GraphError> {
    let limit = i32::MAX as usize;
    if nc > limit {
        return Err(GraphError::TooLarge(nc));
    }
    if nr > limit {
        return Err(GraphError::TooLarge(nr));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Reads a Matrix Market coordinate file. Matrix rows become row vertices and
/// matrix columns become column vertices; numeric values are discarded.
pub fn read_matrix_market<R: BufRead>(source: R) -> Result<BipartiteGraph, ParseError> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (line_no, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return Err(syntax(1, "empty input")),
    };
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(syntax(line_no, "missing %%MatrixMarket header"));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(syntax(
            line_no,
            format!("unsupported format `{} {}`", tokens[1], tokens[2]),
        ));
    }
    let has_value = match tokens[3].as_str() {
        "pattern" => false,
        "real" | "integer" | "double" => true,
        other => return Err(syntax(line_no, format!("unsupported field `{other}`"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(syntax(line_no, format!("unsupported symmetry `{other}`"))),
    };

    let mut size = None;
    for (n, line) in lines.by_ref() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(syntax(n, "size line must hold `rows cols entries`"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| syntax(n, format!("invalid count `{s}`")))
        };
        size = Some((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
        break;
    }
    let (nrows, ncols, nnz) = size.ok_or_else(|| syntax(line_no, "missing size line"))?;
    if symmetry == Symmetry::Symmetric && nrows != ncols {
        return Err(syntax(line_no, "symmetric matrix must be square"));
    }
    check_index_range(ncols, nrows)?;

    let mut edges = Vec::with_capacity(match symmetry {
        Symmetry::General => nnz,
        Symmetry::Symmetric => 2 * nnz,
    });
    let mut found = 0usize;
    for (n, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        found += 1;
        if found > nnz {
            continue;
        }
        let mut parts = t.split_whitespace();
        let mut index = |what: &str, bound: usize| -> Result<usize, ParseError> {
            let tok = parts
                .next()
                .ok_or_else(|| syntax(n, format!("missing {what} index")))?;
            let v: usize = tok
                .parse()
                .map_err(|_| syntax(n, format!("invalid {what} index `{tok}`")))?;
            if v == 0 || v > bound {
                return Err(syntax(
                    n,
                    format!("{what} index {v} outside 1..={bound}"),
                ));
            }
            Ok(v - 1)
        };
        let row = index("row", nrows)?;
        let col = index("column", ncols)?;
        if has_value {
            let tok = parts.next().ok_or_else(|| syntax(n, "missing value"))?;
            tok.parse::<f64>()
                .map_err(|_| syntax(n, format!("invalid value `{tok}`")))?;
        }
        if parts.next().is_some() {
            return Err(syntax(n, "trailing tokens"));
        }
        edges.push((col, row));
        if symmetry == Symmetry::Symmetric && row != col {
            edges.push((row, col));
        }
    }
    if found != nnz {
        return Err(ParseError::EntryCount {
            expected: nnz,
            found,
        });
    }
    Ok(BipartiteGraph::from_edge_list(ncols, nrows, &edges)?)
}

/// Writes `g` as a `pattern general` coordinate file, entries ordered by column.
pub fn write_matrix_market<W: Write>(g: &BipartiteGraph, mut out: W) -> std::io::Result<()> {
    let mut buf = String::with_capacity(32 + 16 * g.num_edges());
    buf.push_str("%%MatrixMarket matrix coordinate pattern general\n");
    if !g.name().is_empty() {
        let _ = writeln!(buf, "% {}", g.name());
    }
    let _ = writeln!(buf, "{} {} {}", g.nr, g.nc, g.num_edges());
    for (c, r) in g.edges() {
        let _ = writeln!(buf, "{} {}", r + 1, c + 1);
    }
    out.write_all(buf.as_bytes())
}

/// Relabels columns and rows by independent uniform permutations drawn from a
/// generator seeded with `seed`.
pub fn permute_random(g: &BipartiteGraph, seed: u64) -> BipartiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut col_perm: Vec<usize> = (0..g.nc).collect();
    let mut row_perm: Vec<u32> = (0..g.nr as u32).collect();
    col_perm.shuffle(&mut rng);
    row_perm.shuffle(&mut rng);

    let mut cxadj = vec![0usize; g.nc + 1];
    for c in 0..g.nc {
        cxadj[col_perm[c] + 1] = g.degree(c);
    }
    for c in 0..g.nc {
        cxadj[c + 1] += cxadj[c];
    }
    let mut cadj = vec![0u32; g.num_edges()];
    for c in 0..g.nc {
        let start = cxadj[col_perm[c]];
        let slice = &mut cadj[start..start + g.degree(c)];
        for (dst, &r) in slice.iter_mut().zip(g.neighbors(c)) {
            *dst = row_perm[r as usize];
        }
        slice.sort_unstable();
    }
    BipartiteGraph {
        nc: g.nc,
        nr: g.nr,
        cxadj,
        cadj,
        name: g.name.clone(),
    }
}

/// Draws `round(nc * avg_degree)` edges uniformly with replacement, then
/// deduplicates.
pub fn generate_random_bipartite(nc: usize, nr: usize, avg_degree: f64, seed: u64) -> BipartiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = if nc == 0 || nr == 0 {
        0
    } else {
        (nc as f64 * avg_degree.max(0.0)).round() as usize
    };
    let edges: Vec<(usize, usize)> = (0..target)
        .map(|_| (rng.gen_range(0..nc), rng.gen_range(0..nr)))
        .collect();
    BipartiteGraph::from_edge_list(nc, nr, &edges)
        .expect("generated indices are in range")
        .with_name(format!("rand-{nc}x{nr}-d{avg_degree}-s{seed}"))
}

/// Complete bipartite graph, used by tests and examples.
pub fn complete_bipartite(nc: usize, nr: usize) -> BipartiteGraph {
    let edges: Vec<(usize, usize)> = (0..nc)
        .flat_map(|c| (0..nr).map(move |r| (c, r)))
        .collect();
    BipartiteGraph::from_edge_list(nc, nr, &edges)
        .expect("indices in range")
        .with_name(format!("complete-{nc}x{nr}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mm(s: &str) -> Result<BipartiteGraph, ParseError> {
        read_matrix_market(s.as_bytes())
    }

    #[test]
    fn csr_layout_from_edges() {
        let g = BipartiteGraph::from_edge_list(2, 2, &[(0, 0), (0, 1), (1, 0)]).unwrap();
        assert_eq!(g.cxadj(), &[0, 2, 3]);
        assert_eq!(g.cadj(), &[0, 1, 0]);

        let g = BipartiteGraph::from_edge_list(1, 1, &[]).unwrap();
        assert_eq!(g.cxadj(), &[0, 0]);
        assert!(g.cadj().is_empty());

        let g = BipartiteGraph::from_edge_list(2, 3, &[(0, 0), (1, 0), (1, 1), (1, 2)]).unwrap();
        assert_eq!(g.cxadj(), &[0, 1, 4]);
        assert_eq!(g.cadj(), &[0, 0, 1, 2]);
    }

    #[test]
    fn edge_list_sorts_and_dedups() {
        let g = BipartiteGraph::from_edge_list(2, 4, &[(1, 3), (0, 2), (1, 0), (1, 3), (0, 2)])
            .unwrap();
        assert_eq!(g.cxadj(), &[0, 1, 3]);
        assert_eq!(g.cadj(), &[2, 0, 3]);
        g.validate().unwrap();
    }

    #[test]
    fn edge_out_of_range_names_edge() {
        let err = BipartiteGraph::from_edge_list(2, 2, &[(0, 0), (1, 2)]).unwrap_err();
        assert_eq!(
            err,
            GraphError::EdgeOutOfRange {
                index: 1,
                col: 1,
                row: 2,
                nc: 2,
                nr: 2
            }
        );
        assert!(err.to_string().contains("edge #1"));
    }

    #[test]
    fn from_csr_rejects_duplicates() {
        assert!(BipartiteGraph::from_csr(1, 2, vec![0, 2], vec![1, 1]).is_err());
        assert!(BipartiteGraph::from_csr(1, 2, vec![0, 2], vec![0, 2]).is_err());
        assert!(BipartiteGraph::from_csr(1, 2, vec![0, 2], vec![0, 1]).is_ok());
    }

    #[test]
    fn matrix_market_general_pattern() {
        let g = mm("%%MatrixMarket matrix coordinate pattern general\n2 2 3\n1 1\n2 1\n2 2\n")
            .unwrap();
        assert_eq!((g.num_cols(), g.num_rows()), (2, 2));
        assert_eq!(g.cxadj(), &[0, 2, 3]);
        assert_eq!(g.cadj(), &[0, 1, 1]);
    }

    #[test]
    fn matrix_market_symmetric_mirrors() {
        let g = mm("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 3.5\n2 1 -1.0\n")
            .unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn matrix_market_entry_count_mismatch() {
        let err = mm("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n").unwrap_err();
        assert!(matches!(
            err,
            ParseError::EntryCount {
                expected: 1,
                found: 0
            }
        ));
        let err = mm("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n1 1\n")
            .unwrap_err();
        assert!(matches!(err, ParseError::EntryCount { found: 2, .. }));
    }

    #[test]
    fn matrix_market_errors_carry_line_numbers() {
        let err = mm("%%MatrixMarket matrix array real general\n2 2\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 1, .. }));
        let err = mm("%%MatrixMarket matrix coordinate pattern general\n% c\n2 2 1\n3 1\n")
            .unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 4, .. }), "{err}");
        let err = mm("%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 1\n")
            .unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 3, .. }), "{err}");
        assert!(mm("").is_err());
        assert!(mm("hello\n").is_err());
    }

    #[test]
    fn matrix_market_keeps_explicit_zeros_and_skips_comments() {
        let g = mm("%%MatrixMarket matrix coordinate real general\n% comment\n\n3 2 2\n3 2 0.0\n1 1 0\n")
            .unwrap();
        assert_eq!((g.num_cols(), g.num_rows(), g.num_edges()), (2, 3, 2));
        assert!(g.has_edge(1, 2));
        assert!(g.has_edge(0, 0));
    }

    #[test]
    fn write_then_read_round_trip() {
        let g = generate_random_bipartite(30, 20, 3.0, 5);
        let mut buf = Vec::new();
        write_matrix_market(&g, &mut buf).unwrap();
        let back = read_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(back.cxadj(), g.cxadj());
        assert_eq!(back.cadj(), g.cadj());

        let empty = generate_random_bipartite(0, 4, 2.0, 1);
        let mut buf = Vec::new();
        write_matrix_market(&empty, &mut buf).unwrap();
        let back = read_matrix_market(buf.as_slice()).unwrap();
        assert_eq!((back.num_cols(), back.num_rows()), (0, 4));
    }

    #[test]
    fn generator_examples() {
        let g = generate_random_bipartite(0, 5, 3.0, 9);
        assert_eq!(g.cxadj(), &[0]);

        let a = generate_random_bipartite(100, 100, 4.0, 7);
        let b = generate_random_bipartite(100, 100, 4.0, 7);
        assert_eq!(a, b);

        let g = generate_random_bipartite(50, 50, 8.0, 1);
        assert!(g.num_edges() <= 400);
        g.validate().unwrap();
    }

    #[test]
    fn permutation_of_single_edge_graph() {
        let g = BipartiteGraph::from_edge_list(1, 1, &[(0, 0)]).unwrap();
        for seed in 0..10 {
            let p = permute_random(&g, seed);
            assert_eq!(p.cxadj(), g.cxadj());
            assert_eq!(p.cadj(), g.cadj());
        }
    }

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    proptest! {
        #[test]
        fn permutation_preserves_structure(
            nc in 0usize..40, nr in 0usize..40, deg in 0.0f64..6.0, seed: u64, pseed: u64
        ) {
            let g = generate_random_bipartite(nc, nr, deg, seed);
            let p = permute_random(&g, pseed);
            prop_assert!(p.validate().is_ok());
            prop_assert_eq!(p.num_edges(), g.num_edges());
            let cdeg = |h: &BipartiteGraph| (0..h.num_cols()).map(|c| h.degree(c)).collect::<Vec<_>>();
            prop_assert_eq!(sorted(cdeg(&p)), sorted(cdeg(&g)));
            prop_assert_eq!(sorted(p.row_degrees()), sorted(g.row_degrees()));
            prop_assert_eq!(permute_random(&g, pseed), p);
        }

        #[test]
        fn edge_list_construction_is_valid(
            nc in 1usize..30, nr in 1usize..30,
            raw in proptest::collection::vec((0usize..1000, 0usize..1000), 0..200)
        ) {
            let edges: Vec<_> = raw.iter().map(|&(c, r)| (c % nc, r % nr)).collect();
            let g = BipartiteGraph::from_edge_list(nc, nr, &edges).unwrap();
            prop_assert!(g.validate().is_ok());
            let mut expect = edges.clone();
            expect.sort_unstable();
            expect.dedup();
            prop_assert_eq!(g.edges().collect::<Vec<_>>(), expect);
        }
    }
}
