//! Sequential augmenting-path baselines, both searching from columns.

use std::collections::VecDeque;

use crate::graph::BipartiteGraph;
use crate::matching::{MatchingState, UNMATCHED};

const INF: usize = usize::MAX;

/// Hopcroft-Karp: layered BFS from all free columns to the nearest free rows,
/// then a maximal set of vertex-disjoint shortest augmenting paths by layered
/// DFS, until the BFS finds no free row.
pub fn hopcroft_karp(g: &BipartiteGraph, init: &MatchingState) -> MatchingState {
    let nc = g.num_cols();
    let mut m = init.clone();
    let mut dist = vec![INF; nc];
    let mut next = vec![0usize; nc];
    let mut queue = VecDeque::with_capacity(nc);
    let mut stack: Vec<usize> = Vec::new();

    loop {
        // layering
        queue.clear();
        for c in 0..nc {
            if m.cmatch[c] == UNMATCHED {
                dist[c] = 0;
                queue.push_back(c);
            } else {
                dist[c] = INF;
            }
        }
        let mut free_layer = INF;
        while let Some(c) = queue.pop_front() {
            if dist[c] >= free_layer {
                continue;
            }
            for &r in g.neighbors(c) {
                let mc = m.rmatch[r as usize];
                if mc == UNMATCHED {
                    free_layer = free_layer.min(dist[c] + 1);
                } else if dist[mc as usize] == INF {
                    dist[mc as usize] = dist[c] + 1;
                    queue.push_back(mc as usize);
                }
            }
        }
        if free_layer == INF {
            break;
        }

        // disjoint shortest paths
        next.copy_from_slice(&g.cxadj()[..nc]);
        for start in 0..nc {
            if m.cmatch[start] != UNMATCHED || dist[start] != 0 {
                continue;
            }
            stack.clear();
            stack.push(start);
            while let Some(&c) = stack.last() {
                let end = g.cxadj()[c + 1];
                let mut advanced = false;
                while next[c] < end {
                    let r = g.cadj()[next[c]] as usize;
                    next[c] += 1;
                    let mc = m.rmatch[r];
                    if mc == UNMATCHED {
                        if dist[c] + 1 == free_layer {
                            // stack holds the column path; flip it ending at r
                            let mut row = r as i32;
                            for &col in stack.iter().rev() {
                                let prev = m.cmatch[col];
                                m.cmatch[col] = row;
                                m.rmatch[row as usize] = col as i32;
                                row = prev;
                            }
                            for &col in &stack {
                                dist[col] = INF;
                            }
                            stack.clear();
                            advanced = true;
                            break;
                        }
                    } else if dist[mc as usize] == dist[c] + 1 {
                        stack.push(mc as usize);
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    dist[c] = INF;
                    stack.pop();
                }
            }
        }
    }
    m
}

/// Pothen-Fan with lookahead and fairness. Each phase runs one DFS from every
/// free column, with rows visited at most once per phase. Before descending
/// from a column, its lookahead pointer scans for a free neighbor row; the
/// pointer only moves forward over the whole run since matched rows never
/// become free again. Phases alternate the direction in which adjacency
/// lists are searched. Stops after a phase without augmentation.
pub fn pfp(g: &BipartiteGraph, init: &MatchingState) -> MatchingState {
    let (nc, nr) = (g.num_cols(), g.num_rows());
    let cxadj = g.cxadj();
    let cadj = g.cadj();
    let mut m = init.clone();
    let mut lookahead: Vec<usize> = cxadj[..nc].to_vec();
    let mut visited = vec![0u32; nr];
    let mut stamp = 0u32;
    // per-column DFS cursor: number of adjacency entries already tried
    let mut tried = vec![0usize; nc];
    let mut stack: Vec<usize> = Vec::new();
    let mut forward = true;

    loop {
        stamp += 1;
        let mut augmented = false;
        for start in 0..nc {
            if m.cmatch[start] != UNMATCHED {
                continue;
            }
            stack.clear();
            stack.push(start);
            tried[start] = 0;
            while let Some(&c) = stack.last() {
                let (lo, hi) = (cxadj[c], cxadj[c + 1]);
                let mut free_row = None;
                while lookahead[c] < hi {
                    let r = cadj[lookahead[c]] as usize;
                    lookahead[c] += 1;
                    if m.rmatch[r] == UNMATCHED {
                        free_row = Some(r);
                        break;
                    }
                }
                if free_row.is_none() {
                    let deg = hi - lo;
                    while tried[c] < deg {
                        let k = tried[c];
                        tried[c] += 1;
                        let pos = if forward { lo + k } else { hi - 1 - k };
                        let r = cadj[pos] as usize;
                        if visited[r] == stamp {
                            continue;
                        }
                        visited[r] = stamp;
                        let mc = m.rmatch[r];
                        if mc == UNMATCHED {
                            free_row = Some(r);
                            break;
                        }
                        stack.push(mc as usize);
                        tried[mc as usize] = 0;
                        break;
                    }
                    if free_row.is_none() && stack.last() == Some(&c) {
                        stack.pop();
                        continue;
                    }
                }
                if let Some(r) = free_row {
                    let mut row = r as i32;
                    for &col in stack.iter().rev() {
                        let prev = m.cmatch[col];
                        m.cmatch[col] = row;
                        m.rmatch[row as usize] = col as i32;
                        row = prev;
                    }
                    augmented = true;
                    break;
                }
            }
        }
        if !augmented {
            break;
        }
        forward = !forward;
    }
    m
}
