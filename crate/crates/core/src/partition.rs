//! Node partitioning across machines and per-machine local subgraphs.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream, Purpose};

/// Quality of an assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CutStats {
    /// Undirected non-loop edges whose endpoints sit on different machines.
    pub edge_cut: usize,
    pub total_edges: usize,
    pub cut_ratio: f64,
    /// Largest part size relative to `N / P`.
    pub balance: f64,
    pub part_sizes: Vec<usize>,
    /// For each machine, distinct nodes on other machines adjacent to it.
    pub boundary_nodes: Vec<usize>,
}

/// Exact cut statistics from a single edge scan.
pub fn cut_stats(graph: &Graph, assignment: &[usize], parts: usize) -> CutStats {
    let n = graph.num_nodes();
    let mut part_sizes = vec![0usize; parts];
    for &m in assignment {
        part_sizes[m] += 1;
    }
    let mut edge_cut = 0;
    let mut total_edges = 0;
    // seen[p][v]: node v already counted as a boundary node of machine p
    let mut boundary_nodes = vec![0usize; parts];
    let mut seen = vec![vec![false; n]; parts];
    for (u, v) in graph.edges() {
        if u == v {
            continue;
        }
        total_edges += 1;
        let (mu, mv) = (assignment[u], assignment[v]);
        if mu != mv {
            edge_cut += 1;
            if !seen[mu][v] {
                seen[mu][v] = true;
                boundary_nodes[mu] += 1;
            }
            if !seen[mv][u] {
                seen[mv][u] = true;
                boundary_nodes[mv] += 1;
            }
        }
    }
    let cut_ratio = if total_edges == 0 {
        0.0
    } else {
        edge_cut as f64 / total_edges as f64
    };
    let max = part_sizes.iter().copied().max().unwrap_or(0);
    let balance = if n == 0 {
        1.0
    } else {
        max as f64 * parts as f64 / n as f64
    };
    CutStats {
        edge_cut,
        total_edges,
        cut_ratio,
        balance,
        part_sizes,
        boundary_nodes,
    }
}

/// One machine's view: its nodes, re-indexed densely, with only
/// intra-machine edges and a self-loop on every node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGraph {
    pub graph: Graph,
    /// `global_ids[local] = global`, ascending.
    pub global_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    locals: Vec<LocalGraph>,
    /// `local_index[global]` = position of the node in its machine's local graph.
    local_index: Vec<usize>,
    stats: CutStats,
}

impl Partition {
    /// Materializes local graphs for an existing assignment.
    pub fn from_assignment(graph: &Graph, assignment: Vec<usize>, parts: usize) -> Result<Partition> {
        if parts == 0 {
            return Err(Error::invalid("parts", "must be at least 1"));
        }
        if assignment.len() != graph.num_nodes() {
            return Err(Error::LengthMismatch {
                what: "assignment",
                expected: graph.num_nodes(),
                actual: assignment.len(),
            });
        }
        if let Some(&bad) = assignment.iter().find(|&&m| m >= parts) {
            return Err(Error::invalid("assignment", format!("machine id {bad} >= {parts}")));
        }
        let mut members = vec![Vec::new(); parts];
        let mut local_index = vec![0; graph.num_nodes()];
        for (g, &m) in assignment.iter().enumerate() {
            local_index[g] = members[m].len();
            members[m].push(g);
        }
        let locals = members
            .into_iter()
            .map(|ids| LocalGraph {
                graph: graph.induced(&ids),
                global_ids: ids,
            })
            .collect();
        let stats = cut_stats(graph, &assignment, parts);
        Ok(Partition {
            assignment,
            locals,
            local_index,
            stats,
        })
    }

    pub fn num_parts(&self) -> usize {
        self.locals.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn machine_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn local(&self, machine: usize) -> &LocalGraph {
        &self.locals[machine]
    }

    pub fn locals(&self) -> &[LocalGraph] {
        &self.locals
    }

    pub fn local_index(&self, node: usize) -> usize {
        self.local_index[node]
    }

    pub fn stats(&self) -> &CutStats {
        &self.stats
    }

    /// Training nodes of `machine`, as global ids.
    pub fn train_nodes_global(&self, machine: usize) -> Vec<usize> {
        let local = &self.locals[machine];
        local
            .graph
            .train_nodes()
            .into_iter()
            .map(|l| local.global_ids[l])
            .collect()
    }
}

fn check_parts(graph: &Graph, parts: usize) -> Result<()> {
    if parts == 0 {
        return Err(Error::invalid("parts", "must be at least 1"));
    }
    if parts > graph.num_nodes() {
        return Err(Error::invalid(
            "parts",
            format!("{parts} parts for {} nodes", graph.num_nodes()),
        ));
    }
    Ok(())
}

/// Uniform random balanced assignment: part sizes differ by at most one.
pub fn partition_random(graph: &Graph, parts: usize, seed: u64) -> Result<Partition> {
    check_parts(graph, parts)?;
    let mut rng = stream(seed, Purpose::Partition, 0, 0);
    let mut order: Vec<usize> = (0..graph.num_nodes()).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0; graph.num_nodes()];
    for (k, &node) in order.iter().enumerate() {
        assignment[node] = k % parts;
    }
    Partition::from_assignment(graph, assignment, parts)
}

/// Allowed spread between the largest and smallest part of a greedy partition.
pub fn greedy_balance_tolerance(num_nodes: usize, parts: usize) -> usize {
    ((0.05 * num_nodes as f64 / parts as f64).ceil() as usize).max(1)
}

const UNASSIGNED: usize = usize::MAX;

fn bfs_distances(graph: &Graph, sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; graph.num_nodes()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Multi-source BFS region growing.
///
/// Seeds are picked farthest-first (the first one at random), so separate
/// components receive separate seeds. Nodes leave a shared FIFO frontier and
/// join the adjacent part holding most of their already-assigned neighbors;
/// ties go to the smaller part, then the lower part id. Parts are capped at
/// `ceil(N / P)` and a final pass evens out any spread above the tolerance.
pub fn partition_greedy(graph: &Graph, parts: usize, seed: u64) -> Result<Partition> {
    check_parts(graph, parts)?;
    let n = graph.num_nodes();
    let mut rng = stream(seed, Purpose::Partition, 1, 0);
    let cap = n.div_ceil(parts);

    let mut seeds = vec![rng.random_range(0..n)];
    while seeds.len() < parts {
        let dist = bfs_distances(graph, &seeds);
        // unreachable nodes have distance usize::MAX and win outright
        let best = (0..n)
            .filter(|v| !seeds.contains(v))
            .max_by_key(|&v| (dist[v], std::cmp::Reverse(v)))
            .expect("parts <= n leaves a candidate");
        seeds.push(best);
    }

    let mut assignment = vec![UNASSIGNED; n];
    let mut sizes = vec![0usize; parts];
    let mut queue = VecDeque::new();
    let mut queued = vec![false; n];
    for (p, &s) in seeds.iter().enumerate() {
        assignment[s] = p;
        sizes[p] += 1;
    }
    for &s in &seeds {
        for &v in graph.neighbors(s) {
            if assignment[v] == UNASSIGNED && !queued[v] {
                queued[v] = true;
                queue.push_back(v);
            }
        }
    }

    let mut restart_order: Vec<usize> = (0..n).collect();
    restart_order.shuffle(&mut rng);
    let mut restart = restart_order.into_iter();
    let mut counts = vec![0usize; parts];
    let mut assigned = parts;

    while assigned < n {
        let node = match queue.pop_front() {
            Some(v) => v,
            None => {
                // frontier exhausted: start a new region from an unassigned node
                let v = restart
                    .find(|&v| assignment[v] == UNASSIGNED)
                    .expect("unassigned node exists");
                queued[v] = true;
                v
            }
        };
        counts.iter_mut().for_each(|c| *c = 0);
        for &u in graph.neighbors(node) {
            if assignment[u] != UNASSIGNED {
                counts[assignment[u]] += 1;
            }
        }
        let open = |p: usize| sizes[p] < cap;
        let target = (0..parts)
            .filter(|&p| open(p) && counts[p] > 0)
            .max_by_key(|&p| (counts[p], std::cmp::Reverse(sizes[p]), std::cmp::Reverse(p)))
            .or_else(|| (0..parts).filter(|&p| open(p)).min_by_key(|&p| (sizes[p], p)))
            .expect("capacity covers every node");
        assignment[node] = target;
        sizes[target] += 1;
        assigned += 1;
        for &v in graph.neighbors(node) {
            if assignment[v] == UNASSIGNED && !queued[v] {
                queued[v] = true;
                queue.push_back(v);
            }
        }
    }

    rebalance(graph, &mut assignment, &mut sizes, greedy_balance_tolerance(n, parts));
    Partition::from_assignment(graph, assignment, parts)
}

/// Moves nodes from the largest to the smallest part until the spread is
/// within `tolerance`, preferring nodes with most neighbors in the receiver.
fn rebalance(graph: &Graph, assignment: &mut [usize], sizes: &mut [usize], tolerance: usize) {
    loop {
        let (big, &max) = sizes
            .iter()
            .enumerate()
            .max_by_key(|&(p, &s)| (s, std::cmp::Reverse(p)))
            .unwrap();
        let (small, &min) = sizes.iter().enumerate().min_by_key(|&(p, &s)| (s, p)).unwrap();
        if max - min <= tolerance {
            return;
        }
        let gain = |v: usize| {
            graph
                .neighbors(v)
                .iter()
                .filter(|&&u| u != v)
                .map(|&u| match assignment[u] {
                    p if p == small => 1i64,
                    p if p == big => -1,
                    _ => 0,
                })
                .sum::<i64>()
        };
        let mover = (0..graph.num_nodes())
            .filter(|&v| assignment[v] == big)
            .max_by_key(|&v| (gain(v), std::cmp::Reverse(v)))
            .unwrap();
        assignment[mover] = small;
        sizes[big] -= 1;
        sizes[small] += 1;
    }
}

/// Assignment file: one machine id per line, followed by `#` comment lines
/// carrying the cut statistics.
pub fn format_assignment(partition: &Partition) -> String {
    let mut out = String::with_capacity(partition.assignment.len() * 3);
    for &m in &partition.assignment {
        let _ = writeln!(out, "{m}");
    }
    let s = &partition.stats;
    let _ = writeln!(out, "# parts {}", partition.num_parts());
    let _ = writeln!(out, "# edge_cut {}", s.edge_cut);
    let _ = writeln!(out, "# total_edges {}", s.total_edges);
    let _ = writeln!(out, "# cut_ratio {}", s.cut_ratio);
    let _ = writeln!(out, "# balance {}", s.balance);
    let _ = writeln!(out, "# part_sizes {}", join(&s.part_sizes));
    let _ = writeln!(out, "# boundary_nodes {}", join(&s.boundary_nodes));
    out
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Reads an assignment file. Comment and blank lines are ignored.
pub fn parse_assignment(bytes: &[u8]) -> Result<Vec<usize>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("not UTF-8: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|_| Error::parse(i + 1, format!("invalid machine id `{line}`")))?,
        );
    }
    Ok(out)
}
