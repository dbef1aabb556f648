//! Neighbor sampling and mini-batch construction.

use std::collections::HashMap;

use rand::seq::index;

use super::Graph;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Neighbors of `node`, subsampled uniformly without replacement when the
/// degree exceeds `fanout`. The result is sorted ascending.
pub fn sample_neighbors(graph: &Graph, node: usize, fanout: usize, rng: &mut Rng) -> Vec<usize> {
    let nbrs = graph.neighbors(node);
    if nbrs.len() <= fanout {
        return nbrs.to_vec();
    }
    let mut picked: Vec<usize> = index::sample(rng, nbrs.len(), fanout)
        .into_iter()
        .map(|k| nbrs[k])
        .collect();
    picked.sort_unstable();
    picked
}

/// One hop of message passing: each `dst` node aggregates over a list of
/// positions into `src`. The first `dst.len()` entries of `src` are the
/// `dst` nodes themselves, so a layer can also read a node's own state.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub dst: Vec<usize>,
    pub src: Vec<usize>,
    offsets: Vec<usize>,
    sources: Vec<usize>,
}

impl Block {
    fn build(dst: Vec<usize>, mut neighbors_of: impl FnMut(usize) -> Vec<usize>) -> Block {
        let mut src = dst.clone();
        let mut position: HashMap<usize, usize> = HashMap::with_capacity(dst.len() * 4);
        for (k, &v) in dst.iter().enumerate() {
            position.entry(v).or_insert(k);
        }
        let mut offsets = Vec::with_capacity(dst.len() + 1);
        offsets.push(0);
        let mut sources = Vec::new();
        for &v in &dst {
            for u in neighbors_of(v) {
                let p = *position.entry(u).or_insert_with(|| {
                    src.push(u);
                    src.len() - 1
                });
                sources.push(p);
            }
            offsets.push(sources.len());
        }
        Block {
            dst,
            src,
            offsets,
            sources,
        }
    }

    /// Positions in `src` that `dst[k]` aggregates over.
    pub fn sources(&self, k: usize) -> &[usize] {
        &self.sources[self.offsets[k]..self.offsets[k + 1]]
    }
}

/// How neighborhoods are formed for a mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborMode {
    /// Every neighbor is used.
    Full,
    /// At most `fanout` neighbors per node per hop, `depth` hops.
    Sampled { fanout: usize, depth: usize },
}

/// Target nodes plus, in sampled mode, the fan-out tree built for them.
///
/// `hops[0]` has the targets as destinations; `hops[k + 1].dst == hops[k].src`.
/// `hops == None` marks a full-neighbor batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub targets: Vec<usize>,
    pub hops: Option<Vec<Block>>,
}

impl MiniBatch {
    pub fn full_neighbor(targets: Vec<usize>) -> MiniBatch {
        MiniBatch { targets, hops: None }
    }

    pub fn is_full_neighbor(&self) -> bool {
        self.hops.is_none()
    }

    /// Distinct graph nodes whose input features the batch reads.
    pub fn input_nodes(&self) -> &[usize] {
        match &self.hops {
            Some(hops) if !hops.is_empty() => &hops[hops.len() - 1].src,
            _ => &self.targets,
        }
    }
}

/// Fan-out tree that uses every neighbor, `depth` hops deep.
pub fn full_neighbor_hops(graph: &Graph, targets: &[usize], depth: usize) -> Vec<Block> {
    let mut hops: Vec<Block> = Vec::with_capacity(depth);
    let mut dst = targets.to_vec();
    for _ in 0..depth {
        let block = Block::build(dst, |v| graph.neighbors(v).to_vec());
        dst = block.src.clone();
        hops.push(block);
    }
    hops
}

fn sampled_hops(graph: &Graph, targets: &[usize], fanout: usize, depth: usize, rng: &mut Rng) -> Vec<Block> {
    let mut hops: Vec<Block> = Vec::with_capacity(depth);
    let mut dst = targets.to_vec();
    for _ in 0..depth {
        let block = Block::build(dst, |v| sample_neighbors(graph, v, fanout, rng));
        dst = block.src.clone();
        hops.push(block);
    }
    hops
}

/// Uniform mini-batch of `batch_size` distinct training nodes.
pub fn sample_minibatch(graph: &Graph, batch_size: usize, mode: NeighborMode, rng: &mut Rng) -> Result<MiniBatch> {
    sample_minibatch_from(graph, &graph.train_nodes(), batch_size, mode, rng)
}

/// Uniform mini-batch of `batch_size` distinct nodes drawn from `pool`.
pub fn sample_minibatch_from(
    graph: &Graph,
    pool: &[usize],
    batch_size: usize,
    mode: NeighborMode,
    rng: &mut Rng,
) -> Result<MiniBatch> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be at least 1"));
    }
    if batch_size > pool.len() {
        return Err(Error::invalid(
            "batch_size",
            format!("{batch_size} exceeds the {} available training nodes", pool.len()),
        ));
    }
    let targets: Vec<usize> = if batch_size == pool.len() {
        pool.to_vec()
    } else {
        index::sample(rng, pool.len(), batch_size)
            .into_iter()
            .map(|k| pool[k])
            .collect()
    };
    let hops = match mode {
        NeighborMode::Full => None,
        NeighborMode::Sampled { fanout, depth } => {
            if fanout == 0 {
                return Err(Error::invalid("fanout", "must be at least 1"));
            }
            Some(sampled_hops(graph, &targets, fanout, depth, rng))
        }
    };
    Ok(MiniBatch { targets, hops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;
    use crate::rng::{stream, Purpose};
    use ndarray::Array2;

    fn star(leaves: usize) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|l| (0, l)).collect();
        let n = leaves + 1;
        Graph::from_edges(n, &edges, Array2::zeros((n, 1)), vec![0; n], 1, vec![Split::Train; n]).unwrap()
    }

    #[test]
    fn low_degree_returns_all_neighbors() {
        let g = star(3);
        let mut rng = stream(0, Purpose::Test, 0, 0);
        assert_eq!(sample_neighbors(&g, 0, 10, &mut rng), vec![1, 2, 3]);
    }

    #[test]
    fn high_degree_returns_distinct_members() {
        let g = star(100);
        let mut rng = stream(0, Purpose::Test, 0, 0);
        let s = sample_neighbors(&g, 0, 10, &mut rng);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|v| g.neighbors(0).contains(v)));
    }

    #[test]
    fn neighbor_frequencies_are_uniform() {
        // Each of 4 neighbors should appear in half of the 2-of-4 draws.
        let g = star(4);
        let mut rng = stream(1, Purpose::Test, 0, 0);
        let draws = 100_000;
        let mut hits = [0usize; 5];
        for _ in 0..draws {
            for v in sample_neighbors(&g, 0, 2, &mut rng) {
                hits[v] += 1;
            }
        }
        for &h in &hits[1..] {
            let freq = h as f64 / draws as f64;
            assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn batch_equal_to_train_count_is_train_set() {
        let g = star(5);
        let mut rng = stream(0, Purpose::Test, 0, 0);
        let b = sample_minibatch(&g, 6, NeighborMode::Full, &mut rng).unwrap();
        let mut t = b.targets.clone();
        t.sort_unstable();
        assert_eq!(t, (0..6).collect::<Vec<_>>());
        assert!(b.is_full_neighbor());
    }

    #[test]
    fn single_node_batches_are_uniform() {
        let n = 10;
        let g = star(n - 1);
        let mut rng = stream(2, Purpose::Test, 0, 0);
        let draws = 100_000;
        let mut hits = vec![0usize; n];
        for _ in 0..draws {
            let b = sample_minibatch(&g, 1, NeighborMode::Full, &mut rng).unwrap();
            hits[b.targets[0]] += 1;
        }
        for &h in &hits {
            let freq = h as f64 / draws as f64;
            assert!((freq - 0.1).abs() <= 0.005, "frequency {freq}");
        }
    }

    #[test]
    fn oversized_batch_is_an_error() {
        let g = star(2);
        let mut rng = stream(0, Purpose::Test, 0, 0);
        assert!(sample_minibatch(&g, 4, NeighborMode::Full, &mut rng).is_err());
        assert!(sample_minibatch(&g, 0, NeighborMode::Full, &mut rng).is_err());
    }

    #[test]
    fn sampled_tree_chains_hops() {
        let g = star(30).with_self_loops();
        let mut rng = stream(0, Purpose::Test, 0, 0);
        let b = sample_minibatch(&g, 4, NeighborMode::Sampled { fanout: 3, depth: 2 }, &mut rng).unwrap();
        let hops = b.hops.as_ref().unwrap();
        assert_eq!(hops.len(), 2);
        assert_eq!(hops[0].dst, b.targets);
        assert_eq!(hops[1].dst, hops[0].src);
        for hop in hops {
            assert_eq!(&hop.src[..hop.dst.len()], &hop.dst[..]);
            for k in 0..hop.dst.len() {
                assert!(hop.sources(k).len() <= 3);
                for &p in hop.sources(k) {
                    assert!(g.neighbors(hop.dst[k]).contains(&hop.src[p]));
                }
            }
        }
    }

    #[test]
    fn wide_fanout_tree_equals_full_tree() {
        let g = star(8).with_self_loops();
        let mut rng = stream(0, Purpose::Test, 0, 0);
        let b = sample_minibatch(&g, 3, NeighborMode::Sampled { fanout: 100, depth: 2 }, &mut rng).unwrap();
        assert_eq!(b.hops.unwrap(), full_neighbor_hops(&g, &b.targets, 2));
    }
}
