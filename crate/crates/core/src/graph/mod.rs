//! Immutable sparse graphs with node features, labels and data splits.

mod io;
mod sampling;
mod sbm;

pub use io::{load_graph, parse_graph, save_graph, write_graph};
pub use sampling::{
    full_neighbor_hops, sample_minibatch, sample_minibatch_from, sample_neighbors, Block, MiniBatch, NeighborMode,
};
pub use sbm::{gen_sbm, SbmParams, DEFAULT_NOISE};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Which data split a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Converts three boolean masks into per-node splits.
///
/// The masks must be pairwise disjoint and together cover every node.
pub fn splits_from_masks(train: &[bool], val: &[bool], test: &[bool]) -> Result<Vec<Split>> {
    let n = train.len();
    for (what, m) in [("val mask", val), ("test mask", test)] {
        if m.len() != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                actual: m.len(),
            });
        }
    }
    (0..n)
        .map(|i| match (train[i], val[i], test[i]) {
            (true, false, false) => Ok(Split::Train),
            (false, true, false) => Ok(Split::Val),
            (false, false, true) => Ok(Split::Test),
            (false, false, false) => Err(Error::invalid("masks", format!("node {i} is in no split"))),
            _ => Err(Error::invalid("masks", format!("node {i} is in more than one split"))),
        })
        .collect()
}

/// Undirected graph in compressed adjacency form.
///
/// Every edge is stored in both directions and neighbor lists are sorted
/// ascending without duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Vec<Split>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Duplicate edges (in either
    /// orientation) are collapsed; self-edges are kept once.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        splits: Vec<Split>,
    ) -> Result<Graph> {
        if features.nrows() != num_nodes {
            return Err(Error::LengthMismatch {
                what: "feature rows",
                expected: num_nodes,
                actual: features.nrows(),
            });
        }
        if labels.len() != num_nodes {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: num_nodes,
                actual: labels.len(),
            });
        }
        if splits.len() != num_nodes {
            return Err(Error::LengthMismatch {
                what: "splits",
                expected: num_nodes,
                actual: splits.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} outside [0, {num_classes})"),
            ));
        }
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            for index in [u, v] {
                if index >= num_nodes {
                    return Err(Error::NodeOutOfRange { index, num_nodes });
                }
            }
            lists[u].push(v);
            if u != v {
                lists[v].push(u);
            }
        }
        Ok(Self::from_lists(lists, features, labels, num_classes, splits))
    }

    fn from_lists(
        mut lists: Vec<Vec<usize>>,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        splits: Vec<Split>,
    ) -> Graph {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Graph {
            offsets,
            neighbors,
            features,
            labels,
            num_classes,
            splits,
        }
    }

    /// Returns a copy where every node is its own neighbor. Idempotent.
    pub fn with_self_loops(&self) -> Graph {
        let lists = (0..self.num_nodes())
            .map(|i| {
                let mut l = self.neighbors(i).to_vec();
                if l.binary_search(&i).is_err() {
                    l.push(i);
                }
                l
            })
            .collect();
        Self::from_lists(
            lists,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            self.splits.clone(),
        )
    }

    /// Induced subgraph on `nodes` (in the given order, re-indexed densely).
    /// Self-loops are re-inserted so every local degree is at least one.
    pub(crate) fn induced(&self, nodes: &[usize]) -> Graph {
        let mut local = vec![usize::MAX; self.num_nodes()];
        for (li, &g) in nodes.iter().enumerate() {
            local[g] = li;
        }
        let lists: Vec<Vec<usize>> = nodes
            .iter()
            .enumerate()
            .map(|(li, &g)| {
                let mut l: Vec<usize> = self
                    .neighbors(g)
                    .iter()
                    .filter_map(|&u| (local[u] != usize::MAX).then_some(local[u]))
                    .collect();
                l.push(li);
                l
            })
            .collect();
        let features = self.features.select(ndarray::Axis(0), nodes);
        let labels = nodes.iter().map(|&g| self.labels[g]).collect();
        let splits = nodes.iter().map(|&g| self.splits[g]).collect();
        Self::from_lists(lists, features, labels, self.num_classes, splits)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges, self-loops excluded.
    pub fn num_edges(&self) -> usize {
        self.edges().filter(|(u, v)| u != v).count()
    }

    /// Every undirected edge once as `(u, v)` with `u <= v`, self-loops included.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes())
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| v >= u).map(move |&v| (u, v)))
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.num_nodes()).all(|i| self.neighbors(i).binary_search(&i).is_ok())
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Nodes in `split`, ascending.
    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        self.nodes_in(Split::Train)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn plain(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges, Array2::zeros((n, 1)), vec![0; n], 1, vec![Split::Train; n]).unwrap()
    }

    #[test]
    fn single_edge_is_symmetric() {
        let g = plain(2, &[(0, 1)]);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn duplicate_edges_collapse() {
        assert_eq!(plain(2, &[(0, 1), (1, 0)]), plain(2, &[(0, 1)]));
        assert_eq!(plain(2, &[(0, 1), (1, 0)]).num_edges(), 1);
    }

    #[test]
    fn input_self_edge_kept_once() {
        let g = plain(2, &[(1, 1), (1, 1), (0, 1)]);
        assert_eq!(g.neighbors(1), &[0, 1]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn self_loops_on_empty_graph() {
        let g = plain(3, &[]).with_self_loops();
        for i in 0..3 {
            assert_eq!(g.neighbors(i), &[i]);
        }
    }

    #[test]
    fn self_loops_on_path_and_idempotent() {
        let g = plain(3, &[(0, 1)]).with_self_loops();
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(1), &[0, 1]);
        assert_eq!(g.neighbors(2), &[2]);
        assert_eq!(g.with_self_loops(), g);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        let err = Graph::from_edges(
            2,
            &[(0, 2)],
            Array2::zeros((2, 1)),
            vec![0; 2],
            1,
            vec![Split::Train; 2],
        );
        assert_eq!(err, Err(Error::NodeOutOfRange { index: 2, num_nodes: 2 }));
    }

    #[test]
    fn length_mismatches_rejected() {
        let r = Graph::from_edges(2, &[], Array2::zeros((3, 1)), vec![0; 2], 1, vec![Split::Train; 2]);
        assert!(matches!(
            r,
            Err(Error::LengthMismatch {
                what: "feature rows",
                ..
            })
        ));
        let r = Graph::from_edges(2, &[], Array2::zeros((2, 1)), vec![0; 1], 1, vec![Split::Train; 2]);
        assert!(matches!(r, Err(Error::LengthMismatch { what: "labels", .. })));
        let r = Graph::from_edges(2, &[], Array2::zeros((2, 1)), vec![0, 3], 2, vec![Split::Train; 2]);
        assert!(matches!(r, Err(Error::InvalidArgument { field: "labels", .. })));
    }

    #[test]
    fn masks_must_be_disjoint_and_cover() {
        let s = splits_from_masks(&[true, false, false], &[false, true, false], &[false, false, true]).unwrap();
        assert_eq!(s, vec![Split::Train, Split::Val, Split::Test]);
        assert!(splits_from_masks(&[true], &[true], &[false]).is_err());
        assert!(splits_from_masks(&[false], &[false], &[false]).is_err());
    }

    #[test]
    fn induced_subgraph_drops_outside_edges() {
        let g = plain(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let sub = g.induced(&[1, 2]);
        assert_eq!(sub.neighbors(0), &[0, 1]);
        assert_eq!(sub.neighbors(1), &[0, 1]);
        let lonely = g.induced(&[0, 2]);
        assert_eq!(lonely.neighbors(0), &[0]);
        assert_eq!(lonely.neighbors(1), &[1]);
    }
}
