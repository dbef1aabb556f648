//! The gradient flavors that distinguish local from global training.
//!
//! * global: all training nodes, full neighborhoods of the whole graph;
//! * local: machine `p`'s training nodes on its own subgraph, cut-edges
//!   invisible (full batch, or a sampled mini-batch);
//! * full-access: machine `p`'s training nodes, but aggregating over the
//!   whole graph with all features.
//!
//! Each is the mean cross-entropy over its own target set.

use crate::error::{Error, Result};
use crate::graph::{Graph, MiniBatch};
use crate::model::{loss_and_grad, Gradient, Model};
use crate::partition::Partition;

/// Batch selector for [`local_gradient`].
#[derive(Debug, Clone, Copy)]
pub enum LocalBatch<'a> {
    /// Every local training node, full local neighborhoods.
    Full,
    /// A mini-batch built against the local graph (local node ids).
    Mini(&'a MiniBatch),
}

fn check_machine(partition: &Partition, machine: usize) -> Result<()> {
    if machine >= partition.num_parts() {
        return Err(Error::invalid(
            "machine",
            format!("{machine} >= {} machines", partition.num_parts()),
        ));
    }
    Ok(())
}

pub fn global_gradient(graph: &Graph, model: &Model) -> Result<(f64, Gradient)> {
    loss_and_grad(graph, model, &MiniBatch::full_neighbor(graph.train_nodes()))
}

pub fn local_gradient(
    partition: &Partition,
    machine: usize,
    model: &Model,
    batch: LocalBatch<'_>,
) -> Result<(f64, Gradient)> {
    check_machine(partition, machine)?;
    let local = &partition.local(machine).graph;
    let result = match batch {
        LocalBatch::Full => loss_and_grad(local, model, &MiniBatch::full_neighbor(local.train_nodes())),
        LocalBatch::Mini(b) => loss_and_grad(local, model, b),
    };
    result.map_err(|e| e.on_machine(machine))
}

pub fn full_access_local_gradient(
    graph: &Graph,
    partition: &Partition,
    machine: usize,
    model: &Model,
) -> Result<(f64, Gradient)> {
    check_machine(partition, machine)?;
    loss_and_grad(
        graph,
        model,
        &MiniBatch::full_neighbor(partition.train_nodes_global(machine)),
    )
    .map_err(|e| e.on_machine(machine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_sbm, SbmParams, Split};
    use crate::partition::{partition_random, Partition};
    use ndarray::Array2;

    fn sbm() -> Graph {
        gen_sbm(&SbmParams {
            blocks: 2,
            per_block: 30,
            p_intra: 0.2,
            p_inter: 0.05,
            feature_dim: 4,
            noise: 0.5,
            seed: 8,
        })
        .unwrap()
    }

    fn model() -> Model {
        Model::init("G,G".parse().unwrap(), vec![4, 6, 2], 3).unwrap()
    }

    #[test]
    fn one_machine_equals_global() {
        let g = sbm();
        let p = partition_random(&g, 1, 0).unwrap();
        let global = global_gradient(&g, &model()).unwrap();
        assert_eq!(local_gradient(&p, 0, &model(), LocalBatch::Full).unwrap(), global);
        assert_eq!(full_access_local_gradient(&g, &p, 0, &model()).unwrap(), global);
    }

    #[test]
    fn random_cut_changes_local_gradient() {
        let g = sbm();
        let p = partition_random(&g, 3, 1).unwrap();
        let (_, local) = local_gradient(&p, 0, &model(), LocalBatch::Full).unwrap();
        let (_, full) = full_access_local_gradient(&g, &p, 0, &model()).unwrap();
        assert!(local.dist_sq(&full) > 0.0);
    }

    #[test]
    fn node_cut_off_entirely_sees_only_itself() {
        // a triangle whose apex is moved to another machine
        let g = Graph::from_edges(
            3,
            &[(0, 1), (1, 2), (0, 2)],
            Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 4.0]).unwrap(),
            vec![0, 0, 0],
            1,
            vec![Split::Train; 3],
        )
        .unwrap()
        .with_self_loops();
        let p = Partition::from_assignment(&g, vec![0, 1, 1], 2).unwrap();
        let m = Model::init("G".parse().unwrap(), vec![1, 1], 0).unwrap();
        let local = &p.local(0).graph;
        let batch = MiniBatch::full_neighbor(vec![0]);
        let tape = crate::model::forward(local, &m, &batch).unwrap();
        assert_eq!(tape.logits[[0, 0]], 1.0 * m.weights()[0][[0, 0]]);
    }

    #[test]
    fn bad_machine_rejected() {
        let g = sbm();
        let p = partition_random(&g, 2, 0).unwrap();
        assert!(local_gradient(&p, 2, &model(), LocalBatch::Full).is_err());
    }
}
