//! Estimators for gradient discrepancy and sampling bias, evaluation, and
//! byte accounting.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradients::{full_access_local_gradient, global_gradient, local_gradient, LocalBatch};
use crate::graph::{sample_minibatch_from, Graph, MiniBatch, NeighborMode, Split};
use crate::model::{forward, loss_and_grad, softmax_cross_entropy, Gradient, Model};
use crate::partition::Partition;
use crate::rng::{stream, Purpose};

/// Local–global gradient discrepancy at a fixed model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyReport {
    /// `max_p ‖∇L_p^local − ∇L_p^full‖²`: structure lost to cut-edges.
    pub kappa_a_sq: f64,
    /// `max_p ‖∇L_p^full − ∇L‖²`: heterogeneity of machine data.
    pub kappa_x_sq: f64,
    pub kappa_sq: f64,
    /// Per-machine values; machines without training nodes report 0.
    pub per_machine_a: Vec<f64>,
    pub per_machine_x: Vec<f64>,
}

/// Exact, deterministic computation from full-batch full-neighbor gradients.
pub fn measure_discrepancy(graph: &Graph, partition: &Partition, model: &Model) -> Result<DiscrepancyReport> {
    let (_, global) = global_gradient(graph, model)?;
    let per_machine: Vec<(f64, f64)> = (0..partition.num_parts())
        .into_par_iter()
        .map(|p| {
            if partition.local(p).graph.train_nodes().is_empty() {
                return Ok((0.0, 0.0));
            }
            let (_, local) = local_gradient(partition, p, model, LocalBatch::Full)?;
            let (_, full) = full_access_local_gradient(graph, partition, p, model)?;
            Ok((local.dist_sq(&full), full.dist_sq(&global)))
        })
        .collect::<Result<_>>()?;
    let per_machine_a: Vec<f64> = per_machine.iter().map(|x| x.0).collect();
    let per_machine_x: Vec<f64> = per_machine.iter().map(|x| x.1).collect();
    let kappa_a_sq = per_machine_a.iter().copied().fold(0.0, f64::max);
    let kappa_x_sq = per_machine_x.iter().copied().fold(0.0, f64::max);
    Ok(DiscrepancyReport {
        kappa_a_sq,
        kappa_x_sq,
        kappa_sq: kappa_a_sq + kappa_x_sq,
        per_machine_a,
        per_machine_x,
    })
}

/// Monte Carlo estimate of neighbor-sampling bias and variance on one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingBiasReport {
    pub machine: usize,
    /// `‖mean(sampled) − mean(full-neighbor)‖²` over the same batches.
    pub bias_sq: f64,
    /// `mean ‖sampled − mean(sampled)‖²`.
    pub variance: f64,
    pub samples: usize,
}

/// Draws `samples` local mini-batches of `batch_size` at a fixed model. For
/// each batch the neighbor-sampled gradient and the full-neighbor gradient on
/// the same targets are computed, so batch selection noise cancels out of the
/// bias. With `batch_size` equal to the local training count the reference is
/// exactly the local full-batch gradient.
pub fn measure_sampling_bias(
    partition: &Partition,
    machine: usize,
    model: &Model,
    fanout: usize,
    batch_size: usize,
    samples: usize,
    seed: u64,
) -> Result<SamplingBiasReport> {
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2 Monte Carlo samples"));
    }
    if machine >= partition.num_parts() {
        return Err(Error::invalid(
            "machine",
            format!("{machine} >= {}", partition.num_parts()),
        ));
    }
    let local = &partition.local(machine).graph;
    let pool = local.train_nodes();
    let mut rng = stream(seed, Purpose::BiasProbe, machine as u32, 0);
    let mode = NeighborMode::Sampled {
        fanout,
        depth: model.arch().depth(),
    };
    let mut sampled = Vec::with_capacity(samples);
    let mut exact = Vec::with_capacity(samples);
    for _ in 0..samples {
        let batch = sample_minibatch_from(local, &pool, batch_size, mode, &mut rng)?;
        sampled.push(local_gradient(partition, machine, model, LocalBatch::Mini(&batch))?.1);
        let full = MiniBatch::full_neighbor(batch.targets.clone());
        exact.push(local_gradient(partition, machine, model, LocalBatch::Mini(&full))?.1);
    }
    let mean_sampled = Gradient::mean(&sampled)?;
    let mean_exact = Gradient::mean(&exact)?;
    let variance = sampled.iter().map(|g| g.dist_sq(&mean_sampled)).sum::<f64>() / samples as f64;
    Ok(SamplingBiasReport {
        machine,
        bias_sq: mean_sampled.dist_sq(&mean_exact),
        variance,
        samples,
    })
}

/// Index of the largest entry, ties toward the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (c, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = c;
        }
    }
    best
}

/// Full-neighbor loss and accuracy over the nodes of `split`. For
/// single-label classes micro-F1 and accuracy coincide.
pub fn evaluate(graph: &Graph, model: &Model, split: Split) -> Result<(f64, f64)> {
    let nodes = graph.nodes_in(split);
    if nodes.is_empty() {
        return Err(Error::invalid("mask", format!("{} split is empty", split.as_str())));
    }
    let batch = MiniBatch::full_neighbor(nodes);
    let tape = forward(graph, model, &batch)?;
    let labels: Vec<usize> = batch.targets.iter().map(|&t| graph.labels()[t]).collect();
    let (loss, _) = softmax_cross_entropy(&tape.logits, &labels);
    Ok((loss, accuracy(&tape.logits, &labels)))
}

pub fn accuracy(logits: &ndarray::Array2<f64>, labels: &[usize]) -> f64 {
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.view()) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Everything logged about the global model after a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    /// `‖∇L(θ)‖²` of the full-batch, full-neighbor training loss.
    pub grad_norm_sq: f64,
}

pub fn evaluate_all(graph: &Graph, model: &Model) -> Result<Evaluation> {
    let (train_loss, grad) = loss_and_grad(graph, model, &MiniBatch::full_neighbor(graph.train_nodes()))?;
    let (_, val_acc) = evaluate(graph, model, Split::Val)?;
    let (_, test_acc) = evaluate(graph, model, Split::Test)?;
    Ok(Evaluation {
        train_loss,
        val_acc,
        test_acc,
        grad_norm_sq: grad.norm_sq(),
    })
}

/// Bytes of one model transfer: every parameter as an f64.
pub fn model_bytes(model: &Model) -> u64 {
    model.param_count() as u64 * 8
}

/// Bytes to ship `nodes` feature vectors of dimension `dim`.
pub fn feature_bytes(nodes: usize, dim: usize) -> u64 {
    nodes as u64 * dim as u64 * 8
}
