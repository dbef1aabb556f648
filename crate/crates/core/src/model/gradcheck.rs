//! Central finite differences, the oracle for the analytic gradient.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{forward, loss, loss_and_grad, Arch, Gradient, Model};
use crate::error::{Error, Result};
use crate::graph::{Graph, MiniBatch, Split};
use crate::rng::{stream, Purpose};

/// `(matrix, row, column)` of one parameter.
pub type Coord = (usize, usize, usize);

/// Central-difference estimate of the full-neighbor loss gradient.
pub fn finite_diff_gradient(graph: &Graph, model: &Model, targets: &[usize], step: f64) -> Result<Gradient> {
    Ok(central_differences(graph, model, targets, step, false)?.0)
}

/// Central differences plus the coordinates whose `±step` probe changes the
/// ReLU activation pattern. At those coordinates the loss is not smooth on
/// the probe interval and the difference quotient is not a derivative.
pub fn finite_diff_with_kinks(
    graph: &Graph,
    model: &Model,
    targets: &[usize],
    step: f64,
) -> Result<(Gradient, Vec<Coord>)> {
    central_differences(graph, model, targets, step, true)
}

fn central_differences(
    graph: &Graph,
    model: &Model,
    targets: &[usize],
    step: f64,
    track_kinks: bool,
) -> Result<(Gradient, Vec<Coord>)> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", format!("{step} is not a positive finite step")));
    }
    let batch = MiniBatch::full_neighbor(targets.to_vec());
    let pattern = |m: &Model| -> Result<Vec<bool>> { Ok(forward(graph, m, &batch)?.relu_pattern()) };
    let base = if track_kinks { pattern(model)? } else { Vec::new() };
    let mut probe = model.clone();
    let mut grad = Gradient::zeros_like(model);
    let mut kinks = Vec::new();
    for m in 0..model.weights().len() {
        let (rows, cols) = model.weights()[m].dim();
        for i in 0..rows {
            for j in 0..cols {
                let original = model.weights()[m][[i, j]];
                probe.weights_mut()[m][[i, j]] = original + step;
                let up = loss(graph, &probe, &batch)?;
                let mut kinked = track_kinks && pattern(&probe)? != base;
                probe.weights_mut()[m][[i, j]] = original - step;
                let down = loss(graph, &probe, &batch)?;
                kinked = kinked || (track_kinks && pattern(&probe)? != base);
                probe.weights_mut()[m][[i, j]] = original;
                grad.weights[m][[i, j]] = (up - down) / (2.0 * step);
                if kinked {
                    kinks.push((m, i, j));
                }
            }
        }
    }
    Ok((grad, kinks))
}

/// Relative errors below this magnitude of both entries are measured
/// against the floor instead, so exactly-zero entries compare cleanly.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(matrix, row, col)` of the worst coordinate.
    pub worst: Coord,
    pub analytic: f64,
    pub numeric: f64,
    /// Coordinates excluded because their probe crossed a ReLU kink.
    pub skipped: usize,
    pub checked: usize,
}

/// Worst coordinate of `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn compare_gradients(analytic: &Gradient, numeric: &Gradient) -> GradCheckReport {
    compare_gradients_skipping(analytic, numeric, &[])
}

/// As [`compare_gradients`], ignoring the coordinates in `skip`.
pub fn compare_gradients_skipping(analytic: &Gradient, numeric: &Gradient, skip: &[Coord]) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0, 0),
        analytic: 0.0,
        numeric: 0.0,
        skipped: skip.len(),
        checked: 0,
    };
    for (m, (a, n)) in analytic.weights.iter().zip(&numeric.weights).enumerate() {
        for ((i, j), &x) in a.indexed_iter() {
            if skip.contains(&(m, i, j)) {
                continue;
            }
            report.checked += 1;
            let y = n[[i, j]];
            let err = (x - y).abs() / x.abs().max(y.abs()).max(RELATIVE_FLOOR);
            if err > report.max_relative_error || err.is_nan() {
                report.max_relative_error = err;
                report.worst = (m, i, j);
                report.analytic = x;
                report.numeric = y;
            }
        }
    }
    report
}

/// Architectures exercised by the default gradient check.
pub const GRADCHECK_ARCHS: [&str; 5] = ["G", "G,G", "S,S", "G,L", "S,L"];

/// Seeded Erdős–Rényi graph with Gaussian features and random labels, used
/// only to exercise gradients.
pub fn random_test_graph(nodes: usize, feature_dim: usize, classes: usize, seed: u64) -> Result<Graph> {
    if nodes == 0 || feature_dim == 0 || classes == 0 {
        return Err(Error::invalid("nodes", "graph sizes must be positive"));
    }
    let mut rng = stream(seed, Purpose::Test, 0, 0);
    let p = (3.0 / nodes as f64).min(1.0);
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let features = Array2::from_shape_simple_fn((nodes, feature_dim), || rng.sample(StandardNormal));
    let labels = (0..nodes).map(|_| rng.random_range(0..classes)).collect();
    Ok(Graph::from_edges(nodes, &edges, features, labels, classes, vec![Split::Train; nodes])?.with_self_loops())
}

#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub arch: Arch,
    pub nodes: usize,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// Analytic versus central-difference gradients for each architecture on a
/// seeded random graph of `nodes` nodes (4 features, 8 hidden, 3 classes),
/// with every node as a target. Coordinates whose probe crosses a ReLU kink
/// are excluded and counted in the report.
pub fn run_gradcheck(archs: &[Arch], nodes: usize, step: f64, seed: u64) -> Result<Vec<GradCheckCase>> {
    let graph = random_test_graph(nodes, 4, 3, seed)?;
    let targets: Vec<usize> = (0..nodes).collect();
    archs
        .iter()
        .map(|arch| {
            let mut dims = vec![4];
            dims.extend(std::iter::repeat_n(8, arch.len() - 1));
            dims.push(3);
            let model = Model::init(arch.clone(), dims, seed.wrapping_add(1))?;
            let (_, analytic) = loss_and_grad(&graph, &model, &MiniBatch::full_neighbor(targets.clone()))?;
            let (numeric, kinks) = finite_diff_with_kinks(&graph, &model, &targets, step)?;
            Ok(GradCheckCase {
                arch: arch.clone(),
                nodes,
                seed,
                report: compare_gradients_skipping(&analytic, &numeric, &kinks),
            })
        })
        .collect()
}
