//! Forward pass over a fan-out tree and its exact reverse pass.

use std::borrow::Cow;

use ndarray::{s, Array2, ArrayView2, Axis};

use super::{Gradient, LayerKind, Model};
use crate::error::{Error, Result};
use crate::graph::{full_neighbor_hops, Block, Graph, MiniBatch};

struct LayerCache {
    input: Array2<f64>,
    aggregated: Option<Array2<f64>>,
    pre_activation: Array2<f64>,
    /// Index into the tape's hops, for aggregating layers.
    hop: Option<usize>,
}

/// Activations recorded by [`forward`], enough to run [`backward`].
pub struct Tape<'a> {
    hops: Cow<'a, [Block]>,
    layers: Vec<LayerCache>,
    pub logits: Array2<f64>,
}

impl Tape<'_> {
    /// Which hidden pre-activations are positive, layer by layer.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let hidden = self.layers.len().saturating_sub(1);
        self.layers[..hidden]
            .iter()
            .flat_map(|c| c.pre_activation.iter().map(|&y| y > 0.0))
            .collect()
    }
}

fn aggregate(block: &Block, h: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((block.dst.len(), h.ncols()));
    for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let sources = block.sources(k);
        if sources.is_empty() {
            continue;
        }
        for &p in sources {
            row += &h.row(p);
        }
        let n = sources.len() as f64;
        row.mapv_inplace(|x| x / n);
    }
    out
}

/// Transpose of [`aggregate`]: routes each destination gradient back to its
/// sources, divided by the neighborhood size.
fn scatter(block: &Block, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((block.src.len(), grad.ncols()));
    for (k, row) in grad.axis_iter(Axis(0)).enumerate() {
        let sources = block.sources(k);
        if sources.is_empty() {
            continue;
        }
        let n = sources.len() as f64;
        let share = row.mapv(|x| x / n);
        for &p in sources {
            let mut dst = out.row_mut(p);
            dst += &share;
        }
    }
    out
}

fn check_finite(m: &Array2<f64>, layer: usize) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

/// Runs the model on `batch.targets`.
///
/// In full-neighbor mode the receptive field is expanded from the graph; in
/// sampled mode the batch's fan-out tree is used and must be at least as deep
/// as the model has aggregating layers (extra outer hops are ignored).
/// Hidden layers use ReLU, the output layer is linear; row `i` of the logits
/// belongs to `batch.targets[i]`.
pub fn forward<'a>(graph: &Graph, model: &Model, batch: &'a MiniBatch) -> Result<Tape<'a>> {
    let depth = model.arch().depth();
    let hops: Cow<'a, [Block]> = match &batch.hops {
        None => Cow::Owned(full_neighbor_hops(graph, &batch.targets, depth)),
        Some(h) => {
            if h.len() < depth {
                return Err(Error::ShapeMismatch(format!(
                    "batch has {} hops but arch {} aggregates {depth} times",
                    h.len(),
                    model.arch()
                )));
            }
            if h.first().is_some_and(|b| b.dst != batch.targets) {
                return Err(Error::ShapeMismatch("fan-out tree was built for other targets".into()));
            }
            Cow::Borrowed(&h[..depth])
        }
    };
    if model.dims()[0] != graph.feature_dim() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} input features, graph has {}",
            model.dims()[0],
            graph.feature_dim()
        )));
    }
    if let Some(&bad) = batch.targets.iter().find(|&&t| t >= graph.num_nodes()) {
        return Err(Error::NodeOutOfRange {
            index: bad,
            num_nodes: graph.num_nodes(),
        });
    }

    let inputs: &[usize] = match hops.last() {
        Some(b) => &b.src,
        None => &batch.targets,
    };
    let mut h = graph.features().select(Axis(0), inputs);
    let num_layers = model.arch().len();
    let mut remaining = depth;
    let mut layers = Vec::with_capacity(num_layers);

    for (l, &kind) in model.arch().layers().iter().enumerate() {
        let w = model.first_matrix(l);
        let weights = model.weights();
        let (aggregated, pre, hop) = match kind {
            LayerKind::Gcn => {
                remaining -= 1;
                let z = aggregate(&hops[remaining], h.view());
                let y = z.dot(&weights[w]);
                (Some(z), y, Some(remaining))
            }
            LayerKind::Sage => {
                remaining -= 1;
                let block = &hops[remaining];
                let z = aggregate(block, h.view());
                let mut y = h.slice(s![..block.dst.len(), ..]).dot(&weights[w]);
                y += &z.dot(&weights[w + 1]);
                (Some(z), y, Some(remaining))
            }
            LayerKind::Linear => (None, h.dot(&weights[w]), None),
        };
        check_finite(&pre, l)?;
        let out = if l + 1 < num_layers {
            pre.mapv(|x| x.max(0.0))
        } else {
            pre.clone()
        };
        layers.push(LayerCache {
            input: std::mem::replace(&mut h, out),
            aggregated,
            pre_activation: pre,
            hop,
        });
    }

    Ok(Tape {
        hops,
        layers,
        logits: h,
    })
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let b = logits.nrows() as f64;
    let mut grad = Array2::<f64>::zeros(logits.dim());
    let mut total = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[labels[i]];
        let mut g = grad.row_mut(i);
        for (c, &x) in row.iter().enumerate() {
            g[c] = (x - log_z).exp() / b;
        }
        g[labels[i]] -= 1.0 / b;
    }
    (total / b, grad)
}

/// Reverse pass from a logits gradient to parameter gradients.
pub fn backward(model: &Model, tape: &Tape<'_>, dlogits: Array2<f64>) -> Gradient {
    let mut grad = Gradient::zeros_like(model);
    let num_layers = model.arch().len();
    let mut upstream = dlogits;
    for l in (0..num_layers).rev() {
        let cache = &tape.layers[l];
        let mut dy = upstream;
        if l + 1 < num_layers {
            ndarray::Zip::from(&mut dy)
                .and(&cache.pre_activation)
                .for_each(|g, &y| {
                    if y <= 0.0 {
                        *g = 0.0
                    }
                });
        }
        let w = model.first_matrix(l);
        let weights = model.weights();
        let need_input_grad = l > 0;
        upstream = match model.arch().layers()[l] {
            LayerKind::Gcn => {
                let z = cache.aggregated.as_ref().unwrap();
                grad.weights[w] = z.t().dot(&dy);
                if need_input_grad {
                    let dz = dy.dot(&weights[w].t());
                    scatter(&tape.hops[cache.hop.unwrap()], &dz)
                } else {
                    Array2::zeros((0, 0))
                }
            }
            LayerKind::Sage => {
                let block = &tape.hops[cache.hop.unwrap()];
                let z = cache.aggregated.as_ref().unwrap();
                let own = cache.input.slice(s![..block.dst.len(), ..]);
                grad.weights[w] = own.t().dot(&dy);
                grad.weights[w + 1] = z.t().dot(&dy);
                if need_input_grad {
                    let dz = dy.dot(&weights[w + 1].t());
                    let mut dh = scatter(block, &dz);
                    let mut head = dh.slice_mut(s![..block.dst.len(), ..]);
                    head += &dy.dot(&weights[w].t());
                    dh
                } else {
                    Array2::zeros((0, 0))
                }
            }
            LayerKind::Linear => {
                grad.weights[w] = cache.input.t().dot(&dy);
                if need_input_grad {
                    dy.dot(&weights[w].t())
                } else {
                    Array2::zeros((0, 0))
                }
            }
        };
    }
    grad
}

fn labels_of(graph: &Graph, targets: &[usize]) -> Vec<usize> {
    targets.iter().map(|&t| graph.labels()[t]).collect()
}

/// Mean cross-entropy over the batch targets.
pub fn loss(graph: &Graph, model: &Model, batch: &MiniBatch) -> Result<f64> {
    if batch.targets.is_empty() {
        return Err(Error::invalid("targets", "empty batch"));
    }
    let tape = forward(graph, model, batch)?;
    let (loss, _) = softmax_cross_entropy(&tape.logits, &labels_of(graph, &batch.targets));
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: model.arch().len() - 1,
        });
    }
    Ok(loss)
}

/// Mean cross-entropy over the batch targets and its exact gradient.
pub fn loss_and_grad(graph: &Graph, model: &Model, batch: &MiniBatch) -> Result<(f64, Gradient)> {
    if batch.targets.is_empty() {
        return Err(Error::invalid("targets", "empty batch"));
    }
    let tape = forward(graph, model, batch)?;
    let (loss, dlogits) = softmax_cross_entropy(&tape.logits, &labels_of(graph, &batch.targets));
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: model.arch().len() - 1,
        });
    }
    let grad = backward(model, &tape, dlogits);
    if !grad.is_finite() {
        return Err(Error::NonFinite { layer: 0 });
    }
    Ok((loss, grad))
}
