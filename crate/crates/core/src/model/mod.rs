//! Small GNN models with mean aggregation and exact manual backpropagation.

mod checkpoint;
mod gradcheck;
mod optim;
mod propagate;

pub use checkpoint::{decode_model, encode_model, load_model, save_model};
pub use gradcheck::{
    compare_gradients, compare_gradients_skipping, finite_diff_gradient, finite_diff_with_kinks, random_test_graph,
    run_gradcheck, GradCheckCase, GradCheckReport, GRADCHECK_ARCHS, RELATIVE_FLOOR,
};
pub use optim::{apply_update, average_models, AdamConfig, OptimizerKind, OptimizerState};
pub use propagate::{backward, forward, loss, loss_and_grad, softmax_cross_entropy, Tape};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Layer types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Mean over the neighborhood, then a linear map.
    Gcn,
    /// Own state through one matrix plus neighborhood mean through another.
    Sage,
    /// Per-node linear map; ignores the graph.
    Linear,
}

impl LayerKind {
    pub fn tag(self) -> char {
        match self {
            LayerKind::Gcn => 'G',
            LayerKind::Sage => 'S',
            LayerKind::Linear => 'L',
        }
    }

    pub fn aggregates(self) -> bool {
        !matches!(self, LayerKind::Linear)
    }

    pub fn matrices(self) -> usize {
        match self {
            LayerKind::Sage => 2,
            _ => 1,
        }
    }
}

/// Ordered stack of layer kinds, written like `G,G` or `S,L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Arch(Vec<LayerKind>);

impl Arch {
    pub fn new(layers: Vec<LayerKind>) -> Result<Arch> {
        if layers.is_empty() {
            return Err(Error::invalid("arch", "needs at least one layer"));
        }
        Ok(Arch(layers))
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of layers that read neighbors, i.e. required fan-out depth.
    pub fn depth(&self) -> usize {
        self.0.iter().filter(|k| k.aggregates()).count()
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Arch> {
        let layers = s
            .split(',')
            .map(|t| match t.trim() {
                "G" => Ok(LayerKind::Gcn),
                "S" => Ok(LayerKind::Sage),
                "L" => Ok(LayerKind::Linear),
                other => Err(Error::invalid("arch", format!("unknown layer tag `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Arch::new(layers)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", k.tag())?;
        }
        Ok(())
    }
}

/// Model parameters. `weights` lists the matrices in layer order; a SAGE
/// layer contributes its self matrix followed by its neighbor matrix. Every
/// matrix is `in × out` and is applied as `H · W`. No biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Arch,
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
}

fn check_dims(arch: &Arch, dims: &[usize]) -> Result<()> {
    if dims.len() != arch.len() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "arch {arch} needs {} dims, got {}",
            arch.len() + 1,
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::ShapeMismatch("dims must be positive".into()));
    }
    Ok(())
}

fn layer_shapes(arch: &Arch, dims: &[usize]) -> Vec<(usize, usize)> {
    arch.layers()
        .iter()
        .enumerate()
        .flat_map(|(l, k)| std::iter::repeat_n((dims[l], dims[l + 1]), k.matrices()))
        .collect()
}

impl Model {
    /// Glorot-uniform initialization, bound `sqrt(6 / (fan_in + fan_out))`.
    pub fn init(arch: Arch, dims: Vec<usize>, seed: u64) -> Result<Model> {
        check_dims(&arch, &dims)?;
        let mut rng = stream(seed, Purpose::Init, 0, 0);
        let weights = layer_shapes(&arch, &dims)
            .into_iter()
            .map(|(i, o)| {
                let bound = (6.0 / (i + o) as f64).sqrt();
                Array2::from_shape_simple_fn((i, o), || rng.random_range(-bound..=bound))
            })
            .collect();
        Ok(Model { arch, dims, weights })
    }

    pub fn from_weights(arch: Arch, dims: Vec<usize>, weights: Vec<Array2<f64>>) -> Result<Model> {
        check_dims(&arch, &dims)?;
        let shapes = layer_shapes(&arch, &dims);
        if shapes.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} matrices, got {}",
                shapes.len(),
                weights.len()
            )));
        }
        for (k, (w, &(i, o))) in weights.iter().zip(&shapes).enumerate() {
            if w.dim() != (i, o) {
                return Err(Error::ShapeMismatch(format!(
                    "matrix {k} is {:?}, expected {:?}",
                    w.dim(),
                    (i, o)
                )));
            }
        }
        Ok(Model { arch, dims, weights })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Index of the first weight matrix of layer `layer`.
    pub(crate) fn first_matrix(&self, layer: usize) -> usize {
        self.arch.layers()[..layer].iter().map(|k| k.matrices()).sum()
    }

    pub fn same_shape(&self, other: &Model) -> bool {
        self.arch == other.arch && self.dims == other.dims
    }

    pub(crate) fn check_congruent(&self, grad: &Gradient) -> Result<()> {
        let ok = self.weights.len() == grad.weights.len()
            && self.weights.iter().zip(&grad.weights).all(|(a, b)| a.dim() == b.dim());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("gradient does not match model".into()))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
    }
}

/// Gradient with the same layout as [`Model::weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Array2<f64>>,
}

impl Gradient {
    pub fn zeros_like(model: &Model) -> Gradient {
        Gradient {
            weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
        }
    }

    /// Squared Frobenius norm over all matrices.
    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w.iter().map(|x| x * x).sum::<f64>()).sum()
    }

    /// Squared Frobenius distance to `other`.
    pub fn dist_sq(&self, other: &Gradient) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| {
                let mut s = 0.0;
                Zip::from(a).and(b).for_each(|x, y| s += (x - y) * (x - y));
                s
            })
            .sum()
    }

    /// Elementwise mean, accumulated in list order.
    pub fn mean(grads: &[Gradient]) -> Result<Gradient> {
        let (first, rest) = grads
            .split_first()
            .ok_or_else(|| Error::invalid("gradients", "empty list"))?;
        let mut acc = first.clone();
        for g in rest {
            if g.weights.len() != acc.weights.len()
                || g.weights.iter().zip(&acc.weights).any(|(a, b)| a.dim() != b.dim())
            {
                return Err(Error::ShapeMismatch("gradients differ in shape".into()));
            }
            for (a, b) in acc.weights.iter_mut().zip(&g.weights) {
                *a += b;
            }
        }
        let n = grads.len() as f64;
        for a in &mut acc.weights {
            a.mapv_inplace(|x| x / n);
        }
        Ok(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_parses_and_prints() {
        let a: Arch = "G, S,L".parse().unwrap();
        assert_eq!(a.layers(), &[LayerKind::Gcn, LayerKind::Sage, LayerKind::Linear]);
        assert_eq!(a.to_string(), "G,S,L");
        assert_eq!(a.depth(), 2);
        assert!("G,X".parse::<Arch>().is_err());
        assert!("".parse::<Arch>().is_err());
    }

    #[test]
    fn linear_init_within_glorot_bound() {
        let m = Model::init("L".parse().unwrap(), vec![4, 3], 1).unwrap();
        assert_eq!(m.weights().len(), 1);
        assert_eq!(m.weights()[0].dim(), (4, 3));
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(m.weights()[0].iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn init_is_seeded() {
        let a = || Model::init("G,S".parse().unwrap(), vec![5, 4, 3], 9).unwrap();
        assert_eq!(a(), a());
        assert_ne!(a(), Model::init("G,S".parse().unwrap(), vec![5, 4, 3], 10).unwrap());
    }

    #[test]
    fn param_count_sums_matrices() {
        let m = Model::init("G,S,L".parse().unwrap(), vec![5, 4, 3, 2], 0).unwrap();
        assert_eq!(m.weights().len(), 4);
        assert_eq!(m.param_count(), 20 + 12 + 12 + 6);
        assert_eq!(m.first_matrix(2), 3);
    }

    #[test]
    fn dims_must_chain() {
        assert!(Model::init("G,G".parse().unwrap(), vec![4, 3], 0).is_err());
        assert!(Model::init("G".parse().unwrap(), vec![4, 0], 0).is_err());
        let w = vec![Array2::zeros((4, 2))];
        assert!(Model::from_weights("G".parse().unwrap(), vec![4, 3], w).is_err());
    }
}
