use ndarray::{Array2, Zip};

use super::{Gradient, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam(AdamConfig),
}

/// Per-worker optimizer state. Adam moments are created on the first step.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam {
        config: AdamConfig,
        step: u64,
        first: Vec<Array2<f64>>,
        second: Vec<Array2<f64>>,
    },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> OptimizerState {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam(config) => OptimizerState::Adam {
                config,
                step: 0,
                first: Vec::new(),
                second: Vec::new(),
            },
        }
    }
}

/// One optimizer step in place: `θ ← θ − lr·g` for SGD, bias-corrected Adam
/// otherwise.
pub fn apply_update(model: &mut Model, grad: &Gradient, lr: f64, state: &mut OptimizerState) -> Result<()> {
    model.check_congruent(grad)?;
    match state {
        OptimizerState::Sgd => {
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                w.scaled_add(-lr, g);
            }
        }
        OptimizerState::Adam {
            config,
            step,
            first,
            second,
        } => {
            if first.is_empty() {
                *first = grad.weights.iter().map(|g| Array2::zeros(g.dim())).collect();
                *second = first.clone();
            } else if first.len() != grad.weights.len()
                || first.iter().zip(&grad.weights).any(|(m, g)| m.dim() != g.dim())
            {
                return Err(Error::ShapeMismatch("optimizer state does not match gradient".into()));
            }
            *step += 1;
            let c1 = 1.0 - config.beta1.powi(*step as i32);
            let c2 = 1.0 - config.beta2.powi(*step as i32);
            let AdamConfig { beta1, beta2, eps } = *config;
            for (((w, g), m), v) in model
                .weights
                .iter_mut()
                .zip(&grad.weights)
                .zip(first.iter_mut())
                .zip(second.iter_mut())
            {
                Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            }
        }
    }
    Ok(())
}

/// Elementwise arithmetic mean of congruent models.
///
/// Computed as `first + Σ (mᵢ − first) / P` in list order, which is exact
/// when all models agree and for a single model.
pub fn average_models(models: &[Model]) -> Result<Model> {
    let (first, rest) = models
        .split_first()
        .ok_or_else(|| Error::invalid("models", "cannot average an empty list"))?;
    let mut offsets: Vec<Array2<f64>> = first.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
    for m in rest {
        if !m.same_shape(first) {
            return Err(Error::ShapeMismatch("models differ in architecture or dims".into()));
        }
        for ((acc, w), base) in offsets.iter_mut().zip(&m.weights).zip(&first.weights) {
            Zip::from(acc).and(w).and(base).for_each(|a, &x, &b| *a += x - b);
        }
    }
    let n = models.len() as f64;
    let mut avg = first.clone();
    for (w, acc) in avg.weights.iter_mut().zip(&offsets) {
        Zip::from(w).and(acc).for_each(|w, &a| *w += a / n);
    }
    Ok(avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arch;
    use ndarray::array;

    fn scalar(w: f64) -> Model {
        Model::from_weights("L".parse::<Arch>().unwrap(), vec![1, 1], vec![array![[w]]]).unwrap()
    }

    fn random() -> Model {
        Model::init("G,S".parse().unwrap(), vec![3, 4, 2], 11).unwrap()
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut m = random();
        let g = Gradient {
            weights: m.weights().to_vec(),
        };
        apply_update(&mut m, &g, 0.0, &mut OptimizerState::Sgd).unwrap();
        assert_eq!(m, random());
    }

    #[test]
    fn unit_step_along_model_zeroes_it() {
        let mut m = random();
        let g = Gradient {
            weights: m.weights().to_vec(),
        };
        apply_update(&mut m, &g, 1.0, &mut OptimizerState::Sgd).unwrap();
        assert!(m.weights().iter().all(|w| w.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn first_adam_step_on_square() {
        // f(w) = w², gradient 2w at w = 1
        let mut m = scalar(1.0);
        let mut state = OptimizerState::new(OptimizerKind::Adam(AdamConfig::default()));
        let g = Gradient {
            weights: vec![array![[2.0]]],
        };
        apply_update(&mut m, &g, 0.1, &mut state).unwrap();
        assert!((m.weights()[0][[0, 0]] - 0.9).abs() < 1e-6);
        assert!(matches!(state, OptimizerState::Adam { step: 1, .. }));
    }

    #[test]
    fn mismatched_gradient_rejected() {
        let mut m = random();
        let g = Gradient {
            weights: vec![array![[1.0]]],
        };
        assert!(apply_update(&mut m, &g, 0.1, &mut OptimizerState::Sgd).is_err());
    }

    #[test]
    fn averaging() {
        assert_eq!(average_models(&[random(), random(), random()]).unwrap(), random());
        let w = random();
        let mut neg = w.clone();
        neg.weights_mut().iter_mut().for_each(|m| m.mapv_inplace(|x| -x));
        let avg = average_models(&[w, neg]).unwrap();
        assert!(avg.weights().iter().all(|m| m.iter().all(|&x| x == 0.0)));
        let avg = average_models(&[scalar(1.0), scalar(2.0), scalar(6.0)]).unwrap();
        assert_eq!(avg.weights()[0][[0, 0]], 3.0);
    }

    #[test]
    fn averaging_rejects_empty_and_mismatch() {
        assert!(average_models(&[]).is_err());
        assert!(average_models(&[scalar(1.0), random()]).is_err());
    }
}
