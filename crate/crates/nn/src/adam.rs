use crate::model::{DenoiserModel, Gradients};
use crate::tensor::Real;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(model: &DenoiserModel<T>, lr: f64) -> Self {
        let zeros = || -> Vec<Vec<T>> {
            model
                .layers()
                .iter()
                .flat_map(|l| [vec![T::zero(); l.weight.len()], vec![T::zero(); l.bias.len()]])
                .collect()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, model: &mut DenoiserModel<T>, grads: &Gradients<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let step_size = T::of(self.lr * c2.sqrt() / c1);
        let eps = T::of(self.eps * c2.sqrt());
        let one = T::one();
        let mut slot = 0;
        for (layer, g) in model.layers_mut().iter_mut().zip(grads) {
            for (params, grad) in [(&mut layer.weight, &g.weight), (&mut layer.bias, &g.bias)] {
                let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
                for i in 0..params.len() {
                    m[i] = b1 * m[i] + (one - b1) * grad[i];
                    v[i] = b2 * v[i] + (one - b2) * grad[i] * grad[i];
                    params[i] = params[i] - step_size * m[i] / (v[i].sqrt() + eps);
                }
                slot += 1;
            }
        }
    }
}
