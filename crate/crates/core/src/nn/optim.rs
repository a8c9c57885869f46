use ndarray::Zip;

use super::{Gradients, Mlp, NnError};

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub(crate) first: Gradients,
    pub(crate) second: Gradients,
}

impl OptimizerState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self::with_params(net, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_params(net: &Mlp, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second
    }
}

/// One Adam descent step on `net` along `grads`. Callers maximizing an
/// objective pass negated gradients.
pub fn apply_update(net: &mut Mlp, grads: &Gradients, opt: &mut OptimizerState) -> Result<(), NnError> {
    grads.check_congruent(net)?;
    opt.first.check_congruent(net)?;
    if !grads.is_finite() {
        return Err(NnError::NonFinite("gradient".into()));
    }
    opt.step += 1;
    let t = opt.step as f64;
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.eps);
    let step_size = opt.lr * (1.0 - b2.powf(t)).sqrt() / (1.0 - b1.powf(t));

    for (k, layer) in net.layers_mut().iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&grads.weights[k])
            .and(&mut opt.first.weights[k])
            .and(&mut opt.second.weights[k])
            .for_each(|p, &g, m, v| adam(p, g, m, v, b1, b2, eps, step_size));
        Zip::from(&mut layer.bias)
            .and(&grads.biases[k])
            .and(&mut opt.first.biases[k])
            .and(&mut opt.second.biases[k])
            .for_each(|p, &g, m, v| adam(p, g, m, v, b1, b2, eps, step_size));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn adam(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, b1: f64, b2: f64, eps: f64, step_size: f64) {
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    *p -= step_size * *m / (v.sqrt() + eps);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, OutputActivation};
    use ndarray::array;

    fn scalar(theta: f64) -> Mlp {
        Mlp::from_layers(
            vec![Layer { weights: array![[theta]], bias: array![0.0] }],
            OutputActivation::Identity,
        )
        .unwrap()
    }

    fn quadratic_grad(net: &Mlp) -> Gradients {
        // f(theta) = theta^2 on the single weight.
        let mut g = Gradients::zeros_like(net);
        g.weights[0][[0, 0]] = 2.0 * net.layers()[0].weights[[0, 0]];
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar(1.5);
        let mut opt = OptimizerState::new(&net, 0.1);
        let g = Gradients::zeros_like(&net);
        apply_update(&mut net, &g, &mut opt).unwrap();
        assert_eq!(net.flatten(), vec![1.5, 0.0]);
    }

    #[test]
    fn one_step_descends() {
        let mut net = scalar(1.0);
        let mut opt = OptimizerState::new(&net, 1e-3);
        let g = quadratic_grad(&net);
        apply_update(&mut net, &g, &mut opt).unwrap();
        assert!(net.layers()[0].weights[[0, 0]] < 1.0);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut net = scalar(1.0);
        let mut opt = OptimizerState::new(&net, 0.01);
        let mut trace = Vec::new();
        for _ in 0..2000 {
            let g = quadratic_grad(&net);
            apply_update(&mut net, &g, &mut opt).unwrap();
            trace.push(net.layers()[0].weights[[0, 0]].abs());
        }
        // Adam moves by about lr per step until it reaches the minimum.
        assert!(trace[..90].windows(2).all(|w| w[1] < w[0]));
        assert!(*trace.last().unwrap() < 1e-2);
    }

    #[test]
    fn non_finite_gradients_rejected() {
        let mut net = scalar(1.0);
        let mut opt = OptimizerState::new(&net, 0.1);
        let mut g = Gradients::zeros_like(&net);
        g.biases[0][0] = f64::NAN;
        assert!(matches!(apply_update(&mut net, &g, &mut opt), Err(NnError::NonFinite(_))));
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = scalar(1.0);
        let other = Mlp::from_layers(
            vec![Layer { weights: array![[1.0, 2.0]], bias: array![0.0, 0.0] }],
            OutputActivation::Identity,
        )
        .unwrap();
        let mut opt = OptimizerState::new(&net, 0.1);
        assert!(apply_update(&mut net, &Gradients::zeros_like(&other), &mut opt).is_err());
    }
}
