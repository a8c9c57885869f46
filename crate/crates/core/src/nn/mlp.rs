use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Activation applied to the last layer. Hidden layers always use ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    /// Logistic sigmoid, mapping into (0, 1).
    Sigmoid,
}

impl OutputActivation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::Sigmoid => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self, NnError> {
        match tag {
            0 => Ok(OutputActivation::Identity),
            1 => Ok(OutputActivation::Sigmoid),
            t => Err(NnError::Format(format!("unknown output activation tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(fan_in, fan_out)`, so a batch `(B, fan_in)` maps through `x.dot(w)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected feedforward network with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
    output: OutputActivation,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer, `(B, fan_in)`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer, `(B, fan_out)`.
    pre: Vec<Array2<f64>>,
    /// Network output, needed for the sigmoid derivative.
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

/// Parameter-shaped accumulator for derivatives (and Adam moments).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// All entries in declaration order: layer by layer, weights (row-major)
    /// then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    fn congruent(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&net.layers)
                .all(|((w, b), l)| w.dim() == l.weights.dim() && b.len() == l.bias.len())
    }

    pub(crate) fn check_congruent(&self, net: &Mlp) -> Result<(), NnError> {
        if self.congruent(net) {
            Ok(())
        } else {
            Err(NnError::Shape("gradient shapes do not match the network".into()))
        }
    }
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.gen_range(-bound..=bound)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), layers, output })
    }

    /// Builds a network from explicit layers; shapes must chain.
    pub fn from_layers(layers: Vec<Layer>, output: OutputActivation) -> Result<Self, NnError> {
        let first = layers
            .first()
            .ok_or_else(|| NnError::Shape("a network needs at least one layer".into()))?;
        let mut sizes = vec![first.weights.nrows()];
        for l in &layers {
            if l.weights.nrows() != *sizes.last().unwrap() || l.bias.len() != l.weights.ncols() {
                return Err(NnError::Shape("layer shapes do not chain".into()));
            }
            sizes.push(l.weights.ncols());
        }
        validate_sizes(&sizes)?;
        let net = Self { sizes, layers, output };
        if !net.is_finite() {
            return Err(NnError::NonFinite("initial parameters".into()));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.output == other.output
    }

    /// Parameters in declaration order (see [`Gradients::flatten`]).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    /// Visits every parameter mutably in declaration order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                f(k, v);
                k += 1;
            }
        }
    }

    /// Largest absolute parameter difference to a congruent network.
    pub fn max_abs_diff(&self, other: &Mlp) -> Result<f64, NnError> {
        if !self.same_shape(other) {
            return Err(NnError::Shape("networks differ in shape".into()));
        }
        Ok(self
            .flatten()
            .iter()
            .zip(other.flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Batched forward pass, `(B, input_dim) -> (B, output_dim)`.
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weights) + &layer.bias;
            let a = if k == last { self.apply_output(&z) } else { z.mapv(relu) };
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        let cache = ForwardCache { inputs, pre, output: x.clone() };
        Ok((x, cache))
    }

    /// Forward pass without recording activations.
    pub fn predict_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weights) + &layer.bias;
            x = if k == last { self.apply_output(&z) } else { z.mapv(relu) };
        }
        Ok(x)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| NnError::Shape(e.to_string()))?;
        let (out, cache) = self.forward_batch(x)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Reverse-mode derivatives of `sum_rows(output_grad * output)`.
    ///
    /// Returns parameter gradients summed over the batch and the gradient
    /// with respect to the input, `(B, input_dim)`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>), NnError> {
        if cache.inputs.len() != self.layers.len()
            || output_grad.dim() != cache.output.dim()
            || cache.output.ncols() != self.output_dim()
        {
            return Err(NnError::Shape(format!(
                "output gradient {:?} does not match cached output {:?}",
                output_grad.dim(),
                cache.output.dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut delta = match self.output {
            OutputActivation::Identity => output_grad.to_owned(),
            OutputActivation::Sigmoid => {
                let mut d = output_grad.to_owned();
                Zip::from(&mut d).and(&cache.output).for_each(|g, &y| *g *= y * (1.0 - y));
                d
            }
        };
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for k in (0..=last).rev() {
            let layer = &self.layers[k];
            if k != last {
                Zip::from(&mut delta)
                    .and(&cache.pre[k])
                    .for_each(|g, &z| if z <= 0.0 { *g = 0.0 });
            }
            weights.push(cache.inputs[k].t().dot(&delta));
            biases.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&layer.weights.t());
        }
        weights.reverse();
        biases.reverse();
        Ok((Gradients { weights, biases }, delta))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn apply_output(&self, z: &Array2<f64>) -> Array2<f64> {
        match self.output {
            OutputActivation::Identity => z.clone(),
            OutputActivation::Sigmoid => z.mapv(sigmoid),
        }
    }

    fn check_input(&self, cols: usize) -> Result<(), NnError> {
        if cols != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has {cols} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

/// `target <- tau * source + (1 - tau) * target`, element-wise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<(), NnError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(NnError::Shape(format!("tau {tau} outside [0, 1]")));
    }
    if !target.same_shape(source) {
        return Err(NnError::Shape("soft update between networks of different shape".into()));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        Zip::from(&mut t.weights)
            .and(&s.weights)
            .for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
        Zip::from(&mut t.bias).and(&s.bias).for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
    }
    Ok(())
}

fn validate_sizes(sizes: &[usize]) -> Result<(), NnError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(NnError::Shape(format!(
            "layer sizes {sizes:?}: need at least two layers, all positive"
        )));
    }
    Ok(())
}

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
