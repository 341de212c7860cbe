use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::softmax_rows_inplace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(crate::nn::loss::sigmoid),
        }
    }

    /// Multiplies `grad` in place by the derivative, expressed through the
    /// post-activation output.
    fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(grad).and(output).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => Zip::from(grad).and(output).for_each(|g, &a| *g *= a * (1.0 - a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    None,
    /// Softmax over the whole output vector.
    Softmax,
}

/// Affine map followed by an elementwise activation. `weights` has shape
/// `(inputs, outputs)` so a batch is computed as `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..=limit));
        Layer {
            weights,
            bias: Array1::zeros(outputs),
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    head: Head,
}

/// Intermediate values of a batched forward pass, needed by `backward_batch`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[i + 1]` is layer `i`'s output.
    activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients congruent in shape with a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// Flattened in the network's parameter order (per layer: weights
    /// row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|&v| v == 0.0) && l.bias.iter().all(|&v| v == 0.0))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {} takes {}",
                    i,
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::Shape(format!("layer {i} bias length {} != {}", l.bias.len(), l.outputs())));
            }
            if !l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Network { layers, head })
    }

    /// A multilayer perceptron with `sizes = [input, hidden..., output]`.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Layer::init(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Network::new(layers, head)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward_batch(x)?.into_output().into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for layer in &self.layers {
            let prev = activations.last().expect("non-empty");
            let mut z = prev.dot(&layer.weights);
            z += &layer.bias;
            layer.activation.apply(&mut z);
            activations.push(z);
        }
        let mut output = activations.last().expect("non-empty").clone();
        if self.head == Head::Softmax {
            softmax_rows_inplace(&mut output);
        }
        Ok(ForwardCache { activations, output })
    }

    /// Gradients of a scalar loss given `dL/d(output)` for a single input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Shape(e.to_string()))?;
        let g = ArrayView2::from_shape((1, upstream.len()), upstream).map_err(|e| Error::Shape(e.to_string()))?;
        let cache = self.forward_batch(x)?;
        self.backward_batch(&cache, g)
    }

    /// Backpropagates `upstream = dL/d(head output)`, one row per example.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<Gradients> {
        if upstream.dim() != cache.output.dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.dim(),
                cache.output.dim()
            )));
        }
        let mut grad = upstream.to_owned();
        if self.head == Head::Softmax {
            // dz = s ⊙ (g − ⟨g, s⟩)
            let s = &cache.output;
            let dots = (&grad * s).sum_axis(Axis(1)).insert_axis(Axis(1));
            grad = s * &(&grad - &dots);
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer.activation.backprop(&cache.activations[i + 1], &mut grad);
            let prev = &cache.activations[i];
            let weights = prev.t().dot(&grad);
            let bias = grad.sum_axis(Axis(0));
            if i > 0 {
                grad = grad.dot(&layer.weights.t());
            }
            layers.push(LayerGradients { weights, bias });
        }
        layers.reverse();
        Ok(Gradients { layers })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if index < l.weights.len() {
                return (li, true, index);
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return (li, false, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index, in the same order as [`Gradients::flatten`].
    pub fn param(&self, index: usize) -> f64 {
        let (li, is_w, k) = self.locate(index);
        let l = &self.layers[li];
        if is_w {
            l.weights.as_slice().expect("standard layout")[k]
        } else {
            l.bias[k]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (li, is_w, k) = self.locate(index);
        let l = &mut self.layers[li];
        if is_w {
            l.weights.as_slice_mut().expect("standard layout")[k] = value;
        } else {
            l.bias[k] = value;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn check_gradients(&self, grads: &Gradients) -> Result<()> {
        let ok = grads.layers.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(&grads.layers)
                .all(|(l, g)| l.weights.dim() == g.weights.dim() && l.bias.len() == g.bias.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("gradients are not congruent with the network".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer {
            weights: Array2::eye(2),
            bias: Array1::zeros(2),
            activation: Activation::Identity,
        };
        let net = Network::new(vec![layer], Head::None).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn softmax_head_closed_forms() {
        let layer = Layer {
            weights: Array2::eye(2),
            bias: Array1::zeros(2),
            activation: Activation::Identity,
        };
        let net = Network::new(vec![layer], Head::Softmax).unwrap();
        assert_eq!(net.forward(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let out = net.forward(&[2f64.ln(), 0.0]).unwrap();
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((out[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_layers_and_inputs() {
        let a = Layer {
            weights: Array2::zeros((2, 3)),
            bias: Array1::zeros(3),
            activation: Activation::Relu,
        };
        let b = Layer {
            weights: Array2::zeros((2, 1)),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        };
        assert!(matches!(Network::new(vec![a.clone(), b], Head::None), Err(Error::Shape(_))));
        let net = Network::new(vec![a], Head::None).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let net = Network::mlp(&[3, 4, 2], Activation::Relu, Activation::Identity, Head::Softmax, &mut rng).unwrap();
        let g = net.backward(&[0.1, -0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn relu_blocks_negative_preactivation() {
        let l1 = Layer {
            weights: array![[1.0, -1.0]],
            bias: array![0.0, 0.0],
            activation: Activation::Relu,
        };
        let l2 = Layer {
            weights: array![[1.0], [1.0]],
            bias: array![0.0],
            activation: Activation::Identity,
        };
        let net = Network::new(vec![l1, l2], Head::None).unwrap();
        // input 2.0: unit 0 pre-activation +2, unit 1 pre-activation −2
        let g = net.backward(&[2.0], &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights[[0, 0]], 2.0);
        assert_eq!(g.layers[0].weights[[0, 1]], 0.0);
        assert_eq!(g.layers[0].bias[1], 0.0);
        assert_eq!(g.layers[1].weights[[1, 0]], 0.0);
    }

    #[test]
    fn flat_param_order_matches_gradients() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let mut net = Network::mlp(&[2, 3, 1], Activation::Sigmoid, Activation::Identity, Head::None, &mut rng).unwrap();
        let n = net.param_count();
        assert_eq!(n, 2 * 3 + 3 + 3 + 1);
        for i in 0..n {
            net.set_param(i, i as f64);
        }
        assert_eq!(net.layers()[0].weights[[1, 0]], 3.0);
        assert_eq!(net.layers()[0].bias[0], 6.0);
        assert_eq!(net.layers()[1].bias[0], 12.0);
        assert_eq!(net.param(9), 9.0);
    }
}
