//! A sequential stack of layers with shared forward/backward plumbing.

use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, LayerGrads, Saved};
use super::tensor::Tensor;
use super::Mode;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Subnet {
    pub layers: Vec<Layer>,
}

/// Parameter gradients aligned with a subnet's layers. Kept separate from
/// the parameter tensors so independent batch items can accumulate in
/// parallel and be reduced in a fixed order.
#[derive(Debug, Clone)]
pub struct SubnetGrads {
    pub per_layer: Vec<LayerGrads>,
}

impl SubnetGrads {
    pub fn zeros_like(net: &Subnet) -> Self {
        Self { per_layer: net.layers.iter().map(Layer::empty_grads).collect() }
    }

    pub fn add_assign(&mut self, other: &SubnetGrads) {
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.per_layer {
            g.scale(s);
        }
    }
}

impl Subnet {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn contains_stochastic(&self) -> bool {
        self.layers.iter().any(Layer::is_stochastic)
    }

    /// Full forward pass keeping per-layer saved activations for backward.
    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Vec<Saved>)> {
        let mut saved = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, s) = layer.forward(x, mode, rng.as_deref_mut())?;
            saved.push(s);
            x = y;
        }
        Ok((x, saved))
    }

    /// Inference-only forward; no activations are kept.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, _) = layer.forward(x, Mode::Inference, None)?;
            x = y;
        }
        Ok(x)
    }

    /// Walks the stack in reverse, accumulating parameter gradients into
    /// `sink` and returning the gradient with respect to the input.
    pub fn backward(&self, saved: &[Saved], grad_out: &Tensor, sink: &mut SubnetGrads) -> Result<Tensor> {
        assert_eq!(saved.len(), self.layers.len(), "saved stack mismatch");
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gin, pg) = layer.backward(&saved[i], g)?;
            if let Some(pg) = pg {
                sink.per_layer[i].add_assign(&pg);
            }
            g = gin;
        }
        Ok(g)
    }

    /// Parameter tensors in layer order, weight before bias.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv3x3(c) => {
                    out.push(&c.weight);
                    out.push(&c.bias);
                }
                Layer::FullyConnected(f) => {
                    out.push(&f.weight);
                    out.push(&f.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv3x3(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                Layer::FullyConnected(f) => {
                    out.push(&mut f.weight);
                    out.push(&mut f.bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Copies accumulated gradients into the parameter tensors' grad buffers.
    pub fn store_grads(&mut self, grads: &SubnetGrads) {
        for (layer, lg) in self.layers.iter_mut().zip(&grads.per_layer) {
            match layer {
                Layer::Conv3x3(c) => {
                    c.weight.ensure_grad();
                    c.weight.grad_mut().unwrap().copy_from_slice(&lg.weight);
                    c.bias.ensure_grad();
                    c.bias.grad_mut().unwrap().copy_from_slice(&lg.bias);
                }
                Layer::FullyConnected(f) => {
                    f.weight.ensure_grad();
                    f.weight.grad_mut().unwrap().copy_from_slice(&lg.weight);
                    f.bias.ensure_grad();
                    f.bias.grad_mut().unwrap().copy_from_slice(&lg.bias);
                }
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Conv3x3;
    use rand::SeedableRng;

    #[test]
    fn param_count_sums_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Subnet::new(vec![
            Layer::Conv3x3(Conv3x3::new(3, 8, 1, 1, &mut rng)),
            Layer::LRelu { slope: 0.01 },
            Layer::Conv3x3(Conv3x3::new(8, 3, 1, 1, &mut rng)),
            Layer::Tanh,
        ]);
        assert_eq!(net.param_count(), (8 * 3 * 9 + 8) + (3 * 8 * 9 + 3));
        assert_eq!(net.params().len(), 4);
    }

    #[test]
    fn forward_backward_shapes_line_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Subnet::new(vec![
            Layer::Conv3x3(Conv3x3::new(2, 4, 1, 1, &mut rng)),
            Layer::LRelu { slope: 0.01 },
            Layer::MaxPool2,
        ]);
        let x = Tensor::scalar_filled(vec![2, 6, 6], 0.25);
        let (y, saved) = net.forward(&x, Mode::Inference, None).unwrap();
        assert_eq!(y.dims(), &[4, 3, 3]);
        let mut sink = SubnetGrads::zeros_like(&net);
        let gin = net.backward(&saved, &Tensor::scalar_filled(vec![4, 3, 3], 1.0), &mut sink).unwrap();
        assert_eq!(gin.dims(), x.dims());
        assert!(sink.per_layer[0].weight.iter().any(|&v| v != 0.0));
    }
}
