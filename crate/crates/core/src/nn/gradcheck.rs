//! Central-difference verification of the analytic gradients.

use super::layers::subsample_indices;
use super::subnet::{Subnet, SubnetGrads};
use super::tensor::Tensor;
use super::Mode;
use crate::error::{Error, Result};

fn sum_loss(net: &Subnet, input: &Tensor) -> Result<f64> {
    Ok(net.infer(input)?.data().iter().sum())
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1.0)
}

/// Checked index set: all indices, or an inclusive uniform grid of at most
/// `limit` indices (always covering both ends) for large tensors.
fn checked_indices(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(l) if len > l => {
            let mut idx = subsample_indices(len, l);
            idx.dedup();
            idx
        }
        _ => (0..len).collect(),
    }
}

/// Compares the analytic gradient of the scalar sum-loss against central
/// finite differences over all parameters and all inputs; returns the
/// maximum relative error.
///
/// Stochastic layers make the loss surface non-reproducible between the two
/// probe evaluations, so a net containing dropout is rejected in training
/// mode.
pub fn grad_check(net: &Subnet, input: &Tensor, eps: f64, mode: Mode) -> Result<f64> {
    grad_check_sampled(net, input, eps, mode, None)
}

/// [`grad_check`] with at most `limit` probed entries per tensor (inclusive
/// uniform grid over the flattened tensor, so boundary entries are always
/// covered). `None` probes everything.
pub fn grad_check_sampled(
    net: &Subnet,
    input: &Tensor,
    eps: f64,
    mode: Mode,
    limit: Option<usize>,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if mode == Mode::Training && net.contains_stochastic() {
        return Err(Error::Determinism(
            "net contains a stochastic layer (dropout) in training mode".into(),
        ));
    }

    // Analytic pass: d(sum of outputs)/d(everything).
    let (out, saved) = net.forward(input, Mode::Inference, None)?;
    let ones = Tensor::scalar_filled(out.dims().to_vec(), 1.0);
    let mut sink = SubnetGrads::zeros_like(net);
    let input_grad = net.backward(&saved, &ones, &mut sink)?;

    let mut max_err: f64 = 0.0;
    let mut probe = net.clone();

    // Parameters, layer by layer.
    for (li, grads) in sink.per_layer.iter().enumerate() {
        for (is_weight, analytic) in [(true, &grads.weight), (false, &grads.bias)] {
            for j in checked_indices(analytic.len(), limit) {
                let orig = {
                    let t = param_tensor(&mut probe, li, is_weight);
                    let v = t.data()[j];
                    t.data_mut()[j] = v + eps;
                    v
                };
                let up = sum_loss(&probe, input)?;
                param_tensor(&mut probe, li, is_weight).data_mut()[j] = orig - eps;
                let down = sum_loss(&probe, input)?;
                param_tensor(&mut probe, li, is_weight).data_mut()[j] = orig;
                let fd = (up - down) / (2.0 * eps);
                max_err = max_err.max(rel_err(analytic[j], fd));
            }
        }
    }

    // Inputs.
    let mut x = input.clone();
    for j in checked_indices(x.len(), limit) {
        let orig = x.data()[j];
        x.data_mut()[j] = orig + eps;
        let up = sum_loss(net, &x)?;
        x.data_mut()[j] = orig - eps;
        let down = sum_loss(net, &x)?;
        x.data_mut()[j] = orig;
        let fd = (up - down) / (2.0 * eps);
        max_err = max_err.max(rel_err(input_grad.data()[j], fd));
    }

    Ok(max_err)
}

fn param_tensor<'a>(net: &'a mut Subnet, layer_idx: usize, weight: bool) -> &'a mut Tensor {
    use super::layers::Layer;
    match &mut net.layers[layer_idx] {
        Layer::Conv3x3(c) => {
            if weight {
                &mut c.weight
            } else {
                &mut c.bias
            }
        }
        Layer::FullyConnected(f) => {
            if weight {
                &mut f.weight
            } else {
                &mut f.bias
            }
        }
        _ => unreachable!("layer {layer_idx} has no parameters"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Conv3x3, FullyConnected, Layer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>) -> Tensor {
        let n: usize = dims.iter().product();
        Tensor::new(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn tanh_gradient_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Subnet::new(vec![Layer::Tanh]);
        let x = random_tensor(&mut rng, vec![2, 4, 4]);
        let err = grad_check(&net, &x, 1e-5, Mode::Inference).unwrap();
        assert!(err < 1e-7, "err = {err}");
    }

    #[test]
    fn conv_gradient_matches_finite_differences() {
        // Every parameter of a small conv on a 5x5 toy input, step 1e-3.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Subnet::new(vec![Layer::Conv3x3(Conv3x3::new(2, 3, 1, 1, &mut rng))]);
        let x = random_tensor(&mut rng, vec![2, 5, 5]);
        let err = grad_check(&net, &x, 1e-3, Mode::Inference).unwrap();
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn mixed_stack_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Subnet::new(vec![
            Layer::Conv3x3(Conv3x3::new(2, 4, 1, 1, &mut rng)),
            Layer::LRelu { slope: 0.01 },
            Layer::MaxPool2,
            Layer::UniformSubsample { target_h: 3, target_w: 3 },
            Layer::FullyConnected(FullyConnected::new(36, 5, &mut rng)),
            Layer::Tanh,
        ]);
        let x = random_tensor(&mut rng, vec![2, 6, 6]);
        let err = grad_check(&net, &x, 1e-5, Mode::Inference).unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn dropout_in_training_mode_is_rejected() {
        let net = Subnet::new(vec![Layer::Dropout { rate: 0.5 }]);
        let x = Tensor::zeros(vec![4]);
        let err = grad_check(&net, &x, 1e-5, Mode::Training);
        assert!(matches!(err, Err(Error::Determinism(_))));
        // Inference mode treats dropout as the identity and passes.
        let ok = grad_check(&net, &x, 1e-5, Mode::Inference).unwrap();
        assert!(ok < 1e-12);
    }

    #[test]
    fn sampled_check_covers_boundaries() {
        let idx = checked_indices(100, Some(5));
        assert_eq!(idx.first(), Some(&0));
        assert_eq!(idx.last(), Some(&99));
        assert_eq!(checked_indices(3, Some(5)), vec![0, 1, 2]);
    }
}
