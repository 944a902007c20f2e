//! End-to-end training of the cycle model.
//!
//! Each step samples one augmented patch per pair in the mini-batch, runs
//! the inverse pipeline on the sRGB patch, feeds the reconstructed XYZ to
//! the forward pipeline (gradients flow through both), and takes one Adam
//! step on the combined MAE loss. Batch items run in parallel; their
//! gradients are reduced in slot order, so a run is bit-identical for a
//! given seed regardless of thread scheduling.

use rayon::prelude::*;

pub use crate::data::ImagePair;
use crate::data::{sample_patch, stream_rng};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Mode, SubnetGrads, Tensor};

use super::{
    add_tensors, apply_poly_chw, apply_poly_chw_backward, clamp_floor_tensor, mae,
    matrix_from_features, scale_tensor, sub_tensors, tensor_from_image, CycleNet,
};

/// Hyperparameters for one training run.
#[derive(Debug, Clone)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch: usize,
    /// Square patch side in pixels.
    pub patch: usize,
    pub lr: f64,
    /// Multiplicative learning-rate drop factor, in (0, 1).
    pub lr_drop: f64,
    /// Epochs between learning-rate drops.
    pub lr_drop_every: usize,
    /// Weight of the XYZ branch in the loss.
    pub lambda: f64,
    /// L2 regularization weight, applied as optimizer weight decay.
    pub lambda_reg: f64,
    pub seed: u64,
    /// Random reflections and pre-crop rescaling in [0.75, 1.25].
    pub augment: bool,
    /// Feed the forward pipeline ground-truth XYZ instead of the
    /// reconstruction (ablation only).
    pub teacher_force: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch: 4,
            patch: 256,
            lr: 1e-4,
            lr_drop: 0.5,
            lr_drop_every: 75,
            lambda: 1.5,
            lambda_reg: 1e-3,
            seed: 0,
            augment: true,
            teacher_force: false,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.patch == 0 || self.lr_drop_every == 0 {
            return Err(Error::Config("epochs, batch, patch and lr_drop_every must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lr_drop > 0.0 && self.lr_drop < 1.0) {
            return Err(Error::Config(format!("lr_drop must lie in (0, 1), got {}", self.lr_drop)));
        }
        if self.lambda < 0.0 || self.lambda_reg < 0.0 {
            return Err(Error::Config("lambda and lambda_reg must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// lambda * loss_xyz + loss_srgb.
    pub loss_total: f64,
    /// Mean absolute error of the XYZ branch (unweighted).
    pub loss_xyz: f64,
    /// Mean absolute error of the sRGB branch.
    pub loss_srgb: f64,
}

struct CycleGrads {
    g_loc: SubnetGrads,
    g_glob: SubnetGrads,
    f_glob: SubnetGrads,
    f_loc: SubnetGrads,
}

impl CycleGrads {
    fn zeros_like(net: &CycleNet) -> Self {
        Self {
            g_loc: SubnetGrads::zeros_like(&net.g_loc),
            g_glob: SubnetGrads::zeros_like(&net.g_glob),
            f_glob: SubnetGrads::zeros_like(&net.f_glob),
            f_loc: SubnetGrads::zeros_like(&net.f_loc),
        }
    }

    fn add_assign(&mut self, other: &CycleGrads) {
        self.g_loc.add_assign(&other.g_loc);
        self.g_glob.add_assign(&other.g_glob);
        self.f_glob.add_assign(&other.f_glob);
        self.f_loc.add_assign(&other.f_loc);
    }

    fn scale(&mut self, s: f64) {
        self.g_loc.scale(s);
        self.g_glob.scale(s);
        self.f_glob.scale(s);
        self.f_loc.scale(s);
    }
}

struct ItemOutcome {
    grads: CycleGrads,
    mae_xyz: f64,
    mae_srgb: f64,
}

/// d/dx of the elementwise absolute error mean: sign(x - target) / n.
fn mae_grad(pred: &Tensor, target: &Tensor) -> Tensor {
    let n = pred.len() as f64;
    let mut g = Tensor::zeros(pred.dims().to_vec());
    for ((out, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        *out = (p - t).signum() / n;
        if p == t {
            *out = 0.0;
        }
    }
    g
}

/// One batch item: full cycle forward, losses, and reverse-mode gradients.
fn train_item_inner(
    net: &CycleNet,
    patch: &ImagePair,
    lambda: f64,
    teacher_force: bool,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<ItemOutcome> {
    let x_srgb = tensor_from_image(&patch.srgb);
    let x_xyz_gt = tensor_from_image(&patch.xyz);

    // Inverse pipeline.
    let (res_t, sv_gloc) = net.g_loc.forward(&x_srgb, Mode::Training, Some(rng))?;
    let res = scale_tensor(&res_t, net.residual_scale);
    let glob_i = sub_tensors(&x_srgb, &res);
    let (feat_i, sv_gglob) = net.g_glob.forward(&glob_i, Mode::Training, Some(rng))?;
    let m_inv = matrix_from_features(&feat_i)?;
    let xyz_pre = apply_poly_chw(&m_inv, &glob_i);
    let xyz_rec = clamp_floor_tensor(&xyz_pre, 0.0);

    // Forward pipeline consumes the reconstruction (or ground truth when
    // teacher forcing).
    let f_in = if teacher_force { &x_xyz_gt } else { &xyz_rec };
    let (feat_f, sv_fglob) = net.f_glob.forward(f_in, Mode::Training, Some(rng))?;
    let m_fwd = matrix_from_features(&feat_f)?;
    let glob_f = apply_poly_chw(&m_fwd, f_in);
    let (resf_t, sv_floc) = net.f_loc.forward(&glob_f, Mode::Training, Some(rng))?;
    let res_f = scale_tensor(&resf_t, net.residual_scale);
    let srgb_pre = add_tensors(&glob_f, &res_f);

    // Losses on pre-clamp values so gradients stay alive at saturation.
    let mae_xyz = mae(xyz_pre.data(), x_xyz_gt.data());
    let mae_srgb = mae(srgb_pre.data(), x_srgb.data());

    let mut grads = CycleGrads::zeros_like(net);

    // sRGB branch.
    let d_srgb_pre = mae_grad(&srgb_pre, &x_srgb);
    let d_resf_t = scale_tensor(&d_srgb_pre, net.residual_scale);
    let d_glob_f_from_loc = net.f_loc.backward(&sv_floc, &d_resf_t, &mut grads.f_loc)?;
    let d_glob_f = add_tensors(&d_srgb_pre, &d_glob_f_from_loc);

    let (d_mfwd, d_fin_poly) = apply_poly_chw_backward(&m_fwd, f_in, &d_glob_f);
    let d_feat_f = Tensor::new(vec![18], d_mfwd.to_vec())?;
    let d_fin_net = net.f_glob.backward(&sv_fglob, &d_feat_f, &mut grads.f_glob)?;
    let d_fin = add_tensors(&d_fin_poly, &d_fin_net);

    // XYZ branch plus the cycle coupling through the clamp.
    let mut d_xyz_pre = mae_grad(&xyz_pre, &x_xyz_gt);
    d_xyz_pre.data_mut().iter_mut().for_each(|v| *v *= lambda);
    if !teacher_force {
        for ((g, &pre), &up) in
            d_xyz_pre.data_mut().iter_mut().zip(xyz_pre.data()).zip(d_fin.data())
        {
            if pre > 0.0 {
                *g += up;
            }
        }
    }

    let (d_minv, d_glob_i_poly) = apply_poly_chw_backward(&m_inv, &glob_i, &d_xyz_pre);
    let d_feat_i = Tensor::new(vec![18], d_minv.to_vec())?;
    let d_glob_i_net = net.g_glob.backward(&sv_gglob, &d_feat_i, &mut grads.g_glob)?;
    let d_glob_i = add_tensors(&d_glob_i_poly, &d_glob_i_net);

    // glob = srgb - res, so the residual sees the negated gradient.
    let d_res_t = scale_tensor(&d_glob_i, -net.residual_scale);
    net.g_loc.backward(&sv_gloc, &d_res_t, &mut grads.g_loc)?;

    Ok(ItemOutcome { grads, mae_xyz, mae_srgb })
}

/// Trains in place; returns per-epoch loss history. Deterministic for a
/// given schedule seed.
pub fn train(net: &mut CycleNet, pairs: &[ImagePair], sched: &TrainSchedule) -> Result<Vec<EpochStats>> {
    train_with_progress(net, pairs, sched, |_| {})
}

/// [`train`] with a per-epoch callback (progress lines, checkpointing).
pub fn train_with_progress(
    net: &mut CycleNet,
    pairs: &[ImagePair],
    sched: &TrainSchedule,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    sched.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("training needs at least one pair".into()));
    }
    for (i, p) in pairs.iter().enumerate() {
        if p.srgb.height() < sched.patch || p.srgb.width() < sched.patch {
            return Err(Error::Config(format!(
                "patch size {} exceeds training image {} ({})",
                sched.patch,
                i,
                p.srgb.shape_string()
            )));
        }
    }

    let mut adam = {
        let params: Vec<&Tensor> = net
            .subnets()
            .iter()
            .flat_map(|(_, s)| s.params())
            .collect();
        AdamState::for_params(&params)
    };

    let mut history = Vec::with_capacity(sched.epochs);
    for epoch in 0..sched.epochs {
        let lr = sched.lr * sched.lr_drop.powi((epoch / sched.lr_drop_every) as i32);

        let mut order: Vec<usize> = (0..pairs.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream_rng(&[sched.seed, epoch as u64, 0xE60C]));

        let mut sum_xyz = 0.0;
        let mut sum_srgb = 0.0;
        let mut items = 0usize;

        for (step, chunk) in order.chunks(sched.batch).enumerate() {
            let outcomes: Vec<ItemOutcome> = chunk
                .par_iter()
                .enumerate()
                .map(|(slot, &idx)| {
                    let mut patch_rng =
                        stream_rng(&[sched.seed, epoch as u64, idx as u64, 0x9A7C4]);
                    let patch = sample_patch(&pairs[idx], sched.patch, &mut patch_rng, sched.augment)?;
                    let mut drop_rng = stream_rng(&[
                        sched.seed,
                        epoch as u64,
                        step as u64,
                        slot as u64,
                        0xD209,
                    ]);
                    train_item_inner(net, &patch, sched.lambda, sched.teacher_force, &mut drop_rng)
                })
                .collect::<Result<Vec<_>>>()?;

            let mut grads = CycleGrads::zeros_like(net);
            for o in &outcomes {
                grads.add_assign(&o.grads);
                sum_xyz += o.mae_xyz;
                sum_srgb += o.mae_srgb;
                items += 1;
            }
            grads.scale(1.0 / outcomes.len() as f64);

            net.g_loc.store_grads(&grads.g_loc);
            net.g_glob.store_grads(&grads.g_glob);
            net.f_glob.store_grads(&grads.f_glob);
            net.f_loc.store_grads(&grads.f_loc);

            let mut params: Vec<&mut Tensor> = Vec::new();
            params.extend(net.g_loc.params_mut());
            params.extend(net.g_glob.params_mut());
            params.extend(net.f_glob.params_mut());
            params.extend(net.f_loc.params_mut());
            adam_step(&mut params, &mut adam, lr, sched.lambda_reg)?;
        }

        let loss_xyz = sum_xyz / items as f64;
        let loss_srgb = sum_srgb / items as f64;
        let stats = EpochStats {
            epoch,
            lr,
            loss_total: sched.lambda * loss_xyz + loss_srgb,
            loss_xyz,
            loss_srgb,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_pair, IspParams};

    fn tiny_dataset(n: usize, size: usize) -> Vec<ImagePair> {
        let isp = IspParams::synthetic(0);
        (0..n).map(|i| synth_pair(i, 0, size, size, &isp).unwrap()).collect()
    }

    fn quick_schedule() -> TrainSchedule {
        TrainSchedule {
            epochs: 2,
            batch: 4,
            patch: 24,
            lr: 1e-3,
            lr_drop: 0.5,
            lr_drop_every: 75,
            lambda: 1.5,
            lambda_reg: 1e-3,
            seed: 11,
            augment: true,
            teacher_force: false,
        }
    }

    #[test]
    fn loss_history_is_bit_identical_across_runs() {
        let pairs = tiny_dataset(2, 32);
        let sched = quick_schedule();
        let mut net_a = CycleNet::new(1);
        let hist_a = train(&mut net_a, &pairs, &sched).unwrap();
        let mut net_b = CycleNet::new(1);
        let hist_b = train(&mut net_b, &pairs, &sched).unwrap();
        assert_eq!(hist_a.len(), 2);
        for (a, b) in hist_a.iter().zip(&hist_b) {
            assert_eq!(a.loss_total.to_bits(), b.loss_total.to_bits());
            assert_eq!(a.loss_xyz.to_bits(), b.loss_xyz.to_bits());
            assert_eq!(a.loss_srgb.to_bits(), b.loss_srgb.to_bits());
        }
        // The trained parameters agree bitwise as well.
        for (pa, pb) in net_a.g_loc.params().iter().zip(net_b.g_loc.params()) {
            for (x, y) in pa.data().iter().zip(pb.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn oversized_patch_is_a_config_error() {
        let pairs = tiny_dataset(1, 16);
        let mut sched = quick_schedule();
        sched.patch = 64;
        let mut net = CycleNet::new(0);
        assert!(matches!(train(&mut net, &pairs, &sched), Err(Error::Config(_))));
    }

    #[test]
    fn lr_drops_on_schedule() {
        let pairs = tiny_dataset(1, 32);
        let mut sched = quick_schedule();
        sched.epochs = 4;
        sched.lr_drop_every = 2;
        let mut net = CycleNet::new(2);
        let hist = train(&mut net, &pairs, &sched).unwrap();
        assert!((hist[0].lr - 1e-3).abs() < 1e-15);
        assert!((hist[1].lr - 1e-3).abs() < 1e-15);
        assert!((hist[2].lr - 5e-4).abs() < 1e-15);
        assert!((hist[3].lr - 5e-4).abs() < 1e-15);
    }

    /// Finite-difference check of the full cycle gradients on a miniature
    /// model: perturb parameters, compare the loss delta to the analytic
    /// gradient assembled by train_item.
    #[test]
    fn cycle_gradients_match_finite_differences() {
        use crate::nn::{Conv3x3, FullyConnected, Layer, Subnet};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);

        let mini_local = |rng: &mut rand_chacha::ChaCha8Rng| {
            Subnet::new(vec![
                Layer::Conv3x3(Conv3x3::new(3, 4, 1, 1, rng)),
                Layer::LRelu { slope: 0.01 },
                Layer::Conv3x3(Conv3x3::new(4, 3, 1, 1, rng)),
                Layer::Tanh,
            ])
        };
        let mini_global = |rng: &mut rand_chacha::ChaCha8Rng| {
            Subnet::new(vec![
                Layer::UniformSubsample { target_h: 4, target_w: 4 },
                Layer::Conv3x3(Conv3x3::new(3, 4, 1, 1, rng)),
                Layer::LRelu { slope: 0.01 },
                Layer::MaxPool2,
                Layer::FullyConnected(FullyConnected::new(4 * 2 * 2, 18, rng)),
            ])
        };
        let mut net = CycleNet {
            g_loc: mini_local(&mut rng),
            g_glob: mini_global(&mut rng),
            f_glob: mini_global(&mut rng),
            f_loc: mini_local(&mut rng),
            residual_scale: 0.25,
        };
        // A gentle global head keeps the poly outputs in a smooth regime.
        for subnet in [&mut net.g_glob, &mut net.f_glob] {
            if let Some(Layer::FullyConnected(fc)) = subnet.layers.last_mut() {
                fc.weight.data_mut().iter_mut().for_each(|v| *v *= 0.05);
            }
        }

        let pairs = tiny_dataset(1, 8);
        let patch = &pairs[0];
        let lambda = 1.5;

        let mut rng0 = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let base = train_item_inner(&net, patch, lambda, false, &mut rng0).unwrap();

        let loss_of = |net: &CycleNet| {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let o = train_item_inner(net, patch, lambda, false, &mut r).unwrap();
            lambda * o.mae_xyz + o.mae_srgb
        };

        let eps = 1e-6;
        // Probe a few parameters in every subnet (weight entry 0 and a bias).
        let subnet_grads = [
            (&base.grads.g_loc, 0usize),
            (&base.grads.g_glob, 1),
            (&base.grads.f_glob, 2),
            (&base.grads.f_loc, 3),
        ];
        for (grads, which) in subnet_grads {
            let layer_idx = grads
                .per_layer
                .iter()
                .position(|g| !g.weight.is_empty())
                .expect("subnet has parameters");
            for widx in [0usize, grads.per_layer[layer_idx].weight.len() / 2] {
                let analytic = grads.per_layer[layer_idx].weight[widx];
                let mut probe = net.clone();
                {
                    let subnet = match which {
                        0 => &mut probe.g_loc,
                        1 => &mut probe.g_glob,
                        2 => &mut probe.f_glob,
                        _ => &mut probe.f_loc,
                    };
                    if let Layer::Conv3x3(c) = &mut subnet.layers[layer_idx] {
                        c.weight.data_mut()[widx] += eps;
                    } else if let Layer::FullyConnected(f) = &mut subnet.layers[layer_idx] {
                        f.weight.data_mut()[widx] += eps;
                    }
                }
                let up = loss_of(&probe);
                {
                    let subnet = match which {
                        0 => &mut probe.g_loc,
                        1 => &mut probe.g_glob,
                        2 => &mut probe.f_glob,
                        _ => &mut probe.f_loc,
                    };
                    if let Layer::Conv3x3(c) = &mut subnet.layers[layer_idx] {
                        c.weight.data_mut()[widx] -= 2.0 * eps;
                    } else if let Layer::FullyConnected(f) = &mut subnet.layers[layer_idx] {
                        f.weight.data_mut()[widx] -= 2.0 * eps;
                    }
                }
                let down = loss_of(&probe);
                let fd = (up - down) / (2.0 * eps);
                let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-4);
                assert!(err < 2e-3, "subnet {which} w[{widx}]: analytic {analytic:.3e} vs fd {fd:.3e}");
            }
        }
    }
}
