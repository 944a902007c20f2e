//! The cycle model: four sub-networks mapping sRGB to CIE XYZ and back.
//!
//! Inverse direction (unprocess): a fully convolutional local sub-network
//! predicts the residual photo-finishing layer, the residual is subtracted
//! to expose the globally processed layer, and a global sub-network predicts
//! the 3x6 transform that carries the global layer into XYZ. The forward
//! direction (render) mirrors this: predict the global transform from XYZ,
//! apply it, then add a predicted residual and clamp for display.

mod train;

pub use train::{train, train_with_progress, EpochStats, ImagePair, TrainSchedule};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{
    read_weight_records, write_weight_records, Conv3x3, FullyConnected, Layer, Subnet, Tensor,
    WeightRecord,
};
use crate::polymap::{PolyMatrix, PHI_TERMS};
use crate::raster::PlanarImage;

/// Scale applied to the tanh output of both local sub-networks; keeps the
/// residual layer small relative to the global layer.
pub const RESIDUAL_SCALE: f64 = 0.25;

/// Learnable parameters in a freshly built model.
pub const PARAM_TOTAL: usize = 2_697_578;

/// Side length of the global sub-networks' input grid.
pub const GLOBAL_INPUT_SIZE: usize = 128;

const LRELU_SLOPE: f64 = 0.01;

/// Output of one pipeline direction.
///
/// For the inverse direction `glob` is defined as `srgb - res`, so the
/// reconstruction identity holds in exactly that evaluation order; for the
/// forward direction the pre-clamp output is defined as `glob + res`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Reconstructed XYZ (inverse; clamped at 0) or the XYZ input (forward).
    pub xyz: PlanarImage,
    /// Globally processed layer.
    pub glob: PlanarImage,
    /// Residual local layer; bounded by [`RESIDUAL_SCALE`] elementwise.
    pub res: PlanarImage,
    /// The predicted 3x6 transform for this direction.
    pub matrix: PolyMatrix,
}

impl Decomposition {
    /// Forward-direction reconstruction before the display clamp.
    pub fn srgb_pre_clamp(&self) -> PlanarImage {
        self.glob.add(&self.res).expect("decomposition layers share a shape")
    }

    /// Display-ready sRGB: clamp(glob + res, 0, 1).
    pub fn srgb(&self) -> PlanarImage {
        self.srgb_pre_clamp().clamped(0.0, 1.0)
    }
}

/// The four sub-networks plus the residual scaling factor.
#[derive(Debug, Clone)]
pub struct CycleNet {
    /// Inverse local sub-network (predicts the residual from sRGB).
    pub g_loc: Subnet,
    /// Inverse global sub-network (predicts the sRGB->XYZ transform).
    pub g_glob: Subnet,
    /// Forward global sub-network (predicts the XYZ->sRGB transform).
    pub f_glob: Subnet,
    /// Forward local sub-network (predicts the residual from the global layer).
    pub f_loc: Subnet,
    pub residual_scale: f64,
}

/// 15 conv-LReLU blocks at 32 channels plus a 3-channel conv head and tanh.
///
/// The head conv starts at zero so a fresh model predicts a zero residual;
/// the head still receives gradient immediately and grows during training.
fn local_subnet(rng: &mut ChaCha8Rng) -> Subnet {
    let mut layers = Vec::with_capacity(32);
    layers.push(Layer::Conv3x3(Conv3x3::new(3, 32, 1, 1, rng)));
    layers.push(Layer::LRelu { slope: LRELU_SLOPE });
    for _ in 0..14 {
        layers.push(Layer::Conv3x3(Conv3x3::new(32, 32, 1, 1, rng)));
        layers.push(Layer::LRelu { slope: LRELU_SLOPE });
    }
    let mut head = Conv3x3::new(32, 3, 1, 1, rng);
    head.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
    layers.push(Layer::Conv3x3(head));
    layers.push(Layer::Tanh);
    Subnet::new(layers)
}

/// Differentiable 128x128 subsampler, five conv-LReLU-pool blocks at 64
/// channels, then FC 1024 -> dropout 0.5 -> FC 18.
///
/// The head starts at zero weights with the flattened identity transform as
/// bias, so a fresh model's global stage is exactly the identity and early
/// training steps stay in a sane regime.
fn global_subnet(rng: &mut ChaCha8Rng) -> Subnet {
    let mut layers = Vec::with_capacity(20);
    layers.push(Layer::UniformSubsample { target_h: GLOBAL_INPUT_SIZE, target_w: GLOBAL_INPUT_SIZE });
    layers.push(Layer::Conv3x3(Conv3x3::new(3, 64, 1, 1, rng)));
    layers.push(Layer::LRelu { slope: LRELU_SLOPE });
    layers.push(Layer::MaxPool2);
    for _ in 0..4 {
        layers.push(Layer::Conv3x3(Conv3x3::new(64, 64, 1, 1, rng)));
        layers.push(Layer::LRelu { slope: LRELU_SLOPE });
        layers.push(Layer::MaxPool2);
    }
    layers.push(Layer::FullyConnected(FullyConnected::new(4 * 4 * 64, 1024, rng)));
    layers.push(Layer::Dropout { rate: 0.5 });
    let mut head = FullyConnected::new(1024, 18, rng);
    head.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
    write_identity_bias(&mut head);
    layers.push(Layer::FullyConnected(head));
    Subnet::new(layers)
}

fn write_identity_bias(head: &mut FullyConnected) {
    let b = head.bias.data_mut();
    b.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..3 {
        b[c * PHI_TERMS + c] = 1.0;
    }
}

impl CycleNet {
    /// Freshly initialized model; deterministic for a given seed.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Self {
            g_loc: local_subnet(&mut rng),
            g_glob: global_subnet(&mut rng),
            f_glob: global_subnet(&mut rng),
            f_loc: local_subnet(&mut rng),
            residual_scale: RESIDUAL_SCALE,
        };
        debug_assert_eq!(net.param_count(), PARAM_TOTAL);
        net
    }

    /// Fully random He initialization, including the head layers that
    /// [`CycleNet::new`] pins to zero/identity. Property tests use this to
    /// exercise arbitrary-weight behavior.
    pub fn random_init(seed: u64) -> Self {
        let mut net = Self::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        for subnet in [&mut net.g_loc, &mut net.g_glob, &mut net.f_glob, &mut net.f_loc] {
            if let Some(layer) = subnet.layers.iter_mut().rev().find(|l| l.has_params()) {
                match layer {
                    Layer::Conv3x3(c) => {
                        let fresh = Conv3x3::new(c.in_ch, c.out_ch, c.stride, c.pad, &mut rng);
                        c.weight = fresh.weight;
                    }
                    Layer::FullyConnected(f) => {
                        let fresh = FullyConnected::new(f.in_dim, f.out_dim, &mut rng);
                        f.weight = fresh.weight;
                        f.bias = Tensor::zeros(vec![f.out_dim]);
                    }
                    _ => {}
                }
            }
        }
        net
    }

    /// Zeroes every parameter and pins the global heads to the identity
    /// transform: residuals vanish and both directions become (clamped)
    /// identities. Used by tests and as a reference configuration.
    pub fn force_identity(&mut self) {
        for subnet in [&mut self.g_loc, &mut self.g_glob, &mut self.f_glob, &mut self.f_loc] {
            for p in subnet.params_mut() {
                p.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for subnet in [&mut self.g_glob, &mut self.f_glob] {
            if let Some(Layer::FullyConnected(head)) = subnet.layers.last_mut() {
                write_identity_bias(head);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.g_loc.param_count()
            + self.g_glob.param_count()
            + self.f_glob.param_count()
            + self.f_loc.param_count()
    }

    pub fn subnets(&self) -> [(&'static str, &Subnet); 4] {
        [
            ("g_loc", &self.g_loc),
            ("g_glob", &self.g_glob),
            ("f_glob", &self.f_glob),
            ("f_loc", &self.f_loc),
        ]
    }

    /// sRGB -> XYZ decomposition (inference).
    pub fn unprocess(&self, srgb: &PlanarImage) -> Result<Decomposition> {
        srgb.check_finite()?;
        let x = tensor_from_image(srgb);
        let res_t = self.g_loc.infer(&x)?;
        let res = scale_tensor(&res_t, self.residual_scale);
        let glob = sub_tensors(&x, &res);
        let feat = self.g_glob.infer(&glob)?;
        let matrix = matrix_from_features(&feat)?;
        let xyz_pre = apply_poly_chw(&matrix, &glob);
        let xyz = clamp_floor_tensor(&xyz_pre, 0.0);
        Ok(Decomposition {
            xyz: image_from_tensor(&xyz),
            glob: image_from_tensor(&glob),
            res: image_from_tensor(&res),
            matrix,
        })
    }

    /// XYZ -> sRGB decomposition (inference). The final display image is
    /// `Decomposition::srgb()`.
    pub fn render(&self, xyz: &PlanarImage) -> Result<Decomposition> {
        xyz.check_finite()?;
        let x = tensor_from_image(xyz);
        let feat = self.f_glob.infer(&x)?;
        let matrix = matrix_from_features(&feat)?;
        let glob = apply_poly_chw(&matrix, &x);
        let res_t = self.f_loc.infer(&glob)?;
        let res = scale_tensor(&res_t, self.residual_scale);
        Ok(Decomposition {
            xyz: xyz.clone(),
            glob: image_from_tensor(&glob),
            res: image_from_tensor(&res),
            matrix,
        })
    }

    /// Serializes all parameters to the binary weight-record format.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut records = Vec::new();
        for (prefix, subnet) in self.subnets() {
            for (li, layer) in subnet.layers.iter().enumerate() {
                let (w, b) = match layer {
                    Layer::Conv3x3(c) => (&c.weight, &c.bias),
                    Layer::FullyConnected(f) => (&f.weight, &f.bias),
                    _ => continue,
                };
                records.push(WeightRecord {
                    name: format!("{prefix}.{li}.weight"),
                    dims: w.dims().to_vec(),
                    values: w.data().iter().map(|&v| v as f32).collect(),
                });
                records.push(WeightRecord {
                    name: format!("{prefix}.{li}.bias"),
                    dims: b.dims().to_vec(),
                    values: b.data().iter().map(|&v| v as f32).collect(),
                });
            }
        }
        write_weight_records(path, &records)
    }

    /// Loads parameters saved by [`CycleNet::save`], validating names, dims,
    /// and the total parameter count.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let records = read_weight_records(path)?;
        let mut net = CycleNet::new(0);
        let mut loaded = 0usize;
        let mut index: std::collections::HashMap<String, WeightRecord> =
            records.into_iter().map(|r| (r.name.clone(), r)).collect();
        for (prefix, subnet) in [
            ("g_loc", &mut net.g_loc),
            ("g_glob", &mut net.g_glob),
            ("f_glob", &mut net.f_glob),
            ("f_loc", &mut net.f_loc),
        ] {
            for (li, layer) in subnet.layers.iter_mut().enumerate() {
                let (w, b) = match layer {
                    Layer::Conv3x3(c) => (&mut c.weight, &mut c.bias),
                    Layer::FullyConnected(f) => (&mut f.weight, &mut f.bias),
                    _ => continue,
                };
                for (suffix, tensor) in [("weight", w), ("bias", b)] {
                    let name = format!("{prefix}.{li}.{suffix}");
                    let rec = index.remove(&name).ok_or_else(|| {
                        Error::format(path, format!("missing tensor record {name:?}"))
                    })?;
                    if rec.dims != tensor.dims() {
                        return Err(Error::format(
                            path,
                            format!("tensor {name:?} has dims {:?}, expected {:?}", rec.dims, tensor.dims()),
                        ));
                    }
                    for (dst, src) in tensor.data_mut().iter_mut().zip(&rec.values) {
                        *dst = *src as f64;
                    }
                    loaded += rec.values.len();
                }
            }
        }
        if let Some(extra) = index.keys().next() {
            return Err(Error::format(path, format!("unknown tensor record {extra:?}")));
        }
        if loaded != PARAM_TOTAL {
            return Err(Error::format(
                path,
                format!("parameter count {loaded} does not match the expected {PARAM_TOTAL}"),
            ));
        }
        Ok(net)
    }
}

/// Eq.-style cycle loss: lambda * MAE(xyz) + MAE(srgb), means over all
/// samples. The L2 parameter penalty is the optimizer's weight decay, not
/// part of this value.
pub fn cycle_loss(
    pred_xyz: &PlanarImage,
    gt_xyz: &PlanarImage,
    pred_srgb: &PlanarImage,
    gt_srgb: &PlanarImage,
    lambda: f64,
) -> Result<f64> {
    pred_xyz.check_same_shape(gt_xyz)?;
    pred_srgb.check_same_shape(gt_srgb)?;
    Ok(lambda * mae(pred_xyz.data(), gt_xyz.data()) + mae(pred_srgb.data(), gt_srgb.data()))
}

pub(crate) fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

// ---- tensor <-> image glue and the poly kernel on [3, H, W] tensors ----

/// Interleaved image to a [3, H, W] tensor.
pub fn tensor_from_image(img: &PlanarImage) -> Tensor {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let mut data = vec![0.0; 3 * n];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        data[i] = px[0];
        data[n + i] = px[1];
        data[2 * n + i] = px[2];
    }
    Tensor::new(vec![3, h, w], data).expect("image buffer is consistent")
}

/// [3, H, W] tensor back to an interleaved image.
pub fn image_from_tensor(t: &Tensor) -> PlanarImage {
    let dims = t.dims();
    assert_eq!(dims.len(), 3);
    assert_eq!(dims[0], 3, "expected a 3-channel tensor");
    let (h, w) = (dims[1], dims[2]);
    let n = h * w;
    let src = t.data();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        data[3 * i] = src[i];
        data[3 * i + 1] = src[n + i];
        data[3 * i + 2] = src[2 * n + i];
    }
    PlanarImage::from_vec(h, w, data).expect("tensor dims are consistent")
}

/// Reshapes the 18 predicted features into the 3x6 transform, row-major.
pub(crate) fn matrix_from_features(feat: &Tensor) -> Result<PolyMatrix> {
    if feat.len() != 18 {
        return Err(Error::shape("18 features", format!("{}", feat.len())));
    }
    PolyMatrix::from_flat(feat.data())
}

pub(crate) fn scale_tensor(t: &Tensor, s: f64) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v *= s);
    out
}

pub(crate) fn sub_tensors(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.dims(), b.dims());
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x -= y;
    }
    out
}

pub(crate) fn add_tensors(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.dims(), b.dims());
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
    out
}

pub(crate) fn clamp_floor_tensor(t: &Tensor, floor: f64) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(floor));
    out
}

/// psi(M phi(x)) on a [3, H, W] tensor.
pub(crate) fn apply_poly_chw(m: &PolyMatrix, x: &Tensor) -> Tensor {
    let dims = x.dims();
    let n = dims[1] * dims[2];
    let src = x.data();
    let mut out = Tensor::zeros(dims.to_vec());
    let dst = out.data_mut();
    for i in 0..n {
        let (r, g, b) = (src[i], src[n + i], src[2 * n + i]);
        let phi = [r, g, b, r * r, g * g, b * b];
        for c in 0..3 {
            let row = m.row(c);
            let mut acc = 0.0;
            for k in 0..PHI_TERMS {
                acc += row[k] * phi[k];
            }
            dst[c * n + i] = acc;
        }
    }
    out
}

/// Reverse-mode step of [`apply_poly_chw`]: gradients for the 18 matrix
/// entries and for the input pixels.
pub(crate) fn apply_poly_chw_backward(
    m: &PolyMatrix,
    x: &Tensor,
    grad_out: &Tensor,
) -> ([f64; 18], Tensor) {
    let dims = x.dims();
    let n = dims[1] * dims[2];
    let src = x.data();
    let g = grad_out.data();
    let mut d_m = [0.0; 18];
    let mut grad_in = Tensor::zeros(dims.to_vec());
    let gi = grad_in.data_mut();
    for i in 0..n {
        let px = [src[i], src[n + i], src[2 * n + i]];
        let phi = [px[0], px[1], px[2], px[0] * px[0], px[1] * px[1], px[2] * px[2]];
        for c in 0..3 {
            let go = g[c * n + i];
            let row = m.row(c);
            for k in 0..PHI_TERMS {
                d_m[c * PHI_TERMS + k] += go * phi[k];
            }
            for j in 0..3 {
                gi[j * n + i] += go * (row[j] + 2.0 * row[j + 3] * px[j]);
            }
        }
    }
    (d_m, grad_in)
}
