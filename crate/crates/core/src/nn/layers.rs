//! Layer kinds, forward semantics, and hand-derived reverse-mode gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::gemm::{dgemm, dgemm_strided};
use super::tensor::Tensor;
use super::Mode;
use crate::error::{Error, Result};

/// Position-chunk width for im2col buffers; bounds transient memory on large
/// images without changing results.
const CONV_CHUNK_COLS: usize = 16384;

thread_local! {
    // Reused im2col scratch; convolution runs in hot loops and per-call
    // multi-megabyte allocations would dominate the GEMM.
    static COL_SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
    static DCOL_SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn with_scratch<T>(
    cell: &'static std::thread::LocalKey<std::cell::RefCell<Vec<f64>>>,
    len: usize,
    f: impl FnOnce(&mut [f64]) -> T,
) -> T {
    cell.with(|c| {
        let mut buf = c.borrow_mut();
        if buf.len() < len {
            buf.resize(len, 0.0);
        }
        f(&mut buf[..len])
    })
}

/// 3x3 convolution over [C, H, W] maps. Weight layout is
/// [out_ch, in_ch, 3, 3]; stride 1 / pad 1 preserves spatial dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv3x3 {
    /// He fan-in initialization for the weights, zero bias.
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(stride >= 1);
        let fan_in = (in_ch * 9) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
        let weight = Tensor::new(
            vec![out_ch, in_ch, 3, 3],
            (0..out_ch * in_ch * 9).map(|_| normal.sample(rng)).collect(),
        )
        .unwrap();
        let bias = Tensor::zeros(vec![out_ch]);
        Self { in_ch, out_ch, stride, pad, weight, bias }
    }

    fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span_h = h + 2 * self.pad;
        let span_w = w + 2 * self.pad;
        if span_h < 3 || span_w < 3 {
            return Err(Error::shape(
                "input spanning at least 3x3 after padding",
                format!("{h}x{w} with pad {}", self.pad),
            ));
        }
        Ok(((span_h - 3) / self.stride + 1, (span_w - 3) / self.stride + 1))
    }

    /// Writes the im2col block for output positions [pos0, pos1) into `col`
    /// (layout: [in_ch*9, pos1-pos0] row-major).
    ///
    /// The stride-1 path copies contiguous per-row runs; im2col is
    /// memory-bound and must not dominate the GEMM it feeds.
    fn fill_col(&self, x: &[f64], h: usize, w: usize, pos0: usize, pos1: usize, wo: usize, col: &mut [f64]) {
        let n = pos1 - pos0;
        let p = self.pad as isize;
        if self.stride != 1 {
            col.iter_mut().for_each(|v| *v = 0.0);
        }
        for c in 0..self.in_ch {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3usize {
                    let base = (c * 9 + ky * 3 + kx) * n;
                    let row_buf = &mut col[base..base + n];
                    if self.stride == 1 {
                        // Every element is written exactly once: padding gaps
                        // are zeroed inline instead of memsetting the buffer.
                        let mut pos = pos0;
                        while pos < pos1 {
                            let oy = pos / wo;
                            let ox_start = pos - oy * wo;
                            let row_end = ((oy + 1) * wo).min(pos1);
                            let count = row_end - pos;
                            let seg = pos - pos0;
                            let iy = oy as isize + ky as isize - p;
                            let mut zeroed_to = seg;
                            if iy >= 0 && (iy as usize) < h {
                                let lo = (ox_start as isize).max(p - kx as isize);
                                let hi =
                                    ((ox_start + count) as isize).min(w as isize + p - kx as isize);
                                if lo < hi {
                                    let len = (hi - lo) as usize;
                                    let src = iy as usize * w + (lo + kx as isize - p) as usize;
                                    let dst = seg + (lo as usize - ox_start);
                                    row_buf[zeroed_to..dst].iter_mut().for_each(|v| *v = 0.0);
                                    row_buf[dst..dst + len]
                                        .copy_from_slice(&plane[src..src + len]);
                                    zeroed_to = dst + len;
                                }
                            }
                            row_buf[zeroed_to..seg + count].iter_mut().for_each(|v| *v = 0.0);
                            pos = row_end;
                        }
                    } else {
                        for (j, pos) in (pos0..pos1).enumerate() {
                            let oy = pos / wo;
                            let ox = pos % wo;
                            let iy = (oy * self.stride + ky) as isize - p;
                            let ix = (ox * self.stride + kx) as isize - p;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                row_buf[j] = plane[iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, input: Tensor) -> Result<(Tensor, Saved)> {
        let dims = input.dims();
        if dims.len() != 3 || dims[0] != self.in_ch {
            return Err(Error::shape(
                format!("[{}, H, W]", self.in_ch),
                format!("{dims:?}"),
            ));
        }
        let (h, w) = (dims[1], dims[2]);
        let (ho, wo) = self.out_dims(h, w)?;
        let n_total = ho * wo;
        let k = self.in_ch * 9;
        let mut out = Tensor::zeros(vec![self.out_ch, ho, wo]);

        let chunk = CONV_CHUNK_COLS.min(n_total);
        with_scratch(&COL_SCRATCH, k * chunk, |col| {
            let mut pos0 = 0;
            while pos0 < n_total {
                let pos1 = (pos0 + chunk).min(n_total);
                let n = pos1 - pos0;
                self.fill_col(input.data(), h, w, pos0, pos1, wo, &mut col[..k * n]);
                // out[:, pos0..pos1] = W_mat (out_ch x k) * col (k x n)
                dgemm_strided(
                    self.out_ch,
                    k,
                    n,
                    1.0,
                    self.weight.data(),
                    k as isize,
                    1,
                    &col[..k * n],
                    n as isize,
                    1,
                    0.0,
                    &mut out.data_mut()[pos0..],
                    n_total as isize,
                    1,
                );
                pos0 = pos1;
            }
        });
        let bias = self.bias.data();
        for (o, b) in bias.iter().enumerate() {
            for v in &mut out.data_mut()[o * n_total..(o + 1) * n_total] {
                *v += b;
            }
        }
        Ok((out, Saved::Input(input)))
    }

    fn backward(&self, saved: &Saved, grad_out: &Tensor) -> Result<(Tensor, Option<LayerGrads>)> {
        let input = saved.input()?;
        let dims = input.dims();
        let (h, w) = (dims[1], dims[2]);
        let (ho, wo) = self.out_dims(h, w)?;
        grad_out.check_dims(&[self.out_ch, ho, wo])?;
        let n_total = ho * wo;
        let k = self.in_ch * 9;

        let mut d_weight = vec![0.0; self.out_ch * k];
        let mut d_bias = vec![0.0; self.out_ch];
        for o in 0..self.out_ch {
            d_bias[o] = grad_out.data()[o * n_total..(o + 1) * n_total].iter().sum();
        }

        let mut grad_in = Tensor::zeros(vec![self.in_ch, h, w]);
        let chunk = CONV_CHUNK_COLS.min(n_total);
        with_scratch(&COL_SCRATCH, k * chunk, |col| {
        with_scratch(&DCOL_SCRATCH, k * chunk, |dcol| {
        let mut pos0 = 0;
        while pos0 < n_total {
            let pos1 = (pos0 + chunk).min(n_total);
            let n = pos1 - pos0;
            self.fill_col(input.data(), h, w, pos0, pos1, wo, &mut col[..k * n]);
            // dW (out_ch x k) += dOut[:, chunk] (out_ch x n) * col^T (n x k)
            dgemm_strided(
                self.out_ch,
                n,
                k,
                1.0,
                &grad_out.data()[pos0..],
                n_total as isize,
                1,
                &col[..k * n],
                1,
                n as isize,
                1.0,
                &mut d_weight,
                k as isize,
                1,
            );
            // dcol (k x n) = W^T (k x out_ch) * dOut[:, chunk] (out_ch x n)
            dgemm_strided(
                k,
                self.out_ch,
                n,
                1.0,
                self.weight.data(),
                1,
                k as isize,
                &grad_out.data()[pos0..],
                n_total as isize,
                1,
                0.0,
                &mut dcol[..k * n],
                n as isize,
                1,
            );
            // col2im: scatter-add the column gradients back onto the input,
            // run by run on the stride-1 path.
            let gi = grad_in.data_mut();
            let p = self.pad as isize;
            for c in 0..self.in_ch {
                for ky in 0..3 {
                    for kx in 0..3usize {
                        let row = &dcol[(c * 9 + ky * 3 + kx) * n..(c * 9 + ky * 3 + kx) * n + n];
                        if self.stride == 1 {
                            let mut pos = pos0;
                            while pos < pos1 {
                                let oy = pos / wo;
                                let ox_start = pos - oy * wo;
                                let row_end = ((oy + 1) * wo).min(pos1);
                                let count = row_end - pos;
                                let iy = oy as isize + ky as isize - p;
                                if iy >= 0 && (iy as usize) < h {
                                    let lo = (ox_start as isize).max(p - kx as isize);
                                    let hi = ((ox_start + count) as isize)
                                        .min(w as isize + p - kx as isize);
                                    if lo < hi {
                                        let len = (hi - lo) as usize;
                                        let dst =
                                            c * h * w + iy as usize * w + (lo + kx as isize - p) as usize;
                                        let src = (pos - pos0) + (lo as usize - ox_start);
                                        for (g, d) in
                                            gi[dst..dst + len].iter_mut().zip(&row[src..src + len])
                                        {
                                            *g += d;
                                        }
                                    }
                                }
                                pos = row_end;
                            }
                        } else {
                            for (j, pos) in (pos0..pos1).enumerate() {
                                let oy = pos / wo;
                                let ox = pos % wo;
                                let iy = (oy * self.stride + ky) as isize - p;
                                let ix = (ox * self.stride + kx) as isize - p;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    gi[c * h * w + iy as usize * w + ix as usize] += row[j];
                                }
                            }
                        }
                    }
                }
            }
            pos0 = pos1;
        }
        });
        });
        Ok((grad_in, Some(LayerGrads { weight: d_weight, bias: d_bias })))
    }
}

/// Dense layer; accepts any input whose element count matches `in_dim`
/// (the flattening is row-major over the input dims).
#[derive(Debug, Clone, PartialEq)]
pub struct FullyConnected {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl FullyConnected {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / in_dim as f64).sqrt()).unwrap();
        let weight = Tensor::new(
            vec![out_dim, in_dim],
            (0..out_dim * in_dim).map(|_| normal.sample(rng)).collect(),
        )
        .unwrap();
        let bias = Tensor::zeros(vec![out_dim]);
        Self { in_dim, out_dim, weight, bias }
    }

    fn forward(&self, input: Tensor) -> Result<(Tensor, Saved)> {
        if input.len() != self.in_dim {
            return Err(Error::shape(
                format!("{} values", self.in_dim),
                format!("{:?} ({} values)", input.dims(), input.len()),
            ));
        }
        let mut out = Tensor::zeros(vec![self.out_dim]);
        dgemm(self.out_dim, self.in_dim, 1, 1.0, self.weight.data(), input.data(), 0.0, out.data_mut());
        for (v, b) in out.data_mut().iter_mut().zip(self.bias.data()) {
            *v += b;
        }
        Ok((out, Saved::Input(input)))
    }

    fn backward(&self, saved: &Saved, grad_out: &Tensor) -> Result<(Tensor, Option<LayerGrads>)> {
        let input = saved.input()?;
        grad_out.check_dims(&[self.out_dim])?;
        let mut d_weight = vec![0.0; self.out_dim * self.in_dim];
        // dW = dOut (out x 1) * x^T (1 x in)
        dgemm(self.out_dim, 1, self.in_dim, 1.0, grad_out.data(), input.data(), 0.0, &mut d_weight);
        let d_bias = grad_out.data().to_vec();
        let mut grad_in = Tensor::zeros(input.dims().to_vec());
        // dX = W^T (in x out) * dOut (out x 1)
        dgemm_strided(
            self.in_dim,
            self.out_dim,
            1,
            1.0,
            self.weight.data(),
            1,
            self.in_dim as isize,
            grad_out.data(),
            1,
            1,
            0.0,
            grad_in.data_mut(),
            1,
            1,
        );
        Ok((grad_in, Some(LayerGrads { weight: d_weight, bias: d_bias })))
    }
}

/// Activation state captured by a forward pass for the matching backward.
#[derive(Debug, Clone)]
pub enum Saved {
    /// The layer input (convolutions, dense, pooling, leaky ReLU).
    Input(Tensor),
    /// The layer output (tanh: derivative is 1 - y^2).
    Output(Tensor),
    /// Inverted-dropout multipliers; `None` marks an inference pass.
    DropoutMask { dims: Vec<usize>, mask: Option<Vec<f64>> },
    /// Input dims only (uniform subsample re-derives its index map).
    InputDims(Vec<usize>),
}

impl Saved {
    fn input(&self) -> Result<&Tensor> {
        match self {
            Saved::Input(t) => Ok(t),
            _ => Err(Error::State("missing saved input activation".into())),
        }
    }

    fn output(&self) -> Result<&Tensor> {
        match self {
            Saved::Output(t) => Ok(t),
            _ => Err(Error::State("missing saved output activation".into())),
        }
    }
}

/// Per-layer parameter gradients (empty for parameterless layers).
#[derive(Debug, Clone, Default)]
pub struct LayerGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    pub fn add_assign(&mut self, other: &LayerGrads) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weight.iter_mut().for_each(|v| *v *= s);
        self.bias.iter_mut().for_each(|v| *v *= s);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv3x3(Conv3x3),
    LRelu { slope: f64 },
    Tanh,
    MaxPool2,
    FullyConnected(FullyConnected),
    Dropout { rate: f64 },
    UniformSubsample { target_h: usize, target_w: usize },
}

/// Nearest sample indices on the inclusive uniform grid mapping `target`
/// points onto `0..extent`.
pub(crate) fn subsample_indices(extent: usize, target: usize) -> Vec<usize> {
    if target == 1 {
        return vec![0];
    }
    (0..target)
        .map(|i| {
            let f = i as f64 * (extent - 1) as f64 / (target - 1) as f64;
            (f.round() as usize).min(extent - 1)
        })
        .collect()
}

impl Layer {
    /// Runs the layer. Dropout in training mode draws its mask from `rng`;
    /// inference never touches the generator.
    pub fn forward(
        &self,
        input: Tensor,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Saved)> {
        match self {
            Layer::Conv3x3(conv) => conv.forward(input),
            Layer::LRelu { slope } => {
                let mut out = Tensor::zeros(input.dims().to_vec());
                for (o, &v) in out.data_mut().iter_mut().zip(input.data()) {
                    *o = if v < 0.0 { v * slope } else { v };
                }
                Ok((out, Saved::Input(input)))
            }
            Layer::Tanh => {
                let mut out = input;
                for v in out.data_mut() {
                    *v = v.tanh();
                }
                let saved = Saved::Output(out.clone());
                Ok((out, saved))
            }
            Layer::MaxPool2 => {
                let dims = input.dims();
                if dims.len() != 3 || dims[1] < 2 || dims[2] < 2 {
                    return Err(Error::shape("[C, H>=2, W>=2]", format!("{dims:?}")));
                }
                let (c_n, h, w) = (dims[0], dims[1], dims[2]);
                let (ho, wo) = (h / 2, w / 2);
                let mut out = Tensor::zeros(vec![c_n, ho, wo]);
                for c in 0..c_n {
                    let plane = &input.data()[c * h * w..(c + 1) * h * w];
                    let out_plane = &mut out.data_mut()[c * ho * wo..(c + 1) * ho * wo];
                    for y in 0..ho {
                        for x in 0..wo {
                            let base = 2 * y * w + 2 * x;
                            let m = plane[base]
                                .max(plane[base + 1])
                                .max(plane[base + w])
                                .max(plane[base + w + 1]);
                            out_plane[y * wo + x] = m;
                        }
                    }
                }
                Ok((out, Saved::Input(input)))
            }
            Layer::FullyConnected(fc) => fc.forward(input),
            Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
                }
                match mode {
                    Mode::Inference => {
                        let dims = input.dims().to_vec();
                        Ok((input, Saved::DropoutMask { dims, mask: None }))
                    }
                    Mode::Training => {
                        let rng = rng.ok_or_else(|| {
                            Error::State("dropout in training mode requires an rng".into())
                        })?;
                        let keep = 1.0 - rate;
                        // Inverted dropout: scale kept units now so inference
                        // is exactly the identity.
                        let mask: Vec<f64> = (0..input.len())
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        let mut out = input;
                        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        let dims = out.dims().to_vec();
                        Ok((out, Saved::DropoutMask { dims, mask: Some(mask) }))
                    }
                }
            }
            Layer::UniformSubsample { target_h, target_w } => {
                let dims = input.dims();
                if dims.len() != 3 {
                    return Err(Error::shape("[C, H, W]", format!("{dims:?}")));
                }
                let (c_n, h, w) = (dims[0], dims[1], dims[2]);
                let ys = subsample_indices(h, *target_h);
                let xs = subsample_indices(w, *target_w);
                let mut out = Tensor::zeros(vec![c_n, *target_h, *target_w]);
                for c in 0..c_n {
                    let plane = &input.data()[c * h * w..(c + 1) * h * w];
                    let out_plane =
                        &mut out.data_mut()[c * target_h * target_w..(c + 1) * target_h * target_w];
                    for (i, &sy) in ys.iter().enumerate() {
                        for (j, &sx) in xs.iter().enumerate() {
                            out_plane[i * target_w + j] = plane[sy * w + sx];
                        }
                    }
                }
                Ok((out, Saved::InputDims(dims.to_vec())))
            }
        }
    }

    /// Reverse-mode step: returns the input gradient and, for parameterized
    /// layers, the parameter gradients.
    pub fn backward(&self, saved: &Saved, grad_out: Tensor) -> Result<(Tensor, Option<LayerGrads>)> {
        match self {
            Layer::Conv3x3(conv) => conv.backward(saved, &grad_out),
            Layer::LRelu { slope } => {
                let input = saved.input()?;
                grad_out.check_dims(input.dims())?;
                let mut grad_in = grad_out;
                for (g, x) in grad_in.data_mut().iter_mut().zip(input.data()) {
                    if *x < 0.0 {
                        *g *= slope;
                    }
                }
                Ok((grad_in, None))
            }
            Layer::Tanh => {
                let output = saved.output()?;
                grad_out.check_dims(output.dims())?;
                let mut grad_in = grad_out;
                for (g, y) in grad_in.data_mut().iter_mut().zip(output.data()) {
                    *g *= 1.0 - y * y;
                }
                Ok((grad_in, None))
            }
            Layer::MaxPool2 => {
                let input = saved.input()?;
                let dims = input.dims();
                let (c_n, h, w) = (dims[0], dims[1], dims[2]);
                let (ho, wo) = (h / 2, w / 2);
                grad_out.check_dims(&[c_n, ho, wo])?;
                let mut grad_in = Tensor::zeros(dims.to_vec());
                for c in 0..c_n {
                    let plane = &input.data()[c * h * w..(c + 1) * h * w];
                    let g_plane = &grad_out.data()[c * ho * wo..(c + 1) * ho * wo];
                    let gi = &mut grad_in.data_mut()[c * h * w..(c + 1) * h * w];
                    for y in 0..ho {
                        for x in 0..wo {
                            let base = 2 * y * w + 2 * x;
                            // First strict maximum wins on ties.
                            let cand = [base, base + 1, base + w, base + w + 1];
                            let mut best = cand[0];
                            for &i in &cand[1..] {
                                if plane[i] > plane[best] {
                                    best = i;
                                }
                            }
                            gi[best] += g_plane[y * wo + x];
                        }
                    }
                }
                Ok((grad_in, None))
            }
            Layer::FullyConnected(fc) => fc.backward(saved, &grad_out),
            Layer::Dropout { .. } => match saved {
                Saved::DropoutMask { dims, mask } => {
                    grad_out.check_dims(dims)?;
                    let mut grad_in = grad_out;
                    if let Some(mask) = mask {
                        for (g, m) in grad_in.data_mut().iter_mut().zip(mask) {
                            *g *= m;
                        }
                    }
                    Ok((grad_in, None))
                }
                _ => Err(Error::State("missing saved dropout mask".into())),
            },
            Layer::UniformSubsample { target_h, target_w } => {
                let dims = match saved {
                    Saved::InputDims(d) => d.clone(),
                    _ => return Err(Error::State("missing saved subsample dims".into())),
                };
                let (c_n, h, w) = (dims[0], dims[1], dims[2]);
                grad_out.check_dims(&[c_n, *target_h, *target_w])?;
                let ys = subsample_indices(h, *target_h);
                let xs = subsample_indices(w, *target_w);
                let mut grad_in = Tensor::zeros(dims);
                for c in 0..c_n {
                    let g_plane =
                        &grad_out.data()[c * target_h * target_w..(c + 1) * target_h * target_w];
                    let gi = &mut grad_in.data_mut()[c * h * w..(c + 1) * h * w];
                    for (i, &sy) in ys.iter().enumerate() {
                        for (j, &sx) in xs.iter().enumerate() {
                            gi[sy * w + sx] += g_plane[i * target_w + j];
                        }
                    }
                }
                Ok((grad_in, None))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv3x3(c) => c.weight.len() + c.bias.len(),
            Layer::FullyConnected(f) => f.weight.len() + f.bias.len(),
            _ => 0,
        }
    }

    pub fn has_params(&self) -> bool {
        self.param_count() > 0
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Layer::Dropout { .. })
    }

    /// Zeroed gradient holder matching this layer's parameters.
    pub fn empty_grads(&self) -> LayerGrads {
        match self {
            Layer::Conv3x3(c) => LayerGrads {
                weight: vec![0.0; c.weight.len()],
                bias: vec![0.0; c.bias.len()],
            },
            Layer::FullyConnected(f) => LayerGrads {
                weight: vec![0.0; f.weight.len()],
                bias: vec![0.0; f.bias.len()],
            },
            _ => LayerGrads::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn lrelu_values() {
        let layer = Layer::LRelu { slope: 0.01 };
        let t = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let (out, _) = layer.forward(t.clone(), Mode::Inference, None).unwrap();
        assert_eq!(out.data(), &[-0.01, 0.0, 2.0]);
    }

    #[test]
    fn maxpool_picks_max() {
        let layer = Layer::MaxPool2;
        let t = Tensor::new(vec![1, 2, 2], vec![1.0, 3.0, 2.0, 0.0]).unwrap();
        let (out, _) = layer.forward(t.clone(), Mode::Inference, None).unwrap();
        assert_eq!(out.data(), &[3.0]);
    }

    #[test]
    fn conv_constant_sum() {
        let mut c = Conv3x3::new(3, 1, 1, 1, &mut rng());
        c.weight.data_mut().iter_mut().for_each(|v| *v = 1.0);
        c.bias.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let layer = Layer::Conv3x3(c);
        let t = Tensor::scalar_filled(vec![3, 5, 5], 0.5);
        let (out, _) = layer.forward(t.clone(), Mode::Inference, None).unwrap();
        // Interior pixel sums 3 channels x 9 taps of 0.5.
        assert!((out.data()[2 * 5 + 2] - 13.5).abs() < 1e-12);
    }

    /// Six-nested-loop convolution oracle.
    fn conv_bruteforce(c: &Conv3x3, x: &Tensor) -> Tensor {
        let (ch, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let ho = (h + 2 * c.pad - 3) / c.stride + 1;
        let wo = (w + 2 * c.pad - 3) / c.stride + 1;
        let mut out = Tensor::zeros(vec![c.out_ch, ho, wo]);
        for o in 0..c.out_ch {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = c.bias.data()[o];
                    for i in 0..ch {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (y * c.stride + ky) as isize - c.pad as isize;
                                let ix = (xx * c.stride + kx) as isize - c.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += c.weight.data()[((o * ch + i) * 3 + ky) * 3 + kx]
                                        * x.data()[i * h * w + iy as usize * w + ix as usize];
                                }
                            }
                        }
                    }
                    out.data_mut()[o * ho * wo + y * wo + xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_bruteforce() {
        let mut r = rng();
        for (stride, pad) in [(1, 1), (1, 0), (2, 1)] {
            let c = Conv3x3::new(4, 3, stride, pad, &mut r);
            let x = Tensor::new(vec![4, 6, 6], (0..4 * 36).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
            let layer = Layer::Conv3x3(c.clone());
            let (fast, _) = layer.forward(x.clone(), Mode::Inference, None).unwrap();
            let slow = conv_bruteforce(&c, &x);
            assert_eq!(fast.dims(), slow.dims());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subsample_identity_at_target_size() {
        let layer = Layer::UniformSubsample { target_h: 4, target_w: 6 };
        let mut r = rng();
        let x = Tensor::new(vec![2, 4, 6], (0..48).map(|_| r.gen::<f64>()).collect()).unwrap();
        let (out, _) = layer.forward(x.clone(), Mode::Inference, None).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn subsample_upsamples_small_inputs() {
        let layer = Layer::UniformSubsample { target_h: 4, target_w: 4 };
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = layer.forward(x.clone(), Mode::Inference, None).unwrap();
        assert_eq!(out.dims(), &[1, 4, 4]);
        // Corners of the grid hit the source corners.
        assert_eq!(out.data()[0], 1.0);
        assert_eq!(out.data()[3], 2.0);
        assert_eq!(out.data()[12], 3.0);
        assert_eq!(out.data()[15], 4.0);
    }

    #[test]
    fn dropout_inference_is_identity() {
        let layer = Layer::Dropout { rate: 0.5 };
        let x = Tensor::new(vec![5], vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let (out, _) = layer.forward(x.clone(), Mode::Inference, None).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn dropout_training_requires_rng() {
        let layer = Layer::Dropout { rate: 0.5 };
        let x = Tensor::zeros(vec![4]);
        assert!(layer.forward(x, Mode::Training, None).is_err());
    }

    #[test]
    fn dropout_mask_scales_kept_units() {
        let layer = Layer::Dropout { rate: 0.5 };
        let x = Tensor::scalar_filled(vec![1000], 1.0);
        let mut r = rng();
        let (out, saved) = layer.forward(x, Mode::Training, Some(&mut r)).unwrap();
        let kept = out.data().iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 350 && kept < 650, "kept {kept} of 1000");
        assert!(out.data().iter().all(|&v| v == 0.0 || (v - 2.0).abs() < 1e-12));
        // Backward routes through the same mask.
        let g = Tensor::scalar_filled(vec![1000], 1.0);
        let (gin, _) = layer.backward(&saved, g).unwrap();
        for (o, gi) in out.data().iter().zip(gin.data()) {
            assert_eq!(*o != 0.0, *gi != 0.0);
        }
    }

    #[test]
    fn tanh_backward_at_zero_is_identity() {
        let layer = Layer::Tanh;
        let x = Tensor::zeros(vec![3]);
        let (_, saved) = layer.forward(x, Mode::Inference, None).unwrap();
        let g = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let (gin, _) = layer.backward(&saved, g.clone()).unwrap();
        assert_eq!(gin.data(), g.data());
    }

    #[test]
    fn shape_error_names_both_shapes() {
        let c = Conv3x3::new(3, 1, 1, 1, &mut rng());
        let layer = Layer::Conv3x3(c);
        let x = Tensor::zeros(vec![2, 4, 4]);
        let err = layer.forward(x, Mode::Inference, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, H, W]") && msg.contains("[2, 4, 4]"), "{msg}");
    }
}
