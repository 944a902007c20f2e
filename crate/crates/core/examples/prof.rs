// Scratch timing breakdown (not part of the deliverable).
use std::time::Instant;

use xyzcycle_core::cyclenet::CycleNet;
use xyzcycle_core::nn::{Mode, SubnetGrads, Tensor};

fn main() {
    let net = CycleNet::new(0);
    let x = Tensor::scalar_filled(vec![3, 64, 64], 0.4);

    // g_loc forward
    let t = Instant::now();
    let reps = 20;
    for _ in 0..reps {
        let _ = net.g_loc.forward(&x, Mode::Inference, None).unwrap();
    }
    let fwd_loc = t.elapsed().as_secs_f64() / reps as f64;

    // g_loc forward + backward
    let t = Instant::now();
    for _ in 0..reps {
        let (out, saved) = net.g_loc.forward(&x, Mode::Inference, None).unwrap();
        let mut sink = SubnetGrads::zeros_like(&net.g_loc);
        let ones = Tensor::scalar_filled(out.dims().to_vec(), 1.0);
        let _ = net.g_loc.backward(&saved, &ones, &mut sink).unwrap();
    }
    let fb_loc = t.elapsed().as_secs_f64() / reps as f64;

    // g_glob forward + backward (input 64x64 -> subsample 128)
    let t = Instant::now();
    for _ in 0..reps {
        let (out, saved) = net.g_glob.forward(&x, Mode::Inference, None).unwrap();
        let mut sink = SubnetGrads::zeros_like(&net.g_glob);
        let ones = Tensor::scalar_filled(out.dims().to_vec(), 1.0);
        let _ = net.g_glob.backward(&saved, &ones, &mut sink).unwrap();
    }
    let fb_glob = t.elapsed().as_secs_f64() / reps as f64;

    // GEMM-only reference: 16 layers' worth of fwd GEMM
    let a = vec![0.5f64; 32 * 288];
    let b = vec![0.25f64; 288 * 4096];
    let mut c = vec![0.0f64; 32 * 4096];
    let t = Instant::now();
    for _ in 0..reps * 16 {
        unsafe {
            matrixmultiply_probe(&a, &b, &mut c);
        }
    }
    let gemm16 = t.elapsed().as_secs_f64() / reps as f64;

    println!("g_loc fwd            {:.1} ms  (5.35e8 MAC -> {:.1} GFLOP/s)", fwd_loc * 1e3, 2.0 * 5.35e8 / fwd_loc / 1e9);
    println!("g_loc fwd+bwd        {:.1} ms", fb_loc * 1e3);
    println!("g_glob fwd+bwd       {:.1} ms", fb_glob * 1e3);
    println!("16x GEMM 32x288x4096 {:.1} ms", gemm16 * 1e3);
}

unsafe fn matrixmultiply_probe(a: &[f64], b: &[f64], c: &mut [f64]) {
    // same shape as one conv layer's forward GEMM
    matrixmultiply::dgemm(
        32, 288, 4096, 1.0, a.as_ptr(), 288, 1, b.as_ptr(), 4096, 1, 0.0, c.as_mut_ptr(), 4096, 1,
    );
}
