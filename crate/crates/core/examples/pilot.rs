// Scratch convergence pilot (not part of the deliverable).
use std::time::Instant;

use xyzcycle_core::colorspace::{standard_baseline, BaselineDirection};
use xyzcycle_core::cyclenet::{train_with_progress, CycleNet, TrainSchedule};
use xyzcycle_core::data::{synth_pair, ImagePair, IspParams};
use xyzcycle_core::metrics::psnr;

fn main() {
    let isp = IspParams::synthetic(0);
    let size = 96;
    let n_train = 40;
    let n_test = 8;

    let t0 = Instant::now();
    let train_pairs: Vec<ImagePair> =
        (0..n_train).map(|i| synth_pair(i, 0, size, size, &isp).unwrap()).collect();
    let test_pairs: Vec<ImagePair> =
        (n_train..n_train + n_test).map(|i| synth_pair(i, 0, size, size, &isp).unwrap()).collect();
    println!("data_gen_s={:.1}", t0.elapsed().as_secs_f64());

    // Baseline PSNR.
    let mut base_psnrs = Vec::new();
    for p in &test_pairs {
        let rec = standard_baseline(&p.srgb, BaselineDirection::Unprocess).unwrap();
        base_psnrs.push(psnr(&rec, &p.xyz, 1.0).unwrap());
    }
    let base_avg = base_psnrs.iter().sum::<f64>() / base_psnrs.len() as f64;
    println!("baseline_xyz_psnr={base_avg:.2}");

    let sched = TrainSchedule {
        epochs: 10,
        batch: 4,
        patch: 64,
        lr: 1e-3,
        lr_drop: 0.5,
        lr_drop_every: 12,
        lambda: 1.5,
        lambda_reg: 1e-3,
        seed: 0,
        augment: true,
        teacher_force: false,
    };
    let mut net = CycleNet::new(0);

    // Initial (identity-init) quality.
    eval(&net, &test_pairs, "epoch=-1");

    let t1 = Instant::now();
    train_with_progress(&mut net, &train_pairs, &sched, |s| {
        println!(
            "epoch={} lr={:.2e} loss_total={:.5} loss_xyz={:.5} loss_srgb={:.5} t={:.1}s",
            s.epoch,
            s.lr,
            s.loss_total,
            s.loss_xyz,
            s.loss_srgb,
            t1.elapsed().as_secs_f64()
        );
    })
    .unwrap();
    println!("train_s={:.1}", t1.elapsed().as_secs_f64());

    eval(&net, &test_pairs, "final");
}

fn eval(net: &CycleNet, test_pairs: &[ImagePair], tag: &str) {
    let mut xyz_psnrs = Vec::new();
    let mut srgb_psnrs = Vec::new();
    let t = Instant::now();
    for p in test_pairs {
        let dec = net.unprocess(&p.srgb).unwrap();
        xyz_psnrs.push(psnr(&dec.xyz, &p.xyz, 1.0).unwrap());
        let back = net.render(&dec.xyz).unwrap().srgb();
        srgb_psnrs.push(psnr(&back, &p.srgb, 1.0).unwrap());
    }
    let xa = xyz_psnrs.iter().sum::<f64>() / xyz_psnrs.len() as f64;
    let sa = srgb_psnrs.iter().sum::<f64>() / srgb_psnrs.len() as f64;
    println!("{tag} model_xyz_psnr={xa:.2} rec_srgb_psnr={sa:.2} eval_s={:.1}", t.elapsed().as_secs_f64());
}
