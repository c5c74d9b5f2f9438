//! Manual timing probe (not part of the normal suite):
//! `cargo test -p doorfeel-core --test perf_probe -- --ignored --nocapture`

use doorfeel_core::model::{self, ModelConfig};
use doorfeel_core::nn::adam::AdamState;
use doorfeel_core::nn::loss::rmse_batch;
use doorfeel_core::rng::SplitMix64;
use std::time::Instant;

#[test]
#[ignore]
fn phase_timings() {
    let config = ModelConfig::default();
    let lanes = 56usize;
    let params = model::build(&config).unwrap();
    let mut ws = model::Workspace::new(&config, lanes);
    let mut rng = SplitMix64::new(1);
    let x: Vec<f64> = (0..config.input_len * lanes)
        .map(|_| rng.uniform(-1.0, 1.0))
        .collect();
    let target: Vec<f64> = (0..config.outputs * lanes)
        .map(|_| rng.uniform(0.0, 1.0))
        .collect();
    let mut dpred = vec![0.0; config.outputs * lanes];
    let mut adam = AdamState::new(config.learning_rate, params.values.len());
    let mut params = params;

    // warmup
    model::forward_batch(&params, &mut ws, &x).unwrap();

    let n = 3;
    let t0 = Instant::now();
    for _ in 0..n {
        model::forward_batch(&params, &mut ws, &x).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / n as f64;

    let mut grads = Vec::new();
    let t0 = Instant::now();
    for _ in 0..n {
        model::forward_batch(&params, &mut ws, &x).unwrap();
        let pred = ws.predictions().to_vec();
        rmse_batch(&pred, &target, config.outputs, lanes, &mut dpred);
        grads = model::backward_batch(&params, &mut ws, &dpred).unwrap().to_vec();
    }
    let both = t0.elapsed().as_secs_f64() / n as f64;

    let t0 = Instant::now();
    for _ in 0..n {
        adam.step(&mut params.values, &grads).unwrap();
    }
    let step = t0.elapsed().as_secs_f64() / n as f64;

    println!("forward {fwd:.3}s  fwd+bwd {both:.3}s  (bwd ~{:.3}s)  adam {step:.3}s", both - fwd);
}

#[test]
#[ignore]
fn op_timings() {
    use doorfeel_core::nn::kernels::{conv3_fwd, matmul_acc};
    let lanes = 56usize;
    let mut rng = SplitMix64::new(2);
    let mut rv = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect() };

    // lstm1 recurrence: 630 timesteps of [512x128] @ [128xlanes]
    let w = rv(512 * 128);
    let h = rv(128 * lanes);
    let mut out = rv(512 * lanes);
    let t0 = Instant::now();
    for _ in 0..630 {
        matmul_acc(&mut out, &w, &h, 512, 128, lanes);
    }
    let dt = t0.elapsed().as_secs_f64();
    let gf = (630.0 * 512.0 * 128.0 * lanes as f64 * 2.0) / dt / 1e9;
    println!("lstm1-shaped matmul: {dt:.3}s ({gf:.1} GFLOP/s)");

    // conv2: 128 filters x 256 chans x len 315
    let (f, c, len) = (128usize, 256usize, 315usize);
    let xpad = rv(c * (len + 2) * lanes);
    let w = rv(f * c * 3);
    let bias = rv(f);
    let mut out = vec![0.0; f * len * lanes];
    let t0 = Instant::now();
    for _ in 0..3 {
        conv3_fwd(&mut out, &xpad, &w, &bias, f, c, len, lanes);
    }
    let dt = t0.elapsed().as_secs_f64() / 3.0;
    let gf = (f * c * 3 * len * lanes * 2) as f64 / dt / 1e9;
    println!("conv2-shaped conv3_fwd: {dt:.3}s/iter ({gf:.1} GFLOP/s)");

    // lane-count sweep for the matmul
    for ln in [16usize, 24, 32, 40, 48, 56, 64] {
        let hb = rv(128 * ln);
        let mut outb = rv(512 * ln);
        let t0 = Instant::now();
        for _ in 0..630 {
            matmul_acc(&mut outb, &w[..512 * 128], &hb, 512, 128, ln);
        }
        let dt = t0.elapsed().as_secs_f64();
        let gf = (630.0 * 512.0 * 128.0 * ln as f64 * 2.0) / dt / 1e9;
        println!("lstm1-shaped matmul lanes={ln}: {dt:.3}s ({gf:.1} GFLOP/s)");
    }
}

#[test]
#[ignore]
fn bwd_op_timings() {
    use doorfeel_core::nn::kernels::{conv3_grad_input, conv3_grad_params, transpose_conv_w};
    use doorfeel_core::nn::lstm::{self, LstmCache, LstmDims, LstmScratch};
    let lanes = 56usize;
    let mut rng = SplitMix64::new(3);
    let mut rv = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect() };

    // lstm1: input 1, units 128, 630 steps
    let d = LstmDims { input: 1, units: 128, t_steps: 630, lanes };
    let wx = rv(d.wx_len());
    let wh = rv(d.wh_len());
    let bias = rv(d.bias_len());
    let x = rv(d.t_steps * d.input * lanes);
    let mut cache = LstmCache::new(&d);
    let t0 = Instant::now();
    lstm::forward(&d, &wx, &wh, &bias, &x, &mut cache);
    println!("lstm1 fwd: {:.3}s", t0.elapsed().as_secs_f64());
    let mut wxt = vec![0.0; wx.len()];
    let mut wht = vec![0.0; wh.len()];
    doorfeel_core::nn::kernels::transpose(&mut wxt, &wx, 4 * d.units, d.input);
    doorfeel_core::nn::kernels::transpose(&mut wht, &wh, 4 * d.units, d.units);
    let mut dh = rv(d.t_steps * d.units * lanes);
    let mut gwx = vec![0.0; wx.len()];
    let mut gwh = vec![0.0; wh.len()];
    let mut gb = vec![0.0; bias.len()];
    let mut scratch = LstmScratch::new(&d);
    let t0 = Instant::now();
    lstm::backward(&d, &wxt, &wht, &x, &cache, &mut dh, &mut gwx, &mut gwh, &mut gb, None, &mut scratch);
    println!("lstm1 bwd: {:.3}s", t0.elapsed().as_secs_f64());

    // conv2 grads: 128 filters x 256 chans x len 315
    let (f, c, len) = (128usize, 256usize, 315usize);
    let xpad = rv(c * (len + 2) * lanes);
    let w = rv(f * c * 3);
    let dvec = rv(f * len * lanes);
    let dpad = rv(f * (len + 2) * lanes);
    let mut gw = vec![0.0; f * c * 3];
    let mut gb2 = vec![0.0; f];
    let t0 = Instant::now();
    conv3_grad_params(&mut gw, &mut gb2, &dvec, &xpad, f, c, len, lanes);
    println!("conv2 grad_params: {:.3}s", t0.elapsed().as_secs_f64());
    let mut wt = vec![0.0; w.len()];
    transpose_conv_w(&mut wt, &w, f, c);
    let mut gx = vec![0.0; c * len * lanes];
    let t0 = Instant::now();
    conv3_grad_input(&mut gx, &dpad, &wt, f, c, len, lanes);
    println!("conv2 grad_input: {:.3}s", t0.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn peak_flops() {
    use wide::f64x8;
    let mut acc = [f64x8::splat(0.0); 16];
    let x = f64x8::splat(1.0000001);
    let y = f64x8::splat(0.9999999);
    let iters = 20_000_000u64;
    let t0 = Instant::now();
    for _ in 0..iters {
        for a in acc.iter_mut() {
            *a = x.mul_add(y, *a);
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    let gf = (iters as f64 * 16.0 * 8.0 * 2.0) / dt / 1e9;
    let s: f64 = acc.iter().map(|v| v.to_array().iter().sum::<f64>()).sum();
    println!("peak fma: {gf:.1} GFLOP/s (sink {s:.3e})");
}

#[test]
#[ignore]
fn long_loop() {
    let config = ModelConfig::default();
    let lanes = 56usize;
    let mut params = model::build(&config).unwrap();
    let mut ws = model::Workspace::new(&config, lanes);
    let mut rng = SplitMix64::new(1);
    let x: Vec<f64> = (0..config.input_len * lanes).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let target: Vec<f64> = (0..config.outputs * lanes).map(|_| rng.uniform(0.0, 1.0)).collect();
    let mut dpred = vec![0.0; config.outputs * lanes];
    let mut adam = AdamState::new(config.learning_rate, params.values.len());
    for _ in 0..200 {
        model::forward_batch(&params, &mut ws, &x).unwrap();
        let pred = ws.predictions().to_vec();
        rmse_batch(&pred, &target, config.outputs, lanes, &mut dpred);
        let grads = model::backward_batch(&params, &mut ws, &dpred).unwrap().to_vec();
        adam.step(&mut params.values, &grads).unwrap();
    }
}
