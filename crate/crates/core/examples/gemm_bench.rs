//! Raw GEMM throughput at the conv shapes this workload produces.

use std::time::Instant;
use t2net::tensor::gemm_rowmajor;

fn bench(m: usize, k: usize, n: usize, iters: usize) {
    let a = vec![1.0f32; m * k];
    let b = vec![1.0f32; k * n];
    let mut c = vec![0.0f32; m * n];
    let start = Instant::now();
    for _ in 0..iters {
        gemm_rowmajor(m, k, n, 1.0, &a, false, &b, false, 0.0, &mut c);
        std::hint::black_box(&c);
    }
    let dt = start.elapsed().as_secs_f64();
    let gflops = (2.0 * m as f64 * k as f64 * n as f64 * iters as f64) / dt / 1e9;
    println!("m={m:5} k={k:5} n={n:6}: {gflops:6.1} GFLOP/s");
}

fn main() {
    // res-block conv, per image and batched over 4
    bench(64, 576, 1024, 50);
    bench(64, 576, 4096, 20);
    // final 7x7 conv
    bench(3, 1568, 4096, 20);
    bench(32, 576, 4096, 20);
    // first conv
    bench(32, 147, 4096, 50);
    // big square reference
    bench(512, 512, 512, 20);
}
