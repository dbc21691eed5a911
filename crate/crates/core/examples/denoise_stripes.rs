//! Denoises a synthetic stripes-plus-flat image and prints PSNR and timing.
//!
//! Usage: `cargo run --release --example denoise_stripes -- [size] [iterations] [warmup]`

use genreg::forward::psnr;
use genreg::{simulate_corruption, solve, AlgoParams, Grid, ModelConfig, Recipe};
use std::time::Instant;

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let size = args.first().copied().unwrap_or(64);
    let iterations = args.get(1).copied().unwrap_or(500);
    let warmup = args.get(2).copied().unwrap_or(200);
    let truth = Grid::from_shape_fn((size, size), |(i, j)| {
        if j < size / 2 {
            if (i / 4) % 2 == 0 {
                0.8
            } else {
                0.2
            }
        } else {
            0.5
        }
    });
    let problem = simulate_corruption(&truth, &Recipe::denoise(), 7).unwrap();
    let config = ModelConfig::default();
    let algo = AlgoParams {
        iterations,
        warmup,
        ..AlgoParams::default()
    };
    let start = Instant::now();
    let sol = solve(&problem, &config, &algo, 1).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "noisy psnr {:.3}",
        psnr(&problem.data, &truth, 1.0).unwrap()
    );
    println!("recon psnr {:.3}", psnr(&sol.u, &truth, 1.0).unwrap());
    for e in sol
        .trace
        .iter()
        .step_by((sol.trace.len() / 20).max(1))
        .chain(sol.trace.last())
    {
        println!(
            "{:6} stage {} E {:.6} fid {:.5} tv {:.5} l1 {:.5} coup {:.6}",
            e.iteration,
            e.stage,
            e.objective,
            e.terms.fidelity,
            e.terms.tv,
            e.terms.l1,
            e.terms.coupling
        );
    }
    for (l, chans) in sol.latents.layers.iter().enumerate() {
        let total: usize = chans.iter().map(|g| g.len()).sum();
        let zeros: usize = chans
            .iter()
            .map(|g| g.iter().filter(|&&x| x == 0.0).count())
            .sum();
        println!("layer {} latents: {zeros}/{total} zero", l + 1);
    }
    println!(
        "{} iterations in {:.2}s ({:.2} ms/iter)",
        sol.trace.len(),
        elapsed,
        1e3 * elapsed / sol.trace.len().max(1) as f64
    );
}
