use genreg::block::BlockVariable;
use genreg::convnet::{strided_upconvolve, upconv_adjoint_kernel, upconv_adjoint_latent};
use genreg::forward::{block_dct, quality_table, NoiseSource, QuantizedSpectrum, SpectrumEncoding};
use genreg::grid::{inner, raw_sq_norm};
use genreg::prox::{
    kernels_feasible, project_kernels, prox_data, soft_threshold, KERNEL_TOLERANCE,
};
use genreg::{
    derive_size_plan, simulate_corruption, synthesize, AlgoParams, Grid, KernelSet, LatentStack,
    ModelConfig, Recipe, Solver,
};
use proptest::prelude::*;

fn random_grid(seed: u64, dims: (usize, usize), scale: f64) -> Grid {
    let mut src = NoiseSource::new(seed);
    Grid::from_shape_fn(dims, |_| src.uniform_in(-scale, scale))
}

fn model(layers: usize, r: usize, strides: Vec<usize>) -> ModelConfig {
    ModelConfig {
        layers,
        channels: 2,
        kernel_size: r,
        strides,
        ..ModelConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn size_plans_chain_back_to_the_image(
        nx in 4usize..40, ny in 4usize..40, r in 2usize..5, s2 in 1usize..4, s3 in 1usize..4,
    ) {
        prop_assume!(nx >= r && ny >= r);
        let config = model(3, r, vec![1, s2, s3]);
        let plan = derive_size_plan(nx, ny, &config).unwrap();
        prop_assert_eq!(plan.layers[0].output, (nx, ny));
        for pair in plan.layers.windows(2) {
            prop_assert_eq!(pair[1].output, pair[0].latent);
        }
        let mut latents = LatentStack::zeros(&plan, 2);
        for (k, g) in latents.grids_mut().into_iter().enumerate() {
            *g = random_grid(k as u64, g.dim(), 1.0);
        }
        let kernels = project_kernels(&KernelSet {
            layers: (0..3).map(|l| (0..2).map(|n| random_grid(10 * l + n, (r, r), 1.0)).collect()).collect(),
        });
        prop_assert_eq!(synthesize(&latents, &kernels, &plan).unwrap().dim(), (nx, ny));
    }

    #[test]
    fn upconvolution_adjoints_match(
        m0 in 1usize..8, m1 in 1usize..8, r in 1usize..5, stride in 1usize..4, pad0 in 0usize..3, pad1 in 0usize..3,
        seed in any::<u64>(),
    ) {
        let interp = (stride * (m0 - 1) + 1 + pad0 % stride, stride * (m1 - 1) + 1 + pad1 % stride);
        prop_assume!(interp.0 >= r && interp.1 >= r);
        let mu = random_grid(seed, (m0, m1), 1.0);
        let theta = random_grid(seed ^ 1, (r, r), 1.0);
        let out = strided_upconvolve(&mu, &theta, stride, interp).unwrap();
        let w = random_grid(seed ^ 2, out.dim(), 1.0);
        let lhs = inner(&out, &w);
        let via_mu = inner(&mu, &upconv_adjoint_latent(&w, &theta, stride, (m0, m1), interp).unwrap());
        let via_theta = inner(&theta, &upconv_adjoint_kernel(&w, &mu, stride, interp, r).unwrap());
        prop_assert!((lhs - via_mu).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert!((lhs - via_theta).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn kernel_projection_is_a_nonexpansive_retraction(seed in any::<u64>(), scale in 0.01f64..5.0) {
        let make = |s: u64| KernelSet {
            layers: (0..2).map(|l| (0..3).map(|n| random_grid(s + 7 * l + n, (3, 3), scale)).collect()).collect(),
        };
        let (a, b) = (make(seed % 1_000_000), make(seed % 1_000_000 + 500));
        let (pa, pb) = (project_kernels(&a), project_kernels(&b));
        prop_assert!(kernels_feasible(&pa, KERNEL_TOLERANCE));
        let again = project_kernels(&pa);
        prop_assert!(again.difference(&pa).raw_sq_norm() <= 1e-24);
        prop_assert!(pa.difference(&pb).raw_sq_norm() <= a.difference(&b).raw_sq_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(x in -10.0f64..10.0, t in 0.0f64..5.0) {
        let y = soft_threshold(x, t);
        prop_assert!(y.abs() <= x.abs());
        prop_assert!(y == 0.0 || y.signum() == x.signum());
        prop_assert!(((x - y).abs() - t.min(x.abs())).abs() <= 1e-12);
    }

    #[test]
    fn data_projection_lands_in_the_feasible_set(seed in any::<u64>(), quality in 1u32..100, factor_ix in 0usize..3) {
        let truth = random_grid(seed, (16, 16), 0.5).mapv(|v| v + 0.5);
        let u = random_grid(seed ^ 9, (16, 16), 2.0);
        let recipes = [Recipe::inpaint(), Recipe::SuperRes { factor: [2, 4, 8][factor_ix] }, Recipe::Jpeg { quality }];
        for recipe in &recipes {
            let problem = simulate_corruption(&truth, recipe, seed).unwrap();
            let p = prox_data(&u, &problem).unwrap();
            prop_assert!(problem.is_feasible(&p, 1e-10).unwrap(), "{:?}", recipe);
            let pp = prox_data(&p, &problem).unwrap();
            prop_assert!(raw_sq_norm(&(&pp - &p)) <= 1e-22);
        }
    }
}

#[test]
fn spectrum_files_round_trip_in_both_encodings() {
    let truth = random_grid(3, (16, 24), 0.5).mapv(|v| v + 0.5);
    let spectrum = QuantizedSpectrum::quantize(&truth, quality_table(40)).unwrap();
    assert!(spectrum.contains(&block_dct(&truth).unwrap(), 1e-12));
    for encoding in [SpectrumEncoding::Text, SpectrumEncoding::Binary] {
        let mut bytes = Vec::new();
        spectrum.write_to(&mut bytes, encoding).unwrap();
        let back = QuantizedSpectrum::read_from(&bytes[..]).unwrap();
        assert_eq!(back, spectrum);
    }
}

#[test]
fn solver_trace_counts_every_sweep_and_stays_finite() {
    let truth = Grid::from_shape_fn(
        (16, 16),
        |(i, j)| if (i / 4 + j / 4) % 2 == 0 { 0.8 } else { 0.2 },
    );
    for recipe in [
        Recipe::denoise(),
        Recipe::deconv(),
        Recipe::inpaint(),
        Recipe::superres(),
        Recipe::jpeg(),
    ] {
        let problem = simulate_corruption(&truth, &recipe, 4).unwrap();
        let config = model(3, 4, vec![1, 2, 2]);
        let algo = AlgoParams {
            iterations: 7,
            warmup: 3,
            ..AlgoParams::default()
        };
        let solution = Solver::new(&problem, &config, &algo, 2)
            .unwrap()
            .solve_observed(&mut |_, _| {})
            .unwrap();
        assert_eq!(solution.trace.len(), 2 * 3 + 7, "{recipe:?}");
        let stages: Vec<usize> = solution.trace.iter().map(|e| e.stage).collect();
        assert_eq!(&stages[..3], &[1, 1, 1]);
        assert_eq!(&stages[3..6], &[2, 2, 2]);
        assert!(stages[6..].iter().all(|&s| s == 3));
        assert!(solution.trace.iter().all(|e| e.objective.is_finite()));
        assert!(solution.u.iter().all(|v| v.is_finite()));
        assert!(kernels_feasible(&solution.kernels, KERNEL_TOLERANCE));
        assert!(
            problem.is_feasible(&solution.u, 1e-9).unwrap(),
            "{recipe:?}"
        );
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let truth = Grid::from_shape_fn((16, 16), |(i, _)| if i < 8 { 0.7 } else { 0.3 });
    let problem = simulate_corruption(&truth, &Recipe::denoise(), 1).unwrap();
    let config = model(2, 3, vec![1, 2]);
    let algo = AlgoParams {
        iterations: 5,
        warmup: 2,
        ..AlgoParams::default()
    };
    let run = |seed| {
        Solver::new(&problem, &config, &algo, seed)
            .unwrap()
            .solve_observed(&mut |_, _| {})
            .unwrap()
    };
    let (a, b, c) = (run(1), run(1), run(2));
    assert_eq!(a.u, b.u);
    assert_eq!(a.kernels, b.kernels);
    assert_ne!(a.kernels, c.kernels);
}
