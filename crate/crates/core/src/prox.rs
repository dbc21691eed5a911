//! Proximal maps of the nonsmooth terms: the data indicator, the weighted
//! l1 norm of the latents and the kernel constraint set.

use crate::convnet::{KernelSet, LatentStack};
use crate::error::Result;
use crate::forward::{
    block_average, block_dct, block_idct, block_replicate, Degradation, ProblemSpec,
};
use crate::grid::{raw_sq_norm, Grid};

/// Slack allowed when checking the kernel constraints.
pub const KERNEL_TOLERANCE: f64 = 1e-12;

/// Step size and weights for the latent prox.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxContext {
    /// The block step `tau > 0`; the prox quadratic is `(tau/2) |z - x|^2`.
    pub step: f64,
    pub s_g: f64,
    /// Number of entries `M_x * M_y` of one latent grid, per layer.
    pub layer_entries: Vec<usize>,
}

impl ProxContext {
    pub fn for_latents(step: f64, s_g: f64, latents: &LatentStack) -> Self {
        ProxContext {
            step,
            s_g,
            layer_entries: latents
                .layers
                .iter()
                .map(|chans| chans.first().map_or(0, |g| g.len()))
                .collect(),
        }
    }

    /// Soft threshold of layer `l` (0-based): `s_G / (tau * M_x * M_y)`.
    pub fn threshold(&self, layer: usize) -> f64 {
        self.s_g / (self.step * self.layer_entries[layer] as f64)
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Prox of `s_G * sum ||mu^l_n||_1` (normalized l1) with an unnormalized
/// quadratic: entrywise soft thresholding per layer.
pub fn prox_l1(latents: &LatentStack, ctx: &ProxContext) -> LatentStack {
    let mut out = latents.clone();
    for (l, chans) in out.layers.iter_mut().enumerate() {
        let t = ctx.threshold(l);
        for g in chans {
            g.mapv_inplace(|x| soft_threshold(x, t));
        }
    }
    out
}

fn project_ball(theta: &mut Grid) {
    let sq = raw_sq_norm(theta);
    if sq > 1.0 {
        *theta /= sq.sqrt();
    }
}

/// Euclidean projection onto the kernel constraint set: unit ball for every
/// kernel, plus zero mean for layer-1 kernels. For layer 1 the mean is
/// removed first; the ball scaling keeps the mean at zero, so the
/// composition is the exact projection onto the intersection.
pub fn project_kernels(kernels: &KernelSet) -> KernelSet {
    let mut out = kernels.clone();
    for (l, chans) in out.layers.iter_mut().enumerate() {
        for theta in chans {
            if l == 0 {
                let mean = theta.mean().unwrap_or(0.0);
                *theta -= mean;
            }
            project_ball(theta);
        }
    }
    out
}

pub fn kernels_feasible(kernels: &KernelSet, tol: f64) -> bool {
    kernels.layers.iter().enumerate().all(|(l, chans)| {
        chans
            .iter()
            .all(|theta| raw_sq_norm(theta) <= 1.0 + tol && (l > 0 || theta.sum().abs() <= tol))
    })
}

/// Projection onto the hard data constraint; identity for smooth data terms.
pub fn prox_data(u: &Grid, problem: &ProblemSpec) -> Result<Grid> {
    problem.apply_forward(u)?; // shape check
    Ok(match &problem.degradation {
        Degradation::Denoise | Degradation::Deconv { .. } => u.clone(),
        Degradation::Inpaint { mask } => ndarray::Zip::from(u)
            .and(mask)
            .and(&problem.data)
            .map_collect(|&x, &m, &y| if m == 1.0 { y } else { x }),
        Degradation::SuperRes { factor } => {
            let excess = block_average(u, *factor) - &problem.data;
            u - &block_replicate(&excess, *factor)
        }
        Degradation::Jpeg { spectrum } => block_idct(&spectrum.clamp(&block_dct(u)?))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockVariable;
    use crate::convnet::derive_size_plan;
    use crate::energy::ModelConfig;
    use crate::forward::{quality_table, QuantizedSpectrum};
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn max_diff(a: &KernelSet, b: &KernelSet) -> f64 {
        a.grids()
            .into_iter()
            .zip(b.grids())
            .flat_map(|(x, y)| {
                x.iter()
                    .zip(y.iter())
                    .map(|(p, q)| (p - q).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_relative_eq!(soft_threshold(0.5, 0.2), 0.3);
        assert_eq!(soft_threshold(-0.1, 0.2), 0.0);
        assert_relative_eq!(soft_threshold(-0.5, 0.2), -0.3);
    }

    #[test]
    fn latent_prox_matches_grid_search() {
        // 1x1 latent, s_G = 1, tau = 1: threshold 1
        let cfg = ModelConfig {
            layers: 1,
            channels: 1,
            kernel_size: 1,
            strides: vec![1],
            ..ModelConfig::default()
        };
        let plan = derive_size_plan(1, 1, &cfg).unwrap();
        let mut latents = LatentStack::zeros(&plan, 1);
        let ctx = ProxContext::for_latents(1.0, 1.0, &latents);
        assert_eq!(ctx.threshold(0), 1.0);
        assert_eq!(prox_l1(&latents, &ctx), latents);
        for x in [-2.3, -0.4, 0.0, 0.9, 1.7] {
            latents.layers[0][0][[0, 0]] = x;
            let got = prox_l1(&latents, &ctx).layers[0][0][[0, 0]];
            let objective = |z: f64| z.abs() + 0.5 * (z - x) * (z - x);
            let best = (-40_000..=40_000)
                .map(|k| k as f64 * 1e-4)
                .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
                .unwrap();
            assert!((got - best).abs() <= 2e-4, "x={x}: {got} vs {best}");
        }
    }

    #[test]
    fn kernel_projection_examples() {
        let mut k = KernelSet::zeros(2, 1, 2);
        k.layers[0][0] = Grid::ones((2, 2));
        k.layers[1][0] = array![[1.2, 1.6], [0.0, 0.0]];
        let p = project_kernels(&k);
        assert_eq!(p.layers[0][0], Grid::zeros((2, 2)));
        assert_relative_eq!(p.layers[1][0][[0, 0]], 0.6, epsilon = 1e-15);
        assert_relative_eq!(p.layers[1][0][[0, 1]], 0.8, epsilon = 1e-15);
        assert!(kernels_feasible(&p, KERNEL_TOLERANCE));
        assert!(max_diff(&project_kernels(&p), &p) <= 1e-15);
    }

    #[test]
    fn data_projection_examples() {
        let p = ProblemSpec::new(Degradation::SuperRes { factor: 2 }, array![[5.0]]).unwrap();
        let out = prox_data(&array![[1.0, 2.0], [3.0, 4.0]], &p).unwrap();
        assert_eq!(out, array![[3.5, 4.5], [5.5, 6.5]]);
        assert_eq!(block_average(&out, 2), array![[5.0]]);

        let mask = array![[1.0, 0.0], [0.0, 1.0]];
        let p = ProblemSpec::new(
            Degradation::Inpaint { mask },
            array![[0.3, 0.0], [0.0, 0.7]],
        )
        .unwrap();
        let u = array![[0.3, 9.0], [-1.0, 0.7]];
        assert_eq!(prox_data(&u, &p).unwrap(), u);

        let p = ProblemSpec::new(Degradation::Denoise, Grid::zeros((2, 2))).unwrap();
        assert_eq!(prox_data(&u, &p).unwrap(), u);
    }

    #[test]
    fn jpeg_projection_lands_in_intervals() {
        let gt = Grid::from_shape_fn((16, 16), |(i, j)| ((i * j) % 5) as f64 / 5.0);
        let spectrum = QuantizedSpectrum::quantize(&gt, quality_table(20)).unwrap();
        let p = ProblemSpec::jpeg(spectrum.clone()).unwrap();
        let u = Grid::from_shape_fn((16, 16), |(i, j)| ((i + 2 * j) % 3) as f64);
        let out = prox_data(&u, &p).unwrap();
        assert!(spectrum.contains(&block_dct(&out).unwrap(), 1e-12));
    }

    proptest! {
        #[test]
        fn soft_threshold_is_nonexpansive(a in -5.0f64..5.0, b in -5.0f64..5.0, t in 0.0f64..2.0) {
            prop_assert!((soft_threshold(a, t) - soft_threshold(b, t)).abs() <= (a - b).abs() + 1e-15);
        }

        #[test]
        fn projected_kernels_are_feasible(vals in proptest::collection::vec(-3.0f64..3.0, 18)) {
            let mut k = KernelSet::zeros(2, 1, 3);
            k.layers[0][0] = Grid::from_shape_vec((3, 3), vals[..9].to_vec()).unwrap();
            k.layers[1][0] = Grid::from_shape_vec((3, 3), vals[9..].to_vec()).unwrap();
            let p = project_kernels(&k);
            prop_assert!(kernels_feasible(&p, KERNEL_TOLERANCE));
            prop_assert!(max_diff(&project_kernels(&p), &p) <= 1e-15);
        }
    }
}
