//! The objective: smoothed TV on the cartoon part, normalized l1 on the
//! latents, the layer coupling, the data term, and exact gradients of the
//! smooth part `H` in each block.
//!
//! Norms inside the objective are normalized by the number of entries.
//! Inner products (and therefore adjoints and gradients) are plain sums.

use crate::block::BlockVariable;
use crate::convnet::{
    layer_outputs, upconv_adjoint_kernel, upconv_adjoint_latent, KernelSet, LatentStack, SizePlan,
};
use crate::error::{GenregError, Result};
use crate::forward::ProblemSpec;
use crate::grid::{discrete_gradient, gradient_adjoint, normalized_norm, Grid};
use crate::prox::{kernels_feasible, KERNEL_TOLERANCE};
use rayon::prelude::*;

/// Model parameters: network architecture and regularization weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Network depth `L`.
    pub layers: usize,
    /// Channels per layer (the same for every layer).
    pub channels: usize,
    pub kernel_size: usize,
    /// One stride per layer; the first must be 1.
    pub strides: Vec<usize>,
    /// Smoothing of the total variation (not the algorithmic epsilon).
    pub tv_epsilon: f64,
    pub gamma: f64,
    /// Balance between TV (`nu -> 1`) and the generative prior.
    pub nu: f64,
    pub lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 3,
            channels: 8,
            kernel_size: 8,
            strides: vec![1, 2, 2],
            tv_epsilon: 0.05,
            gamma: 2000.0,
            nu: 0.925,
            lambda: 22.5,
        }
    }
}

impl ModelConfig {
    /// `nu / min(nu, 1 - nu)`
    pub fn s_r(&self) -> f64 {
        self.nu / self.nu.min(1.0 - self.nu)
    }

    /// `(1 - nu) / min(nu, 1 - nu)`
    pub fn s_g(&self) -> f64 {
        (1.0 - self.nu) / self.nu.min(1.0 - self.nu)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(GenregError::Config(msg));
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if self.channels == 0 {
            return fail("channels must be at least 1".into());
        }
        if self.kernel_size == 0 {
            return fail("kernel_size must be at least 1".into());
        }
        if self.strides.len() < self.layers {
            return fail(format!(
                "strides lists {} entries for {} layers",
                self.strides.len(),
                self.layers
            ));
        }
        if self.strides[0] != 1 {
            return fail("strides: the first layer must have stride 1".into());
        }
        if self.strides.contains(&0) {
            return fail("strides must be positive".into());
        }
        if self.tv_epsilon.is_nan() || self.tv_epsilon <= 0.0 {
            return fail("tv_epsilon must be positive".into());
        }
        if self.gamma.is_nan() || self.gamma <= 0.0 {
            return fail("gamma must be positive".into());
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return fail("nu must lie in (0, 1)".into());
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return fail("lambda must be positive".into());
        }
        Ok(())
    }
}

/// Which block of variables a gradient refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Image,
    Latents,
    Kernels,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Image => "image",
            Block::Latents => "latent",
            Block::Kernels => "kernel",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockGradient {
    Image(Grid),
    Latents(LatentStack),
    Kernels(KernelSet),
}

/// `(1/(Nx*Ny)) * sum sqrt(|grad u|^2 + eps)`.
pub fn tv_eps(u: &Grid, eps: f64) -> f64 {
    let f = discrete_gradient(u);
    let total: f64 =
        f.d1.iter()
            .zip(f.d2.iter())
            .map(|(a, b)| (a * a + b * b + eps).sqrt())
            .sum();
    total / u.len() as f64
}

pub fn tv_eps_grad(u: &Grid, eps: f64) -> Grid {
    let mut f = discrete_gradient(u);
    let count = u.len() as f64;
    for (a, b) in f.d1.iter_mut().zip(f.d2.iter_mut()) {
        let s = (*a * *a + *b * *b + eps).sqrt() * count;
        *a /= s;
        *b /= s;
    }
    gradient_adjoint(&f)
}

/// Residuals `mu^{l-1}_n - mu^l_n *_sigma theta^l_n` for every coupled layer.
/// Entry `l - 1` of the result holds the residuals of layer `l` (0-based `l >= 1`).
pub fn coupling_residuals(
    latents: &LatentStack,
    kernels: &KernelSet,
    plan: &SizePlan,
) -> Result<Vec<Vec<Grid>>> {
    (1..latents.depth())
        .map(|l| {
            let outs = layer_outputs(latents, kernels, plan, l)?;
            Ok(outs
                .into_iter()
                .zip(&latents.layers[l - 1])
                .map(|(out, shallower)| shallower - &out)
                .collect())
        })
        .collect()
}

fn coupling_from_residuals(residuals: &[Vec<Grid>], gamma: f64) -> f64 {
    gamma
        * residuals
            .iter()
            .flatten()
            .map(|r| 0.5 * normalized_norm(r, 2.0).powi(2))
            .sum::<f64>()
}

/// `gamma * sum_{l>=2} sum_n 0.5 * ||mu^{l-1}_n - mu^l_n *_sigma theta^l_n||^2` (normalized norm).
pub fn coupling_value(
    latents: &LatentStack,
    kernels: &KernelSet,
    plan: &SizePlan,
    gamma: f64,
) -> Result<f64> {
    Ok(coupling_from_residuals(
        &coupling_residuals(latents, kernels, plan)?,
        gamma,
    ))
}

/// `s_G * sum_l sum_n ||mu^l_n||_1` (normalized).
pub fn l1_value(latents: &LatentStack, s_g: f64) -> f64 {
    s_g * latents
        .grids()
        .into_iter()
        .map(|g| normalized_norm(g, 1.0))
        .sum::<f64>()
}

/// The individual terms of the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveTerms {
    /// `lambda * D^1(Au)`; the indicator part is tracked by `feasible`.
    pub fidelity: f64,
    /// `s_R * TV_eps(u - v)`
    pub tv: f64,
    pub l1: f64,
    pub coupling: f64,
    /// Data indicator and kernel constraint both satisfied.
    pub feasible: bool,
}

impl ObjectiveTerms {
    pub fn smooth(&self) -> f64 {
        self.fidelity + self.tv + self.coupling
    }

    pub fn total(&self) -> f64 {
        if self.feasible {
            self.smooth() + self.l1
        } else {
            f64::INFINITY
        }
    }
}

/// The energy for one problem instance and network configuration.
///
/// The network depth is taken from the latents passed in, so the same
/// instance evaluates every stage of the progressive initialization.
#[derive(Clone, Debug)]
pub struct Energy<'a> {
    pub problem: &'a ProblemSpec,
    pub config: &'a ModelConfig,
    pub plan: &'a SizePlan,
}

/// Forward quantities shared by `H` and its gradients.
struct NetworkPass {
    v: Grid,
    residuals: Vec<Vec<Grid>>,
}

impl<'a> Energy<'a> {
    pub fn new(problem: &'a ProblemSpec, config: &'a ModelConfig, plan: &'a SizePlan) -> Self {
        Energy {
            problem,
            config,
            plan,
        }
    }

    fn check(&self, u: &Grid, latents: &LatentStack, kernels: &KernelSet) -> Result<()> {
        if u.dim() != self.plan.image {
            return Err(GenregError::Shape(format!(
                "image {:?} does not match plan {:?}",
                u.dim(),
                self.plan.image
            )));
        }
        if kernels.depth() < latents.depth() {
            return Err(GenregError::Shape(
                "fewer kernel layers than latent layers".into(),
            ));
        }
        latents.check_plan(&self.plan.truncated(latents.depth()))
    }

    fn pass(&self, latents: &LatentStack, kernels: &KernelSet) -> Result<NetworkPass> {
        let plan = self.plan.truncated(latents.depth());
        Ok(NetworkPass {
            v: crate::convnet::synthesize(latents, kernels, &plan)?,
            residuals: coupling_residuals(latents, kernels, &plan)?,
        })
    }

    /// `lambda * D^1(Au)`: the normalized squared distance for smooth data
    /// terms, zero for indicator data terms.
    pub fn fidelity(&self, u: &Grid) -> Result<f64> {
        if !self.problem.has_smooth_fidelity() {
            return Ok(0.0);
        }
        let resid = self.problem.apply_forward(u)? - &self.problem.data;
        Ok(self.config.lambda * 0.5 * normalized_norm(&resid, 2.0).powi(2))
    }

    /// Gradient of [`Energy::fidelity`]: `lambda * A^T(Au - y) / K`.
    pub fn fidelity_grad(&self, u: &Grid) -> Result<Grid> {
        if !self.problem.has_smooth_fidelity() {
            return Ok(Grid::zeros(u.dim()));
        }
        let resid = self.problem.apply_forward(u)? - &self.problem.data;
        let k = resid.len() as f64;
        Ok(self.problem.apply_adjoint(&resid)? * (self.config.lambda / k))
    }

    /// The smooth part restricted to the image block, with the generative
    /// part `v` and the coupling value held fixed.
    pub fn h_image(&self, u: &Grid, v: &Grid, coupling: f64) -> Result<f64> {
        Ok(self.fidelity(u)?
            + self.config.s_r() * tv_eps(&(u - v), self.config.tv_epsilon)
            + coupling)
    }

    pub fn grad_image(&self, u: &Grid, v: &Grid) -> Result<Grid> {
        let mut g = self.fidelity_grad(u)?;
        g.scaled_add(
            self.config.s_r(),
            &tv_eps_grad(&(u - v), self.config.tv_epsilon),
        );
        Ok(g)
    }

    pub fn terms(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
    ) -> Result<ObjectiveTerms> {
        self.check(u, latents, kernels)?;
        let pass = self.pass(latents, kernels)?;
        Ok(ObjectiveTerms {
            fidelity: self.fidelity(u)?,
            tv: self.config.s_r() * tv_eps(&(u - &pass.v), self.config.tv_epsilon),
            l1: l1_value(latents, self.config.s_g()),
            coupling: coupling_from_residuals(&pass.residuals, self.config.gamma),
            feasible: self.problem.is_feasible(u, 1e-9)?
                && kernels_feasible(kernels, KERNEL_TOLERANCE.max(1e-10)),
        })
    }

    /// The smooth coupling `H = lambda D^1(Au) + s_R TV_eps(u - v) + coupling`.
    pub fn h_value(&self, u: &Grid, latents: &LatentStack, kernels: &KernelSet) -> Result<f64> {
        self.check(u, latents, kernels)?;
        let pass = self.pass(latents, kernels)?;
        self.h_from_pass(u, &pass)
    }

    /// The full objective; `+inf` outside the constraint sets.
    pub fn objective_value(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
    ) -> Result<f64> {
        Ok(self.terms(u, latents, kernels)?.total())
    }

    pub fn grad_h(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
        block: Block,
    ) -> Result<BlockGradient> {
        self.check(u, latents, kernels)?;
        Ok(match block {
            Block::Image => {
                let pass = self.pass(latents, kernels)?;
                BlockGradient::Image(self.grad_image(u, &pass.v)?)
            }
            Block::Latents => BlockGradient::Latents(self.grad_latents(u, latents, kernels)?),
            Block::Kernels => BlockGradient::Kernels(self.grad_kernels(u, latents, kernels)?),
        })
    }

    fn h_from_pass(&self, u: &Grid, pass: &NetworkPass) -> Result<f64> {
        Ok(self.fidelity(u)?
            + self.config.s_r() * tv_eps(&(u - &pass.v), self.config.tv_epsilon)
            + coupling_from_residuals(&pass.residuals, self.config.gamma))
    }

    /// Gradient of `H` with respect to every latent grid.
    pub fn grad_latents(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
    ) -> Result<LatentStack> {
        self.check(u, latents, kernels)?;
        let pass = self.pass(latents, kernels)?;
        self.latent_grad_from_pass(u, latents, kernels, &pass)
    }

    /// `H` and its latent gradient from a single network pass.
    pub fn h_and_grad_latents(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
    ) -> Result<(f64, LatentStack)> {
        self.check(u, latents, kernels)?;
        let pass = self.pass(latents, kernels)?;
        Ok((
            self.h_from_pass(u, &pass)?,
            self.latent_grad_from_pass(u, latents, kernels, &pass)?,
        ))
    }

    fn latent_grad_from_pass(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
        pass: &NetworkPass,
    ) -> Result<LatentStack> {
        let plan = self.plan.truncated(latents.depth());
        let s_r = self.config.s_r();
        let gamma = self.config.gamma;
        let tv_grad = tv_eps_grad(&(u - &pass.v), self.config.tv_epsilon);
        let depth = latents.depth();
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let shape = plan.layers[l];
            let grads: Result<Vec<Grid>> = (0..latents.channels())
                .into_par_iter()
                .map(|n| {
                    let theta = &kernels.layers[l][n];
                    let mut g = if l == 0 {
                        upconv_adjoint_latent(
                            &tv_grad,
                            theta,
                            shape.stride,
                            shape.latent,
                            shape.interp,
                        )? * (-s_r)
                    } else {
                        let r = &pass.residuals[l - 1][n];
                        let w = -gamma / r.len() as f64;
                        upconv_adjoint_latent(r, theta, shape.stride, shape.latent, shape.interp)?
                            * w
                    };
                    if l + 1 < depth {
                        let r = &pass.residuals[l][n];
                        g.scaled_add(gamma / r.len() as f64, r);
                    }
                    Ok(g)
                })
                .collect();
            layers.push(grads?);
        }
        Ok(LatentStack { layers })
    }

    /// Gradient of `H` with respect to the kernels of the active layers.
    /// Kernels of inactive (deeper) layers get zero gradient.
    pub fn grad_kernels(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
    ) -> Result<KernelSet> {
        self.check(u, latents, kernels)?;
        let pass = self.pass(latents, kernels)?;
        self.kernel_grad_from_pass(u, latents, kernels, &pass)
    }

    /// `H` and its kernel gradient from a single network pass.
    pub fn h_and_grad_kernels(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
    ) -> Result<(f64, KernelSet)> {
        self.check(u, latents, kernels)?;
        let pass = self.pass(latents, kernels)?;
        Ok((
            self.h_from_pass(u, &pass)?,
            self.kernel_grad_from_pass(u, latents, kernels, &pass)?,
        ))
    }

    fn kernel_grad_from_pass(
        &self,
        u: &Grid,
        latents: &LatentStack,
        kernels: &KernelSet,
        pass: &NetworkPass,
    ) -> Result<KernelSet> {
        let plan = self.plan.truncated(latents.depth());
        let s_r = self.config.s_r();
        let gamma = self.config.gamma;
        let r = self.plan.kernel_size;
        let tv_grad = tv_eps_grad(&(u - &pass.v), self.config.tv_epsilon);
        let mut out = KernelSet::zeros(kernels.depth(), kernels.channels(), r);
        for l in 0..latents.depth() {
            let shape = plan.layers[l];
            let grads: Result<Vec<Grid>> = (0..latents.channels())
                .into_par_iter()
                .map(|n| {
                    let mu = &latents.layers[l][n];
                    if l == 0 {
                        Ok(
                            upconv_adjoint_kernel(&tv_grad, mu, shape.stride, shape.interp, r)?
                                * (-s_r),
                        )
                    } else {
                        let res = &pass.residuals[l - 1][n];
                        let w = -gamma / res.len() as f64;
                        Ok(upconv_adjoint_kernel(res, mu, shape.stride, shape.interp, r)? * w)
                    }
                })
                .collect();
            out.layers[l] = grads?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{derive_size_plan, strided_upconvolve};
    use crate::forward::{Degradation, ProblemSpec};
    use crate::grid::raw_sq_norm;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, dims: (usize, usize)) -> Grid {
        Grid::from_shape_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn balance_weights() {
        let mut cfg = ModelConfig::default();
        assert_relative_eq!(cfg.s_r(), 0.925 / 0.075, epsilon = 1e-12);
        assert_relative_eq!(cfg.s_g(), 1.0, epsilon = 1e-12);
        cfg.nu = 0.3;
        assert_relative_eq!(cfg.s_r(), 1.0);
        assert_relative_eq!(cfg.s_g(), 0.7 / 0.3, epsilon = 1e-12);
        assert!(cfg.s_r().min(cfg.s_g()) == 1.0);
    }

    #[test]
    fn config_validation_names_the_problem() {
        let mut cfg = ModelConfig {
            nu: 1.5,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(GenregError::Config(m)) if m.contains("nu")));
        cfg.nu = 0.5;
        cfg.strides = vec![2, 2, 2];
        assert!(cfg.validate().is_err());
        cfg.strides = vec![1, 2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tv_examples() {
        assert_relative_eq!(
            tv_eps(&Grid::from_elem((4, 3), 0.7), 0.05),
            0.05f64.sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(tv_eps(&Grid::zeros((2, 2)), 1.0), 1.0);
        let u = array![[0.0, 1.0]];
        assert_relative_eq!(tv_eps(&u, 0.05), 0.6241509, epsilon = 1e-7);
        assert_relative_eq!(
            tv_eps(&u, 0.05),
            (1.05f64.sqrt() + 0.05f64.sqrt()) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_grid(&mut rng, (8, 8));
        let g = tv_eps_grad(&u, 0.05);
        let h = 1e-6;
        let mut num = Grid::zeros((8, 8));
        for idx in 0..64 {
            let (i, j) = (idx / 8, idx % 8);
            let mut p = u.clone();
            p[[i, j]] += h;
            let mut m = u.clone();
            m[[i, j]] -= h;
            num[[i, j]] = (tv_eps(&p, 0.05) - tv_eps(&m, 0.05)) / (2.0 * h);
        }
        let rel = raw_sq_norm(&(&g - &num)).sqrt() / raw_sq_norm(&num).sqrt();
        assert!(rel < 1e-6, "relative error {rel}");
        assert_eq!(
            tv_eps_grad(&Grid::from_elem((5, 5), 3.0), 0.05),
            Grid::zeros((5, 5))
        );

        // chain rule: d/du TV(a u) = a * TV'(a u)
        let a = 2.5;
        let scaled = &u * a;
        let lhs = tv_eps_grad(&scaled, 0.05) * a;
        let mut p = u.clone();
        p[[3, 4]] += h;
        let mut m = u.clone();
        m[[3, 4]] -= h;
        let fd = (tv_eps(&(&p * a), 0.05) - tv_eps(&(&m * a), 0.05)) / (2.0 * h);
        assert_relative_eq!(lhs[[3, 4]], fd, max_relative = 1e-6);
    }

    #[test]
    fn tv_is_translation_invariant_and_bounded_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_grid(&mut rng, (6, 9));
        let shifted = &u + 3.0;
        assert_relative_eq!(tv_eps(&u, 0.05), tv_eps(&shifted, 0.05), epsilon = 1e-14);
        assert!(tv_eps(&u, 0.05) > 0.05f64.sqrt());
    }

    fn two_layer_setup(dims: (usize, usize)) -> (ModelConfig, SizePlan) {
        let cfg = ModelConfig {
            layers: 2,
            channels: 1,
            kernel_size: 3,
            strides: vec![1, 2],
            ..ModelConfig::default()
        };
        let plan = derive_size_plan(dims.0, dims.1, &cfg).unwrap();
        (cfg, plan)
    }

    #[test]
    fn coupling_examples() {
        let (cfg, plan) = two_layer_setup((6, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut latents = LatentStack::zeros(&plan, 1);
        let mut kernels = KernelSet::zeros(2, 1, 3);
        latents.layers[0][0] = random_grid(&mut rng, plan.layers[0].latent);
        // zero kernels: coupling is gamma/2 * normalized |mu^1|^2
        let expect = cfg.gamma / 2.0 * normalized_norm(&latents.layers[0][0], 2.0).powi(2);
        assert_relative_eq!(
            coupling_value(&latents, &kernels, &plan, cfg.gamma).unwrap(),
            expect,
            max_relative = 1e-14
        );

        // exact chaining gives zero
        kernels.layers[1][0] = random_grid(&mut rng, (3, 3));
        latents.layers[1][0] = random_grid(&mut rng, plan.layers[1].latent);
        let s = plan.layers[1];
        latents.layers[0][0] = strided_upconvolve(
            &latents.layers[1][0],
            &kernels.layers[1][0],
            s.stride,
            s.interp,
        )
        .unwrap();
        assert_eq!(
            coupling_value(&latents, &kernels, &plan, cfg.gamma).unwrap(),
            0.0
        );

        let shallow = LatentStack {
            layers: vec![latents.layers[0].clone()],
        };
        assert_eq!(
            coupling_value(&shallow, &kernels, &plan, cfg.gamma).unwrap(),
            0.0
        );
    }

    #[test]
    fn h_and_objective_examples() {
        let cfg = ModelConfig {
            layers: 1,
            channels: 2,
            kernel_size: 3,
            strides: vec![1],
            ..ModelConfig::default()
        };
        let plan = derive_size_plan(5, 5, &cfg).unwrap();
        let latents = LatentStack::zeros(&plan, 2);
        let kernels = KernelSet::zeros(1, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = random_grid(&mut rng, (5, 5));

        let denoise = ProblemSpec::new(Degradation::Denoise, y.clone()).unwrap();
        let e = Energy::new(&denoise, &cfg, &plan);
        assert_relative_eq!(
            e.h_value(&y, &latents, &kernels).unwrap(),
            cfg.s_r() * tv_eps(&y, cfg.tv_epsilon),
            max_relative = 1e-14
        );

        let zero = ProblemSpec::new(Degradation::Denoise, Grid::zeros((5, 5))).unwrap();
        let e = Energy::new(&zero, &cfg, &plan);
        assert_relative_eq!(
            e.objective_value(&Grid::zeros((5, 5)), &latents, &kernels)
                .unwrap(),
            cfg.s_r() * cfg.tv_epsilon.sqrt(),
            max_relative = 1e-14
        );

        let mask = Grid::from_shape_fn((5, 5), |(i, j)| ((i + j) % 2) as f64);
        let c = Grid::from_elem((5, 5), 0.4);
        let inpaint =
            ProblemSpec::new(Degradation::Inpaint { mask: mask.clone() }, &mask * &c).unwrap();
        let e = Energy::new(&inpaint, &cfg, &plan);
        assert_relative_eq!(
            e.h_value(&c, &latents, &kernels).unwrap(),
            cfg.s_r() * cfg.tv_epsilon.sqrt(),
            max_relative = 1e-14
        );
        // infeasible data or kernels give +inf
        assert_eq!(
            e.objective_value(&(&c + 1.0), &latents, &kernels).unwrap(),
            f64::INFINITY
        );
        let mut bad = kernels.clone();
        bad.layers[0][0][[0, 0]] = 2.0;
        assert_eq!(
            e.objective_value(&c, &latents, &bad).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn h_plus_nonsmooth_terms_is_the_objective() {
        let (mut cfg, plan) = two_layer_setup((7, 7));
        cfg.channels = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut latents = LatentStack::zeros(&plan, 2);
        for g in latents.grids_mut() {
            *g = random_grid(&mut rng, g.dim());
        }
        let mut kernels = KernelSet::zeros(2, 2, 3);
        for g in kernels.grids_mut() {
            *g = random_grid(&mut rng, (3, 3)) * 0.2;
        }
        kernels = crate::prox::project_kernels(&kernels);
        let y = random_grid(&mut rng, (7, 7));
        let prob = ProblemSpec::new(Degradation::Denoise, y).unwrap();
        let e = Energy::new(&prob, &cfg, &plan);
        let u = random_grid(&mut rng, (7, 7));
        let h = e.h_value(&u, &latents, &kernels).unwrap();
        let obj = e.objective_value(&u, &latents, &kernels).unwrap();
        assert_relative_eq!(obj, h + l1_value(&latents, cfg.s_g()), max_relative = 1e-14);
    }

    #[test]
    fn zero_residuals_give_zero_coupling_gradient() {
        // u - v constant and exact chaining: every block gradient vanishes
        let (cfg, plan) = two_layer_setup((6, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut kernels = KernelSet::zeros(2, 1, 3);
        kernels.layers[0][0] = random_grid(&mut rng, (3, 3));
        kernels.layers[1][0] = random_grid(&mut rng, (3, 3));
        let mut latents = LatentStack::zeros(&plan, 1);
        latents.layers[1][0] = random_grid(&mut rng, plan.layers[1].latent);
        let s = plan.layers[1];
        latents.layers[0][0] = strided_upconvolve(
            &latents.layers[1][0],
            &kernels.layers[1][0],
            s.stride,
            s.interp,
        )
        .unwrap();
        let v = crate::convnet::synthesize(&latents, &kernels, &plan).unwrap();
        let u = &v + 0.25;
        let prob = ProblemSpec::new(Degradation::Denoise, u.clone()).unwrap();
        let e = Energy::new(&prob, &cfg, &plan);
        let gu = e.grad_image(&u, &v).unwrap();
        assert!(gu.iter().all(|x| x.abs() < 1e-12));
        let gl = e.grad_latents(&u, &latents, &kernels).unwrap();
        assert!(gl.raw_sq_norm() < 1e-24);
        let gk = e.grad_kernels(&u, &latents, &kernels).unwrap();
        assert!(gk.raw_sq_norm() < 1e-24);
    }

    #[test]
    fn deepest_latent_gradient_is_scaled_adjoint_of_residual() {
        let (cfg, plan) = two_layer_setup((6, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut kernels = KernelSet::zeros(2, 1, 3);
        let mut latents = LatentStack::zeros(&plan, 1);
        for g in kernels.grids_mut() {
            *g = random_grid(&mut rng, (3, 3));
        }
        for g in latents.grids_mut() {
            *g = random_grid(&mut rng, g.dim());
        }
        let u = random_grid(&mut rng, (6, 6));
        let prob = ProblemSpec::new(Degradation::Denoise, u.clone()).unwrap();
        let e = Energy::new(&prob, &cfg, &plan);
        let gl = e.grad_latents(&u, &latents, &kernels).unwrap();
        let s = plan.layers[1];
        let resid = &latents.layers[0][0]
            - &strided_upconvolve(
                &latents.layers[1][0],
                &kernels.layers[1][0],
                s.stride,
                s.interp,
            )
            .unwrap();
        let expected =
            upconv_adjoint_latent(&resid, &kernels.layers[1][0], s.stride, s.latent, s.interp)
                .unwrap()
                * (-cfg.gamma / resid.len() as f64);
        // brute force over basis perturbations of the coupling alone
        let h = 1e-6;
        for k in 0..s.latent.0 {
            for l in 0..s.latent.1 {
                let mut p = latents.clone();
                p.layers[1][0][[k, l]] += h;
                let mut m = latents.clone();
                m.layers[1][0][[k, l]] -= h;
                let fd = (coupling_value(&p, &kernels, &plan, cfg.gamma).unwrap()
                    - coupling_value(&m, &kernels, &plan, cfg.gamma).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(expected[[k, l]], fd, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
        for (a, b) in gl.layers[1][0].iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }
}
