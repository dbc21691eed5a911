//! Inertial proximal alternating linearized minimization over the blocks
//! `u` (image), `mu` (latents) and `theta` (kernels), with backtracking on
//! the per-block Lipschitz estimates and a progressive-depth start.

use crate::block::BlockVariable;
use crate::convnet::{
    derive_size_plan, strided_upconvolve, synthesize, upconv_adjoint_latent, KernelSet,
    LatentStack, SizePlan,
};
use crate::energy::{coupling_value, Block, Energy, ModelConfig, ObjectiveTerms};
use crate::error::{GenregError, Result};
use crate::forward::{NoiseSource, ProblemSpec};
use crate::grid::Grid;
use crate::prox::{project_kernels, prox_data, prox_l1, ProxContext};

/// Algorithm parameters. Per-block arrays are ordered image, latents, kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgoParams {
    /// The algorithmic epsilon (distinct from the TV smoothing).
    pub alg_epsilon: f64,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    /// Iterations at full network depth.
    pub iterations: usize,
    /// Iterations run at each intermediate depth of the progressive start.
    pub warmup: usize,
    pub lipschitz_init: [f64; 3],
    /// Factor applied to `L` after each failed backtracking test.
    pub growth: f64,
    /// If set, `L` is divided by this factor before each backtracking search.
    pub shrink: Option<f64>,
    pub max_backtracks: usize,
    /// Start deconvolution from `A^T y` instead of `y`.
    pub adjoint_start: bool,
}

impl Default for AlgoParams {
    fn default() -> Self {
        AlgoParams {
            alg_epsilon: 0.03,
            alpha: [0.7; 3],
            beta: [0.7; 3],
            iterations: 8000,
            warmup: 200,
            lipschitz_init: [1.0; 3],
            growth: 2.0,
            shrink: Some(2.0),
            max_backtracks: 200,
            adjoint_start: false,
        }
    }
}

impl AlgoParams {
    /// Plain PALM: no inertia.
    pub fn without_inertia(mut self) -> Self {
        self.alpha = [0.0; 3];
        self.beta = [0.0; 3];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(GenregError::Config(m));
        let eps = self.alg_epsilon;
        if !(eps > 0.0 && eps < 1.0) {
            return fail("alg_epsilon must lie in (0, 1)".into());
        }
        for (name, vals) in [("alpha", self.alpha), ("beta", self.beta)] {
            if vals.iter().any(|&w| !(0.0..1.0 - eps).contains(&w)) {
                return fail(format!("{name} must lie in [0, 1 - alg_epsilon)"));
            }
        }
        if self
            .lipschitz_init
            .iter()
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return fail("lipschitz_init must be positive".into());
        }
        if self.growth.is_nan() || self.growth <= 1.0 {
            return fail("backtrack_growth must exceed 1".into());
        }
        if let Some(s) = self.shrink {
            if s.is_nan() || s < 1.0 {
                return fail("backtrack_shrink must be at least 1".into());
            }
        }
        if self.max_backtracks == 0 {
            return fail("max_backtracks must be positive".into());
        }
        Ok(())
    }
}

/// `x + weight * (x - x_prev)`.
pub fn extrapolate<X: BlockVariable>(x: &X, x_prev: &X, weight: f64) -> X {
    x.extrapolate(x_prev, weight)
}

/// Step `tau` for inertial weights `alpha`, `beta` and Lipschitz estimate `lm`:
/// `delta = (alpha + 2 beta) / (2 (1 - eps - alpha)) * lm`,
/// `tau = ((1 + eps) delta + (1 + beta) lm) / (2 - alpha)`.
pub fn step_size(alpha: f64, beta: f64, eps: f64, lm: f64) -> Result<f64> {
    if alpha >= 1.0 - eps {
        return Err(GenregError::Config(format!(
            "alpha = {alpha} must be below 1 - epsilon = {}",
            1.0 - eps
        )));
    }
    let delta = (alpha + 2.0 * beta) / (2.0 * (1.0 - eps - alpha)) * lm;
    Ok(((1.0 + eps) * delta + (1.0 + beta) * lm) / (2.0 - alpha))
}

/// Outcome of one block update.
#[derive(Clone, Debug)]
pub struct BlockStep<X> {
    pub value: X,
    pub lipschitz: f64,
    pub step: f64,
    /// Number of times `L` was increased.
    pub growths: usize,
}

/// The smooth part and the prox of one block, with all other blocks fixed.
pub trait BlockProblem<X> {
    fn h(&self, x: &X) -> Result<f64>;
    fn grad(&self, x: &X) -> Result<X>;
    fn prox(&self, x: &X, step: f64) -> Result<X>;

    /// `h` and its gradient together; override when they share work.
    fn h_and_grad(&self, x: &X) -> Result<(f64, X)> {
        Ok((self.h(x)?, self.grad(x)?))
    }
}

/// Inertial weights and bookkeeping for one backtracking search.
#[derive(Clone, Copy, Debug)]
pub struct BacktrackSettings {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub l_start: f64,
    pub growth: f64,
    pub max_steps: usize,
}

/// One iPALM block update: extrapolate, then search `L = l_start * growth^k`
/// for the first value whose prox-gradient candidate satisfies the descent
/// and Lipschitz inequalities (raw norms).
pub fn backtrack<X: BlockVariable, P: BlockProblem<X>>(
    name: &'static str,
    x: &X,
    x_prev: &X,
    problem: &P,
    s: BacktrackSettings,
) -> Result<BlockStep<X>> {
    let y = x.extrapolate(x_prev, s.alpha);
    let z = x.extrapolate(x_prev, s.beta);
    let z_dist = z.difference(x).raw_sq_norm().sqrt();
    let moved = z_dist > 0.0;
    let (h_x, g_x) = problem.h_and_grad(x)?;
    let g_z = if moved {
        problem.grad(&z)?
    } else {
        g_x.clone()
    };
    let g_dist = g_z.difference(&g_x).raw_sq_norm().sqrt();

    let mut lm = s.l_start;
    for growths in 0..=s.max_steps {
        if g_dist <= lm * z_dist || !moved {
            let tau = step_size(s.alpha, s.beta, s.eps, lm)?;
            let mut point = y.clone();
            point.add_scaled(-1.0 / tau, &g_z);
            let cand = problem.prox(&point, tau)?;
            let d = cand.difference(x);
            let h_c = problem.h(&cand)?;
            let bound = h_x + d.dot(&g_x) + 0.5 * lm * d.raw_sq_norm();
            // allow for roundoff in evaluating the two energies
            let slack = 8.0 * f64::EPSILON * (h_x.abs() + h_c.abs());
            if h_c.is_finite() && h_c <= bound + slack {
                return Ok(BlockStep {
                    value: cand,
                    lipschitz: lm,
                    step: tau,
                    growths,
                });
            }
        }
        lm *= s.growth;
    }
    Err(GenregError::Backtracking {
        block: name,
        steps: s.max_steps,
        lipschitz: lm,
    })
}

/// One row of the objective trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    /// 1-based index over all iterations, warmup included.
    pub iteration: usize,
    /// Network depth during this iteration.
    pub stage: usize,
    pub objective: f64,
    pub terms: ObjectiveTerms,
}

/// Iterates of the three blocks, their previous values, the Lipschitz
/// estimates and the objective trace.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub u: Grid,
    pub u_prev: Grid,
    pub latents: LatentStack,
    pub latents_prev: LatentStack,
    pub kernels: KernelSet,
    pub kernels_prev: KernelSet,
    pub lipschitz: [f64; 3],
    pub iteration: usize,
    pub trace: Vec<TraceEntry>,
}

impl SolverState {
    /// Current network depth.
    pub fn stage(&self) -> usize {
        self.latents.depth()
    }

    /// Drops the inertia: previous iterates equal the current ones.
    fn reset_momentum(&mut self) {
        self.u_prev = self.u.clone();
        self.latents_prev = self.latents.clone();
        self.kernels_prev = self.kernels.clone();
    }
}

/// Final reconstruction and network.
#[derive(Clone, Debug)]
pub struct Solution {
    pub u: Grid,
    pub latents: LatentStack,
    pub kernels: KernelSet,
    /// Generative image part `v`.
    pub generative: Grid,
    pub trace: Vec<TraceEntry>,
    pub plan: SizePlan,
}

struct ImageBlock<'e, 'a> {
    energy: &'e Energy<'a>,
    v: Grid,
    coupling: f64,
}

impl BlockProblem<Grid> for ImageBlock<'_, '_> {
    fn h(&self, u: &Grid) -> Result<f64> {
        self.energy.h_image(u, &self.v, self.coupling)
    }

    fn grad(&self, u: &Grid) -> Result<Grid> {
        self.energy.grad_image(u, &self.v)
    }

    fn prox(&self, u: &Grid, _step: f64) -> Result<Grid> {
        prox_data(u, self.energy.problem)
    }
}

struct LatentBlock<'e, 'a> {
    energy: &'e Energy<'a>,
    u: &'e Grid,
    kernels: &'e KernelSet,
}

impl BlockProblem<LatentStack> for LatentBlock<'_, '_> {
    fn h(&self, mu: &LatentStack) -> Result<f64> {
        self.energy.h_value(self.u, mu, self.kernels)
    }

    fn grad(&self, mu: &LatentStack) -> Result<LatentStack> {
        self.energy.grad_latents(self.u, mu, self.kernels)
    }

    fn h_and_grad(&self, mu: &LatentStack) -> Result<(f64, LatentStack)> {
        self.energy.h_and_grad_latents(self.u, mu, self.kernels)
    }

    fn prox(&self, mu: &LatentStack, step: f64) -> Result<LatentStack> {
        let ctx = ProxContext::for_latents(step, self.energy.config.s_g(), mu);
        Ok(prox_l1(mu, &ctx))
    }
}

struct KernelBlock<'e, 'a> {
    energy: &'e Energy<'a>,
    u: &'e Grid,
    latents: &'e LatentStack,
}

impl BlockProblem<KernelSet> for KernelBlock<'_, '_> {
    fn h(&self, theta: &KernelSet) -> Result<f64> {
        self.energy.h_value(self.u, self.latents, theta)
    }

    fn grad(&self, theta: &KernelSet) -> Result<KernelSet> {
        self.energy.grad_kernels(self.u, self.latents, theta)
    }

    fn h_and_grad(&self, theta: &KernelSet) -> Result<(f64, KernelSet)> {
        self.energy.h_and_grad_kernels(self.u, self.latents, theta)
    }

    fn prox(&self, theta: &KernelSet, _step: f64) -> Result<KernelSet> {
        Ok(project_kernels(theta))
    }
}

/// Drives the iteration for one problem.
pub struct Solver<'a> {
    pub problem: &'a ProblemSpec,
    pub config: &'a ModelConfig,
    pub algo: &'a AlgoParams,
    pub plan: SizePlan,
    noise: NoiseSource,
}

impl<'a> Solver<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        config: &'a ModelConfig,
        algo: &'a AlgoParams,
        seed: u64,
    ) -> Result<Self> {
        algo.validate()?;
        problem.validate()?;
        let (nx, ny) = problem.image_dims;
        let plan = derive_size_plan(nx, ny, config)?;
        Ok(Solver {
            problem,
            config,
            algo,
            plan,
            noise: NoiseSource::new(seed),
        })
    }

    fn energy(&self) -> Energy<'_> {
        Energy::new(self.problem, self.config, &self.plan)
    }

    fn random_kernels(&mut self, count: usize) -> Vec<Grid> {
        let r = self.config.kernel_size;
        let bound = 1.0 / r as f64;
        (0..count)
            .map(|_| Grid::from_shape_fn((r, r), |_| self.noise.uniform_in(-bound, bound)))
            .collect()
    }

    /// A depth-1 state: the task's starting image, zero latents and random
    /// projected kernels.
    pub fn initial_state(&mut self) -> Result<SolverState> {
        let u = self.problem.initial_image(self.algo.adjoint_start)?;
        let channels = self.config.channels;
        let latents = LatentStack::zeros(&self.plan.truncated(1), channels);
        let kernels = project_kernels(&KernelSet {
            layers: vec![self.random_kernels(channels)],
        });
        Ok(SolverState {
            u_prev: u.clone(),
            u,
            latents_prev: latents.clone(),
            latents,
            kernels_prev: kernels.clone(),
            kernels,
            lipschitz: self.algo.lipschitz_init,
            iteration: 0,
            trace: Vec::new(),
        })
    }

    /// Adds one layer: random new kernels, new latents from the adjoint of
    /// their upconvolution applied to the current deepest latents, and
    /// shallower latents reset to the outputs of the layer below so that
    /// every coupling term vanishes.
    pub fn grow(&mut self, state: &mut SolverState) -> Result<()> {
        let depth = state.stage();
        if depth >= self.config.layers {
            return Err(GenregError::Config(format!(
                "network already has {depth} layers"
            )));
        }
        let shape = self.plan.layers[depth];
        let new_kernels = project_kernels(&KernelSet {
            layers: vec![self.random_kernels(self.config.channels)],
        })
        .layers
        .remove(0);
        let new_latents: Vec<Grid> = state.latents.layers[depth - 1]
            .iter()
            .zip(&new_kernels)
            .map(|(mu, theta)| {
                upconv_adjoint_latent(mu, theta, shape.stride, shape.latent, shape.interp)
            })
            .collect::<Result<_>>()?;
        state.kernels.layers.push(new_kernels);
        state.latents.layers.push(new_latents);
        for l in (0..depth).rev() {
            let shape = self.plan.layers[l + 1];
            for n in 0..self.config.channels {
                state.latents.layers[l][n] = strided_upconvolve(
                    &state.latents.layers[l + 1][n],
                    &state.kernels.layers[l + 1][n],
                    shape.stride,
                    shape.interp,
                )?;
            }
        }
        state.reset_momentum();
        Ok(())
    }

    fn settings(&self, block: usize, l_prev: f64) -> BacktrackSettings {
        BacktrackSettings {
            alpha: self.algo.alpha[block],
            beta: self.algo.beta[block],
            eps: self.algo.alg_epsilon,
            l_start: self.algo.shrink.map_or(l_prev, |s| l_prev / s),
            growth: self.algo.growth,
            max_steps: self.algo.max_backtracks,
        }
    }

    /// One sweep over the image, latent and kernel blocks. `observer` sees
    /// the state after every block update.
    pub fn iterate(
        &self,
        state: &mut SolverState,
        observer: &mut dyn FnMut(Block, &SolverState),
    ) -> Result<()> {
        let energy = self.energy();
        let plan = self.plan.truncated(state.stage());

        let image = ImageBlock {
            v: synthesize(&state.latents, &state.kernels, &plan)?,
            coupling: coupling_value(&state.latents, &state.kernels, &plan, self.config.gamma)?,
            energy: &energy,
        };
        let step = backtrack(
            "image",
            &state.u,
            &state.u_prev,
            &image,
            self.settings(0, state.lipschitz[0]),
        )?;
        state.u_prev = std::mem::replace(&mut state.u, step.value);
        state.lipschitz[0] = step.lipschitz;
        observer(Block::Image, state);

        let latent = LatentBlock {
            energy: &energy,
            u: &state.u,
            kernels: &state.kernels,
        };
        let step = backtrack(
            "latent",
            &state.latents,
            &state.latents_prev,
            &latent,
            self.settings(1, state.lipschitz[1]),
        )?;
        state.latents_prev = std::mem::replace(&mut state.latents, step.value);
        state.lipschitz[1] = step.lipschitz;
        observer(Block::Latents, state);

        let kernel = KernelBlock {
            energy: &energy,
            u: &state.u,
            latents: &state.latents,
        };
        let step = backtrack(
            "kernel",
            &state.kernels,
            &state.kernels_prev,
            &kernel,
            self.settings(2, state.lipschitz[2]),
        )?;
        state.kernels_prev = std::mem::replace(&mut state.kernels, step.value);
        state.lipschitz[2] = step.lipschitz;
        observer(Block::Kernels, state);

        state.iteration += 1;
        let terms = energy.terms(&state.u, &state.latents, &state.kernels)?;
        let objective = terms.total();
        if !objective.is_finite() {
            return Err(GenregError::NonFinite(state.iteration));
        }
        state.trace.push(TraceEntry {
            iteration: state.iteration,
            stage: state.stage(),
            objective,
            terms,
        });
        Ok(())
    }

    fn run(
        &self,
        state: &mut SolverState,
        iterations: usize,
        observer: &mut dyn FnMut(Block, &SolverState),
    ) -> Result<()> {
        for _ in 0..iterations {
            self.iterate(state, observer)?;
        }
        Ok(())
    }

    /// Grows the network from one layer to full depth, running the warmup
    /// iterations at every depth below the full one.
    pub fn progressive_init(
        &mut self,
        observer: &mut dyn FnMut(Block, &SolverState),
    ) -> Result<SolverState> {
        let mut state = self.initial_state()?;
        for _ in 1..self.config.layers {
            self.run(&mut state, self.algo.warmup, observer)?;
            self.grow(&mut state)?;
        }
        Ok(state)
    }

    pub fn solve_observed(
        &mut self,
        observer: &mut dyn FnMut(Block, &SolverState),
    ) -> Result<Solution> {
        let mut state = self.progressive_init(observer)?;
        self.run(&mut state, self.algo.iterations, observer)?;
        let generative = synthesize(&state.latents, &state.kernels, &self.plan)?;
        Ok(Solution {
            u: state.u,
            latents: state.latents,
            kernels: state.kernels,
            generative,
            trace: state.trace,
            plan: self.plan.clone(),
        })
    }
}

/// Progressive-depth start: returns the full-depth state after all warmup stages.
pub fn progressive_init(
    problem: &ProblemSpec,
    config: &ModelConfig,
    algo: &AlgoParams,
    seed: u64,
) -> Result<SolverState> {
    Solver::new(problem, config, algo, seed)?.progressive_init(&mut |_, _| {})
}

pub fn solve(
    problem: &ProblemSpec,
    config: &ModelConfig,
    algo: &AlgoParams,
    seed: u64,
) -> Result<Solution> {
    Solver::new(problem, config, algo, seed)?.solve_observed(&mut |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::coupling_value;
    use crate::forward::{simulate_corruption, Degradation, Recipe};
    use approx::assert_relative_eq;

    #[test]
    fn step_size_examples() {
        let tau = step_size(0.7, 0.7, 0.03, 1.0).unwrap();
        assert_relative_eq!(tau, (1.03 * (2.1 / 0.54) + 1.7) / 1.3, epsilon = 1e-14);
        assert!((tau - 4.388889).abs() < 1e-6);
        assert_relative_eq!(step_size(0.0, 0.0, 0.03, 1.0).unwrap(), 0.5);
        assert_relative_eq!(
            step_size(0.7, 0.7, 0.03, 3.0).unwrap(),
            3.0 * tau,
            epsilon = 1e-13
        );
        assert!(step_size(0.97, 0.0, 0.03, 1.0).is_err());
    }

    #[test]
    fn extrapolation_examples() {
        let x = Grid::from_elem((1, 1), 1.0);
        let prev = Grid::zeros((1, 1));
        assert_eq!(extrapolate(&x, &prev, 0.0), x);
        assert_eq!(extrapolate(&x, &x, 0.7), x);
        assert_relative_eq!(extrapolate(&x, &prev, 0.7)[[0, 0]], 1.7);
    }

    /// `h(x) = c/2 |x|^2` with no nonsmooth part.
    struct Quadratic {
        curvature: f64,
    }

    impl BlockProblem<Grid> for Quadratic {
        fn h(&self, x: &Grid) -> Result<f64> {
            Ok(0.5 * self.curvature * crate::grid::raw_sq_norm(x))
        }
        fn grad(&self, x: &Grid) -> Result<Grid> {
            Ok(x * self.curvature)
        }
        fn prox(&self, x: &Grid, _step: f64) -> Result<Grid> {
            Ok(x.clone())
        }
    }

    fn settings(l_start: f64) -> BacktrackSettings {
        BacktrackSettings {
            alpha: 0.0,
            beta: 0.0,
            eps: 0.03,
            l_start,
            growth: 2.0,
            max_steps: 60,
        }
    }

    #[test]
    fn backtracking_on_a_quadratic() {
        let x = Grid::from_shape_fn((3, 3), |(i, j)| (i as f64) - (j as f64) * 0.5 + 0.1);
        let q = Quadratic { curvature: 5.0 };
        let step = backtrack("test", &x, &x, &q, settings(0.01)).unwrap();
        assert!(step.lipschitz <= 2.0 * 5.0);
        assert!(step.growths > 0);
        // already sufficient: no growth
        let step = backtrack("test", &x, &x, &q, settings(6.0)).unwrap();
        assert_eq!(step.growths, 0);
        assert_eq!(step.lipschitz, 6.0);
    }

    #[test]
    fn backtracking_checks_use_raw_norms() {
        // 1-D: h = x^2 (curvature 2), x = 1. With L = 1: tau = 1/2, candidate
        // 1 - 2/0.5 = -3; h(-3) = 9 > 1 + (-4)(2) + 0.5 * 16 = 1. With L = 2:
        // tau = 1, candidate -1, h = 1 <= 1 - 4 + 4 = 1: accepted.
        let x = Grid::from_elem((1, 1), 1.0);
        let q = Quadratic { curvature: 2.0 };
        let step = backtrack("test", &x, &x, &q, settings(1.0)).unwrap();
        assert_eq!(step.lipschitz, 2.0);
        assert_eq!(step.growths, 1);
        assert_relative_eq!(step.value[[0, 0]], -1.0);
        assert_relative_eq!(step.step, 1.0);
    }

    #[test]
    fn backtracking_gives_up() {
        let x = Grid::from_elem((1, 1), 1.0);
        let q = Quadratic { curvature: 1e30 };
        let mut s = settings(1.0);
        s.max_steps = 5;
        assert!(matches!(
            backtrack("test", &x, &x, &q, s),
            Err(GenregError::Backtracking { block: "test", .. })
        ));
    }

    fn small_problem() -> (ProblemSpec, ModelConfig) {
        let gt = Grid::from_shape_fn(
            (12, 12),
            |(i, j)| if (i / 3 + j / 4) % 2 == 0 { 0.2 } else { 0.8 },
        );
        let prob = simulate_corruption(&gt, &Recipe::denoise(), 3).unwrap();
        let cfg = ModelConfig {
            layers: 2,
            channels: 2,
            kernel_size: 3,
            strides: vec![1, 2],
            ..ModelConfig::default()
        };
        (prob, cfg)
    }

    #[test]
    fn growing_zeroes_the_coupling() {
        let (prob, cfg) = small_problem();
        let algo = AlgoParams {
            warmup: 5,
            iterations: 0,
            ..AlgoParams::default()
        };
        let mut solver = Solver::new(&prob, &cfg, &algo, 1).unwrap();
        let mut state = solver.initial_state().unwrap();
        assert_eq!(state.stage(), 1);
        solver.run(&mut state, 5, &mut |_, _| {}).unwrap();
        solver.grow(&mut state).unwrap();
        assert_eq!(state.stage(), 2);
        let plan = solver.plan.clone();
        assert_eq!(
            coupling_value(&state.latents, &state.kernels, &plan, cfg.gamma).unwrap(),
            0.0
        );
        assert!(solver.grow(&mut state).is_err());
    }

    #[test]
    fn single_layer_has_one_stage() {
        let (prob, mut cfg) = small_problem();
        cfg.layers = 1;
        let algo = AlgoParams {
            warmup: 50,
            iterations: 0,
            ..AlgoParams::default()
        };
        let state = progressive_init(&prob, &cfg, &algo, 1).unwrap();
        assert_eq!(state.stage(), 1);
        assert!(state.trace.is_empty());
    }

    #[test]
    fn zero_budget_returns_the_start() {
        let (prob, cfg) = small_problem();
        let algo = AlgoParams {
            warmup: 0,
            iterations: 0,
            ..AlgoParams::default()
        };
        let sol = solve(&prob, &cfg, &algo, 9).unwrap();
        assert!(sol.trace.is_empty());
        assert_eq!(sol.u, prob.data);
        assert_eq!(sol.latents.depth(), 2);
    }

    #[test]
    fn initialization_is_deterministic() {
        let (prob, cfg) = small_problem();
        let algo = AlgoParams {
            warmup: 3,
            iterations: 0,
            ..AlgoParams::default()
        };
        let a = progressive_init(&prob, &cfg, &algo, 17).unwrap();
        let b = progressive_init(&prob, &cfg, &algo, 17).unwrap();
        assert_eq!(a.kernels, b.kernels);
        assert_eq!(a.latents, b.latents);
        assert_eq!(a.u, b.u);
        let c = progressive_init(&prob, &cfg, &algo, 18).unwrap();
        assert_ne!(a.kernels, c.kernels);
    }

    #[test]
    fn inpainting_stays_feasible() {
        let gt = Grid::from_shape_fn((12, 12), |(i, j)| ((i * 5 + j * 3) % 7) as f64 / 7.0);
        let prob = simulate_corruption(&gt, &Recipe::inpaint(), 4).unwrap();
        let (_, cfg) = small_problem();
        let algo = AlgoParams {
            warmup: 5,
            iterations: 10,
            ..AlgoParams::default()
        };
        let mut solver = Solver::new(&prob, &cfg, &algo, 2).unwrap();
        let Degradation::Inpaint { mask } = &prob.degradation else {
            unreachable!()
        };
        let mut checks = 0;
        solver
            .solve_observed(&mut |block, state| {
                if block == Block::Image {
                    assert_eq!(mask * &state.u, prob.data);
                    checks += 1;
                }
            })
            .unwrap();
        assert_eq!(checks, 15);
    }
}
