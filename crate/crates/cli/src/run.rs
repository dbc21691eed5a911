//! The reconstruction, corruption and network-sampling commands.

use crate::config::{App, RunConfig};
use crate::error::CliError;
use crate::imageio::{load_image, montage, rescale, save_image};
use genreg::convnet::sample_delta;
use genreg::forward::{
    gaussian_kernel, psnr, ssim, NoiseSource, QuantizedSpectrum, SpectrumEncoding,
};
use genreg::ipalm::TraceEntry;
use genreg::prox::project_kernels;
use genreg::{
    derive_size_plan, simulate_corruption, Degradation, Grid, KernelSet, ModelConfig, ProblemSpec,
    Recipe, Solver,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Contents of `metrics.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Metrics {
    pub application: String,
    /// Against the ground truth; `null` without one (or for identical images).
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// The same metrics for the solver's starting image.
    pub psnr_initial: Option<f64>,
    pub ssim_initial: Option<f64>,
    pub wall_time_seconds: f64,
    pub final_objective: Option<f64>,
    pub iterations: usize,
    pub seed: u64,
    /// `[min, max]` mapped to `[0, 1]` in each rescaled image.
    pub display_ranges: BTreeMap<String, [f64; 2]>,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Builds the problem from observed files, or by corrupting the ground truth.
pub fn load_problem(cfg: &RunConfig) -> Result<(ProblemSpec, Option<Grid>), CliError> {
    let truth = cfg.ground_truth.as_deref().map(load_image).transpose()?;
    if cfg.simulate {
        let gt = truth
            .as_ref()
            .ok_or_else(|| CliError::Config("`ground_truth` is required".into()))?;
        return Ok((simulate_corruption(gt, &cfg.recipe, cfg.seed)?, truth));
    }
    let input = || -> Result<Grid, CliError> {
        load_image(
            cfg.input
                .as_deref()
                .ok_or_else(|| CliError::Config("`input` is required".into()))?,
        )
    };
    let problem = match (cfg.app, &cfg.recipe) {
        (App::Denoise, _) => ProblemSpec::new(Degradation::Denoise, input()?)?,
        (App::Inpaint, _) => {
            let path = cfg
                .mask
                .as_deref()
                .ok_or_else(|| CliError::Config("`mask` is required".into()))?;
            let mask = load_image(path)?.mapv(|x| if x > 0.5 { 1.0 } else { 0.0 });
            let data = input()?;
            if data.dim() != mask.dim() {
                return Err(CliError::Config(format!(
                    "`mask` dims {:?} differ from `input` dims {:?}",
                    mask.dim(),
                    data.dim()
                )));
            }
            let data = &data * &mask;
            ProblemSpec::new(Degradation::Inpaint { mask }, data)?
        }
        (
            App::Deconv,
            Recipe::Deconv {
                half_width, width, ..
            },
        ) => {
            let kernel = gaussian_kernel(*half_width, *width);
            ProblemSpec::new(Degradation::Deconv { kernel }, input()?)?
        }
        (App::SuperRes, Recipe::SuperRes { factor }) => {
            ProblemSpec::new(Degradation::SuperRes { factor: *factor }, input()?)?
        }
        (App::Jpeg, _) => {
            let path = cfg
                .spectrum
                .as_deref()
                .ok_or_else(|| CliError::Config("`spectrum` is required".into()))?;
            ProblemSpec::jpeg(read_spectrum(path)?)?
        }
        (app, recipe) => {
            return Err(CliError::Config(format!(
                "recipe {recipe:?} does not fit `{}`",
                app.name()
            )));
        }
    };
    if let Some(gt) = &truth {
        if gt.dim() != problem.image_dims {
            return Err(CliError::Config(format!(
                "`ground_truth` dims {:?} differ from the reconstruction dims {:?}",
                gt.dim(),
                problem.image_dims
            )));
        }
    }
    Ok((problem, truth))
}

pub fn read_spectrum(path: &Path) -> Result<QuantizedSpectrum, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    QuantizedSpectrum::read_from(BufReader::new(file))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_spectrum(
    spectrum: &QuantizedSpectrum,
    path: &Path,
    encoding: SpectrumEncoding,
) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    spectrum.write_to(&mut w, encoding)?;
    w.flush()?;
    Ok(())
}

pub fn write_trace(trace: &[TraceEntry], path: &Path) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    writeln!(
        w,
        "iter,stage,objective,fidelity_term,tv_term,l1_term,coupling_term"
    )?;
    for e in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.iteration,
            e.stage,
            e.objective,
            e.terms.fidelity,
            e.terms.tv,
            e.terms.l1,
            e.terms.coupling
        )?;
    }
    w.flush()?;
    Ok(())
}

const KERNELS_HEADER: &str = "genreg-kernels 1";

/// One line per kernel (layer-major, then channel), `r*r` row-major values.
pub fn write_kernels(kernels: &KernelSet, path: &Path) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    let r = kernels
        .layers
        .first()
        .and_then(|c| c.first())
        .map_or(0, |g| g.nrows());
    writeln!(w, "{KERNELS_HEADER}")?;
    writeln!(
        w,
        "layers {} channels {} size {r}",
        kernels.depth(),
        kernels.channels()
    )?;
    for theta in kernels.layers.iter().flatten() {
        let vals: Vec<String> = theta.iter().map(|x| format!("{x:?}")).collect();
        writeln!(w, "{}", vals.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_kernels(path: &Path) -> Result<KernelSet, CliError> {
    let bad = |m: &str| CliError::Io(format!("{}: {m}", path.display()));
    let file = File::open(path).map_err(|e| bad(&e.to_string()))?;
    let mut lines = BufReader::new(file).lines();
    let mut next = || -> Result<String, CliError> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file"))?
            .map_err(|e| bad(&e.to_string()))
    };
    if next()?.trim() != KERNELS_HEADER {
        return Err(bad("missing kernels header"));
    }
    let dims = next()?;
    let fields: Vec<&str> = dims.split_whitespace().collect();
    let [_, depth, _, channels, _, r] = fields[..] else {
        return Err(bad("malformed dimension line"));
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad("malformed dimension line"))
    };
    let (depth, channels, r) = (parse(depth)?, parse(channels)?, parse(r)?);
    let mut kernels = KernelSet::zeros(depth, channels, r);
    for theta in kernels.layers.iter_mut().flatten() {
        let vals: Vec<f64> = next()?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("malformed kernel value")))
            .collect::<Result<_, _>>()?;
        if vals.len() != r * r {
            return Err(bad("wrong number of kernel values"));
        }
        *theta = Grid::from_shape_vec((r, r), vals).expect("r*r values");
    }
    Ok(kernels)
}

/// Solves one reconstruction problem and writes every artifact into `cfg.output`.
pub fn run_application(cfg: &RunConfig) -> Result<Metrics, CliError> {
    let (problem, truth) = load_problem(cfg)?;
    let out = &cfg.output;
    create_dir(out)?;
    let bits = cfg.output_bits;
    if cfg.simulate {
        write_observation(&problem, out, bits, cfg.spectrum_encoding)?;
    }

    let start = Instant::now();
    let mut solver = Solver::new(&problem, &cfg.model, &cfg.algo, cfg.seed)?;
    let solution = solver.solve_observed(&mut |_, _| {})?;
    let wall = start.elapsed().as_secs_f64();

    let mut ranges = BTreeMap::new();
    save_image(&solution.u, &out.join("recon.png"), bits)?;
    let (v_shown, range) = rescale(&solution.generative);
    save_image(&v_shown, &out.join("generative.png"), bits)?;
    ranges.insert("generative".to_string(), [range.0, range.1]);
    let (resid_shown, range) = rescale(&(&solution.u - &solution.generative));
    save_image(&resid_shown, &out.join("residual.png"), bits)?;
    ranges.insert("residual".to_string(), [range.0, range.1]);
    let all_kernels: Vec<Grid> = solution.kernels.layers.iter().flatten().cloned().collect();
    let (kern_shown, range) = montage(&all_kernels, solution.kernels.channels());
    save_image(&kern_shown, &out.join("kernels.png"), bits)?;
    ranges.insert("kernels".to_string(), [range.0, range.1]);
    for (l, chans) in solution.latents.layers.iter().enumerate() {
        let (shown, range) = montage(chans, 4);
        let name = format!("latents_layer{}", l + 1);
        save_image(&shown, &out.join(format!("{name}.png")), bits)?;
        ranges.insert(name, [range.0, range.1]);
    }
    write_trace(&solution.trace, &out.join("trace.csv"))?;
    write_kernels(&solution.kernels, &out.join("kernels.txt"))?;

    let initial = problem.initial_image(cfg.algo.adjoint_start)?;
    let quality = |u: &Grid| -> Result<(Option<f64>, Option<f64>), CliError> {
        match &truth {
            Some(gt) => Ok((finite(psnr(u, gt, 1.0)?), finite(ssim(u, gt, 1.0)?))),
            None => Ok((None, None)),
        }
    };
    let (psnr_final, ssim_final) = quality(&solution.u)?;
    let (psnr_initial, ssim_initial) = quality(&initial)?;
    let metrics = Metrics {
        application: cfg.app.name().to_string(),
        psnr: psnr_final,
        ssim: ssim_final,
        psnr_initial,
        ssim_initial,
        wall_time_seconds: wall,
        final_objective: solution.trace.last().map(|e| e.objective),
        iterations: solution.trace.len(),
        seed: cfg.seed,
        display_ranges: ranges,
    };
    let mut w = create_file(&out.join("metrics.json"))?;
    serde_json::to_writer_pretty(&mut w, &metrics).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(metrics)
}

/// Writes the observed data of `problem`: `observed.png` plus `mask.png`
/// for inpainting, or `spectrum.qspec` and a dequantized preview for JPEG.
pub fn write_observation(
    problem: &ProblemSpec,
    out: &Path,
    bits: u8,
    encoding: SpectrumEncoding,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    match &problem.degradation {
        Degradation::Jpeg { spectrum } => {
            let path = out.join("spectrum.qspec");
            write_spectrum(spectrum, &path, encoding)?;
            written.push(path);
            let path = out.join("observed.png");
            save_image(&spectrum.dequantized_image()?, &path, bits)?;
            written.push(path);
        }
        Degradation::Inpaint { mask } => {
            let path = out.join("mask.png");
            save_image(mask, &path, bits)?;
            written.push(path);
            let path = out.join("observed.png");
            save_image(&problem.data, &path, bits)?;
            written.push(path);
        }
        _ => {
            let path = out.join("observed.png");
            save_image(&problem.data, &path, bits)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Corrupts a ground-truth image and writes the observation files.
pub fn simulate_command(
    ground_truth: &Path,
    recipe: &Recipe,
    seed: u64,
    out: &Path,
    bits: u8,
    encoding: SpectrumEncoding,
) -> Result<Vec<PathBuf>, CliError> {
    let gt = load_image(ground_truth)?;
    let problem = simulate_corruption(&gt, recipe, seed)?;
    create_dir(out)?;
    write_observation(&problem, out, bits, encoding)
}

/// Settings of the `sample-net` command.
#[derive(Clone, Debug)]
pub struct SampleNetConfig {
    pub model: ModelConfig,
    pub kernels: Option<PathBuf>,
    pub image_dims: (usize, usize),
    /// 1-based; `None` means the deepest layer.
    pub layer: Option<usize>,
    /// Latent position of the delta peak; `None` means the center.
    pub position: Option<(usize, usize)>,
    pub seed: u64,
    pub output: PathBuf,
    pub output_bits: u8,
}

/// Random projected kernels for every layer, from the seeded generator.
pub fn random_kernels(model: &ModelConfig, seed: u64) -> KernelSet {
    let mut noise = NoiseSource::new(seed);
    let r = model.kernel_size;
    let bound = 1.0 / r as f64;
    let mut kernels = KernelSet::zeros(model.layers, model.channels, r);
    for theta in kernels.layers.iter_mut().flatten() {
        *theta = Grid::from_shape_fn((r, r), |_| noise.uniform_in(-bound, bound));
    }
    project_kernels(&kernels)
}

/// Feeds a delta peak into one latent of every channel and writes the
/// network output per channel plus a montage. Returns the written paths.
pub fn sample_net(cfg: &SampleNetConfig) -> Result<Vec<PathBuf>, CliError> {
    let kernels = match &cfg.kernels {
        Some(path) => read_kernels(path)?,
        None => random_kernels(&cfg.model, cfg.seed),
    };
    let mut model = cfg.model.clone();
    if kernels.depth() != model.layers || kernels.channels() != model.channels {
        // the kernel file defines the architecture; only strides come from the config
        model.layers = kernels.depth();
        model.channels = kernels.channels();
        model.kernel_size = kernels.layers[0][0].nrows();
    }
    let plan = derive_size_plan(cfg.image_dims.0, cfg.image_dims.1, &model)?;
    let layer = cfg.layer.unwrap_or(plan.depth());
    if layer == 0 || layer > plan.depth() {
        return Err(CliError::Config(format!(
            "`layer` must lie in 1..={}",
            plan.depth()
        )));
    }
    let dims = plan.layers[layer - 1].latent;
    let position = cfg.position.unwrap_or((dims.0 / 2, dims.1 / 2));
    create_dir(&cfg.output)?;
    let mut outputs = Vec::new();
    let mut written = Vec::new();
    for n in 0..kernels.channels() {
        let img = sample_delta(&kernels, &plan, layer - 1, n, position)?;
        let path = cfg
            .output
            .join(format!("delta_layer{layer}_channel{}.png", n + 1));
        save_image(&rescale(&img).0, &path, cfg.output_bits)?;
        written.push(path);
        outputs.push(img);
    }
    let (shown, _) = montage(&outputs, 4);
    let path = cfg.output.join(format!("delta_layer{layer}.png"));
    save_image(&shown, &path, cfg.output_bits)?;
    written.push(path);
    Ok(written)
}
