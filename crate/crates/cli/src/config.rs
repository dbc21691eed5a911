//! Flat `key = value` configuration with command-line overrides.

use crate::error::CliError;
use genreg::forward::{BlurWidth, SpectrumEncoding};
use genreg::{AlgoParams, ModelConfig, Recipe};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// The five reconstruction tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum App {
    Inpaint,
    Denoise,
    Deconv,
    SuperRes,
    Jpeg,
}

impl App {
    pub fn name(self) -> &'static str {
        match self {
            App::Inpaint => "inpaint",
            App::Denoise => "denoise",
            App::Deconv => "deconv",
            App::SuperRes => "superres",
            App::Jpeg => "jpeg",
        }
    }

    /// Default balance `nu` and data weight `lambda` for each task.
    pub fn default_weights(self) -> (f64, f64) {
        match self {
            App::Inpaint => (0.975, 22.5),
            App::Denoise => (0.925, 22.5),
            App::Deconv => (0.925, 600.0),
            App::SuperRes => (0.975, 22.5),
            App::Jpeg => (0.875, 22.5),
        }
    }
}

/// Every accepted configuration key.
pub const KEYS: &[&str] = &[
    // model
    "layers",
    "channels",
    "kernel_size",
    "strides",
    "tv_epsilon",
    "gamma",
    "nu",
    "lambda",
    // algorithm
    "alg_epsilon",
    "alpha",
    "beta",
    "iterations",
    "warmup",
    "lipschitz_init",
    "backtrack_growth",
    "backtrack_shrink",
    "max_backtracks",
    "adjoint_start",
    // run
    "seed",
    "input",
    "mask",
    "spectrum",
    "ground_truth",
    "output",
    "simulate",
    "output_bits",
    // corruption
    "keep_fraction",
    "noise",
    "blur_half_width",
    "blur_sigma",
    "blur_sigma_units",
    "factor",
    "quality",
    "spectrum_encoding",
];

/// Ordered key-value pairs before type conversion.
pub type RawConfig = BTreeMap<String, String>;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<RawConfig, CliError> {
    let mut map = RawConfig::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected `key = value`",
                lineno + 1
            )));
        };
        let key = key.trim();
        check_key(key)?;
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn check_key(key: &str) -> Result<(), CliError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unknown key `{key}`")))
    }
}

/// Typed lookup over a [`RawConfig`]; every error names its key.
struct Lookup<'a>(&'a RawConfig);

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KEYS.contains(&key), "undeclared key {key}");
        self.0.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn list<T: FromStr + Copy>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{p}`")))
                })
                .collect(),
        }
    }

    /// A single value applied to all three blocks, or three comma-separated values.
    fn per_block(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3], CliError> {
        let vals = self.list(key, default.to_vec())?;
        match vals[..] {
            [v] => Ok([v; 3]),
            [a, b, c] => Ok([a, b, c]),
            _ => Err(CliError::Config(format!("`{key}`: expected 1 or 3 values"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    fn ensure(&self, ok: bool, key: &str, what: &str) -> Result<(), CliError> {
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("`{key}` {what}")))
        }
    }
}

/// Fully resolved settings of one reconstruction run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub app: App,
    pub model: ModelConfig,
    pub algo: AlgoParams,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub spectrum: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output: PathBuf,
    /// Corrupt `ground_truth` with `recipe` instead of reading observed data.
    pub simulate: bool,
    pub recipe: Recipe,
    pub output_bits: u8,
    pub spectrum_encoding: SpectrumEncoding,
}

/// Corruption parameters shared by `simulate` and simulated runs.
pub fn resolve_recipe(app: App, raw: &RawConfig) -> Result<Recipe, CliError> {
    let look = Lookup(raw);
    let recipe = match app {
        App::Inpaint => {
            let keep = look.get("keep_fraction", 0.3f64)?;
            look.ensure(
                (0.0..=1.0).contains(&keep),
                "keep_fraction",
                "must lie in [0, 1]",
            )?;
            Recipe::Inpaint {
                keep_fraction: keep,
            }
        }
        App::Denoise => {
            let noise = look.get("noise", 0.1f64)?;
            look.ensure(
                noise >= 0.0 && noise.is_finite(),
                "noise",
                "must be nonnegative",
            )?;
            Recipe::Denoise { noise }
        }
        App::Deconv => {
            let noise = look.get("noise", 0.025f64)?;
            look.ensure(
                noise >= 0.0 && noise.is_finite(),
                "noise",
                "must be nonnegative",
            )?;
            let half_width = look.get("blur_half_width", 4usize)?;
            let sigma = look.get("blur_sigma", 0.25f64)?;
            look.ensure(
                sigma > 0.0 && sigma.is_finite(),
                "blur_sigma",
                "must be positive",
            )?;
            let width = match look.raw("blur_sigma_units").unwrap_or("relative") {
                "relative" => BlurWidth::RelativeToHalfWidth(sigma),
                "pixels" => BlurWidth::Pixels(sigma),
                other => {
                    return Err(CliError::Config(format!(
                        "`blur_sigma_units`: expected `relative` or `pixels`, got `{other}`"
                    )))
                }
            };
            Recipe::Deconv {
                half_width,
                width,
                noise,
            }
        }
        App::SuperRes => {
            let factor = look.get("factor", 4usize)?;
            look.ensure(factor >= 1, "factor", "must be positive")?;
            Recipe::SuperRes { factor }
        }
        App::Jpeg => {
            let quality = look.get("quality", 10u32)?;
            look.ensure(
                (1..=100).contains(&quality),
                "quality",
                "must lie in 1..=100",
            )?;
            Recipe::Jpeg { quality }
        }
    };
    Ok(recipe)
}

pub fn resolve_model(app: App, raw: &RawConfig) -> Result<ModelConfig, CliError> {
    let look = Lookup(raw);
    let d = ModelConfig::default();
    let (nu, lambda) = app.default_weights();
    let model = ModelConfig {
        layers: look.get("layers", d.layers)?,
        channels: look.get("channels", d.channels)?,
        kernel_size: look.get("kernel_size", d.kernel_size)?,
        strides: look.list("strides", d.strides.clone())?,
        tv_epsilon: look.get("tv_epsilon", d.tv_epsilon)?,
        gamma: look.get("gamma", d.gamma)?,
        nu: look.get("nu", nu)?,
        lambda: look.get("lambda", lambda)?,
    };
    look.ensure(model.nu > 0.0 && model.nu < 1.0, "nu", "must lie in (0, 1)")?;
    look.ensure(
        model.lambda > 0.0 && model.lambda.is_finite(),
        "lambda",
        "must be positive",
    )?;
    look.ensure(
        model.gamma > 0.0 && model.gamma.is_finite(),
        "gamma",
        "must be positive",
    )?;
    look.ensure(model.tv_epsilon > 0.0, "tv_epsilon", "must be positive")?;
    look.ensure(model.layers >= 1, "layers", "must be at least 1")?;
    look.ensure(model.channels >= 1, "channels", "must be at least 1")?;
    look.ensure(model.kernel_size >= 1, "kernel_size", "must be at least 1")?;
    look.ensure(
        model.strides.len() == model.layers,
        "strides",
        "must list one stride per layer",
    )?;
    look.ensure(
        model.strides.iter().all(|&s| s >= 1),
        "strides",
        "must be positive",
    )?;
    look.ensure(model.strides[0] == 1, "strides", "must start with 1")?;
    model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(model)
}

pub fn resolve_algo(raw: &RawConfig) -> Result<AlgoParams, CliError> {
    let look = Lookup(raw);
    let d = AlgoParams::default();
    let shrink = look.get("backtrack_shrink", d.shrink.unwrap_or(1.0))?;
    let algo = AlgoParams {
        alg_epsilon: look.get("alg_epsilon", d.alg_epsilon)?,
        alpha: look.per_block("alpha", d.alpha)?,
        beta: look.per_block("beta", d.beta)?,
        iterations: look.get("iterations", d.iterations)?,
        warmup: look.get("warmup", d.warmup)?,
        lipschitz_init: look.per_block("lipschitz_init", d.lipschitz_init)?,
        growth: look.get("backtrack_growth", d.growth)?,
        shrink: (shrink != 1.0).then_some(shrink),
        max_backtracks: look.get("max_backtracks", d.max_backtracks)?,
        adjoint_start: look.get("adjoint_start", d.adjoint_start)?,
    };
    let eps = algo.alg_epsilon;
    look.ensure(eps > 0.0 && eps < 1.0, "alg_epsilon", "must lie in (0, 1)")?;
    for (key, vals) in [("alpha", algo.alpha), ("beta", algo.beta)] {
        look.ensure(
            vals.iter().all(|&w| (0.0..1.0 - eps).contains(&w)),
            key,
            "must lie in [0, 1 - alg_epsilon)",
        )?;
    }
    look.ensure(
        algo.lipschitz_init
            .iter()
            .all(|&l| l > 0.0 && l.is_finite()),
        "lipschitz_init",
        "must be positive",
    )?;
    look.ensure(algo.growth > 1.0, "backtrack_growth", "must exceed 1")?;
    look.ensure(shrink >= 1.0, "backtrack_shrink", "must be at least 1")?;
    look.ensure(
        algo.max_backtracks >= 1,
        "max_backtracks",
        "must be positive",
    )?;
    algo.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(algo)
}

pub fn resolve_encoding(raw: &RawConfig) -> Result<SpectrumEncoding, CliError> {
    match Lookup(raw).raw("spectrum_encoding").unwrap_or("text") {
        "text" => Ok(SpectrumEncoding::Text),
        "binary" => Ok(SpectrumEncoding::Binary),
        other => Err(CliError::Config(format!(
            "`spectrum_encoding`: expected `text` or `binary`, got `{other}`"
        ))),
    }
}

pub fn resolve_output_bits(raw: &RawConfig) -> Result<u8, CliError> {
    let look = Lookup(raw);
    let bits = look.get("output_bits", 8u8)?;
    look.ensure(bits == 8 || bits == 16, "output_bits", "must be 8 or 16")?;
    Ok(bits)
}

/// Turns raw pairs (file values already overridden by flags) into a [`RunConfig`].
pub fn resolve_run(app: App, raw: &RawConfig) -> Result<RunConfig, CliError> {
    let look = Lookup(raw);
    let cfg = RunConfig {
        app,
        model: resolve_model(app, raw)?,
        algo: resolve_algo(raw)?,
        seed: look.get("seed", 0u64)?,
        input: look.path("input"),
        mask: look.path("mask"),
        spectrum: look.path("spectrum"),
        ground_truth: look.path("ground_truth"),
        output: look
            .path("output")
            .unwrap_or_else(|| PathBuf::from(format!("genreg-{}", app.name()))),
        simulate: look.get("simulate", false)?,
        recipe: resolve_recipe(app, raw)?,
        output_bits: resolve_output_bits(raw)?,
        spectrum_encoding: resolve_encoding(raw)?,
    };
    if cfg.simulate {
        look.ensure(
            cfg.ground_truth.is_some(),
            "ground_truth",
            "is required when simulate = true",
        )?;
    } else {
        let (key, present) = match app {
            App::Jpeg => ("spectrum", cfg.spectrum.is_some()),
            _ => ("input", cfg.input.is_some()),
        };
        look.ensure(present, key, "is required unless simulate = true")?;
        if app == App::Inpaint {
            look.ensure(
                cfg.mask.is_some(),
                "mask",
                "is required for inpainting unless simulate = true",
            )?;
        }
    }
    for (key, path) in [
        ("input", &cfg.input),
        ("mask", &cfg.mask),
        ("spectrum", &cfg.spectrum),
        ("ground_truth", &cfg.ground_truth),
    ] {
        if let Some(p) = path {
            if !p.exists() {
                return Err(CliError::Io(format!(
                    "`{key}`: {} does not exist",
                    p.display()
                )));
            }
        }
    }
    Ok(cfg)
}

/// File values first, then overrides in order.
pub fn merge(
    file: Option<RawConfig>,
    overrides: &[(String, String)],
) -> Result<RawConfig, CliError> {
    let mut raw = file.unwrap_or_default();
    for (k, v) in overrides {
        check_key(k)?;
        raw.insert(k.clone(), v.clone());
    }
    Ok(raw)
}
