//! Command-line harness for the `genreg` solver: configuration, image I/O,
//! corruption simulation, reconstruction runs and network sampling.

pub mod config;
pub mod error;
pub mod imageio;
pub mod run;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{
    merge, read_config_file, resolve_encoding, resolve_model, resolve_output_bits, resolve_recipe,
    App,
};
use error::CliError;
use std::path::PathBuf;

macro_rules! key_flags {
    ($($key:ident),* $(,)?) => {
        /// One optional flag per configuration key; set flags override the file.
        #[derive(Args, Clone, Debug, Default)]
        pub struct KeyFlags {
            $(
                #[arg(long, value_name = "VALUE", help = concat!("Set `", stringify!($key), "`"))]
                pub $key: Option<String>,
            )*
        }

        impl KeyFlags {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            pub fn pairs(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key).to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

key_flags!(
    layers,
    channels,
    kernel_size,
    strides,
    tv_epsilon,
    gamma,
    nu,
    lambda,
    alg_epsilon,
    alpha,
    beta,
    iterations,
    warmup,
    lipschitz_init,
    backtrack_growth,
    backtrack_shrink,
    max_backtracks,
    adjoint_start,
    seed,
    input,
    mask,
    spectrum,
    ground_truth,
    output,
    simulate,
    output_bits,
    keep_fraction,
    noise,
    blur_half_width,
    blur_sigma,
    blur_sigma_units,
    factor,
    quality,
    spectrum_encoding,
);

/// Configuration sources shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Settings {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Extra `key=value` override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(flatten)]
    pub keys: KeyFlags,
}

impl Settings {
    fn resolve_raw(&self) -> Result<config::RawConfig, CliError> {
        let file = self.config.as_deref().map(read_config_file).transpose()?;
        let mut pairs = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.extend(self.keys.pairs());
        merge(file, &pairs)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AppArg {
    Inpaint,
    Denoise,
    Deconv,
    Superres,
    Jpeg,
}

impl From<AppArg> for App {
    fn from(a: AppArg) -> App {
        match a {
            AppArg::Inpaint => App::Inpaint,
            AppArg::Denoise => App::Denoise,
            AppArg::Deconv => App::Deconv,
            AppArg::Superres => App::SuperRes,
            AppArg::Jpeg => App::Jpeg,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fill in unknown pixels given a binary mask.
    Inpaint(Settings),
    /// Remove additive Gaussian noise.
    Denoise(Settings),
    /// Invert a Gaussian blur.
    Deconv(Settings),
    /// Upsample a block-averaged image.
    Superres(Settings),
    /// Reconstruct from quantized 8x8 DCT coefficients.
    Jpeg(Settings),
    /// Corrupt a ground-truth image with a task's degradation.
    Simulate {
        #[arg(value_enum)]
        app: AppArg,
        #[command(flatten)]
        settings: Settings,
    },
    /// Push delta peaks through a network and save the outputs.
    SampleNet {
        /// Kernel file written by a reconstruction run (`kernels.txt`).
        #[arg(long, value_name = "FILE")]
        kernels: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Layer (1-based) whose latent receives the peak; default the deepest.
        #[arg(long)]
        layer: Option<usize>,
        /// Peak position `row,col` in that latent grid; default its center.
        #[arg(long, value_name = "ROW,COL")]
        position: Option<String>,
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(Parser, Debug)]
#[command(
    name = "genreg",
    version,
    about = "Image reconstruction with a generative convolutional regularizer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GENREG_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "GENREG_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    // a pool that is already initialized (repeated calls in one process) is kept
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn parse_position(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("`position`: expected ROW,COL, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

/// Executes a parsed command, printing a short summary.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Inpaint(s) => reconstruct(App::Inpaint, &s),
        Command::Denoise(s) => reconstruct(App::Denoise, &s),
        Command::Deconv(s) => reconstruct(App::Deconv, &s),
        Command::Superres(s) => reconstruct(App::SuperRes, &s),
        Command::Jpeg(s) => reconstruct(App::Jpeg, &s),
        Command::Simulate { app, settings } => {
            let app = App::from(app);
            let raw = settings.resolve_raw()?;
            let gt = raw
                .get("ground_truth")
                .map(PathBuf::from)
                .ok_or_else(|| CliError::Config("`ground_truth` is required".into()))?;
            let out = raw
                .get("output")
                .map_or_else(|| PathBuf::from("simulated"), PathBuf::from);
            let seed = raw
                .get("seed")
                .map_or(Ok(0), |s| s.parse::<u64>())
                .map_err(|_| CliError::Config("`seed`: expected an unsigned integer".into()))?;
            let written = run::simulate_command(
                &gt,
                &resolve_recipe(app, &raw)?,
                seed,
                &out,
                resolve_output_bits(&raw)?,
                resolve_encoding(&raw)?,
            )?;
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::SampleNet {
            kernels,
            width,
            height,
            layer,
            position,
            settings,
        } => {
            let raw = settings.resolve_raw()?;
            let cfg = run::SampleNetConfig {
                model: resolve_model(App::Denoise, &raw)?,
                kernels,
                image_dims: (height, width),
                layer,
                position: position.as_deref().map(parse_position).transpose()?,
                seed: raw
                    .get("seed")
                    .map_or(Ok(0), |s| s.parse::<u64>())
                    .map_err(|_| CliError::Config("`seed`: expected an unsigned integer".into()))?,
                output: raw
                    .get("output")
                    .map_or_else(|| PathBuf::from("samples"), PathBuf::from),
                output_bits: resolve_output_bits(&raw)?,
            };
            for p in run::sample_net(&cfg)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn reconstruct(app: App, settings: &Settings) -> Result<(), CliError> {
    let raw = settings.resolve_raw()?;
    let cfg = config::resolve_run(app, &raw)?;
    let m = run::run_application(&cfg)?;
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "{}: {} iterations in {:.1}s, final objective {}, psnr {} (start {}), ssim {}",
        app.name(),
        m.iterations,
        m.wall_time_seconds,
        show(m.final_objective),
        show(m.psnr),
        show(m.psnr_initial),
        show(m.ssim),
    );
    println!("artifacts in {}", cfg.output.display());
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("genreg: {e}");
            e.exit_code()
        }
    }
}
