//! `pgm` — pyramidal gradient matching from the command line.

mod bench;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use pgm_core::eval::ValidityMask;
use pgm_core::imgproc::{read_image, write_png};
use pgm_core::interp::{
    densify, export_matches, select_interpolator, sparsify_to_grid, InterpolatorMode,
};
use pgm_core::pyramid_flow::pyramidal_matching;
use pgm_core::{
    endpoint_metrics, flow_to_color, read_flo, write_flo, AblationMode, ColorSpace,
    GradientVariant, PgmError, PipelineConfig, RasterImage,
};

#[derive(Parser)]
#[command(
    name = "pgm",
    version,
    about = "Dense correspondence and optical flow by pyramidal gradient matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match an image pair and export sparse grid matches as text.
    Match {
        img1: PathBuf,
        img2: PathBuf,
        /// Output match file (one `x1 y1 x2 y2` line per match).
        out_matches: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Match, densify and write a `.flo` flow field.
    Flow {
        img1: PathBuf,
        img2: PathBuf,
        /// Output flow file (Middlebury `.flo`).
        out_flo: PathBuf,
        /// Also render the flow to a PNG.
        #[arg(long)]
        viz: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Compare a flow file against ground truth and print AEE / bad-pixel
    /// metrics.
    Eval {
        flo: PathBuf,
        gt_flo: PathBuf,
        /// Validity mask (PNG; zero pixels are excluded).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Render the evaluated flow to a PNG.
        #[arg(long)]
        viz: Option<PathBuf>,
    },
    /// Run a benchmark suite: either a directory of image pairs with
    /// ground-truth `.flo` files, or the built-in synthetic cases.
    Bench {
        /// Directory with `<case>_1.<ext>`, `<case>_2.<ext>` image pairs
        /// (png/ppm/pgm) and `<case>_gt.flo` ground truth.
        suite_dir: Option<PathBuf>,
        /// Generate synthetic cases instead of reading a directory.
        #[arg(long)]
        synthetic: bool,
        /// Run several feature variants, comma separated (e.g. C,G,CD,GD).
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Run all four ablation modes per case.
        #[arg(long)]
        ablations: bool,
        /// Also write the results as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Gradient feature variant: C, G, CD or GD.
    #[arg(long, default_value = "C")]
    variant: String,
    /// Ablation mode: full, no_refinement, propagate_all or no_record.
    #[arg(long, default_value = "full")]
    ablation: String,
    /// RNG seed; falls back to the PGM_SEED environment variable, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid spacing for match sparsification.
    #[arg(long, default_value_t = 3)]
    spacing: usize,
    /// Forward-backward consistency threshold in pixels.
    #[arg(long)]
    eps: Option<f64>,
    /// Minimum surviving region area in pixels.
    #[arg(long, default_value_t = 9)]
    min_region: usize,
    /// Pyramid level count.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Pyramid downsample factor.
    #[arg(long, default_value_t = 0.5)]
    factor: f64,
    /// Forward matcher patch radius.
    #[arg(long, default_value_t = 7)]
    radius_fwd: usize,
    /// Backward matcher patch radius.
    #[arg(long, default_value_t = 5)]
    radius_bwd: usize,
    /// Propagation-search sweeps at full resolution.
    #[arg(long, default_value_t = 6)]
    iters_full: usize,
    /// Propagation-search sweeps at the other levels.
    #[arg(long, default_value_t = 4)]
    iters_other: usize,
    /// Densifier selection: auto (density rule), nw or la.
    #[arg(long, default_value = "auto")]
    interp: String,
    /// Match-density fraction above which the local-affine densifier is
    /// chosen.
    #[arg(long, default_value_t = 0.022)]
    threshold: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum InterpChoice {
    Auto,
    Nw,
    La,
}

impl FromStr for InterpChoice {
    type Err = PgmError;

    fn from_str(s: &str) -> Result<Self, PgmError> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(InterpChoice::Auto),
            "nw" => Ok(InterpChoice::Nw),
            "la" => Ok(InterpChoice::La),
            other => Err(PgmError::InvalidParameter(format!(
                "unknown interpolator '{other}' (expected auto, nw or la)"
            ))),
        }
    }
}

/// Per-level color spaces: the published three-space cycle for color
/// variants (backward pyramid offset by one), gray everywhere for gray
/// variants.
fn spaces_for(variant: GradientVariant, levels: usize, phase: usize) -> Vec<ColorSpace> {
    if variant.source_channels() == 1 {
        return vec![ColorSpace::Gray; levels];
    }
    const CYCLE: [ColorSpace; 3] = [ColorSpace::Rgb, ColorSpace::CieLab, ColorSpace::YCrCb];
    (0..levels).map(|l| CYCLE[(l + phase) % 3]).collect()
}

impl PipelineArgs {
    fn seed(&self) -> u64 {
        self.seed
            .or_else(|| std::env::var("PGM_SEED").ok().and_then(|v| v.parse().ok()))
            .unwrap_or(0)
    }

    fn config(&self) -> Result<PipelineConfig, PgmError> {
        let variant = GradientVariant::from_str(&self.variant)?;
        let ablation = AblationMode::from_str(&self.ablation)?;
        let mut cfg = PipelineConfig::for_variant(variant);
        cfg.levels = self.levels;
        // The start level is not an exposed flag; keep it the coarsest
        // working level when fewer pyramid levels are requested.
        cfg.start_level = cfg.start_level.min(self.levels.saturating_sub(1)).max(1);
        cfg.spaces_fwd = spaces_for(variant, self.levels, 0);
        cfg.spaces_bwd = spaces_for(variant, self.levels, 1);
        cfg.factor = self.factor;
        cfg.radius_fwd = self.radius_fwd;
        cfg.radius_bwd = self.radius_bwd;
        cfg.iters_full = self.iters_full;
        cfg.iters_other = self.iters_other;
        cfg.min_region = self.min_region;
        if let Some(eps) = self.eps {
            cfg.eps_check = eps;
        }
        cfg.seed = self.seed();
        cfg.ablation = ablation;
        Ok(cfg)
    }

    fn interp(&self) -> Result<InterpChoice, PgmError> {
        InterpChoice::from_str(&self.interp)
    }
}

fn annotate(err: PgmError, path: &Path) -> PgmError {
    match err {
        PgmError::Io(io) => PgmError::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn read_pair(img1: &Path, img2: &Path) -> Result<(RasterImage, RasterImage), PgmError> {
    let a = read_image(img1)?;
    let b = read_image(img2)?;
    if a.width() != b.width() || a.height() != b.height() {
        return Err(PgmError::DimensionMismatch(format!(
            "{} is {}x{}, {} is {}x{}",
            img1.display(),
            a.width(),
            a.height(),
            img2.display(),
            b.width(),
            b.height()
        )));
    }
    Ok((a, b))
}

fn read_mask(path: &Path, width: usize, height: usize) -> Result<ValidityMask, PgmError> {
    let img = read_image(path)?;
    if img.width() != width || img.height() != height {
        return Err(PgmError::DimensionMismatch(format!(
            "mask {} is {}x{}, flow is {width}x{height}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    let valid = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| img.get(x, y, 0) != 0.0)
        .collect();
    ValidityMask::from_data(width, height, valid)
}

fn cmd_match(
    img1: &Path,
    img2: &Path,
    out_matches: &Path,
    args: &PipelineArgs,
) -> Result<(), PgmError> {
    let (a, b) = read_pair(img1, img2)?;
    let cfg = args.config()?;
    let out = pyramidal_matching(&a, &b, &cfg)?;
    let matches = sparsify_to_grid(&out.field, args.spacing);
    export_matches(&matches, out_matches).map_err(|e| annotate(e, out_matches))?;
    let total = out.field.width() * out.field.height();
    println!(
        "{} matches, inlier ratio {:.3}",
        matches.len(),
        out.field.initialized_count() as f64 / total as f64
    );
    Ok(())
}

fn cmd_flow(
    img1: &Path,
    img2: &Path,
    out_flo: &Path,
    viz: Option<&Path>,
    args: &PipelineArgs,
) -> Result<(), PgmError> {
    let (a, b) = read_pair(img1, img2)?;
    let cfg = args.config()?;
    let interp = args.interp()?;
    let (w, h) = (a.width(), a.height());
    let out = pyramidal_matching(&a, &b, &cfg)?;
    let matches = sparsify_to_grid(&out.field, args.spacing);
    if matches.is_empty() {
        return Err(PgmError::InvalidInput(
            "no matches survived filtering; cannot densify".into(),
        ));
    }
    let mode = match interp {
        InterpChoice::Auto => select_interpolator(matches.len(), w, h, args.threshold),
        InterpChoice::Nw => InterpolatorMode::NearestWeighted,
        InterpChoice::La => InterpolatorMode::LocalAffine,
    };
    let flow = densify(&matches, w, h, mode, 25)?;
    write_flo(&flow, out_flo).map_err(|e| annotate(e, out_flo))?;
    if let Some(viz_path) = viz {
        write_png(&flow_to_color(&flow, None), viz_path).map_err(|e| annotate(e, viz_path))?;
    }
    let mode_name = match mode {
        InterpolatorMode::LocalAffine => "la",
        InterpolatorMode::NearestWeighted => "nw",
    };
    println!(
        "{} matches, {mode_name} densifier, wrote {}",
        matches.len(),
        out_flo.display()
    );
    Ok(())
}

fn cmd_eval(
    flo: &Path,
    gt_flo: &Path,
    mask: Option<&Path>,
    viz: Option<&Path>,
) -> Result<(), PgmError> {
    let flow = read_flo(flo).map_err(|e| annotate(e, flo))?;
    let gt = read_flo(gt_flo).map_err(|e| annotate(e, gt_flo))?;
    let mask = mask
        .map(|p| read_mask(p, flow.width(), flow.height()))
        .transpose()?;
    let metrics = endpoint_metrics(&flow, &gt, mask.as_ref(), 3.0)?;
    println!(
        "AEE {:.3}, bad(3px) {:.2}%",
        metrics.aee,
        metrics.bad_ratio * 100.0
    );
    if let Some(viz_path) = viz {
        write_png(&flow_to_color(&flow, None), viz_path).map_err(|e| annotate(e, viz_path))?;
    }
    Ok(())
}

fn exit_code(err: &PgmError) -> u8 {
    match err {
        PgmError::Io(_) | PgmError::Codec(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), PgmError> {
    match cli.command {
        Command::Match {
            img1,
            img2,
            out_matches,
            pipeline,
        } => cmd_match(&img1, &img2, &out_matches, &pipeline),
        Command::Flow {
            img1,
            img2,
            out_flo,
            viz,
            pipeline,
        } => cmd_flow(&img1, &img2, &out_flo, viz.as_deref(), &pipeline),
        Command::Eval {
            flo,
            gt_flo,
            mask,
            viz,
        } => cmd_eval(&flo, &gt_flo, mask.as_deref(), viz.as_deref()),
        Command::Bench {
            suite_dir,
            synthetic,
            variants,
            ablations,
            csv,
            pipeline,
        } => bench::cmd_bench(
            suite_dir.as_deref(),
            synthetic,
            &variants,
            ablations,
            csv.as_deref(),
            &pipeline,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
