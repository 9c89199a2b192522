//! Benchmark harness: runs the pipeline over a case list (a suite
//! directory or built-in synthetic cases) and tabulates accuracy and
//! matching time per variant and ablation mode.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use pgm_core::eval::{
    noise_image, smooth_noise_image, synth_pair, OccluderFill, SynthMotion, ValidityMask,
};
use pgm_core::interp::{densify, select_interpolator, sparsify_to_grid, InterpolatorMode};
use pgm_core::pyramid_flow::pyramidal_matching;
use pgm_core::{endpoint_metrics, AblationMode, FlowField, GradientVariant, PgmError, RasterImage};

use crate::PipelineArgs;

struct BenchCase {
    name: String,
    img1: RasterImage,
    img2: RasterImage,
    gt: Option<FlowField>,
    mask: Option<ValidityMask>,
}

struct Row {
    case: String,
    variant: GradientVariant,
    ablation: AblationMode,
    aee: f64,
    bad3: f64,
    match_count: usize,
    seconds: f64,
}

fn synthetic_cases() -> Vec<BenchCase> {
    let (w, h) = (128usize, 96usize);
    let mut cases = Vec::new();

    for (i, t) in [(8.0, 0.0), (5.0, -3.0), (2.0, 8.0)].iter().enumerate() {
        let base = noise_image(w, h, 3, 40 + i as u64);
        let pair = synth_pair(
            &base,
            &SynthMotion::Translation { tx: t.0, ty: t.1 },
            i as u64,
        )
        .expect("translation keeps enough pixels");
        cases.push(BenchCase {
            name: format!("trans_{:+}{:+}", t.0 as i32, t.1 as i32),
            img1: pair.img1,
            img2: pair.img2,
            gt: Some(pair.gt),
            mask: Some(pair.mask),
        });
    }

    for i in 0..3usize {
        let base = smooth_noise_image(w, h, 3, 70 + i as u64);
        let angle = (i as f64 - 1.0) * 0.02;
        let scale = 1.0 + (i as f64 - 1.0) * 0.01;
        let (c, s) = (angle.cos() * scale, angle.sin() * scale);
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let motion = SynthMotion::Affine {
            m: [
                [c, -s, cx - c * cx + s * cy + 2.0],
                [s, c, cy - s * cx - c * cy - 1.0],
            ],
        };
        let pair = synth_pair(&base, &motion, 7 + i as u64).expect("mild affine stays in bounds");
        cases.push(BenchCase {
            name: format!("affine_{i}"),
            img1: pair.img1,
            img2: pair.img2,
            gt: Some(pair.gt),
            mask: Some(pair.mask),
        });
    }

    for i in 0..2usize {
        let base = noise_image(w, h, 3, 1000 + i as u64);
        let motion = SynthMotion::Occluder {
            tx: 4.0,
            ty: 3.0,
            rect: (54, 38, 20, 20),
            fill: OccluderFill::HighContrastNoise,
        };
        let pair = synth_pair(&base, &motion, i as u64).expect("occluder fits");
        cases.push(BenchCase {
            name: format!("occl_{i}"),
            img1: pair.img1,
            img2: pair.img2,
            gt: Some(pair.gt),
            mask: Some(pair.mask),
        });
    }

    cases
}

fn directory_cases(dir: &Path) -> Result<Vec<BenchCase>, PgmError> {
    let mut cases = Vec::new();
    let mut failures = 0usize;
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();

    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some((stem, ext)) = ["png", "ppm", "pgm"].iter().find_map(|ext| {
            name.strip_suffix(&format!("_1.{ext}"))
                .map(|stem| (stem.to_string(), *ext))
        }) else {
            continue;
        };
        let img2_path = dir.join(format!("{stem}_2.{ext}"));
        let gt_path = dir.join(format!("{stem}_gt.flo"));
        let loaded = (|| -> Result<BenchCase, PgmError> {
            let (img1, img2) = crate::read_pair(&path, &img2_path)?;
            let gt = if gt_path.exists() {
                Some(pgm_core::read_flo(&gt_path)?)
            } else {
                None
            };
            Ok(BenchCase {
                name: stem.clone(),
                img1,
                img2,
                gt,
                mask: None,
            })
        })();
        match loaded {
            Ok(case) => cases.push(case),
            Err(e) => {
                failures += 1;
                eprintln!("case {stem}: {e}");
            }
        }
    }
    if cases.is_empty() {
        return Err(PgmError::InvalidInput(format!(
            "no usable cases in {} ({failures} failed to load)",
            dir.display()
        )));
    }
    Ok(cases)
}

fn run_case(
    case: &BenchCase,
    variant: GradientVariant,
    ablation: AblationMode,
    args: &PipelineArgs,
) -> Result<Row, PgmError> {
    let mut pipeline_args = args.clone();
    pipeline_args.variant = variant.name().to_string();
    pipeline_args.ablation = ablation.name().to_string();
    let cfg = pipeline_args.config()?;

    let started = Instant::now();
    let out = pyramidal_matching(&case.img1, &case.img2, &cfg)?;
    let seconds = started.elapsed().as_secs_f64();

    let matches = sparsify_to_grid(&out.field, args.spacing);
    let (mut aee, mut bad3) = (f64::NAN, f64::NAN);
    if let Some(gt) = &case.gt {
        if !matches.is_empty() {
            let mode = match args.interp()? {
                crate::InterpChoice::Auto => select_interpolator(
                    matches.len(),
                    case.img1.width(),
                    case.img1.height(),
                    args.threshold,
                ),
                crate::InterpChoice::Nw => InterpolatorMode::NearestWeighted,
                crate::InterpChoice::La => InterpolatorMode::LocalAffine,
            };
            let flow = densify(&matches, case.img1.width(), case.img1.height(), mode, 25)?;
            let metrics = endpoint_metrics(&flow, gt, case.mask.as_ref(), 3.0)?;
            aee = metrics.aee;
            bad3 = metrics.bad_ratio;
        }
    }
    Ok(Row {
        case: case.name.clone(),
        variant,
        ablation,
        aee,
        bad3,
        match_count: matches.len(),
        seconds,
    })
}

pub fn cmd_bench(
    suite_dir: Option<&Path>,
    synthetic: bool,
    variants: &[String],
    ablations: bool,
    csv: Option<&Path>,
    args: &PipelineArgs,
) -> Result<(), PgmError> {
    let mut cases = match (suite_dir, synthetic) {
        (Some(dir), false) => directory_cases(dir)?,
        (None, true) => synthetic_cases(),
        (Some(_), true) => {
            return Err(PgmError::InvalidParameter(
                "pass either a suite directory or --synthetic, not both".into(),
            ))
        }
        (None, false) => {
            return Err(PgmError::InvalidParameter(
                "nothing to run: pass a suite directory or --synthetic".into(),
            ))
        }
    };
    cases.sort_by(|a, b| a.name.cmp(&b.name));

    let variant_list: Vec<GradientVariant> = if variants.is_empty() {
        vec![GradientVariant::from_str(&args.variant)?]
    } else {
        variants
            .iter()
            .map(|v| GradientVariant::from_str(v))
            .collect::<Result<_, _>>()?
    };
    let ablation_list: Vec<AblationMode> = if ablations {
        vec![
            AblationMode::Full,
            AblationMode::NoRefinement,
            AblationMode::PropagateAll,
            AblationMode::NoRecord,
        ]
    } else {
        vec![AblationMode::from_str(&args.ablation)?]
    };

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for case in &cases {
        for &variant in &variant_list {
            for &ablation in &ablation_list {
                match run_case(case, variant, ablation, args) {
                    Ok(row) => rows.push(row),
                    Err(e) => {
                        failures += 1;
                        eprintln!(
                            "case {} ({}, {}): {e}",
                            case.name,
                            variant.name(),
                            ablation.name()
                        );
                    }
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(PgmError::InvalidInput(format!(
            "all {failures} runs failed"
        )));
    }

    println!(
        "{:<16} {:<7} {:<14} {:>8} {:>7} {:>8} {:>8}",
        "case", "variant", "ablation", "aee", "bad3", "matches", "seconds"
    );
    for row in &rows {
        println!(
            "{:<16} {:<7} {:<14} {:>8.4} {:>7.4} {:>8} {:>8.3}",
            row.case,
            row.variant.name(),
            row.ablation.name(),
            row.aee,
            row.bad3,
            row.match_count,
            row.seconds
        );
    }

    if let Some(csv_path) = csv {
        let mut out = File::create(csv_path).map_err(PgmError::Io)?;
        writeln!(out, "case,variant,ablation,aee,bad3,match_count,seconds")?;
        for row in &rows {
            writeln!(
                out,
                "{},{},{},{:.4},{:.4},{},{:.3}",
                row.case,
                row.variant.name(),
                row.ablation.name(),
                row.aee,
                row.bad3,
                row.match_count,
                row.seconds
            )?;
        }
    }
    if failures > 0 {
        eprintln!("{failures} runs failed");
    }
    Ok(())
}
