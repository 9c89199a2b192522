//! The pyramidal matching framework.
//!
//! Two phases over a gradient pyramid: an iterative refinement of the
//! initial field between the two coarsest working levels, then a level-by-
//! level propagation of the refined field down to full resolution. Every
//! level runs bidirectional matching and a forward-backward consistency
//! check; only inliers propagate between levels, and a per-pixel outlier
//! record carries rejections forward so that a pixel judged wrong at any
//! level stays rejected at the following ones. The record is deliberately
//! dropped once, between the two phases, to keep the refined field from
//! thinning out.

use rayon::join;

use crate::error::{PgmError, Result};
use crate::imgproc::downsample_buffer;
use crate::imgproc::{
    build_gradient_pyramid, ColorSpace, GradientImage, GradientVariant, RasterImage,
};
use crate::matcher::{
    basic_gradient_matching, exhaustive_match_oracle, CorrespondenceField, MatchParams, Offset,
};

/// Per-pixel inlier/outlier history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordState {
    /// No check has judged this pixel yet at the current level.
    Unset,
    Inlier,
    Outlier,
}

/// Stores, per pixel, whether any consistency check so far has rejected it.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierRecord {
    width: usize,
    height: usize,
    states: Vec<RecordState>,
}

impl OutlierRecord {
    pub fn unset(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            states: vec![RecordState::Unset; width * height],
        }
    }

    pub fn all_inlier(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            states: vec![RecordState::Inlier; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> RecordState {
        self.states[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, state: RecordState) {
        self.states[y * self.width + x] = state;
    }

    pub fn outlier_count(&self) -> usize {
        self.states
            .iter()
            .filter(|&&s| s == RecordState::Outlier)
            .count()
    }
}

/// Result of one forward-backward consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyMap {
    width: usize,
    height: usize,
    pass: Vec<bool>,
}

impl ConsistencyMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn passes(&self, x: usize, y: usize) -> bool {
        self.pass[y * self.width + x]
    }

    pub fn pass_count(&self) -> usize {
        self.pass.iter().filter(|&&p| p).count()
    }
}

/// Which single mechanism to disable, for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AblationMode {
    #[default]
    Full,
    /// Skip the refinement round trips; descend straight from the start
    /// level.
    NoRefinement,
    /// Ignore the outlier record when propagating the field between levels
    /// (outliers propagate too).
    PropagateAll,
    /// Never propagate the outlier record; each level rechecks from
    /// scratch.
    NoRecord,
}

impl AblationMode {
    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoRefinement => "no_refinement",
            AblationMode::PropagateAll => "propagate_all",
            AblationMode::NoRecord => "no_record",
        }
    }
}

impl std::str::FromStr for AblationMode {
    type Err = PgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(AblationMode::Full),
            "no_refinement" => Ok(AblationMode::NoRefinement),
            "propagate_all" => Ok(AblationMode::PropagateAll),
            "no_record" => Ok(AblationMode::NoRecord),
            other => Err(PgmError::InvalidParameter(format!(
                "unknown ablation mode '{other}'"
            ))),
        }
    }
}

/// Full parameter set of the pipeline. `Default` is the published
/// configuration: W=2, S=5, L=3, s=1/2, N=2, m=2, radii 7/5, 6 sweeps at
/// full resolution and 4 elsewhere.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Random-search distance bound W.
    pub search_bound: u32,
    /// Sobel kernel size S.
    pub sobel_size: usize,
    /// Pyramid level count L.
    pub levels: usize,
    /// Downsample factor s.
    pub factor: f64,
    /// Refinement round trips N.
    pub refine_rounds: usize,
    /// Start level m (where the initial field is seeded).
    pub start_level: usize,
    /// Patch radius of the forward matcher.
    pub radius_fwd: usize,
    /// Patch radius of the backward matcher.
    pub radius_bwd: usize,
    /// Propagation-search sweeps at full resolution.
    pub iters_full: usize,
    /// Propagation-search sweeps at every other level.
    pub iters_other: usize,
    /// Consistency-check threshold in pixels, at each level's own scale.
    ///
    /// The default sqrt(2) is the loosest value that accepts a one-pixel
    /// rounding disagreement on both axes at once (integer fields matching
    /// half-integer true motion necessarily produce those) while still
    /// rejecting any two-pixel disagreement.
    pub eps_check: f64,
    /// Connected components smaller than this are removed from the final
    /// field.
    pub min_region: usize,
    /// Per-axis offset tolerance when segmenting the field into regions.
    pub seg_tol: i32,
    /// Per-level color spaces of the forward gradient pyramid.
    pub spaces_fwd: Vec<ColorSpace>,
    /// Per-level color spaces of the backward gradient pyramid.
    pub spaces_bwd: Vec<ColorSpace>,
    /// Gradient feature level.
    pub variant: GradientVariant,
    pub seed: u64,
    pub ablation: AblationMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            search_bound: 2,
            sobel_size: 5,
            levels: 3,
            factor: 0.5,
            refine_rounds: 2,
            start_level: 2,
            radius_fwd: 7,
            radius_bwd: 5,
            iters_full: 6,
            iters_other: 4,
            eps_check: std::f64::consts::SQRT_2,
            min_region: 9,
            seg_tol: 1,
            spaces_fwd: vec![ColorSpace::Rgb, ColorSpace::CieLab, ColorSpace::YCrCb],
            spaces_bwd: vec![ColorSpace::CieLab, ColorSpace::YCrCb, ColorSpace::Rgb],
            variant: GradientVariant::C,
            seed: 0,
            ablation: AblationMode::Full,
        }
    }
}

impl PipelineConfig {
    /// The published configuration adjusted for a feature variant: gray
    /// variants use the gray color space at every level (per-level color
    /// differences are meaningless without color).
    pub fn for_variant(variant: GradientVariant) -> Self {
        let mut cfg = Self {
            variant,
            ..Self::default()
        };
        if variant.source_channels() == 1 {
            cfg.spaces_fwd = vec![ColorSpace::Gray; cfg.levels];
            cfg.spaces_bwd = vec![ColorSpace::Gray; cfg.levels];
        }
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(PgmError::InvalidParameter(format!(
                "need at least 2 pyramid levels, got {}",
                self.levels
            )));
        }
        if self.start_level < 1 || self.start_level > self.levels - 1 {
            return Err(PgmError::InvalidParameter(format!(
                "start level {} outside 1..={}",
                self.start_level,
                self.levels - 1
            )));
        }
        if self.refine_rounds < 1 {
            return Err(PgmError::InvalidParameter(
                "refinement rounds must be >= 1".into(),
            ));
        }
        if self.eps_check < 0.0 {
            return Err(PgmError::InvalidParameter(format!(
                "consistency threshold must be >= 0, got {}",
                self.eps_check
            )));
        }
        Ok(())
    }
}

/// Direction of an inter-level propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagateDirection {
    /// To the next higher level index (smaller image).
    ToCoarser,
    /// To the next lower level index (larger image).
    ToFiner,
}

/// Per-stage numbers collected while the pipeline runs.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub label: String,
    pub level: usize,
    pub pixels: usize,
    /// Pixels of the forward field passing the check at this stage.
    pub fwd_inliers: usize,
    /// Pixels of the backward field passing the reverse check.
    pub bwd_inliers: usize,
    pub fwd_check: ConsistencyMap,
    pub bwd_check: ConsistencyMap,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub stages: Vec<StageReport>,
}

/// Final field plus the per-stage diagnostics.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub field: CorrespondenceField,
    pub diagnostics: Diagnostics,
}

const SEED_SHRINK: f64 = 0.25;
const SEED_RADIUS: usize = 2;

fn shrink_gradient(g: &GradientImage, factor: f64) -> GradientImage {
    let (data, w, h) = downsample_buffer(g.data(), g.width(), g.height(), g.channels(), factor);
    GradientImage::from_data(w, h, g.channels(), data, g.variant()).expect("valid shape")
}

/// Seeds a dense start-level field: exhaustive matching on an additionally
/// 4x-shrunk copy of the level-`m` gradient images, upscaled back with
/// offsets rescaled and clamped into bounds. Deterministic and never
/// uninitialized.
pub fn seed_initial_field(
    g1: &GradientImage,
    g2: &GradientImage,
    _cfg: &PipelineConfig,
) -> Result<CorrespondenceField> {
    let t1 = shrink_gradient(g1, SEED_SHRINK);
    let t2 = shrink_gradient(g2, SEED_SHRINK);
    let tiny = exhaustive_match_oracle(&t1, &t2, SEED_RADIUS)?;

    let (w, h) = (g1.width(), g1.height());
    let scale = (1.0 / SEED_SHRINK) as i32;
    let mut field = CorrespondenceField::uninitialized(w, h);
    for y in 0..h {
        for x in 0..w {
            let tx = (x / scale as usize).min(tiny.width() - 1);
            let ty = (y / scale as usize).min(tiny.height() - 1);
            let off = tiny.get(tx, ty).expect("oracle fields are dense");
            let target_x = (x as i32 + off.dx * scale).clamp(0, g2.width() as i32 - 1);
            let target_y = (y as i32 + off.dy * scale).clamp(0, g2.height() as i32 - 1);
            field.set(
                x,
                y,
                Some(Offset::new(target_x - x as i32, target_y - y as i32)),
            );
        }
    }
    Ok(field)
}

/// Forward-backward consistency: pixel `p` passes iff its forward offset is
/// initialized, the reverse entry at the target exists, and the round-trip
/// residual `|F_fwd(p) + F_bwd(p + F_fwd(p))|` is at most `eps` pixels.
pub fn consistency_check(
    f_fwd: &CorrespondenceField,
    f_bwd: &CorrespondenceField,
    eps: f64,
) -> ConsistencyMap {
    let (w, h) = (f_fwd.width(), f_fwd.height());
    let mut pass = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let Some(fwd) = f_fwd.get(x, y) else { continue };
            let qx = x as i32 + fwd.dx;
            let qy = y as i32 + fwd.dy;
            if qx < 0 || qy < 0 || qx >= f_bwd.width() as i32 || qy >= f_bwd.height() as i32 {
                continue;
            }
            let Some(bwd) = f_bwd.get(qx as usize, qy as usize) else {
                continue;
            };
            let rx = (fwd.dx + bwd.dx) as f64;
            let ry = (fwd.dy + bwd.dy) as f64;
            pass[y * w + x] = (rx * rx + ry * ry).sqrt() <= eps;
        }
    }
    ConsistencyMap {
        width: w,
        height: h,
        pass,
    }
}

/// Folds a fresh check into the record: a pixel is an outlier if its record
/// already says so or the current check fails; an unset record simply
/// adopts the check result.
pub fn update_outlier_record(record: &OutlierRecord, check: &ConsistencyMap) -> OutlierRecord {
    debug_assert_eq!((record.width, record.height), (check.width, check.height));
    let mut out = record.clone();
    for y in 0..record.height {
        for x in 0..record.width {
            let passes = check.passes(x, y);
            let state = match record.get(x, y) {
                RecordState::Outlier => RecordState::Outlier,
                RecordState::Inlier | RecordState::Unset => {
                    if passes {
                        RecordState::Inlier
                    } else {
                        RecordState::Outlier
                    }
                }
            };
            out.set(x, y, state);
        }
    }
    out
}

fn block_scale(factor: f64) -> Result<i32> {
    let eta = 1.0 / factor;
    if !(factor > 0.0 && factor < 1.0) || (eta - eta.round()).abs() > 1e-9 || eta.round() < 2.0 {
        return Err(PgmError::InvalidParameter(format!(
            "propagation requires an integer 1/s >= 2, got s = {factor}"
        )));
    }
    Ok(eta.round() as i32)
}

#[inline]
fn usable(state: RecordState) -> bool {
    // Unset records count as inliers during propagation.
    state != RecordState::Outlier
}

/// Moves a field one level up or down the pyramid.
///
/// To the coarser level, each target pixel averages the offsets of its
/// source block, restricted to entries whose record is not outlier, and
/// rescales by `s`; an empty restriction yields `uninitialized`. To the
/// finer level, each target pixel copies its single source entry doubled,
/// or `uninitialized` when that source is an outlier or missing. Entries
/// whose rescaled target would leave the image are dropped.
pub fn propagate_field(
    field: &CorrespondenceField,
    record: &OutlierRecord,
    direction: PropagateDirection,
    factor: f64,
    target_width: usize,
    target_height: usize,
) -> Result<CorrespondenceField> {
    if field.width() != record.width() || field.height() != record.height() {
        return Err(PgmError::DimensionMismatch(format!(
            "field {}x{} vs record {}x{}",
            field.width(),
            field.height(),
            record.width(),
            record.height()
        )));
    }
    let eta = block_scale(factor)?;
    let mut out = CorrespondenceField::uninitialized(target_width, target_height);
    for y in 0..target_height {
        for x in 0..target_width {
            let entry = match direction {
                PropagateDirection::ToCoarser => {
                    let mut sum_dx = 0i64;
                    let mut sum_dy = 0i64;
                    let mut n = 0i64;
                    for sy in (eta * y as i32)..(eta * (y as i32 + 1)) {
                        for sx in (eta * x as i32)..(eta * (x as i32 + 1)) {
                            if sx < 0
                                || sy < 0
                                || sx >= field.width() as i32
                                || sy >= field.height() as i32
                            {
                                continue;
                            }
                            if !usable(record.get(sx as usize, sy as usize)) {
                                continue;
                            }
                            let Some(off) = field.get(sx as usize, sy as usize) else {
                                continue;
                            };
                            sum_dx += off.dx as i64;
                            sum_dy += off.dy as i64;
                            n += 1;
                        }
                    }
                    if n == 0 {
                        None
                    } else {
                        let dx = (sum_dx as f64 / (eta as i64 * n) as f64).round() as i32;
                        let dy = (sum_dy as f64 / (eta as i64 * n) as f64).round() as i32;
                        Some(Offset::new(dx, dy))
                    }
                }
                PropagateDirection::ToFiner => {
                    let sx = x as i32 / eta;
                    let sy = y as i32 / eta;
                    if sx >= field.width() as i32
                        || sy >= field.height() as i32
                        || !usable(record.get(sx as usize, sy as usize))
                    {
                        None
                    } else {
                        field
                            .get(sx as usize, sy as usize)
                            .map(|off| Offset::new(off.dx * eta, off.dy * eta))
                    }
                }
            };
            let entry = entry.filter(|off| {
                let tx = x as i32 + off.dx;
                let ty = y as i32 + off.dy;
                tx >= 0 && ty >= 0 && tx < target_width as i32 && ty < target_height as i32
            });
            out.set(x, y, entry);
        }
    }
    Ok(out)
}

/// Moves an outlier record one level up or down: a target pixel is an
/// outlier only when its whole source set is marked outlier.
pub fn propagate_outlier_record(
    record: &OutlierRecord,
    direction: PropagateDirection,
    factor: f64,
    target_width: usize,
    target_height: usize,
) -> Result<OutlierRecord> {
    let eta = block_scale(factor)?;
    let mut out = OutlierRecord::unset(target_width, target_height);
    for y in 0..target_height {
        for x in 0..target_width {
            let any_inlier = match direction {
                PropagateDirection::ToCoarser => {
                    let mut any = false;
                    for sy in (eta * y as i32)..(eta * (y as i32 + 1)) {
                        for sx in (eta * x as i32)..(eta * (x as i32 + 1)) {
                            if sx < 0
                                || sy < 0
                                || sx >= record.width() as i32
                                || sy >= record.height() as i32
                            {
                                continue;
                            }
                            if usable(record.get(sx as usize, sy as usize)) {
                                any = true;
                            }
                        }
                    }
                    any
                }
                PropagateDirection::ToFiner => {
                    let sx = (x as i32 / eta).min(record.width() as i32 - 1);
                    let sy = (y as i32 / eta).min(record.height() as i32 - 1);
                    usable(record.get(sx as usize, sy as usize))
                }
            };
            out.set(
                x,
                y,
                if any_inlier {
                    RecordState::Inlier
                } else {
                    RecordState::Outlier
                },
            );
        }
    }
    Ok(out)
}

/// Segments initialized pixels into 4-connected components (neighbors join
/// when their offsets differ by at most `seg_tol` per axis) and removes
/// components smaller than `min_region` pixels.
pub fn remove_small_regions(
    field: &CorrespondenceField,
    min_region: usize,
    seg_tol: i32,
) -> CorrespondenceField {
    let (w, h) = (field.width(), field.height());
    let mut out = field.clone();
    let mut visited = vec![false; w * h];
    let mut component = Vec::new();
    let mut stack = Vec::new();

    for start_y in 0..h {
        for start_x in 0..w {
            let idx = start_y * w + start_x;
            if visited[idx] || field.get(start_x, start_y).is_none() {
                continue;
            }
            component.clear();
            stack.push((start_x, start_y));
            visited[idx] = true;
            while let Some((x, y)) = stack.pop() {
                component.push((x, y));
                let here = field.get(x, y).expect("component pixels are initialized");
                let neighbors = [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ];
                for (nx, ny) in neighbors {
                    if nx >= w || ny >= h || visited[ny * w + nx] {
                        continue;
                    }
                    let Some(there) = field.get(nx, ny) else {
                        continue;
                    };
                    if (here.dx - there.dx).abs() <= seg_tol
                        && (here.dy - there.dy).abs() <= seg_tol
                    {
                        visited[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            if component.len() < min_region {
                for &(x, y) in &component {
                    out.set(x, y, None);
                }
            }
        }
    }
    out
}

fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct PyramidSet {
    /// Source and target gradient pyramids of the forward matcher.
    fwd_src: Vec<GradientImage>,
    fwd_tgt: Vec<GradientImage>,
    /// Source and target gradient pyramids of the backward matcher.
    bwd_src: Vec<GradientImage>,
    bwd_tgt: Vec<GradientImage>,
}

/// Both directions' field-plus-record state at one level.
struct LevelState {
    f_fwd: CorrespondenceField,
    f_bwd: CorrespondenceField,
    o_fwd: OutlierRecord,
    o_bwd: OutlierRecord,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    pyramids: PyramidSet,
    stage_counter: u64,
    diagnostics: Diagnostics,
}

impl Runner<'_> {
    fn dims(&self, level: usize) -> (usize, usize) {
        let g = &self.pyramids.fwd_src[level];
        (g.width(), g.height())
    }

    fn next_seed(&mut self) -> u64 {
        self.stage_counter += 1;
        derive_seed(self.cfg.seed, self.stage_counter)
    }

    /// Basic matching in both directions, then check and record update.
    fn match_check_update(
        &mut self,
        level: usize,
        iterations: usize,
        state: &mut LevelState,
        label: &str,
    ) -> Result<()> {
        let seed_fwd = self.next_seed();
        let seed_bwd = self.next_seed();
        let fwd_params = MatchParams {
            radius: self.cfg.radius_fwd,
            search_bound: self.cfg.search_bound,
            iterations,
            seed: seed_fwd,
        };
        let bwd_params = MatchParams {
            radius: self.cfg.radius_bwd,
            search_bound: self.cfg.search_bound,
            iterations,
            seed: seed_bwd,
        };
        let p = &self.pyramids;
        let (rf, rb) = join(
            || {
                basic_gradient_matching(
                    &p.fwd_src[level],
                    &p.fwd_tgt[level],
                    &state.f_fwd,
                    &fwd_params,
                )
            },
            || {
                basic_gradient_matching(
                    &p.bwd_src[level],
                    &p.bwd_tgt[level],
                    &state.f_bwd,
                    &bwd_params,
                )
            },
        );
        state.f_fwd = rf?;
        state.f_bwd = rb?;

        let fwd_check = consistency_check(&state.f_fwd, &state.f_bwd, self.cfg.eps_check);
        let bwd_check = consistency_check(&state.f_bwd, &state.f_fwd, self.cfg.eps_check);
        state.o_fwd = update_outlier_record(&state.o_fwd, &fwd_check);
        state.o_bwd = update_outlier_record(&state.o_bwd, &bwd_check);

        let (w, h) = self.dims(level);
        self.diagnostics.stages.push(StageReport {
            label: label.to_string(),
            level,
            pixels: w * h,
            fwd_inliers: fwd_check.pass_count(),
            bwd_inliers: bwd_check.pass_count(),
            fwd_check,
            bwd_check,
        });
        Ok(())
    }

    /// Field propagation honoring the record (or everything, under the
    /// propagate-all ablation), plus record propagation unless dropped.
    fn propagate_pair(
        &mut self,
        state: &mut LevelState,
        direction: PropagateDirection,
        target: (usize, usize),
        with_record: bool,
    ) -> Result<()> {
        let field_record_fwd;
        let field_record_bwd;
        if self.cfg.ablation == AblationMode::PropagateAll {
            field_record_fwd = OutlierRecord::all_inlier(state.o_fwd.width(), state.o_fwd.height());
            field_record_bwd = field_record_fwd.clone();
        } else {
            field_record_fwd = state.o_fwd.clone();
            field_record_bwd = state.o_bwd.clone();
        }
        let s = self.cfg.factor;
        let new_f_fwd = propagate_field(
            &state.f_fwd,
            &field_record_fwd,
            direction,
            s,
            target.0,
            target.1,
        )?;
        let new_f_bwd = propagate_field(
            &state.f_bwd,
            &field_record_bwd,
            direction,
            s,
            target.0,
            target.1,
        )?;

        let carry_record = with_record && self.cfg.ablation != AblationMode::NoRecord;
        let (new_o_fwd, new_o_bwd) = if carry_record {
            (
                propagate_outlier_record(&state.o_fwd, direction, s, target.0, target.1)?,
                propagate_outlier_record(&state.o_bwd, direction, s, target.0, target.1)?,
            )
        } else {
            (
                OutlierRecord::unset(target.0, target.1),
                OutlierRecord::unset(target.0, target.1),
            )
        };
        *state = LevelState {
            f_fwd: new_f_fwd,
            f_bwd: new_f_bwd,
            o_fwd: new_o_fwd,
            o_bwd: new_o_bwd,
        };
        Ok(())
    }
}

/// Runs the whole pyramidal pipeline on an image pair and returns the
/// filtered full-resolution forward field with per-stage diagnostics.
///
/// Schedule: seed the start level, run the refinement round trips between
/// the two coarsest working levels, drop the record while propagating the
/// refined field one level down, then descend level by level (matching,
/// checking, updating and propagating) to full resolution, where failing
/// pixels are removed and small constant-motion islands erased.
pub fn pyramidal_matching(
    img1: &RasterImage,
    img2: &RasterImage,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    if img1.width() != img2.width() || img1.height() != img2.height() {
        return Err(PgmError::DimensionMismatch(format!(
            "image pair {}x{} vs {}x{}",
            img1.width(),
            img1.height(),
            img2.width(),
            img2.height()
        )));
    }

    let build = |img: &RasterImage, spaces: &[ColorSpace]| {
        build_gradient_pyramid(
            img,
            spaces,
            cfg.variant,
            cfg.sobel_size,
            cfg.levels,
            cfg.factor,
        )
    };
    let ((fwd_src, fwd_tgt), (bwd_src, bwd_tgt)) = join(
        || {
            join(
                || build(img1, &cfg.spaces_fwd),
                || build(img2, &cfg.spaces_fwd),
            )
        },
        || {
            join(
                || build(img2, &cfg.spaces_bwd),
                || build(img1, &cfg.spaces_bwd),
            )
        },
    );
    let pyramids = PyramidSet {
        fwd_src: fwd_src?,
        fwd_tgt: fwd_tgt?,
        bwd_src: bwd_src?,
        bwd_tgt: bwd_tgt?,
    };

    let m = cfg.start_level;
    let mut runner = Runner {
        cfg,
        pyramids,
        stage_counter: 0,
        diagnostics: Diagnostics::default(),
    };

    let (mw, mh) = runner.dims(m);
    let mut state = LevelState {
        f_fwd: seed_initial_field(
            &runner.pyramids.fwd_src[m],
            &runner.pyramids.fwd_tgt[m],
            cfg,
        )?,
        f_bwd: seed_initial_field(
            &runner.pyramids.bwd_src[m],
            &runner.pyramids.bwd_tgt[m],
            cfg,
        )?,
        o_fwd: OutlierRecord::unset(mw, mh),
        o_bwd: OutlierRecord::unset(mw, mh),
    };

    let descent_start = if cfg.ablation == AblationMode::NoRefinement {
        m
    } else {
        for round in 0..cfg.refine_rounds {
            runner.match_check_update(
                m,
                cfg.iters_other,
                &mut state,
                &format!("refine[{round}] down"),
            )?;
            let finer = runner.dims(m - 1);
            runner.propagate_pair(&mut state, PropagateDirection::ToFiner, finer, true)?;
            runner.match_check_update(
                m - 1,
                cfg.iters_other,
                &mut state,
                &format!("refine[{round}] up"),
            )?;
            let coarser = runner.dims(m);
            runner.propagate_pair(&mut state, PropagateDirection::ToCoarser, coarser, true)?;
        }
        // The single record-free propagation between refinement and descent.
        let finer = runner.dims(m - 1);
        runner.propagate_pair(&mut state, PropagateDirection::ToFiner, finer, false)?;
        m - 1
    };

    for level in (1..=descent_start).rev() {
        runner.match_check_update(level, cfg.iters_other, &mut state, "descend")?;
        let finer = runner.dims(level - 1);
        runner.propagate_pair(&mut state, PropagateDirection::ToFiner, finer, true)?;
    }

    runner.match_check_update(0, cfg.iters_full, &mut state, "full resolution")?;

    // Apply the final record, then erase small constant-motion islands.
    let (w0, h0) = runner.dims(0);
    for y in 0..h0 {
        for x in 0..w0 {
            if state.o_fwd.get(x, y) == RecordState::Outlier {
                state.f_fwd.set(x, y, None);
            }
        }
    }
    let field = remove_small_regions(&state.f_fwd, cfg.min_region, cfg.seg_tol);
    Ok(PipelineOutput {
        field,
        diagnostics: runner.diagnostics,
    })
}
