//! Grid sparsification, match-file export, and a baseline Euclidean
//! sparse-to-dense densifier.
//!
//! The match text format (one `x1 y1 x2 y2` line per match) is what external
//! interpolators consume; the built-in densifier is a stand-in with the same
//! inputs: a nearest-weighted mode and a local-affine mode with fallback.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{PgmError, Result};
use crate::matcher::CorrespondenceField;

/// One source -> target pixel correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchPoint {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

impl MatchPoint {
    pub fn displacement(&self) -> (f64, f64) {
        ((self.x2 - self.x1) as f64, (self.y2 - self.y1) as f64)
    }
}

/// An ordered list of matches with unique source coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    matches: Vec<MatchPoint>,
}

impl MatchSet {
    pub fn new(matches: Vec<MatchPoint>) -> Self {
        Self { matches }
    }

    pub fn points(&self) -> &[MatchPoint] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Dense per-pixel real-valued motion; the final output of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    /// Interleaved `(u, v)` pairs, row-major.
    data: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 2],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 2 {
            return Err(PgmError::InvalidInput(format!(
                "flow buffer length {} does not match {}x{}x2",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = (y * self.width + x) * 2;
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = (y * self.width + x) * 2;
        self.data[i] = u;
        self.data[i + 1] = v;
    }
}

/// Keeps one match per initialized field entry lying on the regular grid
/// cross points (`x` and `y` both multiples of `spacing`).
pub fn sparsify_to_grid(field: &CorrespondenceField, spacing: usize) -> MatchSet {
    assert!(spacing >= 1, "grid spacing must be >= 1");
    let mut matches = Vec::new();
    for y in (0..field.height()).step_by(spacing) {
        for x in (0..field.width()).step_by(spacing) {
            if let Some(off) = field.get(x, y) {
                matches.push(MatchPoint {
                    x1: x as i32,
                    y1: y as i32,
                    x2: x as i32 + off.dx,
                    y2: y as i32 + off.dy,
                });
            }
        }
    }
    MatchSet::new(matches)
}

/// Densification estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolatorMode {
    /// Weighted local affine fit, with nearest-weighted fallback where the
    /// fit is degenerate.
    LocalAffine,
    /// Gaussian-weighted average of the nearest matches.
    NearestWeighted,
}

/// Picks the local-affine estimator only when matches are dense enough:
/// strictly more than `threshold` of the pixel count.
pub fn select_interpolator(
    match_count: usize,
    width: usize,
    height: usize,
    threshold: f64,
) -> InterpolatorMode {
    if match_count as f64 > threshold * (width * height) as f64 {
        InterpolatorMode::LocalAffine
    } else {
        InterpolatorMode::NearestWeighted
    }
}

/// Uniform-bucket spatial index for exact k-nearest-neighbor queries.
struct GridIndex {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl GridIndex {
    fn build(points: &[MatchPoint], width: usize, height: usize) -> Self {
        // Aim for a few points per bucket.
        let n = points.len().max(1);
        let area = (width * height) as f64;
        let cell = (area / n as f64)
            .sqrt()
            .clamp(1.0, width.max(height) as f64);
        let cols = ((width as f64 / cell).ceil() as usize).max(1);
        let rows = ((height as f64 / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, p) in points.iter().enumerate() {
            let cx = ((p.x1 as f64 / cell) as usize).min(cols - 1);
            let cy = ((p.y1 as f64 / cell) as usize).min(rows - 1);
            buckets[cy * cols + cx].push(i as u32);
        }
        Self {
            cell,
            cols,
            rows,
            buckets,
        }
    }

    /// Indices and squared distances of the `k` nearest matches to `(px, py)`,
    /// by expanding ring search. Exact: the search only stops once no farther
    /// ring can contain a closer point.
    fn nearest(&self, points: &[MatchPoint], px: f64, py: f64, k: usize) -> Vec<(u32, f64)> {
        let cx = ((px / self.cell) as isize).clamp(0, self.cols as isize - 1);
        let cy = ((py / self.cell) as isize).clamp(0, self.rows as isize - 1);
        let mut best: Vec<(u32, f64)> = Vec::with_capacity(k + 1);
        let max_ring = self.cols.max(self.rows);

        let consider = |idx: u32, best: &mut Vec<(u32, f64)>| {
            let p = &points[idx as usize];
            let dx = p.x1 as f64 - px;
            let dy = p.y1 as f64 - py;
            let d2 = dx * dx + dy * dy;
            if best.len() < k {
                best.push((idx, d2));
                best.sort_by(|a, b| a.1.total_cmp(&b.1));
            } else if d2 < best[k - 1].1 {
                best[k - 1] = (idx, d2);
                best.sort_by(|a, b| a.1.total_cmp(&b.1));
            }
        };

        for ring in 0..=max_ring {
            // Any point in a cell at Chebyshev cell-distance `ring` is at
            // least (ring - 1) * cell away.
            if best.len() == k {
                let reach = (ring as f64 - 1.0) * self.cell;
                if reach > 0.0 && best[k - 1].1 <= reach * reach {
                    break;
                }
            }
            let r = ring as isize;
            for by in (cy - r)..=(cy + r) {
                if by < 0 || by >= self.rows as isize {
                    continue;
                }
                for bx in (cx - r)..=(cx + r) {
                    if bx < 0 || bx >= self.cols as isize {
                        continue;
                    }
                    if (bx - cx).abs().max((by - cy).abs()) != r {
                        continue;
                    }
                    for &idx in &self.buckets[by as usize * self.cols + bx as usize] {
                        consider(idx, &mut best);
                    }
                }
            }
        }
        best
    }
}

fn gaussian_weights(neighbors: &[(u32, f64)]) -> Vec<f64> {
    // Bandwidth: median neighbor distance (at least one pixel).
    let mut dists: Vec<f64> = neighbors.iter().map(|&(_, d2)| d2.sqrt()).collect();
    dists.sort_by(f64::total_cmp);
    let sigma = dists[dists.len() / 2].max(1.0);
    neighbors
        .iter()
        .map(|&(_, d2)| (-d2 / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn nearest_weighted(
    points: &[MatchPoint],
    neighbors: &[(u32, f64)],
    weights: &[f64],
) -> (f32, f32) {
    let mut wu = 0.0;
    let mut wv = 0.0;
    let mut wsum = 0.0;
    for (&(idx, _), &w) in neighbors.iter().zip(weights) {
        let (du, dv) = points[idx as usize].displacement();
        wu += w * du;
        wv += w * dv;
        wsum += w;
    }
    ((wu / wsum) as f32, (wv / wsum) as f32)
}

/// Weighted least-squares affine fit of the displacement around `(px, py)`.
/// Returns `None` when the normal equations are rank-deficient.
#[allow(clippy::needless_range_loop)]
fn local_affine(
    points: &[MatchPoint],
    neighbors: &[(u32, f64)],
    weights: &[f64],
    px: f64,
    py: f64,
) -> Option<(f32, f32)> {
    // Basis centered at the query pixel: [x - px, y - py, 1]; the constant
    // coefficient is then the displacement at the pixel itself.
    let mut m = [[0.0f64; 3]; 3];
    let mut bu = [0.0f64; 3];
    let mut bv = [0.0f64; 3];
    for (&(idx, _), &w) in neighbors.iter().zip(weights) {
        let p = &points[idx as usize];
        let phi = [p.x1 as f64 - px, p.y1 as f64 - py, 1.0];
        let (du, dv) = p.displacement();
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += w * phi[i] * phi[j];
            }
            bu[i] += w * phi[i] * du;
            bv[i] += w * phi[i] * dv;
        }
    }

    // Gaussian elimination with partial pivoting on [M | bu bv].
    let mut a = [[0.0f64; 5]; 3];
    for i in 0..3 {
        a[i][..3].copy_from_slice(&m[i]);
        a[i][3] = bu[i];
        a[i][4] = bv[i];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for j in col..5 {
                a[row][j] -= f * a[col][j];
            }
        }
    }
    let mut cu = [0.0f64; 3];
    let mut cv = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut su = a[i][3];
        let mut sv = a[i][4];
        for j in i + 1..3 {
            su -= a[i][j] * cu[j];
            sv -= a[i][j] * cv[j];
        }
        cu[i] = su / a[i][i];
        cv[i] = sv / a[i][i];
    }
    Some((cu[2] as f32, cv[2] as f32))
}

/// Produces a dense flow field from sparse matches.
///
/// Per pixel, the `k` nearest matches under Euclidean distance feed either a
/// Gaussian-weighted average of their displacements or a weighted affine
/// fit; a degenerate fit falls back to the weighted average.
pub fn densify(
    matches: &MatchSet,
    width: usize,
    height: usize,
    mode: InterpolatorMode,
    k: usize,
) -> Result<FlowField> {
    if matches.is_empty() {
        return Err(PgmError::InvalidInput(
            "cannot densify an empty match set".into(),
        ));
    }
    let points = matches.points();
    let index = GridIndex::build(points, width, height);
    let k = k.min(points.len()).max(1);

    let mut rows: Vec<Vec<f32>> = vec![Vec::new(); height];
    rows.par_iter_mut().enumerate().for_each(|(y, row)| {
        row.reserve(width * 2);
        for x in 0..width {
            let (px, py) = (x as f64, y as f64);
            let neighbors = index.nearest(points, px, py, k);
            let weights = gaussian_weights(&neighbors);
            let (u, v) = match mode {
                InterpolatorMode::NearestWeighted => nearest_weighted(points, &neighbors, &weights),
                InterpolatorMode::LocalAffine => local_affine(points, &neighbors, &weights, px, py)
                    .unwrap_or_else(|| nearest_weighted(points, &neighbors, &weights)),
            };
            row.push(u);
            row.push(v);
        }
    });
    FlowField::from_data(width, height, rows.concat())
}

/// Writes matches as text, one `x1 y1 x2 y2` line per match.
pub fn export_matches(matches: &MatchSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for m in matches.points() {
        writeln!(out, "{} {} {} {}", m.x1, m.y1, m.x2, m.y2)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a match file. Extra whitespace is tolerated and blank lines are
/// skipped; any other malformed line is rejected with its 1-based number.
pub fn import_matches(path: impl AsRef<Path>) -> Result<MatchSet> {
    let reader = BufReader::new(File::open(path)?);
    let mut matches = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(PgmError::Parse {
                line: i + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let mut vals = [0i32; 4];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse().map_err(|_| PgmError::Parse {
                line: i + 1,
                message: format!("not an integer: '{f}'"),
            })?;
        }
        matches.push(MatchPoint {
            x1: vals[0],
            y1: vals[1],
            x2: vals[2],
            y2: vals[3],
        });
    }
    Ok(MatchSet::new(matches))
}
