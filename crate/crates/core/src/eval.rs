//! Blob detection, trajectory and video metrics, and the obstacle-free
//! simulator baseline.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{render_run, MetaSample};
use crate::physics::{simulate_without_obstacles, BoardSpec, PhysicsError};
use crate::render::{render_heatmap, Heatmap, Image, Palette, RenderError};
use crate::Vec2;

/// Detection threshold as a fraction of the heatmap peak.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MIN_AREA: usize = 4;
/// Gaussian width used to render ball heatmaps for counting.
pub const HEATMAP_SIGMA: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("horizon {horizon} exceeds the {available} frames available")]
    HorizonTooLong { horizon: usize, available: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: Vec2,
    /// Sum of heatmap values in the component.
    pub mass: f64,
    pub area: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobDetection {
    /// Sorted by descending mass.
    pub blobs: Vec<Blob>,
    pub threshold: f64,
    pub min_area: usize,
}

impl BlobDetection {
    pub fn centers(&self) -> Vec<Vec2> {
        self.blobs.iter().map(|b| b.center).collect()
    }
}

/// Thresholds `hm`, labels 8-connected components and returns the
/// mass-weighted centroid of every component with at least `min_area` cells.
///
/// # Panics
///
/// If `threshold` is not strictly positive.
pub fn detect_blobs(hm: &Heatmap, threshold: f64, min_area: usize) -> BlobDetection {
    assert!(threshold > 0.0, "blob threshold must be positive");
    let (h, w) = (hm.height, hm.width);
    let mut seen = vec![false; h * w];
    let mut blobs = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if seen[start] || !(hm.data[start] >= threshold) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut mass, mut sx, mut sy, mut area) = (0.0, 0.0, 0.0, 0usize);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            let v = hm.data[i];
            mass += v;
            sx += v * c as f64;
            sy += v * r as f64;
            area += 1;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if !seen[j] && hm.data[j] >= threshold {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if area >= min_area {
            blobs.push(Blob {
                center: Vec2::new(sx / mass, sy / mass),
                mass,
                area,
            });
        }
    }
    // stable, so equal masses keep raster order
    blobs.sort_by(|a, b| b.mass.total_cmp(&a.mass));
    BlobDetection {
        blobs,
        threshold,
        min_area,
    }
}

/// [`detect_blobs`] at the default fraction of the heatmap peak.
pub fn detect_blobs_default(hm: &Heatmap) -> BlobDetection {
    let peak = hm.data.iter().copied().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return BlobDetection {
            blobs: Vec::new(),
            threshold: f64::MIN_POSITIVE,
            min_area: DEFAULT_MIN_AREA,
        };
    }
    detect_blobs(hm, DEFAULT_RELATIVE_THRESHOLD * peak, DEFAULT_MIN_AREA)
}

/// Minimum-cost assignment of rows to distinct columns for an `n x m` cost
/// matrix with `n <= m` (Hungarian method with potentials). Returns the
/// column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs at least as many columns as rows");
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Total Euclidean distance of the optimal one-to-one matching and the
/// number of matched pairs.
fn matched_distance(a: &[Vec2], b: &[Vec2]) -> (f64, usize) {
    let (rows, cols) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if rows.is_empty() {
        return (0.0, 0);
    }
    let cost: Vec<Vec<f64>> = rows.iter().map(|p| cols.iter().map(|q| p.distance(*q)).collect()).collect();
    let total = hungarian(&cost).iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (total, rows.len())
}

/// Mean distance of optimally matched centres, divided by the board
/// diagonal. Unmatched centres are ignored; with no matches the error is 0.
pub fn position_error(pred: &[Vec2], gt: &[Vec2], board: &BoardSpec) -> f64 {
    let (total, n) = matched_distance(pred, gt);
    if n == 0 {
        return 0.0;
    }
    total / n as f64 / board.diagonal()
}

/// Mean over frames of the summed squared pixel difference, rescaled to a
/// 64x64 board.
pub fn video_l2(pred: &[Image], gt: &[Image]) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::ShapeMismatch(format!("{} vs {} frames", pred.len(), gt.len())));
    }
    let first = gt.first().ok_or(EvalError::EmptyInput)?;
    if pred.iter().chain(gt).any(|f| !f.same_shape(first)) {
        return Err(EvalError::ShapeMismatch("frame sizes differ".into()));
    }
    let scale = 64.0 * 64.0 / (first.height * first.width) as f64;
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| p.data.iter().zip(&g.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(scale * total / pred.len() as f64)
}

/// Metrics at one horizon; means and sample standard deviations over samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub samples: usize,
    pub object_count_mean: f64,
    pub object_count_std: f64,
    pub video_l2_mean: f64,
    pub video_l2_std: f64,
    pub position_error_mean: f64,
    pub position_error_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<HorizonMetrics>,
}

impl MetricsReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "horizon,samples,objects_mean,objects_std,video_l2_mean,video_l2_std,position_error_mean,position_error_std"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.horizon,
                r.samples,
                r.object_count_mean,
                r.object_count_std,
                r.video_l2_mean,
                r.video_l2_std,
                r.position_error_mean,
                r.position_error_std
            )?;
        }
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:>7} | {:>15} | {:>19} | {:>19}\n", "T_test", "# obj.", "Vid. L2", "Pos. err.");
        s.push_str(&format!("{:-<8}+{:-<17}+{:-<21}+{:-<20}\n", "", "", "", ""));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>7} | {:>6.3} ± {:<6.3} | {:>8.3} ± {:<8.3} | {:>8.5} ± {:<8.5}",
                r.horizon,
                r.object_count_mean,
                r.object_count_std,
                r.video_l2_mean,
                r.video_l2_std,
                r.position_error_mean,
                r.position_error_std
            );
        }
        s
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Per-sample values at each horizon: (objects, video L2, position error).
fn baseline_sample(
    s: &MetaSample,
    horizons: &[usize],
    palette: &Palette,
) -> Result<Vec<(f64, f64, f64)>, EvalError> {
    let gt = &s.prediction_run;
    let longest = horizons.iter().copied().max().unwrap_or(0);
    let pred = simulate_without_obstacles(&s.scenario, &gt.initial_states(), longest)?;
    let pred_frames = render_run(&s.scenario, &pred, palette)?;
    let gt_frames = render_run(&s.scenario, gt, palette)?;
    let board = &s.scenario.board;
    let mut counts = Vec::with_capacity(longest);
    let mut errors = Vec::with_capacity(longest);
    for t in 0..longest {
        let p = pred.positions_at(t);
        let hm = render_heatmap(&p, HEATMAP_SIGMA, board);
        counts.push(detect_blobs_default(&hm).blobs.len() as f64);
        errors.push(position_error(&p, &gt.positions_at(t), board));
    }
    horizons
        .iter()
        .map(|&h| {
            let avg = |v: &[f64]| v[..h].iter().sum::<f64>() / h as f64;
            Ok((avg(&counts), video_l2(&pred_frames[..h], &gt_frames[..h])?, avg(&errors)))
        })
        .collect()
}

/// Scores the obstacle-free simulator against the ground-truth prediction
/// runs. At horizon `T` every metric is averaged over frames `0..T`; the
/// baseline starts from each prediction run's initial state.
pub fn evaluate_baseline(samples: &[MetaSample], horizons: &[usize], palette: &Palette) -> Result<MetricsReport, EvalError> {
    if samples.is_empty() || horizons.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for s in samples {
        for &h in horizons {
            if h == 0 || h > s.prediction_run.frames {
                return Err(EvalError::HorizonTooLong {
                    horizon: h,
                    available: s.prediction_run.frames,
                });
            }
        }
    }
    let per_sample = samples
        .par_iter()
        .map(|s| baseline_sample(s, horizons, palette))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = horizons
        .iter()
        .enumerate()
        .map(|(k, &horizon)| {
            let col = |f: fn(&(f64, f64, f64)) -> f64| per_sample.iter().map(|v| f(&v[k])).collect::<Vec<_>>();
            let (object_count_mean, object_count_std) = mean_std(&col(|v| v.0));
            let (video_l2_mean, video_l2_std) = mean_std(&col(|v| v.1));
            let (position_error_mean, position_error_std) = mean_std(&col(|v| v.2));
            HorizonMetrics {
                horizon,
                samples: samples.len(),
                object_count_mean,
                object_count_std,
                video_l2_mean,
                video_l2_std,
                position_error_mean,
                position_error_std,
            }
        })
        .collect();
    Ok(MetricsReport { rows })
}
