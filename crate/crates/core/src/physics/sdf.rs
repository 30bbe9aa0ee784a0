//! Exact Euclidean signed distance fields over occupancy rasters.
//!
//! Distances are measured between pixel centres and then shifted by half a
//! pixel, so the zero level set runs along the cell boundaries:
//!
//! * outside cells: `dist(centre, nearest occupied centre) - 0.5`
//! * inside cells: `-(dist(centre, nearest free centre) - 0.5)`
//!
//! Cells beyond the raster border count as free, so a full raster still has a
//! finite (negative) field.

use super::PhysicsError;

const INF: f64 = 1e20;

/// Squared 1D distance transform of `f` (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -INF, so this never underflows.
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every cell to the nearest `true` cell.
pub fn squared_distance_transform(height: usize, width: usize, seeds: &[bool]) -> Vec<f64> {
    assert_eq!(seeds.len(), height * width);
    let mut grid: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { INF }).collect();
    let n = height.max(width);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for c in 0..width {
        for r in 0..height {
            f[r] = grid[r * width + c];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for r in 0..height {
            grid[r * width + c] = out[r];
        }
    }
    for r in 0..height {
        f[..width].copy_from_slice(&grid[r * width..(r + 1) * width]);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        grid[r * width..(r + 1) * width].copy_from_slice(&out[..width]);
    }
    grid
}

/// Signed distance field of an occupancy raster (row-major, `height * width`).
pub fn sdf_from_mask(height: usize, width: usize, occupancy: &[bool]) -> Result<Vec<f64>, PhysicsError> {
    if occupancy.len() != height * width {
        return Err(PhysicsError::InvalidShape(format!(
            "occupancy has {} cells, expected {}x{}",
            occupancy.len(),
            height,
            width
        )));
    }
    if !occupancy.iter().any(|&o| o) {
        return Err(PhysicsError::EmptyMask);
    }
    let to_occupied = squared_distance_transform(height, width, occupancy);
    let free: Vec<bool> = occupancy.iter().map(|&o| !o).collect();
    let to_free = if free.iter().any(|&f| f) {
        Some(squared_distance_transform(height, width, &free))
    } else {
        None
    };

    let mut sdf = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if occupancy[i] {
                // Nearest free centre, including the virtual ring around the raster.
                let border = (r + 1).min(c + 1).min(height - r).min(width - c) as f64;
                let inner = to_free.as_ref().map_or(INF, |d| d[i].sqrt());
                sdf[i] = -(inner.min(border) - 0.5);
            } else {
                sdf[i] = to_occupied[i].sqrt() - 0.5;
            }
        }
    }
    Ok(sdf)
}

/// Bilinear sample of a cell-centred field; coordinates are clamped to the raster.
pub fn sample_bilinear(field: &[f64], height: usize, width: usize, x: f64, y: f64) -> f64 {
    let xc = x.clamp(0.0, (width - 1) as f64);
    let yc = y.clamp(0.0, (height - 1) as f64);
    let x0 = (xc.floor() as usize).min(width.saturating_sub(2));
    let y0 = (yc.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let a = field[y0 * width + x0];
    let b = field[y0 * width + x1];
    let c = field[y1 * width + x0];
    let d = field[y1 * width + x1];
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}
