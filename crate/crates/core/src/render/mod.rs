//! Rasterization of scenarios, run frames and ground-truth heatmaps.
//!
//! Frames encode 2.1D depth through draw order: background, walls, `Above`
//! and `Bounce` obstacles, then the balls, then `Under` obstacles painted
//! again on top so they occlude any ball passing beneath them.

pub mod codec;
mod image;
mod palette;

pub use image::{Heatmap, Image, Planes};
pub use palette::{texture_pixel, Palette, MIN_CONTRAST, TEXTURE_COUNT};

use crate::geometry::Vec2;
use crate::physics::{Background, BoardSpec, ObstacleType, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("palette index {0} out of range")]
    BadPaletteIndex(usize),
    #[error("unknown texture id {0}")]
    BadTextureId(usize),
    #[error("ball {ball} at ({x:.3}, {y:.3}) is outside the playable area")]
    OutOfBounds { ball: usize, x: f64, y: f64 },
    #[error("no frames given")]
    EmptyInput,
    #[error("frame count {requested} exceeds the {available} frames available")]
    InvalidCount { requested: usize, available: usize },
    #[error("frames have mismatched dimensions")]
    DimensionMismatch,
    #[error("malformed image data: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ball discs are anti-aliased with an 8x8 grid of coverage samples per cell.
const AA_GRID: usize = 8;

/// Precomputed scenario raster reused across the frames of a run.
#[derive(Clone, Debug)]
pub struct SceneRenderer {
    base: Image,
    /// Cells of `Under` obstacles with their colour, repainted after the balls.
    overlay: Vec<(usize, [f64; 3])>,
    board: BoardSpec,
    ball_color: [f64; 3],
}

impl SceneRenderer {
    pub fn new(scenario: &Scenario, palette: &Palette) -> Result<Self, RenderError> {
        let board = scenario.board;
        let (h, w) = (board.height, board.width);
        let mut base = match scenario.background {
            Background::Solid(i) => Image::filled(h, w, palette.color(i).ok_or(RenderError::BadPaletteIndex(i))?),
            Background::Texture(id) => {
                let mut img = Image::filled(h, w, [0.0; 3]);
                for r in 0..h {
                    for c in 0..w {
                        img.set_pixel(r, c, texture_pixel(id, r, c).ok_or(RenderError::BadTextureId(id))?);
                    }
                }
                img
            }
        };
        for r in 0..h {
            for c in 0..w {
                if board.is_wall_cell(r, c) {
                    base.set_pixel(r, c, palette.wall);
                }
            }
        }
        let mut overlay = Vec::new();
        for o in &scenario.obstacles {
            let color = palette
                .color(o.color_index)
                .ok_or(RenderError::BadPaletteIndex(o.color_index))?;
            for (i, _) in o.shape.rasterize(&board).iter().enumerate().filter(|(_, &c)| c) {
                base.set_pixel(i / w, i % w, color);
                if o.kind == ObstacleType::Under {
                    overlay.push((i, color));
                }
            }
        }
        Ok(Self {
            base,
            overlay,
            board,
            ball_color: palette.ball,
        })
    }

    pub fn scenario_image(&self) -> &Image {
        &self.base
    }

    pub fn frame(&self, positions: &[Vec2], radius: f64) -> Result<Image, RenderError> {
        self.frame_with_radii(positions, &vec![radius; positions.len()])
    }

    pub fn frame_with_radii(&self, positions: &[Vec2], radii: &[f64]) -> Result<Image, RenderError> {
        let lo = self.board.interior_min();
        let hi = self.board.interior_max();
        const TOL: f64 = 1e-6;
        for (ball, p) in positions.iter().enumerate() {
            if !(p.x >= lo.x - TOL && p.x <= hi.x + TOL && p.y >= lo.y - TOL && p.y <= hi.y + TOL) {
                return Err(RenderError::OutOfBounds { ball, x: p.x, y: p.y });
            }
        }
        let mut img = self.base.clone();
        for (p, &r) in positions.iter().zip(radii) {
            draw_disc(&mut img, *p, r, self.ball_color);
        }
        let n = self.board.cells();
        for &(i, color) in &self.overlay {
            img.data[i] = color[0];
            img.data[n + i] = color[1];
            img.data[2 * n + i] = color[2];
        }
        Ok(img)
    }
}

/// Fraction of the cell centred at `(col, row)` covered by the disc.
pub fn disc_coverage(center: Vec2, radius: f64, row: usize, col: usize, grid: usize) -> f64 {
    let r2 = radius * radius;
    let mut hits = 0usize;
    for sy in 0..grid {
        let y = row as f64 - 0.5 + (sy as f64 + 0.5) / grid as f64;
        for sx in 0..grid {
            let x = col as f64 - 0.5 + (sx as f64 + 0.5) / grid as f64;
            let (dx, dy) = (x - center.x, y - center.y);
            if dx * dx + dy * dy <= r2 {
                hits += 1;
            }
        }
    }
    hits as f64 / (grid * grid) as f64
}

fn draw_disc(img: &mut Image, center: Vec2, radius: f64, color: [f64; 3]) {
    let n = img.height * img.width;
    let r0 = (center.y - radius - 1.0).floor().max(0.0) as usize;
    let r1 = ((center.y + radius + 1.0).ceil() as usize).min(img.height - 1);
    let c0 = (center.x - radius - 1.0).floor().max(0.0) as usize;
    let c1 = ((center.x + radius + 1.0).ceil() as usize).min(img.width - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let cov = disc_coverage(center, radius, row, col, AA_GRID);
            if cov > 0.0 {
                let i = row * img.width + col;
                for (ch, &k) in color.iter().enumerate() {
                    let v = &mut img.data[ch * n + i];
                    *v = *v * (1.0 - cov) + k * cov;
                }
            }
        }
    }
}

/// Background, wall band and obstacles in list order.
pub fn render_scenario(scenario: &Scenario, palette: &Palette) -> Result<Image, RenderError> {
    Ok(SceneRenderer::new(scenario, palette)?.base)
}

/// Scenario with balls of `radius` drawn at `positions`, honouring depth flags.
pub fn render_frame(
    scenario: &Scenario,
    positions: &[Vec2],
    radius: f64,
    palette: &Palette,
) -> Result<Image, RenderError> {
    SceneRenderer::new(scenario, palette)?.frame(positions, radius)
}

/// Sum of unit-peak isotropic Gaussians centred on each ball.
///
/// # Panics
///
/// If `sigma` is not strictly positive.
pub fn render_heatmap(positions: &[Vec2], sigma: f64, board: &BoardSpec) -> Heatmap {
    assert!(sigma > 0.0, "heatmap sigma must be positive");
    let mut hm = Heatmap::zeros(board.height, board.width);
    let k = -1.0 / (2.0 * sigma * sigma);
    for row in 0..board.height {
        for col in 0..board.width {
            let mut acc = 0.0;
            for p in positions {
                let dx = col as f64 - p.x;
                let dy = row as f64 - p.y;
                acc += ((dx * dx + dy * dy) * k).exp();
            }
            hm.data[row * board.width + col] = acc;
        }
    }
    hm
}

/// Per-pixel, per-channel lower median of `frames`.
pub fn lower_median(frames: &[Image]) -> Result<Image, RenderError> {
    let first = frames.first().ok_or(RenderError::EmptyInput)?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(RenderError::DimensionMismatch);
    }
    let mid = (frames.len() - 1) / 2;
    let mut column = vec![0.0; frames.len()];
    let mut out = first.clone();
    for (i, o) in out.data.iter_mut().enumerate() {
        for (slot, f) in column.iter_mut().zip(frames) {
            *slot = f.data[i];
        }
        column.select_nth_unstable_by(mid, f64::total_cmp);
        *o = column[mid];
    }
    Ok(out)
}

/// Median of the first `count` frames; even counts take the lower median.
pub fn median_background(frames: &[Image], count: usize) -> Result<Image, RenderError> {
    if frames.is_empty() || count == 0 {
        return Err(RenderError::EmptyInput);
    }
    if count > frames.len() {
        return Err(RenderError::InvalidCount {
            requested: count,
            available: frames.len(),
        });
    }
    lower_median(&frames[..count])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{Obstacle, ObstacleShape};

    fn scene() -> Scenario {
        let board = BoardSpec::square(32, 2).unwrap();
        let mut s = Scenario::empty(board, Background::Solid(0));
        let rect = |x: f64, kind, color_index| Obstacle {
            shape: ObstacleShape::axis_aligned_rect(Vec2::new(x, 15.5), Vec2::new(3.0, 3.0)),
            kind,
            color_index,
        };
        s.obstacles = vec![rect(8.5, ObstacleType::Under, 2), rect(20.5, ObstacleType::Above, 4)];
        s
    }

    #[test]
    fn empty_scenario_is_background_and_walls() {
        let p = Palette::default();
        let board = BoardSpec::square(32, 2).unwrap();
        let img = render_scenario(&Scenario::empty(board, Background::Solid(3)), &p).unwrap();
        for r in 0..32 {
            for c in 0..32 {
                let want = if board.is_wall_cell(r, c) { p.wall } else { p.colors[3] };
                assert_eq!(img.pixel(r, c), want);
            }
        }
    }

    #[test]
    fn obstacle_colors_at_centroids() {
        let p = Palette::default();
        let img = render_scenario(&scene(), &p).unwrap();
        assert_eq!(img.pixel(15, 8), p.colors[2]);
        assert_eq!(img.pixel(15, 20), p.colors[4]);
        assert_eq!(img, render_scenario(&scene(), &p).unwrap());
    }

    #[test]
    fn depth_rule() {
        let p = Palette::default();
        let s = scene();
        let under = render_frame(&s, &[Vec2::new(8.0, 15.0)], 2.0, &p).unwrap();
        assert_eq!(under.pixel(15, 8), p.colors[2]);
        let above = render_frame(&s, &[Vec2::new(20.0, 15.0)], 2.0, &p).unwrap();
        assert_eq!(above.pixel(15, 20), p.ball);
        assert_eq!(render_frame(&s, &[], 2.0, &p).unwrap(), render_scenario(&s, &p).unwrap());
    }

    #[test]
    fn bad_inputs() {
        let p = Palette::default();
        let mut s = scene();
        assert!(matches!(
            render_frame(&s, &[Vec2::new(0.0, 15.0)], 2.0, &p),
            Err(RenderError::OutOfBounds { ball: 0, .. })
        ));
        s.obstacles[0].color_index = 99;
        assert!(matches!(render_scenario(&s, &p), Err(RenderError::BadPaletteIndex(99))));
        s.obstacles.clear();
        s.background = Background::Texture(7);
        assert!(matches!(render_scenario(&s, &p), Err(RenderError::BadTextureId(7))));
    }

    #[test]
    fn heatmap_values() {
        let board = BoardSpec::square(64, 2).unwrap();
        let hm = render_heatmap(&[Vec2::new(32.0, 32.0)], 2.0, &board);
        assert_eq!(hm.at(32, 32), 1.0);
        assert!((hm.at(32, 34) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(render_heatmap(&[], 2.0, &board).data.iter().all(|&v| v == 0.0));
        let two = render_heatmap(&[Vec2::new(12.0, 20.0), Vec2::new(52.0, 20.0)], 2.0, &board);
        assert!((two.at(20, 12) - 1.0).abs() < 1e-6 && (two.at(20, 52) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn median_background_rules() {
        let a = Image::filled(16, 16, [0.2, 0.2, 0.2]);
        let mut b = a.clone();
        b.set_pixel(3, 3, [1.0, 0.4, 0.75]);
        let frames = vec![b.clone(), a.clone(), a.clone(), a.clone()];
        assert_eq!(median_background(&frames, 1).unwrap(), b);
        assert_eq!(median_background(&frames, 4).unwrap(), a);
        // even count: lower median of {b, a} is a
        assert_eq!(median_background(&frames, 2).unwrap(), a);
        assert!(matches!(median_background(&frames, 5), Err(RenderError::InvalidCount { .. })));
        assert!(matches!(median_background(&[], 1), Err(RenderError::EmptyInput)));
    }
}
