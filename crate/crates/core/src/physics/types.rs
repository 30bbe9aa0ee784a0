use serde::{Deserialize, Serialize};

use super::sdf::{sample_bilinear, sdf_from_mask};
use super::PhysicsError;
use crate::geometry::Vec2;

/// Board lattice `{0..H-1} x {0..W-1}` with a solid wall band of
/// `wall_thickness` cells along every edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub height: usize,
    pub width: usize,
    pub wall_thickness: usize,
}

impl BoardSpec {
    pub fn new(height: usize, width: usize, wall_thickness: usize) -> Result<Self, PhysicsError> {
        let board = Self {
            height,
            width,
            wall_thickness,
        };
        board.validate()?;
        Ok(board)
    }

    pub fn square(size: usize, wall_thickness: usize) -> Result<Self, PhysicsError> {
        Self::new(size, size, wall_thickness)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.height < 16 || self.width < 16 {
            return Err(PhysicsError::InvalidBoard(format!(
                "board {}x{} is smaller than 16x16",
                self.height, self.width
            )));
        }
        if self.wall_thickness == 0 {
            return Err(PhysicsError::InvalidBoard("wall thickness must be at least 1".into()));
        }
        if 2 * self.wall_thickness >= self.height.min(self.width) {
            return Err(PhysicsError::InvalidBoard("walls leave no playable interior".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Lower-left corner of the playable region (the interior wall faces).
    pub fn interior_min(&self) -> Vec2 {
        let t = self.wall_thickness as f64 - 0.5;
        Vec2::new(t, t)
    }

    pub fn interior_max(&self) -> Vec2 {
        let t = self.wall_thickness as f64 + 0.5;
        Vec2::new(self.width as f64 - t, self.height as f64 - t)
    }

    pub fn is_wall_cell(&self, row: usize, col: usize) -> bool {
        let t = self.wall_thickness;
        row < t || col < t || row >= self.height - t || col >= self.width - t
    }

    pub fn diagonal(&self) -> f64 {
        (self.height as f64).hypot(self.width as f64)
    }

    /// True if a disc of `radius` at `p` lies inside the walls, up to `tol`.
    pub fn contains_disc(&self, p: Vec2, radius: f64, tol: f64) -> bool {
        let lo = self.interior_min();
        let hi = self.interior_max();
        p.x - radius >= lo.x - tol
            && p.x + radius <= hi.x + tol
            && p.y - radius >= lo.y - tol
            && p.y + radius <= hi.y + tol
    }
}

/// How a ball interacts with an obstacle: it bounces off it, passes above
/// it, or passes under it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObstacleType {
    Bounce,
    Above,
    Under,
}

impl ObstacleType {
    pub const ALL: [ObstacleType; 3] = [ObstacleType::Bounce, ObstacleType::Above, ObstacleType::Under];

    pub fn is_solid(self) -> bool {
        self == ObstacleType::Bounce
    }
}

/// Curved obstacle given by a board-sized occupancy raster. The signed
/// distance field is derived from the raster and never serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "MaskRepr", try_from = "MaskRepr")]
pub struct MaskShape {
    height: usize,
    width: usize,
    occupancy: Vec<bool>,
    sdf: Vec<f64>,
    anchor: Vec2,
}

impl MaskShape {
    pub fn from_occupancy(height: usize, width: usize, occupancy: Vec<bool>) -> Result<Self, PhysicsError> {
        let sdf = sdf_from_mask(height, width, &occupancy)?;
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in occupancy.iter().enumerate().filter(|(_, &o)| o) {
            sx += (i % width) as f64;
            sy += (i / width) as f64;
            n += 1;
        }
        let anchor = Vec2::new(sx / n as f64, sy / n as f64);
        Ok(Self {
            height,
            width,
            occupancy,
            sdf,
            anchor,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn sdf(&self) -> &[f64] {
        &self.sdf
    }

    /// Centroid of the occupied cells.
    pub fn anchor(&self) -> Vec2 {
        self.anchor
    }

    pub fn signed_distance(&self, p: Vec2) -> f64 {
        sample_bilinear(&self.sdf, self.height, self.width, p.x, p.y)
    }

    /// Outward unit normal from central differences of the interpolated field.
    pub fn normal(&self, p: Vec2) -> Option<Vec2> {
        const H: f64 = 0.5;
        let dx = self.signed_distance(p + Vec2::new(H, 0.0)) - self.signed_distance(p - Vec2::new(H, 0.0));
        let dy = self.signed_distance(p + Vec2::new(0.0, H)) - self.signed_distance(p - Vec2::new(0.0, H));
        Vec2::new(dx, dy).normalized()
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    height: usize,
    width: usize,
    /// Row-major occupancy packed MSB-first into bytes, hex encoded.
    bits: String,
}

impl From<MaskShape> for MaskRepr {
    fn from(m: MaskShape) -> Self {
        let mut bytes = vec![0u8; m.occupancy.len().div_ceil(8)];
        for (i, &o) in m.occupancy.iter().enumerate() {
            if o {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        let bits = bytes.iter().map(|b| format!("{b:02x}")).collect();
        MaskRepr {
            height: m.height,
            width: m.width,
            bits,
        }
    }
}

impl TryFrom<MaskRepr> for MaskShape {
    type Error = String;

    fn try_from(r: MaskRepr) -> Result<Self, String> {
        let n = r.height * r.width;
        if r.bits.len() != 2 * n.div_ceil(8) {
            return Err(format!("mask bit string has length {}", r.bits.len()));
        }
        let bytes = (0..r.bits.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&r.bits[i..i + 2], 16))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(|e| e.to_string())?;
        let occupancy = (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        MaskShape::from_occupancy(r.height, r.width, occupancy).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObstacleShape {
    /// Rectangle rotated by `angle` radians about its centre.
    RotatedRect {
        center: Vec2,
        half_extents: Vec2,
        angle: f64,
    },
    Mask(MaskShape),
}

impl ObstacleShape {
    pub fn axis_aligned_rect(center: Vec2, half_extents: Vec2) -> Self {
        ObstacleShape::RotatedRect {
            center,
            half_extents,
            angle: 0.0,
        }
    }

    pub fn validate(&self, board: &BoardSpec) -> Result<(), PhysicsError> {
        match self {
            ObstacleShape::RotatedRect {
                center,
                half_extents,
                angle,
            } => {
                let finite = center.x.is_finite()
                    && center.y.is_finite()
                    && half_extents.x.is_finite()
                    && half_extents.y.is_finite()
                    && angle.is_finite();
                if !finite || half_extents.x <= 0.0 || half_extents.y <= 0.0 {
                    return Err(PhysicsError::InvalidShape(format!(
                        "rect half extents must be positive and finite, got {half_extents:?}"
                    )));
                }
            }
            ObstacleShape::Mask(m) => {
                if m.height != board.height || m.width != board.width {
                    return Err(PhysicsError::InvalidShape(format!(
                        "mask is {}x{} but board is {}x{}",
                        m.height, m.width, board.height, board.width
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec2 {
        match self {
            ObstacleShape::RotatedRect { center, .. } => *center,
            ObstacleShape::Mask(m) => m.anchor,
        }
    }

    /// Corners of a rectangle in world coordinates (counter-clockwise).
    pub fn rect_corners(&self) -> Option<[Vec2; 4]> {
        match self {
            ObstacleShape::RotatedRect {
                center,
                half_extents: h,
                angle,
            } => {
                let local = [
                    Vec2::new(-h.x, -h.y),
                    Vec2::new(h.x, -h.y),
                    Vec2::new(h.x, h.y),
                    Vec2::new(-h.x, h.y),
                ];
                Some(local.map(|c| *center + c.rotated(*angle)))
            }
            ObstacleShape::Mask(_) => None,
        }
    }

    /// Signed distance from `p` to the shape boundary (negative inside).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match self {
            ObstacleShape::RotatedRect {
                center,
                half_extents,
                angle,
            } => {
                let l = (p - *center).rotated(-*angle);
                let qx = l.x.abs() - half_extents.x;
                let qy = l.y.abs() - half_extents.y;
                let outside = qx.max(0.0).hypot(qy.max(0.0));
                let inside = qx.max(qy).min(0.0);
                outside + inside
            }
            ObstacleShape::Mask(m) => m.signed_distance(p),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            ObstacleShape::RotatedRect {
                center,
                half_extents,
                angle,
            } => {
                let l = (p - *center).rotated(-*angle);
                l.x.abs() <= half_extents.x && l.y.abs() <= half_extents.y
            }
            ObstacleShape::Mask(m) => {
                let c = p.x.round();
                let r = p.y.round();
                if c < 0.0 || r < 0.0 || c >= m.width as f64 || r >= m.height as f64 {
                    return false;
                }
                m.occupancy[r as usize * m.width + c as usize]
            }
        }
    }

    /// Cells whose centres lie inside the shape, row-major over the board.
    pub fn rasterize(&self, board: &BoardSpec) -> Vec<bool> {
        match self {
            ObstacleShape::Mask(m) if m.height == board.height && m.width == board.width => m.occupancy.clone(),
            _ => (0..board.cells())
                .map(|i| {
                    let p = Vec2::new((i % board.width) as f64, (i / board.width) as f64);
                    self.contains(p)
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: ObstacleShape,
    pub kind: ObstacleType,
    pub color_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    /// Palette index.
    Solid(usize),
    /// Bundled texture id.
    Texture(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub board: BoardSpec,
    pub obstacles: Vec<Obstacle>,
    pub background: Background,
    pub seed: u64,
}

impl Scenario {
    /// Walls-only scenario on `board` with a solid background.
    pub fn empty(board: BoardSpec, background: Background) -> Self {
        Self {
            board,
            obstacles: Vec::new(),
            background,
            seed: 0,
        }
    }

    pub fn without_obstacles(&self) -> Self {
        Self {
            obstacles: Vec::new(),
            ..self.clone()
        }
    }

    /// Copy with every obstacle relabelled as `kind`.
    pub fn with_all_kinds(&self, kind: ObstacleType) -> Self {
        let mut s = self.clone();
        for o in &mut s.obstacles {
            o.kind = kind;
        }
        s
    }

    pub fn solids(&self) -> impl Iterator<Item = &Obstacle> {
        self.obstacles.iter().filter(|o| o.kind.is_solid())
    }

    /// Checks board, shape placement, pairwise disjointness and colours.
    pub fn validate(&self) -> Result<(), PhysicsError> {
        self.board.validate()?;
        let lo = self.board.interior_min();
        let hi = self.board.interior_max();
        let mut taken = vec![false; self.board.cells()];
        for (j, o) in self.obstacles.iter().enumerate() {
            o.shape.validate(&self.board)?;
            if let Some(corners) = o.shape.rect_corners() {
                if corners.iter().any(|c| c.x < lo.x || c.y < lo.y || c.x > hi.x || c.y > hi.y) {
                    return Err(PhysicsError::InvalidScenario(format!(
                        "obstacle {j} extends into the wall band"
                    )));
                }
            }
            let cells = o.shape.rasterize(&self.board);
            if !cells.iter().any(|&c| c) {
                return Err(PhysicsError::InvalidScenario(format!("obstacle {j} covers no cells")));
            }
            for (i, &c) in cells.iter().enumerate() {
                if !c {
                    continue;
                }
                if self.board.is_wall_cell(i / self.board.width, i % self.board.width) {
                    return Err(PhysicsError::InvalidScenario(format!(
                        "obstacle {j} overlaps the wall band"
                    )));
                }
                if taken[i] {
                    return Err(PhysicsError::InvalidScenario(format!("obstacle {j} overlaps another obstacle")));
                }
                taken[i] = true;
            }
            if let Background::Solid(bg) = self.background {
                if bg == o.color_index {
                    return Err(PhysicsError::InvalidScenario(format!(
                        "obstacle {j} has the background colour {bg}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallState {
    pub position: Vec2,
    /// Pixels per frame.
    pub velocity: Vec2,
    pub radius: f64,
}

impl BallState {
    pub fn new(position: Vec2, velocity: Vec2, radius: f64) -> Self {
        Self {
            position,
            velocity,
            radius,
        }
    }
}

/// Ball trajectories of one run. The scenario is held by the owner of the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub frames: usize,
    pub radii: Vec<f64>,
    pub initial_velocities: Vec<Vec2>,
    /// `trajectories[ball][t]`, `t` in `0..frames`.
    pub trajectories: Vec<Vec<Vec2>>,
}

impl Run {
    pub fn ball_count(&self) -> usize {
        self.trajectories.len()
    }

    pub fn positions_at(&self, t: usize) -> Vec<Vec2> {
        self.trajectories.iter().map(|tr| tr[t]).collect()
    }

    pub fn initial_states(&self) -> Vec<BallState> {
        self.trajectories
            .iter()
            .zip(&self.initial_velocities)
            .zip(&self.radii)
            .map(|((tr, &v), &r)| BallState::new(tr[0], v, r))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn board_invariants() {
        assert!(BoardSpec::square(15, 1).is_err());
        assert!(BoardSpec::square(16, 0).is_err());
        assert!(BoardSpec::square(16, 8).is_err());
        let b = BoardSpec::square(64, 2).unwrap();
        assert_eq!(b.interior_min(), Vec2::new(1.5, 1.5));
        assert_eq!(b.interior_max(), Vec2::new(61.5, 61.5));
        assert!(b.is_wall_cell(1, 30) && !b.is_wall_cell(2, 30) && b.is_wall_cell(62, 30));
    }

    #[test]
    fn axis_aligned_rect_rasterizes_to_block() {
        let board = BoardSpec::square(32, 2).unwrap();
        // columns 10..=14 (w=5), rows 8..=15 (h=8)
        let shape = ObstacleShape::axis_aligned_rect(Vec2::new(12.0, 11.5), Vec2::new(2.5, 4.0));
        let cells = shape.rasterize(&board);
        assert_eq!(cells.iter().filter(|&&c| c).count(), 40);
        assert!(cells[8 * 32 + 10] && cells[15 * 32 + 14] && !cells[16 * 32 + 14]);
    }

    #[test]
    fn rect_signed_distance() {
        let s = ObstacleShape::axis_aligned_rect(Vec2::new(10.0, 10.0), Vec2::new(2.0, 3.0));
        assert!((s.signed_distance(Vec2::new(15.0, 10.0)) - 3.0).abs() < 1e-12);
        assert!((s.signed_distance(Vec2::new(10.0, 10.0)) + 2.0).abs() < 1e-12);
        assert!((s.signed_distance(Vec2::new(15.0, 17.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mask_serde_round_trip() {
        let occ: Vec<bool> = (0..16 * 16).map(|i| i % 5 == 0 && i / 16 > 3).collect();
        let m = MaskShape::from_occupancy(16, 16, occ).unwrap();
        let json = serde_json::to_string(&ObstacleShape::Mask(m.clone())).unwrap();
        let back: ObstacleShape = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ObstacleShape::Mask(m));
    }

    #[test]
    fn overlapping_obstacles_rejected() {
        let board = BoardSpec::square(32, 2).unwrap();
        let rect = |x: f64| Obstacle {
            shape: ObstacleShape::axis_aligned_rect(Vec2::new(x, 15.0), Vec2::new(3.0, 3.0)),
            kind: ObstacleType::Bounce,
            color_index: 1,
        };
        let mut s = Scenario::empty(board, Background::Solid(0));
        s.obstacles = vec![rect(10.5), rect(14.5)];
        assert!(matches!(s.validate(), Err(PhysicsError::InvalidScenario(_))));
        s.obstacles = vec![rect(8.5), rect(20.5)];
        assert!(s.validate().is_ok());
        s.background = Background::Solid(1);
        assert!(s.validate().is_err());
    }
}
