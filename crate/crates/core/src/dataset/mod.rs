//! Seeded generation of scenarios, runs and meta-samples.
//!
//! A meta-sample is one scenario with a prediction run and `N` experience
//! runs. Every random choice flows from a single `u64` seed, split into
//! independent streams with [`derive_seed`]:
//!
//! * scenario: `derive_seed(seed, &[0])`
//! * run `j` (0 is the prediction run): `derive_seed(seed, &[1, j])`
//!
//! and sample `i` of a dataset uses `derive_seed(master, &[i])`.

mod shapes;
mod storage;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experience::MaskTensor;
use crate::physics::{
    simulate, Background, BallState, BoardSpec, MaskShape, Obstacle, ObstacleShape, ObstacleType, PhysicsError, Run,
    Scenario,
};
use crate::render::{Image, Palette, RenderError, SceneRenderer, TEXTURE_COUNT};
use crate::Vec2;

pub use shapes::{rasterize_template, template_radius, TEMPLATE_COUNT};
pub use storage::{load_dataset, read_manifest, save_dataset, FileEntry, Manifest, FORMAT_VERSION};

/// Rejection-sampling budget per obstacle or ball.
pub const MAX_ATTEMPTS: usize = 1000;
/// Master seed of the published evaluation sets.
pub const TEST_MASTER_SEED: u64 = 0x7e57_5e7_2017;
pub const TEST_SET_SIZE: usize = 200;
pub const EXPERIENCE_FRAMES: usize = 60;
/// Minimum clearance between a spawned ball and solid matter, in pixels.
const SPAWN_MARGIN: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("could not place {0} after {MAX_ATTEMPTS} attempts")]
    PlacementFailure(String),
    #[error("corrupt dataset: {0}")]
    CorruptManifest(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Two rectangles.
    R2,
    /// Three or four rectangles.
    R4,
    /// Two curved shapes.
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundMode {
    Solid,
    Texture,
}

/// Number of balls per run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallCount {
    Fixed(usize),
    /// Uniform over `min..=max`.
    Uniform { min: usize, max: usize },
}

impl BallCount {
    fn sample<R: Rng>(self, rng: &mut R) -> usize {
        match self {
            BallCount::Fixed(n) => n,
            BallCount::Uniform { min, max } => rng.random_range(min..=max),
        }
    }

    fn min(self) -> usize {
        match self {
            BallCount::Fixed(n) => n,
            BallCount::Uniform { min, .. } => min,
        }
    }

    fn max(self) -> usize {
        match self {
            BallCount::Fixed(n) => n,
            BallCount::Uniform { max, .. } => max,
        }
    }
}

/// Initial-condition law for runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    pub ball_radius: f64,
    /// Pixels per frame, uniform over `[lo, hi]`.
    pub speed_range: [f64; 2],
    /// Half-width of the uniform aim perturbation.
    pub aim_jitter_deg: f64,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            ball_radius: 2.0,
            speed_range: [1.0, 2.5],
            aim_jitter_deg: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub family: Family,
    pub board_size: usize,
    pub wall_thickness: usize,
    pub background: BackgroundMode,
    pub palette: Palette,
    /// Rectangle side lengths in pixels, uniform integers over `[lo, hi]`.
    pub obstacle_size_range: [usize; 2],
    /// Rotate rectangles uniformly; otherwise they are axis-aligned with
    /// edges on pixel boundaries.
    pub rotate_rects: bool,
    /// Nominal diameter of a curved shape at scale 1.
    pub custom_base_size: f64,
    pub custom_scale_range: [f64; 2],
    pub run: RunParams,
    pub prediction_balls: BallCount,
    pub experience_balls: BallCount,
    pub experience_frames: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            family: Family::R2,
            board_size: 64,
            wall_thickness: 2,
            background: BackgroundMode::Solid,
            palette: Palette::default(),
            obstacle_size_range: [10, 17],
            rotate_rects: true,
            custom_base_size: 9.0,
            custom_scale_range: [1.0, 2.0],
            run: RunParams::default(),
            prediction_balls: BallCount::Fixed(1),
            experience_balls: BallCount::Uniform { min: 1, max: 3 },
            experience_frames: EXPERIENCE_FRAMES,
        }
    }
}

impl ScenarioConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            ..Self::default()
        }
    }

    /// 32x32 boards with proportionally smaller obstacles, for fast training.
    pub fn desk(family: Family) -> Self {
        Self {
            family,
            board_size: 32,
            obstacle_size_range: [3, 6],
            custom_base_size: 4.0,
            ..Self::default()
        }
    }

    pub fn board(&self) -> Result<BoardSpec, DatasetError> {
        BoardSpec::square(self.board_size, self.wall_thickness).map_err(|e| DatasetError::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidConfig(m));
        let board = self.board()?;
        self.palette.validate().map_err(DatasetError::InvalidConfig)?;
        let [lo, hi] = self.obstacle_size_range;
        let interior = board.width - 2 * board.wall_thickness;
        if lo == 0 || lo > hi || hi + 2 > interior {
            return bad(format!("obstacle_size_range {lo}..{hi} does not fit a {interior}px interior"));
        }
        let [s0, s1] = self.custom_scale_range;
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) || !(self.custom_base_size > 0.0) {
            return bad("custom shape scale and base size must be positive".into());
        }
        if self.family == Family::C && self.custom_base_size * s1 + 2.0 > interior as f64 {
            return bad("custom shapes do not fit the board".into());
        }
        let r = &self.run;
        if !(r.ball_radius > 0.0 && r.ball_radius.is_finite()) {
            return bad("ball_radius must be positive".into());
        }
        if !(r.speed_range[0] > 0.0 && r.speed_range[0] <= r.speed_range[1] && r.speed_range[1].is_finite()) {
            return bad("speed_range must be positive and ordered".into());
        }
        if !(0.0..=180.0).contains(&r.aim_jitter_deg) {
            return bad("aim_jitter_deg must lie in [0, 180]".into());
        }
        for b in [self.prediction_balls, self.experience_balls] {
            if b.min() == 0 || b.min() > b.max() {
                return bad(format!("invalid ball count {b:?}"));
            }
        }
        if self.experience_frames == 0 {
            return bad("experience_frames must be at least 1".into());
        }
        Ok(())
    }
}

/// One scenario with its prediction run and experience runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaSample {
    pub scenario: Scenario,
    pub prediction_run: Run,
    pub experience_runs: Vec<Run>,
    pub seed: u64,
}

/// Splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a seed and a path of indices into an independent sub-seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |h, &i| mix(h ^ mix(i.wrapping_add(0x632b_e59b_d9b4_e019))))
}

/// Marks every cell within Chebyshev distance 1 of a set cell.
fn dilate(board: &BoardSpec, cells: &[bool]) -> Vec<bool> {
    let (h, w) = (board.height as isize, board.width as isize);
    let mut out = cells.to_vec();
    for (i, _) in cells.iter().enumerate().filter(|(_, &c)| c) {
        let (r, c) = ((i as isize) / w, (i as isize) % w);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && rr < h && cc < w {
                    out[(rr * w + cc) as usize] = true;
                }
            }
        }
    }
    out
}

fn sample_rect<R: Rng>(cfg: &ScenarioConfig, board: &BoardSpec, rng: &mut R) -> ObstacleShape {
    let [lo, hi] = cfg.obstacle_size_range;
    let w = rng.random_range(lo..=hi) as f64;
    let h = rng.random_range(lo..=hi) as f64;
    let half = Vec2::new(0.5 * w, 0.5 * h);
    let (imin, imax) = (board.interior_min(), board.interior_max());
    if cfg.rotate_rects {
        let angle = rng.random_range(0.0..PI);
        let (c, s) = (angle.cos().abs(), angle.sin().abs());
        let b = Vec2::new(half.x * c + half.y * s, half.x * s + half.y * c);
        let x = rng.random_range(imin.x + b.x..=imax.x - b.x);
        let y = rng.random_range(imin.y + b.y..=imax.y - b.y);
        ObstacleShape::RotatedRect {
            center: Vec2::new(x, y),
            half_extents: half,
            angle,
        }
    } else {
        // left/top cell index, so edges fall on half-integers
        let wt = board.wall_thickness;
        let col = rng.random_range(wt..=board.width - wt - w as usize) as f64;
        let row = rng.random_range(wt..=board.height - wt - h as usize) as f64;
        ObstacleShape::axis_aligned_rect(Vec2::new(col - 0.5 + half.x, row - 0.5 + half.y), half)
    }
}

fn sample_custom<R: Rng>(cfg: &ScenarioConfig, board: &BoardSpec, rng: &mut R) -> (Vec<bool>, f64) {
    let id = rng.random_range(0..TEMPLATE_COUNT);
    let [s0, s1] = cfg.custom_scale_range;
    let d = cfg.custom_base_size * rng.random_range(s0..=s1);
    let angle = rng.random_range(0.0..2.0 * PI);
    let (imin, imax) = (board.interior_min(), board.interior_max());
    let x = rng.random_range(imin.x + 0.5 * d..=imax.x - 0.5 * d);
    let y = rng.random_range(imin.y + 0.5 * d..=imax.y - 0.5 * d);
    (rasterize_template(id, d, Vec2::new(x, y), angle, board), d)
}

/// Samples a scenario per the family law. Obstacle kinds are uniform over
/// all three types and independent of shape, position and colour.
pub fn sample_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario, DatasetError> {
    cfg.validate()?;
    let board = cfg.board()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = match cfg.family {
        Family::R2 | Family::C => 2,
        Family::R4 => rng.random_range(3..=4),
    };
    let ncolors = cfg.palette.len();
    let background = match cfg.background {
        BackgroundMode::Solid => Background::Solid(rng.random_range(0..ncolors)),
        BackgroundMode::Texture => Background::Texture(rng.random_range(0..TEXTURE_COUNT)),
    };
    let walls: Vec<bool> = (0..board.cells())
        .map(|i| board.is_wall_cell(i / board.width, i % board.width))
        .collect();
    let mut blocked = dilate(&board, &walls);
    let mut obstacles = Vec::with_capacity(count);
    for k in 0..count {
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let (shape, cells) = match cfg.family {
                Family::R2 | Family::R4 => {
                    let s = sample_rect(cfg, &board, &mut rng);
                    let cells = s.rasterize(&board);
                    (Some(s), cells)
                }
                Family::C => (None, sample_custom(cfg, &board, &mut rng).0),
            };
            let empty = !cells.iter().any(|&c| c);
            if empty || cells.iter().zip(&blocked).any(|(&c, &b)| c && b) {
                continue;
            }
            let shape = match shape {
                Some(s) => s,
                None => ObstacleShape::Mask(MaskShape::from_occupancy(board.height, board.width, cells.clone())?),
            };
            placed = Some((shape, cells));
            break;
        }
        let (shape, cells) = placed.ok_or_else(|| DatasetError::PlacementFailure(format!("obstacle {k}")))?;
        for (b, d) in blocked.iter_mut().zip(dilate(&board, &cells)) {
            *b |= d;
        }
        let kind = ObstacleType::ALL[rng.random_range(0..3)];
        let color_index = match background {
            Background::Solid(bg) => {
                let c = rng.random_range(0..ncolors - 1);
                if c >= bg {
                    c + 1
                } else {
                    c
                }
            }
            Background::Texture(_) => rng.random_range(0..ncolors),
        };
        obstacles.push(Obstacle {
            shape,
            kind,
            color_index,
        });
    }
    let scenario = Scenario {
        board,
        obstacles,
        background,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Samples initial ball states and simulates `frames` frames.
///
/// Positions are uniform over the free interior (clear of walls, solid
/// obstacles and earlier balls). Each ball aims at the centroid of a
/// uniformly chosen obstacle, perturbed by a uniform angle within
/// `params.aim_jitter_deg`, with uniform speed.
pub fn sample_run(
    scenario: &Scenario,
    params: &RunParams,
    n_balls: usize,
    frames: usize,
    seed: u64,
) -> Result<Run, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = params.ball_radius;
    let (lo, hi) = (scenario.board.interior_min(), scenario.board.interior_max());
    if lo.x + r > hi.x - r || lo.y + r > hi.y - r {
        return Err(DatasetError::PlacementFailure("a ball on this board".into()));
    }
    let mut balls: Vec<BallState> = Vec::with_capacity(n_balls);
    for k in 0..n_balls {
        let mut pos = None;
        for _ in 0..MAX_ATTEMPTS {
            let p = Vec2::new(rng.random_range(lo.x + r..=hi.x - r), rng.random_range(lo.y + r..=hi.y - r));
            let clear_solid = scenario
                .solids()
                .all(|o| o.shape.signed_distance(p) >= r + SPAWN_MARGIN);
            let clear_balls = balls
                .iter()
                .all(|b| b.position.distance(p) >= b.radius + r + SPAWN_MARGIN);
            if clear_solid && clear_balls {
                pos = Some(p);
                break;
            }
        }
        let p = pos.ok_or_else(|| DatasetError::PlacementFailure(format!("ball {k}")))?;
        let aim = if scenario.obstacles.is_empty() {
            None
        } else {
            let target = scenario.obstacles[rng.random_range(0..scenario.obstacles.len())]
                .shape
                .centroid();
            (target - p).normalized()
        };
        let dir = aim.unwrap_or_else(|| Vec2::new(1.0, 0.0).rotated(rng.random_range(0.0..2.0 * PI)));
        let j = params.aim_jitter_deg.to_radians();
        let dir = if j > 0.0 { dir.rotated(rng.random_range(-j..=j)) } else { dir };
        let [s0, s1] = params.speed_range;
        let speed = if s1 > s0 { rng.random_range(s0..=s1) } else { s0 };
        balls.push(BallState::new(p, dir * speed, r));
    }
    Ok(simulate(scenario, &balls, frames)?)
}

/// Samples one scenario with a prediction run of `prediction_frames` frames
/// and `n_experience` experience runs of `cfg.experience_frames` frames.
pub fn sample_meta(
    cfg: &ScenarioConfig,
    n_experience: usize,
    prediction_frames: usize,
    seed: u64,
) -> Result<MetaSample, DatasetError> {
    let scenario = sample_scenario(cfg, derive_seed(seed, &[0]))?;
    let run = |j: usize, balls: BallCount, frames: usize| {
        let s = derive_seed(seed, &[1, j as u64]);
        let n = balls.sample(&mut ChaCha8Rng::seed_from_u64(derive_seed(s, &[0])));
        sample_run(&scenario, &cfg.run, n, frames, derive_seed(s, &[1]))
    };
    let prediction_run = run(0, cfg.prediction_balls, prediction_frames)?;
    let experience_runs = (1..=n_experience)
        .map(|j| run(j, cfg.experience_balls, cfg.experience_frames))
        .collect::<Result<_, _>>()?;
    Ok(MetaSample {
        scenario,
        prediction_run,
        experience_runs,
        seed,
    })
}

/// A generated dataset together with the law that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub master_seed: u64,
    pub n_experience: usize,
    pub prediction_frames: usize,
    pub samples: Vec<MetaSample>,
}

/// Generates `count` meta-samples; sample `i` uses `derive_seed(master, &[i])`.
/// Output does not depend on the rayon thread count.
pub fn generate_dataset(
    cfg: &ScenarioConfig,
    n_experience: usize,
    prediction_frames: usize,
    count: usize,
    master_seed: u64,
) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let samples = (0..count as u64)
        .into_par_iter()
        .map(|i| sample_meta(cfg, n_experience, prediction_frames, derive_seed(master_seed, &[i])))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        config: cfg.clone(),
        master_seed,
        n_experience,
        prediction_frames,
        samples,
    })
}

/// Renders every frame of `run` in `scenario`.
pub fn render_run(scenario: &Scenario, run: &Run, palette: &Palette) -> Result<Vec<Image>, DatasetError> {
    let renderer = SceneRenderer::new(scenario, palette)?;
    (0..run.frames)
        .map(|t| Ok(renderer.frame_with_radii(&run.positions_at(t), &run.radii)?))
        .collect()
}

/// Binary `H x W` obstacle mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl GroundTruthMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_tensor(&self) -> MaskTensor {
        MaskTensor {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

fn mask_of(scenario: &Scenario, include: impl Fn(&Obstacle) -> bool) -> GroundTruthMask {
    let b = &scenario.board;
    let mut data: Vec<bool> = (0..b.cells()).map(|i| b.is_wall_cell(i / b.width, i % b.width)).collect();
    for o in scenario.obstacles.iter().filter(|o| include(o)) {
        for (d, c) in data.iter_mut().zip(o.shape.rasterize(b)) {
            *d |= c;
        }
    }
    GroundTruthMask {
        height: b.height,
        width: b.width,
        data,
    }
}

/// Wall band plus the cells of solid obstacles.
pub fn gt_obstacle_mask(scenario: &Scenario) -> GroundTruthMask {
    mask_of(scenario, |o| o.kind.is_solid())
}

/// Wall band plus every obstacle, whatever its type.
pub fn all_on_mask(scenario: &Scenario) -> GroundTruthMask {
    mask_of(scenario, |_| true)
}
