use serde::{Deserialize, Serialize};

/// Colour palette for backgrounds and obstacles, plus the fixed ball and
/// wall colours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub colors: Vec<[f64; 3]>,
    pub ball: [f64; 3],
    pub wall: [f64; 3],
}

/// Smallest allowed L-infinity distance between any two palette entries.
pub const MIN_CONTRAST: f64 = 0.2;

fn linf(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: vec![
                [0.90, 0.90, 0.90], // light grey
                [0.10, 0.10, 0.50], // navy
                [0.90, 0.80, 0.10], // yellow
                [0.10, 0.60, 0.20], // green
                [0.20, 0.70, 0.90], // sky
                [0.90, 0.50, 0.10], // orange
                [0.50, 0.20, 0.60], // purple
                [0.60, 0.40, 0.20], // brown
            ],
            ball: [1.00, 0.40, 0.75],
            wall: [0.30, 0.30, 0.30],
        }
    }
}

impl Palette {
    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn color(&self, index: usize) -> Option<[f64; 3]> {
        self.colors.get(index).copied()
    }

    /// Checks size, value range and pairwise contrast (ball and wall included).
    pub fn validate(&self) -> Result<(), String> {
        if self.colors.len() < 8 {
            return Err(format!("palette has {} colours, need at least 8", self.colors.len()));
        }
        let all: Vec<[f64; 3]> = self.colors.iter().copied().chain([self.ball, self.wall]).collect();
        if all.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("palette values must lie in [0, 1]".into());
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let d = linf(all[i], all[j]);
                if d < MIN_CONTRAST {
                    return Err(format!("entries {i} and {j} differ by only {d:.3}"));
                }
            }
        }
        Ok(())
    }
}

/// Number of bundled background textures.
pub const TEXTURE_COUNT: usize = 2;
const TILE: usize = 16;

fn hash2(id: usize, r: usize, c: usize) -> f64 {
    let mut z = (id as u64) << 40 ^ (r as u64) << 20 ^ c as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Texture colour at board cell `(row, col)`; tiles repeat every 16 cells
/// with a fixed phase. Returns `None` for unknown ids.
pub fn texture_pixel(id: usize, row: usize, col: usize) -> Option<[f64; 3]> {
    let (r, c) = (row % TILE, col % TILE);
    match id {
        // Stone: speckled warm grey with darker mortar lines.
        0 => {
            let mortar = r % 8 == 7 || (c + if r < 8 { 0 } else { 8 }) % 16 == 15;
            let n = 0.08 * hash2(id, r, c);
            let base = if mortar { 0.36 } else { 0.55 };
            Some([base + n + 0.04, base + n, base + n - 0.05])
        }
        // Wood: banded browns.
        1 => {
            let band = ((r as f64 * 0.8 + 2.0 * (c as f64 * 0.4).sin()).sin() + 1.0) * 0.5;
            let n = 0.05 * hash2(id, r, c);
            Some([0.45 + 0.2 * band + n, 0.30 + 0.12 * band + n, 0.15 + 0.05 * band])
        }
        _ => None,
    }
}
