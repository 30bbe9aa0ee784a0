use serde::{Deserialize, Serialize};

/// Dense `channels x height x width` array, channel-major then row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Planes {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Planes {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == channels * height * width).then_some(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn same_shape(&self, other: &Planes) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Per-channel min-max rescale into `[0, 1]`; flat channels map to 0.
    pub fn normalized_per_channel(&self) -> Planes {
        let mut out = self.clone();
        for c in 0..self.channels {
            let plane = out.plane_mut(c);
            let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            for v in plane.iter_mut() {
                *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
            }
        }
        out
    }
}

/// RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let n = height * width;
        let mut data = Vec::with_capacity(3 * n);
        for v in rgb {
            data.extend(std::iter::repeat_n(v, n));
        }
        Self { height, width, data }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let n = self.height * self.width;
        let i = row * self.width + col;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let n = self.height * self.width;
        let i = row * self.width + col;
        self.data[i] = rgb[0];
        self.data[n + i] = rgb[1];
        self.data[2 * n + i] = rgb[2];
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn to_planes(&self) -> Planes {
        Planes {
            channels: 3,
            height: self.height,
            width: self.width,
            data: self.data.clone(),
        }
    }

    /// Wraps three planes, clamping values into `[0, 1]`.
    pub fn from_planes_clamped(p: &Planes) -> Option<Image> {
        (p.channels == 3).then(|| Image {
            height: p.height,
            width: p.width,
            data: p.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }
}

/// Non-negative scalar field over the board.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}
