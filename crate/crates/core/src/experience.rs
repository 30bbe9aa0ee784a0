//! Compact summaries of experience runs.
//!
//! A run of `T` frames is compressed into a dynamic image (a fixed weighted
//! sum of the frames that vanishes on static content) and a median image
//! (the static background). Stacking both gives a 6-channel summary. Per-run
//! model outputs are then pooled across runs: masks elementwise by maximum,
//! appearance tensors channel-wise by picking the run with the most energy.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::render::codec::{decode_planes_raw, encode_planes_raw};
use crate::render::{lower_median, Image, Planes, RenderError};

#[derive(Debug, thiserror::Error)]
pub enum ExperienceError {
    #[error("frame count must be at least 1")]
    ZeroLength,
    #[error("no inputs given")]
    EmptyInput,
    #[error("inputs have mismatched shapes")]
    ShapeMismatch,
    #[error("expected {expected} channels, found {found}")]
    BadChannels { expected: usize, found: usize },
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Rank-pooling weights `a_t = sum_{i=t}^{T-1} (2(i+1) - T - 1) / (i+1)`.
///
/// The weights always sum to zero, so a static video maps to zero.
pub fn dynamic_image_coefficients(frames: usize) -> Result<Vec<f64>, ExperienceError> {
    if frames == 0 {
        return Err(ExperienceError::ZeroLength);
    }
    let t = frames as f64;
    let mut alpha = vec![0.0; frames];
    let mut acc = 0.0;
    for i in (0..frames).rev() {
        let k = (i + 1) as f64;
        acc += (2.0 * k - t - 1.0) / k;
        alpha[i] = acc;
    }
    Ok(alpha)
}

fn check_frames(frames: &[Image]) -> Result<&Image, ExperienceError> {
    let first = frames.first().ok_or(ExperienceError::EmptyInput)?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(ExperienceError::ShapeMismatch);
    }
    Ok(first)
}

/// Weighted frame sum with [`dynamic_image_coefficients`]; unbounded values.
pub fn dynamic_image(frames: &[Image]) -> Result<Planes, ExperienceError> {
    let first = check_frames(frames)?;
    let alpha = dynamic_image_coefficients(frames.len())?;
    let mut out = Planes::zeros(3, first.height, first.width);
    for (a, f) in alpha.iter().zip(frames) {
        for (o, v) in out.data.iter_mut().zip(&f.data) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// Per-pixel temporal median over all frames (lower median for even counts).
pub fn median_image(frames: &[Image]) -> Result<Image, ExperienceError> {
    check_frames(frames)?;
    Ok(lower_median(frames)?)
}

/// Six-channel run summary: dynamic image in channels `0..3`, median image
/// in channels `3..6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStack(Planes);

impl SummaryStack {
    pub const CHANNELS: usize = 6;

    pub fn new(planes: Planes) -> Result<Self, ExperienceError> {
        if planes.channels != Self::CHANNELS {
            return Err(ExperienceError::BadChannels {
                expected: Self::CHANNELS,
                found: planes.channels,
            });
        }
        Ok(Self(planes))
    }

    pub fn from_parts(dynamic: &Planes, median: &Image) -> Result<Self, ExperienceError> {
        if dynamic.channels != 3 || dynamic.height != median.height || dynamic.width != median.width {
            return Err(ExperienceError::ShapeMismatch);
        }
        let mut data = dynamic.data.clone();
        data.extend_from_slice(&median.data);
        Ok(Self(Planes {
            channels: 6,
            height: median.height,
            width: median.width,
            data,
        }))
    }

    pub fn planes(&self) -> &Planes {
        &self.0
    }

    pub fn into_planes(self) -> Planes {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn dynamic(&self) -> &[f64] {
        &self.0.data[..3 * self.0.plane_len()]
    }

    pub fn median(&self) -> &[f64] {
        &self.0.data[3 * self.0.plane_len()..]
    }

    /// Min-max normalised dynamic and median images for viewing.
    pub fn visualization(&self) -> (Image, Image) {
        let n = 3 * self.0.plane_len();
        let norm = self.0.normalized_per_channel();
        let dynamic = Image {
            height: self.height(),
            width: self.width(),
            data: norm.data[..n].to_vec(),
        };
        let median = Image {
            height: self.height(),
            width: self.width(),
            data: self.0.data[n..].to_vec(),
        };
        (dynamic, median)
    }

    /// Raw little-endian f32 dump with a `(C, H, W)` u32 header.
    pub fn write_raw<W: Write>(&self, w: W) -> Result<(), ExperienceError> {
        Ok(encode_planes_raw(&self.0, w)?)
    }

    pub fn read_raw<R: Read>(r: R) -> Result<Self, ExperienceError> {
        Self::new(decode_planes_raw(r)?)
    }
}

pub fn summarize_run(frames: &[Image]) -> Result<SummaryStack, ExperienceError> {
    let dynamic = dynamic_image(frames)?;
    let median = median_image(frames)?;
    SummaryStack::from_parts(&dynamic, &median)
}

/// Single-channel `H x W` map, e.g. an obstacle mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl MaskTensor {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }
}

/// Elementwise maximum across runs, with the winning run per pixel (lowest
/// index on ties).
pub fn pool_masks_with_argmax(masks: &[MaskTensor]) -> Result<(MaskTensor, Vec<usize>), ExperienceError> {
    let first = masks.first().ok_or(ExperienceError::EmptyInput)?;
    if masks.iter().any(|m| m.height != first.height || m.width != first.width) {
        return Err(ExperienceError::ShapeMismatch);
    }
    let mut out = first.clone();
    let mut arg = vec![0usize; out.data.len()];
    for (k, m) in masks.iter().enumerate().skip(1) {
        for ((o, a), &v) in out.data.iter_mut().zip(arg.iter_mut()).zip(&m.data) {
            if v > *o {
                *o = v;
                *a = k;
            }
        }
    }
    Ok((out, arg))
}

pub fn pool_masks(masks: &[MaskTensor]) -> Result<MaskTensor, ExperienceError> {
    pool_masks_with_argmax(masks).map(|(m, _)| m)
}

/// `C x H x W` appearance features of one run.
pub type AppearanceTensor = Planes;

/// For each channel, the run whose plane has the largest squared sum
/// (lowest index on ties).
pub fn appearance_selection(tensors: &[AppearanceTensor]) -> Result<Vec<usize>, ExperienceError> {
    let first = tensors.first().ok_or(ExperienceError::EmptyInput)?;
    if first.channels == 0 || tensors.iter().any(|t| !t.same_shape(first)) {
        return Err(ExperienceError::ShapeMismatch);
    }
    let mut pick = Vec::with_capacity(first.channels);
    for c in 0..first.channels {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (k, t) in tensors.iter().enumerate() {
            let energy: f64 = t.plane(c).iter().map(|v| v * v).sum();
            if energy > best.1 {
                best = (k, energy);
            }
        }
        pick.push(best.0);
    }
    Ok(pick)
}

/// Channel-wise pooling: output plane `c` is plane `c` of the selected run.
pub fn pool_appearance(tensors: &[AppearanceTensor]) -> Result<AppearanceTensor, ExperienceError> {
    let pick = appearance_selection(tensors)?;
    let mut out = Planes::zeros(tensors[0].channels, tensors[0].height, tensors[0].width);
    for (c, &k) in pick.iter().enumerate() {
        out.plane_mut(c).copy_from_slice(tensors[k].plane(c));
    }
    Ok(out)
}
