//! Small convolutional regressor from run summaries to obstacle masks.
//!
//! Convolutions are lowered to matrix products: activations are kept as a
//! `C x M` matrix whose columns are the pixels of one or more runs laid out
//! one after another, `im2col` expands them to `(C k k) x M` patches and a
//! single `dgemm` applies the kernel. All runs of a sample share one pass.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::experience::{pool_masks_with_argmax, MaskTensor, SummaryStack};
use crate::render::Planes;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, write_loss_csv};
pub use train::{
    evaluate_mask_error, mask_loss, prepare_samples, sample_summaries, train, train_prepared, EpochLoss, ErrorStats,
    PreparedSample, TrainConfig, TrainReport,
};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("{requested} experience runs requested but a sample has only {available}")]
    NotEnoughRuns { requested: usize, available: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Experience(#[from] crate::experience::ExperienceError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Which half of the summary stack is zeroed before the first layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Zero channels `0..3`.
    ZeroDynamic,
    /// Zero channels `3..6`.
    ZeroMedian,
}

impl Ablation {
    fn zeroed_channels(self) -> std::ops::Range<usize> {
        match self {
            Ablation::None => 0..0,
            Ablation::ZeroDynamic => 0..3,
            Ablation::ZeroMedian => 3..6,
        }
    }
}

/// Stride-1 same-padded convolution. `weights` is `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Odd kernel side.
    pub kernel: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, activation: Activation) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            activation,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Xavier-uniform weights, zero bias.
    fn init<R: Rng>(&mut self, rng: &mut R) {
        let kk = self.kernel * self.kernel;
        let s = (6.0 / ((self.in_channels + self.out_channels) * kk) as f64).sqrt();
        for w in &mut self.weights {
            *w = rng.random_range(-s..=s);
        }
        self.bias.fill(0.0);
    }
}

/// Input channels are standardized as `(x - shift) * scale` before the
/// ablation is applied and the first layer runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvRegressor {
    pub layers: Vec<ConvLayer>,
    pub ablation: Ablation,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
}

/// Per-layer weight and bias gradients, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ConvRegressor) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, s: f64) {
        let pairs = self.weights.iter_mut().zip(&other.weights).chain(self.bias.iter_mut().zip(&other.bias));
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()).flatten() {
            *v *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights.iter().chain(&self.bias).flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct Geometry {
    height: usize,
    width: usize,
    runs: usize,
}

impl Geometry {
    fn cols(&self) -> usize {
        self.runs * self.height * self.width
    }
}

/// Expands a `C x M` activation into `(C k k) x M` zero-padded patches.
fn im2col(x: &[f64], c: usize, k: usize, g: &Geometry) -> Vec<f64> {
    let (h, w, m) = (g.height, g.width, g.cols());
    let hw = h * w;
    let p = (k / 2) as isize;
    let mut cols = vec![0.0; c * k * k * m];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * m..(row + 1) * m];
                let (dy, dx) = (ky as isize - p, kx as isize - p);
                for r in 0..g.runs {
                    let src = &x[ci * m + r * hw..ci * m + (r + 1) * hw];
                    let dst = &mut dst[r * hw..(r + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        if x0 >= x1 {
                            continue;
                        }
                        let s0 = sy as usize * w;
                        let d = &mut dst[y * w + x0..y * w + x1];
                        let s = &src[(s0 as isize + x0 as isize + dx) as usize..(s0 as isize + x1 as isize + dx) as usize];
                        d.copy_from_slice(s);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], c: usize, k: usize, g: &Geometry) -> Vec<f64> {
    let (h, w, m) = (g.height, g.width, g.cols());
    let hw = h * w;
    let p = (k / 2) as isize;
    let mut x = vec![0.0; c * m];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * m..(row + 1) * m];
                let (dy, dx) = (ky as isize - p, kx as isize - p);
                for r in 0..g.runs {
                    let src = &src[r * hw..(r + 1) * hw];
                    let dst = &mut x[ci * m + r * hw..ci * m + (r + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        if x0 >= x1 {
                            continue;
                        }
                        let s0 = sy as usize * w;
                        let d = &mut dst[(s0 as isize + x0 as isize + dx) as usize..(s0 as isize + x1 as isize + dx) as usize];
                        for (a, b) in d.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                            *a += b;
                        }
                    }
                }
            }
        }
    }
    x
}

/// `c = alpha a b + beta c` for row-major `a` (m x k), `b` (k x n); transposes via strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices hold at least m*k, k*n and m*n elements and the
    // strides address exactly those ranges.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Intermediate values of one forward pass.
struct Trace {
    geometry: Geometry,
    /// Patch matrix fed to each layer.
    cols: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ConvRegressor {
    /// The default 6 -> 16 (5x5) -> 16 (3x3) -> 1 (3x3) network, Xavier-initialised.
    pub fn new(seed: u64) -> Self {
        let mut m = Self::zeros();
        m.init(seed);
        m
    }

    /// Default architecture with all parameters zero.
    pub fn zeros() -> Self {
        Self {
            layers: vec![
                ConvLayer::zeros(6, 16, 5, Activation::Relu),
                ConvLayer::zeros(16, 16, 3, Activation::Relu),
                ConvLayer::zeros(16, 1, 3, Activation::Identity),
            ],
            ablation: Ablation::None,
            input_shift: vec![0.0; 6],
            input_scale: vec![1.0; 6],
        }
    }

    /// Fits the input standardization to per-channel mean and standard
    /// deviation over all pixels of `inputs`. Constant channels keep scale 1.
    pub fn fit_standardization(&mut self, inputs: &[&Planes]) {
        let c = self.input_shift.len();
        let n: usize = inputs.iter().map(|p| p.plane_len()).sum();
        if n == 0 {
            return;
        }
        for ch in 0..c {
            let vals = || inputs.iter().flat_map(move |p| p.plane(ch).iter());
            let mean = vals().sum::<f64>() / n as f64;
            let var = vals().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            self.input_shift[ch] = mean;
            self.input_scale[ch] = if var > 1e-24 { 1.0 / var.sqrt() } else { 1.0 };
        }
    }

    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut self.layers {
            l.init(&mut rng);
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::ShapeMismatch(m));
        let (Some(first), Some(last)) = (self.layers.first(), self.layers.last()) else {
            return bad("model has no layers".into());
        };
        if first.in_channels != SummaryStack::CHANNELS {
            return bad(format!("first layer takes {} channels, need 6", first.in_channels));
        }
        if self.input_shift.len() != first.in_channels || self.input_scale.len() != first.in_channels {
            return bad("input standardization does not match the first layer".into());
        }
        if self.input_shift.iter().chain(&self.input_scale).any(|v| !v.is_finite()) {
            return bad("non-finite input standardization".into());
        }
        if last.out_channels != 1 || last.activation != Activation::Identity {
            return bad("last layer must have one identity output".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.kernel % 2 == 0 || l.weights.len() != l.out_channels * l.patch_len() || l.bias.len() != l.out_channels {
                return bad(format!("layer {i} has inconsistent parameter sizes"));
            }
            if i > 0 && self.layers[i - 1].out_channels != l.in_channels {
                return bad(format!("layer {i} input does not match the previous layer"));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return bad(format!("layer {i} has non-finite parameters"));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn stack_inputs(&self, inputs: &[&Planes]) -> Result<(Vec<f64>, Geometry), LearnError> {
        let first = inputs.first().ok_or(LearnError::EmptyDataset)?;
        if first.channels != SummaryStack::CHANNELS || inputs.iter().any(|p| !p.same_shape(first)) {
            return Err(LearnError::ShapeMismatch("inputs must be 6-channel planes of one size".into()));
        }
        let g = Geometry {
            height: first.height,
            width: first.width,
            runs: inputs.len(),
        };
        let (hw, m) = (g.height * g.width, g.cols());
        let mut x = vec![0.0; first.channels * m];
        let zeroed = self.ablation.zeroed_channels();
        for (r, p) in inputs.iter().enumerate() {
            for c in (0..first.channels).filter(|c| !zeroed.contains(c)) {
                let (shift, scale) = (self.input_shift[c], self.input_scale[c]);
                for (d, v) in x[c * m + r * hw..c * m + (r + 1) * hw].iter_mut().zip(p.plane(c)) {
                    *d = (v - shift) * scale;
                }
            }
        }
        Ok((x, g))
    }

    fn run_forward(&self, inputs: &[&Planes]) -> Result<Trace, LearnError> {
        let (mut x, geometry) = self.stack_inputs(inputs)?;
        let m = geometry.cols();
        let mut cols_all = Vec::with_capacity(self.layers.len());
        let mut pre_all = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let cols = im2col(&x, l.in_channels, l.kernel, &geometry);
            let mut z = vec![0.0; l.out_channels * m];
            for (o, b) in l.bias.iter().enumerate() {
                z[o * m..(o + 1) * m].fill(*b);
            }
            gemm(l.out_channels, l.patch_len(), m, &l.weights, false, &cols, false, &mut z, 1.0);
            x = match l.activation {
                Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
            };
            cols_all.push(cols);
            pre_all.push(z);
        }
        Ok(Trace {
            geometry,
            cols: cols_all,
            pre: pre_all,
            output: x,
        })
    }

    /// Per-run masks for a batch of summaries of equal size.
    pub fn forward_batch(&self, inputs: &[&Planes]) -> Result<Vec<MaskTensor>, LearnError> {
        let t = self.run_forward(inputs)?;
        let g = &t.geometry;
        let hw = g.height * g.width;
        Ok((0..g.runs)
            .map(|r| MaskTensor {
                height: g.height,
                width: g.width,
                data: t.output[r * hw..(r + 1) * hw].to_vec(),
            })
            .collect())
    }

    /// ReLU on/off state of every hidden unit and the pooled winning run per
    /// pixel. The pooled loss is a smooth function of the parameters as long
    /// as this pattern stays fixed.
    pub fn activation_pattern(&self, inputs: &[&Planes]) -> Result<(Vec<bool>, Vec<usize>), LearnError> {
        let t = self.run_forward(inputs)?;
        let on = self
            .layers
            .iter()
            .zip(&t.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
            .collect();
        let masks = self.forward_batch(inputs)?;
        let (_, winners) = pool_masks_with_argmax(&masks)?;
        Ok((on, winners))
    }

    pub fn forward(&self, input: &SummaryStack) -> Result<MaskTensor, LearnError> {
        Ok(self.forward_batch(&[input.planes()])?.remove(0))
    }

    /// Back-propagates `d_output` (per run, concatenated) through a traced pass.
    fn run_backward(&self, t: &Trace, d_output: Vec<f64>) -> Gradients {
        let m = t.geometry.cols();
        let mut grads = Gradients::zeros_like(self);
        let mut d = d_output;
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.activation == Activation::Relu {
                for (g, &z) in d.iter_mut().zip(&t.pre[i]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            for (o, gb) in grads.bias[i].iter_mut().enumerate() {
                *gb = d[o * m..(o + 1) * m].iter().sum();
            }
            gemm(l.out_channels, m, l.patch_len(), &d, false, &t.cols[i], true, &mut grads.weights[i], 0.0);
            if i > 0 {
                let mut dcols = vec![0.0; l.patch_len() * m];
                gemm(l.patch_len(), l.out_channels, m, &l.weights, true, &d, false, &mut dcols, 0.0);
                d = col2im(&dcols, l.in_channels, l.kernel, &t.geometry);
            }
        }
        grads
    }

    /// Loss of the run-pooled prediction against `target` and its gradient.
    ///
    /// The per-run masks are pooled by elementwise maximum; each pixel's
    /// gradient flows only to the run that attained the maximum (lowest
    /// index on ties).
    pub fn pooled_loss_and_gradients(
        &self,
        runs: &[&Planes],
        target: &MaskTensor,
    ) -> Result<(f64, Gradients), LearnError> {
        let t = self.run_forward(runs)?;
        let g = &t.geometry;
        let hw = g.height * g.width;
        if target.height != g.height || target.width != g.width {
            return Err(LearnError::ShapeMismatch("target and input sizes differ".into()));
        }
        let mut d = vec![0.0; t.output.len()];
        let mut loss = 0.0;
        for p in 0..hw {
            let mut best = 0;
            for r in 1..g.runs {
                if t.output[r * hw + p] > t.output[best * hw + p] {
                    best = r;
                }
            }
            let e = t.output[best * hw + p] - target.data[p];
            loss += e * e;
            d[best * hw + p] = 2.0 * e / hw as f64;
        }
        let grads = self.run_backward(&t, d);
        Ok((loss / hw as f64, grads))
    }

    /// Analytic gradient of the mean-square loss for a single summary.
    pub fn backward(&self, input: &SummaryStack, target: &MaskTensor) -> Result<(f64, Gradients), LearnError> {
        self.pooled_loss_and_gradients(&[input.planes()], target)
    }

    pub fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        for (l, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
            for (w, g) in l.weights.iter_mut().zip(gw) {
                *w -= learning_rate * g;
            }
            for (b, g) in l.bias.iter_mut().zip(gb) {
                *b -= learning_rate * g;
            }
        }
    }
}
