//! Desk-scale text-to-video model with seeded random weights.
//!
//! Each layer patchifies every frame with a strided 3x3 convolution, runs
//! joint attention over text and patch tokens, and projects the patch tokens
//! of each frame back to pixel space. Attention is the un-exponentiated
//! row-normalised form `D^-1 (Q K^T) X W_V` with `D = diag(Q K^T 1)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::interp::{find_optimal, FinderOptions, OptimalSelection, PromptEmbedding};
use crate::rng::GaussianStream;
use crate::tensor::{FeatureMap, Matrix, VideoTensor};

/// Attention row sums with magnitude below this are rejected.
pub const ROW_SUM_FLOOR: f64 = 1e-10;

/// Patchify convolution parameters, fixed by the architecture.
pub const PATCH_PADDING: usize = 2;
pub const PATCH_STRIDE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

impl AttentionWeights {
    pub fn new(query: Matrix, key: Matrix, value: Matrix) -> Result<Self> {
        let d = query.rows();
        for w in [&query, &key, &value] {
            if w.shape() != (d, d) {
                return Err(Error::InvalidConfig("attention weights must all be d x d"));
            }
        }
        Ok(Self { query, key, value })
    }

    pub fn dim(&self) -> usize {
        self.query.rows()
    }
}

/// `c_out` kernels of shape `3 x 3 x c_in`, stored `[l][m][n][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernelBank {
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f64>,
    pub padding: usize,
    pub stride: usize,
}

impl ConvKernelBank {
    pub const EXTENT: usize = 3;

    pub fn new(
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        padding: usize,
        stride: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidConfig(
                "kernel bank needs at least one channel each way",
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1"));
        }
        if weights.len() != out_channels * 9 * in_channels {
            return Err(Error::InvalidConfig(
                "kernel weights must be c_out * 3 * 3 * c_in",
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("kernel weights must be finite"));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weights,
            padding,
            stride,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn weight(&self, l: usize, m: usize, n: usize, c: usize) -> f64 {
        self.weights[((l * 3 + m) * 3 + n) * self.in_channels + c]
    }

    /// Output spatial size for an `height x width` input.
    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let side = |len: usize| {
            (len + 2 * self.padding)
                .checked_sub(Self::EXTENT)
                .map(|span| span / self.stride + 1)
        };
        match (side(height), side(width)) {
            (Some(h), Some(w)) => Ok((h, w)),
            _ => Err(Error::ConvShape {
                height,
                width,
                padding: self.padding,
                stride: self.stride,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyModelConfig {
    /// Number of stacked 3D-attention layers.
    pub layers: usize,
    /// Text hidden size `d`.
    pub hidden: usize,
    /// Video channels `c`.
    pub channels: usize,
    /// Patch embedding channels; must equal `hidden`.
    pub patch_channels: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Denoise loop runs `t = denoise_steps, ..., 0`.
    pub denoise_steps: usize,
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.layers,
            self.hidden,
            self.channels,
            self.patch_channels,
            self.frames,
            self.height,
            self.width,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidConfig("all counts must be at least 1"));
        }
        if self.patch_channels != self.hidden {
            return Err(Error::InvalidConfig(
                "patch channels must equal the text hidden size",
            ));
        }
        Ok(())
    }

    pub fn video_shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }
}

/// Weights for one 3D-attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Attn3dLayer {
    pub patchify: ConvKernelBank,
    pub attention: AttentionWeights,
    /// Per-frame un-patchify map, `(h' w' c_patch) x (h w c)`.
    pub unpatchify: Matrix,
}

impl Attn3dLayer {
    /// Draw a layer with N(0, 1/sqrt(fan_in)) weights from `stream`.
    pub fn random(cfg: &ToyModelConfig, stream: &mut GaussianStream) -> Result<Self> {
        let d = cfg.hidden;
        let c = cfg.channels;
        let kernel_fan_in = 9 * c;
        let kernels = stream.normals(
            cfg.patch_channels * kernel_fan_in,
            1.0 / libm::sqrt(kernel_fan_in as f64),
        );
        let patchify =
            ConvKernelBank::new(c, cfg.patch_channels, kernels, PATCH_PADDING, PATCH_STRIDE)?;

        let attn_std = 1.0 / libm::sqrt(d as f64);
        let mut square = || Matrix::new(d, d, stream.normals(d * d, attn_std));
        let attention = AttentionWeights::new(square()?, square()?, square()?)?;

        let (hp, wp) = patchify.output_size(cfg.height, cfg.width)?;
        let proj_in = hp * wp * cfg.patch_channels;
        let proj_out = cfg.height * cfg.width * c;
        let unpatchify = Matrix::new(
            proj_in,
            proj_out,
            stream.normals(proj_in * proj_out, 1.0 / libm::sqrt(proj_in as f64)),
        )?;
        Ok(Self {
            patchify,
            attention,
            unpatchify,
        })
    }
}

/// Row-normalised attention matrix `D^-1 Q K^T`.
pub fn attention_scores(x: &Matrix, wts: &AttentionWeights) -> Result<Matrix> {
    if x.cols() != wts.dim() {
        return Err(Error::ShapeMismatch {
            left: x.shape(),
            right: wts.query.shape(),
        });
    }
    let q = x.matmul(&wts.query)?;
    let k = x.matmul(&wts.key)?;
    let raw = q.matmul(&k.transpose())?;
    let n = raw.rows();
    let mut data = raw.into_vec();
    for (row, chunk) in data.chunks_mut(n).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if sum.abs() < ROW_SUM_FLOOR {
            return Err(Error::SingularRowSum { row });
        }
        chunk.iter_mut().for_each(|v| *v /= sum);
    }
    Matrix::from_computed(n, n, data)
}

/// `D^-1 A X W_V`.
pub fn attention(x: &Matrix, wts: &AttentionWeights) -> Result<Matrix> {
    attention_scores(x, wts)?.matmul(x)?.matmul(&wts.value)
}

/// 3x3 convolution with zero padding and stride from `bank`.
pub fn conv2d(x: &FeatureMap, bank: &ConvKernelBank) -> Result<FeatureMap> {
    if x.channels() != bank.in_channels() {
        return Err(Error::ShapeMismatch {
            left: (x.height() * x.width(), x.channels()),
            right: (9, bank.in_channels()),
        });
    }
    let (out_h, out_w) = bank.output_size(x.height(), x.width())?;
    let (p, s) = (bank.padding, bank.stride);
    let c_out = bank.out_channels();
    let mut out = vec![0.0; out_h * out_w * c_out];
    for i in 0..out_h {
        for j in 0..out_w {
            let cell = &mut out[(i * out_w + j) * c_out..(i * out_w + j + 1) * c_out];
            for m in 0..3 {
                // Padded coordinate s*i + m maps to input row s*i + m - p.
                let Some(r) = (s * i + m).checked_sub(p).filter(|&r| r < x.height()) else {
                    continue;
                };
                for n in 0..3 {
                    let Some(col) = (s * j + n).checked_sub(p).filter(|&c| c < x.width()) else {
                        continue;
                    };
                    for c in 0..x.channels() {
                        let v = x.get(r, col, c);
                        for (l, o) in cell.iter_mut().enumerate() {
                            *o += v * bank.weight(l, m, n, c);
                        }
                    }
                }
            }
        }
    }
    Ok(FeatureMap::from_computed(out_h, out_w, c_out, out))
}

/// Linear projection `X W`.
pub fn linear(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    x.matmul(w)
}

/// One 3D-attention layer. `probe` sees the normalised attention matrix.
pub fn attn3d_probed(
    text: &Matrix,
    video: &VideoTensor,
    layer: &Attn3dLayer,
    probe: &mut dyn FnMut(&Matrix),
) -> Result<VideoTensor> {
    let [frames, height, width, channels] = video.shape();
    let c_patch = layer.patchify.out_channels();
    if text.cols() != c_patch {
        return Err(Error::InvalidConfig(
            "text hidden size must equal patch channels",
        ));
    }

    let patches: Vec<FeatureMap> = {
        let conv = |f: usize| conv2d(&video.frame(f), &layer.patchify);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..frames)
                .into_par_iter()
                .map(conv)
                .collect::<Result<_>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..frames).map(conv).collect::<Result<_>>()?
        }
    };
    let tokens_per_frame = patches[0].height() * patches[0].width();
    let patch_tokens = Matrix::from_computed(
        frames * tokens_per_frame,
        c_patch,
        patches.into_iter().flat_map(FeatureMap::into_vec).collect(),
    )?;

    let hidden = text.vstack(&patch_tokens)?;
    let scores = attention_scores(&hidden, &layer.attention)?;
    probe(&scores);
    let hidden = scores.matmul(&hidden)?.matmul(&layer.attention.value)?;
    let (_, patch_tokens) = hidden.split_rows(text.rows())?;

    // One row per frame holding all of its patch tokens.
    let per_frame = patch_tokens.reshape(frames, tokens_per_frame * c_patch)?;
    let pixels = linear(&per_frame, &layer.unpatchify)?;
    VideoTensor::new(frames, height, width, channels, pixels.into_vec())
}

pub fn attn3d(text: &Matrix, video: &VideoTensor, layer: &Attn3dLayer) -> Result<VideoTensor> {
    attn3d_probed(text, video, layer, &mut |_| {})
}

/// A stack of seeded 3D-attention layers plus the denoise loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    config: ToyModelConfig,
    layers: Vec<Attn3dLayer>,
}

/// Stream id for the initial latent noise; layer `l` uses stream `l + 1`.
const NOISE_STREAM: u64 = 0;

impl ToyModel {
    pub fn new(config: ToyModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|l| {
                Attn3dLayer::random(&config, &mut GaussianStream::new(config.seed, l as u64 + 1))
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Attn3dLayer] {
        &self.layers
    }

    fn check_inputs(&self, text: &Matrix, z: &VideoTensor) -> Result<()> {
        if text.cols() != self.config.hidden {
            return Err(Error::InvalidConfig(
                "text embedding width must equal the hidden size",
            ));
        }
        if z.shape() != self.config.video_shape() {
            return Err(Error::InvalidConfig(
                "latent shape does not match the configuration",
            ));
        }
        Ok(())
    }

    /// Apply every layer in order. `probe(layer, scores)` sees each attention matrix.
    pub fn forward_probed(
        &self,
        text: &Matrix,
        z: &VideoTensor,
        probe: &mut dyn FnMut(usize, &Matrix),
    ) -> Result<VideoTensor> {
        self.check_inputs(text, z)?;
        let mut video = z.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            video = attn3d_probed(text, &video, layer, &mut |s| probe(l, s))?;
        }
        Ok(video)
    }

    pub fn forward(&self, text: &Matrix, z: &VideoTensor) -> Result<VideoTensor> {
        self.forward_probed(text, z, &mut |_, _| {})
    }

    /// One denoise step. The timestep is accepted for interface parity and
    /// does not condition the model.
    pub fn denoise_step(&self, z: &VideoTensor, text: &Matrix, _t: usize) -> Result<VideoTensor> {
        self.forward(text, z)
    }

    /// Standard normal latent drawn from the configured seed.
    pub fn initial_noise(&self) -> Result<VideoTensor> {
        let [f, h, w, c] = self.config.video_shape();
        let mut stream = GaussianStream::new(self.config.seed, NOISE_STREAM);
        VideoTensor::new(f, h, w, c, stream.normals(f * h * w * c, 1.0))
    }

    /// Denoise from seeded noise: `t = T, T-1, ..., 0`, i.e. `T + 1` steps.
    pub fn denoise(&self, text: &Matrix) -> Result<VideoTensor> {
        self.denoise_probed(text, &mut |_, _, _| {})
    }

    /// As [`ToyModel::denoise`]; `probe(t, layer, scores)` sees every attention matrix.
    pub fn denoise_probed(
        &self,
        text: &Matrix,
        probe: &mut dyn FnMut(usize, usize, &Matrix),
    ) -> Result<VideoTensor> {
        let mut z = self.initial_noise()?;
        for t in (0..=self.config.denoise_steps).rev() {
            z = self.forward_probed(text, &z, &mut |l, s| probe(t, l, s))?;
        }
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub selection: OptimalSelection,
    pub video: VideoTensor,
}

/// Select the optimal interpolation embedding and denoise a video from it.
pub fn generate(
    a: &PromptEmbedding,
    b: &PromptEmbedding,
    c: &PromptEmbedding,
    options: FinderOptions,
    config: ToyModelConfig,
) -> Result<Generation> {
    let selection = find_optimal(a, b, c, options)?;
    let model = ToyModel::new(config)?;
    let video = model.denoise(&selection.embedding)?;
    Ok(Generation { selection, video })
}
