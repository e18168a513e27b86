//! Frozen spatio-temporal embedding pipeline at toy scale.
//!
//! A batch of `J` frames goes through four stages:
//!
//! 1. [`Backbone::encode_frame`]: pooled-patch random projection, giving
//!    `M_f` unit-length tokens of width `D_f` per frame;
//! 2. [`add_positional`]: the sinusoidal encoding of each frame's index in
//!    the batch is added to all of that frame's tokens;
//! 3. [`Backbone::qformer`]: `T_v` fixed learned-free queries cross-attend
//!    over all `J·M_f` tokens and pass through a value map, yielding a
//!    fixed-length `T_v × D_v` video embedding for any `J`;
//! 4. [`Backbone::project`]: a linear map to the `T_v × E` embedding the
//!    classification head consumes.
//!
//! Every weight is derived from the configured seed and never changes.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::{matmul, matmul_transposed, softmax_rows, Matrix};

/// Side length of the square frames the encoder accepts.
pub const FRAME_SIZE: usize = 224;
/// Colour channels per pixel.
pub const CHANNELS: usize = 3;
/// Each pooling region is averaged over a `POOL_GRID × POOL_GRID` sub-grid.
pub const POOL_GRID: usize = 4;
const DESCRIPTOR_LEN: usize = POOL_GRID * POOL_GRID * CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneConfig {
    /// `M_f`: tokens per frame.
    pub tokens_per_frame: usize,
    /// `D_f`: frame-token width.
    pub frame_width: usize,
    /// `T_v`: visual-token count.
    pub visual_tokens: usize,
    /// `D_v`: visual-token width.
    pub visual_width: usize,
    /// `E`: projected width.
    pub embed_width: usize,
    /// `J_max`: rows of the positional table.
    pub max_frames: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            tokens_per_frame: 16,
            frame_width: 64,
            visual_tokens: 8,
            visual_width: 64,
            embed_width: 128,
            max_frames: 64,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("tokens_per_frame", self.tokens_per_frame),
            ("frame_width", self.frame_width),
            ("visual_tokens", self.visual_tokens),
            ("visual_width", self.visual_width),
            ("embed_width", self.embed_width),
            ("max_frames", self.max_frames),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(alloc::format!("backbone {name} must be >= 1")));
            }
        }
        let (gr, gc) = region_grid(self.tokens_per_frame);
        if FRAME_SIZE / gr < POOL_GRID || FRAME_SIZE / gc < POOL_GRID {
            return Err(Error::Config(alloc::format!(
                "tokens_per_frame {} splits a {FRAME_SIZE}px frame into regions smaller than {POOL_GRID}px",
                self.tokens_per_frame
            )));
        }
        Ok(())
    }
}

/// Region grid `(rows, cols)` with `rows · cols = m` and `rows` the largest
/// divisor not above `√m`.
fn region_grid(m: usize) -> (usize, usize) {
    let mut rows = 1;
    let mut d = 1;
    while d * d <= m {
        if m.is_multiple_of(d) {
            rows = d;
        }
        d += 1;
    }
    (rows, m / rows)
}

/// An RGB frame, 8 bits per channel, stored row-major `[y][x][c]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelFrame {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl PixelFrame {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * CHANNELS {
            return Err(Error::Shape {
                op: "pixel_frame",
                left: (height, width * CHANNELS),
                right: (data.len(), 1),
            });
        }
        Ok(PixelFrame {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        PixelFrame {
            height,
            width,
            data: alloc::vec![value; height * width * CHANNELS],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn pixel(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }
}

/// Per-frame token matrices `f_j`, each `M_f × D_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    frames: Vec<Matrix>,
}

impl FrameFeatures {
    pub fn new(frames: Vec<Matrix>) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("frame features"))?;
        let shape = first.shape();
        if let Some(bad) = frames.iter().find(|f| f.shape() != shape) {
            return Err(Error::Shape {
                op: "frame_features",
                left: shape,
                right: bad.shape(),
            });
        }
        Ok(FrameFeatures { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Matrix] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Matrix> {
        self.frames
    }

    /// Stacks all tokens into a `(J·M_f) × D_f` matrix, frame-major.
    pub fn flatten(&self) -> Matrix {
        let (m, d) = self.frames[0].shape();
        let mut data = Vec::with_capacity(self.frames.len() * m * d);
        for f in &self.frames {
            data.extend_from_slice(f.as_slice());
        }
        Matrix::from_vec(self.frames.len() * m, d, data).expect("consistent frame shapes")
    }
}

/// Seed-derived weights of the toy backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenWeights {
    /// Pooled-patch descriptor to token projection, `48 × D_f`.
    pub patch_projection: Matrix,
    /// `Q`, `T_v × D_f`.
    pub queries: Matrix,
    /// Attention value map, `D_f × D_v`.
    pub value_map: Matrix,
    /// `W_v`, `D_v × E`.
    pub projection: Matrix,
    /// `P`, `J_max × D_f`.
    pub positional: Matrix,
}

impl FrozenWeights {
    pub fn from_config(cfg: &BackboneConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let patch_projection = glorot(&mut rng, DESCRIPTOR_LEN, cfg.frame_width);
        let queries = glorot(&mut rng, cfg.visual_tokens, cfg.frame_width);
        let value_map = glorot(&mut rng, cfg.frame_width, cfg.visual_width);
        let projection = glorot(&mut rng, cfg.visual_width, cfg.embed_width);
        Ok(FrozenWeights {
            patch_projection,
            queries,
            value_map,
            projection,
            positional: sinusoidal_table(cfg.max_frames, cfg.frame_width),
        })
    }
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = libm::sqrt(6.0 / (rows + cols) as f64) as f32;
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Standard sinusoidal table: row `j`, column `2i` is
/// `sin(j / 10000^{2i/width})`, column `2i+1` the matching cosine.
pub fn sinusoidal_table(rows: usize, width: usize) -> Matrix {
    Matrix::from_fn(rows, width, |j, col| {
        let pair = (col / 2) as f64;
        let freq = libm::pow(10000.0, 2.0 * pair / width as f64);
        let angle = j as f64 / freq;
        (if col % 2 == 0 {
            libm::sin(angle)
        } else {
            libm::cos(angle)
        }) as f32
    })
}

/// `F′ = F + P`: adds row `j` of `positional` to every token of frame `j`.
pub fn add_positional(features: &FrameFeatures, positional: &Matrix) -> Result<FrameFeatures> {
    let frames = features.len();
    if frames > positional.rows() {
        return Err(Error::Capacity {
            frames,
            max: positional.rows(),
        });
    }
    let width = features.frames[0].cols();
    if width != positional.cols() {
        return Err(Error::Shape {
            op: "add_positional",
            left: features.frames[0].shape(),
            right: positional.shape(),
        });
    }
    let out = features
        .frames
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let p = positional.row(j);
            let mut g = f.clone();
            for m in 0..g.rows() {
                for (v, &pv) in g.row_mut(m).iter_mut().zip(p) {
                    *v += pv;
                }
            }
            g
        })
        .collect();
    Ok(FrameFeatures { frames: out })
}

/// The frozen toy backbone: configuration plus derived weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    cfg: BackboneConfig,
    weights: FrozenWeights,
}

impl Backbone {
    pub fn new(cfg: BackboneConfig) -> Result<Self> {
        let weights = FrozenWeights::from_config(&cfg)?;
        Ok(Backbone { cfg, weights })
    }

    /// Uses explicit weights, e.g. to zero the positional table in tests.
    pub fn with_weights(cfg: BackboneConfig, weights: FrozenWeights) -> Result<Self> {
        cfg.validate()?;
        let expect = [
            (weights.patch_projection.shape(), (DESCRIPTOR_LEN, cfg.frame_width)),
            (weights.queries.shape(), (cfg.visual_tokens, cfg.frame_width)),
            (weights.value_map.shape(), (cfg.frame_width, cfg.visual_width)),
            (weights.projection.shape(), (cfg.visual_width, cfg.embed_width)),
            (weights.positional.shape(), (cfg.max_frames, cfg.frame_width)),
        ];
        for (got, want) in expect {
            if got != want {
                return Err(Error::Shape {
                    op: "frozen_weights",
                    left: want,
                    right: got,
                });
            }
        }
        Ok(Backbone { cfg, weights })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &FrozenWeights {
        &self.weights
    }

    /// Encodes one `224×224` frame into `M_f` unit-length tokens. A token
    /// whose projection is exactly zero stays zero.
    pub fn encode_frame(&self, frame: &PixelFrame) -> Result<Matrix> {
        if frame.height != FRAME_SIZE || frame.width != FRAME_SIZE {
            return Err(Error::Shape {
                op: "encode_frame",
                left: (FRAME_SIZE, FRAME_SIZE),
                right: (frame.height, frame.width),
            });
        }
        let (gr, gc) = region_grid(self.cfg.tokens_per_frame);
        let mut descriptors = Matrix::zeros(self.cfg.tokens_per_frame, DESCRIPTOR_LEN);
        for r in 0..gr {
            let (y0, y1) = span(r, gr, FRAME_SIZE);
            for c in 0..gc {
                let (x0, x1) = span(c, gc, FRAME_SIZE);
                let desc = descriptors.row_mut(r * gc + c);
                for sy in 0..POOL_GRID {
                    let (a0, a1) = span(sy, POOL_GRID, y1 - y0);
                    for sx in 0..POOL_GRID {
                        let (b0, b1) = span(sx, POOL_GRID, x1 - x0);
                        let mut sums = [0u64; CHANNELS];
                        for y in y0 + a0..y0 + a1 {
                            for x in x0 + b0..x0 + b1 {
                                for (ch, s) in sums.iter_mut().enumerate() {
                                    *s += frame.pixel(y, x, ch) as u64;
                                }
                            }
                        }
                        let count = ((a1 - a0) * (b1 - b0)) as f64 * 255.0;
                        for (ch, s) in sums.iter().enumerate() {
                            desc[(sy * POOL_GRID + sx) * CHANNELS + ch] = (*s as f64 / count) as f32;
                        }
                    }
                }
            }
        }
        let mut tokens = matmul(&descriptors, &self.weights.patch_projection)?;
        for m in 0..tokens.rows() {
            let row = tokens.row_mut(m);
            let norm = libm::sqrt(row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>());
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
            }
        }
        Ok(tokens)
    }

    pub fn encode_frames(&self, frames: &[PixelFrame]) -> Result<FrameFeatures> {
        let encoded = frames
            .iter()
            .map(|f| self.encode_frame(f))
            .collect::<Result<Vec<_>>>()?;
        FrameFeatures::new(encoded)
    }

    pub fn add_positional(&self, features: &FrameFeatures) -> Result<FrameFeatures> {
        self.check_features(features)?;
        add_positional(features, &self.weights.positional)
    }

    /// Cross-attention weights `softmax_rows(Q·Kᵀ/√D_f)`, `T_v × (J·M_f)`.
    pub fn attention(&self, features: &FrameFeatures) -> Result<Matrix> {
        self.check_features(features)?;
        let keys = features.flatten();
        let mut logits = matmul_transposed(&self.weights.queries, &keys)?;
        let scale = 1.0 / libm::sqrt(self.cfg.frame_width as f64);
        logits
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = (*v as f64 * scale) as f32);
        Ok(softmax_rows(&logits))
    }

    /// Pools any number of frames into the fixed `T_v × D_v` embedding `Ṽ`.
    pub fn qformer(&self, features: &FrameFeatures) -> Result<Matrix> {
        let attn = self.attention(features)?;
        let pooled = matmul(&attn, &features.flatten())?;
        matmul(&pooled, &self.weights.value_map)
    }

    /// `Ṽ′ = Ṽ · W_v`.
    pub fn project(&self, visual: &Matrix) -> Result<Matrix> {
        if visual.shape() != (self.cfg.visual_tokens, self.cfg.visual_width) {
            return Err(Error::Shape {
                op: "project",
                left: (self.cfg.visual_tokens, self.cfg.visual_width),
                right: visual.shape(),
            });
        }
        matmul(visual, &self.weights.projection)
    }

    /// Positional encoding, Q-Former and projection over encoded frames.
    pub fn embed_features(&self, features: &FrameFeatures) -> Result<Matrix> {
        let temporal = self.add_positional(features)?;
        let visual = self.qformer(&temporal)?;
        self.project(&visual)
    }

    /// Full pipeline from pixels to the `T_v × E` embedding.
    pub fn embed_batch(&self, frames: &[PixelFrame]) -> Result<Matrix> {
        if frames.is_empty() {
            return Err(Error::Empty("frame batch"));
        }
        if frames.len() > self.cfg.max_frames {
            return Err(Error::Capacity {
                frames: frames.len(),
                max: self.cfg.max_frames,
            });
        }
        let features = self.encode_frames(frames)?;
        self.embed_features(&features)
    }

    fn check_features(&self, features: &FrameFeatures) -> Result<()> {
        let want = (self.cfg.tokens_per_frame, self.cfg.frame_width);
        let got = features.frames[0].shape();
        if got != want {
            return Err(Error::Shape {
                op: "frame_features",
                left: want,
                right: got,
            });
        }
        Ok(())
    }
}

#[inline]
fn span(i: usize, parts: usize, len: usize) -> (usize, usize) {
    (i * len / parts, (i + 1) * len / parts)
}
