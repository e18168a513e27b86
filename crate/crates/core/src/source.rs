//! Where window embeddings come from during training and evaluation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::backbone::{Backbone, PixelFrame, CHANNELS, FRAME_SIZE};
use crate::dataset::ManifestEntry;
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::sampler::{Label, WindowPlan};

/// Produces one projected `T_v × E` embedding per planned window.
pub trait EmbeddingSource {
    fn window_embeddings(&self, entry: &ManifestEntry, plan: &WindowPlan) -> Result<Vec<Matrix>>;
}

impl<S: EmbeddingSource + ?Sized> EmbeddingSource for &S {
    fn window_embeddings(&self, entry: &ManifestEntry, plan: &WindowPlan) -> Result<Vec<Matrix>> {
        (**self).window_embeddings(entry, plan)
    }
}

/// Supplies decoded frames of a video by index.
pub trait FrameProvider {
    fn frame(&self, entry: &ManifestEntry, index: usize) -> Result<PixelFrame>;
}

/// Runs the frozen backbone over frames from a [`FrameProvider`].
pub struct BackboneSource<'a, P> {
    pub backbone: &'a Backbone,
    pub frames: P,
}

impl<P: FrameProvider> EmbeddingSource for BackboneSource<'_, P> {
    fn window_embeddings(&self, entry: &ManifestEntry, plan: &WindowPlan) -> Result<Vec<Matrix>> {
        plan.frame_indices
            .iter()
            .map(|indices| {
                let frames = indices
                    .iter()
                    .map(|&i| self.frames.frame(entry, i))
                    .collect::<Result<Vec<_>>>()?;
                self.backbone.embed_batch(&frames)
            })
            .collect()
    }
}

/// 64-bit FNV-1a, used to derive per-video seeds from ids.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn window_seed(seed: u64, entry: &ManifestEntry, start: usize) -> u64 {
    fnv1a(entry.video_id.as_bytes()) ^ seed.rotate_left(17) ^ (start as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Random noise frames whose mean brightness depends on the label; gives
/// the backbone path something learnable without real media.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticFrames {
    pub seed: u64,
}

impl FrameProvider for SyntheticFrames {
    fn frame(&self, entry: &ManifestEntry, index: usize) -> Result<PixelFrame> {
        if index >= entry.n_frames {
            return Err(Error::Source(alloc::format!(
                "frame {index} out of range for '{}' ({} frames)",
                entry.video_id,
                entry.n_frames
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(window_seed(self.seed, entry, index));
        let (lo, hi) = match entry.label {
            Label::Real => (64u8, 255u8),
            Label::Fake => (0u8, 191u8),
        };
        let data = (0..FRAME_SIZE * FRAME_SIZE * CHANNELS)
            .map(|_| rng.random_range(lo..=hi))
            .collect();
        PixelFrame::new(FRAME_SIZE, FRAME_SIZE, data)
    }
}

/// Two Gaussian clusters of embeddings: real windows around `u`, fake
/// windows around `−u`, with i.i.d. noise per entry.
#[derive(Debug, Clone)]
pub struct SyntheticClusters {
    center: Matrix,
    noise: Normal<f64>,
    seed: u64,
}

impl SyntheticClusters {
    /// `u` has entries `±amplitude` with random signs drawn from `seed`.
    pub fn new(rows: usize, cols: usize, amplitude: f32, noise_std: f64, seed: u64) -> Result<Self> {
        let noise = Normal::new(0.0, noise_std)
            .map_err(|_| Error::Config(alloc::format!("invalid noise scale {noise_std}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = Matrix::from_fn(rows, cols, |_, _| {
            if rng.random::<bool>() {
                amplitude
            } else {
                -amplitude
            }
        });
        Ok(SyntheticClusters {
            center,
            noise,
            seed,
        })
    }

    /// The real-class center `u`.
    pub fn center(&self) -> &Matrix {
        &self.center
    }

    /// Embedding of one window; deterministic in `(seed, video_id, start)`.
    pub fn window(&self, entry: &ManifestEntry, start: usize) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(window_seed(self.seed, entry, start));
        let sign = match entry.label {
            Label::Real => 1.0f64,
            Label::Fake => -1.0f64,
        };
        let mut m = self.center.clone();
        for v in m.as_mut_slice() {
            *v = (sign * *v as f64 + self.noise.sample(&mut rng)) as f32;
        }
        m
    }
}

impl EmbeddingSource for SyntheticClusters {
    fn window_embeddings(&self, entry: &ManifestEntry, plan: &WindowPlan) -> Result<Vec<Matrix>> {
        Ok(plan.starts.iter().map(|&s| self.window(entry, s)).collect())
    }
}
