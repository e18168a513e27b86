mod common;

use common::{random_matrix, rng};
use vipera_core::backbone::{Backbone, BackboneConfig, FrameFeatures, FrozenWeights, PixelFrame, FRAME_SIZE};
use vipera_core::dataset::{select_training_subset, split_manifest, synthetic_manifest, Generator, SubsetSize};
use vipera_core::head::HeadConfig;
use vipera_core::source::{BackboneSource, SyntheticFrames};
use vipera_core::trainer::{fit, TrainConfig};
use vipera_core::{Error, Matrix};

fn small() -> BackboneConfig {
    BackboneConfig {
        tokens_per_frame: 4,
        frame_width: 16,
        visual_tokens: 3,
        visual_width: 12,
        embed_width: 10,
        max_frames: 8,
        seed: 5,
    }
}

fn random_features(cfg: &BackboneConfig, frames: usize, seed: u64) -> FrameFeatures {
    let mut r = rng(seed);
    FrameFeatures::new(
        (0..frames)
            .map(|_| random_matrix(&mut r, cfg.tokens_per_frame, cfg.frame_width))
            .collect(),
    )
    .unwrap()
}

fn reversed(f: &FrameFeatures) -> FrameFeatures {
    let mut frames = f.frames().to_vec();
    frames.reverse();
    FrameFeatures::new(frames).unwrap()
}

#[test]
fn output_shape_for_any_frame_count() {
    let cfg = small();
    let b = Backbone::new(cfg).unwrap();
    for j in [1, 2, 8] {
        let v = b.embed_features(&random_features(&cfg, j, j as u64)).unwrap();
        assert_eq!(v.shape(), (cfg.visual_tokens, cfg.embed_width));
        assert!(v.is_finite());
    }
}

#[test]
fn positional_table_breaks_order_symmetry() {
    let cfg = small();
    let b = Backbone::new(cfg).unwrap();
    for seed in 0..20 {
        let f = random_features(&cfg, 8, seed);
        let forward = b.embed_features(&f).unwrap();
        let backward = b.embed_features(&reversed(&f)).unwrap();
        assert!(forward.frobenius_distance(&backward).unwrap() > 1e-6, "seed {seed}");
    }
}

#[test]
fn without_positions_frame_order_is_irrelevant() {
    let cfg = small();
    let mut weights = FrozenWeights::from_config(&cfg).unwrap();
    weights.positional = Matrix::zeros(cfg.max_frames, cfg.frame_width);
    let b = Backbone::with_weights(cfg, weights).unwrap();
    let f = random_features(&cfg, 6, 1);
    let d = b
        .embed_features(&f)
        .unwrap()
        .frobenius_distance(&b.embed_features(&reversed(&f)).unwrap())
        .unwrap();
    assert!(d < 1e-5, "distance {d}");
}

#[test]
fn too_many_frames_is_a_capacity_error() {
    let cfg = small();
    let b = Backbone::new(cfg).unwrap();
    let err = b.embed_features(&random_features(&cfg, 9, 0)).unwrap_err();
    assert!(matches!(err, Error::Capacity { frames: 9, max: 8 }));
}

#[test]
fn same_seed_same_weights() {
    let a = FrozenWeights::from_config(&small()).unwrap();
    let b = FrozenWeights::from_config(&small()).unwrap();
    let c = FrozenWeights::from_config(&BackboneConfig { seed: 6, ..small() }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.queries, c.queries);
}

#[test]
fn pixel_pipeline_end_to_end() {
    let b = Backbone::new(BackboneConfig::default()).unwrap();
    let frames: Vec<PixelFrame> = (0..8u8).map(|i| PixelFrame::filled(FRAME_SIZE, FRAME_SIZE, 30 * i)).collect();
    let v = b.embed_batch(&frames).unwrap();
    assert_eq!(v.shape(), (8, 128));
    assert!(v.is_finite());
}

#[test]
fn training_leaves_backbone_untouched() {
    let cfg = small();
    let backbone = Backbone::new(cfg).unwrap();
    let before = backbone.weights().clone();
    let manifest = split_manifest(&synthetic_manifest(10, &[Generator::Seine], 12), 0).unwrap();
    let view = select_training_subset(&manifest, &[Generator::Seine], SubsetSize::All, 0).unwrap();
    let source = BackboneSource {
        backbone: &backbone,
        frames: SyntheticFrames { seed: 2 },
    };
    let head = HeadConfig {
        visual_tokens: cfg.visual_tokens,
        embed_width: cfg.embed_width,
        ..HeadConfig::default()
    };
    let train = TrainConfig {
        max_epochs: 2,
        train_windows: 2,
        frames_per_window: 4,
        ..TrainConfig::default()
    };
    let out = fit(&view, &source, head, &train).unwrap();
    assert_eq!(out.log.len(), 2);
    assert_eq!(backbone.weights(), &before);
}
