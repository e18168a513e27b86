//! Training loop for the prototype head: BCE over a video's sampled
//! windows, Adam updates and a reduce-on-plateau learning rate.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ManifestEntry, TrainingView};
use crate::error::{Error, Result};
use crate::head::{head_backward, head_forward, init_head, HeadConfig, HeadGradients, HeadParams};
use crate::numcore::{sigmoid, Matrix};
use crate::sampler::{plan_training_windows, plan_windows, Label, WindowPlan};
use crate::source::EmbeddingSource;

/// Predictions are clamped to `[ε, 1−ε]` before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub plateau_epochs: usize,
    pub lr_min: f64,
    pub max_epochs: usize,
    /// Windows per training example (`B`).
    pub train_windows: usize,
    /// Frames per window (`J`).
    pub frames_per_window: usize,
    /// Validation loss must drop by more than this to count as improvement.
    pub improvement_epsilon: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            lr_decay_factor: 0.1,
            plateau_epochs: 5,
            lr_min: 1e-7,
            max_epochs: 200,
            train_windows: 5,
            frames_per_window: 8,
            improvement_epsilon: 1e-5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr0) {
            return Err(Error::Config(alloc::format!(
                "need 0 < lr_min ({}) <= lr0 ({})",
                self.lr_min,
                self.lr0
            )));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::Config("lr_decay_factor must lie in (0, 1)".into()));
        }
        if self.plateau_epochs == 0 || self.train_windows == 0 || self.frames_per_window == 0 {
            return Err(Error::Config(
                "plateau_epochs, train_windows and frames_per_window must be >= 1".into(),
            ));
        }
        if self.improvement_epsilon.is_nan() || self.improvement_epsilon < 0.0 {
            return Err(Error::Config("improvement_epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy of predictions `y_hat` against targets `y`.
pub fn bce_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::Shape {
            op: "bce_loss",
            left: (y_hat.len(), 1),
            right: (y.len(), 1),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("bce batch"));
    }
    let sum: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            t * libm::log(p) + (1.0 - t) * libm::log(1.0 - p)
        })
        .sum();
    Ok(-sum / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<f32>>,
    pub second: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        AdamState {
            config,
            step: 0,
            first: shapes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
        }
    }

    pub fn for_head(config: AdamConfig, params: &HeadParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState::new(config, &shapes)
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step(params: &mut [&mut [f32]], grads: &[&[f64]], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape {
            op: "adam_step",
            left: (params.len(), 1),
            right: (grads.len(), state.first.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::Shape {
                op: "adam_step",
                left: (p.len(), 1),
                right: (g.len(), state.first[i].len()),
            });
        }
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(beta1, t);
    let c2 = 1.0 - libm::pow(beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for j in 0..p.len() {
            let mj = beta1 * m[j] as f64 + (1.0 - beta1) * g[j];
            let vj = beta2 * v[j] as f64 + (1.0 - beta2) * g[j] * g[j];
            m[j] = mj as f32;
            v[j] = vj as f32;
            let update = lr * (mj / c1) / (libm::sqrt(vj / c2) + eps);
            p[j] = (p[j] as f64 - update) as f32;
        }
    }
    Ok(())
}

/// Applies one Adam step to a head.
pub fn adam_step_head(params: &mut HeadParams, grads: &HeadGradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let mut tensors = params.tensors_mut();
    adam_step(&mut tensors, &grads.tensors(), state, lr)
}

/// Reduce-on-plateau rule for one epoch.
///
/// Improvement means `current_val < best_val − ε`; it resets the counter.
/// After `plateau_epochs` epochs without improvement the rate is multiplied
/// by `lr_decay_factor` (never below `lr_min`) and the counter resets.
/// Returns the new rate and counter.
pub fn lr_schedule_update(
    best_val: f64,
    current_val: f64,
    epochs_since_improve: usize,
    lr: f64,
    cfg: &TrainConfig,
) -> (f64, usize) {
    if current_val < best_val - cfg.improvement_epsilon {
        return (lr, 0);
    }
    let count = epochs_since_improve + 1;
    if count >= cfg.plateau_epochs {
        ((lr * cfg.lr_decay_factor).max(cfg.lr_min), 0)
    } else {
        (lr, count)
    }
}

/// Stateful wrapper around [`lr_schedule_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub best: f64,
    pub since_improve: usize,
}

impl PlateauSchedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        PlateauSchedule {
            lr: cfg.lr0,
            best: f64::INFINITY,
            since_improve: 0,
        }
    }

    /// Feeds one epoch's validation loss; returns the rate for the next epoch.
    pub fn observe(&mut self, val_loss: f64, cfg: &TrainConfig) -> f64 {
        let improved = val_loss < self.best - cfg.improvement_epsilon;
        let (lr, count) = lr_schedule_update(self.best, val_loss, self.since_improve, self.lr, cfg);
        if improved {
            self.best = val_loss;
        }
        self.lr = lr;
        self.since_improve = count;
        lr
    }
}

/// One video scheduled for an optimizer step, with its sampled windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochItem {
    /// Index into the training entries.
    pub entry: usize,
    pub label: Label,
    pub windows: WindowPlan,
}

/// A scheduled video with its window embeddings materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub video_id: alloc::string::String,
    pub label: Label,
    pub embeddings: Vec<Matrix>,
}

/// Orders one epoch: each fake once, each real twice, shuffled, with fresh
/// training windows per item.
pub fn build_epoch<R: Rng + ?Sized>(entries: &[ManifestEntry], cfg: &TrainConfig, rng: &mut R) -> Result<Vec<EpochItem>> {
    let reals = entries.iter().filter(|e| e.label == Label::Real).count();
    let fakes = entries.len() - reals;
    if entries.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    if reals == 0 || fakes == 0 {
        return Err(Error::Dataset(alloc::format!(
            "training split needs both classes, found {reals} real and {fakes} fake"
        )));
    }
    let mut order: Vec<(usize, Label)> = Vec::with_capacity(fakes + 2 * reals);
    for (i, e) in entries.iter().enumerate() {
        let copies = if e.label == Label::Real { 2 } else { 1 };
        for _ in 0..copies {
            order.push((i, e.label));
        }
    }
    order.shuffle(rng);
    order
        .into_iter()
        .map(|(i, label)| {
            let windows = plan_training_windows(
                entries[i].n_frames,
                cfg.train_windows,
                cfg.frames_per_window,
                rng,
            )?;
            Ok(EpochItem {
                entry: i,
                label,
                windows,
            })
        })
        .collect()
}

/// Loss and gradients of one example: BCE over its windows.
pub fn example_gradients(
    params: &HeadParams,
    embeddings: &[Matrix],
    label: Label,
) -> Result<(f64, HeadGradients)> {
    if embeddings.is_empty() {
        return Err(Error::Empty("example windows"));
    }
    let target = label.target();
    let batch = embeddings.len() as f64;
    let mut grads = HeadGradients::zeros(&params.config);
    let mut preds = Vec::with_capacity(embeddings.len());
    for emb in embeddings {
        let (s, act) = head_forward(emb, params)?;
        let p = sigmoid(s);
        preds.push(p);
        // d/ds of −[y ln σ(s) + (1−y) ln(1−σ(s))] / B
        let g = head_backward(&act, params, (p - target) / batch)?;
        grads.accumulate(&g);
    }
    let targets = alloc::vec![target; embeddings.len()];
    Ok((bce_loss(&preds, &targets)?, grads))
}

/// Mean per-video BCE with deterministic evenly spaced windows.
pub fn validation_loss<S: EmbeddingSource + ?Sized>(
    params: &HeadParams,
    entries: &[ManifestEntry],
    source: &S,
    cfg: &TrainConfig,
) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::Dataset("validation split is empty".into()));
    }
    let mut total = 0.0;
    for e in entries {
        let plan = plan_windows(e.n_frames, cfg.train_windows, cfg.frames_per_window)?;
        let embeddings = source.window_embeddings(e, &plan)?;
        let preds = embeddings
            .iter()
            .map(|m| params.score(m).map(sigmoid))
            .collect::<Result<Vec<_>>>()?;
        let targets = alloc::vec![e.label.target(); preds.len()];
        total += bce_loss(&preds, &targets)?;
    }
    Ok(total / entries.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Parameters with the lowest validation loss seen.
    pub best: HeadParams,
    /// Epoch (1-based) that produced `best`; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    /// Parameters after the final epoch.
    pub last: HeadParams,
    pub adam: AdamState,
    pub log: Vec<EpochLog>,
}

/// Trains a freshly initialized head on `view.train`, monitoring
/// `view.val` for the schedule and for model selection.
pub fn fit<S: EmbeddingSource + ?Sized>(
    view: &TrainingView,
    source: &S,
    head: HeadConfig,
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    fit_with_observer(view, source, head, cfg, |_| {})
}

/// [`fit`] calling `after_step` with the parameters after every optimizer
/// step.
pub fn fit_with_observer<S, F>(
    view: &TrainingView,
    source: &S,
    head: HeadConfig,
    cfg: &TrainConfig,
    mut after_step: F,
) -> Result<FitOutcome>
where
    S: EmbeddingSource + ?Sized,
    F: FnMut(&HeadParams),
{
    cfg.validate()?;
    let mut params = init_head(head, cfg.seed)?;
    let mut adam = AdamState::for_head(cfg.adam, &params);
    let mut outcome_best = params.clone();
    let mut best_epoch = None;
    let mut log = Vec::new();
    if cfg.max_epochs == 0 {
        return Ok(FitOutcome {
            best: outcome_best,
            best_epoch,
            last: params,
            adam,
            log,
        });
    }
    if view.val.is_empty() {
        return Err(Error::Dataset("validation split is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut schedule = PlateauSchedule::new(cfg);
    let mut best_val = f64::INFINITY;

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr;
        let items = build_epoch(&view.train, cfg, &mut rng)?;
        let mut train_total = 0.0;
        for item in &items {
            let entry = &view.train[item.entry];
            let embeddings = source.window_embeddings(entry, &item.windows)?;
            let (loss, grads) = example_gradients(&params, &embeddings, item.label)?;
            adam_step_head(&mut params, &grads, &mut adam, lr)?;
            after_step(&params);
            train_total += loss;
        }
        let train_loss = train_total / items.len() as f64;
        let val_loss = validation_loss(&params, &view.val, source, cfg)?;
        if val_loss < best_val {
            best_val = val_loss;
            outcome_best = params.clone();
            best_epoch = Some(epoch);
        }
        schedule.observe(val_loss, cfg);
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
    }
    Ok(FitOutcome {
        best: outcome_best,
        best_epoch,
        last: params,
        adam,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Crf, Generator, Split};
    use alloc::format;
    use alloc::vec;

    #[test]
    fn bce_closed_forms() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        let near_zero = bce_loss(&[1.0 - BCE_EPSILON, BCE_EPSILON], &[1.0, 0.0]).unwrap();
        assert!(near_zero > 0.0 && near_zero < 2e-7);
        let v = bce_loss(&[0.9, 0.2], &[1.0, 0.0]).unwrap();
        let expected = -(libm::log(0.9) + libm::log(0.8)) / 2.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.164_252).abs() < 1e-5);
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
        assert!(bce_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![0.5f32, -1.0];
        let mut s = AdamState::new(AdamConfig::default(), &[2]);
        adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut s, 0.1).unwrap();
        assert_eq!(p, [0.5, -1.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![0.0f32];
        let mut s = AdamState::new(AdamConfig::default(), &[1]);
        adam_step(&mut [&mut p], &[&[1.0]], &mut s, 0.1).unwrap();
        // m̂ = v̂ = 1 → update = 0.1 / (1 + 1e-8)
        assert!((p[0] as f64 + 0.1 / (1.0 + 1e-8)).abs() < 1e-8);
    }

    #[test]
    fn adam_equal_gradients_equal_updates() {
        let mut p = vec![0.3f32, 0.3];
        let mut s = AdamState::new(AdamConfig::default(), &[2]);
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[&[0.7, 0.7]], &mut s, 0.01).unwrap();
        }
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut p = vec![0.0f32; 2];
        let mut s = AdamState::new(AdamConfig::default(), &[2]);
        assert!(adam_step(&mut [&mut p], &[&[1.0]], &mut s, 0.1).is_err());
    }

    #[test]
    fn plateau_decays_after_five_epochs() {
        let cfg = TrainConfig::default();
        let mut lr = 1e-4;
        let mut count = 0;
        for _ in 0..4 {
            (lr, count) = lr_schedule_update(1.0, 1.0, count, lr, &cfg);
            assert_eq!(lr, 1e-4);
        }
        (lr, count) = lr_schedule_update(1.0, 1.0, count, lr, &cfg);
        assert!((lr - 1e-5).abs() < 1e-18);
        assert_eq!(count, 0);
    }

    #[test]
    fn plateau_clamps_at_minimum() {
        let cfg = TrainConfig::default();
        let (lr, _) = lr_schedule_update(1.0, 1.0, 4, 1e-7, &cfg);
        assert_eq!(lr, 1e-7);
        let (lr, _) = lr_schedule_update(1.0, 1.0, 4, 1e-6, &cfg);
        assert_eq!(lr, 1e-7);
    }

    #[test]
    fn improvement_resets_counter() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule_update(1.0, 0.5, 3, 1e-4, &cfg), (1e-4, 0));
        // within epsilon is not an improvement
        assert_eq!(lr_schedule_update(1.0, 1.0 - 1e-6, 3, 1e-4, &cfg), (1e-4, 4));
    }

    fn entry(id: &str, label: Label) -> ManifestEntry {
        ManifestEntry {
            video_id: id.into(),
            embedding_path: String::new(),
            label,
            generator: if label == Label::Real {
                Generator::Real
            } else {
                Generator::TokenFlow
            },
            crf: Crf::Uncompressed,
            source_video_id: None,
            split: Split::Train,
            n_frames: 30,
        }
    }
    use alloc::string::String;

    #[test]
    fn epoch_balances_reals() {
        let entries = vec![
            entry("r", Label::Real),
            entry("f1", Label::Fake),
            entry("f2", Label::Fake),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let items = build_epoch(&entries, &TrainConfig::default(), &mut rng).unwrap();
        assert_eq!(items.len(), 4);
        assert_eq!(items.iter().filter(|i| i.label == Label::Real).count(), 2);
        assert!(items.iter().all(|i| i.windows.window_count() == 5));

        let again = build_epoch(&entries, &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(items, again);
    }

    #[test]
    fn full_size_epoch() {
        let mut entries: Vec<_> = (0..352).map(|i| entry(&format!("r{i}"), Label::Real)).collect();
        entries.extend((0..704).map(|i| entry(&format!("f{i}"), Label::Fake)));
        let items = build_epoch(&entries, &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(items.len(), 1408);
        assert_eq!(items.iter().filter(|i| i.label == Label::Real).count(), 704);
    }

    #[test]
    fn single_class_epoch_is_rejected() {
        let entries = vec![entry("r", Label::Real)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            build_epoch(&entries, &TrainConfig::default(), &mut rng),
            Err(Error::Dataset(_))
        ));
        assert!(build_epoch(&[], &TrainConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_head() {
        let view = TrainingView {
            train: vec![entry("r", Label::Real), entry("f", Label::Fake)],
            val: vec![],
        };
        let src = crate::source::SyntheticClusters::new(8, 128, 0.1, 1.0, 0).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = fit(&view, &src, HeadConfig::default(), &cfg).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.last, init_head(HeadConfig::default(), 0).unwrap());
        assert_eq!(out.best, out.last);
    }
}
