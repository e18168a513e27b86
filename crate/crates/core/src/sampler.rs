//! Frame-window planning and the video-level decision rule.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::sigmoid;

/// `B` windows of `J` time-continuous frame indices each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub frames_per_window: usize,
    pub starts: Vec<usize>,
    pub frame_indices: Vec<Vec<usize>>,
}

impl WindowPlan {
    fn from_starts(n_frames: usize, frames_per_window: usize, starts: Vec<usize>) -> Self {
        // past the last frame the run is padded by repeating it
        let last = n_frames - 1;
        let frame_indices = starts
            .iter()
            .map(|&s| (s..s + frames_per_window).map(|i| i.min(last)).collect())
            .collect();
        WindowPlan {
            frames_per_window,
            starts,
            frame_indices,
        }
    }

    pub fn window_count(&self) -> usize {
        self.starts.len()
    }
}

fn check(n_frames: usize, windows: usize, frames_per_window: usize) -> Result<()> {
    if n_frames == 0 {
        return Err(Error::EmptyVideo);
    }
    if windows == 0 || frames_per_window == 0 {
        return Err(Error::Config(
            "window count and frames per window must be >= 1".into(),
        ));
    }
    Ok(())
}

/// Deterministic plan: starts evenly spaced over `[0, n_frames − J]`,
/// `start_b = round(b·(n−J)/(B−1))`. Windows overlap when the video is
/// short; videos shorter than `J` repeat their last frame.
pub fn plan_windows(n_frames: usize, windows: usize, frames_per_window: usize) -> Result<WindowPlan> {
    check(n_frames, windows, frames_per_window)?;
    let span = n_frames.saturating_sub(frames_per_window);
    let starts = if windows == 1 {
        alloc::vec![0]
    } else {
        let denom = windows - 1;
        // round half up in exact integer arithmetic
        (0..windows)
            .map(|b| (2 * b * span + denom) / (2 * denom))
            .collect()
    };
    Ok(WindowPlan::from_starts(n_frames, frames_per_window, starts))
}

/// Training plan: `B` starts drawn uniformly from `[0, max(0, n−J)]`.
pub fn plan_training_windows<R: Rng + ?Sized>(
    n_frames: usize,
    windows: usize,
    frames_per_window: usize,
    rng: &mut R,
) -> Result<WindowPlan> {
    check(n_frames, windows, frames_per_window)?;
    let span = n_frames.saturating_sub(frames_per_window);
    let starts = (0..windows).map(|_| rng.random_range(0..=span)).collect();
    Ok(WindowPlan::from_starts(n_frames, frames_per_window, starts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// BCE target: fake = 1.
    pub fn target(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl core::fmt::Display for Label {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-window scores and the aggregated decision.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoVerdict {
    pub scores: Vec<f64>,
    pub phi: f64,
    pub decision: Label,
}

/// `φ = sigmoid(Σ_b s_b)`; fake iff `Σ_b s_b > 0` (strictly above the 0.5
/// threshold, so an exact tie is real).
pub fn aggregate(scores: &[f64]) -> Result<VideoVerdict> {
    if scores.is_empty() {
        return Err(Error::Empty("window scores"));
    }
    let total: f64 = scores.iter().sum();
    let decision = if total > 0.0 { Label::Fake } else { Label::Real };
    Ok(VideoVerdict {
        scores: scores.to_vec(),
        phi: sigmoid(total),
        decision,
    })
}
