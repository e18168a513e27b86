//! Embedding source backed by `.vemb` files on disk.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use vipera_core::backbone::{Backbone, FrameFeatures};
use vipera_core::dataset::ManifestEntry;
use vipera_core::sampler::{aggregate, plan_windows, VideoVerdict, WindowPlan};
use vipera_core::source::EmbeddingSource;
use vipera_core::head::HeadParams;
use vipera_core::metrics::EvalPlan;
use vipera_core::{Error as CoreError, Matrix};

use crate::error::{Result, StoreError};
use crate::store::{read_vemb, EmbeddingFile, EmbeddingMode};

/// Resolves manifest `embedding_path`s against a base directory and turns
/// their records into window embeddings.
///
/// Per-window files serve each planned window with the stored record whose
/// start frame is nearest (lower start on ties). Per-frame files run the
/// positional encoding, Q-Former and projection of `backbone` over the
/// planned frames.
pub struct VembSource {
    base: PathBuf,
    backbone: Option<Backbone>,
    cache: Mutex<HashMap<PathBuf, Arc<EmbeddingFile>>>,
}

impl VembSource {
    pub fn new(base: impl Into<PathBuf>, backbone: Option<Backbone>) -> Self {
        VembSource {
            base: base.into(),
            backbone,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.base.join(&entry.embedding_path)
    }

    pub fn load(&self, path: &Path) -> Result<Arc<EmbeddingFile>> {
        if let Some(f) = self.cache.lock().expect("cache lock").get(path) {
            return Ok(f.clone());
        }
        let file = Arc::new(read_vemb(path)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(path.to_path_buf(), file.clone());
        Ok(file)
    }
}

/// Stored record whose start is closest to `start`.
fn nearest_record(file: &EmbeddingFile, start: usize) -> Option<&Matrix> {
    file.records
        .iter()
        .min_by_key(|r| ((r.start as i64 - start as i64).unsigned_abs(), r.start))
        .map(|r| &r.matrix)
}

/// Window embeddings for `plan` from one file.
pub fn file_windows(file: &EmbeddingFile, plan: &WindowPlan, backbone: Option<&Backbone>) -> Result<Vec<Matrix>> {
    if file.records.is_empty() {
        return Err(StoreError::Header("embedding file has no records".into()));
    }
    match file.mode {
        EmbeddingMode::Windows => Ok(plan
            .starts
            .iter()
            .map(|&s| nearest_record(file, s).expect("non-empty").clone())
            .collect()),
        EmbeddingMode::FrameFeatures => {
            let backbone = backbone.ok_or_else(|| {
                StoreError::Header("per-frame embeddings need a backbone configuration".into())
            })?;
            let by_frame: HashMap<usize, &Matrix> = file
                .records
                .iter()
                .map(|r| (r.start as usize, &r.matrix))
                .collect();
            plan.frame_indices
                .iter()
                .map(|indices| {
                    let frames = indices
                        .iter()
                        .map(|i| {
                            by_frame.get(i).map(|m| (*m).clone()).ok_or_else(|| {
                                StoreError::Header(format!("frame {i} missing from per-frame file"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(backbone.embed_features(&FrameFeatures::new(frames)?)?)
                })
                .collect()
        }
    }
}

/// Verdict for a whole file: every stored window for per-window files,
/// evenly spaced windows over the stored frames for per-frame files.
pub fn score_file(
    file: &EmbeddingFile,
    params: &HeadParams,
    backbone: Option<&Backbone>,
    plan: EvalPlan,
) -> Result<VideoVerdict> {
    let embeddings = match file.mode {
        EmbeddingMode::Windows => file.records.iter().map(|r| r.matrix.clone()).collect(),
        EmbeddingMode::FrameFeatures => {
            let windows = plan_windows(file.records.len(), plan.windows, plan.frames_per_window)?;
            let starts: Vec<u32> = file.records.iter().map(|r| r.start).collect();
            // plan over record positions, then map to stored frame numbers
            let plan = WindowPlan {
                frames_per_window: windows.frames_per_window,
                starts: windows.starts.iter().map(|&s| starts[s] as usize).collect(),
                frame_indices: windows
                    .frame_indices
                    .iter()
                    .map(|w| w.iter().map(|&i| starts[i] as usize).collect())
                    .collect(),
            };
            file_windows(file, &plan, backbone)?
        }
    };
    let scores = embeddings
        .iter()
        .map(|m| params.score(m))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(aggregate(&scores)?)
}

impl EmbeddingSource for VembSource {
    fn window_embeddings(&self, entry: &ManifestEntry, plan: &WindowPlan) -> vipera_core::Result<Vec<Matrix>> {
        let to_core = |e: StoreError| match e {
            StoreError::Core(c) => c,
            other => CoreError::Source(format!("{}: {other}", entry.video_id)),
        };
        let file = self.load(&self.path_of(entry)).map_err(to_core)?;
        file_windows(&file, plan, self.backbone.as_ref()).map_err(to_core)
    }
}
