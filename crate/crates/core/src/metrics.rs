//! Evaluation at the fixed 0.5 threshold: per-class rates, accuracy,
//! Mann–Whitney AUC, per-(generator, CRF) breakdowns and the few-shot
//! harness.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{select_training_subset, Crf, DatasetManifest, Generator, ManifestEntry, Split, SubsetSize};
use crate::error::{Error, Result};
use crate::head::{HeadConfig, HeadParams};
use crate::sampler::{aggregate, plan_windows, Label, VideoVerdict};
use crate::source::EmbeddingSource;
use crate::trainer::{fit, TrainConfig};

/// One evaluated video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub video_id: String,
    pub label: Label,
    pub generator: Generator,
    pub crf: Crf,
    pub phi: f64,
    pub decision: Label,
}

impl EvalRecord {
    /// Record with the decision taken at `phi > 0.5`.
    pub fn new(video_id: impl Into<String>, label: Label, generator: Generator, crf: Crf, phi: f64) -> Self {
        EvalRecord {
            video_id: video_id.into(),
            label,
            generator,
            crf,
            phi,
            decision: if phi > 0.5 { Label::Fake } else { Label::Real },
        }
    }

    pub fn from_verdict(entry: &ManifestEntry, verdict: &VideoVerdict) -> Self {
        EvalRecord {
            video_id: entry.video_id.clone(),
            label: entry.label,
            generator: entry.generator.clone(),
            crf: entry.crf,
            phi: verdict.phi,
            decision: verdict.decision,
        }
    }
}

/// Confusion counts with fake as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Counts {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut c = Counts::default();
        for r in records {
            match (r.label, r.decision) {
                (Label::Fake, Label::Fake) => c.tp += 1,
                (Label::Fake, Label::Real) => c.fn_ += 1,
                (Label::Real, Label::Real) => c.tn += 1,
                (Label::Real, Label::Fake) => c.fp += 1,
            }
        }
        c
    }

    pub fn fakes(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn reals(&self) -> usize {
        self.tn + self.fp
    }

    pub fn total(&self) -> usize {
        self.fakes() + self.reals()
    }
}

/// Rates; a class absent from the input leaves its rate undefined (`None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub accuracy: f64,
}

impl Rates {
    pub fn from_counts(c: &Counts) -> Result<Self> {
        if c.total() == 0 {
            return Err(Error::Empty("evaluation records"));
        }
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Ok(Rates {
            tpr: ratio(c.tp, c.fakes()),
            tnr: ratio(c.tn, c.reals()),
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        })
    }
}

pub fn rates(records: &[EvalRecord]) -> Result<Rates> {
    Rates::from_counts(&Counts::from_records(records))
}

/// Probability that a random fake scores above a random real, ties counted
/// one half, from the rank-sum statistic.
pub fn auc(records: &[EvalRecord]) -> Result<f64> {
    let positives = records.iter().filter(|r| r.label == Label::Fake).count();
    let negatives = records.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].phi.total_cmp(&records[b].phi));

    // 2× the rank sum of fakes, with mid-ranks for ties, kept integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && records[order[j + 1]].phi == records[order[i]].phi {
            j += 1;
        }
        // ranks i+1 ..= j+1, mid-rank = (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let fakes_in_group = order[i..=j]
            .iter()
            .filter(|&&k| records[k].label == Label::Fake)
            .count() as u128;
        twice_rank_sum += twice_mid * fakes_in_group;
        i = j + 1;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

impl Metrics {
    pub fn from_records(records: &[EvalRecord]) -> Result<(Self, Counts)> {
        let counts = Counts::from_records(records);
        let r = Rates::from_counts(&counts)?;
        Ok((
            Metrics {
                tpr: r.tpr,
                tnr: r.tnr,
                accuracy: r.accuracy,
                auc: auc(records).ok(),
            },
            counts,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub generator: Generator,
    pub crf: Crf,
    pub metrics: Metrics,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Metrics,
    pub counts: Counts,
    pub cells: Vec<CellReport>,
}

/// Overall metrics plus one cell per `(generator, crf)` present in the
/// records, in sorted key order.
pub fn grouped_report(records: &[EvalRecord]) -> Result<MetricsReport> {
    let (overall, counts) = Metrics::from_records(records)?;
    let mut groups: BTreeMap<(&Generator, Crf), Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.generator, r.crf)).or_default().push(r.clone());
    }
    let cells = groups
        .into_iter()
        .map(|((generator, crf), recs)| {
            let (metrics, counts) = Metrics::from_records(&recs)?;
            Ok(CellReport {
                generator: generator.clone(),
                crf,
                metrics,
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        overall,
        counts,
        cells,
    })
}

/// Windows used to score a video at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPlan {
    pub windows: usize,
    pub frames_per_window: usize,
}

impl Default for EvalPlan {
    fn default() -> Self {
        EvalPlan {
            windows: 8,
            frames_per_window: 8,
        }
    }
}

/// Scores one video over evenly spaced windows and aggregates.
pub fn predict_video<S: EmbeddingSource + ?Sized>(
    entry: &ManifestEntry,
    source: &S,
    params: &HeadParams,
    plan: EvalPlan,
) -> Result<VideoVerdict> {
    let windows = plan_windows(entry.n_frames, plan.windows, plan.frames_per_window)?;
    let scores = source
        .window_embeddings(entry, &windows)?
        .iter()
        .map(|m| params.score(m))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&scores)
}

pub fn evaluate<'a, S, I>(entries: I, source: &S, params: &HeadParams, plan: EvalPlan) -> Result<Vec<EvalRecord>>
where
    S: EmbeddingSource + ?Sized,
    I: IntoIterator<Item = &'a ManifestEntry>,
{
    entries
        .into_iter()
        .map(|e| predict_video(e, source, params, plan).map(|v| EvalRecord::from_verdict(e, &v)))
        .collect()
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        Summary { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotResult {
    /// Real sources per run; `null` means all.
    pub m: Option<usize>,
    pub accuracy: Summary,
    pub auc: Summary,
    pub runs: Vec<SeedReport>,
}

/// Settings shared by every cell of a few-shot sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotConfig {
    pub sizes: Vec<SubsetSize>,
    pub generators: Vec<Generator>,
    pub seeds: Vec<u64>,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub eval: EvalPlan,
}

/// For every `M` and seed: subsample the training split, train, and
/// evaluate the best-validation head on the whole test split.
pub fn fewshot_run<S: EmbeddingSource + ?Sized>(
    manifest: &DatasetManifest,
    source: &S,
    cfg: &FewShotConfig,
) -> Result<Vec<FewShotResult>> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("few-shot sweep needs at least one seed".into()));
    }
    let test: Vec<&ManifestEntry> = manifest.in_split(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::Dataset("test split is empty".into()));
    }
    cfg.sizes
        .iter()
        .map(|&size| {
            let mut runs = Vec::with_capacity(cfg.seeds.len());
            for &seed in &cfg.seeds {
                let view = select_training_subset(manifest, &cfg.generators, size, seed)?;
                let train = TrainConfig { seed, ..cfg.train };
                let outcome = fit(&view, source, cfg.head, &train)?;
                let records = evaluate(test.iter().copied(), source, &outcome.best, cfg.eval)?;
                runs.push(SeedReport {
                    seed,
                    report: grouped_report(&records)?,
                });
            }
            let acc: Vec<f64> = runs.iter().map(|r| r.report.overall.accuracy).collect();
            let aucs: Vec<f64> = runs.iter().filter_map(|r| r.report.overall.auc).collect();
            Ok(FewShotResult {
                m: match size {
                    SubsetSize::Count(n) => Some(n),
                    SubsetSize::All => None,
                },
                accuracy: Summary::of(&acc),
                auc: Summary::of(&aucs),
                runs,
            })
        })
        .collect()
}
