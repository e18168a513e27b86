//! `vipera` command-line interface.
//!
//! Exit codes: 0 success, 1 computation failure, 2 usage or configuration
//! error. Failures are reported on stderr as one JSON object.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use vipera_core::backbone::{Backbone, PixelFrame, FRAME_SIZE};
use vipera_core::dataset::{select_training_subset, split_manifest, DatasetManifest, Split, SubsetSize};
use vipera_core::head::HeadConfig;
use vipera_core::metrics::{evaluate, fewshot_run, grouped_report, FewShotConfig, FewShotResult, MetricsReport};
use vipera_core::sampler::plan_windows;
use vipera_core::source::{EmbeddingSource, SyntheticClusters};
use vipera_core::trainer::fit;

use crate::config::{ConfigError, RunConfig, SourceKind};
use crate::report::{render_fewshot, render_report};
use crate::source::{score_file, VembSource};
use crate::store::{
    format_log, read_checkpoint, read_manifest, read_vemb, write_checkpoint, write_manifest, write_vemb,
    EmbeddingFile, EmbeddingMode, EmbeddingRecord, ModelCheckpoint,
};
use crate::StoreError;

#[derive(Debug, Parser)]
#[command(name = "vipera", version, about = "Detect diffusion-generated videos from frozen video embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra key=value overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a head on the train split and write checkpoints and a log.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Best-validation checkpoint; `<out>.last.vphd` and `<out>.log` are written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Real training sources to keep (number or `all`).
        #[arg(long = "M", default_value = "all")]
        m: SubsetSize,
    },
    /// Score one embedding file and print `phi decision`.
    Infer {
        vemb: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint on one manifest split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "split-name", default_value = "test")]
        split_name: Split,
        /// JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign train/val/test at the source-video level.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate over training-set sizes and seeds.
    Fewshot {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated sizes, e.g. `10,100,all`.
        #[arg(long = "M", value_delimiter = ',')]
        m: Vec<SubsetSize>,
        /// First seed; the sweep uses as many consecutive seeds as `fewshot.seeds` lists.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed a directory of PNG frames with the toy backbone.
    MockExtract {
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Backbone seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Store per-frame encoder tokens instead of projected windows.
        #[arg(long)]
        per_frame: bool,
    },
    /// Print a JSON report as a table.
    Report { input: PathBuf },
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            kind: "failure",
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::Core(vipera_core::Error::Config(_)) => CliError::usage(e.to_string()),
            StoreError::Json { .. } => CliError::usage(e.to_string()),
            _ => CliError::failure(e.to_string()),
        }
    }
}

impl From<vipera_core::Error> for CliError {
    fn from(e: vipera_core::Error) -> Self {
        StoreError::Core(e).into()
    }
}

type CliResult<T> = Result<T, CliError>;

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() || (what == "frame directory" && path.is_dir()) {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} not found: {}", path.display())))
    }
}

fn load_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path, "config file")?;
            let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("override '{kv}' is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(path: &Path) -> CliResult<DatasetManifest> {
    require_file(path, "manifest")?;
    Ok(read_manifest(path)?)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Embedding source for a manifest as selected by `source` in the config.
pub fn build_source(cfg: &RunConfig, manifest_path: &Path) -> CliResult<Box<dyn EmbeddingSource>> {
    Ok(match cfg.source {
        SourceKind::Vemb => Box::new(VembSource::new(
            manifest_dir(manifest_path),
            Some(Backbone::new(cfg.backbone)?),
        )),
        SourceKind::Synthetic => Box::new(SyntheticClusters::new(
            cfg.backbone.visual_tokens,
            cfg.backbone.embed_width,
            cfg.synthetic.amplitude,
            cfg.synthetic.noise,
            cfg.synthetic.seed,
        )?),
    })
}

/// Head configuration with input dimensions read from the first entry's data.
fn head_for_data(
    cfg: &RunConfig,
    source: &dyn EmbeddingSource,
    entry: &vipera_core::dataset::ManifestEntry,
) -> CliResult<HeadConfig> {
    let plan = plan_windows(entry.n_frames, 1, cfg.train.frames_per_window)?;
    let sample = source.window_embeddings(entry, &plan)?;
    let (visual_tokens, embed_width) = sample[0].shape();
    Ok(HeadConfig {
        visual_tokens,
        embed_width,
        ..cfg.head
    })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| StoreError::io(path, e).into())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

fn cmd_train(manifest_path: &Path, args: &ConfigArgs, seed: Option<u64>, out: &Path, m: SubsetSize) -> CliResult<()> {
    let mut cfg = load_config(args)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let manifest = load_manifest(manifest_path)?;
    let view = select_training_subset(&manifest, &cfg.generators, m, cfg.train.seed)?;
    let source = build_source(&cfg, manifest_path)?;
    let head = head_for_data(&cfg, source.as_ref(), &view.train[0])?;
    info!(
        "training on {} videos, validating on {}, head {}x{} -> {}x{}",
        view.train.len(),
        view.val.len(),
        head.visual_tokens,
        head.embed_width,
        head.tokens,
        head.width
    );
    let outcome = fit(&view, source.as_ref(), head, &cfg.train)?;
    write_checkpoint(out, &ModelCheckpoint::new(outcome.best.clone()))?;
    write_checkpoint(
        sibling(out, ".last.vphd"),
        &ModelCheckpoint {
            params: outcome.last.clone(),
            adam: Some(outcome.adam.clone()),
        },
    )?;
    write_text(&sibling(out, ".log"), &format_log(&outcome.log))?;
    let best_val = outcome
        .best_epoch
        .map(|e| outcome.log[e - 1].val_loss)
        .unwrap_or(f64::NAN);
    println!(
        "epochs={} best_epoch={} best_val_loss={best_val:.6} checkpoint={}",
        outcome.log.len(),
        outcome.best_epoch.map_or_else(|| "-".into(), |e| e.to_string()),
        out.display()
    );
    Ok(())
}

fn cmd_infer(vemb: &Path, model: &Path, args: &ConfigArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    require_file(model, "checkpoint")?;
    require_file(vemb, "embedding file")?;
    let ckpt = read_checkpoint(model)?;
    let file = read_vemb(vemb)?;
    let backbone = match file.mode {
        EmbeddingMode::FrameFeatures => Some(Backbone::new(cfg.backbone)?),
        EmbeddingMode::Windows => None,
    };
    let verdict = score_file(&file, &ckpt.params, backbone.as_ref(), cfg.eval)?;
    println!("{:.6} {}", verdict.phi, verdict.decision);
    Ok(())
}

fn cmd_eval(manifest_path: &Path, model: &Path, args: &ConfigArgs, split: Split, out: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(args)?;
    let manifest = load_manifest(manifest_path)?;
    require_file(model, "checkpoint")?;
    let ckpt = read_checkpoint(model)?;
    let source = build_source(&cfg, manifest_path)?;
    let entries: Vec<_> = manifest.in_split(split).collect();
    if entries.is_empty() {
        return Err(CliError::failure(format!("split '{split}' has no entries")));
    }
    let records = evaluate(entries.iter().copied(), source.as_ref(), &ckpt.params, cfg.eval)?;
    let report = grouped_report(&records)?;
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    print!("{}", render_report(&report));
    Ok(())
}

fn cmd_split(manifest_path: &Path, seed: u64, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(manifest_path)?;
    let split = split_manifest(&manifest, seed)?;
    write_manifest(out, &split)?;
    for s in [Split::Train, Split::Val, Split::Test] {
        println!("{s}: {}", split.in_split(s).count());
    }
    Ok(())
}

fn cmd_fewshot(
    manifest_path: &Path,
    args: &ConfigArgs,
    sizes: &[SubsetSize],
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<()> {
    let mut cfg = load_config(args)?;
    if !sizes.is_empty() {
        cfg.fewshot_sizes = sizes.to_vec();
    }
    if let Some(first) = seed {
        cfg.fewshot_seeds = (first..first + cfg.fewshot_seeds.len() as u64).collect();
    }
    let manifest = load_manifest(manifest_path)?;
    let source = build_source(&cfg, manifest_path)?;
    let probe = manifest
        .in_split(Split::Train)
        .next()
        .ok_or_else(|| CliError::failure("train split is empty"))?;
    let head = head_for_data(&cfg, source.as_ref(), probe)?;
    let sweep = FewShotConfig {
        sizes: cfg.fewshot_sizes.clone(),
        generators: cfg.generators.clone(),
        seeds: cfg.fewshot_seeds.clone(),
        head,
        train: cfg.train,
        eval: cfg.eval,
    };
    let results = fewshot_run(&manifest, source.as_ref(), &sweep)?;
    if let Some(out) = out {
        write_json(out, &results)?;
    }
    print!("{}", render_fewshot(&results));
    Ok(())
}

fn load_png(path: &Path) -> CliResult<PixelFrame> {
    let img = image::open(path)
        .map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let size = FRAME_SIZE as u32;
    let img = if img.dimensions() == (size, size) {
        img
    } else {
        image::imageops::resize(&img, size, size, image::imageops::FilterType::Triangle)
    };
    Ok(PixelFrame::new(FRAME_SIZE, FRAME_SIZE, img.into_raw())?)
}

/// PNG files of a directory in lexicographic order.
pub fn list_frames(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| StoreError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| x.eq_ignore_ascii_case("png"))
        })
        .collect();
    frames.sort();
    Ok(frames)
}

fn cmd_mock_extract(dir: &Path, out: &Path, args: &ConfigArgs, seed: Option<u64>, per_frame: bool) -> CliResult<()> {
    let mut cfg = load_config(args)?;
    if let Some(s) = seed {
        cfg.backbone.seed = s;
    }
    require_file(dir, "frame directory")?;
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(CliError::failure(format!("no PNG frames in {}", dir.display())));
    }
    let frames = paths.iter().map(|p| load_png(p)).collect::<CliResult<Vec<_>>>()?;
    let backbone = Backbone::new(cfg.backbone)?;
    let bc = backbone.config();
    let file = if per_frame {
        let records = frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Ok(EmbeddingRecord {
                    start: i as u32,
                    matrix: backbone.encode_frame(f)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        EmbeddingFile::new(EmbeddingMode::FrameFeatures, bc.tokens_per_frame, bc.frame_width, 1, records)?
    } else {
        let plan = plan_windows(frames.len(), cfg.eval.windows, cfg.eval.frames_per_window)?;
        let records = plan
            .starts
            .iter()
            .zip(&plan.frame_indices)
            .map(|(&start, idx)| {
                let batch: Vec<PixelFrame> = idx.iter().map(|&i| frames[i].clone()).collect();
                Ok(EmbeddingRecord {
                    start: start as u32,
                    matrix: backbone.embed_batch(&batch)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        EmbeddingFile::new(
            EmbeddingMode::Windows,
            bc.visual_tokens,
            bc.embed_width,
            cfg.eval.frames_per_window,
            records,
        )?
    };
    write_vemb(out, &file)?;
    println!(
        "frames={} records={} out={}",
        frames.len(),
        file.records.len(),
        out.display()
    );
    Ok(())
}

fn cmd_report(input: &Path) -> CliResult<()> {
    require_file(input, "report")?;
    let text = fs::read_to_string(input).map_err(|e| StoreError::io(input, e))?;
    if let Ok(report) = serde_json::from_str::<MetricsReport>(&text) {
        print!("{}", render_report(&report));
    } else if let Ok(results) = serde_json::from_str::<Vec<FewShotResult>>(&text) {
        print!("{}", render_fewshot(&results));
    } else {
        return Err(CliError::usage(format!(
            "{} is neither a metrics report nor a few-shot report",
            input.display()
        )));
    }
    Ok(())
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train {
            manifest,
            config,
            seed,
            out,
            m,
        } => cmd_train(&manifest, &config, seed, &out, m),
        Command::Infer { vemb, model, config } => cmd_infer(&vemb, &model, &config),
        Command::Eval {
            manifest,
            model,
            config,
            split_name,
            out,
        } => cmd_eval(&manifest, &model, &config, split_name, out.as_deref()),
        Command::Split { manifest, seed, out } => cmd_split(&manifest, seed, &out),
        Command::Fewshot {
            manifest,
            config,
            m,
            seed,
            out,
        } => cmd_fewshot(&manifest, &config, &m, seed, out.as_deref()),
        Command::MockExtract {
            frames,
            out,
            config,
            seed,
            per_frame,
        } => cmd_mock_extract(&frames, &out, &config, seed, per_frame),
        Command::Report { input } => cmd_report(&input),
    }
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": { "kind": e.kind, "message": e.message } });
            eprintln!("{body}");
            ExitCode::from(e.code)
        }
    }
}
