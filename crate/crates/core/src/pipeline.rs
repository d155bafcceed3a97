//! End-to-end synthesis from a prompt to an output directory, and replay of
//! a recorded trajectory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{aggregate, sample_landmarks, AttentionProvider, FileAttention, UniformAttention};
use crate::canvas::{init_canvas, Canvas, InitConfig};
use crate::metrics::{MetricsReport, DEFAULT_CLIP_T_TEMPLATE};
use crate::optimizer::{run, JsonlSink, OptimConfig, TrajectoryLog, TrajectoryRecord};
use crate::render::{export_layers, export_svg, rasterize, ColorMode, SoftRasterizer};
use crate::scoring::{AugmentConfig, EmbeddingBackend, FakeBackend, LossWeights, SketchObjective};
use crate::{Error, Result};

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const FINAL_SVG: &str = "final.svg";
pub const FINAL_PNG: &str = "final.png";
pub const LAYERS_DIR: &str = "layers";

/// Cache directory for model weights, read by live providers.
pub const CACHE_ENV: &str = "PRIMDRAW_CACHE";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSource {
    /// Deterministic random-projection encoder, no weights needed.
    Fake,
    /// Pretrained image-text encoder.
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttentionSource {
    Uniform,
    /// An ATTN or grayscale PNG map.
    File(PathBuf),
    /// Cross-attention of a text-to-image diffusion model.
    Live,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prompt: String,
    /// Word whose attention seeds the canvas; defaults to the last word.
    pub focus: Option<String>,
    pub seed: u64,
    pub canvas_size: u32,
    pub init: InitConfig,
    pub augment: AugmentConfig,
    pub weights: LossWeights,
    pub optim: OptimConfig,
    pub backend: EmbeddingSource,
    pub attention: AttentionSource,
    /// Reference image for the visual loss when attention is not live.
    pub ref_image: Option<PathBuf>,
    pub clip_t_template: String,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(prompt: impl Into<String>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            prompt: prompt.into(),
            focus: None,
            seed: 0,
            canvas_size: 224,
            init: InitConfig::default(),
            augment: AugmentConfig::default(),
            weights: LossWeights::default(),
            optim: OptimConfig::default(),
            backend: EmbeddingSource::Fake,
            attention: AttentionSource::Uniform,
            ref_image: None,
            clip_t_template: DEFAULT_CLIP_T_TEMPLATE.to_string(),
            out_dir: out_dir.into(),
        }
    }

    /// The focus word, explicit or defaulted.
    pub fn focus_token(&self) -> Result<String> {
        match &self.focus {
            Some(f) => {
                let wanted = f.to_lowercase();
                if words(&self.prompt).any(|w| w.to_lowercase() == wanted) {
                    Ok(f.clone())
                } else {
                    Err(Error::domain(format!(
                        "focus token {f:?} does not appear in prompt {:?}",
                        self.prompt
                    )))
                }
            }
            None => default_focus(&self.prompt)
                .map(str::to_string)
                .ok_or_else(|| Error::domain(format!("prompt {:?} has no word to focus on", self.prompt))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.trim().is_empty() {
            return Err(Error::domain("prompt is empty"));
        }
        self.focus_token()?;
        self.init.validate(self.canvas_size, self.canvas_size)?;
        self.augment.validate()?;
        self.weights.validate()?;
        self.optim.validate()
    }
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty())
}

/// Last alphabetic token of the prompt.
pub fn default_focus(prompt: &str) -> Option<&str> {
    words(prompt).last()
}

fn live_unavailable(what: &str) -> Error {
    let cache = std::env::var(CACHE_ENV).unwrap_or_else(|_| "<unset>".into());
    Error::Backend {
        backend: format!("live {what}"),
        reason: format!("pretrained weights are not bundled with this build ({CACHE_ENV}={cache})"),
    }
}

fn attention_provider(cfg: &RunConfig) -> Result<Box<dyn AttentionProvider>> {
    let size = cfg.canvas_size as usize;
    Ok(match &cfg.attention {
        AttentionSource::Uniform => Box::new(UniformAttention {
            width: size,
            height: size,
            reference: cfg.ref_image.clone(),
        }),
        AttentionSource::File(path) => Box::new(FileAttention {
            map: path.clone(),
            reference: cfg.ref_image.clone(),
            width: size,
            height: size,
        }),
        AttentionSource::Live => return Err(live_unavailable("attention provider")),
    })
}

fn embedding_backend(cfg: &RunConfig) -> Result<Box<dyn EmbeddingBackend>> {
    match cfg.backend {
        EmbeddingSource::Fake => Ok(Box::new(FakeBackend::new(0))),
        EmbeddingSource::Live => Err(live_unavailable("embedding backend")),
    }
}

fn landmark_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Builds the initial canvas and the reference image for `cfg`.
pub fn initial_canvas(cfg: &RunConfig) -> Result<(Canvas, crate::Raster)> {
    let focus = cfg.focus_token()?;
    let provider = attention_provider(cfg)?;
    let size = cfg.canvas_size as usize;
    let attended = provider.attend(&cfg.prompt, &focus, cfg.seed)?;
    let map = aggregate(&attended.raw_maps, size, size)?;
    let landmarks = sample_landmarks(&map, cfg.init.k, &mut landmark_rng(cfg.seed))?;
    let canvas = init_canvas(&cfg.init, &landmarks, cfg.canvas_size, cfg.canvas_size, cfg.seed)?;
    Ok((canvas, attended.reference))
}

/// Writes the five layer SVGs of every snapshot plus `final.svg` and
/// `final.png` for the last one.
pub fn write_snapshot_outputs(log: &TrajectoryLog, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = export_layers(log, &out_dir.join(LAYERS_DIR))?;
    let last: &TrajectoryRecord = log.records.last().expect("export_layers rejects empty logs");
    let canvas = last.to_canvas()?;
    let svg = out_dir.join(FINAL_SVG);
    export_svg(&canvas, &svg, last.stroke_width, ColorMode::Black)?;
    let png = out_dir.join(FINAL_PNG);
    rasterize(&canvas, None, last.stroke_width, &SoftRasterizer::default())?.save_png(&png)?;
    written.extend([svg, png]);
    Ok(written)
}

/// Runs the full pipeline and writes the output tree. Snapshots reach
/// `trajectory.jsonl` as they are taken, so a failed run leaves them behind.
pub fn synthesize(cfg: &RunConfig) -> Result<MetricsReport> {
    let started = Instant::now();
    cfg.validate()?;
    let backend = embedding_backend(cfg)?;
    let (canvas, reference) = initial_canvas(cfg)?;

    fs::create_dir_all(&cfg.out_dir)?;
    let mut sink = JsonlSink::create(&cfg.out_dir.join(TRAJECTORY_FILE))?;
    let mut objective = SketchObjective::new(
        backend.as_ref(),
        &cfg.prompt,
        &reference,
        cfg.weights,
        cfg.augment,
    )?;
    let optim = OptimConfig {
        seed: cfg.seed,
        ..cfg.optim.clone()
    };
    let rasterizer = SoftRasterizer::default();
    let out = run(canvas, &mut objective, &rasterizer, &optim, Some(&mut sink)).map_err(|f| f.error)?;

    write_snapshot_outputs(&out.log, &cfg.out_dir)?;
    let sketch = rasterize(&out.canvas, None, optim.stroke_width, &rasterizer)?;
    let mut report = MetricsReport::compute(&sketch, &reference, &cfg.prompt, &cfg.clip_t_template, backend.as_ref())?;
    report.seed = cfg.seed;
    report.iter = optim.num_iter;
    report.wallclock_seconds = started.elapsed().as_secs_f64();
    fs::write(
        cfg.out_dir.join(METRICS_FILE),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplaySummary {
    pub snapshots: usize,
    /// The log ended in a partially written line, which was skipped.
    pub truncated: bool,
}

/// Regenerates layer and final outputs from a trajectory log alone.
pub fn replay(trajectory: &Path, out_dir: &Path) -> Result<ReplaySummary> {
    let loaded = TrajectoryLog::read_jsonl(trajectory)?;
    if loaded.log.records.is_empty() {
        return Err(Error::Input {
            path: trajectory.to_path_buf(),
            reason: "no complete snapshot".into(),
            expected: "trajectory JSONL, schema v1",
        });
    }
    fs::create_dir_all(out_dir)?;
    write_snapshot_outputs(&loaded.log, out_dir)?;
    Ok(ReplaySummary {
        snapshots: loaded.log.records.len(),
        truncated: loaded.truncated,
    })
}
