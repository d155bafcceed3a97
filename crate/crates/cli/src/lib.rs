//! Argument parsing, config layering and batch dispatch for `primdraw`.
//!
//! Settings resolve as command-line flags over a TOML config file over
//! built-in defaults. The config file uses the flag names with underscores:
//!
//! ```toml
//! prompt = ["A standing motorcycle"]
//! focus = "motorcycle"
//! seed = 7
//! num_iter = 1000
//! backend = "fake"
//! attention = "file:maps/motorcycle.png"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use primdraw::pipeline::{self, AttentionSource, EmbeddingSource, RunConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "primdraw", version, about = "Text-to-sketch synthesis with line, circle and semicircle primitives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    /// Optimize a sketch for one or more prompts.
    Synthesize(Box<Settings>),
    /// Re-render the layer and final files of a recorded trajectory.
    Replay {
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Every knob of a run. `None` means "not given at this layer".
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Text prompt; repeat for a batch.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt: Vec<String>,
    /// Word of the prompt whose attention seeds the canvas.
    #[arg(long)]
    pub focus: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_iter: Option<usize>,
    /// Primitive dropout probability.
    #[arg(long)]
    pub pld: Option<f64>,
    #[arg(long)]
    pub alpha_init: Option<f64>,
    /// Opacity at or below which primitives are pruned (0 disables).
    #[arg(long)]
    pub opacity_k: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<u32>,
    #[arg(long)]
    pub k_landmarks: Option<usize>,
    #[arg(long)]
    pub per_type_count: Option<usize>,
    #[arg(long)]
    pub lambda_sem: Option<f64>,
    #[arg(long)]
    pub lambda_vis: Option<f64>,
    /// Augmented views per evaluation.
    #[arg(long)]
    pub aug_m: Option<usize>,
    /// `live` or `fake`.
    #[arg(long)]
    pub backend: Option<String>,
    /// `live`, `uniform` or `file:<path>`.
    #[arg(long)]
    pub attention: Option<String>,
    #[arg(long)]
    pub ref_image: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker processes for a multi-prompt batch.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr; $($f:ident),*) => {
        Settings {
            prompt: if $hi.prompt.is_empty() { $lo.prompt } else { $hi.prompt },
            config: None,
            $($f: $hi.$f.or($lo.$f),)*
        }
    };
}

impl Settings {
    /// Fields of `self` win over those of `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        layer!(self, lower; focus, seed, num_iter, pld, alpha_init, opacity_k, patch_size,
            k_landmarks, per_type_count, lambda_sem, lambda_vis, aug_m, backend, attention,
            ref_image, out, jobs)
    }

    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Flags layered over the config file named by `--config`, if any.
    pub fn layered(self) -> Result<Settings, CliError> {
        match &self.config {
            Some(path) => {
                let file = Settings::load(path)?;
                Ok(self.over(file))
            }
            None => Ok(self),
        }
    }

    /// A run configuration for `prompt`, filling gaps with defaults.
    pub fn run_config(&self, prompt: &str) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::new(prompt, self.out.clone().unwrap_or_else(|| "out".into()));
        cfg.focus = self.focus.clone();
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        set(&mut cfg.optim.num_iter, self.num_iter);
        set(&mut cfg.optim.pld_prob, self.pld);
        set(&mut cfg.optim.opacity_threshold, self.opacity_k);
        set(&mut cfg.init.alpha_init, self.alpha_init);
        set(&mut cfg.init.patch_size, self.patch_size);
        set(&mut cfg.init.k, self.k_landmarks);
        set(&mut cfg.init.per_type_count, self.per_type_count);
        set(&mut cfg.weights.lambda_sem, self.lambda_sem);
        set(&mut cfg.weights.lambda_vis, self.lambda_vis);
        set(&mut cfg.augment.views, self.aug_m);
        cfg.backend = match self.backend.as_deref().unwrap_or("live") {
            "live" => EmbeddingSource::Live,
            "fake" => EmbeddingSource::Fake,
            other => return Err(CliError::Config(format!("unknown backend {other:?} (expected live or fake)"))),
        };
        cfg.attention = parse_attention(self.attention.as_deref().unwrap_or("live"))?;
        cfg.ref_image = self.ref_image.clone();
        cfg.validate().map_err(CliError::from_run)?;
        Ok(cfg)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn parse_attention(s: &str) -> Result<AttentionSource, CliError> {
    match s {
        "live" => Ok(AttentionSource::Live),
        "uniform" => Ok(AttentionSource::Uniform),
        _ => match s.strip_prefix("file:") {
            Some(path) if !path.is_empty() => Ok(AttentionSource::File(path.into())),
            _ => Err(CliError::Config(format!(
                "unknown attention source {s:?} (expected live, uniform or file:<path>)"
            ))),
        },
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or inputs.
    Config(String),
    /// A provider or the optimization failed.
    Runtime(String),
}

impl CliError {
    pub fn from_run(e: primdraw::Error) -> Self {
        use primdraw::Error as E;
        match e {
            E::Domain(_) | E::Input { .. } | E::Json(_) => CliError::Config(e.to_string()),
            E::Backend { .. } => CliError::Runtime(format!(
                "{e}; use `--backend fake --attention uniform` for an offline run"
            )),
            _ => CliError::Runtime(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Action::Synthesize(settings) => synthesize(settings.layered()?),
        Action::Replay { trajectory, out } => {
            let s = pipeline::replay(&trajectory, &out).map_err(CliError::from_run)?;
            if s.truncated {
                eprintln!(
                    "warning: {} ends in an incomplete record; rendered {} complete snapshots",
                    trajectory.display(),
                    s.snapshots
                );
            }
            Ok(())
        }
    }
}

fn synthesize(settings: Settings) -> Result<(), CliError> {
    match settings.prompt.len() {
        0 => Err(CliError::Config("--prompt is required".into())),
        1 => {
            let cfg = settings.run_config(&settings.prompt[0])?;
            let report = pipeline::synthesize(&cfg).map_err(CliError::from_run)?;
            println!(
                "{}: cs {:.4} clip-t {:.4} psnr {} ({:.1}s)",
                cfg.out_dir.display(),
                report.cs,
                report.clip_t,
                report.psnr,
                report.wallclock_seconds
            );
            Ok(())
        }
        _ => batch(settings),
    }
}

/// Per-prompt settings of a batch: seed offset by the prompt index, output
/// under `out/<index>_<slug>`.
pub fn batch_items(settings: &Settings) -> Vec<Settings> {
    let root = settings.out.clone().unwrap_or_else(|| "out".into());
    settings
        .prompt
        .iter()
        .enumerate()
        .map(|(i, prompt)| Settings {
            prompt: vec![prompt.clone()],
            seed: Some(settings.seed.unwrap_or(0).wrapping_add(i as u64)),
            out: Some(root.join(format!("{i:03}_{}", slug(prompt)))),
            jobs: None,
            config: None,
            ..settings.clone()
        })
        .collect()
}

fn slug(prompt: &str) -> String {
    let s: String = prompt
        .to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("-");
    s.chars().take(48).collect()
}

fn batch(settings: Settings) -> Result<(), CliError> {
    let items = batch_items(&settings);
    // Reject bad settings before spawning anything.
    for item in &items {
        item.run_config(&item.prompt[0])?;
    }
    let exe = std::env::current_exe().map_err(|e| CliError::Runtime(e.to_string()))?;
    let jobs = settings.jobs.unwrap_or(1).clamp(1, items.len());
    let next = AtomicUsize::new(0);
    let worst = Mutex::new(0u8);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let code = run_child(&exe, item).unwrap_or_else(|e| {
                    eprintln!("primdraw: prompt {i}: {e}");
                    e.exit_code()
                });
                let mut w = worst.lock().unwrap();
                *w = (*w).max(code);
            });
        }
    });
    match worst.into_inner().unwrap() {
        0 => Ok(()),
        2 => Err(CliError::Config("one or more prompts had invalid settings".into())),
        _ => Err(CliError::Runtime("one or more prompts failed".into())),
    }
}

fn run_child(exe: &Path, item: &Settings) -> Result<u8, CliError> {
    let text = toml::to_string(item).map_err(|e| CliError::Runtime(e.to_string()))?;
    let file = tempfile::Builder::new()
        .suffix(".toml")
        .tempfile()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(file.path(), text).map_err(|e| CliError::Runtime(e.to_string()))?;
    let status = Command::new(exe)
        .arg("synthesize")
        .arg("--config")
        .arg(file.path())
        .status()
        .map_err(|e| CliError::Runtime(format!("cannot start worker: {e}")))?;
    Ok(status.code().map_or(3, |c| c.clamp(0, 255) as u8))
}
