//! Snapshot records of a run, persisted as one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canvas::Canvas;
use crate::geometry::{Point2, Primitive, PrimitiveKind};
use crate::{Error, Result};

use super::DropoutMask;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveRecord {
    pub id: u32,
    pub kind: PrimitiveKind,
    pub control_points: Vec<Point2>,
    pub opacity: f64,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub v: u32,
    pub iter: usize,
    pub loss_sem: Option<f64>,
    pub loss_vis: Option<f64>,
    pub loss_total: f64,
    pub lr: f64,
    pub width: u32,
    pub height: u32,
    pub stroke_width: f64,
    pub mask: Vec<bool>,
    pub primitives: Vec<PrimitiveRecord>,
}

impl TrajectoryRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn capture(
        iter: usize,
        loss_sem: Option<f64>,
        loss_vis: Option<f64>,
        loss_total: f64,
        lr: f64,
        stroke_width: f64,
        mask: &DropoutMask,
        canvas: &Canvas,
    ) -> Self {
        TrajectoryRecord {
            v: SCHEMA_VERSION,
            iter,
            loss_sem,
            loss_vis,
            loss_total,
            lr,
            width: canvas.width(),
            height: canvas.height(),
            stroke_width,
            mask: mask.bits().to_vec(),
            primitives: canvas
                .primitives()
                .iter()
                .map(|p| PrimitiveRecord {
                    id: p.id(),
                    kind: p.kind(),
                    control_points: p.points().to_vec(),
                    opacity: p.opacity(),
                    pruned: p.is_pruned(),
                })
                .collect(),
        }
    }

    /// The recorded primitives, pruned ones included and flagged.
    pub fn to_primitives(&self) -> Result<Vec<Primitive>> {
        self.primitives
            .iter()
            .map(|r| {
                Primitive::with_history(
                    r.id,
                    r.kind,
                    r.control_points.clone(),
                    r.opacity,
                    r.control_points.clone(),
                    r.opacity,
                    r.pruned,
                )
            })
            .collect()
    }

    pub fn to_canvas(&self) -> Result<Canvas> {
        Ok(Canvas::new(self.width, self.height, self.to_primitives()?))
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.v != SCHEMA_VERSION {
            return Err(format!("schema version {} (supported: {SCHEMA_VERSION})", self.v));
        }
        if self.mask.len() != self.primitives.len() {
            return Err(format!(
                "mask has {} entries for {} primitives",
                self.mask.len(),
                self.primitives.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryRecord>,
}

/// Outcome of reading a JSONL log.
#[derive(Debug, Clone)]
pub struct LoadedLog {
    pub log: TrajectoryLog,
    /// True when the final line was cut off mid-write and skipped.
    pub truncated: bool,
}

impl TrajectoryLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    /// Reads a log. A last line lacking its newline that fails to parse is
    /// treated as a crash artifact and dropped; any other bad line is an error.
    pub fn read_jsonl(path: &Path) -> Result<LoadedLog> {
        let input_err = |reason: String| Error::Input {
            path: path.to_path_buf(),
            reason,
            expected: "trajectory JSONL, schema v1",
        };
        let mut reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        let mut truncated = false;
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            lineno += 1;
            let complete = line.ends_with('\n');
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            match serde_json::from_str::<TrajectoryRecord>(text) {
                Ok(rec) => {
                    rec.check().map_err(|e| input_err(format!("line {lineno}: {e}")))?;
                    records.push(rec);
                }
                Err(_) if !complete => truncated = true,
                Err(e) => return Err(input_err(format!("line {lineno}: {e}"))),
            }
        }
        Ok(LoadedLog {
            log: TrajectoryLog { records },
            truncated,
        })
    }
}

/// Receives snapshots as a run produces them.
pub trait SnapshotSink {
    fn record(&mut self, rec: &TrajectoryRecord) -> Result<()>;
}

impl SnapshotSink for TrajectoryLog {
    fn record(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }
}

/// Appends each snapshot as one line and flushes it immediately, so a run
/// that dies leaves every completed snapshot on disk.
pub struct JsonlSink {
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(JsonlSink {
            out: BufWriter::new(File::create(path)?),
        })
    }
}

impl SnapshotSink for JsonlSink {
    fn record(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        let mut line = serde_json::to_string(rec)?;
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.out.flush()?;
        Ok(())
    }
}
