//! Standalone SVG documents and per-kind tracking layers.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use crate::canvas::Canvas;
use crate::geometry::{fmt_num, parse_svg_path, svg_path, Point2, Primitive, PrimitiveKind};
use crate::optimizer::TrajectoryLog;
use crate::{Error, Exec, Result};

/// File names written for every snapshot by [`export_layers`].
pub const LAYER_FILES: [&str; 5] = [
    "composite.svg",
    "circles.svg",
    "lines.svg",
    "semicircles.svg",
    "overlay.svg",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMode {
    Black,
    /// Circles blue, lines red, semicircles green.
    PerKind,
}

fn stroke_color(kind: PrimitiveKind, mode: ColorMode) -> &'static str {
    match (mode, kind) {
        (ColorMode::Black, _) => "black",
        (ColorMode::PerKind, PrimitiveKind::Circle) => "blue",
        (ColorMode::PerKind, PrimitiveKind::Line) => "red",
        (ColorMode::PerKind, PrimitiveKind::SemiCircle) => "green",
    }
}

/// An SVG 1.1 document with one `<path>` per unpruned primitive.
pub fn svg_document<'a>(
    width: u32,
    height: u32,
    stroke_width: f64,
    primitives: impl IntoIterator<Item = &'a Primitive>,
    mode: ColorMode,
) -> String {
    let mut doc = String::new();
    doc.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        doc,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(doc, "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    for p in primitives.into_iter().filter(|p| !p.is_pruned()) {
        let _ = writeln!(
            doc,
            "  <path data-id=\"{}\" data-kind=\"{}\" d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" stroke-opacity=\"{}\" stroke-linecap=\"round\" stroke-linejoin=\"round\"/>",
            p.id(),
            p.kind(),
            svg_path(p),
            stroke_color(p.kind(), mode),
            fmt_num(stroke_width),
            fmt_num(p.opacity()),
        );
    }
    doc.push_str("</svg>\n");
    doc
}

pub fn export_svg(canvas: &Canvas, path: &Path, stroke_width: f64, mode: ColorMode) -> Result<()> {
    let doc = svg_document(
        canvas.width(),
        canvas.height(),
        stroke_width,
        canvas.primitives(),
        mode,
    );
    fs::write(path, doc)?;
    Ok(())
}

fn layer_docs(width: u32, height: u32, stroke_width: f64, prims: &[Primitive]) -> [String; 5] {
    let of = |kind: PrimitiveKind| prims.iter().filter(move |p| p.kind() == kind);
    [
        svg_document(width, height, stroke_width, prims, ColorMode::Black),
        svg_document(width, height, stroke_width, of(PrimitiveKind::Circle), ColorMode::PerKind),
        svg_document(width, height, stroke_width, of(PrimitiveKind::Line), ColorMode::PerKind),
        svg_document(width, height, stroke_width, of(PrimitiveKind::SemiCircle), ColorMode::PerKind),
        svg_document(width, height, stroke_width, prims, ColorMode::PerKind),
    ]
}

/// Writes `iter_{t}/{composite,circles,lines,semicircles,overlay}.svg` for
/// every snapshot in `log`. Returns the written paths.
pub fn export_layers(log: &TrajectoryLog, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if log.records.is_empty() {
        return Err(Error::domain("trajectory log is empty"));
    }
    let rendered = Exec::default().map(&log.records, |rec| -> Result<_> {
        let prims = rec.to_primitives()?;
        Ok((rec.iter, layer_docs(rec.width, rec.height, rec.stroke_width, &prims)))
    });
    let mut written = Vec::new();
    for item in rendered {
        let (iter, docs) = item?;
        let dir = out_dir.join(format!("iter_{iter}"));
        fs::create_dir_all(&dir)?;
        for (name, doc) in LAYER_FILES.iter().zip(docs) {
            let path = dir.join(name);
            fs::write(&path, doc)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// A primitive read back from an SVG document written by [`svg_document`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvgPrimitive {
    pub id: u32,
    pub kind: PrimitiveKind,
    pub points: Vec<Point2>,
    pub opacity: f64,
}

fn attr<'a>(element: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = element.find(&key)? + key.len();
    let len = element[start..].find('"')?;
    Some(&element[start..start + len])
}

/// Parses the primitive paths of a document written by [`svg_document`].
pub fn read_svg_primitives(doc: &str) -> Result<Vec<SvgPrimitive>> {
    let bad = |why: &str| Error::domain(format!("malformed primitive SVG: {why}"));
    let mut out = Vec::new();
    for chunk in doc.split("<path").skip(1) {
        let element = &chunk[..chunk.find("/>").ok_or_else(|| bad("unterminated path"))?];
        let id = attr(element, "data-id")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing data-id"))?;
        let kind = match attr(element, "data-kind") {
            Some("line") => PrimitiveKind::Line,
            Some("circle") => PrimitiveKind::Circle,
            Some("semicircle") => PrimitiveKind::SemiCircle,
            _ => return Err(bad("missing or unknown data-kind")),
        };
        let d = attr(element, "d").ok_or_else(|| bad("missing d"))?;
        let opacity = attr(element, "stroke-opacity")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing stroke-opacity"))?;
        out.push(SvgPrimitive {
            id,
            kind,
            points: parse_svg_path(kind, d)?,
            opacity,
        });
    }
    Ok(out)
}
