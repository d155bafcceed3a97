//! SVG path strings for primitives, and the inverse parse back to on-curve
//! control points.
//!
//! Undeformed circles and semicircles use the two-arc and one-arc templates.
//! Once the optimizer moves points off the exact shape the path becomes a
//! cubic chain through the on-curve points (see [`super::cubic_segments`]).

use std::fmt::Write;

use svgtypes::{PathParser, PathSegment};

use super::{circle_points, cubic_segments, Point2, Primitive, PrimitiveKind};
use crate::{Error, Result};

const EXACT_EPS: f64 = 1e-9;

/// Shortest round-trip decimal form; integral values print without a point.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn pt(p: Point2) -> String {
    format!("{},{}", fmt_num(p.x), fmt_num(p.y))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXACT_EPS
}

fn close_pt(a: Point2, b: Point2) -> bool {
    close(a.x, b.x) && close(a.y, b.y)
}

/// Centre and radius when the N, E, S, W points still form an exact,
/// axis-aligned circle.
fn exact_circle(points: &[Point2]) -> Option<(Point2, f64)> {
    let (n, e, w) = (points[0], points[1], points[3]);
    let center = Point2::new(n.x, e.y);
    let r = e.x - center.x;
    if r <= 0.0 || !close(w.y, e.y) {
        return None;
    }
    let expect = circle_points(center, r);
    points
        .iter()
        .zip(&expect)
        .all(|(a, b)| close_pt(*a, *b))
        .then_some((center, r))
}

/// `(left endpoint, radius, upper)` for an exact axis-aligned semicircle.
fn exact_semicircle(points: &[Point2]) -> Option<(Point2, f64, bool)> {
    let (a, apex, b) = (points[0], points[1], points[2]);
    if !close(a.y, b.y) || b.x <= a.x {
        return None;
    }
    let r = (b.x - a.x) / 2.0;
    let cx = (a.x + b.x) / 2.0;
    if !close(apex.x, cx) {
        return None;
    }
    if close(apex.y, a.y - r) {
        Some((a, r, true))
    } else if close(apex.y, a.y + r) {
        Some((a, r, false))
    } else {
        None
    }
}

fn cubic_chain(kind: PrimitiveKind, points: &[Point2], closed: bool) -> String {
    let segs = cubic_segments(kind, points);
    let mut d = format!("M {}", pt(segs[0][0]));
    for s in &segs {
        let _ = write!(d, " C {} {} {}", pt(s[1]), pt(s[2]), pt(s[3]));
    }
    if closed {
        d.push_str(" Z");
    }
    d
}

/// SVG path data for a primitive.
pub fn svg_path(prim: &Primitive) -> String {
    let p = prim.points();
    match prim.kind() {
        PrimitiveKind::Line => format!("M {} L {}", pt(p[0]), pt(p[1])),
        PrimitiveKind::Circle => match exact_circle(p) {
            Some((_, r)) => {
                let (r_s, d) = (fmt_num(r), fmt_num(2.0 * r));
                format!(
                    "M {} a {r_s},{r_s} 0 1,1 {d},0 a {r_s},{r_s} 0 1,1 {},0",
                    pt(p[3]),
                    fmt_num(-2.0 * r)
                )
            }
            None => cubic_chain(PrimitiveKind::Circle, p, true),
        },
        PrimitiveKind::SemiCircle => match exact_semicircle(p) {
            Some((start, r, upper)) => {
                let r_s = fmt_num(r);
                let sweep = if upper { 1 } else { 0 };
                format!(
                    "M {} a {r_s},{r_s} 0 1,{sweep} {},0",
                    pt(start),
                    fmt_num(2.0 * r)
                )
            }
            None => cubic_chain(PrimitiveKind::SemiCircle, p, false),
        },
    }
}

enum Seg {
    Line(Point2),
    Cubic(Point2),
    Arc { end: Point2, r: f64, sweep: bool },
}

fn parse_err(d: &str, why: &str) -> Error {
    Error::domain(format!("unrecognized primitive path `{d}`: {why}"))
}

/// Recovers the on-curve control points of a `kind` primitive from path
/// data produced by [`svg_path`].
pub fn parse_svg_path(kind: PrimitiveKind, d: &str) -> Result<Vec<Point2>> {
    let mut start: Option<Point2> = None;
    let mut cur = Point2::default();
    let mut segs = Vec::new();
    for seg in PathParser::from(d) {
        let seg = seg.map_err(|e| parse_err(d, &e.to_string()))?;
        let rel = |abs: bool, x: f64, y: f64, cur: Point2| {
            if abs {
                Point2::new(x, y)
            } else {
                Point2::new(cur.x + x, cur.y + y)
            }
        };
        match seg {
            PathSegment::MoveTo { abs, x, y } => {
                if start.is_some() {
                    return Err(parse_err(d, "more than one subpath"));
                }
                cur = rel(abs, x, y, cur);
                start = Some(cur);
            }
            PathSegment::LineTo { abs, x, y } => {
                cur = rel(abs, x, y, cur);
                segs.push(Seg::Line(cur));
            }
            PathSegment::CurveTo { abs, x, y, .. } => {
                cur = rel(abs, x, y, cur);
                segs.push(Seg::Cubic(cur));
            }
            PathSegment::EllipticalArc {
                abs,
                rx,
                ry,
                sweep,
                x,
                y,
                ..
            } => {
                if !close(rx, ry) {
                    return Err(parse_err(d, "elliptical arc"));
                }
                cur = rel(abs, x, y, cur);
                segs.push(Seg::Arc {
                    end: cur,
                    r: rx,
                    sweep,
                });
            }
            PathSegment::ClosePath { .. } => {}
            _ => return Err(parse_err(d, "unsupported command")),
        }
    }
    let start = start.ok_or_else(|| parse_err(d, "missing moveto"))?;

    match (kind, segs.as_slice()) {
        (PrimitiveKind::Line, [Seg::Line(b)]) => Ok(vec![start, *b]),
        (PrimitiveKind::Circle, [Seg::Arc { end, r, .. }, Seg::Arc { .. }]) => {
            let center = Point2::new((start.x + end.x) / 2.0, (start.y + end.y) / 2.0);
            Ok(circle_points(center, *r))
        }
        (PrimitiveKind::Circle, [Seg::Cubic(a), Seg::Cubic(b), Seg::Cubic(c), Seg::Cubic(_)]) => {
            Ok(vec![start, *a, *b, *c])
        }
        (PrimitiveKind::SemiCircle, [Seg::Arc { end, r, sweep }]) => {
            let center = Point2::new((start.x + end.x) / 2.0, (start.y + end.y) / 2.0);
            let dir = end.sub(start);
            let len = dir.x.hypot(dir.y);
            if len == 0.0 {
                return Err(parse_err(d, "zero-length diameter"));
            }
            // Clockwise on screen (sweep=1) bulges to the left of start->end.
            let mut normal = Point2::new(dir.y / len, -dir.x / len);
            if !sweep {
                normal = normal.scale(-1.0);
            }
            Ok(vec![start, center.add(normal.scale(*r)), *end])
        }
        (PrimitiveKind::SemiCircle, [Seg::Cubic(a), Seg::Cubic(b)]) => Ok(vec![start, *a, *b]),
        _ => Err(parse_err(d, &format!("does not describe a {kind}"))),
    }
}
