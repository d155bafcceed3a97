//! Primitive shapes and the patch grid they are spawned on.

mod affine;
mod curve;
mod svg;

pub use affine::{fit_affine, AffineFit};
pub use curve::{cubic_segments, flatten, FlattenBasis, ARC_KAPPA};
pub use svg::{fmt_num, parse_svg_path, svg_path};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A position in canvas units (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub(crate) fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub(crate) fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub(crate) fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Line,
    Circle,
    SemiCircle,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 3] = [
        PrimitiveKind::Line,
        PrimitiveKind::Circle,
        PrimitiveKind::SemiCircle,
    ];

    /// Number of on-curve control points the kind is parametrized by.
    pub const fn control_point_count(self) -> usize {
        match self {
            PrimitiveKind::Line => 2,
            PrimitiveKind::SemiCircle => 3,
            PrimitiveKind::Circle => 4,
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrimitiveKind::Line => "line",
            PrimitiveKind::Circle => "circle",
            PrimitiveKind::SemiCircle => "semicircle",
        })
    }
}

/// One stroke: a kind, its on-curve control points and an opacity.
///
/// Circle points are stored N, E, S, W. Semicircle points are stored as the
/// two diameter endpoints with the apex in between. The state at creation is
/// frozen so the transform a primitive has undergone can be recovered later.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    id: u32,
    kind: PrimitiveKind,
    points: Vec<Point2>,
    opacity: f64,
    initial_points: Vec<Point2>,
    initial_opacity: f64,
    pruned: bool,
}

impl Primitive {
    pub fn new(id: u32, kind: PrimitiveKind, points: Vec<Point2>, opacity: f64) -> Result<Self> {
        if points.len() != kind.control_point_count() {
            return Err(Error::domain(format!(
                "{kind} needs {} control points, got {}",
                kind.control_point_count(),
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::domain(format!("non-finite control point {p:?}")));
        }
        if !(0.0..=1.0).contains(&opacity) {
            return Err(Error::domain(format!("opacity {opacity} outside [0, 1]")));
        }
        Ok(Primitive {
            id,
            kind,
            initial_points: points.clone(),
            points,
            opacity,
            initial_opacity: opacity,
            pruned: false,
        })
    }

    /// Rebuilds a primitive from a recorded state, e.g. a trajectory snapshot.
    pub fn with_history(
        id: u32,
        kind: PrimitiveKind,
        initial_points: Vec<Point2>,
        initial_opacity: f64,
        points: Vec<Point2>,
        opacity: f64,
        pruned: bool,
    ) -> Result<Self> {
        let mut prim = Primitive::new(id, kind, initial_points, initial_opacity)?;
        if points.len() != kind.control_point_count() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain(format!("invalid current points for {kind} {id}")));
        }
        prim.points = points;
        prim.opacity = opacity.clamp(0.0, 1.0);
        prim.pruned = pruned;
        Ok(prim)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.kind
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn opacity(&self) -> f64 {
        self.opacity
    }

    pub fn initial_points(&self) -> &[Point2] {
        &self.initial_points
    }

    pub fn initial_opacity(&self) -> f64 {
        self.initial_opacity
    }

    pub fn is_pruned(&self) -> bool {
        self.pruned
    }

    pub(crate) fn prune(&mut self) {
        self.pruned = true;
    }

    pub fn set_opacity(&mut self, opacity: f64) {
        self.opacity = opacity.clamp(0.0, 1.0);
    }

    /// Replaces the control points; the count must match the kind.
    pub fn set_points(&mut self, points: &[Point2]) -> Result<()> {
        if points.len() != self.points.len() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain(format!(
                "invalid control points for {} {}",
                self.kind, self.id
            )));
        }
        self.points.copy_from_slice(points);
        Ok(())
    }

    pub(crate) fn points_mut(&mut self) -> &mut [Point2] {
        &mut self.points
    }

    /// Euclidean length of a line primitive's segment; `None` for curves.
    pub fn line_length(&self) -> Option<f64> {
        match self.kind {
            PrimitiveKind::Line => Some(self.points[0].distance(self.points[1])),
            _ => None,
        }
    }
}

/// A square tile of the canvas. `start` is inclusive, `end` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Patch {
    pub row: u32,
    pub col: u32,
    pub size: u32,
}

impl Patch {
    pub fn new(row: u32, col: u32, size: u32) -> Self {
        Patch { row, col, size }
    }

    pub fn start(&self) -> Point2 {
        Point2::new(
            f64::from(self.col * self.size),
            f64::from(self.row * self.size),
        )
    }

    pub fn end(&self) -> Point2 {
        Point2::new(
            f64::from((self.col + 1) * self.size),
            f64::from((self.row + 1) * self.size),
        )
    }

    /// Closed-box containment, `start <= p <= end` on both axes.
    ///
    /// Circles may touch the far edge at their maximum radius, so primitive
    /// containment is checked against the closed box.
    pub fn contains(&self, p: Point2) -> bool {
        let (s, e) = (self.start(), self.end());
        p.x >= s.x && p.x <= e.x && p.y >= s.y && p.y <= e.y
    }
}

/// Returns `(row, col)` of the patch holding `p`, rows indexed from y.
pub fn patch_of(p: Point2, patch_size: u32, width: u32, height: u32) -> Result<(u32, u32)> {
    if patch_size == 0 {
        return Err(Error::domain("patch size must be positive"));
    }
    let inside = p.x >= 0.0 && p.y >= 0.0 && p.x < f64::from(width) && p.y < f64::from(height);
    if !inside {
        return Err(Error::domain(format!(
            "point ({}, {}) outside {width}x{height} canvas",
            p.x, p.y
        )));
    }
    let size = f64::from(patch_size);
    Ok(((p.y / size).floor() as u32, (p.x / size).floor() as u32))
}

fn randint<R: Rng + ?Sized>(rng: &mut R, lo: u32, hi_exclusive: u32) -> f64 {
    f64::from(rng.random_range(lo..hi_exclusive))
}

fn sample_in_patch<R: Rng + ?Sized>(patch: &Patch, rng: &mut R) -> Point2 {
    let (s, e) = (patch.start(), patch.end());
    Point2::new(
        randint(rng, s.x as u32, e.x as u32),
        randint(rng, s.y as u32, e.y as u32),
    )
}

/// Largest radius keeping a circle centred at `center` inside `patch`,
/// measured to the nearer edge on each axis.
pub fn max_radius(patch: &Patch, center: Point2) -> f64 {
    let half = f64::from(patch.size) / 2.0;
    let (s, e) = (patch.start(), patch.end());
    let rx = if center.x < s.x + half {
        center.x - s.x
    } else {
        e.x - center.x
    };
    let ry = if center.y < s.y + half {
        center.y - s.y
    } else {
        e.y - center.y
    };
    rx.min(ry)
}

/// A straight line with both endpoints drawn uniformly from the patch.
/// Draws of length `<= 1` are rejected and redrawn.
pub fn make_line<R: Rng + ?Sized>(id: u32, patch: &Patch, opacity: f64, rng: &mut R) -> Result<Primitive> {
    if patch.size < 2 {
        return Err(Error::domain("patch too small for a line longer than 1px"));
    }
    loop {
        let a = sample_in_patch(patch, rng);
        let b = sample_in_patch(patch, rng);
        if a.distance(b) > 1.0 {
            return Primitive::new(id, PrimitiveKind::Line, vec![a, b], opacity);
        }
    }
}

fn sample_disc<R: Rng + ?Sized>(patch: &Patch, rng: &mut R) -> Result<(Point2, f64)> {
    if patch.size < 4 {
        return Err(Error::domain("patch size must be at least 4 for curved primitives"));
    }
    loop {
        let center = sample_in_patch(patch, rng);
        let max_r = max_radius(patch, center).floor();
        if max_r >= 1.0 {
            let r = randint(rng, 1, max_r as u32 + 1);
            return Ok((center, r));
        }
    }
}

/// The four cardinal on-curve points N, E, S, W of a circle.
pub fn circle_points(center: Point2, r: f64) -> Vec<Point2> {
    vec![
        Point2::new(center.x, center.y - r),
        Point2::new(center.x + r, center.y),
        Point2::new(center.x, center.y + r),
        Point2::new(center.x - r, center.y),
    ]
}

/// Left endpoint, apex, right endpoint. `upper` puts the apex at smaller y.
pub fn semicircle_points(center: Point2, r: f64, upper: bool) -> Vec<Point2> {
    let apex_y = if upper { center.y - r } else { center.y + r };
    vec![
        Point2::new(center.x - r, center.y),
        Point2::new(center.x, apex_y),
        Point2::new(center.x + r, center.y),
    ]
}

pub fn make_circle<R: Rng + ?Sized>(id: u32, patch: &Patch, opacity: f64, rng: &mut R) -> Result<Primitive> {
    let (center, r) = sample_disc(patch, rng)?;
    Primitive::new(id, PrimitiveKind::Circle, circle_points(center, r), opacity)
}

pub fn make_semicircle<R: Rng + ?Sized>(
    id: u32,
    patch: &Patch,
    opacity: f64,
    rng: &mut R,
) -> Result<Primitive> {
    let (center, r) = sample_disc(patch, rng)?;
    let upper = rng.random_bool(0.5);
    Primitive::new(
        id,
        PrimitiveKind::SemiCircle,
        semicircle_points(center, r, upper),
        opacity,
    )
}

pub fn make_primitive<R: Rng + ?Sized>(
    kind: PrimitiveKind,
    id: u32,
    patch: &Patch,
    opacity: f64,
    rng: &mut R,
) -> Result<Primitive> {
    match kind {
        PrimitiveKind::Line => make_line(id, patch, opacity, rng),
        PrimitiveKind::Circle => make_circle(id, patch, opacity, rng),
        PrimitiveKind::SemiCircle => make_semicircle(id, patch, opacity, rng),
    }
}
