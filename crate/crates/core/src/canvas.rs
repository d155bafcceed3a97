//! Patch-based canvas initialization from attention landmarks.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::LandmarkSet;
use crate::geometry::{make_primitive, patch_of, Patch, Primitive, PrimitiveKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Landmarks drawn from the attention map.
    pub k: usize,
    pub patch_size: u32,
    /// Primitives of each kind placed in every selected patch.
    pub per_type_count: usize,
    pub alpha_init: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            k: 32,
            patch_size: 32,
            per_type_count: 1,
            alpha_init: 0.3,
        }
    }
}

impl InitConfig {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        if self.patch_size < 4 {
            return Err(Error::domain("patch size must be at least 4"));
        }
        if !width.is_multiple_of(self.patch_size) || !height.is_multiple_of(self.patch_size) {
            return Err(Error::domain(format!(
                "{width}x{height} canvas is not divisible into {0}x{0} patches",
                self.patch_size
            )));
        }
        if self.per_type_count == 0 {
            return Err(Error::domain("per-type count must be at least 1"));
        }
        if !(self.alpha_init > 0.0 && self.alpha_init <= 1.0) {
            return Err(Error::domain("alpha_init must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// The ordered composition of primitives being optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    width: u32,
    height: u32,
    patch_size: u32,
    seed: u64,
    primitives: Vec<Primitive>,
    spawn: Vec<Option<Patch>>,
}

impl Canvas {
    /// A canvas from explicit primitives (no spawn patches recorded).
    pub fn new(width: u32, height: u32, primitives: Vec<Primitive>) -> Self {
        let spawn = vec![None; primitives.len()];
        Canvas {
            width,
            height,
            patch_size: 0,
            seed: 0,
            primitives,
            spawn,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn primitives_mut(&mut self) -> &mut [Primitive] {
        &mut self.primitives
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Primitives that have not been pruned.
    pub fn alive(&self) -> impl Iterator<Item = &Primitive> {
        self.primitives.iter().filter(|p| !p.is_pruned())
    }

    pub fn alive_count(&self) -> usize {
        self.alive().count()
    }

    pub fn count_kind(&self, kind: PrimitiveKind) -> usize {
        self.alive().filter(|p| p.kind() == kind).count()
    }

    /// Patch the primitive at `index` was spawned in, if known.
    pub fn spawn_patch(&self, index: usize) -> Option<Patch> {
        self.spawn.get(index).copied().flatten()
    }
}

/// Patches holding at least one landmark, deduplicated, in row-major order.
pub fn select_patches(
    landmarks: &LandmarkSet,
    patch_size: u32,
    width: u32,
    height: u32,
) -> Result<Vec<Patch>> {
    let mut cells = BTreeSet::new();
    for p in &landmarks.points {
        cells.insert(patch_of(*p, patch_size, width, height)?);
    }
    Ok(cells
        .into_iter()
        .map(|(row, col)| Patch::new(row, col, patch_size))
        .collect())
}

/// Places `per_type_count` lines, circles and semicircles (in that order) in
/// every selected patch, all at `alpha_init`.
pub fn init_canvas(
    cfg: &InitConfig,
    landmarks: &LandmarkSet,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<Canvas> {
    cfg.validate(width, height)?;
    let patches = select_patches(landmarks, cfg.patch_size, width, height)?;
    if patches.is_empty() {
        return Err(Error::domain("attention map produced no landmarks"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut primitives = Vec::with_capacity(patches.len() * 3 * cfg.per_type_count);
    let mut spawn = Vec::with_capacity(primitives.capacity());
    for patch in &patches {
        for kind in PrimitiveKind::ALL {
            for _ in 0..cfg.per_type_count {
                let id = primitives.len() as u32;
                primitives.push(make_primitive(kind, id, patch, cfg.alpha_init, &mut rng)?);
                spawn.push(Some(*patch));
            }
        }
    }
    Ok(Canvas {
        width,
        height,
        patch_size: cfg.patch_size,
        seed,
        primitives,
        spawn,
    })
}
