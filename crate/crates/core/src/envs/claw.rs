//! Arcade-claw scenes: each observation is a scene id, each valid action a
//! point inside one of the scene's toy regions in the unit square.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::DemoDataset;
use crate::error::{Error, Result};

/// Bump whenever fixture geometry changes; metrics are only comparable within a version.
pub const CLAW_FIXTURE_VERSION: u32 = 1;
pub const CLAW_OBS_DIM: usize = 7;
/// Scene whose two regions sit on the main diagonal.
pub const DIAGONAL_SCENE: usize = 2;
/// Scenes with exactly two equal-area regions.
pub const BIMODAL_SCENES: [usize; 4] = [1, 2, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Region {
    pub fn area(&self) -> f64 {
        match *self {
            Region::Disc { r, .. } => std::f64::consts::PI * r * r,
            Region::Rect { x0, y0, x1, y1 } => (x1 - x0) * (y1 - y0),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Region::Disc { cx, cy, r } => {
                let (dx, dy) = (p[0] - cx, p[1] - cy);
                dx * dx + dy * dy <= r * r
            }
            Region::Rect { x0, y0, x1, y1 } => p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1,
        }
    }

    /// Axis-aligned bounding box `(x0, y0, x1, y1)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Region::Disc { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            Region::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let (x0, y0, x1, y1) = self.bounds();
        loop {
            let p = [rng.gen_range(x0..x1), rng.gen_range(y0..y1)];
            if self.contains(p) {
                return p;
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (x0, y0, x1, y1) = self.bounds();
        if !(self.area() > 0.0 && x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0 && x0 < x1 && y0 < y1) {
            return Err(Error::config("claw.region", format!("invalid region {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClawScene {
    pub id: usize,
    pub regions: Vec<Region>,
}

impl ClawScene {
    pub fn new(id: usize, regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::config("claw.scene", format!("scene {id} has no regions")));
        }
        for r in &regions {
            r.validate()?;
        }
        Ok(Self { id, regions })
    }

    pub fn total_area(&self) -> f64 {
        self.regions.iter().map(Region::area).sum()
    }

    /// Index of the first region containing `p`.
    pub fn region_of(&self, p: [f64; 2]) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(p))
    }
}

pub fn in_region(scene: &ClawScene, a: [f64; 2]) -> bool {
    scene.region_of(a).is_some()
}

/// Picks a region with probability proportional to its area, then a uniform point inside it.
pub fn sample_demo<R: Rng + ?Sized>(scene: &ClawScene, rng: &mut R) -> [f64; 2] {
    let total = scene.total_area();
    let mut u = rng.gen::<f64>() * total;
    let mut chosen = scene.regions.len() - 1;
    for (i, r) in scene.regions.iter().enumerate() {
        if u < r.area() {
            chosen = i;
            break;
        }
        u -= r.area();
    }
    scene.regions[chosen].sample_uniform(rng)
}

const fn disc(cx: f64, cy: f64, r: f64) -> Region {
    Region::Disc { cx, cy, r }
}

const fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Region {
    Region::Rect { x0, y0, x1, y1 }
}

// Shared regions appear in several scenes; the rest are unique to one.
const CENTER: Region = disc(0.5, 0.5, 0.2);
const LOW_LEFT: Region = rect(0.08, 0.08, 0.38, 0.38);

/// The frozen seven-scene fixture (version [`CLAW_FIXTURE_VERSION`]).
///
/// | id | layout |
/// |----|--------|
/// | 0 | one centre disc |
/// | 1 | two equal discs, left and right |
/// | 2 | two equal squares on the diagonal |
/// | 3 | three discs along the anti-diagonal |
/// | 4 | disc and rectangle of equal area |
/// | 5 | two equal discs, top and bottom |
/// | 6 | square, flat rectangle and disc |
pub fn default_claw_scenes() -> Vec<ClawScene> {
    let layouts: [Vec<Region>; 7] = [
        vec![CENTER],
        vec![disc(0.22, 0.5, 0.14), disc(0.78, 0.5, 0.14)],
        vec![LOW_LEFT, rect(0.62, 0.62, 0.92, 0.92)],
        vec![disc(0.2, 0.8, 0.12), CENTER, disc(0.8, 0.2, 0.12)],
        vec![disc(0.3, 0.72, 0.18), rect(0.52, 0.1, 0.9, 0.1 + std::f64::consts::PI * 0.18 * 0.18 / 0.38)],
        vec![disc(0.5, 0.8, 0.13), disc(0.5, 0.2, 0.13)],
        vec![LOW_LEFT, rect(0.55, 0.08, 0.92, 0.3), disc(0.7, 0.72, 0.16)],
    ];
    layouts
        .into_iter()
        .enumerate()
        .map(|(i, regions)| ClawScene::new(i, regions).expect("fixture is valid"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneOrder {
    Uniform,
    /// Row `i` uses scene `i % scenes.len()`.
    RoundRobin,
}

pub fn generate_claw_dataset<R: Rng + ?Sized>(scenes: &[ClawScene], n: usize, rng: &mut R) -> Result<DemoDataset> {
    generate_claw_dataset_with(scenes, n, SceneOrder::Uniform, rng)
}

pub fn generate_claw_dataset_with<R: Rng + ?Sized>(
    scenes: &[ClawScene],
    n: usize,
    order: SceneOrder,
    rng: &mut R,
) -> Result<DemoDataset> {
    if n == 0 {
        return Err(Error::config("data.n", "dataset needs at least one row"));
    }
    if scenes.is_empty() {
        return Err(Error::config("claw.scenes", "no scenes"));
    }
    let k = scenes.len();
    let mut obs = Array2::zeros((n, k));
    let mut act = Array2::zeros((n, 2));
    for i in 0..n {
        let s = match order {
            SceneOrder::Uniform => rng.gen_range(0..k),
            SceneOrder::RoundRobin => i % k,
        };
        let a = sample_demo(&scenes[s], rng);
        assert!(in_region(&scenes[s], a), "demo action outside its scene");
        obs[[i, s]] = 1.0;
        act[[i, 0]] = a[0];
        act[[i, 1]] = a[1];
    }
    DemoDataset::new(obs, act)
}
