//! Procedural indoor scenes and a point-splat renderer producing paired views.
//!
//! A scene is a 6 × 6 × 3 m room shell (floor, walls, ceiling) furnished with
//! parametric objects. Each point carries six appearance channels: a
//! category color with Gaussian jitter and the jittered surface normal.

mod io;
mod shapes;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_correspondence, Camera, Correspondence};
use crate::numeric::{rng_for, Matrix};
use shapes::{pick_weighted, templates, Mount, Primitive};

pub use io::{read_scene, read_scene_file, write_scene, write_scene_file, SCENE_MAGIC, SCENE_VERSION};

pub const ROOM_SIZE: [f64; 3] = [6.0, 6.0, 3.0];
pub const APPEARANCE_DIM: usize = 6;
pub const MIN_POINTS: usize = 2000;
pub const MIN_CATEGORIES: usize = 6;
/// Minimum number of points every category present in a scene receives.
pub const MIN_POINTS_PER_CATEGORY: usize = 50;
pub const APPEARANCE_NOISE: f64 = 0.05;

pub const FLOOR: usize = 0;
pub const WALL: usize = 1;
pub const CEILING: usize = 2;
const SHELL_CATEGORIES: usize = 3;

/// Category names in id order. Ids `0..3` form the room shell.
pub const CATEGORY_NAMES: [&str; 16] = [
    "floor", "wall", "ceiling", "cabinet", "bed", "chair", "sofa", "table", "door", "window",
    "bookshelf", "picture", "desk", "lamp", "sink", "bathtub",
];

/// Largest category count the object templates can realize.
pub fn max_categories() -> usize {
    SHELL_CATEGORIES + templates().len()
}

const PALETTE: [[f64; 3]; 16] = [
    [0.55, 0.45, 0.35],
    [0.85, 0.85, 0.80],
    [0.95, 0.95, 0.95],
    [0.60, 0.30, 0.10],
    [0.20, 0.35, 0.80],
    [0.90, 0.60, 0.10],
    [0.70, 0.10, 0.15],
    [0.35, 0.60, 0.20],
    [0.45, 0.25, 0.45],
    [0.55, 0.85, 0.95],
    [0.15, 0.15, 0.15],
    [0.95, 0.30, 0.60],
    [0.40, 0.40, 0.05],
    [0.95, 0.90, 0.30],
    [0.10, 0.60, 0.60],
    [0.70, 0.75, 0.95],
];

/// Mean color of a category; shared by every scene.
pub fn category_color(category: usize) -> [f64; 3] {
    PALETTE[category % PALETTE.len()]
}

/// Split of category ids into supervised (base) and held-out (novel) sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryPartition {
    pub base_ids: Vec<usize>,
    pub novel_ids: Vec<usize>,
}

impl CategoryPartition {
    pub fn new(mut base_ids: Vec<usize>, mut novel_ids: Vec<usize>) -> Result<Self> {
        base_ids.sort_unstable();
        novel_ids.sort_unstable();
        base_ids.dedup();
        novel_ids.dedup();
        if base_ids.iter().any(|b| novel_ids.binary_search(b).is_ok()) {
            return Err(Error::Config("base and novel categories overlap".into()));
        }
        if base_ids.is_empty() {
            return Err(Error::Config("partition needs at least one base category".into()));
        }
        Ok(Self { base_ids, novel_ids })
    }

    /// Twelve categories: room shell plus five objects as base, four objects as novel.
    pub fn default_b8_n4() -> Self {
        Self::new(vec![0, 1, 2, 3, 4, 5, 8, 9], vec![6, 7, 10, 11]).expect("static partition")
    }

    pub fn n_categories(&self) -> usize {
        self.base_ids
            .iter()
            .chain(&self.novel_ids)
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn is_base(&self, category: usize) -> bool {
        self.base_ids.binary_search(&category).is_ok()
    }

    pub fn is_novel(&self, category: usize) -> bool {
        self.novel_ids.binary_search(&category).is_ok()
    }

    pub fn validate(&self, n_categories: usize) -> Result<()> {
        if self.base_ids.iter().chain(&self.novel_ids).any(|&c| c >= n_categories) {
            return Err(Error::Config(format!(
                "partition references a category id ≥ {n_categories}"
            )));
        }
        let covered = self.base_ids.len() + self.novel_ids.len();
        if covered != n_categories {
            return Err(Error::Config(format!(
                "partition covers {covered} of {n_categories} categories"
            )));
        }
        Ok(())
    }
}

/// Scene-level generation parameters beyond the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub n_points: usize,
    pub n_categories: usize,
    pub n_views: usize,
    pub image_size: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            n_points: 4096,
            n_categories: 12,
            n_views: 4,
            image_size: 64,
        }
    }
}

/// Labeled point cloud with posed cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// `N × 3`, meters.
    pub positions: Matrix,
    /// `N × A`.
    pub attributes: Matrix,
    pub labels: Vec<u16>,
    pub cameras: Vec<Camera>,
    pub n_categories: usize,
    pub scene_id: u64,
}

impl Scene {
    pub fn n_points(&self) -> usize {
        self.positions.rows()
    }

    pub fn label(&self, point: usize) -> usize {
        self.labels[point] as usize
    }

    /// Categories present, ascending.
    pub fn manifest(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_categories];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..self.n_categories).filter(|&c| seen[c]).collect()
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_categories];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

struct Element {
    category: usize,
    weight: f64,
    parts: Vec<Primitive>,
    yaw: f64,
    origin: [f64; 3],
}

impl Element {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 3], [f64; 3]) {
        let areas: Vec<f64> = self.parts.iter().map(Primitive::area).collect();
        let part = &self.parts[pick_weighted(&areas, rng)];
        let (p, n) = part.sample(rng);
        let (s, c) = self.yaw.sin_cos();
        (
            [
                self.origin[0] + c * p[0] - s * p[1],
                self.origin[1] + s * p[0] + c * p[1],
                self.origin[2] + p[2],
            ],
            [c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]],
        )
    }
}

fn shell_elements() -> Vec<Element> {
    let [x, y, z] = ROOM_SIZE;
    let t = 0.001;
    let shell = |category, weight, parts| Element {
        category,
        weight,
        parts,
        yaw: 0.0,
        origin: [0.0; 3],
    };
    vec![
        shell(FLOOR, 0.15, vec![Primitive::Cuboid { min: [0.0, 0.0, -t], max: [x, y, 0.0] }]),
        shell(
            WALL,
            0.2,
            vec![
                Primitive::Cuboid { min: [0.0, -t, 0.0], max: [x, 0.0, z] },
                Primitive::Cuboid { min: [0.0, y, 0.0], max: [x, y + t, z] },
                Primitive::Cuboid { min: [-t, 0.0, 0.0], max: [0.0, y, z] },
                Primitive::Cuboid { min: [x, 0.0, 0.0], max: [x + t, y, z] },
            ],
        ),
        shell(CEILING, 0.1, vec![Primitive::Cuboid { min: [0.0, 0.0, z], max: [x, y, z + t] }]),
    ]
}

/// Generates a scene with default view count and image size.
pub fn generate_scene(
    seed: u64,
    n_points: usize,
    partition: &CategoryPartition,
    n_categories: usize,
) -> Result<Scene> {
    let params = SceneParams {
        n_points,
        n_categories,
        ..SceneParams::default()
    };
    generate_scene_with(seed, &params, partition)
}

pub fn generate_scene_with(
    seed: u64,
    params: &SceneParams,
    partition: &CategoryPartition,
) -> Result<Scene> {
    let l = params.n_categories;
    if params.n_points < MIN_POINTS {
        return Err(Error::Config(format!(
            "scenes need at least {MIN_POINTS} points, got {}",
            params.n_points
        )));
    }
    if l < MIN_CATEGORIES {
        return Err(Error::Config(format!(
            "scenes need at least {MIN_CATEGORIES} categories, got {l}"
        )));
    }
    if l > max_categories() {
        return Err(Error::Config(format!(
            "{l} categories exceed the {} the object templates support",
            max_categories()
        )));
    }
    if params.n_views == 0 || params.image_size == 0 {
        return Err(Error::Config("scenes need at least one non-empty view".into()));
    }
    partition.validate(l)?;

    let mut rng = rng_for(seed, 0);
    let templates = templates();
    let object_categories: Vec<usize> = (SHELL_CATEGORIES..l).collect();

    let n_objects = rng.random_range(4..=10usize);
    let mut order = object_categories.clone();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = (0..n_objects).map(|k| order[k % order.len()]).collect();
    let novel_objects: Vec<usize> = object_categories
        .iter()
        .copied()
        .filter(|&c| partition.is_novel(c))
        .collect();
    if !novel_objects.is_empty() && !chosen.iter().any(|&c| partition.is_novel(c)) {
        chosen[0] = novel_objects[rng.random_range(0..novel_objects.len())];
    }

    let mut elements = shell_elements();
    let mut placed: Vec<([f64; 2], f64)> = Vec::new();
    let object_weight = 0.55 / n_objects as f64;
    for &category in &chosen {
        let tpl = &templates[category - SHELL_CATEGORIES];
        let (origin, yaw) = match tpl.mount {
            Mount::Floor => {
                let r = tpl.radius;
                let lo = 0.3 + r;
                let hi = ROOM_SIZE[0] - 0.3 - r;
                let mut best = [ROOM_SIZE[0] / 2.0, ROOM_SIZE[1] / 2.0];
                for _ in 0..200 {
                    let c = [rng.random_range(lo..hi), rng.random_range(lo..hi)];
                    best = c;
                    let clear = placed.iter().all(|(p, pr)| {
                        ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() > r + pr + 0.1
                    });
                    if clear {
                        break;
                    }
                }
                placed.push((best, r));
                ([best[0], best[1], 0.0], rng.random_range(0.0..std::f64::consts::TAU))
            }
            Mount::Wall => {
                let wall = rng.random_range(0..4usize);
                let a = rng.random_range(0.5 + tpl.half_width..ROOM_SIZE[0] - 0.5 - tpl.half_width);
                let (x, y) = (ROOM_SIZE[0], ROOM_SIZE[1]);
                let half_pi = std::f64::consts::FRAC_PI_2;
                let (pos, yaw) = match wall {
                    0 => ([a, 0.0], 0.0),
                    1 => ([x, a], half_pi),
                    2 => ([a, y], 2.0 * half_pi),
                    _ => ([0.0, a], -half_pi),
                };
                ([pos[0], pos[1], tpl.elevation], yaw)
            }
        };
        elements.push(Element {
            category,
            weight: object_weight,
            parts: tpl.parts.clone(),
            yaw,
            origin,
        });
    }

    // Every element gets a floor quota; the rest is split by weight.
    let quota = MIN_POINTS_PER_CATEGORY + 10;
    let rest = params.n_points - quota * elements.len();
    let mut counts: Vec<usize> = elements
        .iter()
        .map(|e| quota + (rest as f64 * e.weight).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    *counts.last_mut().expect("non-empty") += params.n_points - assigned;

    let noise = Normal::new(0.0, APPEARANCE_NOISE).expect("valid sigma");
    let mut positions = Vec::with_capacity(params.n_points * 3);
    let mut attributes = Vec::with_capacity(params.n_points * APPEARANCE_DIM);
    let mut labels = Vec::with_capacity(params.n_points);
    for (e, &count) in elements.iter().zip(&counts) {
        let color = category_color(e.category);
        for _ in 0..count {
            let (p, n) = e.sample(&mut rng);
            positions.extend_from_slice(&p);
            for c in color {
                attributes.push(c + noise.sample(&mut rng));
            }
            for c in n {
                attributes.push(c + noise.sample(&mut rng));
            }
            labels.push(e.category as u16);
        }
    }

    let cameras = place_cameras(&mut rng, &elements[SHELL_CATEGORIES..], params)?;

    Ok(Scene {
        positions: Matrix::new(params.n_points, 3, positions)?,
        attributes: Matrix::new(params.n_points, APPEARANCE_DIM, attributes)?,
        labels,
        cameras,
        n_categories: l,
        scene_id: seed,
    })
}

fn place_cameras<R: Rng + ?Sized>(
    rng: &mut R,
    objects: &[Element],
    params: &SceneParams,
) -> Result<Vec<Camera>> {
    let size = params.image_size;
    // 90° field of view with the principal point at the image center.
    let focal = size as f64 / 2.0;
    let center = (size as f64 - 1.0) / 2.0;
    let k = Camera::pinhole_intrinsics(focal, center, center);
    let mut cams = Vec::with_capacity(params.n_views);
    for v in 0..params.n_views {
        let obj = &objects[v % objects.len()];
        let target = [
            obj.origin[0] + rng.random_range(-0.3..0.3),
            obj.origin[1] + rng.random_range(-0.3..0.3),
            obj.origin[2] * 0.5 + 0.6,
        ];
        let mut eye = [1.0, 1.0, 1.5];
        for _ in 0..100 {
            eye = [
                rng.random_range(0.6..ROOM_SIZE[0] - 0.6),
                rng.random_range(0.6..ROOM_SIZE[1] - 0.6),
                rng.random_range(1.2..1.9),
            ];
            let d = ((eye[0] - target[0]).powi(2) + (eye[1] - target[1]).powi(2)).sqrt();
            if d > 1.8 {
                break;
            }
        }
        cams.push(Camera::look_at(eye, target, [0.0, 0.0, 1.0], k, size, size)?);
    }
    Ok(cams)
}

/// Per-pixel render of one camera. Pixels without a point are VOID.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    /// `(H·W) × A`, raster order; zero at VOID pixels.
    pub appearance: Matrix,
    pub label_image: Vec<Option<u16>>,
    pub point_index: Vec<Option<usize>>,
    pub camera: Camera,
}

impl RenderedView {
    pub fn height(&self) -> usize {
        self.camera.height
    }

    pub fn width(&self) -> usize {
        self.camera.width
    }

    /// Raster indices of non-VOID pixels, ascending.
    pub fn nonvoid_pixels(&self) -> Vec<usize> {
        self.point_index
            .iter()
            .enumerate()
            .filter_map(|(p, i)| i.map(|_| p))
            .collect()
    }

    /// Categories visible in the view, ascending.
    pub fn categories_present(&self, n_categories: usize) -> Vec<usize> {
        let mut seen = vec![false; n_categories];
        for l in self.label_image.iter().flatten() {
            seen[*l as usize] = true;
        }
        (0..n_categories).filter(|&c| seen[c]).collect()
    }
}

/// Splats the scene through `cam` using the z-buffered correspondence.
pub fn render_view(scene: &Scene, cam: &Camera) -> RenderedView {
    render_with_correspondence(scene, cam, &build_correspondence(&scene.positions, cam))
}

pub fn render_with_correspondence(
    scene: &Scene,
    cam: &Camera,
    corr: &Correspondence,
) -> RenderedView {
    let npix = cam.pixel_count();
    let a = scene.attributes.cols();
    let mut appearance = Matrix::zeros(npix, a);
    let mut label_image = vec![None; npix];
    let mut point_index = vec![None; npix];
    for e in &corr.entries {
        let p = e.row * cam.width + e.col;
        appearance.row_mut(p).copy_from_slice(scene.attributes.row(e.point));
        label_image[p] = Some(scene.labels[e.point]);
        point_index[p] = Some(e.point);
    }
    RenderedView {
        appearance,
        label_image,
        point_index,
        camera: cam.clone(),
    }
}
