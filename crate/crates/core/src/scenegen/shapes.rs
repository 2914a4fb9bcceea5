//! Parametric surface primitives and the object templates built from them.

use rand::Rng;

/// Axis-aligned solid in an object's local frame (z up, origin on the floor
/// at the object center).
#[derive(Debug, Clone, Copy)]
pub(crate) enum Primitive {
    Cuboid { min: [f64; 3], max: [f64; 3] },
    /// Side wall plus top cap.
    Cylinder { base: [f64; 3], radius: f64, height: f64 },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Primitive {
    pub(crate) fn area(&self) -> f64 {
        match *self {
            Primitive::Cuboid { min, max } => {
                let (dx, dy, dz) = (max[0] - min[0], max[1] - min[1], max[2] - min[2]);
                2.0 * (dx * dy + dx * dz + dy * dz)
            }
            Primitive::Cylinder { radius, height, .. } => {
                2.0 * std::f64::consts::PI * radius * height + std::f64::consts::PI * radius * radius
            }
            Primitive::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
        }
    }

    /// Uniform sample on the surface: `(position, outward normal)`.
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 3], [f64; 3]) {
        match *self {
            Primitive::Cuboid { min, max } => {
                let d = [max[0] - min[0], max[1] - min[1], max[2] - min[2]];
                let faces = [d[1] * d[2], d[1] * d[2], d[0] * d[2], d[0] * d[2], d[0] * d[1], d[0] * d[1]];
                let face = pick_weighted(&faces, rng);
                let axis = face / 2;
                let positive = face % 2 == 1;
                let mut p = [0.0; 3];
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = if k == axis {
                        if positive {
                            max[k]
                        } else {
                            min[k]
                        }
                    } else {
                        rng.random_range(min[k]..=max[k])
                    };
                }
                let mut n = [0.0; 3];
                n[axis] = if positive { 1.0 } else { -1.0 };
                (p, n)
            }
            Primitive::Cylinder { base, radius, height } => {
                let side = 2.0 * std::f64::consts::PI * radius * height;
                let cap = std::f64::consts::PI * radius * radius;
                if rng.random::<f64>() * (side + cap) < side {
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    let (s, c) = a.sin_cos();
                    let z = rng.random_range(0.0..=height);
                    ([base[0] + radius * c, base[1] + radius * s, base[2] + z], [c, s, 0.0])
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    let (s, c) = a.sin_cos();
                    ([base[0] + r * c, base[1] + r * s, base[2] + height], [0.0, 0.0, 1.0])
                }
            }
            Primitive::Sphere { center, radius } => {
                let z: f64 = rng.random_range(-1.0..=1.0);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).max(0.0).sqrt();
                let n = [r * a.cos(), r * a.sin(), z];
                (
                    [center[0] + radius * n[0], center[1] + radius * n[1], center[2] + radius * n[2]],
                    n,
                )
            }
        }
    }
}

pub(crate) fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// Where a template is placed in the room.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mount {
    Floor,
    /// Flat against a wall; local +y points into the room.
    Wall,
}

#[derive(Debug, Clone)]
pub(crate) struct Template {
    pub mount: Mount,
    /// Footprint radius used for floor placement.
    pub radius: f64,
    /// Bottom height above the floor for wall-mounted templates.
    pub elevation: f64,
    /// Half width along the wall for wall-mounted templates.
    pub half_width: f64,
    pub parts: Vec<Primitive>,
}

fn cuboid(min: [f64; 3], max: [f64; 3]) -> Primitive {
    Primitive::Cuboid { min, max }
}

/// Centered box: half extents in x and y, z from `z0` to `z1`.
fn block(hx: f64, hy: f64, z0: f64, z1: f64) -> Primitive {
    cuboid([-hx, -hy, z0], [hx, hy, z1])
}

fn legs(hx: f64, hy: f64, top: f64) -> Vec<Primitive> {
    let t = 0.03;
    [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
        .iter()
        .map(|&(sx, sy)| {
            let (cx, cy) = (sx * (hx - t), sy * (hy - t));
            cuboid([cx - t, cy - t, 0.0], [cx + t, cy + t, top])
        })
        .collect()
}

fn floor_template(radius: f64, parts: Vec<Primitive>) -> Template {
    Template {
        mount: Mount::Floor,
        radius,
        elevation: 0.0,
        half_width: 0.0,
        parts,
    }
}

fn wall_template(half_width: f64, elevation: f64, height: f64) -> Template {
    Template {
        mount: Mount::Wall,
        radius: half_width,
        elevation,
        half_width,
        parts: vec![cuboid([-half_width, 0.0, 0.0], [half_width, 0.06, height])],
    }
}

/// Object templates; object category `3 + k` uses template `k`.
pub(crate) fn templates() -> Vec<Template> {
    let mut chair = vec![
        block(0.24, 0.24, 0.42, 0.47),
        cuboid([-0.24, 0.18, 0.47], [0.24, 0.24, 0.95]),
    ];
    chair.extend(legs(0.24, 0.24, 0.42));

    let mut table = vec![block(0.6, 0.4, 0.70, 0.75)];
    table.extend(legs(0.6, 0.4, 0.70));

    let desk = vec![
        block(0.7, 0.35, 0.72, 0.77),
        cuboid([-0.7, -0.35, 0.0], [-0.65, 0.35, 0.72]),
        cuboid([0.65, -0.35, 0.0], [0.7, 0.35, 0.72]),
    ];

    vec![
        // cabinet
        floor_template(0.5, vec![block(0.4, 0.25, 0.0, 1.0)]),
        // bed
        floor_template(
            1.1,
            vec![block(1.0, 0.7, 0.0, 0.45), cuboid([0.95, -0.7, 0.0], [1.05, 0.7, 0.95])],
        ),
        // chair
        floor_template(0.35, chair),
        // sofa
        floor_template(
            1.0,
            vec![
                block(0.9, 0.4, 0.0, 0.42),
                cuboid([-0.9, 0.25, 0.42], [0.9, 0.4, 0.85]),
                cuboid([-0.9, -0.4, 0.42], [-0.75, 0.25, 0.62]),
                cuboid([0.75, -0.4, 0.42], [0.9, 0.25, 0.62]),
            ],
        ),
        // table
        floor_template(0.75, table),
        // door
        wall_template(0.45, 0.0, 2.0),
        // window
        wall_template(0.6, 1.0, 1.0),
        // bookshelf
        floor_template(0.5, vec![block(0.45, 0.18, 0.0, 1.8)]),
        // picture
        wall_template(0.3, 1.4, 0.45),
        // desk
        floor_template(0.8, desk),
        // lamp
        floor_template(
            0.25,
            vec![
                Primitive::Cylinder {
                    base: [0.0, 0.0, 0.0],
                    radius: 0.05,
                    height: 1.35,
                },
                Primitive::Sphere {
                    center: [0.0, 0.0, 1.5],
                    radius: 0.2,
                },
            ],
        ),
        // sink
        floor_template(
            0.4,
            vec![
                block(0.3, 0.25, 0.0, 0.85),
                Primitive::Cylinder {
                    base: [0.0, 0.0, 0.85],
                    radius: 0.18,
                    height: 0.06,
                },
            ],
        ),
        // bathtub
        floor_template(0.95, vec![block(0.85, 0.4, 0.0, 0.55)]),
    ]
}
