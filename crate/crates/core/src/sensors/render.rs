use rayon::prelude::*;

use super::{Grid, SemanticClass};
use crate::frames::{PoseUe, CM_PER_M};
use crate::math::{vec3, Quat, Vec3};
use crate::weather::WeatherPreset;
use crate::world::ActorId;

/// Horizontal field of view of every camera (radians).
pub const HFOV: f64 = std::f64::consts::FRAC_PI_2;
pub const LIDAR_RAYS: u32 = 720;
/// cm; lidar returns beyond this are misses.
pub const LIDAR_MAX_RANGE: f64 = 10_000.0;

/// Base albedo per semantic class id.
pub const ALBEDO: [f64; 6] = [0.0, 180.0, 230.0, 200.0, 160.0, 210.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBox {
    pub actor: Option<ActorId>,
    pub class: SemanticClass,
    pub center: Vec3,
    pub half_extents: Vec3,
    pub orientation: Quat,
}

/// Immutable geometry every sensor of one tick renders against.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground_half_extent: f64,
    pub boxes: Vec<SceneBox>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Range along the (unit) ray, cm.
    pub range: f64,
    pub class: SemanticClass,
}

fn ray_box(origin: &Vec3, dir: &Vec3, b: &SceneBox) -> Option<f64> {
    let o = b.orientation.rotate_inverse(&(origin - b.center));
    let d = b.orientation.rotate_inverse(dir);
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        let h = b.half_extents[axis];
        if d[axis] == 0.0 {
            if o[axis].abs() > h {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let (mut t0, mut t1) = ((-h - o[axis]) * inv, (h - o[axis]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_far < 0.0 {
        return None;
    }
    // Origin inside the box: report the exit so the box still occludes.
    Some(if t_near >= 0.0 { t_near } else { t_far })
}

/// Nearest hit of a unit ray, ignoring boxes owned by `exclude`.
pub fn cast_ray(scene: &Scene, origin: &Vec3, dir: &Vec3, exclude: Option<ActorId>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    if dir.z < 0.0 && origin.z >= 0.0 {
        let t = -origin.z / dir.z;
        let p = origin + dir * t;
        if p.x.abs() <= scene.ground_half_extent && p.y.abs() <= scene.ground_half_extent {
            best = Some(Hit {
                range: t,
                class: SemanticClass::Ground,
            });
        }
    }
    for b in &scene.boxes {
        if exclude.is_some() && b.actor == exclude {
            continue;
        }
        if let Some(t) = ray_box(origin, dir, b) {
            if best.map_or(true, |h| t < h.range) {
                best = Some(Hit {
                    range: t,
                    class: b.class,
                });
            }
        }
    }
    best
}

/// Pinhole camera looking along its local +X, image right along +Y and
/// image up along +Z. Pixel (col, row) has its ray through the image-plane
/// point (col - w/2, row - h/2), so pixel (w/2, h/2) is the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub pose: PoseUe,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(pose: PoseUe, width: u32, height: u32) -> Self {
        Self {
            pose,
            width,
            height,
        }
    }

    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (HFOV / 2.0).tan()
    }

    pub fn ray(&self, col: u32, row: u32) -> Vec3 {
        let u = col as f64 - self.width as f64 / 2.0;
        let v = row as f64 - self.height as f64 / 2.0;
        let local = vec3(self.focal(), u, -v).normalize();
        self.pose.orientation.rotate(&local)
    }

    /// Continuous pixel coordinates (col, row) of a world point in front of
    /// the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let c = self.pose.orientation.rotate_inverse(&(p - self.pose.position));
        if c.x <= 0.0 {
            return None;
        }
        let f = self.focal();
        Some((
            f * c.y / c.x + self.width as f64 / 2.0,
            -f * c.z / c.x + self.height as f64 / 2.0,
        ))
    }

    /// Nearest pixel for a world point, if it lands inside the image.
    pub fn pixel_of(&self, p: &Vec3) -> Option<(u32, u32)> {
        let (u, v) = self.project(p)?;
        let (c, r) = (u.round(), v.round());
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((c as u32, r as u32))
    }
}

fn render<T, F>(cam: &Camera, scene: &Scene, exclude: Option<ActorId>, shade: F) -> Grid<T>
where
    T: Send + Copy,
    F: Fn(Option<Hit>) -> T + Sync,
{
    let w = cam.width;
    let data: Vec<T> = (0..cam.height)
        .into_par_iter()
        .flat_map_iter(|row| {
            let shade = &shade;
            (0..w).map(move |col| {
                shade(cast_ray(scene, &cam.pose.position, &cam.ray(col, row), exclude))
            })
        })
        .collect();
    Grid {
        width: w,
        height: cam.height,
        data,
    }
}

/// Ranges in meters; misses are +inf.
pub fn render_depth(cam: &Camera, scene: &Scene, exclude: Option<ActorId>) -> Grid<f32> {
    render(cam, scene, exclude, |hit| match hit {
        Some(h) => (h.range / CM_PER_M) as f32,
        None => f32::INFINITY,
    })
}

pub fn render_semantic(cam: &Camera, scene: &Scene, exclude: Option<ActorId>) -> Grid<u8> {
    render(cam, scene, exclude, |hit| {
        hit.map_or(SemanticClass::Sky as u8, |h| h.class as u8)
    })
}

/// Distance falloff applied to the lit albedo.
pub fn shading(range_m: f64) -> f64 {
    1.0 / (1.0 + range_m / 200.0)
}

/// Intensity = albedo(class) x illumination x shading(range), quantized.
pub fn render_rgb_proxy(
    cam: &Camera,
    scene: &Scene,
    exclude: Option<ActorId>,
    weather: &WeatherPreset,
) -> Grid<u8> {
    let illum = weather.illumination;
    render(cam, scene, exclude, |hit| match hit {
        Some(h) => {
            let v = ALBEDO[h.class as usize] * illum * shading(h.range / CM_PER_M);
            v.round().clamp(0.0, 255.0) as u8
        }
        None => 0,
    })
}

/// Planar fan of ranges (m) in the mount's local XY plane, starting at
/// local +X and sweeping toward +Y in 0.5 degree steps.
pub fn render_lidar(pose: &PoseUe, scene: &Scene, exclude: Option<ActorId>) -> Grid<f32> {
    let data = (0..LIDAR_RAYS)
        .into_par_iter()
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / LIDAR_RAYS as f64;
            let dir = pose.orientation.rotate(&vec3(a.cos(), a.sin(), 0.0));
            match cast_ray(scene, &pose.position, &dir, exclude) {
                Some(h) if h.range <= LIDAR_MAX_RANGE => (h.range / CM_PER_M) as f32,
                _ => f32::INFINITY,
            }
        })
        .collect();
    Grid {
        width: LIDAR_RAYS,
        height: 1,
        data,
    }
}
