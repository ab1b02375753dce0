//! Built-in procedural maps.
//!
//! `flat_town` is a 400 m x 400 m ground plane at z = 0 centered on the world
//! origin. A rectangular road loop with rounded corners runs clockwise (seen
//! from above) with its first straight along y = 0 in the +X direction, so
//! it passes directly under the origin. A few static boxes sit inside and
//! outside the loop.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{SimError, SimResult};
use crate::frames::PoseUe;
use crate::math::{vec3, Quat, Vec3};

pub const FLAT_TOWN: &str = "flat_town";

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub center: Vec3,
    pub half_extents: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatMap {
    pub name: String,
    /// Ground plane spans [-half_extent, half_extent] in X and Y (cm).
    pub half_extent: f64,
    /// Closed loop of road waypoints (cm, z = 0), in driving order.
    pub road_loop: Vec<Vec3>,
    pub obstacles: Vec<Obstacle>,
}

const LOOP_X: f64 = 15_000.0;
const LOOP_Y_MAX: f64 = 15_000.0;
const CORNER_RADIUS: f64 = 1_000.0;
const STRAIGHT_SPACING: f64 = 500.0;
const ARC_STEPS: usize = 6;

impl FlatMap {
    pub fn load(name: &str) -> SimResult<Self> {
        match name {
            FLAT_TOWN => Ok(Self::flat_town()),
            other => Err(SimError::MapNotFound(other.to_string())),
        }
    }

    fn flat_town() -> Self {
        let r = CORNER_RADIUS;
        // Straight start/end points and the arc that follows each straight.
        let legs = [
            (vec3(-LOOP_X + r, 0.0, 0.0), vec3(LOOP_X - r, 0.0, 0.0), vec3(LOOP_X - r, r, 0.0), -FRAC_PI_2),
            (vec3(LOOP_X, r, 0.0), vec3(LOOP_X, LOOP_Y_MAX - r, 0.0), vec3(LOOP_X - r, LOOP_Y_MAX - r, 0.0), 0.0),
            (vec3(LOOP_X - r, LOOP_Y_MAX, 0.0), vec3(-LOOP_X + r, LOOP_Y_MAX, 0.0), vec3(-LOOP_X + r, LOOP_Y_MAX - r, 0.0), FRAC_PI_2),
            (vec3(-LOOP_X, LOOP_Y_MAX - r, 0.0), vec3(-LOOP_X, r, 0.0), vec3(-LOOP_X + r, r, 0.0), PI),
        ];
        let mut road_loop = Vec::new();
        for (start, end, center, arc_start) in legs {
            let len = (end - start).norm();
            let n = (len / STRAIGHT_SPACING).ceil() as usize;
            for i in 0..n {
                road_loop.push(start + (end - start) * (i as f64 / n as f64));
            }
            for k in 0..ARC_STEPS {
                let a = arc_start + FRAC_PI_2 * (k as f64 / ARC_STEPS as f64);
                road_loop.push(center + vec3(r * a.cos(), r * a.sin(), 0.0));
            }
        }
        let obstacles = vec![
            Obstacle {
                center: vec3(-8_000.0, 7_500.0, 1_000.0),
                half_extents: vec3(2_000.0, 2_000.0, 1_000.0),
            },
            Obstacle {
                center: vec3(8_000.0, 7_500.0, 1_500.0),
                half_extents: vec3(2_500.0, 1_500.0, 1_500.0),
            },
            Obstacle {
                center: vec3(0.0, -7_000.0, 500.0),
                half_extents: vec3(1_000.0, 1_000.0, 500.0),
            },
        ];
        Self {
            name: FLAT_TOWN.to_string(),
            half_extent: 20_000.0,
            road_loop,
            obstacles,
        }
    }

    pub fn contains_xy(&self, p: &Vec3) -> bool {
        p.x.abs() <= self.half_extent && p.y.abs() <= self.half_extent
    }

    /// Index of the road waypoint nearest to `p` (XY distance).
    pub fn nearest_waypoint(&self, p: &Vec3) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, w) in self.road_loop.iter().enumerate() {
            let d = (w.xy() - p.xy()).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// The loop rotated so it starts at the first waypoint ahead of `p`
    /// along `yaw`.
    pub fn route_from(&self, p: &Vec3, yaw: f64) -> VecDeque<Vec3> {
        let n = self.road_loop.len();
        let mut start = self.nearest_waypoint(p);
        let heading = vec3(yaw.cos(), yaw.sin(), 0.0);
        if (self.road_loop[start] - p).dot(&heading) <= 0.0 {
            start = (start + 1) % n;
        }
        (0..n).map(|k| self.road_loop[(start + k) % n]).collect()
    }

    /// Waypoint `i` with yaw facing the next waypoint, lifted to `height` cm.
    pub fn spawn_point(&self, i: usize, height: f64) -> PoseUe {
        let n = self.road_loop.len();
        let a = self.road_loop[i % n];
        let b = self.road_loop[(i + 1) % n];
        let yaw = (b.y - a.y).atan2(b.x - a.x);
        PoseUe::new(vec3(a.x, a.y, height), Quat::from_yaw(yaw))
    }

    pub fn loop_length(&self) -> f64 {
        let n = self.road_loop.len();
        (0..n)
            .map(|i| (self.road_loop[(i + 1) % n] - self.road_loop[i]).norm())
            .sum()
    }
}

/// Shortest XY distance from `p` to the closed polyline `pts`.
pub fn distance_to_loop(pts: &[Vec3], p: &Vec3) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let a = pts[i].xy();
            let b = pts[(i + 1) % n].xy();
            let ab = b - a;
            let t = ((p.xy() - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (a + ab * t - p.xy()).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_map() {
        assert!(matches!(FlatMap::load("nosuch"), Err(SimError::MapNotFound(_))));
    }

    #[test]
    fn loop_is_closed_and_evenly_spaced() {
        let m = FlatMap::load(FLAT_TOWN).unwrap();
        let n = m.road_loop.len();
        for i in 0..n {
            let gap = (m.road_loop[(i + 1) % n] - m.road_loop[i]).norm();
            assert!(gap > 100.0 && gap <= STRAIGHT_SPACING + 1e-6, "gap {gap} at {i}");
        }
        assert!(m.road_loop.iter().all(|p| m.contains_xy(p) && p.z == 0.0));
        // Two 300 m and two 150 m sides, minus the rounded corners.
        let ideal = 2.0 * (30_000.0 + 15_000.0) - 8.0 * CORNER_RADIUS + 2.0 * PI * CORNER_RADIUS;
        assert!((m.loop_length() - ideal).abs() / ideal < 0.01);
    }

    #[test]
    fn loop_passes_under_origin() {
        let m = FlatMap::load(FLAT_TOWN).unwrap();
        assert!(distance_to_loop(&m.road_loop, &Vec3::zeros()) < 1e-9);
    }

    #[test]
    fn route_starts_ahead() {
        let m = FlatMap::load(FLAT_TOWN).unwrap();
        let route = m.route_from(&vec3(-1_000.0, 0.0, 0.0), 0.0);
        assert!(route[0].x > -1_000.0);
        assert_eq!(route.len(), m.road_loop.len());
    }

    #[test]
    fn obstacles_clear_of_road() {
        let m = FlatMap::load(FLAT_TOWN).unwrap();
        for o in &m.obstacles {
            let clear = o.half_extents.x.max(o.half_extents.y);
            assert!(distance_to_loop(&m.road_loop, &o.center) > clear);
        }
    }
}
