//! Mapping between the ground world frame and the aerial NED frame.
//!
//! The world frame is left-handed (X forward, Y right, Z up) in centimeters.
//! The aerial frame is right-handed North-East-Down in meters. X and Y are
//! directionally aligned, so positions need only the Z flip and the scale
//! change; orientations need only the sign of the Z component flipped.
//!
//! World-frame quaternions are active (body-to-world) rotations. NED
//! quaternions produced by [`ue_to_ned_quat`] are read as frame rotations
//! (world-to-body), which is what makes the single Z-component flip an exact
//! reflection of every rotation, not just of yaw. See
//! [`PoseNed::rotate_to_world`].

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::math::{is_finite, Quat, Vec3};

pub const CM_PER_M: f64 = 100.0;

/// Unit-norm tolerance for orientations.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseUe {
    /// Centimeters, left-handed world frame.
    pub position: Vec3,
    pub orientation: Quat,
}

impl PoseUe {
    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn at(position: Vec3) -> Self {
        Self::new(position, Quat::IDENTITY)
    }

    pub fn validate(&self) -> SimResult<()> {
        if !is_finite(&self.position) {
            return Err(SimError::invalid("pose position is not finite"));
        }
        if !self.orientation.is_unit(UNIT_TOL) {
            return Err(SimError::invalid("pose orientation is not a unit quaternion"));
        }
        Ok(())
    }

    /// Composes a pose expressed relative to `self` into the world frame.
    pub fn compose(&self, local: &PoseUe) -> PoseUe {
        PoseUe {
            position: self.position + self.orientation.rotate(&local.position),
            orientation: self.orientation.mul(&local.orientation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNed {
    /// Meters, right-handed North-East-Down.
    pub position: Vec3,
    pub orientation: Quat,
}

impl PoseNed {
    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn origin() -> Self {
        Self::new(Vec3::zeros(), Quat::IDENTITY)
    }

    /// Maps a body-frame NED vector into the NED world axes.
    pub fn rotate_to_world(&self, body: &Vec3) -> Vec3 {
        self.orientation.rotate_inverse(body)
    }
}

/// Offset between a multirotor's own NED frame and the shared NED frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginOffset(pub Vec3);

impl OriginOffset {
    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    pub fn vector(&self) -> Vec3 {
        self.0
    }
}

fn check_finite(v: &Vec3, what: &str) -> SimResult<()> {
    if is_finite(v) {
        Ok(())
    } else {
        Err(SimError::invalid(format!("{what} is not finite")))
    }
}

/// World-frame point (cm) relative to origin `o` (cm) into NED meters.
pub fn ue_to_ned_position(p: &Vec3, o: &Vec3) -> SimResult<Vec3> {
    check_finite(p, "position")?;
    check_finite(o, "origin")?;
    Ok(Vec3::new(
        (p.x - o.x) / CM_PER_M,
        (p.y - o.y) / CM_PER_M,
        -(p.z - o.z) / CM_PER_M,
    ))
}

pub fn ned_to_ue_position(p_ned: &Vec3, o: &Vec3) -> SimResult<Vec3> {
    check_finite(p_ned, "position")?;
    check_finite(o, "origin")?;
    Ok(Vec3::new(
        p_ned.x * CM_PER_M + o.x,
        p_ned.y * CM_PER_M + o.y,
        -p_ned.z * CM_PER_M + o.z,
    ))
}

pub fn ue_to_ned_quat(q: &Quat) -> SimResult<Quat> {
    if !q.is_unit(UNIT_TOL) {
        return Err(SimError::invalid("orientation is not a unit quaternion"));
    }
    Ok(Quat::new(q.w, q.x, q.y, -q.z))
}

/// The map is an involution, so the inverse is the same sign flip.
pub fn ned_to_ue_quat(q: &Quat) -> SimResult<Quat> {
    ue_to_ned_quat(q)
}

pub fn ue_to_ned_pose(pose: &PoseUe, o: &Vec3) -> SimResult<PoseNed> {
    Ok(PoseNed {
        position: ue_to_ned_position(&pose.position, o)?,
        orientation: ue_to_ned_quat(&pose.orientation)?,
    })
}

pub fn ned_to_ue_pose(pose: &PoseNed, o: &Vec3) -> SimResult<PoseUe> {
    Ok(PoseUe {
        position: ned_to_ue_position(&pose.position, o)?,
        orientation: ned_to_ue_quat(&pose.orientation)?,
    })
}

/// `d = T(p_spawn_world) - p_spawn_ned`, computed once per multirotor.
pub fn compute_origin_offset(
    spawn_world: &PoseUe,
    spawn_ned: &PoseNed,
    o: &Vec3,
) -> SimResult<OriginOffset> {
    check_finite(&spawn_ned.position, "spawn NED position")?;
    let t = ue_to_ned_position(&spawn_world.position, o)?;
    Ok(OriginOffset(t - spawn_ned.position))
}

/// Expresses a multirotor-frame NED point in the shared NED frame.
pub fn co_register(p_ned: &Vec3, d: &OriginOffset) -> Vec3 {
    p_ned + d.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;
    use nalgebra::Matrix3;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn rot_matrix(q: &Quat) -> Matrix3<f64> {
        // Independent of nalgebra's quaternion code path.
        let Quat { w, x, y, z } = *q;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    fn flip() -> Matrix3<f64> {
        Matrix3::from_diagonal(&vec3(1.0, 1.0, -1.0))
    }

    #[test]
    fn origin_maps_to_origin() {
        let o = vec3(120.0, -40.0, 33.0);
        assert_eq!(ue_to_ned_position(&o, &o).unwrap(), Vec3::zeros());
    }

    #[test]
    fn worked_position_example() {
        let p = vec3(250.0, -200.0, 500.0);
        let got = ue_to_ned_position(&p, &Vec3::zeros()).unwrap();
        assert_eq!(got, vec3(2.5, -2.0, -5.0));
    }

    #[test]
    fn worked_inverse_example() {
        let got = ned_to_ue_position(&vec3(1.0, 2.0, 3.0), &Vec3::zeros()).unwrap();
        assert_eq!(got, vec3(100.0, 200.0, -300.0));
        let zero = ned_to_ue_position(&Vec3::zeros(), &Vec3::zeros()).unwrap();
        assert_eq!(zero, Vec3::zeros());
    }

    #[test]
    fn quaternion_examples() {
        assert_eq!(ue_to_ned_quat(&Quat::IDENTITY).unwrap(), Quat::IDENTITY);
        let yaw90 = Quat::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        assert_eq!(
            ue_to_ned_quat(&yaw90).unwrap(),
            Quat::new(FRAC_1_SQRT_2, 0.0, 0.0, -FRAC_1_SQRT_2)
        );
        let twice = ue_to_ned_quat(&ue_to_ned_quat(&yaw90).unwrap()).unwrap();
        assert_eq!(twice, yaw90);
    }

    #[test]
    fn rejects_bad_inputs() {
        let nan = vec3(f64::NAN, 0.0, 0.0);
        assert!(matches!(
            ue_to_ned_position(&nan, &Vec3::zeros()),
            Err(SimError::InvalidInput(_))
        ));
        assert!(ned_to_ue_position(&vec3(f64::INFINITY, 0.0, 0.0), &Vec3::zeros()).is_err());
        assert!(ue_to_ned_quat(&Quat::new(2.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn scale_check() {
        let a = ue_to_ned_position(&vec3(0.0, 0.0, 0.0), &Vec3::zeros()).unwrap();
        let b = ue_to_ned_position(&vec3(100.0, 0.0, 0.0), &Vec3::zeros()).unwrap();
        assert_eq!(b - a, vec3(1.0, 0.0, 0.0));
    }

    #[test]
    fn yaw_handedness_north_to_east() {
        let yaw90 = Quat::from_yaw(std::f64::consts::FRAC_PI_2);
        // +90 deg world yaw turns forward (X) into right (Y).
        let ue = rot_matrix(&yaw90) * Vec3::x();
        assert!((ue - Vec3::y()).norm() < 1e-12);
        let ned = PoseNed::new(Vec3::zeros(), ue_to_ned_quat(&yaw90).unwrap());
        let east = ned.rotate_to_world(&Vec3::x());
        assert!((east - Vec3::y()).norm() < 1e-12, "north maps to {east:?}");
    }

    #[test]
    fn offset_examples() {
        let d = compute_origin_offset(
            &PoseUe::at(Vec3::zeros()),
            &PoseNed::origin(),
            &Vec3::zeros(),
        )
        .unwrap();
        assert_eq!(d, OriginOffset::zero());

        // T(spawn) = (3, 4, -1) m
        let spawn_world = PoseUe::at(vec3(300.0, 400.0, 100.0));
        let spawn_ned = PoseNed::new(vec3(1.0, 1.0, -1.0), Quat::IDENTITY);
        let d = compute_origin_offset(&spawn_world, &spawn_ned, &Vec3::zeros()).unwrap();
        assert_eq!(d.vector(), vec3(2.0, 3.0, 0.0));
    }

    #[test]
    fn co_register_examples() {
        let p = vec3(10.0, 5.0, 0.0);
        assert_eq!(co_register(&p, &OriginOffset::zero()), p);
        let d = OriginOffset(vec3(2.0, 3.0, 0.0));
        assert_eq!(co_register(&p, &d), vec3(12.0, 8.0, 0.0));
    }

    fn finite_coord() -> impl Strategy<Value = f64> {
        -1.0e6..1.0e6f64
    }

    fn unit_quat() -> impl Strategy<Value = Quat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| {
                w * w + x * x + y * y + z * z > 1e-3
            })
            .prop_map(|(w, x, y, z)| Quat::new(w, x, y, z).normalized())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn position_round_trip(
            x in finite_coord(), y in finite_coord(), z in finite_coord(),
            ox in finite_coord(), oy in finite_coord(), oz in finite_coord(),
        ) {
            let p = vec3(x, y, z);
            let o = vec3(ox, oy, oz);
            let back = ned_to_ue_position(&ue_to_ned_position(&p, &o).unwrap(), &o).unwrap();
            // 1e-9 m == 1e-7 cm
            prop_assert!((back - p).norm() / CM_PER_M <= 1e-9);
        }

        #[test]
        fn quat_norm_preserved(q in unit_quat()) {
            let n = ue_to_ned_quat(&q).unwrap();
            prop_assert_eq!(n.norm(), q.norm());
        }

        #[test]
        fn quat_map_is_reflection_of_rotation(q in unit_quat(),
            vx in -1.0..1.0f64, vy in -1.0..1.0f64, vz in -1.0..1.0f64) {
            // Oracle: conjugating the world rotation by the Z flip.
            let v = vec3(vx, vy, vz);
            let expected = flip() * rot_matrix(&q) * flip() * v;
            let ned = PoseNed::new(Vec3::zeros(), ue_to_ned_quat(&q).unwrap());
            prop_assert!((ned.rotate_to_world(&v) - expected).norm() < 1e-12);
        }

        #[test]
        fn co_register_matches_direct_transform(
            sx in finite_coord(), sy in finite_coord(), sz in 0.0..1.0e5f64,
            mx in -5.0e4..5.0e4f64, my in -5.0e4..5.0e4f64, mz in -5.0e3..5.0e3f64,
        ) {
            // A drone spawned anywhere, whose own NED frame starts at its spawn.
            let o = Vec3::zeros();
            let spawn = PoseUe::at(vec3(sx, sy, sz));
            let d = compute_origin_offset(&spawn, &PoseNed::origin(), &o).unwrap();
            let moved = spawn.position + vec3(mx, my, mz);
            let local = ue_to_ned_position(&moved, &spawn.position).unwrap();
            let shared = co_register(&local, &d);
            let direct = ue_to_ned_position(&moved, &o).unwrap();
            prop_assert!((shared - direct).norm() < 1e-9);
        }
    }
}
