use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3, Vector6};

use super::Point;

/// Wraps an angle into (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = (a + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Rigid transform from the scan frame into the map frame.
///
/// Rotation is `Rz(yaw) · Ry(pitch) · Rx(roll)`, applied before the translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(tx: f64, ty: f64, tz: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Pose {
            tx,
            ty,
            tz,
            roll: normalize_angle(roll),
            pitch: normalize_angle(pitch),
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    /// Planar shift with no rotation.
    pub fn shift(x: f64, y: f64) -> Self {
        Pose::new(x, y, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Pose::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    /// Parameter vector `(tx, ty, tz, roll, pitch, yaw)`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.tx, self.ty, self.tz, self.roll, self.pitch, self.yaw)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }

    pub fn position(&self) -> Point {
        Point {
            x: self.tx,
            y: self.ty,
            z: self.tz,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rot_z(self.yaw) * rot_y(self.pitch) * rot_x(self.roll)
    }

    pub fn from_parts(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let pitch = (-rotation[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = rotation[(2, 1)].atan2(rotation[(2, 2)]);
        let yaw = rotation[(1, 0)].atan2(rotation[(0, 0)]);
        Pose::new(translation.x, translation.y, translation.z, roll, pitch, yaw)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let r = self.rotation();
        Pose::from_parts(
            &(r * other.rotation()),
            &(r * other.translation() + self.translation()),
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation().transpose();
        Pose::from_parts(&rt, &(-(rt * self.translation())))
    }

    pub fn transform(&self, p: &Point) -> Point {
        Point::from_vector(&(self.rotation() * p.to_vector() + self.translation()))
    }

    /// Euclidean distance between the two translations.
    pub fn position_error(&self, other: &Pose) -> f64 {
        (self.translation() - other.translation()).norm()
    }

    /// Largest absolute wrapped angle difference.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        [
            self.roll - other.roll,
            self.pitch - other.pitch,
            self.yaw - other.yaw,
        ]
        .iter()
        .map(|d| normalize_angle(*d).abs())
        .fold(0.0, f64::max)
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// First and second partial derivatives of the rotation matrix with respect to
/// `(roll, pitch, yaw)`.
#[derive(Debug, Clone)]
pub struct RotationDerivatives {
    pub rotation: Matrix3<f64>,
    /// `d R / d angle[k]`
    pub first: [Matrix3<f64>; 3],
    /// `d² R / d angle[i] d angle[j]`, symmetric in `(i, j)`.
    pub second: [[Matrix3<f64>; 3]; 3],
}

impl RotationDerivatives {
    pub fn new(pose: &Pose) -> Self {
        let (sr, cr) = pose.roll.sin_cos();
        let (sp, cp) = pose.pitch.sin_cos();
        let (sy, cy) = pose.yaw.sin_cos();

        let x = [
            rot_x(pose.roll),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, -sr, -cr, 0.0, cr, -sr),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, -cr, sr, 0.0, -sr, -cr),
        ];
        let y = [
            rot_y(pose.pitch),
            Matrix3::new(-sp, 0.0, cp, 0.0, 0.0, 0.0, -cp, 0.0, -sp),
            Matrix3::new(-cp, 0.0, -sp, 0.0, 0.0, 0.0, sp, 0.0, -cp),
        ];
        let z = [
            rot_z(pose.yaw),
            Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0),
            Matrix3::new(-cy, sy, 0.0, -sy, -cy, 0.0, 0.0, 0.0, 0.0),
        ];

        // order[k] = derivative order for (roll, pitch, yaw)
        let build = |o: [usize; 3]| z[o[2]] * y[o[1]] * x[o[0]];
        let first = [build([1, 0, 0]), build([0, 1, 0]), build([0, 0, 1])];
        let mut second = [[Matrix3::zeros(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut o = [0usize; 3];
                o[i] += 1;
                o[j] += 1;
                second[i][j] = build(o);
            }
        }
        RotationDerivatives {
            rotation: build([0, 0, 0]),
            first,
            second,
        }
    }
}
