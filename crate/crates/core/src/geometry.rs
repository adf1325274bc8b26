//! Small vector helpers shared by every stage.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Closest point to `p` on the line through `origin` with unit direction `dir`.
pub fn nearest_point_on_line(p: &Vec3, origin: &Vec3, dir: &Vec3) -> Vec3 {
    origin + dir * (p - origin).dot(dir)
}

pub fn point_to_line_distance(p: &Vec3, origin: &Vec3, dir: &Vec3) -> f64 {
    (p - nearest_point_on_line(p, origin, dir)).norm()
}

/// Unsigned angle between two vectors in radians. Uses `atan2` so that tiny
/// angles keep full relative precision.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Two unit vectors completing `n` (assumed unit) to a right-handed basis.
pub fn perpendicular_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

pub fn parse_triple(text: &str) -> Option<Vec3> {
    let mut it = text.split_whitespace().map(str::parse::<f64>);
    let v = Vec3::new(it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?);
    if it.next().is_some() || !v.iter().all(|c| c.is_finite()) {
        return None;
    }
    Some(v)
}
