//! Sign-exact geometric predicates on top of Shewchuk's adaptive arithmetic.

use robust::{Coord, Coord3D};

use crate::Point3;

fn c3(p: &Point3) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Positive iff `(b - a) . ((c - a) x (d - a)) > 0`, i.e. `abcd` has positive
/// volume. Only the sign is exact.
pub fn orient(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    -robust::orient3d(c3(a), c3(b), c3(c), c3(d))
}

/// For a positively oriented `abcd` (in the sense of [`orient`]): positive iff
/// `e` lies strictly inside the circumsphere. Only the sign is exact.
pub fn in_sphere(a: &Point3, b: &Point3, c: &Point3, d: &Point3, e: &Point3) -> f64 {
    -robust::insphere(c3(a), c3(b), c3(c), c3(d), c3(e))
}

/// True when the three points lie on one line, decided exactly through
/// the three axis-plane projections.
pub fn collinear(a: &Point3, b: &Point3, c: &Point3) -> bool {
    let o = |i: usize, j: usize| {
        robust::orient2d(
            Coord { x: a[i], y: a[j] },
            Coord { x: b[i], y: b[j] },
            Coord { x: c[i], y: c[j] },
        )
    };
    o(0, 1) == 0.0 && o(1, 2) == 0.0 && o(0, 2) == 0.0
}

/// Plain floating-point signed volume.
pub fn signed_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}
