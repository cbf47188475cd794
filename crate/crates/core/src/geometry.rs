//! Small geometric primitives shared by the scene ray-caster and the annotator.

use serde::{Deserialize, Serialize};

use crate::types::Class;

/// Box rotated about the vertical axis by `yaw`, tagged with a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBox {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub class: Class,
    #[serde(default = "default_reflectance")]
    pub reflectance: f64,
}

fn default_reflectance() -> f64 {
    0.5
}

impl SceneBox {
    /// Point expressed in the box frame (centered, yaw removed).
    fn to_local(&self, p: &[f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    }

    fn dir_to_local(&self, d: &[f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    }

    /// Inside the box grown by `margin` on every side; the boundary counts as inside.
    pub fn contains(&self, p: &[f64; 3], margin: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k].abs() <= self.half_extents[k] + margin)
    }

    /// Smallest `t > 0` where `origin + t * dir` enters the box (slab test).
    pub fn ray_hit(&self, origin: &[f64; 3], dir: &[f64; 3]) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..3 {
            let h = self.half_extents[k];
            if d[k] == 0.0 {
                if o[k].abs() > h {
                    return None;
                }
                continue;
            }
            let t1 = (-h - o[k]) / d[k];
            let t2 = (h - o[k]) / d[k];
            let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(a);
            t_far = t_far.min(b);
            if t_near > t_far {
                return None;
            }
        }
        if t_far <= 0.0 {
            None
        } else if t_near > 0.0 {
            Some(t_near)
        } else {
            // origin inside the box
            Some(t_far)
        }
    }

    pub fn is_valid(&self) -> bool {
        self.half_extents.iter().all(|&h| h > 0.0 && h.is_finite())
            && self.center.iter().all(|c| c.is_finite())
            && self.yaw.is_finite()
            && (0.0..=1.0).contains(&self.reflectance)
    }
}

/// Plane `{p : normal . p + offset = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &[f64; 3]) -> f64 {
        dot(&self.normal, p) + self.offset
    }

    pub fn ray_hit(&self, origin: &[f64; 3], dir: &[f64; 3]) -> Option<f64> {
        let denom = dot(&self.normal, dir);
        if denom == 0.0 {
            return None;
        }
        let t = -self.signed_distance(origin) / denom;
        (t > 0.0).then_some(t)
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Even-odd containment test. Points on an edge or vertex count as inside.
/// The caller guarantees at least three vertices.
pub(crate) fn polygon_contains(xy: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        if on_segment(xy, poly[i], poly[(i + 1) % n]) {
            return true;
        }
    }
    let (x, y) = (xy[0], xy[1]);
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let scale = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).max(1.0);
    orient(a, b, p).abs() <= 1e-12 * scale * scale
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    on_segment(c, a, b) || on_segment(d, a, b) || on_segment(a, c, d) || on_segment(b, c, d)
}

/// At least three finite vertices, non-zero area, and no two non-adjacent edges touching.
pub(crate) fn polygon_is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 || poly.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return false;
    }
    let mut area2 = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        area2 += a[0] * b[1] - b[0] * a[1];
        if a == b {
            return false;
        }
    }
    if area2 == 0.0 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> SceneBox {
        SceneBox {
            center: [10.0, 0.0, 0.0],
            half_extents: [1.0, 1.0, 1.0],
            yaw: 0.0,
            class: Class::Car,
            reflectance: 0.4,
        }
    }

    #[test]
    fn ray_hits_front_face() {
        let t = unit_box().ray_hit(&[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert!((t - 9.0).abs() < 1e-12);
        assert_eq!(unit_box().ray_hit(&[0.0; 3], &[-1.0, 0.0, 0.0]), None);
        assert_eq!(unit_box().ray_hit(&[0.0, 5.0, 0.0], &[1.0, 0.0, 0.0]), None);
    }

    #[test]
    fn yawed_box_containment() {
        let mut b = unit_box();
        b.half_extents = [2.0, 0.5, 1.0];
        b.yaw = std::f64::consts::FRAC_PI_2;
        assert!(b.contains(&[10.0, 1.9, 0.0], 0.0));
        assert!(!b.contains(&[11.9, 0.0, 0.0], 0.0));
        assert!(b.contains(&[10.55, 0.0, 0.0], 0.1));
    }

    #[test]
    fn simple_polygons() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(polygon_is_simple(&sq));
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(!polygon_is_simple(&bowtie));
        assert!(!polygon_is_simple(&sq[..2]));
        assert!(!polygon_is_simple(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]));
    }
}
