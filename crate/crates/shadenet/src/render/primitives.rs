//! Ray intersections for the three primitive shapes.

use super::math::{vec3, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Surface hit. The normal is unit length and faces the ray origin
/// (primitives are two-sided).
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Aabb { min: Vec3, max: Vec3 },
    Quad { origin: Vec3, edge_u: Vec3, edge_v: Vec3 },
}

impl Shape {
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(ray.dir);
                let c = oc.length_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let mut t = -b - sq;
                if t <= t_min {
                    t = -b + sq;
                }
                if t <= t_min || t >= t_max {
                    return None;
                }
                let point = ray.at(t);
                let mut normal = (point - center) / radius;
                if normal.dot(ray.dir) > 0.0 {
                    normal = -normal;
                }
                Some(Hit { t, point, normal })
            }
            Shape::Aabb { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut near_axis = 0;
                let mut far_axis = 0;
                for a in 0..3 {
                    let inv = 1.0 / ray.dir.axis(a);
                    let mut t0 = (min.axis(a) - ray.origin.axis(a)) * inv;
                    let mut t1 = (max.axis(a) - ray.origin.axis(a)) * inv;
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    if t0 > t_near {
                        t_near = t0;
                        near_axis = a;
                    }
                    if t1 < t_far {
                        t_far = t1;
                        far_axis = a;
                    }
                }
                if t_near > t_far || t_far <= t_min {
                    return None;
                }
                let (t, axis) = if t_near > t_min {
                    (t_near, near_axis)
                } else {
                    (t_far, far_axis)
                };
                if t >= t_max {
                    return None;
                }
                let mut n = Vec3::ZERO;
                let sign = if ray.dir.axis(axis) > 0.0 { -1.0 } else { 1.0 };
                match axis {
                    0 => n.x = sign,
                    1 => n.y = sign,
                    _ => n.z = sign,
                }
                Some(Hit { t, point: ray.at(t), normal: n })
            }
            Shape::Quad { origin, edge_u, edge_v } => {
                let n0 = edge_u.cross(edge_v);
                let denom = ray.dir.dot(n0);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (origin - ray.origin).dot(n0) / denom;
                if t <= t_min || t >= t_max {
                    return None;
                }
                let rel = ray.at(t) - origin;
                let u = rel.dot(edge_u) / edge_u.length_squared();
                let v = rel.dot(edge_v) / edge_v.length_squared();
                if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                    return None;
                }
                let mut normal = n0.normalized();
                if normal.dot(ray.dir) > 0.0 {
                    normal = -normal;
                }
                Some(Hit { t, point: ray.at(t), normal })
            }
        }
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        match *self {
            Shape::Sphere { center, radius } => {
                let r = vec3(radius, radius, radius);
                (center - r, center + r)
            }
            Shape::Aabb { min, max } => (min, max),
            Shape::Quad { origin, edge_u, edge_v } => {
                let corners = [
                    origin,
                    origin + edge_u,
                    origin + edge_v,
                    origin + edge_u + edge_v,
                ];
                let mut lo = corners[0];
                let mut hi = corners[0];
                for c in &corners[1..] {
                    lo = lo.min(*c);
                    hi = hi.max(*c);
                }
                (lo, hi)
            }
        }
    }

    /// Uniformly scales the shape about the world origin.
    pub fn scaled(&self, s: f64) -> Shape {
        match *self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center * s,
                radius: radius * s,
            },
            Shape::Aabb { min, max } => Shape::Aabb { min: min * s, max: max * s },
            Shape::Quad { origin, edge_u, edge_v } => Shape::Quad {
                origin: origin * s,
                edge_u: edge_u * s,
                edge_v: edge_v * s,
            },
        }
    }
}
