//! Planar geometry in the x–z plane of the machine base frame.
//!
//! Polygons are plain vertex slices. Routines that need an orientation
//! expect counter-clockwise order (positive signed area with x to the right
//! and z up).

use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

#[inline]
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// `s * ẑ × v` for a scalar angular rate `s`.
#[inline]
pub fn cross_sv(s: f64, v: &Vec2) -> Vec2 {
    Vec2::new(-s * v.y, s * v.x)
}

/// Rotates `v` by +90°.
#[inline]
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn rotate(v: &Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub fn transform(points: &[Vec2], origin: &Vec2, angle: f64) -> Vec<Vec2> {
    points.iter().map(|p| origin + rotate(p, angle)).collect()
}

pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| cross(&poly[i], &poly[(i + 1) % n])).sum::<f64>() * 0.5
}

pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    let mut c = Vec2::zeros();
    let mut area2 = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let w = cross(&a, &b);
        area2 += w;
        c += (a + b) * w;
    }
    c / (3.0 * area2)
}

/// Polar second moment of area about the centroid (m⁴).
pub fn polar_moment(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let c = centroid(poly);
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i] - c;
        let b = poly[(i + 1) % n] - c;
        let w = cross(&a, &b);
        acc += w * (a.dot(&a) + a.dot(&b) + b.dot(&b));
    }
    (acc / 12.0).abs()
}

pub fn is_convex(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let sign = signed_area(poly).signum();
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        cross(&(b - a), &(c - b)) * sign >= 0.0
    })
}

fn segments_cross(p1: &Vec2, p2: &Vec2, q1: &Vec2, q2: &Vec2) -> bool {
    let d1 = cross(&(p2 - p1), &(q1 - p1));
    let d2 = cross(&(p2 - p1), &(q2 - p1));
    let d3 = cross(&(q2 - q1), &(p1 - q1));
    let d4 = cross(&(q2 - q1), &(p2 - q1));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// True when no two non-adjacent edges intersect.
pub fn is_simple(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(&poly[i], &poly[(i + 1) % n], &poly[j], &poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Even-odd point containment; works for concave polygons.
pub fn contains(poly: &[Vec2], p: &Vec2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Outward unit normal of edge `i` of a counter-clockwise polygon.
#[inline]
pub fn edge_normal(poly: &[Vec2], i: usize) -> Vec2 {
    let d = poly[(i + 1) % poly.len()] - poly[i];
    Vec2::new(d.y, -d.x).normalize()
}

/// A contact point between two convex polygons. `normal` points from the
/// first polygon towards the second; `separation` is negative when the
/// polygons overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub point: Vec2,
    pub normal: Vec2,
    pub separation: f64,
}

fn max_separation(a: &[Vec2], b: &[Vec2]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..a.len() {
        let n = edge_normal(a, i);
        let s = b
            .iter()
            .map(|v| n.dot(&(v - a[i])))
            .fold(f64::INFINITY, f64::min);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Separating-axis test with reference-face clipping for two convex,
/// counter-clockwise polygons. Returns up to two points whose separation is
/// below `margin`.
pub fn collide_convex(a: &[Vec2], b: &[Vec2], margin: f64) -> Vec<ContactPoint> {
    let (edge_a, sep_a) = max_separation(a, b);
    if sep_a > margin {
        return Vec::new();
    }
    let (edge_b, sep_b) = max_separation(b, a);
    if sep_b > margin {
        return Vec::new();
    }

    let (reference, incident, ref_edge, flip) = if sep_b > sep_a + 1e-4 {
        (b, a, edge_b, true)
    } else {
        (a, b, edge_a, false)
    };

    let n = edge_normal(reference, ref_edge);
    let v1 = reference[ref_edge];
    let v2 = reference[(ref_edge + 1) % reference.len()];

    // incident edge: the one most anti-parallel to the reference normal
    let inc = (0..incident.len())
        .min_by(|&i, &j| {
            let di = edge_normal(incident, i).dot(&n);
            let dj = edge_normal(incident, j).dot(&n);
            di.total_cmp(&dj)
        })
        .expect("polygon has edges");
    let mut seg = [incident[inc], incident[(inc + 1) % incident.len()]];

    let tangent = (v2 - v1).normalize();
    if !clip_segment(&mut seg, &(-tangent), -tangent.dot(&v1))
        || !clip_segment(&mut seg, &tangent, tangent.dot(&v2))
    {
        return Vec::new();
    }

    let normal = if flip { -n } else { n };
    seg.iter()
        .filter_map(|p| {
            let separation = n.dot(&(p - v1));
            (separation <= margin).then_some(ContactPoint {
                point: *p,
                normal,
                separation,
            })
        })
        .collect()
}

/// Keeps the part of `seg` with `dir · p <= offset`.
fn clip_segment(seg: &mut [Vec2; 2], dir: &Vec2, offset: f64) -> bool {
    let d0 = dir.dot(&seg[0]) - offset;
    let d1 = dir.dot(&seg[1]) - offset;
    match (d0 <= 0.0, d1 <= 0.0) {
        (true, true) => true,
        (false, false) => false,
        _ => {
            let t = d0 / (d0 - d1);
            let p = seg[0] + (seg[1] - seg[0]) * t;
            if d0 > 0.0 {
                seg[0] = p;
            } else {
                seg[1] = p;
            }
            true
        }
    }
}

/// Penetration depth of two convex polygons along the axis of least overlap,
/// zero when they are apart.
pub fn penetration_depth(a: &[Vec2], b: &[Vec2]) -> f64 {
    let (_, sa) = max_separation(a, b);
    let (_, sb) = max_separation(b, a);
    (-sa.max(sb)).max(0.0)
}

/// Axis of least overlap oriented from `a` to `b`, with the overlap depth.
/// Moving `b` by `axis * depth` separates the polygons. `None` when apart.
pub fn minimum_translation(a: &[Vec2], b: &[Vec2]) -> Option<(Vec2, f64)> {
    let (ea, sa) = max_separation(a, b);
    let (eb, sb) = max_separation(b, a);
    if sa >= 0.0 || sb >= 0.0 {
        return None;
    }
    if sa >= sb {
        Some((edge_normal(a, ea), -sa))
    } else {
        Some((-edge_normal(b, eb), -sb))
    }
}

/// Lowest boundary point of `poly` over abscissa `x`, if the polygon spans it.
pub fn lower_envelope(poly: &[Vec2], x: f64) -> Option<f64> {
    let n = poly.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (lo, hi) = if a.x <= b.x { (a, b) } else { (b, a) };
        if x < lo.x || x > hi.x {
            continue;
        }
        let z = if hi.x - lo.x < 1e-12 {
            lo.y.min(hi.y)
        } else {
            lo.y + (hi.y - lo.y) * (x - lo.x) / (hi.x - lo.x)
        };
        best = Some(best.map_or(z, |m: f64| m.min(z)));
    }
    best
}
