//! Convex polygon area and clipping in the ground plane.

pub type Point2 = [f64; 2];

/// Signed shoelace area, positive for counter-clockwise vertices.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

pub fn area(poly: &[Point2]) -> f64 {
    signed_area(poly).abs()
}

fn ccw(poly: &[Point2]) -> Vec<Point2> {
    let mut p = poly.to_vec();
    if signed_area(&p) < 0.0 {
        p.reverse();
    }
    p
}

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Sutherland–Hodgman clip of `subject` by a convex `clip` polygon.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let clip = ccw(clip);
    let mut out = ccw(subject);
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

pub fn intersection_area(a: &[Point2], b: &[Point2]) -> f64 {
    area(&clip_convex(a, b))
}

/// Axis-aligned square cell `[x0, x0 + s) × [y0, y0 + s)` as a polygon.
pub fn square(x0: f64, y0: f64, s: f64) -> [Point2; 4] {
    [[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]
}
