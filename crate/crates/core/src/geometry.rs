//! Planar points and polyline utilities.

use std::ops;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product; `det[self o]`.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }

    /// Rotate by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl ops::Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Distance from `p` to a polyline (segments between consecutive vertices).
pub fn point_polyline_distance(p: Vec2, line: &[Vec2]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => p.dist(line[0]),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Bounding-box tree over consecutive segments of a polyline.
pub struct PolylineIndex<'a> {
    line: &'a [Vec2],
    nodes: Vec<Node>,
}

struct Node {
    lo: Vec2,
    hi: Vec2,
    /// Segment range `first..last` (segment `j` joins vertices `j`, `j + 1`).
    first: usize,
    last: usize,
    children: Option<(usize, usize)>,
}

const LEAF: usize = 8;

impl<'a> PolylineIndex<'a> {
    pub fn new(line: &'a [Vec2]) -> Self {
        let mut tree = PolylineIndex {
            line,
            nodes: Vec::new(),
        };
        if line.len() >= 2 {
            tree.build(0, line.len() - 1);
        }
        tree
    }

    fn build(&mut self, first: usize, last: usize) -> usize {
        let (mut lo, mut hi) = (self.line[first], self.line[first]);
        for p in &self.line[first..=last] {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            first,
            last,
            children: None,
        });
        if last - first > LEAF {
            let mid = first + (last - first) / 2;
            let l = self.build(first, mid);
            let r = self.build(mid, last);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn box_distance(&self, id: usize, p: Vec2) -> f64 {
        let n = &self.nodes[id];
        let dx = (n.lo.x - p.x).max(p.x - n.hi.x).max(0.0);
        let dy = (n.lo.y - p.y).max(p.y - n.hi.y).max(0.0);
        dx.hypot(dy)
    }

    /// Distance from `p` to the polyline.
    pub fn distance(&self, p: Vec2) -> f64 {
        self.distance_below(p, 0.0)
    }

    /// Distance from `p` to the polyline, except that any value below
    /// `good_enough` may be returned as soon as one is found.
    pub fn distance_below(&self, p: Vec2, good_enough: f64) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return self.line.first().map_or(best, |q| p.dist(*q));
        }
        let mut stack = vec![(0usize, self.box_distance(0, p))];
        while let Some((id, d)) = stack.pop() {
            if d >= best {
                continue;
            }
            let n = &self.nodes[id];
            match n.children {
                None => {
                    for j in n.first..n.last {
                        best = best.min(point_segment_distance(p, self.line[j], self.line[j + 1]));
                    }
                    if best < good_enough {
                        return best;
                    }
                }
                Some((l, r)) => {
                    let (dl, dr) = (self.box_distance(l, p), self.box_distance(r, p));
                    // nearer child on top of the stack
                    if dl <= dr {
                        stack.extend([(r, dr), (l, dl)]);
                    } else {
                        stack.extend([(l, dl), (r, dr)]);
                    }
                }
            }
        }
        best
    }
}

/// Shoelace area; positive for counterclockwise vertex order. The polygon
/// is closed implicitly.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * acc
}

/// Even-odd point-in-polygon test. The polygon is closed implicitly.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Returns the first pair of non-adjacent intersecting edges of a closed
/// polygon, found by a sweep over edges sorted by their left end.
pub fn first_self_intersection(poly: &[Vec2]) -> Option<(usize, usize)> {
    let n = poly.len();
    if n < 4 {
        return None;
    }
    let edge = |i: usize| (poly[i], poly[(i + 1) % n]);
    let mut order: Vec<usize> = (0..n).collect();
    let min_x = |i: usize| {
        let (a, b) = edge(i);
        a.x.min(b.x)
    };
    order.sort_by(|&i, &j| min_x(i).total_cmp(&min_x(j)));
    for (k, &i) in order.iter().enumerate() {
        let (a, b) = edge(i);
        let max_x = a.x.max(b.x);
        for &j in &order[k + 1..] {
            if min_x(j) > max_x {
                break;
            }
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            if adjacent {
                continue;
            }
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}

/// Total length of an open polyline.
pub fn polyline_length(line: &[Vec2]) -> f64 {
    line.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Axis-aligned bounding box `(min, max)`.
pub fn bounding_box(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Keep at most `max_points` vertices, always retaining both ends.
pub fn decimate(line: &[Vec2], max_points: usize) -> Vec<Vec2> {
    if line.len() <= max_points || max_points < 2 {
        return line.to_vec();
    }
    let n = line.len();
    (0..max_points)
        .map(|k| line[k * (n - 1) / (max_points - 1)])
        .collect()
}

/// Insert points so that no segment is longer than `max_len`.
pub fn densify(line: &[Vec2], max_len: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(line.len());
    for w in line.windows(2) {
        out.push(w[0]);
        let d = w[0].dist(w[1]);
        if d > max_len {
            let k = (d / max_len).ceil() as usize;
            for j in 1..k {
                out.push(w[0] + (w[1] - w[0]) * (j as f64 / k as f64));
            }
        }
    }
    if let Some(last) = line.last() {
        out.push(*last);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_and_containment() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_eq!(signed_area(&sq), 1.0);
        assert!(point_in_polygon(Vec2::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(Vec2::new(1.5, 0.5), &sq));
        assert!(first_self_intersection(&sq).is_none());
        let bow = [sq[0], sq[2], sq[1], sq[3]];
        assert!(first_self_intersection(&bow).is_some());
    }

    #[test]
    fn segment_projection() {
        let d = point_segment_distance(Vec2::new(0.5, 2.0), Vec2::ZERO, Vec2::new(1.0, 0.0));
        assert_eq!(d, 2.0);
        let d = point_segment_distance(Vec2::new(3.0, 4.0), Vec2::ZERO, Vec2::new(-1.0, 0.0));
        assert_eq!(d, 5.0);
    }
}
