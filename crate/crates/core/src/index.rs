//! Poincaré index of closed paths for a two-zone field.
//!
//! The angle of the active field is accumulated along the path. Where the
//! path crosses Σ the angle jumps from the incoming one-sided vector to the
//! outgoing one through the smallest angle, and the total divided by 2π is
//! the index.

use std::f64::consts::{PI, TAU};

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Var};
use crate::geometry::{
    bounding_box, first_self_intersection, point_in_polygon, signed_area, PolylineIndex, Vec2,
};
use crate::system::{NonSmoothSystem, PseudoKind, SigmaClass, SystemError, Which};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum IndexError {
    #[error("path needs at least three distinct vertices")]
    TooFewVertices,
    #[error("path is not simple: edges {0} and {1} intersect")]
    NotSimple(usize, usize),
    #[error("field vanishes on the path near ({}, {})", point.x + 0.0, point.y + 0.0)]
    FieldZero { point: Vec2 },
    #[error("antipodal jump at ({}, {}): smallest angle undefined", point.x + 0.0, point.y + 0.0)]
    AntipodalJump { point: Vec2 },
    #[error("path meets Σ at a {class} point ({}, {})", point.x + 0.0, point.y + 0.0)]
    SingularOnPath { point: Vec2, class: String },
    #[error("winding {raw} is not an integer")]
    NonInteger { raw: f64 },
    #[error("({}, {}) is not a critical point", point.x + 0.0, point.y + 0.0)]
    NotCritical { point: Vec2 },
    #[error("critical point ({}, {}) is not hyperbolic", point.x + 0.0, point.y + 0.0)]
    NonHyperbolic { point: Vec2 },
    #[error("index {winding} at ({}, {}) disagrees with its classification ({expected})", point.x + 0.0, point.y + 0.0)]
    Disagreement {
        point: Vec2,
        winding: i64,
        expected: i64,
    },
    #[error("no stable circle radius around ({}, {})", point.x + 0.0, point.y + 0.0)]
    NoStableRadius { point: Vec2 },
    #[error("could not build an offset path inside the cycle")]
    OffsetFailed,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Clone, Copy, Debug)]
pub struct IndexSettings {
    /// Initial samples along the whole path, before adaptive refinement.
    pub samples: usize,
    pub max_depth: u32,
    /// A jump within this of π is antipodal.
    pub antipodal_tol: f64,
    /// Relative margin from tangency and from pseudo-equilibria at crossings.
    pub singular_margin: f64,
    pub integer_tol: f64,
}

impl Default for IndexSettings {
    fn default() -> Self {
        IndexSettings {
            samples: 4096,
            max_depth: 40,
            antipodal_tol: 1e-9,
            singular_margin: 1e-6,
            integer_tol: 1e-6,
        }
    }
}

/// Simple closed polygonal path, stored with `first == last`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedPath {
    vertices: Vec<Vec2>,
}

impl ClosedPath {
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self, IndexError> {
        vertices.dedup();
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(IndexError::TooFewVertices);
        }
        if let Some((i, j)) = first_self_intersection(&vertices) {
            return Err(IndexError::NotSimple(i, j));
        }
        vertices.push(vertices[0]);
        Ok(ClosedPath { vertices })
    }

    /// Regular `n`-gon inscribed in the circle, counterclockwise.
    pub fn circle(center: Vec2, radius: f64, n: usize) -> Result<Self, IndexError> {
        let pts = (0..n.max(3))
            .map(|k| {
                let th = TAU * k as f64 / n.max(3) as f64;
                center + Vec2::new(th.cos(), th.sin()) * radius
            })
            .collect();
        ClosedPath::new(pts)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    fn ring(&self) -> &[Vec2] {
        &self.vertices[..self.vertices.len() - 1]
    }

    pub fn is_counterclockwise(&self) -> bool {
        signed_area(self.ring()) > 0.0
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        ClosedPath { vertices: v }
    }

    pub fn counterclockwise(self) -> Self {
        if self.is_counterclockwise() {
            self
        } else {
            self.reversed()
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        point_in_polygon(p, self.ring())
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = bounding_box(&self.vertices);
        lo.dist(hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Jump {
    pub point: Vec2,
    pub from: Which,
    pub to: Which,
    pub before: Vec2,
    pub after: Vec2,
    /// Signed smallest angle from `before` to `after`.
    pub jump: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteriorPoint {
    pub point: Vec2,
    pub kind: String,
    pub index: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexReport {
    pub index: i64,
    #[serde(skip)]
    pub total_angle: f64,
    pub jumps: Vec<Jump>,
    pub interior: Vec<InteriorPoint>,
}

fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn side(fv: f64) -> Which {
    if fv > 0.0 {
        Which::X1
    } else {
        Which::X2
    }
}

struct Walker<'a> {
    sys: &'a NonSmoothSystem,
    settings: &'a IndexSettings,
    scale: f64,
}

impl Walker<'_> {
    fn vector(&self, which: Which, q: Vec2) -> Result<Vec2, IndexError> {
        let v = self.sys.field(which, q)?;
        if v.norm() <= 1e-14 * self.scale {
            return Err(IndexError::FieldZero { point: q });
        }
        Ok(v)
    }

    /// Angle swept by `which` from `a` to `b`, refined until the pieces agree.
    fn sweep(
        &self,
        which: Which,
        a: Vec2,
        b: Vec2,
        va: Vec2,
        vb: Vec2,
        depth: u32,
    ) -> Result<f64, IndexError> {
        let d = wrap(vb.angle() - va.angle());
        let m = (a + b) * 0.5;
        let vm = self.vector(which, m)?;
        let (d1, d2) = (wrap(vm.angle() - va.angle()), wrap(vb.angle() - vm.angle()));
        if d.abs() < 0.5 * PI && (d1 + d2 - d).abs() < 1e-12 {
            return Ok(d1 + d2);
        }
        if depth >= self.settings.max_depth {
            return Err(IndexError::FieldZero { point: m });
        }
        Ok(self.sweep(which, a, m, va, vm, depth + 1)?
            + self.sweep(which, m, b, vm, vb, depth + 1)?)
    }

    fn crossing(&self, a: Vec2, b: Vec2, fa: f64) -> Result<Vec2, IndexError> {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let fm = self.sys.eval_f(a + (b - a) * mid)?;
            if fm == 0.0 {
                return Ok(a + (b - a) * mid);
            }
            if (fm > 0.0) == (fa > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(a + (b - a) * (0.5 * (lo + hi)))
    }

    fn check_crossing(&self, c: Vec2) -> Result<(), IndexError> {
        let class = self.sys.classify_point(c)?;
        let regular = matches!(
            class,
            SigmaClass::Sewing | SigmaClass::Sliding | SigmaClass::Escaping
        );
        let fc = self.sys.frame_components(c)?;
        let (x1, x2) = (self.sys.field(Which::X1, c)?, self.sys.field(Which::X2, c)?);
        let margin = self.settings.singular_margin;
        let near_tangency = fc.n1.abs() <= margin * x1.norm() || fc.n2.abs() <= margin * x2.norm();
        let near_pseudo =
            class != SigmaClass::Sewing && fc.det().abs() <= margin * x1.norm() * x2.norm();
        if !regular || near_tangency || near_pseudo {
            return Err(IndexError::SingularOnPath {
                point: c,
                class: class.label(),
            });
        }
        Ok(())
    }
}

/// Winding of the field along `path` with the smallest-angle jump rule at
/// Σ crossings.
pub fn angle_winding(
    sys: &NonSmoothSystem,
    path: &ClosedPath,
    settings: &IndexSettings,
) -> Result<IndexReport, IndexError> {
    let v = path.vertices();
    let perimeter: f64 = v.windows(2).map(|w| w[0].dist(w[1])).sum();
    let h = perimeter / settings.samples.max(16) as f64;
    let scale = v
        .iter()
        .map(|p| sys.field_at(*p).map(|x| x.norm()).unwrap_or(0.0))
        .fold(1e-300, f64::max);
    let walker = Walker {
        sys,
        settings,
        scale,
    };

    // samples with f values, closed
    let mut pts: Vec<(Vec2, f64)> = Vec::new();
    for w in v.windows(2) {
        let m = ((w[0].dist(w[1]) / h).ceil() as usize).max(1);
        for j in 0..m {
            let p = w[0] + (w[1] - w[0]) * (j as f64 / m as f64);
            pts.push((p, sys.eval_f(p)?));
        }
    }
    pts.push(pts[0]);
    // f == 0 at a sample counts as the side of the previous sample
    let mut signed: Vec<f64> = Vec::with_capacity(pts.len());
    let mut prev = pts
        .iter()
        .rev()
        .map(|p| p.1)
        .find(|f| *f != 0.0)
        .unwrap_or(1.0);
    for &(_, f) in &pts {
        let s = if f == 0.0 { prev } else { f };
        signed.push(s);
        prev = s;
    }

    let mut crossings: Vec<(usize, Vec2)> = Vec::new();
    for i in 0..pts.len() - 1 {
        if (signed[i] > 0.0) != (signed[i + 1] > 0.0) {
            let c = if pts[i].1 == 0.0 {
                pts[i].0
            } else {
                walker.crossing(pts[i].0, pts[i + 1].0, pts[i].1)?
            };
            walker.check_crossing(c)?;
            crossings.push((i, c));
        }
    }

    let mut total = 0.0;
    let mut jumps = Vec::new();
    if crossings.is_empty() {
        let which = side(signed[0]);
        let mut va = walker.vector(which, pts[0].0)?;
        for w in pts.windows(2) {
            let vb = walker.vector(which, w[1].0)?;
            total += walker.sweep(which, w[0].0, w[1].0, va, vb, 0)?;
            va = vb;
        }
    } else {
        let n = pts.len() - 1;
        let k = crossings.len();
        for idx in 0..k {
            let (i0, c0) = crossings[idx];
            let (i1, c1) = crossings[(idx + 1) % k];
            let which = side(signed[i0 + 1]);
            // c0, samples i0+1 ..= i1 (cyclically), c1
            let mut chain = vec![c0];
            let mut j = i0 + 1;
            let stop = if i1 > i0 { i1 } else { i1 + n };
            while j <= stop {
                chain.push(pts[j % n].0);
                j += 1;
            }
            chain.push(c1);
            let mut va = walker.vector(which, chain[0])?;
            for w in chain.windows(2) {
                if w[0] == w[1] {
                    continue;
                }
                let vb = walker.vector(which, w[1])?;
                total += walker.sweep(which, w[0], w[1], va, vb, 0)?;
                va = vb;
            }
            let next = which.other();
            let after = walker.vector(next, c1)?;
            let jump = wrap(after.angle() - va.angle());
            if jump.abs() >= PI - settings.antipodal_tol {
                return Err(IndexError::AntipodalJump { point: c1 });
            }
            total += jump;
            jumps.push(Jump {
                point: c1,
                from: which,
                to: next,
                before: va,
                after,
                jump,
            });
        }
        // report jumps in path order starting from the first crossing
        jumps.rotate_right(1);
    }

    let raw = total / TAU;
    if (raw - raw.round()).abs() > settings.integer_tol {
        return Err(IndexError::NonInteger { raw });
    }
    Ok(IndexReport {
        index: raw.round() as i64,
        total_angle: total,
        jumps,
        interior: Vec::new(),
    })
}

// -- critical points ---------------------------------------------------------------

fn jacobian(exprs: &[Expr; 2]) -> [[Expr; 2]; 2] {
    [
        [
            exprs[0].differentiate(Var::X),
            exprs[0].differentiate(Var::Y),
        ],
        [
            exprs[1].differentiate(Var::X),
            exprs[1].differentiate(Var::Y),
        ],
    ]
}

fn eval_jacobian(j: &[[Expr; 2]; 2], q: Vec2) -> Result<[[f64; 2]; 2], EvalError> {
    Ok([
        [j[0][0].eval(q.x, q.y)?, j[0][1].eval(q.x, q.y)?],
        [j[1][0].eval(q.x, q.y)?, j[1][1].eval(q.x, q.y)?],
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularityIndex {
    pub point: Vec2,
    pub kind: String,
    pub index: i64,
    pub radius: f64,
}

/// Expected index and label of a critical point from its linearization
/// (equilibria) or its pseudo-equilibrium kind (points of Σ).
fn classify_critical(sys: &NonSmoothSystem, p: Vec2) -> Result<(i64, String), IndexError> {
    let fp = sys.eval_f(p)?;
    if fp.abs() <= sys.tol.on_manifold * (1.0 + p.norm()) {
        return match sys.classify_point(p)? {
            SigmaClass::PseudoEquilibrium(PseudoKind::SigmaSaddle) => {
                Ok((-1, "sigma-saddle".into()))
            }
            SigmaClass::PseudoEquilibrium(PseudoKind::SigmaAttractor) => {
                Ok((1, "sigma-attractor".into()))
            }
            SigmaClass::PseudoEquilibrium(PseudoKind::SigmaRepeller) => {
                Ok((1, "sigma-repeller".into()))
            }
            SigmaClass::PseudoEquilibrium(PseudoKind::NonHyperbolic) => {
                Err(IndexError::NonHyperbolic { point: p })
            }
            _ => Err(IndexError::NotCritical { point: p }),
        };
    }
    let which = side(fp);
    let v = sys.field(which, p)?;
    let j = eval_jacobian(&jacobian(sys.field_exprs(which)), p)?;
    let jn = j.iter().flatten().map(|a| a.abs()).fold(0.0, f64::max);
    if v.norm() > 1e-8 * (1.0 + jn * (1.0 + p.norm())) {
        return Err(IndexError::NotCritical { point: p });
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let tr = j[0][0] + j[1][1];
    let tiny = 1e-9 * (1.0 + jn * jn);
    if det.abs() <= tiny || (det > 0.0 && tr.abs() <= tiny) {
        return Err(IndexError::NonHyperbolic { point: p });
    }
    let name = if det < 0.0 {
        "saddle"
    } else if tr * tr < 4.0 * det {
        "focus"
    } else {
        "node"
    };
    Ok((
        if det < 0.0 { -1 } else { 1 },
        format!("{name} of {which:?}"),
    ))
}

/// Index of a hyperbolic equilibrium or pseudo-equilibrium from the winding
/// on small circles, cross-checked against its classification.
pub fn index_of_singularity(
    sys: &NonSmoothSystem,
    p: Vec2,
    settings: &IndexSettings,
) -> Result<SingularityIndex, IndexError> {
    let (expected, kind) = classify_critical(sys, p)?;
    let fp = sys.eval_f(p)?;
    let mut r: f64 = 1e-2;
    if fp.abs() > sys.tol.on_manifold * (1.0 + p.norm()) {
        // keep the circle inside the open region of p
        r = r.min(0.5 * fp.abs() / sys.grad_f(p)?.norm().max(1e-300));
    }
    let mut prev: Option<i64> = None;
    for _ in 0..30 {
        let path = ClosedPath::circle(p, r, 64)?;
        match angle_winding(sys, &path, settings) {
            Ok(rep) => {
                if prev == Some(rep.index) {
                    if rep.index != expected {
                        return Err(IndexError::Disagreement {
                            point: p,
                            winding: rep.index,
                            expected,
                        });
                    }
                    return Ok(SingularityIndex {
                        point: p,
                        kind,
                        index: rep.index,
                        radius: 2.0 * r,
                    });
                }
                prev = Some(rep.index);
            }
            Err(IndexError::Eval(e)) => return Err(IndexError::Eval(e)),
            Err(_) => prev = None,
        }
        r *= 0.5;
    }
    Err(IndexError::NoStableRadius { point: p })
}

fn newton(exprs: &[Expr; 2], jac: &[[Expr; 2]; 2], mut q: Vec2) -> Option<Vec2> {
    for _ in 0..60 {
        let v = Vec2::new(exprs[0].eval(q.x, q.y).ok()?, exprs[1].eval(q.x, q.y).ok()?);
        let j = eval_jacobian(jac, q).ok()?;
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let step = Vec2::new(
            (j[1][1] * v.x - j[0][1] * v.y) / det,
            (j[0][0] * v.y - j[1][0] * v.x) / det,
        );
        q = q - step;
        if !q.is_finite() {
            return None;
        }
        if step.norm() <= 1e-13 * (1.0 + q.norm()) {
            return Some(q);
        }
    }
    None
}

/// Interior census of a cycle and the index balance over it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexBalance {
    /// Winding on the inward offset path.
    pub winding: i64,
    pub offset: f64,
    /// The counterclockwise inward offset path the winding was taken on.
    #[serde(skip)]
    pub path: ClosedPath,
    pub interior: Vec<InteriorPoint>,
    pub index_sum: i64,
    pub saddles: usize,
    pub non_saddles: usize,
    /// Interior sum equals the winding; otherwise the census missed a point.
    pub census_complete: bool,
    /// Sum and winding both equal one.
    pub holds: bool,
}

/// A region whose critical points are all saddles (or that has none)
/// cannot bound a canard cycle, since its index sum is not one.
pub fn rules_out_canard_cycles(points: &[InteriorPoint]) -> bool {
    points.iter().all(|p| p.index == -1)
}

/// Path inside the counterclockwise `ring`, at distance about `eta`.
fn inward_offset(ring: &[Vec2], eta: f64) -> Result<ClosedPath, IndexError> {
    let n = ring.len();
    let mut closed = ring.to_vec();
    closed.push(ring[0]);
    let boundary = PolylineIndex::new(&closed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = ring[(i + 1) % n] - ring[(i + n - 1) % n];
        if t.norm() == 0.0 {
            continue;
        }
        let q = ring[i] + t.normalized().perp() * eta;
        if boundary.distance(q) > 0.5 * eta && point_in_polygon(q, ring) {
            out.push(q);
        }
    }
    let max_vertices = 4000;
    if out.len() > max_vertices {
        let step = out.len().div_ceil(max_vertices);
        out = out.into_iter().step_by(step).collect();
    }
    // cut off loops left by concave corners
    for _ in 0..1000 {
        match first_self_intersection(&out) {
            None => return ClosedPath::new(out),
            Some((i, j)) => {
                if j - i <= out.len() / 2 {
                    out.drain(i + 1..=j);
                } else {
                    out.truncate(j + 1);
                    out.drain(..=i);
                }
                if out.len() < 3 {
                    return Err(IndexError::OffsetFailed);
                }
            }
        }
    }
    Err(IndexError::OffsetFailed)
}

/// Critical points strictly inside the polygon `ring` with their indices:
/// equilibria of `Xi` in its own region, located by Newton from a 50×50
/// grid over the bounding box, and pseudo-equilibria farther than `margin`
/// from the boundary.
pub fn interior_census(
    sys: &NonSmoothSystem,
    ring: &[Vec2],
    margin: f64,
    settings: &IndexSettings,
) -> Result<Vec<InteriorPoint>, IndexError> {
    let mut ring = ring.to_vec();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    let (lo, hi) = bounding_box(&ring);
    let diameter = lo.dist(hi);
    let mut found: Vec<Vec2> = Vec::new();
    let dedup = 1e-7 * (1.0 + diameter);
    let grid = 50;
    for which in [Which::X1, Which::X2] {
        let exprs = sys.field_exprs(which);
        let jac = jacobian(exprs);
        for i in 0..grid {
            for j in 0..grid {
                let seed = Vec2::new(
                    lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / grid as f64,
                    lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / grid as f64,
                );
                let Some(q) = newton(exprs, &jac, seed) else {
                    continue;
                };
                let Ok(fq) = sys.eval_f(q) else { continue };
                let own_side =
                    fq.abs() > sys.tol.on_manifold * (1.0 + q.norm()) && side(fq) == which;
                if own_side && point_in_polygon(q, &ring) && found.iter().all(|p| p.dist(q) > dedup)
                {
                    found.push(q);
                }
            }
        }
    }
    let range = match sys.sigma_period() {
        Some(period) => [0.0, period],
        None => {
            let s: Vec<f64> = [lo, hi, Vec2::new(lo.x, hi.y), Vec2::new(hi.x, lo.y)]
                .iter()
                .filter_map(|c| sys.sigma_param(*c).ok())
                .collect();
            let a = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let b = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            [a, b]
        }
    };
    let mut closed = ring.clone();
    closed.push(ring[0]);
    let boundary = PolylineIndex::new(&closed);
    if range[0] < range[1] {
        for pe in sys.pseudo_equilibria(range[0], range[1]) {
            let q = pe.point;
            if point_in_polygon(q, &ring)
                && boundary.distance(q) > margin
                && found.iter().all(|p| p.dist(q) > dedup)
            {
                found.push(q);
            }
        }
    }

    let mut interior = Vec::with_capacity(found.len());
    for q in found {
        let s = index_of_singularity(sys, q, settings)?;
        interior.push(InteriorPoint {
            point: q,
            kind: s.kind,
            index: s.index,
        });
    }
    interior.sort_by(|a, b| {
        a.point
            .x
            .total_cmp(&b.point.x)
            .then(a.point.y.total_cmp(&b.point.y))
    });
    Ok(interior)
}

/// Winding on an inward offset of `cycle` against the index sum of the
/// critical points it encloses (equilibria located by Newton from a 50×50
/// grid and pseudo-equilibria on the enclosed part of Σ).
pub fn index_balance(
    sys: &NonSmoothSystem,
    cycle: &[Vec2],
    settings: &IndexSettings,
) -> Result<IndexBalance, IndexError> {
    let mut ring = cycle.to_vec();
    ring.dedup();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(IndexError::TooFewVertices);
    }
    if signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    let (lo, hi) = bounding_box(&ring);
    let diameter = lo.dist(hi);
    let eta = 1e-3 * diameter;
    let path = inward_offset(&ring, eta)?;
    let winding = angle_winding(sys, &path, settings)?.index;

    let interior = interior_census(sys, &ring, eta, settings)?;
    let index_sum = interior.iter().map(|p| p.index).sum();
    let saddles = interior.iter().filter(|p| p.index == -1).count();
    Ok(IndexBalance {
        winding,
        offset: eta,
        path,
        non_saddles: interior.len() - saddles,
        saddles,
        census_complete: index_sum == winding,
        holds: index_sum == 1 && winding == 1,
        index_sum,
        interior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(x: &str, y: &str) -> NonSmoothSystem {
        NonSmoothSystem::parse([x, y], [x, y], "y - 100").unwrap()
    }

    fn unit_circle() -> ClosedPath {
        ClosedPath::circle(Vec2::new(0.0, 0.0), 1.0, 100).unwrap()
    }

    #[test]
    fn saddle_and_focus() {
        let s = IndexSettings::default();
        assert_eq!(
            angle_winding(&smooth("x", "-y"), &unit_circle(), &s)
                .unwrap()
                .index,
            -1
        );
        assert_eq!(
            angle_winding(&smooth("x - y", "x + y"), &unit_circle(), &s)
                .unwrap()
                .index,
            1
        );
        let rev = unit_circle().reversed();
        assert_eq!(
            angle_winding(&smooth("x", "-y"), &rev, &s).unwrap().index,
            1
        );
    }

    #[test]
    fn circle_system_winding() {
        let sys = NonSmoothSystem::parse(["-x-y", "x-y"], ["x-y", "x+y"], "x^2+y^2-1").unwrap();
        let path = ClosedPath::circle(Vec2::new(0.0, 0.0), 1.001, 256).unwrap();
        let rep = angle_winding(&sys, &path, &IndexSettings::default()).unwrap();
        assert_eq!(rep.index, 1);
        assert!(rep.jumps.is_empty());
    }

    #[test]
    fn self_intersecting_path_rejected() {
        let bow = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(matches!(
            ClosedPath::new(bow),
            Err(IndexError::NotSimple(..))
        ));
    }

    #[test]
    fn pseudo_equilibria_indices() {
        let sys =
            NonSmoothSystem::parse(["x+y-1", "-x+y-1"], ["-x^2+1.5*x-0.5+0.25", "1"], "y").unwrap();
        let pes = sys.pseudo_equilibria(-0.9, 5.0);
        assert_eq!(pes.len(), 2);
        let s = IndexSettings::default();
        let mut seen = Vec::new();
        for pe in pes {
            let r = index_of_singularity(&sys, pe.point, &s).unwrap();
            seen.push((r.kind.clone(), r.index));
        }
        seen.sort();
        assert_eq!(
            seen,
            vec![
                ("sigma-attractor".to_string(), 1),
                ("sigma-saddle".to_string(), -1)
            ]
        );
    }

    #[test]
    fn focus_index() {
        let sys = NonSmoothSystem::parse(["x+y-1", "-x+y-1"], ["1", "1"], "y").unwrap();
        let r = index_of_singularity(&sys, Vec2::new(0.0, 1.0), &IndexSettings::default()).unwrap();
        assert_eq!(r.index, 1);
        assert!(r.kind.starts_with("focus"));
    }

    #[test]
    fn canard_interior_balance() {
        let sys =
            NonSmoothSystem::parse(["x+y-1", "-x+y-1"], ["-x^2+1.5*x-0.5-0.25", "1"], "y").unwrap();
        let rep =
            crate::canard::detect_canard_one_fold(&sys, [-5.0, 5.0], &Default::default()).unwrap();
        let cycle = rep.cycle.unwrap().polyline();
        let b = index_balance(&sys, &cycle, &IndexSettings::default()).unwrap();
        assert_eq!(b.winding, 1);
        assert_eq!(b.index_sum, 1);
        assert!(b.holds && b.census_complete);
        assert_eq!((b.saddles, b.non_saddles), (0, 1));
    }

    #[test]
    fn circle_interior_balance() {
        let sys = NonSmoothSystem::parse(["-x-y", "x-y"], ["x-y", "x+y"], "x^2+y^2-1").unwrap();
        let ring = ClosedPath::circle(Vec2::new(0.0, 0.0), 1.0, 720).unwrap();
        let b = index_balance(&sys, ring.vertices(), &IndexSettings::default()).unwrap();
        assert!(b.holds, "{b:?}");
        assert_eq!(b.interior.len(), 1);
        assert!(b.interior[0].kind.contains("X2"));
    }
}
