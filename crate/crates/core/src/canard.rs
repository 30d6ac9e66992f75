//! Canard cycles: detection for a single visible fold, classification into
//! kinds I/II/III, hyperbolicity, and the Σ-loop scan of one-parameter
//! families.
//!
//! Detection runs two independent computations on the fold-to-return
//! interval `[A, B]`:
//!
//! * the structural route checks that the arc is focal, that
//!   `L1·L2 < 0` on `(A, B]` and that `det[X1 X2]` keeps its sign with
//!   `|det|` above a threshold, local minima refined by golden section;
//! * the direction-function route checks that `H` is defined on `[A, B]`
//!   and has no zeros there (sign changes and touching zeros).
//!
//! The two verdicts must coincide; both are reported.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::flow::{
    arc_kind, hybrid_orbit_to_section, ArcKind, FlowError, FlowSettings, Regime, Section,
    TerminalEvent,
};
use crate::geometry::{self, Vec2};
use crate::io::{Cell, CsvTable};
use crate::roots::{self, Multiplicity, ScanSettings};
use crate::system::{NonSmoothSystem, PseudoEquilibrium, SigmaClass, SystemError, Which};

/// Samples of `H` on the fold-to-return interval.
pub const H_SAMPLES: usize = 2000;
/// Threshold factor of the linear-independence test.
pub const INDEPENDENCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CanardKind {
    I,
    II,
    III,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CanardError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("expected exactly one fold on the window [{}, {}], found {count}", window[0], window[1])]
    FoldCount { count: usize, window: [f64; 2] },
    #[error("the fold at ({}, {}) is not visible", point.x + 0.0, point.y + 0.0)]
    InvisibleFold { point: Vec2 },
    #[error("junction {index} at ({}, {}) violates the transition rules: {reason}", point.x + 0.0, point.y + 0.0)]
    Junction {
        index: usize,
        point: Vec2,
        reason: String,
    },
    #[error("cycle is not closed (gap {gap:e})")]
    NotClosed { gap: f64 },
    #[error("cycle does not match any canard kind: {0}")]
    Unclassifiable(String),
    #[error("return map undefined: {0}")]
    ReturnMap(String),
}

/// A piece of a cycle traversed in one regime.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub regime: Regime,
    pub points: Vec<Vec2>,
}

/// Closed curve made of regime-tagged segments; each segment starts where
/// the previous one ends and the last ends at the first start.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanardCycle {
    pub segments: Vec<Segment>,
}

impl CanardCycle {
    pub fn polyline(&self) -> Vec<Vec2> {
        let mut out: Vec<Vec2> = Vec::new();
        for seg in &self.segments {
            let skip = usize::from(out.last().is_some_and(|p| seg.points.first() == Some(p)));
            out.extend_from_slice(&seg.points[skip..]);
        }
        out
    }

    /// Distance between the end of the last segment and the start of the first.
    pub fn closure_gap(&self) -> f64 {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => a.points[0].dist(*b.points.last().unwrap()),
            _ => f64::INFINITY,
        }
    }

    /// CSV with columns `x,y,regime`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["x", "y", "regime"]);
        for seg in &self.segments {
            for p in &seg.points {
                t.push(vec![
                    Cell::from(p.x),
                    Cell::from(p.y),
                    Cell::from(seg.regime.label()),
                ]);
            }
        }
        t
    }
}

/// Evidence for the hyperbolicity verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Certificate {
    /// Derivative of the first-return map on a transversal section.
    ReturnMap { multiplier: f64, section: Vec2 },
    /// Regions met by the non-sewing contacts of the cycle.
    Purity { sliding: bool, escaping: bool },
    /// The cycle is Σ itself.
    WholeManifold,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hyperbolicity {
    pub hyperbolic: bool,
    pub certificate: Certificate,
}

/// Verdicts of the two detection routes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdicts {
    pub focal: bool,
    /// `L1·L2 < 0` at every sample of `(A, B]`.
    pub transversal_product: bool,
    /// `det[X1 X2]` keeps its sign on `[A, B]` with `|det| > 1e-10·(1 + |X1||X2|)`
    /// at every sample and at every refined local minimum of `|det|`.
    pub independent: bool,
    /// Structural route: the three conditions above.
    pub structural: bool,
    /// `H` defined on `[A, B]`.
    pub h_defined: bool,
    /// `H` has no zero on `[A, B]`.
    pub h_zero_free: bool,
    /// Direction-function route.
    pub direction: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanardReport {
    pub found: bool,
    pub kind: Option<CanardKind>,
    pub cycle: Option<CanardCycle>,
    pub fold: Vec2,
    pub return_point: Vec2,
    /// Σ-parameter interval between the fold and the return point.
    pub interval: [f64; 2],
    pub hyperbolic: Option<Hyperbolicity>,
    pub verdicts: Verdicts,
    pub pseudo_equilibria: Vec<PseudoEquilibrium>,
    /// `(s, H(s))` on the interval; `NaN` where undefined.
    pub h_samples: Vec<[f64; 2]>,
    pub diagnostic: Option<String>,
}

fn sample_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == n {
                b
            } else {
                a + (b - a) * i as f64 / n as f64
            }
        })
        .collect()
}

fn describe_point(sys: &NonSmoothSystem, s: f64) -> String {
    match sys.sigma_point(s) {
        // adding 0.0 turns -0.0 into 0.0
        Ok(q) => format!("({:.6}, {:.6})", q.x + 0.0, q.y + 0.0),
        Err(_) => format!("s = {s:.6}"),
    }
}

/// Canard detection for a system with one visible fold in `window`.
pub fn detect_canard_one_fold(
    sys: &NonSmoothSystem,
    window: [f64; 2],
    settings: &FlowSettings,
) -> Result<CanardReport, CanardError> {
    let folds = sys.fold_census(window[0], window[1]);
    if folds.len() != 1 {
        return Err(CanardError::FoldCount {
            count: folds.len(),
            window,
        });
    }
    let fold = folds[0];
    if !fold.is_visible() {
        return Err(CanardError::InvisibleFold { point: fold.point });
    }
    let kind = arc_kind(sys, fold.point, settings)?;
    let which = kind.which;
    let a = fold.s;
    let b = sys.sigma_param(kind.return_point)?;
    let grid = sample_grid(a, b, H_SAMPLES);

    // structural route
    let focal = kind.kind == ArcKind::Focal;
    let mut transversal_product = true;
    let det_at = |s: f64| -> Option<(f64, f64)> {
        let q = sys.sigma_point(s).ok()?;
        let x1 = sys.field(Which::X1, q).ok()?;
        let x2 = sys.field(Which::X2, q).ok()?;
        Some((x1.cross(x2), INDEPENDENCE * (1.0 + x1.norm() * x2.norm())))
    };
    let mut dets = Vec::with_capacity(grid.len());
    for (i, &s) in grid.iter().enumerate() {
        let q = sys.sigma_point(s)?;
        if i > 0 {
            let p = sys.lie(Which::X1, q).map_err(SystemError::from)?
                * sys.lie(Which::X2, q).map_err(SystemError::from)?;
            transversal_product &= p < 0.0;
        }
        dets.push(det_at(s).unwrap_or((f64::NAN, 0.0)));
    }
    // constant sign at the samples, and every local minimum of |det|
    // refined and compared with the threshold
    let sign = dets[0].0.signum();
    let mut independent = dets.iter().all(|&(d, thr)| d * sign > thr);
    for i in 1..grid.len().saturating_sub(1) {
        if !independent {
            break;
        }
        let m = dets[i].0.abs();
        if m <= dets[i - 1].0.abs() && m <= dets[i + 1].0.abs() {
            let tol = 1e-14 * (1.0 + grid[i].abs());
            let (lo, hi) = (grid[i - 1].min(grid[i + 1]), grid[i - 1].max(grid[i + 1]));
            if let Some((s, _)) = roots::golden_min(|s| det_at(s).map(|d| d.0.abs()), lo, hi, tol) {
                let (d, thr) = det_at(s).unwrap_or((0.0, 1.0));
                independent &= d * sign > thr;
            }
        }
    }
    let structural = focal && transversal_product && independent;

    // direction-function route
    let h_at = |s: f64| sys.direction_on_slide(s);
    let h_samples: Vec<[f64; 2]> = grid
        .iter()
        .map(|&s| [s, h_at(s).unwrap_or(f64::NAN)])
        .collect();
    let h_defined = h_samples.iter().all(|p| p[1].is_finite());
    let (lo, hi) = (a.min(b), a.max(b));
    let pseudo_equilibria = sys.pseudo_equilibria(lo, hi);
    let zeros = roots::scan_zeros(
        h_at,
        |s| {
            sys.sigma_point(s)
                .ok()
                .and_then(|q| sys.direction_slope(q).ok())
        },
        lo,
        hi,
        ScanSettings {
            samples: H_SAMPLES,
            x_tol: 1e-12,
            double_tol: sys.tol.double_zero,
        },
    );
    let h_b = h_at(b);
    let b_zero = h_b.is_some_and(|h| h.abs() <= sys.tol.double_zero);
    let h_zero_free = h_defined && zeros.is_empty() && !b_zero;
    let direction = focal && h_defined && h_zero_free;

    let found = structural && direction;
    let diagnostic = if structural != direction {
        Some(format!(
            "detection routes disagree: structural {structural}, direction function {direction}"
        ))
    } else if !focal {
        Some(format!("arc from the fold is {:?}, not focal", kind.kind))
    } else if !h_defined {
        let bad = h_samples
            .iter()
            .find(|p| !p[1].is_finite())
            .map(|p| p[0])
            .unwrap_or(a);
        Some(format!("H is undefined at {}", describe_point(sys, bad)))
    } else if let Some(z) = zeros.first() {
        let what = match z.multiplicity {
            Multiplicity::Double => "a double zero",
            Multiplicity::Simple => "a zero",
        };
        Some(format!(
            "H has {what} at {} ({} zeros on the interval)",
            describe_point(sys, z.s),
            zeros.len()
        ))
    } else if b_zero {
        Some("H vanishes at the return point B".to_string())
    } else {
        None
    };

    let mut report = CanardReport {
        found,
        kind: None,
        cycle: None,
        fold: fold.point,
        return_point: kind.return_point,
        interval: [a, b],
        hyperbolic: None,
        verdicts: Verdicts {
            focal,
            transversal_product,
            independent,
            structural,
            h_defined,
            h_zero_free,
            direction,
        },
        pseudo_equilibria,
        h_samples,
        diagnostic,
    };
    if found {
        let mut arc_points = kind.arc.dense(0.05);
        *arc_points.first_mut().unwrap() = fold.point;
        *arc_points.last_mut().unwrap() = kind.return_point;
        let mut slide: Vec<Vec2> = Vec::with_capacity(H_SAMPLES + 1);
        for &s in grid.iter().rev() {
            slide.push(sys.sigma_point(s)?);
        }
        *slide.first_mut().unwrap() = kind.return_point;
        *slide.last_mut().unwrap() = fold.point;
        let cycle = CanardCycle {
            segments: vec![
                Segment {
                    regime: Regime::field(which),
                    points: arc_points,
                },
                Segment {
                    regime: Regime::Sliding,
                    points: slide,
                },
            ],
        };
        let k = classify_kind(sys, &cycle)?;
        report.hyperbolic = Some(is_hyperbolic(sys, &cycle, k, settings)?);
        report.kind = Some(k);
        report.cycle = Some(cycle);
    }
    Ok(report)
}

fn on_sigma(sys: &NonSmoothSystem, q: Vec2) -> bool {
    sys.eval_f(q)
        .is_ok_and(|v| v.abs() <= 1e-7 * (1.0 + q.norm()))
}

/// Region of a point of Σ from the signs of the Lie derivatives.
fn contact_region(sys: &NonSmoothSystem, q: Vec2) -> Option<SigmaClass> {
    let l1 = sys.lie(Which::X1, q).ok()?;
    let l2 = sys.lie(Which::X2, q).ok()?;
    if l1 < 0.0 && l2 > 0.0 {
        Some(SigmaClass::Sliding)
    } else if l1 > 0.0 && l2 < 0.0 {
        Some(SigmaClass::Escaping)
    } else if l1 * l2 > 0.0 {
        Some(SigmaClass::Sewing)
    } else {
        None
    }
}

/// Classify a closed tagged polyline after checking its junctions.
pub fn classify_kind(
    sys: &NonSmoothSystem,
    cycle: &CanardCycle,
) -> Result<CanardKind, CanardError> {
    let n = cycle.segments.len();
    if n == 0 || cycle.segments.iter().any(|s| s.points.is_empty()) {
        return Err(CanardError::Unclassifiable("empty cycle".into()));
    }
    let poly = cycle.polyline();
    let scale = 1.0 + geometry::bounding_box(&poly).1.norm();
    let gap = cycle.closure_gap();
    if gap > 1e-8 * scale {
        return Err(CanardError::NotClosed { gap });
    }

    let mut visible_fold = false;
    let mut non_sewing_contact = false;
    // field segments stay in their own closed half-plane
    for seg in &cycle.segments {
        let side = match seg.regime {
            Regime::X1 => 1.0,
            Regime::X2 => -1.0,
            Regime::Sliding => {
                non_sewing_contact = true;
                if let Some(p) = seg.points.iter().find(|p| !on_sigma(sys, **p)) {
                    return Err(CanardError::Unclassifiable(format!(
                        "sliding segment leaves Σ at ({}, {})",
                        p.x, p.y
                    )));
                }
                continue;
            }
        };
        for p in &seg.points {
            let v = sys.eval_f(*p).map_err(SystemError::from)?;
            if side * v < -1e-7 * (1.0 + p.norm()) {
                return Err(CanardError::Unclassifiable(format!(
                    "{} segment enters the other zone at ({}, {})",
                    seg.regime.label(),
                    p.x,
                    p.y
                )));
            }
        }
    }

    for i in 0..n {
        let (cur, next) = (&cycle.segments[i], &cycle.segments[(i + 1) % n]);
        let q = *cur.points.last().unwrap();
        let gap = q.dist(next.points[0]);
        if gap > 1e-8 * scale {
            return Err(CanardError::Junction {
                index: i,
                point: q,
                reason: format!("segments do not meet (gap {gap:e})"),
            });
        }
        if cur.regime == next.regime {
            continue;
        }
        let q = sys.project_to_sigma(q);
        let class = sys.classify_point(q).map_err(|e| CanardError::Junction {
            index: i,
            point: q,
            reason: e.to_string(),
        })?;
        if matches!(class, SigmaClass::FoldVisible(_)) {
            visible_fold = true;
        }
        let crossing = cur.regime != Regime::Sliding && next.regime != Regime::Sliding;
        let ok = if crossing {
            class == SigmaClass::Sewing
        } else {
            non_sewing_contact = true;
            matches!(
                class,
                SigmaClass::FoldVisible(_)
                    | SigmaClass::FoldInvisible(_)
                    | SigmaClass::Sliding
                    | SigmaClass::Escaping
            )
        };
        if !ok {
            return Err(CanardError::Junction {
                index: i,
                point: q,
                reason: format!(
                    "{} to {} transition at a {} point",
                    cur.regime.label(),
                    next.regime.label(),
                    class.label()
                ),
            });
        }
    }

    if cycle.segments.iter().all(|s| s.regime == Regime::Sliding) {
        return match sys.sigma_period() {
            Some(period) if (geometry::polyline_length(&poly) - period).abs() <= 1e-3 * period => {
                Ok(CanardKind::II)
            }
            Some(_) => Err(CanardError::Unclassifiable(
                "sliding cycle does not cover Σ".into(),
            )),
            None => Err(CanardError::Unclassifiable(
                "a cycle made only of sliding arcs needs a closed switching manifold".into(),
            )),
        };
    }
    if visible_fold {
        return Ok(CanardKind::III);
    }
    if !non_sewing_contact {
        return Ok(CanardKind::I);
    }
    Err(CanardError::Unclassifiable(
        "cycle slides along Σ without passing a visible fold".into(),
    ))
}

/// Hyperbolicity of a classified cycle.
pub fn is_hyperbolic(
    sys: &NonSmoothSystem,
    cycle: &CanardCycle,
    kind: CanardKind,
    settings: &FlowSettings,
) -> Result<Hyperbolicity, CanardError> {
    match kind {
        CanardKind::II => Ok(Hyperbolicity {
            hyperbolic: true,
            certificate: Certificate::WholeManifold,
        }),
        CanardKind::III => {
            let (mut sliding, mut escaping) = (false, false);
            for seg in cycle
                .segments
                .iter()
                .filter(|s| s.regime == Regime::Sliding)
            {
                for w in seg.points.windows(2) {
                    let mid = sys.project_to_sigma((w[0] + w[1]) * 0.5);
                    match contact_region(sys, mid) {
                        Some(SigmaClass::Sliding) => sliding = true,
                        Some(SigmaClass::Escaping) => escaping = true,
                        _ => {}
                    }
                }
            }
            Ok(Hyperbolicity {
                hyperbolic: !(sliding && escaping),
                certificate: Certificate::Purity { sliding, escaping },
            })
        }
        CanardKind::I => {
            let multiplier = return_map_multiplier(sys, cycle, settings)?;
            let (section, _) = cycle_section(sys, cycle)?;
            Ok(Hyperbolicity {
                hyperbolic: (multiplier - 1.0).abs() > 1e-3,
                certificate: Certificate::ReturnMap {
                    multiplier,
                    section: section.point,
                },
            })
        }
    }
}

/// Section through the cycle vertex farthest from Σ, normal to the flow.
fn cycle_section(
    sys: &NonSmoothSystem,
    cycle: &CanardCycle,
) -> Result<(Section, f64), CanardError> {
    let mut best: Option<(Vec2, f64)> = None;
    for seg in cycle
        .segments
        .iter()
        .filter(|s| s.regime != Regime::Sliding)
    {
        for p in &seg.points {
            let d = sys.eval_f(*p).map_err(SystemError::from)?.abs()
                / sys
                    .grad_f(*p)
                    .map_err(SystemError::from)?
                    .norm()
                    .max(1e-300);
            if best.is_none_or(|b| d > b.1) {
                best = Some((*p, d));
            }
        }
    }
    let (p, d) = best.ok_or_else(|| CanardError::ReturnMap("cycle has no field arc".into()))?;
    let v = sys.field_at(p).map_err(SystemError::from)?;
    if v.norm() == 0.0 {
        return Err(CanardError::ReturnMap(
            "field vanishes at the section point".into(),
        ));
    }
    Ok((Section::new(p, v, 0.5 * d.max(1e-3)), d))
}

/// First-return map of the Filippov flow on `section`, as a function of
/// the section coordinate.
pub fn return_map(
    sys: &NonSmoothSystem,
    section: &Section,
    u: f64,
    settings: &FlowSettings,
) -> Result<(f64, f64), CanardError> {
    let orbit = hybrid_orbit_to_section(sys, section.at(u), section, settings)?;
    if orbit.terminal() != Some(TerminalEvent::HitSection) {
        return Err(CanardError::ReturnMap(format!(
            "orbit from section coordinate {u} stopped with {:?}{}",
            orbit.terminal(),
            orbit
                .diagnostic
                .map(|d| format!(" ({d})"))
                .unwrap_or_default()
        )));
    }
    let t = orbit
        .arcs
        .last()
        .unwrap()
        .times
        .last()
        .copied()
        .unwrap_or(0.0);
    Ok((section.coordinate(orbit.end()), t))
}

/// Richardson-extrapolated central difference of the return map at the
/// cycle, with offsets `1e-4` and `2e-4` (scaled by the section size).
pub fn return_map_multiplier(
    sys: &NonSmoothSystem,
    cycle: &CanardCycle,
    settings: &FlowSettings,
) -> Result<f64, CanardError> {
    let (section, d) = cycle_section(sys, cycle)?;
    let h = 1e-4 * d.clamp(1e-2, 1.0);
    let p = |u: f64| return_map(sys, &section, u, settings).map(|r| r.0);
    let d1 = (p(h)? - p(-h)?) / (2.0 * h);
    let d2 = (p(2.0 * h)? - p(-2.0 * h)?) / (4.0 * h);
    Ok((4.0 * d1 - d2) / 3.0)
}

// -- Σ-loop scan -----------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub mu: f64,
    pub n_zeros_h: usize,
    /// Sign of `H` at the return point (0 within tolerance).
    pub sign_h_at_b: i32,
    pub verdict: String,
    /// `min over [A, B] of sign(H(A))·H`; positive iff `H` keeps its sign.
    pub margin: f64,
    pub fold: Option<Vec2>,
    pub return_point: Option<Vec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Parameter value where the zero-free margin changes sign.
    pub bifurcation: Option<f64>,
}

impl ScanReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["mu", "n_zeros_H", "sign_H_at_B", "verdict"]);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.mu),
                Cell::from(r.n_zeros_h),
                Cell::Int(r.sign_h_at_b as i64),
                Cell::from(r.verdict.clone()),
            ]);
        }
        t
    }
}

struct Interval {
    fold: Vec2,
    ret: Vec2,
    a: f64,
    b: f64,
}

fn fold_interval(
    sys: &NonSmoothSystem,
    window: [f64; 2],
    settings: &FlowSettings,
) -> Result<Interval, CanardError> {
    let folds: Vec<_> = sys
        .fold_census(window[0], window[1])
        .into_iter()
        .filter(|p| p.is_visible())
        .collect();
    if folds.len() != 1 {
        return Err(CanardError::FoldCount {
            count: folds.len(),
            window,
        });
    }
    let kind = arc_kind(sys, folds[0].point, settings)?;
    Ok(Interval {
        fold: folds[0].point,
        ret: kind.return_point,
        a: folds[0].s,
        b: sys.sigma_param(kind.return_point)?,
    })
}

/// `min over [a, b] of sign(H(a))·H`, with interior minima refined.
fn zero_free_margin(sys: &NonSmoothSystem, a: f64, b: f64) -> Option<f64> {
    let h = |s: f64| sys.direction_on_slide(s);
    let dh = |s: f64| {
        sys.sigma_point(s)
            .ok()
            .and_then(|q| sys.direction_slope(q).ok())
    };
    let sign = h(a)?.signum();
    let grid = sample_grid(a, b, H_SAMPLES);
    let vals: Vec<f64> = grid
        .iter()
        .map(|&s| h(s).map(|v| sign * v))
        .collect::<Option<_>>()?;
    let mut margin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    for i in 0..H_SAMPLES {
        let (Some(d0), Some(d1)) = (dh(grid[i]), dh(grid[i + 1])) else {
            continue;
        };
        if d0 * d1 <= 0.0 {
            let tol = 1e-13 * (1.0 + grid[i].abs());
            if let Some(s) = roots::bisect(dh, grid[i], grid[i + 1], tol, 0.0) {
                if let Some(v) = h(s) {
                    margin = margin.min(sign * v);
                }
            }
        }
    }
    Some(margin)
}

fn scan_row(sys: &NonSmoothSystem, mu: f64, window: [f64; 2], settings: &FlowSettings) -> ScanRow {
    let iv = match fold_interval(sys, window, settings) {
        Ok(iv) => iv,
        Err(e) => {
            return ScanRow {
                mu,
                n_zeros_h: 0,
                sign_h_at_b: 0,
                verdict: format!("error: {e}"),
                margin: f64::NAN,
                fold: None,
                return_point: None,
            }
        }
    };
    let (lo, hi) = (iv.a.min(iv.b), iv.a.max(iv.b));
    let interior: Vec<PseudoEquilibrium> = sys
        .pseudo_equilibria(lo, hi)
        .into_iter()
        .filter(|p| p.s > lo + 1e-9 && p.s < hi - 1e-9)
        .collect();
    let h_b = sys.direction_on_slide(iv.b).unwrap_or(f64::NAN);
    let sign_h_at_b = if !h_b.is_finite() || h_b.abs() <= sys.tol.double_zero {
        0
    } else if h_b > 0.0 {
        1
    } else {
        -1
    };
    let margin = zero_free_margin(sys, iv.a, iv.b).unwrap_or(f64::NAN);
    let verdict = match (interior.as_slice(), sign_h_at_b) {
        ([], 0) => "unstable sigma-loop: H vanishes at B".to_string(),
        ([], _) => "canard kind III".to_string(),
        ([p], _) if p.multiplicity == Multiplicity::Double => {
            "sigma-loop: double zero of H".to_string()
        }
        ([_], s) if s < 0 => "unstable sigma-loop: one zero, H(B) < 0".to_string(),
        ([_], s) if s > 0 => "stable sigma-loop: one zero, H(B) > 0".to_string(),
        ([_], _) => "one zero, H(B) = 0".to_string(),
        (pes, _) => {
            let names: Vec<String> = pes
                .iter()
                .map(|p| match p.class {
                    SigmaClass::PseudoEquilibrium(k) => format!("{k:?}"),
                    other => other.label(),
                })
                .collect();
            if pes.len() == 2 {
                format!(
                    "{} + {} with sigma-separatrix connection",
                    names[0], names[1]
                )
            } else {
                format!("{} pseudo-equilibria: {}", pes.len(), names.join(" + "))
            }
        }
    };
    ScanRow {
        mu,
        n_zeros_h: interior.len(),
        sign_h_at_b,
        verdict,
        margin,
        fold: Some(iv.fold),
        return_point: Some(iv.ret),
    }
}

/// Scan `mu` over `n` evenly spaced values of `range`, then bisect the
/// first sign change of the zero-free margin to locate the Σ-loop
/// bifurcation to `1e-9`.
pub fn sigma_loop_scan<F, E>(
    family: F,
    range: [f64; 2],
    n: usize,
    window: [f64; 2],
    settings: &FlowSettings,
) -> ScanReport
where
    F: Fn(f64) -> Result<NonSmoothSystem, E> + Sync,
    E: std::fmt::Display,
{
    let n = n.max(2);
    let mus = sample_grid(range[0], range[1], n - 1);
    let eval = |mu: f64| -> ScanRow {
        match family(mu) {
            Ok(sys) => scan_row(&sys, mu, window, settings),
            Err(e) => ScanRow {
                mu,
                n_zeros_h: 0,
                sign_h_at_b: 0,
                verdict: format!("error: {e}"),
                margin: f64::NAN,
                fold: None,
                return_point: None,
            },
        }
    };
    let rows: Vec<ScanRow> = mus.par_iter().map(|&mu| eval(mu)).collect();

    let margin_at = |mu: f64| -> Option<f64> {
        let sys = family(mu).ok()?;
        let iv = fold_interval(&sys, window, settings).ok()?;
        zero_free_margin(&sys, iv.a, iv.b)
    };
    let mut bifurcation = None;
    for w in rows.windows(2) {
        let (m0, m1) = (w[0].margin, w[1].margin);
        if m0.is_finite() && m1.is_finite() && (m0 > 0.0) != (m1 > 0.0) {
            let (mut lo, mut hi) = (w[0].mu, w[1].mu);
            let lo_positive = m0 > 0.0;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                match margin_at(mid) {
                    Some(m) if (m > 0.0) == lo_positive => lo = mid,
                    Some(_) => hi = mid,
                    None => break,
                }
            }
            bifurcation = Some(0.5 * (lo + hi));
            break;
        }
    }
    ScanReport { rows, bifurcation }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec61(mu: f64) -> NonSmoothSystem {
        NonSmoothSystem::parse(
            ["x+y-1", "-x+y-1"],
            [&format!("-x^2+(3/2)*x-1/2-({mu})"), "1"],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn perturbed_family_member_has_kind_three_canard() {
        let sys = sec61(0.25);
        let r = detect_canard_one_fold(&sys, [-5.0, 5.0], &FlowSettings::default()).unwrap();
        assert!(r.found, "{:?}", r.diagnostic);
        assert_eq!(r.kind, Some(CanardKind::III));
        assert!(r.hyperbolic.as_ref().unwrap().hyperbolic);
        assert!(r.cycle.as_ref().unwrap().closure_gap() < 1e-8);
        assert!(r.return_point.x > 1.0);
    }

    #[test]
    fn unperturbed_member_reports_zero_at_one() {
        let r = detect_canard_one_fold(&sec61(0.0), [-5.0, 5.0], &FlowSettings::default()).unwrap();
        assert!(!r.found);
        let d = r.diagnostic.unwrap();
        assert!(
            d.contains("H has a double zero at (1.000000, 0.000000)"),
            "{d}"
        );
    }

    #[test]
    fn circle_is_kind_two() {
        let sys = NonSmoothSystem::parse(["-x-y", "x-y"], ["x-y", "x+y"], "x^2+y^2-1").unwrap();
        let pts: Vec<Vec2> = (0..=400)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 400.0;
                Vec2::new(th.cos(), th.sin())
            })
            .collect();
        let mut pts = pts;
        *pts.last_mut().unwrap() = pts[0];
        let cycle = CanardCycle {
            segments: vec![Segment {
                regime: Regime::Sliding,
                points: pts,
            }],
        };
        assert_eq!(classify_kind(&sys, &cycle).unwrap(), CanardKind::II);
        let h = is_hyperbolic(&sys, &cycle, CanardKind::II, &FlowSettings::default()).unwrap();
        assert!(h.hyperbolic);
    }
}
