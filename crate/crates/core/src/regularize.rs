//! ε-regularization of a two-zone system and its limit cycles.
//!
//! `X_ε = (1/2 + φ(f/ε)/2)·X1 + (1/2 − φ(f/ε)/2)·X2` with a transition
//! function `φ` equal to `±1` outside `[-1, 1]`. Outside the strip
//! `|f| < ε` the weight is exactly 0 or 1 and the field is returned
//! unblended.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::flow::{hermite_dense, Section};
use crate::geometry::{PolylineIndex, Vec2};
use crate::io::{Cell, CsvTable};
use crate::ode::{self, Direction, Event, OdeError, OdeSettings, Stop};
use crate::system::{NonSmoothSystem, Which};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RegularizeError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("transition table: {0}")]
    BadTable(String),
    #[error("section is tangent to the field at ({}, {})", point.x + 0.0, point.y + 0.0)]
    SectionTangency { point: Vec2 },
    #[error("no return to the section: {0}")]
    NoReturn(String),
    #[error(
        "fixed-point iteration did not converge in {iterations} steps (residual {residual:e})"
    )]
    Divergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Monotone ramp from -1 to 1 on `[-1, 1]`, constant outside.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub enum TransitionFunction {
    /// `(15x − 10x³ + 3x⁵)/8`, C² at ±1.
    #[default]
    Quintic,
    /// `(3x − x³)/2`, C¹ at ±1.
    Cubic,
    /// Piecewise linear through strictly increasing knots from `(-1, -1)` to `(1, 1)`.
    Table(Vec<[f64; 2]>),
}

impl TransitionFunction {
    pub fn table(knots: Vec<[f64; 2]>) -> Result<Self, RegularizeError> {
        let bad = |m: &str| Err(RegularizeError::BadTable(m.to_string()));
        if knots.len() < 2 {
            return bad("needs at least two knots");
        }
        if knots[0] != [-1.0, -1.0] || *knots.last().unwrap() != [1.0, 1.0] {
            return bad("must run from (-1, -1) to (1, 1)");
        }
        if knots
            .windows(2)
            .any(|w| !(w[1][0] > w[0][0] && w[1][1] > w[0][1]))
        {
            return bad("knots must be strictly increasing in both coordinates");
        }
        Ok(TransitionFunction::Table(knots))
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 1.0;
        }
        if x <= -1.0 {
            return -1.0;
        }
        match self {
            TransitionFunction::Quintic => {
                let x2 = x * x;
                x * (15.0 - x2 * (10.0 - 3.0 * x2)) / 8.0
            }
            TransitionFunction::Cubic => x * (3.0 - x * x) / 2.0,
            TransitionFunction::Table(k) => {
                let i = k.partition_point(|p| p[0] <= x).clamp(1, k.len() - 1);
                let (a, b) = (k[i - 1], k[i]);
                a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransitionFunction::Quintic => "quintic",
            TransitionFunction::Cubic => "cubic",
            TransitionFunction::Table(_) => "table",
        }
    }
}

/// The smooth field `X_ε`.
#[derive(Debug)]
pub struct RegularizedField<'a> {
    sys: &'a NonSmoothSystem,
    eps: f64,
    phi: TransitionFunction,
}

impl<'a> RegularizedField<'a> {
    pub fn new(
        sys: &'a NonSmoothSystem,
        eps: f64,
        phi: TransitionFunction,
    ) -> Result<Self, RegularizeError> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(RegularizeError::NonPositiveEpsilon(eps));
        }
        Ok(RegularizedField { sys, eps, phi })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn system(&self) -> &NonSmoothSystem {
        self.sys
    }

    /// Weights `(w1, w2)` of `X1`, `X2`; exactly `(1, 0)` or `(0, 1)` outside the strip.
    pub fn weights(&self, q: Vec2) -> Result<(f64, f64), EvalError> {
        let u = self.sys.eval_f(q)? / self.eps;
        if u >= 1.0 {
            return Ok((1.0, 0.0));
        }
        if u <= -1.0 {
            return Ok((0.0, 1.0));
        }
        let p = self.phi.eval(u);
        Ok((0.5 + 0.5 * p, 0.5 - 0.5 * p))
    }

    pub fn eval(&self, q: Vec2) -> Result<Vec2, EvalError> {
        match self.weights(q)? {
            (1.0, _) => self.sys.field(Which::X1, q),
            (_, 1.0) => self.sys.field(Which::X2, q),
            (w1, w2) => {
                let a = self.sys.field(Which::X1, q)?;
                let b = self.sys.field(Which::X2, q)?;
                Ok(a * w1 + b * w2)
            }
        }
    }

    /// Symbolic `(mean, half-difference)` per component, so that
    /// `X_ε = mean + φ(f/ε)·half_difference`.
    pub fn blend_form(&self) -> [[Expr; 2]; 2] {
        let (a, b) = (self.sys.x1(), self.sys.x2());
        let half = |e: Expr| Expr::Const(0.5) * e;
        [
            [
                half(a[0].clone() + b[0].clone()),
                half(a[0].clone() - b[0].clone()),
            ],
            [
                half(a[1].clone() + b[1].clone()),
                half(a[1].clone() - b[1].clone()),
            ],
        ]
    }

    /// Step cap: `ε/10` inside `|f| ≤ 2ε`.
    pub fn max_step(&self, q: Vec2) -> f64 {
        match self.sys.eval_f(q) {
            Ok(v) if v.abs() <= 2.0 * self.eps => 0.1 * self.eps,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CycleSettings {
    pub ode: OdeSettings,
    /// Time budget of one return.
    pub t_max: f64,
    pub max_iterations: usize,
    /// Fixed-point tolerance on the section coordinate.
    pub tol: f64,
    /// Base offset of the multiplier differences; the second offset is twice this.
    pub offset: f64,
    pub domain_radius: f64,
}

impl Default for CycleSettings {
    fn default() -> Self {
        CycleSettings {
            ode: OdeSettings::default(),
            t_max: 1e3,
            max_iterations: 50,
            tol: 1e-9,
            offset: 1e-4,
            domain_radius: 1e6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CycleEstimate {
    pub times: Vec<f64>,
    pub points: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub period: f64,
    pub multiplier: f64,
    /// Richardson error estimate of the multiplier.
    pub multiplier_error: f64,
    pub hyperbolic: bool,
    pub section: Section,
    /// Section coordinate of the fixed point.
    pub coordinate: f64,
    pub closure_gap: f64,
    pub iterations: usize,
}

impl CycleEstimate {
    pub fn dense(&self, max_len: f64) -> Vec<Vec2> {
        hermite_dense(&self.times, &self.points, &self.velocities, max_len)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["t", "x", "y"]);
        for (time, p) in self.times.iter().zip(&self.points) {
            t.push(vec![Cell::from(*time), Cell::from(p.x), Cell::from(p.y)]);
        }
        t
    }
}

struct Return {
    coordinate: f64,
    period: f64,
    samples: Vec<ode::Sample<2>>,
}

fn first_return(
    field: &RegularizedField<'_>,
    section: &Section,
    u: f64,
    settings: &CycleSettings,
) -> Result<Return, RegularizeError> {
    let rhs = |y: &[f64; 2]| -> Result<[f64; 2], String> {
        field
            .eval(Vec2::from(*y))
            .map(<[f64; 2]>::from)
            .map_err(|e| e.to_string())
    };
    let sec = *section;
    let r2 = settings.domain_radius * settings.domain_radius;
    let events = [
        Event::new(
            move |y: &[f64; 2]| (Vec2::from(*y) - sec.point).dot(sec.direction),
            Direction::Rising,
            1e-13 * (1.0 + sec.point.norm()),
        ),
        Event::new(
            move |y: &[f64; 2]| y[0] * y[0] + y[1] * y[1] - r2,
            Direction::Rising,
            1e-6 * r2,
        ),
    ];
    let start = section.at(u);
    let mut samples: Vec<ode::Sample<2>> = Vec::new();
    let (mut t, mut q) = (0.0, start);
    loop {
        // leave the section line before arming the crossing event
        let speed = field.eval(q)?.dot(section.direction);
        if !(speed > 0.0) {
            return Err(RegularizeError::SectionTangency { point: q });
        }
        let t_clear = (t + 1e-3 * section.half_width / speed).min(settings.t_max);
        let max_step = |y: &[f64; 2]| field.max_step(Vec2::from(*y));
        for (leg_end, leg_events) in [(t_clear, &events[1..]), (settings.t_max, &events)] {
            let sol = ode::integrate(
                rhs,
                [q.x, q.y],
                t,
                leg_end,
                &settings.ode,
                leg_events,
                max_step,
            )?;
            let skip = usize::from(!samples.is_empty());
            samples.extend_from_slice(&sol.samples[skip..]);
            let last = sol.last();
            (t, q) = (last.t, Vec2::from(last.y));
            match sol.stop {
                Stop::EndTime if leg_end < settings.t_max => {}
                Stop::EndTime => {
                    return Err(RegularizeError::NoReturn(format!(
                        "no return within t = {}",
                        settings.t_max
                    )))
                }
                Stop::Event(k) if leg_events.len() == 1 || k == 1 => {
                    return Err(RegularizeError::NoReturn("orbit left the domain".into()))
                }
                Stop::Event(_) => {}
            }
        }
        if section.coordinate(q).abs() <= section.half_width {
            return Ok(Return {
                coordinate: section.coordinate(q),
                period: t,
                samples,
            });
        }
    }
}

/// Section through `point`, normal to the field there, of half-width `half_width`.
pub fn section_normal_to_flow(
    field: &RegularizedField<'_>,
    point: Vec2,
    half_width: f64,
) -> Result<Section, RegularizeError> {
    let v = field.eval(point)?;
    if v.norm() == 0.0 {
        return Err(RegularizeError::SectionTangency { point });
    }
    Ok(Section::new(point, v, half_width))
}

/// Vertex of `line` farthest from Σ, with its first-order distance `|f|/|∇f|`.
pub fn farthest_from_sigma(
    sys: &NonSmoothSystem,
    line: &[Vec2],
) -> Result<(Vec2, f64), RegularizeError> {
    let (mut top, mut dist) = (line.first().copied().unwrap_or(Vec2::ZERO), -1.0);
    for &p in line {
        let d = sys.eval_f(p)?.abs() / sys.grad_f(p)?.norm().max(1e-300);
        if d > dist {
            (top, dist) = (p, d);
        }
    }
    Ok((top, dist))
}

/// Limit cycle through a section normal to the flow at `point`.
pub fn find_limit_cycle_through(
    field: &RegularizedField<'_>,
    point: Vec2,
    half_width: f64,
    settings: &CycleSettings,
) -> Result<CycleEstimate, RegularizeError> {
    let section = section_normal_to_flow(field, point, half_width)?;
    solve_cycle(field, &section, 0.0, settings)
}

/// Fixed point of the first-return map on the segment `[a, b]`, starting
/// from `guess` (projected onto the segment).
pub fn find_limit_cycle(
    field: &RegularizedField<'_>,
    a: Vec2,
    b: Vec2,
    guess: Vec2,
    settings: &CycleSettings,
) -> Result<CycleEstimate, RegularizeError> {
    let mid = (a + b) * 0.5;
    let along = (b - a).normalized();
    let v = field.eval(guess)?;
    let normal_speed = v.dot(along.perp());
    if normal_speed.abs() <= 1e-6 * v.norm() || v.norm() == 0.0 {
        return Err(RegularizeError::SectionTangency { point: guess });
    }
    let direction = if normal_speed > 0.0 {
        along.perp()
    } else {
        -along.perp()
    };
    let section = Section::new(mid, direction, 0.5 * a.dist(b));
    let u0 = section.coordinate(guess);
    solve_cycle(field, &section, u0, settings)
}

fn solve_cycle(
    field: &RegularizedField<'_>,
    section: &Section,
    u0: f64,
    settings: &CycleSettings,
) -> Result<CycleEstimate, RegularizeError> {
    let p = |u: f64| first_return(field, section, u, settings);
    let mut r0 = p(u0)?;
    let (mut x0, mut g0) = (u0, r0.coordinate - u0);
    let mut x1 = r0.coordinate;
    let mut iterations = 1;
    let tol = settings.tol;
    let mut best = loop {
        if g0.abs() <= tol {
            break r0;
        }
        if iterations >= settings.max_iterations {
            return Err(RegularizeError::Divergence {
                iterations,
                residual: g0.abs(),
            });
        }
        let r1 = p(x1)?;
        iterations += 1;
        let g1 = r1.coordinate - x1;
        if g1.abs() <= tol {
            x0 = x1;
            break r1;
        }
        let denom = g1 - g0;
        let next = if denom != 0.0 && denom.is_finite() {
            x1 - g1 * (x1 - x0) / denom
        } else {
            r1.coordinate
        };
        // keep the iterate on the section
        let next = if next.abs() <= section.half_width {
            next
        } else {
            r1.coordinate
        };
        (x0, g0, r0) = (x1, g1, r1);
        x1 = next;
    };
    let u_star = x0;

    let h = settings.offset * section.half_width.clamp(1e-2, 1.0);
    let d = |h: f64| -> Result<f64, RegularizeError> {
        Ok((p(u_star + h)?.coordinate - p(u_star - h)?.coordinate) / (2.0 * h))
    };
    let (d1, d2) = (d(h)?, d(2.0 * h)?);
    let multiplier = (4.0 * d1 - d2) / 3.0;
    let multiplier_error = (d1 - d2).abs() / 3.0;
    let closure_gap = (best.coordinate - u_star).abs();
    let samples = std::mem::take(&mut best.samples);
    Ok(CycleEstimate {
        times: samples.iter().map(|s| s.t).collect(),
        points: samples.iter().map(|s| Vec2::from(s.y)).collect(),
        velocities: samples.iter().map(|s| Vec2::from(s.dy)).collect(),
        period: best.period,
        multiplier,
        multiplier_error,
        hyperbolic: (multiplier - 1.0).abs() > 3.0 * multiplier_error,
        section: *section,
        coordinate: u_star,
        closure_gap,
        iterations,
    })
}

// -- Hausdorff distance ------------------------------------------------------------

/// `sup over vertices p of P` of the distance from `p` to the polyline `Q`.
pub fn directed_hausdorff(p: &[Vec2], q: &[Vec2]) -> f64 {
    if p.is_empty() || q.is_empty() {
        return f64::INFINITY;
    }
    if q.len() == 1 {
        return p.iter().map(|v| v.dist(q[0])).fold(0.0, f64::max);
    }
    let tree = PolylineIndex::new(q);
    // a vertex closer than the running maximum cannot raise it
    p.iter()
        .fold(0.0, |cmax, &v| cmax.max(tree.distance_below(v, cmax)))
}

/// Symmetric Hausdorff distance between two polylines (vertices against
/// segments, both directions).
pub fn hausdorff(p: &[Vec2], q: &[Vec2]) -> f64 {
    directed_hausdorff(p, q).max(directed_hausdorff(q, p))
}

// -- convergence study -------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub hausdorff: f64,
    pub multiplier: f64,
    pub multiplier_error: f64,
    pub period: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Hausdorff distances of the successful rows strictly decrease.
    pub strictly_decreasing: bool,
    #[serde(skip)]
    pub cycles: Vec<Option<CycleEstimate>>,
}

impl ConvergenceStudy {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["epsilon", "hausdorff", "multiplier", "period"]);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.epsilon),
                Cell::from(r.hausdorff),
                Cell::from(r.multiplier),
                Cell::from(r.period),
            ]);
        }
        t
    }
}

/// Chord length used when densifying polylines for the Hausdorff distance.
pub const HAUSDORFF_CHORD: f64 = 2e-3;

/// Regularized cycles for each `ε` (in order, each seeded from the
/// previous fixed point) and their distance to `gamma0`.
pub fn convergence_study(
    sys: &NonSmoothSystem,
    gamma0: &[Vec2],
    eps_list: &[f64],
    phi: &TransitionFunction,
    settings: &CycleSettings,
) -> Result<ConvergenceStudy, RegularizeError> {
    let (top, dist) = farthest_from_sigma(sys, gamma0)?;
    let target = crate::geometry::densify(gamma0, HAUSDORFF_CHORD);
    let mut rows = Vec::new();
    let mut cycles = Vec::new();
    let mut seed = 0.0;
    let mut section: Option<Section> = None;
    for &eps in eps_list {
        let field = RegularizedField::new(sys, eps, phi.clone())?;
        let sec = match section {
            Some(s) => s,
            None => {
                let s = section_normal_to_flow(&field, top, 0.5 * dist.max(1e-3))?;
                section = Some(s);
                s
            }
        };
        match solve_cycle(&field, &sec, seed, settings) {
            Ok(cycle) => {
                seed = cycle.coordinate;
                let poly = cycle.dense(HAUSDORFF_CHORD);
                rows.push(ConvergenceRow {
                    epsilon: eps,
                    hausdorff: hausdorff(&poly, &target),
                    multiplier: cycle.multiplier,
                    multiplier_error: cycle.multiplier_error,
                    period: cycle.period,
                    error: None,
                });
                cycles.push(Some(cycle));
            }
            Err(e) => {
                rows.push(ConvergenceRow {
                    epsilon: eps,
                    hausdorff: f64::NAN,
                    multiplier: f64::NAN,
                    multiplier_error: f64::NAN,
                    period: f64::NAN,
                    error: Some(e.to_string()),
                });
                cycles.push(None);
            }
        }
    }
    let ok: Vec<f64> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.hausdorff)
        .collect();
    let strictly_decreasing = ok.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceStudy {
        rows,
        strictly_decreasing,
        cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quintic_values() {
        let phi = TransitionFunction::Quintic;
        assert_eq!(phi.eval(0.0), 0.0);
        assert_eq!(phi.eval(1.0), 1.0);
        assert_eq!(phi.eval(-2.0), -1.0);
        assert_eq!(phi.eval(0.5), 0.79296875);
    }

    #[test]
    fn table_validation() {
        assert!(TransitionFunction::table(vec![[-1.0, -1.0], [0.5, 1.0]]).is_err());
        let t = TransitionFunction::table(vec![[-1.0, -1.0], [0.0, 0.5], [1.0, 1.0]]).unwrap();
        assert_eq!(t.eval(-0.5), -0.25);
        assert_eq!(t.eval(0.5), 0.75);
    }

    #[test]
    fn weights_outside_strip_are_exact() {
        let sys = NonSmoothSystem::parse(["x+y-1", "-x+y+1"], ["1", "2"], "x").unwrap();
        let field = RegularizedField::new(&sys, 0.1, TransitionFunction::Quintic).unwrap();
        let q = Vec2::new(0.2, 3.0);
        assert_eq!(field.eval(q).unwrap(), sys.field(Which::X1, q).unwrap());
        let q = Vec2::new(0.0, 3.0);
        let mid = (sys.field(Which::X1, q).unwrap() + sys.field(Which::X2, q).unwrap()) * 0.5;
        assert_eq!(field.eval(q).unwrap(), mid);
        assert!(RegularizedField::new(&sys, 0.0, TransitionFunction::Quintic).is_err());
    }

    #[test]
    fn circle_distances() {
        let circle = |r: f64, n: usize| -> Vec<Vec2> {
            (0..=n)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    Vec2::new(r * th.cos(), r * th.sin())
                })
                .collect()
        };
        let (a, b) = (circle(1.0, 720), circle(1.1, 720));
        assert!((hausdorff(&a, &b) - 0.1).abs() < 1e-3);
        assert!(hausdorff(&a, &a) < 1e-15);
    }

    #[test]
    fn smooth_limit_cycle_recovered() {
        let field_text = ["x*(1-x^2-y^2) - y", "y*(1-x^2-y^2) + x"];
        let sys = NonSmoothSystem::parse(field_text, field_text, "y - 5").unwrap();
        let field = RegularizedField::new(&sys, 0.1, TransitionFunction::Quintic).unwrap();
        let c = find_limit_cycle(
            &field,
            Vec2::new(0.5, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.3, 0.0),
            &CycleSettings::default(),
        )
        .unwrap();
        let p = c.section.at(c.coordinate);
        assert!(p.dist(Vec2::new(1.0, 0.0)) < 1e-8);
        assert!((c.period - 2.0 * std::f64::consts::PI).abs() < 1e-7);
        let exact = (-4.0 * std::f64::consts::PI).exp();
        assert!((c.multiplier - exact).abs() < 1e-5, "{}", c.multiplier);
        assert!(c.closure_gap < 1e-8);
    }

    #[test]
    fn tangent_section_rejected() {
        let field_text = ["-y", "x"];
        let sys = NonSmoothSystem::parse(field_text, field_text, "y - 5").unwrap();
        let field = RegularizedField::new(&sys, 0.1, TransitionFunction::Quintic).unwrap();
        let err = find_limit_cycle(
            &field,
            Vec2::new(1.0, -0.5),
            Vec2::new(1.0, 0.5),
            Vec2::new(1.0, 0.0),
            &CycleSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RegularizeError::SectionTangency { .. }));
    }
}
