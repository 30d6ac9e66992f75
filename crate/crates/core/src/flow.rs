//! Trajectories of the discontinuous system: smooth arcs of `X1`/`X2`,
//! sliding arcs along Σ, and their concatenation into hybrid orbits.

use serde::Serialize;
use thiserror::Error;

use crate::expr::Expr;
use crate::geometry::Vec2;
use crate::io::sci;
use crate::ode::{self, Direction, Event, OdeError, OdeSettings, Stop};
use crate::system::{FoldPoint, NonSmoothSystem, SigmaClass, SystemError, Which};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    X1,
    X2,
    Sliding,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::X1 => "X1",
            Regime::X2 => "X2",
            Regime::Sliding => "sliding",
        }
    }

    pub fn field(which: Which) -> Regime {
        match which {
            Which::X1 => Regime::X1,
            Which::X2 => Regime::X2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TerminalEvent {
    CrossedSigma,
    HitFold(Which),
    HitPseudoEquilibrium,
    TimeBudget,
    LeftDomain,
    /// Crossed a transversal [`Section`] in the flow direction.
    HitSection,
}

/// Transversal segment through `point`, crossed positively when moving
/// along `direction` (unit). Crossings farther than `half_width` from
/// `point` are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Section {
    pub point: Vec2,
    pub direction: Vec2,
    pub half_width: f64,
}

impl Section {
    pub fn new(point: Vec2, direction: Vec2, half_width: f64) -> Self {
        Section {
            point,
            direction: direction.normalized(),
            half_width,
        }
    }

    /// Signed position along the section line.
    pub fn coordinate(&self, q: Vec2) -> f64 {
        (q - self.point).dot(self.direction.perp())
    }

    /// Point of the section line at `coordinate`.
    pub fn at(&self, coordinate: f64) -> Vec2 {
        self.point + self.direction.perp() * coordinate
    }

    fn side(&self, q: Vec2) -> f64 {
        (q - self.point).dot(self.direction)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("start point ({}, {}) is not in the closed half-plane of {regime:?} (f = {f:e})", point.x + 0.0, point.y + 0.0)]
    WrongSide { regime: Regime, point: Vec2, f: f64 },
    #[error("start point ({}, {}) is Σ-singular ({class})", point.x + 0.0, point.y + 0.0)]
    SingularStart { point: Vec2, class: String },
    #[error("({}, {}) is not a visible fold ({class})", point.x + 0.0, point.y + 0.0)]
    NotAVisibleFold { point: Vec2, class: String },
    #[error("arc from the fold does not return to Σ (stopped with {terminal:?})")]
    NoReturn { terminal: TerminalEvent },
}

/// Which events terminate an arc.
#[derive(Clone, Copy, Debug)]
pub struct StopSpec {
    pub crossing: bool,
    pub folds: bool,
    pub pseudo_equilibria: bool,
}

impl Default for StopSpec {
    fn default() -> Self {
        StopSpec {
            crossing: true,
            folds: true,
            pseudo_equilibria: true,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlowSettings {
    pub t_max: f64,
    pub ode: OdeSettings,
    /// Arcs stop with `LeftDomain` beyond this distance from the origin.
    pub domain_radius: f64,
    /// Polylines are decimated to at most this many samples.
    pub max_points: usize,
    /// Sliding arcs stop once `|H|` falls below this value.
    pub pseudo_equilibrium_tol: f64,
    /// Upper bound on the number of arcs in a hybrid orbit.
    pub max_arcs: usize,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            t_max: 1e3,
            ode: OdeSettings::default(),
            domain_radius: 1e6,
            max_points: 100_000,
            pseudo_equilibrium_tol: 1e-9,
            max_arcs: 10_000,
        }
    }
}

/// A timed polyline of one regime, with velocities for Hermite resampling.
#[derive(Clone, Debug, Serialize)]
pub struct Arc {
    pub regime: Regime,
    pub times: Vec<f64>,
    pub points: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub terminal: TerminalEvent,
}

impl Arc {
    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().expect("arc has samples")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().unwrap() - self.times[0]
    }

    /// Cubic Hermite resampling with chords no longer than `max_len`.
    pub fn dense(&self, max_len: f64) -> Vec<Vec2> {
        hermite_dense(&self.times, &self.points, &self.velocities, max_len)
    }

    fn decimate(&mut self, max_points: usize) {
        let n = self.points.len();
        if n <= max_points || max_points < 2 {
            return;
        }
        let idx: Vec<usize> = (0..max_points)
            .map(|k| k * (n - 1) / (max_points - 1))
            .collect();
        self.times = idx.iter().map(|&i| self.times[i]).collect();
        self.points = idx.iter().map(|&i| self.points[i]).collect();
        self.velocities = idx.iter().map(|&i| self.velocities[i]).collect();
    }
}

/// Hermite interpolation through timed samples with known derivatives.
pub fn hermite_dense(times: &[f64], points: &[Vec2], vel: &[Vec2], max_len: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len().saturating_sub(1) {
        let (p0, p1) = (points[i], points[i + 1]);
        out.push(p0);
        let h = times[i + 1] - times[i];
        let approx_len = (vel[i].norm() + vel[i + 1].norm()) * 0.5 * h.abs() + p0.dist(p1);
        if max_len > 0.0 && approx_len > max_len {
            let k = ((approx_len / max_len).ceil() as usize).min(100_000);
            for j in 1..k {
                let s = j as f64 / k as f64;
                let (s2, s3) = (s * s, s * s * s);
                let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                let h10 = s3 - 2.0 * s2 + s;
                let h01 = -2.0 * s3 + 3.0 * s2;
                let h11 = s3 - s2;
                out.push(p0 * h00 + vel[i] * (h10 * h) + p1 * h01 + vel[i + 1] * (h11 * h));
            }
        }
    }
    if let Some(&last) = points.last() {
        out.push(last);
    }
    out
}

fn eval2(field: &[Expr; 2], y: &[f64; 2]) -> Result<[f64; 2], String> {
    Ok([
        field[0].eval(y[0], y[1]).map_err(|e| e.to_string())?,
        field[1].eval(y[0], y[1]).map_err(|e| e.to_string())?,
    ])
}

enum EventKind {
    Crossing,
    Fold(Which),
    PseudoEquilibrium,
    Domain,
    Section,
}

/// Integrate one arc of the given regime from `q0`, starting at time `t0`.
pub fn integrate_arc(
    sys: &NonSmoothSystem,
    regime: Regime,
    q0: Vec2,
    stop: StopSpec,
    settings: &FlowSettings,
) -> Result<Arc, FlowError> {
    integrate_arc_from(sys, regime, q0, 0.0, stop, None, settings)
}

fn integrate_arc_from(
    sys: &NonSmoothSystem,
    regime: Regime,
    q0: Vec2,
    t0: f64,
    stop: StopSpec,
    section: Option<&Section>,
    settings: &FlowSettings,
) -> Result<Arc, FlowError> {
    let mut arc = match regime {
        Regime::X1 => field_arc(sys, Which::X1, q0, t0, stop, section, settings)?,
        Regime::X2 => field_arc(sys, Which::X2, q0, t0, stop, section, settings)?,
        Regime::Sliding => sliding_arc(sys, q0, t0, stop, settings)?,
    };
    arc.decimate(settings.max_points);
    Ok(arc)
}

fn field_arc(
    sys: &NonSmoothSystem,
    which: Which,
    q0: Vec2,
    t0: f64,
    stop: StopSpec,
    section: Option<&Section>,
    settings: &FlowSettings,
) -> Result<Arc, FlowError> {
    let regime = Regime::field(which);
    let side = if which == Which::X1 { 1.0 } else { -1.0 };
    let f0 = sys.eval_f(q0).map_err(SystemError::from)?;
    let band = 1e-9 * (1.0 + q0.norm());
    if side * f0 < -band {
        return Err(FlowError::WrongSide {
            regime,
            point: q0,
            f: f0,
        });
    }
    if f0.abs() <= band {
        // on Σ the field must not point out of its half-plane
        let l = sys.lie(which, q0).map_err(SystemError::from)?;
        let v = sys.field(which, q0).map_err(SystemError::from)?;
        let gn = sys.grad_f(q0).map_err(SystemError::from)?.norm();
        if side * l < -sys.tol.tangency * (1.0 + v.norm() * gn) {
            return Err(FlowError::WrongSide {
                regime,
                point: q0,
                f: f0,
            });
        }
    }

    let field = sys.field_exprs(which);
    let f = sys.f();
    let mut events = Vec::new();
    let mut kinds = Vec::new();
    if stop.crossing {
        let dir = if which == Which::X1 {
            Direction::Falling
        } else {
            Direction::Rising
        };
        events.push(Event::new(
            move |y: &[f64; 2]| f.eval(y[0], y[1]).unwrap_or(f64::NAN),
            dir,
            0.1 * sys.tol.event,
        ));
        kinds.push(EventKind::Crossing);
    }
    let r2 = settings.domain_radius * settings.domain_radius;
    events.push(Event::new(
        move |y: &[f64; 2]| y[0] * y[0] + y[1] * y[1] - r2,
        Direction::Rising,
        1e-6 * r2,
    ));
    kinds.push(EventKind::Domain);
    if let Some(sec) = section {
        events.push(Event::new(
            move |y: &[f64; 2]| sec.side(Vec2::from(*y)),
            Direction::Rising,
            1e-13 * (1.0 + sec.point.norm()),
        ));
        kinds.push(EventKind::Section);
    }

    let mut arc = Arc {
        regime,
        times: vec![t0],
        points: vec![q0],
        velocities: vec![Vec2::from(
            eval2(field, &[q0.x, q0.y]).map_err(|message| OdeError::Field { t: t0, message })?,
        )],
        terminal: TerminalEvent::TimeBudget,
    };
    let t_end = t0 + settings.t_max;
    loop {
        let (t, q) = (*arc.times.last().unwrap(), arc.end());
        let sol = ode::integrate(
            |y: &[f64; 2]| eval2(field, y),
            [q.x, q.y],
            t,
            t_end,
            &settings.ode,
            &events,
            |_| f64::INFINITY,
        )?;
        for sample in &sol.samples[1..] {
            arc.times.push(sample.t);
            arc.points.push(Vec2::from(sample.y));
            arc.velocities.push(Vec2::from(sample.dy));
        }
        let Stop::Event(k) = sol.stop else {
            return Ok(arc);
        };
        arc.terminal = match kinds[k] {
            EventKind::Crossing => {
                let last = arc.points.last_mut().unwrap();
                *last = sys.project_to_sigma(*last);
                TerminalEvent::CrossedSigma
            }
            EventKind::Domain => TerminalEvent::LeftDomain,
            EventKind::Section => {
                let sec = section.expect("section event registered");
                if sec.coordinate(arc.end()).abs() > sec.half_width {
                    // crossed the section line away from the section
                    continue;
                }
                TerminalEvent::HitSection
            }
            _ => unreachable!("field arcs carry no fold or pseudo-equilibrium events"),
        };
        return Ok(arc);
    }
}

fn sliding_arc(
    sys: &NonSmoothSystem,
    q0: Vec2,
    t0: f64,
    stop: StopSpec,
    settings: &FlowSettings,
) -> Result<Arc, FlowError> {
    let residual = sys.eval_f(q0).map_err(SystemError::from)?;
    if residual.abs() > sys.tol.on_manifold * (1.0 + q0.norm()) {
        return Err(SystemError::NotOnSigma {
            point: q0,
            residual: residual.abs(),
        }
        .into());
    }
    let s0 = sys.sigma_param(q0)?;
    let q0 = sys.sigma_point(s0)?;
    let l1 = sys.lie(Which::X1, q0).map_err(SystemError::from)?;
    let l2 = sys.lie(Which::X2, q0).map_err(SystemError::from)?;
    if l1 * l2 > 0.0 {
        let class = sys
            .classify_point(q0)
            .map(|c| c.label())
            .unwrap_or_default();
        return Err(SystemError::NotInSlidingRegion { point: q0, class }.into());
    }
    let h0 = sys.direction_function(s0)?;
    let velocity = |s: f64, h: f64| -> Vec2 {
        let q = sys.sigma_point(s).unwrap_or(q0);
        sys.tangent_at(q).map(|t| t * h).unwrap_or(Vec2::ZERO)
    };
    let pe_tol = settings.pseudo_equilibrium_tol;
    if stop.pseudo_equilibria && h0.abs() <= pe_tol {
        return Ok(Arc {
            regime: Regime::Sliding,
            times: vec![t0],
            points: vec![q0],
            velocities: vec![velocity(s0, h0)],
            terminal: TerminalEvent::HitPseudoEquilibrium,
        });
    }

    let lie_at = move |which: Which| {
        move |y: &[f64; 1]| {
            sys.sigma_point(y[0])
                .ok()
                .and_then(|q| sys.lie(which, q).ok())
                .unwrap_or(f64::NAN)
        }
    };
    let mut events = Vec::new();
    let mut kinds = Vec::new();
    if stop.folds {
        for which in [Which::X1, Which::X2] {
            events.push(Event::new(lie_at(which), Direction::Either, sys.tol.event));
            kinds.push(EventKind::Fold(which));
        }
    }
    if stop.pseudo_equilibria {
        events.push(Event::new(
            move |y: &[f64; 1]| {
                sys.direction_function(y[0])
                    .map(|h| h.abs() - pe_tol)
                    .unwrap_or(f64::NAN)
            },
            Direction::Falling,
            0.1 * pe_tol,
        ));
        kinds.push(EventKind::PseudoEquilibrium);
    }
    let r = settings.domain_radius;
    events.push(Event::new(
        move |y: &[f64; 1]| {
            sys.sigma_point(y[0])
                .map(|q| q.norm() - r)
                .unwrap_or(f64::NAN)
        },
        Direction::Rising,
        1e-6 * r,
    ));
    kinds.push(EventKind::Domain);

    let sol = ode::integrate(
        |y: &[f64; 1]| {
            sys.direction_function(y[0])
                .map(|h| [h])
                .map_err(|e| e.to_string())
        },
        [s0],
        t0,
        t0 + settings.t_max,
        &settings.ode,
        &events,
        |_| f64::INFINITY,
    )?;
    let mut arc = Arc {
        regime: Regime::Sliding,
        times: Vec::with_capacity(sol.samples.len()),
        points: Vec::with_capacity(sol.samples.len()),
        velocities: Vec::with_capacity(sol.samples.len()),
        terminal: TerminalEvent::TimeBudget,
    };
    for sample in &sol.samples {
        arc.times.push(sample.t);
        arc.points.push(sys.sigma_point(sample.y[0])?);
        arc.velocities.push(velocity(sample.y[0], sample.dy[0]));
    }
    if let Stop::Event(k) = sol.stop {
        arc.terminal = match kinds[k] {
            EventKind::Fold(which) => TerminalEvent::HitFold(which),
            EventKind::PseudoEquilibrium => TerminalEvent::HitPseudoEquilibrium,
            EventKind::Domain => TerminalEvent::LeftDomain,
            EventKind::Crossing | EventKind::Section => {
                unreachable!("sliding arcs carry no crossing or section event")
            }
        };
    }
    Ok(arc)
}

// -- hybrid orbits -------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TransitionKind {
    /// `X1`/`X2` arcs meet at a sewing point.
    SewingCrossing,
    /// A field arc lands on the sliding region.
    SlidingEntry,
    /// A sliding arc leaves tangentially along `Xi` at its visible fold.
    FoldExit(Which),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub kind: TransitionKind,
    pub point: Vec2,
}

#[derive(Clone, Debug, Serialize)]
pub struct HybridOrbit {
    pub arcs: Vec<Arc>,
    pub transitions: Vec<Transition>,
    /// Why the orbit was truncated before its time budget, if it was.
    pub diagnostic: Option<String>,
}

impl HybridOrbit {
    pub fn end(&self) -> Vec2 {
        self.arcs.last().map(Arc::end).unwrap_or(Vec2::ZERO)
    }

    pub fn terminal(&self) -> Option<TerminalEvent> {
        self.arcs.last().map(|a| a.terminal)
    }

    /// CSV with columns `t,x,y,regime`.
    pub fn to_csv(&self) -> String {
        arcs_csv(&self.arcs)
    }
}

pub fn arcs_csv(arcs: &[Arc]) -> String {
    let mut out = String::from("t,x,y,regime\n");
    for arc in arcs {
        for (t, p) in arc.times.iter().zip(&arc.points) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                sci(*t),
                sci(p.x),
                sci(p.y),
                arc.regime.label()
            ));
        }
    }
    out
}

/// Forward orbit of the Filippov system from `q0` for `settings.t_max`.
pub fn hybrid_orbit(
    sys: &NonSmoothSystem,
    q0: Vec2,
    settings: &FlowSettings,
) -> Result<HybridOrbit, FlowError> {
    run_hybrid(sys, q0, None, settings)
}

/// Hybrid orbit from `q0` stopped at its first positive crossing of
/// `section` (terminal event `HitSection`).
pub fn hybrid_orbit_to_section(
    sys: &NonSmoothSystem,
    q0: Vec2,
    section: &Section,
    settings: &FlowSettings,
) -> Result<HybridOrbit, FlowError> {
    run_hybrid(sys, q0, Some(section), settings)
}

fn run_hybrid(
    sys: &NonSmoothSystem,
    q0: Vec2,
    section: Option<&Section>,
    settings: &FlowSettings,
) -> Result<HybridOrbit, FlowError> {
    let f0 = sys.eval_f(q0).map_err(SystemError::from)?;
    let on_sigma = f0.abs() <= sys.tol.on_manifold * (1.0 + q0.norm());
    let mut regime = if !on_sigma {
        if f0 > 0.0 {
            Regime::X1
        } else {
            Regime::X2
        }
    } else {
        match sys.classify_point(q0)? {
            SigmaClass::Sewing => {
                if sys.lie(Which::X1, q0).map_err(SystemError::from)? > 0.0 {
                    Regime::X1
                } else {
                    Regime::X2
                }
            }
            SigmaClass::Sliding | SigmaClass::Escaping => Regime::Sliding,
            class => {
                return Err(FlowError::SingularStart {
                    point: q0,
                    class: class.label(),
                });
            }
        }
    };

    let t_end = settings.t_max;
    let mut orbit = HybridOrbit {
        arcs: Vec::new(),
        transitions: Vec::new(),
        diagnostic: None,
    };
    let mut q = q0;
    let mut t = 0.0;
    while orbit.arcs.len() < settings.max_arcs {
        let remaining = FlowSettings {
            t_max: t_end - t,
            ..*settings
        };
        let arc = integrate_arc_from(sys, regime, q, t, StopSpec::default(), section, &remaining)?;
        t = *arc.times.last().unwrap();
        q = arc.end();
        let terminal = arc.terminal;
        orbit.arcs.push(arc);
        let next = match terminal {
            TerminalEvent::CrossedSigma => landing_transition(sys, regime, q),
            TerminalEvent::HitFold(which) => fold_exit(sys, which, q),
            TerminalEvent::HitPseudoEquilibrium
            | TerminalEvent::TimeBudget
            | TerminalEvent::LeftDomain
            | TerminalEvent::HitSection => return Ok(orbit),
        };
        match next {
            Ok((kind, next_regime)) => {
                orbit.transitions.push(Transition { kind, point: q });
                regime = next_regime;
            }
            Err(diagnostic) => {
                orbit.diagnostic = Some(diagnostic);
                return Ok(orbit);
            }
        }
        if t >= t_end {
            return Ok(orbit);
        }
    }
    orbit.diagnostic = Some(format!("stopped after {} arcs", settings.max_arcs));
    Ok(orbit)
}

fn landing_transition(
    sys: &NonSmoothSystem,
    from: Regime,
    q: Vec2,
) -> Result<(TransitionKind, Regime), String> {
    let class = sys.classify_point(q).map_err(|e| e.to_string())?;
    match (class, from) {
        (SigmaClass::Sewing, Regime::X1) => Ok((TransitionKind::SewingCrossing, Regime::X2)),
        (SigmaClass::Sewing, Regime::X2) => Ok((TransitionKind::SewingCrossing, Regime::X1)),
        (SigmaClass::Sliding, _) => Ok((TransitionKind::SlidingEntry, Regime::Sliding)),
        (class, _) => Err(format!(
            "orbit reached ({}, {}) classified {}; truncated",
            q.x,
            q.y,
            class.label()
        )),
    }
}

fn fold_exit(
    sys: &NonSmoothSystem,
    which: Which,
    q: Vec2,
) -> Result<(TransitionKind, Regime), String> {
    let second = sys.lie_second(which, q).map_err(|e| e.to_string())?;
    let visible = match which {
        Which::X1 => second > 0.0,
        Which::X2 => second < 0.0,
    };
    if visible {
        Ok((TransitionKind::FoldExit(which), Regime::field(which)))
    } else {
        Err(format!(
            "sliding orbit reached an invisible fold of {which:?} at ({}, {}); it cannot leave Σ there",
            q.x, q.y
        ))
    }
}

// -- fold-to-return arcs -------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ArcKind {
    Focal,
    Graphic,
    /// More than one fold between the fold and the return point.
    Neither(usize),
}

#[derive(Clone, Debug, Serialize)]
pub struct ArcKindReport {
    pub kind: ArcKind,
    pub which: Which,
    pub fold: Vec2,
    pub return_point: Vec2,
    /// Σ folds strictly between the fold and the return point.
    pub folds_between: Vec<FoldPoint>,
    pub arc: Arc,
}

/// Follow the arc of `Xi` from its visible fold back to Σ and count the
/// folds it encloses on Σ.
pub fn arc_kind(
    sys: &NonSmoothSystem,
    fold: Vec2,
    settings: &FlowSettings,
) -> Result<ArcKindReport, FlowError> {
    let fold = sys.project_to_sigma(fold);
    let class = sys.classify_point(fold)?;
    let SigmaClass::FoldVisible(which) = class else {
        return Err(FlowError::NotAVisibleFold {
            point: fold,
            class: class.label(),
        });
    };
    let stop = StopSpec {
        crossing: true,
        folds: false,
        pseudo_equilibria: false,
    };
    let arc = integrate_arc(sys, Regime::field(which), fold, stop, settings)?;
    if arc.terminal != TerminalEvent::CrossedSigma {
        return Err(FlowError::NoReturn {
            terminal: arc.terminal,
        });
    }
    let b = arc.end();
    let sa = sys.sigma_param(fold)?;
    let sb = sys.sigma_param(b)?;
    let (lo, hi) = (sa.min(sb), sa.max(sb));
    let margin = 1e-7 * (1.0 + hi.abs().max(lo.abs()));
    let folds_between: Vec<FoldPoint> = sys
        .fold_census(lo, hi)
        .into_iter()
        .filter(|p| p.s > lo + margin && p.s < hi - margin)
        .collect();
    let kind = match folds_between.len() {
        0 => ArcKind::Focal,
        1 => ArcKind::Graphic,
        n => ArcKind::Neither(n),
    };
    Ok(ArcKindReport {
        kind,
        which,
        fold,
        return_point: b,
        folds_between,
        arc,
    })
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
    fn constant_field_hits_sigma_after_unit_time() {
        let sys = NonSmoothSystem::parse(["x+y-1", "-x+y+1"], ["1", "2"], "x").unwrap();
        let arc = integrate_arc(
            &sys,
            Regime::X2,
            Vec2::new(-1.0, -1.0),
            StopSpec::default(),
            &FlowSettings::default(),
        )
        .unwrap();
        assert_eq!(arc.terminal, TerminalEvent::CrossedSigma);
        assert!(arc.end().dist(Vec2::new(0.0, 1.0)) < 1e-10);
        assert!((arc.duration() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sliding_arc_runs_to_the_fold() {
        let sys = sec61(0.25);
        let arc = integrate_arc(
            &sys,
            Regime::Sliding,
            Vec2::new(1.5, 0.0),
            StopSpec::default(),
            &FlowSettings::default(),
        )
        .unwrap();
        assert_eq!(arc.terminal, TerminalEvent::HitFold(Which::X1));
        assert!(arc.end().dist(Vec2::new(-1.0, 0.0)) < 1e-9);
        assert!(arc.points.windows(2).all(|w| w[1].x <= w[0].x));
    }

    #[test]
    fn sliding_stalls_before_double_zero() {
        let sys = sec61(0.0);
        let settings = FlowSettings {
            t_max: 50.0,
            ..Default::default()
        };
        let arc = integrate_arc(
            &sys,
            Regime::Sliding,
            Vec2::new(1.5, 0.0),
            StopSpec::default(),
            &settings,
        )
        .unwrap();
        assert_eq!(arc.terminal, TerminalEvent::TimeBudget);
        assert!(arc.end().x > 1.0);
    }

    #[test]
    fn sewing_crossing_of_identical_fields() {
        let sys = NonSmoothSystem::parse(["0", "-1"], ["0", "-1"], "y").unwrap();
        let settings = FlowSettings {
            t_max: 3.0,
            ..Default::default()
        };
        let orbit = hybrid_orbit(&sys, Vec2::new(0.0, 1.0), &settings).unwrap();
        assert_eq!(orbit.arcs.len(), 2);
        assert_eq!(orbit.transitions[0].kind, TransitionKind::SewingCrossing);
        assert!(orbit.transitions[0].point.dist(Vec2::ZERO) < 1e-12);
        assert_eq!(orbit.arcs[1].regime, Regime::X2);
        assert!(orbit.end().dist(Vec2::new(0.0, -2.0)) < 1e-9);
    }

    #[test]
    fn attractor_absorbs_sliding_orbit() {
        let sys = NonSmoothSystem::parse(["-x", "-1"], ["-x", "1"], "y").unwrap();
        let orbit = hybrid_orbit(&sys, Vec2::new(1.0, 1.0), &FlowSettings::default()).unwrap();
        assert_eq!(orbit.terminal(), Some(TerminalEvent::HitPseudoEquilibrium));
        assert_eq!(orbit.transitions[0].kind, TransitionKind::SlidingEntry);
        assert!(orbit.end().norm() < 1e-8);
    }

    #[test]
    fn csv_layout() {
        let sys = NonSmoothSystem::parse(["0", "-1"], ["0", "-1"], "y").unwrap();
        let settings = FlowSettings {
            t_max: 0.5,
            ..Default::default()
        };
        let orbit = hybrid_orbit(&sys, Vec2::new(0.0, 1.0), &settings).unwrap();
        let csv = orbit.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x,y,regime"));
        assert_eq!(
            lines.next(),
            Some("0.000000000000e+00,0.000000000000e+00,1.000000000000e+00,X1")
        );
    }
}
