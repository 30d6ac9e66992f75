//! Two-zone planar systems `X1` on `{f > 0}`, `X2` on `{f < 0}`, and the
//! pointwise structure of the switching manifold `Σ = {f = 0}`.
//!
//! Lie derivatives `Li = Xi·f = <∇f, Xi>` and `Li² = Xi·(Xi·f)` are built
//! symbolically once at construction. The direction function `H` is the
//! tangential component of the Filippov field in the orthonormal frame
//! `(t, n)` with `n = ∇f/|∇f|`:
//!
//! ```text
//! H = (T1·N2 − T2·N1) / (N2 − N1),   Ti = <Xi, t>,  Ni = <Xi, n>
//! ```
//!
//! which is the `p(z) − z` displacement of the straightened chart.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ParseError};
use crate::geometry::Vec2;
use crate::roots::{self, Multiplicity, ScanSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    X1,
    X2,
}

impl Which {
    pub fn other(self) -> Which {
        match self {
            Which::X1 => Which::X2,
            Which::X2 => Which::X1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PseudoKind {
    SigmaSaddle,
    SigmaAttractor,
    SigmaRepeller,
    NonHyperbolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DegenerateReason {
    /// `∇f` vanishes; the chart cannot be straightened.
    SingularSwitching,
    /// Both fields are tangent to Σ.
    DoubleTangency,
    /// First and second Lie derivatives of one field vanish together.
    HigherOrderTangency(Which),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SigmaClass {
    Sewing,
    Escaping,
    Sliding,
    FoldVisible(Which),
    FoldInvisible(Which),
    PseudoEquilibrium(PseudoKind),
    Degenerate(DegenerateReason),
}

impl SigmaClass {
    pub fn label(&self) -> String {
        match self {
            SigmaClass::Sewing => "Sewing".into(),
            SigmaClass::Escaping => "Escaping".into(),
            SigmaClass::Sliding => "Sliding".into(),
            SigmaClass::FoldVisible(w) => format!("FoldVisible({w:?})"),
            SigmaClass::FoldInvisible(w) => format!("FoldInvisible({w:?})"),
            SigmaClass::PseudoEquilibrium(k) => format!("PseudoEquilibrium({k:?})"),
            SigmaClass::Degenerate(r) => format!("Degenerate({r:?})"),
        }
    }

    pub fn is_fold(&self) -> bool {
        matches!(
            self,
            SigmaClass::FoldVisible(_) | SigmaClass::FoldInvisible(_)
        )
    }

    /// Σ-singular points: folds, pseudo-equilibria and degenerate points.
    pub fn is_singular(&self) -> bool {
        !matches!(
            self,
            SigmaClass::Sewing | SigmaClass::Escaping | SigmaClass::Sliding
        )
    }
}

/// Numerical tolerances shared by the analyses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative tangency band `τ = tangency·(1 + local magnitude)`.
    pub tangency: f64,
    /// `|f(q)|` allowed for a point to count as lying on Σ, relative to `1 + |q|`.
    pub on_manifold: f64,
    /// Event localization tolerance.
    pub event: f64,
    /// `|H|` below which an extremum counts as a double zero.
    pub double_zero: f64,
    /// Samples per scanned interval.
    pub scan_samples: usize,
    /// Linear-independence threshold on `|det[X1 X2]|`.
    pub independence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tangency: 1e-9,
            on_manifold: 1e-8,
            event: 1e-10,
            double_zero: 1e-10,
            scan_samples: 1000,
            independence: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SystemError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("point ({}, {}) is not on the switching manifold (|f| = {residual:e})", point.x + 0.0, point.y + 0.0)]
    NotOnSigma { point: Vec2, residual: f64 },
    #[error("point ({}, {}) is not in the sliding or escaping region ({class})", point.x + 0.0, point.y + 0.0)]
    NotInSlidingRegion { point: Vec2, class: String },
    #[error("gradient of f vanishes at ({}, {}); cannot straighten Σ", point.x + 0.0, point.y + 0.0)]
    DegenerateFrame { point: Vec2 },
    #[error("direction function undefined at ({}, {}): X1·f = X2·f", point.x + 0.0, point.y + 0.0)]
    Undefined { point: Vec2 },
    #[error("could not locate a point of the switching manifold to start its parameterization")]
    NoSigmaPoint,
}

/// Parameterization of Σ by a scalar `s`.
#[derive(Debug)]
pub enum SigmaChart {
    /// Affine `f`: `point(s) = origin + s·tangent`. For `f = y` this is
    /// `s = x`; for `f = x` it is `s = y`.
    Line { origin: Vec2, tangent: Vec2 },
    /// General `f`: arclength from a seed, traced numerically.
    Curve(CurveChart),
}

#[derive(Debug)]
pub struct CurveChart {
    seed: Vec2,
    table: OnceLock<Option<CurveTable>>,
}

#[derive(Debug)]
struct CurveTable {
    s: Vec<f64>,
    p: Vec<Vec2>,
    /// Total length when the traced curve closes up.
    period: Option<f64>,
}

const CURVE_STEP: f64 = 2e-3;
const CURVE_MAX_LENGTH: f64 = 60.0;

/// A two-zone non-smooth planar system with its cached symbolic data.
#[derive(Debug)]
pub struct NonSmoothSystem {
    x1: [Expr; 2],
    x2: [Expr; 2],
    f: Expr,
    grad_f: [Expr; 2],
    lie: [Expr; 2],
    lie2: [Expr; 2],
    grad_lie: [[Expr; 2]; 2],
    normal: [Expr; 2],
    tangent: [Expr; 2],
    h: Expr,
    dh: Expr,
    chart: SigmaChart,
    pub tol: Tolerances,
}

/// Components of `X1`, `X2` in the frame `(t, n)` at a point of Σ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameComponents {
    pub t1: f64,
    pub n1: f64,
    pub t2: f64,
    pub n2: f64,
}

impl FrameComponents {
    /// `det[X1 X2]` in the straightened frame.
    pub fn det(&self) -> f64 {
        self.t1 * self.n2 - self.t2 * self.n1
    }
}

fn dot(a: &[Expr; 2], b: &[Expr; 2]) -> Expr {
    a[0].clone() * b[0].clone() + a[1].clone() * b[1].clone()
}

impl NonSmoothSystem {
    pub fn new(x1: [Expr; 2], x2: [Expr; 2], f: Expr) -> Self {
        let grad_f = f.gradient();
        let lie = [dot(&grad_f, &x1), dot(&grad_f, &x2)];
        let grad_lie = [lie[0].gradient(), lie[1].gradient()];
        let lie2 = [dot(&grad_lie[0], &x1), dot(&grad_lie[1], &x2)];

        let affine = grad_f[0].as_const().zip(grad_f[1].as_const());
        let (chart, tangent, normal) = match affine {
            Some((a, b)) if a != 0.0 || b != 0.0 => {
                let c = f.eval(0.0, 0.0).unwrap_or(0.0);
                let g2 = a * a + b * b;
                let origin = Vec2::new(-c * a / g2, -c * b / g2);
                let mut t = Vec2::new(b, -a).normalized();
                let flip = if b.abs() >= a.abs() {
                    t.x < 0.0
                } else {
                    t.y < 0.0
                };
                if flip {
                    t = -t;
                }
                let n = Vec2::new(a, b).normalized();
                (
                    SigmaChart::Line { origin, tangent: t },
                    [Expr::Const(t.x), Expr::Const(t.y)],
                    [Expr::Const(n.x), Expr::Const(n.y)],
                )
            }
            _ => {
                let norm = (grad_f[0].clone().powf(2.0) + grad_f[1].clone().powf(2.0)).sqrt();
                let n = [grad_f[0].clone() / norm.clone(), grad_f[1].clone() / norm];
                let t = [-n[1].clone(), n[0].clone()];
                let chart = SigmaChart::Curve(CurveChart {
                    seed: find_sigma_seed(&f, &grad_f).unwrap_or(Vec2::new(f64::NAN, f64::NAN)),
                    table: OnceLock::new(),
                });
                (chart, t, n)
            }
        };

        let t1 = dot(&x1, &tangent);
        let t2 = dot(&x2, &tangent);
        let n1 = dot(&x1, &normal);
        let n2 = dot(&x2, &normal);
        let h = (t1 * n2.clone() - t2 * n1.clone()) / (n2 - n1);
        let dh = dot(&h.gradient(), &tangent);

        NonSmoothSystem {
            x1,
            x2,
            f,
            grad_f,
            lie,
            lie2,
            grad_lie,
            normal,
            tangent,
            h,
            dh,
            chart,
            tol: Tolerances::default(),
        }
    }

    /// Parse the five component strings.
    pub fn parse(x1: [&str; 2], x2: [&str; 2], f: &str) -> Result<Self, ParseError> {
        Ok(NonSmoothSystem::new(
            [expr::parse(x1[0])?, expr::parse(x1[1])?],
            [expr::parse(x2[0])?, expr::parse(x2[1])?],
            expr::parse(f)?,
        ))
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    /// Start the arclength parameterization of a curved Σ at `seed`
    /// (projected onto Σ). No effect for affine switching functions.
    pub fn with_sigma_seed(mut self, seed: Vec2) -> Self {
        if let SigmaChart::Curve(_) = self.chart {
            let projected = newton_project(&self.f, &self.grad_f, seed).unwrap_or(seed);
            self.chart = SigmaChart::Curve(CurveChart {
                seed: projected,
                table: OnceLock::new(),
            });
        }
        self
    }

    /// The system `(-X1, -X2, f)`.
    pub fn reversed(&self) -> NonSmoothSystem {
        let neg = |v: &[Expr; 2]| [-v[0].clone(), -v[1].clone()];
        let mut out = NonSmoothSystem::new(neg(&self.x1), neg(&self.x2), self.f.clone());
        out.tol = self.tol;
        if let SigmaChart::Curve(c) = &self.chart {
            out = out.with_sigma_seed(c.seed);
        }
        out
    }

    pub fn x1(&self) -> &[Expr; 2] {
        &self.x1
    }

    pub fn x2(&self) -> &[Expr; 2] {
        &self.x2
    }

    pub fn f(&self) -> &Expr {
        &self.f
    }

    pub fn field_exprs(&self, which: Which) -> &[Expr; 2] {
        match which {
            Which::X1 => &self.x1,
            Which::X2 => &self.x2,
        }
    }

    pub fn chart(&self) -> &SigmaChart {
        &self.chart
    }

    /// `Xi·f` (order 1) or `Xi·(Xi·f)` (order 2).
    pub fn lie_derivative(&self, which: Which, order: u8) -> &Expr {
        let i = which as usize;
        match order {
            1 => &self.lie[i],
            2 => &self.lie2[i],
            _ => panic!("Lie derivative order must be 1 or 2"),
        }
    }

    /// Symbolic direction function in `(x, y)`.
    pub fn direction_expr(&self) -> &Expr {
        &self.h
    }

    // -- pointwise evaluation ------------------------------------------------

    pub fn eval_f(&self, q: Vec2) -> Result<f64, EvalError> {
        self.f.eval(q.x, q.y)
    }

    pub fn grad_f(&self, q: Vec2) -> Result<Vec2, EvalError> {
        Ok(Vec2::new(
            self.grad_f[0].eval(q.x, q.y)?,
            self.grad_f[1].eval(q.x, q.y)?,
        ))
    }

    pub fn field(&self, which: Which, q: Vec2) -> Result<Vec2, EvalError> {
        let v = self.field_exprs(which);
        Ok(Vec2::new(v[0].eval(q.x, q.y)?, v[1].eval(q.x, q.y)?))
    }

    /// Discontinuous field: `X1` where `f > 0`, `X2` where `f < 0`.
    /// On Σ itself `X1` is returned.
    pub fn field_at(&self, q: Vec2) -> Result<Vec2, EvalError> {
        if self.eval_f(q)? >= 0.0 {
            self.field(Which::X1, q)
        } else {
            self.field(Which::X2, q)
        }
    }

    pub fn lie(&self, which: Which, q: Vec2) -> Result<f64, EvalError> {
        self.lie[which as usize].eval(q.x, q.y)
    }

    pub fn lie_second(&self, which: Which, q: Vec2) -> Result<f64, EvalError> {
        self.lie2[which as usize].eval(q.x, q.y)
    }

    /// Derivative of `Xi·f` along the Σ tangent.
    pub fn lie_slope(&self, which: Which, q: Vec2) -> Result<f64, EvalError> {
        let g = &self.grad_lie[which as usize];
        let t = self.tangent_at(q)?;
        Ok(g[0].eval(q.x, q.y)? * t.x + g[1].eval(q.x, q.y)? * t.y)
    }

    pub fn tangent_at(&self, q: Vec2) -> Result<Vec2, EvalError> {
        Ok(Vec2::new(
            self.tangent[0].eval(q.x, q.y)?,
            self.tangent[1].eval(q.x, q.y)?,
        ))
    }

    pub fn normal_at(&self, q: Vec2) -> Result<Vec2, EvalError> {
        Ok(Vec2::new(
            self.normal[0].eval(q.x, q.y)?,
            self.normal[1].eval(q.x, q.y)?,
        ))
    }

    pub fn frame_components(&self, q: Vec2) -> Result<FrameComponents, SystemError> {
        let g = self.grad_f(q)?;
        if g.norm() <= self.tol.tangency {
            return Err(SystemError::DegenerateFrame { point: q });
        }
        let t = self.tangent_at(q)?;
        let n = self.normal_at(q)?;
        let a = self.field(Which::X1, q)?;
        let b = self.field(Which::X2, q)?;
        Ok(FrameComponents {
            t1: a.dot(t),
            n1: a.dot(n),
            t2: b.dot(t),
            n2: b.dot(n),
        })
    }

    fn tau(&self, scale: f64) -> f64 {
        self.tol.tangency * (1.0 + scale)
    }

    fn check_on_sigma(&self, q: Vec2) -> Result<(), SystemError> {
        let r = self.eval_f(q)?;
        if r.abs() > self.tol.on_manifold * (1.0 + q.norm()) {
            return Err(SystemError::NotOnSigma {
                point: q,
                residual: r.abs(),
            });
        }
        Ok(())
    }

    /// Classify a point of Σ by the sign pattern of the Lie derivatives.
    pub fn classify_point(&self, q: Vec2) -> Result<SigmaClass, SystemError> {
        self.check_on_sigma(q)?;
        let g = self.grad_f(q)?;
        let gn = g.norm();
        if gn <= self.tol.tangency {
            return Ok(SigmaClass::Degenerate(DegenerateReason::SingularSwitching));
        }
        let a = self.field(Which::X1, q)?;
        let b = self.field(Which::X2, q)?;
        let l1 = self.lie(Which::X1, q)?;
        let l2 = self.lie(Which::X2, q)?;
        let z1 = l1.abs() <= self.tau(a.norm() * gn);
        let z2 = l2.abs() <= self.tau(b.norm() * gn);
        if z1 && z2 {
            return Ok(SigmaClass::Degenerate(DegenerateReason::DoubleTangency));
        }
        for (which, zero, v) in [(Which::X1, z1, a), (Which::X2, z2, b)] {
            if !zero {
                continue;
            }
            let second = self.lie_second(which, q)?;
            let gl = &self.grad_lie[which as usize];
            let glen = Vec2::new(gl[0].eval(q.x, q.y)?, gl[1].eval(q.x, q.y)?).norm();
            if second.abs() <= self.tau(v.norm() * glen) {
                return Ok(SigmaClass::Degenerate(
                    DegenerateReason::HigherOrderTangency(which),
                ));
            }
            let visible = match which {
                Which::X1 => second > 0.0,
                Which::X2 => second < 0.0,
            };
            return Ok(if visible {
                SigmaClass::FoldVisible(which)
            } else {
                SigmaClass::FoldInvisible(which)
            });
        }
        if l1 * l2 > 0.0 {
            return Ok(SigmaClass::Sewing);
        }
        let sliding = l1 < 0.0;
        let scale = a.norm() + b.norm();
        let h = self.h.eval(q.x, q.y)?;
        if h.abs() <= self.tau(scale) {
            let dh = self.dh.eval(q.x, q.y)?;
            let kind = if dh.abs() <= self.tau(scale) {
                PseudoKind::NonHyperbolic
            } else {
                match (sliding, dh < 0.0) {
                    (true, true) => PseudoKind::SigmaAttractor,
                    (true, false) => PseudoKind::SigmaSaddle,
                    (false, true) => PseudoKind::SigmaSaddle,
                    (false, false) => PseudoKind::SigmaRepeller,
                }
            };
            return Ok(SigmaClass::PseudoEquilibrium(kind));
        }
        Ok(if sliding {
            SigmaClass::Sliding
        } else {
            SigmaClass::Escaping
        })
    }

    /// Filippov field `(L2·X1 − L1·X2)/(L2 − L1)` on the closure of the
    /// sliding and escaping regions.
    pub fn sliding_field(&self, q: Vec2) -> Result<Vec2, SystemError> {
        self.check_on_sigma(q)?;
        let a = self.field(Which::X1, q)?;
        let b = self.field(Which::X2, q)?;
        let l1 = self.lie(Which::X1, q)?;
        let l2 = self.lie(Which::X2, q)?;
        let gn = self.grad_f(q)?.norm();
        let tau = self.tau((a.norm() + b.norm()) * gn);
        if l1 * l2 > 0.0 || (l2 - l1).abs() <= tau {
            let class = self
                .classify_point(q)
                .map(|c| c.label())
                .unwrap_or_else(|e| e.to_string());
            return Err(SystemError::NotInSlidingRegion { point: q, class });
        }
        Ok((a * l2 - b * l1) * (1.0 / (l2 - l1)))
    }

    /// Direction function at a point of Σ.
    pub fn direction_at(&self, q: Vec2) -> Result<f64, SystemError> {
        let fc = self.frame_components(q)?;
        let denom = fc.n2 - fc.n1;
        if denom.abs() <= self.tau(fc.t1.abs() + fc.t2.abs() + fc.n1.abs() + fc.n2.abs()) {
            return Err(SystemError::Undefined { point: q });
        }
        Ok(fc.det() / denom)
    }

    /// Derivative of `H` along Σ at `q`.
    pub fn direction_slope(&self, q: Vec2) -> Result<f64, EvalError> {
        self.dh.eval(q.x, q.y)
    }

    /// Direction function at Σ-parameter `s`.
    pub fn direction_function(&self, s: f64) -> Result<f64, SystemError> {
        let q = self.sigma_point(s)?;
        self.direction_at(q)
    }

    // -- Σ parameterization --------------------------------------------------

    pub fn sigma_point(&self, s: f64) -> Result<Vec2, SystemError> {
        match &self.chart {
            SigmaChart::Line { origin, tangent } => Ok(*origin + *tangent * s),
            SigmaChart::Curve(c) => c.point(self, s),
        }
    }

    pub fn sigma_param(&self, q: Vec2) -> Result<f64, SystemError> {
        match &self.chart {
            SigmaChart::Line { origin, tangent } => Ok((q - *origin).dot(*tangent)),
            SigmaChart::Curve(c) => c.param(self, q),
        }
    }

    /// Length of Σ when it is a closed curve.
    pub fn sigma_period(&self) -> Option<f64> {
        match &self.chart {
            SigmaChart::Line { .. } => None,
            SigmaChart::Curve(c) => c.table(self).and_then(|t| t.period),
        }
    }

    /// Project a point onto Σ (exact for affine `f`).
    pub fn project_to_sigma(&self, q: Vec2) -> Vec2 {
        match &self.chart {
            SigmaChart::Line { origin, tangent } => {
                *origin + *tangent * (q - *origin).dot(*tangent)
            }
            SigmaChart::Curve(_) => newton_project(&self.f, &self.grad_f, q).unwrap_or(q),
        }
    }

    fn scan_settings(&self) -> ScanSettings {
        ScanSettings {
            samples: self.tol.scan_samples,
            x_tol: 1e-12,
            double_tol: self.tol.double_zero,
        }
    }

    /// Value of `H` at parameter `s` when `s` lies in the closure of the
    /// sliding/escaping region, `None` otherwise.
    pub fn direction_on_slide(&self, s: f64) -> Option<f64> {
        let q = self.sigma_point(s).ok()?;
        let l1 = self.lie(Which::X1, q).ok()?;
        let l2 = self.lie(Which::X2, q).ok()?;
        if l1 * l2 > 0.0 {
            return None;
        }
        self.direction_at(q).ok()
    }

    /// Zeros of the sliding field on `[a, b]` with their classification.
    pub fn pseudo_equilibria(&self, a: f64, b: f64) -> Vec<PseudoEquilibrium> {
        let g = |s: f64| self.direction_on_slide(s);
        let dg = |s: f64| {
            let q = self.sigma_point(s).ok()?;
            self.direction_slope(q).ok()
        };
        roots::scan_zeros(g, dg, a, b, self.scan_settings())
            .into_iter()
            .filter_map(|z| {
                let point = self.sigma_point(z.s).ok()?;
                let class = self.classify_point(point).ok()?;
                let class = match (z.multiplicity, class) {
                    (_, c @ SigmaClass::PseudoEquilibrium(_)) => c,
                    (Multiplicity::Double, _) => {
                        SigmaClass::PseudoEquilibrium(PseudoKind::NonHyperbolic)
                    }
                    (_, c) => c,
                };
                Some(PseudoEquilibrium {
                    s: z.s,
                    point,
                    class,
                    multiplicity: z.multiplicity,
                })
            })
            .collect()
    }

    /// Tangency points of either field on `[a, b]`.
    pub fn fold_census(&self, a: f64, b: f64) -> Vec<FoldPoint> {
        let mut out = Vec::new();
        for which in [Which::X1, Which::X2] {
            let g = |s: f64| {
                let q = self.sigma_point(s).ok()?;
                self.lie(which, q).ok()
            };
            let dg = |s: f64| {
                let q = self.sigma_point(s).ok()?;
                self.lie_slope(which, q).ok()
            };
            for z in roots::scan_zeros(g, dg, a, b, self.scan_settings()) {
                let Ok(point) = self.sigma_point(z.s) else {
                    continue;
                };
                let Ok(class) = self.classify_point(point) else {
                    continue;
                };
                out.push(FoldPoint {
                    s: z.s,
                    point,
                    which,
                    class,
                });
            }
        }
        out.sort_by(|p, q| p.s.total_cmp(&q.s));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PseudoEquilibrium {
    pub s: f64,
    pub point: Vec2,
    pub class: SigmaClass,
    pub multiplicity: Multiplicity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FoldPoint {
    pub s: f64,
    pub point: Vec2,
    pub which: Which,
    pub class: SigmaClass,
}

impl FoldPoint {
    pub fn is_visible(&self) -> bool {
        matches!(self.class, SigmaClass::FoldVisible(_))
    }
}

// -- curved Σ ----------------------------------------------------------------

fn newton_project(f: &Expr, grad: &[Expr; 2], mut q: Vec2) -> Option<Vec2> {
    for _ in 0..50 {
        let v = f.eval(q.x, q.y).ok()?;
        let g = Vec2::new(grad[0].eval(q.x, q.y).ok()?, grad[1].eval(q.x, q.y).ok()?);
        let g2 = g.dot(g);
        if g2 == 0.0 || !g2.is_finite() {
            return None;
        }
        let step = g * (v / g2);
        q = q - step;
        if step.norm() <= 1e-15 * (1.0 + q.norm()) {
            break;
        }
    }
    let v = f.eval(q.x, q.y).ok()?;
    (v.abs() <= 1e-12 * (1.0 + q.norm())).then_some(q)
}

fn find_sigma_seed(f: &Expr, grad: &[Expr; 2]) -> Option<Vec2> {
    const STARTS: [(f64, f64); 9] = [
        (1.0, 0.0),
        (0.0, 1.0),
        (-1.0, 0.0),
        (0.0, -1.0),
        (0.5, 0.5),
        (2.0, 0.0),
        (0.0, 2.0),
        (0.1, 0.1),
        (0.0, 0.0),
    ];
    STARTS
        .iter()
        .find_map(|&(x, y)| newton_project(f, grad, Vec2::new(x, y)))
}

impl CurveChart {
    fn table(&self, sys: &NonSmoothSystem) -> Option<&CurveTable> {
        self.table
            .get_or_init(|| trace_curve(sys, self.seed))
            .as_ref()
    }

    fn point(&self, sys: &NonSmoothSystem, s: f64) -> Result<Vec2, SystemError> {
        let table = self.table(sys).ok_or(SystemError::NoSigmaPoint)?;
        let mut s = s;
        if let Some(period) = table.period {
            s = s.rem_euclid(period);
        }
        let n = table.s.len();
        let idx = table.s.partition_point(|&v| v <= s).clamp(1, n - 1);
        let (s0, s1) = (table.s[idx - 1], table.s[idx]);
        let (p0, p1) = (table.p[idx - 1], table.p[idx]);
        let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        let guess = p0 + (p1 - p0) * w;
        Ok(newton_project(&sys.f, &sys.grad_f, guess).unwrap_or(guess))
    }

    fn param(&self, sys: &NonSmoothSystem, q: Vec2) -> Result<f64, SystemError> {
        let table = self.table(sys).ok_or(SystemError::NoSigmaPoint)?;
        let (k, _) = table
            .p
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.dist(q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or(SystemError::NoSigmaPoint)?;
        let mut best = (table.s[k], table.p[k].dist(q));
        for j in k.checked_sub(1).into_iter().chain([k]) {
            if j + 1 >= table.p.len() {
                continue;
            }
            let (a, b) = (table.p[j], table.p[j + 1]);
            let ab = b - a;
            let w = ((q - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            let d = (a + ab * w).dist(q);
            if d < best.1 {
                best = (table.s[j] + w * (table.s[j + 1] - table.s[j]), d);
            }
        }
        Ok(best.0)
    }
}

fn trace_curve(sys: &NonSmoothSystem, seed: Vec2) -> Option<CurveTable> {
    if !seed.is_finite() {
        return None;
    }
    let tangent = |q: Vec2| -> Option<Vec2> {
        let t = sys.tangent_at(q).ok()?;
        t.is_finite().then_some(t)
    };
    let step = |q: Vec2, h: f64| -> Option<Vec2> {
        let k1 = tangent(q)?;
        let k2 = tangent(q + k1 * (0.5 * h))?;
        let k3 = tangent(q + k2 * (0.5 * h))?;
        let k4 = tangent(q + k3 * h)?;
        let next = q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        newton_project(&sys.f, &sys.grad_f, next)
    };
    let max_n = (CURVE_MAX_LENGTH / CURVE_STEP) as usize;
    let mut fwd = vec![seed];
    let mut period = None;
    for i in 1..=max_n {
        let Some(next) = step(*fwd.last().unwrap(), CURVE_STEP) else {
            break;
        };
        if i > 10 && next.dist(seed) < 1.5 * CURVE_STEP {
            // closed: the next sample would wrap past the seed
            let last = *fwd.last().unwrap();
            period = Some(i as f64 * CURVE_STEP - CURVE_STEP + last.dist(seed));
            break;
        }
        fwd.push(next);
    }
    let mut s: Vec<f64> = (0..fwd.len()).map(|i| i as f64 * CURVE_STEP).collect();
    let mut p = fwd;
    if let Some(per) = period {
        s.push(per);
        p.push(seed);
    } else {
        let mut bwd = Vec::new();
        let mut q = seed;
        for _ in 1..=max_n {
            let Some(next) = step(q, -CURVE_STEP) else {
                break;
            };
            bwd.push(next);
            q = next;
        }
        let nb = bwd.len();
        let mut s_all: Vec<f64> = (0..nb).map(|i| -((nb - i) as f64) * CURVE_STEP).collect();
        let mut p_all: Vec<Vec2> = bwd.into_iter().rev().collect();
        s_all.extend(s);
        p_all.extend(p);
        s = s_all;
        p = p_all;
    }
    (p.len() >= 2).then_some(CurveTable { s, p, period })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec61() -> NonSmoothSystem {
        NonSmoothSystem::parse(["x+y-1", "-x+y-1"], ["-x^2+(3/2)*x-1/2", "1"], "y").unwrap()
    }

    fn circle() -> NonSmoothSystem {
        NonSmoothSystem::parse(["-x-y", "x-y"], ["x-y", "x+y"], "x^2+y^2-1").unwrap()
    }

    #[test]
    fn lie_derivatives_on_sigma() {
        let sys = sec61();
        for &x in &[-2.0, -0.5, 0.0, 1.0, 3.0] {
            let q = Vec2::new(x, 0.0);
            assert_eq!(sys.lie(Which::X1, q).unwrap(), -x - 1.0);
            assert_eq!(sys.lie(Which::X2, q).unwrap(), 1.0);
            assert_eq!(sys.lie_second(Which::X1, q).unwrap(), -2.0 * x);
        }
    }

    #[test]
    fn classification_examples() {
        let sys = sec61();
        let c = |x: f64| sys.classify_point(Vec2::new(x, 0.0)).unwrap();
        assert_eq!(c(-2.0), SigmaClass::Sewing);
        assert_eq!(c(0.0), SigmaClass::Sliding);
        assert_eq!(c(-1.0), SigmaClass::FoldVisible(Which::X1));
        assert_eq!(
            c(1.0),
            SigmaClass::PseudoEquilibrium(PseudoKind::NonHyperbolic)
        );
        assert!(matches!(
            sys.classify_point(Vec2::new(0.0, 0.5)),
            Err(SystemError::NotOnSigma { .. })
        ));
    }

    #[test]
    fn sliding_field_examples() {
        let sys = sec61();
        let v = sys.sliding_field(Vec2::new(0.5, 0.0)).unwrap();
        assert!((v.x + 0.2).abs() < 1e-15 && v.y.abs() < 1e-15);
        let v = sys.sliding_field(Vec2::new(1.0, 0.0)).unwrap();
        assert!(v.norm() < 1e-15);
        assert!(matches!(
            sys.sliding_field(Vec2::new(-2.0, 0.0)),
            Err(SystemError::NotInSlidingRegion { .. })
        ));
        let tangent = NonSmoothSystem::parse(["2", "0"], ["2", "0"], "y").unwrap();
        assert!(matches!(
            tangent.sliding_field(Vec2::new(0.3, 0.0)),
            Err(SystemError::NotInSlidingRegion { .. })
        ));
    }

    #[test]
    fn direction_function_values() {
        let sys = sec61();
        assert!((sys.direction_function(0.5).unwrap() + 0.2).abs() < 1e-15);
        assert!((sys.direction_function(1.5).unwrap() + 3.0 / 14.0).abs() < 1e-15);
        assert!(sys.direction_function(1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn pseudo_equilibria_scan() {
        let sys = sec61();
        let pe = sys.pseudo_equilibria(0.0, 2.0);
        assert_eq!(pe.len(), 1);
        assert!((pe[0].point.x - 1.0).abs() < 1e-9);
        assert_eq!(
            pe[0].class,
            SigmaClass::PseudoEquilibrium(PseudoKind::NonHyperbolic)
        );
        assert!(sys.pseudo_equilibria(-0.9, 0.9).is_empty());
    }

    #[test]
    fn coordinate_charts() {
        let sys = sec61();
        assert_eq!(sys.sigma_point(2.5).unwrap(), Vec2::new(2.5, 0.0));
        let fx = NonSmoothSystem::parse(["1", "0"], ["1", "0"], "x").unwrap();
        assert_eq!(fx.sigma_point(2.5).unwrap(), Vec2::new(0.0, 2.5));
        assert_eq!(fx.sigma_param(Vec2::new(0.0, -3.0)).unwrap(), -3.0);
        let shifted = NonSmoothSystem::parse(["1", "0"], ["1", "0"], "y + 0.5").unwrap();
        assert_eq!(shifted.sigma_point(1.0).unwrap(), Vec2::new(1.0, -0.5));
    }

    #[test]
    fn circle_is_all_sliding_with_rotation_field() {
        let sys = circle();
        let period = sys.sigma_period().expect("closed curve");
        assert!((period - 2.0 * std::f64::consts::PI).abs() < 1e-6);
        for k in 0..12 {
            let th = k as f64 * 0.5;
            let q = Vec2::new(th.cos(), th.sin());
            assert_eq!(sys.classify_point(q).unwrap(), SigmaClass::Sliding);
            let v = sys.sliding_field(q).unwrap();
            assert!((v - Vec2::new(-q.y, q.x)).norm() < 1e-12);
            let s = sys.sigma_param(q).unwrap();
            assert!(sys.sigma_point(s).unwrap().dist(q) < 1e-9);
        }
        assert!(sys.pseudo_equilibria(0.0, period).is_empty());
    }

    #[test]
    fn fold_census_sec61() {
        let sys = sec61();
        let folds = sys.fold_census(-5.0, 5.0);
        assert_eq!(folds.len(), 1);
        assert_eq!(folds[0].class, SigmaClass::FoldVisible(Which::X1));
        assert!((folds[0].s + 1.0).abs() < 1e-12);
    }
}
