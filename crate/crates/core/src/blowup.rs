//! Singular-perturbation problem on the blow-up locus of a regularization
//! with a coordinate switching function.
//!
//! With `f = x`, put `x = r cos θ`, `ε = r sin θ`. On `r = 0` the fast
//! system is `θ' = −sin θ · B(θ, y)`, `y' = 0`, where
//! `B = (N1 + N2)/2 + φ(cot θ)(N1 − N2)/2` blends the normal components
//! `Ni` of `Xi` on Σ. The slow manifold is `B = 0` with reduced flow
//! `ẏ = (T1 + T2)/2 + φ(cot θ)(T1 − T2)/2` from the tangential components.
//! For `f = y` the roles of the components swap and the Σ coordinate is `x`.

use std::f64::consts::FRAC_PI_4;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Var};
use crate::io::{Cell, CsvTable};
use crate::regularize::TransitionFunction;
use crate::roots::{scan_zeros, ScanSettings};
use crate::system::{NonSmoothSystem, Which};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum BlowupError {
    #[error("switching function must be x or y, got {0}")]
    NotCoordinate(String),
    #[error("theta must lie in (0, pi), got {0}")]
    ThetaOutOfRange(f64),
    #[error("invalid window [{0}, {1}]")]
    BadWindow(f64, f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The coordinate that `f` is equal to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Normal {
    X,
    Y,
}

#[derive(Clone, Debug)]
pub struct SPProblem {
    normal: Normal,
    phi: TransitionFunction,
    /// Normal mean and half-difference, tangential mean and half-difference,
    /// as functions of the Σ coordinate.
    n_mean: Expr,
    n_half: Expr,
    t_mean: Expr,
    t_half: Expr,
    dn_mean: Expr,
    dn_half: Expr,
}

fn half(e: Expr) -> Expr {
    Expr::Const(0.5) * e
}

/// Build the fast and reduced systems of the regularization of `sys`.
pub fn sp_from_regularization(
    sys: &NonSmoothSystem,
    phi: TransitionFunction,
) -> Result<SPProblem, BlowupError> {
    let normal = match sys.f().to_polynomial() {
        Some(p) if p.terms().count() == 1 && p.coefficient(1, 0) == 1.0 => Normal::X,
        Some(p) if p.terms().count() == 1 && p.coefficient(0, 1) == 1.0 => Normal::Y,
        _ => return Err(BlowupError::NotCoordinate(sys.f().to_string())),
    };
    let (nv, tv, ni, ti) = match normal {
        Normal::X => (Var::X, Var::Y, 0, 1),
        Normal::Y => (Var::Y, Var::X, 1, 0),
    };
    let zero = Expr::Const(0.0);
    let on_sigma = |w: Which, k: usize| sys.field_exprs(w)[k].substitute(nv, &zero);
    let (n1, n2) = (on_sigma(Which::X1, ni), on_sigma(Which::X2, ni));
    let (t1, t2) = (on_sigma(Which::X1, ti), on_sigma(Which::X2, ti));
    let n_mean = half(n1.clone() + n2.clone());
    let n_half = half(n1 - n2);
    Ok(SPProblem {
        normal,
        phi,
        dn_mean: n_mean.differentiate(tv),
        dn_half: n_half.differentiate(tv),
        n_mean,
        n_half,
        t_mean: half(t1.clone() + t2.clone()),
        t_half: half(t1 - t2),
    })
}

impl SPProblem {
    pub fn normal(&self) -> Normal {
        self.normal
    }

    pub fn transition(&self) -> &TransitionFunction {
        &self.phi
    }

    /// `(N1 + N2)/2`, `(N1 − N2)/2`, `(T1 + T2)/2`, `(T1 − T2)/2` on Σ.
    pub fn components(&self) -> [&Expr; 4] {
        [&self.n_mean, &self.n_half, &self.t_mean, &self.t_half]
    }

    fn at(&self, e: &Expr, s: f64) -> Result<f64, EvalError> {
        match self.normal {
            Normal::X => e.eval(0.0, s),
            Normal::Y => e.eval(s, 0.0),
        }
    }

    fn weight(&self, theta: f64) -> f64 {
        self.phi.eval(1.0 / theta.tan())
    }

    /// `B(θ, s)`; its zero set is the slow manifold.
    pub fn bracket(&self, theta: f64, s: f64) -> Result<f64, EvalError> {
        Ok(self.at(&self.n_mean, s)? + self.weight(theta) * self.at(&self.n_half, s)?)
    }

    pub fn bracket_slope(&self, theta: f64, s: f64) -> Result<f64, EvalError> {
        Ok(self.at(&self.dn_mean, s)? + self.weight(theta) * self.at(&self.dn_half, s)?)
    }

    /// Fast system on `r = 0`: `(θ', s')`, with `s' = 0`.
    pub fn fast(&self, theta: f64, s: f64) -> Result<(f64, f64), EvalError> {
        Ok((-theta.sin() * self.bracket(theta, s)?, 0.0))
    }

    /// Reduced flow along Σ at `(θ, s)`.
    pub fn reduced(&self, theta: f64, s: f64) -> Result<f64, EvalError> {
        Ok(self.at(&self.t_mean, s)? + self.weight(theta) * self.at(&self.t_half, s)?)
    }

    /// `B` vanishes identically (both normal components are zero on Σ).
    pub fn is_degenerate(&self) -> bool {
        self.n_mean.is_zero() && self.n_half.is_zero()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SlowSettings {
    pub samples: usize,
    /// Residual bound on `|B|` at reported roots.
    pub residual: f64,
}

impl Default for SlowSettings {
    fn default() -> Self {
        SlowSettings {
            samples: 2000,
            residual: 1e-10,
        }
    }
}

/// Roots of `B(θ, ·)` in `window`, polished to the residual bound.
pub fn slow_manifold(
    spp: &SPProblem,
    theta: f64,
    window: [f64; 2],
    settings: &SlowSettings,
) -> Result<Vec<f64>, BlowupError> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(BlowupError::ThetaOutOfRange(theta));
    }
    if !(window[0] < window[1]) {
        return Err(BlowupError::BadWindow(window[0], window[1]));
    }
    if spp.is_degenerate() {
        return Ok(Vec::new());
    }
    let g = |s: f64| spp.bracket(theta, s).ok();
    let dg = |s: f64| spp.bracket_slope(theta, s).ok();
    let scan = ScanSettings {
        samples: settings.samples,
        x_tol: 1e-15,
        double_tol: settings.residual,
    };
    let mut out = Vec::new();
    for z in scan_zeros(g, dg, window[0], window[1], scan) {
        let mut s = z.s;
        for _ in 0..20 {
            let (b, db) = (spp.bracket(theta, s)?, spp.bracket_slope(theta, s)?);
            if b.abs() < 1e-3 * settings.residual || db == 0.0 {
                break;
            }
            let next = s - b / db;
            if !next.is_finite() || (next - z.s).abs() > 1e-6 * (1.0 + z.s.abs()) {
                break;
            }
            s = next;
        }
        let scale = 1.0
            + spp
                .at(&spp.n_mean, s)?
                .abs()
                .max(spp.at(&spp.n_half, s)?.abs());
        if spp.bracket(theta, s)?.abs() < settings.residual * scale {
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub theta: f64,
    pub y: f64,
    pub dy_reduced: f64,
    /// `θ'` just above and below the manifold in the Σ coordinate.
    pub dtheta_fast_above: f64,
    pub dtheta_fast_below: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Branch {
    pub points: Vec<[f64; 2]>,
    /// Points where `∂B/∂s` changes sign along the branch.
    pub turning_points: Vec<[f64; 2]>,
}

/// Where the manifold meets the edge of the blend region at a Σ-fold: at
/// `θ = π/4` the bracket is `N1`, at `θ = 3π/4` it is `N2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldEnd {
    pub theta: f64,
    pub y: f64,
    pub which: Which,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlowTrace {
    pub rows: Vec<TraceRow>,
    pub branches: Vec<Branch>,
    pub fold_ends: Vec<FoldEnd>,
    pub degenerate: bool,
}

impl SlowTrace {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "theta",
            "y",
            "dy_reduced",
            "dtheta_fast_above",
            "dtheta_fast_below",
        ]);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.theta),
                Cell::from(r.y),
                Cell::from(r.dy_reduced),
                Cell::from(r.dtheta_fast_above),
                Cell::from(r.dtheta_fast_below),
            ]);
        }
        t
    }
}

/// Keep `θ` at least `1e-9` away from the edges of the blend region.
fn nudge(theta: f64) -> f64 {
    const GAP: f64 = 1e-9;
    for edge in [FRAC_PI_4, 3.0 * FRAC_PI_4] {
        if (theta - edge).abs() < GAP {
            return if theta < edge { edge - GAP } else { edge + GAP };
        }
    }
    theta
}

/// Follow the slow-manifold branches over `theta_range` on `n` samples.
pub fn trace_slow_dynamics(
    spp: &SPProblem,
    theta_range: [f64; 2],
    n: usize,
    window: [f64; 2],
    settings: &SlowSettings,
) -> Result<SlowTrace, BlowupError> {
    let [a, b] = theta_range;
    if !(a > 0.0 && b < std::f64::consts::PI && a < b) {
        return Err(BlowupError::ThetaOutOfRange(if a > 0.0 { b } else { a }));
    }
    let mut fold_ends = Vec::new();
    for (theta, which) in [(FRAC_PI_4, Which::X1), (3.0 * FRAC_PI_4, Which::X2)] {
        if !spp.is_degenerate() {
            // on the plateau edges the bracket reduces to one normal component
            let probe = if which == Which::X1 {
                theta - 1e-9
            } else {
                theta + 1e-9
            };
            for y in slow_manifold(spp, probe, window, settings)? {
                fold_ends.push(FoldEnd { theta, y, which });
            }
        }
    }
    if spp.is_degenerate() {
        return Ok(SlowTrace {
            rows: Vec::new(),
            branches: Vec::new(),
            fold_ends,
            degenerate: true,
        });
    }

    let n = n.max(2);
    let mut rows = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    // indices of branches alive at the previous sample, with their last y
    let mut alive: Vec<(usize, f64)> = Vec::new();
    for k in 0..n {
        let theta = nudge(a + (b - a) * k as f64 / (n - 1) as f64);
        let ys = slow_manifold(spp, theta, window, settings)?;
        let mut next_alive = Vec::with_capacity(ys.len());
        let mut taken = vec![false; alive.len()];
        for &y in &ys {
            let delta = 1e-3 * (1.0 + y.abs());
            let (fa, _) = spp.fast(theta, y + delta)?;
            let (fb, _) = spp.fast(theta, y - delta)?;
            rows.push(TraceRow {
                theta,
                y,
                dy_reduced: spp.reduced(theta, y)?,
                dtheta_fast_above: fa,
                dtheta_fast_below: fb,
            });
            let matched = if ys.len() == alive.len() {
                let i = next_alive.len();
                Some(i)
            } else {
                alive
                    .iter()
                    .enumerate()
                    .filter(|(i, (_, prev))| {
                        !taken[*i] && (prev - y).abs() <= 0.5 * (1.0 + prev.abs())
                    })
                    .min_by(|p, q| (p.1 .1 - y).abs().total_cmp(&(q.1 .1 - y).abs()))
                    .map(|(i, _)| i)
            };
            let id = match matched {
                Some(i) => {
                    taken[i] = true;
                    alive[i].0
                }
                None => {
                    branches.push(Branch {
                        points: Vec::new(),
                        turning_points: Vec::new(),
                    });
                    branches.len() - 1
                }
            };
            let br = &mut branches[id];
            if let Some(&[pt, py]) = br.points.last() {
                let (s0, s1) = (spp.bracket_slope(pt, py)?, spp.bracket_slope(theta, y)?);
                if s0 * s1 < 0.0 {
                    br.turning_points.push([0.5 * (pt + theta), 0.5 * (py + y)]);
                }
            }
            br.points.push([theta, y]);
            next_alive.push((id, y));
        }
        alive = next_alive;
    }
    Ok(SlowTrace {
        rows,
        branches,
        fold_ends,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sec62() -> NonSmoothSystem {
        NonSmoothSystem::parse(["x+y-1", "-x+y+1"], ["1", "2"], "x").unwrap()
    }

    #[test]
    fn sec62_components() {
        let spp = sp_from_regularization(&sec62(), TransitionFunction::Quintic).unwrap();
        for s in [-3.0, 0.0, 0.5, 2.0] {
            let [nm, nh, tm, th] = spp.components().map(|e| e.eval(0.0, s).unwrap());
            assert!((nm - s / 2.0).abs() < 1e-15);
            assert!((nh - (s - 2.0) / 2.0).abs() < 1e-15);
            assert!((tm - (s + 3.0) / 2.0).abs() < 1e-15);
            assert!((th - (s - 1.0) / 2.0).abs() < 1e-15);
        }
        assert_eq!(spp.fast(1.0, 0.3).unwrap().1, 0.0);
    }

    #[test]
    fn sec62_slow_manifold() {
        let spp = sp_from_regularization(&sec62(), TransitionFunction::Quintic).unwrap();
        let w = [-1e6, 10.0];
        let s = SlowSettings::default();
        let y = slow_manifold(&spp, PI / 4.0, w, &s).unwrap();
        assert_eq!(y.len(), 1);
        assert!((y[0] - 1.0).abs() < 1e-9);
        let y = slow_manifold(&spp, PI / 2.0, w, &s).unwrap();
        assert!(y[0].abs() < 1e-9);
        assert!(slow_manifold(&spp, 3.0 * PI / 4.0 + 0.1, w, &s)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn coordinate_required() {
        let sys = NonSmoothSystem::parse(["1", "0"], ["-1", "0"], "x + y").unwrap();
        assert!(matches!(
            sp_from_regularization(&sys, TransitionFunction::Quintic),
            Err(BlowupError::NotCoordinate(_))
        ));
    }

    #[test]
    fn two_fold_ends() {
        let sys = NonSmoothSystem::parse(["3*y^2-y-2", "1"], ["-3*y^2-y+2", "-1"], "x").unwrap();
        let spp = sp_from_regularization(&sys, TransitionFunction::Quintic).unwrap();
        let tr = trace_slow_dynamics(
            &spp,
            [0.8, 2.3],
            200,
            [-20.0, 20.0],
            &SlowSettings::default(),
        )
        .unwrap();
        let ends: Vec<(Which, f64)> = tr.fold_ends.iter().map(|e| (e.which, e.y)).collect();
        let expect = [
            (Which::X1, -2.0 / 3.0),
            (Which::X1, 1.0),
            (Which::X2, -1.0),
            (Which::X2, 2.0 / 3.0),
        ];
        assert_eq!(ends.len(), 4);
        for ((w, y), (ew, ey)) in ends.iter().zip(expect) {
            assert_eq!(*w, ew);
            assert!((y - ey).abs() < 1e-9, "{y} vs {ey}");
        }
    }

    #[test]
    fn continuous_field_is_degenerate() {
        let sys = NonSmoothSystem::parse(["0", "1"], ["0", "1"], "x").unwrap();
        let spp = sp_from_regularization(&sys, TransitionFunction::Quintic).unwrap();
        let tr = trace_slow_dynamics(&spp, [0.5, 2.5], 10, [-5.0, 5.0], &SlowSettings::default())
            .unwrap();
        assert!(tr.degenerate);
    }
}
