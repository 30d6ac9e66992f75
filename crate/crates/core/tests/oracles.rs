use std::f64::consts::{FRAC_PI_4, PI, TAU};

use filippov::blowup::{sp_from_regularization, trace_slow_dynamics, SlowSettings};
use filippov::canard::detect_canard_one_fold;
use filippov::flow::FlowSettings;
use filippov::index::{angle_winding, ClosedPath, IndexSettings};
use filippov::regularize::TransitionFunction;
use filippov::{NonSmoothSystem, SigmaClass, Vec2, Which};

/// Winding by dense sampling: the field of the side the sample lies on,
/// with every consecutive angle change taken as the smallest one. Across
/// Σ this is the smallest-angle jump.
fn dense_winding(sys: &NonSmoothSystem, center: Vec2, r: f64, n: usize) -> (f64, usize) {
    let sample = |k: usize| {
        let t = TAU * k as f64 / n as f64;
        let q = center + Vec2::new(r * t.cos(), r * t.sin());
        let fv = sys.eval_f(q).unwrap();
        let which = if fv > 0.0 { Which::X1 } else { Which::X2 };
        (fv > 0.0, sys.field(which, q).unwrap().angle())
    };
    let (mut total, mut crossings) = (0.0, 0);
    let mut prev = sample(0);
    for k in 1..=n {
        let cur = sample(k % n);
        let mut d = (cur.1 - prev.1).rem_euclid(TAU);
        if d > PI {
            d -= TAU;
        }
        total += d;
        crossings += usize::from(cur.0 != prev.0);
        prev = cur;
    }
    (total / TAU, crossings)
}

/// Σ is the line `y = 1/2`; the rotation above and the unstable focus at
/// the origin below meet Σ transversally at both crossings of the unit circle.
fn sewing_focus() -> NonSmoothSystem {
    NonSmoothSystem::parse(["-y", "x"], ["-y + 0.3*x", "x + 0.3*y"], "y - 0.5").unwrap()
}

#[test]
fn sewing_cycle_around_a_focus_has_index_one() {
    let sys = sewing_focus();
    let path = ClosedPath::circle(Vec2::ZERO, 1.0, 400).unwrap();
    let rep = angle_winding(&sys, &path, &IndexSettings::default()).unwrap();
    assert_eq!(rep.index, 1);
    assert_eq!(rep.jumps.len(), 2);
    for j in &rep.jumps {
        assert_eq!(sys.classify_point(j.point).unwrap(), SigmaClass::Sewing);
    }
    let (w, crossings) = dense_winding(&sys, Vec2::ZERO, 1.0, 200_000);
    assert_eq!(crossings, 2);
    assert!(
        (rep.total_angle / TAU - w).abs() < 1e-9,
        "{} vs {w}",
        rep.total_angle / TAU
    );
}

#[test]
fn winding_agrees_with_dense_sampling_on_canard_neighbourhoods() {
    let sys =
        NonSmoothSystem::parse(["x+y-1", "-x+y-1"], ["-x^2+1.5*x-0.5-0.25", "1"], "y").unwrap();
    // the X1 focus alone, an empty disc cut by the sliding region, and a disc with both
    for (c, r, expect) in [
        (Vec2::new(0.0, 1.0), 0.5, 1),
        (Vec2::new(1.2, 0.0), 1.0, 0),
        (Vec2::new(3.0, 0.5), 5.0, 1),
    ] {
        let path = ClosedPath::circle(c, r, 720).unwrap();
        let rep = angle_winding(&sys, &path, &IndexSettings::default()).unwrap();
        let (w, _) = dense_winding(&sys, c, r, 400_000);
        assert_eq!(rep.index, expect, "circle at {c:?} radius {r}");
        assert!(
            (rep.total_angle / TAU - w).abs() < 1e-9,
            "{} vs {w}",
            rep.total_angle / TAU
        );
    }
}

#[test]
fn winding_is_stable_under_refinement_and_reversal() {
    let sys = sewing_focus();
    let coarse = IndexSettings {
        samples: 64,
        ..IndexSettings::default()
    };
    let fine = IndexSettings {
        samples: 16_384,
        ..IndexSettings::default()
    };
    for n in [12, 100, 1000] {
        let path = ClosedPath::circle(Vec2::new(0.1, -0.2), 1.3, n).unwrap();
        let a = angle_winding(&sys, &path, &coarse).unwrap();
        let b = angle_winding(&sys, &path, &fine).unwrap();
        let rev = angle_winding(&sys, &path.reversed(), &fine).unwrap();
        assert_eq!((a.index, b.index, rev.index), (1, 1, -1));
        assert!((a.total_angle - b.total_angle).abs() < 1e-9);
        assert!((a.total_angle + rev.total_angle).abs() < 1e-9);
    }
}

#[test]
fn path_through_a_fold_is_rejected() {
    let sys = NonSmoothSystem::parse(["x+y-1", "-x+y-1"], ["-x^2+1.5*x-0.5", "1"], "y").unwrap();
    let path = ClosedPath::circle(Vec2::new(-1.5, 0.0), 0.5, 200).unwrap();
    assert!(angle_winding(&sys, &path, &IndexSettings::default()).is_err());
}

#[test]
fn two_fold_reduced_flow_matches_sliding_field() {
    let sys = NonSmoothSystem::parse(["3*y^2-y-2", "1"], ["-3*y^2-y+2", "-1"], "x").unwrap();
    let spp = sp_from_regularization(&sys, TransitionFunction::Quintic).unwrap();
    let tr = trace_slow_dynamics(
        &spp,
        [FRAC_PI_4 + 1e-3, 3.0 * FRAC_PI_4 - 1e-3],
        300,
        [-50.0, 50.0],
        &SlowSettings::default(),
    )
    .unwrap();
    let mut matched = 0;
    for row in &tr.rows {
        let q = Vec2::new(0.0, row.y);
        match sys.classify_point(q) {
            Ok(SigmaClass::Sliding | SigmaClass::Escaping) => {}
            _ => continue,
        }
        let slide = sys.sliding_field(q).unwrap().y;
        if slide.abs() < 1e-9 {
            continue;
        }
        assert_eq!(slide.signum(), row.dy_reduced.signum(), "y = {}", row.y);
        // the blend fixed by B = 0 is the Filippov combination
        assert!(
            (slide - row.dy_reduced).abs() < 1e-8 * (1.0 + slide.abs()),
            "{slide} vs {}",
            row.dy_reduced
        );
        matched += 1;
    }
    assert!(matched > 100, "{matched}");
}

#[test]
fn time_reversal_keeps_the_fold_and_negates_h() {
    let sys =
        NonSmoothSystem::parse(["x+y-1", "-x+y-1"], ["-x^2+1.5*x-0.5-0.25", "1"], "y").unwrap();
    let fwd = detect_canard_one_fold(&sys, [-5.0, 5.0], &FlowSettings::default()).unwrap();
    assert!(fwd.found);
    let rev = sys.reversed();
    assert_eq!(rev.fold_census(-5.0, 5.0).len(), 1);
    let fp = fwd.fold;
    assert!(rev.fold_census(-5.0, 5.0)[0].point.dist(fp) < 1e-9);
    for s in [-0.5, 0.5, 2.0, 10.0] {
        let (h, hr) = (
            sys.direction_function(s).unwrap(),
            rev.direction_function(s).unwrap(),
        );
        assert!((h + hr).abs() < 1e-12 * (1.0 + h.abs()), "s = {s}");
    }
}
