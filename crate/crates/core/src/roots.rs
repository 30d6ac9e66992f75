//! One-dimensional zero finding on sampled intervals.

use serde::Serialize;

/// Bisection on a bracketing interval `g(a)·g(b) <= 0`. Stops when the
/// bracket is narrower than `x_tol` or `|g| <= g_tol`.
pub fn bisect<G>(mut g: G, mut a: f64, mut b: f64, x_tol: f64, g_tol: f64) -> Option<f64>
where
    G: FnMut(f64) -> Option<f64>,
{
    let mut ga = g(a)?;
    let gb = g(b)?;
    if ga == 0.0 {
        return Some(a);
    }
    if gb == 0.0 {
        return Some(b);
    }
    if ga.signum() == gb.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= x_tol || m == a || m == b {
            return Some(m);
        }
        let gm = g(m)?;
        if gm.abs() <= g_tol || gm == 0.0 {
            return Some(m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Golden-section minimization of a unimodal `g` on `[a, b]`; returns the
/// minimizer and the minimum.
pub fn golden_min<G>(g: G, mut a: f64, mut b: f64, x_tol: f64) -> Option<(f64, f64)>
where
    G: Fn(f64) -> Option<f64>,
{
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let (mut gc, mut gd) = (g(c)?, g(d)?);
    for _ in 0..200 {
        if (b - a).abs() <= x_tol {
            break;
        }
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - R * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + R * (b - a);
            gd = g(d)?;
        }
    }
    Some(if gc < gd { (c, gc) } else { (d, gd) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Multiplicity {
    Simple,
    /// Even-order touch (no sign change) detected from an extremum with `|g|` below tolerance.
    Double,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Zero {
    pub s: f64,
    pub multiplicity: Multiplicity,
}

#[derive(Clone, Copy, Debug)]
pub struct ScanSettings {
    pub samples: usize,
    pub x_tol: f64,
    /// `|g|` threshold under which an extremum counts as a double zero.
    pub double_tol: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            samples: 1000,
            x_tol: 1e-12,
            double_tol: 1e-10,
        }
    }
}

/// Find zeros of `g` on `[a, b]`: sign changes refined by bisection, and
/// double zeros found as sign changes of `dg` where `|g|` is small.
/// Points where either function is undefined are skipped.
pub fn scan_zeros<G, D>(g: G, dg: D, a: f64, b: f64, settings: ScanSettings) -> Vec<Zero>
where
    G: Fn(f64) -> Option<f64>,
    D: Fn(f64) -> Option<f64>,
{
    let n = settings.samples.max(2);
    let xs: Vec<f64> = (0..=n)
        .map(|i| {
            if i == n {
                b
            } else {
                a + (b - a) * i as f64 / n as f64
            }
        })
        .collect();
    let gs: Vec<Option<f64>> = xs.iter().map(|&s| g(s)).collect();
    let ds: Vec<Option<f64>> = xs.iter().map(|&s| dg(s)).collect();
    let tol = settings.x_tol * (1.0 + a.abs().max(b.abs()));
    let mut zeros: Vec<Zero> = Vec::new();
    let push = |z: Zero, zeros: &mut Vec<Zero>| {
        if let Some(prev) = zeros.iter_mut().find(|p| (p.s - z.s).abs() <= 1e3 * tol) {
            if z.multiplicity == Multiplicity::Double {
                prev.multiplicity = Multiplicity::Double;
            }
        } else {
            zeros.push(z);
        }
    };

    for i in 0..n {
        let (s0, s1) = (xs[i], xs[i + 1]);
        let (Some(g0), Some(g1)) = (gs[i], gs[i + 1]) else {
            continue;
        };
        if g0 == 0.0 {
            let left = if i > 0 { gs[i - 1] } else { None };
            let simple = matches!(left, Some(gl) if gl * g1 < 0.0);
            if simple {
                push(
                    Zero {
                        s: s0,
                        multiplicity: Multiplicity::Simple,
                    },
                    &mut zeros,
                );
            }
        }
        if g0 * g1 < 0.0 {
            if let Some(s) = bisect(&g, s0, s1, tol, 0.0) {
                push(
                    Zero {
                        s,
                        multiplicity: Multiplicity::Simple,
                    },
                    &mut zeros,
                );
            }
            continue;
        }
        // no sign change of g: look for an interior extremum
        let (Some(d0), Some(d1)) = (ds[i], ds[i + 1]) else {
            continue;
        };
        if d0 * d1 > 0.0 {
            continue;
        }
        let Some(sx) = bisect(&dg, s0, s1, tol, 0.0) else {
            continue;
        };
        let Some(gx) = g(sx) else { continue };
        let reference = if g0 != 0.0 { g0 } else { g1 };
        if gx.abs() <= settings.double_tol {
            push(
                Zero {
                    s: sx,
                    multiplicity: Multiplicity::Double,
                },
                &mut zeros,
            );
        } else if reference != 0.0 && gx * reference < 0.0 {
            // two simple zeros closer than the grid spacing
            for (lo, hi) in [(s0, sx), (sx, s1)] {
                if let Some(s) = bisect(&g, lo, hi, tol, 0.0) {
                    push(
                        Zero {
                            s,
                            multiplicity: Multiplicity::Simple,
                        },
                        &mut zeros,
                    );
                }
            }
        }
    }
    if let Some(Some(gl)) = gs.last() {
        if *gl == 0.0 {
            push(
                Zero {
                    s: b,
                    multiplicity: Multiplicity::Simple,
                },
                &mut zeros,
            );
        }
    }
    zeros.sort_by(|p, q| p.s.total_cmp(&q.s));
    zeros
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_and_double_zeros() {
        // (x-1)^2 (x+1.5): simple at -1.5, double at 1
        let g = |x: f64| Some((x - 1.0).powi(2) * (x + 1.5));
        let dg = |x: f64| Some(2.0 * (x - 1.0) * (x + 1.5) + (x - 1.0).powi(2));
        let z = scan_zeros(
            g,
            dg,
            -2.0,
            2.0,
            ScanSettings {
                samples: 997,
                ..Default::default()
            },
        );
        assert_eq!(z.len(), 2);
        assert!((z[0].s + 1.5).abs() < 1e-10);
        assert_eq!(z[0].multiplicity, Multiplicity::Simple);
        assert!((z[1].s - 1.0).abs() < 1e-10);
        assert_eq!(z[1].multiplicity, Multiplicity::Double);
    }

    #[test]
    fn close_pair_inside_one_cell() {
        let g = |x: f64| Some((x - 0.5001) * (x - 0.5003));
        let dg = |x: f64| Some(2.0 * x - 1.0004);
        let z = scan_zeros(
            g,
            dg,
            0.0,
            1.0,
            ScanSettings {
                samples: 10,
                ..Default::default()
            },
        );
        assert_eq!(z.len(), 2);
        assert!((z[0].s - 0.5001).abs() < 1e-10);
        assert!((z[1].s - 0.5003).abs() < 1e-10);
    }

    #[test]
    fn golden_section_finds_touching_minimum() {
        let (x, v) = golden_min(|x| Some((x - 0.3f64).powi(2)), -1.0, 1.0, 1e-12).unwrap();
        assert!((x - 0.3).abs() < 1e-6);
        assert!(v < 1e-12);
    }

    #[test]
    fn no_zero() {
        let z = scan_zeros(
            |x| Some(x * x + 1.0),
            |x| Some(2.0 * x),
            -1.0,
            1.0,
            ScanSettings::default(),
        );
        assert!(z.is_empty());
    }
}
