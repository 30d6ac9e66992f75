//! Adaptive Dormand–Prince 5(4) integration of autonomous systems with
//! event localization.
//!
//! Events are scalar functions of the state. After every accepted step the
//! integrator checks for a sign change in the requested direction and, when
//! one occurs, locates it by bisection on the step length (each trial is a
//! fresh RK step from the accepted left end), until `|g| <= tol`.

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
    #[error("vector field evaluation failed at t = {t}: {message}")]
    Field { t: f64, message: String },
}

#[derive(Clone, Copy, Debug)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        OdeSettings {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `g` goes from negative to non-negative.
    Rising,
    /// `g` goes from positive to non-positive.
    Falling,
    Either,
}

impl Direction {
    fn triggered(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after >= 0.0,
            Direction::Falling => before > 0.0 && after <= 0.0,
            Direction::Either => (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0),
        }
    }
}

pub type EventFn<'a, const N: usize> = Box<dyn Fn(&[f64; N]) -> f64 + Send + Sync + 'a>;

pub struct Event<'a, const N: usize> {
    pub func: EventFn<'a, N>,
    pub direction: Direction,
    /// Absolute localization tolerance on `|g|`.
    pub tol: f64,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new<F>(func: F, direction: Direction, tol: f64) -> Self
    where
        F: Fn(&[f64; N]) -> f64 + Send + Sync + 'a,
    {
        Event {
            func: Box::new(func),
            direction,
            tol,
        }
    }
}

/// Accepted state with its derivative, for Hermite dense output.
#[derive(Clone, Copy, Debug)]
pub struct Sample<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    Event(usize),
    EndTime,
}

#[derive(Clone, Debug)]
pub struct Solution<const N: usize> {
    /// Accepted states, first is the initial state, last is the final state.
    pub samples: Vec<Sample<N>>,
    pub stop: Stop,
}

impl<const N: usize> Solution<N> {
    pub fn last(&self) -> &Sample<N> {
        self.samples
            .last()
            .expect("solution has at least one sample")
    }

    /// Cubic Hermite resampling so that consecutive output times differ by
    /// at most `dt`. Accepted steps are always included.
    pub fn dense(&self, dt: f64) -> Vec<(f64, [f64; N])> {
        let mut out = Vec::with_capacity(self.samples.len());
        for w in self.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            out.push((a.t, a.y));
            let h = b.t - a.t;
            if h > dt && dt > 0.0 {
                let k = ((h / dt).ceil() as usize).min(10_000);
                for j in 1..k {
                    let s = j as f64 / k as f64;
                    out.push((a.t + s * h, hermite(a, b, s)));
                }
            }
        }
        if let Some(last) = self.samples.last() {
            out.push((last.t, last.y));
        }
        out
    }
}

fn hermite<const N: usize>(a: &Sample<N>, b: &Sample<N>, s: f64) -> [f64; N] {
    let h = b.t - a.t;
    let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
    let h10 = s.powi(3) - 2.0 * s * s + s;
    let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
    let h11 = s.powi(3) - s * s;
    std::array::from_fn(|i| h00 * a.y[i] + h10 * h * a.dy[i] + h01 * b.y[i] + h11 * h * b.dy[i])
}

// Dormand–Prince coefficients
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct StepResult<const N: usize> {
    y: [f64; N],
    dy: [f64; N],
    err: [f64; N],
}

fn comb<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn dopri_step<const N: usize, F>(
    rhs: &F,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Result<StepResult<N>, String>
where
    F: Fn(&[f64; N]) -> Result<[f64; N], String>,
{
    let k2 = rhs(&comb(y, h, &[(A21, k1)]))?;
    let k3 = rhs(&comb(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = rhs(&comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = rhs(&comb(
        y,
        h,
        &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)],
    ))?;
    let k6 = rhs(&comb(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ))?;
    let y_new = comb(
        y,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = rhs(&y_new)?;
    let err = std::array::from_fn(|i| {
        h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
    });
    Ok(StepResult {
        y: y_new,
        dy: k7,
        err,
    })
}

fn error_norm<const N: usize>(s: &OdeSettings, y0: &[f64; N], r: &StepResult<N>) -> f64 {
    let mut acc = 0.0;
    for ((a, b), e) in y0.iter().zip(&r.y).zip(&r.err) {
        let sc = s.atol + s.rtol * a.abs().max(b.abs());
        acc += (e / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Integrate `y' = rhs(y)` from `t0` until `t_end` or the first event.
///
/// `max_step` caps the step length as a function of the current state.
pub fn integrate<const N: usize, F, M>(
    rhs: F,
    y0: [f64; N],
    t0: f64,
    t_end: f64,
    settings: &OdeSettings,
    events: &[Event<'_, N>],
    max_step: M,
) -> Result<Solution<N>, OdeError>
where
    F: Fn(&[f64; N]) -> Result<[f64; N], String>,
    M: Fn(&[f64; N]) -> f64,
{
    let field_err = |t: f64| move |message: String| OdeError::Field { t, message };
    let mut t = t0;
    let mut y = y0;
    let mut dy = rhs(&y).map_err(field_err(t))?;
    let mut samples = vec![Sample { t, y, dy }];
    if t_end <= t0 {
        return Ok(Solution {
            samples,
            stop: Stop::EndTime,
        });
    }
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.func)(&y)).collect();

    let cap = |y: &[f64; N]| max_step(y).min(settings.h_max);
    // initial step guess
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fnorm = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut h = if fnorm > 0.0 {
        (1e-3 * (1.0 + ynorm) / fnorm).min(1e-2 * (1.0 + ynorm))
    } else {
        1e-3
    };
    h = h.min(cap(&y)).min(t_end - t);

    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > settings.max_steps {
            return Err(OdeError::TooManySteps(settings.max_steps));
        }
        let h_min = 1e-14 * (1.0 + t.abs());
        if h < h_min {
            return Err(OdeError::StepUnderflow { t });
        }
        let step = dopri_step(&rhs, &y, &dy, h);
        let r = match step {
            Ok(r) => r,
            Err(_) if h > 4.0 * h_min => {
                // field left its domain inside the trial step; retry smaller
                h *= 0.25;
                continue;
            }
            Err(message) => return Err(OdeError::Field { t, message }),
        };
        let en = error_norm(settings, &y, &r);
        if !en.is_finite() || en > 1.0 {
            let fac = if en.is_finite() {
                (0.9 * en.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= fac;
            continue;
        }

        // accepted: check events
        let g_new: Vec<f64> = events.iter().map(|e| (e.func)(&r.y)).collect();
        let mut best: Option<(usize, f64, StepResult<N>)> = None;
        for (k, ev) in events.iter().enumerate() {
            if !ev.direction.triggered(g_prev[k], g_new[k]) {
                continue;
            }
            let located = locate(&rhs, &y, &dy, h, ev, g_prev[k], best.as_ref().map(|b| b.1))
                .map_err(field_err(t))?;
            if let Some((tau, res)) = located {
                if best.as_ref().is_none_or(|b| tau < b.1) {
                    best = Some((k, tau, res));
                }
            }
        }
        if let Some((k, tau, res)) = best {
            t += tau;
            samples.push(Sample {
                t,
                y: res.y,
                dy: res.dy,
            });
            return Ok(Solution {
                samples,
                stop: Stop::Event(k),
            });
        }

        t += h;
        y = r.y;
        dy = r.dy;
        g_prev = g_new;
        samples.push(Sample { t, y, dy });
        if t >= t_end {
            return Ok(Solution {
                samples,
                stop: Stop::EndTime,
            });
        }
        let fac = if en == 0.0 {
            5.0
        } else {
            (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(cap(&y)).min(t_end - t);
        if t_end - t - h < 1e-12 * (1.0 + t.abs()) {
            h = t_end - t;
        }
    }
}

/// Bisection on the step length for the first sign change of `ev` inside
/// `(0, h]`. `limit` restricts the search to times before an already-found event.
fn locate<const N: usize, F>(
    rhs: &F,
    y: &[f64; N],
    dy: &[f64; N],
    h: f64,
    ev: &Event<'_, N>,
    g0: f64,
    limit: Option<f64>,
) -> Result<Option<(f64, StepResult<N>)>, String>
where
    F: Fn(&[f64; N]) -> Result<[f64; N], String>,
{
    let mut lo = 0.0;
    let mut hi = h;
    let mut g_lo = g0;
    let mut hi_res = dopri_step(rhs, y, dy, hi)?;
    if let Some(l) = limit {
        if l < hi {
            let r = dopri_step(rhs, y, dy, l)?;
            if !ev.direction.triggered(g0, (ev.func)(&r.y)) {
                return Ok(None);
            }
            hi = l;
            hi_res = r;
        }
    }
    let mut g_hi = (ev.func)(&hi_res.y);
    for _ in 0..200 {
        if g_hi.abs() <= ev.tol {
            break;
        }
        // Illinois-flavoured false position, guarded by bisection
        let mut mid = if g_lo.is_finite() && g_hi.is_finite() && g_lo != g_hi {
            lo + (hi - lo) * g_lo / (g_lo - g_hi)
        } else {
            0.5 * (lo + hi)
        };
        let width = hi - lo;
        if !(mid > lo + 0.05 * width && mid < hi - 0.05 * width) {
            mid = 0.5 * (lo + hi);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        let r = dopri_step(rhs, y, dy, mid)?;
        let gm = (ev.func)(&r.y);
        if ev.direction.triggered(g0, gm) {
            hi = mid;
            hi_res = r;
            g_hi = gm;
        } else {
            lo = mid;
            g_lo = gm;
        }
    }
    Ok(Some((hi, hi_res)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_accuracy() {
        let sol = integrate(
            |y: &[f64; 1]| Ok([-y[0]]),
            [1.0],
            0.0,
            2.0,
            &OdeSettings::default(),
            &[],
            |_| f64::INFINITY,
        )
        .unwrap();
        assert_eq!(sol.stop, Stop::EndTime);
        assert!((sol.last().t - 2.0).abs() < 1e-14);
        assert!((sol.last().y[0] - (-2.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn event_localization_on_harmonic_oscillator() {
        // x = cos t, y = -sin t; x falls through zero at t = pi/2
        let ev = Event::new(|y: &[f64; 2]| y[0], Direction::Falling, 1e-12);
        let sol = integrate(
            |y: &[f64; 2]| Ok([y[1], -y[0]]),
            [1.0, 0.0],
            0.0,
            10.0,
            &OdeSettings::default(),
            &[ev],
            |_| f64::INFINITY,
        )
        .unwrap();
        assert_eq!(sol.stop, Stop::Event(0));
        assert!(sol.last().y[0].abs() <= 1e-12);
        assert!((sol.last().t - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn max_step_is_respected() {
        let sol = integrate(
            |_: &[f64; 1]| Ok([1.0]),
            [0.0],
            0.0,
            1.0,
            &OdeSettings::default(),
            &[],
            |_| 0.01,
        )
        .unwrap();
        for w in sol.samples.windows(2) {
            assert!(w[1].t - w[0].t <= 0.01 + 1e-15);
        }
    }
}
