//! The singular radial Cauchy problem
//!
//! ```text
//! u'' + (n-1) (ψ'/ψ) u' + |u|^{p-1} u = 0,   u(0) = α, u'(0) = 0
//! ```
//!
//! and its linearization in α, integrated with an adaptive Dormand–Prince
//! 5(4) pair. Dense output is a quintic Hermite interpolant through
//! `(u, u', u'')` at both ends of every accepted step.

use serde::Serialize;

use crate::error::{LefError, Result};
use crate::model::{ModelSpec, PsiModel};
use crate::quad;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_R_MAX: f64 = 100.0;
const H_MAX: f64 = 1.0;
const MAX_STEPS: usize = 5_000_000;

/// `|u|^{p-1} u`
#[inline]
pub fn nonlinearity(u: f64, p: f64) -> f64 {
    u.abs().powf(p - 1.0) * u
}

#[derive(Debug, Clone, Copy)]
pub struct CauchyProblem<'a> {
    pub model: &'a PsiModel,
    pub p: f64,
    pub alpha: f64,
}

impl<'a> CauchyProblem<'a> {
    pub fn new(model: &'a PsiModel, p: f64, alpha: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(LefError::Precondition(format!("p = {p} must exceed 1")));
        }
        if !alpha.is_finite() {
            return Err(LefError::Precondition(format!("alpha = {alpha} is not finite")));
        }
        Ok(CauchyProblem { model, p, alpha })
    }

    pub fn n(&self) -> u32 {
        self.model.n()
    }

    /// Starting radius: the model's `r_floor`, shrunk for large |α| so that
    /// it stays small against the natural length `|α|^{-(p-1)/2}`.
    pub fn seed_radius(&self) -> f64 {
        let floor = self.model.r_floor();
        if self.alpha == 0.0 {
            return floor;
        }
        floor.min(1e-3 * self.alpha.abs().powf(-(self.p - 1.0) / 2.0))
    }
}

/// Two-term Taylor seed `(u(eps), u'(eps))`.
pub fn taylor_seed(problem: &CauchyProblem, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps <= problem.model.r_floor()) {
        return Err(LefError::Precondition(format!(
            "seed radius {eps} must lie in (0, r_floor = {}]",
            problem.model.r_floor()
        )));
    }
    let n = problem.n() as f64;
    let f = nonlinearity(problem.alpha, problem.p);
    Ok((problem.alpha - f * eps * eps / (2.0 * n), -f * eps / n))
}

// Dormand–Prince 5(4)
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Samples of a second-order scalar solution `x(r)` with `x'` and `x''`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
    pub ddx: Vec<f64>,
}

impl Samples {
    fn push(&mut self, r: f64, x: f64, dx: f64, ddx: f64) {
        self.r.push(r);
        self.x.push(x);
        self.dx.push(dx);
        self.ddx.push(ddx);
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Index `i` with `r[i] <= r <= r[i+1]`, clamped to the sampled range.
    fn segment(&self, r: f64) -> usize {
        let k = self.r.partition_point(|&s| s <= r);
        k.saturating_sub(1).min(self.r.len().saturating_sub(2))
    }

    /// Interpolated `(x, x', x'')` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        if self.r.len() == 1 {
            return (self.x[0], self.dx[0], self.ddx[0]);
        }
        self.eval_in(self.segment(r), r)
    }

    fn eval_in(&self, i: usize, r: f64) -> (f64, f64, f64) {
        hermite(
            self.r[i],
            self.r[i + 1],
            [self.x[i], self.dx[i], self.ddx[i]],
            [self.x[i + 1], self.dx[i + 1], self.ddx[i + 1]],
            r,
        )
    }

    /// Radii where `x` (`which = 0`) or `x'` (`which = 1`) changes sign,
    /// bisected on the dense output. Exact zeros between values of equal
    /// sign are not sign changes.
    fn sign_changes(&self, which: usize) -> Vec<f64> {
        let comp = |v: (f64, f64, f64)| if which == 0 { v.0 } else { v.1 };
        let mut out = Vec::new();
        let mut last: Option<(f64, f64)> = None;
        for i in 0..self.len().saturating_sub(1) {
            let (a, b) = (self.r[i], self.r[i + 1]);
            for t in [0.0, 0.25, 0.5, 0.75] {
                let s = a + t * (b - a);
                let cur = if t == 0.0 {
                    comp((self.x[i], self.dx[i], self.ddx[i]))
                } else {
                    comp(self.eval_in(i, s))
                };
                if cur == 0.0 || s == self.r[0] {
                    if cur != 0.0 {
                        last = Some((s, cur));
                    }
                    continue;
                }
                if let Some((ls, lv)) = last {
                    if lv * cur < 0.0 {
                        out.push(self.bisect(which, ls, s, lv.signum()));
                    }
                }
                last = Some((s, cur));
            }
        }
        if let (Some((ls, lv)), Some(&rn)) = (last, self.r.last()) {
            let n = self.len() - 1;
            let cur = if which == 0 { self.x[n] } else { self.dx[n] };
            if lv * cur < 0.0 {
                out.push(self.bisect(which, ls, rn, lv.signum()));
            }
        }
        out
    }

    fn bisect(&self, which: usize, mut lo: f64, mut hi: f64, sl: f64) -> f64 {
        let comp = |v: (f64, f64, f64)| if which == 0 { v.0 } else { v.1 };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = comp(self.eval(mid));
            if v * sl > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Quintic Hermite interpolant on `[r0, r1]` through `(x, x', x'')` at both ends.
pub fn hermite(r0: f64, r1: f64, a: [f64; 3], b: [f64; 3], r: f64) -> (f64, f64, f64) {
    let h = r1 - r0;
    let t = (r - r0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);
    let basis = [
        [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
            -60.0 * t + 180.0 * t2 - 120.0 * t3,
        ],
        [
            t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            -36.0 * t + 96.0 * t2 - 60.0 * t3,
        ],
        [
            0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
            t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
            1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3,
        ],
        [
            0.5 * t3 - t4 + 0.5 * t5,
            1.5 * t2 - 4.0 * t3 + 2.5 * t4,
            3.0 * t - 12.0 * t2 + 10.0 * t3,
        ],
        [
            -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            -24.0 * t + 84.0 * t2 - 60.0 * t3,
        ],
        [
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
            30.0 * t2 - 60.0 * t3 + 30.0 * t4,
            60.0 * t - 180.0 * t2 + 120.0 * t3,
        ],
    ];
    let w = [a[0], h * a[1], h * h * a[2], h * h * b[2], h * b[1], b[0]];
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = w.iter().zip(&basis).map(|(wi, bi)| wi * bi[k]).sum();
    }
    (out[0], out[1] / h, out[2] / (h * h))
}

/// Adaptive Dormand–Prince 5(4) from `r0` to `r_end`. `on_accept` sees every
/// accepted `(r, y, y')` and returns `false` to stop early. Returns the last
/// accepted radius and state.
fn dp5<const N: usize, F, S>(
    rhs: F,
    r0: f64,
    y0: [f64; N],
    r_end: f64,
    tol: f64,
    mut on_accept: S,
) -> Result<(f64, [f64; N])>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
    S: FnMut(f64, &[f64; N], &[f64; N]) -> Result<bool>,
{
    let mut r = r0;
    let mut y = y0;
    let mut k1 = rhs(r, &y)?;
    if !on_accept(r, &y, &k1)? {
        return Ok((r, y));
    }
    let mut h = (0.5 * r0).max(1e-6 * r_end).min(H_MAX);
    let mut steps = 0;
    while r < r_end {
        if h < 1e-14 * r.max(1.0) || steps > MAX_STEPS {
            return Err(LefError::StepUnderflow { r });
        }
        let last = r + h >= r_end;
        let step = if last { r_end - r } else { h };
        let mut k = [[0.0; N]; 7];
        k[0] = k1;
        let mut y_new = y;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for i in 0..N {
                    ys[i] += step * A[s][j] * kj[i];
                }
            }
            if s == 6 {
                y_new = ys;
            }
            k[s] = rhs(r + C[s] * step, &ys)?;
        }
        let mut err = 0.0f64;
        for i in 0..N {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * step;
            let sc = tol + tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        steps += 1;
        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            h = step * 0.2;
            continue;
        }
        if err <= 1.0 {
            r = if last { r_end } else { r + step };
            y = y_new;
            k1 = k[6];
            if !on_accept(r, &y, &k1)? {
                return Ok((r, y));
            }
        }
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        h = (step * if err <= 1.0 { fac } else { fac.min(1.0) }).min(H_MAX);
    }
    Ok((r, y))
}

/// Damping beyond which the fast variable is slaved to the slow manifold.
const STIFF_DAMPING: f64 = 1e5;

/// A damped second-order problem `x'' = -c(r) x' + h(r, x)`.
///
/// `damping(r)` returns `(c, c')` and `forcing(r, x)` returns
/// `(h, ∂h/∂r, ∂h/∂x)`.
pub struct Damped<C, H> {
    pub damping: C,
    pub forcing: H,
}

impl<C, H> Damped<C, H>
where
    C: Fn(f64) -> Result<(f64, f64)>,
    H: Fn(f64, f64) -> Result<(f64, f64, f64)>,
{
    /// Integrate from `r0` with `(x, x')` to `r_end`.
    ///
    /// Once the damping grows past `STIFF_DAMPING` times the intrinsic rate
    /// `1 + sqrt|∂h/∂x|`, the solve continues on the reduced equation
    /// `x' = s - s'/c` with `s = h/c`, whose residual is `O(c^-3)`.
    pub fn solve(&self, r0: f64, y0: [f64; 2], r_end: f64, tol: f64) -> Result<Samples> {
        let mut out = Samples::default();
        let full = |r: f64, y: &[f64; 2]| -> Result<[f64; 2]> {
            let (c, _) = (self.damping)(r)?;
            let (h, _, _) = (self.forcing)(r, y[0])?;
            Ok([y[1], -c * y[1] + h])
        };
        let (r_stop, y_stop) = dp5(full, r0, y0, r_end, tol, |r, y, dy| {
            out.push(r, y[0], y[1], dy[1]);
            self.stiff(r, y[0]).map(|s| !s)
        })?;
        if r_stop < r_end {
            let slow = |r: f64, x: f64| -> Result<(f64, f64)> {
                let (c, dc) = (self.damping)(r)?;
                let (h, hr, hx) = (self.forcing)(r, x)?;
                let s = h / c;
                let ds = (hr + hx * s) / c - h * dc / (c * c);
                Ok((s - ds / c, ds))
            };
            let mut first = true;
            dp5(
                |r, y: &[f64; 1]| Ok([slow(r, y[0])?.0]),
                r_stop,
                [y_stop[0]],
                r_end,
                tol,
                |r, y, dy| {
                    if !first {
                        out.push(r, y[0], dy[0], slow(r, y[0])?.1);
                    }
                    first = false;
                    Ok(true)
                },
            )?;
        }
        Ok(out)
    }

    fn stiff(&self, r: f64, x: f64) -> Result<bool> {
        if r < 1.0 {
            return Ok(false);
        }
        let (c, dc) = (self.damping)(r)?;
        if dc <= 0.0 {
            return Ok(false);
        }
        let (_, _, hx) = (self.forcing)(r, x)?;
        Ok(c > STIFF_DAMPING * (1.0 + hx.abs().sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UZero,
    UPrimeZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub r: f64,
}

/// One solution `u_α` sampled on its adaptive grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub spec: ModelSpec,
    pub p: f64,
    pub alpha: f64,
    pub tol: f64,
    pub r_max: f64,
    /// Samples of `u`; the first sample is the pole `r = 0`.
    pub samples: Samples,
    pub events: Vec<Event>,
}

fn collect_events(s: &Samples) -> Vec<Event> {
    let mut ev: Vec<Event> = s
        .sign_changes(0)
        .into_iter()
        .map(|r| Event {
            kind: EventKind::UZero,
            r,
        })
        .chain(s.sign_changes(1).into_iter().map(|r| Event {
            kind: EventKind::UPrimeZero,
            r,
        }))
        .collect();
    ev.sort_by(|a, b| a.r.total_cmp(&b.r));
    ev
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(LefError::Precondition(format!("tolerance {tol} outside [1e-12, 1e-4]")));
    }
    Ok(())
}

/// Solve the Cauchy problem on `[0, r_max]`.
pub fn integrate(problem: &CauchyProblem, r_max: f64, tol: f64) -> Result<Trajectory> {
    check_tol(tol)?;
    if !(r_max > 0.0) {
        return Err(LefError::Precondition(format!("r_max = {r_max} must be positive")));
    }
    let n1 = problem.n() as f64 - 1.0;
    let p = problem.p;
    let model = problem.model;
    let eps = problem.seed_radius().min(0.5 * r_max);
    let (u0, up0) = taylor_seed(problem, eps)?;
    let body = Damped {
        damping: |r: f64| -> Result<(f64, f64)> {
            let pt = model.eval(r)?;
            Ok((n1 * pt.rho[1], n1 * (pt.rho[2] - pt.rho[1] * pt.rho[1])))
        },
        forcing: |_r: f64, u: f64| -> Result<(f64, f64, f64)> {
            Ok((-nonlinearity(u, p), 0.0, -p * u.abs().powf(p - 1.0)))
        },
    }
    .solve(eps, [u0, up0], r_max, tol)?;
    let mut samples = Samples::default();
    let f0 = nonlinearity(problem.alpha, p);
    samples.push(0.0, problem.alpha, 0.0, -f0 / problem.n() as f64);
    samples.r.extend(&body.r);
    samples.x.extend(&body.x);
    samples.dx.extend(&body.dx);
    samples.ddx.extend(&body.ddx);
    let events = collect_events(&samples);
    Ok(Trajectory {
        spec: model.spec().clone(),
        p,
        alpha: problem.alpha,
        tol,
        r_max,
        samples,
        events,
    })
}

impl Trajectory {
    /// Build a trajectory from externally produced samples. Missing second
    /// derivatives are estimated from `u'` by finite differences.
    pub fn from_samples(
        spec: ModelSpec,
        p: f64,
        r: Vec<f64>,
        u: Vec<f64>,
        up: Vec<f64>,
        upp: Option<Vec<f64>>,
    ) -> Result<Self> {
        let len = r.len();
        if len < 2 || u.len() != len || up.len() != len || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LefError::Precondition(
                "samples must be equally long, increasing and at least two".into(),
            ));
        }
        let upp = match upp {
            Some(v) if v.len() == len => v,
            Some(_) => return Err(LefError::Precondition("u'' samples have the wrong length".into())),
            None => (0..len)
                .map(|i| {
                    let (a, b) = (i.saturating_sub(1), (i + 1).min(len - 1));
                    (up[b] - up[a]) / (r[b] - r[a])
                })
                .collect(),
        };
        let samples = Samples {
            r,
            x: u,
            dx: up,
            ddx: upp,
        };
        let events = collect_events(&samples);
        Ok(Trajectory {
            spec,
            p,
            alpha: samples.x[0],
            tol: DEFAULT_TOL,
            r_max: samples.r[len - 1],
            samples,
            events,
        })
    }

    pub fn r(&self) -> &[f64] {
        &self.samples.r
    }

    pub fn u(&self) -> &[f64] {
        &self.samples.x
    }

    pub fn uprime(&self) -> &[f64] {
        &self.samples.dx
    }

    /// `(u, u')` at `r` from the dense output.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let (u, up, _) = self.samples.eval(r);
        (u, up)
    }

    pub fn eval_full(&self, r: f64) -> (f64, f64, f64) {
        self.samples.eval(r)
    }

    pub fn u_zeros(&self) -> Vec<f64> {
        self.events_of(EventKind::UZero)
    }

    pub fn uprime_zeros(&self) -> Vec<f64> {
        self.events_of(EventKind::UPrimeZero)
    }

    fn events_of(&self, kind: EventKind) -> Vec<f64> {
        self.events.iter().filter(|e| e.kind == kind).map(|e| e.r).collect()
    }

    pub fn first_u_zero(&self) -> Option<f64> {
        self.events.iter().find(|e| e.kind == EventKind::UZero).map(|e| e.r)
    }

    /// CSV with columns `r,u,uprime`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,u,uprime\n");
        for i in 0..self.samples.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e}\n",
                self.samples.r[i], self.samples.x[i], self.samples.dx[i]
            ));
        }
        s
    }

    /// Events sidecar `{u_zeros: [...], uprime_zeros: [...]}`.
    pub fn events_json(&self) -> serde_json::Value {
        serde_json::json!({
            "u_zeros": self.u_zeros(),
            "uprime_zeros": self.uprime_zeros(),
        })
    }
}

/// `v = ∂u/∂α`, the solution of the linearized problem along `u_α`.
#[derive(Debug, Clone)]
pub struct LinearizedTrajectory {
    pub alpha: f64,
    pub samples: Samples,
    pub first_zero: Option<f64>,
}

impl LinearizedTrajectory {
    /// `(v, v')` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let (v, vp, _) = self.samples.eval(r);
        (v, vp)
    }
}

/// Solve `v'' + (n-1)(ψ'/ψ) v' = -p|u_α|^{p-1} v`, `v(0) = 1`, `v'(0) = 0`.
pub fn integrate_linearized(problem: &CauchyProblem, base: &Trajectory) -> Result<LinearizedTrajectory> {
    if base.alpha != problem.alpha || base.p != problem.p || &base.spec != problem.model.spec() {
        return Err(LefError::Precondition(
            "base trajectory was produced by a different problem".into(),
        ));
    }
    let n = problem.n() as f64;
    let p = problem.p;
    let model = problem.model;
    let eps = base.samples.r[1];
    let q0 = p * problem.alpha.abs().powf(p - 1.0);
    let v0 = 1.0 - q0 * eps * eps / (2.0 * n);
    let vp0 = -q0 * eps / n;
    let body = Damped {
        damping: |r: f64| -> Result<(f64, f64)> {
            let pt = model.eval(r)?;
            Ok(((n - 1.0) * pt.rho[1], (n - 1.0) * (pt.rho[2] - pt.rho[1] * pt.rho[1])))
        },
        forcing: |r: f64, v: f64| -> Result<(f64, f64, f64)> {
            let (u, up, _) = base.samples.eval(r);
            let w = p * u.abs().powf(p - 1.0);
            let dw = if u == 0.0 {
                0.0
            } else {
                p * (p - 1.0) * u.abs().powf(p - 2.0) * u.signum() * up
            };
            Ok((-w * v, -dw * v, -w))
        },
    }
    .solve(eps, [v0, vp0], base.r_max, base.tol)?;
    let mut samples = Samples::default();
    samples.push(0.0, 1.0, 0.0, -q0 / n);
    samples.r.extend(&body.r);
    samples.x.extend(&body.x);
    samples.dx.extend(&body.dx);
    samples.ddx.extend(&body.ddx);
    let first_zero = samples.sign_changes(0).first().copied();
    Ok(LinearizedTrajectory {
        alpha: problem.alpha,
        samples,
        first_zero,
    })
}

/// First radius where `u_a = u_b`, for `alpha_a > alpha_b`.
pub fn first_intersection(a: &Trajectory, b: &Trajectory) -> Result<Option<f64>> {
    if a.spec != b.spec || a.p != b.p {
        return Err(LefError::Precondition(
            "trajectories belong to different models or exponents".into(),
        ));
    }
    if !(a.alpha > b.alpha) {
        return Err(LefError::Precondition(format!(
            "first trajectory must start higher (alpha {} vs {})",
            a.alpha, b.alpha
        )));
    }
    let r_end = a.r_max.min(b.r_max);
    let mut grid: Vec<f64> = a.r().iter().chain(b.r()).copied().filter(|&r| r <= r_end).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let d = |r: f64| a.eval(r).0 - b.eval(r).0;
    let mut prev_r = 0.0;
    for &r in grid.iter().skip(1) {
        for t in [0.5, 1.0] {
            let s = prev_r + t * (r - prev_r);
            let ds = d(s);
            if ds <= 0.0 {
                if ds == 0.0 {
                    return Ok(Some(s));
                }
                let (mut lo, mut hi) = (prev_r, s);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if d(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Some(0.5 * (lo + hi)));
            }
        }
        prev_r = r;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailLimits {
    /// `None` when the tail does not settle.
    pub u_limit: Option<f64>,
    pub uprime_limit: Option<f64>,
    pub window: [f64; 2],
}

/// Limits of `u` and `u'` as `r → ∞`, estimated from the tail `[r_max/2, r_max]`.
///
/// A single-signed monotone tail is continued with the slow-manifold relation
/// `(n-1)(ψ'/ψ) u' ≈ -|u|^{p-1}u`, which integrates to
/// `|u(∞)|^{1-p} = |u(R)|^{1-p} + (p-1)/(n-1) ∫_R^∞ ψ/ψ'`.
pub fn tail_limits(traj: &Trajectory, model: &PsiModel) -> Result<TailLimits> {
    if traj.r_max < 20.0 {
        return Err(LefError::Precondition(format!(
            "tail limits need r_max >= 20 (got {})",
            traj.r_max
        )));
    }
    let big_r = traj.r_max;
    let window = [0.5 * big_r, big_r];
    if traj.alpha == 0.0 {
        return Ok(TailLimits {
            u_limit: Some(0.0),
            uprime_limit: Some(0.0),
            window,
        });
    }
    let slack = 10.0 * traj.tol;
    let start = traj.r().partition_point(|&r| r < window[0]);
    let u = &traj.u()[start..];
    let up = &traj.uprime()[start..];
    let amp = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let q = u.len() / 2;
    let up_decays = amp(&up[q..]) <= amp(&up[..q]) + slack || amp(up) <= slack;
    let uprime_limit = up_decays.then_some(0.0);

    let sign = u[u.len() - 1].signum();
    let single_signed = u.iter().all(|&v| v * sign > 0.0);
    // monotone towards zero within the slack
    let monotone = u.windows(2).all(|w| (w[1] - w[0]) * sign <= slack);
    let u_limit = if single_signed && monotone {
        let n1 = model.n() as f64 - 1.0;
        let p = traj.p;
        let inv = |r: f64| 1.0 / model.dlog(r).unwrap_or(f64::NAN);
        let w0 = 1.0;
        match quad::integrate_to_infinity(inv, big_r, w0, big_r.max(50.0) * 2.0, 1e-9) {
            Ok(i) if i.value.is_finite() => {
                let ur = u[u.len() - 1].abs();
                let base = ur.powf(1.0 - p) + (p - 1.0) / n1 * i.value;
                Some(sign * base.powf(-1.0 / (p - 1.0)))
            }
            _ => Some(0.0),
        }
    } else if !single_signed && amp(&u[q..]) < amp(&u[..q]) {
        // oscillating with shrinking amplitude: only 0 is compatible
        if amp(u) <= slack || amp(&u[q..]) < 0.5 * amp(&u[..q]) {
            Some(0.0)
        } else {
            None
        }
    } else {
        None
    };
    Ok(TailLimits {
        u_limit,
        uprime_limit,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;

    #[test]
    fn hermite_reproduces_quintic() {
        let f = |x: f64| {
            (
                x.powi(5) - 2.0 * x.powi(3) + x,
                5.0 * x.powi(4) - 6.0 * x * x + 1.0,
                20.0 * x.powi(3) - 12.0 * x,
            )
        };
        let (a, b) = (0.3, 1.7);
        let fa = f(a);
        let fb = f(b);
        for x in [0.3, 0.5, 1.1, 1.7] {
            let (v, d, dd) = hermite(a, b, [fa.0, fa.1, fa.2], [fb.0, fb.1, fb.2], x);
            let e = f(x);
            assert!((v - e.0).abs() < 1e-12 && (d - e.1).abs() < 1e-11 && (dd - e.2).abs() < 1e-10);
        }
    }

    #[test]
    fn seed_examples() {
        let m = build_model(&ModelSpec::euclidean(3)).unwrap();
        let pr = CauchyProblem::new(&m, 3.0, 0.0).unwrap();
        assert_eq!(taylor_seed(&pr, 1e-4).unwrap(), (0.0, 0.0));
        let pr = CauchyProblem::new(&m, 3.0, 1.0).unwrap();
        let (u, up) = taylor_seed(&pr, 1e-4).unwrap();
        assert!((u - (1.0 - 1e-8 / 6.0)).abs() < 1e-16 && (up + 1e-4 / 3.0).abs() < 1e-18);
        let pr = CauchyProblem::new(&m, 3.0, -1.0).unwrap();
        assert_eq!(taylor_seed(&pr, 1e-4).unwrap(), (-u, -up));
        assert!(taylor_seed(&pr, 1e-3).is_err());
    }

    #[test]
    fn harmonic_oscillator_oracle() {
        // x'' = -x, x(0)=0, x'(0)=1
        let s = Damped {
            damping: |_| Ok((0.0, 0.0)),
            forcing: |_, x: f64| Ok((-x, 0.0, -1.0)),
        }
        .solve(0.0, [0.0, 1.0], 20.0, 1e-10)
        .unwrap();
        for r in [1.0, 7.3, 20.0] {
            let (x, dx, _) = s.eval(r);
            assert!((x - r.sin()).abs() < 1e-8 && (dx - r.cos()).abs() < 1e-8, "{r}");
        }
        let zeros = s.sign_changes(0);
        assert_eq!(zeros.len(), 6);
        for (k, z) in zeros.iter().enumerate() {
            assert!((z - (k + 1) as f64 * std::f64::consts::PI).abs() < 1e-8);
        }
    }

    #[test]
    fn euclidean_subcritical_changes_sign() {
        let m = build_model(&ModelSpec::euclidean(3)).unwrap();
        let t = integrate(&CauchyProblem::new(&m, 3.0, 1.0).unwrap(), 30.0, 1e-9).unwrap();
        assert!(t.first_u_zero().is_some());
        let z = t.first_u_zero().unwrap();
        assert!(t.eval(z).0.abs() < 1e-9);
    }

    #[test]
    fn odd_symmetry_is_exact() {
        let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let a = integrate(&CauchyProblem::new(&m, 3.0, 0.7).unwrap(), 20.0, 1e-9).unwrap();
        let b = integrate(&CauchyProblem::new(&m, 3.0, -0.7).unwrap(), 20.0, 1e-9).unwrap();
        assert_eq!(a.r(), b.r());
        for (x, y) in a.u().iter().zip(b.u()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn zero_alpha() {
        let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let pr = CauchyProblem::new(&m, 3.0, 0.0).unwrap();
        let t = integrate(&pr, 50.0, 1e-9).unwrap();
        assert!(t.u().iter().all(|&u| u == 0.0) && t.events.is_empty());
        let v = integrate_linearized(&pr, &t).unwrap();
        assert!(v.samples.x.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        assert!(v.first_zero.is_none());
        let l = tail_limits(&t, &m).unwrap();
        assert_eq!((l.u_limit, l.uprime_limit), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn intersection_preconditions() {
        let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let a = integrate(&CauchyProblem::new(&m, 3.0, 0.2).unwrap(), 10.0, 1e-9).unwrap();
        assert!(first_intersection(&a, &a).is_err());
        let e = build_model(&ModelSpec::euclidean(3)).unwrap();
        let b = integrate(&CauchyProblem::new(&e, 3.0, 0.1).unwrap(), 10.0, 1e-9).unwrap();
        assert!(first_intersection(&a, &b).is_err());
    }

    #[test]
    fn from_samples_detects_events() {
        let r: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let u: Vec<f64> = r.iter().map(|x| x.cos()).collect();
        let up: Vec<f64> = r.iter().map(|x| -x.sin()).collect();
        let upp: Vec<f64> = r.iter().map(|x| -x.cos()).collect();
        let t = Trajectory::from_samples(ModelSpec::euclidean(3), 3.0, r, u, up, Some(upp)).unwrap();
        let z = t.u_zeros();
        assert_eq!(z.len(), 3);
        assert!((z[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert_eq!(t.uprime_zeros().len(), 3);
        assert!(t.to_csv().starts_with("r,u,uprime\n0e0,1e0,"));
    }
}
