//! Rotationally symmetric models `dr² + ψ(r)² dΘ²` described by their
//! warping function ψ.
//!
//! Evaluation is done in log/ratio form: a point is `ln ψ(r)` together with
//! the ratios `ψ^(k)(r)/ψ(r)`, so doubly exponential warpings never overflow.

use serde::{Deserialize, Serialize};

use crate::error::{LefError, Result};
use crate::psiexpr::{self, ExprAst};
use crate::quad;

pub const DEFAULT_R_FLOOR: f64 = 1e-4;
const H1_TOL: f64 = 1e-8;
const CURVATURE_SERIES_CUTOFF: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Euclidean,
    Hyperbolic,
    ExpPower,
    Custom,
}

/// JSON form: `{"kind": "...", "gamma": ..., "expr": "...", "n": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    pub n: u32,
}

impl ModelSpec {
    pub fn euclidean(n: u32) -> Self {
        ModelSpec {
            kind: ModelKind::Euclidean,
            gamma: None,
            expr: None,
            n,
        }
    }

    pub fn hyperbolic(n: u32) -> Self {
        ModelSpec {
            kind: ModelKind::Hyperbolic,
            gamma: None,
            expr: None,
            n,
        }
    }

    pub fn exp_power(gamma: f64, n: u32) -> Self {
        ModelSpec {
            kind: ModelKind::ExpPower,
            gamma: Some(gamma),
            expr: None,
            n,
        }
    }

    pub fn custom(expr: impl Into<String>, n: u32) -> Self {
        ModelSpec {
            kind: ModelKind::Custom,
            gamma: None,
            expr: Some(expr.into()),
            n,
        }
    }
}

/// `ln ψ(r)` and `rho[k] = ψ^(k)(r)/ψ(r)` for k = 0..=4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiPoint {
    pub log_psi: f64,
    pub rho: [f64; 5],
}

/// Power-series representation near the pole: `Σ c_i r^{e_i}`.
#[derive(Debug, Clone)]
struct Series(Vec<(f64, f64)>);

fn falling(e: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (e - j as f64))
}

/// k-th derivative of `r^e`, with the limit at r = 0.
fn pow_deriv(r: f64, e: f64, k: usize) -> f64 {
    let c = falling(e, k);
    if c == 0.0 {
        return 0.0;
    }
    if r == 0.0 {
        let d = e - k as f64;
        return if d == 0.0 {
            c
        } else if d > 0.0 {
            0.0
        } else {
            c.signum() * f64::INFINITY
        };
    }
    c * r.powf(e - k as f64)
}

impl Series {
    fn derivs(&self, r: f64) -> [f64; 5] {
        let mut d = [0.0; 5];
        for &(c, e) in &self.0 {
            for (k, dk) in d.iter_mut().enumerate() {
                *dk += c * pow_deriv(r, e, k);
            }
        }
        d
    }

    /// `ψ'(r) - 1`, computed without cancellation when the leading term is `r`.
    fn dpsi_minus_one(&self, r: f64) -> f64 {
        let mut s = 0.0;
        let mut saw_linear = false;
        for &(c, e) in &self.0 {
            if e == 1.0 && c == 1.0 && !saw_linear {
                saw_linear = true;
                continue;
            }
            s += c * pow_deriv(r, e, 1);
        }
        if saw_linear {
            s
        } else {
            s - 1.0
        }
    }
}

#[derive(Debug, Clone)]
enum Evaluator {
    Euclidean,
    Hyperbolic,
    ExpPower(f64),
    Custom(ExprAst),
}

/// An immutable, validated warping function.
#[derive(Debug, Clone)]
pub struct PsiModel {
    spec: ModelSpec,
    eval: Evaluator,
    series: Series,
    r_floor: f64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

/// Build and validate a model.
pub fn build_model(spec: &ModelSpec) -> Result<PsiModel> {
    if spec.n < 3 {
        return Err(LefError::InvalidModel(format!(
            "dimension n = {} must be at least 3",
            spec.n
        )));
    }
    let (eval, series) = match spec.kind {
        ModelKind::Euclidean => (Evaluator::Euclidean, Series(vec![(1.0, 1.0)])),
        ModelKind::Hyperbolic => (
            Evaluator::Hyperbolic,
            Series(
                (0..5)
                    .map(|k| (1.0 / factorial(2 * k + 1), (2 * k + 1) as f64))
                    .collect(),
            ),
        ),
        ModelKind::ExpPower => {
            let g = spec
                .gamma
                .ok_or_else(|| LefError::InvalidModel("exp_power requires a \"gamma\" field".into()))?;
            if !(g.is_finite() && g > 0.0) {
                return Err(LefError::InvalidModel(format!("gamma = {g} must be a positive real")));
            }
            if g <= 0.5 {
                return Err(LefError::H1Violation(format!(
                    "r*exp(r^{}) has psi''(0) != 0 (gamma must exceed 1/2)",
                    2.0 * g
                )));
            }
            let series = (0..5).map(|k| (1.0 / factorial(k), 2.0 * g * k as f64 + 1.0)).collect();
            (Evaluator::ExpPower(g), Series(series))
        }
        ModelKind::Custom => {
            let text = spec
                .expr
                .as_deref()
                .ok_or_else(|| LefError::InvalidModel("custom model requires an \"expr\" field".into()))?;
            let ast = psiexpr::parse(text)?;
            let at0 = psiexpr::eval_tower(&ast, 0.0)
                .map_err(|e| LefError::H1Violation(format!("psi is not defined at r = 0 ({e})")))?;
            let d = at0.0;
            if d[0].abs() > H1_TOL {
                return Err(LefError::H1Violation(format!("psi(0) = {} != 0", d[0])));
            }
            if (d[1] - 1.0).abs() > H1_TOL {
                return Err(LefError::H1Violation(format!("psi'(0) = {} != 1", d[1])));
            }
            if d[2].abs() > H1_TOL {
                return Err(LefError::H1Violation(format!("psi''(0) = {} != 0", d[2])));
            }
            let series = (1..5)
                .filter(|&k| d[k] != 0.0)
                .map(|k| (d[k] / factorial(k), k as f64))
                .collect();
            (Evaluator::Custom(ast), Series(series))
        }
    };
    let model = PsiModel {
        spec: spec.clone(),
        eval,
        series,
        r_floor: DEFAULT_R_FLOOR,
    };
    if let Evaluator::Custom(_) = model.eval {
        // positivity on a sample grid
        for i in 0..=200 {
            let r = DEFAULT_R_FLOOR * (50.0 / DEFAULT_R_FLOOR).powf(i as f64 / 200.0);
            model.eval(r).map_err(|e| match e {
                LefError::InvalidModel(_) => e,
                other => LefError::InvalidModel(format!("psi cannot be evaluated: {other}")),
            })?;
        }
    }
    Ok(model)
}

impl PsiModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n(&self) -> u32 {
        self.spec.n
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn r_floor(&self) -> f64 {
        self.r_floor
    }

    /// Evaluate at `r > 0`.
    pub fn eval(&self, r: f64) -> Result<PsiPoint> {
        if !(r > 0.0) {
            return Err(LefError::Precondition(format!(
                "psi is evaluated in log form only for r > 0 (got {r})"
            )));
        }
        if r < self.r_floor {
            return Ok(self.eval_series(r));
        }
        self.eval_direct(r)
    }

    fn eval_series(&self, r: f64) -> PsiPoint {
        let d = self.series.derivs(r);
        let mut rho = [1.0; 5];
        for k in 1..5 {
            rho[k] = d[k] / d[0];
        }
        PsiPoint {
            log_psi: d[0].ln(),
            rho,
        }
    }

    fn eval_direct(&self, r: f64) -> Result<PsiPoint> {
        Ok(match &self.eval {
            Evaluator::Euclidean => PsiPoint {
                log_psi: r.ln(),
                rho: [1.0, 1.0 / r, 0.0, 0.0, 0.0],
            },
            Evaluator::Hyperbolic => {
                let coth = 1.0 / r.tanh();
                let log_psi = if r < 20.0 {
                    r.sinh().ln()
                } else {
                    r - std::f64::consts::LN_2 + (-(-2.0 * r).exp()).ln_1p()
                };
                PsiPoint {
                    log_psi,
                    rho: [1.0, coth, 1.0, coth, 1.0],
                }
            }
            Evaluator::ExpPower(g) => {
                // psi = r e^phi, phi = r^{2g}; e_k = (e^phi)^(k)/e^phi
                let a = 2.0 * g;
                let f: Vec<f64> = (0..5).map(|k| pow_deriv(r, a, k)).collect();
                let (f1, f2, f3, f4) = (f[1], f[2], f[3], f[4]);
                let e = [
                    1.0,
                    f1,
                    f2 + f1 * f1,
                    f3 + 3.0 * f1 * f2 + f1.powi(3),
                    f4 + 4.0 * f1 * f3 + 3.0 * f2 * f2 + 6.0 * f1 * f1 * f2 + f1.powi(4),
                ];
                let mut rho = [1.0; 5];
                for k in 1..5 {
                    rho[k] = e[k] + k as f64 * e[k - 1] / r;
                }
                PsiPoint {
                    log_psi: r.ln() + f[0],
                    rho,
                }
            }
            Evaluator::Custom(ast) => {
                let t = psiexpr::eval_scaled(ast, r)?;
                if !(t.coef[0] > 0.0) {
                    return Err(LefError::InvalidModel(format!(
                        "psi({r}) = {} is not positive",
                        t.coef[0] * t.scale.exp()
                    )));
                }
                let mut rho = [1.0; 5];
                for (k, rk) in rho.iter_mut().enumerate().skip(1) {
                    *rk = t.ratio(k);
                }
                PsiPoint {
                    log_psi: t.ln_abs(),
                    rho,
                }
            }
        })
    }

    /// `ln ψ(r)`; `-inf` at the pole.
    pub fn log_psi(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.eval(r)?.log_psi)
    }

    /// `ψ'(r)/ψ(r)`.
    pub fn dlog(&self, r: f64) -> Result<f64> {
        match self.eval {
            Evaluator::Euclidean => Ok(1.0 / r),
            Evaluator::Hyperbolic if r >= self.r_floor => Ok(1.0 / r.tanh()),
            _ => Ok(self.eval(r)?.rho[1]),
        }
    }

    /// Raw `(ψ, ψ', ψ'', ψ''', ψ'''')`; may overflow to infinity for large r.
    pub fn derivs(&self, r: f64) -> Result<[f64; 5]> {
        if r < 0.0 {
            return Err(LefError::Precondition(format!("r = {r} < 0")));
        }
        if r < self.r_floor {
            return Ok(self.series.derivs(r));
        }
        let pt = self.eval_direct(r)?;
        let psi = pt.log_psi.exp();
        Ok(pt.rho.map(|x| x * psi))
    }

    /// `a(r) = ∫_0^r (ψ(s)/ψ(r))^{n-1} ds`, so that `∫_0^r ψ^{n-1} = ψ(r)^{n-1} a(r)`.
    pub fn scaled_volume(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let m = (self.n() - 1) as f64;
        let pt = self.eval(r)?;
        let w0 = r.min(1.0 / (m * pt.rho[1].max(1e-300)));
        let q = quad::integrate_backward(|s: f64| self.weight_ratio(s, r, m), r, w0, self.weight_rel_tol(r))?;
        Ok(q.value)
    }

    /// `a` on an increasing grid, accumulated piecewise.
    pub fn scaled_volume_on_grid(&self, rs: &[f64]) -> Result<Vec<f64>> {
        let m = (self.n() - 1) as f64;
        let mut out = Vec::with_capacity(rs.len());
        let mut prev: Option<(f64, f64)> = None;
        for &r in rs {
            let a = match prev {
                None => self.scaled_volume(r)?,
                Some((r0, a0)) if r > r0 && r0 > 0.0 => {
                    let tol = self.weight_rel_tol(r);
                    let piece = quad::integrate(|s: f64| self.weight_ratio(s, r, m), r0, r, tol, 0.0)?;
                    a0 * (-m * self.log_psi_ratio(r, r0)?).exp() + piece.value
                }
                Some((r0, _)) if r > r0 => self.scaled_volume(r)?,
                Some((_, a0)) => a0,
            };
            out.push(a);
            prev = Some((r, a));
        }
        Ok(out)
    }

    /// `ln(ψ(s)/ψ(r))` without cancellation between two large logs.
    pub fn log_psi_ratio(&self, s: f64, r: f64) -> Result<f64> {
        if s == r {
            return Ok(0.0);
        }
        match self.eval {
            Evaluator::Euclidean => Ok((s / r).ln()),
            Evaluator::Hyperbolic if s >= 20.0 && r >= 20.0 => {
                Ok((s - r) + (-(-2.0 * s).exp()).ln_1p() - (-(-2.0 * r).exp()).ln_1p())
            }
            Evaluator::ExpPower(g) if s >= self.r_floor && r >= self.r_floor => {
                let a = 2.0 * g;
                let q = (s / r).ln();
                Ok(q + r.powf(a) * (a * q).exp_m1())
            }
            _ => Ok(self.log_psi(s)? - self.log_psi(r)?),
        }
    }

    /// Relative accuracy attainable for integrals of `(ψ(s)/ψ(r))^{±(n-1)}`:
    /// the exponent moves by `(n-1)(ψ'/ψ)·ulp(r)` between neighbouring floats.
    fn weight_rel_tol(&self, r: f64) -> f64 {
        let m = (self.n() - 1) as f64;
        let g = self.dlog(r).unwrap_or(0.0).abs();
        let mut tol = 1e-12f64.max(8.0 * m * g * r * f64::EPSILON);
        if let Evaluator::Custom(_) = self.eval {
            let l = self.log_psi(r).unwrap_or(0.0).abs();
            tol = tol.max(64.0 * f64::EPSILON * m * l);
        }
        tol
    }

    fn weight_ratio(&self, s: f64, r: f64, m: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self.log_psi_ratio(s, r) {
            Ok(l) => (m * l).exp(),
            Err(_) => f64::NAN,
        }
    }

    /// `b(x) = ∫_x^∞ (ψ(x)/ψ(s))^{n-1} ds`; `None` when the integral diverges.
    pub fn scaled_dual(&self, x: f64) -> Result<Option<f64>> {
        let m = (self.n() - 1) as f64;
        let pt = self.eval(x)?;
        let w0 = x.min(1.0 / (m * pt.rho[1].max(1e-300)));
        let switch = (2.0 * x).max(50.0);
        match quad::integrate_to_infinity(
            |s: f64| self.weight_ratio(s, x, -m),
            x,
            w0,
            switch,
            self.weight_rel_tol(x).max(1e-11),
        ) {
            Ok(q) if q.value.is_finite() => Ok(Some(q.value)),
            Ok(_) | Err(LefError::Quadrature { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Curvatures of planes containing `∂r` and orthogonal to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Curvatures {
    pub radial: f64,
    pub orthogonal: f64,
}

pub fn curvatures(model: &PsiModel, r: f64) -> Result<Curvatures> {
    if !(r > 0.0) {
        return Err(LefError::Precondition(format!("curvature needs r > 0 (got {r})")));
    }
    if r < CURVATURE_SERIES_CUTOFF && !matches!(model.eval, Evaluator::Custom(_)) {
        let d = model.series.derivs(r);
        let dm1 = model.series.dpsi_minus_one(r);
        return Ok(Curvatures {
            radial: -d[2] / d[0],
            orthogonal: -dm1 * (d[1] + 1.0) / (d[0] * d[0]),
        });
    }
    let pt = model.eval(r)?;
    Ok(Curvatures {
        radial: -pt.rho[2],
        orthogonal: (-2.0 * pt.log_psi).exp() - pt.rho[1] * pt.rho[1],
    })
}

/// Area of the unit sphere `S^{n-1}`: `2π^{n/2}/Γ(n/2)`.
pub fn omega(n: u32) -> f64 {
    use std::f64::consts::PI;
    // Γ(n/2) for integer n
    let gamma_half = if n.is_multiple_of(2) {
        factorial((n / 2 - 1) as usize)
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < n as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    };
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeodesicQuantities {
    pub area: f64,
    pub volume: f64,
    pub log_area: f64,
    pub log_volume: f64,
}

/// Area of the geodesic sphere of radius r and volume of the ball it bounds.
pub fn geodesic_quantities(model: &PsiModel, r: f64) -> Result<GeodesicQuantities> {
    if !(r > 0.0) {
        return Err(LefError::Precondition(format!("radius must be positive (got {r})")));
    }
    let m = (model.n() - 1) as f64;
    let lw = omega(model.n()).ln();
    let log_area = lw + m * model.log_psi(r)?;
    let log_volume = log_area + model.scaled_volume(r)?.ln();
    Ok(GeodesicQuantities {
        area: log_area.exp(),
        volume: log_volume.exp(),
        log_area,
        log_volume,
    })
}

/// A failed condition together with the grid point exhibiting it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub condition: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub h3_ok: bool,
    /// `+inf` serializes as `null`.
    pub l_estimate: f64,
    pub supplementary_ok: bool,
    /// `None` when the tail is inconclusive.
    pub psi_over_psiprime_integrable: Option<bool>,
    pub serrin_ok: bool,
    pub extra_ok: bool,
    pub window: [f64; 2],
    pub witnesses: Vec<Witness>,
}

impl HypothesisReport {
    /// Condition required by the stability-outside-compact and threshold
    /// strictness results: `limsup ψ'/ψ < ∞`, or `l = ∞` with the
    /// supplementary condition and `ψ/ψ' ∉ L¹`.
    pub fn alternatives_ok(&self) -> bool {
        self.l_estimate.is_finite() || (self.supplementary_ok && self.psi_over_psiprime_integrable == Some(false))
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Least-squares fit `y ≈ a + b x`; returns `(a, b)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Numerical evidence for the structural hypotheses on ψ over `window`.
pub fn check_hypotheses(model: &PsiModel, window: [f64; 2], grid_count: usize) -> Result<HypothesisReport> {
    let [r_lo, r_hi] = window;
    if !(0.0 < r_lo && r_lo < r_hi) {
        return Err(LefError::Precondition(format!(
            "window must satisfy 0 < r_lo < r_hi (got [{r_lo}, {r_hi}])"
        )));
    }
    if grid_count < 100 {
        return Err(LefError::Precondition(format!(
            "grid_count = {grid_count} must be at least 100"
        )));
    }
    let mut witnesses = Vec::new();
    let mut fail = |name: &str, r: f64| {
        witnesses.push(Witness {
            condition: name.to_string(),
            r,
        })
    };

    // (H1)
    let d0 = model.derivs(0.0)?;
    let h1_ok = d0[0].abs() <= H1_TOL && (d0[1] - 1.0).abs() <= H1_TOL && d0[2].abs() <= H1_TOL;
    if !h1_ok {
        fail("h1", 0.0);
    }

    // (H2) on (0, r_hi]
    let full = linspace(r_hi / grid_count as f64, r_hi, grid_count);
    let mut h2_ok = true;
    for &r in &full {
        if model.dlog(r)? < 0.0 {
            h2_ok = false;
            fail("h2", r);
            break;
        }
    }

    let tail = linspace(r_lo, r_hi, grid_count);
    let pts: Vec<PsiPoint> = tail.iter().map(|&r| model.eval(r)).collect::<Result<_>>()?;
    let g: Vec<f64> = pts.iter().map(|p| p.rho[1]).collect();

    // l = liminf ψ'/ψ: tail minimum, extrapolated in 1/r, or +inf when g grows
    let (imin, gmin) = g
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let half = grid_count / 2;
    let growth = (g[grid_count - 1] / g[half]).ln() / (tail[grid_count - 1] / tail[half]).ln();
    let l_estimate = if gmin > 1e6 || (growth > 0.05 && imin < half) {
        f64::INFINITY
    } else {
        let inv: Vec<f64> = tail[half..].iter().map(|r| 1.0 / r).collect();
        let (a, _) = linear_fit(&inv, &g[half..]);
        let a = a.min(gmin);
        if a.abs() < 1e-9 * (1.0 + gmin.abs()) || a < 0.0 {
            0.0
        } else {
            a
        }
    };
    let h3_ok = l_estimate > 0.0;
    if !h3_ok {
        fail("h3", tail[imin]);
    }

    // supplementary: [log(ψ'/ψ)]' = O(1), i.e. |g'/g| does not grow on the tail
    let dl: Vec<f64> = pts
        .iter()
        .map(|p| ((p.rho[2] - p.rho[1] * p.rho[1]) / p.rho[1]).abs())
        .collect();
    let third = grid_count / 3;
    let early = dl[..third].iter().copied().fold(0.0, f64::max);
    let (ilate, late) = dl[2 * third..]
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let supplementary_ok = late <= 1.5 * early + 1e-12;
    if !supplementary_ok {
        fail("supplementary", tail[2 * third + ilate]);
    }

    // ψ/ψ' ∈ L¹(0, ∞): log-log slope on [r_hi/2, r_hi], dyadic blocks in the band
    let f = |r: f64| -> Result<f64> { Ok(1.0 / model.dlog(r)?) };
    let slope = (f(r_hi)? / f(r_hi / 2.0)?).ln() / std::f64::consts::LN_2;
    let psi_over_psiprime_integrable = if slope <= -1.05 {
        Some(true)
    } else if slope >= -0.95 {
        Some(false)
    } else {
        let fr = |r: f64| f(r).unwrap_or(f64::NAN);
        let late = quad::integrate(fr, r_hi / 2.0, r_hi, 1e-10, 0.0)?.value;
        let prev = quad::integrate(fr, r_hi / 4.0, r_hi / 2.0, 1e-10, 0.0)?.value;
        let ratio = late / prev;
        if ratio >= 0.99 {
            Some(false)
        } else if ratio <= 0.9 {
            Some(true)
        } else {
            None
        }
    };

    // serrin: β/r ≤ ψ'/ψ ≤ β' on the tail
    let rg_min = tail.iter().zip(&g).map(|(r, gi)| r * gi).fold(f64::INFINITY, f64::min);
    let serrin_ok = rg_min > 1e-9 && l_estimate.is_finite() && growth <= 0.05;
    if !serrin_ok {
        let (i, _) = g.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        fail("serrin", tail[i]);
    }

    // extra: ψ'/ψ and ψ''/ψ' are o(ψ^δ) with δ = (n-2)/2, the smallest δ
    // reached by subcritical p
    let delta = (model.n() as f64 - 2.0) / 2.0;
    let mut extra_ok = true;
    for q in [
        |p: &PsiPoint| p.rho[1],
        |p: &PsiPoint| if p.rho[1] > 0.0 { p.rho[2] / p.rho[1] } else { 0.0 },
    ] {
        let lv: Vec<f64> = pts.iter().map(|p| q(p).abs().ln() - delta * p.log_psi).collect();
        let first = lv[half];
        let last = lv[grid_count - 1];
        let monotone = lv[half..]
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 || w[1] == f64::NEG_INFINITY);
        if !(last == f64::NEG_INFINITY || (monotone && last < first - std::f64::consts::LN_10)) {
            extra_ok = false;
            fail("extra", r_hi);
            break;
        }
    }

    Ok(HypothesisReport {
        h1_ok,
        h2_ok,
        h3_ok,
        l_estimate,
        supplementary_ok,
        psi_over_psiprime_integrable,
        serrin_ok,
        extra_ok,
        window,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn hyperbolic_value() {
        let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let d = m.derivs(1.0).unwrap();
        assert!(rel(d[0], 1f64.sinh()) < 1e-14);
        assert!(rel(d[1], 1f64.cosh()) < 1e-14);
        assert!((d[0] - 1.1752).abs() < 1e-4);
    }

    #[test]
    fn euclidean_identity() {
        let m = build_model(&ModelSpec::euclidean(3)).unwrap();
        assert_eq!(m.derivs(2.5).unwrap(), [2.5, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn custom_h1_violation() {
        let e = build_model(&ModelSpec::custom("sinh(r)*2", 3)).unwrap_err();
        assert!(matches!(e, LefError::H1Violation(ref s) if s.contains("psi'(0)")));
        assert!(e.is_refusal());
    }

    #[test]
    fn custom_parse_error_and_bad_n() {
        assert!(matches!(
            build_model(&ModelSpec::custom("r^r", 3)),
            Err(LefError::Parse(_))
        ));
        assert!(build_model(&ModelSpec::hyperbolic(2)).is_err());
        assert!(build_model(&ModelSpec::exp_power(0.5, 3)).is_err());
    }

    #[test]
    fn series_matches_direct_below_floor() {
        for spec in [
            ModelSpec::euclidean(3),
            ModelSpec::hyperbolic(3),
            ModelSpec::exp_power(1.0, 3),
            ModelSpec::exp_power(1.5, 4),
        ] {
            let m = build_model(&spec).unwrap();
            for r in [1e-5, 5e-5, 1e-4, 2e-4, 4e-4] {
                let s = m.eval_series(r);
                let d = m.eval_direct(r).unwrap();
                assert!(rel(s.log_psi.exp(), d.log_psi.exp()) < 1e-9, "{spec:?} {r}");
                for k in 1..5 {
                    if d.rho[k].abs() > 1e-12 {
                        assert!(rel(s.rho[k], d.rho[k]) < 1e-9, "{spec:?} r={r} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn exp_power_matches_expression() {
        let m = build_model(&ModelSpec::exp_power(1.0, 3)).unwrap();
        let c = build_model(&ModelSpec::custom("r*exp(r^2)", 3)).unwrap();
        for r in [0.3, 1.0, 4.0, 30.0] {
            let a = m.eval(r).unwrap();
            let b = c.eval(r).unwrap();
            assert!(rel(a.log_psi, b.log_psi) < 1e-12);
            for k in 1..5 {
                assert!(rel(a.rho[k], b.rho[k]) < 1e-10, "r={r} k={k}");
            }
        }
    }

    #[test]
    fn doubly_exponential_stays_finite() {
        let m = build_model(&ModelSpec::custom("r*exp(exp(r)-1-r)", 3)).unwrap();
        let p = m.eval(30.0).unwrap();
        assert!(p.log_psi > 1e12 && p.rho[1].is_finite());
    }

    #[test]
    fn curvature_examples() {
        let h = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let c = curvatures(&h, 2.0).unwrap();
        assert!((c.radial + 1.0).abs() < 1e-12 && (c.orthogonal + 1.0).abs() < 1e-12);
        let c = curvatures(&h, 1e-3).unwrap();
        assert!((c.radial + 1.0).abs() < 1e-12 && (c.orthogonal + 1.0).abs() < 1e-9);
        let e = build_model(&ModelSpec::euclidean(3)).unwrap();
        assert_eq!(
            curvatures(&e, 1.0).unwrap(),
            Curvatures {
                radial: 0.0,
                orthogonal: 0.0
            }
        );
        let x = build_model(&ModelSpec::exp_power(1.0, 3)).unwrap();
        let r = 20.0;
        assert!(rel(curvatures(&x, r).unwrap().radial, -4.0 * r * r) < 0.02);
        // limit at the pole is -psi'''(0) = -6
        assert!((curvatures(&x, 1e-4).unwrap().radial + 6.0).abs() < 1e-6);
    }

    #[test]
    fn omega_values() {
        use std::f64::consts::PI;
        assert!(rel(omega(3), 4.0 * PI) < 1e-15);
        assert!(rel(omega(4), 2.0 * PI * PI) < 1e-15);
        assert!(rel(omega(5), 8.0 * PI * PI / 3.0) < 1e-15);
    }

    #[test]
    fn volumes() {
        use std::f64::consts::PI;
        let e = build_model(&ModelSpec::euclidean(3)).unwrap();
        let g = geodesic_quantities(&e, 1.0).unwrap();
        assert!(rel(g.area, 4.0 * PI) < 1e-12 && rel(g.volume, 4.0 * PI / 3.0) < 1e-10);
        let h = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let v = geodesic_quantities(&h, 1.0).unwrap().volume;
        let exact = 4.0 * PI * (1f64.sinh() * 1f64.cosh() - 1.0) / 2.0;
        assert!(rel(v, exact) < 1e-10);
        let r = 1e-3;
        let v = geodesic_quantities(&h, r).unwrap().volume;
        assert!(rel(v / r.powi(3), 4.0 * PI / 3.0) < 1e-5);
        // huge radius: stays in log form
        let g = geodesic_quantities(&h, 500.0).unwrap();
        assert!(g.volume.is_infinite() && g.log_volume.is_finite());
    }

    #[test]
    fn scaled_integrals_closed_forms() {
        let h = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        for x in [0.01, 0.5, 3.0, 40.0, 120.0] {
            // ∫_x^∞ sinh^-2 = coth x - 1
            let b = h.scaled_dual(x).unwrap().unwrap();
            let exact = x.sinh().powi(2) * (1.0 / x.tanh() - 1.0);
            let exact = if x > 30.0 { 0.5 + 0.0 * exact } else { exact };
            assert!(rel(b, exact) < 1e-8, "x={x} b={b} exact={exact}");
        }
        let e = build_model(&ModelSpec::euclidean(3)).unwrap();
        assert!(rel(e.scaled_dual(2.0).unwrap().unwrap(), 2.0) < 1e-9);
        let grid: Vec<f64> = (1..=60).map(|i| i as f64 * 0.5).collect();
        let a = h.scaled_volume_on_grid(&grid).unwrap();
        for (r, ai) in grid.iter().zip(&a) {
            let exact = (r.sinh() * r.cosh() - r) / 2.0 / r.sinh().powi(2);
            assert!(rel(*ai, exact) < 1e-9, "r={r}");
            assert!(rel(h.scaled_volume(*r).unwrap(), exact) < 1e-9);
        }
    }

    #[test]
    fn bounded_warping_has_divergent_dual() {
        // ψ = tanh r: ψ^{1-n} is not integrable at infinity
        let m = build_model(&ModelSpec::custom("sinh(r)/cosh(r)", 3)).unwrap();
        assert_eq!(m.scaled_dual(1.0).unwrap(), None);
    }

    #[test]
    fn hypotheses_builtins() {
        let w = [10.0, 50.0];
        let h = check_hypotheses(&build_model(&ModelSpec::hyperbolic(3)).unwrap(), w, 400).unwrap();
        assert!(h.h1_ok && h.h2_ok && h.h3_ok && h.supplementary_ok && h.serrin_ok && h.extra_ok);
        assert!((h.l_estimate - 1.0).abs() < 1e-6);
        assert_eq!(h.psi_over_psiprime_integrable, Some(false));
        assert!(h.alternatives_ok());

        let e = check_hypotheses(&build_model(&ModelSpec::euclidean(3)).unwrap(), w, 400).unwrap();
        assert!(!e.h3_ok && e.serrin_ok && e.h2_ok);
        assert_eq!(e.l_estimate, 0.0);
        assert!(e.witnesses.iter().any(|w| w.condition == "h3"));

        let x = check_hypotheses(&build_model(&ModelSpec::exp_power(1.0, 3)).unwrap(), w, 400).unwrap();
        assert!(x.l_estimate.is_infinite() && x.h3_ok && x.supplementary_ok && x.extra_ok);
        assert!(!x.serrin_ok);
        assert_eq!(x.psi_over_psiprime_integrable, Some(false));

        let d = check_hypotheses(
            &build_model(&ModelSpec::custom("r*exp(exp(r)-1-r)", 3)).unwrap(),
            w,
            400,
        )
        .unwrap();
        assert_eq!(d.psi_over_psiprime_integrable, Some(true));
        assert!(!d.alternatives_ok());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = ModelSpec::exp_power(1.0, 3);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"kind":"exp_power","gamma":1.0,"n":3}"#);
        let back: ModelSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let c: ModelSpec = serde_json::from_str(r#"{"kind":"custom","expr":"sinh(r)","n":4}"#).unwrap();
        assert_eq!(c, ModelSpec::custom("sinh(r)", 4));
    }
}
