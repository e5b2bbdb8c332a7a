//! Classification of radial solutions: stability verdicts, the stability
//! threshold α₀, the sign threshold α* of the ground state, asymptotic rates,
//! ordering, stability outside compact sets and the regime tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{LefError, Result};
use crate::functionals::{self, critical_exponent, Membership, Verdict};
use crate::model::{build_model, check_hypotheses, linear_fit, HypothesisReport, ModelKind, ModelSpec, PsiModel};
use crate::quad;
use crate::radialode::{self, first_intersection, integrate, integrate_linearized, CauchyProblem, Trajectory};
use crate::spectrum::{lambda1_manifold, mu1_stability, ManifoldEigen};

/// Window and resolution used to check the structural hypotheses before classifying.
pub const HYPOTHESIS_WINDOW: [f64; 2] = [10.0, 50.0];
const HYPOTHESIS_POINTS: usize = 400;

fn extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn extended_pair<S: Serializer>(v: &[f64; 2], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    struct E(f64);
    impl Serialize for E {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            extended(&self.0, s)
        }
    }
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&E(v[0]))?;
    t.serialize_element(&E(v[1]))?;
    t.end()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JosephLundgren {
    pub n: u32,
    pub p_c: f64,
    pub sobolev_critical: f64,
    pub exceeds_sobolev: bool,
}

/// `p_c(n) = ((n-2)² - 4n + 8√(n-1)) / ((n-2)(n-10))`, defined for `n ≥ 11`.
pub fn joseph_lundgren(n: u32) -> Result<JosephLundgren> {
    if n < 11 {
        return Err(LefError::Precondition(format!(
            "the Joseph-Lundgren exponent is only defined for n >= 11 (got n = {n}); \
             no nontrivial stable solution exists for n <= 10"
        )));
    }
    let x = n as f64;
    let p_c = ((x - 2.0).powi(2) - 4.0 * x + 8.0 * (x - 1.0).sqrt()) / ((x - 2.0) * (x - 10.0));
    let sobolev_critical = critical_exponent(n);
    Ok(JosephLundgren {
        n,
        p_c,
        sobolev_critical,
        exceeds_sobolev: p_c > sobolev_critical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityPolicy {
    /// Increasing ball radii for the `μ₁(R)` sweep.
    pub radii: Vec<f64>,
    pub grid_count: usize,
    /// Trajectory length; at least the largest radius.
    pub r_max: f64,
    pub tol: f64,
    /// `tol_eig = eig_rel_tol · λ₁(M)`.
    pub eig_rel_tol: f64,
}

impl Default for StabilityPolicy {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            grid_count: 200,
            r_max: 100.0,
            tol: radialode::DEFAULT_TOL,
            eig_rel_tol: 1e-6,
        }
    }
}

impl StabilityPolicy {
    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.windows(2).any(|w| w[1] <= w[0]) || self.radii[0] <= 0.0 {
            return Err(LefError::Precondition(
                "policy radii must be positive and increasing".into(),
            ));
        }
        if self.r_max < self.radii[self.radii.len() - 1] {
            return Err(LefError::Precondition(format!(
                "policy r_max = {} is below the largest radius",
                self.r_max
            )));
        }
        if !(self.eig_rel_tol > 0.0) {
            return Err(LefError::Precondition("eig_rel_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityVerdict {
    pub alpha: f64,
    pub verdict: Stability,
    /// `(R, μ₁(R))` in sweep order.
    pub evidence: Vec<(f64, f64)>,
    /// Limit of `μ₁(R)` projected from the last decrements.
    pub projected_limit: Option<f64>,
    pub tol_eig: f64,
    /// First zero of `v_α = ∂u/∂α` up to `r_max`.
    pub v_alpha_first_zero: Option<f64>,
}

/// Shared state for classifying many `α` on one `(model, p)`: the checked
/// hypotheses and `λ₁(M)`.
#[derive(Debug, Clone)]
pub struct Classifier<'a> {
    model: &'a PsiModel,
    p: f64,
    policy: StabilityPolicy,
    hypotheses: HypothesisReport,
    lambda1: ManifoldEigen,
}

/// Refuse models outside the scope of the classification results.
fn require_hypotheses(model: &PsiModel) -> Result<HypothesisReport> {
    let rep = check_hypotheses(model, HYPOTHESIS_WINDOW, HYPOTHESIS_POINTS)?;
    if !(rep.h1_ok && rep.h2_ok && rep.h3_ok) {
        let failed: Vec<&str> = [("H1", rep.h1_ok), ("H2", rep.h2_ok), ("H3", rep.h3_ok)]
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(h, _)| *h)
            .collect();
        return Err(LefError::Refused(format!(
            "model fails {}; the stability classification does not apply",
            failed.join(", ")
        )));
    }
    Ok(rep)
}

impl<'a> Classifier<'a> {
    pub fn new(model: &'a PsiModel, p: f64, policy: StabilityPolicy) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(LefError::Precondition(format!("p = {p} must exceed 1")));
        }
        policy.validate()?;
        let hypotheses = require_hypotheses(model)?;
        let lambda1 = lambda1_manifold(model)?;
        if !(lambda1.value > 0.0) {
            return Err(LefError::Refused(format!(
                "lambda_1(M) = {} is not positive",
                lambda1.value
            )));
        }
        Ok(Self {
            model,
            p,
            policy,
            hypotheses,
            lambda1,
        })
    }

    pub fn model(&self) -> &PsiModel {
        self.model
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn policy(&self) -> &StabilityPolicy {
        &self.policy
    }

    pub fn hypotheses(&self) -> &HypothesisReport {
        &self.hypotheses
    }

    pub fn lambda1(&self) -> &ManifoldEigen {
        &self.lambda1
    }

    pub fn tol_eig(&self) -> f64 {
        self.policy.eig_rel_tol * self.lambda1.value
    }

    /// `(λ₁(M)/p)^{1/(p-1)}`: every `u_α` with `α` up to this is stable.
    pub fn lower_bound(&self) -> f64 {
        (self.lambda1.value / self.p).powf(1.0 / (self.p - 1.0))
    }

    pub fn trajectory(&self, alpha: f64) -> Result<Trajectory> {
        integrate(
            &CauchyProblem::new(self.model, self.p, alpha)?,
            self.policy.r_max,
            self.policy.tol,
        )
    }

    pub fn classify(&self, alpha: f64) -> Result<StabilityVerdict> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(LefError::Precondition(format!(
                "alpha = {alpha} must be finite and >= 0"
            )));
        }
        let traj = self.trajectory(alpha)?;
        self.classify_trajectory(&traj)
    }

    /// Sweep `μ₁(R)` over the policy radii. Unstable at the first
    /// `μ₁ < -tol_eig`; stable once the potential beyond `R` sits below
    /// `λ₁(M)`, the decrements of `μ₁` contract, and the projected limit
    /// clears `tol_eig`.
    pub fn classify_trajectory(&self, traj: &Trajectory) -> Result<StabilityVerdict> {
        let tol_eig = self.tol_eig();
        let lambda1 = self.lambda1.value;
        let p = self.p;
        let mut evidence: Vec<(f64, f64)> = Vec::new();
        let mut verdict = Stability::Indeterminate;
        let mut projected_limit = None;
        for &radius in &self.policy.radii {
            let mu = mu1_stability(self.model, traj, radius, self.policy.grid_count)?.value;
            evidence.push((radius, mu));
            if mu < -tol_eig {
                verdict = Stability::Unstable;
                projected_limit = None;
                break;
            }
            let k = evidence.len();
            if k < 3 {
                continue;
            }
            let d1 = evidence[k - 2].1 - evidence[k - 1].1;
            let d0 = evidence[k - 3].1 - evidence[k - 2].1;
            let remaining = if d1 <= 0.0 {
                Some(0.0)
            } else if d0 > 0.0 && d1 <= 0.5 * d0 {
                let rho = d1 / d0;
                Some(d1 * rho / (1.0 - rho))
            } else {
                None
            };
            let Some(remaining) = remaining else { continue };
            let limit = mu - remaining;
            projected_limit = Some(limit);
            let start = traj.r().partition_point(|&r| r < radius);
            let tail_peak = traj.u()[start..]
                .iter()
                .fold(0.0f64, |m, &u| m.max(p * u.abs().powf(p - 1.0)));
            if tail_peak <= lambda1 {
                verdict = if limit > tol_eig {
                    Stability::Stable
                } else if limit >= -tol_eig {
                    Stability::Indeterminate
                } else {
                    continue;
                };
                break;
            }
        }
        let v_alpha_first_zero = if traj.alpha == 0.0 {
            None
        } else {
            let problem = CauchyProblem::new(self.model, p, traj.alpha)?;
            integrate_linearized(&problem, traj)?.first_zero
        };
        Ok(StabilityVerdict {
            alpha: traj.alpha,
            verdict,
            evidence,
            projected_limit,
            tol_eig,
            v_alpha_first_zero,
        })
    }

    /// Classify several `α` in parallel, preserving order.
    pub fn classify_many(&self, alphas: &[f64]) -> Result<Vec<StabilityVerdict>> {
        alphas.par_iter().map(|&a| self.classify(a)).collect()
    }

    /// Bisection for α₀ between the lower bound and the first unstable `α`
    /// found by doubling; `+∞` (not converged) past `10⁴·lower_bound`.
    pub fn find_alpha0(&self, tol_alpha: f64) -> Result<ThresholdResult> {
        if !(tol_alpha > 0.0 && tol_alpha < 1.0) {
            return Err(LefError::Precondition(format!(
                "tol_alpha = {tol_alpha} outside (0, 1)"
            )));
        }
        let lower_bound = self.lower_bound();
        let unstable = |a: f64| -> Result<bool> { Ok(self.classify(a)?.verdict == Stability::Unstable) };
        let mut iterations = 0;
        if unstable(lower_bound)? {
            return Ok(ThresholdResult {
                value: lower_bound,
                bracket: [0.0, lower_bound],
                iterations: 1,
                lower_bound,
                converged: false,
                note: Some("the lower bound itself classified unstable; the sweep is under-resolved".into()),
            });
        }
        let cap = 1e4 * lower_bound;
        let mut lo = lower_bound;
        let mut hi = 2.0 * lo;
        loop {
            iterations += 1;
            if unstable(hi)? {
                break;
            }
            lo = hi;
            if hi >= cap {
                return Ok(ThresholdResult {
                    value: f64::INFINITY,
                    bracket: [lo, f64::INFINITY],
                    iterations,
                    lower_bound,
                    converged: false,
                    note: Some(format!("no unstable alpha up to {cap:e}")),
                });
            }
            hi = (2.0 * hi).min(cap);
        }
        while hi - lo > tol_alpha * hi {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if unstable(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(ThresholdResult {
            value: 0.5 * (lo + hi),
            bracket: [lo, hi],
            iterations,
            lower_bound,
            converged: true,
            note: None,
        })
    }

    /// Smallest sampled radius beyond which `p|u|^{p-1} ≤ λ₁(M)`.
    pub fn stable_outside_compact(&self, traj: &Trajectory) -> Result<Option<f64>> {
        stable_outside_compact(traj, self.lambda1.value)
    }
}

/// Classify one `α` (builds a [`Classifier`]; reuse one for sweeps).
pub fn classify_stability(model: &PsiModel, p: f64, alpha: f64, policy: &StabilityPolicy) -> Result<StabilityVerdict> {
    Classifier::new(model, p, policy.clone())?.classify(alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdResult {
    #[serde(serialize_with = "extended")]
    pub value: f64,
    #[serde(serialize_with = "extended_pair")]
    pub bracket: [f64; 2],
    pub iterations: usize,
    pub lower_bound: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn find_alpha0(model: &PsiModel, p: f64, tol_alpha: f64, policy: &StabilityPolicy) -> Result<ThresholdResult> {
    Classifier::new(model, p, policy.clone())?.find_alpha0(tol_alpha)
}

/// Smallest sampled radius `R` with `p|u(r)|^{p-1} ≤ λ₁` at every sample
/// `r > R`; `None` when the last sample still exceeds it.
pub fn stable_outside_compact(traj: &Trajectory, lambda1: f64) -> Result<Option<f64>> {
    if !(lambda1 > 0.0) {
        return Err(LefError::Refused(format!(
            "lambda_1(M) = {lambda1} is not positive; no compact set can be excised"
        )));
    }
    let p = traj.p;
    let over = |u: f64| p * u.abs().powf(p - 1.0) > lambda1;
    let r = traj.r();
    let u = traj.u();
    match (0..u.len()).rev().find(|&i| over(u[i])) {
        None => Ok(Some(0.0)),
        Some(i) if i + 1 == u.len() => Ok(None),
        Some(i) => Ok(Some(r[i])),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundState {
    pub threshold: ThresholdResult,
    pub lambda_property: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub r_horizon: f64,
    /// `|α*(r_horizon) - α*(r_horizon/2)| / α*`.
    pub horizon_sensitivity: f64,
    /// Radii on which the bracketing solutions still agree to 1%.
    pub trusted_window: [f64; 2],
    /// Slope of `ln u` on the trusted window.
    pub decay_rate: f64,
}

/// Integration tolerance for the sign-threshold bisection.
const GROUND_TOL: f64 = 1e-11;

fn has_zero(model: &PsiModel, p: f64, alpha: f64, horizon: f64) -> Result<(bool, Trajectory)> {
    let t = integrate(&CauchyProblem::new(model, p, alpha)?, horizon, GROUND_TOL)?;
    Ok((t.first_u_zero().is_some(), t))
}

fn sign_bisection(
    model: &PsiModel,
    p: f64,
    start: f64,
    tol_alpha: f64,
    horizon: f64,
) -> Result<(ThresholdResult, Option<(Trajectory, Trajectory)>)> {
    let mut iterations = 0;
    let mut lo = start.max(1e-6);
    loop {
        iterations += 1;
        let (zero, t) = has_zero(model, p, lo, horizon)?;
        let n = t.u().len();
        if !zero && t.u()[n - 1] > 0.0 && t.uprime()[n - 1] < 0.0 {
            break;
        }
        lo *= 0.5;
        if lo < 1e-8 {
            return Err(LefError::Undefined(
                "no positive solution found down to alpha = 1e-8".into(),
            ));
        }
    }
    let cap = 1e4 * lo.max(1.0);
    let mut hi = 2.0 * lo;
    loop {
        iterations += 1;
        if has_zero(model, p, hi, horizon)?.0 {
            break;
        }
        lo = hi;
        if hi >= cap {
            let res = ThresholdResult {
                value: f64::INFINITY,
                bracket: [lo, f64::INFINITY],
                iterations,
                lower_bound: start,
                converged: false,
                note: Some(format!("no sign change up to alpha = {cap:e}")),
            };
            return Ok((res, None));
        }
        hi = (2.0 * hi).min(cap);
    }
    while hi - lo > tol_alpha * hi {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if has_zero(model, p, mid, horizon)?.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let below = has_zero(model, p, lo, horizon)?.1;
    let above = has_zero(model, p, hi, horizon)?.1;
    let res = ThresholdResult {
        value: 0.5 * (lo + hi),
        bracket: [lo, hi],
        iterations,
        lower_bound: start,
        converged: true,
        note: None,
    };
    Ok((res, Some((below, above))))
}

/// Sign threshold `α* = U(0)`: solutions below it stay positive up to the
/// horizon, solutions above it change sign.
pub fn ground_state_alpha(model: &PsiModel, p: f64, tol_alpha: f64, r_horizon: f64) -> Result<GroundState> {
    let n = model.n();
    if !(p > 1.0 && p < critical_exponent(n)) {
        return Err(LefError::Precondition(format!(
            "the sign threshold needs 1 < p < (n+2)/(n-2) (got p = {p})"
        )));
    }
    if !(tol_alpha > 0.0 && tol_alpha < 1.0) {
        return Err(LefError::Precondition(format!(
            "tol_alpha = {tol_alpha} outside (0, 1)"
        )));
    }
    if !(r_horizon >= 10.0) {
        return Err(LefError::Precondition(format!(
            "r_horizon = {r_horizon} must be at least 10"
        )));
    }
    let lambda_property = functionals::g_lambda_property(model, p, 50.0, 400)?.verdict;
    let warning = (lambda_property != Verdict::Holds)
        .then(|| "the Lambda-property does not hold; uniqueness of the ground state is not guaranteed".to_string());
    let lambda1 = lambda1_manifold(model)?.value;
    let lower = (lambda1 / p).powf(1.0 / (p - 1.0));
    let start = if lower > 0.0 { lower } else { 1.0 };
    let (mut threshold, pair) = sign_bisection(model, p, start, tol_alpha, r_horizon)?;
    threshold.lower_bound = lower;
    let (trusted_window, decay_rate) = match &pair {
        Some((below, above)) => trusted_decay(below, above),
        None => ([f64::NAN; 2], f64::NAN),
    };
    let horizon_sensitivity = if threshold.value.is_finite() {
        let (half, _) = sign_bisection(model, p, start, tol_alpha, 0.5 * r_horizon)?;
        ((threshold.value - half.value) / threshold.value).abs()
    } else {
        f64::NAN
    };
    Ok(GroundState {
        threshold,
        lambda_property,
        warning,
        r_horizon,
        horizon_sensitivity,
        trusted_window,
        decay_rate,
    })
}

/// Window `[r_s/2, r_s]`, `r_s` the first radius where the two bracketing
/// solutions differ by 1%, and the slope of `ln u` there.
fn trusted_decay(below: &Trajectory, above: &Trajectory) -> ([f64; 2], f64) {
    let split = below
        .r()
        .iter()
        .zip(below.u())
        .skip(1)
        .find(|(&r, &u)| !(u > 0.0) || (above.eval(r).0 - u).abs() > 1e-2 * u.abs())
        .map_or(below.r_max, |(&r, _)| r);
    let window = [0.5 * split, split];
    let (x, y): (Vec<f64>, Vec<f64>) = (0..=64)
        .map(|i| {
            let r = window[0] + (window[1] - window[0]) * i as f64 / 64.0;
            (r, below.eval(r).0.ln())
        })
        .unzip();
    (window, linear_fit(&x, &y).1)
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticEntry {
    pub quantity: String,
    /// Extrapolated limit on the window.
    pub measured: f64,
    /// Plain value at the window end.
    pub raw: f64,
    pub predicted: Option<f64>,
    /// `|measured - predicted| / |predicted|`.
    pub deviation: Option<f64>,
    pub window: [f64; 2],
    /// The two halves of the window disagree by more than 1%.
    pub slow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayBranch {
    /// `u` in H¹: exponential-type decay with `ψ^{n-1}u' → L`.
    Fast,
    /// `u ∉ H¹`, `ψ/ψ' ∉ L¹`: decay governed by `∫ψ/ψ'`.
    Slow,
    /// `ψ/ψ' ∈ L¹`: `u` tends to a nonzero constant.
    Positive,
    /// `u` still changes sign on the window.
    Oscillating,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub alpha: f64,
    pub p: f64,
    pub branch: DecayBranch,
    #[serde(serialize_with = "extended")]
    pub l_estimate: f64,
    pub psi_over_psiprime_integrable: Option<bool>,
    pub entries: Vec<AsymptoticEntry>,
}

/// Regression-based limit on a window: `(value on the full window, value on its second half)`.
fn limit_fit(
    window: [f64; 2],
    f: impl Fn(&[f64], &[f64]) -> f64,
    x: impl Fn(f64) -> Result<f64>,
    y: impl Fn(f64) -> f64,
) -> Result<(f64, f64)> {
    const K: usize = 128;
    let mut xs = Vec::with_capacity(K + 1);
    let mut ys = Vec::with_capacity(K + 1);
    for i in 0..=K {
        let r = window[0] + (window[1] - window[0]) * i as f64 / K as f64;
        xs.push(x(r)?);
        ys.push(y(r));
    }
    let h = K / 2;
    Ok((f(&xs, &ys), f(&xs[h..], &ys[h..])))
}

fn entry(quantity: &str, measured: (f64, f64), raw: f64, predicted: Option<f64>, window: [f64; 2]) -> AsymptoticEntry {
    let (full, half) = measured;
    AsymptoticEntry {
        quantity: quantity.into(),
        measured: half,
        raw,
        predicted,
        deviation: predicted.map(|p| ((half - p) / p).abs()),
        window,
        slow: (full - half).abs() > 1e-2 * half.abs(),
    }
}

/// Measured and predicted decay limits on the tail window (default
/// `[r_max/2, r_max]`; the fast branch accepts an explicit trusted window).
pub fn check_asymptotics(traj: &Trajectory, model: &PsiModel, window: Option<[f64; 2]>) -> Result<AsymptoticsReport> {
    if &traj.spec != model.spec() {
        return Err(LefError::Precondition(
            "trajectory was computed on a different model".into(),
        ));
    }
    let window = match window {
        Some(w) => {
            if !(0.0 < w[0] && w[0] < w[1] && w[1] <= traj.r_max) {
                return Err(LefError::Precondition(format!(
                    "window {w:?} must lie inside (0, r_max = {}]",
                    traj.r_max
                )));
            }
            w
        }
        None => {
            if traj.r_max < 50.0 {
                return Err(LefError::Precondition(format!(
                    "asymptotics need r_max >= 50 (got {})",
                    traj.r_max
                )));
            }
            [0.5 * traj.r_max, traj.r_max]
        }
    };
    let explicit = window[1] < traj.r_max;
    let hyp = check_hypotheses(model, HYPOTHESIS_WINDOW, HYPOTHESIS_POINTS)?;
    let n1 = model.n() as f64 - 1.0;
    let p = traj.p;
    let l = hyp.l_estimate;
    let u_at = |r: f64| traj.eval(r).0;
    let up_at = |r: f64| traj.eval(r).1;

    let zeros_in_window = traj.u_zeros().iter().any(|&z| z >= window[0] && z <= window[1]);
    let branch = if traj.alpha == 0.0 || zeros_in_window {
        DecayBranch::Oscillating
    } else if hyp.psi_over_psiprime_integrable == Some(true) {
        DecayBranch::Positive
    } else if explicit || functionals::h1_energy_growth(traj, model)?.in_h1 == Membership::Yes {
        DecayBranch::Fast
    } else {
        DecayBranch::Slow
    };

    let slope = |x: &[f64], y: &[f64]| linear_fit(x, y).1;
    let mean = |_: &[f64], y: &[f64]| y.iter().sum::<f64>() / y.len() as f64;
    let mut entries = Vec::new();
    let end = window[1];
    match branch {
        DecayBranch::Oscillating => {}
        DecayBranch::Positive => {
            let limits = radialode::tail_limits(traj, model)?;
            let measured = limits.u_limit.unwrap_or(f64::NAN);
            entries.push(AsymptoticEntry {
                quantity: "lim u".into(),
                measured,
                raw: u_at(end),
                predicted: None,
                deviation: None,
                window,
                slow: limits.u_limit.is_none(),
            });
        }
        DecayBranch::Slow => {
            // u^{1-p} grows linearly in X(r) = ∫_0^r ψ/ψ' with slope (p-1)/(n-1)
            let inv_g = |s: f64| {
                if s <= 0.0 {
                    0.0
                } else {
                    1.0 / model.dlog(s).unwrap_or(f64::NAN)
                }
            };
            let x0 = quad::integrate(inv_g, 0.0, window[0], 1e-12, 0.0)?.value;
            let x_of = |r: f64| -> Result<f64> { Ok(x0 + quad::integrate(inv_g, window[0], r, 1e-12, 0.0)?.value) };
            let e = 1.0 / (p - 1.0);
            let power = |v: f64| v.abs().powf(1.0 - p);
            let (a, b) = limit_fit(window, slope, x_of, |r| power(u_at(r)))?;
            entries.push(entry(
                "lim (int_0^r psi/psi')^{1/(p-1)} u",
                (a.powf(-e), b.powf(-e)),
                x_of(end)?.powf(e) * u_at(end).abs(),
                Some((n1 / (p - 1.0)).powf(e)),
                window,
            ));
            if l.is_finite() && l > 0.0 {
                let (a, b) = limit_fit(window, slope, Ok, |r| power(u_at(r)))?;
                entries.push(entry(
                    "lim r^{1/(p-1)} u",
                    (a.powf(-e), b.powf(-e)),
                    end.powf(e) * u_at(end).abs(),
                    Some((l * n1 / (p - 1.0)).powf(e)),
                    window,
                ));
            }
        }
        DecayBranch::Fast => {
            let scaled = |r: f64, v: f64| -> f64 { model.log_psi(r).map_or(f64::NAN, |lp| v * (n1 * lp).exp()) };
            let (a, b) = limit_fit(window, mean, Ok, |r| scaled(r, up_at(r)))?;
            let big_l = b;
            entries.push(entry("lim psi^{n-1} u'", (a, b), scaled(end, up_at(end)), None, window));
            let (a, b) = limit_fit(window, mean, Ok, |r| scaled(r, u_at(r)))?;
            let pred = (l.is_finite() && l > 0.0).then(|| big_l.abs() / (n1 * l));
            entries.push(entry("lim psi^{n-1} u", (a, b), scaled(end, u_at(end)), pred, window));
            let dual = |r: f64| -> f64 {
                match model.scaled_dual(r) {
                    Ok(Some(bv)) => scaled(r, u_at(r)) / bv,
                    _ => f64::NAN,
                }
            };
            let (a, b) = limit_fit(window, mean, Ok, dual)?;
            entries.push(entry(
                "lim u / int_r^inf psi^{1-n}",
                (a, b),
                dual(end),
                Some(big_l.abs()),
                window,
            ));
            let (a, b) = limit_fit(window, slope, Ok, |r| u_at(r).abs().ln())?;
            entries.push(entry(
                "d ln u / dr",
                (a, b),
                u_at(end).abs().ln() / end,
                l.is_finite().then_some(-n1 * l),
                window,
            ));
        }
    }
    Ok(AsymptoticsReport {
        alpha: traj.alpha,
        p,
        branch,
        l_estimate: l,
        psi_over_psiprime_integrable: hyp.psi_over_psiprime_integrable,
        entries,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Intersection {
    pub alpha_hi: f64,
    pub alpha_lo: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub alphas: Vec<f64>,
    pub ordered: bool,
    pub intersections: Vec<Intersection>,
    /// Sampled `α` not classified stable.
    pub not_stable: Vec<f64>,
}

/// Pairwise intersections among the solutions for `alphas`, all of which
/// should be stable.
pub fn ordering_check(classifier: &Classifier, alphas: &[f64]) -> Result<OrderingReport> {
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let work: Vec<Result<(Trajectory, StabilityVerdict)>> = sorted
        .par_iter()
        .map(|&a| {
            let t = classifier.trajectory(a)?;
            let v = classifier.classify_trajectory(&t)?;
            Ok((t, v))
        })
        .collect();
    let work = work.into_iter().collect::<Result<Vec<_>>>()?;
    let not_stable: Vec<f64> = work
        .iter()
        .filter(|(_, v)| v.verdict != Stability::Stable)
        .map(|(_, v)| v.alpha)
        .collect();
    let mut intersections = Vec::new();
    for i in 0..work.len() {
        for j in 0..i {
            if let Some(r) = first_intersection(&work[i].0, &work[j].0)? {
                intersections.push(Intersection {
                    alpha_hi: sorted[i],
                    alpha_lo: sorted[j],
                    r,
                });
            }
        }
    }
    Ok(OrderingReport {
        alphas: sorted,
        ordered: intersections.is_empty() && not_stable.is_empty(),
        intersections,
        not_stable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleCheck {
    pub consistent: bool,
    pub in_l2: Membership,
}

/// A stable nonzero solution cannot lie in `L²(M)`.
pub fn liouville_check(traj: &Trajectory, model: &PsiModel, verdict: &StabilityVerdict) -> Result<LiouvilleCheck> {
    if verdict.verdict != Stability::Stable {
        return Err(LefError::Precondition(
            "the Liouville check applies to stable solutions only".into(),
        ));
    }
    if traj.alpha == 0.0 {
        return Ok(LiouvilleCheck {
            consistent: true,
            in_l2: Membership::Yes,
        });
    }
    let in_l2 = functionals::l2_growth(traj, model)?.in_h1;
    Ok(LiouvilleCheck {
        consistent: in_l2 != Membership::Yes,
        in_l2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Rescaled {
    pub lambda: f64,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub vprime: Vec<f64>,
    /// Sup of `|v_λ - v̄|` on `[0, min(5, λ r_max)]`, `v̄` the Euclidean profile.
    pub deviation: f64,
}

/// `v_λ(s) = λ^{-2/(p-1)} u(s/λ)` for a trajectory with `α = λ^{2/(p-1)}`.
pub fn blowup_rescale(traj: &Trajectory, lambda: f64) -> Result<Rescaled> {
    if !(lambda > 0.0) {
        return Err(LefError::Precondition(format!("lambda = {lambda} must be positive")));
    }
    let p = traj.p;
    let k = 2.0 / (p - 1.0);
    let alpha = lambda.powf(k);
    if ((traj.alpha - alpha) / alpha).abs() > 1e-12 {
        return Err(LefError::Precondition(format!(
            "trajectory alpha {} differs from lambda^(2/(p-1)) = {alpha}",
            traj.alpha
        )));
    }
    let scale = lambda.powf(-k);
    let s: Vec<f64> = traj.r().iter().map(|r| r * lambda).collect();
    let v: Vec<f64> = traj.u().iter().map(|u| u * scale).collect();
    let vprime: Vec<f64> = traj.uprime().iter().map(|d| d * scale / lambda).collect();
    let euclid = build_model(&ModelSpec::euclidean(traj.spec.n))?;
    let s_end = 5.0f64.min(lambda * traj.r_max);
    let limit = integrate(&CauchyProblem::new(&euclid, p, 1.0)?, s_end, traj.tol)?;
    let deviation = (0..=1000)
        .map(|i| {
            let x = s_end * i as f64 / 1000.0;
            (traj.eval(x / lambda).0 * scale - limit.eval(x).0).abs()
        })
        .fold(0.0, f64::max);
    Ok(Rescaled {
        lambda,
        s,
        v,
        vprime,
        deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cell {
    #[serde(rename = "YES")]
    Yes,
    #[serde(rename = "NO")]
    No,
    #[serde(rename = "?")]
    Open,
    /// Not decided by the sampled evidence.
    #[serde(rename = "n/a")]
    Undecided,
}

impl Cell {
    fn label(self) -> &'static str {
        match self {
            Cell::Yes => "YES",
            Cell::No => "NO",
            Cell::Open => "?",
            Cell::Undecided => "n/a",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub property: String,
    pub expected: Cell,
    pub computed: Cell,
    /// `None` when the expected entry is open.
    pub matches: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeTable {
    pub model: ModelSpec,
    pub p: f64,
    /// 1 for `n ≤ 10` or `p < p_c(n)`, 2 otherwise.
    pub column: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_c: Option<f64>,
    pub lambda1: f64,
    pub alternatives_ok: bool,
    pub verdicts: Vec<StabilityVerdict>,
    /// `stable_outside_compact` radius per sampled `α` (`None`: not reached).
    pub outside_radii: Vec<Option<f64>>,
    pub rows: Vec<TableRow>,
}

fn regime_column(n: u32, p: f64) -> Result<(u8, Option<f64>)> {
    if n <= 10 {
        return Ok((1, None));
    }
    let jl = joseph_lundgren(n)?;
    Ok((if p < jl.p_c { 1 } else { 2 }, Some(jl.p_c)))
}

/// Computed regime rows for a model satisfying the structural hypotheses,
/// set against the expected entries for its `(n, p)` column.
pub fn regime_table(classifier: &Classifier, alphas: &[f64]) -> Result<RegimeTable> {
    let model = classifier.model();
    let p = classifier.p();
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(LefError::Precondition("alpha samples must be positive".into()));
    }
    let mut alphas = alphas.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let (column, p_c) = regime_column(model.n(), p)?;
    let lambda1 = classifier.lambda1().value;
    let work: Vec<Result<(StabilityVerdict, Option<f64>)>> = alphas
        .par_iter()
        .map(|&a| {
            let t = classifier.trajectory(a)?;
            let v = classifier.classify_trajectory(&t)?;
            Ok((v, stable_outside_compact(&t, lambda1)?))
        })
        .collect();
    let work = work.into_iter().collect::<Result<Vec<_>>>()?;
    let (verdicts, outside_radii): (Vec<_>, Vec<_>) = work.into_iter().unzip();
    let kinds: Vec<Stability> = verdicts.iter().map(|v| v.verdict).collect();

    // the stable samples must form an initial segment, the unstable ones the rest
    let first_unstable = kinds.iter().position(|&k| k == Stability::Unstable);
    let split = first_unstable.unwrap_or(kinds.len());
    let small_stable = if split > 0 && kinds[..split].iter().all(|&k| k == Stability::Stable) {
        Cell::Yes
    } else if kinds[..split].contains(&Stability::Indeterminate) {
        Cell::Undecided
    } else {
        Cell::No
    };
    let large_unstable = match first_unstable {
        None => Cell::Undecided,
        Some(i) if kinds[i..].iter().all(|&k| k == Stability::Unstable) => Cell::Yes,
        Some(_) => Cell::No,
    };
    let outside = if outside_radii.iter().all(Option::is_some) {
        Cell::Yes
    } else {
        Cell::No
    };

    let alternatives_ok = classifier.hypotheses().alternatives_ok();
    let expected_outside = if alternatives_ok { Cell::Yes } else { Cell::Open };
    let expected = match column {
        1 => [Cell::Yes, Cell::Yes, expected_outside],
        _ => [Cell::Yes, Cell::Open, expected_outside],
    };
    let labels = [
        "u_alpha stable for 0 < |alpha| <= alpha_0",
        "u_alpha unstable for |alpha| > alpha_0",
        "u_alpha stable outside a compact set",
    ];
    let computed = [small_stable, large_unstable, outside];
    let rows = (0..3)
        .map(|i| TableRow {
            property: labels[i].into(),
            expected: expected[i],
            computed: computed[i],
            matches: (expected[i] != Cell::Open).then(|| expected[i] == computed[i]),
        })
        .collect();
    Ok(RegimeTable {
        model: model.spec().clone(),
        p,
        column,
        p_c,
        lambda1,
        alternatives_ok,
        verdicts,
        outside_radii,
        rows,
    })
}

/// Expected entries for the Euclidean model, which fails (H3) and is not
/// classified numerically.
pub fn euclidean_expectations(n: u32, p: f64) -> Result<Vec<TableRow>> {
    let (column, _) = regime_column(n, p)?;
    let critical = (p - critical_exponent(n)).abs() < 1e-12;
    let expected = match column {
        1 => [Cell::No, Cell::Yes, if critical { Cell::Yes } else { Cell::No }],
        _ => [Cell::Yes, Cell::No, Cell::Yes],
    };
    let labels = [
        "u_alpha stable for all alpha != 0",
        "u_alpha unstable for all alpha != 0",
        "u_alpha stable outside a compact set",
    ];
    Ok((0..3)
        .map(|i| TableRow {
            property: labels[i].into(),
            expected: expected[i],
            computed: Cell::Undecided,
            matches: None,
        })
        .collect())
}

impl RegimeTable {
    /// Aligned text rendering: one row per property, then the per-α evidence.
    pub fn render(&self) -> String {
        let header = match self.column {
            1 => "n <= 10 or (n >= 11 and p < p_c(n))",
            _ => "n >= 11 and p >= p_c(n)",
        };
        let w0 = self.rows.iter().map(|r| r.property.len()).max().unwrap_or(0).max(8);
        let w1 = header.len().max(8);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model {:?} n={} p={}  lambda_1(M)={:.6}",
            self.model.kind, self.model.n, self.p, self.lambda1
        );
        let rule = format!("+-{}-+-{}-+----------+-------+", "-".repeat(w0), "-".repeat(w1));
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "| {:<w0$} | {:<w1$} | computed | match |", "", header);
        let _ = writeln!(out, "{rule}");
        for r in &self.rows {
            let m = match r.matches {
                Some(true) => "yes",
                Some(false) => "NO",
                None => "open",
            };
            let _ = writeln!(
                out,
                "| {:<w0$} | {:<w1$} | {:<8} | {:<5} |",
                r.property,
                r.expected.label(),
                r.computed.label(),
                m
            );
        }
        let _ = writeln!(out, "{rule}");
        for (v, o) in self.verdicts.iter().zip(&self.outside_radii) {
            let mu = v.evidence.last().map_or(f64::NAN, |e| e.1);
            let radius = o.map_or("none".to_string(), |r| format!("{r:.3}"));
            let _ = writeln!(
                out,
                "alpha={:<10} {:<13} mu1(R={})={:<14.6e} outside-radius={}",
                v.alpha,
                format!("{:?}", v.verdict).to_lowercase(),
                v.evidence.last().map_or(f64::NAN, |e| e.0),
                mu,
                radius
            );
        }
        out
    }
}

/// True when the model is the flat one.
pub fn is_euclidean(model: &PsiModel) -> bool {
    model.kind() == ModelKind::Euclidean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joseph_lundgren_values() {
        let jl = joseph_lundgren(11).unwrap();
        let exact = (81.0 - 44.0 + 8.0 * 10f64.sqrt()) / 9.0;
        assert!((jl.p_c - exact).abs() < 1e-14);
        assert!((jl.p_c - 6.9220).abs() < 1e-4);
        assert!(jl.exceeds_sobolev);
        assert!(joseph_lundgren(10).is_err());
    }

    #[test]
    fn infinite_threshold_serializes() {
        let t = ThresholdResult {
            value: f64::INFINITY,
            bracket: [2.0, f64::INFINITY],
            iterations: 3,
            lower_bound: 1.0,
            converged: false,
            note: None,
        };
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["value"], "inf");
        assert_eq!(v["bracket"][0], 2.0);
        assert_eq!(v["bracket"][1], "inf");
    }

    #[test]
    fn euclidean_table_one() {
        let rows = euclidean_expectations(3, 3.0).unwrap();
        let e: Vec<Cell> = rows.iter().map(|r| r.expected).collect();
        assert_eq!(e, [Cell::No, Cell::Yes, Cell::No]);
        assert_eq!(euclidean_expectations(3, 5.0).unwrap()[2].expected, Cell::Yes);
        assert_eq!(euclidean_expectations(12, 8.0).unwrap()[0].expected, Cell::Yes);
    }

    #[test]
    fn outside_radius_from_samples() {
        let spec = ModelSpec::hyperbolic(3);
        let r = vec![0.0, 1.0, 2.0, 3.0];
        let t = Trajectory::from_samples(spec, 3.0, r, vec![1.0, 0.8, 0.3, 0.2], vec![0.0; 4], None).unwrap();
        // 3u² ≤ 1 from r = 2 on
        assert_eq!(stable_outside_compact(&t, 1.0).unwrap(), Some(1.0));
        assert_eq!(stable_outside_compact(&t, 0.01).unwrap(), None);
        assert_eq!(stable_outside_compact(&t, 10.0).unwrap(), Some(0.0));
        assert!(stable_outside_compact(&t, 0.0).is_err());
    }
}
