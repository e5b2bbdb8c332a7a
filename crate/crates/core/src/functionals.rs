//! Diagnostic functionals along radial solutions and of the warping function:
//! the Pohozaev-type function P and its derivative factor K, convexity of
//! the volume power A, the Λ-property of G, the radial Sobolev quotient and
//! the growth of the H¹ energy.
//!
//! Quantities carrying a factor `ψ^{n-1}` are stored divided by it together
//! with `ln ψ^{n-1}`, so huge warpings stay representable.

use serde::{Deserialize, Serialize};

use crate::error::{LefError, Result};
use crate::model::{linear_fit, PsiModel, PsiPoint};
use crate::quad;
use crate::radialode::Trajectory;

/// Radii at or below this are left out of property grids (series regime).
const GRID_LO: f64 = 1e-3;
const PROPERTY_ATOL: f64 = 1e-12;

pub fn critical_exponent(n: u32) -> f64 {
    (n as f64 + 2.0) / (n as f64 - 2.0)
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyProfile {
    pub r: Vec<f64>,
    /// `P(r) / ψ(r)^{n-1}`; equals 0 at the pole.
    pub p_scaled: Vec<f64>,
    /// `K(r) / ψ(r)^{n-1}`.
    pub k_scaled: Vec<f64>,
    /// `(n-1) ln ψ(r)`; `-inf` at the pole.
    pub log_weight: Vec<f64>,
    /// P is non-increasing on the stored grid.
    pub monotone: bool,
    /// K ≤ 0 on the stored grid (beyond the pole).
    pub k_nonpositive: bool,
}

impl EnergyProfile {
    /// `P(r_i)`; may overflow to ±inf.
    pub fn p(&self, i: usize) -> f64 {
        if self.r[i] == 0.0 {
            return 0.0;
        }
        self.p_scaled[i] * self.log_weight[i].exp()
    }

    pub fn k(&self, i: usize) -> f64 {
        if self.r[i] == 0.0 {
            return 0.0;
        }
        self.k_scaled[i] * self.log_weight[i].exp()
    }

    /// `P(r_{j}) <= P(r_{i})` compared in scaled form.
    fn non_increasing_between(&self, i: usize, j: usize, slack: f64) -> bool {
        if self.r[i] == 0.0 {
            return self.p_scaled[j] <= slack;
        }
        let ratio = (self.log_weight[j] - self.log_weight[i]).exp();
        self.p_scaled[j] * ratio <= self.p_scaled[i] + slack * (1.0 + self.p_scaled[i].abs())
    }
}

/// P and K sampled on the trajectory grid.
pub fn pohozaev_profile(traj: &Trajectory, model: &PsiModel) -> Result<EnergyProfile> {
    if &traj.spec != model.spec() {
        return Err(LefError::Precondition("trajectory belongs to another model".into()));
    }
    let n1 = model.n() as f64 - 1.0;
    let p = traj.p;
    let r = traj.r().to_vec();
    let a = model.scaled_volume_on_grid(&r)?;
    let mut p_scaled = Vec::with_capacity(r.len());
    let mut k_scaled = Vec::with_capacity(r.len());
    let mut log_weight = Vec::with_capacity(r.len());
    for (i, &ri) in r.iter().enumerate() {
        let (u, up) = (traj.u()[i], traj.uprime()[i]);
        if ri == 0.0 {
            p_scaled.push(0.0);
            k_scaled.push(0.0);
            log_weight.push(f64::NEG_INFINITY);
            continue;
        }
        let pt = model.eval(ri)?;
        let energy = 0.5 * up * up + u.abs().powf(p + 1.0) / (p + 1.0);
        p_scaled.push((p + 1.0) * a[i] * energy + u * up);
        k_scaled.push((p + 3.0) / 2.0 - n1 * (p + 1.0) * pt.rho[1] * a[i]);
        log_weight.push(n1 * pt.log_psi);
    }
    let mut prof = EnergyProfile {
        r,
        p_scaled,
        k_scaled,
        log_weight,
        monotone: true,
        k_nonpositive: true,
    };
    let slack = 10.0 * traj.tol;
    prof.monotone = (1..prof.r.len()).all(|i| prof.non_increasing_between(i - 1, i, slack));
    prof.k_nonpositive = prof.k_scaled.iter().skip(1).all(|&k| k <= slack);
    Ok(prof)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// JSON: `{property, verdict, witness_r, grid: {lo, hi, count}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub verdict: Verdict,
    pub witness_r: Option<f64>,
    pub grid: GridMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn check_r_hi(r_hi: f64) -> Result<()> {
    if !(r_hi > GRID_LO) {
        return Err(LefError::Precondition(format!("r_hi = {r_hi} must exceed {GRID_LO}")));
    }
    Ok(())
}

fn points(model: &PsiModel, grid: &[f64]) -> Result<Vec<PsiPoint>> {
    grid.iter().map(|&r| model.eval(r)).collect()
}

/// Convexity of `A = (∫_0^r ψ^{n-1})^{(p-1)/(2(p+1))}`, decided by the sign of
/// `h/ψ^n = 2(n-1)(p+1)(ψ'/ψ) a(r) - (p+3)`.
pub fn a_convexity(model: &PsiModel, p: f64, r_hi: f64, count: usize) -> Result<PropertyReport> {
    check_r_hi(r_hi)?;
    let n1 = model.n() as f64 - 1.0;
    let grid = log_grid(GRID_LO, r_hi, count.max(2));
    let a = model.scaled_volume_on_grid(&grid)?;
    let pts = points(model, &grid)?;
    let tol = 1e-9;
    let witness = grid
        .iter()
        .zip(a.iter().zip(&pts))
        .find(|(_, (ai, pt))| 2.0 * n1 * (p + 1.0) * pt.rho[1] * *ai - (p + 3.0) < -tol)
        .map(|(r, _)| *r);
    Ok(PropertyReport {
        property: "a_convexity".into(),
        verdict: if witness.is_some() {
            Verdict::Fails
        } else {
            Verdict::Holds
        },
        witness_r: witness,
        grid: GridMeta {
            lo: GRID_LO,
            hi: r_hi,
            count: grid.len(),
        },
        note: None,
    })
}

/// `G'(r) / (δ ψ^{δ(p-1)})` with its magnitude scale.
fn g_prime_sign(pt: &PsiPoint, n: f64, p: f64) -> (f64, f64) {
    let delta = 2.0 * (n - 1.0) / (p + 3.0);
    let c = delta + 2.0 - n;
    let [_, r1, r2, r3, _] = pt.rho;
    let b = c * r1 * r1 - r2;
    let t1 = delta * (p - 1.0) * r1 * b;
    let t2 = 2.0 * c * r1 * (r2 - r1 * r1);
    let t3 = r3 - r1 * r2;
    let scale = t1.abs() + t2.abs() + r3.abs() + (r1 * r2).abs();
    (t1 + t2 - t3, scale)
}

/// Λ-property of `G = δψ^{δ(p-1)-2}[(δ+2-n)ψ'^2 - ψ''ψ]`, `δ = 2(n-1)/(p+3)`:
/// `G' ≥ 0` then `G' ≤ 0`, with at most one switch.
pub fn g_lambda_property(model: &PsiModel, p: f64, r_hi: f64, count: usize) -> Result<PropertyReport> {
    let n = model.n() as f64;
    if !(p > 1.0 && p < critical_exponent(model.n())) {
        return Err(LefError::Precondition(format!(
            "the Λ-property test needs 1 < p < (n+2)/(n-2) (got p = {p})"
        )));
    }
    check_r_hi(r_hi)?;
    let grid = log_grid(GRID_LO, r_hi, count.max(2));
    let pts = points(model, &grid)?;
    let mut switched = false;
    let mut witness = None;
    let mut nonzero = 0;
    for (r, pt) in grid.iter().zip(&pts) {
        let (s, scale) = g_prime_sign(pt, n, p);
        if s.abs() <= PROPERTY_ATOL * scale {
            continue;
        }
        nonzero += 1;
        if s < 0.0 {
            switched = true;
        } else if switched {
            witness = Some(*r);
            break;
        }
    }
    let note = (nonzero == 0).then(|| "G' vanishes to tolerance on the whole grid".to_string());
    Ok(PropertyReport {
        property: "g_lambda_property".into(),
        verdict: if witness.is_some() {
            Verdict::Fails
        } else {
            Verdict::Holds
        },
        witness_r: witness,
        grid: GridMeta {
            lo: GRID_LO,
            hi: r_hi,
            count: grid.len(),
        },
        note,
    })
}

/// Sufficient condition for the Λ-property: `ψ''' > 0` and `(ψ'/ψ''')' ≤ 0`.
pub fn lambda_sufficient_condition(model: &PsiModel, r_hi: f64, count: usize) -> Result<PropertyReport> {
    check_r_hi(r_hi)?;
    let grid = log_grid(GRID_LO, r_hi, count.max(2));
    let pts = points(model, &grid)?;
    let witness = grid
        .iter()
        .zip(&pts)
        .find(|(_, pt)| {
            let [_, r1, r2, r3, r4] = pt.rho;
            // sign of (ψ'/ψ''')' is that of ψ''ψ''' - ψ'ψ''''
            let d = r2 * r3 - r1 * r4;
            !(r3 > 0.0) || d > PROPERTY_ATOL * ((r2 * r3).abs() + (r1 * r4).abs())
        })
        .map(|(r, _)| *r);
    Ok(PropertyReport {
        property: "lambda_sufficient_condition".into(),
        verdict: if witness.is_some() {
            Verdict::Fails
        } else {
            Verdict::Holds
        },
        witness_r: witness,
        grid: GridMeta {
            lo: GRID_LO,
            hi: r_hi,
            count: grid.len(),
        },
        note: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevResult {
    /// `+inf` serializes as `null`.
    pub sup_value: f64,
    pub argmax: f64,
    pub limit_at_0: f64,
    pub limit_at_inf: f64,
    /// Log-log slope of f near 0.
    pub exponent_at_0: f64,
    /// Both endpoint limits vanish.
    pub compact: bool,
    pub grid: GridMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
}

/// `ln f_{n,p}(x)`, `f = (∫_0^x ψ^{n-1})^{1/(p+1)} (∫_x^∞ ψ^{1-n})^{1/2}`;
/// `None` when the second integral diverges.
pub fn log_fnp(model: &PsiModel, p: f64, x: f64) -> Result<Option<f64>> {
    let n1 = model.n() as f64 - 1.0;
    let l = model.log_psi(x)?;
    let a = model.scaled_volume(x)?;
    Ok(model
        .scaled_dual(x)?
        .map(|b| (a.ln() + n1 * l) / (p + 1.0) + 0.5 * (b.ln() - n1 * l)))
}

/// Supremum and endpoint behaviour of the radial Sobolev quotient `f_{n,p}`.
pub fn sobolev_fnp(model: &PsiModel, p: f64) -> Result<SobolevResult> {
    if !(p > 1.0) {
        return Err(LefError::Precondition(format!("p = {p} must exceed 1")));
    }
    let (lo, hi, count) = (1e-6, 1e3, 181);
    let meta = GridMeta { lo, hi, count };
    let grid = log_grid(lo, hi, count);
    let mut lf = Vec::with_capacity(count);
    for &x in &grid {
        match log_fnp(model, p, x)? {
            Some(v) => lf.push(v),
            None => {
                return Ok(SobolevResult {
                    sup_value: f64::INFINITY,
                    argmax: x,
                    limit_at_0: f64::NAN,
                    limit_at_inf: f64::INFINITY,
                    exponent_at_0: f64::NAN,
                    compact: false,
                    grid: meta,
                    diagnosis: Some(format!("∫_x^∞ ψ^(1-n) diverges at x = {x}")),
                })
            }
        }
    }
    let lx: Vec<f64> = grid.iter().map(|x| x.ln()).collect();
    let k = count / 9; // one decade
    let (_, exponent_at_0) = linear_fit(&lx[..k], &lf[..k]);
    let (_, slope_inf) = linear_fit(&lx[count - k..], &lf[count - k..]);
    let endpoint = |slope: f64, toward_zero_if_positive: bool, value: f64| {
        if slope.abs() < 0.01 {
            value.exp()
        } else if (slope > 0.0) == toward_zero_if_positive {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let limit_at_0 = endpoint(exponent_at_0, true, lf[0]);
    let limit_at_inf = endpoint(slope_inf, false, lf[count - 1]);
    let (imax, _) = lf.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    );
    let (sup_value, argmax, diagnosis) = if limit_at_0.is_infinite() || limit_at_inf.is_infinite() {
        (
            f64::INFINITY,
            if limit_at_inf.is_infinite() { hi } else { lo },
            Some("f_{n,p} is unbounded at an endpoint".to_string()),
        )
    } else {
        // golden-section refinement in ln x around the grid maximum
        let a0 = lx[imax.saturating_sub(1)];
        let b0 = lx[(imax + 1).min(count - 1)];
        let g = |t: f64| log_fnp(model, p, t.exp()).ok().flatten().unwrap_or(f64::NEG_INFINITY);
        let (mut a, mut b) = (a0, b0);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut gc, mut gd) = (g(c), g(d));
        for _ in 0..60 {
            if gc > gd {
                b = d;
                d = c;
                gd = gc;
                c = b - phi * (b - a);
                gc = g(c);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + phi * (b - a);
                gd = g(d);
            }
        }
        let t = 0.5 * (a + b);
        let best = g(t).max(lf[imax]);
        let arg = if g(t) >= lf[imax] { t.exp() } else { grid[imax] };
        (best.exp(), arg, None)
    };
    Ok(SobolevResult {
        sup_value,
        argmax,
        limit_at_0,
        limit_at_inf,
        exponent_at_0,
        compact: limit_at_0 == 0.0 && limit_at_inf == 0.0,
        grid: meta,
        diagnosis,
    })
}

/// Predicted exponent of `f_{n,p}(x)` as `x → 0`.
pub fn fnp_exponent_at_0(n: u32, p: f64) -> f64 {
    let n = n as f64;
    (n + 2.0 - p * (n - 2.0)) / (2.0 * (p + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Yes,
    No,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyGrowth {
    pub r: Vec<f64>,
    /// `ln E(R)`, `E(R) = ∫_0^R ψ^{n-1}(u'^2 + u^2)`; `-inf` when E = 0.
    pub log_energy: Vec<f64>,
    pub in_h1: Membership,
}

/// `ln ∫_0^{r_i} ψ^{n-1} w` on the trajectory grid, for an integrand built
/// from the dense output.
fn log_weighted_integral<W>(traj: &Trajectory, model: &PsiModel, w: W) -> Result<Vec<f64>>
where
    W: Fn(f64, f64) -> f64,
{
    let n1 = model.n() as f64 - 1.0;
    let r = traj.r();
    let mut out = Vec::with_capacity(r.len());
    let mut scaled = 0.0;
    let mut l_prev = f64::NEG_INFINITY;
    out.push(f64::NEG_INFINITY);
    for i in 1..r.len() {
        let l = model.log_psi(r[i])?;
        let q = quad::integrate(
            |s: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let (u, up) = traj.eval(s);
                match model.log_psi(s) {
                    Ok(ls) => (n1 * (ls - l)).exp() * w(u, up),
                    Err(_) => f64::NAN,
                }
            },
            r[i - 1],
            r[i],
            1e-10,
            1e-300,
        )?;
        let carried = if l_prev.is_finite() {
            scaled * (n1 * (l_prev - l)).exp()
        } else {
            0.0
        };
        scaled = carried + q.value;
        out.push(scaled.ln() + n1 * l);
        l_prev = l;
    }
    Ok(out)
}

fn classify_growth(r: &[f64], log_e: &[f64]) -> Membership {
    let last = log_e[log_e.len() - 1];
    if last == f64::NEG_INFINITY {
        return Membership::Yes;
    }
    let r_end = r[r.len() - 1];
    let mid = r.partition_point(|&x| x < 0.5 * r_end).min(r.len() - 1);
    let growth = last - log_e[mid];
    if growth <= 1e-6 {
        Membership::Yes
    } else if growth >= 0.5 * std::f64::consts::LN_2 {
        Membership::No
    } else {
        Membership::Indeterminate
    }
}

/// Growth of `E(R) = ∫_0^R ψ^{n-1}(u'^2 + u^2)` along the trajectory.
pub fn h1_energy_growth(traj: &Trajectory, model: &PsiModel) -> Result<EnergyGrowth> {
    let log_energy = log_weighted_integral(traj, model, |u, up| up * up + u * u)?;
    let in_h1 = classify_growth(traj.r(), &log_energy);
    Ok(EnergyGrowth {
        r: traj.r().to_vec(),
        log_energy,
        in_h1,
    })
}

/// Same test for `∫_0^R ψ^{n-1} u^2` (membership in L²).
pub fn l2_growth(traj: &Trajectory, model: &PsiModel) -> Result<EnergyGrowth> {
    let log_energy = log_weighted_integral(traj, model, |u, _| u * u)?;
    let in_h1 = classify_growth(traj.r(), &log_energy);
    Ok(EnergyGrowth {
        r: traj.r().to_vec(),
        log_energy,
        in_h1,
    })
}
