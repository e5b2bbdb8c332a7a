//! Bottom of the spectrum of the radial Laplacian `-(ψ^{n-1}w')'/ψ^{n-1}` on
//! geodesic balls, with and without the stability potential `-p|u_α|^{p-1}`.
//!
//! Discretization: finite volumes with nodes at `r_j = (j+½)h`, `h = R/(N+½)`,
//! zero flux through `r = 0` and a Dirichlet node at `r_N = R`. Narrow
//! potential wells use the same layout in a coordinate `ξ` with
//! `r = r_c(e^{βξ} - 1)`. The weighted problem is symmetrized by the square
//! root of the mass, so every entry only involves ratios `ψ(s)/ψ(r)` of
//! neighbouring points.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LefError, Result};
use crate::model::PsiModel;
use crate::quad;
use crate::radialode::Trajectory;

/// Grid spacing never exceeds this, divided by `√(ψ'/ψ)(R)` when that exceeds 1.
const H_MAX: f64 = 0.05;
const MAX_CELLS: usize = 400_000;
/// Above this many uniform cells a narrow potential well gets a graded mesh.
const UNIFORM_LIMIT: usize = 20_000;
const MIN_CELLS: usize = 200;

/// Symmetric tridiagonal matrix `diag = d`, `off[i] = T[i][i+1]`.
#[derive(Debug, Clone)]
struct Tridiag {
    d: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiag {
    /// Number of eigenvalues of `T - σ·diag(w)` below zero (all of `T - σI` when `w` is `None`).
    fn count_below(&self, sigma: f64, w: Option<&[f64]>) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.d.len() {
            let shift = w.map_or(sigma, |w| sigma * w[i]);
            let mut qi = self.d[i] - shift;
            if i > 0 {
                qi -= self.off[i - 1] * self.off[i - 1] / q;
            }
            if qi == 0.0 {
                qi = -f64::EPSILON * (self.d[i].abs() + f64::MIN_POSITIVE);
            }
            if qi < 0.0 {
                count += 1;
            }
            q = qi;
        }
        count
    }

    /// Smallest eigenvalue by Sturm bisection.
    fn smallest(&self) -> f64 {
        let m = self.d.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..m {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < m { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.d[i] - left - right);
            hi = hi.min(self.d[i]);
        }
        let norm = self.d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        bisect(lo, hi, 2.0 * f64::EPSILON * norm, |x| self.count_below(x, None) >= 1)
    }

    /// Eigenvector for an eigenvalue `lambda` known to be the smallest, by
    /// inverse iteration with a shift just below it (the shifted matrix is
    /// positive definite, so elimination without pivoting is stable).
    fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let m = self.d.len();
        let norm = self.d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let shift = lambda - 1e-9 * (lambda.abs() + 1e-3 * norm.max(1.0));
        let mut y = vec![1.0; m];
        let mut c = vec![0.0; m];
        let mut z = vec![0.0; m];
        for _ in 0..4 {
            // Thomas algorithm on T - shift·I
            let mut piv = self.d[0] - shift;
            z[0] = y[0] / piv;
            for i in 1..m {
                c[i - 1] = self.off[i - 1] / piv;
                piv = self.d[i] - shift - self.off[i - 1] * c[i - 1];
                z[i] = (y[i] - self.off[i - 1] * z[i - 1]) / piv;
            }
            for i in (0..m - 1).rev() {
                z[i] -= c[i] * z[i + 1];
            }
            let big = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sign = if z.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for (yi, zi) in y.iter_mut().zip(&z) {
                *yi = sign * zi / big;
            }
        }
        y
    }

    fn rayleigh(&self, y: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..y.len() {
            num += self.d[i] * y[i] * y[i];
            if i + 1 < y.len() {
                num += 2.0 * self.off[i] * y[i] * y[i + 1];
            }
            den += y[i] * y[i];
        }
        num / den
    }
}

/// Bisection for the boundary of a monotone predicate on `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, abs_tol: f64, below: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= abs_tol.max(4.0 * f64::EPSILON * mid.abs()) || mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Coarse cell count and, for a graded mesh, the core radius `r_c` of the map
/// `r = r_c(e^{βξ} - 1)`, `β = ln(1 + R/r_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshPlan {
    pub count: usize,
    pub core: Option<f64>,
}

/// `-(ψ^{n-1}w')'/ψ^{n-1} + q(r)w` on the ball `B_R`, zero flux at the pole and
/// Dirichlet at `R`.
#[derive(Debug, Clone)]
pub struct RadialOperator<'a> {
    model: &'a PsiModel,
    stability: Option<&'a Trajectory>,
    radius: f64,
    grid_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    /// Richardson-extrapolated eigenvalue.
    pub value: f64,
    pub error_estimate: f64,
    /// Cells on the finest grid.
    pub grid_count: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(skip)]
    pub finest: f64,
    #[serde(skip)]
    pub coarse: f64,
    /// `|yᵀTy/yᵀy - λ|/|λ|` for the computed eigenvector on the finest grid.
    #[serde(skip)]
    pub rayleigh_residual: f64,
    /// `(r_j, y_j)`, `y = (ψ^{n-1}·cell width)^{1/2} w` up to a constant, max-normalized.
    #[serde(skip)]
    pub eigenvector: Vec<(f64, f64)>,
}

impl<'a> RadialOperator<'a> {
    /// The Dirichlet Laplacian on `B_R`.
    pub fn laplacian(model: &'a PsiModel, radius: f64, grid_count: usize) -> Result<Self> {
        Self::checked(model, None, radius, grid_count)
    }

    /// The linearized operator at `u_α`, potential `-p|u_α|^{p-1}`.
    pub fn stability(model: &'a PsiModel, traj: &'a Trajectory, radius: f64, grid_count: usize) -> Result<Self> {
        if &traj.spec != model.spec() {
            return Err(LefError::Precondition(
                "trajectory was computed on a different model".into(),
            ));
        }
        if traj.r_max < radius {
            return Err(LefError::Precondition(format!(
                "trajectory covers [0, {}] but the ball has radius {radius}",
                traj.r_max
            )));
        }
        Self::checked(model, Some(traj), radius, grid_count)
    }

    fn checked(model: &'a PsiModel, stability: Option<&'a Trajectory>, radius: f64, grid_count: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LefError::Precondition(format!("ball radius {radius} must be positive")));
        }
        if grid_count < MIN_CELLS {
            return Err(LefError::Precondition(format!(
                "grid_count {grid_count} below the minimum {MIN_CELLS}"
            )));
        }
        Ok(Self {
            model,
            stability,
            radius,
            grid_count,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Coarse mesh actually used: the requested count, raised until the
    /// spacing resolves both the geometry and the potential well. A well much
    /// narrower than the far-field spacing switches to the graded map.
    pub fn resolved_mesh(&self) -> Result<MeshPlan> {
        let g = self.model.dlog(self.radius)?.abs();
        let h_far = H_MAX / g.sqrt().max(1.0);
        let mut h_core = h_far;
        if let Some(t) = self.stability {
            let peak = t.p * t.alpha.abs().powf(t.p - 1.0);
            h_core = h_core.min(H_MAX / peak.sqrt().max(1.0));
        }
        let uniform = (self.radius / h_core - 0.5).ceil() as usize;
        let plan = if h_core < 0.25 * h_far && uniform > UNIFORM_LIMIT {
            // h(r) ≈ kβ(r + r_c): h_core at the pole and h_far at R
            let core = self.radius * h_core / (h_far - h_core);
            let beta = (self.radius / core).ln_1p();
            let need = (beta * (self.radius + core) / h_far).ceil() as usize;
            MeshPlan {
                count: self.grid_count.max(need),
                core: Some(core),
            }
        } else {
            MeshPlan {
                count: self.grid_count.max(uniform),
                core: None,
            }
        };
        if 2 * plan.count > MAX_CELLS {
            return Err(LefError::GridTooCoarse(format!(
                "resolving B_{} needs {} cells, above the limit {MAX_CELLS}",
                self.radius,
                2 * plan.count
            )));
        }
        Ok(plan)
    }

    /// Nodes `c_0..c_{N-1}`, ghost node `c_N = R`, faces `f_0 = 0..f_N`, all
    /// images of the uniform layout `ξ_j = (j+½)k`, `k = 1/(N+½)`.
    fn mesh(&self, count: usize, core: Option<f64>) -> (Vec<f64>, Vec<f64>) {
        let k = 1.0 / (count as f64 + 0.5);
        let big_r = self.radius;
        let map = |xi: f64| match core {
            None => xi * big_r,
            Some(c) => c * ((big_r / c).ln_1p() * xi).exp_m1(),
        };
        let mut nodes: Vec<f64> = (0..count).map(|j| map((j as f64 + 0.5) * k)).collect();
        nodes.push(big_r);
        let faces = (0..=count).map(|j| map(j as f64 * k)).collect();
        (nodes, faces)
    }

    /// Potential-free symmetrized matrix, `|q|` at the nodes, and the nodes.
    fn assemble(&self, count: usize, core: Option<f64>) -> Result<(Tridiag, Vec<f64>, Vec<f64>)> {
        let m = (self.model.n() - 1) as f64;
        let (mut c, f) = self.mesh(count, core);
        let mut d = vec![0.0; count];
        let mut off = vec![0.0; count - 1];
        for j in 0..count {
            let w = f[j + 1] - f[j];
            let gap = c[j + 1] - c[j];
            let right = self.model.log_psi_ratio(f[j + 1], c[j])?;
            d[j] += (m * right).exp() / (gap * w);
            if j + 1 < count {
                let w1 = f[j + 2] - f[j + 1];
                let left_of_next = self.model.log_psi_ratio(f[j + 1], c[j + 1])?;
                d[j + 1] += (m * left_of_next).exp() / (gap * w1);
                off[j] = -(0.5 * m * (right + left_of_next)).exp() / (gap * (w * w1).sqrt());
            }
        }
        c.truncate(count);
        let pot = match self.stability {
            None => vec![0.0; count],
            Some(t) => c.iter().map(|&s| t.p * t.eval(s).0.abs().powf(t.p - 1.0)).collect(),
        };
        if d.iter().chain(&off).chain(&pot).any(|v| !v.is_finite()) {
            return Err(LefError::NonFinite { r: self.radius });
        }
        Ok((Tridiag { d, off }, pot, c))
    }

    fn operator(&self, count: usize, core: Option<f64>) -> Result<(Tridiag, Vec<f64>)> {
        let (mut t, pot, r) = self.assemble(count, core)?;
        for (d, q) in t.d.iter_mut().zip(&pot) {
            *d -= q;
        }
        Ok((t, r))
    }

    /// Smallest eigenvalue on one uniform grid of `count` cells.
    pub fn smallest_on_grid(&self, count: usize) -> Result<f64> {
        Ok(self.operator(count, None)?.0.smallest())
    }

    /// Smallest eigenvalue with Richardson extrapolation over `N` and `2N` cells.
    pub fn smallest(&self) -> Result<EigenResult> {
        let plan = self.resolved_mesh()?;
        let coarse_n = plan.count;
        let fine_n = 2 * coarse_n;
        let coarse = self.operator(coarse_n, plan.core)?.0.smallest();
        let (t, r) = self.operator(fine_n, plan.core)?;
        let finest = t.smallest();
        let ratio = (fine_n as f64 + 0.5) / (coarse_n as f64 + 0.5);
        let value = finest + (finest - coarse) / (ratio * ratio - 1.0);
        let scale = finest.abs() + (std::f64::consts::PI / self.radius).powi(2);
        if (coarse - finest).abs() > 0.1 * scale {
            return Err(LefError::GridTooCoarse(format!(
                "eigenvalue moved from {coarse} to {finest} between {coarse_n} and {fine_n} cells; \
                 raise grid_count"
            )));
        }
        let y = t.eigenvector(finest);
        let rq = t.rayleigh(&y);
        let rayleigh_residual = (rq - finest).abs() / finest.abs().max(f64::MIN_POSITIVE);
        Ok(EigenResult {
            value,
            error_estimate: (value - finest).abs(),
            grid_count: fine_n,
            radius: self.radius,
            finest,
            coarse,
            rayleigh_residual,
            eigenvector: r.into_iter().zip(y).collect(),
        })
    }
}

/// Dirichlet `λ₁(B_R)`.
pub fn lambda1_ball(model: &PsiModel, radius: f64, grid_count: usize) -> Result<EigenResult> {
    RadialOperator::laplacian(model, radius, grid_count)?.smallest()
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldEigen {
    /// `λ₁(M)` from the last pair of balls, extrapolated in `1/R²`.
    pub value: f64,
    pub converged: bool,
    /// `(R, λ₁(B_R))`, decreasing in `R`.
    pub evidence: Vec<(f64, f64)>,
}

/// Radii used by [`lambda1_manifold`]: `200·2^{-k}`, `k = 5, …, 0`.
pub const MANIFOLD_RADII: [f64; 6] = [6.25, 12.5, 25.0, 50.0, 100.0, 200.0];

/// `λ₁(M) = lim λ₁(B_R)`. Successive balls are combined as
/// `(4λ(2R) - λ(R))/3`; convergence means two such values agree to 1e-4
/// relative (or absolutely to `1e-4·π²/R²` when the limit is zero).
pub fn lambda1_manifold(model: &PsiModel) -> Result<ManifoldEigen> {
    let balls: Vec<Result<EigenResult>> = MANIFOLD_RADII
        .par_iter()
        .map(|&r| lambda1_ball(model, r, MIN_CELLS))
        .collect();
    let mut evidence = Vec::with_capacity(balls.len());
    for b in balls {
        let b = b?;
        evidence.push((b.radius, b.value));
    }
    let extrapolated: Vec<f64> = evidence.windows(2).map(|w| (4.0 * w[1].1 - w[0].1) / 3.0).collect();
    let k = extrapolated.len();
    let value = extrapolated[k - 1];
    let last_r = evidence[evidence.len() - 1].0;
    let floor = 1e-4 * (std::f64::consts::PI / last_r).powi(2);
    let converged = (value - extrapolated[k - 2]).abs() <= (1e-4 * value.abs()).max(floor);
    Ok(ManifoldEigen {
        value: value.max(0.0),
        converged,
        evidence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrigoryanBound {
    pub bound: f64,
    #[serde(rename = "F_of_R")]
    pub f_of_r: f64,
    pub argmax_r: f64,
}

/// `λ₁(B_R) ≥ 1/(4F(R))`, `F(R) = sup_{0<r<R} (∫_0^r ψ^{n-1})(∫_r^R ψ^{1-n})`.
pub fn grigoryan_bound(model: &PsiModel, radius: f64) -> Result<GrigoryanBound> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(LefError::Precondition(format!("ball radius {radius} must be positive")));
    }
    let m = (model.n() - 1) as f64;
    // both factors scaled by ψ(r)^{±(n-1)} so that the product never overflows
    let dual = |r: f64| -> Result<f64> {
        quad::integrate(
            |s: f64| model.log_psi_ratio(s, r).map_or(f64::NAN, |l| (-m * l).exp()),
            r,
            radius,
            1e-11,
            0.0,
        )
        .map(|q| q.value)
    };
    let h_of = |r: f64| -> Result<f64> { Ok(model.scaled_volume(r)? * dual(r)?) };

    const K: usize = 400;
    let grid: Vec<f64> = (1..=K).map(|i| radius * i as f64 / (K + 1) as f64).collect();
    let a = model.scaled_volume_on_grid(&grid)?;
    let mut best = (0.0, 0usize);
    for (i, (&r, &ai)) in grid.iter().zip(&a).enumerate() {
        let v = ai * dual(r)?;
        if v > best.0 {
            best = (v, i);
        }
    }
    let step = radius / (K + 1) as f64;
    let (mut lo, mut hi) = (grid[best.1] - step, grid[best.1] + step);
    lo = lo.max(0.25 * step);
    hi = hi.min(radius - 0.25 * step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (h_of(x1)?, h_of(x2)?);
    for _ in 0..60 {
        if hi - lo <= 1e-10 * radius {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = h_of(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = h_of(x1)?;
        }
    }
    let (f_of_r, argmax_r) = [(best.0, grid[best.1]), (f1, x1), (f2, x2)]
        .into_iter()
        .fold((0.0, 0.0), |acc, c| if c.0 > acc.0 { c } else { acc });
    Ok(GrigoryanBound {
        bound: 1.0 / (4.0 * f_of_r),
        f_of_r,
        argmax_r,
    })
}

/// `μ₁(R)`, the bottom of `-Δ - p|u_α|^{p-1}` on `B_R`.
pub fn mu1_stability(model: &PsiModel, traj: &Trajectory, radius: f64, grid_count: usize) -> Result<EigenResult> {
    RadialOperator::stability(model, traj, radius, grid_count)?.smallest()
}

#[derive(Debug, Clone, Serialize)]
pub struct BigLambda {
    pub value: f64,
    pub converged: bool,
    /// `(R, Λ₁(B_R))`, non-increasing in `R`.
    pub evidence: Vec<(f64, f64)>,
}

/// `Λ₁(M, α) = inf ∫|∇v|² / ∫p|u_α|^{p-1}v²` over increasing balls.
///
/// Each ball solves the pencil `T y = Λ D y` with `D = diag(p|u_α|^{p-1})`
/// by bisection on the inertia of `T - ΛD`, extrapolated over two grids.
pub fn big_lambda1(model: &PsiModel, traj: &Trajectory, radii: &[f64]) -> Result<BigLambda> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LefError::Precondition(
            "radii must be a nonempty increasing sequence".into(),
        ));
    }
    if traj.alpha == 0.0 || !traj.u().iter().any(|&u| u != 0.0) {
        return Err(LefError::Undefined("the weight p|u|^{p-1} vanishes identically".into()));
    }
    let limits = crate::radialode::tail_limits(traj, model)?;
    if limits.u_limit != Some(0.0) {
        return Err(LefError::Precondition(format!(
            "u_alpha must vanish at infinity (tail limit {:?})",
            limits.u_limit
        )));
    }
    let solve = |radius: f64| -> Result<f64> {
        let op = RadialOperator::stability(model, traj, radius, MIN_CELLS)?;
        let plan = op.resolved_mesh()?;
        let coarse_n = plan.count;
        let one = |count: usize| -> Result<f64> {
            let (t, pot, _) = op.assemble(count, plan.core)?;
            if !pot.iter().any(|&w| w > 0.0) {
                return Err(LefError::Undefined(format!("the weight vanishes on B_{radius}")));
            }
            // Λ ≤ Rayleigh quotient of the all-ones vector
            let ones = vec![1.0; count];
            let hi = t.rayleigh(&ones) * count as f64 / pot.iter().sum::<f64>();
            Ok(bisect(0.0, hi, 1e-13 * hi, |s| t.count_below(s, Some(&pot)) >= 1))
        };
        let coarse = one(coarse_n)?;
        let fine = one(2 * coarse_n)?;
        let ratio = (2.0 * coarse_n as f64 + 0.5) / (coarse_n as f64 + 0.5);
        Ok(fine + (fine - coarse) / (ratio * ratio - 1.0))
    };
    let values: Vec<Result<f64>> = radii.par_iter().map(|&r| solve(r)).collect();
    let mut evidence = Vec::with_capacity(radii.len());
    for (r, v) in radii.iter().zip(values) {
        evidence.push((*r, v?));
    }
    let value = evidence[evidence.len() - 1].1;
    let converged = evidence.len() >= 2 && {
        let prev = evidence[evidence.len() - 2].1;
        (prev - value).abs() <= 1e-3 * value.abs()
    };
    Ok(BigLambda {
        value,
        converged,
        evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};
    use std::f64::consts::PI;

    #[test]
    fn sturm_count_on_diagonal() {
        let t = Tridiag {
            d: vec![1.0, 2.0, 3.0],
            off: vec![0.0, 0.0],
        };
        assert_eq!(t.count_below(2.5, None), 2);
        assert!((t.smallest() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn small_matrix_eigenvalue() {
        // [[2,-1],[-1,2]] has eigenvalues 1 and 3
        let t = Tridiag {
            d: vec![2.0, 2.0],
            off: vec![-1.0],
        };
        assert!((t.smallest() - 1.0).abs() < 1e-14);
        let y = t.eigenvector(1.0);
        assert!((y[0] - y[1]).abs() < 1e-12);
    }

    #[test]
    fn euclidean_unit_ball() {
        let m = build_model(&ModelSpec::euclidean(3)).unwrap();
        let e = lambda1_ball(&m, 1.0, 200).unwrap();
        assert!((e.value - PI * PI).abs() < 1e-5 * PI * PI, "{}", e.value);
        assert!(e.rayleigh_residual < 1e-8);
        assert!((e.value - e.finest).abs() <= 10.0 * e.error_estimate);
    }

    #[test]
    fn rejects_bad_input() {
        let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        assert!(lambda1_ball(&m, 0.0, 400).is_err());
        assert!(lambda1_ball(&m, 1.0, 100).is_err());
    }

    #[test]
    fn json_shape() {
        let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let v = serde_json::to_value(lambda1_ball(&m, 2.0, 200).unwrap()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 4);
        assert!(v["R"].as_f64() == Some(2.0) && v["grid_count"].is_u64());
    }
}
