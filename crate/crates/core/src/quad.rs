//! Adaptive Gauss–Kronrod (7, 15) quadrature and the block-wise helpers used
//! for integrals of rapidly growing or decaying weights.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{LefError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

/// One 15-point Kronrod rule with the embedded 7-point Gauss error estimate.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> QuadResult {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    QuadResult {
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    }
}

struct Piece {
    a: f64,
    b: f64,
    q: QuadResult,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.q.error.total_cmp(&other.q.error)
    }
}

/// Globally adaptive integration until `error <= max(abs_tol, rel_tol*|value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    let first = gk15(&f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, q: first });
    let mut splits = 0;
    while !(error <= abs_tol.max(rel_tol * value.abs())) {
        if splits >= 4000 || !value.is_finite() || !error.is_finite() {
            return Err(LefError::Quadrature { estimate: value, error });
        }
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // interval exhausted at machine resolution
            heap.push(worst);
            break;
        }
        let left = gk15(&f, worst.a, m);
        let right = gk15(&f, m, worst.b);
        value += left.value + right.value - worst.q.value;
        error += left.error + right.error - worst.q.error;
        heap.push(Piece {
            a: worst.a,
            b: m,
            q: left,
        });
        heap.push(Piece {
            a: m,
            b: worst.b,
            q: right,
        });
        splits += 1;
    }
    // re-sum to shed accumulated cancellation in the running totals
    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.q.value, e + p.q.error));
    Ok(QuadResult { value, error })
}

/// `∫_a^∞ f` for a nonnegative integrand whose mass sits near `a` and decays
/// afterwards. Integrates blocks of doubling width starting at `w0`, and
/// beyond `switch` maps the remainder with `t = 1/s`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    w0: f64,
    switch: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    let mut total = 0.0;
    let mut err = 0.0;
    let mut lo = a;
    let mut w = w0.max(1e-12);
    let mut quiet = 0;
    while lo < switch {
        let hi = (lo + w).min(switch);
        let q = integrate(&f, lo, hi, rel_tol, 0.0)?;
        total += q.value;
        err += q.error;
        if q.value.abs() <= 1e-17 * total.abs() {
            quiet += 1;
            if quiet >= 2 {
                return Ok(QuadResult {
                    value: total,
                    error: err,
                });
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        w *= 2.0;
    }
    let start = lo.max(a);
    let tail = integrate(
        |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let v = f(1.0 / t) / (t * t);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0 / start,
        rel_tol,
        rel_tol * total.abs(),
    )?;
    Ok(QuadResult {
        value: total + tail.value,
        error: err + tail.error,
    })
}

/// `∫_0^b f` for a nonnegative integrand concentrated near `b`, by blocks of
/// doubling width `w0, 2w0, ...` walking down towards zero.
pub fn integrate_backward<F: Fn(f64) -> f64>(f: F, b: f64, w0: f64, rel_tol: f64) -> Result<QuadResult> {
    let mut total = 0.0;
    let mut err = 0.0;
    let mut hi = b;
    let mut w = w0.clamp(1e-300, b.max(1e-300));
    while hi > 0.0 {
        let lo = (hi - w).max(0.0);
        let q = integrate(&f, lo, hi, rel_tol, 0.0)?;
        total += q.value;
        err += q.error;
        if q.value.abs() <= 1e-17 * total.abs() && lo > 0.0 {
            // remaining mass on [0, lo] is bounded by the last block since the
            // integrand decreases towards the origin
            break;
        }
        hi = lo;
        w *= 2.0;
    }
    Ok(QuadResult {
        value: total,
        error: err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = gk15(&|x: f64| x.powi(10), 0.0, 1.0);
        assert!((q.value - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_peak() {
        let q = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 0.0).unwrap();
        let exact = 2.0 * (1.0 / 1e-4f64.sqrt()) * (1.0 / 1e-4f64.sqrt()).atan();
        assert!((q.value - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn infinite_tail_power_and_exponential() {
        // ∫_1^∞ s^-2 = 1 ; ∫_2^∞ e^{-3s} = e^{-6}/3
        let q = integrate_to_infinity(|s: f64| s.powi(-2), 1.0, 1.0, 50.0, 1e-12).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
        let q = integrate_to_infinity(|s: f64| (-3.0 * s).exp(), 2.0, 0.3, 50.0, 1e-12).unwrap();
        assert!((q.value - (-6f64).exp() / 3.0).abs() < 1e-12 * (-6f64).exp());
    }

    #[test]
    fn backward_blocks() {
        // ∫_0^30 e^{4(s-30)} ds = (1 - e^{-120})/4
        let q = integrate_backward(|s: f64| (4.0 * (s - 30.0)).exp(), 30.0, 0.25, 1e-12).unwrap();
        assert!((q.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-10, 0.0);
        assert!(matches!(r, Err(LefError::Quadrature { .. })));
    }
}
