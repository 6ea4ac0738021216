//! One-dimensional analytic checks: the Hardy inequality, logarithmic
//! cutoff functions with decaying weighted energy, and log-log slope fits
//! for the rate studies.

use crate::field::Field1;
use crate::grid::GL12;
use crate::scalar::Real;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("Hardy inequality undefined at beta = p - 1 (beta = {beta}, p = {p})")]
    HardyDegenerate { beta: f64, p: f64 },
    #[error("cutoff requires N > 4, got {0}")]
    CutoffRange(f64),
}

/// Geometric-panel quadrature of `f` on `(0, hi]`, resolving algebraic
/// endpoint behavior by dyadic refinement toward zero.
pub fn integrate_to_zero<F: Fn(f64) -> f64>(hi: f64, f: F) -> f64 {
    let mut acc = 0.0;
    let mut top = hi;
    for _ in 0..64 {
        let lo = 0.5 * top;
        for (t, w) in GL12.iter() {
            let y = 0.5 * (lo + top) + 0.5 * (top - lo) * t;
            acc += w * 0.5 * (top - lo) * f(y);
        }
        top = lo;
    }
    acc
}

#[derive(Debug, Clone, Copy)]
pub struct HardyCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub holds: bool,
}

/// Checks `int_0^inf |v|^p y^(beta-p) <= (p/(beta-p+1))^p int_0^inf |v'|^p y^beta`
/// by quadrature on `(0, y_hi]` (the battery functions decay fast enough for
/// the truncation to be immaterial).
pub fn hardy_check<V: Field1 + ?Sized>(
    v: &V,
    beta: f64,
    p: f64,
    y_hi: f64,
) -> Result<HardyCheck, AnalysisError> {
    if (beta - (p - 1.0)).abs() < 1e-12 {
        return Err(AnalysisError::HardyDegenerate { beta, p });
    }
    let lhs = integrate_to_zero(y_hi, |y| v.value(y).abs().powf(p) * y.powf(beta - p));
    let raw = integrate_to_zero(y_hi, |y| v.deriv(y).abs().powf(p) * y.powf(beta));
    let constant = (p / (beta - p + 1.0)).abs().powf(p);
    let rhs = constant * raw;
    Ok(HardyCheck { lhs, rhs, constant, holds: lhs <= rhs * (1.0 + 1e-6) + 1e-300 })
}

/// Smooth logarithmic cutoff: `psi(y) = chi(log|y| - log eps)` where `chi`
/// ramps from 0 at `-log N` to 1 at `-log 2`. Then `psi = 0` for
/// `|y| <= eps/N`, `psi = 1` for `|y| >= eps/2`, and `|psi'| <= c/(y log N)`.
///
/// The ramp derivative is a plateau with C-infinity shoulders of relative
/// width `w`, so the measured derivative constant is uniform over the
/// transition (the decay bound is then saturated up to O(w) corrections).
#[derive(Debug, Clone, Copy)]
pub struct LogCutoff {
    pub n: f64,
    pub eps: f64,
    log_n: f64,
    denom: f64,
}

const SHOULDER: f64 = 0.005;

/// C-infinity step 0 -> 1 on [0, 1] with `step(s) + step(1-s) = 1`.
fn smooth_step(t: f64) -> f64 {
    fn s(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }
    let a = s(t);
    let b = s(1.0 - t);
    a / (a + b)
}

/// `int_0^x step(s) ds` for `x` in [0, 1].
fn smooth_step_integral(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let x = x.min(1.0);
    let mut acc = 0.0;
    for (t, w) in GL12.iter() {
        let s = 0.5 * x + 0.5 * x * t;
        acc += w * 0.5 * x * smooth_step(s);
    }
    acc
}

/// Ramp derivative: 1 on `[w, 1-w]`, C-infinity down to 0 outside `(0, 1)`.
fn ramp_deriv(t: f64) -> f64 {
    smooth_step(t / SHOULDER) * smooth_step((1.0 - t) / SHOULDER)
}

/// The ramp itself, normalized to reach exactly 1 at `t = 1`
/// (`int_0^1 ramp_deriv = 1 - w` by the symmetry of the step).
fn ramp(t: f64) -> f64 {
    let w = SHOULDER;
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let integral = if t <= w {
        w * smooth_step_integral(t / w)
    } else if t <= 1.0 - w {
        0.5 * w + (t - w)
    } else {
        0.5 * w + (1.0 - 2.0 * w) + w * (0.5 - smooth_step_integral((1.0 - t) / w))
    };
    integral / (1.0 - w)
}

impl LogCutoff {
    pub fn new(n: f64, eps: f64) -> Result<Self, AnalysisError> {
        if !(n > 4.0) {
            return Err(AnalysisError::CutoffRange(n));
        }
        let log_n = n.ln();
        Ok(Self { n, eps, log_n, denom: log_n - core::f64::consts::LN_2 })
    }
}

impl Field1 for LogCutoff {
    fn value(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let t = (y.abs().ln() - self.eps.ln() + self.log_n) / self.denom;
        ramp(t)
    }

    fn deriv(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let t = (y.abs().ln() - self.eps.ln() + self.log_n) / self.denom;
        ramp_deriv(t) / ((1.0 - SHOULDER) * self.denom * y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CutoffEnergy {
    /// `int_0^inf |psi'|^2 y^beta dy`.
    pub energy: f64,
    /// Measured slope constant `c = sup |psi'(y)| y log N`.
    pub c_measured: f64,
    /// The decay bound with the measured constant.
    pub bound: f64,
    pub holds: bool,
}

/// Measures the weighted derivative energy of the cutoff against the decay
/// bound `c^2 2^(2-beta) (beta-1)^{-1} (log N)^{-2} eps^(beta-1)` for
/// `beta > 1` and `2 c^2 / log N` for `beta = 1`.
pub fn cutoff_energy(cut: &LogCutoff, beta: f64) -> CutoffEnergy {
    let lo = cut.eps / cut.n;
    let hi = cut.eps;
    // the derivative is supported in [eps/N, eps/2]
    let mut energy = 0.0;
    let mut c_measured: f64 = 0.0;
    let panels = 600;
    let ratio = (hi / lo).powf(1.0 / panels as f64);
    let mut a = lo;
    for _ in 0..panels {
        let b = a * ratio;
        for (t, w) in GL12.iter() {
            let y = 0.5 * (a + b) + 0.5 * (b - a) * t;
            let d = cut.deriv(y);
            energy += w * 0.5 * (b - a) * d * d * y.powf(beta);
            c_measured = c_measured.max(d.abs() * y * cut.log_n);
        }
        a = b;
    }
    let bound = if (beta - 1.0).abs() < 1e-12 {
        2.0 * c_measured * c_measured / cut.log_n
    } else {
        c_measured * c_measured * (2.0f64).powf(2.0 - beta) / (beta - 1.0)
            * cut.eps.powf(beta - 1.0)
            / (cut.log_n * cut.log_n)
    };
    CutoffEnergy { energy, c_measured, bound, holds: energy <= bound * (1.0 + 1e-9) }
}

/// Least-squares slope of `ln y` against `ln x`, skipping nonpositive pairs.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(x, y) in points {
        if x > 0.0 && y > 0.0 {
            xs.push(x.ln());
            ys.push(y.ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Observed convergence orders `log2(e_k / e_{k+1})` for errors at uniformly
/// halved mesh sizes.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| (w[0] / w[1]).ln() / core::f64::consts::LN_2)
        .collect()
}
