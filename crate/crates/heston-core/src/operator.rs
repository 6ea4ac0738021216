//! Pointwise evaluation of the Heston operator in strong and divergence form.
//!
//! Strong form:
//!
//! ```text
//! Au = -(y/2)(u_xx + 2 rho sigma u_xy + sigma^2 u_yy)
//!      - (r - q - y/2) u_x - kappa (theta - y) u_y + r u.
//! ```
//!
//! Divergence form (the one integration by parts against the weight uses):
//!
//! ```text
//! Au = -(1/2) y^(1-beta) [ (y^beta u_x + rho sigma y^beta u_y)_x
//!                        + (rho sigma y^beta u_x + sigma^2 y^beta u_y)_y ]
//!      - b1 u_x + (y/2) u_x + kappa y u_y + r u.
//! ```
//!
//! The two agree identically for smooth `u`; evaluating both is a cheap
//! transcription check on the coefficient bookkeeping.

use crate::field::Field2;
use crate::params::HestonParams;
use crate::scalar::{sign, Real};

/// Strong form `Au` at a point. Requires `y > 0` in the second-order terms
/// only through the factor `y`; evaluation at `y = 0` gives the degenerate
/// first-order limit, which is what the natural boundary row uses.
pub fn apply_a<F: Field2 + ?Sized>(u: &F, x: f64, y: f64, p: &HestonParams) -> f64 {
    let v = u.value(x, y);
    let (ux, uy) = u.gradient(x, y);
    let (uxx, uxy, uyy) = u.hessian(x, y);
    -(y / 2.0) * (uxx + 2.0 * p.rho * p.sigma * uxy + p.sigma * p.sigma * uyy)
        - (p.r - p.q - y / 2.0) * ux
        - p.kappa * (p.theta - y) * uy
        + p.r * v
}

/// Divergence form of `Au` at a point, evaluated term by term with the
/// `y^beta` factors written out (so the agreement with [`apply_a`] is a
/// nontrivial floating-point identity). Requires `y > 0`.
pub fn apply_a_divergence<F: Field2 + ?Sized>(u: &F, x: f64, y: f64, p: &HestonParams) -> f64 {
    let beta = p.beta();
    let b1 = p.b1();
    let rs = p.rho * p.sigma;
    let s2 = p.sigma * p.sigma;
    let v = u.value(x, y);
    let (ux, uy) = u.gradient(x, y);
    let (uxx, uxy, uyy) = u.hessian(x, y);
    let ybeta = y.powf(beta);
    let ybeta_m1 = y.powf(beta - 1.0);
    // (y^b u_x + rs y^b u_y)_x
    let flux_x = ybeta * (uxx + rs * uxy);
    // (rs y^b u_x + s2 y^b u_y)_y
    let flux_y = beta * ybeta_m1 * (rs * ux + s2 * uy) + ybeta * (rs * uxy + s2 * uyy);
    -(0.5) * y.powf(1.0 - beta) * (flux_x + flux_y) - b1 * ux + (y / 2.0) * ux
        + p.kappa * y * uy
        + p.r * v
}

/// Both operator forms at one point.
#[derive(Debug, Clone, Copy)]
pub struct StrongOperatorSample {
    pub strong: f64,
    pub divergence: f64,
}

pub fn sample_operator<F: Field2 + ?Sized>(
    u: &F,
    x: f64,
    y: f64,
    p: &HestonParams,
) -> StrongOperatorSample {
    StrongOperatorSample {
        strong: apply_a(u, x, y, p),
        divergence: apply_a_divergence(u, x, y, p),
    }
}

/// First-order commutator `[A, phi]u` at a point:
///
/// ```text
/// [A,phi]u = -y ((phi_x + rs phi_y) u_x + (rs phi_x + s^2 phi_y) u_y)
///            - (y/2)(phi_xx + 2 rs phi_xy + s^2 phi_yy) u
///            - (r - q - y/2) phi_x u - kappa (theta - y) phi_y u.
/// ```
pub fn apply_commutator<F: Field2 + ?Sized, G: Field2 + ?Sized>(
    u: &F,
    phi: &G,
    x: f64,
    y: f64,
    p: &HestonParams,
) -> f64 {
    let rs = p.rho * p.sigma;
    let s2 = p.sigma * p.sigma;
    let uv = u.value(x, y);
    let (ux, uy) = u.gradient(x, y);
    let (px, py) = phi.gradient(x, y);
    let (pxx, pxy, pyy) = phi.hessian(x, y);
    -y * ((px + rs * py) * ux + (rs * px + s2 * py) * uy)
        - (y / 2.0) * (pxx + 2.0 * rs * pxy + s2 * pyy) * uv
        - (p.r - p.q - y / 2.0) * px * uv
        - p.kappa * (p.theta - y) * py * uv
}

/// Convection field `c = (c_x, c_y)` of the first-order terms of the weak
/// form, `a(u,v) ∋ ∫ (c · Du) v w`; used by the upwind stabilization.
pub fn convection(x: f64, y: f64, p: &HestonParams, gamma: f64) -> (f64, f64) {
    let a1 = p.kappa * p.rho / p.sigma - 0.5;
    let b1 = p.b1();
    let cx = -(a1 * y + b1) - 0.5 * gamma * sign(x) * y;
    let cy = -0.5 * gamma * p.rho * p.sigma * sign(x) * y;
    (cx, cy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AffineY, Constant, ExpFamily, Field2};
    use crate::rng::SplitMix64;

    fn p() -> HestonParams {
        HestonParams::new(1.0, 0.3, 1.2, 0.8, 0.9, 0.1).validate().unwrap()
    }

    #[test]
    fn constants_map_to_r_times_c() {
        let c = Constant(3.5);
        let got = apply_a(&c, 0.2, 1.7, &p());
        assert!((got - p().r * 3.5).abs() < 1e-14);
        let got = apply_a_divergence(&c, 0.2, 1.7, &p());
        assert!((got - p().r * 3.5).abs() < 1e-14);
    }

    #[test]
    fn affine_in_y_closed_form() {
        // A(d0 + d2 y) = (r d0 - d2 kappa theta) + (kappa + r) d2 y
        let pp = p();
        let u = AffineY { d0: 2.0, d2: -0.7 };
        for y in [0.1, 1.0, 3.0] {
            let expect = (pp.r * 2.0 - (-0.7) * pp.kappa * pp.theta) + (pp.kappa + pp.r) * (-0.7) * y;
            assert!((apply_a(&u, -1.0, y, &pp) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn exponential_in_x_closed_form() {
        // A(e^{Lx}) = (r - L(r-q)) e^{Lx} + (y/2) L (1-L) e^{Lx}
        let pp = p();
        let l = 0.4;
        let u = ExpFamily { d0: 0.0, d2: 0.0, d3: 1.0, l, d4: 0.0, k: 0.0 };
        for (x, y) in [(0.0, 0.5), (1.2, 2.0), (-0.8, 0.01)] {
            let e = libm::exp(l * x);
            let expect = (pp.r - l * (pp.r - pp.q)) * e + (y / 2.0) * l * (1.0 - l) * e;
            assert!((apply_a(&u, x, y, &pp) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_equals_divergence_on_smooth_fields() {
        struct SinExp;
        impl Field2 for SinExp {
            fn value(&self, x: f64, y: f64) -> f64 {
                libm::sin(x) * libm::exp(-y)
            }
            fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
                (libm::cos(x) * libm::exp(-y), -libm::sin(x) * libm::exp(-y))
            }
            fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
                (
                    -libm::sin(x) * libm::exp(-y),
                    -libm::cos(x) * libm::exp(-y),
                    libm::sin(x) * libm::exp(-y),
                )
            }
        }
        let mut rng = SplitMix64::new(11);
        for params in [p(), HestonParams::new(2.0, -0.6, 0.7, 1.5, 0.3, 0.0).validate().unwrap()] {
            for _ in 0..500 {
                let x = rng.uniform(-3.0, 3.0);
                let y = rng.uniform(1e-3, 10.0);
                let s = sample_operator(&SinExp, x, y, &params);
                let scale = s.strong.abs() + s.divergence.abs() + 1e-30;
                assert!(
                    (s.strong - s.divergence).abs() / scale < 1e-10,
                    "forms disagree at ({x}, {y}): {} vs {}",
                    s.strong,
                    s.divergence
                );
            }
        }
    }
}
