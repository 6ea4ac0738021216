//! Refinement studies for the integration-by-parts and energy/commutator
//! identity defects: both must vanish with order >= 1.5 as the grid is
//! refined uniformly.

use heston_core::analysis::observed_orders;
use heston_core::assembly::{assemble, check_integration_by_parts, commutator_identity_check};
use heston_core::field::Field2;
use heston_core::grid::{build_grid, Domain};
use heston_core::params::{derive_constants, HestonParams};
use std::sync::Arc;

/// `y (1 - y/ymax)^2 * bump(x)`: vanishes near the x-sides and the top.
struct BumpField {
    ymax: f64,
    x_half: f64,
}

impl BumpField {
    fn bump(&self, x: f64) -> (f64, f64, f64) {
        // cos^2 window supported in |x| < x_half
        let s = std::f64::consts::FRAC_PI_2 * x / self.x_half;
        if s.abs() >= std::f64::consts::FRAC_PI_2 {
            return (0.0, 0.0, 0.0);
        }
        let c = s.cos();
        let k = std::f64::consts::FRAC_PI_2 / self.x_half;
        let v = c * c * c * c;
        let dv = -4.0 * c * c * c * s.sin() * k;
        let ddv = (-4.0 * c * c * (c * c - 3.0 * s.sin() * s.sin())) * k * k;
        (v, dv, ddv)
    }

    fn wall(&self, y: f64) -> (f64, f64, f64) {
        let t = 1.0 - y / self.ymax;
        let v = y * t * t;
        let dv = t * t - 2.0 * y * t / self.ymax;
        let ddv = -4.0 * t / self.ymax + 2.0 * y / (self.ymax * self.ymax);
        (v, dv, ddv)
    }
}

impl Field2 for BumpField {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.bump(x).0 * self.wall(y).0
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (b, db, _) = self.bump(x);
        let (w, dw, _) = self.wall(y);
        (db * w, b * dw)
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (b, db, ddb) = self.bump(x);
        let (w, dw, ddw) = self.wall(y);
        (ddb * w, db * dw, b * ddw)
    }
}

/// Smooth field for the commutator test (no support restriction needed).
struct CosExp;

impl Field2 for CosExp {
    fn value(&self, x: f64, y: f64) -> f64 {
        x.cos() * (-y).exp()
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (-x.sin() * (-y).exp(), -x.cos() * (-y).exp())
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        (-x.cos() * (-y).exp(), x.sin() * (-y).exp(), x.cos() * (-y).exp())
    }
}

/// Compactly supported 2-D bump for the commutator multiplier.
struct Phi {
    x_half: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Phi {
    fn window(t: f64) -> (f64, f64, f64) {
        // cos^2 window on [-1, 1] in the scaled variable
        if t.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = std::f64::consts::FRAC_PI_2 * t;
        let c = s.cos();
        let k = std::f64::consts::FRAC_PI_2;
        (c * c, -2.0 * c * s.sin() * k, (2.0 * s.sin() * s.sin() - 2.0 * c * c) * k * k)
    }
}

impl Field2 for Phi {
    fn value(&self, x: f64, y: f64) -> f64 {
        let ty = (2.0 * y - self.y_hi - self.y_lo) / (self.y_hi - self.y_lo);
        Phi::window(x / self.x_half).0 * Phi::window(ty).0
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let ty = (2.0 * y - self.y_hi - self.y_lo) / (self.y_hi - self.y_lo);
        let (wx, dwx, _) = Phi::window(x / self.x_half);
        let (wy, dwy, _) = Phi::window(ty);
        (dwx / self.x_half * wy, wx * dwy * 2.0 / (self.y_hi - self.y_lo))
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let ty = (2.0 * y - self.y_hi - self.y_lo) / (self.y_hi - self.y_lo);
        let (wx, dwx, ddwx) = Phi::window(x / self.x_half);
        let (wy, dwy, ddwy) = Phi::window(ty);
        let sy = 2.0 / (self.y_hi - self.y_lo);
        (
            ddwx / (self.x_half * self.x_half) * wy,
            dwx / self.x_half * dwy * sy,
            wx * ddwy * sy * sy,
        )
    }
}

fn params_for_beta(beta: f64, rho: f64) -> HestonParams {
    let sigma = 1.0;
    let kappa = 1.0;
    let theta = beta * sigma * sigma / (2.0 * kappa);
    // q chosen so b1 = 0
    let q = 1.0 - kappa * theta * rho / sigma;
    HestonParams::new(sigma, rho, kappa, theta, 1.0, q).validate().unwrap()
}

fn ibp_defects(beta: f64, rho: f64) -> Vec<f64> {
    let p = params_for_beta(beta, rho);
    let consts = derive_constants(&p);
    let dom = Domain::rectangle(-2.0, 2.0, 4.0).unwrap();
    let u = BumpField { ymax: dom.y_max, x_half: 1.8 };
    let v = BumpField { ymax: dom.y_max, x_half: 1.5 };
    [17usize, 33, 65, 129]
        .iter()
        .map(|&n| {
            let grid = build_grid(dom, n, n, 2.0, &consts).unwrap();
            let form = assemble(Arc::clone(&grid), &p, false).unwrap();
            check_integration_by_parts(&form, &u, &v)
        })
        .collect()
}

#[test]
fn integration_by_parts_defect_second_order() {
    for (beta, rho) in [(1.0, 0.0), (0.5, 0.3), (2.0, -0.4)] {
        let defects = ibp_defects(beta, rho);
        let orders = observed_orders(&defects);
        let tail = orders[orders.len() - 1];
        assert!(
            tail >= 1.5,
            "IBP defect order {tail:.2} too low (beta={beta}, rho={rho}): {defects:?} {orders:?}"
        );
    }
}

#[test]
fn commutator_identity_defect_converges() {
    for (beta, rho) in [(1.0, 0.0), (0.5, 0.3), (2.0, -0.4)] {
        let p = params_for_beta(beta, rho);
        let consts = derive_constants(&p);
        let dom = Domain::rectangle(-2.0, 2.0, 4.0).unwrap();
        let phi = Phi { x_half: 1.6, y_lo: 0.2, y_hi: 3.4 };
        let mut defects = Vec::new();
        for n in [17usize, 33, 65, 129] {
            let grid = build_grid(dom, n, n, 2.0, &consts).unwrap();
            let form = assemble(Arc::clone(&grid), &p, false).unwrap();
            let check = commutator_identity_check(&form, &CosExp, &phi);
            assert!(check.bound_ok, "commutator bound violated: {check:?}");
            defects.push(check.defect);
        }
        let orders = observed_orders(&defects);
        let tail = orders[orders.len() - 1];
        assert!(
            tail >= 1.5,
            "commutator defect order {tail:.2} too low (beta={beta}, rho={rho}): {defects:?}"
        );
    }
}

#[test]
fn commutator_trivial_cases() {
    let p = params_for_beta(1.0, 0.2);
    let consts = derive_constants(&p);
    let dom = Domain::rectangle(-2.0, 2.0, 4.0).unwrap();
    let grid = build_grid(dom, 33, 33, 2.0, &consts).unwrap();
    let form = assemble(Arc::clone(&grid), &p, false).unwrap();
    // phi constant 1 over the whole domain: both sides vanish (Dphi = 0)
    struct One;
    impl Field2 for One {
        fn value(&self, _x: f64, _y: f64) -> f64 {
            1.0
        }
        fn gradient(&self, _x: f64, _y: f64) -> (f64, f64) {
            (0.0, 0.0)
        }
        fn hessian(&self, _x: f64, _y: f64) -> (f64, f64, f64) {
            (0.0, 0.0, 0.0)
        }
    }
    let check = commutator_identity_check(&form, &CosExp, &One);
    assert!(check.defect < 1e-12);
    assert!(check.commutator_ip < 1e-12);

    // phi vanishing on the support of u: everything zero
    let phi = Phi { x_half: 0.5, y_lo: 0.1, y_hi: 0.6 };
    struct FarField;
    impl Field2 for FarField {
        fn value(&self, x: f64, _y: f64) -> f64 {
            if x > 1.0 {
                1.0
            } else {
                0.0
            }
        }
        fn gradient(&self, _x: f64, _y: f64) -> (f64, f64) {
            (0.0, 0.0)
        }
        fn hessian(&self, _x: f64, _y: f64) -> (f64, f64, f64) {
            (0.0, 0.0, 0.0)
        }
    }
    // u = 0 on supp(phi) nodally and at quadrature points in the overlap
    let check = commutator_identity_check(&form, &FarField, &phi);
    assert!(check.defect < 1e-12);
}

#[test]
fn ibp_zero_cases() {
    let p = params_for_beta(1.5, 0.0);
    let consts = derive_constants(&p);
    let dom = Domain::rectangle(-2.0, 2.0, 4.0).unwrap();
    let grid = build_grid(dom, 17, 17, 2.0, &consts).unwrap();
    let form = assemble(Arc::clone(&grid), &p, false).unwrap();
    let zero = heston_core::field::Constant(0.0);
    let v = BumpField { ymax: dom.y_max, x_half: 1.5 };
    assert_eq!(check_integration_by_parts(&form, &zero, &v), 0.0);
    assert_eq!(check_integration_by_parts(&form, &v, &zero), 0.0);
}
