//! Evaluable functions on the half-plane with explicit derivatives.
//!
//! The strong operator, the envelope machinery and the manufactured-solution
//! studies all need pointwise second derivatives, so closures are modelled as
//! a small trait rather than bare `Fn`s.

use crate::scalar::Real;
use alloc::boxed::Box;

/// Twice-differentiable scalar function of `(x, y)`.
pub trait Field2 {
    fn value(&self, x: f64, y: f64) -> f64;
    /// `(u_x, u_y)`.
    fn gradient(&self, x: f64, y: f64) -> (f64, f64);
    /// `(u_xx, u_xy, u_yy)`.
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64);
}

impl<F: Field2 + ?Sized> Field2 for &F {
    fn value(&self, x: f64, y: f64) -> f64 {
        (**self).value(x, y)
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (**self).gradient(x, y)
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        (**self).hessian(x, y)
    }
}

impl Field2 for Box<dyn Field2 + Send + Sync> {
    fn value(&self, x: f64, y: f64) -> f64 {
        (**self).value(x, y)
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (**self).gradient(x, y)
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        (**self).hessian(x, y)
    }
}

/// One-dimensional profile with a derivative, for the 1-D diagnostics.
pub trait Field1 {
    fn value(&self, y: f64) -> f64;
    fn deriv(&self, y: f64) -> f64;
}

impl<F: Field1 + ?Sized> Field1 for &F {
    fn value(&self, y: f64) -> f64 {
        (**self).value(y)
    }
    fn deriv(&self, y: f64) -> f64 {
        (**self).deriv(y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl Field2 for Constant {
    fn value(&self, _x: f64, _y: f64) -> f64 {
        self.0
    }
    fn gradient(&self, _x: f64, _y: f64) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn hessian(&self, _x: f64, _y: f64) -> (f64, f64, f64) {
        (0.0, 0.0, 0.0)
    }
}

/// `d0 + d2 y`.
#[derive(Debug, Clone, Copy)]
pub struct AffineY {
    pub d0: f64,
    pub d2: f64,
}

impl Field2 for AffineY {
    fn value(&self, _x: f64, y: f64) -> f64 {
        self.d0 + self.d2 * y
    }
    fn gradient(&self, _x: f64, _y: f64) -> (f64, f64) {
        (0.0, self.d2)
    }
    fn hessian(&self, _x: f64, _y: f64) -> (f64, f64, f64) {
        (0.0, 0.0, 0.0)
    }
}

/// The four-term family `d0 + d2 y + d3 e^{l x} + d4 e^{k y}` that the
/// envelope construction produces. Exponents may be zero (the corresponding
/// term is then constant).
#[derive(Debug, Clone, Copy)]
pub struct ExpFamily {
    pub d0: f64,
    pub d2: f64,
    pub d3: f64,
    pub l: f64,
    pub d4: f64,
    pub k: f64,
}

impl Field2 for ExpFamily {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.d0 + self.d2 * y + self.d3 * (self.l * x).exp() + self.d4 * (self.k * y).exp()
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.d3 * self.l * (self.l * x).exp(),
            self.d2 + self.d4 * self.k * (self.k * y).exp(),
        )
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        (
            self.d3 * self.l * self.l * (self.l * x).exp(),
            0.0,
            self.d4 * self.k * self.k * (self.k * y).exp(),
        )
    }
}

/// Source-bound family `c0 + c2 y + c3 (1+y) e^{l x} + c4 (1+y) e^{k y}`.
#[derive(Debug, Clone, Copy)]
pub struct SourceFamily {
    pub c0: f64,
    pub c2: f64,
    pub c3: f64,
    pub l: f64,
    pub c4: f64,
    pub k: f64,
}

impl Field2 for SourceFamily {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.c0
            + self.c2 * y
            + self.c3 * (1.0 + y) * (self.l * x).exp()
            + self.c4 * (1.0 + y) * (self.k * y).exp()
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let el = (self.l * x).exp();
        let ek = (self.k * y).exp();
        (
            self.c3 * self.l * (1.0 + y) * el,
            self.c2 + self.c3 * el + self.c4 * (1.0 + self.k * (1.0 + y)) * ek,
        )
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let el = (self.l * x).exp();
        let ek = (self.k * y).exp();
        (
            self.c3 * self.l * self.l * (1.0 + y) * el,
            self.c3 * self.l * el,
            self.c4 * self.k * (2.0 + self.k * (1.0 + y)) * ek,
        )
    }
}

/// Put payoff `(E - e^x)^+`. Lipschitz; gradient and Hessian are the a.e.
/// values (the kink at `x = ln E` gets the exercise-region branch).
#[derive(Debug, Clone, Copy)]
pub struct PutPayoff {
    pub strike: f64,
}

impl Field2 for PutPayoff {
    fn value(&self, x: f64, _y: f64) -> f64 {
        f64::max(self.strike - x.exp(), 0.0)
    }
    fn gradient(&self, x: f64, _y: f64) -> (f64, f64) {
        if x.exp() <= self.strike {
            (-x.exp(), 0.0)
        } else {
            (0.0, 0.0)
        }
    }
    fn hessian(&self, x: f64, _y: f64) -> (f64, f64, f64) {
        if x.exp() <= self.strike {
            (-x.exp(), 0.0, 0.0)
        } else {
            (0.0, 0.0, 0.0)
        }
    }
}

/// Pointwise sum of two fields.
pub struct Sum<F, G>(pub F, pub G);

impl<F: Field2, G: Field2> Field2 for Sum<F, G> {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.0.value(x, y) + self.1.value(x, y)
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (a, b) = self.0.gradient(x, y);
        let (c, d) = self.1.gradient(x, y);
        (a + c, b + d)
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (a, b, c) = self.0.hessian(x, y);
        let (d, e, f) = self.1.hessian(x, y);
        (a + d, b + e, c + f)
    }
}

/// `scale * f`.
pub struct Scaled<F>(pub f64, pub F);

impl<F: Field2> Field2 for Scaled<F> {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.0 * self.1.value(x, y)
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (a, b) = self.1.gradient(x, y);
        (self.0 * a, self.0 * b)
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (a, b, c) = self.1.hessian(x, y);
        (self.0 * a, self.0 * b, self.0 * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check<F: Field2>(f: &F, x: f64, y: f64) {
        let h = 1e-5;
        let (ux, uy) = f.gradient(x, y);
        let dx = (f.value(x + h, y) - f.value(x - h, y)) / (2.0 * h);
        let dy = (f.value(x, y + h) - f.value(x, y - h)) / (2.0 * h);
        assert!((ux - dx).abs() < 1e-7 * (1.0 + ux.abs()));
        assert!((uy - dy).abs() < 1e-7 * (1.0 + uy.abs()));
        let (uxx, uxy, uyy) = f.hessian(x, y);
        let dxx = (f.value(x + h, y) - 2.0 * f.value(x, y) + f.value(x - h, y)) / (h * h);
        let dyy = (f.value(x, y + h) - 2.0 * f.value(x, y) + f.value(x, y - h)) / (h * h);
        let dxy = (f.value(x + h, y + h) - f.value(x + h, y - h) - f.value(x - h, y + h)
            + f.value(x - h, y - h))
            / (4.0 * h * h);
        assert!((uxx - dxx).abs() < 1e-4 * (1.0 + uxx.abs()));
        assert!((uxy - dxy).abs() < 1e-4 * (1.0 + uxy.abs()));
        assert!((uyy - dyy).abs() < 1e-4 * (1.0 + uyy.abs()));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(&ExpFamily { d0: 1.0, d2: -0.5, d3: 0.3, l: 0.4, d4: 0.2, k: 0.3 }, 0.7, 1.3);
        fd_check(&SourceFamily { c0: -1.0, c2: 0.5, c3: 0.3, l: 0.2, c4: -0.2, k: 0.1 }, -0.4, 0.8);
        fd_check(&AffineY { d0: 2.0, d2: -1.0 }, 0.1, 0.5);
        fd_check(&PutPayoff { strike: 1.0 }, -1.0, 0.5);
    }
}
