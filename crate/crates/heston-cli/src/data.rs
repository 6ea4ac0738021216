//! Builtin data families as evaluable fields.

use crate::config::DataSpec;
use heston_core::field::{AffineY, Constant, ExpFamily, Field2, PutPayoff};
use heston_core::params::HestonParams;

/// `A u*` for the four-term family, written out:
/// `c0 + c2 y + (a3 + b3 y) e^{l x} + (a4 + b4 y) e^{k y}`.
#[derive(Debug, Clone, Copy)]
pub struct AffineExpImage {
    pub c0: f64,
    pub c2: f64,
    pub a3: f64,
    pub b3: f64,
    pub l: f64,
    pub a4: f64,
    pub b4: f64,
    pub k: f64,
}

impl AffineExpImage {
    /// Closed-form image of `u* = d0 + d2 y + d3 e^{lx} + d4 e^{ky}`:
    ///
    /// ```text
    /// A u* = (r d0 - d2 kappa theta) + (kappa + r) d2 y
    ///      + d3 [(r - l(r-q)) + (y/2) l (1-l)] e^{lx}
    ///      + d4 [(r - kappa theta k) + y k (kappa - k/2)] e^{ky}.
    /// ```
    pub fn of_family(u: &ExpFamily, p: &HestonParams) -> Self {
        Self {
            c0: p.r * u.d0 - u.d2 * p.kappa * p.theta,
            c2: (p.kappa + p.r) * u.d2,
            a3: u.d3 * (p.r - u.l * (p.r - p.q)),
            b3: u.d3 * 0.5 * u.l * (1.0 - u.l),
            l: u.l,
            a4: u.d4 * (p.r - p.kappa * p.theta * u.k),
            b4: u.d4 * u.k * (p.kappa - 0.5 * u.k),
            k: u.k,
        }
    }
}

impl Field2 for AffineExpImage {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.c0
            + self.c2 * y
            + (self.a3 + self.b3 * y) * (self.l * x).exp()
            + (self.a4 + self.b4 * y) * (self.k * y).exp()
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let el = (self.l * x).exp();
        let ek = (self.k * y).exp();
        (
            self.l * (self.a3 + self.b3 * y) * el,
            self.c2 + self.b3 * el + (self.b4 + self.k * (self.a4 + self.b4 * y)) * ek,
        )
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let el = (self.l * x).exp();
        let ek = (self.k * y).exp();
        (
            self.l * self.l * (self.a3 + self.b3 * y) * el,
            self.l * self.b3 * el,
            (2.0 * self.k * self.b4 + self.k * self.k * (self.a4 + self.b4 * y)) * ek,
        )
    }
}

/// A configured data field.
pub enum BuiltField {
    Constant(Constant),
    Affine(AffineY),
    Exp(ExpFamily),
    Put(PutPayoff),
    Image(AffineExpImage),
}

impl Field2 for BuiltField {
    fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            BuiltField::Constant(f) => f.value(x, y),
            BuiltField::Affine(f) => f.value(x, y),
            BuiltField::Exp(f) => f.value(x, y),
            BuiltField::Put(f) => f.value(x, y),
            BuiltField::Image(f) => f.value(x, y),
        }
    }
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            BuiltField::Constant(f) => f.gradient(x, y),
            BuiltField::Affine(f) => f.gradient(x, y),
            BuiltField::Exp(f) => f.gradient(x, y),
            BuiltField::Put(f) => f.gradient(x, y),
            BuiltField::Image(f) => f.gradient(x, y),
        }
    }
    fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match self {
            BuiltField::Constant(f) => f.hessian(x, y),
            BuiltField::Affine(f) => f.hessian(x, y),
            BuiltField::Exp(f) => f.hessian(x, y),
            BuiltField::Put(f) => f.hessian(x, y),
            BuiltField::Image(f) => f.hessian(x, y),
        }
    }
}

pub fn build_field(spec: &DataSpec, params: &HestonParams) -> BuiltField {
    match *spec {
        DataSpec::Constant { c } => BuiltField::Constant(Constant(c)),
        DataSpec::Affine { d0, d2 } => BuiltField::Affine(AffineY { d0, d2 }),
        DataSpec::ExpFamily { d0, d2, d3, l, d4, k } => {
            BuiltField::Exp(ExpFamily { d0, d2, d3, l, d4, k })
        }
        DataSpec::Put { strike } => BuiltField::Put(PutPayoff { strike }),
        DataSpec::ManufacturedSource { d0, d2, d3, l, d4, k } => BuiltField::Image(
            AffineExpImage::of_family(&ExpFamily { d0, d2, d3, l, d4, k }, params),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use heston_core::operator::apply_a;
    use heston_core::rng::SplitMix64;

    #[test]
    fn image_matches_operator_application() {
        let p = HestonParams::new(1.0, 0.3, 1.2, 0.8, 0.9, 0.1).validate().unwrap();
        let u = ExpFamily { d0: 2.0, d2: 1.0, d3: 1.0, l: 0.1, d4: 1.0, k: 0.2 };
        let img = AffineExpImage::of_family(&u, &p);
        let mut rng = SplitMix64::new(3);
        for _ in 0..200 {
            let x = rng.uniform(-3.0, 3.0);
            let y = rng.uniform(1e-3, 6.0);
            let direct = apply_a(&u, x, y, &p);
            let closed = img.value(x, y);
            assert!(
                (direct - closed).abs() <= 1e-12 * (1.0 + direct.abs()),
                "mismatch at ({x}, {y}): {direct} vs {closed}"
            );
        }
    }
}
