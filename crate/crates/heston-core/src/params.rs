//! Heston coefficients, the constants derived from them, and the affine
//! change of variables that zeroes the drift combination `b1`.
//!
//! The constants collected in [`DerivedConstants`] are the ones the energy
//! estimates are phrased in:
//!
//! ```text
//! beta = 2*kappa*theta/sigma^2        mu = 2*kappa/sigma^2
//! a1 = kappa*rho/sigma - 1/2          b1 = r - q - kappa*theta*rho/sigma
//! nu0 = min{1, (1 - rho^2) sigma^2}
//! C2  = min{sigma^2(1-rho^2)/2, (1-rho^2)/2}
//! C4  = max{sigma^2(1-rho^2)/2, (1-rho^2)/2}
//! C3  = max{|a1|,|b1|}/2 + max{1/2, |rho| sigma/2}
//! gamma0 = C2 / (2 C3)                 lambda0 = C2, nu1 = C2/2
//! ```
//!
//! The Garding inequality `a(u,u) >= (C2/2)||u||_V^2 - C2||(1+y)^{1/2}u||_H^2`
//! requires the weight exponent `gamma` to satisfy `0 < gamma <= gamma0`;
//! `gamma = gamma0` is the default.

use crate::scalar::Real;
use thiserror::Error;

/// Coefficients of the Heston operator. Plain data; use [`HestonParams::validate`]
/// before feeding them anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    /// Volatility of volatility, nonzero. Canonicalized to `> 0` by `validate`.
    pub sigma: f64,
    /// Correlation, strictly inside (-1, 1).
    pub rho: f64,
    /// Mean-reversion rate, positive.
    pub kappa: f64,
    /// Mean-reversion level, positive.
    pub theta: f64,
    /// Interest rate (killing rate), nonnegative.
    pub r: f64,
    /// Dividend yield, nonnegative.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoefficientError {
    #[error("sigma must be nonzero and finite, got {0}")]
    Sigma(f64),
    #[error("rho must satisfy -1 < rho < 1, got {0}")]
    Rho(f64),
    #[error("kappa must be positive, got {0}")]
    Kappa(f64),
    #[error("theta must be positive, got {0}")]
    Theta(f64),
    #[error("r must be nonnegative, got {0}")]
    R(f64),
    #[error("q must be nonnegative, got {0}")]
    Q(f64),
    #[error("gamma must lie in (0, gamma0 = {gamma0}], got {gamma}")]
    Gamma { gamma: f64, gamma0: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizationError {
    #[error("coefficients: {0}")]
    Coefficients(#[from] CoefficientError),
    #[error("no shear in the search range met the side conditions ({0})")]
    ShearSearchFailed(&'static str),
    #[error("transformed parameters failed verification: |b1| = {b1}")]
    Verification { b1: f64 },
}

impl HestonParams {
    pub fn new(sigma: f64, rho: f64, kappa: f64, theta: f64, r: f64, q: f64) -> Self {
        Self { sigma, rho, kappa, theta, r, q }
    }

    /// Checks the ellipticity conditions `sigma != 0`, `-1 < rho < 1`,
    /// `kappa > 0`, `theta > 0`, `r >= 0`, `q >= 0` and returns the
    /// parameters canonicalized to `sigma > 0` (the operator depends on the
    /// coefficients only through `sigma^2` and `rho*sigma`, so a negative
    /// `sigma` is absorbed by flipping the sign of `rho` as well).
    pub fn validate(&self) -> Result<HestonParams, CoefficientError> {
        if !(self.sigma != 0.0 && self.sigma.is_finite()) {
            return Err(CoefficientError::Sigma(self.sigma));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(CoefficientError::Rho(self.rho));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(CoefficientError::Kappa(self.kappa));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(CoefficientError::Theta(self.theta));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(CoefficientError::R(self.r));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(CoefficientError::Q(self.q));
        }
        let mut p = *self;
        if p.sigma < 0.0 {
            p.sigma = -p.sigma;
            p.rho = -p.rho;
        }
        Ok(p)
    }

    /// `b1 = r - q - kappa*theta*rho/sigma`, the x-drift coefficient that the
    /// change of variables removes.
    pub fn b1(&self) -> f64 {
        self.r - self.q - self.kappa * self.theta * self.rho / self.sigma
    }

    /// `beta = 2*kappa*theta/sigma^2`, the degeneracy exponent of the weight.
    pub fn beta(&self) -> f64 {
        2.0 * self.kappa * self.theta / (self.sigma * self.sigma)
    }
}

/// Every constant of the energy estimates, derived from validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub beta: f64,
    pub mu: f64,
    pub a1: f64,
    pub b1: f64,
    pub nu0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub gamma0: f64,
    /// Weight exponent actually in use, `0 < gamma <= gamma0`.
    pub gamma: f64,
    pub lambda0: f64,
    pub nu1: f64,
}

/// Derived constants with the default choice `gamma = gamma0`.
pub fn derive_constants(params: &HestonParams) -> DerivedConstants {
    derive_constants_with_gamma(params, None).expect("gamma = gamma0 is always admissible")
}

/// Derived constants with an explicit weight exponent. `None` selects
/// `gamma0`; values outside `(0, gamma0]` are rejected since the Garding
/// inequality fails beyond `gamma0`.
pub fn derive_constants_with_gamma(
    params: &HestonParams,
    gamma: Option<f64>,
) -> Result<DerivedConstants, CoefficientError> {
    let p = params;
    let s2 = p.sigma * p.sigma;
    let one_m_rho2 = 1.0 - p.rho * p.rho;
    let beta = 2.0 * p.kappa * p.theta / s2;
    let mu = 2.0 * p.kappa / s2;
    let a1 = p.kappa * p.rho / p.sigma - 0.5;
    let b1 = p.b1();
    let nu0 = f64::min(1.0, one_m_rho2 * s2);
    let c2 = f64::min(s2 * one_m_rho2 / 2.0, one_m_rho2 / 2.0);
    let c4 = f64::max(s2 * one_m_rho2 / 2.0, one_m_rho2 / 2.0);
    let c3 = 0.5 * f64::max(a1.abs(), b1.abs()) + f64::max(0.5, p.rho.abs() * p.sigma / 2.0);
    let gamma0 = c2 / (2.0 * c3);
    let gamma = match gamma {
        None => gamma0,
        Some(g) => {
            if !(g > 0.0 && g <= gamma0) {
                return Err(CoefficientError::Gamma { gamma: g, gamma0 });
            }
            g
        }
    };
    let c1 = f64::max(c4 + gamma * c3, p.r + gamma * c3);
    // Continuity constant C5 = C6 + C7. The sqrt(2) on the sign(x)-drift part
    // accounts for ||y^(1/2)u_x|| + ||y^(1/2)u_y|| <= sqrt(2)||u||_V, and the
    // correlation enters through |rho| so the bound survives rho < 0.
    let c6 = a1.abs()
        + core::f64::consts::SQRT_2 * f64::max(gamma / 2.0, gamma * p.rho.abs() * p.sigma / 2.0)
        + b1.abs();
    let c7 = 0.5 + p.rho.abs() * p.sigma + s2 / 2.0 + p.r;
    let c5 = c6 + c7;
    Ok(DerivedConstants {
        beta,
        mu,
        a1,
        b1,
        nu0,
        c1,
        c2,
        c3,
        c4,
        c5,
        gamma0,
        gamma,
        lambda0: c2,
        nu1: c2 / 2.0,
    })
}

/// The `b1`-normalizing change: a shear `(x,y) -> (x + m y, y)` when
/// needed, followed by the y-scaling `(x,y) -> (x, a y)` with the
/// dependent-variable rescale `b`. `transformed` holds the coefficient
/// table of the normalized system: `transformed.b1() = 0` and the
/// degeneracy exponent `beta` is invariant.
///
/// Composed point map: `(x, y) -> (X, Y) = (x + m y, a y)`; a
/// solution-like function maps as `U(X, Y) = b * u(X - m Y/a, Y/a)` and a
/// source carries `source_scale` instead of `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateChange {
    /// y-scale factor.
    pub a: f64,
    /// Shear amount (0 when the scale-only special case applies).
    pub m: f64,
    /// Dependent-variable scale introduced together with the shear.
    pub b: f64,
    /// Multiplier carried by source functions, `a/(xi b)` with
    /// `xi = 1 + 2 rho sigma m + sigma^2 m^2`.
    pub source_scale: f64,
    /// Coefficient table of the normalized system. The transformed `q` may
    /// be negative: the normalized system is a computational device, not
    /// user input.
    pub transformed: HestonParams,
}

impl CoordinateChange {
    pub fn identity(params: HestonParams) -> Self {
        Self { a: 1.0, m: 0.0, b: 1.0, source_scale: 1.0, transformed: params }
    }

    pub fn is_identity(&self) -> bool {
        self.a == 1.0 && self.m == 0.0 && self.b == 1.0
    }

    /// Original coordinates of a transformed point `(xx, yy)`.
    pub fn pull_back(&self, xx: f64, yy: f64) -> (f64, f64) {
        (xx - self.m * yy / self.a, yy / self.a)
    }

    /// Transformed coordinates of an original point.
    pub fn push_forward(&self, x: f64, y: f64) -> (f64, f64) {
        (x + self.m * y, self.a * y)
    }
}

/// Scale-only parameter table: `a(r - q) - kappa theta rho/(a sigma) = 0`
/// at `a^2 = kappa theta rho/((r-q) sigma)`, realized by
/// `(sigma, kappa, theta) -> (sigma/a, kappa/a, theta/a)` and
/// `(r, q) -> (ra, qa)`, which preserves `beta = 2 kappa theta/sigma^2`.
fn scale_case_table(p: &HestonParams, a: f64) -> HestonParams {
    HestonParams::new(p.sigma / a, p.rho, p.kappa / a, p.theta / a, p.r * a, p.q * a)
}

/// Finds the affine change of variables with `b1 = 0` for the transformed
/// coefficient table.
///
/// Cases, in order:
/// 1. `b1` already zero: identity change.
/// 2. `rho / ((r - q) sigma) > 0`: scale-only,
///    `a = sqrt(kappa theta rho / ((r-q) sigma))`.
/// 3. Otherwise a shear `m` is searched in `{1, 2, 4, ..., 2^20}`; the
///    first `m` with transformed correlation positive and transformed
///    `r - q` positive is taken, the dependent-variable factor
///    `b = (2 kappa m + 1)/xi` absorbed by `q_hat := r_bar - (r_bar - q_bar)/b`,
///    and the scale-only case applied to the sheared table.
///
/// The returned table is verified numerically rather than trusted:
/// `|b1| <= 1e-12 (1 + |r| + |q|)` and `beta` preserved to `1e-12` relative.
pub fn normalize_b1(params: &HestonParams) -> Result<CoordinateChange, NormalizationError> {
    let p = params.validate()?;
    let b1 = p.b1();
    if b1.abs() <= 1e-14 * (1.0 + p.r.abs() + p.q.abs()) {
        return Ok(CoordinateChange::identity(p));
    }

    let change = if p.r != p.q && p.rho / ((p.r - p.q) * p.sigma) > 0.0 {
        let a = (p.kappa * p.theta * p.rho / ((p.r - p.q) * p.sigma)).sqrt();
        CoordinateChange {
            a,
            m: 0.0,
            b: 1.0,
            source_scale: a,
            transformed: scale_case_table(&p, a),
        }
    } else {
        let mut found = None;
        for mexp in 0..=20u32 {
            let m = (1u64 << mexp) as f64;
            let xi = 1.0 + 2.0 * p.rho * p.sigma * m + p.sigma * p.sigma * m * m;
            let rho_s = (p.rho * p.sigma + m * p.sigma * p.sigma) / (p.sigma * xi.sqrt());
            let r_s = p.r / xi;
            let q_s = (p.q - p.kappa * p.theta * m) / xi;
            if rho_s > 0.0 && r_s - q_s > 0.0 {
                found = Some((m, xi, rho_s, r_s, q_s));
                break;
            }
        }
        let (m, xi, rho_s, r_s, q_s) = found.ok_or(NormalizationError::ShearSearchFailed(
            "needed transformed rho > 0 and transformed r - q > 0",
        ))?;
        let sheared = HestonParams::new(
            p.sigma / xi.sqrt(),
            rho_s,
            p.kappa / xi,
            p.theta,
            r_s,
            q_s,
        );
        let b = (2.0 * p.kappa * m + 1.0) / xi;
        // the proof gives no closed form for q after the dependent rescale:
        // take q_hat from b^{-1}(r - q) = r - q_hat and verify at the end
        let q_hat = sheared.r - (sheared.r - sheared.q) / b;
        let with_qhat = HestonParams::new(
            sheared.sigma,
            sheared.rho,
            sheared.kappa,
            sheared.theta,
            sheared.r,
            q_hat,
        );
        let a = (with_qhat.kappa * with_qhat.theta * with_qhat.rho
            / ((with_qhat.r - with_qhat.q) * with_qhat.sigma))
            .sqrt();
        CoordinateChange {
            a,
            m,
            b,
            source_scale: a / (xi * b),
            transformed: scale_case_table(&with_qhat, a),
        }
    };

    let t = &change.transformed;
    let b1_new = t.b1();
    if b1_new.abs() > 1e-12 * (1.0 + t.r.abs() + t.q.abs()) {
        return Err(NormalizationError::Verification { b1: b1_new });
    }
    let beta_rel = (t.beta() - p.beta()).abs() / p.beta();
    if beta_rel > 1e-12 {
        return Err(NormalizationError::Verification { b1: b1_new });
    }
    Ok(change)
}

/// A function mapped through a [`CoordinateChange`] (no amplitude factor:
/// Dirichlet data, obstacles and envelopes transform this way).
pub struct MappedField<F> {
    change: CoordinateChange,
    scale: f64,
    inner: F,
}

/// Pullback of solution-like data (`g`, `psi`, envelopes) to the transformed
/// coordinates, carrying the dependent-variable scale `b`.
pub fn map_function<F: crate::field::Field2>(change: &CoordinateChange, u: F) -> MappedField<F> {
    MappedField { change: *change, scale: change.b, inner: u }
}

/// Pullback of a source function; carries the multiplier `source_scale`.
pub fn map_source<F: crate::field::Field2>(change: &CoordinateChange, f: F) -> MappedField<F> {
    MappedField { change: *change, scale: change.source_scale, inner: f }
}

impl<F: crate::field::Field2> crate::field::Field2 for MappedField<F> {
    fn value(&self, xx: f64, yy: f64) -> f64 {
        let (x, y) = self.change.pull_back(xx, yy);
        self.scale * self.inner.value(x, y)
    }

    fn gradient(&self, xx: f64, yy: f64) -> (f64, f64) {
        let (x, y) = self.change.pull_back(xx, yy);
        let (ux, uy) = self.inner.gradient(x, y);
        let (a, m) = (self.change.a, self.change.m);
        (self.scale * ux, self.scale * (-m / a * ux + uy / a))
    }

    fn hessian(&self, xx: f64, yy: f64) -> (f64, f64, f64) {
        let (x, y) = self.change.pull_back(xx, yy);
        let (uxx, uxy, uyy) = self.inner.hessian(x, y);
        let (a, m) = (self.change.a, self.change.m);
        let dxy = -m / a * uxx + uxy / a;
        let dyy = (m * m * uxx - 2.0 * m * uxy + uyy) / (a * a);
        (self.scale * uxx, self.scale * dxy, self.scale * dyy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AffineY, Field2};

    fn std_params() -> HestonParams {
        HestonParams::new(1.0, 0.0, 1.0, 0.5, 1.0, 0.0)
    }

    #[test]
    fn validate_accepts_strict_interior() {
        assert!(std_params().validate().is_ok());
    }

    #[test]
    fn validate_rejects_each_violation() {
        let mut p = std_params();
        p.sigma = 0.0;
        assert!(matches!(p.validate(), Err(CoefficientError::Sigma(_))));
        let mut p = std_params();
        p.rho = 1.0;
        assert!(matches!(p.validate(), Err(CoefficientError::Rho(_))));
        let mut p = std_params();
        p.kappa = 0.0;
        assert!(matches!(p.validate(), Err(CoefficientError::Kappa(_))));
        let mut p = std_params();
        p.theta = -0.1;
        assert!(matches!(p.validate(), Err(CoefficientError::Theta(_))));
        let mut p = std_params();
        p.r = -1e-9;
        assert!(matches!(p.validate(), Err(CoefficientError::R(_))));
        let mut p = std_params();
        p.q = -2.0;
        assert!(matches!(p.validate(), Err(CoefficientError::Q(_))));
    }

    #[test]
    fn negative_sigma_canonicalizes() {
        let p = HestonParams::new(-2.0, 0.3, 1.0, 1.0, 0.5, 0.0).validate().unwrap();
        assert_eq!(p.sigma, 2.0);
        assert_eq!(p.rho, -0.3);
        // beta and rho*sigma are unchanged by the flip
        assert_eq!(p.beta(), HestonParams::new(-2.0, 0.3, 1.0, 1.0, 0.5, 0.0).beta());
    }

    #[test]
    fn derived_constants_examples() {
        let dc = derive_constants(&std_params());
        assert!((dc.beta - 1.0).abs() < 1e-15);
        assert!((dc.mu - 2.0).abs() < 1e-15);
        assert!((dc.c2 - 0.5).abs() < 1e-15);
        assert!((dc.nu1 - 0.25).abs() < 1e-15);
        assert!((dc.lambda0 - 0.5).abs() < 1e-15);

        let p = HestonParams::new(2.0, 0.5, 1.0, 1.0, 1.0, 0.0).validate().unwrap();
        let dc = derive_constants(&p);
        assert!((dc.nu0 - 1.0).abs() < 1e-15); // min{1, 0.75*4}
    }

    #[test]
    fn garding_constants_consistent() {
        for p in [
            std_params(),
            HestonParams::new(2.0, 0.5, 1.5, 0.8, 0.3, 0.1),
            HestonParams::new(0.7, -0.6, 2.0, 1.2, 0.05, 0.02),
        ] {
            let dc = derive_constants(&p.validate().unwrap());
            assert!((dc.gamma0 * 2.0 * dc.c3 - dc.c2).abs() <= 4.0 * f64::EPSILON * dc.c2);
            assert!(dc.beta > 0.0 && dc.mu > 0.0 && dc.nu0 > 0.0);
            assert!(dc.c2 > 0.0 && dc.gamma0 > 0.0 && dc.nu1 > 0.0);
        }
    }

    #[test]
    fn gamma_override_bounds() {
        let p = std_params();
        let dc = derive_constants(&p);
        assert!(derive_constants_with_gamma(&p, Some(dc.gamma0)).is_ok());
        assert!(derive_constants_with_gamma(&p, Some(dc.gamma0 * 0.5)).is_ok());
        assert!(derive_constants_with_gamma(&p, Some(dc.gamma0 * 1.01)).is_err());
        assert!(derive_constants_with_gamma(&p, Some(0.0)).is_err());
    }

    #[test]
    fn normalize_identity_when_b1_zero() {
        // b1 = r - q - kappa*theta*rho/sigma = 0.5 - 0.5 = 0
        let p = HestonParams::new(1.0, 0.5, 1.0, 1.0, 1.0, 0.5);
        let ch = normalize_b1(&p).unwrap();
        assert!(ch.is_identity());
    }

    #[test]
    fn normalize_scale_only_case() {
        let p = HestonParams::new(2.0, 0.5, 1.0, 1.0, 1.0, 0.5);
        assert!((p.b1() - 0.25).abs() < 1e-15);
        let ch = normalize_b1(&p).unwrap();
        assert_eq!(ch.m, 0.0);
        assert!((ch.a * ch.a - 0.5).abs() < 1e-14);
        assert!(ch.transformed.b1().abs() < 1e-14);
    }

    #[test]
    fn normalize_shear_path_for_negative_rho() {
        // rho < 0 with r > q forces the shear branch
        for p in [
            HestonParams::new(1.0, -0.5, 1.0, 1.0, 0.05, 0.0),
            HestonParams::new(0.8, -0.2, 2.0, 0.7, 0.1, 0.0),
            HestonParams::new(3.0, -0.9, 0.5, 2.0, 0.3, 0.2),
        ] {
            let ch = normalize_b1(&p).unwrap();
            assert!(ch.m >= 1.0);
            let t = &ch.transformed;
            assert!(t.b1().abs() < 1e-12 * (1.0 + t.r.abs() + t.q.abs()));
            assert!((t.beta() - p.beta()).abs() < 1e-12 * p.beta());
            assert!(t.rho > 0.0 && t.rho < 1.0);
        }
        // rho < 0 with r < q shares signs with (r - q) sigma, so the
        // scale-only case already applies
        let p = HestonParams::new(0.8, -0.2, 2.0, 0.7, 0.0, 0.1);
        let ch = normalize_b1(&p).unwrap();
        assert_eq!(ch.m, 0.0);
        let t = &ch.transformed;
        assert!(t.b1().abs() < 1e-12 * (1.0 + t.r.abs() + t.q.abs()));
    }

    #[test]
    fn mapped_function_matches_substitution() {
        // scale a=2 applied to u(x,y) = y evaluates to Y/2
        let ch = CoordinateChange {
            a: 2.0,
            m: 0.0,
            b: 1.0,
            source_scale: 2.0,
            transformed: std_params(),
        };
        let u = map_function(&ch, AffineY { d0: 0.0, d2: 1.0 });
        assert!((u.value(0.3, 1.0) - 0.5).abs() < 1e-15);

        // shear m=1 applied to u(x,y) = x evaluates to X - Y
        let ch = CoordinateChange {
            a: 1.0,
            m: 1.0,
            b: 1.0,
            source_scale: 1.0,
            transformed: std_params(),
        };
        struct XCoord;
        impl Field2 for XCoord {
            fn value(&self, x: f64, _y: f64) -> f64 {
                x
            }
            fn gradient(&self, _x: f64, _y: f64) -> (f64, f64) {
                (1.0, 0.0)
            }
            fn hessian(&self, _x: f64, _y: f64) -> (f64, f64, f64) {
                (0.0, 0.0, 0.0)
            }
        }
        let u = map_function(&ch, XCoord);
        assert!((u.value(2.0, 0.7) - (2.0 - 0.7)).abs() < 1e-15);
    }

    #[test]
    fn scale_case_formula_matches_quoted_identity() {
        // b1~ = a(r-q) - kappa theta rho/(a sigma) vanishes at the chosen a,
        // and the transformed table reproduces that combination exactly
        let p = HestonParams::new(2.0, 0.5, 1.0, 1.0, 1.0, 0.5);
        let a = (p.kappa * p.theta * p.rho / ((p.r - p.q) * p.sigma)).sqrt();
        let by_formula = a * (p.r - p.q) - p.kappa * p.theta * p.rho / (a * p.sigma);
        assert!(by_formula.abs() < 1e-15);
        let ch = normalize_b1(&p).unwrap();
        assert!((ch.transformed.b1() - by_formula).abs() < 1e-14);
    }

    #[test]
    fn mapped_inequalities_survive_the_change() {
        // pointwise orderings of data transform intact (positive scale,
        // shared point map)
        use crate::field::{ExpFamily, Field2};
        let p = HestonParams::new(1.0, -0.5, 1.0, 1.0, 0.05, 0.0);
        let ch = normalize_b1(&p).unwrap();
        let lower = ExpFamily { d0: -1.0, d2: -0.2, d3: 0.0, l: 0.0, d4: 0.0, k: 0.0 };
        let upper = ExpFamily { d0: 1.0, d2: 0.3, d3: 0.0, l: 0.0, d4: 0.0, k: 0.0 };
        let ml = map_function(&ch, lower);
        let mu = map_function(&ch, upper);
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..100 {
            let xx = rng.uniform(-2.0, 2.0);
            let yy = rng.uniform(0.0, 4.0);
            assert!(ml.value(xx, yy) <= mu.value(xx, yy) + 1e-14);
        }
    }
}
