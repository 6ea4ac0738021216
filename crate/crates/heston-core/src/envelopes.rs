//! Explicit sub/super-solution envelopes for the four-term bound family and
//! the hypothesis checks the existence/uniqueness arguments rest on.
//!
//! For source bounds
//!
//! ```text
//! n(x,y) = c0 + c2 y + c3 (1+y) e^{l x} + c4 (1+y) e^{k y}
//! N(x,y) = C0 + C2 y + C3 (1+y) e^{L x} + C4 (1+y) e^{K y}
//! ```
//!
//! the envelopes `m = d0 + d2 y + d3 e^{l x} + d4 e^{k y}` (resp. `M` with
//! capital coefficients) satisfy `A m <= n` and `N <= A M` pointwise when
//!
//! ```text
//! d2 = c2/(kappa+r)                      d0 = (c0 + c2 kappa theta/(kappa+r))/r
//! D3 = max{C3/(r - L(r-q)), 2C3/(L(1-L))}   (d3 the min analogue)
//! D4 = max{C4/(r - kappa theta K), C4/(K(kappa - K/2))}   (d4 the min analogue)
//! ```
//!
//! subject to the side conditions on the exponents below.

use crate::field::{ExpFamily, Field2, SourceFamily};
use crate::grid::{GridFunction, WeightedGrid};
use crate::operator::apply_a;
use crate::params::{DerivedConstants, HestonParams};
use crate::scalar::Real;
use alloc::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SideConditionError {
    #[error("lower/upper coefficient order violated: {0}")]
    Order(&'static str),
    #[error("integrability constraint violated: {0}")]
    Integrability(&'static str),
    #[error("nonzero constant bound requires r > 0")]
    NeedsPositiveR,
    #[error("nonzero linear bound requires min(kappa, r) > 0")]
    NeedsPositiveKappaR,
    #[error("x-exponential bound requires r > l(r-q)^+ and 0 < l < 1 (got l = {0})")]
    XExponent(f64),
    #[error("y-exponential bound requires 0 < k < min(2 kappa, r/(kappa theta)) (got k = {0})")]
    YExponent(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BarrierError {
    #[error("barrier denominator A(m + phi - 2g) <= 0 at node ({x}, {y})")]
    NonpositiveDenominator { x: f64, y: f64 },
}

/// Input source-bound coefficients plus the derived envelope coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCoeffs {
    pub c0: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub cc0: f64,
    pub cc2: f64,
    pub cc3: f64,
    pub cc4: f64,
    pub k: f64,
    pub kk: f64,
    pub l: f64,
    pub ll: f64,
    pub d0: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub dd0: f64,
    pub dd2: f64,
    pub dd3: f64,
    pub dd4: f64,
}

/// The envelope pair and its source bounds as evaluable closures.
pub struct EnvelopePair {
    pub coeffs: EnvelopeCoeffs,
    pub lower: ExpFamily,
    pub upper: ExpFamily,
    pub lower_source: SourceFamily,
    pub upper_source: SourceFamily,
}

fn check_side_conditions(
    c0: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    l: f64,
    k: f64,
    p: &HestonParams,
) -> Result<(), SideConditionError> {
    if c0 != 0.0 && p.r <= 0.0 {
        return Err(SideConditionError::NeedsPositiveR);
    }
    if c2 != 0.0 && !(p.kappa > 0.0 && p.r > 0.0) {
        return Err(SideConditionError::NeedsPositiveKappaR);
    }
    if c3 != 0.0 {
        let drift = f64::max(p.r - p.q, 0.0);
        if !(l > 0.0 && l < 1.0 && p.r > l * drift) {
            return Err(SideConditionError::XExponent(l));
        }
    }
    if c4 != 0.0 && !(k > 0.0 && k < f64::min(2.0 * p.kappa, p.r / (p.kappa * p.theta))) {
        return Err(SideConditionError::YExponent(k));
    }
    Ok(())
}

fn lower_coeffs(
    c0: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    l: f64,
    k: f64,
    p: &HestonParams,
) -> (f64, f64, f64, f64) {
    let d2 = if c2 != 0.0 { c2 / (p.kappa + p.r) } else { 0.0 };
    let d0 = if c0 != 0.0 || c2 != 0.0 {
        (c0 + c2 * p.kappa * p.theta / (p.kappa + p.r)) / p.r
    } else {
        0.0
    };
    let d3 = if c3 != 0.0 {
        f64::min(c3 / (p.r - l * (p.r - p.q)), 2.0 * c3 / (l * (1.0 - l)))
    } else {
        0.0
    };
    let d4 = if c4 != 0.0 {
        f64::min(c4 / (p.r - p.kappa * p.theta * k), c4 / (k * (p.kappa - k / 2.0)))
    } else {
        0.0
    };
    (d0, d2, d3, d4)
}

fn upper_coeffs(
    c0: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    l: f64,
    k: f64,
    p: &HestonParams,
) -> (f64, f64, f64, f64) {
    let d2 = if c2 != 0.0 { c2 / (p.kappa + p.r) } else { 0.0 };
    let d0 = if c0 != 0.0 || c2 != 0.0 {
        (c0 + c2 * p.kappa * p.theta / (p.kappa + p.r)) / p.r
    } else {
        0.0
    };
    let d3 = if c3 != 0.0 {
        f64::max(c3 / (p.r - l * (p.r - p.q)), 2.0 * c3 / (l * (1.0 - l)))
    } else {
        0.0
    };
    let d4 = if c4 != 0.0 {
        f64::max(c4 / (p.r - p.kappa * p.theta * k), c4 / (k * (p.kappa - k / 2.0)))
    } else {
        0.0
    };
    (d0, d2, d3, d4)
}

/// Builds the envelope pair from source-bound coefficients.
///
/// `lower` holds `(c0, c2, c3, c4)` with exponents `(l, k)`; `upper` the
/// capital analogues with `(L, K)`.
#[allow(clippy::too_many_arguments)]
pub fn derive_envelopes(
    params: &HestonParams,
    consts: &DerivedConstants,
    lower: (f64, f64, f64, f64),
    upper: (f64, f64, f64, f64),
    exps_lower: (f64, f64),
    exps_upper: (f64, f64),
) -> Result<EnvelopePair, SideConditionError> {
    let (c0, c2, c3, c4) = lower;
    let (cc0, cc2, cc3, cc4) = upper;
    let (l, k) = exps_lower;
    let (ll, kk) = exps_upper;

    if c0 > cc0 || c2 > cc2 || c3 > cc3 || c4 > cc4 {
        return Err(SideConditionError::Order("need c_i <= C_i componentwise"));
    }
    if (c3 != 0.0 || cc3 != 0.0) && l > ll {
        return Err(SideConditionError::Order("need l <= L"));
    }
    if (c4 != 0.0 || cc4 != 0.0) && k > kk {
        return Err(SideConditionError::Order("need k <= K"));
    }
    // growth constraints keeping the family square-integrable against w
    if c4 != 0.0 && 2.0 * k >= consts.mu {
        return Err(SideConditionError::Integrability("2k < mu"));
    }
    if cc4 != 0.0 && 2.0 * kk >= consts.mu {
        return Err(SideConditionError::Integrability("2K < mu"));
    }
    if c3 != 0.0 && 2.0 * l >= consts.gamma {
        return Err(SideConditionError::Integrability("2l < gamma"));
    }
    if cc3 != 0.0 && 2.0 * ll >= consts.gamma {
        return Err(SideConditionError::Integrability("2L < gamma"));
    }
    check_side_conditions(c0, c2, c3, c4, l, k, params)?;
    check_side_conditions(cc0, cc2, cc3, cc4, ll, kk, params)?;

    let (d0, d2, d3, d4) = lower_coeffs(c0, c2, c3, c4, l, k, params);
    let (dd0, dd2, dd3, dd4) = upper_coeffs(cc0, cc2, cc3, cc4, ll, kk, params);
    if d0 > dd0 || d2 > dd2 || d3 > dd3 || d4 > dd4 {
        return Err(SideConditionError::Order("derived d_i <= D_i violated"));
    }
    let coeffs = EnvelopeCoeffs {
        c0,
        c2,
        c3,
        c4,
        cc0,
        cc2,
        cc3,
        cc4,
        k,
        kk,
        l,
        ll,
        d0,
        d2,
        d3,
        d4,
        dd0,
        dd2,
        dd3,
        dd4,
    };
    Ok(EnvelopePair {
        coeffs,
        lower: ExpFamily { d0, d2, d3, l, d4, k },
        upper: ExpFamily { d0: dd0, d2: dd2, d3: dd3, l: ll, d4: dd4, k: kk },
        lower_source: SourceFamily { c0, c2, c3, l, c4, k },
        upper_source: SourceFamily { c0: cc0, c2: cc2, c3: cc3, l: ll, c4: cc4, k: kk },
    })
}

/// Worst violations of the admissibility inequalities, sampled on the grid
/// nodes. Zero (up to sign) means the inequality holds on the sample.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    /// max(m - g) over Gamma_1 nodes.
    pub lower_vs_g: f64,
    /// max(g - M) over Gamma_1 nodes.
    pub g_vs_upper: f64,
    /// max(m - M) over all nodes.
    pub lower_vs_upper: f64,
    /// max(Am - AM) over all nodes.
    pub a_lower_vs_a_upper: f64,
    /// max(psi - M) over all nodes.
    pub obstacle_vs_upper: f64,
    /// max(Am - f) over all nodes.
    pub a_lower_vs_f: f64,
    /// max(f - AM) over all nodes.
    pub f_vs_a_upper: f64,
    /// Discrete weighted norms backing the integrability requirements:
    /// ||(1+y)^2 M||, ||(1+y)^2 m||, ||(1+y)^{1/2} M||_{L^4}, ||(1+y) f||.
    pub upper_weighted_l2: f64,
    pub lower_weighted_l2: f64,
    pub upper_weighted_l4: f64,
    pub f_weighted_l2: f64,
    pub all_hold: bool,
}

/// Samples the admissible-envelope inequalities over the grid.
pub fn check_admissible_envelopes<F, G, P>(
    grid: &Arc<WeightedGrid>,
    params: &HestonParams,
    pair: &EnvelopePair,
    f: &F,
    g: &G,
    psi: &P,
) -> AdmissibilityReport
where
    F: Field2 + ?Sized,
    G: Field2 + ?Sized,
    P: Field2 + ?Sized,
{
    let mut rep = AdmissibilityReport {
        lower_vs_g: f64::NEG_INFINITY,
        g_vs_upper: f64::NEG_INFINITY,
        lower_vs_upper: f64::NEG_INFINITY,
        a_lower_vs_a_upper: f64::NEG_INFINITY,
        obstacle_vs_upper: f64::NEG_INFINITY,
        a_lower_vs_f: f64::NEG_INFINITY,
        f_vs_a_upper: f64::NEG_INFINITY,
        upper_weighted_l2: 0.0,
        lower_weighted_l2: 0.0,
        upper_weighted_l4: 0.0,
        f_weighted_l2: 0.0,
        all_hold: false,
    };
    let mut l2_upper = 0.0;
    let mut l2_lower = 0.0;
    let mut l4_upper = 0.0;
    let mut l2_f = 0.0;
    for j in 0..grid.ny() {
        let y = grid.y_nodes[j];
        for i in 0..grid.nx() {
            let x = grid.x_nodes[i];
            let w = grid.node_weight(i, j);
            let m = pair.lower.value(x, y);
            let mm = pair.upper.value(x, y);
            let fam = apply_a(&pair.lower, x, y, params);
            let famm = apply_a(&pair.upper, x, y, params);
            let fv = f.value(x, y);
            rep.lower_vs_upper = rep.lower_vs_upper.max(m - mm);
            rep.a_lower_vs_a_upper = rep.a_lower_vs_a_upper.max(fam - famm);
            rep.obstacle_vs_upper = rep.obstacle_vs_upper.max(psi.value(x, y) - mm);
            rep.a_lower_vs_f = rep.a_lower_vs_f.max(fam - fv);
            rep.f_vs_a_upper = rep.f_vs_a_upper.max(fv - famm);
            if grid.is_dirichlet(i, j) {
                let gv = g.value(x, y);
                rep.lower_vs_g = rep.lower_vs_g.max(m - gv);
                rep.g_vs_upper = rep.g_vs_upper.max(gv - mm);
            }
            let oy = 1.0 + y;
            l2_upper += w * (oy * oy * mm) * (oy * oy * mm);
            l2_lower += w * (oy * oy * m) * (oy * oy * m);
            let half = oy.sqrt() * mm;
            l4_upper += w * half.powi(4);
            l2_f += w * (oy * fv) * (oy * fv);
        }
    }
    rep.upper_weighted_l2 = l2_upper.sqrt();
    rep.lower_weighted_l2 = l2_lower.sqrt();
    rep.upper_weighted_l4 = l4_upper.powf(0.25);
    rep.f_weighted_l2 = l2_f.sqrt();
    let tol = 1e-11;
    rep.all_hold = rep.lower_vs_g <= tol
        && rep.g_vs_upper <= tol
        && rep.lower_vs_upper <= tol
        && rep.a_lower_vs_a_upper <= tol
        && rep.obstacle_vs_upper <= tol
        && rep.a_lower_vs_f <= tol
        && rep.f_vs_a_upper <= tol
        && rep.upper_weighted_l2.is_finite()
        && rep.lower_weighted_l2.is_finite()
        && rep.upper_weighted_l4.is_finite()
        && rep.f_weighted_l2.is_finite();
    rep
}

/// Barrier-hypothesis report. The essential supremum of the ratio
/// `(1+y)(M + phi - 2g)/A(m + phi - 2g)` is estimated by the maximum over
/// grid nodes times a 1.1 safety factor.
#[derive(Debug, Clone)]
pub struct BarrierReport {
    /// min over nodes of `A phi - A g` (nonnegative required).
    pub a_phi_minus_a_g_min: f64,
    /// min over nodes of `A(m + phi) - 2 A g` (positive required).
    pub shifted_source_min: f64,
    /// min over Gamma_1 nodes of `phi - g` (nonnegative required).
    pub phi_minus_g_on_boundary_min: f64,
    /// Estimated essential supremum of the uniqueness ratio.
    pub ratio_estimate: f64,
    pub all_hold: bool,
}

pub fn check_barrier<F, G, P>(
    grid: &Arc<WeightedGrid>,
    params: &HestonParams,
    pair: &EnvelopePair,
    phi: &F,
    g: &G,
    upper: &P,
) -> Result<BarrierReport, BarrierError>
where
    F: Field2 + ?Sized,
    G: Field2 + ?Sized,
    P: Field2 + ?Sized,
{
    let mut a_phi_min = f64::INFINITY;
    let mut shifted_min = f64::INFINITY;
    let mut boundary_min = f64::INFINITY;
    let mut ratio: f64 = 0.0;
    for j in 0..grid.ny() {
        let y = grid.y_nodes[j];
        for i in 0..grid.nx() {
            let x = grid.x_nodes[i];
            let a_phi = apply_a(phi, x, y, params);
            let a_g = apply_a(g, x, y, params);
            let a_m = apply_a(&pair.lower, x, y, params);
            a_phi_min = a_phi_min.min(a_phi - a_g);
            shifted_min = shifted_min.min(a_m + a_phi - 2.0 * a_g);
            if grid.is_dirichlet(i, j) {
                boundary_min = boundary_min.min(phi.value(x, y) - g.value(x, y));
            }
            let denom = a_m + a_phi - 2.0 * a_g;
            if denom <= 0.0 {
                return Err(BarrierError::NonpositiveDenominator { x, y });
            }
            let numer =
                (1.0 + y) * (upper.value(x, y) + phi.value(x, y) - 2.0 * g.value(x, y));
            ratio = ratio.max(numer / denom);
        }
    }
    let ratio_estimate = ratio * 1.1;
    Ok(BarrierReport {
        a_phi_minus_a_g_min: a_phi_min,
        shifted_source_min: shifted_min,
        phi_minus_g_on_boundary_min: boundary_min,
        ratio_estimate,
        all_hold: a_phi_min >= -1e-11 && shifted_min > 0.0 && boundary_min >= -1e-11,
    })
}

/// Barrier recipe for homogeneous boundary data: an upper envelope of the
/// target source bound `c (1+y)(1 + e^{Lx} + e^{Ky})`, with `c` calibrated on
/// the grid so that `A(m + phi) > 0` holds with margin.
pub fn barrier_from_recipe(
    grid: &Arc<WeightedGrid>,
    params: &HestonParams,
    consts: &DerivedConstants,
    pair: &EnvelopePair,
) -> Result<ExpFamily, SideConditionError> {
    let (ll, kk) = pick_barrier_exponents(pair, params, consts);
    // calibrate the source level against the worst deficit of A m
    let mut need: f64 = 1.0;
    for j in 0..grid.ny() {
        let y = grid.y_nodes[j];
        for i in 0..grid.nx() {
            let x = grid.x_nodes[i];
            let am = apply_a(&pair.lower, x, y, params);
            let gauge = (1.0 + y) * (1.0 + (ll * x).exp() + (kk * y).exp());
            need = need.max((1.0 - am) / gauge);
        }
    }
    let c = 1.1 * need;
    let upper = derive_envelopes(
        params,
        consts,
        (0.0, 0.0, 0.0, 0.0),
        (c, c, c, c),
        (ll, kk),
        (ll, kk),
    )?;
    Ok(upper.upper)
}

fn pick_barrier_exponents(
    pair: &EnvelopePair,
    params: &HestonParams,
    consts: &DerivedConstants,
) -> (f64, f64) {
    // reuse the pair's exponents when they already satisfy the upper-side
    // conditions, otherwise take the midpoint of the admissible ranges
    let k_cap = f64::min(2.0 * params.kappa, params.r / (params.kappa * params.theta));
    let k_cap = f64::min(k_cap, consts.mu / 2.0);
    let kk = if pair.coeffs.kk > 0.0 && pair.coeffs.kk < k_cap { pair.coeffs.kk } else { 0.5 * k_cap };
    let drift = f64::max(params.r - params.q, 0.0);
    let mut l_cap = f64::min(1.0, consts.gamma / 2.0);
    if drift > 0.0 {
        l_cap = f64::min(l_cap, params.r / drift);
    }
    let ll = if pair.coeffs.ll > 0.0 && pair.coeffs.ll < l_cap { pair.coeffs.ll } else { 0.5 * l_cap };
    (ll, kk)
}

/// Nodal samples of the worst envelope violations of a solution.
pub fn envelope_violation(
    u: &GridFunction,
    pair: &EnvelopePair,
) -> f64 {
    let grid = u.grid();
    let mut worst: f64 = 0.0;
    for j in 0..grid.ny() {
        let y = grid.y_nodes[j];
        for i in 0..grid.nx() {
            let x = grid.x_nodes[i];
            let v = u.at(i, j);
            worst = worst.max(pair.lower.value(x, y) - v);
            worst = worst.max(v - pair.upper.value(x, y));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};
    use crate::params::derive_constants;

    fn params() -> HestonParams {
        HestonParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 0.0).validate().unwrap()
    }

    #[test]
    fn affine_envelope_matches_proof_example() {
        // r = 1, kappa = 1, theta = 1, c0 = -1, c2 = -2 -> d2 = -1, d0 = -2,
        // and A m = -1 - 2y = n pointwise.
        let p = params();
        let consts = derive_constants(&p);
        let pair = derive_envelopes(
            &p,
            &consts,
            (-1.0, -2.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0),
            (0.0, 0.0),
        )
        .unwrap();
        assert!((pair.coeffs.d2 + 1.0).abs() < 1e-15);
        assert!((pair.coeffs.d0 + 2.0).abs() < 1e-15);
        for (x, y) in [(0.0, 0.1), (1.0, 2.0), (-2.0, 5.0)] {
            let am = apply_a(&pair.lower, x, y, &p);
            let n = pair.lower_source.value(x, y);
            assert!((am - n).abs() < 1e-12, "Am = {am} vs n = {n}");
        }
    }

    #[test]
    fn exponential_coefficients_match_formulas() {
        // D3 = max{1/(1-0.5), 2/(0.5*0.5)} = 8 at C3 = 1, L = 0.5, r = 1, q = 0
        let p = params();
        let mut consts = derive_constants(&p);
        consts.gamma = 1.5; // admit L = 0.5 in the integrability check
        let pair = derive_envelopes(
            &p,
            &consts,
            (0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 1.0, 0.0),
            (0.5, 0.0),
            (0.5, 0.0),
        )
        .unwrap();
        assert!((pair.coeffs.dd3 - 8.0).abs() < 1e-14);

        // D4 = max{1/0.5, 1/0.375} = 8/3 at C4 = 1, K = 0.5, kappa=theta=r=1
        let pair = derive_envelopes(
            &p,
            &consts,
            (0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 1.0),
            (0.0, 0.5),
            (0.0, 0.5),
        )
        .unwrap();
        assert!((pair.coeffs.dd4 - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn side_conditions_enforced() {
        let p = HestonParams::new(1.0, 0.0, 1.0, 1.0, 0.0, 0.0); // r = 0
        let consts = derive_constants(&p);
        let err = derive_envelopes(
            &p,
            &consts,
            (-1.0, 0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0, 0.0),
            (0.0, 0.0),
            (0.0, 0.0),
        );
        assert!(matches!(err, Err(SideConditionError::NeedsPositiveR)));

        // K beyond r/(kappa theta) = 0.2, inside the integrability range
        let p = HestonParams::new(1.0, 0.0, 1.0, 1.0, 0.2, 0.0);
        let consts = derive_constants(&p);
        let err = derive_envelopes(
            &p,
            &consts,
            (0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 1.0),
            (0.0, 0.1),
            (0.0, 0.5),
        );
        assert!(matches!(err, Err(SideConditionError::YExponent(_))));
    }

    #[test]
    fn envelope_sandwich_and_admissibility() {
        let p = params();
        let consts = derive_constants(&p);
        let pair = derive_envelopes(
            &p,
            &consts,
            (-1.0, -0.5, 0.0, -0.1),
            (1.0, 0.5, 0.0, 0.1),
            (0.0, 0.4),
            (0.0, 0.4),
        )
        .unwrap();
        // c_i <= 0 <= C_i forces m <= 0 <= M
        let dom = Domain::rectangle(-2.0, 2.0, 6.0).unwrap();
        let grid = build_grid(dom, 17, 17, 2.0, &consts).unwrap();
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = (grid.x_nodes[i], grid.y_nodes[j]);
                assert!(pair.lower.value(x, y) <= 1e-14);
                assert!(pair.upper.value(x, y) >= -1e-14);
            }
        }
        // f halfway between the source bounds is admissible
        struct MidF(SourceFamily, SourceFamily);
        impl Field2 for MidF {
            fn value(&self, x: f64, y: f64) -> f64 {
                0.5 * (self.0.value(x, y) + self.1.value(x, y))
            }
            fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
                let (a, b) = self.0.gradient(x, y);
                let (c, d) = self.1.gradient(x, y);
                (0.5 * (a + c), 0.5 * (b + d))
            }
            fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
                let (a, b, c) = self.0.hessian(x, y);
                let (d, e, f) = self.1.hessian(x, y);
                (0.5 * (a + d), 0.5 * (b + e), 0.5 * (c + f))
            }
        }
        let f = MidF(pair.lower_source, pair.upper_source);
        let g = crate::field::Constant(0.0);
        let psi = crate::field::Constant(-1.0);
        let rep = check_admissible_envelopes(&grid, &p, &pair, &f, &g, &psi);
        assert!(rep.all_hold, "admissibility failed: {rep:?}");

        // f = Am holds with (near) equality, violation ~ 0
        let rep = check_admissible_envelopes(&grid, &p, &pair, &pair.lower_source, &g, &psi);
        assert!(rep.a_lower_vs_f <= 1e-11);

        // psi above M is flagged with the right magnitude
        struct Above(ExpFamily);
        impl Field2 for Above {
            fn value(&self, x: f64, y: f64) -> f64 {
                self.0.value(x, y) + 1.0
            }
            fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
                self.0.gradient(x, y)
            }
            fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
                self.0.hessian(x, y)
            }
        }
        let psi_bad = Above(pair.upper);
        let rep = check_admissible_envelopes(&grid, &p, &pair, &f, &g, &psi_bad);
        assert!((rep.obstacle_vs_upper - 1.0).abs() < 1e-12);
        assert!(!rep.all_hold);
    }

    #[test]
    fn barrier_recipe_passes_checks() {
        let p = params();
        let consts = derive_constants(&p);
        let pair = derive_envelopes(
            &p,
            &consts,
            (-1.0, -0.5, 0.0, -0.1),
            (1.0, 0.5, 0.0, 0.1),
            (0.0, 0.4),
            (0.0, 0.4),
        )
        .unwrap();
        let dom = Domain::rectangle(-2.0, 2.0, 6.0).unwrap();
        let grid = build_grid(dom, 17, 17, 2.0, &consts).unwrap();
        let phi = barrier_from_recipe(&grid, &p, &consts, &pair).unwrap();
        let g = crate::field::Constant(0.0);
        let rep = check_barrier(&grid, &p, &pair, &phi, &g, &pair.upper).unwrap();
        assert!(rep.all_hold, "{rep:?}");
        assert!(rep.ratio_estimate.is_finite() && rep.ratio_estimate > 0.0);

        // phi = 0 with strictly negative A m must fail with BarrierError
        let zero = crate::field::Constant(0.0);
        let err = check_barrier(&grid, &p, &pair, &zero, &g, &pair.upper);
        assert!(matches!(err, Err(BarrierError::NonpositiveDenominator { .. })));
    }
}
