//! Galerkin assembly of the bilinear form on bilinear tensor-product
//! elements, the weighted mass forms, and the discrete identity checks.
//!
//! The form assembled is
//!
//! ```text
//! a(u,v) = 1/2 int (u_x v_x + rs u_y v_x + rs u_x v_y + s^2 u_y v_y) y w
//!        - (gamma/2) int (u_x + rs u_y) v sign(x) y w
//!        - int (a1 y + b1) u_x v w + int r u v w,        rs = rho*sigma,
//! ```
//!
//! integrated with the grid's per-cell weighted quadrature. No boundary
//! condition is imposed along the degenerate edge `y = 0`; the Dirichlet
//! rows of `Gamma_1` are flagged and eliminated at solve time.
//!
//! With `upwind` set, the operator matrix is instead a monotone
//! finite-difference discretization of the strong form (full upwinding of
//! the drift terms, transverse lumping), scaled row-wise by the lumped mass.
//! That variant perturbs the Galerkin form at O(h) but gives an M-matrix for
//! `rho = 0`, which makes the discrete comparison principles exact.

use crate::field::Field2;
use crate::grid::WeightedGrid;
use crate::linalg::Csr;
use crate::operator::{apply_a, apply_commutator};
use crate::params::{DerivedConstants, HestonParams};
use crate::scalar::{sign, Real};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("degenerate cell at ({0}, {1})")]
    DegenerateCell(usize, usize),
    #[error("grid was built for beta = {grid_beta}, parameters give beta = {param_beta}")]
    ConstantsMismatch { grid_beta: f64, param_beta: f64 },
}

/// Assembled discrete operator and companion forms.
pub struct DiscreteForm {
    pub grid: Arc<WeightedGrid>,
    pub params: HestonParams,
    pub consts: DerivedConstants,
    /// Bilinear form matrix (row = test function index).
    pub matrix_a: Csr,
    /// Gram matrix of the first-order weighted norm,
    /// `int (y Du.Dv + (1+y) u v) w`.
    pub matrix_v: Csr,
    /// `int u v w`.
    pub matrix_mass: Csr,
    /// `int (1+y) u v w`.
    pub matrix_mass_1py: Csr,
    /// Mass form used on right-hand sides and in the penalty term:
    /// consistent for Galerkin, lumped (diagonal) for the upwind variant.
    pub mass_rhs: Csr,
    /// `(1+y)`-mass used in the coercive shift and source shifts, lumped in
    /// the upwind variant so the shifted matrix stays an M-matrix.
    pub mass_1py_rhs: Csr,
    /// Node classification: true on the Dirichlet portion Gamma_1.
    pub dirichlet: Vec<bool>,
    pub upwind: bool,
    /// Set when `b1 != 0`: the Garding constants then require the Dirichlet
    /// structure of the continuous argument and the energy checks are
    /// restricted to the normalized case.
    pub b1_warning: bool,
}

impl DiscreteForm {
    /// `a_lambda = a + lambda ((1+y) u, v)` (lumped shift in the upwind
    /// variant).
    pub fn matrix_a_lambda(&self, lambda: f64) -> Csr {
        self.matrix_a.add_scaled(&self.mass_1py_rhs, lambda)
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    /// Energy inner products through the assembled Gram matrices.
    pub fn v_norm_sq(&self, u: &[f64]) -> f64 {
        self.matrix_v.quadratic_form(u, u)
    }

    pub fn h_norm_sq(&self, u: &[f64]) -> f64 {
        self.matrix_mass.quadratic_form(u, u)
    }

    pub fn h_1py_norm_sq(&self, u: &[f64]) -> f64 {
        self.matrix_mass_1py.quadratic_form(u, u)
    }
}

struct LocalBasis {
    n: [f64; 4],
    nx: [f64; 4],
    ny: [f64; 4],
}

#[inline]
fn local_basis(x: f64, y: f64, xl: f64, xr: f64, yl: f64, yr: f64) -> LocalBasis {
    let hx = xr - xl;
    let hy = yr - yl;
    let sx = (x - xl) / hx;
    let sy = (y - yl) / hy;
    let lx = [1.0 - sx, sx];
    let ly = [1.0 - sy, sy];
    let dlx = [-1.0 / hx, 1.0 / hx];
    let dly = [-1.0 / hy, 1.0 / hy];
    let mut b = LocalBasis { n: [0.0; 4], nx: [0.0; 4], ny: [0.0; 4] };
    for a in 0..4 {
        let (ax, ay) = (a & 1, a >> 1);
        b.n[a] = lx[ax] * ly[ay];
        b.nx[a] = dlx[ax] * ly[ay];
        b.ny[a] = lx[ax] * dly[ay];
    }
    b
}

pub fn assemble(
    grid: Arc<WeightedGrid>,
    params: &HestonParams,
    upwind: bool,
) -> Result<DiscreteForm, AssemblyError> {
    let consts = grid.consts;
    let param_beta = params.beta();
    if (consts.beta - param_beta).abs() > 1e-10 * (1.0 + param_beta) {
        return Err(AssemblyError::ConstantsMismatch { grid_beta: consts.beta, param_beta });
    }
    let nx = grid.nx();
    let ny = grid.ny();
    let n = grid.num_nodes();
    let rs = params.rho * params.sigma;
    let s2 = params.sigma * params.sigma;
    let gamma = consts.gamma;
    let (a1, b1) = (consts.a1, consts.b1);

    let cap = 16 * (nx - 1) * (ny - 1);
    let mut trip_a = Vec::with_capacity(cap);
    let mut trip_v = Vec::with_capacity(cap);
    let mut trip_m = Vec::with_capacity(cap);
    let mut trip_m1py = Vec::with_capacity(cap);

    for jc in 0..ny - 1 {
        let (yl, yr) = (grid.y_nodes[jc], grid.y_nodes[jc + 1]);
        if !(yr > yl) {
            return Err(AssemblyError::DegenerateCell(0, jc));
        }
        let yrule = &grid.y_rules[jc];
        for ic in 0..nx - 1 {
            let (xl, xr) = (grid.x_nodes[ic], grid.x_nodes[ic + 1]);
            if !(xr > xl) {
                return Err(AssemblyError::DegenerateCell(ic, jc));
            }
            let xrule = &grid.x_rules[ic];
            let mut loc_a = [[0.0f64; 4]; 4];
            let mut loc_v = [[0.0f64; 4]; 4];
            let mut loc_m = [[0.0f64; 4]; 4];
            let mut loc_m1 = [[0.0f64; 4]; 4];
            for (&xq, &wx) in xrule.points.iter().zip(xrule.weights.iter()) {
                let sg = sign(xq);
                for (&yq, &wy) in yrule.points.iter().zip(yrule.weights.iter()) {
                    let w = wx * wy;
                    let bas = local_basis(xq, yq, xl, xr, yl, yr);
                    for ta in 0..4 {
                        for tb in 0..4 {
                            let (na, nxa, nya) = (bas.n[ta], bas.nx[ta], bas.ny[ta]);
                            let (nb, nxb, nyb) = (bas.n[tb], bas.nx[tb], bas.ny[tb]);
                            let mass = nb * na;
                            loc_m[ta][tb] += w * mass;
                            loc_m1[ta][tb] += w * (1.0 + yq) * mass;
                            loc_v[ta][tb] +=
                                w * (yq * (nxb * nxa + nyb * nya) + (1.0 + yq) * mass);
                            loc_a[ta][tb] += w
                                * (0.5
                                    * yq
                                    * (nxb * nxa + rs * (nyb * nxa + nxb * nya) + s2 * nyb * nya)
                                    - 0.5 * gamma * (nxb + rs * nyb) * na * sg * yq
                                    - (a1 * yq + b1) * nxb * na
                                    + params.r * mass);
                        }
                    }
                }
            }
            for ta in 0..4 {
                let gi = grid.node_index(ic + (ta & 1), jc + (ta >> 1));
                for tb in 0..4 {
                    let gj = grid.node_index(ic + (tb & 1), jc + (tb >> 1));
                    trip_a.push((gi, gj, loc_a[ta][tb]));
                    trip_v.push((gi, gj, loc_v[ta][tb]));
                    trip_m.push((gi, gj, loc_m[ta][tb]));
                    trip_m1py.push((gi, gj, loc_m1[ta][tb]));
                }
            }
        }
    }

    let matrix_v = Csr::from_triplets(n, &mut trip_v);
    let matrix_mass = Csr::from_triplets(n, &mut trip_m);
    let matrix_mass_1py = Csr::from_triplets(n, &mut trip_m1py);
    let matrix_a = if upwind {
        assemble_upwind(&grid, params)
    } else {
        Csr::from_triplets(n, &mut trip_a)
    };
    let diag_of = |m: &Csr| -> Csr {
        let lm = m.lumped();
        let mut t: Vec<(usize, usize, f64)> =
            lm.iter().copied().enumerate().map(|(i, v)| (i, i, v)).collect();
        Csr::from_triplets(n, &mut t)
    };
    let (mass_rhs, mass_1py_rhs) = if upwind {
        (diag_of(&matrix_mass), diag_of(&matrix_mass_1py))
    } else {
        (matrix_mass.clone(), matrix_mass_1py.clone())
    };

    let mut dirichlet = vec![false; n];
    for j in 0..ny {
        for i in 0..nx {
            if grid.is_dirichlet(i, j) {
                dirichlet[grid.node_index(i, j)] = true;
            }
        }
    }

    Ok(DiscreteForm {
        grid,
        params: *params,
        consts,
        matrix_a,
        matrix_v,
        matrix_mass,
        matrix_mass_1py,
        mass_rhs,
        mass_1py_rhs,
        dirichlet,
        upwind,
        b1_warning: b1.abs() > 1e-12 * (1.0 + params.r.abs() + params.q.abs()),
    })
}

/// Monotone finite-difference operator rows scaled by the lumped mass.
/// Drift terms fully upwinded; the mixed derivative (present for rho != 0)
/// stays centered and is the one term that can break the M-matrix sign
/// pattern.
fn assemble_upwind(grid: &WeightedGrid, params: &HestonParams) -> Csr {
    let nx = grid.nx();
    let ny = grid.ny();
    let n = grid.num_nodes();
    let rs = params.rho * params.sigma;
    let s2 = params.sigma * params.sigma;
    let mut trip = Vec::with_capacity(9 * n);
    for j in 0..ny {
        for i in 0..nx {
            let row = grid.node_index(i, j);
            let wl = grid.node_weight(i, j);
            if grid.is_dirichlet(i, j) {
                trip.push((row, row, wl));
                continue;
            }
            let x = grid.x_nodes[i];
            let y = grid.y_nodes[j];
            let mut push = |col: usize, v: f64| trip.push((row, col, wl * v));
            // reaction
            push(row, params.r);
            // x-diffusion and x-drift (i is interior since x-edges are Dirichlet)
            let hxm = x - grid.x_nodes[i - 1];
            let hxp = grid.x_nodes[i + 1] - x;
            let dxx = y / 2.0;
            push(grid.node_index(i - 1, j), -dxx * 2.0 / (hxm * (hxm + hxp)));
            push(row, dxx * 2.0 / (hxm * hxp));
            push(grid.node_index(i + 1, j), -dxx * 2.0 / (hxp * (hxm + hxp)));
            let cx = -(params.r - params.q - y / 2.0); // Au contains +cx u_x
            if cx > 0.0 {
                push(row, cx / hxm);
                push(grid.node_index(i - 1, j), -cx / hxm);
            } else {
                push(row, -cx / hxp);
                push(grid.node_index(i + 1, j), cx / hxp);
            }
            // y-direction: j = 0 is the degenerate natural row (pure drift)
            let cy = -params.kappa * (params.theta - y);
            if j == 0 {
                let hyp = grid.y_nodes[1] - y;
                // cy < 0 at y = 0: forward difference
                push(row, -cy / hyp);
                push(grid.node_index(i, 1), cy / hyp);
            } else {
                let hym = y - grid.y_nodes[j - 1];
                let hyp = grid.y_nodes[j + 1] - y;
                let dyy = s2 * y / 2.0;
                push(grid.node_index(i, j - 1), -dyy * 2.0 / (hym * (hym + hyp)));
                push(row, dyy * 2.0 / (hym * hyp));
                push(grid.node_index(i, j + 1), -dyy * 2.0 / (hyp * (hym + hyp)));
                if cy > 0.0 {
                    push(row, cy / hym);
                    push(grid.node_index(i, j - 1), -cy / hym);
                } else {
                    push(row, -cy / hyp);
                    push(grid.node_index(i, j + 1), cy / hyp);
                }
                // mixed derivative, centered
                if rs != 0.0 {
                    let cxy = -y * rs; // coefficient of u_xy in Au
                    let dx = grid.x_nodes[i + 1] - grid.x_nodes[i - 1];
                    let dy = grid.y_nodes[j + 1] - grid.y_nodes[j - 1];
                    let c = cxy / (dx * dy);
                    push(grid.node_index(i + 1, j + 1), c);
                    push(grid.node_index(i - 1, j - 1), c);
                    push(grid.node_index(i + 1, j - 1), -c);
                    push(grid.node_index(i - 1, j + 1), -c);
                }
            }
        }
    }
    Csr::from_triplets(n, &mut trip)
}

/// Quadrature of `(A u, v)_{L^2(w)}` with the closures' analytic derivatives.
pub fn inner_product_au_v<F: Field2 + ?Sized, G: Field2 + ?Sized>(
    grid: &WeightedGrid,
    params: &HestonParams,
    u: &F,
    v: &G,
) -> f64 {
    let mut acc = 0.0;
    for jc in 0..grid.ny() - 1 {
        let yrule = &grid.y_rules[jc];
        for ic in 0..grid.nx() - 1 {
            let xrule = &grid.x_rules[ic];
            for (&xq, &wx) in xrule.points.iter().zip(xrule.weights.iter()) {
                for (&yq, &wy) in yrule.points.iter().zip(yrule.weights.iter()) {
                    acc += wx * wy * apply_a(u, xq, yq, params) * v.value(xq, yq);
                }
            }
        }
    }
    acc
}

/// Defect `|(A u, v)_{L^2(w),h} - a_h(u_I, v_I)|` for smooth closures
/// vanishing near Gamma_1. The first term is cell quadrature with analytic
/// derivatives, the second the assembled matrix on nodal interpolants, so
/// the defect measures the consistency of the whole assembly chain and must
/// shrink under refinement.
pub fn check_integration_by_parts<F: Field2 + ?Sized, G: Field2 + ?Sized>(
    form: &DiscreteForm,
    u: &F,
    v: &G,
) -> f64 {
    let strong = inner_product_au_v(&form.grid, &form.params, u, v);
    let ui = crate::grid::GridFunction::from_field(form.grid.clone(), u);
    let vi = crate::grid::GridFunction::from_field(form.grid.clone(), v);
    let weak = form.matrix_a.quadratic_form(ui.values(), vi.values());
    (strong - weak).abs()
}

/// Result of the energy/commutator identity check.
#[derive(Debug, Clone, Copy)]
pub struct CommutatorCheck {
    /// `|a(phi u, phi u) - a(u, phi^2 u) - rhs|` with the no-derivative rhs.
    pub defect: f64,
    /// `|([A, phi]u, phi u)|` by quadrature.
    pub commutator_ip: f64,
    /// `C ||y^{1/2}(|Dphi| + |Dphi|^{1/2}) u||^2` with the explicit constant.
    pub commutator_bound: f64,
    pub bound_ok: bool,
}

/// Checks the bilinear-form energy identity
///
/// ```text
/// a(phi u, phi u) - a(u, phi^2 u)
///   = 1/2 (u, y phi_x^2 u) + rs (u, y phi_x phi_y u) + s^2/2 (u, y phi_y^2 u)
///   - gamma/2 (u, y phi (phi_x + rs phi_y) sign(x) u)
///   - (u, (a1 y + b1) phi phi_x u),
/// ```
///
/// a pointwise-algebraic identity of the four form terms (no derivatives of
/// `u` on the right). The left side uses the assembled matrices on nodal
/// interpolants, the right side cell quadrature of the closures, so the
/// defect converges at the interpolation rate. Also evaluates the commutator
/// inner product `([A, phi]u, phi u)` and its bound; the bound constant
/// assumes the normalized case `b1 = 0`.
pub fn commutator_identity_check<F: Field2 + ?Sized, G: Field2 + ?Sized>(
    form: &DiscreteForm,
    u: &F,
    phi: &G,
) -> CommutatorCheck {
    let grid = &form.grid;
    let p = &form.params;
    let consts = &form.consts;
    let rs = p.rho * p.sigma;
    let s2 = p.sigma * p.sigma;

    let phiu = crate::grid::GridFunction::from_fn(grid.clone(), |x, y| {
        phi.value(x, y) * u.value(x, y)
    });
    let ui = crate::grid::GridFunction::from_field(grid.clone(), u);
    let phi2u = crate::grid::GridFunction::from_fn(grid.clone(), |x, y| {
        let ph = phi.value(x, y);
        ph * ph * u.value(x, y)
    });
    let lhs = form.matrix_a.quadratic_form(phiu.values(), phiu.values())
        - form.matrix_a.quadratic_form(ui.values(), phi2u.values());

    let mut rhs = 0.0;
    let mut comm_ip = 0.0;
    let mut bound_quad = 0.0;
    let mut sup_phi: f64 = 0.0;
    for jc in 0..grid.ny() - 1 {
        let yrule = &grid.y_rules[jc];
        for ic in 0..grid.nx() - 1 {
            let xrule = &grid.x_rules[ic];
            for (&xq, &wx) in xrule.points.iter().zip(xrule.weights.iter()) {
                let sg = sign(xq);
                for (&yq, &wy) in yrule.points.iter().zip(yrule.weights.iter()) {
                    let w = wx * wy;
                    let uvq = u.value(xq, yq);
                    let phq = phi.value(xq, yq);
                    let (phx, phy) = phi.gradient(xq, yq);
                    sup_phi = sup_phi.max(phq.abs());
                    rhs += w
                        * uvq
                        * uvq
                        * (0.5 * yq * phx * phx
                            + rs * yq * phx * phy
                            + 0.5 * s2 * yq * phy * phy
                            - 0.5 * consts.gamma * yq * phq * (phx + rs * phy) * sg
                            - (consts.a1 * yq + consts.b1) * phq * phx);
                    comm_ip += w * apply_commutator(u, phi, xq, yq, p) * phq * uvq;
                    let dphi = phx.hypot(phy);
                    let fac = dphi + dphi.sqrt();
                    bound_quad += w * yq * fac * fac * uvq * uvq;
                }
            }
        }
    }
    let c_bound = 0.5 + rs.abs() + 0.5 * s2
        + 0.5 * consts.gamma * (1.0 + rs.abs()) * sup_phi.max(1.0)
        + consts.a1.abs() * sup_phi.max(1.0);
    let commutator_bound = c_bound * bound_quad;
    CommutatorCheck {
        defect: (lhs - rhs).abs(),
        commutator_ip: comm_ip.abs(),
        commutator_bound,
        bound_ok: comm_ip.abs() <= commutator_bound * (1.0 + 1e-6) + 1e-14,
    }
}
