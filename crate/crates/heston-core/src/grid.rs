//! Computational domains, weighted tensor grids and discrete weighted norms.
//!
//! The measure is `w(x,y) dx dy` with `w = y^(beta-1) e^(-gamma|x| - mu y)`.
//! Grids are tensor products of strictly increasing node sets; the y-nodes
//! are graded toward the degenerate boundary `y = 0` by
//! `y_j = y_max (j/(ny-1))^grading`.
//!
//! Quadrature is assembled cell by cell:
//! - in x, Gauss-Legendre with the factor `e^(-gamma|x|)` folded into the
//!   weights (a grid line is kept at `x = 0`, so `sign(x)` is constant per
//!   cell);
//! - in y, Gauss-Legendre with `y^(beta-1) e^(-mu y)` folded in on cells away
//!   from zero, and a moment-fitted rule on the first cell: the monomial
//!   moments `int_0^h y^(beta-1+k) dy = h^(beta+k)/(beta+k)` are exact, so
//!   the integrable singularity at `y = 0` is never sampled.

use crate::field::Field2;
use crate::params::DerivedConstants;
use crate::scalar::Real;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("domain bounds invalid: x_lo={x_lo}, x_hi={x_hi}, y_max={y_max}")]
    BadDomain { x_lo: f64, x_hi: f64, y_max: f64 },
    #[error("grid needs nx, ny >= 3 (got {nx} x {ny})")]
    TooCoarse { nx: usize, ny: usize },
    #[error("grading exponent must be >= 1, got {0}")]
    BadGrading(f64),
    #[error("weight undefined for y <= 0 (got y = {0})")]
    DomainError(f64),
}

/// Axis-aligned rectangle `(x_lo, x_hi) x (0, y_max)`. The edge `y = 0` is
/// the degenerate portion Gamma_0 (no boundary condition); the two x-sides
/// and the truncation edge `y = y_max` carry Dirichlet data (Gamma_1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_max: f64,
    /// True when the x-sides stand in for an unbounded strip.
    pub x_artificial: bool,
    /// The top edge is always a truncation of `y in (0, inf)`.
    pub y_artificial: bool,
}

impl Domain {
    pub fn rectangle(x_lo: f64, x_hi: f64, y_max: f64) -> Result<Self, GridError> {
        if !(x_lo < x_hi && x_lo.is_finite() && x_hi.is_finite() && y_max > 0.0 && y_max.is_finite())
        {
            return Err(GridError::BadDomain { x_lo, x_hi, y_max });
        }
        Ok(Self { x_lo, x_hi, y_max, x_artificial: false, y_artificial: true })
    }

    /// Truncation of the full half-plane: `y_max = 20 max(1, beta)/mu` and
    /// `|x|` cut where `e^(-gamma|x|) < 1e-10`.
    pub fn truncated_half_plane(consts: &DerivedConstants) -> Self {
        let y_max = 20.0 * f64::max(1.0, consts.beta) / consts.mu;
        let x_cut = (1e10f64).ln() / consts.gamma;
        Self { x_lo: -x_cut, x_hi: x_cut, y_max, x_artificial: true, y_artificial: true }
    }

    /// Infinite strip `(x_lo, x_hi) x (0, inf)` truncated at the default
    /// height.
    pub fn strip(x_lo: f64, x_hi: f64, consts: &DerivedConstants) -> Result<Self, GridError> {
        let y_max = 20.0 * f64::max(1.0, consts.beta) / consts.mu;
        Self::rectangle(x_lo, x_hi, y_max)
    }

    /// Weighted measure of the part of the strip above `y_max` relative to
    /// the whole strip: the mass the truncation throws away.
    pub fn discarded_mass_fraction(&self, consts: &DerivedConstants) -> f64 {
        let full = gamma_lower_ratio_complement(consts.beta, consts.mu * self.y_max);
        full
    }
}

/// Regularized upper-tail ratio `Gamma(beta, z)/Gamma(beta)` by quadrature.
fn gamma_lower_ratio_complement(beta: f64, z: f64) -> f64 {
    // Tail/total of the y-moment integral; crude panel quadrature suffices
    // for a diagnostic.
    let total = crate::cir::gamma(beta);
    let mut tail = 0.0;
    let mut lo = z;
    for _ in 0..200 {
        let hi = lo * 1.25 + 1.0;
        tail += gl_panel(lo, hi, |t| t.powf(beta - 1.0) * (-t).exp());
        lo = hi;
        if lo > z + 60.0 + 10.0 * beta {
            break;
        }
    }
    tail / total
}

fn gl_panel<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let mut s = 0.0;
    for (t, w) in GL12.iter() {
        let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
        s += w * f(x);
    }
    s * 0.5 * (b - a)
}

/// 12-point Gauss-Legendre rule on [-1, 1].
pub(crate) const GL12: [(f64, f64); 12] = [
    (-0.9815606342467192, 0.04717533638651183),
    (-0.9041172563704748, 0.10693932599531843),
    (-0.7699026741943047, 0.16007832854334622),
    (-0.5873179542866175, 0.20316742672306592),
    (-0.3678314989981802, 0.23349253653835481),
    (-0.1252334085114689, 0.24914704581340277),
    (0.1252334085114689, 0.24914704581340277),
    (0.3678314989981802, 0.23349253653835481),
    (0.5873179542866175, 0.20316742672306592),
    (0.7699026741943047, 0.16007832854334622),
    (0.9041172563704748, 0.10693932599531843),
    (0.9815606342467192, 0.04717533638651183),
];

/// 6-point Gauss-Legendre rule on [-1, 1].
pub(crate) const GL6: [(f64, f64); 6] = [
    (-0.9324695142031521, 0.17132449237917036),
    (-0.6612093864662645, 0.3607615730481386),
    (-0.2386191860831969, 0.46791393457269104),
    (0.2386191860831969, 0.46791393457269104),
    (0.6612093864662645, 0.3607615730481386),
    (0.9324695142031521, 0.17132449237917036),
];

/// Per-cell quadrature with the 1-D weight factor folded into the weights:
/// `int_cell F(t) w1(t) dt ~= sum_q weights[q] * F(points[q])`.
#[derive(Debug, Clone)]
pub struct CellRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Moment-fitted rule on `[0, h]` for the weight `y^(beta-1)`: exact for
/// polynomials up to degree `npts-1` against the singular factor.
fn first_cell_rule(h: f64, beta: f64, mu: f64) -> CellRule {
    const NPTS: usize = 9;
    // Chebyshev points on [0, 1], then solve the Vandermonde system
    // sum_i w_i s_i^k = 1/(beta+k) (the scaled monomial moments).
    let mut s = [0.0f64; NPTS];
    for (i, si) in s.iter_mut().enumerate() {
        let t = core::f64::consts::PI * (i as f64) / ((NPTS - 1) as f64);
        *si = 0.5 * (1.0 - t.cos());
    }
    let mut a = [[0.0f64; NPTS]; NPTS];
    let mut rhs = [0.0f64; NPTS];
    for k in 0..NPTS {
        for i in 0..NPTS {
            a[k][i] = s[i].powi(k as i32);
        }
        rhs[k] = 1.0 / (beta + k as f64);
    }
    solve_dense(&mut a, &mut rhs);
    let scale = h.powf(beta);
    let mut points = Vec::with_capacity(NPTS);
    let mut weights = Vec::with_capacity(NPTS);
    for i in 0..NPTS {
        let y = s[i] * h;
        points.push(y);
        weights.push(rhs[i] * scale * (-mu * y).exp());
    }
    CellRule { points, weights }
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense<const N: usize>(a: &mut [[f64; N]; N], b: &mut [f64; N]) {
    for col in 0..N {
        let mut piv = col;
        for row in col + 1..N {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for row in col + 1..N {
            let f = a[row][col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..N).rev() {
        let mut s = b[col];
        for k in col + 1..N {
            s -= a[col][k] * b[k];
        }
        b[col] = s / a[col][col];
    }
}

fn y_cell_rule(lo: f64, hi: f64, beta: f64, mu: f64) -> CellRule {
    if lo == 0.0 {
        return first_cell_rule(hi, beta, mu);
    }
    let mut points = Vec::with_capacity(GL12.len());
    let mut weights = Vec::with_capacity(GL12.len());
    for (t, w) in GL12.iter() {
        let y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
        points.push(y);
        weights.push(w * 0.5 * (hi - lo) * y.powf(beta - 1.0) * (-mu * y).exp());
    }
    CellRule { points, weights }
}

/// The y-direction cell rule, shared with the 1-D CIR assembly.
pub(crate) fn y_rule_for_cell(lo: f64, hi: f64, beta: f64, mu: f64) -> CellRule {
    y_cell_rule(lo, hi, beta, mu)
}

fn x_cell_rule(lo: f64, hi: f64, gamma: f64) -> CellRule {
    let mut points = Vec::with_capacity(GL6.len());
    let mut weights = Vec::with_capacity(GL6.len());
    for (t, w) in GL6.iter() {
        let x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
        points.push(x);
        weights.push(w * 0.5 * (hi - lo) * (-gamma * x.abs()).exp());
    }
    CellRule { points, weights }
}

/// Tensor grid with the quadrature tables of the weighted measure. Node
/// ordering is y-major: `index = j * nx + i`.
#[derive(Debug, Clone)]
pub struct WeightedGrid {
    pub domain: Domain,
    pub consts: DerivedConstants,
    pub x_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    pub grading: f64,
    /// `int phi_i(x) e^(-gamma|x|) dx` per x-node.
    pub x_hat_weights: Vec<f64>,
    /// `int phi_j(y) y^(beta-1) e^(-mu y) dy` per y-node.
    pub y_hat_weights: Vec<f64>,
    pub x_rules: Vec<CellRule>,
    pub y_rules: Vec<CellRule>,
}

/// The weight `w(x, y) = y^(beta-1) e^(-gamma|x| - mu y)`.
pub fn weight(x: f64, y: f64, consts: &DerivedConstants) -> Result<f64, GridError> {
    if y <= 0.0 {
        return Err(GridError::DomainError(y));
    }
    Ok(y.powf(consts.beta - 1.0) * (-consts.gamma * x.abs() - consts.mu * y).exp())
}

/// Builds the tensor grid: uniform in x (with a node snapped to `x = 0` when
/// the domain straddles it), y graded toward zero.
pub fn build_grid(
    domain: Domain,
    nx: usize,
    ny: usize,
    grading: f64,
    consts: &DerivedConstants,
) -> Result<Arc<WeightedGrid>, GridError> {
    if nx < 3 || ny < 3 {
        return Err(GridError::TooCoarse { nx, ny });
    }
    if !(grading >= 1.0 && grading.is_finite()) {
        return Err(GridError::BadGrading(grading));
    }
    let mut x_nodes = Vec::with_capacity(nx);
    let hx = (domain.x_hi - domain.x_lo) / (nx - 1) as f64;
    for i in 0..nx {
        x_nodes.push(domain.x_lo + hx * i as f64);
    }
    *x_nodes.last_mut().unwrap() = domain.x_hi;
    if domain.x_lo < 0.0 && domain.x_hi > 0.0 {
        let mut nearest = 0;
        for (i, &x) in x_nodes.iter().enumerate() {
            if x.abs() < x_nodes[nearest].abs() {
                nearest = i;
            }
        }
        if nearest > 0 && nearest + 1 < nx {
            x_nodes[nearest] = 0.0;
        }
    }

    let mut y_nodes = Vec::with_capacity(ny);
    for j in 0..ny {
        let s = j as f64 / (ny - 1) as f64;
        y_nodes.push(domain.y_max * s.powf(grading));
    }
    y_nodes[0] = 0.0;
    *y_nodes.last_mut().unwrap() = domain.y_max;

    let x_rules: Vec<CellRule> = x_nodes
        .windows(2)
        .map(|wnd| x_cell_rule(wnd[0], wnd[1], consts.gamma))
        .collect();
    let y_rules: Vec<CellRule> = y_nodes
        .windows(2)
        .map(|wnd| y_cell_rule(wnd[0], wnd[1], consts.beta, consts.mu))
        .collect();

    let x_hat_weights = hat_weights(&x_nodes, &x_rules);
    let y_hat_weights = hat_weights(&y_nodes, &y_rules);

    Ok(Arc::new(WeightedGrid {
        domain,
        consts: *consts,
        x_nodes,
        y_nodes,
        grading,
        x_hat_weights,
        y_hat_weights,
        x_rules,
        y_rules,
    }))
}

fn hat_weights(nodes: &[f64], rules: &[CellRule]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for (c, rule) in rules.iter().enumerate() {
        let (lo, hi) = (nodes[c], nodes[c + 1]);
        let h = hi - lo;
        for (&t, &wt) in rule.points.iter().zip(rule.weights.iter()) {
            let s = (t - lo) / h;
            w[c] += wt * (1.0 - s);
            w[c + 1] += wt * s;
        }
    }
    w
}

impl WeightedGrid {
    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn ny(&self) -> usize {
        self.y_nodes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nx() * self.ny()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn node_xy(&self, idx: usize) -> (f64, f64) {
        let nx = self.nx();
        (self.x_nodes[idx % nx], self.y_nodes[idx / nx])
    }

    /// Quadrature weight of the nodal hat function, `int phi_ij w dx dy`.
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        self.x_hat_weights[i] * self.y_hat_weights[j]
    }

    /// Total weighted volume of the (truncated) domain.
    pub fn total_weight(&self) -> f64 {
        let sx: f64 = self.x_hat_weights.iter().sum();
        let sy: f64 = self.y_hat_weights.iter().sum();
        sx * sy
    }

    /// True for nodes on the Dirichlet portion Gamma_1 (x-sides and top).
    pub fn is_dirichlet(&self, i: usize, j: usize) -> bool {
        i == 0 || i + 1 == self.nx() || j + 1 == self.ny()
    }

    /// Index of the y-row nearest a requested level (never row 0).
    pub fn nearest_row(&self, y_level: f64) -> usize {
        let mut best = 1;
        for j in 1..self.ny() {
            if (self.y_nodes[j] - y_level).abs() < (self.y_nodes[best] - y_level).abs() {
                best = j;
            }
        }
        best
    }
}

/// Nodal values over a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<WeightedGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(grid: Arc<WeightedGrid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.num_nodes());
        Self { grid, values }
    }

    pub fn constant(grid: Arc<WeightedGrid>, c: f64) -> Self {
        let n = grid.num_nodes();
        Self::from_values(grid, vec![c; n])
    }

    pub fn from_fn<F: FnMut(f64, f64) -> f64>(grid: Arc<WeightedGrid>, mut f: F) -> Self {
        let mut values = Vec::with_capacity(grid.num_nodes());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.x_nodes[i], grid.y_nodes[j]));
            }
        }
        Self::from_values(grid, values)
    }

    pub fn from_field<F: Field2 + ?Sized>(grid: Arc<WeightedGrid>, f: &F) -> Self {
        Self::from_fn(grid, |x, y| f.value(x, y))
    }

    pub fn grid(&self) -> &Arc<WeightedGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node_index(i, j)]
    }

    /// Second-order finite difference in x along row `j` (one-sided at the
    /// ends, exact for quadratics on nonuniform spacing).
    pub fn dx(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let nx = g.nx();
        let row = |ii: usize| self.values[g.node_index(ii, j)];
        deriv3(&g.x_nodes, nx, i, row)
    }

    pub fn dy(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let ny = g.ny();
        let col = |jj: usize| self.values[g.node_index(i, jj)];
        deriv3(&g.y_nodes, ny, j, col)
    }

    pub fn dxx(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let row = |ii: usize| self.values[g.node_index(ii, j)];
        second3(&g.x_nodes, g.nx(), i, row)
    }

    pub fn dyy(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let col = |jj: usize| self.values[g.node_index(i, jj)];
        second3(&g.y_nodes, g.ny(), j, col)
    }

    pub fn dxy(&self, i: usize, j: usize) -> f64 {
        // d/dy of the x-derivative, with the same 3-point stencils.
        let g = &self.grid;
        let ny = g.ny();
        let dd = |jj: usize| self.dx(i, jj);
        deriv3(&g.y_nodes, ny, j, dd)
    }
}

/// 3-point first derivative on nonuniform spacing, one-sided at the ends.
fn deriv3<F: Fn(usize) -> f64>(nodes: &[f64], n: usize, i: usize, f: F) -> f64 {
    if n < 3 {
        let h = nodes[1] - nodes[0];
        return (f(1) - f(0)) / h;
    }
    let c = i.clamp(1, n - 2);
    let (x0, x1, x2) = (nodes[c - 1], nodes[c], nodes[c + 1]);
    let (f0, f1, f2) = (f(c - 1), f(c), f(c + 1));
    let x = nodes[i];
    // derivative of the quadratic through the three points, at x
    let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
    f0 * l0 + f1 * l1 + f2 * l2
}

/// 3-point second derivative (constant over the stencil's quadratic).
fn second3<F: Fn(usize) -> f64>(nodes: &[f64], n: usize, i: usize, f: F) -> f64 {
    if n < 3 {
        return 0.0;
    }
    let c = i.clamp(1, n - 2);
    let (x0, x1, x2) = (nodes[c - 1], nodes[c], nodes[c + 1]);
    let (f0, f1, f2) = (f(c - 1), f(c), f(c + 1));
    2.0 * (f0 / ((x0 - x1) * (x0 - x2)) + f1 / ((x1 - x0) * (x1 - x2)) + f2 / ((x2 - x0) * (x2 - x1)))
}

/// `||u||_{L^2(w)}` by nodal quadrature.
pub fn norm_l2w(u: &GridFunction) -> f64 {
    weighted_l2(u, |_x, _y| 1.0)
}

/// `|| m(x,y)^{1/2} u ||_{L^2(w)}` for a pointwise factor `m >= 0`.
pub fn weighted_l2<F: Fn(f64, f64) -> f64>(u: &GridFunction, m: F) -> f64 {
    let g = u.grid();
    let mut s = 0.0;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = u.at(i, j);
            s += g.node_weight(i, j) * m(g.x_nodes[i], g.y_nodes[j]) * v * v;
        }
    }
    s.sqrt()
}

/// First-order weighted norm
/// `||u||^2 = int (y |Du|^2 + (1+y) u^2) w`.
pub fn norm_h1w(u: &GridFunction) -> f64 {
    let g = u.grid();
    let mut s = 0.0;
    for j in 0..g.ny() {
        let y = g.y_nodes[j];
        for i in 0..g.nx() {
            let w = g.node_weight(i, j);
            let v = u.at(i, j);
            let ux = u.dx(i, j);
            let uy = u.dy(i, j);
            s += w * (y * (ux * ux + uy * uy) + (1.0 + y) * v * v);
        }
    }
    s.sqrt()
}

/// Second-order weighted norm
/// `||u||^2 = int (y^2 |D^2 u|^2 + (1+y)^2 |Du|^2 + (1+y) u^2) w`,
/// with `|D^2 u|^2 = u_xx^2 + 2 u_xy^2 + u_yy^2`.
pub fn norm_h2w(u: &GridFunction) -> f64 {
    let g = u.grid();
    let mut s = 0.0;
    for j in 0..g.ny() {
        let y = g.y_nodes[j];
        for i in 0..g.nx() {
            let w = g.node_weight(i, j);
            let v = u.at(i, j);
            let ux = u.dx(i, j);
            let uy = u.dy(i, j);
            let uxx = u.dxx(i, j);
            let uxy = u.dxy(i, j);
            let uyy = u.dyy(i, j);
            s += w
                * (y * y * (uxx * uxx + 2.0 * uxy * uxy + uyy * uyy)
                    + (1.0 + y) * (1.0 + y) * (ux * ux + uy * uy)
                    + (1.0 + y) * v * v);
        }
    }
    s.sqrt()
}

/// Row integral `int |y^beta (rho u_x + sigma u_y)| e^(-gamma|x|) dx` at the
/// grid row nearest `y_level`; the weighted Neumann trace diagnostic.
pub fn trace_neumann(
    u: &GridFunction,
    rho: f64,
    sigma: f64,
    y_level: f64,
) -> f64 {
    let g = u.grid();
    let j = g.nearest_row(y_level);
    let ybeta = g.y_nodes[j].powf(g.consts.beta);
    let mut s = 0.0;
    for i in 0..g.nx() {
        let t = ybeta * (rho * u.dx(i, j) + sigma * u.dy(i, j));
        s += g.x_hat_weights[i] * t.abs();
    }
    s
}

/// Trace values at the dyadic levels `y_max 2^{-k}`, `k = k_lo..=k_hi`.
pub fn trace_levels(
    u: &GridFunction,
    rho: f64,
    sigma: f64,
    k_lo: u32,
    k_hi: u32,
) -> Vec<(f64, f64)> {
    let g = u.grid();
    let mut out = Vec::new();
    let mut last_row = usize::MAX;
    for k in k_lo..=k_hi {
        let level = g.domain.y_max * (0.5f64).powi(k as i32);
        let row = g.nearest_row(level);
        if row == last_row || row == 0 {
            continue;
        }
        last_row = row;
        out.push((g.y_nodes[row], trace_neumann(u, rho, sigma, g.y_nodes[row])));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_constants, HestonParams};

    fn consts_for(beta_sel: f64) -> DerivedConstants {
        // kappa = theta chosen so beta = 2 kappa theta / sigma^2 hits the target
        let kappa = 1.0;
        let sigma = 1.0;
        let theta = beta_sel * sigma * sigma / (2.0 * kappa);
        derive_constants(&HestonParams::new(sigma, 0.0, kappa, theta, 1.0, 0.0))
    }

    #[test]
    fn weight_examples() {
        let mut c = consts_for(1.0);
        c.gamma = 0.25;
        assert!((weight(0.0, 1.0, &c).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        let c2 = consts_for(2.0);
        // beta = 2: w(0, y) = y e^{-mu y}
        let w = weight(0.0, 1.0, &c2).unwrap();
        assert!((w - (-c2.mu).exp()).abs() < 1e-15);
        // beta = 1/2 diverges like y^{-1/2}
        let c05 = consts_for(0.5);
        let w = weight(0.0, 1e-8, &c05).unwrap();
        let expect = 1e4 * (-c05.mu * 1e-8f64).exp();
        assert!((w - expect).abs() / expect < 1e-6);
        assert!(weight(0.0, 0.0, &c05).is_err());
        assert!(weight(0.0, -1.0, &c05).is_err());
    }

    #[test]
    fn total_weight_matches_closed_form() {
        // O = (-1,1) x (0, 20), beta = 1, gamma = 0.25, mu = 2:
        // integral = [2(1 - e^{-0.25})/0.25] * [(1 - e^{-40})/2]
        let mut c = consts_for(1.0);
        c.gamma = 0.25;
        let dom = Domain::rectangle(-1.0, 1.0, 20.0).unwrap();
        let g = build_grid(dom, 33, 33, 2.0, &c).unwrap();
        let expect = 2.0 * (1.0 - (-0.25f64).exp()) / 0.25 * (1.0 - (-40.0f64).exp()) / 2.0;
        let got = g.total_weight();
        assert!((got - expect).abs() / expect < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn total_weight_singular_beta() {
        // beta = 1/2: y-integral = int_0^Y y^{-1/2} e^{-mu y} dy
        let c = consts_for(0.5);
        let dom = Domain::rectangle(0.0, 1.0, 10.0).unwrap();
        let g = build_grid(dom, 17, 49, 2.0, &c).unwrap();
        // reference via substitution y = t^2: 2 int_0^sqrt(Y) e^{-mu t^2} dt
        let mut reference = 0.0;
        let tmax = (10.0f64).sqrt();
        let n = 20000;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64 * tmax;
            reference += 2.0 * (-c.mu * t * t).exp() * tmax / n as f64;
        }
        let xf = (1.0 - (-c.gamma).exp()) / c.gamma;
        let expect = reference * xf;
        let got = g.total_weight();
        assert!((got - expect).abs() / expect < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn refining_grid_is_consistent() {
        let c = consts_for(1.5);
        let dom = Domain::rectangle(-2.0, 2.0, 8.0).unwrap();
        let coarse = build_grid(dom, 17, 17, 2.0, &c).unwrap().total_weight();
        let fine = build_grid(dom, 33, 33, 2.0, &c).unwrap().total_weight();
        assert!((coarse - fine).abs() / fine < 1e-7);
    }

    #[test]
    fn uniform_grading_gives_uniform_spacing() {
        let c = consts_for(1.0);
        let dom = Domain::rectangle(0.0, 1.0, 3.0).unwrap();
        let g = build_grid(dom, 4, 4, 1.0, &c).unwrap();
        let d0 = g.y_nodes[1] - g.y_nodes[0];
        for w in g.y_nodes.windows(2) {
            assert!((w[1] - w[0] - d0).abs() < 1e-12);
        }
    }

    #[test]
    fn norms_of_constants_and_linear() {
        let c = consts_for(1.0);
        let dom = Domain::rectangle(-1.0, 1.0, 20.0).unwrap();
        let g = build_grid(dom, 65, 129, 2.0, &c).unwrap();
        let vol = g.total_weight();
        let one = GridFunction::constant(g.clone(), 1.0);
        assert!((norm_l2w(&one).powi(2) - vol).abs() / vol < 1e-10);
        assert!(norm_l2w(&GridFunction::constant(g.clone(), 0.0)) == 0.0);

        // ||1||_{H1}^2 = int (1+y) w; closed form via y-moments for beta=1:
        // int_0^Y (1+y) e^{-mu y} dy * x-factor
        let mu = c.mu;
        let ymax = g.domain.y_max;
        let iy0 = (1.0 - (-mu * ymax).exp()) / mu;
        let iy1 = (1.0 - (-mu * ymax).exp() * (1.0 + mu * ymax)) / (mu * mu);
        let xf = 2.0 * (1.0 - (-c.gamma).exp()) / c.gamma;
        let expect = (iy0 + iy1) * xf;
        let got = norm_h1w(&one).powi(2);
        assert!((got - expect).abs() / expect < 1e-8, "{got} vs {expect}");

        // u = y: ||u||_{L2w}^2 -> int y^2 y^{beta-1} e^{-mu y} (Gamma-moment);
        // the nodal norm lumps y^2 at the nodes, so the match is at the
        // O(h^2) interpolation level and must tighten by ~4x per refinement
        let iy2 = {
            // int_0^Y y^2 e^{-mu y} dy, beta = 1
            let e = (-mu * ymax).exp();
            (2.0 - e * (mu * mu * ymax * ymax + 2.0 * mu * ymax + 2.0)) / (mu * mu * mu)
        };
        let expect = iy2 * xf;
        let err_at = |ny: usize| {
            let gg = build_grid(dom, 65, ny, 2.0, &c).unwrap();
            let uy = GridFunction::from_fn(gg, |_x, y| y);
            (norm_l2w(&uy).powi(2) - expect).abs() / expect
        };
        let coarse = err_at(129);
        let fine = err_at(257);
        assert!(coarse < 4e-3, "coarse error {coarse:.3e}");
        assert!(fine < 0.35 * coarse, "no quadratic decay: {coarse:.3e} -> {fine:.3e}");
    }

    #[test]
    fn trace_of_linear_profile() {
        // u = y: trace integrand sigma * y^beta * int e^{-gamma|x|}
        let c = consts_for(1.0);
        let dom = Domain::rectangle(-1.0, 1.0, 4.0).unwrap();
        let g = build_grid(dom, 33, 65, 2.0, &c).unwrap();
        let u = GridFunction::from_fn(g.clone(), |_x, y| y);
        let xf = 2.0 * (1.0 - (-c.gamma).exp()) / c.gamma;
        let y_level = g.y_nodes[10];
        let got = trace_neumann(&u, 0.0, 1.0, y_level);
        let expect = y_level * xf; // sigma = 1, beta = 1
        assert!((got - expect).abs() / expect < 1e-9);
        let constant = GridFunction::constant(g, 2.0);
        assert!(trace_neumann(&constant, 0.0, 1.0, y_level) < 1e-14);
    }

    #[test]
    fn node_ordering_is_y_major() {
        let c = consts_for(1.0);
        let dom = Domain::rectangle(0.0, 1.0, 1.0).unwrap();
        let g = build_grid(dom, 3, 4, 1.0, &c).unwrap();
        assert_eq!(g.node_index(2, 0), 2);
        assert_eq!(g.node_index(0, 1), 3);
        let (x, y) = g.node_xy(5);
        assert_eq!((x, y), (g.x_nodes[2], g.y_nodes[1]));
    }
}
