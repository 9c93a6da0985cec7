//! Flows of mollified velocity fields, composition, and the commutator
//! between the nonlocal capillary operator and a change of variables.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lp::{chi, dyadic_block, hybrid_norm, DyadicPartition, HybridForm};
use crate::report::{Cell, ReportTable};
use crate::spectral::{PeriodicGrid, SpectralField};

pub type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Gap allowed between the two Jacobian determinant computations.
pub const JACOBIAN_TOL: f64 = 1e-6;

/// One term `Re(coef_a e^{i xi.x})` of a velocity field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityMode {
    pub xi: [f64; 2],
    pub coef: [Complex64; 2],
}

/// `v(t, x) = (1 + slope t) (c + L x + sum_k Re(a_k e^{i xi_k.x}))`.
///
/// The linear part `L x` is not periodic; it is meant for flows whose
/// behaviour is checked pointwise, not for composition with periodic fields.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvectingVelocity {
    pub dim: usize,
    pub constant: [f64; 2],
    pub linear: Mat2,
    pub modes: Vec<VelocityMode>,
    pub time_slope: f64,
    /// Mollification level already applied, if any.
    pub level: Option<i32>,
}

impl AdvectingVelocity {
    pub fn zero(dim: usize) -> Self {
        AdvectingVelocity { dim, constant: [0.0; 2], linear: [[0.0; 2]; 2], modes: vec![], time_slope: 0.0, level: None }
    }

    pub fn constant(dim: usize, c: [f64; 2]) -> Self {
        AdvectingVelocity { constant: c, ..Self::zero(dim) }
    }

    pub fn linear(dim: usize, l: Mat2) -> Self {
        AdvectingVelocity { linear: l, ..Self::zero(dim) }
    }

    /// `omega (-x2, x1)`.
    pub fn rotation(omega: f64) -> Self {
        Self::linear(2, [[0.0, -omega], [omega, 0.0]])
    }

    /// Periodic shear: `(a sin x2, 0)` in 2D, compressible `a sin x` in 1D.
    pub fn sine_shear(dim: usize, a: f64) -> Self {
        let m = if dim == 1 {
            VelocityMode { xi: [1.0, 0.0], coef: [Complex64::new(0.0, -a), Complex64::new(0.0, 0.0)] }
        } else {
            VelocityMode { xi: [0.0, 1.0], coef: [Complex64::new(0.0, -a), Complex64::new(0.0, 0.0)] }
        };
        AdvectingVelocity { modes: vec![m], ..Self::zero(dim) }
    }

    /// Analytic extension of a sampled field (one mode per Fourier coefficient).
    pub fn from_field(f: &SpectralField) -> Result<Self> {
        let g = f.grid();
        if f.ncomp() != g.dim() {
            return Err(Error::Shape { expected: g.dim(), got: f.ncomp() });
        }
        let s = 1.0 / (g.len() as f64).sqrt();
        let mut out = Self::zero(g.dim());
        for idx in 0..g.len() {
            let c: Vec<Complex64> = f.coeffs().iter().map(|c| c[idx] * s).collect();
            if c.iter().all(|v| v.norm() == 0.0) {
                continue;
            }
            if c.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite("velocity coefficient".into()));
            }
            let mut coef = [Complex64::new(0.0, 0.0); 2];
            coef[..c.len()].copy_from_slice(&c);
            out.modes.push(VelocityMode { xi: g.xi(idx), coef });
        }
        Ok(out)
    }

    pub fn with_time_slope(mut self, slope: f64) -> Self {
        self.time_slope = slope;
        self
    }

    pub fn plus_constant(&self, c: [f64; 2]) -> Self {
        let mut o = self.clone();
        o.constant[0] += c[0];
        o.constant[1] += c[1];
        o
    }

    /// `S_{j-1} v`: modes weighted by `chi(|xi| / 2^{j-1})`; constant and
    /// linear parts pass unchanged.
    pub fn mollified(&self, j: i32) -> Self {
        let scale = 2f64.powi(j - 1);
        let modes = self
            .modes
            .iter()
            .filter_map(|m| {
                let r = m.xi[0].hypot(m.xi[1]);
                let w = chi(r / scale);
                (w > 0.0).then(|| VelocityMode { xi: m.xi, coef: [m.coef[0] * w, m.coef[1] * w] })
            })
            .collect();
        AdvectingVelocity { modes, level: Some(j), ..self.clone() }
    }

    fn profile(&self, t: f64) -> f64 {
        1.0 + self.time_slope * t
    }

    /// Velocity and its gradient `D[a][b] = d_b v_a` at `(t, x)`.
    pub fn eval(&self, t: f64, x: [f64; 2]) -> ([f64; 2], Mat2) {
        let d = self.dim;
        let mut v = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for a in 0..d {
            v[a] = self.constant[a];
            for b in 0..d {
                v[a] += self.linear[a][b] * x[b];
                g[a][b] = self.linear[a][b];
            }
        }
        for m in &self.modes {
            let e = Complex64::from_polar(1.0, m.xi[0] * x[0] + m.xi[1] * x[1]);
            for a in 0..d {
                let z = m.coef[a] * e;
                v[a] += z.re;
                for b in 0..d {
                    // d_b Re(c e^{i xi x}) = Re(i xi_b c e^{i xi x}) = -xi_b Im(.)
                    g[a][b] -= m.xi[b] * z.im;
                }
            }
        }
        let s = self.profile(t);
        for a in 0..2 {
            v[a] *= s;
            for b in 0..2 {
                g[a][b] *= s;
            }
        }
        (v, g)
    }

    /// `sup_x |Dv(0, x)|` (spectral norm) sampled on a grid refined twice.
    pub fn grad_sup(&self, grid: &PeriodicGrid) -> f64 {
        let fine = PeriodicGrid::new(grid.dim(), 2 * grid.n(), grid.length()).expect("valid grid");
        (0..fine.len()).map(|i| mat_norm(self.eval(0.0, fine.coords(i)).1)).fold(0.0, f64::max)
    }

    /// `V(t) = int_0^t |Dv|_inf`.
    pub fn v_integral(&self, grid: &PeriodicGrid, t: f64) -> f64 {
        // |1 + b s| integrated exactly
        let b = self.time_slope;
        let prim = |s: f64| s + 0.5 * b * s * s;
        let int = if b == 0.0 || !(-1.0 / b > 0.0 && -1.0 / b < t) {
            prim(t).abs()
        } else {
            let r = -1.0 / b;
            prim(r).abs() + (prim(t) - prim(r)).abs()
        };
        self.grad_sup(grid) * int
    }
}

fn mat_mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut r = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

fn mat_det(a: Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

fn mat_inv(a: Mat2) -> Mat2 {
    let d = mat_det(a);
    [[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]]
}

/// Spectral norm of a 2x2 matrix.
pub fn mat_norm(a: Mat2) -> f64 {
    let f2: f64 = a.iter().flatten().map(|v| v * v).sum();
    let d = mat_det(a);
    (0.5 * (f2 + (f2 * f2 - 4.0 * d * d).max(0.0).sqrt())).sqrt()
}

#[derive(Debug, Clone, Copy)]
struct Aug {
    x: [f64; 2],
    jac: Mat2,
    div: f64,
}

fn aug_rhs(v: &AdvectingVelocity, t: f64, s: &Aug, dir: f64) -> Aug {
    let (vel, g) = v.eval(t, s.x);
    let dj = mat_mul(g, s.jac);
    Aug {
        x: [dir * vel[0], dir * vel[1]],
        jac: [[dir * dj[0][0], dir * dj[0][1]], [dir * dj[1][0], dir * dj[1][1]]],
        div: dir * (g[0][0] + g[1][1]),
    }
}

fn aug_axpy(s: &Aug, h: f64, k: &Aug) -> Aug {
    let mut o = *s;
    for a in 0..2 {
        o.x[a] += h * k.x[a];
        for b in 0..2 {
            o.jac[a][b] += h * k.jac[a][b];
        }
    }
    o.div += h * k.div;
    o
}

/// RK4 on the characteristic system augmented with `D psi` and
/// `int div v`, from time `t0` to `t1` (either order).
fn integrate_point(v: &AdvectingVelocity, x: [f64; 2], t0: f64, t1: f64, substeps: usize) -> Aug {
    let mut s = Aug { x, jac: IDENTITY, div: 0.0 };
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let h = (t1 - t0).abs() / substeps as f64;
    for n in 0..substeps {
        let t = t0 + dir * n as f64 * h;
        let tm = t + dir * 0.5 * h;
        let k1 = aug_rhs(v, t, &s, dir);
        let k2 = aug_rhs(v, tm, &aug_axpy(&s, 0.5 * h, &k1), dir);
        let k3 = aug_rhs(v, tm, &aug_axpy(&s, 0.5 * h, &k2), dir);
        let k4 = aug_rhs(v, t + dir * h, &aug_axpy(&s, h, &k3), dir);
        let mut acc = aug_axpy(&s, h / 6.0, &k1);
        acc = aug_axpy(&acc, h / 3.0, &k2);
        acc = aug_axpy(&acc, h / 3.0, &k3);
        s = aug_axpy(&acc, h / 6.0, &k4);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// `psi_t` and `psi_t^{-1}` sampled at the grid points.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub grid: PeriodicGrid,
    pub forward: Vec<[f64; 2]>,
    pub inverse: Vec<[f64; 2]>,
    /// `D psi_t` at each grid point.
    pub jacobian: Vec<Mat2>,
    /// `int_0^t div v(s, psi_s(x)) ds`.
    pub div_integral: Vec<f64>,
    pub t: f64,
    /// `int_0^t |Dv|_inf`.
    pub v_integral: f64,
    pub level: Option<i32>,
    pub substeps: usize,
}

pub fn integrate_flow(v: &AdvectingVelocity, grid: &PeriodicGrid, t: f64, substeps: usize) -> Result<FlowMap> {
    if substeps == 0 {
        return Err(Error::Domain("substeps must be >= 1".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    if v.dim != grid.dim() {
        return Err(Error::Shape { expected: grid.dim(), got: v.dim });
    }
    let n = grid.len();
    let mut forward = Vec::with_capacity(n);
    let mut inverse = Vec::with_capacity(n);
    let mut jacobian = Vec::with_capacity(n);
    let mut div_integral = Vec::with_capacity(n);
    for idx in 0..n {
        let x = grid.coords(idx);
        let f = integrate_point(v, x, 0.0, t, substeps);
        let b = integrate_point(v, x, t, 0.0, substeps);
        let finite = f.x.iter().chain(b.x.iter()).chain(f.jac.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("flow at grid point {idx}")));
        }
        forward.push(f.x);
        inverse.push(b.x);
        jacobian.push(f.jac);
        div_integral.push(f.div);
    }
    Ok(FlowMap {
        grid: grid.clone(),
        forward,
        inverse,
        jacobian,
        div_integral,
        t,
        v_integral: v.v_integral(grid, t),
        level: v.level,
        substeps,
    })
}

impl FlowMap {
    /// `psi_t^{-1}` at arbitrary points.
    pub fn inverse_at(&self, v: &AdvectingVelocity, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points.iter().map(|&x| integrate_point(v, x, self.t, 0.0, self.substeps).x).collect()
    }

    /// `psi + a`, keeping the Jacobian data.
    pub fn translated(&self, a: [f64; 2]) -> FlowMap {
        let mut o = self.clone();
        o.forward.iter_mut().for_each(|p| {
            p[0] += a[0];
            p[1] += a[1];
        });
        o
    }

    /// Smallest `C` with `|D psi^{+-1} - I| <= e^{C V} - 1` on the grid.
    pub fn flow_constant(&self) -> f64 {
        let d = self.grid.dim();
        let mut worst: f64 = 0.0;
        for j in &self.jacobian {
            for m in [*j, mat_inv(*j)] {
                let mut e = m;
                for a in 0..2 {
                    e[a][a] -= 1.0;
                }
                if d == 1 {
                    e[1][1] = 0.0;
                }
                worst = worst.max(mat_norm(e));
            }
        }
        if self.v_integral == 0.0 {
            return 0.0;
        }
        worst.ln_1p() / self.v_integral
    }

    pub fn max_jacobian_norm(&self) -> f64 {
        self.jacobian.iter().flat_map(|j| [mat_norm(*j), mat_norm(mat_inv(*j))]).fold(0.0, f64::max)
    }

    /// Smallness condition `e^{2 C V} - 1 <= 1/2` with the fitted `C`.
    pub fn small_enough(&self) -> bool {
        (2.0 * self.flow_constant() * self.v_integral).exp_m1() <= 0.5
    }

    fn points(&self, dir: Direction) -> &[[f64; 2]] {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        }
    }
}

/// `(det D psi by central differences, exp(int div v))` at each grid point.
pub fn jacobian_det(flow: &FlowMap, v: &AdvectingVelocity) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = flow.grid.dim();
    let h = 1e-5;
    let mut fd = Vec::with_capacity(flow.grid.len());
    for idx in 0..flow.grid.len() {
        let x = flow.grid.coords(idx);
        let mut m = IDENTITY;
        for b in 0..d {
            let mut xp = x;
            let mut xm = x;
            xp[b] += h;
            xm[b] -= h;
            let p = integrate_point(v, xp, 0.0, flow.t, flow.substeps).x;
            let q = integrate_point(v, xm, 0.0, flow.t, flow.substeps).x;
            for a in 0..d {
                m[a][b] = (p[a] - q[a]) / (2.0 * h);
            }
        }
        fd.push(mat_det(m));
    }
    let formula: Vec<f64> = flow.div_integral.iter().map(|a| a.exp()).collect();
    let gap = fd.iter().zip(&formula).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    if !(gap <= JACOBIAN_TOL) {
        return Err(Error::Resolution(format!("Jacobian determinant gap {gap:.3e} exceeds {JACOBIAN_TOL:e}")));
    }
    Ok((fd, formula))
}

/// `f o psi^{+-1}` by trigonometric evaluation at the displaced points.
pub fn compose(f: &SpectralField, flow: &FlowMap, dir: Direction) -> Result<SpectralField> {
    if f.grid() != &flow.grid {
        return Err(Error::GridMismatch);
    }
    let vals = f.eval_at(flow.points(dir));
    SpectralField::from_physical(&flow.grid, &vals)
}

/// `L_eps(f_j) o psi - L_eps(f_j o psi)` with `f_j = Delta_j f`.
pub fn capillary_commutator_ii(f: &SpectralField, j: i32, flow: &FlowMap, eps: f64) -> Result<SpectralField> {
    let fj = dyadic_block(f, j);
    let first = compose(&fj.capillary_op(eps)?, flow, Direction::Forward)?;
    let second = compose(&fj, flow, Direction::Forward)?.capillary_op(eps)?;
    first.sub(&second)
}

fn sample_matrix_product(grad_at_psi: &[Vec<f64>], flow: &FlowMap, f: impl Fn(Mat2) -> Mat2) -> Vec<Vec<f64>> {
    // row vector (grad q o psi)^T times f(D psi)
    let d = flow.grid.dim();
    let mut out = vec![vec![0.0; flow.grid.len()]; d];
    for (i, j) in flow.jacobian.iter().enumerate() {
        let m = f(*j);
        for b in 0..d {
            out[b][i] = (0..d).map(|a| grad_at_psi[a][i] * m[a][b]).sum();
        }
    }
    out
}

/// `I_j = L_eps(g_j)` with `g_j = (grad q_j o psi)(I - D psi)`.
pub fn capillary_remainder_ij(q: &SpectralField, j: i32, flow: &FlowMap, eps: f64) -> Result<SpectralField> {
    if q.grid() != &flow.grid {
        return Err(Error::GridMismatch);
    }
    let gq = dyadic_block(q, j).gradient().eval_at(&flow.forward);
    let g = sample_matrix_product(&gq, flow, |m| [[1.0 - m[0][0], -m[0][1]], [-m[1][0], 1.0 - m[1][1]]]);
    SpectralField::from_physical(&flow.grid, &g)?.capillary_op(eps)
}

/// `L_eps(grad q_j) o psi - L_eps(grad (q_j o psi))`, the full capillary
/// defect, computed directly.
pub fn capillary_defect(q: &SpectralField, j: i32, flow: &FlowMap, eps: f64) -> Result<SpectralField> {
    let qj = dyadic_block(q, j);
    let first = compose(&qj.gradient().capillary_op(eps)?, flow, Direction::Forward)?;
    let second = compose(&qj, flow, Direction::Forward)?.gradient().capillary_op(eps)?;
    first.sub(&second)
}

/// Remainders of the change of variables applied to `(u_j, q_j)`:
/// `R1 = div u~ - (div u) o psi`, `R2 = (grad q) o psi - grad q~`,
/// `R3 = (A u) o psi - A u~`, where `~` denotes composition with `psi`.
pub fn system_remainders(
    u_j: &SpectralField,
    q_j: &SpectralField,
    flow: &FlowMap,
    mu: f64,
    lambda: f64,
) -> Result<(SpectralField, SpectralField, SpectralField)> {
    let grid = &flow.grid;
    if u_j.grid() != grid || q_j.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    if u_j.ncomp() != d {
        return Err(Error::Shape { expected: d, got: u_j.ncomp() });
    }
    // Tr(Du(psi) (D psi - I))
    let du: Vec<Vec<Vec<f64>>> = (0..d).map(|a| u_j.component(a).gradient().eval_at(&flow.forward)).collect();
    let mut r1 = vec![0.0; grid.len()];
    for (i, j) in flow.jacobian.iter().enumerate() {
        for a in 0..d {
            for b in 0..d {
                let e = j[b][a] - if a == b { 1.0 } else { 0.0 };
                r1[i] += du[a][b][i] * e;
            }
        }
    }
    let r1 = SpectralField::from_physical(grid, &[r1])?;
    // (I - D psi^T) (grad q o psi)
    let gq = q_j.gradient().eval_at(&flow.forward);
    let r2 = sample_matrix_product(&gq, flow, |m| [[1.0 - m[0][0], -m[0][1]], [-m[1][0], 1.0 - m[1][1]]]);
    let r2 = SpectralField::from_physical(grid, &r2)?;
    let au = compose(&u_j.lame(mu, lambda)?, flow, Direction::Forward)?;
    let r3 = au.sub(&compose(u_j, flow, Direction::Forward)?.lame(mu, lambda)?)?;
    Ok((r1, r2, r3))
}

/// `sum_j rho_j` with `rho_j = |II'_j| / ((V + e^{2V} - 1) 2^{-j sigma} |f|)`,
/// `|f|` the multiplier-form hybrid norm, for each named flow.
pub const COMMUTATOR_COLUMNS: [&str; 8] = ["flow", "eps", "t", "V", "flow_C", "small", "max_II", "sum_rho"];

pub fn verify_commutator_bound(
    f: &SpectralField,
    sigma: f64,
    eps: f64,
    flows: &[(String, FlowMap)],
) -> Result<ReportTable> {
    let grid = f.grid();
    let norm = hybrid_norm(f, sigma, eps, HybridForm::Multiplier)?;
    let part = DyadicPartition::for_grid(grid);
    let mut table = ReportTable::new(&COMMUTATOR_COLUMNS);
    for (name, flow) in flows {
        let v = flow.v_integral;
        let denom_v = v + (2.0 * v).exp_m1();
        let mut sum = 0.0;
        let mut max_ii: f64 = 0.0;
        for j in part.blocks() {
            let ii = capillary_commutator_ii(f, j, flow, eps)?.l2_norm();
            max_ii = max_ii.max(ii);
            if denom_v > 0.0 && norm > 0.0 {
                sum += ii / (denom_v * 2f64.powf(-(j as f64) * sigma) * norm);
            }
        }
        table.push(vec![
            Cell::Text(name.clone()),
            eps.into(),
            flow.t.into(),
            v.into(),
            flow.flow_constant().into(),
            Cell::Text(flow.small_enough().to_string()),
            max_ii.into(),
            sum.into(),
        ]);
    }
    Ok(table)
}

/// `max | |psi^{-1}(x) - psi^{-1}(x - eps y)|^2 / (eps^2 |y|^2) - 1 |` over
/// the sampled `(x, y)` pairs.
pub fn flow_ratio_deviation(flow: &FlowMap, v: &AdvectingVelocity, pairs: &[([f64; 2], [f64; 2])], eps: f64) -> f64 {
    let xs: Vec<[f64; 2]> = pairs.iter().map(|p| p.0).collect();
    let shifted: Vec<[f64; 2]> = pairs.iter().map(|(x, y)| [x[0] - eps * y[0], x[1] - eps * y[1]]).collect();
    let a = flow.inverse_at(v, &xs);
    let b = flow.inverse_at(v, &shifted);
    pairs
        .iter()
        .zip(a.iter().zip(&b))
        .map(|((_, y), (p, q))| {
            let num = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            let den = eps * eps * (y[0] * y[0] + y[1] * y[1]);
            (num / den - 1.0).abs()
        })
        .fold(0.0, f64::max)
}
