//! Exact per-mode evolution of the linearized system
//!
//! ```text
//! d/dt q + |xi| v = F,   d/dt v - |xi| c(xi) q + nu |xi|^2 v = G_v,
//! d/dt w + mu |xi|^2 w = G_w,
//! ```
//!
//! with `c(xi) = p + kappa |xi|^2 h(eps^2 |xi|^2)` for the nonlocal model and
//! `c(xi) = p + kappa |xi|^2` for the local one.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lp::{phi, C0_IN, C0_OUT};
use crate::lp::TimeSeriesField;
use crate::quadrature::{gauss_legendre, trapezoid};
use crate::report::{Cell, ReportTable};
use crate::spectral::{PeriodicGrid, SpectralField};
use crate::thresholds::{h_unchecked, solve_x_eps, solve_y_eps, PhysicalParams, ThresholdReport, DEFAULT_TOL};

/// `|g| below this selects the Jordan-limit formula.
pub const DEGENERATE_WINDOW: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapillaryModel {
    /// Gaussian-kernel operator of width `eps`.
    Nonlocal { eps: f64 },
    /// `kappa Lap q`.
    Local,
}

impl CapillaryModel {
    /// Pressure plus capillary stiffness `c(xi)`.
    pub fn stiffness(&self, xi2: f64, params: &PhysicalParams) -> f64 {
        match *self {
            CapillaryModel::Nonlocal { eps } => params.p + params.kappa * xi2 * h_unchecked(eps * eps * xi2),
            CapillaryModel::Local => params.p + params.kappa * xi2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Oscillatory,
    Degenerate,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSymbol {
    pub xi_norm: f64,
    pub params: PhysicalParams,
    pub model: CapillaryModel,
    /// `c(xi)`.
    pub stiffness: f64,
    /// `g = 1 - 4c / (nu^2 |xi|^2)`; equals `g_eps(|xi|^2)` for the nonlocal model.
    pub g: f64,
    pub discriminant: f64,
    pub regime: Regime,
    /// `S = sqrt(-g)` or `R = sqrt(g)`; zero in the degenerate window.
    pub root: f64,
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
}

/// Symbol of the nonlocal system with `eps = params.epsilon`.
pub fn mode_symbol(xi_norm: f64, params: &PhysicalParams) -> Result<ModeSymbol> {
    mode_symbol_with(xi_norm, params, CapillaryModel::Nonlocal { eps: params.epsilon })
}

pub fn mode_symbol_with(xi_norm: f64, params: &PhysicalParams, model: CapillaryModel) -> Result<ModeSymbol> {
    if !(xi_norm > 0.0 && xi_norm.is_finite()) {
        return Err(Error::Domain(format!("|xi| must be > 0, got {xi_norm}")));
    }
    let nu = params.nu();
    let xi2 = xi_norm * xi_norm;
    let c = model.stiffness(xi2, params);
    let g = 1.0 - 4.0 * c / (nu * nu * xi2);
    let a = 0.5 * nu * xi2;
    let (regime, root, lp, lm) = if g.abs() < DEGENERATE_WINDOW {
        let l0 = Complex64::new(-a, 0.0);
        (Regime::Degenerate, 0.0, l0, l0)
    } else if g < 0.0 {
        let s = (-g).sqrt();
        (Regime::Oscillatory, s, Complex64::new(-a, -a * s), Complex64::new(-a, a * s))
    } else {
        let r = g.sqrt();
        (Regime::Real, r, Complex64::new(-a * (1.0 + r), 0.0), Complex64::new(-slow_rate(c, nu, r), 0.0))
    };
    Ok(ModeSymbol {
        xi_norm,
        params: *params,
        model,
        stiffness: c,
        g,
        discriminant: nu * nu * xi2 * xi2 * g,
        regime,
        root,
        lambda_plus: lp,
        lambda_minus: lm,
    })
}

impl ModeSymbol {
    /// `A(xi)` acting on `(q, v)`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let x = self.xi_norm;
        [[0.0, -x], [self.stiffness * x, -self.params.nu() * x * x]]
    }

    /// `e^{t A(xi)}` in the regime-appropriate closed form.
    pub fn propagator(&self, t: f64) -> [[f64; 2]; 2] {
        let x = self.xi_norm;
        let a = 0.5 * self.params.nu() * x * x;
        let c = self.stiffness;
        // e^{tA} = cc I + k (A - lambda0 I), lambda0 = -a
        let (cc, k) = match self.regime {
            Regime::Oscillatory => {
                let th = a * self.root * t;
                let e = (-a * t).exp();
                (e * th.cos(), e * t * sinc(th))
            }
            Regime::Real => {
                let r = self.root;
                let ep = (-a * (1.0 + r) * t).exp();
                let em = (-slow_rate(c, self.params.nu(), r) * t).exp();
                // (e+ - e-) / R, stable as R -> 0
                let d = em * (-2.0 * a * r * t).exp_m1() / r;
                (0.5 * (ep + em), -d / (2.0 * a))
            }
            Regime::Degenerate => {
                let e = (-a * t).exp();
                let z = self.g * a * a * t * t;
                (e * (1.0 + z / 2.0 + z * z / 24.0), e * t * (1.0 + z / 6.0 + z * z / 120.0))
            }
        };
        [[cc + a * k, -x * k], [c * x * k, cc - a * k]]
    }

    pub fn heat(&self, t: f64) -> f64 {
        (-self.params.mu * self.xi_norm * self.xi_norm * t).exp()
    }
}

/// `a (1 - R)` written as `2c / (nu (1 + R))`, free of cancellation as `R -> 1`.
fn slow_rate(c: f64, nu: f64, r: f64) -> f64 {
    2.0 * c / (nu * (1.0 + r))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub q_hat: Complex64,
    pub v_hat: Complex64,
    pub w_hat: Vec<Complex64>,
}

pub fn evolve_mode(state0: &ModeState, sym: &ModeSymbol, t: f64) -> Result<ModeState> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    let p = sym.propagator(t);
    let h = sym.heat(t);
    Ok(ModeState {
        q_hat: state0.q_hat * p[0][0] + state0.v_hat * p[0][1],
        v_hat: state0.q_hat * p[1][0] + state0.v_hat * p[1][1],
        w_hat: state0.w_hat.iter().map(|w| w * h).collect(),
    })
}

/// Relative residual of `c = (nu^2 |xi|^2 / 4)(1 - R)(1 + R)`.
pub fn velocity_identity_check(sym: &ModeSymbol) -> Result<f64> {
    if sym.regime != Regime::Real {
        return Err(Error::Regime(format!("velocity identity needs the real regime, got {:?}", sym.regime)));
    }
    // (nu^2 |xi|^4 / 4)(1 - R)(1 + R) is the product of the two decay rates
    let rhs = sym.lambda_plus.re * sym.lambda_minus.re / (sym.xi_norm * sym.xi_norm);
    Ok((sym.stiffness - rhs).abs() / sym.stiffness)
}

#[derive(Debug, Clone, Copy)]
struct ModeMatrix {
    p: [[f64; 2]; 2],
    heat: f64,
    xhat: [f64; 2],
}

/// `e^{tL}` on whole fields `(q, u)`, cached per mode.
#[derive(Debug, Clone)]
pub struct FieldPropagator {
    grid: PeriodicGrid,
    modes: Vec<Option<ModeMatrix>>,
}

impl FieldPropagator {
    pub fn new(grid: &PeriodicGrid, params: &PhysicalParams, model: CapillaryModel, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("t must be >= 0, got {t}")));
        }
        let mut modes = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let r = grid.xi_norm(idx);
            if r == 0.0 {
                modes.push(None);
                continue;
            }
            let sym = mode_symbol_with(r, params, model)?;
            let xi = grid.xi(idx);
            modes.push(Some(ModeMatrix { p: sym.propagator(t), heat: sym.heat(t), xhat: [xi[0] / r, xi[1] / r] }));
        }
        Ok(FieldPropagator { grid: grid.clone(), modes })
    }

    /// In-place per-mode update: Helmholtz split, 2x2 propagator on
    /// `(q, v)`, heat factor on the transverse part.
    pub fn apply_in_place(&self, q: &mut [Complex64], u: &mut [Vec<Complex64>]) {
        let d = u.len();
        let i = Complex64::new(0.0, 1.0);
        for (idx, m) in self.modes.iter().enumerate() {
            let Some(m) = m else { continue };
            let mut s = Complex64::new(0.0, 0.0);
            for a in 0..d {
                s += u[a][idx] * m.xhat[a];
            }
            let v = i * s;
            let q0 = q[idx];
            q[idx] = q0 * m.p[0][0] + v * m.p[0][1];
            let v1 = q0 * m.p[1][0] + v * m.p[1][1];
            for a in 0..d {
                let long = m.xhat[a] * s;
                u[a][idx] = -i * m.xhat[a] * v1 + (u[a][idx] - long) * m.heat;
            }
        }
    }

    pub fn apply(&self, q: &SpectralField, u: &SpectralField) -> Result<(SpectralField, SpectralField)> {
        if q.grid() != &self.grid || u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut qq = q.clone();
        let mut uu = u.clone();
        let mut qc = std::mem::take(&mut qq.coeffs_mut()[0]);
        self.apply_in_place(&mut qc, uu.coeffs_mut());
        qq.coeffs_mut()[0] = qc;
        Ok((qq, uu))
    }
}

/// Time-dependent forcing `(F(t), G(t))`.
pub type Forcing<'a> = &'a dyn Fn(f64) -> (SpectralField, SpectralField);

/// Solves the linear system with forcing by exact propagation plus a
/// 4-point Gauss rule per step for the Duhamel integral. Returns the
/// `(q, u)` trajectories at every step.
pub fn duhamel_evolve(
    q0: &SpectralField,
    u0: &SpectralField,
    forcing: Option<Forcing<'_>>,
    params: &PhysicalParams,
    model: CapillaryModel,
    t_end: f64,
    steps: usize,
) -> Result<(TimeSeriesField, TimeSeriesField)> {
    let grid = q0.grid().clone();
    if u0.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    if u0.ncomp() != grid.dim() || q0.ncomp() != 1 {
        return Err(Error::Shape { expected: grid.dim(), got: u0.ncomp() });
    }
    if steps == 0 || !(t_end > 0.0) {
        return Err(Error::Domain("need steps >= 1 and T > 0".into()));
    }
    let dt = t_end / steps as f64;
    let full = FieldPropagator::new(&grid, params, model, dt)?;
    let (gx, gw) = gauss_legendre(4, 0.0, dt);
    let kernels: Vec<FieldPropagator> =
        gx.iter().map(|s| FieldPropagator::new(&grid, params, model, dt - s)).collect::<Result<_>>()?;
    let mut q = q0.clone();
    let mut u = u0.clone();
    let mut times = vec![0.0];
    let mut qs = vec![q.clone()];
    let mut us = vec![u.clone()];
    for n in 0..steps {
        let t0 = n as f64 * dt;
        let (mut qn, mut un) = full.apply(&q, &u)?;
        if let Some(f) = forcing {
            for ((s, w), k) in gx.iter().zip(&gw).zip(&kernels) {
                let (ff, gg) = f(t0 + s);
                if ff.grid() != &grid || gg.grid() != &grid {
                    return Err(Error::GridMismatch);
                }
                let (kf, kg) = k.apply(&ff, &gg)?;
                qn = qn.lin_comb(1.0, &kf, *w)?;
                un = un.lin_comb(1.0, &kg, *w)?;
            }
        }
        q = qn;
        u = un;
        times.push(t0 + dt);
        qs.push(q.clone());
        us.push(u.clone());
    }
    Ok((TimeSeriesField::new(times.clone(), qs)?, TimeSeriesField::new(times, us)?))
}

fn classify(xi2: f64, x_eps: f64, y_eps: f64) -> &'static str {
    if xi2 < x_eps {
        "low"
    } else if xi2 < y_eps {
        "medium"
    } else {
        "high"
    }
}

/// Coefficient envelopes `(q_env, v_env, (wq_q, wq_v), (wv_q, wv_v))` of the
/// pointwise estimates at `(xi, t)` in block `j`.
fn pointwise_envelope(
    pr: &PhysicalParams,
    th: &ThresholdReport,
    regime: &str,
    j: i32,
    xi: f64,
    t: f64,
) -> (f64, f64, [f64; 2], [f64; 2]) {
    let nu = pr.nu();
    let p2j = 2f64.powi(j);
    let low_rate = nu * t * C0_IN * C0_IN * p2j * p2j / 4.0;
    let wq = [1.0 + nu * p2j, 1.0 + 1.0 / pr.p.sqrt()];
    match regime {
        "low" => {
            let e = (-low_rate).exp();
            let wv = [(1.0 + nu * p2j) * (1.0 + pr.p.sqrt()) * (1.0 + 4.0 * pr.kappa / (nu * nu)), 1.0];
            (e, e, wq, wv)
        }
        "medium" => {
            let m = th.m;
            let e = (-low_rate * (1.0 - m)).exp() / (1.0 - m);
            (e, e, wq, [nu * p2j, 1.0])
        }
        _ => {
            let eps = pr.epsilon;
            let eq = (-nu * t * xi * xi / 2.0).exp()
                + (-(pr.kappa / (nu * eps * eps)) * (1.0 - (-th.gamma1).exp()) * t).exp();
            let sg = |x2: f64| crate::thresholds::g_eps_unchecked(x2, pr).max(0.0).sqrt();
            let lo2 = (C0_IN * p2j).powi(2);
            let hi2 = (C0_OUT * p2j).powi(2);
            let ev = (-low_rate).exp() + (1.0 - sg(lo2)) * (-nu * t * lo2 / 2.0 * (1.0 - sg(hi2))).exp();
            (eq, ev, wq, [nu * p2j, 1.0])
        }
    }
}

pub const REPORT_COLUMNS: [&str; 5] = ["j", "eps", "regime", "fitted_C", "argmax_t"];

/// Minimal constants in the pointwise estimates, per `(j, regime)`.
pub fn verify_pointwise_bounds(params: &PhysicalParams, j_range: (i32, i32), t_samples: &[f64]) -> Result<ReportTable> {
    params.validate()?;
    let th = ThresholdReport::compute(params)?;
    let nu = params.nu();
    let mut table = ReportTable::new(&REPORT_COLUMNS);
    for j in j_range.0..=j_range.1 {
        let p2j = 2f64.powi(j);
        let mut best: Vec<(&str, f64, f64)> = Vec::new();
        for k in 0..16 {
            let xi = C0_IN * p2j * (C0_OUT / C0_IN).powf(k as f64 / 15.0);
            let regime = classify(xi * xi, th.x_eps, th.y_eps);
            let sym = mode_symbol(xi, params)?;
            for &t in t_samples {
                let p = sym.propagator(t);
                let (eq, ev, wq, wv) = pointwise_envelope(params, &th, regime, j, xi, t);
                let lhs_q = 1.0 + nu * p2j;
                let c = [
                    lhs_q * p[0][0].abs() / (eq * wq[0]),
                    lhs_q * p[0][1].abs() / (eq * wq[1]),
                    p[1][0].abs() / (ev * wv[0]),
                    p[1][1].abs() / (ev * wv[1]),
                ]
                .into_iter()
                .fold(0.0, f64::max);
                if !c.is_finite() {
                    return Err(Error::NonFinite(format!("pointwise ratio at j={j}, xi={xi}, t={t}")));
                }
                match best.iter_mut().find(|b| b.0 == regime) {
                    Some(b) if c > b.1 => {
                        b.1 = c;
                        b.2 = t;
                    }
                    Some(_) => {}
                    None => best.push((regime, c, t)),
                }
            }
        }
        for (regime, c, t) in best {
            table.push(vec![j.into(), params.epsilon.into(), regime.into(), c.into(), t.into()]);
        }
    }
    Ok(table)
}

/// Measured long-time decay rate of `|q(t)|` at `xi` and the envelope rate
/// `(kappa / (nu eps^2)) (1 - e^{-gamma1})`.
pub fn high_frequency_damping(params: &PhysicalParams, xi: f64) -> Result<(f64, f64)> {
    let th = ThresholdReport::compute(params)?;
    let sym = mode_symbol(xi, params)?;
    if sym.regime != Regime::Real {
        return Err(Error::Regime("damping fit needs the real regime".into()));
    }
    let rate_slow = -sym.lambda_minus.re;
    // fit over a window where the fast branch has died out
    let t1 = 30.0 / (-sym.lambda_plus.re).max(rate_slow) + 5.0 / rate_slow;
    let t2 = t1 + 10.0 / rate_slow;
    let amp = |t: f64| {
        let p = sym.propagator(t);
        p[0][0].abs().max(1e-300)
    };
    let measured = -((amp(t2)).ln() - (amp(t1)).ln()) / (t2 - t1);
    let nu = params.nu();
    let eps = params.epsilon;
    Ok((measured, params.kappa / (nu * eps * eps) * (1.0 - (-th.gamma1).exp())))
}

/// `j` such that `sqrt(y_eps)` lies in `2^j [c0, C0]`, taking the largest.
pub fn j_bar0(params: &PhysicalParams) -> Result<i32> {
    let y = solve_y_eps(params, DEFAULT_TOL)?;
    Ok((y.sqrt() / C0_IN).log2().floor() as i32)
}

struct BlockSeries {
    times: Vec<f64>,
    /// `[family][component]` block norms over time.
    norms: [[Vec<f64>; 2]; 2],
    data: [f64; 2],
}

fn block_series(params: &PhysicalParams, j: i32) -> Result<BlockSeries> {
    let p2j = 2f64.powi(j);
    let (xs, ws) = gauss_legendre(96, C0_IN * p2j, C0_OUT * p2j);
    let syms: Vec<ModeSymbol> = xs.iter().map(|&x| mode_symbol(x, params)).collect::<Result<_>>()?;
    let w2: Vec<f64> = xs.iter().zip(&ws).map(|(x, w)| w * phi(x / p2j).powi(2)).collect();
    let data = w2.iter().sum::<f64>().sqrt();
    let fast = syms.iter().map(|s| -s.lambda_plus.re).fold(0.0, f64::max);
    let slow = syms.iter().map(|s| -s.lambda_minus.re).fold(f64::INFINITY, f64::min);
    let (t0, t1) = (1e-4 / fast, 60.0 / slow);
    let nt = 3000;
    let mut times = vec![0.0];
    times.extend((0..nt).map(|k| t0 * (t1 / t0).powf(k as f64 / (nt - 1) as f64)));
    let mut norms: [[Vec<f64>; 2]; 2] = Default::default();
    for &t in &times {
        let mut acc = [[0.0; 2]; 2];
        for (s, w) in syms.iter().zip(&w2) {
            let p = s.propagator(t);
            acc[0][0] += w * p[0][0] * p[0][0];
            acc[0][1] += w * p[1][0] * p[1][0];
            acc[1][0] += w * p[0][1] * p[0][1];
            acc[1][1] += w * p[1][1] * p[1][1];
        }
        for f in 0..2 {
            for c in 0..2 {
                norms[f][c].push(acc[f][c].sqrt());
            }
        }
    }
    Ok(BlockSeries { times, norms, data: [data, data] })
}

/// Minimal constants in the time-integrated block estimates, per `j`,
/// plus the heat part.
pub fn verify_time_estimates(params: &PhysicalParams, j_range: (i32, i32)) -> Result<ReportTable> {
    params.validate()?;
    let nu = params.nu();
    let mu = params.mu;
    let m = params.m_ratio();
    let eps = params.epsilon;
    let jb = j_bar0(params)?;
    let sp = params.p.sqrt();
    let mut table = ReportTable::new(&REPORT_COLUMNS);
    for j in j_range.0..=j_range.1 {
        let p2j = 2f64.powi(j);
        let bs = block_series(params, j)?;
        let low = j <= jb;
        let mut worst = (0.0, 0.0);
        for fam in 0..2 {
            let q = &bs.norms[fam][0];
            let v = &bs.norms[fam][1];
            let sup = |x: &[f64]| x.iter().cloned().fold(0.0, f64::max);
            let argmax = |x: &[f64]| bs.times[x.iter().enumerate().fold(0, |b, (i, y)| if *y > x[b] { i } else { b })];
            let q_int = trapezoid(&bs.times, q);
            let lhs = sup(v)
                + nu * p2j * p2j * trapezoid(&bs.times, v)
                + (1.0 + nu * p2j) * (sup(q) + if low { nu * p2j * p2j } else { nu / (eps * eps) } * q_int);
            let (q0, v0) = if fam == 0 { (bs.data[0], 0.0) } else { (0.0, bs.data[1]) };
            let rhs = if low {
                (1.0 / m).max(m * m) * ((1.0 + nu * p2j) * (1.0 + sp) * q0 + (1.0 + 1.0 / sp) * v0)
            } else {
                m.max(1.0) * ((1.0 + nu * p2j) * q0 + (1.0 + 1.0 / sp) * v0)
            };
            let c = lhs / rhs;
            if c > worst.0 {
                worst = (c, argmax(if fam == 0 { q } else { v }));
            }
        }
        if !worst.0.is_finite() {
            return Err(Error::NonFinite(format!("time estimate at j={j}")));
        }
        table.push(vec![j.into(), eps.into(), if low { "low" } else { "high" }.into(), worst.0.into(), worst.1.into()]);

        // heat part: ||w||_inf + mu 2^{2j} ||w||_1 over ||w0||
        let (xs, ws) = gauss_legendre(96, C0_IN * p2j, C0_OUT * p2j);
        let w2: Vec<f64> = xs.iter().zip(&ws).map(|(x, w)| w * phi(x / p2j).powi(2)).collect();
        let w0 = w2.iter().sum::<f64>().sqrt();
        let slow = mu * (C0_IN * p2j).powi(2);
        let t1 = 60.0 / slow;
        let t0 = 1e-4 / (mu * (C0_OUT * p2j).powi(2));
        let mut times = vec![0.0];
        times.extend((0..3000).map(|k| t0 * (t1 / t0).powf(k as f64 / 2999.0)));
        let series: Vec<f64> = times
            .iter()
            .map(|t| xs.iter().zip(&w2).map(|(x, w)| w * (-2.0 * mu * x * x * t).exp()).sum::<f64>().sqrt())
            .collect();
        let c = (series[0] + mu * p2j * p2j * trapezoid(&times, &series)) / w0;
        table.push(vec![j.into(), eps.into(), "heat".into(), c.into(), Cell::Real(0.0)]);
    }
    let _ = solve_x_eps(params, DEFAULT_TOL)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random_field;
    use proptest::prelude::*;

    fn pr(p: f64, nu: f64, kappa: f64, eps: f64) -> PhysicalParams {
        PhysicalParams::from_nu(p, nu, kappa, eps).unwrap()
    }

    // Oracle: scaling-and-squaring Taylor exponential of a 2x2 real matrix.
    fn expm(a: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
        let mul = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| {
            let mut r = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
                }
            }
            r
        };
        let norm = a.iter().flatten().map(|v| (v * t).abs()).sum::<f64>();
        let s = norm.log2().ceil().max(0.0) as i32 + 1;
        let sc = t / 2f64.powi(s);
        let b = [[a[0][0] * sc, a[0][1] * sc], [a[1][0] * sc, a[1][1] * sc]];
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        let mut sum = term;
        for k in 1..30 {
            term = mul(term, b);
            term.iter_mut().flatten().for_each(|v| *v /= k as f64);
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..s {
            sum = mul(sum, sum);
        }
        sum
    }

    #[test]
    fn symbol_example() {
        let p = pr(1.0, 1.0, 1.0, 1.0);
        let s = mode_symbol(1.0, &p).unwrap();
        let disc = 1.0 - 4.0 * (2.0 - (-1f64).exp());
        assert!((s.discriminant - disc).abs() < 1e-12);
        assert!((disc - (-5.528_482_235_314_231)).abs() < 1e-12);
        assert_eq!(s.regime, Regime::Oscillatory);
        assert!((s.root - 2.351_272_471_517_121).abs() < 1e-12, "{}", s.root);
        // eigenvalues vs. the quadratic formula on trace and determinant
        let a = s.matrix();
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let root = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
        assert!((s.lambda_plus - (tr - root) / 2.0).norm() < 1e-12);
        assert!((s.lambda_minus - (tr + root) / 2.0).norm() < 1e-12);
    }

    #[test]
    fn double_root_at_threshold() {
        let p = pr(1.0, 2.0, 0.5, 0.1);
        let x = solve_x_eps(&p, 1e-14).unwrap();
        let s = mode_symbol(x.sqrt(), &p).unwrap();
        assert_eq!(s.regime, Regime::Degenerate);
        assert!((s.lambda_plus.re + p.nu() * x / 2.0).abs() < 1e-12);
        // regime switch cross-checked against the threshold solver
        assert_eq!(mode_symbol((x * 0.999).sqrt(), &p).unwrap().regime, Regime::Oscillatory);
        assert_eq!(mode_symbol((x * 1.001).sqrt(), &p).unwrap().regime, Regime::Real);
    }

    #[test]
    fn large_xi_asymptote() {
        let p = pr(1.0, 2.0, 0.5, 0.1);
        let s = mode_symbol(1e4, &p).unwrap();
        let target = -(p.p + p.kappa / 0.01) / p.nu();
        assert!((s.lambda_minus.re - target).abs() < 1e-3 * target.abs());
        assert!((s.lambda_plus.re / (-p.nu() * 1e8) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn evolve_against_oracle() {
        let p = pr(1.0, 1.0, 1.0, 1.0);
        let s = mode_symbol(1.0, &p).unwrap();
        let st = ModeState { q_hat: 1.0.into(), v_hat: 0.0.into(), w_hat: vec![] };
        let out = evolve_mode(&st, &s, 1.0).unwrap();
        let e = expm(s.matrix(), 1.0);
        assert!((out.q_hat.re - e[0][0]).abs() < 1e-12);
        assert!((out.v_hat.re - e[1][0]).abs() < 1e-12);
        let zero = ModeState { q_hat: 0.0.into(), v_hat: 0.0.into(), w_hat: vec![0.0.into()] };
        assert_eq!(evolve_mode(&zero, &s, 2.0).unwrap(), zero);
        let st = ModeState { q_hat: Complex64::new(0.3, 0.1), v_hat: 2.0.into(), w_hat: vec![1.0.into()] };
        assert_eq!(evolve_mode(&st, &s, 0.0).unwrap(), st);
        assert!(evolve_mode(&st, &s, -1.0).is_err());
    }

    #[test]
    fn velocity_identity_examples() {
        let p = pr(1.0, 2.0, 0.5, 0.1);
        let th = ThresholdReport::compute(&p).unwrap();
        let s = mode_symbol(th.y_eps.sqrt(), &p).unwrap();
        assert!(velocity_identity_check(&s).unwrap() < 1e-12);
        assert!(((1.0 - s.root) * (1.0 + s.root) - (1.0 - th.m * th.m)).abs() < 1e-9);
        let low = mode_symbol(0.1, &p).unwrap();
        assert!(velocity_identity_check(&low).is_err());
    }

    #[test]
    fn slow_branch_far_above_threshold() {
        // 1 - sqrt(1 - w) by its series for tiny w
        let p = pr(1.0, 2.0, 0.5, 0.1);
        for xi in [1e3, 1e4, 1e5] {
            let s = mode_symbol(xi, &p).unwrap();
            let w = 4.0 * s.stiffness / (p.nu() * p.nu() * xi * xi);
            let a = 0.5 * p.nu() * xi * xi;
            let series = a * (w / 2.0 + w * w / 8.0 + w * w * w / 16.0);
            assert!((-s.lambda_minus.re / series - 1.0).abs() < 1e-13, "xi={xi}");
            assert!(velocity_identity_check(&s).unwrap() < 1e-12);
        }
    }

    // Oracle: RK4 on the forced 2x2 system.
    fn rk4_forced(a: [[f64; 2]; 2], f: [f64; 2], t: f64, dt: f64) -> [f64; 2] {
        let rhs = |y: [f64; 2]| [a[0][0] * y[0] + a[0][1] * y[1] + f[0], a[1][0] * y[0] + a[1][1] * y[1] + f[1]];
        let mut y = [0.0, 0.0];
        let n = (t / dt).round() as usize;
        for _ in 0..n {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
            let k4 = rhs([y[0] + dt * k3[0], y[1] + dt * k3[1]]);
            for i in 0..2 {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn duhamel_constant_forcing() {
        let g = PeriodicGrid::standard(1, 16).unwrap();
        let p = pr(1.0, 1.0, 1.0, 0.5);
        let model = CapillaryModel::Nonlocal { eps: 0.5 };
        let f = SpectralField::from_fn(&g, 1, |x, _| (2.0 * x[0]).cos());
        let zero_q = SpectralField::zeros(&g, 1);
        let zero_u = SpectralField::zeros(&g, 1);
        let forcing = |_t: f64| (f.clone(), SpectralField::zeros(&g, 1));
        let (qt, _) = duhamel_evolve(&zero_q, &zero_u, Some(&forcing), &p, model, 1.0, 20).unwrap();
        let s = mode_symbol_with(2.0, &p, model).unwrap();
        let y = rk4_forced(s.matrix(), [1.0, 0.0], 1.0, 1e-4);
        // cos(2x) has coefficient sqrt(N)/2 at k = 2
        let amp = qt.fields.last().unwrap().coeffs()[0][2].re / (16f64.sqrt() / 2.0);
        assert!((amp - y[0]).abs() < 1e-6, "{amp} vs {}", y[0]);
    }

    #[test]
    fn duhamel_unforced_matches_modes_and_stationary() {
        let g = PeriodicGrid::standard(2, 16).unwrap();
        let p = pr(1.0, 1.5, 0.7, 0.3);
        let model = CapillaryModel::Nonlocal { eps: 0.3 };
        let q0 = random_field(&g, 1, 5, 1.0, 1);
        let u0 = random_field(&g, 2, 5, 1.0, 2);
        let (qt, ut) = duhamel_evolve(&q0, &u0, None, &p, model, 0.5, 5).unwrap();
        let (q1, u1) = FieldPropagator::new(&g, &p, model, 0.5).unwrap().apply(&q0, &u0).unwrap();
        assert!(qt.fields[5].sub(&q1).unwrap().l2_norm() < 1e-12);
        assert!(ut.fields[5].sub(&u1).unwrap().l2_norm() < 1e-12);

        // stationary: F = div u*, G = -A u* + grad(c(D) q*) keeps (q*, u*) fixed
        let qs = random_field(&g, 1, 4, 1.0, 3);
        let us = random_field(&g, 2, 4, 1.0, 4).remove_mean();
        let ff = us.divergence().unwrap();
        let cq = qs.apply_real_multiplier(|xi| model.stiffness(xi.iter().map(|x| x * x).sum(), &p)).unwrap();
        let gg = cq.gradient().sub(&us.lame(p.mu, p.lambda).unwrap()).unwrap();
        let forcing = |_t: f64| (ff.clone(), gg.clone());
        let (qt, ut) = duhamel_evolve(&qs, &us, Some(&forcing), &p, model, 1.0, 50).unwrap();
        let eq = qt.fields[50].sub(&qs).unwrap().l2_norm() / qs.l2_norm();
        let eu = ut.fields[50].sub(&us).unwrap().l2_norm() / us.l2_norm();
        assert!(eq < 1e-8 && eu < 1e-8, "{eq} {eu}");
    }

    #[test]
    fn pointwise_bounds_finite() {
        let p = pr(1.0, 2.0, 1.0, 0.1);
        let t: Vec<f64> = (0..20).map(|k| if k == 0 { 0.0 } else { 1e-4 * 2f64.powi(k) }).collect();
        let tab = verify_pointwise_bounds(&p, (-3, 6), &t).unwrap();
        let c = tab.values("fitted_C");
        assert!(c.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 20.0), "{c:?}");
    }

    #[test]
    fn heat_part_constant() {
        let p = pr(1.0, 2.0, 1.0, 0.1);
        let tab = verify_time_estimates(&p, (-2, 3)).unwrap();
        let i = tab.column("regime").unwrap();
        let ci = tab.column("fitted_C").unwrap();
        for r in &tab.rows {
            if r[i] == Cell::Text("heat".into()) {
                assert!(r[ci].as_f64().unwrap() <= 3.0);
            }
        }
    }

    #[test]
    fn damping_rate() {
        let p = pr(1.0, 2.0, 1.0, 0.1);
        let y = ThresholdReport::compute(&p).unwrap().y_eps;
        let (measured, env) = high_frequency_damping(&p, (100.0 * y).sqrt()).unwrap();
        assert!(measured >= env);
    }

    proptest! {
        #[test]
        fn dissipative_and_semigroup(xi in 0.01f64..300.0, p in 0.2f64..3.0, nu in 0.3f64..3.0,
                                     k in 0.1f64..3.0, eps in 0.01f64..1.0, t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            let par = pr(p, nu, k, eps);
            let s = mode_symbol(xi, &par).unwrap();
            prop_assert!(s.lambda_plus.re < 0.0 && s.lambda_minus.re < 0.0);
            let a = s.propagator(t1);
            let b = s.propagator(t2);
            let c = s.propagator(t1 + t2);
            let scale = c.iter().flatten().fold(1e-300f64, |m, v| m.max(v.abs())).max(
                a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) * b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())));
            for i in 0..2 {
                for j in 0..2 {
                    let ab = b[i][0] * a[0][j] + b[i][1] * a[1][j];
                    prop_assert!((ab - c[i][j]).abs() <= 1e-10 * scale);
                }
            }
        }

        #[test]
        fn continuity_across_switch(p in 0.2f64..3.0, nu in 0.3f64..3.0, k in 0.1f64..3.0, eps in 0.01f64..1.0, t in 0.0f64..3.0) {
            let par = pr(p, nu, k, eps);
            let x = solve_x_eps(&par, 1e-15).unwrap();
            let lo = mode_symbol((x * (1.0 - 3e-8)).sqrt(), &par).unwrap();
            let hi = mode_symbol((x * (1.0 + 3e-8)).sqrt(), &par).unwrap();
            let mid = mode_symbol(x.sqrt(), &par).unwrap();
            prop_assert_eq!(mid.regime, Regime::Degenerate);
            for s in [lo, hi] {
                let a = s.propagator(t);
                let b = mid.propagator(t);
                for i in 0..2 {
                    for j in 0..2 {
                        prop_assert!((a[i][j] - b[i][j]).abs() <= 1e-6 * (1.0 + b[i][j].abs()));
                    }
                }
            }
        }

        #[test]
        fn energy_decay(xi in 0.05f64..50.0, t in 0.0f64..5.0, dt in 0.0f64..1.0) {
            let par = pr(1.0, 1.0, 1.0, 0.2);
            let s = mode_symbol(xi, &par).unwrap();
            let en = |t: f64| {
                let m = s.propagator(t);
                // energy for which the generator is dissipative: c |q|^2 + |v|^2
                let (q, v) = (m[0][0], m[1][0]);
                s.stiffness * q * q + v * v
            };
            prop_assert!(en(t + dt) <= en(t) * (1.0 + 1e-12) + 1e-300);
        }
    }
}
