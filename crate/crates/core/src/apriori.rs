//! Numerical check of the a priori estimate for the advected linear system
//!
//! ```text
//! d/dt q + v.grad q + div u = F,
//! d/dt u + v.grad u - A u + grad(c(D) q) = G.
//! ```

use crate::error::{Error, Result};
use crate::lagrangian::AdvectingVelocity;
use crate::lp::{besov_norm, chemin_lerner_from_blocks, BlockMap, HybridSpec, TimeSeriesField};
use crate::propagator::{CapillaryModel, FieldPropagator};
use crate::quadrature::gauss_legendre;
use crate::report::{Cell, ReportTable};
use crate::spectral::{random_field, PeriodicGrid, SpectralField};
use crate::thresholds::PhysicalParams;

/// `max(sqrt p, 1/sqrt p) max(4 kappa / nu^2, (nu^2 / (4 kappa))^2)`.
pub fn c_p_m(params: &PhysicalParams) -> f64 {
    let sp = params.p.sqrt();
    let m = params.m_ratio();
    sp.max(1.0 / sp) * (1.0 / m).max(m * m)
}

/// `(1 + |lambda + mu| + mu + nu) / nu0 + max(1, 1/nu^3)`.
pub fn c_visc(params: &PhysicalParams) -> f64 {
    let nu = params.nu();
    (1.0 + (params.lambda + params.mu).abs() + params.mu + nu) / params.nu0() + (1.0f64).max(nu.powi(-3))
}

/// Forcing `e^{-t} (F0, G0)`.
#[derive(Debug, Clone)]
pub struct DecayingForce {
    pub f0: SpectralField,
    pub g0: SpectralField,
}

impl DecayingForce {
    pub fn zero(grid: &PeriodicGrid) -> Self {
        DecayingForce { f0: SpectralField::zeros(grid, 1), g0: SpectralField::zeros(grid, grid.dim()) }
    }

    fn at(&self, t: f64) -> (SpectralField, SpectralField) {
        let s = (-t).exp();
        (self.f0.scale(s), self.g0.scale(s))
    }
}

/// One member of the manufactured suite.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub q0: SpectralField,
    pub u0: SpectralField,
    pub v: AdvectingVelocity,
    pub force: DecayingForce,
}

impl ManufacturedCase {
    /// Zero transport and forcing, shear transport, and shear plus forcing.
    pub fn standard_suite(grid: &PeriodicGrid, amplitude: f64, v_amp: f64, seed: u64) -> Vec<ManufacturedCase> {
        let d = grid.dim();
        let q0 = random_field(grid, 1, 6, 1.0, seed).remove_mean().scale(amplitude);
        let u0 = random_field(grid, d, 6, 1.0, seed + 1).remove_mean().scale(amplitude);
        let force = DecayingForce {
            f0: random_field(grid, 1, 6, 1.0, seed + 2).remove_mean().scale(amplitude),
            g0: random_field(grid, d, 6, 1.0, seed + 3).remove_mean().scale(amplitude),
        };
        let shear = AdvectingVelocity::sine_shear(d, v_amp).with_time_slope(-0.5);
        vec![
            ManufacturedCase {
                name: "free".into(),
                q0: q0.clone(),
                u0: u0.clone(),
                v: AdvectingVelocity::zero(d),
                force: DecayingForce::zero(grid),
            },
            ManufacturedCase {
                name: "transport".into(),
                q0: q0.clone(),
                u0: u0.clone(),
                v: shear.clone(),
                force: DecayingForce::zero(grid),
            },
            ManufacturedCase { name: "forced".into(), q0, u0, v: shear, force },
        ]
    }
}

fn velocity_field(v: &AdvectingVelocity, grid: &PeriodicGrid, t: f64) -> Result<SpectralField> {
    let d = grid.dim();
    let mut samples = vec![vec![0.0; grid.len()]; d];
    for i in 0..grid.len() {
        let (val, _) = v.eval(t, grid.coords(i));
        for a in 0..d {
            samples[a][i] = val[a];
        }
    }
    SpectralField::from_physical(grid, &samples)
}

/// `-v.grad f` per component, truncated to the band.
fn transport(v: &[Vec<f64>], f: &SpectralField) -> Result<SpectralField> {
    let grid = f.grid();
    let d = grid.dim();
    let mut out = vec![vec![0.0; grid.len()]; f.ncomp()];
    for c in 0..f.ncomp() {
        let g = f.component(c).gradient().to_physical();
        for i in 0..grid.len() {
            out[c][i] = -(0..d).map(|b| v[b][i] * g[b][i]).sum::<f64>();
        }
    }
    Ok(SpectralField::from_physical(grid, &out)?.truncate_to_band())
}

/// Integrating-factor Heun solve of the advected linear system; every step
/// is recorded.
pub fn solve_advected(
    case: &ManufacturedCase,
    params: &PhysicalParams,
    t_end: f64,
    dt: f64,
) -> Result<(TimeSeriesField, TimeSeriesField)> {
    let grid = case.q0.grid().clone();
    if case.v.linear != [[0.0; 2]; 2] {
        return Err(Error::Domain("transport field must be periodic (no linear part)".into()));
    }
    let steps = (t_end / dt).round() as usize;
    if steps == 0 {
        return Err(Error::Domain("need T >= dt > 0".into()));
    }
    let vmax = (0..=steps)
        .map(|k| velocity_field(&case.v, &grid, k as f64 * dt).map(|f| f.linf_norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let kmax = grid.fundamental() * grid.band_limit() as f64 * (grid.dim() as f64).sqrt();
    let cfl = dt * vmax * kmax;
    if cfl > 1.0 {
        return Err(Error::Domain(format!("transport CFL number {cfl:.3} exceeds 1")));
    }
    let prop = FieldPropagator::new(&grid, params, CapillaryModel::Nonlocal { eps: params.epsilon }, dt)?;
    let rhs = |t: f64, q: &SpectralField, u: &SpectralField| -> Result<(SpectralField, SpectralField)> {
        let vs = velocity_field(&case.v, &grid, t)?.to_physical();
        let (f, g) = case.force.at(t);
        Ok((transport(&vs, q)?.add(&f)?, transport(&vs, u)?.add(&g)?))
    };
    let mut q = case.q0.clone();
    let mut u = case.u0.clone();
    let (mut times, mut qs, mut us) = (vec![0.0], vec![q.clone()], vec![u.clone()]);
    for k in 0..steps {
        let t = k as f64 * dt;
        let (nq, nu) = rhs(t, &q, &u)?;
        let (eq, eu) = prop.apply(&q, &u)?;
        let (enq, enu) = prop.apply(&nq, &nu)?;
        let aq = eq.lin_comb(1.0, &enq, dt)?;
        let au = eu.lin_comb(1.0, &enu, dt)?;
        let (mq, mu) = rhs(t + dt, &aq, &au)?;
        q = eq.lin_comb(1.0, &enq, 0.5 * dt)?.lin_comb(1.0, &mq, 0.5 * dt)?;
        u = eu.lin_comb(1.0, &enu, 0.5 * dt)?.lin_comb(1.0, &mu, 0.5 * dt)?;
        if !q.l2_norm().is_finite() || !u.l2_norm().is_finite() {
            return Err(Error::NonFinite(format!("advected solve at t = {}", t + dt)));
        }
        times.push(t + dt);
        qs.push(q.clone());
        us.push(u.clone());
    }
    Ok((TimeSeriesField::new(times.clone(), qs)?, TimeSeriesField::new(times, us)?))
}

/// `int_0^T (|grad v|_{B^{d/2}} + |v|_{B^{d/2}}^2)`.
pub fn w_integral(v: &AdvectingVelocity, grid: &PeriodicGrid, t_end: f64) -> Result<f64> {
    let s = grid.dim() as f64 / 2.0;
    let (ts, ws) = gauss_legendre(16, 0.0, t_end);
    let mut acc = 0.0;
    for (t, w) in ts.iter().zip(&ws) {
        let f = velocity_field(v, grid, *t)?;
        let mut grad_norm = 0.0;
        for a in 0..grid.dim() {
            grad_norm += besov_norm(&f.component(a).gradient(), s, 2.0, 1.0)?;
        }
        acc += w * (grad_norm + besov_norm(&f, s, 2.0, 1.0)?.powi(2));
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSides {
    pub lhs: f64,
    /// Data and force norms, before the constant and exponential factors.
    pub data: f64,
    pub w: f64,
    pub rhs: f64,
}

/// Both sides of the estimate for one case at one parameter point.
pub fn estimate_sides(case: &ManufacturedCase, params: &PhysicalParams, s: f64, t_end: f64, dt: f64) -> Result<EstimateSides> {
    let (qt, ut) = solve_advected(case, params, t_end, dt)?;
    let grid = qt.grid().clone();
    let bm = BlockMap::new(&grid);
    let qb = qt.block_norms(&bm);
    let ub = ut.block_norms(&bm);
    let t = &qt.times;
    let w = |s: f64| move |l: i32| 2f64.powi(l).powf(s);
    let (nu, nu0, eps) = (params.nu(), params.nu0(), params.epsilon);
    let h1 = HybridSpec::new(s + 1.0, s - 1.0, eps, 1.0)?;
    let h2 = HybridSpec::new(s + 2.0, s, eps, 1.0)?;
    let lhs = chemin_lerner_from_blocks(t, &ub, &bm, f64::INFINITY, w(s - 1.0))?
        + chemin_lerner_from_blocks(t, &qb, &bm, f64::INFINITY, w(s - 1.0))?
        + nu * chemin_lerner_from_blocks(t, &qb, &bm, f64::INFINITY, w(s))?
        + nu0 * chemin_lerner_from_blocks(t, &ub, &bm, 1.0, w(s + 1.0))?
        + nu * chemin_lerner_from_blocks(t, &qb, &bm, 1.0, |l| h1.weight(l))?
        + nu * nu * chemin_lerner_from_blocks(t, &qb, &bm, 1.0, |l| h2.weight(l))?;
    // forces are e^{-t} times fixed fields, so their time integrals are exact
    let tf = -(-t_end).exp_m1();
    let b = |f: &SpectralField, s: f64| besov_norm(f, s, 2.0, 1.0);
    let data = b(&case.u0, s - 1.0)?
        + b(&case.q0, s - 1.0)?
        + nu * b(&case.q0, s)?
        + tf * (b(&case.force.f0, s - 1.0)? + nu * b(&case.force.f0, s)? + b(&case.force.g0, s - 1.0)?);
    let wv = w_integral(&case.v, &grid, t_end)?;
    let cpm = c_p_m(params);
    let rhs = cpm * (cpm * c_visc(params) * wv).exp() * data;
    Ok(EstimateSides { lhs, data, w: wv, rhs })
}

#[derive(Debug, Clone)]
pub struct AprioriSetup {
    pub base: PhysicalParams,
    pub eps: Vec<f64>,
    pub nu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub p: Vec<f64>,
    pub s: f64,
    pub t_end: f64,
    pub dt: f64,
}

pub const APRIORI_COLUMNS: [&str; 10] = ["case", "eps", "nu", "kappa", "p", "lhs", "rhs", "W", "ratio", "fitted_C"];

#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub table: ReportTable,
    /// Minimal constant per sweep point (max ratio over the suite).
    pub fitted: Vec<f64>,
}

impl AprioriReport {
    /// `max / min` of the fitted constants.
    pub fn spread(&self) -> f64 {
        let max = self.fitted.iter().cloned().fold(0.0, f64::max);
        let min = self.fitted.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Sweeps `eps`, then `nu`, `kappa`, `p` one axis at a time around `base`.
pub fn apriori_check(setup: &AprioriSetup, suite: &[ManufacturedCase]) -> Result<AprioriReport> {
    let b = setup.base;
    let mut points: Vec<PhysicalParams> = Vec::new();
    for &e in &setup.eps {
        points.push(b.with_epsilon(e));
    }
    for &nu in &setup.nu {
        points.push(PhysicalParams::new(nu / 2.0, 0.0, b.kappa, b.p, b.epsilon)?);
    }
    for &k in &setup.kappa {
        points.push(PhysicalParams::new(b.mu, b.lambda, k, b.p, b.epsilon)?);
    }
    for &p in &setup.p {
        points.push(PhysicalParams::new(b.mu, b.lambda, b.kappa, p, b.epsilon)?);
    }
    let mut table = ReportTable::new(&APRIORI_COLUMNS);
    let mut fitted = Vec::with_capacity(points.len());
    for pt in &points {
        let mut rows = Vec::new();
        let mut best: f64 = 0.0;
        for case in suite {
            let sides = estimate_sides(case, pt, setup.s, setup.t_end, setup.dt)?;
            let ratio = sides.lhs / sides.rhs;
            best = best.max(ratio);
            rows.push((case.name.clone(), sides, ratio));
        }
        for (name, sides, ratio) in rows {
            table.push(vec![
                Cell::Text(name),
                pt.epsilon.into(),
                pt.nu().into(),
                pt.kappa.into(),
                pt.p.into(),
                sides.lhs.into(),
                sides.rhs.into(),
                sides.w.into(),
                ratio.into(),
                best.into(),
            ]);
        }
        fitted.push(best);
    }
    Ok(AprioriReport { table, fitted })
}
