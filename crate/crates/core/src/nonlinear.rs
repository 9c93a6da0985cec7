//! Time stepping of the full local and nonlocal systems and the
//! `eps -> 0` convergence study.

use crate::error::{Error, Result};
use crate::lp::{energy_norm_e, TimeSeriesField};
use crate::propagator::{CapillaryModel, FieldPropagator};
use crate::report::{log_log_slope, ReportTable};
use crate::spectral::{capillary_symbol, PeriodicGrid, SpectralField};
use crate::thresholds::PhysicalParams;

/// Smallest admissible `1 + q`.
pub const VACUUM_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct FluidState {
    pub q: SpectralField,
    pub u: SpectralField,
    pub t: f64,
}

impl FluidState {
    pub fn new(q: SpectralField, u: SpectralField) -> Result<Self> {
        if q.grid() != u.grid() {
            return Err(Error::GridMismatch);
        }
        if q.ncomp() != 1 || u.ncomp() != q.grid().dim() {
            return Err(Error::Shape { expected: q.grid().dim(), got: u.ncomp() });
        }
        Ok(FluidState { q, u, t: 0.0 })
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        FluidState { q: SpectralField::zeros(grid, 1), u: SpectralField::zeros(grid, grid.dim()), t: 0.0 }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.q.grid()
    }

    pub fn norm(&self) -> f64 {
        (self.q.l2_norm().powi(2) + self.u.l2_norm().powi(2)).sqrt()
    }

    pub fn min_density(&self) -> f64 {
        self.q.to_physical()[0].iter().fold(f64::INFINITY, |a, b| a.min(1.0 + b))
    }
}

/// `P(rho) = p rho^gamma / gamma`, so `P'(1) = p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    pub p: f64,
    pub gamma: f64,
}

impl PressureLaw {
    pub fn new(p: f64, gamma: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidParam { field: "p", reason: format!("P'(1) must be > 0, got {p}") });
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidParam { field: "gamma", reason: "must be finite".into() });
        }
        Ok(PressureLaw { p, gamma })
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        self.p * rho.powf(self.gamma) / self.gamma
    }

    pub fn pprime(&self, rho: f64) -> f64 {
        self.p * rho.powf(self.gamma - 1.0)
    }

    /// `K(q) = P'(1) - P'(1+q)/(1+q) = p (1 - (1+q)^{gamma-2})`.
    pub fn k_of(&self, q: f64) -> f64 {
        if self.gamma == 2.0 {
            0.0
        } else {
            -self.p * ((self.gamma - 2.0) * q.ln_1p()).exp_m1()
        }
    }
}

/// `I(q) = q / (1 + q)`.
pub fn i_of(q: f64) -> f64 {
    q / (1.0 + q)
}

/// `(-div(q u), -u.grad u + K(q) grad q - I(q) A u)`, products formed on the
/// grid and truncated to the 2/3 band.
pub fn nonlinear_terms(
    state: &FluidState,
    law: &PressureLaw,
    params: &PhysicalParams,
    vacuum: f64,
) -> Result<(SpectralField, SpectralField)> {
    let grid = state.grid().clone();
    let d = grid.dim();
    let qp = state.q.to_physical();
    let min = qp[0].iter().fold(f64::INFINITY, |a, b| a.min(1.0 + b));
    if !(min >= vacuum) {
        return Err(Error::Vacuum(min));
    }
    let fq = SpectralField::product_truncated(&state.q, &state.u).divergence()?.scale(-1.0);

    let up = state.u.to_physical();
    let grads: Vec<Vec<Vec<f64>>> = (0..d).map(|a| state.u.component(a).gradient().to_physical()).collect();
    let gq = state.q.gradient().to_physical();
    let au = state.u.lame(params.mu, params.lambda)?.to_physical();
    let n = grid.len();
    let mut out = vec![vec![0.0; n]; d];
    for i in 0..n {
        let q = qp[0][i];
        let (k, iq) = (law.k_of(q), i_of(q));
        for a in 0..d {
            let adv: f64 = (0..d).map(|b| up[b][i] * grads[a][b][i]).sum();
            out[a][i] = -adv + k * gq[a][i] - iq * au[a][i];
        }
    }
    let fu = SpectralField::from_physical(&grid, &out)?.truncate_to_band();
    Ok((fq, fu))
}

/// Integrating-factor Heun scheme: the linear part is propagated exactly,
/// nonlinear terms are explicit.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub params: PhysicalParams,
    pub law: PressureLaw,
    pub model: CapillaryModel,
    pub dt: f64,
    pub vacuum: f64,
    prop: FieldPropagator,
}

impl Stepper {
    pub fn new(grid: &PeriodicGrid, params: &PhysicalParams, law: PressureLaw, model: CapillaryModel, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
        }
        if law.p != params.p {
            return Err(Error::InvalidParam { field: "p", reason: "pressure law and parameters disagree on P'(1)".into() });
        }
        let prop = FieldPropagator::new(grid, params, model, dt)?;
        Ok(Stepper { params: *params, law, model, dt, vacuum: VACUUM_THRESHOLD, prop })
    }

    fn lin(&self, q: &SpectralField, u: &SpectralField) -> Result<(SpectralField, SpectralField)> {
        self.prop.apply(q, u)
    }

    pub fn step(&self, s: &FluidState) -> Result<FluidState> {
        let dt = self.dt;
        let (nq, nu) = nonlinear_terms(s, &self.law, &self.params, self.vacuum)?;
        let (eq, eu) = self.lin(&s.q, &s.u)?;
        let (enq, enu) = self.lin(&nq, &nu)?;
        let a = FluidState { q: eq.lin_comb(1.0, &enq, dt)?, u: eu.lin_comb(1.0, &enu, dt)?, t: s.t + dt };
        let (aq, au) = nonlinear_terms(&a, &self.law, &self.params, self.vacuum)?;
        let q = eq.lin_comb(1.0, &enq, 0.5 * dt)?.lin_comb(1.0, &aq, 0.5 * dt)?.truncate_to_band();
        let u = eu.lin_comb(1.0, &enu, 0.5 * dt)?.lin_comb(1.0, &au, 0.5 * dt)?.truncate_to_band();
        let out = FluidState { q, u, t: s.t + dt };
        let (n0, n1) = (s.norm(), out.norm());
        if !n1.is_finite() || (n0 > 0.0 && n1 > 10.0 * n0) {
            return Err(Error::Unstable(n1 / n0));
        }
        Ok(out)
    }

    /// Runs to `t_end` and records every `every`-th step.
    pub fn run(&self, s0: &FluidState, t_end: f64, every: usize) -> Result<(TimeSeriesField, TimeSeriesField)> {
        let steps = (t_end / self.dt).round() as usize;
        if steps == 0 || ((steps as f64) * self.dt - t_end).abs() > 1e-9 * t_end {
            return Err(Error::Domain(format!("T = {t_end} is not a positive multiple of dt = {}", self.dt)));
        }
        let every = every.max(1);
        let mut s = s0.clone();
        let (mut times, mut qs, mut us) = (vec![s.t], vec![s.q.clone()], vec![s.u.clone()]);
        for k in 1..=steps {
            s = self.step(&s)?;
            if k % every == 0 || k == steps {
                times.push(s.t);
                qs.push(s.q.clone());
                us.push(s.u.clone());
            }
        }
        Ok((TimeSeriesField::new(times.clone(), qs)?, TimeSeriesField::new(times, us)?))
    }
}

/// One step of either system from scratch.
pub fn step(state: &FluidState, dt: f64, model: CapillaryModel, params: &PhysicalParams, law: PressureLaw) -> Result<FluidState> {
    Stepper::new(state.grid(), params, law, model, dt)?.step(state)
}

/// `max_k |(e^{-eps^2 k^2} - 1)/eps^2 + k^2|` over integer `1 <= k <= kmax`.
pub fn symbol_gap(eps: f64, kmax: usize) -> f64 {
    (1..=kmax).map(|k| (capillary_symbol((k * k) as f64, eps) + (k * k) as f64).abs()).fold(0.0, f64::max)
}

pub const STUDY_COLUMNS: [&str; 3] = ["eps", "distance", "observed_order"];

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Rows `(eps, distance, order from the previous eps)`.
    pub table: ReportTable,
    pub order: f64,
    pub symbol_order: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StudySetup {
    pub t_end: f64,
    pub dt: f64,
    /// Regularity index of the energy norm.
    pub s: f64,
    /// Records every this many steps.
    pub every: usize,
    pub gamma: f64,
}

fn study_table(eps_list: &[f64], dist: &[f64]) -> (ReportTable, f64) {
    let mut table = ReportTable::new(&STUDY_COLUMNS);
    for (i, (e, d)) in eps_list.iter().zip(dist).enumerate() {
        let ord = if i == 0 { f64::NAN } else { (d / dist[i - 1]).ln() / (e / eps_list[i - 1]).ln() };
        table.push(vec![(*e).into(), (*d).into(), if i == 0 { crate::report::Cell::Empty } else { ord.into() }]);
    }
    (table, log_log_slope(eps_list, dist))
}

/// Runs the local system once and the nonlocal one per `eps`; the distance
/// is the energy norm of the difference of trajectories.
pub fn convergence_study(
    s0: &FluidState,
    params: &PhysicalParams,
    law: PressureLaw,
    eps_list: &[f64],
    setup: StudySetup,
) -> Result<ConvergenceReport> {
    if eps_list.len() < 2 {
        return Err(Error::Domain("need at least two eps values".into()));
    }
    let grid = s0.grid();
    let local = Stepper::new(grid, params, law, CapillaryModel::Local, setup.dt)?;
    let (qk, uk) = local.run(s0, setup.t_end, setup.every)?;
    let mut dist = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let nl = Stepper::new(grid, &params.with_epsilon(eps), law, CapillaryModel::Nonlocal { eps }, setup.dt)?;
        let (qe, ue) = nl.run(s0, setup.t_end, setup.every)?;
        dist.push(energy_norm_e(&qe.sub(&qk)?, &ue.sub(&uk)?, setup.s, eps, setup.gamma)?);
    }
    let (table, order) = study_table(eps_list, &dist);
    let kmax = grid.band_limit();
    let gaps: Vec<f64> = eps_list.iter().map(|e| symbol_gap(*e, kmax.min(2))).collect();
    Ok(ConvergenceReport { table, order, symbol_order: log_log_slope(eps_list, &gaps) })
}

/// Same study for the linear systems alone, exact in time: the distance is
/// `sup_t` of the `L^2` gap at `samples` equally spaced times.
pub fn linear_convergence(
    s0: &FluidState,
    params: &PhysicalParams,
    eps_list: &[f64],
    t_end: f64,
    samples: usize,
) -> Result<(ReportTable, f64)> {
    let grid = s0.grid();
    let mut dist = Vec::with_capacity(eps_list.len());
    let times: Vec<f64> = (1..=samples).map(|k| t_end * k as f64 / samples as f64).collect();
    let local: Vec<(SpectralField, SpectralField)> = times
        .iter()
        .map(|&t| FieldPropagator::new(grid, params, CapillaryModel::Local, t)?.apply(&s0.q, &s0.u))
        .collect::<Result<_>>()?;
    for &eps in eps_list {
        let mut d: f64 = 0.0;
        for (t, (ql, ul)) in times.iter().zip(&local) {
            let (q, u) = FieldPropagator::new(grid, params, CapillaryModel::Nonlocal { eps }, *t)?.apply(&s0.q, &s0.u)?;
            let g = (q.sub(ql)?.l2_norm().powi(2) + u.sub(ul)?.l2_norm().powi(2)).sqrt();
            d = d.max(g);
        }
        dist.push(d);
    }
    Ok(study_table(eps_list, &dist))
}
