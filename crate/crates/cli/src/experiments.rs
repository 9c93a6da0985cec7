//! One runner per experiment. Each returns its table plus the list of
//! failed assertions; hard numerical errors propagate.

use korteweg::apriori::{apriori_check, AprioriSetup, ManufacturedCase};
use korteweg::lagrangian::{integrate_flow, jacobian_det, verify_commutator_bound, AdvectingVelocity, FlowMap};
use korteweg::lp::{hybrid_norm_with, FdQuadrature, HybridForm};
use korteweg::nonlinear::{convergence_study, FluidState, PressureLaw, StudySetup};
use korteweg::propagator::{
    evolve_mode, mode_symbol, velocity_identity_check, verify_pointwise_bounds, verify_time_estimates, ModeState, Regime,
};
use korteweg::report::ReportTable;
use korteweg::spectral::{random_field, PeriodicGrid};
use korteweg::thresholds::{detect_eps0, ThresholdReport};
use korteweg::{Complex64, PhysicalParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, Experiment};

#[derive(Debug)]
pub struct Outcome {
    pub table: ReportTable,
    pub failures: Vec<String>,
}

pub fn run(exp: Experiment, cfg: &Config) -> korteweg::Result<Outcome> {
    let params = cfg.physical().expect("validated");
    let grid = cfg.periodic_grid().expect("validated");
    match exp {
        Experiment::Thresholds => thresholds(cfg, &params),
        Experiment::PropagatorVerify => propagator_verify(cfg, &params),
        Experiment::NormEquivalence => norm_equivalence(cfg, &grid),
        Experiment::FlowCommutator => flow_commutator(cfg, &grid),
        Experiment::Converge => converge(cfg, &params, &grid),
        Experiment::AprioriCheck => apriori(cfg, &params, &grid),
    }
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (n - 1) as f64)).collect()
}

pub const THRESHOLD_COLUMNS: [&str; 10] =
    ["eps", "x_eps", "y_eps", "gamma1", "gamma2", "m", "a_M", "asymptote", "eps2_x_eps", "chain_holds"];

fn thresholds(cfg: &Config, params: &PhysicalParams) -> korteweg::Result<Outcome> {
    let eps_list = cfg.eps_list.clone().unwrap_or_else(|| vec![1.0, 0.1, 0.01, 1e-3]);
    let eps0 = detect_eps0(params, &logspace(-4.0, 0.0, 41))?;
    let mut table = ReportTable::new(&THRESHOLD_COLUMNS);
    let mut failures = Vec::new();
    for &eps in &eps_list {
        let th = ThresholdReport::compute(&params.with_epsilon(eps))?;
        let chain = th.chain_holds(eps);
        table.push(vec![
            eps.into(),
            th.x_eps.into(),
            th.y_eps.into(),
            th.gamma1.into(),
            th.gamma2.into(),
            th.m.into(),
            th.a_m.into(),
            th.asymptote.into(),
            (eps * eps * th.x_eps).into(),
            chain.to_string().into(),
        ]);
        if !(th.x_eps < th.y_eps && th.gamma1 < th.gamma2 && th.m > 0.0 && th.m < 1.0) {
            failures.push(format!("threshold ordering violated at eps={eps}"));
        }
        if eps0.is_some_and(|e0| eps <= e0) && !chain {
            failures.push(format!("bracket chain fails at eps={eps} below eps0={}", eps0.unwrap()));
        }
    }
    Ok(Outcome { table, failures })
}

pub const MODE_COLUMNS: [&str; 6] = ["xi", "t", "regime", "discriminant", "energy_ratio", "velocity_residual"];

fn propagator_verify(cfg: &Config, params: &PhysicalParams) -> korteweg::Result<Outcome> {
    let [j0, j1] = cfg.j_range.unwrap_or([-6, 10]);
    let mut failures = Vec::new();
    match cfg.table.as_deref().unwrap_or("modes") {
        "modes" => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
            let mut table = ReportTable::new(&MODE_COLUMNS);
            for _ in 0..cfg.modes.unwrap_or(32) {
                let xi = 2f64.powf(rng.random_range(j0 as f64..=j1 as f64 + 1.0));
                let t = rng.random_range(0.0..3.0) / (params.nu() * xi * xi);
                let sym = mode_symbol(xi, params)?;
                let s0 = ModeState { q_hat: Complex64::new(1.0, 0.0), v_hat: Complex64::new(0.0, 0.5), w_hat: vec![] };
                let s1 = evolve_mode(&s0, &sym, t)?;
                let en = |s: &ModeState| sym.stiffness * s.q_hat.norm_sqr() + s.v_hat.norm_sqr();
                let ratio = en(&s1) / en(&s0);
                let residual = if sym.regime == Regime::Real { Some(velocity_identity_check(&sym)?) } else { None };
                if ratio > 1.0 + 1e-12 {
                    failures.push(format!("energy grew by {ratio} at xi={xi}, t={t}"));
                }
                if residual.is_some_and(|r| r > 1e-12) {
                    failures.push(format!("velocity identity residual {} at xi={xi}", residual.unwrap()));
                }
                table.push(vec![
                    xi.into(),
                    t.into(),
                    format!("{:?}", sym.regime).to_lowercase().into(),
                    sym.discriminant.into(),
                    ratio.into(),
                    residual.into(),
                ]);
            }
            Ok(Outcome { table, failures })
        }
        which => {
            let eps_list = cfg.eps_list.clone().unwrap_or_else(|| vec![1.0, 0.1, 0.01]);
            let t = cfg.t_samples.clone().unwrap_or_else(|| {
                std::iter::once(0.0).chain((0..60).map(|k| 1e-6 * 10f64.powf(k as f64 / 6.0))).collect()
            });
            let mut table: Option<ReportTable> = None;
            for &eps in &eps_list {
                let p = params.with_epsilon(eps);
                let part = if which == "pointwise" {
                    verify_pointwise_bounds(&p, (j0, j1), &t)?
                } else {
                    verify_time_estimates(&p, (j0, j1))?
                };
                match table.as_mut() {
                    Some(tb) => tb.rows.extend(part.rows),
                    None => table = Some(part),
                }
            }
            let table = table.expect("eps_list is non-empty");
            let c = table.values("fitted_C");
            if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                failures.push("non-finite fitted constant".into());
            } else if !c.is_empty() && spread(&c) > 5.0 {
                failures.push(format!("fitted constants vary by {:.3} > 5", spread(&c)));
            }
            Ok(Outcome { table, failures })
        }
    }
}

pub const NORM_COLUMNS: [&str; 7] = ["eps", "field", "kmax", "index", "multiplier", "minform", "fdform"];

fn norm_equivalence(cfg: &Config, grid: &PeriodicGrid) -> korteweg::Result<Outcome> {
    let eps_list = cfg.eps_list.clone().unwrap_or_else(|| vec![1.0, 0.1, 0.01]);
    let nfields = cfg.fields.unwrap_or(50);
    let s = cfg.s.unwrap_or(0.5);
    let gamma = cfg.norm_gamma.unwrap_or(1.0);
    let seed = cfg.seed.unwrap_or(0);
    let quad = FdQuadrature::default_for(grid.dim());
    let forms = HybridForm::ALL;
    let mut table = ReportTable::new(&NORM_COLUMNS);
    // ranges[pair][eps] = (min, max)
    let mut ranges = vec![vec![(f64::INFINITY, 0.0f64); eps_list.len()]; 6];
    for (ei, &eps) in eps_list.iter().enumerate() {
        for k in 0..nfields as u64 {
            let kmax = 1 + (k as usize % (grid.band_limit() - 1));
            let f = random_field(grid, 1, kmax, 0.5 + (k % 3) as f64, seed + k).truncate_to_band();
            let mut v = [0.0; 4];
            for (i, form) in forms.iter().enumerate() {
                v[i] = hybrid_norm_with(&f, s, eps, *form, gamma, quad)?;
            }
            table.push(vec![eps.into(), (k as i64).into(), (kmax as i64).into(), v[0].into(), v[1].into(), v[2].into(), v[3].into()]);
            let mut pi = 0;
            for a in 0..4 {
                for b in a + 1..4 {
                    let r = v[a] / v[b];
                    let e = &mut ranges[pi][ei];
                    e.0 = e.0.min(r);
                    e.1 = e.1.max(r);
                    pi += 1;
                }
            }
        }
    }
    let mut failures = Vec::new();
    if nfields > 0 {
        let mut pi = 0;
        for a in 0..4 {
            for b in a + 1..4 {
                let pair = format!("{}/{}", forms[a].name(), forms[b].name());
                let lo = ranges[pi].iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
                let hi = ranges[pi].iter().map(|r| r.1).fold(0.0, f64::max);
                if !(lo > 0.0 && hi.is_finite()) {
                    failures.push(format!("{pair}: degenerate ratio"));
                } else if hi / lo > 20.0 {
                    failures.push(format!("{pair}: bracket width {:.3} > 20", hi / lo));
                }
                let lows: Vec<f64> = ranges[pi].iter().map(|r| r.0).collect();
                let highs: Vec<f64> = ranges[pi].iter().map(|r| r.1).collect();
                let drift = spread(&lows).max(spread(&highs));
                if drift > 2.0 {
                    failures.push(format!("{pair}: bracket endpoints move by {drift:.3} > 2 across eps"));
                }
                pi += 1;
            }
        }
    }
    Ok(Outcome { table, failures })
}

fn velocity(name: &str, grid: &PeriodicGrid, seed: u64) -> korteweg::Result<AdvectingVelocity> {
    let d = grid.dim();
    Ok(match name {
        "identity" => AdvectingVelocity::zero(d),
        "constant" => AdvectingVelocity::constant(d, [0.4, if d == 2 { -0.3 } else { 0.0 }]),
        "shear" => AdvectingVelocity::sine_shear(d, 0.5),
        "rotation" => AdvectingVelocity::rotation(0.7),
        _ => AdvectingVelocity::from_field(&random_field(grid, d, 3, 1.0, seed + 7).scale(0.3))?,
    })
}

fn flow_commutator(cfg: &Config, grid: &PeriodicGrid) -> korteweg::Result<Outcome> {
    let eps_list = cfg.eps_list.clone().unwrap_or_else(|| vec![1.0, 0.3, 0.1]);
    let names = cfg.flows.clone().unwrap_or_else(|| ["identity", "constant", "shear", "random"].map(String::from).to_vec());
    let sigma = cfg.sigma.unwrap_or(0.0);
    let seed = cfg.seed.unwrap_or(0);
    let f = random_field(grid, 1, grid.band_limit() * 3 / 4, 1.0, seed).truncate_to_band();
    let mut table = ReportTable::new(&korteweg::lagrangian::COMMUTATOR_COLUMNS);
    let mut failures = Vec::new();
    for name in &names {
        let v = velocity(name, grid, seed)?;
        let rigid = name == "identity" || name == "constant";
        let mut t = cfg.t.unwrap_or(0.5);
        let mut flow: FlowMap = integrate_flow(&v, grid, t, 20)?;
        let mut halvings = 0;
        while !rigid && !flow.small_enough() && halvings < 30 {
            t /= 2.0;
            flow = integrate_flow(&v, grid, t, 20)?;
            halvings += 1;
        }
        if let Err(e) = jacobian_det(&flow, &v) {
            failures.push(format!("{name}: {e}"));
        }
        let mut sums = Vec::new();
        for &eps in &eps_list {
            let part = verify_commutator_bound(&f, sigma, eps, &[(name.clone(), flow.clone())])?;
            let max_ii = part.values("max_II")[0];
            sums.push(part.values("sum_rho")[0]);
            if rigid && max_ii > 1e-8 {
                failures.push(format!("{name}: commutator {max_ii:.3e} should vanish (eps={eps})"));
            }
            table.rows.extend(part.rows);
        }
        if !rigid {
            if sums.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                failures.push(format!("{name}: ratio sum not finite and positive"));
            } else if spread(&sums) > 5.0 {
                failures.push(format!("{name}: ratio sum varies by {:.3} > 5 across eps", spread(&sums)));
            }
        }
    }
    Ok(Outcome { table, failures })
}

fn smooth_state(grid: &PeriodicGrid, amp: f64, seed: u64) -> korteweg::Result<FluidState> {
    let q = random_field(grid, 1, 4, 2.0, seed).remove_mean();
    let q = q.scale(amp / q.linf_norm());
    let u = random_field(grid, grid.dim(), 4, 2.0, seed + 1).remove_mean();
    let u = u.scale(amp / u.linf_norm());
    FluidState::new(q, u)
}

fn converge(cfg: &Config, params: &PhysicalParams, grid: &PeriodicGrid) -> korteweg::Result<Outcome> {
    let eps_list = cfg.eps_list.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
    let law = PressureLaw::new(params.p, cfg.gamma.unwrap_or(2.0))?;
    let setup = StudySetup {
        t_end: cfg.t_end.unwrap_or(1.0),
        dt: cfg.dt.unwrap_or(1e-3),
        s: cfg.s.unwrap_or(-0.5),
        every: 10,
        gamma: cfg.norm_gamma.unwrap_or(1.0),
    };
    let s0 = smooth_state(grid, cfg.amplitude.unwrap_or(1e-2), cfg.seed.unwrap_or(8))?;
    let mut failures = Vec::new();
    if eps_list.len() < 2 {
        failures.push("need at least two eps values".into());
        return Ok(Outcome { table: ReportTable::new(&korteweg::nonlinear::STUDY_COLUMNS), failures });
    }
    let rep = convergence_study(&s0, params, law, &eps_list, setup)?;
    let mut order: Vec<(f64, f64)> = eps_list.iter().cloned().zip(rep.table.values("distance")).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    if order.windows(2).any(|w| w[1].1 >= w[0].1) {
        failures.push("distance does not decrease monotonically with eps".into());
    }
    if rep.order < 0.9 {
        failures.push(format!("observed order {:.3} < 0.9", rep.order));
    }
    Ok(Outcome { table: rep.table, failures })
}

fn apriori(cfg: &Config, params: &PhysicalParams, grid: &PeriodicGrid) -> korteweg::Result<Outcome> {
    let suite = ManufacturedCase::standard_suite(grid, cfg.amplitude.unwrap_or(1.0), cfg.v_amp.unwrap_or(0.05), cfg.seed.unwrap_or(11));
    let setup = AprioriSetup {
        base: *params,
        eps: cfg.eps_list.clone().unwrap_or_else(|| vec![1.0, 0.1, 0.01]),
        nu: cfg.nu_list.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
        kappa: cfg.kappa_list.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0]),
        p: cfg.p_list.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
        s: cfg.s.unwrap_or(1.0),
        t_end: cfg.t_end.unwrap_or(1.0),
        dt: cfg.dt.unwrap_or(2e-3),
    };
    let rep = apriori_check(&setup, &suite)?;
    let mut failures = Vec::new();
    if rep.fitted.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        failures.push("fitted constant not finite and positive".into());
    } else if rep.spread() > 5.0 {
        failures.push(format!("fitted constant varies by {:.3} > 5 across the sweep", rep.spread()));
    }
    Ok(Outcome { table: rep.table, failures })
}
