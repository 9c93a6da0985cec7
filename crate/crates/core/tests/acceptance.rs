//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS/FAIL line.

use std::time::{Duration, Instant};

use korteweg::apriori::{apriori_check, AprioriSetup, ManufacturedCase};
use korteweg::lagrangian::{capillary_commutator_ii, integrate_flow, jacobian_det, AdvectingVelocity, FlowMap};
use korteweg::lp::{hybrid_norm, HybridForm};
use korteweg::nonlinear::{convergence_study, linear_convergence, symbol_gap, FluidState, PressureLaw, StudySetup};
use korteweg::propagator::{
    high_frequency_damping, mode_symbol, velocity_identity_check, verify_pointwise_bounds, verify_time_estimates, Regime,
};
use korteweg::report::log_log_slope;
use korteweg::spectral::{random_field, PeriodicGrid, SpectralField};
use korteweg::thresholds::{detect_eps0, gammas, solve_a, solve_x_eps, PhysicalParams, ThresholdReport, DEFAULT_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, ok: bool, detail: &str, elapsed: Duration, limit: Duration) {
    let within = elapsed <= limit;
    let pass = ok && within;
    println!(
        "{} criterion {n:>2} {name}: {detail} [{:.2}s / {}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
    assert!(within, "criterion {n} ({name}) exceeded its runtime budget");
}

fn pr(p: f64, nu: f64, kappa: f64, eps: f64) -> PhysicalParams {
    PhysicalParams::from_nu(p, nu, kappa, eps).unwrap()
}

#[test]
fn criterion_01_threshold_asymptotics() {
    let start = Instant::now();
    let x1 = solve_x_eps(&pr(1.0, 2.0, 0.5, 1e-3), DEFAULT_TOL).unwrap();
    let ok1 = (x1 / 2.0 - 1.0).abs() < 0.01;
    let x2 = solve_x_eps(&pr(1.0, 2.0, 1.0, 0.01), DEFAULT_TOL).unwrap();
    let ok2 = x2 > 141.4 && x2 < 155.6;
    // nu = 1, kappa = 1: M = 1/4
    let e = 1e-3;
    let x3 = solve_x_eps(&pr(1.0, 1.0, 1.0, e), DEFAULT_TOL).unwrap();
    let a = solve_a(0.25, 1e-14).unwrap();
    let ok3 = (e * e * x3 / a - 1.0).abs() < 0.01 && (a - 3.92).abs() < 0.01;
    verdict(
        1,
        "threshold asymptotics",
        ok1 && ok2 && ok3,
        &format!("x(1e-3)={x1:.6}, x(0.01)={x2:.3}, eps^2 x={:.5} vs a(1/4)={a:.5}", e * e * x3),
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_02_bracket_chain() {
    let start = Instant::now();
    let detect: Vec<f64> = (0..=40).map(|k| 10f64.powf(-4.0 + 4.0 * k as f64 / 40.0)).collect();
    let mut checked = 0;
    let mut bad = Vec::new();
    for &p in &[0.5, 1.0, 2.0] {
        for &nu in &[0.5, 1.0, 2.0] {
            for &k in &[0.25, 1.0, 4.0] {
                let base = pr(p, nu, k, 1.0);
                let Some(e0) = detect_eps0(&base, &detect).unwrap() else {
                    bad.push(format!("no eps0 for ({p},{nu},{k})"));
                    continue;
                };
                // a denser, offset sample below eps0
                for i in 0..60 {
                    let e = e0 * 10f64.powf(-4.0 * (i as f64 + 0.37) / 60.0);
                    let th = ThresholdReport::compute(&base.with_epsilon(e)).unwrap();
                    checked += 1;
                    if !th.chain_holds(e) {
                        bad.push(format!("({p},{nu},{k}) eps={e:.3e}"));
                    }
                }
            }
        }
    }
    verdict(
        2,
        "bracket chain below eps0",
        bad.is_empty(),
        &format!("{checked} samples, {} violations {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>()),
        start.elapsed(),
        Duration::from_secs(1),
    );
}

// Oracle: scaling-and-squaring Taylor exponential.
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
    let norm: f64 = a.iter().flatten().map(|v| (v * t).abs()).sum();
    let s = (norm.log2().ceil().max(0.0) as i32) + 4;
    let sc = t / 2f64.powi(s);
    let b = [[a[0][0] * sc, a[0][1] * sc], [a[1][0] * sc, a[1][1] * sc]];
    let mut term = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = term;
    for k in 1..25 {
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
fn criterion_03_04_propagator_exactness_and_velocity_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut worst_deg, mut worst_vel) = (0.0f64, 0.0f64, 0.0f64);
    let mut counts = [0usize; 3];
    for i in 0..200 {
        let p = pr(rng.random_range(0.3..3.0), rng.random_range(0.5..3.0), rng.random_range(0.2..2.0), rng.random_range(0.05..1.0));
        let x = solve_x_eps(&p, 1e-15).unwrap();
        let xi2 = match i % 4 {
            0 => x * rng.random_range(0.01..0.9),
            1 => x * 10f64.powf(rng.random_range(0.05..6.0)),
            2 => x * (1.0 + rng.random_range(-1e-9..1e-9)),
            _ => x * (1.0 + rng.random_range(-1e-3..1e-3)),
        };
        let sym = mode_symbol(xi2.sqrt(), &p).unwrap();
        // keep |lambda t| moderate so the oracle stays accurate
        let t = rng.random_range(0.0..3.0) / (p.nu() * xi2).max(1e-3);
        let a = sym.propagator(t);
        let e = expm(sym.matrix(), t);
        let scale = e.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (a[i][j] - e[i][j]).abs()).fold(0.0, f64::max) / scale;
        match sym.regime {
            Regime::Degenerate => {
                counts[1] += 1;
                worst_deg = worst_deg.max(err)
            }
            Regime::Oscillatory => {
                counts[0] += 1;
                worst = worst.max(err)
            }
            Regime::Real => {
                counts[2] += 1;
                // near the switch the real-regime formula is also checked at 1e-8
                if sym.g < 1e-6 {
                    worst_deg = worst_deg.max(err)
                } else {
                    worst = worst.max(err)
                }
                worst_vel = worst_vel.max(velocity_identity_check(&sym).unwrap());
            }
        }
    }
    let elapsed = start.elapsed();
    let ok3 = worst <= 1e-10 && worst_deg <= 1e-8 && counts.iter().all(|c| *c > 0);
    verdict(
        3,
        "propagator exactness",
        ok3,
        &format!("max err {worst:.2e}, near switch {worst_deg:.2e}, regimes osc/deg/real = {counts:?}"),
        elapsed,
        Duration::from_secs(5),
    );
    verdict(4, "velocity identity", worst_vel <= 1e-12, &format!("max residual {worst_vel:.2e}"), elapsed, Duration::from_secs(5));
}

#[test]
fn criterion_05_hybrid_norm_equivalence() {
    let start = Instant::now();
    let forms = HybridForm::ALL;
    let mut ok = true;
    let mut worst_width = (0.0, String::new());
    let mut worst_drift = (0.0, String::new());
    for dim in [1usize, 2] {
        let g = PeriodicGrid::standard(dim, if dim == 1 { 64 } else { 32 }).unwrap();
        // ratios[pair][eps] = (min, max)
        let mut ranges = vec![vec![(f64::INFINITY, 0.0f64); 3]; 6];
        for (ei, &eps) in [1.0, 0.1, 0.01].iter().enumerate() {
            for seed in 0..50u64 {
                let kmax = 1 + (seed as usize % (g.band_limit() - 1));
                let f = random_field(&g, 1, kmax, 0.5 + (seed % 3) as f64, seed).truncate_to_band();
                let v: Vec<f64> = forms.iter().map(|fm| hybrid_norm(&f, 0.5, eps, *fm).unwrap()).collect();
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
        let mut pi = 0;
        for a in 0..4 {
            for b in a + 1..4 {
                let lo = ranges[pi].iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
                let hi = ranges[pi].iter().map(|r| r.1).fold(0.0, f64::max);
                // how far the per-eps bracket endpoints move across eps
                let moved = |sel: fn(&(f64, f64)) -> f64| {
                    let v: Vec<f64> = ranges[pi].iter().map(sel).collect();
                    v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
                };
                let drift = moved(|r| r.0).max(moved(|r| r.1));
                ok &= lo.is_finite() && lo > 0.0;
                let label = format!("{dim}D {}/{}", forms[a].name(), forms[b].name());
                eprintln!("  {label}: bracket [{lo:.4}, {hi:.4}] width {:.2}, endpoint drift {drift:.2}", hi / lo);
                if hi / lo > worst_width.0 {
                    worst_width = (hi / lo, label.clone());
                }
                if drift > worst_drift.0 {
                    worst_drift = (drift, label);
                }
                pi += 1;
            }
        }
    }
    ok &= worst_width.0 <= 20.0 && worst_drift.0 <= 2.0;
    let detail = format!(
        "max bracket width {:.2} ({}), max endpoint drift across eps {:.2} ({})",
        worst_width.0, worst_width.1, worst_drift.0, worst_drift.1
    );
    verdict(5, "hybrid norm equivalence", ok, &detail, start.elapsed(), Duration::from_secs(30));
}

#[test]
fn criterion_06_estimate_verifiers() {
    let start = Instant::now();
    let t: Vec<f64> = std::iter::once(0.0).chain((0..60).map(|k| 1e-6 * 10f64.powf(k as f64 / 6.0))).collect();
    let mut pointwise = Vec::new();
    let mut timewise = Vec::new();
    let mut damping_ok = true;
    let mut damping = String::new();
    for eps in [1.0, 0.1, 0.01] {
        let p = pr(1.0, 2.0, 1.0, eps);
        pointwise.extend(verify_pointwise_bounds(&p, (-6, 10), &t).unwrap().values("fitted_C"));
        let tab = verify_time_estimates(&p, (-6, 10)).unwrap();
        timewise.extend(tab.values("fitted_C"));
        let th = ThresholdReport::compute(&p).unwrap();
        let (rate, env) = high_frequency_damping(&p, (100.0 * th.y_eps).sqrt()).unwrap();
        let (g1, _) = gammas(th.m).unwrap();
        let upper = env * (1.0 + p.p * eps * eps / p.kappa) / (1.0 - (-g1).exp());
        damping_ok &= rate >= env && rate <= upper;
        damping.push_str(&format!("eps={eps}: rate {rate:.4e} in [{env:.4e}, {upper:.4e}]; "));
    }
    let spread = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    let finite = pointwise.iter().chain(&timewise).all(|c| c.is_finite() && *c > 0.0);
    let (sp, st) = (spread(&pointwise), spread(&timewise));
    verdict(
        6,
        "estimate verifiers",
        finite && sp <= 5.0 && st <= 5.0 && damping_ok,
        &format!("pointwise spread {sp:.2}, time-integrated spread {st:.2}; {damping}"),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_07_jacobian_identity() {
    let start = Instant::now();
    let g = PeriodicGrid::standard(2, 16).unwrap();
    let random = AdvectingVelocity::from_field(&random_field(&g, 2, 3, 1.0, 17).scale(0.3)).unwrap().with_time_slope(0.5);
    let flows = [
        ("constant", AdvectingVelocity::constant(2, [0.4, -0.3])),
        ("shear", AdvectingVelocity::sine_shear(2, 0.5)),
        ("rotation", AdvectingVelocity::rotation(0.7)),
        ("random", random),
    ];
    let mut worst = 0.0f64;
    let mut ok = true;
    for (name, v) in &flows {
        let fl = integrate_flow(v, &g, 0.5, 32).unwrap();
        match jacobian_det(&fl, v) {
            Ok((fd, ex)) => {
                let gap = fd.iter().zip(&ex).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
                worst = worst.max(gap);
            }
            Err(e) => {
                ok = false;
                println!("{name}: {e}");
            }
        }
    }
    verdict(7, "Jacobian identity", ok && worst <= 1e-6, &format!("max gap {worst:.2e}"), start.elapsed(), Duration::from_secs(10));
}

fn sum_rho(f: &SpectralField, flow: &FlowMap, eps: f64, sigma: f64) -> f64 {
    let table = korteweg::lagrangian::verify_commutator_bound(f, sigma, eps, &[("shear".into(), flow.clone())]).unwrap();
    table.values("sum_rho")[0]
}

#[test]
fn criterion_08_commutator() {
    let start = Instant::now();
    let mut detail = String::new();
    // rigid flows
    let mut rigid: f64 = 0.0;
    for n in [64usize, 128] {
        let g = PeriodicGrid::standard(1, n).unwrap();
        let f = random_field(&g, 1, n / 4, 1.0, 3);
        for v in [AdvectingVelocity::zero(1), AdvectingVelocity::constant(1, [0.9, 0.0])] {
            let fl = integrate_flow(&v, &g, 1.0, 4).unwrap();
            for j in -2..6 {
                rigid = rigid.max(capillary_commutator_ii(&f, j, &fl, 0.3).unwrap().l2_norm());
            }
        }
    }
    let ok_rigid = rigid <= 1e-8;
    detail.push_str(&format!("rigid max {rigid:.1e}; "));

    // shear: smallness by halving t, then the sum of normalized ratios
    let sigma = 0.0;
    let mut sums = Vec::new();
    let mut all_small = true;
    for n in [64usize, 128] {
        let g = PeriodicGrid::standard(1, n).unwrap();
        let f = random_field(&g, 1, 16, 1.0, 5).truncate_to_band();
        let v = AdvectingVelocity::sine_shear(1, 0.5);
        let mut t = 0.5;
        let mut fl = integrate_flow(&v, &g, t, 20).unwrap();
        while !fl.small_enough() {
            t /= 2.0;
            fl = integrate_flow(&v, &g, t, 20).unwrap();
        }
        all_small &= fl.small_enough();
        for eps in [1.0, 0.3, 0.1] {
            sums.push(sum_rho(&f, &fl, eps, sigma));
        }
    }
    let spread = sums.iter().cloned().fold(0.0, f64::max) / sums.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok_sum = sums.iter().all(|s| s.is_finite() && *s > 0.0) && spread <= 5.0 && all_small;
    detail.push_str(&format!("sum_rho {:?} spread {spread:.2}; ", sums.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()));

    // linear scaling in V as t -> 0
    let g = PeriodicGrid::standard(1, 64).unwrap();
    let f = random_field(&g, 1, 16, 1.0, 9);
    let v = AdvectingVelocity::sine_shear(1, 0.5);
    let ts = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let (mut vs, mut ns) = (vec![], vec![]);
    for &t in &ts {
        let fl = integrate_flow(&v, &g, t, 10).unwrap();
        vs.push(fl.v_integral);
        ns.push((-2..6).map(|j| capillary_commutator_ii(&f, j, &fl, 0.3).unwrap().l2_norm()).fold(0.0, f64::max));
    }
    let slope = log_log_slope(&vs, &ns);
    let ok_slope = (slope - 1.0).abs() <= 0.2;
    detail.push_str(&format!("log-slope in V {slope:.3}"));
    verdict(8, "capillary commutator", ok_rigid && ok_sum && ok_slope, &detail, start.elapsed(), Duration::from_secs(120));
}

fn smooth_state(g: &PeriodicGrid, amp: f64, seed: u64) -> FluidState {
    let q = random_field(g, 1, 4, 2.0, seed).remove_mean();
    let q = q.scale(amp / q.linf_norm());
    let u = random_field(g, g.dim(), 4, 2.0, seed + 1).remove_mean();
    let u = u.scale(amp / u.linf_norm());
    FluidState::new(q, u).unwrap()
}

#[test]
fn criterion_09_linear_eps_convergence() {
    let start = Instant::now();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let gaps: Vec<f64> = eps.iter().map(|e| symbol_gap(*e, 2)).collect();
    let sym = log_log_slope(&eps, &gaps);
    let g = PeriodicGrid::standard(1, 64).unwrap();
    let p = PhysicalParams::new(0.5, 0.0, 1.0, 1.0, 0.1).unwrap();
    let (_, traj) = linear_convergence(&smooth_state(&g, 1.0, 4), &p, &eps, 1.0, 20).unwrap();
    verdict(
        9,
        "linear eps-convergence",
        (sym - 2.0).abs() <= 0.05 && traj >= 1.9,
        &format!("symbol gap order {sym:.4}, trajectory order {traj:.4}"),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_10_nonlinear_convergence() {
    let start = Instant::now();
    let g = PeriodicGrid::standard(1, 64).unwrap();
    let p = PhysicalParams::new(0.5, 0.0, 1.0, 1.0, 0.1).unwrap();
    let law = PressureLaw::new(1.0, 2.0).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let setup = StudySetup { t_end: 1.0, dt: 1e-3, s: -0.5, every: 10, gamma: 1.0 };
    let rep = convergence_study(&smooth_state(&g, 1e-2, 8), &p, law, &eps, setup).unwrap();
    let d = rep.table.values("distance");
    let monotone = d.windows(2).all(|w| w[1] < w[0]);
    verdict(
        10,
        "nonlinear convergence (1D consistency)",
        monotone && rep.order >= 0.9,
        &format!("distances {:?}, order {:.3}", d.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(), rep.order),
        start.elapsed(),
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_11_apriori_inequality() {
    let start = Instant::now();
    let g = PeriodicGrid::standard(1, 64).unwrap();
    let suite = ManufacturedCase::standard_suite(&g, 1.0, 0.05, 11);
    let setup = AprioriSetup {
        base: PhysicalParams::new(0.5, 0.0, 0.5, 1.0, 0.1).unwrap(),
        eps: vec![1.0, 0.1, 0.01],
        nu: vec![0.5, 1.0, 2.0],
        kappa: vec![0.25, 0.5, 1.0],
        p: vec![0.5, 1.0, 2.0],
        s: 1.0,
        t_end: 1.0,
        dt: 2e-3,
    };
    let rep = apriori_check(&setup, &suite).unwrap();
    let spread = rep.spread();
    let eps_fit = &rep.fitted[..3];
    let eps_spread = eps_fit.iter().cloned().fold(0.0, f64::max) / eps_fit.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = rep.fitted.iter().all(|c| c.is_finite() && *c > 0.0) && spread <= 5.0 && eps_spread <= 5.0;
    verdict(
        11,
        "a priori inequality",
        ok,
        &format!(
            "fitted C {:?}, sweep spread {spread:.2}, eps spread {eps_spread:.2}",
            rep.fitted.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>()
        ),
        start.elapsed(),
        Duration::from_secs(300),
    );
}
