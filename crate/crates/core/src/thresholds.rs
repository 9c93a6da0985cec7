//! Physical parameters and the scalar threshold equations.
//!
//! Everything here reduces to monotone scalar root finding on
//! `h(x) = (1 - e^{-x}) / x` and
//! `g_eps(x) = 1 - 4p/(nu^2 x) - (4 kappa/nu^2) h(eps^2 x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for all bisections.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Bracket expansion range, as powers of two.
pub const BRACKET_LO_EXP: i32 = -40;
pub const BRACKET_HI_EXP: i32 = 80;
/// `|M - 1|` below this selects the critical asymptote.
pub const M_CRITICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub mu: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub p: f64,
    pub epsilon: f64,
}

impl PhysicalParams {
    /// Validated constructor.
    pub fn new(mu: f64, lambda: f64, kappa: f64, p: f64, epsilon: f64) -> Result<Self> {
        let out = PhysicalParams { mu, lambda, kappa, p, epsilon };
        out.validate()?;
        Ok(out)
    }

    /// Build from `(p, nu, kappa, eps)` with `mu = nu/2`, `lambda = 0`.
    pub fn from_nu(p: f64, nu: f64, kappa: f64, epsilon: f64) -> Result<Self> {
        Self::new(nu / 2.0, 0.0, kappa, p, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |field: &'static str, v: f64| -> Result<()> {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam { field, reason: format!("must be finite and > 0, got {v}") });
            }
            Ok(())
        };
        check("mu", self.mu)?;
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParam { field: "lambda", reason: "must be finite".into() });
        }
        check("nu", self.nu())?;
        check("kappa", self.kappa)?;
        check("p", self.p)?;
        check("epsilon", self.epsilon)?;
        Ok(())
    }

    pub fn nu(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }

    pub fn nu0(&self) -> f64 {
        self.nu().min(self.mu)
    }

    /// `M = nu^2 / (4 kappa)`.
    pub fn m_ratio(&self) -> f64 {
        let nu = self.nu();
        nu * nu / (4.0 * self.kappa)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        PhysicalParams { epsilon, ..*self }
    }
}

/// `h(x) = (1 - e^{-x}) / x`, `h(0) = 1`.
pub fn h(x: f64) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::Domain(format!("h requires x >= 0, got {x}")));
    }
    Ok(h_unchecked(x))
}

pub(crate) fn h_unchecked(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}

pub fn g_eps(x: f64, params: &PhysicalParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("g_eps requires x > 0, got {x}")));
    }
    Ok(g_eps_unchecked(x, params))
}

pub(crate) fn g_eps_unchecked(x: f64, pr: &PhysicalParams) -> f64 {
    let nu2 = pr.nu() * pr.nu();
    1.0 - 4.0 * pr.p / (nu2 * x) - 4.0 * pr.kappa / nu2 * h_unchecked(pr.epsilon * pr.epsilon * x)
}

/// Solve `f(x) = target` for increasing `f` on `(0, inf)`.
///
/// The bracket is grown from 1 by doubling/halving within
/// `[2^BRACKET_LO_EXP, 2^BRACKET_HI_EXP]`. Stops when the bracket width is
/// below `tol * max(1, x)`.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol must be > 0, got {tol}")));
    }
    let fail = Error::Bracket { lo_exp: BRACKET_LO_EXP, hi_exp: BRACKET_HI_EXP, target };
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    let lo_min = 2f64.powi(BRACKET_LO_EXP);
    let hi_max = 2f64.powi(BRACKET_HI_EXP);
    while f(lo) >= target {
        lo *= 0.5;
        if lo < lo_min {
            return Err(fail);
        }
    }
    while f(hi) < target {
        hi *= 2.0;
        if hi > hi_max {
            return Err(fail);
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverse of the decreasing `h` on `(0, 1)`.
pub fn h_inverse(level: f64, tol: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("h^-1 needs a level in (0,1), got {level}")));
    }
    bisect_increasing(|x| -h_unchecked(x), -level, tol)
}

/// Root of `g_eps`: the sign change of the discriminant.
pub fn solve_x_eps(params: &PhysicalParams, tol: f64) -> Result<f64> {
    bisect_increasing(|x| g_eps_unchecked(x, params), 0.0, tol)
}

/// Level used for `y_eps`.
pub fn y_level(m: f64) -> f64 {
    if m < 0.75 {
        0.25
    } else {
        1.0 - 1.0 / (2.0 * m)
    }
}

pub fn solve_y_eps(params: &PhysicalParams, tol: f64) -> Result<f64> {
    let level = y_level(params.m_ratio());
    bisect_increasing(|x| g_eps_unchecked(x, params), level, tol)
}

pub fn gammas(m: f64) -> Result<(f64, f64)> {
    if !(m > 0.0) {
        return Err(Error::Domain(format!("M must be > 0, got {m}")));
    }
    let (l1, l2) = if m >= 0.75 { (0.5, 0.25) } else { (0.75 * m, 0.5 * m) };
    Ok((h_inverse(l1, DEFAULT_TOL)?, h_inverse(l2, DEFAULT_TOL)?))
}

/// Positive root of `1 - h(x)/M`, defined for `0 < M < 1`.
pub fn solve_a(m: f64, tol: f64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::Domain(format!("a(M) needs 0 < M < 1, got {m}")));
    }
    h_inverse(m, tol)
}

/// Small-eps equivalent of `x_eps`.
pub fn x_eps_asymptote(params: &PhysicalParams) -> Result<f64> {
    let m = params.m_ratio();
    let nu2 = params.nu() * params.nu();
    let eps = params.epsilon;
    if (m - 1.0).abs() <= M_CRITICAL_TOL {
        Ok((2.0 * params.p / params.kappa).sqrt() / eps)
    } else if m > 1.0 {
        Ok(4.0 * params.p / (nu2 - 4.0 * params.kappa))
    } else {
        Ok(solve_a(m, DEFAULT_TOL)? / (eps * eps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub x_eps: f64,
    pub y_eps: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub m: f64,
    #[serde(rename = "a_M")]
    pub a_m: Option<f64>,
    pub asymptote: f64,
}

impl ThresholdReport {
    pub const COLUMNS: [&'static str; 7] = ["x_eps", "y_eps", "gamma1", "gamma2", "m", "a_M", "asymptote"];

    pub fn compute(params: &PhysicalParams) -> Result<Self> {
        params.validate()?;
        let mr = params.m_ratio();
        let x_eps = solve_x_eps(params, DEFAULT_TOL)?;
        let y_eps = solve_y_eps(params, DEFAULT_TOL)?;
        let (gamma1, gamma2) = gammas(mr)?;
        let m = y_level(mr).sqrt();
        let a_m = if mr < 1.0 { Some(solve_a(mr, DEFAULT_TOL)?) } else { None };
        Ok(ThresholdReport { x_eps, y_eps, gamma1, gamma2, m, a_m, asymptote: x_eps_asymptote(params)? })
    }

    /// Values in [`Self::COLUMNS`] order; a missing `a_M` is an empty cell.
    pub fn csv_row(&self) -> String {
        let a = self.a_m.map(|v| format!("{v:.15e}")).unwrap_or_default();
        format!(
            "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{},{:.15e}",
            self.x_eps, self.y_eps, self.gamma1, self.gamma2, self.m, a, self.asymptote
        )
    }

    /// `x_eps < gamma1/eps^2 <= y_eps <= gamma2/eps^2`.
    pub fn chain_holds(&self, eps: f64) -> bool {
        let e2 = eps * eps;
        self.x_eps < self.gamma1 / e2 && self.gamma1 / e2 <= self.y_eps && self.y_eps <= self.gamma2 / e2
    }
}

/// Largest sampled eps below which (inclusive) the bracket chain holds at
/// every sampled eps. `None` if it fails at the smallest sample.
pub fn detect_eps0(base: &PhysicalParams, eps_samples: &[f64]) -> Result<Option<f64>> {
    let mut eps: Vec<f64> = eps_samples.to_vec();
    eps.sort_by(|a, b| a.total_cmp(b));
    let mut found = None;
    for &e in &eps {
        let pr = base.with_epsilon(e);
        if ThresholdReport::compute(&pr)?.chain_holds(e) {
            found = Some(e);
        } else {
            break;
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pr(p: f64, nu: f64, kappa: f64, eps: f64) -> PhysicalParams {
        PhysicalParams::from_nu(p, nu, kappa, eps).unwrap()
    }

    // Independent oracle: plain Newton on h(x) = level using the analytic derivative.
    fn h_inv_newton(level: f64) -> f64 {
        let mut x = 1.0 / level;
        for _ in 0..100 {
            let e = (-x).exp();
            let hv = (1.0 - e) / x;
            let dh = (x * e - (1.0 - e)) / (x * x);
            x -= (hv - level) / dh;
        }
        x
    }

    #[test]
    fn h_values() {
        assert_eq!(h(0.0).unwrap(), 1.0);
        assert!((h(1.5936).unwrap() - 0.5).abs() < 1e-3);
        assert!((h(3.9207).unwrap() - 0.25).abs() < 1e-3);
        assert!(h(-1.0).is_err());
        // series branch meets the closed form
        let x = 1e-8;
        let y = x * 0.999;
        assert!((h_unchecked(y) + (-y).exp_m1() / y).abs() < 1e-15);
    }

    #[test]
    fn gamma_values_frozen() {
        // frozen from h_inv_newton
        let g1 = h_inv_newton(0.5);
        let g2 = h_inv_newton(0.25);
        assert!((g1 - 1.593_624_260_040_04).abs() < 1e-10, "{g1}");
        assert!((g2 - 3.920_690_394_872_886).abs() < 1e-10, "{g2}");
        let (a, b) = gammas(1.0).unwrap();
        assert!((a - g1).abs() < 1e-9 && (b - g2).abs() < 1e-9);
        let (a, b) = gammas(0.5).unwrap();
        assert!((a - h_inv_newton(0.375)).abs() < 1e-9);
        assert!((b - h_inv_newton(0.25)).abs() < 1e-9);
        assert!(a > solve_a(0.5, 1e-12).unwrap());
    }

    #[test]
    fn g_eps_examples() {
        let p = pr(1.0, 2.0, 0.5, 1e-3);
        assert!(g_eps(2.0, &p).unwrap().abs() < 1e-3);
        assert!(g_eps(0.0, &p).is_err());
        assert!(g_eps(1e-12, &p).unwrap() < -1e10);
        assert!((g_eps(1e15, &p).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn x_eps_examples() {
        let x = solve_x_eps(&pr(1.0, 2.0, 0.5, 1e-3), DEFAULT_TOL).unwrap();
        assert!((x - 2.0).abs() < 0.02 * 2.0, "{x}");
        let x = solve_x_eps(&pr(1.0, 2.0, 1.0, 0.01), DEFAULT_TOL).unwrap();
        let b = 2f64.sqrt();
        assert!(x > b * (1.0 + 1e-4) / 0.01 && x < b * (1.0 + 0.1) / 0.01, "{x}");
        // kappa = 0 bypasses validation on purpose: closed-form root 4p/nu^2
        let degenerate = PhysicalParams { mu: 1.0, lambda: 0.0, kappa: 0.0, p: 1.0, epsilon: 0.1 };
        let x = solve_x_eps(&degenerate, DEFAULT_TOL).unwrap();
        assert!((x - 1.0).abs() < 1e-11, "{x}");
    }

    #[test]
    fn x_eps_lower_bound_and_y() {
        for &(p, nu, k) in &[(1.0, 2.0, 0.5), (1.0, 1.0, 1.0), (2.0, 1.0, 0.3), (0.5, 3.0, 2.0)] {
            for &e in &[1.0, 0.1, 0.01] {
                let q = pr(p, nu, k, e);
                let x = solve_x_eps(&q, DEFAULT_TOL).unwrap();
                let y = solve_y_eps(&q, DEFAULT_TOL).unwrap();
                assert!(x > 4.0 * p / (nu * nu));
                assert!(y > x);
                let gx = g_eps(x, &q).unwrap();
                let slope = (g_eps(x * 1.001, &q).unwrap() - gx) / (0.001 * x);
                assert!(gx.abs() <= 10.0 * DEFAULT_TOL * x.max(1.0) * slope + 1e-14);
            }
        }
    }

    #[test]
    fn solve_a_examples() {
        let a = solve_a(0.5, 1e-12).unwrap();
        assert!((a - 1.5936).abs() < 1e-3 && a > 1.0 && a < 2.0);
        let a = solve_a(0.25, 1e-12).unwrap();
        assert!((a - 3.9207).abs() < 1e-3 && a > 3.0 && a < 4.0);
        assert!(solve_a(1.0 - 1e-6, 1e-14).unwrap() < 1e-4);
        assert!(solve_a(1.0, 1e-12).is_err());
    }

    #[test]
    fn asymptote_examples() {
        assert!((x_eps_asymptote(&pr(1.0, 2.0, 0.5, 0.1)).unwrap() - 2.0).abs() < 1e-12);
        let v = x_eps_asymptote(&pr(1.0, 2.0, 1.0, 0.01)).unwrap();
        assert!((v - 100.0 * 2f64.sqrt()).abs() < 1e-9);
        let v = x_eps_asymptote(&pr(1.0, 1.0, 1.0, 0.1)).unwrap();
        assert!((v - 392.07).abs() < 0.1, "{v}");
    }

    #[test]
    fn report_csv_and_json() {
        let r = ThresholdReport::compute(&pr(1.0, 1.0, 1.0, 0.1)).unwrap();
        assert_eq!(r.csv_row().split(',').count(), 7);
        let j = serde_json::to_value(r).unwrap();
        let keys: Vec<_> = j.as_object().unwrap().keys().cloned().collect();
        for c in ThresholdReport::COLUMNS {
            assert!(keys.contains(&c.to_string()));
        }
        let r = ThresholdReport::compute(&pr(1.0, 2.0, 0.5, 0.1)).unwrap();
        assert!(r.a_m.is_none());
        assert!(r.csv_row().contains(",,"));
        assert!(r.m > 0.0 && r.m < 1.0 && r.gamma1 < r.gamma2);
    }

    #[test]
    fn validation() {
        assert!(PhysicalParams::new(1.0, 0.0, -1.0, 1.0, 0.1).is_err());
        assert!(PhysicalParams::new(1.0, -3.0, 1.0, 1.0, 0.1).is_err());
        assert!(PhysicalParams::new(1.0, -1.0, 1.0, 1.0, 0.1).is_ok());
        let e = PhysicalParams::new(1.0, 0.0, 1.0, 0.0, 0.1).unwrap_err();
        assert!(matches!(e, Error::InvalidParam { field: "p", .. }));
    }

    proptest! {
        #[test]
        fn g_increasing_in_x(p in 0.1f64..5.0, nu in 0.2f64..5.0, k in 0.05f64..5.0, e in 1e-3f64..2.0,
                             x in 1e-3f64..1e6, f in 1.001f64..3.0) {
            let q = pr(p, nu, k, e);
            prop_assert!(g_eps(x * f, &q).unwrap() > g_eps(x, &q).unwrap());
        }

        #[test]
        fn g_increasing_in_eps(p in 0.1f64..5.0, nu in 0.2f64..5.0, k in 0.05f64..5.0, e in 1e-3f64..2.0,
                               x in 1e-2f64..1e5, f in 1.01f64..3.0) {
            let a = pr(p, nu, k, e);
            let b = pr(p, nu, k, e * f);
            prop_assert!(g_eps(x, &b).unwrap() > g_eps(x, &a).unwrap());
            prop_assert!(solve_x_eps(&b, DEFAULT_TOL).unwrap() < solve_x_eps(&a, DEFAULT_TOL).unwrap());
        }

        #[test]
        fn a_bracket(m in 0.01f64..0.99) {
            let a = solve_a(m, 1e-13).unwrap();
            prop_assert!(a > 1.0 / m - 1.0 && a <= (1.0 / m) * (1.0 + 1e-12));
        }

        #[test]
        fn h_decreasing(x in 0.0f64..50.0, d in 1e-3f64..5.0) {
            let a = h(x).unwrap();
            prop_assert!(a > h(x + d).unwrap() && a <= 1.0 && a > 0.0);
        }
    }
}
