//! Browser bindings: threshold and eigenvalue curves, a single-mode
//! trajectory, and hybrid-norm block weights. Each export returns JSON.

use korteweg::lp::HybridSpec;
use korteweg::propagator::{evolve_mode, mode_symbol, ModeState, Regime};
use korteweg::spectral::capillary_symbol;
use korteweg::thresholds::{g_eps, ThresholdReport};
use korteweg::{Complex64, PhysicalParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ThresholdCurve {
    /// `|xi|^2` samples, log-spaced across both thresholds.
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub re_plus: Vec<f64>,
    pub re_minus: Vec<f64>,
    pub im: Vec<f64>,
    pub x_eps: f64,
    pub y_eps: f64,
    pub gamma1_over_eps2: f64,
    pub gamma2_over_eps2: f64,
    pub m_ratio: f64,
}

pub fn threshold_curve(params: &PhysicalParams, n: usize) -> korteweg::Result<ThresholdCurve> {
    let th = ThresholdReport::compute(params)?;
    let e2 = params.epsilon * params.epsilon;
    let lo = (th.x_eps * 1e-2).log10();
    let hi = (th.y_eps.max(th.gamma2 / e2) * 1e2).log10();
    let n = n.max(2);
    let mut out = ThresholdCurve {
        x: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        re_plus: Vec::with_capacity(n),
        re_minus: Vec::with_capacity(n),
        im: Vec::with_capacity(n),
        x_eps: th.x_eps,
        y_eps: th.y_eps,
        gamma1_over_eps2: th.gamma1 / e2,
        gamma2_over_eps2: th.gamma2 / e2,
        m_ratio: params.m_ratio(),
    };
    for k in 0..n {
        let x = 10f64.powf(lo + (hi - lo) * k as f64 / (n - 1) as f64);
        let sym = mode_symbol(x.sqrt(), params)?;
        out.x.push(x);
        out.g.push(g_eps(x, params)?);
        out.re_plus.push(sym.lambda_plus.re);
        out.re_minus.push(sym.lambda_minus.re);
        out.im.push(sym.lambda_minus.im.abs());
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct ModeTrace {
    pub xi: f64,
    pub regime: String,
    pub lambda_plus: [f64; 2],
    pub lambda_minus: [f64; 2],
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

/// Real-valued trajectory from `(q, v) = (q0, v0)` at one frequency.
pub fn mode_trace(params: &PhysicalParams, xi: f64, q0: f64, v0: f64, t_max: f64, n: usize) -> korteweg::Result<ModeTrace> {
    let sym = mode_symbol(xi, params)?;
    let s0 = ModeState { q_hat: Complex64::new(q0, 0.0), v_hat: Complex64::new(v0, 0.0), w_hat: vec![] };
    let n = n.max(2);
    let mut tr = ModeTrace {
        xi,
        regime: match sym.regime {
            Regime::Oscillatory => "oscillatory",
            Regime::Degenerate => "degenerate",
            Regime::Real => "real",
        }
        .into(),
        lambda_plus: [sym.lambda_plus.re, sym.lambda_plus.im],
        lambda_minus: [sym.lambda_minus.re, sym.lambda_minus.im],
        t: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
    };
    for k in 0..n {
        let t = t_max * k as f64 / (n - 1) as f64;
        let s = evolve_mode(&s0, &sym, t)?;
        tr.t.push(t);
        tr.q.push(s.q_hat.re);
        tr.v.push(s.v_hat.re);
    }
    Ok(tr)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct BlockWeight {
    pub j: i32,
    /// Index form with the cut at `l_eps`.
    pub index: f64,
    /// `min(1/eps^2, 2^{2j}) 2^{js}`.
    pub minform: f64,
    /// `|L_eps|` at `|xi| = 2^j`, times `2^{js}`.
    pub multiplier: f64,
    pub l_eps: i32,
}

pub fn hybrid_weights(eps: f64, s: f64, j_min: i32, j_max: i32, gamma: f64) -> korteweg::Result<Vec<BlockWeight>> {
    let spec = HybridSpec::new(s + 2.0, s, eps, gamma)?;
    Ok((j_min..=j_max)
        .map(|j| {
            let p = 2f64.powi(j);
            BlockWeight {
                j,
                index: spec.weight(j),
                minform: (1.0 / (eps * eps)).min(p * p) * p.powf(s),
                multiplier: capillary_symbol(p * p, eps).abs() * p.powf(s),
                l_eps: spec.l_eps(),
            }
        })
        .collect())
}

fn params(mu: f64, lambda: f64, kappa: f64, p: f64, eps: f64) -> Result<PhysicalParams, JsError> {
    PhysicalParams::new(mu, lambda, kappa, p, eps).map_err(|e| JsError::new(&e.to_string()))
}

fn json<T: Serialize>(r: korteweg::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = thresholdCurve)]
pub fn threshold_curve_js(mu: f64, lambda: f64, kappa: f64, p: f64, eps: f64, n: usize) -> Result<String, JsError> {
    json(threshold_curve(&params(mu, lambda, kappa, p, eps)?, n))
}

#[wasm_bindgen(js_name = modeTrace)]
#[allow(clippy::too_many_arguments)]
pub fn mode_trace_js(
    mu: f64,
    lambda: f64,
    kappa: f64,
    p: f64,
    eps: f64,
    xi: f64,
    q0: f64,
    v0: f64,
    t_max: f64,
    n: usize,
) -> Result<String, JsError> {
    json(mode_trace(&params(mu, lambda, kappa, p, eps)?, xi, q0, v0, t_max, n))
}

#[wasm_bindgen(js_name = hybridWeights)]
pub fn hybrid_weights_js(eps: f64, s: f64, j_min: i32, j_max: i32, gamma: f64) -> Result<String, JsError> {
    json(hybrid_weights(eps, s, j_min, j_max, gamma))
}
