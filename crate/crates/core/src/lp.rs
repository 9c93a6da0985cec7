//! Littlewood-Paley blocks and the norms built on them.
//!
//! The mean (`xi = 0`) belongs to no block; `S_l = chi(2^{-l} D)` keeps it.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, trapezoid};
use crate::spectral::{capillary_symbol, PeriodicGrid, SpectralField};

/// Inner radius of the dyadic annulus.
pub const C0_IN: f64 = 0.75;
/// Outer radius of the dyadic annulus.
pub const C0_OUT: f64 = 8.0 / 3.0;
const CHI_FLAT: f64 = 0.75;
const CHI_ZERO: f64 = 4.0 / 3.0;

fn bump_tail(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Smooth radial cutoff: 1 on `r <= 3/4`, 0 on `r >= 4/3`, nonincreasing.
pub fn chi(r: f64) -> f64 {
    if r <= CHI_FLAT {
        return 1.0;
    }
    if r >= CHI_ZERO {
        return 0.0;
    }
    let t = (r - CHI_FLAT) / (CHI_ZERO - CHI_FLAT);
    let a = bump_tail(1.0 - t);
    a / (a + bump_tail(t))
}

/// `phi(r) = chi(r/2) - chi(r)`, supported in `[3/4, 8/3]`.
pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

fn pow2(j: i32) -> f64 {
    2f64.powi(j)
}

/// Block range covering every nonzero wavevector of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicPartition {
    pub j_min: i32,
    pub j_max: i32,
}

impl DyadicPartition {
    pub fn for_grid(grid: &PeriodicGrid) -> Self {
        let xi_min = grid.fundamental();
        let xi_max = grid.fundamental() * (grid.n() / 2) as f64 * (grid.dim() as f64).sqrt();
        let j_min = (0.75 * xi_min).log2().floor() as i32 - 1;
        let j_max = (xi_max / 1.5).log2().ceil() as i32;
        DyadicPartition { j_min, j_max }
    }

    pub fn blocks(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    pub fn count(&self) -> usize {
        (self.j_max - self.j_min + 1) as usize
    }
}

/// `Delta_j f`.
pub fn dyadic_block(f: &SpectralField, j: i32) -> SpectralField {
    let s = pow2(-j);
    f.apply_real_multiplier(|xi| phi(s * norm(xi))).expect("bounded symbol")
}

/// `S_l f = chi(2^{-l} D) f`, mean included.
pub fn low_pass(f: &SpectralField, l: i32) -> SpectralField {
    let s = pow2(-l);
    f.apply_real_multiplier(|xi| chi(s * norm(xi))).expect("bounded symbol")
}

fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-mode block membership, reused across many norm evaluations.
#[derive(Debug, Clone)]
pub struct BlockMap {
    pub partition: DyadicPartition,
    cell: f64,
    /// `(mode index, block offset, phi^2)`.
    entries: Vec<(usize, usize, f64)>,
}

impl BlockMap {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let partition = DyadicPartition::for_grid(grid);
        let mut entries = Vec::new();
        for idx in 1..grid.len() {
            let r = grid.xi_norm(idx);
            if r == 0.0 {
                continue;
            }
            let lo = (r / C0_OUT).log2().floor() as i32;
            for j in lo..=lo + 3 {
                if j < partition.j_min || j > partition.j_max {
                    continue;
                }
                let w = phi(r * pow2(-j));
                if w > 0.0 {
                    entries.push((idx, (j - partition.j_min) as usize, w * w));
                }
            }
        }
        BlockMap { partition, cell: grid.cell_volume(), entries }
    }

    /// `||Delta_j f||_{L2}` for every block, summed over components, with an
    /// optional extra real symbol applied per mode.
    pub fn norms_with(&self, f: &SpectralField, symbol_sq: impl Fn(usize) -> f64) -> Vec<f64> {
        let energy: Vec<f64> = (0..f.grid().len())
            .map(|i| f.coeffs().iter().map(|c| c[i].norm_sqr()).sum())
            .collect();
        self.norms_from_energy(&energy, symbol_sq)
    }

    /// Same as [`Self::norms_with`] from precomputed per-mode energies.
    pub fn norms_from_energy(&self, energy: &[f64], symbol_sq: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut acc = vec![0.0; self.partition.count()];
        for &(idx, b, w) in &self.entries {
            acc[b] += w * symbol_sq(idx) * energy[idx];
        }
        acc.iter().map(|a| (self.cell * a).sqrt()).collect()
    }

    pub fn norms(&self, f: &SpectralField) -> Vec<f64> {
        self.norms_with(f, |_| 1.0)
    }

    /// `sum_j weight(j) * norms[j]`, summed in increasing `j`.
    pub fn weighted_sum(&self, norms: &[f64], weight: impl Fn(i32) -> f64) -> f64 {
        norms.iter().enumerate().map(|(b, n)| weight(self.partition.j_min + b as i32) * n).sum()
    }
}

/// `||f||_{B^s_{p,r}}` for `p` in `{2, inf}` and `r >= 1` (possibly infinite).
pub fn besov_norm(f: &SpectralField, s: f64, p_idx: f64, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("summability index r must be >= 1, got {r}")));
    }
    let part = DyadicPartition::for_grid(f.grid());
    let norms: Vec<f64> = if p_idx == 2.0 {
        BlockMap::new(f.grid()).norms(f)
    } else if p_idx == f64::INFINITY {
        part.blocks().map(|j| dyadic_block(f, j).linf_norm()).collect()
    } else {
        return Err(Error::Domain(format!("unsupported Lebesgue index {p_idx}")));
    };
    let terms = norms.iter().enumerate().map(|(b, n)| pow2(part.j_min + b as i32).powf(s) * n);
    Ok(lr_sum(terms, r))
}

fn lr_sum(terms: impl Iterator<Item = f64>, r: f64) -> f64 {
    if r == f64::INFINITY {
        terms.fold(0.0, f64::max)
    } else if r == 1.0 {
        terms.sum()
    } else {
        terms.map(|t| t.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// Parameters of the two-regime norm `B_eps^{s,t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridSpec {
    pub s: f64,
    pub t: f64,
    pub eps: f64,
    pub gamma: f64,
}

impl HybridSpec {
    pub fn new(s: f64, t: f64, eps: f64, gamma: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
        }
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(HybridSpec { s, t, eps, gamma })
    }

    /// `floor(log2(gamma / (C0 eps^2)) / 2 - 1)`.
    pub fn l_eps(&self) -> i32 {
        (0.5 * (self.gamma / (C0_OUT * self.eps * self.eps)).log2() - 1.0).floor() as i32
    }

    /// Block weight: `2^{ls}` below `l_eps`, `2^{lt}/eps^2` above.
    pub fn weight(&self, l: i32) -> f64 {
        if l <= self.l_eps() {
            pow2(l).powf(self.s)
        } else {
            pow2(l).powf(self.t) / (self.eps * self.eps)
        }
    }

    pub fn norm(&self, f: &SpectralField) -> f64 {
        let bm = BlockMap::new(f.grid());
        bm.weighted_sum(&bm.norms(f), |l| self.weight(l))
    }
}

/// The four equivalent realizations of `B_eps^{s+2,s}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HybridForm {
    Index,
    Multiplier,
    MinForm,
    FdForm,
}

impl HybridForm {
    pub const ALL: [HybridForm; 4] = [HybridForm::Index, HybridForm::Multiplier, HybridForm::MinForm, HybridForm::FdForm];

    pub fn name(&self) -> &'static str {
        match self {
            HybridForm::Index => "index",
            HybridForm::Multiplier => "multiplier",
            HybridForm::MinForm => "minform",
            HybridForm::FdForm => "fdform",
        }
    }
}

/// Quadrature for the finite-difference form: `nodes` Gauss-Legendre
/// points per axis on `[-radius, radius]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdQuadrature {
    pub nodes: usize,
    pub radius: f64,
}

impl FdQuadrature {
    pub fn default_for(dim: usize) -> Self {
        FdQuadrature { nodes: if dim == 1 { 64 } else { 32 }, radius: 12.0 }
    }
}

pub fn hybrid_norm(f: &SpectralField, s: f64, eps: f64, form: HybridForm) -> Result<f64> {
    hybrid_norm_with(f, s, eps, form, 1.0, FdQuadrature::default_for(f.grid().dim()))
}

pub fn hybrid_norm_with(
    f: &SpectralField,
    s: f64,
    eps: f64,
    form: HybridForm,
    gamma: f64,
    quad: FdQuadrature,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    let grid = f.grid();
    let bm = BlockMap::new(grid);
    let e2 = eps * eps;
    let ws = |l: i32| pow2(l).powf(s);
    Ok(match form {
        HybridForm::Index => HybridSpec::new(s + 2.0, s, eps, gamma)?.norm(f),
        HybridForm::Multiplier => {
            let n = bm.norms_with(f, |i| capillary_symbol(grid.xi_norm(i).powi(2), eps).powi(2));
            bm.weighted_sum(&n, ws)
        }
        HybridForm::MinForm => {
            let n = bm.norms(f);
            bm.weighted_sum(&n, |l| (1.0 / e2).min(pow2(2 * l)) * ws(l))
        }
        HybridForm::FdForm => {
            let energy: Vec<f64> =
                (0..grid.len()).map(|i| f.coeffs().iter().map(|c| c[i].norm_sqr()).sum()).collect();
            let xis: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.xi(i)).collect();
            let (y, w) = gauss_legendre(quad.nodes, -quad.radius, quad.radius);
            let mut total = 0.0;
            let mut eval = |yv: [f64; 2], wt: f64| {
                let n = bm.norms_from_energy(&energy, |i| {
                    let d = xis[i][0] * yv[0] + xis[i][1] * yv[1];
                    (2.0 * ((eps * d).cos() - 1.0)).powi(2)
                });
                let r2 = yv[0] * yv[0] + yv[1] * yv[1];
                total += wt * (-r2 / 16.0).exp() * bm.weighted_sum(&n, ws);
            };
            if grid.dim() == 1 {
                for (yi, wi) in y.iter().zip(&w) {
                    eval([*yi, 0.0], *wi);
                }
            } else {
                for (ya, wa) in y.iter().zip(&w) {
                    for (yb, wb) in y.iter().zip(&w) {
                        eval([*ya, *yb], wa * wb);
                    }
                }
            }
            total / e2
        }
    })
}

/// `sum_l 2^{ls} max(alpha, 2^{-l})^{1 - 2/r} ||Delta_l f||`.
pub fn tilde_b_norm(f: &SpectralField, alpha: f64, s: f64, r: f64) -> Result<f64> {
    if r == 0.0 || r.is_nan() {
        return Err(Error::Domain("r must be nonzero".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    let bm = BlockMap::new(f.grid());
    let e = 1.0 - 2.0 / r;
    Ok(bm.weighted_sum(&bm.norms(f), |l| pow2(l).powf(s) * alpha.max(pow2(-l)).powf(e)))
}

/// Fields sampled at increasing times on one grid.
#[derive(Debug, Clone)]
pub struct TimeSeriesField {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
}

impl TimeSeriesField {
    pub fn new(times: Vec<f64>, fields: Vec<SpectralField>) -> Result<Self> {
        if times.len() != fields.len() || times.is_empty() {
            return Err(Error::Shape { expected: times.len(), got: fields.len() });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        let g = fields[0].grid();
        if fields.iter().any(|f| f.grid() != g) {
            return Err(Error::GridMismatch);
        }
        Ok(TimeSeriesField { times, fields })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.fields[0].grid()
    }

    /// Block norms, indexed `[time][block]`.
    pub fn block_norms(&self, bm: &BlockMap) -> Vec<Vec<f64>> {
        self.fields.iter().map(|f| bm.norms(f)).collect()
    }

    pub fn sub(&self, o: &TimeSeriesField) -> Result<TimeSeriesField> {
        if self.times != o.times {
            return Err(Error::Domain("mismatched time axes".into()));
        }
        let fields = self.fields.iter().zip(&o.fields).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        Ok(TimeSeriesField { times: self.times.clone(), fields })
    }
}

/// Time norm per block, then weighted sum over blocks.
pub fn chemin_lerner_from_blocks(
    times: &[f64],
    blocks: &[Vec<f64>],
    bm: &BlockMap,
    rho: f64,
    weight: impl Fn(i32) -> f64,
) -> Result<f64> {
    let nb = bm.partition.count();
    let mut per_block = vec![0.0; nb];
    for (b, pb) in per_block.iter_mut().enumerate() {
        let series: Vec<f64> = blocks.iter().map(|row| row[b]).collect();
        *pb = if rho == f64::INFINITY {
            series.iter().cloned().fold(0.0, f64::max)
        } else if rho == 1.0 {
            trapezoid(times, &series)
        } else {
            return Err(Error::Domain(format!("time exponent must be 1 or inf, got {rho}")));
        };
    }
    Ok(bm.weighted_sum(&per_block, weight))
}

/// `||f||_{L~^rho_T B^s_{2,1}}`.
pub fn chemin_lerner_norm(traj: &TimeSeriesField, rho: f64, s: f64) -> Result<f64> {
    let bm = BlockMap::new(traj.grid());
    let blocks = traj.block_norms(&bm);
    chemin_lerner_from_blocks(&traj.times, &blocks, &bm, rho, |l| pow2(l).powf(s))
}

/// The energy norm `E_eps^s` of a `(q, u)` trajectory.
pub fn energy_norm_e(q: &TimeSeriesField, u: &TimeSeriesField, s: f64, eps: f64, gamma: f64) -> Result<f64> {
    if q.times != u.times {
        return Err(Error::Domain("mismatched time axes".into()));
    }
    let bm = BlockMap::new(q.grid());
    let qb = q.block_norms(&bm);
    let ub = u.block_norms(&bm);
    let t = &q.times;
    let w = |s: f64| move |l: i32| pow2(l).powf(s);
    let h1 = HybridSpec::new(s + 1.0, s, eps, gamma)?;
    let h2 = HybridSpec::new(s + 2.0, s, eps, gamma)?;
    Ok(chemin_lerner_from_blocks(t, &ub, &bm, f64::INFINITY, w(s - 1.0))?
        + chemin_lerner_from_blocks(t, &qb, &bm, f64::INFINITY, w(s - 1.0))?
        + chemin_lerner_from_blocks(t, &qb, &bm, f64::INFINITY, w(s))?
        + chemin_lerner_from_blocks(t, &ub, &bm, 1.0, w(s + 1.0))?
        + chemin_lerner_from_blocks(t, &qb, &bm, 1.0, |l| h1.weight(l))?
        + chemin_lerner_from_blocks(t, &qb, &bm, 1.0, |l| h2.weight(l))?)
}

fn guard(f: &SpectralField) -> Result<()> {
    let e = f.energy_above_band();
    if e > 1e-20 {
        return Err(Error::Aliasing(e));
    }
    Ok(())
}

/// The individual paraproduct terms `(l, S_{l-1} u * Delta_l v)`.
pub fn paraproduct_terms(u: &SpectralField, v: &SpectralField) -> Result<Vec<(i32, SpectralField)>> {
    guard(u)?;
    guard(v)?;
    let part = DyadicPartition::for_grid(u.grid());
    Ok(part
        .blocks()
        .map(|l| (l, SpectralField::product_truncated(&low_pass(u, l - 1), &dyadic_block(v, l))))
        .collect())
}

/// `uv = T_u v + T_v u + R(u, v)` for scalar `u, v`. The mean product
/// `mean(u) mean(v)` is carried by `R`.
pub fn bony_decompose(u: &SpectralField, v: &SpectralField) -> Result<(SpectralField, SpectralField, SpectralField)> {
    if u.ncomp() != 1 || v.ncomp() != 1 {
        return Err(Error::Shape { expected: 1, got: u.ncomp().max(v.ncomp()) });
    }
    let sum = |terms: Vec<(i32, SpectralField)>| {
        terms.into_iter().fold(SpectralField::zeros(u.grid(), 1), |a, (_, t)| a.add(&t).expect("same grid"))
    };
    let tuv = sum(paraproduct_terms(u, v)?);
    let tvu = sum(paraproduct_terms(v, u)?);
    let part = DyadicPartition::for_grid(u.grid());
    let ub: Vec<SpectralField> = part.blocks().map(|l| dyadic_block(u, l)).collect();
    let vb: Vec<SpectralField> = part.blocks().map(|l| dyadic_block(v, l)).collect();
    let nb = ub.len();
    let mut r = SpectralField::zeros(u.grid(), 1);
    for a in 0..nb {
        let lo = a.saturating_sub(1);
        let hi = (a + 1).min(nb - 1);
        let vsum = (lo..=hi).fold(SpectralField::zeros(u.grid(), 1), |acc, b| acc.add(&vb[b]).expect("same grid"));
        r = r.add(&SpectralField::product_truncated(&ub[a], &vsum))?;
    }
    let mut means = SpectralField::zeros(u.grid(), 1);
    means.coeffs_mut()[0][0] = u.coeffs()[0][0] * v.coeffs()[0][0] / (u.grid().len() as f64).sqrt();
    Ok((tuv, tvu, r.add(&means)?))
}

/// `S_{j-1} v . grad(Delta_j h) - Delta_j (v . grad h)`.
pub fn transport_commutator(v: &SpectralField, h: &SpectralField, j: i32) -> Result<SpectralField> {
    let d = v.grid().dim();
    if v.ncomp() != d || h.ncomp() != 1 {
        return Err(Error::Shape { expected: d, got: v.ncomp() });
    }
    guard(v)?;
    guard(h)?;
    let sv = low_pass(v, j - 1);
    let hj = dyadic_block(h, j);
    let mut a = SpectralField::zeros(v.grid(), 1);
    let mut b = SpectralField::zeros(v.grid(), 1);
    for k in 0..d {
        a = a.add(&SpectralField::product_truncated(&sv.component(k), &hj.partial(k)))?;
        b = b.add(&SpectralField::product_truncated(&v.component(k), &h.partial(k)))?;
    }
    a.sub(&dyadic_block(&b, j))
}
